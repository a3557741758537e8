//! Editing operations on decomposed compositions.
//!
//! Sprite indices are 0-based with the background at 0; errors report them
//! 1-based like [`Diagnostic`](crate::model::Diagnostic). Every operation
//! returns a new composition and validates it.

use crate::error::{Error, Result};
use crate::model::{validate, AffineParams, Composition, SpriteBounds, Texture};

/// A change layered on top of an existing sprite track.
#[derive(Clone, Debug, PartialEq)]
pub enum Modifier {
    /// Spin in place about the sprite's canvas center, `rate` radians per
    /// frame starting from 0 at the first frame. Positive is clockwise on
    /// screen (y points down).
    Rotation { rate: f32 },
    /// Per-frame factors in `[0, 1]` multiplying the existing opacity.
    OpacityCurve(Vec<f32>),
    /// Per-frame canvas motion: forward maps in normalized canvas
    /// coordinates applied after the existing placement.
    AffineCompose(Vec<AffineParams>),
}

fn check_index(c: &Composition, k: usize) -> Result<()> {
    if k >= c.sprites.len() {
        return Err(Error::SpriteIndex {
            index: k + 1,
            count: c.sprites.len(),
        });
    }
    Ok(())
}

fn validated(c: Composition) -> Result<Composition> {
    let d = validate(&c, SpriteBounds::ANY);
    if d.is_empty() {
        Ok(c)
    } else {
        Err(Error::Invalid(d))
    }
}

/// Deletes sprite `k`, keeping the order of the others.
pub fn remove_sprite(c: &Composition, k: usize) -> Result<Composition> {
    check_index(c, k)?;
    if k == 0 {
        return Err(Error::Background);
    }
    let mut out = c.clone();
    out.sprites.remove(k);
    validated(out)
}

/// Swaps the texture of sprite `k`; its track is kept as is.
pub fn replace_texture(c: &Composition, k: usize, texture: Texture) -> Result<Composition> {
    check_index(c, k)?;
    let mut out = c.clone();
    out.sprites[k].texture = texture;
    validated(out)
}

/// Canvas-side rotation by `angle` about `center`, as a forward map in
/// normalized coordinates. Rotation happens in pixel units so that
/// non-square canvases do not shear the sprite.
fn rotation_about(center: (f64, f64), angle: f64, (w, h): (usize, usize)) -> AffineParams {
    let (sx, sy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (sin, cos) = angle.sin_cos();
    // S⁻¹ R S with S = diag(sx, sy)
    let m = [cos, -sin * sy / sx, sin * sx / sy, cos];
    let (cx, cy) = center;
    AffineParams(
        [
            m[0],
            m[1],
            cx - m[0] * cx - m[1] * cy,
            m[2],
            m[3],
            cy - m[2] * cx - m[3] * cy,
        ]
        .map(|v| v as f32),
    )
}

/// Applies `modifier` to sprite `k`.
pub fn insert_animation(c: &Composition, k: usize, modifier: &Modifier) -> Result<Composition> {
    check_index(c, k)?;
    let nt = c.num_frames();
    let mut out = c.clone();
    let track = &mut out.sprites[k].track.frames;
    match modifier {
        Modifier::Rotation { rate } => {
            if !rate.is_finite() {
                return Err(Error::Config(format!("rotation rate {rate} is not finite")));
            }
            for (t, e) in track.iter_mut().enumerate() {
                let angle = f64::from(*rate) * t as f64;
                if angle == 0.0 {
                    continue;
                }
                let forward = e.affine.inverse().ok_or_else(|| {
                    Error::Config(format!("sprite {} frame {}: singular affine", k + 1, t + 1))
                })?;
                let center = forward.apply(0.0, 0.0);
                let spin = rotation_about(center, -angle, (c.canvas_width, c.canvas_height));
                e.affine = e.affine.then_after(&spin);
            }
        }
        Modifier::OpacityCurve(curve) => {
            if curve.len() != nt {
                return Err(Error::Config(format!(
                    "opacity curve has {} frames, expected {nt}",
                    curve.len()
                )));
            }
            if let Some(v) = curve.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Config(format!("opacity factor {v} outside [0,1]")));
            }
            for (e, f) in track.iter_mut().zip(curve) {
                e.opacity *= f;
            }
        }
        Modifier::AffineCompose(maps) => {
            if maps.len() != nt {
                return Err(Error::Config(format!(
                    "affine sequence has {} frames, expected {nt}",
                    maps.len()
                )));
            }
            for (t, (e, m)) in track.iter_mut().zip(maps).enumerate() {
                let inv = m
                    .inverse()
                    .ok_or_else(|| Error::Config(format!("frame {}: singular motion", t + 1)))?;
                e.affine = e.affine.then_after(&inv);
            }
        }
    }
    validated(out)
}
