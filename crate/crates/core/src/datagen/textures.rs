//! Procedural sprite and background textures.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Texture;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextureKind {
    /// Solid anti-aliased ellipse or rounded rectangle.
    Shape,
    /// Two-stop linear gradient inside a shape.
    Gradient,
    /// Solid bars reminiscent of a line of text.
    Glyph,
}

const SUPERSAMPLE: usize = 4;

type Rgb = [f32; 3];

fn hsv(h: f32, s: f32, v: f32) -> Rgb {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    match (i as i32).rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn dist(a: Rgb, b: Rgb) -> f32 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f32>() / 3.0
}

/// Saturated colour at least `min_gap` (channel-mean L1) away from `avoid`.
pub(crate) fn vivid_color(rng: &mut ChaCha8Rng, avoid: Rgb, min_gap: f32) -> Rgb {
    let mut best = [0.0; 3];
    let mut best_gap = -1.0;
    for _ in 0..32 {
        let c = hsv(
            rng.random_range(0.0..1.0),
            rng.random_range(0.55..1.0),
            rng.random_range(0.55..1.0),
        );
        let gap = dist(c, avoid);
        if gap >= min_gap {
            return c;
        }
        if gap > best_gap {
            best_gap = gap;
            best = c;
        }
    }
    best
}

/// Coverage of `inside` over each texel, by regular supersampling. Points
/// are in `[-1, 1]²` texture coordinates.
fn coverage(size: usize, inside: impl Fn(f32, f32) -> bool) -> Vec<f32> {
    let mut out = vec![0.0; size * size];
    let n = SUPERSAMPLE;
    for y in 0..size {
        for x in 0..size {
            let mut hits = 0;
            for sy in 0..n {
                for sx in 0..n {
                    let px = (x as f32 + (sx as f32 + 0.5) / n as f32) / size as f32 * 2.0 - 1.0;
                    let py = (y as f32 + (sy as f32 + 0.5) / n as f32) / size as f32 * 2.0 - 1.0;
                    hits += usize::from(inside(px, py));
                }
            }
            out[y * size + x] = hits as f32 / (n * n) as f32;
        }
    }
    out
}

fn random_shape(rng: &mut ChaCha8Rng, size: usize) -> Vec<f32> {
    let rx = rng.random_range(0.7f32..0.92);
    let ry = rng.random_range(0.7f32..0.92);
    if rng.random_bool(0.5) {
        coverage(size, |x, y| (x / rx).powi(2) + (y / ry).powi(2) <= 1.0)
    } else {
        let r = rng.random_range(0.1f32..0.4);
        coverage(size, |x, y| {
            let qx = (x.abs() - (rx - r)).max(0.0);
            let qy = (y.abs() - (ry - r)).max(0.0);
            qx * qx + qy * qy <= r * r
        })
    }
}

fn glyph_alpha(rng: &mut ChaCha8Rng, size: usize) -> Vec<f32> {
    let lines = rng.random_range(2..=4);
    let top = -0.85f32;
    let pitch = 1.7 / lines as f32;
    let bars: Vec<(f32, f32, f32, f32)> = (0..lines)
        .flat_map(|i| {
            let y0 = top + pitch * i as f32 + pitch * 0.15;
            let y1 = y0 + pitch * 0.6;
            let words = rng.random_range(2..=3);
            let mut x = -0.88f32;
            (0..words)
                .map(|_| {
                    let w = rng.random_range(0.3f32..0.7);
                    let bar = (x, (x + w).min(0.88), y0, y1);
                    x += w + 0.12;
                    bar
                })
                .filter(|b| b.1 > b.0 + 0.05)
                .collect::<Vec<_>>()
        })
        .collect();
    coverage(size, |x, y| {
        bars.iter()
            .any(|&(x0, x1, y0, y1)| x >= x0 && x <= x1 && y >= y0 && y <= y1)
    })
}

/// Foreground texture with colours chosen to stand out from `backdrop`.
pub fn sprite_texture(
    rng: &mut ChaCha8Rng,
    kind: TextureKind,
    size: usize,
    backdrop: Rgb,
) -> Texture {
    let c0 = vivid_color(rng, backdrop, 0.3);
    let alpha = match kind {
        TextureKind::Glyph => glyph_alpha(rng, size),
        _ => random_shape(rng, size),
    };
    let (c1, angle) = match kind {
        TextureKind::Gradient => (
            vivid_color(rng, backdrop, 0.3),
            rng.random_range(0.0..std::f32::consts::TAU),
        ),
        _ => (c0, 0.0),
    };
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut rgba = Vec::with_capacity(size * size * 4);
    for y in 0..size {
        for x in 0..size {
            let px = (2 * x + 1) as f32 / size as f32 - 1.0;
            let py = (2 * y + 1) as f32 / size as f32 - 1.0;
            let t = ((px * ca + py * sa) * 0.5 + 0.5).clamp(0.0, 1.0);
            for c in 0..3 {
                rgba.push(c0[c] * (1.0 - t) + c1[c] * t);
            }
            rgba.push(alpha[y * size + x]);
        }
    }
    Texture::new(size, size, rgba).expect("square texture")
}

/// Opaque background: a gradient with a faint low-frequency pattern.
/// Returns the texture and its mean colour.
pub fn background_texture(rng: &mut ChaCha8Rng, width: usize, height: usize) -> (Texture, Rgb) {
    let c0 = hsv(
        rng.random_range(0.0..1.0),
        rng.random_range(0.1..0.5),
        rng.random_range(0.2..0.95),
    );
    let c1 = hsv(
        rng.random_range(0.0..1.0),
        rng.random_range(0.1..0.5),
        rng.random_range(0.2..0.95),
    );
    let angle = rng.random_range(0.0..std::f32::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());
    let textured = rng.random_bool(0.5);
    let (fx, fy) = (rng.random_range(1.0f32..3.0), rng.random_range(1.0f32..3.0));
    let phase = rng.random_range(0.0..std::f32::consts::TAU);
    let mut rgba = Vec::with_capacity(width * height * 4);
    let mut mean = [0.0f64; 3];
    for y in 0..height {
        for x in 0..width {
            let px = (2 * x + 1) as f32 / width as f32 - 1.0;
            let py = (2 * y + 1) as f32 / height as f32 - 1.0;
            let t = ((px * ca + py * sa) * 0.35 + 0.5).clamp(0.0, 1.0);
            let wave = if textured {
                0.06 * (std::f32::consts::PI * fx * px + phase).sin()
                    * (std::f32::consts::PI * fy * py).cos()
            } else {
                0.0
            };
            for c in 0..3 {
                let v = (c0[c] * (1.0 - t) + c1[c] * t + wave).clamp(0.0, 1.0);
                mean[c] += f64::from(v);
                rgba.push(v);
            }
            rgba.push(1.0);
        }
    }
    let n = (width * height) as f64;
    let mean = mean.map(|m| (m / n) as f32);
    (
        Texture::new(width, height, rgba).expect("nonzero size"),
        mean,
    )
}
