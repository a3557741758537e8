//! Domain types: textures, animation tracks, compositions, videos and the
//! annotation/mask inputs used for initialization.

mod io;

use std::fmt;

pub use io::{
    load_annotations, load_composition, load_masks, load_texture, load_video, save_annotations,
    save_composition, save_masks, save_texture, save_video, MANIFEST_FILE, VIDEO_MANIFEST_FILE,
};

use crate::error::Error;

/// Straight-alpha RGBA raster, row-major `[height][width][4]`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    width: usize,
    height: usize,
    rgba: Vec<f32>,
}

impl Texture {
    pub fn new(width: usize, height: usize, rgba: Vec<f32>) -> Result<Self, Error> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("texture size {width}x{height}")));
        }
        if rgba.len() != width * height * 4 {
            return Err(Error::Shape(format!(
                "texture {width}x{height} needs {} values, got {}",
                width * height * 4,
                rgba.len()
            )));
        }
        Ok(Self {
            width,
            height,
            rgba,
        })
    }

    pub fn filled(width: usize, height: usize, rgba: [f32; 4]) -> Self {
        let data = rgba
            .iter()
            .copied()
            .cycle()
            .take(width * height * 4)
            .collect();
        Self::new(width, height, data).expect("nonzero size")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgba(&self) -> &[f32] {
        &self.rgba
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 4] {
        let i = (y * self.width + x) * 4;
        [
            self.rgba[i],
            self.rgba[i + 1],
            self.rgba[i + 2],
            self.rgba[i + 3],
        ]
    }

    /// Planar `[4][height][width]` copy.
    pub fn to_planar(&self) -> Vec<f32> {
        let n = self.width * self.height;
        let mut out = vec![0.0; 4 * n];
        for (i, px) in self.rgba.chunks_exact(4).enumerate() {
            for c in 0..4 {
                out[c * n + i] = px[c];
            }
        }
        out
    }

    pub fn from_planar(width: usize, height: usize, planar: &[f32]) -> Result<Self, Error> {
        let n = width * height;
        if planar.len() != 4 * n {
            return Err(Error::Shape("planar texture length".into()));
        }
        let mut rgba = vec![0.0; 4 * n];
        for i in 0..n {
            for c in 0..4 {
                rgba[i * 4 + c] = planar[c * n + i];
            }
        }
        Self::new(width, height, rgba)
    }
}

/// Inverse affine map from normalized canvas coordinates `(u, v)` in
/// `[-1, 1]²` (x right, y down) to normalized texture coordinates:
/// `s = a[0]·u + a[1]·v + a[2]`, `t = a[3]·u + a[4]·v + a[5]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct AffineParams(pub [f32; 6]);

impl AffineParams {
    pub const IDENTITY: Self = Self([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    /// Map sending the canvas box with normalized center `(cx, cy)` and
    /// half-extents `(hx, hy)` onto the full texture.
    pub fn from_box(cx: f32, cy: f32, hx: f32, hy: f32) -> Self {
        Self([1.0 / hx, 0.0, -cx / hx, 0.0, 1.0 / hy, -cy / hy])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn apply(&self, u: f64, v: f64) -> (f64, f64) {
        let a = self.0.map(f64::from);
        (a[0] * u + a[1] * v + a[2], a[3] * u + a[4] * v + a[5])
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn then_after(&self, other: &Self) -> Self {
        let a = self.0.map(f64::from);
        let b = other.0.map(f64::from);
        Self(
            [
                a[0] * b[0] + a[1] * b[3],
                a[0] * b[1] + a[1] * b[4],
                a[0] * b[2] + a[1] * b[5] + a[2],
                a[3] * b[0] + a[4] * b[3],
                a[3] * b[1] + a[4] * b[4],
                a[3] * b[2] + a[4] * b[5] + a[5],
            ]
            .map(|v| v as f32),
        )
    }

    /// Inverse map, `None` when singular.
    pub fn inverse(&self) -> Option<Self> {
        let a = self.0.map(f64::from);
        let det = a[0] * a[4] - a[1] * a[3];
        if det.abs() < 1e-12 || !det.is_finite() {
            return None;
        }
        let (i0, i1, i3, i4) = (a[4] / det, -a[1] / det, -a[3] / det, a[0] / det);
        Some(Self(
            [
                i0,
                i1,
                -(i0 * a[2] + i1 * a[5]),
                i3,
                i4,
                -(i3 * a[2] + i4 * a[5]),
            ]
            .map(|v| v as f32),
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrackEntry {
    #[serde(rename = "a")]
    pub affine: AffineParams,
    #[serde(rename = "o")]
    pub opacity: f32,
}

impl TrackEntry {
    pub const IDENTITY: Self = Self {
        affine: AffineParams::IDENTITY,
        opacity: 1.0,
    };
}

/// Per-frame affine and opacity of one sprite.
#[derive(Clone, Debug, PartialEq)]
pub struct AnimationTrack {
    pub frames: Vec<TrackEntry>,
}

impl AnimationTrack {
    pub fn constant(entry: TrackEntry, frames: usize) -> Self {
        Self {
            frames: vec![entry; frames],
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    pub texture: Texture,
    pub track: AnimationTrack,
    pub label: Option<String>,
}

/// Ordered back-to-front sprite stack; index 0 is the background.
#[derive(Clone, Debug, PartialEq)]
pub struct Composition {
    pub sprites: Vec<Sprite>,
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub fps: f32,
}

impl Composition {
    pub fn num_sprites(&self) -> usize {
        self.sprites.len()
    }

    /// Frame count, taken from the background track.
    pub fn num_frames(&self) -> usize {
        self.sprites.first().map_or(0, |s| s.track.len())
    }

    pub fn canvas(&self) -> (usize, usize) {
        (self.canvas_height, self.canvas_width)
    }
}

/// RGB frames, row-major `[height][width][3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub width: usize,
    pub height: usize,
    pub fps: f32,
    pub frames: Vec<Vec<f32>>,
}

impl Video {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn pixel(&self, t: usize, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        let f = &self.frames[t];
        [f[i], f[i + 1], f[i + 2]]
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.frames.is_empty() {
            return Err(Error::Shape("video has no frames".into()));
        }
        let n = self.width * self.height * 3;
        for (t, f) in self.frames.iter().enumerate() {
            if f.len() != n {
                return Err(Error::Shape(format!("frame {} has wrong size", t + 1)));
            }
            if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Shape(format!("frame {} out of [0,1]", t + 1)));
            }
        }
        Ok(())
    }
}

/// Axis-aligned pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
}

impl BBox {
    pub fn new(x0: f32, y0: f32, x1: f32, y1: f32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f32 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> (f32, f32) {
        ((self.x0 + self.x1) * 0.5, (self.y0 + self.y1) * 0.5)
    }

    pub fn is_valid_in(&self, width: usize, height: usize) -> bool {
        let finite = [self.x0, self.y0, self.x1, self.y1]
            .iter()
            .all(|v| v.is_finite());
        finite
            && 0.0 <= self.x0
            && self.x0 < self.x1
            && self.x1 <= width as f32
            && 0.0 <= self.y0
            && self.y0 < self.y1
            && self.y1 <= height as f32
    }

    pub fn contains(&self, x: f32, y: f32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Intersection with the canvas, widened where needed so both sides
    /// are at least one pixel.
    pub fn clamped(&self, width: usize, height: usize) -> Self {
        let (w, h) = (width as f32, height as f32);
        let clamp_axis = |lo: f32, hi: f32, n: f32| {
            let (mut lo, mut hi) = (lo.clamp(0.0, n), hi.clamp(0.0, n));
            if hi - lo < 1.0 {
                let c = ((lo + hi) * 0.5).clamp(0.5, n - 0.5);
                lo = (c - 0.5).max(0.0);
                hi = (lo + 1.0).min(n);
            }
            (lo, hi)
        };
        let (x0, x1) = clamp_axis(self.x0.min(self.x1), self.x0.max(self.x1), w);
        let (y0, y1) = clamp_axis(self.y0.min(self.y1), self.y0.max(self.y1), h);
        Self { x0, y0, x1, y1 }
    }

    pub fn iou(&self, other: &BBox) -> f32 {
        let ix = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let iy = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        let inter = ix * iy;
        let union = self.width() * self.height() + other.width() * other.height() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Single-frame box prompt for one sprite. `keyframe` is 0-based here and
/// 1-based on disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxAnnotation {
    pub sprite_id: usize,
    pub keyframe: usize,
    pub bbox: BBox,
}

/// Per-frame soft masks `[height][width]` of one sprite.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSequence {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<Vec<f32>>,
}

impl MaskSequence {
    pub fn zeros(width: usize, height: usize, frames: usize) -> Self {
        Self {
            width,
            height,
            frames: vec![vec![0.0; width * height]; frames],
        }
    }
}

/// Allowed sprite counts. Generated data uses 2..=6.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpriteBounds {
    pub min: usize,
    pub max: usize,
}

impl SpriteBounds {
    pub const GENERATED: Self = Self { min: 2, max: 6 };
    pub const ANY: Self = Self {
        min: 1,
        max: usize::MAX,
    };
}

impl Default for SpriteBounds {
    fn default() -> Self {
        Self::ANY
    }
}

/// A violated composition invariant. Sprite and frame indices are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub enum Diagnostic {
    SpriteCount {
        count: usize,
        bounds: SpriteBounds,
    },
    Canvas {
        width: usize,
        height: usize,
    },
    Fps(f32),
    EmptyTrack {
        sprite: usize,
    },
    TrackLength {
        sprite: usize,
        len: usize,
        expected: usize,
    },
    NonFiniteAffine {
        sprite: usize,
        frame: usize,
    },
    Opacity {
        sprite: usize,
        frame: usize,
        value: f32,
    },
    TextureValue {
        sprite: usize,
        index: usize,
        value: f32,
    },
    TextureSize {
        sprite: usize,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::SpriteCount { count, bounds } => write!(
                f,
                "composition has {count} sprites, allowed {}..={}",
                bounds.min, bounds.max
            ),
            Diagnostic::Canvas { width, height } => write!(f, "invalid canvas {width}x{height}"),
            Diagnostic::Fps(v) => write!(f, "invalid fps {v}"),
            Diagnostic::EmptyTrack { sprite } => write!(f, "sprite {sprite}: empty track"),
            Diagnostic::TrackLength {
                sprite,
                len,
                expected,
            } => write!(
                f,
                "sprite {sprite}: track has {len} frames, expected {expected}"
            ),
            Diagnostic::NonFiniteAffine { sprite, frame } => {
                write!(f, "sprite {sprite} frame {frame}: non-finite affine")
            }
            Diagnostic::Opacity {
                sprite,
                frame,
                value,
            } => write!(
                f,
                "sprite {sprite} frame {frame}: opacity {value} outside [0,1]"
            ),
            Diagnostic::TextureValue {
                sprite,
                index,
                value,
            } => write!(
                f,
                "sprite {sprite}: texture value {value} at {index} outside [0,1]"
            ),
            Diagnostic::TextureSize { sprite } => {
                write!(f, "sprite {sprite}: texture data does not match its size")
            }
        }
    }
}

/// Every violated invariant of `c`; empty exactly when `c` is valid.
pub fn validate(c: &Composition, bounds: SpriteBounds) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let k = c.sprites.len();
    if k < bounds.min || k > bounds.max {
        out.push(Diagnostic::SpriteCount { count: k, bounds });
    }
    if c.canvas_width == 0 || c.canvas_height == 0 {
        out.push(Diagnostic::Canvas {
            width: c.canvas_width,
            height: c.canvas_height,
        });
    }
    if !(c.fps.is_finite() && c.fps > 0.0) {
        out.push(Diagnostic::Fps(c.fps));
    }
    let expected = c.num_frames();
    for (i, s) in c.sprites.iter().enumerate() {
        let sprite = i + 1;
        if s.track.is_empty() {
            out.push(Diagnostic::EmptyTrack { sprite });
        } else if s.track.len() != expected {
            out.push(Diagnostic::TrackLength {
                sprite,
                len: s.track.len(),
                expected,
            });
        }
        for (t, e) in s.track.frames.iter().enumerate() {
            if !e.affine.is_finite() {
                out.push(Diagnostic::NonFiniteAffine {
                    sprite,
                    frame: t + 1,
                });
            }
            if !(0.0..=1.0).contains(&e.opacity) {
                out.push(Diagnostic::Opacity {
                    sprite,
                    frame: t + 1,
                    value: e.opacity,
                });
            }
        }
        let tex = &s.texture;
        if tex.width == 0 || tex.height == 0 || tex.rgba.len() != tex.width * tex.height * 4 {
            out.push(Diagnostic::TextureSize { sprite });
        } else if let Some((index, &value)) = tex
            .rgba
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            out.push(Diagnostic::TextureValue {
                sprite,
                index,
                value,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests;
