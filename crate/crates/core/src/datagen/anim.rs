//! Closed-form animation presets with linear easing.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AffineParams, AnimationTrack, TrackEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnimationType {
    Slide,
    Scale,
    Fade,
    Zoom,
    Shake,
    Spin,
    Flash,
    None,
}

impl AnimationType {
    pub const ALL: [AnimationType; 8] = [
        AnimationType::Slide,
        AnimationType::Scale,
        AnimationType::Fade,
        AnimationType::Zoom,
        AnimationType::Shake,
        AnimationType::Spin,
        AnimationType::Flash,
        AnimationType::None,
    ];
}

impl std::str::FromStr for AnimationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| format!("{t:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown animation type {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    In,
    Out,
    Both,
}

/// Slide: side the sprite enters from or leaves towards. Shake and Spin use
/// only the axis (Left/Right horizontal, Up/Down vertical).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    fn horizontal(self) -> bool {
        matches!(self, Direction::Left | Direction::Right)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnimationSpec {
    pub kind: AnimationType,
    pub variant: Variant,
    /// Frames (0-based count) holding the start state before motion begins.
    pub delay: usize,
    pub direction: Direction,
}

impl AnimationSpec {
    pub const NONE: Self = Self {
        kind: AnimationType::None,
        variant: Variant::In,
        delay: 0,
        direction: Direction::Left,
    };
}

/// Rest position of a sprite: normalized centre and half-extents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub cx: f64,
    pub cy: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Placement {
    pub const FULL: Self = Self {
        cx: 0.0,
        cy: 0.0,
        hx: 1.0,
        hy: 1.0,
    };
}

pub const SHAKE_AMPLITUDE: f64 = 0.1;
pub const SHAKE_CYCLES: f64 = 3.0;
pub const FLASH_CYCLES: f64 = 3.0;
pub const SPIN_CYCLES: f64 = 1.0;
/// Smallest scale reached by Zoom and Scale; keeps the inverse map finite.
pub const MIN_SCALE: f64 = 0.02;
/// Smallest |cos| of the flattened spin axis.
pub const MIN_SPIN_COS: f64 = 0.02;
/// Extra normalized distance past the canvas edge for off-canvas slides.
pub const SLIDE_MARGIN: f64 = 0.05;

/// Animation progress in `[0, 1]` at frame `t` (0-based).
pub fn progress(t: usize, delay: usize, frames: usize) -> f64 {
    if t <= delay {
        return 0.0;
    }
    let span = frames.saturating_sub(1).saturating_sub(delay);
    if span == 0 {
        1.0
    } else {
        ((t - delay) as f64 / span as f64).min(1.0)
    }
}

/// How much of the rest state is reached: 0 = start/end state, 1 = rest.
fn amount(variant: Variant, p: f64) -> f64 {
    match variant {
        Variant::In => p,
        Variant::Out => 1.0 - p,
        Variant::Both => 1.0 - (2.0 * p - 1.0).abs(),
    }
}

/// Canvas offset that puts the sprite just beyond the canvas edge.
fn off_canvas(dir: Direction, pl: &Placement) -> (f64, f64) {
    match dir {
        Direction::Left => (-1.0 - SLIDE_MARGIN - pl.hx - pl.cx, 0.0),
        Direction::Right => (1.0 + SLIDE_MARGIN + pl.hx - pl.cx, 0.0),
        Direction::Up => (0.0, -1.0 - SLIDE_MARGIN - pl.hy - pl.cy),
        Direction::Down => (0.0, 1.0 + SLIDE_MARGIN + pl.hy - pl.cy),
    }
}

/// Sprite state at one frame: canvas offset, per-axis scale about the
/// sprite centre and opacity.
#[derive(Clone, Copy, Debug, PartialEq)]
struct State {
    dx: f64,
    dy: f64,
    sx: f64,
    sy: f64,
    opacity: f64,
}

fn state(spec: &AnimationSpec, pl: &Placement, p: f64) -> State {
    let mut s = State {
        dx: 0.0,
        dy: 0.0,
        sx: 1.0,
        sy: 1.0,
        opacity: 1.0,
    };
    let q = amount(spec.variant, p);
    match spec.kind {
        AnimationType::Slide => {
            let (ox, oy) = off_canvas(spec.direction, pl);
            s.dx = (1.0 - q) * ox;
            s.dy = (1.0 - q) * oy;
        }
        AnimationType::Scale => {
            s.sx = q.max(MIN_SCALE);
            s.sy = s.sx;
            s.opacity = q;
        }
        AnimationType::Fade => s.opacity = q,
        AnimationType::Zoom => {
            s.sx = q.max(MIN_SCALE);
            s.sy = s.sx;
        }
        AnimationType::Shake => {
            let off = SHAKE_AMPLITUDE * (TAU * SHAKE_CYCLES * p).sin();
            if spec.direction.horizontal() {
                s.dx = off;
            } else {
                s.dy = off;
            }
        }
        AnimationType::Spin => {
            let c = (TAU * SPIN_CYCLES * p).cos();
            let c = c.signum() * c.abs().max(MIN_SPIN_COS);
            if spec.direction.horizontal() {
                s.sx = c;
            } else {
                s.sy = c;
            }
        }
        AnimationType::Flash => s.opacity = 0.5 * (1.0 + (TAU * FLASH_CYCLES * p).cos()),
        AnimationType::None => {}
    }
    s
}

/// Inverse map of the sprite drawn at `pl`, shifted and scaled by `s`.
fn entry(pl: &Placement, s: &State) -> TrackEntry {
    let (ex, ey) = (pl.hx * s.sx, pl.hy * s.sy);
    let (cx, cy) = (pl.cx + s.dx, pl.cy + s.dy);
    TrackEntry {
        affine: AffineParams([1.0 / ex, 0.0, -cx / ex, 0.0, 1.0 / ey, -cy / ey].map(|v| v as f32)),
        opacity: s.opacity.clamp(0.0, 1.0) as f32,
    }
}

/// Track of `frames` entries for a sprite resting at `placement`.
pub fn animation_preset(
    spec: &AnimationSpec,
    placement: &Placement,
    frames: usize,
) -> Result<AnimationTrack> {
    if frames == 0 {
        return Err(Error::Config("animation needs at least one frame".into()));
    }
    if spec.delay >= frames {
        return Err(Error::Config(format!(
            "delay {} must be below the frame count {frames}",
            spec.delay
        )));
    }
    if !(placement.hx > 0.0 && placement.hy > 0.0) {
        return Err(Error::Config("placement needs positive extent".into()));
    }
    Ok(AnimationTrack {
        frames: (0..frames)
            .map(|t| {
                entry(
                    placement,
                    &state(spec, placement, progress(t, spec.delay, frames)),
                )
            })
            .collect(),
    })
}
