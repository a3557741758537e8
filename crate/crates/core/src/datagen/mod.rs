//! Synthetic animated-graphics scenes with ground truth, simulated box
//! prompts and prompt noise.

mod anim;
mod textures;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use anim::{
    animation_preset, progress, AnimationSpec, AnimationType, Direction, Placement, Variant,
    FLASH_CYCLES, MIN_SCALE, MIN_SPIN_COS, SHAKE_AMPLITUDE, SHAKE_CYCLES, SLIDE_MARGIN,
    SPIN_CYCLES,
};
pub use textures::{background_texture, sprite_texture, TextureKind};

use crate::error::{Error, Result};
use crate::model::{
    validate, AnimationTrack, BBox, BoxAnnotation, Composition, MaskSequence, Sprite, SpriteBounds,
    TrackEntry, Video,
};
use crate::render::{render_sprite_isolated, render_video};

pub const DEFAULT_CANVAS: usize = 128;
pub const DEFAULT_FPS: f32 = 10.0;
pub const DEFAULT_FRAMES: usize = 50;
pub const DEFAULT_TEXTURE: usize = 96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteSpec {
    pub texture: TextureKind,
    pub texture_seed: u64,
    pub placement: Placement,
    pub animation: AnimationSpec,
}

/// Full description of a synthetic scene. `sprites` lists the foreground
/// sprites back to front; the background is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub fps: f32,
    pub frames: usize,
    pub texture_size: usize,
    pub sprites: Vec<SpriteSpec>,
}

impl SceneSpec {
    /// Total sprite count including the background.
    pub fn num_sprites(&self) -> usize {
        self.sprites.len() + 1
    }

    pub fn check(&self) -> Result<()> {
        let k = self.num_sprites();
        let b = SpriteBounds::GENERATED;
        if k < b.min || k > b.max {
            return Err(Error::Config(format!(
                "scene needs {}..={} sprites, got {k}",
                b.min, b.max
            )));
        }
        if self.canvas_width == 0
            || self.canvas_height == 0
            || self.texture_size == 0
            || self.frames == 0
        {
            return Err(Error::Config("scene sizes must be positive".into()));
        }
        if let Some(s) = self
            .sprites
            .iter()
            .find(|s| s.animation.delay >= self.frames)
        {
            return Err(Error::Config(format!(
                "delay {} must be below the frame count {}",
                s.animation.delay, self.frames
            )));
        }
        Ok(())
    }

    /// Random scene with `k` sprites; every choice is drawn from `seed`.
    pub fn random(seed: u64, k: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kinds: Vec<AnimationType> = (1..k)
            .map(|_| AnimationType::ALL[rng.random_range(0..AnimationType::ALL.len())])
            .collect();
        Self::with_animations(seed, &kinds, &mut rng)
    }

    /// Scene whose foreground sprites use `kinds`, remaining choices seeded.
    pub fn with_animations(seed: u64, kinds: &[AnimationType], rng: &mut ChaCha8Rng) -> Self {
        let frames = DEFAULT_FRAMES;
        let sprites = kinds
            .iter()
            .map(|&kind| SpriteSpec {
                texture: [
                    TextureKind::Shape,
                    TextureKind::Gradient,
                    TextureKind::Glyph,
                ][rng.random_range(0..3)],
                texture_seed: rng.random(),
                placement: Placement {
                    cx: rng.random_range(-0.45..0.45),
                    cy: rng.random_range(-0.45..0.45),
                    hx: rng.random_range(0.22..0.45),
                    hy: rng.random_range(0.22..0.45),
                },
                animation: AnimationSpec {
                    kind,
                    variant: [Variant::In, Variant::Out, Variant::Both][rng.random_range(0..3)],
                    delay: rng.random_range(0..frames / 4),
                    direction: [
                        Direction::Left,
                        Direction::Right,
                        Direction::Up,
                        Direction::Down,
                    ][rng.random_range(0..4)],
                },
            })
            .collect();
        Self {
            seed,
            canvas_width: DEFAULT_CANVAS,
            canvas_height: DEFAULT_CANVAS,
            fps: DEFAULT_FPS,
            frames,
            texture_size: DEFAULT_TEXTURE,
            sprites,
        }
    }
}

/// `count` random scenes with 2 to 6 sprites, all drawn from `seed`.
pub fn scene_batch(seed: u64, count: usize) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let scene_seed: u64 = rng.random();
            let k = rng.random_range(SpriteBounds::GENERATED.min..=SpriteBounds::GENERATED.max);
            SceneSpec::random(scene_seed, k)
        })
        .collect()
}

/// The fixed 20-scene benchmark: K cycles through 2, 3, 4 and foreground
/// animations cycle through every type.
pub fn benchmark_suite() -> Vec<SceneSpec> {
    let mut next = 0usize;
    (0..20u64)
        .map(|i| {
            let k = 2 + (i as usize % 3);
            let kinds: Vec<AnimationType> = (1..k)
                .map(|_| {
                    let t = AnimationType::ALL[next % AnimationType::ALL.len()];
                    next += 1;
                    t
                })
                .collect();
            let seed = 1000 + i;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            SceneSpec::with_animations(seed, &kinds, &mut rng)
        })
        .collect()
}

/// Ground-truth composition and its rendered video.
pub fn generate_composition(spec: &SceneSpec) -> Result<(Composition, Video)> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (bg, mean) = background_texture(&mut rng, spec.texture_size, spec.texture_size);
    let mut sprites = vec![Sprite {
        texture: bg,
        track: AnimationTrack::constant(TrackEntry::IDENTITY, spec.frames),
        label: Some("background".into()),
    }];
    for (i, s) in spec.sprites.iter().enumerate() {
        let mut trng = ChaCha8Rng::seed_from_u64(s.texture_seed);
        sprites.push(Sprite {
            texture: sprite_texture(&mut trng, s.texture, spec.texture_size, mean),
            track: animation_preset(&s.animation, &s.placement, spec.frames)?,
            label: Some(format!("{:?}-{}", s.animation.kind, i + 1).to_lowercase()),
        });
    }
    let c = Composition {
        sprites,
        canvas_width: spec.canvas_width,
        canvas_height: spec.canvas_height,
        fps: spec.fps,
    };
    let diags = validate(&c, SpriteBounds::GENERATED);
    if !diags.is_empty() {
        return Err(Error::Invalid(diags));
    }
    let video = render_video(&c)?;
    Ok((c, video))
}

/// Effective visibility of every sprite: own alpha times the transmittance
/// of all sprites above it. Index 0 is the background.
pub fn visibility(c: &Composition) -> Vec<MaskSequence> {
    let (h, w) = c.canvas();
    let n = h * w;
    let k = c.num_sprites();
    let mut out: Vec<MaskSequence> = (0..k)
        .map(|_| MaskSequence::zeros(w, h, c.num_frames()))
        .collect();
    for t in 0..c.num_frames() {
        let mut transmit = vec![1.0f32; n];
        for j in (0..k).rev() {
            let s = &c.sprites[j];
            let layer = render_sprite_isolated(&s.texture, &s.track.frames[t], (h, w));
            let alpha = &layer.rgba.data()[3 * n..];
            let vis = &mut out[j].frames[t];
            for i in 0..n {
                vis[i] = alpha[i] * transmit[i];
                transmit[i] *= 1.0 - alpha[i];
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptNoiseConfig {
    /// Keyframe rank: 1 picks the frame with the largest visible area.
    pub m: usize,
    /// Box edges move by up to this fraction of the box size.
    pub r_max: f32,
    pub seed: u64,
}

impl Default for PromptNoiseConfig {
    fn default() -> Self {
        Self {
            m: 1,
            r_max: 0.0,
            seed: 0,
        }
    }
}

/// Tight pixel rectangle around `mask > 0.5`, if any.
pub fn mask_box(mask: &[f32], w: usize, h: usize) -> Option<BBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] > 0.5 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    (x1 > x0).then(|| BBox::new(x0 as f32, y0 as f32, x1 as f32, y1 as f32))
}

/// One box prompt per foreground sprite, as an annotator would draw it on
/// the frame where the sprite is most visible (or the `m`-th most).
pub fn simulate_prompt(c: &Composition, noise: &PromptNoiseConfig) -> Result<Vec<BoxAnnotation>> {
    if noise.m == 0 || noise.r_max.is_nan() || noise.r_max < 0.0 {
        return Err(Error::Config(
            "keyframe rank must be >= 1 and r_max >= 0".into(),
        ));
    }
    let (h, w) = c.canvas();
    let vis = visibility(c);
    let mut out = Vec::with_capacity(c.num_sprites() - 1);
    for (k, v) in vis.iter().enumerate().skip(1) {
        let mut areas: Vec<(usize, f64, usize)> = v
            .frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let count = f.iter().filter(|&&a| a > 0.5).count();
                let mass = f.iter().map(|&a| f64::from(a)).sum::<f64>();
                (count, mass, t)
            })
            .filter(|&(a, _, _)| a > 0)
            .collect();
        if areas.is_empty() {
            return Err(Error::NeverVisible(k + 1));
        }
        // Larger area first; equal areas rank by visible mass, then by
        // earlier frame.
        areas.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
        let (_, _, t) = areas[(noise.m - 1).min(areas.len() - 1)];
        let bbox = mask_box(&v.frames[t], w, h).expect("positive area");
        let seed = noise
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(k as u64);
        out.push(BoxAnnotation {
            sprite_id: k + 1,
            keyframe: t,
            bbox: jitter_box(&bbox, noise.r_max, seed, (w, h)),
        });
    }
    Ok(out)
}

/// Moves each edge by `s·r` with `r ~ U[-r_max, r_max]` drawn in the order
/// left, top, right, bottom; `s` is the box width for left/right and the
/// height for top/bottom. The result is reordered and clamped to the canvas.
pub fn jitter_box(b: &BBox, r_max: f32, seed: u64, canvas: (usize, usize)) -> BBox {
    if r_max <= 0.0 {
        return *b;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bw, bh) = (b.width(), b.height());
    let mut draw = || rng.random_range(-r_max..=r_max);
    let x0 = b.x0 + bw * draw();
    let y0 = b.y0 + bh * draw();
    let x1 = b.x1 + bw * draw();
    let y1 = b.y1 + bh * draw();
    BBox::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1)).clamped(canvas.0, canvas.1)
}

#[cfg(test)]
mod tests;
