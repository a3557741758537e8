//! Initial composition from the video and the tracker output: box-derived
//! affines, time-averaged crops as textures, and a background assembled
//! from pixels no foreground mask ever claimed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AffineParams, AnimationTrack, BBox, Composition, MaskSequence, Sprite, Texture, TrackEntry,
    Video,
};
use crate::track::TrackResult;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub texture_size: usize,
    /// Weight crop colours by the mask instead of averaging the box
    /// uniformly.
    pub mask_weighted_rgb: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            texture_size: crate::datagen::DEFAULT_TEXTURE,
            mask_weighted_rgb: false,
        }
    }
}

/// Affine mapping the canvas onto a texture that exactly fills `b`.
pub fn init_affine(b: &BBox, canvas: (usize, usize)) -> Result<AffineParams> {
    let (w, h) = (canvas.0 as f32, canvas.1 as f32);
    if !(b.width() > 0.0 && b.height() > 0.0) {
        return Err(Error::InvalidBox(format!("degenerate box {b:?}")));
    }
    let cx = (b.x0 + b.x1) / w - 1.0;
    let cy = (b.y0 + b.y1) / h - 1.0;
    Ok(AffineParams::from_box(
        cx,
        cy,
        b.width() / w,
        b.height() / h,
    ))
}

/// Texture-space sample positions of frame pixels under `affine`: texel
/// centre `(i, j)` maps to canvas pixel coordinates.
fn texel_to_canvas(
    a: &AffineParams,
    i: usize,
    j: usize,
    size: usize,
    canvas: (usize, usize),
) -> (f32, f32) {
    let inv = a.inverse().expect("box affines are invertible");
    let s = (2 * i + 1) as f64 / size as f64 - 1.0;
    let t = (2 * j + 1) as f64 / size as f64 - 1.0;
    let (u, v) = inv.apply(s, t);
    (
        (((u + 1.0) * canvas.0 as f64 - 1.0) / 2.0) as f32,
        (((v + 1.0) * canvas.1 as f64 - 1.0) / 2.0) as f32,
    )
}

/// Bilinear lookup with edge clamping in pixel-index coordinates.
fn bilinear(img: &[f32], w: usize, h: usize, ch: usize, x: f32, y: f32, out: &mut [f32]) {
    let x = x.clamp(0.0, (w - 1) as f32);
    let y = y.clamp(0.0, (h - 1) as f32);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (ax, ay) = (x - x0 as f32, y - y0 as f32);
    for (c, o) in out.iter_mut().enumerate().take(ch) {
        let p = |xx: usize, yy: usize| img[(yy * w + xx) * ch + c];
        *o = (p(x0, y0) * (1.0 - ax) + p(x1, y0) * ax) * (1.0 - ay)
            + (p(x0, y1) * (1.0 - ax) + p(x1, y1) * ax) * ay;
    }
}

fn touches_border(b: &BBox, w: usize, h: usize) -> bool {
    b.x0 <= 0.5 || b.y0 <= 0.5 || b.x1 >= w as f32 - 0.5 || b.y1 >= h as f32 - 0.5
}

/// Frames averaged into the texture: those with a nonempty mask whose box
/// is not cut by the canvas edge, relaxing each condition in turn when
/// nothing qualifies.
fn averaging_frames(boxes: &[BBox], mask: &MaskSequence) -> Vec<usize> {
    let (w, h) = (mask.width, mask.height);
    let nonempty: Vec<usize> = (0..boxes.len())
        .filter(|&t| mask.frames[t].iter().any(|&m| m > 0.0))
        .collect();
    let inner: Vec<usize> = nonempty
        .iter()
        .copied()
        .filter(|&t| !touches_border(&boxes[t], w, h))
        .collect();
    if !inner.is_empty() {
        inner
    } else if !nonempty.is_empty() {
        nonempty
    } else {
        (0..boxes.len()).collect()
    }
}

/// Time-averaged crop of one sprite in texture space: RGB from the video,
/// alpha from the masks.
pub fn init_foreground_texture(
    video: &Video,
    boxes: &[BBox],
    mask: &MaskSequence,
    cfg: &InitConfig,
) -> Result<Texture> {
    let (w, h) = (video.width, video.height);
    let n = cfg.texture_size;
    let frames = averaging_frames(boxes, mask);
    let mut rgb = vec![0.0f64; n * n * 3];
    let mut alpha = vec![0.0f64; n * n];
    let mut weight = vec![0.0f64; n * n];
    let mut px = [0.0f32; 3];
    let mut m = [0.0f32; 1];
    for &t in &frames {
        let a = init_affine(&boxes[t], (w, h))?;
        for j in 0..n {
            for i in 0..n {
                let (x, y) = texel_to_canvas(&a, i, j, n, (w, h));
                bilinear(&video.frames[t], w, h, 3, x, y, &mut px);
                bilinear(&mask.frames[t], w, h, 1, x, y, &mut m);
                let k = j * n + i;
                let wt = if cfg.mask_weighted_rgb {
                    f64::from(m[0])
                } else {
                    1.0
                };
                for c in 0..3 {
                    rgb[k * 3 + c] += wt * f64::from(px[c]);
                }
                weight[k] += wt;
                alpha[k] += f64::from(m[0]);
            }
        }
    }
    let count = frames.len() as f64;
    let mut out = vec![0.0f32; n * n * 4];
    for k in 0..n * n {
        for c in 0..3 {
            out[k * 4 + c] = if weight[k] > 0.0 {
                (rgb[k * 3 + c] / weight[k]) as f32
            } else {
                0.5
            };
        }
        out[k * 4 + 3] = (alpha[k] / count) as f32;
    }
    Texture::new(n, n, out)
}

/// Opaque background: every pixel averages the frames where no foreground
/// mask touches it; never-uncovered pixels take the mean of all uncovered
/// samples. The canvas image is then resampled to the texture grid.
pub fn init_background_texture(
    video: &Video,
    masks: &[MaskSequence],
    cfg: &InitConfig,
) -> Result<Texture> {
    let (w, h) = (video.width, video.height);
    let mut sum = vec![0.0f64; w * h * 3];
    let mut count = vec![0u32; w * h];
    let mut global = [0.0f64; 3];
    let mut global_n = 0u64;
    for (t, frame) in video.frames.iter().enumerate() {
        for p in 0..w * h {
            if masks.iter().any(|m| m.frames[t][p] > 0.0) {
                continue;
            }
            count[p] += 1;
            global_n += 1;
            for c in 0..3 {
                let v = f64::from(frame[p * 3 + c]);
                sum[p * 3 + c] += v;
                global[c] += v;
            }
        }
    }
    let fill = if global_n > 0 {
        global.map(|g| g / global_n as f64)
    } else {
        [0.5; 3]
    };
    let canvas: Vec<f32> = (0..w * h * 3)
        .map(|i| {
            let n = count[i / 3];
            if n > 0 {
                (sum[i] / f64::from(n)) as f32
            } else {
                fill[i % 3] as f32
            }
        })
        .collect();
    let n = cfg.texture_size;
    let mut out = vec![0.0f32; n * n * 4];
    let mut px = [0.0f32; 3];
    for j in 0..n {
        for i in 0..n {
            let (x, y) = texel_to_canvas(&AffineParams::IDENTITY, i, j, n, (w, h));
            bilinear(&canvas, w, h, 3, x, y, &mut px);
            let k = (j * n + i) * 4;
            out[k..k + 3].copy_from_slice(&px);
            out[k + 3] = 1.0;
        }
    }
    Texture::new(n, n, out)
}

/// Initial composition: the background followed by one sprite per tracked
/// prompt, in prompt order, every opacity 1.
pub fn initialize(video: &Video, track: &TrackResult, cfg: &InitConfig) -> Result<Composition> {
    video.validate()?;
    if cfg.texture_size == 0 {
        return Err(Error::Config("texture size must be positive".into()));
    }
    let canvas = (video.width, video.height);
    let nt = video.num_frames();
    let mut sprites = vec![Sprite {
        texture: init_background_texture(video, &track.masks, cfg)?,
        track: AnimationTrack::constant(TrackEntry::IDENTITY, nt),
        label: Some("background".into()),
    }];
    for (k, (boxes, mask)) in track.boxes.iter().zip(&track.masks).enumerate() {
        let frames = boxes
            .iter()
            .map(|b| {
                Ok(TrackEntry {
                    affine: init_affine(b, canvas)?,
                    opacity: 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sprites.push(Sprite {
            texture: init_foreground_texture(video, boxes, mask, cfg)?,
            track: AnimationTrack { frames },
            label: Some(format!("sprite-{}", track.sprite_ids[k])),
        });
    }
    Ok(Composition {
        sprites,
        canvas_width: video.width,
        canvas_height: video.height,
        fps: video.fps,
    })
}

#[cfg(test)]
mod tests;
