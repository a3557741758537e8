//! Box tracking from a single-frame prompt, mask estimation by background
//! differencing, and ingestion of externally produced masks.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::mask_box;
use crate::error::{Error, Result};
use crate::model::{load_masks, BBox, BoxAnnotation, MaskSequence, Video};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    /// Channel-mean difference from the background that counts as sprite.
    pub tau_mask: f32,
    /// Template samples per box side, at most.
    pub template_samples: usize,
    /// Per-axis multiplicative scale candidates tried between consecutive
    /// frames; every x/y pairing is searched.
    pub scales: [f32; 3],
    /// Pixels added around tracked boxes when excluding them from the
    /// background estimate.
    pub exclusion_margin: f32,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            tau_mask: 0.08,
            template_samples: 24,
            scales: [0.9, 1.0, 1.1],
            exclusion_margin: 2.0,
        }
    }
}

/// Per-sprite tracking output, ordered like the prompts.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackResult {
    pub sprite_ids: Vec<usize>,
    pub keyframes: Vec<usize>,
    pub boxes: Vec<Vec<BBox>>,
    pub masks: Vec<MaskSequence>,
}

/// Unclamped tracker state in pixels.
#[derive(Clone, Copy, Debug)]
struct State {
    cx: f32,
    cy: f32,
    w: f32,
    h: f32,
}

impl State {
    fn from_box(b: &BBox) -> Self {
        let (cx, cy) = b.center();
        Self {
            cx,
            cy,
            w: b.width(),
            h: b.height(),
        }
    }

    fn to_box(self) -> BBox {
        BBox::new(
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }
}

/// Bilinear RGB lookup at continuous pixel coordinates (pixel centres at
/// `i + 0.5`); `None` outside the frame.
fn sample_rgb(frame: &[f32], w: usize, h: usize, x: f32, y: f32) -> Option<[f32; 3]> {
    let (fx, fy) = (x - 0.5, y - 0.5);
    if fx < 0.0 || fy < 0.0 || fx > (w - 1) as f32 || fy > (h - 1) as f32 {
        return None;
    }
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (ax, ay) = (fx - x0 as f32, fy - y0 as f32);
    let px = |x: usize, y: usize, c: usize| frame[(y * w + x) * 3 + c];
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = px(x0, y0, c) * (1.0 - ax) + px(x1, y0, c) * ax;
        let bot = px(x0, y1, c) * (1.0 - ax) + px(x1, y1, c) * ax;
        *o = top * (1.0 - ay) + bot * ay;
    }
    Some(out)
}

struct Template {
    nx: usize,
    ny: usize,
    values: Vec<Option<[f32; 3]>>,
}

fn sample_grid(
    frame: &[f32],
    w: usize,
    h: usize,
    s: &State,
    nx: usize,
    ny: usize,
) -> Vec<Option<[f32; 3]>> {
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = s.cy - s.h / 2.0 + (j as f32 + 0.5) / ny as f32 * s.h;
        for i in 0..nx {
            let x = s.cx - s.w / 2.0 + (i as f32 + 0.5) / nx as f32 * s.w;
            out.push(sample_rgb(frame, w, h, x, y));
        }
    }
    out
}

/// Normalized cross-correlation over samples valid in both; `None` when
/// too few overlap or either side is flat.
fn ncc(a: &[Option<[f32; 3]>], b: &[Option<[f32; 3]>]) -> Option<f64> {
    let pairs: Vec<([f32; 3], [f32; 3])> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    if pairs.len() * 4 < a.len() {
        return None;
    }
    let n = (pairs.len() * 3) as f64;
    let (mut ma, mut mb) = (0.0, 0.0);
    for (x, y) in &pairs {
        for c in 0..3 {
            ma += f64::from(x[c]);
            mb += f64::from(y[c]);
        }
    }
    ma /= n;
    mb /= n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        for c in 0..3 {
            let (da, db) = (f64::from(x[c]) - ma, f64::from(y[c]) - mb);
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
    }
    if saa < 1e-9 || sbb < 1e-9 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

fn search(video: &Video, t: usize, tpl: &Template, prev: State, cfg: &TrackConfig) -> State {
    let (w, h) = (video.width, video.height);
    let frame = &video.frames[t];
    let radius = (0.2 * prev.w.max(prev.h)).clamp(4.0, 12.0).round() as i32;
    let mut best: Option<(f64, State)> = None;
    let pairs = cfg
        .scales
        .iter()
        .flat_map(|&sy| cfg.scales.iter().map(move |&sx| (sx, sy)));
    for (sx, sy) in pairs {
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let cand = State {
                    cx: prev.cx + dx as f32,
                    cy: prev.cy + dy as f32,
                    w: (prev.w * sx).max(1.0),
                    h: (prev.h * sy).max(1.0),
                };
                let vals = sample_grid(frame, w, h, &cand, tpl.nx, tpl.ny);
                let Some(score) = ncc(&tpl.values, &vals) else {
                    continue;
                };
                // Strict improvement keeps the earliest candidate on ties;
                // candidates run from the smallest scale and offset.
                let better = match best {
                    None => true,
                    Some((b, _)) => score > b + 1e-12,
                };
                if better {
                    best = Some((score, cand));
                }
            }
        }
    }
    best.map_or(prev, |(_, s)| s)
}

/// Follows the prompted box forward and backward from its keyframe by
/// template matching. Boxes are clamped to the canvas.
pub fn track_boxes(video: &Video, ann: &BoxAnnotation, cfg: &TrackConfig) -> Result<Vec<BBox>> {
    let (w, h) = (video.width, video.height);
    let nt = video.num_frames();
    if !ann.bbox.is_valid_in(w, h) {
        return Err(Error::InvalidBox(format!(
            "sprite {} box {:?} outside {w}x{h} canvas",
            ann.sprite_id, ann.bbox
        )));
    }
    if ann.keyframe >= nt {
        return Err(Error::InvalidBox(format!(
            "sprite {} keyframe {} beyond {nt} frames",
            ann.sprite_id,
            ann.keyframe + 1
        )));
    }
    let start = State::from_box(&ann.bbox);
    let nx = cfg.template_samples.min(start.w.ceil() as usize).max(2);
    let ny = cfg.template_samples.min(start.h.ceil() as usize).max(2);
    let tpl = Template {
        nx,
        ny,
        values: sample_grid(&video.frames[ann.keyframe], w, h, &start, nx, ny),
    };
    let mut states = vec![start; nt];
    let mut s = start;
    for (t, st) in states.iter_mut().enumerate().skip(ann.keyframe + 1) {
        s = search(video, t, &tpl, s, cfg);
        *st = s;
    }
    s = start;
    for (t, st) in states.iter_mut().enumerate().take(ann.keyframe).rev() {
        s = search(video, t, &tpl, s, cfg);
        *st = s;
    }
    Ok(states
        .iter()
        .enumerate()
        .map(|(t, s)| {
            if t == ann.keyframe {
                ann.bbox
            } else {
                s.to_box().clamped(w, h)
            }
        })
        .collect())
}

/// Per-pixel median over frames where the pixel lies outside every
/// excluded box. Pixels covered in every frame are filled by harmonic
/// interpolation from the known ones. Interleaved RGB.
pub fn background_model(video: &Video, exclude: &[Vec<BBox>], margin: f32) -> Vec<f32> {
    let (w, h) = (video.width, video.height);
    let mut out = vec![0.0f32; w * h * 3];
    let mut known = vec![false; w * h];
    let mut samples: Vec<f32> = Vec::with_capacity(video.num_frames());
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            let free: Vec<usize> = (0..video.num_frames())
                .filter(|&t| {
                    exclude.iter().all(|b| {
                        let b = &b[t];
                        !(px >= b.x0 - margin
                            && px < b.x1 + margin
                            && py >= b.y0 - margin
                            && py < b.y1 + margin)
                    })
                })
                .collect();
            if free.is_empty() {
                continue;
            }
            known[y * w + x] = true;
            for c in 0..3 {
                samples.clear();
                samples.extend(free.iter().map(|&t| video.frames[t][(y * w + x) * 3 + c]));
                out[(y * w + x) * 3 + c] = median(&mut samples);
            }
        }
    }
    if known.iter().all(|&k| !k) {
        // Nothing is ever uncovered; fall back to the plain temporal median.
        return background_model(video, &[], 0.0);
    }
    harmonic_fill(&mut out, &known, w, h);
    out
}

fn median(v: &mut [f32]) -> f32 {
    v.sort_by(f32::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fills unknown pixels by Jacobi iterations of the 4-neighbour average,
/// starting from the mean of the known pixels.
fn harmonic_fill(img: &mut [f32], known: &[bool], w: usize, h: usize) {
    let unknown: Vec<usize> = (0..w * h).filter(|&i| !known[i]).collect();
    if unknown.is_empty() {
        return;
    }
    let count = (w * h - unknown.len()) as f32;
    let mut mean = [0.0f32; 3];
    for (i, _) in known.iter().enumerate().filter(|(_, &k)| k) {
        for c in 0..3 {
            mean[c] += img[i * 3 + c] / count;
        }
    }
    for &i in &unknown {
        img[i * 3..i * 3 + 3].copy_from_slice(&mean);
    }
    let iters = 4 * w.max(h);
    let mut next = img.to_vec();
    for _ in 0..iters {
        for &i in &unknown {
            let (x, y) = (i % w, i / w);
            let mut acc = [0.0f32; 3];
            let mut n = 0.0;
            let mut add = |j: usize| {
                for c in 0..3 {
                    acc[c] += img[j * 3 + c];
                }
                n += 1.0;
            };
            if x > 0 {
                add(i - 1);
            }
            if x + 1 < w {
                add(i + 1);
            }
            if y > 0 {
                add(i - w);
            }
            if y + 1 < h {
                add(i + w);
            }
            for c in 0..3 {
                next[i * 3 + c] = acc[c] / n;
            }
        }
        for &i in &unknown {
            img[i * 3..i * 3 + 3].copy_from_slice(&next[i * 3..i * 3 + 3]);
        }
    }
}

/// Masks from differencing against `background` (interleaved RGB) inside
/// each frame's box, softened by one 3×3 box blur and zero outside the box.
pub fn estimate_masks(video: &Video, boxes: &[BBox], background: &[f32], tau: f32) -> MaskSequence {
    let (w, h) = (video.width, video.height);
    let mut out = MaskSequence::zeros(w, h, video.num_frames());
    for (t, (frame, b)) in video.frames.iter().zip(boxes).enumerate() {
        let inside = |x: usize, y: usize| b.contains(x as f32 + 0.5, y as f32 + 0.5);
        let mut hard = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                if !inside(x, y) {
                    continue;
                }
                let i = (y * w + x) * 3;
                let d = (0..3)
                    .map(|c| (frame[i + c] - background[i + c]).abs())
                    .sum::<f32>()
                    / 3.0;
                if d > tau {
                    hard[y * w + x] = 1.0;
                }
            }
        }
        let m = &mut out.frames[t];
        for y in 0..h {
            for x in 0..w {
                if !inside(x, y) {
                    continue;
                }
                let mut acc = 0.0;
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        acc += hard[yy * w + xx];
                    }
                }
                // Border pixels average over the full 3×3 footprint too.
                m[y * w + x] = acc / 9.0;
            }
        }
    }
    out
}

/// Tracks every prompt, builds the shared background model and estimates
/// one mask sequence per sprite.
pub fn track_all(video: &Video, anns: &[BoxAnnotation], cfg: &TrackConfig) -> Result<TrackResult> {
    let boxes = anns
        .par_iter()
        .map(|a| track_boxes(video, a, cfg))
        .collect::<Result<Vec<_>>>()?;
    let bg = background_model(video, &boxes, cfg.exclusion_margin);
    let masks = boxes
        .par_iter()
        .map(|b| estimate_masks(video, b, &bg, cfg.tau_mask))
        .collect();
    Ok(TrackResult {
        sprite_ids: anns.iter().map(|a| a.sprite_id).collect(),
        keyframes: anns.iter().map(|a| a.keyframe).collect(),
        boxes,
        masks,
    })
}

/// Reads `dir/<sprite_id>/frame_XXXX.png` masks for every numbered sprite
/// directory. Boxes are the tight rectangles around `mask > 0.5`; frames
/// with empty masks take the box of the nearest non-empty frame.
pub fn load_external_masks(dir: &Path, video: &Video) -> Result<TrackResult> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids: Vec<usize> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().and_then(|s| s.parse().ok()))
        .collect();
    ids.sort_unstable();
    if ids.is_empty() {
        return Err(Error::Schema {
            path: dir.to_path_buf(),
            message: "no sprite mask directories".into(),
        });
    }
    let (w, h) = (video.width, video.height);
    let mut out = TrackResult {
        sprite_ids: ids.clone(),
        keyframes: Vec::new(),
        boxes: Vec::new(),
        masks: Vec::new(),
    };
    for id in ids {
        let m = load_masks(&dir.join(id.to_string()), video.num_frames())?;
        if (m.width, m.height) != (w, h) {
            return Err(Error::SizeMismatch {
                expected: (w, h),
                got: (m.width, m.height),
            });
        }
        let raw: Vec<Option<BBox>> = m.frames.iter().map(|f| mask_box(f, w, h)).collect();
        let visible: Vec<usize> = (0..raw.len()).filter(|&t| raw[t].is_some()).collect();
        if visible.is_empty() {
            return Err(Error::NeverVisible(id));
        }
        let boxes = (0..raw.len())
            .map(|t| {
                raw[t].unwrap_or_else(|| {
                    let near = *visible
                        .iter()
                        .min_by_key(|&&v| (v.abs_diff(t), v))
                        .expect("nonempty");
                    raw[near].expect("visible")
                })
            })
            .collect();
        let area = |f: &Vec<f32>| f.iter().filter(|&&v| v > 0.5).count();
        let key = (0..m.frames.len())
            .max_by(|&a, &b| area(&m.frames[a]).cmp(&area(&m.frames[b])).then(b.cmp(&a)))
            .expect("nonempty");
        out.keyframes.push(key);
        out.boxes.push(boxes);
        out.masks.push(m);
    }
    Ok(out)
}
