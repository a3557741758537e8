//! Reconstruction and per-sprite decomposition errors, and the
//! convergence rule used for benchmarking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Composition, Video};
use crate::optim::permutations;
use crate::render::{render_sprite_isolated, render_video};

/// Mean absolute difference over frames, pixels and channels.
pub fn video_l1(pred: &Video, gt: &Video) -> Result<f64> {
    if (pred.width, pred.height, pred.num_frames()) != (gt.width, gt.height, gt.num_frames()) {
        return Err(Error::SizeMismatch {
            expected: (gt.width, gt.height),
            got: (pred.width, pred.height),
        });
    }
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for (a, b) in pred.frames.iter().zip(&gt.frames) {
        if a.len() != b.len() {
            return Err(Error::Shape("frame sizes differ".into()));
        }
        sum += a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (f64::from(x) - f64::from(y)).abs())
            .sum::<f64>();
        n += a.len();
    }
    Ok(sum / n.max(1) as f64)
}

/// Frame error of a predicted composition against the target video.
pub fn frame_error(pred: &Composition, gt: &Video) -> Result<f64> {
    video_l1(&render_video(pred)?, gt)
}

fn check_rgba(a: &[f32], b: &[f32]) -> Result<usize> {
    if a.len() != b.len() || !a.len().is_multiple_of(4) {
        return Err(Error::Shape(format!(
            "rgba sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.len() / 4)
}

/// Alpha-weighted RGB error of planar `[4, H, W]` frames: the spatial mean
/// of the channel-mean absolute RGB difference times the target alpha.
pub fn rgb_error(pred: &[f32], gt: &[f32]) -> Result<f64> {
    let n = check_rgba(pred, gt)?;
    let mut sum = 0.0f64;
    for i in 0..n {
        let d: f64 = (0..3)
            .map(|c| (f64::from(pred[c * n + i]) - f64::from(gt[c * n + i])).abs())
            .sum();
        sum += d / 3.0 * f64::from(gt[3 * n + i]);
    }
    Ok(sum / n.max(1) as f64)
}

/// Mean absolute alpha difference of planar `[4, H, W]` frames.
pub fn alpha_error(pred: &[f32], gt: &[f32]) -> Result<f64> {
    let n = check_rgba(pred, gt)?;
    let sum: f64 = (0..n)
        .map(|i| (f64::from(pred[3 * n + i]) - f64::from(gt[3 * n + i])).abs())
        .sum();
    Ok(sum / n.max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteMetric {
    /// Ground-truth sprite index (0 is the background).
    pub gt: usize,
    /// Predicted sprite matched to it.
    pub pred: usize,
    pub rgb_l1: f64,
    pub alpha_l1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteReport {
    pub rgb_l1: f64,
    pub alpha_l1: f64,
    /// `assignment[k]` is the predicted sprite matched to ground truth `k`.
    pub assignment: Vec<usize>,
    pub per_sprite: Vec<SpriteMetric>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frame_l1: f64,
    pub sprite_rgb_l1: f64,
    pub sprite_alpha_l1: f64,
    pub assignment: Vec<usize>,
    pub per_sprite: Vec<SpriteMetric>,
}

/// Time-averaged error of every (pred, gt) sprite pair: `[pred][gt]`.
pub struct CostMatrices {
    pub rgb: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
}

fn check_pair(pred: &Composition, gt: &Composition) -> Result<()> {
    if pred.num_sprites() != gt.num_sprites() {
        return Err(Error::SpriteCount {
            pred: pred.num_sprites(),
            gt: gt.num_sprites(),
        });
    }
    if pred.canvas() != gt.canvas() || pred.num_frames() != gt.num_frames() {
        return Err(Error::Shape(
            "compositions differ in canvas or length".into(),
        ));
    }
    if gt.num_frames() == 0 {
        return Err(Error::Shape("compositions have no frames".into()));
    }
    Ok(())
}

pub fn cost_matrices(pred: &Composition, gt: &Composition) -> Result<CostMatrices> {
    check_pair(pred, gt)?;
    let k = gt.num_sprites();
    let nt = gt.num_frames();
    let canvas = gt.canvas();
    let per_frame = (0..nt)
        .into_par_iter()
        .map(|t| -> Result<(Vec<f64>, Vec<f64>)> {
            let render = |c: &Composition| -> Vec<Vec<f32>> {
                c.sprites
                    .iter()
                    .map(|s| {
                        render_sprite_isolated(&s.texture, &s.track.frames[t], canvas)
                            .rgba
                            .into_data()
                    })
                    .collect()
            };
            let (p, g) = (render(pred), render(gt));
            let mut rgb = vec![0.0; k * k];
            let mut alpha = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    rgb[i * k + j] = rgb_error(&p[i], &g[j])?;
                    alpha[i * k + j] = alpha_error(&p[i], &g[j])?;
                }
            }
            Ok((rgb, alpha))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rgb = vec![vec![0.0; k]; k];
    let mut alpha = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            rgb[i][j] = per_frame.iter().map(|f| f.0[i * k + j]).sum::<f64>() / nt as f64;
            alpha[i][j] = per_frame.iter().map(|f| f.1[i * k + j]).sum::<f64>() / nt as f64;
        }
    }
    Ok(CostMatrices { rgb, alpha })
}

/// Best assignment of predicted to ground-truth sprites with the
/// background pinned, minimizing the summed RGB and alpha errors; ties go
/// to the lexicographically first assignment.
pub fn sprite_error(pred: &Composition, gt: &Composition) -> Result<SpriteReport> {
    let m = cost_matrices(pred, gt)?;
    let k = gt.num_sprites();
    let fg: Vec<usize> = (1..k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(&fg) {
        let sigma: Vec<usize> = std::iter::once(0).chain(perm).collect();
        let obj: f64 = (0..k)
            .map(|j| m.rgb[sigma[j]][j] + m.alpha[sigma[j]][j])
            .sum();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, sigma));
        }
    }
    let sigma = best.expect("at least one assignment").1;
    let per_sprite: Vec<SpriteMetric> = (0..k)
        .map(|j| SpriteMetric {
            gt: j,
            pred: sigma[j],
            rgb_l1: m.rgb[sigma[j]][j],
            alpha_l1: m.alpha[sigma[j]][j],
        })
        .collect();
    Ok(SpriteReport {
        rgb_l1: per_sprite.iter().map(|s| s.rgb_l1).sum::<f64>() / k as f64,
        alpha_l1: per_sprite.iter().map(|s| s.alpha_l1).sum::<f64>() / k as f64,
        assignment: sigma,
        per_sprite,
    })
}

/// Frame and sprite errors of `pred` against the ground-truth composition.
pub fn evaluate(pred: &Composition, gt: &Composition) -> Result<MetricReport> {
    let s = sprite_error(pred, gt)?;
    let frame_l1 = video_l1(&render_video(pred)?, &render_video(gt)?)?;
    Ok(MetricReport {
        frame_l1,
        sprite_rgb_l1: s.rgb_l1,
        sprite_alpha_l1: s.alpha_l1,
        assignment: s.assignment,
        per_sprite: s.per_sprite,
    })
}

/// Convergence rule over sprite errors indexed by iteration: converged at
/// the latest iteration `i` once the best value was last improved at some
/// `j ≤ 0.75·i`. Returns the verdict and the best iteration.
pub fn converged(errors: &[f64]) -> Option<(bool, usize)> {
    let i = errors.len().checked_sub(1)?;
    let mut best = 0;
    for (t, &e) in errors.iter().enumerate() {
        if e < errors[best] {
            best = t;
        }
    }
    Some((i > 0 && 4 * best <= 3 * i, best))
}

#[cfg(test)]
mod tests;
