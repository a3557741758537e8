//! Joint optimization of textures, prior weights, codes, affines and
//! opacities against the input video, with a warm-up search over the
//! rendering order.

mod adam;
mod loss;
mod order;
mod params;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig};
pub use loss::{
    loss_and_grad, order_losses, reconstruction_loss, texture_vars, ParamVars, TexturePass,
};
pub use order::{permutations, search_order, stratified_frames, EXHAUSTIVE_MAX};
pub use params::{OptimState, Params};

use crate::error::{Error, Result};
use crate::init::{initialize, InitConfig};
use crate::model::{BoxAnnotation, Composition, Video};
use crate::prior::{init_prior, PriorArch, CODE_EPS};
use crate::render::rgb_to_planar;
use crate::tensorgrad::Tensor;
use crate::track::{track_all, TrackConfig, TrackResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f32,
    /// Warm-up length; the rendering order is searched at every step up to
    /// and including this one, then frozen. Zero disables the search.
    pub n_warm: usize,
    pub max_iters: usize,
    pub adam: AdamConfig,
    /// Frames per step, all when unset.
    pub frame_batch: Option<usize>,
    pub seed: u64,
    pub freeze_background: bool,
    pub use_prior: bool,
    /// Stop when the mean loss of the last `plateau_window` steps improves
    /// on the window before it by less than this fraction. Zero disables.
    pub plateau_tol: f64,
    pub plateau_window: usize,
    /// Frames scored per candidate order during warm-up.
    pub order_frames: usize,
    pub prior: PriorArch,
    pub init: InitConfig,
    pub track: TrackConfig,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            n_warm: 100,
            max_iters: 2000,
            adam: AdamConfig::default(),
            frame_batch: None,
            seed: 0,
            freeze_background: true,
            use_prior: true,
            plateau_tol: 0.0,
            plateau_window: 200,
            order_frames: 8,
            prior: PriorArch::default(),
            init: InitConfig::default(),
            track: TrackConfig::default(),
        }
    }
}

impl OptimConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        let a = &self.adam;
        if !(a.beta1 > 0.0 && a.beta1 < 1.0 && a.beta2 > 0.0 && a.beta2 < 1.0) {
            return bad("adam betas must lie in (0, 1)");
        }
        if a.eps.is_nan() || a.eps <= 0.0 {
            return bad("adam eps must be positive");
        }
        if self.frame_batch == Some(0) {
            return bad("frame_batch must be positive");
        }
        if self.order_frames == 0 {
            return bad("order_frames must be positive");
        }
        if self.plateau_tol.is_nan()
            || self.plateau_tol < 0.0
            || (self.plateau_tol > 0.0 && self.plateau_window == 0)
        {
            return bad("plateau settings invalid");
        }
        if !self.init.texture_size.is_multiple_of(self.prior.divisor()) && self.use_prior {
            return bad("texture size must be divisible by 2^levels");
        }
        self.prior.check()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderChange {
    pub iteration: usize,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxIters,
    Plateau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<IterationRecord>,
    pub order_changes: Vec<OrderChange>,
    pub snapshots: Vec<Snapshot>,
    pub stop: StopReason,
}

impl History {
    /// `iteration,loss,wall_ms` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,loss,wall_ms\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{:.3}", r.iteration, r.loss, r.wall_ms);
        }
        s
    }

    /// Everything except wall-clock timings, for reproducibility checks.
    pub fn without_timing(&self) -> History {
        let mut h = self.clone();
        for r in &mut h.records {
            r.wall_ms = 0.0;
        }
        h
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Video frames as planar `[3, H, W]` tensors.
pub fn video_targets(video: &Video) -> Result<Vec<Tensor<f32>>> {
    let (h, w) = (video.height, video.width);
    video
        .frames
        .iter()
        .map(|f| Ok(Tensor::new(&[3, h, w], rgb_to_planar(f, h, w))?))
        .collect()
}

/// Tracker-driven initialization wrapped into an optimizer state.
pub fn initial_state(video: &Video, track: &TrackResult, cfg: &OptimConfig) -> Result<OptimState> {
    cfg.check()?;
    let init = initialize(video, track, &cfg.init)?;
    let prior = if cfg.use_prior {
        Some(init_prior(cfg.seed, cfg.prior)?)
    } else {
        None
    };
    OptimState::from_composition(&init, prior)
}

fn frames_for_step(cfg: &OptimConfig, nt: usize, iteration: usize) -> Vec<usize> {
    match cfg.frame_batch {
        Some(b) if b < nt => {
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ (iteration as u64).wrapping_mul(0xA24B_AED4_963E_E407),
            );
            let mut f = rand::seq::index::sample(&mut rng, nt, b).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..nt).collect(),
    }
}

fn plateaued(records: &[IterationRecord], window: usize, tol: f64) -> bool {
    let n = records.len();
    if tol <= 0.0 || n < 2 * window {
        return false;
    }
    let mean = |r: &[IterationRecord]| r.iter().map(|x| x.loss).sum::<f64>() / r.len() as f64;
    let prev = mean(&records[n - 2 * window..n - window]);
    let cur = mean(&records[n - window..]);
    prev <= 0.0 || (prev - cur) / prev < tol
}

/// Iterations between info-level progress lines; the rest log at debug.
const LOG_EVERY: usize = 50;

/// Observer called after every step; returned metrics are stored as a
/// snapshot.
pub type Observer<'a> = dyn FnMut(usize, &OptimState) -> Result<Option<BTreeMap<String, f64>>> + 'a;

/// Runs the optimization loop on `state` in place.
pub fn run(
    state: &mut OptimState,
    video: &Video,
    cfg: &OptimConfig,
    observer: Option<&mut Observer>,
) -> Result<History> {
    cfg.check()?;
    let targets = video_targets(video)?;
    let nt = targets.len();
    if state.params.num_frames() != nt || state.canvas != (video.height, video.width) {
        return Err(Error::Shape("state does not match the video".into()));
    }
    let mut observer = observer;
    let mut m = state.params.zeros_like();
    let mut v = state.params.zeros_like();
    let frozen = if cfg.freeze_background {
        state.params.background_motion_groups().to_vec()
    } else {
        Vec::new()
    };
    let mut history = History {
        records: Vec::with_capacity(cfg.max_iters),
        order_changes: Vec::new(),
        snapshots: Vec::new(),
        stop: StopReason::MaxIters,
    };
    let search_frames = stratified_frames(nt, cfg.order_frames);
    let all_frames: Vec<usize> = (0..nt).collect();
    for i in 0..cfg.max_iters {
        let start = Instant::now();
        let pass = TexturePass::new(state, cfg.freeze_background)?;
        if cfg.n_warm > 0 && i <= cfg.n_warm {
            let frames = if i == cfg.n_warm {
                &all_frames
            } else {
                &search_frames
            };
            let next = search_order(state, &pass.textures(), &targets, frames)?;
            if next != state.order {
                log::info!("iteration={i} order {:?} -> {:?}", state.order, next);
                history.order_changes.push(OrderChange {
                    iteration: i,
                    from: state.order.clone(),
                    to: next.clone(),
                });
                state.order = next;
            }
        }
        let frames = frames_for_step(cfg, nt, i);
        let (loss, grads) = pass.gradients(state, &targets, &frames)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss".into(),
                iteration: i,
            });
        }
        let g = grads.groups();
        let mut p = state.params.groups_mut();
        let mut mg = m.groups_mut();
        let mut vg = v.groups_mut();
        for j in 0..g.len() {
            if frozen.contains(&j) {
                continue;
            }
            adam_step(p[j], g[j], mg[j], vg[j], &cfg.adam, cfg.lr, i as u64 + 1).map_err(|e| {
                match e {
                    Error::NonFinite { what, .. } => Error::NonFinite { what, iteration: i },
                    e => e,
                }
            })?;
        }
        if state.arch.is_some() {
            for z in &mut state.params.codes {
                for x in z.data_mut() {
                    *x = x.clamp(CODE_EPS, 1.0 - CODE_EPS);
                }
            }
        }
        for o in &mut state.params.opacities {
            for x in o.iter_mut() {
                *x = x.clamp(0.0, 1.0);
            }
        }
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        if i % LOG_EVERY == 0 || i + 1 == cfg.max_iters {
            log::info!("iteration={i} loss={loss:.6e} wall_ms={wall_ms:.1}");
        } else {
            log::debug!("iteration={i} loss={loss:.6e} wall_ms={wall_ms:.1}");
        }
        history.records.push(IterationRecord {
            iteration: i,
            loss,
            wall_ms,
        });
        if let Some(obs) = observer.as_deref_mut() {
            if let Some(metrics) = obs(i, state)? {
                history.snapshots.push(Snapshot {
                    iteration: i,
                    metrics,
                });
            }
        }
        if plateaued(&history.records, cfg.plateau_window, cfg.plateau_tol) {
            history.stop = StopReason::Plateau;
            break;
        }
    }
    Ok(history)
}

/// Full pipeline from prompts: track, initialize, optimize.
pub fn optimize(
    video: &Video,
    annotations: &[BoxAnnotation],
    cfg: &OptimConfig,
) -> Result<(Composition, History)> {
    cfg.check()?;
    let track = track_all(video, annotations, &cfg.track)?;
    optimize_tracked(video, &track, cfg, None)
}

/// Pipeline from an existing tracking result, such as external masks.
pub fn optimize_tracked(
    video: &Video,
    track: &TrackResult,
    cfg: &OptimConfig,
    observer: Option<&mut Observer>,
) -> Result<(Composition, History)> {
    let mut state = initial_state(video, track, cfg)?;
    let history = run(&mut state, video, cfg, observer)?;
    Ok((state.to_composition()?, history))
}
