use rayon::prelude::*;

use super::params::{OptimState, Params};
use crate::error::{Error, Result};
use crate::prior::{texture_forward, PriorArch};
use crate::render::{warp, LayerInput};
use crate::tensorgrad::{GradError, Graph, Real, Tensor, Var};

/// Graph variables for a full [`Params`]: one affine and one opacity leaf
/// per sprite and frame.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub theta: Vec<Var>,
    pub codes: Vec<Var>,
    pub affines: Vec<Vec<Var>>,
    pub opacities: Vec<Vec<Var>>,
}

impl ParamVars {
    /// Registers every parameter as a trainable leaf.
    pub fn register<T: Real>(g: &mut Graph<T>, p: &Params<T>) -> Result<Self, GradError> {
        let nt = p.num_frames();
        let mut affines = Vec::new();
        let mut opacities = Vec::new();
        for k in 0..p.num_sprites() {
            let mut a = Vec::with_capacity(nt);
            let mut o = Vec::with_capacity(nt);
            for t in 0..nt {
                a.push(g.param(Tensor::new(&[6], p.affine(k, t).to_vec())?));
                o.push(g.param(Tensor::scalar(p.opacities[k][t])));
            }
            affines.push(a);
            opacities.push(o);
        }
        Ok(Self {
            theta: p.theta.iter().map(|x| g.param(x.clone())).collect(),
            codes: p.codes.iter().map(|x| g.param(x.clone())).collect(),
            affines,
            opacities,
        })
    }
}

/// Texture variables from codes: through the prior when `arch` is given,
/// otherwise a texel-wise sigmoid.
pub fn texture_vars<T: Real>(
    g: &mut Graph<T>,
    arch: Option<&PriorArch>,
    theta: &[Var],
    codes: &[Var],
) -> Result<Vec<Var>, GradError> {
    codes
        .iter()
        .map(|&z| match arch {
            Some(a) => texture_forward(g, a, theta, z),
            None => Ok(g.sigmoid(z)),
        })
        .collect()
}

/// Squared error of one rendered frame against `target`, times `scale`.
fn frame_sse<T: Real>(
    g: &mut Graph<T>,
    render: Var,
    target: Var,
    scale: T,
) -> Result<Var, GradError> {
    let d = g.sub(render, target)?;
    let sq = g.square(d);
    let s = g.sum(sq);
    Ok(g.scale(s, scale))
}

/// Blends warped `layers` over `base`, or over black when there is none.
fn stack<T: Real>(g: &mut Graph<T>, base: Option<Var>, layers: &[Var]) -> Result<Var, GradError> {
    match base {
        Some(mut b) => {
            for &l in layers {
                b = g.blend_over(l, b)?;
            }
            Ok(b)
        }
        None => crate::render::composite(g, layers),
    }
}

fn check_frames(frames: &[usize], nt: usize) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::Config("loss needs at least one frame".into()));
    }
    if let Some(&t) = frames.iter().find(|&&t| t >= nt) {
        return Err(Error::Config(format!("frame {} beyond {nt}", t + 1)));
    }
    Ok(())
}

/// Records the mean squared reconstruction error over `frames` as a single
/// graph. `targets` are planar `[3, H, W]` frames.
#[allow(clippy::too_many_arguments)]
pub fn reconstruction_loss<T: Real>(
    g: &mut Graph<T>,
    vars: &ParamVars,
    arch: Option<&PriorArch>,
    order: &[usize],
    targets: &[Tensor<T>],
    frames: &[usize],
) -> Result<Var> {
    check_frames(frames, targets.len())?;
    let shape = targets[0].shape().to_vec();
    let (h, w) = (shape[1], shape[2]);
    let textures = texture_vars(g, arch, &vars.theta, &vars.codes)?;
    let scale = T::lit(1.0 / (frames.len() * 3 * h * w) as f64);
    let mut total: Option<Var> = None;
    for &t in frames {
        let mut layers = Vec::with_capacity(order.len() + 1);
        for k in std::iter::once(0).chain(order.iter().copied()) {
            layers.push(warp(
                g,
                textures[k],
                vars.affines[k][t],
                vars.opacities[k][t],
                h,
                w,
            )?);
        }
        let render = stack(g, None, &layers)?;
        let y = g.constant(targets[t].clone());
        let l = frame_sse(g, render, y, scale)?;
        total = Some(match total {
            Some(acc) => g.add(acc, l)?,
            None => l,
        });
    }
    Ok(total.expect("frames checked"))
}

/// The texture half of the split graph: prior (or sigmoid) evaluation of
/// every code, plus the frozen background composited once. Each texture
/// lives in its own graph so codes can be evaluated and differentiated in
/// parallel; prior weight gradients are summed in sprite order.
pub struct TexturePass {
    parts: Vec<TextureGraph>,
    base: Option<Var>,
}

/// θ block gradients and the code gradient of one texture graph.
type PartGrads = (Vec<Option<Tensor<f32>>>, Option<Tensor<f32>>);

struct TextureGraph {
    graph: Graph<f32>,
    theta: Vec<Var>,
    code: Var,
    texture: Var,
}

impl TexturePass {
    pub fn new(state: &OptimState, freeze_background: bool) -> Result<Self> {
        let p = &state.params;
        let (h, w) = state.canvas;
        let mut parts = p
            .codes
            .par_iter()
            .map(|z| -> Result<TextureGraph> {
                let mut g = Graph::new();
                let theta: Vec<Var> = p.theta.iter().map(|x| g.param(x.clone())).collect();
                let code = g.param(z.clone());
                let texture = texture_vars(&mut g, state.arch.as_ref(), &theta, &[code])?[0];
                Ok(TextureGraph {
                    graph: g,
                    theta,
                    code,
                    texture,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let base = if freeze_background {
            let bg = &mut parts[0];
            let g = &mut bg.graph;
            let a = g.constant(Tensor::new(&[6], p.affine(0, 0).to_vec())?);
            let o = g.constant(Tensor::scalar(p.opacities[0][0]));
            let layer = warp(g, bg.texture, a, o, h, w)?;
            Some(crate::render::composite(g, &[layer])?)
        } else {
            None
        };
        Ok(Self { parts, base })
    }

    pub fn textures(&self) -> Vec<&Tensor<f32>> {
        self.parts
            .iter()
            .map(|t| t.graph.value(t.texture))
            .collect()
    }

    /// Loss and gradients over `frames`: every frame in its own graph,
    /// texture gradients summed in frame order and pushed back through the
    /// prior.
    pub fn gradients(
        self,
        state: &OptimState,
        targets: &[Tensor<f32>],
        frames: &[usize],
    ) -> Result<(f64, Params<f32>)> {
        let p = &state.params;
        check_frames(frames, targets.len())?;
        let (h, w) = state.canvas;
        let scale = 1.0 / (frames.len() * 3 * h * w) as f32;
        let tex_values = self.textures();
        let base_value = self.base.map(|b| self.parts[0].graph.value(b));
        let per_frame = frames
            .par_iter()
            .map(|&t| frame_grad(state, &tex_values, base_value, &targets[t], t, scale))
            .collect::<Result<Vec<_>>>()?;

        let mut grads = p.zeros_like();
        let mut tex_grads: Vec<Tensor<f32>> = tex_values
            .iter()
            .map(|x| Tensor::zeros(x.shape()))
            .collect();
        let mut base_grad = base_value.map(|b| Tensor::zeros(b.shape()));
        let mut loss = 0.0f64;
        for (&t, fg) in frames.iter().zip(per_frame) {
            loss += fg.loss;
            for (k, tg) in fg.textures.into_iter().enumerate() {
                if let Some(tg) = tg {
                    add_into(tex_grads[k].data_mut(), tg.data());
                }
            }
            if let (Some(acc), Some(bg)) = (base_grad.as_mut(), fg.base) {
                add_into(acc.data_mut(), bg.data());
            }
            for k in 0..p.num_sprites() {
                if let Some(a) = fg.affines[k] {
                    add_into(&mut grads.affines[k][t * 6..t * 6 + 6], &a);
                }
                if let Some(o) = fg.opacities[k] {
                    grads.opacities[k][t] += o;
                }
            }
        }

        let base = self.base;
        let back = self
            .parts
            .into_par_iter()
            .zip(tex_grads)
            .enumerate()
            .map(|(k, (mut part, tg))| -> Result<PartGrads> {
                let mut seeds = vec![(part.texture, tg)];
                if k == 0 {
                    if let (Some(b), Some(bg)) = (base, base_grad.clone()) {
                        seeds.push((b, bg));
                    }
                }
                let mut back = part.graph.backward_from(seeds)?;
                let theta = part.theta.iter().map(|&v| back.take(v)).collect();
                Ok((theta, back.take(part.code)))
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, (theta, code)) in back.into_iter().enumerate() {
            for (dst, x) in grads.theta.iter_mut().zip(theta) {
                if let Some(x) = x {
                    add_into(dst.data_mut(), x.data());
                }
            }
            if let Some(x) = code {
                grads.codes[k] = x;
            }
        }
        Ok((loss, grads))
    }
}

/// Loss and gradients at f32 through the split graph.
pub fn loss_and_grad(
    state: &OptimState,
    targets: &[Tensor<f32>],
    frames: &[usize],
    freeze_background: bool,
) -> Result<(f64, Params<f32>)> {
    TexturePass::new(state, freeze_background)?.gradients(state, targets, frames)
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

struct FrameGrad {
    loss: f64,
    textures: Vec<Option<Tensor<f32>>>,
    base: Option<Tensor<f32>>,
    affines: Vec<Option<[f32; 6]>>,
    opacities: Vec<Option<f32>>,
}

fn frame_grad(
    state: &OptimState,
    textures: &[&Tensor<f32>],
    base: Option<&Tensor<f32>>,
    target: &Tensor<f32>,
    t: usize,
    scale: f32,
) -> Result<FrameGrad> {
    let p = &state.params;
    let (h, w) = state.canvas;
    let k = p.num_sprites();
    let mut g = Graph::new();
    let mut tex_vars = vec![None; k];
    let mut aff_vars = vec![None; k];
    let mut op_vars = vec![None; k];
    let base_var = base.map(|b| g.param(b.clone()));
    let sprites: Vec<usize> = if base.is_some() {
        state.order.clone()
    } else {
        std::iter::once(0)
            .chain(state.order.iter().copied())
            .collect()
    };
    let mut layers = Vec::with_capacity(sprites.len());
    for &s in &sprites {
        let tv = g.param(textures[s].clone());
        let av = g.param(Tensor::new(&[6], p.affine(s, t).to_vec())?);
        let ov = g.param(Tensor::scalar(p.opacities[s][t]));
        layers.push(warp(&mut g, tv, av, ov, h, w)?);
        tex_vars[s] = Some(tv);
        aff_vars[s] = Some(av);
        op_vars[s] = Some(ov);
    }
    let render = stack(&mut g, base_var, &layers)?;
    let y = g.constant(target.clone());
    let l = frame_sse(&mut g, render, y, scale)?;
    let loss = g.value(l).item().into();
    let mut back = g.backward(l)?;
    let mut take = |v: Option<Var>| v.and_then(|v| back.take(v));
    Ok(FrameGrad {
        loss,
        textures: tex_vars.iter().map(|&v| take(v)).collect(),
        base: take(base_var),
        affines: aff_vars
            .iter()
            .map(|&v| take(v).map(|x| x.data().try_into().expect("six entries")))
            .collect(),
        opacities: op_vars.iter().map(|&v| take(v).map(|x| x.item())).collect(),
    })
}

/// Forward-only loss of every candidate order on `frames`. Each sprite is
/// warped once per frame and only the blending is repeated per order.
pub fn order_losses(
    state: &OptimState,
    textures: &[&Tensor<f32>],
    targets: &[Tensor<f32>],
    frames: &[usize],
    candidates: &[Vec<usize>],
) -> Result<Vec<f64>> {
    let p = &state.params;
    let (h, w) = state.canvas;
    let n = h * w;
    let per_frame: Vec<Vec<f64>> = frames
        .par_iter()
        .map(|&t| -> Result<Vec<f64>> {
            let warped = (0..p.num_sprites())
                .map(|k| {
                    let layer = LayerInput {
                        texture: textures[k],
                        affine: p.affine(k, t),
                        opacity: p.opacities[k][t],
                    };
                    crate::render::warp_tensor(&layer, h, w)
                })
                .collect::<Result<Vec<_>>>()?;
            let bg = &warped[0];
            let base: Vec<f32> = (0..3 * n)
                .map(|i| bg.data()[i] * bg.data()[3 * n + i % n])
                .collect();
            let y = targets[t].data();
            Ok(candidates
                .iter()
                .map(|order| {
                    let mut out = base.clone();
                    for &k in order {
                        let l = warped[k].data();
                        for i in 0..n {
                            let a = l[3 * n + i];
                            for c in 0..3 {
                                let j = c * n + i;
                                out[j] = l[j] * a + out[j] * (1.0 - a);
                            }
                        }
                    }
                    out.iter()
                        .zip(y)
                        .map(|(a, b)| f64::from(a - b).powi(2))
                        .sum::<f64>()
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let denom = (frames.len() * 3 * n) as f64;
    Ok((0..candidates.len())
        .map(|c| per_frame.iter().map(|f| f[c]).sum::<f64>() / denom)
        .collect())
}
