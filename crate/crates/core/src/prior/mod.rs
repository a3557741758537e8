//! Texture prior: a small encoder-decoder with skip connections whose
//! parameters are shared by every sprite.
//!
//! The network predicts a residual in logit space on top of the code, so
//! `texture = sigmoid(logit(z) + h(z))`. The output convolution starts at
//! zero, which makes the initial texture equal to the code.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensorgrad::{GradError, Graph, Real, Tensor, Var};

pub use checkpoint::{load_params, save_params};

/// Codes are kept inside `[CODE_EPS, 1 - CODE_EPS]` so their logit is finite.
pub const CODE_EPS: f32 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorArch {
    /// Number of 2× downsampling stages.
    pub levels: usize,
    /// Feature width at every level.
    pub channels: usize,
    /// Negative slope of the hidden activations.
    pub slope: f32,
}

impl Default for PriorArch {
    fn default() -> Self {
        Self {
            levels: 3,
            channels: 32,
            slope: 0.2,
        }
    }
}

impl PriorArch {
    pub fn check(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("prior needs at least one level".into()));
        }
        if self.channels == 0 {
            return Err(Error::Config("prior needs at least one channel".into()));
        }
        if !(self.slope.is_finite() && self.slope >= 0.0) {
            return Err(Error::Config(format!("invalid leaky slope {}", self.slope)));
        }
        Ok(())
    }

    /// Texture side lengths must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.levels
    }

    /// Names and shapes of every parameter block, in storage order.
    pub fn blocks(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.channels;
        let mut out = vec![
            ("stem.w".to_string(), vec![c, 4, 3, 3]),
            ("stem.b".to_string(), vec![c]),
        ];
        for l in 1..=self.levels {
            out.push((format!("down{l}.w"), vec![c, c, 3, 3]));
            out.push((format!("down{l}.b"), vec![c]));
        }
        for l in (1..=self.levels).rev() {
            out.push((format!("up{l}.w"), vec![c, 2 * c, 3, 3]));
            out.push((format!("up{l}.b"), vec![c]));
        }
        out.push(("head.w".to_string(), vec![4, c, 1, 1]));
        out.push(("head.b".to_string(), vec![4]));
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Shared prior parameters θ.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorParams {
    arch: PriorArch,
    blocks: Vec<Tensor<f32>>,
}

impl PriorParams {
    pub fn from_blocks(arch: PriorArch, blocks: Vec<Tensor<f32>>) -> Result<Self> {
        arch.check()?;
        let shapes = arch.blocks();
        if shapes.len() != blocks.len() {
            return Err(Error::Shape("prior block count".into()));
        }
        for ((name, shape), b) in shapes.iter().zip(&blocks) {
            if b.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "prior block {name}: expected {shape:?}, got {:?}",
                    b.shape()
                )));
            }
            if !b.is_finite() {
                return Err(Error::Shape(format!("prior block {name} is not finite")));
            }
        }
        Ok(Self { arch, blocks })
    }

    pub fn arch(&self) -> &PriorArch {
        &self.arch
    }

    pub fn blocks(&self) -> &[Tensor<f32>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.blocks
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.numel()).sum()
    }

    /// Forward-only texture for one code.
    pub fn texture(&self, z: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let theta: Vec<Var> = self.blocks.iter().map(|b| g.constant(b.clone())).collect();
        let zv = g.constant(z.clone());
        let out = texture_forward(&mut g, &self.arch, &theta, zv)?;
        Ok(g.value(out).clone())
    }
}

/// Seeded initialization: weights and biases uniform in `±1/sqrt(fan_in)`,
/// output layer zero.
pub fn init_prior(seed: u64, arch: PriorArch) -> Result<PriorParams> {
    arch.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = arch.blocks();
    let last = shapes.len() - 2;
    let mut blocks = Vec::with_capacity(shapes.len());
    let mut bound = 0.0f32;
    for (i, (_, shape)) in shapes.iter().enumerate() {
        if shape.len() == 4 {
            bound = 1.0 / ((shape[1] * shape[2] * shape[3]) as f32).sqrt();
        }
        let n: usize = shape.iter().product();
        let data = if i >= last {
            vec![0.0; n]
        } else {
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        blocks.push(Tensor::new(shape, data)?);
    }
    PriorParams::from_blocks(arch, blocks)
}

/// Records `f_θ(z)` for a `[4, H, W]` code. `theta` holds one variable per
/// block of [`PriorArch::blocks`].
pub fn texture_forward<T: Real>(
    g: &mut Graph<T>,
    arch: &PriorArch,
    theta: &[Var],
    z: Var,
) -> Result<Var, GradError> {
    let (c, h, w) = match g.shape(z) {
        &[c, h, w] => (c, h, w),
        s => return Err(GradError::Shape(format!("code shape {s:?}"))),
    };
    let d = arch.divisor();
    if c != 4 || h % d != 0 || w % d != 0 || h == 0 || w == 0 {
        return Err(GradError::Shape(format!(
            "code {c}x{h}x{w} must have 4 channels and sides divisible by {d}"
        )));
    }
    if theta.len() != 4 * arch.levels + 4 {
        return Err(GradError::Shape("prior parameter count".into()));
    }
    let slope = T::lit(f64::from(arch.slope));
    let mut p = theta.iter().copied();
    let mut next = || p.next().expect("length checked");

    let (sw, sb) = (next(), next());
    let stem = g.conv2d(z, sw, Some(sb), 1, 1)?;
    let mut skips = vec![g.leaky_relu(stem, slope)];
    for _ in 0..arch.levels {
        let (dw, db) = (next(), next());
        let down = g.resize_half(*skips.last().expect("nonempty"))?;
        let conv = g.conv2d(down, dw, Some(db), 1, 1)?;
        skips.push(g.leaky_relu(conv, slope));
    }
    let mut x = skips.pop().expect("nonempty");
    while let Some(skip) = skips.pop() {
        let (uw, ub) = (next(), next());
        let up = g.resize_double(x)?;
        let cat = g.concat(&[up, skip])?;
        let conv = g.conv2d(cat, uw, Some(ub), 1, 1)?;
        x = g.leaky_relu(conv, slope);
    }
    let (hw, hb) = (next(), next());
    let residual = g.conv2d(x, hw, Some(hb), 1, 0)?;
    let base = g.logit(z, T::lit(f64::from(CODE_EPS)));
    let pre = g.add(base, residual)?;
    Ok(g.sigmoid(pre))
}

/// Clamps a texture into the code range.
pub fn code_from_texture(planar: &[f32], h: usize, w: usize) -> Result<Tensor<f32>> {
    let data = planar
        .iter()
        .map(|v| v.clamp(CODE_EPS, 1.0 - CODE_EPS))
        .collect();
    Ok(Tensor::new(&[4, h, w], data)?)
}
