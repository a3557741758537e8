use crate::error::{Error, Result};
use crate::model::{AffineParams, AnimationTrack, Composition, Sprite, Texture, TrackEntry};
use crate::prior::{code_from_texture, PriorArch, PriorParams, CODE_EPS};
use crate::tensorgrad::{sigmoid, Real, Tensor};

/// Every optimized quantity. Sprite index 0 is the background.
///
/// With a prior, `codes` are the network inputs in `[ε, 1−ε]`; without
/// one they are per-texel logits of the texture itself.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub theta: Vec<Tensor<T>>,
    pub codes: Vec<Tensor<T>>,
    /// Per sprite, `T × 6` affine entries frame-major.
    pub affines: Vec<Vec<T>>,
    /// Per sprite, one opacity per frame.
    pub opacities: Vec<Vec<T>>,
}

impl<T: Real> Params<T> {
    pub fn num_sprites(&self) -> usize {
        self.codes.len()
    }

    pub fn num_frames(&self) -> usize {
        self.opacities.first().map_or(0, Vec::len)
    }

    pub fn affine(&self, k: usize, t: usize) -> [T; 6] {
        self.affines[k][t * 6..t * 6 + 6]
            .try_into()
            .expect("six entries")
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        let tensor = |x: &Tensor<T>| {
            Tensor::new(
                x.shape(),
                x.data().iter().map(|v| U::lit(v.f64())).collect(),
            )
            .expect("same shape")
        };
        let flat = |x: &Vec<T>| x.iter().map(|v| U::lit(v.f64())).collect();
        Params {
            theta: self.theta.iter().map(tensor).collect(),
            codes: self.codes.iter().map(tensor).collect(),
            affines: self.affines.iter().map(flat).collect(),
            opacities: self.opacities.iter().map(flat).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            theta: self
                .theta
                .iter()
                .map(|x| Tensor::zeros(x.shape()))
                .collect(),
            codes: self
                .codes
                .iter()
                .map(|x| Tensor::zeros(x.shape()))
                .collect(),
            affines: self
                .affines
                .iter()
                .map(|x| vec![T::zero(); x.len()])
                .collect(),
            opacities: self
                .opacities
                .iter()
                .map(|x| vec![T::zero(); x.len()])
                .collect(),
        }
    }

    /// Flat views in a fixed order: θ blocks, codes, affines, opacities.
    pub fn groups(&self) -> Vec<&[T]> {
        self.theta
            .iter()
            .map(Tensor::data)
            .chain(self.codes.iter().map(Tensor::data))
            .chain(self.affines.iter().map(Vec::as_slice))
            .chain(self.opacities.iter().map(Vec::as_slice))
            .collect()
    }

    pub fn groups_mut(&mut self) -> Vec<&mut [T]> {
        self.theta
            .iter_mut()
            .map(Tensor::data_mut)
            .chain(self.codes.iter_mut().map(Tensor::data_mut))
            .chain(self.affines.iter_mut().map(Vec::as_mut_slice))
            .chain(self.opacities.iter_mut().map(Vec::as_mut_slice))
            .collect()
    }

    /// Group indices of the background affine and opacity.
    pub fn background_motion_groups(&self) -> [usize; 2] {
        let k = self.num_sprites();
        let base = self.theta.len() + k;
        [base, base + k]
    }
}

/// Optimizer state: parameters plus the current back-to-front order of
/// the foreground sprites.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub arch: Option<PriorArch>,
    pub params: Params<f32>,
    /// Foreground sprite indices (1-based into `params`), back to front.
    pub order: Vec<usize>,
    pub canvas: (usize, usize),
    pub fps: f32,
    pub labels: Vec<Option<String>>,
}

fn logit(v: f32) -> f32 {
    let v = v.clamp(CODE_EPS, 1.0 - CODE_EPS);
    (v / (1.0 - v)).ln()
}

impl OptimState {
    /// Starts from `c` (background first). Textures become codes verbatim
    /// when a prior is given, otherwise texel logits.
    pub fn from_composition(c: &Composition, prior: Option<PriorParams>) -> Result<Self> {
        let k = c.num_sprites();
        if k < 2 {
            return Err(Error::SpriteCount { pred: k, gt: 2 });
        }
        let size = (c.sprites[0].texture.height(), c.sprites[0].texture.width());
        let mut codes = Vec::with_capacity(k);
        for s in &c.sprites {
            let tex = &s.texture;
            if (tex.height(), tex.width()) != size {
                return Err(Error::Shape(
                    "all sprite textures must share one size".into(),
                ));
            }
            let planar = tex.to_planar();
            codes.push(match prior {
                Some(_) => code_from_texture(&planar, size.0, size.1)?,
                None => Tensor::new(
                    &[4, size.0, size.1],
                    planar.iter().map(|&v| logit(v)).collect(),
                )?,
            });
        }
        let (arch, theta) = match prior {
            Some(p) => (Some(*p.arch()), p.blocks().to_vec()),
            None => (None, Vec::new()),
        };
        Ok(Self {
            arch,
            params: Params {
                theta,
                codes,
                affines: c
                    .sprites
                    .iter()
                    .map(|s| s.track.frames.iter().flat_map(|e| e.affine.0).collect())
                    .collect(),
                opacities: c
                    .sprites
                    .iter()
                    .map(|s| s.track.frames.iter().map(|e| e.opacity).collect())
                    .collect(),
            },
            order: (1..k).collect(),
            canvas: (c.canvas_height, c.canvas_width),
            fps: c.fps,
            labels: c.sprites.iter().map(|s| s.label.clone()).collect(),
        })
    }

    pub fn prior(&self) -> Option<Result<PriorParams>> {
        self.arch
            .map(|a| PriorParams::from_blocks(a, self.params.theta.clone()))
    }

    /// Planar `[4, H, W]` textures of every sprite.
    pub fn textures(&self) -> Result<Vec<Tensor<f32>>> {
        match self.prior() {
            Some(p) => {
                let p = p?;
                self.params.codes.iter().map(|z| p.texture(z)).collect()
            }
            None => Ok(self
                .params
                .codes
                .iter()
                .map(|z| {
                    Tensor::new(z.shape(), z.data().iter().map(|&v| sigmoid(v)).collect())
                        .expect("same shape")
                })
                .collect()),
        }
    }

    /// Materializes the composition in the current rendering order.
    pub fn to_composition(&self) -> Result<Composition> {
        let textures = self.textures()?;
        let nt = self.params.num_frames();
        let sprite = |k: usize| -> Result<Sprite> {
            let t = &textures[k];
            let frames = (0..nt)
                .map(|f| TrackEntry {
                    affine: AffineParams(self.params.affine(k, f)),
                    opacity: self.params.opacities[k][f],
                })
                .collect();
            Ok(Sprite {
                texture: Texture::from_planar(t.shape()[2], t.shape()[1], t.data())?,
                track: AnimationTrack { frames },
                label: self.labels[k].clone(),
            })
        };
        let sprites = std::iter::once(0)
            .chain(self.order.iter().copied())
            .map(sprite)
            .collect::<Result<Vec<_>>>()?;
        Ok(Composition {
            sprites,
            canvas_width: self.canvas.1,
            canvas_height: self.canvas.0,
            fps: self.fps,
        })
    }
}
