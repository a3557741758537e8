//! Independent scalar reference implementations shared by integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Planar RGBA texture in f64.
#[derive(Clone, Debug)]
pub struct RefTexture {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl RefTexture {
    fn texel(&self, c: usize, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            0.0
        } else {
            self.data[c * self.h * self.w + y as usize * self.w + x as usize]
        }
    }
}

#[derive(Clone, Debug)]
pub struct RefLayer {
    pub tex: RefTexture,
    pub affine: [f64; 6],
    pub opacity: f64,
}

/// Bilinear RGBA lookup at normalized texture coordinates, transparent
/// outside the texture.
pub fn sample(tex: &RefTexture, s: f64, t: f64) -> [f64; 4] {
    let x = ((s + 1.0) * tex.w as f64 - 1.0) / 2.0;
    let y = ((t + 1.0) * tex.h as f64 - 1.0) / 2.0;
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut out = [0.0; 4];
    for (c, o) in out.iter_mut().enumerate() {
        *o = tex.texel(c, x0, y0) * (1.0 - fx) * (1.0 - fy)
            + tex.texel(c, x0 + 1, y0) * fx * (1.0 - fy)
            + tex.texel(c, x0, y0 + 1) * (1.0 - fx) * fy
            + tex.texel(c, x0 + 1, y0 + 1) * fx * fy;
    }
    out
}

/// RGBA of one layer at canvas pixel `(i, j)`, opacity applied.
pub fn layer_pixel(l: &RefLayer, i: usize, j: usize, h: usize, w: usize) -> [f64; 4] {
    let u = (2 * j + 1) as f64 / w as f64 - 1.0;
    let v = (2 * i + 1) as f64 / h as f64 - 1.0;
    let a = l.affine;
    let mut px = sample(
        &l.tex,
        a[0] * u + a[1] * v + a[2],
        a[3] * u + a[4] * v + a[5],
    );
    px[3] *= l.opacity;
    px
}

/// Per-pixel recursive source-over compositing, planar `[3, h, w]`.
pub fn composite(layers: &[RefLayer], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; 3 * h * w];
    for i in 0..h {
        for j in 0..w {
            let mut b = [0.0f64; 3];
            for l in layers {
                let p = layer_pixel(l, i, j, h, w);
                for c in 0..3 {
                    b[c] = p[c] * p[3] + b[c] * (1.0 - p[3]);
                }
            }
            for c in 0..3 {
                out[c * h * w + i * w + j] = b[c];
            }
        }
    }
    out
}

pub fn random_texture(rng: &mut ChaCha8Rng, h: usize, w: usize, opaque: bool) -> RefTexture {
    let mut data: Vec<f64> = (0..4 * h * w).map(|_| rng.random::<f64>()).collect();
    if opaque {
        data[3 * h * w..].iter_mut().for_each(|v| *v = 1.0);
    }
    RefTexture { h, w, data }
}

/// Random similarity-plus-shear placement, roughly on canvas.
pub fn random_affine(rng: &mut ChaCha8Rng) -> [f64; 6] {
    let sx = rng.random_range(0.6..3.0);
    let sy = rng.random_range(0.6..3.0);
    let th = rng.random_range(-0.6..0.6f64);
    let shear = rng.random_range(-0.3..0.3);
    let (c, s) = (th.cos(), th.sin());
    [
        sx * c,
        -sx * s + shear,
        rng.random_range(-1.5..1.5),
        sy * s,
        sy * c,
        rng.random_range(-1.5..1.5),
    ]
}

/// Background plus `k - 1` random foreground layers.
pub fn random_scene(seed: u64, k: usize, tex: (usize, usize)) -> Vec<RefLayer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = vec![RefLayer {
        tex: random_texture(&mut rng, tex.0, tex.1, true),
        affine: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        opacity: 1.0,
    }];
    for _ in 1..k {
        layers.push(RefLayer {
            tex: random_texture(&mut rng, tex.0, tex.1, false),
            affine: random_affine(&mut rng),
            opacity: rng.random_range(0.0..=1.0),
        });
    }
    layers
}
