//! Differentiable back-to-front layered renderer.
//!
//! Each sprite is warped onto the canvas by its inverse affine, its sampled
//! alpha is scaled by the frame opacity, and layers are blended source-over
//! starting from the background composited over black.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Composition, Texture, TrackEntry, Video};
use crate::tensorgrad::{GradError, Graph, Real, Tensor, Var};

/// One warped sprite in canvas space, `[4, H, W]`, straight alpha with the
/// opacity already applied.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedLayer {
    pub rgba: Tensor<f32>,
}

/// Partially composited RGB frame, `[3, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Backdrop {
    pub rgb: Tensor<f32>,
}

/// Records the warp of `texture` (`[4, Ht, Wt]`) by `affine` (`[6]`) with
/// scalar `opacity` onto an `h × w` canvas.
pub fn warp<T: Real>(
    g: &mut Graph<T>,
    texture: Var,
    affine: Var,
    opacity: Var,
    h: usize,
    w: usize,
) -> Result<Var, GradError> {
    let grid = g.affine_grid(affine, h, w)?;
    let sampled = g.grid_sample(texture, grid)?;
    g.mul_channel(sampled, 3, opacity)
}

/// Records source-over compositing of warped layers, back to front. The
/// first layer is blended over black.
pub fn composite<T: Real>(g: &mut Graph<T>, layers: &[Var]) -> Result<Var, GradError> {
    let (&first, rest) = layers
        .split_first()
        .ok_or_else(|| GradError::Shape("no layers to composite".into()))?;
    let shape = g.shape(first).to_vec();
    if shape.len() != 3 {
        return Err(GradError::Shape(format!("layer shape {shape:?}")));
    }
    let black = g.constant(Tensor::zeros(&[3, shape[1], shape[2]]));
    let mut backdrop = g.blend_over(first, black)?;
    for &layer in rest {
        backdrop = g.blend_over(layer, backdrop)?;
    }
    Ok(backdrop)
}

/// A sprite at one frame, in planar tensor form.
#[derive(Clone, Copy, Debug)]
pub struct LayerInput<'a, T> {
    pub texture: &'a Tensor<T>,
    pub affine: [T; 6],
    pub opacity: T,
}

impl<'a> LayerInput<'a, f32> {
    pub fn new(texture: &'a Tensor<f32>, entry: &TrackEntry) -> Self {
        Self {
            texture,
            affine: entry.affine.0,
            opacity: entry.opacity,
        }
    }
}

fn warp_value<T: Real>(g: &mut Graph<T>, layer: &LayerInput<T>, h: usize, w: usize) -> Result<Var> {
    let tex = g.constant(layer.texture.clone());
    let a = g.constant(Tensor::new(&[6], layer.affine.to_vec())?);
    let o = g.constant(Tensor::scalar(layer.opacity));
    Ok(warp(g, tex, a, o, h, w)?)
}

/// Forward-only warp at any precision.
pub fn warp_tensor<T: Real>(layer: &LayerInput<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let v = warp_value(&mut g, layer, h, w)?;
    Ok(g.value(v).clone())
}

/// Forward-only composite of `layers` (back to front) at any precision.
pub fn render_layers<T: Real>(layers: &[LayerInput<T>], h: usize, w: usize) -> Result<Tensor<T>> {
    if layers.is_empty() {
        return Err(Error::Shape("render needs at least one sprite".into()));
    }
    let mut g = Graph::new();
    let vars = layers
        .iter()
        .map(|l| warp_value(&mut g, l, h, w))
        .collect::<Result<Vec<_>>>()?;
    let out = composite(&mut g, &vars)?;
    Ok(g.value(out).clone())
}

pub fn texture_tensor(tex: &Texture) -> Tensor<f32> {
    Tensor::new(&[4, tex.height(), tex.width()], tex.to_planar()).expect("texture shape")
}

// The forward-only renderers below keep f32 storage but sample and blend in
// f64, so their output is the exact composite rounded once.

fn texture_tensor_f64(tex: &Texture) -> Tensor<f64> {
    let data = tex.to_planar().into_iter().map(f64::from).collect();
    Tensor::new(&[4, tex.height(), tex.width()], data).expect("texture shape")
}

fn layer_f64<'a>(texture: &'a Tensor<f64>, entry: &TrackEntry) -> LayerInput<'a, f64> {
    LayerInput {
        texture,
        affine: entry.affine.0.map(f64::from),
        opacity: f64::from(entry.opacity),
    }
}

fn to_f32(t: &Tensor<f64>) -> Tensor<f32> {
    Tensor::new(t.shape(), t.to_f32_vec()).expect("same shape")
}

/// Warps one sprite without blending. `canvas` is `(height, width)`.
pub fn warp_sprite(tex: &Texture, entry: &TrackEntry, canvas: (usize, usize)) -> RenderedLayer {
    let t = texture_tensor_f64(tex);
    let rgba = warp_tensor(&layer_f64(&t, entry), canvas.0, canvas.1).expect("valid layer");
    RenderedLayer {
        rgba: to_f32(&rgba),
    }
}

/// The sprite alone on a transparent canvas, as used by the sprite metric.
pub fn render_sprite_isolated(
    tex: &Texture,
    entry: &TrackEntry,
    canvas: (usize, usize),
) -> RenderedLayer {
    warp_sprite(tex, entry, canvas)
}

pub fn blend_over(fg: &RenderedLayer, bg: &Backdrop) -> Result<Backdrop> {
    let mut g = Graph::new();
    let f = g.constant(fg.rgba.clone());
    let b = g.constant(bg.rgb.clone());
    let out = g.blend_over(f, b)?;
    Ok(Backdrop {
        rgb: g.value(out).clone(),
    })
}

/// Composites `(texture, entry)` pairs back to front.
pub fn render_frame(layers: &[(&Texture, TrackEntry)], canvas: (usize, usize)) -> Result<Backdrop> {
    let tensors: Vec<Tensor<f64>> = layers.iter().map(|(t, _)| texture_tensor_f64(t)).collect();
    let inputs: Vec<LayerInput<f64>> = tensors
        .iter()
        .zip(layers)
        .map(|(t, (_, e))| layer_f64(t, e))
        .collect();
    Ok(Backdrop {
        rgb: to_f32(&render_layers(&inputs, canvas.0, canvas.1)?),
    })
}

/// Planar `[3, H, W]` to interleaved `[H][W][3]`.
pub fn planar_to_rgb(rgb: &[f32], h: usize, w: usize) -> Vec<f32> {
    let n = h * w;
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        for c in 0..3 {
            out[3 * i + c] = rgb[c * n + i];
        }
    }
    out
}

/// Interleaved `[H][W][3]` to planar `[3, H, W]`.
pub fn rgb_to_planar(rgb: &[f32], h: usize, w: usize) -> Vec<f32> {
    let n = h * w;
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        for c in 0..3 {
            out[c * n + i] = rgb[3 * i + c];
        }
    }
    out
}

/// Renders every frame of `c`. Frames are independent and evaluated in
/// parallel; output order is frame order.
pub fn render_video(c: &Composition) -> Result<Video> {
    if c.sprites.is_empty() || c.num_frames() == 0 {
        return Err(Error::Shape("composition has nothing to render".into()));
    }
    let (h, w) = c.canvas();
    let textures: Vec<Tensor<f64>> = c
        .sprites
        .iter()
        .map(|s| texture_tensor_f64(&s.texture))
        .collect();
    let frames = (0..c.num_frames())
        .into_par_iter()
        .map(|t| {
            let inputs: Vec<LayerInput<f64>> = textures
                .iter()
                .zip(&c.sprites)
                .map(|(tex, s)| layer_f64(tex, &s.track.frames[t]))
                .collect();
            let rgb = to_f32(&render_layers(&inputs, h, w)?);
            Ok(planar_to_rgb(rgb.data(), h, w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Video {
        width: w,
        height: h,
        fps: c.fps,
        frames,
    })
}
