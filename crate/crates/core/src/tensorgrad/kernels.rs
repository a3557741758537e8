//! Forward and backward kernels operating on raw slices.
//!
//! Layouts are row-major: images are `[C, H, W]`, sampling grids are
//! `[H, W, 2]` with `(x, y)` pairs in normalized `[-1, 1]` coordinates.

use super::tensor::Real;

/// Spatial extent of a convolution output.
pub(crate) fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    pub fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn col_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    pub fn col_cols(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Output columns `lo..hi` whose input column is in bounds for tap `kx`,
/// when the stride is 1.
fn unit_stride_span(g: &ConvGeom, kx: usize) -> Option<(usize, usize)> {
    if g.stride != 1 {
        return None;
    }
    let lo = g.pad.saturating_sub(kx);
    let hi = (g.w + g.pad).saturating_sub(kx).min(g.w_out);
    Some((lo, hi.max(lo)))
}

pub(crate) fn im2col<T: Real>(input: &[T], g: &ConvGeom) -> Vec<T> {
    let n = g.col_cols();
    let mut cols = vec![T::zero(); g.col_rows() * n];
    for c in 0..g.c_in {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let dst_row = &mut dst[oy * g.w_out..(oy + 1) * g.w_out];
                    if let Some((lo, hi)) = unit_stride_span(g, kx) {
                        let shift = kx as isize - g.pad as isize;
                        let s0 = (lo as isize + shift) as usize;
                        dst_row[lo..hi].copy_from_slice(&src_row[s0..s0 + hi - lo]);
                        continue;
                    }
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

pub(crate) fn col2im<T: Real>(cols: &[T], g: &ConvGeom, out: &mut [T]) {
    let n = g.col_cols();
    for c in 0..g.c_in {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.h_out {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let src_row = &src[oy * g.w_out..(oy + 1) * g.w_out];
                    if let Some((lo, hi)) = unit_stride_span(g, kx) {
                        let shift = kx as isize - g.pad as isize;
                        let d0 = (lo as isize + shift) as usize;
                        for (d, &s) in dst_row[d0..d0 + hi - lo].iter_mut().zip(&src_row[lo..hi]) {
                            *d = *d + s;
                        }
                        continue;
                    }
                    for (ox, &s) in src_row.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + s;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn avg_pool2_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    let mut out = vec![T::zero(); c * ho * wo];
    for ch in 0..c {
        let src = &x[ch * h * w..];
        let dst = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for y in 0..ho {
            for xx in 0..wo {
                let i = 2 * y * w + 2 * xx;
                dst[y * wo + xx] = (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) * quarter;
            }
        }
    }
    out
}

pub(crate) fn avg_pool2_backward<T: Real>(g: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let src = &g[ch * ho * wo..(ch + 1) * ho * wo];
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for y in 0..ho {
            for xx in 0..wo {
                let v = src[y * wo + xx] * quarter;
                let i = 2 * y * w + 2 * xx;
                dst[i] = v;
                dst[i + 1] = v;
                dst[i + w] = v;
                dst[i + w + 1] = v;
            }
        }
    }
    out
}

/// Source taps for 2× bilinear upsampling along one axis (half-pixel
/// centers, edge-clamped): `(i0, i1, weight of i1)` per output index.
fn upsample_taps<T: Real>(n_in: usize) -> Vec<(usize, usize, T)> {
    (0..2 * n_in)
        .map(|o| {
            let src = ((o as f64 + 0.5) * 0.5 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, T::lit(src - i0 as f64))
        })
        .collect()
}

pub(crate) fn upsample2_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (2 * h, 2 * w);
    let ty = upsample_taps::<T>(h);
    let tx = upsample_taps::<T>(w);
    let mut out = vec![T::zero(); c * ho * wo];
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (T::one() - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (T::one() - fx) + src[y1 * w + x1] * fx;
                dst[oy * wo + ox] = top * (T::one() - fy) + bot * fy;
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward<T: Real>(g: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (2 * h, 2 * w);
    let ty = upsample_taps::<T>(h);
    let tx = upsample_taps::<T>(w);
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let src = &g[ch * ho * wo..(ch + 1) * ho * wo];
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let gv = src[oy * wo + ox];
                let gt = gv * (T::one() - fy);
                let gb = gv * fy;
                dst[y0 * w + x0] = dst[y0 * w + x0] + gt * (T::one() - fx);
                dst[y0 * w + x1] = dst[y0 * w + x1] + gt * fx;
                dst[y1 * w + x0] = dst[y1 * w + x0] + gb * (T::one() - fx);
                dst[y1 * w + x1] = dst[y1 * w + x1] + gb * fx;
            }
        }
    }
    out
}

/// Normalized coordinate of pixel center `i` on an axis of length `n`.
#[inline]
pub fn pixel_center<T: Real>(i: usize, n: usize) -> T {
    T::lit((2 * i + 1) as f64 / n as f64 - 1.0)
}

/// Evaluates the inverse affine `a` at every canvas pixel center.
pub(crate) fn affine_grid_forward<T: Real>(a: &[T], h: usize, w: usize) -> Vec<T> {
    let mut grid = vec![T::zero(); h * w * 2];
    let us: Vec<T> = (0..w).map(|x| pixel_center(x, w)).collect();
    for y in 0..h {
        let v: T = pixel_center(y, h);
        let bx = a[1] * v + a[2];
        let by = a[4] * v + a[5];
        let row = &mut grid[y * w * 2..(y + 1) * w * 2];
        for (x, &u) in us.iter().enumerate() {
            row[2 * x] = a[0] * u + bx;
            row[2 * x + 1] = a[3] * u + by;
        }
    }
    grid
}

pub(crate) fn affine_grid_backward<T: Real>(g: &[T], h: usize, w: usize) -> Vec<T> {
    let mut acc = [0.0f64; 6];
    for y in 0..h {
        let v = pixel_center::<f64>(y, h);
        for x in 0..w {
            let u = pixel_center::<f64>(x, w);
            let gx = g[(y * w + x) * 2].f64();
            let gy = g[(y * w + x) * 2 + 1].f64();
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            acc[0] += gx * u;
            acc[1] += gx * v;
            acc[2] += gx;
            acc[3] += gy * u;
            acc[4] += gy * v;
            acc[5] += gy;
        }
    }
    acc.iter().map(|&v| T::lit(v)).collect()
}

/// Bilinear footprint of one sample: base corner, fractional offsets and
/// per-corner validity.
#[derive(Clone, Copy)]
struct Tap<T> {
    x0: isize,
    y0: isize,
    fx: T,
    fy: T,
}

#[inline]
fn tap<T: Real>(gx: T, gy: T, w: usize, h: usize, snap: T) -> Option<Tap<T>> {
    let half = T::lit(0.5);
    let x = ((gx + T::one()) * T::lit(w as f64) - T::one()) * half;
    let y = ((gy + T::one()) * T::lit(h as f64) - T::one()) * half;
    // NaN fails both comparisons and is treated as outside.
    let inside = x > -T::one() && x < T::lit(w as f64) && y > -T::one() && y < T::lit(h as f64);
    if !inside {
        return None;
    }
    let (x0, fx) = split_coord(x, snap);
    let (y0, fy) = split_coord(y, snap);
    Some(Tap { x0, y0, fx, fy })
}

#[inline]
fn split_coord<T: Real>(x: T, snap: T) -> (isize, T) {
    let fl = x.floor();
    let mut i = fl.to_isize().unwrap_or(0);
    let mut f = x - fl;
    if f <= snap {
        f = T::zero();
    } else if f >= T::one() - snap {
        i += 1;
        f = T::zero();
    }
    (i, f)
}

/// Coordinates this close to a texel center are snapped onto it so that
/// resampling on the native lattice is exact.
pub(crate) fn snap_tolerance<T: Real>(h: usize, w: usize) -> T {
    T::epsilon() * T::lit(64.0 * h.max(w) as f64)
}

#[inline]
fn fetch<T: Real>(plane: &[T], w: usize, h: usize, x: isize, y: isize) -> T {
    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
        plane[y as usize * w + x as usize]
    } else {
        T::zero()
    }
}

pub(crate) fn grid_sample_forward<T: Real>(
    tex: &[T],
    c: usize,
    h: usize,
    w: usize,
    grid: &[T],
    ho: usize,
    wo: usize,
) -> Vec<T> {
    let snap = snap_tolerance::<T>(h, w);
    let npx = ho * wo;
    let mut out = vec![T::zero(); c * npx];
    for p in 0..npx {
        let Some(t) = tap(grid[2 * p], grid[2 * p + 1], w, h, snap) else {
            continue;
        };
        let w00 = (T::one() - t.fx) * (T::one() - t.fy);
        let w10 = t.fx * (T::one() - t.fy);
        let w01 = (T::one() - t.fx) * t.fy;
        let w11 = t.fx * t.fy;
        for ch in 0..c {
            let plane = &tex[ch * h * w..(ch + 1) * h * w];
            let v = fetch(plane, w, h, t.x0, t.y0) * w00
                + fetch(plane, w, h, t.x0 + 1, t.y0) * w10
                + fetch(plane, w, h, t.x0, t.y0 + 1) * w01
                + fetch(plane, w, h, t.x0 + 1, t.y0 + 1) * w11;
            out[ch * npx + p] = v;
        }
    }
    out
}

/// Returns `(d_texture, d_grid)`; either may be skipped.
#[allow(clippy::too_many_arguments)]
pub(crate) fn grid_sample_backward<T: Real>(
    tex: &[T],
    c: usize,
    h: usize,
    w: usize,
    grid: &[T],
    ho: usize,
    wo: usize,
    g: &[T],
    want_tex: bool,
    want_grid: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let snap = snap_tolerance::<T>(h, w);
    let npx = ho * wo;
    let mut dtex = want_tex.then(|| vec![T::zero(); c * h * w]);
    let mut dgrid = want_grid.then(|| vec![T::zero(); npx * 2]);
    let sx = T::lit(w as f64 * 0.5);
    let sy = T::lit(h as f64 * 0.5);
    for p in 0..npx {
        let Some(t) = tap(grid[2 * p], grid[2 * p + 1], w, h, snap) else {
            continue;
        };
        let corners = [
            (t.x0, t.y0),
            (t.x0 + 1, t.y0),
            (t.x0, t.y0 + 1),
            (t.x0 + 1, t.y0 + 1),
        ];
        let weights = [
            (T::one() - t.fx) * (T::one() - t.fy),
            t.fx * (T::one() - t.fy),
            (T::one() - t.fx) * t.fy,
            t.fx * t.fy,
        ];
        let mut dfx = T::zero();
        let mut dfy = T::zero();
        for ch in 0..c {
            let gv = g[ch * npx + p];
            if gv == T::zero() {
                continue;
            }
            if let Some(dt) = dtex.as_mut() {
                let plane = &mut dt[ch * h * w..(ch + 1) * h * w];
                for (&(x, y), &wt) in corners.iter().zip(&weights) {
                    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                        let i = y as usize * w + x as usize;
                        plane[i] = plane[i] + gv * wt;
                    }
                }
            }
            if want_grid {
                let plane = &tex[ch * h * w..(ch + 1) * h * w];
                let v00 = fetch(plane, w, h, t.x0, t.y0);
                let v10 = fetch(plane, w, h, t.x0 + 1, t.y0);
                let v01 = fetch(plane, w, h, t.x0, t.y0 + 1);
                let v11 = fetch(plane, w, h, t.x0 + 1, t.y0 + 1);
                dfx = dfx + gv * ((v10 - v00) * (T::one() - t.fy) + (v11 - v01) * t.fy);
                dfy = dfy + gv * ((v01 - v00) * (T::one() - t.fx) + (v11 - v10) * t.fx);
            }
        }
        if let Some(dg) = dgrid.as_mut() {
            dg[2 * p] = dfx * sx;
            dg[2 * p + 1] = dfy * sy;
        }
    }
    (dtex, dgrid)
}
