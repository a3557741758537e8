use super::kernels::{self, ConvGeom};
use super::tensor::{Real, Tensor};
use super::GradError;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary op is expanded onto the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    Scalar,
    /// rhs holds one value per leading (channel) index of lhs.
    PerChannel,
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
}

enum Op<T> {
    Leaf,
    Binary(Binary, Var, Var, Bcast),
    Scale(Var, T),
    Offset(Var, T),
    Sigmoid(Var),
    LeakyRelu(Var, T),
    Abs(Var),
    Square(Var),
    Logit(Var, T),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    SliceChannels(Var, usize),
    MulChannel(Var, usize, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        cols: Option<Vec<T>>,
    },
    AvgPool2(Var),
    Upsample2(Var),
    AffineGrid(Var),
    GridSample(Var, Var),
    BlendOver(Var, Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of recorded operations. Nodes are appended in evaluation order, so
/// the tape is a topological order by construction and backward is a single
/// reverse sweep.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward sweep, keyed by leaf.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + *b;
            }
        }
        None => *slot = Some(g),
    }
}

fn sum_f64<T: Real>(xs: &[T]) -> f64 {
    xs.iter().map(|v| v.f64()).sum()
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(src.shape(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    fn bcast(&self, a: Var, b: Var) -> Result<Bcast, GradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(Bcast::Same);
        }
        let nb: usize = sb.iter().product();
        if nb == 1 {
            return Ok(Bcast::Scalar);
        }
        let per_channel = sa.len() >= 2
            && sb[0] == sa[0]
            && sb[1..].iter().all(|&d| d == 1)
            && sb.len() <= sa.len();
        if per_channel {
            return Ok(Bcast::PerChannel);
        }
        Err(GradError::Shape(format!(
            "cannot broadcast {sb:?} onto {sa:?}"
        )))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var, GradError> {
        let bc = self.bcast(a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let inner = va.numel() / va.shape()[0].max(1);
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match bc {
                    Bcast::Same => vb.data()[i],
                    Bcast::Scalar => vb.data()[0],
                    Bcast::PerChannel => vb.data()[i / inner],
                };
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                }
            })
            .collect();
        let value = Tensor::new(va.shape(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Binary(kind, a, b, bc), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        self.unary(x, Op::Scale(x, s), |v| v * s)
    }

    pub fn offset(&mut self, x: Var, s: T) -> Var {
        self.unary(x, Op::Offset(x, s), |v| v + s)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        self.unary(x, Op::LeakyRelu(x, slope), |v| {
            if v > T::zero() {
                v
            } else {
                v * slope
            }
        })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), |v| v.abs())
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    /// `ln(c / (1 - c))` with `c = clamp(x, eps, 1 - eps)`.
    pub fn logit(&mut self, x: Var, eps: T) -> Var {
        self.unary(x, Op::Logit(x, eps), |v| {
            let c = v.max(eps).min(T::one() - eps);
            (c / (T::one() - c)).ln()
        })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = T::lit(sum_f64(self.value(x).data()));
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = T::lit(sum_f64(v.data()) / v.numel() as f64);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Concatenates `[C_i, H, W]` tensors along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, GradError> {
        let first = xs
            .first()
            .ok_or_else(|| GradError::Shape("empty concat".into()))?;
        let (_, h, w) = self.value(*first).chw()?;
        let mut data = Vec::new();
        let mut c_total = 0;
        for &x in xs {
            let (c, hh, ww) = self.value(x).chw()?;
            if (hh, ww) != (h, w) {
                return Err(GradError::Shape(format!(
                    "concat spatial mismatch {h}x{w} vs {hh}x{ww}"
                )));
            }
            c_total += c;
            data.extend_from_slice(self.value(x).data());
        }
        let rg = self.rg(xs);
        let value = Tensor::new(&[c_total, h, w], data)?;
        Ok(self.push(value, Op::Concat(xs.to_vec()), rg))
    }

    /// Channels `start..start + len` of a `[C, H, W]` tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var, GradError> {
        let (c, h, w) = self.value(x).chw()?;
        if start + len > c || len == 0 {
            return Err(GradError::Shape(format!(
                "channel slice {start}..{} of {c}",
                start + len
            )));
        }
        let data = self.value(x).data()[start * h * w..(start + len) * h * w].to_vec();
        let rg = self.rg(&[x]);
        let value = Tensor::new(&[len, h, w], data)?;
        Ok(self.push(value, Op::SliceChannels(x, start), rg))
    }

    /// Multiplies channel `channel` of `x` by the single-element `s`.
    pub fn mul_channel(&mut self, x: Var, channel: usize, s: Var) -> Result<Var, GradError> {
        let (c, h, w) = self.value(x).chw()?;
        if channel >= c || self.value(s).numel() != 1 {
            return Err(GradError::Shape("mul_channel operands".into()));
        }
        let sv = self.value(s).item();
        let mut value = self.value(x).clone();
        for v in &mut value.data_mut()[channel * h * w..(channel + 1) * h * w] {
            *v = *v * sv;
        }
        let rg = self.rg(&[x, s]);
        Ok(self.push(value, Op::MulChannel(x, channel, s), rg))
    }

    /// Cross-correlation of `[C_in, H, W]` with `[C_out, C_in, k, k]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, GradError> {
        let (c_in, h, w) = self.value(input).chw()?;
        let (c_out, kc, k) = match self.shape(kernel) {
            &[co, ci, kh, kw] if kh == kw => (co, ci, kh),
            s => return Err(GradError::Shape(format!("kernel shape {s:?}"))),
        };
        if kc != c_in {
            return Err(GradError::Shape(format!(
                "kernel expects {kc} input channels, input has {c_in}"
            )));
        }
        if k % 2 == 0 {
            return Err(GradError::Shape(format!("even kernel size {k}")));
        }
        if let Some(b) = bias {
            if self.value(b).numel() != c_out {
                return Err(GradError::Shape("bias length".into()));
            }
        }
        let (h_out, w_out) = match (
            kernels::conv_out_dim(h, k, stride, padding),
            kernels::conv_out_dim(w, k, stride, padding),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(GradError::Shape("kernel larger than padded input".into())),
        };
        let geom = ConvGeom {
            c_in,
            h,
            w,
            k,
            stride,
            pad: padding,
            h_out,
            w_out,
        };
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        let rg = self.rg(&inputs);
        let n = geom.col_cols();
        let mut out = vec![T::zero(); c_out * n];
        let cols = if geom.is_pointwise() {
            None
        } else {
            Some(kernels::im2col(self.value(input).data(), &geom))
        };
        let rhs = cols.as_deref().unwrap_or_else(|| self.value(input).data());
        T::gemm(
            c_out,
            geom.col_rows(),
            n,
            self.value(kernel).data(),
            false,
            rhs,
            false,
            &mut out,
            false,
        );
        if let Some(b) = bias {
            for (o, &bv) in out.chunks_mut(n).zip(self.value(b).data()) {
                for v in o {
                    *v = *v + bv;
                }
            }
        }
        let value = Tensor::new(&[c_out, h_out, w_out], out)?;
        let saved = if rg { cols } else { None };
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols: saved,
            },
            rg,
        ))
    }

    /// 2×2 average pooling.
    pub fn resize_half(&mut self, x: Var) -> Result<Var, GradError> {
        let (c, h, w) = self.value(x).chw()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(GradError::OddDimension { h, w });
        }
        let data = kernels::avg_pool2_forward(self.value(x).data(), c, h, w);
        let rg = self.rg(&[x]);
        let value = Tensor::new(&[c, h / 2, w / 2], data)?;
        Ok(self.push(value, Op::AvgPool2(x), rg))
    }

    /// 2× bilinear upsampling with half-pixel centers.
    pub fn resize_double(&mut self, x: Var) -> Result<Var, GradError> {
        let (c, h, w) = self.value(x).chw()?;
        let data = kernels::upsample2_forward(self.value(x).data(), c, h, w);
        let rg = self.rg(&[x]);
        let value = Tensor::new(&[c, 2 * h, 2 * w], data)?;
        Ok(self.push(value, Op::Upsample2(x), rg))
    }

    /// Sampling grid `[h, w, 2]` obtained by evaluating the six-parameter
    /// inverse affine at every output pixel center.
    pub fn affine_grid(&mut self, affine: Var, h: usize, w: usize) -> Result<Var, GradError> {
        if self.value(affine).numel() != 6 {
            return Err(GradError::Shape("affine must have 6 entries".into()));
        }
        let data = kernels::affine_grid_forward(self.value(affine).data(), h, w);
        let rg = self.rg(&[affine]);
        let value = Tensor::new(&[h, w, 2], data)?;
        Ok(self.push(value, Op::AffineGrid(affine), rg))
    }

    /// Bilinear sampling of `[C, H, W]` at normalized grid locations with
    /// transparent (zero) padding outside the texture.
    pub fn grid_sample(&mut self, texture: Var, grid: Var) -> Result<Var, GradError> {
        let (c, h, w) = self.value(texture).chw()?;
        let (ho, wo) = match self.shape(grid) {
            &[ho, wo, 2] => (ho, wo),
            s => return Err(GradError::Shape(format!("grid shape {s:?}"))),
        };
        let data = kernels::grid_sample_forward(
            self.value(texture).data(),
            c,
            h,
            w,
            self.value(grid).data(),
            ho,
            wo,
        );
        let rg = self.rg(&[texture, grid]);
        let value = Tensor::new(&[c, ho, wo], data)?;
        Ok(self.push(value, Op::GridSample(texture, grid), rg))
    }

    /// Source-over blend of a straight-alpha `[4, H, W]` layer onto a
    /// `[3, H, W]` backdrop.
    pub fn blend_over(&mut self, fg: Var, bg: Var) -> Result<Var, GradError> {
        let (cf, h, w) = self.value(fg).chw()?;
        let (cb, hb, wb) = self.value(bg).chw()?;
        if cf != 4 || cb != 3 || (h, w) != (hb, wb) {
            return Err(GradError::Shape(format!(
                "blend_over fg {:?} bg {:?}",
                self.shape(fg),
                self.shape(bg)
            )));
        }
        let n = h * w;
        let f = self.value(fg).data();
        let b = self.value(bg).data();
        let alpha = &f[3 * n..4 * n];
        let mut out = vec![T::zero(); 3 * n];
        for c in 0..3 {
            for i in 0..n {
                let a = alpha[i];
                out[c * n + i] = f[c * n + i] * a + b[c * n + i] * (T::one() - a);
            }
        }
        let rg = self.rg(&[fg, bg]);
        let value = Tensor::new(&[3, h, w], out)?;
        Ok(self.push(value, Op::BlendOver(fg, bg), rg))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, GradError> {
        if self.value(loss).numel() != 1 {
            return Err(GradError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.backward_from(vec![(loss, Tensor::full(self.shape(loss), T::one()))])
    }

    /// Reverse sweep seeded with explicit output gradients. Consumes the
    /// graph's backward capability: a second call is an error.
    pub fn backward_from(
        &mut self,
        seeds: Vec<(Var, Tensor<T>)>,
    ) -> Result<Gradients<T>, GradError> {
        if self.consumed {
            return Err(GradError::BackwardTwice);
        }
        self.consumed = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        let mut start = 0;
        for (v, g) in seeds {
            if g.shape() != self.shape(v) {
                return Err(GradError::Shape(format!(
                    "seed gradient {:?} for value {:?}",
                    g.shape(),
                    self.shape(v)
                )));
            }
            start = start.max(v.0 + 1);
            accumulate(&mut grads[v.0], g);
        }
        for i in (0..start).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            for (input, gi) in self.local_grads(i, &g)? {
                if self.nodes[input.0].requires_grad {
                    accumulate(&mut grads[input.0], gi);
                }
            }
        }
        // Leaves requiring gradients that no path reached get zeros.
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>, GradError> {
        let node = &self.nodes[i];
        let out = &node.value;
        let gd = g.data();
        let map = |x: Var, f: &dyn Fn(usize, T) -> T| -> Tensor<T> {
            let xv = self.value(x);
            let data = gd.iter().enumerate().map(|(j, &gv)| f(j, gv)).collect();
            Tensor::new(xv.shape(), data).expect("shape")
        };
        let res = match &node.op {
            Op::Leaf => vec![],
            Op::Binary(kind, a, b, bc) => {
                let (a, b) = (*a, *b);
                let va = self.value(a).data();
                let vb = self.value(b).data();
                let inner = out.numel() / out.shape()[0].max(1);
                let bidx = |j: usize| match bc {
                    Bcast::Same => j,
                    Bcast::Scalar => 0,
                    Bcast::PerChannel => j / inner,
                };
                let mut res = Vec::with_capacity(2);
                if self.requires_grad(a) {
                    res.push((
                        a,
                        match kind {
                            Binary::Add | Binary::Sub => g.clone(),
                            Binary::Mul => map(a, &|j, gv| gv * vb[bidx(j)]),
                        },
                    ));
                }
                if self.requires_grad(b) {
                    let mut acc = vec![0.0f64; vb.len()];
                    for (j, &gv) in gd.iter().enumerate() {
                        let d = match kind {
                            Binary::Add => gv,
                            Binary::Sub => -gv,
                            Binary::Mul => gv * va[j],
                        };
                        acc[bidx(j)] += d.f64();
                    }
                    let data = acc.into_iter().map(T::lit).collect();
                    res.push((b, Tensor::new(self.shape(b), data)?));
                }
                res
            }
            Op::Scale(x, s) => vec![(*x, map(*x, &|_, gv| gv * *s))],
            Op::Offset(x, _) => vec![(*x, g.clone())],
            Op::Sigmoid(x) => {
                let y = out.data();
                vec![(*x, map(*x, &|j, gv| gv * y[j] * (T::one() - y[j])))]
            }
            Op::LeakyRelu(x, slope) => {
                let xv = self.value(*x).data();
                vec![(
                    *x,
                    map(*x, &|j, gv| {
                        if xv[j] > T::zero() {
                            gv
                        } else {
                            gv * *slope
                        }
                    }),
                )]
            }
            Op::Abs(x) => {
                let xv = self.value(*x).data();
                vec![(*x, map(*x, &|j, gv| gv * xv[j].signum()))]
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                vec![(*x, map(*x, &|j, gv| gv * T::lit(2.0) * xv[j]))]
            }
            Op::Logit(x, eps) => {
                let xv = self.value(*x).data();
                let eps = *eps;
                vec![(
                    *x,
                    map(*x, &|j, gv| {
                        let v = xv[j];
                        if v >= eps && v <= T::one() - eps {
                            gv / (v * (T::one() - v))
                        } else {
                            T::zero()
                        }
                    }),
                )]
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                vec![(*x, Tensor::full(xv.shape(), gd[0]))]
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let v = gd[0] / T::lit(xv.numel() as f64);
                vec![(*x, Tensor::full(xv.shape(), v))]
            }
            Op::Concat(xs) => {
                let mut off = 0;
                let mut res = Vec::new();
                for &x in xs {
                    let n = self.value(x).numel();
                    if self.requires_grad(x) {
                        res.push((x, Tensor::new(self.shape(x), gd[off..off + n].to_vec())?));
                    }
                    off += n;
                }
                res
            }
            Op::SliceChannels(x, start) => {
                let xv = self.value(*x);
                let (_, h, w) = xv.chw()?;
                let mut full = Tensor::zeros(xv.shape());
                let off = start * h * w;
                full.data_mut()[off..off + gd.len()].copy_from_slice(gd);
                vec![(*x, full)]
            }
            Op::MulChannel(x, channel, s) => {
                let xv = self.value(*x);
                let (_, h, w) = xv.chw()?;
                let range = channel * h * w..(channel + 1) * h * w;
                let sv = self.value(*s).item();
                let mut res = Vec::with_capacity(2);
                if self.requires_grad(*x) {
                    let mut dx = g.clone();
                    for v in &mut dx.data_mut()[range.clone()] {
                        *v = *v * sv;
                    }
                    res.push((*x, dx));
                }
                if self.requires_grad(*s) {
                    let ds: f64 = gd[range.clone()]
                        .iter()
                        .zip(&xv.data()[range])
                        .map(|(a, b)| a.f64() * b.f64())
                        .sum();
                    res.push((*s, Tensor::new(self.shape(*s), vec![T::lit(ds)])?));
                }
                res
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            } => {
                let c_out = out.shape()[0];
                let n = geom.col_cols();
                let rows = geom.col_rows();
                let mut res = Vec::with_capacity(3);
                let input_data = self.value(*input).data();
                let cols = cols.as_deref().unwrap_or(input_data);
                if self.requires_grad(*kernel) {
                    let mut dk = vec![T::zero(); c_out * rows];
                    T::gemm(c_out, n, rows, gd, false, cols, true, &mut dk, false);
                    res.push((*kernel, Tensor::new(self.shape(*kernel), dk)?));
                }
                if let Some(b) = bias {
                    if self.requires_grad(*b) {
                        let db = gd.chunks(n).map(|r| T::lit(sum_f64(r))).collect();
                        res.push((*b, Tensor::new(self.shape(*b), db)?));
                    }
                }
                if self.requires_grad(*input) {
                    let mut dcols = vec![T::zero(); rows * n];
                    T::gemm(
                        rows,
                        c_out,
                        n,
                        self.value(*kernel).data(),
                        true,
                        gd,
                        false,
                        &mut dcols,
                        false,
                    );
                    let di = if geom.is_pointwise() {
                        dcols
                    } else {
                        let mut di = vec![T::zero(); geom.c_in * geom.h * geom.w];
                        kernels::col2im(&dcols, geom, &mut di);
                        di
                    };
                    res.push((*input, Tensor::new(self.shape(*input), di)?));
                }
                res
            }
            Op::AvgPool2(x) => {
                let (c, h, w) = self.value(*x).chw()?;
                let d = kernels::avg_pool2_backward(gd, c, h, w);
                vec![(*x, Tensor::new(self.shape(*x), d)?)]
            }
            Op::Upsample2(x) => {
                let (c, h, w) = self.value(*x).chw()?;
                let d = kernels::upsample2_backward(gd, c, h, w);
                vec![(*x, Tensor::new(self.shape(*x), d)?)]
            }
            Op::AffineGrid(a) => {
                let (h, w) = (out.shape()[0], out.shape()[1]);
                let d = kernels::affine_grid_backward(gd, h, w);
                vec![(*a, Tensor::new(self.shape(*a), d)?)]
            }
            Op::GridSample(tex, grid) => {
                let (c, h, w) = self.value(*tex).chw()?;
                let (ho, wo) = (out.shape()[1], out.shape()[2]);
                let (dt, dg) = kernels::grid_sample_backward(
                    self.value(*tex).data(),
                    c,
                    h,
                    w,
                    self.value(*grid).data(),
                    ho,
                    wo,
                    gd,
                    self.requires_grad(*tex),
                    self.requires_grad(*grid),
                );
                let mut res = Vec::with_capacity(2);
                if let Some(dt) = dt {
                    res.push((*tex, Tensor::new(self.shape(*tex), dt)?));
                }
                if let Some(dg) = dg {
                    res.push((*grid, Tensor::new(self.shape(*grid), dg)?));
                }
                res
            }
            Op::BlendOver(fg, bg) => {
                let f = self.value(*fg).data();
                let b = self.value(*bg).data();
                let n = out.numel() / 3;
                let mut res = Vec::with_capacity(2);
                if self.requires_grad(*fg) {
                    let mut df = vec![T::zero(); 4 * n];
                    for i in 0..n {
                        let a = f[3 * n + i];
                        let mut da = T::zero();
                        for c in 0..3 {
                            let gv = gd[c * n + i];
                            df[c * n + i] = gv * a;
                            da = da + gv * (f[c * n + i] - b[c * n + i]);
                        }
                        df[3 * n + i] = da;
                    }
                    res.push((*fg, Tensor::new(self.shape(*fg), df)?));
                }
                if self.requires_grad(*bg) {
                    let mut db = vec![T::zero(); 3 * n];
                    for c in 0..3 {
                        for i in 0..n {
                            db[c * n + i] = gd[c * n + i] * (T::one() - f[3 * n + i]);
                        }
                    }
                    res.push((*bg, Tensor::new(self.shape(*bg), db)?));
                }
                res
            }
        };
        Ok(res)
    }
}

#[inline]
pub fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}
