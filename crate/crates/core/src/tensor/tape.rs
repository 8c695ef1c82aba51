use super::conv;
use super::{Real, Shape, Tensor};
use crate::error::{arg, dim, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: 0.9,
            eps: 1e-5,
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var, stride: usize, pad: usize },
    ConvTranspose2d { input: Var, kernel: Var, bias: Var, stride: usize, pad: usize, output_pad: usize },
    BatchNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    LeakyRelu { input: Var, slope: T },
    Sigmoid { input: Var },
    Tanh { input: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { input: Var, factor: T },
    Concat { inputs: Vec<Var> },
    ConcatBatch { inputs: Vec<Var> },
    SliceBatch { input: Var, start: usize },
    Mean { input: Var },
    L1 { a: Var, b: Var },
    Relativistic { real: Var, fake: Var },
    SpectralScale { input: Var, u: Vec<T>, v: Vec<T>, sigma: T, degenerate: bool },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
    op: Op<T>,
}

/// Records operations in execution order and replays their adjoints.
///
/// Nodes only reference earlier nodes, so reverse index order is a valid
/// topological order for the backward sweep.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn add_into<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(a, &b)| *a = *a + b),
        None => *slot = Some(g),
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("shapes checked by caller")
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(max(sigmoid(x), floor))`, evaluated without cancellation.
fn clamped_log_sigmoid<T: Real>(x: T, floor: T) -> (T, bool) {
    let ls = if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    };
    let lf = floor.ln();
    if ls < lf {
        (lf, true)
    } else {
        (ls, false)
    }
}

const LOG_FLOOR: f64 = 1e-12;

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// A constant input: never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: &Tensor<T>) -> Var {
        self.leaf(value.clone(), true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    /// Gradient of the last backward pass with respect to `v`, if `v` is a
    /// gradient-requiring leaf reached from the loss.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    /// Clears gradients so backward may run again.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let out = conv::conv2d_forward(self.value(input), self.value(kernel), self.value(bias), stride, pad)?
            .check_finite("conv2d")?;
        let rg = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(out, rg, Op::Conv2d { input, kernel, bias, stride, pad }))
    }

    /// Transposed convolution; the kernel is laid out `[in, out, kh, kw]`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Result<Var> {
        let out = conv::conv_transpose2d_forward(
            self.value(input),
            self.value(kernel),
            self.value(bias),
            stride,
            pad,
            output_pad,
        )?
        .check_finite("conv_transpose2d")?;
        let rg = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(out, rg, Op::ConvTranspose2d { input, kernel, bias, stride, pad, output_pad }))
    }

    /// Per-channel batch normalization. In [`Mode::Train`] batch statistics
    /// are used and `state` is updated by exponential moving average.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<T>,
        mode: Mode,
    ) -> Result<Var> {
        let [n, c, h, w] = self.shape(input);
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(dim("batch_norm", format!("affine parameters must have {c} entries")));
        }
        if state.mean.len() != c || state.var.len() != c {
            return Err(dim("batch_norm", format!("running stats must have {c} entries")));
        }
        if n * h * w == 0 {
            return Err(dim("batch_norm", "empty input"));
        }
        let x = self.value(input);
        let plane = h * w;
        let count = T::of((n * plane) as f64);
        let eps = T::of(state.eps);
        let mut xhat = vec![T::zero(); x.numel()];
        let mut inv_std = vec![T::zero(); c];
        let mut out = Tensor::zeros(x.shape());
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut s = T::zero();
                    for i in 0..n {
                        let base = (i * c + ch) * plane;
                        s = s + x.data()[base..base + plane].iter().copied().sum::<T>();
                    }
                    let mean = s / count;
                    let mut v = T::zero();
                    for i in 0..n {
                        let base = (i * c + ch) * plane;
                        v = v + x.data()[base..base + plane]
                            .iter()
                            .map(|&e| (e - mean) * (e - mean))
                            .sum::<T>();
                    }
                    (mean, v / count)
                }
                Mode::Infer => (state.mean[ch], state.var[ch]),
            };
            let is = T::one() / (var + eps).sqrt();
            inv_std[ch] = is;
            for i in 0..n {
                let base = (i * c + ch) * plane;
                for j in base..base + plane {
                    let xh = (x.data()[j] - mean) * is;
                    xhat[j] = xh;
                    out.data_mut()[j] = g[ch] * xh + b[ch];
                }
            }
            if mode == Mode::Train {
                let m = T::of(state.momentum);
                state.mean[ch] = m * state.mean[ch] + (T::one() - m) * mean;
                state.var[ch] = m * state.var[ch] + (T::one() - m) * var;
            }
        }
        let out = out.check_finite("batch_norm")?;
        let rg = self.needs(input) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            out,
            rg,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: mode == Mode::Train,
            },
        ))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Result<Var> {
        let s = T::of(slope);
        let out = self
            .value(input)
            .map(|x| if x >= T::zero() { x } else { s * x });
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::LeakyRelu { input, slope: s }))
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let out = self.value(input).map(sigmoid);
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::Sigmoid { input }))
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        let out = self.value(input).map(|x| x.tanh());
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::Tanh { input }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y).check_finite("add")?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("subtract", self.value(a), self.value(b))?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y).check_finite("subtract")?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("multiply", self.value(a), self.value(b))?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y).check_finite("multiply")?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let f = T::of(factor);
        let out = self.value(input).map(|x| x * f).check_finite("scale")?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::Scale { input, factor: f }))
    }

    /// Concatenates along channels, preserving input order.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| arg("concat_channels", "no inputs"))?;
        let [n, _, h, w] = self.shape(first);
        let mut total = 0;
        for &v in inputs {
            let [vn, vc, vh, vw] = self.shape(v);
            if (vn, vh, vw) != (n, h, w) {
                return Err(dim(
                    "concat_channels",
                    format!("{:?} vs {:?}", self.shape(first), self.shape(v)),
                ));
            }
            total += vc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total * plane);
        for i in 0..n {
            for &v in inputs {
                let t = self.value(v);
                let c = t.shape()[1];
                data.extend_from_slice(&t.data()[i * c * plane..(i + 1) * c * plane]);
            }
        }
        let out = Tensor::new([n, total, h, w], data)?;
        let rg = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(out, rg, Op::Concat { inputs: inputs.to_vec() }))
    }

    /// Stacks along the batch axis, preserving input order.
    pub fn concat_batch(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| arg("concat_batch", "no inputs"))?;
        let [_, c, h, w] = self.shape(first);
        let mut n = 0;
        let mut data = Vec::new();
        for &v in inputs {
            let [vn, vc, vh, vw] = self.shape(v);
            if (vc, vh, vw) != (c, h, w) {
                return Err(dim("concat_batch", format!("{:?} vs {:?}", self.shape(first), self.shape(v))));
            }
            n += vn;
            data.extend_from_slice(self.value(v).data());
        }
        let out = Tensor::new([n, c, h, w], data)?;
        let rg = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(out, rg, Op::ConcatBatch { inputs: inputs.to_vec() }))
    }

    /// Batch items `start..end`.
    pub fn slice_batch(&mut self, input: Var, start: usize, end: usize) -> Result<Var> {
        let [n, c, h, w] = self.shape(input);
        if start >= end || end > n {
            return Err(arg("slice_batch", format!("range {start}..{end} of batch {n}")));
        }
        let item = c * h * w;
        let out = Tensor::new([end - start, c, h, w], self.value(input).data()[start * item..end * item].to_vec())?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::SliceBatch { input, start }))
    }

    /// Arithmetic mean of all entries, as a one-element tensor.
    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let t = self.value(input);
        if t.numel() == 0 {
            return Err(arg("mean", "empty tensor"));
        }
        let m = t.data().iter().copied().sum::<T>() / T::of(t.numel() as f64);
        let out = Tensor::scalar(m).check_finite("mean")?;
        let rg = self.needs(input);
        Ok(self.push(out, rg, Op::Mean { input }))
    }

    /// Mean absolute elementwise difference.
    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("l1_distance", self.value(a), self.value(b))?;
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.numel() == 0 {
            return Err(arg("l1_distance", "empty tensor"));
        }
        let s: T = ta.data().iter().zip(tb.data()).map(|(&x, &y)| (x - y).abs()).sum();
        let out = Tensor::scalar(s / T::of(ta.numel() as f64)).check_finite("l1_distance")?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::L1 { a, b }))
    }

    /// Relativistic average sigmoid loss
    /// `-E[ln s(real - E fake)] - E[ln(1 - s(fake - E real))]`, with every
    /// log argument floored at 1e-12. Expectations run over all entries.
    /// The discriminator loss is `relativistic(c_real, c_fake)`, the
    /// generator loss is `relativistic(c_fake, c_real)`.
    pub fn relativistic(&mut self, real: Var, fake: Var) -> Result<Var> {
        same_shape("relativistic", self.value(real), self.value(fake))?;
        let (r, f) = (self.value(real), self.value(fake));
        if r.numel() == 0 {
            return Err(arg("relativistic", "empty logit map"));
        }
        let floor = T::of(LOG_FLOOR);
        let nr = T::of(r.numel() as f64);
        let nf = T::of(f.numel() as f64);
        let mean_r = r.data().iter().copied().sum::<T>() / nr;
        let mean_f = f.data().iter().copied().sum::<T>() / nf;
        let a: T = r
            .data()
            .iter()
            .map(|&x| clamped_log_sigmoid(x - mean_f, floor).0)
            .sum();
        // ln(1 - s(q)) = ln s(-q)
        let b: T = f
            .data()
            .iter()
            .map(|&x| clamped_log_sigmoid(mean_r - x, floor).0)
            .sum();
        let out = Tensor::scalar(-(a / nr) - b / nf).check_finite("relativistic")?;
        let rg = self.needs(real) || self.needs(fake);
        Ok(self.push(out, rg, Op::Relativistic { real, fake }))
    }

    /// Divides a kernel by `sigma = u^T W v`, where `W` is the kernel viewed
    /// as `[out, in*kh*kw]` and `u`, `v` come from power iteration. The
    /// gradient flows through `sigma` with `u`, `v` held fixed. When the
    /// estimate is below `eps` it is clamped and treated as a constant.
    pub fn spectral_scale(&mut self, input: Var, u: &[T], v: &[T], eps: f64) -> Result<(Var, T, bool)> {
        let t = self.value(input);
        let rows = t.shape()[0];
        let cols = t.numel() / rows.max(1);
        if u.len() != rows || v.len() != cols {
            return Err(dim(
                "spectral_scale",
                format!("u/v lengths {}/{} for a {rows}x{cols} matrix", u.len(), v.len()),
            ));
        }
        let mut sigma = T::zero();
        for (i, &ui) in u.iter().enumerate() {
            let row = &t.data()[i * cols..(i + 1) * cols];
            let dot: T = row.iter().zip(v).map(|(&a, &b)| a * b).sum();
            sigma = sigma + ui * dot;
        }
        let degenerate = sigma.abs() < T::of(eps);
        if degenerate {
            sigma = T::of(eps);
        }
        let out = t.map(|x| x / sigma).check_finite("spectral_scale")?;
        let rg = self.needs(input);
        let var = self.push(
            out,
            rg,
            Op::SpectralScale {
                input,
                u: u.to_vec(),
                v: v.to_vec(),
                sigma,
                degenerate,
            },
        );
        Ok((var, sigma, degenerate))
    }

    /// Reverse sweep from a one-element `loss`. Gradients accumulate on every
    /// gradient-requiring leaf reachable from it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward(
                "backward already ran on this tape; call zero_grad first".into(),
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Backward(format!(
                "loss must be a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        if !self.needs(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                add_into(&mut self.nodes[idx].grad, g);
                continue;
            }
            for (target, contribution) in self.adjoint(idx, &g)? {
                if self.needs(target) {
                    add_into(&mut grads[target.0], contribution);
                }
            }
        }
        Ok(())
    }

    fn adjoint(&self, idx: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[idx];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, bias, stride, pad } => {
                let need = [self.needs(*input), self.needs(*kernel), self.needs(*bias)];
                let grads =
                    conv::conv2d_backward(self.value(*input), self.value(*kernel), g, *stride, *pad, need)?;
                push_conv_grads(&mut out, grads, *input, *kernel, *bias, self.shape(*bias))?;
            }
            Op::ConvTranspose2d { input, kernel, bias, stride, pad, output_pad } => {
                let need = [self.needs(*input), self.needs(*kernel), self.needs(*bias)];
                let grads = conv::conv_transpose2d_backward(
                    self.value(*input),
                    self.value(*kernel),
                    g,
                    *stride,
                    *pad,
                    *output_pad,
                    need,
                )?;
                push_conv_grads(&mut out, grads, *input, *kernel, *bias, self.shape(*bias))?;
            }
            Op::BatchNorm { input, gamma, beta, xhat, inv_std, batch_stats } => {
                let [n, c, h, w] = g.shape();
                let plane = h * w;
                let count = T::of((n * plane) as f64);
                let gam = self.value(*gamma).data();
                let mut dg = vec![T::zero(); c];
                let mut db = vec![T::zero(); c];
                for ch in 0..c {
                    for i in 0..n {
                        let base = (i * c + ch) * plane;
                        for j in base..base + plane {
                            dg[ch] = dg[ch] + g.data()[j] * xhat[j];
                            db[ch] = db[ch] + g.data()[j];
                        }
                    }
                }
                if self.needs(*input) {
                    let mut dx = Tensor::zeros(g.shape());
                    for ch in 0..c {
                        let scale = gam[ch] * inv_std[ch];
                        for i in 0..n {
                            let base = (i * c + ch) * plane;
                            for j in base..base + plane {
                                dx.data_mut()[j] = if *batch_stats {
                                    scale * (g.data()[j] - db[ch] / count - xhat[j] * dg[ch] / count)
                                } else {
                                    scale * g.data()[j]
                                };
                            }
                        }
                    }
                    out.push((*input, dx));
                }
                let gshape = self.shape(*gamma);
                out.push((*gamma, Tensor::new(gshape, dg)?));
                let bshape = self.shape(*beta);
                out.push((*beta, Tensor::new(bshape, db)?));
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input);
                out.push((
                    *input,
                    zip_map(x, g, |xv, gv| if xv >= T::zero() { gv } else { gv * *slope }),
                ));
            }
            Op::Sigmoid { input } => {
                out.push((*input, zip_map(&node.value, g, |s, gv| gv * s * (T::one() - s))));
            }
            Op::Tanh { input } => {
                out.push((*input, zip_map(&node.value, g, |t, gv| gv * (T::one() - t * t))));
            }
            Op::Add { a, b } => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub { a, b } => {
                out.push((*a, g.clone()));
                out.push((*b, g.map(|v| -v)));
            }
            Op::Mul { a, b } => {
                out.push((*a, zip_map(g, self.value(*b), |gv, bv| gv * bv)));
                out.push((*b, zip_map(g, self.value(*a), |gv, av| gv * av)));
            }
            Op::Scale { input, factor } => {
                out.push((*input, g.map(|v| v * *factor)));
            }
            Op::Concat { inputs } => {
                let mut start = 0;
                for &v in inputs {
                    let c = self.shape(v)[1];
                    out.push((v, g.channel_slice(start, start + c)?));
                    start += c;
                }
            }
            Op::ConcatBatch { inputs } => {
                let mut start = 0;
                for &v in inputs {
                    let shape = self.shape(v);
                    let len = super::numel(shape);
                    out.push((v, Tensor::new(shape, g.data()[start..start + len].to_vec())?));
                    start += len;
                }
            }
            Op::SliceBatch { input, start } => {
                let shape = self.shape(*input);
                let mut full = Tensor::zeros(shape);
                let off = start * shape[1] * shape[2] * shape[3];
                full.data_mut()[off..off + g.numel()].copy_from_slice(g.data());
                out.push((*input, full));
            }
            Op::Mean { input } => {
                let shape = self.shape(*input);
                let n = T::of(super::numel(shape) as f64);
                out.push((*input, Tensor::full(shape, g.item() / n)));
            }
            Op::L1 { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let scale = g.item() / T::of(ta.numel() as f64);
                let da = zip_map(ta, tb, |x, y| {
                    let d = x - y;
                    if d > T::zero() {
                        scale
                    } else if d < T::zero() {
                        -scale
                    } else {
                        T::zero()
                    }
                });
                out.push((*b, da.map(|v| -v)));
                out.push((*a, da));
            }
            Op::Relativistic { real, fake } => {
                let (r, f) = (self.value(*real), self.value(*fake));
                let floor = T::of(LOG_FLOOR);
                let nr = T::of(r.numel() as f64);
                let nf = T::of(f.numel() as f64);
                let mean_r = r.data().iter().copied().sum::<T>() / nr;
                let mean_f = f.data().iter().copied().sum::<T>() / nf;
                let scale = g.item();
                // d/dz of -ln s(z) is -(1 - s(z)); zero where the floor is active.
                let gr: Vec<T> = r
                    .data()
                    .iter()
                    .map(|&x| {
                        let z = x - mean_f;
                        if clamped_log_sigmoid(z, floor).1 {
                            T::zero()
                        } else {
                            -(T::one() - sigmoid(z)) / nr
                        }
                    })
                    .collect();
                // second term is -ln s(mean_r - x); d/dx = (1 - s(mean_r - x))
                let gf: Vec<T> = f
                    .data()
                    .iter()
                    .map(|&x| {
                        let z = mean_r - x;
                        if clamped_log_sigmoid(z, floor).1 {
                            T::zero()
                        } else {
                            (T::one() - sigmoid(z)) / nf
                        }
                    })
                    .collect();
                let sum_r: T = gr.iter().copied().sum();
                let sum_f: T = gf.iter().copied().sum();
                let dr: Vec<T> = gr.iter().map(|&v| scale * (v - sum_f / nr)).collect();
                let df: Vec<T> = gf.iter().map(|&v| scale * (v - sum_r / nf)).collect();
                out.push((*real, Tensor::new(r.shape(), dr)?));
                out.push((*fake, Tensor::new(f.shape(), df)?));
            }
            Op::SpectralScale { input, u, v, sigma, degenerate } => {
                let w = self.value(*input);
                let mut dw = g.map(|x| x / *sigma);
                if !*degenerate {
                    let inner: T = g.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum();
                    let coef = inner / (*sigma * *sigma);
                    let cols = v.len();
                    for (i, &ui) in u.iter().enumerate() {
                        for (j, &vj) in v.iter().enumerate() {
                            let k = i * cols + j;
                            dw.data_mut()[k] = dw.data()[k] - coef * ui * vj;
                        }
                    }
                }
                out.push((*input, dw));
            }
        }
        Ok(out)
    }
}

fn push_conv_grads<T: Real>(
    out: &mut Vec<(Var, Tensor<T>)>,
    grads: conv::ConvGrads<T>,
    input: Var,
    kernel: Var,
    bias: Var,
    bias_shape: Shape,
) -> Result<()> {
    if let Some(dx) = grads.input {
        out.push((input, dx));
    }
    if let Some(dw) = grads.kernel {
        out.push((kernel, dw));
    }
    if let Some(db) = grads.bias {
        out.push((bias, db.reshape(bias_shape)?));
    }
    Ok(())
}
