use rand::Rng;

use super::{Cursor, Network};
use crate::error::{dim, Result};
use crate::tensor::{BatchNormState, Mode, Real, Tape, Tensor, Var};

/// He-style normal initialization for layers followed by LeakyReLU(0.2).
fn he_std(fan_in: usize, slope: f64) -> f64 {
    (2.0 / ((1.0 + slope * slope) * fan_in as f64)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ConvLayer<T> {
    /// Kernel `[out, in, k, k]` for a forward convolution.
    pub fn new(input: usize, output: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let std = he_std(input * kernel * kernel, 0.2);
        Self {
            weight: Tensor::randn([output, input, kernel, kernel], std, rng),
            bias: Tensor::zeros([1, output, 1, 1]),
        }
    }

    /// Kernel `[in, out, k, k]` for a transposed convolution.
    pub fn new_transposed(input: usize, output: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let std = he_std(input * kernel * kernel, 0.2);
        Self {
            weight: Tensor::randn([input, output, kernel, kernel], std, rng),
            bias: Tensor::zeros([1, output, 1, 1]),
        }
    }

    pub fn zero(&mut self) {
        self.weight.data_mut().fill(T::zero());
        self.bias.data_mut().fill(T::zero());
    }

    pub(crate) fn push_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}/weight"), &self.weight));
        out.push((format!("{prefix}/bias"), &self.bias));
    }

    pub(crate) fn push_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

impl<T: Real> Network<T> for ConvLayer<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        self.push_params("conv", &mut v);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        self.push_params_mut(&mut v);
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub state: BatchNormState<T>,
}

impl<T: Real> BatchNormLayer<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full([1, channels, 1, 1], T::one()),
            beta: Tensor::zeros([1, channels, 1, 1]),
            state: BatchNormState::new(channels),
        }
    }

    pub(crate) fn push_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}/gamma"), &self.gamma));
        out.push((format!("{prefix}/beta"), &self.beta));
    }

    pub(crate) fn push_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }

    pub(crate) fn forward(
        &mut self,
        tape: &mut Tape<T>,
        cur: &mut Cursor<'_>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let g = cur.next()?;
        let b = cur.next()?;
        tape.batch_norm(x, g, b, &mut self.state, mode)
    }
}

/// Inception-style residual unit: parallel stride-1 convolutions of
/// different kernel sizes, each followed by LeakyReLU, concatenated and
/// reduced back to the input width by a 1x1 convolution, then added to the
/// input.
#[derive(Clone, Debug, PartialEq)]
pub struct BasicBlock<T> {
    pub channels: usize,
    pub branches: Vec<ConvLayer<T>>,
    pub reduce: ConvLayer<T>,
    pub slope: f64,
}

impl<T: Real> BasicBlock<T> {
    pub fn new(channels: usize, branch_width: usize, kernels: &[usize], slope: f64, rng: &mut impl Rng) -> Self {
        let branches = kernels
            .iter()
            .map(|&k| ConvLayer::new(channels, branch_width, k, rng))
            .collect();
        let reduce = ConvLayer::new(branch_width * kernels.len(), channels, 1, rng);
        Self {
            channels,
            branches,
            reduce,
            slope,
        }
    }

    pub(crate) fn push_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        for b in &self.branches {
            let k = b.weight.shape()[2];
            b.push_params(&format!("{prefix}/branch{k}x{k}"), out);
        }
        self.reduce.push_params(&format!("{prefix}/reduce"), out);
    }

    pub(crate) fn push_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        for b in &mut self.branches {
            b.push_params_mut(out);
        }
        self.reduce.push_params_mut(out);
    }

    pub(crate) fn forward_with(&self, tape: &mut Tape<T>, cur: &mut Cursor<'_>, f: Var) -> Result<Var> {
        let c = tape.shape(f)[1];
        if c != self.channels {
            return Err(dim(
                "basic_block",
                format!("block expects {} channels, got {c}", self.channels),
            ));
        }
        let mut outs = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let k = b.weight.shape()[2];
            let (w, bias) = (cur.next()?, cur.next()?);
            let y = tape.conv2d(f, w, bias, 1, k / 2)?;
            outs.push(tape.leaky_relu(y, self.slope)?);
        }
        let cat = tape.concat_channels(&outs)?;
        let (w, bias) = (cur.next()?, cur.next()?);
        let r = tape.conv2d(cat, w, bias, 1, 0)?;
        tape.add(f, r)
    }

    /// Runs the block with its own parameters bound on `tape`.
    pub fn forward(&self, tape: &mut Tape<T>, f: Var, trainable: bool) -> Result<Var> {
        let vars = self.bind(tape, trainable);
        self.forward_with(tape, &mut Cursor::new(&vars), f)
    }

    pub fn zero(&mut self) {
        self.branches.iter_mut().for_each(ConvLayer::zero);
        self.reduce.zero();
    }
}

impl<T: Real> Network<T> for BasicBlock<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        self.push_params("block", &mut v);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        self.push_params_mut(&mut v);
        v
    }
}
