use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archive::{ArchiveError, WeightArchive};
use super::blocks::{BasicBlock, BatchNormLayer, ConvLayer};
use super::{Cursor, Network};
use crate::error::{dim, Error, Result};
use crate::tensor::{Mode, Real, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Widths of the two stride-2 encoder convolutions (shared by both branches).
    pub encoder: Vec<usize>,
    pub blocks: usize,
    pub branch_width: usize,
    pub branch_kernels: Vec<usize>,
    /// Widths of the stride-2 deconvolutions.
    pub decoder: Vec<usize>,
    pub slope: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            encoder: vec![64, 128],
            blocks: 2,
            branch_width: 64,
            branch_kernels: vec![1, 3, 5],
            decoder: vec![64, 32],
            slope: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Stage<T> {
    conv: ConvLayer<T>,
    bn: BatchNormLayer<T>,
}

/// Two-input generator: the raw image and its fusion-enhanced version are
/// encoded by identically shaped branches whose features are summed, passed
/// through residual basic blocks and decoded by deconvolutions to a tanh
/// image in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub config: GeneratorConfig,
    raw: Vec<Stage<T>>,
    fe: Vec<Stage<T>>,
    blocks: Vec<BasicBlock<T>>,
    decoder: Vec<Stage<T>>,
    output: ConvLayer<T>,
}

const IMAGE_CHANNELS: usize = 3;

impl<T: Real> Generator<T> {
    pub fn new(config: GeneratorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = |rng: &mut ChaCha8Rng| {
            let mut c = IMAGE_CHANNELS;
            config
                .encoder
                .iter()
                .map(|&w| {
                    let s = Stage {
                        conv: ConvLayer::new(c, w, 3, rng),
                        bn: BatchNormLayer::new(w),
                    };
                    c = w;
                    s
                })
                .collect::<Vec<_>>()
        };
        let raw = encoder(&mut rng);
        let fe = encoder(&mut rng);
        let width = *config.encoder.last().unwrap_or(&IMAGE_CHANNELS);
        let blocks = (0..config.blocks)
            .map(|_| BasicBlock::new(width, config.branch_width, &config.branch_kernels, config.slope, &mut rng))
            .collect();
        let mut c = width;
        let decoder = config
            .decoder
            .iter()
            .map(|&w| {
                let s = Stage {
                    conv: ConvLayer::new_transposed(c, w, 3, &mut rng),
                    bn: BatchNormLayer::new(w),
                };
                c = w;
                s
            })
            .collect();
        let output = ConvLayer::new(c, IMAGE_CHANNELS, 3, &mut rng);
        Self {
            config,
            raw,
            fe,
            blocks,
            decoder,
            output,
        }
    }

    /// Spatial extents must be divisible by this.
    pub fn downsampling(&self) -> usize {
        1 << self.config.encoder.len()
    }

    pub fn zero_output_layer(&mut self) {
        self.output.zero();
    }

    pub fn blocks_mut(&mut self) -> &mut [BasicBlock<T>] {
        &mut self.blocks
    }

    fn check_input(&self, tape: &Tape<T>, v: Var, what: &str) -> Result<()> {
        let [_, c, h, w] = tape.shape(v);
        let d = self.downsampling();
        if c != IMAGE_CHANNELS || h == 0 || w == 0 || h % d != 0 || w % d != 0 {
            return Err(dim(
                "generator",
                format!("{what} must be Nx3xHxW with H, W divisible by {d}, got {:?}", tape.shape(v)),
            ));
        }
        let tol = T::of(1e-6);
        if tape.value(v).data().iter().any(|&x| x < -T::one() - tol || x > T::one() + tol) {
            return Err(Error::Range {
                op: "generator",
                detail: format!("{what} must lie in [-1, 1]"),
            });
        }
        Ok(())
    }

    fn encode(
        stages: &mut [Stage<T>],
        slope: f64,
        tape: &mut Tape<T>,
        cur: &mut Cursor<'_>,
        mut x: Var,
        mode: Mode,
    ) -> Result<Var> {
        for s in stages {
            let (w, b) = (cur.next()?, cur.next()?);
            x = tape.conv2d(x, w, b, 2, 1)?;
            x = s.bn.forward(tape, cur, x, mode)?;
            x = tape.leaky_relu(x, slope)?;
        }
        Ok(x)
    }

    /// Forward pass with parameters already bound (see [`Network::bind`]).
    pub fn forward_with(&mut self, tape: &mut Tape<T>, vars: &[Var], y: Var, x_fe: Var, mode: Mode) -> Result<Var> {
        self.check_input(tape, y, "raw input")?;
        self.check_input(tape, x_fe, "fusion input")?;
        if tape.shape(y) != tape.shape(x_fe) {
            return Err(dim("generator", "raw and fusion inputs differ in shape"));
        }
        let slope = self.config.slope;
        let mut cur = Cursor::new(vars);
        let raw = Self::encode(&mut self.raw, slope, tape, &mut cur, y, mode)?;
        let fe = Self::encode(&mut self.fe, slope, tape, &mut cur, x_fe, mode)?;
        let mut f = tape.add(raw, fe)?;
        for b in &self.blocks {
            f = b.forward_with(tape, &mut cur, f)?;
        }
        for s in &mut self.decoder {
            let (w, b) = (cur.next()?, cur.next()?);
            f = tape.conv_transpose2d(f, w, b, 2, 1, 1)?;
            f = s.bn.forward(tape, &mut cur, f, mode)?;
            f = tape.leaky_relu(f, slope)?;
        }
        let (w, b) = (cur.next()?, cur.next()?);
        let out = tape.conv2d(f, w, b, 1, 1)?;
        tape.tanh(out)
    }

    /// Binds parameters (trainable or constant) and runs the forward pass.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        y: Var,
        x_fe: Var,
        mode: Mode,
        trainable: bool,
    ) -> Result<(Var, Vec<Var>)> {
        let vars = self.bind(tape, trainable);
        let out = self.forward_with(tape, &vars, y, x_fe, mode)?;
        Ok((out, vars))
    }

    /// Inference on plain tensors.
    pub fn infer(&mut self, y: &Tensor<T>, x_fe: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let yv = tape.constant(y.clone());
        let fv = tape.constant(x_fe.clone());
        let (out, _) = self.forward(&mut tape, yv, fv, Mode::Infer, false)?;
        Ok(tape.value(out).clone())
    }

    fn stages(&self) -> impl Iterator<Item = (String, &Stage<T>)> {
        let raw = self.raw.iter().enumerate().map(|(i, s)| (format!("raw/stage{i}"), s));
        let fe = self.fe.iter().enumerate().map(|(i, s)| (format!("fe/stage{i}"), s));
        let dec = self.decoder.iter().enumerate().map(|(i, s)| (format!("decoder/stage{i}"), s));
        raw.chain(fe).chain(dec)
    }

    pub fn to_archive(&self) -> WeightArchive {
        let mut ar = WeightArchive::new("generator");
        for (name, t) in self.parameters() {
            ar.push(&name, t);
        }
        for (prefix, s) in self.stages() {
            ar.push_vec(&format!("{prefix}/bn/running_mean"), &s.bn.state.mean);
            ar.push_vec(&format!("{prefix}/bn/running_var"), &s.bn.state.var);
        }
        ar
    }

    /// Overwrites every parameter and running statistic from `ar`.
    pub fn load_archive(&mut self, ar: &WeightArchive) -> Result<(), ArchiveError> {
        ar.expect_kind("generator")?;
        let mut loaded = Vec::new();
        for (name, t) in self.parameters() {
            loaded.push(ar.tensor::<T>(&name, t.shape())?);
        }
        let mut stats = Vec::new();
        for (prefix, s) in self.stages() {
            let c = s.bn.state.mean.len();
            stats.push(ar.vector::<T>(&format!("{prefix}/bn/running_mean"), c)?);
            stats.push(ar.vector::<T>(&format!("{prefix}/bn/running_var"), c)?);
        }
        for (dst, src) in self.parameters_mut().into_iter().zip(loaded) {
            *dst = src;
        }
        let mut stats = stats.into_iter();
        let stages = self.raw.iter_mut().chain(self.fe.iter_mut()).chain(self.decoder.iter_mut());
        for s in stages {
            s.bn.state.mean = stats.next().expect("collected above");
            s.bn.state.var = stats.next().expect("collected above");
        }
        Ok(())
    }

    pub fn from_archive(config: GeneratorConfig, ar: &WeightArchive) -> Result<Self, ArchiveError> {
        let mut g = Self::new(config, 0);
        g.load_archive(ar)?;
        Ok(g)
    }
}

impl<T: Real> Network<T> for Generator<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        for (i, s) in self.raw.iter().enumerate() {
            s.conv.push_params(&format!("raw/stage{i}/conv"), &mut v);
            s.bn.push_params(&format!("raw/stage{i}/bn"), &mut v);
        }
        for (i, s) in self.fe.iter().enumerate() {
            s.conv.push_params(&format!("fe/stage{i}/conv"), &mut v);
            s.bn.push_params(&format!("fe/stage{i}/bn"), &mut v);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.push_params(&format!("block{i}"), &mut v);
        }
        for (i, s) in self.decoder.iter().enumerate() {
            s.conv.push_params(&format!("decoder/stage{i}/deconv"), &mut v);
            s.bn.push_params(&format!("decoder/stage{i}/bn"), &mut v);
        }
        self.output.push_params("output/conv", &mut v);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for s in self.raw.iter_mut().chain(self.fe.iter_mut()) {
            s.conv.push_params_mut(&mut v);
            s.bn.push_params_mut(&mut v);
        }
        for b in &mut self.blocks {
            b.push_params_mut(&mut v);
        }
        for s in &mut self.decoder {
            s.conv.push_params_mut(&mut v);
            s.bn.push_params_mut(&mut v);
        }
        self.output.push_params_mut(&mut v);
        v
    }
}
