use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archive::{ArchiveError, WeightArchive};
use super::blocks::ConvLayer;
use super::spectral::{power_iteration, unit_vector, EPS};
use super::{Cursor, Network};
use crate::error::{dim, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    /// Channel widths including the 3 input channels and the 1 logit channel.
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernel: usize,
    pub padding: usize,
    pub slope: f64,
    /// Power iterations per training forward pass.
    pub power_iterations: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            channels: vec![3, 64, 128, 256, 512, 1],
            strides: vec![2, 2, 2, 1, 1],
            kernel: 4,
            padding: 1,
            slope: 0.2,
            power_iterations: 1,
        }
    }
}

impl DiscriminatorConfig {
    /// Same layers with padding 2, which keeps a non-empty logit map down to
    /// 16x16 inputs. The receptive field does not depend on padding.
    pub fn small_input() -> Self {
        Self {
            padding: 2,
            ..Self::default()
        }
    }

    /// Side of the input square seen by one output logit.
    pub fn receptive_field(&self) -> usize {
        self.strides
            .iter()
            .rev()
            .fold(1, |r, &s| (r - 1) * s + self.kernel)
    }

    pub fn output_extent(&self, size: usize) -> Option<usize> {
        self.strides.iter().try_fold(size, |s, &stride| {
            crate::tensor::conv2d_output_extent(s, self.kernel, stride, self.padding)
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct SnLayer<T> {
    conv: ConvLayer<T>,
    u: Vec<T>,
    sigma: T,
}

/// Patch discriminator: five spectrally normalized 4x4 convolutions with
/// LeakyReLU between them, emitting a map of raw logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    pub config: DiscriminatorConfig,
    layers: Vec<SnLayer<T>>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .channels
            .windows(2)
            .map(|w| SnLayer {
                conv: ConvLayer::new(w[0], w[1], config.kernel, &mut rng),
                u: unit_vector(w[1], &mut rng),
                sigma: T::one(),
            })
            .collect();
        Self { config, layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Singular value estimates from the most recent forward pass.
    pub fn sigmas(&self) -> Vec<T> {
        self.layers.iter().map(|l| l.sigma).collect()
    }

    pub fn zero(&mut self) {
        self.layers.iter_mut().for_each(|l| l.conv.zero());
    }

    pub fn forward_with(&mut self, tape: &mut Tape<T>, vars: &[Var], img: Var, update_u: bool) -> Result<Var> {
        let [_, c, h, w] = tape.shape(img);
        if c != self.config.channels[0] {
            return Err(dim("discriminator", format!("expected 3 channels, got {c}")));
        }
        if self.config.output_extent(h).is_none() || self.config.output_extent(w).is_none() {
            return Err(dim("discriminator", format!("{h}x{w} input yields an empty logit map")));
        }
        let mut cur = Cursor::new(vars);
        let mut x = img;
        let last = self.layers.len() - 1;
        for (i, (layer, &stride)) in self.layers.iter_mut().zip(&self.config.strides).enumerate() {
            let (wv, bv) = (cur.next()?, cur.next()?);
            let kernel = tape.value(wv);
            let rows = kernel.shape()[0];
            let cols = kernel.numel() / rows;
            let iters = if update_u { self.config.power_iterations } else { 0 };
            let p = power_iteration(kernel.data(), rows, cols, &layer.u, iters);
            if update_u {
                layer.u = p.u.clone();
            }
            let (wn, sigma, _) = tape.spectral_scale(wv, &p.u, &p.v, EPS)?;
            layer.sigma = sigma;
            x = tape.conv2d(x, wn, bv, stride, self.config.padding)?;
            if i < last {
                x = tape.leaky_relu(x, self.config.slope)?;
            }
        }
        Ok(x)
    }

    /// Binds parameters and runs the network. `update_u` advances the power
    /// iteration state; pass `false` for pure evaluation.
    pub fn forward(&mut self, tape: &mut Tape<T>, img: Var, trainable: bool, update_u: bool) -> Result<(Var, Vec<Var>)> {
        let vars = self.bind(tape, trainable);
        let out = self.forward_with(tape, &vars, img, update_u)?;
        Ok((out, vars))
    }

    pub fn to_archive(&self) -> WeightArchive {
        let mut ar = WeightArchive::new("discriminator");
        for (name, t) in self.parameters() {
            ar.push(&name, t);
        }
        for (i, l) in self.layers.iter().enumerate() {
            ar.push_vec(&format!("layer{i}/u"), &l.u);
        }
        ar
    }

    pub fn load_archive(&mut self, ar: &WeightArchive) -> Result<(), ArchiveError> {
        ar.expect_kind("discriminator")?;
        let mut loaded = Vec::new();
        for (name, t) in self.parameters() {
            loaded.push(ar.tensor::<T>(&name, t.shape())?);
        }
        let mut us = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            us.push(ar.vector::<T>(&format!("layer{i}/u"), l.u.len())?);
        }
        for (dst, src) in self.parameters_mut().into_iter().zip(loaded) {
            *dst = src;
        }
        for (l, u) in self.layers.iter_mut().zip(us) {
            l.u = u;
        }
        Ok(())
    }
}

impl<T: Real> Network<T> for Discriminator<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.conv.push_params(&format!("layer{i}"), &mut v);
        }
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for l in &mut self.layers {
            l.conv.push_params_mut(&mut v);
        }
        v
    }
}
