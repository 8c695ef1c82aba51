//! Generator and discriminator networks over the tensor tape.

pub mod archive;
mod blocks;
mod discriminator;
mod generator;
pub mod spectral;

pub use archive::{ArchiveError, WeightArchive};
pub use blocks::{BasicBlock, BatchNormLayer, ConvLayer};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig};

use crate::tensor::{Real, Tape, Tensor, Var};

/// Anything with an ordered list of named trainable tensors.
pub trait Network<T: Real> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>>;

    /// Exact number of trainable scalars.
    fn count_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Places every parameter on `tape`, in [`Network::parameters`] order.
    fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.parameters()
            .into_iter()
            .map(|(_, t)| tape.leaf(t.clone(), trainable))
            .collect()
    }
}

/// Walks bound parameter handles in declaration order.
pub(crate) struct Cursor<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(vars: &'a [Var]) -> Self {
        Self { vars, pos: 0 }
    }

    pub(crate) fn next(&mut self) -> crate::Result<Var> {
        let v = self.vars.get(self.pos).copied().ok_or_else(|| {
            crate::error::arg("network", format!("only {} parameter handles bound", self.vars.len()))
        })?;
        self.pos += 1;
        Ok(v)
    }
}
