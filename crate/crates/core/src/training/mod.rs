//! Adversarial objective, optimizer and the toy training loop.

mod adam;
pub mod gradcheck;
mod toy;

pub use adam::{Adam, AdamConfig};
pub use toy::{batch_from_triples, degrade, synthetic_triples, trailing_mean, train_toy, LossRecord, ToyConfig, ToyRun, ToyTriple};

use serde::{Deserialize, Serialize};

use crate::error::{arg, dim, Error, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

/// Raw input `y`, ground truth `x` and fusion-enhanced `x_fe`, all in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingBatch<T> {
    pub y: Tensor<T>,
    pub x: Tensor<T>,
    pub x_fe: Tensor<T>,
}

impl<T: Real> TrainingBatch<T> {
    pub fn new(y: Tensor<T>, x: Tensor<T>, x_fe: Tensor<T>) -> Result<Self> {
        if y.shape() != x.shape() || y.shape() != x_fe.shape() {
            return Err(dim(
                "training_batch",
                format!("{:?}, {:?}, {:?}", y.shape(), x.shape(), x_fe.shape()),
            ));
        }
        let tol = T::of(1e-6);
        for t in [&y, &x, &x_fe] {
            if t.data().iter().any(|&v| !(v >= -T::one() - tol && v <= T::one() + tol)) {
                return Err(Error::Range {
                    op: "training_batch",
                    detail: "values must lie in [-1, 1]".into(),
                });
            }
        }
        Ok(Self { y, x, x_fe })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_gt: f64,
    pub lambda_fe: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_gt: 10.0,
            lambda_fe: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_gt >= 0.0 && self.lambda_fe >= 0.0) {
            return Err(arg("loss_weights", "weights must be non-negative"));
        }
        Ok(())
    }
}

/// Raw discriminator logit maps for real images and generated images.
#[derive(Clone, Copy, Debug)]
pub struct LogitPair {
    pub c_real: Var,
    pub c_fake: Var,
}

pub fn rasgan_d_loss<T: Real>(tape: &mut Tape<T>, p: LogitPair) -> Result<Var> {
    tape.relativistic(p.c_real, p.c_fake)
}

pub fn rasgan_g_loss<T: Real>(tape: &mut Tape<T>, p: LogitPair) -> Result<Var> {
    tape.relativistic(p.c_fake, p.c_real)
}

pub fn l_gt<T: Real>(tape: &mut Tape<T>, x: Var, g_y: Var) -> Result<Var> {
    tape.l1_distance(x, g_y)
}

pub fn l_fe<T: Real>(tape: &mut Tape<T>, x_fe: Var, g_y: Var) -> Result<Var> {
    tape.l1_distance(x_fe, g_y)
}

/// Every term of the generator objective, kept for logging.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorLoss {
    pub total: Var,
    pub adversarial: Var,
    pub gt: Var,
    pub fe: Var,
}

/// `L_G + lambda_gt * L_gt + lambda_fe * L_fe`.
pub fn total_generator_loss<T: Real>(
    tape: &mut Tape<T>,
    p: LogitPair,
    x: Var,
    x_fe: Var,
    g_y: Var,
    w: LossWeights,
) -> Result<GeneratorLoss> {
    w.validate()?;
    let adversarial = rasgan_g_loss(tape, p)?;
    let gt = l_gt(tape, x, g_y)?;
    let fe = l_fe(tape, x_fe, g_y)?;
    let gt_w = tape.scale(gt, w.lambda_gt)?;
    let fe_w = tape.scale(fe, w.lambda_fe)?;
    let sum = tape.add(adversarial, gt_w)?;
    let total = tape.add(sum, fe_w)?;
    Ok(GeneratorLoss {
        total,
        adversarial,
        gt,
        fe,
    })
}
