//! Central finite-difference checks of tape gradients in 64-bit precision.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::nn::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, Network};
use crate::tensor::{BatchNormState, Mode, Tape, Tensor, Var};
use crate::training::{total_generator_loss, LogitPair, LossWeights};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GradcheckRow {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

/// Compares the tape gradient of `f` against central differences.
///
/// `f` builds a scalar from leaves bound to `inputs` (in order). When
/// `probes` is `Some(k)`, at most `k` coordinates per input are checked,
/// chosen by `rng`; otherwise every coordinate is.
pub fn check<F>(
    inputs: &[Tensor<f64>],
    probes: Option<usize>,
    rng: &mut impl Rng,
    f: F,
) -> Result<(usize, f64)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = f(&mut tape, &vars)?;
    // Rounding in the differenced loss scales with its magnitude.
    let floor = 1e-6 * tape.value(loss).item().abs().max(1.0);
    tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        let n = inputs[i].numel();
        let picks: Vec<usize> = match probes {
            Some(k) if k < n => {
                let mut v = sample(rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for j in picks {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + STEP;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - STEP;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic[i].data()[j], numeric, floor));
            checked += 1;
        }
    }
    Ok((checked, worst))
}

fn row(name: &str, r: (usize, f64)) -> GradcheckRow {
    GradcheckRow {
        name: name.to_string(),
        checked: r.0,
        max_rel_error: r.1,
    }
}

/// Gradient checks for every differentiable op and for the generator-side
/// objective through the full generator on 4x3x16x16 inputs.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradcheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let r = &mut rng;

    let x = Tensor::<f64>::randn([2, 3, 6, 5], 1.0, r);
    let k = Tensor::randn([4, 3, 3, 3], 0.5, r);
    let b = Tensor::randn([1, 4, 1, 1], 0.5, r);
    rows.push(row(
        "conv2d",
        check(&[x, k, b], None, r, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 2, 1)?;
            let s = t.mul(y, y)?;
            t.mean(s)
        })?,
    ));

    let x = Tensor::<f64>::randn([2, 3, 4, 3], 1.0, r);
    let k = Tensor::randn([3, 2, 3, 3], 0.5, r);
    let b = Tensor::randn([1, 2, 1, 1], 0.5, r);
    rows.push(row(
        "conv_transpose2d",
        check(&[x, k, b], None, r, |t, v| {
            let y = t.conv_transpose2d(v[0], v[1], v[2], 2, 1, 1)?;
            let s = t.mul(y, y)?;
            t.mean(s)
        })?,
    ));

    for mode in [Mode::Train, Mode::Infer] {
        let x = Tensor::<f64>::randn([4, 2, 3, 3], 1.0, r);
        let g = Tensor::uniform([1, 2, 1, 1], 0.5, 1.5, r);
        let bt = Tensor::randn([1, 2, 1, 1], 0.5, r);
        let w = Tensor::randn([4, 2, 3, 3], 1.0, r);
        let mut state = BatchNormState::new(2);
        state.mean = vec![0.1, -0.2];
        state.var = vec![0.8, 1.3];
        let name = if mode == Mode::Train { "batch_norm(train)" } else { "batch_norm(infer)" };
        rows.push(row(
            name,
            check(&[x, g, bt], None, r, |t, v| {
                let mut st = state.clone();
                let y = t.batch_norm(v[0], v[1], v[2], &mut st, mode)?;
                let wv = t.constant(w.clone());
                let s = t.mul(y, wv)?;
                let s = t.mul(s, y)?;
                t.mean(s)
            })?,
        ));
    }

    let x = Tensor::<f64>::randn([2, 2, 3, 3], 1.0, r);
    let w = Tensor::<f64>::randn([2, 2, 3, 3], 1.0, r);
    for name in ["leaky_relu", "sigmoid", "tanh", "scale"] {
        let wv = w.clone();
        rows.push(row(
            name,
            check(std::slice::from_ref(&x), None, r, |t, v| {
                let y = match name {
                    "leaky_relu" => t.leaky_relu(v[0], 0.2)?,
                    "sigmoid" => t.sigmoid(v[0])?,
                    "tanh" => t.tanh(v[0])?,
                    _ => t.scale(v[0], -1.7)?,
                };
                let c = t.constant(wv.clone());
                let s = t.mul(y, c)?;
                t.mean(s)
            })?,
        ));
    }

    let a = Tensor::<f64>::randn([2, 2, 3, 3], 1.0, r);
    let bb = Tensor::<f64>::randn([2, 2, 3, 3], 1.0, r);
    for name in ["add", "subtract", "multiply", "l1_distance"] {
        rows.push(row(
            name,
            check(&[a.clone(), bb.clone()], None, r, |t, v| {
                let y = match name {
                    "add" => t.add(v[0], v[1])?,
                    "subtract" => t.sub(v[0], v[1])?,
                    "multiply" => t.mul(v[0], v[1])?,
                    _ => return t.l1_distance(v[0], v[1]),
                };
                let s = t.mul(y, y)?;
                t.mean(s)
            })?,
        ));
    }

    let a = Tensor::<f64>::randn([2, 1, 2, 3], 1.0, r);
    let c = Tensor::<f64>::randn([2, 3, 2, 3], 1.0, r);
    let w = Tensor::<f64>::randn([2, 4, 2, 3], 1.0, r);
    rows.push(row(
        "concat_channels",
        check(&[a, c], None, r, |t, v| {
            let y = t.concat_channels(&[v[0], v[1]])?;
            let wv = t.constant(w.clone());
            let s = t.mul(y, wv)?;
            let s = t.mul(s, y)?;
            t.mean(s)
        })?,
    ));

    let a = Tensor::<f64>::randn([1, 2, 2, 3], 1.0, r);
    let c = Tensor::<f64>::randn([2, 2, 2, 3], 1.0, r);
    let w = Tensor::<f64>::randn([2, 2, 2, 3], 1.0, r);
    rows.push(row(
        "concat_batch/slice_batch",
        check(&[a, c], None, r, |t, v| {
            let y = t.concat_batch(&[v[0], v[1]])?;
            let y = t.slice_batch(y, 1, 3)?;
            let wv = t.constant(w.clone());
            let s = t.mul(y, wv)?;
            let s = t.mul(s, y)?;
            t.mean(s)
        })?,
    ));

    let real = Tensor::<f64>::randn([2, 1, 3, 3], 1.5, r);
    let fake = Tensor::<f64>::randn([2, 1, 3, 3], 1.5, r);
    rows.push(row(
        "relativistic",
        check(&[real, fake], None, r, |t, v| t.relativistic(v[0], v[1]))?,
    ));

    let kern = Tensor::<f64>::randn([4, 2, 2, 2], 1.0, r);
    let u: Vec<f64> = crate::nn::spectral::unit_vector(4, r);
    let vv: Vec<f64> = crate::nn::spectral::unit_vector(8, r);
    let w = Tensor::<f64>::randn([4, 2, 2, 2], 1.0, r);
    rows.push(row(
        "spectral_scale",
        check(&[kern], None, r, |t, v| {
            let (y, _, _) = t.spectral_scale(v[0], &u, &vv, 1e-12)?;
            let wv = t.constant(w.clone());
            let s = t.mul(y, wv)?;
            t.mean(s)
        })?,
    ));

    rows.push(generator_objective_check(r)?);
    Ok(rows)
}

/// Total generator loss through the full generator and a discriminator on
/// 4x3x16x16 toys, probing a few coordinates of every parameter tensor and
/// of the raw input.
fn generator_objective_check(rng: &mut ChaCha8Rng) -> Result<GradcheckRow> {
    let shape = [4, 3, 16, 16];
    let gen = Generator::<f64>::new(GeneratorConfig::default(), rng.gen());
    let disc = Discriminator::<f64>::new(DiscriminatorConfig::small_input(), rng.gen());
    let y = Tensor::<f64>::uniform(shape, -1.0, 1.0, rng);
    let x = Tensor::<f64>::uniform(shape, -1.0, 1.0, rng);
    let x_fe = Tensor::<f64>::uniform(shape, -1.0, 1.0, rng);
    let weights = LossWeights::default();

    let mut inputs: Vec<Tensor<f64>> = gen.parameters().into_iter().map(|(_, t)| t.clone()).collect();
    let n_params = inputs.len();
    inputs.push(y.clone());

    let result = check(&inputs, Some(2), rng, |t, v| {
        let mut g = gen.clone();
        let mut d = disc.clone();
        let fev = t.constant(x_fe.clone());
        let g_y = g.forward_with(t, &v[..n_params], v[n_params], fev, Mode::Train)?;
        let dvars = d.bind(t, false);
        let real = t.constant(x.clone());
        let c_real = d.forward_with(t, &dvars, real, false)?;
        let c_fake = d.forward_with(t, &dvars, g_y, false)?;
        let xv = t.constant(x.clone());
        let terms = total_generator_loss(t, LogitPair { c_real, c_fake }, xv, fev, g_y, weights)?;
        Ok(terms.total)
    })?;
    Ok(row("total_generator_loss(generator 4x3x16x16)", result))
}
