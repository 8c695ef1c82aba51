//! Seeded desk-scale adversarial training on synthetic underwater pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{total_generator_loss, Adam, AdamConfig, LogitPair, LossWeights, TrainingBatch};
use crate::error::{arg, Error, Result};
use crate::fusion::{fusion_enhance, FusionConfig};
use crate::imaging::{images_to_tensor, ImageRGB};
use crate::nn::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, Network};
use crate::tensor::{Mode, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    /// Generator updates.
    pub steps: usize,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            d_steps: 5,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

/// Losses logged after one generator update. `d` is the last
/// discriminator loss of the preceding inner loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub d: f64,
    pub g_adv: f64,
    pub gt: f64,
    pub fe: f64,
    pub total: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "step,L_D,L_G,L_gt,L_fe,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9}",
            self.step, self.d, self.g_adv, self.gt, self.fe, self.total
        )
    }
}

pub struct ToyRun {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub losses: Vec<LossRecord>,
}

impl ToyRun {
    /// Loss curve as CSV with a schema line.
    pub fn losses_csv(&self) -> String {
        let mut s = format!("# schema=1\n{}\n", LossRecord::CSV_HEADER);
        for r in &self.losses {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Mean of the `window` values ending at index `end` (inclusive).
pub fn trailing_mean(values: &[f64], end: usize, window: usize) -> f64 {
    let start = (end + 1).saturating_sub(window);
    let s = &values[start..=end];
    s.iter().sum::<f64>() / s.len() as f64
}

/// Ground truth, degraded observation and its fusion-enhanced version,
/// all snapped to 8-bit values.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyTriple {
    pub x: ImageRGB,
    pub y: ImageRGB,
    pub x_fe: ImageRGB,
}

fn smooth_field(size: usize, rng: &mut ChaCha8Rng) -> ImageRGB {
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.25..0.75));
    let waves: Vec<([f64; 3], f64, f64, f64)> = (0..4)
        .map(|_| {
            let amp = std::array::from_fn(|_| rng.gen_range(-0.15..0.15));
            let fx = rng.gen_range(0.5..2.5);
            let fy = rng.gen_range(0.5..2.5);
            (amp, fx, fy, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let s = size as f64;
    ImageRGB::from_fn_clamped(size, size, |x, y| {
        let mut p = base;
        for (amp, fx, fy, phase) in &waves {
            let t = (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) / s + phase).sin();
            for c in 0..3 {
                p[c] += amp[c] * t;
            }
        }
        p
    })
    .quantized()
}

/// Attenuates red strongly and blends in a blue-green veil.
pub fn degrade(x: &ImageRGB, rng: &mut ChaCha8Rng) -> ImageRGB {
    let att = [rng.gen_range(0.25..0.45), rng.gen_range(0.8..0.95), rng.gen_range(0.7..0.9)];
    let veil = [rng.gen_range(0.05..0.15), rng.gen_range(0.4..0.6), rng.gen_range(0.45..0.65)];
    let t = rng.gen_range(0.6..0.8);
    ImageRGB::from_fn_clamped(x.width, x.height, |i, j| {
        let p = x.pixels[j * x.width + i];
        std::array::from_fn(|c| t * att[c] * p[c] + (1.0 - t) * veil[c])
    })
    .quantized()
}

pub fn synthetic_triples(n: usize, size: usize, seed: u64) -> Result<Vec<ToyTriple>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fusion = FusionConfig::default();
    (0..n)
        .map(|_| {
            let x = smooth_field(size, &mut rng);
            let y = degrade(&x, &mut rng);
            let x_fe = fusion_enhance(&y, &fusion)?.quantized();
            Ok(ToyTriple { x, y, x_fe })
        })
        .collect()
}

/// Stacks triples into one batch in `[-1, 1]`.
pub fn batch_from_triples(triples: &[ToyTriple]) -> Result<TrainingBatch<f32>> {
    let pick = |f: fn(&ToyTriple) -> &ImageRGB| -> Vec<ImageRGB> { triples.iter().map(|t| f(t).clone()).collect() };
    TrainingBatch::new(
        images_to_tensor(&pick(|t| &t.y))?,
        images_to_tensor(&pick(|t| &t.x))?,
        images_to_tensor(&pick(|t| &t.x_fe))?,
    )
}

fn grads_of(tape: &mut Tape<f32>, vars: &[Var], params: &[&mut Tensor<f32>]) -> Vec<Tensor<f32>> {
    vars.iter()
        .zip(params)
        .map(|(&v, p)| tape.take_grad(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect()
}

/// Scores real and generated images in one discriminator pass.
fn paired_logits(
    d: &mut Discriminator<f32>,
    tape: &mut Tape<f32>,
    vars: &[Var],
    real: Var,
    fake: Var,
    update_u: bool,
) -> Result<LogitPair> {
    let n = tape.shape(real)[0];
    let both = tape.concat_batch(&[real, fake])?;
    let logits = d.forward_with(tape, vars, both, update_u)?;
    Ok(LogitPair {
        c_real: tape.slice_batch(logits, 0, n)?,
        c_fake: tape.slice_batch(logits, n, 2 * n)?,
    })
}

fn finite_or_diverged(step: usize, name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Diverged {
            step,
            detail: format!("{name} = {v}"),
        })
    }
}

/// Alternating updates: `d_steps` discriminator steps on the relativistic
/// loss, then one generator step on the weighted generator objective.
/// Batches are visited in order, cycling.
pub fn train_toy(config: &ToyConfig, data: &[TrainingBatch<f32>], seed: u64) -> Result<ToyRun> {
    if data.is_empty() {
        return Err(arg("train_toy", "at least one batch is required"));
    }
    config.weights.validate()?;
    let mut g = Generator::<f32>::new(config.generator.clone(), seed);
    let mut d = Discriminator::<f32>::new(config.discriminator.clone(), seed.wrapping_add(1));
    let mut opt_g = Adam::new(config.adam);
    let mut opt_d = Adam::new(config.adam);
    let mut losses = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let batch = &data[step % data.len()];
        let mut tape = Tape::new();
        let y = tape.constant(batch.y.clone());
        let x_fe = tape.constant(batch.x_fe.clone());
        let (g_y, g_vars) = g.forward(&mut tape, y, x_fe, Mode::Train, true)?;
        let fake = tape.value(g_y).clone();

        let mut d_loss = f64::NAN;
        for _ in 0..config.d_steps {
            let mut dt = Tape::new();
            let vars = d.bind(&mut dt, true);
            let real = dt.constant(batch.x.clone());
            let fake_v = dt.constant(fake.clone());
            let pair = paired_logits(&mut d, &mut dt, &vars, real, fake_v, true)?;
            let loss = super::rasgan_d_loss(&mut dt, pair)?;
            d_loss = finite_or_diverged(step, "L_D", dt.value(loss).item().into())?;
            dt.backward(loss)?;
            let mut params = d.parameters_mut();
            let grads = grads_of(&mut dt, &vars, &params);
            opt_d.step(&mut params, &grads)?;
        }

        let d_vars = d.bind(&mut tape, false);
        let x = tape.constant(batch.x.clone());
        let pair = paired_logits(&mut d, &mut tape, &d_vars, x, g_y, false)?;
        let l = total_generator_loss(&mut tape, pair, x, x_fe, g_y, config.weights)?;
        let scalar = |t: &Tape<f32>, v: Var| -> f64 { t.value(v).item().into() };
        let record = LossRecord {
            step: step + 1,
            d: if config.d_steps == 0 { 0.0 } else { d_loss },
            g_adv: finite_or_diverged(step, "L_G", scalar(&tape, l.adversarial))?,
            gt: finite_or_diverged(step, "L_gt", scalar(&tape, l.gt))?,
            fe: finite_or_diverged(step, "L_fe", scalar(&tape, l.fe))?,
            total: finite_or_diverged(step, "total", scalar(&tape, l.total))?,
        };
        tape.backward(l.total)?;
        let mut params = g.parameters_mut();
        let grads = grads_of(&mut tape, &g_vars, &params);
        opt_g.step(&mut params, &grads)?;
        losses.push(record);
    }
    Ok(ToyRun {
        generator: g,
        discriminator: d,
        losses,
    })
}
