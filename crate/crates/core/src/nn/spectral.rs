//! Spectral normalization by power iteration.
//!
//! A kernel `[out, in, kh, kw]` is viewed as an `out x (in*kh*kw)` matrix.
//! The left singular vector estimate `u` is persisted between calls so a
//! single iteration per training step keeps the estimate accurate.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Real, Tensor};

/// Floor for vector norms and for the singular value estimate.
pub const EPS: f64 = 1e-12;

pub fn unit_vector<T: Real>(n: usize, rng: &mut impl Rng) -> Vec<T> {
    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(EPS);
    v.into_iter().map(|x| T::of(x / norm)).collect()
}

fn normalize<T: Real>(v: &mut [T]) -> T {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    let d = norm.max(T::of(EPS));
    v.iter_mut().for_each(|x| *x = *x / d);
    norm
}

/// `W^T u` for row-major `W` of shape `rows x cols`.
fn mat_t_vec<T: Real>(w: &[T], rows: usize, cols: usize, u: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for (i, &ui) in u.iter().enumerate().take(rows) {
        for (o, &wij) in out.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *o = *o + wij * ui;
        }
    }
    out
}

fn mat_vec<T: Real>(w: &[T], rows: usize, cols: usize, v: &[T]) -> Vec<T> {
    (0..rows)
        .map(|i| w[i * cols..(i + 1) * cols].iter().zip(v).map(|(&a, &b)| a * b).sum())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerIteration<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub sigma: T,
    /// The matrix is numerically zero; `sigma` was clamped to [`EPS`].
    pub degenerate: bool,
}

/// Runs `iters` rounds of `v = W^T u / |W^T u|, u = W v / |W v|` from `u`,
/// then returns `v = W^T u / |W^T u|` and `sigma = u^T W v = |W^T u|`.
/// With `iters = 0` this only reads the current estimate.
pub fn power_iteration<T: Real>(w: &[T], rows: usize, cols: usize, u: &[T], iters: usize) -> PowerIteration<T> {
    let mut u = u.to_vec();
    for _ in 0..iters {
        let mut v = mat_t_vec(w, rows, cols, &u);
        if normalize(&mut v) < T::of(EPS) {
            break;
        }
        let mut next = mat_vec(w, rows, cols, &v);
        if normalize(&mut next) < T::of(EPS) {
            break;
        }
        u = next;
    }
    let mut v = mat_t_vec(w, rows, cols, &u);
    let sigma = normalize(&mut v);
    let degenerate = sigma < T::of(EPS);
    PowerIteration {
        u,
        v,
        sigma: if degenerate { T::of(EPS) } else { sigma },
        degenerate,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralNorm<T> {
    pub normalized: Tensor<T>,
    pub sigma: T,
    pub degenerate: bool,
}

/// Divides `kernel` by its estimated largest singular value. An empty
/// `u_state` is initialized to a random unit vector from `rng`.
pub fn spectral_normalize<T: Real>(
    kernel: &Tensor<T>,
    u_state: &mut Vec<T>,
    iters: usize,
    rng: &mut impl Rng,
) -> SpectralNorm<T> {
    let rows = kernel.shape()[0];
    let cols = kernel.numel() / rows.max(1);
    if u_state.len() != rows {
        *u_state = unit_vector(rows, rng);
    }
    let p = power_iteration(kernel.data(), rows, cols, u_state, iters);
    *u_state = p.u;
    SpectralNorm {
        normalized: kernel.map(|x| x / p.sigma),
        sigma: p.sigma,
        degenerate: p.degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_converges_to_top_value() {
        let w = Tensor::<f64>::new([2, 2, 1, 1], vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut u = Vec::new();
        let s1 = spectral_normalize(&w, &mut u, 1, &mut rng).sigma;
        let s = spectral_normalize(&w, &mut u, 30, &mut rng).sigma;
        assert!(s1 <= 3.0 + 1e-12);
        assert!((s - 3.0).abs() < 1e-9);
    }

    #[test]
    fn identity_is_unchanged() {
        let w = Tensor::<f64>::from_fn([3, 3, 1, 1], |[o, i, _, _]| if o == i { 1.0 } else { 0.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut u = Vec::new();
        let r = spectral_normalize(&w, &mut u, 5, &mut rng);
        assert!((r.sigma - 1.0).abs() < 1e-12);
        for (a, b) in r.normalized.data().iter().zip(w.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_kernel_is_flagged() {
        let w = Tensor::<f64>::zeros([4, 2, 3, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut u = Vec::new();
        let r = spectral_normalize(&w, &mut u, 3, &mut rng);
        assert!(r.degenerate);
        assert_eq!(r.sigma, EPS);
        assert!(r.normalized.data().iter().all(|&x| x == 0.0));
        assert!((u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
