use aquafuse::tensor::{Tape, Tensor};
use aquafuse::training::{l_fe, l_gt, rasgan_d_loss, rasgan_g_loss, total_generator_loss, LogitPair, LossWeights};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ln_sigmoid(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

/// Direct evaluation of the relativistic average loss on flat slices.
fn relativistic_oracle(real: &[f64], fake: &[f64]) -> f64 {
    let mr = real.iter().sum::<f64>() / real.len() as f64;
    let mf = fake.iter().sum::<f64>() / fake.len() as f64;
    let a = real.iter().map(|r| ln_sigmoid(r - mf)).sum::<f64>() / real.len() as f64;
    let b = fake
        .iter()
        .map(|f| (1.0 - 1.0 / (1.0 + (-(f - mr)).exp())).ln())
        .sum::<f64>()
        / fake.len() as f64;
    -a - b
}

fn pair(t: &mut Tape<f64>, real: &Tensor<f64>, fake: &Tensor<f64>) -> LogitPair {
    LogitPair {
        c_real: t.constant(real.clone()),
        c_fake: t.constant(fake.clone()),
    }
}

#[test]
fn identical_logits_give_two_ln_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let c = Tensor::full([3, 1, 4, 4], rand::Rng::gen_range(&mut rng, -5.0..5.0));
        let mut t = Tape::new();
        let p = pair(&mut t, &c, &c);
        let d = rasgan_d_loss(&mut t, p).unwrap();
        let g = rasgan_g_loss(&mut t, p).unwrap();
        let expect = 2.0 * std::f64::consts::LN_2;
        assert!((t.value(d).item() - expect).abs() < 1e-9);
        assert!((t.value(g).item() - expect).abs() < 1e-9);
    }
}

#[test]
fn saturated_logits_stay_finite() {
    let real = Tensor::<f64>::full([1, 1, 2, 2], 1e4);
    let fake = Tensor::<f64>::full([1, 1, 2, 2], -1e4);
    let mut t = Tape::new();
    let p = pair(&mut t, &real, &fake);
    let d = rasgan_d_loss(&mut t, p).unwrap();
    let g = rasgan_g_loss(&mut t, p).unwrap();
    assert!(t.value(d).item().abs() < 1e-9);
    // Both log terms hit the 1e-12 floor.
    assert!((t.value(g).item() + 2.0 * 1e-12f64.ln()).abs() < 1e-6);
}

#[test]
fn discriminator_and_generator_losses_swap_roles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let real = Tensor::<f64>::randn([2, 1, 3, 3], 1.0, &mut rng);
    let fake = Tensor::<f64>::randn([2, 1, 3, 3], 1.0, &mut rng);
    let mut t = Tape::new();
    let p = pair(&mut t, &real, &fake);
    let g = rasgan_g_loss(&mut t, p).unwrap();
    let swapped = pair(&mut t, &fake, &real);
    let d = rasgan_d_loss(&mut t, swapped).unwrap();
    assert_eq!(t.value(g).item(), t.value(d).item());
}

#[test]
fn fe_weight_zero_removes_its_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = [1, 3, 4, 4];
    let x = Tensor::<f64>::uniform(shape, -1.0, 1.0, &mut rng);
    let fe = Tensor::<f64>::uniform(shape, -1.0, 1.0, &mut rng);
    let other_fe = Tensor::<f64>::uniform(shape, -1.0, 1.0, &mut rng);
    let gy = Tensor::<f64>::uniform(shape, -1.0, 1.0, &mut rng);
    let logits = Tensor::<f64>::randn([1, 1, 2, 2], 1.0, &mut rng);
    let w = LossWeights { lambda_gt: 10.0, lambda_fe: 0.0 };
    let grad = |target: &Tensor<f64>| {
        let mut t = Tape::new();
        let p = pair(&mut t, &logits, &logits);
        let g = t.param(&gy);
        let (xv, fv) = (t.constant(x.clone()), t.constant(target.clone()));
        let l = total_generator_loss(&mut t, p, xv, fv, g, w).unwrap();
        t.backward(l.total).unwrap();
        t.grad(g).unwrap().clone()
    };
    assert_eq!(grad(&fe), grad(&other_fe));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relativistic_matches_oracle(seed in 0u64..10_000, scale in 0.1f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real = Tensor::<f64>::randn([2, 1, 3, 2], scale, &mut rng);
        let fake = Tensor::<f64>::randn([2, 1, 3, 2], scale, &mut rng);
        let mut t = Tape::new();
        let p = pair(&mut t, &real, &fake);
        let d = rasgan_d_loss(&mut t, p).unwrap();
        let expect = relativistic_oracle(real.data(), fake.data());
        prop_assert!((t.value(d).item() - expect).abs() < 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn l1_terms_match_oracle(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f64>::uniform([2, 3, 4, 4], -1.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform([2, 3, 4, 4], -1.0, 1.0, &mut rng);
        let oracle = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.numel() as f64;
        let mut t = Tape::new();
        let (av, bv) = (t.constant(a), t.constant(b));
        let gt = l_gt(&mut t, av, bv).unwrap();
        let fe = l_fe(&mut t, av, bv).unwrap();
        prop_assert!((t.value(gt).item() - oracle).abs() < 1e-12);
        prop_assert_eq!(t.value(gt).item(), t.value(fe).item());
    }

    #[test]
    fn total_is_affine_in_weights(lg in 0.0f64..20.0, lf in 0.0f64..20.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [1, 3, 4, 4];
        let x = Tensor::<f64>::uniform(shape, -1.0, 1.0, &mut rng);
        let fe = Tensor::<f64>::uniform(shape, -1.0, 1.0, &mut rng);
        let gy = Tensor::<f64>::uniform(shape, -1.0, 1.0, &mut rng);
        let c = Tensor::<f64>::randn([1, 1, 2, 2], 1.0, &mut rng);
        let f = Tensor::<f64>::randn([1, 1, 2, 2], 1.0, &mut rng);
        let mut t = Tape::new();
        let p = pair(&mut t, &c, &f);
        let (xv, fv, gv) = (t.constant(x), t.constant(fe), t.constant(gy));
        let l = total_generator_loss(&mut t, p, xv, fv, gv, LossWeights { lambda_gt: lg, lambda_fe: lf }).unwrap();
        let v = |var| t.value(var).item();
        let expect = v(l.adversarial) + lg * v(l.gt) + lf * v(l.fe);
        prop_assert!((v(l.total) - expect).abs() < 1e-10);
    }
}
