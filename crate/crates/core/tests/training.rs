use aquafuse::imaging::{canny, CANNY_HIGH, CANNY_LOW};
use aquafuse::imaging::color::to_gray;
use aquafuse::metrics::{score_image, MetricConfig, MetricReport, ScoredImage, Subset};
use aquafuse::training::{batch_from_triples, synthetic_triples, train_toy, trailing_mean, LossRecord, ToyConfig};

fn short_config(steps: usize) -> ToyConfig {
    ToyConfig {
        steps,
        d_steps: 2,
        ..ToyConfig::default()
    }
}

#[test]
fn synthetic_triples_are_reproducible_and_valid() {
    let a = synthetic_triples(3, 32, 5).unwrap();
    let b = synthetic_triples(3, 32, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, synthetic_triples(3, 32, 6).unwrap());
    for t in &a {
        // The degradation suppresses red, and the enhancer restores balance.
        let m = t.y.channel_means();
        assert!(m[0] < m[1] && m[0] < m[2]);
        assert!(t.x_fe.channel_mean_gap() < t.y.channel_mean_gap());
    }
    let batch = batch_from_triples(&a).unwrap();
    assert_eq!(batch.y.shape(), [3, 3, 32, 32]);
    assert!(batch.x.data().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn toy_runs_are_bitwise_reproducible() {
    let data = vec![batch_from_triples(&synthetic_triples(2, 32, 1).unwrap()).unwrap()];
    let cfg = short_config(3);
    let a = train_toy(&cfg, &data, 4).unwrap();
    let b = train_toy(&cfg, &data, 4).unwrap();
    assert_eq!(a.losses_csv(), b.losses_csv());
    assert_eq!(a.generator.to_archive().to_bytes(), b.generator.to_archive().to_bytes());
    assert_eq!(a.discriminator.to_archive().to_bytes(), b.discriminator.to_archive().to_bytes());
    let c = train_toy(&cfg, &data, 5).unwrap();
    assert_ne!(a.losses_csv(), c.losses_csv());
}

#[test]
fn loss_log_is_complete_and_finite() {
    let data = vec![batch_from_triples(&synthetic_triples(2, 32, 2).unwrap()).unwrap()];
    let run = train_toy(&short_config(4), &data, 0).unwrap();
    assert_eq!(run.losses.len(), 4);
    for (i, r) in run.losses.iter().enumerate() {
        assert_eq!(r.step, i + 1);
        for v in [r.d, r.g_adv, r.gt, r.fe, r.total] {
            assert!(v.is_finite());
        }
        assert!((r.total - (r.g_adv + 10.0 * r.gt + 0.5 * r.fe)).abs() < 1e-4 * r.total.abs());
    }
    let csv = run.losses_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    assert_eq!(lines.next(), Some(LossRecord::CSV_HEADER));
    assert_eq!(lines.count(), 4);
}

#[test]
fn bad_training_inputs_are_errors() {
    assert!(train_toy(&short_config(1), &[], 0).is_err());
    let data = vec![batch_from_triples(&synthetic_triples(1, 32, 2).unwrap()).unwrap()];
    let mut cfg = short_config(1);
    cfg.weights.lambda_fe = -1.0;
    assert!(train_toy(&cfg, &data, 0).is_err());
}

#[test]
fn trailing_mean_windows() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(trailing_mean(&v, 3, 2), 3.5);
    assert_eq!(trailing_mean(&v, 1, 10), 1.5);
}

#[test]
fn edge_maps_and_metric_csvs_are_reproducible() {
    let triples = synthetic_triples(2, 32, 3).unwrap();
    let cfg = MetricConfig::default();
    let report = || {
        let images = triples
            .iter()
            .enumerate()
            .map(|(i, t)| ScoredImage {
                name: format!("{i}.png"),
                subset: Subset::Green,
                scores: score_image(&t.x_fe, &cfg).unwrap(),
            })
            .collect();
        MetricReport::aggregate("fe", images, vec![]).to_csv()
    };
    assert_eq!(report(), report());
    let edges = |i: usize| canny(&to_gray(&triples[i].x_fe), CANNY_LOW, CANNY_HIGH).unwrap();
    assert_eq!(edges(0), edges(0));
}
