use std::path::{Path, PathBuf};
use std::process::Command;

use aquafuse::imaging::{images_to_tensor, tensor_to_images, ImageRGB};
use aquafuse::metrics::{score_image, MetricConfig};
use aquafuse::nn::{Generator, GeneratorConfig, Network, WeightArchive};
use aquafuse::training::degrade;
use aquafuse_cli::commands::{bench, cmd_edges, cmd_enhance, cmd_score, fe_input, run_train_toy, SCHEMA_LINE};
use aquafuse_cli::config::{Method, RunConfig, SubsetName, ECHO_FILE};
use aquafuse_cli::dataset::DatasetManifest;
use aquafuse_cli::imageio::{read_image, write_png};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config_in(dir: &Path) -> RunConfig {
    RunConfig {
        output: dir.join("out"),
        ..RunConfig::default()
    }
}

fn scene(size: usize, seed: u64) -> ImageRGB {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.1..0.4));
    let clear = ImageRGB::from_fn_clamped(size, size, |x, y| {
        let (x, y) = (x as f64, y as f64);
        [0.5 + 0.3 * (f[0] * x).sin(), 0.5 + 0.3 * (f[1] * y).cos(), 0.5 + 0.25 * (f[2] * (x + y)).sin()]
    });
    degrade(&clear, &mut rng)
}

fn write_scene(path: &Path, size: usize, seed: u64) -> ImageRGB {
    let img = scene(size, seed);
    write_png(path, &img).unwrap();
    img
}

#[test]
fn fe_on_mid_gray_is_nearly_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("gray.png");
    write_png(&input, &ImageRGB::filled(64, 64, [128.0 / 255.0; 3])).unwrap();
    let cfg = config_in(dir.path());
    assert!(cmd_enhance(&cfg, &[input]).unwrap().success());
    let out = read_image(&cfg.output.join("gray.png"), None).unwrap();
    assert_eq!((out.width, out.height), (256, 256));
    assert!(out.max_abs_diff(&ImageRGB::filled(256, 256, [128.0 / 255.0; 3])) <= 0.02 + 1.0 / 255.0);
    let echoed = RunConfig::load(&cfg.output.join(ECHO_FILE)).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn zero_output_layer_gives_mid_gray() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = Generator::<f32>::new(GeneratorConfig::default(), 3);
    g.zero_output_layer();
    let weights = dir.path().join("zero.fgw");
    g.to_archive().save(&weights).unwrap();
    let inputs = dir.path().join("in");
    std::fs::create_dir(&inputs).unwrap();
    write_scene(&inputs.join("a.png"), 48, 1);
    let cfg = RunConfig {
        method: Method::Fgan,
        weights: Some(weights),
        resize: Some(32),
        ..config_in(dir.path())
    };
    assert!(cmd_enhance(&cfg, &[inputs]).unwrap().success());
    let out = read_image(&cfg.output.join("a.png"), None).unwrap();
    assert_eq!(out.width, 32);
    assert!(out.to_rgb8().iter().all(|&v| v == 128), "tanh(0) maps to 0.5");
}

#[test]
fn fgan_inference_matches_the_trained_network() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_in(dir.path());
    cfg.train.steps = 2;
    cfg.train.d_steps = 1;
    cfg.toy_images = 2;
    let train_dir = dir.path().join("train");
    cfg.output = train_dir.clone();
    run_train_toy(&cfg).unwrap();

    let enhance = RunConfig {
        method: Method::Fgan,
        weights: Some(train_dir.join("generator.fgw")),
        resize: None,
        output: dir.path().join("enhanced"),
        ..cfg.clone()
    };
    assert!(cmd_enhance(&enhance, &[train_dir.join("toy/raw")]).unwrap().success());

    let ar = WeightArchive::load(train_dir.join("generator.fgw")).unwrap();
    let mut g = Generator::<f32>::from_archive(GeneratorConfig::default(), &ar).unwrap();
    for i in 0..2 {
        let name = format!("{i:03}.png");
        let y = read_image(&train_dir.join("toy/raw").join(&name), None).unwrap();
        let x_fe = read_image(&train_dir.join("toy/fe").join(&name), None).unwrap();
        assert_eq!(fe_input(&y, &cfg.fusion).unwrap(), x_fe, "stored FE input differs from recomputed one");
        let out = g.infer(&images_to_tensor(&[y]).unwrap(), &images_to_tensor(&[x_fe]).unwrap()).unwrap();
        let expect = tensor_to_images(&out).unwrap().remove(0).to_rgb8();
        let got = read_image(&enhance.output.join(&name), None).unwrap().to_rgb8();
        assert_eq!(got, expect, "{name}");
    }
}

#[test]
fn missing_weights_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        method: Method::Fgan,
        ..config_in(dir.path())
    };
    let input = dir.path().join("a.png");
    write_scene(&input, 16, 0);
    assert!(cmd_enhance(&cfg, &[input]).is_err());
    assert!(!cfg.output.exists());
}

fn subset_tree(root: &Path, layout: &[(SubsetName, &str, u64)]) {
    for &(s, name, seed) in layout {
        let d = root.join(s.dir());
        std::fs::create_dir_all(&d).unwrap();
        write_scene(&d.join(name), 40, seed);
    }
}

#[test]
fn one_image_score_equals_its_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let raws = dir.path().join("raws");
    subset_tree(&raws, &[(SubsetName::Blue, "x.png", 4)]);
    let cfg = config_in(dir.path());
    assert!(cmd_score(&cfg, &[raws.clone()], &DatasetManifest::bundled()).unwrap().success());
    let direct = score_image(&read_image(&raws.join("blue/x.png"), None).unwrap(), &MetricConfig::default()).unwrap();
    let csv = std::fs::read_to_string(cfg.output.join("scores.csv")).unwrap();
    for (name, v) in ["UCIQE", "UIQM", "UICM", "UISM", "UIConM"].iter().zip(direct.values()) {
        for subset in ["blue", "all"] {
            let line = format!("{subset},{name},{v:.6}");
            assert!(csv.lines().any(|l| l == line), "missing {line}");
        }
        assert!(csv.lines().any(|l| l == format!("green,{name},")));
    }
}

#[test]
fn score_columns_follow_invocation_order_and_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let layout = [(SubsetName::Green, "a.png", 1), (SubsetName::Haze, "b.png", 2), (SubsetName::Blue, "c.png", 3)];
    let (zeta, alpha, empty) = (dir.path().join("zeta"), dir.path().join("alpha"), dir.path().join("empty"));
    subset_tree(&zeta, &layout);
    subset_tree(&alpha, &layout[..2]);
    std::fs::create_dir(&empty).unwrap();
    let run = |n: usize| {
        let cfg = RunConfig {
            output: dir.path().join(format!("out{n}")),
            ..RunConfig::default()
        };
        cmd_score(&cfg, &[zeta.clone(), empty.clone(), alpha.clone()], &DatasetManifest::bundled()).unwrap();
        std::fs::read(cfg.output.join("scores.csv")).unwrap()
    };
    let (a, b) = (run(0), run(1));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SCHEMA_LINE));
    assert_eq!(lines.next(), Some("subset,metric,zeta,alpha"));
}

#[test]
fn loose_files_need_a_subset() {
    let dir = tempfile::tempdir().unwrap();
    let raws = dir.path().join("raws");
    std::fs::create_dir(&raws).unwrap();
    write_scene(&raws.join("loose.png"), 32, 5);
    let cfg = config_in(dir.path());
    let outcome = cmd_score(&cfg, &[raws.clone()], &DatasetManifest::bundled()).unwrap();
    assert_eq!(outcome.file_errors.len(), 1);
    let cfg = RunConfig {
        default_subset: Some(SubsetName::Green),
        ..cfg
    };
    assert!(cmd_score(&cfg, &[raws], &DatasetManifest::bundled()).unwrap().success());
}

#[test]
fn bench_reports_the_exact_parameter_count() {
    let cfg = RunConfig {
        resize: Some(64),
        ..RunConfig::default()
    };
    let a = bench(&cfg, 5).unwrap();
    let b = bench(&cfg, 5).unwrap();
    let expect = Generator::<f32>::new(GeneratorConfig::default(), 0).count_parameters();
    assert_eq!((a.parameters, b.parameters), (expect, expect));
    let ratio = a.generator_median_s / b.generator_median_s;
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "timings {} and {}", a.generator_median_s, b.generator_median_s);
    assert!(a.fe_median_s > 0.0);
}

#[test]
fn constant_image_has_an_empty_edge_map() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.png");
    write_png(&input, &ImageRGB::filled(40, 40, [0.3, 0.5, 0.6])).unwrap();
    let cfg = config_in(dir.path());
    let (outcome, counts) = cmd_edges(&cfg, &[input], false).unwrap();
    assert!(outcome.success());
    assert_eq!(counts[0].raw, 0);
    let map = read_image(&cfg.output.join("edges/flat.png"), None).unwrap();
    assert!(map.to_rgb8().iter().all(|&v| v == 0));
}

/// Vertical bars whose contrast ramps up from the top row, seen through a
/// blue-green veil that keeps `keep` of the scene.
fn low_contrast_scene(keep: f64) -> ImageRGB {
    let veil = [0.15, 0.55, 0.6];
    ImageRGB::from_fn_clamped(96, 96, |x, y| {
        let amp = 0.4 * y as f64 / 95.0;
        let v = if (x / 8) % 2 == 0 { 0.5 + amp } else { 0.5 - amp };
        std::array::from_fn(|c| keep * v + (1.0 - keep) * veil[c])
    })
    .quantized()
}

#[test]
fn enhancement_reveals_more_edges() {
    let dir = tempfile::tempdir().unwrap();
    let inputs: Vec<PathBuf> = [0.46, 0.5, 0.54]
        .iter()
        .enumerate()
        .map(|(i, &keep)| {
            let p = dir.path().join(format!("s{i}.png"));
            write_png(&p, &low_contrast_scene(keep)).unwrap();
            p
        })
        .collect();
    let cfg = RunConfig {
        resize: None,
        ..config_in(dir.path())
    };
    let (outcome, counts) = cmd_edges(&cfg, &inputs, true).unwrap();
    assert!(outcome.success());
    for c in &counts {
        assert!(c.enhanced.unwrap() > c.raw, "{}: {} raw vs {:?} enhanced", c.file, c.raw, c.enhanced);
    }
    let side = read_image(&cfg.output.join("edges/compare/s0.png"), None).unwrap();
    assert_eq!((side.width, side.height), (192, 96));
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aquafuse"))
}

#[test]
fn exit_codes_reflect_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.png");
    write_scene(&good, 24, 3);
    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, b"not an image").unwrap();
    let out = dir.path().join("out");

    let st = binary().args(["enhance", "-o"]).arg(&out).arg(&good).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let run = binary().args(["enhance", "-o"]).arg(&out).arg(&good).arg(&bad).output().unwrap();
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("bad.png"));
    assert!(out.join("good.png").exists());

    let st = binary().args(["enhance", "--method", "fgan", "-o"]).arg(&out).arg(&good).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"seed": 5, "canny": [0.05, 0.25], "resize": 20}"#).unwrap();
    let input = dir.path().join("a.png");
    write_scene(&input, 24, 3);
    let out = dir.path().join("out");
    let st = binary()
        .args(["edges", "--config"])
        .arg(&cfg_path)
        .args(["--canny-high", "0.3", "-o"])
        .arg(&out)
        .arg(&input)
        .status()
        .unwrap();
    assert!(st.success());
    let echoed = RunConfig::load(&out.join(ECHO_FILE)).unwrap();
    assert_eq!((echoed.seed, echoed.canny, echoed.resize), (5, [0.05, 0.3], Some(20)));
    let csv = std::fs::read_to_string(out.join("edges.csv")).unwrap();
    assert!(csv.starts_with("# schema=1\nfile,raw_edges,enhanced_edges\n"));
}
