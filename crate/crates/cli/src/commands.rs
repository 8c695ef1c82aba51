use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use aquafuse::fusion::{fusion_enhance, FusionConfig};
use aquafuse::imaging::color::to_gray;
use aquafuse::imaging::{canny, images_to_tensor, tensor_to_images, ImageRGB};
use aquafuse::metrics::{score_image, ImageScores, MetricReport, ScoredImage, Subset};
use aquafuse::nn::{Generator, Network, WeightArchive};
use aquafuse::training::gradcheck::{gradient_suite, GradcheckRow};
use aquafuse::training::{batch_from_triples, synthetic_triples, train_toy, ToyRun};
use serde::Serialize;

use crate::config::{Method, RunConfig, SubsetName};
use crate::dataset::{fetch_dataset, DatasetManifest, Fetch, FetchReport};
use crate::imageio::{edge_image, list_images, png_name, read_image, side_by_side, write_png};

pub const SCHEMA_LINE: &str = "# schema=1";

/// Per-file failures collected by a command. The process exits nonzero
/// when any are present or `failed` is set.
#[derive(Debug, Default)]
pub struct Outcome {
    pub file_errors: Vec<(String, String)>,
    pub failed: bool,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.file_errors.is_empty() && !self.failed
    }
}

/// Maps `f` over `items` on up to `available_parallelism` threads, each
/// with its own state from `init`. Results keep input order.
pub fn par_map<T: Sync, S, R: Send>(items: &[T], init: impl Fn() -> S + Sync, f: impl Fn(&mut S, &T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len()).max(1);
    if workers == 1 {
        let mut s = init();
        return items.iter().map(|t| f(&mut s, t)).collect();
    }
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (init, f) = (&init, &f);
                scope.spawn(move || {
                    let mut s = init();
                    (w..items.len()).step_by(workers).map(|i| (i, f(&mut s, &items[i]))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Expands directories into their image files; files pass through.
pub fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(list_images(p)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn load_generator(config: &RunConfig) -> Result<Generator<f32>> {
    let path = config.weights.as_ref().context("method fgan needs a weight archive (--weights)")?;
    let ar = WeightArchive::load(path).with_context(|| format!("loading weights {}", path.display()))?;
    Generator::from_archive(config.generator.clone(), &ar).with_context(|| format!("weights {} do not fit the generator", path.display()))
}

/// Fusion-enhanced version as fed to the generator: snapped to 8 bits,
/// matching how training pairs are stored.
pub fn fe_input(img: &ImageRGB, fusion: &FusionConfig) -> Result<ImageRGB> {
    Ok(fusion_enhance(img, fusion)?.quantized())
}

pub fn generator_enhance(g: &mut Generator<f32>, img: &ImageRGB, fusion: &FusionConfig) -> Result<ImageRGB> {
    let fe = fe_input(img, fusion)?;
    let y = images_to_tensor::<f32>(std::slice::from_ref(img))?;
    let x_fe = images_to_tensor::<f32>(&[fe])?;
    let out = g.infer(&y, &x_fe)?;
    Ok(tensor_to_images(&out)?.remove(0))
}

/// Enhances one decoded image with the configured method.
pub fn enhance_image(config: &RunConfig, g: Option<&mut Generator<f32>>, img: &ImageRGB) -> Result<ImageRGB> {
    match (config.method, g) {
        (Method::Fe, _) => Ok(fusion_enhance(img, &config.fusion)?),
        (Method::Fgan, Some(g)) => generator_enhance(g, img, &config.fusion),
        (Method::Fgan, None) => bail!("method fgan needs a loaded generator"),
    }
}

pub fn cmd_enhance(config: &RunConfig, inputs: &[PathBuf]) -> Result<Outcome> {
    config.validate()?;
    let generator = match config.method {
        Method::Fgan => Some(load_generator(config)?),
        Method::Fe => None,
    };
    let files = collect_inputs(inputs)?;
    config.echo(&config.output)?;
    let results = par_map(
        &files,
        || generator.clone(),
        |g, path| -> Result<String> {
            let img = read_image(path, config.resize)?;
            let out = enhance_image(config, g.as_mut(), &img)?;
            let name = png_name(path);
            write_png(&config.output.join(&name), &out)?;
            Ok(name)
        },
    );
    let mut outcome = Outcome::default();
    let mut written = HashSet::new();
    for (path, r) in files.iter().zip(results) {
        match r {
            Ok(name) if !written.insert(name.clone()) => {
                outcome.file_errors.push((path.display().to_string(), format!("output name {name} collides with another input")))
            }
            Ok(_) => {}
            Err(e) => outcome.file_errors.push((path.display().to_string(), format!("{e:#}"))),
        }
    }
    println!("enhanced {} of {} images into {}", files.len() - outcome.file_errors.len(), files.len(), config.output.display());
    Ok(outcome)
}

/// Images of one scored directory with the subset each belongs to.
///
/// Files under `green/`, `blue/` or `haze/` take that subset; loose files
/// are looked up in the manifest, then fall back to `default_subset`.
pub fn dataset_images(dir: &Path, manifest: &DatasetManifest, default: Option<SubsetName>) -> Result<Vec<(PathBuf, Option<Subset>)>> {
    let mut out = Vec::new();
    for s in SubsetName::ALL {
        let sub = dir.join(s.dir());
        if sub.is_dir() {
            out.extend(list_images(&sub)?.into_iter().map(|p| (p, Some(s.subset()))));
        }
    }
    for p in list_images(dir)? {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let subset = manifest.subset_of(name).or(default).map(SubsetName::subset);
        out.push((p, subset));
    }
    Ok(out)
}

/// Scores every image of a directory. Unreadable or unassigned files
/// become report errors.
pub fn score_directory(dir: &Path, label: &str, config: &RunConfig, manifest: &DatasetManifest) -> Result<MetricReport> {
    let files = dataset_images(dir, manifest, config.default_subset)?;
    let results = par_map(
        &files,
        || (),
        |_, (path, subset)| -> Result<ScoredImage> {
            let subset = subset.context("subset unknown; place it under green/, blue/ or haze/ or pass --subset")?;
            let img = read_image(path, None)?;
            Ok(ScoredImage {
                name: path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(),
                subset,
                scores: score_image(&img, &config.metrics)?,
            })
        },
    );
    let mut images = Vec::new();
    let mut errors = Vec::new();
    for ((path, _), r) in files.iter().zip(results) {
        match r {
            Ok(s) => images.push(s),
            Err(e) => errors.push((path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(), format!("{e:#}"))),
        }
    }
    Ok(MetricReport::aggregate(label, images, errors))
}

fn column_labels(dirs: &[PathBuf]) -> Vec<String> {
    let short: Vec<String> = dirs
        .iter()
        .map(|d| d.file_name().and_then(|n| n.to_str()).unwrap_or("dir").to_string())
        .collect();
    let unique = short.iter().collect::<HashSet<_>>().len() == short.len();
    if unique {
        short
    } else {
        dirs.iter().map(|d| d.display().to_string()).collect()
    }
}

const ROW_SUBSETS: [&str; 4] = ["green", "blue", "haze-like", "all"];

fn report_cell(r: &MetricReport, row: usize) -> (usize, Option<ImageScores>) {
    match r.subsets.get(row) {
        Some(a) => (a.count, a.mean),
        None => (r.images.len(), r.total),
    }
}

/// One column per report, rows per subset and metric.
pub fn comparison_csv(reports: &[MetricReport]) -> String {
    let mut out = format!("{SCHEMA_LINE}\nsubset,metric");
    for r in reports {
        let _ = write!(out, ",{}", r.method.replace(',', "_"));
    }
    out.push('\n');
    for (row, subset) in ROW_SUBSETS.iter().enumerate() {
        let _ = write!(out, "{subset},n");
        for r in reports {
            let _ = write!(out, ",{}", report_cell(r, row).0);
        }
        out.push('\n');
        for (m, name) in ImageScores::NAMES.iter().enumerate() {
            let _ = write!(out, "{subset},{name}");
            for r in reports {
                match report_cell(r, row).1 {
                    Some(s) => {
                        let _ = write!(out, ",{:.6}", s.values()[m]);
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn comparison_markdown(reports: &[MetricReport]) -> String {
    let mut out = String::from("| subset | metric |");
    for r in reports {
        let _ = write!(out, " {} |", r.method);
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(reports.len()));
    out.push('\n');
    for (row, subset) in ROW_SUBSETS.iter().enumerate() {
        for (m, name) in ImageScores::NAMES.iter().enumerate() {
            let _ = write!(out, "| {subset} | {name} |");
            for r in reports {
                match report_cell(r, row).1 {
                    Some(s) => {
                        let _ = write!(out, " {:.4} |", s.values()[m]);
                    }
                    None => out.push_str(" n/a |"),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn cmd_score(config: &RunConfig, dirs: &[PathBuf], manifest: &DatasetManifest) -> Result<Outcome> {
    config.validate()?;
    if dirs.is_empty() {
        bail!("score needs at least one directory");
    }
    config.echo(&config.output)?;
    let mut reports = Vec::new();
    let mut outcome = Outcome::default();
    for (dir, label) in dirs.iter().zip(column_labels(dirs)) {
        let r = score_directory(dir, &label, config, manifest)?;
        for (file, err) in &r.errors {
            outcome.file_errors.push((dir.join(file).display().to_string(), err.clone()));
        }
        if r.images.is_empty() {
            eprintln!("warning: no scorable images in {}; column omitted", dir.display());
            continue;
        }
        std::fs::write(config.output.join(format!("images_{}.csv", label.replace(['/', '\\'], "_"))), r.to_csv())?;
        reports.push(r);
    }
    std::fs::write(config.output.join("scores.csv"), comparison_csv(&reports))?;
    let md = comparison_markdown(&reports);
    std::fs::write(config.output.join("scores.md"), &md)?;
    print!("{md}");
    Ok(outcome)
}

#[derive(Clone, Debug, Serialize)]
pub struct Machine {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu: Option<String>,
}

impl Machine {
    pub fn describe() -> Self {
        let cpu = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|v| v.trim().to_string())
        });
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub parameters: usize,
    pub size: usize,
    pub runs: usize,
    /// Median wall time of one generator forward, seconds.
    pub generator_median_s: f64,
    /// Median wall time of the fusion preprocessing, seconds.
    pub fe_median_s: f64,
    pub machine: Machine,
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn time_median(runs: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(times))
}

/// Times the generator forward and the fusion preprocessing separately on
/// a synthetic degraded image. Without `--weights` a seeded generator is used.
pub fn bench(config: &RunConfig, runs: usize) -> Result<BenchReport> {
    if runs == 0 {
        bail!("bench needs at least one run");
    }
    let mut g = match &config.weights {
        Some(_) => load_generator(config)?,
        None => Generator::new(config.generator.clone(), config.seed),
    };
    let size = config.resize.unwrap_or(256);
    let img = synthetic_triples(1, size, config.seed)?.remove(0).y;
    let fe_median_s = time_median(runs, || {
        fusion_enhance(&img, &config.fusion)?;
        Ok(())
    })?;
    let y = images_to_tensor::<f32>(std::slice::from_ref(&img))?;
    let x_fe = images_to_tensor::<f32>(&[fe_input(&img, &config.fusion)?])?;
    // One untimed pass warms allocations.
    g.infer(&y, &x_fe)?;
    let generator_median_s = time_median(runs, || {
        g.infer(&y, &x_fe)?;
        Ok(())
    })?;
    Ok(BenchReport {
        parameters: g.count_parameters(),
        size,
        runs,
        generator_median_s,
        fe_median_s,
        machine: Machine::describe(),
    })
}

pub fn cmd_bench(config: &RunConfig, runs: usize) -> Result<Outcome> {
    config.validate()?;
    let r = bench(config, runs)?;
    config.echo(&config.output)?;
    std::fs::write(config.output.join("bench.json"), serde_json::to_string_pretty(&r)? + "\n")?;
    println!("parameters: {}", r.parameters);
    println!("generator forward {0}x{0}: {1:.4} s (median of {2})", r.size, r.generator_median_s, r.runs);
    println!("fusion preprocessing {0}x{0}: {1:.4} s (median of {2})", r.size, r.fe_median_s, r.runs);
    println!("machine: {} {} with {} logical cpus{}", r.machine.os, r.machine.arch, r.machine.logical_cpus, r.machine.cpu.as_deref().map(|c| format!(" ({c})")).unwrap_or_default());
    Ok(Outcome::default())
}

/// Trains on seeded synthetic triples and writes weights, the loss
/// curve and the triples themselves.
pub fn run_train_toy(config: &RunConfig) -> Result<ToyRun> {
    let triples = synthetic_triples(config.toy_images, config.toy_size, config.seed)?;
    let batch = batch_from_triples(&triples)?;
    let run = train_toy(&config.train, &[batch], config.seed)?;
    let out = &config.output;
    config.echo(out)?;
    run.generator.to_archive().save(out.join("generator.fgw"))?;
    run.discriminator.to_archive().save(out.join("discriminator.fgw"))?;
    std::fs::write(out.join("losses.csv"), run.losses_csv())?;
    for (kind, pick) in [("raw", 0), ("target", 1), ("fe", 2)] {
        let dir = out.join("toy").join(kind);
        std::fs::create_dir_all(&dir)?;
        for (i, t) in triples.iter().enumerate() {
            let img = [&t.y, &t.x, &t.x_fe][pick];
            write_png(&dir.join(format!("{i:03}.png")), img)?;
        }
    }
    Ok(run)
}

pub fn cmd_train_toy(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let t = Instant::now();
    let run = run_train_toy(config)?;
    if let (Some(first), Some(last)) = (run.losses.first(), run.losses.last()) {
        println!("L_gt {:.4} -> {:.4}, L_fe {:.4} -> {:.4} over {} steps", first.gt, last.gt, first.fe, last.fe, run.losses.len());
    }
    println!("wrote {} in {:.1} s", config.output.display(), t.elapsed().as_secs_f64());
    Ok(Outcome::default())
}

pub fn gradcheck_table(rows: &[GradcheckRow]) -> String {
    let mut out = format!("{SCHEMA_LINE}\nname,checked,max_rel_error,pass\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.3e},{}", r.name, r.checked, r.max_rel_error, r.passed());
    }
    out
}

pub fn cmd_gradcheck(config: &RunConfig) -> Result<Outcome> {
    let rows = gradient_suite(config.seed)?;
    let table = gradcheck_table(&rows);
    config.echo(&config.output)?;
    std::fs::write(config.output.join("gradcheck.csv"), &table)?;
    print!("{table}");
    Ok(Outcome {
        file_errors: Vec::new(),
        failed: rows.iter().any(|r| !r.passed()),
    })
}

/// Edge pixel counts of one input, raw and optionally enhanced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeCount {
    pub file: String,
    pub raw: usize,
    pub enhanced: Option<usize>,
}

/// Writes `edges/<name>.png` per input and, with `compare`, a side-by-side
/// raw|enhanced edge map under `edges/compare/`.
pub fn cmd_edges(config: &RunConfig, inputs: &[PathBuf], compare: bool) -> Result<(Outcome, Vec<EdgeCount>)> {
    config.validate()?;
    let generator = match (compare, config.method) {
        (true, Method::Fgan) => Some(load_generator(config)?),
        _ => None,
    };
    let files = collect_inputs(inputs)?;
    config.echo(&config.output)?;
    let dir = config.output.join("edges");
    std::fs::create_dir_all(&dir)?;
    if compare {
        std::fs::create_dir_all(dir.join("compare"))?;
    }
    let [low, high] = config.canny;
    let results = par_map(
        &files,
        || generator.clone(),
        |g, path| -> Result<EdgeCount> {
            let img = read_image(path, config.resize)?;
            let name = png_name(path);
            let raw = canny(&to_gray(&img), low, high)?;
            let raw_img = edge_image(&raw);
            write_png(&dir.join(&name), &raw_img)?;
            let mut enhanced = None;
            if compare {
                let out = enhance_image(config, g.as_mut(), &img)?.quantized();
                let e = canny(&to_gray(&out), low, high)?;
                write_png(&dir.join("compare").join(&name), &side_by_side(&[raw_img, edge_image(&e)]))?;
                enhanced = Some(e.count());
            }
            Ok(EdgeCount { file: name, raw: raw.count(), enhanced })
        },
    );
    let mut outcome = Outcome::default();
    let mut counts = Vec::new();
    for (path, r) in files.iter().zip(results) {
        match r {
            Ok(c) => counts.push(c),
            Err(e) => outcome.file_errors.push((path.display().to_string(), format!("{e:#}"))),
        }
    }
    let mut csv = format!("{SCHEMA_LINE}\nfile,raw_edges,enhanced_edges\n");
    for c in &counts {
        let _ = writeln!(csv, "{},{},{}", c.file, c.raw, c.enhanced.map(|v| v.to_string()).unwrap_or_default());
    }
    std::fs::write(config.output.join("edges.csv"), &csv)?;
    print!("{csv}");
    Ok((outcome, counts))
}

pub fn print_fetch_report(manifest: &DatasetManifest, cache: &Path, r: &FetchReport) {
    println!(
        "{}: {} cached, {} downloaded into {}",
        manifest.name,
        r.cached.len(),
        r.downloaded.len(),
        manifest.install_dir(cache).display()
    );
    for (subset, n) in manifest.counts() {
        println!("  {subset}: {n}");
    }
    for q in &r.quarantined {
        eprintln!("digest mismatch for {}: expected {} got {}; quarantined at {}", q.file, q.expected, q.actual, q.path.display());
    }
}

pub fn cmd_fetch(manifest: &DatasetManifest, cache: &Path, fetcher: &dyn Fetch) -> Result<Outcome> {
    let r = fetch_dataset(manifest, cache, fetcher)?;
    print_fetch_report(manifest, cache, &r);
    let mut outcome = Outcome::default();
    for q in &r.quarantined {
        outcome.file_errors.push((q.file.clone(), format!("digest mismatch: expected {} got {}", q.expected, q.actual)));
    }
    outcome.file_errors.extend(r.missing.iter().cloned());
    Ok(outcome)
}
