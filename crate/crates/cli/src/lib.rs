//! Command-line front end: image I/O, dataset acquisition, reports and
//! benchmarks around the `aquafuse` library.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod imageio;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Outcome;
use config::{Method, RunConfig, SubsetName};
use dataset::{default_cache_root, DatasetManifest, Fetch, HttpFetcher};

#[derive(Debug, Parser)]
#[command(name = "aquafuse", version, about = "Underwater image enhancement by fusion and adversarial refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that patch the JSON configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration; flags below take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    /// Generator weight archive.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Square extent inputs are resized to.
    #[arg(long)]
    pub resize: Option<usize>,
    /// Keep inputs at their original size.
    #[arg(long)]
    pub no_resize: bool,
    #[arg(long)]
    pub canny_low: Option<f64>,
    #[arg(long)]
    pub canny_high: Option<f64>,
    /// Subset for loose files not named in the manifest.
    #[arg(long)]
    pub subset: Option<SubsetName>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.method {
            c.method = m;
        }
        if let Some(w) = &self.weights {
            c.weights = Some(w.clone());
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out {
            c.output = o.clone();
        }
        if let Some(r) = self.resize {
            c.resize = Some(r);
        }
        if self.no_resize {
            c.resize = None;
        }
        if let Some(v) = self.canny_low {
            c.canny[0] = v;
        }
        if let Some(v) = self.canny_high {
            c.canny[1] = v;
        }
        if let Some(s) = self.subset {
            c.default_subset = Some(s);
        }
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance images or directories of images into the output directory.
    Enhance {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Score directories with UCIQE and UIQM, one column per directory.
    Score {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Manifest used to assign loose files to subsets.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Time the generator forward and the fusion preprocessing.
    Bench {
        #[arg(long, default_value_t = 21)]
        runs: usize,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Train on synthetic pairs and write weights and loss curves.
    TrainToy {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        d_steps: Option<usize>,
        #[arg(long)]
        lambda_gt: Option<f64>,
        #[arg(long)]
        lambda_fe: Option<f64>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Canny edge maps, optionally beside those of the enhanced image.
    Edges {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Download and verify the U45 test set into the cache.
    FetchU45 {
        /// Manifest with pinned digests instead of the bundled one.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Cache root; defaults to $AQUAFUSE_CACHE.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Never touch the network; succeed only from a warm cache.
        #[arg(long)]
        offline: bool,
        /// Write a pinned manifest for a local copy laid out as green/, blue/, haze/.
        #[arg(long, value_name = "DIR")]
        pin_from: Option<PathBuf>,
    },
}

struct Offline;

impl Fetch for Offline {
    fn get(&self, url: &str) -> Result<Vec<u8>> {
        anyhow::bail!("offline, not fetching {url}")
    }
}

fn manifest_or_bundled(path: &Option<PathBuf>) -> Result<DatasetManifest> {
    match path {
        Some(p) => DatasetManifest::load(p),
        None => Ok(DatasetManifest::bundled()),
    }
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Enhance { inputs, opts } => commands::cmd_enhance(&opts.resolve()?, &inputs),
        Command::Score { dirs, manifest, opts } => commands::cmd_score(&opts.resolve()?, &dirs, &manifest_or_bundled(&manifest)?),
        Command::Bench { runs, opts } => commands::cmd_bench(&opts.resolve()?, runs),
        Command::TrainToy { steps, d_steps, lambda_gt, lambda_fe, opts } => {
            let mut c = opts.resolve()?;
            if let Some(v) = steps {
                c.train.steps = v;
            }
            if let Some(v) = d_steps {
                c.train.d_steps = v;
            }
            if let Some(v) = lambda_gt {
                c.train.weights.lambda_gt = v;
            }
            if let Some(v) = lambda_fe {
                c.train.weights.lambda_fe = v;
            }
            commands::cmd_train_toy(&c)
        }
        Command::Gradcheck { opts } => commands::cmd_gradcheck(&opts.resolve()?),
        Command::Edges { inputs, compare, opts } => Ok(commands::cmd_edges(&opts.resolve()?, &inputs, compare)?.0),
        Command::FetchU45 { manifest, cache, offline, pin_from } => {
            let m = manifest_or_bundled(&manifest)?;
            let cache = cache.unwrap_or_else(default_cache_root);
            if let Some(dir) = pin_from {
                let pinned = m.pin_from_dir(&dir)?;
                std::fs::create_dir_all(&cache)?;
                let path = cache.join(format!("{}_manifest.json", pinned.name.to_lowercase()));
                std::fs::write(&path, serde_json::to_string_pretty(&pinned)? + "\n")?;
                println!("pinned {} of {} images into {}", pinned.entries.len(), pinned.expected_count, path.display());
                return Ok(Outcome {
                    file_errors: Vec::new(),
                    failed: !pinned.is_pinned(),
                });
            }
            if offline {
                commands::cmd_fetch(&m, &cache, &Offline)
            } else {
                commands::cmd_fetch(&m, &cache, &HttpFetcher::default())
            }
        }
    }
}
