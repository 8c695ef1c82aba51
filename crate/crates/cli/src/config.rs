use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aquafuse::fusion::FusionConfig;
use aquafuse::imaging::{CANNY_HIGH, CANNY_LOW};
use aquafuse::metrics::{MetricConfig, Subset};
use aquafuse::nn::GeneratorConfig;
use aquafuse::training::ToyConfig;
use serde::{Deserialize, Serialize};

/// File name of the echoed configuration inside every output directory.
pub const ECHO_FILE: &str = "run_config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fusion enhancement only.
    Fe,
    /// Generator fed with the raw image and its fusion-enhanced version.
    Fgan,
}

/// Everything a command needs; loaded from JSON, then patched by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: Method,
    pub weights: Option<PathBuf>,
    pub seed: u64,
    pub output: PathBuf,
    /// Square extent inputs are resized to; `None` keeps the original size.
    pub resize: Option<usize>,
    pub canny: [f64; 2],
    pub metrics: MetricConfig,
    pub fusion: FusionConfig,
    pub generator: GeneratorConfig,
    pub train: ToyConfig,
    /// Synthetic triples used by `train-toy`.
    pub toy_images: usize,
    pub toy_size: usize,
    /// Subset for images whose subset cannot be inferred.
    pub default_subset: Option<SubsetName>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Fe,
            weights: None,
            seed: 0,
            output: PathBuf::from("out"),
            resize: Some(256),
            canny: [CANNY_LOW, CANNY_HIGH],
            metrics: MetricConfig::default(),
            fusion: FusionConfig::default(),
            generator: GeneratorConfig::default(),
            train: ToyConfig::default(),
            toy_images: 4,
            toy_size: 32,
            default_subset: None,
        }
    }
}

/// Subset names as they appear in directory layouts and manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SubsetName {
    Green,
    Blue,
    Haze,
}

impl SubsetName {
    pub const ALL: [SubsetName; 3] = [SubsetName::Green, SubsetName::Blue, SubsetName::Haze];

    pub fn dir(self) -> &'static str {
        match self {
            SubsetName::Green => "green",
            SubsetName::Blue => "blue",
            SubsetName::Haze => "haze",
        }
    }

    pub fn from_dir(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.dir() == s)
    }

    pub fn subset(self) -> Subset {
        match self {
            SubsetName::Green => Subset::Green,
            SubsetName::Blue => Subset::Blue,
            SubsetName::Haze => Subset::HazeLike,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let [low, high] = self.canny;
        if !(0.0..=high).contains(&low) {
            bail!("canny thresholds must satisfy 0 <= low <= high, got {low} and {high}");
        }
        if self.resize == Some(0) {
            bail!("resize extent must be positive");
        }
        self.train.weights.validate()?;
        Ok(())
    }

    /// Writes the configuration as pretty JSON into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(ECHO_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}
