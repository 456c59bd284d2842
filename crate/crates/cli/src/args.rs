use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "gmcs", version, about = "Coresets for Gaussian mixture models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic data set from a preset or a mixture file.
    Gen(GenArgs),
    /// Build a weighted coreset.
    Build(BuildArgs),
    /// Fit a mixture with weighted EM.
    Fit(FitArgs),
    /// Compare coreset fits against uniform subsamples on a holdout split.
    Eval(EvalArgs),
    /// Stream a data set through the merge-reduce tree and report every block.
    StreamDemo(StreamDemoArgs),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Gen(a) => &a.common,
            Command::Build(a) => &a.common,
            Command::Fit(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::StreamDemo(a) => &a.common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    F64le,
}

impl From<FileFormat> for gmcs::dataset::Format {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Csv => gmcs::dataset::Format::Csv,
            FileFormat::F64le => gmcs::dataset::Format::F64le,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildMode {
    Batch,
    Stream,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Seeding {
    Kmeanspp,
    Adaptive,
}

impl From<Seeding> for gmcs::SeedingMode {
    fn from(s: Seeding) -> Self {
        match s {
            Seeding::Kmeanspp => gmcs::SeedingMode::KMeansPlusPlus,
            Seeding::Adaptive => gmcs::SeedingMode::Adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduce {
    Tree,
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    Imbalanced,
    SphericalK3,
    SkewedK10,
}

impl From<PresetName> for gmcs::dataset::Preset {
    fn from(p: PresetName) -> Self {
        match p {
            PresetName::Imbalanced => gmcs::dataset::Preset::Imbalanced,
            PresetName::SphericalK3 => gmcs::dataset::Preset::SphericalK3,
            PresetName::SkewedK10 => gmcs::dataset::Preset::SkewedK10,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Master seed; every random choice derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub workers: Option<usize>,
    /// File format; inferred from the extension (`.csv` or anything else as
    /// f64le) when absent.
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
    /// CSV input carries a leading weight column.
    #[arg(long)]
    pub weighted: bool,
    /// Variance floor λ.
    #[arg(long, default_value_t = 0.001)]
    pub lambda: f64,
    /// Where to write the run manifest (default: `<output>.manifest.json`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl Common {
    pub fn format_for(&self, path: &Path) -> FileFormat {
        self.format
            .unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
                Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
                _ => FileFormat::F64le,
            })
    }

    pub fn check(&self) -> CliResult<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(CliError::Usage(format!(
                "--lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Named mixture.
    #[arg(
        long,
        value_enum,
        conflicts_with = "mixture",
        required_unless_present = "mixture"
    )]
    pub preset: Option<PresetName>,
    /// Mixture file in the text format written by `fit`.
    #[arg(long)]
    pub mixture: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    /// Dimension override for presets.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Coreset size (final size in stream and parallel modes).
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = BuildMode::Batch)]
    pub mode: BuildMode,
    #[arg(long, value_enum, default_value_t = Seeding::Kmeanspp)]
    pub seeding: Seeding,
    /// Partitions in parallel mode.
    #[arg(long, default_value_t = 4)]
    pub partitions: usize,
    /// How parallel partitions are combined.
    #[arg(long, value_enum, default_value_t = Reduce::Tree)]
    pub reduce: Reduce,
    /// Leaf coreset size in stream mode (default: m).
    #[arg(long)]
    pub m_leaf: Option<usize>,
    /// Expected stream length for the ε′ schedule (doubles when exceeded).
    #[arg(long)]
    pub n_estimate: Option<u64>,
    /// Stream mode: save the tree state here before finalizing.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Stream mode: continue from a saved tree state; the input is appended.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    /// Mixture text file.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    /// CSV table; the text table always goes to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub k: usize,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Restarts of the full-data baseline fit.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Restarts of each coreset or subsample fit.
    #[arg(long, default_value_t = 1)]
    pub fit_restarts: usize,
    #[arg(long, default_value_t = 20)]
    pub probe_thetas: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = Seeding::Kmeanspp)]
    pub seeding: Seeding,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StreamDemoArgs {
    #[command(flatten)]
    pub common: Common,
    /// Points to stream; a preset sample is generated when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PresetName::SphericalK3)]
    pub preset: PresetName,
    /// Points generated from the preset.
    #[arg(long, default_value_t = 1 << 15)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 256)]
    pub m_leaf: usize,
    /// Final coreset size.
    #[arg(long, default_value_t = 256)]
    pub m: usize,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Coreset output file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
