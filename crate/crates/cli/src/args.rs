use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use probe_oracle::ProbeMethod;

#[derive(Debug, Parser)]
#[command(name = "probe-oracle", version, about = "Predict fine-tuning performance from probing accuracies")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for folds, control draws and classifiers.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Cross-validation folds.
    #[arg(long, global = true, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    pub folds: u64,

    /// Gaussian control draws averaged per regression.
    #[arg(long, global = true, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub control_draws: u64,

    /// Report the control RMSE of the first draw only.
    #[arg(long, global = true)]
    pub single_draw: bool,

    /// Variance of the control features.
    #[arg(long, global = true, default_value_t = 0.1, value_parser = positive_f64)]
    pub control_sigma_sq: f64,

    /// Largest number of subsets an exhaustive search may visit.
    #[arg(long, global = true, default_value_t = 10_000_000)]
    pub subset_cap: u64,

    /// Worker threads; falls back to PROBE_ORACLE_THREADS, then to all cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    /// Emit JSON instead of CSV.
    #[arg(long, global = true)]
    pub json: bool,

    /// Report file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StudyInputs {
    /// Probe matrix (CSV or JSON by extension).
    #[arg(long)]
    pub probes: PathBuf,

    /// Score table (CSV or JSON by extension).
    #[arg(long)]
    pub scores: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// RMSE reduction against the control, in percent.
    Reduction,
    /// Cross-validated RMSE.
    Rmse,
    /// Control RMSE.
    Control,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the probing battery on embedding files and write a probe matrix.
    Probe {
        /// Embedding files, or directories searched for *.pemb files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,

        /// Stratified per-class sample budget; all samples when omitted.
        #[arg(long)]
        samples_per_class: Option<usize>,

        /// Comma-separated classifiers to train.
        #[arg(long, value_delimiter = ',', value_parser = parse_classifier)]
        methods: Option<Vec<ProbeMethod>>,
    },

    /// Regress every fine-tuning task on all layers of each probing task.
    Regress {
        #[command(flatten)]
        inputs: StudyInputs,

        #[arg(long, default_value = "BestByDev", value_parser = parse_method)]
        method: ProbeMethod,

        /// Value reported in each cell.
        #[arg(long, value_enum, default_value_t = Metric::Reduction)]
        metric: Metric,
    },

    /// Layers with significant sequential ANOVA terms.
    Anova {
        #[command(flatten)]
        inputs: StudyInputs,

        #[arg(long, default_value = "BestByDev", value_parser = parse_method)]
        method: ProbeMethod,

        #[arg(long, default_value_t = 0.05, value_parser = unit_interval)]
        alpha: f64,

        /// Print runs of three or more layers as ranges.
        #[arg(long)]
        compress: bool,
    },

    /// Regress on one ANOVA-chosen layer per probing task.
    OneLayer {
        #[command(flatten)]
        inputs: StudyInputs,

        #[arg(long, default_value = "BestByDev", value_parser = parse_method)]
        method: ProbeMethod,

        #[arg(long, default_value_t = 0.05, value_parser = unit_interval)]
        alpha: f64,
    },

    /// Exhaustive best-k feature search per fine-tuning task.
    Select {
        #[command(flatten)]
        inputs: StudyInputs,

        #[arg(long, default_value_t = 3)]
        k: usize,

        /// Restrict the search to one probe method's columns.
        #[arg(long, value_parser = parse_method)]
        method: Option<ProbeMethod>,
    },

    /// Highest reduction per probe method over all feature-set strategies.
    AblateMethod {
        #[command(flatten)]
        inputs: StudyInputs,

        #[arg(long, default_value_t = 3)]
        k: usize,
    },

    /// Relative spread of the control RMSE across draws.
    Mc {
        /// Score table (CSV or JSON by extension).
        #[arg(long)]
        scores: PathBuf,

        /// Comma-separated control widths.
        #[arg(long, value_delimiter = ',', default_value = "3,7,12")]
        features: Vec<usize>,
    },

    /// Test whether probe features identify the model family.
    Fingerprint {
        /// Probe matrix (CSV or JSON by extension).
        #[arg(long)]
        probes: PathBuf,

        #[arg(long, default_value_t = 3)]
        k: usize,

        #[arg(long, default_value = "BestByDev", value_parser = parse_method)]
        method: ProbeMethod,
    },

    /// Descriptive statistics of a score table.
    Summary {
        /// Score table (CSV or JSON by extension).
        #[arg(long)]
        scores: PathBuf,
    },

    /// Generate synthetic studies and embeddings.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Probe matrix and scores with a planted linear support.
    Planted {
        /// Output directory for probes.csv, scores.csv and truth.json.
        dir: PathBuf,

        #[arg(long, default_value_t = 25)]
        models: usize,

        #[arg(long, default_value_t = 84)]
        features: usize,

        #[arg(long, default_value_t = 3)]
        k_true: usize,

        #[arg(long, default_value_t = 0.0)]
        noise: f64,

        #[arg(long, default_value_t = 5)]
        families: usize,

        /// Comma-separated fine-tuning task names.
        #[arg(long, value_delimiter = ',', default_value = "RTE,COLA,MRPC,SST2,QNLI,QQP")]
        tasks: Vec<String>,
    },

    /// Embedding files for a (model, probing task, layer) grid.
    Embeddings {
        /// Output directory for the .pemb files.
        dir: PathBuf,

        #[arg(long, default_value = "blobs", value_parser = parse_kind)]
        kind: probe_oracle::synth::EmbeddingKind,

        #[arg(long, default_value_t = 5)]
        models: usize,

        #[arg(long, default_value_t = 7)]
        probing_tasks: usize,

        #[arg(long, default_value_t = 12)]
        layers: u32,

        #[arg(long, default_value_t = 8)]
        dim: usize,

        #[arg(long, default_value_t = 100)]
        n_per_class: usize,

        #[arg(long, default_value_t = 2.0)]
        separation: f64,
    },
}

fn parse_method(s: &str) -> Result<ProbeMethod, String> {
    s.parse().map_err(|e: probe_oracle::Error| e.to_string())
}

fn parse_classifier(s: &str) -> Result<ProbeMethod, String> {
    match parse_method(s)? {
        ProbeMethod::BestByDev => Err("BestByDev is not a classifier".into()),
        m => Ok(m),
    }
}

fn parse_kind(s: &str) -> Result<probe_oracle::synth::EmbeddingKind, String> {
    s.parse().map_err(|e: probe_oracle::Error| e.to_string())
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("`{s}` is not in (0, 1)")),
    }
}
