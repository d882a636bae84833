//! `stratus`: partition longitudinal embeddings into sub-trajectories,
//! cluster them under a composite temporal distance, and predict risk
//! targets from cluster memberships.
//!
//! Every stage reads and writes plain artifact files, so a pipeline can be
//! resumed or branched at any point:
//!
//! ```text
//! stratus --out run synth --cohort three_orthogonal --patients 100
//! stratus --out run partition
//! stratus --out run dist
//! stratus --out run cluster --k 3
//! stratus --out run predict
//! ```
//!
//! Parameters resolve in order: built-in defaults, then the `--config`
//! file, then flags. Identical inputs and seeds reproduce identical
//! artifacts byte for byte.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "stratus",
    version,
    about = "Sub-trajectory clustering and risk prediction for longitudinal embeddings"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Base RNG seed for synth, partition and cluster.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Directory artifacts are written to; also the default location
    /// inputs are read from.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

/// Configuration overrides; each maps to one config-file key and applies
/// on top of the file.
#[derive(Args, Default)]
struct Overrides {
    /// Endpoint-vs-shape mixing weight in [0, 1].
    #[arg(long, global = true, value_name = "F")]
    lambda: Option<String>,

    /// Relative-vs-absolute mixing weight in [0, 1].
    #[arg(long, global = true, value_name = "F")]
    phi: Option<String>,

    /// Cluster count.
    #[arg(long, global = true, value_name = "N")]
    k: Option<String>,

    /// Affinity kernel: shifted_negative or gaussian.
    #[arg(long, global = true, value_name = "NAME")]
    kernel: Option<String>,

    /// Gaussian kernel bandwidth, or 'median' for the heuristic.
    #[arg(long, global = true, value_name = "F")]
    kernel_scale: Option<String>,

    /// Membership bandwidth.
    #[arg(long, global = true, value_name = "F")]
    sigma: Option<String>,

    /// Cross-validation fold count.
    #[arg(long, global = true, value_name = "N")]
    folds: Option<String>,

    /// Evaluation seeds for predict and sweep, comma-separated.
    #[arg(long, global = true, value_name = "LIST")]
    seeds: Option<String>,

    /// Targets to score, comma-separated.
    #[arg(long, global = true, value_name = "LIST")]
    targets: Option<String>,

    /// Target window length in years.
    #[arg(long, global = true, value_name = "F")]
    span_center: Option<String>,

    /// Accepted deviation from the target length, in years.
    #[arg(long, global = true, value_name = "F")]
    span_half_width: Option<String>,

    /// Sampling bin width in years.
    #[arg(long, global = true, value_name = "F")]
    bin_width: Option<String>,

    /// Bin anchoring rule: start or midpoint.
    #[arg(long, global = true, value_name = "NAME")]
    bin_anchor: Option<String>,

    /// Divide DTW costs by the summed sequence lengths.
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    dtw_normalize: Option<String>,

    /// Use squared Euclidean local costs in DTW.
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    dtw_squared: Option<String>,

    /// Replace cross-validation with one holdout split per seed.
    #[arg(long, global = true, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    holdout: Option<String>,

    /// Fraction of patients held out when --holdout is set.
    #[arg(long, global = true, value_name = "F")]
    holdout_fraction: Option<String>,

    /// Any configuration key, as key=value; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", action = ArgAction::Append)]
    set: Vec<String>,
}

impl Overrides {
    /// Key/value pairs in application order: generic --set pairs first,
    /// named flags second, so the explicit flag wins on conflict.
    fn pairs(&self) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for entry in &self.set {
            let Some((key, value)) = entry.split_once('=') else {
                bail!("--set expects KEY=VALUE, got '{entry}'");
            };
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let named: [(&str, &Option<String>); 17] = [
            ("lambda", &self.lambda),
            ("phi", &self.phi),
            ("k", &self.k),
            ("kernel", &self.kernel),
            ("kernel_scale", &self.kernel_scale),
            ("sigma", &self.sigma),
            ("folds", &self.folds),
            ("seeds", &self.seeds),
            ("targets", &self.targets),
            ("span_center", &self.span_center),
            ("span_half_width", &self.span_half_width),
            ("bin_width", &self.bin_width),
            ("bin_anchor", &self.bin_anchor),
            ("dtw_normalize", &self.dtw_normalize),
            ("dtw_squared", &self.dtw_squared),
            ("holdout", &self.holdout),
            ("holdout_fraction", &self.holdout_fraction),
        ];
        for (key, value) in named {
            if let Some(value) = value {
                pairs.push((key.to_string(), value.clone()));
            }
        }
        Ok(pairs)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort: embeddings, labels, metadata, truth.
    Synth {
        /// Cohort family: three_orthogonal, rate_contrast or five_archetypes.
        #[arg(long, value_name = "NAME")]
        cohort: Option<String>,

        /// Number of patients (each contributes two series).
        #[arg(long, value_name = "N")]
        patients: Option<usize>,

        /// Override the cohort's built-in noise standard deviation.
        #[arg(long, value_name = "F")]
        noise_sigma: Option<f64>,
    },

    /// Extract and thin sub-trajectory windows from an embeddings file.
    Partition {
        /// Embeddings file (default: <out>/embeddings.txt).
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
    },

    /// Compute the pairwise distance matrix of a sub-trajectory set.
    Dist {
        /// Sub-trajectory file (default: <out>/subs.txt).
        #[arg(long, value_name = "FILE")]
        subs: Option<PathBuf>,
    },

    /// Cluster a distance matrix; write the model and a summary.
    Cluster {
        /// Distance matrix file (default: <out>/distance.dmat).
        #[arg(long, value_name = "FILE")]
        dist: Option<PathBuf>,
    },

    /// Cross-validated risk prediction from cluster memberships.
    Predict {
        /// Embeddings file (default: <out>/embeddings.txt).
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,

        /// Labels file (default: <out>/labels.txt).
        #[arg(long, value_name = "FILE")]
        labels: Option<PathBuf>,

        /// Metadata file (default: <out>/metadata.txt).
        #[arg(long, value_name = "FILE")]
        metadata: Option<PathBuf>,
    },

    /// Run predict over the configured parameter grids.
    Sweep {
        /// Embeddings file (default: <out>/embeddings.txt).
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,

        /// Labels file (default: <out>/labels.txt).
        #[arg(long, value_name = "FILE")]
        labels: Option<PathBuf>,

        /// Metadata file (default: <out>/metadata.txt).
        #[arg(long, value_name = "FILE")]
        metadata: Option<PathBuf>,
    },

    /// Write the per-cluster medoid and member listing of a fitted model.
    Report {
        /// Cluster model file (default: <out>/cluster_model.txt).
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,

        /// Sub-trajectory file (default: <out>/subs.txt).
        #[arg(long, value_name = "FILE")]
        subs: Option<PathBuf>,

        /// Distance matrix for medoid selection (default: recomputed
        /// from the sub-trajectories with the model's parameters).
        #[arg(long, value_name = "FILE")]
        dist: Option<PathBuf>,
    },
}

/// Input path: the flag if given, else the default name inside `out`.
fn input(flag: &Option<PathBuf>, out: &Path, default_name: &str) -> PathBuf {
    flag.clone().unwrap_or_else(|| out.join(default_name))
}

fn run(cli: &Cli) -> Result<()> {
    let mut pairs = cli.overrides.pairs()?;
    if let Command::Synth { cohort, patients, noise_sigma } = &cli.command {
        if let Some(c) = cohort {
            pairs.push(("cohort".into(), c.clone()));
        }
        if let Some(p) = patients {
            pairs.push(("patients".into(), p.to_string()));
        }
        if let Some(n) = noise_sigma {
            pairs.push(("noise_sigma".into(), n.to_string()));
        }
    }
    if let Some(seed) = cli.common.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    if let Some(threads) = cli.common.threads {
        pairs.push(("threads".into(), threads.to_string()));
    }
    let cfg = RunConfig::load(cli.common.config.as_deref(), &pairs)?;

    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing the worker pool")?;
    }

    let out = &cli.common.out;
    fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;

    match &cli.command {
        Command::Synth { .. } => commands::cmd_synth(&cfg, out),
        Command::Partition { embeddings } => {
            commands::cmd_partition(&cfg, &input(embeddings, out, commands::EMBEDDINGS_FILE), out)
        }
        Command::Dist { subs } => {
            commands::cmd_dist(&cfg, &input(subs, out, commands::SUBS_FILE), out)
        }
        Command::Cluster { dist } => {
            commands::cmd_cluster(&cfg, &input(dist, out, commands::DMAT_FILE), out)
        }
        Command::Predict { embeddings, labels, metadata } => commands::cmd_predict(
            &cfg,
            &input(embeddings, out, commands::EMBEDDINGS_FILE),
            &input(labels, out, commands::LABELS_FILE),
            &input(metadata, out, commands::METADATA_FILE),
            out,
        ),
        Command::Sweep { embeddings, labels, metadata } => commands::cmd_sweep(
            &cfg,
            &input(embeddings, out, commands::EMBEDDINGS_FILE),
            &input(labels, out, commands::LABELS_FILE),
            &input(metadata, out, commands::METADATA_FILE),
            out,
        ),
        Command::Report { model, subs, dist } => commands::cmd_report(
            &cfg,
            &input(model, out, commands::MODEL_FILE),
            &input(subs, out, commands::SUBS_FILE),
            dist.as_deref(),
            out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
