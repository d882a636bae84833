//! Run configuration: built-in defaults, overlaid by an optional flat
//! `key = value` file, overlaid by command-line flags.
//!
//! The file format is one `key = value` pair per line; blank lines and
//! lines starting with `#` are ignored. List values are comma-separated.
//! Unknown keys are rejected so typos fail loudly.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use stratus::cluster::{Kernel, SpectralOptions};
use stratus::metric::DtwConfig;
use stratus::model::{MetricParams, TargetKind};
use stratus::partition::{BinAnchor, PartitionConfig};
use stratus::stratify::EvalConfig;

/// Every tunable of the pipeline, resolved to concrete values.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Base RNG seed for synth, partition and cluster.
    pub seed: u64,
    /// Evaluation seeds for predict and sweep.
    pub seeds: Vec<u64>,
    /// Worker thread cap; `None` uses every core.
    pub threads: Option<usize>,

    pub span_center: f64,
    pub span_half_width: f64,
    pub bin_width: f64,
    pub bin_anchor: BinAnchor,

    pub lambda: f64,
    pub phi: f64,
    pub dtw_normalize: bool,
    pub dtw_squared: bool,

    pub k: usize,
    pub kernel: Kernel,
    /// Gaussian kernel bandwidth; `None` selects the median heuristic.
    pub kernel_scale: Option<f64>,

    pub sigma: f64,
    pub folds: usize,
    pub targets: Vec<TargetKind>,
    pub holdout: bool,
    pub holdout_fraction: f64,

    /// Cohort family for `synth`.
    pub cohort: Option<String>,
    pub patients: usize,
    /// Overrides the cohort's built-in noise level.
    pub noise_sigma: Option<f64>,

    pub sweep_lambda: Vec<f64>,
    pub sweep_phi: Vec<f64>,
    pub sweep_k: Vec<usize>,
    pub sweep_sigma: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let partition = PartitionConfig::default();
        let params = MetricParams::default();
        RunConfig {
            seed: 0,
            seeds: (0..7).collect(),
            threads: None,
            span_center: partition.span_center,
            span_half_width: partition.span_half_width,
            bin_width: partition.bin_width,
            bin_anchor: partition.bin_anchor,
            lambda: params.lambda,
            phi: params.phi,
            dtw_normalize: false,
            dtw_squared: false,
            k: 30,
            kernel: Kernel::default(),
            kernel_scale: None,
            sigma: 0.5,
            folds: 10,
            targets: TargetKind::ALL.to_vec(),
            holdout: false,
            holdout_fraction: 0.2,
            cohort: None,
            patients: 50,
            noise_sigma: None,
            sweep_lambda: Vec::new(),
            sweep_phi: Vec::new(),
            sweep_k: Vec::new(),
            sweep_sigma: Vec::new(),
        }
    }
}

fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow!("invalid value '{value}' for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => bail!("invalid value '{other}' for {key}: expected true or false"),
    }
}

fn parse_list<T>(key: &str, value: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl RunConfig {
    /// Defaults, overlaid by `path` (if given), overlaid by `overrides`
    /// in order. Every layer goes through the same key parser.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    anyhow!("{}:{}: expected 'key = value', got '{line}'", path.display(), i + 1)
                })?;
                cfg.set(key.trim(), value.trim())
                    .with_context(|| format!("{}:{}", path.display(), i + 1))?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key. Shared by the file parser and flag overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "threads" => self.threads = Some(parse_value(key, value)?),
            "span_center" => self.span_center = parse_value(key, value)?,
            "span_half_width" => self.span_half_width = parse_value(key, value)?,
            "bin_width" => self.bin_width = parse_value(key, value)?,
            "bin_anchor" => {
                self.bin_anchor = match value {
                    "start" => BinAnchor::Start,
                    "midpoint" => BinAnchor::Midpoint,
                    other => bail!("invalid value '{other}' for bin_anchor: expected start or midpoint"),
                }
            }
            "lambda" => self.lambda = parse_value(key, value)?,
            "phi" => self.phi = parse_value(key, value)?,
            "dtw_normalize" => self.dtw_normalize = parse_bool(key, value)?,
            "dtw_squared" => self.dtw_squared = parse_bool(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "kernel" => self.kernel = value.parse().map_err(|e| anyhow!("{e}"))?,
            "kernel_scale" => {
                self.kernel_scale = match value {
                    "median" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "sigma" => self.sigma = parse_value(key, value)?,
            "folds" => self.folds = parse_value(key, value)?,
            "targets" => {
                self.targets = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e| anyhow!("{e}")))
                    .collect::<Result<_>>()?
            }
            "holdout" => self.holdout = parse_bool(key, value)?,
            "holdout_fraction" => self.holdout_fraction = parse_value(key, value)?,
            "cohort" => self.cohort = Some(value.to_string()),
            "patients" => self.patients = parse_value(key, value)?,
            "noise_sigma" => self.noise_sigma = Some(parse_value(key, value)?),
            "sweep_lambda" => self.sweep_lambda = parse_list(key, value)?,
            "sweep_phi" => self.sweep_phi = parse_list(key, value)?,
            "sweep_k" => self.sweep_k = parse_list(key, value)?,
            "sweep_sigma" => self.sweep_sigma = parse_list(key, value)?,
            other => bail!("unknown configuration key '{other}'"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.partition_config().validate()?;
        self.metric_params()?;
        if self.k < 2 {
            bail!("k must be at least 2, got {}", self.k);
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            bail!("sigma must be positive, got {}", self.sigma);
        }
        if self.folds < 2 {
            bail!("folds must be at least 2, got {}", self.folds);
        }
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if self.targets.is_empty() {
            bail!("targets must not be empty");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            bail!("holdout_fraction must lie in (0, 1), got {}", self.holdout_fraction);
        }
        if self.patients < 1 {
            bail!("patients must be at least 1");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    pub fn partition_config(&self) -> PartitionConfig {
        PartitionConfig {
            span_center: self.span_center,
            span_half_width: self.span_half_width,
            bin_width: self.bin_width,
            rng_seed: self.seed,
            bin_anchor: self.bin_anchor,
        }
    }

    pub fn metric_params(&self) -> Result<MetricParams> {
        Ok(MetricParams::new(self.lambda, self.phi)?)
    }

    pub fn dtw(&self) -> DtwConfig {
        DtwConfig {
            normalize_by_length: self.dtw_normalize,
            squared_cost: self.dtw_squared,
        }
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        Ok(EvalConfig {
            partition: self.partition_config(),
            params: self.metric_params()?,
            dtw: self.dtw(),
            kernel: self.kernel,
            kernel_scale: self.kernel_scale,
            k: self.k,
            sigma: self.sigma,
            n_folds: self.folds,
            seeds: self.seeds.clone(),
            targets: self.targets.clone(),
            holdout: self.holdout,
            holdout_test_fraction: self.holdout_fraction,
            spectral: SpectralOptions::default(),
        })
    }

    /// The ablation grid in deterministic lexicographic order
    /// (λ, then φ, then K, then σ), each axis sorted ascending and
    /// deduplicated. An axis without a grid holds its base value.
    pub fn sweep_combos(&self) -> Result<Vec<SweepCombo>> {
        if self.sweep_lambda.is_empty()
            && self.sweep_phi.is_empty()
            && self.sweep_k.is_empty()
            && self.sweep_sigma.is_empty()
        {
            bail!(
                "sweep needs at least one non-empty grid \
                 (sweep_lambda, sweep_phi, sweep_k or sweep_sigma)"
            );
        }
        let axis = |grid: &[f64], base: f64| -> Vec<f64> {
            let mut v = if grid.is_empty() { vec![base] } else { grid.to_vec() };
            v.sort_by(|a, b| a.partial_cmp(b).expect("grid values are finite"));
            v.dedup();
            v
        };
        let lambdas = axis(&self.sweep_lambda, self.lambda);
        let phis = axis(&self.sweep_phi, self.phi);
        let sigmas = axis(&self.sweep_sigma, self.sigma);
        let ks = {
            let mut v = if self.sweep_k.is_empty() { vec![self.k] } else { self.sweep_k.clone() };
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut combos = Vec::with_capacity(lambdas.len() * phis.len() * ks.len() * sigmas.len());
        for &lambda in &lambdas {
            MetricParams::new(lambda, self.phi)?;
            for &phi in &phis {
                MetricParams::new(lambda, phi)?;
                for &k in &ks {
                    if k < 2 {
                        bail!("sweep_k values must be at least 2, got {k}");
                    }
                    for &sigma in &sigmas {
                        if !(sigma.is_finite() && sigma > 0.0) {
                            bail!("sweep_sigma values must be positive, got {sigma}");
                        }
                        combos.push(SweepCombo { lambda, phi, k, sigma });
                    }
                }
            }
        }
        Ok(combos)
    }
}

/// One point of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCombo {
    pub lambda: f64,
    pub phi: f64,
    pub k: usize,
    pub sigma: f64,
}

impl SweepCombo {
    /// File-name stem identifying this combination.
    pub fn tag(&self) -> String {
        format!(
            "lambda{:?}_phi{:?}_k{}_sigma{:?}",
            self.lambda, self.phi, self.k, self.sigma
        )
    }
}
