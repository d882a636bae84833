//! Subcommand implementations. Each reads the declared input artifacts,
//! runs one pipeline stage, and writes its output artifacts into the
//! output directory under a fixed name, so a later stage finds them
//! without extra flags.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use stratus::cluster::{build_affinity, medoids, spectral_cluster_with, ClusterModel, SpectralOptions};
use stratus::io;
use stratus::metric::pairwise_matrix_with;
use stratus::model::SubTrajectory;
use stratus::partition::partition_dataset;
use stratus::stratify::{evaluate, EvalReport, Method};
use stratus::synth::{generate, CohortSpec};

use crate::config::RunConfig;

pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const METADATA_FILE: &str = "metadata.txt";
pub const TRUTH_FILE: &str = "truth.txt";
pub const SUBS_FILE: &str = "subs.txt";
pub const DMAT_FILE: &str = "distance.dmat";
pub const MODEL_FILE: &str = "cluster_model.txt";
pub const CLUSTER_SUMMARY_FILE: &str = "cluster_summary.txt";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const MEMBERS_FILE: &str = "cluster_members.txt";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

fn cohort_spec(cfg: &RunConfig) -> Result<CohortSpec> {
    let Some(name) = cfg.cohort.as_deref() else {
        bail!("synth needs a cohort family (--cohort or 'cohort =' in the config file)");
    };
    let mut spec = match name {
        "three_orthogonal" => CohortSpec::three_orthogonal(cfg.patients, cfg.seed),
        "rate_contrast" => CohortSpec::rate_contrast(cfg.patients, cfg.seed),
        "five_archetypes" => CohortSpec::five_archetypes(cfg.patients, cfg.seed),
        other => bail!(
            "unknown cohort '{other}' (expected three_orthogonal, rate_contrast or five_archetypes)"
        ),
    };
    if let Some(noise) = cfg.noise_sigma {
        spec.noise_sigma = noise;
    }
    Ok(spec)
}

/// Generate a synthetic cohort and write all four dataset files.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = cohort_spec(cfg)?;
    let cohort = generate(&spec).context("generating the cohort")?;
    io::save_embeddings(out.join(EMBEDDINGS_FILE), &cohort.trajectories)?;
    io::save_labels(out.join(LABELS_FILE), &cohort.labels)?;
    io::save_metadata(out.join(METADATA_FILE), &cohort.metadata)?;
    io::save_truth(out.join(TRUTH_FILE), &cohort.truth)?;
    let observations: usize = cohort.trajectories.iter().map(|t| t.len()).sum();
    println!(
        "wrote {} series ({} observations), {} labels to {}",
        cohort.trajectories.len(),
        observations,
        cohort.labels.len(),
        out.display()
    );
    Ok(())
}

/// Extract and thin sub-trajectory windows from an embeddings file.
pub fn cmd_partition(cfg: &RunConfig, embeddings: &Path, out: &Path) -> Result<()> {
    let trajectories = io::load_embeddings(embeddings)?;
    let pcfg = cfg.partition_config();
    let subs = partition_dataset(&trajectories, &pcfg)?;
    let path = out.join(SUBS_FILE);
    io::save_subs(&path, &subs, &pcfg.span()?)?;
    println!(
        "wrote {} sub-trajectories from {} series to {}",
        subs.len(),
        trajectories.len(),
        path.display()
    );
    Ok(())
}

/// Compute the pairwise distance matrix of a sub-trajectory set.
pub fn cmd_dist(cfg: &RunConfig, subs_path: &Path, out: &Path) -> Result<()> {
    let (subs, _span) = io::load_subs(subs_path)?;
    let params = cfg.metric_params()?;
    let d = pairwise_matrix_with(&subs, params, &cfg.dtw())?;
    let path = out.join(DMAT_FILE);
    io::save_distance_matrix(&path, &d)?;
    println!(
        "wrote {n}x{n} distance matrix (lambda={}, phi={}) to {}",
        params.lambda,
        params.phi,
        path.display(),
        n = d.n()
    );
    Ok(())
}

fn cluster_summary(model: &ClusterModel) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{} clusters over {} sub-trajectories (kernel={}, scale={})",
        model.k(),
        model.n(),
        model.kernel().as_str(),
        model.kernel_scale()
    )
    .unwrap();
    let eigenvalues: Vec<String> =
        model.eigenvalues().iter().map(|v| format!("{v:.6}")).collect();
    writeln!(out, "smallest laplacian eigenvalues: {}", eigenvalues.join(", ")).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "{:<10}{:>8}{:>10}", "cluster", "size", "share").unwrap();
    for (c, members) in model.members().iter().enumerate() {
        writeln!(
            out,
            "{:<10}{:>8}{:>10.3}",
            c,
            members.len(),
            members.len() as f64 / model.n() as f64
        )
        .unwrap();
    }
    if !model.isolated().is_empty() {
        let ids: Vec<&str> =
            model.isolated().iter().map(|&i| model.ids()[i].as_str()).collect();
        writeln!(out).unwrap();
        writeln!(
            out,
            "{} isolated rows (zero affinity to every other row), adopted by their \
             nearest neighbour's cluster: {}",
            ids.len(),
            ids.join(", ")
        )
        .unwrap();
    }
    out
}

/// Cluster a distance matrix; write the fitted model and a summary.
pub fn cmd_cluster(cfg: &RunConfig, dist_path: &Path, out: &Path) -> Result<()> {
    let d = io::load_distance_matrix(dist_path)?;
    let a = build_affinity(&d, cfg.kernel, cfg.kernel_scale)?;
    let model = spectral_cluster_with(&a, cfg.k, cfg.seed, &SpectralOptions::default())?;
    let model_path = out.join(MODEL_FILE);
    io::save_cluster_model(&model_path, &model)?;
    let summary = cluster_summary(&model);
    let summary_path = out.join(CLUSTER_SUMMARY_FILE);
    fs::write(&summary_path, &summary)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    print!("{summary}");
    println!("wrote {} and {}", model_path.display(), summary_path.display());
    Ok(())
}

/// Cross-validated risk prediction; writes the CSV and table reports.
pub fn cmd_predict(
    cfg: &RunConfig,
    embeddings: &Path,
    labels_path: &Path,
    metadata_path: &Path,
    out: &Path,
) -> Result<()> {
    let trajectories = io::load_embeddings(embeddings)?;
    let labels = io::load_labels(labels_path)?;
    let metadata = io::load_metadata(metadata_path)?;
    let report = evaluate(&trajectories, &labels, &metadata, &cfg.eval_config()?)?;
    let csv_path = out.join(REPORT_CSV_FILE);
    io::save_report_csv(&csv_path, &report)?;
    let table_path = out.join(REPORT_TABLE_FILE);
    io::save_report_table(&table_path, &report)?;
    print!("{}", io::format_report_table(&report));
    println!("wrote {} and {}", csv_path.display(), table_path.display());
    Ok(())
}

/// Run predict over the ablation grid, one report pair per combination,
/// plus a combined summary CSV.
pub fn cmd_sweep(
    cfg: &RunConfig,
    embeddings: &Path,
    labels_path: &Path,
    metadata_path: &Path,
    out: &Path,
) -> Result<()> {
    let combos = cfg.sweep_combos()?;
    let trajectories = io::load_embeddings(embeddings)?;
    let labels = io::load_labels(labels_path)?;
    let metadata = io::load_metadata(metadata_path)?;
    println!("sweeping {} parameter combinations", combos.len());

    let results: Vec<EvalReport> = combos
        .par_iter()
        .map(|combo| {
            let mut c = cfg.clone();
            c.lambda = combo.lambda;
            c.phi = combo.phi;
            c.k = combo.k;
            c.sigma = combo.sigma;
            evaluate(&trajectories, &labels, &metadata, &c.eval_config()?)
                .with_context(|| format!("evaluating {}", combo.tag()))
        })
        .collect::<Result<_>>()?;

    let mut summary = String::from("lambda,phi,k,sigma,target,method,mean_mae,std_mae,folds\n");
    for (combo, report) in combos.iter().zip(&results) {
        io::save_report_csv(out.join(format!("{}.csv", combo.tag())), report)?;
        io::save_report_table(out.join(format!("{}.txt", combo.tag())), report)?;
        for target in report.scored_targets() {
            for method in Method::ALL {
                if let Some(cell) = report.summary(target, method) {
                    writeln!(
                        summary,
                        "{:?},{:?},{},{:?},{},{},{:?},{:?},{}",
                        combo.lambda,
                        combo.phi,
                        combo.k,
                        combo.sigma,
                        target.as_str(),
                        method.as_str(),
                        cell.mean,
                        cell.std,
                        cell.folds
                    )
                    .unwrap();
                }
            }
        }
    }
    let summary_path = out.join(SWEEP_SUMMARY_FILE);
    fs::write(&summary_path, summary)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    println!(
        "wrote {} report pairs and {} to {}",
        combos.len(),
        SWEEP_SUMMARY_FILE,
        out.display()
    );
    Ok(())
}

fn member_line(id: &str, sub: &SubTrajectory) -> String {
    format!(
        "{id}  series {}  patient {}  t {:.2} to {:.2}  {} points",
        sub.series_id,
        sub.patient_id,
        sub.t_start(),
        sub.t_end(),
        sub.len()
    )
}

/// Per-cluster medoid and member listing for qualitative review.
pub fn cmd_report(
    cfg: &RunConfig,
    model_path: &Path,
    subs_path: &Path,
    dist_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let model = io::load_cluster_model(model_path)?;
    let (subs, _span) = io::load_subs(subs_path)?;
    let ids: Vec<String> = subs.iter().map(|s| s.id()).collect();
    if ids != model.ids() {
        bail!(
            "sub-trajectory set {} does not match the cluster model {} (different ids)",
            subs_path.display(),
            model_path.display()
        );
    }
    let d = match dist_path {
        Some(path) => {
            let d = io::load_distance_matrix(path)?;
            if d.ids() != model.ids() {
                bail!(
                    "distance matrix {} does not match the cluster model {} (different ids)",
                    path.display(),
                    model_path.display()
                );
            }
            d
        }
        None => pairwise_matrix_with(&subs, model.params(), &cfg.dtw())?,
    };
    let medoid_ids = medoids(&model, &d)?;

    let mut text = String::new();
    writeln!(
        text,
        "{} clusters over {} sub-trajectories (kernel={}, scale={})",
        model.k(),
        model.n(),
        model.kernel().as_str(),
        model.kernel_scale()
    )
    .unwrap();
    for (c, members) in model.members().iter().enumerate() {
        let m = medoid_ids[c];
        writeln!(text).unwrap();
        writeln!(text, "cluster {c}: {} members", members.len()).unwrap();
        writeln!(text, "  medoid: {}", member_line(&model.ids()[m], &subs[m])).unwrap();
        for &i in members {
            writeln!(text, "  {}", member_line(&model.ids()[i], &subs[i])).unwrap();
        }
    }
    let path = out.join(MEMBERS_FILE);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "wrote medoid and member listing for {} clusters to {}",
        model.k(),
        path.display()
    );
    Ok(())
}
