//! On-disk formats for datasets and pipeline artifacts.
//!
//! Every file starts with a `# stratus-<kind> v1` header line carrying
//! `key=value` settings, followed by comma-separated record lines.
//! Datasets (embeddings, labels, metadata, ground truth) are plain UTF-8
//! text, diff-able, and order-insensitive: loading canonicalizes record
//! order, so permuting lines yields the same value. Pipeline artifacts
//! (sub-trajectory sets, distance matrices, cluster models, risk models)
//! round-trip exactly; floats are written in shortest form that parses
//! back bitwise-equal. The distance matrix's quadratic payload is stored
//! as a little-endian binary triangle after the text header, guarded by a
//! checksum.
//!
//! Identifiers must not contain commas, newlines, or carriage returns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::cluster::{ClusterModel, Kernel};
use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::metric::{DistanceMatrix, DtwConfig};
use crate::model::{
    validate_dataset, CohortMetadata, FeatureObservation, GradeClass, Label, MetricParams,
    SeriesMeta, SeriesTrajectory, SpanBounds, SubTrajectory, TargetKind, DAYS_PER_YEAR,
};
use crate::stratify::{EvalReport, LinearFit, Method, RiskModel};

/// Unit of the time column in an embeddings file. Values are converted to
/// years on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeUnit {
    #[default]
    Years,
    Days,
}

impl TimeUnit {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimeUnit::Years => "years",
            TimeUnit::Days => "days",
        }
    }
}

impl FromStr for TimeUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "years" => Ok(TimeUnit::Years),
            "days" => Ok(TimeUnit::Days),
            other => Err(Error::InvalidParam(format!(
                "unknown time unit '{other}' (expected years or days)"
            ))),
        }
    }
}

/// Header of an embeddings file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub feature_dim: usize,
    pub time_unit: TimeUnit,
    pub series: usize,
    pub patients: usize,
    pub observations: usize,
}

/// Shortest decimal form that parses back to the identical f64.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn check_id(id: &str) -> Result<()> {
    if id.contains(',') || id.contains('\n') || id.contains('\r') {
        return Err(Error::InvalidParam(format!(
            "identifier '{id}' contains a comma or line break and cannot be saved"
        )));
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn line_err(path: &Path, line_no: usize, detail: impl std::fmt::Display) -> Error {
    Error::format(path, format!("line {line_no}: {detail}"))
}

/// Parse `# stratus-<kind> v1 key=value ...` and return the key/value map.
fn parse_header<'s>(
    line: Option<&'s str>,
    kind: &str,
    path: &Path,
) -> Result<BTreeMap<&'s str, &'s str>> {
    let line = line.ok_or_else(|| Error::format(path, "empty file"))?;
    let mut parts = line.split_whitespace();
    let tag = format!("stratus-{kind}");
    if parts.next() != Some("#") || parts.next() != Some(tag.as_str()) {
        return Err(Error::format(
            path,
            format!("missing '# {tag} v1' header on line 1"),
        ));
    }
    match parts.next() {
        Some("v1") => {}
        Some(other) => {
            return Err(Error::format(path, format!("unsupported format version '{other}'")))
        }
        None => return Err(Error::format(path, "header lacks a format version")),
    }
    let mut map = BTreeMap::new();
    for part in parts {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::format(path, format!("malformed header entry '{part}' (expected key=value)"))
        })?;
        map.insert(key, value);
    }
    Ok(map)
}

fn header_get<'s>(
    map: &BTreeMap<&'s str, &'s str>,
    key: &str,
    path: &Path,
) -> Result<&'s str> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::format(path, format!("header is missing '{key}='")))
}

fn parse_num<T>(s: &str, what: &str, path: &Path, line_no: usize) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| line_err(path, line_no, format!("bad {what} '{s}': {e}")))
}

/// Record lines of a text artifact: (1-based line number, content), with
/// the header and blank lines skipped.
fn record_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
}

// ---------------------------------------------------------------------------
// Embeddings

/// Write one observation per line: `series_id,patient_id,t,f_1,...,f_d`.
/// The dataset must pass validation; series are written in id order.
pub fn save_embeddings(path: impl AsRef<Path>, trajectories: &[SeriesTrajectory]) -> Result<()> {
    let path = path.as_ref();
    validate_dataset(trajectories).into_result()?;
    let dim = trajectories
        .iter()
        .find_map(|t| t.dim())
        .ok_or_else(|| Error::InvalidParam("cannot save a dataset with no observations".into()))?;
    let mut ordered: Vec<&SeriesTrajectory> = trajectories.iter().collect();
    ordered.sort_by(|a, b| a.series_id.cmp(&b.series_id));
    let patients: BTreeSet<&str> = ordered.iter().map(|t| t.patient_id.as_str()).collect();
    let observations: usize = ordered.iter().map(|t| t.len()).sum();

    let mut out = String::new();
    writeln!(
        out,
        "# stratus-embeddings v1 dim={dim} unit=years series={} patients={} obs={observations}",
        ordered.len(),
        patients.len()
    )
    .unwrap();
    for traj in ordered {
        check_id(&traj.series_id)?;
        check_id(&traj.patient_id)?;
        for obs in &traj.observations {
            write!(out, "{},{},{}", traj.series_id, traj.patient_id, fmt_f64(obs.t)).unwrap();
            for f in &obs.features {
                write!(out, ",{}", fmt_f64(*f)).unwrap();
            }
            out.push('\n');
        }
    }
    write_file(path, out.as_bytes())
}

/// Header of an embeddings file, without reading the records.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let header = parse_header(content.lines().next(), "embeddings", path)?;
    let dim: usize = header_get(&header, "dim", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad dim: {e}")))?;
    if dim == 0 {
        return Err(Error::format(path, "feature dimension must be at least 1"));
    }
    let unit: TimeUnit = header_get(&header, "unit", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("{e}")))?;
    let get_count = |key: &str| -> Result<usize> {
        header_get(&header, key, path)?
            .parse()
            .map_err(|e| Error::format(path, format!("bad {key}: {e}")))
    };
    Ok(DatasetManifest {
        format_version: 1,
        feature_dim: dim,
        time_unit: unit,
        series: get_count("series")?,
        patients: get_count("patients")?,
        observations: get_count("obs")?,
    })
}

/// Load an embeddings file into time-sorted trajectories, one per series,
/// ordered by series id. Record order in the file does not matter.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<SeriesTrajectory>> {
    let path = path.as_ref();
    let manifest = load_manifest(path)?;
    let content = read_text(path)?;
    let scale = match manifest.time_unit {
        TimeUnit::Years => 1.0,
        TimeUnit::Days => 1.0 / DAYS_PER_YEAR,
    };

    let mut groups: BTreeMap<String, Vec<FeatureObservation>> = BTreeMap::new();
    let mut observations = 0usize;
    for (line_no, line) in record_lines(&content) {
        let mut fields = line.split(',');
        let series_id = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| line_err(path, line_no, "missing series_id"))?;
        let patient_id = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| line_err(path, line_no, "missing patient_id"))?;
        let t_raw = fields
            .next()
            .ok_or_else(|| line_err(path, line_no, "missing time column"))?;
        let t: f64 = parse_num(t_raw, "time", path, line_no)?;
        let mut features = Vec::with_capacity(manifest.feature_dim);
        for f in fields {
            features.push(parse_num::<f64>(f, "feature", path, line_no)?);
        }
        if features.len() != manifest.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "series '{series_id}' line {line_no}: {} features, manifest says dim={}",
                features.len(),
                manifest.feature_dim
            )));
        }
        observations += 1;
        groups.entry(series_id.to_string()).or_default().push(FeatureObservation {
            series_id: series_id.to_string(),
            patient_id: patient_id.to_string(),
            t: t * scale,
            features,
        });
    }

    if groups.len() != manifest.series {
        return Err(Error::format(
            path,
            format!("header says series={}, file has {}", manifest.series, groups.len()),
        ));
    }
    if observations != manifest.observations {
        return Err(Error::format(
            path,
            format!("header says obs={}, file has {observations}", manifest.observations),
        ));
    }
    let trajectories: Vec<SeriesTrajectory> = groups
        .into_iter()
        .map(|(series_id, obs)| {
            let patient_id = obs[0].patient_id.clone();
            SeriesTrajectory::new(series_id, patient_id, obs)
        })
        .collect();
    let patients: BTreeSet<&str> = trajectories.iter().map(|t| t.patient_id.as_str()).collect();
    if patients.len() != manifest.patients {
        return Err(Error::format(
            path,
            format!("header says patients={}, file has {}", manifest.patients, patients.len()),
        ));
    }
    validate_dataset(&trajectories).into_result()?;
    Ok(trajectories)
}

// ---------------------------------------------------------------------------
// Labels

fn canonical_labels(labels: &[Label]) -> Vec<Label> {
    let mut sorted = labels.to_vec();
    sorted.sort_by(|a, b| {
        (a.series_id.as_str(), a.kind, a.t, a.value)
            .partial_cmp(&(b.series_id.as_str(), b.kind, b.t, b.value))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    sorted
}

/// Write labels as `series_id,t,kind,value` lines in canonical order.
pub fn save_labels(path: impl AsRef<Path>, labels: &[Label]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    writeln!(out, "# stratus-labels v1 labels={}", labels.len()).unwrap();
    for label in canonical_labels(labels) {
        check_id(&label.series_id)?;
        writeln!(
            out,
            "{},{},{},{}",
            label.series_id,
            fmt_f64(label.t),
            label.kind.as_str(),
            fmt_f64(label.value)
        )
        .unwrap();
    }
    write_file(path, out.as_bytes())
}

/// Load labels in canonical order; line order in the file does not matter.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<Label>> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let header = parse_header(content.lines().next(), "labels", path)?;
    let expected: usize = header_get(&header, "labels", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad labels count: {e}")))?;
    let mut labels = Vec::new();
    for (line_no, line) in record_lines(&content) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(line_err(path, line_no, format!("expected 4 fields, got {}", fields.len())));
        }
        let t: f64 = parse_num(fields[1], "time", path, line_no)?;
        let kind: TargetKind = fields[2]
            .parse()
            .map_err(|e| line_err(path, line_no, format!("{e}")))?;
        let value: f64 = parse_num(fields[3], "value", path, line_no)?;
        let label = Label::new(fields[0], t, kind, value)
            .map_err(|e| line_err(path, line_no, format!("{e}")))?;
        labels.push(label);
    }
    if labels.len() != expected {
        return Err(Error::format(
            path,
            format!("header says labels={expected}, file has {}", labels.len()),
        ));
    }
    Ok(canonical_labels(&labels))
}

// ---------------------------------------------------------------------------
// Cohort metadata

/// Write per-series demographics and per-visit grades.
pub fn save_metadata(path: impl AsRef<Path>, metadata: &CohortMetadata) -> Result<()> {
    let path = path.as_ref();
    let grade_count: usize = metadata.grades.values().map(Vec::len).sum();
    let mut out = String::new();
    writeln!(
        out,
        "# stratus-meta v1 series={} grades={grade_count}",
        metadata.series.len()
    )
    .unwrap();
    for (series_id, meta) in &metadata.series {
        check_id(series_id)?;
        check_id(&meta.patient_id)?;
        writeln!(
            out,
            "series,{series_id},{},{},{}",
            meta.patient_id,
            fmt_f64(meta.age_at_epoch),
            meta.sex
        )
        .unwrap();
    }
    for (series_id, grades) in &metadata.grades {
        check_id(series_id)?;
        for (t, grade) in grades {
            writeln!(out, "grade,{series_id},{},{}", fmt_f64(*t), grade.as_str()).unwrap();
        }
    }
    write_file(path, out.as_bytes())
}

pub fn load_metadata(path: impl AsRef<Path>) -> Result<CohortMetadata> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let header = parse_header(content.lines().next(), "meta", path)?;
    let expected_series: usize = header_get(&header, "series", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad series count: {e}")))?;
    let expected_grades: usize = header_get(&header, "grades", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad grades count: {e}")))?;

    let mut metadata = CohortMetadata::default();
    let mut grade_count = 0usize;
    for (line_no, line) in record_lines(&content) {
        let fields: Vec<&str> = line.split(',').collect();
        match fields[0] {
            "series" => {
                if fields.len() != 5 {
                    return Err(line_err(path, line_no, "series record needs 5 fields"));
                }
                let age: f64 = parse_num(fields[3], "age", path, line_no)?;
                let sex: u8 = parse_num(fields[4], "sex", path, line_no)?;
                if sex > 1 {
                    return Err(line_err(path, line_no, format!("sex must be 0 or 1, got {sex}")));
                }
                let previous = metadata.series.insert(
                    fields[1].to_string(),
                    SeriesMeta { patient_id: fields[2].to_string(), age_at_epoch: age, sex },
                );
                if previous.is_some() {
                    return Err(line_err(
                        path,
                        line_no,
                        format!("duplicate series record for '{}'", fields[1]),
                    ));
                }
            }
            "grade" => {
                if fields.len() != 4 {
                    return Err(line_err(path, line_no, "grade record needs 4 fields"));
                }
                let t: f64 = parse_num(fields[2], "time", path, line_no)?;
                let grade: GradeClass = fields[3]
                    .parse()
                    .map_err(|e| line_err(path, line_no, format!("{e}")))?;
                metadata.grades.entry(fields[1].to_string()).or_default().push((t, grade));
                grade_count += 1;
            }
            other => {
                return Err(line_err(path, line_no, format!("unknown record kind '{other}'")));
            }
        }
    }
    for grades in metadata.grades.values_mut() {
        grades.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    }
    if metadata.series.len() != expected_series {
        return Err(Error::format(
            path,
            format!("header says series={expected_series}, file has {}", metadata.series.len()),
        ));
    }
    if grade_count != expected_grades {
        return Err(Error::format(
            path,
            format!("header says grades={expected_grades}, file has {grade_count}"),
        ));
    }
    Ok(metadata)
}

// ---------------------------------------------------------------------------
// Ground truth

/// Write `(series_id, archetype index)` pairs, sorted by series id.
pub fn save_truth(path: impl AsRef<Path>, truth: &[(String, usize)]) -> Result<()> {
    let path = path.as_ref();
    let mut sorted = truth.to_vec();
    sorted.sort();
    let mut out = String::new();
    writeln!(out, "# stratus-truth v1 entries={}", sorted.len()).unwrap();
    for (series_id, archetype) in &sorted {
        check_id(series_id)?;
        writeln!(out, "truth,{series_id},{archetype}").unwrap();
    }
    write_file(path, out.as_bytes())
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<(String, usize)>> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let header = parse_header(content.lines().next(), "truth", path)?;
    let expected: usize = header_get(&header, "entries", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad entries count: {e}")))?;
    let mut truth = Vec::new();
    for (line_no, line) in record_lines(&content) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 || fields[0] != "truth" {
            return Err(line_err(path, line_no, "expected 'truth,<series_id>,<archetype>'"));
        }
        let archetype: usize = parse_num(fields[2], "archetype index", path, line_no)?;
        truth.push((fields[1].to_string(), archetype));
    }
    if truth.len() != expected {
        return Err(Error::format(
            path,
            format!("header says entries={expected}, file has {}", truth.len()),
        ));
    }
    truth.sort();
    Ok(truth)
}

// ---------------------------------------------------------------------------
// Sub-trajectory sets

/// Write a sub-trajectory set along with the span bounds it was extracted
/// under (needed to revalidate on load). Order is preserved.
pub fn save_subs(
    path: impl AsRef<Path>,
    subs: &[SubTrajectory],
    span: &SpanBounds,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    writeln!(
        out,
        "# stratus-subs v1 subs={} span_min={} span_max={}",
        subs.len(),
        fmt_f64(span.min),
        fmt_f64(span.max)
    )
    .unwrap();
    for sub in subs {
        check_id(&sub.series_id)?;
        check_id(&sub.patient_id)?;
        writeln!(
            out,
            "sub,{},{},{},{},{}",
            sub.series_id,
            sub.patient_id,
            sub.start_index,
            sub.len(),
            sub.dim()
        )
        .unwrap();
        for point in &sub.points {
            write!(out, "p,{}", fmt_f64(point.t)).unwrap();
            for f in &point.features {
                write!(out, ",{}", fmt_f64(*f)).unwrap();
            }
            out.push('\n');
        }
    }
    write_file(path, out.as_bytes())
}

pub fn load_subs(path: impl AsRef<Path>) -> Result<(Vec<SubTrajectory>, SpanBounds)> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let header = parse_header(content.lines().next(), "subs", path)?;
    let expected: usize = header_get(&header, "subs", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad subs count: {e}")))?;
    let span_min: f64 = header_get(&header, "span_min", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad span_min: {e}")))?;
    let span_max: f64 = header_get(&header, "span_max", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad span_max: {e}")))?;
    let span = SpanBounds::new(span_min, span_max)?;

    struct Pending {
        series_id: String,
        patient_id: String,
        start_index: usize,
        n_points: usize,
        dim: usize,
        points: Vec<crate::model::TrajPoint>,
        line_no: usize,
    }
    let mut subs = Vec::new();
    let mut pending: Option<Pending> = None;
    let finish = |p: Pending, subs: &mut Vec<SubTrajectory>| -> Result<()> {
        if p.points.len() != p.n_points {
            return Err(line_err(
                path,
                p.line_no,
                format!("sub promises {} points, found {}", p.n_points, p.points.len()),
            ));
        }
        let sub = SubTrajectory::new(p.series_id, p.patient_id, p.start_index, p.points, &span)?;
        subs.push(sub);
        Ok(())
    };
    for (line_no, line) in record_lines(&content) {
        let fields: Vec<&str> = line.split(',').collect();
        match fields[0] {
            "sub" => {
                if let Some(p) = pending.take() {
                    finish(p, &mut subs)?;
                }
                if fields.len() != 6 {
                    return Err(line_err(path, line_no, "sub record needs 6 fields"));
                }
                pending = Some(Pending {
                    series_id: fields[1].to_string(),
                    patient_id: fields[2].to_string(),
                    start_index: parse_num(fields[3], "start index", path, line_no)?,
                    n_points: parse_num(fields[4], "point count", path, line_no)?,
                    dim: parse_num(fields[5], "dimension", path, line_no)?,
                    points: Vec::new(),
                    line_no,
                });
            }
            "p" => {
                let p = pending
                    .as_mut()
                    .ok_or_else(|| line_err(path, line_no, "point before any sub record"))?;
                let t: f64 = parse_num(fields[1], "time", path, line_no)?;
                let features: Vec<f64> = fields[2..]
                    .iter()
                    .map(|f| parse_num::<f64>(f, "feature", path, line_no))
                    .collect::<Result<_>>()?;
                if features.len() != p.dim {
                    return Err(Error::DimensionMismatch(format!(
                        "sub-trajectory '{}' line {line_no}: {} features, record says dim={}",
                        p.series_id,
                        features.len(),
                        p.dim
                    )));
                }
                p.points.push(crate::model::TrajPoint { t, features });
            }
            other => {
                return Err(line_err(path, line_no, format!("unknown record kind '{other}'")));
            }
        }
    }
    if let Some(p) = pending.take() {
        finish(p, &mut subs)?;
    }
    if subs.len() != expected {
        return Err(Error::format(
            path,
            format!("header says subs={expected}, file has {}", subs.len()),
        ));
    }
    Ok((subs, span))
}

// ---------------------------------------------------------------------------
// Distance matrices

/// Write a distance matrix: text header and id list, then the lower
/// triangle (diagonal included) as little-endian f64, checksummed.
pub fn save_distance_matrix(path: impl AsRef<Path>, d: &DistanceMatrix) -> Result<()> {
    let path = path.as_ref();
    let n = d.n();
    let mut block = Vec::with_capacity(n * (n + 1) / 2 * 8);
    for i in 0..n {
        for j in 0..=i {
            block.extend_from_slice(&d.get(i, j).to_le_bytes());
        }
    }
    let params = d.params();
    let dtw = d.dtw_config();
    let mut out = String::new();
    writeln!(
        out,
        "# stratus-dmat v1 n={n} lambda={} phi={} dtw_normalize={} dtw_squared={} checksum={:016x} data={}",
        fmt_f64(params.lambda),
        fmt_f64(params.phi),
        u8::from(dtw.normalize_by_length),
        u8::from(dtw.squared_cost),
        fnv1a64(&block),
        block.len()
    )
    .unwrap();
    for id in d.ids() {
        check_id(id)?;
        writeln!(out, "id,{id}").unwrap();
    }
    let mut bytes = out.into_bytes();
    bytes.extend_from_slice(&block);
    write_file(path, &bytes)
}

pub fn load_distance_matrix(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;

    // Split the text prefix (header + id lines) from the binary block.
    let mut offset = 0usize;
    let mut next_line = |bytes: &[u8]| -> Result<String> {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(path, "truncated text section"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::format(path, "text section is not UTF-8"))?
            .to_string();
        offset += end + 1;
        Ok(line)
    };

    let header_line = next_line(&bytes)?;
    let header = parse_header(Some(header_line.as_str()), "dmat", path)?;
    let n: usize = header_get(&header, "n", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad n: {e}")))?;
    let lambda: f64 = header_get(&header, "lambda", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad lambda: {e}")))?;
    let phi: f64 = header_get(&header, "phi", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad phi: {e}")))?;
    let parse_flag = |key: &str| -> Result<bool> {
        match header_get(&header, key, path)? {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::format(path, format!("bad {key}: expected 0 or 1, got '{other}'"))),
        }
    };
    let dtw = DtwConfig {
        normalize_by_length: parse_flag("dtw_normalize")?,
        squared_cost: parse_flag("dtw_squared")?,
    };
    let stored_checksum = header_get(&header, "checksum", path)?.to_string();
    let data_len: usize = header_get(&header, "data", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad data length: {e}")))?;

    let mut ids = Vec::with_capacity(n);
    for i in 0..n {
        let line = next_line(&bytes)?;
        let id = line
            .strip_prefix("id,")
            .ok_or_else(|| Error::format(path, format!("expected 'id,...' for row {i}")))?;
        ids.push(id.to_string());
    }

    let block = &bytes[offset..];
    if block.len() != data_len {
        return Err(Error::format(
            path,
            format!("header says data={data_len} bytes, file has {}", block.len()),
        ));
    }
    if data_len != n * (n + 1) / 2 * 8 {
        return Err(Error::format(
            path,
            format!("data length {data_len} does not match n={n}"),
        ));
    }
    let computed = format!("{:016x}", fnv1a64(block));
    if computed != stored_checksum {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            stored: stored_checksum,
            computed,
        });
    }

    let mut values = vec![0.0; n * n];
    let mut cursor = 0usize;
    for i in 0..n {
        for j in 0..=i {
            let raw: [u8; 8] = block[cursor..cursor + 8].try_into().unwrap();
            let v = f64::from_le_bytes(raw);
            values[i * n + j] = v;
            values[j * n + i] = v;
            cursor += 8;
        }
    }
    DistanceMatrix::from_full(values, ids, MetricParams::new(lambda, phi)?, dtw)
}

// ---------------------------------------------------------------------------
// Cluster models

/// Write a fitted cluster model: scalars in the header, eigenvalues on one
/// line, then one `row,<id>,<cluster>,<isolated>,<embedding...>` per
/// sub-trajectory.
pub fn save_cluster_model(path: impl AsRef<Path>, model: &ClusterModel) -> Result<()> {
    let path = path.as_ref();
    let params = model.params();
    let mut out = String::new();
    writeln!(
        out,
        "# stratus-cluster v1 k={} n={} kernel={} kernel_scale={} lambda={} phi={} kmeans_seed={}",
        model.k(),
        model.n(),
        model.kernel().as_str(),
        fmt_f64(model.kernel_scale()),
        fmt_f64(params.lambda),
        fmt_f64(params.phi),
        model.kmeans_seed()
    )
    .unwrap();
    out.push_str("eig");
    for v in model.eigenvalues() {
        write!(out, ",{}", fmt_f64(*v)).unwrap();
    }
    out.push('\n');
    let isolated: BTreeSet<usize> = model.isolated().iter().copied().collect();
    for i in 0..model.n() {
        let id = &model.ids()[i];
        check_id(id)?;
        write!(
            out,
            "row,{id},{},{}",
            model.cluster_of(i),
            u8::from(isolated.contains(&i))
        )
        .unwrap();
        for v in &model.embedding()[i] {
            write!(out, ",{}", fmt_f64(*v)).unwrap();
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn load_cluster_model(path: impl AsRef<Path>) -> Result<ClusterModel> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let header = parse_header(content.lines().next(), "cluster", path)?;
    let k: usize = header_get(&header, "k", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad k: {e}")))?;
    let n: usize = header_get(&header, "n", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad n: {e}")))?;
    let kernel: Kernel = header_get(&header, "kernel", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("{e}")))?;
    let kernel_scale: f64 = header_get(&header, "kernel_scale", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad kernel_scale: {e}")))?;
    let lambda: f64 = header_get(&header, "lambda", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad lambda: {e}")))?;
    let phi: f64 = header_get(&header, "phi", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad phi: {e}")))?;
    let kmeans_seed: u64 = header_get(&header, "kmeans_seed", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad kmeans_seed: {e}")))?;

    let mut eigenvalues: Option<Vec<f64>> = None;
    let mut ids = Vec::new();
    let mut assignment = Vec::new();
    let mut isolated = Vec::new();
    let mut embedding = Vec::new();
    for (line_no, line) in record_lines(&content) {
        let fields: Vec<&str> = line.split(',').collect();
        match fields[0] {
            "eig" => {
                if eigenvalues.is_some() {
                    return Err(line_err(path, line_no, "duplicate eigenvalue line"));
                }
                let values: Vec<f64> = fields[1..]
                    .iter()
                    .map(|f| parse_num::<f64>(f, "eigenvalue", path, line_no))
                    .collect::<Result<_>>()?;
                eigenvalues = Some(values);
            }
            "row" => {
                if fields.len() < 4 {
                    return Err(line_err(path, line_no, "row record needs at least 4 fields"));
                }
                ids.push(fields[1].to_string());
                assignment.push(parse_num::<usize>(fields[2], "cluster id", path, line_no)?);
                match fields[3] {
                    "0" => {}
                    "1" => isolated.push(ids.len() - 1),
                    other => {
                        return Err(line_err(
                            path,
                            line_no,
                            format!("isolated flag must be 0 or 1, got '{other}'"),
                        ))
                    }
                }
                let row: Vec<f64> = fields[4..]
                    .iter()
                    .map(|f| parse_num::<f64>(f, "embedding value", path, line_no))
                    .collect::<Result<_>>()?;
                embedding.push(row);
            }
            other => {
                return Err(line_err(path, line_no, format!("unknown record kind '{other}'")));
            }
        }
    }
    let eigenvalues =
        eigenvalues.ok_or_else(|| Error::format(path, "missing eigenvalue line"))?;
    if ids.len() != n {
        return Err(Error::format(path, format!("header says n={n}, file has {} rows", ids.len())));
    }
    ClusterModel::from_parts(
        k,
        assignment,
        MetricParams::new(lambda, phi)?,
        kernel,
        kernel_scale,
        kmeans_seed,
        embedding,
        eigenvalues,
        isolated,
        ids,
    )
}

// ---------------------------------------------------------------------------
// Risk models

/// Write a fitted linear risk model.
pub fn save_risk_model(path: impl AsRef<Path>, model: &RiskModel) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    writeln!(
        out,
        "# stratus-risk v1 target={} seed={} n_folds={} sigma={} intercept={}",
        model.target.as_str(),
        model.seed,
        model.n_folds,
        fmt_f64(model.sigma),
        fmt_f64(model.fit.intercept)
    )
    .unwrap();
    out.push_str("coefficients");
    for c in &model.fit.coefficients {
        write!(out, ",{}", fmt_f64(*c)).unwrap();
    }
    out.push('\n');
    write_file(path, out.as_bytes())
}

pub fn load_risk_model(path: impl AsRef<Path>) -> Result<RiskModel> {
    let path = path.as_ref();
    let content = read_text(path)?;
    let header = parse_header(content.lines().next(), "risk", path)?;
    let target: TargetKind = header_get(&header, "target", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("{e}")))?;
    let seed: u64 = header_get(&header, "seed", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad seed: {e}")))?;
    let n_folds: usize = header_get(&header, "n_folds", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad n_folds: {e}")))?;
    let sigma: f64 = header_get(&header, "sigma", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad sigma: {e}")))?;
    let intercept: f64 = header_get(&header, "intercept", path)?
        .parse()
        .map_err(|e| Error::format(path, format!("bad intercept: {e}")))?;

    let mut coefficients: Option<Vec<f64>> = None;
    for (line_no, line) in record_lines(&content) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0] != "coefficients" {
            return Err(line_err(path, line_no, format!("unknown record kind '{}'", fields[0])));
        }
        if coefficients.is_some() {
            return Err(line_err(path, line_no, "duplicate coefficients line"));
        }
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| parse_num::<f64>(f, "coefficient", path, line_no))
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(line_err(path, line_no, "a risk model needs at least one coefficient"));
        }
        coefficients = Some(values);
    }
    let coefficients =
        coefficients.ok_or_else(|| Error::format(path, "missing coefficients line"))?;
    Ok(RiskModel {
        target,
        fit: LinearFit { coefficients, intercept },
        seed,
        n_folds,
        sigma,
    })
}

// ---------------------------------------------------------------------------
// Evaluation reports

fn sanitize_note(note: &str) -> String {
    note.replace(['\n', '\r'], " ").replace(',', ";")
}

/// Machine-readable evaluation report: one CSV with `kind` discriminating
/// measurement rows, per-cell summaries, per-seed means, and fold records.
pub fn save_report_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("kind,seed,fold,target,method,n_train,n_test,mae,mae_std,note\n");
    for m in &report.measurements {
        writeln!(
            out,
            "measurement,{},{},{},{},{},{},{},,",
            m.seed,
            m.fold,
            m.target.as_str(),
            m.method.as_str(),
            m.n_train_rows,
            m.n_test_rows,
            fmt_f64(m.mae)
        )
        .unwrap();
    }
    for target in report.scored_targets() {
        for method in Method::ALL {
            if let Some(summary) = report.summary(target, method) {
                writeln!(
                    out,
                    "summary,,,{},{},,,{},{},folds={}",
                    target.as_str(),
                    method.as_str(),
                    fmt_f64(summary.mean),
                    fmt_f64(summary.std),
                    summary.folds
                )
                .unwrap();
                for (seed, mean) in report.per_seed_mean(target, method) {
                    writeln!(
                        out,
                        "seed_mean,{seed},,{},{},,,{},,",
                        target.as_str(),
                        method.as_str(),
                        fmt_f64(mean)
                    )
                    .unwrap();
                }
            }
        }
    }
    for fold in &report.folds {
        let note = if fold.notes.is_empty() {
            "ok".to_string()
        } else {
            sanitize_note(&fold.notes.join("; "))
        };
        writeln!(
            out,
            "fold,{},{},,,{},{},,,{note}",
            fold.seed, fold.fold, fold.n_train_subs, fold.n_test_subs
        )
        .unwrap();
    }
    write_file(path, out.as_bytes())
}

/// Human-readable evaluation summary table.
pub fn format_report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let seeds: Vec<String> = report.seeds.iter().map(u64::to_string).collect();
    writeln!(out, "risk prediction evaluation").unwrap();
    writeln!(
        out,
        "k={} sigma={} lambda={} phi={} kernel={} {} seeds={}",
        report.k,
        report.sigma,
        report.params.lambda,
        report.params.phi,
        report.kernel.as_str(),
        if report.holdout { "holdout".to_string() } else { format!("folds={}", report.n_folds) },
        seeds.join(",")
    )
    .unwrap();
    writeln!(out).unwrap();
    writeln!(
        out,
        "{:<22}{:<22}{:>12}{:>12}{:>8}",
        "target", "method", "mean MAE", "std", "folds"
    )
    .unwrap();
    for target in report.scored_targets() {
        for method in Method::ALL {
            if let Some(summary) = report.summary(target, method) {
                writeln!(
                    out,
                    "{:<22}{:<22}{:>12.4}{:>12.4}{:>8}",
                    target.as_str(),
                    method.as_str(),
                    summary.mean,
                    summary.std,
                    summary.folds
                )
                .unwrap();
            }
        }
    }
    let skipped: Vec<&crate::stratify::FoldRecord> =
        report.folds.iter().filter(|f| !f.notes.is_empty()).collect();
    if !skipped.is_empty() {
        writeln!(out).unwrap();
        writeln!(out, "notes:").unwrap();
        for fold in skipped {
            for note in &fold.notes {
                writeln!(out, "  seed {} fold {}: {note}", fold.seed, fold.fold).unwrap();
            }
        }
    }
    out
}

pub fn save_report_table(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    write_file(path.as_ref(), format_report_table(report).as_bytes())
}
