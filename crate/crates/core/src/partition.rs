//! Sub-trajectory extraction: enumerate every window of a series whose
//! elapsed time is about one year, then thin them so no 0.5-year interval
//! contributes more than one window.
//!
//! Enumeration keeps all intermediary observations of a window. Sampling
//! groups windows by the bin `floor(anchor / bin_width)` (anchor = window
//! start time by default) and draws one window per non-empty bin, using an
//! RNG stream derived from `(seed, series_id)` so sampling in one series is
//! unaffected by the presence of others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hash::stream_seed;
use crate::model::{SeriesTrajectory, SpanBounds, SubTrajectory};

/// Which time of a window selects its sampling bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinAnchor {
    /// Bin by the window's first observation time.
    #[default]
    Start,
    /// Bin by the midpoint between first and last observation time.
    Midpoint,
}

/// Parameters of window enumeration and sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionConfig {
    /// Target elapsed time of a window, in years.
    pub span_center: f64,
    /// Half-width of the accepted elapsed-time interval, in years.
    pub span_half_width: f64,
    /// Width of the sampling bins, in years.
    pub bin_width: f64,
    /// Base seed for the per-series sampling streams.
    pub rng_seed: u64,
    /// Bin anchoring rule. Bins are aligned to the dataset epoch (t = 0),
    /// not to each series' first observation.
    pub bin_anchor: BinAnchor,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            span_center: 1.0,
            span_half_width: 0.5,
            bin_width: 0.5,
            rng_seed: 0,
            bin_anchor: BinAnchor::Start,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.span_center.is_finite()
            || !self.span_half_width.is_finite()
            || self.span_half_width < 0.0
            || self.span_half_width >= self.span_center
        {
            return Err(Error::InvalidParam(format!(
                "span_half_width must satisfy 0 <= half_width < center, got center {:?}, half_width {:?}",
                self.span_center, self.span_half_width
            )));
        }
        if !self.bin_width.is_finite() || self.bin_width <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "bin_width must be > 0, got {:?}",
                self.bin_width
            )));
        }
        Ok(())
    }

    /// The inclusive elapsed-time bounds windows must satisfy.
    pub fn span(&self) -> Result<SpanBounds> {
        self.validate()?;
        SpanBounds::new(
            self.span_center - self.span_half_width,
            self.span_center + self.span_half_width,
        )
    }

    /// Same configuration with a different seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    fn bin_key(&self, w: &SubTrajectory) -> i64 {
        let anchor = match self.bin_anchor {
            BinAnchor::Start => w.t_start(),
            BinAnchor::Midpoint => 0.5 * (w.t_start() + w.t_end()),
        };
        (anchor / self.bin_width).floor() as i64
    }
}

/// Every contiguous index window `[i..=j]`, `j > i`, whose elapsed time lies
/// inside the configured span (both ends inclusive). Returns an empty list
/// for series too short or too sparse to contain one.
pub fn enumerate_windows(
    traj: &SeriesTrajectory,
    cfg: &PartitionConfig,
) -> Result<Vec<SubTrajectory>> {
    let span = cfg.span()?;
    let n = traj.len();
    let mut windows = Vec::new();
    for i in 0..n {
        let t_i = traj.observations[i].t;
        for j in (i + 1)..n {
            let elapsed = traj.observations[j].t - t_i;
            if elapsed > span.max {
                // Times are strictly increasing, so no later j qualifies.
                break;
            }
            if elapsed >= span.min {
                windows.push(SubTrajectory::from_window(traj, i, j, &span)?);
            }
        }
    }
    Ok(windows)
}

/// Draws at most one window per sampling bin, uniformly at random within
/// each bin. All windows must come from one series; the RNG stream is a
/// pure function of `(cfg.rng_seed, series_id)`, so the choice is
/// deterministic and independent of any other series.
pub fn sample_windows(
    windows: &[SubTrajectory],
    cfg: &PartitionConfig,
) -> Result<Vec<SubTrajectory>> {
    cfg.validate()?;
    let Some(first) = windows.first() else {
        return Ok(Vec::new());
    };
    if let Some(w) = windows.iter().find(|w| w.series_id != first.series_id) {
        return Err(Error::InvalidParam(format!(
            "sample_windows got windows from series {} and {}",
            first.series_id, w.series_id
        )));
    }

    let mut bins: std::collections::BTreeMap<i64, Vec<usize>> = std::collections::BTreeMap::new();
    for (idx, w) in windows.iter().enumerate() {
        bins.entry(cfg.bin_key(w)).or_default().push(idx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
        cfg.rng_seed,
        &format!("partition:{}", first.series_id),
    ));
    let mut chosen: Vec<SubTrajectory> = bins
        .values()
        .map(|members| windows[members[rng.random_range(0..members.len())]].clone())
        .collect();
    chosen.sort_by(|a, b| {
        (a.t_start(), a.start_index, a.end_index())
            .partial_cmp(&(b.t_start(), b.start_index, b.end_index()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(chosen)
}

/// Enumerates and samples every series, returning the concatenation ordered
/// by `(series_id, t_start, start_index)`. Series are processed in parallel;
/// per-series RNG derivation makes the result independent of scheduling.
pub fn partition_dataset(
    trajectories: &[SeriesTrajectory],
    cfg: &PartitionConfig,
) -> Result<Vec<SubTrajectory>> {
    cfg.validate()?;
    let per_series: Vec<Vec<SubTrajectory>> = trajectories
        .par_iter()
        .map(|traj| sample_windows(&enumerate_windows(traj, cfg)?, cfg))
        .collect::<Result<_>>()?;
    let mut all: Vec<SubTrajectory> = per_series.into_iter().flatten().collect();
    all.sort_by(|a, b| {
        (&a.series_id, a.t_start(), a.start_index)
            .partial_cmp(&(&b.series_id, b.t_start(), b.start_index))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureObservation;
    use proptest::prelude::*;

    fn series(id: &str, times: &[f64]) -> SeriesTrajectory {
        SeriesTrajectory::new(
            id,
            "p",
            times
                .iter()
                .map(|&t| FeatureObservation {
                    series_id: id.into(),
                    patient_id: "p".into(),
                    t,
                    features: vec![t, -t],
                })
                .collect(),
        )
    }

    fn index_pairs(windows: &[SubTrajectory]) -> Vec<(usize, usize)> {
        windows.iter().map(|w| (w.start_index, w.end_index())).collect()
    }

    #[test]
    fn enumerate_single_qualifying_pair() {
        let cfg = PartitionConfig::default();
        let w = enumerate_windows(&series("s", &[0.0, 1.0]), &cfg).unwrap();
        assert_eq!(index_pairs(&w), vec![(0, 1)]);
    }

    #[test]
    fn enumerate_below_span_floor_is_empty() {
        let cfg = PartitionConfig::default();
        let w = enumerate_windows(&series("s", &[0.0, 0.2]), &cfg).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn enumerate_three_window_example() {
        // Elapsed times: {0..1} = 0.6, {0..2} = 1.2, {1..2} = 0.6.
        let cfg = PartitionConfig::default();
        let w = enumerate_windows(&series("s", &[0.0, 0.6, 1.2]), &cfg).unwrap();
        assert_eq!(index_pairs(&w), vec![(0, 1), (0, 2), (1, 2)]);
        // Windows keep intermediary observations.
        assert_eq!(w[1].len(), 3);
    }

    #[test]
    fn enumerate_rejects_invalid_config() {
        let cfg = PartitionConfig {
            span_half_width: 1.5,
            ..PartitionConfig::default()
        };
        assert!(enumerate_windows(&series("s", &[0.0, 1.0]), &cfg).is_err());
    }

    /// Windows starting at given times, each spanning exactly 1 year.
    fn windows_at(starts: &[f64]) -> Vec<SubTrajectory> {
        let cfg = PartitionConfig::default();
        starts
            .iter()
            .enumerate()
            .flat_map(|(i, &t0)| {
                let tr = series("s", &[t0, t0 + 1.0]);
                let mut w = enumerate_windows(&tr, &cfg).unwrap();
                for sub in &mut w {
                    // Distinguish same-bin windows by their source index.
                    sub.start_index = 2 * i;
                }
                w
            })
            .collect()
    }

    #[test]
    fn sample_keeps_one_per_bin() {
        let cfg = PartitionConfig::default();
        // Starts 0.0 and 0.1 share bin 0: exactly one survives.
        let w = windows_at(&[0.0, 0.1]);
        let s = sample_windows(&w, &cfg).unwrap();
        assert_eq!(s.len(), 1);
        // Starts 0.0 and 0.7 occupy bins 0 and 1: both survive.
        let w = windows_at(&[0.0, 0.7]);
        let s = sample_windows(&w, &cfg).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn sample_three_window_example() {
        // The enumeration example: starts 0.0, 0.0, 0.6 → bins {0, 0, 1} →
        // one of the two bin-0 windows plus the bin-1 window.
        let cfg = PartitionConfig::default();
        let w = enumerate_windows(&series("s", &[0.0, 0.6, 1.2]), &cfg).unwrap();
        let s = sample_windows(&w, &cfg).unwrap();
        assert_eq!(s.len(), 2);
        let pairs = index_pairs(&s);
        assert!(pairs.contains(&(1, 2)));
        assert!(pairs.contains(&(0, 1)) || pairs.contains(&(0, 2)));
    }

    #[test]
    fn sample_rejects_mixed_series() {
        let cfg = PartitionConfig::default();
        let mut w = enumerate_windows(&series("a", &[0.0, 1.0]), &cfg).unwrap();
        w.extend(enumerate_windows(&series("b", &[0.0, 1.0]), &cfg).unwrap());
        assert!(sample_windows(&w, &cfg).is_err());
    }

    #[test]
    fn sample_determinism_and_seed_sensitivity() {
        let tr = series("s", &[0.0, 0.1, 0.3, 0.55, 0.8, 1.0, 1.3, 1.6, 2.0]);
        let cfg = PartitionConfig::default();
        let w = enumerate_windows(&tr, &cfg).unwrap();
        let a = sample_windows(&w, &cfg).unwrap();
        let b = sample_windows(&w, &cfg).unwrap();
        assert_eq!(a, b);
        // A different seed keeps the same bins but may pick other members.
        let other = sample_windows(&w, &cfg.with_seed(99)).unwrap();
        assert_eq!(a.len(), other.len());
    }

    #[test]
    fn bins_align_to_epoch_not_series_start() {
        // Starts 0.4 and 0.6 are closer than bin_width apart but fall into
        // epoch-aligned bins 0 and 1, so both survive.
        let cfg = PartitionConfig::default();
        let w = windows_at(&[0.4, 0.6]);
        let s = sample_windows(&w, &cfg).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn midpoint_anchor_changes_binning() {
        // Window A [0.4, 0.95]: start bin 0, midpoint 0.675 → bin 1.
        // Window B [0.3, 1.8]:  start bin 0, midpoint 1.05  → bin 2.
        // Start-anchoring collapses them to one survivor; midpoint keeps both.
        let cfg = PartitionConfig::default();
        let mid = PartitionConfig {
            bin_anchor: BinAnchor::Midpoint,
            ..cfg
        };
        let tr = series("s", &[0.3, 0.4, 0.95, 1.8]);
        let all = enumerate_windows(&tr, &cfg).unwrap();
        let pair: Vec<_> = all
            .iter()
            .filter(|w| {
                (w.start_index, w.end_index()) == (1, 2) || (w.start_index, w.end_index()) == (0, 3)
            })
            .cloned()
            .collect();
        assert_eq!(pair.len(), 2);
        assert_eq!(sample_windows(&pair, &cfg).unwrap().len(), 1);
        assert_eq!(sample_windows(&pair, &mid).unwrap().len(), 2);
    }

    #[test]
    fn partition_dataset_orders_and_caps_per_series() {
        let trajs = vec![
            series("b", &[0.0, 0.4, 0.9, 1.4, 1.9, 2.4, 2.9, 3.4]),
            series("a", &[0.1, 0.7, 1.2, 1.8, 2.3]),
        ];
        let cfg = PartitionConfig::default();
        let subs = partition_dataset(&trajs, &cfg).unwrap();
        // Global ordering by (series_id, t_start).
        let keys: Vec<(String, f64)> = subs
            .iter()
            .map(|s| (s.series_id.clone(), s.t_start()))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(keys, sorted);
        // Per-series cap: at most ceil(duration / bin_width) + 1.
        for tr in &trajs {
            let cap = (tr.duration() / cfg.bin_width).ceil() as usize + 1;
            let count = subs.iter().filter(|s| s.series_id == tr.series_id).count();
            assert!(count <= cap, "series {} emitted {count} > cap {cap}", tr.series_id);
            assert!(count > 0);
        }
        // Span invariant on every output.
        let span = cfg.span().unwrap();
        assert!(subs.iter().all(|s| span.contains(s.elapsed())));
        // Determinism.
        assert_eq!(subs, partition_dataset(&trajs, &cfg).unwrap());
    }

    #[test]
    fn adding_a_series_does_not_change_anothers_sampling() {
        let a = series("a", &[0.0, 0.3, 0.8, 1.1, 1.7, 2.2, 2.8]);
        let b = series("b", &[0.0, 0.5, 1.0, 1.5, 2.0]);
        let cfg = PartitionConfig::default();
        let alone: Vec<_> = partition_dataset(&[a.clone()], &cfg).unwrap();
        let together: Vec<_> = partition_dataset(&[a, b], &cfg)
            .unwrap()
            .into_iter()
            .filter(|s| s.series_id == "a")
            .collect();
        assert_eq!(alone, together);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn enumerate_matches_brute_force(
            gaps in proptest::collection::vec(0.05..0.9f64, 1..11),
            t0 in 0.0..3.0f64,
        ) {
            let mut times = vec![t0];
            for g in &gaps {
                times.push(times.last().unwrap() + g);
            }
            let tr = series("s", &times);
            let cfg = PartitionConfig::default();
            let span = cfg.span().unwrap();
            let fast = index_pairs(&enumerate_windows(&tr, &cfg).unwrap());
            let mut brute = Vec::new();
            for i in 0..times.len() {
                for j in 0..times.len() {
                    if j > i && span.contains(times[j] - times[i]) {
                        brute.push((i, j));
                    }
                }
            }
            prop_assert_eq!(fast, brute);
        }

        #[test]
        fn sampling_respects_one_per_bin(
            gaps in proptest::collection::vec(0.05..0.9f64, 2..11),
            seed in 0u64..1000,
        ) {
            let mut times = vec![0.0];
            for g in &gaps {
                times.push(times.last().unwrap() + g);
            }
            let tr = series("s", &times);
            let cfg = PartitionConfig::default().with_seed(seed);
            let windows = enumerate_windows(&tr, &cfg).unwrap();
            let sampled = sample_windows(&windows, &cfg).unwrap();
            // One window per bin, and each sampled window is a real window.
            let mut bins: Vec<i64> = sampled.iter().map(|w| cfg.bin_key(w)).collect();
            bins.sort_unstable();
            let before = bins.len();
            bins.dedup();
            prop_assert_eq!(before, bins.len(), "two sampled windows share a bin");
            let all = index_pairs(&windows);
            for w in &sampled {
                prop_assert!(all.contains(&(w.start_index, w.end_index())));
            }
            // Every non-empty bin is represented.
            let mut expected: Vec<i64> = windows.iter().map(|w| cfg.bin_key(w)).collect();
            expected.sort_unstable();
            expected.dedup();
            prop_assert_eq!(bins, expected);
        }
    }
}
