//! The two normalization regimes.
//!
//! Training matrices are min-max scaled per device over their full 151-day
//! span, so every feature ends in [0, 1] with the failure-day trend intact.
//! Live data has no failure value to scale by, so the online path estimates
//! a per-feature ceiling from the past two months of the same device:
//! either the historical maximum (Strategy 1) or the 75th-percentile order
//! statistic (Strategy 2), then scales the simulation matrix against it.
//! Values above the ceiling are deliberately left unclamped.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ingest::{DeviceHistory, FeatureMatrix};
use crate::NUM_FEATURES;

/// Days of history the online threshold is estimated from ("two months").
pub const STATS_WINDOW_DAYS: u32 = 60;

/// Minimum complete days inside the stats window.
pub const MIN_STATS_DAYS: usize = 10;

/// Default quantile for Strategy 2.
pub const DEFAULT_QUANTILE: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormStrategy {
    /// Per-device min-max over the training matrix.
    TrainMinMax,
    /// Online: threshold at the historical maximum.
    Strategy1Max,
    /// Online: threshold at the quantile order statistic.
    Strategy2Q75,
}

impl NormStrategy {
    pub fn tag(&self) -> &'static str {
        match self {
            NormStrategy::TrainMinMax => "train-minmax",
            NormStrategy::Strategy1Max => "strategy1-max",
            NormStrategy::Strategy2Q75 => "strategy2-q75",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "train-minmax" => Ok(NormStrategy::TrainMinMax),
            "strategy1-max" => Ok(NormStrategy::Strategy1Max),
            "strategy2-q75" => Ok(NormStrategy::Strategy2Q75),
            other => Err(Error::format(format!("unknown strategy tag {other:?}"))),
        }
    }
}

/// Per-feature summary of one device's recent history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalStats {
    pub serial: String,
    pub hist_min: [f64; NUM_FEATURES],
    pub hist_max: [f64; NUM_FEATURES],
    /// Quantile order statistic per feature (q75 under the default).
    pub q75: [f64; NUM_FEATURES],
    pub quantile: f64,
    pub window_days: u32,
    /// Complete days the stats were computed from.
    pub sample_days: usize,
    pub source_range: (NaiveDate, NaiveDate),
}

/// A normalized days-by-features matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix {
    pub serial: String,
    pub anchor: NaiveDate,
    pub rows: Vec<[f64; NUM_FEATURES]>,
    pub strategy: NormStrategy,
    /// True where the denominator collapsed; that column is all zeros.
    pub degenerate: [bool; NUM_FEATURES],
    /// Carried from the source matrix so windowing can weigh imputation.
    pub row_valid: Vec<bool>,
}

/// Min-max normalize a training matrix per feature over all of its rows.
/// A constant column becomes all zeros with its degenerate flag set.
pub fn minmax_train(matrix: &FeatureMatrix) -> Result<NormalizedMatrix> {
    if matrix.rows.is_empty() {
        return Err(Error::argument("empty matrix"));
    }
    if matrix
        .rows
        .iter()
        .any(|row| row.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::argument("matrix contains non-finite values"));
    }

    let mut min = [f64::INFINITY; NUM_FEATURES];
    let mut max = [f64::NEG_INFINITY; NUM_FEATURES];
    for row in &matrix.rows {
        for (f, &v) in row.iter().enumerate() {
            min[f] = min[f].min(v);
            max[f] = max[f].max(v);
        }
    }

    let mut degenerate = [false; NUM_FEATURES];
    let mut denom = [0.0; NUM_FEATURES];
    for f in 0..NUM_FEATURES {
        if max[f] > min[f] {
            denom[f] = max[f] - min[f];
        } else {
            degenerate[f] = true;
        }
    }

    let rows = matrix
        .rows
        .iter()
        .map(|row| {
            let mut out = [0.0; NUM_FEATURES];
            for f in 0..NUM_FEATURES {
                if !degenerate[f] {
                    out[f] = (row[f] - min[f]) / denom[f];
                }
            }
            out
        })
        .collect();

    Ok(NormalizedMatrix {
        serial: matrix.serial.clone(),
        anchor: matrix.anchor,
        rows,
        strategy: NormStrategy::TrainMinMax,
        degenerate,
        row_valid: matrix.row_valid.clone(),
    })
}

/// Order statistic at 1-based index ceil(q * n) of an ascending sample:
/// the smallest element with at least a q-fraction of the sample at or
/// below it. No interpolation.
fn quantile_order_statistic(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

/// Per-feature min, max and 75th-percentile over the complete days in
/// `(as_of - window_days, as_of]`.
pub fn historical_stats(
    history: &DeviceHistory,
    as_of: NaiveDate,
    window_days: u32,
) -> Result<HistoricalStats> {
    historical_stats_q(history, as_of, window_days, DEFAULT_QUANTILE)
}

/// As [`historical_stats`] with a caller-chosen quantile (cross-model
/// transfer exposes this as a tuning flag).
pub fn historical_stats_q(
    history: &DeviceHistory,
    as_of: NaiveDate,
    window_days: u32,
    quantile: f64,
) -> Result<HistoricalStats> {
    if !(0.0..=1.0).contains(&quantile) || quantile == 0.0 {
        return Err(Error::argument(format!("quantile {quantile} not in (0, 1]")));
    }
    let start = as_of - chrono::Days::new(window_days as u64);
    let samples: Vec<&crate::ingest::SmartRecord> = history
        .valid_days()
        .filter(|r| r.date > start && r.date <= as_of)
        .collect();
    if samples.len() < MIN_STATS_DAYS {
        return Err(Error::InsufficientHistory {
            serial: history.serial.clone(),
            valid_days: samples.len(),
            needed: MIN_STATS_DAYS,
        });
    }

    let mut hist_min = [0.0; NUM_FEATURES];
    let mut hist_max = [0.0; NUM_FEATURES];
    let mut q75 = [0.0; NUM_FEATURES];
    for f in 0..NUM_FEATURES {
        let mut column: Vec<f64> = samples.iter().map(|r| r.features[f].unwrap()).collect();
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        hist_min[f] = column[0];
        hist_max[f] = column[column.len() - 1];
        q75[f] = quantile_order_statistic(&column, quantile);
    }

    Ok(HistoricalStats {
        serial: history.serial.clone(),
        hist_min,
        hist_max,
        q75,
        quantile,
        window_days,
        sample_days: samples.len(),
        source_range: (samples[0].date, samples[samples.len() - 1].date),
    })
}

/// Normalize a simulation matrix against per-feature thresholds from
/// `stats`: `(x - min_col) / (threshold - min_col)` where `min_col` is the
/// minimum of the matrix being normalized. Values above the threshold stay
/// above 1. A threshold at or below the column minimum flags the feature
/// degenerate (all zeros) rather than failing the device.
pub fn normalize_online(
    matrix: &FeatureMatrix,
    stats: &HistoricalStats,
    strategy: NormStrategy,
) -> Result<NormalizedMatrix> {
    if matrix.rows.is_empty() {
        return Err(Error::argument("empty matrix"));
    }
    let thresholds = match strategy {
        NormStrategy::Strategy1Max => &stats.hist_max,
        NormStrategy::Strategy2Q75 => &stats.q75,
        NormStrategy::TrainMinMax => {
            return Err(Error::argument(
                "normalize_online requires an online strategy",
            ))
        }
    };

    let mut min = [f64::INFINITY; NUM_FEATURES];
    for row in &matrix.rows {
        for (f, &v) in row.iter().enumerate() {
            min[f] = min[f].min(v);
        }
    }

    let mut degenerate = [false; NUM_FEATURES];
    let mut denom = [0.0; NUM_FEATURES];
    for f in 0..NUM_FEATURES {
        if thresholds[f] > min[f] {
            denom[f] = thresholds[f] - min[f];
        } else {
            degenerate[f] = true;
        }
    }

    let rows = matrix
        .rows
        .iter()
        .map(|row| {
            let mut out = [0.0; NUM_FEATURES];
            for f in 0..NUM_FEATURES {
                if !degenerate[f] {
                    out[f] = (row[f] - min[f]) / denom[f];
                }
            }
            out
        })
        .collect();

    Ok(NormalizedMatrix {
        serial: matrix.serial.clone(),
        anchor: matrix.anchor,
        rows,
        strategy,
        degenerate,
        row_valid: matrix.row_valid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 6, 1).unwrap()
    }

    fn matrix_from_column(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix {
            serial: "Z1".into(),
            anchor: date(),
            rows: values.iter().map(|&v| [v; NUM_FEATURES]).collect(),
            row_valid: vec![true; values.len()],
        }
    }

    fn stats_with(q75: f64, max: f64) -> HistoricalStats {
        HistoricalStats {
            serial: "Z1".into(),
            hist_min: [0.0; NUM_FEATURES],
            hist_max: [max; NUM_FEATURES],
            q75: [q75; NUM_FEATURES],
            quantile: DEFAULT_QUANTILE,
            window_days: STATS_WINDOW_DAYS,
            sample_days: 60,
            source_range: (date(), date()),
        }
    }

    #[test]
    fn minmax_definition() {
        let norm = minmax_train(&matrix_from_column(&[0.0, 5.0, 10.0])).unwrap();
        let col: Vec<f64> = norm.rows.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![0.0, 0.5, 1.0]);
        assert!(!norm.degenerate[0]);
    }

    #[test]
    fn minmax_constant_column_flags_degenerate() {
        let norm = minmax_train(&matrix_from_column(&[7.0, 7.0, 7.0])).unwrap();
        assert!(norm.rows.iter().all(|r| r[0] == 0.0));
        assert!(norm.degenerate.iter().all(|&d| d));
    }

    #[test]
    fn minmax_attains_both_bounds_and_is_idempotent() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
            let m = matrix_from_column(&values);
            let once = minmax_train(&m).unwrap();
            for f in 0..NUM_FEATURES {
                if !once.degenerate[f] {
                    let col: Vec<f64> = once.rows.iter().map(|r| r[f]).collect();
                    assert!(col.iter().any(|&v| v == 0.0));
                    assert!(col.iter().any(|&v| v == 1.0));
                    assert!(col.iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
            }
            let as_matrix = FeatureMatrix {
                serial: m.serial.clone(),
                anchor: m.anchor,
                rows: once.rows.clone(),
                row_valid: m.row_valid.clone(),
            };
            let twice = minmax_train(&as_matrix).unwrap();
            assert_eq!(once.rows, twice.rows);
        }
    }

    #[test]
    fn minmax_rejects_non_finite_input() {
        let m = matrix_from_column(&[1.0, f64::NAN, 2.0]);
        assert!(minmax_train(&m).is_err());
    }

    #[test]
    fn q75_is_the_ceil_order_statistic() {
        // Hand enumeration: ceil(0.75*100) = 75 -> 75th smallest of 1..100.
        let col: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(quantile_order_statistic(&col, 0.75), 75.0);
        // ceil(0.75*4) = 3 -> third smallest.
        assert_eq!(quantile_order_statistic(&[1.0, 2.0, 3.0, 4.0], 0.75), 3.0);
        // Constant sample collapses all stats to the constant.
        assert_eq!(quantile_order_statistic(&[5.5; 4], 0.75), 5.5);
    }

    /// Smallest sample value v with at least 75% of samples <= v.
    fn q75_brute_force(values: &[f64], q: f64) -> f64 {
        let mut candidates = values.to_vec();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let need = q * values.len() as f64;
        for &v in &candidates {
            let covered = values.iter().filter(|&&x| x <= v).count();
            if covered as f64 >= need {
                return v;
            }
        }
        candidates[candidates.len() - 1]
    }

    #[test]
    fn q75_matches_brute_force_scan() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.gen_range(1..80);
            let mut values: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(
                quantile_order_statistic(&values, 0.75),
                q75_brute_force(&values, 0.75)
            );
        }
    }

    fn history_with_levels(levels: &[f64]) -> DeviceHistory {
        let start = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
        let days = levels
            .iter()
            .enumerate()
            .map(|(i, &v)| crate::ingest::SmartRecord {
                date: start + chrono::Days::new(i as u64),
                serial: "Z1".into(),
                model: "M".into(),
                capacity_bytes: 0,
                failed: false,
                features: [Some(v); NUM_FEATURES],
            })
            .collect();
        DeviceHistory {
            serial: "Z1".into(),
            model: "M".into(),
            days,
            failure_date: None,
        }
    }

    #[test]
    fn stats_over_window_pick_min_q75_max() {
        let levels: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let h = history_with_levels(&levels);
        let as_of = h.last_date().unwrap();
        let stats = historical_stats(&h, as_of, 60).unwrap();
        assert_eq!(stats.sample_days, 60);
        // Window covers levels 41..=100; ceil(0.75*60) = 45 -> level 85.
        assert_eq!(stats.hist_min[0], 41.0);
        assert_eq!(stats.hist_max[0], 100.0);
        assert_eq!(stats.q75[0], 85.0);
        assert!(stats.hist_min[0] <= stats.q75[0] && stats.q75[0] <= stats.hist_max[0]);
    }

    #[test]
    fn stats_insufficient_history_names_device() {
        let h = history_with_levels(&[1.0; 5]);
        let err = historical_stats(&h, h.last_date().unwrap(), 60).unwrap_err();
        match err {
            Error::InsufficientHistory { serial, valid_days, needed } => {
                assert_eq!(serial, "Z1");
                assert_eq!(valid_days, 5);
                assert_eq!(needed, MIN_STATS_DAYS);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn online_normalization_direct_formula() {
        let m = matrix_from_column(&[10.0, 20.0, 30.0]);
        let norm = normalize_online(&m, &stats_with(40.0, 60.0), NormStrategy::Strategy2Q75)
            .unwrap();
        let col: Vec<f64> = norm.rows.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![0.0, 1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn strategy1_larger_denominator_dominates() {
        let m = matrix_from_column(&[10.0, 20.0, 30.0]);
        let stats = stats_with(40.0, 60.0);
        let s1 = normalize_online(&m, &stats, NormStrategy::Strategy1Max).unwrap();
        let s2 = normalize_online(&m, &stats, NormStrategy::Strategy2Q75).unwrap();
        let c1: Vec<f64> = s1.rows.iter().map(|r| r[0]).collect();
        assert_eq!(c1, vec![0.0, 0.2, 0.4]);
        for (r1, r2) in s1.rows.iter().zip(&s2.rows) {
            for f in 0..NUM_FEATURES {
                assert!(r1[f] <= r2[f]);
            }
        }
    }

    #[test]
    fn values_above_threshold_are_not_clamped() {
        let m = matrix_from_column(&[10.0, 20.0, 50.0]);
        let norm = normalize_online(&m, &stats_with(40.0, 60.0), NormStrategy::Strategy2Q75)
            .unwrap();
        let col: Vec<f64> = norm.rows.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![0.0, 1.0 / 3.0, 4.0 / 3.0]);
    }

    #[test]
    fn threshold_at_or_below_min_flags_degenerate() {
        let m = matrix_from_column(&[10.0, 20.0, 30.0]);
        let norm = normalize_online(&m, &stats_with(10.0, 10.0), NormStrategy::Strategy2Q75)
            .unwrap();
        assert!(norm.degenerate[0]);
        assert!(norm.rows.iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn dominance_and_order_preservation_on_random_windows() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for _ in 0..100 {
            let n = rng.gen_range(2..30);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
            let m = matrix_from_column(&values);
            let q75 = rng.gen_range(1.0..150.0);
            let max = q75 + rng.gen_range(0.0..50.0);
            let stats = stats_with(q75, max);
            let s1 = normalize_online(&m, &stats, NormStrategy::Strategy1Max).unwrap();
            let s2 = normalize_online(&m, &stats, NormStrategy::Strategy2Q75).unwrap();
            for (r1, r2) in s1.rows.iter().zip(&s2.rows) {
                assert!(r1[0] <= r2[0] + 1e-15);
            }
            // Rank preservation for the non-degenerate case.
            if !s2.degenerate[0] {
                for i in 0..n {
                    for j in 0..n {
                        if values[i] < values[j] {
                            assert!(s2.rows[i][0] < s2.rows[j][0]);
                        }
                    }
                }
            }
        }
    }
}
