//! Feature scoring: correlation against RUL and Fisher score, plus the
//! top-k selection used to pick the SMART counters the model consumes.

use crate::error::{Error, Result};

/// Scores for one candidate feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScore {
    pub feature_index: usize,
    pub correlation: f64,
    /// True when the correlation came from a constant series.
    pub degenerate: bool,
    pub fisher: f64,
    /// log10(fisher / max fisher); for plotting only.
    pub fisher_log_normalized: f64,
}

/// Labeled samples for Fisher scoring: `samples[i]` is one feature row,
/// `labels[i]` its integer class.
#[derive(Debug, Clone)]
pub struct FisherInput {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<i64>,
}

/// Result of top-k selection.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// Selected feature indices, by |correlation| descending; ties broken
    /// toward the lower index.
    pub indices: Vec<usize>,
    /// Selected indices that are not also in the Fisher top-k.
    pub fisher_disagreement: Vec<usize>,
}

/// Product-moment correlation. A constant series yields `(0.0, true)`
/// instead of an error so full candidate scans never abort.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<(f64, bool)> {
    if x.len() != y.len() {
        return Err(Error::argument(format!(
            "series length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::argument("need at least 2 points for correlation"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0), false))
}

/// Fisher score per feature: class-weighted inter-class variance over
/// class-weighted intra-class (population) variance.
///
/// A zero denominator yields +inf when the numerator is positive and 0.0
/// when it is zero.
pub fn fisher_scores(input: &FisherInput) -> Result<Vec<f64>> {
    let n_samples = input.samples.len();
    if n_samples == 0 {
        return Err(Error::argument("no samples"));
    }
    if input.labels.len() != n_samples {
        return Err(Error::argument("labels/samples length mismatch"));
    }
    let n_features = input.samples[0].len();
    if input.samples.iter().any(|s| s.len() != n_features) {
        return Err(Error::argument("ragged sample matrix"));
    }

    let mut classes: Vec<i64> = input.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::argument(
            "fisher score needs at least 2 classes for inter-class variance",
        ));
    }

    let mut scores = Vec::with_capacity(n_features);
    for f in 0..n_features {
        let overall_mean =
            input.samples.iter().map(|s| s[f]).sum::<f64>() / n_samples as f64;

        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for &class in &classes {
            let values: Vec<f64> = input
                .samples
                .iter()
                .zip(&input.labels)
                .filter(|(_, &l)| l == class)
                .map(|(s, _)| s[f])
                .collect();
            let d_k = values.len() as f64;
            let mean_k = values.iter().sum::<f64>() / d_k;
            let var_k = values.iter().map(|v| (v - mean_k).powi(2)).sum::<f64>() / d_k;
            numerator += d_k * (mean_k - overall_mean).powi(2);
            denominator += d_k * var_k;
        }

        scores.push(if denominator > 0.0 {
            numerator / denominator
        } else if numerator > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    Ok(scores)
}

/// Attach log-normalized Fisher values to a score table (base 10; only the
/// plot consumes this).
pub fn log_normalize_fisher(scores: &mut [FeatureScore]) {
    let max = scores
        .iter()
        .map(|s| s.fisher)
        .filter(|f| f.is_finite())
        .fold(0.0f64, f64::max);
    for s in scores.iter_mut() {
        s.fisher_log_normalized = if max > 0.0 && s.fisher > 0.0 && s.fisher.is_finite() {
            (s.fisher / max).log10()
        } else if s.fisher.is_infinite() {
            0.0
        } else {
            f64::NEG_INFINITY
        };
    }
}

/// Select the top-k features by |correlation|, flagging any selected index
/// that the Fisher ranking would not also place in its own top-k.
pub fn rank_and_select(scores: &[FeatureScore], k: usize) -> Result<FeatureSet> {
    if k == 0 {
        return Err(Error::argument("k must be positive"));
    }
    if k > scores.len() {
        return Err(Error::argument(format!(
            "k = {k} exceeds {} candidates",
            scores.len()
        )));
    }

    let mut by_corr: Vec<&FeatureScore> = scores.iter().collect();
    by_corr.sort_by(|a, b| {
        b.correlation
            .abs()
            .partial_cmp(&a.correlation.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.feature_index.cmp(&b.feature_index))
    });
    let indices: Vec<usize> = by_corr[..k].iter().map(|s| s.feature_index).collect();

    let mut by_fisher: Vec<&FeatureScore> = scores.iter().collect();
    by_fisher.sort_by(|a, b| {
        b.fisher
            .partial_cmp(&a.fisher)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.feature_index.cmp(&b.feature_index))
    });
    let fisher_top: Vec<usize> = by_fisher[..k].iter().map(|s| s.feature_index).collect();

    let fisher_disagreement = indices
        .iter()
        .copied()
        .filter(|i| !fisher_top.contains(i))
        .collect();

    Ok(FeatureSet {
        indices,
        fisher_disagreement,
    })
}
