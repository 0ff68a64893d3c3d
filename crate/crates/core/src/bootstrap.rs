//! Stratified, paired bootstrap comparison of two models.
//!
//! Each resample draws, for every grade, as many items as the grade has in
//! the original data, with replacement, from the items of that grade. The
//! same index set is applied to both models so per-resample differences are
//! paired.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::metrics::{Metric, PredictionSet};
use crate::rng;
use crate::{Error, Result};

/// Resampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { n_resamples: 1000, alpha: 0.05, seed: 0 }
    }
}

/// Outcome of a paired bootstrap test on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub metric_name: String,
    /// Resamples on which the metric was defined for both models; equals `diffs.len()`.
    pub n_resamples: usize,
    /// Resamples dropped because the metric was undefined.
    pub n_dropped: usize,
    /// `metric(A) - metric(B)` on the full data.
    pub observed_diff: f64,
    pub diffs: Vec<f64>,
    pub p_value: f64,
    /// 2.5 and 97.5 percentiles of `diffs`.
    pub ci95: (f64, f64),
    pub alpha: f64,
    pub significant: bool,
}

/// Indices of one stratified resample, drawn from `rng`.
///
/// Position `k` of the output holds an item with the same grade as item `k`.
pub fn stratified_resample_with(labels: &[usize], rng: &mut rng::Rng) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    Ok(labels
        .iter()
        .map(|&y| {
            let pool = &by_class[y];
            pool[rng.random_range(0..pool.len())]
        })
        .collect())
}

/// Stratified resample driven by `seed`.
pub fn stratified_resample(labels: &[usize], seed: u64) -> Result<Vec<usize>> {
    stratified_resample_with(labels, &mut rng::seeded(seed))
}

/// Seed of resample `k`.
pub fn resample_seed(seed: u64, k: usize) -> u64 {
    seed ^ k as u64
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = crate::math::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Paired, stratified bootstrap test of `metric(a) - metric(b)`.
///
/// Two-sided p-value: `2 min(#{d <= 0}, #{d >= 0}) / n`, clipped to 1.
pub fn paired_bootstrap_test(
    a: &PredictionSet,
    b: &PredictionSet,
    metric: Metric,
    config: &BootstrapConfig,
) -> Result<BootstrapResult> {
    paired_bootstrap_test_by(a, b, metric.name(), |p| metric.evaluate(p), config)
}

/// [`paired_bootstrap_test`] for an arbitrary statistic. A statistic that
/// returns [`Error::UndefinedStatistic`] on a resample drops that resample.
pub fn paired_bootstrap_test_by<F>(
    a: &PredictionSet,
    b: &PredictionSet,
    metric_name: &str,
    metric: F,
    config: &BootstrapConfig,
) -> Result<BootstrapResult>
where
    F: Fn(&PredictionSet) -> Result<f64>,
{
    if a.len() != b.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "prediction sets are misaligned: {} vs {} rows",
            a.len(),
            b.len()
        )));
    }
    if a.labels() != b.labels() {
        return Err(Error::InvalidInput("prediction sets disagree on the true grades".into()));
    }
    if a.num_classes() != b.num_classes() {
        return Err(Error::InvalidDimension { what: "class count", expected: a.num_classes(), got: b.num_classes() });
    }
    if config.n_resamples == 0 {
        return Err(Error::InvalidHyperparameter { name: "n_resamples", value: 0.0 });
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidHyperparameter { name: "alpha", value: config.alpha });
    }
    let observed_diff = metric(a)? - metric(b)?;

    let mut diffs = Vec::with_capacity(config.n_resamples);
    let mut n_dropped = 0;
    for k in 0..config.n_resamples {
        let idx = stratified_resample(a.labels(), resample_seed(config.seed, k))?;
        match (metric(&a.select(&idx)), metric(&b.select(&idx))) {
            (Ok(ma), Ok(mb)) => diffs.push(ma - mb),
            (Err(Error::UndefinedStatistic(_)), _) | (_, Err(Error::UndefinedStatistic(_))) => n_dropped += 1,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    if 2 * n_dropped > config.n_resamples {
        return Err(Error::UnstableStatistic {
            metric: metric_name.into(),
            dropped: n_dropped,
            total: config.n_resamples,
        });
    }

    let n = diffs.len();
    let le = diffs.iter().filter(|d| **d <= 0.0).count();
    let ge = diffs.iter().filter(|d| **d >= 0.0).count();
    let p_value = (2.0 * le.min(ge) as f64 / n as f64).min(1.0);
    let mut sorted = diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let ci95 = (percentile(&sorted, 0.025), percentile(&sorted, 0.975));
    Ok(BootstrapResult {
        metric_name: metric_name.into(),
        n_resamples: n,
        n_dropped,
        observed_diff,
        diffs,
        p_value,
        ci95,
        alpha: config.alpha,
        significant: p_value < config.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(labels: &[usize], idx: &[usize]) -> Vec<usize> {
        let c = labels.iter().max().unwrap() + 1;
        let mut out = vec![0; c];
        for &i in idx {
            out[labels[i]] += 1;
        }
        out
    }

    #[test]
    fn resample_small_example() {
        let labels = [0, 0, 1];
        for seed in 0..200 {
            let idx = stratified_resample(&labels, seed).unwrap();
            assert_eq!(idx.len(), 3);
            assert_eq!(idx.iter().filter(|&&i| i < 2).count(), 2);
            assert_eq!(idx.iter().filter(|&&i| i == 2).count(), 1);
        }
    }

    #[test]
    fn resample_single_class() {
        let labels = [3usize; 9];
        let idx = stratified_resample(&labels, 5).unwrap();
        assert_eq!(idx.len(), 9);
        assert!(idx.iter().all(|&i| i < 9));
    }

    #[test]
    fn resample_is_deterministic_and_stratified() {
        let labels: Vec<usize> = (0..97).map(|i| (i * 7 + i / 3) % 5).collect();
        let a = stratified_resample(&labels, 11).unwrap();
        assert_eq!(a, stratified_resample(&labels, 11).unwrap());
        assert_ne!(a, stratified_resample(&labels, 12).unwrap());
        assert_eq!(counts(&labels, &a), counts(&labels, &(0..97).collect::<Vec<_>>()));
        assert_eq!(stratified_resample(&[], 1), Err(Error::EmptyInput("labels")));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 0.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert!((percentile(&v, 0.025) - 0.1).abs() < 1e-15);
        assert_eq!(percentile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn identical_models() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let preds: Vec<usize> = (0..60).map(|i| (i / 2) % 3).collect();
        let a = PredictionSet::from_hard_predictions(3, labels, &preds).unwrap();
        let cfg = BootstrapConfig { n_resamples: 200, alpha: 0.05, seed: 3 };
        for m in Metric::ALL {
            let r = paired_bootstrap_test(&a, &a, m, &cfg).unwrap();
            assert!(r.diffs.iter().all(|d| *d == 0.0));
            assert_eq!(r.p_value, 1.0);
            assert!(!r.significant);
            assert_eq!(r.observed_diff, 0.0);
        }
    }

    #[test]
    fn misaligned_inputs() {
        let a = PredictionSet::from_hard_predictions(3, vec![0, 1, 2], &[0, 1, 2]).unwrap();
        let b = PredictionSet::from_hard_predictions(3, vec![0, 1], &[0, 1]).unwrap();
        let cfg = BootstrapConfig::default();
        assert!(matches!(paired_bootstrap_test(&a, &b, Metric::Aca, &cfg), Err(Error::InvalidInput(_))));
        let c = PredictionSet::from_hard_predictions(3, vec![0, 2, 1], &[0, 1, 2]).unwrap();
        assert!(matches!(paired_bootstrap_test(&a, &c, Metric::Aca, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn undefined_resamples_are_dropped() {
        use core::cell::Cell;
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let a = PredictionSet::from_hard_predictions(2, labels.clone(), &labels).unwrap();
        let cfg = BootstrapConfig { n_resamples: 30, alpha: 0.05, seed: 1 };
        // Full-data evaluations are calls 0 and 1; resample k uses calls 2k+2, 2k+3.
        let calls = Cell::new(0usize);
        let every_third = |_: &PredictionSet| {
            let c = calls.get();
            calls.set(c + 1);
            if c >= 2 && (c / 2).is_multiple_of(3) { Err(Error::UndefinedStatistic("x".into())) } else { Ok(1.0) }
        };
        let r = paired_bootstrap_test_by(&a, &a, "stat", every_third, &cfg).unwrap();
        assert_eq!(r.n_dropped, 10);
        assert_eq!(r.n_resamples, 20);
        assert_eq!(r.diffs.len(), r.n_resamples);

        let calls = Cell::new(0usize);
        let mostly = |_: &PredictionSet| {
            let c = calls.get();
            calls.set(c + 1);
            if c >= 2 && !(c / 2).is_multiple_of(3) { Err(Error::UndefinedStatistic("x".into())) } else { Ok(1.0) }
        };
        assert!(matches!(
            paired_bootstrap_test_by(&a, &a, "stat", mostly, &cfg),
            Err(Error::UnstableStatistic { dropped: 20, total: 30, .. })
        ));
    }

    #[test]
    fn undefined_on_full_data_is_an_error() {
        let a = PredictionSet::from_hard_predictions(2, vec![0, 1], &[0, 1]).unwrap();
        let b = PredictionSet::from_hard_predictions(2, vec![0, 1], &[0, 0]).unwrap();
        let cfg = BootstrapConfig { n_resamples: 50, alpha: 0.05, seed: 1 };
        assert!(matches!(paired_bootstrap_test(&a, &b, Metric::KendallTau, &cfg), Err(Error::UndefinedStatistic(_))));
    }
}
