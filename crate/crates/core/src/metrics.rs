//! Evaluation metrics for ordinal grading.
//!
//! All metrics work on a [`PredictionSet`]: true grades plus one score row
//! per item. Hard predictions are the row argmax, ties going to the lower
//! grade.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cost_matrices::ConfusionCounts;
use crate::losses::SIMPLEX_TOLERANCE;
use crate::math;
use crate::{Error, Result};

/// True grades with per-class scores, row-major `N x C`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    num_classes: usize,
    labels: Vec<usize>,
    scores: Vec<f64>,
}

impl PredictionSet {
    /// Rows must be probability vectors.
    pub fn new(num_classes: usize, labels: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let set = Self::from_raw_scores(num_classes, labels, probs)?;
        for (i, row) in set.scores.chunks(num_classes).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) || (s - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::InvalidInput(format!("row {i} is not a probability vector")));
            }
        }
        Ok(set)
    }

    /// Rows are arbitrary finite scores; only their order matters to the metrics.
    pub fn from_raw_scores(num_classes: usize, labels: Vec<usize>, scores: Vec<f64>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidDimension { what: "class count", expected: 2, got: num_classes });
        }
        if scores.len() != labels.len() * num_classes {
            return Err(Error::InvalidDimension {
                what: "score entries",
                expected: labels.len() * num_classes,
                got: scores.len(),
            });
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidInput(format!("label {y} outside [0, {num_classes})")));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        Ok(PredictionSet { num_classes, labels, scores })
    }

    /// Score rows that put all mass on the given grades.
    pub fn from_hard_predictions(num_classes: usize, labels: Vec<usize>, predicted: &[usize]) -> Result<Self> {
        if predicted.len() != labels.len() {
            return Err(Error::InvalidDimension { what: "predictions", expected: labels.len(), got: predicted.len() });
        }
        let mut scores = vec![0.0; labels.len() * num_classes];
        for (i, &p) in predicted.iter().enumerate() {
            if p >= num_classes {
                return Err(Error::InvalidInput(format!("prediction {p} outside [0, {num_classes})")));
            }
            scores[i * num_classes + p] = 1.0;
        }
        Self::new(num_classes, labels, scores)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn scores(&self, row: usize) -> &[f64] {
        &self.scores[row * self.num_classes..(row + 1) * self.num_classes]
    }

    /// Argmax of a row, lowest grade on ties.
    pub fn predicted(&self, row: usize) -> usize {
        argmax(self.scores(row))
    }

    pub fn predictions(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.predicted(i)).collect()
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> PredictionSet {
        let mut labels = Vec::with_capacity(indices.len());
        let mut scores = Vec::with_capacity(indices.len() * self.num_classes);
        for &i in indices {
            labels.push(self.labels[i]);
            scores.extend_from_slice(self.scores(i));
        }
        PredictionSet { num_classes: self.num_classes, labels, scores }
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Rows are true grades, columns predicted grades.
pub fn confusion_matrix(preds: &PredictionSet) -> Result<ConfusionCounts> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("prediction set"));
    }
    let mut m = ConfusionCounts::zeros(preds.num_classes())?;
    for (i, &y) in preds.labels().iter().enumerate() {
        m.increment(y, preds.predicted(i));
    }
    Ok(m)
}

/// Quadratic-weighted Cohen's kappa with weights `(i - j)^2 / (C - 1)^2`.
///
/// Expected counts are the outer product of the marginals divided by the
/// total. Returns 1 when both weighted sums vanish (all items in one class,
/// all predicted as that class).
pub fn quadratic_weighted_kappa(m: &ConfusionCounts) -> Result<f64> {
    let total = m.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix"));
    }
    let n = m.num_classes();
    let norm = ((n - 1) * (n - 1)) as f64;
    let rows: Vec<f64> = (0..n).map(|i| m.row_sum(i) as f64).collect();
    let cols: Vec<f64> = (0..n).map(|j| m.col_sum(j) as f64).collect();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let d = i as f64 - j as f64;
            let w = d * d / norm;
            observed += w * m.get(i, j) as f64;
            expected += w * r * c;
        }
    }
    expected /= total as f64;
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - observed / expected)
}

/// Average class accuracy: mean per-class recall over the grades present in
/// the data.
pub fn aca(m: &ConfusionCounts) -> Result<f64> {
    if m.total() == 0 {
        return Err(Error::EmptyInput("confusion matrix"));
    }
    let (sum, present) = (0..m.num_classes())
        .filter_map(|i| {
            let s = m.row_sum(i);
            (s > 0).then(|| m.get(i, i) as f64 / s as f64)
        })
        .fold((0.0, 0usize), |(a, k), r| (a + r, k + 1));
    Ok(sum / present as f64)
}

/// Kendall tau-b from a contingency table of two integer-valued sequences.
///
/// Pairs are counted exactly in integers, then
/// `(concordant - discordant) / sqrt((n0 - ties_x) (n0 - ties_y))`.
pub fn kendall_tau_b_from_table(m: &ConfusionCounts) -> Result<f64> {
    let n = m.num_classes();
    let total = m.total() as u128;
    if total < 2 {
        return Err(Error::UndefinedStatistic("Kendall tau needs at least 2 items".into()));
    }
    let mut concordant: u128 = 0;
    let mut discordant: u128 = 0;
    for i in 0..n {
        for j in 0..n {
            let c = m.get(i, j) as u128;
            if c == 0 {
                continue;
            }
            for k in i + 1..n {
                for l in 0..n {
                    let o = m.get(k, l) as u128;
                    match l.cmp(&j) {
                        Ordering::Greater => concordant += c * o,
                        Ordering::Less => discordant += c * o,
                        Ordering::Equal => {}
                    }
                }
            }
        }
    }
    let pairs = total * (total - 1) / 2;
    let ties = |sums: &mut dyn Iterator<Item = u64>| -> u128 {
        sums.map(|s| {
            let s = s as u128;
            s * s.saturating_sub(1) / 2
        })
        .sum()
    };
    let ties_x = ties(&mut (0..n).map(|i| m.row_sum(i)));
    let ties_y = ties(&mut (0..n).map(|j| m.col_sum(j)));
    if ties_x == pairs || ties_y == pairs {
        return Err(Error::UndefinedStatistic("Kendall tau is undefined for a constant sequence".into()));
    }
    let denom = math::sqrt((pairs - ties_x) as f64) * math::sqrt((pairs - ties_y) as f64);
    Ok((concordant as f64 - discordant as f64) / denom)
}

/// Kendall tau-b between true grades and argmax predictions.
pub fn kendall_tau(preds: &PredictionSet) -> Result<f64> {
    if preds.len() < 2 {
        return Err(Error::UndefinedStatistic("Kendall tau needs at least 2 items".into()));
    }
    kendall_tau_b_from_table(&confusion_matrix(preds)?)
}

/// Hand–Till multi-class AUC with the class pairs it had to skip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mauc {
    pub value: f64,
    pub skipped_pairs: Vec<(usize, usize)>,
}

/// `A(i | j)`: probability that a class-`i` item scores higher on column `i`
/// than a class-`j` item, ties counting one half. Computed from mid-ranks.
fn pairwise_auc(preds: &PredictionSet, i: usize, j: usize) -> f64 {
    let mut items: Vec<(f64, bool)> = preds
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &y)| y == i || y == j)
        .map(|(r, &y)| (preds.scores(r)[i], y == i))
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the rank sum of class i, so tie mid-ranks stay integral
    let mut rank_sum_x2: u128 = 0;
    let mut n_i: u128 = 0;
    let mut start = 0;
    while start < items.len() {
        let mut end = start + 1;
        while end < items.len() && items[end].0 == items[start].0 {
            end += 1;
        }
        // 1-based ranks start+1..=end share the mid-rank (start + 1 + end) / 2
        let mid_x2 = (start + 1 + end) as u128;
        let in_i = items[start..end].iter().filter(|t| t.1).count() as u128;
        rank_sum_x2 += mid_x2 * in_i;
        n_i += in_i;
        start = end;
    }
    let n_j = items.len() as u128 - n_i;
    let wins_x2 = rank_sum_x2 - n_i * (n_i + 1);
    wins_x2 as f64 / (2 * n_i * n_j) as f64
}

/// Hand–Till mean AUC over all pairs of classes present in the data.
pub fn hand_till_mauc(preds: &PredictionSet) -> Result<Mauc> {
    let c = preds.num_classes();
    let mut present = vec![false; c];
    for &y in preds.labels() {
        present[y] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::UndefinedStatistic("mAUC needs at least 2 classes present".into()));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped_pairs = Vec::new();
    for i in 0..c {
        for j in i + 1..c {
            if !(present[i] && present[j]) {
                skipped_pairs.push((i, j));
                continue;
            }
            sum += (pairwise_auc(preds, i, j) + pairwise_auc(preds, j, i)) / 2.0;
            used += 1;
        }
    }
    Ok(Mauc { value: sum / used as f64, skipped_pairs })
}

/// The full metric suite on one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub quad_kappa: f64,
    /// `None` when fewer than two classes are present.
    pub mauc: Option<f64>,
    pub aca: f64,
    /// `None` when either the grades or the predictions are constant.
    pub kendall_tau: Option<f64>,
    pub confusion: ConfusionCounts,
    /// Names of metrics that were undefined on this data.
    pub undefined: Vec<String>,
    /// True grades absent from the data, left out of the ACA mean.
    pub aca_excluded_classes: Vec<usize>,
    pub mauc_skipped_pairs: Vec<(usize, usize)>,
}

impl MetricsReport {
    pub fn compute(preds: &PredictionSet) -> Result<Self> {
        let confusion = confusion_matrix(preds)?;
        let mut undefined = Vec::new();
        let (mauc, mauc_skipped_pairs) = match hand_till_mauc(preds) {
            Ok(m) => (Some(m.value), m.skipped_pairs),
            Err(Error::UndefinedStatistic(_)) => {
                undefined.push("mauc".into());
                (None, Vec::new())
            }
            Err(e) => return Err(e),
        };
        let kendall_tau = match kendall_tau(preds) {
            Ok(t) => Some(t),
            Err(Error::UndefinedStatistic(_)) => {
                undefined.push("kendall_tau".into());
                None
            }
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            quad_kappa: quadratic_weighted_kappa(&confusion)?,
            mauc,
            aca: aca(&confusion)?,
            kendall_tau,
            aca_excluded_classes: confusion.absent_classes(),
            confusion,
            undefined,
            mauc_skipped_pairs,
        })
    }
}

/// Metric selector for model comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    QuadKappa,
    Mauc,
    Aca,
    KendallTau,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::QuadKappa, Metric::Mauc, Metric::Aca, Metric::KendallTau];

    pub fn name(self) -> &'static str {
        match self {
            Metric::QuadKappa => "quad_kappa",
            Metric::Mauc => "mauc",
            Metric::Aca => "aca",
            Metric::KendallTau => "kendall_tau",
        }
    }

    pub fn evaluate(self, preds: &PredictionSet) -> Result<f64> {
        match self {
            Metric::QuadKappa => quadratic_weighted_kappa(&confusion_matrix(preds)?),
            Metric::Mauc => hand_till_mauc(preds).map(|m| m.value),
            Metric::Aca => aca(&confusion_matrix(preds)?),
            Metric::KendallTau => kendall_tau(preds),
        }
    }
}

impl core::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown metric {s}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let labels: Vec<usize> = (0..10).map(|i| i % 5).collect();
        let set = PredictionSet::from_hard_predictions(5, labels.clone(), &labels).unwrap();
        let m = confusion_matrix(&set).unwrap();
        assert_eq!(m.total(), 10);
        assert!((0..5).all(|i| m.get(i, i) == 2));

        let set = PredictionSet::from_hard_predictions(5, vec![3], &[1]).unwrap();
        let m = confusion_matrix(&set).unwrap();
        assert_eq!(m.get(3, 1), 1);
        assert_eq!(m.total(), 1);

        let set = PredictionSet::new(3, vec![0], vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(confusion_matrix(&set).unwrap().get(0, 0), 1);

        let empty = PredictionSet::new(3, vec![], vec![]).unwrap();
        assert_eq!(confusion_matrix(&empty), Err(Error::EmptyInput("prediction set")));
    }

    #[test]
    fn kappa_examples() {
        let ident = ConfusionCounts::from_rows(&[[3, 0, 0], [0, 5, 0], [0, 0, 1]]).unwrap();
        assert_eq!(quadratic_weighted_kappa(&ident).unwrap(), 1.0);
        let flat = ConfusionCounts::from_row_major(5, vec![4; 25]).unwrap();
        assert!(quadratic_weighted_kappa(&flat).unwrap().abs() < 1e-15);
        let single = ConfusionCounts::from_rows(&[[7, 0], [0, 0]]).unwrap();
        assert_eq!(quadratic_weighted_kappa(&single).unwrap(), 1.0);
        let zero = ConfusionCounts::zeros(3).unwrap();
        assert!(matches!(quadratic_weighted_kappa(&zero), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn kappa_decreases_with_error_distance() {
        // move one correct item of grade 0 to columns 1, 2, 3, 4
        let mut prev = f64::INFINITY;
        for col in 0..5 {
            let mut rows = [[0u64; 5]; 5];
            for (i, r) in rows.iter_mut().enumerate() {
                r[i] = 10;
            }
            rows[0][0] -= 1;
            rows[0][col] += 1;
            let k = quadratic_weighted_kappa(&ConfusionCounts::from_rows(&rows).unwrap()).unwrap();
            assert!(k < prev, "col {col}: {k} !< {prev}");
            prev = k;
        }
    }

    #[test]
    fn aca_examples() {
        let ident = ConfusionCounts::from_rows(&[[2, 0], [0, 9]]).unwrap();
        assert_eq!(aca(&ident).unwrap(), 1.0);
        let half = ConfusionCounts::from_rows(&[[1, 1], [1, 1]]).unwrap();
        assert_eq!(aca(&half).unwrap(), 0.5);
        // absent grade 1 is skipped
        let m = ConfusionCounts::from_rows(&[[1, 1, 0], [0, 0, 0], [0, 0, 4]]).unwrap();
        assert_eq!(aca(&m).unwrap(), 0.75);
        assert_eq!(m.absent_classes(), vec![1]);
    }

    #[test]
    fn aca_of_printed_nuls_ast_matrix() {
        // row percentages with diagonal 97, 24, 50, 52, 50
        let rows = [
            [97, 2, 1, 0, 0],
            [68, 24, 8, 0, 0],
            [26, 13, 50, 10, 1],
            [4, 2, 39, 52, 3],
            [7, 1, 18, 24, 50],
        ];
        let v = aca(&ConfusionCounts::from_rows(&rows).unwrap()).unwrap() * 100.0;
        assert!((v - 54.57).abs() < 0.5, "{v}");
    }

    #[test]
    fn kendall_examples() {
        let y = vec![0, 1, 2, 3, 4, 2];
        let same = PredictionSet::from_hard_predictions(5, y.clone(), &y).unwrap();
        assert!((kendall_tau(&same).unwrap() - 1.0).abs() < 1e-15);
        let y = vec![0, 1, 2, 3, 4];
        let rev: Vec<usize> = y.iter().map(|v| 4 - v).collect();
        let set = PredictionSet::from_hard_predictions(5, y, &rev).unwrap();
        assert!((kendall_tau(&set).unwrap() + 1.0).abs() < 1e-15);

        let constant = PredictionSet::from_hard_predictions(3, vec![0, 1, 2], &[1, 1, 1]).unwrap();
        assert!(matches!(kendall_tau(&constant), Err(Error::UndefinedStatistic(_))));
        let one = PredictionSet::from_hard_predictions(3, vec![0], &[1]).unwrap();
        assert!(matches!(kendall_tau(&one), Err(Error::UndefinedStatistic(_))));
    }

    #[test]
    fn mauc_examples() {
        let labels = vec![0, 1, 2, 2, 1, 0];
        let perfect = PredictionSet::from_hard_predictions(3, labels.clone(), &labels).unwrap();
        assert_eq!(hand_till_mauc(&perfect).unwrap().value, 1.0);
        let flat = PredictionSet::new(3, labels, vec![1.0 / 3.0; 18]).unwrap();
        assert_eq!(hand_till_mauc(&flat).unwrap().value, 0.5);

        let partial = PredictionSet::from_hard_predictions(4, vec![0, 3, 0], &[0, 3, 1]).unwrap();
        let m = hand_till_mauc(&partial).unwrap();
        assert_eq!(m.skipped_pairs, vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]);
        // A(0|3) = (1 + 1/2) / 2, A(3|0) = 1
        assert_eq!(m.value, 0.875);

        let single = PredictionSet::from_hard_predictions(3, vec![1, 1], &[0, 1]).unwrap();
        assert!(matches!(hand_till_mauc(&single), Err(Error::UndefinedStatistic(_))));
    }

    #[test]
    fn report_marks_undefined() {
        let set = PredictionSet::from_hard_predictions(3, vec![0, 1, 2], &[0, 0, 0]).unwrap();
        let r = MetricsReport::compute(&set).unwrap();
        assert_eq!(r.kendall_tau, None);
        assert_eq!(r.undefined, vec![String::from("kendall_tau")]);
        let json = serde_json::to_value(&r).unwrap();
        for key in ["quad_kappa", "mauc", "aca", "kendall_tau", "confusion"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(json["kendall_tau"].is_null());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("auc".parse::<Metric>().is_err());
    }
}
