//! Brute-force reference implementations shared by the integration tests.
//! Each one follows the textbook definition directly and avoids the
//! shortcuts taken by the library.

#![allow(dead_code)]

use ordcost_core::cost_matrices::{ConfusionCounts, CostMatrix};
use ordcost_core::losses::{softmax, BaseLoss, CompositeLoss, GradeLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central differences of `f` at `z`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, z: &[f64], h: f64) -> Vec<f64> {
    let mut zp = z.to_vec();
    (0..z.len())
        .map(|k| {
            let orig = zp[k];
            zp[k] = orig + h;
            let up = f(&zp);
            zp[k] = orig - h;
            let down = f(&zp);
            zp[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm, floored at `1e-8`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = norm(a.iter().zip(b).map(|(x, y)| x - y));
    diff / norm(a.iter().copied()).max(norm(b.iter().copied())).max(1e-8)
}

pub struct GradCase {
    pub base: BaseLoss,
    pub lambda: f64,
    pub costs: CostMatrix,
    pub logits: Vec<f64>,
    pub y: usize,
}

impl GradCase {
    pub fn loss(&self) -> CompositeLoss {
        CompositeLoss::new(self.base, self.lambda, Some(self.costs.clone())).unwrap()
    }

    /// (relative error against central differences, sum of the analytic gradient)
    pub fn check(&self, h: f64) -> (f64, f64) {
        let loss = self.loss();
        let y = GradeLabel::new(self.y, self.logits.len()).unwrap();
        let analytic = loss.evaluate(&self.logits, y).unwrap().gradient.unwrap();
        let numeric = numeric_gradient(|z| loss.evaluate(z, y).unwrap().value, &self.logits, h);
        (relative_error(&analytic, &numeric), analytic.iter().sum())
    }
}

/// Random symmetric cost matrix with zero diagonal and entries in `[0, 4)`.
pub fn random_costs(r: &mut ChaCha8Rng, c: usize) -> CostMatrix {
    let mut m = vec![0.0; c * c];
    for i in 0..c {
        for j in i + 1..c {
            let v = r.random::<f64>() * 4.0;
            m[i * c + j] = v;
            m[j * c + i] = v;
        }
    }
    CostMatrix::from_row_major(c, m).unwrap()
}

pub fn random_base(r: &mut ChaCha8Rng) -> BaseLoss {
    match r.random_range(0..3) {
        0 => BaseLoss::CrossEntropy,
        1 => BaseLoss::Focal { alpha: r.random_range(0.25..2.0), gamma: r.random_range(0.0..4.0) },
        _ => BaseLoss::Nuls { sigma: r.random_range(0.3..2.0) },
    }
}

pub fn random_grad_case(r: &mut ChaCha8Rng) -> GradCase {
    let c = r.random_range(2..=7);
    let lambdas = [0.0, 0.1, 1.0, 10.0];
    GradCase {
        base: random_base(r),
        lambda: lambdas[r.random_range(0..lambdas.len())],
        costs: random_costs(r, c),
        logits: (0..c).map(|_| r.random_range(-3.0..3.0)).collect(),
        y: r.random_range(0..c),
    }
}

pub fn random_probs(r: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let z: Vec<f64> = (0..c).map(|_| r.random_range(-4.0..4.0)).collect();
    softmax(&z).unwrap().into_inner()
}

/// Labels, hard predictions and score rows for a random instance with
/// deliberate score ties.
pub struct MetricCase {
    pub num_classes: usize,
    pub labels: Vec<usize>,
    pub predicted: Vec<usize>,
    pub scores: Vec<f64>,
}

pub fn random_metric_case(r: &mut ChaCha8Rng) -> MetricCase {
    let c = r.random_range(2..=6);
    let n = r.random_range(2..=200);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let predicted = labels
        .iter()
        .map(|&y| if r.random_bool(0.6) { y } else { r.random_range(0..c) })
        .collect();
    // quantized scores so ties occur
    let scores = (0..n * c).map(|_| r.random_range(0..8) as f64 / 8.0).collect();
    MetricCase { num_classes: c, labels, predicted, scores }
}

/// Kappa from its item-level definition: observed weighted disagreement
/// over the weighted disagreement of every (truth, prediction) pairing.
pub fn kappa_oracle(truth: &[usize], pred: &[usize], c: usize) -> f64 {
    let w = |i: usize, j: usize| {
        let d = i as f64 - j as f64;
        d * d / ((c - 1) * (c - 1)) as f64
    };
    let n = truth.len() as f64;
    let observed: f64 = truth.iter().zip(pred).map(|(&t, &p)| w(t, p)).sum();
    let mut expected = 0.0;
    for &t in truth {
        for &p in pred {
            expected += w(t, p);
        }
    }
    expected /= n;
    if expected == 0.0 {
        1.0
    } else {
        1.0 - observed / expected
    }
}

/// Mean per-class recall over the classes that occur in `truth`.
pub fn aca_oracle(truth: &[usize], pred: &[usize], c: usize) -> f64 {
    let mut recalls = Vec::new();
    for k in 0..c {
        let members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == k).collect();
        if !members.is_empty() {
            let hit = members.iter().filter(|&&i| pred[i] == k).count();
            recalls.push(hit as f64 / members.len() as f64);
        }
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// Kendall tau-b by enumerating all item pairs. `None` when undefined.
pub fn kendall_oracle(x: &[usize], y: &[usize]) -> Option<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] as i64 - x[j] as i64).signum();
            let dy = (y[i] as i64 - y[j] as i64).signum();
            if dx == 0 {
                tie_x += 1;
            }
            if dy == 0 {
                tie_y += 1;
            }
            match dx * dy {
                1 => conc += 1,
                -1 => disc += 1,
                _ => {}
            }
        }
    }
    let n0 = (n * n.saturating_sub(1) / 2) as i64;
    let denom = ((n0 - tie_x) as f64 * (n0 - tie_y) as f64).sqrt();
    (denom > 0.0).then(|| (conc - disc) as f64 / denom)
}

/// Hand–Till mAUC by comparing every cross-class item pair.
pub fn mauc_oracle(labels: &[usize], scores: &[f64], c: usize) -> Option<f64> {
    let present: Vec<usize> = (0..c).filter(|k| labels.contains(k)).collect();
    if present.len() < 2 {
        return None;
    }
    let a = |i: usize, j: usize| {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for p in (0..labels.len()).filter(|&p| labels[p] == i) {
            for q in (0..labels.len()).filter(|&q| labels[q] == j) {
                let (sp, sq) = (scores[p * c + i], scores[q * c + i]);
                wins += if sp > sq { 1.0 } else if sp == sq { 0.5 } else { 0.0 };
                pairs += 1.0;
            }
        }
        wins / pairs
    };
    let mut total = 0.0;
    let mut count = 0.0;
    for (ii, &i) in present.iter().enumerate() {
        for &j in &present[ii + 1..] {
            total += (a(i, j) + a(j, i)) / 2.0;
            count += 1.0;
        }
    }
    Some(total / count)
}

pub fn confusion(truth: &[usize], pred: &[usize], c: usize) -> ConfusionCounts {
    let mut m = ConfusionCounts::zeros(c).unwrap();
    for (&t, &p) in truth.iter().zip(pred) {
        m.increment(t, p);
    }
    m
}

/// Total variation distance between empirical frequencies and `p`.
pub fn total_variation(counts: &[usize], p: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    counts.iter().zip(p).map(|(&k, &q)| (k as f64 / n as f64 - q).abs()).sum::<f64>() / 2.0
}
