//! Classification losses, the cost-sensitive penalty and their gradients.
//!
//! Every loss here depends on the logits only through `p = softmax(z)`, so
//! gradients are reported with respect to the logits and sum to zero. Log
//! arguments are clamped to `[PROB_FLOOR, 1]`; the gradients are the exact
//! derivatives of the clamped functions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cost_matrices::CostMatrix;
use crate::math;
use crate::{Error, Result};

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on the unit sum of a [`ProbVector`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// An ordinal grade `0 <= value < C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GradeLabel(usize);

impl GradeLabel {
    pub fn new(value: usize, num_classes: usize) -> Result<Self> {
        if value >= num_classes {
            return Err(Error::InvalidInput(format!("grade {value} outside [0, {num_classes})")));
        }
        Ok(GradeLabel(value))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Checks entries in `[0, 1]` summing to one within [`SIMPLEX_TOLERANCE`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("probability vector"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("probability {v} outside [0, 1]")));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidInput(format!("probabilities sum to {s}")));
        }
        Ok(ProbVector(values))
    }

    /// One-hot vector at `y`.
    pub fn one_hot(y: GradeLabel, num_classes: usize) -> Result<Self> {
        let mut v = vec![0.0; num_classes];
        *v.get_mut(y.get()).ok_or(Error::InvalidDimension {
            what: "one-hot grade",
            expected: num_classes,
            got: y.get(),
        })? = 1.0;
        Ok(ProbVector(v))
    }

    pub fn uniform(num_classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

/// Loss value with its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

impl LossValue {
    fn with_gradient(value: f64, gradient: Vec<f64>) -> Self {
        LossValue { value, gradient: Some(gradient) }
    }
}

fn clamped_ln(p: f64) -> (f64, bool) {
    if p >= PROB_FLOOR {
        (math::ln(p.min(1.0)), true)
    } else {
        (math::ln(PROB_FLOOR), false)
    }
}

fn check_label(y: GradeLabel, num_classes: usize) -> Result<()> {
    if y.get() >= num_classes {
        return Err(Error::InvalidDimension { what: "grade label", expected: num_classes, got: y.get() });
    }
    Ok(())
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("logits"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidInput("non-finite logit".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| math::exp(z - max)).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    Ok(ProbVector(out))
}

/// `-sum_i t_i ln p_i`.
///
/// The gradient is `d/dz_k = -t_k [p_k unclamped] + p_k sum_i t_i [p_i unclamped]`,
/// which reduces to `p - t` away from the clamp.
pub fn cross_entropy(p: &ProbVector, target: &ProbVector) -> Result<LossValue> {
    if p.len() != target.len() {
        return Err(Error::InvalidDimension { what: "target", expected: p.len(), got: target.len() });
    }
    let mut value = 0.0;
    let mut active_mass = 0.0;
    let mut grad = vec![0.0; p.len()];
    for (k, (&pk, &tk)) in p.as_slice().iter().zip(target.as_slice()).enumerate() {
        let (l, active) = clamped_ln(pk);
        value -= tk * l;
        if active {
            active_mass += tk;
            grad[k] = -tk;
        }
    }
    for (g, &pk) in grad.iter_mut().zip(p.as_slice()) {
        *g += pk * active_mass;
    }
    Ok(LossValue::with_gradient(value.max(0.0), grad))
}

/// Focal loss for a hard label, `-alpha (1 - p_y)^gamma ln p_y`.
pub fn focal_loss(p: &ProbVector, y: GradeLabel, alpha: f64, gamma: f64) -> Result<LossValue> {
    check_focal_params(alpha, gamma)?;
    check_label(y, p.len())?;
    let py = p.as_slice()[y.get()];
    let q = 1.0 - py;
    let (l, active) = clamped_ln(py);
    let weight = math::powf(q, gamma);
    let value = -alpha * weight * l;
    // d value / d p_y, multiplied by p_y; then d p_y / d z_k = p_y (delta_yk - p_k).
    let focus_term = if gamma == 0.0 || q <= 0.0 {
        0.0
    } else {
        alpha * gamma * math::powf(q, gamma - 1.0) * py * l
    };
    let ce_term = if active { alpha * weight } else { 0.0 };
    let coef = focus_term - ce_term;
    let grad = p
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &pk)| coef * (if k == y.get() { 1.0 } else { 0.0 } - pk))
        .collect();
    Ok(LossValue::with_gradient(value.max(0.0), grad))
}

fn check_focal_params(alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidHyperparameter { name: "alpha", value: alpha });
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidHyperparameter { name: "gamma", value: gamma });
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidHyperparameter { name: "sigma", value: sigma });
    }
    Ok(())
}

/// Gaussian-smoothed label: `exp(-(i - y)^2 / (2 sigma^2))` over the `C`
/// grades, renormalized (truncated at the ends of the label space).
pub fn gaussian_smooth_label(y: GradeLabel, sigma: f64, num_classes: usize) -> Result<ProbVector> {
    check_sigma(sigma)?;
    check_label(y, num_classes)?;
    let mut w: Vec<f64> = (0..num_classes)
        .map(|i| {
            let d = i as f64 - y.get() as f64;
            math::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= z);
    Ok(ProbVector(w))
}

/// Cross-entropy against the Gaussian-smoothed label.
pub fn nuls_loss(p: &ProbVector, y: GradeLabel, sigma: f64) -> Result<LossValue> {
    let target = gaussian_smooth_label(y, sigma, p.len())?;
    cross_entropy(p, &target)
}

/// `<M(y, .), p>`, with gradient `p_k (M(y, k) - <M(y, .), p>)`.
pub fn cs_penalty(p: &ProbVector, y: GradeLabel, costs: &CostMatrix) -> Result<LossValue> {
    if costs.num_classes() != p.len() {
        return Err(Error::InvalidDimension {
            what: "cost matrix",
            expected: p.len(),
            got: costs.num_classes(),
        });
    }
    check_label(y, p.len())?;
    let row = costs.row(y.get());
    let value: f64 = row.iter().zip(p.as_slice()).map(|(m, p)| m * p).sum();
    let grad = row.iter().zip(p.as_slice()).map(|(m, pk)| pk * (m - value)).collect();
    Ok(LossValue::with_gradient(value, grad))
}

/// Base classification loss, with its hyperparameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLoss {
    #[default]
    CrossEntropy,
    Focal { alpha: f64, gamma: f64 },
    Nuls { sigma: f64 },
}

impl BaseLoss {
    pub const DEFAULT_FOCAL_ALPHA: f64 = 1.0;
    pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;
    pub const DEFAULT_NULS_SIGMA: f64 = 1.0;

    pub fn focal() -> Self {
        BaseLoss::Focal { alpha: Self::DEFAULT_FOCAL_ALPHA, gamma: Self::DEFAULT_FOCAL_GAMMA }
    }

    pub fn nuls() -> Self {
        BaseLoss::Nuls { sigma: Self::DEFAULT_NULS_SIGMA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseLoss::CrossEntropy => "ce",
            BaseLoss::Focal { .. } => "focal",
            BaseLoss::Nuls { .. } => "nuls",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseLoss::CrossEntropy => Ok(()),
            BaseLoss::Focal { alpha, gamma } => check_focal_params(alpha, gamma),
            BaseLoss::Nuls { sigma } => check_sigma(sigma),
        }
    }

    /// Loss of probabilities `p` against grade `y`.
    pub fn evaluate(&self, p: &ProbVector, y: GradeLabel) -> Result<LossValue> {
        match *self {
            BaseLoss::CrossEntropy => cross_entropy(p, &ProbVector::one_hot(y, p.len())?),
            BaseLoss::Focal { alpha, gamma } => focal_loss(p, y, alpha, gamma),
            BaseLoss::Nuls { sigma } => nuls_loss(p, y, sigma),
        }
    }
}

/// `base(softmax(z), y) + lambda * <M(y, .), softmax(z)>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    base: BaseLoss,
    lambda: f64,
    costs: Option<CostMatrix>,
}

impl CompositeLoss {
    /// `costs` may be `None` only when `lambda == 0`.
    pub fn new(base: BaseLoss, lambda: f64, costs: Option<CostMatrix>) -> Result<Self> {
        base.validate()?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidHyperparameter { name: "lambda", value: lambda });
        }
        if lambda > 0.0 && costs.is_none() {
            return Err(Error::InvalidInput("a positive lambda needs a cost matrix".into()));
        }
        Ok(CompositeLoss { base, lambda, costs })
    }

    pub fn base(&self) -> BaseLoss {
        self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn costs(&self) -> Option<&CostMatrix> {
        self.costs.as_ref()
    }

    /// Value and logit gradient. With `lambda == 0` the penalty is skipped
    /// entirely, so the result is bit-identical to the base loss.
    pub fn evaluate(&self, logits: &[f64], y: GradeLabel) -> Result<LossValue> {
        let p = softmax(logits)?;
        let base = self.base.evaluate(&p, y)?;
        let costs = match (&self.costs, self.lambda > 0.0) {
            (Some(costs), true) => costs,
            _ => return Ok(base),
        };
        let pen = cs_penalty(&p, y, costs)?;
        let mut grad = base.gradient.unwrap_or_else(|| vec![0.0; p.len()]);
        for (g, pg) in grad.iter_mut().zip(pen.gradient.iter().flatten()) {
            *g += self.lambda * pg;
        }
        Ok(LossValue::with_gradient(base.value + self.lambda * pen.value, grad))
    }
}

/// Cost-sensitive regularized loss of the logits `z` for grade `y`.
pub fn cs_regularized_loss(
    base: BaseLoss,
    logits: &[f64],
    y: GradeLabel,
    lambda: f64,
    costs: &CostMatrix,
) -> Result<LossValue> {
    CompositeLoss::new(base, lambda, Some(costs.clone()))?.evaluate(logits, y)
}

/// Gradient of [`cs_regularized_loss`] with respect to the logits.
pub fn loss_gradient(
    base: BaseLoss,
    logits: &[f64],
    y: GradeLabel,
    lambda: f64,
    costs: &CostMatrix,
) -> Result<Vec<f64>> {
    Ok(cs_regularized_loss(base, logits, y, lambda, costs)?.gradient.unwrap_or_default())
}
