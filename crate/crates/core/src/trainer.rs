//! Minibatch SGD with plateau decay, early stopping and minority
//! oversampling, plus the lambda sweep used for model selection.
//!
//! Validation quadratic-weighted kappa is computed after every epoch. When
//! it has not improved for `plateau_patience` epochs the learning rate is
//! divided by `plateau_factor`; after `early_stop_patience` epochs without
//! improvement training stops. The parameters of the best validation epoch
//! are returned.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cost_matrices::{ast_cost_matrix, quadratic_cost_matrix, ConfusionCounts, CostMatrix};
use crate::data::Dataset;
use crate::losses::{BaseLoss, CompositeLoss, GradeLabel};
use crate::metrics::{confusion_matrix, quadratic_weighted_kappa};
use crate::model::{Gradient, Model, ModelKind};
use crate::rng;
use crate::{Error, Result};

/// Where the penalty matrix comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSource {
    None,
    Quadratic,
    /// Averaged atomic sub-task matrix built from annotator confusion counts.
    Ast { confusion: ConfusionCounts },
    Custom { matrix: CostMatrix },
}

impl CostSource {
    pub fn name(&self) -> &'static str {
        match self {
            CostSource::None => "none",
            CostSource::Quadratic => "quadratic",
            CostSource::Ast { .. } => "ast",
            CostSource::Custom { .. } => "custom",
        }
    }

    /// The matrix for `num_classes` grades, if any.
    pub fn build(&self, num_classes: usize) -> Result<Option<CostMatrix>> {
        let m = match self {
            CostSource::None => return Ok(None),
            CostSource::Quadratic => quadratic_cost_matrix(num_classes)?,
            CostSource::Ast { confusion } => ast_cost_matrix(confusion)?,
            CostSource::Custom { matrix } => matrix.clone(),
        };
        if m.num_classes() != num_classes {
            return Err(Error::InvalidDimension { what: "cost matrix", expected: num_classes, got: m.num_classes() });
        }
        Ok(Some(m))
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelKind,
    /// Hidden units; 0 for the linear model.
    pub hidden_dim: usize,
    pub base_loss: BaseLoss,
    pub lambda: f64,
    pub cost_matrix: CostSource,
    pub batch_size: usize,
    pub lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    /// Validation kappa must beat the running best by more than this to
    /// reset the patience counters.
    pub min_improvement: f64,
    pub oversample: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::LinearSoftmax,
            hidden_dim: 0,
            base_loss: BaseLoss::CrossEntropy,
            lambda: 0.0,
            cost_matrix: CostSource::Quadratic,
            batch_size: 8,
            lr: 0.001,
            plateau_factor: 10.0,
            plateau_patience: 3,
            early_stop_patience: 10,
            max_epochs: 100,
            min_improvement: 1e-4,
            oversample: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.base_loss.validate()?;
        let positive = [
            ("lr", self.lr),
            ("plateau_factor", self.plateau_factor),
            ("batch_size", self.batch_size as f64),
            ("plateau_patience", self.plateau_patience as f64),
            ("early_stop_patience", self.early_stop_patience as f64),
            ("max_epochs", self.max_epochs as f64),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidHyperparameter { name, value });
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidHyperparameter { name: "lambda", value: self.lambda });
        }
        if !(self.min_improvement.is_finite() && self.min_improvement >= 0.0) {
            return Err(Error::InvalidHyperparameter { name: "min_improvement", value: self.min_improvement });
        }
        if self.lambda > 0.0 && self.cost_matrix == CostSource::None {
            return Err(Error::InvalidInput("a positive lambda needs a cost matrix".into()));
        }
        Ok(())
    }

    /// The penalty matrix actually used: none when `lambda == 0`.
    pub fn active_cost_matrix(&self, num_classes: usize) -> Result<Option<CostMatrix>> {
        if self.lambda == 0.0 {
            return Ok(None);
        }
        self.cost_matrix.build(num_classes)
    }

    pub fn loss(&self, num_classes: usize) -> Result<CompositeLoss> {
        CompositeLoss::new(self.base_loss, self.lambda, self.active_cost_matrix(num_classes)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example training loss over the epoch.
    pub train_loss: f64,
    pub val_kappa: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_kappa: f64,
}

/// Indices balancing every present class up to the majority count, drawn
/// with replacement within each class and shuffled.
pub fn oversample_indices_with(labels: &[usize], rng: &mut rng::Rng) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::with_capacity(target * num_classes);
    for pool in by_class.iter().filter(|p| !p.is_empty()) {
        out.extend((0..target).map(|_| pool[rng.random_range(0..pool.len())]));
    }
    out.shuffle(rng);
    Ok(out)
}

pub fn oversample_indices(labels: &[usize], seed: u64) -> Result<Vec<usize>> {
    oversample_indices_with(labels, &mut rng::seeded(seed))
}

const INIT_STREAM: u64 = 10;
const EPOCH_STREAM: u64 = 11;

/// Validation quadratic-weighted kappa of `model`.
pub fn validation_kappa(model: &Model, val: &Dataset) -> Result<f64> {
    quadratic_weighted_kappa(&confusion_matrix(&model.predict(val)?)?)
}

fn check_splits(config: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<()> {
    config.validate()?;
    if train.input_dim() != val.input_dim() {
        return Err(Error::InvalidDimension { what: "validation features", expected: train.input_dim(), got: val.input_dim() });
    }
    if train.num_classes() != val.num_classes() {
        return Err(Error::InvalidDimension { what: "validation classes", expected: train.num_classes(), got: val.num_classes() });
    }
    let present = val.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::InvalidInput("validation split needs at least 2 classes".into()));
    }
    Ok(())
}

/// Trains a model on `train`, selecting the epoch with the best validation
/// quadratic-weighted kappa.
pub fn train(config: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<(Model, TrainHistory)> {
    check_splits(config, train, val)?;
    let num_classes = train.num_classes();
    let loss = config.loss(num_classes)?;
    let mut model = Model::init(
        config.model,
        train.input_dim(),
        config.hidden_dim,
        num_classes,
        rng::derive_seed(config.seed, INIT_STREAM, 0),
    )?;

    let mut lr = config.lr;
    let mut records = Vec::new();
    let mut best: Option<(Model, usize, f64)> = None;
    let mut reference = f64::NEG_INFINITY;
    let mut since_improvement = 0;
    let mut since_plateau = 0;

    for epoch in 0..config.max_epochs {
        let mut epoch_rng = rng::seeded(rng::derive_seed(config.seed, EPOCH_STREAM, epoch as u64));
        let order = if config.oversample {
            oversample_indices_with(train.labels(), &mut epoch_rng)?
        } else {
            let mut o: Vec<usize> = (0..train.len()).collect();
            o.shuffle(&mut epoch_rng);
            o
        };

        let mut loss_sum = 0.0;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grad = Gradient::zeros_like(&model);
            for &i in batch {
                let x = train.row(i);
                let diverged = Error::TrainingDiverged { epoch, batch: batch_index };
                if model.forward(x)?.iter().any(|z| !z.is_finite()) {
                    return Err(diverged);
                }
                let (value, g) = model.loss_and_gradient(x, GradeLabel::new(train.labels()[i], num_classes)?, &loss)?;
                if !value.is_finite() {
                    return Err(diverged);
                }
                loss_sum += value;
                grad.add(&g);
            }
            model.step(&grad, lr / batch.len() as f64);
        }

        let val_kappa = validation_kappa(&model, val)?;
        records.push(EpochRecord { epoch, train_loss: loss_sum / order.len() as f64, val_kappa, lr });
        if best.as_ref().is_none_or(|b| val_kappa > b.2) {
            best = Some((model.clone(), epoch, val_kappa));
        }
        if val_kappa > reference + config.min_improvement {
            reference = val_kappa;
            since_improvement = 0;
            since_plateau = 0;
        } else {
            since_improvement += 1;
            since_plateau += 1;
            if since_improvement >= config.early_stop_patience {
                break;
            }
            if since_plateau >= config.plateau_patience {
                lr /= config.plateau_factor;
                since_plateau = 0;
            }
        }
    }

    let (model, best_epoch, best_val_kappa) = best.expect("max_epochs > 0");
    Ok((model, TrainHistory { epochs: records, best_epoch, best_val_kappa }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTrial {
    pub lambda: f64,
    pub val_kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// In the order trained (increasing lambda).
    pub trials: Vec<SweepTrial>,
    pub selected_lambda: f64,
    pub selected_val_kappa: f64,
}

impl SweepResult {
    /// Best trial with `lambda > 0`, if any.
    pub fn best_regularized(&self) -> Option<&SweepTrial> {
        best_trial(self.trials.iter().filter(|t| t.lambda > 0.0))
    }
}

/// Highest kappa, earliest (smallest lambda) on ties.
fn best_trial<'a>(trials: impl Iterator<Item = &'a SweepTrial>) -> Option<&'a SweepTrial> {
    trials.fold(None, |best: Option<&SweepTrial>, t| match best {
        Some(b) if t.val_kappa <= b.val_kappa => Some(b),
        _ => Some(t),
    })
}

/// Lambdas tried before escalation.
pub const INITIAL_LAMBDAS: [f64; 3] = [0.0, 0.1, 1.0];

/// Runs the sweep protocol over a scoring function: score 0, 0.1 and 1;
/// while the largest lambda scored so far is the best, score ten times it
/// (up to `max_lambda`). Ties go to the smaller lambda.
pub fn run_lambda_sweep<F>(mut score: F, max_lambda: f64) -> Result<SweepResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut trials: Vec<SweepTrial> = Vec::new();
    let mut attempt = |lambda: f64, trials: &mut Vec<SweepTrial>| -> Result<()> {
        let val_kappa = score(lambda).map_err(|e| Error::AtLambda { lambda, source: Box::new(e) })?;
        trials.push(SweepTrial { lambda, val_kappa });
        Ok(())
    };
    for lambda in INITIAL_LAMBDAS {
        attempt(lambda, &mut trials)?;
    }
    loop {
        let best = best_trial(trials.iter()).expect("non-empty").lambda;
        let largest = trials.last().expect("non-empty").lambda;
        let next = largest * 10.0;
        if best != largest || next > max_lambda {
            break;
        }
        attempt(next, &mut trials)?;
    }
    let best = best_trial(trials.iter()).expect("non-empty").clone();
    Ok(SweepResult { trials, selected_lambda: best.lambda, selected_val_kappa: best.val_kappa })
}

/// One trained model of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub lambda: f64,
    pub model: Model,
    pub history: TrainHistory,
}

/// Result of a full sweep: the trace plus every trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub result: SweepResult,
    pub runs: Vec<SweepRun>,
}

impl SweepOutcome {
    pub fn run_at(&self, lambda: f64) -> Option<&SweepRun> {
        self.runs.iter().find(|r| r.lambda == lambda)
    }

    pub fn selected(&self) -> &SweepRun {
        self.run_at(self.result.selected_lambda).expect("selected lambda was trained")
    }
}

/// Trains `template` at each lambda of the sweep protocol and keeps the
/// model with the best validation kappa.
pub fn lambda_sweep(template: &TrainConfig, train_set: &Dataset, val: &Dataset, max_lambda: f64) -> Result<SweepOutcome> {
    let mut runs = Vec::new();
    let result = run_lambda_sweep(
        |lambda| {
            let config = TrainConfig { lambda, ..template.clone() };
            let (model, history) = train(&config, train_set, val)?;
            let kappa = history.best_val_kappa;
            runs.push(SweepRun { lambda, model, history });
            Ok(kappa)
        },
        max_lambda,
    )?;
    Ok(SweepOutcome { result, runs })
}
