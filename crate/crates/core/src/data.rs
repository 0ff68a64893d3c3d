//! In-memory datasets, synthetic ordinal data and confusion-driven label noise.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cost_matrices::RowStochastic;
use crate::{math, rng};
use crate::{Error, Result};

/// Features (`N x D`, row-major) with grades.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    clean_labels: Option<Vec<usize>>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        input_dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        clean_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("dataset"));
        }
        if input_dim == 0 {
            return Err(Error::InvalidDimension { what: "input dimension", expected: 1, got: 0 });
        }
        if num_classes < 2 {
            return Err(Error::InvalidDimension { what: "class count", expected: 2, got: num_classes });
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::InvalidDimension {
                what: "feature entries",
                expected: labels.len() * input_dim,
                got: features.len(),
            });
        }
        let all_labels = labels.iter().chain(clean_labels.iter().flatten());
        if let Some(y) = all_labels.clone().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidInput(format!("label {y} outside [0, {num_classes})")));
        }
        if let Some(clean) = &clean_labels {
            if clean.len() != labels.len() {
                return Err(Error::InvalidDimension { what: "clean labels", expected: labels.len(), got: clean.len() });
            }
        }
        Ok(Dataset { input_dim, num_classes, features, labels, clean_labels, provenance: String::new() })
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance = note.into();
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Labels used for training and evaluation (noisy when noise was injected).
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn clean_labels(&self) -> Option<&[usize]> {
        self.clean_labels.as_deref()
    }

    /// Copy with the clean labels promoted to the working labels.
    pub fn with_clean_labels(&self) -> Option<Dataset> {
        let clean = self.clean_labels.clone()?;
        Some(Dataset { labels: clean, clean_labels: None, ..self.clone() })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        let d = self.input_dim;
        Dataset::new(
            d,
            self.num_classes,
            self.features[start * d..end * d].to_vec(),
            self.labels[start..end].to_vec(),
            self.clean_labels.as_ref().map(|c| c[start..end].to_vec()),
        )
        .map(|ds| ds.with_provenance(self.provenance.clone()))
    }
}

/// Eyepacs-like grade imbalance used as the default synthetic prior.
pub const DEFAULT_PRIORS: [f64; 5] = [0.73, 0.07, 0.15, 0.03, 0.02];

/// Recipe for a synthetic ordinal dataset.
///
/// Class `g` is centred at `g * spacing * u` with `u = (1, ..., 1) / sqrt(D)`,
/// so class centres are collinear and ordered; features add isotropic
/// Gaussian noise of standard deviation `spread`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub samples: usize,
    pub priors: Vec<f64>,
    pub input_dim: usize,
    pub spacing: f64,
    pub spread: f64,
    /// Annotation noise applied to the clean grades.
    pub noise: Option<RowStochastic>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 5,
            samples: 1000,
            priors: DEFAULT_PRIORS.to_vec(),
            input_dim: 2,
            spacing: 1.0,
            spread: 0.5,
            noise: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidDimension { what: "class count", expected: 2, got: self.num_classes });
        }
        if self.samples == 0 {
            return Err(Error::EmptyInput("sample count"));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidDimension { what: "input dimension", expected: 1, got: 0 });
        }
        if self.priors.len() != self.num_classes {
            return Err(Error::InvalidDimension { what: "priors", expected: self.num_classes, got: self.priors.len() });
        }
        let sum: f64 = self.priors.iter().sum();
        if self.priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("priors must be a probability vector (sum = {sum})")));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidHyperparameter { name: "spacing", value: self.spacing });
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::InvalidHyperparameter { name: "spread", value: self.spread });
        }
        if let Some(noise) = &self.noise {
            if noise.num_classes() != self.num_classes {
                return Err(Error::InvalidDimension {
                    what: "noise matrix",
                    expected: self.num_classes,
                    got: noise.num_classes(),
                });
            }
        }
        Ok(())
    }
}

const LABEL_STREAM: u64 = 1;
const FEATURE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

fn weighted(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::InvalidInput(format!("invalid categorical weights: {e}")))
}

/// Draws a dataset from `spec`. With a noise matrix the working labels are
/// the noisy ones and the originals are kept as clean labels.
///
/// Labels, features and noise use separate random streams, so adding noise
/// does not change the features or clean grades for a given seed.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let grade_dist = weighted(&spec.priors)?;
    let mut label_rng = rng::seeded(rng::derive_seed(spec.seed, LABEL_STREAM, 0));
    let mut feature_rng = rng::seeded(rng::derive_seed(spec.seed, FEATURE_STREAM, 0));
    let labels: Vec<usize> = (0..spec.samples).map(|_| grade_dist.sample(&mut label_rng)).collect();

    let axis = 1.0 / math::sqrt(spec.input_dim as f64);
    let mut features = Vec::with_capacity(spec.samples * spec.input_dim);
    for &g in &labels {
        let centre = g as f64 * spec.spacing * axis;
        for _ in 0..spec.input_dim {
            let z: f64 = StandardNormal.sample(&mut feature_rng);
            features.push(centre + spec.spread * z);
        }
    }

    let (working, clean) = match &spec.noise {
        Some(noise) => {
            let noisy = inject_label_noise(&labels, noise, rng::derive_seed(spec.seed, NOISE_STREAM, 0))?;
            (noisy, Some(labels))
        }
        None => (labels, None),
    };
    Ok(Dataset::new(spec.input_dim, spec.num_classes, features, working, clean)?
        .with_provenance(format!("synthetic ordinal data, seed {}", spec.seed)))
}

/// Replaces each grade `i` by a draw from row `i` of `m_star`.
pub fn inject_label_noise(labels: &[usize], m_star: &RowStochastic, seed: u64) -> Result<Vec<usize>> {
    let n = m_star.num_classes();
    if let Some(&y) = labels.iter().find(|&&y| y >= n) {
        return Err(Error::InvalidDimension { what: "noise matrix (label out of range)", expected: n, got: y + 1 });
    }
    let rows = (0..n).map(|i| weighted(m_star.row(i))).collect::<Result<Vec<_>>>()?;
    let mut rng = rng::seeded(seed);
    Ok(labels.iter().map(|&y| rows[y].sample(&mut rng)).collect())
}
