//! JSON run reports. Everything except `wall_clock_seconds` is a function
//! of the command line and the input files.

use ordcost_core::bootstrap::BootstrapResult;
use ordcost_core::cost_matrices::{CostMatrix, RowStochastic};
use ordcost_core::metrics::MetricsReport;
use ordcost_core::trainer::SweepResult;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Program arguments as given.
    pub command: Vec<String>,
    pub subcommand: String,
    pub seed: u64,
    /// Fully resolved settings of the run.
    pub config: serde_json::Value,
    pub artifacts: Vec<String>,
    pub payload: Option<Payload>,
    /// Set when the command failed or produced an error result.
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    /// True when the run failed or any part of the payload is an error.
    pub fn has_error(&self) -> bool {
        self.error.is_some()
            || matches!(&self.payload, Some(Payload::Comparison { results }) if results.iter().any(|r| r.error.is_some()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Dataset {
        rows: usize,
        input_dim: usize,
        num_classes: usize,
        class_counts: Vec<usize>,
        clean_class_counts: Option<Vec<usize>>,
    },
    Training {
        /// Penalty matrix actually applied; `null` when lambda is 0.
        active_cost_matrix: Option<CostMatrix>,
        epochs_run: usize,
        best_epoch: usize,
        best_val_kappa: f64,
        final_lr: f64,
    },
    Sweep {
        cost_matrix: Option<CostMatrix>,
        result: SweepResult,
    },
    Evaluation {
        metrics: MetricsReport,
        /// Row-normalized confusion matrix in whole percent.
        confusion_row_percent: Vec<Vec<u64>>,
    },
    Comparison {
        results: Vec<ComparisonEntry>,
    },
    CostMatrices {
        quadratic: CostMatrix,
        normalized_confusion: Option<RowStochastic>,
        ast: Option<CostMatrix>,
    },
}

/// Bootstrap outcome for one metric, or why it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub metric: String,
    pub result: Option<BootstrapResult>,
    pub error: Option<String>,
}
