use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ordcost_core::bootstrap::{paired_bootstrap_test, BootstrapConfig};
use ordcost_core::cost_matrices::{ast_cost_matrix, quadratic_cost_matrix, row_normalize, ConfusionCounts};
use ordcost_core::data::{gen_synthetic, Dataset, SynthSpec};
use ordcost_core::losses::BaseLoss;
use ordcost_core::metrics::{Metric, MetricsReport};
use ordcost_core::model::{Model, ModelKind};
use ordcost_core::trainer::{self, lambda_sweep, CostSource, TrainConfig, TrainHistory};
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, Result};
use crate::io::{self, Checkpoint, HistoryLine};
use crate::report::{ComparisonEntry, Payload, RunReport};

/// Hidden units used when a hidden layer is requested without a width.
pub const DEFAULT_HIDDEN_DIM: usize = 16;

/// A finished command: its report, a text summary and where to send them.
#[derive(Debug)]
pub struct Execution {
    pub report: RunReport,
    pub summary: String,
    pub output: OutputArgs,
}

impl Execution {
    pub fn exit_code(&self) -> i32 {
        i32::from(self.report.has_error())
    }
}

/// Report fields filled in while a command runs, kept even if it fails.
struct Run {
    seed: u64,
    config: serde_json::Value,
    artifacts: Vec<String>,
}

impl Run {
    fn new(seed: u64) -> Self {
        Run { seed, config: serde_json::Value::Null, artifacts: Vec::new() }
    }

    fn wrote(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }
}

type Outcome = Result<(Payload, String)>;

pub fn execute(cli: Cli, argv: Vec<String>) -> Execution {
    let start = Instant::now();
    let (name, output, mut run, outcome) = match cli.command {
        Command::GenData(a) => {
            let mut run = Run::new(a.seed);
            let out = gen_data(&a, &mut run);
            ("gen-data", a.output, run, out)
        }
        Command::Train(a) => {
            let mut run = Run::new(a.training.seed.unwrap_or(0));
            let out = train(&a, &mut run);
            ("train", a.training.output.clone(), run, out)
        }
        Command::Sweep(a) => {
            let mut run = Run::new(a.training.seed.unwrap_or(0));
            let out = sweep(&a, &mut run);
            ("sweep", a.training.output.clone(), run, out)
        }
        Command::Eval(a) => {
            let mut run = Run::new(a.seed);
            let out = eval(&a, &mut run);
            ("eval", a.output, run, out)
        }
        Command::Compare(a) => {
            let mut run = Run::new(a.seed);
            let out = compare(&a, &mut run);
            ("compare", a.output, run, out)
        }
        Command::CostMatrix(a) => {
            let mut run = Run::new(a.seed);
            let out = cost_matrix(&a, &mut run);
            ("cost-matrix", a.output, run, out)
        }
    };
    if let Some(path) = &output.report {
        run.wrote(path);
    }
    let (payload, summary, error) = match outcome {
        Ok((p, s)) => (Some(p), s, None),
        Err(e) => (None, String::new(), Some(e.to_string())),
    };
    let report = RunReport {
        command: argv,
        subcommand: name.into(),
        seed: run.seed,
        config: run.config,
        artifacts: run.artifacts,
        payload,
        error,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Execution { report, summary, output }
}

fn gen_data(a: &GenDataArgs, run: &mut Run) -> Outcome {
    let defaults = SynthSpec::default();
    let num_classes = a.num_classes.unwrap_or(defaults.num_classes);
    let priors = match (&a.priors, num_classes == defaults.num_classes) {
        (Some(p), _) => p.clone(),
        (None, true) => defaults.priors.clone(),
        (None, false) => vec![1.0 / num_classes as f64; num_classes],
    };
    let noise = match (&a.noise_matrix, &a.noise_confusion) {
        (Some(path), _) => Some(io::read_row_stochastic(path)?),
        (None, Some(path)) => Some(row_normalize(&io::read_confusion(path)?)?),
        (None, None) => None,
    };
    let spec = SynthSpec {
        num_classes,
        samples: a.samples.unwrap_or(defaults.samples),
        priors,
        input_dim: a.input_dim.unwrap_or(defaults.input_dim),
        spacing: a.spacing.unwrap_or(defaults.spacing),
        spread: a.spread.unwrap_or(defaults.spread),
        noise,
        seed: a.seed,
    };
    run.config = json!({ "spec": spec, "out": a.out });
    let data = gen_synthetic(&spec)?;
    io::save_csv(&a.out, &data)?;
    run.wrote(&a.out);

    let clean_class_counts = data.with_clean_labels().map(|d| d.class_counts());
    let class_counts = data.class_counts();
    let mut summary = format!("wrote {} rows ({} features, {} classes) to {}\n", data.len(), data.input_dim(), num_classes, a.out.display());
    writeln!(summary, "class counts: {class_counts:?}").unwrap();
    if let Some(clean) = &clean_class_counts {
        writeln!(summary, "clean class counts: {clean:?}").unwrap();
    }
    let payload = Payload::Dataset { rows: data.len(), input_dim: data.input_dim(), num_classes, class_counts, clean_class_counts };
    Ok((payload, summary))
}

/// Defaults, then the `--config` file, then individual flags.
pub fn resolve_config(a: &TrainingArgs, lambda: Option<f64>) -> Result<TrainConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Json { path: path.clone(), source: e })?
        }
        None => TrainConfig::default(),
    };
    if let Some(m) = a.model {
        c.model = match m {
            ModelArg::LinearSoftmax => ModelKind::LinearSoftmax,
            ModelArg::OneHiddenLayer => ModelKind::OneHiddenLayer,
        };
        if c.model == ModelKind::LinearSoftmax && a.hidden_dim.is_none() {
            c.hidden_dim = 0;
        }
    }
    if let Some(h) = a.hidden_dim {
        c.hidden_dim = h;
    }
    if c.model == ModelKind::OneHiddenLayer && c.hidden_dim == 0 {
        c.hidden_dim = DEFAULT_HIDDEN_DIM;
    }

    let kind = a.base.unwrap_or(match c.base_loss {
        BaseLoss::CrossEntropy => BaseArg::Ce,
        BaseLoss::Focal { .. } => BaseArg::Focal,
        BaseLoss::Nuls { .. } => BaseArg::Nuls,
    });
    c.base_loss = match (kind, c.base_loss) {
        (BaseArg::Ce, _) => BaseLoss::CrossEntropy,
        (BaseArg::Focal, BaseLoss::Focal { alpha, gamma }) => {
            BaseLoss::Focal { alpha: a.alpha.unwrap_or(alpha), gamma: a.gamma.unwrap_or(gamma) }
        }
        (BaseArg::Focal, _) => BaseLoss::Focal {
            alpha: a.alpha.unwrap_or(BaseLoss::DEFAULT_FOCAL_ALPHA),
            gamma: a.gamma.unwrap_or(BaseLoss::DEFAULT_FOCAL_GAMMA),
        },
        (BaseArg::Nuls, BaseLoss::Nuls { sigma }) => BaseLoss::Nuls { sigma: a.sigma.unwrap_or(sigma) },
        (BaseArg::Nuls, _) => BaseLoss::Nuls { sigma: a.sigma.unwrap_or(BaseLoss::DEFAULT_NULS_SIGMA) },
    };
    let unused = match c.base_loss {
        BaseLoss::CrossEntropy => [("--alpha", a.alpha), ("--gamma", a.gamma), ("--sigma", a.sigma)].to_vec(),
        BaseLoss::Focal { .. } => [("--sigma", a.sigma)].to_vec(),
        BaseLoss::Nuls { .. } => [("--alpha", a.alpha), ("--gamma", a.gamma)].to_vec(),
    };
    if let Some((flag, _)) = unused.iter().find(|(_, v)| v.is_some()) {
        return Err(CliError::Usage(format!("{flag} does not apply to the {} loss", c.base_loss.name())));
    }

    let kind = a.cost_matrix.or(if a.confusion.is_some() {
        Some(CostArg::Ast)
    } else if a.costs.is_some() {
        Some(CostArg::Custom)
    } else {
        None
    });
    match kind {
        Some(CostArg::None) => c.cost_matrix = CostSource::None,
        Some(CostArg::Quadratic) => c.cost_matrix = CostSource::Quadratic,
        Some(CostArg::Ast) => match (&a.confusion, &c.cost_matrix) {
            (Some(path), _) => c.cost_matrix = CostSource::Ast { confusion: io::read_confusion(path)? },
            (None, CostSource::Ast { .. }) => {}
            (None, _) => return Err(CliError::Usage("--cost-matrix ast needs --confusion".into())),
        },
        Some(CostArg::Custom) => match (&a.costs, &c.cost_matrix) {
            (Some(path), _) => c.cost_matrix = CostSource::Custom { matrix: io::read_cost_matrix(path)? },
            (None, CostSource::Custom { .. }) => {}
            (None, _) => return Err(CliError::Usage("--cost-matrix custom needs --costs".into())),
        },
        None => {}
    }

    if let Some(l) = lambda {
        c.lambda = l;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.lr {
        c.lr = v;
    }
    if let Some(v) = a.plateau_factor {
        c.plateau_factor = v;
    }
    if let Some(v) = a.plateau_patience {
        c.plateau_patience = v;
    }
    if let Some(v) = a.early_stop_patience {
        c.early_stop_patience = v;
    }
    if let Some(v) = a.max_epochs {
        c.max_epochs = v;
    }
    if let Some(v) = a.min_improvement {
        c.min_improvement = v;
    }
    if a.no_oversample {
        c.oversample = false;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

/// Training and validation sets sharing one class count.
fn load_splits(a: &TrainingArgs) -> Result<(Dataset, Dataset)> {
    let tr = io::read_table(&a.train)?;
    let va = io::read_table(&a.val)?;
    let inferred = tr.max_label().max(va.max_label()) + 1;
    let c = match a.num_classes {
        Some(c) if c < inferred => {
            return Err(CliError::Usage(format!("labels go up to {}, more than --num-classes {c} allows", inferred - 1)))
        }
        Some(c) => c,
        None => inferred,
    };
    let load = |t: io::RawTable, path: &Path| {
        t.into_dataset(c, format!("loaded from {}", path.display()))
            .map_err(|e| CliError::InFile { path: path.into(), source: e })
    };
    Ok((load(tr, &a.train)?, load(va, &a.val)?))
}

fn training_context(a: &TrainingArgs, config: &TrainConfig, tr: &Dataset, va: &Dataset) -> serde_json::Value {
    json!({
        "train_config": config,
        "train_data": a.train,
        "val_data": a.val,
        "out_dir": a.out_dir,
        "num_classes": tr.num_classes(),
        "input_dim": tr.input_dim(),
        "train_rows": tr.len(),
        "val_rows": va.len(),
    })
}

fn checkpoint(model: Model, config: TrainConfig, history: &TrainHistory) -> Checkpoint {
    Checkpoint { model, config, best_epoch: history.best_epoch, best_val_kappa: history.best_val_kappa }
}

fn history_lines<'a>(lambda: f64, h: &'a TrainHistory) -> impl Iterator<Item = HistoryLine> + 'a {
    h.epochs.iter().map(move |record| HistoryLine { lambda, record: record.clone() })
}

fn train(a: &TrainArgs, run: &mut Run) -> Outcome {
    let t = &a.training;
    let config = resolve_config(t, a.lambda)?;
    run.seed = config.seed;
    let (tr, va) = load_splits(t)?;
    run.config = training_context(t, &config, &tr, &va);
    let active = config.active_cost_matrix(tr.num_classes())?;

    let (model, history) = trainer::train(&config, &tr, &va).map_err(|e| match e {
        e @ ordcost_core::Error::TrainingDiverged { .. } => {
            ordcost_core::Error::AtLambda { lambda: config.lambda, source: Box::new(e) }
        }
        e => e,
    })?;
    let dir = io::create_dir(&t.out_dir)?;
    let ckpt_path = dir.join("checkpoint.json");
    io::write_json(&ckpt_path, &checkpoint(model, config.clone(), &history))?;
    run.wrote(&ckpt_path);
    let hist_path = dir.join("history.jsonl");
    io::write_jsonl(&hist_path, history_lines(config.lambda, &history))?;
    run.wrote(&hist_path);

    let final_lr = history.epochs.last().map_or(config.lr, |e| e.lr);
    let summary = format!(
        "trained {} with {} (lambda {}, cost matrix {}) for {} epochs\nbest validation kappa {:.4} at epoch {}\ncheckpoint: {}\n",
        t.train.display(),
        config.base_loss.name(),
        config.lambda,
        if active.is_some() { config.cost_matrix.name() } else { "none active" },
        history.epochs.len(),
        history.best_val_kappa,
        history.best_epoch,
        ckpt_path.display(),
    );
    let payload = Payload::Training {
        active_cost_matrix: active,
        epochs_run: history.epochs.len(),
        best_epoch: history.best_epoch,
        best_val_kappa: history.best_val_kappa,
        final_lr,
    };
    Ok((payload, summary))
}

fn sweep(a: &SweepArgs, run: &mut Run) -> Outcome {
    let t = &a.training;
    let template = resolve_config(t, None)?;
    run.seed = template.seed;
    if template.cost_matrix == CostSource::None {
        return Err(CliError::Usage("a sweep needs a cost matrix (--cost-matrix quadratic, ast or custom)".into()));
    }
    if !(a.max_lambda.is_finite() && a.max_lambda > 0.0) {
        return Err(CliError::Usage(format!("--max-lambda must be positive, got {}", a.max_lambda)));
    }
    let (tr, va) = load_splits(t)?;
    let mut context = training_context(t, &template, &tr, &va);
    context["max_lambda"] = json!(a.max_lambda);
    run.config = context;

    let outcome = lambda_sweep(&template, &tr, &va, a.max_lambda)?;
    let dir = io::create_dir(&t.out_dir)?;
    let runs_dir = io::create_dir(&dir.join("runs"))?;
    for r in &outcome.runs {
        let path = runs_dir.join(format!("lambda-{}.json", r.lambda));
        let config = TrainConfig { lambda: r.lambda, ..template.clone() };
        io::write_json(&path, &checkpoint(r.model.clone(), config, &r.history))?;
        run.wrote(&path);
    }
    let selected = outcome.selected();
    let ckpt_path = dir.join("checkpoint.json");
    let config = TrainConfig { lambda: selected.lambda, ..template.clone() };
    io::write_json(&ckpt_path, &checkpoint(selected.model.clone(), config, &selected.history))?;
    run.wrote(&ckpt_path);
    let hist_path = dir.join("history.jsonl");
    io::write_jsonl(&hist_path, outcome.runs.iter().flat_map(|r| history_lines(r.lambda, &r.history)))?;
    run.wrote(&hist_path);
    let table_path = dir.join("sweep.csv");
    let mut table = String::from("lambda,val_kappa\n");
    for trial in &outcome.result.trials {
        writeln!(table, "{},{}", trial.lambda, io::format_real(trial.val_kappa)).unwrap();
    }
    std::fs::write(&table_path, table).map_err(|e| CliError::io(&table_path, e))?;
    run.wrote(&table_path);

    let mut summary = String::from("lambda      val kappa\n");
    for trial in &outcome.result.trials {
        let mark = if trial.lambda == outcome.result.selected_lambda { "  <- selected" } else { "" };
        writeln!(summary, "{:<10}  {:.4}{mark}", trial.lambda, trial.val_kappa).unwrap();
    }
    writeln!(summary, "checkpoint: {}", ckpt_path.display()).unwrap();
    let payload = Payload::Sweep { cost_matrix: template.cost_matrix.build(tr.num_classes())?, result: outcome.result };
    Ok((payload, summary))
}

fn load_for_checkpoint(path: &Path, model: &Model) -> Result<Dataset> {
    let data = io::load_csv(path, Some(model.num_classes()))?;
    if data.input_dim() != model.input_dim() {
        return Err(CliError::Usage(format!(
            "{} has {} features but the checkpoint expects {}",
            path.display(),
            data.input_dim(),
            model.input_dim()
        )));
    }
    Ok(data)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

fn eval(a: &EvalArgs, run: &mut Run) -> Outcome {
    run.config = json!({ "checkpoint": a.checkpoint, "data": a.data });
    let ckpt = io::read_checkpoint(&a.checkpoint)?;
    let data = load_for_checkpoint(&a.data, &ckpt.model)?;
    let metrics = MetricsReport::compute(&ckpt.model.predict(&data)?)?;
    let confusion_row_percent = metrics.confusion.row_percentages();

    let mut summary = format!(
        "quad_kappa   {}\nmauc         {}\naca          {}\nkendall_tau  {}\n",
        fmt_metric(Some(metrics.quad_kappa)),
        fmt_metric(metrics.mauc),
        fmt_metric(Some(metrics.aca)),
        fmt_metric(metrics.kendall_tau),
    );
    summary.push_str("confusion (row %, rows = true grade):\n");
    for row in &confusion_row_percent {
        writeln!(summary, "  {}", row.iter().map(|v| format!("{v:>3}")).collect::<Vec<_>>().join(" ")).unwrap();
    }
    Ok((Payload::Evaluation { metrics, confusion_row_percent }, summary))
}

fn compare(a: &CompareArgs, run: &mut Run) -> Outcome {
    let metrics: Vec<Metric> = match &a.metrics {
        None => Metric::ALL.to_vec(),
        Some(list) => list
            .iter()
            .map(|m| match m {
                MetricArg::QuadKappa => Metric::QuadKappa,
                MetricArg::Mauc => Metric::Mauc,
                MetricArg::Aca => Metric::Aca,
                MetricArg::KendallTau => Metric::KendallTau,
            })
            .collect(),
    };
    let cfg = BootstrapConfig { n_resamples: a.n_resamples, alpha: a.alpha, seed: a.seed };
    run.config = json!({
        "checkpoint_a": a.checkpoint_a,
        "checkpoint_b": a.checkpoint_b,
        "data": a.data,
        "bootstrap": cfg,
        "metrics": metrics.iter().map(|m| m.name()).collect::<Vec<_>>(),
    });
    let ca = io::read_checkpoint(&a.checkpoint_a)?;
    let cb = io::read_checkpoint(&a.checkpoint_b)?;
    if (ca.model.num_classes(), ca.model.input_dim()) != (cb.model.num_classes(), cb.model.input_dim()) {
        return Err(CliError::Usage("the two checkpoints have different input or class dimensions".into()));
    }
    let data = load_for_checkpoint(&a.data, &ca.model)?;
    let (pa, pb) = (ca.model.predict(&data)?, cb.model.predict(&data)?);

    let mut summary = String::from("metric        diff (A-B)   95% CI                 p       verdict\n");
    let mut results = Vec::new();
    for m in metrics {
        match paired_bootstrap_test(&pa, &pb, m, &cfg) {
            Ok(r) => {
                let verdict = if r.significant { format!("significant at {}", r.alpha) } else { "not significant".into() };
                writeln!(
                    summary,
                    "{:<12}  {:>+10.4}   [{:+.4}, {:+.4}]   {:<6.4}  {verdict}",
                    m.name(),
                    r.observed_diff,
                    r.ci95.0,
                    r.ci95.1,
                    r.p_value
                )
                .unwrap();
                results.push(ComparisonEntry { metric: m.name().into(), result: Some(r), error: None });
            }
            Err(e) => {
                writeln!(summary, "{:<12}  error: {e}", m.name()).unwrap();
                results.push(ComparisonEntry { metric: m.name().into(), result: None, error: Some(e.to_string()) });
            }
        }
    }
    Ok((Payload::Comparison { results }, summary))
}

fn cost_matrix(a: &CostMatrixArgs, run: &mut Run) -> Outcome {
    run.config = json!({ "confusion": a.confusion, "num_classes": a.num_classes, "out_dir": a.out_dir });
    let confusion: Option<ConfusionCounts> = a.confusion.as_deref().map(io::read_confusion).transpose()?;
    let c = match (&confusion, a.num_classes) {
        (Some(m), Some(c)) if m.num_classes() != c => {
            return Err(CliError::Usage(format!("--num-classes {c} does not match the {0}x{0} confusion matrix", m.num_classes())))
        }
        (Some(m), _) => m.num_classes(),
        (None, c) => c.unwrap_or(5),
    };
    let quadratic = quadratic_cost_matrix(c)?;
    let normalized = confusion.as_ref().map(row_normalize).transpose()?;
    let ast = confusion.as_ref().map(ast_cost_matrix).transpose()?;

    let mut summary = String::new();
    let mut section = |title: &str, rows: Vec<Vec<f64>>| {
        writeln!(summary, "{title}:").unwrap();
        for row in rows {
            writeln!(summary, "  {}", row.iter().map(|v| format!("{v:>8.4}")).collect::<Vec<_>>().join(" ")).unwrap();
        }
    };
    section("quadratic", quadratic.to_rows());
    if let (Some(n), Some(s)) = (&normalized, &ast) {
        section("normalized confusion", n.to_rows());
        section("ast", s.to_rows());
    }

    if let Some(dir) = &a.out_dir {
        let dir = io::create_dir(dir)?;
        let mut files = vec![("quadratic.csv", quadratic.to_rows())];
        if let (Some(n), Some(s)) = (&normalized, &ast) {
            files.push(("normalized_confusion.csv", n.to_rows()));
            files.push(("ast.csv", s.to_rows()));
        }
        for (name, rows) in files {
            let path = dir.join(name);
            io::write_matrix_csv(&path, &io::real_rows(rows))?;
            run.wrote(&path);
        }
    }
    Ok((Payload::CostMatrices { quadratic, normalized_confusion: normalized, ast }, summary))
}
