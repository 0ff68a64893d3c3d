//! Acceptance suite. Prints one PASS/FAIL line per criterion, with timings,
//! and exits non-zero if any criterion fails or exceeds its time budget.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use ordcost_core::bootstrap::{paired_bootstrap_test, stratified_resample, resample_seed, BootstrapConfig};
use ordcost_core::cost_matrices::{ast_cost_matrix, quadratic_cost_matrix, row_normalize, ConfusionCounts, CostMatrix};
use ordcost_core::data::{gen_synthetic, inject_label_noise, SynthSpec, DEFAULT_PRIORS};
use ordcost_core::losses::{cross_entropy, cs_penalty, BaseLoss, GradeLabel, ProbVector};
use ordcost_core::metrics::{aca, hand_till_mauc, kendall_tau, quadratic_weighted_kappa, Metric, PredictionSet};
use ordcost_core::model::Model;
use ordcost_core::trainer::{lambda_sweep, run_lambda_sweep, train, CostSource, TrainConfig};
use rand::seq::SliceRandom;
use rand::Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Transition probabilities as published alongside the grader counts.
const PUBLISHED_TRANSITIONS: [[f64; 5]; 5] = [
    [0.994, 0.003, 0.003, 0.0, 0.0],
    [0.464, 0.496, 0.040, 0.0, 0.0],
    [0.153, 0.021, 0.819, 0.007, 0.0],
    [0.0, 0.0, 0.260, 0.720, 0.020],
    [0.0, 0.0, 0.0, 0.06237, 0.937],
];

fn normalization_reproduces_published_transitions() -> Result<String, String> {
    let m = row_normalize(&ConfusionCounts::grader_disagreement()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (i, row) in PUBLISHED_TRANSITIONS.iter().enumerate() {
        for (j, &published) in row.iter().enumerate() {
            if (i, j) == (4, 3) {
                continue;
            }
            let d = (m.get(i, j) - published).abs();
            worst = worst.max(d);
            ensure(d <= 5e-3, || format!("entry ({i},{j}) = {} vs {published}", m.get(i, j)))?;
        }
    }
    // the published 0.06237 is a misprint of 1/16
    ensure(m.get(4, 3) == 0.0625, || format!("entry (4,3) = {}", m.get(4, 3)))?;
    Ok(format!("max deviation {worst:.2e}, (4,3) = 1/16"))
}

fn gradients_match_finite_differences() -> Result<String, String> {
    let mut r = rng(31);
    let matrices: [(&str, CostMatrix); 2] = [
        ("quadratic", quadratic_cost_matrix(5).unwrap()),
        ("ast", ast_cost_matrix(&ConfusionCounts::grader_disagreement()).unwrap()),
    ];
    let mut configs = 0;
    let mut worst = 0.0f64;
    for base in [BaseLoss::CrossEntropy, BaseLoss::focal(), BaseLoss::nuls()] {
        for lambda in [0.0, 0.1, 1.0, 10.0] {
            for (name, costs) in &matrices {
                for _ in 0..10 {
                    let case = GradCase {
                        base,
                        lambda,
                        costs: costs.clone(),
                        logits: (0..5).map(|_| r.random_range(-3.0..3.0)).collect(),
                        y: r.random_range(0..5),
                    };
                    let (err, sum) = case.check(1e-5);
                    worst = worst.max(err);
                    configs += 1;
                    ensure(err < 1e-4, || format!("{} lambda={lambda} {name}: rel err {err:.2e}", base.name()))?;
                    ensure(sum.abs() < 1e-10, || format!("{} lambda={lambda} {name}: gradient sum {sum:.2e}", base.name()))?;
                }
            }
        }
    }
    Ok(format!("{configs} configurations, max relative error {worst:.2e}"))
}

fn metrics_match_definitions() -> Result<String, String> {
    let mut r = rng(77);
    let instances = 150;
    let mut worst = 0.0f64;
    let mut close = |name: &str, i: usize, got: f64, want: f64| {
        let d = (got - want).abs();
        worst = worst.max(d);
        ensure(d <= 1e-12, || format!("instance {i}: {name} {got} vs {want}"))
    };
    for i in 0..instances {
        let case = random_metric_case(&mut r);
        let c = case.num_classes;
        let cm = confusion(&case.labels, &case.predicted, c);
        close("kappa", i, quadratic_weighted_kappa(&cm).unwrap(), kappa_oracle(&case.labels, &case.predicted, c))?;
        close("aca", i, aca(&cm).unwrap(), aca_oracle(&case.labels, &case.predicted, c))?;
        let hard = PredictionSet::from_hard_predictions(c, case.labels.clone(), &case.predicted).unwrap();
        match (kendall_tau(&hard), kendall_oracle(&case.labels, &case.predicted)) {
            (Ok(t), Some(o)) => close("tau-b", i, t, o)?,
            (Err(_), None) => {}
            (got, want) => return Err(format!("instance {i}: tau-b {got:?} vs {want:?}")),
        }
        let soft = PredictionSet::from_raw_scores(c, case.labels.clone(), case.scores.clone()).unwrap();
        match (hand_till_mauc(&soft), mauc_oracle(&case.labels, &case.scores, c)) {
            (Ok(m), Some(o)) => close("mAUC", i, m.value, o)?,
            (Err(_), None) => {}
            (got, want) => return Err(format!("instance {i}: mAUC {got:?} vs {want:?}")),
        }
    }
    Ok(format!("{instances} instances, max deviation {worst:.1e}"))
}

fn penalty_sees_permutations_cross_entropy_does_not() -> Result<String, String> {
    let mut r = rng(4);
    let (mut changing, mut preserving) = (0, 0);
    for t in 0..1000 {
        let c = r.random_range(3..=7);
        let y = r.random_range(0..c);
        let p = random_probs(&mut r, c);
        let mut others: Vec<usize> = (0..c).filter(|&k| k != y).collect();
        let mut perm = others.clone();
        perm.shuffle(&mut r);
        let mut q = p.clone();
        for (&dst, &src) in others.iter().zip(&perm) {
            q[dst] = p[src];
        }
        others.sort_unstable();

        let label = GradeLabel::new(y, c).unwrap();
        let (pv, qv) = (ProbVector::new(p.clone()).unwrap(), ProbVector::new(q.clone()).unwrap());
        let target = ProbVector::one_hot(label, c).unwrap();
        let ce = (cross_entropy(&pv, &target).unwrap().value, cross_entropy(&qv, &target).unwrap().value);
        ensure(ce.0.to_bits() == ce.1.to_bits(), || format!("triple {t}: cross-entropy {} vs {}", ce.0, ce.1))?;

        let costs = quadratic_cost_matrix(c).unwrap();
        let cs = (cs_penalty(&pv, label, &costs).unwrap().value, cs_penalty(&qv, label, &costs).unwrap().value);
        // the penalty can only move if some probability lands on a grade with a different cost
        let moves_cost = others.iter().zip(&perm).any(|(&dst, &src)| p[src] != p[dst] && costs.get(y, src) != costs.get(y, dst));
        if moves_cost {
            changing += 1;
            ensure(cs.0 != cs.1, || format!("triple {t}: penalty unchanged at {}", cs.0))?;
        } else {
            preserving += 1;
            ensure((cs.0 - cs.1).abs() <= 1e-12, || format!("triple {t}: equal-cost permutation moved penalty"))?;
        }
    }
    Ok(format!("1000 triples: {changing} cost-moving permutations all changed the penalty, {preserving} equal-cost ones did not"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn test_kappa(model: &Model, test: &ordcost_core::data::Dataset) -> f64 {
    use ordcost_core::metrics::confusion_matrix;
    quadratic_weighted_kappa(&confusion_matrix(&model.predict(test).unwrap()).unwrap()).unwrap()
}

fn regularization_does_not_hurt_kappa() -> Result<String, String> {
    let noise = row_normalize(&ConfusionCounts::grader_disagreement()).unwrap();
    let (mut base, mut cs, mut ast) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let spec = SynthSpec {
            samples: 8000,
            priors: DEFAULT_PRIORS.to_vec(),
            noise: Some(noise.clone()),
            seed,
            ..SynthSpec::default()
        };
        let data = gen_synthetic(&spec).map_err(|e| e.to_string())?;
        let (tr, va, te) = (data.slice(0, 5000).unwrap(), data.slice(5000, 6000).unwrap(), data.slice(6000, 8000).unwrap());
        let template = TrainConfig { seed, cost_matrix: CostSource::Quadratic, ..TrainConfig::default() };
        let sweep = lambda_sweep(&template, &tr, &va, 1e4).map_err(|e| format!("seed {seed}: {e}"))?;
        let baseline = sweep.run_at(0.0).expect("lambda 0 is always trained");
        base.push(test_kappa(&baseline.model, &te));
        cs.push(test_kappa(&sweep.selected().model, &te));

        // AST reuses the swept lambda; a sweep that picks 0 falls back to its best positive lambda
        let lambda = match sweep.result.selected_lambda {
            l if l > 0.0 => l,
            _ => sweep.result.best_regularized().expect("sweep tries positive lambdas").lambda,
        };
        let ast_config = TrainConfig {
            lambda,
            cost_matrix: CostSource::Ast { confusion: ConfusionCounts::grader_disagreement() },
            ..template
        };
        let (model, _) = train(&ast_config, &tr, &va).map_err(|e| format!("seed {seed}: {e}"))?;
        ast.push(test_kappa(&model, &te));
    }
    let (b, c, a) = (median(base), median(cs), median(ast));
    let summary = format!("median test kappa: baseline {b:.4}, quadratic CS {c:.4}, AST {a:.4}");
    ensure(c >= b && a >= b, || summary.clone())?;
    Ok(summary)
}

fn sweep_follows_escalation_protocol() -> Result<String, String> {
    let fixture = |l: f64| -> f64 {
        // rises up to lambda 10, falls after
        if l <= 10.0 {
            0.6 + 0.01 * (l + 1.0).ln()
        } else {
            0.6 + 0.01 * 11f64.ln() - 0.05 * (l / 10.0).ln()
        }
    };
    let mut trained = Vec::new();
    let result = run_lambda_sweep(
        |l| {
            trained.push(l);
            Ok(fixture(l))
        },
        1e6,
    )
    .map_err(|e| e.to_string())?;
    ensure(trained == [0.0, 0.1, 1.0, 10.0, 100.0], || format!("trained {trained:?}"))?;
    ensure(result.selected_lambda == 10.0, || format!("selected {}", result.selected_lambda))?;

    // the training-backed sweep records one trained model per trial
    let data = gen_synthetic(&SynthSpec { samples: 600, seed: 2, ..SynthSpec::default() }).unwrap();
    let (tr, va) = (data.slice(0, 400).unwrap(), data.slice(400, 600).unwrap());
    let template = TrainConfig { max_epochs: 15, ..TrainConfig::default() };
    let outcome = lambda_sweep(&template, &tr, &va, 100.0).map_err(|e| e.to_string())?;
    let swept: Vec<f64> = outcome.runs.iter().map(|r| r.lambda).collect();
    let trials: Vec<f64> = outcome.result.trials.iter().map(|t| t.lambda).collect();
    ensure(swept == trials && swept[..3] == [0.0, 0.1, 1.0], || format!("runs {swept:?} vs trials {trials:?}"))?;
    Ok(format!("trained {trained:?}, selected 10; real sweep tried {swept:?}"))
}

fn bootstrap_contract() -> Result<String, String> {
    let data = gen_synthetic(&SynthSpec { samples: 1000, seed: 9, ..SynthSpec::default() }).unwrap();
    let (tr, te) = (data.slice(0, 700).unwrap(), data.slice(700, 1000).unwrap());
    let (model, _) = train(&TrainConfig { max_epochs: 10, ..TrainConfig::default() }, &tr, &tr).map_err(|e| e.to_string())?;
    let preds = model.predict(&te).unwrap();
    let cfg = BootstrapConfig { n_resamples: 1000, alpha: 0.05, seed: 21 };
    for metric in Metric::ALL {
        let r = paired_bootstrap_test(&preds, &preds, metric, &cfg).map_err(|e| format!("{}: {e}", metric.name()))?;
        ensure(r.p_value == 1.0, || format!("{}: p = {}", metric.name(), r.p_value))?;
    }

    let labels = te.labels();
    let want = te.class_counts();
    for k in 0..1000 {
        let idx = stratified_resample(labels, resample_seed(cfg.seed, k)).unwrap();
        let mut got = vec![0; want.len()];
        idx.iter().for_each(|&i| got[labels[i]] += 1);
        ensure(got == want, || format!("resample {k}: counts {got:?} vs {want:?}"))?;
    }

    let other = PredictionSet::from_hard_predictions(5, labels.to_vec(), &vec![0; labels.len()]).unwrap();
    let run = || serde_json::to_string(&paired_bootstrap_test(&preds, &other, Metric::QuadKappa, &cfg).unwrap()).unwrap();
    let (first, second) = (run(), run());
    ensure(first == second, || "same seed gave different output".into())?;
    Ok(format!("p = 1 for all metrics, 1000 stratified resamples, {} identical bytes on rerun", first.len()))
}

fn noise_injection_fidelity() -> Result<String, String> {
    let m = row_normalize(&ConfusionCounts::grader_disagreement()).unwrap();
    let noisy = inject_label_noise(&[1; 10_000], &m, 123).map_err(|e| e.to_string())?;
    let mut counts = [0usize; 5];
    noisy.iter().for_each(|&y| counts[y] += 1);
    let tv = total_variation(&counts, m.row(1));
    ensure(tv < 0.02, || format!("total variation {tv:.4}, counts {counts:?}"))?;
    Ok(format!("total variation {tv:.4}, counts {counts:?}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check, Duration); 8] = [
        ("1 grader-disagreement normalization", normalization_reproduces_published_transitions, Duration::from_secs(1)),
        ("2 loss gradients vs finite differences", gradients_match_finite_differences, Duration::from_secs(10)),
        ("3 metrics vs brute-force definitions", metrics_match_definitions, Duration::from_secs(30)),
        ("4 permutation sensitivity", penalty_sees_permutations_cross_entropy_does_not, Duration::from_secs(5)),
        ("5 regularization direction of effect", regularization_does_not_hurt_kappa, Duration::from_secs(600)),
        ("6 lambda sweep protocol", sweep_follows_escalation_protocol, Duration::from_secs(120)),
        ("7 bootstrap contract", bootstrap_contract, Duration::from_secs(30)),
        ("8 noise injection fidelity", noise_injection_fidelity, Duration::from_secs(5)),
    ];
    let mut failures = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; took {elapsed:.1?}, budget {budget:?}")),
            Err(e) => (false, e),
        };
        failures += usize::from(!ok);
        println!("{} criterion {name}: {detail} [{elapsed:.2?}]", if ok { "PASS" } else { "FAIL" });
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
