use std::io::Write;

use crate::error::{Error, Result};
use crate::eval::{train_standalone, EvalConfig, EvalReport, Splits};
use crate::hardware::{Predictor, SyntheticDevice};
use crate::search::{run_search, HistoryRow, Objective, SearchConfig};
use crate::space::{ArchSpace, Architecture};

pub const SWEEP_HEADER: &str = "lambda,arch_id,pred_latency_ms,top1";
pub const TRACE_HEADER: &str = "T_ms,seed,epoch,pred_latency_ms,lambda";

/// One fixed-λ search and, optionally, its stand-alone evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub arch: Architecture,
    pub arch_id: String,
    pub all_skip: bool,
    pub pred_latency_ms: f64,
    /// NaN when evaluation was skipped.
    pub top1: f64,
}

/// Searches once per λ in fixed-multiplier mode. `data` holds the full
/// training split (halved for the search) and the held-out split used by
/// the evaluation.
pub fn sweep_lambda(
    space: &ArchSpace,
    lambdas: &[f64],
    base: &SearchConfig,
    eval: Option<&EvalConfig>,
    data: &Splits,
    predictor: &Predictor,
    mut device: Option<&mut SyntheticDevice>,
) -> Result<Vec<SweepRow>> {
    let halves = data.search_halves()?;
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!(
                "sweep λ must be finite and non-negative, got {lambda}"
            )));
        }
        let cfg = SearchConfig {
            objective: Objective::FixedLambda,
            lambda_fixed: lambda,
            ..base.clone()
        };
        let out = run_search(space, &cfg, &halves, Some(predictor))?;
        let top1 = match eval {
            Some(e) => {
                train_standalone(
                    space,
                    &out.arch,
                    data,
                    e,
                    Some(predictor),
                    device.as_deref_mut(),
                )?
                .top1
            }
            None => f64::NAN,
        };
        rows.push(SweepRow {
            lambda,
            arch_id: out.arch.id(space),
            all_skip: out.arch.is_all_skip(space),
            arch: out.arch,
            pred_latency_ms: out.final_latency,
            top1,
        });
    }
    Ok(rows)
}

/// One learnable-λ search toward a target.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetRun {
    pub target: f64,
    pub seed: u64,
    pub arch: Architecture,
    pub arch_id: String,
    pub final_latency: f64,
    /// `|final − T| / T`.
    pub violation: f64,
    /// Largest relative deviation over the last quarter of the epochs.
    pub trace_violation: f64,
    pub history: Vec<HistoryRow>,
    pub report: Option<EvalReport>,
}

/// Per-target aggregate of [`TargetRun`]s.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSummary {
    pub target: f64,
    pub runs: usize,
    pub mean_violation: f64,
    pub max_violation: f64,
    pub max_trace_violation: f64,
    /// NaN when evaluation was skipped.
    pub mean_top1: f64,
}

/// Largest `|lat − T| / T` over the last quarter of the epochs (at least
/// one epoch).
pub fn last_quartile_violation(history: &[HistoryRow], target: f64) -> f64 {
    let n = history.len();
    let from = n - (n / 4).max(1).min(n);
    history[from..]
        .iter()
        .map(|h| (h.pred_latency_ms - target).abs() / target)
        .fold(0.0, f64::max)
}

/// Searches every target once per seed with the learnable multiplier and
/// no per-target tuning.
#[allow(clippy::too_many_arguments)]
pub fn multi_target_experiment(
    space: &ArchSpace,
    targets: &[f64],
    seeds: &[u64],
    base: &SearchConfig,
    eval: Option<&EvalConfig>,
    data: &Splits,
    predictor: &Predictor,
    mut device: Option<&mut SyntheticDevice>,
) -> Result<Vec<TargetRun>> {
    let halves = data.search_halves()?;
    let mut runs = Vec::with_capacity(targets.len() * seeds.len());
    for &target in targets {
        for &seed in seeds {
            let cfg = SearchConfig {
                objective: Objective::LearnableLambda,
                target_latency: target,
                seed,
                ..base.clone()
            };
            let out = run_search(space, &cfg, &halves, Some(predictor))?;
            let report = match eval {
                Some(e) => {
                    let e = EvalConfig { seed, ..e.clone() };
                    let mut r = train_standalone(
                        space,
                        &out.arch,
                        data,
                        &e,
                        Some(predictor),
                        device.as_deref_mut(),
                    )?;
                    r.target_ms = target;
                    Some(r)
                }
                None => None,
            };
            runs.push(TargetRun {
                target,
                seed,
                arch_id: out.arch.id(space),
                arch: out.arch,
                violation: (out.final_latency - target).abs() / target,
                trace_violation: last_quartile_violation(&out.history, target),
                final_latency: out.final_latency,
                history: out.history,
                report,
            });
        }
    }
    Ok(runs)
}

/// Aggregates runs per target, in first-seen target order.
pub fn summarize(runs: &[TargetRun]) -> Vec<TargetSummary> {
    let mut targets: Vec<f64> = Vec::new();
    for r in runs {
        if !targets.contains(&r.target) {
            targets.push(r.target);
        }
    }
    targets
        .into_iter()
        .map(|t| {
            let rs: Vec<&TargetRun> = runs.iter().filter(|r| r.target == t).collect();
            let n = rs.len() as f64;
            let top1: Vec<f64> = rs
                .iter()
                .filter_map(|r| r.report.as_ref().map(|e| e.top1))
                .collect();
            TargetSummary {
                target: t,
                runs: rs.len(),
                mean_violation: rs.iter().map(|r| r.violation).sum::<f64>() / n,
                max_violation: rs.iter().map(|r| r.violation).fold(0.0, f64::max),
                max_trace_violation: rs.iter().map(|r| r.trace_violation).fold(0.0, f64::max),
                mean_top1: if top1.is_empty() {
                    f64::NAN
                } else {
                    top1.iter().sum::<f64>() / top1.len() as f64
                },
            }
        })
        .collect()
}

/// Whether mean accuracy never drops as the target grows; reported, not
/// enforced. Vacuously true without evaluations.
pub fn accuracy_non_decreasing(summaries: &[TargetSummary]) -> bool {
    let mut s: Vec<&TargetSummary> = summaries.iter().filter(|s| !s.mean_top1.is_nan()).collect();
    s.sort_by(|a, b| a.target.total_cmp(&b.target));
    s.windows(2).all(|w| w[1].mean_top1 >= w[0].mean_top1)
}

pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.lambda, r.arch_id, r.pred_latency_ms, r.top1
        )?;
    }
    Ok(())
}

/// Per-epoch latency traces of every run, for plotting convergence.
pub fn write_traces<W: Write>(mut w: W, runs: &[TargetRun]) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in runs {
        for h in &r.history {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.target, r.seed, h.epoch, h.pred_latency_ms, h.lambda
            )?;
        }
    }
    Ok(())
}
