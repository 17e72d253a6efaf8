use std::fs;
use std::path::{Path, PathBuf};

use nasc_core::eval::{
    accuracy_non_decreasing, make_dataset, multi_target_experiment, summarize, sweep_lambda,
    train_standalone, write_reports, write_sweep, write_traces, EvalReport, Splits,
};
use nasc_core::hardware::{
    load_measurements, residuals, sample_dataset, write_measurements, LutPredictor,
    MeasurementRecord, MeasurementSet, MlpPredictor, Predictor, SyntheticDevice,
};
use nasc_core::search::{run_search, write_history, Objective, PathMode, SearchConfig};
use nasc_core::space::{ArchSpace, Architecture, ArchitectureDoc};
use nasc_core::{Error, Result};
use serde_json::{json, Value};

use crate::config::{phase, PredictorKind, RunConfig};

/// Largest relative miss accepted by `search` in target mode.
pub const MAX_VIOLATION: f64 = 0.02;

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// The search ran but missed its target by more than [`MAX_VIOLATION`].
    TargetMissed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::TargetMissed(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    /// 1 runtime failure, 2 configuration error, 3 parse error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Config(_) | Error::Parameter(_)) => 2,
            CliError::Core(
                Error::Parse { .. } | Error::Json(_) | Error::Validation(_) | Error::Encoding(_),
            ) => 3,
            _ => 1,
        }
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, CliError>;

/// Search objective picked on the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SearchMode {
    Target(f64),
    Lambda(f64),
    AccuracyOnly,
    /// Whatever the config's `search` section says.
    FromConfig,
}

fn space(cfg: &RunConfig) -> ArchSpace {
    cfg.space.build()
}

pub fn device(cfg: &RunConfig) -> Result<SyntheticDevice> {
    SyntheticDevice::generate(&space(cfg), &cfg.device.profile(), cfg.seed + phase::DEVICE)
}

/// Full dataset split into training and held-out parts.
pub fn splits(cfg: &RunConfig) -> Result<Splits> {
    let data = make_dataset(&cfg.dataset, &mut cfg.rng(phase::DATA))?;
    Splits::from_fraction(&data, cfg.train_fraction())
}

fn sampled_records(cfg: &RunConfig, n: usize) -> Result<MeasurementSet> {
    let mut dev = device(cfg)?;
    sample_dataset(&mut dev, &space(cfg), n, &mut cfg.rng(phase::MEASURE))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn write_csv(
    cfg: &RunConfig,
    path: &Path,
    body: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<()> {
    let mut buf = format!("{}\n", cfg.csv_banner()).into_bytes();
    body(&mut buf)?;
    write_file(path, &buf)
}

fn meta(cfg: &RunConfig, command: &str) -> Value {
    json!({ "command": command, "seed": cfg.seed, "config_hash": cfg.hash() })
}

fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = line(headers.iter().map(|h| h.to_string()).collect());
    for r in rows {
        out.push('\n');
        out.push_str(&line(r.clone()));
    }
    out
}

fn fmt(v: f64, digits: usize) -> String {
    if v.is_nan() {
        "-".into()
    } else {
        format!("{v:.digits$}")
    }
}

/// Reads a predictor written by `train-predictor` (with its `meta`
/// envelope) or a bare predictor document.
pub fn load_predictor(path: &Path) -> Result<Predictor> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read predictor {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: format!("line {}", e.line()),
        detail: e.to_string(),
    })?;
    match doc.get("predictor") {
        Some(inner) => Predictor::from_json(&inner.to_string()),
        None => Predictor::from_json(&text),
    }
}

fn predictor_path(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_path("predictor.json"))
}

fn require_predictor(cfg: &RunConfig, flag: Option<&Path>) -> Result<Predictor> {
    let path = predictor_path(cfg, flag);
    if !path.is_file() {
        return Err(Error::Config(format!(
            "no predictor at {}; run train-predictor first or pass --predictor",
            path.display()
        )));
    }
    let p = load_predictor(&path)?;
    let s = space(cfg);
    if p.num_layers() != s.num_layers || p.num_ops() != s.ops_per_layer() {
        return Err(Error::Config(format!(
            "predictor covers {}×{} encodings, space is {}×{}",
            p.num_layers(),
            p.num_ops(),
            s.num_layers,
            s.ops_per_layer()
        )));
    }
    Ok(p)
}

/// Reachable cost range from a LUT fitted on the measurement file, or on a
/// fresh in-memory sample when no file exists yet.
pub fn feasible_range(cfg: &RunConfig) -> Result<(f64, f64)> {
    let path = cfg.out_path("measurements.csv");
    let set = if path.is_file() {
        MeasurementSet::new(load_measurements(&path)?)
    } else {
        sampled_records(cfg, cfg.predictor.samples)?
    };
    Ok(LutPredictor::fit(set.train())?.bounds(&space(cfg)))
}

fn check_feasible(range: (f64, f64), target: f64) -> Result<()> {
    let (lo, hi) = range;
    if !(target >= lo && target <= hi) {
        return Err(Error::Config(format!(
            "target {target} is outside the feasible range [{lo:.3}, {hi:.3}] of this device"
        )));
    }
    Ok(())
}

pub fn measure(cfg: &RunConfig, n: Option<usize>, out: Option<&Path>) -> CmdResult {
    let n = n.unwrap_or(cfg.predictor.samples);
    let set = sampled_records(cfg, n)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_path("measurements.csv"));
    write_csv(cfg, &path, |w| write_measurements(w, &set.records))?;
    let v: Vec<f64> = set.records.iter().map(|r| r.value).collect();
    let unit = cfg.device.profile().metric_kind.unit();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let (min, max) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    println!("wrote {n} records to {}", path.display());
    println!("min {min:.3} {unit}  mean {mean:.3} {unit}  max {max:.3} {unit}");
    Ok(())
}

fn fig5_rows(
    w: &mut Vec<u8>,
    model: &str,
    predicted: &[f64],
    records: &[MeasurementRecord],
) -> Result<()> {
    use std::io::Write;
    for (p, r) in predicted.iter().zip(records) {
        writeln!(w, "{model},{},{p}", r.value)?;
    }
    Ok(())
}

pub fn train_predictor(
    cfg: &RunConfig,
    measurements: Option<&Path>,
    kind: Option<PredictorKind>,
    out: Option<&Path>,
) -> CmdResult {
    let mpath = measurements
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_path("measurements.csv"));
    if !mpath.is_file() {
        return Err(Error::Config(format!(
            "no measurements at {}; run measure first",
            mpath.display()
        ))
        .into());
    }
    let set = MeasurementSet::new(load_measurements(&mpath)?);
    let valid = set.valid();
    if valid.is_empty() {
        return Err(Error::Config("measurement file too small for a held-out split".into()).into());
    }
    let kind = kind.unwrap_or(cfg.predictor.kind);
    let unit = valid[0].metric_kind.unit();
    let encs: Vec<_> = valid.iter().map(MeasurementRecord::encoding).collect();

    let lut = LutPredictor::fit(set.train())?;
    let lut_pred: Vec<f64> = encs.iter().map(|e| lut.predict(e)).collect::<Result<_>>()?;
    let mut dev = device(cfg)?;
    let bench = LutPredictor::from_benchmarks(&mut dev, cfg.predictor.bench_reps)?;
    let bench_pred: Vec<f64> = encs
        .iter()
        .map(|e| bench.predict(e))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut stat_row = |name: &str, pred: &[f64]| {
        let s = residuals(pred, valid);
        rows.push(vec![
            name.to_string(),
            fmt(s.rmse, 4),
            fmt(s.bias, 4),
            fmt(s.debiased_rmse, 4),
        ]);
    };
    stat_row("lut (fitted)", &lut_pred);
    stat_row("lut (isolated benchmarks)", &bench_pred);

    let mut mlp_pred = Vec::new();
    let chosen: Predictor = match kind {
        PredictorKind::Lut => lut.into(),
        PredictorKind::Mlp => {
            let (m, _) = MlpPredictor::fit(
                set.train(),
                valid,
                &cfg.predictor.mlp,
                &mut cfg.rng(phase::PREDICTOR),
            )?;
            mlp_pred = m.predict_batch(&encs)?;
            stat_row("mlp", &mlp_pred);
            m.into()
        }
    };

    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_path("predictor.json"));
    let mut m = meta(cfg, "train-predictor");
    m["measurements"] = json!(mpath.file_name().map(|f| f.to_string_lossy().into_owned()));
    m["train_records"] = json!(set.train().len());
    m["valid_records"] = json!(valid.len());
    let doc = json!({ "meta": m, "predictor": chosen });
    write_file(
        &path,
        serde_json::to_string_pretty(&doc)
            .map_err(Error::from)?
            .as_bytes(),
    )?;

    let fig5 = path.with_file_name("fig5.csv");
    write_csv(cfg, &fig5, |w| {
        use std::io::Write;
        writeln!(w, "model,measured,predicted")?;
        fig5_rows(w, "lut_fitted", &lut_pred, valid)?;
        fig5_rows(w, "lut_bench", &bench_pred, valid)?;
        fig5_rows(w, "mlp", &mlp_pred, valid)
    })?;

    println!("held-out residuals over {} records ({unit}):", valid.len());
    println!(
        "{}",
        table(&["model", "rmse", "bias", "debiased_rmse"], &rows)
    );
    println!("device base overhead: {:.3} {unit}", dev.base_overhead());
    println!(
        "wrote {} predictor to {}",
        chosen.kind_name(),
        path.display()
    );
    Ok(())
}

fn search_config(cfg: &RunConfig, mode: SearchMode, multipath: bool) -> SearchConfig {
    let mut s = cfg.search.clone();
    match mode {
        SearchMode::Target(t) => {
            s.objective = Objective::LearnableLambda;
            s.target_latency = t;
        }
        SearchMode::Lambda(l) => {
            s.objective = Objective::FixedLambda;
            s.lambda_fixed = l;
        }
        SearchMode::AccuracyOnly => s.objective = Objective::AccuracyOnly,
        SearchMode::FromConfig => {}
    }
    if multipath {
        s.path_mode = PathMode::Multipath;
    }
    s
}

pub fn search(
    cfg: &RunConfig,
    mode: SearchMode,
    predictor: Option<&Path>,
    out: Option<&Path>,
    multipath: bool,
) -> CmdResult {
    let scfg = search_config(cfg, mode, multipath);
    scfg.validate()?;
    let pred = if scfg.needs_predictor() {
        Some(require_predictor(cfg, predictor)?)
    } else {
        None
    };
    if scfg.objective == Objective::LearnableLambda {
        check_feasible(feasible_range(cfg)?, scfg.target_latency)?;
    }
    let space = space(cfg);
    let data = splits(cfg)?.search_halves()?;
    let arch_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_path("arch.json"));
    let history_path = arch_path.with_extension("history.csv");

    let outcome = match run_search(&space, &scfg, &data, pred.as_ref()) {
        Ok(o) => o,
        Err(Error::Divergence {
            epoch,
            detail,
            history,
        }) => {
            write_csv(cfg, &history_path, |w| write_history(w, &history))?;
            eprintln!(
                "history up to the failure written to {}",
                history_path.display()
            );
            return Err(Error::Divergence {
                epoch,
                detail,
                history,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    write_csv(cfg, &history_path, |w| write_history(w, &outcome.history))?;

    let target = (scfg.objective == Objective::LearnableLambda).then_some(scfg.target_latency);
    let violation = target.map(|t| (outcome.final_latency - t).abs() / t);
    let mut m = meta(cfg, "search");
    m["config"] = serde_json::to_value(cfg.portable()).map_err(Error::from)?;
    m["search"] = serde_json::to_value(&scfg).map_err(Error::from)?;
    m["final_latency"] = json!(outcome.final_latency);
    if let (Some(t), Some(v)) = (target, violation) {
        m["target_ms"] = json!(t);
        m["violation"] = json!(v);
    }
    if cfg.paths.record_wall_time {
        m["wall_s"] = json!(outcome.wall_s);
    }
    let doc = outcome.arch.to_doc(&space, Some(m));
    write_file(
        &arch_path,
        serde_json::to_string_pretty(&doc)
            .map_err(Error::from)?
            .as_bytes(),
    )?;

    let unit = pred.as_ref().map_or("ms", |p| p.metric_kind().unit());
    println!("architecture: {}", outcome.arch.id(&space));
    println!(
        "final predicted latency: {} {unit}",
        fmt(outcome.final_latency, 3)
    );
    if let Some(v) = violation {
        println!("constraint violation: {:.2}%", 100.0 * v);
    }
    println!("wall time: {:.2} s", outcome.wall_s);
    println!(
        "wrote {} and {}",
        arch_path.display(),
        history_path.display()
    );
    if let (Some(t), Some(v)) = (target, violation) {
        if v > MAX_VIOLATION {
            return Err(CliError::TargetMissed(format!(
                "final latency {:.3} misses target {t} by {:.2}% (limit {:.0}%)",
                outcome.final_latency,
                100.0 * v,
                100.0 * MAX_VIOLATION
            )));
        }
    }
    Ok(())
}

pub fn load_arch(path: &Path, space: &ArchSpace) -> Result<(Architecture, ArchitectureDoc)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read architecture {}: {e}", path.display())))?;
    let doc: ArchitectureDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: format!("line {}", e.line()),
        detail: e.to_string(),
    })?;
    Ok((Architecture::from_doc(&doc, space)?, doc))
}

fn report_rows(reports: &[EvalReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            vec![
                r.arch_id.clone(),
                fmt(r.target_ms, 2),
                r.seed.to_string(),
                fmt(r.top1, 4),
                fmt(r.pred_latency_ms, 3),
                fmt(r.meas_latency_ms, 3),
            ]
        })
        .collect()
}

const REPORT_COLUMNS: [&str; 6] = ["arch", "T", "seed", "top1", "pred", "measured"];

pub fn eval(
    cfg: &RunConfig,
    arch: &Path,
    predictor: Option<&Path>,
    out: Option<&Path>,
) -> CmdResult {
    let space = space(cfg);
    let (arch, doc) = load_arch(arch, &space)?;
    let ppath = predictor_path(cfg, predictor);
    let pred = if predictor.is_some() || ppath.is_file() {
        Some(require_predictor(cfg, predictor)?)
    } else {
        None
    };
    let mut dev = device(cfg)?;
    let data = splits(cfg)?;
    let mut report = train_standalone(
        &space,
        &arch,
        &data,
        &cfg.eval,
        pred.as_ref(),
        Some(&mut dev),
    )?;
    if let Some(t) = doc
        .meta
        .as_ref()
        .and_then(|m| m.get("target_ms"))
        .and_then(Value::as_f64)
    {
        report.target_ms = t;
    }
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_path("report.csv"));
    let rows = [report];
    write_csv(cfg, &path, |w| {
        write_reports(w, &rows, cfg.paths.record_wall_time)
    })?;
    println!("{}", table(&REPORT_COLUMNS, &report_rows(&rows)));
    println!(
        "train accuracy {:.4}, wall time {:.2} s",
        rows[0].train_acc, rows[0].wall_s
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn sweep(
    cfg: &RunConfig,
    lambdas: &[f64],
    predictor: Option<&Path>,
    out: Option<&Path>,
    no_eval: bool,
) -> CmdResult {
    let pred = require_predictor(cfg, predictor)?;
    let mut dev = device(cfg)?;
    let data = splits(cfg)?;
    let eval = (!no_eval).then_some(&cfg.eval);
    let rows = sweep_lambda(
        &space(cfg),
        lambdas,
        &cfg.search,
        eval,
        &data,
        &pred,
        Some(&mut dev),
    )?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_path("fig3.csv"));
    write_csv(cfg, &path, |w| write_sweep(w, &rows))?;
    let shown: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.lambda, 3),
                r.arch_id.clone(),
                fmt(r.pred_latency_ms, 3),
                fmt(r.top1, 4),
            ]
        })
        .collect();
    println!("{}", table(&["lambda", "arch", "pred", "top1"], &shown));
    println!("wrote {}", path.display());
    Ok(())
}

/// Five targets at 10%, 30%, 50%, 70% and 90% of the feasible range.
pub fn default_targets(range: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = range;
    [0.1, 0.3, 0.5, 0.7, 0.9]
        .iter()
        .map(|f| ((lo + f * (hi - lo)) * 100.0).round() / 100.0)
        .collect()
}

pub fn multitarget(
    cfg: &RunConfig,
    targets: &[f64],
    seeds: usize,
    predictor: Option<&Path>,
    out: Option<&Path>,
    no_eval: bool,
) -> CmdResult {
    if seeds == 0 {
        return Err(Error::Config("--seeds must be positive".into()).into());
    }
    let pred = require_predictor(cfg, predictor)?;
    let range = feasible_range(cfg)?;
    let targets = if targets.is_empty() {
        default_targets(range)
    } else {
        targets.to_vec()
    };
    for &t in &targets {
        check_feasible(range, t)?;
    }
    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| cfg.search.seed + i).collect();
    let mut dev = device(cfg)?;
    let data = splits(cfg)?;
    let eval = (!no_eval).then_some(&cfg.eval);
    let runs = multi_target_experiment(
        &space(cfg),
        &targets,
        &seed_list,
        &cfg.search,
        eval,
        &data,
        &pred,
        Some(&mut dev),
    )?;

    let reports: Vec<EvalReport> = runs
        .iter()
        .map(|r| {
            r.report.clone().unwrap_or_else(|| EvalReport {
                arch_id: r.arch_id.clone(),
                target_ms: r.target,
                seed: r.seed,
                train_acc: f64::NAN,
                top1: f64::NAN,
                pred_latency_ms: r.final_latency,
                meas_latency_ms: f64::NAN,
                wall_s: f64::NAN,
            })
        })
        .collect();
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.out_path("multitarget.csv"));
    write_csv(cfg, &path, |w| {
        write_reports(w, &reports, cfg.paths.record_wall_time)
    })?;
    let fig7 = path.with_file_name("fig7.csv");
    write_csv(cfg, &fig7, |w| write_traces(w, &runs))?;

    let summaries = summarize(&runs);
    let shown: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                fmt(s.target, 2),
                s.runs.to_string(),
                fmt(100.0 * s.mean_violation, 2),
                fmt(100.0 * s.max_violation, 2),
                fmt(100.0 * s.max_trace_violation, 2),
                fmt(s.mean_top1, 4),
            ]
        })
        .collect();
    println!(
        "{}",
        table(
            &[
                "T",
                "runs",
                "mean_viol%",
                "max_viol%",
                "trace_viol%",
                "top1"
            ],
            &shown
        )
    );
    if !no_eval {
        println!(
            "accuracy non-decreasing in T: {}",
            accuracy_non_decreasing(&summaries)
        );
    }
    println!("wrote {} and {}", path.display(), fig7.display());
    Ok(())
}
