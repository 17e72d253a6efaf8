use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use nasc_cli::config::RunConfig;
use serde_json::Value;

const CONFIG: &str = r#"{
  "seed": 11,
  "dataset": {"kind": "spirals", "n": 600, "classes": 3, "turns": 1.0, "noise": 0.04},
  "predictor": {"samples": 1200, "mlp": {"epochs": 15}},
  "search": {"epochs": 4, "warmup_epochs": 1},
  "eval": {"epochs": 2}
}"#;

fn nasc(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nasc"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env("NASC_OUT_DIR", out)
        .output()
        .expect("nasc runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A measured device and trained predictor shared by the tests; each test
/// copies it into its own output directory.
fn fixture() -> &'static (tempfile::TempDir, PathBuf, PathBuf) {
    static CELL: OnceLock<(tempfile::TempDir, PathBuf, PathBuf)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("config.json");
        fs::write(&config, CONFIG).unwrap();
        let out = dir.path().join("base");
        assert_eq!(code(&nasc(&config, &out, &["measure"])), 0);
        let o = nasc(&config, &out, &["train-predictor"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (dir, config, out)
    })
}

fn workspace() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let (_, config, base) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    for f in ["measurements.csv", "predictor.json"] {
        fs::copy(base.join(f), out.join(f)).unwrap();
    }
    (dir, config.clone(), out)
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn outputs_carry_seed_and_config_hash() {
    let (_, config, base) = fixture();
    let hash = RunConfig::load(config).unwrap().hash();
    let banner = format!("# seed=11 config_hash={hash}");
    for f in ["measurements.csv", "fig5.csv"] {
        let text = fs::read_to_string(base.join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), banner, "{f}");
    }
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(base.join("predictor.json")).unwrap()).unwrap();
    assert_eq!(doc["meta"]["config_hash"], hash.as_str());
    assert_eq!(doc["meta"]["seed"], 11);
    assert_eq!(data_rows(&base.join("measurements.csv")).len(), 1200);
}

#[test]
fn train_predictor_reports_both_lookup_tables() {
    let (_dir, config, out) = workspace();
    let o = nasc(&config, &out, &["train-predictor", "--kind", "lut"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(
        s.contains("lut (fitted)") && s.contains("lut (isolated benchmarks)"),
        "{s}"
    );
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(out.join("predictor.json")).unwrap()).unwrap();
    assert_eq!(doc["predictor"]["kind"], "lut");
}

#[test]
fn search_then_eval_reproduces_predicted_latency() {
    let (_dir, config, out) = workspace();
    let o = nasc(&config, &out, &["search", "--lambda", "0.02"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(
        s.contains("final predicted latency") && s.contains("wall time"),
        "{s}"
    );
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(out.join("arch.json")).unwrap()).unwrap();
    let searched = doc["meta"]["final_latency"].as_f64().unwrap();
    assert_eq!(data_rows(&out.join("arch.history.csv")).len(), 4);

    let arch = out.join("arch.json");
    let o = nasc(&config, &out, &["eval", "--arch", arch.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out.join("report.csv"));
    assert_eq!(rows.len(), 1);
    let pred: f64 = rows[0].split(',').nth(4).unwrap().parse().unwrap();
    assert_eq!(pred.to_bits(), searched.to_bits());
}

#[test]
fn lambda_zero_ignores_latency() {
    let (_dir, config, out) = workspace();
    assert_eq!(code(&nasc(&config, &out, &["search", "--lambda", "0"])), 0);
    let rows = data_rows(&out.join("arch.history.csv"));
    assert!(
        rows.iter().all(|r| r.split(',').nth(3) == Some("0")),
        "{rows:?}"
    );
}

#[test]
fn target_mode_exit_code_follows_violation() {
    let (_dir, config, out) = workspace();
    let o = nasc(&config, &out, &["search", "--target-ms", "30"]);
    let s = stdout(&o);
    let line = s
        .lines()
        .find(|l| l.starts_with("constraint violation"))
        .unwrap();
    let pct: f64 = line
        .trim_start_matches("constraint violation: ")
        .trim_end_matches('%')
        .parse()
        .unwrap();
    assert_eq!(code(&o), if pct <= 2.0 { 0 } else { 1 }, "{s}");
    assert!(out.join("arch.json").is_file());
}

#[test]
fn sweep_emits_one_row_per_lambda_with_falling_latency() {
    let (_dir, config, out) = workspace();
    let o = nasc(&config, &out, &["sweep", "--no-eval"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out.join("fig3.csv"));
    assert_eq!(rows.len(), 4);
    let lat: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(lat.windows(2).all(|w| w[1] <= w[0]), "{lat:?}");
}

#[test]
fn multitarget_emits_three_runs_per_target() {
    let (_dir, config, out) = workspace();
    let o = nasc(&config, &out, &["multitarget", "--no-eval"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&out.join("multitarget.csv")).len(), 15);
    assert_eq!(data_rows(&out.join("fig7.csv")).len(), 15 * 4);
    assert!(stdout(&o).contains("mean_viol%"));
}

#[test]
fn missing_predictor_is_a_config_error() {
    let (_, config, _) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let o = nasc(config, dir.path(), &["search", "--target-ms", "30"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-predictor"));
}

#[test]
fn infeasible_target_quotes_the_range() {
    let (_dir, config, out) = workspace();
    let o = nasc(&config, &out, &["search", "--target-ms", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("feasible range ["));
}

#[test]
fn exit_codes_separate_config_from_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };
    let out = dir.path().join("out");
    assert_eq!(
        code(&nasc(
            &write("broken.json", "{\"seed\": "),
            &out,
            &["measure"]
        )),
        3
    );
    assert_eq!(
        code(&nasc(
            &write("unknown.json", "{\"sede\": 1}"),
            &out,
            &["measure"]
        )),
        2
    );
    assert_eq!(
        code(&nasc(
            &write("invalid.json", "{\"search\": {\"epochs\": 0}}"),
            &out,
            &["measure"]
        )),
        2
    );
    assert_eq!(
        code(&nasc(&dir.path().join("absent.json"), &out, &["measure"])),
        2
    );

    let ok = write("ok.json", "{}");
    let conflict = nasc(&ok, &out, &["search", "--target-ms", "20", "--lambda", "1"]);
    assert_eq!(code(&conflict), 2);
    let bad_arch = write("arch.json", "{ not json");
    assert_eq!(
        code(&nasc(
            &ok,
            &out,
            &["eval", "--arch", bad_arch.to_str().unwrap()]
        )),
        3
    );
    let bad_csv = write(
        "m.csv",
        "arch_id,encoding,value,metric_kind\nx,1;0,abc,latency\n",
    );
    assert_eq!(
        code(&nasc(
            &ok,
            &out,
            &[
                "train-predictor",
                "--measurements",
                bad_csv.to_str().unwrap()
            ]
        )),
        3
    );
}

#[test]
fn reruns_are_byte_identical() {
    let (_, config, base) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("again");
    assert_eq!(code(&nasc(config, &out, &["measure"])), 0);
    assert_eq!(code(&nasc(config, &out, &["train-predictor"])), 0);
    for f in ["measurements.csv", "predictor.json", "fig5.csv"] {
        assert_eq!(
            fs::read(base.join(f)).unwrap(),
            fs::read(out.join(f)).unwrap(),
            "{f}"
        );
    }
}
