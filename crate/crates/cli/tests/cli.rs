use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaussmetric"))
        .args(args)
        .current_dir(dir)
        .env_remove("GAUSSMETRIC_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v.clone()).unwrap()
}

const VACUUM: &str = r#"
[channel]
[[channel.modes]]
gamma = 0.3
n = 1.0

[probe]
kind = "vacuum"
"#;

const WEAK_DAMPING: &str = r#"
budget = 0.2
seed = 11
params = ["gamma[0]", "N[0]"]

[channel]
[[channel.modes]]
gamma = 0.1
n = 1.0

[sampling]
rounds = 50
batch = 20
"#;

#[test]
fn vacuum_number_information() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "q.toml", VACUUM);
    let out = gm(&["qfi", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["labels"][1], "N[0]");
    let nbar = 1.0 - (-0.3f64).exp();
    let expect = nbar * nbar / (nbar * (nbar + 1.0));
    let got = matrix(&r["qfi"])[1][1];
    assert!((got - expect).abs() <= 1e-6 * expect, "{got} vs {expect}");
    assert_eq!(r["slds"].as_array().unwrap().len(), 4);
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn identity_channel_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "q.toml", &VACUUM.replace("gamma = 0.3", "gamma = 0.0"));
    let out = gm(&["qfi", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    for row in matrix(&r["qfi"]) {
        assert!(row.iter().all(|v| v.is_finite()));
    }
    // nothing reaches the output at γ = 0
    assert_eq!(matrix(&r["qfi"])[1][1], 0.0);
}

#[test]
fn slds_have_zero_mean() {
    let dir = tempfile::tempdir().unwrap();
    let text = VACUUM.replace("kind = \"vacuum\"", "kind = \"coherent\"\nre = 0.4\nim = -0.2");
    let cfg = write(dir.path(), "s.toml", &text);
    let out = gm(&["sld", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    let cov = matrix(&r["output_cov"]);
    for f in r["slds"].as_array().unwrap() {
        let q = matrix(&f["quadratic"]);
        let tr: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| q[i][j] * cov[j][i]).sum();
        assert!((f["constant"].as_f64().unwrap() + tr).abs() < 1e-10);
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (VACUUM.replace("n = 1.0", "n = -1.0"), "N >= 0"),
        (format!("{VACUUM}\ncolour = 1\n"), "unknown field"),
        (format!("task = \"metric\"\n{VACUUM}"), "subcommand"),
        (VACUUM.replace("kind = \"vacuum\"", "kind = \"thermal\"\nnbar = [1.0, 2.0]"), "2 entries"),
        (format!("budget = 0.1\n{VACUUM}").replace("kind = \"vacuum\"", "kind = \"coherent\"\nre = 1.0\nim = 0.0"), "budget"),
        (format!("params = [\"gamma[3]\"]\n{VACUUM}"), "does not exist"),
    ];
    for (k, (text, needle)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{k}.toml"), text);
        let out = gm(&["qfi", "--config", &cfg], dir.path());
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "{err}");
        assert!(err.contains(needle), "{needle:?} not in {err}");
    }
    let out = gm(&["qfi", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_3_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    // the output is the pure bath vacuum whatever the probe
    let cfg = write(dir.path(), "n.toml", &VACUUM.replace("gamma = 0.3\nn = 1.0", "gamma = 50.0\nn = 0.0"));
    let out = gm(&["qfi", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error"]["kind"], "SingularPureMode");
    assert!(out.stdout.is_empty());
}

#[test]
fn one_sample_metric_is_that_sample() {
    let dir = tempfile::tempdir().unwrap();
    let text = WEAK_DAMPING.replace("rounds = 50", "rounds = 1").replace("batch = 20", "batch = 1");
    let cfg = write(dir.path(), "m.toml", &text);
    let out = gm(&["metric", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    let m = matrix(&r["metric"]);
    let j = matrix(&r["samples"][0]["qfi"]);
    let eps = r["eps_reg"].as_f64().unwrap();
    for a in 0..2 {
        for b in 0..2 {
            let expect = j[a][b] + if a == b { eps } else { 0.0 };
            assert!((m[a][b] - expect).abs() <= 1e-9 * (1.0 + j[0][0].abs()));
        }
    }
}

#[test]
fn metric_contains_samples_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.toml", &format!("{WEAK_DAMPING}holdout = 40\n"));
    let a = gm(&["metric", "--config", &cfg, "--out", "a.json"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let mut b = Command::new(env!("CARGO_BIN_EXE_gaussmetric"));
    let b = b.args(["metric", "--config", &cfg, "--out", "b.json"]).current_dir(dir.path()).env("GAUSSMETRIC_THREADS", "1");
    assert_eq!(b.output().unwrap().status.code(), Some(0));
    let (ta, tb) = (std::fs::read(dir.path().join("a.json")).unwrap(), std::fs::read(dir.path().join("b.json")).unwrap());
    assert_eq!(ta, tb);
    let r: Value = serde_json::from_slice(&ta).unwrap();
    let dets: Vec<f64> = r["trace"].as_array().unwrap().iter().map(|e| e["det"].as_f64().unwrap()).collect();
    assert!(dets.windows(2).all(|w| w[1] >= w[0]));
    for s in r["samples"].as_array().unwrap() {
        let j = matrix(&s["qfi"]);
        let norm = j.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!(s["containment"].as_f64().unwrap() <= 1e-8 * norm);
        assert!(s["qfi_inverse"].is_array() || s["qfi_inverse"].is_null());
    }
    assert!(r["metric_inverse"].is_array());
    assert!(r["holdout"]["max_violation_relative"].as_f64().unwrap() <= 5e-2);
    let other = gm(&["metric", "--config", &cfg, "--seed", "12"], dir.path());
    assert_ne!(json(&other)["config_hash"], r["config_hash"]);
}

#[test]
fn cache_resume_skips_cached_samples() {
    let dir = tempfile::tempdir().unwrap();
    // rel_tol = 0 keeps every round, so the resumed run must extend the cache
    let full = WEAK_DAMPING.replace("rounds = 50", "rounds = 4").replace("batch = 20", "batch = 5") + "rel_tol = 0.0\n";
    let short = full.replace("rounds = 4", "rounds = 2");
    let (full, short) = (write(dir.path(), "full.toml", &full), write(dir.path(), "short.toml", &short));
    let plain = json(&gm(&["metric", "--config", &full], dir.path()));
    let first = gm(&["metric", "--config", &short, "--cache", "c.bin"], dir.path());
    assert_eq!(first.status.code(), Some(0));
    let size_short = std::fs::metadata(dir.path().join("c.bin")).unwrap().len();
    let resumed = json(&gm(&["metric", "--config", &full, "--cache", "c.bin"], dir.path()));
    assert_eq!(resumed["cache"]["records_before"], 10);
    assert_eq!(resumed["cache"]["reused"], 10);
    assert_eq!(resumed["trace"], plain["trace"]);
    let (a, b) = (matrix(&resumed["metric"]), matrix(&plain["metric"]));
    for i in 0..2 {
        for k in 0..2 {
            assert!((a[i][k] - b[i][k]).abs() <= 1e-12 * b[0][0].abs());
        }
    }
    let size_full = std::fs::metadata(dir.path().join("c.bin")).unwrap().len();
    // ten new fixed-width records: counter, two flags, 3 weights, 2 phases, 2x2 QFI
    assert_eq!(size_full - size_short, 10 * (8 + 2 + 8 * (3 + 2 + 4)));
    let again = json(&gm(&["metric", "--config", &full, "--cache", "c.bin"], dir.path()));
    assert_eq!(again["cache"]["reused"], 20);
    assert_eq!(std::fs::metadata(dir.path().join("c.bin")).unwrap().len(), size_full);

    let other = gm(&["metric", "--config", &full, "--cache", "c.bin", "--seed", "3"], dir.path());
    assert_eq!(other.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&other.stderr).contains("header mismatch"));
}

const SMALL_CUTOFF: &str = r#"
budget = 1.0
[channel]
ancilla_count = 1
[[channel.modes]]
gamma = 0.2
n = 0.5
[probe]
kind = "two_mode_squeezed"
r = 0.881373587019543
[oracle]
cutoff = 4
"#;

#[test]
fn oracle_check_reports_small_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.toml", SMALL_CUTOFF);
    let mut verdicts = Vec::new();
    for seed in ["1", "2"] {
        let out = gm(&["oracle-check", "--config", &cfg, "--seed", seed], dir.path());
        assert_eq!(out.status.code(), Some(4));
        let r = json(&out);
        assert_eq!(r["cases"][0]["error"]["kind"], "CutoffTooSmall");
        verdicts.push(r["cases"].clone());
    }
    assert_eq!(verdicts[0], verdicts[1]);
    let big = write(dir.path(), "big.toml", &SMALL_CUTOFF.replace("cutoff = 4", "cutoff = 41"));
    assert_eq!(gm(&["oracle-check", "--config", &big], dir.path()).status.code(), Some(2));
}

#[test]
fn oracle_check_passes_on_a_small_instance() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_CUTOFF.replace("r = 0.881373587019543", "r = 0.3").replace("cutoff = 4", "cutoff = 20");
    let cfg = write(dir.path(), "o.toml", &text);
    let out = gm(&["oracle-check", "--config", &cfg], dir.path());
    let r = json(&out);
    assert_eq!(out.status.code(), Some(0), "{r}");
    assert_eq!(r["pass"], true);
    assert_eq!(r["cases"][0]["checks"].as_array().unwrap().len(), 3);
}
