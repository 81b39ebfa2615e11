use std::path::PathBuf;
use std::process::{Command, Output};

fn qsb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsb")).args(args).env("QSB_THREADS", "1").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qsb-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn check_passes_on_clean_build() {
    let o = qsb(&["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("[PASS]")).count(), 7);
}

#[test]
fn quick_theorem_two_reports_trend() {
    let o = qsb(&["theorems", "--which", "2", "--quick"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("N=2") && text.contains("N=4") && !text.contains("N=6"), "{text}");
}

#[test]
fn malformed_polynomial_is_a_config_error() {
    let o = qsb(&["sb1d", "--q", "0.3", "--s", "1", "--t", "0.5", "--poly", "1,,x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot parse"));
    let o = qsb(&["rmt", "--poly", "2*x1.", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stochastic_commands_require_a_seed() {
    assert_eq!(qsb(&["rmt", "--poly", "0,1"]).status.code(), Some(2));
    assert_eq!(qsb(&["mixing", "--q", "0.5", "--poly", "0,1"]).status.code(), Some(2));
}

#[test]
fn exact_outputs() {
    let o = qsb(&["qalg", "--q", "1/2", "--word", "1,2,1,2", "--op", "moment"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["value"], "1/2");
    assert_eq!(v["config"]["subcommand"], "qalg");
    let o = qsb(&["sb1d", "--q", "0.3", "--s", "1", "--t", "0.8", "--poly", "0,0,0,1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["image_poly"]["coeffs"], serde_json::json!(["0", "46/25", "0", "1"]));
}

#[test]
fn rmt_artifacts_are_self_describing_and_reproducible() {
    let csv = scratch("rmt.csv");
    let path = csv.to_str().unwrap();
    let args = ["rmt", "--poly", "0,0,0,1", "--N-list", "2,3", "--samples", "200", "--seed", "9", "--out", path];
    let rows = || -> Vec<Vec<String>> {
        assert_eq!(qsb(&args).status.code(), Some(0));
        let mut r = csv::Reader::from_path(&csv).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["N", "estimate", "stderr", "n_samples", "seconds"]);
        r.records().map(|rec| rec.unwrap().iter().take(4).map(str::to_string).collect()).collect()
    };
    let first = rows();
    assert_eq!(first, rows());
    assert_eq!(first.len(), 2);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["config"]["seed"], 9);
    assert_eq!(side["config"]["subcommand"], "rmt");
    assert_eq!(side["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn mixing_writes_rows_per_sample() {
    let csv = scratch("mixing.csv");
    let o = qsb(&["mixing", "--q", "0.5", "--poly", "0,0,1", "--n-list", "2,4", "--q-samples", "3", "--seed", "4", "--exact", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut r = csv::Reader::from_path(&csv).unwrap();
    let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|row| row[2].parse::<f64>().unwrap() == 0.0));
}
