use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridwelfare"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn toy_day_welfare_matches_hand_value() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("toy.json");
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(out.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    // slot 0 at price 2: U(2) - cost(2) = 8 - 1; slot 1 at price 0.5: U(4) - cost(4) = 12 - 3
    assert_eq!(summary["runs"][0]["welfare"].as_f64(), Some(16.0));
    assert_eq!(summary["runs"][0]["max_queue"].as_f64(), Some(2.0));
    let rows = fs::read_to_string(out.path().join("run_10.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn sweep_is_reproducible_and_has_one_row_per_eta() {
    let cfg = configs().join("example.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = run(&[
            "sweep", "--config", s(&cfg), "--out", s(dir.path()), "--days", "30", "--eta", "5,10,20,40", "--seed", "9",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["run_5.csv", "run_10.csv", "run_20.csv", "run_40.csv", "sweep.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let sweep = fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (qi, bi) = (
        header.iter().position(|h| *h == "max_queue").unwrap(),
        header.iter().position(|h| *h == "bound").unwrap(),
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').take(bi + 1).map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[qi] <= r[bi]));
}

#[test]
fn seed_changes_the_run() {
    let cfg = configs().join("example.json");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        let o = run(&["simulate", "--config", s(&cfg), "--out", s(dir.path()), "--days", "5", "--eta", "20", "--seed", seed]);
        assert_eq!(code(&o), 0);
    }
    assert_ne!(fs::read(a.path().join("run_20.csv")).unwrap(), fs::read(b.path().join("run_20.csv")).unwrap());
}

#[test]
fn simulate_rejects_eta_lists() {
    let cfg = configs().join("example.json");
    let out = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(out.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn validate_reports_and_sets_exit_code() {
    let o = run(&["validate", "--config", s(&configs().join("example.json"))]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["ok"], true);
    assert_eq!(r["bounds"].as_array().unwrap().len(), 4);
    assert!(r["gamma_measured"].as_f64().unwrap() >= 1.0);

    let dir = tempfile::tempdir().unwrap();
    let mut bad: Value = serde_json::from_str(&fs::read_to_string(configs().join("toy.json")).unwrap()).unwrap();
    bad["users"][0]["l_av"] = 1.0.into();
    let p = dir.path().join("bad.json");
    fs::write(&p, bad.to_string()).unwrap();
    let o = run(&["validate", "--config", s(&p)]);
    assert_eq!(code(&o), 1);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["users"][0]["load_condition"], false);

    let o = run(&["validate", "--config", s(&configs().join("toy.json")), "--market", "markov"]);
    assert_eq!(code(&o), 1);
    let o = run(&["simulate", "--config", s(&dir.path().join("missing.json"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn per_user_pricing_runs() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--config",
        s(&configs().join("example.json")),
        "--out",
        s(out.path()),
        "--days",
        "3",
        "--eta",
        "20",
        "--pricing",
        "per-user",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(out.path().join("run_20.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 24);
}

#[test]
fn oracle_writes_report() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["oracle", "--config", s(&configs().join("toy.json")), "--out", s(out.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("certified\ttrue"), "{stdout}");
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(rep["outcome"]["status"], "optimal");
    // the day-welfare maximizer already meets l_av = 2 in both slots
    assert_eq!(rep["outcome"]["value"].as_f64(), Some(16.0));
    assert_eq!(rep["posp"]["posp"].as_f64(), Some(0.0));
}

#[test]
fn ingest_round_trips_into_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = configs().join("data");
    let out = dir.path().join("ingested");
    let prices = format!(
        "{},{}",
        s(&data.join("prices/month_01.csv")),
        s(&data.join("prices/month_07.csv"))
    );
    let o = run(&[
        "ingest", "--prices", &prices, "--wind", s(&data.join("wind.csv")), "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("2 states"));
    let market: Value = serde_json::from_str(&fs::read_to_string(out.join("market.json")).unwrap()).unwrap();
    assert_eq!(market["states"].as_array().unwrap().len(), 2);
    assert_eq!(market["mode"]["probabilities"], serde_json::json!([0.5, 0.5]));

    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(configs().join("example.json")).unwrap()).unwrap();
    cfg["renewable"] = serde_json::json!({ "dump": s(&out.join("renewable.csv")) });
    cfg["market"] = serde_json::json!({ "states": market["states"] });
    let p = dir.path().join("cfg.json");
    fs::write(&p, cfg.to_string()).unwrap();
    let o = run(&["validate", "--config", s(&p)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn ingest_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.csv");
    fs::write(&p, "hour,dayahead,realtime\n0,1,2\n1,oops,2\n").unwrap();
    let o = run(&["ingest", "--slots", "2", "--prices", s(&p), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("broken.csv:3"), "{err}");
}
