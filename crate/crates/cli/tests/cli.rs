use std::path::Path;
use std::process::{Command, Output};

fn tidewater(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tidewater"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_metrics_and_dumps_that_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.jsonl");
    let dump = dir.path().join("dump");
    let o = tidewater(&[
        "run",
        "--n",
        "5",
        "--f",
        "1",
        "--seeds",
        "0..3",
        "--out",
        path(&out),
        "--dump",
        path(&dump),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().next().unwrap().contains("tidewater-metrics"));
    for f in [
        "seed-0.record.json",
        "seed-0.cells.jsonl",
        "seed-0.decisions.jsonl",
    ] {
        assert!(dump.join(f).exists(), "{f}");
    }
    let o = tidewater(&["verify", path(&dump.join("seed-1.record.json"))]);
    assert!(o.status.success());
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("broadcast-agreement") && !report.contains("FAIL"));
}

#[test]
fn verify_fails_on_a_tampered_record() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump");
    let o = tidewater(&[
        "run",
        "--n",
        "5",
        "--f",
        "1",
        "--seed",
        "2",
        "--dump",
        path(&dump),
        "--out",
        path(&dir.path().join("m")),
    ]);
    assert!(o.status.success());
    let rec_path = dump.join("seed-2.record.json");
    let mut rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&rec_path).unwrap()).unwrap();
    let first = rec["accepts"][0]["records"][0]["digest"].as_u64().unwrap();
    rec["accepts"][0]["records"][0]["digest"] = (first ^ 1).into();
    std::fs::write(&rec_path, rec.to_string()).unwrap();
    let o = tidewater(&["verify", path(&rec_path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .contains("broadcast-agreement          FAIL"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "n = 9\nf = 2\nseeds = 0..5\nadversary = counteract\n").unwrap();
    let out = dir.path().join("m.jsonl");
    let o = tidewater(&[
        "run",
        "--config",
        path(&cfg),
        "--seeds",
        "7",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("\"seed\":7") && text.contains("\"adversary\":\"counteract\""));
}

#[test]
fn invalid_configuration_is_rejected() {
    let o = tidewater(&["run", "--n", "8", "--f", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("f < n/4"));
    let o = tidewater(&["run", "--adversary", "nobody"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_prints_one_row_per_point() {
    let o = tidewater(&[
        "sweep",
        "--seeds",
        "0..2",
        "--vary",
        "m=4,8",
        "--vary",
        "adversary=honest-random,colluding",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn simplified_game_reports_detection() {
    let o = tidewater(&[
        "simplified-game",
        "--n",
        "20",
        "--T",
        "500",
        "--seeds",
        "0..5",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("f=5") && text.contains("detection_rate="));
}

#[test]
fn game_mode_dumps_stats() {
    let dir = tempfile::tempdir().unwrap();
    let o = tidewater(&[
        "run",
        "--mode",
        "game",
        "--adversary",
        "counteract",
        "--m",
        "8",
        "--T",
        "32",
        "--epochs",
        "2",
        "--stop",
        "epochs:2",
        "--dump",
        path(dir.path()),
        "--out",
        path(&dir.path().join("m")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = std::fs::read_to_string(dir.path().join("seed-0.stats.tsv")).unwrap();
    assert!(tsv.lines().count() >= 3);
}
