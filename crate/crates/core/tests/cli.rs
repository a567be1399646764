use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sol-coarse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("solqi-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn unknown_command_prints_usage() {
    let out = run(&["warp-drive"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn validation_errors_exit_2_and_name_the_parameter() {
    for (args, name) in [
        (vec!["coarse-diff", "--seed", "1", "--theta", "1.5"], "theta"),
        (vec!["coarse-diff", "--seed", "1", "--r0", "1", "--C", "1"], "ladder floor"),
        (vec!["lemma-sweep", "efficient", "--K", "2", "--C", "1", "--traces", "2", "--seed", "1", "--eps", "0"], "eps"),
        (vec!["lemma-sweep", "scales", "--K", "0.5", "--C", "1", "--traces", "2", "--seed", "1"], "K"),
        (vec!["dl-box", "--m", "3", "--n", "3", "--L", "9", "--enumerate"], "L"),
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(name), "{args:?}");
    }
    // a missing seed on a stochastic command is a usage error of the flags
    assert_eq!(run(&["qi-detect"]).status.code(), Some(2));
}

#[test]
fn documented_examples() {
    let v = json(&run(&["sol-distance", "--p", "0,0,0", "--q", "0,0,7"]));
    assert_eq!((v["result"]["lower"].as_f64(), v["result"]["upper"].as_f64()), (Some(7.0), Some(7.0)));
    let v = json(&run(&["dl-box", "--m", "3", "--n", "2", "--L", "3"]));
    assert_eq!((v["result"]["size"].as_u64(), v["result"]["boundary"].as_u64()), (Some(2059), Some(793)));
    let v = json(&run(&["dl-box", "--m", "3", "--n", "2", "--L", "3", "--enumerate"]));
    assert_eq!(v["result"]["size"], 2059);
    let out = run(&["lemma-sweep", "scales", "--K", "2", "--C", "1", "--eps", "0.1", "--traces", "100", "--seed", "7"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(rows.next(), Some("trace,kind,K_est,C_est,sum_delta,bound,holds"));
    let rows: Vec<&str> = rows.collect();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
}

#[test]
fn reports_echo_parameters_and_replay_identically() {
    let args = ["qi-detect", "--seed", "4", "--flip", "--C", "0.5", "--tiles", "12", "--probes", "300"];
    let a = bin().args(args).env("SOLQI_THREADS", "1").output().unwrap();
    let b = bin().args(args).env("SOLQI_THREADS", "3").output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["params"]["seed"], 4);
    assert_eq!(v["params"]["flip"], true);
    assert_eq!(v["params"]["tiles"], 12);
    assert_eq!(v["result"]["fit"]["map"]["flip"], true);
    assert!(v["result"]["reconciliation_note"].as_str().unwrap().contains("empirical"));

    let sweep = ["lemma-sweep", "subdivision", "--K", "3", "--C", "2", "--traces", "8", "--seed", "2"];
    let a = bin().args(sweep).env("SOLQI_THREADS", "1").output().unwrap();
    let b = bin().args(sweep).env("SOLQI_THREADS", "2").output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_supplies_defaults_and_flags_win() {
    let dir = scratch("config");
    let cfg = dir.join("detect.cfg");
    std::fs::write(&cfg, "# detector run\nseed = 9\nC = 2\ntiles = 8\nprobes = 200\nflip = true\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let v = json(&run(&["qi-detect", "--config", cfg, "--C", "0.5"]));
    assert_eq!(v["params"]["seed"], 9);
    assert_eq!(v["params"]["C"], 0.5);
    assert_eq!(v["params"]["flip"], true);
    assert_eq!(v["params"]["tiles"], 8);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn traces_round_trip_through_trace_analyze() {
    let dir = scratch("traces");
    let traces = dir.join("family.jsonl");
    let t = traces.to_str().unwrap();
    let out = run(&["lemma-sweep", "efficient", "--K", "3", "--C", "2", "--traces", "4", "--seed", "3", "--save-traces", t]);
    assert!(out.status.success());
    let sweep = String::from_utf8(out.stdout).unwrap();
    let report = dir.join("analysis.json");
    let out = run(&["trace-analyze", "--input", t, "--out", report.to_str().unwrap()]);
    assert!(out.status.success() && out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let analyzed = v["result"]["traces"].as_array().unwrap();
    assert_eq!(analyzed.len(), 4);
    // the estimated constants survive the file format
    for (row, tr) in sweep.lines().filter(|l| !l.starts_with('#')).skip(1).zip(analyzed) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[2].parse::<f64>().unwrap(), tr["constants"]["K"].as_f64().unwrap());
        assert_eq!(cols[3].parse::<f64>().unwrap(), tr["constants"]["C"].as_f64().unwrap());
    }
    // coarse-diff accepts the same file
    let out = run(&["coarse-diff", "--seed", "0", "--input", t, "--C", "0.1", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let out = run(&["sol-folner", "--out", "/nonexistent-dir/x/report.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn csv_reports_carry_metadata() {
    let out = run(&["sol-folner", "--L", "4,8", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema_version=1");
    assert_eq!(lines[1], "# command=sol-folner");
    assert!(lines[2].starts_with("# params={"));
    assert_eq!(lines[3], "L,volume,boundary,ratio");
    assert_eq!(lines.len(), 6);
}
