use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn roommates(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roommates"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const NO_STABLE: &str = "4\n1: 2 3 4\n2: 3 1 4\n3: 1 2 4\n4: 1 2 3\n";
const PARTNERS_FIRST: &str = "4\n1: 2 3 4\n2: 1 3 4\n3: 4 1 2\n4: 3 1 2\n";

#[test]
fn solve_reports_existence() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_stdout(&roommates(&["solve", &write(dir.path(), "a.txt", NO_STABLE)]));
    assert_eq!(v["exists"], false);
    assert!(v["matching"].is_null());
    let v = json_stdout(&roommates(&["solve", &write(dir.path(), "b.txt", PARTNERS_FIRST)]));
    assert_eq!(v["exists"], true);
    assert_eq!(v["matching"], "1-2 3-4");
}

#[test]
fn census_instance_lists_stable_matchings() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "b.txt", PARTNERS_FIRST);
    let v = json_stdout(&roommates(&["census-instance", &f, "--reference", "1-2 3-4"]));
    assert_eq!(v["x"], 1);
    assert_eq!(v["stable"][0], "1-2 3-4");
    assert_eq!(v["per_distance"][0]["cycles"], 0);
}

#[test]
fn counts_and_tstar() {
    let v = json_stdout(&roommates(&["counts", "--n", "8"]));
    assert_eq!(v["perfect_matchings"]["exact"], "105");
    assert_eq!(v["single_cycle"][0]["count"]["exact"], "12");
    let v = json_stdout(&roommates(&["tstar"]));
    let s = v["closed_form"]["s"].as_f64().unwrap();
    assert!((s - 0.9852).abs() < 1e-4);
    assert!(v["grid"].is_null());
}

#[test]
fn estimate_subcommands() {
    let v = json_stdout(&roommates(&["estimate", "ex", "--n", "10", "--samples", "2000", "--seed", "1"]));
    let m = v["estimate"]["mean"].as_f64().unwrap();
    assert!(m > 1.0 && m < 1.5);
    let v = json_stdout(&roommates(&[
        "estimate", "two-point", "--n", "30", "--cycles", "2", "--samples", "1000",
    ]));
    assert_eq!(v["estimate"]["mu"], 1);
    let v = json_stdout(&roommates(&["estimate", "gpi", "--n", "50", "--samples", "1000"]));
    assert!(v["frequency"]["all"]["mean"].as_f64().is_some());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(roommates(&["scaling", "--n", "5"]).status.code(), Some(2));
    assert_eq!(roommates(&["census", "--n", "6", "--nu-cap", "4"]).status.code(), Some(2));
    assert_eq!(roommates(&["solve", "/no/such/file"]).status.code(), Some(4));
    let bad = write(dir.path(), "bad.txt", "4\n1: 2 3 4\n2: 1 3\n");
    assert_eq!(roommates(&["solve", &bad]).status.code(), Some(2));
    let big: String = {
        let n = 22;
        let mut s = format!("{n}\n");
        for i in 1..=n {
            let row: Vec<String> = (1..=n).filter(|&j| j != i).map(|j| j.to_string()).collect();
            s += &format!("{i}: {}\n", row.join(" "));
        }
        s
    };
    let big = write(dir.path(), "big.txt", &big);
    assert_eq!(roommates(&["census-instance", &big]).status.code(), Some(3));
    let cfg = write(dir.path(), "c.json", r#"{"kind": "census", "n_grid": [8]}"#);
    assert_eq!(roommates(&["scaling", "--config", &cfg]).status.code(), Some(2));
    let cfg = write(dir.path(), "d.json", "{not json");
    assert_eq!(roommates(&["scaling", "--config", &cfg]).status.code(), Some(2));
    let out = dir.path().join("missing/dir/out.csv");
    let out = out.to_str().unwrap();
    assert_eq!(roommates(&["scaling", "--n", "6", "--replicates", "10", "--output", out]).status.code(), Some(4));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"n_grid": [6, 8], "replicates": 50, "master_seed": 3}"#);
    let a = roommates(&["scaling", "--config", &cfg]);
    let b = roommates(&["scaling", "--config", &cfg, "--replicates", "70"]);
    assert!(a.status.success() && b.status.success());
    let a = String::from_utf8(a.stdout).unwrap();
    let b = String::from_utf8(b.stdout).unwrap();
    assert!(a.lines().nth(2).unwrap().starts_with("6,50,"));
    assert!(b.lines().nth(2).unwrap().starts_with("6,70,"));
}

#[test]
fn experiments_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["scaling", "--n", "6,10,20", "--replicates", "300"],
        &["census", "--n", "8,12", "--replicates", "200", "--nu-cap", "3"],
        &["ex-scaling", "--n", "10,30", "--samples", "2000"],
    ];
    for (k, args) in runs.iter().enumerate() {
        let mut texts = Vec::new();
        for (w, workers) in ["1", "3", "1"].iter().enumerate() {
            let out = dir.path().join(format!("run{k}_{w}.csv"));
            let out = out.to_str().unwrap().to_string();
            let mut full: Vec<&str> = args.to_vec();
            full.extend(["--seed", "11", "--workers", workers, "--output", &out]);
            let o = roommates(&full);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            texts.push(std::fs::read(&out).unwrap());
            let side = Path::new(&out).with_extension("json");
            let v: Value = serde_json::from_slice(&std::fs::read(side).unwrap()).unwrap();
            assert_eq!(v["master_seed"], 11);
        }
        assert_eq!(texts[0], texts[1], "{args:?}");
        assert_eq!(texts[0], texts[2], "{args:?}");
    }
}
