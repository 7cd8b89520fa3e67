use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn mtgw(args: &[&str], threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mtgw"));
    c.args(args);
    match threads {
        Some(t) => c.env("MTGW_THREADS", t),
        None => c.env_remove("MTGW_THREADS"),
    };
    c.output().expect("binary runs")
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).expect("stderr is one JSON object")
}

#[test]
fn llt_reports_the_e1_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("llt.json");
    let model = models().join("e1.json");
    let o = mtgw(&["llt", "--model", model.to_str().unwrap(), "--n", "2001", "--report", report.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!((r["a"].as_u64(), r["D"].as_u64(), r["m"].as_u64(), r["d"].as_u64()), (Some(1), Some(1), Some(2), Some(2)));
    assert_eq!(r["mu_exact"], "4/5");
    assert_eq!(r["sigma2_exact"], "8/125");
    assert!((r["tail_ratio"].as_f64().unwrap() - 1.0).abs() < 0.1);
}

#[test]
fn fringe_is_reproducible_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let model = models().join("e1.json");
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = mtgw(
            &[
                "fringe", "--model", model.to_str().unwrap(), "--condition", "total=301", "--kappa", "1", "--h", "1",
                "--draws", "30", "--seed", "7", "--out", out.to_str().unwrap(),
            ],
            Some(threads),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    assert_eq!(a, run("b.csv", "1"));
    assert_eq!(a, run("c.csv", "2"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("key,empirical,target,abs_err\n"));
}

#[test]
fn sample_honours_the_size_condition() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let model = models().join("alternating.json");
    let o = mtgw(
        &["sample", "--model", model.to_str().unwrap(), "--condition", "total=21", "--count", "25", "--seed", "42", "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 25);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["size"], 21);
        assert_eq!(v["tree"]["types"].as_array().unwrap().len(), 21);
    }
}

#[test]
fn malformed_model_exits_with_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("sum.json", r#"{"types":[1],"offspring":{"1":[{"counts":{},"prob":"1/3"}]}}"#),
        ("syntax.json", r#"{"types":[1],"offspring":"#),
        ("field.json", r#"{"types":[1],"offspring":{"1":[{"counts":{},"prob":"1"}]},"extra":0}"#),
    ];
    for (name, body) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        let o = mtgw(&["sample", "--model", path.to_str().unwrap(), "--seed", "1"], None);
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert_eq!(stderr_json(&o)["error"], "config", "{name}");
    }
}

#[test]
fn bad_arguments_exit_with_a_config_error() {
    let model = models().join("e1.json");
    let m = model.to_str().unwrap();
    for args in [
        vec!["sample", "--model", m],
        vec!["sample", "--model", m, "--seed", "1", "--condition", "size~3"],
        vec!["map-sample", "--seed", "1", "--unit", "faces"],
        vec!["suite", "--only", "14"],
    ] {
        let o = mtgw(&args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&o)["error"], "config");
    }
    let o = mtgw(&["llt", "--model", m, "--n", "3"], Some("many"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn map_sample_writes_consistent_maps_and_gates_on_distance() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps.jsonl");
    let balls = dir.path().join("balls.csv");
    let o = mtgw(
        &[
            "map-sample", "--n", "12", "--draws", "10", "--radius", "1", "--seed", "3", "--tol", "1.5",
            "--out", balls.to_str().unwrap(), "--maps", maps.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&maps).unwrap();
    assert_eq!(text.lines().count(), 10);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["edges"], 12);
        let (vs, es, fs) = (v["vertices"].as_i64().unwrap(), v["edges"].as_i64().unwrap(), v["faces"].as_i64().unwrap());
        assert_eq!(vs - es + fs, 2);
        assert_eq!(v["rotation"].as_array().unwrap().len(), 24);
    }
    let table = std::fs::read_to_string(&balls).unwrap();
    assert!(table.starts_with("ball,first_half,second_half,abs_diff\n"));
    // A tolerance no distance can meet fails the gate with exit code 1.
    let o = mtgw(&["map-sample", "--n", "12", "--draws", "10", "--seed", "3", "--tol", "1e-9"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn suite_writes_the_fixed_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("suite.csv");
    let o = mtgw(&["suite", "--quick", "--only", "1,2,9", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let mut r = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["id", "name", "passed", "value", "threshold", "draws", "stderr", "runtime_s", "runtime_limit_s", "detail"]
    );
    assert_eq!(r.records().count(), 3);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().filter(|l| l.contains(" PASS ")).count(), 3);
}
