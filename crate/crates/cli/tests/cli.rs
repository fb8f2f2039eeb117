use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn liplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liplab")).args(args).env_remove("LIPLAB_THREADS").output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TWO_VS_FIVE: &str = r#"{"d":2,"hidden_widths":[3],
 "weights":[[[1,-1],[-1,1],[2,-1]],[[-1,1,1]]],
 "biases":[[0,0,0],[0]]}"#;

#[test]
fn gen_then_lip_exact() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    let out = liplab(&["gen", "--d", "2", "--N", "3", "--L", "1", "--bias", "zero", "--seed", "1", "--out", p(&net)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = liplab(&["lip-exact", "--net", p(&net)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["lip"].as_f64().unwrap() >= 0.0);
}

#[test]
fn gen_is_deterministic_and_rereads_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = liplab(&["gen", "--d", "3", "--N", "5", "--L", "2", "--bias", "gaussian:0.7", "--seed", "42", "--out", p(path)]);
        assert!(out.status.success());
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let reparsed: liplab_net_check::Net = serde_json::from_str(&text).unwrap();
    assert_eq!(reparsed.hidden_widths, vec![5, 5]);

    // eval does not modify its input, and gradients agree with the core library.
    let before = fs::read(&a).unwrap();
    let out = liplab(&["eval", "--net", p(&a), "--x", "0.3,-1,2"]);
    assert!(out.status.success());
    assert!(json(&out)["value"].is_number());
    let out = liplab(&["grad", "--net", p(&a), "--x", "[0.3,-1,2]"]);
    assert_eq!(json(&out)["gradient"].as_array().unwrap().len(), 3);
    assert_eq!(before, fs::read(&a).unwrap());
}

mod liplab_net_check {
    #[derive(serde::Deserialize)]
    #[allow(dead_code)]
    pub struct Net {
        pub d: usize,
        pub hidden_widths: Vec<usize>,
        pub weights: Vec<Vec<Vec<f64>>>,
        pub biases: Vec<Vec<f64>>,
    }
}

#[test]
fn worked_example_values() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    fs::write(&net, TWO_VS_FIVE).unwrap();
    let v = json(&liplab(&["lip-exact", "--net", p(&net), "--sup-all", "--regions"]));
    assert!((v["lip"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!((v["sup_all_patterns"].as_f64().unwrap() - 5f64.sqrt()).abs() < 1e-12);
    assert_eq!(v["regions"].as_array().unwrap().len(), 4);

    let v = json(&liplab(&["grad", "--net", p(&net), "--x", "2,0"]));
    assert_eq!(v["gradient"], serde_json::json!([1.0, 0.0]));
    assert_eq!(v["differentiable"], true);

    let v = json(&liplab(&["lip-estimate", "--net", p(&net), "--samples", "2000", "--hill-climb", "5", "--seed", "7"]));
    assert!((v["lower_bound"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!(v["method_breakdown"]["sampled"].is_object());
}

#[test]
fn counterexamples_print_four_pass_lines() {
    let out = liplab(&["counterexamples"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);
    assert!(!text.contains("FAIL"));
}

#[test]
fn bounds_shallow_upper_default_constant() {
    let v = json(&liplab(&["bounds", "--which", "shallow-upper", "--d", "16", "--N", "64"]));
    assert!((v["value"].as_f64().unwrap() - 6.0).abs() < 1e-12);
    assert_eq!(v["constants"]["c_upper"], 1.0);

    let v = json(&liplab(&["bounds", "--which", "deep-upper", "--d", "3", "--N", "64", "--L", "2", "--u", "1.73", "--t", "8", "--C", "2"]));
    assert!(v["value"].as_f64().unwrap() > 0.0);
    let p = v["prob_lower_bound"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn precondition_errors_are_config_errors() {
    let out = liplab(&["bounds", "--which", "deep-upper", "--d", "62", "--N", "64", "--L", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("N > d + 2"));
    let out = liplab(&["bounds", "--which", "covering-shallow", "--norm-w0", "1", "--k", "1", "--eps", "9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(liplab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(liplab(&["gen", "--d", "2"]).status.code(), Some(2));
    assert_eq!(liplab(&["gen", "--d", "2", "--N", "3", "--L", "1", "--bias", "laplace:1"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"d": 2, "N": 3, "L": 1, "colour": "blue"}"#).unwrap();
    let out = liplab(&["gen", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let out = liplab(&["experiment", "no_such_thing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn explicit_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"d": 5, "N": 3, "L": 1, "seed": 4}"#).unwrap();
    let v = json(&liplab(&["gen", "--config", p(&cfg), "--d", "2"]));
    assert_eq!(v["d"], 2);
    assert_eq!(v["hidden_widths"], serde_json::json!([3]));
}

#[test]
fn budget_exhaustion_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    assert!(liplab(&["gen", "--d", "3", "--N", "12", "--L", "2", "--bias", "gaussian:1", "--seed", "3", "--out", p(&net)]).status.success());
    let out = liplab(&["lip-exact", "--net", p(&net), "--budget-lps", "5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    // A threshold no run can meet.
    fs::write(&cfg, r#"{"d": 2, "N": 16, "L": 1, "trials": 5, "min_frequency": 1.5}"#).unwrap();
    let out = liplab(&["experiment", "deep-lower-event", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn experiment_rows_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(&cfg, r#"{"ds": [2, 3], "N": 12, "trials": 6, "samples": 3000}"#).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = liplab(&["--threads", threads, "experiment", "scaling_shallow", "--config", p(&cfg), "--out", p(&out_dir)]);
        assert!(out.status.code().unwrap() <= 1, "{}", String::from_utf8_lossy(&out.stderr));
        let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["experiment"], "scaling_shallow");
        outputs.push(fs::read(out_dir.join("rows.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let header = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(header.starts_with("experiment,trial,d,N,L,seed,quantity,value\n"));
}

#[test]
fn threads_env_fallback_is_accepted() {
    let out = Command::new(env!("CARGO_BIN_EXE_liplab")).args(["counterexamples"]).env("LIPLAB_THREADS", "2").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
