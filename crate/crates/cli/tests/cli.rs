// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use trace_core::archive::write_trajectory_archive;
use trace_core::model::{ArchiveItem, CandidateTrajectory, ModelWeightStats};

fn trace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trace")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Deterministic item: `n` candidates, `L = 10`, low-confidence base on odd ids.
fn item(k: usize) -> ArchiveItem {
    let n = 2 + k % 3;
    let l = 10;
    let mut scores = Vec::with_capacity(n * (l + 1));
    for i in 0..n {
        for d in 0..=l {
            let wobble = ((k * 31 + i * 7 + d * 3) % 11) as f64 / 10.0;
            let level = if k % 2 == 1 { -1.6 } else { -0.4 };
            scores.push(level - 0.3 * i as f64 * (d as f64 / l as f64) - 0.2 * wobble);
        }
    }
    ArchiveItem::new(CandidateTrajectory {
        item_id: format!("q{k:03}"),
        benchmark_id: ["truthfulqa", "halueval_qa"][k % 2].into(),
        n,
        depth: l,
        scores,
        candidate_texts: (0..n).map(|i| format!("answer {i}")).collect(),
        candidate_token_counts: vec![1; n],
        truthful_indices: Some(vec![(k / 2) % n]),
    })
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self { dir: tempfile::tempdir().unwrap() };
        let items: Vec<ArchiveItem> = (0..40).map(item).collect();
        write_trajectory_archive(&items, &ws.path("items.jsonl")).unwrap();
        let stats = ModelWeightStats {
            model_id: "tiny".into(),
            depth: 10,
            vocab_size: 1000,
            row_norms_k_e: vec![1.0, 2.0, 3.0],
            row_norms_v_e: vec![1.0, 1.2, 1.4],
            row_norms_v_m: vec![1.0, 1.5, 2.0],
            row_norms_o_m: vec![0.5, 1.0, 1.5],
            final_norm_l1: 2.0,
            final_norm_dim: 8,
            invariant: None,
        };
        std::fs::write(ws.path("model.json"), serde_json::to_string(&stats).unwrap()).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

#[test]
fn validate_accepts_a_clean_archive() {
    let ws = Workspace::new();
    let out = trace(&["validate", "--archive", &ws.arg("items.jsonl")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["items"], 40);
    assert_eq!(v["valid"], true);
}

#[test]
fn validate_reports_bad_records_with_exit_1() {
    let ws = Workspace::new();
    let text = std::fs::read_to_string(ws.path("items.jsonl")).unwrap();
    let broken = text.replacen("-4.", "4.", 1);
    std::fs::write(ws.path("bad.jsonl"), broken).unwrap();
    let out = trace(&["validate", "--archive", &ws.arg("bad.jsonl")]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_json(&out);
    assert_eq!(e["error"]["kind"], "validation");
    assert_eq!(e["error"]["item_id"], "q000");
}

#[test]
fn usage_errors_exit_2() {
    let out = trace(&["validate", "--archive", "x.jsonl", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");

    let out = trace(&["run", "--archive", "x.jsonl", "--out", "y.jsonl"]);
    assert_eq!(out.status.code(), Some(2), "model source is required");

    let ws = Workspace::new();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(repo_root().join("config/default_theta.json")).unwrap()).unwrap();
    cfg["tau_dimm"] = Value::from(1.0);
    std::fs::write(ws.path("theta.json"), cfg.to_string()).unwrap();
    let out = trace(&["validate", "--archive", &ws.arg("items.jsonl"), "--config", &ws.arg("theta.json")]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("tau_dimm"));
}

#[test]
fn run_is_deterministic_and_config_default_matches_file() {
    let ws = Workspace::new();
    let default_cfg = repo_root().join("config/default_theta.json");
    let default_cfg = default_cfg.to_string_lossy();
    let base = ["run", "--archive", &ws.arg("items.jsonl"), "--model-stats", &ws.arg("model.json")];
    let mut outputs = Vec::new();
    for (name, extra) in [
        ("a.jsonl", vec![]),
        ("b.jsonl", vec![]),
        ("c.jsonl", vec!["--jobs", "8"]),
        ("d.jsonl", vec!["--config", &*default_cfg]),
    ] {
        let out_path = ws.arg(name);
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--out", &out_path]);
        args.extend(extra.iter().copied());
        let out = trace(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(ws.path(name)).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(String::from_utf8_lossy(&outputs[0]).lines().count(), 40);
}

#[test]
fn mixing_without_logits_names_the_item() {
    let ws = Workspace::new();
    let out = trace(&[
        "ablate", "--variant", "force_mix_all_models", "--archive", &ws.arg("items.jsonl"),
        "--i-m", "0.5", "--out", &ws.arg("v.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_json(&out);
    assert_eq!(e["error"]["kind"], "input");
    assert_eq!(e["error"]["item_id"], "q000");
}

#[test]
fn ablate_then_eval_reports_regressions() {
    let ws = Workspace::new();
    for (variant, out_name) in [("none", "none.jsonl"), ("drop_early", "drop.jsonl")] {
        let out = trace(&[
            "ablate", "--variant", variant, "--archive", &ws.arg("items.jsonl"), "--i-m", "0.5",
            "--out", &ws.arg(out_name),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(stdout_json(&out)["variant"], variant);
    }
    let eval = |name: &str| {
        let out = trace(&[
            "eval", "--archive", &ws.arg("items.jsonl"), "--verdicts", &ws.arg(name), "--model-id", "tiny",
            "--csv", &ws.arg("cells.csv"),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        stdout_json(&out)
    };
    let full = eval("none.jsonl");
    let dropped = eval("drop.jsonl");
    assert_eq!(full["cells"].as_array().unwrap().len(), 2);
    // With the early branch removed no item changes, so every cell is a
    // non-gain.
    assert_eq!(dropped["summary"]["mc1"]["regressions"], 2);
    assert_eq!(dropped["usage"]["pooled"]["pct_early"], 0.0);
    assert!(full["usage"]["pooled"]["pct_early"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(ws.path("cells.csv")).unwrap();
    assert!(csv.starts_with("model_id,benchmark_id,mc1_base,mc1_trace,mc1_delta,mc2_base,mc2_trace,mc2_delta\n"));
}

#[test]
fn stats_and_bootstrap_on_the_shipped_grid() {
    let out = trace(&["stats"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!((v["summary"]["mc1"]["mean"].as_f64().unwrap() - 12.26).abs() <= 0.01);
    assert_eq!(v["summary"]["mc1"]["regressions"], 0);
    assert_eq!(v["sign_test"]["mc1"].as_f64().unwrap(), 2f64.powi(-45));

    let run = || stdout_json(&trace(&["bootstrap", "--resamples", "5000", "--seed", "3"]));
    let a = run();
    assert_eq!(a, run());
    assert!(a["mc1"]["lo"].as_f64().unwrap() < a["mc1"]["hi"].as_f64().unwrap());
}

#[test]
fn plot_and_invariant() {
    let ws = Workspace::new();
    let out = trace(&["plot", "--archive", &ws.arg("items.jsonl"), "--item", "q004", "--out", &ws.arg("p.svg")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(ws.path("p.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);

    let out = trace(&["invariant", "--model-stats", &ws.arg("model.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let i_m = v["invariant"]["i_m"].as_f64().unwrap();
    assert!((i_m - 0.5).abs() < 1e-12, "{i_m}");
    assert_eq!(v["invariant"]["branch"], "early");
}
