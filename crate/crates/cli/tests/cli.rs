use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use serde_json::{json, Value};
use toxnet_core::data::io::load_dataset_dir;
use toxnet_core::data::SynthSpec;

fn toxnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toxnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

/// Settings for a small cohort and a narrow, short-trained model.
fn small_config(dir: &Path) -> PathBuf {
    let counts: serde_json::Map<String, Value> = SynthSpec::default()
        .class_counts
        .iter()
        .map(|(k, v)| (k.clone(), json!((v / 40).max(12))))
        .collect();
    let cfg = json!({
        "folds": 3,
        "seeds": 2,
        "train": {
            "epochs": 4,
            "learning_rate": 0.01,
            "patience": null,
            "model": {"widths": [8, 8, 8], "heads": 2, "final_heads": 2}
        },
        "synth": {"class_counts": counts}
    });
    let path = dir.join("settings.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn synth(dir: &Path, config: &Path, seed: &str, name: &str) -> PathBuf {
    let out = dir.join(name);
    let o = toxnet(&["synth", "--config", config.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
    let v = stdout_json(&o);
    assert_eq!(v["schema_version"], 1);
    let banner = String::from_utf8_lossy(&o.stderr);
    assert!(banner.contains("effective config"), "{banner}");
    out
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = synth(dir.path(), &cfg, "7", "a");
    let b = synth(dir.path(), &cfg, "7", "b");
    let c = synth(dir.path(), &cfg, "8", "c");
    for f in ["cases.jsonl", "literature.jsonl", "synonyms.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        std::fs::read(a.join("cases.jsonl")).unwrap(),
        std::fs::read(c.join("cases.jsonl")).unwrap()
    );
}

#[test]
fn train_predict_eval_and_service_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = synth(dir.path(), &cfg, "3", "data");
    let model = dir.path().join("out/model.json");
    let (cfg_s, data_s, model_s) = (cfg.to_str().unwrap(), data.to_str().unwrap(), model.to_str().unwrap());

    let report = stdout_json(&toxnet(&["train", "--config", cfg_s, "--data", data_s, "--variant", "toxnet", "--out", model_s]));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["epochs_run"], 4);
    assert!(model.exists());
    assert!(dir.path().join("out/model.json.report.json").exists());

    let ds = load_dataset_dir(&data).unwrap();
    let raw = &ds.raw_cases[5];
    let case = json!({"symptoms": raw.symptoms, "meta": raw.meta});
    let case_path = dir.path().join("case.json");
    std::fs::write(&case_path, case.to_string()).unwrap();
    let mut cli = stdout_json(&toxnet(&["predict", "--model", model_s, "--data", data_s, "--case", case_path.to_str().unwrap()]));
    assert_eq!(cli["schema_version"], 1);

    // Same case through standard input.
    let mut child = Command::new(env!("CARGO_BIN_EXE_toxnet"))
        .args(["predict", "--model", model_s, "--data", data_s])
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(case.to_string().as_bytes()).unwrap();
    let piped = stdout_json(&child.wait_with_output().unwrap());
    assert_eq!(piped, cli);

    // The service answers the same request with the same payload.
    let ckpt = toxnet_core::checkpoint::Checkpoint::load(&model).unwrap();
    let predictor = toxnet_core::predict::Predictor::from_checkpoint(&ckpt, &ds).unwrap();
    let app = toxnet_service::router(Arc::new(predictor), &toxnet_service::Cors::AnyOrigin);
    let served: Value = tokio::runtime::Runtime::new().unwrap().block_on(async {
        use http_body_util::BodyExt;
        use tower::ServiceExt;
        let req = axum::http::Request::post("/predict")
            .header("content-type", "application/json")
            .body(axum::body::Body::from(case.to_string()))
            .unwrap();
        let resp = app.oneshot(req).await.unwrap();
        serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap()
    });
    cli.as_object_mut().unwrap().remove("schema_version");
    assert_eq!(cli, served);

    let eval = stdout_json(&toxnet(&["eval", "--model", model_s, "--data", data_s]));
    assert_eq!(eval["split"], "training");
    assert_eq!(eval["cases"], ds.cases.len());
    let micro = eval["micro"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&micro));
}

#[test]
fn bench_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg_s = cfg.to_str().unwrap();
    let mut reports = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let o = toxnet(&["bench", "--config", cfg_s, "--variants", "naive,mlp,gat_only", "--seed", "4", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(format!("{name}.timings.json")).exists());
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["config"]["seeds"], json!([4, 5]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    assert_eq!(v["rows"][0]["runs"].as_array().unwrap().len(), 6);
}

#[test]
fn gradcheck_passes() {
    let o = toxnet(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    let json_start = text.find('{').unwrap();
    let v: Value = serde_json::from_str(&text[json_start..]).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["variants"].as_array().unwrap().len(), 5);
    assert!(v["max_relative_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn exit_codes() {
    assert_eq!(toxnet(&["train", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(toxnet(&["bench", "--variants", "naive,gcn"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    // Missing --data is a usage error; a missing file is a runtime failure.
    assert_eq!(toxnet(&["train", "--out", out.to_str().unwrap()]).status.code(), Some(1));
    let o = toxnet(&["train", "--data", "/nonexistent/cases.jsonl", "--lit", "/nonexistent/lit.jsonl", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, r#"{"fold": 3}"#).unwrap();
    assert_eq!(toxnet(&["gradcheck", "--config", bad_cfg.to_str().unwrap()]).status.code(), Some(1));
}
