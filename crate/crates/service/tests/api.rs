use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use toxnet_core::data::{synth_generate, Dataset, SynthSpec};
use toxnet_core::model::{ModelConfig, Variant};
use toxnet_core::predict::{population_graph, Predictor};
use toxnet_core::training::{fit, model_dims, TrainConfig};
use toxnet_service::{router, Cors};

fn dataset() -> Dataset {
    let mut spec = SynthSpec::default();
    for n in spec.class_counts.values_mut() {
        *n = (*n / 40).max(12);
    }
    synth_generate(&spec).unwrap().dataset
}

fn predictor(variant: Variant, trained: bool) -> (Dataset, Predictor) {
    let ds = dataset();
    let mut cfg = TrainConfig {
        model: ModelConfig {
            variant,
            widths: vec![8, 8, 8],
            heads: 2,
            final_heads: 2,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    };
    let model = if trained {
        cfg.epochs = 10;
        cfg.learning_rate = 0.01;
        let all: Vec<usize> = (0..ds.cases.len()).collect();
        fit(&ds, &all, &cfg, 5, &mut |_| {}).unwrap().model
    } else {
        toxnet_core::model::ToxNet::new(cfg.model.clone(), model_dims(&ds), &ds.literature_matrix()).unwrap()
    };
    let graph = variant
        .uses_graph()
        .then(|| population_graph(&ds, &cfg.meta_fields).unwrap());
    let p = Predictor::new(model, ds.encoder.clone(), graph).unwrap();
    (ds, p)
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::Null), text)
}

fn case_body(ds: &Dataset, i: usize) -> Value {
    let raw = &ds.raw_cases[i];
    json!({"symptoms": raw.symptoms, "meta": raw.meta})
}

#[tokio::test]
async fn metadata_endpoints() {
    let (ds, p) = predictor(Variant::Toxnet, false);
    let app = router(Arc::new(p), &Cors::AnyOrigin);
    let (s, v, _) = call(&app, "GET", "/health", None).await;
    assert_eq!((s, v), (StatusCode::OK, json!({"status": "ok"})));

    let (s, v, _) = call(&app, "GET", "/vocabulary", None).await;
    assert_eq!(s, StatusCode::OK);
    let entries = v["symptoms"].as_array().unwrap();
    assert_eq!(entries.len(), ds.encoder.vocab.len());
    let lit = entries.iter().filter(|e| e["literature"] == json!(true)).count();
    assert_eq!(lit, ds.encoder.vocab.literature_count());

    let (s, v, _) = call(&app, "GET", "/classes", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["classes"], json!(ds.encoder.classes));
}

#[tokio::test]
async fn predict_matches_library_and_is_repeatable() {
    for variant in [Variant::Toxnet, Variant::Mlp] {
        let (ds, p) = predictor(variant, true);
        let case = p.encode(&ds.raw_cases[3].symptoms, &ds.raw_cases[3].meta).unwrap();
        let direct = p.predict(&case).unwrap();
        let app = router(Arc::new(p), &Cors::AnyOrigin);
        let body = case_body(&ds, 3).to_string();
        let (s, v, text) = call(&app, "POST", "/predict", Some(body.clone())).await;
        assert_eq!(s, StatusCode::OK, "{text}");
        assert_eq!(v, serde_json::to_value(&direct).unwrap());
        let ranking = v["ranking"].as_array().unwrap();
        assert_eq!(ranking.len(), ds.class_count());
        let total: f64 = ranking.iter().map(|r| r["probability"].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-6);
        let (_, _, again) = call(&app, "POST", "/predict", Some(body)).await;
        assert_eq!(text, again);
    }
}

#[tokio::test]
async fn concurrent_requests_agree_with_sequential() {
    let (ds, p) = predictor(Variant::GatOnly, true);
    let app = router(Arc::new(p), &Cors::AnyOrigin);
    let bodies: Vec<String> = (0..8).map(|i| case_body(&ds, i * 5).to_string()).collect();
    let mut sequential = Vec::new();
    for b in &bodies {
        sequential.push(call(&app, "POST", "/predict", Some(b.clone())).await.2);
    }
    let handles: Vec<_> = bodies
        .iter()
        .cloned()
        .map(|b| {
            let app = app.clone();
            tokio::spawn(async move { call(&app, "POST", "/predict", Some(b)).await.2 })
        })
        .collect();
    for (h, s) in handles.into_iter().zip(sequential) {
        assert_eq!(h.await.unwrap(), s);
    }
}

#[tokio::test]
async fn request_errors() {
    let (ds, p) = predictor(Variant::Toxnet, false);
    let app = router(Arc::new(p), &Cors::AnyOrigin);
    let meta = serde_json::to_value(&ds.raw_cases[0].meta).unwrap();

    let (s, v, _) = call(&app, "POST", "/predict", Some(json!({"symptoms": [], "meta": meta}).to_string())).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "no_symptoms");

    let body = json!({"symptoms": ["nausea", "purple_aura", "zz"], "meta": meta}).to_string();
    let (s, v, _) = call(&app, "POST", "/predict", Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["unknown_symptoms"], json!(["purple_aura", "zz"]));

    let mut bad_meta = meta.clone();
    bad_meta["aetiology"] = json!("moon");
    let body = json!({"symptoms": ["nausea"], "meta": bad_meta}).to_string();
    let (s, v, _) = call(&app, "POST", "/predict", Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "unknown_meta_value");

    for bad in ["{not json", r#"{"symptoms": "nausea"}"#, r#"{"symptoms": ["nausea"]}"#] {
        let (s, v, _) = call(&app, "POST", "/predict", Some(bad.to_string())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}");
        assert_eq!(v["error"]["code"], "malformed_request");
    }
}

#[tokio::test]
async fn explain_endpoint() {
    let (ds, p) = predictor(Variant::Toxnet, false);
    let app = router(Arc::new(p), &Cors::AnyOrigin);
    let mut body = case_body(&ds, 1);
    let (s, v, _) = call(&app, "POST", "/explain", Some(body.to_string())).await;
    assert_eq!(s, StatusCode::OK);
    let classes = v["classes"].as_array().unwrap();
    assert_eq!(classes.len(), ds.class_count());
    for c in classes {
        let sum: f64 = c["contributions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t["contribution"].as_f64().unwrap())
            .sum();
        assert!((sum - c["score"].as_f64().unwrap()).abs() < 1e-9);
    }

    body["class"] = json!(ds.encoder.classes[2]);
    body["top_k"] = json!(2);
    let (s, v, _) = call(&app, "POST", "/explain", Some(body.to_string())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["classes"].as_array().unwrap().len(), 1);
    assert_eq!(v["classes"][0]["class_index"], 2);
    assert!(v["classes"][0]["contributions"].as_array().unwrap().len() <= 2);

    body["class"] = json!("unobtainium");
    let (s, _, _) = call(&app, "POST", "/explain", Some(body.to_string())).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (ds, p) = predictor(Variant::Mlp, false);
    let app = router(Arc::new(p), &Cors::AnyOrigin);
    let (s, v, _) = call(&app, "POST", "/explain", Some(case_body(&ds, 1).to_string())).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "no_literature_branch");
}

#[tokio::test]
async fn cors_headers_present() {
    let (_, p) = predictor(Variant::Mlp, false);
    let app = router(Arc::new(p), &Cors::Origins(vec!["http://localhost:5173".into()]));
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/predict")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers().get("access-control-allow-origin").unwrap(),
        "http://localhost:5173"
    );
}
