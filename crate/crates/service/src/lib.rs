//! Read-only HTTP inference API.
//!
//! | method | path          | body                                         |
//! |--------|---------------|----------------------------------------------|
//! | GET    | `/health`     |                                              |
//! | GET    | `/vocabulary` |                                              |
//! | GET    | `/classes`    |                                              |
//! | POST   | `/predict`    | `{symptoms, meta}`                           |
//! | POST   | `/explain`    | `{symptoms, meta, class?, top_k?}`           |
//!
//! Errors are `{"error": {"code", "message", ...}}`: 400 for malformed JSON,
//! 422 for requests the model cannot answer (unknown symptoms, no symptoms,
//! unknown meta values or class), 500 with an opaque id otherwise.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use toxnet_core::data::MetaRecord;
use toxnet_core::model::ClassExplanation;
use toxnet_core::predict::{Prediction, Predictor};
use toxnet_core::Error as CoreError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub symptoms: Vec<String>,
    pub meta: MetaRecord,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub symptoms: Vec<String>,
    pub meta: MetaRecord,
    /// Restrict the answer to one toxin class.
    #[serde(default)]
    pub class: Option<String>,
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ExplainResponse {
    pub classes: Vec<ClassExplanation>,
    pub model_hash: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct VocabularyEntry {
    pub name: String,
    pub literature: bool,
}

/// Where cross-origin requests may come from.
#[derive(Debug, Clone, Default)]
pub enum Cors {
    #[default]
    AnyOrigin,
    Origins(Vec<String>),
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Unprocessable {
        code: &'static str,
        message: String,
        unknown_symptoms: Vec<String>,
    },
    Internal(String),
}

impl ApiError {
    fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::Unprocessable {
            code,
            message: message.into(),
            unknown_symptoms: Vec::new(),
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::UnknownSymptoms(names) => ApiError::Unprocessable {
                code: "unknown_symptoms",
                message: format!("unknown symptom(s): {}", names.join(", ")),
                unknown_symptoms: names,
            },
            CoreError::NoSymptoms(_) => ApiError::unprocessable("no_symptoms", "at least one symptom is required"),
            e @ CoreError::UnknownCategory { .. } => ApiError::unprocessable("unknown_meta_value", e.to_string()),
            e @ CoreError::UnknownToxin(_) => ApiError::unprocessable("unknown_class", e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::BadRequest(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(message) => (
                StatusCode::BAD_REQUEST,
                json!({"error": {"code": "malformed_request", "message": message}}),
            ),
            ApiError::Unprocessable {
                code,
                message,
                unknown_symptoms,
            } => {
                let mut err = json!({"code": code, "message": message});
                if !unknown_symptoms.is_empty() {
                    err["unknown_symptoms"] = json!(unknown_symptoms);
                }
                (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": err }))
            }
            ApiError::Internal(detail) => {
                let id = uuid::Uuid::new_v4().to_string();
                log::error!("internal error {id}: {detail}");
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    json!({"error": {"code": "internal", "message": "internal error", "id": id}}),
                )
            }
        };
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<Predictor>;

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn vocabulary(State(p): State<Shared>) -> Json<serde_json::Value> {
    let vocab = &p.encoder().vocab;
    let symptoms: Vec<VocabularyEntry> = (0..vocab.len())
        .map(|i| VocabularyEntry {
            name: vocab.name(i).to_string(),
            literature: vocab.is_literature(i),
        })
        .collect();
    Json(json!({ "symptoms": symptoms }))
}

async fn classes(State(p): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({ "classes": p.encoder().classes }))
}

/// Runs CPU-bound model work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

async fn predict(
    State(p): State<Shared>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Result<Json<Prediction>, ApiError> {
    let Json(req) = body?;
    let out = blocking(move || {
        let case = p.encode(&req.symptoms, &req.meta)?;
        Ok(p.predict(&case)?)
    })
    .await?;
    Ok(Json(out))
}

async fn explain(
    State(p): State<Shared>,
    body: Result<Json<ExplainRequest>, JsonRejection>,
) -> Result<Json<ExplainResponse>, ApiError> {
    let Json(req) = body?;
    if p.model().literature_matrix().is_none() {
        return Err(ApiError::unprocessable(
            "no_literature_branch",
            format!("variant {} has no literature prior to explain", p.model().variant()),
        ));
    }
    let out = blocking(move || {
        let case = p.encode(&req.symptoms, &req.meta)?;
        let wanted = req.class.as_deref().map(|c| p.encoder().class_index(c)).transpose()?;
        let mut classes = p.explain(&case, req.top_k)?.classes;
        if let Some(c) = wanted {
            classes.retain(|e| e.class_index == c);
        }
        Ok(ExplainResponse {
            classes,
            model_hash: p.model_hash().to_string(),
        })
    })
    .await?;
    Ok(Json(out))
}

pub fn router(predictor: Arc<Predictor>, cors: &Cors) -> Router {
    let origin = match cors {
        Cors::AnyOrigin => AllowOrigin::from(Any),
        Cors::Origins(list) => AllowOrigin::list(list.iter().filter_map(|o| o.parse().ok())),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/health", get(health))
        .route("/vocabulary", get(vocabulary))
        .route("/classes", get(classes))
        .route("/predict", post(predict))
        .route("/explain", post(explain))
        .layer(cors)
        .with_state(predictor)
}

/// Serves until Ctrl-C.
pub async fn serve(predictor: Predictor, addr: SocketAddr, cors: Cors) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(predictor), &cors))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
