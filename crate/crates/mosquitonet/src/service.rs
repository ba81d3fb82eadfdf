//! HTTP inference service: `/api/predict`, `/api/health`, `/api/model`.
//!
//! One immutable model is shared by every handler. A semaphore bounds the
//! number of requests doing decode and inference at the same time; the work
//! itself runs on the blocking pool.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use mosquitonet_core::model::Prediction;
use mosquitonet_core::xai::{gradcam, overlay, DEFAULT_ALPHA};
use mosquitonet_core::{ModelConfig, MosquitoNet};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::config::ServeSettings;
use crate::dataset::decode_image;
use crate::error::{Error, Result};
use crate::export::{model_id_hex, rgb_png};

pub struct LoadedModel {
    pub model: MosquitoNet,
    pub model_id: u32,
}

#[derive(Clone)]
pub struct AppState {
    slot: Arc<OnceLock<LoadedModel>>,
    permits: Arc<Semaphore>,
}

impl AppState {
    /// A state with no model yet; every model route answers 503 until [`AppState::install`].
    pub fn new(max_concurrency: usize) -> Self {
        AppState {
            slot: Arc::new(OnceLock::new()),
            permits: Arc::new(Semaphore::new(max_concurrency.max(1))),
        }
    }

    pub fn with_model(max_concurrency: usize, model: MosquitoNet, model_id: u32) -> Self {
        let s = Self::new(max_concurrency);
        s.install(model, model_id);
        s
    }

    /// Sets the model once; later calls are ignored.
    pub fn install(&self, model: MosquitoNet, model_id: u32) {
        if self.slot.set(LoadedModel { model, model_id }).is_err() {
            log::warn!("model already loaded; ignoring second install");
        }
    }

    pub fn model(&self) -> Option<&LoadedModel> {
        self.slot.get()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probabilities {
    pub uninfected: f32,
    pub parasitized: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    pub label: String,
    pub probabilities: Probabilities,
    pub inference_ms: f64,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap_png_base64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub config: BTreeMap<String, String>,
    pub parameter_count: usize,
    pub input_shape: [usize; 3],
    pub model_id: String,
}

impl ModelInfo {
    pub fn new(loaded: &LoadedModel) -> Self {
        let cfg = loaded.model.config();
        ModelInfo {
            config: ModelConfig::KEYS
                .iter()
                .map(|k| (k.to_string(), cfg.get(k).unwrap_or_default()))
                .collect(),
            parameter_count: loaded.model.count_parameters(),
            input_shape: cfg.input_shape(),
            model_id: model_id_hex(loaded.model_id),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::default();
        for (k, v) in &self.config {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

/// Decode, resize and classify one encoded image. Shared by the CLI and the service.
pub fn predict_bytes(model: &MosquitoNet, bytes: &[u8]) -> Result<(Prediction, f64)> {
    let [_, h, w] = model.config().input_shape();
    let image = decode_image(bytes, h, w)?;
    let start = Instant::now();
    let p = model.predict(&image)?;
    Ok((p, start.elapsed().as_secs_f64() * 1e3))
}

/// GradCAM overlay for the predicted class, PNG-encoded.
pub fn overlay_png(model: &MosquitoNet, bytes: &[u8], class: usize) -> Result<Vec<u8>> {
    let [_, h, w] = model.config().input_shape();
    let image = decode_image(bytes, h, w)?;
    let heat = gradcam(model, &image, class)?;
    rgb_png(&overlay(&image, &heat, DEFAULT_ALPHA)?.image)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

fn not_ready() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "model not loaded")
}

#[derive(Debug, Default, Deserialize)]
struct PredictQuery {
    #[serde(default)]
    gradcam: bool,
}

/// Raw image body, or multipart with an `image` field.
async fn read_image(state: &AppState, req: Request) -> std::result::Result<Bytes, Response> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !multipart {
        return Bytes::from_request(req, state)
            .await
            .map_err(|r| error(r.status(), r.body_text()));
    }
    let mut form = Multipart::from_request(req, state)
        .await
        .map_err(|r| error(r.status(), r.body_text()))?;
    loop {
        match form.next_field().await {
            Ok(Some(field)) if field.name() == Some("image") => {
                return field
                    .bytes()
                    .await
                    .map_err(|e| error(e.status(), e.body_text()));
            }
            Ok(Some(_)) => continue,
            Ok(None) => {
                return Err(error(
                    StatusCode::BAD_REQUEST,
                    "multipart form has no \"image\" field",
                ))
            }
            Err(e) => return Err(error(e.status(), e.body_text())),
        }
    }
}

async fn predict(
    State(state): State<AppState>,
    Query(q): Query<PredictQuery>,
    req: Request,
) -> Response {
    if state.model().is_none() {
        return not_ready();
    }
    let bytes = match read_image(&state, req).await {
        Ok(b) => b,
        Err(r) => return r,
    };
    let Ok(_permit) = state.permits.clone().acquire_owned().await else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "shutting down");
    };
    let work = state.clone();
    let result = tokio::task::spawn_blocking(move || -> Result<PredictionResponse> {
        let loaded = work.model().expect("checked above");
        let (p, inference_ms) = predict_bytes(&loaded.model, &bytes)?;
        let heatmap_png_base64 = if q.gradcam {
            let png = overlay_png(&loaded.model, &bytes, p.label.index())?;
            Some(base64::engine::general_purpose::STANDARD.encode(png))
        } else {
            None
        };
        Ok(PredictionResponse {
            label: p.label.as_str().to_string(),
            probabilities: Probabilities {
                uninfected: p.probabilities[0],
                parasitized: p.probabilities[1],
            },
            inference_ms,
            model_id: model_id_hex(loaded.model_id),
            heatmap_png_base64,
        })
    })
    .await;
    match result {
        Ok(Ok(body)) => Json(body).into_response(),
        Ok(Err(e @ Error::Image { .. })) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("worker failed: {e}"),
        ),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    match state.model() {
        Some(m) => Json(serde_json::json!({"status": "ok", "model_id": model_id_hex(m.model_id)}))
            .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(serde_json::json!({"status": "loading"})),
        )
            .into_response(),
    }
}

async fn model_info(State(state): State<AppState>) -> Response {
    match state.model() {
        Some(m) => Json(ModelInfo::new(m)).into_response(),
        None => not_ready(),
    }
}

fn cors(origin: &str) -> Result<CorsLayer> {
    let allow = if origin == "*" {
        AllowOrigin::from(Any)
    } else {
        let v = HeaderValue::from_str(origin)
            .map_err(|_| Error::Config(format!("serve.cors_origin: invalid origin {origin:?}")))?;
        AllowOrigin::exact(v)
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any))
}

pub fn router(state: AppState, settings: &ServeSettings) -> Result<Router> {
    Ok(Router::new()
        .route("/api/predict", post(predict))
        .route("/api/health", get(health))
        .route("/api/model", get(model_info))
        .layer(DefaultBodyLimit::max(settings.body_limit))
        .layer(cors(&settings.cors_origin)?)
        .with_state(state))
}

/// Serves until ctrl-c. `load` runs on the blocking pool after the listener is
/// up, so the routes answer 503 until it finishes.
pub async fn serve<F>(settings: ServeSettings, load: F) -> anyhow::Result<()>
where
    F: FnOnce() -> Result<(MosquitoNet, u32)> + Send + 'static,
{
    let state = AppState::new(settings.max_concurrency);
    let app = router(state.clone(), &settings)?;
    let listener = tokio::net::TcpListener::bind((settings.host.as_str(), settings.port)).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    let loader = state.clone();
    let (failed_tx, failed_rx) = tokio::sync::oneshot::channel::<Error>();
    tokio::task::spawn_blocking(move || match load() {
        Ok((model, id)) => {
            log::info!("model {} loaded", model_id_hex(id));
            loader.install(model, id);
        }
        Err(e) => {
            let _ = failed_tx.send(e);
        }
    });
    let failure = Arc::new(std::sync::Mutex::new(None));
    let record = failure.clone();
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                Ok(e) = failed_rx => *record.lock().expect("not poisoned") = Some(e),
            }
        })
        .await?;
    let failed = failure.lock().expect("not poisoned").take();
    match failed {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}
