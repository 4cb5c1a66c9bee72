//! HTTP JSON API over an immutable panel, mounted under `/api` and `/api/v1`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cape_core::{CapeError, Panel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, DiagnoseParams, FitOdeParams, FrontierParams, IsoclineParams, WhatIfParams,
};
use crate::errors::{http_status, ErrorBody};
use crate::report::DiagnosisReport;

#[derive(Debug)]
pub struct AppState {
    pub panel: Panel,
}

pub enum ApiError {
    BadRequest(String),
    Analysis(CapeError),
}

impl From<CapeError> for ApiError {
    fn from(e: CapeError) -> Self {
        Self::Analysis(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            Self::BadRequest(message) => (StatusCode::BAD_REQUEST, ErrorBody { error: "MalformedRequest".into(), message }),
            Self::Analysis(e) => (
                StatusCode::from_u16(http_status(&e)).expect("valid status"),
                ErrorBody::from(&e),
            ),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Strict JSON body: an empty body means `{}`; anything unparsable is a 400.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::BadRequest(e.to_string()))
}

/// Analyses are CPU-bound; keep them off the async workers.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, CapeError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(ApiError::Analysis(CapeError::NonConvergence(format!("worker failed: {e}")))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: String,
    pub n_models: usize,
    pub min_params_b: f64,
    pub max_params_b: f64,
}

async fn families(State(st): State<Arc<AppState>>) -> Json<Vec<FamilySummary>> {
    let out = st
        .panel
        .families()
        .into_iter()
        .map(|f| {
            let recs = st.panel.family_records(&f);
            let ps: Vec<f64> = recs.iter().map(|r| r.params).collect();
            FamilySummary {
                n_models: recs.len(),
                min_params_b: ps.iter().copied().fold(f64::INFINITY, f64::min),
                max_params_b: ps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                family: f,
            }
        })
        .collect();
    Json(out)
}

async fn panel(State(st): State<Arc<AppState>>) -> Json<Panel> {
    Json(st.panel.clone())
}

pub fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| rand::random::<u32>() as u64)
}

async fn diagnose(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<DiagnosisReport> {
    let params: DiagnoseParams = parse(&body)?;
    let seed = resolve_seed(params.seed);
    blocking(move || analysis::diagnose(&st.panel, &params, seed).map(DiagnosisReport::new)).await
}

async fn whatif(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<analysis::WhatIfReport> {
    let params: WhatIfParams = parse(&body)?;
    blocking(move || analysis::whatif(&st.panel, &params)).await
}

async fn ode_fit(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<analysis::OdeFitReport> {
    let params: FitOdeParams = parse(&body)?;
    blocking(move || analysis::fit_ode(&st.panel, &params)).await
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictBody {
    holdout: String,
    #[serde(default)]
    train: Option<FitOdeParams>,
    #[serde(default = "default_degree")]
    degree: usize,
}

fn default_degree() -> usize {
    2
}

async fn predict(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<analysis::PredictReport> {
    let req: PredictBody = parse(&body)?;
    blocking(move || {
        let train = req.train.unwrap_or_default();
        let fit = analysis::fit_ode(&st.panel, &train)?;
        let holdout = st.panel.family_series(&req.holdout).map_err(|_| CapeError::UnknownFamily(req.holdout.clone()))?;
        let base = train.families.iter().map(|f| st.panel.family_series(f)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<_> = base.iter().collect();
        analysis::predict(&fit.model, &holdout, &refs, req.degree)
    })
    .await
}

async fn isocline(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<analysis::IsoclineSummary> {
    let params: IsoclineParams = parse(&body)?;
    blocking(move || analysis::isocline(&st.panel, &params)).await
}

async fn frontier(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<analysis::FrontierReport> {
    let params: FrontierParams = parse(&body)?;
    let seed = params.seed.unwrap_or(analysis::DEFAULT_SEED);
    blocking(move || {
        let records = params.records.as_deref().unwrap_or(&st.panel.frontier);
        analysis::frontier(records, seed)
    })
    .await
}

fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/families", get(families))
        .route("/panel", get(panel))
        .route("/diagnose", post(diagnose))
        .route("/whatif", post(whatif))
        .route("/ode/fit", post(ode_fit))
        .route("/predict", post(predict))
        .route("/isocline", post(isocline))
        .route("/frontier", post(frontier))
}

pub fn router(panel: Panel) -> Router {
    let state = Arc::new(AppState { panel });
    Router::new().nest("/api/v1", routes()).nest("/api", routes()).with_state(state)
}

pub async fn serve(panel: Panel, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(panel))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
