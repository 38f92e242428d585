//! JSON API over one immutable graph. Query results live in an in-memory
//! cache keyed by query id until the process exits.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use klustree_core::cluster::Heuristic;
use klustree_core::eval::{GradesFile, RelevanceVector};
use klustree_core::graph::Graph;
use klustree_core::pipeline::{
    run_pipeline, ClusterDocument, Method, PairView, PipelineConfig, PipelineError,
};
use klustree_core::search::{KeywordQuery, SearchError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("unknown query id `{0}`")]
    UnknownQuery(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, body) = match &self {
            ApiError::Pipeline(e) => {
                let status = match e {
                    PipelineError::Search(_) | PipelineError::Config(_) | PipelineError::Lm(_) => {
                        StatusCode::BAD_REQUEST
                    }
                    _ => StatusCode::INTERNAL_SERVER_ERROR,
                };
                let mut body = json!({ "error": message, "stage": e.stage() });
                if let PipelineError::Search(SearchError::UnmatchedKeyword(k)) = e {
                    body["keyword"] = json!(k);
                }
                (status, body)
            }
            ApiError::UnknownQuery(_) => (StatusCode::NOT_FOUND, json!({ "error": message })),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, json!({ "error": message })),
            ApiError::Internal(_) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({ "error": message }),
            ),
        };
        (status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::BadRequest(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::BadRequest(r.body_text())
    }
}

/// Body of `POST /api/query`. Omitted fields fall back to the service
/// configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub keywords: Vec<String>,
    pub method: Option<Method>,
    pub heuristic: Option<Heuristic>,
    pub top_n: Option<usize>,
    pub seed: Option<u64>,
}

impl QueryRequest {
    pub fn config(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(h) = self.heuristic {
            cfg.heuristic = h;
        }
        if let Some(n) = self.top_n {
            cfg.top_n = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg
    }
}

/// A clustering document with its query id alongside the document fields.
#[derive(Debug, Serialize)]
pub struct QueryResponse<'a> {
    pub query_id: &'a str,
    #[serde(flatten)]
    pub document: &'a ClusterDocument,
}

/// Body of `POST /api/judgments`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentSubmission {
    pub query_id: String,
    #[serde(flatten)]
    pub judgment: Judgment,
}

/// A 1..=5 grade: similarity of a judgment pair, or relevance of a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Judgment {
    Pair { pair_id: usize, grade: u8 },
    Relevance { cluster: usize, grade: u8 },
}

impl Judgment {
    fn grade(&self) -> u8 {
        match self {
            Judgment::Pair { grade, .. } | Judgment::Relevance { grade, .. } => *grade,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClustersParams {
    pub heuristic: Option<Heuristic>,
}

struct CachedQuery {
    document: ClusterDocument,
    pairs: Vec<PairView>,
}

pub struct AppState {
    graph: Arc<Graph>,
    base: PipelineConfig,
    next_id: AtomicU64,
    queries: RwLock<HashMap<String, Arc<CachedQuery>>>,
    judgments: RwLock<HashMap<String, Vec<Judgment>>>,
}

impl AppState {
    pub fn new(graph: Arc<Graph>, base: PipelineConfig) -> Self {
        AppState {
            graph,
            base,
            next_id: AtomicU64::new(1),
            queries: RwLock::new(HashMap::new()),
            judgments: RwLock::new(HashMap::new()),
        }
    }

    fn lookup(&self, id: &str) -> Result<Arc<CachedQuery>, ApiError> {
        self.queries
            .read()
            .expect("query cache poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownQuery(id.to_string()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/query", post(create_query))
        .route("/api/query/{id}", get(get_query))
        .route("/api/query/{id}/clusters", get(get_clusters))
        .route("/api/query/{id}/pairs", get(get_pairs))
        .route("/api/query/{id}/judgments", get(get_judgments))
        .route("/api/query/{id}/grades", get(get_grades))
        .route("/api/judgments", post(post_judgment))
        .with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "nodes": state.graph.node_count(),
        "triples": state.graph.triples().len(),
    }))
}

async fn create_query(
    State(state): State<Arc<AppState>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let query = KeywordQuery::new(req.keywords.iter().cloned()).map_err(PipelineError::from)?;
    let cfg = req.config(&state.base);
    let graph = Arc::clone(&state.graph);

    // The pipeline is CPU-bound; keep it off the async workers.
    let cached = tokio::task::spawn_blocking(move || -> Result<CachedQuery, PipelineError> {
        let outcome = run_pipeline(&cfg, &graph, &query)?;
        let pairs = outcome.pair_views()?;
        Ok(CachedQuery {
            document: outcome.document,
            pairs,
        })
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;

    let id = format!("q{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let cached = Arc::new(cached);
    state
        .queries
        .write()
        .expect("query cache poisoned")
        .insert(id.clone(), Arc::clone(&cached));
    Ok(Json(QueryResponse {
        query_id: &id,
        document: &cached.document,
    })
    .into_response())
}

async fn get_query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let cached = state.lookup(&id)?;
    Ok(Json(QueryResponse {
        query_id: &id,
        document: &cached.document,
    })
    .into_response())
}

async fn get_clusters(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    params: Result<Query<ClustersParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(params) = params?;
    let cached = state.lookup(&id)?;
    let document = match params.heuristic {
        Some(h) => cached.document.with_heuristic(h),
        None => cached.document.clone(),
    };
    Ok(Json(QueryResponse {
        query_id: &id,
        document: &document,
    })
    .into_response())
}

async fn get_pairs(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let cached = state.lookup(&id)?;
    Ok(Json(&cached.pairs).into_response())
}

async fn get_judgments(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<Vec<Judgment>>, ApiError> {
    state.lookup(&id)?;
    let stored = state.judgments.read().expect("judgment store poisoned");
    Ok(Json(stored.get(&id).cloned().unwrap_or_default()))
}

/// Relevance grades in the grades-file format; the latest grade per
/// cluster wins.
async fn get_grades(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<GradesFile>, ApiError> {
    let cached = state.lookup(&id)?;
    let stored = state.judgments.read().expect("judgment store poisoned");
    let mut grades = BTreeMap::new();
    for j in stored.get(&id).into_iter().flatten() {
        if let Judgment::Relevance { cluster, grade } = j {
            grades.insert(*cluster, *grade);
        }
    }
    let grades = RelevanceVector::new(grades).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(GradesFile {
        query: cached.document.query.keywords().join(","),
        method: cached.document.method.as_str().to_string(),
        grades,
    }))
}

async fn post_judgment(
    State(state): State<Arc<AppState>>,
    body: Result<Json<JudgmentSubmission>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(sub) = body?;
    let cached = state.lookup(&sub.query_id)?;
    let grade = sub.judgment.grade();
    if !(1..=5).contains(&grade) {
        return Err(ApiError::BadRequest(format!(
            "grade {grade} is outside 1..=5"
        )));
    }
    match sub.judgment {
        Judgment::Pair { pair_id, .. } if pair_id >= cached.pairs.len() => {
            return Err(ApiError::BadRequest(format!(
                "pair {pair_id} does not exist; query has {} pairs",
                cached.pairs.len()
            )));
        }
        Judgment::Relevance { cluster, .. } if cluster >= cached.document.k => {
            return Err(ApiError::BadRequest(format!(
                "cluster {cluster} does not exist; query has {} clusters",
                cached.document.k
            )));
        }
        _ => {}
    }
    let mut stored = state.judgments.write().expect("judgment store poisoned");
    let list = stored.entry(sub.query_id.clone()).or_default();
    list.push(sub.judgment);
    Ok(Json(
        json!({ "query_id": sub.query_id, "stored": list.len() }),
    ))
}

/// Serves the API on an already bound listener until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
