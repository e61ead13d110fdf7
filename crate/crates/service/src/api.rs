//! Route handlers.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::Json;
use fairthresh_core::ahp::{self, check_consistency};
use fairthresh_core::cohort::{generate_cohort, read_cohort, CohortSummary};
use fairthresh_core::optimizer::{tpe_minimize_with, UtilityBasis};
use fairthresh_core::tradeoff::{filter_cloud, metric_ranges, sample_cloud};
use fairthresh_core::{
    AhpRatings, CloudFilter, Cohort, CohortError, CostModel, DiBounds, MetricPoint, MetricRanges, Objective,
    Scales, SyntheticSpec, TpeConfig,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::store::{now_millis, JobState, JobStatus, Progress, SessionDoc, SessionSlot};
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::validation(e.to_string()))
}

fn slot(state: &AppState, id: &str) -> ApiResult<Arc<SessionSlot>> {
    state.store.get(id).ok_or_else(|| ApiError::session_not_found(id))
}

pub async fn healthz() -> impl IntoResponse {
    Json(json!({ "status": "ok" }))
}

pub async fn questions(State(state): State<AppState>) -> Json<Value> {
    let text = ahp::questions(&state.config.question_template);
    let items: Vec<Value> = ahp::QUESTION_PAIRS
        .iter()
        .zip(text)
        .zip(["util_vs_spd", "util_vs_waod", "spd_vs_waod"])
        .map(|(((a, b), text), key)| {
            json!({ "key": key, "first": ahp::CRITERIA[*a], "second": ahp::CRITERIA[*b], "text": text })
        })
        .collect();
    Json(json!({ "scale": [1, 9], "questions": items }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CreateSession {
    costs: Option<CostModel>,
    di_bounds: Option<DiBounds>,
}

pub async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_json(&body)?;
    let costs = req.costs.unwrap_or_default();
    costs.validate().map_err(ApiError::validation)?;
    let bounds = req.di_bounds.unwrap_or_default();
    let bounds = DiBounds::new(bounds.lo, bounds.hi).map_err(ApiError::validation)?;
    let doc = SessionDoc::new(uuid::Uuid::new_v4().simple().to_string(), costs, bounds);
    let body = json!({
        "id": doc.id,
        "costs": doc.costs,
        "di_bounds": doc.di_bounds,
        "created_at": doc.created_at,
    });
    state.store.insert(doc)?;
    Ok((StatusCode::CREATED, Json(body)))
}

pub async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    let doc = slot.doc.lock().await;
    let job = slot.job();
    Ok(Json(json!({
        "id": doc.id,
        "costs": doc.costs,
        "di_bounds": doc.di_bounds,
        "cohort": doc.cohort.as_ref().map(Cohort::summary),
        "has_cloud": doc.cloud.is_some(),
        "weights": doc.ahp.as_ref().map(|a| a.weights),
        "job_status": job.map(|j| j.status),
        "created_at": doc.created_at,
        "updated_at": doc.updated_at,
    })))
}

fn cohort_error(e: CohortError) -> ApiError {
    let detail = json!({ "row": e.row() });
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_dataset", e.to_string()).with_detail(detail)
}

#[derive(Debug, Default, Deserialize)]
pub struct DatasetQuery {
    group_map: Option<String>,
}

fn parse_group_map(raw: Option<&str>) -> ApiResult<fairthresh_core::GroupMap> {
    match raw {
        Some(s) if !s.trim().is_empty() => s.parse().map_err(ApiError::validation),
        _ => Ok(fairthresh_core::GroupMap::canonical()),
    }
}

/// Accepts a JSON synthetic spec, a raw `text/csv` body, or a multipart
/// form with a `file` part and an optional `group_map` part
/// (`raw=privileged,raw=unprivileged`).
pub async fn upload_dataset(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<DatasetQuery>,
    req: Request,
) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    let content_type = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();

    let (cohort, source) = if content_type.starts_with("multipart/form-data") {
        let mut multipart = Multipart::from_request(req, &state)
            .await
            .map_err(|e| ApiError::validation(e.to_string()))?;
        let mut csv: Option<Bytes> = None;
        let mut group_map = query.group_map.clone();
        while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::validation(e.to_string()))? {
            let name = field.name().unwrap_or("").to_string();
            let data = field.bytes().await.map_err(|e| ApiError::validation(e.to_string()))?;
            match name.as_str() {
                "group_map" => group_map = Some(String::from_utf8_lossy(&data).into_owned()),
                _ => csv = Some(data),
            }
        }
        let csv = csv.ok_or_else(|| ApiError::validation("multipart body has no file part"))?;
        let map = parse_group_map(group_map.as_deref())?;
        (read_cohort(csv.as_ref(), &map).map_err(cohort_error)?, "csv")
    } else if content_type.starts_with("text/csv") || content_type.starts_with("text/plain") {
        let body = Bytes::from_request(req, &state).await.map_err(|e| ApiError::validation(e.to_string()))?;
        let map = parse_group_map(query.group_map.as_deref())?;
        (read_cohort(body.as_ref(), &map).map_err(cohort_error)?, "csv")
    } else {
        let body = Bytes::from_request(req, &state).await.map_err(|e| ApiError::validation(e.to_string()))?;
        let spec: SyntheticSpec = parse_json(&body)?;
        let cohort = tokio::task::spawn_blocking(move || generate_cohort(&spec))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(cohort_error)?;
        (cohort, "synthetic")
    };

    let mut doc = slot.doc.lock().await;
    if slot.job().is_some_and(|j| j.status.is_active()) {
        return Err(ApiError::conflict("job_running", "an optimization job is running for this session"));
    }
    let summary: CohortSummary = cohort.summary();
    doc.cohort = Some(cohort);
    doc.cloud = None;
    slot.publish_job(None);
    state.store.persist(&slot, &mut doc)?;
    let mut body = serde_json::to_value(summary).map_err(|e| ApiError::internal(e.to_string()))?;
    body["source"] = json!(source);
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRequest {
    n: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    keep_infeasible: bool,
}

#[derive(Debug, Serialize)]
struct CloudPage<'a> {
    sample_count: usize,
    kept_count: usize,
    matched: usize,
    di_bounds: DiBounds,
    seed: u64,
    ranges: Option<MetricRanges>,
    page: usize,
    page_size: usize,
    total_pages: usize,
    points: &'a [MetricPoint],
}

fn cloud_page<'a>(
    cloud: &'a fairthresh_core::TradeoffCloud,
    kept_count: usize,
    page: usize,
    page_size: usize,
) -> CloudPage<'a> {
    let total_pages = cloud.points.len().div_ceil(page_size);
    let start = (page * page_size).min(cloud.points.len());
    let end = (start + page_size).min(cloud.points.len());
    CloudPage {
        sample_count: cloud.sample_count,
        kept_count,
        matched: cloud.points.len(),
        di_bounds: cloud.di_bounds,
        seed: cloud.seed,
        ranges: metric_ranges(cloud).ok(),
        page,
        page_size,
        total_pages,
        points: &cloud.points[start..end],
    }
}

pub async fn sample_tradeoff(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    let req: SampleRequest = parse_json(&body)?;
    if req.n == 0 {
        return Err(ApiError::validation("n must be at least 1"));
    }
    if req.n > state.config.max_samples {
        return Err(ApiError::validation(format!("n must not exceed {}", state.config.max_samples)));
    }
    let mut doc = slot.doc.lock().await;
    let cohort = doc
        .cohort
        .clone()
        .ok_or_else(|| ApiError::conflict("missing_prerequisite", "upload a dataset before sampling"))?;
    let (costs, bounds) = (doc.costs, doc.di_bounds);
    let cloud = tokio::task::spawn_blocking(move || {
        sample_cloud(&cohort, &costs, req.n, bounds, req.seed, req.keep_infeasible)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| ApiError::validation(e.to_string()))?;
    let page = serde_json::to_value(cloud_page(&cloud, cloud.kept_count, 0, state.config.page_size))
        .map_err(|e| ApiError::internal(e.to_string()))?;
    doc.cloud = Some(cloud);
    state.store.persist(&slot, &mut doc)?;
    Ok(Json(page))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct CloudQuery {
    min_utility: Option<f64>,
    max_abs_spd: Option<f64>,
    max_abs_waod: Option<f64>,
    feasible_only: Option<bool>,
    page: Option<usize>,
    page_size: Option<usize>,
}

pub async fn get_tradeoff(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CloudQuery>,
) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    let doc = slot.doc.lock().await;
    let cloud = doc
        .cloud
        .as_ref()
        .ok_or_else(|| ApiError::not_found("no_cloud", "no tradeoff cloud has been sampled"))?;
    let filter = CloudFilter {
        min_utility: q.min_utility,
        max_abs_spd: q.max_abs_spd,
        max_abs_waod: q.max_abs_waod,
        feasible_only: q.feasible_only.unwrap_or(false),
    };
    let page_size = q.page_size.unwrap_or(state.config.page_size);
    if page_size == 0 {
        return Err(ApiError::validation("page_size must be at least 1"));
    }
    let filtered = filter_cloud(cloud, &filter);
    let page = cloud_page(&filtered, cloud.kept_count, q.page.unwrap_or(0), page_size);
    serde_json::to_value(page).map(Json).map_err(|e| ApiError::internal(e.to_string()))
}

enum RatingsRequest {
    Group { raters: Vec<AhpRatings> },
    Single(AhpRatings),
}

pub async fn submit_ratings(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    // Parse once as a value so scale violations surface with their own message.
    let raw: Value = parse_json(&body)?;
    let req: RatingsRequest = if raw.get("raters").is_some() {
        RatingsRequest::Group {
            raters: serde_json::from_value(raw["raters"].clone()).map_err(|e| ApiError::validation(e.to_string()))?,
        }
    } else {
        RatingsRequest::Single(serde_json::from_value(raw).map_err(|e| ApiError::validation(e.to_string()))?)
    };
    let matrix = match req {
        RatingsRequest::Single(r) => ahp::build_matrix(&r),
        RatingsRequest::Group { raters } => ahp::aggregate(&raters).map_err(|e| ApiError::validation(e.to_string()))?,
    };
    let result = ahp::principal_eigen(&matrix, ahp::DEFAULT_TOL, ahp::DEFAULT_MAX_ITER)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let (consistent, message) = check_consistency(&result);
    let mut body = serde_json::to_value(&result).map_err(|e| ApiError::internal(e.to_string()))?;
    body["persisted"] = json!(consistent);
    body["rerate"] = json!(!consistent);
    if !consistent {
        body["message"] = json!(message);
        return Ok(Json(body));
    }
    let mut doc = slot.doc.lock().await;
    doc.ahp = Some(result);
    state.store.persist(&slot, &mut doc)?;
    Ok(Json(body))
}

pub async fn get_weights(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    let doc = slot.doc.lock().await;
    let ahp = doc
        .ahp
        .as_ref()
        .ok_or_else(|| ApiError::not_found("no_weights", "no consistent ratings have been submitted"))?;
    serde_json::to_value(ahp).map(Json).map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct OptimizeRequest {
    #[serde(flatten)]
    tpe: TpeConfig,
    scales: Option<Scales>,
    utility_basis: Option<UtilityBasis>,
}

pub async fn start_optimization(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let slot = slot(&state, &id)?;
    let req: OptimizeRequest = parse_json(&body)?;
    req.tpe.validate().map_err(|e| ApiError::validation(e.to_string()))?;

    let mut doc = slot.doc.lock().await;
    let cohort = doc
        .cohort
        .clone()
        .ok_or_else(|| ApiError::conflict("missing_prerequisite", "upload a dataset before optimizing"))?;
    let ahp = doc
        .ahp
        .as_ref()
        .ok_or_else(|| ApiError::conflict("missing_prerequisite", "submit consistent ratings before optimizing"))?;
    if slot.job().is_some_and(|j| j.status.is_active()) {
        return Err(ApiError::conflict("job_running", "an optimization job is already running"));
    }
    let objective = Objective {
        weights: ahp.weights,
        scales: req.scales.unwrap_or_default(),
        di_bounds: doc.di_bounds,
        utility_basis: req.utility_basis.unwrap_or_default(),
    };
    objective.validate().map_err(|e| ApiError::validation(e.to_string()))?;
    let job_id = uuid::Uuid::new_v4().simple().to_string();
    slot.publish_job(Some(JobState {
        job_id: job_id.clone(),
        status: JobStatus::Pending,
        progress: Progress { completed: 0, total: req.tpe.n_trials },
        result: None,
        error: None,
        submitted_at: now_millis(),
        finished_at: None,
    }));
    state.store.persist(&slot, &mut doc)?;
    let costs = doc.costs;
    drop(doc);

    tokio::spawn(run_job(state.clone(), slot.clone(), cohort, costs, objective, req.tpe));
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id, "status": JobStatus::Pending }))))
}

async fn run_job(
    state: AppState,
    slot: Arc<SessionSlot>,
    cohort: Cohort,
    costs: CostModel,
    objective: Objective,
    config: TpeConfig,
) {
    let _permit = match state.workers.clone().acquire_owned().await {
        Ok(p) => p,
        Err(_) => return,
    };
    slot.update_job(|j| j.status = JobStatus::Running);
    persist_latest(&state, &slot).await;

    let every = state.config.progress_every.max(1);
    let progress_slot = slot.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        tpe_minimize_with(&cohort, &costs, &objective, &config, |trial| {
            let done = trial.index + 1;
            if done % every == 0 || done == config.n_trials {
                progress_slot.update_job(|j| j.progress.completed = done);
            }
        })
    })
    .await;

    slot.update_job(|j| {
        j.finished_at = Some(now_millis());
        match outcome {
            Ok(Ok(result)) => {
                j.status = JobStatus::Done;
                j.progress.completed = j.progress.total;
                j.result = Some(result);
            }
            Ok(Err(e)) => {
                j.status = JobStatus::Failed;
                j.error = Some(e.to_string());
            }
            Err(e) => {
                j.status = JobStatus::Failed;
                j.error = Some(format!("optimization task aborted: {e}"));
            }
        }
    });
    persist_latest(&state, &slot).await;
}

async fn persist_latest(state: &AppState, slot: &SessionSlot) {
    let mut doc = slot.doc.lock().await;
    if let Err(e) = state.store.persist(slot, &mut doc) {
        tracing::error!(session = %doc.id, error = %e, "failed to persist session");
    }
}

pub async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobState>> {
    let slot = slot(&state, &id)?;
    slot.job()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("no_job", "no optimization has been started"))
}

pub async fn get_result(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = slot(&state, &id)?;
    let job = slot
        .job()
        .ok_or_else(|| ApiError::not_found("no_job", "no optimization has been started"))?;
    match (job.status, job.result) {
        (JobStatus::Done, Some(result)) => {
            serde_json::to_value(result).map(Json).map_err(|e| ApiError::internal(e.to_string()))
        }
        (JobStatus::Failed, _) => Err(ApiError::conflict("job_failed", job.error.unwrap_or_default())),
        _ => Err(ApiError::conflict("job_not_done", "the optimization job has not finished")),
    }
}
