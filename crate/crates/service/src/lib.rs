//! HTTP/JSON facade over the threshold-optimization workflow.
//!
//! A session walks through three steps: upload (or synthesize) a scored
//! cohort and inspect the sampled fairness-utility cloud, submit pairwise
//! AHP ratings, then run a background TPE optimization. Optimizing before a
//! consistent rating exists, or sampling before a cohort exists, is a 409.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/questions` | the three rating questions |
//! | POST | `/sessions` | create (`{costs?, di_bounds?}`) |
//! | GET | `/sessions/{id}` | session summary |
//! | POST | `/sessions/{id}/dataset` | JSON synthetic spec, `text/csv`, or multipart `file` |
//! | POST | `/sessions/{id}/tradeoff` | `{n, seed, keep_infeasible}` |
//! | GET | `/sessions/{id}/tradeoff` | `min_utility, max_abs_spd, max_abs_waod, feasible_only, page, page_size` |
//! | POST | `/sessions/{id}/ratings` | `{util_vs_spd, util_vs_waod, spd_vs_waod}` or `{raters: [...]}` |
//! | GET | `/sessions/{id}/weights` | stored AHP result |
//! | POST | `/sessions/{id}/optimize` | TPE overrides, optional `scales` |
//! | GET | `/sessions/{id}/job` | job state and progress |
//! | GET | `/sessions/{id}/result` | optimization result once done |

mod api;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use tokio::sync::Semaphore;

pub use error::{ApiError, ErrorBody};
pub use store::{JobState, JobStatus, Progress, SessionDoc, Store, StoreError};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Concurrent optimization jobs.
    pub workers: usize,
    /// Default cloud page size.
    pub page_size: usize,
    /// Trials between published progress updates.
    pub progress_every: usize,
    pub max_samples: usize,
    /// Static web assets served under `/`, if any.
    pub static_dir: Option<PathBuf>,
    /// Rating question wording, see `ahp::questions`.
    pub question_template: String,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            workers: 2,
            page_size: 2000,
            progress_every: 25,
            max_samples: 1_000_000,
            static_dir: None,
            question_template: fairthresh_core::ahp::DEFAULT_QUESTION_TEMPLATE.to_string(),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    workers: Arc<Semaphore>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn open(config: ServiceConfig) -> Result<Self, StoreError> {
        let store = Store::open(&config.data_dir)?;
        Ok(Self {
            store: Arc::new(store),
            workers: Arc::new(Semaphore::new(config.workers.max(1))),
            config: Arc::new(config),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.config.static_dir.clone();
    let router = Router::new()
        .route("/healthz", get(api::healthz))
        .route("/questions", get(api::questions))
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}", get(api::get_session))
        .route("/sessions/{id}/dataset", post(api::upload_dataset))
        .route("/sessions/{id}/tradeoff", post(api::sample_tradeoff).get(api::get_tradeoff))
        .route("/sessions/{id}/ratings", post(api::submit_ratings))
        .route("/sessions/{id}/weights", get(api::get_weights))
        .route("/sessions/{id}/optimize", post(api::start_optimization))
        .route("/sessions/{id}/job", get(api::get_job))
        .route("/sessions/{id}/result", get(api::get_result))
        .with_state(state);
    match static_dir {
        Some(dir) => router.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => router,
    }
}

/// Binds `addr` and serves until Ctrl-C. `on_bound` receives the actual
/// local address (useful with port 0).
pub async fn serve(
    config: ServiceConfig,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<(), ServeError> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}
