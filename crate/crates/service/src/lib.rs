//! Local HTTP/JSON API over the `idde` analysis core.
//!
//! | method | path | body / query | reply |
//! |---|---|---|---|
//! | GET | `/health` | | build info |
//! | GET | `/datasets` | | dataset summaries |
//! | POST | `/datasets` | CSV (`text/csv`) or generator JSON | `{id, n, d_ambient, duplicate_pairs, ...}` |
//! | GET | `/datasets/{id}` | | dataset summary |
//! | DELETE | `/datasets/{id}` | | 204 |
//! | GET | `/datasets/{id}/curve` | `points`, `format=json\|csv` | `{n, lr, points}` |
//! | POST | `/datasets/{id}/fit` | `{range, d_override?}` | `SegmentFit` |
//! | GET | `/datasets/{id}/multiscale` | `min_pairs`, `window_fraction`, ... | scan and plateaus |
//! | GET | `/bias/table` | `n`, `dmin`, `dmax` | `BiasTable` |
//! | POST | `/bias/compensate` | `{n, d_hat, h_hat, mode?}` | `Compensation` |
//! | GET | `/bias/requirements` | `d` | `DataRequirement` |
//!
//! Errors are `{code, message, detail}` with a matching HTTP status.

mod error;
mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use idde::{
    CsvOptions, Dataset64, Generator, InversionMode, MultiscaleOptions, PairOptions, ScaleRange,
    WindowConfig, DEFAULT_PAIR_BUDGET,
};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use store::{Entry, EntrySummary, SessionStore};

/// Curves longer than this are resampled unless `points` is given.
pub const DEFAULT_MAX_CURVE_POINTS: usize = 2000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub pair_budget: usize,
    pub threads: Option<usize>,
    pub max_curve_points: usize,
    /// Uploads are saved here as `<id>.csv` and reloaded on startup.
    pub data_dir: Option<PathBuf>,
    /// Static assets (the UI) served for paths no route claims.
    pub static_dir: Option<PathBuf>,
    pub max_body_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            pair_budget: DEFAULT_PAIR_BUDGET,
            threads: None,
            max_curve_points: DEFAULT_MAX_CURVE_POINTS,
            data_dir: None,
            static_dir: None,
            max_body_bytes: 256 << 20,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("cannot load {path}: {message}")]
    DataDir { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            store: Arc::new(SessionStore::default()),
            config: Arc::new(config),
        }
    }

    fn pair_options(&self, subsample_seed: Option<u64>) -> PairOptions {
        PairOptions {
            threads: self.config.threads,
            pair_budget: self.config.pair_budget,
            subsample_seed,
        }
    }

    /// Registers every `<id>.csv` in the data directory.
    pub fn load_data_dir(&self) -> Result<usize, ServiceError> {
        let Some(dir) = &self.config.data_dir else {
            return Ok(0);
        };
        std::fs::create_dir_all(dir)?;
        let mut loaded = 0;
        for item in std::fs::read_dir(dir)? {
            let path = item?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
                continue;
            };
            let fail = |message: String| ServiceError::DataDir {
                path: path.clone(),
                message,
            };
            let file = std::fs::File::open(&path)?;
            let ds: Dataset64 =
                idde::load_csv(file, &CsvOptions::default()).map_err(|e| fail(e.to_string()))?;
            let profile = idde::pairwise_radii_with(&ds, &self.pair_options(Some(0)))
                .map_err(|e| fail(e.to_string()))?;
            let source = format!("data_dir:{}", path.display());
            self.store.insert(Entry::new(id, source, ds, profile));
            loaded += 1;
        }
        Ok(loaded)
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_body_bytes;
    let static_dir = state.config.static_dir.clone();
    let app = Router::new()
        .route("/health", get(health))
        .route("/datasets", get(list_datasets).post(create_dataset))
        .route("/datasets/{id}", get(get_dataset).delete(delete_dataset))
        .route("/datasets/{id}/curve", get(get_curve))
        .route("/datasets/{id}/fit", post(fit))
        .route("/datasets/{id}/multiscale", get(multiscale))
        .route("/bias/table", get(bias_table))
        .route("/bias/compensate", post(compensate))
        .route("/bias/requirements", get(requirements))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: &str, config: ServiceConfig) -> Result<(), ServiceError> {
    let socket: SocketAddr = addr.parse().map_err(|e| ServiceError::Bind {
        addr: addr.to_owned(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidInput, e),
    })?;
    let listener = TcpListener::bind(socket)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: addr.to_owned(),
            source,
        })?;
    let state = AppState::new(config);
    state.load_data_dir()?;
    serve_on(listener, state).await
}

pub async fn serve_on(listener: TcpListener, state: AppState) -> Result<(), ServiceError> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

type ApiResult<T> = Result<T, ApiError>;

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    b.map(|Json(v)| v).map_err(|e| match e {
        JsonRejection::JsonDataError(_) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", e.body_text())
        }
        _ => ApiError::bad_request(e.body_text()),
    })
}

fn lookup(state: &AppState, id: &str) -> ApiResult<Arc<Entry>> {
    state.store.get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": idde_version(),
        "datasets": state.store.list().len(),
        "pair_budget": state.config.pair_budget,
        "max_curve_points": state.config.max_curve_points,
    }))
}

fn idde_version() -> &'static str {
    // core and service share the workspace version
    env!("CARGO_PKG_VERSION")
}

async fn list_datasets(State(state): State<AppState>) -> Json<Vec<EntrySummary>> {
    Json(state.store.list())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct UploadQuery {
    /// Seed for pair subsampling when the dataset exceeds the pair budget.
    subsample_seed: Option<u64>,
    #[serde(default)]
    header: bool,
    delimiter: Option<char>,
    /// Comma-separated zero-based column indices.
    columns: Option<String>,
    /// Embed a single-column series into windows of this width.
    window: Option<usize>,
    /// Sliding stride; disjoint windows when absent.
    stride: Option<usize>,
    name: Option<String>,
}

impl UploadQuery {
    fn csv_options(&self) -> ApiResult<CsvOptions> {
        let delimiter = match self.delimiter {
            None => b',',
            Some(c) if c.is_ascii() => c as u8,
            Some(c) => return Err(ApiError::bad_request(format!("delimiter {c:?} is not ASCII"))),
        };
        let columns = match &self.columns {
            None => None,
            Some(list) => Some(
                list.split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| ApiError::bad_request(format!("bad column list {list:?}")))?,
            ),
        };
        Ok(CsvOptions {
            delimiter,
            has_header: self.header,
            columns,
        })
    }
}

async fn create_dataset(
    State(state): State<AppState>,
    q: Result<Query<UploadQuery>, QueryRejection>,
    headers: HeaderMap,
    payload: Bytes,
) -> ApiResult<Response> {
    let q = query(q)?;
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let pairs = state.pair_options(q.subsample_seed);
    let id = uuid::Uuid::new_v4().simple().to_string();
    let data_dir = state.config.data_dir.clone();
    let entry = blocking(move || {
        let (ds, source) = if is_json {
            let g: Generator = serde_json::from_slice(&payload).map_err(|e| {
                ApiError::new(StatusCode::BAD_REQUEST, "parse_error", format!("generator spec: {e}"))
            })?;
            (g.generate::<f64>()?, g.describe())
        } else {
            let opts = q.csv_options()?;
            let ds = match q.window {
                Some(w) => {
                    let series = idde::load_series::<f64, _>(&payload[..], &opts)?;
                    let cfg = match q.stride {
                        Some(s) => WindowConfig::sliding(w, s),
                        None => WindowConfig::disjoint(w),
                    };
                    idde::window_series(&series, &cfg)?
                }
                None => idde::load_csv::<f64, _>(&payload[..], &opts)?,
            };
            (ds, q.name.clone().unwrap_or_else(|| "upload".into()))
        };
        let profile = idde::pairwise_radii_with(&ds, &pairs)?;
        if let Some(dir) = data_dir {
            persist(&dir, &id, &ds)?;
        }
        Ok(Entry::new(id, source, ds, profile))
    })
    .await?;
    let entry = state.store.insert(entry);
    Ok((StatusCode::CREATED, Json(entry.summary())).into_response())
}

fn persist(dir: &Path, id: &str, ds: &Dataset64) -> ApiResult<()> {
    let io = |e: std::io::Error| ApiError::internal(format!("cannot persist upload: {e}"));
    std::fs::create_dir_all(dir).map_err(io)?;
    let file = std::fs::File::create(dir.join(format!("{id}.csv"))).map_err(io)?;
    ds.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

async fn get_dataset(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<EntrySummary>> {
    Ok(Json(lookup(&state, &id)?.summary()))
}

async fn delete_dataset(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<StatusCode> {
    state.store.remove(&id).ok_or_else(|| ApiError::not_found(&id))?;
    if let Some(dir) = &state.config.data_dir {
        let _ = std::fs::remove_file(dir.join(format!("{id}.csv")));
    }
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveQuery {
    /// `0` for the raw curve, `K >= 2` for `K` log-uniform points.
    points: Option<usize>,
    format: Option<String>,
}

async fn get_curve(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<CurveQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = query(q)?;
    let csv = match q.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(other) => return Err(ApiError::bad_request(format!("unknown format {other:?}"))),
    };
    let entry = lookup(&state, &id)?;
    let raw = entry.curve().await?;
    let target = match q.points {
        Some(0) => None,
        Some(k) => Some(k),
        None if raw.len() > state.config.max_curve_points => Some(state.config.max_curve_points),
        None => None,
    };
    let curve = match target {
        None => raw,
        Some(k) => Arc::new(raw.resample(k)?),
    };
    if csv {
        Ok(([(header::CONTENT_TYPE, "text/csv")], curve.to_csv_string()).into_response())
    } else {
        Ok(Json(&*curve).into_response())
    }
}

/// `{"log2_r_min": a, "log2_r_max": b}` or `[a, b]`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RangeBody {
    Object { log2_r_min: f64, log2_r_max: f64 },
    Pair([f64; 2]),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitBody {
    range: RangeBody,
    d_override: Option<f64>,
}

async fn fit(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    b: Result<Json<FitBody>, JsonRejection>,
) -> ApiResult<Json<idde::SegmentFit64>> {
    let b = body(b)?;
    let entry = lookup(&state, &id)?;
    let (lo, hi) = match b.range {
        RangeBody::Object {
            log2_r_min,
            log2_r_max,
        } => (log2_r_min, log2_r_max),
        RangeBody::Pair([lo, hi]) => (lo, hi),
    };
    let range = ScaleRange::new(lo, hi)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_range", e.to_string()))?;
    let curve = entry.curve().await?;
    Ok(Json(idde::fit_segment(&curve, &range, b.d_override)?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiscaleQuery {
    min_pairs: Option<usize>,
    /// `0` scans the floored raw curve.
    resample: Option<usize>,
    window_fraction: Option<f64>,
    stride_fraction: Option<f64>,
    tolerance: Option<f64>,
    min_windows: Option<usize>,
}

async fn multiscale(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<MultiscaleQuery>, QueryRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let q = query(q)?;
    let mut opts = MultiscaleOptions::<f64>::default();
    if let Some(v) = q.min_pairs {
        opts.min_pairs = v;
    }
    if let Some(v) = q.resample {
        opts.resample = (v > 0).then_some(v);
    }
    if let Some(v) = q.window_fraction {
        opts.window_fraction = v;
    }
    if let Some(v) = q.stride_fraction {
        opts.stride_fraction = v;
    }
    if let Some(v) = q.tolerance {
        opts.plateau.tolerance = v;
    }
    if let Some(v) = q.min_windows {
        opts.plateau.min_windows = v;
    }
    let entry = lookup(&state, &id)?;
    let curve = entry.curve().await?;
    let ms = blocking(move || Ok(idde::analyze_multiscale(&curve, &opts)?)).await?;
    Ok(Json(json!({
        "window_width": ms.window_width,
        "stride": ms.stride,
        "scan": ms.scan,
        "plateaus": ms.plateaus,
        "fine": ms.fine(),
        "coarse": ms.coarse(),
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableQuery {
    n: u64,
    dmin: u32,
    dmax: u32,
}

async fn bias_table(
    q: Result<Query<TableQuery>, QueryRejection>,
) -> ApiResult<Json<idde::BiasTable64>> {
    let q = query(q)?;
    Ok(Json(idde::bias_table(q.n, q.dmin, q.dmax)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompensateBody {
    n: u64,
    /// Apparent ID to invert; ignored when `d_bar` is given.
    d_hat: Option<f64>,
    /// Known compensated ID.
    d_bar: Option<f64>,
    h_hat: f64,
    #[serde(default)]
    mode: InversionMode,
}

async fn compensate(
    b: Result<Json<CompensateBody>, JsonRejection>,
) -> ApiResult<Json<idde::Compensation64>> {
    let b = body(b)?;
    let c = match (b.d_bar, b.d_hat) {
        (Some(d_bar), d_hat) => {
            let mut c = idde::compensate(b.h_hat, b.n, d_bar)?;
            c.d_hat = d_hat;
            c
        }
        (None, Some(d_hat)) => idde::compensate_estimate(b.n, d_hat, b.h_hat, b.mode)?,
        (None, None) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_body",
                "either d_hat or d_bar is required",
            ))
        }
    };
    Ok(Json(c))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequirementsQuery {
    d: f64,
}

async fn requirements(
    q: Result<Query<RequirementsQuery>, QueryRejection>,
) -> ApiResult<Json<idde::bias::DataRequirement<f64>>> {
    let q = query(q)?;
    Ok(Json(idde::min_observations(q.d)?))
}
