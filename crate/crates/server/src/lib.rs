//! HTTP review service for gramseg.
//!
//! Serves a dataset for interactive parameter choice: list species and
//! images, preview a segmentation recipe on one image, accept labels, and
//! store per-species recipes. Everything lives under `/api/v1`.

pub mod error;
pub mod session;

use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use gramseg::SpeciesConfig;
use tokio::net::TcpListener;

pub use error::{Result, ServiceError};
pub use session::Session;
use session::{ApplyRequest, ImageRequest};

/// Environment variable that supplies the port when none is given explicitly.
pub const PORT_ENV: &str = "GRAMSEG_PORT";
pub const DEFAULT_PORT: u16 = 8610;

type Shared = Arc<Session>;

/// Runs blocking session work off the async executor.
async fn blocking<T, F>(session: &Shared, f: F) -> Result<T>
where
    T: Send + 'static,
    F: FnOnce(&Session) -> Result<T> + Send + 'static,
{
    let session = Arc::clone(session);
    tokio::task::spawn_blocking(move || f(&session))
        .await
        .map_err(|e| ServiceError::Join(e.to_string()))?
}

async fn list_species(State(s): State<Shared>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(&s, |s| Ok(s.species())).await?))
}

async fn list_images(State(s): State<Shared>, Path(id): Path<u32>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(&s, move |s| s.images(id)).await?))
}

async fn get_image(State(s): State<Shared>, Path(id): Path<u32>) -> Result<impl IntoResponse> {
    let png = blocking(&s, move |s| s.source_png(id)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

async fn preview(State(s): State<Shared>, Json(req): Json<ImageRequest>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(&s, move |s| s.preview(&req)).await?))
}

async fn accept(State(s): State<Shared>, Json(req): Json<ImageRequest>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(&s, move |s| s.accept(&req)).await?))
}

async fn get_config(State(s): State<Shared>, Path(id): Path<u32>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(&s, move |s| s.config_for(id)).await?))
}

async fn put_config(
    State(s): State<Shared>,
    Path(id): Path<u32>,
    Json(cfg): Json<SpeciesConfig>,
) -> Result<impl IntoResponse> {
    Ok(Json(blocking(&s, move |s| s.set_config(id, cfg)).await?))
}

async fn apply_species(
    State(s): State<Shared>,
    Path(id): Path<u32>,
    body: Option<Json<ApplyRequest>>,
) -> Result<impl IntoResponse> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    Ok(Json(blocking(&s, move |s| s.apply_species(id, &req)).await?))
}

async fn progress(State(s): State<Shared>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(&s, |s| Ok(s.progress())).await?))
}

pub fn router(session: Arc<Session>) -> Router {
    let api = Router::new()
        .route("/species", get(list_species))
        .route("/species/{id}/images", get(list_images))
        .route("/species/{id}/apply", post(apply_species))
        .route("/images/{id}", get(get_image))
        .route("/preview", post(preview))
        .route("/accept", post(accept))
        .route("/configs/{id}", get(get_config).put(put_config))
        .route("/progress", get(progress));
    Router::new().nest("/api/v1", api).with_state(session)
}

/// Port precedence: explicit value, then [`PORT_ENV`], then [`DEFAULT_PORT`].
pub fn resolve_port(explicit: Option<u16>) -> Result<u16> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| ServiceError::InvalidConfig(format!("{PORT_ENV}={v} is not a port number"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

/// Binds the loopback interface; the service is meant for a local operator.
pub async fn bind(port: u16) -> Result<TcpListener> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServiceError::PortInUse(port),
        _ => ServiceError::Bind {
            addr: addr.to_string(),
            source: e,
        },
    })
}

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub root: PathBuf,
    pub state: PathBuf,
    pub labels: Option<PathBuf>,
    pub port: Option<u16>,
}

/// Opens the session, binds and serves until the process is stopped.
pub async fn serve(opts: ServeOptions) -> Result<()> {
    let session = tokio::task::spawn_blocking(move || Session::open(&opts.root, &opts.state, opts.labels))
        .await
        .map_err(|e| ServiceError::Join(e.to_string()))??;
    let listener = bind(resolve_port(opts.port)?).await?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Bind {
        addr: "listener".into(),
        source: e,
    })?;
    log::info!(
        "serving {} images on http://{addr}/api/v1 (state {})",
        session.manifest().entries.len(),
        session.state_path().display()
    );
    axum::serve(listener, router(Arc::new(session)))
        .await
        .map_err(|e| ServiceError::Bind {
            addr: addr.to_string(),
            source: e,
        })
}
