use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("dataset root {} does not exist", .0.display())]
    RootNotFound(PathBuf),
    #[error("unknown image id {0}")]
    UnknownImage(u32),
    #[error("unknown species id {0}")]
    UnknownSpecies(u32),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("could not bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] gramseg::Error),
    #[error("worker task failed: {0}")]
    Join(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::UnknownImage(_) | Self::UnknownSpecies(_) => StatusCode::NOT_FOUND,
            Self::InvalidConfig(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::Core(e) if is_parameter_error(e) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

fn is_parameter_error(e: &gramseg::Error) -> bool {
    use gramseg::Error as E;
    matches!(
        e,
        E::TooFewDistinctColors { .. }
            | E::InvalidClusterIndex { .. }
            | E::EmptyForeground
            | E::InvalidParameter(_)
            | E::EvenOrNonPositiveDiameter(_)
            | E::InvalidSpecies(_)
    )
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}
