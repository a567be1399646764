use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite coordinates or otherwise invalid numeric input.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{name} out of range: {detail}")]
    Range { name: &'static str, detail: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// A configured size cap (BFS radius, box size, ...) would be exceeded.
    #[error("resource cap exceeded: {0}")]
    Cap(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("classification failed: {0}")]
    Classification(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// No ladder scale met the threshold; carries the averaged profile.
    #[error("no scale has averaged δ below θ = {theta}; profile {profile:?}")]
    NoScale { theta: f64, profile: Vec<f64> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite, got {values:?}")))
    }
}
