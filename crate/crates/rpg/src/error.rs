use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Array or sequence dimensions do not line up.
    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: &'static str, detail: String },

    /// A NaN or infinity was produced or supplied where finite values are required.
    #[error("non-finite value in {context}: {detail}")]
    NonFinite { context: &'static str, detail: String },

    /// A caller-supplied argument is outside its documented domain.
    #[error("invalid argument for {context}: {detail}")]
    Invalid { context: &'static str, detail: String },

    /// Config file problem; `line` is 1-based when known.
    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    /// Binary container or CSV dump could not be decoded.
    #[error("format error in {context}: {detail}")]
    Format { context: &'static str, detail: String },

    /// Environment protocol violation (step after terminal, step before reset, ...).
    #[error("environment error: {0}")]
    Env(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { context, detail: detail.into() }
    }

    pub fn non_finite(context: &'static str, detail: impl Into<String>) -> Self {
        Error::NonFinite { context, detail: detail.into() }
    }

    pub fn invalid(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid { context, detail: detail.into() }
    }

    pub fn format(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Format { context, detail: detail.into() }
    }
}
