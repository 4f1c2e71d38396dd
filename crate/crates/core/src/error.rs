use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum RadonError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite integrand value {value} at node {node:?}")]
    NonFinite { node: Vec<f64>, value: f64 },

    #[error("pole {pole} is not usable on the grid [{min}, {max}]: {reason}")]
    PoleOutsideGrid {
        pole: f64,
        min: f64,
        max: f64,
        reason: &'static str,
    },

    #[error("sinogram has derivative order {found}, expected {expected}")]
    DerivativeOrder { expected: usize, found: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("source is not certified for {0}")]
    Uncertified(String),

    #[error(
        "backprojection clamped {fraction:.3} of the direction mass at point {point:?} \
         (limit {limit}); first offending s-node {s_node:?}"
    )]
    ClampLimit {
        point: Vec<f64>,
        s_node: Vec<f64>,
        fraction: f64,
        limit: f64,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<RadonError>,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl RadonError {
    pub fn context(self, context: impl Into<String>) -> Self {
        RadonError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by malformed input configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            RadonError::Config { .. }
            | RadonError::InvalidParams(_)
            | RadonError::InvalidGrid(_)
            | RadonError::Dimension(_)
            | RadonError::Format(_) => true,
            RadonError::Context { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, RadonError>;
