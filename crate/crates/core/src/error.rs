use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kinetic energy is not coercive; minimal action is unbounded below")]
    NotCoercive,

    #[error("window exhausted: solution still touches the lattice boundary at half width {half_width}")]
    WindowExhausted { half_width: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("task (seed index {seed_index}, v = {v}): {source}")]
    Task {
        seed_index: usize,
        v: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for the window exhaustion failure, also when wrapped in a task annotation.
    pub fn is_window_exhausted(&self) -> bool {
        match self {
            Error::WindowExhausted { .. } => true,
            Error::Task { source, .. } => source.is_window_exhausted(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
