use thiserror::Error;

/// Errors raised by the numerical modules. Every variant names the module
/// and the clause that failed so that CLI messages are self-explanatory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrushinError {
    #[error("config: {0}")]
    Config(String),

    #[error("grid: {0}")]
    Grid(String),

    #[error("{module}: size mismatch (expected {expected}, got {got})")]
    SizeMismatch {
        module: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("spectral: {0}")]
    Spectral(String),

    #[error("spectral: grid under-resolved for n={n}, gamma={gamma}: need nx >= {required_nx}, have {nx}")]
    UnderResolved {
        n: usize,
        gamma: f64,
        nx: usize,
        required_nx: usize,
    },

    #[error("bounds: {0}")]
    Bounds(String),

    #[error("evolution: {0}")]
    Evolution(String),

    #[error("observability: {0}")]
    Observability(String),

    #[error("control: {0}")]
    Control(String),

    #[error("carleman: {0}")]
    Carleman(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for GrushinError {
    fn from(e: std::io::Error) -> Self {
        GrushinError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GrushinError>;
