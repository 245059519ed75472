use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{op}: shape mismatch, left {left:?} vs right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("backward already taken on this graph; reset before another pass")]
    BackwardTwice,

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(usize),

    #[error("non-finite loss at step {step}: sup={sup} cl={cl} cm={cm} total={total}")]
    NonFiniteLoss {
        step: usize,
        sup: f64,
        cl: f64,
        cm: f64,
        total: f64,
    },

    #[error("zero reference norm")]
    ZeroNorm,

    #[error("rank-deficient least-squares system on support {0:?}")]
    RankDeficient(Vec<usize>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
