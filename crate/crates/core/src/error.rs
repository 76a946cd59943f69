use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("transition matrix must be square with {expected} columns, row {row} has {found}")]
    NotSquare {
        expected: usize,
        row: usize,
        found: usize,
    },
    #[error("alphabet must contain at least one letter")]
    EmptyAlphabet,
    #[error("letter {letter} has no {direction}")]
    EmptyRowOrColumn {
        letter: usize,
        direction: &'static str,
    },
    #[error("shift is not topologically mixing (no power T^N with N <= {bound} is positive)")]
    NotMixing { bound: usize },
    #[error("word {word:?} is not admissible")]
    Inadmissible { word: Vec<u16> },
    #[error("sample word stores {have} letters but {need} are required")]
    DepthTooShallow { need: usize, have: usize },
    #[error("objects live on different shifts")]
    ShiftMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("potential must be strictly positive (min value {min})")]
    NotPositive { min: f64 },
    #[error("cylinder basis of depth {depth} over {alphabet} letters is too large")]
    BasisTooLarge { depth: usize, alphabet: usize },
    #[error("power iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("root bracket failed: {0}")]
    BracketFail(String),
    #[error("target {x:?} lies outside the gradient range of the pressure surface")]
    OutsideGradientRange { x: [f64; 2] },
    #[error("pressure Hessian is degenerate at z={z:?} (det {det:e})")]
    DegenerateHessian { z: [f64; 2], det: f64 },
    #[error("slope {m} outside the admissible range ({lo}, {hi})")]
    SlopeOutOfRange { m: f64, lo: f64, hi: f64 },
    #[error("critical exponent estimate inconclusive: {0}")]
    Inconclusive(String),
    #[error("node budget of {budget} exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("Hessian at the saddle point is not positive definite")]
    NotPositiveDefinite,
    #[error("quadrature step {step} too coarse (needs <= {max_step})")]
    GridTooCoarse { step: f64, max_step: f64 },
    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
