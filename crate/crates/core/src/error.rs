use thiserror::Error;

/// A parameter failed validation. `field` is a dotted path such as
/// `schedule.toggle_freq`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ParamError {
    pub field: String,
    pub reason: String,
}

impl ParamError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(
        "quadrature did not converge: estimate {integral:e}, error {achieved_error:e} > tolerance {tolerance:e} after {subdivisions} subdivisions"
    )]
    QuadratureNonConvergence {
        integral: f64,
        achieved_error: f64,
        tolerance: f64,
        subdivisions: usize,
    },
    #[error("tabulated spectral density needs strictly increasing positive ω and positive J: {0}")]
    InvalidTable(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(
        "detuning {epsilon} meV puts the well crossing x0 = {x0} nm outside (-L, L) with L = {half_separation} nm"
    )]
    DetuningOutOfRange {
        epsilon: f64,
        x0: f64,
        half_separation: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("period map is the identity; its fixed point is not unique")]
    DegenerateMap,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("grid point (offset {offset} meV, freq {freq} Hz): {source}")]
    GridPoint {
        offset: f64,
        freq: f64,
        #[source]
        source: Box<DynamicsError>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("no even-mode expansion with at most {requested} modes keeps n within [0, 1]")]
    NormalizationInfeasible { requested: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("optimizer did not converge after {iterations} iterations (objective {objective:e}, gradient norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        objective: f64,
        gradient_norm: f64,
        best: Vec<f64>,
    },
    #[error("forward model failed: {0}")]
    ForwardModelFailure(#[from] DynamicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Malformed input or output files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{context}: {detail}")]
    Format { context: String, detail: String },
    #[error("grid mismatch in {context}: {detail}")]
    GridMismatch { context: String, detail: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    pub fn format(context: impl Into<String>, detail: impl Into<String>) -> Self {
        DataError::Format {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
