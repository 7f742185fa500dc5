use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("malformed body spec: {0}")]
    Spec(String),

    #[error("chart construction failed: {0}")]
    Chart(String),

    #[error("degenerate point: gradient vanishes at {0:?}")]
    DegeneratePoint(Vec<f64>),

    #[error("point outside domain: {0}")]
    Domain(String),

    #[error("shadow boundary not bracketed inside the chart at y'' = {y:?} (expansion cap hit: {cap_hit})")]
    BoundaryNotInChart { y: Vec<f64>, cap_hit: bool },

    #[error("non-monotone chart derivative detected: {0}")]
    NotStrictlyConvex(String),

    #[error("root not resolved: residual {residual:e} exceeds tolerance {tol:e}")]
    RootNotResolved { residual: f64, tol: f64 },

    #[error("empty curve: all {failed} grid points failed")]
    EmptyCurve { failed: usize },

    #[error("point lies in the interior of the target body")]
    InteriorPoint,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("negative hitting parameter t = {0}")]
    NegativeHittingTime(f64),

    #[error("rank deficiency: sigma_min {sigma_min:e} below tolerance (sigma_max {sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("seed failure: {0}")]
    Seed(String),

    #[error("bodies overlap or touch (separation {separation:e})")]
    Overlap { separation: f64 },

    #[error("flat curve: all sampled increments vanish")]
    FlatCurve,

    #[error("csv schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
