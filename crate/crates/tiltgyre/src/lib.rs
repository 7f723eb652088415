//! Explicit approximate solutions of the linearized rotating, stratified
//! Boussinesq system above a tilted bottom.
//!
//! The solution is built order by order in powers of the Rossby number as a sum
//! of an interior (quasi-geostrophic) part, a Munk layer and an Ekman layer.
//! Horizontal dependence is spectral, vertical dependence is carried exactly as
//! sums of polynomials times exponentials, so every residual is evaluated in
//! closed form.

pub mod cascade;
pub mod cli_io;
pub mod ekman_layer;
pub mod green_kernel;
pub mod jet;
pub mod linalg;
pub mod munk_roots;
pub mod poly;
pub mod qg_builder;
pub mod regime;
pub mod spectral_field;

pub use num_complex::Complex64 as C64;

/// Errors from every stage of the pipeline. `module()` names the stage.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("RegimeViolation({0})")]
    RegimeViolation(String),
    #[error("RegimeError: {0}")]
    RegimeError(String),
    #[error("H4Violation: {0}")]
    H4Violation(String),
    #[error("TailTooLarge: relative tail {tail:.3e} exceeds budget {budget:.3e}")]
    TailTooLarge { tail: f64, budget: f64 },
    #[error("PureImaginaryRoot: {0}")]
    PureImaginaryRoot(String),
    #[error("SignSplitViolation: {0} roots with positive real part")]
    SignSplitViolation(usize),
    #[error("IllConditioned: {0}")]
    IllConditioned(String),
    #[error("GammaTooLarge: gamma {gamma} exceeds {limit}")]
    GammaTooLarge { gamma: f64, limit: f64 },
    #[error("SingularTraceSystem at xi=({0:.4}, {1:.4})")]
    SingularTraceSystem(f64, f64),
    #[error("VerticalTraceNonzero: |u3(0)| = {0:.3e}")]
    VerticalTraceNonzero(f64),
    #[error("HypothesisViolated: {0}")]
    HypothesisViolated(String),
    #[error("DegenerateTilt: {0}")]
    DegenerateTilt(String),
    #[error("MatchFailure: {0}")]
    MatchFailure(String),
    #[error("NullspaceFailure: {0}")]
    NullspaceFailure(String),
    #[error("InconsistentRegime: {0}")]
    InconsistentRegime(String),
    #[error("DepthExhausted: order {requested} exceeds budget {budget}")]
    DepthExhausted { requested: usize, budget: usize },
    #[error("MissingRun: {0}")]
    MissingRun(String),
    #[error("Config: {0}")]
    Config(String),
    #[error("Io: {0}")]
    Io(String),
}

impl Error {
    pub fn module(&self) -> &'static str {
        use Error::*;
        match self {
            RegimeViolation(_) | RegimeError(_) => "regime",
            H4Violation(_) | TailTooLarge { .. } => "spectral_field",
            PureImaginaryRoot(_) | SignSplitViolation(_) => "munk_roots",
            IllConditioned(_) | GammaTooLarge { .. } => "green_kernel",
            SingularTraceSystem(..) | VerticalTraceNonzero(_) | HypothesisViolated(_) => "qg_builder",
            DegenerateTilt(_) | MatchFailure(_) | NullspaceFailure(_) | InconsistentRegime(_) => {
                "ekman_layer"
            }
            DepthExhausted { .. } => "cascade",
            MissingRun(_) | Config(_) | Io(_) => "cli_io",
        }
    }

    /// `module::Variant(...)` form used in CLI messages.
    pub fn qualified(&self) -> String {
        format!("{}::{}", self.module(), self)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
