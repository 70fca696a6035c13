use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("density must be positive and finite, got {0}")]
    NonPositiveDensity(f64),

    #[error("state ({rho}, {q}) is not finite")]
    NonFiniteState { rho: f64, q: f64 },

    #[error("density {rho} is outside the operating range of the z-factor law")]
    OutOfOperatingRange { rho: f64 },

    #[error("pressure law is not hyperbolic at density {rho}")]
    NonHyperbolic { rho: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0} requires the isentropic pressure law")]
    RequiresIsentropic(&'static str),

    #[error("curve parameter {sigma} leaves the admissible density range")]
    CurveOutOfRange { sigma: f64 },

    #[error("vacuum forms between the states (left rho={left_rho}, right rho={right_rho})")]
    Vacuum { left_rho: f64, right_rho: f64 },

    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("root bracketing failed for {what} on [{lo}, {hi}]")]
    BracketFailure { what: &'static str, lo: f64, hi: f64 },

    #[error("coupling `{kind}` expects {expected} edges, found {found}")]
    ArityMismatch {
        kind: String,
        expected: String,
        found: usize,
    },

    #[error("compressor pressure ratio {ratio} is below one")]
    PressureRatioBelowOne { ratio: f64 },

    #[error("junction Jacobian is singular (relative determinant {det:e})")]
    SingularJacobian { det: f64 },

    #[error("stationary profile approaches the sonic point at x={x} (relative margin {margin:e})")]
    SonicPoint { x: f64, margin: f64 },

    #[error("state ({rho}, {q}) is not subsonic")]
    NotSubsonic { rho: f64, q: f64 },

    #[error("unknown {what} `{name}`")]
    UnknownKind { what: &'static str, name: String },

    #[error("CFL condition violated: courant number {courant} > 1")]
    CflViolation { courant: f64 },

    #[error("state left the ball of radius {delta} (norm {norm})")]
    LeftTrustRegion { delta: f64, norm: f64 },

    #[error("discrete gradient {gradient} exceeds the gate {gate}")]
    GradientGate { gradient: f64, gate: f64 },

    #[error("admissibility of D bounds violated: {0}")]
    InvalidSpeedBounds(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid network: {0}")]
    Network(String),

    #[error("at t={time}, {location}: {source}")]
    Step {
        time: f64,
        location: String,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario: {0}")]
    Scenario(String),
}

impl Error {
    pub(crate) fn at(self, time: f64, location: impl Into<String>) -> Self {
        match self {
            e @ Error::Step { .. } => e,
            e => Error::Step {
                time,
                location: location.into(),
                source: Box::new(e),
            },
        }
    }
}
