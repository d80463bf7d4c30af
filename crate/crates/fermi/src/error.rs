use std::fmt;

/// Why an exact orbit was abandoned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortKind {
    SlitEdge,
    Grazing,
}

impl fmt::Display for AbortKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortKind::SlitEdge => write!(f, "slit edge"),
            AbortKind::Grazing => write!(f, "grazing impact"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed profile: {0}")]
    Profile(String),
    #[error("slit height violates c = {c} at t = {}", fmt_times(.times))]
    Bounds { c: f64, times: Vec<f64> },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("orbit aborted ({kind}) at t = {t}")]
    Aborted { kind: AbortKind, t: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("map {requested} requested but point classified as {found}")]
    RegionMismatch { requested: String, found: String },
    #[error("matrix not hyperbolic (trace {0})")]
    NotHyperbolic(f64),
    #[error("cone construction failed at {0}")]
    ConeConstructionFailed(String),
    #[error("tangent left the unstable cone: {0}")]
    ConeViolation(String),
    #[error("curve refinement exceeded {0} vertices")]
    RefinementOverflow(usize),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_times(ts: &[f64]) -> String {
    let shown: Vec<String> = ts.iter().take(8).map(|t| format!("{t:.6}")).collect();
    if ts.len() > 8 {
        format!("{} (+{} more)", shown.join(", "), ts.len() - 8)
    } else {
        shown.join(", ")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
