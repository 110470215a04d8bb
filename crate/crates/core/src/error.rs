use thiserror::Error;

use crate::phase_space::Pair;

/// Why an orbit was declared singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Singularity {
    /// Two distinct collisions closer in time than `singular_gap`.
    Simultaneous,
    /// Impact with `cos φ` below `grazing_cos`.
    Grazing,
}

impl std::fmt::Display for Singularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Singularity::Simultaneous => f.write_str("near-simultaneous collisions"),
            Singularity::Grazing => f.write_str("grazing collision"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error("velocities carry no energy once total momentum is removed")]
    ZeroEnergy,

    #[error("balls {} and {} overlap (distance {distance:.3e})", .pair.i + 1, .pair.j + 1)]
    InadmissibleConfiguration { pair: Pair, distance: f64 },

    #[error("singular orbit at t = {t:.6e}: {kind}")]
    SingularOrbit { kind: Singularity, t: f64 },

    #[error("collision flood: {count} consecutive collisions without a gap of {window:.1e}")]
    CollisionFlood { count: usize, window: f64 },

    #[error("balls {} and {} are not in contact (distance {distance:.3e})", .pair.i + 1, .pair.j + 1)]
    NotInContact { pair: Pair, distance: f64 },

    #[error("balls {} and {} are receding", .pair.i + 1, .pair.j + 1)]
    Receding { pair: Pair },

    #[error("grazing contact: cos φ = {cos_phi:.3e}")]
    Grazing { cos_phi: f64 },

    #[error("relative velocity is parallel to the center line (head-on collision)")]
    DegenerateSpan,

    #[error("colliding balls have zero relative velocity")]
    ZeroRelativeVelocity,

    #[error("curvature operator did not converge within depth {depth} (last change {last_change:.3e})")]
    NoConvergence { depth: usize, last_change: f64 },

    #[error("budget of {budget} collisions exhausted without a certificate")]
    BudgetExhausted { budget: usize },

    #[error("hypothesis unmet: {0}")]
    HypothesisUnmet(String),

    #[error("could not place balls after {attempts} attempts")]
    SamplingFailed { attempts: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
