use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A tabulated detection model was queried outside the range it covers.
    #[error("detection model queried at distance {distance} m, outside table range [{min}, {max}] m")]
    ModelDomain { distance: f64, min: f64, max: f64 },

    /// Argument outside the domain of a probability-valued function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The Bayes normaliser vanished; every centre received zero likelihood.
    #[error("numerical underflow in Bayes normaliser at step {step}")]
    NumericalUnderflow { step: usize },

    /// Importance weights p0/phi are all zero.
    #[error("degenerate importance weights: prior density vanishes at every particle")]
    DegenerateWeights,

    /// The assumed model fails to dominate the true model somewhere.
    #[error("envelope violated: assumed {assumed} < true {truth} at source {source_xy:?}, agent {agent_xy:?}")]
    EnvelopeViolation {
        assumed: f64,
        truth: f64,
        source_xy: [f64; 2],
        agent_xy: [f64; 2],
    },

    #[error("config error: {0}")]
    Config(String),

    /// No Monte Carlo trial met the entropy threshold.
    #[error("no trial reached final entropy below {threshold} nats")]
    NoQualifyingTrials { threshold: f64 },

    /// Every particle weight underflowed in the SIR baseline.
    #[error("particle degeneracy: all particle weights underflowed at step {step}")]
    ParticleDegeneracy { step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
