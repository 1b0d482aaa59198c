use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Total thrust too small for the backstepping input map `[-T R A, -z_B]` to be inverted.
    #[error("total thrust {thrust:.6} N is below the singularity floor {floor:.6} N")]
    SingularThrust { thrust: f64, floor: f64 },

    #[error("control effectiveness matrix is rank deficient (rank {rank} < 4)")]
    RankDeficientAllocation { rank: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("state became non-finite during integration")]
    IntegrationDiverged,

    #[error("step {step} (t = {time:.3} s): {source}")]
    AtStep {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Innermost error, skipping step annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
