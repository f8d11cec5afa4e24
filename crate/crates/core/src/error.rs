use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("saddle-point factorization failed: {0}")]
    SingularSystem(String),
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("reduced operator is not positive definite (curvature {0:e})")]
    Indefinite(f64),
    #[error("spaces are not nested: {0}")]
    NotNested(String),
    #[error("no nonzero root of the corner equation found for angle {0}")]
    NoRoot(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("level {level}, {stage}: {source}")]
    Stage {
        level: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn at(self, level: usize, stage: &'static str) -> Error {
        Error::Stage {
            level,
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
