use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid machine configuration: {0}")]
    InvalidConfig(String),

    #[error("heap accepts at most {max} lists, got {got}")]
    TooManyLists { max: usize, got: usize },

    #[error("tile must hold exactly {expected} keys, got {got}")]
    TileSize { expected: usize, got: usize },

    #[error("partition count must be at least 1")]
    NoPartitions,

    #[error("invalid input spec: {0}")]
    InvalidInput(String),

    #[error("adversarial search failed: best tile {best} conflict passes vs random mean {random_mean:.3}")]
    SearchFailed { best: u64, random_mean: f64 },

    #[error("prediction and measurement describe different runs: {0}")]
    ConfigMismatch(String),

    #[error("malformed dataset: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
