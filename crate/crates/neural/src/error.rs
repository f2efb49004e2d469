use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("cannot load model: {0}")]
    ModelLoad(String),
    #[error("unsupported operator {op} (node {node})")]
    UnsupportedOp { op: String, node: String },
    #[error("unknown layer {0:?}")]
    InvalidLayer(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("inference failed: {0}")]
    Inference(String),
    #[error(transparent)]
    Core(#[from] periocular_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, NeuralError>;
