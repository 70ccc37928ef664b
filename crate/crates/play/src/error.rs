use houou_core::error::DatasetError;
use houou_nn::io::LoadError;
use houou_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty confusion matrix")]
    Empty,
    #[error("confusion matrix is not square (row {row} has {len} entries, expected {want})")]
    NotSquare { row: usize, len: usize, want: usize },
    #[error("positive class {positive} out of range for {classes} classes")]
    Positive { positive: usize, classes: usize },
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("sample for task {found} given to a {expected} head")]
    Task { expected: String, found: String },
    #[error("model has {found} outputs, task {task} needs {expected}")]
    Width { task: String, expected: usize, found: usize },
    #[error("no training samples")]
    NoSamples,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
