use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("layer {layer} ({kind}): {msg}")]
    Shape { layer: usize, kind: &'static str, msg: String },
    #[error("input shape {got:?} does not match model input {want:?}")]
    Input { got: Vec<usize>, want: Vec<usize> },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("{labels} labels for a batch of {batch}")]
    LabelCount { labels: usize, batch: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model was trained for feature layout {found:?}, pipeline uses {expected:?}")]
    Layout { expected: String, found: String },
    #[error("non-finite value after {0}")]
    NonFinite(String),
}
