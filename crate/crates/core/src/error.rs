use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown tile notation {0:?}")]
pub struct TileParseError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandError {
    #[error("hand has {got} tiles, expected {expected}")]
    Size { got: usize, expected: String },
    #[error("more than four copies of {0}")]
    TooManyCopies(String),
}

/// Why an action was rejected by the rules engine.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal action by seat {seat}: {rule}")]
pub struct RuleViolation {
    pub seat: u8,
    pub rule: String,
}

impl RuleViolation {
    pub fn new(seat: u8, rule: impl Into<String>) -> RuleViolation {
        RuleViolation {
            seat,
            rule: rule.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("hand is not complete")]
    NotWinning,
    #[error("winning hand has no yaku")]
    NoYaku,
}

/// A replay step that the rules engine refused, or a log that is
/// inconsistent with itself.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event {event} (seat {seat:?}, turn {turn}): {rule}")]
pub struct ReplayError {
    pub event: usize,
    pub seat: Option<u8>,
    pub turn: u32,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("line {line}: {msg}")]
    Structure { line: usize, msg: String },
    #[error("log {log} (starting line {line}): {source}")]
    Semantic {
        log: usize,
        line: usize,
        #[source]
        source: ReplayError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DumpError {
    #[error("dump too short: {0} bytes")]
    Truncated(usize),
    #[error("bad magic {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported dump version {0}")]
    Version(u16),
    #[error("header says {expected} samples but {got} bytes of payload follow")]
    Length { expected: u64, got: usize },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("train and test corpora share the source tag {0:?}")]
    OverlappingSources(String),
    #[error("split fractions must be in [0,1] and sum to 1, got {0} + {1}")]
    Fractions(f64, f64),
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("labels line {line}: {msg}")]
    Labels { line: usize, msg: String },
    #[error("{planes} plane samples but {labels} labels")]
    Mismatch { planes: usize, labels: usize },
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
