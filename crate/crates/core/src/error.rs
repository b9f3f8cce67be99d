use alloc::string::String;

use crate::graph::NodeType;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("session `{sample_id}`: timestamps decrease at event `{event_id}`")]
    NonMonotoneTimestamps { sample_id: String, event_id: String },
    #[error("session `{sample_id}`: event `{event_id}` has empty text")]
    EmptyEventText { sample_id: String, event_id: String },
    #[error("session `{0}` has no events")]
    EmptySession(String),
    #[error("event index {index} out of range for a graph with {len} events")]
    EventOutOfRange { index: usize, len: usize },
    #[error("node {0} has no incoming edge")]
    NoIncomingEdge(usize),
    #[error("AUC undefined: `{0}` has an empty positive or negative class")]
    DegenerateClass(&'static str),
    #[error("trigger_std needs at least two score sets, got {0}")]
    TooFewScoreSets(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has no labeled trigger or routing node")]
    NoLabels,
    #[error("no embedding for text with sha1 {0}")]
    MissingEmbedding(String),
    #[error("embedding dimension {got}, expected {expected}")]
    EmbeddingDim { expected: usize, got: usize },
    #[error("tensor `{name}`: expected {expected} values, got {got}")]
    TensorShape { name: String, expected: usize, got: usize },
    #[error("unknown tensor `{0}`")]
    UnknownTensor(String),
    #[error("`{0:?}` nodes are not cacheable")]
    NotCacheable(NodeType),
    #[error("session `{sample_id}`: event `{event_id}` arrived out of timestamp order")]
    OutOfOrderEvent { sample_id: String, event_id: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;
