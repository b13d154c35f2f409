use thiserror::Error;

use crate::geo::NodeId;

/// Errors produced by the core pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("latitude {0} out of range [-90, 90]")]
    LatitudeOutOfRange(f64),

    #[error("longitude {0} out of range [-180, 180]")]
    LongitudeOutOfRange(f64),

    #[error("invalid bounding box: {0}")]
    InvalidBoundingBox(String),

    #[error("cannot build a spatial index from an empty node list")]
    EmptyNodeList,

    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),

    #[error("graph is empty")]
    EmptyGraph,

    #[error("no street data: {0}")]
    NoStreetData(String),

    #[error("edge references unknown node {0}")]
    UnknownEdgeEndpoint(NodeId),

    #[error("edge ({src}, {dst}) has invalid weight {weight}")]
    InvalidEdgeWeight { src: NodeId, dst: NodeId, weight: f64 },

    #[error("operation requires an undirected graph")]
    DirectedInput,

    #[error("graph is disconnected; restrict it with largest_component first")]
    DisconnectedGraph,

    #[error("graph has no edge weight (2m = 0); modularity is undefined")]
    EdgelessGraph,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid column mapping: {0}")]
    InvalidColumnMapping(String),

    #[error("column {name:?} not found in CSV header")]
    MissingColumn { name: String },

    #[error("crime layer does not match: {0}")]
    LayerMismatch(String),

    #[error("invalid crime type {0:?}: must be non-empty and free of tabs/newlines")]
    InvalidCrimeType(String),

    #[error("node set is empty")]
    EmptyNodeSet,

    #[error("node {0} has no coordinates in the graph")]
    MissingCoordinates(NodeId),

    #[error("XML parse error at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },

    #[error("unsupported file version {found:?} (expected {expected:?})")]
    VersionMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV read error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
