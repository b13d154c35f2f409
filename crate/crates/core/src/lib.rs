//! Core algorithms for street-network crime analysis: geodesic distances and
//! spatial indexing, map/crime ingestion, graph construction, nearest-node
//! crime mapping, modularity-based community detection, and the similarity /
//! homogeneity / completeness measures over the detected communities.

pub mod analysis;
pub mod communities;
pub mod error;
pub mod geo;
pub mod graph;
pub mod ingest;
pub mod mapping;

pub use analysis::{
    build_presence_labeling, completeness_score, homogeneity_score, overlay_class_label,
    overlay_membership, similarity_normalized, similarity_summed, AnalysisReport, NodeSet,
    OverlayClass, PairSimilarity, PresenceLabeling, PresenceRow, TypeScores,
};
pub use communities::{
    detect_communities, distance_to_affinity, filter_top_communities, modularity, AffinityEdge,
    AffinityGraph, Community, CommunityId, CommunitySet, DetectionConfig, DetectionMeta,
    NodeWeightMode, TopCommunities,
};
pub use error::{Error, Result};
pub use geo::{
    great_circle_distance, BoundingBox, EarthModel, GeoPoint, NodeId, SpatialIndex, EARTH_RADIUS_M,
};
pub use graph::{build_street_graph, largest_component, undirected_projection, Edge, StreetGraph};
pub use ingest::{
    default_highway_filter, load_graph, parse_crime_csv, parse_osm_xml, save_graph, ColumnMapping,
    CrimeRecord, RawMapExtract, RawWay, RejectionStats,
};
pub use mapping::{load_layer, map_crimes, save_layer, CrimeLayer, CrimeMapper, MappingStats};
