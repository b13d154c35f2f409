//! GeoJSON export of the overlay classification (RFC 7946).

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crimegraph_core::analysis::{overlay_class_label, OverlayClass};
use crimegraph_core::communities::CommunitySet;
use crimegraph_core::geo::NodeId;
use crimegraph_core::graph::StreetGraph;
use crimegraph_core::mapping::CrimeLayer;

/// Renders a FeatureCollection of Point features, one per classified node,
/// coordinates ordered [lon, lat]. Properties carry the node id, the overlay
/// class label, per-type crime counts, and per-type community ids. Nodes
/// outside every class are omitted unless `include_none` is set. Output is
/// deterministic: features sorted by node id, object keys sorted.
pub fn export_geojson(
    g: &StreetGraph,
    overlay: &BTreeMap<NodeId, OverlayClass>,
    layers: &BTreeMap<String, &CrimeLayer>,
    partitions: &BTreeMap<String, &CommunitySet>,
    include_none: bool,
) -> String {
    let mut features = Vec::new();
    let empty = OverlayClass::new();
    for (id, point) in g.nodes() {
        let class = overlay.get(&id).unwrap_or(&empty);
        if class.is_empty() && !include_none {
            continue;
        }

        let mut counts = Map::new();
        for (t, layer) in layers {
            counts.insert(t.clone(), json!(layer.count(id)));
        }
        let mut communities = Map::new();
        for (t, cs) in partitions {
            if let Some(comm) = cs.partition().get(&id) {
                communities.insert(t.clone(), json!(comm));
            }
        }

        features.push(json!({
            "type": "Feature",
            "geometry": {
                "type": "Point",
                "coordinates": [point.lon(), point.lat()],
            },
            "properties": {
                "node_id": id,
                "overlay_class": overlay_class_label(class),
                "counts": Value::Object(counts),
                "communities": Value::Object(communities),
            },
        }));
    }

    let collection = json!({
        "type": "FeatureCollection",
        "features": features,
    });
    collection.to_string()
}
