//! Synthetic-city fixtures with planted ground truth, plus the independent
//! oracles under [`oracles`]. Everything here is deterministic per seed.

pub mod oracles;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crimegraph_core::communities::CommunityId;
use crimegraph_core::geo::{great_circle_distance, EarthModel, GeoPoint, NodeId, EARTH_RADIUS_M};
use crimegraph_core::graph::{Edge, StreetGraph};
use crimegraph_core::ingest::{ColumnMapping, CrimeRecord};

/// An undirected rows x cols street grid at roughly uniform spacing, with
/// 4-neighbor edges. Node id of cell (r, c) is `r * cols + c`. A tiny seeded
/// jitter (up to 0.05% of the spacing) keeps coordinates from being exactly
/// symmetric while staying well inside edge-length tolerances.
pub fn generate_grid_city(rows: usize, cols: usize, spacing_m: f64, origin: GeoPoint, seed: u64) -> StreetGraph {
    assert!(rows >= 2 && cols >= 2, "grid needs at least 2x2 nodes");
    assert!(spacing_m > 0.0, "spacing must be positive");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dlat = (spacing_m / EARTH_RADIUS_M).to_degrees();
    let dlon = (spacing_m / (EARTH_RADIUS_M * origin.lat().to_radians().cos())).to_degrees();
    let jitter = 5e-4;

    let mut nodes: BTreeMap<NodeId, GeoPoint> = BTreeMap::new();
    for r in 0..rows {
        for c in 0..cols {
            let id = (r * cols + c) as NodeId;
            let jl: f64 = rng.random_range(-jitter..jitter);
            let jo: f64 = rng.random_range(-jitter..jitter);
            let lat = origin.lat() + r as f64 * dlat + jl * dlat;
            let lon = origin.lon() + c as f64 * dlon + jo * dlon;
            nodes.insert(id, GeoPoint::new(lat, lon).expect("grid stays in range"));
        }
    }

    let m = EarthModel::default();
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let id = (r * cols + c) as NodeId;
            if c + 1 < cols {
                let right = (r * cols + c + 1) as NodeId;
                edges.push(Edge { src: id, dst: right, weight_m: great_circle_distance(nodes[&id], nodes[&right], m) });
            }
            if r + 1 < rows {
                let down = ((r + 1) * cols + c) as NodeId;
                edges.push(Edge { src: id, dst: down, weight_m: great_circle_distance(nodes[&id], nodes[&down], m) });
            }
        }
    }
    StreetGraph::new(nodes, edges, false).expect("grid construction is valid")
}

/// One planted crime hotspot: all nodes within `radius_hops` of `center`
/// emit `rate` crimes per node on average.
#[derive(Debug, Clone)]
pub struct HotspotSpec {
    pub center: NodeId,
    pub radius_hops: usize,
    pub crime_type: String,
    pub rate: f64,
}

/// Generation knobs shared by all hotspots.
#[derive(Debug, Clone)]
pub struct PlantConfig {
    /// Poisson rate for nodes outside every hotspot.
    pub background_rate: f64,
    /// Crimes scatter uniformly within this radius of their source node.
    pub jitter_m: f64,
}

/// Ground truth: for each crime type, the union of its hotspot nodes.
pub type GroundTruth = BTreeMap<String, BTreeSet<NodeId>>;

/// Plants hotspots on a graph and generates Poisson-distributed crimes
/// jittered around node coordinates. Overlapping hotspots of one type merge
/// (a node takes the highest applicable rate). Deterministic per seed.
pub fn plant_hotspots(
    g: &StreetGraph,
    specs: &[HotspotSpec],
    cfg: &PlantConfig,
    seed: u64,
) -> (Vec<CrimeRecord>, GroundTruth) {
    let adjacency = g.adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut types: Vec<String> = specs.iter().map(|s| s.crime_type.clone()).collect();
    types.sort();
    types.dedup();

    let mut crimes = Vec::new();
    let mut truth: GroundTruth = BTreeMap::new();

    for crime_type in &types {
        let mut rates: BTreeMap<NodeId, f64> =
            g.node_ids().map(|id| (id, cfg.background_rate)).collect();
        let mut hot: BTreeSet<NodeId> = BTreeSet::new();
        for spec in specs.iter().filter(|s| &s.crime_type == crime_type) {
            assert!(g.contains_node(spec.center), "hotspot center must be a graph node");
            for node in nodes_within_hops(&adjacency, spec.center, spec.radius_hops) {
                let r = rates.get_mut(&node).expect("hop search stays on the graph");
                *r = r.max(spec.rate);
                hot.insert(node);
            }
        }
        truth.insert(crime_type.clone(), hot);

        for (node, rate) in rates {
            if rate <= 0.0 {
                continue;
            }
            let count = Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64;
            let origin = g.point(node).expect("node has coordinates");
            for i in 0..count {
                let point = jitter_point(origin, cfg.jitter_m, &mut rng);
                crimes.push(CrimeRecord {
                    id: format!("{crime_type}-{node}-{i}"),
                    category: crime_type.clone(),
                    point,
                    timestamp: None,
                });
            }
        }
    }
    (crimes, truth)
}

fn nodes_within_hops(
    adjacency: &BTreeMap<NodeId, Vec<(NodeId, f64)>>,
    center: NodeId,
    radius: usize,
) -> BTreeSet<NodeId> {
    let mut reached: BTreeMap<NodeId, usize> = BTreeMap::from([(center, 0)]);
    let mut queue = VecDeque::from([center]);
    while let Some(u) = queue.pop_front() {
        let d = reached[&u];
        if d == radius {
            continue;
        }
        for (v, _) in &adjacency[&u] {
            if !reached.contains_key(v) {
                reached.insert(*v, d + 1);
                queue.push_back(*v);
            }
        }
    }
    reached.into_keys().collect()
}

fn jitter_point(origin: GeoPoint, jitter_m: f64, rng: &mut ChaCha8Rng) -> GeoPoint {
    if jitter_m <= 0.0 {
        return origin;
    }
    let bearing: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let dist: f64 = rng.random_range(0.0..jitter_m);
    let dlat = (dist * bearing.cos() / EARTH_RADIUS_M).to_degrees();
    let dlon = (dist * bearing.sin() / (EARTH_RADIUS_M * origin.lat().to_radians().cos())).to_degrees();
    GeoPoint::new(origin.lat() + dlat, origin.lon() + dlon).unwrap_or(origin)
}

/// Writes crimes in the SFO-style CSV schema the default [`ColumnMapping`]
/// expects (X = longitude, Y = latitude), so fixtures exercise the real
/// parser including the axis swap.
pub fn write_crime_csv(crimes: &[CrimeRecord], path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["IncidntNum", "Category", "X", "Y", "Date"])?;
    for c in crimes {
        w.write_record([
            c.id.as_str(),
            c.category.as_str(),
            &c.point.lon().to_string(),
            &c.point.lat().to_string(),
            c.timestamp.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()
}

/// Rand index between two partitions of the same node set: the fraction of
/// node pairs both partitions agree on (same community vs. different).
/// 1 means identical partitions.
pub fn rand_index(a: &BTreeMap<NodeId, CommunityId>, b: &BTreeMap<NodeId, CommunityId>) -> f64 {
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "partitions must cover the same node set"
    );
    let nodes: Vec<NodeId> = a.keys().copied().collect();
    let n = nodes.len();
    assert!(n >= 2, "rand index needs at least two nodes");
    let mut agree = 0usize;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let same_a = a[&nodes[i]] == a[&nodes[j]];
            let same_b = b[&nodes[i]] == b[&nodes[j]];
            if same_a == same_b {
                agree += 1;
            }
            pairs += 1;
        }
    }
    agree as f64 / pairs as f64
}

/// The column mapping matching [`write_crime_csv`] output.
pub fn fixture_column_mapping() -> ColumnMapping {
    ColumnMapping::default()
}
