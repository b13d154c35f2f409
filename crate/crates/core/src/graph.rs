//! The canonical street-network model and its transformations.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::{great_circle_distance, EarthModel, GeoPoint, NodeId};
use crate::ingest::RawMapExtract;

/// A weighted street edge; `weight_m` is the segment length in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight_m: f64,
}

/// A georeferenced street network. Nodes are intersections with coordinates,
/// edges are street segments weighted by great-circle length. Immutable after
/// construction, so concurrent reads are safe.
#[derive(Debug, Clone, PartialEq)]
pub struct StreetGraph {
    nodes: BTreeMap<NodeId, GeoPoint>,
    edges: Vec<Edge>,
    directed: bool,
}

impl StreetGraph {
    /// Validates that every edge endpoint exists and weights are finite and
    /// non-negative.
    pub fn new(nodes: BTreeMap<NodeId, GeoPoint>, edges: Vec<Edge>, directed: bool) -> Result<Self> {
        for e in &edges {
            if !nodes.contains_key(&e.src) {
                return Err(Error::UnknownEdgeEndpoint(e.src));
            }
            if !nodes.contains_key(&e.dst) {
                return Err(Error::UnknownEdgeEndpoint(e.dst));
            }
            if !e.weight_m.is_finite() || e.weight_m < 0.0 {
                return Err(Error::InvalidEdgeWeight { src: e.src, dst: e.dst, weight: e.weight_m });
            }
        }
        Ok(Self { nodes, edges, directed })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, GeoPoint)> + '_ {
        self.nodes.iter().map(|(id, p)| (*id, *p))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn point(&self, id: NodeId) -> Option<GeoPoint> {
        self.nodes.get(&id).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Node list in id order, the form the spatial index consumes.
    pub fn node_vec(&self) -> Vec<(NodeId, GeoPoint)> {
        self.nodes().collect()
    }

    /// Adjacency over the edge list; for undirected graphs each edge appears
    /// in both endpoint lists.
    pub fn adjacency(&self) -> BTreeMap<NodeId, Vec<(NodeId, f64)>> {
        let mut adj: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        for id in self.nodes.keys() {
            adj.insert(*id, Vec::new());
        }
        for e in &self.edges {
            adj.get_mut(&e.src).unwrap().push((e.dst, e.weight_m));
            if !self.directed && e.src != e.dst {
                adj.get_mut(&e.dst).unwrap().push((e.src, e.weight_m));
            }
        }
        adj
    }

    /// Content hash over the canonical (sorted) form of the graph; identifies
    /// which graph a derived artifact was computed from.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"crimegraph-fp-v1\n");
        hasher.update(if self.directed { b"directed\n" as &[u8] } else { b"undirected\n" });
        for (id, p) in &self.nodes {
            hasher.update(format!("N\t{}\t{}\t{}\n", id, p.lat(), p.lon()).as_bytes());
        }
        let mut sorted: Vec<&Edge> = self.edges.iter().collect();
        sorted.sort_by(|a, b| {
            (a.src, a.dst, a.weight_m.to_bits()).cmp(&(b.src, b.dst, b.weight_m.to_bits()))
        });
        for e in sorted {
            hasher.update(format!("E\t{}\t{}\t{}\n", e.src, e.dst, e.weight_m).as_bytes());
        }
        let digest = hasher.finalize();
        hex::encode(&digest[..8])
    }
}

/// Builds the directed street graph from a raw map extract: one node per OSM
/// node used by a kept way, one edge per consecutive node pair within a way,
/// weighted by great-circle length. Two-way streets yield both directions.
pub fn build_street_graph(extract: &RawMapExtract) -> Result<StreetGraph> {
    build_street_graph_with_earth(extract, EarthModel::default())
}

pub fn build_street_graph_with_earth(extract: &RawMapExtract, earth: EarthModel) -> Result<StreetGraph> {
    if extract.ways.is_empty() || extract.nodes.is_empty() {
        return Err(Error::NoStreetData("extract has no ways or no nodes".into()));
    }
    let mut coords: BTreeMap<NodeId, GeoPoint> = BTreeMap::new();
    for &(id, p) in &extract.nodes {
        if coords.insert(id, p).is_some() {
            return Err(Error::DuplicateNodeId(id));
        }
    }

    let mut used: BTreeSet<NodeId> = BTreeSet::new();
    let mut edges = Vec::new();
    for way in &extract.ways {
        for pair in way.node_refs.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b {
                continue;
            }
            let (pa, pb) = match (coords.get(&a), coords.get(&b)) {
                (Some(pa), Some(pb)) => (*pa, *pb),
                // dangling refs are dropped during extraction; a miss here
                // means the extract was assembled by hand and is invalid
                _ => return Err(Error::UnknownEdgeEndpoint(if coords.contains_key(&a) { b } else { a })),
            };
            let w = great_circle_distance(pa, pb, earth);
            used.insert(a);
            used.insert(b);
            edges.push(Edge { src: a, dst: b, weight_m: w });
            if !way.oneway {
                edges.push(Edge { src: b, dst: a, weight_m: w });
            }
        }
    }
    if edges.is_empty() {
        return Err(Error::NoStreetData("no way produced any street segment".into()));
    }

    let nodes: BTreeMap<NodeId, GeoPoint> = used.into_iter().map(|id| (id, coords[&id])).collect();
    StreetGraph::new(nodes, edges, true)
}

/// Collapses a graph onto one undirected edge per unordered endpoint pair.
/// Antiparallel edges with conflicting weights keep the minimum; self-loops
/// are dropped. Idempotent.
pub fn undirected_projection(g: &StreetGraph) -> StreetGraph {
    let mut merged: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    for e in g.edges() {
        if e.src == e.dst {
            continue;
        }
        let key = if e.src < e.dst { (e.src, e.dst) } else { (e.dst, e.src) };
        merged
            .entry(key)
            .and_modify(|w| *w = w.min(e.weight_m))
            .or_insert(e.weight_m);
    }
    let edges = merged
        .into_iter()
        .map(|((src, dst), weight_m)| Edge { src, dst, weight_m })
        .collect();
    StreetGraph { nodes: g.nodes.clone(), edges, directed: false }
}

/// Induced subgraph on the largest connected component. Ties between equal
/// sized components go to the one containing the smallest node id.
pub fn largest_component(g: &StreetGraph) -> Result<StreetGraph> {
    if g.is_directed() {
        return Err(Error::DirectedInput);
    }
    if g.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let adj = g.adjacency();
    let mut visited: BTreeSet<NodeId> = BTreeSet::new();
    let mut best: BTreeSet<NodeId> = BTreeSet::new();
    // iterating ids in ascending order means the first component of a given
    // size is also the one with the smallest minimum id
    for start in g.node_ids() {
        if visited.contains(&start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        visited.insert(start);
        comp.insert(start);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[&u] {
                if visited.insert(v) {
                    comp.insert(v);
                    queue.push_back(v);
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }

    let nodes: BTreeMap<NodeId, GeoPoint> = best.iter().map(|id| (*id, g.nodes[id])).collect();
    let edges: Vec<Edge> = g
        .edges
        .iter()
        .filter(|e| best.contains(&e.src) && best.contains(&e.dst))
        .copied()
        .collect();
    Ok(StreetGraph { nodes, edges, directed: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawWay;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn extract(nodes: Vec<(NodeId, GeoPoint)>, ways: Vec<RawWay>) -> RawMapExtract {
        RawMapExtract { nodes, ways, dangling_refs: 0, rejected_nodes: 0 }
    }

    #[test]
    fn two_way_segment_yields_both_directions() {
        let ex = extract(
            vec![(1, pt(0.0, 0.0)), (2, pt(0.0, 0.001))],
            vec![RawWay { id: 10, node_refs: vec![1, 2], oneway: false }],
        );
        let g = build_street_graph(&ex).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edges()[0].weight_m, g.edges()[1].weight_m);
        assert!(g.is_directed());
    }

    #[test]
    fn oneway_yields_single_direction() {
        let ex = extract(
            vec![(1, pt(0.0, 0.0)), (2, pt(0.0, 0.001)), (3, pt(0.0, 0.002))],
            vec![RawWay { id: 10, node_refs: vec![1, 2, 3], oneway: true }],
        );
        let g = build_street_graph(&ex).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.edges().iter().all(|e| e.src < e.dst));
    }

    #[test]
    fn collinear_weights_are_additive() {
        let ex = extract(
            vec![(1, pt(0.0, 0.0)), (2, pt(0.0, 0.001)), (3, pt(0.0, 0.002))],
            vec![RawWay { id: 10, node_refs: vec![1, 2, 3], oneway: true }],
        );
        let g = build_street_graph(&ex).unwrap();
        let total: f64 = g.edges().iter().map(|e| e.weight_m).sum();
        let direct = great_circle_distance(pt(0.0, 0.0), pt(0.0, 0.002), EarthModel::default());
        assert!((total - direct).abs() / direct < 1e-3);
    }

    #[test]
    fn empty_extract_is_an_error() {
        let ex = extract(vec![], vec![]);
        assert!(build_street_graph(&ex).is_err());
    }

    #[test]
    fn unused_nodes_are_not_kept() {
        let ex = extract(
            vec![(1, pt(0.0, 0.0)), (2, pt(0.0, 0.001)), (99, pt(5.0, 5.0))],
            vec![RawWay { id: 10, node_refs: vec![1, 2], oneway: false }],
        );
        let g = build_street_graph(&ex).unwrap();
        assert_eq!(g.node_count(), 2);
        assert!(!g.contains_node(99));
    }

    #[test]
    fn projection_merges_antiparallel_edges_with_min_weight() {
        let nodes: BTreeMap<NodeId, GeoPoint> = [(1, pt(0.0, 0.0)), (2, pt(0.0, 0.001))].into();
        let edges = vec![
            Edge { src: 1, dst: 2, weight_m: 5.0 },
            Edge { src: 2, dst: 1, weight_m: 7.0 },
        ];
        let g = StreetGraph::new(nodes, edges, true).unwrap();
        let u = undirected_projection(&g);
        assert_eq!(u.edge_count(), 1);
        assert_eq!(u.edges()[0].weight_m, 5.0);
        assert!(!u.is_directed());
    }

    #[test]
    fn projection_is_idempotent_and_drops_self_loops() {
        let nodes: BTreeMap<NodeId, GeoPoint> = [(1, pt(0.0, 0.0)), (2, pt(0.0, 0.001))].into();
        let edges = vec![
            Edge { src: 1, dst: 2, weight_m: 5.0 },
            Edge { src: 2, dst: 1, weight_m: 5.0 },
            Edge { src: 1, dst: 1, weight_m: 0.0 },
        ];
        let g = StreetGraph::new(nodes, edges, true).unwrap();
        let once = undirected_projection(&g);
        let twice = undirected_projection(&once);
        assert_eq!(once, twice);
        assert_eq!(once.edge_count(), 1);
    }

    #[test]
    fn largest_component_picks_bigger_side() {
        let nodes: BTreeMap<NodeId, GeoPoint> = (1..=5).map(|i| (i, pt(0.0, i as f64 * 0.001))).collect();
        // component {1,2,3} and component {4,5}
        let edges = vec![
            Edge { src: 1, dst: 2, weight_m: 1.0 },
            Edge { src: 2, dst: 3, weight_m: 1.0 },
            Edge { src: 4, dst: 5, weight_m: 1.0 },
        ];
        let g = StreetGraph::new(nodes, edges, false).unwrap();
        let lc = largest_component(&g).unwrap();
        assert_eq!(lc.node_ids().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(lc.edge_count(), 2);
    }

    #[test]
    fn largest_component_requires_undirected() {
        let nodes: BTreeMap<NodeId, GeoPoint> = [(1, pt(0.0, 0.0))].into();
        let g = StreetGraph::new(nodes, vec![], true).unwrap();
        assert!(matches!(largest_component(&g), Err(Error::DirectedInput)));
    }

    #[test]
    fn connected_graph_is_unchanged() {
        let nodes: BTreeMap<NodeId, GeoPoint> = (1..=3).map(|i| (i, pt(0.0, i as f64 * 0.001))).collect();
        let edges = vec![
            Edge { src: 1, dst: 2, weight_m: 1.0 },
            Edge { src: 2, dst: 3, weight_m: 1.0 },
        ];
        let g = StreetGraph::new(nodes, edges, false).unwrap();
        let lc = largest_component(&g).unwrap();
        assert_eq!(lc, g);
    }

    #[test]
    fn fingerprint_ignores_edge_order() {
        let nodes: BTreeMap<NodeId, GeoPoint> = [(1, pt(0.0, 0.0)), (2, pt(0.0, 0.001))].into();
        let e1 = Edge { src: 1, dst: 2, weight_m: 5.0 };
        let e2 = Edge { src: 2, dst: 1, weight_m: 5.0 };
        let a = StreetGraph::new(nodes.clone(), vec![e1, e2], true).unwrap();
        let b = StreetGraph::new(nodes, vec![e2, e1], true).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
