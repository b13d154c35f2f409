//! Community detection on the crime-weighted street network, per-community
//! crime statistics, and the top-k filter.
//!
//! Street distances are dissimilarities while modularity wants affinities,
//! so edges are transformed by an explicit inverse-distance map first. Node
//! crime counts can be folded into detection as self-loops, which makes the
//! partition depend on the crime type being analyzed; turning that off gives
//! the pure-topology baseline for comparison.

mod louvain;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geo::NodeId;
use crate::graph::StreetGraph;
use crate::mapping::CrimeLayer;

pub type CommunityId = u32;

/// Distances at or below this floor (in meters) all map to the maximum
/// affinity of 1; coincident intersections would otherwise blow up.
pub const AFFINITY_DISTANCE_FLOOR_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityEdge {
    pub u: NodeId,
    pub v: NodeId,
    pub affinity: f64,
}

/// An undirected graph whose edge weights are affinities (higher = closer)
/// and whose nodes may carry non-negative sizes (crime counts).
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    node_ids: Vec<NodeId>,
    edges: Vec<AffinityEdge>,
    node_sizes: BTreeMap<NodeId, f64>,
}

impl AffinityGraph {
    pub fn new(
        mut node_ids: Vec<NodeId>,
        edges: Vec<AffinityEdge>,
        node_sizes: BTreeMap<NodeId, f64>,
    ) -> Result<Self> {
        node_ids.sort_unstable();
        node_ids.dedup();
        let known: BTreeSet<NodeId> = node_ids.iter().copied().collect();
        for e in &edges {
            if !known.contains(&e.u) {
                return Err(Error::UnknownEdgeEndpoint(e.u));
            }
            if !known.contains(&e.v) {
                return Err(Error::UnknownEdgeEndpoint(e.v));
            }
            if !e.affinity.is_finite() || e.affinity <= 0.0 {
                return Err(Error::InvalidEdgeWeight { src: e.u, dst: e.v, weight: e.affinity });
            }
        }
        for (id, size) in &node_sizes {
            if !known.contains(id) {
                return Err(Error::UnknownEdgeEndpoint(*id));
            }
            if !size.is_finite() || *size < 0.0 {
                return Err(Error::InvalidEdgeWeight { src: *id, dst: *id, weight: *size });
            }
        }
        Ok(Self { node_ids, edges, node_sizes })
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn edges(&self) -> &[AffinityEdge] {
        &self.edges
    }

    pub fn node_sizes(&self) -> &BTreeMap<NodeId, f64> {
        &self.node_sizes
    }

    pub fn mean_affinity(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.edges.iter().map(|e| e.affinity).sum::<f64>() / self.edges.len() as f64
    }

    fn index_of(&self) -> BTreeMap<NodeId, usize> {
        self.node_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect()
    }
}

/// Turns meter-weighted streets into affinities via `1 / max(d, 1 m)`;
/// monotone decreasing in distance and always positive.
pub fn distance_to_affinity(g: &StreetGraph) -> Result<AffinityGraph> {
    if g.is_directed() {
        return Err(Error::DirectedInput);
    }
    let edges = g
        .edges()
        .iter()
        .map(|e| AffinityEdge {
            u: e.src,
            v: e.dst,
            affinity: 1.0 / e.weight_m.max(AFFINITY_DISTANCE_FLOOR_M),
        })
        .collect();
    AffinityGraph::new(g.node_ids().collect(), edges, BTreeMap::new())
}

/// How node crime counts enter detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeWeightMode {
    /// Topology only; counts are ignored.
    Ignore,
    /// Node v gets a self-loop of affinity `lambda * count(v)`.
    SelfLoop,
}

impl fmt::Display for NodeWeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeWeightMode::Ignore => f.write_str("ignore"),
            NodeWeightMode::SelfLoop => f.write_str("self_loop"),
        }
    }
}

impl FromStr for NodeWeightMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ignore" => Ok(NodeWeightMode::Ignore),
            "self_loop" => Ok(NodeWeightMode::SelfLoop),
            other => Err(format!("unknown node weight mode {other:?} (expected ignore|self_loop)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub seed: u64,
    pub node_weight_mode: NodeWeightMode,
    /// Self-loop scale; `None` means the mean edge affinity.
    pub self_loop_scale: Option<f64>,
    /// Stop when a whole level improves Q by no more than this.
    pub tolerance: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            node_weight_mode: NodeWeightMode::SelfLoop,
            self_loop_scale: None,
            tolerance: 1e-7,
        }
    }
}

/// One detected community with its crime statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Community {
    pub id: CommunityId,
    pub node_ids: BTreeSet<NodeId>,
    pub crime_total: u64,
    pub crime_avg: f64,
    pub size: usize,
}

impl Community {
    fn new(id: CommunityId, node_ids: BTreeSet<NodeId>, crime_total: u64) -> Self {
        let size = node_ids.len();
        let crime_avg = if size == 0 { 0.0 } else { crime_total as f64 / size as f64 };
        Self { id, node_ids, crime_total, crime_avg, size }
    }
}

/// Facts recorded with a detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMeta {
    pub seed: u64,
    pub mode: NodeWeightMode,
    /// Self-loop scale actually used; `None` in ignore mode.
    pub lambda: Option<f64>,
    pub modularity: f64,
    /// Q after every local-moving sweep, starting from the singleton
    /// partition; non-decreasing.
    pub q_trace: Vec<f64>,
}

/// A complete partition of the detection graph's nodes, with every community
/// inducing a connected subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunitySet {
    partition: BTreeMap<NodeId, CommunityId>,
    communities: Vec<Community>,
    crime_type: String,
    meta: DetectionMeta,
}

impl CommunitySet {
    pub fn partition(&self) -> &BTreeMap<NodeId, CommunityId> {
        &self.partition
    }

    /// Communities in id order. Crime stats are filled when the set was
    /// produced by detection; a set loaded from disk carries zeros until
    /// [`community_stats`] recomputes them against a layer.
    pub fn communities(&self) -> &[Community] {
        &self.communities
    }

    pub fn crime_type(&self) -> &str {
        &self.crime_type
    }

    pub fn detection_seed(&self) -> u64 {
        self.meta.seed
    }

    pub fn meta(&self) -> &DetectionMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.communities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.communities.is_empty()
    }
}

/// Weighted modularity of `partition` on `ag`, self-loops included in both
/// the adjacency and the degrees. Errors when the graph carries no weight
/// (2m = 0) or the partition is not a bijective cover of the node set.
pub fn modularity(ag: &AffinityGraph, partition: &BTreeMap<NodeId, CommunityId>) -> Result<f64> {
    let known: BTreeSet<NodeId> = ag.node_ids().iter().copied().collect();
    for id in &known {
        if !partition.contains_key(id) {
            return Err(Error::InvalidPartition(format!("node {id} has no community")));
        }
    }
    for id in partition.keys() {
        if !known.contains(id) {
            return Err(Error::InvalidPartition(format!("partition names unknown node {id}")));
        }
    }

    let mut k: BTreeMap<NodeId, f64> = ag.node_ids().iter().map(|id| (*id, 0.0)).collect();
    let mut internal: BTreeMap<CommunityId, f64> = BTreeMap::new();
    let mut two_m = 0.0;
    for e in ag.edges() {
        let (cu, cv) = (partition[&e.u], partition[&e.v]);
        if e.u == e.v {
            *k.get_mut(&e.u).unwrap() += e.affinity;
            two_m += e.affinity;
            *internal.entry(cu).or_insert(0.0) += e.affinity;
        } else {
            *k.get_mut(&e.u).unwrap() += e.affinity;
            *k.get_mut(&e.v).unwrap() += e.affinity;
            two_m += 2.0 * e.affinity;
            if cu == cv {
                *internal.entry(cu).or_insert(0.0) += 2.0 * e.affinity;
            }
        }
    }
    if two_m == 0.0 {
        return Err(Error::EdgelessGraph);
    }
    let mut k_c: BTreeMap<CommunityId, f64> = BTreeMap::new();
    for (id, ki) in &k {
        *k_c.entry(partition[id]).or_insert(0.0) += ki;
    }
    let q = internal.values().sum::<f64>() / two_m
        - k_c.values().map(|kc| (kc / two_m) * (kc / two_m)).sum::<f64>();
    Ok(q)
}

/// Detects communities by greedy modularity maximization. Deterministic for
/// a given seed. In `SelfLoop` mode each node with crimes receives a
/// self-loop of `lambda * count`, so crime mass shapes the partition. Every
/// returned community induces a connected subgraph: a post-pass splits any
/// community the aggregation left disconnected.
pub fn detect_communities(
    ag: &AffinityGraph,
    layer: &CrimeLayer,
    cfg: &DetectionConfig,
) -> Result<CommunitySet> {
    let index_of = ag.index_of();
    for node in layer.counts().keys() {
        if !index_of.contains_key(node) {
            return Err(Error::LayerMismatch(format!("layer counts node {node} absent from the graph")));
        }
    }

    let n = ag.node_ids().len();
    let mut edges: Vec<(usize, usize, f64)> = ag
        .edges()
        .iter()
        .map(|e| (index_of[&e.u], index_of[&e.v], e.affinity))
        .collect();

    // connectivity over the street edges; self-loops do not connect anything
    if !is_connected(n, &edges) {
        return Err(Error::DisconnectedGraph);
    }

    let lambda = match cfg.node_weight_mode {
        NodeWeightMode::Ignore => None,
        NodeWeightMode::SelfLoop => {
            let l = cfg.self_loop_scale.unwrap_or_else(|| ag.mean_affinity());
            for (node, count) in layer.counts() {
                let w = l * *count as f64;
                if w > 0.0 {
                    edges.push((index_of[node], index_of[node], w));
                }
            }
            Some(l)
        }
    };

    let level = louvain::LevelGraph::build(n, &edges);
    if level.two_m == 0.0 {
        return Err(Error::EdgelessGraph);
    }
    let outcome = louvain::run(level.clone(), cfg.seed, cfg.tolerance);

    // split communities that are not internally connected, then relabel
    // everything by smallest member id
    let parts = split_into_connected(n, &edges, &outcome.membership);
    let mut membership = vec![0usize; n];
    for (label, part) in parts.iter().enumerate() {
        for &i in part {
            membership[i] = label;
        }
    }

    let mut trace = outcome.trace;
    let q_final = level.modularity(&membership);
    if let Some(prev) = trace.last() {
        debug_assert!(
            q_final >= prev - louvain::Q_MONOTONE_SLACK,
            "connectivity split decreased Q: {prev} -> {q_final}"
        );
    }
    trace.push(q_final);

    let mut partition = BTreeMap::new();
    let mut communities = Vec::with_capacity(parts.len());
    for (label, part) in parts.iter().enumerate() {
        let node_ids: BTreeSet<NodeId> = part.iter().map(|&i| ag.node_ids()[i]).collect();
        let crime_total = node_ids.iter().map(|id| layer.count(*id)).sum();
        for id in &node_ids {
            partition.insert(*id, label as CommunityId);
        }
        communities.push(Community::new(label as CommunityId, node_ids, crime_total));
    }

    Ok(CommunitySet {
        partition,
        communities,
        crime_type: layer.crime_type().to_string(),
        meta: DetectionMeta {
            seed: cfg.seed,
            mode: cfg.node_weight_mode,
            lambda,
            modularity: q_final,
            q_trace: trace,
        },
    })
}

fn is_connected(n: usize, edges: &[(usize, usize, f64)]) -> bool {
    if n == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n];
    for &(u, v, _) in edges {
        if u != v {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1usize;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    reached == n
}

/// Breaks each community into its connected parts (over non-loop edges) and
/// returns the parts ordered by their smallest node index.
fn split_into_connected(n: usize, edges: &[(usize, usize, f64)], comm: &[usize]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v, _) in edges {
        if u != v && comm[u] == comm[v] {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    let mut seen = vec![false; n];
    let mut parts: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut part = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            part.push(u);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        part.sort_unstable();
        parts.push(part);
    }
    // starts were scanned in ascending order, so parts are already ordered
    // by smallest member
    parts
}

/// Per-community stats sorted by crime average (descending); ties prefer the
/// larger community, then the smaller id.
pub fn community_stats(cs: &CommunitySet, layer: &CrimeLayer) -> Result<Vec<Community>> {
    if layer.crime_type() != cs.crime_type() {
        return Err(Error::LayerMismatch(format!(
            "layer is for {:?} but communities are for {:?}",
            layer.crime_type(),
            cs.crime_type()
        )));
    }
    for node in layer.counts().keys() {
        if !cs.partition.contains_key(node) {
            return Err(Error::LayerMismatch(format!("layer counts node {node} absent from the partition")));
        }
    }
    let mut stats: Vec<Community> = cs
        .communities
        .iter()
        .map(|c| {
            let crime_total = c.node_ids.iter().map(|id| layer.count(*id)).sum();
            Community::new(c.id, c.node_ids.clone(), crime_total)
        })
        .collect();
    stats.sort_by(|a, b| {
        b.crime_avg
            .partial_cmp(&a.crime_avg)
            .expect("crime averages are finite")
            .then(b.size.cmp(&a.size))
            .then(a.id.cmp(&b.id))
    });
    Ok(stats)
}

/// The `k` most criminal communities among those with at least `min_size`
/// nodes, in the order given. `underfilled` flags that fewer than `k`
/// qualified.
#[derive(Debug, Clone, PartialEq)]
pub struct TopCommunities {
    pub communities: Vec<Community>,
    pub underfilled: bool,
}

impl TopCommunities {
    pub fn node_union(&self) -> BTreeSet<NodeId> {
        self.communities.iter().flat_map(|c| c.node_ids.iter().copied()).collect()
    }
}

/// Filters a stats list (already sorted by crime average) down to the top-k
/// communities of at least `min_size` nodes.
pub fn filter_top_communities(stats: &[Community], min_size: usize, k: usize) -> TopCommunities {
    let communities: Vec<Community> =
        stats.iter().filter(|c| c.size >= min_size).take(k).cloned().collect();
    let underfilled = communities.len() < k;
    TopCommunities { communities, underfilled }
}

const COMMUNITIES_MAGIC: &str = "crimegraph-communities-v1";

/// Writes a community set as TSV: a metadata line (crime type, seed, mode,
/// lambda, Q) followed by `node-id<TAB>community-id` lines.
pub fn save_communities(cs: &CommunitySet, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let lambda = match cs.meta.lambda {
        Some(l) => l.to_string(),
        None => "none".to_string(),
    };
    writeln!(out, "{COMMUNITIES_MAGIC}")?;
    writeln!(
        out,
        "M\ttype={}\tseed={}\tmode={}\tlambda={}\tq={}",
        cs.crime_type, cs.meta.seed, cs.meta.mode, lambda, cs.meta.modularity
    )?;
    for (node, comm) in &cs.partition {
        writeln!(out, "{node}\t{comm}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_communities(path: &Path) -> Result<CommunitySet> {
    let fmt_err = |line: usize, message: String| Error::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, magic) = lines.next().ok_or_else(|| fmt_err(1, "empty file".into()))?;
    let magic = magic?;
    if magic != COMMUNITIES_MAGIC {
        return Err(Error::VersionMismatch { expected: COMMUNITIES_MAGIC.into(), found: magic });
    }
    let (_, meta_line) = lines.next().ok_or_else(|| fmt_err(2, "missing metadata line".into()))?;
    let meta_line = meta_line?;
    let mut crime_type = None;
    let mut seed = None;
    let mut mode = None;
    let mut lambda = None;
    let mut q = None;
    let mut fields = meta_line.split('\t');
    if fields.next() != Some("M") {
        return Err(fmt_err(2, "metadata line must start with M".into()));
    }
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| fmt_err(2, format!("bad metadata field {field:?}")))?;
        match key {
            "type" => crime_type = Some(value.to_string()),
            "seed" => seed = Some(value.parse::<u64>().map_err(|_| fmt_err(2, "bad seed".into()))?),
            "mode" => {
                mode = Some(NodeWeightMode::from_str(value).map_err(|e| fmt_err(2, e))?);
            }
            "lambda" => {
                lambda = if value == "none" {
                    Some(None)
                } else {
                    Some(Some(value.parse::<f64>().map_err(|_| fmt_err(2, "bad lambda".into()))?))
                };
            }
            "q" => q = Some(value.parse::<f64>().map_err(|_| fmt_err(2, "bad q".into()))?),
            other => return Err(fmt_err(2, format!("unknown metadata key {other:?}"))),
        }
    }
    let crime_type = crime_type.ok_or_else(|| fmt_err(2, "missing type".into()))?;
    let seed = seed.ok_or_else(|| fmt_err(2, "missing seed".into()))?;
    let mode = mode.ok_or_else(|| fmt_err(2, "missing mode".into()))?;
    let lambda = lambda.ok_or_else(|| fmt_err(2, "missing lambda".into()))?;
    let q = q.ok_or_else(|| fmt_err(2, "missing q".into()))?;

    let mut partition: BTreeMap<NodeId, CommunityId> = BTreeMap::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (node, comm) = line
            .split_once('\t')
            .ok_or_else(|| fmt_err(lineno, "membership line needs 2 fields".into()))?;
        let node: NodeId = node.parse().map_err(|_| fmt_err(lineno, "bad node id".into()))?;
        let comm: CommunityId = comm.parse().map_err(|_| fmt_err(lineno, "bad community id".into()))?;
        if partition.insert(node, comm).is_some() {
            return Err(fmt_err(lineno, format!("duplicate node id {node}")));
        }
    }

    let mut grouped: BTreeMap<CommunityId, BTreeSet<NodeId>> = BTreeMap::new();
    for (node, comm) in &partition {
        grouped.entry(*comm).or_default().insert(*node);
    }
    let communities = grouped
        .into_iter()
        .map(|(id, node_ids)| Community::new(id, node_ids, 0))
        .collect();

    Ok(CommunitySet {
        partition,
        communities,
        crime_type,
        meta: DetectionMeta { seed, mode, lambda, modularity: q, q_trace: Vec::new() },
    })
}
