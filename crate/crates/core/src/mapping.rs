//! Assignment of crime events to their nearest street-network node,
//! producing per-crime-type count layers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{NodeId, SpatialIndex};
use crate::graph::StreetGraph;
use crate::ingest::CrimeRecord;

/// Per-node crime counts for one crime type over one graph. Nodes without
/// crimes are simply absent; `count` returns 0 for them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrimeLayer {
    crime_type: String,
    counts: BTreeMap<NodeId, u64>,
    total_mapped: u64,
    graph_fingerprint: String,
}

impl CrimeLayer {
    pub fn new(crime_type: String, counts: BTreeMap<NodeId, u64>, graph_fingerprint: String) -> Result<Self> {
        validate_crime_type(&crime_type)?;
        let counts: BTreeMap<NodeId, u64> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total_mapped = counts.values().sum();
        Ok(Self { crime_type, counts, total_mapped, graph_fingerprint })
    }

    pub fn crime_type(&self) -> &str {
        &self.crime_type
    }

    pub fn count(&self, node: NodeId) -> u64 {
        self.counts.get(&node).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<NodeId, u64> {
        &self.counts
    }

    pub fn total_mapped(&self) -> u64 {
        self.total_mapped
    }

    pub fn graph_fingerprint(&self) -> &str {
        &self.graph_fingerprint
    }
}

fn validate_crime_type(t: &str) -> Result<()> {
    if t.is_empty() || t.contains('\t') || t.contains('\n') || t.contains('\r') {
        return Err(Error::InvalidCrimeType(t.to_string()));
    }
    Ok(())
}

/// Side facts about one mapping run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MappingStats {
    /// Largest crime-to-node assignment distance, in meters. A huge value
    /// usually means the crime source and the map disagree on datum or
    /// extent.
    pub max_assignment_m: f64,
}

/// Reusable nearest-node assigner for one graph; builds the spatial index
/// once so several crime types can be mapped over the same network.
pub struct CrimeMapper<'g> {
    graph: &'g StreetGraph,
    index: SpatialIndex,
    fingerprint: String,
}

impl<'g> CrimeMapper<'g> {
    pub fn new(graph: &'g StreetGraph) -> Result<Self> {
        if graph.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let index = SpatialIndex::build(&graph.node_vec())?;
        Ok(Self { graph, index, fingerprint: graph.fingerprint() })
    }

    pub fn graph(&self) -> &StreetGraph {
        self.graph
    }

    /// Maps every crime whose category equals `crime_type` to its nearest
    /// node. Crimes of other categories are ignored. The result does not
    /// depend on input order or on how the work is split across threads:
    /// counts merge by addition and the max distance by `max`.
    pub fn map(&self, crimes: &[CrimeRecord], crime_type: &str) -> Result<(CrimeLayer, MappingStats)> {
        validate_crime_type(crime_type)?;
        let (counts, max_d) = crimes
            .par_iter()
            .filter(|c| c.category == crime_type)
            .fold(
                || (BTreeMap::<NodeId, u64>::new(), 0.0f64),
                |(mut counts, max_d), crime| {
                    let (node, d) = self.index.nearest(crime.point);
                    *counts.entry(node).or_insert(0) += 1;
                    (counts, max_d.max(d))
                },
            )
            .reduce(
                || (BTreeMap::new(), 0.0f64),
                |(mut a, da), (b, db)| {
                    for (node, c) in b {
                        *a.entry(node).or_insert(0) += c;
                    }
                    (a, da.max(db))
                },
            );
        let layer = CrimeLayer::new(crime_type.to_string(), counts, self.fingerprint.clone())?;
        Ok((layer, MappingStats { max_assignment_m: max_d }))
    }
}

/// One-shot convenience over [`CrimeMapper`].
pub fn map_crimes(
    g: &StreetGraph,
    crimes: &[CrimeRecord],
    crime_type: &str,
) -> Result<(CrimeLayer, MappingStats)> {
    CrimeMapper::new(g)?.map(crimes, crime_type)
}

const LAYER_MAGIC: &str = "crimegraph-layer-v1";

/// Writes a layer as `crimegraph-layer-v1` TSV: a header carrying the crime
/// type and graph fingerprint, then one `node-id<TAB>count` line per node
/// with a nonzero count.
pub fn save_layer(layer: &CrimeLayer, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}\t{}\t{}", LAYER_MAGIC, layer.crime_type, layer.graph_fingerprint)?;
    for (node, count) in &layer.counts {
        writeln!(out, "{node}\t{count}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_layer(path: &Path) -> Result<CrimeLayer> {
    let fmt_err = |line: usize, message: String| Error::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| fmt_err(1, "empty file".into()))?;
    let header = header?;
    let fields: Vec<&str> = header.split('\t').collect();
    if fields[0] != LAYER_MAGIC {
        return Err(Error::VersionMismatch { expected: LAYER_MAGIC.into(), found: fields[0].into() });
    }
    if fields.len() != 3 {
        return Err(fmt_err(1, "header needs crime type and graph fingerprint".into()));
    }
    let crime_type = fields[1].to_string();
    let fingerprint = fields[2].to_string();

    let mut counts = BTreeMap::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (node, count) = line
            .split_once('\t')
            .ok_or_else(|| fmt_err(lineno, "count line needs 2 fields".into()))?;
        let node: NodeId = node.parse().map_err(|_| fmt_err(lineno, "bad node id".into()))?;
        let count: u64 = count.parse().map_err(|_| fmt_err(lineno, "bad count".into()))?;
        if count == 0 {
            return Err(fmt_err(lineno, "zero counts must be omitted".into()));
        }
        if counts.insert(node, count).is_some() {
            return Err(fmt_err(lineno, format!("duplicate node id {node}")));
        }
    }
    CrimeLayer::new(crime_type, counts, fingerprint)
}
