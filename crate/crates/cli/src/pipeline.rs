//! End-to-end orchestration: ingest → graph → largest component → per-type
//! mapping → per-type detection → filtering → analysis → artifacts.
//!
//! Every stage logs its counts into [`PipelineSummary`]. A failing stage
//! aborts the run with the stage name in the error chain, and all artifact
//! files written so far are removed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;

use crimegraph_core::analysis::{
    build_presence_labeling, completeness_score, homogeneity_score, overlay_membership,
    similarity_normalized, similarity_summed, AnalysisReport, NodeSet, PairSimilarity, TypeScores,
};
use crimegraph_core::communities::{
    community_stats, detect_communities, distance_to_affinity, filter_top_communities,
    save_communities, AffinityGraph, Community, CommunitySet, TopCommunities,
};
use crimegraph_core::geo::EarthModel;
use crimegraph_core::graph::{build_street_graph, largest_component, undirected_projection, StreetGraph};
use crimegraph_core::ingest::{parse_crime_csv, parse_osm_xml, save_graph, CrimeRecord, RejectionStats};
use crimegraph_core::mapping::{save_layer, CrimeLayer, CrimeMapper};

use crate::config::{sanitize_type, GraphFormat, PipelineConfig};
use crate::export::export_geojson;
use crate::report::render_report;

pub fn graph_path(out: &Path) -> PathBuf {
    out.join("graph.tsv")
}

pub fn layer_path(out: &Path, crime_type: &str) -> PathBuf {
    out.join(format!("layer_{}.tsv", sanitize_type(crime_type)))
}

pub fn communities_path(out: &Path, crime_type: &str) -> PathBuf {
    out.join(format!("communities_{}.tsv", sanitize_type(crime_type)))
}

pub fn report_path(out: &Path) -> PathBuf {
    out.join("report.tsv")
}

pub fn geojson_path(out: &Path) -> PathBuf {
    out.join("overlay.geojson")
}

/// Per-crime-type counters for the run summary.
#[derive(Debug, Clone)]
pub struct TypeSummary {
    pub mapped: u64,
    pub max_assignment_m: f64,
    pub communities: usize,
    pub modularity: f64,
    pub selected: usize,
    pub underfilled: bool,
    pub top_nodes: usize,
}

/// Counters from every stage of one pipeline run.
#[derive(Debug, Clone, Default)]
pub struct PipelineSummary {
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub removed_nodes: usize,
    pub rejections: RejectionStats,
    pub per_type: BTreeMap<String, TypeSummary>,
    pub unanalyzed_crimes: u64,
}

impl fmt::Display for PipelineSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "graph: {} nodes, {} edges (largest component; {} nodes removed)",
            self.graph_nodes, self.graph_edges, self.removed_nodes
        )?;
        let r = &self.rejections;
        writeln!(
            f,
            "crimes: {} rows -> {} accepted, {} rejected (malformed {}, bad coords {}, out of range {}, out of bbox {}, empty category {})",
            r.rows, r.accepted, r.rejected(), r.malformed, r.bad_coordinate, r.out_of_range, r.out_of_bbox, r.empty_category
        )?;
        for (t, s) in &self.per_type {
            writeln!(
                f,
                "[{t}] mapped {} (max assignment {:.1} m); {} communities (Q {:.4}); selected top {}{} covering {} nodes",
                s.mapped,
                s.max_assignment_m,
                s.communities,
                s.modularity,
                s.selected,
                if s.underfilled { " (fewer than requested)" } else { "" },
                s.top_nodes
            )?;
        }
        write!(f, "unanalyzed crimes (other categories): {}", self.unanalyzed_crimes)
    }
}

/// Everything the per-type half of the pipeline produces.
pub struct TypeOutcome {
    pub layer: CrimeLayer,
    pub communities: CommunitySet,
    pub stats: Vec<Community>,
    pub top: TopCommunities,
}

/// Loads the graph source and reduces it to the canonical analysis graph:
/// the largest connected component of the undirected projection.
pub fn ingest_graph(cfg: &PipelineConfig) -> Result<(StreetGraph, usize)> {
    let raw = match cfg.resolved_graph_format() {
        GraphFormat::OsmXml => {
            let extract = parse_osm_xml(&cfg.graph_path, &cfg.highway_filter)
                .with_context(|| format!("stage ingest: parsing {}", cfg.graph_path.display()))?;
            if extract.dangling_refs > 0 {
                log::warn!("dropped {} dangling way references", extract.dangling_refs);
            }
            build_street_graph(&extract).context("stage build: constructing street graph")?
        }
        GraphFormat::Interchange => crimegraph_core::ingest::load_graph(&cfg.graph_path)
            .with_context(|| format!("stage ingest: loading {}", cfg.graph_path.display()))?,
    };
    let undirected = undirected_projection(&raw);
    let component = largest_component(&undirected).context("stage component")?;
    let removed = undirected.node_count() - component.node_count();
    Ok((component, removed))
}

/// Maps and detects one crime type over a shared graph and affinity view.
pub fn process_type(
    mapper: &CrimeMapper<'_>,
    affinity: &AffinityGraph,
    crimes: &[CrimeRecord],
    crime_type: &str,
    cfg: &PipelineConfig,
) -> Result<(TypeOutcome, TypeSummary)> {
    let (layer, stats) = mapper
        .map(crimes, crime_type)
        .with_context(|| format!("stage map ({crime_type})"))?;
    let cs = detect_communities(affinity, &layer, &cfg.detection)
        .with_context(|| format!("stage detect ({crime_type})"))?;
    let ranked = community_stats(&cs, &layer)
        .with_context(|| format!("stage detect ({crime_type}): ranking"))?;
    let top = filter_top_communities(&ranked, cfg.min_size, cfg.top_k);
    let summary = TypeSummary {
        mapped: layer.total_mapped(),
        max_assignment_m: stats.max_assignment_m,
        communities: cs.len(),
        modularity: cs.meta().modularity,
        selected: top.communities.len(),
        underfilled: top.underfilled,
        top_nodes: top.node_union().len(),
    };
    Ok((TypeOutcome { layer, communities: cs, stats: ranked, top }, summary))
}

/// Builds the analysis report from per-type outcomes.
pub fn analyze(
    graph: &StreetGraph,
    outcomes: &BTreeMap<String, TypeOutcome>,
) -> Result<AnalysisReport> {
    let earth = EarthModel::default();
    let mut node_sets: BTreeMap<String, NodeSet> = BTreeMap::new();
    for (t, o) in outcomes {
        let set = NodeSet::from_communities(&o.top.communities, graph).with_context(|| {
            format!("stage analyze ({t}): no community passed the size filter; lower min_size")
        })?;
        node_sets.insert(t.clone(), set);
    }

    let types: Vec<String> = outcomes.keys().cloned().collect();
    let mut similarities = Vec::new();
    for i in 0..types.len() {
        for j in i + 1..types.len() {
            let (a, b) = (&types[i], &types[j]);
            similarities.push(PairSimilarity {
                type_a: a.clone(),
                type_b: b.clone(),
                summed: similarity_summed(&node_sets[a], &node_sets[b], earth),
                normalized: similarity_normalized(&node_sets[a], &node_sets[b], earth),
            });
        }
    }

    let mut scores = BTreeMap::new();
    for (t, o) in outcomes {
        let labeling = build_presence_labeling(&o.top.communities, &o.layer);
        let (present, _) = labeling.class_totals();
        scores.insert(
            t.clone(),
            TypeScores {
                homogeneity: homogeneity_score(&labeling),
                completeness: completeness_score(&labeling),
                nodes: labeling.total(),
                criminal_nodes: present,
            },
        );
    }

    let unions = outcomes
        .iter()
        .map(|(t, o)| (t.clone(), o.top.node_union()))
        .collect();
    let overlay = overlay_membership(&unions);

    Ok(AnalysisReport {
        crime_types: types,
        scores,
        similarities,
        overlay,
        community_tables: outcomes.iter().map(|(t, o)| (t.clone(), o.stats.clone())).collect(),
    })
}

/// Loads the graph artifact a previous `build` wrote into the out dir.
pub fn load_graph_artifact(out_dir: &Path) -> Result<StreetGraph> {
    let path = graph_path(out_dir);
    crimegraph_core::ingest::load_graph(&path)
        .with_context(|| format!("loading graph artifact {} (run `build` first)", path.display()))
}

/// Loads the layer and community artifacts for one crime type, checking
/// they belong to `graph`.
pub fn load_type_artifacts(
    out_dir: &Path,
    crime_type: &str,
    graph: &StreetGraph,
) -> Result<(CrimeLayer, CommunitySet)> {
    let lp = layer_path(out_dir, crime_type);
    let layer = crimegraph_core::mapping::load_layer(&lp)
        .with_context(|| format!("loading layer {} (run `map` first)", lp.display()))?;
    if layer.graph_fingerprint() != graph.fingerprint() {
        return Err(anyhow!(
            "layer {} was mapped on a different graph (fingerprint {} vs {})",
            lp.display(),
            layer.graph_fingerprint(),
            graph.fingerprint()
        ));
    }
    let cp = communities_path(out_dir, crime_type);
    let cs = crimegraph_core::communities::load_communities(&cp)
        .with_context(|| format!("loading communities {} (run `detect` first)", cp.display()))?;
    if !cs.partition().keys().copied().eq(graph.node_ids()) {
        return Err(anyhow!(
            "communities {} do not cover the graph's node set",
            cp.display()
        ));
    }
    Ok((layer, cs))
}

/// Rebuilds the per-type outcome (ranking + top-k filter) from persisted
/// artifacts; used by the stage subcommands that run on prior outputs.
pub fn outcome_from_artifacts(
    layer: CrimeLayer,
    communities: CommunitySet,
    cfg: &PipelineConfig,
) -> Result<TypeOutcome> {
    let stats = community_stats(&communities, &layer).context("ranking communities")?;
    let top = filter_top_communities(&stats, cfg.min_size, cfg.top_k);
    Ok(TypeOutcome { layer, communities, stats, top })
}

/// Runs the whole pipeline and writes every artifact into `cfg.out_dir`.
/// On error the partially written artifacts are removed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(AnalysisReport, PipelineSummary)> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = run_pipeline_inner(cfg, &mut written);
    if result.is_err() {
        for path in &written {
            let _ = std::fs::remove_file(path);
        }
    }
    result
}

fn run_pipeline_inner(
    cfg: &PipelineConfig,
    written: &mut Vec<PathBuf>,
) -> Result<(AnalysisReport, PipelineSummary)> {
    let mut summary = PipelineSummary::default();

    let (graph, removed) = ingest_graph(cfg)?;
    summary.graph_nodes = graph.node_count();
    summary.graph_edges = graph.edge_count();
    summary.removed_nodes = removed;

    let out_graph = graph_path(&cfg.out_dir);
    written.push(out_graph.clone());
    save_graph(&graph, &out_graph).context("stage build: writing graph artifact")?;

    let (crimes, rejections) = parse_crime_csv(&cfg.crimes_path, &cfg.column_mapping, cfg.bbox.as_ref())
        .with_context(|| format!("stage ingest: parsing {}", cfg.crimes_path.display()))?;
    summary.rejections = rejections;

    let mapper = CrimeMapper::new(&graph).context("stage map: building spatial index")?;
    let affinity = distance_to_affinity(&graph).context("stage detect: affinity transform")?;

    let mut types = cfg.crime_types.clone();
    types.sort();
    let labels: std::collections::BTreeSet<String> = types.iter().map(|t| sanitize_type(t)).collect();
    if labels.len() != types.len() {
        return Err(anyhow!("crime types collide after filename sanitization"));
    }

    let results: Vec<(String, TypeOutcome, TypeSummary)> = types
        .par_iter()
        .map(|t| {
            let (outcome, type_summary) = process_type(&mapper, &affinity, &crimes, t, cfg)?;
            Ok((t.clone(), outcome, type_summary))
        })
        .collect::<Result<_>>()?;

    let mut outcomes: BTreeMap<String, TypeOutcome> = BTreeMap::new();
    for (t, outcome, type_summary) in results {
        let lp = layer_path(&cfg.out_dir, &t);
        written.push(lp.clone());
        save_layer(&outcome.layer, &lp).with_context(|| format!("stage map ({t}): writing layer"))?;
        let cp = communities_path(&cfg.out_dir, &t);
        written.push(cp.clone());
        save_communities(&outcome.communities, &cp)
            .with_context(|| format!("stage detect ({t}): writing communities"))?;
        summary.per_type.insert(t.clone(), type_summary);
        outcomes.insert(t, outcome);
    }

    let mapped_total: u64 = summary.per_type.values().map(|s| s.mapped).sum();
    summary.unanalyzed_crimes = summary.rejections.accepted as u64 - mapped_total;

    let report = analyze(&graph, &outcomes)?;

    let rp = report_path(&cfg.out_dir);
    written.push(rp.clone());
    std::fs::write(&rp, render_report(&report)).context("stage report: writing report")?;

    let layers: BTreeMap<String, &CrimeLayer> =
        outcomes.iter().map(|(t, o)| (t.clone(), &o.layer)).collect();
    let partitions: BTreeMap<String, &CommunitySet> =
        outcomes.iter().map(|(t, o)| (t.clone(), &o.communities)).collect();
    let gp = geojson_path(&cfg.out_dir);
    written.push(gp.clone());
    let geojson = export_geojson(&graph, &report.overlay, &layers, &partitions, cfg.include_none_nodes);
    std::fs::write(&gp, geojson).context("stage export: writing GeoJSON")?;

    Ok((report, summary))
}
