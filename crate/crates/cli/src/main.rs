//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data
//! error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crimegraph_cli::config::{apply_config_file, PipelineConfig};
use crimegraph_cli::export::export_geojson;
use crimegraph_cli::pipeline::{
    self, analyze, communities_path, geojson_path, graph_path, ingest_graph, layer_path,
    load_graph_artifact, load_type_artifacts, outcome_from_artifacts, report_path, run_pipeline,
};
use crimegraph_cli::report::render_report;
use crimegraph_core::communities::distance_to_affinity;
use crimegraph_core::ingest::{parse_crime_csv, save_graph};
use crimegraph_core::mapping::CrimeMapper;

#[derive(Parser)]
#[command(name = "crimegraph", version, about = "Street-network crime mapping, community detection, and analysis")]
struct Cli {
    /// Key-value config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Graph source (OSM XML or interchange TSV).
    #[arg(long, global = true)]
    graph: Option<PathBuf>,

    /// Graph source format: osm | tsv (default: inferred from extension).
    #[arg(long, global = true)]
    graph_format: Option<String>,

    /// Crime CSV path.
    #[arg(long, global = true)]
    crimes: Option<PathBuf>,

    /// Comma-separated crime types to analyze.
    #[arg(long, global = true, value_delimiter = ',')]
    types: Option<Vec<String>>,

    /// Crime bounding box: min_lat,min_lon,max_lat,max_lon.
    #[arg(long, global = true)]
    bbox: Option<String>,

    /// Detection seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Node weight mode: ignore | self_loop.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Self-loop scale: a number, or "mean" for the mean edge affinity.
    #[arg(long, global = true)]
    lambda: Option<String>,

    /// Detection stop tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    /// Minimum community size for the top-k filter.
    #[arg(long, global = true)]
    min_size: Option<usize>,

    /// How many top communities to keep per type.
    #[arg(long, global = true)]
    top_k: Option<usize>,

    /// Similarity variant quoted in summaries: paper | normalized.
    #[arg(long, global = true)]
    similarity: Option<String>,

    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also export nodes outside every overlay class.
    #[arg(long, global = true)]
    include_none: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the map source and write the analysis graph artifact.
    Build,
    /// Map crimes onto the graph artifact, one layer per type.
    Map,
    /// Detect communities per type over the mapped layers.
    Detect,
    /// Rank, filter and score communities; write the report.
    Analyze,
    /// Export the overlay GeoJSON from persisted artifacts.
    Export,
    /// Run the whole pipeline end to end.
    Run,
}

enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn build_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        apply_config_file(&mut cfg, path).map_err(CliError::Usage)?;
    }
    let mut set = |key: &str, value: String| cfg.set(key, &value).map_err(CliError::Usage);
    if let Some(v) = &cli.graph {
        set("graph.path", v.display().to_string())?;
    }
    if let Some(v) = &cli.graph_format {
        set("graph.format", v.clone())?;
    }
    if let Some(v) = &cli.crimes {
        set("crimes.path", v.display().to_string())?;
    }
    if let Some(v) = &cli.types {
        set("types", v.join(","))?;
    }
    if let Some(v) = &cli.bbox {
        set("bbox", v.clone())?;
    }
    if let Some(v) = cli.seed {
        set("seed", v.to_string())?;
    }
    if let Some(v) = &cli.mode {
        set("mode", v.clone())?;
    }
    if let Some(v) = &cli.lambda {
        set("lambda", v.clone())?;
    }
    if let Some(v) = cli.tolerance {
        set("tolerance", v.to_string())?;
    }
    if let Some(v) = cli.min_size {
        set("min_size", v.to_string())?;
    }
    if let Some(v) = cli.top_k {
        set("top_k", v.to_string())?;
    }
    if let Some(v) = &cli.similarity {
        set("similarity", v.clone())?;
    }
    if let Some(v) = &cli.out {
        set("out", v.display().to_string())?;
    }
    if cli.include_none {
        set("geojson.include_none", "true".to_string())?;
    }
    Ok(cfg)
}

fn require_types(cfg: &PipelineConfig) -> Result<Vec<String>, CliError> {
    if cfg.crime_types.is_empty() {
        return Err(CliError::Usage("at least one crime type required (types or --types)".into()));
    }
    let mut types = cfg.crime_types.clone();
    types.sort();
    Ok(types)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::Build => cmd_build(&cfg),
        Command::Map => cmd_map(&cfg),
        Command::Detect => cmd_detect(&cfg),
        Command::Analyze => cmd_analyze(&cfg),
        Command::Export => cmd_export(&cfg),
        Command::Run => cmd_run(&cfg),
    }
}

fn cmd_build(cfg: &PipelineConfig) -> Result<(), CliError> {
    if cfg.graph_path.as_os_str().is_empty() {
        return Err(CliError::Usage("graph path not set (graph.path or --graph)".into()));
    }
    let (graph, removed) = ingest_graph(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))
        .map_err(CliError::Data)?;
    let path = graph_path(&cfg.out_dir);
    save_graph(&graph, &path).context("writing graph artifact").map_err(CliError::Data)?;
    println!(
        "graph: {} nodes, {} edges (largest component; {} nodes removed) -> {}",
        graph.node_count(),
        graph.edge_count(),
        removed,
        path.display()
    );
    Ok(())
}

fn cmd_map(cfg: &PipelineConfig) -> Result<(), CliError> {
    if cfg.crimes_path.as_os_str().is_empty() {
        return Err(CliError::Usage("crimes path not set (crimes.path or --crimes)".into()));
    }
    let types = require_types(cfg)?;
    let graph = load_graph_artifact(&cfg.out_dir)?;
    let (crimes, stats) = parse_crime_csv(&cfg.crimes_path, &cfg.column_mapping, cfg.bbox.as_ref())
        .with_context(|| format!("parsing {}", cfg.crimes_path.display()))
        .map_err(CliError::Data)?;
    println!(
        "crimes: {} rows -> {} accepted, {} rejected",
        stats.rows,
        stats.accepted,
        stats.rejected()
    );
    let mapper = CrimeMapper::new(&graph).context("building spatial index").map_err(CliError::Data)?;
    for t in &types {
        let (layer, mstats) = mapper.map(&crimes, t).map_err(|e| CliError::Data(e.into()))?;
        let path = layer_path(&cfg.out_dir, t);
        crimegraph_core::mapping::save_layer(&layer, &path)
            .map_err(|e| CliError::Data(e.into()))?;
        println!(
            "[{t}] mapped {} crimes (max assignment {:.1} m) -> {}",
            layer.total_mapped(),
            mstats.max_assignment_m,
            path.display()
        );
    }
    Ok(())
}

fn cmd_detect(cfg: &PipelineConfig) -> Result<(), CliError> {
    let types = require_types(cfg)?;
    let graph = load_graph_artifact(&cfg.out_dir)?;
    let affinity = distance_to_affinity(&graph).map_err(|e| CliError::Data(e.into()))?;
    for t in &types {
        let lp = layer_path(&cfg.out_dir, t);
        let layer = crimegraph_core::mapping::load_layer(&lp)
            .with_context(|| format!("loading {} (run `map` first)", lp.display()))
            .map_err(CliError::Data)?;
        if layer.graph_fingerprint() != graph.fingerprint() {
            return Err(CliError::Data(anyhow::anyhow!(
                "layer {} was mapped on a different graph",
                lp.display()
            )));
        }
        let cs = crimegraph_core::communities::detect_communities(&affinity, &layer, &cfg.detection)
            .map_err(|e| CliError::Data(e.into()))?;
        let path = communities_path(&cfg.out_dir, t);
        crimegraph_core::communities::save_communities(&cs, &path)
            .map_err(|e| CliError::Data(e.into()))?;
        println!(
            "[{t}] {} communities (Q {:.4}, seed {}, mode {}) -> {}",
            cs.len(),
            cs.meta().modularity,
            cs.detection_seed(),
            cs.meta().mode,
            path.display()
        );
    }
    Ok(())
}

fn load_outcomes(
    cfg: &PipelineConfig,
    types: &[String],
) -> Result<(crimegraph_core::StreetGraph, BTreeMap<String, pipeline::TypeOutcome>), CliError> {
    let graph = load_graph_artifact(&cfg.out_dir)?;
    let mut outcomes = BTreeMap::new();
    for t in types {
        let (layer, cs) = load_type_artifacts(&cfg.out_dir, t, &graph)?;
        outcomes.insert(t.clone(), outcome_from_artifacts(layer, cs, cfg)?);
    }
    Ok((graph, outcomes))
}

fn cmd_analyze(cfg: &PipelineConfig) -> Result<(), CliError> {
    let types = require_types(cfg)?;
    let (graph, outcomes) = load_outcomes(cfg, &types)?;
    let report = analyze(&graph, &outcomes)?;
    let path = report_path(&cfg.out_dir);
    std::fs::write(&path, render_report(&report))
        .context("writing report")
        .map_err(CliError::Data)?;
    for (t, outcome) in &outcomes {
        let s = &report.scores[t];
        println!(
            "[{t}] top {} communities, {} nodes ({} criminal); homogeneity {:.6}, completeness {:.6}",
            outcome.top.communities.len(),
            s.nodes,
            s.criminal_nodes,
            s.homogeneity,
            s.completeness
        );
    }
    println!("report -> {}", path.display());
    Ok(())
}

fn cmd_export(cfg: &PipelineConfig) -> Result<(), CliError> {
    let types = require_types(cfg)?;
    let (graph, outcomes) = load_outcomes(cfg, &types)?;
    let unions: BTreeMap<String, _> =
        outcomes.iter().map(|(t, o)| (t.clone(), o.top.node_union())).collect();
    let overlay = crimegraph_core::analysis::overlay_membership(&unions);
    let layers: BTreeMap<String, &crimegraph_core::CrimeLayer> =
        outcomes.iter().map(|(t, o)| (t.clone(), &o.layer)).collect();
    let partitions: BTreeMap<String, &crimegraph_core::CommunitySet> =
        outcomes.iter().map(|(t, o)| (t.clone(), &o.communities)).collect();
    let text = export_geojson(&graph, &overlay, &layers, &partitions, cfg.include_none_nodes);
    let path = geojson_path(&cfg.out_dir);
    std::fs::write(&path, text).context("writing GeoJSON").map_err(CliError::Data)?;
    println!("overlay: {} classified nodes -> {}", overlay.len(), path.display());
    Ok(())
}

fn cmd_run(cfg: &PipelineConfig) -> Result<(), CliError> {
    cfg.validate().map_err(CliError::Usage)?;
    let (_, summary) = run_pipeline(cfg)?;
    println!("{summary}");
    println!("report -> {}", report_path(&cfg.out_dir).display());
    println!("geojson -> {}", geojson_path(&cfg.out_dir).display());
    Ok(())
}
