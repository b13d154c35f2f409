//! Pipeline configuration: a key-value config file with command-line
//! overrides layered on top.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crimegraph_core::communities::DetectionConfig;
#[cfg(test)]
use crimegraph_core::communities::NodeWeightMode;
use crimegraph_core::geo::BoundingBox;
use crimegraph_core::ingest::{default_highway_filter, ColumnMapping};

/// How the graph source file is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    OsmXml,
    Interchange,
}

impl GraphFormat {
    /// Guess from the file extension; `.osm` / `.xml` mean OSM, anything
    /// else the interchange TSV.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("osm") | Some("xml") => GraphFormat::OsmXml,
            _ => GraphFormat::Interchange,
        }
    }
}

impl FromStr for GraphFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "osm" | "osm-xml" => Ok(GraphFormat::OsmXml),
            "tsv" | "interchange" => Ok(GraphFormat::Interchange),
            other => Err(format!("unknown graph format {other:?} (expected osm|tsv)")),
        }
    }
}

/// Which similarity variant the pipeline summary quotes; the report always
/// carries both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityVariant {
    Summed,
    Normalized,
}

impl FromStr for SimilarityVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "summed" => Ok(SimilarityVariant::Summed),
            "normalized" => Ok(SimilarityVariant::Normalized),
            other => Err(format!("unknown similarity variant {other:?} (expected summed|normalized)")),
        }
    }
}

/// Everything a pipeline run needs.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub graph_path: PathBuf,
    pub graph_format: Option<GraphFormat>,
    pub highway_filter: BTreeSet<String>,
    pub crimes_path: PathBuf,
    pub column_mapping: ColumnMapping,
    pub crime_types: Vec<String>,
    pub bbox: Option<BoundingBox>,
    pub detection: DetectionConfig,
    pub min_size: usize,
    pub top_k: usize,
    pub similarity: SimilarityVariant,
    pub out_dir: PathBuf,
    pub include_none_nodes: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            graph_path: PathBuf::new(),
            graph_format: None,
            highway_filter: default_highway_filter(),
            crimes_path: PathBuf::new(),
            column_mapping: ColumnMapping::default(),
            crime_types: Vec::new(),
            bbox: None,
            detection: DetectionConfig::default(),
            min_size: 100,
            top_k: 5,
            similarity: SimilarityVariant::Normalized,
            out_dir: PathBuf::from("out"),
            include_none_nodes: false,
        }
    }
}

impl PipelineConfig {
    /// The graph format, inferred from the path when not set explicitly.
    pub fn resolved_graph_format(&self) -> GraphFormat {
        self.graph_format.unwrap_or_else(|| GraphFormat::infer(&self.graph_path))
    }

    /// Applies one `key = value` setting. Returns an error message for
    /// unknown keys or unparsable values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let bad = |what: &str| format!("bad value {value:?} for {what}");
        match key {
            "graph.path" => self.graph_path = PathBuf::from(value),
            "graph.format" => self.graph_format = Some(value.parse()?),
            "highway_filter" => {
                self.highway_filter = split_list(value).into_iter().collect();
                if self.highway_filter.is_empty() {
                    return Err("highway_filter must not be empty".into());
                }
            }
            "crimes.path" => self.crimes_path = PathBuf::from(value),
            "crimes.lat_col" => self.column_mapping.lat_col = value.to_string(),
            "crimes.lon_col" => self.column_mapping.lon_col = value.to_string(),
            "crimes.category_col" => self.column_mapping.category_col = value.to_string(),
            "crimes.id_col" => self.column_mapping.id_col = value.to_string(),
            "crimes.date_col" => {
                self.column_mapping.date_col =
                    if value.is_empty() { None } else { Some(value.to_string()) };
            }
            "crimes.has_header" => {
                self.column_mapping.has_header = value.parse().map_err(|_| bad("crimes.has_header"))?;
            }
            "types" => self.crime_types = split_list(value),
            "bbox" => {
                let parts: Vec<f64> = split_list(value)
                    .iter()
                    .map(|p| p.parse().map_err(|_| bad("bbox")))
                    .collect::<Result<_, _>>()?;
                if parts.len() != 4 {
                    return Err("bbox needs min_lat,min_lon,max_lat,max_lon".into());
                }
                let b = BoundingBox::new(parts[0], parts[1], parts[2], parts[3])
                    .map_err(|e| e.to_string())?;
                self.bbox = Some(b);
            }
            "seed" => self.detection.seed = value.parse().map_err(|_| bad("seed"))?,
            "mode" => self.detection.node_weight_mode = value.parse()?,
            "lambda" => {
                self.detection.self_loop_scale = if value == "mean" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("lambda"))?)
                };
            }
            "tolerance" => self.detection.tolerance = value.parse().map_err(|_| bad("tolerance"))?,
            "min_size" => self.min_size = value.parse().map_err(|_| bad("min_size"))?,
            "top_k" => self.top_k = value.parse().map_err(|_| bad("top_k"))?,
            "similarity" => self.similarity = value.parse()?,
            "out" => self.out_dir = PathBuf::from(value),
            "geojson.include_none" => {
                self.include_none_nodes = value.parse().map_err(|_| bad("geojson.include_none"))?;
            }
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    /// Validates the cross-field invariants once all sources are applied.
    pub fn validate(&self) -> Result<(), String> {
        if self.graph_path.as_os_str().is_empty() {
            return Err("graph path not set (graph.path or --graph)".into());
        }
        if self.crimes_path.as_os_str().is_empty() {
            return Err("crimes path not set (crimes.path or --crimes)".into());
        }
        if self.crime_types.is_empty() {
            return Err("at least one crime type required (types or --types)".into());
        }
        let unique: BTreeSet<&String> = self.crime_types.iter().collect();
        if unique.len() != self.crime_types.len() {
            return Err("crime types must be unique".into());
        }
        if self.top_k < 1 {
            return Err("top_k must be at least 1".into());
        }
        if self.min_size < 1 {
            return Err("min_size must be at least 1".into());
        }
        Ok(())
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Parses a config file of `key = value` lines; `#` starts a comment.
pub fn apply_config_file(cfg: &mut PipelineConfig, path: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key = value", path.display(), i + 1))?;
        cfg.set(key.trim(), value.trim())
            .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
    }
    Ok(())
}

/// File-name-safe label for a crime type.
pub fn sanitize_type(crime_type: &str) -> String {
    crime_type
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}
