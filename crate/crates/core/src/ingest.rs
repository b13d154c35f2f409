//! Parsers for the two input sources (crime CSV, OSM XML extract) and the
//! line-based graph interchange format.
//!
//! Parsing is total: every row or element is either converted or counted in
//! a rejection bucket, so `accepted + rejected == total` always holds.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::geo::{BoundingBox, GeoPoint, NodeId};
use crate::graph::{Edge, StreetGraph};

/// One georeferenced crime event.
#[derive(Debug, Clone, PartialEq)]
pub struct CrimeRecord {
    pub id: String,
    pub category: String,
    pub point: GeoPoint,
    /// Raw timestamp text from the source, when a date column is mapped.
    pub timestamp: Option<String>,
}

/// Maps dataset columns onto crime-record fields, so arbitrary CSV schemas
/// can be ingested. When `has_header` is false the column "names" are
/// 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMapping {
    pub lat_col: String,
    pub lon_col: String,
    pub category_col: String,
    pub id_col: String,
    pub date_col: Option<String>,
    pub has_header: bool,
}

impl Default for ColumnMapping {
    /// The San Francisco open-data incident schema: X is longitude, Y is
    /// latitude.
    fn default() -> Self {
        Self {
            lat_col: "Y".into(),
            lon_col: "X".into(),
            category_col: "Category".into(),
            id_col: "IncidntNum".into(),
            date_col: Some("Date".into()),
            has_header: true,
        }
    }
}

/// Per-bucket rejection counters for one CSV parse.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectionStats {
    pub rows: usize,
    pub accepted: usize,
    /// Row could not be read or was missing mapped fields.
    pub malformed: usize,
    /// Latitude/longitude failed to parse as numbers.
    pub bad_coordinate: usize,
    /// Coordinates parsed but fell outside valid lat/lon ranges.
    pub out_of_range: usize,
    /// Valid point outside the requested bounding box.
    pub out_of_bbox: usize,
    /// Empty category field.
    pub empty_category: usize,
}

impl RejectionStats {
    pub fn rejected(&self) -> usize {
        self.malformed + self.bad_coordinate + self.out_of_range + self.out_of_bbox + self.empty_category
    }
}

struct ResolvedMapping {
    lat: usize,
    lon: usize,
    category: usize,
    id: usize,
    date: Option<usize>,
}

fn resolve_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn { name: name.to_string() })
}

fn resolve_index(name: &str) -> Result<usize> {
    name.parse::<usize>().map_err(|_| {
        Error::InvalidColumnMapping(format!("{name:?} is not a column index (file has no header)"))
    })
}

impl ColumnMapping {
    fn resolve(&self, headers: Option<&csv::StringRecord>) -> Result<ResolvedMapping> {
        if self.lat_col == self.lon_col {
            return Err(Error::InvalidColumnMapping("lat_col and lon_col are the same column".into()));
        }
        match headers {
            Some(h) => Ok(ResolvedMapping {
                lat: resolve_column(h, &self.lat_col)?,
                lon: resolve_column(h, &self.lon_col)?,
                category: resolve_column(h, &self.category_col)?,
                id: resolve_column(h, &self.id_col)?,
                date: self.date_col.as_deref().map(|c| resolve_column(h, c)).transpose()?,
            }),
            None => Ok(ResolvedMapping {
                lat: resolve_index(&self.lat_col)?,
                lon: resolve_index(&self.lon_col)?,
                category: resolve_index(&self.category_col)?,
                id: resolve_index(&self.id_col)?,
                date: self.date_col.as_deref().map(resolve_index).transpose()?,
            }),
        }
    }
}

/// Parses a crime CSV (RFC 4180, UTF-8) into records, skipping and counting
/// rows that cannot be converted. A missing file or a mapped column absent
/// from the header is a hard error.
pub fn parse_crime_csv(
    path: &Path,
    mapping: &ColumnMapping,
    bbox: Option<&BoundingBox>,
) -> Result<(Vec<CrimeRecord>, RejectionStats)> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(mapping.has_header)
        .flexible(true)
        .from_reader(BufReader::new(file));

    let resolved = if mapping.has_header {
        let headers = reader.headers()?.clone();
        mapping.resolve(Some(&headers))?
    } else {
        mapping.resolve(None)?
    };

    let mut records = Vec::new();
    let mut stats = RejectionStats::default();
    for row in reader.records() {
        stats.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                stats.malformed += 1;
                continue;
            }
        };
        let fields = (
            row.get(resolved.lat),
            row.get(resolved.lon),
            row.get(resolved.category),
            row.get(resolved.id),
        );
        let (lat_s, lon_s, category, id) = match fields {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => {
                stats.malformed += 1;
                continue;
            }
        };
        let (lat, lon) = match (lat_s.trim().parse::<f64>(), lon_s.trim().parse::<f64>()) {
            (Ok(lat), Ok(lon)) => (lat, lon),
            _ => {
                stats.bad_coordinate += 1;
                continue;
            }
        };
        let point = match GeoPoint::new(lat, lon) {
            Ok(p) => p,
            Err(_) => {
                stats.out_of_range += 1;
                continue;
            }
        };
        if let Some(b) = bbox {
            if !b.contains(point) {
                stats.out_of_bbox += 1;
                continue;
            }
        }
        if category.trim().is_empty() {
            stats.empty_category += 1;
            continue;
        }
        let timestamp = resolved
            .date
            .and_then(|i| row.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from);
        records.push(CrimeRecord {
            id: id.to_string(),
            category: category.trim().to_string(),
            point,
            timestamp,
        });
        stats.accepted += 1;
    }
    debug_assert_eq!(stats.accepted + stats.rejected(), stats.rows);
    Ok((records, stats))
}

/// A way kept from the map extract: ordered node refs plus the oneway flag.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWay {
    pub id: i64,
    pub node_refs: Vec<NodeId>,
    pub oneway: bool,
}

/// Nodes and filtered ways pulled out of an OSM XML extract. Way references
/// to nodes absent from the extract are dropped and counted in
/// `dangling_refs`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMapExtract {
    pub nodes: Vec<(NodeId, GeoPoint)>,
    pub ways: Vec<RawWay>,
    pub dangling_refs: usize,
    pub rejected_nodes: usize,
}

/// Highway classes that make up a drivable street network; the default way
/// filter.
pub fn default_highway_filter() -> BTreeSet<String> {
    [
        "motorway",
        "motorway_link",
        "trunk",
        "trunk_link",
        "primary",
        "primary_link",
        "secondary",
        "secondary_link",
        "tertiary",
        "tertiary_link",
        "unclassified",
        "residential",
        "living_street",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

fn xml_err(reader: &Reader<BufReader<File>>, message: impl Into<String>) -> Error {
    Error::Xml { offset: reader.buffer_position(), message: message.into() }
}

fn attr_value(reader: &Reader<BufReader<File>>, el: &BytesStart, key: &[u8]) -> Result<Option<String>> {
    for attr in el.attributes() {
        let attr = attr.map_err(|e| xml_err(reader, e.to_string()))?;
        if attr.key.as_ref() == key {
            let v = attr.unescape_value().map_err(|e| xml_err(reader, e.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

struct PendingWay {
    id: i64,
    refs: Vec<NodeId>,
    highway: Option<String>,
    oneway: bool,
    reversed: bool,
}

/// Extracts nodes and highway-filtered ways from an OSM XML planet extract
/// (node, way, nd and tag elements). Node order within ways is preserved and
/// oneway tags are recorded; `oneway=-1` reverses the node order.
pub fn parse_osm_xml(path: &Path, highway_filter: &BTreeSet<String>) -> Result<RawMapExtract> {
    if highway_filter.is_empty() {
        return Err(Error::NoStreetData("highway filter is empty".into()));
    }
    let mut reader = Reader::from_file(path).map_err(|e| match e {
        quick_xml::Error::Io(io) =>

            Error::Io(std::io::Error::new(io.kind(), io.to_string())),
        other => Error::Xml { offset: 0, message: other.to_string() },
    })?;

    let mut nodes: Vec<(NodeId, GeoPoint)> = Vec::new();
    let mut ways: Vec<RawWay> = Vec::new();
    let mut rejected_nodes = 0usize;
    let mut pending: Option<PendingWay> = None;
    let mut buf = Vec::new();

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| xml_err(&reader, e.to_string()))?;
        match event {
            Event::Start(el) | Event::Empty(el) => match el.name().as_ref() {
                b"node" => {
                    let id = attr_value(&reader, &el, b"id")?
                        .and_then(|v| v.parse::<i64>().ok());
                    let lat = attr_value(&reader, &el, b"lat")?.and_then(|v| v.parse::<f64>().ok());
                    let lon = attr_value(&reader, &el, b"lon")?.and_then(|v| v.parse::<f64>().ok());
                    match (id, lat, lon) {
                        (Some(id), Some(lat), Some(lon)) => match GeoPoint::new(lat, lon) {
                            Ok(p) => nodes.push((id, p)),
                            Err(_) => rejected_nodes += 1,
                        },
                        _ => rejected_nodes += 1,
                    }
                }
                b"way" => {
                    let id = attr_value(&reader, &el, b"id")?
                        .and_then(|v| v.parse::<i64>().ok())
                        .unwrap_or_default();
                    pending = Some(PendingWay { id, refs: Vec::new(), highway: None, oneway: false, reversed: false });
                }
                b"nd" => {
                    if let Some(w) = pending.as_mut() {
                        if let Some(r) = attr_value(&reader, &el, b"ref")?.and_then(|v| v.parse::<i64>().ok()) {
                            w.refs.push(r);
                        }
                    }
                }
                b"tag" => {
                    if let Some(w) = pending.as_mut() {
                        let k = attr_value(&reader, &el, b"k")?;
                        let v = attr_value(&reader, &el, b"v")?;
                        match (k.as_deref(), v) {
                            (Some("highway"), Some(v)) => w.highway = Some(v),
                            (Some("oneway"), Some(v)) => match v.as_str() {
                                "yes" | "true" | "1" => w.oneway = true,
                                "-1" => {
                                    w.oneway = true;
                                    w.reversed = true;
                                }
                                _ => {}
                            },
                            _ => {}
                        }
                    }
                }
                _ => {}
            },
            Event::End(el) => {
                if el.name().as_ref() == b"way" {
                    if let Some(mut w) = pending.take() {
                        let keep = w.highway.as_deref().is_some_and(|h| highway_filter.contains(h));
                        if keep {
                            if w.reversed {
                                w.refs.reverse();
                            }
                            ways.push(RawWay { id: w.id, node_refs: w.refs, oneway: w.oneway });
                        }
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    if ways.is_empty() {
        return Err(Error::NoStreetData(format!(
            "no way in {} matches the highway filter",
            path.display()
        )));
    }

    // drop references to nodes the extract does not contain
    let known: BTreeSet<NodeId> = nodes.iter().map(|(id, _)| *id).collect();
    let mut dangling_refs = 0usize;
    for way in &mut ways {
        let before = way.node_refs.len();
        way.node_refs.retain(|r| known.contains(r));
        dangling_refs += before - way.node_refs.len();
    }

    Ok(RawMapExtract { nodes, ways, dangling_refs, rejected_nodes })
}

const GRAPH_MAGIC: &str = "crimegraph-v1";
const UNDIRECTED_MARK: &str = "undirected";

/// Writes a graph in the `crimegraph-v1` interchange format: one header
/// line, `N` node lines and `E` edge lines, tab separated, LF endings.
/// Floats are printed with enough digits to round-trip exactly.
pub fn save_graph(g: &StreetGraph, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_graph(g, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_graph(g: &StreetGraph, out: &mut impl Write) -> Result<()> {
    if g.is_directed() {
        writeln!(out, "{GRAPH_MAGIC}")?;
    } else {
        writeln!(out, "{GRAPH_MAGIC}\t{UNDIRECTED_MARK}")?;
    }
    for (id, p) in g.nodes() {
        writeln!(out, "N\t{}\t{}\t{}", id, p.lat(), p.lon())?;
    }
    for e in g.edges() {
        writeln!(out, "E\t{}\t{}\t{}", e.src, e.dst, e.weight_m)?;
    }
    Ok(())
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), line, message: message.into() }
}

/// Reads a graph saved by [`save_graph`]. Version mismatches, truncated
/// lines and non-finite weights are hard errors naming the offending line.
pub fn load_graph(path: &Path) -> Result<StreetGraph> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty file"))?;
    let header = header?;
    let mut head = header.split('\t');
    let magic = head.next().unwrap_or_default();
    if magic != GRAPH_MAGIC {
        return Err(Error::VersionMismatch { expected: GRAPH_MAGIC.into(), found: magic.into() });
    }
    let directed = match head.next() {
        None => true,
        Some(UNDIRECTED_MARK) => false,
        Some(other) => return Err(format_err(path, 1, format!("unknown header flag {other:?}"))),
    };

    let mut nodes = std::collections::BTreeMap::new();
    let mut edges = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields[0] {
            "N" => {
                if fields.len() != 4 {
                    return Err(format_err(path, lineno, "node line needs 4 fields"));
                }
                let id: NodeId =
                    fields[1].parse().map_err(|_| format_err(path, lineno, "bad node id"))?;
                let lat: f64 =
                    fields[2].parse().map_err(|_| format_err(path, lineno, "bad latitude"))?;
                let lon: f64 =
                    fields[3].parse().map_err(|_| format_err(path, lineno, "bad longitude"))?;
                let p = GeoPoint::new(lat, lon)
                    .map_err(|e| format_err(path, lineno, e.to_string()))?;
                if nodes.insert(id, p).is_some() {
                    return Err(format_err(path, lineno, format!("duplicate node id {id}")));
                }
            }
            "E" => {
                if fields.len() != 4 {
                    return Err(format_err(path, lineno, "edge line needs 4 fields"));
                }
                let src: NodeId =
                    fields[1].parse().map_err(|_| format_err(path, lineno, "bad source id"))?;
                let dst: NodeId =
                    fields[2].parse().map_err(|_| format_err(path, lineno, "bad target id"))?;
                let weight_m: f64 =
                    fields[3].parse().map_err(|_| format_err(path, lineno, "bad weight"))?;
                if !weight_m.is_finite() {
                    return Err(format_err(path, lineno, "non-finite weight"));
                }
                edges.push(Edge { src, dst, weight_m });
            }
            other => return Err(format_err(path, lineno, format!("unknown line type {other:?}"))),
        }
    }
    StreetGraph::new(nodes, edges, directed)
}
