//! Geodesic distances and a grid-based spatial index for bulk
//! nearest-node queries.
//!
//! Distances are great-circle lengths on a sphere, computed with the
//! spherical law of cosines. The index is a uniform lat/lon cell grid
//! queried by expanding rings of cells outward from the query point;
//! candidate distances are always verified with the exact metric, so the
//! grid only prunes, it never decides.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Identifier of a street-network node (OSM node ids fit in `i64`).
pub type NodeId = i64;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A georeferenced point in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// Validates that `lat` is within [-90, 90] and `lon` within [-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::LatitudeOutOfRange(lat));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::LongitudeOutOfRange(lon));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Spherical Earth model; the radius is fixed for a whole run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarthModel {
    pub radius_m: f64,
}

impl Default for EarthModel {
    fn default() -> Self {
        Self { radius_m: EARTH_RADIUS_M }
    }
}

/// Great-circle distance in meters via the spherical law of cosines.
///
/// The arccos argument is clamped to [-1, 1] because rounding can push it
/// slightly past 1 for near-identical points. Identical inputs short-circuit
/// to exactly 0, and the longitude difference is taken as an absolute value,
/// so `great_circle_distance(a, b) == great_circle_distance(b, a)` holds
/// bit-for-bit.
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint, m: EarthModel) -> f64 {
    if a == b {
        return 0.0;
    }
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let dlon = (a.lon - b.lon).abs().to_radians();
    let arg = lat_a.sin() * lat_b.sin() + lat_a.cos() * lat_b.cos() * dlon.cos();
    m.radius_m * arg.clamp(-1.0, 1.0).acos()
}

/// A lat/lon rectangle with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    min_lat: f64,
    min_lon: f64,
    max_lat: f64,
    max_lon: f64,
}

impl BoundingBox {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64) -> Result<Self> {
        GeoPoint::new(min_lat, min_lon)?;
        GeoPoint::new(max_lat, max_lon)?;
        if min_lat > max_lat || min_lon > max_lon {
            return Err(Error::InvalidBoundingBox(format!(
                "min corner ({min_lat}, {min_lon}) exceeds max corner ({max_lat}, {max_lon})"
            )));
        }
        Ok(Self { min_lat, min_lon, max_lat, max_lon })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }
}

/// Uniform lat/lon cell grid over a fixed node set.
///
/// Queries walk cells in growing Chebyshev rings around the query point and
/// stop once the ring's conservative distance lower bound exceeds the best
/// candidate found so far. The structure is read-only after construction and
/// safe to query from many threads.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cells: Vec<Vec<(NodeId, GeoPoint)>>,
    rows: usize,
    cols: usize,
    lat0: f64,
    lon0: f64,
    cell_h: f64,
    cell_w: f64,
    // node latitude extent, used to bound distances of far cells
    lat_min: f64,
    lat_max: f64,
    lon_span: f64,
    earth: EarthModel,
    len: usize,
}

impl SpatialIndex {
    /// Builds an index over `nodes`. Node ids must be unique and the list
    /// non-empty. The grid is sized so cells hold a handful of nodes each.
    pub fn build(nodes: &[(NodeId, GeoPoint)]) -> Result<Self> {
        Self::build_with_earth(nodes, EarthModel::default())
    }

    pub fn build_with_earth(nodes: &[(NodeId, GeoPoint)], earth: EarthModel) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyNodeList);
        }
        let mut seen = HashSet::with_capacity(nodes.len());
        for (id, _) in nodes {
            if !seen.insert(*id) {
                return Err(Error::DuplicateNodeId(*id));
            }
        }

        let mut lat_min = f64::INFINITY;
        let mut lat_max = f64::NEG_INFINITY;
        let mut lon_min = f64::INFINITY;
        let mut lon_max = f64::NEG_INFINITY;
        for (_, p) in nodes {
            lat_min = lat_min.min(p.lat);
            lat_max = lat_max.max(p.lat);
            lon_min = lon_min.min(p.lon);
            lon_max = lon_max.max(p.lon);
        }

        // ~1 node per cell on average, capped so degenerate inputs stay sane.
        let dim = (nodes.len() as f64).sqrt().ceil() as usize;
        let rows = dim.clamp(1, 4096);
        let cols = dim.clamp(1, 4096);
        let cell_h = ((lat_max - lat_min) / rows as f64).max(1e-9);
        let cell_w = ((lon_max - lon_min) / cols as f64).max(1e-9);

        let mut idx = Self {
            cells: vec![Vec::new(); rows * cols],
            rows,
            cols,
            lat0: lat_min,
            lon0: lon_min,
            cell_h,
            cell_w,
            lat_min,
            lat_max,
            lon_span: lon_max - lon_min,
            earth,
            len: nodes.len(),
        };
        for &(id, p) in nodes {
            let (r, c) = idx.cell_of(p);
            idx.cells[r * cols + c].push((id, p));
        }
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn cell_of(&self, p: GeoPoint) -> (usize, usize) {
        let r = ((p.lat - self.lat0) / self.cell_h).floor();
        let c = ((p.lon - self.lon0) / self.cell_w).floor();
        let r = (r.max(0.0) as usize).min(self.rows - 1);
        let c = (c.max(0.0) as usize).min(self.cols - 1);
        (r, c)
    }

    /// Returns the node nearest to `q` and its distance in meters.
    /// Exact ties are broken toward the smallest node id.
    pub fn nearest(&self, q: GeoPoint) -> (NodeId, f64) {
        let (qr, qc) = self.cell_of(q);
        let mut best: Option<(f64, NodeId)> = None;

        for ring in 0.. {
            let mut any_cell = false;
            self.for_ring_cells(qr, qc, ring, |cell| {
                any_cell = true;
                for &(id, p) in cell {
                    let d = great_circle_distance(q, p, self.earth);
                    let cand = (d, id);
                    if best.is_none_or(|b| cand < b) {
                        best = Some(cand);
                    }
                }
            });

            let exhausted = self.ring_exceeds_grid(qr, qc, ring);
            if !any_cell && exhausted {
                break;
            }
            if let Some((bd, _)) = best {
                if exhausted {
                    break;
                }
                if let Some(bound) = self.ring_lower_bound(q, qr, qc, ring) {
                    if bound > bd {
                        break;
                    }
                } else {
                    break; // nothing left beyond this ring
                }
            }
        }

        let (d, id) = best.expect("index is never empty");
        (id, d)
    }

    fn ring_exceeds_grid(&self, qr: usize, qc: usize, ring: usize) -> bool {
        qr.checked_sub(ring).is_none()
            && qr + ring >= self.rows - 1
            && qc.checked_sub(ring).is_none()
            && qc + ring >= self.cols - 1
    }

    fn for_ring_cells(&self, qr: usize, qc: usize, ring: usize, mut f: impl FnMut(&[(NodeId, GeoPoint)])) {
        let r_lo = qr as isize - ring as isize;
        let r_hi = qr as isize + ring as isize;
        let c_lo = qc as isize - ring as isize;
        let c_hi = qc as isize + ring as isize;
        for r in r_lo..=r_hi {
            if r < 0 || r as usize >= self.rows {
                continue;
            }
            for c in c_lo..=c_hi {
                if c < 0 || c as usize >= self.cols {
                    continue;
                }
                // only the ring boundary; the interior was visited earlier
                let on_ring = r == r_lo || r == r_hi || c == c_lo || c == c_hi;
                if on_ring {
                    f(&self.cells[r as usize * self.cols + c as usize]);
                }
            }
        }
    }

    /// Conservative lower bound (in meters) on the distance from `q` to any
    /// node in a cell strictly outside Chebyshev ring `ring`. Returns `None`
    /// when no such cell exists.
    fn ring_lower_bound(&self, q: GeoPoint, qr: usize, qc: usize, ring: usize) -> Option<f64> {
        let r = self.earth.radius_m;
        let mut bound: Option<f64> = None;
        let mut push = |b: f64| {
            let b = b.max(0.0);
            bound = Some(bound.map_or(b, |cur| cur.min(b)));
        };

        // Cells north of the visited block: their latitudes start at this edge.
        if qr + ring < self.rows - 1 {
            let edge = self.lat0 + (qr + ring + 1) as f64 * self.cell_h;
            push(r * (edge - q.lat).max(0.0).to_radians());
        }
        // Cells south of the visited block.
        if (qr as isize - ring as isize - 1) >= 0 {
            let edge = self.lat0 + (qr - ring) as f64 * self.cell_h;
            push(r * (q.lat - edge).max(0.0).to_radians());
        }
        // Cells east of the visited block: bound through the longitude gap.
        if qc + ring < self.cols - 1 {
            let edge = self.lon0 + (qc + ring + 1) as f64 * self.cell_w;
            push(self.lon_gap_bound(q, (edge - q.lon).max(0.0)));
        }
        // Cells west of the visited block.
        if (qc as isize - ring as isize - 1) >= 0 {
            let edge = self.lon0 + (qc - ring) as f64 * self.cell_w;
            push(self.lon_gap_bound(q, (q.lon - edge).max(0.0)));
        }
        bound
    }

    /// Lower bound on the great-circle distance between `q` and any point
    /// whose longitude differs by at least `dlon_deg` and whose latitude lies
    /// within the indexed extent. Derived by maximizing
    /// sin(a)sin(b) + cos(a)cos(b)cos(dlon) over the latitude interval.
    fn lon_gap_bound(&self, q: GeoPoint, dlon_deg: f64) -> f64 {
        // If the grid spans more than a hemisphere, longitudes can wrap
        // around and the gap no longer bounds the angle; fall back to 0.
        if self.lon_span + dlon_deg >= 180.0 {
            return 0.0;
        }
        let lq = q.lat.to_radians();
        let a = lq.sin();
        let b = lq.cos() * dlon_deg.to_radians().cos();
        let lo = self.lat_min.to_radians();
        let hi = self.lat_max.to_radians();
        let peak = a.atan2(b);
        let mut max_cos = f64::NEG_INFINITY;
        for phi in [lo, hi, peak.clamp(lo, hi)] {
            max_cos = max_cos.max(a * phi.sin() + b * phi.cos());
        }
        self.earth.radius_m * max_cos.clamp(-1.0, 1.0).acos()
    }
}
