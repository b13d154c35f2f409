//! Inter-type spatial similarity, homogeneity/completeness scoring of
//! filtered community sets, and overlay classification.

use std::collections::{BTreeMap, BTreeSet};

use crate::communities::{Community, CommunityId};
use crate::error::{Error, Result};
use crate::geo::{great_circle_distance, EarthModel, GeoPoint, NodeId};
use crate::graph::StreetGraph;
use crate::mapping::CrimeLayer;

/// The positioned nodes of a filtered community set; what similarity
/// operates on (edges and topology play no role here).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    points: Vec<(NodeId, GeoPoint)>,
}

impl NodeSet {
    /// Non-empty, sorted by node id, ids unique.
    pub fn new(mut points: Vec<(NodeId, GeoPoint)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyNodeSet);
        }
        points.sort_by_key(|(id, _)| *id);
        points.dedup_by_key(|(id, _)| *id);
        Ok(Self { points })
    }

    /// Union of the communities' nodes, with coordinates looked up in `g`.
    pub fn from_communities(communities: &[Community], g: &StreetGraph) -> Result<Self> {
        let ids: BTreeSet<NodeId> =
            communities.iter().flat_map(|c| c.node_ids.iter().copied()).collect();
        let points = ids
            .into_iter()
            .map(|id| g.point(id).map(|p| (id, p)).ok_or(Error::MissingCoordinates(id)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn points(&self) -> &[(NodeId, GeoPoint)] {
        &self.points
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.points.iter().map(|(id, _)| *id)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Orders the pair so both argument orders sum distances identically; keeps
/// the similarity measures exactly symmetric.
fn canonical<'a>(e: &'a NodeSet, f: &'a NodeSet) -> (&'a NodeSet, &'a NodeSet) {
    let ea = e.points.iter().map(|(id, _)| *id);
    let fa = f.points.iter().map(|(id, _)| *id);
    if ea.cmp(fa) == std::cmp::Ordering::Greater {
        (f, e)
    } else {
        (e, f)
    }
}

/// Summed-distance similarity: `1 - (sum of all pairwise distances in km)
/// / (|E| + |F|)`. Close to 1 means the two sets are spatially entangled.
/// The value is NOT confined to [0, 1]: summed distances easily exceed the
/// denominator, which is why [`similarity_normalized`] exists.
pub fn similarity_summed(e: &NodeSet, f: &NodeSet, m: EarthModel) -> f64 {
    let (p, q) = canonical(e, f);
    let mut sum_km = 0.0;
    for &(_, a) in &p.points {
        for &(_, b) in &q.points {
            sum_km += great_circle_distance(a, b, m) / 1000.0;
        }
    }
    1.0 - sum_km / (e.len() + f.len()) as f64
}

/// Range-safe similarity: `1 - mean(d_uv) / D` with `D` the largest pairwise
/// distance over the union of both sets. Unit-free and confined to [0, 1].
/// Two sets over identical node ids are fully similar (1), as are sets whose
/// points all coincide (`D = 0`).
pub fn similarity_normalized(e: &NodeSet, f: &NodeSet, m: EarthModel) -> f64 {
    let (p, q) = canonical(e, f);
    if p.points.len() == q.points.len() && p.ids().eq(q.ids()) {
        return 1.0;
    }
    let mut sum = 0.0;
    for &(_, a) in &p.points {
        for &(_, b) in &q.points {
            sum += great_circle_distance(a, b, m);
        }
    }
    let mean = sum / (p.len() * q.len()) as f64;

    let mut union: Vec<(NodeId, GeoPoint)> = Vec::with_capacity(p.len() + q.len());
    union.extend_from_slice(&p.points);
    union.extend_from_slice(&q.points);
    union.sort_by_key(|(id, _)| *id);
    union.dedup_by_key(|(id, _)| *id);
    let mut max_d = 0.0f64;
    for i in 0..union.len() {
        for j in i + 1..union.len() {
            max_d = max_d.max(great_circle_distance(union[i].1, union[j].1, m));
        }
    }
    if max_d == 0.0 {
        return 1.0;
    }
    (1.0 - mean / max_d).clamp(0.0, 1.0)
}

/// Binary crime-presence tabulation over a community set: for community i,
/// `n[i][j]` counts nodes with crimes (j = 1) and without (j = 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceLabeling {
    rows: Vec<PresenceRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceRow {
    pub community_id: CommunityId,
    pub present: u64,
    pub absent: u64,
}

impl PresenceLabeling {
    pub fn new(rows: Vec<PresenceRow>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[PresenceRow] {
        &self.rows
    }

    /// |V'|: nodes across all communities.
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.present + r.absent).sum()
    }

    /// (criminal, safe) class totals.
    pub fn class_totals(&self) -> (u64, u64) {
        let present = self.rows.iter().map(|r| r.present).sum();
        let absent = self.rows.iter().map(|r| r.absent).sum();
        (present, absent)
    }
}

/// Labels each node of the filtered communities as criminal (layer count
/// > 0) or safe, tabulated per community.
pub fn build_presence_labeling(communities: &[Community], layer: &CrimeLayer) -> PresenceLabeling {
    let rows = communities
        .iter()
        .map(|c| {
            let present = c.node_ids.iter().filter(|id| layer.count(**id) > 0).count() as u64;
            PresenceRow {
                community_id: c.id,
                present,
                absent: c.size as u64 - present,
            }
        })
        .collect();
    PresenceLabeling::new(rows)
}

fn xlog2(p: f64) -> f64 {
    // 0 * log2(0) = 0 by convention
    if p <= 0.0 {
        0.0
    } else {
        p * p.log2()
    }
}

/// Entropy of the presence classes, H(Q), in bits.
fn class_entropy(pl: &PresenceLabeling) -> f64 {
    let n = pl.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (present, absent) = pl.class_totals();
    -(xlog2(present as f64 / n) + xlog2(absent as f64 / n))
}

/// Entropy of the community assignment, H(C), in bits.
fn community_entropy(pl: &PresenceLabeling) -> f64 {
    let n = pl.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    -pl.rows().iter().map(|r| xlog2((r.present + r.absent) as f64 / n)).sum::<f64>()
}

/// H(Q|C): how mixed the classes are inside each community.
fn class_given_community(pl: &PresenceLabeling) -> f64 {
    let n = pl.total() as f64;
    let mut h = 0.0;
    for r in pl.rows() {
        let size = (r.present + r.absent) as f64;
        if size == 0.0 {
            continue;
        }
        for count in [r.present, r.absent] {
            if count > 0 {
                h -= count as f64 / n * (count as f64 / size).log2();
            }
        }
    }
    h
}

/// H(C|Q): how spread each class is across communities.
fn community_given_class(pl: &PresenceLabeling) -> f64 {
    let n = pl.total() as f64;
    let (present_total, absent_total) = pl.class_totals();
    let mut h = 0.0;
    for r in pl.rows() {
        for (count, class_total) in [(r.present, present_total), (r.absent, absent_total)] {
            if count > 0 {
                h -= count as f64 / n * (count as f64 / class_total as f64).log2();
            }
        }
    }
    h
}

/// How single-class the communities are: 1 when every community is entirely
/// criminal or entirely safe, 0 when presence and absence are proportionally
/// alike everywhere. Equals `1 - H(Q|C)/H(Q)`; when H(Q) = 0 (all nodes in
/// one class) the score is 1 by convention.
pub fn homogeneity_score(pl: &PresenceLabeling) -> f64 {
    let hq = class_entropy(pl);
    if hq == 0.0 {
        return 1.0;
    }
    (1.0 - class_given_community(pl) / hq).clamp(0.0, 1.0)
}

/// How concentrated each class is within few communities: 1 when criminal
/// and safe zones are fully apart, 0 when criminality participates
/// proportionally in every community. Equals `1 - H(C|Q)/H(C)`; when
/// H(C) = 0 (a single community) the score is 1 by convention.
pub fn completeness_score(pl: &PresenceLabeling) -> f64 {
    let hc = community_entropy(pl);
    if hc == 0.0 {
        return 1.0;
    }
    (1.0 - community_given_class(pl) / hc).clamp(0.0, 1.0)
}

/// The set of crime types whose filtered communities contain a node.
pub type OverlayClass = BTreeSet<String>;

/// Renders an overlay class for output; "none" when empty.
pub fn overlay_class_label(class: &OverlayClass) -> String {
    if class.is_empty() {
        "none".to_string()
    } else {
        class.iter().cloned().collect::<Vec<_>>().join("+")
    }
}

/// Classifies every node that appears in at least one type's filtered node
/// union by the exact subset of types containing it.
pub fn overlay_membership(sets: &BTreeMap<String, BTreeSet<NodeId>>) -> BTreeMap<NodeId, OverlayClass> {
    let mut overlay: BTreeMap<NodeId, OverlayClass> = BTreeMap::new();
    for (crime_type, nodes) in sets {
        for node in nodes {
            overlay.entry(*node).or_default().insert(crime_type.clone());
        }
    }
    overlay
}

/// Per-type scores plus context counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeScores {
    pub homogeneity: f64,
    pub completeness: f64,
    /// Nodes across the filtered communities (|V'|).
    pub nodes: u64,
    /// Of those, nodes with at least one crime.
    pub criminal_nodes: u64,
}

/// Pairwise similarity between two crime types' filtered sets, both
/// variants.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSimilarity {
    pub type_a: String,
    pub type_b: String,
    pub summed: f64,
    pub normalized: f64,
}

/// Everything the analysis phase produces for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub crime_types: Vec<String>,
    pub scores: BTreeMap<String, TypeScores>,
    pub similarities: Vec<PairSimilarity>,
    pub overlay: BTreeMap<NodeId, OverlayClass>,
    /// Full per-type community stats, sorted by crime average.
    pub community_tables: BTreeMap<String, Vec<Community>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn singleton(id: NodeId, p: GeoPoint) -> NodeSet {
        NodeSet::new(vec![(id, p)]).unwrap()
    }

    // longitude offsets that put equator points 1 km and 4 km apart
    const LON_1KM: f64 = 0.008993216059187304;
    const LON_4KM: f64 = 0.03597286423674922;

    #[test]
    fn summed_similarity_of_coincident_singletons_is_one() {
        let u = singleton(1, pt(37.77, -122.42));
        let v = singleton(2, pt(37.77, -122.42));
        assert_eq!(similarity_summed(&u, &v, EarthModel::default()), 1.0);
    }

    #[test]
    fn summed_similarity_one_km_apart_is_half() {
        let u = singleton(1, pt(0.0, 0.0));
        let v = singleton(2, pt(0.0, LON_1KM));
        let s = similarity_summed(&u, &v, EarthModel::default());
        assert!((s - 0.5).abs() < 1e-6, "got {s}");
    }

    #[test]
    fn summed_similarity_escapes_unit_range() {
        let u = singleton(1, pt(0.0, 0.0));
        let v = singleton(2, pt(0.0, LON_4KM));
        let s = similarity_summed(&u, &v, EarthModel::default());
        assert!((s - (-1.0)).abs() < 1e-6, "got {s}");
    }

    #[test]
    fn similarities_are_exactly_symmetric() {
        let e = NodeSet::new(vec![(1, pt(37.77, -122.42)), (5, pt(37.78, -122.40))]).unwrap();
        let f = NodeSet::new(vec![(2, pt(37.75, -122.44)), (9, pt(37.79, -122.41))]).unwrap();
        let m = EarthModel::default();
        assert_eq!(similarity_summed(&e, &f, m), similarity_summed(&f, &e, m));
        assert_eq!(similarity_normalized(&e, &f, m), similarity_normalized(&f, &e, m));
    }

    #[test]
    fn normalized_similarity_degenerate_cases() {
        let m = EarthModel::default();
        // all points coincident
        let e = NodeSet::new(vec![(1, pt(10.0, 10.0))]).unwrap();
        let f = NodeSet::new(vec![(2, pt(10.0, 10.0))]).unwrap();
        assert_eq!(similarity_normalized(&e, &f, m), 1.0);
        // identical id sets
        let g = NodeSet::new(vec![(1, pt(10.0, 10.0)), (2, pt(11.0, 10.0))]).unwrap();
        assert_eq!(similarity_normalized(&g, &g.clone(), m), 1.0);
        // distinct singletons: mean equals max, so similarity is 0
        let u = singleton(1, pt(0.0, 0.0));
        let v = singleton(2, pt(0.0, LON_1KM));
        assert_eq!(similarity_normalized(&u, &v, m), 0.0);
    }

    fn labeling(rows: &[(u64, u64)]) -> PresenceLabeling {
        PresenceLabeling::new(
            rows.iter()
                .enumerate()
                .map(|(i, (present, absent))| PresenceRow {
                    community_id: i as CommunityId,
                    present: *present,
                    absent: *absent,
                })
                .collect(),
        )
    }

    #[test]
    fn perfectly_separated_labeling_scores_one_one() {
        let pl = labeling(&[(10, 0), (0, 10)]);
        assert_eq!(homogeneity_score(&pl), 1.0);
        assert_eq!(completeness_score(&pl), 1.0);
    }

    #[test]
    fn proportional_labeling_scores_zero_zero() {
        let pl = labeling(&[(5, 5), (5, 5)]);
        assert!(homogeneity_score(&pl).abs() < 1e-12);
        assert!(completeness_score(&pl).abs() < 1e-12);
        // proportional with unequal sizes
        let pl = labeling(&[(2, 6), (1, 3), (4, 12)]);
        assert!(homogeneity_score(&pl).abs() < 1e-12);
        assert!(completeness_score(&pl).abs() < 1e-12);
    }

    #[test]
    fn degenerate_entropies_score_one() {
        // all nodes criminal: H(Q) = 0
        let pl = labeling(&[(3, 0), (7, 0)]);
        assert_eq!(homogeneity_score(&pl), 1.0);
        // a single community: H(C) = 0
        let pl = labeling(&[(3, 4)]);
        assert_eq!(completeness_score(&pl), 1.0);
    }

    #[test]
    fn presence_counts_follow_the_layer() {
        let counts: BTreeMap<NodeId, u64> = [(2, 2), (3, 7)].into();
        let layer = CrimeLayer::new("ASSAULT".into(), counts, "test".into()).unwrap();
        let community = Community {
            id: 0,
            node_ids: [1, 2, 3].into(),
            crime_total: 9,
            crime_avg: 3.0,
            size: 3,
        };
        let pl = build_presence_labeling(&[community], &layer);
        assert_eq!(pl.rows()[0].present, 2);
        assert_eq!(pl.rows()[0].absent, 1);
        assert_eq!(pl.total(), 3);
    }

    #[test]
    fn large_community_set_shape_tabulates() {
        // 1,071 nodes of which 132 carry crimes -> class totals (132, 939)
        let pl = labeling(&[(30, 200), (40, 300), (20, 150), (22, 139), (20, 150)]);
        assert_eq!(pl.total(), 1071);
        assert_eq!(pl.class_totals(), (132, 939));
    }

    #[test]
    fn overlay_classes_are_type_subsets() {
        let sets: BTreeMap<String, BTreeSet<NodeId>> = [
            ("assault".to_string(), BTreeSet::from([1, 2, 3])),
            ("theft".to_string(), BTreeSet::from([2, 3, 4])),
            ("minor".to_string(), BTreeSet::from([3])),
        ]
        .into();
        let overlay = overlay_membership(&sets);
        assert_eq!(overlay[&1], BTreeSet::from(["assault".to_string()]));
        assert_eq!(
            overlay[&3],
            BTreeSet::from(["assault".to_string(), "theft".to_string(), "minor".to_string()])
        );
        assert!(!overlay.contains_key(&5));
        assert_eq!(overlay_class_label(&overlay[&2]), "assault+theft");
        assert_eq!(overlay_class_label(&BTreeSet::new()), "none");
    }
}
