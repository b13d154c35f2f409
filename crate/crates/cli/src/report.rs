//! Plain-text report rendering: per-type community tables (Avg, #), the
//! score table (6 decimals), pairwise similarities, an overlay summary, and
//! a machine-readable key-value block. Byte-deterministic for a fixed
//! report.

use std::collections::BTreeMap;

use crimegraph_core::analysis::{overlay_class_label, AnalysisReport};

const TOP_ROWS: usize = 12;

pub fn render_report(report: &AnalysisReport) -> String {
    let mut out = String::new();
    out.push_str("crimegraph-report-v1\n");

    for (crime_type, stats) in &report.community_tables {
        out.push_str(&format!("[top-communities {crime_type}]\n"));
        out.push_str("Avg\t#\n");
        for c in stats.iter().take(TOP_ROWS) {
            out.push_str(&format!("{:.2}\t{}\n", c.crime_avg, c.size));
        }
    }

    out.push_str("[scores]\n");
    out.push_str("crime_type\thomogeneity\tcompleteness\n");
    for (crime_type, s) in &report.scores {
        out.push_str(&format!("{crime_type}\t{:.6}\t{:.6}\n", s.homogeneity, s.completeness));
    }

    out.push_str("[presence]\n");
    out.push_str("crime_type\tnodes\tcriminal_nodes\n");
    for (crime_type, s) in &report.scores {
        out.push_str(&format!("{crime_type}\t{}\t{}\n", s.nodes, s.criminal_nodes));
    }

    out.push_str("[similarity]\n");
    out.push_str("type_a\ttype_b\tsummed\tnormalized\n");
    for p in &report.similarities {
        out.push_str(&format!("{}\t{}\t{:.6}\t{:.6}\n", p.type_a, p.type_b, p.summed, p.normalized));
    }

    out.push_str("[overlay-summary]\n");
    out.push_str("class\tnodes\n");
    let mut class_sizes: BTreeMap<String, usize> = BTreeMap::new();
    for class in report.overlay.values() {
        *class_sizes.entry(overlay_class_label(class)).or_insert(0) += 1;
    }
    for (label, count) in &class_sizes {
        out.push_str(&format!("{label}\t{count}\n"));
    }

    out.push_str("[values]\n");
    let mut values: BTreeMap<String, f64> = BTreeMap::new();
    for (crime_type, s) in &report.scores {
        values.insert(format!("homogeneity.{crime_type}"), s.homogeneity);
        values.insert(format!("completeness.{crime_type}"), s.completeness);
    }
    for p in &report.similarities {
        values.insert(format!("similarity_summed.{}.{}", p.type_a, p.type_b), p.summed);
        values.insert(format!("similarity_normalized.{}.{}", p.type_a, p.type_b), p.normalized);
    }
    for (key, value) in &values {
        out.push_str(&format!("{key}\t{value:.6}\n"));
    }
    out
}
