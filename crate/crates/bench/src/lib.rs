//! Shared fixtures for the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crimegraph_core::geo::GeoPoint;
use crimegraph_core::graph::StreetGraph;
use crimegraph_core::ingest::CrimeRecord;
use crimegraph_testkit::generate_grid_city;

pub fn bench_city(rows: usize, cols: usize) -> StreetGraph {
    generate_grid_city(rows, cols, 100.0, GeoPoint::new(37.70, -122.45).unwrap(), 4242)
}

/// Uniform random crimes over the city's extent, a fixed fraction matching
/// the benchmarked category.
pub fn bench_crimes(n: usize) -> Vec<CrimeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    (0..n)
        .map(|i| CrimeRecord {
            id: i.to_string(),
            category: if i % 2 == 0 { "ASSAULT".into() } else { "OTHER".into() },
            point: GeoPoint::new(
                37.70 + rng.random_range(0.0..0.04),
                -122.45 + rng.random_range(0.0..0.05),
            )
            .unwrap(),
            timestamp: None,
        })
        .collect()
}
