//! Shared fixtures for the benchmarks.

use hypdyn::maps::SystemModel;
use hypdyn::partition::{base_partition, refine_rounds, Partition, RefineMode, DEFAULT_RECTANGLE_CAP};
use hypdyn::shadowing::{noisy_orbit, PseudoOrbit};
use hypdyn::geometry::Point2;

pub fn horseshoe_partition(k: usize, mode: RefineMode) -> Partition {
    let m = SystemModel::horseshoe();
    refine_rounds(&m, &base_partition(&m).unwrap(), k, mode, DEFAULT_RECTANGLE_CAP).unwrap()
}

/// `count` seeded cat-map pseudo-orbits of length `len`.
pub fn cat_orbits(count: usize, len: usize, alpha: f64) -> Vec<PseudoOrbit> {
    let m = SystemModel::cat_map();
    (0..count as u64)
        .map(|i| noisy_orbit(&m, &Point2::torus(0.1234, 0.5678), len, alpha, i).unwrap())
        .collect()
}
