//! Shared fixtures for the integration suites.

use cmpgnn::bridger::stream_rng;
use cmpgnn::csbm::{generate_shift_pair, shift_fixture_specs_scaled, CsbmSpec};
use cmpgnn::graphstore::Graph;

/// The label-shift benchmark pair at a given size, deterministically seeded.
pub fn shift_pair(seed: u64, nodes_per_domain: usize) -> (Graph, Graph) {
    let (ss, ts) = shift_fixture_specs_scaled(seed, nodes_per_domain);
    let mut rng_s = stream_rng(ss.seed, 0, 0, 9);
    let mut rng_t = stream_rng(ts.seed, 0, 1, 9);
    generate_shift_pair(&ss, &ts, &mut rng_s, &mut rng_t).unwrap()
}

/// A 6+6-node, 2-class, 4-feature pair for gradient and conformance checks.
pub fn desk_pair(seed: u64) -> (Graph, Graph) {
    let spec = CsbmSpec {
        num_classes: 2,
        class_counts: vec![3, 3],
        p_intra: 0.8,
        p_inter: 0.3,
        class_means: vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]],
        class_stddevs: vec![0.6, 0.6],
        feature_dim: 4,
        seed,
    };
    let mut rng_s = stream_rng(seed, 0, 0, 9);
    let mut rng_t = stream_rng(seed, 0, 1, 9);
    generate_shift_pair(&spec, &spec, &mut rng_s, &mut rng_t).unwrap()
}
