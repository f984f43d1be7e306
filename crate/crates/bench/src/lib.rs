//! Input builders shared by the benchmarks.

use gddsg::grouping::SimGraph;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `rows x cols` matrix of rectified standard normals.
pub fn relu_features(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal).max(0.0))
}

pub fn random_labels(n: usize, classes: u32, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// Erdős–Rényi graph on `n` vertices.
pub fn random_graph(n: u32, p: f64, seed: u64) -> SimGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = SimGraph::with_vertices(0..n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                g.add_edge(a, b).expect("distinct known vertices");
            }
        }
    }
    g
}

pub fn random_vectors(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()).collect()
}
