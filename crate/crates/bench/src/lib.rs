//! Random inputs shared by the kernel benchmarks.

use comgrl::Matrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-scale, scale]`.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}

/// Symmetric 0/1 adjacency with roughly `avg_degree` neighbours per node.
pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, avg_degree: f64) -> Matrix {
    let p = (avg_degree / n as f64).min(1.0);
    let mut adj = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                adj.set(i, j, 1.0);
                adj.set(j, i, 1.0);
            }
        }
    }
    adj
}
