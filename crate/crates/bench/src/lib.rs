//! Benchmark fixtures.

use sclab_core::{FVPath, TimeGrid};

/// Deterministic two-dimensional path with a jump every third node.
pub fn sawtooth(n_steps: usize, phase: f64) -> FVPath {
    let grid = TimeGrid::new(1.0, n_steps).expect("positive grid");
    let incs: Vec<Vec<f64>> = (0..=n_steps)
        .map(|k| {
            if k % 3 == 0 {
                let x = (k as f64 + phase).sin();
                vec![x, -0.5 * x]
            } else {
                vec![0.0, 0.0]
            }
        })
        .collect();
    FVPath::from_increments(grid, &incs).expect("matching dims")
}
