//! Deterministic random streams.
//!
//! Every random draw in the library comes from a ChaCha stream keyed by
//! `(master_seed, purpose, index)`, so results do not depend on evaluation
//! order or thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Purpose tags separating independent randomness sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Prices = 1,
    Demand = 2,
    Randomizer = 3,
    Bootstrap = 4,
    Polish = 5,
    Sampling = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 256-bit seed from the stream key.
pub fn stream_seed(master_seed: u64, purpose: Purpose, index: u64) -> [u8; 32] {
    let mut seed = [0u8; 32];
    let mut state = splitmix64(master_seed ^ splitmix64(purpose as u64));
    state = splitmix64(state ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)));
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    seed
}

/// Opens the stream `(master_seed, purpose, index)`.
pub fn stream(master_seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(stream_seed(master_seed, purpose, index))
}

/// Samples a `dim`-dimensional standard Brownian motion at the points of a
/// nondecreasing `clock` with `clock[0] = 0`, returned node-major.
///
/// With `n = n0 * 2^m` intervals the draws are made coarse-to-fine: first the
/// `n0` increments between every `2^m`-th node, then Brownian-bridge
/// midpoints level by level. Two grids with the same `n0` therefore see the
/// same path at their shared nodes when driven by the same stream.
pub fn gaussian_nodes<R: Rng>(rng: &mut R, clock: &[f64], dim: usize) -> Vec<f64> {
    let n = clock.len().saturating_sub(1);
    let mut out = vec![0.0; clock.len() * dim];
    if n == 0 {
        return out;
    }
    let mut stride = 1usize << n.trailing_zeros();
    let mut k = 0;
    while k < n {
        let sd = (clock[k + stride] - clock[k]).max(0.0).sqrt();
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            out[(k + stride) * dim + j] = out[k * dim + j] + sd * z;
        }
        k += stride;
    }
    while stride > 1 {
        let half = stride / 2;
        let mut left = 0;
        while left < n {
            let (a, c, b) = (left, left + half, left + stride);
            let span = clock[b] - clock[a];
            let (w, var) = if span > 0.0 {
                let w = (clock[c] - clock[a]) / span;
                (w, (clock[c] - clock[a]) * (clock[b] - clock[c]) / span)
            } else {
                (0.0, 0.0)
            };
            let sd = var.max(0.0).sqrt();
            for j in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                let mean = (1.0 - w) * out[a * dim + j] + w * out[b * dim + j];
                out[c * dim + j] = mean + sd * z;
            }
            left += stride;
        }
        stride = half;
    }
    out
}
