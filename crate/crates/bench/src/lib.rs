//! Benchmark fixtures shared by the criterion targets.

use evit_core::Tensor;

/// Deterministic pseudo-random tensor, cheap enough to build inside a bench.
pub fn filled(shape: &[usize], seed: u64) -> Tensor {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(shape, |_| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    })
}
