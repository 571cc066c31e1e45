//! Benchmarks live in `benches/`; run them with `cargo bench -p rumour-bench`.

use rumour_core::ModelConstants;

/// Population sizes used across the benchmarks.
pub const SIZES: [u64; 3] = [100, 1_000, 5_000];

pub fn constants() -> ModelConstants {
    ModelConstants::new()
}
