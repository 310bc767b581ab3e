//! Shared workloads for the benchmarks.

use lz2mode::{Mode, SweepProtocol};

/// Strongly interacting sweep through the swallow-tail regime.
pub fn nonlinear_sweep(n: usize) -> SweepProtocol {
    SweepProtocol::new(1.0, 5.0, n, 0.1)
}

/// Attractive sweep from the lower level, the squeezing workload.
pub fn attractive_sweep(n: usize) -> SweepProtocol {
    SweepProtocol::new(1.0, -5.0, n, 0.1).with_mode(Mode::Two)
}
