//! Fixtures shared by the benchmarks.

use pindelay::graph::{erdos_renyi, first_strongly_connected, laplacian};
use pindelay::{LaplacianSystem, PinSet, PinningProblem};

/// Connected Erdős–Rényi network with mean degree near 3 and 30% of its
/// nodes pinned.
pub fn network(n: usize) -> (LaplacianSystem, PinSet) {
    let p = (3.0 / (n as f64 - 1.0)).min(1.0);
    let (_, g) = first_strongly_connected(0, 10_000, |s| erdos_renyi(n, p, s))
        .expect("a connected draw within the search budget");
    let m = ((0.3 * n as f64).round() as usize).max(1);
    (laplacian(&g), PinSet::random(n, m, 1).expect("m <= n"))
}

pub fn problem(n: usize, c: f64, tau_r: f64, tau_p: f64) -> PinningProblem {
    let (sys, pins) = network(n);
    PinningProblem::new(sys, pins, c, tau_r, tau_p, 0.0).expect("valid parameters")
}
