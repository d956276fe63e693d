//! Shared fixtures for the benchmarks.

use convmove::simulate::{simulate_trajectory, uniform_schedule, SimScenario};
use convmove::{KernelSpec, Track};

/// A simulated single track with `n` observations on `[0, 1]`.
pub fn track(n: usize, seed: u64) -> Track {
    simulate_trajectory(&SimScenario {
        kernel: KernelSpec::gaussian_integrated(0.006).unwrap(),
        warp: None,
        grid_nodes: 200,
        domain: [0.0, 1.0],
        meas_var: 1e-4,
        proc_var: 0.04,
        origin: [0.0, 0.0],
        schedule: uniform_schedule(n, [0.0, 1.0]),
        seed,
    })
    .expect("valid scenario")
    .observed
}
