//! Shared fixtures for the benchmarks.

use cape_core::ode::DerivativeData;
use cape_core::stats::task_rng;
use cape_core::TermLibrary;
use rand::Rng;

/// Random states and derivatives from a dense cubic system in five states.
pub fn planted_data(rows: usize, seed: u64) -> (TermLibrary, DerivativeData) {
    let lib = TermLibrary::new(5, 3);
    let mut rng = task_rng(seed, 0);
    let truth: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..lib.len()).map(|_| if rng.random_bool(0.1) { rng.random_range(-1.0..1.0) } else { 0.0 }).collect())
        .collect();
    let mut data = DerivativeData { params_range: (1.0, 10.0), ..Default::default() };
    for _ in 0..rows {
        let s: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let th = lib.evaluate(&s);
        data.dx.push(truth.iter().map(|r| r.iter().zip(&th).map(|(c, t)| c * t).sum()).collect());
        data.x.push(s);
        data.log_n_mid.push(0.0);
    }
    (lib, data)
}
