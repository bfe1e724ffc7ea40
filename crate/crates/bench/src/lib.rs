//! Fixtures shared by the benchmarks.

use obsynth_core::{ContinuousSystem, DisturbanceModel, Matrix, SimConfig, Signal};

/// Two-state example plant, parameterized by the `A[0,1]` coupling.
pub fn example_plant(a12: f64) -> ContinuousSystem {
    ContinuousSystem::new(
        Matrix::from_rows(&[&[-2.0, a12], &[3.0, -5.0]]).unwrap(),
        Matrix::column(&[1.0, 2.0]),
        Matrix::from_rows(&[&[0.0, 1.0]]).unwrap(),
        Matrix::from_rows(&[&[1.0]]).unwrap(),
    )
    .unwrap()
}

/// Stable Metzler chain of size `n` with a single measured state.
pub fn chain_plant(n: usize) -> ContinuousSystem {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -2.0 - 0.1 * i as f64;
        if i > 0 {
            a[(i, i - 1)] = 1.0;
        }
    }
    let mut c = Matrix::zeros(1, n);
    c[(0, n - 1)] = 1.0;
    ContinuousSystem::new(a, Matrix::column(&vec![1.0; n]), c, Matrix::zeros(1, 1)).unwrap()
}

pub fn sine_disturbance() -> DisturbanceModel {
    DisturbanceModel {
        w: vec![Signal::sine(1.0, 1.0)],
        w_lo: vec![Signal::constant(-1.0)],
        w_hi: vec![Signal::constant(1.0)],
    }
}

pub fn example_config(t_end: f64, dt: f64) -> SimConfig {
    SimConfig::new(t_end, dt, vec![-1.0, 2.0], vec![-5.0, -5.0], vec![5.0, 5.0])
}
