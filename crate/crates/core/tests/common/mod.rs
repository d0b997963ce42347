#![allow(dead_code)]

use std::f64::consts::PI;

use demand_tracking::{DemandParams, JumpHeightLaw, JumpSpec, MeanFunction};

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Asserts `|estimate - target| <= k * se` with a readable message.
pub fn within(label: &str, xs: &[f64], target: f64, k: f64) {
    let (m, se) = mean_se(xs);
    assert!(
        (m - target).abs() <= k * se,
        "{label}: MC {m} ± {se}, expected {target} ({:.2} SE)",
        (m - target).abs() / se
    );
}

pub fn sinusoid() -> MeanFunction<f64> {
    MeanFunction::Sinusoid {
        offset: 2.0,
        amplitude: 3.0,
        frequency: 2.0 * PI,
    }
}

/// Sinusoidal-mean demand with σ = 2, y₀ = 1, ν = 5 and constant jump height γ.
pub fn preset(kappa: f64, gamma: f64) -> DemandParams<f64> {
    DemandParams::new(
        kappa,
        2.0,
        sinusoid(),
        1.0,
        JumpSpec::new(5.0, JumpHeightLaw::Constant(gamma)).unwrap(),
    )
    .unwrap()
}

pub fn ps1() -> DemandParams<f64> {
    preset(1.0, 0.0)
}

pub fn ps2() -> DemandParams<f64> {
    preset(3.0, 0.0)
}

pub fn ps3() -> DemandParams<f64> {
    preset(3.0, 1.0)
}
