//! Closed-form first and second moments of the demand, unconditional and
//! conditional on an observation, and the expected quadratic deviation of
//! a deterministic output from the demand.
//!
//! With `D(t0, y, t) = e^{−κ(t−t0)} y + κ∫_{t0}^{t} e^{−κ(t−s)} μ(s) ds`
//! and `J₁, J₂` the first two moments of the discounted jump sum over
//! `t − t0`:
//!
//! ```text
//! E[Y_t | Y_{t0} = y]   = D + J₁
//! E[Y_t² | Y_{t0} = y]  = D² + σ²(1 − e^{−2κΔ})/(2κ) + J₂ + 2·D·J₁
//! ```

use std::sync::OnceLock;

use crate::demand::{DemandParams, JumpSpec, MeanFunction};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Relative tolerance of the tabulated-mean quadrature.
pub const QUADRATURE_RTOL: f64 = 1e-10;
const GAUSS_NODES: usize = 32;
const MAX_BISECTIONS: usize = 30;

/// Mean, second moment and variance of the demand at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet<S> {
    pub t: S,
    pub mean: S,
    pub second_moment: S,
    pub variance: S,
}

/// `κ ∫_{t0}^{t} e^{−κ(t−s)} μ(s) ds`.
pub fn weighted_mean_integral<S: Real>(mean: &MeanFunction<S>, kappa: S, t0: S, t: S) -> Result<S> {
    if t < t0 {
        return Err(invalid(format!("integration end {t} precedes start {t0}")));
    }
    if t == t0 {
        return Ok(S::zero());
    }
    let span = t - t0;
    match mean {
        MeanFunction::Constant(m) => Ok(*m * S::one_minus_exp_neg(kappa * span)),
        MeanFunction::Sinusoid {
            offset,
            amplitude,
            frequency,
        } => {
            let (a, b, w) = (*offset, *amplitude, *frequency);
            let decay = (-kappa * span).exp();
            let phase = |s: S| kappa * (w * s).sin() - w * (w * s).cos();
            let osc = kappa * b / (kappa * kappa + w * w) * (phase(t) - decay * phase(t0));
            Ok(a * S::one_minus_exp_neg(kappa * span) + osc)
        }
        MeanFunction::Tabulated { times, .. } => {
            let integrand = |s: S| kappa * (-kappa * (t - s)).exp() * mean.eval(s);
            // integrate piecewise between knots so every panel is smooth
            let mut breaks = vec![t0];
            breaks.extend(times.iter().copied().filter(|&k| k > t0 && k < t));
            breaks.push(t);
            let mut total = S::zero();
            for w in breaks.windows(2) {
                total += adaptive_gauss(&integrand, w[0], w[1], 0)?;
            }
            Ok(total)
        }
    }
}

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_NODES;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton on P_n starting from the Chebyshev-like guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

fn gauss_panel<S: Real>(f: &impl Fn(S) -> S, a: S, b: S) -> S {
    let (nodes, weights) = gauss_legendre();
    let half = (b - a) / S::lit(2.0);
    let mid = (a + b) / S::lit(2.0);
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| S::lit(w) * f(mid + half * S::lit(x)))
        .sum::<S>()
        * half
}

fn adaptive_gauss<S: Real>(f: &impl Fn(S) -> S, a: S, b: S, depth: usize) -> Result<S> {
    let whole = gauss_panel(f, a, b);
    let mid = (a + b) / S::lit(2.0);
    let split = gauss_panel(f, a, mid) + gauss_panel(f, mid, b);
    let scale = split.abs().max(S::min_positive_value());
    let rtol = S::lit(QUADRATURE_RTOL).max(S::epsilon() * S::lit(16.0));
    if (split - whole).abs() <= rtol * scale
        || (split - whole).abs() <= S::epsilon() * (b - a).abs()
    {
        return Ok(split);
    }
    if depth >= MAX_BISECTIONS {
        return Err(Error::Quadrature {
            tolerance: QUADRATURE_RTOL,
            estimate: ((split - whole).abs() / scale).to_f64_lossy(),
        });
    }
    Ok(adaptive_gauss(f, a, mid, depth + 1)? + adaptive_gauss(f, mid, b, depth + 1)?)
}

/// First and second moments of `Σ_{t_i ≤ Δ} γ_i e^{−κ(Δ−t_i)}` for jumps of
/// a compound Poisson process over an interval of length `span`.
pub fn jump_sum_moments<S: Real>(jump: &JumpSpec<S>, kappa: S, span: S) -> Result<(S, S)> {
    if !(span >= S::zero()) {
        return Err(invalid(format!("interval length must be >= 0, got {span}")));
    }
    if !(kappa > S::zero()) {
        return Err(invalid(format!(
            "mean-reversion speed must be > 0, got {kappa}"
        )));
    }
    let nu = jump.intensity();
    let g1 = jump.first_moment();
    let g2 = jump.second_moment();
    let one = S::one_minus_exp_neg(kappa * span);
    let two = S::one_minus_exp_neg(S::lit(2.0) * kappa * span);
    let mean = g1 * nu / kappa * one;
    // 1 + e^{-2x} − 2e^{-x} = (1 − e^{-x})²
    let second =
        nu * two / (S::lit(2.0) * kappa) * g2 + nu * nu * one * one / (kappa * kappa) * g1 * g1;
    Ok((mean, second))
}

fn deterministic_part<S: Real>(params: &DemandParams<S>, t0: S, y: S, t: S) -> Result<S> {
    let k = params.kappa();
    Ok((-k * (t - t0)).exp() * y + weighted_mean_integral(params.mean(), k, t0, t)?)
}

fn check_times<S: Real>(t0: S, t: S) -> Result<()> {
    if !(t0 >= S::zero()) {
        return Err(invalid(format!("time must be >= 0, got {t0}")));
    }
    if !(t >= t0) {
        return Err(invalid(format!("time {t} precedes conditioning time {t0}")));
    }
    Ok(())
}

/// `E[Y_t | Y_{t0} = y]`.
pub fn conditional_mean<S: Real>(params: &DemandParams<S>, t0: S, y: S, t: S) -> Result<S> {
    check_times(t0, t)?;
    let (j1, _) = jump_sum_moments(params.jump(), params.kappa(), t - t0)?;
    Ok(deterministic_part(params, t0, y, t)? + j1)
}

/// `E[Y_t]`.
pub fn first_moment<S: Real>(params: &DemandParams<S>, t: S) -> Result<S> {
    conditional_mean(params, S::zero(), params.y0(), t)
}

/// `E[Y_t² | Y_{t0} = y]`.
pub fn conditional_second_moment<S: Real>(
    params: &DemandParams<S>,
    t0: S,
    y: S,
    t: S,
) -> Result<S> {
    check_times(t0, t)?;
    let k = params.kappa();
    let span = t - t0;
    let d = deterministic_part(params, t0, y, t)?;
    let (j1, j2) = jump_sum_moments(params.jump(), k, span)?;
    let diffusion = params.sigma() * params.sigma() * S::one_minus_exp_neg(S::lit(2.0) * k * span)
        / (S::lit(2.0) * k);
    Ok(d * d + diffusion + j2 + S::lit(2.0) * d * j1)
}

/// `E[Y_t²]`.
pub fn second_moment<S: Real>(params: &DemandParams<S>, t: S) -> Result<S> {
    conditional_second_moment(params, S::zero(), params.y0(), t)
}

/// Variance of `Y_{t0+span}` given `Y_{t0}`. It depends only on the elapsed
/// time, not on the observed value.
pub fn conditional_variance<S: Real>(params: &DemandParams<S>, span: S) -> Result<S> {
    if !(span >= S::zero()) {
        return Err(invalid(format!("elapsed time must be >= 0, got {span}")));
    }
    let k = params.kappa();
    let jump = params.jump();
    let diffusion = params.sigma() * params.sigma() * S::one_minus_exp_neg(S::lit(2.0) * k * span)
        / (S::lit(2.0) * k);
    // second − mean² of the jump sum, written without the cancellation
    let jumps = jump.intensity() * S::one_minus_exp_neg(S::lit(2.0) * k * span) / (S::lit(2.0) * k)
        * jump.second_moment();
    Ok(diffusion + jumps)
}

pub fn moment_set<S: Real>(params: &DemandParams<S>, t: S) -> Result<MomentSet<S>> {
    Ok(MomentSet {
        t,
        mean: first_moment(params, t)?,
        second_moment: second_moment(params, t)?,
        variance: conditional_variance(params, t)?,
    })
}

/// `E[(Y_t − y_out)²]` for a deterministic output `y_out`. Evaluated as
/// `Var(Y_t) + (E[Y_t] − y_out)²`, which equals
/// `E[Y_t²] − 2 y_out E[Y_t] + y_out²` without its cancellation.
pub fn expected_quadratic_deviation<S: Real>(
    params: &DemandParams<S>,
    t: S,
    y_out: S,
) -> Result<S> {
    let mean = first_moment(params, t)?;
    let var = conditional_variance(params, t)?;
    Ok(var + (mean - y_out) * (mean - y_out))
}

/// Conditional counterpart of [`expected_quadratic_deviation`].
pub fn conditional_quadratic_deviation<S: Real>(
    params: &DemandParams<S>,
    t0: S,
    y: S,
    t: S,
    y_out: S,
) -> Result<S> {
    let mean = conditional_mean(params, t0, y, t)?;
    let var = conditional_variance(params, t - t0)?;
    Ok(var + (mean - y_out) * (mean - y_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::JumpHeightLaw;
    use std::f64::consts::PI;

    fn ps(kappa: f64, gamma: f64) -> DemandParams<f64> {
        let mean = MeanFunction::Sinusoid {
            offset: 2.0,
            amplitude: 3.0,
            frequency: 2.0 * PI,
        };
        let jump = JumpSpec::new(5.0, JumpHeightLaw::Constant(gamma)).unwrap();
        DemandParams::new(kappa, 2.0, mean, 1.0, jump).unwrap()
    }

    /// Composite Simpson with many panels; independent of the closed forms.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let int_x62: f64 = x.iter().zip(w).map(|(x, w)| w * x.powi(62)).sum();
        assert!((int_x62 - 2.0 / 63.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_integral_constant() {
        let m = MeanFunction::Constant(10.0_f64);
        assert!((weighted_mean_integral(&m, 1.0, 0.0, 1e3).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(weighted_mean_integral(&m, 1.0, 2.0, 2.0).unwrap(), 0.0);
        assert!(weighted_mean_integral(&m, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn weighted_integral_sinusoid_matches_quadrature() {
        let m = MeanFunction::Sinusoid {
            offset: 2.0,
            amplitude: 3.0,
            frequency: 2.0 * PI,
        };
        let closed = weighted_mean_integral(&m, 3.0, 0.0, 1.0).unwrap();
        let oracle = simpson(
            |s| 3.0 * (-3.0 * (1.0 - s)).exp() * (2.0 + 3.0 * (2.0 * PI * s).sin()),
            0.0,
            1.0,
            20_000,
        );
        assert!((closed - oracle).abs() < 1e-8, "{closed} vs {oracle}");
    }

    #[test]
    fn weighted_integral_tabulated_matches_sinusoid_knots() {
        let f = |t: f64| 2.0 + 3.0 * (2.0 * PI * t).sin();
        let times: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        let tab = MeanFunction::tabulated(times, values).unwrap();
        let quad = weighted_mean_integral(&tab, 3.0, 0.1, 0.9).unwrap();
        let oracle = simpson(
            |s| 3.0 * (-3.0 * (0.9 - s)).exp() * tab.eval(s),
            0.1,
            0.9,
            320 * 64,
        );
        assert!((quad - oracle).abs() < 1e-9, "{quad} vs {oracle}");
    }

    #[test]
    fn jump_sum_limits() {
        let jump = JumpSpec::new(5.0, JumpHeightLaw::Constant(1.0)).unwrap();
        assert_eq!(jump_sum_moments(&jump, 1.0, 0.0).unwrap(), (0.0, 0.0));
        let (m, s) = jump_sum_moments(&jump, 1.0, 1e3).unwrap();
        assert_eq!(m, 5.0);
        assert_eq!(s, 27.5);
        assert!(jump_sum_moments(&jump, 1.0, -1.0).is_err());
    }

    #[test]
    fn first_moment_values() {
        let p = DemandParams::ou(1.0, 2.0, MeanFunction::Constant(10.0), 6.0).unwrap();
        assert_eq!(first_moment(&p, 0.0).unwrap(), 6.0);
        assert!((first_moment(&p, 1.0).unwrap() - (10.0 - 4.0 * (-1.0_f64).exp())).abs() < 1e-12);
        assert!(first_moment(&p, -0.1).is_err());
        assert!((10.0 - 4.0 * (-1.0_f64).exp() - 8.5285).abs() < 1e-4);
    }

    #[test]
    fn conditional_consistency() {
        let p = ps(3.0, 1.0);
        assert_eq!(conditional_mean(&p, 0.5, 2.0, 0.5).unwrap(), 2.0);
        for &t in &[0.1, 0.4, 0.77, 1.0] {
            let a = conditional_mean(&p, 0.0, 1.0, t).unwrap();
            let b = first_moment(&p, t).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        assert!(conditional_mean(&p, 0.5, 2.0, 0.4).is_err());
    }

    #[test]
    fn second_moment_and_variance() {
        let ps1 = ps(1.0, 0.0);
        assert!((second_moment(&ps1, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let m = first_moment(&ps1, 1.0).unwrap();
        let s = second_moment(&ps1, 1.0).unwrap();
        let expected = 2.0 * (1.0 - (-2.0_f64).exp());
        assert!((s - m * m - expected).abs() < 1e-12);
        assert!((expected - 1.7293).abs() < 1e-4);
        assert_eq!(conditional_variance(&ps1, 0.0).unwrap(), 0.0);
        assert!((conditional_variance(&ps1, 1e3).unwrap() - 2.0).abs() < 1e-12);
        assert!(conditional_variance(&ps1, -1.0).is_err());
    }

    #[test]
    fn jump_variance_matches_second_minus_mean_sq() {
        let p = ps(3.0, 1.0);
        for &t in &[0.05, 0.3, 1.0, 4.0] {
            let set = moment_set(&p, t).unwrap();
            assert!((set.second_moment - set.mean * set.mean - set.variance).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_deviation_vertex_and_literal_form() {
        let p = ps(3.0, 1.0);
        let t = 0.5;
        let mean = first_moment(&p, t).unwrap();
        let var = conditional_variance(&p, t).unwrap();
        assert!((expected_quadratic_deviation(&p, t, mean).unwrap() - var).abs() < 1e-12);
        let s2 = second_moment(&p, t).unwrap();
        for &y in &[-1.0, 0.0, 2.0, 7.5] {
            let literal = s2 - 2.0 * y * mean + y * y;
            assert!((expected_quadratic_deviation(&p, t, y).unwrap() - literal).abs() < 1e-10);
        }
        let quiet = DemandParams::ou(1.0, 0.0, MeanFunction::Constant(3.0), 1.0).unwrap();
        let m = first_moment(&quiet, 0.7).unwrap();
        assert_eq!(expected_quadratic_deviation(&quiet, 0.7, m).unwrap(), 0.0);
    }

    #[test]
    fn f32_instantiation() {
        let p = DemandParams::<f32>::ou(1.0, 2.0, MeanFunction::Constant(10.0), 6.0).unwrap();
        let m = first_moment(&p, 1.0).unwrap();
        assert!((m - (10.0 - 4.0 * (-1.0_f32).exp())).abs() < 1e-5);
    }
}
