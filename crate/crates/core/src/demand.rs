//! Stochastic demand: Ornstein–Uhlenbeck dynamics with optional compound
//! Poisson jumps,
//!
//! ```text
//! dY = κ (μ(t) − Y) dt + σ dW + γ dN,   Y(0) = y₀,
//! ```
//!
//! sampled exactly from the explicit transition law. A sampled path keeps
//! its full noise record (one standard normal per step, jump times and
//! heights) so that the same noise can be replayed for other initial values
//! or re-checked bit for bit.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::moments::weighted_mean_integral;
use crate::rng::StreamSeed;
use crate::scalar::Real;

/// Distribution of a single jump height.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpHeightLaw<S> {
    Constant(S),
    /// Normal with the given mean and standard deviation.
    Normal {
        mean: S,
        std_dev: S,
    },
    /// `exp(N(mu, sigma²))`.
    LogNormal {
        mu: S,
        sigma: S,
    },
}

impl<S: Real> JumpHeightLaw<S> {
    pub fn first_moment(&self) -> S {
        match *self {
            Self::Constant(g) => g,
            Self::Normal { mean, .. } => mean,
            Self::LogNormal { mu, sigma } => (mu + sigma * sigma / S::lit(2.0)).exp(),
        }
    }

    pub fn second_moment(&self) -> S {
        match *self {
            Self::Constant(g) => g * g,
            Self::Normal { mean, std_dev } => mean * mean + std_dev * std_dev,
            Self::LogNormal { mu, sigma } => (S::lit(2.0) * (mu + sigma * sigma)).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant(g) => g.is_finite(),
            Self::Normal { mean, std_dev } => {
                mean.is_finite() && std_dev.is_finite() && std_dev >= S::zero()
            }
            Self::LogNormal { mu, sigma } => {
                mu.is_finite() && sigma.is_finite() && sigma >= S::zero()
            }
        };
        let moments_finite = self.first_moment().is_finite() && self.second_moment().is_finite();
        if ok && moments_finite {
            Ok(())
        } else {
            Err(invalid(format!(
                "jump height law {self:?} has invalid parameters"
            )))
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        match *self {
            Self::Constant(g) => g,
            Self::Normal { mean, std_dev } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std_dev * S::lit(z)
            }
            Self::LogNormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * S::lit(z)).exp()
            }
        }
    }
}

/// Compound Poisson jump component: event intensity and height law.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec<S> {
    intensity: S,
    height: JumpHeightLaw<S>,
}

impl<S: Real> JumpSpec<S> {
    pub fn new(intensity: S, height: JumpHeightLaw<S>) -> Result<Self> {
        if !(intensity >= S::zero()) || !intensity.is_finite() {
            return Err(invalid(format!(
                "jump intensity must be finite and >= 0, got {intensity}"
            )));
        }
        height.validate()?;
        Ok(Self { intensity, height })
    }

    /// No jumps at all.
    pub fn none() -> Self {
        Self {
            intensity: S::zero(),
            height: JumpHeightLaw::Constant(S::zero()),
        }
    }

    pub fn intensity(&self) -> S {
        self.intensity
    }

    pub fn height(&self) -> &JumpHeightLaw<S> {
        &self.height
    }

    /// Mean jump height γ̄.
    pub fn first_moment(&self) -> S {
        self.height.first_moment()
    }

    /// E[γ²].
    pub fn second_moment(&self) -> S {
        self.height.second_moment()
    }

    /// True when the jump part contributes nothing to the law of the
    /// demand (no events, or every jump has height zero).
    pub fn is_null(&self) -> bool {
        self.intensity == S::zero() || self.second_moment() == S::zero()
    }
}

/// Deterministic mean-reversion level μ(t).
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFunction<S> {
    Constant(S),
    /// `offset + amplitude · sin(frequency · t)`
    Sinusoid {
        offset: S,
        amplitude: S,
        frequency: S,
    },
    /// Piecewise-linear interpolation between knots; constant beyond the
    /// first and last knot.
    Tabulated {
        times: Vec<S>,
        values: Vec<S>,
    },
}

impl<S: Real> MeanFunction<S> {
    pub fn tabulated(times: Vec<S>, values: Vec<S>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(invalid(
                "tabulated mean needs equally many (>= 1) knots and values",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("tabulated mean knots must be strictly increasing"));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(invalid("tabulated mean contains non-finite entries"));
        }
        Ok(Self::Tabulated { times, values })
    }

    pub fn eval(&self, t: S) -> S {
        match self {
            Self::Constant(m) => *m,
            Self::Sinusoid {
                offset,
                amplitude,
                frequency,
            } => *offset + *amplitude * (*frequency * t).sin(),
            Self::Tabulated { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let k = times.partition_point(|&x| x <= t);
                let (t0, t1) = (times[k - 1], times[k]);
                let w = (t - t0) / (t1 - t0);
                values[k - 1] + w * (values[k] - values[k - 1])
            }
        }
    }

    /// Checks that the function is defined on `[0, horizon]`. Tabulated
    /// knots must cover the whole interval.
    pub fn covers(&self, horizon: S) -> bool {
        match self {
            Self::Tabulated { times, .. } => {
                let tol = S::lit(1e-12) * (S::one() + horizon.abs());
                times[0] <= tol && times[times.len() - 1] >= horizon - tol
            }
            _ => true,
        }
    }
}

/// Coefficients of the demand dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandParams<S> {
    pub(crate) kappa: S,
    pub(crate) sigma: S,
    pub(crate) mean: MeanFunction<S>,
    pub(crate) y0: S,
    pub(crate) jump: JumpSpec<S>,
}

impl<S: Real> DemandParams<S> {
    pub fn new(
        kappa: S,
        sigma: S,
        mean: MeanFunction<S>,
        y0: S,
        jump: JumpSpec<S>,
    ) -> Result<Self> {
        if !(kappa > S::zero()) || !kappa.is_finite() {
            return Err(invalid(format!(
                "mean-reversion speed must be > 0, got {kappa}"
            )));
        }
        if !(sigma >= S::zero()) || !sigma.is_finite() {
            return Err(invalid(format!("volatility must be >= 0, got {sigma}")));
        }
        if !y0.is_finite() {
            return Err(invalid("initial demand must be finite"));
        }
        Ok(Self {
            kappa,
            sigma,
            mean,
            y0,
            jump,
        })
    }

    /// Pure Ornstein–Uhlenbeck demand.
    pub fn ou(kappa: S, sigma: S, mean: MeanFunction<S>, y0: S) -> Result<Self> {
        Self::new(kappa, sigma, mean, y0, JumpSpec::none())
    }

    pub fn kappa(&self) -> S {
        self.kappa
    }
    pub fn sigma(&self) -> S {
        self.sigma
    }
    pub fn mean(&self) -> &MeanFunction<S> {
        &self.mean
    }
    pub fn y0(&self) -> S {
        self.y0
    }
    pub fn jump(&self) -> &JumpSpec<S> {
        &self.jump
    }

    /// Same dynamics, different starting value.
    pub fn with_y0(&self, y0: S) -> Self {
        Self { y0, ..self.clone() }
    }

    pub fn with_jump(&self, jump: JumpSpec<S>) -> Self {
        Self {
            jump,
            ..self.clone()
        }
    }

    /// True when every field except `y0` agrees.
    pub fn same_dynamics(&self, other: &Self) -> bool {
        self.kappa == other.kappa
            && self.sigma == other.sigma
            && self.mean == other.mean
            && self.jump == other.jump
    }
}

/// Noise driving a single transition `[t, t + Δ]`.
#[derive(Debug, Clone, Copy)]
pub struct StepNoise<'a, S> {
    /// Standard normal draw.
    pub gaussian: S,
    /// Jump times in `(t, t + Δ]`.
    pub jump_times: &'a [S],
    pub jump_heights: &'a [S],
}

impl<S: Real> StepNoise<'_, S> {
    /// Noise-free step.
    pub fn quiet() -> Self {
        StepNoise {
            gaussian: S::zero(),
            jump_times: &[],
            jump_heights: &[],
        }
    }
}

/// Exact transition of the demand from `(t, y)` over a step of length `dt`.
pub fn exact_step<S: Real>(
    params: &DemandParams<S>,
    t: S,
    y: S,
    dt: S,
    noise: StepNoise<'_, S>,
) -> Result<S> {
    if !(dt > S::zero()) {
        return Err(invalid(format!("step length must be > 0, got {dt}")));
    }
    if noise.jump_times.len() != noise.jump_heights.len() {
        return Err(invalid("jump times and heights differ in length"));
    }
    let k = params.kappa;
    let end = t + dt;
    let decay = (-k * dt).exp();
    let drift = weighted_mean_integral(&params.mean, k, t, end)?;
    let var = params.sigma * params.sigma * S::one_minus_exp_neg(S::lit(2.0) * k * dt)
        / (S::lit(2.0) * k);
    let jumps: S = noise
        .jump_times
        .iter()
        .zip(noise.jump_heights)
        .map(|(&tj, &h)| h * (-k * (end - tj)).exp())
        .sum();
    Ok(y * decay + drift + var.sqrt() * noise.gaussian + jumps)
}

/// Noise consumed by a path on a given grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRecord<S> {
    pub gaussians: Vec<S>,
    pub jump_times: Vec<S>,
    pub jump_heights: Vec<S>,
}

impl<S: Real> NoiseRecord<S> {
    /// Draws the noise for every interval of `times`: one standard normal,
    /// then a Poisson(νΔ) event count with uniform event times and heights
    /// from the height law.
    pub fn draw<R: Rng + ?Sized>(jump: &JumpSpec<S>, times: &[S], rng: &mut R) -> Result<Self> {
        check_grid(times)?;
        let steps = times.len() - 1;
        let mut gaussians = Vec::with_capacity(steps);
        let mut jump_times = Vec::new();
        let mut jump_heights = Vec::new();
        let nu = jump.intensity.to_f64_lossy();
        for w in times.windows(2) {
            let (t, dt) = (w[0], w[1] - w[0]);
            let z: f64 = StandardNormal.sample(rng);
            gaussians.push(S::lit(z));
            let rate = nu * dt.to_f64_lossy();
            let count = if rate > 0.0 {
                let p =
                    Poisson::new(rate).map_err(|e| invalid(format!("Poisson rate {rate}: {e}")))?;
                p.sample(rng) as usize
            } else {
                0
            };
            let mut events: Vec<(S, S)> = (0..count)
                .map(|_| {
                    let u: f64 = rng.random();
                    // (t, t + dt]
                    let tj = t + dt * S::lit(1.0 - u);
                    (tj, jump.height.sample(rng))
                })
                .collect();
            events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite jump times"));
            for (tj, h) in events {
                jump_times.push(tj);
                jump_heights.push(h);
            }
        }
        Ok(Self {
            gaussians,
            jump_times,
            jump_heights,
        })
    }

    /// Splits the jump record into per-step slices for `times`.
    fn step_ranges(&self, times: &[S]) -> Result<Vec<std::ops::Range<usize>>> {
        let mut ranges = Vec::with_capacity(times.len().saturating_sub(1));
        let mut cursor = 0;
        for w in times.windows(2) {
            let start = cursor;
            while cursor < self.jump_times.len() && self.jump_times[cursor] <= w[1] {
                if self.jump_times[cursor] <= w[0] {
                    return Err(invalid("jump time outside the sampling grid"));
                }
                cursor += 1;
            }
            ranges.push(start..cursor);
        }
        if cursor != self.jump_times.len() {
            return Err(invalid("jump times extend beyond the sampling grid"));
        }
        Ok(ranges)
    }
}

/// One sampled demand trajectory with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandPath<S> {
    pub times: Vec<S>,
    pub values: Vec<S>,
    pub gaussians: Vec<S>,
    pub jump_times: Vec<S>,
    pub jump_heights: Vec<S>,
}

impl<S: Real> DemandPath<S> {
    pub fn noise(&self) -> NoiseRecord<S> {
        NoiseRecord {
            gaussians: self.gaussians.clone(),
            jump_times: self.jump_times.clone(),
            jump_heights: self.jump_heights.clone(),
        }
    }

    /// Index of the grid node equal to `t` (up to rounding of lattice
    /// arithmetic).
    pub fn node_index(&self, t: S) -> Option<usize> {
        let tol = S::lit(1e-9) * (S::one() + t.abs());
        let k = self.times.partition_point(|&x| x < t - tol);
        (k < self.times.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }

    /// Demand at grid node `t`.
    pub fn value_at_node(&self, t: S) -> Result<S> {
        self.node_index(t)
            .map(|k| self.values[k])
            .ok_or_else(|| invalid(format!("time {t} is not a node of the path grid")))
    }

    /// Number of jumps in `(0, t]`.
    pub fn jump_count_until(&self, t: S) -> usize {
        self.jump_times.partition_point(|&x| x <= t)
    }
}

fn check_grid<S: Real>(times: &[S]) -> Result<()> {
    if times.len() < 2 {
        return Err(invalid("time grid needs at least two nodes"));
    }
    if times[0] != S::zero() {
        return Err(invalid(format!(
            "time grid must start at 0, starts at {}",
            times[0]
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Rebuilds path values from a stored noise record by chaining
/// [`exact_step`].
pub fn replay<S: Real>(
    params: &DemandParams<S>,
    times: &[S],
    noise: &NoiseRecord<S>,
) -> Result<Vec<S>> {
    check_grid(times)?;
    if noise.gaussians.len() != times.len() - 1 {
        return Err(invalid("noise record does not match the grid"));
    }
    let ranges = noise.step_ranges(times)?;
    let mut values = Vec::with_capacity(times.len());
    let mut y = params.y0;
    values.push(y);
    for (k, w) in times.windows(2).enumerate() {
        let r = ranges[k].clone();
        let step = StepNoise {
            gaussian: noise.gaussians[k],
            jump_times: &noise.jump_times[r.clone()],
            jump_heights: &noise.jump_heights[r],
        };
        y = exact_step(params, w[0], y, w[1] - w[0], step)?;
        values.push(y);
    }
    Ok(values)
}

/// Samples one path on `times` with the exact transition law.
pub fn sample_path<S: Real, R: Rng + ?Sized>(
    params: &DemandParams<S>,
    times: &[S],
    rng: &mut R,
) -> Result<DemandPath<S>> {
    let noise = NoiseRecord::draw(&params.jump, times, rng)?;
    let values = replay(params, times, &noise)?;
    Ok(DemandPath {
        times: times.to_vec(),
        values,
        gaussians: noise.gaussians,
        jump_times: noise.jump_times,
        jump_heights: noise.jump_heights,
    })
}

/// Samples one path per entry of `params_list`, all driven by a single
/// shared noise record. The entries may differ only in `y0`.
pub fn sample_ensemble<S: Real, R: Rng + ?Sized>(
    params_list: &[DemandParams<S>],
    times: &[S],
    rng: &mut R,
) -> Result<Vec<DemandPath<S>>> {
    let first = params_list
        .first()
        .ok_or_else(|| invalid("empty parameter list"))?;
    if let Some(p) = params_list.iter().find(|p| !p.same_dynamics(first)) {
        return Err(invalid(format!(
            "ensemble members must share dynamics; {p:?} differs from {first:?}"
        )));
    }
    let noise = NoiseRecord::draw(&first.jump, times, rng)?;
    params_list
        .iter()
        .map(|p| {
            Ok(DemandPath {
                times: times.to_vec(),
                values: replay(p, times, &noise)?,
                gaussians: noise.gaussians.clone(),
                jump_times: noise.jump_times.clone(),
                jump_heights: noise.jump_heights.clone(),
            })
        })
        .collect()
}

/// `count` independent paths; path `i` reads substream `i` of `seed`, so
/// the result does not depend on scheduling.
pub fn sample_paths<S: Real>(
    params: &DemandParams<S>,
    times: &[S],
    seed: StreamSeed,
    count: usize,
) -> Result<Vec<DemandPath<S>>> {
    (0..count)
        .into_par_iter()
        .map(|i| sample_path(params, times, &mut seed.substream(i as u64)))
        .collect()
}

/// Euler–Maruyama path, kept as an independent discretisation check on
/// [`sample_path`]. Jumps of a step are added at the end of that step.
pub fn euler_path<S: Real, R: Rng + ?Sized>(
    params: &DemandParams<S>,
    times: &[S],
    rng: &mut R,
) -> Result<DemandPath<S>> {
    check_grid(times)?;
    for w in times.windows(2) {
        let kdt = params.kappa * (w[1] - w[0]);
        if kdt >= S::one() {
            return Err(Error::Stability {
                kappa_dt: kdt.to_f64_lossy(),
            });
        }
    }
    let noise = NoiseRecord::draw(&params.jump, times, rng)?;
    let ranges = noise.step_ranges(times)?;
    let mut values = Vec::with_capacity(times.len());
    let mut y = params.y0;
    values.push(y);
    for (k, w) in times.windows(2).enumerate() {
        let dt = w[1] - w[0];
        let jumps: S = noise.jump_heights[ranges[k].clone()].iter().copied().sum();
        y = y
            + params.kappa * (params.mean.eval(w[0]) - y) * dt
            + params.sigma * dt.sqrt() * noise.gaussians[k]
            + jumps;
        values.push(y);
    }
    Ok(DemandPath {
        times: times.to_vec(),
        values,
        gaussians: noise.gaussians,
        jump_times: noise.jump_times,
        jump_heights: noise.jump_heights,
    })
}

/// `n + 1` equally spaced nodes on `[0, horizon]`.
pub fn uniform_grid<S: Real>(horizon: S, n: usize) -> Vec<S> {
    let dt = horizon / S::of_usize(n);
    (0..=n)
        .map(|i| if i == n { horizon } else { S::of_usize(i) * dt })
        .collect()
}
