//! Expected tracking cost of an injection, its Monte-Carlo counterpart, and
//! the solvers that minimise it.
//!
//! Costs are integrated over the output window `[1/λ, T]` with the
//! trapezoid rule on the transport lattice. At each output time the
//! integrand is `E[(Y_t − y(t))² | info] = Var + (E − y)²`, with the
//! conditioning taken from the information available when the injection
//! that reaches the outlet at `t` was fixed.

mod optimizer;
mod sequential;

pub use optimizer::{
    minimize_control, minimize_control_direct, projected_gradient, InitialGuess, Minimum,
    OptimizerConfig, StepRule, TrackingProblem,
};
pub use sequential::{sequential_update_solve, InnerSolver, SequentialSolution};

use crate::control::{cm1_control, cm2_control, cm3_control, Plant, UpdateSchedule};
use crate::demand::{DemandParams, DemandPath, MeanFunction};
use crate::error::{invalid, Result};
use crate::moments::{conditional_mean, conditional_variance};
use crate::scalar::Real;
use crate::transport::{exact_shift_output, ControlSignal, Grid, Signal, SpatialProfile};

/// Demand seen by the cost functional.
#[derive(Debug, Clone, PartialEq)]
pub enum DemandModel<S> {
    Stochastic(DemandParams<S>),
    /// Known demand curve `Y_t = f(t)`.
    Deterministic(MeanFunction<S>),
}

impl<S: Real> From<DemandParams<S>> for DemandModel<S> {
    fn from(p: DemandParams<S>) -> Self {
        DemandModel::Stochastic(p)
    }
}

impl<S: Real> DemandModel<S> {
    /// Conditional mean and variance of `Y_t` given an observation
    /// `(t0, Y_{t0})`, or given only the initial value when `obs` is `None`.
    pub fn moments_given(&self, obs: Option<(S, S)>, t: S) -> Result<(S, S)> {
        match self {
            DemandModel::Stochastic(p) => {
                let (t0, y) = obs.unwrap_or((S::zero(), p.y0()));
                Ok((
                    conditional_mean(p, t0, y, t)?,
                    conditional_variance(p, t - t0)?,
                ))
            }
            DemandModel::Deterministic(f) => Ok((f.eval(t), S::zero())),
        }
    }

    pub fn params(&self) -> Option<&DemandParams<S>> {
        match self {
            DemandModel::Stochastic(p) => Some(p),
            DemandModel::Deterministic(_) => None,
        }
    }
}

/// Information available to the controller.
#[derive(Debug, Clone, PartialEq)]
pub enum Information<S> {
    /// Only the initial demand.
    None,
    /// Demand observed at each update instant.
    Updates {
        schedule: UpdateSchedule<S>,
        observations: Vec<S>,
    },
}

impl<S: Real> Information<S> {
    pub fn updates(schedule: UpdateSchedule<S>, observations: Vec<S>) -> Result<Self> {
        if observations.len() != schedule.times().len() {
            return Err(invalid(format!(
                "{} observations for {} update instants",
                observations.len(),
                schedule.times().len()
            )));
        }
        Ok(Information::Updates {
            schedule,
            observations,
        })
    }

    /// Reads the observations of `schedule` off a realised path.
    pub fn from_path(schedule: UpdateSchedule<S>, path: &DemandPath<S>) -> Result<Self> {
        let observations = schedule
            .times()
            .iter()
            .map(|&t| path.value_at_node(t))
            .collect::<Result<_>>()?;
        Self::updates(schedule, observations)
    }

    /// Observation in force when the injection at `control_time` is fixed.
    pub fn observation_at(&self, control_time: S) -> Option<(S, S)> {
        match self {
            Information::None => None,
            Information::Updates {
                schedule,
                observations,
            } => {
                let i = schedule.last_update(control_time);
                Some((schedule.times()[i], observations[i]))
            }
        }
    }
}

/// Time-integrated tracking cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport<S> {
    /// Output times in `[1/λ, T]`.
    pub times: Vec<S>,
    /// Integrand `E[(Y_t − y(t))²]` (or the realised squared error).
    pub per_time: Vec<S>,
    pub expected_cost: S,
    /// `∫ √per_time dt`.
    pub cum_rmse: S,
}

impl<S: Real> CostReport<S> {
    fn from_integrand(grid: &Grid<S>, per_time: Vec<S>) -> Self {
        let first = grid.delay_steps();
        let times = (first..=grid.nt()).map(|i| grid.time(i)).collect();
        let roots: Vec<S> = per_time.iter().map(|v| v.max(S::zero()).sqrt()).collect();
        Self {
            times,
            expected_cost: output_trapezoid(grid, &per_time),
            cum_rmse: output_trapezoid(grid, &roots),
            per_time,
        }
    }
}

/// Trapezoid integral over `[1/λ, T]` of samples taken at the output
/// steps `delay_steps..=nt`.
pub fn output_trapezoid<S: Real>(grid: &Grid<S>, samples: &[S]) -> S {
    let w = grid.output_weights();
    w[grid.delay_steps()..]
        .iter()
        .zip(samples)
        .map(|(&w, &v)| w * v)
        .sum()
}

/// Conditional mean and variance at every output step.
pub(crate) fn output_targets<S: Real>(
    model: &DemandModel<S>,
    grid: &Grid<S>,
    info: &Information<S>,
) -> Result<Vec<(S, S)>> {
    let d = grid.delay_steps();
    (d..=grid.nt())
        .map(|k| model.moments_given(info.observation_at(grid.time(k - d)), grid.time(k)))
        .collect()
}

/// Expected cost of a fixed injection `u` under the moment representation
/// of the demand.
pub fn deterministic_cost<S: Real>(
    model: &DemandModel<S>,
    grid: &Grid<S>,
    u: &ControlSignal<S>,
    info: &Information<S>,
) -> Result<CostReport<S>> {
    check_control(grid, u)?;
    let z0 = SpatialProfile::zeros(grid);
    let d = grid.delay_steps();
    let targets = output_targets(model, grid, info)?;
    let per_time = (d..=grid.nt())
        .zip(targets)
        .map(|(k, (mean, var))| {
            let y = exact_shift_output(grid.speed(), &z0, u, grid.time(k), grid.horizon())?;
            Ok(var + (mean - y) * (mean - y))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostReport::from_integrand(grid, per_time))
}

fn check_control<S: Real>(grid: &Grid<S>, u: &ControlSignal<S>) -> Result<()> {
    let tol = S::lit(1e-9) * (S::one() + grid.horizon());
    let last = *u.times().last().expect("non-empty control");
    if u.times()[0].abs() > tol || last < grid.control_horizon() - tol {
        return Err(invalid(format!(
            "control defined on [{}, {last}] does not cover [0, {}]",
            u.times()[0],
            grid.control_horizon()
        )));
    }
    Ok(())
}

/// Which observations the controller uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InformationLevel<S> {
    NoUpdates,
    /// Updates every given time interval.
    Periodic(S),
    Continuous,
}

/// `∫_{1/λ}^{T} √Var(Y_t | info) dt`, the cumRMSE of the optimal control
/// for the given information level, averaged over the observations.
pub fn cumrmse_analytic<S: Real>(
    params: &DemandParams<S>,
    grid: &Grid<S>,
    level: InformationLevel<S>,
) -> Result<S> {
    let d = grid.delay_steps();
    if grid.nt() <= d {
        return Err(invalid("horizon must exceed the transport delay"));
    }
    let schedule = match level {
        InformationLevel::Periodic(interval) => Some(UpdateSchedule::new(interval, grid)?),
        _ => None,
    };
    let roots = (d..=grid.nt())
        .map(|k| {
            let t = grid.time(k);
            let elapsed = match (&level, &schedule) {
                (InformationLevel::NoUpdates, _) => t,
                (InformationLevel::Continuous, _) => grid.delay(),
                (InformationLevel::Periodic(_), Some(s)) => {
                    t - s.times()[s.last_update_step(k - d)]
                }
                _ => unreachable!("schedule built for periodic updates"),
            };
            Ok(conditional_variance(params, elapsed)?.sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(output_trapezoid(grid, &roots))
}

/// `∫_{1/λ}^{T} |a(t) − b(t)| dt` for two outflow series on the full
/// lattice, i.e. the cumRMSE of one output measured against the other.
pub fn cumrmse_between<S: Real>(grid: &Grid<S>, a: &[S], b: &[S]) -> Result<S> {
    if a.len() != grid.nt() + 1 || b.len() != grid.nt() + 1 {
        return Err(invalid("outflow series must cover every lattice time"));
    }
    let d = grid.delay_steps();
    let diffs: Vec<S> = a[d..]
        .iter()
        .zip(&b[d..])
        .map(|(x, y)| (*x - *y).abs())
        .collect();
    Ok(output_trapezoid(grid, &diffs))
}

/// Rule producing an injection, possibly from path observations.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy<S> {
    Fixed(ControlSignal<S>),
    NoUpdates,
    Periodic(UpdateSchedule<S>),
    Continuous,
}

/// Injection of `policy` on the control-horizon nodes. Observations are
/// read causally: periodic updates only at update instants, continuous
/// observation at the control time itself.
pub fn policy_control<S: Real>(
    params: &DemandParams<S>,
    grid: &Grid<S>,
    policy: &Policy<S>,
    path: &DemandPath<S>,
) -> Result<ControlSignal<S>> {
    let plant = Plant::of_grid(grid);
    let values = match policy {
        Policy::Fixed(u) => return Ok(u.clone()),
        Policy::NoUpdates => grid
            .control_times()
            .into_iter()
            .map(|t| cm1_control(params, &plant, t))
            .collect::<Result<Vec<_>>>()?,
        Policy::Periodic(schedule) => grid
            .control_times()
            .into_iter()
            .map(|t| {
                let t_hat = schedule.times()[schedule.last_update(t)];
                cm2_control(params, &plant, t, t_hat, path.value_at_node(t_hat)?)
            })
            .collect::<Result<Vec<_>>>()?,
        Policy::Continuous => grid
            .control_times()
            .into_iter()
            .map(|t| cm3_control(params, &plant, t, path.value_at_node(t)?))
            .collect::<Result<Vec<_>>>()?,
    };
    ControlSignal::on_control_horizon(grid, values)
}

/// Outflow at every lattice time under exact transport from an empty pipe.
pub fn shifted_outflow<S: Real>(grid: &Grid<S>, u: &ControlSignal<S>) -> Result<Vec<S>> {
    let z0 = SpatialProfile::zeros(grid);
    (0..=grid.nt())
        .map(|i| exact_shift_output(grid.speed(), &z0, u, grid.time(i), grid.horizon()))
        .collect()
}

/// Monte-Carlo estimate of the tracking cost with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McCostReport<S> {
    pub times: Vec<S>,
    pub mean_sq_error: Vec<S>,
    /// Standard error of each entry of `mean_sq_error`.
    pub std_error: Vec<S>,
    pub expected_cost: S,
    pub expected_cost_se: S,
    pub cum_rmse: S,
    /// Delta-method standard error of `cum_rmse`, summed over time (an
    /// upper bound that ignores cancellation between times).
    pub cum_rmse_se: S,
    pub paths: usize,
}

/// Averages the realised squared tracking error over `paths`.
pub fn mc_cost_estimate<S: Real>(
    params: &DemandParams<S>,
    paths: &[DemandPath<S>],
    grid: &Grid<S>,
    policy: &Policy<S>,
) -> Result<McCostReport<S>> {
    if paths.len() < 2 {
        return Err(invalid("Monte-Carlo cost needs at least two paths"));
    }
    let lattice = grid.times();
    let tol = S::lit(1e-9) * (S::one() + grid.horizon());
    for p in paths {
        if p.times.len() != lattice.len()
            || p.times
                .iter()
                .zip(&lattice)
                .any(|(a, b)| (*a - *b).abs() > tol)
        {
            return Err(invalid("path grid does not match the transport lattice"));
        }
    }
    let d = grid.delay_steps();
    let m = grid.nt() + 1 - d;
    let n = S::of_usize(paths.len());
    let mut sum = vec![S::zero(); m];
    let mut sum_sq = vec![S::zero(); m];
    let mut cost_sum = S::zero();
    let mut cost_sq = S::zero();
    let mut shared = None;
    for path in paths {
        let out = match policy {
            Policy::Fixed(u) => shared.get_or_insert(shifted_outflow(grid, u)?).clone(),
            _ => shifted_outflow(grid, &policy_control(params, grid, policy, path)?)?,
        };
        let errs: Vec<S> = (d..=grid.nt())
            .map(|k| (path.values[k] - out[k]) * (path.values[k] - out[k]))
            .collect();
        for (j, e) in errs.iter().enumerate() {
            sum[j] += *e;
            sum_sq[j] += *e * *e;
        }
        let c = output_trapezoid(grid, &errs);
        cost_sum += c;
        cost_sq += c * c;
    }
    let se = |s: S, sq: S| {
        let mean = s / n;
        let var = ((sq - n * mean * mean) / (n - S::one())).max(S::zero());
        (mean, (var / n).sqrt())
    };
    let (mean_sq_error, std_error): (Vec<S>, Vec<S>) =
        sum.iter().zip(&sum_sq).map(|(&s, &q)| se(s, q)).unzip();
    let (expected_cost, expected_cost_se) = se(cost_sum, cost_sq);
    let roots: Vec<S> = mean_sq_error.iter().map(|v| v.sqrt()).collect();
    let root_se: Vec<S> = mean_sq_error
        .iter()
        .zip(&std_error)
        .map(|(&v, &e)| {
            if v > S::zero() {
                e / (S::lit(2.0) * v.sqrt())
            } else {
                S::zero()
            }
        })
        .collect();
    Ok(McCostReport {
        times: (d..=grid.nt()).map(|k| grid.time(k)).collect(),
        cum_rmse: output_trapezoid(grid, &roots),
        cum_rmse_se: output_trapezoid(grid, &root_se),
        mean_sq_error,
        std_error,
        expected_cost,
        expected_cost_se,
        paths: paths.len(),
    })
}

/// `u(t) = f(t + 1/λ)` on the control-horizon nodes; with a noise-free
/// known demand this tracks it exactly.
pub fn shifted_tracking_control<S: Real>(
    grid: &Grid<S>,
    f: &impl Signal<S>,
) -> Result<ControlSignal<S>> {
    ControlSignal::sample_control_horizon(grid, |t| f.value_at(t + grid.delay()))
}
