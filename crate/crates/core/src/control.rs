//! Closed-form optimal injections for the three information regimes.
//!
//! The injection `u(t)` reaches the outlet at `t + 1/λ`, so the optimal
//! choice is the best prediction of `Y_{t+1/λ}` from the information
//! available when `u(t)` is fixed:
//!
//! * no updates: only `y₀` is known;
//! * periodic updates: the demand observed at the last update `t̂_i ≤ t`;
//! * continuous observation: the current demand `Y_t`.

use crate::demand::{DemandParams, DemandPath};
use crate::error::{invalid, Result};
use crate::moments::conditional_mean;
use crate::scalar::{as_multiple, Real};
use crate::transport::Grid;

/// Transport speed and optimisation horizon of the pipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plant<S> {
    pub speed: S,
    pub horizon: S,
}

impl<S: Real> Plant<S> {
    pub fn new(speed: S, horizon: S) -> Result<Self> {
        if !(speed > S::zero()) || !(horizon > S::one() / speed) {
            return Err(invalid(format!(
                "need speed > 0 and horizon > 1/speed, got {speed}, {horizon}"
            )));
        }
        Ok(Self { speed, horizon })
    }

    pub fn of_grid(grid: &Grid<S>) -> Self {
        Self {
            speed: grid.speed(),
            horizon: grid.horizon(),
        }
    }

    pub fn delay(&self) -> S {
        S::one() / self.speed
    }

    /// Injection stops `1/λ` before the horizon.
    pub fn control_horizon(&self) -> S {
        self.horizon - self.delay()
    }

    fn check(&self, t: S) -> Result<()> {
        let tol = S::lit(1e-9) * (S::one() + self.horizon);
        if t < -tol || t > self.control_horizon() + tol {
            return Err(invalid(format!(
                "time {t} outside control horizon [0, {}]",
                self.control_horizon()
            )));
        }
        Ok(())
    }
}

/// Update instants `t̂_i = i·Δt_up` inside the control horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSchedule<S> {
    interval: S,
    times: Vec<S>,
    steps: Vec<usize>,
}

impl<S: Real> UpdateSchedule<S> {
    /// The interval must be a whole number of lattice steps. An interval
    /// longer than the control horizon leaves the single update `t̂_0 = 0`.
    pub fn new(interval: S, grid: &Grid<S>) -> Result<Self> {
        let stride = as_multiple(interval, grid.dt(), 1e-9)
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                invalid(format!(
                    "update interval {interval} is not a positive multiple of dt = {}",
                    grid.dt()
                ))
            })?;
        Ok(Self::every(stride, grid).with_interval(interval))
    }

    /// Updates every `stride` lattice steps.
    pub fn every(stride: usize, grid: &Grid<S>) -> Self {
        let stride = stride.max(1);
        let steps: Vec<usize> = (0..=grid.control_steps()).step_by(stride).collect();
        let times = steps.iter().map(|&i| grid.time(i)).collect();
        Self {
            interval: S::of_usize(stride) * grid.dt(),
            times,
            steps,
        }
    }

    fn with_interval(mut self, interval: S) -> Self {
        self.interval = interval;
        self
    }

    pub fn interval(&self) -> S {
        self.interval
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    /// Lattice step of every update instant.
    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    /// Index of the last update at or before `t`.
    pub fn last_update(&self, t: S) -> usize {
        let tol = S::lit(1e-9) * (S::one() + t.abs());
        self.times
            .partition_point(|&x| x <= t + tol)
            .saturating_sub(1)
    }

    /// Index of the last update at or before lattice step `step`.
    pub fn last_update_step(&self, step: usize) -> usize {
        self.steps.partition_point(|&x| x <= step).saturating_sub(1)
    }
}

/// Optimal injection without updates: `E[Y_{t+1/λ}]`.
pub fn cm1_control<S: Real>(params: &DemandParams<S>, plant: &Plant<S>, t: S) -> Result<S> {
    plant.check(t)?;
    conditional_mean(params, S::zero(), params.y0(), t + plant.delay())
}

/// Optimal injection with the last observation `y_obs` taken at `t_hat`:
/// `E[Y_{t+1/λ} | Y_{t̂} = y_obs]`.
pub fn cm2_control<S: Real>(
    params: &DemandParams<S>,
    plant: &Plant<S>,
    t: S,
    t_hat: S,
    y_obs: S,
) -> Result<S> {
    plant.check(t)?;
    if t < t_hat {
        return Err(invalid(format!(
            "control time {t} precedes the update time {t_hat}"
        )));
    }
    conditional_mean(params, t_hat, y_obs, t + plant.delay())
}

/// Optimal injection under continuous observation:
/// `E[Y_{t+1/λ} | Y_t = y_now]`.
pub fn cm3_control<S: Real>(
    params: &DemandParams<S>,
    plant: &Plant<S>,
    t: S,
    y_now: S,
) -> Result<S> {
    plant.check(t)?;
    conditional_mean(params, t, y_now, t + plant.delay())
}

/// `u_CM3(t) − u_CM2(t; t̂_i)` on a realised path, where `t̂_i` is the last
/// update at or before `t`.
pub fn pathwise_control_gap<S: Real>(
    params: &DemandParams<S>,
    plant: &Plant<S>,
    path: &DemandPath<S>,
    schedule: &UpdateSchedule<S>,
    t: S,
) -> Result<S> {
    let t_hat = schedule.times()[schedule.last_update(t)];
    let y_now = path.value_at_node(t)?;
    let y_obs = path.value_at_node(t_hat)?;
    Ok(cm3_control(params, plant, t, y_now)? - cm2_control(params, plant, t, t_hat, y_obs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{JumpHeightLaw, JumpSpec, MeanFunction};
    use crate::moments::weighted_mean_integral;

    fn plant() -> Plant<f64> {
        Plant::new(4.0, 1.0).unwrap()
    }

    #[test]
    fn stationary_start_stays_put() {
        let p = DemandParams::ou(2.0, 0.0, MeanFunction::Constant(5.0), 5.0).unwrap();
        for &t in &[0.0, 0.3, 0.75] {
            assert!((cm1_control(&p, &plant(), t).unwrap() - 5.0).abs() < 1e-12);
            assert!((cm2_control(&p, &plant(), t, 0.0, 5.0).unwrap() - 5.0).abs() < 1e-12);
            assert!((cm3_control(&p, &plant(), t, 5.0).unwrap() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cm1_value() {
        let p = DemandParams::ou(1.0, 2.0, MeanFunction::Constant(10.0), 6.0).unwrap();
        let u = cm1_control(&p, &plant(), 0.0).unwrap();
        assert!((u - (10.0 - 4.0 * (-0.25_f64).exp())).abs() < 1e-12);
        assert!((u - 6.8848).abs() < 1e-4);
    }

    #[test]
    fn horizon_checks() {
        let p = DemandParams::ou(1.0, 2.0, MeanFunction::Constant(10.0), 6.0).unwrap();
        assert!(cm1_control(&p, &plant(), 0.8).is_err());
        assert!(cm1_control(&p, &plant(), -0.1).is_err());
        assert!(cm2_control(&p, &plant(), 0.2, 0.3, 1.0).is_err());
        assert!(cm3_control(&p, &plant(), 0.9, 1.0).is_err());
    }

    #[test]
    fn cm3_formula_and_fast_reversion_limit() {
        let mean = MeanFunction::Sinusoid {
            offset: 2.0,
            amplitude: 3.0,
            frequency: 2.0 * std::f64::consts::PI,
        };
        let jump = JumpSpec::new(5.0, JumpHeightLaw::Constant(1.0)).unwrap();
        let p = DemandParams::new(3.0, 2.0, mean.clone(), 1.0, jump).unwrap();
        let (t, y) = (0.4, 2.5);
        let k = 3.0_f64;
        let explicit = (-k / 4.0).exp() * y
            + weighted_mean_integral(&mean, k, t, t + 0.25).unwrap()
            + 5.0 / k * (1.0 - (-k / 4.0).exp());
        assert!((cm3_control(&p, &plant(), t, y).unwrap() - explicit).abs() < 1e-12);

        let fast = DemandParams::ou(1e4, 2.0, mean.clone(), 1.0).unwrap();
        let u = cm3_control(&fast, &plant(), t, 100.0).unwrap();
        assert!((u - mean.eval(t + 0.25)).abs() < 1e-2);
    }

    #[test]
    fn schedule_alignment() {
        let g = Grid::unit_courant(4.0, 0.1, 1.0).unwrap();
        let s = UpdateSchedule::new(0.125, &g).unwrap();
        assert_eq!(s.steps(), &[0, 5, 10, 15, 20, 25, 30]);
        assert_eq!(s.last_update(0.3), 2);
        assert_eq!(s.last_update(0.25), 2);
        assert_eq!(s.last_update_step(9), 1);
        assert!(UpdateSchedule::new(0.03, &g).is_err());
        let single = UpdateSchedule::new(1.025, &g).unwrap();
        assert_eq!(single.steps(), &[0]);
    }
}
