//! Discretised tracking problem and its projected-gradient solver.
//!
//! The upwind scheme is linear in the inflow, so the outflow over a window
//! is `y = A u + y_free`, with `A` assembled column by column from unit
//! inflow pulses. The discretised cost
//!
//! ```text
//! J(u) = Σ_k w_k [ Var_k + (y_k − m_k)² ]
//! ```
//!
//! is a convex quadratic with gradient `2 Aᵀ W (y − m)`.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::transport::{upwind_advance, validate_cfl, ControlSignal, Grid};

use super::{output_targets, DemandModel, Information};

/// Line-search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    /// First trial step when no Barzilai–Borwein estimate is available.
    pub initial_step: f64,
    /// Backtracking factor in (0, 1).
    pub shrink: f64,
    /// Armijo constant in (0, 1).
    pub sufficient_decrease: f64,
    /// Start each line search from the Barzilai–Borwein step.
    pub barzilai_borwein: bool,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            barzilai_borwein: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    Zero,
    Constant(f64),
    /// Each injection starts at the mean demand it will face.
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop once the projected-gradient norm falls below this.
    pub gradient_tolerance: f64,
    pub step: StepRule,
    pub initial_guess: InitialGuess,
    /// Optional box constraint on every injection value.
    pub bounds: Option<(f64, f64)>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            gradient_tolerance: 1e-11,
            step: StepRule::default(),
            initial_guess: InitialGuess::Zero,
            bounds: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(invalid("gradient tolerance must be > 0"));
        }
        let s = &self.step;
        if !(s.initial_step > 0.0)
            || !(s.shrink > 0.0 && s.shrink < 1.0)
            || !(s.sufficient_decrease > 0.0 && s.sufficient_decrease < 1.0)
        {
            return Err(invalid(format!("invalid step rule {s:?}")));
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo <= hi) {
                return Err(invalid(format!("empty bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Quadratic tracking cost over one window of output steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingProblem<S> {
    /// `response[k][j]`: outflow at window step `k` per unit of decision `j`.
    response: Vec<Vec<S>>,
    free: Vec<S>,
    weights: Vec<S>,
    means: Vec<S>,
    variances: Vec<S>,
}

impl<S: Real> TrackingProblem<S> {
    /// Builds the problem for decisions at the lattice steps
    /// `start_step .. start_step + n_decisions` and outputs at the steps
    /// `outputs` (absolute). The inflow after the last decision holds its
    /// value. `start_row` is the field at `start_step`; its boundary entry
    /// is replaced by the first decision.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        grid: &Grid<S>,
        start_step: usize,
        start_row: &[S],
        n_decisions: usize,
        outputs: std::ops::RangeInclusive<usize>,
        weights: Vec<S>,
        targets: Vec<(S, S)>,
    ) -> Result<Self> {
        validate_cfl(grid)?;
        let (first, last) = (*outputs.start(), *outputs.end());
        if n_decisions == 0 || first < start_step || last > grid.nt() || first > last {
            return Err(invalid("empty or misplaced optimisation window"));
        }
        let n_out = last - first + 1;
        if weights.len() != n_out || targets.len() != n_out {
            return Err(invalid("weights/targets do not match the output window"));
        }
        let steps = last - start_step;
        let nx = grid.nx();
        let outflow = |rows: Vec<Vec<S>>| -> Vec<S> {
            rows[first - start_step..].iter().map(|r| r[nx]).collect()
        };

        let mut row = start_row.to_vec();
        row[0] = S::zero();
        let free = outflow(upwind_advance(grid, &row, start_step, steps, |_| {
            S::zero()
        })?);

        let mut columns = Vec::with_capacity(n_decisions);
        for j in 0..n_decisions {
            let mut pulse = vec![S::zero(); nx + 1];
            if j == 0 {
                pulse[0] = S::one();
            }
            let active = |i: usize| (i - start_step).min(n_decisions - 1) == j;
            columns.push(outflow(upwind_advance(
                grid,
                &pulse,
                start_step,
                steps,
                |i| {
                    if active(i) {
                        S::one()
                    } else {
                        S::zero()
                    }
                },
            )?));
        }
        let response = (0..n_out)
            .map(|k| columns.iter().map(|c| c[k]).collect())
            .collect();
        let (means, variances) = targets.into_iter().unzip();
        Ok(Self {
            response,
            free,
            weights,
            means,
            variances,
        })
    }

    /// Whole-horizon problem from an empty pipe.
    pub fn for_horizon(
        model: &DemandModel<S>,
        grid: &Grid<S>,
        info: &Information<S>,
    ) -> Result<Self> {
        let d = grid.delay_steps();
        let weights = grid.output_weights()[d..].to_vec();
        let targets = output_targets(model, grid, info)?;
        let zeros = vec![S::zero(); grid.nx() + 1];
        Self::assemble(
            grid,
            0,
            &zeros,
            grid.control_steps() + 1,
            d..=grid.nt(),
            weights,
            targets,
        )
    }

    pub fn n_decisions(&self) -> usize {
        self.response.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self, u: &[S]) -> Vec<S> {
        self.response
            .iter()
            .zip(&self.free)
            .map(|(row, &f)| f + row.iter().zip(u).map(|(&a, &x)| a * x).sum::<S>())
            .collect()
    }

    pub fn cost(&self, u: &[S]) -> S {
        self.outputs(u)
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                self.weights[k] * (self.variances[k] + (y - self.means[k]) * (y - self.means[k]))
            })
            .sum()
    }

    pub fn gradient(&self, u: &[S]) -> Vec<S> {
        let y = self.outputs(u);
        let mut g = vec![S::zero(); self.n_decisions()];
        for (k, row) in self.response.iter().enumerate() {
            let r = S::lit(2.0) * self.weights[k] * (y[k] - self.means[k]);
            for (gj, &a) in g.iter_mut().zip(row) {
                *gj += a * r;
            }
        }
        g
    }

    /// `J(u + d) − J(u)` evaluated as `gᵀd + Σ w (A d)²`, free of the
    /// cancellation in the difference of two costs.
    fn cost_change(&self, gradient: &[S], d: &[S]) -> S {
        let linear: S = gradient.iter().zip(d).map(|(&g, &x)| g * x).sum();
        let curvature: S = self
            .response
            .iter()
            .zip(&self.weights)
            .map(|(row, &w)| {
                let ad: S = row.iter().zip(d).map(|(&a, &x)| a * x).sum();
                w * ad * ad
            })
            .sum();
        linear + curvature
    }

    fn initial_point(&self, guess: InitialGuess) -> Vec<S> {
        let n = self.n_decisions();
        match guess {
            InitialGuess::Zero => vec![S::zero(); n],
            InitialGuess::Constant(c) => vec![S::lit(c); n],
            InitialGuess::Target => {
                // map each decision to the output it dominates
                (0..n)
                    .map(|j| {
                        let k = (0..self.response.len())
                            .max_by(|&a, &b| {
                                self.response[a][j]
                                    .partial_cmp(&self.response[b][j])
                                    .unwrap_or(std::cmp::Ordering::Equal)
                            })
                            .unwrap_or(0);
                        self.means[k]
                    })
                    .collect()
            }
        }
    }
}

/// Result of [`projected_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<S> {
    pub solution: Vec<S>,
    pub cost: S,
    pub gradient_norm: S,
    pub iterations: usize,
}

fn norm<S: Real>(v: &[S]) -> S {
    v.iter().map(|&x| x * x).sum::<S>().sqrt()
}

/// Projected gradient descent with Armijo backtracking, started from the
/// Barzilai–Borwein step when enabled.
pub fn projected_gradient<S: Real>(
    problem: &TrackingProblem<S>,
    config: &OptimizerConfig,
    start: Option<Vec<S>>,
) -> Result<Minimum<S>> {
    config.validate()?;
    let project = |x: S| match config.bounds {
        Some((lo, hi)) => x.max(S::lit(lo)).min(S::lit(hi)),
        None => x,
    };
    let mut x: Vec<S> = start.unwrap_or_else(|| problem.initial_point(config.initial_guess));
    if x.len() != problem.n_decisions() {
        return Err(invalid("initial point has the wrong dimension"));
    }
    x.iter_mut().for_each(|v| *v = project(*v));
    let tol = S::lit(config.gradient_tolerance);
    let mut g = problem.gradient(&x);
    let mut prev: Option<(Vec<S>, Vec<S>)> = None;
    for it in 0..config.max_iters {
        let residual: Vec<S> = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| xi - project(xi - gi))
            .collect();
        let gn = norm(&residual);
        if gn < tol {
            return Ok(Minimum {
                cost: problem.cost(&x),
                solution: x,
                gradient_norm: gn,
                iterations: it,
            });
        }
        let mut alpha = S::lit(config.step.initial_step);
        if config.step.barzilai_borwein {
            if let Some((px, pg)) = &prev {
                let s: Vec<S> = x.iter().zip(px).map(|(a, b)| *a - *b).collect();
                let yv: Vec<S> = g.iter().zip(pg).map(|(a, b)| *a - *b).collect();
                let sy: S = s.iter().zip(&yv).map(|(a, b)| *a * *b).sum();
                if sy > S::zero() {
                    alpha = s.iter().map(|&v| v * v).sum::<S>() / sy;
                }
            }
        }
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<S> = x
                .iter()
                .zip(&g)
                .map(|(&xi, &gi)| project(xi - alpha * gi))
                .collect();
            let d: Vec<S> = trial.iter().zip(&x).map(|(a, b)| *a - *b).collect();
            let slope: S = g.iter().zip(&d).map(|(a, b)| *a * *b).sum();
            if problem.cost_change(&g, &d) <= S::lit(config.step.sufficient_decrease) * slope {
                accepted = Some(trial);
                break;
            }
            alpha *= S::lit(config.step.shrink);
        }
        let Some(next) = accepted else {
            return Err(Error::Convergence {
                iterations: it,
                gradient_norm: gn.to_f64_lossy(),
                last_iterate: x.iter().map(|v| v.to_f64_lossy()).collect(),
            });
        };
        let g_next = problem.gradient(&next);
        prev = Some((
            std::mem::replace(&mut x, next),
            std::mem::replace(&mut g, g_next),
        ));
    }
    let residual: Vec<S> = x
        .iter()
        .zip(&g)
        .map(|(&xi, &gi)| xi - project(xi - gi))
        .collect();
    Err(Error::Convergence {
        iterations: config.max_iters,
        gradient_norm: norm(&residual).to_f64_lossy(),
        last_iterate: x.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

/// Minimises the discretised expected tracking cost over the injection on
/// the control horizon, starting from an empty pipe.
pub fn minimize_control<S: Real>(
    model: &DemandModel<S>,
    grid: &Grid<S>,
    config: &OptimizerConfig,
    info: &Information<S>,
) -> Result<ControlSignal<S>> {
    let problem = TrackingProblem::for_horizon(model, grid, info)?;
    let min = projected_gradient(&problem, config, None)?;
    ControlSignal::on_control_horizon(grid, min.solution)
}

/// Per-node minimiser: each injection equals the conditional mean of the
/// demand it will meet, given the information in force when it is fixed.
pub fn minimize_control_direct<S: Real>(
    model: &DemandModel<S>,
    grid: &Grid<S>,
    info: &Information<S>,
) -> Result<ControlSignal<S>> {
    let delay = grid.delay();
    let values = grid
        .control_times()
        .into_iter()
        .map(|t| Ok(model.moments_given(info.observation_at(t), t + delay)?.0))
        .collect::<Result<Vec<_>>>()?;
    ControlSignal::on_control_horizon(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DemandParams, MeanFunction};

    fn ps1() -> DemandModel<f64> {
        let mean = MeanFunction::Sinusoid {
            offset: 2.0,
            amplitude: 3.0,
            frequency: 2.0 * std::f64::consts::PI,
        };
        DemandParams::ou(1.0, 2.0, mean, 1.0).unwrap().into()
    }

    #[test]
    fn unit_courant_response_is_a_shift() {
        let g = Grid::unit_courant(4.0, 0.1, 1.0).unwrap();
        let p = TrackingProblem::for_horizon(&ps1(), &g, &Information::None).unwrap();
        for (k, row) in p.response.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                assert_eq!(a, if j == k { 1.0 } else { 0.0 });
            }
        }
        assert!(p.free.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn optimizer_matches_direct() {
        let g = Grid::unit_courant(4.0, 0.1, 1.0).unwrap();
        let it =
            minimize_control(&ps1(), &g, &OptimizerConfig::default(), &Information::None).unwrap();
        let direct = minimize_control_direct(&ps1(), &g, &Information::None).unwrap();
        assert!(it.sup_distance(&direct).unwrap() < 1e-8);
    }

    #[test]
    fn sub_unit_courant_still_converges() {
        let g = Grid::with_courant(4.0, 0.1, 0.5, 1.0).unwrap();
        let p = TrackingProblem::for_horizon(&ps1(), &g, &Information::None).unwrap();
        // the smoothing response is badly conditioned, so ask for less
        let cfg = OptimizerConfig {
            gradient_tolerance: 1e-7,
            max_iters: 50_000,
            ..Default::default()
        };
        let min = projected_gradient(&p, &cfg, None).unwrap();
        assert!(min.gradient_norm < 1e-7);
        let direct = minimize_control_direct(&ps1(), &g, &Information::None).unwrap();
        assert!(min.cost <= p.cost(direct.values()));
    }

    #[test]
    fn bounds_are_respected() {
        let g = Grid::unit_courant(4.0, 0.1, 1.0).unwrap();
        let p = TrackingProblem::for_horizon(&ps1(), &g, &Information::None).unwrap();
        let cfg = OptimizerConfig {
            bounds: Some((0.0, 2.0)),
            ..Default::default()
        };
        let min = projected_gradient(&p, &cfg, None).unwrap();
        let direct = minimize_control_direct(&ps1(), &g, &Information::None).unwrap();
        for (u, m) in min.solution.iter().zip(direct.values()) {
            assert!((u - m.clamp(0.0, 2.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn iteration_budget_exhaustion_reports_state() {
        let g = Grid::with_courant(4.0, 0.1, 0.5, 1.0).unwrap();
        let cfg = OptimizerConfig {
            max_iters: 1,
            ..Default::default()
        };
        match minimize_control(&ps1(), &g, &cfg, &Information::None) {
            Err(Error::Convergence {
                iterations,
                last_iterate,
                gradient_norm,
            }) => {
                assert_eq!(iterations, 1);
                assert_eq!(last_iterate.len(), g.control_steps() + 1);
                assert!(gradient_norm > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
        let bad = OptimizerConfig {
            gradient_tolerance: 0.0,
            ..Default::default()
        };
        assert!(minimize_control(&ps1(), &g, &bad, &Information::None).is_err());
    }
}
