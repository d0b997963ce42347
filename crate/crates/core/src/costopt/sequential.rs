//! Receding-horizon solve with periodic demand observations.
//!
//! Between two updates the injection is chosen by minimising the expected
//! cost of the outputs it controls, conditioned on the latest observation.
//! The decisions up to the next update are committed, the pipe is advanced
//! and the next window starts from the carried field.

use crate::control::UpdateSchedule;
use crate::demand::DemandPath;
use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::transport::{upwind_advance, upwind_solve, ControlSignal, FieldState, Grid};

use super::optimizer::{projected_gradient, OptimizerConfig, TrackingProblem};
use super::{CostReport, DemandModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSolver {
    Iterative(OptimizerConfig),
    /// Each decision set to the conditional mean of the demand it meets.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialSolution<S> {
    pub control: ControlSignal<S>,
    pub field: FieldState<S>,
    /// Realised squared tracking error against the path.
    pub report: CostReport<S>,
}

pub fn sequential_update_solve<S: Real>(
    model: &DemandModel<S>,
    grid: &Grid<S>,
    schedule: &UpdateSchedule<S>,
    path: &DemandPath<S>,
    solver: &InnerSolver,
) -> Result<SequentialSolution<S>> {
    if path.values.len() != grid.nt() + 1 {
        return Err(invalid("path must be sampled on every lattice time"));
    }
    let (nc, d, nt) = (grid.control_steps(), grid.delay_steps(), grid.nt());
    let weights = grid.output_weights();
    let updates = schedule.steps();
    let mut committed = Vec::with_capacity(nc + 1);
    let mut row = vec![S::zero(); grid.nx() + 1];

    for (i, &s0) in updates.iter().enumerate() {
        let next = updates.get(i + 1).copied();
        let last = next.map_or(nc, |s1| s1.min(nc));
        let n_decisions = last - s0 + 1;
        let out_end = (last + d).min(nt);
        let obs = Some((grid.time(s0), path.values[s0]));
        let targets = (s0 + d..=out_end)
            .map(|k| model.moments_given(obs, grid.time(k)))
            .collect::<Result<Vec<_>>>()?;

        let decisions = match solver {
            InnerSolver::Direct => targets[..n_decisions.min(targets.len())]
                .iter()
                .map(|&(m, _)| m)
                .collect(),
            InnerSolver::Iterative(config) => {
                let problem = TrackingProblem::assemble(
                    grid,
                    s0,
                    &row,
                    n_decisions,
                    s0 + d..=out_end,
                    weights[s0 + d..=out_end].to_vec(),
                    targets,
                )?;
                projected_gradient(&problem, config, None)?.solution
            }
        };
        let keep = if next.is_some() {
            last - s0
        } else {
            n_decisions
        };
        committed.extend_from_slice(&decisions[..keep]);

        if let Some(s1) = next {
            row[0] = decisions[0];
            let rows = upwind_advance(grid, &row, s0, s1 - s0, |k| {
                decisions[(k - s0).min(n_decisions - 1)]
            })?;
            row = rows.last().expect("advanced rows").clone();
        }
    }

    let control = ControlSignal::on_control_horizon(grid, committed)?;
    let field = upwind_solve(grid, &vec![S::zero(); grid.nx() + 1], &control)?;
    let per_time = (d..=nt)
        .map(|k| {
            let e = path.values[k] - field.outflow[k];
            e * e
        })
        .collect();
    let report = CostReport::from_integrand(grid, per_time);
    Ok(SequentialSolution {
        control,
        field,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{cm3_control, Plant};
    use crate::costopt::cumrmse_between;
    use crate::demand::{sample_paths, DemandParams, JumpHeightLaw, JumpSpec, MeanFunction};
    use crate::rng::StreamSeed;
    use std::f64::consts::PI;

    fn ps3() -> DemandParams<f64> {
        let mean = MeanFunction::Sinusoid {
            offset: 2.0,
            amplitude: 3.0,
            frequency: 2.0 * PI,
        };
        DemandParams::new(
            3.0,
            2.0,
            mean,
            1.0,
            JumpSpec::new(5.0, JumpHeightLaw::Constant(1.0)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn iterative_and_direct_agree_at_unit_courant() {
        let g = Grid::unit_courant(4.0, 0.1, 1.0).unwrap();
        let p = ps3();
        let path = &sample_paths(&p, &g.times(), StreamSeed::new(11), 1).unwrap()[0];
        let model = p.into();
        let s = UpdateSchedule::every(5, &g);
        let a = sequential_update_solve(
            &model,
            &g,
            &s,
            path,
            &InnerSolver::Iterative(Default::default()),
        )
        .unwrap();
        let b = sequential_update_solve(&model, &g, &s, path, &InnerSolver::Direct).unwrap();
        assert!(a.control.sup_distance(&b.control).unwrap() < 1e-9);
    }

    #[test]
    fn single_step_updates_reproduce_continuous_control() {
        let g = Grid::unit_courant(4.0, 0.1, 1.0).unwrap();
        let p = ps3();
        let path = &sample_paths(&p, &g.times(), StreamSeed::new(2), 1).unwrap()[0];
        let seq = sequential_update_solve(
            &p.clone().into(),
            &g,
            &UpdateSchedule::every(1, &g),
            path,
            &InnerSolver::Direct,
        )
        .unwrap();
        let plant = Plant::of_grid(&g);
        let cm3 = ControlSignal::on_control_horizon(
            &g,
            g.control_times()
                .iter()
                .enumerate()
                .map(|(i, &t)| cm3_control(&p, &plant, t, path.values[i]).unwrap())
                .collect(),
        )
        .unwrap();
        let cm3_out = upwind_solve(&g, &vec![0.0; g.nx() + 1], &cm3)
            .unwrap()
            .outflow;
        assert!(cumrmse_between(&g, &seq.field.outflow, &cm3_out).unwrap() < 1e-12);
    }

    #[test]
    fn windows_solve_below_unit_courant() {
        let g = Grid::with_courant(4.0, 0.1, 0.5, 1.0).unwrap();
        let p = ps3();
        let path = &sample_paths(&p, &g.times(), StreamSeed::new(3), 1).unwrap()[0];
        let s = UpdateSchedule::every(10, &g);
        let cfg = OptimizerConfig {
            gradient_tolerance: 1e-7,
            max_iters: 50_000,
            ..Default::default()
        };
        let sol =
            sequential_update_solve(&p.into(), &g, &s, path, &InnerSolver::Iterative(cfg)).unwrap();
        assert_eq!(sol.control.len(), g.control_steps() + 1);
        assert!(sol.report.cum_rmse.is_finite());
    }

    #[test]
    fn rejects_off_lattice_path() {
        let g = Grid::unit_courant(4.0, 0.1, 1.0).unwrap();
        let p = ps3();
        let path = &sample_paths(&p, &[0.0, 0.5, 1.0], StreamSeed::new(3), 1).unwrap()[0];
        assert!(sequential_update_solve(
            &p.into(),
            &g,
            &UpdateSchedule::every(5, &g),
            path,
            &InnerSolver::Direct
        )
        .is_err());
    }
}
