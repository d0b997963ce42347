use std::path::{Path, PathBuf};

use anyhow::Context;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::statistics::{Data, OrderStatistics};

use crate::control::{cm3_control, Plant};
use crate::costopt::{
    cumrmse_analytic, cumrmse_between, deterministic_cost, mc_cost_estimate, minimize_control,
    policy_control, sequential_update_solve, shifted_tracking_control, DemandModel, Information,
    InformationLevel, InnerSolver, OptimizerConfig, Policy,
};
use crate::demand::{sample_paths, DemandParams, DemandPath};
use crate::error::{invalid, Result};
use crate::moments::moment_set;
use crate::rng::StreamSeed;
use crate::transport::{upwind_solve, ControlSignal, Grid};

use super::scenario::{Artifact, DemandMode, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandMethod {
    /// Quantiles of the closed-form Gaussian marginal.
    Normal,
    /// Sample quantiles of a Monte-Carlo ensemble.
    Empirical,
}

impl BandMethod {
    fn label(self) -> &'static str {
        match self {
            BandMethod::Normal => "normal",
            BandMethod::Empirical => "empirical",
        }
    }
}

/// Quantile curves of the demand; `values[l][k]` is level `l` at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTable {
    pub times: Vec<f64>,
    pub levels: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub method: BandMethod,
}

/// Pointwise quantiles of `Y_t`. Without an effective jump part the
/// marginal is Gaussian and the quantiles are exact; otherwise they are
/// read off `mc_paths` simulated paths.
pub fn confidence_bands(
    params: &DemandParams<f64>,
    times: &[f64],
    levels: &[f64],
    mc_paths: usize,
    seed: u64,
) -> Result<BandTable> {
    if let Some(bad) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(invalid(format!("band level {bad} outside (0, 1)")));
    }
    if params.jump().is_null() {
        let std_normal = Normal::standard();
        let moments = times
            .iter()
            .map(|&t| moment_set(params, t))
            .collect::<Result<Vec<_>>>()?;
        let values = levels
            .iter()
            .map(|&p| {
                let z = std_normal.inverse_cdf(p);
                moments
                    .iter()
                    .map(|m| m.mean + z * m.variance.max(0.0).sqrt())
                    .collect()
            })
            .collect();
        return Ok(BandTable {
            times: times.to_vec(),
            levels: levels.to_vec(),
            values,
            method: BandMethod::Normal,
        });
    }
    if mc_paths < 2 {
        return Err(invalid("empirical bands need at least two paths"));
    }
    let paths = sample_paths(params, times, StreamSeed::new(seed), mc_paths)?;
    let mut values = vec![Vec::with_capacity(times.len()); levels.len()];
    for k in 0..times.len() {
        let mut data = Data::new(paths.iter().map(|p| p.values[k]).collect::<Vec<_>>());
        for (row, &p) in values.iter_mut().zip(levels) {
            row.push(data.quantile(p));
        }
    }
    Ok(BandTable {
        times: times.to_vec(),
        levels: levels.to_vec(),
        values,
        method: BandMethod::Empirical,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub interval: f64,
    pub steps: usize,
    /// `∫ |y_seq − y_CM3| dt` over the output window.
    pub gap: f64,
}

/// Runs the sequential update solve on path 0 of the scenario seed for
/// each update interval and measures its output against the continuously
/// informed control on the same path.
pub fn convergence_study(scenario: &Scenario, intervals: &[f64]) -> Result<Vec<ConvergenceRow>> {
    let params = scenario.params()?;
    let grid = scenario.grid()?;
    let path = first_path(&params, &grid, scenario.seed)?;
    let plant = Plant::of_grid(&grid);
    let cm3 = ControlSignal::on_control_horizon(
        &grid,
        grid.control_times()
            .iter()
            .enumerate()
            .map(|(i, &t)| cm3_control(&params, &plant, t, path.values[i]))
            .collect::<Result<_>>()?,
    )?;
    let zeros = vec![0.0; grid.nx() + 1];
    let reference = upwind_solve(&grid, &zeros, &cm3)?.outflow;
    let model = DemandModel::Stochastic(params);
    intervals
        .iter()
        .map(|&interval| {
            let schedule = crate::control::UpdateSchedule::new(interval, &grid)?;
            let steps = schedule
                .steps()
                .get(1)
                .copied()
                .unwrap_or(grid.control_steps() + 1);
            let sol = sequential_update_solve(
                &model,
                &grid,
                &schedule,
                &path,
                &InnerSolver::Iterative(OptimizerConfig::default()),
            )?;
            Ok(ConvergenceRow {
                interval,
                steps,
                gap: cumrmse_between(&grid, &sol.field.outflow, &reference)?,
            })
        })
        .collect()
}

fn first_path(params: &DemandParams<f64>, grid: &Grid<f64>, seed: u64) -> Result<DemandPath<f64>> {
    Ok(sample_paths(params, &grid.times(), StreamSeed::new(seed), 1)?.remove(0))
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bands_csv(path: &Path, bands: &BandTable) -> anyhow::Result<()> {
    let rows = bands
        .levels
        .iter()
        .zip(&bands.values)
        .flat_map(|(&level, row)| {
            bands.times.iter().zip(row).map(move |(&t, &q)| {
                vec![num(t), num(level), num(q), bands.method.label().to_string()]
            })
        });
    write_csv(
        path,
        &["t [time]", "level [-]", "quantile [demand]", "method"],
        rows,
    )
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> anyhow::Result<()> {
    write_csv(
        path,
        &[
            "dt_up [time]",
            "dt_up [lattice steps]",
            "cum_rmse_gap [demand*time]",
        ],
        rows.iter()
            .map(|r| vec![num(r.interval), r.steps.to_string(), num(r.gap)]),
    )
}

/// Files written by [`run_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
}

/// Executes the scenario and writes the requested CSV artifacts into
/// `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> anyhow::Result<RunSummary> {
    scenario.validate()?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let wants = |a: Artifact| scenario.outputs.contains(&a);
    let grid = scenario.grid()?;
    let mut files = Vec::new();
    let mut emit = |a: Artifact, header: &[&str], rows: Vec<Vec<String>>| -> anyhow::Result<()> {
        let path = out_dir.join(a.file_name());
        write_csv(&path, header, rows)?;
        files.push(path);
        Ok(())
    };

    if scenario.mode == DemandMode::Deterministic {
        let model = scenario.model()?;
        let DemandModel::Deterministic(f) = &model else {
            unreachable!("deterministic mode")
        };
        let times = grid.times();
        let u = minimize_control(
            &model,
            &grid,
            &OptimizerConfig::default(),
            &Information::None,
        )?;
        let shifted = shifted_tracking_control(&grid, &|t| f.eval(t))?;
        let y = upwind_solve(&grid, &vec![0.0; grid.nx() + 1], &u)?.outflow;
        if wants(Artifact::Moments) {
            let rows = times
                .iter()
                .map(|&t| vec![num(t), num(f.eval(t)), num(0.0), num(f.eval(t) * f.eval(t))])
                .collect();
            emit(
                Artifact::Moments,
                &[
                    "t [time]",
                    "mean [demand]",
                    "variance [demand^2]",
                    "second_moment [demand^2]",
                ],
                rows,
            )?;
        }
        if wants(Artifact::Controls) {
            let rows = u
                .times()
                .iter()
                .zip(u.values())
                .zip(shifted.values())
                .map(|((&t, &a), &b)| vec![num(t), num(a), num(b)])
                .collect();
            emit(
                Artifact::Controls,
                &[
                    "t [time]",
                    "u_optimized [demand]",
                    "u_shifted_demand [demand]",
                ],
                rows,
            )?;
        }
        if wants(Artifact::Outputs) {
            let rows = times
                .iter()
                .zip(&y)
                .map(|(&t, &v)| vec![num(t), num(f.eval(t)), num(v)])
                .collect();
            emit(
                Artifact::Outputs,
                &["t [time]", "demand [demand]", "y_optimized [demand]"],
                rows,
            )?;
        }
        if wants(Artifact::Costs) {
            let report = deterministic_cost(&model, &grid, &u, &Information::None)?;
            let sup = (grid.delay_steps()..=grid.nt())
                .map(|k| (y[k] - f.eval(times[k])).abs())
                .fold(0.0, f64::max);
            emit(
                Artifact::Costs,
                &[
                    "method",
                    "expected_cost [demand^2*time]",
                    "cum_rmse [demand*time]",
                    "sup_tracking_error [demand]",
                ],
                vec![vec![
                    "optimized".into(),
                    num(report.expected_cost),
                    num(report.cum_rmse),
                    num(sup),
                ]],
            )?;
        }
        return Ok(RunSummary { files });
    }

    let params = scenario.params()?;
    let model = DemandModel::Stochastic(params.clone());
    let times = grid.times();
    let schedule = scenario.schedule(&grid)?;
    let paths = sample_paths(
        &params,
        &times,
        StreamSeed::new(scenario.seed),
        scenario.mc_paths,
    )?;
    let path0 = &paths[0];
    let zeros = vec![0.0; grid.nx() + 1];

    if wants(Artifact::DemandPaths) {
        let rows = paths
            .iter()
            .take(scenario.export_paths)
            .enumerate()
            .flat_map(|(i, p)| {
                p.times
                    .iter()
                    .zip(&p.values)
                    .map(move |(&t, &v)| vec![i.to_string(), num(t), num(v)])
            })
            .collect();
        emit(
            Artifact::DemandPaths,
            &["path", "t [time]", "demand [demand]"],
            rows,
        )?;
    }
    if wants(Artifact::Moments) {
        let rows = times
            .iter()
            .map(|&t| {
                let m = moment_set(&params, t)?;
                Ok(vec![
                    num(t),
                    num(m.mean),
                    num(m.variance),
                    num(m.second_moment),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        emit(
            Artifact::Moments,
            &[
                "t [time]",
                "mean [demand]",
                "variance [demand^2]",
                "second_moment [demand^2]",
            ],
            rows,
        )?;
    }

    let mut labels = vec!["cm1"];
    let mut policies = vec![Policy::NoUpdates];
    if let Some(s) = &schedule {
        labels.push("cm2");
        policies.push(Policy::Periodic(s.clone()));
    }
    labels.push("cm3");
    policies.push(Policy::Continuous);

    if wants(Artifact::Controls) || wants(Artifact::Outputs) {
        let mut controls = policies
            .iter()
            .map(|p| policy_control(&params, &grid, p, path0))
            .collect::<Result<Vec<_>>>()?;
        let mut names: Vec<String> = labels.iter().map(|l| format!("u_{l}")).collect();
        controls.push(minimize_control(
            &model,
            &grid,
            &OptimizerConfig::default(),
            &Information::None,
        )?);
        names.push("u_optimized".into());
        if let Some(s) = &schedule {
            let config = OptimizerConfig::default();
            controls.push(
                sequential_update_solve(&model, &grid, s, path0, &InnerSolver::Iterative(config))?
                    .control,
            );
            names.push("u_sequential".into());
        }
        if wants(Artifact::Controls) {
            let header: Vec<String> = std::iter::once("t [time]".to_string())
                .chain(names.iter().map(|n| format!("{n} [demand]")))
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = grid
                .control_times()
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    std::iter::once(num(t))
                        .chain(controls.iter().map(|c| num(c.values()[i])))
                        .collect()
                })
                .collect();
            emit(Artifact::Controls, &header, rows)?;
        }
        if wants(Artifact::Outputs) {
            let outflows = controls
                .iter()
                .map(|c| Ok(upwind_solve(&grid, &zeros, c)?.outflow))
                .collect::<Result<Vec<_>>>()?;
            let header: Vec<String> = ["t [time]".to_string(), "demand_path0 [demand]".to_string()]
                .into_iter()
                .chain(names.iter().map(|n| format!("y{} [demand]", &n[1..])))
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = times
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    [num(t), num(path0.values[k])]
                        .into_iter()
                        .chain(outflows.iter().map(|y| num(y[k])))
                        .collect()
                })
                .collect();
            emit(Artifact::Outputs, &header, rows)?;
        }
    }

    if wants(Artifact::Costs) {
        let mut rows = Vec::new();
        for (label, policy) in labels.iter().zip(&policies) {
            let level = match policy {
                Policy::Periodic(s) => InformationLevel::Periodic(s.interval()),
                Policy::Continuous => InformationLevel::Continuous,
                _ => InformationLevel::NoUpdates,
            };
            let analytic = cumrmse_analytic(&params, &grid, level)?;
            let mc = mc_cost_estimate(&params, &paths, &grid, policy)?;
            rows.push(vec![
                label.to_uppercase(),
                num(analytic),
                num(mc.cum_rmse),
                num(mc.cum_rmse_se),
                num(mc.expected_cost),
                num(mc.expected_cost_se),
                mc.paths.to_string(),
            ]);
        }
        emit(
            Artifact::Costs,
            &[
                "method",
                "cum_rmse_analytic [demand*time]",
                "cum_rmse_mc [demand*time]",
                "cum_rmse_mc_se [demand*time]",
                "expected_cost_mc [demand^2*time]",
                "expected_cost_mc_se [demand^2*time]",
                "paths",
            ],
            rows,
        )?;
    }

    if wants(Artifact::Bands) {
        let bands = confidence_bands(
            &params,
            &times,
            &scenario.band_levels,
            scenario.mc_paths,
            scenario.seed,
        )?;
        let path = out_dir.join(Artifact::Bands.file_name());
        write_bands_csv(&path, &bands)?;
        files.push(path);
    }
    Ok(RunSummary { files })
}
