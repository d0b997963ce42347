mod common;

use common::{mean_se, ps1, ps2, ps3, within};
use demand_tracking::control::pathwise_control_gap;
use demand_tracking::costopt::{policy_control, Policy};
use demand_tracking::demand::{exact_step, StepNoise};
use demand_tracking::moments::{conditional_mean, conditional_variance};
use demand_tracking::{
    cm1_control, cm2_control, cumrmse_analytic, deterministic_cost, mc_cost_estimate,
    minimize_control, minimize_control_direct, sample_paths, sequential_update_solve,
    ControlSignal, DemandModel, DemandParams, Grid, Information, InformationLevel, InnerSolver,
    MeanFunction, OptimizerConfig, Plant, StreamSeed, UpdateSchedule,
};
use rand_distr::{Distribution, StandardNormal};

fn grid() -> Grid<f64> {
    Grid::unit_courant(4.0, 0.1, 1.0).unwrap()
}

#[test]
fn cm1_is_the_mean_demand_one_delay_ahead() {
    let p = ps3();
    let u = cm1_control(&p, &Plant::new(4.0, 1.0).unwrap(), 0.5).unwrap();
    let paths = sample_paths(&p, &[0.0, 0.75], StreamSeed::new(30), 100_000).unwrap();
    within(
        "cm1",
        &paths.iter().map(|q| q.values[1]).collect::<Vec<_>>(),
        u,
        3.0,
    );
}

#[test]
fn cm2_matches_restarted_paths() {
    let p = ps1();
    let g = grid();
    let path = &sample_paths(&p, &g.times(), StreamSeed::new(31), 1).unwrap()[0];
    let y_obs = path.value_at_node(0.5).unwrap();
    let u = cm2_control(&p, &Plant::of_grid(&g), 0.6, 0.5, y_obs).unwrap();
    let mut rng = StreamSeed::new(32).substream(0);
    let ys: Vec<f64> = (0..100_000)
        .map(|_| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            exact_step(
                &p,
                0.5,
                y_obs,
                0.35,
                StepNoise {
                    gaussian: xi,
                    jump_times: &[],
                    jump_heights: &[],
                },
            )
            .unwrap()
        })
        .collect();
    within("cm2", &ys, u, 3.0);
}

#[test]
fn pathwise_gap() {
    let g = grid();
    let plant = Plant::of_grid(&g);
    let p = ps3();
    let path = &sample_paths(&p, &g.times(), StreamSeed::new(33), 1).unwrap()[0];
    let s = UpdateSchedule::new(0.125, &g).unwrap();
    for &t in s.times() {
        assert!(pathwise_control_gap(&p, &plant, path, &s, t).unwrap().abs() < 1e-12);
    }

    let quiet = DemandParams::ou(2.0, 0.0, common::sinusoid(), 1.0).unwrap();
    let qpath = &sample_paths(&quiet, &g.times(), StreamSeed::new(1), 1).unwrap()[0];
    let every = UpdateSchedule::every(1, &g);
    for t in g.control_times() {
        assert!(
            pathwise_control_gap(&quiet, &plant, qpath, &every, t)
                .unwrap()
                .abs()
                < 1e-10
        );
    }

    // Nested schedules: the sup-gap shrinks on the canonical path and on
    // average over an ensemble (single paths can break the order).
    let paths = sample_paths(&p, &g.times(), StreamSeed::new(0), 400).unwrap();
    let sup = |path: &demand_tracking::DemandPath<f64>, dt: f64| {
        let s = UpdateSchedule::new(dt, &g).unwrap();
        g.control_times()
            .into_iter()
            .map(|t| pathwise_control_gap(&p, &plant, path, &s, t).unwrap().abs())
            .fold(0.0, f64::max)
    };
    let intervals = [0.2, 0.1, 0.05];
    let gaps: Vec<f64> = intervals.iter().map(|&dt| sup(&paths[0], dt)).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
    let mean: Vec<f64> = intervals
        .iter()
        .map(|&dt| paths.iter().map(|q| sup(q, dt)).sum::<f64>() / paths.len() as f64)
        .collect();
    assert!(mean.windows(2).all(|w| w[1] < w[0]), "{mean:?}");
}

#[test]
fn deterministic_cost_agrees_with_monte_carlo() {
    let p = ps1();
    let g = grid();
    let u = ControlSignal::sample_control_horizon(&g, |t| 1.5 + t).unwrap();
    let exact = deterministic_cost(&p.clone().into(), &g, &u, &Information::None).unwrap();
    let paths = sample_paths(&p, &g.times(), StreamSeed::new(34), 100_000).unwrap();
    let mc = mc_cost_estimate(&p, &paths, &g, &Policy::Fixed(u)).unwrap();
    assert!((mc.expected_cost - exact.expected_cost).abs() < 3.0 * mc.expected_cost_se);
    for ((m, se), e) in mc
        .mean_sq_error
        .iter()
        .zip(&mc.std_error)
        .zip(&exact.per_time)
    {
        assert!((m - e).abs() < 4.0 * se, "{m} vs {e}");
    }
}

#[test]
fn monte_carlo_cumrmse_of_cm1_matches_the_analytic_value() {
    let p = ps1();
    let g = grid();
    let paths = sample_paths(&p, &g.times(), StreamSeed::new(35), 100_000).unwrap();
    let mc = mc_cost_estimate(&p, &paths, &g, &Policy::NoUpdates).unwrap();
    let analytic = cumrmse_analytic(&p, &g, InformationLevel::NoUpdates).unwrap();
    assert!(
        (mc.cum_rmse - analytic).abs() < 3.0 * mc.cum_rmse_se,
        "{} vs {analytic}",
        mc.cum_rmse
    );
    let cm1 = minimize_control_direct(&p.clone().into(), &g, &Information::None).unwrap();
    let report = deterministic_cost(&p.clone().into(), &g, &cm1, &Information::None).unwrap();
    let variance: Vec<f64> = report
        .times
        .iter()
        .map(|&t| conditional_variance(&p, t).unwrap())
        .collect();
    let integral = demand_tracking::costopt::output_trapezoid(&g, &variance);
    assert!((report.expected_cost - integral).abs() <= 1e-8 * integral);
}

#[test]
fn standard_error_follows_the_square_root_law() {
    let p = ps2();
    let g = grid();
    let paths = sample_paths(&p, &g.times(), StreamSeed::new(36), 40_000).unwrap();
    let small = mc_cost_estimate(&p, &paths[..10_000], &g, &Policy::Continuous).unwrap();
    let large = mc_cost_estimate(&p, &paths, &g, &Policy::Continuous).unwrap();
    // four times the paths halves the standard error
    let ratio = small.expected_cost_se / large.expected_cost_se;
    assert!((ratio / 2.0 - 1.0).abs() < 0.25, "ratio {ratio}");
    let half = mc_cost_estimate(&p, &paths[..20_000], &g, &Policy::Continuous).unwrap();
    let ratio = half.expected_cost_se / large.expected_cost_se;
    assert!((ratio / 2.0_f64.sqrt() - 1.0).abs() < 0.25, "ratio {ratio}");
}

#[test]
fn direct_solutions_reduce_to_the_closed_forms() {
    let g = grid();
    let plant = Plant::of_grid(&g);
    let p = ps3();
    let model: DemandModel<f64> = p.clone().into();
    let none = minimize_control_direct(&model, &g, &Information::None).unwrap();
    for (&t, &u) in none.times().iter().zip(none.values()) {
        assert_eq!(u, cm1_control(&p, &plant, t).unwrap());
    }
    let path = &sample_paths(&p, &g.times(), StreamSeed::new(37), 1).unwrap()[0];
    let long = Information::from_path(UpdateSchedule::new(1.0, &g).unwrap(), path).unwrap();
    let with_long = minimize_control_direct(&model, &g, &long).unwrap();
    assert!(with_long.sup_distance(&none).unwrap() < 1e-12);

    let s = UpdateSchedule::new(0.125, &g).unwrap();
    let info = Information::from_path(s.clone(), path).unwrap();
    let direct = minimize_control_direct(&model, &g, &info).unwrap();
    let policy = policy_control(&p, &g, &Policy::Periodic(s), path).unwrap();
    assert!(direct.sup_distance(&policy).unwrap() < 1e-12);
}

#[test]
fn optimizer_is_a_local_minimum() {
    let g = grid();
    for p in [ps1(), ps2(), ps3()] {
        let model: DemandModel<f64> = p.into();
        let u =
            minimize_control(&model, &g, &OptimizerConfig::default(), &Information::None).unwrap();
        let base = deterministic_cost(&model, &g, &u, &Information::None)
            .unwrap()
            .expected_cost;
        let scale = u.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for j in 0..u.len() {
            for h in [1e-4 * scale, -1e-4 * scale] {
                let mut v = u.values().to_vec();
                v[j] += h;
                let bumped = ControlSignal::on_control_horizon(&g, v).unwrap();
                let c = deterministic_cost(&model, &g, &bumped, &Information::None)
                    .unwrap()
                    .expected_cost;
                assert!(c >= base - 1e-12, "node {j}");
            }
        }
    }
}

#[test]
fn stationary_demand_gives_a_flat_control() {
    let g = grid();
    let p = DemandParams::ou(2.0, 0.0, MeanFunction::Constant(4.0), 4.0).unwrap();
    let u = minimize_control(
        &p.into(),
        &g,
        &OptimizerConfig::default(),
        &Information::None,
    )
    .unwrap();
    assert!(u.values().iter().all(|v| (v - 4.0).abs() < 1e-9));
}

#[test]
fn sequential_solve_special_cases() {
    let g = grid();
    let p = ps3();
    let model: DemandModel<f64> = p.clone().into();
    let path = &sample_paths(&p, &g.times(), StreamSeed::new(38), 1).unwrap()[0];
    let solver = InnerSolver::Iterative(OptimizerConfig::default());

    let single = sequential_update_solve(
        &model,
        &g,
        &UpdateSchedule::new(1.0, &g).unwrap(),
        path,
        &solver,
    )
    .unwrap();
    let plain =
        minimize_control(&model, &g, &OptimizerConfig::default(), &Information::None).unwrap();
    assert!(single.control.sup_distance(&plain).unwrap() < 1e-9);

    let quiet = DemandParams::ou(3.0, 0.0, common::sinusoid(), 1.0).unwrap();
    let qpath = &sample_paths(&quiet, &g.times(), StreamSeed::new(2), 1).unwrap()[0];
    let qmodel: DemandModel<f64> = quiet.into();
    let reference =
        sequential_update_solve(&qmodel, &g, &UpdateSchedule::every(30, &g), qpath, &solver)
            .unwrap();
    for stride in [1, 2, 5, 7] {
        let s = sequential_update_solve(
            &qmodel,
            &g,
            &UpdateSchedule::every(stride, &g),
            qpath,
            &solver,
        )
        .unwrap();
        assert!(
            s.control.sup_distance(&reference.control).unwrap() < 1e-9,
            "stride {stride}"
        );
        assert!(s.report.cum_rmse < 1e-8);
    }

    let realised =
        sequential_update_solve(&model, &g, &UpdateSchedule::every(5, &g), path, &solver).unwrap();
    let (m, _) = mean_se(&realised.report.per_time);
    assert!(m.is_finite() && realised.report.cum_rmse >= 0.0);
    assert!(UpdateSchedule::new(0.03, &g).is_err());
    let _ = conditional_mean(&p, 0.0, 1.0, 0.5).unwrap();
}
