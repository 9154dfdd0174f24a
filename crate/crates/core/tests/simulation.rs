use std::sync::Arc;

use mpis::estimators::{plan_tolerance, Observable};
use mpis::hjb::{solve_hjb_backward, HjbConfig, MpMappedPolicy, ValueFunctionGrid};
use mpis::importance::{is_mc_estimate, ControlPolicy, Streams};
use mpis::network::michaelis_menten;
use mpis::projection::{
    fit_mp, generate_regression_paths, BasisSpec, FitOptions, MpModel, Projection,
};
use mpis::simulate::{tau_leap_final, WorkCounters};
use mpis::{poisson, ReactionNetwork, RngStream, StreamTag, TimeGrid};

#[test]
fn poisson_moments_across_regimes() {
    for lambda in [0.3, 4.0, 9.99, 10.0, 250.0] {
        let n = 100_000u64;
        let mut rng = RngStream::new(3, (lambda * 100.0) as u64);
        let xs: Vec<f64> = (0..n)
            .map(|_| poisson::sample(lambda, &mut rng) as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(
            (mean - lambda).abs() < 4.0 * (lambda / n as f64).sqrt(),
            "{lambda}: {mean}"
        );
        assert!((var / lambda - 1.0).abs() < 0.03, "{lambda}: {var}");
    }
}

#[test]
fn tau_leap_death_mean_matches_recursion() {
    // without clamping, E[X_{n+1}] = (1 - dt) E[X_n]; clamping is rare at dt = 1/64
    let net =
        ReactionNetwork::new(vec!["X".into()], vec![vec![1]], vec![vec![0]], vec![1.0]).unwrap();
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let n = 200_000u64;
    let mut w = WorkCounters::default();
    let mean = (0..n)
        .map(|m| {
            let mut rng = RngStream::new(1, StreamTag::Plain.stream(0, m));
            tau_leap_final(&net, &[50], &grid, &mut rng, &mut w)[0] as f64
        })
        .sum::<f64>()
        / n as f64;
    let exact = 50.0 * (1.0 - 1.0 / 64.0f64).powi(64);
    assert!((mean - exact).abs() < 0.05, "{mean} vs {exact}");
}

#[test]
fn tolerance_plan_scales() {
    let a = plan_tolerance(0.1, 0.05, 1.0, 1e-2).unwrap();
    let b = plan_tolerance(0.05, 0.05, 1.0, 1e-2).unwrap();
    assert!((a.dt_star / b.dt_star - 2.0).abs() < 1e-12);
    assert!(b.paths_star >= 4 * a.paths_star - 4);
}

#[test]
fn reloaded_artifacts_give_identical_estimates() {
    let p = michaelis_menten();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let paths = generate_regression_paths(&p.network, &p.initial_state, &grid, 400, 8).unwrap();
    let proj = Projection::canonical(4, &[2]).unwrap();
    let model = fit_mp(
        &paths,
        &grid,
        &BasisSpec::tensor(1, 2),
        &proj,
        &p.network,
        &FitOptions::default(),
    )
    .unwrap();
    let value = solve_hjb_backward(
        &model,
        1.0,
        &mpis::hjb::SigmoidFinal::for_threshold(0, 22.0, 4.0),
        &HjbConfig::with_s_max(44),
    )
    .unwrap();

    let model2 = MpModel::from_text(&model.to_text()).unwrap();
    let value2 = ValueFunctionGrid::from_text(&value.to_text()).unwrap();
    assert_eq!(model.content_hash(), model2.content_hash());
    assert_eq!(value.content_hash(), value2.content_hash());

    let run = |grid_fn: ValueFunctionGrid| {
        let policy = MpMappedPolicy::new(Arc::new(grid_fn), proj.clone(), &p.network).unwrap();
        assert_eq!(policy.kind(), mpis::importance::PolicyKind::MpMapped);
        is_mc_estimate(
            &p.network,
            &p.initial_state,
            &TimeGrid::new(1.0, 32).unwrap(),
            &policy,
            &Observable::above(2, 22.0),
            5000,
            Streams::new(4, StreamTag::Importance, 0),
            1.96,
        )
        .unwrap()
    };
    assert_eq!(run(value).moments, run(value2).moments);
}
