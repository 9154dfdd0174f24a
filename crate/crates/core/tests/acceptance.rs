//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use mpis::estimators::{normal_quantile, run_chunked, Observable};
use mpis::hjb::dp::{dp_value_oracle, DEFAULT_P_MAX};
use mpis::hjb::{solve_hjb_backward, FullDynamics, HjbConfig, SigmoidFinal, DEFAULT_SLOPE};
use mpis::importance::{
    crude_mc_estimate, is_mc_estimate, is_tau_leap_path, CrudePolicy, PolicyKind, ScaledPolicy,
    Streams,
};
use mpis::network::{goutsias, michaelis_menten};
use mpis::pipeline::{
    distribution_match_report, run_pipeline, summary_csv, with_threads, PipelineConfig,
};
use mpis::projection::{
    classify_reactions, empirical_gram_schmidt, fit_mp, generate_regression_paths, BasisSpec,
    FitOptions, Projection, RegressionData,
};
use mpis::simulate::{ssa_exact_path, tau_leap_final};
use mpis::{Preset, ReactionNetwork, RngStream, StreamTag, TimeGrid};

const SEED: u64 = 20_240_601;

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// `P(Bin(n, p) > k)` by direct summation.
fn binomial_tail(n: u32, p: f64, k: u32) -> f64 {
    let mut total = 0.0;
    let mut coeff = 1.0f64;
    for i in 0..=n {
        if i > 0 {
            coeff *= (n - i + 1) as f64 / i as f64;
        }
        if i > k {
            total += coeff * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
        }
    }
    total
}

fn bernoulli_kurtosis(p: f64) -> f64 {
    let q = 1.0 - p;
    // E[(Y - p)^4] / var^2 for Y ~ Bernoulli(p)
    (p * q.powi(4) + q * p.powi(4)) / (p * q).powi(2)
}

fn death() -> ReactionNetwork {
    ReactionNetwork::new(vec!["X".into()], vec![vec![1]], vec![vec![0]], vec![1.0]).unwrap()
}

fn c1_analytic_simulation() -> Outcome {
    let net = death();
    let exact = binomial_tail(20, (-1.0f64).exp(), 10);
    let g = Observable::above(0, 10.0);
    let c = normal_quantile(0.05).unwrap();
    let ssa = run_chunked(100_000, 0, c, |m, _| {
        let mut rng = RngStream::new(SEED, StreamTag::Plain.stream(0, m));
        Ok(g.eval(&ssa_exact_path(&net, &[20], 1.0, &mut rng)?))
    })
    .unwrap();
    let z = (ssa.mean() - exact).abs() / ssa.standard_error();
    let mut bias = Vec::new();
    for (slot, steps) in [(1u16, 16usize), (2, 64)] {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let r = run_chunked(1_000_000, 0, c, |m, w| {
            let mut rng = RngStream::new(SEED, StreamTag::Plain.stream(slot, m));
            Ok(g.eval(&tau_leap_final(&net, &[20], &grid, &mut rng, w)))
        })
        .unwrap();
        bias.push(((r.mean() - exact).abs(), r.standard_error()));
    }
    outcome(
        z <= 3.0 && bias[1].0 < bias[0].0,
        format!(
            "SSA |z| = {z:.2} (<= 3); TL |bias| {:.2e} (dt 2^-4) > {:.2e} (dt 2^-6), SE {:.1e}",
            bias[0].0, bias[1].0, bias[0].1
        ),
    )
}

fn c2_likelihood_identity() -> Outcome {
    let p = michaelis_menten();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let all_one = (0..10_000u64).all(|m| {
        let mut rng = RngStream::new(SEED, m);
        is_tau_leap_path(&p.network, &p.initial_state, &grid, &CrudePolicy, &mut rng)
            .unwrap()
            .likelihood
            == 1.0
    });
    let g = Observable::above(2, 5.0);
    let streams = Streams::new(SEED, StreamTag::Crude, 0);
    let is = is_mc_estimate(
        &p.network,
        &p.initial_state,
        &grid,
        &CrudePolicy,
        &g,
        20_000,
        streams,
        1.96,
    )
    .unwrap();
    let plain = crude_mc_estimate(
        &p.network,
        &p.initial_state,
        &grid,
        &g,
        20_000,
        streams,
        1.96,
    )
    .unwrap();
    let identical = is.moments == plain.moments;
    outcome(
        all_one && identical,
        format!("L = 1 on 10^4 paths: {all_one}; bitwise-identical moments: {identical}"),
    )
}

fn c3_unbiasedness() -> Outcome {
    let p = michaelis_menten();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let g = Observable::above(2, 5.0);
    let m = 100_000;
    let policy = ScaledPolicy { factor: 2.0 };
    let is = is_mc_estimate(
        &p.network,
        &p.initial_state,
        &grid,
        &policy,
        &g,
        m,
        Streams::new(SEED, StreamTag::Importance, 0),
        1.96,
    )
    .unwrap();
    let crude = crude_mc_estimate(
        &p.network,
        &p.initial_state,
        &grid,
        &g,
        m,
        Streams::new(SEED, StreamTag::Crude, 0),
        1.96,
    )
    .unwrap();
    let se = (is.standard_error().powi(2) + crude.standard_error().powi(2)).sqrt();
    let z = (is.mean() - crude.mean()).abs() / se;
    outcome(
        z <= 3.0,
        format!(
            "IS {:.5} vs crude {:.5}, |z| = {z:.2} (<= 3)",
            is.mean(),
            crude.mean()
        ),
    )
}

fn c4_orthonormality() -> Outcome {
    let p = michaelis_menten();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let m = 10_000;
    let paths = generate_regression_paths(&p.network, &p.initial_state, &grid, m, SEED).unwrap();
    let proj = Projection::canonical(4, &[2]).unwrap();
    let j_mp = classify_reactions(&p.network, &proj, false).unwrap().j_mp();
    let data = RegressionData::from_paths(&paths, &grid, &proj, &p.network, &j_mp).unwrap();
    let basis = empirical_gram_schmidt(&data, &BasisSpec::tensor(1, 2)).unwrap();
    let k = basis.len();
    let mut mono = vec![0.0; basis.spec.len()];
    let mut phi = vec![0.0; k];
    let mut dtd = vec![vec![0.0; k]; k];
    // rows straight from the paths: t_n and C at t_n, n < N
    for path in &paths {
        for n in 0..grid.steps() {
            basis.eval_into(grid.time(n), &[path.state(n)[2]], &mut mono, &mut phi);
            for i in 0..k {
                for j in 0..k {
                    dtd[i][j] += phi[i] * phi[j];
                }
            }
        }
    }
    let rows = (m as usize * grid.steps()) as f64;
    let (mut gram_err, mut dtd_err) = (0.0f64, 0.0f64);
    for (i, row) in dtd.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let id = if i == j { 1.0 } else { 0.0 };
            gram_err = gram_err.max((v / rows - id).abs());
            dtd_err = dtd_err.max((v - rows * id).abs() / rows);
        }
    }
    outcome(
        k == 9 && gram_err <= 1e-8 && dtd_err <= 1e-8,
        format!("{k} of 9 kept; max |G - I| = {gram_err:.1e}, max |D^T D - NM I| / NM = {dtd_err:.1e} (<= 1e-8)"),
    )
}

fn c5_dp_hjb() -> Outcome {
    let net = ReactionNetwork::new(
        vec!["X".into()],
        vec![vec![0], vec![1]],
        vec![vec![1], vec![0]],
        vec![5.0, 0.5],
    )
    .unwrap();
    let s_max = 30;
    let sig = SigmoidFinal::for_threshold(0, 10.0, DEFAULT_SLOPE);
    let grid = TimeGrid::new(1.0, 1024).unwrap();
    let dp = dp_value_oracle(
        &net,
        &Observable::Sigmoid(sig),
        &grid,
        &[s_max],
        DEFAULT_P_MAX,
    )
    .unwrap();
    let hjb = solve_hjb_backward(
        &FullDynamics(&net),
        1.0,
        &sig,
        &HjbConfig::with_s_max(s_max),
    )
    .unwrap();
    let mut worst = 0.0f64;
    for x in 0..=s_max {
        let (a, b) = (dp.value(0, &[x]), hjb.value(0.0, &[x]));
        worst = worst.max((a - b).abs() / a.max(b));
    }
    outcome(
        worst <= 0.05,
        format!(
            "max relative difference at t = 0 over [0, 30]: {worst:.2e} (<= 5e-2), tail {:.1e}",
            dp.tail_bound
        ),
    )
}

fn tv_for(preset: &Preset) -> f64 {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let paths =
        generate_regression_paths(&preset.network, &preset.initial_state, &grid, 10_000, SEED)
            .unwrap();
    let proj =
        Projection::canonical(preset.network.species_count(), &[preset.observed_species]).unwrap();
    let model = fit_mp(
        &paths,
        &grid,
        &BasisSpec::tensor(1, 2),
        &proj,
        &preset.network,
        &FitOptions::default(),
    )
    .unwrap();
    let d = distribution_match_report(
        &model,
        &preset.network,
        &preset.initial_state,
        &grid,
        10_000,
        SEED,
    )
    .unwrap();
    let (sp, sq): (f64, f64) = d
        .bins
        .iter()
        .fold((0.0, 0.0), |(a, b), (_, p, q)| (a + p, b + q));
    assert!((sp - 1.0).abs() < 1e-9 && (sq - 1.0).abs() < 1e-9);
    0.5 * d.bins.iter().map(|(_, p, q)| (p - q).abs()).sum::<f64>()
}

fn c6_distribution() -> Outcome {
    let mm = tv_for(&michaelis_menten());
    let gt = tv_for(&goutsias());
    outcome(
        mm <= 0.05 && gt <= 0.05,
        format!("TV enzyme {mm:.4}, transcription {gt:.4} (<= 0.05)"),
    )
}

fn forward_config(preset: &Preset, dts: Vec<f64>, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_preset(preset);
    cfg.seed = seed;
    cfg.forward.paths = 100_000;
    cfg.forward.crude_paths = Some(1_000);
    cfg.forward.dts = dts;
    cfg
}

const DT6: f64 = 1.0 / 64.0;

fn c7_c8() -> (Outcome, Outcome) {
    let mm = run_pipeline(&forward_config(&michaelis_menten(), vec![DT6], SEED))
        .unwrap()
        .report;
    let gt = run_pipeline(&forward_config(&goutsias(), vec![DT6], SEED))
        .unwrap()
        .report;
    let (pm, pg) = (mm.rows[0].importance.mean, gt.rows[0].importance.mean);
    let c7 = outcome(
        (1e-6..=1e-4).contains(&pm) && (1e-4..=1e-2).contains(&pg),
        format!("enzyme {pm:.3e} in [1e-6, 1e-4]; transcription {pg:.3e} in [1e-4, 1e-2]"),
    );
    let red = |r: &mpis::pipeline::ComparisonRow| {
        let p = r.importance.mean;
        ((1.0 - p) / p) / (r.importance.variance / (p * p))
    };
    let (rm, rg) = (red(&mm.rows[0]), red(&gt.rows[0]));
    let c8 = outcome(
        rm >= 1e2 && rg >= 50.0,
        format!("squared-CV reduction enzyme {rm:.3e} (>= 1e2), transcription {rg:.1} (>= 50)"),
    );
    (c7, c8)
}

fn c9_kurtosis() -> Outcome {
    let dts: Vec<f64> = (3..=7).map(|k| 0.5f64.powi(k)).collect();
    let mm = run_pipeline(&forward_config(&michaelis_menten(), dts.clone(), SEED))
        .unwrap()
        .report;
    let mm_ok = mm.rows.iter().all(|r| {
        r.importance.kurtosis_defined
            && r.importance.kurtosis < bernoulli_kurtosis(r.importance.mean)
    });
    let mut mean_k = vec![0.0; dts.len()];
    for s in 0..3 {
        let rep = run_pipeline(&forward_config(&goutsias(), dts.clone(), SEED + s))
            .unwrap()
            .report;
        for (acc, r) in mean_k.iter_mut().zip(&rep.rows) {
            *acc += r.importance.kurtosis / 3.0;
        }
    }
    // Kendall tau between step size and kurtosis
    let mut concordant = 0i32;
    for i in 0..dts.len() {
        for j in i + 1..dts.len() {
            concordant += if (mean_k[i] - mean_k[j]) * (dts[i] - dts[j]) > 0.0 {
                1
            } else {
                -1
            };
        }
    }
    let tau = concordant as f64 / 10.0;
    let gt_ok = mean_k[dts.len() - 1] < mean_k[0] && tau > 0.0;
    let fmt: Vec<String> = mean_k.iter().map(|k| format!("{k:.3e}")).collect();
    outcome(
        mm_ok && gt_ok,
        format!(
            "enzyme below proxy at dt 2^-3..2^-7: {mm_ok}; transcription mean kurtosis over 3 seeds [{}], Kendall tau {tau:.1}",
            fmt.join(", ")
        ),
    )
}

fn c10_reproducibility() -> Outcome {
    let mut same = true;
    let mut n = 0;
    for preset in [michaelis_menten(), goutsias()] {
        for policy in [PolicyKind::MpMapped, PolicyKind::MpAlternative] {
            let mut cfg = forward_config(&preset, vec![1.0 / 16.0, DT6], SEED);
            cfg.policy = policy;
            cfg.forward.paths = 20_000;
            let a = with_threads(Some(1), || run_pipeline(&cfg))
                .unwrap()
                .unwrap();
            let b = with_threads(Some(8), || run_pipeline(&cfg))
                .unwrap()
                .unwrap();
            same &= summary_csv(&a.report).unwrap() == summary_csv(&b.report).unwrap();
            n += 1;
        }
    }
    outcome(
        same,
        format!("{n} pipeline runs, summary CSV identical at 1 and 8 threads: {same}"),
    )
}

fn line(id: u32, name: &str, o: &Outcome, secs: f64) {
    let tag = if o.passed { "PASS" } else { "FAIL" };
    println!("[{tag}] {id:>2} {name}: {} ({secs:.1}s)", o.detail);
}

fn main() -> ExitCode {
    let checks: [Criterion; 6] = [
        (1, "analytic-oracle simulation", c1_analytic_simulation),
        (2, "likelihood identity", c2_likelihood_identity),
        (3, "IS unbiasedness", c3_unbiasedness),
        (4, "orthonormality identities", c4_orthonormality),
        (5, "DP/HJB oracle equivalence", c5_dp_hjb),
        (6, "surrogate distribution fidelity", c6_distribution),
    ];
    let mut failed = 0;
    for (id, name, f) in checks {
        let t = Instant::now();
        let o = f();
        line(id, name, &o, t.elapsed().as_secs_f64());
        failed += usize::from(!o.passed);
    }
    // 7 and 8 share their pipeline runs
    let t = Instant::now();
    let (c7, c8) = c7_c8();
    let secs = t.elapsed().as_secs_f64();
    for (id, name, o) in [
        (7, "rare-event magnitude", c7),
        (8, "variance reduction", c8),
    ] {
        line(id, name, &o, secs);
        failed += usize::from(!o.passed);
    }
    let late: [Criterion; 2] = [
        (9, "kurtosis sanity", c9_kurtosis),
        (10, "reproducibility", c10_reproducibility),
    ];
    for (id, name, f) in late {
        let t = Instant::now();
        let o = f();
        line(id, name, &o, t.elapsed().as_secs_f64());
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
