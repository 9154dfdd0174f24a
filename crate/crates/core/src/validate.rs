//! Self-check suites run from the command line: analytic and
//! dynamic-programming oracles, basis orthonormality, and IS unbiasedness.

use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::estimators::{normal_quantile, run_chunked, Observable};
use crate::hjb::dp::DEFAULT_P_MAX;
use crate::hjb::{dp_value_oracle, solve_hjb_backward, FullDynamics, HjbConfig, SigmoidFinal};
use crate::importance::{crude_mc_estimate, is_mc_estimate, ScaledPolicy, Streams};
use crate::network::{michaelis_menten, ReactionNetwork, TimeGrid};
use crate::projection::{
    classify_reactions, empirical_gram_schmidt, generate_regression_paths, BasisSpec, Projection,
    RegressionData,
};
use crate::rng::StreamTag;
use crate::simulate::ssa_exact_path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Oracles,
    Orthonormality,
    Unbiasedness,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Oracles, Suite::Orthonormality, Suite::Unbiasedness];

    pub fn parse(name: &str) -> Result<Vec<Suite>> {
        match name {
            "oracles" => Ok(vec![Suite::Oracles]),
            "orthonormality" => Ok(vec![Suite::Orthonormality]),
            "unbiasedness" => Ok(vec![Suite::Unbiasedness]),
            "all" => Ok(Suite::ALL.to_vec()),
            other => Err(Error::Config(format!(
                "unknown suite `{other}` (expected oracles, orthonormality, unbiasedness or all)"
            ))),
        }
    }
}

/// Sample sizes; `quick` shrinks every ensemble for smoke runs.
#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub seed: u64,
    pub quick: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn run_suite(suite: Suite, opts: &ValidateOptions) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Oracles => vec![death_oracle(opts)?, dp_hjb_oracle(opts)?],
        Suite::Orthonormality => orthonormality(opts)?,
        Suite::Unbiasedness => vec![unbiasedness(opts)?],
    };
    Ok(SuiteReport { suite, checks })
}

/// `X -> 0` at rate 1 from 20: `X(1) ~ Binomial(20, e^-1)`.
fn death_oracle(opts: &ValidateOptions) -> Result<Check> {
    let net = ReactionNetwork::new(vec!["X".into()], vec![vec![1]], vec![vec![0]], vec![1.0])?;
    let paths = if opts.quick { 10_000 } else { 100_000 };
    let g = Observable::above(0, 10.0);
    let report = run_chunked(paths, 0, normal_quantile(0.05)?, |m, _| {
        let mut rng = crate::rng::RngStream::new(opts.seed, StreamTag::Plain.stream(0, m));
        Ok(g.eval(&ssa_exact_path(&net, &[20], 1.0, &mut rng)?))
    })?;
    let b = Binomial::new((-1.0f64).exp(), 20).map_err(|e| Error::Integrity(e.to_string()))?;
    let exact = b.sf(10);
    let z = (report.mean() - exact).abs() / report.standard_error();
    Ok(Check {
        name: "exact simulation of linear death".into(),
        value: z,
        limit: 3.0,
        passed: z <= 3.0,
        detail: format!("estimate {:.5}, binomial tail {exact:.5}", report.mean()),
    })
}

/// Birth-death chain `0 -> X` (5), `X -> 0` (0.5): the discrete-time
/// recursion against the continuous value function.
pub fn birth_death_network() -> ReactionNetwork {
    ReactionNetwork::new(
        vec!["X".into()],
        vec![vec![0], vec![1]],
        vec![vec![1], vec![0]],
        vec![5.0, 0.5],
    )
    .expect("static network")
}

fn dp_hjb_oracle(opts: &ValidateOptions) -> Result<Check> {
    let net = birth_death_network();
    let s_max = 30;
    let sigmoid = SigmoidFinal::for_threshold(0, 10.0, crate::hjb::DEFAULT_SLOPE);
    let steps = if opts.quick { 64 } else { 1024 };
    let grid = TimeGrid::new(1.0, steps)?;
    let dp = dp_value_oracle(
        &net,
        &Observable::Sigmoid(sigmoid),
        &grid,
        &[s_max],
        DEFAULT_P_MAX,
    )?;
    let hjb = solve_hjb_backward(
        &FullDynamics(&net),
        1.0,
        &sigmoid,
        &HjbConfig::with_s_max(s_max),
    )?;
    let worst = (0..=s_max)
        .map(|x| {
            let a = dp.value(0, &[x]);
            let b = hjb.value(0.0, &[x]);
            (a - b).abs() / a.abs().max(b.abs())
        })
        .fold(0.0, f64::max);
    let limit = if opts.quick { 0.25 } else { 0.05 };
    Ok(Check {
        name: "recursion vs value function".into(),
        value: worst,
        limit,
        passed: worst <= limit,
        detail: format!("{steps} steps, max relative difference at t = 0"),
    })
}

fn orthonormality(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let p = michaelis_menten();
    let grid = TimeGrid::from_step(p.final_time, 1.0 / 16.0)?;
    let paths = if opts.quick { 1_000 } else { 10_000 };
    let ens = generate_regression_paths(&p.network, &p.initial_state, &grid, paths, opts.seed)?;
    let proj = Projection::canonical(p.network.species_count(), &[p.observed_species])?;
    let j_mp = classify_reactions(&p.network, &proj, false)?.j_mp();
    let data = RegressionData::from_paths(&ens, &grid, &proj, &p.network, &j_mp)?;
    let ortho = empirical_gram_schmidt(&data, &BasisSpec::tensor(1, 2))?;
    let gram = ortho.gram_matrix(&data);
    let mut gram_err: f64 = 0.0;
    for (i, row) in gram.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            gram_err = gram_err.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let d = ortho.design_matrix(&data);
    let rows = data.rows() as f64;
    let mut dtd_err: f64 = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            let v: f64 = d[i].iter().zip(&d[j]).map(|(a, b)| a * b).sum();
            let target = if i == j { rows } else { 0.0 };
            dtd_err = dtd_err.max((v - target).abs() / rows);
        }
    }
    Ok(vec![
        Check {
            name: "empirical Gram matrix is the identity".into(),
            value: gram_err,
            limit: 1e-8,
            passed: gram_err <= 1e-8,
            detail: format!("{} basis functions kept of 9", ortho.len()),
        },
        Check {
            name: "normal matrix is (T/dt) M I".into(),
            value: dtd_err,
            limit: 1e-8,
            passed: dtd_err <= 1e-8,
            detail: format!("{rows} sample rows"),
        },
    ])
}

/// `delta = 2a` on the enzyme network with the non-rare event `C(1) > 5`.
fn unbiasedness(opts: &ValidateOptions) -> Result<Check> {
    let p = michaelis_menten();
    let grid = TimeGrid::from_step(p.final_time, 1.0 / 16.0)?;
    let paths = if opts.quick { 10_000 } else { 100_000 };
    let g = Observable::above(p.observed_species, 5.0);
    let c = normal_quantile(0.05)?;
    let policy = ScaledPolicy { factor: 2.0 };
    let is = is_mc_estimate(
        &p.network,
        &p.initial_state,
        &grid,
        &policy,
        &g,
        paths,
        Streams::new(opts.seed, StreamTag::Importance, 0),
        c,
    )?;
    let crude = crude_mc_estimate(
        &p.network,
        &p.initial_state,
        &grid,
        &g,
        paths,
        Streams::new(opts.seed, StreamTag::Crude, 0),
        c,
    )?;
    let se = (is.standard_error().powi(2) + crude.standard_error().powi(2)).sqrt();
    let z = (is.mean() - crude.mean()).abs() / se;
    Ok(Check {
        name: "weighted estimate agrees with plain tau-leap".into(),
        value: z,
        limit: 3.0,
        passed: z <= 3.0,
        detail: format!("IS {:.5}, crude {:.5}", is.mean(), crude.mean()),
    })
}
