//! Importance-sampled tau-leap paths.
//!
//! The measure change replaces the Poisson rate `a_j(x) dt` of every
//! reaction by `delta_j(t_n, x) dt`. The path weight is the product of the
//! stepwise likelihood ratios, accumulated as a running log-sum and
//! exponentiated once at the end of the path.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{config_key, run_chunked, EstimatorReport, Observable};
use crate::network::{ReactionNetwork, TimeGrid};
use crate::rng::{RngStream, StreamTag};
use crate::simulate::{leap, tau_leap_final, WorkCounters};

/// Default lower bound on controls of reactions that can fire.
pub const DEFAULT_DELTA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Crude,
    Scaled,
    HjbFull,
    MpMapped,
    MpAlternative,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Crude => "crude",
            PolicyKind::Scaled => "scaled",
            PolicyKind::HjbFull => "hjb-full",
            PolicyKind::MpMapped => "mp-mapped",
            PolicyKind::MpAlternative => "mp-alternative",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crude" => Ok(PolicyKind::Crude),
            "scaled" => Ok(PolicyKind::Scaled),
            "hjb-full" => Ok(PolicyKind::HjbFull),
            "mp-mapped" => Ok(PolicyKind::MpMapped),
            "mp-alternative" => Ok(PolicyKind::MpAlternative),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

/// Maps `(t, x)` to per-reaction IS rates. Implementations are read-only
/// after construction and shared across concurrent paths.
pub trait ControlPolicy: Send + Sync {
    fn kind(&self) -> PolicyKind;

    /// Writes unconstrained controls into `out`; `a` holds the propensities
    /// at `x`. Admissibility is enforced afterwards by [`admissible_controls`].
    fn raw_controls(&self, t: f64, x: &[i64], a: &[f64], out: &mut [f64]);

    /// Lower bound applied to controls of reactions with positive propensity.
    fn delta_floor(&self) -> f64 {
        DEFAULT_DELTA_FLOOR
    }
}

/// Controls projected onto the admissible set: zero exactly where the
/// propensity vanishes, at least the policy floor elsewhere.
#[inline]
pub fn admissible_controls(
    policy: &dyn ControlPolicy,
    t: f64,
    x: &[i64],
    a: &[f64],
    out: &mut [f64],
) {
    policy.raw_controls(t, x, a, out);
    let floor = policy.delta_floor();
    for (d, &aj) in out.iter_mut().zip(a) {
        if aj == 0.0 {
            *d = 0.0;
        } else if !(*d >= floor) || *d == 0.0 {
            // NaN lands here as well
            *d = if floor > 0.0 { floor } else { aj };
        }
    }
}

/// `delta = a`: the original measure.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrudePolicy;

impl ControlPolicy for CrudePolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Crude
    }

    fn raw_controls(&self, _t: f64, _x: &[i64], a: &[f64], out: &mut [f64]) {
        out.copy_from_slice(a);
    }

    fn delta_floor(&self) -> f64 {
        0.0
    }
}

/// `delta = factor * a`, a bounded but deliberately suboptimal tilt.
#[derive(Debug, Clone, Copy)]
pub struct ScaledPolicy {
    pub factor: f64,
}

impl ControlPolicy for ScaledPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Scaled
    }

    fn raw_controls(&self, _t: f64, _x: &[i64], a: &[f64], out: &mut [f64]) {
        for (o, &aj) in out.iter_mut().zip(a) {
            *o = self.factor * aj;
        }
    }
}

/// Log of the stepwise likelihood ratio
/// `exp(-sum_j (a_j - delta_j) dt) * prod_j (a_j / delta_j)^p_j`,
/// with `0/0 = 1`.
#[inline]
pub fn log_likelihood_step(a: &[f64], delta: &[f64], fired: &[u64], dt: f64) -> Result<f64> {
    let mut log_l = 0.0;
    for (j, ((&aj, &dj), &pj)) in a.iter().zip(delta).zip(fired).enumerate() {
        if aj == 0.0 {
            if dj != 0.0 || pj != 0 {
                return Err(Error::Integrity(format!(
                    "reaction {j} has zero propensity but control {dj} and {pj} firings"
                )));
            }
            continue;
        }
        if !(dj > 0.0) {
            return Err(Error::InadmissibleControl {
                reaction: j,
                propensity: aj,
                control: dj,
            });
        }
        log_l -= (aj - dj) * dt;
        if pj > 0 && aj != dj {
            log_l += pj as f64 * (aj / dj).ln();
        }
    }
    Ok(log_l)
}

pub fn likelihood_step(a: &[f64], delta: &[f64], fired: &[u64], dt: f64) -> Result<f64> {
    log_likelihood_step(a, delta, fired, dt).map(f64::exp)
}

/// Final state of an IS path and its likelihood ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub final_state: Vec<i64>,
    pub likelihood: f64,
    pub log_likelihood: f64,
}

pub fn is_tau_leap_path(
    net: &ReactionNetwork,
    x0: &[i64],
    grid: &TimeGrid,
    policy: &dyn ControlPolicy,
    rng: &mut RngStream,
) -> Result<WeightedSample> {
    let mut work = WorkCounters::default();
    is_tau_leap_path_counted(net, x0, grid, policy, rng, &mut work)
}

pub fn is_tau_leap_path_counted(
    net: &ReactionNetwork,
    x0: &[i64],
    grid: &TimeGrid,
    policy: &dyn ControlPolicy,
    rng: &mut RngStream,
    work: &mut WorkCounters,
) -> Result<WeightedSample> {
    let jn = net.reaction_count();
    let dt = grid.dt();
    let mut x = x0.to_vec();
    let mut a = vec![0.0; jn];
    let mut delta = vec![0.0; jn];
    let mut fired = vec![0u64; jn];
    let mut log_l = 0.0;
    for n in 0..grid.steps() {
        let t = grid.time(n);
        net.propensities_into(&x, &mut a);
        work.propensity_evals += 1;
        admissible_controls(policy, t, &x, &a, &mut delta);
        leap(net, &delta, dt, &mut x, rng, work, &mut fired);
        log_l += log_likelihood_step(&a, &delta, &fired, dt)?;
        work.likelihood_updates += 1;
    }
    let likelihood = log_l.exp();
    Ok(WeightedSample {
        final_state: x,
        likelihood,
        log_likelihood: log_l,
    })
}

/// Seed and stream namespace of an ensemble; path `m` uses substream
/// `tag.stream(slot, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    pub seed: u64,
    pub tag: StreamTag,
    pub slot: u16,
}

impl Streams {
    pub fn new(seed: u64, tag: StreamTag, slot: u16) -> Self {
        Self { seed, tag, slot }
    }

    pub fn rng(&self, path: u64) -> RngStream {
        RngStream::new(self.seed, self.tag.stream(self.slot, path))
    }
}

/// Key tying a report to its observable and step size.
pub fn estimate_key(g: &Observable, grid: &TimeGrid) -> u64 {
    config_key(&[
        &g.describe(),
        &format!("T={} N={}", grid.final_time(), grid.steps()),
    ])
}

/// IS Monte Carlo estimate over samples `L_m * g(X_N,m)`.
#[allow(clippy::too_many_arguments)]
pub fn is_mc_estimate(
    net: &ReactionNetwork,
    x0: &[i64],
    grid: &TimeGrid,
    policy: &dyn ControlPolicy,
    g: &Observable,
    paths: u64,
    streams: Streams,
    c_alpha: f64,
) -> Result<EstimatorReport> {
    if paths < 2 {
        return Err(Error::InvalidArgument(
            "at least two paths are needed for an estimate".into(),
        ));
    }
    net.check_state(x0)?;
    run_chunked(paths, estimate_key(g, grid), c_alpha, |m, work| {
        let mut rng = streams.rng(m);
        let s = is_tau_leap_path_counted(net, x0, grid, policy, &mut rng, work)?;
        Ok(s.likelihood * g.eval(&s.final_state))
    })
}

/// Plain tau-leap Monte Carlo estimate on the same stream layout.
pub fn crude_mc_estimate(
    net: &ReactionNetwork,
    x0: &[i64],
    grid: &TimeGrid,
    g: &Observable,
    paths: u64,
    streams: Streams,
    c_alpha: f64,
) -> Result<EstimatorReport> {
    if paths < 2 {
        return Err(Error::InvalidArgument(
            "at least two paths are needed for an estimate".into(),
        ));
    }
    net.check_state(x0)?;
    run_chunked(paths, estimate_key(g, grid), c_alpha, |m, work| {
        let mut rng = streams.rng(m);
        let x = tau_leap_final(net, x0, grid, &mut rng, work);
        Ok(g.eval(&x))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::michaelis_menten;

    #[test]
    fn likelihood_identity_when_unchanged() {
        let a = [2.0, 0.5, 0.0];
        let l = likelihood_step(&a, &a, &[3, 1, 0], 0.25).unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn zero_over_zero_convention() {
        assert_eq!(likelihood_step(&[0.0], &[0.0], &[0], 0.7).unwrap(), 1.0);
    }

    #[test]
    fn hand_evaluated_step() {
        // exp(-(2 - 4) * 0.5) * (2 / 4)^1 = e / 2
        let l = likelihood_step(&[2.0], &[4.0], &[1], 0.5).unwrap();
        assert!((l - 1.359140914229522).abs() < 1e-12);
    }

    #[test]
    fn inadmissible_control_is_rejected() {
        assert!(matches!(
            likelihood_step(&[1.0], &[0.0], &[0], 0.1),
            Err(Error::InadmissibleControl { reaction: 0, .. })
        ));
    }

    #[test]
    fn admissibility_projection() {
        let p = ScaledPolicy { factor: 0.0 };
        let mut out = [0.0; 2];
        admissible_controls(&p, 0.0, &[0], &[0.0, 3.0], &mut out);
        assert_eq!(out, [0.0, DEFAULT_DELTA_FLOOR]);
    }

    #[test]
    fn crude_policy_reproduces_plain_tau_leap() {
        let p = michaelis_menten();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        for m in 0..50 {
            let s = is_tau_leap_path(
                &p.network,
                &p.initial_state,
                &grid,
                &CrudePolicy,
                &mut RngStream::new(12, m),
            )
            .unwrap();
            let mut w = WorkCounters::default();
            let x = tau_leap_final(
                &p.network,
                &p.initial_state,
                &grid,
                &mut RngStream::new(12, m),
                &mut w,
            );
            assert_eq!(s.final_state, x);
            assert_eq!(s.likelihood, 1.0);
        }
    }

    #[test]
    fn log_space_survives_long_paths() {
        // factors of 1e3 or 1e-3 per step over 2^16 steps
        let mut log_l = 0.0;
        for n in 0..(1u32 << 16) {
            let (a, d) = if n % 2 == 0 { (1e3, 1.0) } else { (1.0, 1e3) };
            log_l += log_likelihood_step(&[a], &[d], &[1], 0.0).unwrap();
        }
        assert!(log_l.abs() < 1e-6);
        assert!(log_l.exp().is_finite() && log_l.exp() > 0.0);
    }
}
