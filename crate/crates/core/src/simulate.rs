//! Forward path simulation: explicit tau-leap and the exact SSA.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ReactionNetwork, State, TimeGrid};
use crate::poisson;
use crate::rng::RngStream;

/// Default cap on SSA events per path.
pub const DEFAULT_SSA_EVENT_CAP: u64 = 100_000_000;

/// Operation counters accumulated by simulators and estimators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounters {
    pub poisson_draws: u64,
    pub propensity_evals: u64,
    pub likelihood_updates: u64,
}

impl WorkCounters {
    pub fn add(&mut self, other: &WorkCounters) {
        self.poisson_draws += other.poisson_draws;
        self.propensity_evals += other.propensity_evals;
        self.likelihood_updates += other.likelihood_updates;
    }
}

/// A materialized path: `N + 1` states of `d` species, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    species: usize,
    data: Vec<i64>,
}

impl Path {
    pub fn with_capacity(species: usize, rows: usize) -> Self {
        Self {
            species,
            data: Vec::with_capacity(species * rows),
        }
    }

    pub fn push(&mut self, x: &[i64]) {
        debug_assert_eq!(x.len(), self.species);
        self.data.extend_from_slice(x);
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.species
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, n: usize) -> &[i64] {
        &self.data[n * self.species..(n + 1) * self.species]
    }

    pub fn last(&self) -> &[i64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[i64]> {
        self.data.chunks_exact(self.species)
    }

    pub fn to_states(&self) -> Vec<State> {
        self.states()
            .map(|s| State::new(s.to_vec()).expect("paths stay nonnegative"))
            .collect()
    }
}

/// One tau-leap step from `x` with frozen propensities `a`.
/// Returns after applying `max(0, .)` entrywise.
#[inline]
pub(crate) fn leap(
    net: &ReactionNetwork,
    rates: &[f64],
    dt: f64,
    x: &mut [i64],
    rng: &mut RngStream,
    counters: &mut WorkCounters,
    fired: &mut [u64],
) {
    for (j, (&r, f)) in rates.iter().zip(fired.iter_mut()).enumerate() {
        *f = if r > 0.0 {
            counters.poisson_draws += 1;
            poisson::sample(r * dt, rng)
        } else {
            0
        };
        if *f > 0 {
            net.fire(j, *f as i64, x);
        }
    }
    for v in x.iter_mut() {
        if *v < 0 {
            *v = 0;
        }
    }
}

/// Runs a tau-leap path and hands each state (including `x0`) to `visit`.
pub fn tau_leap_streaming<F>(
    net: &ReactionNetwork,
    x0: &[i64],
    grid: &TimeGrid,
    rng: &mut RngStream,
    counters: &mut WorkCounters,
    mut visit: F,
) where
    F: FnMut(usize, &[i64]),
{
    let dt = grid.dt();
    let mut x = x0.to_vec();
    let mut a = vec![0.0; net.reaction_count()];
    let mut fired = vec![0u64; net.reaction_count()];
    visit(0, &x);
    for n in 1..=grid.steps() {
        net.propensities_into(&x, &mut a);
        counters.propensity_evals += 1;
        leap(net, &a, dt, &mut x, rng, counters, &mut fired);
        visit(n, &x);
    }
}

/// Full tau-leap path of `N + 1` states.
pub fn tau_leap_path(
    net: &ReactionNetwork,
    x0: &State,
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Path {
    let mut counters = WorkCounters::default();
    tau_leap_path_counted(net, x0, grid, rng, &mut counters)
}

pub fn tau_leap_path_counted(
    net: &ReactionNetwork,
    x0: &[i64],
    grid: &TimeGrid,
    rng: &mut RngStream,
    counters: &mut WorkCounters,
) -> Path {
    let mut path = Path::with_capacity(net.species_count(), grid.steps() + 1);
    tau_leap_streaming(net, x0, grid, rng, counters, |_, x| path.push(x));
    path
}

/// Final tau-leap state only.
pub fn tau_leap_final(
    net: &ReactionNetwork,
    x0: &[i64],
    grid: &TimeGrid,
    rng: &mut RngStream,
    counters: &mut WorkCounters,
) -> Vec<i64> {
    let mut last = Vec::new();
    tau_leap_streaming(net, x0, grid, rng, counters, |n, x| {
        if n == grid.steps() {
            last = x.to_vec();
        }
    });
    last
}

/// Exact (Gillespie direct method) simulation up to `final_time`.
pub fn ssa_exact_path(
    net: &ReactionNetwork,
    x0: &[i64],
    final_time: f64,
    rng: &mut RngStream,
) -> Result<Vec<i64>> {
    ssa_exact_path_capped(net, x0, final_time, rng, DEFAULT_SSA_EVENT_CAP)
}

pub fn ssa_exact_path_capped(
    net: &ReactionNetwork,
    x0: &[i64],
    final_time: f64,
    rng: &mut RngStream,
    event_cap: u64,
) -> Result<Vec<i64>> {
    net.check_state(x0)?;
    let mut x = x0.to_vec();
    let mut a = vec![0.0; net.reaction_count()];
    let mut t = 0.0;
    let mut events = 0u64;
    loop {
        net.propensities_into(&x, &mut a);
        let total: f64 = a.iter().sum();
        if total <= 0.0 {
            return Ok(x);
        }
        if !total.is_finite() {
            return Err(Error::Integrity(format!(
                "total propensity is not finite at t = {t}"
            )));
        }
        t += rng.exponential(total);
        if t > final_time {
            return Ok(x);
        }
        if events >= event_cap {
            return Err(Error::StepCapExceeded {
                cap: event_cap,
                time: t,
            });
        }
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        let mut chosen = a.len() - 1;
        for (j, &aj) in a.iter().enumerate() {
            acc += aj;
            if target < acc {
                chosen = j;
                break;
            }
        }
        // guard against rounding landing on a zero-propensity tail entry
        while a[chosen] <= 0.0 {
            chosen -= 1;
        }
        net.fire(chosen, 1, &mut x);
        events += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn birth(theta: f64) -> ReactionNetwork {
        ReactionNetwork::new(vec!["X".into()], vec![vec![0]], vec![vec![1]], vec![theta]).unwrap()
    }

    fn death(theta: f64) -> ReactionNetwork {
        ReactionNetwork::new(vec!["X".into()], vec![vec![1]], vec![vec![0]], vec![theta]).unwrap()
    }

    #[test]
    fn zero_propensities_give_constant_path() {
        let net = death(1.0);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let path = tau_leap_path(
            &net,
            &State::new(vec![0]).unwrap(),
            &grid,
            &mut RngStream::new(1, 0),
        );
        assert_eq!(path.len(), 9);
        assert!(path.states().all(|s| s == [0]));
        let x = ssa_exact_path(&net, &[0], 1.0, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(x, vec![0]);
    }

    #[test]
    fn states_never_negative() {
        // huge death rate makes the raw leap overshoot
        let net = death(50.0);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        for m in 0..200 {
            let path = tau_leap_path(
                &net,
                &State::new(vec![3]).unwrap(),
                &grid,
                &mut RngStream::new(2, m),
            );
            assert!(path.states().all(|s| s[0] >= 0));
        }
    }

    #[test]
    fn paths_are_deterministic() {
        let p = crate::network::michaelis_menten();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let a = tau_leap_path(
            &p.network,
            &p.initial_state,
            &grid,
            &mut RngStream::new(9, 4),
        );
        let b = tau_leap_path(
            &p.network,
            &p.initial_state,
            &grid,
            &mut RngStream::new(9, 4),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn pure_birth_final_state_is_poisson_for_any_step() {
        let lambda = 3.0;
        let net = birth(lambda);
        let n = 40_000u64;
        for steps in [1usize, 7, 64] {
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let mut c = WorkCounters::default();
            let xs: Vec<f64> = (0..n)
                .map(|m| {
                    tau_leap_final(&net, &[0], &grid, &mut RngStream::new(3, m), &mut c)[0] as f64
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (lambda / n as f64).sqrt();
            assert!(
                (mean - lambda).abs() < 4.0 * se,
                "steps={steps} mean={mean}"
            );
            assert!(
                (var - lambda).abs() < 0.1 * lambda,
                "steps={steps} var={var}"
            );
            assert_eq!(c.poisson_draws, n * steps as u64);
        }
    }

    #[test]
    fn ssa_pure_birth_mean() {
        let net = birth(5.0);
        let n = 20_000u64;
        let mean = (0..n)
            .map(|m| ssa_exact_path(&net, &[0], 1.0, &mut RngStream::new(4, m)).unwrap()[0] as f64)
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - 5.0).abs() < 3.0 * (5.0 / n as f64).sqrt() + 1e-12,
            "mean={mean}"
        );
    }

    #[test]
    fn ssa_event_cap_triggers() {
        let net = birth(1e6);
        let err = ssa_exact_path_capped(&net, &[0], 1.0, &mut RngStream::new(1, 0), 1000);
        assert!(matches!(err, Err(Error::StepCapExceeded { cap: 1000, .. })));
    }
}
