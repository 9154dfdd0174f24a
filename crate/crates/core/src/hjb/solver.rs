use serde::{Deserialize, Serialize};

use super::grid::{Lattice, ValueFunctionGrid};
use super::ode::{integrate, OdeOptions, OdeStats};
use super::sigmoid::SigmoidFinal;
use crate::error::{Error, Result};
use crate::network::ReactionNetwork;

/// Default positivity floor of stored values.
pub const DEFAULT_U_FLOOR: f64 = 1e-30;

/// Jump process on a box lattice: jumps `nu_bar_j` and rates `a_j(t, s)`.
pub trait LatticeDynamics: Sync {
    fn dims(&self) -> usize;
    fn reaction_count(&self) -> usize;
    fn jump(&self, j: usize) -> &[i64];
    fn rates_into(&self, t: f64, s: &[i64], out: &mut [f64]);
    /// Rates independent of `t`, evaluated once per lattice state.
    fn time_homogeneous(&self) -> bool {
        false
    }
}

/// The full network on its own state space.
#[derive(Debug, Clone, Copy)]
pub struct FullDynamics<'a>(pub &'a ReactionNetwork);

impl LatticeDynamics for FullDynamics<'_> {
    fn dims(&self) -> usize {
        self.0.species_count()
    }

    fn reaction_count(&self) -> usize {
        self.0.reaction_count()
    }

    fn jump(&self, j: usize) -> &[i64] {
        self.0.stoichiometry(j)
    }

    fn rates_into(&self, _t: f64, s: &[i64], out: &mut [f64]) {
        self.0.propensities_into(s, out)
    }

    fn time_homogeneous(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HjbConfig {
    /// Upper truncation bound of every lattice coordinate.
    pub s_max: i64,
    pub u_floor: f64,
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    /// Largest solver step; `None` means `T / 1024`.
    pub max_step: Option<f64>,
}

impl Default for HjbConfig {
    fn default() -> Self {
        Self {
            s_max: 0,
            u_floor: DEFAULT_U_FLOOR,
            ode_rel_tol: 1e-6,
            ode_abs_tol: 1e-9,
            max_step: None,
        }
    }
}

impl HjbConfig {
    pub fn with_s_max(s_max: i64) -> Self {
        Self {
            s_max,
            ..Self::default()
        }
    }

    fn validate(&self, sigmoid: &SigmoidFinal) -> Result<()> {
        if !(self.u_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "u_floor must be positive, got {}",
                self.u_floor
            )));
        }
        if !(self.ode_rel_tol > 0.0 && self.ode_abs_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "ODE tolerances must be positive".into(),
            ));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "max_step must be positive, got {h}"
                )));
            }
        }
        if sigmoid.slope > 0.0 {
            let midpoint = -sigmoid.offset / sigmoid.slope;
            if (self.s_max as f64) < midpoint + 0.5 {
                return Err(Error::InvalidArgument(format!(
                    "s_max = {} does not cover the observable threshold (sigmoid midpoint {midpoint})",
                    self.s_max
                )));
            }
        }
        Ok(())
    }
}

/// Precomputed neighbour table and rates of a dynamics on a lattice.
pub struct HjbSystem<'a> {
    dynamics: &'a dyn LatticeDynamics,
    lattice: Lattice,
    states: Vec<i64>,
    neighbours: Vec<usize>,
    cached_rates: Option<Vec<f64>>,
}

impl<'a> HjbSystem<'a> {
    pub fn new(dynamics: &'a dyn LatticeDynamics, lattice: Lattice) -> Result<Self> {
        let d = dynamics.dims();
        if lattice.dims() != d {
            return Err(Error::InvalidArgument(format!(
                "lattice has {} coordinates, dynamics {d}",
                lattice.dims()
            )));
        }
        let jn = dynamics.reaction_count();
        let mut states = Vec::with_capacity(lattice.len() * d);
        let mut neighbours = Vec::with_capacity(lattice.len() * jn);
        for s in lattice.states() {
            for j in 0..jn {
                let nu = dynamics.jump(j);
                neighbours.push(lattice.index_shifted(&s, nu));
            }
            states.extend_from_slice(&s);
        }
        let mut sys = Self {
            dynamics,
            lattice,
            states,
            neighbours,
            cached_rates: None,
        };
        if dynamics.time_homogeneous() {
            let mut rates = vec![0.0; sys.lattice.len() * jn];
            sys.fill_rates(0.0, &mut rates);
            sys.cached_rates = Some(rates);
        }
        Ok(sys)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn fill_rates(&self, t: f64, rates: &mut [f64]) {
        let d = self.lattice.dims();
        let jn = self.dynamics.reaction_count();
        for i in 0..self.lattice.len() {
            self.dynamics.rates_into(
                t,
                &self.states[i * d..(i + 1) * d],
                &mut rates[i * jn..(i + 1) * jn],
            );
        }
    }

    /// `du/dt` at time `t`; `scratch` holds per-state rates when they depend on time.
    pub fn rhs(&self, t: f64, u: &[f64], du: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
        let jn = self.dynamics.reaction_count();
        let rates: &[f64] = match &self.cached_rates {
            Some(r) => r,
            None => {
                scratch.resize(self.lattice.len() * jn, 0.0);
                self.fill_rates(t, scratch);
                scratch
            }
        };
        for (i, out) in du.iter_mut().enumerate() {
            let ui = u[i];
            if !(ui >= 0.0) {
                return Err(Error::Integrity(format!(
                    "value function {ui} at lattice state {:?}",
                    self.lattice.state(i)
                )));
            }
            let mut acc = 0.0;
            for j in 0..jn {
                let a = rates[i * jn + j];
                if a == 0.0 {
                    continue;
                }
                let nb = self.neighbours[i * jn + j];
                if nb == i {
                    continue;
                }
                let un = u[nb];
                if !(un >= 0.0) {
                    return Err(Error::Integrity(format!(
                        "value function {un} at lattice state {:?}",
                        self.lattice.state(nb)
                    )));
                }
                acc += a * ((ui * un).sqrt() - ui);
            }
            *out = -2.0 * acc;
        }
        Ok(())
    }
}

/// Right-hand side of the simplified HJB system at time `t`.
pub fn hjb_rhs(
    dynamics: &dyn LatticeDynamics,
    lattice: &Lattice,
    t: f64,
    values: &[f64],
) -> Result<Vec<f64>> {
    let sys = HjbSystem::new(dynamics, lattice.clone())?;
    let mut du = vec![0.0; lattice.len()];
    sys.rhs(t, values, &mut du, &mut Vec::new())?;
    Ok(du)
}

/// Integrates the HJB system from `final_time` down to 0 on `[0, s_max]^d`.
pub fn solve_hjb_backward(
    dynamics: &dyn LatticeDynamics,
    final_time: f64,
    sigmoid: &SigmoidFinal,
    cfg: &HjbConfig,
) -> Result<ValueFunctionGrid> {
    solve_hjb_backward_with_stats(dynamics, final_time, sigmoid, cfg).map(|(g, _)| g)
}

pub fn solve_hjb_backward_with_stats(
    dynamics: &dyn LatticeDynamics,
    final_time: f64,
    sigmoid: &SigmoidFinal,
    cfg: &HjbConfig,
) -> Result<(ValueFunctionGrid, OdeStats)> {
    if !(final_time > 0.0 && final_time.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "final time must be positive, got {final_time}"
        )));
    }
    cfg.validate(sigmoid)?;
    if sigmoid.species >= dynamics.dims() {
        return Err(Error::InvalidArgument(format!(
            "observed coordinate {} outside the {}-dimensional lattice",
            sigmoid.species,
            dynamics.dims()
        )));
    }
    let lattice = Lattice::new(vec![cfg.s_max; dynamics.dims()])?;
    let sys = HjbSystem::new(dynamics, lattice)?;
    let lattice = sys.lattice().clone();
    let floor = cfg.u_floor;
    let terminal: Vec<f64> = lattice
        .states()
        .map(|s| {
            let g = sigmoid.eval(&s);
            (g * g).max(floor)
        })
        .collect();

    let opts = OdeOptions {
        rel_tol: cfg.ode_rel_tol,
        abs_tol: cfg.ode_abs_tol,
        max_step: cfg.max_step.unwrap_or(final_time / 1024.0),
        initial_step: None,
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut scratch = Vec::new();
    let stats = integrate(
        |tau, y, dy| {
            // reversed time: d/dtau = -d/dt
            sys.rhs(final_time - tau, y, dy, &mut scratch)?;
            for v in dy.iter_mut() {
                *v = -*v;
            }
            Ok(())
        },
        &terminal,
        final_time,
        &opts,
        |y| {
            for v in y.iter_mut() {
                if !(*v >= floor) {
                    *v = floor;
                }
            }
        },
        |tau, y| {
            times.push(final_time - tau);
            values.extend_from_slice(y);
        },
    )
    .map_err(|e| match e {
        Error::StepSizeCollapse { step, time } => Error::StepSizeCollapse {
            step,
            time: final_time - time,
        },
        other => other,
    })?;
    let grid = ValueFunctionGrid::new(lattice, times, values, floor)?;
    Ok((grid, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(reactants: Vec<Vec<u32>>, products: Vec<Vec<u32>>, theta: Vec<f64>) -> ReactionNetwork {
        let d = reactants[0].len();
        let names = (0..d).map(|i| format!("X{i}")).collect();
        ReactionNetwork::new(names, reactants, products, theta).unwrap()
    }

    #[test]
    fn hand_evaluated_rhs() {
        // birth at rate 1 from state 0 to state 1
        let n = net(vec![vec![0]], vec![vec![1]], vec![1.0]);
        let lattice = Lattice::new(vec![1]).unwrap();
        let du = hjb_rhs(&FullDynamics(&n), &lattice, 0.0, &[1.0, 4.0]).unwrap();
        assert_eq!(du[0], -2.0);
        // at the box edge the neighbour clamps onto itself
        assert_eq!(du[1], 0.0);
    }

    #[test]
    fn constant_values_have_zero_rhs() {
        let n = net(
            vec![vec![1], vec![0]],
            vec![vec![0], vec![1]],
            vec![0.7, 2.0],
        );
        let lattice = Lattice::new(vec![10]).unwrap();
        let du = hjb_rhs(&FullDynamics(&n), &lattice, 0.3, &[0.25; 11]).unwrap();
        assert!(du.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_value_is_an_integrity_failure() {
        let n = net(vec![vec![0]], vec![vec![1]], vec![1.0]);
        let lattice = Lattice::new(vec![1]).unwrap();
        assert!(matches!(
            hjb_rhs(&FullDynamics(&n), &lattice, 0.0, &[-1.0, 4.0]),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn zero_propensity_system_is_frozen() {
        struct Frozen;
        impl LatticeDynamics for Frozen {
            fn dims(&self) -> usize {
                1
            }
            fn reaction_count(&self) -> usize {
                1
            }
            fn jump(&self, _j: usize) -> &[i64] {
                &[-1]
            }
            fn rates_into(&self, _t: f64, _s: &[i64], out: &mut [f64]) {
                out[0] = 0.0;
            }
        }
        let sig = SigmoidFinal::for_threshold(0, 3.0, 4.0);
        let g = solve_hjb_backward(&Frozen, 1.0, &sig, &HjbConfig::with_s_max(10)).unwrap();
        for (k, _) in g.time_nodes().iter().enumerate() {
            for (i, s) in g.lattice().states().enumerate() {
                let v = sig.eval(&s);
                assert_eq!(g.row(k)[i], (v * v).max(DEFAULT_U_FLOOR));
            }
        }
    }

    #[test]
    fn self_loop_contributes_nothing() {
        let n = net(vec![vec![1]], vec![vec![1]], vec![3.0]);
        let sig = SigmoidFinal::for_threshold(0, 0.0, 4.0);
        let g =
            solve_hjb_backward(&FullDynamics(&n), 1.0, &sig, &HjbConfig::with_s_max(2)).unwrap();
        assert_eq!(g.row(0), g.row(g.time_nodes().len() - 1));
    }

    #[test]
    fn pure_death_matches_closed_form() {
        // w = sqrt(u) solves w' = -a (w(s-1) - w(s)); one-step chain from
        // state 1 to state 0 gives w(t,1) = w0 + (w1 - w0) e^{-theta (T - t)}
        let n = net(vec![vec![1]], vec![vec![0]], vec![1.5]);
        let sig = SigmoidFinal::for_threshold(0, 0.0, 4.0);
        let cfg = HjbConfig {
            ode_rel_tol: 1e-9,
            ode_abs_tol: 1e-12,
            ..HjbConfig::with_s_max(1)
        };
        let g = solve_hjb_backward(&FullDynamics(&n), 1.0, &sig, &cfg).unwrap();
        let (w0, w1) = (sig.eval(&[0]), sig.eval(&[1]));
        let expected = w0 + (w1 - w0) * (-1.5f64).exp();
        assert!((g.value(0.0, &[1]).sqrt() - expected).abs() < 1e-7);
        assert_eq!(*g.time_nodes().last().unwrap(), 0.0);
        assert_eq!(g.time_nodes()[0], 1.0);
    }

    #[test]
    fn rejects_box_below_threshold() {
        let n = net(vec![vec![1]], vec![vec![0]], vec![1.0]);
        let sig = SigmoidFinal::for_threshold(0, 20.0, 4.0);
        assert!(
            solve_hjb_backward(&FullDynamics(&n), 1.0, &sig, &HjbConfig::with_s_max(10)).is_err()
        );
    }
}
