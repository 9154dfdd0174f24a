//! Discrete-time dynamic programming for the optimal second moment, with
//! the sum over firing vectors truncated to `|p| <= p_max`.

use statrs::distribution::{DiscreteCDF, Poisson};

use super::grid::Lattice;
use crate::error::{Error, Result};
use crate::estimators::Observable;
use crate::network::{ReactionNetwork, TimeGrid};

pub const DEFAULT_P_MAX: u32 = 8;

/// Tail probabilities above this are reported as warnings.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const LOG_BRACKET: f64 = 12.0;
const LOG_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 20;

/// Values `u(n, x)` for `n = 0..=N` over the truncation box.
#[derive(Debug, Clone)]
pub struct DpTable {
    pub lattice: Lattice,
    pub steps: usize,
    values: Vec<f64>,
    /// Largest Poisson tail mass beyond `p_max` seen in the recursion.
    pub tail_bound: f64,
    pub warnings: Vec<String>,
}

impl DpTable {
    pub fn value(&self, n: usize, x: &[i64]) -> f64 {
        self.values[n * self.lattice.len() + self.lattice.index_clamped(x)]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let l = self.lattice.len();
        &self.values[n * l..(n + 1) * l]
    }
}

struct StateTerms {
    active: Vec<usize>,
    rates: Vec<f64>,
    // flattened |active|-tuples of firing counts
    firings: Vec<u8>,
    targets: Vec<usize>,
    unit_targets: Vec<usize>,
}

fn enumerate_firings(k: usize, p_max: u32, out: &mut Vec<u8>) {
    fn rec(prefix: &mut Vec<u8>, k: usize, left: u32, out: &mut Vec<u8>) {
        if prefix.len() == k {
            out.extend_from_slice(prefix);
            return;
        }
        for p in 0..=left {
            prefix.push(p as u8);
            rec(prefix, k, left - p, out);
            prefix.pop();
        }
    }
    rec(&mut Vec::with_capacity(k), k, p_max, out);
}

/// Backward recursion from `u(N, x) = g(x)^2`.
pub fn dp_value_oracle(
    net: &ReactionNetwork,
    g: &Observable,
    grid: &TimeGrid,
    upper: &[i64],
    p_max: u32,
) -> Result<DpTable> {
    if upper.len() != net.species_count() {
        return Err(Error::InvalidArgument(format!(
            "truncation box has {} coordinates, network {} species",
            upper.len(),
            net.species_count()
        )));
    }
    if p_max == 0 || p_max > 60 {
        return Err(Error::InvalidArgument(format!(
            "p_max must lie in 1..=60, got {p_max}"
        )));
    }
    let lattice = Lattice::new(upper.to_vec())?;
    let l = lattice.len();
    let jn = net.reaction_count();
    let dt = grid.dt();
    let n_steps = grid.steps();
    let d = net.species_count();

    let mut terms = Vec::with_capacity(l);
    for x in lattice.states() {
        let a = net.propensities(&x);
        let active: Vec<usize> = (0..jn).filter(|&j| a[j] > 0.0).collect();
        let rates: Vec<f64> = active.iter().map(|&j| a[j]).collect();
        let mut firings = Vec::new();
        enumerate_firings(active.len(), p_max, &mut firings);
        let k = active.len().max(1);
        let mut targets = Vec::with_capacity(firings.len() / k);
        let mut y = vec![0i64; d];
        for p in firings.chunks(k) {
            y.copy_from_slice(&x);
            if !active.is_empty() {
                for (&j, &pj) in active.iter().zip(p) {
                    for (yi, nu) in y.iter_mut().zip(net.stoichiometry(j)) {
                        *yi += nu * pj as i64;
                    }
                }
            }
            targets.push(lattice.index_clamped(&y));
        }
        let unit_targets = active
            .iter()
            .map(|&j| lattice.index_shifted(&x, net.stoichiometry(j)))
            .collect();
        terms.push(StateTerms {
            active,
            rates,
            firings,
            targets,
            unit_targets,
        });
    }

    let mut values = vec![0.0; (n_steps + 1) * l];
    for (i, x) in lattice.states().enumerate() {
        let v = g.eval(&x);
        values[n_steps * l + i] = v * v;
    }
    let mut tail_bound: f64 = 0.0;
    let mut weights: Vec<Vec<f64>> = Vec::new();
    for n in (0..n_steps).rev() {
        let (head, tail) = values.split_at_mut((n + 1) * l);
        let next = &tail[..l];
        let cur = &mut head[n * l..];
        for (i, st) in terms.iter().enumerate() {
            if st.active.is_empty() {
                cur[i] = next[i];
                continue;
            }
            let (value, c_total) = minimise_state(st, next, i, dt, p_max, &mut weights);
            cur[i] = value;
            if c_total > 0.0 {
                let tail = Poisson::new(c_total)
                    .map(|p| p.sf(p_max as u64))
                    .unwrap_or(0.0);
                tail_bound = tail_bound.max(tail);
            }
        }
    }
    let mut warnings = Vec::new();
    if tail_bound > DEFAULT_TAIL_TOLERANCE {
        warnings.push(format!(
            "Poisson tail beyond p_max = {p_max} reaches {tail_bound:e}; increase p_max or decrease dt"
        ));
    }
    Ok(DpTable {
        lattice,
        steps: n_steps,
        values,
        tail_bound,
        warnings,
    })
}

/// Returns the minimised value and the total truncated Poisson mean
/// `sum_j dt a_j^2 / delta_j` at the minimiser.
fn minimise_state(
    st: &StateTerms,
    next: &[f64],
    i: usize,
    dt: f64,
    p_max: u32,
    weights: &mut Vec<Vec<f64>>,
) -> (f64, f64) {
    let k = st.active.len();
    let a_sum: f64 = st.rates.iter().sum();
    weights.resize_with(k, || vec![0.0; p_max as usize + 1]);
    let u = next[i];
    // continuous-time minimiser as starting point
    let mut log_delta: Vec<f64> = st
        .rates
        .iter()
        .zip(&st.unit_targets)
        .map(|(&a, &nb)| {
            let r = if u > 0.0 && next[nb] > 0.0 {
                (next[nb] / u).sqrt()
            } else {
                1.0
            };
            (a * r).ln()
        })
        .collect();
    for (w, (&a, &ld)) in weights.iter_mut().zip(st.rates.iter().zip(&log_delta)) {
        fill_weights(w, dt * a * a / ld.exp());
    }
    let objective = |weights: &[Vec<f64>], log_delta: &[f64]| -> f64 {
        let delta_sum: f64 = log_delta.iter().map(|l| l.exp()).sum();
        let mut s = 0.0;
        for (p, &t) in st.firings.chunks(k).zip(&st.targets) {
            let mut w = next[t];
            if w == 0.0 {
                continue;
            }
            for (r, &pj) in p.iter().enumerate() {
                w *= weights[r][pj as usize];
            }
            s += w;
        }
        ((-2.0 * a_sum + delta_sum) * dt).exp() * s
    };

    let mut best = objective(weights, &log_delta);
    for _ in 0..MAX_SWEEPS {
        let mut moved: f64 = 0.0;
        for r in 0..k {
            let a = st.rates[r];
            let start = log_delta[r];
            let eval = |ld: f64, weights: &mut Vec<Vec<f64>>, log_delta: &mut Vec<f64>| {
                log_delta[r] = ld;
                fill_weights(&mut weights[r], dt * a * a / ld.exp());
                objective(weights, log_delta)
            };
            let (mut lo, mut hi) = (start - LOG_BRACKET, start + LOG_BRACKET);
            let mut x1 = hi - GOLDEN * (hi - lo);
            let mut x2 = lo + GOLDEN * (hi - lo);
            let mut f1 = eval(x1, weights, &mut log_delta);
            let mut f2 = eval(x2, weights, &mut log_delta);
            while hi - lo > LOG_TOL {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - GOLDEN * (hi - lo);
                    f1 = eval(x1, weights, &mut log_delta);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + GOLDEN * (hi - lo);
                    f2 = eval(x2, weights, &mut log_delta);
                }
            }
            let cand = 0.5 * (lo + hi);
            let f = eval(cand, weights, &mut log_delta);
            if f <= best {
                best = f;
                moved = moved.max((cand - start).abs());
            } else {
                eval(start, weights, &mut log_delta);
            }
        }
        if moved < 1e-9 {
            break;
        }
    }
    let c_total = st
        .rates
        .iter()
        .zip(&log_delta)
        .map(|(&a, &ld)| dt * a * a / ld.exp())
        .sum();
    (best, c_total)
}

fn fill_weights(w: &mut [f64], c: f64) {
    let mut v = 1.0;
    w[0] = 1.0;
    for (k, slot) in w.iter_mut().enumerate().skip(1) {
        v *= c / k as f64;
        *slot = v;
    }
}
