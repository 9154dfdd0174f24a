//! Reaction networks under stochastic mass-action kinetics.
//!
//! A network with `d` species and `J` reactions is described by its reactant
//! coefficients `alpha`, product coefficients `beta` and rate constants
//! `theta`. The stoichiometric vector of reaction `j` is `beta[j] - alpha[j]`.

use std::collections::BTreeMap;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One reaction channel as written in a config file: species name to
/// coefficient maps plus a rate constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSpec {
    #[serde(default)]
    pub reactants: BTreeMap<String, u32>,
    #[serde(default)]
    pub products: BTreeMap<String, u32>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<String>,
    alpha: Vec<Vec<u32>>,
    beta: Vec<Vec<u32>>,
    theta: Vec<f64>,
    nu: Vec<Vec<i64>>,
    // (species, coefficient) pairs with coefficient > 0
    reactant_terms: Vec<Vec<(usize, u32)>>,
    // (species, change) pairs with change != 0
    jumps: Vec<Vec<(usize, i64)>>,
}

impl ReactionNetwork {
    /// Builds a network from dense `J x d` coefficient matrices.
    pub fn new(
        species: Vec<String>,
        alpha: Vec<Vec<u32>>,
        beta: Vec<Vec<u32>>,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let d = species.len();
        let j = theta.len();
        if d == 0 {
            return Err(Error::InvalidNetwork("network has no species".into()));
        }
        if alpha.len() != j || beta.len() != j {
            return Err(Error::InvalidNetwork(format!(
                "expected {j} coefficient rows, got {} reactant and {} product rows",
                alpha.len(),
                beta.len()
            )));
        }
        for (r, (a, b)) in alpha.iter().zip(&beta).enumerate() {
            if a.len() != d || b.len() != d {
                return Err(Error::InvalidNetwork(format!(
                    "reaction {r} has coefficient rows of the wrong width (expected {d})"
                )));
            }
        }
        for (r, &t) in theta.iter().enumerate() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "rate constant of reaction {r} must be positive and finite, got {t}"
                )));
            }
        }
        let nu: Vec<Vec<i64>> = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(&a, &b)| b as i64 - a as i64)
                    .collect()
            })
            .collect();
        let reactant_terms = alpha
            .iter()
            .map(|a| {
                a.iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(i, &c)| (i, c))
                    .collect()
            })
            .collect();
        let jumps = nu
            .iter()
            .map(|v| {
                v.iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0)
                    .map(|(i, &c)| (i, c))
                    .collect()
            })
            .collect();
        Ok(Self {
            species,
            alpha,
            beta,
            theta,
            nu,
            reactant_terms,
            jumps,
        })
    }

    /// Builds a network from named reactions. Every species mentioned in a
    /// reaction must appear in `species`.
    pub fn from_specs(species: Vec<String>, reactions: &[ReactionSpec]) -> Result<Self> {
        let index: BTreeMap<&str, usize> = species
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if index.len() != species.len() {
            return Err(Error::InvalidNetwork("duplicate species name".into()));
        }
        let d = species.len();
        let mut alpha = Vec::with_capacity(reactions.len());
        let mut beta = Vec::with_capacity(reactions.len());
        let mut theta = Vec::with_capacity(reactions.len());
        for (r, spec) in reactions.iter().enumerate() {
            let mut a = vec![0u32; d];
            let mut b = vec![0u32; d];
            for (name, &c) in &spec.reactants {
                let i = *index.get(name.as_str()).ok_or_else(|| {
                    Error::InvalidNetwork(format!("reaction {r} names unknown species `{name}`"))
                })?;
                a[i] = c;
            }
            for (name, &c) in &spec.products {
                let i = *index.get(name.as_str()).ok_or_else(|| {
                    Error::InvalidNetwork(format!("reaction {r} names unknown species `{name}`"))
                })?;
                b[i] = c;
            }
            alpha.push(a);
            beta.push(b);
            theta.push(spec.rate);
        }
        Self::new(species, alpha, beta, theta)
    }

    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    pub fn reaction_count(&self) -> usize {
        self.theta.len()
    }

    pub fn species_names(&self) -> &[String] {
        &self.species
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn reactants(&self, j: usize) -> &[u32] {
        &self.alpha[j]
    }

    pub fn products(&self, j: usize) -> &[u32] {
        &self.beta[j]
    }

    pub fn rate(&self, j: usize) -> f64 {
        self.theta[j]
    }

    pub fn rates(&self) -> &[f64] {
        &self.theta
    }

    /// Stoichiometric vector of reaction `j`.
    pub fn stoichiometry(&self, j: usize) -> &[i64] {
        &self.nu[j]
    }

    /// Nonzero `(species, coefficient)` reactant pairs of reaction `j`.
    pub fn reactant_terms(&self, j: usize) -> &[(usize, u32)] {
        &self.reactant_terms[j]
    }

    /// Nonzero `(species, change)` pairs of reaction `j`.
    pub fn jumps(&self, j: usize) -> &[(usize, i64)] {
        &self.jumps[j]
    }

    pub fn check_state(&self, x: &[i64]) -> Result<()> {
        if x.len() != self.species_count() {
            return Err(Error::InvalidState(format!(
                "state has {} entries, network has {} species",
                x.len(),
                self.species_count()
            )));
        }
        if let Some(i) = x.iter().position(|&v| v < 0) {
            return Err(Error::InvalidState(format!(
                "species {} has negative count {}",
                self.species[i], x[i]
            )));
        }
        Ok(())
    }

    /// Mass-action propensity of a single reaction.
    #[inline]
    pub fn propensity(&self, j: usize, x: &[i64]) -> f64 {
        let mut a = self.theta[j];
        for &(i, c) in &self.reactant_terms[j] {
            let xi = x[i];
            if xi < c as i64 {
                return 0.0;
            }
            a *= falling_factorial(xi, c);
        }
        a
    }

    /// Writes all `J` propensities at `x` into `out`.
    #[inline]
    pub fn propensities_into(&self, x: &[i64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.propensity(j, x);
        }
    }

    pub fn propensities(&self, x: &[i64]) -> Vec<f64> {
        let mut out = vec![0.0; self.reaction_count()];
        self.propensities_into(x, &mut out);
        out
    }

    /// Applies `count` firings of reaction `j` to `x` without clamping.
    #[inline]
    pub fn fire(&self, j: usize, count: i64, x: &mut [i64]) {
        for &(i, c) in &self.jumps[j] {
            x[i] += c * count;
        }
    }
}

/// `x (x-1) ... (x-k+1)` as a float; callers guarantee `x >= k`.
#[inline]
pub fn falling_factorial(x: i64, k: u32) -> f64 {
    let mut p = 1.0;
    for m in 0..k as i64 {
        p *= (x - m) as f64;
    }
    p
}

/// Nonnegative species counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct State(Vec<i64>);

impl State {
    pub fn new(counts: Vec<i64>) -> Result<Self> {
        if let Some(&v) = counts.iter().find(|&&v| v < 0) {
            return Err(Error::InvalidState(format!("negative count {v}")));
        }
        Ok(Self(counts))
    }

    pub fn into_inner(self) -> Vec<i64> {
        self.0
    }
}

impl TryFrom<Vec<i64>> for State {
    type Error = Error;
    fn try_from(v: Vec<i64>) -> Result<Self> {
        State::new(v)
    }
}

impl From<State> for Vec<i64> {
    fn from(s: State) -> Self {
        s.0
    }
}

impl Deref for State {
    type Target = [i64];
    fn deref(&self) -> &[i64] {
        &self.0
    }
}

/// Uniform mesh `t_n = n * dt`, `n = 0..=N`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    final_time: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, steps: usize) -> Result<Self> {
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "final time must be positive, got {final_time}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("step count must be at least 1".into()));
        }
        Ok(Self { final_time, steps })
    }

    /// Grid with step `dt`, which must divide `final_time` (to 1e-9 relative).
    pub fn from_step(final_time: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "step must be positive, got {dt}"
            )));
        }
        let ratio = final_time / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "step {dt} does not divide the final time {final_time}"
            )));
        }
        Self::new(final_time, steps as usize)
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.final_time
        } else {
            n as f64 * self.dt()
        }
    }
}

/// A preset experiment: network, initial state, horizon and the rare event
/// `X_i(T) > threshold`.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub network: ReactionNetwork,
    pub initial_state: State,
    pub final_time: f64,
    pub observed_species: usize,
    pub threshold: f64,
}

impl Preset {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "michaelis-menten" => Ok(michaelis_menten()),
            "goutsias" => Ok(goutsias()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected michaelis-menten or goutsias)"
            ))),
        }
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Michaelis-Menten enzyme kinetics: `E+S -> C`, `C -> E+S`, `C -> E+P`,
/// observed event `C(1) > 22`.
pub fn michaelis_menten() -> Preset {
    // species order: E, S, C, P
    let alpha = vec![vec![1, 1, 0, 0], vec![0, 0, 1, 0], vec![0, 0, 1, 0]];
    let beta = vec![vec![0, 0, 1, 0], vec![1, 1, 0, 0], vec![1, 0, 0, 1]];
    let network = ReactionNetwork::new(
        names(&["E", "S", "C", "P"]),
        alpha,
        beta,
        vec![0.001, 0.005, 0.01],
    )
    .expect("preset network is valid");
    Preset {
        name: "michaelis-menten",
        network,
        initial_state: State(vec![100, 100, 0, 0]),
        final_time: 1.0,
        observed_species: 2,
        threshold: 22.0,
    }
}

/// Goutsias' model of regulated transcription (six species, ten reactions),
/// observed event `D(1) > 8`.
pub fn goutsias() -> Preset {
    // species order: M, D, RNA, DNA, DNA.D, DNA.2D
    let r = |a: [u32; 6], b: [u32; 6]| (a.to_vec(), b.to_vec());
    let reactions = [
        r([0, 0, 1, 0, 0, 0], [1, 0, 1, 0, 0, 0]), // RNA -> RNA + M
        r([1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0]), // M -> 0
        r([0, 0, 0, 0, 1, 0], [0, 0, 1, 0, 1, 0]), // DNA.D -> RNA + DNA.D
        r([0, 0, 1, 0, 0, 0], [0, 0, 0, 0, 0, 0]), // RNA -> 0
        r([0, 1, 0, 1, 0, 0], [0, 0, 0, 0, 1, 0]), // DNA + D -> DNA.D
        r([0, 0, 0, 0, 1, 0], [0, 1, 0, 1, 0, 0]), // DNA.D -> DNA + D
        r([0, 1, 0, 0, 1, 0], [0, 0, 0, 0, 0, 1]), // DNA.D + D -> DNA.2D
        r([0, 0, 0, 0, 0, 1], [0, 1, 0, 0, 1, 0]), // DNA.2D -> DNA.D + D
        r([2, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0]), // 2M -> D
        r([0, 1, 0, 0, 0, 0], [2, 0, 0, 0, 0, 0]), // D -> 2M
    ];
    let (alpha, beta) = reactions.into_iter().unzip();
    let theta = vec![
        0.043, 0.0007, 0.0715, 0.0039, 0.0199, 0.479, 0.000199, 8.77e-12, 0.083, 0.5,
    ];
    let network = ReactionNetwork::new(
        names(&["M", "D", "RNA", "DNA", "DNA.D", "DNA.2D"]),
        alpha,
        beta,
        theta,
    )
    .expect("preset network is valid");
    Preset {
        name: "goutsias",
        network,
        initial_state: State(vec![2, 6, 0, 0, 2, 0]),
        final_time: 1.0,
        observed_species: 1,
        threshold: 8.0,
    }
}
