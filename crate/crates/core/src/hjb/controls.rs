use std::sync::Arc;

use super::grid::ValueFunctionGrid;
use crate::error::{Error, Result};
use crate::importance::{ControlPolicy, PolicyKind};
use crate::network::ReactionNetwork;
use crate::projection::{MpModel, Projection};

/// `delta_j = a_j(x) sqrt(u(t, x + nu_j) / u(t, x))` on the full state space.
#[derive(Debug, Clone)]
pub struct FullHjbPolicy {
    grid: Arc<ValueFunctionGrid>,
    jumps: Vec<Vec<i64>>,
}

impl FullHjbPolicy {
    pub fn new(grid: Arc<ValueFunctionGrid>, net: &ReactionNetwork) -> Result<Self> {
        if grid.lattice().dims() != net.species_count() {
            return Err(Error::InvalidArgument(format!(
                "grid has {} coordinates, network {} species",
                grid.lattice().dims(),
                net.species_count()
            )));
        }
        let jumps = (0..net.reaction_count())
            .map(|j| net.stoichiometry(j).to_vec())
            .collect();
        Ok(Self { grid, jumps })
    }
}

impl ControlPolicy for FullHjbPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::HjbFull
    }

    fn raw_controls(&self, t: f64, x: &[i64], a: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let lattice = g.lattice();
        let bracket = g.bracket(t);
        let u = g.value_at(bracket, lattice.index_clamped(x));
        for ((o, &aj), nu) in out.iter_mut().zip(a).zip(&self.jumps) {
            if aj == 0.0 {
                *o = 0.0;
                continue;
            }
            let un = g.value_at(bracket, lattice.index_shifted(x, nu));
            *o = aj * (un / u).sqrt();
        }
    }
}

/// Full-state controls read off a reduced grid through the projection.
#[derive(Debug, Clone)]
pub struct MpMappedPolicy {
    grid: Arc<ValueFunctionGrid>,
    projection: Projection,
    nu_bar: Vec<Vec<i64>>,
}

impl MpMappedPolicy {
    pub fn new(
        grid: Arc<ValueFunctionGrid>,
        projection: Projection,
        net: &ReactionNetwork,
    ) -> Result<Self> {
        check_dims(&grid, &projection, net)?;
        let nu_bar = (0..net.reaction_count())
            .map(|j| projection.apply(net.stoichiometry(j)))
            .collect();
        Ok(Self {
            grid,
            projection,
            nu_bar,
        })
    }
}

fn check_dims(
    grid: &ValueFunctionGrid,
    projection: &Projection,
    net: &ReactionNetwork,
) -> Result<()> {
    if projection.full_dims() != net.species_count() {
        return Err(Error::InvalidArgument(format!(
            "projection acts on {} species, network has {}",
            projection.full_dims(),
            net.species_count()
        )));
    }
    if grid.lattice().dims() != projection.dims() {
        return Err(Error::InvalidArgument(format!(
            "grid has {} coordinates, projection {}",
            grid.lattice().dims(),
            projection.dims()
        )));
    }
    Ok(())
}

impl ControlPolicy for MpMappedPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::MpMapped
    }

    fn raw_controls(&self, t: f64, x: &[i64], a: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let lattice = g.lattice();
        let bracket = g.bracket(t);
        let p = &self.projection;
        let idx = lattice.index_from((0..p.dims()).map(|r| p.coord(r, x)));
        let u = g.value_at(bracket, idx);
        for ((o, &aj), nu) in out.iter_mut().zip(a).zip(&self.nu_bar) {
            if aj == 0.0 {
                *o = 0.0;
                continue;
            }
            let nb = lattice.index_from((0..p.dims()).map(|r| p.coord(r, x) + nu[r]));
            *o = if nb == idx {
                aj
            } else {
                aj * (g.value_at(bracket, nb) / u).sqrt()
            };
        }
    }
}

/// Controls built from the projected propensities `abar_j(t, P x)` instead
/// of `a_j(x)`. Reactions that leave the projection unchanged keep `a_j(x)`.
#[derive(Debug, Clone)]
pub struct MpAlternativePolicy {
    grid: Arc<ValueFunctionGrid>,
    model: Arc<MpModel>,
}

impl MpAlternativePolicy {
    pub fn new(
        grid: Arc<ValueFunctionGrid>,
        model: Arc<MpModel>,
        net: &ReactionNetwork,
    ) -> Result<Self> {
        check_dims(&grid, model.projection(), net)?;
        if model.reaction_count() != net.reaction_count() {
            return Err(Error::InvalidArgument(format!(
                "model has {} reactions, network {}",
                model.reaction_count(),
                net.reaction_count()
            )));
        }
        Ok(Self { grid, model })
    }
}

impl ControlPolicy for MpAlternativePolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::MpAlternative
    }

    fn raw_controls(&self, t: f64, x: &[i64], a: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let lattice = g.lattice();
        let bracket = g.bracket(t);
        let m = &self.model;
        let p = m.projection();
        let mut s = [0i64; 8];
        let mut heap;
        let s: &mut [i64] = if p.dims() <= s.len() {
            &mut s[..p.dims()]
        } else {
            heap = vec![0; p.dims()];
            &mut heap
        };
        p.apply_into(x, s);
        let idx = lattice.index_clamped(s);
        let u = g.value_at(bracket, idx);
        for (j, (o, &aj)) in out.iter_mut().zip(a).enumerate() {
            if aj == 0.0 {
                *o = 0.0;
                continue;
            }
            let nu = m.nu_bar(j);
            if nu.iter().all(|&v| v == 0) {
                *o = aj;
                continue;
            }
            let abar = m.eval(j, t, s);
            let nb = lattice.index_shifted(s, nu);
            *o = abar * (g.value_at(bracket, nb) / u).sqrt();
        }
    }
}
