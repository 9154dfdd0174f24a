//! Markovian projection of a reaction network onto a few linear
//! combinations of its species.
//!
//! The projected process has jumps `P nu_j` and time-dependent rates
//! `abar_j(t, s) = E[a_j(X(t)) | P X(t) = s]`, approximated by least squares
//! over tau-leap paths in an empirically orthonormal polynomial basis.

mod basis;
mod classify;
mod cost;
mod model;
mod surrogate;

pub use basis::{empirical_gram_schmidt, BasisSpec, OrthoBasis, RegressionData};
pub use classify::{classify_reactions, Classification, ReactionClass};
pub use cost::{mp_cost_model, CostModelParams, CostReport, UnitCosts};
pub use model::{fit_mp, generate_regression_paths, FitOptions, MpModel};
pub use surrogate::{mp_process_final, mp_process_simulate};

use crate::error::{Error, Result};

/// Integer `dbar x d` projection matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    rows: Vec<Vec<i64>>,
    full_dims: usize,
}

impl Projection {
    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let full_dims = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || full_dims == 0 {
            return Err(Error::InvalidArgument(
                "projection needs at least one row".into(),
            ));
        }
        if rows.iter().any(|r| r.len() != full_dims) {
            return Err(Error::InvalidArgument(
                "projection rows differ in length".into(),
            ));
        }
        Ok(Self { rows, full_dims })
    }

    /// Unit rows selecting `species` out of `full_dims`.
    pub fn canonical(full_dims: usize, species: &[usize]) -> Result<Self> {
        let mut rows = Vec::with_capacity(species.len());
        for &i in species {
            if i >= full_dims {
                return Err(Error::InvalidArgument(format!(
                    "species {i} outside a {full_dims}-species network"
                )));
            }
            let mut r = vec![0; full_dims];
            r[i] = 1;
            rows.push(r);
        }
        Self::from_rows(rows)
    }

    pub fn identity(full_dims: usize) -> Result<Self> {
        Self::canonical(full_dims, &(0..full_dims).collect::<Vec<_>>())
    }

    pub fn dims(&self) -> usize {
        self.rows.len()
    }

    pub fn full_dims(&self) -> usize {
        self.full_dims
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    /// Species selected by each row, when every row is a unit vector.
    pub fn canonical_species(&self) -> Option<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| {
                let nz: Vec<usize> = (0..r.len()).filter(|&i| r[i] != 0).collect();
                (nz.len() == 1 && r[nz[0]] == 1).then(|| nz[0])
            })
            .collect()
    }

    #[inline]
    pub fn coord(&self, r: usize, x: &[i64]) -> i64 {
        self.rows[r].iter().zip(x).map(|(p, v)| p * v).sum()
    }

    pub fn apply_into(&self, x: &[i64], out: &mut [i64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.coord(r, x);
        }
    }

    pub fn apply(&self, x: &[i64]) -> Vec<i64> {
        let mut out = vec![0; self.dims()];
        self.apply_into(x, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_rows() {
        let p = Projection::canonical(4, &[2]).unwrap();
        assert_eq!(p.rows(), &[vec![0, 0, 1, 0]]);
        assert_eq!(p.apply(&[5, 6, 7, 8]), vec![7]);
        assert_eq!(p.canonical_species(), Some(vec![2]));
        assert!(Projection::canonical(2, &[3]).is_err());
    }

    #[test]
    fn general_rows() {
        let p = Projection::from_rows(vec![vec![1, 1]]).unwrap();
        assert_eq!(p.apply(&[2, 3]), vec![5]);
        assert_eq!(p.canonical_species(), None);
    }
}
