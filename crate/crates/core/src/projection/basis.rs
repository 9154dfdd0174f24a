use rayon::prelude::*;

use super::Projection;
use crate::error::{Error, Result};
use crate::network::{ReactionNetwork, TimeGrid};
use crate::simulate::Path;

/// Relative pivot norm below which a basis element is dropped.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Monomials `t^e0 * s_1^e1 * ... * s_dbar^edbar`, one exponent vector each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisSpec {
    exponents: Vec<Vec<u32>>,
}

impl BasisSpec {
    /// The constant monomial is moved to the front.
    pub fn new(mut exponents: Vec<Vec<u32>>) -> Result<Self> {
        let width = exponents.first().map(Vec::len).unwrap_or(0);
        if width < 2 {
            return Err(Error::InvalidArgument(
                "basis exponents need a time entry and at least one state entry".into(),
            ));
        }
        if exponents.iter().any(|e| e.len() != width) {
            return Err(Error::InvalidArgument(
                "basis exponent vectors differ in length".into(),
            ));
        }
        let zero = exponents
            .iter()
            .position(|e| e.iter().all(|&v| v == 0))
            .ok_or_else(|| {
                Error::InvalidArgument("basis must contain the constant monomial".into())
            })?;
        let c = exponents.remove(zero);
        exponents.insert(0, c);
        for (k, e) in exponents.iter().enumerate() {
            if exponents[..k].contains(e) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate basis exponent {e:?}"
                )));
            }
        }
        Ok(Self { exponents })
    }

    /// All exponents up to `max_degree` in time and in every coordinate,
    /// time varying slowest.
    pub fn tensor(dbar: usize, max_degree: u32) -> Self {
        let width = dbar + 1;
        let mut out = vec![vec![]];
        for _ in 0..width {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<u32>| {
                    (0..=max_degree).map(move |e| {
                        let mut v = prefix.clone();
                        v.push(e);
                        v
                    })
                })
                .collect();
        }
        Self { exponents: out }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.exponents[0].len() - 1
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Monomial values with the state coordinates divided by `scale`.
    #[inline]
    pub fn eval_into(&self, t: f64, s: &[i64], scale: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            let mut v = t.powi(e[0] as i32);
            for ((&sr, &c), &er) in s.iter().zip(scale).zip(&e[1..]) {
                if er > 0 {
                    v *= (sr as f64 / c).powi(er as i32);
                }
            }
            *o = v;
        }
    }
}

/// Sample points `(t_n, P X_n)` and full propensities of the regressed
/// reactions, rows ordered path by path.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub dims: usize,
    pub paths: usize,
    pub steps: usize,
    pub times: Vec<f64>,
    pub states: Vec<i64>,
    pub reactions: Vec<usize>,
    /// One target column per entry of `reactions`.
    pub targets: Vec<Vec<f64>>,
}

impl RegressionData {
    /// Uses the states at `t_0, ..., t_{N-1}` of every path.
    pub fn from_paths(
        paths: &[Path],
        grid: &TimeGrid,
        proj: &Projection,
        net: &ReactionNetwork,
        reactions: &[usize],
    ) -> Result<Self> {
        let n = grid.steps();
        if let Some(p) = paths.iter().find(|p| p.len() < n) {
            return Err(Error::InvalidArgument(format!(
                "regression path has {} states, grid needs {n}",
                p.len()
            )));
        }
        let dbar = proj.dims();
        let per_path: Vec<(Vec<i64>, Vec<f64>)> = paths
            .par_iter()
            .map(|p| {
                let mut s = Vec::with_capacity(n * dbar);
                let mut y = Vec::with_capacity(n * reactions.len());
                let mut buf = vec![0; dbar];
                for k in 0..n {
                    let x = p.state(k);
                    proj.apply_into(x, &mut buf);
                    s.extend_from_slice(&buf);
                    for &j in reactions {
                        y.push(net.propensity(j, x));
                    }
                }
                (s, y)
            })
            .collect();
        let rows = paths.len() * n;
        let mut states = Vec::with_capacity(rows * dbar);
        let mut targets = vec![Vec::with_capacity(rows); reactions.len()];
        for (s, y) in per_path {
            states.extend_from_slice(&s);
            for row in y.chunks(reactions.len().max(1)) {
                for (col, &v) in targets.iter_mut().zip(row) {
                    col.push(v);
                }
            }
        }
        let times = (0..paths.len())
            .flat_map(|_| (0..n).map(|k| grid.time(k)))
            .collect();
        Ok(Self {
            dims: dbar,
            paths: paths.len(),
            steps: n,
            times,
            states,
            reactions: reactions.to_vec(),
            targets,
        })
    }

    pub fn rows(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, row: usize) -> &[i64] {
        &self.states[row * self.dims..(row + 1) * self.dims]
    }
}

/// Empirically orthonormal functions as combinations of scaled monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    pub spec: BasisSpec,
    pub scale: Vec<f64>,
    /// Indices into the monomial list of the retained elements.
    pub kept: Vec<usize>,
    /// Lower-triangular rows: `phi_k = sum_q coeffs[k][q] m_q`.
    pub coeffs: Vec<Vec<f64>>,
}

impl OrthoBasis {
    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn dropped(&self) -> Vec<usize> {
        (0..self.spec.len())
            .filter(|q| !self.kept.contains(q))
            .collect()
    }

    pub fn monomials_into(&self, t: f64, s: &[i64], out: &mut [f64]) {
        self.spec.eval_into(t, s, &self.scale, out);
    }

    /// `phi_k(t, s)` for every retained `k`.
    pub fn eval_into(&self, t: f64, s: &[i64], mono: &mut [f64], out: &mut [f64]) {
        self.monomials_into(t, s, mono);
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = c.iter().zip(mono.iter()).map(|(a, b)| a * b).sum();
        }
    }

    /// Column-major `rows x len()` design matrix.
    pub fn design_matrix(&self, data: &RegressionData) -> Vec<Vec<f64>> {
        let rows = data.rows();
        let k = self.len();
        let values: Vec<Vec<f64>> = (0..rows)
            .into_par_iter()
            .map_init(
                || vec![0.0; self.spec.len()],
                |mono, r| {
                    let mut out = vec![0.0; k];
                    self.eval_into(data.times[r], data.state(r), mono, &mut out);
                    out
                },
            )
            .collect();
        (0..k)
            .map(|c| values.iter().map(|row| row[c]).collect())
            .collect()
    }

    /// `(1/R) sum_r phi_i phi_j` over the sample rows.
    pub fn gram_matrix(&self, data: &RegressionData) -> Vec<Vec<f64>> {
        let d = self.design_matrix(data);
        let n = data.rows() as f64;
        let k = self.len();
        let mut g = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..=i {
                let v = dot(&d[i], &d[j]) / n;
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-Schmidt on the monomial columns under the empirical scalar product
/// `(1/(M N)) sum_m sum_n f g`, with one reorthogonalisation pass.
pub fn empirical_gram_schmidt(data: &RegressionData, spec: &BasisSpec) -> Result<OrthoBasis> {
    if spec.dims() != data.dims {
        return Err(Error::InvalidArgument(format!(
            "basis has {} state coordinates, data {}",
            spec.dims(),
            data.dims
        )));
    }
    let rows = data.rows();
    if rows == 0 {
        return Err(Error::InvalidArgument("empty regression ensemble".into()));
    }
    let scale: Vec<f64> = (0..data.dims)
        .map(|r| {
            let m = (0..rows).map(|i| data.state(i)[r].abs()).max().unwrap_or(0);
            (m as f64).max(1.0)
        })
        .collect();
    let q = spec.len();
    let mut cols = vec![Vec::with_capacity(rows); q];
    let mut mono = vec![0.0; q];
    for r in 0..rows {
        spec.eval_into(data.times[r], data.state(r), &scale, &mut mono);
        for (c, &v) in cols.iter_mut().zip(&mono) {
            c.push(v);
        }
    }
    let n = rows as f64;
    let mut basis_cols: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut coeffs: Vec<Vec<f64>> = Vec::new();
    let mut first_norm = None;
    for (p, col) in cols.into_iter().enumerate() {
        let mut v = col;
        let mut c = vec![0.0; q];
        c[p] = 1.0;
        let initial = (dot(&v, &v) / n).sqrt();
        for _pass in 0..2 {
            for (b, bc) in basis_cols.iter().zip(&coeffs) {
                let r = dot(&v, b) / n;
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= r * bi;
                }
                for (ci, bci) in c.iter_mut().zip(bc) {
                    *ci -= r * bci;
                }
            }
        }
        let norm = (dot(&v, &v) / n).sqrt();
        let reference = *first_norm.get_or_insert(initial);
        if !(norm > PIVOT_TOLERANCE * reference) || !(norm > PIVOT_TOLERANCE * initial) {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        for ci in c.iter_mut() {
            *ci /= norm;
        }
        basis_cols.push(v);
        coeffs.push(c);
        kept.push(p);
    }
    if kept.first() != Some(&0) {
        return Err(Error::InvalidArgument(
            "constant basis function has zero norm".into(),
        ));
    }
    Ok(OrthoBasis {
        spec: spec.clone(),
        scale,
        kept,
        coeffs,
    })
}
