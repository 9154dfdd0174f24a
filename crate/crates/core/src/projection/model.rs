use std::fmt::Write as _;
use std::path::Path as FsPath;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::basis::{empirical_gram_schmidt, BasisSpec, OrthoBasis, RegressionData};
use super::classify::{classify_reactions, ReactionClass};
use super::Projection;
use crate::error::{Error, Result};
use crate::hjb::{parse_all, parse_one, LatticeDynamics};
use crate::network::{falling_factorial, ReactionNetwork, TimeGrid};
use crate::rng::StreamTag;
use crate::simulate::{tau_leap_path_counted, Path, WorkCounters};

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Regress every reaction with a nonzero projected jump, even when its
    /// propensity is a function of the projected state.
    pub force_regression: bool,
}

/// Projected jumps and rates of the surrogate process.
#[derive(Debug)]
pub struct MpModel {
    projection: Projection,
    final_time: f64,
    classes: Vec<ReactionClass>,
    nu_bar: Vec<Vec<i64>>,
    ortho: Option<OrthoBasis>,
    /// Per reaction: coefficients over the orthonormal functions.
    coefficients: Vec<Option<Vec<f64>>>,
    /// Same model expressed over the scaled monomials.
    monomial_coefficients: Vec<Option<Vec<f64>>>,
    residuals: Vec<Option<f64>>,
    /// Per projected coordinate: sampled `[min, max]`.
    hull: Vec<(i64, i64)>,
    extrapolations: AtomicU64,
}

impl Clone for MpModel {
    fn clone(&self) -> Self {
        Self {
            projection: self.projection.clone(),
            final_time: self.final_time,
            classes: self.classes.clone(),
            nu_bar: self.nu_bar.clone(),
            ortho: self.ortho.clone(),
            coefficients: self.coefficients.clone(),
            monomial_coefficients: self.monomial_coefficients.clone(),
            residuals: self.residuals.clone(),
            hull: self.hull.clone(),
            extrapolations: AtomicU64::new(self.extrapolations.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for MpModel {
    fn eq(&self, other: &Self) -> bool {
        self.projection == other.projection
            && self.final_time == other.final_time
            && self.classes == other.classes
            && self.nu_bar == other.nu_bar
            && self.ortho == other.ortho
            && self.coefficients == other.coefficients
            && self.residuals == other.residuals
            && self.hull == other.hull
    }
}

/// `M` tau-leap paths on the regression stream namespace.
pub fn generate_regression_paths(
    net: &ReactionNetwork,
    x0: &[i64],
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
) -> Result<Vec<Path>> {
    net.check_state(x0)?;
    Ok((0..paths)
        .into_par_iter()
        .map(|m| {
            let mut rng = crate::rng::RngStream::new(seed, StreamTag::Regression.stream(0, m));
            let mut w = WorkCounters::default();
            tau_leap_path_counted(net, x0, grid, &mut rng, &mut w)
        })
        .collect())
}

/// Least-squares fit of the projected propensities over `paths`.
pub fn fit_mp(
    paths: &[Path],
    grid: &TimeGrid,
    basis: &BasisSpec,
    proj: &Projection,
    net: &ReactionNetwork,
    opts: &FitOptions,
) -> Result<MpModel> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument(
            "regression needs at least one path".into(),
        ));
    }
    let classification = classify_reactions(net, proj, opts.force_regression)?;
    let j_mp = classification.j_mp();
    let data = RegressionData::from_paths(paths, grid, proj, net, &j_mp)?;
    let hull = (0..proj.dims())
        .map(|r| {
            let it = (0..data.rows()).map(|i| data.state(i)[r]);
            (it.clone().min().unwrap_or(0), it.max().unwrap_or(0))
        })
        .collect();
    let jn = net.reaction_count();
    let mut coefficients = vec![None; jn];
    let mut residuals = vec![None; jn];
    let ortho = if j_mp.is_empty() {
        None
    } else {
        let ortho = empirical_gram_schmidt(&data, basis)?;
        let d = ortho.design_matrix(&data);
        let rows = data.rows() as f64;
        for (col, &j) in j_mp.iter().enumerate() {
            let psi = &data.targets[col];
            // orthonormal columns: D^T D = rows * I
            let c: Vec<f64> = d
                .iter()
                .map(|dk| dk.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>() / rows)
                .collect();
            let mut sse = 0.0;
            for (r, &y) in psi.iter().enumerate() {
                let fit: f64 = d.iter().zip(&c).map(|(dk, ck)| dk[r] * ck).sum();
                sse += (y - fit) * (y - fit);
            }
            coefficients[j] = Some(c);
            residuals[j] = Some(sse / rows);
        }
        Some(ortho)
    };
    MpModel::assemble(
        proj.clone(),
        grid.final_time(),
        classification.classes,
        classification.nu_bar,
        ortho,
        coefficients,
        residuals,
        hull,
    )
}

const MODEL_MAGIC: &str = "mpis-mp-model";
const MODEL_VERSION: u32 = 1;

impl MpModel {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        projection: Projection,
        final_time: f64,
        classes: Vec<ReactionClass>,
        nu_bar: Vec<Vec<i64>>,
        ortho: Option<OrthoBasis>,
        coefficients: Vec<Option<Vec<f64>>>,
        residuals: Vec<Option<f64>>,
        hull: Vec<(i64, i64)>,
    ) -> Result<Self> {
        let mut monomial_coefficients = vec![None; classes.len()];
        for (j, c) in coefficients.iter().enumerate() {
            let regressed = matches!(classes[j], ReactionClass::Regressed);
            match (c, regressed, &ortho) {
                (Some(c), true, Some(o)) => {
                    if c.len() != o.len() || c.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidArgument(format!(
                            "reaction {j}: coefficient vector does not match the basis"
                        )));
                    }
                    let mut m = vec![0.0; o.spec.len()];
                    for (ck, row) in c.iter().zip(&o.coeffs) {
                        for (mq, rq) in m.iter_mut().zip(row) {
                            *mq += ck * rq;
                        }
                    }
                    monomial_coefficients[j] = Some(m);
                }
                (None, false, _) => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "reaction {j}: coefficients present exactly for regressed reactions"
                    )))
                }
            }
        }
        Ok(Self {
            projection,
            final_time,
            classes,
            nu_bar,
            ortho,
            coefficients,
            monomial_coefficients,
            residuals,
            hull,
            extrapolations: AtomicU64::new(0),
        })
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn reaction_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, j: usize) -> &ReactionClass {
        &self.classes[j]
    }

    pub fn nu_bar(&self, j: usize) -> &[i64] {
        &self.nu_bar[j]
    }

    pub fn j_mp(&self) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&j| matches!(self.classes[j], ReactionClass::Regressed))
            .collect()
    }

    pub fn ortho_basis(&self) -> Option<&OrthoBasis> {
        self.ortho.as_ref()
    }

    pub fn coefficients(&self, j: usize) -> Option<&[f64]> {
        self.coefficients[j].as_deref()
    }

    /// Mean squared residual of the fit of reaction `j`.
    pub fn residual(&self, j: usize) -> Option<f64> {
        self.residuals[j]
    }

    pub fn sample_hull(&self) -> &[(i64, i64)] {
        &self.hull
    }

    /// Queries outside the sampled region so far.
    pub fn extrapolated_queries(&self) -> u64 {
        self.extrapolations.load(Ordering::Relaxed)
    }

    /// Projected propensity `abar_j(t, s)`, clamped below at 0. Regressed
    /// reactions queried outside the sampled region are counted.
    #[inline]
    pub fn eval(&self, j: usize, t: f64, s: &[i64]) -> f64 {
        if matches!(self.classes[j], ReactionClass::Regressed) && self.outside_hull(t, s) {
            self.extrapolations.fetch_add(1, Ordering::Relaxed);
        }
        self.eval_uncounted(j, t, s)
    }

    fn outside_hull(&self, t: f64, s: &[i64]) -> bool {
        !(0.0..=self.final_time).contains(&t)
            || s.iter()
                .zip(&self.hull)
                .any(|(&v, &(lo, hi))| v < lo || v > hi)
    }

    pub fn eval_uncounted(&self, j: usize, t: f64, s: &[i64]) -> f64 {
        match &self.classes[j] {
            ReactionClass::Inactive => 0.0,
            ReactionClass::ClosedForm { rate, terms } => {
                let mut v = *rate;
                for &(r, alpha) in terms {
                    v *= falling_factorial(s[r], alpha);
                }
                v.max(0.0)
            }
            ReactionClass::Regressed => {
                let (Some(o), Some(m)) = (&self.ortho, &self.monomial_coefficients[j]) else {
                    return 0.0;
                };
                let mut v = 0.0;
                for (e, &c) in o.spec.exponents().iter().zip(m) {
                    if c == 0.0 {
                        continue;
                    }
                    let mut term = c * t.powi(e[0] as i32);
                    for ((&sr, &sc), &er) in s.iter().zip(&o.scale).zip(&e[1..]) {
                        if er > 0 {
                            term *= (sr as f64 / sc).powi(er as i32);
                        }
                    }
                    v += term;
                }
                v.max(0.0)
            }
        }
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let ints = |v: &[i64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let floats = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(out, "final_time {:e}", self.final_time);
        let _ = writeln!(
            out,
            "projection {} {}",
            self.projection.dims(),
            self.projection.full_dims()
        );
        for r in self.projection.rows() {
            let _ = writeln!(out, "row {}", ints(r));
        }
        let hull: Vec<i64> = self.hull.iter().flat_map(|&(a, b)| [a, b]).collect();
        let _ = writeln!(out, "hull {}", ints(&hull));
        match &self.ortho {
            None => {
                let _ = writeln!(out, "basis 0");
            }
            Some(o) => {
                let _ = writeln!(out, "basis {}", o.spec.len());
                for e in o.spec.exponents() {
                    let e: Vec<i64> = e.iter().map(|&v| v as i64).collect();
                    let _ = writeln!(out, "exp {}", ints(&e));
                }
                let _ = writeln!(out, "scale {}", floats(&o.scale));
                let kept: Vec<i64> = o.kept.iter().map(|&k| k as i64).collect();
                let _ = writeln!(out, "kept {}", ints(&kept));
                for row in &o.coeffs {
                    let _ = writeln!(out, "ortho {}", floats(row));
                }
            }
        }
        let _ = writeln!(out, "reactions {}", self.classes.len());
        for (j, class) in self.classes.iter().enumerate() {
            let nu = ints(&self.nu_bar[j]);
            match class {
                ReactionClass::Inactive => {
                    let _ = writeln!(out, "inactive {nu}");
                }
                ReactionClass::ClosedForm { rate, terms } => {
                    let t: Vec<String> = terms.iter().map(|(r, a)| format!("{r}:{a}")).collect();
                    let _ = writeln!(out, "closed {nu} | {rate:e} {}", t.join(" "));
                }
                ReactionClass::Regressed => {
                    let c = self.coefficients[j].as_deref().unwrap_or(&[]);
                    let res = self.residuals[j].unwrap_or(f64::NAN);
                    let _ = writeln!(out, "regressed {nu} | {res:e} {}", floats(c));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let what = "MP model";
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        let mut next = |key: &str| -> Result<Vec<String>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(what, format!("missing `{key}` line")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::parse(
                    what,
                    format!("expected `{key}`, got `{line}`"),
                ));
            }
            Ok(it.map(str::to_owned).collect())
        };
        let header = next(MODEL_MAGIC)?;
        if header != [MODEL_VERSION.to_string()] {
            return Err(Error::parse(
                what,
                format!("unsupported version {header:?}"),
            ));
        }
        let final_time = parse_one::<f64>(&next("final_time")?, what)?;
        let dims = parse_all::<usize>(&next("projection")?, what)?;
        if dims.len() != 2 {
            return Err(Error::parse(what, "projection line needs two sizes"));
        }
        let mut rows = Vec::with_capacity(dims[0]);
        for _ in 0..dims[0] {
            rows.push(parse_all::<i64>(&next("row")?, what)?);
        }
        let projection = Projection::from_rows(rows)?;
        if projection.full_dims() != dims[1] {
            return Err(Error::parse(what, "projection width mismatch"));
        }
        let hull_raw = parse_all::<i64>(&next("hull")?, what)?;
        if hull_raw.len() != 2 * projection.dims() {
            return Err(Error::parse(what, "hull needs two bounds per coordinate"));
        }
        let hull = hull_raw.chunks(2).map(|c| (c[0], c[1])).collect();
        let nbasis = parse_one::<usize>(&next("basis")?, what)?;
        let ortho = if nbasis == 0 {
            None
        } else {
            let mut exps = Vec::with_capacity(nbasis);
            for _ in 0..nbasis {
                exps.push(parse_all::<u32>(&next("exp")?, what)?);
            }
            let spec = BasisSpec::new(exps)?;
            let scale = parse_all::<f64>(&next("scale")?, what)?;
            let kept = parse_all::<usize>(&next("kept")?, what)?;
            let mut coeffs = Vec::with_capacity(kept.len());
            for _ in 0..kept.len() {
                let row = parse_all::<f64>(&next("ortho")?, what)?;
                if row.len() != nbasis {
                    return Err(Error::parse(what, "orthobasis row has the wrong length"));
                }
                coeffs.push(row);
            }
            if scale.len() != projection.dims() || kept.iter().any(|&k| k >= nbasis) {
                return Err(Error::parse(what, "inconsistent basis record"));
            }
            Some(OrthoBasis {
                spec,
                scale,
                kept,
                coeffs,
            })
        };
        let jn = parse_one::<usize>(&next("reactions")?, what)?;
        let mut classes = Vec::with_capacity(jn);
        let mut nu_bar = Vec::with_capacity(jn);
        let mut coefficients = Vec::with_capacity(jn);
        let mut residuals = Vec::with_capacity(jn);
        for j in 0..jn {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(what, format!("missing reaction {j}")))?;
            let (head, tail) = match line.split_once('|') {
                Some((h, t)) => (h, Some(t)),
                None => (line, None),
            };
            let mut it = head.split_whitespace();
            let kind = it.next().unwrap_or("");
            let nu: Vec<String> = it.map(str::to_owned).collect();
            let nu = parse_all::<i64>(&nu, what)?;
            if nu.len() != projection.dims() {
                return Err(Error::parse(
                    what,
                    format!("reaction {j}: jump has the wrong length"),
                ));
            }
            let rest: Vec<String> = tail
                .map(|t| t.split_whitespace().map(str::to_owned).collect())
                .unwrap_or_default();
            match kind {
                "inactive" => {
                    classes.push(ReactionClass::Inactive);
                    coefficients.push(None);
                    residuals.push(None);
                }
                "closed" => {
                    let rate = parse_one::<f64>(&rest[..rest.len().min(1)], what)?;
                    let mut terms = Vec::new();
                    for t in rest.iter().skip(1) {
                        let (r, a) = t
                            .split_once(':')
                            .ok_or_else(|| Error::parse(what, format!("bad term `{t}`")))?;
                        let r: usize = r
                            .parse()
                            .map_err(|_| Error::parse(what, format!("bad term `{t}`")))?;
                        let a: u32 = a
                            .parse()
                            .map_err(|_| Error::parse(what, format!("bad term `{t}`")))?;
                        if r >= projection.dims() {
                            return Err(Error::parse(what, format!("term `{t}` out of range")));
                        }
                        terms.push((r, a));
                    }
                    classes.push(ReactionClass::ClosedForm { rate, terms });
                    coefficients.push(None);
                    residuals.push(None);
                }
                "regressed" => {
                    let vals = parse_all::<f64>(&rest, what)?;
                    if vals.is_empty() {
                        return Err(Error::parse(
                            what,
                            format!("reaction {j}: missing residual"),
                        ));
                    }
                    classes.push(ReactionClass::Regressed);
                    residuals.push(Some(vals[0]));
                    coefficients.push(Some(vals[1..].to_vec()));
                }
                other => {
                    return Err(Error::parse(
                        what,
                        format!("unknown reaction kind `{other}`"),
                    ))
                }
            }
            nu_bar.push(nu);
        }
        if lines.next().is_some() {
            return Err(Error::parse(what, "trailing data after last reaction"));
        }
        Self::assemble(
            projection,
            final_time,
            classes,
            nu_bar,
            ortho,
            coefficients,
            residuals,
            hull,
        )
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Checks the model against the network it will drive.
    pub fn check_network(&self, net: &ReactionNetwork) -> Result<()> {
        if self.projection.full_dims() != net.species_count()
            || self.reaction_count() != net.reaction_count()
        {
            return Err(Error::Config(format!(
                "model was fitted for {} species and {} reactions, network has {} and {}",
                self.projection.full_dims(),
                self.reaction_count(),
                net.species_count(),
                net.reaction_count()
            )));
        }
        for j in 0..net.reaction_count() {
            if self.projection.apply(net.stoichiometry(j)) != self.nu_bar[j] {
                return Err(Error::Config(format!(
                    "model jump of reaction {j} does not match the network"
                )));
            }
        }
        Ok(())
    }
}

impl LatticeDynamics for MpModel {
    fn dims(&self) -> usize {
        self.projection.dims()
    }

    fn reaction_count(&self) -> usize {
        self.classes.len()
    }

    fn jump(&self, j: usize) -> &[i64] {
        &self.nu_bar[j]
    }

    fn rates_into(&self, t: f64, s: &[i64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.eval_uncounted(j, t, s);
        }
    }

    fn time_homogeneous(&self) -> bool {
        self.ortho.is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::michaelis_menten;

    fn death() -> ReactionNetwork {
        ReactionNetwork::new(vec!["X".into()], vec![vec![1]], vec![vec![0]], vec![0.7]).unwrap()
    }

    #[test]
    fn identity_projection_reproduces_linear_propensity() {
        let net = death();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let paths = generate_regression_paths(&net, &[30], &grid, 200, 5).unwrap();
        let proj = Projection::identity(1).unwrap();
        let opts = FitOptions {
            force_regression: true,
        };
        let m = fit_mp(&paths, &grid, &BasisSpec::tensor(1, 2), &proj, &net, &opts).unwrap();
        assert!(m.residual(0).unwrap() < 1e-16);
        for p in paths.iter().take(20) {
            for n in 0..16 {
                let x = p.state(n)[0];
                let v = m.eval(0, grid.time(n), &[x]);
                assert!((v - 0.7 * x as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn closed_form_reactions_are_exact() {
        let p = michaelis_menten();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let paths = generate_regression_paths(&p.network, &p.initial_state, &grid, 50, 1).unwrap();
        let proj = Projection::canonical(4, &[2]).unwrap();
        let m = fit_mp(
            &paths,
            &grid,
            &BasisSpec::tensor(1, 2),
            &proj,
            &p.network,
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(m.eval(1, 0.3, &[7]), 0.005 * 7.0);
        assert_eq!(m.eval(2, 0.9, &[40]), 0.01 * 40.0);
        assert_eq!(m.j_mp(), vec![0]);
    }

    #[test]
    fn text_round_trip() {
        let p = michaelis_menten();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let paths = generate_regression_paths(&p.network, &p.initial_state, &grid, 50, 1).unwrap();
        let proj = Projection::canonical(4, &[2]).unwrap();
        let m = fit_mp(
            &paths,
            &grid,
            &BasisSpec::tensor(1, 2),
            &proj,
            &p.network,
            &FitOptions::default(),
        )
        .unwrap();
        let back = MpModel::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.to_text(), m.to_text());
        for s in 0..40 {
            assert_eq!(
                m.eval_uncounted(0, 0.37, &[s]),
                back.eval_uncounted(0, 0.37, &[s])
            );
        }
    }

    #[test]
    fn negative_fits_are_clamped_and_extrapolation_counted() {
        let proj = Projection::identity(1).unwrap();
        let ortho = OrthoBasis {
            spec: BasisSpec::tensor(1, 0),
            scale: vec![1.0],
            kept: vec![0],
            coeffs: vec![vec![1.0]],
        };
        let m = MpModel::assemble(
            proj,
            1.0,
            vec![ReactionClass::Regressed],
            vec![vec![-1]],
            Some(ortho),
            vec![Some(vec![-0.3])],
            vec![Some(0.0)],
            vec![(0, 5)],
        )
        .unwrap();
        assert_eq!(m.eval(0, 0.5, &[2]), 0.0);
        assert_eq!(m.extrapolated_queries(), 0);
        m.eval(0, 0.5, &[9]);
        assert_eq!(m.extrapolated_queries(), 1);
    }
}
