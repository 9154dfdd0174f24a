use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::WorkCounters;

/// Operation counts of the elementary steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitCosts {
    pub poisson: f64,
    pub propensity: f64,
    /// One polynomial evaluation; `None` means `|Lambda|`.
    pub polynomial: Option<f64>,
    pub likelihood: f64,
    pub control: f64,
}

impl Default for UnitCosts {
    fn default() -> Self {
        Self {
            poisson: 1.0,
            propensity: 1.0,
            polynomial: None,
            likelihood: 1.0,
            control: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelParams {
    pub basis_size: usize,
    pub final_time: f64,
    pub dt: f64,
    pub paths: u64,
    pub forward_paths: u64,
    pub species: usize,
    pub reactions: usize,
    pub regressed: usize,
    #[serde(default)]
    pub units: UnitCosts,
}

/// An exact operation count and its leading-order approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostTerm {
    pub exact: f64,
    pub dominant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub params: CostModelParams,
    pub steps: f64,
    /// Empirical inner product `C_inner`.
    pub inner_product: f64,
    /// One tau-leap path.
    pub tau_leap: CostTerm,
    pub gram_schmidt: CostTerm,
    pub l2_regression: CostTerm,
    /// `M W_TL + W_GS + W_L2`.
    pub projection: CostTerm,
    pub forward: CostTerm,
    /// Counters from actual runs, when supplied.
    pub measured: Option<WorkCounters>,
}

pub fn mp_cost_model(
    params: &CostModelParams,
    measured: Option<WorkCounters>,
) -> Result<CostReport> {
    if !(params.dt > 0.0 && params.final_time > 0.0) {
        return Err(Error::InvalidArgument(
            "step size and final time must be positive".into(),
        ));
    }
    if params.basis_size == 0 || params.reactions == 0 || params.species == 0 {
        return Err(Error::InvalidArgument(
            "basis size, species and reaction counts must be positive".into(),
        ));
    }
    if params.regressed > params.reactions {
        return Err(Error::InvalidArgument(
            "more regressed reactions than reactions".into(),
        ));
    }
    let u = &params.units;
    let n = params.final_time / params.dt;
    let m = params.paths as f64;
    let lam = params.basis_size as f64;
    let j = params.reactions as f64;
    let jmp = params.regressed as f64;
    let d = params.species as f64;
    let c_pol = u.polynomial.unwrap_or(lam);

    let tl = CostTerm {
        exact: n * (u.propensity + j * u.poisson + d * (j + 2.0)),
        dominant: n * j * u.poisson,
    };
    // with no paths the inner product has nothing to sum
    let c_inner = if m == 0.0 {
        0.0
    } else {
        n * m * (2.0 + 2.0 * c_pol) + 3.0
    };
    let gs = if m == 0.0 {
        CostTerm {
            exact: 0.0,
            dominant: 0.0,
        }
    } else {
        CostTerm {
            exact: lam * (c_inner + lam + 1.0) + (lam - 1.0) * lam / 2.0 * (2.0 * lam + c_inner),
            dominant: m * n * lam.powi(3),
        }
    };
    let mn = m * n;
    let l2 = CostTerm {
        exact: mn * (lam * c_pol + jmp * u.propensity + lam * lam + jmp * lam)
            + if m == 0.0 { 0.0 } else { jmp * lam.powi(3) },
        dominant: mn * (lam * lam + jmp * lam),
    };
    let projection = CostTerm {
        exact: m * tl.exact + gs.exact + l2.exact,
        dominant: m * tl.dominant + gs.dominant + l2.dominant,
    };
    let fw = params.forward_paths as f64 * n * (j * u.poisson + u.likelihood + jmp * u.control);
    Ok(CostReport {
        params: *params,
        steps: n,
        inner_product: c_inner,
        tau_leap: tl,
        gram_schmidt: gs,
        l2_regression: l2,
        projection,
        forward: CostTerm {
            exact: fw,
            dominant: fw,
        },
        measured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(paths: u64) -> CostModelParams {
        CostModelParams {
            basis_size: 9,
            final_time: 1.0,
            dt: 1.0 / 16.0,
            paths,
            forward_paths: 1000,
            species: 4,
            reactions: 3,
            regressed: 1,
            units: UnitCosts::default(),
        }
    }

    #[test]
    fn no_paths_no_path_costs() {
        let r = mp_cost_model(&params(0), None).unwrap();
        assert_eq!(r.gram_schmidt.exact, 0.0);
        assert_eq!(r.l2_regression.exact, 0.0);
        assert_eq!(r.projection.exact, 0.0);
    }

    #[test]
    fn gram_schmidt_dominant_term() {
        let r = mp_cost_model(&params(10_000), None).unwrap();
        // 9 << 16 * 1e4
        assert!(9.0 < 1e-3 * r.steps * 1e4);
        let ratio = r.gram_schmidt.exact / r.gram_schmidt.dominant;
        assert!(ratio > 0.5 && ratio < 2.0, "{ratio}");
        assert!(r.gram_schmidt.exact > r.l2_regression.exact);
        assert!(r.gram_schmidt.exact > 1e4 * r.tau_leap.exact);
    }

    #[test]
    fn hand_evaluated_tau_leap() {
        let r = mp_cost_model(&params(1), None).unwrap();
        // 16 * (1 + 3 + 4 * 5)
        assert_eq!(r.tau_leap.exact, 384.0);
        assert_eq!(r.tau_leap.dominant, 48.0);
        assert_eq!(r.forward.exact, 1000.0 * 16.0 * (3.0 + 1.0 + 1.0));
    }
}
