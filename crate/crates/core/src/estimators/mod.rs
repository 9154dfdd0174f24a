//! Monte Carlo estimation, summary statistics and tolerance planning.
//!
//! Samples are always reduced in fixed chunks of [`CHUNK`] paths whose
//! moment records are merged left to right. The result therefore does not
//! depend on how many threads produced the chunks.

mod observable;
mod report;

pub use observable::Observable;
pub use report::{config_key, merge_reports, EstimatorReport, Moments, ReportSummary};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::simulate::WorkCounters;

/// Paths per reduction chunk.
pub const CHUNK: u64 = 1024;

/// Default pilot size for variance estimates used in planning.
pub const DEFAULT_PILOT_PATHS: u64 = 1000;

/// Two-sided normal quantile `C_alpha` at level `1 - alpha/2`.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence parameter must lie in (0, 1), got {alpha}"
        )));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(1.0 - alpha / 2.0))
}

/// Evaluates `sample(m, counters)` for `m = 0..count` in parallel and
/// reduces with the fixed chunk tree.
pub fn run_chunked<F>(
    count: u64,
    config_key: u64,
    c_alpha: f64,
    sample: F,
) -> Result<EstimatorReport>
where
    F: Fn(u64, &mut WorkCounters) -> Result<f64> + Sync,
{
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Result<(Moments, WorkCounters)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut moments = Moments::default();
            let mut work = WorkCounters::default();
            for m in c * CHUNK..((c + 1) * CHUNK).min(count) {
                moments.push(sample(m, &mut work)?);
            }
            Ok((moments, work))
        })
        .collect();
    let mut report = EstimatorReport::empty(config_key, c_alpha);
    for part in parts {
        let (moments, work) = part?;
        report.moments = report.moments.merge(&moments);
        report.work.add(&work);
    }
    Ok(report)
}

/// Standard MC estimator of `E[g(X_N)]` over a stream of final states.
pub fn mc_estimate<I, S>(
    finals: I,
    g: &Observable,
    config_key: u64,
    c_alpha: f64,
) -> Result<EstimatorReport>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[i64]>,
{
    let mut report = EstimatorReport::empty(config_key, c_alpha);
    let mut chunk = Moments::default();
    for x in finals {
        chunk.push(g.eval(x.as_ref()));
        if chunk.count == CHUNK {
            report.moments = report.moments.merge(&chunk);
            chunk = Moments::default();
        }
    }
    report.moments = report.moments.merge(&chunk);
    if report.paths() < 2 {
        return Err(Error::InvalidArgument(
            "at least two samples are needed for an estimate".into(),
        ));
    }
    Ok(report)
}

/// Reduces precomputed samples with the same chunk tree as [`run_chunked`].
pub fn estimate_samples(samples: &[f64], config_key: u64, c_alpha: f64) -> EstimatorReport {
    let mut report = EstimatorReport::empty(config_key, c_alpha);
    for chunk in samples.chunks(CHUNK as usize) {
        report.moments = report.moments.merge(&Moments::from_slice(chunk));
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePlan {
    pub tol: f64,
    pub alpha: f64,
    pub c_bias: f64,
    pub c_alpha: f64,
    pub variance: f64,
    /// Step size that splits the tolerance evenly into bias and statistical error.
    pub dt_star: f64,
    pub paths_star: u64,
}

/// Step size `TOL / (2 C)` and sample size `ceil(C_alpha^2 * 4 Var / TOL^2)`.
pub fn plan_tolerance(tol: f64, alpha: f64, c_bias: f64, variance: f64) -> Result<TolerancePlan> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "TOL must be positive, got {tol}"
        )));
    }
    if !(c_bias > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bias constant must be positive, got {c_bias}"
        )));
    }
    if !(variance >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variance must be nonnegative, got {variance}"
        )));
    }
    let c_alpha = normal_quantile(alpha)?;
    let paths = (c_alpha * c_alpha * 4.0 * variance / (tol * tol)).ceil();
    Ok(TolerancePlan {
        tol,
        alpha,
        c_bias,
        c_alpha,
        variance,
        dt_star: tol / (2.0 * c_bias),
        paths_star: paths as u64,
    })
}

/// Richardson estimate of the weak-error constant from estimates at `dt`
/// and `dt / 2`: with bias `C dt`, the two means differ by `C dt / 2`.
pub fn calibrate_bias_constant(mean_coarse: f64, mean_fine: f64, dt_coarse: f64) -> f64 {
    2.0 * (mean_coarse - mean_fine).abs() / dt_coarse
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn bernoulli(p: f64, n: usize, seed: u64) -> Vec<Vec<i64>> {
        let mut rng = RngStream::new(seed, 0);
        (0..n).map(|_| vec![i64::from(rng.uniform() < p)]).collect()
    }

    #[test]
    fn all_ones() {
        let xs = vec![vec![1i64]; 50];
        let r = mc_estimate(&xs, &Observable::Count { species: 0 }, 0, 1.96).unwrap();
        assert_eq!(r.mean(), 1.0);
        assert_eq!(r.sample_variance(), 0.0);
        assert_eq!(r.squared_cv(), 0.0);
    }

    #[test]
    fn needs_two_samples() {
        let xs = vec![vec![1i64]];
        assert!(mc_estimate(&xs, &Observable::Count { species: 0 }, 0, 1.96).is_err());
    }

    #[test]
    fn bernoulli_half_moments() {
        let xs = bernoulli(0.5, 100_000, 3);
        let r = mc_estimate(&xs, &Observable::above(0, 0.5), 0, 1.96).unwrap();
        // (1 - p) / p = 1 and (1 - 3p + 3p^2) / (p (1 - p)) = 1 at p = 0.5
        assert!((r.squared_cv() - 1.0).abs() < 0.05, "{}", r.squared_cv());
        assert!((r.kurtosis() - 1.0).abs() < 0.05, "{}", r.kurtosis());
    }

    #[test]
    fn bernoulli_kurtosis_small_p() {
        let p: f64 = 0.1;
        let xs = bernoulli(p, 100_000, 4);
        let r = mc_estimate(&xs, &Observable::above(0, 0.5), 0, 1.96).unwrap();
        let expected = (1.0 - 3.0 * p + 3.0 * p * p) / (p * (1.0 - p));
        assert!((r.kurtosis() / expected - 1.0).abs() < 0.05);
        assert!((r.squared_cv() / ((1.0 - p) / p) - 1.0).abs() < 0.05);
    }

    #[test]
    fn chunked_and_streaming_reductions_agree_bitwise() {
        let mut rng = RngStream::new(8, 0);
        let ys: Vec<f64> = (0..5000).map(|_| rng.uniform()).collect();
        let a = estimate_samples(&ys, 5, 1.96);
        let b = run_chunked(ys.len() as u64, 5, 1.96, |m, _| Ok(ys[m as usize])).unwrap();
        assert_eq!(a, b);
        let states: Vec<Vec<i64>> = ys.iter().map(|&y| vec![(y * 1e6) as i64]).collect();
        let c = mc_estimate(&states, &Observable::Count { species: 0 }, 5, 1.96).unwrap();
        let d = run_chunked(states.len() as u64, 5, 1.96, |m, _| {
            Ok(states[m as usize][0] as f64)
        })
        .unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn confidence_interval_coverage() {
        let p = 0.3;
        let c_alpha = normal_quantile(0.05).unwrap();
        let mut covered = 0;
        for rep in 0..200 {
            let xs = bernoulli(p, 2000, 100 + rep);
            let r = mc_estimate(&xs, &Observable::above(0, 0.5), 0, c_alpha).unwrap();
            if (r.mean() - p).abs() <= r.ci_halfwidth() {
                covered += 1;
            }
        }
        assert!(covered >= 180, "covered {covered}/200");
    }

    #[test]
    fn planning_values() {
        let c = normal_quantile(0.05).unwrap();
        assert!((c - 1.96).abs() < 1e-3);
        let plan = plan_tolerance(0.1, 0.05, 1.0, 0.0).unwrap();
        assert!((plan.dt_star - 0.05).abs() < 1e-15);
        assert_eq!(plan.paths_star, 0);
        // 1.96^2 * 4 * 1e-5 / 1e-4 = 1.537
        assert_eq!(plan_tolerance(0.01, 0.05, 1.0, 1e-5).unwrap().paths_star, 2);
        // 1.96^2 * 4 * 1e-2 / 1e-4 = 1536.6
        assert_eq!(
            plan_tolerance(0.01, 0.05, 1.0, 1e-2).unwrap().paths_star,
            1537
        );
        assert!(plan_tolerance(0.0, 0.05, 1.0, 1.0).is_err());
        assert!(plan_tolerance(0.1, 0.05, -1.0, 1.0).is_err());
    }

    #[test]
    fn richardson_constant() {
        // bias C dt with C = 3
        let exact = 2.0;
        let c = calibrate_bias_constant(exact + 3.0 * 0.1, exact + 3.0 * 0.05, 0.1);
        assert!((c - 3.0).abs() < 1e-12);
    }
}
