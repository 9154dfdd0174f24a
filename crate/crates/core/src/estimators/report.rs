use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simulate::WorkCounters;

/// Streaming central moments up to fourth order (sums, not averages).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        *self = self.merge(&Moments {
            count: 1,
            mean: x,
            ..Moments::default()
        });
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Moments::default();
        for &x in xs {
            m.push(x);
        }
        m
    }

    /// Exact pairwise combination of two sample sets.
    pub fn merge(&self, other: &Moments) -> Moments {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d_n = delta / n;
        let d2 = delta * delta;
        let mean = self.mean + nb * d_n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * d_n * (na * other.m2 - nb * self.m2);
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d_n * (na * other.m3 - nb * self.m3);
        Moments {
            count: self.count + other.count,
            mean,
            m2,
            m3,
            m4,
        }
    }
}

/// Stable 64-bit key identifying the observable and configuration a report
/// was built for.
pub fn config_key(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub config_key: u64,
    /// Normal quantile used for the confidence half-width.
    pub c_alpha: f64,
    pub moments: Moments,
    pub work: WorkCounters,
}

impl EstimatorReport {
    pub fn empty(config_key: u64, c_alpha: f64) -> Self {
        Self {
            config_key,
            c_alpha,
            moments: Moments::default(),
            work: WorkCounters::default(),
        }
    }

    pub fn paths(&self) -> u64 {
        self.moments.count
    }

    pub fn mean(&self) -> f64 {
        self.moments.mean
    }

    /// Unbiased sample variance; NaN below two samples.
    pub fn sample_variance(&self) -> f64 {
        if self.moments.count < 2 {
            f64::NAN
        } else {
            self.moments.m2 / (self.moments.count - 1) as f64
        }
    }

    /// Variance over squared mean. `+inf` when the mean is zero (see
    /// [`Self::squared_cv_defined`]).
    pub fn squared_cv(&self) -> f64 {
        let mean = self.mean();
        if mean == 0.0 {
            f64::INFINITY
        } else {
            self.sample_variance() / (mean * mean)
        }
    }

    pub fn squared_cv_defined(&self) -> bool {
        self.mean() != 0.0
    }

    /// Non-excess fourth standardized moment `M sum (y - ybar)^4 / (sum (y - ybar)^2)^2`.
    /// NaN when all samples coincide.
    pub fn kurtosis(&self) -> f64 {
        let m = &self.moments;
        if m.m2 > 0.0 {
            m.count as f64 * m.m4 / (m.m2 * m.m2)
        } else {
            f64::NAN
        }
    }

    pub fn kurtosis_defined(&self) -> bool {
        self.moments.m2 > 0.0
    }

    pub fn standard_error(&self) -> f64 {
        (self.sample_variance() / self.paths() as f64).sqrt()
    }

    pub fn ci_halfwidth(&self) -> f64 {
        self.c_alpha * self.standard_error()
    }

    pub fn merge(&self, other: &EstimatorReport) -> Result<EstimatorReport> {
        if self.config_key != other.config_key {
            return Err(Error::ConfigMismatch {
                left: self.config_key,
                right: other.config_key,
            });
        }
        let mut work = self.work;
        work.add(&other.work);
        Ok(EstimatorReport {
            config_key: self.config_key,
            c_alpha: self.c_alpha,
            moments: self.moments.merge(&other.moments),
            work,
        })
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            paths: self.paths(),
            mean: self.mean(),
            variance: self.sample_variance(),
            squared_cv: self.squared_cv(),
            squared_cv_defined: self.squared_cv_defined(),
            kurtosis: self.kurtosis(),
            kurtosis_defined: self.kurtosis_defined(),
            ci_halfwidth: self.ci_halfwidth(),
            c_alpha: self.c_alpha,
            poisson_draws: self.work.poisson_draws,
            propensity_evals: self.work.propensity_evals,
            likelihood_updates: self.work.likelihood_updates,
        }
    }
}

/// Flattened, derived view of a report for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub paths: u64,
    pub mean: f64,
    pub variance: f64,
    pub squared_cv: f64,
    pub squared_cv_defined: bool,
    pub kurtosis: f64,
    pub kurtosis_defined: bool,
    pub ci_halfwidth: f64,
    pub c_alpha: f64,
    pub poisson_draws: u64,
    pub propensity_evals: u64,
    pub likelihood_updates: u64,
}

/// Merge two reports. See [`EstimatorReport::merge`].
pub fn merge_reports(a: &EstimatorReport, b: &EstimatorReport) -> Result<EstimatorReport> {
    a.merge(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>();
        (mean, c(2), c(3), c(4))
    }

    fn report(xs: &[f64]) -> EstimatorReport {
        EstimatorReport {
            config_key: 1,
            c_alpha: 1.96,
            moments: Moments::from_slice(xs),
            work: WorkCounters::default(),
        }
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let r = report(&[1.0, 2.0, 4.0]);
        let e = EstimatorReport::empty(1, 1.96);
        assert_eq!(r.merge(&e).unwrap(), r);
        assert_eq!(e.merge(&r).unwrap(), r);
    }

    #[test]
    fn merge_two_singletons() {
        let m = report(&[1.0]).merge(&report(&[0.0])).unwrap();
        assert_eq!(m.mean(), 0.5);
        assert_eq!(m.paths(), 2);
    }

    #[test]
    fn merge_rejects_mismatched_configs() {
        let mut b = report(&[1.0]);
        b.config_key = 2;
        assert!(matches!(
            report(&[0.0]).merge(&b),
            Err(Error::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn pooled_moments_match_single_pass() {
        let mut rng = crate::rng::RngStream::new(17, 0);
        let xs: Vec<f64> = (0..100).map(|_| rng.uniform() * 10.0 - 3.0).collect();
        let pooled = Moments::from_slice(&xs[..37]).merge(&Moments::from_slice(&xs[37..]));
        let (mean, m2, m3, m4) = brute(&xs);
        assert!(close(pooled.mean, mean, 1e-12));
        assert!(close(pooled.m2, m2, 1e-12));
        assert!(close(pooled.m3, m3, 1e-10));
        assert!(close(pooled.m4, m4, 1e-12));
    }

    #[test]
    fn constant_samples() {
        let r = report(&[1.0; 10]);
        assert_eq!(r.mean(), 1.0);
        assert_eq!(r.sample_variance(), 0.0);
        assert_eq!(r.squared_cv(), 0.0);
        assert!(!r.kurtosis_defined());
    }

    #[test]
    fn zero_mean_indicator_gives_infinite_marker() {
        let r = report(&[0.0; 10]);
        assert!(r.squared_cv().is_infinite());
        assert!(!r.squared_cv_defined());
    }

    proptest! {
        #[test]
        fn merge_is_associative(
            a in prop::collection::vec(-1e3f64..1e3, 1..40),
            b in prop::collection::vec(-1e3f64..1e3, 1..40),
            c in prop::collection::vec(-1e3f64..1e3, 1..40),
        ) {
            let (ra, rb, rc) = (report(&a), report(&b), report(&c));
            let left = ra.merge(&rb).unwrap().merge(&rc).unwrap();
            let right = ra.merge(&rb.merge(&rc).unwrap()).unwrap();
            let (l, r) = (left.moments, right.moments);
            prop_assert_eq!(l.count, r.count);
            let scale = l.mean.abs().max(1.0);
            prop_assert!((l.mean - r.mean).abs() <= 1e-12 * scale);
            prop_assert!(close(l.m2, r.m2, 1e-12));
            // third central sum can cancel to ~0; compare against m2^1.5
            prop_assert!((l.m3 - r.m3).abs() <= 1e-12 * l.m2.powf(1.5).max(1.0));
            prop_assert!(close(l.m4, r.m4, 1e-12));
        }
    }
}
