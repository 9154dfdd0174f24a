//! Dormand-Prince 5(4) with step-size control.
//!
//! Integrates `y' = f(tau, y)` forward in `tau`, calling `post_step` on every
//! accepted state (used for the positivity floor) and `record` with the
//! accepted `(tau, y)` pairs.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub initial_step: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Integrates from `0` to `horizon`. The right-hand side may fail, which
/// is treated as a rejected step.
pub fn integrate<F, P, R>(
    mut rhs: F,
    y0: &[f64],
    horizon: f64,
    opts: &OdeOptions,
    mut post_step: P,
    mut record: R,
) -> Result<OdeStats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    P: FnMut(&mut [f64]),
    R: FnMut(f64, &[f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut stats = OdeStats::default();
    let mut tau = 0.0;
    let mut h = opts
        .initial_step
        .unwrap_or(horizon * 1e-3)
        .min(opts.max_step)
        .min(horizon);
    let h_min = horizon * 1e-14;
    record(0.0, &y);

    while tau < horizon {
        let last = tau + h >= horizon * (1.0 - 1e-14);
        if last {
            h = horizon - tau;
        }
        let mut ok = true;
        for s in 0..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (r, kr) in k.iter().enumerate().take(s) {
                    acc += A[s][r] * kr[i];
                }
                stage[i] = y[i] + h * acc;
            }
            stats.rhs_evals += 1;
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            if rhs(tau + C[s] * h, &stage, &mut tail[0]).is_err() {
                ok = false;
                break;
            }
        }
        if ok {
            // the seventh stage point is the fifth-order solution
            y_new.copy_from_slice(&stage);
            let mut err = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (s, ks) in k.iter().enumerate() {
                    e += E[s] * ks[i];
                }
                let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
                let r = h * e / scale;
                err += r * r;
            }
            let err = (err / n as f64).sqrt();
            if err.is_finite() && err <= 1.0 {
                tau = if last { horizon } else { tau + h };
                std::mem::swap(&mut y, &mut y_new);
                post_step(&mut y);
                record(tau, &y);
                stats.accepted += 1;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = (h * factor).min(opts.max_step);
                continue;
            }
            stats.rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h *= factor;
        } else {
            stats.rejected += 1;
            h *= 0.25;
        }
        if h < h_min {
            return Err(Error::StepSizeCollapse { step: h, time: tau });
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = OdeOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_step: 0.5,
            initial_step: None,
        };
        let mut last = (0.0, vec![]);
        integrate(
            |_, y, dy| {
                dy[0] = -2.0 * y[0];
                dy[1] = y[0];
                Ok(())
            },
            &[1.0, 0.0],
            1.0,
            &opts,
            |_| {},
            |t, y| last = (t, y.to_vec()),
        )
        .unwrap();
        assert_eq!(last.0, 1.0);
        assert!((last.1[0] - (-2f64).exp()).abs() < 1e-8);
        assert!((last.1[1] - (1.0 - (-2f64).exp()) / 2.0).abs() < 1e-8);
    }

    #[test]
    fn time_dependent_rhs() {
        let opts = OdeOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: 0.1,
            initial_step: None,
        };
        let mut end = 0.0;
        integrate(
            |t, _, dy| {
                dy[0] = (3.0 * t).cos();
                Ok(())
            },
            &[0.0],
            2.0,
            &opts,
            |_| {},
            |_, y| end = y[0],
        )
        .unwrap();
        assert!((end - (6f64).sin() / 3.0).abs() < 1e-8);
    }

    #[test]
    fn persistent_rhs_failure_collapses() {
        let opts = OdeOptions {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            max_step: 0.1,
            initial_step: None,
        };
        let r = integrate(
            |_, _, _| Err(Error::Integrity("negative".into())),
            &[1.0],
            1.0,
            &opts,
            |_| {},
            |_, _| {},
        );
        assert!(matches!(r, Err(Error::StepSizeCollapse { .. })));
    }
}
