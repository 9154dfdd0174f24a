use super::MpModel;
use crate::network::TimeGrid;
use crate::poisson;
use crate::rng::RngStream;
use crate::simulate::{Path, WorkCounters};

/// Tau-leap path of the projected process with rates `abar_j(t_n, S_n)`.
pub fn mp_process_simulate(
    model: &MpModel,
    s0: &[i64],
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Path {
    let mut path = Path::with_capacity(s0.len(), grid.steps() + 1);
    let mut work = WorkCounters::default();
    surrogate_streaming(model, s0, grid, rng, &mut work, |_, s| path.push(s));
    path
}

/// Final state of a surrogate path.
pub fn mp_process_final(
    model: &MpModel,
    s0: &[i64],
    grid: &TimeGrid,
    rng: &mut RngStream,
    work: &mut WorkCounters,
) -> Vec<i64> {
    let mut last = s0.to_vec();
    surrogate_streaming(model, s0, grid, rng, work, |_, s| last.copy_from_slice(s));
    last
}

fn surrogate_streaming<F>(
    model: &MpModel,
    s0: &[i64],
    grid: &TimeGrid,
    rng: &mut RngStream,
    work: &mut WorkCounters,
    mut visit: F,
) where
    F: FnMut(usize, &[i64]),
{
    let dt = grid.dt();
    let jn = model.reaction_count();
    let active: Vec<usize> = (0..jn)
        .filter(|&j| model.nu_bar(j).iter().any(|&v| v != 0))
        .collect();
    let mut s = s0.to_vec();
    let mut rates = vec![0.0; jn];
    visit(0, &s);
    for n in 0..grid.steps() {
        let t = grid.time(n);
        for &j in &active {
            rates[j] = model.eval(j, t, &s);
        }
        work.propensity_evals += 1;
        for &j in &active {
            if rates[j] > 0.0 {
                work.poisson_draws += 1;
                let k = poisson::sample(rates[j] * dt, rng) as i64;
                if k > 0 {
                    for (v, nu) in s.iter_mut().zip(model.nu_bar(j)) {
                        *v += nu * k;
                    }
                }
            }
        }
        for v in s.iter_mut() {
            if *v < 0 {
                *v = 0;
            }
        }
        visit(n + 1, &s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ReactionNetwork;
    use crate::projection::{fit_mp, generate_regression_paths, BasisSpec, FitOptions, Projection};

    #[test]
    fn identity_projection_of_pure_death_matches_in_distribution() {
        let net = ReactionNetwork::new(vec!["X".into()], vec![vec![1]], vec![vec![0]], vec![1.0])
            .unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let paths = generate_regression_paths(&net, &[20], &grid, 500, 2).unwrap();
        let proj = Projection::identity(1).unwrap();
        let m = fit_mp(
            &paths,
            &grid,
            &BasisSpec::tensor(1, 2),
            &proj,
            &net,
            &FitOptions::default(),
        )
        .unwrap();
        let mut rng = RngStream::new(4, 0);
        let mut total = 0.0;
        let runs = 4000;
        for _ in 0..runs {
            let p = mp_process_simulate(&m, &[20], &grid, &mut rng);
            assert_eq!(p.len(), 17);
            total += p.last()[0] as f64;
        }
        // tau-leap mean 20 (1 - dt)^16
        let mean = 20.0 * (1.0 - 1.0 / 16.0f64).powi(16);
        assert!((total / runs as f64 - mean).abs() < 0.2);
    }
}
