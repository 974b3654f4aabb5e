use super::Trajectory;
use crate::quad::adaptive_simpson;

/// Indicator samples `ρ_σ(t_k) = χ(σ(t_k) = σ)` on a time grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OccupationPath {
    pub grid: Vec<f64>,
    /// `rho[σ][k]`.
    pub rho: Vec<Vec<f64>>,
}

impl OccupationPath {
    pub fn n_states(&self) -> usize {
        self.rho.len()
    }

    /// Per-grid-point vectors `(ρ_σ(t_k))_σ`.
    pub fn by_time(&self) -> Vec<Vec<f64>> {
        (0..self.grid.len())
            .map(|k| self.rho.iter().map(|r| r[k]).collect())
            .collect()
    }
}

/// Sample the chemical indicator of `trajectory` on `grid`, with the
/// post-jump value at jump instants.
pub fn occupation_path(trajectory: &Trajectory, n_states: usize, grid: &[f64]) -> OccupationPath {
    let mut rho = vec![vec![0.0; grid.len()]; n_states];
    for (k, &t) in grid.iter().enumerate() {
        rho[trajectory.state_at(t)][k] = 1.0;
    }
    OccupationPath {
        grid: grid.to_vec(),
        rho,
    }
}

/// `∫ f(t) χ(σ(t) = σ) dt` over the trajectory's time span, integrating `f`
/// on each sojourn in `sigma` separately.
pub fn time_average<F: Fn(f64) -> f64>(trajectory: &Trajectory, f: F, sigma: usize) -> f64 {
    trajectory
        .sojourns()
        .filter(|s| s.0 == sigma)
        .map(|(_, a, b)| adaptive_simpson(&f, a, b, 1e-12))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::DensePath;
    use crate::quad::{cumulative_trapezoid, uniform_grid};
    use crate::rng::SeedInfo;
    use approx::assert_abs_diff_eq;

    fn synthetic(jumps: Vec<f64>, states: Vec<usize>, horizon: f64) -> Trajectory {
        Trajectory {
            x0: vec![0.0],
            t0: 0.0,
            horizon,
            jump_times: jumps,
            chem_states: states,
            path: DensePath::new(1),
            final_x: vec![0.0],
            seed: SeedInfo { master: 0, stream: 0 },
        }
    }

    #[test]
    fn no_jump_indicator_is_constant() {
        let tr = synthetic(vec![], vec![1], 1.0);
        let occ = occupation_path(&tr, 2, &uniform_grid(1.0, 10));
        assert!(occ.rho[1].iter().all(|&v| v == 1.0));
        assert!(occ.rho[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indicator_switches_at_first_grid_point_after_jump() {
        let tr = synthetic(vec![0.35], vec![0, 1], 1.0);
        let grid = uniform_grid(1.0, 10);
        let occ = occupation_path(&tr, 2, &grid);
        for (k, &t) in grid.iter().enumerate() {
            assert_eq!(occ.rho[1][k], if t >= 0.35 { 1.0 } else { 0.0 });
        }
        // A grid point exactly at the jump takes the post-jump state.
        let tr = synthetic(vec![0.5], vec![0, 1], 1.0);
        let occ = occupation_path(&tr, 2, &grid);
        assert_eq!(occ.rho[1][5], 1.0);
        assert_eq!(occ.by_time()[4], vec![1.0, 0.0]);
    }

    #[test]
    fn trapezoid_occupation_vs_sojourn_sum() {
        let tr = synthetic(vec![0.113, 0.52, 0.871], vec![0, 1, 0, 1], 1.0);
        let exact = tr.occupation_time(1);
        for &n in &[100usize, 1000, 10000] {
            let grid = uniform_grid(1.0, n);
            let occ = occupation_path(&tr, 2, &grid);
            let trap = *cumulative_trapezoid(&grid, &occ.rho[1]).last().unwrap();
            // Each switch costs at most one cell.
            assert!((trap - exact).abs() <= 3.0 / n as f64, "n = {n}");
        }
    }

    #[test]
    fn time_average_cases() {
        let tr = synthetic(vec![], vec![0], 2.5);
        assert_abs_diff_eq!(time_average(&tr, |_| 1.0, 0), 2.5, epsilon = 1e-14);
        let tr = synthetic(vec![1.0], vec![0, 1], 3.0);
        assert_abs_diff_eq!(time_average(&tr, |t| t, 0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(time_average(&tr, |t| t, 1), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn time_average_matches_refined_grid() {
        let tr = synthetic(vec![0.21, 0.4, 0.77, 0.9], vec![0, 1, 0, 1, 0], 1.0);
        let f = |t: f64| (3.0 * t).cos() + t * t;
        let exact = time_average(&tr, f, 1);
        let estimate = |n: usize| {
            let grid = uniform_grid(1.0, n);
            let occ = occupation_path(&tr, 2, &grid);
            (0..n).map(|k| (grid[k + 1] - grid[k]) * f(grid[k]) * occ.rho[1][k]).sum::<f64>()
        };
        let errs: Vec<f64> = [100, 1000, 10000].iter().map(|&n| (estimate(n) - exact).abs()).collect();
        assert!(errs[2] < errs[0]);
        assert!(errs[2] < 1e-3);
    }
}
