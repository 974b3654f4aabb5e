use serde::{Deserialize, Serialize};

use super::j::{j_general, JSolution};
use super::LdpError;
use crate::io::{fmt_f64, parse_numeric_csv, CsvTable};
use crate::model::PdmpModel;
use crate::ode::{solve_dense, DensePath, OdeOptions};
use crate::quad::cumulative_trapezoid;
use crate::simulator::{OccupationPath, TiltSpec};

const SIMPLEX_TOL: f64 = 1e-9;

/// A mechanical path sampled on a grid together with an occupation density,
/// `ρ` held constant on each cell `[t_k, t_{k+1})` at its left value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPair {
    pub grid: Vec<f64>,
    /// `x[k]` at `grid[k]`.
    pub x: Vec<Vec<f64>>,
    /// `rho[k][σ]` at `grid[k]`.
    pub rho: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
}

impl PathPair {
    pub fn new(grid: Vec<f64>, x: Vec<Vec<f64>>, rho: Vec<Vec<f64>>) -> Result<Self, LdpError> {
        check_grid(&grid)?;
        if x.len() != grid.len() || rho.len() != grid.len() {
            return Err(LdpError::BadPath(format!(
                "{} grid points, {} x samples, {} rho samples",
                grid.len(),
                x.len(),
                rho.len()
            )));
        }
        let d = x[0].len();
        let n = rho[0].len();
        if d == 0 || n == 0 || x.iter().any(|v| v.len() != d) || rho.iter().any(|v| v.len() != n) {
            return Err(LdpError::BadPath("ragged samples".into()));
        }
        check_simplex(&grid, &rho)?;
        let x0 = x[0].clone();
        Ok(Self { grid, x, rho, x0 })
    }

    /// The pair `(x, ρ)` where `x` solves the occupation-weighted ODE from `x0`.
    pub fn from_rho(
        model: &PdmpModel,
        grid: Vec<f64>,
        rho: Vec<Vec<f64>>,
        x0: &[f64],
        opts: OdeOptions,
    ) -> Result<Self, LdpError> {
        let path = reconstruct_mechanical_path(model, &grid, &rho, x0, opts)?;
        let x = grid.iter().map(|&t| path.eval(t)).collect();
        Self::new(grid, x, rho)
    }

    pub fn from_occupation(x: Vec<Vec<f64>>, occupation: &OccupationPath) -> Result<Self, LdpError> {
        Self::new(occupation.grid.clone(), x, occupation.by_time())
    }

    pub fn n_states(&self) -> usize {
        self.rho[0].len()
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn n_cells(&self) -> usize {
        self.grid.len() - 1
    }

    /// Linear interpolation of the mechanical samples.
    pub fn x_at(&self, t: f64) -> Vec<f64> {
        let k = self.grid.partition_point(|&g| g <= t).clamp(1, self.grid.len() - 1) - 1;
        let (a, b) = (self.grid[k], self.grid[k + 1]);
        let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
        self.x[k].iter().zip(&self.x[k + 1]).map(|(p, q)| p + w * (q - p)).collect()
    }

    fn midpoint(&self, k: usize) -> (f64, f64, Vec<f64>) {
        let h = self.grid[k + 1] - self.grid[k];
        let m = 0.5 * (self.grid[k] + self.grid[k + 1]);
        let xm = self.x[k].iter().zip(&self.x[k + 1]).map(|(p, q)| 0.5 * (p + q)).collect();
        (h, m, xm)
    }

    /// `sup_k |x(t_k) − x̃(t_k)|` where `x̃` is rebuilt from `ρ` and `x0`.
    pub fn consistency_residual(&self, model: &PdmpModel, opts: OdeOptions) -> Result<f64, LdpError> {
        let path = reconstruct_mechanical_path(model, &self.grid, &self.rho, &self.x0, opts)?;
        Ok(self
            .grid
            .iter()
            .zip(&self.x)
            .map(|(&t, x)| euclid(x, &path.eval(t)))
            .fold(0.0, f64::max))
    }

    /// Columns `t, x_1.., rho_sigma0..`.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x_{i}")));
        header.extend((0..self.n_states()).map(|s| format!("rho_sigma{s}")));
        let mut table = CsvTable::new(&header);
        for k in 0..self.grid.len() {
            let mut row = vec![self.grid[k]];
            row.extend(&self.x[k]);
            row.extend(&self.rho[k]);
            table.row_f64(&row);
        }
        table.finish()
    }

    pub fn from_csv(text: &str) -> Result<Self, LdpError> {
        let (header, rows) = parse_numeric_csv(text).map_err(LdpError::BadPath)?;
        if header.first().map(String::as_str) != Some("t") {
            return Err(LdpError::BadPath("first column must be t".into()));
        }
        let d = header.iter().filter(|h| h.starts_with("x_")).count();
        let n = header.iter().filter(|h| h.starts_with("rho_")).count();
        if d == 0 || n == 0 || 1 + d + n != header.len() {
            return Err(LdpError::BadPath(format!("unexpected columns {header:?}")));
        }
        let grid = rows.iter().map(|r| r[0]).collect();
        let x = rows.iter().map(|r| r[1..=d].to_vec()).collect();
        let rho = rows.iter().map(|r| r[1 + d..].to_vec()).collect();
        Self::new(grid, x, rho)
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

fn check_grid(grid: &[f64]) -> Result<(), LdpError> {
    if grid.len() < 2 {
        return Err(LdpError::BadPath("grid needs at least two points".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LdpError::BadPath("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn check_simplex(grid: &[f64], rho: &[Vec<f64>]) -> Result<(), LdpError> {
    for (k, r) in rho.iter().enumerate() {
        if r.iter().any(|v| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(v)) {
            return Err(LdpError::BadPath(format!("rho outside [0,1] at t = {}", grid[k])));
        }
        let s: f64 = r.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(LdpError::BadPath(format!("rho sums to {s} at t = {}", grid[k])));
        }
    }
    Ok(())
}

/// Integrate `ẋ = Σ_σ ρ_σ F_σ(x, t)` with `ρ` frozen on each grid cell.
pub fn reconstruct_mechanical_path(
    model: &PdmpModel,
    grid: &[f64],
    rho: &[Vec<f64>],
    x0: &[f64],
    opts: OdeOptions,
) -> Result<DensePath, LdpError> {
    check_grid(grid)?;
    if rho.len() != grid.len() && rho.len() != grid.len() - 1 {
        return Err(LdpError::GridMismatch);
    }
    if rho.iter().any(|r| r.len() != model.n_states()) || x0.len() != model.dim() {
        return Err(LdpError::GridMismatch);
    }
    check_simplex(grid, rho)?;
    let d = model.dim();
    let mut path = DensePath::new(d);
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; d];
    for k in 0..grid.len() - 1 {
        let weights = &rho[k];
        let cell = solve_dense(
            |t, y, dy| {
                dy.iter_mut().for_each(|v| *v = 0.0);
                for (s, &w) in weights.iter().enumerate() {
                    if w != 0.0 {
                        model.field_into(s, y, t, &mut buf);
                        dy.iter_mut().zip(&buf).for_each(|(a, b)| *a += w * b);
                    }
                }
            },
            &x,
            grid[k],
            grid[k + 1],
            opts,
        )?;
        x.copy_from_slice(cell.last_state());
        path.extend(&cell);
    }
    Ok(path)
}

fn cell_j(model: &PdmpModel, pair: &PathPair, k: usize) -> Result<(f64, f64, JSolution), LdpError> {
    let (h, m, xm) = pair.midpoint(k);
    let rates = model.rate_matrix(&xm, m);
    let sol = j_general(&pair.rho[k], &rates).map_err(|e| LdpError::AtTime {
        t: m,
        source: Box::new(e),
    })?;
    Ok((h, m, sol))
}

fn check_pair(model: &PdmpModel, pair: &PathPair) -> Result<(), LdpError> {
    if pair.n_states() != model.n_states() || pair.dim() != model.dim() {
        return Err(LdpError::GridMismatch);
    }
    Ok(())
}

/// `J(x, ρ) = ∫ j(ρ(t), r(·,·|x(t),t)) dt`, midpoint rule on the `ρ` grid.
#[allow(non_snake_case)]
pub fn path_rate_J(model: &PdmpModel, pair: &PathPair) -> Result<f64, LdpError> {
    check_pair(model, pair)?;
    let mut acc = 0.0;
    for k in 0..pair.n_cells() {
        let (h, _, sol) = cell_j(model, pair, k)?;
        acc += h * sol.value;
    }
    Ok(acc)
}

/// `J_V(x, ρ) = ∫ Σ ρ_σ r(σ,σ'|x,s)(1 − e^{V_σ'(s) − V_σ(s)}) ds`, same rule.
#[allow(non_snake_case)]
pub fn tilted_rate_JV(model: &PdmpModel, pair: &PathPair, tilt: &TiltSpec) -> Result<f64, LdpError> {
    check_pair(model, pair)?;
    let n = model.n_states();
    let mut acc = 0.0;
    for k in 0..pair.n_cells() {
        let (h, m, xm) = pair.midpoint(k);
        let rates = model.rate_matrix(&xm, m);
        let v: Vec<f64> = (0..n).map(|s| tilt.value(s, m)).collect();
        let mut cell = 0.0;
        for s in 0..n {
            let p = pair.rho[k][s];
            if p == 0.0 {
                continue;
            }
            for sp in 0..n {
                if s != sp {
                    cell += p * rates[(s, sp)] * (1.0 - (v[sp] - v[s]).exp());
                }
            }
        }
        acc += h * cell;
    }
    Ok(acc)
}

/// `V_σ = log ẑ_σ` on each cell; requires an interior optimizer everywhere.
pub fn optimal_tilt(model: &PdmpModel, pair: &PathPair) -> Result<TiltSpec, LdpError> {
    check_pair(model, pair)?;
    let mut values = Vec::with_capacity(pair.n_cells());
    for k in 0..pair.n_cells() {
        let (_, m, sol) = cell_j(model, pair, k)?;
        let z = sol.optimizer.ok_or(LdpError::NoOptimizer { t: m })?;
        values.push(z.z().iter().map(|v| v.ln()).collect());
    }
    Ok(TiltSpec::piecewise_constant(pair.grid.clone(), values))
}

/// `sup_t |x − x̄| + Σ_σ sup_t |∫₀^t (ρ_σ − ρ̄_σ)|`.
pub fn upsilon_distance(a: &PathPair, b: &PathPair) -> Result<f64, LdpError> {
    if a.grid != b.grid || a.dim() != b.dim() || a.n_states() != b.n_states() {
        return Err(LdpError::GridMismatch);
    }
    let mech = a.x.iter().zip(&b.x).map(|(p, q)| euclid(p, q)).fold(0.0, f64::max);
    let mut occ = 0.0;
    for s in 0..a.n_states() {
        let diff: Vec<f64> = a.rho.iter().zip(&b.rho).map(|(p, q)| p[s] - q[s]).collect();
        occ += cumulative_trapezoid(&a.grid, &diff).iter().map(|v| v.abs()).fold(0.0, f64::max);
    }
    Ok(mech + occ)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub t: f64,
    pub j_value: f64,
    pub residual: f64,
}

/// Pointwise `j` at every cell midpoint.
pub fn rate_sweep(model: &PdmpModel, pair: &PathPair) -> Result<Vec<SweepRow>, LdpError> {
    check_pair(model, pair)?;
    (0..pair.n_cells())
        .map(|k| {
            let (_, m, sol) = cell_j(model, pair, k)?;
            Ok(SweepRow {
                t: m,
                j_value: sol.value,
                residual: sol.residual,
            })
        })
        .collect()
}

pub fn rate_sweep_csv(rows: &[SweepRow]) -> String {
    let mut table = CsvTable::new(&["t", "j_value", "residual"]);
    for r in rows {
        table.row(&[fmt_f64(r.t), fmt_f64(r.j_value), fmt_f64(r.residual)]);
    }
    table.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::{model_quasistationary, solve_averaged_ode};
    use crate::ldp::j_two_state;
    use crate::model::registry::{random_ergodic, two_state_linear};
    use crate::quad::uniform_grid;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts() -> OdeOptions {
        OdeOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..OdeOptions::default()
        }
    }

    #[test]
    fn averaged_path_has_zero_cost() {
        let m = random_ergodic(2, 3, 1, 1.0).unwrap();
        let xs = solve_averaged_ode(&m, &[0.3], 0.0, 1.0, opts()).unwrap();
        let grid = uniform_grid(1.0, 200);
        // Sample μ at cell midpoints so the midpoint rule sees the exact minimizer.
        let mut rho: Vec<Vec<f64>> = grid
            .windows(2)
            .map(|w| {
                let m_t = 0.5 * (w[0] + w[1]);
                model_quasistationary(&m, &xs.at(m_t), m_t).unwrap().into_vec()
            })
            .collect();
        rho.push(rho.last().unwrap().clone());
        let x = grid.iter().map(|&t| xs.at(t)).collect();
        let pair = PathPair::new(grid, x, rho).unwrap();
        assert!(path_rate_J(&m, &pair).unwrap() < 1e-4);
    }

    #[test]
    fn constant_integrand() {
        let m = two_state_linear(1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = uniform_grid(2.0, 50);
        let pair = PathPair::from_rho(&m, grid.clone(), vec![vec![1.0, 0.0]; 51], &[0.0], opts()).unwrap();
        assert_abs_diff_eq!(path_rate_J(&m, &pair).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn piecewise_constant_rho_hand_integral() {
        let (g0, g1) = (2.0, 0.5);
        let m = two_state_linear(1.0, g0, g1, 1.0).unwrap();
        let grid = uniform_grid(1.0, 100);
        let rho: Vec<Vec<f64>> = grid
            .iter()
            .map(|&t| if t < 0.3 { vec![0.2, 0.8] } else if t < 0.7 { vec![0.9, 0.1] } else { vec![0.5, 0.5] })
            .collect();
        let pair = PathPair::from_rho(&m, grid, rho, &[0.0], opts()).unwrap();
        let exact = 0.3 * j_two_state(0.2, 0.8, g0, g1) + 0.4 * j_two_state(0.9, 0.1, g0, g1) + 0.3 * j_two_state(0.5, 0.5, g0, g1);
        assert_abs_diff_eq!(path_rate_J(&m, &pair).unwrap(), exact, epsilon = 1e-6);
    }

    #[test]
    fn tilted_functional_bounds() {
        let m = random_ergodic(4, 3, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = uniform_grid(1.0, 40);
        let rho: Vec<Vec<f64>> = grid
            .iter()
            .map(|_| {
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = v.iter().sum();
                v.into_iter().map(|p| p / s).collect()
            })
            .collect();
        let pair = PathPair::from_rho(&m, grid, rho, &[0.2], opts()).unwrap();
        let j = path_rate_J(&m, &pair).unwrap();
        assert_eq!(tilted_rate_JV(&m, &pair, &TiltSpec::zero()).unwrap(), 0.0);
        let best = tilted_rate_JV(&m, &pair, &optimal_tilt(&m, &pair).unwrap()).unwrap();
        assert_abs_diff_eq!(best, j, epsilon = 1e-9);
        for _ in 0..20 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let tilt = TiltSpec::new(move |s, t| v[s] + w[s] * t, move |_, _| 0.0);
            assert!(tilted_rate_JV(&m, &pair, &tilt).unwrap() <= j + 1e-8);
        }
    }

    #[test]
    fn upsilon_examples() {
        let grid = uniform_grid(1.0, 1000);
        let x = vec![vec![0.0]; grid.len()];
        let a_rho: Vec<Vec<f64>> = grid.iter().map(|&t| if t <= 0.5 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
        let b_rho: Vec<Vec<f64>> = grid.iter().map(|&t| if t >= 0.5 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
        let a = PathPair::new(grid.clone(), x.clone(), a_rho).unwrap();
        let b = PathPair::new(grid.clone(), x.clone(), b_rho).unwrap();
        assert_eq!(upsilon_distance(&a, &a).unwrap(), 0.0);
        let d = upsilon_distance(&a, &b).unwrap();
        assert!((d - 1.0).abs() <= 2e-3, "{d}");
        assert_eq!(d, upsilon_distance(&b, &a).unwrap());
        let short = PathPair::new(uniform_grid(1.0, 10), vec![vec![0.0]; 11], vec![vec![1.0, 0.0]; 11]).unwrap();
        assert_eq!(upsilon_distance(&a, &short), Err(LdpError::GridMismatch));
    }

    #[test]
    fn reconstruction_examples() {
        let m = two_state_linear(1.0, 1.0, 1.0, 2.0).unwrap();
        let grid = uniform_grid(2.0, 20);
        let path = reconstruct_mechanical_path(&m, &grid, &vec![vec![0.5, 0.5]; 21], &[0.0], opts()).unwrap();
        for &t in &grid {
            assert_abs_diff_eq!(path.eval(t)[0], 0.5 * (1.0 - (-t).exp()), epsilon = 1e-9);
        }
        let path = reconstruct_mechanical_path(&m, &grid, &vec![vec![0.0, 1.0]; 21], &[2.0], opts()).unwrap();
        for &t in &grid {
            assert_abs_diff_eq!(path.eval(t)[0], 1.0 + (-t).exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn bad_pairs() {
        let g = vec![0.0, 1.0];
        assert!(PathPair::new(g.clone(), vec![vec![0.0]; 2], vec![vec![0.7, 0.7]; 2]).is_err());
        assert!(PathPair::new(g.clone(), vec![vec![0.0]; 2], vec![vec![1.5, -0.5]; 2]).is_err());
        assert!(PathPair::new(vec![0.0, 0.0], vec![vec![0.0]; 2], vec![vec![1.0]; 2]).is_err());
        assert!(PathPair::new(g, vec![vec![0.0]; 3], vec![vec![1.0]; 2]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = two_state_linear(1.0, 1.0, 1.0, 1.0).unwrap();
        let pair = PathPair::from_rho(&m, uniform_grid(1.0, 8), vec![vec![0.25, 0.75]; 9], &[0.1], opts()).unwrap();
        let csv = pair.to_csv();
        assert!(csv.starts_with("t,x_1,rho_sigma0,rho_sigma1\n"));
        assert_eq!(PathPair::from_csv(&csv).unwrap(), pair);
        assert!(pair.consistency_residual(&m, opts()).unwrap() < 1e-12);
        let sweep = rate_sweep(&m, &pair).unwrap();
        assert_eq!(sweep.len(), 8);
        assert!(rate_sweep_csv(&sweep).starts_with("t,j_value,residual\n"));
    }
}
