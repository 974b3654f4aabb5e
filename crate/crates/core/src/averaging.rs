//! Quasistationary measures, the averaged vector field and its ODE, and the
//! ensemble harness that measures how fast the fast-jump limit sets in.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::io::{fmt_f64, CsvTable};
use crate::model::{strongly_connected, PdmpModel, IRREDUCIBILITY_TOL};
use crate::ode::{solve_dense, DensePath, OdeError, OdeOptions};
use crate::quad::{adaptive_simpson, uniform_grid};
use crate::simulator::{simulate_ensemble_map, time_average, SimConfig, SimError};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AveragingError {
    #[error("generator is reducible")]
    Reducible,
    #[error("invariant measure has a nonpositive entry ({0:e}); numerical breakdown")]
    NonPositive(f64),
    #[error("generator is not square ({0}×{1})")]
    NotSquare(usize, usize),
    #[error("averaged ODE failed: {0}")]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("bad harness input: {0}")]
    BadInput(String),
}

/// Strictly positive probability vector `μ` with `μ L = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasistationaryMeasure {
    mu: Vec<f64>,
}

impl QuasistationaryMeasure {
    pub fn probs(&self) -> &[f64] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mu
    }
}

impl std::ops::Index<usize> for QuasistationaryMeasure {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.mu[i]
    }
}

/// Solve `μ L = 0`, `Σ μ = 1`: transpose, replace the last equation by the
/// normalization and solve the square system by LU.
pub fn quasistationary(generator: &DMatrix<f64>) -> Result<QuasistationaryMeasure, AveragingError> {
    let n = generator.nrows();
    if generator.ncols() != n {
        return Err(AveragingError::NotSquare(n, generator.ncols()));
    }
    if n == 1 {
        return Ok(QuasistationaryMeasure { mu: vec![1.0] });
    }
    if !strongly_connected(generator, IRREDUCIBILITY_TOL) {
        return Err(AveragingError::Reducible);
    }
    let mut a = generator.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let sol = a.lu().solve(&b).ok_or(AveragingError::Reducible)?;
    let min = sol.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(AveragingError::NonPositive(min));
    }
    let total: f64 = sol.iter().sum();
    Ok(QuasistationaryMeasure {
        mu: sol.iter().map(|v| v / total).collect(),
    })
}

/// `μ(·|x,t)` of the model's frozen chemical generator.
pub fn model_quasistationary(model: &PdmpModel, x: &[f64], t: f64) -> Result<QuasistationaryMeasure, AveragingError> {
    quasistationary(&model.chemical_generator(x, t))
}

/// `F̄(x,t) = Σ_σ μ(σ|x,t) F_σ(x,t)`.
pub fn averaged_field(model: &PdmpModel, x: &[f64], t: f64) -> Result<Vec<f64>, AveragingError> {
    let mut out = vec![0.0; model.dim()];
    averaged_field_into(model, x, t, &mut out)?;
    Ok(out)
}

pub fn averaged_field_into(model: &PdmpModel, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), AveragingError> {
    let mu = model_quasistationary(model, x, t)?;
    weighted_field_into(model, mu.probs(), x, t, out);
    Ok(())
}

/// `Σ_σ w_σ F_σ(x,t)` for arbitrary weights.
pub fn weighted_field_into(model: &PdmpModel, weights: &[f64], x: &[f64], t: f64, out: &mut [f64]) {
    let d = model.dim();
    out[..d].iter_mut().for_each(|v| *v = 0.0);
    let mut buf = vec![0.0; d];
    for (s, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        model.field_into(s, x, t, &mut buf);
        for i in 0..d {
            out[i] += w * buf[i];
        }
    }
}

/// Dense solution `x_*` of `ẋ = F̄(x,t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedPath {
    pub path: DensePath,
}

impl AveragedPath {
    pub fn at(&self, t: f64) -> Vec<f64> {
        self.path.eval(t)
    }

    /// Largest `|x(t_k) − x(t_0) − ∫_{t_0}^{t_k} F̄(x(s),s) ds|` over `checkpoints`,
    /// integrating along the dense record.
    pub fn integral_residual(&self, model: &PdmpModel, checkpoints: &[f64]) -> Result<f64, AveragingError> {
        let t0 = self.path.t_start();
        let x0 = self.path.eval(t0);
        let d = model.dim();
        let mut worst = 0.0f64;
        for &tk in checkpoints {
            let xk = self.path.eval(tk);
            for i in 0..d {
                let err = RefCell::new(None);
                let integral = adaptive_simpson(
                    &|s| match averaged_field(model, &self.path.eval(s), s) {
                        Ok(v) => v[i],
                        Err(e) => {
                            err.replace(Some(e));
                            0.0
                        }
                    },
                    t0,
                    tk,
                    1e-12,
                );
                if let Some(e) = err.into_inner() {
                    return Err(e);
                }
                worst = worst.max((xk[i] - x0[i] - integral).abs());
            }
        }
        Ok(worst)
    }
}

/// Integrate the averaged ODE from `(x₀, t₀)` to `t_end`.
pub fn solve_averaged_ode(
    model: &PdmpModel,
    x0: &[f64],
    t0: f64,
    t_end: f64,
    opts: OdeOptions,
) -> Result<AveragedPath, AveragingError> {
    let failure = RefCell::new(None);
    let result = solve_dense(
        |t, x, dx| {
            if let Err(e) = averaged_field_into(model, x, t, dx) {
                failure.borrow_mut().get_or_insert(e);
                dx.iter_mut().for_each(|v| *v = f64::NAN);
            }
        },
        x0,
        t0,
        t_end,
        opts,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(AveragedPath { path: result? })
}

/// Detailed balance `μ(σ) r(σ,σ') = μ(σ') r(σ',σ)` for every pair, to
/// `1e-10` relative.
pub fn check_reversibility(mu: &[f64], rates: &DMatrix<f64>) -> bool {
    let n = mu.len();
    for s in 0..n {
        for sp in (s + 1)..n {
            let a = mu[s] * rates[(s, sp)];
            let b = mu[sp] * rates[(sp, s)];
            let scale = a.abs().max(b.abs());
            if (a - b).abs() > 1e-10 * scale {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileSummary {
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub mean: f64,
}

impl QuantileSummary {
    pub fn of(data: &[f64]) -> Self {
        let mut v = data.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        Self {
            q10: stats::quantile_sorted(&v, 0.1),
            median: stats::quantile_sorted(&v, 0.5),
            q90: stats::quantile_sorted(&v, 0.9),
            mean: stats::mean(&v),
        }
    }

    fn get(&self, name: &str) -> f64 {
        match name {
            "q10" => self.q10,
            "median" => self.median,
            "q90" => self.q90,
            _ => self.mean,
        }
    }
}

/// Ensemble statistics at one value of λ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnLevel {
    pub lambda: f64,
    pub n_paths: usize,
    /// `sup_t |x(t) − x_*(t)|` across paths.
    pub sup_dev: QuantileSummary,
    /// Per state: `|∫ f(t)[χ(σ(t)=σ) − μ(σ|x_*(t),t)] dt|` across paths.
    pub occ_dev: Vec<QuantileSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnReport {
    pub x0: Vec<f64>,
    pub sigma0: usize,
    pub horizon: f64,
    pub levels: Vec<LlnLevel>,
}

impl LlnReport {
    pub fn median_sup_devs(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.sup_dev.median).collect()
    }

    /// Columns `lambda, quantile, sup_dev, occ_dev_sigma0, …`.
    pub fn to_csv(&self) -> String {
        let n_states = self.levels.first().map_or(0, |l| l.occ_dev.len());
        let mut header = vec!["lambda".to_string(), "quantile".into(), "sup_dev".into()];
        header.extend((0..n_states).map(|s| format!("occ_dev_sigma{s}")));
        let mut table = CsvTable::new(&header);
        for level in &self.levels {
            for q in ["q10", "median", "q90", "mean"] {
                let mut row = vec![fmt_f64(level.lambda), q.to_string(), fmt_f64(level.sup_dev.get(q))];
                row.extend(level.occ_dev.iter().map(|o| fmt_f64(o.get(q))));
                table.row(&row);
            }
        }
        table.finish()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// For each λ, simulate `n_paths` paths with uniform edge scaling and
/// compare them with the averaged solution on `grid_cells` uniform cells.
#[allow(clippy::too_many_arguments)]
pub fn lln_report<F>(
    model: &PdmpModel,
    config: &SimConfig,
    x0: &[f64],
    sigma0: usize,
    lambdas: &[f64],
    n_paths: usize,
    f: F,
    grid_cells: usize,
) -> Result<LlnReport, AveragingError>
where
    F: Fn(f64) -> f64 + Sync,
{
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AveragingError::BadInput("lambdas must be strictly increasing".into()));
    }
    if grid_cells == 0 {
        return Err(AveragingError::BadInput("grid_cells must be positive".into()));
    }
    let horizon = model.horizon();
    let n_states = model.n_states();
    let x_star = solve_averaged_ode(model, x0, 0.0, horizon, config.ode_options())?;
    let grid = uniform_grid(horizon, grid_cells);
    let x_star_grid: Vec<Vec<f64>> = grid.iter().map(|&t| x_star.at(t)).collect();

    let mut expected = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let failure = RefCell::new(None);
        let v = adaptive_simpson(
            &|t| match model_quasistationary(model, &x_star.at(t), t) {
                Ok(mu) => f(t) * mu[s],
                Err(e) => {
                    failure.replace(Some(e));
                    0.0
                }
            },
            0.0,
            horizon,
            1e-10,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        expected.push(v);
    }

    let mut levels = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = SimConfig {
            lambda,
            record_path: true,
            edge_scaling: crate::simulator::EdgeScaling::Uniform,
            ..config.clone()
        };
        let per_path = simulate_ensemble_map(model, &cfg, x0, sigma0, n_paths, |_, traj| {
            let mut sup = 0.0f64;
            let mut x = vec![0.0; x0.len()];
            for (k, &t) in grid.iter().enumerate() {
                traj.path.eval_into(t, &mut x);
                let dist: f64 = x.iter().zip(&x_star_grid[k]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                sup = sup.max(dist);
            }
            let occ: Vec<f64> = (0..n_states)
                .map(|s| (time_average(&traj, &f, s) - expected[s]).abs())
                .collect();
            (sup, occ)
        })?;
        let sups: Vec<f64> = per_path.iter().map(|p| p.0).collect();
        let occ_dev = (0..n_states)
            .map(|s| QuantileSummary::of(&per_path.iter().map(|p| p.1[s]).collect::<Vec<_>>()))
            .collect();
        levels.push(LlnLevel {
            lambda,
            n_paths,
            sup_dev: QuantileSummary::of(&sups),
            occ_dev,
        });
    }
    Ok(LlnReport {
        x0: x0.to_vec(),
        sigma0,
        horizon,
        levels,
    })
}
