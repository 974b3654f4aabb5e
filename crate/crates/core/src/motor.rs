//! Three-state power-stroke motor: potentials, detailed-balance rates, the
//! effective force in the attached metastate `{1, 2}` and its bistability.
//!
//! Chemical states: `0` detached, `1` and `2` attached. The mechanical
//! variable is one-dimensional.

use std::sync::Arc;

use thiserror::Error;

use crate::coarse::{self, CoarseError, EffectiveModel};
use crate::io::{fmt_f64, CsvTable};
use crate::model::{ChemicalStateSpace, ForceField, MetastatePartition, ModelError, PdmpModel, RateField};
use crate::simulator::{simulate_ensemble_map, EdgeScaling, SimConfig, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotorError {
    #[error("beta must be positive, got {0}")]
    BadBeta(f64),
    #[error("rate prefactors must be positive, got slow = {0}, fast = {1}")]
    BadPrefactor(f64, f64),
    #[error("parameters are not bistable: {0}")]
    NotBistable(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Coarse(#[from] CoarseError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MotorParams {
    /// External load.
    pub f: f64,
    /// Free-energy offset of state 2 (ATP concentration).
    pub epsilon: f64,
    /// Inverse temperature.
    pub beta: f64,
    /// Prefactor of the slow pairs {0,1} and {0,2}.
    pub omega_slow: f64,
    /// Prefactor of the fast pair {1,2}.
    pub omega_fast: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            f: 0.0,
            epsilon: -0.5,
            beta: 8.0,
            omega_slow: 1.0,
            omega_fast: 1.0,
        }
    }
}

impl MotorParams {
    pub fn check(&self) -> Result<(), MotorError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(MotorError::BadBeta(self.beta));
        }
        if !(self.omega_slow > 0.0 && self.omega_fast > 0.0) {
            return Err(MotorError::BadPrefactor(self.omega_slow, self.omega_fast));
        }
        Ok(())
    }

    pub fn with_f(mut self, f: f64) -> Self {
        self.f = f;
        self
    }
}

/// Free energy `U_σ(x)`.
pub fn potentials(p: &MotorParams, sigma: usize, x: f64) -> f64 {
    match sigma {
        0 => 0.5 * x * x,
        1 => 0.5 * x * x + p.f * x,
        2 => 0.5 * (x - 1.0) * (x - 1.0) + p.f * x + p.epsilon,
        _ => panic!("motor state {sigma} out of range"),
    }
}

/// Force `F_σ(x) = −∂ₓU_σ(x)`.
pub fn force(p: &MotorParams, sigma: usize, x: f64) -> f64 {
    match sigma {
        0 => -x,
        1 => -x - p.f,
        2 => -(x - 1.0) - p.f,
        _ => panic!("motor state {sigma} out of range"),
    }
}

/// Symmetric Arrhenius rates `ω · exp(−β[U_σ' − U_σ]/2)`.
pub fn motor_rates(p: &MotorParams, sigma: usize, target: usize, x: f64) -> f64 {
    if sigma == target {
        return 0.0;
    }
    let omega = if (sigma == 1 && target == 2) || (sigma == 2 && target == 1) {
        p.omega_fast
    } else {
        p.omega_slow
    };
    omega * (-0.5 * p.beta * (potentials(p, target, x) - potentials(p, sigma, x))).exp()
}

/// `ΔU(x) = U₂(x) − U₁(x)`.
pub fn delta_u(p: &MotorParams, x: f64) -> f64 {
    -x + 0.5 + p.epsilon
}

/// `1 / (1 + e^z)` without overflow.
fn logistic_neg(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Effective force in the attached metastate,
/// `F_*(x) = −x − f + 1/(1 + e^{βΔU(x)})`.
pub fn effective_force_star(p: &MotorParams, x: f64) -> f64 {
    -x - p.f + logistic_neg(p.beta * delta_u(p, x))
}

/// Three-state motor model on `[0, horizon]`.
pub fn motor_model(p: MotorParams, horizon: f64) -> Result<PdmpModel, MotorError> {
    p.check()?;
    let force_field = ForceField::new((1.0 + p.f.abs(), 1.0), move |s, x, _, out| out[0] = force(&p, s, x[0]))?
        .with_lipschitz_hint(1.0);
    let rates = RateField::new(move |s, sp, x, _| motor_rates(&p, s, sp, x[0]));
    Ok(PdmpModel::new(
        ChemicalStateSpace::new(["detached", "attached1", "attached2"])?,
        force_field,
        rates,
        1,
        horizon,
    )?)
}

/// Metastates `{0}` and `{1, 2}`.
pub fn motor_partition() -> MetastatePartition {
    MetastatePartition::new(3, vec![vec![0], vec![1, 2]]).expect("motor partition")
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Roots `y(a₋) > y(a₊)` of `y² − (β − 2)y + 1 = 0`, i.e. where `βy = (1+y)²`.
fn slope_roots(beta: f64) -> Option<(f64, f64)> {
    if beta <= 4.0 {
        return None;
    }
    let disc = (beta * beta - 4.0 * beta).sqrt();
    Some(((beta - 2.0 + disc) / 2.0, (beta - 2.0 - disc) / 2.0))
}

/// `I₊ = {x : ∂ₓF_*(x) > 0} = (a₋, a₊)`, empty for `β ≤ 4`. Independent of `f`.
pub fn positive_slope_interval(p: &MotorParams) -> Option<Interval> {
    let (y_minus, y_plus) = slope_roots(p.beta)?;
    let a = |y: f64| 0.5 + p.epsilon - y.ln() / p.beta;
    Some(Interval {
        lo: a(y_minus),
        hi: a(y_plus),
    })
}

/// Range of `ε` for which `0 ∈ I₊`; empty for `β ≤ 4`.
pub fn epsilon_window(beta: f64) -> Option<Interval> {
    let (y_big, y_small) = slope_roots(beta)?;
    Some(Interval {
        lo: -0.5 + y_small.ln() / beta,
        hi: -0.5 + y_big.ln() / beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FstarRoot {
    pub x: f64,
    /// `F_*` changes sign from + to − across the root.
    pub stable: bool,
}

/// Number of scan cells used by [`find_fstar_roots`].
pub const ROOT_SCAN_CELLS: usize = 20_000;

/// All zeros of `F_*` on `[−2 − |f|, 3 + |f|]`, bracketed on a uniform scan
/// and refined by bisection to `1e-10`.
pub fn find_fstar_roots(p: &MotorParams) -> Vec<FstarRoot> {
    let lo = -2.0 - p.f.abs();
    let hi = 3.0 + p.f.abs();
    let g = |x: f64| effective_force_star(p, x);
    let step = (hi - lo) / ROOT_SCAN_CELLS as f64;
    let mut roots = Vec::new();
    let mut x0 = lo;
    let mut g0 = g(x0);
    for k in 1..=ROOT_SCAN_CELLS {
        let x1 = lo + step * k as f64;
        let g1 = g(x1);
        if g0 == 0.0 {
            roots.push(FstarRoot {
                x: x0,
                stable: g1 < 0.0,
            });
        } else if g0 * g1 < 0.0 {
            let (mut a, mut b) = (x0, x1);
            while b - a > 1e-10 {
                let m = 0.5 * (a + b);
                if g(m) * g0 > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(FstarRoot {
                x: 0.5 * (a + b),
                stable: g0 > 0.0,
            });
        }
        x0 = x1;
        g0 = g1;
    }
    roots
}

/// Sign pattern of `F_*` between consecutive roots, from the far left.
pub fn sign_pattern(p: &MotorParams, roots: &[FstarRoot]) -> Vec<i8> {
    let mut probes = Vec::with_capacity(roots.len() + 1);
    let left = roots.first().map_or(0.0, |r| r.x) - 1.0;
    probes.push(left);
    for w in roots.windows(2) {
        probes.push(0.5 * (w[0].x + w[1].x));
    }
    probes.push(roots.last().map_or(0.0, |r| r.x) + 1.0);
    probes
        .into_iter()
        .map(|x| effective_force_star(p, x).signum() as i8)
        .collect()
}

/// Maximal interval of loads `f` for which `F_*` has three zeros.
///
/// The load only shifts `F_*` vertically, so the candidate range is bracketed
/// by `F_*(·; 0)` at the ends of `I₊`. That range is scanned for root count
/// three and both ends are refined by bisection on the root count.
pub fn find_bistable_f(beta: f64, epsilon: f64) -> Option<Interval> {
    let base = MotorParams {
        f: 0.0,
        epsilon,
        beta,
        ..MotorParams::default()
    };
    let ip = positive_slope_interval(&base)?;
    let f_lo = effective_force_star(&base, ip.lo);
    let f_hi = effective_force_star(&base, ip.hi);
    let margin = 0.05 * (f_hi - f_lo).abs() + 1e-3;
    let (a, b) = (f_lo.min(f_hi) - margin, f_lo.max(f_hi) + margin);
    let n_roots = |f: f64| find_fstar_roots(&base.with_f(f)).len();
    let cells = 400;
    let fs: Vec<f64> = (0..=cells).map(|k| a + (b - a) * k as f64 / cells as f64).collect();
    let counts: Vec<usize> = fs.iter().map(|&f| n_roots(f)).collect();
    // Longest run of three-root samples.
    let (mut best, mut run_start) = (None::<(usize, usize)>, None::<usize>);
    for k in 0..=cells {
        match (counts[k] == 3, run_start) {
            (true, None) => run_start = Some(k),
            (false, Some(s)) => {
                if best.is_none_or(|(bs, be)| k - 1 - s > be - bs) {
                    best = Some((s, k - 1));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        if best.is_none_or(|(bs, be)| cells - s > be - bs) {
            best = Some((s, cells));
        }
    }
    let (s, e) = best?;
    let refine = |mut inside: f64, mut outside: f64| {
        for _ in 0..60 {
            let m = 0.5 * (inside + outside);
            if n_roots(m) == 3 {
                inside = m;
            } else {
                outside = m;
            }
        }
        inside
    };
    let lo = if s == 0 { fs[0] } else { refine(fs[s], fs[s - 1]) };
    let hi = if e == cells { fs[cells] } else { refine(fs[e], fs[e + 1]) };
    Some(Interval { lo, hi })
}

/// One point of the `(β, ε, f)` phase diagram.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PhaseRow {
    pub beta: f64,
    pub epsilon: f64,
    pub f: f64,
    pub n_roots: usize,
    /// Outer roots and middle root; NaN when absent.
    pub x_minus: f64,
    pub x_mid: f64,
    pub x_plus: f64,
}

pub fn phase_row(p: &MotorParams) -> PhaseRow {
    let roots = find_fstar_roots(p);
    let (x_minus, x_mid, x_plus) = match roots.as_slice() {
        [r] => (r.x, f64::NAN, r.x),
        [a, b, c] => (a.x, b.x, c.x),
        _ => (f64::NAN, f64::NAN, f64::NAN),
    };
    PhaseRow {
        beta: p.beta,
        epsilon: p.epsilon,
        f: p.f,
        n_roots: roots.len(),
        x_minus,
        x_mid,
        x_plus,
    }
}

/// Columns `beta, epsilon, f, n_roots, x_minus, x_mid, x_plus`.
pub fn phase_csv(rows: &[PhaseRow]) -> String {
    let mut table = CsvTable::new(&["beta", "epsilon", "f", "n_roots", "x_minus", "x_mid", "x_plus"]);
    for r in rows {
        table.row(&[
            fmt_f64(r.beta),
            fmt_f64(r.epsilon),
            fmt_f64(r.f),
            r.n_roots.to_string(),
            fmt_f64(r.x_minus),
            fmt_f64(r.x_mid),
            fmt_f64(r.x_plus),
        ]);
    }
    table.finish()
}

/// `x, F_star` on `n + 1` evenly spaced points of `[lo, hi]`.
pub fn fstar_profile_csv(p: &MotorParams, lo: f64, hi: f64, n: usize) -> String {
    let mut table = CsvTable::new(&["x", "F_star"]);
    for k in 0..=n {
        let x = lo + (hi - lo) * k as f64 / n as f64;
        table.row_f64(&[x, effective_force_star(p, x)]);
    }
    table.finish()
}

/// Terminal-basin statistics for one starting point.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DirectionalityRow {
    pub x0: f64,
    pub n_paths: usize,
    pub frac_left: f64,
    pub frac_right: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DirectionalityReport {
    pub params: MotorParams,
    pub x_minus: f64,
    pub x_mid: f64,
    pub x_plus: f64,
    pub horizon: f64,
    pub rows: Vec<DirectionalityRow>,
}

/// Two-metastate effective motor: states `{0}` and `*` with fields `F₀`, `F_*`.
pub fn effective_motor(p: MotorParams, horizon: f64) -> Result<EffectiveModel, MotorError> {
    let model = motor_model(p, horizon)?;
    Ok(coarse::build_effective(Arc::new(model), motor_partition())?)
}

/// Simulate the effective motor from every `x₀` and record where the
/// mechanical variable ends up relative to the three zeros of `F_*`.
///
/// Each path starts in the attached metastate `*`.
pub fn directionality_experiment(
    p: MotorParams,
    x0_list: &[f64],
    n_paths: usize,
    horizon: f64,
    config: &SimConfig,
) -> Result<DirectionalityReport, MotorError> {
    let roots = find_fstar_roots(&p);
    if roots.len() != 3 {
        return Err(MotorError::NotBistable(format!("F_* has {} zeros", roots.len())));
    }
    let (x_minus, x_mid, x_plus) = (roots[0].x, roots[1].x, roots[2].x);
    let eff = effective_motor(p, horizon)?;
    let cfg = SimConfig {
        lambda: 1.0,
        edge_scaling: EdgeScaling::Uniform,
        ..config.clone()
    };
    let attached = 1;
    let mut rows = Vec::with_capacity(x0_list.len());
    for (k, &x0) in x0_list.iter().enumerate() {
        let cfg_k = SimConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.clone()
        };
        let finals = simulate_ensemble_map(eff.model(), &cfg_k, &[x0], attached, n_paths, |_, traj| {
            traj.final_x()[0]
        })?;
        let left = finals.iter().filter(|&&x| x < x_mid).count();
        rows.push(DirectionalityRow {
            x0,
            n_paths,
            frac_left: left as f64 / n_paths as f64,
            frac_right: (n_paths - left) as f64 / n_paths as f64,
        });
    }
    Ok(DirectionalityReport {
        params: p,
        x_minus,
        x_mid,
        x_plus,
        horizon,
        rows,
    })
}
