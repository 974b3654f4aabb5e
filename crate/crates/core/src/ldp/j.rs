use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::LdpError;
use crate::averaging::check_reversibility;

pub const NEWTON_MAX_ITER: usize = 200;
/// Bound on the stationarity residual, relative to `max(1, Σ c)`.
pub const STATIONARITY_TOL: f64 = 1e-10;

/// Nonnegative weights `c(σ,σ')` on the off-diagonal edges; the diagonal
/// is held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVector {
    c: DMatrix<f64>,
}

impl EdgeVector {
    pub fn new(mut c: DMatrix<f64>) -> Result<Self, LdpError> {
        if c.nrows() != c.ncols() || c.nrows() == 0 {
            return Err(LdpError::BadEdgeVector(format!("shape {}×{}", c.nrows(), c.ncols())));
        }
        for i in 0..c.nrows() {
            c[(i, i)] = 0.0;
        }
        if let Some(v) = c.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(LdpError::BadEdgeVector(format!("entry {v} is not a finite nonnegative number")));
        }
        Ok(Self { c })
    }

    /// `c(σ,σ') = π(σ) r(σ,σ')`.
    pub fn from_measure(pi: &[f64], rates: &DMatrix<f64>) -> Result<Self, LdpError> {
        if rates.nrows() != pi.len() {
            return Err(LdpError::BadEdgeVector(format!(
                "{} masses for {} states",
                pi.len(),
                rates.nrows()
            )));
        }
        if let Some(p) = pi.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(LdpError::BadEdgeVector(format!("mass {p} is negative or not finite")));
        }
        let n = pi.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { pi[i] * rates[(i, j)] }))
    }

    pub fn n_states(&self) -> usize {
        self.c.nrows()
    }

    #[inline]
    pub fn get(&self, s: usize, sp: usize) -> f64 {
        self.c[(s, sp)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn total(&self) -> f64 {
        self.c.sum()
    }

    fn restrict(&self, idx: &[usize]) -> Self {
        Self {
            c: DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.c[(idx[i], idx[j])]),
        }
    }
}

/// Strictly positive `z` with `Σ z² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerPoint {
    z: Vec<f64>,
}

impl OptimizerPoint {
    fn from_log(u: &[f64]) -> Self {
        let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: Vec<f64> = u.iter().map(|v| (v - m).exp()).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            z: z.into_iter().map(|v| v / norm).collect(),
        }
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JSolution {
    pub value: f64,
    /// Present when `c` is irreducible, where the infimum of `Φ` is attained.
    pub optimizer: Option<OptimizerPoint>,
    /// Largest stationarity defect at the optimizer (zero without one).
    pub residual: f64,
}

/// `Φ(c, z) = Σ c(σ,σ') z_σ' / z_σ`.
pub fn phi(c: &EdgeVector, z: &[f64]) -> f64 {
    let n = c.n_states();
    let mut acc = 0.0;
    for s in 0..n {
        for sp in 0..n {
            let w = c.get(s, sp);
            if w != 0.0 {
                acc += w * z[sp] / z[s];
            }
        }
    }
    acc
}

/// `Ĵ(c, z) = Σ c − Φ(c, z)`.
pub fn j_hat(c: &EdgeVector, z: &[f64]) -> f64 {
    c.total() - phi(c, z)
}

/// `max_σ |Σ_σ' c(σ',σ) z_σ/z_σ' − Σ_σ' c(σ,σ') z_σ'/z_σ|`, the gradient of
/// `log`-parametrized `Φ`.
pub fn stationarity_residual(c: &EdgeVector, z: &[f64]) -> f64 {
    let u: Vec<f64> = z.iter().map(|v| v.ln()).collect();
    gradient(c, &u).amax()
}

fn phi_log(c: &EdgeVector, u: &[f64]) -> f64 {
    let n = c.n_states();
    let mut acc = 0.0;
    for s in 0..n {
        for sp in 0..n {
            let w = c.get(s, sp);
            if w != 0.0 {
                acc += w * (u[sp] - u[s]).exp();
            }
        }
    }
    acc
}

fn gradient(c: &EdgeVector, u: &[f64]) -> DVector<f64> {
    let n = c.n_states();
    let mut g = DVector::zeros(n);
    for s in 0..n {
        for sp in 0..n {
            let w = c.get(s, sp);
            if w != 0.0 {
                let e = w * (u[sp] - u[s]).exp();
                g[sp] += e;
                g[s] -= e;
            }
        }
    }
    g
}

/// Minimize `Φ(c, e^u)` for irreducible `c` by damped Newton. The Hessian is
/// the graph Laplacian with weights `c(σ,σ')e^{u_σ'−u_σ}` symmetrized; the
/// constant direction is pinned by adding `𝟙𝟙ᵀ`.
fn newton(c: &EdgeVector) -> Result<(Vec<f64>, f64), LdpError> {
    let n = c.n_states();
    let scale = c.total().max(1.0);
    let tol = STATIONARITY_TOL * scale;
    let target = 1e-3 * tol;
    let mut u = vec![0.0; n];
    let mut f = phi_log(c, &u);
    let mut g = gradient(c, &u);
    let mut best = g.amax();
    for _ in 0..NEWTON_MAX_ITER {
        if best <= target {
            break;
        }
        let mut h = DMatrix::from_element(n, n, 1.0);
        for s in 0..n {
            for sp in 0..n {
                let w = c.get(s, sp);
                if w != 0.0 && s != sp {
                    let e = w * (u[sp] - u[s]).exp();
                    h[(s, s)] += e;
                    h[(sp, sp)] += e;
                    h[(s, sp)] -= e;
                    h[(sp, s)] -= e;
                }
            }
        }
        let Some(step) = h.cholesky().map(|ch| ch.solve(&(-&g))) else {
            break;
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let ft = phi_log(c, &trial);
            if ft <= f + 1e-4 * t * slope || (ft - f).abs() <= 1e-15 * f.abs() {
                let gt = gradient(c, &trial);
                if ft < f || gt.amax() < best {
                    u = trial;
                    f = ft;
                    g = gt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let mean = u.iter().sum::<f64>() / n as f64;
        u.iter_mut().for_each(|v| *v -= mean);
        best = g.amax();
    }
    if best > tol {
        return Err(LdpError::NonConvergence {
            iterations: NEWTON_MAX_ITER,
            residual: best,
        });
    }
    Ok((u, best))
}

/// Strongly connected components of the support of `c`, in index order of
/// their smallest member.
fn components(c: &EdgeVector) -> Vec<Vec<usize>> {
    let n = c.n_states();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        reach[i][i] = true;
        for j in 0..n {
            if c.get(i, j) > 0.0 {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&j| reach[i][j] && reach[j][i]).collect();
        comp.iter().for_each(|&j| seen[j] = true);
        out.push(comp);
    }
    out
}

/// `𝒥(c) = sup_{z>0} Ĵ(c, z)`.
///
/// When the support of `c` is strongly connected the supremum is attained
/// at a unique ray, found by Newton. Otherwise the components can be scaled
/// apart along a topological order of the condensation, which sends every
/// edge between components to zero; the supremum splits into the total
/// weight on those edges plus the value on each component.
pub fn j_edge(c: &EdgeVector) -> Result<JSolution, LdpError> {
    let n = c.n_states();
    if n == 1 {
        return Ok(JSolution {
            value: 0.0,
            optimizer: Some(OptimizerPoint { z: vec![1.0] }),
            residual: 0.0,
        });
    }
    let comps = components(c);
    if comps.len() == 1 {
        let (u, residual) = newton(c)?;
        let z = OptimizerPoint::from_log(&u);
        let value = (c.total() - phi(c, z.z())).max(0.0);
        return Ok(JSolution {
            value,
            optimizer: Some(z),
            residual,
        });
    }
    let mut comp_of = vec![0usize; n];
    for (k, comp) in comps.iter().enumerate() {
        comp.iter().for_each(|&s| comp_of[s] = k);
    }
    let mut value = 0.0;
    for s in 0..n {
        for sp in 0..n {
            if comp_of[s] != comp_of[sp] {
                value += c.get(s, sp);
            }
        }
    }
    for comp in comps.iter().filter(|c| c.len() > 1) {
        value += j_edge(&c.restrict(comp))?.value;
    }
    Ok(JSolution {
        value,
        optimizer: None,
        residual: 0.0,
    })
}

/// `j(π, r)` for the edge vector `c = π(σ) r(σ,σ')`.
pub fn j_general(pi: &[f64], rates: &DMatrix<f64>) -> Result<JSolution, LdpError> {
    j_edge(&EdgeVector::from_measure(pi, rates)?)
}

/// Closed form for rates reversible with respect to `mu`:
/// `Σ π(σ) r(σ,σ') − Σ r(σ,σ') √(π(σ) π(σ') μ(σ) / μ(σ'))`.
pub fn j_reversible(pi: &[f64], mu: &[f64], rates: &DMatrix<f64>) -> Result<f64, LdpError> {
    if !check_reversibility(mu, rates) || mu.iter().any(|m| !(*m > 0.0)) {
        return Err(LdpError::NotReversible);
    }
    let n = pi.len();
    let mut acc = 0.0;
    for s in 0..n {
        if pi[s] == 0.0 {
            continue;
        }
        for sp in 0..n {
            if s != sp {
                let r = rates[(s, sp)];
                acc += pi[s] * r - r * (pi[s] * pi[sp] * mu[s] / mu[sp]).sqrt();
            }
        }
    }
    Ok(acc.max(0.0))
}

/// `(√(ρ₀γ₀) − √(ρ₁γ₁))²`.
pub fn j_two_state(rho0: f64, rho1: f64, gamma0: f64, gamma1: f64) -> f64 {
    let d = (rho0 * gamma0).sqrt() - (rho1 * gamma1).sqrt();
    d * d
}

/// `max_σ |Σ_σ' c(σ,σ') − Σ_σ' c(σ',σ)|`.
pub fn balance_defect(c: &EdgeVector) -> f64 {
    let m = c.matrix();
    (0..c.n_states())
        .map(|s| (m.row(s).sum() - m.column(s).sum()).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::quasistationary;
    use crate::model::generator_from_rates;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rates(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.1..3.0) })
    }

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    /// Largest `Ĵ` over a log-spaced grid of `z` with `z₀ = 1`, then over a
    /// second grid of the same size spanning the best coarse cell's neighbours.
    fn grid_oracle(c: &EdgeVector, points: usize, span: f64) -> f64 {
        let n = c.n_states();
        let search = |center: &[f64], half: f64| {
            let axis: Vec<f64> = (0..points).map(|k| -half + 2.0 * half * k as f64 / (points - 1) as f64).collect();
            let mut best = (f64::NEG_INFINITY, center.to_vec());
            let mut u = vec![0.0; n];
            let total = (points as u64).pow((n - 1) as u32);
            for mut idx in 0..total {
                for i in 1..n {
                    u[i] = center[i] + axis[(idx % points as u64) as usize];
                    idx /= points as u64;
                }
                let z: Vec<f64> = u.iter().map(|v| v.exp()).collect();
                let v = j_hat(c, &z);
                if v > best.0 {
                    best = (v, u.clone());
                }
            }
            best
        };
        let (_, u) = search(&vec![0.0; n], span);
        search(&u, 2.0 * span / (points - 1) as f64).0
    }

    #[test]
    fn stationary_measure_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..6 {
            let r = random_rates(&mut rng, n);
            let mu = quasistationary(&generator_from_rates(&r)).unwrap();
            let sol = j_general(mu.probs(), &r).unwrap();
            assert!(sol.value.abs() < 1e-10);
            let z = sol.optimizer.unwrap();
            let expected = 1.0 / (n as f64).sqrt();
            assert!(z.z().iter().all(|v| (v - expected).abs() < 1e-6));
        }
    }

    #[test]
    fn two_state_point_mass() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let sol = j_general(&[1.0, 0.0], &r).unwrap();
        assert_abs_diff_eq!(sol.value, 1.0, epsilon = 1e-14);
        assert!(sol.optimizer.is_none());
        assert_abs_diff_eq!(j_two_state(1.0, 0.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn three_state_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let r = random_rates(&mut rng, 3);
            let pi = random_simplex(&mut rng, 3);
            let c = EdgeVector::from_measure(&pi, &r).unwrap();
            let sol = j_edge(&c).unwrap();
            let oracle = grid_oracle(&c, 120, 4.0);
            assert!(oracle <= sol.value + 1e-12);
            assert!((sol.value - oracle).abs() < 1e-3, "{} vs {}", sol.value, oracle);
            assert!(sol.residual < STATIONARITY_TOL);
        }
    }

    #[test]
    fn two_state_examples() {
        assert_eq!(j_two_state(0.5, 0.5, 1.0, 1.0), 0.0);
        assert_eq!(j_two_state(1.0, 0.0, 1.0, 4.0), 1.0);
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 0.0]);
        let sol = j_general(&[0.25, 0.75], &r).unwrap();
        assert_abs_diff_eq!(sol.value, j_two_state(0.25, 0.75, 2.0, 1.0), epsilon = 1e-8);
    }

    #[test]
    fn reversible_formula() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 5.0, 0.0]);
        let mu = quasistationary(&generator_from_rates(&r)).unwrap();
        assert!(j_reversible(mu.probs(), mu.probs(), &r).unwrap().abs() < 1e-14);
        let v = j_reversible(&[0.0, 1.0], mu.probs(), &r).unwrap();
        assert!(v.is_finite());
        assert_abs_diff_eq!(v, 5.0, epsilon = 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst = 0.0f64;
        for _ in 0..500 {
            let g0: f64 = rng.random_range(0.0..4.0);
            let g1 = rng.random_range(0.01..4.0);
            let g0 = g0.max(0.01);
            let r = DMatrix::from_row_slice(2, 2, &[0.0, g0, g1, 0.0]);
            let mu = [g1 / (g0 + g1), g0 / (g0 + g1)];
            let p0 = rng.random_range(0.0..1.0);
            let v = j_reversible(&[p0, 1.0 - p0], &mu, &r).unwrap();
            worst = worst.max((v - j_two_state(p0, 1.0 - p0, g0, g1)).abs());
        }
        assert!(worst < 1e-12);
        let cyc = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 2.0, 0.0, 1.0, 1.0, 2.0, 0.0]);
        assert_eq!(j_reversible(&[0.3, 0.3, 0.4], &[1.0 / 3.0; 3], &cyc), Err(LdpError::NotReversible));
    }

    #[test]
    fn defect_examples() {
        let c = EdgeVector::new(DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 0.0])).unwrap();
        assert_eq!(balance_defect(&c), 1.0);
        let r = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 0.5, 0.0, 1.0, 3.0, 2.0, 0.0]);
        let mu = quasistationary(&generator_from_rates(&r)).unwrap();
        assert!(balance_defect(&EdgeVector::from_measure(mu.probs(), &r).unwrap()) < 1e-12);
    }

    #[test]
    fn reducible_split_matches_regularization_limit() {
        // 0 ⇄ 1 strongly connected, 2 only receives.
        let c = EdgeVector::new(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.5, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        let exact = j_edge(&c).unwrap().value;
        assert_abs_diff_eq!(exact, 0.5 + j_two_state(1.0, 1.0, 1.0, 2.0), epsilon = 1e-12);
        let mut prev = f64::INFINITY;
        for k in 2..9 {
            let delta = 10f64.powi(-k);
            let reg = EdgeVector::new(c.matrix().map(|v| v + delta)).unwrap();
            let gap = (j_edge(&reg).unwrap().value - exact).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn bad_inputs() {
        assert!(EdgeVector::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).is_err());
        assert!(EdgeVector::new(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).is_err());
        assert!(EdgeVector::from_measure(&[0.5], &DMatrix::zeros(2, 2)).is_err());
        assert_eq!(j_edge(&EdgeVector::new(DMatrix::zeros(1, 1)).unwrap()).unwrap().value, 0.0);
    }

    fn edge_strategy(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(0.05f64..5.0, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
    }

    proptest! {
        #[test]
        fn convexity(a in edge_strategy(3), b in edge_strategy(3), t in 0.0f64..1.0) {
            let ca = EdgeVector::new(a.clone()).unwrap();
            let cb = EdgeVector::new(b.clone()).unwrap();
            let mix = EdgeVector::new(&a * t + &b * (1.0 - t)).unwrap();
            let lhs = j_edge(&mix).unwrap().value;
            let rhs = t * j_edge(&ca).unwrap().value + (1.0 - t) * j_edge(&cb).unwrap().value;
            prop_assert!(lhs <= rhs + 1e-8);
        }

        #[test]
        fn ray_invariance(a in edge_strategy(3), s in 0.01f64..100.0) {
            let c = EdgeVector::new(a).unwrap();
            let sol = j_edge(&c).unwrap();
            let z = sol.optimizer.unwrap();
            let scaled: Vec<f64> = z.z().iter().map(|v| v * s).collect();
            prop_assert!((j_hat(&c, z.z()) - j_hat(&c, &scaled)).abs() <= 1e-12 * c.total().max(1.0));
            prop_assert!(stationarity_residual(&c, z.z()) < STATIONARITY_TOL * c.total().max(1.0));
            prop_assert!((z.z().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn scaling(r in edge_strategy(3), p in proptest::collection::vec(0.0f64..1.0, 3), a in 0.0f64..10.0) {
            let base = j_general(&p, &r).unwrap().value;
            let scaled: Vec<f64> = p.iter().map(|v| v * a).collect();
            prop_assert!((j_general(&scaled, &r).unwrap().value - a * base).abs() <= 1e-9 * (1.0 + a * base));
        }

        #[test]
        fn continuity_along_schedule(a in edge_strategy(3)) {
            let c = EdgeVector::new(a.clone()).unwrap();
            let base = j_edge(&c).unwrap().value;
            let mut prev = f64::INFINITY;
            for k in 1..8 {
                let delta = 10f64.powi(-k);
                let gap = (j_edge(&EdgeVector::new(a.map(|v| v + delta)).unwrap()).unwrap().value - base).abs();
                prop_assert!(gap <= prev + 1e-12);
                prev = gap;
            }
            prop_assert!(prev < 1e-6);
        }
    }
}
