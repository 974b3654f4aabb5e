//! Small quadrature helpers.

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Running trapezoid integral of samples `ys` on abscissae `ts`; starts at 0.
pub fn cumulative_trapezoid(ts: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(ts.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..ts.len() {
        acc += 0.5 * (ts[k] - ts[k - 1]) * (ys[k] + ys[k - 1]);
        out.push(acc);
    }
    out
}

/// `n_cells + 1` equally spaced points on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, n_cells: usize) -> Vec<f64> {
    (0..=n_cells)
        .map(|k| if k == n_cells { horizon } else { horizon * k as f64 / n_cells as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_polynomials_and_exp() {
        assert_abs_diff_eq!(adaptive_simpson(&|t| t, 0.0, 1.0, 1e-12), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(adaptive_simpson(&|t: f64| t.exp(), 0.0, 2.0, 1e-12), 2f64.exp() - 1.0, epsilon = 1e-10);
        assert_eq!(adaptive_simpson(&|t| t, 1.0, 1.0, 1e-12), 0.0);
    }

    #[test]
    fn cumulative_trapezoid_linear_exact() {
        let ts = uniform_grid(2.0, 20);
        let c = cumulative_trapezoid(&ts, &ts);
        assert_abs_diff_eq!(*c.last().unwrap(), 2.0, epsilon = 1e-14);
        assert_eq!(c[0], 0.0);
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = uniform_grid(0.3, 7);
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[7], 0.3);
    }
}
