//! Adaptive Dormand–Prince 5(4) integrator with its native quartic dense
//! output (cubic Hermite plus one bump term per step).
//!
//! The integrator works on flat `f64` state vectors. Callers that need
//! event location (the simulator's hazard crossing) pass a [`Crossing`]
//! describing a component that must reach a threshold; the crossing
//! instant is then localized by bisection on the dense interpolant of the
//! step that brackets it.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e}); tolerance unreachable")]
    StepFailure { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("exceeded {max_steps} steps before reaching t = {t_end}")]
    TooManySteps { max_steps: usize, t_end: f64 },
}

/// Error-control settings shared by every integration in the crate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on a single step; `f64::INFINITY` disables it.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

/// Stop condition: component `index` reaching `threshold` from below.
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub index: usize,
    pub threshold: f64,
    /// Width of the final bisection bracket, in time units.
    pub time_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Reached,
    Crossed(f64),
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b_hat
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Evaluate the cubic Hermite interpolant of one step at `t`, component `i`.
#[inline]
pub fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, f0: f64, f1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    if h <= 0.0 {
        return y1;
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
}

/// Hermite interpolant plus `θ²(1−θ)² bump`, the step's quartic dense output.
#[inline]
#[allow(clippy::too_many_arguments)]
pub fn dense(t0: f64, t1: f64, y0: f64, y1: f64, f0: f64, f1: f64, bump: f64, t: f64) -> f64 {
    let h = t1 - t0;
    if h <= 0.0 {
        return y1;
    }
    let s = (t - t0) / h;
    let w = s * (1.0 - s);
    hermite(t0, t1, y0, y1, f0, f1, t) + w * w * bump
}

/// Reusable adaptive integrator. Holds scratch buffers and the step size
/// carried over between calls, so back-to-back short integrations (one per
/// chemical sojourn) do not restart step-size selection from scratch.
#[derive(Debug, Clone)]
pub struct Integrator {
    opts: OdeOptions,
    n: usize,
    h: Option<f64>,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    bump: Vec<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl Integrator {
    pub fn new(n: usize, opts: OdeOptions) -> Self {
        Self {
            opts,
            n,
            h: None,
            k: std::array::from_fn(|_| vec![0.0; n]),
            y_stage: vec![0.0; n],
            y_new: vec![0.0; n],
            bump: vec![0.0; n],
            steps_accepted: 0,
            steps_rejected: 0,
        }
    }

    pub fn options(&self) -> &OdeOptions {
        &self.opts
    }

    fn error_norm(&self, y: &[f64], err: &[f64]) -> f64 {
        let mut acc = 0.0f64;
        for i in 0..self.n {
            let scale = self.opts.abs_tol + self.opts.rel_tol * y[i].abs().max(self.y_new[i].abs());
            let e = err[i] / scale;
            acc = acc.max(e.abs());
        }
        acc
    }

    fn initial_step(&self, t: f64, y: &[f64], f0: &[f64], t_end: f64) -> f64 {
        let mut d0 = 0.0f64;
        let mut d1 = 0.0f64;
        for i in 0..self.n {
            let sc = self.opts.abs_tol + self.opts.rel_tol * y[i].abs();
            d0 = d0.max((y[i] / sc).abs());
            d1 = d1.max((f0[i] / sc).abs());
        }
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min((t_end - t).abs()).max(1e-12 * t.abs().max(1.0))
    }

    /// Integrate `y' = rhs(t, y)` from `t` to `t_end` in place.
    ///
    /// `on_step(t0, y0, f0, t1, y1, f1, bump)` is invoked for every accepted
    /// step (see [`dense`]), with the last one truncated at the crossing
    /// instant when a crossing occurs. On return `y` and `t` hold the final state and `f` the slope
    /// there.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate<R, S>(
        &mut self,
        mut rhs: R,
        t: &mut f64,
        y: &mut [f64],
        f: &mut [f64],
        t_end: f64,
        crossing: Option<Crossing>,
        mut on_step: S,
    ) -> Result<Outcome, OdeError>
    where
        R: FnMut(f64, &[f64], &mut [f64]),
        S: FnMut(f64, &[f64], &[f64], f64, &[f64], &[f64], &[f64]),
    {
        let n = self.n;
        debug_assert_eq!(y.len(), n);
        rhs(*t, y, f);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFiniteState { t: *t });
        }
        if *t >= t_end {
            return Ok(Outcome::Reached);
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(*t, y, f, t_end),
        };
        let mut steps = 0usize;
        let mut err_buf = vec![0.0; n];
        let mut f_new = vec![0.0; n];
        loop {
            let remaining = t_end - *t;
            let mut last = false;
            h = h.min(self.opts.max_step);
            if h >= remaining {
                h = remaining;
                last = true;
            }
            let h_min = 1e-14 * t.abs().max(1.0);
            if h < h_min && !last {
                return Err(OdeError::StepFailure { t: *t, h });
            }
            steps += 1;
            if steps > self.opts.max_steps {
                return Err(OdeError::TooManySteps {
                    max_steps: self.opts.max_steps,
                    t_end,
                });
            }
            self.stages(&mut rhs, *t, y, f, h, &mut f_new, &mut err_buf);
            let finite = self.y_new.iter().all(|v| v.is_finite()) && f_new.iter().all(|v| v.is_finite());
            let err = if finite { self.error_norm(y, &err_buf) } else { f64::INFINITY };
            if err <= 1.0 {
                self.steps_accepted += 1;
                let t_new = if last { t_end } else { *t + h };
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || self.h.is_none() {
                    self.h = Some(h * factor);
                }
                if let Some(c) = crossing {
                    if self.y_new[c.index] >= c.threshold {
                        let i = c.index;
                        let tau = locate(*t, t_new, y[i], self.y_new[i], f[i], f_new[i], self.bump[i], c);
                        let mut y_tau = vec![0.0; n];
                        let mut y_mid = vec![0.0; n];
                        let mid = 0.5 * (*t + tau);
                        for j in 0..n {
                            let (a, b, fa, fb, e) = (y[j], self.y_new[j], f[j], f_new[j], self.bump[j]);
                            y_tau[j] = dense(*t, t_new, a, b, fa, fb, e, tau);
                            y_mid[j] = dense(*t, t_new, a, b, fa, fb, e, mid);
                        }
                        rhs(tau, &y_tau, &mut f_new);
                        // Refit the bump on the truncated step through its midpoint.
                        for j in 0..n {
                            let base = hermite(*t, tau, y[j], y_tau[j], f[j], f_new[j], mid);
                            self.bump[j] = 16.0 * (y_mid[j] - base);
                        }
                        on_step(*t, y, f, tau, &y_tau, &f_new, &self.bump);
                        *t = tau;
                        y.copy_from_slice(&y_tau);
                        f.copy_from_slice(&f_new);
                        return Ok(Outcome::Crossed(tau));
                    }
                }
                on_step(*t, y, f, t_new, &self.y_new, &f_new, &self.bump);
                *t = t_new;
                y.copy_from_slice(&self.y_new);
                f.copy_from_slice(&f_new);
                if last {
                    return Ok(Outcome::Reached);
                }
                h *= factor;
            } else {
                self.steps_rejected += 1;
                if !finite && h <= h_min {
                    return Err(OdeError::NonFiniteState { t: *t });
                }
                let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                h *= factor;
                if h < h_min {
                    return Err(OdeError::StepFailure { t: *t, h });
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn stages<R>(&mut self, rhs: &mut R, t: f64, y: &[f64], f0: &[f64], h: f64, f_new: &mut [f64], err: &mut [f64])
    where
        R: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = self.n;
        let [k1, k2, k3, k4, k5, k6, _] = &mut self.k;
        k1.copy_from_slice(f0);
        let ys = &mut self.y_stage;
        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, ys, k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, ys, k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, ys, k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, ys, k5);
        for i in 0..n {
            ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, ys, k6);
        for i in 0..n {
            self.y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        rhs(t + h, &self.y_new, f_new);
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * f_new[i]);
            self.bump[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * f_new[i]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn locate(t0: f64, t1: f64, y0: f64, y1: f64, f0: f64, f1: f64, bump: f64, c: Crossing) -> f64 {
    let mut lo = t0;
    let mut hi = t1;
    // The bracket may start at the threshold already (zero-length segments).
    if y0 >= c.threshold {
        return t0;
    }
    while hi - lo > c.time_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dense(t0, t1, y0, y1, f0, f1, bump, mid) >= c.threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Piecewise quartic record of a continuous path: knots with states and
/// slopes, plus a bump vector per interval (stored with its right knot).
///
/// Knots are stored flat. Two consecutive knots may share a time stamp when
/// the vector field switches there (the slope differs, the state does not);
/// evaluation always uses the interval to the right of such a knot.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DensePath {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    slopes: Vec<f64>,
    bumps: Vec<f64>,
}

impl DensePath {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Append a knot joined to the previous one by a cubic Hermite piece.
    pub fn push(&mut self, t: f64, x: &[f64], dx: &[f64]) {
        debug_assert!(self.times.last().is_none_or(|&last| t >= last));
        self.times.push(t);
        self.states.extend_from_slice(&x[..self.dim]);
        self.slopes.extend_from_slice(&dx[..self.dim]);
        self.bumps.extend(std::iter::repeat_n(0.0, self.dim));
    }

    /// Append a knot whose interval from the previous knot carries `bump`.
    pub fn push_step(&mut self, t: f64, x: &[f64], dx: &[f64], bump: &[f64]) {
        self.push(t, x, dx);
        let n = self.bumps.len();
        self.bumps[n - self.dim..].copy_from_slice(&bump[..self.dim]);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn knot(&self, k: usize) -> (f64, &[f64], &[f64]) {
        let r = k * self.dim..(k + 1) * self.dim;
        (self.times[k], &self.states[r.clone()], &self.slopes[r])
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("empty path")
    }

    /// Interpolated state at `t`, clamped to the recorded range.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        assert!(n > 0, "evaluating an empty path");
        let d = self.dim;
        if n == 1 || t <= self.times[0] {
            let k = self.times.partition_point(|&s| s <= self.times[0]) - 1;
            out[..d].copy_from_slice(&self.states[k * d..(k + 1) * d]);
            return;
        }
        if t >= self.times[n - 1] {
            out[..d].copy_from_slice(&self.states[(n - 1) * d..n * d]);
            return;
        }
        let i = self.times.partition_point(|&s| s <= t);
        let (a, b) = (i - 1, i);
        let (t0, t1) = (self.times[a], self.times[b]);
        for j in 0..d {
            out[j] = dense(
                t0,
                t1,
                self.states[a * d + j],
                self.states[b * d + j],
                self.slopes[a * d + j],
                self.slopes[b * d + j],
                self.bumps[b * d + j],
                t,
            );
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Final recorded state.
    pub fn last_state(&self) -> &[f64] {
        let n = self.times.len();
        &self.states[(n - 1) * self.dim..n * self.dim]
    }

    /// Append every knot of `other` (used to stitch consecutive segments).
    pub fn extend(&mut self, other: &DensePath) {
        assert_eq!(self.dim, other.dim);
        self.times.extend_from_slice(&other.times);
        self.states.extend_from_slice(&other.states);
        self.slopes.extend_from_slice(&other.slopes);
        self.bumps.extend_from_slice(&other.bumps);
        // The first knot of `other` starts a new piece.
        let k = self.times.len() - other.times.len();
        if k > 0 {
            self.bumps[k * self.dim..(k + 1) * self.dim].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Integrate `x' = field(t, x)` over `[t0, t1]` and record the dense path.
pub fn solve_dense<F>(field: F, x0: &[f64], t0: f64, t1: f64, opts: OdeOptions) -> Result<DensePath, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let d = x0.len();
    let mut path = DensePath::new(d);
    let mut integ = Integrator::new(d, opts);
    let mut t = t0;
    let mut y = x0.to_vec();
    let mut f = vec![0.0; d];
    let mut first = true;
    integ.integrate(field, &mut t, &mut y, &mut f, t1, None, |ta, ya, fa, tb, yb, fb, bump| {
        if first {
            path.push(ta, ya, fa);
            first = false;
        }
        path.push_step(tb, yb, fb, bump);
    })?;
    if path.is_empty() {
        path.push(t, &y, &f);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let path = solve_dense(|_, x, dx| dx[0] = -x[0], &[1.0], 0.0, 2.0, OdeOptions::default()).unwrap();
        for k in 0..=40 {
            let t = k as f64 * 0.05;
            assert_abs_diff_eq!(path.eval(t)[0], (-t).exp(), epsilon = 1e-7);
        }
        assert_abs_diff_eq!(path.last_state()[0], (-2.0f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn harmonic_oscillator_two_components() {
        let path = solve_dense(
            |_, x, dx| {
                dx[0] = x[1];
                dx[1] = -x[0];
            },
            &[0.0, 1.0],
            0.0,
            6.0,
            OdeOptions::default(),
        )
        .unwrap();
        let end = path.last_state();
        assert_abs_diff_eq!(end[0], 6.0f64.sin(), epsilon = 1e-7);
        assert_abs_diff_eq!(end[1], 6.0f64.cos(), epsilon = 1e-7);
    }

    #[test]
    fn crossing_of_quadratic_hazard() {
        // y' = t, threshold 2 => t = 2.
        let mut integ = Integrator::new(1, OdeOptions::default());
        let (mut t, mut y, mut f) = (0.0, vec![0.0], vec![0.0]);
        let cross = Crossing {
            index: 0,
            threshold: 2.0,
            time_tol: 1e-12,
        };
        let out = integ
            .integrate(|s, _, d| d[0] = s, &mut t, &mut y, &mut f, 10.0, Some(cross), |_, _, _, _, _, _, _| {})
            .unwrap();
        match out {
            Outcome::Crossed(tau) => assert_abs_diff_eq!(tau, 2.0, epsilon = 1e-9),
            Outcome::Reached => panic!("no crossing"),
        }
    }

    #[test]
    fn zero_field_keeps_state() {
        let path = solve_dense(|_, _, dx| dx[0] = 0.0, &[3.5], 0.0, 1.0, OdeOptions::default()).unwrap();
        assert_eq!(path.eval(0.3)[0], 3.5);
    }

    #[test]
    fn blow_up_is_reported() {
        let err = solve_dense(|_, x, dx| dx[0] = x[0] * x[0], &[1.0], 0.0, 2.0, OdeOptions::default()).unwrap_err();
        assert!(matches!(err, OdeError::StepFailure { .. } | OdeError::NonFiniteState { .. }));
    }

    #[test]
    fn duplicate_knots_pick_right_interval() {
        let mut p = DensePath::new(1);
        p.push(0.0, &[0.0], &[1.0]);
        p.push(1.0, &[1.0], &[1.0]);
        p.push(1.0, &[1.0], &[-1.0]);
        p.push(2.0, &[0.0], &[-1.0]);
        assert_abs_diff_eq!(p.eval(0.5)[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eval(1.5)[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eval(1.0)[0], 1.0, epsilon = 1e-15);
    }
}
