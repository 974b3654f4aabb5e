//! Exact event-driven simulation of the λ-accelerated PDMP.
//!
//! Between jumps the mechanical state follows `ẋ = F_σ(x,t)`. The ODE is
//! augmented with the cumulative hazard `Λ̇ = Σ_σ' λ(σ,σ') r(σ,σ'|x,t)` and
//! the next jump happens when `Λ` crosses a unit-exponential threshold. The
//! crossing is located by bisection on the dense output of the step that
//! brackets it. Under a tilt the same machinery runs on the perturbed rates
//! and a third component accumulates the likelihood-ratio integral.

mod ensemble;
pub mod export;
mod occupation;
mod tilt;

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::model::{MetastatePartition, PdmpModel};
use crate::ode::{Crossing, DensePath, Integrator, OdeError, OdeOptions, Outcome};
use crate::rng::{path_rng, PathRng, SeedInfo};

pub use ensemble::{simulate_ensemble, simulate_ensemble_map, simulate_tilted_ensemble_map};
pub use occupation::{occupation_path, time_average, OccupationPath};
pub use tilt::{simulate_tilted, TiltSpec, WeightedTrajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("initial state invalid: {0}")]
    BadInitialState(String),
    #[error("integration failed in state {sigma} starting at t = {t_start}: {source}")]
    Segment {
        sigma: usize,
        t_start: f64,
        #[source]
        source: OdeError,
    },
    #[error("more than {max_jumps} jumps before t = {t} (finite-jump assumption violated in practice)")]
    MaxJumpsExceeded { max_jumps: usize, t: f64 },
    #[error("hazard crossed at t = {t} but all outgoing rates from state {sigma} vanish there")]
    DegenerateJump { sigma: usize, t: f64 },
    #[error("{} of the ensemble paths failed; first: path {}: {}", .failures.len(), .failures[0].0, .failures[0].1)]
    Ensemble { failures: Vec<(usize, Box<SimError>)> },
}

/// How the acceleration λ enters each edge.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub enum EdgeScaling {
    /// Every edge runs at `λ r`.
    #[default]
    Uniform,
    /// Intra-block edges run at `λ r`, inter-block edges at `r`.
    Partition(MetastatePartition),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub lambda: f64,
    pub edge_scaling: EdgeScaling,
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    /// Width of the bisection bracket for a hazard crossing.
    pub event_tol: f64,
    pub max_jumps: usize,
    pub seed: u64,
    /// Worker count for ensembles; `None` uses every logical core.
    pub threads: Option<usize>,
    /// Keep the dense mechanical path on each trajectory.
    pub record_path: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            edge_scaling: EdgeScaling::Uniform,
            ode_rel_tol: 1e-8,
            ode_abs_tol: 1e-10,
            event_tol: 1e-12,
            max_jumps: 10_000_000,
            seed: 0,
            threads: None,
            record_path: true,
        }
    }
}

impl SimConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and positive");
        }
        if !(self.ode_rel_tol > 0.0 && self.ode_abs_tol > 0.0 && self.event_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_jumps == 0 {
            return bad("max_jumps must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        Ok(())
    }

    pub fn ode_options(&self) -> OdeOptions {
        OdeOptions {
            rel_tol: self.ode_rel_tol,
            abs_tol: self.ode_abs_tol,
            ..OdeOptions::default()
        }
    }

    /// `λ(σ, σ')` for this config.
    #[inline]
    pub fn edge_factor(&self, sigma: usize, target: usize) -> f64 {
        match &self.edge_scaling {
            EdgeScaling::Uniform => self.lambda,
            EdgeScaling::Partition(p) => {
                if p.is_fast(sigma, target) {
                    self.lambda
                } else {
                    1.0
                }
            }
        }
    }
}

/// A simulated path `(x(t), σ(t))` on `[t₀, T]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Trajectory {
    pub x0: Vec<f64>,
    pub t0: f64,
    pub horizon: f64,
    /// `τ₁ < … < τ_n`, all in `(t₀, T]`.
    pub jump_times: Vec<f64>,
    /// `σ₀, σ₁, …, σ_n`.
    pub chem_states: Vec<usize>,
    /// Dense mechanical path; empty when recording was disabled.
    pub path: DensePath,
    pub final_x: Vec<f64>,
    pub seed: SeedInfo,
}

impl Trajectory {
    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn sigma0(&self) -> usize {
        self.chem_states[0]
    }

    pub fn final_sigma(&self) -> usize {
        *self.chem_states.last().expect("trajectory has an initial state")
    }

    pub fn final_x(&self) -> &[f64] {
        &self.final_x
    }

    /// Càdlàg chemical state: the post-jump value at a jump instant.
    pub fn state_at(&self, t: f64) -> usize {
        self.chem_states[self.jump_times.partition_point(|&tau| tau <= t)]
    }

    /// Mechanical state at `t` from the dense record.
    pub fn x_at(&self, t: f64) -> Vec<f64> {
        assert!(!self.path.is_empty(), "trajectory was simulated without recording the path");
        self.path.eval(t)
    }

    /// Sojourns `(σ, start, end)` in time order, covering `[t₀, T]`.
    pub fn sojourns(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let n = self.jump_times.len();
        (0..=n).map(move |k| {
            let a = if k == 0 { self.t0 } else { self.jump_times[k - 1] };
            let b = if k == n { self.horizon } else { self.jump_times[k] };
            (self.chem_states[k], a, b)
        })
    }

    /// Total time spent in `sigma`.
    pub fn occupation_time(&self, sigma: usize) -> f64 {
        self.sojourns().filter(|s| s.0 == sigma).map(|(_, a, b)| b - a).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentOutcome {
    JumpAt(f64),
    HorizonReached,
}

/// One deterministic piece of a path.
#[derive(Debug, Clone)]
pub struct Segment {
    pub path: DensePath,
    pub outcome: SegmentOutcome,
    /// Cumulative hazard at the segment end.
    pub hazard: f64,
    pub final_x: Vec<f64>,
}

/// Integrate the flow of `sigma` from `(x0, t0)` together with the cumulative
/// hazard of the λ-scaled rates until the hazard reaches `threshold` or the
/// model horizon is reached.
pub fn integrate_segment(
    model: &PdmpModel,
    sigma: usize,
    x0: &[f64],
    t0: f64,
    threshold: f64,
    config: &SimConfig,
) -> Result<Segment, SimError> {
    config.check()?;
    if !(threshold > 0.0) {
        return Err(SimError::InvalidConfig("hazard threshold must be positive".into()));
    }
    let mut engine = Engine::new(model, config, None);
    let mut path = DensePath::new(model.dim());
    let mut x = x0.to_vec();
    let mut t = t0;
    let run = engine.segment(sigma, &mut t, &mut x, threshold, Some(&mut path))?;
    Ok(Segment {
        path,
        outcome: if run.jumped {
            SegmentOutcome::JumpAt(t)
        } else {
            SegmentOutcome::HorizonReached
        },
        hazard: run.hazard,
        final_x: x,
    })
}

pub(crate) struct SegmentRun {
    jumped: bool,
    hazard: f64,
    /// `∫ Σ λ(σ,σ') (r − r̃) ds` over the segment (zero without a tilt).
    tilt_integral: f64,
}

pub(crate) struct Engine<'a> {
    model: &'a PdmpModel,
    config: &'a SimConfig,
    tilt: Option<&'a TiltSpec>,
    integ: Integrator,
    y: Vec<f64>,
    f: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(model: &'a PdmpModel, config: &'a SimConfig, tilt: Option<&'a TiltSpec>) -> Self {
        let n = model.dim() + 2;
        Self {
            model,
            config,
            tilt,
            integ: Integrator::new(n, config.ode_options()),
            y: vec![0.0; n],
            f: vec![0.0; n],
            weights: vec![0.0; model.n_states()],
        }
    }

    fn segment(
        &mut self,
        sigma: usize,
        t: &mut f64,
        x: &mut [f64],
        threshold: f64,
        mut record: Option<&mut DensePath>,
    ) -> Result<SegmentRun, SimError> {
        let model = self.model;
        let config = self.config;
        let tilt = self.tilt;
        let d = model.dim();
        let n_states = model.n_states();
        let horizon = model.horizon();
        self.y[..d].copy_from_slice(x);
        self.y[d] = 0.0;
        self.y[d + 1] = 0.0;
        let rhs = |s: f64, y: &[f64], dy: &mut [f64]| {
            model.field_into(sigma, &y[..d], s, &mut dy[..d]);
            let mut hazard = 0.0;
            let mut tilt_rate = 0.0;
            match tilt {
                None => {
                    for sp in 0..n_states {
                        if sp != sigma {
                            hazard += config.edge_factor(sigma, sp) * model.rates().rate(sigma, sp, &y[..d], s);
                        }
                    }
                }
                Some(v) => {
                    let v_here = v.value(sigma, s);
                    for sp in 0..n_states {
                        if sp != sigma {
                            let r = config.edge_factor(sigma, sp) * model.rates().rate(sigma, sp, &y[..d], s);
                            let rt = r * (v.value(sp, s) - v_here).exp();
                            hazard += rt;
                            tilt_rate += r - rt;
                        }
                    }
                }
            }
            dy[d] = hazard;
            dy[d + 1] = tilt_rate;
        };
        let crossing = Crossing {
            index: d,
            threshold,
            time_tol: config.event_tol,
        };
        let t_start = *t;
        let mut first = true;
        let outcome = self
            .integ
            .integrate(rhs, t, &mut self.y, &mut self.f, horizon, Some(crossing), |ta, ya, fa, tb, yb, fb, bump| {
                if let Some(path) = record.as_deref_mut() {
                    if first {
                        path.push(ta, &ya[..d], &fa[..d]);
                        first = false;
                    }
                    path.push_step(tb, &yb[..d], &fb[..d], &bump[..d]);
                }
            })
            .map_err(|source| SimError::Segment {
                sigma,
                t_start,
                source,
            })?;
        if let Some(path) = record {
            if first {
                path.push(*t, &self.y[..d], &self.f[..d]);
            }
        }
        x.copy_from_slice(&self.y[..d]);
        Ok(SegmentRun {
            jumped: matches!(outcome, Outcome::Crossed(_)),
            hazard: self.y[d],
            tilt_integral: self.y[d + 1],
        })
    }

    /// Draw the post-jump state with probabilities proportional to the
    /// (scaled, possibly tilted) rates out of `sigma` at `(x, t)`.
    fn choose_target(&mut self, sigma: usize, x: &[f64], t: f64, rng: &mut PathRng) -> Result<usize, SimError> {
        let n = self.model.n_states();
        let mut total = 0.0;
        let v_here = self.tilt.map(|v| v.value(sigma, t));
        for sp in 0..n {
            let w = if sp == sigma {
                0.0
            } else {
                let r = self.config.edge_factor(sigma, sp) * self.model.rates().rate(sigma, sp, x, t);
                match (self.tilt, v_here) {
                    (Some(v), Some(vh)) => r * (v.value(sp, t) - vh).exp(),
                    _ => r,
                }
            };
            self.weights[sp] = w;
            total += w;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(SimError::DegenerateJump { sigma, t });
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = sigma;
        for sp in 0..n {
            if self.weights[sp] > 0.0 {
                acc += self.weights[sp];
                last_positive = sp;
                if u < acc {
                    return Ok(sp);
                }
            }
        }
        Ok(last_positive)
    }

    /// Simulate one full path; returns the trajectory and `log dP/dP^V`.
    pub(crate) fn run(
        &mut self,
        x0: &[f64],
        sigma0: usize,
        t0: f64,
        rng: &mut PathRng,
        seed: SeedInfo,
    ) -> Result<(Trajectory, f64), SimError> {
        let model = self.model;
        if sigma0 >= model.n_states() {
            return Err(SimError::BadInitialState(format!(
                "state {sigma0} not in Γ (|Γ| = {})",
                model.n_states()
            )));
        }
        if x0.len() != model.dim() {
            return Err(SimError::BadInitialState(format!(
                "x0 has dimension {}, model has {}",
                x0.len(),
                model.dim()
            )));
        }
        if !(t0 < model.horizon()) {
            return Err(SimError::BadInitialState(format!("t0 = {t0} is not before the horizon")));
        }
        let mut path = self.config.record_path.then(|| DensePath::new(model.dim()));
        let mut x = x0.to_vec();
        let mut t = t0;
        let mut sigma = sigma0;
        let mut jump_times = Vec::new();
        let mut chem_states = vec![sigma0];
        let mut log_weight = 0.0;
        loop {
            let threshold: f64 = loop {
                let e: f64 = rng.sample(Exp1);
                if e > 0.0 {
                    break e;
                }
            };
            let run = self.segment(sigma, &mut t, &mut x, threshold, path.as_mut())?;
            log_weight -= run.tilt_integral;
            if !run.jumped {
                break;
            }
            if jump_times.len() >= self.config.max_jumps {
                return Err(SimError::MaxJumpsExceeded {
                    max_jumps: self.config.max_jumps,
                    t,
                });
            }
            let next = self.choose_target(sigma, &x, t, rng)?;
            if let Some(v) = self.tilt {
                log_weight += v.value(sigma, t) - v.value(next, t);
            }
            jump_times.push(t);
            chem_states.push(next);
            sigma = next;
            if t >= model.horizon() {
                break;
            }
        }
        Ok((
            Trajectory {
                x0: x0.to_vec(),
                t0,
                horizon: model.horizon(),
                jump_times,
                chem_states,
                path: path.unwrap_or_else(|| DensePath::new(model.dim())),
                final_x: x,
                seed,
            },
            log_weight,
        ))
    }
}

/// Simulate one path from `(x₀, σ₀)` at time `t₀`, using stream 0 of the
/// configured master seed.
pub fn simulate_path(
    model: &PdmpModel,
    config: &SimConfig,
    x0: &[f64],
    sigma0: usize,
    t0: f64,
) -> Result<Trajectory, SimError> {
    simulate_path_stream(model, config, x0, sigma0, t0, 0)
}

/// As [`simulate_path`] with an explicit stream index.
pub fn simulate_path_stream(
    model: &PdmpModel,
    config: &SimConfig,
    x0: &[f64],
    sigma0: usize,
    t0: f64,
    stream: u64,
) -> Result<Trajectory, SimError> {
    config.check()?;
    let mut rng = path_rng(config.seed, stream);
    let seed = SeedInfo {
        master: config.seed,
        stream,
    };
    Engine::new(model, config, None)
        .run(x0, sigma0, t0, &mut rng, seed)
        .map(|(traj, _)| traj)
}
