use std::fmt;
use std::sync::Arc;

use super::{Engine, SimConfig, SimError, Trajectory};
use crate::model::PdmpModel;
use crate::rng::{path_rng, SeedInfo};

type TimeFn = dyn Fn(usize, f64) -> f64 + Send + Sync;

/// Family of per-state potentials `V_σ(t)` with derivatives `V'_σ(t)`,
/// perturbing the rates to `r · e^{V_σ' − V_σ}`.
#[derive(Clone)]
pub struct TiltSpec {
    value: Arc<TimeFn>,
    derivative: Arc<TimeFn>,
}

impl TiltSpec {
    pub fn new<V, D>(value: V, derivative: D) -> Self
    where
        V: Fn(usize, f64) -> f64 + Send + Sync + 'static,
        D: Fn(usize, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    pub fn zero() -> Self {
        Self::new(|_, _| 0.0, |_, _| 0.0)
    }

    /// Time-independent `V_σ`.
    pub fn constant(values: Vec<f64>) -> Self {
        Self::new(move |s, _| values[s], |_, _| 0.0)
    }

    /// `V_σ(t) = values[k][σ]` on `[grid[k], grid[k+1])`, right-continuous.
    /// Piecewise C¹ with zero derivative inside every cell.
    pub fn piecewise_constant(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        assert_eq!(grid.len(), values.len() + 1, "one value row per grid cell");
        Self::new(
            move |s, t| {
                let k = grid.partition_point(|&g| g <= t).saturating_sub(1).min(values.len() - 1);
                values[k][s]
            },
            |_, _| 0.0,
        )
    }

    #[inline]
    pub fn value(&self, sigma: usize, t: f64) -> f64 {
        (self.value)(sigma, t)
    }

    #[inline]
    pub fn derivative(&self, sigma: usize, t: f64) -> f64 {
        (self.derivative)(sigma, t)
    }
}

impl fmt::Debug for TiltSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TiltSpec").finish_non_exhaustive()
    }
}

/// A path simulated under the tilted law with `log dP/dP^V` evaluated on it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeightedTrajectory {
    pub trajectory: Trajectory,
    pub log_weight: f64,
}

impl WeightedTrajectory {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Simulate under the perturbed rates `λ(σ,σ') r(σ,σ'|x,t) e^{V_σ'(t) − V_σ(t)}`
/// and record
/// `Σ_jumps [V_{σ(τ−)}(τ) − V_{σ(τ)}(τ)] − ∫ Σ_σ' λ(σ,σ') r (1 − e^{V_σ' − V_σ}) ds`.
pub fn simulate_tilted(
    model: &PdmpModel,
    config: &SimConfig,
    tilt: &TiltSpec,
    x0: &[f64],
    sigma0: usize,
) -> Result<WeightedTrajectory, SimError> {
    simulate_tilted_stream(model, config, tilt, x0, sigma0, 0)
}

pub(crate) fn simulate_tilted_stream(
    model: &PdmpModel,
    config: &SimConfig,
    tilt: &TiltSpec,
    x0: &[f64],
    sigma0: usize,
    stream: u64,
) -> Result<WeightedTrajectory, SimError> {
    config.check()?;
    let mut rng = path_rng(config.seed, stream);
    let seed = SeedInfo {
        master: config.seed,
        stream,
    };
    let (trajectory, log_weight) = Engine::new(model, config, Some(tilt)).run(x0, sigma0, 0.0, &mut rng, seed)?;
    Ok(WeightedTrajectory {
        trajectory,
        log_weight,
    })
}
