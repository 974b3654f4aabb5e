//! PDMP models: chemical state spaces, force and rate fields, standing
//! assumption checks and the built-in model families.

mod partition;
pub mod registry;
mod validate;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

pub use partition::{MetastatePartition, PartitionError};
pub use registry::{registry_get, FamilyParams, RegistryError, FAMILIES};
pub use validate::{
    validate, Assumption, Probe, ProbeGrid, ValidationFailure, ValidationReport, IRREDUCIBILITY_TOL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("chemical state space must contain at least one state")]
    EmptyStateSpace,
    #[error("duplicate chemical state label {0:?}")]
    DuplicateLabel(String),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("horizon must be finite and positive, got {0}")]
    BadHorizon(f64),
    #[error("growth constants must be nonnegative, got ({0}, {1})")]
    BadGrowth(f64, f64),
}

/// Ordered, labelled chemical state set Γ. States are addressed by index.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ChemicalStateSpace {
    labels: Vec<String>,
}

impl ChemicalStateSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(ModelError::EmptyStateSpace);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(ModelError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// States labelled `"0"`, `"1"`, ...
    pub fn numbered(n: usize) -> Result<Self, ModelError> {
        Self::new((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

pub type ForceFn = dyn Fn(usize, &[f64], f64, &mut [f64]) + Send + Sync;
pub type RateFn = dyn Fn(usize, usize, &[f64], f64) -> f64 + Send + Sync;

/// Per-state vector fields `F_σ(x, t)`, written into an output slice.
#[derive(Clone)]
pub struct ForceField {
    eval: Arc<ForceFn>,
    growth: (f64, f64),
    lipschitz_hint: Option<f64>,
}

impl ForceField {
    /// `growth = (κ₁, κ₂)` is the linear growth bound `|F_σ(x,t)| ≤ κ₁ + κ₂|x|`.
    pub fn new<F>(growth: (f64, f64), f: F) -> Result<Self, ModelError>
    where
        F: Fn(usize, &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        if !(growth.0 >= 0.0 && growth.1 >= 0.0) {
            return Err(ModelError::BadGrowth(growth.0, growth.1));
        }
        Ok(Self {
            eval: Arc::new(f),
            growth,
            lipschitz_hint: None,
        })
    }

    pub fn with_lipschitz_hint(mut self, k: f64) -> Self {
        self.lipschitz_hint = Some(k);
        self
    }

    #[inline]
    pub fn eval_into(&self, sigma: usize, x: &[f64], t: f64, out: &mut [f64]) {
        (self.eval)(sigma, x, t, out)
    }

    pub fn growth_constants(&self) -> (f64, f64) {
        self.growth
    }

    pub fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz_hint
    }
}

impl fmt::Debug for ForceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForceField")
            .field("growth", &self.growth)
            .field("lipschitz_hint", &self.lipschitz_hint)
            .finish_non_exhaustive()
    }
}

/// Jump rates `r(σ, σ' | x, t)` for `σ ≠ σ'`. The diagonal is never queried.
#[derive(Clone)]
pub struct RateField {
    eval: Arc<RateFn>,
}

impl RateField {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(usize, usize, &[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Self { eval: Arc::new(f) }
    }

    /// Constant rate matrix (diagonal ignored).
    pub fn constant(matrix: Vec<Vec<f64>>) -> Self {
        Self::new(move |s, sp, _, _| matrix[s][sp])
    }

    #[inline]
    pub fn rate(&self, sigma: usize, target: usize, x: &[f64], t: f64) -> f64 {
        (self.eval)(sigma, target, x, t)
    }
}

impl fmt::Debug for RateField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateField").finish_non_exhaustive()
    }
}

/// A PDMP with characteristics `(F, r)` on `ℝ^d × Γ` over `[0, T]`.
#[derive(Debug, Clone)]
pub struct PdmpModel {
    states: ChemicalStateSpace,
    force: ForceField,
    rates: RateField,
    dim: usize,
    horizon: f64,
}

impl PdmpModel {
    pub fn new(
        states: ChemicalStateSpace,
        force: ForceField,
        rates: RateField,
        dim: usize,
        horizon: f64,
    ) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ModelError::BadHorizon(horizon));
        }
        Ok(Self {
            states,
            force,
            rates,
            dim,
            horizon,
        })
    }

    pub fn states(&self) -> &ChemicalStateSpace {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn force(&self) -> &ForceField {
        &self.force
    }

    pub fn rates(&self) -> &RateField {
        &self.rates
    }

    /// Same fields and rates on a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self, ModelError> {
        Self::new(self.states.clone(), self.force.clone(), self.rates.clone(), self.dim, horizon)
    }

    #[inline]
    pub fn field_into(&self, sigma: usize, x: &[f64], t: f64, out: &mut [f64]) {
        self.force.eval_into(sigma, x, t, out)
    }

    pub fn field(&self, sigma: usize, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.field_into(sigma, x, t, &mut out);
        out
    }

    #[inline]
    pub fn rate(&self, sigma: usize, target: usize, x: &[f64], t: f64) -> f64 {
        if sigma == target {
            0.0
        } else {
            self.rates.rate(sigma, target, x, t)
        }
    }

    /// `γ_σ(x,t) = Σ_{σ'≠σ} r(σ,σ'|x,t)`.
    pub fn total_jump_rate(&self, sigma: usize, x: &[f64], t: f64) -> f64 {
        (0..self.n_states())
            .filter(|&sp| sp != sigma)
            .map(|sp| self.rates.rate(sigma, sp, x, t))
            .sum()
    }

    /// Off-diagonal rate matrix `r(σ,σ'|x,t)`, zero diagonal.
    pub fn rate_matrix(&self, x: &[f64], t: f64) -> DMatrix<f64> {
        let n = self.n_states();
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { self.rates.rate(i, j, x, t) })
    }

    /// Generator `L_c(x,t)` of the frozen chemical chain: off-diagonal
    /// entries are the rates and each row sums to zero.
    pub fn chemical_generator(&self, x: &[f64], t: f64) -> DMatrix<f64> {
        generator_from_rates(&self.rate_matrix(x, t))
    }
}

/// Turn an off-diagonal rate matrix into a generator (diagonal = −row sum).
pub fn generator_from_rates(rates: &DMatrix<f64>) -> DMatrix<f64> {
    let n = rates.nrows();
    let mut l = rates.clone();
    for i in 0..n {
        l[(i, i)] = 0.0;
        let out: f64 = (0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
        l[(i, i)] = -out;
    }
    l
}

/// Strong connectivity of the digraph with an edge `i → j` wherever
/// `weights[(i, j)] > tol` (diagonal ignored).
pub fn strongly_connected(weights: &DMatrix<f64>, tol: f64) -> bool {
    let n = weights.nrows();
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { weights[(i, j)] } else { weights[(j, i)] };
                if i != j && w > tol && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}
