//! Built-in model families, selected by name with numeric parameters.
//!
//! | family             | parameters (default)                                                       |
//! |--------------------|-----------------------------------------------------------------------------|
//! | `two_state_linear` | `a` (1), `gamma0` (1), `gamma1` (1), `horizon` (1)                          |
//! | `motor3`           | `beta` (8), `epsilon` (-0.5), `f` (0), `omega_slow` (1), `omega_fast` (1), `horizon` (1) |
//! | `random_ergodic`   | `seed` (0), `n_states` (3), `dim` (1), `horizon` (1)                        |

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{ChemicalStateSpace, ForceField, ModelError, PdmpModel, RateField};
use crate::motor::{motor_model, MotorError, MotorParams};

pub const FAMILIES: [&str; 3] = ["two_state_linear", "motor3", "random_ergodic"];

pub type FamilyParams = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("unknown model family {0:?} (known: two_state_linear, motor3, random_ergodic)")]
    UnknownFamily(String),
    #[error("bad parameter {key:?} for {family}: {reason}")]
    BadParams {
        family: String,
        key: String,
        reason: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

struct Reader<'a> {
    family: &'a str,
    params: &'a FamilyParams,
    allowed: &'static [&'static str],
}

impl Reader<'_> {
    fn bad(&self, key: &str, reason: impl Into<String>) -> RegistryError {
        RegistryError::BadParams {
            family: self.family.to_string(),
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    fn check_keys(&self) -> Result<(), RegistryError> {
        match self.params.keys().find(|k| !self.allowed.contains(&k.as_str())) {
            Some(k) => Err(self.bad(k, format!("unknown key; allowed: {}", self.allowed.join(", ")))),
            None => Ok(()),
        }
    }

    fn real(&self, key: &str, default: f64) -> Result<f64, RegistryError> {
        let v = self.params.get(key).copied().unwrap_or(default);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad(key, "must be finite"))
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, RegistryError> {
        let v = self.real(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.bad(key, "must be positive"))
        }
    }

    fn nonneg(&self, key: &str, default: f64) -> Result<f64, RegistryError> {
        let v = self.real(key, default)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(self.bad(key, "must be nonnegative"))
        }
    }

    fn count(&self, key: &str, default: u64, min: u64) -> Result<u64, RegistryError> {
        let v = self.real(key, default as f64)?;
        if v.fract() != 0.0 || v < min as f64 || v > 9.007_199_254_740_992e15 {
            return Err(self.bad(key, format!("must be an integer >= {min}")));
        }
        Ok(v as u64)
    }
}

/// Assemble a built-in model.
pub fn registry_get(name: &str, params: &FamilyParams) -> Result<PdmpModel, RegistryError> {
    match name {
        "two_state_linear" => {
            let rd = Reader {
                family: name,
                params,
                allowed: &["a", "gamma0", "gamma1", "horizon"],
            };
            rd.check_keys()?;
            two_state_linear(
                rd.real("a", 1.0)?,
                rd.nonneg("gamma0", 1.0)?,
                rd.nonneg("gamma1", 1.0)?,
                rd.positive("horizon", 1.0)?,
            )
            .map_err(Into::into)
        }
        "motor3" => {
            let rd = Reader {
                family: name,
                params,
                allowed: &["beta", "epsilon", "f", "omega_slow", "omega_fast", "horizon"],
            };
            rd.check_keys()?;
            let p = MotorParams {
                beta: rd.positive("beta", 8.0)?,
                epsilon: rd.real("epsilon", -0.5)?,
                f: rd.real("f", 0.0)?,
                omega_slow: rd.positive("omega_slow", 1.0)?,
                omega_fast: rd.positive("omega_fast", 1.0)?,
            };
            motor_model(p, rd.positive("horizon", 1.0)?).map_err(|e| match e {
                MotorError::Model(m) => RegistryError::Model(m),
                other => rd.bad("motor", other.to_string()),
            })
        }
        "random_ergodic" => {
            let rd = Reader {
                family: name,
                params,
                allowed: &["seed", "n_states", "dim", "horizon"],
            };
            rd.check_keys()?;
            random_ergodic(
                rd.count("seed", 0, 0)?,
                rd.count("n_states", 3, 1)? as usize,
                rd.count("dim", 1, 1)? as usize,
                rd.positive("horizon", 1.0)?,
            )
            .map_err(Into::into)
        }
        other => Err(RegistryError::UnknownFamily(other.to_string())),
    }
}

/// `F₀ = −x`, `F₁ = −x + a` in `d = 1`, constant rates `r(0,1) = γ₀`, `r(1,0) = γ₁`.
pub fn two_state_linear(a: f64, gamma0: f64, gamma1: f64, horizon: f64) -> Result<PdmpModel, ModelError> {
    let force = ForceField::new((a.abs(), 1.0), move |s, x, _, out| {
        out[0] = -x[0] + if s == 1 { a } else { 0.0 };
    })?
    .with_lipschitz_hint(1.0);
    PdmpModel::new(
        ChemicalStateSpace::numbered(2)?,
        force,
        RateField::constant(vec![vec![0.0, gamma0], vec![gamma1, 0.0]]),
        1,
        horizon,
    )
}

/// Seeded random irreducible model: `F_σ(x) = −x + v_σ` and
/// `r(σ,σ'|x,t) = b_{σσ'} (1 + (c_{σσ'}·x)²)(1 + t/2)`, all `b > 0`.
pub fn random_ergodic(seed: u64, n_states: usize, dim: usize, horizon: f64) -> Result<PdmpModel, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<Vec<f64>> = (0..n_states)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let base: Vec<f64> = (0..n_states * n_states).map(|_| rng.random_range(0.2..2.0)).collect();
    let coupling: Vec<f64> = (0..n_states * n_states * dim)
        .map(|_| rng.random_range(-0.5..0.5))
        .collect();
    let kappa1 = shifts
        .iter()
        .map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let force = ForceField::new((kappa1, 1.0), move |s, x, _, out| {
        for i in 0..x.len() {
            out[i] = -x[i] + shifts[s][i];
        }
    })?
    .with_lipschitz_hint(1.0);
    let rates = RateField::new(move |s, sp, x, t| {
        let e = s * n_states + sp;
        let proj: f64 = (0..dim).map(|i| coupling[e * dim + i] * x[i]).sum();
        base[e] * (1.0 + proj * proj) * (1.0 + 0.5 * t)
    });
    PdmpModel::new(ChemicalStateSpace::numbered(n_states)?, force, rates, dim, horizon)
}
