//! Experiment configuration: a TOML file whose sections are all optional and
//! whose keys are all checked. Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use pdmp::coarse::WindowEvent;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub sim: SimSection,
    pub simulate: SimulateSection,
    pub lln: LlnSection,
    pub ldp_rate: LdpRateSection,
    pub tilt: TiltSection,
    pub coarse: CoarseSection,
    pub motor: MotorSection,
    pub motor_phase: MotorPhaseSection,
    pub motor_run: MotorRunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub family: String,
    pub params: BTreeMap<String, f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            family: "two_state_linear".into(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub lambda: f64,
    pub seed: u64,
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    pub event_tol: f64,
    pub max_jumps: usize,
    /// Metastate blocks; when present only intra-block edges are accelerated.
    pub partition: Option<Vec<Vec<usize>>>,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = pdmp::SimConfig::default();
        Self {
            lambda: d.lambda,
            seed: d.seed,
            ode_rel_tol: d.ode_rel_tol,
            ode_abs_tol: d.ode_abs_tol,
            event_tol: d.event_tol,
            max_jumps: d.max_jumps,
            partition: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub x0: Vec<f64>,
    pub sigma0: usize,
    pub grid_cells: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            x0: vec![0.0],
            sigma0: 0,
            grid_cells: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlnSection {
    pub x0: Vec<f64>,
    pub sigma0: usize,
    pub lambdas: Vec<f64>,
    pub n_paths: usize,
    pub grid_cells: usize,
}

impl Default for LlnSection {
    fn default() -> Self {
        Self {
            x0: vec![0.0],
            sigma0: 0,
            lambdas: vec![10.0, 100.0, 1000.0],
            n_paths: 200,
            grid_cells: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdpRateSection {
    /// Path-pair CSV (`t, x_1.., rho_sigma0..`); overrides `rho`.
    pub pair: Option<String>,
    /// Constant occupation density used when no pair file is given.
    pub rho: Vec<f64>,
    pub x0: Vec<f64>,
    pub grid_cells: usize,
}

impl Default for LdpRateSection {
    fn default() -> Self {
        Self {
            pair: None,
            rho: vec![0.5, 0.5],
            x0: vec![0.0],
            grid_cells: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiltSection {
    pub x0: Vec<f64>,
    pub sigma0: usize,
    pub n_paths: usize,
    /// Constant potentials `V_σ`.
    pub potentials: Vec<f64>,
    /// Estimate `P(time fraction in event_state > event_fraction)`.
    pub event_state: usize,
    pub event_fraction: f64,
}

impl Default for TiltSection {
    fn default() -> Self {
        Self {
            x0: vec![0.0],
            sigma0: 0,
            n_paths: 1000,
            potentials: vec![0.0, 0.0],
            event_state: 0,
            event_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarseSection {
    pub blocks: Vec<Vec<usize>>,
    pub x0: Vec<f64>,
    pub sigma0: usize,
    pub lambdas: Vec<f64>,
    pub n_paths: usize,
    pub grid_cells: usize,
    pub events: Vec<WindowEvent>,
}

impl Default for CoarseSection {
    fn default() -> Self {
        Self {
            blocks: vec![vec![0], vec![1, 2]],
            x0: vec![0.0],
            sigma0: 1,
            lambdas: vec![10.0, 100.0, 1000.0],
            n_paths: 2000,
            grid_cells: 200,
            events: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorSection {
    pub beta: f64,
    pub epsilon: f64,
    /// Load; `motor-run` picks the middle of the bistable range when absent.
    pub f: Option<f64>,
    pub omega_slow: f64,
    pub omega_fast: f64,
}

impl Default for MotorSection {
    fn default() -> Self {
        let d = pdmp::motor::MotorParams::default();
        Self {
            beta: d.beta,
            epsilon: d.epsilon,
            f: None,
            omega_slow: d.omega_slow,
            omega_fast: d.omega_fast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorPhaseSection {
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub fs: Vec<f64>,
    /// `F_*` profile at the motor section's parameters.
    pub profile_lo: f64,
    pub profile_hi: f64,
    pub profile_points: usize,
}

impl Default for MotorPhaseSection {
    fn default() -> Self {
        Self {
            betas: (3..=10).map(f64::from).collect(),
            epsilons: vec![-0.5],
            fs: vec![0.0, 0.25, 0.5],
            profile_lo: -2.0,
            profile_hi: 2.0,
            profile_points: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorRunSection {
    /// Starting points; defaults to 0.3 outside each outer root.
    pub x0: Vec<f64>,
    pub n_paths: usize,
    pub horizon: f64,
}

impl Default for MotorRunSection {
    fn default() -> Self {
        Self {
            x0: Vec::new(),
            n_paths: 500,
            horizon: 5.0,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config {
            origin: origin.to_string(),
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    /// A run manifest's embedded config.
    pub fn from_manifest(text: &str, origin: &str) -> Result<Self, CliError> {
        let bad = |e: serde_json::Error| CliError::Config {
            origin: origin.to_string(),
            line: Some(e.line()),
            message: e.to_string(),
        };
        let mut manifest: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
        let config = manifest.get_mut("config").map(serde_json::Value::take).ok_or_else(|| CliError::Config {
            origin: origin.to_string(),
            line: None,
            message: "manifest has no config".into(),
        })?;
        serde_json::from_value(config).map_err(bad)
    }

    /// TOML, or a previous run's `manifest.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let origin = path.display().to_string();
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_manifest(&text, &origin)
        } else {
            Self::parse(&text, &origin)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("", "t").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = "[sim]\nlambda = 2.0\nlamda = 3.0\n";
        match ExperimentConfig::parse(text, "t") {
            Err(CliError::Config { line, message, .. }) => {
                assert_eq!(line, Some(3));
                assert!(message.contains("lamda"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(ExperimentConfig::parse("[nonsense]\n", "t").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let text = "[model]\nfamily = \"motor3\"\n[model.params]\nbeta = 6.0\n[sim]\nlambda = 50.0\npartition = [[0], [1, 2]]\n";
        let cfg = ExperimentConfig::parse(text, "t").unwrap();
        assert_eq!(cfg.model.params["beta"], 6.0);
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml(), "echo").unwrap(), cfg);
    }
}
