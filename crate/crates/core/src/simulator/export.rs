//! Trajectory export: grid samples, exact jump table and a JSON summary.

use serde::Serialize;

use super::{Trajectory, WeightedTrajectory};
use crate::io::{fmt_f64, CsvTable};

/// Columns `t, x_1..x_d, sigma` sampled on `grid` (the path must be recorded).
pub fn trajectory_csv(trajectory: &Trajectory, grid: &[f64]) -> String {
    let d = trajectory.x0.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.push("sigma".into());
    let mut table = CsvTable::new(&header);
    for &t in grid {
        let mut cells = vec![fmt_f64(t)];
        cells.extend(trajectory.x_at(t).into_iter().map(fmt_f64));
        cells.push(trajectory.state_at(t).to_string());
        table.row(&cells);
    }
    table.finish()
}

/// Columns `tau_k, sigma_before, sigma_after`, one row per jump.
pub fn jump_table_csv(trajectory: &Trajectory) -> String {
    let mut table = CsvTable::new(&["tau_k", "sigma_before", "sigma_after"]);
    for (k, &tau) in trajectory.jump_times.iter().enumerate() {
        table.row(&[
            fmt_f64(tau),
            trajectory.chem_states[k].to_string(),
            trajectory.chem_states[k + 1].to_string(),
        ]);
    }
    table.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub n_jumps: usize,
    pub final_x: Vec<f64>,
    pub final_sigma: usize,
    pub horizon: f64,
    pub seed: u64,
    pub stream: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_weight: Option<f64>,
}

impl TrajectorySummary {
    pub fn of(trajectory: &Trajectory) -> Self {
        Self {
            n_jumps: trajectory.n_jumps(),
            final_x: trajectory.final_x.clone(),
            final_sigma: trajectory.final_sigma(),
            horizon: trajectory.horizon,
            seed: trajectory.seed.master,
            stream: trajectory.seed.stream,
            log_weight: None,
        }
    }

    pub fn of_weighted(w: &WeightedTrajectory) -> Self {
        Self {
            log_weight: Some(w.log_weight),
            ..Self::of(&w.trajectory)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::registry::two_state_linear;
    use crate::quad::uniform_grid;
    use crate::simulator::{simulate_path, SimConfig};

    #[test]
    fn csv_shapes_and_summary() {
        let m = two_state_linear(1.0, 1.0, 1.0, 1.0).unwrap();
        let cfg = SimConfig {
            seed: 2,
            ..SimConfig::with_lambda(10.0)
        };
        let tr = simulate_path(&m, &cfg, &[0.0], 0, 0.0).unwrap();
        let csv = trajectory_csv(&tr, &uniform_grid(1.0, 10));
        assert_eq!(csv.lines().count(), 12);
        assert_eq!(csv.lines().next().unwrap(), "t,x_1,sigma");
        let jumps = jump_table_csv(&tr);
        assert_eq!(jumps.lines().count(), tr.n_jumps() + 1);
        let json: serde_json::Value = serde_json::from_str(&TrajectorySummary::of(&tr).to_json()).unwrap();
        assert_eq!(json["n_jumps"], tr.n_jumps());
        assert!(json.get("log_weight").is_none());
    }
}
