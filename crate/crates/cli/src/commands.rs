use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use pdmp::averaging::lln_report;
use pdmp::coarse::convergence_report;
use pdmp::io::{fmt_f64, CsvTable};
use pdmp::ldp::{path_rate_J, rate_sweep, rate_sweep_csv, PathPair};
use pdmp::model::registry::registry_get;
use pdmp::motor::{
    directionality_experiment, find_bistable_f, find_fstar_roots, fstar_profile_csv, phase_csv, phase_row,
    MotorParams,
};
use pdmp::quad::uniform_grid;
use pdmp::simulator::export::{jump_table_csv, trajectory_csv, TrajectorySummary};
use pdmp::simulator::{simulate_path, simulate_tilted_ensemble_map, EdgeScaling, TiltSpec};
use pdmp::stats::{mean, std_error};
use pdmp::{MetastatePartition, PdmpModel, SimConfig};

use crate::config::{ExperimentConfig, MotorSection};
use crate::error::CliError;

/// Name and contents of every artifact a command produces.
pub type Artifacts = Vec<(&'static str, String)>;

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("artifact serializes")
}

fn build_model(cfg: &ExperimentConfig) -> Result<PdmpModel, CliError> {
    registry_get(&cfg.model.family, &cfg.model.params).map_err(|e| CliError::run("model", e))
}

fn partition(n_states: usize, blocks: &[Vec<usize>]) -> Result<MetastatePartition, CliError> {
    MetastatePartition::new(n_states, blocks.to_vec()).map_err(|e| CliError::run("partition", e))
}

pub fn sim_config(cfg: &ExperimentConfig, n_states: usize, threads: Option<usize>) -> Result<SimConfig, CliError> {
    let s = &cfg.sim;
    let edge_scaling = match &s.partition {
        Some(blocks) => EdgeScaling::Partition(partition(n_states, blocks)?),
        None => EdgeScaling::Uniform,
    };
    Ok(SimConfig {
        lambda: s.lambda,
        edge_scaling,
        ode_rel_tol: s.ode_rel_tol,
        ode_abs_tol: s.ode_abs_tol,
        event_tol: s.event_tol,
        max_jumps: s.max_jumps,
        seed: s.seed,
        threads,
        record_path: true,
    })
}

pub fn simulate(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Artifacts, CliError> {
    let model = build_model(cfg)?;
    let sc = sim_config(cfg, model.n_states(), threads)?;
    let s = &cfg.simulate;
    if s.grid_cells == 0 {
        return Err(CliError::run("simulate", "grid_cells must be positive"));
    }
    let traj = simulate_path(&model, &sc, &s.x0, s.sigma0, 0.0).map_err(|e| CliError::run("simulate", e))?;
    let grid = uniform_grid(model.horizon(), s.grid_cells);
    Ok(vec![
        ("trajectory.csv", trajectory_csv(&traj, &grid)),
        ("jumps.csv", jump_table_csv(&traj)),
        ("summary.json", TrajectorySummary::of(&traj).to_json()),
    ])
}

pub fn lln(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Artifacts, CliError> {
    let model = build_model(cfg)?;
    let sc = sim_config(cfg, model.n_states(), threads)?;
    let l = &cfg.lln;
    let report = lln_report(&model, &sc, &l.x0, l.sigma0, &l.lambdas, l.n_paths, |_| 1.0, l.grid_cells)
        .map_err(|e| CliError::run("lln", e))?;
    Ok(vec![("lln.csv", report.to_csv()), ("lln.json", report.to_json())])
}

#[derive(Serialize)]
struct RateSummary {
    n_cells: usize,
    rate: f64,
    max_residual: f64,
}

pub fn ldp_rate(cfg: &ExperimentConfig, base: &Path) -> Result<Artifacts, CliError> {
    let model = build_model(cfg)?;
    let l = &cfg.ldp_rate;
    let pair = match &l.pair {
        Some(file) => {
            let path = base.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            PathPair::from_csv(&text).map_err(|e| CliError::run("path pair", e))?
        }
        None => {
            if l.grid_cells == 0 {
                return Err(CliError::run("ldp-rate", "grid_cells must be positive"));
            }
            let grid = uniform_grid(model.horizon(), l.grid_cells);
            let rho = vec![l.rho.clone(); grid.len()];
            let opts = SimConfig::default().ode_options();
            PathPair::from_rho(&model, grid, rho, &l.x0, opts).map_err(|e| CliError::run("path pair", e))?
        }
    };
    let rows = rate_sweep(&model, &pair).map_err(|e| CliError::run("rate sweep", e))?;
    let rate = path_rate_J(&model, &pair).map_err(|e| CliError::run("rate", e))?;
    let summary = RateSummary {
        n_cells: pair.n_cells(),
        rate,
        max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
    };
    Ok(vec![
        ("path_pair.csv", pair.to_csv()),
        ("rate_sweep.csv", rate_sweep_csv(&rows)),
        ("summary.json", json(&summary)),
    ])
}

#[derive(Serialize)]
struct TiltSummary {
    n_paths: usize,
    mean_weight: f64,
    se_weight: f64,
    event_state: usize,
    event_fraction: f64,
    event_prob: f64,
    event_se: f64,
}

pub fn tilt(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Artifacts, CliError> {
    let model = build_model(cfg)?;
    let mut sc = sim_config(cfg, model.n_states(), threads)?;
    sc.record_path = false;
    let t = &cfg.tilt;
    if t.potentials.len() != model.n_states() {
        return Err(CliError::run(
            "tilt",
            format!("{} potentials for {} states", t.potentials.len(), model.n_states()),
        ));
    }
    if t.event_state >= model.n_states() {
        return Err(CliError::run("tilt", "event_state out of range"));
    }
    if t.n_paths < 2 {
        return Err(CliError::run("tilt", "n_paths must be at least 2"));
    }
    let horizon = model.horizon();
    let spec = TiltSpec::constant(t.potentials.clone());
    let rows = simulate_tilted_ensemble_map(&model, &sc, &spec, &t.x0, t.sigma0, t.n_paths, |_, w| {
        (
            w.log_weight,
            w.trajectory.n_jumps(),
            w.trajectory.final_sigma(),
            w.trajectory.occupation_time(t.event_state) / horizon,
        )
    })
    .map_err(|e| CliError::run("tilt", e))?;

    let mut table = CsvTable::new(&["path", "log_weight", "n_jumps", "final_sigma", "fraction"]);
    for (i, (lw, n, s, frac)) in rows.iter().enumerate() {
        table.row(&[i.to_string(), fmt_f64(*lw), n.to_string(), s.to_string(), fmt_f64(*frac)]);
    }
    let weights: Vec<f64> = rows.iter().map(|r| r.0.exp()).collect();
    let hits: Vec<f64> = rows
        .iter()
        .map(|r| if r.3 > t.event_fraction { r.0.exp() } else { 0.0 })
        .collect();
    let summary = TiltSummary {
        n_paths: t.n_paths,
        mean_weight: mean(&weights),
        se_weight: std_error(&weights),
        event_state: t.event_state,
        event_fraction: t.event_fraction,
        event_prob: mean(&hits),
        event_se: std_error(&hits),
    };
    Ok(vec![("weights.csv", table.finish()), ("summary.json", json(&summary))])
}

pub fn coarse(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Artifacts, CliError> {
    let model = build_model(cfg)?;
    let c = &cfg.coarse;
    let part = partition(model.n_states(), &c.blocks)?;
    let mut sc = sim_config(cfg, model.n_states(), threads)?;
    sc.edge_scaling = EdgeScaling::Partition(part.clone());
    let report = convergence_report(
        Arc::new(model),
        part,
        &sc,
        &c.lambdas,
        c.n_paths,
        &c.x0,
        c.sigma0,
        &c.events,
        c.grid_cells,
    )
    .map_err(|e| CliError::run("coarse", e))?;
    Ok(vec![("coarse.csv", report.to_csv()), ("coarse.json", report.to_json())])
}

fn motor_params(m: &MotorSection, f: f64) -> Result<MotorParams, CliError> {
    let p = MotorParams {
        f,
        epsilon: m.epsilon,
        beta: m.beta,
        omega_slow: m.omega_slow,
        omega_fast: m.omega_fast,
    };
    p.check().map_err(|e| CliError::run("motor", e))?;
    Ok(p)
}

pub fn motor_phase(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let ph = &cfg.motor_phase;
    if ph.profile_points < 2 || !(ph.profile_lo < ph.profile_hi) {
        return Err(CliError::run("motor-phase", "profile needs lo < hi and at least 2 points"));
    }
    let mut rows = Vec::new();
    for &beta in &ph.betas {
        for &epsilon in &ph.epsilons {
            for &f in &ph.fs {
                let p = motor_params(&MotorSection { beta, epsilon, ..cfg.motor.clone() }, f)?;
                rows.push(phase_row(&p));
            }
        }
    }
    let p = motor_params(&cfg.motor, cfg.motor.f.unwrap_or(0.0))?;
    Ok(vec![
        ("phase.csv", phase_csv(&rows)),
        (
            "fstar_profile.csv",
            fstar_profile_csv(&p, ph.profile_lo, ph.profile_hi, ph.profile_points),
        ),
    ])
}

pub fn motor_run(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Artifacts, CliError> {
    let m = &cfg.motor;
    let f = match m.f {
        Some(f) => f,
        None => {
            let iv = find_bistable_f(m.beta, m.epsilon).ok_or_else(|| {
                CliError::run("motor-run", format!("no bistable load for beta = {}, epsilon = {}", m.beta, m.epsilon))
            })?;
            0.5 * (iv.lo + iv.hi)
        }
    };
    let p = motor_params(m, f)?;
    let r = &cfg.motor_run;
    let x0 = if r.x0.is_empty() {
        let roots = find_fstar_roots(&p);
        match (roots.first(), roots.last()) {
            (Some(a), Some(b)) if roots.len() == 3 => vec![a.x - 0.3, b.x + 0.3],
            _ => return Err(CliError::run("motor-run", format!("F_* has {} zeros", roots.len()))),
        }
    } else {
        r.x0.clone()
    };
    let mut sc = sim_config(cfg, 3, threads)?;
    sc.record_path = false;
    let report =
        directionality_experiment(p, &x0, r.n_paths, r.horizon, &sc).map_err(|e| CliError::run("motor-run", e))?;
    let mut table = CsvTable::new(&["x0", "n_paths", "frac_left", "frac_right"]);
    for row in &report.rows {
        table.row(&[
            fmt_f64(row.x0),
            row.n_paths.to_string(),
            fmt_f64(row.frac_left),
            fmt_f64(row.frac_right),
        ]);
    }
    Ok(vec![("directionality.csv", table.finish()), ("directionality.json", json(&report))])
}
