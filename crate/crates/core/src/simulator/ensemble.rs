use rayon::prelude::*;

use super::tilt::simulate_tilted_stream;
use super::{simulate_path_stream, SimConfig, SimError, TiltSpec, Trajectory, WeightedTrajectory};
use crate::model::PdmpModel;

fn run_indexed<R, F>(threads: Option<usize>, n_paths: usize, job: F) -> Result<Vec<R>, SimError>
where
    R: Send,
    F: Fn(usize) -> Result<R, SimError> + Sync + Send,
{
    if n_paths == 0 {
        return Err(SimError::InvalidConfig("ensemble needs at least one path".into()));
    }
    let collect = || (0..n_paths).into_par_iter().map(&job).collect::<Vec<_>>();
    let results = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| SimError::InvalidConfig(format!("thread pool: {e}")))?
            .install(collect),
        None => collect(),
    };
    let mut out = Vec::with_capacity(n_paths);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => failures.push((i, Box::new(e))),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(SimError::Ensemble { failures })
    }
}

/// Simulate `n_paths` independent paths; path `i` uses stream `i` of the
/// master seed, and `reduce(i, trajectory)` runs on the worker that produced
/// it. Results come back in path order regardless of the worker count.
pub fn simulate_ensemble_map<R, F>(
    model: &PdmpModel,
    config: &SimConfig,
    x0: &[f64],
    sigma0: usize,
    n_paths: usize,
    reduce: F,
) -> Result<Vec<R>, SimError>
where
    R: Send,
    F: Fn(usize, Trajectory) -> R + Sync + Send,
{
    config.check()?;
    run_indexed(config.threads, n_paths, |i| {
        simulate_path_stream(model, config, x0, sigma0, 0.0, i as u64).map(|t| reduce(i, t))
    })
}

/// Full trajectories of an ensemble.
pub fn simulate_ensemble(
    model: &PdmpModel,
    config: &SimConfig,
    x0: &[f64],
    sigma0: usize,
    n_paths: usize,
) -> Result<Vec<Trajectory>, SimError> {
    simulate_ensemble_map(model, config, x0, sigma0, n_paths, |_, t| t)
}

/// Tilted counterpart of [`simulate_ensemble_map`].
pub fn simulate_tilted_ensemble_map<R, F>(
    model: &PdmpModel,
    config: &SimConfig,
    tilt: &TiltSpec,
    x0: &[f64],
    sigma0: usize,
    n_paths: usize,
    reduce: F,
) -> Result<Vec<R>, SimError>
where
    R: Send,
    F: Fn(usize, WeightedTrajectory) -> R + Sync + Send,
{
    config.check()?;
    run_indexed(config.threads, n_paths, |i| {
        simulate_tilted_stream(model, config, tilt, x0, sigma0, i as u64).map(|w| reduce(i, w))
    })
}
