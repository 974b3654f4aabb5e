//! Coarse-graining into metastates: block quasistationary measures, the
//! effective fields and rates, the effective PDMP, and an ensemble harness
//! comparing the coarse-grained fast process with it.
//!
//! The coarse process `α(σ(t))` of the accelerated model is not Markov for
//! finite λ; it is only compared with the effective model in law.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::averaging::{quasistationary, QuasistationaryMeasure};
use crate::io::{fmt_f64, CsvTable};
use crate::model::{ChemicalStateSpace, ForceField, MetastatePartition, ModelError, PdmpModel, RateField};
use crate::ode::{solve_dense, DensePath, OdeError, OdeOptions};
use crate::quad::uniform_grid;
use crate::simulator::{simulate_ensemble_map, EdgeScaling, SimConfig, SimError, Trajectory};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoarseError {
    #[error("block {block} is reducible under its fast rates")]
    Reducible { block: usize },
    #[error("partition covers {partition} states but the model has {model}")]
    PartitionMismatch { model: usize, partition: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("effective flow failed: {0}")]
    Ode(#[from] OdeError),
    #[error("bad harness input: {0}")]
    BadInput(String),
}

fn check_partition(model: &PdmpModel, partition: &MetastatePartition) -> Result<(), CoarseError> {
    if model.n_states() != partition.n_states() {
        return Err(CoarseError::PartitionMismatch {
            model: model.n_states(),
            partition: partition.n_states(),
        });
    }
    Ok(())
}

/// `μ_i(·|x,t)` on block `i`, indexed like `partition.block(i)`.
pub fn block_quasistationary(
    model: &PdmpModel,
    partition: &MetastatePartition,
    i: usize,
    x: &[f64],
    t: f64,
) -> Result<QuasistationaryMeasure, CoarseError> {
    let idx = partition.block(i);
    let n = idx.len();
    let mut l = nalgebra::DMatrix::zeros(n, n);
    for a in 0..n {
        let mut out = 0.0;
        for b in 0..n {
            if a != b {
                let r = model.rate(idx[a], idx[b], x, t);
                l[(a, b)] = r;
                out += r;
            }
        }
        l[(a, a)] = -out;
    }
    quasistationary(&l).map_err(|_| CoarseError::Reducible { block: i })
}

fn effective_field_into(
    model: &PdmpModel,
    partition: &MetastatePartition,
    i: usize,
    x: &[f64],
    t: f64,
    out: &mut [f64],
) -> Result<(), CoarseError> {
    let mu = block_quasistationary(model, partition, i, x, t)?;
    let d = model.dim();
    out[..d].iter_mut().for_each(|v| *v = 0.0);
    let mut buf = vec![0.0; d];
    for (a, &s) in partition.block(i).iter().enumerate() {
        model.field_into(s, x, t, &mut buf);
        for k in 0..d {
            out[k] += mu[a] * buf[k];
        }
    }
    Ok(())
}

/// `F_i(x,t) = Σ_{σ∈Γ_i} μ_i(σ|x,t) F_σ(x,t)`.
pub fn effective_field(
    model: &PdmpModel,
    partition: &MetastatePartition,
    i: usize,
    x: &[f64],
    t: f64,
) -> Result<Vec<f64>, CoarseError> {
    let mut out = vec![0.0; model.dim()];
    effective_field_into(model, partition, i, x, t, &mut out)?;
    Ok(out)
}

/// `r(i,j|x,t) = Σ_{σ∈Γ_i} Σ_{σ'∈Γ_j} μ_i(σ|x,t) r(σ,σ'|x,t)`.
pub fn effective_rates(
    model: &PdmpModel,
    partition: &MetastatePartition,
    i: usize,
    j: usize,
    x: &[f64],
    t: f64,
) -> Result<f64, CoarseError> {
    if i == j {
        return Ok(0.0);
    }
    let mu = block_quasistationary(model, partition, i, x, t)?;
    let mut acc = 0.0;
    for (a, &s) in partition.block(i).iter().enumerate() {
        for &sp in partition.block(j) {
            acc += mu[a] * model.rate(s, sp, x, t);
        }
    }
    Ok(acc)
}

/// The limit PDMP over the metastates `{0, …, ℓ−1}`.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    original: Arc<PdmpModel>,
    partition: MetastatePartition,
    model: PdmpModel,
}

impl EffectiveModel {
    pub fn model(&self) -> &PdmpModel {
        &self.model
    }

    pub fn original(&self) -> &PdmpModel {
        &self.original
    }

    pub fn partition(&self) -> &MetastatePartition {
        &self.partition
    }
}

/// `γ_i(x,t) = Σ_{j≠i} r(i,j|x,t)`.
pub fn metastate_hazard(effective: &EffectiveModel, i: usize, x: &[f64], t: f64) -> f64 {
    effective.model.total_jump_rate(i, x, t)
}

/// Assemble the effective model. Every block must be irreducible at the
/// origin at time zero; elsewhere a reducible block makes the fields and
/// rates NaN, which the simulator reports as a failed segment.
pub fn build_effective(original: Arc<PdmpModel>, partition: MetastatePartition) -> Result<EffectiveModel, CoarseError> {
    check_partition(&original, &partition)?;
    let origin = vec![0.0; original.dim()];
    for i in 0..partition.n_blocks() {
        block_quasistationary(&original, &partition, i, &origin, 0.0)?;
    }
    let labels: Vec<String> = partition
        .blocks()
        .iter()
        .map(|b| b.iter().map(|&s| original.states().labels()[s].as_str()).collect::<Vec<_>>().join("+"))
        .collect();
    let (m_f, p_f) = (Arc::clone(&original), partition.clone());
    let force = ForceField::new(original.force().growth_constants(), move |i, x, t, out| {
        if effective_field_into(&m_f, &p_f, i, x, t, out).is_err() {
            out.iter_mut().for_each(|v| *v = f64::NAN);
        }
    })?;
    let force = match original.force().lipschitz_hint() {
        Some(k) => force.with_lipschitz_hint(k),
        None => force,
    };
    let (m_r, p_r) = (Arc::clone(&original), partition.clone());
    let rates = RateField::new(move |i, j, x, t| effective_rates(&m_r, &p_r, i, j, x, t).unwrap_or(f64::NAN));
    let model = PdmpModel::new(
        ChemicalStateSpace::new(labels)?,
        force,
        rates,
        original.dim(),
        original.horizon(),
    )?;
    Ok(EffectiveModel {
        original,
        partition,
        model,
    })
}

/// Law of the first metastate jump of the effective model from `(x₀, i)`:
/// `P(T₁ ≤ t) = 1 − exp(−∫₀ᵗ γ_i(x_i(s), s) ds)` along the flow `x_i` of
/// `F_i`, with the remaining mass at `T₁ = ∞` past the horizon.
#[derive(Debug, Clone)]
pub struct FirstJumpLaw {
    flow: DensePath,
    horizon: f64,
}

impl FirstJumpLaw {
    pub fn new(effective: &EffectiveModel, block: usize, x0: &[f64], opts: OdeOptions) -> Result<Self, CoarseError> {
        let m = effective.model();
        let d = m.dim();
        let horizon = m.horizon();
        let mut y0 = x0.to_vec();
        y0.push(0.0);
        let mut buf = vec![0.0; d];
        let flow = solve_dense(
            |t, y, dy| {
                m.field_into(block, &y[..d], t, &mut buf);
                dy[..d].copy_from_slice(&buf);
                dy[d] = m.total_jump_rate(block, &y[..d], t);
            },
            &y0,
            0.0,
            horizon,
            opts,
        )?;
        Ok(Self { flow, horizon })
    }

    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let d = self.flow.dim() - 1;
        self.flow.eval(t.clamp(0.0, self.horizon))[d]
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t == f64::INFINITY {
            1.0
        } else if t < 0.0 {
            0.0
        } else {
            1.0 - (-self.cumulative_hazard(t)).exp()
        }
    }

    /// Probability of no jump before the horizon.
    pub fn survival_at_horizon(&self) -> f64 {
        (-self.cumulative_hazard(self.horizon)).exp()
    }
}

/// `T_k ∈ (center − half_width, center + half_width)` and the `k`-th
/// metastate jump lands in `block`; `k` counts from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct WindowCondition {
    pub k: usize,
    pub center: f64,
    pub half_width: f64,
    pub block: usize,
}

/// Joint event of up to three window conditions.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct WindowEvent {
    pub conditions: Vec<WindowCondition>,
}

impl WindowEvent {
    fn check(&self) -> Result<(), CoarseError> {
        if self.conditions.is_empty() || self.conditions.len() > 3 {
            return Err(CoarseError::BadInput("window events take one to three conditions".into()));
        }
        if self.conditions.iter().any(|c| c.k == 0 || c.k > 3 || !(c.half_width > 0.0)) {
            return Err(CoarseError::BadInput("conditions need 1 ≤ k ≤ 3 and a positive half width".into()));
        }
        Ok(())
    }

    fn holds(&self, jumps: &[(f64, usize)]) -> bool {
        self.conditions.iter().all(|c| {
            jumps
                .get(c.k - 1)
                .is_some_and(|&(t, b)| b == c.block && (t - c.center).abs() < c.half_width)
        })
    }
}

/// First three `(time, new block)` metastate changes of a trajectory.
pub fn coarse_jumps(trajectory: &Trajectory, partition: &MetastatePartition, limit: usize) -> Vec<(f64, usize)> {
    let mut out = Vec::new();
    let mut current = partition.block_of(trajectory.sigma0());
    for (k, &tau) in trajectory.jump_times.iter().enumerate() {
        let b = partition.block_of(trajectory.chem_states[k + 1]);
        if b != current {
            out.push((tau, b));
            current = b;
            if out.len() == limit {
                break;
            }
        }
    }
    out
}

struct PathSummary {
    t1: f64,
    jumps: Vec<(f64, usize)>,
    sup_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceLevel {
    pub lambda: f64,
    pub ks_t1: f64,
    /// Median over paths of `sup_{t<T₁} |x(t) − x_eff(t)|`.
    pub sup_dev: f64,
    pub censored_frac: f64,
    pub event_prob_emp: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub x0: Vec<f64>,
    pub sigma0: usize,
    pub n_paths: usize,
    pub horizon: f64,
    pub events: Vec<WindowEvent>,
    pub event_prob_eff: Vec<f64>,
    pub effective_censored_frac: f64,
    /// Sorted first-jump times of the effective ensemble (`∞` if none).
    #[serde(skip)]
    pub effective_t1: Vec<f64>,
    pub levels: Vec<ConvergenceLevel>,
}

impl ConvergenceReport {
    pub fn ks_values(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.ks_t1).collect()
    }

    /// Columns `lambda, ks_T1, sup_dev, event, event_prob_emp, event_prob_eff`,
    /// one row per λ and event (event fields empty when no events were asked).
    pub fn to_csv(&self) -> String {
        let mut table = CsvTable::new(&["lambda", "ks_T1", "sup_dev", "event", "event_prob_emp", "event_prob_eff"]);
        for l in &self.levels {
            let head = [fmt_f64(l.lambda), fmt_f64(l.ks_t1), fmt_f64(l.sup_dev)];
            if self.events.is_empty() {
                let mut row = head.to_vec();
                row.extend([String::new(), String::new(), String::new()]);
                table.row(&row);
            }
            for (e, (&emp, &eff)) in l.event_prob_emp.iter().zip(&self.event_prob_eff).enumerate() {
                let mut row = head.to_vec();
                row.extend([e.to_string(), fmt_f64(emp), fmt_f64(eff)]);
                table.row(&row);
            }
        }
        table.finish()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Offset separating the effective ensemble's seed from the accelerated
/// ensembles so the two samples are independent.
const EFFECTIVE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// For each λ simulate the model with partition-based acceleration and
/// compare its coarse-grained path with an equally large effective-model
/// ensemble started from `(x₀, α(σ₀))`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_report(
    model: Arc<PdmpModel>,
    partition: MetastatePartition,
    config: &SimConfig,
    lambdas: &[f64],
    n_paths: usize,
    x0: &[f64],
    sigma0: usize,
    events: &[WindowEvent],
    grid_cells: usize,
) -> Result<ConvergenceReport, CoarseError> {
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoarseError::BadInput("lambdas must be strictly increasing".into()));
    }
    if grid_cells == 0 {
        return Err(CoarseError::BadInput("grid_cells must be positive".into()));
    }
    events.iter().try_for_each(WindowEvent::check)?;
    let horizon = model.horizon();
    let eff = build_effective(Arc::clone(&model), partition.clone())?;
    let block0 = partition.block_of(sigma0);
    let grid = uniform_grid(horizon, grid_cells);
    let eff_flow = solve_dense(
        |t, x, dx| eff.model().field_into(block0, x, t, dx),
        x0,
        0.0,
        horizon,
        config.ode_options(),
    )?;
    let reference: Vec<Vec<f64>> = grid.iter().map(|&t| eff_flow.eval(t)).collect();

    let summarize = |traj: Trajectory, part: &MetastatePartition| {
        let jumps = coarse_jumps(&traj, part, 3);
        let t1 = jumps.first().map_or(f64::INFINITY, |j| j.0);
        let mut sup = 0.0f64;
        let mut x = vec![0.0; x0.len()];
        for (k, &t) in grid.iter().enumerate() {
            if t >= t1 {
                break;
            }
            traj.path.eval_into(t, &mut x);
            let d = x.iter().zip(&reference[k]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            sup = sup.max(d);
        }
        PathSummary { t1, jumps, sup_dev: sup }
    };

    let eff_cfg = SimConfig {
        lambda: 1.0,
        edge_scaling: EdgeScaling::Uniform,
        seed: config.seed.wrapping_add(EFFECTIVE_SEED_OFFSET),
        record_path: false,
        ..config.clone()
    };
    let singletons = MetastatePartition::singletons(partition.n_blocks());
    let eff_runs = simulate_ensemble_map(eff.model(), &eff_cfg, x0, block0, n_paths, |_, traj| {
        let jumps = coarse_jumps(&traj, &singletons, 3);
        (jumps.first().map_or(f64::INFINITY, |j| j.0), jumps)
    })?;
    let mut effective_t1: Vec<f64> = eff_runs.iter().map(|r| r.0).collect();
    effective_t1.sort_by(|a, b| a.total_cmp(b));
    let frac = |hits: usize| hits as f64 / n_paths as f64;
    let event_prob_eff: Vec<f64> = events
        .iter()
        .map(|e| frac(eff_runs.iter().filter(|r| e.holds(&r.1)).count()))
        .collect();
    let effective_censored_frac = frac(effective_t1.iter().filter(|t| t.is_infinite()).count());

    let mut levels = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = SimConfig {
            lambda,
            edge_scaling: EdgeScaling::Partition(partition.clone()),
            record_path: true,
            ..config.clone()
        };
        let runs = simulate_ensemble_map(&model, &cfg, x0, sigma0, n_paths, |_, traj| summarize(traj, &partition))?;
        let t1: Vec<f64> = runs.iter().map(|r| r.t1).collect();
        let sups: Vec<f64> = runs.iter().map(|r| r.sup_dev).collect();
        levels.push(ConvergenceLevel {
            lambda,
            ks_t1: stats::ks_two_sample(&t1, &effective_t1),
            sup_dev: stats::median(&sups),
            censored_frac: frac(t1.iter().filter(|t| t.is_infinite()).count()),
            event_prob_emp: events
                .iter()
                .map(|e| frac(runs.iter().filter(|r| e.holds(&r.jumps)).count()))
                .collect(),
        });
    }
    Ok(ConvergenceReport {
        x0: x0.to_vec(),
        sigma0,
        n_paths,
        horizon,
        events: events.to_vec(),
        event_prob_eff,
        effective_censored_frac,
        effective_t1,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::registry::{random_ergodic, two_state_linear};
    use crate::motor::{effective_force_star, motor_model, motor_partition, motor_rates, MotorParams};
    use crate::simulator::simulate_path;
    use approx::assert_abs_diff_eq;

    fn motor() -> (MotorParams, Arc<PdmpModel>) {
        let p = MotorParams {
            f: 0.2,
            ..MotorParams::default()
        };
        (p, Arc::new(motor_model(p, 1.0).unwrap()))
    }

    #[test]
    fn singleton_block_is_point_mass() {
        let (_, m) = motor();
        let mu = block_quasistationary(&m, &motor_partition(), 0, &[0.3], 0.0).unwrap();
        assert_eq!(mu.probs(), &[1.0]);
        assert_eq!(effective_field(&m, &motor_partition(), 0, &[0.3], 0.0).unwrap(), m.field(0, &[0.3], 0.0));
    }

    #[test]
    fn motor_block_detailed_balance() {
        let (p, m) = motor();
        for &x in &[-0.5, 0.0, 0.4, 1.2] {
            let mu = block_quasistationary(&m, &motor_partition(), 1, &[x], 0.0).unwrap();
            let du = crate::motor::delta_u(&p, x);
            assert_abs_diff_eq!(mu[1] / mu[0], (-p.beta * du).exp(), epsilon = 1e-10 * (-p.beta * du).exp().max(1.0));
            let f = effective_field(&m, &motor_partition(), 1, &[x], 0.0).unwrap()[0];
            assert_abs_diff_eq!(f, effective_force_star(&p, x), epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetric_three_state_block_is_uniform() {
        let m = PdmpModel::new(
            ChemicalStateSpace::numbered(3).unwrap(),
            ForceField::new((1.0, 1.0), |s, x, _, out| out[0] = s as f64 - x[0]).unwrap(),
            RateField::constant(vec![vec![0.0, 2.0, 2.0], vec![2.0, 0.0, 2.0], vec![2.0, 2.0, 0.0]]),
            1,
            1.0,
        )
        .unwrap();
        let whole = MetastatePartition::whole(3);
        let mu = block_quasistationary(&m, &whole, 0, &[0.0], 0.0).unwrap();
        mu.probs().iter().for_each(|&v| assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-14));
        let identical = PdmpModel::new(
            m.states().clone(),
            ForceField::new((1.0, 1.0), |_, x, _, out| out[0] = -x[0]).unwrap(),
            m.rates().clone(),
            1,
            1.0,
        )
        .unwrap();
        assert_eq!(effective_field(&identical, &whole, 0, &[0.7], 0.0).unwrap(), vec![-0.7]);
    }

    #[test]
    fn effective_rate_examples() {
        // 4 states, blocks {0,1} and {2,3}; only state 1 reaches block 1.
        let m = PdmpModel::new(
            ChemicalStateSpace::numbered(4).unwrap(),
            ForceField::new((1.0, 1.0), |_, x, _, out| out[0] = -x[0]).unwrap(),
            RateField::constant(vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![3.0, 0.0, 0.5, 0.7],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.2, 0.2, 1.0, 0.0],
            ]),
            1,
            1.0,
        )
        .unwrap();
        let part = MetastatePartition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let mu = block_quasistationary(&m, &part, 0, &[0.0], 0.0).unwrap();
        assert_abs_diff_eq!(effective_rates(&m, &part, 0, 1, &[0.0], 0.0).unwrap(), mu[1] * 1.2, epsilon = 1e-14);
        // Symmetric block, both members leave at q.
        assert_abs_diff_eq!(effective_rates(&m, &part, 1, 0, &[0.0], 0.0).unwrap(), 0.5 * 0.4, epsilon = 1e-14);
    }

    #[test]
    fn motor_rate_matches_double_sum() {
        let (p, m) = motor();
        let part = motor_partition();
        let x = 0.35;
        let mu = block_quasistationary(&m, &part, 1, &[x], 0.0).unwrap();
        let brute = mu[0] * motor_rates(&p, 1, 0, x) + mu[1] * motor_rates(&p, 2, 0, x);
        assert_abs_diff_eq!(effective_rates(&m, &part, 1, 0, &[x], 0.0).unwrap(), brute, epsilon = 1e-14);
        let eff = build_effective(m, part).unwrap();
        assert_abs_diff_eq!(metastate_hazard(&eff, 1, &[x], 0.0), brute, epsilon = 1e-14);
        assert_eq!(eff.model().states().labels(), &["detached", "attached1+attached2"]);
    }

    #[test]
    fn rate_conservation() {
        let m = random_ergodic(11, 5, 1, 1.0).unwrap();
        let part = MetastatePartition::new(5, vec![vec![0, 3], vec![1], vec![2, 4]]).unwrap();
        for &x in &[-1.0, 0.5] {
            for i in 0..3 {
                let mu = block_quasistationary(&m, &part, i, &[x], 0.2).unwrap();
                let direct: f64 = part
                    .block(i)
                    .iter()
                    .enumerate()
                    .map(|(a, &s)| {
                        mu[a] * (0..5).filter(|&sp| part.block_of(sp) != i).map(|sp| m.rate(s, sp, &[x], 0.2)).sum::<f64>()
                    })
                    .sum();
                let total: f64 = (0..3).map(|j| effective_rates(&m, &part, i, j, &[x], 0.2).unwrap()).sum();
                assert!((direct - total).abs() <= 1e-12 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn trivial_partitions() {
        let m = Arc::new(random_ergodic(2, 3, 1, 1.0).unwrap());
        let eff = build_effective(Arc::clone(&m), MetastatePartition::singletons(3)).unwrap();
        for &x in &[-0.4, 0.9] {
            assert_eq!(eff.model().rate_matrix(&[x], 0.1), m.rate_matrix(&[x], 0.1));
            assert_eq!(eff.model().field(2, &[x], 0.1), m.field(2, &[x], 0.1));
        }
        let whole = build_effective(Arc::clone(&m), MetastatePartition::whole(3)).unwrap();
        assert_eq!(whole.model().n_states(), 1);
        assert_eq!(whole.model().total_jump_rate(0, &[0.2], 0.0), 0.0);
        let avg = crate::averaging::averaged_field(&m, &[0.2], 0.3).unwrap();
        assert_abs_diff_eq!(whole.model().field(0, &[0.2], 0.3)[0], avg[0], epsilon = 1e-14);
    }

    #[test]
    fn trivial_partition_paths_coincide_without_jumps() {
        let m = Arc::new(two_state_linear(1.0, 0.0, 0.0, 1.0).unwrap());
        let eff = build_effective(Arc::clone(&m), MetastatePartition::singletons(2)).unwrap();
        let cfg = SimConfig::with_lambda(50.0);
        let a = simulate_path(&m, &SimConfig { edge_scaling: EdgeScaling::Partition(MetastatePartition::singletons(2)), ..cfg.clone() }, &[0.3], 1, 0.0).unwrap();
        let b = simulate_path(eff.model(), &SimConfig::with_lambda(1.0), &[0.3], 1, 0.0).unwrap();
        assert_eq!(a.n_jumps(), 0);
        assert_eq!(a.final_x, b.final_x);
    }

    #[test]
    fn reducible_block_is_reported() {
        let m = Arc::new(two_state_linear(1.0, 1.0, 0.0, 1.0).unwrap());
        assert_eq!(
            build_effective(m, MetastatePartition::whole(2)).unwrap_err(),
            CoarseError::Reducible { block: 0 }
        );
        let m3 = Arc::new(random_ergodic(1, 3, 1, 1.0).unwrap());
        assert!(matches!(
            build_effective(m3, MetastatePartition::whole(2)),
            Err(CoarseError::PartitionMismatch { .. })
        ));
    }

    #[test]
    fn first_jump_law_constant_rate() {
        let m = Arc::new(two_state_linear(1.0, 2.0, 1.0, 1.5).unwrap());
        let eff = build_effective(m, MetastatePartition::singletons(2)).unwrap();
        let law = FirstJumpLaw::new(&eff, 0, &[0.0], OdeOptions::default()).unwrap();
        for &t in &[0.1, 0.7, 1.5] {
            assert_abs_diff_eq!(law.cdf(t), 1.0 - (-2.0 * t).exp(), epsilon = 1e-9);
        }
        assert_eq!(law.cdf(f64::INFINITY), 1.0);
        assert_abs_diff_eq!(law.survival_at_horizon(), (-3.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn single_block_report_has_no_jumps() {
        let m = Arc::new(two_state_linear(1.0, 1.0, 1.0, 1.0).unwrap());
        let rep = convergence_report(
            m,
            MetastatePartition::whole(2),
            &SimConfig::default(),
            &[10.0, 100.0],
            20,
            &[0.0],
            0,
            &[],
            100,
        )
        .unwrap();
        for l in &rep.levels {
            assert_eq!(l.ks_t1, 0.0);
            assert_eq!(l.censored_frac, 1.0);
        }
        assert!(rep.levels[1].sup_dev < rep.levels[0].sup_dev);
        assert_eq!(rep.to_csv().lines().count(), 3);
    }

    #[test]
    fn window_events() {
        let e = WindowEvent {
            conditions: vec![
                WindowCondition { k: 1, center: 0.5, half_width: 0.1, block: 0 },
                WindowCondition { k: 2, center: 0.9, half_width: 0.1, block: 1 },
            ],
        };
        assert!(e.holds(&[(0.45, 0), (0.95, 1)]));
        assert!(!e.holds(&[(0.45, 0)]));
        assert!(!e.holds(&[(0.45, 1), (0.95, 1)]));
        let bad = WindowEvent { conditions: vec![WindowCondition { k: 4, center: 0.0, half_width: 1.0, block: 0 }] };
        assert!(bad.check().is_err());
    }
}
