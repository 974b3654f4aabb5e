//! Probe-based checks of the standing assumptions on a model.
//!
//! The assumptions are statements over all of `ℝ^d × [0, T]`; here they are
//! checked on a finite probe set and the report says how many probes were used.

use std::fmt;

use thiserror::Error;

use super::{strongly_connected, MetastatePartition, PdmpModel};

/// Rates at or below this value do not count as edges for irreducibility.
pub const IRREDUCIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Assumption {
    /// Finitely many jumps; checked through `sup γ_σ < ∞`.
    A1,
    /// Irreducibility of the frozen chemical generator.
    A2,
    /// Rates nonnegative (and finite).
    A3,
    /// Linear growth bound `|F_σ(x,t)| ≤ κ₁ + κ₂|x|`.
    A4,
    /// Irreducibility of every intra-block generator.
    A2Prime,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::A1 => "A1",
            Assumption::A2 => "A2",
            Assumption::A3 => "A3",
            Assumption::A4 => "A4",
            Assumption::A2Prime => "A2'",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Probe {
    pub x: Vec<f64>,
    pub t: f64,
}

/// Tensor grid over a box in `ℝ^d` times `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    probes: Vec<Probe>,
}

impl ProbeGrid {
    /// `points_per_axis` points on each spatial axis of `[lo_i, hi_i]` and
    /// `time_points` on `[0, horizon]`.
    pub fn boxed(lo: &[f64], hi: &[f64], points_per_axis: usize, horizon: f64, time_points: usize) -> Self {
        assert_eq!(lo.len(), hi.len());
        let d = lo.len();
        let axis = |i: usize, k: usize| {
            if points_per_axis <= 1 {
                0.5 * (lo[i] + hi[i])
            } else {
                lo[i] + (hi[i] - lo[i]) * k as f64 / (points_per_axis - 1) as f64
            }
        };
        let times: Vec<f64> = if time_points <= 1 {
            vec![0.0]
        } else {
            (0..time_points).map(|k| horizon * k as f64 / (time_points - 1) as f64).collect()
        };
        let n_space = points_per_axis.max(1).pow(d as u32);
        let mut probes = Vec::with_capacity(n_space * times.len());
        for &t in &times {
            for flat in 0..n_space {
                let mut rem = flat;
                let x = (0..d)
                    .map(|i| {
                        let k = rem % points_per_axis.max(1);
                        rem /= points_per_axis.max(1);
                        axis(i, k)
                    })
                    .collect();
                probes.push(Probe { x, t });
            }
        }
        Self { probes }
    }

    pub fn from_probes(probes: Vec<Probe>) -> Self {
        Self { probes }
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub n_probes: usize,
    /// Largest `γ_σ(x,t)` seen over all probes and states.
    pub sup_total_rate: f64,
    /// Number of probes at which `L_c` was irreducible (all of them on success).
    pub irreducible_probes: usize,
    /// Largest `|F_σ(x,t)| / (κ₁ + κ₂|x|)`; at most 1 on success.
    pub max_growth_ratio: f64,
    /// Whether intra-block irreducibility was checked.
    pub partition_checked: bool,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "checked on {} probes: sup γ = {:.6e}, max growth ratio = {:.4}{}",
            self.n_probes,
            self.sup_total_rate,
            self.max_growth_ratio,
            if self.partition_checked { ", A2' checked" } else { "" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error, serde::Serialize)]
#[error("assumption {assumption} violated at x = {:?}, t = {}: {detail}", probe.x, probe.t)]
pub struct ValidationFailure {
    pub assumption: Assumption,
    pub probe: Probe,
    pub detail: String,
}

/// Check (A1)–(A4), and (A2′) when a partition is supplied, on every probe.
///
/// Assumptions are checked in the order A1, A3, A2, A4, A2′ across the whole
/// probe set, so the failure names the first violated assumption and the
/// first probe witnessing it.
pub fn validate(
    model: &PdmpModel,
    grid: &ProbeGrid,
    partition: Option<&MetastatePartition>,
) -> Result<ValidationReport, ValidationFailure> {
    let n = model.n_states();
    let fail = |assumption, probe: &Probe, detail: String| ValidationFailure {
        assumption,
        probe: probe.clone(),
        detail,
    };

    let mut sup_rate = 0.0f64;
    for p in grid.probes() {
        for s in 0..n {
            let g = model.total_jump_rate(s, &p.x, p.t);
            if !g.is_finite() {
                return Err(fail(Assumption::A1, p, format!("γ_{s} is not finite")));
            }
            sup_rate = sup_rate.max(g);
        }
    }

    for p in grid.probes() {
        for s in 0..n {
            for sp in 0..n {
                if s == sp {
                    continue;
                }
                let r = model.rate(s, sp, &p.x, p.t);
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(fail(Assumption::A3, p, format!("r({s},{sp}) = {r}")));
                }
            }
        }
    }

    let mut irreducible = 0;
    for p in grid.probes() {
        let rates = model.rate_matrix(&p.x, p.t);
        if !strongly_connected(&rates, IRREDUCIBILITY_TOL) {
            return Err(fail(Assumption::A2, p, "chemical generator is reducible".into()));
        }
        irreducible += 1;
    }

    let (k1, k2) = model.force().growth_constants();
    let mut max_ratio = 0.0f64;
    let mut buf = vec![0.0; model.dim()];
    for p in grid.probes() {
        let xnorm = norm(&p.x);
        let bound = k1 + k2 * xnorm;
        for s in 0..n {
            model.field_into(s, &p.x, p.t, &mut buf);
            let fnorm = norm(&buf);
            if !fnorm.is_finite() {
                return Err(fail(Assumption::A4, p, format!("F_{s} is not finite")));
            }
            let ratio = if bound > 0.0 {
                fnorm / bound
            } else if fnorm == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            if ratio > 1.0 + 1e-12 {
                return Err(fail(
                    Assumption::A4,
                    p,
                    format!("|F_{s}| = {fnorm:.6e} exceeds κ₁ + κ₂|x| = {bound:.6e}"),
                ));
            }
            max_ratio = max_ratio.max(ratio);
        }
    }

    if let Some(part) = partition {
        for p in grid.probes() {
            let rates = model.rate_matrix(&p.x, p.t);
            for (b, block) in part.blocks().iter().enumerate() {
                let sub = rates.select_rows(block).select_columns(block);
                if !strongly_connected(&sub, IRREDUCIBILITY_TOL) {
                    return Err(fail(Assumption::A2Prime, p, format!("block {b} is reducible")));
                }
            }
        }
    }

    Ok(ValidationReport {
        n_probes: grid.len(),
        sup_total_rate: sup_rate,
        irreducible_probes: irreducible,
        max_growth_ratio: max_ratio,
        partition_checked: partition.is_some(),
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
