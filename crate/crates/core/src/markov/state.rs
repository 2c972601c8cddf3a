use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ConflictWindow, Discretization, InputTransition, MarkovError, TransitionMatrices};

/// Largest tolerated drift of the total mass after one step.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Probability vector over the joint (s, v, u) cells at step `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub p: Vec<f64>,
    pub k: usize,
}

impl StateDistribution {
    pub fn unit(disc: &Discretization, s: f64, v: f64, a: f64) -> Self {
        let mut p = alloc::vec![0.0; disc.n_states()];
        p[disc.index(disc.s_cell(s), disc.v_cell(v), disc.u_cell_of_accel(a))] = 1.0;
        Self { p, k: 0 }
    }

    /// Unit mass whose mean speed equals `v`: the speed share is split
    /// between the two cells whose centres bracket it, so a vehicle at a cell
    /// edge is not credited with the cell's mid speed.
    pub fn interpolated(disc: &Discretization, s: f64, v: f64, a: f64) -> Self {
        let mut p = alloc::vec![0.0; disc.n_states()];
        let (s_i, u_i) = (disc.s_cell(s), disc.u_cell_of_accel(a));
        let x = (v / disc.dv - 0.5).clamp(0.0, (disc.v_cells - 1) as f64);
        let lo = (x.floor() as usize).min(disc.v_cells - 1);
        let hi = (lo + 1).min(disc.v_cells - 1);
        let w = x - lo as f64;
        p[disc.index(s_i, lo, u_i)] += 1.0 - w;
        p[disc.index(s_i, hi, u_i)] += w;
        Self { p, k: 0 }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn s_marginal(&self, disc: &Discretization) -> Vec<f64> {
        let per_s = disc.v_cells * disc.u_cells;
        self.p.chunks(per_s).map(|c| c.iter().sum()).collect()
    }

    pub fn v_marginal(&self, disc: &Discretization) -> Vec<f64> {
        let mut out = alloc::vec![0.0; disc.v_cells];
        for (sv, c) in self.p.chunks(disc.u_cells).enumerate() {
            out[sv % disc.v_cells] += c.iter().sum::<f64>();
        }
        out
    }

    pub fn u_marginal(&self, disc: &Discretization) -> Vec<f64> {
        let mut out = alloc::vec![0.0; disc.u_cells];
        for c in self.p.chunks(disc.u_cells) {
            out.iter_mut().zip(c).for_each(|(o, x)| *o += x);
        }
        out
    }

    /// Expected position using cell centres.
    pub fn mean_s(&self, disc: &Discretization) -> f64 {
        weighted_mean(&self.s_marginal(disc), |i| disc.s_center(i))
    }

    pub fn mean_v(&self, disc: &Discretization) -> f64 {
        weighted_mean(&self.v_marginal(disc), |i| disc.v_center(i))
    }

    pub fn mean_accel(&self, disc: &Discretization) -> f64 {
        weighted_mean(&self.u_marginal(disc), |i| disc.accel_center(i))
    }
}

fn weighted_mean(m: &[f64], x: impl Fn(usize) -> f64) -> f64 {
    let total: f64 = m.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    m.iter().enumerate().map(|(i, w)| w * x(i)).sum::<f64>() / total
}

/// Mass of `p` inside a window along s, splitting cells by overlap length.
pub fn window_mass(p: &[f64], disc: &Discretization, w: &ConflictWindow) -> f64 {
    let per_s = disc.v_cells * disc.u_cells;
    p.chunks(per_s)
        .enumerate()
        .map(|(s_i, c)| {
            let lo = s_i as f64 * disc.ds;
            let overlap = (w.hi().min(lo + disc.ds) - w.lo().max(lo)).max(0.0) / disc.ds;
            if overlap > 0.0 {
                overlap * c.iter().sum::<f64>()
            } else {
                0.0
            }
        })
        .sum()
}

/// Mass of `p` in cells lying entirely behind `s`.
pub fn mass_before(p: &[f64], disc: &Discretization, s: f64) -> f64 {
    let per_s = disc.v_cells * disc.u_cells;
    p.chunks(per_s)
        .enumerate()
        .filter(|(s_i, _)| (*s_i as f64 + 1.0) * disc.ds <= s)
        .map(|(_, c)| c.iter().sum::<f64>())
        .sum()
}

/// One step: `p_next = Γ Υ(τ) p` and `p_interval = Υ([0, τ]) p`.
pub fn propagate(
    p: &StateDistribution,
    gamma: &InputTransition,
    matrices: &TransitionMatrices,
) -> Result<(StateDistribution, Vec<f64>), MarkovError> {
    let mut next = matrices.step.mul_vec(&p.p)?;
    gamma.apply(&mut next)?;
    let total: f64 = next.iter().sum();
    if !total.is_finite() || (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(MarkovError::NormalizationDrift { total });
    }
    let interval = matrices.interval.mul_vec(&p.p)?;
    Ok((StateDistribution { p: next, k: p.k + 1 }, interval))
}
