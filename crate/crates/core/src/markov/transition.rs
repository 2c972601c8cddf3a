use alloc::vec::Vec;

#[allow(unused_imports)] // used without std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::dynamics::SaturatedMotion;
use super::{CscMatrix, Discretization, MarkovError};

/// Sub-steps used to estimate the time-interval occupancy.
pub const INTERVAL_SUBSTEPS: usize = 10;

/// Offline abstraction of the longitudinal dynamics: `step` maps a cell
/// distribution over one time step, `interval` gives the occupancy over the
/// whole step. Positions past the end of the s range are clamped into the
/// last cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrices {
    pub disc: Discretization,
    pub samples_per_cell: usize,
    pub step: CscMatrix,
    pub interval: CscMatrix,
}

/// Splits a per-cell sample budget over the (s, v, u) axes as evenly as
/// possible without exceeding it.
pub fn stratification(samples_per_cell: usize) -> [usize; 3] {
    let n = samples_per_cell.max(1);
    let mut k = [1usize; 3];
    let base = (n as f64).cbrt().floor() as usize;
    k.fill(base.max(1));
    while k.iter().product::<usize>() > n {
        k[0] -= 1;
    }
    'grow: loop {
        for i in 0..3 {
            let mut next = k;
            next[i] += 1;
            if next.iter().product::<usize>() > n {
                break 'grow;
            }
            k = next;
        }
    }
    k
}

fn stratum(lo: f64, width: f64, i: usize, k: usize) -> f64 {
    lo + width * (i as f64 + 0.5) / k as f64
}

/// Dense accumulator reused across columns.
struct Scratch {
    acc: Vec<f64>,
    touched: Vec<usize>,
}

impl Scratch {
    fn add(&mut self, i: usize, w: f64) {
        if self.acc[i] == 0.0 {
            self.touched.push(i);
        }
        self.acc[i] += w;
    }

    fn drain_normalized(&mut self) -> Vec<(usize, f64)> {
        self.touched.sort_unstable();
        let total: f64 = self.touched.iter().map(|&i| self.acc[i]).sum();
        let col = self
            .touched
            .iter()
            .map(|&i| (i, self.acc[i] / total))
            .collect();
        for &i in &self.touched {
            self.acc[i] = 0.0;
        }
        self.touched.clear();
        col
    }
}

/// Builds both transition matrices by stratified in-cell sampling and
/// closed-form integration.
pub fn compute_transition_matrices(
    disc: &Discretization,
    samples_per_cell: usize,
) -> Result<TransitionMatrices, MarkovError> {
    disc.validate()?;
    if samples_per_cell == 0 {
        return Err(MarkovError::NoSamples);
    }
    let [ks, kv, ku] = stratification(samples_per_cell);
    let n = disc.n_states();
    let v_max = disc.v_max();
    let mut step = Scratch {
        acc: alloc::vec![0.0; n],
        touched: Vec::new(),
    };
    let mut interval = Scratch {
        acc: alloc::vec![0.0; n],
        touched: Vec::new(),
    };
    let mut step_cols = Vec::with_capacity(n);
    let mut interval_cols = Vec::with_capacity(n);
    let cell = |s: f64, v: f64, u_i: usize| disc.index(disc.s_cell(s), disc.v_cell(v), u_i);

    for j in 0..n {
        let (s_i, v_i, u_i) = disc.split(j);
        let s_lo = s_i as f64 * disc.ds;
        let v_lo = v_i as f64 * disc.dv;
        let (u_lo, u_hi) = disc.u_bounds(u_i);
        for a in 0..ks {
            let s0 = stratum(s_lo, disc.ds, a, ks);
            for b in 0..kv {
                let v0 = stratum(v_lo, disc.dv, b, kv);
                for c in 0..ku {
                    let u = stratum(u_lo, u_hi - u_lo, c, ku);
                    let m = SaturatedMotion::new(s0, v0, disc.accel(u), v_max);
                    let (s1, v1) = m.state_at(disc.tau);
                    step.add(cell(s1, v1, u_i), 1.0);
                    for q in 1..=INTERVAL_SUBSTEPS {
                        let (s, v) = m.state_at(disc.tau * q as f64 / INTERVAL_SUBSTEPS as f64);
                        interval.add(cell(s, v, u_i), 1.0);
                    }
                }
            }
        }
        step_cols.push(step.drain_normalized());
        interval_cols.push(interval.drain_normalized());
    }
    Ok(TransitionMatrices {
        disc: *disc,
        samples_per_cell: ks * kv * ku,
        step: CscMatrix::from_columns(n, step_cols)?,
        interval: CscMatrix::from_columns(n, interval_cols)?,
    })
}
