use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::dynamics::SaturatedMotion;
use super::{Discretization, MarkovError};

/// Stretch of a corridor, in the chain's own s coordinate, within which the
/// vehicle occupies the conflict point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictWindow {
    pub center: f64,
    pub half_width: f64,
}

impl ConflictWindow {
    /// Occupancy window of a vehicle of `length` with a 0.5 m margin on
    /// each side.
    pub fn for_vehicle(center: f64, length: f64) -> Self {
        Self {
            center,
            half_width: 0.5 * length + 0.5,
        }
    }

    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionConfig {
    /// In-cell samples per (s, v) axis; inputs use the cell centre.
    pub samples_per_axis: usize,
    /// After one step the dependent vehicle is assumed to brake at this
    /// rate until it stops, m/s². The blocking vehicle keeps its speed.
    pub lookahead_decel: f64,
    /// Occupancy starting later than this is ignored, s.
    pub horizon: f64,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            samples_per_axis: 2,
            lookahead_decel: 2.0,
            horizon: 6.0,
        }
    }
}

/// Collision probability between joint cells of a dependent and a blocking
/// chain. Only rows and columns that can reach their window are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    n_dependent: usize,
    n_blocking: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    /// Row-major `rows.len() × cols.len()`.
    values: Vec<f64>,
}

type Interval = (f64, f64);

/// Time interval during which the two-phase motion is inside `w`.
fn occupancy(s0: f64, v0: f64, a: f64, tail_a: f64, disc: &Discretization, w: &ConflictWindow, horizon: f64) -> Option<Interval> {
    let v_max = disc.v_max();
    let first = SaturatedMotion::new(s0, v0, a, v_max);
    let (s1, v1) = first.state_at(disc.tau);
    let second = SaturatedMotion::new(s1, v1, tail_a, v_max);
    let reach = |x: f64| -> Option<f64> {
        match first.time_to_reach(x) {
            Some(t) if t <= disc.tau => Some(t),
            _ => second.time_to_reach(x).map(|t| disc.tau + t),
        }
    };
    let enter = reach(w.lo())?;
    if enter > horizon {
        return None;
    }
    let exit = reach(w.hi()).unwrap_or(f64::INFINITY);
    (exit > enter).then_some((enter, exit))
}

fn cell_intervals(
    disc: &Discretization,
    idx: usize,
    k: usize,
    tail_a: f64,
    w: &ConflictWindow,
    horizon: f64,
) -> Vec<Option<Interval>> {
    let (s_i, v_i, u_i) = disc.split(idx);
    let a = disc.accel_center(u_i);
    let mut out = Vec::with_capacity(k * k);
    for p in 0..k {
        let s = (s_i as f64 + (p as f64 + 0.5) / k as f64) * disc.ds;
        for q in 0..k {
            let v = (v_i as f64 + (q as f64 + 0.5) / k as f64) * disc.dv;
            out.push(occupancy(s, v, a, tail_a, disc, w, horizon));
        }
    }
    out
}

fn overlaps(a: Interval, b: Interval) -> bool {
    a.0.max(b.0) < a.1.min(b.1)
}

impl InteractionMatrix {
    pub fn build(
        dep_disc: &Discretization,
        dep_window: &ConflictWindow,
        blk_disc: &Discretization,
        blk_window: &ConflictWindow,
        cfg: &InteractionConfig,
    ) -> Result<Self, MarkovError> {
        dep_disc.validate()?;
        blk_disc.validate()?;
        let k = cfg.samples_per_axis.max(1);
        let collect = |disc: &Discretization, w: &ConflictWindow, tail: f64| {
            let mut idx = Vec::new();
            let mut iv = Vec::new();
            for j in 0..disc.n_states() {
                let cell = cell_intervals(disc, j, k, tail, w, cfg.horizon);
                if cell.iter().any(Option::is_some) {
                    idx.push(j as u32);
                    iv.push(cell);
                }
            }
            (idx, iv)
        };
        let (rows, dep_iv) = collect(dep_disc, dep_window, -cfg.lookahead_decel.abs());
        let (cols, blk_iv) = collect(blk_disc, blk_window, 0.0);
        let norm = 1.0 / (k * k * k * k) as f64;
        let mut values = alloc::vec![0.0; rows.len() * cols.len()];
        for (r, di) in dep_iv.iter().enumerate() {
            let row = &mut values[r * cols.len()..(r + 1) * cols.len()];
            for (c, bi) in blk_iv.iter().enumerate() {
                let mut hits = 0usize;
                for a in di.iter().flatten() {
                    hits += bi.iter().flatten().filter(|b| overlaps(*a, **b)).count();
                }
                row[c] = hits as f64 * norm;
            }
        }
        Ok(Self {
            n_dependent: dep_disc.n_states(),
            n_blocking: blk_disc.n_states(),
            rows,
            cols,
            values,
        })
    }

    pub fn n_dependent(&self) -> usize {
        self.n_dependent
    }

    pub fn n_blocking(&self) -> usize {
        self.n_blocking
    }

    pub fn active_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn active_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, dependent: usize, blocking: usize) -> f64 {
        let r = self.rows.binary_search(&(dependent as u32));
        let c = self.cols.binary_search(&(blocking as u32));
        match (r, c) {
            (Ok(r), Ok(c)) => self.values[r * self.cols.len() + c],
            _ => 0.0,
        }
    }
}

/// `λ = 1 − I · p_blocking`, clamped to `[0, 1]`, for every dependent cell.
pub fn interaction_lambda(im: &InteractionMatrix, p_blocking: &[f64]) -> Result<Vec<f64>, MarkovError> {
    if p_blocking.len() != im.n_blocking {
        return Err(MarkovError::DimensionMismatch {
            expected: im.n_blocking,
            got: p_blocking.len(),
        });
    }
    let mut lambda = alloc::vec![1.0; im.n_dependent];
    let pb: Vec<f64> = im.cols.iter().map(|&c| p_blocking[c as usize]).collect();
    if pb.iter().all(|&x| x == 0.0) {
        return Ok(lambda);
    }
    for (r, &row_idx) in im.rows.iter().enumerate() {
        let row = &im.values[r * pb.len()..(r + 1) * pb.len()];
        let hit: f64 = row.iter().zip(&pb).map(|(i, p)| i * p).sum();
        lambda[row_idx as usize] = (1.0 - hit).clamp(0.0, 1.0);
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Discretization {
        Discretization {
            s_cells: 20,
            v_cells: 10,
            ..Default::default()
        }
    }

    #[test]
    fn blocking_mass_past_window_gives_ones() {
        let d = small();
        let w = ConflictWindow::for_vehicle(10.0, 4.0);
        let im = InteractionMatrix::build(&d, &w, &d, &w, &Default::default()).unwrap();
        let mut p = alloc::vec![0.0; d.n_states()];
        p[d.index(15, 3, 2)] = 1.0;
        assert!(interaction_lambda(&im, &p).unwrap().iter().all(|&l| l == 1.0));
        assert!(interaction_lambda(&im, &p[1..]).is_err());
    }

    #[test]
    fn stopped_blocker_in_window_forbids_reaching_it() {
        let d = small();
        let w = ConflictWindow::for_vehicle(10.0, 4.0);
        let im = InteractionMatrix::build(&d, &w, &d, &w, &Default::default()).unwrap();
        let mut p = alloc::vec![0.0; d.n_states()];
        p[d.index(5, 0, 2)] = 1.0;
        let l = interaction_lambda(&im, &p).unwrap();
        // one step at full throttle from 8 m/s, 6 m before the centre
        assert_eq!(l[d.index(2, 8, 4)], 0.0);
        // slow vehicles far back can still stop
        assert_eq!(l[d.index(0, 0, 0)], 1.0);
    }
}
