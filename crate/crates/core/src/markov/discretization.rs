#[allow(unused_imports)] // used without std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::MarkovError;

/// Cell layout of the longitudinal state space `(s, v)` and of the
/// normalized input `u ∈ [-1, 1]`.
///
/// Joint cells are indexed `(s_i * v_cells + v_i) * u_cells + u_i`. The
/// input maps to acceleration asymmetrically: `u * brake_max` for `u < 0`
/// and `u * accel_max` for `u > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub s_cells: usize,
    /// m
    pub ds: f64,
    pub v_cells: usize,
    /// m/s
    pub dv: f64,
    pub u_cells: usize,
    /// Acceleration at u = +1, m/s².
    pub accel_max: f64,
    /// Deceleration magnitude at u = -1, m/s².
    pub brake_max: f64,
    /// Time step, s.
    pub tau: f64,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            s_cells: 60,
            ds: 2.0,
            v_cells: 15,
            dv: 1.0,
            u_cells: 5,
            accel_max: 2.0,
            brake_max: 3.0,
            tau: 0.4,
        }
    }
}

impl Discretization {
    pub fn validate(&self) -> Result<(), MarkovError> {
        let ok = self.s_cells > 0
            && self.v_cells > 0
            && self.u_cells > 0
            && self.ds > 0.0
            && self.dv > 0.0
            && self.accel_max > 0.0
            && self.brake_max > 0.0
            && self.tau > 0.0
            && [self.ds, self.dv, self.accel_max, self.brake_max, self.tau]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(MarkovError::InvalidDiscretization)
        }
    }

    pub fn v_max(&self) -> f64 {
        self.v_cells as f64 * self.dv
    }

    pub fn s_range(&self) -> f64 {
        self.s_cells as f64 * self.ds
    }

    pub fn du(&self) -> f64 {
        2.0 / self.u_cells as f64
    }

    pub fn n_sv(&self) -> usize {
        self.s_cells * self.v_cells
    }

    pub fn n_states(&self) -> usize {
        self.n_sv() * self.u_cells
    }

    pub fn index(&self, s_i: usize, v_i: usize, u_i: usize) -> usize {
        (s_i * self.v_cells + v_i) * self.u_cells + u_i
    }

    /// `(s_i, v_i, u_i)` of a joint index.
    pub fn split(&self, idx: usize) -> (usize, usize, usize) {
        let u_i = idx % self.u_cells;
        let sv = idx / self.u_cells;
        (sv / self.v_cells, sv % self.v_cells, u_i)
    }

    pub fn s_cell(&self, s: f64) -> usize {
        ((s / self.ds).floor().max(0.0) as usize).min(self.s_cells - 1)
    }

    pub fn v_cell(&self, v: f64) -> usize {
        ((v / self.dv).floor().max(0.0) as usize).min(self.v_cells - 1)
    }

    pub fn s_center(&self, s_i: usize) -> f64 {
        (s_i as f64 + 0.5) * self.ds
    }

    pub fn v_center(&self, v_i: usize) -> f64 {
        (v_i as f64 + 0.5) * self.dv
    }

    /// `[lo, hi]` of input cell `u_i` in normalized units.
    pub fn u_bounds(&self, u_i: usize) -> (f64, f64) {
        let lo = -1.0 + u_i as f64 * self.du();
        let hi = if u_i + 1 == self.u_cells {
            1.0
        } else {
            -1.0 + (u_i + 1) as f64 * self.du()
        };
        (lo, hi)
    }

    pub fn accel(&self, u: f64) -> f64 {
        if u < 0.0 {
            u * self.brake_max
        } else {
            u * self.accel_max
        }
    }

    /// Acceleration interval covered by input cell `u_i`, m/s².
    pub fn accel_bounds(&self, u_i: usize) -> (f64, f64) {
        let (lo, hi) = self.u_bounds(u_i);
        (self.accel(lo), self.accel(hi))
    }

    /// Mean acceleration over the cell, uniform in `u`.
    pub fn accel_center(&self, u_i: usize) -> f64 {
        let (lo, hi) = self.u_bounds(u_i);
        if lo >= 0.0 || hi <= 0.0 {
            self.accel(0.5 * (lo + hi))
        } else {
            // cell straddles zero: average of the two linear pieces
            (self.accel(lo) * -lo * 0.5 + self.accel(hi) * hi * 0.5) / (hi - lo)
        }
    }

    pub fn u_of_accel(&self, a: f64) -> f64 {
        if a < 0.0 {
            (a / self.brake_max).max(-1.0)
        } else {
            (a / self.accel_max).min(1.0)
        }
    }

    pub fn u_cell_of_accel(&self, a: f64) -> usize {
        let u = self.u_of_accel(a);
        (((u + 1.0) / self.du()).floor().max(0.0) as usize).min(self.u_cells - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let d = Discretization::default();
        for idx in [0, 17, 333, d.n_states() - 1] {
            let (s, v, u) = d.split(idx);
            assert_eq!(d.index(s, v, u), idx);
        }
        assert_eq!(d.n_states(), 60 * 15 * 5);
    }

    #[test]
    fn input_cells_cover_accel_range() {
        let d = Discretization::default();
        assert_eq!(d.accel_bounds(0).0, -3.0);
        assert_eq!(d.accel_bounds(d.u_cells - 1).1, 2.0);
        for i in 1..d.u_cells {
            assert_eq!(d.accel_bounds(i - 1).1, d.accel_bounds(i).0);
        }
        let zero = d.u_cell_of_accel(0.0);
        let (lo, hi) = d.accel_bounds(zero);
        assert!(lo < 0.0 && hi > 0.0);
    }
}
