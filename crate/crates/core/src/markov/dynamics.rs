//! Longitudinal point-mass dynamics `ds/dt = v`, `dv/dt = a` with the
//! speed saturating at 0 and `v_max`.

#[allow(unused_imports)] // used without std
use num_traits::Float;

use super::Discretization;

/// Constant-acceleration motion that saturates at the speed bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturatedMotion {
    pub s0: f64,
    pub v0: f64,
    pub a: f64,
    pub v_max: f64,
}

impl SaturatedMotion {
    pub fn new(s0: f64, v0: f64, a: f64, v_max: f64) -> Self {
        Self {
            s0,
            v0: v0.clamp(0.0, v_max),
            a,
            v_max,
        }
    }

    /// Time at which the speed hits a bound; 0 when already saturated.
    fn saturation_time(&self) -> f64 {
        if self.a > 0.0 && self.v0 < self.v_max {
            (self.v_max - self.v0) / self.a
        } else if self.a < 0.0 && self.v0 > 0.0 {
            self.v0 / -self.a
        } else {
            0.0
        }
    }

    fn saturated_speed(&self) -> f64 {
        if self.a > 0.0 {
            self.v_max
        } else if self.a < 0.0 {
            0.0
        } else {
            self.v0
        }
    }

    /// `(s, v)` at time `t >= 0`.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let t_sat = self.saturation_time();
        if self.a == 0.0 || t <= t_sat {
            let v = (self.v0 + self.a * t).clamp(0.0, self.v_max);
            (self.s0 + self.v0 * t + 0.5 * self.a * t * t, v)
        } else {
            let s_sat = self.s0 + self.v0 * t_sat + 0.5 * self.a * t_sat * t_sat;
            let v_sat = self.saturated_speed();
            (s_sat + v_sat * (t - t_sat), v_sat)
        }
    }

    /// First time the position reaches `x`, if ever.
    pub fn time_to_reach(&self, x: f64) -> Option<f64> {
        let dist = x - self.s0;
        if dist <= 0.0 {
            return Some(0.0);
        }
        let t_sat = self.saturation_time();
        if self.a == 0.0 || t_sat == 0.0 {
            let v = if t_sat == 0.0 { self.saturated_speed_or_v0() } else { self.v0 };
            return (v > 0.0).then(|| dist / v);
        }
        let disc = self.v0 * self.v0 + 2.0 * self.a * dist;
        if disc >= 0.0 {
            let denom = self.v0 + disc.sqrt();
            if denom > 0.0 {
                let t = 2.0 * dist / denom;
                if t <= t_sat {
                    return Some(t);
                }
            }
        }
        let (s_sat, v_sat) = self.state_at(t_sat);
        (v_sat > 0.0).then(|| t_sat + (x - s_sat) / v_sat)
    }

    fn saturated_speed_or_v0(&self) -> f64 {
        if self.a == 0.0 {
            self.v0
        } else {
            self.saturated_speed()
        }
    }
}

/// One step of length `disc.tau` from `(s, v)` under normalized input `u`.
pub fn closed_form_step(s: f64, v: f64, u: f64, disc: &Discretization) -> (f64, f64) {
    SaturatedMotion::new(s, v, disc.accel(u), disc.v_max()).state_at(disc.tau)
}
