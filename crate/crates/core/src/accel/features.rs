use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AccelError;
use crate::corridor::CURVATURE_SEGMENTS;

/// Values per history step.
pub const FEATURES_PER_STEP: usize = 22;
pub const HISTORY_STEPS: usize = 10;
/// Spacing of the history grid, s.
pub const HISTORY_DT: f64 = 0.4;
pub const FEATURE_LEN: usize = FEATURES_PER_STEP * HISTORY_STEPS;
/// Distance used when a leader or intersection vehicle is absent, m.
pub const SENTINEL_DISTANCE: f64 = 100.0;

pub mod index {
    pub const A_IN: usize = 0;
    pub const D_LEAD: usize = 1;
    pub const V_LEAD: usize = 2;
    pub const D_INT_TARGET: usize = 3;
    /// `κp1, κn1, ..., κp6, κn6`.
    pub const CURVATURE: usize = 4;
    /// `d_int, v_int, p_int` for the two most relevant intersection vehicles.
    pub const OTHERS: usize = 16;
}

/// Right of way between the target and another vehicle at the next
/// intersection, from the target's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Yields,
    Unknown,
    HasPriority,
}

impl Priority {
    pub fn encode(self) -> f64 {
        match self {
            Priority::Yields => -1.0,
            Priority::Unknown => 0.0,
            Priority::HasPriority => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionVehicle {
    /// Distance of that vehicle to the intersection, m.
    pub d_int: f64,
    pub v: f64,
    pub priority: Priority,
    /// Time until it reaches the conflict with the target's route, s.
    pub time_to_conflict: f64,
}

/// Snapshot of the quantities the feature vector is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySample {
    pub t: f64,
    pub a: f64,
    pub v: f64,
    /// Bumper-to-bumper gap and speed of the leader.
    pub leader: Option<(f64, f64)>,
    pub d_int: Option<f64>,
    pub curvature: [f64; 2 * CURVATURE_SEGMENTS],
    pub others: Vec<IntersectionVehicle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn step(&self, k: usize) -> &[f64] {
        &self.0[k * FEATURES_PER_STEP..(k + 1) * FEATURES_PER_STEP]
    }
}

/// The two intersection vehicles closest in time to the conflict.
pub fn select_others(others: &[IntersectionVehicle]) -> [Option<IntersectionVehicle>; 2] {
    let mut sorted: Vec<&IntersectionVehicle> = others.iter().collect();
    sorted.sort_by(|a, b| a.time_to_conflict.total_cmp(&b.time_to_conflict));
    [sorted.first().map(|v| **v), sorted.get(1).map(|v| **v)]
}

fn row(h: &HistorySample) -> [f64; FEATURES_PER_STEP] {
    let mut r = [0.0; FEATURES_PER_STEP];
    r[index::A_IN] = h.a;
    let (d, v) = h.leader.unwrap_or((SENTINEL_DISTANCE, h.v));
    r[index::D_LEAD] = d.max(0.0);
    r[index::V_LEAD] = v;
    r[index::D_INT_TARGET] = h.d_int.unwrap_or(SENTINEL_DISTANCE).max(0.0);
    r[index::CURVATURE..index::OTHERS].copy_from_slice(&h.curvature);
    for (j, o) in select_others(&h.others).iter().enumerate() {
        let base = index::OTHERS + 3 * j;
        match o {
            Some(o) => {
                r[base] = o.d_int.max(0.0);
                r[base + 1] = o.v;
                r[base + 2] = o.priority.encode();
            }
            None => r[base] = SENTINEL_DISTANCE,
        }
    }
    r
}

/// Builds the feature vector for time `t_now` from samples sorted by time.
/// Rows are interpolated linearly onto the 0.4 s grid; priority codes come
/// from the nearer sample.
pub fn extract_features(history: &[HistorySample], t_now: f64) -> Result<FeatureVector, AccelError> {
    let span = HISTORY_DT * (HISTORY_STEPS - 1) as f64;
    let first = history.first().ok_or(AccelError::InsufficientHistory)?;
    let last = history.last().ok_or(AccelError::InsufficientHistory)?;
    if first.t > t_now - span + 1e-6 || last.t < t_now - 1e-6 {
        return Err(AccelError::InsufficientHistory);
    }
    if history.windows(2).any(|w| !(w[1].t > w[0].t) || w[1].t - w[0].t > HISTORY_DT + 1e-6) {
        return Err(AccelError::InsufficientHistory);
    }
    let rows: Vec<[f64; FEATURES_PER_STEP]> = history.iter().map(row).collect();
    let mut out = Vec::with_capacity(FEATURE_LEN);
    for k in 0..HISTORY_STEPS {
        let t = t_now - HISTORY_DT * (HISTORY_STEPS - 1 - k) as f64;
        let i = history.partition_point(|h| h.t <= t).clamp(1, history.len() - 1);
        let (t0, t1) = (history[i - 1].t, history[i].t);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        for f in 0..FEATURES_PER_STEP {
            let is_priority = f >= index::OTHERS && (f - index::OTHERS) % 3 == 2;
            out.push(if is_priority {
                if w < 0.5 {
                    rows[i - 1][f]
                } else {
                    rows[i][f]
                }
            } else {
                rows[i - 1][f] * (1.0 - w) + rows[i][f] * w
            });
        }
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(AccelError::NonFinite);
    }
    Ok(FeatureVector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lone(t: f64) -> HistorySample {
        HistorySample {
            t,
            a: 0.0,
            v: 8.0,
            leader: None,
            d_int: None,
            curvature: [0.0; 12],
            others: vec![],
        }
    }

    #[test]
    fn lone_vehicle_uses_sentinels() {
        let h: Vec<_> = (0..=40).map(|i| lone(i as f64 * 0.1)).collect();
        let f = extract_features(&h, 4.0).unwrap();
        assert_eq!(f.0.len(), FEATURE_LEN);
        for k in 0..HISTORY_STEPS {
            let s = f.step(k);
            assert_eq!(s[index::A_IN], 0.0);
            assert_eq!(s[index::D_LEAD], SENTINEL_DISTANCE);
            assert_eq!(s[index::V_LEAD], 8.0);
            assert_eq!(s[index::D_INT_TARGET], SENTINEL_DISTANCE);
            assert!(s[index::CURVATURE..index::OTHERS].iter().all(|&k| k == 0.0));
            assert_eq!(&s[index::OTHERS..], &[100.0, 0.0, 0.0, 100.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn leader_passes_through() {
        let mut h: Vec<_> = (0..=40).map(|i| lone(i as f64 * 0.1)).collect();
        h.last_mut().unwrap().leader = Some((16.0, 3.0));
        let f = extract_features(&h, 4.0).unwrap();
        let s = f.step(HISTORY_STEPS - 1);
        assert_eq!((s[index::D_LEAD], s[index::V_LEAD]), (16.0, 3.0));
    }

    #[test]
    fn short_history_is_rejected() {
        let h: Vec<_> = (0..=20).map(|i| lone(i as f64 * 0.1)).collect();
        assert_eq!(extract_features(&h, 2.0), Err(AccelError::InsufficientHistory));
        let sparse: Vec<_> = (0..=4).map(|i| lone(i as f64)).collect();
        assert_eq!(extract_features(&sparse, 4.0), Err(AccelError::InsufficientHistory));
    }

    #[test]
    fn nearest_in_time_are_selected() {
        let o = |ttc: f64| IntersectionVehicle {
            d_int: ttc * 10.0,
            v: 10.0,
            priority: Priority::HasPriority,
            time_to_conflict: ttc,
        };
        let sel = select_others(&[o(5.0), o(1.0), o(3.0)]);
        assert_eq!(sel[0].unwrap().time_to_conflict, 1.0);
        assert_eq!(sel[1].unwrap().time_to_conflict, 3.0);
    }
}
