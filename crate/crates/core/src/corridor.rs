//! Corridor enumeration: every lanelet sequence a vehicle can follow within
//! the distance it covers over the horizon under constant acceleration.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

#[allow(unused_imports)] // used without std
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{three_point_curvature, wrap_angle, Point2, Polyline};
use crate::map::{LaneletId, LaneletMap};

/// Spacing of the stored curvature profile, and stencil half-width of the
/// three-point curvature estimator.
pub const CURVATURE_SPACING: f64 = 0.5;
/// Integration step for [`curvature_features`].
const FEATURE_STEP: f64 = 0.1;
pub const CURVATURE_SEGMENTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub i64);

impl core::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Corridor identifier: the owning vehicle plus a per-vehicle index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CorridorId {
    pub vehicle: VehicleId,
    pub index: u32,
}

impl core::fmt::Display for CorridorId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}.{}", self.vehicle.0, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// rad, map frame
    pub heading: f64,
}

impl Pose {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorridorError {
    #[error("vehicle {vehicle} at ({x:.2}, {y:.2}) matches no lanelet")]
    NoMatchingLanelet { vehicle: VehicleId, x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorConfig {
    /// Maximum |d| for a lanelet to match the vehicle, m.
    pub lateral_gate: f64,
    /// Maximum heading deviation from the centerline tangent, rad.
    pub heading_gate: f64,
    pub lane_changes: bool,
    /// Lane-change manoeuvre length is `max(min, v * time)`.
    pub lane_change_min_length: f64,
    pub lane_change_time: f64,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            lateral_gate: 2.0,
            heading_gate: core::f64::consts::FRAC_PI_3,
            lane_changes: true,
            lane_change_min_length: 15.0,
            lane_change_time: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub id: CorridorId,
    pub vehicle_id: VehicleId,
    pub lanelet_seq: Vec<LaneletId>,
    /// Arc length at which each lanelet of `lanelet_seq` starts.
    pub lanelet_offsets: Vec<f64>,
    pub centerline: Polyline,
    pub length: f64,
    pub start_s: f64,
    /// Signed curvature every [`CURVATURE_SPACING`] metres from s = 0.
    pub curvature_profile: Vec<f64>,
}

impl Corridor {
    pub fn new(
        id: CorridorId,
        lanelet_seq: Vec<LaneletId>,
        lanelet_offsets: Vec<f64>,
        centerline: Polyline,
        start_s: f64,
    ) -> Self {
        let length = centerline.length();
        let n = (length / CURVATURE_SPACING).floor() as usize + 1;
        let curvature_profile = (0..n)
            .map(|i| curvature_at(&centerline, i as f64 * CURVATURE_SPACING))
            .collect();
        Self {
            id,
            vehicle_id: id.vehicle,
            lanelet_seq,
            lanelet_offsets,
            centerline,
            length,
            start_s: start_s.clamp(0.0, (length - 1e-9).max(0.0)),
            curvature_profile,
        }
    }

    /// Index into `lanelet_seq` of the lanelet covering arc length `s`.
    pub fn lanelet_index_at(&self, s: f64) -> usize {
        self.lanelet_offsets
            .partition_point(|&o| o <= s)
            .saturating_sub(1)
    }

    pub fn lanelet_at(&self, s: f64) -> LaneletId {
        self.lanelet_seq[self.lanelet_index_at(s)]
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        if self.curvature_profile.is_empty() {
            return 0.0;
        }
        let i = (s / CURVATURE_SPACING).round().max(0.0) as usize;
        self.curvature_profile[i.min(self.curvature_profile.len() - 1)]
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        self.centerline.point_at(s)
    }
}

/// Circumscribed-circle curvature with points `CURVATURE_SPACING` apart.
/// The stencil is shifted inward near the ends.
fn curvature_at(line: &Polyline, s: f64) -> f64 {
    let h = CURVATURE_SPACING;
    let len = line.length();
    if len < 2.0 * h {
        return 0.0;
    }
    let b = s.clamp(h, len - h);
    three_point_curvature(line.point_at(b - h), line.point_at(b), line.point_at(b + h))
}

/// Distance covered over `horizon` from speed `v` at constant acceleration `a_max`.
pub fn horizon_distance(v: f64, a_max: f64, horizon: f64) -> f64 {
    v * horizon + 0.5 * a_max * horizon * horizon
}

struct StartMatch {
    lanelet: LaneletId,
    s: f64,
    d: f64,
}

fn match_lanelets(map: &LaneletMap, pose: &Pose, cfg: &CorridorConfig) -> Vec<StartMatch> {
    let p = pose.position();
    let mut matches: Vec<StartMatch> = map
        .lanelets()
        .filter_map(|l| {
            let pr = l.centerline.project(p);
            let len = l.length();
            let at_end = pr.s >= len - 1e-9;
            if pr.distance > cfg.lateral_gate || (at_end && !l.successors.is_empty()) {
                return None;
            }
            let dh = wrap_angle(pose.heading - l.centerline.heading_at(pr.s)).abs();
            (dh <= cfg.heading_gate).then_some(StartMatch {
                lanelet: l.id,
                s: pr.s.min(len),
                d: pr.d,
            })
        })
        .collect();
    // a lateral neighbour of a closer match is a lane-change target, not a
    // start; a lanelet merging into the same successor as a closer match
    // only overlaps it near the merge
    let snapshot: Vec<(LaneletId, f64)> = matches.iter().map(|m| (m.lanelet, m.d.abs())).collect();
    matches.retain(|m| {
        let mine = &map.lanelet(m.lanelet).expect("matched lanelet exists").successors;
        !snapshot.iter().any(|&(other, dist)| {
            let l = map.lanelet(other).expect("matched lanelet exists");
            let neighbour = l.adjacent_left == Some(m.lanelet) || l.adjacent_right == Some(m.lanelet);
            let merging = other != m.lanelet && l.successors.iter().any(|s| mine.contains(s));
            (neighbour || merging) && dist < m.d.abs()
        })
    });
    matches
}

/// All successor paths from `start` covering `budget` metres past `s0`.
fn successor_paths(map: &LaneletMap, start: LaneletId, s0: f64, budget: f64) -> Vec<Vec<LaneletId>> {
    let mut out = Vec::new();
    let first_len = map.lanelet(start).map(|l| l.length()).unwrap_or(0.0);
    let mut stack = alloc::vec![(alloc::vec![start], first_len - s0)];
    while let Some((path, covered)) = stack.pop() {
        let last = *path.last().expect("non-empty path");
        let succ = &map.lanelet(last).expect("validated map").successors;
        if covered >= budget || succ.is_empty() {
            out.push(path);
            continue;
        }
        let mut extended = false;
        for &s in succ.iter().rev() {
            if path.contains(&s) {
                continue;
            }
            let len = map.lanelet(s).expect("validated map").length();
            let mut next = path.clone();
            next.push(s);
            stack.push((next, covered + len));
            extended = true;
        }
        if !extended {
            out.push(path);
        }
    }
    out
}

/// Concatenated centerline of a lanelet sequence and the arc length at
/// which each lanelet starts.
///
/// # Panics
/// If `seq` is empty or names a lanelet missing from `map`.
pub fn chain_centerline(map: &LaneletMap, seq: &[LaneletId]) -> (Polyline, Vec<f64>) {
    let mut offsets = Vec::with_capacity(seq.len());
    let mut line: Option<Polyline> = None;
    for id in seq {
        let c = &map.lanelet(*id).expect("validated map").centerline;
        line = Some(match line {
            None => {
                offsets.push(0.0);
                c.clone()
            }
            Some(acc) => {
                offsets.push(acc.length() + acc.last().distance(c.first()));
                acc.concat(c)
            }
        });
    }
    (line.expect("non-empty lanelet sequence"), offsets)
}

/// Cuts the centerline `budget` metres past `start_s` and drops lanelets
/// that begin beyond the cut.
fn truncate(
    seq: Vec<LaneletId>,
    offsets: Vec<f64>,
    line: Polyline,
    start_s: f64,
    budget: f64,
) -> (Vec<LaneletId>, Vec<f64>, Polyline) {
    let end = start_s + budget;
    if line.length() <= end {
        return (seq, offsets, line);
    }
    let keep = offsets.iter().filter(|&&o| o < end).count().max(1);
    let cut = line.slice(0.0, end).unwrap_or(line);
    (seq[..keep].to_vec(), offsets[..keep].to_vec(), cut)
}

/// Enumerates the corridors of one vehicle.
pub fn enumerate_corridors(
    map: &LaneletMap,
    vehicle: VehicleId,
    pose: &Pose,
    v: f64,
    a_max: f64,
    horizon: f64,
    cfg: &CorridorConfig,
) -> Result<Vec<Corridor>, CorridorError> {
    let budget = horizon_distance(v.max(0.0), a_max, horizon);
    let starts = match_lanelets(map, pose, cfg);
    if starts.is_empty() {
        return Err(CorridorError::NoMatchingLanelet {
            vehicle,
            x: pose.x,
            y: pose.y,
        });
    }

    let mut raw: Vec<(Vec<LaneletId>, Vec<f64>, Polyline, f64)> = Vec::new();
    for m in &starts {
        for path in successor_paths(map, m.lanelet, m.s, budget) {
            let (line, offsets) = chain_centerline(map, &path);
            let (seq, offsets, line) = truncate(path, offsets, line, m.s, budget);
            raw.push((seq, offsets, line, m.s));
        }
        if cfg.lane_changes {
            raw.extend(lane_change_corridors(map, m, pose, v, budget, cfg));
        }
    }

    let mut seen = BTreeSet::new();
    raw.retain(|(seq, ..)| seen.insert(seq.clone()));
    raw.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, (seq, offsets, line, s0))| {
            Corridor::new(
                CorridorId {
                    vehicle,
                    index: i as u32,
                },
                seq,
                offsets,
                line,
                s0,
            )
        })
        .collect())
}

/// Single lane change from the start lanelet to its lateral neighbours.
fn lane_change_corridors(
    map: &LaneletMap,
    start: &StartMatch,
    pose: &Pose,
    v: f64,
    budget: f64,
    cfg: &CorridorConfig,
) -> Vec<(Vec<LaneletId>, Vec<f64>, Polyline, f64)> {
    let mut out = Vec::new();
    let here = map.lanelet(start.lanelet).expect("matched lanelet exists");
    let foot = here.centerline.point_at(start.s);
    let change_len = cfg.lane_change_min_length.max(v * cfg.lane_change_time);
    for adj in [here.adjacent_left, here.adjacent_right].into_iter().flatten() {
        let adj_line = &map.lanelet(adj).expect("validated map").centerline;
        let pr = adj_line.project(pose.position());
        let dh = wrap_angle(pose.heading - adj_line.heading_at(pr.s)).abs();
        if dh > cfg.heading_gate {
            continue;
        }
        for path in successor_paths(map, adj, pr.s, budget) {
            let (chain, chain_offsets) = chain_centerline(map, &path);
            let join_s = pr.s + change_len;
            if join_s >= chain.length() {
                continue;
            }
            let mut pts: Vec<Point2> = here
                .centerline
                .points()
                .iter()
                .zip(here.centerline.arc_lengths())
                .take_while(|(_, &c)| c < start.s)
                .map(|(p, _)| *p)
                .collect();
            pts.push(foot);
            let tail = chain.slice(join_s, chain.length()).expect("join before chain end");
            let join_len = foot.distance(tail.first());
            pts.extend_from_slice(tail.points());
            let Ok(line) = Polyline::new(pts) else {
                continue;
            };
            let mut seq = alloc::vec![start.lanelet];
            let mut offsets = alloc::vec![0.0];
            for (id, o) in path.iter().zip(&chain_offsets) {
                seq.push(*id);
                offsets.push((start.s + join_len + (o - join_s)).max(start.s));
            }
            let (seq, offsets, line) = truncate(seq, offsets, line, start.s, budget);
            out.push((seq, offsets, line, start.s));
        }
    }
    out
}

/// Integrated positive and negative curvature over six equal segments of
/// the centerline ahead of the vehicle: `[kp1, kn1, ..., kp6, kn6]`.
pub fn curvature_features(corridor: &Corridor) -> [f64; 2 * CURVATURE_SEGMENTS] {
    let mut out = [0.0; 2 * CURVATURE_SEGMENTS];
    let Some(ahead) = corridor
        .centerline
        .slice(corridor.start_s, corridor.length)
    else {
        return out;
    };
    let len = ahead.length();
    let per_segment = ((len / CURVATURE_SEGMENTS as f64) / FEATURE_STEP).ceil().max(1.0) as usize;
    let n = per_segment * CURVATURE_SEGMENTS;
    let h = len / n as f64;
    for j in 0..n {
        let k = curvature_at(&ahead, (j as f64 + 0.5) * h);
        let seg = j / per_segment;
        out[2 * seg] += k.max(0.0) * h;
        out[2 * seg + 1] += (-k).max(0.0) * h;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{LaneletSpec, MapSpec};
    use alloc::vec;

    fn lane(id: i64, pts: &[Point2], succ: Vec<i64>) -> LaneletSpec {
        let line = Polyline::new(pts.to_vec()).unwrap();
        let offset = |sign: f64| -> Vec<[f64; 2]> {
            line.resample_uniform((line.length() / 0.5) as usize + 2)
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let s = line.length() * i as f64 / ((line.length() / 0.5) as usize + 1) as f64;
                    let q = *p + line.tangent_at(s).perp() * (sign * 1.75);
                    [q.x, q.y]
                })
                .collect()
        };
        LaneletSpec {
            id,
            left: offset(1.0),
            right: offset(-1.0),
            successors: succ,
            adj_left: None,
            adj_right: None,
            speed_limit: 14.0,
        }
    }

    fn pose(x: f64, y: f64) -> Pose {
        Pose { x, y, heading: 0.0 }
    }

    #[test]
    fn straight_chain_truncated_at_horizon_distance() {
        let spec = MapSpec {
            lanelets: vec![
                lane(1, &[Point2::new(0.0, 0.0), Point2::new(50.0, 0.0)], vec![2]),
                lane(2, &[Point2::new(50.0, 0.0), Point2::new(100.0, 0.0)], vec![3]),
                lane(3, &[Point2::new(100.0, 0.0), Point2::new(150.0, 0.0)], vec![]),
            ],
            ..Default::default()
        };
        let map = LaneletMap::from_spec(&spec).unwrap();
        let cs = enumerate_corridors(&map, VehicleId(1), &pose(10.0, 0.0), 10.0, 2.0, 4.0, &Default::default()).unwrap();
        assert_eq!(cs.len(), 1);
        let c = &cs[0];
        assert!((c.start_s - 10.0).abs() < 1e-9);
        assert!((c.length - c.start_s - 56.0).abs() < 1e-9);
        assert_eq!(c.lanelet_seq, vec![LaneletId(1), LaneletId(2)]);
    }

    #[test]
    fn fork_gives_two_corridors() {
        let spec = MapSpec {
            lanelets: vec![
                lane(1, &[Point2::new(0.0, 0.0), Point2::new(30.0, 0.0)], vec![2, 3]),
                lane(2, &[Point2::new(30.0, 0.0), Point2::new(80.0, 0.0)], vec![]),
                lane(3, &[Point2::new(30.0, 0.0), Point2::new(70.0, -30.0)], vec![]),
            ],
            ..Default::default()
        };
        let map = LaneletMap::from_spec(&spec).unwrap();
        let cs = enumerate_corridors(&map, VehicleId(4), &pose(5.0, 0.0), 10.0, 2.0, 4.0, &Default::default()).unwrap();
        assert_eq!(cs.len(), 2);
        assert!(cs.iter().all(|c| c.lanelet_seq[0] == LaneletId(1)));
        assert_eq!(cs[1].id, CorridorId { vehicle: VehicleId(4), index: 1 });
    }

    #[test]
    fn merging_sibling_is_not_a_start() {
        // a shallow on-ramp meeting the main lane where both end
        let spec = MapSpec {
            lanelets: vec![
                lane(1, &[Point2::new(0.0, 0.0), Point2::new(40.0, 0.0)], vec![3]),
                lane(2, &[Point2::new(0.0, -8.0), Point2::new(40.0, 0.0)], vec![3]),
                lane(3, &[Point2::new(40.0, 0.0), Point2::new(90.0, 0.0)], vec![]),
            ],
            ..Default::default()
        };
        let map = LaneletMap::from_spec(&spec).unwrap();
        let cs = enumerate_corridors(&map, VehicleId(1), &pose(36.0, 0.0), 8.0, 2.0, 4.0, &Default::default()).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].lanelet_seq[0], LaneletId(1));
    }

    #[test]
    fn off_map_vehicle_errors() {
        let spec = MapSpec {
            lanelets: vec![lane(1, &[Point2::new(0.0, 0.0), Point2::new(30.0, 0.0)], vec![])],
            ..Default::default()
        };
        let map = LaneletMap::from_spec(&spec).unwrap();
        let err = enumerate_corridors(&map, VehicleId(1), &pose(5.0, 20.0), 5.0, 2.0, 4.0, &Default::default());
        assert!(matches!(err, Err(CorridorError::NoMatchingLanelet { .. })));
        // heading against the lane is not a match either
        let back = Pose { x: 5.0, y: 0.0, heading: core::f64::consts::PI };
        assert!(enumerate_corridors(&map, VehicleId(1), &back, 5.0, 2.0, 4.0, &Default::default()).is_err());
    }

    #[test]
    fn lane_change_alternative() {
        let mut a = lane(1, &[Point2::new(0.0, 0.0), Point2::new(200.0, 0.0)], vec![]);
        let mut b = lane(2, &[Point2::new(0.0, 3.5), Point2::new(200.0, 3.5)], vec![]);
        a.adj_left = Some(2);
        b.adj_right = Some(1);
        let map = LaneletMap::from_spec(&MapSpec {
            lanelets: vec![a, b],
            ..Default::default()
        })
        .unwrap();
        let cs = enumerate_corridors(&map, VehicleId(1), &pose(20.0, 0.2), 10.0, 2.0, 4.0, &Default::default()).unwrap();
        assert_eq!(cs.len(), 2);
        let lc = cs.iter().find(|c| c.lanelet_seq.len() == 2).unwrap();
        assert_eq!(lc.lanelet_seq, vec![LaneletId(1), LaneletId(2)]);
        assert!((lc.point_at(lc.length).y - 3.5).abs() < 1e-9);
        assert!((lc.start_s - 20.0).abs() < 1e-9);
    }

    #[test]
    fn straight_corridor_has_zero_curvature_features() {
        let map = LaneletMap::from_spec(&MapSpec {
            lanelets: vec![lane(1, &[Point2::new(0.0, 0.0), Point2::new(100.0, 0.0)], vec![])],
            ..Default::default()
        })
        .unwrap();
        let cs = enumerate_corridors(&map, VehicleId(1), &pose(0.0, 0.0), 10.0, 2.0, 4.0, &Default::default()).unwrap();
        assert!(curvature_features(&cs[0]).iter().all(|&k| k.abs() < 1e-12));
    }

    #[test]
    fn constant_arc_integrates_to_angle() {
        // kappa = 0.1 over 60 m, sampled finely
        let r = 10.0;
        let pts: Vec<Point2> = (0..=1200)
            .map(|i| {
                let th = 6.0 * i as f64 / 1200.0 - core::f64::consts::FRAC_PI_2;
                Point2::new(r * th.cos(), r + r * th.sin())
            })
            .collect();
        let line = Polyline::new(pts).unwrap();
        let c = Corridor::new(
            CorridorId { vehicle: VehicleId(0), index: 0 },
            vec![LaneletId(1)],
            vec![0.0],
            line,
            0.0,
        );
        let f = curvature_features(&c);
        for i in 0..6 {
            assert!((f[2 * i] - 1.0).abs() < 2e-3, "segment {i}: {}", f[2 * i]);
            assert!(f[2 * i + 1] < 1e-9);
        }
    }
}
