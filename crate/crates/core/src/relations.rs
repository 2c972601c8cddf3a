//! Interaction structures between vehicles, corridors and intersections:
//! leaders on the same lane, distances to intersections and which corridor
//! blocks which at a crossing.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corridor::{Corridor, CorridorId, Pose, VehicleId};
use crate::geometry::{wrap_angle, Point2, Polyline};
use crate::map::{IntersectionId, LaneletId, LaneletMap};

/// Gap reported when no leader exists, m.
pub const NO_LEADER_DISTANCE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub pose: Pose,
    /// m/s
    pub v: f64,
    /// m/s²
    pub a: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationConfig {
    pub lane_half_width: f64,
    pub heading_gate: f64,
    /// Resampling step for pairwise centerline intersection, m.
    pub crossing_spacing: f64,
    /// Arrival-time differences below this are ties, s.
    pub tie_time: f64,
    pub min_speed: f64,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            lane_half_width: 1.75,
            heading_gate: core::f64::consts::FRAC_PI_3,
            crossing_spacing: 0.5,
            tie_time: 0.2,
            min_speed: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralRelation {
    pub target: VehicleId,
    pub leader: Option<VehicleId>,
    /// Bumper-to-bumper gap, m.
    pub d_lead: f64,
    pub v_lead: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionRelation {
    pub corridor: CorridorId,
    pub intersection: IntersectionId,
    /// Arc length from the vehicle to the first member lanelet, m.
    pub d_int: f64,
    pub entrance: Option<LaneletId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorDependency {
    pub dependent: CorridorId,
    pub blocking: CorridorId,
    pub conflict_s_dependent: f64,
    pub conflict_s_blocking: f64,
    pub conflict_point: Point2,
}

/// Nearest vehicle ahead of each target on any of its corridors.
pub fn lateral_relations(
    vehicles: &[VehicleState],
    corridors: &[Corridor],
    cfg: &RelationConfig,
) -> Vec<LateralRelation> {
    // (leader, centre distance along the corridor, gap)
    let mut best: BTreeMap<VehicleId, (VehicleId, f64, f64)> = BTreeMap::new();
    for target in vehicles {
        for c in corridors.iter().filter(|c| c.vehicle_id == target.id) {
            for other in vehicles.iter().filter(|o| o.id != target.id) {
                let pr = c.centerline.project(other.pose.position());
                if pr.distance > cfg.lane_half_width || pr.s <= c.start_s || pr.s >= c.length {
                    continue;
                }
                let dh = wrap_angle(other.pose.heading - c.centerline.heading_at(pr.s)).abs();
                if dh > cfg.heading_gate {
                    continue;
                }
                let ds = pr.s - c.start_s;
                let gap = (ds - 0.5 * (target.length + other.length)).max(0.0);
                let better = best.get(&target.id).is_none_or(|&(id, d, _)| {
                    ds < d - 1e-12 || (ds <= d + 1e-12 && other.id < id)
                });
                if better {
                    best.insert(target.id, (other.id, ds, gap));
                }
            }
        }
    }
    // a pair cannot lead each other; keep the tighter of the two
    let pairs: Vec<(VehicleId, VehicleId, f64)> =
        best.iter().map(|(&t, &(l, ds, _))| (t, l, ds)).collect();
    for (t, l, ds) in pairs {
        if let Some(&(back, ds_back, _)) = best.get(&l) {
            if back == t && (ds_back < ds || (ds_back == ds && l < t)) {
                best.remove(&t);
            }
        }
    }
    let mut out: Vec<LateralRelation> = vehicles
        .iter()
        .map(|t| match best.get(&t.id) {
            Some(&(leader, _, gap)) => LateralRelation {
                target: t.id,
                leader: Some(leader),
                d_lead: gap,
                v_lead: vehicles.iter().find(|v| v.id == leader).map_or(0.0, |v| v.v),
            },
            None => LateralRelation {
                target: t.id,
                leader: None,
                d_lead: NO_LEADER_DISTANCE,
                v_lead: t.v,
            },
        })
        .collect();
    out.sort_by_key(|r| r.target);
    out
}

/// One record per (corridor, intersection) the corridor traverses.
pub fn intersection_relations(map: &LaneletMap, corridors: &[Corridor]) -> Vec<IntersectionRelation> {
    let mut out = Vec::new();
    for c in corridors {
        let mut recs: Vec<IntersectionRelation> = map
            .intersections
            .iter()
            .filter_map(|inter| {
                let i = c.lanelet_seq.iter().position(|l| inter.members.contains(l))?;
                let entry = c.lanelet_offsets[i];
                let entrance = if i > 0 {
                    Some(c.lanelet_seq[i - 1])
                } else if inter.entrances.contains(&c.lanelet_seq[0]) {
                    Some(c.lanelet_seq[0])
                } else {
                    map.predecessors(c.lanelet_seq[0])
                        .iter()
                        .find(|p| inter.entrances.contains(p))
                        .copied()
                };
                Some(IntersectionRelation {
                    corridor: c.id,
                    intersection: inter.id,
                    d_int: (entry - c.start_s).max(0.0),
                    entrance,
                })
            })
            .collect();
        recs.sort_by(|a, b| a.d_int.total_cmp(&b.d_int).then(a.intersection.cmp(&b.intersection)));
        out.extend(recs);
    }
    out
}

/// One side of a potential conflict, as seen by the priority rules.
#[derive(Debug, Clone, Copy)]
pub struct ConflictSide<'a> {
    pub corridor: CorridorId,
    pub vehicle: VehicleId,
    /// Lanelets up to and including the one containing the conflict.
    pub route: &'a [LaneletId],
    /// Arc length from the vehicle to the conflict point, m.
    pub distance: f64,
    pub speed: f64,
}

/// Decides whether `a` must give way to `b` at their shared conflict point.
///
/// Regulatory right of way first, then constant-velocity arrival order,
/// then vehicle id (the higher id yields).
pub fn gives_way(map: &LaneletMap, a: &ConflictSide<'_>, b: &ConflictSide<'_>, cfg: &RelationConfig) -> bool {
    let a_yields = map.yields_to(a.route, b.route);
    let b_yields = map.yields_to(b.route, a.route);
    if a_yields != b_yields {
        return a_yields;
    }
    let ta = a.distance / a.speed.max(cfg.min_speed);
    let tb = b.distance / b.speed.max(cfg.min_speed);
    if (ta - tb).abs() < cfg.tie_time {
        return a.vehicle > b.vehicle;
    }
    ta > tb
}

fn conflict_side(c: &Corridor, s: f64, speed: f64) -> ConflictSide<'_> {
    ConflictSide {
        corridor: c.id,
        vehicle: c.vehicle_id,
        route: &c.lanelet_seq[..=c.lanelet_index_at(s)],
        distance: s - c.start_s,
        speed,
    }
}

/// Where two corridors first merge: the start of the first lanelet both
/// reach from different predecessors.
fn first_merge(a: &Corridor, b: &Corridor) -> Option<(f64, f64, Point2)> {
    for (i, l) in a.lanelet_seq.iter().enumerate().skip(1) {
        let Some(j) = b.lanelet_seq.iter().position(|m| m == l) else {
            continue;
        };
        if j == 0 || a.lanelet_seq[i - 1] == b.lanelet_seq[j - 1] {
            return None;
        }
        let (sa, sb) = (a.lanelet_offsets[i], b.lanelet_offsets[j]);
        if sa <= a.start_s || sb <= b.start_s {
            return None;
        }
        return Some((sa, sb, a.centerline.point_at(sa)));
    }
    None
}

/// First point ahead of both vehicles where the two corridors meet
/// coming from different lanelets: a crossing or a merge.
fn first_conflict(
    a: &Corridor,
    line_a: &Polyline,
    b: &Corridor,
    line_b: &Polyline,
) -> Option<(f64, f64, Point2)> {
    const EPS: f64 = 0.05;
    let merge = first_merge(a, b);
    for x in line_a.crossings(line_b) {
        let sa = a.centerline.project(x.point).s;
        let sb = b.centerline.project(x.point).s;
        if sa <= a.start_s || sb <= b.start_s {
            continue;
        }
        if a.lanelet_at(sa - EPS) == b.lanelet_at(sb - EPS) {
            continue;
        }
        if merge.is_some_and(|m| m.0 <= sa) {
            break;
        }
        return Some((sa, sb, x.point));
    }
    merge
}

/// A potential conflict between corridors of two different vehicles, with
/// `first` the corridor that gives way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorConflict {
    pub yielding: CorridorId,
    pub priority: CorridorId,
    pub s_yielding: f64,
    pub s_priority: f64,
    pub point: Point2,
    /// Whether the yielding side gives way because of a regulatory element
    /// rather than arrival order.
    pub regulated: bool,
}

/// Every pairwise conflict between corridors of different vehicles.
pub fn corridor_conflicts(
    map: &LaneletMap,
    vehicles: &[VehicleState],
    corridors: &[Corridor],
    cfg: &RelationConfig,
) -> Vec<CorridorConflict> {
    let lines: Vec<Polyline> = corridors
        .iter()
        .map(|c| c.centerline.resampled(cfg.crossing_spacing))
        .collect();
    let speed = |id: VehicleId| vehicles.iter().find(|v| v.id == id).map_or(0.0, |v| v.v);
    let mut out = Vec::new();
    for i in 0..corridors.len() {
        for j in i + 1..corridors.len() {
            let (a, b) = (&corridors[i], &corridors[j]);
            if a.vehicle_id == b.vehicle_id {
                continue;
            }
            let Some((sa, sb, point)) = first_conflict(a, &lines[i], b, &lines[j]) else {
                continue;
            };
            let sa_side = conflict_side(a, sa, speed(a.vehicle_id));
            let sb_side = conflict_side(b, sb, speed(b.vehicle_id));
            let regulated = map.yields_to(sa_side.route, sb_side.route) != map.yields_to(sb_side.route, sa_side.route);
            out.push(if gives_way(map, &sa_side, &sb_side, cfg) {
                CorridorConflict {
                    yielding: a.id,
                    priority: b.id,
                    s_yielding: sa,
                    s_priority: sb,
                    point,
                    regulated,
                }
            } else {
                CorridorConflict {
                    yielding: b.id,
                    priority: a.id,
                    s_yielding: sb,
                    s_priority: sa,
                    point,
                    regulated,
                }
            });
        }
    }
    out
}

/// Selects at most one blocking corridor for each corridor.
pub fn corridor_dependencies(
    map: &LaneletMap,
    vehicles: &[VehicleState],
    corridors: &[Corridor],
    cfg: &RelationConfig,
) -> Vec<CorridorDependency> {
    dependencies_from_conflicts(&corridor_conflicts(map, vehicles, corridors, cfg))
}

/// Keeps the nearest conflict of every yielding corridor and breaks cycles.
pub fn dependencies_from_conflicts(conflicts: &[CorridorConflict]) -> Vec<CorridorDependency> {
    let mut nearest: BTreeMap<CorridorId, CorridorDependency> = BTreeMap::new();
    for c in conflicts {
        let dep = CorridorDependency {
            dependent: c.yielding,
            blocking: c.priority,
            conflict_s_dependent: c.s_yielding,
            conflict_s_blocking: c.s_priority,
            conflict_point: c.point,
        };
        let keep = nearest.get(&dep.dependent).is_none_or(|cur| {
            dep.conflict_s_dependent < cur.conflict_s_dependent - 1e-9
                || (dep.conflict_s_dependent <= cur.conflict_s_dependent + 1e-9 && dep.blocking < cur.blocking)
        });
        if keep {
            nearest.insert(dep.dependent, dep);
        }
    }
    break_cycles(&mut nearest);
    nearest.into_values().collect()
}

/// Each corridor has at most one outgoing edge, so cycles are simple loops;
/// drop the edge whose conflict lies farthest from its dependent vehicle.
fn break_cycles(edges: &mut BTreeMap<CorridorId, CorridorDependency>) {
    loop {
        let mut cycle: Option<Vec<CorridorId>> = None;
        'search: for &start in edges.keys() {
            let mut path = alloc::vec![start];
            let mut cur = start;
            while let Some(e) = edges.get(&cur) {
                cur = e.blocking;
                if let Some(pos) = path.iter().position(|&p| p == cur) {
                    cycle = Some(path[pos..].to_vec());
                    break 'search;
                }
                path.push(cur);
            }
        }
        let Some(cycle) = cycle else { return };
        let worst = cycle
            .iter()
            .copied()
            .max_by(|a, b| {
                let (ea, eb) = (&edges[a], &edges[b]);
                ea.conflict_s_dependent
                    .total_cmp(&eb.conflict_s_dependent)
                    .then(a.cmp(b))
            })
            .expect("cycle is non-empty");
        edges.remove(&worst);
    }
}

/// Corridors ordered so that every blocking corridor precedes its dependents.
pub fn propagation_order(corridors: &[Corridor], deps: &[CorridorDependency]) -> Vec<CorridorId> {
    let blocking_of: BTreeMap<CorridorId, CorridorId> =
        deps.iter().map(|d| (d.dependent, d.blocking)).collect();
    let mut order = Vec::with_capacity(corridors.len());
    let mut placed = alloc::collections::BTreeSet::new();
    for c in corridors {
        let mut chain = Vec::new();
        let mut cur = Some(c.id);
        while let Some(id) = cur {
            if placed.contains(&id) || chain.contains(&id) {
                break;
            }
            chain.push(id);
            cur = blocking_of.get(&id).copied();
        }
        for id in chain.into_iter().rev() {
            if placed.insert(id) {
                order.push(id);
            }
        }
    }
    order
}
