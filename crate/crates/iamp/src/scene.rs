//! One snapshot of a recording: vehicle states, their corridors and the
//! relations between them, plus the per-route views the intention filter
//! and the feature extractor need.

use std::collections::BTreeMap;
use std::ops::Range;

use iamp_core::accel::{HistorySample, IntersectionVehicle, Priority};
use iamp_core::corridor::{curvature_features, enumerate_corridors, Corridor, CorridorConfig, CorridorId, Pose, VehicleId};
use iamp_core::intention::{Measurement, RouteContext, StopContext};
use iamp_core::map::LaneletMap;
use iamp_core::relations::{
    corridor_conflicts, dependencies_from_conflicts, intersection_relations, lateral_relations, CorridorConflict,
    CorridorDependency, IntersectionRelation, LateralRelation, RelationConfig, VehicleState,
};
use serde::{Deserialize, Serialize};

use crate::tracks::{Track, TrackSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub corridor: CorridorConfig,
    pub relation: RelationConfig,
    /// Look-ahead used to size corridors, s.
    pub corridor_horizon: f64,
    /// Acceleration used to size corridors, m/s².
    pub corridor_accel: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            corridor: CorridorConfig::default(),
            relation: RelationConfig::default(),
            corridor_horizon: 6.0,
            corridor_accel: 2.0,
        }
    }
}

pub fn vehicle_state(track: &Track, s: &TrackSample) -> VehicleState {
    VehicleState {
        id: VehicleId(track.id),
        pose: Pose {
            x: s.x,
            y: s.y,
            heading: s.heading,
        },
        v: s.v,
        a: s.a,
        length: track.length,
        width: track.width,
    }
}

pub fn measurement(s: &TrackSample) -> Measurement {
    Measurement {
        x: s.x,
        y: s.y,
        heading: s.heading,
        v: s.v,
        timestamp: s.t,
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub t: f64,
    /// Vehicles that matched at least one lanelet.
    pub vehicles: Vec<VehicleState>,
    pub corridors: Vec<Corridor>,
    /// Range of `corridors` owned by each vehicle.
    pub spans: BTreeMap<VehicleId, Range<usize>>,
    pub lateral: Vec<LateralRelation>,
    pub intersections: Vec<IntersectionRelation>,
    pub conflicts: Vec<CorridorConflict>,
    pub dependencies: Vec<CorridorDependency>,
}

impl Scene {
    pub fn build(map: &LaneletMap, states: &[VehicleState], t: f64, cfg: &SceneConfig) -> Self {
        let mut vehicles = Vec::with_capacity(states.len());
        let mut corridors = Vec::new();
        let mut spans = BTreeMap::new();
        for st in states {
            match enumerate_corridors(map, st.id, &st.pose, st.v, cfg.corridor_accel, cfg.corridor_horizon, &cfg.corridor) {
                Ok(cs) if !cs.is_empty() => {
                    let start = corridors.len();
                    corridors.extend(cs);
                    spans.insert(st.id, start..corridors.len());
                    vehicles.push(*st);
                }
                Ok(_) => {}
                Err(e) => log::debug!("t = {t:.1}: {e}"),
            }
        }
        let lateral = lateral_relations(&vehicles, &corridors, &cfg.relation);
        let intersections = intersection_relations(map, &corridors);
        let conflicts = corridor_conflicts(map, &vehicles, &corridors, &cfg.relation);
        let dependencies = dependencies_from_conflicts(&conflicts);
        Self {
            t,
            vehicles,
            corridors,
            spans,
            lateral,
            intersections,
            conflicts,
            dependencies,
        }
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn corridors_of(&self, id: VehicleId) -> &[Corridor] {
        self.spans.get(&id).map_or(&[], |r| &self.corridors[r.clone()])
    }

    pub fn corridor(&self, id: CorridorId) -> Option<&Corridor> {
        self.corridors_of(id.vehicle).iter().find(|c| c.id == id)
    }

    fn first_intersection(&self, c: CorridorId) -> Option<&IntersectionRelation> {
        // relations are sorted by distance within each corridor
        self.intersections.iter().find(|r| r.corridor == c)
    }

    /// Conflicts on corridor `c`: (own s, other corridor, other s, `c` yields).
    fn conflicts_on(&self, c: CorridorId) -> impl Iterator<Item = (f64, CorridorId, f64, bool)> + '_ {
        self.conflicts.iter().filter_map(move |k| {
            if k.yielding == c {
                Some((k.s_yielding, k.priority, k.s_priority, true))
            } else if k.priority == c {
                Some((k.s_priority, k.yielding, k.s_yielding, false))
            } else {
                None
            }
        })
    }

    fn arrival(&self, other: CorridorId, s_other: f64, min_speed: f64) -> Option<f64> {
        let c = self.corridor(other)?;
        let v = self.vehicle(other.vehicle)?;
        Some((s_other - c.start_s).max(0.0) / v.v.max(min_speed))
    }

    /// Route contexts of one vehicle's corridors for the intention filter.
    pub fn route_contexts(&self, map: &LaneletMap, id: VehicleId, min_speed: f64) -> Vec<RouteContext<'_>> {
        self.corridors_of(id)
            .iter()
            .map(|c| RouteContext {
                corridor: c,
                speed_limit: map.lanelet(c.lanelet_at(c.start_s)).map_or(f64::INFINITY, |l| l.speed_limit),
                stop: self.stop_context(map, c, min_speed),
            })
            .collect()
    }

    fn stop_context(&self, map: &LaneletMap, c: &Corridor, min_speed: f64) -> Option<StopContext> {
        let rel = self.first_intersection(c.id)?;
        let entry_s = c.start_s + rel.d_int;
        let stop_s = rel
            .entrance
            .and_then(|l| map.stop_line(l))
            .map(|(a, b)| c.centerline.project(a.lerp(b, 0.5)).s)
            .filter(|&s| s > c.start_s && s <= entry_s + 1e-6)
            .unwrap_or(entry_s);
        // the conflicting vehicle that arrives first
        let best = self
            .conflicts_on(c.id)
            .filter_map(|(s_own, other, s_other, yields)| {
                Some((s_own, self.arrival(other, s_other, min_speed)?, yields))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        Some(match best {
            Some((s_own, t_other, yields)) => StopContext {
                intersection: rel.intersection,
                stop_s: stop_s.min(s_own),
                conflict_s: s_own,
                other_arrival: Some(t_other),
                has_right_of_way: !yields,
            },
            None => StopContext {
                intersection: rel.intersection,
                stop_s,
                conflict_s: entry_s,
                other_arrival: None,
                has_right_of_way: true,
            },
        })
    }

    /// Feature snapshot of vehicle `id` following corridor `c`.
    pub fn history_sample(&self, id: VehicleId, c: &Corridor, min_speed: f64) -> Option<HistorySample> {
        let v = self.vehicle(id)?;
        let lat = self.lateral.iter().find(|r| r.target == id)?;
        let mut others: BTreeMap<VehicleId, IntersectionVehicle> = BTreeMap::new();
        for (_, other, s_other, yields) in self.conflicts_on(c.id) {
            let (Some(oc), Some(ov)) = (self.corridor(other), self.vehicle(other.vehicle)) else {
                continue;
            };
            let time_to_conflict = (s_other - oc.start_s).max(0.0) / ov.v.max(min_speed);
            let d_int = self
                .first_intersection(other)
                .map_or((s_other - oc.start_s).max(0.0), |r| r.d_int);
            let entry = IntersectionVehicle {
                d_int,
                v: ov.v,
                priority: if yields { Priority::Yields } else { Priority::HasPriority },
                time_to_conflict,
            };
            let e = others.entry(other.vehicle).or_insert(entry);
            if entry.time_to_conflict < e.time_to_conflict {
                *e = entry;
            }
        }
        Some(HistorySample {
            t: self.t,
            a: v.a,
            v: v.v,
            leader: lat.leader.map(|_| (lat.d_lead, lat.v_lead)),
            d_int: self.first_intersection(c.id).map(|r| r.d_int),
            curvature: curvature_features(c),
            others: others.into_values().collect(),
        })
    }
}

/// Corridor of the track's vehicle that best matches its future positions.
///
/// The future is followed for at least `horizon` and then on until the
/// track ends or leaves the reach of the longest corridor, so corridors
/// that share the next seconds are told apart by the branch actually taken.
pub fn corridor_matching_future<'a>(scene: &'a Scene, track: &Track, horizon: f64) -> Option<&'a Corridor> {
    const STEP: f64 = 0.2;
    let corridors = scene.corridors_of(VehicleId(track.id));
    let reach = corridors.iter().map(|c| c.centerline.length()).fold(0.0, f64::max);
    let mut future = Vec::new();
    let mut travelled = 0.0;
    let mut last = track.sample_at(scene.t)?.position();
    for k in 1.. {
        let dt = STEP * k as f64;
        let Some(p) = track.sample_at(scene.t + dt).map(|s| s.position()) else {
            break;
        };
        travelled += p.distance(last);
        last = p;
        if dt > horizon + 1e-9 && travelled > reach {
            break;
        }
        future.push(p);
    }
    corridors
        .iter()
        .map(|c| {
            let err: f64 = future.iter().map(|p| c.centerline.project(*p).distance).sum();
            (c, err)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.id.cmp(&b.0.id)))
        .map(|(c, _)| c)
}

/// States of every vehicle present at `t`.
pub fn states_at(tracks: &[Track], t: f64) -> Vec<(VehicleState, TrackSample)> {
    tracks
        .iter()
        .filter_map(|tr| tr.sample_at(t).map(|s| (vehicle_state(tr, &s), s)))
        .collect()
}
