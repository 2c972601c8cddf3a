//! Lanelet map: drivable segments with left/right bounds, connectivity and
//! regulatory elements for unsignalized intersections.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // used without std
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Polyline};

/// Spacing used when resampling bounds before taking midpoints.
pub const CENTERLINE_SPACING: f64 = 0.5;
/// Default maximum distance for [`LaneletMap::project_to_centerline`].
pub const DEFAULT_PROJECTION_GATE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneletId(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntersectionId(pub i64);

impl core::fmt::Display for LaneletId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl core::fmt::Display for IntersectionId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("lanelet {referrer} references unknown lanelet {missing}")]
    DanglingReference { referrer: String, missing: LaneletId },
    #[error("degenerate geometry in lanelet {id}: {reason}")]
    DegenerateGeometry { id: LaneletId, reason: &'static str },
    #[error("duplicate lanelet id {0}")]
    DuplicateLanelet(LaneletId),
    #[error("duplicate intersection id {0}")]
    DuplicateIntersection(IntersectionId),
    #[error("intersection {0} has no member lanelets")]
    EmptyIntersection(IntersectionId),
    #[error("regulatory element {index} ({kind:?}) needs a stop line")]
    MissingStopLine { index: usize, kind: RegulatoryKind },
    #[error("lanelet {id} has invalid speed limit {limit}")]
    InvalidSpeedLimit { id: LaneletId, limit: f64 },
    #[error("unknown lanelet {0}")]
    UnknownLanelet(LaneletId),
    #[error("point is {distance:.2} m from the centerline of lanelet {id} (gate {gate} m)")]
    TooFarFromCenterline { id: LaneletId, distance: f64, gate: f64 },
}

// ---------------------------------------------------------------------------
// Serialized form
// ---------------------------------------------------------------------------

/// One lanelet as stored in the map JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneletSpec {
    pub id: i64,
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
    #[serde(default)]
    pub successors: Vec<i64>,
    #[serde(default)]
    pub adj_left: Option<i64>,
    #[serde(default)]
    pub adj_right: Option<i64>,
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulatorySpec {
    pub kind: RegulatoryKind,
    pub refs: Vec<i64>,
    #[serde(default)]
    pub priority_over: Vec<i64>,
    #[serde(default)]
    pub stop_line: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSpec {
    pub id: i64,
    pub members: Vec<i64>,
    #[serde(default)]
    pub entrances: Vec<i64>,
}

/// Top-level map file contents.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapSpec {
    pub lanelets: Vec<LaneletSpec>,
    #[serde(default)]
    pub regulatory: Vec<RegulatorySpec>,
    #[serde(default)]
    pub intersections: Vec<IntersectionSpec>,
}

// ---------------------------------------------------------------------------
// Validated model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Lanelet {
    pub id: LaneletId,
    pub left_bound: Polyline,
    pub right_bound: Polyline,
    pub centerline: Polyline,
    pub successors: Vec<LaneletId>,
    pub adjacent_left: Option<LaneletId>,
    pub adjacent_right: Option<LaneletId>,
    /// m/s
    pub speed_limit: f64,
}

impl Lanelet {
    pub fn length(&self) -> f64 {
        self.centerline.length()
    }

    /// Mean distance between the bounds.
    pub fn width(&self) -> f64 {
        let n = self.centerline.len().max(2);
        let l = self.left_bound.resample_uniform(n);
        let r = self.right_bound.resample_uniform(n);
        l.iter().zip(&r).map(|(a, b)| a.distance(*b)).sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegulatoryKind {
    RightOfWay,
    Yield,
    StopLine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatoryElement {
    pub kind: RegulatoryKind,
    /// For right of way: the prioritized lanelets. For yield and stop
    /// lines: the lanelets that must yield.
    pub lanelet_refs: Vec<LaneletId>,
    /// For right of way: lanelets that must yield. For yield: lanelets
    /// yielded to (empty means every conflicting lanelet).
    pub priority_over: Vec<LaneletId>,
    pub stop_line: Option<(Point2, Point2)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: IntersectionId,
    pub members: BTreeSet<LaneletId>,
    pub entrances: BTreeSet<LaneletId>,
}

/// Frenet coordinates relative to a centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frenet {
    pub s: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneletMap {
    lanelets: BTreeMap<LaneletId, Lanelet>,
    predecessors: BTreeMap<LaneletId, Vec<LaneletId>>,
    pub regulatory: Vec<RegulatoryElement>,
    pub intersections: Vec<Intersection>,
}

fn polyline_from(id: LaneletId, raw: &[[f64; 2]], which: &'static str) -> Result<Polyline, MapError> {
    if raw.len() < 2 {
        return Err(MapError::DegenerateGeometry { id, reason: which });
    }
    Polyline::new(raw.iter().map(|p| Point2::new(p[0], p[1])).collect())
        .map_err(|_| MapError::DegenerateGeometry { id, reason: which })
}

/// Pointwise midpoints of both bounds after resampling them to a common count.
pub fn derive_centerline(left: &Polyline, right: &Polyline) -> Option<Polyline> {
    let longer = left.length().max(right.length());
    let n = ((longer / CENTERLINE_SPACING).ceil() as usize + 1).max(2);
    let l = left.resample_uniform(n);
    let r = right.resample_uniform(n);
    let mid: Vec<Point2> = l.iter().zip(&r).map(|(a, b)| a.lerp(*b, 0.5)).collect();
    Polyline::new(mid).ok()
}

impl LaneletMap {
    pub fn from_spec(spec: &MapSpec) -> Result<Self, MapError> {
        let mut lanelets = BTreeMap::new();
        for ls in &spec.lanelets {
            let id = LaneletId(ls.id);
            if lanelets.contains_key(&id) {
                return Err(MapError::DuplicateLanelet(id));
            }
            if !(ls.speed_limit.is_finite() && ls.speed_limit > 0.0) {
                return Err(MapError::InvalidSpeedLimit {
                    id,
                    limit: ls.speed_limit,
                });
            }
            let left_bound = polyline_from(id, &ls.left, "left bound needs at least 2 points")?;
            let right_bound = polyline_from(id, &ls.right, "right bound needs at least 2 points")?;
            let centerline = derive_centerline(&left_bound, &right_bound).ok_or(
                MapError::DegenerateGeometry {
                    id,
                    reason: "centerline has zero length",
                },
            )?;
            lanelets.insert(
                id,
                Lanelet {
                    id,
                    left_bound,
                    right_bound,
                    centerline,
                    successors: ls.successors.iter().map(|&s| LaneletId(s)).collect(),
                    adjacent_left: ls.adj_left.map(LaneletId),
                    adjacent_right: ls.adj_right.map(LaneletId),
                    speed_limit: ls.speed_limit,
                },
            );
        }

        let check = |referrer: &dyn Fn() -> String, id: LaneletId| -> Result<(), MapError> {
            if lanelets.contains_key(&id) {
                Ok(())
            } else {
                Err(MapError::DanglingReference {
                    referrer: referrer(),
                    missing: id,
                })
            }
        };
        let mut predecessors: BTreeMap<LaneletId, Vec<LaneletId>> = BTreeMap::new();
        for l in lanelets.values() {
            let name = || alloc::format!("lanelet {}", l.id);
            for &s in &l.successors {
                check(&name, s)?;
                predecessors.entry(s).or_default().push(l.id);
            }
            for adj in [l.adjacent_left, l.adjacent_right].into_iter().flatten() {
                check(&name, adj)?;
            }
        }

        let mut regulatory = Vec::with_capacity(spec.regulatory.len());
        for (index, rs) in spec.regulatory.iter().enumerate() {
            let name = || alloc::format!("regulatory element {index}");
            for &r in rs.refs.iter().chain(&rs.priority_over) {
                check(&name, LaneletId(r))?;
            }
            if matches!(rs.kind, RegulatoryKind::Yield | RegulatoryKind::StopLine)
                && rs.stop_line.is_none()
            {
                return Err(MapError::MissingStopLine {
                    index,
                    kind: rs.kind,
                });
            }
            regulatory.push(RegulatoryElement {
                kind: rs.kind,
                lanelet_refs: rs.refs.iter().map(|&r| LaneletId(r)).collect(),
                priority_over: rs.priority_over.iter().map(|&r| LaneletId(r)).collect(),
                stop_line: rs.stop_line.map(|[a, b]| {
                    (Point2::new(a[0], a[1]), Point2::new(b[0], b[1]))
                }),
            });
        }

        let mut intersections: Vec<Intersection> = Vec::with_capacity(spec.intersections.len());
        for is in &spec.intersections {
            let id = IntersectionId(is.id);
            if intersections.iter().any(|i| i.id == id) {
                return Err(MapError::DuplicateIntersection(id));
            }
            if is.members.is_empty() {
                return Err(MapError::EmptyIntersection(id));
            }
            let name = || alloc::format!("intersection {id}");
            for &m in is.members.iter().chain(&is.entrances) {
                check(&name, LaneletId(m))?;
            }
            intersections.push(Intersection {
                id,
                members: is.members.iter().map(|&m| LaneletId(m)).collect(),
                entrances: is.entrances.iter().map(|&m| LaneletId(m)).collect(),
            });
        }

        Ok(Self {
            lanelets,
            predecessors,
            regulatory,
            intersections,
        })
    }

    /// Serializable form. Bounds are written as loaded.
    pub fn to_spec(&self) -> MapSpec {
        let pts = |p: &Polyline| p.points().iter().map(|q| [q.x, q.y]).collect();
        MapSpec {
            lanelets: self
                .lanelets
                .values()
                .map(|l| LaneletSpec {
                    id: l.id.0,
                    left: pts(&l.left_bound),
                    right: pts(&l.right_bound),
                    successors: l.successors.iter().map(|s| s.0).collect(),
                    adj_left: l.adjacent_left.map(|a| a.0),
                    adj_right: l.adjacent_right.map(|a| a.0),
                    speed_limit: l.speed_limit,
                })
                .collect(),
            regulatory: self
                .regulatory
                .iter()
                .map(|r| RegulatorySpec {
                    kind: r.kind,
                    refs: r.lanelet_refs.iter().map(|l| l.0).collect(),
                    priority_over: r.priority_over.iter().map(|l| l.0).collect(),
                    stop_line: r.stop_line.map(|(a, b)| [[a.x, a.y], [b.x, b.y]]),
                })
                .collect(),
            intersections: self
                .intersections
                .iter()
                .map(|i| IntersectionSpec {
                    id: i.id.0,
                    members: i.members.iter().map(|m| m.0).collect(),
                    entrances: i.entrances.iter().map(|m| m.0).collect(),
                })
                .collect(),
        }
    }

    pub fn lanelet(&self, id: LaneletId) -> Result<&Lanelet, MapError> {
        self.lanelets.get(&id).ok_or(MapError::UnknownLanelet(id))
    }

    pub fn lanelets(&self) -> impl Iterator<Item = &Lanelet> {
        self.lanelets.values()
    }

    pub fn lanelet_count(&self) -> usize {
        self.lanelets.len()
    }

    pub fn predecessors(&self, id: LaneletId) -> &[LaneletId] {
        self.predecessors.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn intersection(&self, id: IntersectionId) -> Option<&Intersection> {
        self.intersections.iter().find(|i| i.id == id)
    }

    /// Frenet coordinates of `point` on a lanelet centerline.
    pub fn project_to_centerline(&self, id: LaneletId, point: Point2) -> Result<Frenet, MapError> {
        self.project_to_centerline_gated(id, point, DEFAULT_PROJECTION_GATE)
    }

    pub fn project_to_centerline_gated(
        &self,
        id: LaneletId,
        point: Point2,
        gate: f64,
    ) -> Result<Frenet, MapError> {
        let pr = self.lanelet(id)?.centerline.project(point);
        if pr.distance > gate {
            return Err(MapError::TooFarFromCenterline {
                id,
                distance: pr.distance,
                gate,
            });
        }
        Ok(Frenet { s: pr.s, d: pr.d })
    }

    /// Whether traffic on `route_a` must yield to traffic on `route_b`
    /// according to the regulatory elements.
    pub fn yields_to(&self, route_a: &[LaneletId], route_b: &[LaneletId]) -> bool {
        let hits = |set: &[LaneletId], route: &[LaneletId]| route.iter().any(|l| set.contains(l));
        self.regulatory.iter().any(|r| match r.kind {
            RegulatoryKind::RightOfWay => {
                hits(&r.lanelet_refs, route_b) && hits(&r.priority_over, route_a)
            }
            RegulatoryKind::Yield | RegulatoryKind::StopLine => {
                hits(&r.lanelet_refs, route_a)
                    && (r.priority_over.is_empty() || hits(&r.priority_over, route_b))
            }
        })
    }

    /// Stop line attached to a lanelet by a yield/stop element, if any.
    pub fn stop_line(&self, id: LaneletId) -> Option<(Point2, Point2)> {
        self.regulatory
            .iter()
            .filter(|r| match r.kind {
                RegulatoryKind::RightOfWay => r.priority_over.contains(&id),
                RegulatoryKind::Yield | RegulatoryKind::StopLine => r.lanelet_refs.contains(&id),
            })
            .find_map(|r| r.stop_line)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn straight_spec(id: i64, x0: f64, x1: f64, succ: Vec<i64>) -> LaneletSpec {
        LaneletSpec {
            id,
            left: vec![[x0, 1.75], [x1, 1.75]],
            right: vec![[x0, -1.75], [x1, -1.75]],
            successors: succ,
            adj_left: None,
            adj_right: None,
            speed_limit: 13.9,
        }
    }

    #[test]
    fn single_lanelet_midpoint_centerline() {
        let spec = MapSpec {
            lanelets: vec![straight_spec(1, 0.0, 10.0, vec![])],
            ..Default::default()
        };
        let map = LaneletMap::from_spec(&spec).unwrap();
        assert_eq!(map.lanelet_count(), 1);
        let c = &map.lanelet(LaneletId(1)).unwrap().centerline;
        assert_eq!(c.first(), Point2::new(0.0, 0.0));
        assert_eq!(c.last(), Point2::new(10.0, 0.0));
        assert!(c.points().iter().all(|p| p.y.abs() < 1e-12));
        assert_eq!(c.len(), 21);
    }

    #[test]
    fn dangling_successor_names_id() {
        let spec = MapSpec {
            lanelets: vec![straight_spec(1, 0.0, 10.0, vec![99])],
            ..Default::default()
        };
        let err = LaneletMap::from_spec(&spec).unwrap_err();
        assert!(matches!(err, MapError::DanglingReference { missing: LaneletId(99), .. }));
        assert!(alloc::format!("{err}").contains("99"));
    }

    #[test]
    fn degenerate_bound() {
        let mut l = straight_spec(3, 0.0, 10.0, vec![]);
        l.left = vec![[0.0, 1.0]];
        let err = LaneletMap::from_spec(&MapSpec {
            lanelets: vec![l],
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err, MapError::DegenerateGeometry { id: LaneletId(3), .. }));
    }

    #[test]
    fn yield_requires_stop_line() {
        let spec = MapSpec {
            lanelets: vec![straight_spec(1, 0.0, 10.0, vec![])],
            regulatory: vec![RegulatorySpec {
                kind: RegulatoryKind::Yield,
                refs: vec![1],
                priority_over: vec![],
                stop_line: None,
            }],
            ..Default::default()
        };
        assert!(matches!(
            LaneletMap::from_spec(&spec),
            Err(MapError::MissingStopLine { index: 0, .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let map = LaneletMap::from_spec(&MapSpec {
            lanelets: vec![straight_spec(1, 0.0, 10.0, vec![])],
            ..Default::default()
        })
        .unwrap();
        let f = map.project_to_centerline(LaneletId(1), Point2::new(5.0, 0.0)).unwrap();
        assert!((f.s - 5.0).abs() < 1e-12 && f.d.abs() < 1e-12);
        let f = map.project_to_centerline(LaneletId(1), Point2::new(5.0, 1.0)).unwrap();
        assert!((f.s - 5.0).abs() < 1e-12 && (f.d - 1.0).abs() < 1e-12);
        assert!(matches!(
            map.project_to_centerline(LaneletId(1), Point2::new(5.0, 30.0)),
            Err(MapError::TooFarFromCenterline { .. })
        ));
    }

    #[test]
    fn spec_round_trip_preserves_map() {
        let spec = MapSpec {
            lanelets: vec![
                straight_spec(1, 0.0, 10.0, vec![2]),
                straight_spec(2, 10.0, 20.0, vec![]),
            ],
            regulatory: vec![RegulatorySpec {
                kind: RegulatoryKind::RightOfWay,
                refs: vec![2],
                priority_over: vec![1],
                stop_line: None,
            }],
            intersections: vec![IntersectionSpec {
                id: 5,
                members: vec![2],
                entrances: vec![1],
            }],
        };
        let map = LaneletMap::from_spec(&spec).unwrap();
        assert_eq!(LaneletMap::from_spec(&map.to_spec()).unwrap(), map);
        assert_eq!(map.predecessors(LaneletId(2)), &[LaneletId(1)]);
        assert!(map.yields_to(&[LaneletId(1)], &[LaneletId(2)]));
        assert!(!map.yields_to(&[LaneletId(2)], &[LaneletId(1)]));
    }
}
