//! Per-vehicle particle filter over expected maneuver, intended maneuver,
//! route and physical state.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)] // used without std
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corridor::{Corridor, CorridorId, VehicleId};
use crate::map::{IntersectionId, LaneletId};
use crate::markov::SaturatedMotion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Stop,
    Go,
}

impl Maneuver {
    fn flipped(self) -> Self {
        match self {
            Maneuver::Stop => Maneuver::Go,
            Maneuver::Go => Maneuver::Stop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalState {
    /// Arc length along the particle's route, m.
    pub s: f64,
    pub v: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub expected: Maneuver,
    pub intended: Maneuver,
    /// Index into the filter's current route list.
    pub route: usize,
    pub phi: PhysicalState,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionPosterior {
    pub vehicle_id: VehicleId,
    pub corridor_probs: BTreeMap<CorridorId, f64>,
    pub p_stop: BTreeMap<IntersectionId, f64>,
    pub effective_sample_size: f64,
    /// Set when every likelihood vanished and the filter restarted from the
    /// measurement.
    pub reinitialized: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntentionError {
    #[error("vehicle {0} has no corridors")]
    NoCorridors(VehicleId),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("expected {expected} route contexts, got {got}")]
    ContextMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub n_particles: usize,
    pub sigma_xy: f64,
    pub sigma_v: f64,
    /// Process noise on the acceleration, m/s².
    pub sigma_a: f64,
    /// Gap-acceptance slope, 1/s.
    pub alpha: f64,
    /// Gap-acceptance weight of the right of way.
    pub beta: f64,
    pub compliance: f64,
    pub stickiness: f64,
    pub route_persistence: f64,
    /// Speeds are clamped to this multiple of the speed limit.
    pub speed_factor: f64,
    pub max_stop_decel: f64,
    /// Deceleration of a stop intention with no stop line ahead, m/s².
    pub free_stop_decel: f64,
    /// Speed floor for arrival-time estimates, m/s.
    pub min_speed: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_particles: 200,
            sigma_xy: 0.5,
            sigma_v: 0.5,
            sigma_a: 0.5,
            alpha: 1.0,
            beta: 4.0,
            compliance: 0.9,
            stickiness: 0.7,
            route_persistence: 0.95,
            speed_factor: 1.2,
            max_stop_decel: 3.0,
            free_stop_decel: 1.0,
            min_speed: 0.5,
        }
    }
}

/// The next intersection a route passes, seen from that route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopContext {
    pub intersection: IntersectionId,
    /// Where a stopping vehicle halts, route arc length.
    pub stop_s: f64,
    /// Where the route meets conflicting traffic, route arc length.
    pub conflict_s: f64,
    /// Arrival time of the most relevant conflicting vehicle, if any.
    pub other_arrival: Option<f64>,
    pub has_right_of_way: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct RouteContext<'a> {
    pub corridor: &'a Corridor,
    pub speed_limit: f64,
    pub stop: Option<StopContext>,
}

/// `P(E = go)`: logistic in the time gap to the conflicting vehicle, shifted
/// by the right of way. Without a conflicting vehicle the route is free.
pub fn go_probability(t_self: f64, t_other: Option<f64>, has_right_of_way: bool, cfg: &FilterConfig) -> f64 {
    let Some(t_other) = t_other else {
        return 1.0;
    };
    let row = if has_right_of_way { 1.0 } else { -1.0 };
    let z = cfg.alpha * (t_other - t_self) + cfg.beta * row;
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
struct RouteKey {
    id: CorridorId,
    seq: Vec<LaneletId>,
    offsets: Vec<f64>,
}

impl RouteKey {
    fn of(c: &Corridor) -> Self {
        Self {
            id: c.id,
            seq: c.lanelet_seq.clone(),
            offsets: c.lanelet_offsets.clone(),
        }
    }

    fn index_at(&self, s: f64) -> usize {
        self.offsets.partition_point(|&o| o <= s).saturating_sub(1)
    }
}

/// Particle filter for one vehicle. The RNG is private to the instance.
#[derive(Debug, Clone)]
pub struct IntentionFilter {
    vehicle: VehicleId,
    cfg: FilterConfig,
    rng: ChaCha8Rng,
    particles: Vec<Particle>,
    routes: Vec<RouteKey>,
}

/// Per-vehicle stream derived from the global seed.
pub fn vehicle_seed(seed: u64, vehicle: VehicleId) -> u64 {
    seed ^ (vehicle.0 as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn normalize(particles: &mut [Particle]) -> f64 {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    if total > 0.0 && total.is_finite() {
        particles.iter_mut().for_each(|p| p.weight /= total);
    }
    total
}

impl IntentionFilter {
    /// Allocates particles round-robin over `corridors`, each at the
    /// measurement's projection with the measured speed.
    pub fn init(
        vehicle: VehicleId,
        corridors: &[Corridor],
        z0: &Measurement,
        cfg: FilterConfig,
        seed: u64,
    ) -> Result<Self, IntentionError> {
        let mut f = Self {
            vehicle,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(vehicle_seed(seed, vehicle)),
            particles: Vec::new(),
            routes: Vec::new(),
        };
        f.reset(corridors, z0)?;
        Ok(f)
    }

    fn reset(&mut self, corridors: &[Corridor], z: &Measurement) -> Result<(), IntentionError> {
        if corridors.is_empty() {
            return Err(IntentionError::NoCorridors(self.vehicle));
        }
        let n = self.cfg.n_particles.max(1);
        let starts: Vec<PhysicalState> = corridors
            .iter()
            .map(|c| {
                let s = c.centerline.project(crate::geometry::Point2::new(z.x, z.y)).s;
                PhysicalState {
                    s,
                    v: z.v.max(0.0),
                    curvature: c.curvature_at(s),
                }
            })
            .collect();
        self.routes = corridors.iter().map(RouteKey::of).collect();
        self.particles = (0..n)
            .map(|i| {
                let route = i % corridors.len();
                Particle {
                    expected: Maneuver::Go,
                    intended: Maneuver::Go,
                    route,
                    phi: starts[route],
                    weight: 1.0 / n as f64,
                }
            })
            .collect();
        Ok(())
    }

    pub fn vehicle(&self) -> VehicleId {
        self.vehicle
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }

    /// Moves particles onto a freshly enumerated corridor set. A particle
    /// keeps its lanelet and offset within it; when several new corridors
    /// continue its old route equally well one is drawn uniformly. A
    /// particle behind the new corridors' start moves to the first lanelet
    /// of its route they still contain; one on a route they no longer
    /// contain is dropped. Only when every particle is dropped does the
    /// filter restart from the measurement.
    pub fn rebase(&mut self, corridors: &[Corridor], z: &Measurement) -> Result<(), IntentionError> {
        if corridors.is_empty() {
            return Err(IntentionError::NoCorridors(self.vehicle));
        }
        let new: Vec<RouteKey> = corridors.iter().map(RouteKey::of).collect();
        if new == self.routes {
            return Ok(());
        }
        let old = core::mem::take(&mut self.routes);
        let mut dropped = 0;
        for p in &mut self.particles {
            let r = &old[p.route];
            let i = r.index_at(p.phi.s);
            let within = p.phi.s - r.offsets[i];
            let mut placed = false;
            for (skip, &lanelet) in r.seq[i..].iter().enumerate() {
                let rest = &r.seq[i + skip..];
                let mut best: Vec<(usize, usize)> = Vec::new();
                let mut best_score = 0;
                for (k, nr) in new.iter().enumerate() {
                    let Some(j) = nr.seq.iter().position(|&l| l == lanelet) else {
                        continue;
                    };
                    let score = 1 + rest[1..]
                        .iter()
                        .zip(&nr.seq[j + 1..])
                        .take_while(|(a, b)| a == b)
                        .count();
                    if score > best_score {
                        best_score = score;
                        best.clear();
                    }
                    if score == best_score {
                        best.push((k, j));
                    }
                }
                if best.is_empty() {
                    continue;
                }
                let (k, j) = best[self.rng.random_range(0..best.len())];
                let offset = if skip == 0 { within } else { 0.0 };
                p.route = k;
                p.phi.s = (new[k].offsets[j] + offset).clamp(0.0, corridors[k].length);
                p.phi.curvature = corridors[k].curvature_at(p.phi.s);
                placed = true;
                break;
            }
            if !placed {
                dropped += 1;
                p.route = 0;
                p.phi.s = p.phi.s.clamp(0.0, corridors[0].length);
                p.phi.curvature = corridors[0].curvature_at(p.phi.s);
                p.weight = 0.0;
            }
        }
        self.routes = new;
        if dropped == 0 {
            return Ok(());
        }
        let total = normalize(&mut self.particles);
        if !(total > 0.0 && total.is_finite()) {
            log::warn!("vehicle {}: particles left the corridor set, reinitializing", self.vehicle);
            return self.reset(corridors, z);
        }
        self.resample();
        Ok(())
    }

    fn check_contexts(&self, contexts: &[RouteContext<'_>]) -> Result<(), IntentionError> {
        if contexts.len() != self.routes.len() {
            return Err(IntentionError::ContextMismatch {
                expected: self.routes.len(),
                got: contexts.len(),
            });
        }
        Ok(())
    }

    /// Routes sharing lanelets with `route` up to the particle's position.
    fn compatible(&self, route: usize, s: f64) -> Vec<usize> {
        let r = &self.routes[route];
        let i = r.index_at(s);
        self.routes
            .iter()
            .enumerate()
            .filter(|(_, o)| o.seq.len() > i && o.seq[..=i] == r.seq[..=i])
            .map(|(k, _)| k)
            .collect()
    }

    /// Samples the transition of every particle over `dt`.
    pub fn predict_step(&mut self, contexts: &[RouteContext<'_>], dt: f64) -> Result<(), IntentionError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(IntentionError::InvalidStep(dt));
        }
        self.check_contexts(contexts)?;
        let cfg = self.cfg;
        for idx in 0..self.particles.len() {
            let mut p = self.particles[idx];

            if self.rng.random::<f64>() >= cfg.route_persistence {
                let options = self.compatible(p.route, p.phi.s);
                if options.len() > 1 {
                    p.route = options[self.rng.random_range(0..options.len())];
                }
            }
            let ctx = &contexts[p.route];
            let stop = ctx.stop.filter(|st| p.phi.s < st.stop_s);

            p.expected = match stop {
                None => Maneuver::Go,
                Some(st) => {
                    let t_self = (st.conflict_s - p.phi.s).max(0.0) / p.phi.v.max(cfg.min_speed);
                    let go = go_probability(t_self, st.other_arrival, st.has_right_of_way, &cfg);
                    if self.rng.random::<f64>() < go {
                        Maneuver::Go
                    } else {
                        Maneuver::Stop
                    }
                }
            };
            if self.rng.random::<f64>() >= cfg.stickiness {
                p.intended = if self.rng.random::<f64>() < cfg.compliance {
                    p.expected
                } else {
                    p.expected.flipped()
                };
            }

            let a_nominal = match p.intended {
                Maneuver::Go => 0.0,
                Maneuver::Stop => match stop {
                    Some(st) => {
                        let gap = (st.stop_s - p.phi.s).max(0.1);
                        (-p.phi.v * p.phi.v / (2.0 * gap)).clamp(-cfg.max_stop_decel, 0.0)
                    }
                    None => -cfg.free_stop_decel,
                },
            };
            let noise: f64 = if cfg.sigma_a > 0.0 {
                cfg.sigma_a * self.rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let v_cap = (cfg.speed_factor * ctx.speed_limit).max(0.0);
            let (s, v) = SaturatedMotion::new(p.phi.s, p.phi.v, a_nominal + noise, v_cap).state_at(dt);
            p.phi.s = s.clamp(0.0, ctx.corridor.length);
            p.phi.v = v;
            p.phi.curvature = ctx.corridor.curvature_at(p.phi.s);
            self.particles[idx] = p;
        }
        Ok(())
    }

    /// Weights particles by the measurement likelihood, reports the posterior
    /// and resamples when the effective sample size drops below half.
    pub fn update_step(
        &mut self,
        contexts: &[RouteContext<'_>],
        z: &Measurement,
    ) -> Result<IntentionPosterior, IntentionError> {
        self.check_contexts(contexts)?;
        let (sxy, sv) = (self.cfg.sigma_xy, self.cfg.sigma_v);
        for p in &mut self.particles {
            let q = contexts[p.route].corridor.point_at(p.phi.s);
            let d2 = (q.x - z.x).powi(2) + (q.y - z.y).powi(2);
            let dv = p.phi.v - z.v;
            p.weight *= (-0.5 * d2 / (sxy * sxy) - 0.5 * dv * dv / (sv * sv)).exp();
        }
        let total = normalize(&mut self.particles);
        let mut reinitialized = false;
        if !(total > 0.0 && total.is_finite()) {
            log::warn!(
                "vehicle {}: all particle likelihoods vanished at t = {:.2}, reinitializing",
                self.vehicle,
                z.timestamp
            );
            let corridors: Vec<Corridor> = contexts.iter().map(|c| c.corridor.clone()).collect();
            self.reset(&corridors, z)?;
            reinitialized = true;
        }
        let mut post = self.posterior(contexts);
        post.reinitialized = reinitialized;
        if post.effective_sample_size < self.particles.len() as f64 / 2.0 {
            self.resample();
        }
        Ok(post)
    }

    /// Marginals of the current weighted particle set.
    pub fn posterior(&self, contexts: &[RouteContext<'_>]) -> IntentionPosterior {
        let mut mass = alloc::vec![0.0; self.routes.len()];
        let mut stop: BTreeMap<IntersectionId, (f64, f64)> = BTreeMap::new();
        for p in &self.particles {
            mass[p.route] += p.weight;
            if let Some(st) = contexts.get(p.route).and_then(|c| c.stop) {
                let e = stop.entry(st.intersection).or_default();
                e.1 += p.weight;
                if p.intended == Maneuver::Stop {
                    e.0 += p.weight;
                }
            }
        }
        let total: f64 = mass.iter().sum();
        IntentionPosterior {
            vehicle_id: self.vehicle,
            corridor_probs: self.routes.iter().zip(&mass).map(|(r, m)| (r.id, m / total)).collect(),
            p_stop: stop
                .into_iter()
                .filter(|(_, (_, all))| *all > 0.0)
                .map(|(k, (s, all))| (k, (s / all).clamp(0.0, 1.0)))
                .collect(),
            effective_sample_size: self.effective_sample_size(),
            reinitialized: false,
        }
    }

    /// Systematic resampling to uniform weights.
    pub fn resample(&mut self) {
        let n = self.particles.len();
        let offset: f64 = self.rng.random::<f64>() / n as f64;
        let mut out = Vec::with_capacity(n);
        let mut cum = self.particles[0].weight;
        let mut i = 0;
        for k in 0..n {
            let target = offset + k as f64 / n as f64;
            while cum < target && i + 1 < n {
                i += 1;
                cum += self.particles[i].weight;
            }
            let mut p = self.particles[i];
            p.weight = 1.0 / n as f64;
            out.push(p);
        }
        self.particles = out;
    }

    #[doc(hidden)]
    pub fn particles_mut(&mut self) -> &mut [Particle] {
        &mut self.particles
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Polyline};
    use alloc::vec;

    fn straight(index: u32, y_end: f64) -> Corridor {
        let line = Polyline::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(30.0, 0.0),
            Point2::new(100.0, y_end),
        ])
        .unwrap();
        Corridor::new(
            CorridorId {
                vehicle: VehicleId(1),
                index,
            },
            vec![LaneletId(1), LaneletId(2 + index as i64)],
            vec![0.0, 30.0],
            line,
            0.0,
        )
    }

    fn z(x: f64, y: f64, v: f64) -> Measurement {
        Measurement {
            x,
            y,
            heading: 0.0,
            v,
            timestamp: 0.0,
        }
    }

    fn ctx(c: &Corridor) -> RouteContext<'_> {
        RouteContext {
            corridor: c,
            speed_limit: 14.0,
            stop: None,
        }
    }

    #[test]
    fn single_corridor_init() {
        let c = [straight(0, 0.0)];
        let f = IntentionFilter::init(VehicleId(1), &c, &z(5.0, 0.5, 3.0), FilterConfig::default(), 1).unwrap();
        assert_eq!(f.particles().len(), 200);
        assert!(f.particles().iter().all(|p| p.route == 0 && p.weight == 1.0 / 200.0));
        assert!(f.particles().iter().all(|p| (p.phi.s - 5.0).abs() < 1e-3));
    }

    #[test]
    fn round_robin_over_two_corridors() {
        let c = [straight(0, 0.0), straight(1, -40.0)];
        let f = IntentionFilter::init(VehicleId(1), &c, &z(5.0, 0.0, 3.0), FilterConfig::default(), 1).unwrap();
        let on_first = f.particles().iter().filter(|p| p.route == 0).count();
        assert_eq!(on_first, 100);
        assert!(IntentionFilter::init(VehicleId(1), &[], &z(0.0, 0.0, 0.0), FilterConfig::default(), 1).is_err());
    }

    #[test]
    fn standing_vehicle_stays_put() {
        let c = [straight(0, 0.0)];
        let cfg = FilterConfig {
            sigma_a: 0.0,
            ..Default::default()
        };
        let mut f = IntentionFilter::init(VehicleId(1), &c, &z(5.0, 0.0, 0.0), cfg, 1).unwrap();
        f.particles_mut().iter_mut().for_each(|p| p.intended = Maneuver::Stop);
        f.predict_step(&[ctx(&c[0])], 0.4).unwrap();
        assert!(f.particles().iter().all(|p| p.phi.s == 5.0 && p.phi.v == 0.0));
        assert!(f.predict_step(&[ctx(&c[0])], 0.0).is_err());
    }

    #[test]
    fn go_advances_at_constant_speed() {
        let c = [straight(0, 0.0)];
        let cfg = FilterConfig {
            sigma_a: 0.0,
            compliance: 1.0,
            ..Default::default()
        };
        let mut f = IntentionFilter::init(VehicleId(1), &c, &z(5.0, 0.0, 10.0), cfg, 1).unwrap();
        f.predict_step(&[ctx(&c[0])], 0.1).unwrap();
        assert!(f.particles().iter().all(|p| (p.phi.s - 6.0).abs() < 1e-12));
    }

    #[test]
    fn dominant_particle_wins() {
        let c = [straight(0, 0.0), straight(1, -40.0)];
        let mut f = IntentionFilter::init(VehicleId(1), &c, &z(60.0, -20.0, 5.0), FilterConfig::default(), 1).unwrap();
        // the measurement sits on corridor 1, tens of sigma from corridor 0
        let p = c[1].point_at(f.particles()[1].phi.s);
        let post = f.update_step(&[ctx(&c[0]), ctx(&c[1])], &z(p.x, p.y, 5.0)).unwrap();
        assert!(post.corridor_probs[&c[1].id] > 0.99);
    }

    #[test]
    fn symmetric_measurement_keeps_uniform_weights() {
        let c = [straight(0, 0.0), straight(1, -40.0)];
        let mut f = IntentionFilter::init(VehicleId(1), &c, &z(10.0, 0.0, 5.0), FilterConfig::default(), 1).unwrap();
        let post = f.update_step(&[ctx(&c[0]), ctx(&c[1])], &z(10.0, 0.3, 5.0)).unwrap();
        assert!(f.particles().iter().all(|p| (p.weight - 1.0 / 200.0).abs() < 1e-15));
        assert!((post.corridor_probs[&c[0].id] - 0.5).abs() < 1e-12);
        assert!((post.effective_sample_size - 200.0).abs() < 1e-9);
    }

    #[test]
    fn vanished_likelihood_reinitializes() {
        let c = [straight(0, 0.0)];
        let mut f = IntentionFilter::init(VehicleId(1), &c, &z(10.0, 0.0, 5.0), FilterConfig::default(), 1).unwrap();
        let post = f.update_step(&[ctx(&c[0])], &z(80.0, 0.0, 5.0)).unwrap();
        assert!(post.reinitialized);
        assert_eq!(post.corridor_probs[&c[0].id], 1.0);
        assert!(f.particles().iter().all(|p| (p.phi.s - 80.0).abs() < 1e-6));
    }

    #[test]
    fn gap_acceptance_is_monotone() {
        let cfg = FilterConfig::default();
        let mut last = 0.0;
        for gap in [-4.0, -2.0, 0.0, 2.0, 4.0] {
            let p = go_probability(0.0, Some(gap), false, &cfg);
            assert!(p > last);
            last = p;
            assert!(go_probability(0.0, Some(gap), true, &cfg) > p);
        }
        assert_eq!(go_probability(3.0, None, false, &cfg), 1.0);
    }
}
