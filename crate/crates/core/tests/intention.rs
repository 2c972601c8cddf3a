use iamp_core::corridor::{enumerate_corridors, Corridor, CorridorConfig, CorridorId, Pose, VehicleId};
use iamp_core::geometry::{Point2, Polyline};
use iamp_core::intention::*;
use iamp_core::map::{LaneletId, LaneletMap, LaneletSpec, MapSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lane(id: i64, a: Point2, b: Point2, succ: Vec<i64>) -> LaneletSpec {
    let t = (b - a).normalized();
    let n = t.perp() * 1.75;
    LaneletSpec {
        id,
        left: vec![[(a + n).x, (a + n).y], [(b + n).x, (b + n).y]],
        right: vec![[(a - n).x, (a - n).y], [(b - n).x, (b - n).y]],
        successors: succ,
        adj_left: None,
        adj_right: None,
        speed_limit: 14.0,
    }
}

fn fork_map() -> LaneletMap {
    LaneletMap::from_spec(&MapSpec {
        lanelets: vec![
            lane(1, Point2::new(0.0, 0.0), Point2::new(30.0, 0.0), vec![2, 3]),
            lane(2, Point2::new(30.0, 0.0), Point2::new(120.0, 0.0), vec![]),
            lane(3, Point2::new(30.0, 0.0), Point2::new(100.0, -50.0), vec![]),
        ],
        ..Default::default()
    })
    .unwrap()
}

fn contexts(cs: &[Corridor]) -> Vec<RouteContext<'_>> {
    cs.iter()
        .map(|c| RouteContext {
            corridor: c,
            speed_limit: 14.0,
            stop: None,
        })
        .collect()
}

fn measurement(x: f64, t: f64) -> Measurement {
    Measurement {
        x,
        y: 0.0,
        heading: 0.0,
        v: 10.0,
        timestamp: t,
    }
}

/// Straight-through ground truth at 10 m/s; returns P(straight) 2 s after
/// passing the fork.
fn run_fork(seed: u64) -> (f64, Vec<f64>) {
    let map = fork_map();
    let cfg = CorridorConfig::default();
    let pose = |x: f64| Pose { x, y: 0.0, heading: 0.0 };
    let mut cs = enumerate_corridors(&map, VehicleId(7), &pose(5.0), 10.0, 2.0, 4.0, &cfg).unwrap();
    assert_eq!(cs.len(), 2);
    let mut f = IntentionFilter::init(VehicleId(7), &cs, &measurement(5.0, 0.0), FilterConfig::default(), seed).unwrap();
    let mut trace = Vec::new();
    let mut p_straight = 0.0;
    for k in 1..=45 {
        let t = k as f64 * 0.1;
        let x = 5.0 + 10.0 * t;
        let z = measurement(x, t);
        f.predict_step(&contexts(&cs), 0.1).unwrap();
        cs = enumerate_corridors(&map, VehicleId(7), &pose(x), 10.0, 2.0, 4.0, &cfg).unwrap();
        f.rebase(&cs, &z).unwrap();
        let post = f.update_step(&contexts(&cs), &z).unwrap();
        let total: f64 = post.corridor_probs.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        p_straight = cs
            .iter()
            .filter(|c| c.lanelet_seq.contains(&LaneletId(2)))
            .map(|c| post.corridor_probs[&c.id])
            .sum();
        trace.push(p_straight);
    }
    (p_straight, trace)
}

#[test]
fn fork_posterior_converges_to_true_route() {
    // fork at x = 30 is passed at t = 2.5 s; checked at t = 4.5 s
    let mut sum = 0.0;
    for seed in 0..10 {
        sum += run_fork(seed).0;
    }
    assert!(sum / 10.0 > 0.8, "mean P = {}", sum / 10.0);
}

#[test]
fn fixed_seed_is_bit_identical() {
    assert_eq!(run_fork(3).1, run_fork(3).1);
}

#[test]
fn single_corridor_probability_is_exactly_one() {
    let line = Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(200.0, 0.0)]).unwrap();
    let c = vec![Corridor::new(
        CorridorId { vehicle: VehicleId(1), index: 0 },
        vec![LaneletId(1)],
        vec![0.0],
        line,
        0.0,
    )];
    let mut f = IntentionFilter::init(VehicleId(1), &c, &measurement(0.0, 0.0), FilterConfig::default(), 9).unwrap();
    for k in 1..40 {
        let t = k as f64 * 0.1;
        f.predict_step(&contexts(&c), 0.1).unwrap();
        let post = f.update_step(&contexts(&c), &measurement(10.0 * t, t)).unwrap();
        assert_eq!(post.corridor_probs[&c[0].id], 1.0);
        let w: f64 = f.particles().iter().map(|p| p.weight).sum();
        assert!((w - 1.0).abs() < 1e-9);
    }
}

#[test]
fn process_noise_statistics() {
    let line = Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(500.0, 0.0)]).unwrap();
    let c = vec![Corridor::new(
        CorridorId { vehicle: VehicleId(1), index: 0 },
        vec![LaneletId(1)],
        vec![0.0],
        line,
        0.0,
    )];
    let n = 100_000;
    let cfg = FilterConfig {
        n_particles: n,
        compliance: 1.0,
        sigma_a: 0.5,
        ..Default::default()
    };
    let mut f = IntentionFilter::init(VehicleId(1), &c, &measurement(0.0, 0.0), cfg, 4).unwrap();
    let dt = 0.1;
    f.predict_step(&contexts(&c), dt).unwrap();
    let dv: Vec<f64> = f.particles().iter().map(|p| p.phi.v - 10.0).collect();
    let mean = dv.iter().sum::<f64>() / n as f64;
    let var = dv.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let expect_var = 0.25 * dt * dt;
    let se_mean = expect_var.sqrt() / (n as f64).sqrt();
    let se_var = expect_var * (2.0 / (n - 1) as f64).sqrt();
    assert!(mean.abs() < 3.0 * se_mean, "mean {mean}");
    assert!((var - expect_var).abs() < 3.0 * se_var, "var {var}");
}

#[test]
fn resampling_preserves_route_mass() {
    let map = fork_map();
    let cs = enumerate_corridors(&map, VehicleId(2), &Pose { x: 5.0, y: 0.0, heading: 0.0 }, 10.0, 2.0, 4.0, &Default::default()).unwrap();
    let n = 10_000;
    let cfg = FilterConfig {
        n_particles: n,
        ..Default::default()
    };
    let mut f = IntentionFilter::init(VehicleId(2), &cs, &measurement(5.0, 0.0), cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut total = 0.0;
    for p in f.particles_mut() {
        p.weight = rng.random::<f64>() * if p.route == 0 { 3.0 } else { 1.0 };
        total += p.weight;
    }
    f.particles_mut().iter_mut().for_each(|p| p.weight /= total);
    let before: f64 = f.particles().iter().filter(|p| p.route == 0).map(|p| p.weight).sum();
    f.resample();
    let after = f.particles().iter().filter(|p| p.route == 0).count() as f64 / n as f64;
    let se = (before * (1.0 - before) / n as f64).sqrt();
    assert!((after - before).abs() < 3.0 * se, "{before} vs {after}");
}
