use iamp_core::markov::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fine RK4 integration of the saturating point-mass model.
fn rk4(s: f64, v: f64, a: f64, v_max: f64, t: f64) -> (f64, f64) {
    let n = 100_000;
    let h = t / n as f64;
    let acc = |v: f64| {
        if (v <= 0.0 && a <= 0.0) || (v >= v_max && a >= 0.0) {
            0.0
        } else {
            a
        }
    };
    let (mut s, mut v) = (s, v);
    for _ in 0..n {
        let (k1s, k1v) = (v, acc(v));
        let (k2s, k2v) = (v + 0.5 * h * k1v, acc(v + 0.5 * h * k1v));
        let (k3s, k3v) = (v + 0.5 * h * k2v, acc(v + 0.5 * h * k2v));
        let (k4s, k4v) = (v + h * k3v, acc(v + h * k3v));
        s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
        v = (v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)).clamp(0.0, v_max);
    }
    (s, v)
}

#[test]
fn braking_to_standstill_matches_rk4() {
    let d = Discretization::default();
    let (s, v) = closed_form_step(0.0, 1.0, -1.0, &d);
    assert!((s - 1.0 / 6.0).abs() < 1e-12);
    assert_eq!(v, 0.0);
    let (so, vo) = rk4(0.0, 1.0, -3.0, d.v_max(), d.tau);
    assert!((s - so).abs() < 1e-6 && (v - vo).abs() < 1e-6);
}

#[test]
fn random_steps_match_rk4() {
    let d = Discretization::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let v = rng.random_range(0.0..d.v_max());
        let u = rng.random_range(-1.0..1.0);
        let (s, v1) = closed_form_step(0.0, v, u, &d);
        let (so, vo) = rk4(0.0, v, d.accel(u), d.v_max(), d.tau);
        assert!((s - so).abs() < 1e-6 && (v1 - vo).abs() < 1e-6, "v={v} u={u}");
    }
}

/// Landing-cell histogram of uniform in-cell samples, integrated with small
/// explicit sub-steps.
fn mc_column(d: &Discretization, j: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (s_i, v_i, u_i) = d.split(j);
    let (u_lo, u_hi) = d.u_bounds(u_i);
    let mut col = vec![0.0; d.n_states()];
    let sub = 40;
    let h = d.tau / sub as f64;
    for _ in 0..n {
        let mut s = (s_i as f64 + rng.random::<f64>()) * d.ds;
        let mut v = (v_i as f64 + rng.random::<f64>()) * d.dv;
        let u = u_lo + (u_hi - u_lo) * rng.random::<f64>();
        let a = if u < 0.0 { 3.0 * u } else { 2.0 * u };
        for _ in 0..sub {
            let v_new = (v + a * h).clamp(0.0, d.v_max());
            // exact area under the clamped speed ramp
            let t_lin = if a != 0.0 { ((v_new - v) / a).abs() } else { h };
            s += 0.5 * (v + v_new) * t_lin + v_new * (h - t_lin);
            v = v_new;
        }
        let si = ((s / d.ds).floor().max(0.0) as usize).min(d.s_cells - 1);
        let vi = ((v / d.dv).floor().max(0.0) as usize).min(d.v_cells - 1);
        col[(si * d.v_cells + vi) * d.u_cells + u_i] += 1.0 / n as f64;
    }
    col
}

#[test]
fn stratified_columns_match_monte_carlo() {
    let d = Discretization {
        s_cells: 12,
        v_cells: 15,
        ..Default::default()
    };
    let m = compute_transition_matrices(&d, 100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let j = rng.random_range(0..d.n_states());
        let mc = mc_column(&d, j, 100_000, &mut rng);
        let mut dense = vec![0.0; d.n_states()];
        m.step.column(j).for_each(|(i, v)| dense[i] = v);
        let tv: f64 = 0.5 * dense.iter().zip(&mc).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv <= 0.05, "column {j}: tv {tv}");
    }
}

#[test]
fn identity_propagation_keeps_distribution() {
    let d = Discretization {
        s_cells: 3,
        v_cells: 2,
        u_cells: 2,
        ..Default::default()
    };
    let n = d.n_states();
    let m = TransitionMatrices {
        disc: d,
        samples_per_cell: 1,
        step: CscMatrix::identity(n),
        interval: CscMatrix::identity(n),
    };
    let p = StateDistribution {
        p: (0..n).map(|i| (i + 1) as f64 / (n * (n + 1) / 2) as f64).collect(),
        k: 0,
    };
    let (next, interval) = propagate(&p, &InputTransition::identity(2), &m).unwrap();
    assert_eq!(next.p, p.p);
    assert_eq!(interval, p.p);
    assert_eq!(next.k, 1);
}

#[test]
fn two_steps_equal_squared_matrix() {
    let d = Discretization {
        s_cells: 3,
        v_cells: 1,
        u_cells: 1,
        ..Default::default()
    };
    // column-stochastic 3x3
    let a = [[0.5, 0.2, 0.0], [0.5, 0.3, 0.1], [0.0, 0.5, 0.9]];
    let cols: Vec<Vec<(usize, f64)>> = (0..3)
        .map(|j| (0..3).filter(|&i| a[i][j] != 0.0).map(|i| (i, a[i][j])).collect())
        .collect();
    let step = CscMatrix::from_columns(3, cols).unwrap();
    let m = TransitionMatrices {
        disc: d,
        samples_per_cell: 1,
        step: step.clone(),
        interval: step,
    };
    let mut sq = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            sq[i][j] = (0..3).map(|k| a[i][k] * a[k][j]).sum();
        }
    }
    let p0 = StateDistribution { p: vec![0.2, 0.3, 0.5], k: 0 };
    let g = InputTransition::identity(1);
    let (p1, _) = propagate(&p0, &g, &m).unwrap();
    let (p2, _) = propagate(&p1, &g, &m).unwrap();
    for i in 0..3 {
        let expect: f64 = (0..3).map(|j| sq[i][j] * p0.p[j]).sum();
        assert!((p2.p[i] - expect).abs() < 1e-15);
    }
}

#[test]
fn drift_is_reported() {
    let d = Discretization {
        s_cells: 2,
        v_cells: 1,
        u_cells: 1,
        ..Default::default()
    };
    let step = CscMatrix::from_columns(2, vec![vec![(0, 0.5)], vec![(1, 1.0)]]).unwrap();
    let m = TransitionMatrices {
        disc: d,
        samples_per_cell: 1,
        step: step.clone(),
        interval: step,
    };
    let p = StateDistribution { p: vec![1.0, 0.0], k: 0 };
    let r = propagate(&p, &InputTransition::identity(1), &m);
    assert!(matches!(r, Err(MarkovError::NormalizationDrift { .. })));
}

fn default_matrices() -> TransitionMatrices {
    compute_transition_matrices(&Discretization::default(), 64).unwrap()
}

#[test]
fn full_throttle_matches_closed_form_distance() {
    let m = default_matrices();
    let d = m.disc;
    let psi = InputMixing::tridiagonal(d.u_cells, 0.8);
    let mut masses = vec![0.0; d.u_cells];
    masses[d.u_cells - 1] = 1.0;
    let g = build_gamma_hybrid(&psi, &masses).unwrap();
    let v0 = 5.5;
    let mut p = StateDistribution::unit(&d, 1.0, v0, 2.0);
    for _ in 0..10 {
        p = propagate(&p, &g, &m).unwrap().0;
    }
    // top cell averages 1.6 m/s²
    let a = d.accel_center(d.u_cells - 1);
    let t = 10.0 * d.tau;
    let expect = 1.0 + SaturatedMotion::new(0.0, v0, a, d.v_max()).state_at(t).0;
    assert!((p.mean_s(&d) - expect).abs() < d.ds, "{} vs {expect}", p.mean_s(&d));
}

#[test]
fn zero_input_holds_speed() {
    let m = default_matrices();
    let d = m.disc;
    let psi = InputMixing::tridiagonal(d.u_cells, 0.8);
    let zero = d.u_cell_of_accel(0.0);
    let mut masses = vec![0.0; d.u_cells];
    masses[zero] = 1.0;
    let g = build_gamma_hybrid(&psi, &masses).unwrap();
    let mut p = StateDistribution::unit(&d, 1.0, 10.5, 0.0);
    for _ in 0..10 {
        p = propagate(&p, &g, &m).unwrap().0;
    }
    assert!((p.mean_v(&d) - 10.5).abs() < d.dv);
    assert!((p.mean_s(&d) - 1.0 - 42.0).abs() < d.ds);
}

#[test]
fn stopped_blocker_ahead_suppresses_acceleration() {
    let m = default_matrices();
    let d = m.disc;
    let psi = InputMixing::tridiagonal(d.u_cells, 0.8);
    // vehicle at the centre of cell 0, blocker at rest 10 m ahead
    let center = d.s_center(0) + 10.0;
    let w = ConflictWindow::for_vehicle(center, 4.5);
    let im = InteractionMatrix::build(&d, &w, &d, &w, &InteractionConfig::default()).unwrap();
    let blk = StateDistribution::unit(&d, center, 0.0, 0.0);
    let lambda = interaction_lambda(&im, &blk.p).unwrap();
    let g = build_gamma_baseline(&psi, &lambda).unwrap();
    let zero = d.u_cell_of_accel(0.0);
    for v_i in 5..d.v_cells {
        let block = g.block(v_i);
        for j in 0..d.u_cells {
            let up: f64 = (zero + 1..d.u_cells).map(|i| block[j * d.u_cells + i]).sum();
            assert!(up < 0.05, "v cell {v_i}, column {j}: {up}");
        }
    }
}

#[test]
fn lower_inputs_never_advance_further() {
    let m = compute_transition_matrices(
        &Discretization {
            s_cells: 30,
            ..Default::default()
        },
        27,
    )
    .unwrap();
    let d = m.disc;
    let psi = InputMixing::tridiagonal(d.u_cells, 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let raw: Vec<f64> = (0..d.u_cells).map(|_| rng.random_range(0.05..1.0)).collect();
        let r: f64 = rng.random_range(0.2..0.9);
        // likelihood-ratio shift towards braking
        let low: Vec<f64> = raw.iter().enumerate().map(|(i, x)| x * r.powi(i as i32)).collect();
        let norm = |v: &[f64]| {
            let t: f64 = v.iter().sum();
            v.iter().map(|x| x / t).collect::<Vec<_>>()
        };
        let g_hi = build_gamma_hybrid(&psi, &norm(&raw)).unwrap();
        let g_lo = build_gamma_hybrid(&psi, &norm(&low)).unwrap();
        let mut p: Vec<f64> = (0..d.n_states())
            .map(|i| if d.split(i).0 < 5 { rng.random::<f64>() } else { 0.0 })
            .collect();
        let t: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= t);
        let mut a = StateDistribution { p: p.clone(), k: 0 };
        let mut b = StateDistribution { p, k: 0 };
        for _ in 0..3 {
            a = propagate(&a, &g_hi, &m).unwrap().0;
            b = propagate(&b, &g_lo, &m).unwrap().0;
            assert!(b.mean_s(&d) <= a.mean_s(&d) + 1e-9);
        }
    }
}

#[test]
fn interpolated_start_keeps_the_measured_speed() {
    let d = Discretization::default();
    for v in [0.5, 3.2, 10.0, 13.99, 14.5] {
        let p = StateDistribution::interpolated(&d, 1.0, v, 0.0);
        assert!((p.total() - 1.0).abs() < 1e-12);
        assert!((p.mean_v(&d) - v).abs() < 1e-12, "{v}: {}", p.mean_v(&d));
        assert_eq!(p.s_marginal(&d)[0], p.total());
    }
    // outside the centre range the nearest cell takes everything
    assert_eq!(StateDistribution::interpolated(&d, 1.0, 0.0, 0.0).v_marginal(&d)[0], 1.0);
    assert_eq!(StateDistribution::interpolated(&d, 1.0, 40.0, 0.0).v_marginal(&d)[d.v_cells - 1], 1.0);
}
