use iamp_core::accel::*;
use iamp_core::markov::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Synthetic {
    train: Vec<TrainingSample>,
    test: Vec<TrainingSample>,
}

/// `y = W* x + N(0, 0.01)` with dense random `W*`.
fn synthetic(seed: u64, n_train: usize, n_test: usize) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_dist = Normal::new(0.0, 1.0 / (FEATURE_LEN as f64).sqrt()).unwrap();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let w: Vec<f64> = (0..FEATURE_LEN * PROFILE_LEN).map(|_| w_dist.sample(&mut rng)).collect();
    let mut draw = |n: usize| -> Vec<TrainingSample> {
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..FEATURE_LEN).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = w
                    .chunks(FEATURE_LEN)
                    .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng))
                    .collect();
                TrainingSample { x, y }
            })
            .collect()
    };
    Synthetic {
        train: draw(n_train),
        test: draw(n_test),
    }
}

fn mse(model: &ARModel, set: &[TrainingSample]) -> f64 {
    let mut total = 0.0;
    for s in set {
        let y = model.predict_raw(&s.x).unwrap();
        total += y.iter().zip(&s.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    total / (set.len() * PROFILE_LEN) as f64
}

#[test]
fn recovers_linear_process() {
    let data = synthetic(1, 10_000, 1000);
    let cfg = TrainConfig {
        epochs: 50,
        seed: 5,
        ..Default::default()
    };
    let model = train(&data.train, &cfg).unwrap();
    let err = mse(&model, &data.test);
    eprintln!("held-out mse {err:.5}");
    assert!(err <= 0.012, "held-out mse {err}");

    let losses = &model.meta.as_ref().unwrap().losses;
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{losses:?}");
    }
    let again = train(&data.train, &cfg).unwrap();
    assert_eq!(model.w, again.w);
    assert_eq!(model.b, again.b);
}

#[test]
fn zero_targets_give_zero_profile() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let set: Vec<TrainingSample> = (0..500)
        .map(|_| TrainingSample {
            x: (0..FEATURE_LEN).map(|_| rng.random_range(0.0..50.0)).collect(),
            y: vec![0.0; PROFILE_LEN],
        })
        .collect();
    let model = train(&set, &TrainConfig::default()).unwrap();
    for s in set.iter().take(50) {
        let p = infer(&model, &FeatureVector(s.x.clone())).unwrap();
        assert!(p.0.iter().all(|a| a.abs() < 1e-2), "{:?}", p.0);
    }
}

#[test]
fn inference_is_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut m = ARModel::zeros(FEATURE_LEN, PROFILE_LEN);
    m.w.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    m.b.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
    m.feat_max.iter_mut().for_each(|x| *x = rng.random_range(2.0..5.0));
    let x1: Vec<f64> = m.feat_max.iter().map(|&hi| rng.random_range(0.0..hi)).collect();
    let x2: Vec<f64> = m.feat_max.iter().map(|&hi| rng.random_range(0.0..hi)).collect();
    let alpha = 0.3;
    let mix: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
    let (y1, y2, ym) = (m.predict_raw(&x1).unwrap(), m.predict_raw(&x2).unwrap(), m.predict_raw(&mix).unwrap());
    for i in 0..PROFILE_LEN {
        assert!((ym[i] - (alpha * y1[i] + (1.0 - alpha) * y2[i])).abs() < 1e-9);
    }
}

#[test]
fn inputs_outside_the_training_range_saturate() {
    let mut m = ARModel::zeros(FEATURE_LEN, PROFILE_LEN);
    m.w.iter_mut().for_each(|w| *w = 1.0);
    let at_edge = m.predict_raw(&vec![1.0; FEATURE_LEN]).unwrap();
    let beyond = m.predict_raw(&vec![1e6; FEATURE_LEN]).unwrap();
    let below = m.predict_raw(&vec![-7.0; FEATURE_LEN]).unwrap();
    assert_eq!(at_edge, beyond);
    assert!(below.iter().all(|y| *y == 0.0));
}

#[test]
fn near_constant_feature_does_not_blow_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let set: Vec<TrainingSample> = (0..200)
        .map(|i| TrainingSample {
            x: (0..FEATURE_LEN)
                .map(|k| if k == 7 { 1e-14 * (i % 3) as f64 } else { rng.random_range(0.0..1.0) })
                .collect(),
            y: vec![0.5; PROFILE_LEN],
        })
        .collect();
    let model = train(&set, &TrainConfig::default()).unwrap();
    assert!(model.feat_max[7] - model.feat_min[7] >= 1.0);
    let mut x = set[0].x.clone();
    x[7] = 0.8;
    let p = infer(&model, &FeatureVector(x)).unwrap();
    assert!(p.0.iter().all(|a| (a - 0.5).abs() < 0.5), "{:?}", p.0);
}

/// Trapezoid integration of the normal density over a cell.
fn density_mass(lo: f64, hi: f64, mu: f64, sigma: f64) -> f64 {
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    (0..n).map(|i| 0.5 * h * (f(lo + i as f64 * h) + f(lo + (i + 1) as f64 * h))).sum()
}

#[test]
fn zero_profile_concentrates_on_zero_cell() {
    let d = Discretization::default();
    let dist = profile_to_distributions(&AccelProfile([0.0; PROFILE_LEN]), &d);
    assert_eq!(dist.len(), 10);
    let zero = d.u_cell_of_accel(0.0);
    let total_oracle: f64 = density_mass(ACCEL_MIN, ACCEL_MAX, 0.0, SIGMA_FLOOR);
    for k in &dist {
        assert!((k.masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(k.std, SIGMA_FLOOR);
        assert!(k.masses[zero] > 0.9);
        for (i, m) in k.masses.iter().enumerate() {
            let (lo, hi) = d.accel_bounds(i);
            assert!((m - density_mass(lo, hi, 0.0, SIGMA_FLOOR) / total_oracle).abs() < 1e-8);
        }
    }
    assert_eq!(d.accel_bounds(0).0, ACCEL_MIN);
    assert_eq!(d.accel_bounds(d.u_cells - 1).1, ACCEL_MAX);
}

#[test]
fn shifted_profile_shifts_means() {
    let d = Discretization::default();
    let base: [f64; PROFILE_LEN] = std::array::from_fn(|i| (i as f64 * 0.3).sin());
    let a = profile_to_distributions(&AccelProfile(base), &d);
    let b = profile_to_distributions(&AccelProfile(base.map(|x| x - 0.7)), &d);
    for (x, y) in a.iter().zip(&b) {
        assert!((x.mean - 0.7 - y.mean).abs() < 1e-12);
        assert!((x.std - y.std).abs() < 1e-12);
    }
}

#[test]
fn braking_profile_decelerates_chain() {
    let m = compute_transition_matrices(&Discretization::default(), 64).unwrap();
    let d = m.disc;
    let psi = InputMixing::tridiagonal(d.u_cells, 0.8);
    // braking then easing off
    let profile = AccelProfile(std::array::from_fn(|i| {
        let t = i as f64 * PROFILE_DT;
        if t < 1.5 { -2.0 * t / 1.5 } else { -2.0 + 2.0 * (t - 1.5) / 2.5 }
    }));
    let dist = profile_to_distributions(&profile, &d);
    let mut p = StateDistribution::unit(&d, 1.0, 10.5, 0.0);
    let mut mean_a = 0.0;
    for k in 0..5 {
        let g = build_gamma_hybrid(&psi, &dist[k].masses).unwrap();
        p = propagate(&p, &g, &m).unwrap().0;
        mean_a += p.mean_accel(&d);
    }
    assert!(mean_a / 5.0 < 0.0, "{}", mean_a / 5.0);
}
