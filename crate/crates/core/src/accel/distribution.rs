use alloc::vec::Vec;

#[allow(unused_imports)] // used without std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{AccelProfile, PROFILE_LEN};
use crate::markov::Discretization;

pub const PREDICTION_STEPS: usize = 10;
pub const SIGMA_FLOOR: f64 = 0.25;

/// Normal acceleration distribution over one prediction step and its mass
/// on each input cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelDistribution {
    pub mean: f64,
    pub std: f64,
    pub masses: Vec<f64>,
}

/// `P(lo < X < hi)` for a standard normal, accurate far into both tails.
pub fn normal_mass(lo: f64, hi: f64) -> f64 {
    let r = core::f64::consts::FRAC_1_SQRT_2;
    if lo >= 0.0 {
        0.5 * (libm::erfc(lo * r) - libm::erfc(hi * r))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-hi * r) - libm::erfc(-lo * r))
    } else {
        1.0 - 0.5 * (libm::erfc(-lo * r) + libm::erfc(hi * r))
    }
}

/// Cell masses of `N(mean, std²)` truncated to the input range.
pub fn cell_masses(mean: f64, std: f64, disc: &Discretization) -> Vec<f64> {
    let mut m: Vec<f64> = (0..disc.u_cells)
        .map(|i| {
            let (lo, hi) = disc.accel_bounds(i);
            normal_mass((lo - mean) / std, (hi - mean) / std)
        })
        .collect();
    let total: f64 = m.iter().sum();
    if total > 0.0 {
        m.iter_mut().for_each(|x| *x /= total);
    } else {
        // mean far outside the range: all mass on the nearer end
        let i = if mean < 0.0 { 0 } else { disc.u_cells - 1 };
        m[i] = 1.0;
    }
    m
}

/// Splits the 40-sample profile into ten groups of four and fits a normal
/// to each.
pub fn profile_to_distributions(profile: &AccelProfile, disc: &Discretization) -> Vec<AccelDistribution> {
    let per = PROFILE_LEN / PREDICTION_STEPS;
    profile
        .0
        .chunks(per)
        .map(|g| {
            let mean = g.iter().sum::<f64>() / per as f64;
            let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / per as f64;
            let std = var.sqrt().max(SIGMA_FLOOR);
            AccelDistribution {
                mean,
                std,
                masses: cell_masses(mean, std, disc),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_mass_symmetric_and_complete() {
        assert!((normal_mass(-1.0, 1.0) - 0.682_689_492_137_086).abs() < 1e-12);
        assert!((normal_mass(-40.0, 40.0) - 1.0).abs() < 1e-15);
        assert!(normal_mass(15.0, 16.0) > 0.0);
        assert!((normal_mass(1.0, 2.0) - normal_mass(-2.0, -1.0)).abs() < 1e-16);
    }

    #[test]
    fn ramp_gives_increasing_means() {
        let d = Discretization::default();
        let p = AccelProfile(core::array::from_fn(|i| -2.0 + 3.0 * i as f64 / 39.0));
        let dist = profile_to_distributions(&p, &d);
        assert_eq!(dist.len(), 10);
        assert!(dist.windows(2).all(|w| w[1].mean > w[0].mean));
    }
}
