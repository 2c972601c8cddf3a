//! Motion grids and displacement metrics.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)] // used without std
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corridor::{Corridor, CorridorId, VehicleId};
use crate::geometry::Point2;
use crate::markov::Discretization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("corridor probabilities sum to {total}, expected 1")]
    ProbabilityNormalization { total: f64 },
    #[error("distribution has no mass")]
    ZeroMass,
    #[error("track lengths differ: {predicted} predicted vs {truth} ground truth")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("no corridors to choose from")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Cell edge, m.
    pub resolution: f64,
    /// Lateral extent of the triangular kernel, m.
    pub half_width: f64,
    pub lateral_samples: usize,
    /// Sub-samples along each s cell.
    pub longitudinal_samples: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            resolution: 0.5,
            half_width: 1.75,
            lateral_samples: 7,
            longitudinal_samples: 4,
        }
    }
}

/// Prediction of one corridor: its probability and the s-marginal of every
/// step, with s measured from `s_origin` along the corridor.
#[derive(Debug, Clone, Copy)]
pub struct CorridorPrediction<'a> {
    pub corridor: &'a Corridor,
    pub prob: f64,
    pub s_origin: f64,
    pub s_marginals: &'a [Vec<f64>],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionGrid {
    pub vehicle_id: VehicleId,
    pub step: usize,
    pub resolution: f64,
    /// Mass per `(floor(x / res), floor(y / res))` cell.
    pub cells: BTreeMap<(i64, i64), f64>,
    /// Mass contributed by each corridor.
    pub provenance: BTreeMap<CorridorId, f64>,
}

impl MotionGrid {
    pub fn total(&self) -> f64 {
        self.cells.values().sum()
    }

    pub fn cell_center(&self, key: (i64, i64)) -> Point2 {
        Point2::new((key.0 as f64 + 0.5) * self.resolution, (key.1 as f64 + 0.5) * self.resolution)
    }
}

/// Lateral offsets and triangular weights summing to one.
fn lateral_kernel(cfg: &GridConfig) -> Vec<(f64, f64)> {
    let n = cfg.lateral_samples.max(1);
    if n == 1 || cfg.half_width <= 0.0 {
        return alloc::vec![(0.0, 1.0)];
    }
    let step = 2.0 * cfg.half_width / n as f64;
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let d = -cfg.half_width + (j as f64 + 0.5) * step;
            (d, 1.0 - d.abs() / cfg.half_width)
        })
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(d, w)| (d, w / total)).collect()
}

/// Paints every corridor's step distributions onto a shared grid, weighted
/// by the corridor probabilities.
pub fn render_grid(
    vehicle: VehicleId,
    predictions: &[CorridorPrediction<'_>],
    disc: &Discretization,
    cfg: &GridConfig,
) -> Result<Vec<MotionGrid>, FusionError> {
    let total: f64 = predictions.iter().map(|p| p.prob).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(FusionError::ProbabilityNormalization { total });
    }
    let n_steps = predictions.iter().map(|p| p.s_marginals.len()).max().unwrap_or(0);
    let kernel = lateral_kernel(cfg);
    let n_long = cfg.longitudinal_samples.max(1);
    let mut grids: Vec<MotionGrid> = (0..n_steps)
        .map(|k| MotionGrid {
            vehicle_id: vehicle,
            step: k,
            resolution: cfg.resolution,
            cells: BTreeMap::new(),
            provenance: BTreeMap::new(),
        })
        .collect();
    for pred in predictions {
        let line = &pred.corridor.centerline;
        for (k, marginal) in pred.s_marginals.iter().enumerate() {
            let grid = &mut grids[k];
            for (s_i, &m) in marginal.iter().enumerate() {
                if m <= 0.0 {
                    continue;
                }
                let w_cell = m * pred.prob / n_long as f64;
                for q in 0..n_long {
                    let s = pred.s_origin + (s_i as f64 + (q as f64 + 0.5) / n_long as f64) * disc.ds;
                    let c = line.point_at(s);
                    let normal = line.tangent_at(s).perp();
                    for &(d, w) in &kernel {
                        let p = c + normal * d;
                        let key = ((p.x / cfg.resolution).floor() as i64, (p.y / cfg.resolution).floor() as i64);
                        *grid.cells.entry(key).or_default() += w_cell * w;
                    }
                }
                *grid.provenance.entry(pred.corridor.id).or_default() += m * pred.prob;
            }
        }
    }
    Ok(grids)
}

/// Mass-weighted mean of the centerline points at the s-cell centres.
pub fn expected_position(
    s_marginal: &[f64],
    corridor: &Corridor,
    s_origin: f64,
    disc: &Discretization,
) -> Result<Point2, FusionError> {
    let total: f64 = s_marginal.iter().sum();
    if !(total > 0.0) {
        return Err(FusionError::ZeroMass);
    }
    let mut acc = Point2::new(0.0, 0.0);
    for (i, &m) in s_marginal.iter().enumerate() {
        if m > 0.0 {
            acc = acc + corridor.point_at(s_origin + disc.s_center(i)) * (m / total);
        }
    }
    Ok(acc)
}

/// Average and final L2 error of one predicted track.
pub fn ade_fde(predicted: &[Point2], truth: &[Point2]) -> Result<(f64, f64), FusionError> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(FusionError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    let errs: Vec<f64> = predicted.iter().zip(truth).map(|(p, t)| p.distance(*t)).collect();
    let ade = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok((ade, *errs.last().expect("non-empty")))
}

/// `(mADE, mFDE)`, each minimized over corridors on its own.
pub fn min_over_corridors(per_corridor: &[(f64, f64)]) -> Result<(f64, f64), FusionError> {
    if per_corridor.is_empty() {
        return Err(FusionError::Empty);
    }
    Ok(per_corridor
        .iter()
        .fold((f64::INFINITY, f64::INFINITY), |(a, f), &(ak, fk)| (a.min(ak), f.min(fk))))
}

/// `(ADE, FDE)` of the corridor with the smallest ADE.
pub fn min_over_corridors_joint(per_corridor: &[(f64, f64)]) -> Result<(f64, f64), FusionError> {
    per_corridor
        .iter()
        .copied()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(FusionError::Empty)
}
