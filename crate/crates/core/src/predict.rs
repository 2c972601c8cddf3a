//! One prediction step for a scene: a Markov chain per corridor, coupled
//! through corridor dependencies (baseline) or driven by learned input
//! distributions (hybrid).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accel::AccelDistribution;
use crate::corridor::{Corridor, CorridorId};
use crate::map::{LaneletMap, MapError};
use crate::markov::{
    build_gamma_baseline, build_gamma_hybrid, curve_speed, interaction_lambda, layout_lambda, propagate,
    ConflictWindow, Discretization, InputMixing, InputTransition, InteractionConfig, InteractionMatrix, MarkovError,
    StateDistribution, TransitionMatrices,
};
use crate::relations::CorridorDependency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Hybrid,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("corridor {0} has no acceleration distributions in hybrid mode")]
    MissingAccel(CorridorId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub mode: Mode,
    pub steps: usize,
    /// Diagonal weight of the tridiagonal Ψ.
    pub psi_stay: f64,
    /// Lateral acceleration bounding the curve speed, m/s².
    pub a_lat_max: f64,
    pub interaction: InteractionConfig,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            steps: 10,
            psi_stay: 0.8,
            a_lat_max: 2.0,
            interaction: InteractionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChainInput<'a> {
    pub corridor: &'a Corridor,
    pub v: f64,
    pub a: f64,
    /// Vehicle length, m.
    pub length: f64,
    /// One distribution per step; required in hybrid mode.
    pub accel: Option<&'a [AccelDistribution]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencyWindows {
    pub blocking: CorridorId,
    /// Own window in chain coordinates.
    pub window: ConflictWindow,
    /// Blocking chain's window in its chain coordinates.
    pub blocking_window: ConflictWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainForecast {
    pub corridor: CorridorId,
    /// Corridor arc length of chain position 0.
    pub s_origin: f64,
    /// Distributions at steps 1..=n.
    pub steps: Vec<StateDistribution>,
    /// Occupancy over `[t_k, t_{k+1}]`, k = 0..n.
    pub intervals: Vec<Vec<f64>>,
    pub dependency: Option<DependencyWindows>,
}

impl ChainForecast {
    pub fn s_marginals(&self, disc: &Discretization) -> Vec<Vec<f64>> {
        self.steps.iter().map(|p| p.s_marginal(disc)).collect()
    }
}

/// Chain position 0 sits half a cell behind the vehicle.
pub fn chain_origin(corridor: &Corridor, disc: &Discretization) -> f64 {
    corridor.start_s - 0.5 * disc.ds
}

/// Admissible speed at every s cell: the lanelet speed limit or the curve
/// speed, whichever is lower.
pub fn allowed_speeds(
    map: &LaneletMap,
    corridor: &Corridor,
    s_origin: f64,
    disc: &Discretization,
    a_lat_max: f64,
) -> Result<Vec<f64>, MapError> {
    (0..disc.s_cells)
        .map(|i| {
            let s = (s_origin + disc.s_center(i)).clamp(0.0, corridor.length);
            let limit = map.lanelet(corridor.lanelet_at(s))?.speed_limit;
            Ok(limit.min(curve_speed(corridor.curvature_at(s), a_lat_max)))
        })
        .collect()
}

fn order(chains: &[ChainInput<'_>], blocking_of: &BTreeMap<CorridorId, CorridorId>) -> Vec<usize> {
    let index: BTreeMap<CorridorId, usize> = chains.iter().enumerate().map(|(i, c)| (c.corridor.id, i)).collect();
    let mut out = Vec::with_capacity(chains.len());
    let mut placed = alloc::vec![false; chains.len()];
    for i in 0..chains.len() {
        let mut chain = Vec::new();
        let mut cur = Some(i);
        while let Some(k) = cur {
            if placed[k] || chain.contains(&k) {
                break;
            }
            chain.push(k);
            cur = blocking_of.get(&chains[k].corridor.id).and_then(|b| index.get(b)).copied();
        }
        for k in chain.into_iter().rev() {
            if !placed[k] {
                placed[k] = true;
                out.push(k);
            }
        }
    }
    out
}

struct Coupling {
    blocking: usize,
    matrix: InteractionMatrix,
    windows: DependencyWindows,
}

/// Propagates every chain over `cfg.steps` steps. In baseline mode blocking
/// chains are advanced first so their next distribution can gate the
/// inputs of their dependents.
pub fn predict_chains(
    map: &LaneletMap,
    matrices: &TransitionMatrices,
    chains: &[ChainInput<'_>],
    deps: &[CorridorDependency],
    cfg: &PredictionConfig,
) -> Result<Vec<ChainForecast>, PredictError> {
    let disc = &matrices.disc;
    let psi = InputMixing::tridiagonal(disc.u_cells, cfg.psi_stay);
    let origins: Vec<f64> = chains.iter().map(|c| chain_origin(c.corridor, disc)).collect();
    let index: BTreeMap<CorridorId, usize> = chains.iter().enumerate().map(|(i, c)| (c.corridor.id, i)).collect();

    let mut couplings: Vec<Option<Coupling>> = (0..chains.len()).map(|_| None).collect();
    let mut base_lambda: Vec<Option<Vec<f64>>> = alloc::vec![None; chains.len()];
    let mut static_gamma: Vec<Option<InputTransition>> = alloc::vec![None; chains.len()];
    let mut blocking_of = BTreeMap::new();

    match cfg.mode {
        Mode::Baseline => {
            for (i, c) in chains.iter().enumerate() {
                let allowed = allowed_speeds(map, c.corridor, origins[i], disc, cfg.a_lat_max)?;
                base_lambda[i] = Some(layout_lambda(disc, &allowed)?);
            }
            for d in deps {
                let (Some(&i), Some(&j)) = (index.get(&d.dependent), index.get(&d.blocking)) else {
                    continue;
                };
                let window = ConflictWindow::for_vehicle(d.conflict_s_dependent - origins[i], chains[i].length);
                let blocking_window = ConflictWindow::for_vehicle(d.conflict_s_blocking - origins[j], chains[j].length);
                let matrix = InteractionMatrix::build(disc, &window, disc, &blocking_window, &cfg.interaction)?;
                blocking_of.insert(d.dependent, d.blocking);
                couplings[i] = Some(Coupling {
                    blocking: j,
                    matrix,
                    windows: DependencyWindows {
                        blocking: d.blocking,
                        window,
                        blocking_window,
                    },
                });
            }
            for i in 0..chains.len() {
                if couplings[i].is_none() {
                    let lambda = base_lambda[i].as_ref().expect("set above");
                    static_gamma[i] = Some(build_gamma_baseline(&psi, lambda)?);
                }
            }
        }
        Mode::Hybrid => {
            for c in chains {
                if c.accel.is_none_or(|a| a.len() < cfg.steps) {
                    return Err(PredictError::MissingAccel(c.corridor.id));
                }
            }
        }
    }

    let mut current: Vec<StateDistribution> = chains
        .iter()
        .map(|c| StateDistribution::interpolated(disc, 0.5 * disc.ds, c.v, c.a))
        .collect();
    let mut out: Vec<ChainForecast> = chains
        .iter()
        .enumerate()
        .map(|(i, c)| ChainForecast {
            corridor: c.corridor.id,
            s_origin: origins[i],
            steps: Vec::with_capacity(cfg.steps),
            intervals: Vec::with_capacity(cfg.steps),
            dependency: couplings[i].as_ref().map(|c| c.windows),
        })
        .collect();
    let seq = order(chains, &blocking_of);

    for k in 0..cfg.steps {
        for &i in &seq {
            let gamma_k;
            let gamma = match cfg.mode {
                Mode::Hybrid => {
                    let dist = &chains[i].accel.expect("checked above")[k];
                    gamma_k = build_gamma_hybrid(&psi, &dist.masses)?;
                    &gamma_k
                }
                Mode::Baseline => match &couplings[i] {
                    None => static_gamma[i].as_ref().expect("set above"),
                    Some(cp) => {
                        // blocking chains come first in `seq`
                        let p_next = &out[cp.blocking].steps[k].p;
                        let mut lambda = interaction_lambda(&cp.matrix, p_next)?;
                        let base = base_lambda[i].as_ref().expect("set above");
                        lambda.iter_mut().zip(base).for_each(|(l, b)| *l *= b);
                        gamma_k = build_gamma_baseline(&psi, &lambda)?;
                        &gamma_k
                    }
                },
            };
            let (next, interval) = propagate(&current[i], gamma, matrices)?;
            out[i].intervals.push(interval);
            out[i].steps.push(next.clone());
            current[i] = next;
        }
    }
    Ok(out)
}
