//! Prediction runs over recorded or generated scenes: intention tracking,
//! chain propagation every 0.4 s in either mode, scoring against the
//! recorded future and the report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use iamp_core::accel::{infer, extract_features, profile_to_distributions, ARModel, AccelDistribution, AccelProfile, HistorySample};
use iamp_core::corridor::{Corridor, CorridorId, VehicleId};
use iamp_core::fusion::{
    ade_fde, expected_position, min_over_corridors, min_over_corridors_joint, render_grid, CorridorPrediction,
    GridConfig,
};
use iamp_core::geometry::Point2;
use iamp_core::intention::{FilterConfig, IntentionFilter, IntentionPosterior, RouteContext, StopContext};
use iamp_core::map::{LaneletId, LaneletMap};
use iamp_core::markov::{
    compute_transition_matrices, mass_before, window_mass, ConflictWindow, Discretization, TransitionMatrices,
};
use iamp_core::predict::{predict_chains, ChainForecast, ChainInput, Mode, PredictionConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::generate_scenario;
use crate::scene::{measurement, states_at, Scene, SceneConfig};
use crate::store::{load_map, load_matrices, load_model, write_json};
use crate::tracks::{ingest_tracks, Track, TrackDataset, GRID_DT};

/// Frames between evaluation ticks (0.4 s at 0.1 s).
const FRAMES_PER_TICK: i64 = 4;
/// History kept per vehicle for feature extraction, s.
const HISTORY_KEEP: f64 = 4.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub repeats: usize,
    /// Prediction horizon, s. Rounded to whole chain steps.
    pub horizon: f64,
    /// Track history a vehicle needs before it is scored, s.
    pub min_history: f64,
    /// Take mADE and mFDE from the same corridor instead of minimizing each.
    pub joint_min: bool,
    /// Bound on the yielding chain's window mass, recorded for reports.
    pub yield_mass_threshold: f64,
    /// Time of the grid snapshot; `None` picks the tick scoring the most vehicles.
    pub snapshot_time: Option<f64>,
    pub filter: FilterConfig,
    pub scene: SceneConfig,
    pub prediction: PredictionConfig,
    pub grid: GridConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            seed: 0,
            repeats: 3,
            horizon: 4.0,
            min_history: 4.0,
            joint_min: false,
            yield_mass_threshold: 0.1,
            snapshot_time: None,
            filter: FilterConfig::default(),
            scene: SceneConfig::default(),
            prediction: PredictionConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|r| self.seed.wrapping_add(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Input {
    /// Track CSV with its sidecar, read against a map file.
    Tracks { map: PathBuf, tracks: PathBuf },
    /// Generated scene; the run seed also seeds the generator.
    Scenario(String),
}

/// Everything one `predict` invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub input: Input,
    /// Precomputed matrices; computed from `disc` when absent.
    pub matrices: Option<PathBuf>,
    /// Overrides the discretization; must agree with `matrices` if both are given.
    pub disc: Option<Discretization>,
    pub samples_per_cell: usize,
    /// Required in hybrid mode.
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub run: RunConfig,
}

impl ScenarioConfig {
    pub fn new(input: Input, run: RunConfig) -> Self {
        Self {
            input,
            matrices: None,
            disc: None,
            samples_per_cell: 100,
            model: None,
            output: None,
            svg: None,
            run,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.mode == Mode::Hybrid && self.model.is_none() {
            return Err(Error::Config("hybrid mode requires a model path".into()));
        }
        if self.run.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !(self.run.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mode: Mode,
    pub repeat: usize,
    pub seed: u64,
    pub recording_id: i64,
    pub t: f64,
    pub vehicle_id: i64,
    pub n_corridors: usize,
    pub made: f64,
    pub mfde: f64,
}

/// Worst window mass of a dependent chain while its blocker still holds
/// the conflict, at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldCheck {
    pub repeat: usize,
    pub recording_id: i64,
    pub t: f64,
    pub dependent: CorridorId,
    pub blocking: CorridorId,
    pub regulated: bool,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub recording_id: i64,
    pub t: f64,
    pub vehicle_id: i64,
    pub corridor: CorridorId,
    pub prob: f64,
    /// Stop probability at the corridor's next intersection.
    pub p_stop: Option<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub vehicle_id: i64,
    pub step: usize,
    pub cell_x: i64,
    pub cell_y: i64,
    pub mass: f64,
}

/// Grids and ground truth at one tick, for dumps and drawings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Snapshot {
    pub recording_id: i64,
    pub t: f64,
    pub resolution: f64,
    pub grid: Vec<GridRow>,
    /// Current position and recorded future of every vehicle.
    pub truth: Vec<(i64, Point2, Vec<Point2>)>,
    pub n_scored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub rows: Vec<MetricRow>,
    pub mean_made: f64,
    pub mean_mfde: f64,
    /// Wall-clock of every prediction step, s.
    pub step_times: Vec<f64>,
    pub mean_step_time: f64,
    pub yield_checks: Vec<YieldCheck>,
    /// First repeat only.
    pub posteriors: Vec<PosteriorRow>,
    pub snapshot: Option<Snapshot>,
    pub config: RunConfig,
}

impl RunReport {
    pub fn max_yield_mass(&self) -> Option<f64> {
        self.yield_checks.iter().map(|c| c.mass).reduce(f64::max)
    }
}

/// Running sum in insertion order, so a reader summing the CSV column gets
/// the same bits.
pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Loads inputs, runs every repeat and writes the report directory if one
/// is configured.
pub fn run_prediction(config: &ScenarioConfig) -> Result<RunReport> {
    let mut reports = run_modes(config, &[config.run.mode])?;
    Ok(reports.remove(0))
}

/// Baseline and hybrid on the same inputs and seeds; the summary then
/// carries the step-time ratio.
pub fn run_comparison(config: &ScenarioConfig) -> Result<Vec<RunReport>> {
    run_modes(config, &[Mode::Baseline, Mode::Hybrid])
}

fn run_modes(config: &ScenarioConfig, modes: &[Mode]) -> Result<Vec<RunReport>> {
    for &mode in modes {
        let mut c = config.clone();
        c.run.mode = mode;
        c.validate()?;
    }
    let (map, data) = load_input(&config.input, config.run.seed)?;
    let matrices = load_or_compute_matrices(config)?;
    let model = config.model.as_deref().map(load_model).transpose()?;
    let reports = modes
        .iter()
        .map(|&mode| {
            let cfg = RunConfig {
                mode,
                ..config.run.clone()
            };
            run(&map, &data, &matrices, model.as_ref(), &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &config.output {
        write_report(dir, &reports)?;
    }
    if let (Some(svg), Some(snap)) = (&config.svg, reports.last().and_then(|r| r.snapshot.as_ref())) {
        crate::svg::write_svg(svg, &map, snap)?;
    }
    Ok(reports)
}

pub fn load_input(input: &Input, seed: u64) -> Result<(LaneletMap, TrackDataset)> {
    match input {
        Input::Tracks { map, tracks } => Ok((load_map(map)?, ingest_tracks(tracks)?)),
        Input::Scenario(name) => {
            let s = generate_scenario(name, seed)?;
            Ok((s.map, s.tracks))
        }
    }
}

pub fn load_or_compute_matrices(config: &ScenarioConfig) -> Result<TransitionMatrices> {
    match (&config.matrices, config.disc) {
        (Some(path), disc) => {
            let m = load_matrices(path)?;
            if disc.is_some_and(|d| d != m.disc) {
                return Err(Error::Config(format!(
                    "{} was computed for a different discretization",
                    path.display()
                )));
            }
            Ok(m)
        }
        (None, disc) => Ok(compute_transition_matrices(&disc.unwrap_or_default(), config.samples_per_cell)?),
    }
}

/// Per-vehicle tracking state carried between ticks.
struct Tracked {
    filter: IntentionFilter,
    corridors: Vec<Corridor>,
    /// Speed limit and stop context per corridor, aligned with `corridors`.
    routes: Vec<(f64, Option<StopContext>)>,
    /// Past samples on every corridor the vehicle had, with its lanelets.
    history: Vec<(Vec<LaneletId>, HistorySample)>,
}

/// One past sample per time before `t`, taken on the corridor that agrees
/// longest with `route`, so the history looks as if the vehicle had been
/// heading down `route` all along.
fn history_along(past: &[(Vec<LaneletId>, HistorySample)], route: &[LaneletId], t: f64) -> Vec<HistorySample> {
    let agreement = |seq: &[LaneletId]| {
        let Some(i) = seq.iter().position(|l| Some(l) == route.first()) else {
            return 0;
        };
        seq[i..].iter().zip(route).take_while(|(a, b)| a == b).count()
    };
    let mut out: Vec<(usize, HistorySample)> = Vec::new();
    for (seq, h) in past.iter().filter(|(_, h)| h.t < t - 1e-9) {
        let score = agreement(seq);
        match out.last_mut() {
            Some(last) if (last.1.t - h.t).abs() < 1e-9 => {
                if score > last.0 {
                    *last = (score, h.clone());
                }
            }
            _ => out.push((score, h.clone())),
        }
    }
    out.into_iter().map(|(_, h)| h).collect()
}

impl Tracked {
    fn contexts(&self) -> Vec<RouteContext<'_>> {
        self.corridors
            .iter()
            .zip(&self.routes)
            .map(|(c, &(speed_limit, stop))| RouteContext {
                corridor: c,
                speed_limit,
                stop,
            })
            .collect()
    }
}

/// Runs every repeat of `cfg` over every recording in `data`.
pub fn run(
    map: &LaneletMap,
    data: &TrackDataset,
    matrices: &TransitionMatrices,
    model: Option<&ARModel>,
    cfg: &RunConfig,
) -> Result<RunReport> {
    if cfg.mode == Mode::Hybrid && model.is_none() {
        return Err(Error::Config("hybrid mode requires a model".into()));
    }
    let steps = (cfg.horizon / matrices.disc.tau).round().max(1.0) as usize;
    let mut out = Output::default();
    for (repeat, &seed) in cfg.seeds().iter().enumerate() {
        for rec in &data.recordings {
            let mut runner = Runner {
                map,
                matrices,
                model,
                cfg,
                steps,
                repeat,
                seed,
                recording_id: rec.id,
                tracks: &rec.tracks,
                out: &mut out,
            };
            runner.run()?;
        }
    }
    let snapshot = out.snapshot.map(|(_, s)| s);
    Ok(RunReport {
        mode: cfg.mode,
        seed: cfg.seed,
        seeds: cfg.seeds(),
        mean_made: mean(out.rows.iter().map(|r| r.made)),
        mean_mfde: mean(out.rows.iter().map(|r| r.mfde)),
        mean_step_time: mean(out.step_times.iter().copied()),
        rows: out.rows,
        step_times: out.step_times,
        yield_checks: out.yield_checks,
        posteriors: out.posteriors,
        snapshot,
        config: cfg.clone(),
    })
}

#[derive(Default)]
struct Output {
    rows: Vec<MetricRow>,
    step_times: Vec<f64>,
    yield_checks: Vec<YieldCheck>,
    posteriors: Vec<PosteriorRow>,
    /// Snapshot with the key it was chosen by.
    snapshot: Option<(f64, Snapshot)>,
}

struct Runner<'a> {
    map: &'a LaneletMap,
    matrices: &'a TransitionMatrices,
    model: Option<&'a ARModel>,
    cfg: &'a RunConfig,
    steps: usize,
    repeat: usize,
    seed: u64,
    recording_id: i64,
    tracks: &'a [Track],
    out: &'a mut Output,
}

impl Runner<'_> {
    fn track(&self, id: VehicleId) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id.0)
    }

    fn run(&mut self) -> Result<()> {
        let Some(t0) = self.tracks.iter().map(Track::t_start).reduce(f64::min) else {
            return Ok(());
        };
        let t1 = self.tracks.iter().map(Track::t_end).fold(f64::NEG_INFINITY, f64::max);
        let tick = FRAMES_PER_TICK;
        let j0 = ((t0 / GRID_DT - 1e-6).ceil() as i64).div_euclid(tick) * tick;
        let j0 = if (j0 as f64) * GRID_DT < t0 - 1e-6 { j0 + tick } else { j0 };
        let j1 = (t1 / GRID_DT + 1e-6).floor() as i64;

        let mut tracked: BTreeMap<VehicleId, Tracked> = BTreeMap::new();
        let mut j = j0;
        while j <= j1 {
            let t = j as f64 * GRID_DT;
            if j > j0 {
                self.advance_filters(&mut tracked, j - tick + 1, j).map_err(|e| e.at(t))?;
            }
            self.tick(&mut tracked, t).map_err(|e| e.at(t))?;
            j += tick;
        }
        Ok(())
    }

    /// Filter predict/update over frames `from..=to` with the contexts of
    /// the last tick.
    fn advance_filters(&self, tracked: &mut BTreeMap<VehicleId, Tracked>, from: i64, to: i64) -> Result<()> {
        let tracks = self.tracks;
        tracked.par_iter_mut().try_for_each(|(id, tr)| -> Result<()> {
            let Some(track) = tracks.iter().find(|t| t.id == id.0) else {
                return Ok(());
            };
            let Tracked {
                filter,
                corridors,
                routes,
                ..
            } = tr;
            let contexts: Vec<RouteContext<'_>> = corridors
                .iter()
                .zip(routes.iter())
                .map(|(c, &(speed_limit, stop))| RouteContext {
                    corridor: c,
                    speed_limit,
                    stop,
                })
                .collect();
            for f in from..=to {
                let Some(s) = track.sample_at(f as f64 * GRID_DT) else {
                    continue;
                };
                filter.predict_step(&contexts, GRID_DT)?;
                filter.update_step(&contexts, &measurement(&s))?;
            }
            Ok(())
        })
    }

    fn tick(&mut self, tracked: &mut BTreeMap<VehicleId, Tracked>, t: f64) -> Result<()> {
        let (states, samples): (Vec<_>, Vec<_>) = states_at(self.tracks, t).into_iter().unzip();
        let scene = Scene::build(self.map, &states, t, &self.cfg.scene);
        tracked.retain(|id, _| scene.vehicle(*id).is_some());
        let min_speed = self.cfg.filter.min_speed;

        let mut posteriors = BTreeMap::new();
        for (st, sample) in states.iter().zip(&samples) {
            if scene.vehicle(st.id).is_none() {
                continue;
            }
            let corridors = scene.corridors_of(st.id).to_vec();
            let routes: Vec<_> = scene
                .route_contexts(self.map, st.id, min_speed)
                .into_iter()
                .map(|c| (c.speed_limit, c.stop))
                .collect();
            let z = measurement(sample);
            let entry = match tracked.remove(&st.id) {
                Some(mut tr) => {
                    tr.filter.rebase(&corridors, &z)?;
                    tr.corridors = corridors;
                    tr.routes = routes;
                    tr
                }
                None => Tracked {
                    filter: IntentionFilter::init(st.id, &corridors, &z, self.cfg.filter, self.seed)?,
                    corridors,
                    routes,
                    history: Vec::new(),
                },
            };
            let tr = tracked.entry(st.id).or_insert(entry);
            let post = tr.filter.posterior(&tr.contexts());
            for c in scene.corridors_of(st.id) {
                if let Some(h) = scene.history_sample(st.id, c, min_speed) {
                    tr.history.push((c.lanelet_seq.clone(), h));
                }
            }
            tr.history.retain(|(_, h)| h.t >= t - HISTORY_KEEP - 1e-9);
            if self.repeat == 0 {
                self.record_posterior(t, &post, tr);
            }
            posteriors.insert(st.id, post);
        }

        let horizon = self.steps as f64 * self.matrices.disc.tau;
        let scored: Vec<VehicleId> = scene
            .vehicles
            .iter()
            .map(|v| v.id)
            .filter(|&id| {
                self.track(id).is_some_and(|tr| {
                    t - tr.t_start() >= self.cfg.min_history - 1e-6 && tr.t_end() - t >= horizon - 1e-6
                })
            })
            .collect();
        if scored.is_empty() {
            return Ok(());
        }

        let started = Instant::now();
        let forecasts = self.predict(&scene, tracked)?;
        self.out.step_times.push(started.elapsed().as_secs_f64());

        self.score(&scene, &forecasts, &scored, t)?;
        self.check_yields(&scene, &forecasts, t);
        self.fuse(&scene, &forecasts, &posteriors, scored.len(), t)?;
        Ok(())
    }

    fn record_posterior(&mut self, t: f64, post: &IntentionPosterior, tr: &Tracked) {
        for (c, &(_, stop)) in tr.corridors.iter().zip(&tr.routes) {
            self.out.posteriors.push(PosteriorRow {
                recording_id: self.recording_id,
                t,
                vehicle_id: c.vehicle_id.0,
                corridor: c.id,
                prob: post.corridor_probs.get(&c.id).copied().unwrap_or(0.0),
                p_stop: stop.and_then(|s| post.p_stop.get(&s.intersection).copied()),
                ess: post.effective_sample_size,
            });
        }
    }

    /// The timed prediction stage: input distributions for the mode, then
    /// every chain of every vehicle in the scene.
    fn predict(&self, scene: &Scene, tracked: &BTreeMap<VehicleId, Tracked>) -> Result<Vec<ChainForecast>> {
        let disc = &self.matrices.disc;
        let accel: Vec<Option<Vec<AccelDistribution>>> = match (self.cfg.mode, self.model) {
            (Mode::Hybrid, Some(model)) => scene
                .corridors
                .par_iter()
                .map(|c| {
                    let v = scene.vehicle(c.vehicle_id).expect("corridor owner is in the scene");
                    let profile = tracked
                        .get(&c.vehicle_id)
                        .and_then(|tr| {
                            let mut history = history_along(&tr.history, &c.lanelet_seq, scene.t);
                            history.push(scene.history_sample(v.id, c, self.cfg.filter.min_speed)?);
                            extract_features(&history, scene.t).ok()
                        })
                        .map(|x| infer(model, &x))
                        .transpose()?
                        .unwrap_or_else(|| constant_profile(v.a));
                    Ok(Some(profile_to_distributions(&profile, disc)))
                })
                .collect::<Result<_>>()?,
            _ => vec![None; scene.corridors.len()],
        };
        let chains: Vec<ChainInput<'_>> = scene
            .corridors
            .iter()
            .zip(&accel)
            .map(|(c, a)| {
                let v = scene.vehicle(c.vehicle_id).expect("corridor owner is in the scene");
                ChainInput {
                    corridor: c,
                    v: v.v,
                    a: v.a,
                    length: v.length,
                    accel: a.as_deref(),
                }
            })
            .collect();
        let pcfg = PredictionConfig {
            mode: self.cfg.mode,
            steps: self.steps,
            ..self.cfg.prediction
        };
        Ok(predict_chains(self.map, self.matrices, &chains, &scene.dependencies, &pcfg)?)
    }

    fn score(&mut self, scene: &Scene, forecasts: &[ChainForecast], scored: &[VehicleId], t: f64) -> Result<()> {
        let disc = &self.matrices.disc;
        let tau = disc.tau;
        for &id in scored {
            let track = self.track(id).expect("scored vehicles have tracks");
            let truth: Vec<Point2> = (1..=self.steps)
                .map(|k| track.sample_at(t + tau * k as f64).map(|s| s.position()))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Config(format!("track {} ends before the horizon", id.0)))?;
            let per_corridor = forecasts
                .iter()
                .filter(|f| f.corridor.vehicle == id)
                .map(|f| {
                    let corridor = scene.corridor(f.corridor).expect("forecast corridor is in the scene");
                    let predicted = f
                        .s_marginals(disc)
                        .iter()
                        .map(|m| expected_position(m, corridor, f.s_origin, disc))
                        .collect::<Result<Vec<_>, _>>()?;
                    ade_fde(&predicted, &truth)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (made, mfde) = if self.cfg.joint_min {
                min_over_corridors_joint(&per_corridor)?
            } else {
                min_over_corridors(&per_corridor)?
            };
            self.out.rows.push(MetricRow {
                mode: self.cfg.mode,
                repeat: self.repeat,
                seed: self.seed,
                recording_id: self.recording_id,
                t,
                vehicle_id: id.0,
                n_corridors: per_corridor.len(),
                made,
                mfde,
            });
        }
        Ok(())
    }

    /// For each dependency: the largest interval mass the dependent chain
    /// puts in its conflict window during a step at whose end the blocking
    /// chain most likely has not yet passed its own window.
    fn check_yields(&mut self, scene: &Scene, forecasts: &[ChainForecast], t: f64) {
        let disc = &self.matrices.disc;
        let find = |id: CorridorId| forecasts.iter().find(|f| f.corridor == id);
        for d in &scene.dependencies {
            let (Some(fd), Some(fb)) = (find(d.dependent), find(d.blocking)) else {
                continue;
            };
            let (Some(vd), Some(vb)) = (scene.vehicle(d.dependent.vehicle), scene.vehicle(d.blocking.vehicle)) else {
                continue;
            };
            let window = ConflictWindow::for_vehicle(d.conflict_s_dependent - fd.s_origin, vd.length);
            let blocking_window = ConflictWindow::for_vehicle(d.conflict_s_blocking - fb.s_origin, vb.length);
            let worst = fd
                .intervals
                .iter()
                .zip(&fb.steps)
                .filter(|(_, pb)| mass_before(&pb.p, disc, blocking_window.hi()) > 0.5)
                .map(|(pi, _)| window_mass(pi, disc, &window))
                .reduce(f64::max);
            if let Some(mass) = worst {
                let regulated = scene
                    .conflicts
                    .iter()
                    .any(|k| k.yielding == d.dependent && k.priority == d.blocking && k.regulated);
                self.out.yield_checks.push(YieldCheck {
                    repeat: self.repeat,
                    recording_id: self.recording_id,
                    t,
                    dependent: d.dependent,
                    blocking: d.blocking,
                    regulated,
                    mass,
                });
            }
        }
    }

    /// Renders every vehicle's grid and keeps one tick of the first repeat.
    fn fuse(
        &mut self,
        scene: &Scene,
        forecasts: &[ChainForecast],
        posteriors: &BTreeMap<VehicleId, IntentionPosterior>,
        n_scored: usize,
        t: f64,
    ) -> Result<()> {
        if self.repeat != 0 {
            return Ok(());
        }
        let key = match self.cfg.snapshot_time {
            Some(ts) => -(ts - t).abs(),
            None => n_scored as f64,
        };
        if self.out.snapshot.as_ref().is_some_and(|(k, _)| *k >= key) {
            return Ok(());
        }
        let disc = &self.matrices.disc;
        let mut grid = Vec::new();
        let mut truth = Vec::new();
        for v in &scene.vehicles {
            let Some(post) = posteriors.get(&v.id) else {
                continue;
            };
            let marginals: Vec<(&ChainForecast, Vec<Vec<f64>>)> = forecasts
                .iter()
                .filter(|f| f.corridor.vehicle == v.id)
                .map(|f| (f, f.s_marginals(disc)))
                .collect();
            let preds: Vec<CorridorPrediction<'_>> = marginals
                .iter()
                .map(|(f, m)| CorridorPrediction {
                    corridor: scene.corridor(f.corridor).expect("forecast corridor is in the scene"),
                    prob: post.corridor_probs.get(&f.corridor).copied().unwrap_or(0.0),
                    s_origin: f.s_origin,
                    s_marginals: m,
                })
                .collect();
            for g in render_grid(v.id, &preds, disc, &self.cfg.grid)? {
                grid.extend(g.cells.iter().map(|(&(cx, cy), &mass)| GridRow {
                    vehicle_id: v.id.0,
                    step: g.step,
                    cell_x: cx,
                    cell_y: cy,
                    mass,
                }));
            }
            if let Some(track) = self.track(v.id) {
                let future = (1..=self.steps)
                    .filter_map(|k| track.sample_at(t + disc.tau * k as f64))
                    .map(|s| s.position())
                    .collect();
                truth.push((v.id.0, v.pose.position(), future));
            }
        }
        self.out.snapshot = Some((
            key,
            Snapshot {
                recording_id: self.recording_id,
                t,
                resolution: self.cfg.grid.resolution,
                grid,
                truth,
                n_scored,
            },
        ));
        Ok(())
    }
}

pub fn constant_profile(a: f64) -> AccelProfile {
    AccelProfile([a; iamp_core::accel::PROFILE_LEN])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub n_rows: usize,
    pub mean_made: f64,
    pub mean_mfde: f64,
    pub n_prediction_steps: usize,
    pub mean_step_time_s: f64,
    pub yield_mass_threshold: f64,
    pub yield_checks: usize,
    pub max_yield_mass: Option<f64>,
    pub config: RunConfig,
}

impl From<&RunReport> for RunSummary {
    fn from(r: &RunReport) -> Self {
        Self {
            mode: r.mode,
            seed: r.seed,
            seeds: r.seeds.clone(),
            n_rows: r.rows.len(),
            mean_made: r.mean_made,
            mean_mfde: r.mean_mfde,
            n_prediction_steps: r.step_times.len(),
            mean_step_time_s: r.mean_step_time,
            yield_mass_threshold: r.config.yield_mass_threshold,
            yield_checks: r.yield_checks.len(),
            max_yield_mass: r.max_yield_mass(),
            config: r.config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub runs: Vec<RunSummary>,
    /// Mean hybrid step time over mean baseline step time, when both ran.
    pub time_ratio_hybrid_over_baseline: Option<f64>,
}

impl SummaryFile {
    pub fn new(reports: &[RunReport]) -> Self {
        let time = |m: Mode| reports.iter().find(|r| r.mode == m).map(|r| r.mean_step_time);
        Self {
            runs: reports.iter().map(RunSummary::from).collect(),
            time_ratio_hybrid_over_baseline: time(Mode::Hybrid).zip(time(Mode::Baseline)).map(|(h, b)| h / b),
        }
    }
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const POSTERIOR_FILE: &str = "posterior.csv";

pub fn grid_file(mode: Mode) -> String {
    format!("grid_{}.csv", mode_name(mode))
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Baseline => "baseline",
        Mode::Hybrid => "hybrid",
    }
}

/// `metrics.csv`, `summary.json`, `posterior.csv`, and per mode a grid dump
/// and the yield checks. Only `summary.json` carries wall-clock figures.
pub fn write_report(dir: &Path, reports: &[RunReport]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_metrics(&dir.join(METRICS_FILE), reports.iter().flat_map(|r| &r.rows))?;
    write_json(&dir.join(SUMMARY_FILE), &SummaryFile::new(reports))?;
    if let Some(first) = reports.first() {
        write_posteriors(&dir.join(POSTERIOR_FILE), &first.posteriors)?;
    }
    for r in reports {
        if let Some(s) = &r.snapshot {
            write_grid(&dir.join(grid_file(r.mode)), &s.grid)?;
        }
        write_yields(&dir.join(format!("yield_{}.csv", mode_name(r.mode))), &r.yield_checks)?;
    }
    Ok(())
}

fn write_yields(path: &Path, rows: &[YieldCheck]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["repeat", "recording_id", "t", "dependent", "blocking", "regulated", "mass"])
        .map_err(err)?;
    for r in rows {
        w.write_record([
            r.repeat.to_string(),
            r.recording_id.to_string(),
            format!("{:.1}", r.t),
            r.dependent.to_string(),
            r.blocking.to_string(),
            r.regulated.to_string(),
            r.mass.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

pub fn write_metrics<'a>(path: &Path, rows: impl IntoIterator<Item = &'a MetricRow>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["mode", "repeat", "seed", "recording_id", "t", "vehicle_id", "n_corridors", "made", "mfde"])
        .map_err(err)?;
    for r in rows {
        w.write_record([
            mode_name(r.mode).to_string(),
            r.repeat.to_string(),
            r.seed.to_string(),
            r.recording_id.to_string(),
            format!("{:.1}", r.t),
            r.vehicle_id.to_string(),
            r.n_corridors.to_string(),
            r.made.to_string(),
            r.mfde.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |what: &str| Error::Schema {
            path: path.into(),
            reason: format!("bad `{what}` value"),
        };
        let mode = match field(0) {
            "baseline" => Mode::Baseline,
            "hybrid" => Mode::Hybrid,
            _ => return Err(bad("mode")),
        };
        rows.push(MetricRow {
            mode,
            repeat: field(1).parse().map_err(|_| bad("repeat"))?,
            seed: field(2).parse().map_err(|_| bad("seed"))?,
            recording_id: field(3).parse().map_err(|_| bad("recording_id"))?,
            t: field(4).parse().map_err(|_| bad("t"))?,
            vehicle_id: field(5).parse().map_err(|_| bad("vehicle_id"))?,
            n_corridors: field(6).parse().map_err(|_| bad("n_corridors"))?,
            made: field(7).parse().map_err(|_| bad("made"))?,
            mfde: field(8).parse().map_err(|_| bad("mfde"))?,
        });
    }
    Ok(rows)
}

fn write_posteriors(path: &Path, rows: &[PosteriorRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["recording_id", "timestamp", "vehicle_id", "corridor_id", "prob", "p_stop", "ess"])
        .map_err(err)?;
    for r in rows {
        w.write_record([
            r.recording_id.to_string(),
            format!("{:.1}", r.t),
            r.vehicle_id.to_string(),
            r.corridor.to_string(),
            r.prob.to_string(),
            r.p_stop.map(|p| p.to_string()).unwrap_or_default(),
            r.ess.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_grid(path: &Path, rows: &[GridRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| Error::csv(path, e);
    w.write_record(["vehicle_id", "step", "cell_x", "cell_y", "mass"]).map_err(err)?;
    for r in rows {
        w.write_record([
            r.vehicle_id.to_string(),
            r.step.to_string(),
            r.cell_x.to_string(),
            r.cell_y.to_string(),
            r.mass.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
