//! Training data for the acceleration model: feature vectors built on each
//! vehicle's driven corridor and the 40 accelerations that followed.

use std::collections::BTreeMap;
use std::path::Path;

use iamp_core::accel::{extract_features, HistorySample, TrainingSample, FEATURE_LEN, PROFILE_DT, PROFILE_LEN};
use iamp_core::corridor::VehicleId;
use iamp_core::map::LaneletMap;

use crate::error::{Error, Result};
use crate::scene::{corridor_matching_future, states_at, Scene, SceneConfig};
use crate::tracks::{TrackDataset, GRID_DT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub scene: SceneConfig,
    /// Frames between samples.
    pub stride: usize,
    pub min_speed: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            stride: 2,
            min_speed: 0.5,
        }
    }
}

/// One sample per vehicle and frame on the stride grid whose history and
/// future are both complete.
pub fn build_samples(map: &LaneletMap, data: &TrackDataset, cfg: &DatasetConfig) -> Result<Vec<TrainingSample>> {
    let horizon = PROFILE_LEN as f64 * PROFILE_DT;
    let stride = cfg.stride.max(1) as i64;
    let mut out = Vec::new();
    for rec in &data.recordings {
        let Some(t0) = rec.tracks.iter().map(|t| t.t_start()).reduce(f64::min) else {
            continue;
        };
        let t1 = rec.t_end();
        let mut history: BTreeMap<VehicleId, Vec<HistorySample>> = BTreeMap::new();
        let mut j = (t0 / GRID_DT - 1e-6).ceil() as i64;
        while j as f64 * GRID_DT <= t1 + 1e-6 {
            let t = j as f64 * GRID_DT;
            j += stride;
            let states: Vec<_> = states_at(&rec.tracks, t).into_iter().map(|(s, _)| s).collect();
            let scene = Scene::build(map, &states, t, &cfg.scene);
            history.retain(|id, _| scene.vehicle(*id).is_some());
            for v in &scene.vehicles {
                let track = rec.track(v.id.0).expect("scene vehicles come from tracks");
                let Some(c) = corridor_matching_future(&scene, track, horizon) else {
                    continue;
                };
                let Some(sample) = scene.history_sample(v.id, c, cfg.min_speed) else {
                    continue;
                };
                let h = history.entry(v.id).or_default();
                h.push(sample);
                h.retain(|s| s.t >= t - horizon - 0.5);
                if track.t_end() < t + horizon - 1e-6 {
                    continue;
                }
                let Ok(x) = extract_features(h, t) else {
                    continue;
                };
                let y: Option<Vec<f64>> = (1..=PROFILE_LEN)
                    .map(|k| track.sample_at(t + PROFILE_DT * k as f64).map(|s| s.a))
                    .collect();
                if let Some(y) = y {
                    out.push(TrainingSample { x: x.0, y });
                }
            }
        }
    }
    Ok(out)
}

pub fn header() -> Vec<String> {
    (0..FEATURE_LEN)
        .map(|i| format!("x{i}"))
        .chain((0..PROFILE_LEN).map(|i| format!("y{i}")))
        .collect()
}

pub fn write_dataset(path: &Path, samples: &[TrainingSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(header()).map_err(|e| Error::csv(path, e))?;
    for s in samples {
        w.write_record(s.x.iter().chain(&s.y).map(|v| v.to_string()))
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads 220 feature columns followed by 40 target columns.
pub fn read_dataset(path: &Path) -> Result<Vec<TrainingSample>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let width = FEATURE_LEN + PROFILE_LEN;
    let n_cols = r.headers().map_err(|e| Error::csv(path, e))?.len();
    if n_cols != width {
        return Err(Error::Schema {
            path: path.into(),
            reason: format!("expected {width} columns ({FEATURE_LEN} features, {PROFILE_LEN} targets), found {n_cols}"),
        });
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Error::Schema {
                path: path.into(),
                reason: format!("non-numeric value in data row {}", line + 1),
            })?;
        let (x, y) = vals.split_at(FEATURE_LEN);
        out.push(TrainingSample {
            x: x.to_vec(),
            y: y.to_vec(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_scenario;

    #[test]
    fn samples_have_full_width_and_round_trip() {
        let s = generate_scenario("straight", 3).unwrap();
        let samples = build_samples(&s.map, &s.tracks, &DatasetConfig::default()).unwrap();
        // 20 s track: features need 3.6 s, targets 4 s, every 0.2 s
        assert!(samples.len() >= 55, "{}", samples.len());
        assert!(samples.iter().all(|s| s.x.len() == FEATURE_LEN && s.y.len() == PROFILE_LEN));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &samples[..5]).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), samples[..5].to_vec());
    }

    #[test]
    fn wrong_width_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Schema { .. })));
    }
}
