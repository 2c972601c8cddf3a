//! Track recordings in an inD-like CSV layout.
//!
//! Columns: `recording_id,track_id,frame,x,y,heading,v,a,length,width`
//! (`a` optional). The frame rate lives in a sidecar JSON file next to the
//! CSV with the same stem: `{"frame_rate": 25.0}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use iamp_core::geometry::{wrap_angle, Point2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing of the common time grid, s.
pub const GRID_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub frame_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    /// s since the start of the recording.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub a: f64,
}

impl TrackSample {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: i64,
    pub length: f64,
    pub width: f64,
    /// Sorted by time.
    pub samples: Vec<TrackSample>,
}

impl Track {
    pub fn t_start(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.t)
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn covers(&self, t: f64) -> bool {
        !self.samples.is_empty() && t >= self.t_start() - 1e-9 && t <= self.t_end() + 1e-9
    }

    /// Linear interpolation; `None` outside the track.
    pub fn sample_at(&self, t: f64) -> Option<TrackSample> {
        if !self.covers(t) {
            return None;
        }
        let i = self.samples.partition_point(|s| s.t < t - 1e-9);
        let b = self.samples[i.min(self.samples.len() - 1)];
        if (b.t - t).abs() <= 1e-9 || i == 0 {
            return Some(b);
        }
        let a = self.samples[i - 1];
        Some(lerp_sample(&a, &b, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: i64,
    pub frame_rate: f64,
    pub tracks: Vec<Track>,
}

impl Recording {
    pub fn track(&self, id: i64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn t_end(&self) -> f64 {
        self.tracks.iter().map(Track::t_end).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackDataset {
    pub recordings: Vec<Recording>,
}

pub fn sidecar_path(tracks: &Path) -> PathBuf {
    tracks.with_extension("json")
}

fn lerp_sample(a: &TrackSample, b: &TrackSample, t: f64) -> TrackSample {
    let w = (t - a.t) / (b.t - a.t);
    let l = |x: f64, y: f64| x + w * (y - x);
    TrackSample {
        t,
        x: l(a.x, b.x),
        y: l(a.y, b.y),
        heading: wrap_angle(a.heading + w * wrap_angle(b.heading - a.heading)),
        v: l(a.v, b.v),
        a: l(a.a, b.a),
    }
}

/// Resamples onto multiples of [`GRID_DT`] by linear interpolation. The
/// first and last raw samples are kept when they fall between grid times.
pub fn resample(raw: &[TrackSample]) -> Vec<TrackSample> {
    let (Some(first), Some(last)) = (raw.first(), raw.last()) else {
        return Vec::new();
    };
    let k0 = (first.t / GRID_DT - 1e-6).ceil() as i64;
    let k1 = (last.t / GRID_DT + 1e-6).floor() as i64;
    let mut out = Vec::new();
    if (k0 as f64 * GRID_DT - first.t).abs() > 1e-6 {
        out.push(*first);
    }
    let mut j = 0;
    for k in k0..=k1 {
        let t = k as f64 * GRID_DT;
        while j + 1 < raw.len() && raw[j + 1].t < t - 1e-9 {
            j += 1;
        }
        let s = if (raw[j].t - t).abs() <= 1e-6 {
            TrackSample { t, ..raw[j] }
        } else if j + 1 < raw.len() && (raw[j + 1].t - t).abs() <= 1e-6 {
            TrackSample { t, ..raw[j + 1] }
        } else if j + 1 < raw.len() {
            lerp_sample(&raw[j], &raw[j + 1], t)
        } else {
            TrackSample { t, ..raw[j] }
        };
        out.push(s);
    }
    if out.last().is_none_or(|s| (s.t - last.t).abs() > 1e-6) {
        out.push(*last);
    }
    out
}

/// Central differences of the speed; one-sided at the ends.
pub fn accel_from_speed(samples: &mut [TrackSample]) {
    let n = samples.len();
    if n < 2 {
        samples.iter_mut().for_each(|s| s.a = 0.0);
        return;
    }
    let a: Vec<f64> = (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (samples[hi].v - samples[lo].v) / (samples[hi].t - samples[lo].t)
        })
        .collect();
    samples.iter_mut().zip(a).for_each(|(s, a)| s.a = a);
}

const REQUIRED: [&str; 9] = [
    "recording_id",
    "track_id",
    "frame",
    "x",
    "y",
    "heading",
    "v",
    "length",
    "width",
];

struct RawTrack {
    length: f64,
    width: f64,
    last_frame: i64,
    samples: Vec<TrackSample>,
}

/// Reads a track CSV and its sidecar, resampling every track onto the
/// common 0.1 s grid.
pub fn ingest_tracks(path: &Path) -> Result<TrackDataset> {
    let side = sidecar_path(path);
    let sidecar: Sidecar = crate::store::read_json(&side)?;
    if !(sidecar.frame_rate > 0.0 && sidecar.frame_rate.is_finite()) {
        return Err(Error::Schema {
            path: side,
            reason: format!("frame_rate must be positive, got {}", sidecar.frame_rate),
        });
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; REQUIRED.len()];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name).ok_or_else(|| Error::MissingColumn {
            path: path.into(),
            column: name.into(),
        })?;
    }
    let a_col = col("a");

    let mut raw: BTreeMap<(i64, i64), RawTrack> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let field = |i: usize| -> Result<f64> {
            let text = rec.get(i).unwrap_or("").trim();
            text.parse::<f64>().map_err(|_| Error::Schema {
                path: path.into(),
                reason: format!("row {}: cannot parse `{text}` in column `{}`", line + 2, &headers[i]),
            })
        };
        let int = |i: usize| -> Result<i64> {
            let v = field(i)?;
            if v.fract() != 0.0 {
                return Err(Error::Schema {
                    path: path.into(),
                    reason: format!("row {}: column `{}` must be an integer", line + 2, &headers[i]),
                });
            }
            Ok(v as i64)
        };
        let (rec_id, track_id, frame) = (int(idx[0])?, int(idx[1])?, int(idx[2])?);
        let sample = TrackSample {
            t: frame as f64 / sidecar.frame_rate,
            x: field(idx[3])?,
            y: field(idx[4])?,
            heading: field(idx[5])?,
            v: field(idx[6])?,
            a: match a_col {
                Some(i) => field(i)?,
                None => 0.0,
            },
        };
        let entry = raw.entry((rec_id, track_id)).or_insert(RawTrack {
            length: field(idx[7])?,
            width: field(idx[8])?,
            last_frame: i64::MIN,
            samples: Vec::new(),
        });
        if frame <= entry.last_frame {
            return Err(Error::NonMonotoneFrames {
                recording: rec_id,
                track: track_id,
                previous: entry.last_frame,
                frame,
            });
        }
        entry.last_frame = frame;
        entry.samples.push(sample);
    }

    let mut recordings: BTreeMap<i64, Recording> = BTreeMap::new();
    for ((rec_id, track_id), rt) in raw {
        let mut samples = resample(&rt.samples);
        if a_col.is_none() {
            accel_from_speed(&mut samples);
        }
        recordings
            .entry(rec_id)
            .or_insert_with(|| Recording {
                id: rec_id,
                frame_rate: sidecar.frame_rate,
                tracks: Vec::new(),
            })
            .tracks
            .push(Track {
                id: track_id,
                length: rt.length,
                width: rt.width,
                samples,
            });
    }
    Ok(TrackDataset {
        recordings: recordings.into_values().collect(),
    })
}

/// Writes tracks and sidecar. Times are converted back to frame numbers
/// with the recording's frame rate.
pub fn write_tracks(path: &Path, data: &TrackDataset) -> Result<()> {
    let rate = data.recordings.first().map_or(1.0 / GRID_DT, |r| r.frame_rate);
    if data.recordings.iter().any(|r| r.frame_rate != rate) {
        return Err(Error::Config("all recordings in one file must share a frame rate".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = [
        "recording_id",
        "track_id",
        "frame",
        "x",
        "y",
        "heading",
        "v",
        "a",
        "length",
        "width",
    ];
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in &data.recordings {
        for tr in &r.tracks {
            for s in &tr.samples {
                let frame = (s.t * rate).round() as i64;
                w.write_record([
                    r.id.to_string(),
                    tr.id.to_string(),
                    frame.to_string(),
                    s.x.to_string(),
                    s.y.to_string(),
                    s.heading.to_string(),
                    s.v.to_string(),
                    s.a.to_string(),
                    tr.length.to_string(),
                    tr.width.to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    crate::store::write_json(&sidecar_path(path), &Sidecar { frame_rate: rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, csv: &str, rate: f64) -> PathBuf {
        let p = dir.join("t.csv");
        fs::write(&p, csv).unwrap();
        fs::write(dir.join("t.json"), format!("{{\"frame_rate\": {rate}}}")).unwrap();
        p
    }

    #[test]
    fn two_rows_keep_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "recording_id,track_id,frame,x,y,heading,v,a,length,width\n\
             1,7,0,0,0,0,10,0,4.5,1.8\n\
             1,7,5,2,0,0,10,0,4.5,1.8\n",
            25.0,
        );
        let ds = ingest_tracks(&p).unwrap();
        let s = &ds.recordings[0].tracks[0].samples;
        let ts: Vec<f64> = s.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 3);
        assert!((ts[0] - 0.0).abs() < 1e-12 && (ts[1] - 0.1).abs() < 1e-12 && (ts[2] - 0.2).abs() < 1e-12);
        assert_eq!(s[0].x, 0.0);
        assert!((s[1].x - 1.0).abs() < 1e-12);
        assert_eq!(s[2].x, 2.0);
    }

    #[test]
    fn off_grid_endpoints_are_kept() {
        let raw = [
            TrackSample { t: 0.04, x: 0.4, y: 0.0, heading: 0.0, v: 10.0, a: 0.0 },
            TrackSample { t: 0.28, x: 2.8, y: 0.0, heading: 0.0, v: 10.0, a: 0.0 },
        ];
        let out = resample(&raw);
        let ts: Vec<f64> = out.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 4);
        assert_eq!(out[0], raw[0]);
        assert_eq!(out[3], raw[1]);
        assert!((out[1].x - 1.0).abs() < 1e-12 && (out[2].x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "recording_id,track_id,frame,x,y,v,length,width\n", 25.0);
        let err = ingest_tracks(&p).unwrap_err();
        assert!(matches!(&err, Error::MissingColumn { column, .. } if column == "heading"));
        assert!(err.to_string().contains("heading"));
    }

    #[test]
    fn repeated_frame_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "recording_id,track_id,frame,x,y,heading,v,length,width\n\
             1,1,3,0,0,0,1,4,2\n1,1,3,0,0,0,1,4,2\n",
            10.0,
        );
        assert!(matches!(
            ingest_tracks(&p),
            Err(Error::NonMonotoneFrames { frame: 3, previous: 3, .. })
        ));
    }

    #[test]
    fn constant_speed_without_a_column_has_zero_accel() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("recording_id,track_id,frame,x,y,heading,v,length,width\n");
        for f in 0..50 {
            csv.push_str(&format!("1,1,{f},{},0,0,8,4,2\n", 8.0 * f as f64 / 25.0));
        }
        let p = write(dir.path(), &csv, 25.0);
        let ds = ingest_tracks(&p).unwrap();
        assert!(ds.recordings[0].tracks[0].samples.iter().all(|s| s.a.abs() < 1e-9));
    }

    #[test]
    fn recomputed_accel_matches_derivative() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("recording_id,track_id,frame,x,y,heading,v,length,width\n");
        for f in 0..250 {
            let t = f as f64 / 25.0;
            csv.push_str(&format!("1,1,{f},{},0,0,{},4,2\n", 10.0 * t - 2.0 * t.cos(), 10.0 + 2.0 * t.sin()));
        }
        let p = write(dir.path(), &csv, 25.0);
        let ds = ingest_tracks(&p).unwrap();
        let s = &ds.recordings[0].tracks[0].samples;
        for w in &s[1..s.len() - 1] {
            assert!((w.a - 2.0 * w.t.cos()).abs() < 0.05, "t = {}", w.t);
        }
    }

    #[test]
    fn write_then_ingest_is_identity_on_grid() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<TrackSample> = (0..30)
            .map(|k| TrackSample {
                t: k as f64 * GRID_DT,
                x: 0.37 * k as f64,
                y: -0.1 * k as f64,
                heading: -0.26,
                v: 3.8,
                a: 0.01 * k as f64,
            })
            .collect();
        let ds = TrackDataset {
            recordings: vec![Recording {
                id: 4,
                frame_rate: 10.0,
                tracks: vec![Track {
                    id: 2,
                    length: 4.5,
                    width: 1.9,
                    samples,
                }],
            }],
        };
        let p = dir.path().join("tracks.csv");
        write_tracks(&p, &ds).unwrap();
        let back = ingest_tracks(&p).unwrap();
        let (a, b) = (&ds.recordings[0].tracks[0].samples, &back.recordings[0].tracks[0].samples);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x.t - y.t).abs() < 1e-12);
            assert_eq!((x.x, x.y, x.v, x.a), (y.x, y.y, y.v, y.a));
        }
    }
}
