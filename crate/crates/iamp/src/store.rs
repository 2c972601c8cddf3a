//! On-disk formats: map JSON, precomputed transition matrices and trained
//! acceleration models.
//!
//! Both binary files share one layout: a 4-byte magic, the length of a JSON
//! header as a little-endian `u32`, the header, then a little-endian payload
//! whose SHA-256 is recorded in the header.

use std::fs;
use std::path::Path;

use iamp_core::accel::{ARModel, TrainingMeta};
use iamp_core::map::{LaneletMap, MapSpec};
use iamp_core::markov::{CscMatrix, Discretization, TransitionMatrices};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MATRICES_MAGIC: &[u8; 4] = b"IAMT";
pub const MODEL_MAGIC: &[u8; 4] = b"IAMW";
pub const FORMAT_VERSION: u32 = 1;

pub fn load_map(path: &Path) -> Result<LaneletMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: MapSpec = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    Ok(LaneletMap::from_spec(&spec)?)
}

pub fn save_map(path: &Path, map: &LaneletMap) -> Result<()> {
    write_json(path, &map.to_spec())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_container<H: Serialize>(path: &Path, magic: &[u8; 4], header: &H, payload: &[u8]) -> Result<()> {
    let head = serde_json::to_vec(header).map_err(|e| Error::json(path, e))?;
    let len = u32::try_from(head.len()).map_err(|_| Error::format(path, "header too large"))?;
    let mut out = Vec::with_capacity(8 + head.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&head);
    out.extend_from_slice(payload);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_container<H: DeserializeOwned>(path: &Path, magic: &[u8; 4]) -> Result<(H, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::format(path, "unrecognized file type"));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let Some(head) = bytes.get(8..8 + len) else {
        return Err(Error::format(path, "truncated header"));
    };
    let header = serde_json::from_slice(head).map_err(|e| Error::json(path, e))?;
    Ok((header, bytes[8 + len..].to_vec()))
}

/// Sequential little-endian reader over a payload.
struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let out = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::format(self.path, "truncated payload"))?;
        self.pos += n;
        Ok(out)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        Ok(self
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::format(self.path, "trailing bytes after payload"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatricesHeader {
    pub version: u32,
    pub ds: f64,
    pub dv: f64,
    pub s_cells: usize,
    pub v_cells: usize,
    pub u_cells: usize,
    pub accel_max: f64,
    pub brake_max: f64,
    pub v_max: f64,
    pub tau: f64,
    pub samples_per_cell: usize,
    pub step_nnz: usize,
    pub interval_nnz: usize,
    pub sha256: String,
}

fn push_csc(out: &mut Vec<u8>, m: &CscMatrix) {
    for &p in m.col_ptr() {
        out.extend_from_slice(&(p as u64).to_le_bytes());
    }
    for &r in m.row_idx() {
        out.extend_from_slice(&r.to_le_bytes());
    }
    for &v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_csc(cur: &mut Cursor<'_>, n: usize, nnz: usize) -> Result<CscMatrix> {
    let col_ptr = cur.u64s(n + 1)?.into_iter().map(|p| p as usize).collect();
    let row_idx = cur.u32s(nnz)?;
    let values = cur.f64s(nnz)?;
    Ok(CscMatrix::from_raw(n, n, col_ptr, row_idx, values)?)
}

pub fn save_matrices(path: &Path, m: &TransitionMatrices) -> Result<()> {
    let mut payload = Vec::new();
    push_csc(&mut payload, &m.step);
    push_csc(&mut payload, &m.interval);
    let d = &m.disc;
    let header = MatricesHeader {
        version: FORMAT_VERSION,
        ds: d.ds,
        dv: d.dv,
        s_cells: d.s_cells,
        v_cells: d.v_cells,
        u_cells: d.u_cells,
        accel_max: d.accel_max,
        brake_max: d.brake_max,
        v_max: d.v_max(),
        tau: d.tau,
        samples_per_cell: m.samples_per_cell,
        step_nnz: m.step.nnz(),
        interval_nnz: m.interval.nnz(),
        sha256: sha256_hex(&payload),
    };
    write_container(path, MATRICES_MAGIC, &header, &payload)
}

pub fn load_matrices(path: &Path) -> Result<TransitionMatrices> {
    let (h, payload): (MatricesHeader, _) = read_container(path, MATRICES_MAGIC)?;
    if h.version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", h.version)));
    }
    if sha256_hex(&payload) != h.sha256 {
        return Err(Error::Checksum { path: path.into() });
    }
    let disc = Discretization {
        s_cells: h.s_cells,
        ds: h.ds,
        v_cells: h.v_cells,
        dv: h.dv,
        u_cells: h.u_cells,
        accel_max: h.accel_max,
        brake_max: h.brake_max,
        tau: h.tau,
    };
    disc.validate()?;
    if (disc.v_max() - h.v_max).abs() > 1e-9 {
        return Err(Error::format(path, "v_max disagrees with the velocity grid"));
    }
    let n = disc.n_states();
    let mut cur = Cursor {
        path,
        bytes: &payload,
        pos: 0,
    };
    let step = read_csc(&mut cur, n, h.step_nnz)?;
    let interval = read_csc(&mut cur, n, h.interval_nnz)?;
    cur.finish()?;
    Ok(TransitionMatrices {
        disc,
        samples_per_cell: h.samples_per_cell,
        step,
        interval,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub version: u32,
    pub n_in: usize,
    pub n_out: usize,
    pub feat_min: Vec<f64>,
    pub feat_max: Vec<f64>,
    /// Training seed, config and per-epoch losses, when known.
    pub training: Option<TrainingMeta>,
    pub sha256: String,
}

/// Payload: `W` row-major (`n_out × n_in`), then `b`.
pub fn save_model(path: &Path, model: &ARModel) -> Result<()> {
    model.validate()?;
    let mut payload = Vec::with_capacity(8 * (model.w.len() + model.b.len()));
    for v in model.w.iter().chain(&model.b) {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let header = ModelHeader {
        version: FORMAT_VERSION,
        n_in: model.n_in,
        n_out: model.n_out,
        feat_min: model.feat_min.clone(),
        feat_max: model.feat_max.clone(),
        training: model.meta.clone(),
        sha256: sha256_hex(&payload),
    };
    write_container(path, MODEL_MAGIC, &header, &payload)
}

pub fn load_model(path: &Path) -> Result<ARModel> {
    let (h, payload): (ModelHeader, _) = read_container(path, MODEL_MAGIC)?;
    if h.version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", h.version)));
    }
    if sha256_hex(&payload) != h.sha256 {
        return Err(Error::Checksum { path: path.into() });
    }
    let mut cur = Cursor {
        path,
        bytes: &payload,
        pos: 0,
    };
    let w = cur.f64s(h.n_in * h.n_out)?;
    let b = cur.f64s(h.n_out)?;
    cur.finish()?;
    let model = ARModel {
        n_in: h.n_in,
        n_out: h.n_out,
        w,
        b,
        feat_min: h.feat_min,
        feat_max: h.feat_max,
        meta: h.training,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use iamp_core::markov::compute_transition_matrices;

    #[test]
    fn matrices_round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let disc = Discretization {
            s_cells: 8,
            v_cells: 4,
            ..Default::default()
        };
        let m = compute_transition_matrices(&disc, 8).unwrap();
        save_matrices(&path, &m).unwrap();
        assert_eq!(load_matrices(&path).unwrap(), m);

        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_matrices(&path), Err(Error::Checksum { .. })));
    }

    #[test]
    fn model_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let mut model = ARModel::zeros(3, 2);
        model.w = vec![0.1, -2.5, 1e-300, 7.0, f64::MIN_POSITIVE, -0.0];
        model.b = vec![0.3, -0.7];
        model.feat_max = vec![1.0, 2.0, 3.5];
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        assert!(back.w[5].is_sign_negative());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_model(&path, &ARModel::zeros(2, 2)).unwrap();
        assert!(matches!(load_matrices(&path), Err(Error::Format { .. })));
    }
}
