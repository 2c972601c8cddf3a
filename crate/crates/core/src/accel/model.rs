use alloc::vec::Vec;

#[allow(unused_imports)] // used without std
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AccelError, AccelProfile, FeatureVector, ACCEL_MAX, ACCEL_MIN, PROFILE_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate of each cosine cycle.
    pub learning_rate: f64,
    /// Learning rate at the end of each cycle.
    pub min_learning_rate: f64,
    /// Epochs per cosine cycle.
    pub restart_period: usize,
    /// Peak learning rate multiplier applied at each restart.
    pub restart_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Standard deviation of the initial weights.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 3e-3,
            min_learning_rate: 1e-6,
            restart_period: 10,
            restart_decay: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_scale: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub config: TrainConfig,
    pub n_samples: usize,
    /// Mean batch loss per epoch.
    pub losses: Vec<f64>,
}

/// Linear map from the normalized feature history to an acceleration
/// profile, `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ARModel {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub feat_min: Vec<f64>,
    pub feat_max: Vec<f64>,
    pub meta: Option<TrainingMeta>,
}

impl ARModel {
    /// All-zero weights with identity normalization.
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: alloc::vec![0.0; n_in * n_out],
            b: alloc::vec![0.0; n_out],
            feat_min: alloc::vec![0.0; n_in],
            feat_max: alloc::vec![1.0; n_in],
            meta: None,
        }
    }

    pub fn validate(&self) -> Result<(), AccelError> {
        let dims = self.w.len() == self.n_in * self.n_out
            && self.b.len() == self.n_out
            && self.feat_min.len() == self.n_in
            && self.feat_max.len() == self.n_in;
        if !dims {
            return Err(AccelError::DimensionMismatch {
                expected: self.n_in * self.n_out,
                got: self.w.len(),
            });
        }
        if self.feat_min.iter().zip(&self.feat_max).any(|(lo, hi)| !(hi > lo)) {
            return Err(AccelError::InvalidNormalization);
        }
        Ok(())
    }

    /// Min-max scaling, clamped to [0, 1] so inputs outside the training
    /// range cannot extrapolate the linear map.
    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = ((x[i] - self.feat_min[i]) / (self.feat_max[i] - self.feat_min[i])).clamp(0.0, 1.0);
        }
    }

    /// Output without clamping.
    pub fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>, AccelError> {
        if x.len() != self.n_in {
            return Err(AccelError::DimensionMismatch {
                expected: self.n_in,
                got: x.len(),
            });
        }
        let mut xn = alloc::vec![0.0; self.n_in];
        self.normalize_into(x, &mut xn);
        Ok(self.forward(&xn))
    }

    fn forward(&self, xn: &[f64]) -> Vec<f64> {
        self.w
            .chunks(self.n_in)
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(xn).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

/// Predicted profile, clamped to the admissible acceleration range.
pub fn infer(model: &ARModel, x: &FeatureVector) -> Result<AccelProfile, AccelError> {
    if model.n_out != PROFILE_LEN {
        return Err(AccelError::DimensionMismatch {
            expected: PROFILE_LEN,
            got: model.n_out,
        });
    }
    let y = model.predict_raw(&x.0)?;
    Ok(AccelProfile(core::array::from_fn(|i| y[i].clamp(ACCEL_MIN, ACCEL_MAX))))
}

fn cosine_lr(cfg: &TrainConfig, epoch: usize, frac: f64) -> f64 {
    let period = cfg.restart_period.max(1);
    let phase = ((epoch % period) as f64 + frac) / period as f64;
    let peak = cfg.learning_rate * cfg.restart_decay.powi((epoch / period) as i32);
    let peak = peak.max(cfg.min_learning_rate);
    cfg.min_learning_rate + 0.5 * (peak - cfg.min_learning_rate) * (1.0 + (core::f64::consts::PI * phase).cos())
}

fn feature_ranges(samples: &[TrainingSample], n_in: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = alloc::vec![f64::INFINITY; n_in];
    let mut hi = alloc::vec![f64::NEG_INFINITY; n_in];
    for s in samples {
        for (i, &x) in s.x.iter().enumerate() {
            lo[i] = lo[i].min(x);
            hi[i] = hi[i].max(x);
        }
    }
    // Columns that only vary by rounding noise are constant.
    for (l, h) in lo.iter().zip(hi.iter_mut()) {
        if !(*h - *l > 1e-9 * l.abs().max(1.0)) {
            *h = *l + 1.0;
        }
    }
    (lo, hi)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + cfg.epsilon);
        }
    }
}

/// Fits the model by mini-batch Adam on `MSE + MAE` with a cosine learning
/// rate that restarts every `restart_period` epochs.
pub fn train(samples: &[TrainingSample], cfg: &TrainConfig) -> Result<ARModel, AccelError> {
    let first = samples.first().ok_or(AccelError::EmptyDataset)?;
    let (n_in, n_out) = (first.x.len(), first.y.len());
    if n_in == 0 || n_out == 0 {
        return Err(AccelError::EmptyDataset);
    }
    for s in samples {
        if s.x.len() != n_in || s.y.len() != n_out {
            return Err(AccelError::DimensionMismatch {
                expected: n_in,
                got: s.x.len(),
            });
        }
        if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
            return Err(AccelError::NonFinite);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (feat_min, feat_max) = feature_ranges(samples, n_in);
    let mut model = ARModel {
        n_in,
        n_out,
        w: alloc::vec![0.0; n_in * n_out],
        b: alloc::vec![0.0; n_out],
        feat_min,
        feat_max,
        meta: None,
    };
    if cfg.init_scale > 0.0 {
        let init = Normal::new(0.0, cfg.init_scale).map_err(|_| AccelError::InvalidConfig)?;
        model.w.iter_mut().for_each(|w| *w = init.sample(&mut rng));
    }

    let normalized: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut xn = alloc::vec![0.0; n_in];
            model.normalize_into(&s.x, &mut xn);
            xn
        })
        .collect();

    let n_params = n_in * n_out + n_out;
    let mut adam = Adam {
        m: alloc::vec![0.0; n_params],
        v: alloc::vec![0.0; n_params],
        t: 0,
    };
    let mut grad = alloc::vec![0.0; n_params];
    let mut params = alloc::vec![0.0; n_params];
    let batch = cfg.batch_size.max(1);
    let n_batches = samples.len().div_ceil(batch);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (bi, chunk) in order.chunks(batch).enumerate() {
            grad.fill(0.0);
            let scale = 1.0 / (chunk.len() * n_out) as f64;
            let mut loss = 0.0;
            for &k in chunk {
                let xn = &normalized[k];
                let y = model.forward(xn);
                for (o, (yo, to)) in y.iter().zip(&samples[k].y).enumerate() {
                    let e = yo - to;
                    loss += (e * e + e.abs()) * scale;
                    let g = (2.0 * e + e.signum()) * scale;
                    if g != 0.0 {
                        let row = &mut grad[o * n_in..(o + 1) * n_in];
                        row.iter_mut().zip(xn).for_each(|(gr, x)| *gr += g * x);
                        grad[n_in * n_out + o] += g;
                    }
                }
            }
            if !loss.is_finite() {
                return Err(AccelError::Diverged { epoch });
            }
            epoch_loss += loss;
            params[..n_in * n_out].copy_from_slice(&model.w);
            params[n_in * n_out..].copy_from_slice(&model.b);
            adam.t += 1;
            let lr = cosine_lr(cfg, epoch, bi as f64 / n_batches as f64);
            adam.step(&mut params, &grad, lr, cfg);
            model.w.copy_from_slice(&params[..n_in * n_out]);
            model.b.copy_from_slice(&params[n_in * n_out..]);
        }
        let mean = epoch_loss / n_batches as f64;
        if !mean.is_finite() {
            return Err(AccelError::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        losses.push(mean);
    }
    model.meta = Some(TrainingMeta {
        config: *cfg,
        n_samples: samples.len(),
        losses,
    });
    Ok(model)
}
