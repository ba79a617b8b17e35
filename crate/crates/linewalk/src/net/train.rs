//! SGD-with-momentum training loop over contour-following label records.
//!
//! Labels are direction changes in degrees; they are scaled by
//! 1/`label_scale` (default 180) into `[-1, 1]` for the MSE target and the
//! network output is rescaled at inference time.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::labels::LabelRecord;
use crate::net::arch::{CnnArchitecture, GradBuffers, WeightsBundle};
use crate::net::ops::{apply_running_update, backward, forward_train, infer_raw};
use crate::raster::Patch;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Degrees-to-target divisor; labels train as `degrees / label_scale`.
    pub label_scale: f64,
    pub seed: u64,
    /// Channel-width divisor of the architecture to train (1 = full).
    pub width_divisor: usize,
    /// Momentum of the batch-norm running-statistic update.
    pub bn_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 30,
            label_scale: 180.0,
            seed: 0,
            width_divisor: 1,
            bn_momentum: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.label_scale > 0.0) {
            return Err(Error::invalid("label_scale must be > 0"));
        }
        CnnArchitecture::reduced(self.width_divisor)?;
        Ok(())
    }

    /// Parse a plain-text `key = value` config. Unknown keys are rejected;
    /// missing keys keep their defaults. `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key=value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |e: &dyn std::fmt::Display| {
                Error::Format(format!("line {}: bad value for {key}: {e}", lineno + 1))
            };
            match key {
                "learning_rate" => cfg.learning_rate = value.parse().map_err(|e| bad(&e))?,
                "momentum" => cfg.momentum = value.parse().map_err(|e| bad(&e))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad(&e))?,
                "epochs" => cfg.epochs = value.parse().map_err(|e| bad(&e))?,
                "label_scale" => cfg.label_scale = value.parse().map_err(|e| bad(&e))?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                "width_divisor" => cfg.width_divisor = value.parse().map_err(|e| bad(&e))?,
                "bn_momentum" => cfg.bn_momentum = value.parse().map_err(|e| bad(&e))?,
                other => return Err(Error::Format(format!("unknown config key: {other}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kv_file(path: impl AsRef<Path>) -> Result<TrainConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "learning_rate = {}\nmomentum = {}\nbatch_size = {}\nepochs = {}\nlabel_scale = {}\nseed = {}\nwidth_divisor = {}\nbn_momentum = {}\n",
            self.learning_rate,
            self.momentum,
            self.batch_size,
            self.epochs,
            self.label_scale,
            self.seed,
            self.width_divisor,
            self.bn_momentum
        )
    }
}

/// One momentum-SGD update: `v <- momentum * v - lr * g; w <- w + v`.
/// Batch-norm running statistics are untouched.
pub fn sgd_step(
    weights: &mut WeightsBundle,
    grads: &GradBuffers,
    velocity: &mut GradBuffers,
    learning_rate: f64,
    momentum: f64,
) {
    let step = |w: &mut f32, g: f64, v: &mut f64| {
        *v = momentum * *v - learning_rate * g;
        *w = (*w as f64 + *v) as f32;
    };
    for b in 0..5 {
        let block = &mut weights.conv[b];
        for i in 0..block.kernel.len() {
            step(&mut block.kernel[i], grads.kernel[b][i], &mut velocity.kernel[b][i]);
        }
        for i in 0..block.bias.len() {
            step(&mut block.bias[i], grads.bias[b][i], &mut velocity.bias[b][i]);
        }
        for i in 0..block.bn_scale.len() {
            step(
                &mut block.bn_scale[i],
                grads.bn_scale[b][i],
                &mut velocity.bn_scale[b][i],
            );
        }
        for i in 0..block.bn_shift.len() {
            step(
                &mut block.bn_shift[i],
                grads.bn_shift[b][i],
                &mut velocity.bn_shift[b][i],
            );
        }
    }
    for i in 0..weights.fc_weight.len() {
        step(
            &mut weights.fc_weight[i],
            grads.fc_weight[i],
            &mut velocity.fc_weight[i],
        );
    }
    step(&mut weights.fc_bias, grads.fc_bias, &mut velocity.fc_bias);
}

/// Per-epoch losses on the scaled targets.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Weights of the epoch with the lowest validation loss.
    pub weights: WeightsBundle,
    pub curve: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.curve {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        out
    }
}

fn mean_val_loss(
    weights: &WeightsBundle,
    records: &[LabelRecord],
    batch_size: usize,
    label_scale: f64,
) -> Result<f64> {
    let mut total = 0.0f64;
    for chunk in records.chunks(batch_size.max(1)) {
        let patches: Vec<Patch> = chunk.iter().map(|r| r.patch.clone()).collect();
        let outputs = infer_raw(weights, &patches)?;
        for (out, rec) in outputs.iter().zip(chunk) {
            let target = rec.alpha_label_degrees as f64 / label_scale;
            total += (out - target) * (out - target);
        }
    }
    Ok(total / records.len() as f64)
}

/// Train from scratch on a pre-split dataset. Deterministic given the
/// config seed; returns the best-validation weights and the loss curve.
pub fn train(
    train_records: &[LabelRecord],
    val_records: &[LabelRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_records.is_empty() || val_records.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    let arch = CnnArchitecture::reduced(cfg.width_divisor)?;
    let mut weights = WeightsBundle::init(arch, cfg.seed);
    let mut velocity = GradBuffers::zeros(arch);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x7261_696e);

    let mut indices: Vec<usize> = (0..train_records.len()).collect();
    let mut best: Option<(f64, WeightsBundle)> = None;
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut seen = 0usize;
        for batch_idx in indices.chunks(cfg.batch_size) {
            if batch_idx.len() < 2 {
                // Batch statistics need at least two samples.
                continue;
            }
            let patches: Vec<Patch> = batch_idx
                .iter()
                .map(|&i| train_records[i].patch.clone())
                .collect();
            let labels: Vec<f64> = batch_idx
                .iter()
                .map(|&i| train_records[i].alpha_label_degrees as f64 / cfg.label_scale)
                .collect();
            let fwd = forward_train(&weights, &patches)?;
            let (loss, grads) = backward(&weights, &fwd, &patches, &labels)?;
            apply_running_update(&mut weights, &fwd, cfg.bn_momentum);
            sgd_step(&mut weights, &grads, &mut velocity, cfg.learning_rate, cfg.momentum);
            epoch_loss += loss * batch_idx.len() as f64;
            seen += batch_idx.len();
        }
        if seen == 0 {
            return Err(Error::invalid(
                "no trainable batch (need at least 2 records per batch)",
            ));
        }
        let train_loss = epoch_loss / seen as f64;
        let val_loss = mean_val_loss(&weights, val_records, cfg.batch_size, cfg.label_scale)?;
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        curve.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            best = Some((val_loss, weights.clone()));
        }
    }

    Ok(TrainOutcome {
        weights: best.expect("at least one epoch ran").1,
        curve,
    })
}
