//! Forward and backward passes.
//!
//! Activations are `f64`; parameters are widened from their `f32` storage
//! at use. Work is parallelized over fixed 8-sample chunks and partial
//! results are merged in chunk order, so results are bit-identical
//! regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::arch::{
    GradBuffers, WeightsBundle, BLOCK_IN_SIDE, BLOCK_OUT_SIDE, BLOCK_POOLED, BN_EPS,
};
use crate::raster::Patch;

/// Samples per deterministic work chunk.
const CHUNK: usize = 8;

/// Valid output range for one kernel tap: `y + k - pad` must land inside
/// the input. Returns `(lo, hi)` with `lo..hi` valid (possibly empty).
#[inline]
fn tap_range(out_side: usize, in_side: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = out_side.min(in_side + pad - k);
    (lo.min(hi), hi)
}

fn conv_forward(
    input: &[f64],
    in_ch: usize,
    in_side: usize,
    kernel: &[f32],
    bias: &[f32],
    out_ch: usize,
    pad: usize,
) -> Vec<f64> {
    let out_side = in_side + 2 * pad - 2;
    let mut out = vec![0.0f64; out_ch * out_side * out_side];
    for o in 0..out_ch {
        let out_plane = &mut out[o * out_side * out_side..(o + 1) * out_side * out_side];
        out_plane.iter_mut().for_each(|v| *v = bias[o] as f64);
        for i in 0..in_ch {
            let in_plane = &input[i * in_side * in_side..(i + 1) * in_side * in_side];
            let kbase = (o * in_ch + i) * 9;
            for ky in 0..3 {
                let (y_lo, y_hi) = tap_range(out_side, in_side, ky, pad);
                for kx in 0..3 {
                    let k = kernel[kbase + ky * 3 + kx] as f64;
                    let (x_lo, x_hi) = tap_range(out_side, in_side, kx, pad);
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in y_lo..y_hi {
                        let sy = y + ky - pad;
                        let src = &in_plane[sy * in_side + x_lo + kx - pad..];
                        let dst = &mut out_plane[y * out_side + x_lo..y * out_side + x_hi];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// dInput, plus per-call kernel/bias gradient accumulation.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    d_out: &[f64],
    in_ch: usize,
    in_side: usize,
    kernel: &[f32],
    out_ch: usize,
    pad: usize,
    d_kernel: &mut [f64],
    d_bias: &mut [f64],
    want_d_input: bool,
) -> Option<Vec<f64>> {
    let out_side = in_side + 2 * pad - 2;
    let mut d_input = if want_d_input {
        Some(vec![0.0f64; in_ch * in_side * in_side])
    } else {
        None
    };
    for o in 0..out_ch {
        let d_plane = &d_out[o * out_side * out_side..(o + 1) * out_side * out_side];
        d_bias[o] += d_plane.iter().sum::<f64>();
        for i in 0..in_ch {
            let in_plane = &input[i * in_side * in_side..(i + 1) * in_side * in_side];
            let kbase = (o * in_ch + i) * 9;
            for ky in 0..3 {
                let (y_lo, y_hi) = tap_range(out_side, in_side, ky, pad);
                for kx in 0..3 {
                    let k = kernel[kbase + ky * 3 + kx] as f64;
                    let (x_lo, x_hi) = tap_range(out_side, in_side, kx, pad);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let mut acc = 0.0f64;
                    for y in y_lo..y_hi {
                        let sy = y + ky - pad;
                        let src = &in_plane[sy * in_side + x_lo + kx - pad..];
                        let d_row = &d_plane[y * out_side + x_lo..y * out_side + x_hi];
                        for (d, s) in d_row.iter().zip(src) {
                            acc += d * s;
                        }
                    }
                    d_kernel[kbase + ky * 3 + kx] += acc;
                    if let Some(di) = d_input.as_deref_mut() {
                        let di_plane =
                            &mut di[i * in_side * in_side..(i + 1) * in_side * in_side];
                        for y in y_lo..y_hi {
                            let sy = y + ky - pad;
                            let d_row = &d_plane[y * out_side + x_lo..y * out_side + x_hi];
                            let dst = &mut di_plane[sy * in_side + x_lo + kx - pad
                                ..sy * in_side + x_lo + kx - pad + (x_hi - x_lo)];
                            for (d, g) in dst.iter_mut().zip(d_row) {
                                *d += k * g;
                            }
                        }
                    }
                }
            }
        }
    }
    d_input
}

fn check_finite(values: &[f64], layer: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure {
            layer: layer.to_string(),
            detail: "non-finite activation".into(),
        });
    }
    Ok(())
}

/// Per-block data retained for the backward pass.
struct BlockCache {
    /// Normalized activations x-hat, per sample.
    xhat: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    /// Post-ReLU activations (pre-pooling), per sample.
    relu: Vec<Vec<f64>>,
    /// Argmax index into the pre-pool plane, per sample (pooled blocks).
    argmax: Vec<Vec<u32>>,
    /// Block output (post-pool), per sample.
    out: Vec<Vec<f64>>,
    /// Batch statistics (for the running-stat update).
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

/// Train-mode forward state.
pub struct TrainForward {
    outputs: Vec<f64>,
    blocks: Vec<BlockCache>,
    fc_input: Vec<Vec<f64>>,
}

impl TrainForward {
    /// Raw per-patch scalars (unscaled).
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Batch mean/variance per block, for running-statistic updates.
    pub fn batch_stats(&self, block: usize) -> (&[f64], &[f64]) {
        (&self.blocks[block].batch_mean, &self.blocks[block].batch_var)
    }
}

fn patch_to_f64(p: &Patch) -> Vec<f64> {
    p.data().iter().map(|&v| v as f64).collect()
}

fn conv_all_samples(
    inputs: &[Vec<f64>],
    weights: &WeightsBundle,
    block: usize,
) -> Vec<Vec<f64>> {
    let in_ch = weights.arch.in_channels()[block];
    let out_ch = weights.arch.channels()[block];
    let in_side = BLOCK_IN_SIDE[block];
    let pad = if block == 4 { 0 } else { 1 };
    let chunks: Vec<Vec<Vec<f64>>> = inputs
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|input| {
                    conv_forward(
                        input,
                        in_ch,
                        in_side,
                        &weights.conv[block].kernel,
                        &weights.conv[block].bias,
                        out_ch,
                        pad,
                    )
                })
                .collect::<Vec<_>>()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

/// Batch-norm in train mode: returns (xhat per sample, inv_std, mean, var).
fn bn_train(
    conv_out: &[Vec<f64>],
    out_ch: usize,
    plane: usize,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = (conv_out.len() * plane) as f64;
    let mut mean = vec![0.0f64; out_ch];
    let mut var = vec![0.0f64; out_ch];
    for sample in conv_out {
        for c in 0..out_ch {
            mean[c] += sample[c * plane..(c + 1) * plane].iter().sum::<f64>();
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for sample in conv_out {
        for c in 0..out_ch {
            var[c] += sample[c * plane..(c + 1) * plane]
                .iter()
                .map(|&v| (v - mean[c]) * (v - mean[c]))
                .sum::<f64>();
        }
    }
    for v in &mut var {
        *v /= n;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let xhat: Vec<Vec<f64>> = conv_out
        .iter()
        .map(|sample| {
            let mut x = vec![0.0f64; sample.len()];
            for c in 0..out_ch {
                for j in 0..plane {
                    x[c * plane + j] = (sample[c * plane + j] - mean[c]) * inv_std[c];
                }
            }
            x
        })
        .collect();
    (xhat, inv_std, mean, var)
}

fn scale_shift_relu(xhat: &[f64], out_ch: usize, plane: usize, scale: &[f32], shift: &[f32]) -> Vec<f64> {
    let mut out = vec![0.0f64; xhat.len()];
    for c in 0..out_ch {
        let g = scale[c] as f64;
        let b = shift[c] as f64;
        for j in 0..plane {
            let y = g * xhat[c * plane + j] + b;
            out[c * plane + j] = if y > 0.0 { y } else { 0.0 };
        }
    }
    out
}

fn max_pool(input: &[f64], ch: usize, in_side: usize) -> (Vec<f64>, Vec<u32>) {
    let out_side = in_side / 2;
    let mut out = vec![0.0f64; ch * out_side * out_side];
    let mut argmax = vec![0u32; ch * out_side * out_side];
    for c in 0..ch {
        for y in 0..out_side {
            for x in 0..out_side {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0u32;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = c * in_side * in_side + (2 * y + dy) * in_side + (2 * x + dx);
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx as u32;
                        }
                    }
                }
                out[c * out_side * out_side + y * out_side + x] = best;
                argmax[c * out_side * out_side + y * out_side + x] = best_idx;
            }
        }
    }
    (out, argmax)
}

/// Inference forward pass: batch norm uses running statistics. Returns one
/// raw scalar per patch.
pub fn infer_raw(weights: &WeightsBundle, patches: &[Patch]) -> Result<Vec<f64>> {
    if patches.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    weights.validate()?;
    let arch = weights.arch;
    let out_ch = arch.channels();
    let chunks: Vec<Vec<f64>> = patches
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|patch| {
                    let mut act = patch_to_f64(patch);
                    for b in 0..5 {
                        let in_ch = arch.in_channels()[b];
                        let in_side = BLOCK_IN_SIDE[b];
                        let pad = if b == 4 { 0 } else { 1 };
                        let conv = conv_forward(
                            &act,
                            in_ch,
                            in_side,
                            &weights.conv[b].kernel,
                            &weights.conv[b].bias,
                            out_ch[b],
                            pad,
                        );
                        let conv_side = in_side + 2 * pad - 2;
                        let plane = conv_side * conv_side;
                        let block = &weights.conv[b];
                        let mut y = vec![0.0f64; conv.len()];
                        for c in 0..out_ch[b] {
                            let inv = 1.0 / ((block.bn_var[c] as f64) + BN_EPS).sqrt();
                            let g = block.bn_scale[c] as f64;
                            let bb = block.bn_shift[c] as f64;
                            let m = block.bn_mean[c] as f64;
                            for j in 0..plane {
                                let v = g * (conv[c * plane + j] - m) * inv + bb;
                                y[c * plane + j] = if v > 0.0 { v } else { 0.0 };
                            }
                        }
                        act = if BLOCK_POOLED[b] {
                            max_pool(&y, out_ch[b], conv_side).0
                        } else {
                            y
                        };
                        debug_assert_eq!(
                            act.len(),
                            out_ch[b] * BLOCK_OUT_SIDE[b] * BLOCK_OUT_SIDE[b]
                        );
                    }
                    let mut v = weights.fc_bias as f64;
                    for (w, a) in weights.fc_weight.iter().zip(&act) {
                        v += (*w as f64) * a;
                    }
                    v
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let outputs: Vec<f64> = chunks.into_iter().flatten().collect();
    check_finite(&outputs, "fc")?;
    Ok(outputs)
}

/// Train-mode forward pass: batch norm uses batch statistics. Needs at
/// least two samples for a meaningful batch variance.
pub fn forward_train(weights: &WeightsBundle, patches: &[Patch]) -> Result<TrainForward> {
    if patches.len() < 2 {
        return Err(Error::invalid(format!(
            "train-mode forward needs a batch of >= 2, got {}",
            patches.len()
        )));
    }
    weights.validate()?;
    let arch = weights.arch;
    let out_ch = arch.channels();
    let mut act: Vec<Vec<f64>> = patches.iter().map(patch_to_f64).collect();
    let mut blocks = Vec::with_capacity(5);
    for b in 0..5 {
        let in_side = BLOCK_IN_SIDE[b];
        let pad = if b == 4 { 0 } else { 1 };
        let conv_side = in_side + 2 * pad - 2;
        let plane = conv_side * conv_side;
        let conv_out = conv_all_samples(&act, weights, b);
        for s in &conv_out {
            check_finite(s, &format!("conv{}", b + 1))?;
        }
        let (xhat, inv_std, batch_mean, batch_var) = bn_train(&conv_out, out_ch[b], plane);
        let relu: Vec<Vec<f64>> = xhat
            .iter()
            .map(|x| scale_shift_relu(x, out_ch[b], plane, &weights.conv[b].bn_scale, &weights.conv[b].bn_shift))
            .collect();
        let (out, argmax): (Vec<Vec<f64>>, Vec<Vec<u32>>) = if BLOCK_POOLED[b] {
            relu.iter()
                .map(|r| max_pool(r, out_ch[b], conv_side))
                .unzip()
        } else {
            (relu.clone(), vec![Vec::new(); relu.len()])
        };
        act = out.clone();
        blocks.push(BlockCache {
            xhat,
            inv_std,
            relu,
            argmax,
            out,
            batch_mean,
            batch_var,
        });
    }
    let fc_input = act;
    let outputs: Vec<f64> = fc_input
        .iter()
        .map(|x| {
            let mut v = weights.fc_bias as f64;
            for (w, a) in weights.fc_weight.iter().zip(x) {
                v += (*w as f64) * a;
            }
            v
        })
        .collect();
    check_finite(&outputs, "fc")?;
    Ok(TrainForward {
        outputs,
        blocks,
        fc_input,
    })
}

/// Fold the batch statistics of a train-mode forward into the bundle's
/// running statistics, with the given momentum.
pub fn apply_running_update(weights: &mut WeightsBundle, fwd: &TrainForward, momentum: f64) {
    for b in 0..5 {
        let (mean, var) = fwd.batch_stats(b);
        let block = &mut weights.conv[b];
        for c in 0..mean.len() {
            let m = block.bn_mean[c] as f64;
            let v = block.bn_var[c] as f64;
            block.bn_mean[c] = ((1.0 - momentum) * m + momentum * mean[c]) as f32;
            block.bn_var[c] = ((1.0 - momentum) * v + momentum * var[c]) as f32;
        }
    }
}

/// MSE loss over the batch and gradients for every trainable parameter.
/// `labels` must already be scaled to the training target range.
pub fn backward(
    weights: &WeightsBundle,
    fwd: &TrainForward,
    patches: &[Patch],
    labels: &[f64],
) -> Result<(f64, GradBuffers)> {
    let batch = fwd.outputs.len();
    if labels.len() != batch || patches.len() != batch {
        return Err(Error::invalid("labels/patches do not match batch size"));
    }
    let arch = weights.arch;
    let out_ch = arch.channels();
    let inv_batch = 1.0 / batch as f64;
    let loss = fwd
        .outputs
        .iter()
        .zip(labels)
        .map(|(p, l)| (p - l) * (p - l))
        .sum::<f64>()
        * inv_batch;

    let mut grads = GradBuffers::zeros(arch);

    // FC backward.
    let d_pred: Vec<f64> = fwd
        .outputs
        .iter()
        .zip(labels)
        .map(|(p, l)| 2.0 * (p - l) * inv_batch)
        .collect();
    for (s, dp) in d_pred.iter().enumerate() {
        grads.fc_bias += dp;
        for (gw, a) in grads.fc_weight.iter_mut().zip(&fwd.fc_input[s]) {
            *gw += dp * a;
        }
    }
    // Gradient flowing into the last block's output, per sample.
    let mut d_out: Vec<Vec<f64>> = d_pred
        .iter()
        .map(|dp| weights.fc_weight.iter().map(|&w| (w as f64) * dp).collect())
        .collect();

    for b in (0..5).rev() {
        let cache = &fwd.blocks[b];
        let in_side = BLOCK_IN_SIDE[b];
        let pad = if b == 4 { 0 } else { 1 };
        let conv_side = in_side + 2 * pad - 2;
        let plane = conv_side * conv_side;
        let ch = out_ch[b];

        // Pool backward: scatter into pre-pool positions.
        let d_relu: Vec<Vec<f64>> = if BLOCK_POOLED[b] {
            d_out
                .iter()
                .enumerate()
                .map(|(s, d)| {
                    let mut dr = vec![0.0f64; ch * plane];
                    for (j, &src) in cache.argmax[s].iter().enumerate() {
                        dr[src as usize] += d[j];
                    }
                    dr
                })
                .collect()
        } else {
            d_out
        };

        // ReLU backward.
        let d_bn_out: Vec<Vec<f64>> = d_relu
            .iter()
            .enumerate()
            .map(|(s, d)| {
                d.iter()
                    .zip(&cache.relu[s])
                    .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                    .collect()
            })
            .collect();

        // Batch-norm backward (batch statistics couple all samples).
        let n = (batch * plane) as f64;
        let mut sum_dxhat = vec![0.0f64; ch];
        let mut sum_dxhat_xhat = vec![0.0f64; ch];
        for s in 0..batch {
            for c in 0..ch {
                let g = weights.conv[b].bn_scale[c] as f64;
                for j in 0..plane {
                    let dy = d_bn_out[s][c * plane + j];
                    let xh = cache.xhat[s][c * plane + j];
                    grads.bn_shift[b][c] += dy;
                    grads.bn_scale[b][c] += dy * xh;
                    sum_dxhat[c] += dy * g;
                    sum_dxhat_xhat[c] += dy * g * xh;
                }
            }
        }
        let d_conv: Vec<Vec<f64>> = d_bn_out
            .iter()
            .enumerate()
            .map(|(s, d)| {
                let mut dc = vec![0.0f64; ch * plane];
                for c in 0..ch {
                    let g = weights.conv[b].bn_scale[c] as f64;
                    let inv = cache.inv_std[c];
                    for j in 0..plane {
                        let dxhat = d[c * plane + j] * g;
                        let xh = cache.xhat[s][c * plane + j];
                        dc[c * plane + j] = inv
                            * (dxhat - sum_dxhat[c] / n - xh * sum_dxhat_xhat[c] / n);
                    }
                }
                dc
            })
            .collect();

        // Conv backward, chunked for deterministic parallel accumulation.
        let conv_inputs: Vec<Vec<f64>> = if b == 0 {
            patches.iter().map(patch_to_f64).collect()
        } else {
            fwd.blocks[b - 1].out.clone()
        };
        let in_ch = arch.in_channels()[b];
        let want_d_input = b > 0;
        struct ChunkOut {
            d_kernel: Vec<f64>,
            d_bias: Vec<f64>,
            d_inputs: Vec<Vec<f64>>,
        }
        let chunk_results: Vec<ChunkOut> = conv_inputs
            .par_chunks(CHUNK)
            .zip(d_conv.par_chunks(CHUNK))
            .map(|(inputs, douts)| {
                let mut d_kernel = vec![0.0f64; ch * in_ch * 9];
                let mut d_bias = vec![0.0f64; ch];
                let mut d_inputs = Vec::with_capacity(inputs.len());
                for (input, dout) in inputs.iter().zip(douts) {
                    let di = conv_backward(
                        input,
                        dout,
                        in_ch,
                        in_side,
                        &weights.conv[b].kernel,
                        ch,
                        pad,
                        &mut d_kernel,
                        &mut d_bias,
                        want_d_input,
                    );
                    d_inputs.push(di.unwrap_or_default());
                }
                ChunkOut {
                    d_kernel,
                    d_bias,
                    d_inputs,
                }
            })
            .collect();
        let mut d_input_all = Vec::with_capacity(batch);
        for chunk in chunk_results {
            for (a, v) in grads.kernel[b].iter_mut().zip(&chunk.d_kernel) {
                *a += v;
            }
            for (a, v) in grads.bias[b].iter_mut().zip(&chunk.d_bias) {
                *a += v;
            }
            d_input_all.extend(chunk.d_inputs);
        }
        d_out = d_input_all;
    }

    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::arch::CnnArchitecture;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_patch(rng: &mut ChaCha8Rng) -> Patch {
        let data: Vec<f32> = (0..Patch::LEN).map(|_| rng.gen::<f32>()).collect();
        Patch::from_vec(data).unwrap()
    }

    #[test]
    fn zero_network_outputs_fc_bias() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let mut w = WeightsBundle::zeros(arch);
        w.fc_bias = 0.625;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let patches = vec![random_patch(&mut rng), random_patch(&mut rng)];
        let out = infer_raw(&w, &patches).unwrap();
        for v in out {
            assert!((v - 0.625).abs() < 1e-12);
        }
    }

    #[test]
    fn infer_is_deterministic_for_duplicates() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let w = WeightsBundle::init(arch, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_patch(&mut rng);
        let out = infer_raw(&w, &[p.clone(), p.clone(), p]).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(out[1], out[2]);
    }

    #[test]
    fn activation_shapes_follow_the_block_table() {
        // 13x13 -> 13x13 -> 6x6 -> 3x3 -> 3x3 -> 1x1 and channel growth.
        let arch = CnnArchitecture::full();
        assert_eq!(arch.channels(), [64, 128, 256, 512, 1024]);
        assert_eq!(BLOCK_OUT_SIDE, [13, 6, 3, 3, 1]);
        // And the reduced net actually runs with those dims end to end.
        let arch = CnnArchitecture::reduced(8).unwrap();
        let w = WeightsBundle::init(arch, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let patches = vec![random_patch(&mut rng), random_patch(&mut rng)];
        let fwd = forward_train(&w, &patches).unwrap();
        for (b, cache) in fwd.blocks.iter().enumerate() {
            let side = BLOCK_OUT_SIDE[b];
            assert_eq!(cache.out[0].len(), arch.channels()[b] * side * side, "block {b}");
        }
        assert_eq!(fwd.outputs().len(), 2);
    }

    #[test]
    fn train_mode_needs_two_samples() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let w = WeightsBundle::init(arch, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(forward_train(&w, &[random_patch(&mut rng)]).is_err());
        assert!(infer_raw(&w, &[]).is_err());
    }

    #[test]
    fn perfect_prediction_gives_zero_loss_and_fc_grads() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let w = WeightsBundle::init(arch, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let patches = vec![random_patch(&mut rng), random_patch(&mut rng)];
        let fwd = forward_train(&w, &patches).unwrap();
        let labels: Vec<f64> = fwd.outputs().to_vec();
        let (loss, grads) = backward(&w, &fwd, &patches, &labels).unwrap();
        assert!(loss.abs() < 1e-18);
        assert!(grads.fc_weight.iter().all(|&g| g == 0.0));
        assert_eq!(grads.fc_bias, 0.0);
    }

    #[test]
    fn identical_inputs_with_opposite_labels_floor_the_loss() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let w = WeightsBundle::init(arch, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_patch(&mut rng);
        let fwd = forward_train(&w, &[p.clone(), p.clone()]).unwrap();
        let (loss, _) = backward(&w, &fwd, &[p.clone(), p], &[1.0, -1.0]).unwrap();
        // Identical predictions against labels +-1 cannot beat loss 1.
        assert!(loss >= 1.0 - 1e-12, "loss {loss}");
    }

    #[test]
    fn relu_outputs_are_nonnegative() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let w = WeightsBundle::init(arch, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let patches = vec![random_patch(&mut rng), random_patch(&mut rng)];
        let fwd = forward_train(&w, &patches).unwrap();
        for cache in &fwd.blocks {
            for sample in &cache.relu {
                assert!(sample.iter().all(|&v| v >= 0.0));
            }
        }
    }

    fn batch_loss(w: &WeightsBundle, patches: &[Patch], labels: &[f64]) -> f64 {
        let fwd = forward_train(w, patches).unwrap();
        fwd.outputs()
            .iter()
            .zip(labels)
            .map(|(p, l)| (p - l) * (p - l))
            .sum::<f64>()
            / labels.len() as f64
    }

    /// Central-difference probes on a handful of parameters in every
    /// tensor. The loss is piecewise smooth (ReLU, max pooling), so each
    /// probe window is validated by step halving: a window containing a
    /// kink gives inconsistent difference quotients and is skipped. A
    /// systematically wrong analytic gradient still fails, because valid
    /// windows agree with the true derivative. The full per-layer sweep
    /// lives in the acceptance suite.
    #[test]
    fn analytic_gradients_match_finite_differences() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let w = WeightsBundle::init(arch, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let patches: Vec<Patch> = (0..4).map(|_| random_patch(&mut rng)).collect();
        let labels: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fwd = forward_train(&w, &patches).unwrap();
        let (_, grads) = backward(&w, &fwd, &patches, &labels).unwrap();

        // Parameters live in f32, so the achieved perturbation is the
        // rounded difference, not 2*eps; divide by the exact delta.
        let fd_at = |w: &WeightsBundle, set: &dyn Fn(&mut WeightsBundle, f32), base: f64, eps: f64| {
            let mut wp = w.clone();
            let mut wm = w.clone();
            let vp = (base + eps) as f32;
            let vm = (base - eps) as f32;
            set(&mut wp, vp);
            set(&mut wm, vm);
            let delta = vp as f64 - vm as f64;
            (batch_loss(&wp, &patches, &labels) - batch_loss(&wm, &patches, &labels)) / delta
        };
        let mut checked = 0usize;
        let mut skipped = 0usize;
        let mut check = |set: &dyn Fn(&mut WeightsBundle, f32), base: f64, g: f64, what: String| {
            let fd1 = fd_at(&w, set, base, 1e-6);
            let fd2 = fd_at(&w, set, base, 5e-7);
            let consistent = (fd1 - fd2).abs() / fd1.abs().max(fd2.abs()).max(1e-8) < 1e-5;
            if !consistent {
                skipped += 1;
                return;
            }
            let rel = (fd1 - g).abs() / fd1.abs().max(g.abs()).max(1e-8);
            assert!(rel < 1e-4, "{what}: fd {fd1} vs analytic {g} (rel {rel})");
            checked += 1;
        };
        for b in 0..5 {
            let kernel_len = w.conv[b].kernel.len();
            for probe in 0..4 {
                let idx = (probe * 7919 + b * 131) % kernel_len;
                check(
                    &|w, v| w.conv[b].kernel[idx] = v,
                    w.conv[b].kernel[idx] as f64,
                    grads.kernel[b][idx],
                    format!("conv{} kernel[{idx}]", b + 1),
                );
            }
            let ch = w.conv[b].bn_scale.len();
            let idx = (b * 11) % ch;
            check(
                &|w, v| w.conv[b].bn_scale[idx] = v,
                w.conv[b].bn_scale[idx] as f64,
                grads.bn_scale[b][idx],
                format!("conv{} bn_scale[{idx}]", b + 1),
            );
            check(
                &|w, v| w.conv[b].bn_shift[idx] = v,
                w.conv[b].bn_shift[idx] as f64,
                grads.bn_shift[b][idx],
                format!("conv{} bn_shift[{idx}]", b + 1),
            );
        }
        for idx in [0usize, 63, 127] {
            check(
                &|w, v| w.fc_weight[idx] = v,
                w.fc_weight[idx] as f64,
                grads.fc_weight[idx],
                format!("fc weight[{idx}]"),
            );
        }
        check(&|w, v| w.fc_bias = v, w.fc_bias as f64, grads.fc_bias, "fc bias".into());
        assert!(checked >= 25, "only {checked} valid probes ({skipped} kinked windows)");
    }

    /// Standalone conv layer: d_input and d_kernel against finite
    /// differences on a quadratic loss (no ReLU kinks anywhere).
    #[test]
    fn conv_backward_standalone_probe() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (in_ch, in_side, out_ch, pad) = (3usize, 7usize, 4usize, 1usize);
        let out_side = in_side + 2 * pad - 2;
        let input: Vec<f64> = (0..in_ch * in_side * in_side).map(|_| rng.gen::<f64>()).collect();
        let kernel: Vec<f32> = (0..out_ch * in_ch * 9).map(|_| rng.gen_range(-0.5..0.5f32)).collect();
        let bias: Vec<f32> = (0..out_ch).map(|_| rng.gen_range(-0.1..0.1f32)).collect();
        let target: Vec<f64> = (0..out_ch * out_side * out_side).map(|_| rng.gen::<f64>()).collect();
        let loss_of = |input: &[f64], kernel: &[f32]| -> f64 {
            let out = conv_forward(input, in_ch, in_side, kernel, &bias, out_ch, pad);
            out.iter().zip(&target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>()
        };
        let out = conv_forward(&input, in_ch, in_side, &kernel, &bias, out_ch, pad);
        let d_out: Vec<f64> = out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect();
        let mut d_kernel = vec![0.0; kernel.len()];
        let mut d_bias = vec![0.0; out_ch];
        let d_input = conv_backward(&input, &d_out, in_ch, in_side, &kernel, out_ch, pad,
            &mut d_kernel, &mut d_bias, true).unwrap();
        let eps = 1e-5;
        for idx in [0usize, 17, 50, input.len() - 1] {
            let mut ip = input.clone();
            let mut im = input.clone();
            ip[idx] += eps;
            im[idx] -= eps;
            let fd = (loss_of(&ip, &kernel) - loss_of(&im, &kernel)) / (2.0 * eps);
            let rel = (fd - d_input[idx]).abs() / fd.abs().max(d_input[idx].abs()).max(1e-12);
            assert!(rel < 1e-7, "d_input[{idx}]: fd {fd} vs {} rel {rel:.2e}", d_input[idx]);
        }
        for idx in [0usize, 8, 35, kernel.len() - 1] {
            let mut kp = kernel.clone();
            let mut km = kernel.clone();
            kp[idx] += eps as f32;
            km[idx] -= eps as f32;
            let delta = kp[idx] as f64 - km[idx] as f64;
            let fd = (loss_of(&input, &kp) - loss_of(&input, &km)) / delta;
            let rel = (fd - d_kernel[idx]).abs() / fd.abs().max(d_kernel[idx].abs()).max(1e-12);
            assert!(rel < 1e-4, "d_kernel[{idx}]: fd {fd} vs {} rel {rel:.2e}", d_kernel[idx]);
        }
    }


    #[test]
    #[ignore]
    fn bench_train_throughput() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let w = WeightsBundle::init(arch, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let patches: Vec<Patch> = (0..64).map(|_| random_patch(&mut rng)).collect();
        let labels: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = std::time::Instant::now();
        let n = 20;
        for _ in 0..n {
            let fwd = forward_train(&w, &patches).unwrap();
            let _ = backward(&w, &fwd, &patches, &labels).unwrap();
        }
        let per_batch = t.elapsed() / n;
        eprintln!("fwd+bwd batch64 div8: {per_batch:?} -> {:.1} samples/s", 64.0 / per_batch.as_secs_f64());
        let t = std::time::Instant::now();
        for _ in 0..n {
            let _ = infer_raw(&w, &patches).unwrap();
        }
        eprintln!("infer batch64 div8: {:?}", t.elapsed() / n);
    }

    #[test]
    fn infer_is_pure_given_running_stats() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let w = WeightsBundle::init(arch, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = vec![random_patch(&mut rng)];
        let a = infer_raw(&w, &p).unwrap();
        let b = infer_raw(&w, &p).unwrap();
        assert_eq!(a, b);
    }
}
