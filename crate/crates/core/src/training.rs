//! Supervised training of [`GruNetwork`]s.
//!
//! Sequences are cut into overlapping windows. A mini-batch of windows is
//! processed in chunks of `tbptt_chunk` samples: each chunk is a full
//! backpropagation-through-time pass followed by one optimizer step, and the
//! hidden state at the end of a chunk seeds the next chunk of the same
//! window without carrying gradient.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_sequence, AugmentConfig, StandardizationStats};
use crate::error::{invalid, Error, Result};
use crate::eval::{motion_mask, rmse_deg};
use crate::gru::{cell_backward, normalize_output, sequence_inputs, CellCache, GruNetwork, NetConfig, NetInput, NetState};
use crate::quat::{deg_to_rad, Quaternion, Vec3};
use crate::resample::{rate_grid, resample_sequence, RateGridStrategy};
use crate::rng::{derive_seed, rng_from_seed, standard_normal};
use crate::sim::ImuSequence;
use crate::{gru::NetworkEstimator, pool, Estimator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Architecture used when training starts from scratch.
    pub net: NetConfig,
    /// Window length, samples.
    pub window_len: usize,
    /// Offset between consecutive windows, samples.
    pub stride: usize,
    /// Samples per backpropagation pass and optimizer step.
    pub tbptt_chunk: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_lr: f64,
    /// Global gradient-norm limit.
    pub grad_clip: f64,
    /// Margin below 1 for the arccos argument in the loss.
    pub clamp_eps: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Rates every training sequence is resampled to (time-aware networks).
    pub rate_strategy: Option<RateGridStrategy>,
    /// Std of the turn-on bias added to the second copy of each validation
    /// sequence, rad/s.
    pub val_bias_std: f64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            net: NetConfig::default(),
            window_len: 800,
            stride: 400,
            tbptt_chunk: 200,
            batch_size: 16,
            epochs: 50,
            max_lr: 3e-3,
            grad_clip: 10.0,
            clamp_eps: 1e-12,
            seed: 0,
            augment: AugmentConfig::default(),
            rate_strategy: None,
            val_bias_std: deg_to_rad(0.5),
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.stride == 0 || self.tbptt_chunk == 0 || self.batch_size == 0 {
            return Err(invalid("window_len, stride, tbptt_chunk and batch_size must be positive"));
        }
        if self.tbptt_chunk > self.window_len {
            return Err(invalid("tbptt_chunk must not exceed window_len"));
        }
        if self.stride > self.window_len {
            return Err(invalid("stride must not exceed window_len"));
        }
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(invalid("max_lr must be positive"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(invalid("grad_clip must be positive"));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(invalid("clamp_eps must be a small positive number"));
        }
        if !(self.val_bias_std >= 0.0) {
            return Err(invalid("val_bias_std must be non-negative"));
        }
        self.augment.validate()
    }
}

/// One training window.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub inputs: Vec<NetInput>,
    pub truth: Vec<Quaternion>,
    pub mask: Vec<bool>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn window_of(seq: &ImuSequence, inputs: &[NetInput], start: usize, len: usize) -> Result<Window> {
    Ok(Window {
        inputs: inputs[start..start + len].to_vec(),
        truth: seq.truth()?[start..start + len].to_vec(),
        mask: seq.valid[start..start + len].to_vec(),
    })
}

/// Windows at offsets `0, stride, 2·stride, …` that fit into each sequence.
pub fn make_windows(sequences: &[ImuSequence], window_len: usize, stride: usize) -> Result<Vec<Window>> {
    if window_len == 0 || stride == 0 {
        return Err(invalid("window length and stride must be positive"));
    }
    let mut out = Vec::new();
    for seq in sequences {
        if seq.len() < window_len {
            return Err(invalid(format!(
                "sequence {} has {} samples, shorter than the window ({window_len})",
                seq.name,
                seq.len()
            )));
        }
        let inputs = sequence_inputs(seq);
        let mut start = 0;
        while start + window_len <= seq.len() {
            out.push(window_of(seq, &inputs, start, window_len)?);
            start += stride;
        }
    }
    Ok(out)
}

/// Like [`make_windows`], but a sequence shorter than the window becomes a
/// single window of its own length.
fn windows_lenient(sequences: &[ImuSequence], window_len: usize, stride: usize) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for seq in sequences {
        if seq.len() < window_len {
            out.push(window_of(seq, &sequence_inputs(seq), 0, seq.len())?);
        } else {
            out.extend(make_windows(std::slice::from_ref(seq), window_len, stride)?);
        }
    }
    Ok(out)
}

/// Tilt part of the error between `truth` and a unit `p`: `(w, z)` of
/// `truth ⊗ p⁻¹` and their derivatives with respect to `p`.
fn error_wz(t: Quaternion, p: [f64; 4]) -> (f64, f64, [f64; 4], [f64; 4]) {
    let [a0, a1, a2, a3] = t.to_array();
    let w = a0 * p[0] + a1 * p[1] + a2 * p[2] + a3 * p[3];
    let z = a3 * p[0] + a2 * p[1] - a1 * p[2] - a0 * p[3];
    (w, z, [a0, a1, a2, a3], [a3, a2, -a1, -a0])
}

fn unit(q: Quaternion) -> Result<([f64; 4], f64)> {
    let n = q.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid("prediction with zero or non-finite norm"));
    }
    let a = q.to_array();
    Ok(([a[0] / n, a[1] / n, a[2] / n, a[3] / n], n))
}

fn check_lengths(pred: &[Quaternion], truth: &[Quaternion], mask: &[bool]) -> Result<usize> {
    if pred.len() != truth.len() || mask.len() != truth.len() {
        return Err(invalid("prediction, truth and mask lengths differ"));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::AllMasked);
    }
    Ok(n)
}

/// Squared attitude error of one sample with the arccos argument clamped to
/// `1 − clamp_eps`, and its derivative with respect to the clamped argument.
fn sample_loss(w: f64, z: f64, clamp_eps: f64) -> (f64, f64, f64) {
    let a_raw = (w * w + z * z).sqrt();
    let limit = 1.0 - clamp_eps;
    let a = a_raw.min(limit);
    let e = 2.0 * a.acos();
    // the clamp has zero slope where it is active
    let de2_da = if a_raw >= limit { 0.0 } else { -4.0 * e / (1.0 - a * a).sqrt() };
    (e * e, de2_da, a_raw)
}

/// Mean squared attitude error in rad² over the unmasked samples.
/// Predictions are normalized first.
pub fn loss_mse_att(pred: &[Quaternion], truth: &[Quaternion], mask: &[bool], clamp_eps: f64) -> Result<f64> {
    let n = check_lengths(pred, truth, mask)?;
    let mut sum = 0.0;
    for ((p, t), _) in pred.iter().zip(truth).zip(mask).filter(|(_, &m)| m) {
        let (p, _) = unit(*p)?;
        let (w, z, _, _) = error_wz(*t, p);
        sum += sample_loss(w, z, clamp_eps).0;
    }
    Ok(sum / n as f64)
}

/// Gradient of [`loss_mse_att`] with respect to the raw (unnormalized)
/// prediction components.
pub fn loss_gradient(
    pred: &[Quaternion],
    truth: &[Quaternion],
    mask: &[bool],
    clamp_eps: f64,
) -> Result<Vec<[f64; 4]>> {
    let n = check_lengths(pred, truth, mask)?;
    let mut out = vec![[0.0; 4]; pred.len()];
    let (_, grads) = loss_terms(pred, truth, mask, clamp_eps)?;
    for (o, g) in out.iter_mut().zip(grads) {
        *o = g.map(|v| v / n as f64);
    }
    Ok(out)
}

/// Summed (not averaged) loss and per-sample gradients.
fn loss_terms(
    pred: &[Quaternion],
    truth: &[Quaternion],
    mask: &[bool],
    clamp_eps: f64,
) -> Result<(f64, Vec<[f64; 4]>)> {
    let mut sum = 0.0;
    let mut grads = vec![[0.0; 4]; pred.len()];
    for k in 0..pred.len() {
        if !mask[k] {
            continue;
        }
        let (p, norm) = unit(pred[k])?;
        let (w, z, dw, dz) = error_wz(truth[k], p);
        let (l, de2_da, a) = sample_loss(w, z, clamp_eps);
        sum += l;
        if a == 0.0 || de2_da == 0.0 {
            continue;
        }
        let gp: [f64; 4] = std::array::from_fn(|i| de2_da * (w * dw[i] + z * dz[i]) / a);
        // through the normalization p = o / |o|
        let along: f64 = (0..4).map(|i| gp[i] * p[i]).sum();
        grads[k] = std::array::from_fn(|i| (gp[i] - p[i] * along) / norm);
    }
    Ok((sum, grads))
}

/// Adam moments for every parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(net: &GruNetwork) -> Self {
        let shapes: Vec<usize> = net.tensors().iter().map(|(_, _, t)| t.len()).collect();
        AdamState {
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn update(&mut self, net: &mut GruNetwork, grads: &GruNetwork, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let gs = grads.tensors();
        for (i, (_, p)) in net.tensors_mut().into_iter().enumerate() {
            let g = gs[i].2;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
                p[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Cosine-annealed learning rate from `max_lr` at epoch 0 down to
/// `max_lr / 1000` at the last epoch.
pub fn cosine_lr(max_lr: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return max_lr;
    }
    let min_lr = max_lr * 1e-3;
    let frac = epoch as f64 / (epochs - 1) as f64;
    min_lr + 0.5 * (max_lr - min_lr) * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Forward and backward pass over `inputs` starting from `state`.
///
/// Returns the summed loss, the number of unmasked samples, the parameter
/// gradients of the summed loss, and the final state. A chunk without
/// unmasked samples yields zero gradients.
pub(crate) fn chunk_gradient(
    net: &GruNetwork,
    inputs: &[NetInput],
    truth: &[Quaternion],
    mask: &[bool],
    state: NetState,
    clamp_eps: f64,
) -> Result<(f64, usize, GruNetwork, NetState)> {
    let t_len = inputs.len();
    let n_cells = net.layer0.len() + 1;
    let mut st = state;
    let mut caches = vec![vec![CellCache::default(); n_cells]; t_len];
    let mut h1s = Vec::with_capacity(t_len);
    let mut raw = Vec::with_capacity(t_len);
    for (k, inp) in inputs.iter().enumerate() {
        let o = net.step_raw(inp, &mut st, Some(&mut caches[k]));
        h1s.push(st.h1.clone());
        raw.push(normalize_output(o, k).map(|_| Quaternion::new(o[0], o[1], o[2], o[3]))?);
    }
    let mut grads = net.zeros_like();
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Ok((0.0, 0, grads, st));
    }
    let (loss, d_out) = loss_terms(&raw, truth, mask, clamp_eps)?;

    let h = net.hidden();
    let h0_len: usize = net.layer0.iter().map(|l| l.hidden).sum();
    let mut dh1_next = vec![0.0; h];
    let mut dh0_next = vec![0.0; h0_len];
    for k in (0..t_len).rev() {
        let mut dh1 = dh1_next;
        let d = d_out[k];
        for r in 0..4 {
            if d[r] == 0.0 {
                continue;
            }
            let w = &net.head[r * h..(r + 1) * h];
            let g = &mut grads.head[r * h..(r + 1) * h];
            for j in 0..h {
                dh1[j] += w[j] * d[r];
                g[j] += d[r] * h1s[k][j];
            }
        }
        let mut dx1 = vec![0.0; h0_len];
        let mut dh1_prev = vec![0.0; h];
        let c1 = &caches[k][n_cells - 1];
        cell_backward(&net.layer1, c1, &dh1, &mut grads.layer1, &mut dx1, &mut dh1_prev);

        let mut dh0_prev = vec![0.0; h0_len];
        let mut off = 0;
        for (i, l) in net.layer0.iter().enumerate() {
            let seg = off..off + l.hidden;
            let dh0: Vec<f64> = dh0_next[seg.clone()].iter().zip(&dx1[seg.clone()]).map(|(a, b)| a + b).collect();
            let mut dx0 = vec![0.0; l.input_size];
            cell_backward(l, &caches[k][i], &dh0, &mut grads.layer0[i], &mut dx0, &mut dh0_prev[seg]);
            off += l.hidden;
        }
        dh1_next = dh1_prev;
        dh0_next = dh0_prev;
    }
    Ok((loss, count, grads, st))
}

fn add_into(acc: &mut GruNetwork, g: &GruNetwork) {
    let gs = g.tensors();
    for (i, (_, t)) in acc.tensors_mut().into_iter().enumerate() {
        for (a, b) in t.iter_mut().zip(gs[i].2) {
            *a += b;
        }
    }
}

fn scale_and_clip(g: &mut GruNetwork, scale: f64, clip: f64) -> f64 {
    let mut sq = 0.0;
    for (_, t) in g.tensors_mut() {
        for v in t.iter_mut() {
            *v *= scale;
            sq += *v * *v;
        }
    }
    let norm = sq.sqrt();
    if norm > clip {
        let f = clip / norm;
        for (_, t) in g.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= f);
        }
    }
    norm
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean squared attitude error over the epoch, rad².
    pub train_loss: Vec<f64>,
    /// Mean validation attitude RMSE, degrees; `None` without validation data.
    pub val_rmse_deg: Vec<Option<f64>>,
    pub lr: Vec<f64>,
}

impl TrainHistory {
    /// Epoch with the lowest validation RMSE, if any was recorded.
    pub fn best_epoch(&self) -> Option<usize> {
        self.val_rmse_deg
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

/// Resumable optimizer state, stored in checkpoint files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    /// Number of completed epochs.
    pub epoch: usize,
    pub adam: AdamState,
    pub history: TrainHistory,
    /// Best validation network so far, as a weight file.
    pub best: Option<serde_json::Value>,
}

pub fn save_checkpoint(net: &GruNetwork, state: &TrainingState, path: impl AsRef<Path>) -> Result<()> {
    let mut file = net.to_file();
    file.training_state = Some(serde_json::to_value(state)?);
    file.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(GruNetwork, Option<TrainingState>)> {
    let file = crate::gru::WeightFile::load(path)?;
    let net = GruNetwork::from_file(&file)?;
    let state = match file.training_state {
        Some(v) => Some(serde_json::from_value(v).map_err(|e| Error::WeightFormat(format!("training_state: {e}")))?),
        None => None,
    };
    Ok((net, state))
}

/// Each validation sequence once as is and once with a seeded constant gyro
/// bias.
pub fn validation_set(sequences: &[ImuSequence], bias_std: f64, seed: u64) -> Vec<ImuSequence> {
    let mut out = Vec::with_capacity(2 * sequences.len());
    for (i, seq) in sequences.iter().enumerate() {
        out.push(seq.clone());
        if bias_std > 0.0 {
            let mut rng = rng_from_seed(derive_seed(seed, 0x7A1_0000 + i as u64));
            let b = Vec3::new(standard_normal(&mut rng), standard_normal(&mut rng), standard_normal(&mut rng)) * bias_std;
            let mut biased = seq.clone();
            for s in &mut biased.samples {
                s.gyr += b;
            }
            biased.gyr_bias += b;
            biased.name = format!("{}+bias", seq.name);
            out.push(biased);
        }
    }
    out
}

/// Mean attitude RMSE of the network over the sequences, degrees.
pub fn validation_rmse(net: &GruNetwork, sequences: &[ImuSequence], threads: usize) -> Result<f64> {
    let est = NetworkEstimator {
        name: "val".into(),
        net: net.clone(),
    };
    let vals = pool::map(sequences, threads, |s| {
        let q = est.estimate(s)?;
        rmse_deg(&q, s.truth()?, &motion_mask(s))
    });
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(invalid("no validation sequences"));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Where and how often [`train_with`] writes checkpoints.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub checkpoint: Option<PathBuf>,
    /// Continue from a checkpointed state.
    pub resume: Option<TrainingState>,
    /// Print one progress line per epoch to stderr.
    pub verbose: bool,
}

/// Trains `net_init` on `train_data` and returns the network with the best
/// validation RMSE (the final network when there is no validation data).
///
/// Input standardization is refitted on `train_data`.
pub fn train(
    net_init: &GruNetwork,
    train_data: &[ImuSequence],
    val_data: &[ImuSequence],
    cfg: &TrainConfig,
) -> Result<(GruNetwork, TrainHistory)> {
    train_with(net_init, train_data, val_data, cfg, &TrainOptions::default())
}

pub fn train_with(
    net_init: &GruNetwork,
    train_data: &[ImuSequence],
    val_data: &[ImuSequence],
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<(GruNetwork, TrainHistory)> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(invalid("no training sequences"));
    }
    for s in train_data.iter().chain(val_data) {
        s.truth()?;
    }
    let mut net = net_init.clone();
    net.standardization = StandardizationStats::fit(train_data)?;

    // rate copies are built once; augmentation is redrawn every epoch
    let base: Vec<ImuSequence> = if net.time_aware {
        match &cfg.rate_strategy {
            Some(strategy) => {
                let rates = rate_grid(strategy)?;
                let mut v = Vec::with_capacity(train_data.len() * rates.len());
                for s in train_data {
                    for &r in &rates {
                        v.push(resample_sequence(s, r)?);
                    }
                }
                v
            }
            None => train_data.to_vec(),
        }
    } else {
        let native = net.native_rate_hz.ok_or_else(|| invalid("network has no native rate"))?;
        train_data
            .iter()
            .map(|s| resample_sequence(s, native))
            .collect::<Result<_>>()?
    };
    let val_set = validation_set(val_data, cfg.val_bias_std, derive_seed(cfg.seed, 0x7A1));

    let (mut adam, mut history, start_epoch, mut best) = match &opts.resume {
        Some(st) => {
            let best = match &st.best {
                Some(v) => Some(GruNetwork::from_file(
                    &serde_json::from_value(v.clone()).map_err(|e| Error::WeightFormat(e.to_string()))?,
                )?),
                None => None,
            };
            (st.adam.clone(), st.history.clone(), st.epoch, best)
        }
        None => (AdamState::new(&net), TrainHistory::default(), 0, None),
    };
    if adam.m.len() != net.tensors().len() {
        return Err(invalid("optimizer state does not match the network"));
    }

    for epoch in start_epoch..cfg.epochs {
        let lr = cosine_lr(cfg.max_lr, epoch, cfg.epochs);
        let epoch_seed = derive_seed(cfg.seed, epoch as u64);
        let augmented: Vec<ImuSequence> = base
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = rng_from_seed(derive_seed(epoch_seed, i as u64));
                augment_sequence(s, &cfg.augment, &mut rng)
            })
            .collect::<Result<_>>()?;
        let mut windows = windows_lenient(&augmented, cfg.window_len, cfg.stride)?;
        windows.shuffle(&mut rng_from_seed(derive_seed(epoch_seed, 0x5_4FF1E)));

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for (batch_idx, batch) in windows.chunks(cfg.batch_size).enumerate() {
            let mut states: Vec<NetState> = batch.iter().map(|_| net.initial_state()).collect();
            let longest = batch.iter().map(Window::len).max().unwrap_or(0);
            let mut start = 0;
            while start < longest {
                let jobs: Vec<(usize, usize, usize)> = batch
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| w.len() > start)
                    .map(|(i, w)| (i, start, (start + cfg.tbptt_chunk).min(w.len())))
                    .collect();
                let results = pool::map(&jobs, cfg.threads, |&(i, a, b)| {
                    let w = &batch[i];
                    chunk_gradient(
                        &net,
                        &w.inputs[a..b],
                        &w.truth[a..b],
                        &w.mask[a..b],
                        states[i].clone(),
                        cfg.clamp_eps,
                    )
                });
                let mut grads = net.zeros_like();
                let mut chunk_loss = 0.0;
                let mut chunk_count = 0;
                for (&(i, _, _), r) in jobs.iter().zip(results) {
                    let (l, n, g, st) = r.map_err(|e| match e {
                        Error::DegenerateOutput { .. } => Error::Diverged {
                            epoch,
                            batch: batch_idx,
                        },
                        other => other,
                    })?;
                    chunk_loss += l;
                    chunk_count += n;
                    add_into(&mut grads, &g);
                    states[i] = st;
                }
                start += cfg.tbptt_chunk;
                if chunk_count == 0 {
                    continue;
                }
                if !chunk_loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        batch: batch_idx,
                    });
                }
                let gnorm = scale_and_clip(&mut grads, 1.0 / chunk_count as f64, cfg.grad_clip);
                if !gnorm.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        batch: batch_idx,
                    });
                }
                adam.update(&mut net, &grads, lr);
                loss_sum += chunk_loss;
                loss_count += chunk_count;
            }
        }
        let train_loss = if loss_count > 0 { loss_sum / loss_count as f64 } else { f64::NAN };
        let val = if val_set.is_empty() {
            None
        } else {
            Some(validation_rmse(&net, &val_set, cfg.threads)?)
        };
        if let Some(v) = val {
            let improved = history.val_rmse_deg.iter().flatten().all(|&b| v < b);
            if improved {
                best = Some(net.clone());
            }
        }
        history.train_loss.push(train_loss);
        history.val_rmse_deg.push(val);
        history.lr.push(lr);
        if opts.verbose {
            let val_txt = val.map_or("-".into(), |v| format!("{v:.3}"));
            eprintln!(
                "epoch {:>4}  loss {:.6e}  val_rmse_deg {}  lr {:.3e}",
                epoch + 1,
                train_loss,
                val_txt,
                lr
            );
        }
        if let Some(path) = &opts.checkpoint {
            let state = TrainingState {
                epoch: epoch + 1,
                adam: adam.clone(),
                history: history.clone(),
                best: match &best {
                    Some(b) => Some(serde_json::to_value(b.to_file())?),
                    None => None,
                },
            };
            save_checkpoint(&net, &state, path)?;
        }
    }
    Ok((best.unwrap_or(net), history))
}
