//! Recurrent attitude network: two stacked GRU layers and a bias-free linear
//! head whose 4-vector output is normalized to a quaternion.
//!
//! Cell equations (gate order r, z, n in all stacked tensors):
//!
//! ```text
//! r  = σ(W_r x + b_ir + U_r h + b_hr)
//! z  = σ(W_z x + b_iz + U_z h + b_hz)
//! n  = tanh(W_n x + b_in + r ∘ (U_n h + b_hn))
//! h' = (1 − z) ∘ n + z ∘ h
//! ```
//!
//! The network input is the standardized `[gyr, acc]` vector, followed by
//! the sampling period in seconds (not standardized) for time-aware
//! networks. With grouped input, layer 0 is two half-width cells, one over
//! the gyro channels and one over the accelerometer channels, whose states
//! are concatenated.
//!
//! # Weight file
//!
//! A JSON document:
//!
//! ```text
//! {
//!   "format": "imu-attitude-gru",
//!   "version": 1,
//!   "cell": "gru-reset-after",
//!   "time_aware": bool,
//!   "grouped_input": bool,
//!   "native_rate_hz": number | null,
//!   "standardization": {"mean": [6 numbers], "std": [6 numbers]},
//!   "tensors": [{"name": str, "shape": [rows, cols] | [len], "data": nested arrays}, ...],
//!   "training_state": optional, written by checkpoints
//! }
//! ```
//!
//! Tensor names are `gru0.*` (or `gru0_gyr.*` and `gru0_acc.*` when
//! grouped), `gru1.*` with suffixes `weight_ih` `[3H, I]`, `weight_hh`
//! `[3H, H]`, `bias_ih` `[3H]`, `bias_hh` `[3H]`, and `head.weight` `[4, H]`.
//! Numbers are written so they parse back to the identical `f64`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::StandardizationStats;
use crate::error::{invalid, Error, Result};
use crate::estimator::{Estimator, InitPolicy};
use crate::quat::{Quaternion, Vec3};
use crate::resample::jitr_wrap;
use crate::rng::rng_from_seed;
use crate::sim::ImuSequence;

pub const FORMAT_NAME: &str = "imu-attitude-gru";
pub const FORMAT_VERSION: u32 = 1;
pub const CELL_VARIANT: &str = "gru-reset-after";

const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GruLayer {
    pub input_size: usize,
    pub hidden: usize,
    /// `[3H × I]`, row-major.
    pub weight_ih: Vec<f64>,
    /// `[3H × H]`, row-major.
    pub weight_hh: Vec<f64>,
    pub bias_ih: Vec<f64>,
    pub bias_hh: Vec<f64>,
}

impl GruLayer {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        GruLayer {
            input_size,
            hidden,
            weight_ih: vec![0.0; 3 * hidden * input_size],
            weight_hh: vec![0.0; 3 * hidden * hidden],
            bias_ih: vec![0.0; 3 * hidden],
            bias_hh: vec![0.0; 3 * hidden],
        }
    }

    /// Uniform initialization in ±1/√H.
    pub fn random<R: Rng + ?Sized>(input_size: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut l = Self::zeros(input_size, hidden);
        for v in l.tensors_mut() {
            v.iter_mut().for_each(|x| *x = rng.random_range(-k..k));
        }
        l
    }

    pub fn param_count(&self) -> usize {
        3 * self.hidden * (self.input_size + self.hidden) + 6 * self.hidden
    }

    fn tensors(&self) -> [&Vec<f64>; 4] {
        [&self.weight_ih, &self.weight_hh, &self.bias_ih, &self.bias_hh]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.weight_ih, &mut self.weight_hh, &mut self.bias_ih, &mut self.bias_hh]
    }

    fn check(&self) -> Result<()> {
        let (h, i) = (self.hidden, self.input_size);
        if h == 0 || i == 0 {
            return Err(invalid("layer sizes must be positive"));
        }
        let ok = self.weight_ih.len() == 3 * h * i
            && self.weight_hh.len() == 3 * h * h
            && self.bias_ih.len() == 3 * h
            && self.bias_hh.len() == 3 * h;
        if !ok {
            return Err(invalid("layer tensor sizes do not match its dimensions"));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out[r] = b[r] + Σ_c m[r, c] v[c]` for a row-major matrix.
fn affine(m: &[f64], v: &[f64], b: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Values kept from one cell step for backpropagation.
#[derive(Clone, Debug, Default)]
pub(crate) struct CellCache {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `U_n h + b_hn`
    pub hn: Vec<f64>,
}

pub(crate) fn cell_step(l: &GruLayer, x: &[f64], h: &[f64], cache: Option<&mut CellCache>) -> Vec<f64> {
    let hs = l.hidden;
    let mut gi = vec![0.0; 3 * hs];
    let mut gh = vec![0.0; 3 * hs];
    affine(&l.weight_ih, x, &l.bias_ih, &mut gi);
    affine(&l.weight_hh, h, &l.bias_hh, &mut gh);
    let mut out = vec![0.0; hs];
    let mut r = vec![0.0; hs];
    let mut z = vec![0.0; hs];
    let mut n = vec![0.0; hs];
    for j in 0..hs {
        r[j] = sigmoid(gi[j] + gh[j]);
        z[j] = sigmoid(gi[hs + j] + gh[hs + j]);
        n[j] = (gi[2 * hs + j] + r[j] * gh[2 * hs + j]).tanh();
        out[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
    }
    if let Some(c) = cache {
        c.x = x.to_vec();
        c.h = h.to_vec();
        c.hn = gh[2 * hs..].to_vec();
        c.r = r;
        c.z = z;
        c.n = n;
    }
    out
}

/// Reverse pass of [`cell_step`]: accumulates parameter gradients into `g`
/// and adds the input and previous-state gradients to `dx` and `dh_prev`.
pub(crate) fn cell_backward(
    l: &GruLayer,
    c: &CellCache,
    dh_out: &[f64],
    g: &mut GruLayer,
    dx: &mut [f64],
    dh_prev: &mut [f64],
) {
    let hs = l.hidden;
    let ins = l.input_size;
    // pre-activation gradients for the input side (r, z, n) and recurrent side
    let mut da_i = vec![0.0; 3 * hs];
    let mut da_h = vec![0.0; 3 * hs];
    for j in 0..hs {
        let d = dh_out[j];
        let (r, z, n) = (c.r[j], c.z[j], c.n[j]);
        dh_prev[j] += d * z;
        let dn = d * (1.0 - z) * (1.0 - n * n);
        let dz = d * (c.h[j] - n) * z * (1.0 - z);
        let dr = dn * c.hn[j] * r * (1.0 - r);
        da_i[j] = dr;
        da_i[hs + j] = dz;
        da_i[2 * hs + j] = dn;
        da_h[j] = dr;
        da_h[hs + j] = dz;
        da_h[2 * hs + j] = dn * r;
    }
    for row in 0..3 * hs {
        let a = da_i[row];
        g.bias_ih[row] += a;
        let w = &l.weight_ih[row * ins..(row + 1) * ins];
        let gw = &mut g.weight_ih[row * ins..(row + 1) * ins];
        for i in 0..ins {
            gw[i] += a * c.x[i];
            dx[i] += w[i] * a;
        }
        let a = da_h[row];
        g.bias_hh[row] += a;
        let w = &l.weight_hh[row * hs..(row + 1) * hs];
        let gw = &mut g.weight_hh[row * hs..(row + 1) * hs];
        for i in 0..hs {
            gw[i] += a * c.h[i];
            dh_prev[i] += w[i] * a;
        }
    }
}

/// Architecture of a new network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: usize,
    pub time_aware: bool,
    pub grouped_input: bool,
    /// Rate the network is meant to run at; required unless time-aware.
    pub native_rate_hz: Option<f64>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: 200,
            time_aware: true,
            grouped_input: false,
            native_rate_hz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruNetwork {
    /// One cell, or the gyro and accelerometer cells when grouped.
    pub layer0: Vec<GruLayer>,
    pub layer1: GruLayer,
    /// `[4 × H]`, row-major, no bias.
    pub head: Vec<f64>,
    pub time_aware: bool,
    pub grouped_input: bool,
    pub native_rate_hz: Option<f64>,
    pub standardization: StandardizationStats,
}

/// One network input sample in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetInput {
    pub gyr: Vec3,
    pub acc: Vec3,
    /// Sampling period, seconds; only read by time-aware networks.
    pub dt: f64,
}

/// Hidden states of both layers.
#[derive(Clone, Debug, PartialEq)]
pub struct NetState {
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
}

/// Network inputs for a sequence, using its nominal sampling period.
pub fn sequence_inputs(seq: &ImuSequence) -> Vec<NetInput> {
    let dt = 1.0 / seq.rate_hz;
    seq.samples
        .iter()
        .map(|s| NetInput {
            gyr: s.gyr,
            acc: s.acc,
            dt,
        })
        .collect()
}

impl GruNetwork {
    pub fn new(cfg: &NetConfig, stats: StandardizationStats, seed: u64) -> Result<Self> {
        if cfg.hidden == 0 {
            return Err(invalid("hidden size must be positive"));
        }
        if cfg.grouped_input && cfg.hidden % 2 != 0 {
            return Err(invalid("grouped input needs an even hidden size"));
        }
        let mut rng = rng_from_seed(seed);
        let extra = usize::from(cfg.time_aware);
        let h = cfg.hidden;
        let layer0 = if cfg.grouped_input {
            vec![
                GruLayer::random(3 + extra, h / 2, &mut rng),
                GruLayer::random(3 + extra, h / 2, &mut rng),
            ]
        } else {
            vec![GruLayer::random(6 + extra, h, &mut rng)]
        };
        let layer1 = GruLayer::random(h, h, &mut rng);
        let k = 1.0 / (h as f64).sqrt();
        let head = (0..4 * h).map(|_| rng.random_range(-k..k)).collect();
        let net = GruNetwork {
            layer0,
            layer1,
            head,
            time_aware: cfg.time_aware,
            grouped_input: cfg.grouped_input,
            native_rate_hz: cfg.native_rate_hz,
            standardization: stats,
        };
        net.check()?;
        Ok(net)
    }

    pub fn hidden(&self) -> usize {
        self.layer1.hidden
    }

    pub fn input_size(&self) -> usize {
        6 + usize::from(self.time_aware)
    }

    pub fn param_count(&self) -> usize {
        self.layer0.iter().map(GruLayer::param_count).sum::<usize>() + self.layer1.param_count() + self.head.len()
    }

    pub fn config(&self) -> NetConfig {
        NetConfig {
            hidden: self.hidden(),
            time_aware: self.time_aware,
            grouped_input: self.grouped_input,
            native_rate_hz: self.native_rate_hz,
        }
    }

    pub fn initial_state(&self) -> NetState {
        NetState {
            h0: vec![0.0; self.layer0.iter().map(|l| l.hidden).sum()],
            h1: vec![0.0; self.hidden()],
        }
    }

    /// A network of the same shape with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|(_, t)| t.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    /// Named parameter tensors with their shapes, in file order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        let mut out = Vec::new();
        for (prefix, l) in self.layer_names().into_iter().zip(self.layers()) {
            let (h, i) = (l.hidden, l.input_size);
            let shapes = [vec![3 * h, i], vec![3 * h, h], vec![3 * h], vec![3 * h]];
            for ((suffix, shape), t) in TENSOR_SUFFIXES.iter().zip(shapes).zip(l.tensors()) {
                out.push((format!("{prefix}.{suffix}"), shape, t));
            }
        }
        out.push(("head.weight".into(), vec![4, self.hidden()], &self.head));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let names = self.layer_names();
        let mut out = Vec::new();
        let (layer0, layer1, head) = (&mut self.layer0, &mut self.layer1, &mut self.head);
        for (prefix, l) in names.into_iter().zip(layer0.iter_mut().chain(std::iter::once(layer1))) {
            for (suffix, t) in TENSOR_SUFFIXES.iter().zip(l.tensors_mut()) {
                out.push((format!("{prefix}.{suffix}"), t));
            }
        }
        out.push(("head.weight".into(), head));
        out
    }

    fn layers(&self) -> impl Iterator<Item = &GruLayer> {
        self.layer0.iter().chain(std::iter::once(&self.layer1))
    }

    fn layer_names(&self) -> Vec<&'static str> {
        if self.grouped_input {
            vec!["gru0_gyr", "gru0_acc", "gru1"]
        } else {
            vec!["gru0", "gru1"]
        }
    }

    fn check(&self) -> Result<()> {
        let extra = usize::from(self.time_aware);
        let h = self.hidden();
        match (self.grouped_input, self.layer0.as_slice()) {
            (false, [l]) if l.input_size == 6 + extra && l.hidden == h => {}
            (true, [g, a]) if g.input_size == 3 + extra && a.input_size == 3 + extra && g.hidden + a.hidden == h => {}
            _ => return Err(invalid("layer 0 does not match the input arrangement")),
        }
        if self.layer1.input_size != h {
            return Err(invalid("layer 1 input size must equal layer 0 state size"));
        }
        for l in self.layers() {
            l.check()?;
        }
        if self.head.len() != 4 * h {
            return Err(invalid("head must be 4 × hidden"));
        }
        if !self.time_aware && !self.native_rate_hz.is_some_and(|r| r > 0.0 && r.is_finite()) {
            return Err(invalid("a network without time input needs a native rate"));
        }
        self.standardization.validate()
    }

    /// Standardized layer-0 input.
    pub(crate) fn input_vector(&self, inp: &NetInput) -> Vec<f64> {
        let mut x = self.standardization.apply_sample(inp.gyr, inp.acc).to_vec();
        if self.time_aware {
            x.push(inp.dt);
        }
        x
    }

    /// Layer-0 sub-inputs: the full vector, or gyro and accelerometer parts.
    pub(crate) fn layer0_inputs(&self, x: &[f64]) -> Vec<Vec<f64>> {
        if self.grouped_input {
            let dt = &x[6..];
            vec![
                x[0..3].iter().chain(dt).copied().collect(),
                x[3..6].iter().chain(dt).copied().collect(),
            ]
        } else {
            vec![x.to_vec()]
        }
    }

    /// Advances both layers by one sample and returns the raw head output.
    pub(crate) fn step_raw(
        &self,
        inp: &NetInput,
        state: &mut NetState,
        mut caches: Option<&mut [CellCache]>,
    ) -> [f64; 4] {
        let x = self.input_vector(inp);
        let mut h0 = Vec::with_capacity(state.h0.len());
        let mut off = 0;
        for (i, (l, xi)) in self.layer0.iter().zip(self.layer0_inputs(&x)).enumerate() {
            let c = caches.as_deref_mut().map(|c| &mut c[i]);
            h0.extend(cell_step(l, &xi, &state.h0[off..off + l.hidden], c));
            off += l.hidden;
        }
        let c = caches.map(|c| &mut c[self.layer0.len()]);
        let h1 = cell_step(&self.layer1, &h0, &state.h1, c);
        let h = h1.len();
        let mut o = [0.0; 4];
        for (r, o) in o.iter_mut().enumerate() {
            *o = self.head[r * h..(r + 1) * h].iter().zip(&h1).map(|(a, b)| a * b).sum();
        }
        state.h0 = h0;
        state.h1 = h1;
        o
    }

    /// Runs the network over `inputs`, starting from `state` or zeros, and
    /// returns the unit quaternions and the final state.
    pub fn forward(&self, inputs: &[NetInput], state: Option<NetState>) -> Result<(Vec<Quaternion>, NetState)> {
        let mut st = state.unwrap_or_else(|| self.initial_state());
        if st.h0.len() != self.initial_state().h0.len() || st.h1.len() != self.hidden() {
            return Err(invalid("hidden state does not match the network"));
        }
        let mut out = Vec::with_capacity(inputs.len());
        for (step, inp) in inputs.iter().enumerate() {
            let o = self.step_raw(inp, &mut st, None);
            out.push(normalize_output(o, step)?);
        }
        Ok((out, st))
    }

    pub fn forward_sequence(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
        Ok(self.forward(&sequence_inputs(seq), None)?.0)
    }

    pub fn to_file(&self) -> WeightFile {
        WeightFile {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            cell: CELL_VARIANT.into(),
            time_aware: self.time_aware,
            grouped_input: self.grouped_input,
            native_rate_hz: self.native_rate_hz,
            standardization: self.standardization.clone(),
            tensors: self
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| {
                    let data = if shape.len() == 2 {
                        serde_json::Value::from(data.chunks(shape[1]).map(|r| r.to_vec()).collect::<Vec<_>>())
                    } else {
                        serde_json::Value::from(data.clone())
                    };
                    TensorRecord { name, shape, data }
                })
                .collect(),
            training_state: None,
        }
    }

    pub fn from_file(file: &WeightFile) -> Result<Self> {
        let fail = |msg: String| Error::WeightFormat(msg);
        if file.format != FORMAT_NAME {
            return Err(fail(format!("unknown format {:?}", file.format)));
        }
        if file.version != FORMAT_VERSION {
            return Err(fail(format!(
                "unsupported version {} (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        if file.cell != CELL_VARIANT {
            return Err(fail(format!("unsupported cell variant {:?}", file.cell)));
        }
        let find = |name: &str| -> Result<(Vec<usize>, Vec<f64>)> {
            let t = file
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| fail(format!("missing tensor {name}")))?;
            let data = flatten(&t.data, &t.shape).map_err(|m| fail(format!("tensor {name}: {m}")))?;
            Ok((t.shape.clone(), data))
        };
        let names: &[&str] = if file.grouped_input {
            &["gru0_gyr", "gru0_acc", "gru1"]
        } else {
            &["gru0", "gru1"]
        };
        let extra = usize::from(file.time_aware);
        let mut layers = Vec::new();
        let mut expected_in = if file.grouped_input { 3 + extra } else { 6 + extra };
        for (idx, prefix) in names.iter().enumerate() {
            let (s_ih, w_ih) = find(&format!("{prefix}.weight_ih"))?;
            let (s_hh, w_hh) = find(&format!("{prefix}.weight_hh"))?;
            let (s_bi, b_ih) = find(&format!("{prefix}.bias_ih"))?;
            let (s_bh, b_hh) = find(&format!("{prefix}.bias_hh"))?;
            let name = |s: &str| format!("{prefix}.{s}");
            if s_ih.len() != 2 || s_ih[0] % 3 != 0 || s_ih[0] == 0 {
                return Err(fail(format!("tensor {}: shape {s_ih:?} is not [3H, I]", name("weight_ih"))));
            }
            let h = s_ih[0] / 3;
            if idx + 1 == names.len() {
                expected_in = layers.iter().map(|l: &GruLayer| l.hidden).sum();
            }
            if s_ih[1] != expected_in {
                return Err(fail(format!(
                    "tensor {}: input size {} but expected {expected_in}",
                    name("weight_ih"),
                    s_ih[1]
                )));
            }
            if s_hh != [3 * h, h] {
                return Err(fail(format!("tensor {}: shape {s_hh:?}, expected [{}, {h}]", name("weight_hh"), 3 * h)));
            }
            for (s, n) in [(&s_bi, "bias_ih"), (&s_bh, "bias_hh")] {
                if *s != [3 * h] {
                    return Err(fail(format!("tensor {}: shape {s:?}, expected [{}]", name(n), 3 * h)));
                }
            }
            layers.push(GruLayer {
                input_size: s_ih[1],
                hidden: h,
                weight_ih: w_ih,
                weight_hh: w_hh,
                bias_ih: b_ih,
                bias_hh: b_hh,
            });
        }
        let layer1 = layers.pop().expect("two layers");
        let (s_head, head) = find("head.weight")?;
        if s_head != [4, layer1.hidden] {
            return Err(fail(format!(
                "tensor head.weight: shape {s_head:?}, expected [4, {}]",
                layer1.hidden
            )));
        }
        let net = GruNetwork {
            layer0: layers,
            layer1,
            head,
            time_aware: file.time_aware,
            grouped_input: file.grouped_input,
            native_rate_hz: file.native_rate_hz,
            standardization: file.standardization.clone(),
        };
        net.check().map_err(|e| fail(e.to_string()))?;
        let enumerated: usize = net.tensors().iter().map(|(_, _, t)| t.len()).sum();
        debug_assert_eq!(enumerated, net.param_count());
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(&WeightFile::load(path)?)
    }
}

const TENSOR_SUFFIXES: [&str; 4] = ["weight_ih", "weight_hh", "bias_ih", "bias_hh"];

pub(crate) fn normalize_output(o: [f64; 4], step: usize) -> Result<Quaternion> {
    let q = Quaternion::new(o[0], o[1], o[2], o[3]);
    let norm = q.norm();
    if !(norm >= DEGENERATE_NORM) {
        return Err(Error::DegenerateOutput { step, norm });
    }
    Ok(Quaternion::new(o[0] / norm, o[1] / norm, o[2] / norm, o[3] / norm))
}

fn flatten(data: &serde_json::Value, shape: &[usize]) -> std::result::Result<Vec<f64>, String> {
    let num = |v: &serde_json::Value| -> std::result::Result<f64, String> {
        let x = v.as_f64().ok_or_else(|| format!("non-numeric entry {v}"))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err("non-finite value".into())
        }
    };
    let arr = |v: &serde_json::Value, len: usize, what: &str| -> std::result::Result<Vec<serde_json::Value>, String> {
        let a = v.as_array().ok_or_else(|| format!("{what} is not an array"))?;
        if a.len() != len {
            return Err(format!("{what} has {} entries but shape says {len}", a.len()));
        }
        Ok(a.clone())
    };
    match shape {
        [n] => arr(data, *n, "data")?.iter().map(num).collect(),
        [rows, cols] => {
            let mut out = Vec::with_capacity(rows * cols);
            for (i, row) in arr(data, *rows, "data")?.iter().enumerate() {
                for v in arr(row, *cols, &format!("row {i}"))? {
                    out.push(num(&v)?);
                }
            }
            Ok(out)
        }
        _ => Err(format!("unsupported shape {shape:?}")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: serde_json::Value,
}

/// On-disk form of a network, see the module docs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub format: String,
    pub version: u32,
    pub cell: String,
    pub time_aware: bool,
    pub grouped_input: bool,
    pub native_rate_hz: Option<f64>,
    pub standardization: StandardizationStats,
    pub tensors: Vec<TensorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_state: Option<serde_json::Value>,
}

impl WeightFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(crate::error::open_err(path))?;
        serde_json::from_str(&text).map_err(|e| Error::WeightFormat(e.to_string()))
    }
}

/// A trained network used as an estimator. Networks without time input run
/// at their native rate, with resampling around them when needed.
#[derive(Clone, Debug)]
pub struct NetworkEstimator {
    pub name: String,
    pub net: GruNetwork,
}

struct Direct<'a>(&'a GruNetwork);

impl Estimator for Direct<'_> {
    fn id(&self) -> String {
        "gru".into()
    }
    fn init_policy(&self) -> InitPolicy {
        InitPolicy::Learned
    }
    fn estimate(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
        self.0.forward_sequence(seq)
    }
}

impl Estimator for NetworkEstimator {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn init_policy(&self) -> InitPolicy {
        InitPolicy::Learned
    }

    fn estimate(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
        match self.net.native_rate_hz {
            Some(native) if !self.net.time_aware && native != seq.rate_hz => {
                jitr_wrap(&Direct(&self.net), native, seq)
            }
            _ => self.net.forward_sequence(seq),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;

    fn small(time_aware: bool, grouped: bool, h: usize) -> GruNetwork {
        let cfg = NetConfig {
            hidden: h,
            time_aware,
            grouped_input: grouped,
            native_rate_hz: Some(100.0),
        };
        GruNetwork::new(&cfg, StandardizationStats::default(), 5).unwrap()
    }

    fn inputs(n: usize, seed: u64) -> Vec<NetInput> {
        let mut rng = rng_from_seed(seed);
        let mut v = || Vec3::new(standard_normal(&mut rng), standard_normal(&mut rng), standard_normal(&mut rng));
        (0..n)
            .map(|_| NetInput {
                gyr: v(),
                acc: v() * 3.0,
                dt: 0.01,
            })
            .collect()
    }

    #[test]
    fn zero_cell() {
        let l = GruLayer::zeros(2, 1);
        let h = cell_step(&l, &[0.3, -0.7], &[1.0], None);
        assert_eq!(h, vec![0.5]);
    }

    #[test]
    fn saturated_update_gate_holds_state() {
        let mut l = GruLayer::random(3, 4, &mut rng_from_seed(1));
        for j in 4..8 {
            l.bias_ih[j] = 50.0;
        }
        let h = [0.3, -0.2, 0.9, -0.95];
        let out = cell_step(&l, &[1.0, -2.0, 0.5], &h, None);
        for (a, b) in out.iter().zip(h) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cell_output_is_bounded() {
        let mut rng = rng_from_seed(2);
        let l = GruLayer::random(4, 6, &mut rng);
        let mut h = vec![0.0; 6];
        for k in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| 10.0 * standard_normal(&mut rng)).collect();
            h = cell_step(&l, &x, &h, None);
            assert!(h.iter().all(|v| v.abs() < 1.0), "step {k}");
        }
    }

    #[test]
    fn hand_computed_two_unit_network() {
        // zero recurrent weights and biases, layer 0 sees only gyr x
        let mut net = small(false, false, 2);
        for (_, t) in net.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        let i0 = net.layer0[0].input_size;
        // n-gate rows (4, 5) of layer 0 read gyr x
        net.layer0[0].weight_ih[4 * i0] = 1.0;
        net.layer0[0].weight_ih[5 * i0] = -0.5;
        // layer 1 n-gate copies layer 0 state
        net.layer1.weight_ih[4 * 2] = 2.0;
        net.layer1.weight_ih[5 * 2 + 1] = 1.0;
        net.head = vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.0, -1.0];
        let inp = NetInput {
            gyr: Vec3::new(0.8, 0.0, 0.0),
            acc: Vec3::ZERO,
            dt: 0.01,
        };
        let (q, _) = net.forward(&[inp], None).unwrap();
        let h0 = [0.5 * 0.8f64.tanh(), 0.5 * (-0.4f64).tanh()];
        let h1 = [0.5 * (2.0 * h0[0]).tanh(), 0.5 * h0[1].tanh()];
        let o = [h1[0], h1[1], 0.5 * h1[0], -h1[1]];
        let n = o.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expected = [o[0] / n, o[1] / n, o[2] / n, o[3] / n];
        for (a, b) in q[0].to_array().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chained_states_match_single_pass() {
        for (ta, grouped) in [(false, false), (true, false), (true, true)] {
            let net = small(ta, grouped, 6);
            let x = inputs(80, 3);
            let (full, end) = net.forward(&x, None).unwrap();
            let (a, mid) = net.forward(&x[..37], None).unwrap();
            let (b, end2) = net.forward(&x[37..], Some(mid)).unwrap();
            assert_eq!([a, b].concat(), full);
            assert_eq!(end, end2);
            assert!(full.iter().all(|q| (q.norm() - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn degenerate_head_is_an_error() {
        let mut net = small(true, false, 4);
        net.head.iter_mut().for_each(|v| *v = 0.0);
        let err = net.forward(&inputs(3, 1), None).unwrap_err();
        assert!(matches!(err, Error::DegenerateOutput { step: 0, .. }));
    }

    #[test]
    fn parameter_count_of_full_size_network() {
        let net = GruNetwork::new(&NetConfig::default(), StandardizationStats::default(), 0).unwrap();
        assert_eq!(net.param_count(), 367_400);
        assert!((net.param_count() as f64 - 367_000.0).abs() / 367_000.0 < 0.01);
        let enumerated: usize = net.tensors().iter().map(|(_, _, t)| t.len()).sum();
        assert_eq!(enumerated, net.param_count());
    }

    #[test]
    fn weight_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for (ta, grouped) in [(false, false), (true, true)] {
            let net = small(ta, grouped, 6);
            let p1 = dir.path().join("a.json");
            let p2 = dir.path().join("b.json");
            net.save(&p1).unwrap();
            let back = GruNetwork::load(&p1).unwrap();
            assert_eq!(back, net);
            back.save(&p2).unwrap();
            assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        }
    }

    #[test]
    fn corrupted_weight_files() {
        let net = small(true, false, 4);
        let mut f = net.to_file();
        f.tensors[1].shape = vec![12, 5];
        let err = GruNetwork::from_file(&f).unwrap_err().to_string();
        assert!(err.contains("gru0.weight_hh"), "{err}");

        let mut f = net.to_file();
        f.version = 99;
        assert!(GruNetwork::from_file(&f).unwrap_err().to_string().contains("version"));

        let mut f = net.to_file();
        f.tensors.retain(|t| t.name != "head.weight");
        assert!(GruNetwork::from_file(&f).unwrap_err().to_string().contains("head.weight"));

        let mut f = net.to_file();
        f.tensors[2].data = serde_json::json!([1.0, 2.0]);
        assert!(GruNetwork::from_file(&f).unwrap_err().to_string().contains("gru0.bias_ih"));
    }

    #[test]
    fn non_time_aware_net_needs_rate() {
        let cfg = NetConfig {
            hidden: 4,
            time_aware: false,
            grouped_input: false,
            native_rate_hz: None,
        };
        assert!(GruNetwork::new(&cfg, StandardizationStats::default(), 0).is_err());
    }
}
