//! Sampling-rate conversion.
//!
//! Measurement channels are resampled independently per axis in the
//! frequency domain. Quaternion series are resampled with SLERP between the
//! bracketing input samples so the output stays on the unit sphere.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimator::Estimator;
use crate::quat::{slerp, Quaternion, Vec3};
use crate::sim::{ImuSample, ImuSequence};

/// Number of output samples when converting `n` samples from `src_hz` to `dst_hz`.
pub fn resampled_len(n: usize, src_hz: f64, dst_hz: f64) -> usize {
    (n as f64 * dst_hz / src_hz).round() as usize
}

fn check_rates(src_hz: f64, dst_hz: f64) -> Result<()> {
    if !(src_hz > 0.0 && dst_hz > 0.0) || !src_hz.is_finite() || !dst_hz.is_finite() {
        return Err(invalid(format!("rates must be positive, got {src_hz} -> {dst_hz}")));
    }
    Ok(())
}

/// DFT resampling of a uniformly sampled real signal from `src_hz` to `dst_hz`.
///
/// The signal is treated as one period of a periodic signal: its spectrum is
/// truncated or zero-padded to the new length and transformed back. No
/// windowing is applied, so discontinuities between the first and last sample
/// ring near the edges.
pub fn resample_signal(x: &[f64], src_hz: f64, dst_hz: f64) -> Result<Vec<f64>> {
    check_rates(src_hz, dst_hz)?;
    resample_signal_to_len(x, resampled_len(x.len(), src_hz, dst_hz))
}

/// DFT resampling to an explicit number of samples.
pub fn resample_signal_to_len(x: &[f64], m: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(invalid("need at least two samples to resample"));
    }
    if m < 2 {
        return Err(invalid(format!("resampled signal would have {m} samples")));
    }
    if m == n {
        return Ok(x.to_vec());
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);

    let mut out = vec![Complex::new(0.0, 0.0); m];
    let k = n.min(m);
    let half = k / 2;
    // positive frequencies including DC, below the shared Nyquist bin
    out[..half.max(1)].copy_from_slice(&spec[..half.max(1)]);
    if k % 2 == 1 {
        out[half] = spec[half];
        for i in 1..=half {
            out[m - i] = spec[n - i];
        }
    } else {
        for i in 1..half {
            out[m - i] = spec[n - i];
        }
        if m > n {
            // split the input Nyquist bin between both output halves
            let nyq = spec[half] * 0.5;
            out[half] = nyq;
            out[m - half] = nyq;
        } else {
            // fold both input bins onto the output Nyquist bin
            out[half] = spec[half] + spec[n - half];
        }
    }
    planner.plan_fft_inverse(m).process(&mut out);
    let scale = 1.0 / n as f64;
    Ok(out.into_iter().map(|c| c.re * scale).collect())
}

/// Per-axis DFT resampling of a vector series.
pub fn resample_vec3_to_len(xs: &[Vec3], m: usize) -> Result<Vec<Vec3>> {
    let axis = |f: fn(&Vec3) -> f64| resample_signal_to_len(&xs.iter().map(f).collect::<Vec<_>>(), m);
    let (x, y, z) = (axis(|v| v.x)?, axis(|v| v.y)?, axis(|v| v.z)?);
    Ok((0..m).map(|i| Vec3::new(x[i], y[i], z[i])).collect())
}

/// Position of output sample `j` in input sample units.
fn bracket(j: usize, src_hz: f64, dst_hz: f64, n: usize) -> (usize, f64) {
    let u = j as f64 * src_hz / dst_hz;
    let last = (n - 1) as f64;
    if u >= last {
        return (n - 1, 0.0);
    }
    let i = u.floor();
    (i as usize, u - i)
}

/// SLERP resampling of a unit-quaternion series.
pub fn resample_quat(qs: &[Quaternion], src_hz: f64, dst_hz: f64) -> Result<Vec<Quaternion>> {
    check_rates(src_hz, dst_hz)?;
    resample_quat_to_len(qs, src_hz, dst_hz, resampled_len(qs.len(), src_hz, dst_hz))
}

/// SLERP resampling to `m` samples at `dst_hz`; times past the last input are
/// held at the last input.
pub fn resample_quat_to_len(qs: &[Quaternion], src_hz: f64, dst_hz: f64, m: usize) -> Result<Vec<Quaternion>> {
    check_rates(src_hz, dst_hz)?;
    if qs.is_empty() {
        return Err(invalid("empty quaternion series"));
    }
    Ok((0..m)
        .map(|j| {
            let (i, frac) = bracket(j, src_hz, dst_hz, qs.len());
            if frac == 0.0 {
                qs[i]
            } else {
                slerp(qs[i], qs[i + 1], frac)
            }
        })
        .collect())
}

/// An output sample is valid when both bracketing inputs are.
pub fn resample_mask(valid: &[bool], src_hz: f64, dst_hz: f64, m: usize) -> Vec<bool> {
    (0..m)
        .map(|j| {
            let (i, frac) = bracket(j, src_hz, dst_hz, valid.len());
            valid[i] && (frac == 0.0 || valid[i + 1])
        })
        .collect()
}

/// Resamples a whole sequence: measurements by DFT, truth by SLERP. The rest
/// prefix and known bias carry over.
pub fn resample_sequence(seq: &ImuSequence, dst_hz: f64) -> Result<ImuSequence> {
    check_rates(seq.rate_hz, dst_hz)?;
    let m = resampled_len(seq.len(), seq.rate_hz, dst_hz);
    resample_sequence_to_len(seq, dst_hz, m)
}

pub(crate) fn resample_sequence_to_len(seq: &ImuSequence, dst_hz: f64, m: usize) -> Result<ImuSequence> {
    let src = seq.rate_hz;
    if m == seq.len() && src == dst_hz {
        return Ok(seq.clone());
    }
    let gyr = resample_vec3_to_len(&seq.gyr().collect::<Vec<_>>(), m)?;
    let acc = resample_vec3_to_len(&seq.acc().collect::<Vec<_>>(), m)?;
    let samples = gyr
        .into_iter()
        .zip(acc)
        .enumerate()
        .map(|(j, (gyr, acc))| ImuSample {
            t: j as f64 / dst_hz,
            gyr,
            acc,
        })
        .collect();
    let truth = match &seq.truth {
        Some(t) => Some(resample_quat_to_len(t, src, dst_hz, m)?),
        None => None,
    };
    Ok(ImuSequence {
        name: seq.name.clone(),
        dataset: seq.dataset.clone(),
        rate_hz: dst_hz,
        samples,
        truth,
        valid: resample_mask(&seq.valid, src, dst_hz, m),
        gyr_bias: seq.gyr_bias,
        rest_prefix: ((seq.rest_prefix as f64 * dst_hz / src).round() as usize).min(m),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateGridKind {
    /// Evenly spaced sampling periods.
    EquidistantTs,
    /// Evenly spaced sampling rates.
    EquidistantFs,
    /// Half of the points from each of the above.
    Combined,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateGridStrategy {
    pub kind: RateGridKind,
    pub count: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for RateGridStrategy {
    fn default() -> Self {
        RateGridStrategy {
            kind: RateGridKind::EquidistantFs,
            count: 100,
            f_min: 50.0,
            f_max: 500.0,
        }
    }
}

fn even(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Sorted, duplicate-free list of training rates in `[f_min, f_max]`.
pub fn rate_grid(s: &RateGridStrategy) -> Result<Vec<f64>> {
    if !(s.f_min > 0.0 && s.f_min < s.f_max && s.f_max.is_finite()) {
        return Err(invalid(format!("bad rate range [{}, {}]", s.f_min, s.f_max)));
    }
    if s.count < 2 {
        return Err(invalid("rate grid needs at least two points"));
    }
    let by_period = |n: usize| even(1.0 / s.f_max, 1.0 / s.f_min, n).map(|p| (1.0 / p).clamp(s.f_min, s.f_max));
    let mut rates: Vec<f64> = match s.kind {
        RateGridKind::EquidistantFs => even(s.f_min, s.f_max, s.count).collect(),
        RateGridKind::EquidistantTs => by_period(s.count).collect(),
        RateGridKind::Combined => {
            let n_ts = (s.count / 2).max(2);
            let n_fs = (s.count - s.count / 2).max(2);
            by_period(n_ts).chain(even(s.f_min, s.f_max, n_fs)).collect()
        }
    };
    // 1/(1/f) need not round-trip; snap to the exact endpoints
    for r in &mut rates {
        for end in [s.f_min, s.f_max] {
            if (*r - end).abs() <= 1e-9 * end {
                *r = end;
            }
        }
    }
    rates.sort_by(|a, b| a.total_cmp(b));
    rates.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * *b);
    Ok(rates)
}

/// Runs a fixed-rate estimator on a sequence at any rate: the measurements
/// are resampled to the estimator's native rate, the estimator runs once over
/// the whole resampled sequence, and its output is resampled back.
pub fn jitr_wrap<E: Estimator + ?Sized>(estimator: &E, native_hz: f64, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
    check_rates(seq.rate_hz, native_hz)?;
    let m = resampled_len(seq.len(), seq.rate_hz, native_hz).max(2);
    let native = resample_sequence_to_len(seq, native_hz, m)?;
    let out = estimator.estimate(&native)?;
    resample_quat_to_len(&out, native_hz, seq.rate_hz, seq.len())
}

/// [`jitr_wrap`] packaged as an estimator.
#[derive(Clone, Debug)]
pub struct Jitr<E> {
    pub inner: E,
    pub native_hz: f64,
}

impl<E: Estimator> Estimator for Jitr<E> {
    fn id(&self) -> String {
        format!("jitr@{}({})", self.native_hz, self.inner.id())
    }

    fn init_policy(&self) -> crate::estimator::InitPolicy {
        self.inner.init_policy()
    }

    fn estimate(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
        jitr_wrap(&self.inner, self.native_hz, seq)
    }
}
