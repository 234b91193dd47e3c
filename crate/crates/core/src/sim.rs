//! IMU sequences and a synthetic motion simulator with exact ground truth.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quat::{integrate_unchecked, Quaternion, Vec3};
use crate::rng::{derive_seed, random_unit_quaternion, rng_from_seed, standard_normal, SimRng};

/// Gravitational acceleration in m/s². Earth rotation is neglected.
pub const GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds since the start of the sequence.
    pub t: f64,
    /// Angular rate in the sensor frame, rad/s.
    pub gyr: Vec3,
    /// Specific force in the sensor frame, m/s². At rest this is `+g` along
    /// the sensor's up direction.
    pub acc: Vec3,
}

/// A recorded or simulated IMU sequence with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuSequence {
    pub name: String,
    pub dataset: String,
    pub rate_hz: f64,
    pub samples: Vec<ImuSample>,
    /// Sensor-to-earth orientation per sample.
    pub truth: Option<Vec<Quaternion>>,
    /// `false` where the reference system had a gap.
    pub valid: Vec<bool>,
    /// Known constant gyroscope offset present in `samples` (zero if none was
    /// injected or it is unknown).
    pub gyr_bias: Vec3,
    /// Number of leading samples that form a known rest phase.
    pub rest_prefix: usize,
}

impl ImuSequence {
    pub fn new(
        name: impl Into<String>,
        dataset: impl Into<String>,
        rate_hz: f64,
        samples: Vec<ImuSample>,
        truth: Option<Vec<Quaternion>>,
    ) -> Result<Self> {
        let valid = vec![true; samples.len()];
        let seq = ImuSequence {
            name: name.into(),
            dataset: dataset.into(),
            rate_hz,
            samples,
            truth,
            valid,
            gyr_bias: Vec3::ZERO,
            rest_prefix: 0,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.rate_hz
    }

    /// Time step ending at sample `k`; the nominal period for `k = 0`.
    pub fn dt(&self, k: usize) -> f64 {
        if k == 0 {
            1.0 / self.rate_hz
        } else {
            self.samples[k].t - self.samples[k - 1].t
        }
    }

    pub fn gyr(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.samples.iter().map(|s| s.gyr)
    }

    pub fn acc(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.samples.iter().map(|s| s.acc)
    }

    pub fn truth(&self) -> Result<&[Quaternion]> {
        self.truth
            .as_deref()
            .ok_or_else(|| invalid(format!("sequence {} has no ground truth", self.name)))
    }

    /// Checks the structural invariants: lengths, monotone finite time stamps,
    /// finite measurements, and a rate consistent with the time stamps.
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return Err(invalid(format!("rate must be positive, got {}", self.rate_hz)));
        }
        let n = self.samples.len();
        if self.valid.len() != n {
            return Err(invalid("mask length differs from sample count"));
        }
        if let Some(truth) = &self.truth {
            if truth.len() != n {
                return Err(invalid("truth length differs from sample count"));
            }
        }
        for (k, s) in self.samples.iter().enumerate() {
            if !s.t.is_finite() || !s.gyr.is_finite() || !s.acc.is_finite() {
                return Err(invalid(format!("non-finite value at sample {k}")));
            }
            if k > 0 && s.t <= self.samples[k - 1].t {
                return Err(invalid(format!("time stamps not increasing at sample {k}")));
            }
        }
        if n >= 2 {
            let mut dts: Vec<f64> = self.samples.windows(2).map(|w| w[1].t - w[0].t).collect();
            let mid = dts.len() / 2;
            let median = *dts.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1;
            let nominal = 1.0 / self.rate_hz;
            if ((median - nominal) / nominal).abs() > 0.01 {
                return Err(invalid(format!(
                    "median time step {median} s does not match rate {} Hz",
                    self.rate_hz
                )));
            }
        }
        Ok(())
    }

    /// Subsequence `[start, end)` with time stamps shifted to start at zero.
    pub fn slice(&self, start: usize, end: usize) -> ImuSequence {
        let t0 = self.samples.get(start).map_or(0.0, |s| s.t);
        ImuSequence {
            name: self.name.clone(),
            dataset: self.dataset.clone(),
            rate_hz: self.rate_hz,
            samples: self.samples[start..end]
                .iter()
                .map(|s| ImuSample { t: s.t - t0, ..*s })
                .collect(),
            truth: self.truth.as_ref().map(|t| t[start..end].to_vec()),
            valid: self.valid[start..end].to_vec(),
            gyr_bias: self.gyr_bias,
            rest_prefix: self.rest_prefix.saturating_sub(start).min(end - start),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Rest,
    ConstantRate,
    SinusoidalMultiAxis,
    RandomSmooth,
}

/// Parameters of a simulated motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionProfile {
    pub kind: MotionKind,
    /// Peak angular rate per axis, rad/s. For `constant_rate` the rate magnitude.
    pub amplitude: f64,
    /// Frequency band of the angular-rate and translation processes, Hz.
    pub frequency_band: (f64, f64),
    /// Peak translational acceleration per earth axis, m/s².
    pub translation_accel_amplitude: f64,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    /// Rotation axis for `constant_rate`.
    pub axis: Vec3,
    /// Initial attitude; drawn uniformly from `seed` when absent.
    pub initial: Option<Quaternion>,
    /// Raised-cosine fade-in and fade-out of the motion, seconds. With a
    /// taper the sequence starts and ends at rest without a jump in the rate.
    pub taper: f64,
}

impl Default for MotionProfile {
    fn default() -> Self {
        MotionProfile {
            kind: MotionKind::RandomSmooth,
            amplitude: 1.0,
            frequency_band: (0.05, 1.0),
            translation_accel_amplitude: 0.0,
            duration: 10.0,
            seed: 0,
            axis: Vec3::E_Z,
            initial: None,
            taper: 0.0,
        }
    }
}

impl MotionProfile {
    pub fn rest(duration: f64, seed: u64) -> Self {
        MotionProfile {
            kind: MotionKind::Rest,
            amplitude: 0.0,
            duration,
            seed,
            ..Default::default()
        }
    }

    pub fn constant_rate(omega: Vec3, duration: f64) -> Self {
        MotionProfile {
            kind: MotionKind::ConstantRate,
            amplitude: omega.norm(),
            axis: if omega.norm() > 0.0 { omega } else { Vec3::E_Z },
            duration,
            initial: Some(Quaternion::IDENTITY),
            ..Default::default()
        }
    }

    pub fn random_smooth(amplitude: f64, band: (f64, f64), translation: f64, duration: f64, seed: u64) -> Self {
        MotionProfile {
            kind: MotionKind::RandomSmooth,
            amplitude,
            frequency_band: band,
            translation_accel_amplitude: translation,
            duration,
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.frequency_band;
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(invalid("duration must be positive"));
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(invalid("amplitude must be non-negative"));
        }
        if !(self.translation_accel_amplitude >= 0.0) || !self.translation_accel_amplitude.is_finite() {
            return Err(invalid("translation amplitude must be non-negative"));
        }
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid(format!("bad frequency band ({lo}, {hi})")));
        }
        if !self.axis.is_finite() || self.axis.norm() == 0.0 {
            return Err(invalid("rotation axis must be non-zero"));
        }
        if !(self.taper >= 0.0 && self.taper <= 0.5 * self.duration) {
            return Err(invalid("taper must lie in [0, duration / 2]"));
        }
        Ok(())
    }
}

/// Sum of sinusoids with Gaussian weights, bounded by the amplitude.
#[derive(Clone, Debug)]
struct SmoothProcess {
    // (weight, frequency in rad/s, phase) per axis
    terms: [Vec<(f64, f64, f64)>; 3],
}

const SMOOTH_TERMS: usize = 8;

impl SmoothProcess {
    fn new(rng: &mut SimRng, amplitude: f64, band: (f64, f64), terms: usize) -> Self {
        let axis = |rng: &mut SimRng| {
            let mut t: Vec<(f64, f64, f64)> = (0..terms)
                .map(|_| {
                    let f = band.0 + (band.1 - band.0) * rng.random::<f64>();
                    (standard_normal(rng), 2.0 * PI * f, 2.0 * PI * rng.random::<f64>())
                })
                .collect();
            let total: f64 = t.iter().map(|x| x.0.abs()).sum();
            if total > 0.0 {
                for x in &mut t {
                    x.0 *= amplitude / total;
                }
            }
            t
        };
        SmoothProcess {
            terms: [axis(rng), axis(rng), axis(rng)],
        }
    }

    fn eval(&self, t: f64) -> Vec3 {
        let f = |terms: &[(f64, f64, f64)]| terms.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum();
        Vec3::new(f(&self.terms[0]), f(&self.terms[1]), f(&self.terms[2]))
    }
}

enum RateFunction {
    Zero,
    Constant(Vec3),
    Smooth(SmoothProcess),
}

impl RateFunction {
    fn eval(&self, t: f64) -> Vec3 {
        match self {
            RateFunction::Zero => Vec3::ZERO,
            RateFunction::Constant(w) => *w,
            RateFunction::Smooth(p) => p.eval(t),
        }
    }
}

/// Simulates `round(duration · rate)` samples at `t_k = k / rate`.
///
/// The angular rate is held constant between samples and the truth is the
/// exact integral of that piecewise-constant rate, so gyro-only integration of
/// the ideal measurements reproduces the truth up to rounding.
pub fn generate(profile: &MotionProfile, rate_hz: f64) -> Result<ImuSequence> {
    if !(1.0..=10_000.0).contains(&rate_hz) {
        return Err(invalid(format!("rate {rate_hz} Hz outside [1, 10000]")));
    }
    profile.validate()?;
    let n = (profile.duration * rate_hz).round() as usize;
    if n < 2 {
        return Err(invalid("profile yields fewer than two samples"));
    }

    let mut rng = rng_from_seed(derive_seed(profile.seed, 0x51u64));
    let initial = match profile.initial {
        Some(q) => q.try_normalized()?,
        None => random_unit_quaternion(&mut rng),
    };
    let rate = match profile.kind {
        MotionKind::Rest => RateFunction::Zero,
        MotionKind::ConstantRate => {
            RateFunction::Constant(profile.axis * (profile.amplitude / profile.axis.norm()))
        }
        MotionKind::SinusoidalMultiAxis => {
            RateFunction::Smooth(SmoothProcess::new(&mut rng, profile.amplitude, profile.frequency_band, 1))
        }
        MotionKind::RandomSmooth => RateFunction::Smooth(SmoothProcess::new(
            &mut rng,
            profile.amplitude,
            profile.frequency_band,
            SMOOTH_TERMS,
        )),
    };
    let translation = (profile.kind != MotionKind::Rest && profile.translation_accel_amplitude > 0.0)
        .then(|| {
            SmoothProcess::new(
                &mut rng,
                profile.translation_accel_amplitude,
                profile.frequency_band,
                SMOOTH_TERMS,
            )
        });

    let dt = 1.0 / rate_hz;
    let t_end = (n - 1) as f64 * dt;
    let envelope = |t: f64| {
        if profile.taper <= 0.0 {
            return 1.0;
        }
        let x = (t.min(t_end - t) / profile.taper).clamp(0.0, 1.0);
        0.5 * (1.0 - (PI * x).cos())
    };
    let gravity = Vec3::E_Z * GRAVITY;
    let mut samples = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut q = initial;
    for k in 0..n {
        let t = k as f64 * dt;
        let gain = envelope(t);
        let gyr = rate.eval(t) * gain;
        if k > 0 {
            q = integrate_unchecked(q, gyr, dt);
        }
        let mut f_earth = gravity;
        if let Some(tr) = &translation {
            f_earth += tr.eval(t) * gain;
        }
        samples.push(ImuSample {
            t,
            gyr,
            acc: q.inverse().rotate(f_earth),
        });
        truth.push(q);
    }
    let name = format!("{:?}-{}", profile.kind, profile.seed).to_lowercase();
    ImuSequence::new(name, "synthetic", rate_hz, samples, Some(truth))
}

/// Measurement errors to inject into an ideal sequence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorSpec {
    /// White noise std per gyro axis, rad/s.
    pub gyr_noise_std: f64,
    /// White noise std per accelerometer axis, m/s².
    pub acc_noise_std: f64,
    /// Std of the constant per-axis gyro bias, rad/s.
    pub gyr_bias_std: f64,
    pub seed: u64,
}

/// Adds a constant gyro bias (drawn once) and white noise. Truth is untouched.
pub fn inject_errors(seq: &ImuSequence, spec: &ErrorSpec) -> Result<ImuSequence> {
    if !(spec.gyr_noise_std >= 0.0 && spec.acc_noise_std >= 0.0 && spec.gyr_bias_std >= 0.0) {
        return Err(invalid("error standard deviations must be non-negative"));
    }
    let mut out = seq.clone();
    if spec.gyr_bias_std > 0.0 {
        let mut rng = rng_from_seed(derive_seed(spec.seed, 0xB1A5));
        let bias = Vec3::new(standard_normal(&mut rng), standard_normal(&mut rng), standard_normal(&mut rng))
            * spec.gyr_bias_std;
        for s in &mut out.samples {
            s.gyr += bias;
        }
        out.gyr_bias += bias;
    }
    add_white_noise(&mut out, spec.gyr_noise_std, spec.acc_noise_std, derive_seed(spec.seed, 0x4015E));
    Ok(out)
}

pub(crate) fn add_white_noise(seq: &mut ImuSequence, gyr_std: f64, acc_std: f64, seed: u64) {
    if gyr_std == 0.0 && acc_std == 0.0 {
        return;
    }
    let mut rng = rng_from_seed(seed);
    let draw = |rng: &mut SimRng, std: f64| {
        Vec3::new(standard_normal(rng), standard_normal(rng), standard_normal(rng)) * std
    };
    for s in &mut seq.samples {
        let g = draw(&mut rng, gyr_std);
        let a = draw(&mut rng, acc_std);
        if gyr_std > 0.0 {
            s.gyr += g;
        }
        if acc_std > 0.0 {
            s.acc += a;
        }
    }
}

/// Prepends `rest_duration` seconds of perfect rest at the initial attitude.
/// The gyro reads the known bias during the rest phase.
pub fn prepend_rest(seq: &ImuSequence, rest_duration: f64) -> Result<ImuSequence> {
    if !(rest_duration >= 0.0) || !rest_duration.is_finite() {
        return Err(invalid("rest duration must be non-negative"));
    }
    let truth = seq.truth()?;
    let n = (rest_duration * seq.rate_hz).round() as usize;
    if n == 0 {
        return Ok(seq.clone());
    }
    let q0 = *truth
        .first()
        .ok_or_else(|| invalid("cannot prepend rest to an empty sequence"))?;
    let dt = 1.0 / seq.rate_hz;
    let shift = n as f64 * dt;
    let acc = q0.inverse().rotate(Vec3::E_Z * GRAVITY);

    let mut samples = Vec::with_capacity(n + seq.len());
    samples.extend((0..n).map(|k| ImuSample {
        t: k as f64 * dt,
        gyr: seq.gyr_bias,
        acc,
    }));
    samples.extend(seq.samples.iter().map(|s| ImuSample { t: s.t + shift, ..*s }));

    let mut new_truth = vec![q0; n];
    new_truth.extend_from_slice(truth);
    let mut valid = vec![true; n];
    valid.extend_from_slice(&seq.valid);

    Ok(ImuSequence {
        samples,
        truth: Some(new_truth),
        valid,
        rest_prefix: seq.rest_prefix + n,
        ..seq.clone()
    })
}

/// Appends the motion played backwards, so the sequence ends at rest where it
/// started, followed by one rest sample. Combined with a taper this gives a
/// sequence whose start and end match, which keeps DFT resampling free of
/// wrap-around artifacts. Meant for error-free sequences.
pub fn with_return_path(seq: &ImuSequence) -> Result<ImuSequence> {
    let truth = seq.truth()?;
    let n = seq.len();
    if n < 2 {
        return Err(invalid("need at least two samples"));
    }
    let dt = 1.0 / seq.rate_hz;
    let mut samples = seq.samples.clone();
    let mut new_truth = truth.to_vec();
    let mut valid = seq.valid.clone();
    for j in 1..n {
        // undo the step that led from sample n-1-j to n-j
        let k = n - 1 - j;
        let earth_force = truth[k].rotate(seq.samples[k].acc);
        samples.push(ImuSample {
            t: (n - 1 + j) as f64 * dt,
            gyr: seq.gyr_bias - (seq.samples[k + 1].gyr - seq.gyr_bias),
            acc: truth[k].inverse().rotate(earth_force),
        });
        new_truth.push(truth[k]);
        valid.push(seq.valid[k]);
    }
    samples.push(ImuSample {
        t: (2 * n - 1) as f64 * dt,
        gyr: seq.gyr_bias,
        acc: truth[0].inverse().rotate(Vec3::E_Z * GRAVITY),
    });
    new_truth.push(truth[0]);
    valid.push(seq.valid[0]);
    Ok(ImuSequence {
        samples,
        truth: Some(new_truth),
        valid,
        ..seq.clone()
    })
}

/// Gyroscope-only orientation: `q[0] = q0`, then one exact integration step
/// per sample.
pub fn strapdown_gyro(seq: &ImuSequence, q0: Quaternion) -> Result<Vec<Quaternion>> {
    if seq.is_empty() {
        return Err(invalid("empty sequence"));
    }
    let mut out = Vec::with_capacity(seq.len());
    let mut q = q0.try_normalized()?;
    out.push(q);
    for k in 1..seq.len() {
        q = integrate_unchecked(q, seq.samples[k].gyr, seq.dt(k));
        out.push(q);
    }
    Ok(out)
}
