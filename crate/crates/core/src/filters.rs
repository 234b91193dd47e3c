//! Classical 6D complementary attitude filters.
//!
//! * Filter A: gradient-descent correction of the gyro-integrated
//!   orientation toward agreement with the measured gravity direction, with a
//!   single step-size gain β (Madgwick's IMU formulation).
//! * Filter B: explicit complementary filter with proportional and integral
//!   feedback of the gravity-direction error into the angular rate (Mahony's
//!   passive formulation, gains Kp and Ki).
//!
//! Both integrate the (corrected) rate exactly over each step, so with zero
//! gain they reduce to [`crate::sim::strapdown_gyro`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::eval::{motion_mask, rmse_deg};
use crate::pool;
use crate::quat::{integrate_unchecked, Quaternion, Vec3};
use crate::sim::ImuSequence;

/// Accelerometer readings below this norm carry no usable direction.
const MIN_ACC_NORM: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    A,
    B,
}

impl std::str::FromStr for FilterKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(FilterKind::A),
            "B" | "b" => Ok(FilterKind::B),
            _ => Err(invalid(format!("unknown filter kind {s:?}, expected A or B"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub kind: FilterKind,
    /// β for Filter A, Kp for Filter B.
    pub gain: f64,
    /// Ki for Filter B; ignored by Filter A.
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub init_from_accel: bool,
}

impl FilterParams {
    pub fn new(kind: FilterKind, gain: f64, ki: f64) -> Result<Self> {
        let p = FilterParams {
            kind,
            gain,
            ki,
            init_from_accel: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(invalid(format!("filter gain must be positive, got {}", self.gain)));
        }
        if !(self.ki >= 0.0) || !self.ki.is_finite() {
            return Err(invalid(format!("integral gain must be non-negative, got {}", self.ki)));
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        match self.kind {
            FilterKind::A => format!("filter-a(beta={})", self.gain),
            FilterKind::B => format!("filter-b(kp={},ki={})", self.gain, self.ki),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub q: Quaternion,
    /// Integral feedback term of Filter B, rad/s.
    pub bias_integral: Vec3,
    pub initialized: bool,
}

impl FilterState {
    pub fn new(q: Quaternion) -> Self {
        FilterState {
            q,
            bias_integral: Vec3::ZERO,
            initialized: true,
        }
    }
}

impl Default for FilterState {
    fn default() -> Self {
        FilterState {
            q: Quaternion::IDENTITY,
            bias_integral: Vec3::ZERO,
            initialized: false,
        }
    }
}

/// Smallest rotation that maps the measured specific-force direction onto the
/// earth vertical. Its heading component is the identity.
pub fn accel_init(acc: Vec3) -> Result<Quaternion> {
    let a = acc
        .normalized(MIN_ACC_NORM)
        .ok_or_else(|| invalid("accelerometer reading too small for initialization"))?;
    if !a.is_finite() {
        return Err(invalid("non-finite accelerometer reading"));
    }
    let w = 1.0 + a.z;
    if w < 1e-12 {
        // upside down: any horizontal half turn works
        return Ok(Quaternion::new(0.0, 1.0, 0.0, 0.0));
    }
    let v = a.cross(Vec3::E_Z);
    Ok(Quaternion::new(w, v.x, v.y, v.z).normalized())
}

/// Earth vertical expressed in sensor coordinates.
fn predicted_up(q: Quaternion) -> Vec3 {
    Vec3::new(
        2.0 * (q.x * q.z - q.w * q.y),
        2.0 * (q.w * q.x + q.y * q.z),
        q.w * q.w - q.x * q.x - q.y * q.y + q.z * q.z,
    )
}

/// Gradient of `½‖R(q)ᵀ e_z − a‖²` with respect to the quaternion components.
fn gravity_gradient(q: Quaternion, a: Vec3) -> Quaternion {
    let f1 = 2.0 * (q.x * q.z - q.w * q.y) - a.x;
    let f2 = 2.0 * (q.w * q.x + q.y * q.z) - a.y;
    let f3 = 1.0 - 2.0 * (q.x * q.x + q.y * q.y) - a.z;
    Quaternion::new(
        -2.0 * q.y * f1 + 2.0 * q.x * f2,
        2.0 * q.z * f1 + 2.0 * q.w * f2 - 4.0 * q.x * f3,
        -2.0 * q.w * f1 + 2.0 * q.z * f2 - 4.0 * q.y * f3,
        2.0 * q.x * f1 + 2.0 * q.y * f2,
    )
}

/// Advances the filter by one sample. Accelerometer readings with norm below
/// 1e-6 are ignored for that step.
pub fn filter_step(state: &FilterState, params: &FilterParams, gyr: Vec3, acc: Vec3, dt: f64) -> Result<FilterState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let acc_dir = acc.normalized(MIN_ACC_NORM);
    let mut next = *state;
    match params.kind {
        FilterKind::A => {
            let mut q = integrate_unchecked(state.q, gyr, dt);
            if let Some(a) = acc_dir {
                let g = gravity_gradient(state.q, a);
                let n = g.norm();
                if n > 1e-12 {
                    let k = params.gain * dt / n;
                    q = Quaternion::new(q.w - k * g.w, q.x - k * g.x, q.y - k * g.y, q.z - k * g.z).normalized();
                }
            }
            next.q = q;
        }
        FilterKind::B => {
            let mut omega = gyr;
            if let Some(a) = acc_dir {
                let err = a.cross(predicted_up(state.q));
                if params.ki > 0.0 {
                    next.bias_integral += err * (params.ki * dt);
                }
                omega += err * params.gain;
            }
            omega += next.bias_integral;
            next.q = integrate_unchecked(state.q, omega, dt);
        }
    }
    next.initialized = true;
    Ok(next)
}

/// Initial orientation chosen by precedence: explicit `q0`, then the first
/// accelerometer sample when `init_from_accel` is set, then the identity.
pub fn initial_attitude(params: &FilterParams, seq: &ImuSequence, q0: Option<Quaternion>) -> Quaternion {
    match q0 {
        Some(q) => q,
        None if params.init_from_accel => seq
            .samples
            .first()
            .and_then(|s| accel_init(s.acc).ok())
            .unwrap_or(Quaternion::IDENTITY),
        None => Quaternion::IDENTITY,
    }
}

/// Runs a filter causally over a whole sequence, one estimate per sample.
/// The first estimate is the initial attitude.
pub fn run_filter(params: &FilterParams, seq: &ImuSequence, q0: Option<Quaternion>) -> Result<Vec<Quaternion>> {
    params.validate()?;
    if seq.is_empty() {
        return Err(invalid("empty sequence"));
    }
    let mut state = FilterState::new(initial_attitude(params, seq, q0).try_normalized()?);
    let mut out = Vec::with_capacity(seq.len());
    out.push(state.q);
    for k in 1..seq.len() {
        let s = &seq.samples[k];
        state = filter_step(&state, params, s.gyr, s.acc, seq.dt(k))?;
        out.push(state.q);
    }
    Ok(out)
}

/// Parameter grid for [`tune_filter`]. The full grid is the Cartesian product
/// of `gains` and `kis` (the latter is ignored for Filter A).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterGrid {
    pub gains: Vec<f64>,
    pub kis: Vec<f64>,
    pub init_from_accel: bool,
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

impl Default for FilterGrid {
    /// 25 logarithmic gains in [1e-3, 1e1]; Ki is 0 or one of 24 logarithmic
    /// values in [1e-4, 1e0].
    fn default() -> Self {
        let mut kis = vec![0.0];
        kis.extend(log_space(1e-4, 1.0, 24));
        FilterGrid {
            gains: log_space(1e-3, 10.0, 25),
            kis,
            init_from_accel: true,
        }
    }
}

impl FilterGrid {
    pub fn points(&self, kind: FilterKind) -> Vec<FilterParams> {
        let kis: &[f64] = if kind == FilterKind::A { &[0.0] } else { &self.kis };
        let mut pts = Vec::with_capacity(self.gains.len() * kis.len());
        for &gain in &self.gains {
            for &ki in kis {
                pts.push(FilterParams {
                    kind,
                    gain,
                    ki,
                    init_from_accel: self.init_from_accel,
                });
            }
        }
        pts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: FilterParams,
    pub best_mean_rmse_deg: f64,
    /// Every evaluated grid point with its mean RMSE in degrees.
    pub table: Vec<(FilterParams, f64)>,
}

/// Mean attitude RMSE (degrees) of a parameter set over sequences, scored on
/// the motion part of each sequence.
pub fn mean_rmse(params: &FilterParams, sequences: &[ImuSequence]) -> Result<f64> {
    let mut total = 0.0;
    for seq in sequences {
        let est = run_filter(params, seq, None)?;
        total += rmse_deg(&est, seq.truth()?, &motion_mask(seq))?;
    }
    Ok(total / sequences.len() as f64)
}

/// Grid search for the parameters minimizing the mean attitude RMSE. Ties go
/// to the smaller gain, then the smaller Ki. Non-finite scores never win.
pub fn tune_filter(kind: FilterKind, sequences: &[ImuSequence], grid: &FilterGrid, threads: usize) -> Result<TuneResult> {
    let points = grid.points(kind);
    if points.is_empty() {
        return Err(invalid("empty parameter grid"));
    }
    if sequences.is_empty() {
        return Err(invalid("no sequences to tune on"));
    }
    for p in &points {
        p.validate()?;
    }
    for s in sequences {
        s.truth()?;
    }
    let scores = pool::map(&points, threads, |p| mean_rmse(p, sequences));
    let mut table = Vec::with_capacity(points.len());
    for (p, s) in points.into_iter().zip(scores) {
        table.push((p, s?));
    }
    let best = table
        .iter()
        .filter(|(_, s)| s.is_finite())
        .min_by(|(pa, sa), (pb, sb)| {
            sa.total_cmp(sb)
                .then(pa.gain.total_cmp(&pb.gain))
                .then(pa.ki.total_cmp(&pb.ki))
        })
        .ok_or_else(|| invalid("no grid point produced a finite score"))?;
    Ok(TuneResult {
        best: best.0,
        best_mean_rmse_deg: best.1,
        table,
    })
}
