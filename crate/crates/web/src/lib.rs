//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string; the `*_json` functions are the same operations for native callers.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use imu_attitude::filters::{run_filter, FilterKind, FilterParams};
use imu_attitude::quat::{attitude_error, deg_to_rad, rad_to_deg};
use imu_attitude::resample::resample_signal;
use imu_attitude::sim::{generate, inject_errors, strapdown_gyro, ErrorSpec, MotionProfile};
use imu_attitude::{Quaternion, Vec3};

type Res = Result<Value, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Keeps at most `max` evenly spaced points so plots stay light.
fn thin<T: Copy>(xs: &[T], max: usize) -> Vec<T> {
    let step = xs.len().div_ceil(max.max(1)).max(1);
    xs.iter().step_by(step).copied().collect()
}

/// Filter-A error curves for each gain on a noisy sequence that starts 60°
/// away from the filter's initial guess.
pub fn filter_tradeoff_json(gains: &[f64], duration: f64, seed: u64) -> Res {
    if gains.is_empty() {
        return Err("no gains".into());
    }
    let mut p = MotionProfile::random_smooth(1.0, (0.05, 1.0), 1.0, duration, seed);
    p.initial = Some(Quaternion::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), deg_to_rad(60.0)).map_err(err)?);
    let seq = generate(&p, 100.0).map_err(err)?;
    let seq = inject_errors(
        &seq,
        &ErrorSpec {
            gyr_noise_std: 0.005,
            acc_noise_std: 0.3,
            gyr_bias_std: 0.0,
            seed,
        },
    )
    .map_err(err)?;
    let truth = seq.truth().map_err(err)?;
    let t: Vec<f64> = seq.samples.iter().map(|s| s.t).collect();
    let mut curves = Vec::new();
    for &gain in gains {
        let mut fp = FilterParams::new(FilterKind::A, gain, 0.0).map_err(err)?;
        fp.init_from_accel = false;
        let est = run_filter(&fp, &seq, Some(Quaternion::IDENTITY)).map_err(err)?;
        let e: Vec<f64> = truth.iter().zip(&est).map(|(&a, &b)| rad_to_deg(attitude_error(a, b))).collect();
        curves.push(json!({ "gain": gain, "error_deg": thin(&e, 1500) }));
    }
    Ok(json!({ "t": thin(&t, 1500), "curves": curves }))
}

/// A sine sampled at `src_hz` and its DFT resampling to `dst_hz`.
pub fn resample_demo_json(freq_hz: f64, src_hz: f64, dst_hz: f64, duration: f64) -> Res {
    let n = (duration * src_hz).round() as usize;
    let x: Vec<f64> = (0..n)
        .map(|k| (2.0 * std::f64::consts::PI * freq_hz * k as f64 / src_hz).sin())
        .collect();
    let y = resample_signal(&x, src_hz, dst_hz).map_err(err)?;
    let tx: Vec<f64> = (0..n).map(|k| k as f64 / src_hz).collect();
    let ty: Vec<f64> = (0..y.len()).map(|k| k as f64 / dst_hz).collect();
    Ok(json!({ "input": { "t": tx, "x": x }, "output": { "t": ty, "x": y } }))
}

/// Attitude error of gyro-only integration and of Filter-B under a constant
/// gyro bias (deg/s).
pub fn strapdown_drift_json(bias_deg_s: f64, duration: f64, seed: u64) -> Res {
    let seq = generate(&MotionProfile::random_smooth(1.0, (0.05, 1.0), 0.5, duration, seed), 100.0).map_err(err)?;
    let b = deg_to_rad(bias_deg_s) / 2f64.sqrt();
    let mut biased = seq.clone();
    for s in &mut biased.samples {
        s.gyr = s.gyr + Vec3::new(b, b, 0.0);
    }
    let truth = seq.truth().map_err(err)?;
    let sd = strapdown_gyro(&biased, truth[0]).map_err(err)?;
    let fp = FilterParams::new(FilterKind::B, 0.5, 0.01).map_err(err)?;
    let filt = run_filter(&fp, &biased, None).map_err(err)?;
    let curve = |est: &[Quaternion]| -> Vec<f64> {
        thin(
            &truth.iter().zip(est).map(|(&a, &b)| rad_to_deg(attitude_error(a, b))).collect::<Vec<_>>(),
            1500,
        )
    };
    let t: Vec<f64> = seq.samples.iter().map(|s| s.t).collect();
    Ok(json!({ "t": thin(&t, 1500), "strapdown_deg": curve(&sd), "filter_deg": curve(&filt) }))
}

fn to_js(r: Res) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn filter_tradeoff(gains: Vec<f64>, duration: f64, seed: u32) -> Result<String, JsError> {
    to_js(filter_tradeoff_json(&gains, duration, seed.into()))
}

#[wasm_bindgen]
pub fn resample_demo(freq_hz: f64, src_hz: f64, dst_hz: f64, duration: f64) -> Result<String, JsError> {
    to_js(resample_demo_json(freq_hz, src_hz, dst_hz, duration))
}

#[wasm_bindgen]
pub fn strapdown_drift(bias_deg_s: f64, duration: f64, seed: u32) -> Result<String, JsError> {
    to_js(strapdown_drift_json(bias_deg_s, duration, seed.into()))
}
