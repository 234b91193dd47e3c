//! Training-data augmentation and input standardization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quat::{deg_to_rad, Quaternion, Vec3};
use crate::rng::{standard_normal, SimRng};
use crate::sim::{add_white_noise, ImuSequence};

pub use crate::rng::random_unit_quaternion;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub rotation_enabled: bool,
    /// Upper bound of the per-sequence gyro noise std, rad/s.
    pub gyr_noise_std_max: f64,
    /// Upper bound of the per-sequence accelerometer noise std, m/s².
    pub acc_noise_std_max: f64,
    /// Std of the per-axis constant gyro bias, rad/s.
    pub gyr_bias_std: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_enabled: true,
            gyr_noise_std_max: 0.02,
            acc_noise_std_max: 0.3,
            gyr_bias_std: deg_to_rad(0.5),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// No rotation and no errors.
    pub fn disabled() -> Self {
        AugmentConfig {
            rotation_enabled: false,
            gyr_noise_std_max: 0.0,
            acc_noise_std_max: 0.0,
            gyr_bias_std: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gyr_noise_std_max", self.gyr_noise_std_max),
            ("acc_noise_std_max", self.acc_noise_std_max),
            ("gyr_bias_std", self.gyr_bias_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Re-mounts the sensor by `r`: measurements are expressed in the rotated
/// sensor frame and the truth becomes `truth ⊗ r`.
pub fn virtual_rotation(seq: &ImuSequence, r: Quaternion) -> Result<ImuSequence> {
    let truth = seq.truth()?;
    let r = r.try_normalized()?;
    let r_inv = r.inverse();
    let mut out = seq.clone();
    for s in &mut out.samples {
        s.gyr = r_inv.rotate(s.gyr);
        s.acc = r_inv.rotate(s.acc);
    }
    out.truth = Some(truth.iter().map(|q| q.hamilton(r)).collect());
    out.gyr_bias = r_inv.rotate(seq.gyr_bias);
    Ok(out)
}

/// Error levels drawn for one augmented copy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorDraw {
    pub gyr_noise_std: f64,
    pub acc_noise_std: f64,
    pub gyr_bias: Vec3,
}

/// Adds white noise with per-sequence random stds and a constant gyro bias.
/// The truth is left untouched.
pub fn error_augment(seq: &ImuSequence, cfg: &AugmentConfig, rng: &mut SimRng) -> (ImuSequence, ErrorDraw) {
    let gyr_noise_std = rng.random::<f64>() * cfg.gyr_noise_std_max;
    let acc_noise_std = rng.random::<f64>() * cfg.acc_noise_std_max;
    let gyr_bias = Vec3::new(standard_normal(rng), standard_normal(rng), standard_normal(rng)) * cfg.gyr_bias_std;
    let noise_seed = rng.random::<u64>();

    let mut out = seq.clone();
    if gyr_bias != Vec3::ZERO {
        for s in &mut out.samples {
            s.gyr += gyr_bias;
        }
        out.gyr_bias += gyr_bias;
    }
    add_white_noise(&mut out, gyr_noise_std, acc_noise_std, noise_seed);
    (
        out,
        ErrorDraw {
            gyr_noise_std,
            acc_noise_std,
            gyr_bias,
        },
    )
}

/// Full augmentation of one training copy: optional random re-mounting, then
/// measurement errors.
pub fn augment_sequence(seq: &ImuSequence, cfg: &AugmentConfig, rng: &mut SimRng) -> Result<ImuSequence> {
    let rotated = if cfg.rotation_enabled {
        virtual_rotation(seq, random_unit_quaternion(rng))?
    } else {
        seq.clone()
    };
    Ok(error_augment(&rotated, cfg, rng).0)
}

const STD_FLOOR: f64 = 1e-9;

/// Per-channel mean and std of the six IMU channels (gyr xyz, acc xyz).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl Default for StandardizationStats {
    fn default() -> Self {
        StandardizationStats {
            mean: [0.0; 6],
            std: [1.0; 6],
        }
    }
}

fn channels(gyr: Vec3, acc: Vec3) -> [f64; 6] {
    [gyr.x, gyr.y, gyr.z, acc.x, acc.y, acc.z]
}

impl StandardizationStats {
    /// Pooled statistics over all samples of all sequences.
    pub fn fit(sequences: &[ImuSequence]) -> Result<Self> {
        let n: usize = sequences.iter().map(ImuSequence::len).sum();
        if n == 0 {
            return Err(invalid("cannot fit standardization on empty data"));
        }
        let mut mean = [0.0; 6];
        for s in sequences.iter().flat_map(|q| &q.samples) {
            for (m, v) in mean.iter_mut().zip(channels(s.gyr, s.acc)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; 6];
        for s in sequences.iter().flat_map(|q| &q.samples) {
            for ((acc, v), m) in var.iter_mut().zip(channels(s.gyr, s.acc)).zip(mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var.map(|v| (v / n as f64).sqrt().max(STD_FLOOR));
        Ok(StandardizationStats { mean, std })
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.iter().any(|v| !v.is_finite()) || self.std.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("standardization stats must be finite with positive std"));
        }
        Ok(())
    }

    pub fn apply_sample(&self, gyr: Vec3, acc: Vec3) -> [f64; 6] {
        let mut x = channels(gyr, acc);
        for i in 0..6 {
            x[i] = (x[i] - self.mean[i]) / self.std[i];
        }
        x
    }

    /// Standardized copy of a sequence; only for network inputs.
    pub fn apply(&self, seq: &ImuSequence) -> ImuSequence {
        let mut out = seq.clone();
        for s in &mut out.samples {
            let x = self.apply_sample(s.gyr, s.acc);
            s.gyr = Vec3::new(x[0], x[1], x[2]);
            s.acc = Vec3::new(x[3], x[4], x[5]);
        }
        out
    }
}
