//! Common interface for anything that turns an IMU sequence into attitude
//! estimates.

use crate::error::{invalid, Result};
use crate::filters::{accel_init, run_filter, FilterParams};
use crate::quat::Quaternion;
use crate::sim::{strapdown_gyro, ImuSequence};

/// How an estimator obtains its first orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitPolicy {
    Identity,
    AccelInit,
    /// Starts from the first ground-truth sample (oracle; for baselines only).
    Truth,
    /// The estimator infers its own state (recurrent network).
    Learned,
}

/// A causal attitude estimator producing one quaternion per input sample.
pub trait Estimator: Sync {
    fn id(&self) -> String;
    fn init_policy(&self) -> InitPolicy;
    fn estimate(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>>;
}

impl<E: Estimator + ?Sized> Estimator for &E {
    fn id(&self) -> String {
        (**self).id()
    }
    fn init_policy(&self) -> InitPolicy {
        (**self).init_policy()
    }
    fn estimate(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
        (**self).estimate(seq)
    }
}

impl<E: Estimator + ?Sized> Estimator for Box<E> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn init_policy(&self) -> InitPolicy {
        (**self).init_policy()
    }
    fn estimate(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
        (**self).estimate(seq)
    }
}

/// Gyroscope-only integration.
#[derive(Clone, Copy, Debug)]
pub struct Strapdown {
    pub init: InitPolicy,
}

impl Estimator for Strapdown {
    fn id(&self) -> String {
        match self.init {
            InitPolicy::AccelInit => "strapdown(accel-init)".into(),
            InitPolicy::Truth => "strapdown(true-init)".into(),
            _ => "strapdown".into(),
        }
    }

    fn init_policy(&self) -> InitPolicy {
        self.init
    }

    fn estimate(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
        let first = seq.samples.first().ok_or_else(|| invalid("empty sequence"))?;
        let q0 = match self.init {
            InitPolicy::AccelInit => accel_init(first.acc).unwrap_or(Quaternion::IDENTITY),
            InitPolicy::Truth => seq.truth()?[0],
            InitPolicy::Identity | InitPolicy::Learned => Quaternion::IDENTITY,
        };
        strapdown_gyro(seq, q0)
    }
}

/// A complementary filter with fixed parameters.
#[derive(Clone, Copy, Debug)]
pub struct ComplementaryFilter(pub FilterParams);

impl Estimator for ComplementaryFilter {
    fn id(&self) -> String {
        self.0.id()
    }

    fn init_policy(&self) -> InitPolicy {
        if self.0.init_from_accel {
            InitPolicy::AccelInit
        } else {
            InitPolicy::Identity
        }
    }

    fn estimate(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
        run_filter(&self.0, seq, None)
    }
}

/// Estimates computed elsewhere, matched to sequences by name.
#[derive(Clone, Debug)]
pub struct Precomputed {
    pub name: String,
    pub estimates: Vec<(String, Vec<Quaternion>)>,
}

impl Estimator for Precomputed {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn init_policy(&self) -> InitPolicy {
        InitPolicy::Learned
    }

    fn estimate(&self, seq: &ImuSequence) -> Result<Vec<Quaternion>> {
        let (_, est) = self
            .estimates
            .iter()
            .find(|(n, _)| *n == seq.name)
            .or_else(|| (self.estimates.len() == 1).then(|| &self.estimates[0]))
            .ok_or_else(|| invalid(format!("no estimates for sequence {}", seq.name)))?;
        if est.len() != seq.len() {
            return Err(invalid(format!(
                "estimate length {} differs from sequence length {}",
                est.len(),
                seq.len()
            )));
        }
        Ok(est.clone())
    }
}
