//! Sequence files, evaluation scenarios, attitude RMSE and comparison reports.
//!
//! # Sequence file format
//!
//! UTF-8 CSV with a header row and the columns
//!
//! ```text
//! t,gyr_x,gyr_y,gyr_z,acc_x,acc_y,acc_z,qw,qx,qy,qz,valid
//! ```
//!
//! in seconds, rad/s and m/s². `valid` is `1` or `0`; the quaternion columns
//! may only be empty on rows with `valid = 0`, or on every row of a file
//! without ground truth. Lines starting with `#` are comments. Numbers are
//! written in the shortest form that parses back to the identical `f64`.
//!
//! Estimate files use `t,qw,qx,qy,qz`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::Estimator;
use crate::pool;
use crate::quat::{attitude_error, deg_to_rad, rad_to_deg, Quaternion, Vec3};
use crate::resample::resample_sequence;
use crate::rng::{derive_seed, hash_str, rng_from_seed, standard_normal};
use crate::sim::{prepend_rest, ImuSample, ImuSequence};

pub const SEQUENCE_HEADER: [&str; 12] = [
    "t", "gyr_x", "gyr_y", "gyr_z", "acc_x", "acc_y", "acc_z", "qw", "qx", "qy", "qz", "valid",
];
pub const ESTIMATE_HEADER: [&str; 5] = ["t", "qw", "qx", "qy", "qz"];

/// Maximum deviation from unit norm accepted for truth quaternions in files.
const FILE_NORM_TOLERANCE: f64 = 1e-3;

fn parse_err(path: &Path, row: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        msg: msg.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(crate::error::open_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn column_indices(path: &Path, headers: &csv::StringRecord, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| parse_err(path, 1, format!("missing column {name:?}")))
        })
        .collect()
}

fn field(path: &Path, row: usize, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let s = rec.get(idx).unwrap_or("");
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(path, row, format!("bad value {s:?} in column {name}")))
}

/// Nominal rate from the median sample spacing, snapped to 1 µHz.
fn infer_rate(times: &[f64]) -> Option<f64> {
    let mut dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if dts.is_empty() {
        return None;
    }
    let mid = dts.len() / 2;
    let median = *dts.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1;
    Some(((1.0 / median) * 1e6).round() / 1e6)
}

/// Reads a sequence file. The sequence is named after the file stem and its
/// dataset after the parent directory.
pub fn load_sequence(path: impl AsRef<Path>) -> Result<ImuSequence> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let idx = column_indices(path, &headers, &SEQUENCE_HEADER)?;

    let mut samples = Vec::new();
    let mut truth: Vec<Option<Quaternion>> = Vec::new();
    let mut valid = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec.position().map_or(i + 2, |p| p.line() as usize);
        let f = |c: usize| field(path, row, &rec, idx[c], SEQUENCE_HEADER[c]);
        let t = f(0)?;
        if let Some(prev) = samples.last().map(|s: &ImuSample| s.t) {
            if t <= prev {
                return Err(parse_err(path, row, "time stamps must increase"));
            }
        }
        samples.push(ImuSample {
            t,
            gyr: Vec3::new(f(1)?, f(2)?, f(3)?),
            acc: Vec3::new(f(4)?, f(5)?, f(6)?),
        });
        let ok = match rec.get(idx[11]).unwrap_or("") {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(parse_err(path, row, format!("bad valid flag {other:?}"))),
        };
        let q_empty = (7..11).all(|c| rec.get(idx[c]).unwrap_or("").is_empty());
        if q_empty {
            if ok {
                return Err(parse_err(path, row, "missing truth quaternion on a valid row"));
            }
            truth.push(None);
        } else {
            let q = Quaternion::new(f(7)?, f(8)?, f(9)?, f(10)?);
            if (q.norm() - 1.0).abs() > FILE_NORM_TOLERANCE {
                return Err(parse_err(path, row, format!("truth quaternion norm {} is not 1", q.norm())));
            }
            truth.push(Some(q));
        }
        valid.push(ok);
    }
    if samples.len() < 2 {
        return Err(parse_err(path, 1, "need at least two samples"));
    }
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let rate_hz = infer_rate(&times).expect("two samples");

    let truth = if truth.iter().all(Option::is_none) {
        None
    } else {
        // masked gaps hold the last known orientation so the series stays unit
        let first = truth.iter().flatten().next().copied().expect("some truth");
        let mut last = first;
        Some(
            truth
                .into_iter()
                .map(|q| {
                    if let Some(q) = q {
                        last = q;
                    }
                    last
                })
                .collect(),
        )
    };
    let name = path.file_stem().map_or("sequence".into(), |s| s.to_string_lossy().into_owned());
    let dataset = path
        .parent()
        .and_then(|p| p.file_name())
        .map_or("default".into(), |s| s.to_string_lossy().into_owned());
    let seq = ImuSequence {
        name,
        dataset,
        rate_hz,
        samples,
        truth,
        valid,
        gyr_bias: Vec3::ZERO,
        rest_prefix: 0,
    };
    seq.validate().map_err(|e| parse_err(path, 1, e.to_string()))?;
    Ok(seq)
}

pub fn write_sequence<W: Write>(seq: &ImuSequence, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SEQUENCE_HEADER)?;
    for (k, s) in seq.samples.iter().enumerate() {
        let mut rec: Vec<String> = [s.t, s.gyr.x, s.gyr.y, s.gyr.z, s.acc.x, s.acc.y, s.acc.z]
            .iter()
            .map(f64::to_string)
            .collect();
        match &seq.truth {
            Some(t) => rec.extend(t[k].to_array().iter().map(f64::to_string)),
            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        rec.push(if seq.valid[k] { "1" } else { "0" }.into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sequence(seq: &ImuSequence, path: impl AsRef<Path>) -> Result<()> {
    write_sequence(seq, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn write_estimates<W: Write>(times: &[f64], est: &[Quaternion], out: W) -> Result<()> {
    if times.len() != est.len() {
        return Err(invalid("time and estimate lengths differ"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_HEADER)?;
    for (t, q) in times.iter().zip(est) {
        w.write_record([t, &q.w, &q.x, &q.y, &q.z].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_estimates(path: impl AsRef<Path>) -> Result<Vec<Quaternion>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let idx = column_indices(path, &headers, &ESTIMATE_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec.position().map_or(i + 2, |p| p.line() as usize);
        let f = |c: usize| field(path, row, &rec, idx[c], ESTIMATE_HEADER[c]);
        let q = Quaternion::new(f(1)?, f(2)?, f(3)?, f(4)?);
        if (q.norm() - 1.0).abs() > FILE_NORM_TOLERANCE {
            return Err(parse_err(path, row, "estimate quaternion is not unit length"));
        }
        out.push(q);
    }
    Ok(out)
}

/// Attitude RMSE in degrees over the samples where `mask` is set.
pub fn rmse_deg(est: &[Quaternion], truth: &[Quaternion], mask: &[bool]) -> Result<f64> {
    if est.len() != truth.len() || mask.len() != truth.len() {
        return Err(invalid(format!(
            "length mismatch: {} estimates, {} truth, {} mask",
            est.len(),
            truth.len(),
            mask.len()
        )));
    }
    let (sum, n) = est
        .iter()
        .zip(truth)
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((e, t), _)| (s + attitude_error(*t, *e).powi(2), n + 1));
    if n == 0 {
        return Err(Error::AllMasked);
    }
    Ok(rad_to_deg((sum / n as f64).sqrt()))
}

/// Valid samples after the rest prefix; the rest phase only serves
/// convergence. Falls back to all valid samples for pure rest sequences.
pub fn motion_mask(seq: &ImuSequence) -> Vec<bool> {
    let mask: Vec<bool> = seq
        .valid
        .iter()
        .enumerate()
        .map(|(k, &v)| v && k >= seq.rest_prefix)
        .collect();
    if mask.iter().any(|&m| m) {
        mask
    } else {
        seq.valid.clone()
    }
}

/// Default stillness threshold for rest detection, rad/s.
pub fn default_stillness_threshold() -> f64 {
    deg_to_rad(2.0)
}

/// Length of the initial still phase: the longest prefix whose gyro readings
/// stay within `threshold` of the median over the first `min_duration`
/// seconds. Spans shorter than `min_duration` count as no rest.
pub fn detect_rest_prefix(seq: &ImuSequence, threshold: f64, min_duration: f64) -> usize {
    let min_len = (min_duration * seq.rate_hz).ceil().max(1.0) as usize;
    if seq.len() < min_len {
        return 0;
    }
    let median = |f: fn(&ImuSample) -> f64| {
        let mut v: Vec<f64> = seq.samples[..min_len].iter().map(f).collect();
        let mid = v.len() / 2;
        *v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
    };
    let reference = Vec3::new(median(|s| s.gyr.x), median(|s| s.gyr.y), median(|s| s.gyr.z));
    let span = seq
        .samples
        .iter()
        .take_while(|s| (s.gyr - reference).norm() < threshold)
        .count();
    if span >= min_len {
        span
    } else {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// The sequence exactly as given.
    AsIs,
    /// Initial rest, gyro bias removed.
    Restrictive,
    /// Initial rest, constant gyro bias.
    PartiallyRestrictive,
    /// No initial rest, constant gyro bias.
    Realistic,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Restrictive,
        ScenarioKind::PartiallyRestrictive,
        ScenarioKind::Realistic,
    ];
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::AsIs => "as_is",
            ScenarioKind::Restrictive => "restrictive",
            ScenarioKind::PartiallyRestrictive => "partially_restrictive",
            ScenarioKind::Realistic => "realistic",
        })
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_is" | "as-is" => Ok(ScenarioKind::AsIs),
            "restrictive" => Ok(ScenarioKind::Restrictive),
            "partially_restrictive" | "partially-restrictive" => Ok(ScenarioKind::PartiallyRestrictive),
            "realistic" => Ok(ScenarioKind::Realistic),
            _ => Err(invalid(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Std of the per-axis turn-on gyro bias, rad/s.
    pub bias_std: f64,
    /// Rest added in front of sequences that have none, seconds.
    pub rest_duration: f64,
    pub seed: u64,
    /// Overrides rest detection with a known rest length in seconds.
    pub rest_prefix: Option<f64>,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Scenario {
            kind,
            bias_std: deg_to_rad(0.5),
            rest_duration: 5.0,
            seed,
            rest_prefix: None,
        }
    }
}

/// Builds the scenario variant of a sequence.
///
/// The bias drawn for the partially restrictive variant depends only on the
/// scenario seed and the sequence name, so the realistic variant carries the
/// same bias with the rest phase cut off.
pub fn build_scenario(seq: &ImuSequence, sc: &Scenario) -> Result<ImuSequence> {
    seq.truth()?;
    if !(sc.bias_std >= 0.0) {
        return Err(invalid("bias std must be non-negative"));
    }
    if sc.kind == ScenarioKind::AsIs {
        return Ok(seq.clone());
    }
    let mut out = seq.clone();
    if out.gyr_bias != Vec3::ZERO {
        for s in &mut out.samples {
            s.gyr = s.gyr - seq.gyr_bias;
        }
        out.gyr_bias = Vec3::ZERO;
    }
    out.rest_prefix = match sc.rest_prefix {
        Some(secs) => ((secs * out.rate_hz).round() as usize).min(out.len()),
        None if out.rest_prefix > 0 => out.rest_prefix,
        None => detect_rest_prefix(&out, default_stillness_threshold(), 0.5),
    };
    if out.rest_prefix == 0 {
        out = prepend_rest(&out, sc.rest_duration)?;
    }
    if sc.kind == ScenarioKind::Restrictive {
        return Ok(out);
    }
    if sc.bias_std > 0.0 {
        let mut rng = rng_from_seed(derive_seed(sc.seed, hash_str(&seq.name)));
        let bias = Vec3::new(standard_normal(&mut rng), standard_normal(&mut rng), standard_normal(&mut rng))
            * sc.bias_std;
        for s in &mut out.samples {
            s.gyr += bias;
        }
        out.gyr_bias = bias;
    }
    if sc.kind == ScenarioKind::PartiallyRestrictive {
        return Ok(out);
    }
    let start = out.rest_prefix.min(out.len().saturating_sub(2));
    let mut cut = out.slice(start, out.len());
    cut.rest_prefix = 0;
    Ok(cut)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub estimator: String,
    pub dataset: String,
    pub sequence: String,
    pub scenario: ScenarioKind,
    pub rate_hz: f64,
    /// `None` when the estimator failed on this sequence.
    pub rmse_deg: Option<f64>,
    pub samples: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub estimator: String,
    pub dataset: String,
    pub scenario: ScenarioKind,
    /// Present in frequency sweeps, where every rate is summarized separately.
    pub rate_hz: Option<f64>,
    pub count: usize,
    pub failed: usize,
    /// Statistics over successful rows; `None` if every row failed.
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<Aggregate>,
    pub by_rate: bool,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl EvalReport {
    pub fn from_rows(mut rows: Vec<EvalRow>, by_rate: bool) -> Self {
        rows.sort_by(|a, b| {
            (&a.estimator, &a.dataset, &a.sequence, a.scenario)
                .cmp(&(&b.estimator, &b.dataset, &b.sequence, b.scenario))
                .then(a.rate_hz.total_cmp(&b.rate_hz))
        });
        let aggregates = Self::aggregate(&rows, by_rate);
        EvalReport {
            rows,
            aggregates,
            by_rate,
        }
    }

    fn aggregate(rows: &[EvalRow], by_rate: bool) -> Vec<Aggregate> {
        type Key = (String, String, ScenarioKind, Option<u64>);
        let mut groups: BTreeMap<Key, (Vec<f64>, usize)> = BTreeMap::new();
        for r in rows {
            let rate = by_rate.then(|| r.rate_hz.to_bits());
            let g = groups
                .entry((r.estimator.clone(), r.dataset.clone(), r.scenario, rate))
                .or_default();
            match r.rmse_deg {
                Some(v) => g.0.push(v),
                None => g.1 += 1,
            }
        }
        groups
            .into_iter()
            .map(|((estimator, dataset, scenario, rate), (mut vals, failed))| {
                let count = vals.len();
                let (mean, med, max) = if count == 0 {
                    (None, None, None)
                } else {
                    let mean = vals.iter().sum::<f64>() / count as f64;
                    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (Some(mean), Some(median(&mut vals)), Some(max))
                };
                Aggregate {
                    estimator,
                    dataset,
                    scenario,
                    rate_hz: rate.map(f64::from_bits),
                    count,
                    failed,
                    mean,
                    median: med,
                    max,
                }
            })
            .collect()
    }

    /// Recomputes the aggregates from the rows.
    pub fn recompute(&self) -> Vec<Aggregate> {
        Self::aggregate(&self.rows, self.by_rate)
    }

    /// Mean RMSE over all successful rows of one estimator.
    pub fn mean_for(&self, estimator: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.estimator == estimator)
            .filter_map(|r| r.rmse_deg)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimator", "dataset", "sequence", "scenario", "rate_hz", "rmse_deg", "samples", "error"])?;
        for r in &self.rows {
            w.write_record([
                r.estimator.clone(),
                r.dataset.clone(),
                r.sequence.clone(),
                r.scenario.to_string(),
                r.rate_hz.to_string(),
                r.rmse_deg.map_or(String::new(), |v| v.to_string()),
                r.samples.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.aggregates)?)
    }
}

fn score<E: Estimator + ?Sized>(est: &E, seq: &ImuSequence, scenario: ScenarioKind) -> EvalRow {
    let result = est.estimate(seq).and_then(|q| rmse_deg(&q, seq.truth()?, &motion_mask(seq)));
    let (rmse_deg, error) = match result {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    EvalRow {
        estimator: est.id(),
        dataset: seq.dataset.clone(),
        sequence: seq.name.clone(),
        scenario,
        rate_hz: seq.rate_hz,
        rmse_deg,
        samples: seq.len(),
        error,
    }
}

/// Scores every estimator on every sequence under every scenario. Estimator
/// failures become failed rows.
pub fn evaluate(
    estimators: &[&dyn Estimator],
    sequences: &[ImuSequence],
    scenarios: &[Scenario],
    threads: usize,
) -> Result<EvalReport> {
    let mut prepared = Vec::with_capacity(sequences.len() * scenarios.len());
    for seq in sequences {
        for sc in scenarios {
            prepared.push((build_scenario(seq, sc)?, sc.kind));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..estimators.len())
        .flat_map(|e| (0..prepared.len()).map(move |p| (e, p)))
        .collect();
    let rows = pool::map(&jobs, threads, |&(e, p)| score(estimators[e], &prepared[p].0, prepared[p].1));
    Ok(EvalReport::from_rows(rows, false))
}

/// Scores one estimator on every sequence resampled to every rate.
pub fn frequency_sweep(
    estimator: &dyn Estimator,
    sequences: &[ImuSequence],
    rates: &[f64],
    scenario: &Scenario,
    threads: usize,
) -> Result<EvalReport> {
    let base: Vec<ImuSequence> = sequences
        .iter()
        .map(|s| build_scenario(s, scenario))
        .collect::<Result<_>>()?;
    let mut prepared = Vec::with_capacity(base.len() * rates.len());
    for seq in &base {
        for &rate in rates {
            prepared.push(resample_sequence(seq, rate)?);
        }
    }
    let rows = pool::map(&prepared, threads, |seq| score(estimator, seq, scenario.kind));
    Ok(EvalReport::from_rows(rows, true))
}
