use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use imu_attitude::augment::{augment_sequence, AugmentConfig, StandardizationStats};
use imu_attitude::estimator::{ComplementaryFilter, Precomputed, Strapdown};
use imu_attitude::eval::{
    evaluate, frequency_sweep, load_estimates, load_sequence, write_estimates, write_sequence, EvalReport, Scenario,
    ScenarioKind,
};
use imu_attitude::filters::{log_space, run_filter, tune_filter, FilterGrid, FilterKind, FilterParams, TuneResult};
use imu_attitude::gru::{GruNetwork, NetworkEstimator};
use imu_attitude::quat::deg_to_rad;
use imu_attitude::resample::{rate_grid, resample_sequence, Jitr, RateGridKind, RateGridStrategy};
use imu_attitude::rng::{derive_seed, rng_from_seed};
use imu_attitude::sim::{generate, inject_errors, prepend_rest, ErrorSpec, MotionKind, MotionProfile};
use imu_attitude::training::{load_checkpoint, train_with, TrainConfig, TrainOptions};
use imu_attitude::{Error, Estimator, ImuSequence, InitPolicy, Result, Vec3};

/// Attitude estimation from accelerometer and gyroscope data.
///
/// Angular rates on the command line are in deg/s; JSON config files use the
/// library units (rad/s, m/s², seconds).
#[derive(Parser, Debug)]
#[command(name = "imu-attitude", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic IMU sequence with ground truth.
    Simulate(SimulateArgs),
    /// Apply a random virtual rotation and random sensor errors.
    Augment(AugmentArgs),
    /// Resample a sequence to another rate.
    Resample(ResampleArgs),
    /// Run a complementary filter over a sequence.
    RunFilter(RunFilterArgs),
    /// Grid-search complementary filter parameters.
    Tune(TuneArgs),
    /// Train a recurrent attitude network.
    Train(TrainArgs),
    /// Run a trained network over a sequence.
    Infer(InferArgs),
    /// Score estimators on sequences.
    Evaluate(EvaluateArgs),
    /// Score one estimator across sampling rates.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct Output {
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Omit the timestamp comment line so output is byte-reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Profile {
    Rest,
    ConstantRate,
    Sinusoidal,
    RandomSmooth,
}

impl From<Profile> for MotionKind {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Rest => MotionKind::Rest,
            Profile::ConstantRate => MotionKind::ConstantRate,
            Profile::Sinusoidal => MotionKind::SinusoidalMultiAxis,
            Profile::RandomSmooth => MotionKind::RandomSmooth,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct SimConfig {
    rate_hz: f64,
    profile: MotionProfile,
    errors: ErrorSpec,
    /// Rest in front of the motion, seconds.
    rest_prefix: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rate_hz: 100.0,
            profile: MotionProfile::default(),
            errors: ErrorSpec::default(),
            rest_prefix: 0.0,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// JSON simulation config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Sampling rate, Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Peak angular rate, deg/s.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Motion frequency band as LO,HI in Hz.
    #[arg(long, value_delimiter = ',')]
    band: Option<Vec<f64>>,
    /// Peak translational acceleration, m/s².
    #[arg(long)]
    translation: Option<f64>,
    /// Rotation axis X,Y,Z for the constant-rate profile.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    axis: Option<Vec<f64>>,
    /// Fade-in and fade-out of the motion, seconds.
    #[arg(long)]
    taper: Option<f64>,
    /// Rest in front of the motion, seconds.
    #[arg(long)]
    rest: Option<f64>,
    /// Gyro white noise std, deg/s.
    #[arg(long)]
    gyr_noise: Option<f64>,
    /// Accelerometer white noise std, m/s².
    #[arg(long)]
    acc_noise: Option<f64>,
    /// Std of the constant gyro bias, deg/s.
    #[arg(long)]
    gyr_bias: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the virtual rotation.
    #[arg(long)]
    no_rotation: bool,
    /// Upper bound of the drawn gyro noise std, deg/s.
    #[arg(long)]
    gyr_noise_max: Option<f64>,
    /// Upper bound of the drawn accelerometer noise std, m/s².
    #[arg(long)]
    acc_noise_max: Option<f64>,
    /// Std of the gyro bias, deg/s.
    #[arg(long)]
    gyr_bias_std: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct ResampleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Target rate, Hz.
    #[arg(long)]
    rate: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct FilterChoice {
    /// Filter family, A or B.
    #[arg(long, default_value = "B")]
    kind: String,
    /// Beta (A) or Kp (B).
    #[arg(long)]
    gain: Option<f64>,
    /// Integral gain (B only).
    #[arg(long)]
    ki: Option<f64>,
    /// Parameters from `tune` output or a parameter JSON file.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Start from the identity instead of the first accelerometer sample.
    #[arg(long)]
    no_accel_init: bool,
}

#[derive(Args, Debug)]
struct RunFilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    filter: FilterChoice,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct TuneArgs {
    /// Sequences with ground truth.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, default_value = "B")]
    kind: String,
    /// Scenario applied to every sequence before tuning.
    #[arg(long, default_value = "as_is")]
    scenario: ScenarioKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gain range as LO,HI,COUNT (log-spaced).
    #[arg(long, value_delimiter = ',')]
    gains: Option<Vec<f64>>,
    /// Ki range as LO,HI,COUNT (log-spaced, zero is always included).
    #[arg(long, value_delimiter = ',')]
    kis: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Tuning result, JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training sequences.
    #[arg(long = "train", required = true, num_args = 1..)]
    train: Vec<PathBuf>,
    /// Validation sequences.
    #[arg(long = "val", num_args = 1..)]
    val: Vec<PathBuf>,
    /// JSON training config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    max_lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write a checkpoint after every epoch.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Continue training from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// No per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
    /// Weight file of the best network.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct Common {
    /// Sequences with ground truth.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Network weights for the `gru` estimator.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Filter parameters for `filter-a` / `filter-b` (from `tune`).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Known rest length at the start of each sequence, seconds.
    #[arg(long)]
    rest_prefix: Option<f64>,
    /// Turn-on gyro bias std for the biased scenarios, deg/s.
    #[arg(long)]
    bias_std: Option<f64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Per-sequence rows, CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aggregates and rows, JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Omit the timestamp comment line so output is byte-reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// strapdown, strapdown-true, filter-a[:BETA], filter-b[:KP[:KI]] or gru.
    #[arg(long, num_args = 1..)]
    estimator: Vec<String>,
    /// Precomputed estimates, one file per input in the same order.
    #[arg(long, num_args = 1..)]
    estimates: Vec<PathBuf>,
    /// as_is, restrictive, partially_restrictive or realistic.
    #[arg(long, num_args = 1.., default_value = "as_is")]
    scenario: Vec<ScenarioKind>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    estimator: String,
    /// Explicit rates, Hz.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
    rates: Vec<f64>,
    /// Rate grid as KIND,COUNT,FMIN,FMAX with KIND one of equidistant_fs,
    /// equidistant_ts, combined.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value = "as_is")]
    scenario: ScenarioKind,
    /// Run the estimator at this rate and resample around it.
    #[arg(long)]
    jitr: Option<f64>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Opens `path` and writes the timestamp comment unless `deterministic`.
fn create_commented(path: &Path, deterministic: bool) -> Result<BufWriter<File>> {
    let mut w = create(path)?;
    if !deterministic {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(w, "# generated by imu-attitude {} at unix time {secs}", env!("CARGO_PKG_VERSION"))?;
    }
    Ok(w)
}

fn save_seq(seq: &ImuSequence, o: &Output) -> Result<()> {
    let mut w = create_commented(&o.out, o.deterministic)?;
    write_sequence(seq, &mut w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg: SimConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SimConfig::default(),
    };
    let p = &mut cfg.profile;
    if let Some(v) = a.profile {
        p.kind = v.into();
    }
    if let Some(v) = a.rate {
        cfg.rate_hz = v;
    }
    if let Some(v) = a.duration {
        p.duration = v;
    }
    if let Some(v) = a.amplitude {
        p.amplitude = deg_to_rad(v);
    }
    if let Some(v) = a.band {
        if v.len() != 2 {
            return Err(bad("--band must be LO,HI"));
        }
        p.frequency_band = (v[0], v[1]);
    }
    if let Some(v) = a.translation {
        p.translation_accel_amplitude = v;
    }
    if let Some(v) = a.axis {
        if v.len() != 3 {
            return Err(bad("--axis must be X,Y,Z"));
        }
        p.axis = Vec3::new(v[0], v[1], v[2]);
    }
    if let Some(v) = a.taper {
        p.taper = v;
    }
    if let Some(v) = a.seed {
        p.seed = v;
        cfg.errors.seed = derive_seed(v, 1);
    }
    if let Some(v) = a.rest {
        cfg.rest_prefix = v;
    }
    if let Some(v) = a.gyr_noise {
        cfg.errors.gyr_noise_std = deg_to_rad(v);
    }
    if let Some(v) = a.acc_noise {
        cfg.errors.acc_noise_std = v;
    }
    if let Some(v) = a.gyr_bias {
        cfg.errors.gyr_bias_std = deg_to_rad(v);
    }
    if cfg.profile.kind == MotionKind::Rest {
        cfg.profile.amplitude = 0.0;
    }
    let mut seq = generate(&cfg.profile, cfg.rate_hz)?;
    if cfg.rest_prefix > 0.0 {
        seq = prepend_rest(&seq, cfg.rest_prefix)?;
    }
    let seq = inject_errors(&seq, &cfg.errors)?;
    save_seq(&seq, &a.output)
}

fn augment(a: AugmentArgs) -> Result<()> {
    let seq = load_sequence(&a.input)?;
    let mut cfg = AugmentConfig {
        rotation_enabled: !a.no_rotation,
        seed: a.seed,
        ..Default::default()
    };
    if let Some(v) = a.gyr_noise_max {
        cfg.gyr_noise_std_max = deg_to_rad(v);
    }
    if let Some(v) = a.acc_noise_max {
        cfg.acc_noise_std_max = v;
    }
    if let Some(v) = a.gyr_bias_std {
        cfg.gyr_bias_std = deg_to_rad(v);
    }
    cfg.validate()?;
    let mut rng = rng_from_seed(a.seed);
    let out = augment_sequence(&seq, &cfg, &mut rng)?;
    save_seq(&out, &a.output)
}

fn resample(a: ResampleArgs) -> Result<()> {
    let seq = load_sequence(&a.input)?;
    save_seq(&resample_sequence(&seq, a.rate)?, &a.output)
}

/// Reads filter parameters from either a tuning result or a bare parameter set.
fn read_params(path: &Path) -> Result<FilterParams> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    if let Ok(t) = serde_json::from_str::<TuneResult>(&text) {
        return Ok(t.best);
    }
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: not a parameter file: {e}", path.display())))
}

fn default_params(kind: FilterKind) -> FilterParams {
    match kind {
        FilterKind::A => FilterParams::new(kind, 0.1, 0.0).unwrap(),
        FilterKind::B => FilterParams::new(kind, 1.0, 0.0).unwrap(),
    }
}

fn filter_params(f: &FilterChoice) -> Result<FilterParams> {
    let kind: FilterKind = f.kind.parse()?;
    let mut p = match &f.params {
        Some(path) => read_params(path)?,
        None => default_params(kind),
    };
    if p.kind != kind {
        return Err(bad(format!("parameter file is for filter {:?}, not {kind:?}", p.kind)));
    }
    if let Some(g) = f.gain {
        p.gain = g;
    }
    if let Some(k) = f.ki {
        p.ki = k;
    }
    if f.no_accel_init {
        p.init_from_accel = false;
    }
    p.validate()?;
    Ok(p)
}

fn write_est(seq: &ImuSequence, est: &[imu_attitude::Quaternion], o: &Output) -> Result<()> {
    let times: Vec<f64> = seq.samples.iter().map(|s| s.t).collect();
    let mut w = create_commented(&o.out, o.deterministic)?;
    write_estimates(&times, est, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run_filter_cmd(a: RunFilterArgs) -> Result<()> {
    let seq = load_sequence(&a.input)?;
    let p = filter_params(&a.filter)?;
    let est = run_filter(&p, &seq, None)?;
    write_est(&seq, &est, &a.output)
}

fn range(v: &[f64], what: &str) -> Result<Vec<f64>> {
    if v.len() != 3 {
        return Err(bad(format!("{what} must be LO,HI,COUNT")));
    }
    let n = v[2];
    if !(v[0] > 0.0 && v[1] >= v[0] && n >= 1.0 && n.fract() == 0.0) {
        return Err(bad(format!("{what} must be LO,HI,COUNT with 0 < LO <= HI")));
    }
    Ok(log_space(v[0], v[1], n as usize))
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<ImuSequence>> {
    paths.iter().map(load_sequence).collect()
}

fn scenario(kind: ScenarioKind, c: &Common) -> Scenario {
    let mut sc = Scenario::new(kind, c.seed);
    sc.rest_prefix = c.rest_prefix;
    if let Some(b) = c.bias_std {
        sc.bias_std = deg_to_rad(b);
    }
    sc
}

fn tune(a: TuneArgs) -> Result<()> {
    let kind: FilterKind = a.kind.parse()?;
    let sc = Scenario::new(a.scenario, a.seed);
    let seqs: Vec<ImuSequence> = load_all(&a.input)?
        .iter()
        .map(|s| imu_attitude::eval::build_scenario(s, &sc))
        .collect::<Result<_>>()?;
    let mut grid = FilterGrid::default();
    if let Some(g) = &a.gains {
        grid.gains = range(g, "--gains")?;
    }
    if let Some(k) = &a.kis {
        grid.kis = std::iter::once(0.0).chain(range(k, "--kis")?).collect();
    }
    let res = tune_filter(kind, &seqs, &grid, a.threads)?;
    eprintln!("best {} mean RMSE {:.4} deg", res.best.id(), res.best_mean_rmse_deg);
    let mut w = create(&a.out)?;
    w.write_all(serde_json::to_string_pretty(&res)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.hidden {
        cfg.net.hidden = v;
    }
    if let Some(v) = a.max_lr {
        cfg.max_lr = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
        cfg.augment.seed = derive_seed(v, 2);
    }
    if let Some(v) = a.threads {
        cfg.threads = v;
    }
    let train_data = load_all(&a.train)?;
    let val_data = load_all(&a.val)?;
    if !cfg.net.time_aware && cfg.net.native_rate_hz.is_none() {
        cfg.net.native_rate_hz = train_data.first().map(|s| s.rate_hz);
    }
    let mut opts = TrainOptions {
        checkpoint: a.checkpoint.clone(),
        resume: None,
        verbose: !a.quiet,
    };
    let net = match &a.resume {
        Some(p) => {
            let (net, state) = load_checkpoint(p)?;
            opts.resume = state;
            net
        }
        None => GruNetwork::new(&cfg.net, StandardizationStats::default(), cfg.seed)?,
    };
    let (best, hist) = train_with(&net, &train_data, &val_data, &cfg, &opts)?;
    if let Some(e) = hist.best_epoch() {
        eprintln!("best epoch {e}");
    }
    best.save(&a.out)
}

fn infer(a: InferArgs) -> Result<()> {
    let net = GruNetwork::load(&a.weights)?;
    let seq = load_sequence(&a.input)?;
    let est = NetworkEstimator { name: "gru".into(), net }.estimate(&seq)?;
    write_est(&seq, &est, &a.output)
}

fn parse_estimator(spec: &str, c: &Common) -> Result<Box<dyn Estimator>> {
    let mut parts = spec.split(':');
    let name = parts.next().unwrap_or_default();
    let nums: Vec<f64> = parts
        .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?} in estimator {spec:?}"))))
        .collect::<Result<_>>()?;
    let filter = |kind: FilterKind| -> Result<Box<dyn Estimator>> {
        // a parameter file for the other filter family is ignored
        let mut p = match &c.params {
            Some(path) if nums.is_empty() => Some(read_params(path)?).filter(|p| p.kind == kind),
            _ => None,
        }
        .unwrap_or_else(|| default_params(kind));
        if let Some(&g) = nums.first() {
            p.gain = g;
        }
        if let Some(&k) = nums.get(1) {
            p.ki = k;
        }
        p.validate()?;
        Ok(Box::new(ComplementaryFilter(p)))
    };
    match name {
        "strapdown" => Ok(Box::new(Strapdown {
            init: InitPolicy::AccelInit,
        })),
        "strapdown-true" => Ok(Box::new(Strapdown { init: InitPolicy::Truth })),
        "filter-a" => filter(FilterKind::A),
        "filter-b" => filter(FilterKind::B),
        "gru" => {
            let path = c.weights.as_ref().ok_or_else(|| bad("estimator gru needs --weights"))?;
            let net = GruNetwork::load(path)?;
            Ok(Box::new(NetworkEstimator { name: "gru".into(), net }))
        }
        _ => Err(bad(format!("unknown estimator {spec:?}"))),
    }
}

fn report(r: &EvalReport, c: &Common) -> Result<()> {
    for a in &r.aggregates {
        let rate = a.rate_hz.map(|h| format!(" @{h}Hz")).unwrap_or_default();
        let stat = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        eprintln!(
            "{} {} {}{}: n={} failed={} mean={} median={} max={}",
            a.estimator,
            a.dataset,
            a.scenario,
            rate,
            a.count,
            a.failed,
            stat(a.mean),
            stat(a.median),
            stat(a.max)
        );
    }
    if let Some(p) = &c.out {
        let mut w = create_commented(p, c.deterministic)?;
        r.write_rows_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = &c.summary {
        let mut w = create(p)?;
        w.write_all(r.summary_json()?.as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let c = &a.common;
    let seqs = load_all(&c.input)?;
    let mut ests: Vec<Box<dyn Estimator>> =
        a.estimator.iter().map(|s| parse_estimator(s, c)).collect::<Result<_>>()?;
    if !a.estimates.is_empty() {
        if a.estimates.len() != seqs.len() {
            return Err(bad("--estimates needs one file per --input"));
        }
        let estimates = seqs
            .iter()
            .zip(&a.estimates)
            .map(|(s, p)| Ok((s.name.clone(), load_estimates(p)?)))
            .collect::<Result<_>>()?;
        ests.push(Box::new(Precomputed {
            name: "estimates".into(),
            estimates,
        }));
    }
    if ests.is_empty() {
        return Err(bad("nothing to evaluate: give --estimator or --estimates"));
    }
    let refs: Vec<&dyn Estimator> = ests.iter().map(|e| e.as_ref() as &dyn Estimator).collect();
    let scenarios: Vec<Scenario> = a.scenario.iter().map(|&k| scenario(k, c)).collect();
    let r = evaluate(&refs, &seqs, &scenarios, c.threads)?;
    report(&r, c)
}

fn parse_grid(s: &str) -> Result<RateGridStrategy> {
    let f: Vec<&str> = s.split(',').collect();
    let err = || bad(format!("bad --grid {s:?}, expected KIND,COUNT,FMIN,FMAX"));
    if f.len() != 4 {
        return Err(err());
    }
    let kind = match f[0] {
        "equidistant_fs" => RateGridKind::EquidistantFs,
        "equidistant_ts" => RateGridKind::EquidistantTs,
        "combined" => RateGridKind::Combined,
        _ => return Err(err()),
    };
    Ok(RateGridStrategy {
        kind,
        count: f[1].parse().map_err(|_| err())?,
        f_min: f[2].parse().map_err(|_| err())?,
        f_max: f[3].parse().map_err(|_| err())?,
    })
}

fn sweep(a: SweepArgs) -> Result<()> {
    let c = &a.common;
    let rates = match &a.grid {
        Some(g) => rate_grid(&parse_grid(g)?)?,
        None if a.rates.is_empty() => rate_grid(&RateGridStrategy {
            count: 10,
            ..Default::default()
        })?,
        None => a.rates.clone(),
    };
    let seqs = load_all(&c.input)?;
    let est = parse_estimator(&a.estimator, c)?;
    let est: Box<dyn Estimator> = match a.jitr {
        Some(native_hz) => Box::new(Jitr { inner: est, native_hz }),
        None => est,
    };
    let r = frequency_sweep(est.as_ref(), &seqs, &rates, &scenario(a.scenario, c), c.threads)?;
    report(&r, c)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate(a) => simulate(a),
        Cmd::Augment(a) => augment(a),
        Cmd::Resample(a) => resample(a),
        Cmd::RunFilter(a) => run_filter_cmd(a),
        Cmd::Tune(a) => tune(a),
        Cmd::Train(a) => train(a),
        Cmd::Infer(a) => infer(a),
        Cmd::Evaluate(a) => evaluate_cmd(a),
        Cmd::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
