use imu_attitude::augment::StandardizationStats;
use imu_attitude::estimator::{ComplementaryFilter, InitPolicy, Strapdown};
use imu_attitude::eval::{evaluate, frequency_sweep, load_sequence, save_sequence, Scenario, ScenarioKind};
use imu_attitude::filters::{log_space, tune_filter, FilterGrid, FilterKind, FilterParams};
use imu_attitude::resample::{resample_sequence, resample_vec3_to_len};
use imu_attitude::rng::{rng_from_seed, standard_normal};
use imu_attitude::gru::{GruNetwork, NetConfig, NetworkEstimator};
use imu_attitude::sim::{generate, inject_errors, with_return_path, ErrorSpec, MotionProfile};
use imu_attitude::quat::deg_to_rad;
use imu_attitude::{Estimator, ImuSequence, Vec3};

fn noisy(seed: u64) -> ImuSequence {
    let s = generate(&MotionProfile::random_smooth(1.0, (0.05, 1.0), 1.0, 20.0, seed), 100.0).unwrap();
    inject_errors(
        &s,
        &ErrorSpec {
            gyr_noise_std: deg_to_rad(0.3),
            acc_noise_std: 0.1,
            gyr_bias_std: 0.0,
            seed,
        },
    )
    .unwrap()
}

#[test]
fn sequence_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lab").join("walk.csv");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    let seq = noisy(1);
    save_sequence(&seq, &path).unwrap();
    let back = load_sequence(&path).unwrap();
    assert_eq!(back.name, "walk");
    assert_eq!(back.dataset, "lab");
    assert_eq!(back.rate_hz, seq.rate_hz);
    assert_eq!(back.samples, seq.samples);
    assert_eq!(back.truth().unwrap(), seq.truth().unwrap());
}

#[test]
fn weights_round_trip_to_identical_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = NetConfig {
        hidden: 8,
        ..NetConfig::default()
    };
    let net = GruNetwork::new(&cfg, StandardizationStats::fit(&[noisy(2)]).unwrap(), 2).unwrap();
    let path = dir.path().join("w.json");
    net.save(&path).unwrap();
    let back = GruNetwork::load(&path).unwrap();
    assert_eq!(back, net);
    let seq = noisy(3);
    assert_eq!(back.forward_sequence(&seq).unwrap(), net.forward_sequence(&seq).unwrap());
}

#[test]
fn filters_beat_strapdown_once_bias_appears() {
    let seqs: Vec<ImuSequence> = (10..14).map(noisy).collect();
    let filt = ComplementaryFilter(FilterParams::new(FilterKind::B, 0.5, 0.01).unwrap());
    let sd = Strapdown {
        init: InitPolicy::AccelInit,
    };
    let net = NetworkEstimator {
        name: "untrained".into(),
        net: GruNetwork::new(&NetConfig { hidden: 4, ..NetConfig::default() }, StandardizationStats::default(), 0)
            .unwrap(),
    };
    let ests: Vec<&dyn Estimator> = vec![&filt, &sd, &net];
    let scenarios: Vec<Scenario> = ScenarioKind::ALL.iter().map(|&k| Scenario::new(k, 5)).collect();
    let report = evaluate(&ests, &seqs, &scenarios, 2).unwrap();
    assert_eq!(report.rows.len(), 3 * 4 * 3);
    assert!(report.rows.iter().all(|r| r.rmse_deg.is_some()));
    let mean = |est: &str, sc: ScenarioKind| {
        let a = report.aggregates.iter().find(|a| a.estimator == est && a.scenario == sc).unwrap();
        a.mean.unwrap()
    };
    for sc in [ScenarioKind::PartiallyRestrictive, ScenarioKind::Realistic] {
        assert!(mean(&filt.id(), sc) < mean(&sd.id(), sc));
    }
}

/// Sensor noise limited to a twentieth of the sequence rate, so resampling
/// to any rate above that keeps all of it.
fn add_slow_noise(seq: &mut ImuSequence, seed: u64) {
    let mut rng = rng_from_seed(seed);
    let m = seq.len() / 20;
    let mut draw = |std: f64| -> Vec<Vec3> {
        (0..m)
            .map(|_| Vec3::new(standard_normal(&mut rng), standard_normal(&mut rng), standard_normal(&mut rng)) * std)
            .collect()
    };
    let g = resample_vec3_to_len(&draw(deg_to_rad(0.3)), seq.len()).unwrap();
    let a = resample_vec3_to_len(&draw(0.1), seq.len()).unwrap();
    for (k, s) in seq.samples.iter_mut().enumerate() {
        s.gyr = s.gyr + g[k];
        s.acc = s.acc + a[k];
    }
}

#[test]
fn tuned_filter_is_consistent_across_rates() {
    let seqs: Vec<ImuSequence> = (20..23)
        .map(|seed| {
            let mut p = MotionProfile::random_smooth(1.0, (0.05, 1.0), 1.0, 30.0, seed);
            p.taper = 3.0;
            let mut s = with_return_path(&generate(&p, 500.0).unwrap()).unwrap();
            add_slow_noise(&mut s, seed);
            s
        })
        .collect();
    let native: Vec<ImuSequence> = seqs.iter().map(|s| resample_sequence(s, 100.0).unwrap()).collect();
    let grid = FilterGrid {
        gains: log_space(0.01, 10.0, 9),
        kis: vec![0.0, 0.01],
        init_from_accel: true,
    };
    let tuned = ComplementaryFilter(tune_filter(FilterKind::B, &native, &grid, 2).unwrap().best);
    let rates = [50.0, 100.0, 200.0, 350.0, 500.0];
    let report = frequency_sweep(&tuned, &seqs, &rates, &Scenario::new(ScenarioKind::AsIs, 0), 2).unwrap();
    assert_eq!(report.rows.len(), seqs.len() * rates.len());
    let means: Vec<f64> = report.aggregates.iter().map(|a| a.mean.unwrap()).collect();
    let (lo, hi) = means.iter().fold((f64::MAX, 0.0f64), |(l, h), &m| (l.min(m), h.max(m)));
    assert!(hi < 1.3 * lo, "{means:?}");
}
