//! Acceptance gate: twelve criteria, one test and one printed verdict each.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every line.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng as _;

use chamsim::chameleon::{ChameleonMeasurement, ForwardMap, BackwardMap, MeasurementSetting, SettingDynamics};
use chamsim::eprbohm::{
    chsh, correlation, quantum_reference, singlet_side_dynamics, tilted_probe, CorrelationMethod,
    EprModel, Side, SingletFunctionalModel, SingletOutcomeModel, STANDARD_ANGLES,
};
use chamsim::kolmogorov::{
    adjoint_apply, backward_evolve, conjugation_defect, forward_evolve, generator_apply,
    DiffusionSpec, SolverConfig, TimeWindow,
};
use chamsim::rng;
use chamsim::sampling::{
    detection_rate, fair_sampling_defect, full_ensemble_chsh, postselected_chsh,
    run_loophole_experiment_threaded, DetectionModel, RateSide,
};
use chamsim::statespace::{
    average, lebesgue_inner, PhysicalVariable, StateSpace, StatisticalState, ValueRange,
};

const ROOT2: f64 = std::f64::consts::SQRT_2;

fn verdict(number: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number:02} [{tag}] {name}: {detail}");
    assert!(pass, "criterion {number} ({name}) failed: {detail}");
}

fn ou_oracle(n: usize) -> (DiffusionSpec, StatisticalState, TimeWindow, SolverConfig) {
    let space = StateSpace::interval(-8.0, 8.0, n).unwrap();
    let p0 = StatisticalState::gaussian(space, 2.0, 0.25).unwrap();
    let spec = DiffusionSpec::ornstein_uhlenbeck(1.0, ROOT2);
    let window = TimeWindow::new(0.0, 1.0).unwrap();
    let cfg = SolverConfig::new(1e-3).unwrap();
    (spec, p0, window, cfg)
}

#[test]
fn criterion_01_ou_forward_moments() {
    let started = Instant::now();
    let (spec, p0, window, cfg) = ou_oracle(512);
    let evolved = forward_evolve(&spec, &p0, &window, &cfg).unwrap();
    let mean_err = (evolved.mean().unwrap() - 2.0 * (-1.0f64).exp()).abs();
    let var_err = (evolved.variance().unwrap() - (1.0 - 0.75 * (-2.0f64).exp())).abs();
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        1,
        "OU forward moments",
        mean_err <= 1e-3 && var_err <= 1e-3 && elapsed < 10.0,
        &format!("mean error {mean_err:.2e}, variance error {var_err:.2e}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_02_ou_backward_linear() {
    let (spec, p0, window, cfg) = ou_oracle(512);
    let space = p0.space().clone();
    let g = PhysicalVariable::coordinate(space.clone()).unwrap();
    let pulled = backward_evolve(&spec, &g, &window, &cfg).unwrap();
    let decay = (-1.0f64).exp();
    let max_err = space
        .cell_centers()
        .unwrap()
        .iter()
        .zip(pulled.values().unwrap())
        .map(|(y, v)| (v - decay * y).abs())
        .fold(0.0f64, f64::max);
    verdict(
        2,
        "OU backward linear pullback",
        max_err <= 1e-3,
        &format!("max grid error {max_err:.2e}"),
    );
}

#[test]
fn criterion_03_conjugation_defect_and_trend() {
    let defects = |n: usize| -> Vec<f64> {
        let (spec, p0, window, cfg) = ou_oracle(n);
        let space = p0.space().clone();
        [
            PhysicalVariable::coordinate(space.clone()).unwrap(),
            PhysicalVariable::from_fn(space.clone(), |y| y * y).unwrap(),
            PhysicalVariable::from_fn(space.clone(), |y| y.cos()).unwrap(),
        ]
        .iter()
        .map(|g| conjugation_defect(&spec, &p0, g, &window, &cfg).unwrap())
        .collect()
    };
    let coarse = defects(128);
    let fine = defects(512);
    let bound_ok = fine.iter().all(|d| *d <= 1e-3);
    let coarse_max = coarse.iter().cloned().fold(0.0f64, f64::max);
    let fine_max = fine.iter().cloned().fold(0.0f64, f64::max);
    let trend_ok = coarse_max >= 3.0 * fine_max && coarse_max > 1e-9;
    verdict(
        3,
        "conjugation defect",
        bound_ok && trend_ok,
        &format!(
            "defects at n=512 {:?}, family max {coarse_max:.2e} (n=128) -> {fine_max:.2e} (n=512)",
            fine.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_04_mass_conservation() {
    let (spec, p0, window, cfg) = ou_oracle(512);
    let evolved = forward_evolve(&spec, &p0, &window, &cfg).unwrap();
    let drift = (evolved.mass() - 1.0).abs();
    verdict(
        4,
        "mass conservation over 1000 steps",
        drift <= 1e-6,
        &format!("|mass - 1| = {drift:.2e}"),
    );
}

#[test]
fn criterion_05_discrete_adjointness_on_the_circle() {
    let space = StateSpace::circle(512).unwrap();
    let density: Vec<f64> = space
        .cell_centers()
        .unwrap()
        .iter()
        .map(|l| (1.0 + 0.3 * l.cos()) / TAU)
        .collect();
    let p = StatisticalState::from_density(space.clone(), density).unwrap();
    let f = PhysicalVariable::from_fn(space.clone(), |l| l.sin() + 0.5 * (2.0 * l).cos()).unwrap();
    let spec = DiffusionSpec::new(|_, l| 0.3 * l.sin(), |_, l| 1.0 + 0.25 * l.cos());
    let lp = generator_apply(&spec, &p, 0.0).unwrap();
    let wf = adjoint_apply(&spec, &f, 0.0).unwrap();
    let mismatch = (lebesgue_inner(&f, &lp).unwrap() + average(&wf, &p).unwrap()).abs();
    verdict(
        5,
        "discrete adjointness",
        mismatch <= 1e-4,
        &format!("|<f, L p> + <p, W f>| = {mismatch:.2e}"),
    );
}

#[test]
fn criterion_06_average_reports_close_and_control_fails() {
    let interval = StateSpace::interval(-8.0, 8.0, 256).unwrap();
    let gauss = StatisticalState::gaussian(interval.clone(), 2.0, 0.25).unwrap();
    let window = TimeWindow::new(0.0, 0.5).unwrap();
    let cfg = SolverConfig::new(1e-3).unwrap();
    let coordinate = PhysicalVariable::coordinate(interval.clone()).unwrap();

    let mut line = ChameleonMeasurement::new(interval.clone());
    let identity = MeasurementSetting::new("identity", vec![]).unwrap();
    line.register(
        identity.clone(),
        SettingDynamics::identity(0.5, coordinate.clone(), None).unwrap(),
    )
    .unwrap();
    let ou = MeasurementSetting::new("ou-pair", vec![1.0]).unwrap();
    line.register(
        ou.clone(),
        SettingDynamics::from_diffusion(
            DiffusionSpec::ornstein_uhlenbeck(1.0, ROOT2),
            window,
            cfg.clone(),
            coordinate.clone(),
            None,
        )
        .unwrap(),
    )
    .unwrap();
    let control = MeasurementSetting::new("mismatched-control", vec![1.0]).unwrap();
    let fwd_spec = DiffusionSpec::ornstein_uhlenbeck(1.0, ROOT2);
    let bwd_spec = DiffusionSpec::ornstein_uhlenbeck(1.0 / 3.0, ROOT2);
    let fwd_cfg = cfg.clone();
    let bwd_cfg = cfg;
    let forward: ForwardMap =
        Arc::new(move |p| forward_evolve(&fwd_spec, p, &window, &fwd_cfg));
    let backward: BackwardMap =
        Arc::new(move |g| backward_evolve(&bwd_spec, g, &window, &bwd_cfg));
    line.register(
        control.clone(),
        SettingDynamics::from_maps(forward, backward, 0.5, coordinate, None).unwrap(),
    )
    .unwrap();

    let circle = StateSpace::circle(720).unwrap();
    let probe = tilted_probe(&circle, 0.5).unwrap();
    let mut pair_reports = Vec::new();
    for (label, setting) in [("identity", &identity), ("ou-pair", &ou)] {
        let r = line.average_report(setting, &gauss).unwrap();
        pair_reports.push((label, r.gap));
    }
    for (label, angle, side) in
        [("r1-alice", 0.0, Side::Alice), ("r1-bob", FRAC_PI_4, Side::Bob)]
    {
        let mut m = ChameleonMeasurement::new(circle.clone());
        let setting = MeasurementSetting::angle(label, angle).unwrap();
        m.register(setting.clone(), singlet_side_dynamics(&circle, angle, side).unwrap())
            .unwrap();
        let r = m.average_report(&setting, &probe).unwrap();
        pair_reports.push((label, r.gap));
    }
    let worst_pair_gap = pair_reports.iter().map(|(_, g)| *g).fold(0.0f64, f64::max);
    let control_gap = line.average_report(&control, &gauss).unwrap().gap;
    verdict(
        6,
        "average equality with negative control",
        worst_pair_gap <= 1e-3 && control_gap > 0.1,
        &format!("worst dual-pair gap {worst_pair_gap:.2e}, control gap {control_gap:.3}"),
    );
}

#[test]
fn criterion_07_correlations_match_the_singlet_prediction() {
    let started = Instant::now();
    let models = [
        EprModel::Functional(SingletFunctionalModel::new(0.0, 0.0).unwrap()),
        EprModel::Outcome(SingletOutcomeModel::new()),
    ];
    let mut rng = rng::from_seed(20240817);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = rng.random::<f64>() * TAU;
        let b = rng.random::<f64>() * TAU;
        for model in &models {
            let e = correlation(model, a, b, CorrelationMethod::Quadrature).unwrap();
            worst = worst.max((e.value - quantum_reference(a, b)).abs());
        }
    }
    let quad_ok = worst <= 1e-9;

    let mut mc_ok = true;
    let mut mc_detail = String::new();
    for model in &models {
        let e = correlation(
            model,
            0.0,
            FRAC_PI_4,
            CorrelationMethod::MonteCarlo { count: 1_000_000, seed: 99 },
        )
        .unwrap();
        let err = (e.value - quantum_reference(0.0, FRAC_PI_4)).abs();
        let sigma = e.mc_std_error.unwrap();
        mc_ok &= err <= 3.0 * sigma;
        mc_detail.push_str(&format!(" mc err {err:.1e} vs 3s {:.1e};", 3.0 * sigma));
    }
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        7,
        "EPR correlation quadrature + MC",
        quad_ok && mc_ok && elapsed < 30.0,
        &format!("worst quadrature error {worst:.1e};{mc_detail} {elapsed:.2}s"),
    );
}

#[test]
fn criterion_08_chsh_and_tsirelson() {
    let target = 2.0 * ROOT2;
    let (a, a_alt, b, b_alt) = STANDARD_ANGLES;
    let models = [
        EprModel::Functional(SingletFunctionalModel::new(0.0, 0.0).unwrap()),
        EprModel::Outcome(SingletOutcomeModel::new()),
    ];
    let mut worst_standard = 0.0f64;
    for model in &models {
        let s = chsh(model, a, a_alt, b, b_alt, CorrelationMethod::Quadrature).unwrap();
        worst_standard = worst_standard.max((s.magnitude() - target).abs());
    }
    let mut rng = rng::from_seed(8);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let q: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * TAU).collect();
        for model in &models {
            let s = chsh(model, q[0], q[1], q[2], q[3], CorrelationMethod::Quadrature).unwrap();
            worst_excess = worst_excess.max(s.magnitude() - target);
        }
    }
    verdict(
        8,
        "CHSH at standard angles + Tsirelson bound",
        worst_standard <= 1e-6 && worst_excess <= 1e-9,
        &format!(
            "| |S| - 2*sqrt(2) | = {worst_standard:.1e}, worst excess over bound {worst_excess:.1e}"
        ),
    );
}

#[test]
fn criterion_09_range_coincidence_fails_while_spectrum_holds() {
    let model = SingletFunctionalModel::new(0.0, FRAC_PI_4).unwrap();
    let (alice, _bob) = model.as_chameleon().unwrap();
    let setting = MeasurementSetting::angle("alice", 0.0).unwrap();
    let report = alice.range_coincidence_report(&setting).unwrap();
    let ontic_ok = match &report.ontic_range {
        ValueRange::Interval { min, max } => {
            (min + ROOT2).abs() <= 1e-3 && (max - ROOT2).abs() <= 1e-3
        }
        ValueRange::Set(_) => false,
    };
    let observed_ok = match &report.observed_range {
        ValueRange::Set(v) => v.len() == 2 && v[0] == -1.0 && v[1] == 1.0,
        ValueRange::Interval { .. } => false,
    };
    let spectral = alice.spectral_check(&setting).unwrap();
    verdict(
        9,
        "range coincidence rejected, spectrum satisfied",
        ontic_ok && observed_ok && !report.coincide && spectral,
        &format!(
            "ontic {}, observed {}, coincide {}, spectral {spectral}",
            report.ontic_range.describe(),
            report.observed_range.describe(),
            report.coincide
        ),
    );
}

#[test]
fn criterion_10_loophole_chsh() {
    let model = DetectionModel::default();
    let (a, a_alt, b, b_alt) = STANDARD_ANGLES;

    let selected =
        postselected_chsh(&model, a, a_alt, b, b_alt, CorrelationMethod::Quadrature).unwrap();
    let quad_ok = (selected.magnitude() - 2.0 * ROOT2).abs() <= 1e-6;

    let pairs = [(a, b), (a_alt, b), (a_alt, b_alt), (a, b_alt)];
    let tallies = run_loophole_experiment_threaded(&model, &pairs, 1_000_000, 424_242, 4).unwrap();
    let estimates: Vec<f64> =
        tallies.iter().map(|t| t.correlation_estimate().unwrap()).collect();
    let sigmas: Vec<f64> = tallies.iter().map(|t| t.estimate_std_error().unwrap()).collect();
    let s_hat = estimates[0] + estimates[1] + estimates[2] - estimates[3];
    let s_sigma = sigmas.iter().map(|s| s * s).sum::<f64>().sqrt();
    let event_ok = (s_hat - selected.s).abs() <= 3.0 * s_sigma;

    let baseline =
        full_ensemble_chsh(&model, a, a_alt, b, b_alt, CorrelationMethod::Quadrature).unwrap();
    let baseline_exact = baseline.magnitude() == 2.0;
    let mut rng = rng::from_seed(77);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let q: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * TAU).collect();
        let s = full_ensemble_chsh(&model, q[0], q[1], q[2], q[3], CorrelationMethod::Quadrature)
            .unwrap();
        worst_excess = worst_excess.max(s.magnitude() - 2.0);
    }
    let rate = detection_rate(&model, a, b, RateSide::Alice).unwrap();
    let rate_ok = (rate - 2.0 / PI).abs() <= 1e-9;

    verdict(
        10,
        "detection loophole CHSH",
        quad_ok && event_ok && baseline_exact && worst_excess <= 1e-9 && rate_ok,
        &format!(
            "post-selected |S| = {:.10} (events: {s_hat:.4} vs 3s {:.1e}), full ensemble |S| = {}, worst classical excess {worst_excess:.1e}, alice rate error {:.1e}",
            selected.magnitude(),
            3.0 * s_sigma,
            baseline.magnitude(),
            (rate - 2.0 / PI).abs()
        ),
    );
}

#[test]
fn criterion_11_fair_sampling_dichotomy() {
    let pair1 = (0.0, FRAC_PI_4);
    let pair2 = (STANDARD_ANGLES.1, FRAC_PI_4);
    let honest = fair_sampling_defect(&DetectionModel::no_loss(), pair1, pair2).unwrap();
    let lossy = fair_sampling_defect(&DetectionModel::default(), pair1, pair2).unwrap();
    verdict(
        11,
        "fair sampling dichotomy",
        honest <= 1e-12 && lossy > 0.1,
        &format!("no-loss defect {honest:.1e}, default defect {lossy:.3}"),
    );
}

#[test]
fn criterion_12_manifest_reruns_are_byte_identical() {
    let exe = env!("CARGO_BIN_EXE_chamsim");
    let base = std::env::temp_dir().join(format!("chamsim-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();

    let configs: [(&str, String); 7] = [
        ("ou-oracle", "[scenario]\nname = ou-oracle\n".to_string()),
        (
            "conjugation",
            "[scenario]\nname = conjugation\n\n[params]\nresolutions = 128,256\n".to_string(),
        ),
        ("chameleon-averages", "[scenario]\nname = chameleon-averages\n".to_string()),
        (
            "epr-correlation",
            "[scenario]\nname = epr-correlation\nseed = 3\n\n[params]\nmethod = monte-carlo\nmc_count = 20000\n".to_string(),
        ),
        ("epr-chsh", "[scenario]\nname = epr-chsh\n".to_string()),
        (
            "loophole",
            "[scenario]\nname = loophole\nseed = 7\nthreads = 2\n\n[params]\npairs = 20000\ngrid_n = 1024\n".to_string(),
        ),
        ("fair-sampling", "[scenario]\nname = fair-sampling\n\n[params]\ngrid_n = 1024\n".to_string()),
    ];

    let mut all_ok = true;
    let mut detail = String::new();
    for (name, text) in &configs {
        let cfg_path = base.join(format!("{name}.cfg"));
        std::fs::write(&cfg_path, text).unwrap();
        let out1 = base.join(format!("{name}-first"));
        let out2 = base.join(format!("{name}-second"));

        let status = Command::new(exe)
            .args(["run", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out1)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "{name}: first run failed");

        let manifest: PathBuf = out1.join(format!("{name}-manifest.json"));
        let status = Command::new(exe)
            .args(["run", "--config"])
            .arg(&manifest)
            .arg("--out")
            .arg(&out2)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "{name}: manifest rerun failed");

        let first = std::fs::read(out1.join(format!("{name}.csv"))).unwrap();
        let second = std::fs::read(out2.join(format!("{name}.csv"))).unwrap();
        let same = first == second;
        let headed = first.starts_with(b"#");
        all_ok &= same && headed;
        detail.push_str(&format!(" {name}:{}", if same { "ok" } else { "DIFF" }));
    }
    verdict(12, "manifest reruns byte-identical", all_ok, detail.trim());
    let _ = std::fs::remove_dir_all(&base);
}
