use tora_asd::numerics::{OdeFunction, Rk4};
use tora_asd::simulation::{
    build_loop_dynamics, independent_secondary_oracle, run, secondary_oracle_deviation,
};
use tora_asd::{ScenarioConfig, ScenarioConfig32};

fn with_duration(mut cfg: ScenarioConfig, duration: f64) -> ScenarioConfig {
    cfg.duration = duration;
    cfg
}

#[test]
fn rest_is_preserved_exactly() {
    let mut cfg = ScenarioConfig::paper_1();
    cfg.reference = 0.0;
    let sys = build_loop_dynamics(&cfg).unwrap();
    let mut z = vec![0.0; sys.layout().len()];
    let mut rk = Rk4::new(z.len());
    for i in 0..10_000 {
        rk.step(&sys, i as f64 * 1e-3, &mut z, 1e-3).unwrap();
    }
    assert!(z.iter().all(|&v| v == 0.0));
}

#[test]
fn observer_energy_never_grows() {
    for cfg in [ScenarioConfig::paper_1(), ScenarioConfig::paper_2()] {
        let (_, report) = run(&with_duration(cfg, 100.0)).unwrap();
        assert!(
            report.lyapunov_max_increase <= 1e-9,
            "{}",
            report.lyapunov_max_increase
        );
        assert!(report.decomposition_identity <= 4.0 * f64::EPSILON);
    }
}

#[test]
fn observer_energy_decreases_by_the_rate_mismatch() {
    // V1' = -l2 (x^4 - x4)^2 along any trajectory.
    let cfg = ScenarioConfig::paper_1();
    let sys = build_loop_dynamics(&cfg).unwrap();
    let l = *sys.layout();
    let mut z = sys.initial_state(&cfg);
    z[l.x4_hat()] = 0.3;
    z[l.w_hat().start] = -0.01;
    let mut dz = vec![0.0; z.len()];
    sys.eval(0.0, &z, &mut dz);
    let h = 1e-6;
    let fwd: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + h * b).collect();
    let bwd: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a - h * b).collect();
    let rate = (sys.observer_lyapunov(&fwd) - sys.observer_lyapunov(&bwd)) / (2.0 * h);
    let mismatch = z[l.x4_hat()] - z[3];
    assert!((rate + cfg.l2 * mismatch * mismatch).abs() < 1e-8, "{rate}");
}

#[test]
fn decomposition_observer_matches_rebuilt_secondary_state() {
    let mut cfg = with_duration(ScenarioConfig::paper_1(), 200.0);
    cfg.record_stride = 10;
    let (traj, _) = run(&cfg).unwrap();
    let dev = independent_secondary_oracle(&traj, &cfg).unwrap();
    assert!(dev < 1e-6, "{dev}");
    let peak = traj
        .states
        .iter()
        .map(|s| {
            s[traj.layout.xs_hat()]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .fold(0.0, f64::max);
    assert!(
        peak > 1e-2,
        "secondary state should be excited, peak {peak}"
    );
}

#[test]
fn perturbed_observer_error_decays_at_the_a_margin() {
    let mut cfg = with_duration(ScenarioConfig::paper_1(), 800.0);
    cfg.record_stride = 10;
    cfg.xs_hat0 = [0.01, 0.0, 0.0, 0.0];
    let (traj, report) = run(&cfg).unwrap();
    let dev = secondary_oracle_deviation(&traj, &cfg).unwrap();
    // Envelope: maxima over 50-unit windows, log-linear fit on [100, 800).
    let mut env = [0.0f64; 16];
    for &(t, d) in &dev {
        let k = (t / 50.0) as usize;
        if k < 16 {
            env[k] = env[k].max(d);
        }
    }
    let pts: Vec<(f64, f64)> = (2..16)
        .map(|k| (50.0 * k as f64 + 25.0, env[k].ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(
        (slope - report.margin_a).abs() < 1e-3,
        "slope {slope}, margin {}",
        report.margin_a
    );
}

#[test]
fn single_and_double_precision_agree_on_a_short_run() {
    let mut c64 = with_duration(ScenarioConfig::paper_1(), 20.0);
    c64.step = 1e-2;
    let mut c32 = ScenarioConfig32::paper_1();
    c32.duration = 20.0;
    c32.step = 1e-2;
    let (t64, _) = run(&c64).unwrap();
    let (t32, _) = run(&c32).unwrap();
    assert_eq!(t64.len(), t32.len());
    for (a, b) in t64.signals.iter().zip(&t32.signals) {
        assert!((a.y - b.y as f64).abs() < 1e-4);
    }
}

#[test]
fn short_runs_are_bit_reproducible() {
    let cfg = with_duration(ScenarioConfig::paper_2(), 30.0);
    let (a, ra) = run(&cfg).unwrap();
    let (b, rb) = run(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}
