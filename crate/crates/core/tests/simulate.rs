use ghostgame::params::ModelParams;
use ghostgame::simulate::{
    estimate_controller_reward, estimate_stopper_reward, likelihood_weight_mean, simulate_belief_path,
    weak_estimate, ControlPolicy, Integrator, Level, McEstimate, Player, SimConfig, StrategyProfile, ThetaMode,
};
use ghostgame::solver::{solve_equilibrium, SolverOpts};

const B1: f64 = 0.12479875083171813;
const B2: f64 = 0.6184353967761977;

fn equilibrium() -> StrategyProfile {
    StrategyProfile::thresholds(B1, B2)
}

fn combined(a: &McEstimate, b: &McEstimate) -> f64 {
    (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

fn terminal_beliefs(profile: &StrategyProfile, deviation: &ControlPolicy, cfg: &SimConfig) -> Vec<f64> {
    let p = ModelParams::reference();
    (0..cfg.n_paths)
        .map(|i| {
            let theta = if cfg.theta_mode == ThetaMode::FixedOne { 1 } else { u8::from(i % 2 == 0) };
            let path = simulate_belief_path(&p, profile, deviation, theta, cfg, i, cfg.n_steps()).unwrap();
            *path.p.last().unwrap()
        })
        .collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn belief_is_a_martingale_without_deviation() {
    // theta alternates over paths, an exact Bernoulli(1/2) split
    let prof = StrategyProfile { stop_threshold: 0.0, control_policy: ControlPolicy::threshold(B2) };
    let cfg = SimConfig { dt: 1e-2, horizon: 5.0, n_paths: 100_000, p0: 0.5, ..SimConfig::default() };
    let ps = terminal_beliefs(&prof, &prof.control_policy, &cfg);
    let (m, se) = mean_se(&ps);
    assert!((m - 0.5).abs() <= 3.0 * se, "E[P_T] = {m} +- {se}");
}

#[test]
fn active_low_effort_pushes_belief_up() {
    let low = ControlPolicy::constant(Level::Low);
    let prof = StrategyProfile { stop_threshold: 0.0, control_policy: low.clone() };
    let cfg = SimConfig {
        dt: 1e-2,
        horizon: 1.0,
        n_paths: 20_000,
        p0: 0.4,
        theta_mode: ThetaMode::FixedOne,
        ..SimConfig::default()
    };
    let (m, se) = mean_se(&terminal_beliefs(&prof, &low, &cfg));
    assert!(m - 0.4 > 5.0 * se, "E[P_1] = {m} +- {se}");
}

#[test]
fn direct_integrator_agrees_with_logit() {
    let p = ModelParams::reference();
    let prof = equilibrium();
    let base = SimConfig { dt: 1e-3, horizon: 10.0, n_paths: 20_000, p0: 0.5, absorb_tol: 0.0, ..SimConfig::default() };
    let logit = estimate_stopper_reward(&p, &prof, &base).unwrap();
    let direct =
        estimate_stopper_reward(&p, &prof, &SimConfig { integrator: Integrator::DirectClamped, ..base }).unwrap();
    assert_eq!(logit.clamp_events, 0);
    let diff = (logit.mean - direct.mean).abs();
    assert!(diff <= 3.0 * combined(&logit, &direct) + 0.01, "{} vs {}", logit.mean, direct.mean);
}

#[test]
fn stopper_reward_near_certain_activity() {
    let p = ModelParams::reference();
    let cfg = SimConfig { n_paths: 2_000, p0: 1.0 - 1e-9, ..SimConfig::default() };
    let est = estimate_stopper_reward(&p, &equilibrium(), &cfg).unwrap();
    let limit = (p.lambda_lo - p.c) / p.r * -(-p.r * cfg.horizon).exp_m1();
    assert!((est.mean - limit).abs() < 1e-3, "{} vs {limit}", est.mean);
    assert!(est.truncation_ok);
}

#[test]
fn controller_without_effort_cost_earns_salary_until_stopped() {
    let p = ModelParams::reference();
    let low = ControlPolicy::constant(Level::Low);
    let prof = StrategyProfile { stop_threshold: B1, control_policy: low.clone() };
    let cfg = SimConfig { n_paths: 5_000, dt: 2e-3, theta_mode: ThetaMode::FixedOne, ..SimConfig::default() };
    let est = estimate_controller_reward(&p, &prof, &low, &cfg).unwrap();
    assert!(est.mean > 0.0 && est.mean <= p.c / p.r, "{}", est.mean);
}

#[test]
fn shirking_does_not_pay() {
    let p = ModelParams::reference();
    let cert = solve_equilibrium(&p, &SolverOpts::default()).unwrap();
    let v = cert.curves(&p).unwrap().v(0.5).unwrap();
    let prof = equilibrium();
    let cfg = SimConfig { n_paths: 20_000, theta_mode: ThetaMode::FixedOne, ..SimConfig::default() };
    let est = estimate_controller_reward(&p, &prof, &ControlPolicy::constant(Level::Low), &cfg).unwrap();
    assert!(est.mean <= v + 3.0 * est.std_error, "{} vs {v}", est.mean);
}

#[test]
fn stopping_above_the_start_earns_nothing() {
    let p = ModelParams::reference();
    let cert = solve_equilibrium(&p, &SolverOpts::default()).unwrap();
    let u = cert.curves(&p).unwrap().u(0.5).unwrap();
    let prof = StrategyProfile { stop_threshold: 0.9, control_policy: ControlPolicy::threshold(B2) };
    let est = estimate_stopper_reward(&p, &prof, &SimConfig { n_paths: 100, ..SimConfig::default() }).unwrap();
    assert_eq!(est.mean, 0.0);
    assert!(est.mean <= u);
}

#[test]
fn halving_dt_stays_within_noise() {
    let p = ModelParams::reference();
    let prof = equilibrium();
    let fine = SimConfig { n_paths: 100_000, dt: 1e-3, seed: 31, ..SimConfig::default() };
    let coarse = SimConfig { dt: 2e-3, seed: 37, ..fine };
    let a = estimate_stopper_reward(&p, &prof, &fine).unwrap();
    let b = estimate_stopper_reward(&p, &prof, &coarse).unwrap();
    assert!((a.mean - b.mean).abs() <= 3.0 * combined(&a, &b), "stopper {} vs {}", a.mean, b.mean);
    let fine = SimConfig { theta_mode: ThetaMode::FixedOne, ..fine };
    let coarse = SimConfig { theta_mode: ThetaMode::FixedOne, ..coarse };
    let a = estimate_controller_reward(&p, &prof, &prof.control_policy, &fine).unwrap();
    let b = estimate_controller_reward(&p, &prof, &prof.control_policy, &coarse).unwrap();
    assert!((a.mean - b.mean).abs() <= 3.0 * combined(&a, &b), "controller {} vs {}", a.mean, b.mean);
}

#[test]
fn weak_controller_reward_matches_strong() {
    let p = ModelParams::reference();
    let prof = equilibrium();
    let cfg = SimConfig { n_paths: 50_000, dt: 1e-3, horizon: 2.0, theta_mode: ThetaMode::FixedOne, ..SimConfig::default() };
    let strong = estimate_controller_reward(&p, &prof, &prof.control_policy, &cfg).unwrap();
    let weak = weak_estimate(&p, &prof, &prof.control_policy, Player::Controller, &SimConfig { seed: 3, ..cfg }).unwrap();
    let diff = (strong.mean - weak.estimate.mean).abs();
    assert!(diff <= 3.0 * combined(&strong, &weak.estimate), "{} vs {}", strong.mean, weak.estimate.mean);
    assert!(weak.estimate.ess.unwrap() > 0.01 * cfg.n_paths as f64);
}

#[test]
fn likelihood_weights_average_to_one_under_deviation() {
    let p = ModelParams::reference();
    let prof = equilibrium();
    let cfg = SimConfig { n_paths: 50_000, dt: 1e-2, horizon: 1.0, ..SimConfig::default() };
    let w = likelihood_weight_mean(&p, &prof, &ControlPolicy::constant(Level::High), &cfg).unwrap();
    assert!((w.mean - 1.0).abs() <= 3.0 * w.std_error, "{} +- {}", w.mean, w.std_error);
}

#[test]
fn unstopped_long_horizon_flags_degenerate_weights() {
    let p = ModelParams::reference();
    let high = ControlPolicy::constant(Level::High);
    let prof = StrategyProfile { stop_threshold: 0.0, control_policy: high.clone() };
    let cfg = SimConfig { n_paths: 2_000, dt: 1e-2, horizon: 200.0, ..SimConfig::default() };
    let w = weak_estimate(&p, &prof, &high, Player::Controller, &cfg).unwrap();
    assert!(w.estimate.low_ess_warning, "ESS {:?}", w.estimate.ess);
    let short = weak_estimate(&p, &equilibrium(), &high, Player::Controller, &SimConfig { horizon: 1.0, ..cfg }).unwrap();
    assert!(!short.estimate.low_ess_warning, "ESS {:?}", short.estimate.ess);
}

#[test]
fn thread_count_does_not_change_results() {
    let p = ModelParams::reference();
    let prof = equilibrium();
    let cfg = SimConfig { n_paths: 3_000, dt: 1e-2, horizon: 50.0, ..SimConfig::default() };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_stopper_reward(&p, &prof, &cfg).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
}
