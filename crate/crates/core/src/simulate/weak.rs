use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::engine::{controller_rate_bound, draw_theta, stopper_rate_bound, truncation_bound, Kernel};
use super::policy::{ControlPolicy, StrategyProfile};
use super::{map_paths, pairwise_sum, McEstimate, SimConfig, ThetaMode};
use crate::error::Result;
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Stopper,
    Controller,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakEstimate {
    /// Mean of likelihood-weighted discounted payoffs.
    pub estimate: McEstimate,
    /// Mean weight at the stopping time, which should be 1.
    pub weight_mean: McEstimate,
}

#[derive(Debug, Clone, Copy)]
struct WeakOutcome {
    weight: f64,
    stopper: f64,
    controller: f64,
}

/// Base-measure path: `X` is Brownian, the belief follows the `X`-driven
/// filter of `profile.control_policy` and `log Lambda` accumulates
/// `(theta l - c) dX - (theta l - c)^2 dt / 2` for the exerted effort `l`.
fn weak_paths(
    params: &ModelParams,
    profile: &StrategyProfile,
    control: &ControlPolicy,
    cfg: &SimConfig,
    theta_mode: ThetaMode,
    stop: bool,
) -> Result<Vec<WeakOutcome>> {
    let k = Kernel::new(params, profile, control, cfg)?;
    let z_stop = if stop { k.z_stop } else { f64::NEG_INFINITY };
    Ok(map_paths(cfg.n_paths, |i| {
        let mut rng = cfg.path_rng(i);
        let theta = draw_theta(&mut rng, theta_mode, cfg.p0);
        let (c, dt) = (k.c, k.dt);
        let (mut z, mut log_w, mut disc) = (k.z0, 0.0, 1.0);
        let (mut j1, mut j2) = (0.0, 0.0);
        for _ in 0..k.n_steps {
            if z <= z_stop {
                break;
            }
            let ls = k.eq.rate(z);
            let l = k.dev.rate(z);
            let drift = theta * l - c;
            let dev = l - k.lambda_lo;
            j1 += disc * k.step_weight * drift;
            j2 += disc * k.step_weight * (c - dev * dev);
            let dx: f64 = k.sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            log_w += drift * dx - 0.5 * drift * drift * dt;
            z += ls * (dx + c * dt) - 0.5 * ls * ls * dt;
            disc *= k.step_disc;
        }
        let weight = log_w.exp();
        WeakOutcome { weight, stopper: weight * j1, controller: weight * j2 }
    }))
}

fn ess(weights: &[f64]) -> f64 {
    let s = pairwise_sum(weights);
    let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
    s * s / pairwise_sum(&sq)
}

/// Weak-formulation reward of `player` when the exerted effort is
/// `control` and the belief filters with `profile.control_policy`.
///
/// The stopper's `theta` follows `cfg.theta_mode`; the controller's
/// reward conditions on `theta = 1`. Flags the estimate when the effective
/// sample size falls below 1% of the paths.
pub fn weak_estimate(
    params: &ModelParams,
    profile: &StrategyProfile,
    control: &ControlPolicy,
    player: Player,
    cfg: &SimConfig,
) -> Result<WeakEstimate> {
    let (mode, rate_bound) = match player {
        Player::Stopper => (cfg.theta_mode, stopper_rate_bound(params)),
        Player::Controller => (ThetaMode::FixedOne, controller_rate_bound(params)),
    };
    let outcomes = weak_paths(params, profile, control, cfg, mode, true)?;
    let weights: Vec<f64> = outcomes.iter().map(|o| o.weight).collect();
    let payoffs: Vec<f64> = outcomes
        .iter()
        .map(|o| match player {
            Player::Stopper => o.stopper,
            Player::Controller => o.controller,
        })
        .collect();
    let bound = truncation_bound(rate_bound, params, cfg);
    let n_eff = ess(&weights);
    let low = n_eff < 0.01 * cfg.n_paths as f64;
    let mut estimate = McEstimate::from_samples(&payoffs, cfg, bound, 0);
    estimate.ess = Some(n_eff);
    estimate.low_ess_warning = low;
    let mut weight_mean = McEstimate::from_samples(&weights, cfg, 0.0, 0);
    weight_mean.ess = Some(n_eff);
    weight_mean.low_ess_warning = low;
    Ok(WeakEstimate { estimate, weight_mean })
}

/// Mean of the likelihood weight at the horizon, without stopping.
pub fn likelihood_weight_mean(
    params: &ModelParams,
    profile: &StrategyProfile,
    control: &ControlPolicy,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    let outcomes = weak_paths(params, profile, control, cfg, cfg.theta_mode, false)?;
    let weights: Vec<f64> = outcomes.iter().map(|o| o.weight).collect();
    let mut est = McEstimate::from_samples(&weights, cfg, 0.0, 0);
    let n_eff = ess(&weights);
    est.ess = Some(n_eff);
    est.low_ess_warning = n_eff < 0.01 * cfg.n_paths as f64;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::Level;

    #[test]
    fn zero_horizon_is_empty() {
        let p = ModelParams::reference();
        let prof = StrategyProfile::thresholds(0.125, 0.618);
        let cfg = SimConfig { horizon: 0.0, n_paths: 16, ..SimConfig::default() };
        let w = weak_estimate(&p, &prof, &prof.control_policy, Player::Stopper, &cfg).unwrap();
        assert_eq!(w.estimate.mean, 0.0);
        assert_eq!(w.weight_mean.mean, 1.0);
        assert_eq!(w.weight_mean.std_error, 0.0);
        assert_eq!(w.estimate.ess, Some(16.0));
    }

    #[test]
    fn passive_type_weight_uses_minus_c() {
        // theta = 0 and no stopping: log weight is -c X_T - c^2 T / 2
        let p = ModelParams::reference();
        let prof = StrategyProfile { stop_threshold: 0.0, control_policy: ControlPolicy::constant(Level::High) };
        let cfg = SimConfig { horizon: 1.0, dt: 0.01, n_paths: 4, p0: 1e-12, ..SimConfig::default() };
        let out = weak_paths(&p, &prof, &prof.control_policy, &cfg, ThetaMode::Bernoulli, false).unwrap();
        for (i, o) in out.iter().enumerate() {
            let mut rng = cfg.path_rng(i);
            let _theta: f64 = rng.random();
            let x_t: f64 = (0..100).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).sum();
            let expect = (-p.c * x_t - 0.5 * p.c * p.c).exp();
            assert!((o.weight - expect).abs() <= 1e-12 * expect, "{} vs {expect}", o.weight);
            // stopper payoff rate is -c throughout
            let j1 = -p.c * -(-p.r).exp_m1() / p.r;
            assert!((o.stopper - o.weight * j1).abs() < 1e-9);
        }
    }

    #[test]
    fn ess_of_equal_weights_is_n() {
        assert_eq!(ess(&[2.0; 10]), 10.0);
        assert!((ess(&[1.0, 0.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    }
}
