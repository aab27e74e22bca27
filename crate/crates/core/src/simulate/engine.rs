use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::policy::{inv_logit, logit, CompiledPolicy, ControlPolicy, Level, StrategyProfile};
use super::{map_paths, mean_and_se, Integrator, McEstimate, SimConfig, ThetaMode, CLAMP_HI, CLAMP_LO};
use crate::error::{GameError, Result};
use crate::params::ModelParams;
use crate::solver::EquilibriumCertificate;

/// Discounted payoffs of one path.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PathOutcome {
    pub stopper: f64,
    pub controller: f64,
    pub clamps: u64,
}

/// Per-step integrator shared by the estimators.
///
/// `eq` drives the learning terms of the belief, `dev` is the effort
/// actually exerted.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    pub eq: CompiledPolicy,
    pub dev: CompiledPolicy,
    pub z_stop: f64,
    pub p_stop: f64,
    pub z0: f64,
    pub p0: f64,
    pub c: f64,
    pub r: f64,
    pub lambda_lo: f64,
    pub dt: f64,
    pub sqrt_dt: f64,
    pub n_steps: usize,
    pub step_disc: f64,
    /// `int_0^dt e^{-rs} ds`.
    pub step_weight: f64,
    pub absorb_tol: f64,
    pub integrator: Integrator,
}

impl Kernel {
    pub fn new(
        params: &ModelParams,
        profile: &StrategyProfile,
        deviation: &ControlPolicy,
        cfg: &SimConfig,
    ) -> Result<Self> {
        params.ensure_valid()?;
        cfg.validate()?;
        profile.validate()?;
        let step_disc = (-params.r * cfg.dt).exp();
        Ok(Self {
            eq: profile.control_policy.compile(params)?,
            dev: deviation.compile(params)?,
            z_stop: if profile.stop_threshold > 0.0 { logit(profile.stop_threshold) } else { f64::NEG_INFINITY },
            p_stop: profile.stop_threshold,
            z0: logit(cfg.p0),
            p0: cfg.p0,
            c: params.c,
            r: params.r,
            lambda_lo: params.lambda_lo,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            n_steps: cfg.n_steps(),
            step_disc,
            step_weight: -(-params.r * cfg.dt).exp_m1() / params.r,
            absorb_tol: cfg.absorb_tol,
            integrator: cfg.integrator,
        })
    }

    #[inline]
    fn controller_rate(&self, lambda: f64) -> f64 {
        let d = lambda - self.lambda_lo;
        self.c - d * d
    }

    /// Log-odds level above which the path returns to any cut with
    /// probability below `absorb_tol`; `None` if the drift there is not
    /// upward.
    fn absorb_level(&self, theta: f64) -> Option<f64> {
        if self.absorb_tol <= 0.0 {
            return None;
        }
        let top = [self.eq.top_break(), self.dev.top_break(), Some(self.z_stop)]
            .into_iter()
            .flatten()
            .fold(f64::NEG_INFINITY, f64::max);
        let (ls, l) = (self.eq.top_rate(), self.dev.top_rate());
        let drift = ls * theta * l - 0.5 * ls * ls;
        if drift <= 0.0 {
            return None;
        }
        if top == f64::NEG_INFINITY {
            return Some(top);
        }
        Some(top + (1.0 / self.absorb_tol).ln() * ls * ls / (2.0 * drift))
    }

    pub fn run(&self, rng: &mut ChaCha8Rng, theta: f64) -> PathOutcome {
        match self.integrator {
            Integrator::Logit => self.run_logit(rng, theta),
            Integrator::DirectClamped => self.run_direct(rng, theta),
        }
    }

    fn run_logit(&self, rng: &mut ChaCha8Rng, theta: f64) -> PathOutcome {
        let absorb = self.absorb_level(theta);
        let (c, dt) = (self.c, self.dt);
        let mut out = PathOutcome::default();
        let mut z = self.z0;
        let mut disc = 1.0;
        for k in 0..self.n_steps {
            if z <= self.z_stop {
                break;
            }
            let ls = self.eq.rate(z);
            let l = self.dev.rate(z);
            let rate1 = theta * l - c;
            let rate2 = self.controller_rate(l);
            if let Some(za) = absorb {
                if z >= za {
                    let left = (self.n_steps - k) as f64;
                    let tail = disc * -(-self.r * dt * left).exp_m1() / self.r;
                    out.stopper += rate1 * tail;
                    out.controller += rate2 * tail;
                    break;
                }
            }
            out.stopper += disc * self.step_weight * rate1;
            out.controller += disc * self.step_weight * rate2;
            let dw: f64 = self.sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            let dx = rate1 * dt + dw;
            z += ls * (dx + c * dt) - 0.5 * ls * ls * dt;
            disc *= self.step_disc;
        }
        out
    }

    fn run_direct(&self, rng: &mut ChaCha8Rng, theta: f64) -> PathOutcome {
        let (c, dt) = (self.c, self.dt);
        let mut out = PathOutcome::default();
        let mut p = self.p0;
        let mut disc = 1.0;
        for _ in 0..self.n_steps {
            if p <= self.p_stop {
                break;
            }
            let z = logit(p);
            let ls = self.eq.rate(z);
            let l = self.dev.rate(z);
            let rate1 = theta * l - c;
            out.stopper += disc * self.step_weight * rate1;
            out.controller += disc * self.step_weight * self.controller_rate(l);
            let dw: f64 = self.sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            let s = ls * p * (1.0 - p);
            let next = p + s * (theta * l - ls * p) * dt + s * dw;
            p = if next < CLAMP_LO {
                out.clamps += 1;
                CLAMP_LO
            } else if next > CLAMP_HI {
                out.clamps += 1;
                CLAMP_HI
            } else {
                next
            };
            disc *= self.step_disc;
        }
        out
    }
}

pub(crate) fn draw_theta(rng: &mut ChaCha8Rng, mode: ThetaMode, p0: f64) -> f64 {
    match mode {
        ThetaMode::FixedOne => 1.0,
        ThetaMode::Bernoulli => {
            if rng.random::<f64>() < p0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub(crate) fn stopper_rate_bound(params: &ModelParams) -> f64 {
    (params.lambda_hi - params.c).max(params.c)
}

pub(crate) fn controller_rate_bound(params: &ModelParams) -> f64 {
    let gap = params.lambda_hi - params.lambda_lo;
    params.c.max((params.c - gap * gap).abs())
}

pub(crate) fn truncation_bound(rate_bound: f64, params: &ModelParams, cfg: &SimConfig) -> f64 {
    (-params.r * cfg.horizon).exp() * rate_bound / params.r
}

fn simulate_outcomes(
    params: &ModelParams,
    profile: &StrategyProfile,
    deviation: &ControlPolicy,
    cfg: &SimConfig,
) -> Result<Vec<PathOutcome>> {
    let kernel = Kernel::new(params, profile, deviation, cfg)?;
    Ok(map_paths(cfg.n_paths, |i| {
        let mut rng = cfg.path_rng(i);
        let theta = draw_theta(&mut rng, cfg.theta_mode, cfg.p0);
        kernel.run(&mut rng, theta)
    }))
}

fn require_mode(cfg: &SimConfig, mode: ThetaMode, what: &str) -> Result<()> {
    if cfg.theta_mode != mode {
        return Err(GameError::Config(format!("{what} requires theta_mode = {mode:?}")));
    }
    Ok(())
}

fn stopper_samples(params: &ModelParams, profile: &StrategyProfile, cfg: &SimConfig) -> Result<(Vec<f64>, u64)> {
    let outcomes = simulate_outcomes(params, profile, &profile.control_policy, cfg)?;
    let clamps = outcomes.iter().map(|o| o.clamps).sum();
    Ok((outcomes.iter().map(|o| o.stopper).collect(), clamps))
}

fn controller_samples(
    params: &ModelParams,
    profile: &StrategyProfile,
    deviation: &ControlPolicy,
    cfg: &SimConfig,
) -> Result<(Vec<f64>, u64)> {
    let outcomes = simulate_outcomes(params, profile, deviation, cfg)?;
    let clamps = outcomes.iter().map(|o| o.clamps).sum();
    Ok((outcomes.iter().map(|o| o.controller).collect(), clamps))
}

/// Stopper reward when both players follow `profile`; needs
/// `theta_mode = bernoulli`.
pub fn estimate_stopper_reward(params: &ModelParams, profile: &StrategyProfile, cfg: &SimConfig) -> Result<McEstimate> {
    require_mode(cfg, ThetaMode::Bernoulli, "the stopper reward")?;
    let (xs, clamps) = stopper_samples(params, profile, cfg)?;
    let bound = truncation_bound(stopper_rate_bound(params), params, cfg);
    Ok(McEstimate::from_samples(&xs, cfg, bound, clamps))
}

/// Reward of an active controller exerting `deviation` while the belief
/// learns as if `profile.control_policy` were played; needs
/// `theta_mode = fixed_one`.
pub fn estimate_controller_reward(
    params: &ModelParams,
    profile: &StrategyProfile,
    deviation: &ControlPolicy,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    require_mode(cfg, ThetaMode::FixedOne, "the controller reward")?;
    let (xs, clamps) = controller_samples(params, profile, deviation, cfg)?;
    let bound = truncation_bound(controller_rate_bound(params), params, cfg);
    Ok(McEstimate::from_samples(&xs, cfg, bound, clamps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefPath {
    pub theta: u8,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    /// Log-odds of `p`; stays finite where `p` rounds to 0 or 1.
    pub log_odds: Vec<f64>,
    pub x: Vec<f64>,
    /// Running discounted stopper payoff.
    pub stopper_payoff: Vec<f64>,
    /// Running discounted controller payoff.
    pub controller_payoff: Vec<f64>,
    pub stopped_at: Option<f64>,
    pub clamp_events: u64,
}

/// One path on stream `path_index`, recorded every `stride` steps plus the
/// final state. The path ends at the stopping time.
pub fn simulate_belief_path(
    params: &ModelParams,
    profile: &StrategyProfile,
    deviation: &ControlPolicy,
    theta: u8,
    cfg: &SimConfig,
    path_index: usize,
    stride: usize,
) -> Result<BeliefPath> {
    if theta > 1 {
        return Err(GameError::domain(format!("theta must be 0 or 1, got {theta}")));
    }
    let k = Kernel::new(params, profile, deviation, cfg)?;
    let stride = stride.max(1);
    let th = f64::from(theta);
    let mut rng = cfg.path_rng(path_index);
    let mut path = BeliefPath {
        theta,
        t: vec![],
        p: vec![],
        log_odds: vec![],
        x: vec![],
        stopper_payoff: vec![],
        controller_payoff: vec![],
        stopped_at: None,
        clamp_events: 0,
    };
    let (mut z, mut p) = (k.z0, k.p0);
    let (mut x, mut j1, mut j2, mut disc) = (0.0, 0.0, 0.0, 1.0);
    let mut step = 0;
    loop {
        let t = step as f64 * k.dt;
        let stopped = p <= k.p_stop || (k.integrator == Integrator::Logit && z <= k.z_stop);
        if step % stride == 0 || stopped || step == k.n_steps {
            path.t.push(t);
            path.p.push(p);
            path.log_odds.push(if k.integrator == Integrator::Logit { z } else { logit(p) });
            path.x.push(x);
            path.stopper_payoff.push(j1);
            path.controller_payoff.push(j2);
        }
        if stopped {
            path.stopped_at = Some(t);
            break;
        }
        if step == k.n_steps {
            break;
        }
        let zz = if k.integrator == Integrator::Logit { z } else { logit(p) };
        let ls = k.eq.rate(zz);
        let l = k.dev.rate(zz);
        let rate1 = th * l - k.c;
        j1 += disc * k.step_weight * rate1;
        j2 += disc * k.step_weight * k.controller_rate(l);
        let dw: f64 = k.sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        let dx = rate1 * k.dt + dw;
        x += dx;
        match k.integrator {
            Integrator::Logit => {
                z += ls * (dx + k.c * k.dt) - 0.5 * ls * ls * k.dt;
                p = inv_logit(z);
            }
            Integrator::DirectClamped => {
                let s = ls * p * (1.0 - p);
                let next = p + s * (th * l - ls * p) * k.dt + s * dw;
                if !(CLAMP_LO..=CLAMP_HI).contains(&next) {
                    path.clamp_events += 1;
                }
                p = next.clamp(CLAMP_LO, CLAMP_HI);
            }
        }
        disc *= k.step_disc;
        step += 1;
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviationFamilies {
    pub stop_thresholds: Vec<f64>,
    pub control_policies: Vec<ControlPolicy>,
}

impl Default for DeviationFamilies {
    /// Stops at `0.05, 0.10, ..., 0.95`; both constant efforts and
    /// thresholds at `0.1, ..., 0.9`.
    fn default() -> Self {
        let mut control_policies = vec![ControlPolicy::constant(Level::Low), ControlPolicy::constant(Level::High)];
        control_policies.extend((1..=9).map(|i| ControlPolicy::threshold(i as f64 / 10.0)));
        Self { stop_thresholds: (1..=19).map(|i| i as f64 / 20.0).collect(), control_policies }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationResult {
    pub label: String,
    pub estimate: McEstimate,
    /// Mean of deviation minus equilibrium payoff over common paths.
    pub improvement: f64,
    /// Standard error of the paired difference.
    pub improvement_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerGap {
    pub equilibrium: McEstimate,
    pub deviations: Vec<DeviationResult>,
    /// Largest improvement over the family.
    pub gap: f64,
    pub gap_se: f64,
    pub worst: Option<String>,
}

impl PlayerGap {
    fn from_results(equilibrium: McEstimate, deviations: Vec<DeviationResult>) -> Self {
        let worst = deviations.iter().max_by(|a, b| a.improvement.total_cmp(&b.improvement));
        Self {
            gap: worst.map_or(f64::NEG_INFINITY, |d| d.improvement),
            gap_se: worst.map_or(0.0, |d| d.improvement_se),
            worst: worst.map(|d| d.label.clone()),
            equilibrium,
            deviations,
        }
    }

    /// Every improvement is at most `z * se + margin`.
    pub fn within(&self, z: f64, margin: f64) -> bool {
        self.deviations.iter().all(|d| d.improvement <= z * d.improvement_se + margin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashGapReport {
    pub b1_star: f64,
    pub b2_star: f64,
    pub p0: f64,
    pub stopper: PlayerGap,
    pub controller: PlayerGap,
}

fn paired(dev: &[f64], eq: &[f64]) -> (f64, f64) {
    let diff: Vec<f64> = dev.iter().zip(eq).map(|(a, b)| a - b).collect();
    mean_and_se(&diff)
}

/// Unilateral deviation gains for both players at a certified equilibrium.
/// All strategies of one player share the same paths, so gains carry
/// paired standard errors. The `theta_mode` of `cfg` is overridden.
pub fn nash_gap(
    params: &ModelParams,
    cert: &EquilibriumCertificate,
    families: &DeviationFamilies,
    cfg: &SimConfig,
) -> Result<NashGapReport> {
    if !cert.certified {
        return Err(GameError::domain("Nash gap needs a certified equilibrium"));
    }
    let eq = StrategyProfile::thresholds(cert.b1_star, cert.b2_star);

    let cfg1 = SimConfig { theta_mode: ThetaMode::Bernoulli, ..*cfg };
    let bound1 = truncation_bound(stopper_rate_bound(params), params, &cfg1);
    let (eq1, clamps) = stopper_samples(params, &eq, &cfg1)?;
    let mut devs1 = Vec::new();
    for &b in &families.stop_thresholds {
        let prof = StrategyProfile { stop_threshold: b, ..eq.clone() };
        let (xs, cl) = stopper_samples(params, &prof, &cfg1)?;
        let (improvement, improvement_se) = paired(&xs, &eq1);
        devs1.push(DeviationResult {
            label: format!("stop_at({b})"),
            estimate: McEstimate::from_samples(&xs, &cfg1, bound1, cl),
            improvement,
            improvement_se,
        });
    }
    let stopper = PlayerGap::from_results(McEstimate::from_samples(&eq1, &cfg1, bound1, clamps), devs1);

    let cfg2 = SimConfig { theta_mode: ThetaMode::FixedOne, ..*cfg };
    let bound2 = truncation_bound(controller_rate_bound(params), params, &cfg2);
    let (eq2, clamps) = controller_samples(params, &eq, &eq.control_policy, &cfg2)?;
    let mut devs2 = Vec::new();
    for pol in &families.control_policies {
        let (xs, cl) = controller_samples(params, &eq, pol, &cfg2)?;
        let (improvement, improvement_se) = paired(&xs, &eq2);
        devs2.push(DeviationResult {
            label: pol.label(),
            estimate: McEstimate::from_samples(&xs, &cfg2, bound2, cl),
            improvement,
            improvement_se,
        });
    }
    let controller = PlayerGap::from_results(McEstimate::from_samples(&eq2, &cfg2, bound2, clamps), devs2);

    Ok(NashGapReport { b1_star: cert.b1_star, b2_star: cert.b2_star, p0: cfg.p0, stopper, controller })
}
