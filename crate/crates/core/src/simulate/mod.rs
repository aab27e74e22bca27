//! Monte Carlo simulation of the belief and income processes.
//!
//! Beliefs are integrated in log-odds coordinates `Z = ln(P / (1 - P))`,
//! which keeps `P` inside `(0, 1)` without clamping. Every path draws from
//! its own ChaCha stream keyed by `(seed, path_index)`, and sums are reduced
//! pairwise in path order, so results do not depend on thread scheduling.

mod calibration;
mod engine;
mod policy;
mod weak;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

pub use calibration::{filter_calibration, CalibrationBin, CalibrationReport, CalibrationSlice};
pub use engine::{
    estimate_controller_reward, estimate_stopper_reward, nash_gap, simulate_belief_path, BeliefPath,
    DeviationFamilies, DeviationResult, NashGapReport, PlayerGap,
};
pub use policy::{ControlPolicy, Level, StrategyProfile};
pub use weak::{likelihood_weight_mean, weak_estimate, Player, WeakEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// Condition on an active controller.
    FixedOne,
    /// Draw `theta ~ Bernoulli(p0)` per path.
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Logit,
    /// Euler on `P` directly, clamped to `[1e-9, 1 - 1e-9]`.
    DirectClamped,
}

pub const CLAMP_LO: f64 = 1e-9;
pub const CLAMP_HI: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub p0: f64,
    pub theta_mode: ThetaMode,
    pub integrator: Integrator,
    /// Paths that sit so far above every policy and stopping cut that a
    /// return has probability below this are finished analytically.
    /// Zero disables this.
    pub absorb_tol: f64,
    /// Target for the discount truncation bound.
    pub truncation_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 200.0,
            n_paths: 100_000,
            seed: 20_240_601,
            p0: 0.5,
            theta_mode: ThetaMode::Bernoulli,
            integrator: Integrator::Logit,
            absorb_tol: 1e-6,
            truncation_tol: 1e-4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GameError::Config(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be non-negative, got {}", self.horizon));
        }
        if self.horizon > 0.0 && self.dt >= self.horizon {
            return bad(format!("dt = {} must be below horizon = {}", self.dt, self.horizon));
        }
        if self.n_paths < 2 {
            return bad(format!("n_paths must be at least 2, got {}", self.n_paths));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return bad(format!("p0 must lie in (0, 1), got {}", self.p0));
        }
        if !(self.absorb_tol >= 0.0 && self.absorb_tol < 1.0) {
            return bad(format!("absorb_tol must lie in [0, 1), got {}", self.absorb_tol));
        }
        if !(self.truncation_tol > 0.0) {
            return bad(format!("truncation_tol must be positive, got {}", self.truncation_tol));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub(crate) fn path_rng(&self, path_index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path_index as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub std_error: f64,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    /// `e^{-rT} * max|payoff rate| / r`.
    pub truncation_bound: f64,
    pub truncation_ok: bool,
    pub clamp_events: u64,
    pub ess: Option<f64>,
    pub low_ess_warning: bool,
}

impl McEstimate {
    pub(crate) fn from_samples(samples: &[f64], cfg: &SimConfig, truncation_bound: f64, clamp_events: u64) -> Self {
        let (mean, std_error) = mean_and_se(samples);
        Self {
            mean,
            std_error,
            n: samples.len(),
            dt: cfg.dt,
            horizon: cfg.horizon,
            truncation_bound,
            truncation_ok: truncation_bound <= cfg.truncation_tol,
            clamp_events,
            ess: None,
            low_ess_warning: false,
        }
    }
}

/// Sum in a fixed binary tree, independent of how the slice was produced.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordered map over path indices, parallel when the feature is on.
pub(crate) fn map_paths<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
