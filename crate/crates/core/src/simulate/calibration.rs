use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::engine::draw_theta;
use super::policy::{inv_logit, logit, ControlPolicy};
use super::{map_paths, SimConfig, ThetaMode};
use crate::error::{GameError, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// Mean belief of the paths in the bin.
    pub mean_p: f64,
    /// Fraction of active controllers in the bin.
    pub mean_theta: f64,
    /// `sqrt(mean_p (1 - mean_p) / n)`.
    pub std_error: f64,
    /// False when the bin holds fewer than `min_count` paths.
    pub tested: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSlice {
    pub t: f64,
    pub bins: Vec<CalibrationBin>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub z: f64,
    pub min_count: usize,
    pub slices: Vec<CalibrationSlice>,
    pub passed: bool,
}

/// Bins paths by belief at each time in `times` and compares the share of
/// active controllers in each bin with the mean belief there, to `z`
/// standard errors. Paths are not stopped and the controller plays `policy`
/// honestly with `theta ~ Bernoulli(p0)`.
///
/// The log-odds step is the exact Bayes update for the observed increment,
/// so the comparison carries no time-step bias.
pub fn filter_calibration(
    params: &ModelParams,
    policy: &ControlPolicy,
    cfg: &SimConfig,
    times: &[f64],
    n_bins: usize,
    min_count: usize,
    z: f64,
) -> Result<CalibrationReport> {
    params.ensure_valid()?;
    cfg.validate()?;
    if n_bins == 0 || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(GameError::Config("calibration needs bins and finite non-negative times".into()));
    }
    let pol = policy.compile(params)?;
    let marks: Vec<usize> = times.iter().map(|t| (t / cfg.dt).round() as usize).collect();
    let last = marks.iter().copied().max().unwrap_or(0);
    let (c, dt, sqrt_dt) = (params.c, cfg.dt, cfg.dt.sqrt());
    let z0 = logit(cfg.p0);

    let samples: Vec<(f64, Vec<f64>)> = map_paths(cfg.n_paths, |i| {
        let mut rng = cfg.path_rng(i);
        let theta = draw_theta(&mut rng, ThetaMode::Bernoulli, cfg.p0);
        let mut at = vec![0.0; marks.len()];
        let mut z = z0;
        for step in 0..=last {
            for (slot, &m) in at.iter_mut().zip(&marks) {
                if m == step {
                    *slot = inv_logit(z);
                }
            }
            if step == last {
                break;
            }
            let l = pol.rate(z);
            let dx = (theta * l - c) * dt + sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            z += l * (dx + c * dt) - 0.5 * l * l * dt;
        }
        (theta, at)
    });

    let width = 1.0 / n_bins as f64;
    let mut slices = Vec::with_capacity(times.len());
    for (j, &t) in times.iter().enumerate() {
        let mut sums = vec![(0usize, 0.0f64, 0.0f64); n_bins];
        for (theta, at) in &samples {
            let b = ((at[j] / width) as usize).min(n_bins - 1);
            sums[b].0 += 1;
            sums[b].1 += at[j];
            sums[b].2 += theta;
        }
        let bins: Vec<CalibrationBin> = sums
            .iter()
            .enumerate()
            .map(|(b, &(n, sp, st))| {
                let nf = n.max(1) as f64;
                let (mean_p, mean_theta) = (sp / nf, st / nf);
                let std_error = (mean_p * (1.0 - mean_p) / nf).sqrt();
                let tested = n >= min_count.max(1);
                CalibrationBin {
                    lo: b as f64 * width,
                    hi: (b + 1) as f64 * width,
                    n,
                    mean_p,
                    mean_theta,
                    std_error,
                    tested,
                    passed: !tested || (mean_theta - mean_p).abs() <= z * std_error,
                }
            })
            .collect();
        let passed = bins.iter().all(|b| b.passed);
        slices.push(CalibrationSlice { t, bins, passed });
    }
    let passed = slices.iter().all(|s| s.passed);
    Ok(CalibrationReport { z, min_count, slices, passed })
}
