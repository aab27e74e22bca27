//! Locating and certifying the equilibrium threshold pair.
//!
//! Two residuals vanish at an equilibrium:
//!
//! * `f(b1, b2) = u_p(b1+)` (smooth fit of the stopper value), and
//! * `g(b1, b2) = b2 (1-b2) v_p(b2-) - gap/lo` (controller indifference).
//!
//! For fixed `b1`, `g` is `+inf` as `b2 -> b1` and negative as `b2 -> 1`, so
//! the inner problem is bracketed by a grid scan and refined by bisection.
//! The composite `b1 -> f(b1, b2(b1))` runs from `-inf` near 0 to `+inf`
//! near 1, which brackets the outer problem the same way.

use serde::{Deserialize, Serialize};

use crate::closed_form::{
    controller_coefficients_with, ln_odds, stopper_coefficients_with, Side, ThresholdPair, ValueCurves,
};
use crate::error::{GameError, Result, ScanRow};
use crate::params::{validate, Exponents, ModelParams, ValidationReport};

/// Slack allowed in `u >= 0` for the equilibrium condition check.
pub const NONNEGATIVITY_SLACK: f64 = 1e-9;
/// Grid points closer than this to either threshold are skipped.
pub const EXCLUSION_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOpts {
    /// Terminal bisection bracket width.
    pub tol_b: f64,
    pub tol_f: f64,
    pub tol_g: f64,
    /// Grid size of the inner `b2` scan.
    pub scan_n: usize,
    /// Grid size of the outer `b1` scan.
    pub outer_n: usize,
    /// Certification grid size on `[0, 1]`.
    pub grid_n: usize,
    /// Distance kept from 0, 1 and `b1` when scanning.
    pub bracket_eps: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            tol_b: 1e-10,
            tol_f: 1e-8,
            tol_g: 1e-8,
            scan_n: 10_000,
            outer_n: 200,
            grid_n: 2001,
            bracket_eps: 1e-6,
        }
    }
}

impl SolverOpts {
    fn check(&self) -> Result<()> {
        let positive = [self.tol_b, self.tol_f, self.tol_g, self.bracket_eps]
            .iter()
            .all(|x| *x > 0.0 && x.is_finite());
        if !positive || self.scan_n < 2 || self.outer_n < 2 || self.grid_n < 2 || self.bracket_eps >= 0.25 {
            return Err(GameError::domain(format!("invalid solver options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPair {
    pub f_val: f64,
    pub g_val: f64,
}

/// Residuals evaluated from freshly built value curves.
pub fn residuals(params: &ModelParams, tp: ThresholdPair) -> Result<ResidualPair> {
    let curves = ValueCurves::new(*params, tp)?;
    let gap = params.gap();
    Ok(ResidualPair {
        f_val: curves.u_prime(tp.b1, Side::Right)?,
        g_val: curves.belief_slope(tp.b2, Side::Left)? - gap / params.lambda_lo,
    })
}

/// Residual evaluator with cached exponents. Computes only the coefficient
/// family each residual needs.
#[derive(Debug, Clone, Copy)]
struct Residuals {
    params: ModelParams,
    ex: Exponents,
}

impl Residuals {
    fn new(params: &ModelParams) -> Result<Self> {
        params.ensure_valid()?;
        Ok(Self { params: *params, ex: params.exponents()? })
    }

    fn f(&self, b1: f64, b2: f64) -> Result<f64> {
        let tp = ThresholdPair { b1, b2 };
        let s = stopper_coefficients_with(&self.params, &self.ex, tp)?;
        let ModelParams { c, r, .. } = self.params;
        let (a1, a2) = (self.ex.alpha1_hi, self.ex.alpha2_hi);
        let lq1 = ln_odds(b1);
        Ok(c / (b1 * r) - (a1 * s.c1 * (a1 * lq1).exp() + a2 * s.c2 * (a2 * lq1).exp()) / (1.0 - b1))
    }

    fn g(&self, b1: f64, b2: f64) -> Result<f64> {
        let tp = ThresholdPair { b1, b2 };
        let k = controller_coefficients_with(&self.params, &self.ex, tp)?;
        let (a1, a2) = (self.ex.alpha1_hi, self.ex.alpha2_hi);
        let lq2 = ln_odds(b2);
        // b2 (1-b2) d/dp q^a = -a q^a
        let slope = -(a1 * k.k1 * (a1 * lq2).exp() + a2 * k.k2 * (a2 * lq2).exp());
        Ok(slope - self.params.gap() / self.params.lambda_lo)
    }
}

/// Bisection on a sign-change bracket `[lo, hi]` (`f_lo` is `f(lo)`).
///
/// Halves the bracket until it is at most `tol_x` wide and the residual at
/// the midpoint is at most `tol_y`, or until the bracket cannot shrink in
/// floating point. Returns the last evaluated midpoint.
fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, f_lo: f64, tol_x: f64, tol_y: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let lo_positive = f_lo > 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol_x && fm.abs() <= tol_y {
            return Ok(mid);
        }
    }
}

fn uniform_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + step * i as f64 })
}

/// Sign-change brackets of `values` sampled at `xs`: `(x_lo, x_hi, y_lo)`.
/// Exact zeros produce a degenerate bracket at that point.
fn sign_changes(xs: &[f64], ys: &[Option<f64>]) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for i in 0..xs.len().saturating_sub(1) {
        match (ys[i], ys[i + 1]) {
            (Some(a), _) if a == 0.0 => out.push((xs[i], xs[i], a)),
            (Some(a), Some(b)) if a.is_finite() && b.is_finite() && (a < 0.0) != (b < 0.0) && b != 0.0 => {
                out.push((xs[i], xs[i + 1], a))
            }
            _ => {}
        }
    }
    out
}

fn inner_roots(res: &Residuals, b1: f64, opts: &SolverOpts) -> Result<Vec<f64>> {
    let lo = b1 + opts.bracket_eps;
    let hi = 1.0 - opts.bracket_eps;
    if !(b1 > 0.0) || lo >= hi {
        return Err(GameError::domain(format!(
            "b1 = {b1} leaves no room for b2 in (b1 + {eps}, 1 - {eps})",
            eps = opts.bracket_eps
        )));
    }
    let xs: Vec<f64> = uniform_grid(lo, hi, opts.scan_n).collect();
    let ys: Vec<Option<f64>> = xs.iter().map(|&b2| res.g(b1, b2).ok()).collect();
    let mut roots = Vec::new();
    for (a, b, ya) in sign_changes(&xs, &ys) {
        if a == b {
            roots.push(a);
            continue;
        }
        roots.push(bisect(|b2| res.g(b1, b2), a, b, ya, opts.tol_b, 1e-2 * opts.tol_g)?);
    }
    Ok(roots)
}

/// All `b2` in `(b1, 1)` with `g(b1, b2) = 0` visible on the scan grid,
/// ascending. Empty when `g` never changes sign.
pub fn solve_b2_given_b1(params: &ModelParams, b1: f64, opts: &SolverOpts) -> Result<Vec<f64>> {
    opts.check()?;
    inner_roots(&Residuals::new(params)?, b1, opts)
}

/// Pass/fail of one grid-checked condition with its worst observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub passed: bool,
    /// Smallest signed slack seen; the condition holds iff it is positive
    /// (or non-negative for non-strict conditions).
    pub worst_margin: f64,
    /// Belief at which `worst_margin` occurred, for grid checks.
    pub worst_p: Option<f64>,
}

impl ConditionCheck {
    fn scalar(margin: f64, strict: bool) -> Self {
        let passed = if strict { margin > 0.0 } else { margin >= 0.0 };
        Self { passed, worst_margin: margin, worst_p: None }
    }

    fn grid(points: impl Iterator<Item = (f64, f64)>, strict: bool) -> Self {
        let mut worst = (f64::INFINITY, None);
        let mut any_nan = false;
        for (p, m) in points {
            if m.is_nan() {
                any_nan = true;
                worst = (f64::NAN, Some(p));
                continue;
            }
            if !worst.0.is_nan() && m < worst.0 {
                worst = (m, Some(p));
            }
        }
        let passed = !any_nan && if strict { worst.0 > 0.0 } else { worst.0 >= 0.0 };
        Self { passed, worst_margin: worst.0, worst_p: worst.1 }
    }
}

/// Grid verification of the equilibrium conditions and the derived shape
/// properties of the value functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub thresholds: ThresholdPair,
    pub grid_n: usize,
    pub residual_f: f64,
    pub residual_g: f64,
    /// (I) `u >= -1e-9` on the grid.
    pub cond_i: ConditionCheck,
    /// (II) `|u_p(b1+)| <= tol_f`.
    pub cond_ii: ConditionCheck,
    /// (III) `p (1-p) v_p` strictly decreasing on `(b1, 1)`.
    pub cond_iii: ConditionCheck,
    /// (IV) `|b2 (1-b2) v_p(b2-) - gap/lo| <= tol_g`.
    pub cond_iv: ConditionCheck,
    /// `gap/hi <= b2 (1-b2) v_p(b2-) <= gap/lo` (upper end with `tol_g` slack).
    pub feasibility_window: ConditionCheck,
    /// `v < c/r` on `(b1, 1)`.
    pub v_below_cap: ConditionCheck,
    /// `v_p > 0` on `(b1, 1)`.
    pub v_increasing: ConditionCheck,
    /// `u >= 0` on `[0, 1]` without slack.
    pub u_nonnegative: ConditionCheck,
    pub b1_below_c_over_lambda_hi: bool,
    /// `|v_p(b2-) - v_p(b2+)|`.
    pub v_kink_at_b2: f64,
}

impl ConditionReport {
    /// Conditions (I)-(IV).
    pub fn equilibrium_conditions_pass(&self) -> bool {
        self.cond_i.passed && self.cond_ii.passed && self.cond_iii.passed && self.cond_iv.passed
    }

    pub fn shape_checks_pass(&self) -> bool {
        self.feasibility_window.passed
            && self.v_below_cap.passed
            && self.v_increasing.passed
            && self.u_nonnegative.passed
            && self.b1_below_c_over_lambda_hi
    }
}

/// Checks conditions (I)-(IV) and the shape properties at `tp` on a uniform
/// grid of `opts.grid_n` points covering `[0, 1]`.
pub fn certify(params: &ModelParams, tp: ThresholdPair, opts: &SolverOpts) -> Result<ConditionReport> {
    let curves = ValueCurves::new(*params, tp)?;
    let ModelParams { lambda_hi: hi, lambda_lo: lo, c, r } = *params;
    let gap = params.gap();
    let ThresholdPair { b1, b2 } = tp;

    let grid: Vec<f64> = uniform_grid(0.0, 1.0, opts.grid_n.max(2))
        .filter(|p| (p - b1).abs() >= EXCLUSION_RADIUS && (p - b2).abs() >= EXCLUSION_RADIUS)
        .collect();
    let interior: Vec<f64> = grid.iter().copied().filter(|&p| p > b1 && p < 1.0).collect();

    let u_vals: Vec<(f64, f64)> = grid.iter().map(|&p| (p, curves.u(p).unwrap_or(f64::NAN))).collect();
    let slopes: Vec<(f64, f64)> = interior
        .iter()
        .map(|&p| (p, curves.belief_slope(p, Side::Right).unwrap_or(f64::NAN)))
        .collect();

    let f_val = curves.u_prime(b1, Side::Right)?;
    let slope_b2 = curves.belief_slope(b2, Side::Left)?;
    let g_val = slope_b2 - gap / lo;

    let cond_i = ConditionCheck::grid(u_vals.iter().map(|&(p, u)| (p, u + NONNEGATIVITY_SLACK)), false);
    let cond_ii = ConditionCheck::scalar(opts.tol_f - f_val.abs(), false);
    let cond_iii = ConditionCheck::grid(slopes.windows(2).map(|w| (w[1].0, w[0].1 - w[1].1)), true);
    let cond_iv = ConditionCheck::scalar(opts.tol_g - g_val.abs(), false);
    let feasibility_window = ConditionCheck::scalar(
        (slope_b2 - gap / hi).min(gap / lo + opts.tol_g - slope_b2),
        false,
    );
    let v_below_cap = ConditionCheck::grid(
        interior.iter().map(|&p| (p, c / r - curves.v(p).unwrap_or(f64::NAN))),
        true,
    );
    let v_increasing = ConditionCheck::grid(
        interior.iter().map(|&p| (p, curves.v_prime(p, Side::Right).unwrap_or(f64::NAN))),
        true,
    );
    let u_nonnegative = ConditionCheck::grid(u_vals.iter().copied(), false);
    let v_kink_at_b2 = (curves.v_prime(b2, Side::Left)? - curves.v_prime(b2, Side::Right)?).abs();

    Ok(ConditionReport {
        thresholds: tp,
        grid_n: opts.grid_n,
        residual_f: f_val,
        residual_g: g_val,
        cond_i,
        cond_ii,
        cond_iii,
        cond_iv,
        feasibility_window,
        v_below_cap,
        v_increasing,
        u_nonnegative,
        b1_below_c_over_lambda_hi: b1 < c / hi,
        v_kink_at_b2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub b1: f64,
    pub b2: f64,
    pub residual_f: f64,
    pub residual_g: f64,
    pub conditions_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCertificate {
    pub b1_star: f64,
    pub b2_star: f64,
    pub residual_f: f64,
    pub residual_g: f64,
    /// Conditions (I)-(IV) hold at `(b1_star, b2_star)`.
    pub certified: bool,
    /// Parameters failed validation; the pair was searched for anyway.
    pub best_effort: bool,
    pub validation: ValidationReport,
    pub conditions: ConditionReport,
    /// Every root pair located, in ascending `b1`.
    pub candidates: Vec<Candidate>,
}

impl EquilibriumCertificate {
    pub fn thresholds(&self) -> ThresholdPair {
        ThresholdPair { b1: self.b1_star, b2: self.b2_star }
    }

    pub fn curves(&self, params: &ModelParams) -> Result<ValueCurves> {
        ValueCurves::new(*params, self.thresholds())
    }
}

/// Solves `f = g = 0` by bisection on `b1 -> f(b1, b2(b1))`, where `b2(b1)`
/// is the smallest inner root, then certifies every pair found.
///
/// The primary pair is the first candidate passing (I)-(IV), or the first
/// candidate if none does (then `certified` is false).
pub fn solve_equilibrium(params: &ModelParams, opts: &SolverOpts) -> Result<EquilibriumCertificate> {
    opts.check()?;
    let validation = validate(params);
    let res = Residuals::new(params)?;
    let eps = opts.bracket_eps;

    let composite = |b1: f64| -> Result<Option<(f64, f64)>> {
        let roots = inner_roots(&res, b1, opts)?;
        match roots.first() {
            Some(&b2) => Ok(Some((b2, res.f(b1, b2)?))),
            None => Ok(None),
        }
    };

    let xs: Vec<f64> = uniform_grid(eps, 1.0 - 3.0 * eps, opts.outer_n).collect();
    let mut scan = Vec::with_capacity(xs.len());
    for &b1 in &xs {
        let row = match composite(b1) {
            Ok(Some((b2, f))) if f.is_finite() => ScanRow { b1, b2: Some(b2), f: Some(f) },
            Ok(Some((b2, _))) => ScanRow { b1, b2: Some(b2), f: None },
            _ => ScanRow { b1, b2: None, f: None },
        };
        scan.push(row);
    }
    let ys: Vec<Option<f64>> = scan.iter().map(|row| row.f).collect();
    let brackets = sign_changes(&xs, &ys);
    if brackets.is_empty() {
        return Err(GameError::NoEquilibriumFound { scan });
    }

    let mut candidates = Vec::new();
    let mut reports = Vec::new();
    for (a, b, fa) in brackets {
        let b1 = if a == b {
            a
        } else {
            let refined = bisect(
                |b1| match composite(b1)? {
                    Some((_, f)) => Ok(f),
                    None => Err(GameError::domain(format!("indifference root lost at b1 = {b1}"))),
                },
                a,
                b,
                fa,
                opts.tol_b,
                1e-1 * opts.tol_f,
            );
            match refined {
                Ok(b1) => b1,
                Err(_) => continue,
            }
        };
        let Some((b2, _)) = composite(b1)? else { continue };
        let Ok(tp) = ThresholdPair::new(b1, b2) else { continue };
        let report = certify(params, tp, opts)?;
        candidates.push(Candidate {
            b1,
            b2,
            residual_f: report.residual_f,
            residual_g: report.residual_g,
            conditions_pass: report.equilibrium_conditions_pass(),
        });
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(GameError::NoEquilibriumFound { scan });
    }

    let primary = candidates.iter().position(|c| c.conditions_pass).unwrap_or(0);
    let conditions = reports.swap_remove(primary);
    let chosen = candidates[primary];
    Ok(EquilibriumCertificate {
        b1_star: chosen.b1,
        b2_star: chosen.b2,
        residual_f: chosen.residual_f,
        residual_g: chosen.residual_g,
        certified: chosen.conditions_pass,
        best_effort: !validation.all_ok(),
        validation,
        conditions,
        candidates,
    })
}
