//! Piecewise closed-form value functions for a candidate threshold pair.
//!
//! On each effort regime the belief ODEs are solved by powers of the odds
//! ratio `q(p) = (1-p)/p`:
//!
//! ```text
//! v(p) = k1 q^a1(hi) + k2 q^a2(hi) + (c - gap^2)/r      b1 < p < b2
//!      = k3 q^a1(lo) + k4 q^a2(lo) + c/r                b2 <= p <= 1
//!
//! u(p) = p (c1 q^a1(hi) + c2 q^a2(hi)) + (p hi - c)/r   b1 < p < b2
//!      = p (c3 q^a1(lo) + c4 q^a2(lo)) + (p lo - c)/r   b2 <= p <= 1
//! ```
//!
//! with `u = v = 0` on `[0, b1]`. The controller curve is pinned by
//! `v(b1) = 0`, `v(1) = c/r`, continuity at `b2` and the *right* derivative
//! `b2 (1-b2) v_p(b2+) = gap/lo`. The stopper curve is pinned by `u(b1) = 0`,
//! `u(1) = (lo - c)/r` and C^1 matching at `b2`.
//!
//! All odds-ratio powers are evaluated as `exp(a (ln(1-p) - ln p))`.

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::params::{Exponents, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub b1: f64,
    pub b2: f64,
}

impl ThresholdPair {
    pub fn new(b1: f64, b2: f64) -> Result<Self> {
        if 0.0 < b1 && b1 < b2 && b2 < 1.0 {
            Ok(Self { b1, b2 })
        } else {
            Err(GameError::InvalidThresholds { b1, b2 })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerCoefficients {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopperCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

/// Side of a one-sided derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// `ln((1-p)/p)`.
#[inline]
pub(crate) fn ln_odds(p: f64) -> f64 {
    (-p).ln_1p() - p.ln()
}

/// `((1-p)/p)^a / (p (1-p))`, finite at `p = 1` when `a > 1`.
#[inline]
fn odds_pow_over_var(p: f64, a: f64) -> f64 {
    ((a - 1.0) * (-p).ln_1p() - (a + 1.0) * p.ln()).exp()
}

/// `((1-p)/p)^a / (1-p)`, finite at `p = 1` when `a > 1`.
#[inline]
fn odds_pow_over_one_minus(p: f64, a: f64) -> f64 {
    ((a - 1.0) * (-p).ln_1p() - a * p.ln()).exp()
}

fn check_inputs(params: &ModelParams, tp: &ThresholdPair) -> Result<()> {
    params.ensure_valid()?;
    ThresholdPair::new(tp.b1, tp.b2).map(|_| ())
}

pub fn controller_coefficients(params: &ModelParams, tp: ThresholdPair) -> Result<ControllerCoefficients> {
    check_inputs(params, &tp)?;
    controller_coefficients_with(params, &params.exponents()?, tp)
}

/// Same as [`controller_coefficients`] with precomputed exponents and
/// without re-validating inputs. Used on the solver's hot path.
pub(crate) fn controller_coefficients_with(
    params: &ModelParams,
    ex: &Exponents,
    tp: ThresholdPair,
) -> Result<ControllerCoefficients> {
    let ModelParams { lambda_lo: lo, c, r, .. } = *params;
    let gap = params.gap();
    let (a1h, a2h, a1l) = (ex.alpha1_hi, ex.alpha2_hi, ex.alpha1_lo);
    let lq1 = ln_odds(tp.b1);
    let lq2 = ln_odds(tp.b2);

    // v(b2+) = c/r - jump
    let jump = gap / (a1l * lo);
    let k3 = -jump * (-a1l * lq2).exp();

    let low_level = (c - gap * gap) / r;
    let num = gap * gap / r - jump + low_level * (a2h * (lq2 - lq1)).exp();
    let den = (a1h * lq2).exp() - ((a1h - a2h) * lq1 + a2h * lq2).exp();
    if den == 0.0 || !den.is_finite() {
        return Err(GameError::Degenerate { which: "k1", value: den });
    }
    let k1 = num / den;
    let k2 = -low_level * (-a2h * lq1).exp() - k1 * ((a1h - a2h) * lq1).exp();
    Ok(ControllerCoefficients { k1, k2, k3, k4: 0.0 })
}

pub fn stopper_coefficients(params: &ModelParams, tp: ThresholdPair) -> Result<StopperCoefficients> {
    check_inputs(params, &tp)?;
    stopper_coefficients_with(params, &params.exponents()?, tp)
}

pub(crate) fn stopper_coefficients_with(
    params: &ModelParams,
    ex: &Exponents,
    tp: ThresholdPair,
) -> Result<StopperCoefficients> {
    let ModelParams { lambda_hi: hi, lambda_lo: lo, c, r } = *params;
    let (a1h, a2h, a1l) = (ex.alpha1_hi, ex.alpha2_hi, ex.alpha1_lo);
    let b1 = tp.b1;
    let lq1 = ln_odds(b1);
    let lq2 = ln_odds(tp.b2);
    let spread = a1h - a2h;

    // (b1 hi - c) / (b1 r)
    let drift_at_b1 = (b1 * hi - c) / (b1 * r);
    let num = a1l * (hi - lo) / r * (-a2h * lq2).exp() + (a2h - a1l) * drift_at_b1 * (-a2h * lq1).exp();
    let den = (a1h - a1l) * (spread * lq2).exp() - (a2h - a1l) * (spread * lq1).exp();
    if den == 0.0 || !den.is_finite() {
        return Err(GameError::Degenerate { which: "c1 (smooth-pasting bracket)", value: den });
    }
    let c1 = num / den;
    let c2 = -drift_at_b1 * (-a2h * lq1).exp() - c1 * (spread * lq1).exp();
    let c3 = (c1 * (a1h * lq2).exp() + c2 * (a2h * lq2).exp() + (hi - lo) / r) * (-a1l * lq2).exp();
    Ok(StopperCoefficients { c1, c2, c3, c4: 0.0 })
}

/// Both value functions bound to one threshold pair.
///
/// Coefficients are computed once at construction; evaluation is O(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueCurves {
    pub params: ModelParams,
    pub thresholds: ThresholdPair,
    pub kc: ControllerCoefficients,
    pub sc: StopperCoefficients,
    pub exponents: Exponents,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Regime {
    Stopped,
    High,
    Low,
}

impl ValueCurves {
    pub fn new(params: ModelParams, thresholds: ThresholdPair) -> Result<Self> {
        check_inputs(&params, &thresholds)?;
        let exponents = params.exponents()?;
        let kc = controller_coefficients_with(&params, &exponents, thresholds)?;
        let sc = stopper_coefficients_with(&params, &exponents, thresholds)?;
        Ok(Self { params, thresholds, kc, sc, exponents })
    }

    fn check_p(p: f64) -> Result<()> {
        if (0.0..=1.0).contains(&p) {
            Ok(())
        } else {
            Err(GameError::domain(format!("belief p = {p} outside [0, 1]")))
        }
    }

    /// Regime used for values: the lower endpoint `b1` belongs to the
    /// stopped region, `b2` to the low-effort branch.
    fn value_regime(&self, p: f64) -> Regime {
        let ThresholdPair { b1, b2 } = self.thresholds;
        if p <= b1 {
            Regime::Stopped
        } else if p < b2 {
            Regime::High
        } else {
            Regime::Low
        }
    }

    fn derivative_regime(&self, p: f64, side: Side) -> Regime {
        let ThresholdPair { b1, b2 } = self.thresholds;
        match side {
            Side::Left if p <= b1 => Regime::Stopped,
            Side::Right if p < b1 => Regime::Stopped,
            Side::Left if p <= b2 => Regime::High,
            Side::Right if p < b2 => Regime::High,
            _ => Regime::Low,
        }
    }

    fn v_in(&self, regime: Regime, p: f64) -> f64 {
        let ModelParams { c, r, .. } = self.params;
        let gap = self.params.gap();
        let ex = &self.exponents;
        let lq = ln_odds(p);
        match regime {
            Regime::Stopped => 0.0,
            Regime::High => {
                self.kc.k1 * (ex.alpha1_hi * lq).exp()
                    + self.kc.k2 * (ex.alpha2_hi * lq).exp()
                    + (c - gap * gap) / r
            }
            // k4 = 0
            Regime::Low => self.kc.k3 * (ex.alpha1_lo * lq).exp() + c / r,
        }
    }

    fn v_prime_in(&self, regime: Regime, p: f64) -> f64 {
        let ex = &self.exponents;
        match regime {
            Regime::Stopped => 0.0,
            Regime::High => {
                -(ex.alpha1_hi * self.kc.k1 * odds_pow_over_var(p, ex.alpha1_hi)
                    + ex.alpha2_hi * self.kc.k2 * odds_pow_over_var(p, ex.alpha2_hi))
            }
            Regime::Low => -ex.alpha1_lo * self.kc.k3 * odds_pow_over_var(p, ex.alpha1_lo),
        }
    }

    fn u_in(&self, regime: Regime, p: f64) -> f64 {
        let ModelParams { lambda_hi: hi, lambda_lo: lo, c, r } = self.params;
        let ex = &self.exponents;
        let lq = ln_odds(p);
        match regime {
            Regime::Stopped => 0.0,
            Regime::High => {
                p * (self.sc.c1 * (ex.alpha1_hi * lq).exp() + self.sc.c2 * (ex.alpha2_hi * lq).exp())
                    + (p * hi - c) / r
            }
            Regime::Low => p * self.sc.c3 * (ex.alpha1_lo * lq).exp() + (p * lo - c) / r,
        }
    }

    fn u_prime_in(&self, regime: Regime, p: f64) -> f64 {
        let ModelParams { lambda_hi: hi, lambda_lo: lo, r, .. } = self.params;
        let ex = &self.exponents;
        // d/dp [p q^a] = q^a (1 - p - a) / (1 - p)
        let term = |k: f64, a: f64| k * (1.0 - p - a) * odds_pow_over_one_minus(p, a);
        match regime {
            Regime::Stopped => 0.0,
            Regime::High => term(self.sc.c1, ex.alpha1_hi) + term(self.sc.c2, ex.alpha2_hi) + hi / r,
            Regime::Low => term(self.sc.c3, ex.alpha1_lo) + lo / r,
        }
    }

    /// Controller value. At `p = b2` this is the common one-sided value.
    pub fn v(&self, p: f64) -> Result<f64> {
        Self::check_p(p)?;
        Ok(self.v_in(self.value_regime(p), p))
    }

    pub fn v_prime(&self, p: f64, side: Side) -> Result<f64> {
        Self::check_p(p)?;
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(self.v_prime_in(self.derivative_regime(p, side), p))
    }

    /// Stopper value.
    pub fn u(&self, p: f64) -> Result<f64> {
        Self::check_p(p)?;
        Ok(self.u_in(self.value_regime(p), p))
    }

    pub fn u_prime(&self, p: f64, side: Side) -> Result<f64> {
        Self::check_p(p)?;
        if p == 0.0 {
            return Ok(0.0);
        }
        let b1 = self.thresholds.b1;
        if p == b1 && side == Side::Right {
            return Ok(self.smooth_fit_slope());
        }
        Ok(self.u_prime_in(self.derivative_regime(p, side), p))
    }

    /// `u_p(b1+)` via the reduced expression obtained by substituting
    /// `u(b1) = 0`:
    /// `c/(b1 r) - (a1 c1 q1^a1 + a2 c2 q1^a2) / (1 - b1)`.
    pub fn smooth_fit_slope(&self) -> f64 {
        let ModelParams { c, r, .. } = self.params;
        let ex = &self.exponents;
        let b1 = self.thresholds.b1;
        let lq1 = ln_odds(b1);
        c / (b1 * r)
            - (ex.alpha1_hi * self.sc.c1 * (ex.alpha1_hi * lq1).exp()
                + ex.alpha2_hi * self.sc.c2 * (ex.alpha2_hi * lq1).exp())
                / (1.0 - b1)
    }

    /// `p (1-p) v_p(p)` on the requested side.
    pub fn belief_slope(&self, p: f64, side: Side) -> Result<f64> {
        Ok(p * (1.0 - p) * self.v_prime(p, side)?)
    }

    /// Equilibrium effort at belief `p`: `lambda_hi` strictly below `b2`.
    pub fn lambda_star(&self, p: f64) -> f64 {
        if p < self.thresholds.b2 {
            self.params.lambda_hi
        } else {
            self.params.lambda_lo
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_curves(b1: f64, b2: f64) -> ValueCurves {
        ValueCurves::new(ModelParams::reference(), ThresholdPair::new(b1, b2).unwrap()).unwrap()
    }

    #[test]
    fn threshold_pair_ordering() {
        assert!(ThresholdPair::new(0.2, 0.6).is_ok());
        assert!(ThresholdPair::new(0.6, 0.2).is_err());
        assert!(ThresholdPair::new(0.3, 0.3).is_err());
        assert!(ThresholdPair::new(0.0, 0.5).is_err());
        assert!(ThresholdPair::new(0.5, 1.0).is_err());
        assert!(ThresholdPair::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn coefficients_match_high_precision_values() {
        // mpmath linear solve of the matching conditions at (0.125, 0.618)
        let tp = ThresholdPair::new(0.125, 0.618).unwrap();
        let p = ModelParams::reference();
        let k = controller_coefficients(&p, tp).unwrap();
        let s = stopper_coefficients(&p, tp).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
        assert!(close(k.k1, -0.5308533432760063), "{k:?}");
        assert!(close(k.k2, 2.9196233920154433), "{k:?}");
        assert!(close(k.k3, -0.8562392985807993), "{k:?}");
        assert_eq!(k.k4, 0.0);
        assert!(close(s.c1, 3.9702778679636523), "{s:?}");
        assert!(close(s.c2, -3.79538957502185), "{s:?}");
        assert!(close(s.c3, 4.268932709484546), "{s:?}");
        assert_eq!(s.c4, 0.0);
    }

    #[test]
    fn controller_value_jumps_to_fixed_level_right_of_b2() {
        let curves = reference_curves(0.125, 0.618);
        // 5 - 0.8 / (alpha1(1.4) * 1.4)
        let expected = 4.513203773588679;
        let right = curves.v_in(Regime::Low, 0.618);
        assert!((right - expected).abs() < 1e-12);
        assert!((curves.v(0.618).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn boundary_values() {
        let curves = reference_curves(0.125, 0.618);
        assert_eq!(curves.v(1.0).unwrap(), 5.0);
        assert!((curves.u(1.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(curves.v(0.0625).unwrap(), 0.0);
        assert_eq!(curves.u(0.1).unwrap(), 0.0);
        assert_eq!(curves.v(0.0).unwrap(), 0.0);
        assert!(curves.v(1.0 - 1e-9).unwrap() < 5.0);
        assert!((curves.v(1.0 - 1e-9).unwrap() - 5.0).abs() < 1e-8);
    }

    #[test]
    fn out_of_range_beliefs_are_rejected() {
        let curves = reference_curves(0.125, 0.618);
        assert!(curves.v(-0.1).is_err());
        assert!(curves.u(1.5).is_err());
        assert!(curves.v_prime(f64::NAN, Side::Left).is_err());
    }

    #[test]
    fn continuity_at_both_thresholds() {
        let curves = reference_curves(0.2, 0.7);
        // vanish at b1 from the right
        assert!(curves.v_in(Regime::High, 0.2).abs() <= 1e-10);
        assert!(curves.u_in(Regime::High, 0.2).abs() <= 1e-10);
        // match at b2
        let (vl, vr) = (curves.v_in(Regime::High, 0.7), curves.v_in(Regime::Low, 0.7));
        let (ul, ur) = (curves.u_in(Regime::High, 0.7), curves.u_in(Regime::Low, 0.7));
        assert!((vl - vr).abs() <= 1e-10 * (1.0 + vr.abs()), "{vl} vs {vr}");
        assert!((ul - ur).abs() <= 1e-10 * (1.0 + ur.abs()), "{ul} vs {ur}");
    }

    #[test]
    fn stopper_curve_is_c1_at_b2() {
        for (b1, b2) in [(0.125, 0.618), (0.05, 0.95), (0.3, 0.4)] {
            let curves = reference_curves(b1, b2);
            let l = curves.u_prime(b2, Side::Left).unwrap();
            let r = curves.u_prime(b2, Side::Right).unwrap();
            assert!((l - r).abs() <= 1e-9 * (1.0 + r.abs()), "({b1},{b2}): {l} vs {r}");
        }
    }

    #[test]
    fn right_derivative_at_b2_is_pinned() {
        for (b1, b2) in [(0.125, 0.618), (0.05, 0.95), (0.3, 0.4)] {
            let curves = reference_curves(b1, b2);
            let s = curves.belief_slope(b2, Side::Right).unwrap();
            assert!((s - 0.8 / 1.4).abs() < 1e-12, "({b1},{b2}): {s}");
        }
    }

    #[test]
    fn smooth_fit_slope_agrees_with_branch_derivative() {
        for (b1, b2) in [(0.125, 0.618), (0.05, 0.95), (0.3, 0.4)] {
            let curves = reference_curves(b1, b2);
            let reduced = curves.smooth_fit_slope();
            let branch = curves.u_prime_in(Regime::High, b1);
            assert!((reduced - branch).abs() <= 1e-9 * (1.0 + branch.abs()));
        }
        // mpmath: u_p(b1+) at (0.05, 0.95) = -3.7854983703698872
        let s = reference_curves(0.05, 0.95).u_prime(0.05, Side::Right).unwrap();
        assert!((s + 3.7854983703698872).abs() < 1e-10, "{s}");
    }

    #[test]
    fn one_sided_derivatives_below_b1() {
        let curves = reference_curves(0.2, 0.7);
        assert_eq!(curves.v_prime(0.2, Side::Left).unwrap(), 0.0);
        assert!(curves.v_prime(0.2, Side::Right).unwrap() > 0.0);
        assert_eq!(curves.u_prime(0.1, Side::Right).unwrap(), 0.0);
    }

    #[test]
    fn endpoint_derivatives_are_finite() {
        let curves = reference_curves(0.125, 0.618);
        assert_eq!(curves.v_prime(1.0, Side::Left).unwrap(), 0.0);
        assert!((curves.u_prime(1.0, Side::Left).unwrap() - 1.4 / 0.2).abs() < 1e-12);
    }

    #[test]
    fn extreme_beliefs_do_not_overflow() {
        let curves = reference_curves(1e-6, 1.0 - 1e-6);
        for p in [1e-12, 1e-9, 2e-6, 0.5, 1.0 - 2e-6, 1.0 - 1e-12] {
            for x in [
                curves.v(p).unwrap(),
                curves.u(p).unwrap(),
                curves.v_prime(p, Side::Left).unwrap(),
                curves.u_prime(p, Side::Right).unwrap(),
            ] {
                assert!(x.is_finite(), "p = {p}");
            }
        }
    }

    #[test]
    fn lambda_star_cut_is_strict() {
        let curves = reference_curves(0.125, 0.618);
        assert_eq!(curves.lambda_star(0.6179), 2.2);
        assert_eq!(curves.lambda_star(0.618), 1.4);
    }
}
