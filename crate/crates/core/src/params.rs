//! Model primitives, characteristic exponents and the parameter conditions
//! under which a double-threshold equilibrium is known to exist.

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// The four model primitives.
///
/// Construction is unchecked so that invalid parameter sets can still be
/// passed to [`validate`] and reported on. Code that needs valid parameters
/// calls [`ModelParams::ensure_valid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// High effort rate.
    pub lambda_hi: f64,
    /// Low effort rate.
    pub lambda_lo: f64,
    /// Salary / cost rate.
    pub c: f64,
    /// Discount rate.
    pub r: f64,
}

impl ModelParams {
    pub const fn new(lambda_hi: f64, lambda_lo: f64, c: f64, r: f64) -> Self {
        Self { lambda_hi, lambda_lo, c, r }
    }

    /// Reference parameter set
    /// (`lambda_hi = 2.2`, `lambda_lo = 1.4`, `c = 1`, `r = 0.2`).
    pub const fn reference() -> Self {
        Self::new(2.2, 1.4, 1.0, 0.2)
    }

    /// Effort gap `lambda_hi - lambda_lo`.
    pub fn gap(&self) -> f64 {
        self.lambda_hi - self.lambda_lo
    }

    /// `lambda_hi > lambda_lo > c > 0` and `r > 0`, all finite.
    pub fn model_ok(&self) -> bool {
        let finite = [self.lambda_hi, self.lambda_lo, self.c, self.r]
            .iter()
            .all(|x| x.is_finite());
        finite
            && self.lambda_hi > self.lambda_lo
            && self.lambda_lo > self.c
            && self.c > 0.0
            && self.r > 0.0
    }

    pub fn ensure_valid(&self) -> Result<()> {
        if self.model_ok() {
            Ok(())
        } else {
            Err(GameError::domain(format!(
                "model assumption lambda_hi > lambda_lo > c > 0, r > 0 violated by {self:?}"
            )))
        }
    }

    pub fn exponents(&self) -> Result<Exponents> {
        Exponents::new(self)
    }
}

/// Roots `(alpha1, alpha2)` of `alpha^2 - alpha - 2r/level^2 = 0`.
///
/// `q^alpha` with `q = (1-p)/p` solves the homogeneous belief ODE at effort
/// `level`; `alpha1 > 1` and `alpha2 < 0`.
pub fn alpha(level: f64, r: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level.is_finite()) || !(r > 0.0 && r.is_finite()) {
        return Err(GameError::domain(format!(
            "alpha needs level > 0 and r > 0, got level = {level}, r = {r}"
        )));
    }
    let x = 2.0 * r / (level * level);
    let a1 = 0.5 + 0.5 * (1.0 + 4.0 * x).sqrt();
    // a1 * a2 = -x; dividing avoids the cancellation in 1/2 - sqrt(..)/2.
    let a2 = -x / a1;
    Ok((a1, a2))
}

/// Characteristic exponents at both effort levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha1_hi: f64,
    pub alpha2_hi: f64,
    pub alpha1_lo: f64,
    pub alpha2_lo: f64,
}

impl Exponents {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let (alpha1_hi, alpha2_hi) = alpha(params.lambda_hi, params.r)?;
        let (alpha1_lo, alpha2_lo) = alpha(params.lambda_lo, params.r)?;
        Ok(Self { alpha1_hi, alpha2_hi, alpha1_lo, alpha2_lo })
    }
}

/// Which comparison an inequality uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    /// `margin > 0` required.
    Strict,
    /// `margin >= 0` required.
    NonStrict,
}

/// One elementary inequality written as `margin (>|>=) 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    pub group: ConditionGroup,
    pub value: f64,
    pub strictness: Strictness,
}

impl Margin {
    pub fn holds(&self) -> bool {
        match self.strictness {
            Strictness::Strict => self.value > 0.0,
            Strictness::NonStrict => self.value >= 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionGroup {
    /// `lambda_hi > lambda_lo > c > 0`, `r > 0`.
    Model,
    /// `-alpha2(hi) (gap^2/r - gap/(alpha1(lo) lo)) < gap/lo < c/r`.
    CondA,
    /// `gap^2 <= c <= (1 - alpha1(lo)) hi + alpha1(lo) lo`.
    CondB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model_ok: bool,
    pub cond_a_ok: bool,
    pub cond_b_ok: bool,
    pub margins: Vec<Margin>,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.model_ok && self.cond_a_ok && self.cond_b_ok
    }

    pub fn group(&self, group: ConditionGroup) -> impl Iterator<Item = &Margin> {
        self.margins.iter().filter(move |m| m.group == group)
    }
}

/// Checks the model assumption and both existence conditions, reporting a
/// signed margin for every elementary inequality. Never fails.
///
/// Margins that cannot be evaluated (e.g. exponents undefined because
/// `r <= 0`) are NaN and count as failed.
pub fn validate(params: &ModelParams) -> ValidationReport {
    use ConditionGroup::*;
    use Strictness::*;

    let ModelParams { lambda_hi: hi, lambda_lo: lo, c, r } = *params;
    let gap = hi - lo;
    let mut margins = Vec::with_capacity(8);
    let mut push = |name: &str, group, value: f64, strictness| {
        margins.push(Margin { name: name.to_string(), group, value, strictness });
    };

    push("lambda_hi - lambda_lo > 0", Model, gap, Strict);
    push("lambda_lo - c > 0", Model, lo - c, Strict);
    push("c > 0", Model, c, Strict);
    push("r > 0", Model, r, Strict);

    let (a1_lo, a2_hi) = match (alpha(lo, r), alpha(hi, r)) {
        (Ok((a1_lo, _)), Ok((_, a2_hi))) => (a1_lo, a2_hi),
        _ => (f64::NAN, f64::NAN),
    };

    let lower = -a2_hi * (gap * gap / r - gap / (a1_lo * lo));
    let middle = gap / lo;
    push("gap/lo - (-alpha2(hi) (gap^2/r - gap/(alpha1(lo) lo))) > 0", CondA, middle - lower, Strict);
    push("c/r - gap/lo > 0", CondA, c / r - middle, Strict);

    let upper = (1.0 - a1_lo) * hi + a1_lo * lo;
    push("c - gap^2 >= 0", CondB, c - gap * gap, NonStrict);
    push("(1 - alpha1(lo)) hi + alpha1(lo) lo - c >= 0", CondB, upper - c, NonStrict);

    let group_ok = |g| margins.iter().filter(|m| m.group == g).all(Margin::holds);
    let model_ok = group_ok(Model) && params.model_ok();
    let cond_a_ok = group_ok(CondA);
    let cond_b_ok = group_ok(CondB);
    ValidationReport { model_ok, cond_a_ok, cond_b_ok, margins }
}
