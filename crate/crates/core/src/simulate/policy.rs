use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::params::ModelParams;

/// One of the two admissible effort levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    High,
    Low,
}

impl Level {
    pub fn rate(self, params: &ModelParams) -> f64 {
        match self {
            Level::High => params.lambda_hi,
            Level::Low => params.lambda_lo,
        }
    }
}

/// Effort as a right-continuous step function of the belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlPolicy {
    /// High effort iff `p < cut`.
    Threshold { cut: f64 },
    Constant { level: Level },
    /// `levels[i]` applies on `[breaks[i-1], breaks[i])`, with
    /// `breaks[-1] = 0` and `breaks[n] = 1`.
    Step { breaks: Vec<f64>, levels: Vec<Level> },
}

impl ControlPolicy {
    pub fn threshold(cut: f64) -> Self {
        ControlPolicy::Threshold { cut }
    }

    pub fn constant(level: Level) -> Self {
        ControlPolicy::Constant { level }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControlPolicy::Threshold { cut } if !(*cut > 0.0 && *cut < 1.0) => {
                Err(GameError::domain(format!("threshold cut {cut} outside (0, 1)")))
            }
            ControlPolicy::Step { breaks, levels } => {
                if levels.len() != breaks.len() + 1 {
                    return Err(GameError::domain(format!(
                        "step policy needs {} levels for {} breaks, got {}",
                        breaks.len() + 1,
                        breaks.len(),
                        levels.len()
                    )));
                }
                let inside = breaks.iter().all(|b| *b > 0.0 && *b < 1.0);
                let increasing = breaks.windows(2).all(|w| w[0] < w[1]);
                if !inside || !increasing {
                    return Err(GameError::domain("step breaks must increase strictly inside (0, 1)"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Effort level at belief `p`.
    pub fn level_at(&self, p: f64) -> Level {
        match self {
            ControlPolicy::Threshold { cut } => {
                if p < *cut {
                    Level::High
                } else {
                    Level::Low
                }
            }
            ControlPolicy::Constant { level } => *level,
            ControlPolicy::Step { breaks, levels } => levels[breaks.partition_point(|b| *b <= p)],
        }
    }

    pub fn label(&self) -> String {
        match self {
            ControlPolicy::Threshold { cut } => format!("threshold({cut})"),
            ControlPolicy::Constant { level: Level::High } => "constant(high)".into(),
            ControlPolicy::Constant { level: Level::Low } => "constant(low)".into(),
            ControlPolicy::Step { breaks, levels } => format!("step({breaks:?}, {levels:?})"),
        }
    }

    pub(crate) fn compile(&self, params: &ModelParams) -> Result<CompiledPolicy> {
        self.validate()?;
        let (breaks, levels): (Vec<f64>, Vec<Level>) = match self {
            ControlPolicy::Threshold { cut } => (vec![*cut], vec![Level::High, Level::Low]),
            ControlPolicy::Constant { level } => (vec![], vec![*level]),
            ControlPolicy::Step { breaks, levels } => (breaks.clone(), levels.clone()),
        };
        Ok(CompiledPolicy {
            z_breaks: breaks.iter().map(|&b| logit(b)).collect(),
            rates: levels.iter().map(|l| l.rate(params)).collect(),
        })
    }
}

/// Stopping threshold plus the equilibrium effort policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyProfile {
    /// Stop at the first grid time with `P <= stop_threshold`.
    pub stop_threshold: f64,
    pub control_policy: ControlPolicy,
}

impl StrategyProfile {
    pub fn thresholds(b1: f64, b2: f64) -> Self {
        Self { stop_threshold: b1, control_policy: ControlPolicy::threshold(b2) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stop_threshold >= 0.0 && self.stop_threshold < 1.0) {
            return Err(GameError::domain(format!(
                "stop threshold {} outside [0, 1)",
                self.stop_threshold
            )));
        }
        self.control_policy.validate()
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn inv_logit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Step policy in log-odds coordinates.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CompiledPolicy {
    pub z_breaks: Vec<f64>,
    pub rates: Vec<f64>,
}

impl CompiledPolicy {
    #[inline]
    pub fn rate(&self, z: f64) -> f64 {
        let mut i = 0;
        while i < self.z_breaks.len() && self.z_breaks[i] <= z {
            i += 1;
        }
        self.rates[i]
    }

    pub fn top_break(&self) -> Option<f64> {
        self.z_breaks.last().copied()
    }

    pub fn top_rate(&self) -> f64 {
        *self.rates.last().expect("policy has at least one level")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_cut_is_strict() {
        let pol = ControlPolicy::threshold(0.6);
        assert_eq!(pol.level_at(0.5999999), Level::High);
        assert_eq!(pol.level_at(0.6), Level::Low);
    }

    #[test]
    fn step_policy_is_right_continuous() {
        let pol = ControlPolicy::Step { breaks: vec![0.2, 0.7], levels: vec![Level::Low, Level::High, Level::Low] };
        assert_eq!(pol.level_at(0.1), Level::Low);
        assert_eq!(pol.level_at(0.2), Level::High);
        assert_eq!(pol.level_at(0.69), Level::High);
        assert_eq!(pol.level_at(0.7), Level::Low);
        let compiled = pol.compile(&ModelParams::reference()).unwrap();
        for p in [0.05, 0.2, 0.5, 0.7, 0.95] {
            assert_eq!(compiled.rate(logit(p)), pol.level_at(p).rate(&ModelParams::reference()));
        }
    }

    #[test]
    fn malformed_policies_are_rejected() {
        assert!(ControlPolicy::threshold(1.0).validate().is_err());
        assert!(ControlPolicy::Step { breaks: vec![0.5, 0.4], levels: vec![Level::Low; 3] }.validate().is_err());
        assert!(ControlPolicy::Step { breaks: vec![0.5], levels: vec![Level::Low] }.validate().is_err());
    }

    #[test]
    fn logit_round_trip() {
        for p in [1e-12, 0.1, 0.5, 0.9, 1.0 - 1e-12] {
            assert!((inv_logit(logit(p)) - p).abs() <= 1e-15 * p.max(1e-3) + 1e-16);
        }
        assert_eq!(inv_logit(-800.0), 0.0);
        assert_eq!(inv_logit(800.0), 1.0);
    }

    #[test]
    fn policy_serde_shape() {
        let pol: ControlPolicy = serde_json::from_str(r#"{"kind":"constant","level":"high"}"#).unwrap();
        assert_eq!(pol, ControlPolicy::constant(Level::High));
        assert!(serde_json::from_str::<ControlPolicy>(r#"{"kind":"threshold","cut":0.5,"x":1}"#).is_err());
    }
}
