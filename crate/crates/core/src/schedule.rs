//! Learning-rate schedules indexed by round.

use crate::error::{contract, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Schedule {
    #[default]
    Constant,
    /// Staircase: `base · factor^⌊t / period⌋`.
    ExpDecay { factor: f64, period: u64 },
    /// `base · scale / √(t + 1)`.
    InvSqrt { scale: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Constant => Ok(()),
            Schedule::ExpDecay { factor, period } => {
                if !(factor > 0.0 && factor <= 1.0) {
                    return Err(contract("expdecay factor must lie in (0, 1]"));
                }
                if period == 0 {
                    return Err(contract("expdecay period must be at least 1"));
                }
                Ok(())
            }
            Schedule::InvSqrt { scale } => {
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(contract("inv_sqrt scale must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Rate at round `t` for base rate `base`.
    pub fn eval(&self, base: f64, t: u64) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::ExpDecay { factor, period } => {
                let drops = (t / period.max(1)) as i32;
                base * math::powi(factor, drops)
            }
            Schedule::InvSqrt { scale } => base * scale / math::sqrt((t + 1) as f64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn staircase_drops_every_period() {
        let s = Schedule::ExpDecay { factor: 0.1, period: 500 };
        assert_eq!(s.eval(1.0, 0), 1.0);
        assert_eq!(s.eval(1.0, 499), 1.0);
        assert_eq!(s.eval(1.0, 500), 0.1);
        assert!((s.eval(1.0, 1000) - 0.01).abs() < 1e-17);
    }

    #[test]
    fn constant_and_inverse_root() {
        assert_eq!(Schedule::Constant.eval(0.3, 12345), 0.3);
        assert_eq!(Schedule::InvSqrt { scale: 1.0 }.eval(1.0, 3), 0.5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Schedule::ExpDecay { factor: 0.0, period: 5 }.validate().is_err());
        assert!(Schedule::ExpDecay { factor: 1.5, period: 5 }.validate().is_err());
        assert!(Schedule::ExpDecay { factor: 0.5, period: 0 }.validate().is_err());
        assert!(Schedule::ExpDecay { factor: 1.0, period: 1 }.validate().is_ok());
    }

    proptest! {
        #[test]
        fn expdecay_is_nonincreasing_staircase(factor in 0.01f64..1.0, period in 1u64..50, rounds in 1u64..400) {
            let s = Schedule::ExpDecay { factor, period };
            let mut drops = 0;
            for t in 1..rounds {
                let prev = s.eval(2.0, t - 1);
                let cur = s.eval(2.0, t);
                prop_assert!(cur <= prev);
                if cur < prev {
                    drops += 1;
                }
            }
            let expected = if factor < 1.0 { (rounds - 1) / period } else { 0 };
            prop_assert_eq!(drops, expected);
        }
    }
}
