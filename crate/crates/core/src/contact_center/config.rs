//! Contact-center parameters. Times are in minutes; rates in the config file
//! are contacts per hour.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{GammaParams, GaussianCopula, PiecewiseRate};

/// Shape and mean of a Gamma marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSpec {
    pub shape: f64,
    pub mean: f64,
}

impl GammaSpec {
    pub fn params(&self) -> GammaParams {
        GammaParams::from_mean(self.shape, self.mean)
    }
}

/// Parameters of the reference routing rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingRule {
    /// Arriving contacts try their dedicated group before the shared one.
    pub prefer_dedicated: bool,
    /// Contact class a freed shared expert serves first.
    pub priority_class: usize,
}

impl Default for RoutingRule {
    fn default() -> Self {
        Self {
            prefer_dedicated: true,
            priority_class: 0,
        }
    }
}

/// Two contact classes and three expert groups: group 0 serves class 0,
/// group 1 serves class 1, group 2 serves both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CenterConfig {
    /// Length of one rate piece, minutes.
    pub period_minutes: f64,
    /// Hourly arrival rates per class; the day lasts one period per entry.
    pub rates_per_hour: [Vec<f64>; 2],
    pub epoch_minutes: f64,
    pub experts_per_group: usize,
    pub patience: [GammaSpec; 2],
    pub handle: [GammaSpec; 2],
    pub rho: [f64; 2],
    pub routing: RoutingRule,
}

impl Default for CenterConfig {
    fn default() -> Self {
        Self {
            period_minutes: 60.0,
            rates_per_hour: [
                vec![20.0, 25.0, 30.0, 35.0, 40.0, 35.0, 30.0, 25.0, 20.0],
                vec![15.0, 20.0, 28.0, 36.0, 42.0, 36.0, 28.0, 20.0, 15.0],
            ],
            epoch_minutes: 30.0,
            experts_per_group: 2,
            patience: [GammaSpec { shape: 2.0, mean: 6.0 }, GammaSpec { shape: 2.0, mean: 5.0 }],
            handle: [GammaSpec { shape: 3.0, mean: 8.0 }, GammaSpec { shape: 3.0, mean: 10.0 }],
            rho: [0.4, 0.4],
            routing: RoutingRule::default(),
        }
    }
}

pub const EXPERT_GROUPS: usize = 3;
pub const SHARED_GROUP: usize = 2;

impl CenterConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.period_minutes > 0.0) || !(self.epoch_minutes > 0.0) {
            return bad("period and epoch lengths must be positive".into());
        }
        if self.rates_per_hour[0].is_empty() || self.rates_per_hour[0].len() != self.rates_per_hour[1].len() {
            return bad("both classes need rate vectors of the same nonzero length".into());
        }
        if self.rates_per_hour.iter().flatten().any(|r| !(*r >= 0.0)) {
            return bad("arrival rates must be nonnegative".into());
        }
        for g in self.patience.iter().chain(&self.handle) {
            if !(g.shape > 0.0 && g.mean > 0.0) {
                return bad(format!("gamma shape and mean must be positive, got {g:?}"));
            }
        }
        if self.rho.iter().any(|r| !(r.abs() < 1.0)) {
            return bad("copula correlations must lie in (-1, 1)".into());
        }
        if self.experts_per_group == 0 {
            return bad("each expert group needs at least one expert".into());
        }
        if self.routing.priority_class > 1 {
            return bad("priority class must be 0 or 1".into());
        }
        let epochs = self.horizon() / self.epoch_minutes;
        if (epochs - epochs.round()).abs() > 1e-9 {
            return bad("the day must be a whole number of epochs".into());
        }
        Ok(())
    }

    pub fn periods(&self) -> usize {
        self.rates_per_hour[0].len()
    }

    pub fn horizon(&self) -> f64 {
        self.period_minutes * self.periods() as f64
    }

    pub fn epochs(&self) -> usize {
        (self.horizon() / self.epoch_minutes).round() as usize
    }

    pub fn experts(&self) -> usize {
        EXPERT_GROUPS * self.experts_per_group
    }

    pub fn expert_group(&self, expert: usize) -> usize {
        expert / self.experts_per_group
    }

    /// True arrival process of `class`, per minute.
    pub fn arrival_rate(&self, class: usize) -> PiecewiseRate {
        PiecewiseRate {
            rates: self.rates_per_hour[class].iter().map(|r| r / 60.0).collect(),
            period: self.period_minutes,
        }
    }

    /// True (patience, handle) law of `class`.
    pub fn copula(&self, class: usize) -> GaussianCopula {
        GaussianCopula {
            marginals: [self.patience[class].params(), self.handle[class].params()],
            rho: self.rho[class],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = CenterConfig::default();
        c.validate().unwrap();
        assert_eq!(c.epochs(), 18);
        assert_eq!(c.experts(), 6);
        assert_eq!(c.expert_group(5), SHARED_GROUP);
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let c: CenterConfig = serde_json::from_str(r#"{"rho": [0.1, 0.2]}"#).unwrap();
        assert_eq!(c.rho, [0.1, 0.2]);
        assert_eq!(c.epochs(), 18);
        assert!(serde_json::from_str::<CenterConfig>(r#"{"bogus": 1}"#).is_err());
        let bad = CenterConfig { rho: [1.0, 0.0], ..CenterConfig::default() };
        assert!(bad.validate().is_err());
    }
}
