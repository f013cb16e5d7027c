//! Interval estimators, tree-based variance attribution and the factorial
//! bias/variance study.

mod factorial;
mod importance;
mod tree;

use serde::{Deserialize, Serialize};

pub use factorial::{factorial_study, FactorialRow, FactorialStudyResult};
pub use importance::{
    bagged_importance, importance, resampled_data, table_importance, BagWeighting, ImportanceReport, ReportKind,
};
pub use tree::{grow_tree, split_gain, ConfigStats, Split, Tree, TreeData, TreeNode};

pub(crate) use importance::combine;

use crate::error::{Error, Result};
use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    /// Interpolated empirical quantiles of configuration means.
    OrderStatInterp,
    /// `mean +- t s / sqrt(n)`.
    NaiveT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub method: IntervalMethod,
}

pub type QuantileCI = Interval;

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Student-t interval around the sample mean.
pub fn naive_t_interval(outputs: &[f64], alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let n = outputs.len();
    if n < 2 {
        return Err(Error::InvalidArgument("t interval needs at least two outputs".into()));
    }
    let m = numeric::mean(outputs);
    let half = numeric::t_quantile(1.0 - alpha / 2.0, (n - 1) as f64) * (numeric::sample_variance(outputs) / n as f64).sqrt();
    Ok(Interval {
        lower: m - half,
        upper: m + half,
        alpha,
        method: IntervalMethod::NaiveT,
    })
}

/// Empirical `p`-quantile of already sorted values, interpolating linearly at
/// rank `h = (n - 1) p + 1`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// `[Q(alpha/2), Q(1 - alpha/2)]` of the configuration means.
pub fn quantile_ci(config_means: &[f64], alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    if config_means.len() < 2 {
        return Err(Error::InvalidArgument("quantile interval needs at least two means".into()));
    }
    let mut sorted = config_means.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Interval {
        lower: quantile_sorted(&sorted, alpha / 2.0),
        upper: quantile_sorted(&sorted, 1.0 - alpha / 2.0),
        alpha,
        method: IntervalMethod::OrderStatInterp,
    })
}

fn column_variance(rows: &[Vec<f64>], col: usize) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| r[col]).collect();
    numeric::sample_variance(&xs)
}

/// Per-submodel `Var(single) / Var(bagged)` across macro-replications.
pub fn vrf(single: &[Vec<f64>], bagged: &[Vec<f64>]) -> Result<Vec<f64>> {
    let ratios = vrf_unchecked(single, bagged)?;
    if let Some(l) = ratios.iter().position(|r| r.is_infinite() || r.is_nan()) {
        return Err(Error::DivisionByZero { submodel: l });
    }
    Ok(ratios)
}

/// As [`vrf`] but reports a zero bagged variance as `+inf` (or NaN for 0/0).
pub fn vrf_unchecked(single: &[Vec<f64>], bagged: &[Vec<f64>]) -> Result<Vec<f64>> {
    if single.len() < 2 || single.len() != bagged.len() {
        return Err(Error::InvalidArgument(
            "need matching score matrices with at least two macro-replications".into(),
        ));
    }
    let l = single[0].len();
    Ok((0..l)
        .map(|c| {
            let vb = column_variance(bagged, c);
            let vs = column_variance(single, c);
            if vb == 0.0 {
                if vs == 0.0 { f64::NAN } else { f64::INFINITY }
            } else {
                vs / vb
            }
        })
        .collect())
}
