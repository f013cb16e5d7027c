//! Posterior draws around a fitted model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use super::fit::{FitStats, Fitted};
use super::ResampleMode;
use crate::error::{Error, Result};
use crate::families::{GammaParams, GaussianCopula, LogisticModel, NormalParams, PiecewiseRate};
use crate::numeric::trigamma;
use crate::stream::StreamRng;
use crate::submodel::Submodel;

pub(crate) fn draw(fitted: &Fitted, family: &'static str, mode: ResampleMode, rng: &mut StreamRng) -> Result<Submodel> {
    let incompatible = || Error::IncompatibleMode {
        mode: mode.name(),
        family,
    };
    match (mode, &fitted.model, &fitted.stats) {
        (ResampleMode::PosteriorNormalApprox, Submodel::Normal(p), FitStats::Normal { m, .. }) => {
            let m = *m as f64;
            let mean = p.mean + p.sd / m.sqrt() * std_normal(rng);
            let sd = (p.sd + p.sd / (2.0 * m).sqrt() * std_normal(rng)).abs();
            Ok(Submodel::Normal(NormalParams { mean, sd }))
        }
        (ResampleMode::PosteriorExactConjugate, Submodel::Normal(p), FitStats::Normal { m, sum_sq }) => {
            // Reference prior p(mu, sigma^2) ~ 1/sigma^2:
            // sigma^2 | x ~ S / chi2(m-1), mu | sigma^2, x ~ N(xbar, sigma^2 / m).
            if *m < 2 {
                return Err(Error::DegenerateData("conjugate normal posterior needs m >= 2".into()));
            }
            let m = *m as f64;
            let chi = ChiSquared::new(m - 1.0).expect("positive dof").sample(rng);
            let var = sum_sq / chi;
            let mean = p.mean + (var / m).sqrt() * std_normal(rng);
            Ok(Submodel::Normal(NormalParams { mean, sd: var.sqrt() }))
        }
        (ResampleMode::PosteriorNormalApprox, Submodel::Gamma(g), FitStats::Gamma { m }) => {
            Ok(Submodel::Gamma(draw_gamma_params(g, *m, rng)))
        }
        (ResampleMode::PosteriorNormalApprox, Submodel::PiecewiseRate(r), FitStats::Piecewise { exposure, .. }) => {
            let rates = r
                .rates
                .iter()
                .map(|&rate| (rate + (rate / exposure).sqrt() * std_normal(rng)).max(0.0))
                .collect();
            Ok(Submodel::PiecewiseRate(PiecewiseRate { rates, period: r.period }))
        }
        (ResampleMode::PosteriorExactConjugate, Submodel::PiecewiseRate(r), FitStats::Piecewise { counts, exposure }) => {
            // Jeffreys prior Gamma(1/2, 0) on each Poisson rate.
            let rates = counts
                .iter()
                .map(|&c| {
                    Gamma::new(c as f64 + 0.5, 1.0 / exposure)
                        .expect("positive shape")
                        .sample(rng)
                })
                .collect();
            Ok(Submodel::PiecewiseRate(PiecewiseRate { rates, period: r.period }))
        }
        (ResampleMode::PosteriorNormalApprox, Submodel::Copula(c), FitStats::Copula { m }) => {
            let marginals = [
                draw_gamma_params(&c.marginals[0], *m, rng),
                draw_gamma_params(&c.marginals[1], *m, rng),
            ];
            // Fisher z-transform for the correlation.
            let se = 1.0 / ((*m as f64 - 3.0).max(1.0)).sqrt();
            let z = c.rho.atanh() + se * std_normal(rng);
            Ok(Submodel::Copula(GaussianCopula {
                marginals,
                rho: z.tanh().clamp(-0.999, 0.999),
            }))
        }
        (ResampleMode::PosteriorNormalApprox, Submodel::Logistic(l), FitStats::Logistic { covariance }) => {
            Ok(Submodel::Logistic(draw_logistic(l, covariance, rng)?))
        }
        _ => Err(incompatible()),
    }
}

fn std_normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

fn mvn(mean: &[f64], cov: &[Vec<f64>], rng: &mut StreamRng) -> Option<Vec<f64>> {
    let n = mean.len();
    let c = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    let l = c.cholesky()?.l();
    let z = DVector::from_fn(n, |_, _| std_normal(rng));
    let x = l * z;
    Some(mean.iter().zip(x.iter()).map(|(m, d)| m + d).collect())
}

/// Normal approximation to the posterior of (shape, rate) using the inverse
/// Fisher information of `m` observations. Redraws until both are positive.
fn draw_gamma_params(g: &GammaParams, m: usize, rng: &mut StreamRng) -> GammaParams {
    let m = m as f64;
    let (k, b) = (g.shape, g.rate);
    let info = [[m * trigamma(k), -m / b], [-m / b, m * k / (b * b)]];
    let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
    let cov = vec![
        vec![info[1][1] / det, -info[0][1] / det],
        vec![-info[1][0] / det, info[0][0] / det],
    ];
    for _ in 0..100 {
        if let Some(x) = mvn(&[k, b], &cov, rng) {
            if x[0] > 0.0 && x[1] > 0.0 {
                return GammaParams { shape: x[0], rate: x[1] };
            }
        } else {
            break;
        }
    }
    *g
}

fn draw_logistic(l: &LogisticModel, covariance: &[Vec<f64>], rng: &mut StreamRng) -> Result<LogisticModel> {
    let cov = l.covariance.as_deref().unwrap_or(covariance);
    let flat = mvn(&l.flat_weights(), cov, rng)
        .ok_or_else(|| Error::DegenerateData("logistic covariance is not positive definite".into()))?;
    Ok(l.with_flat_weights(&flat))
}
