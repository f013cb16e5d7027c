//! Parameter payloads for the supported submodel families and how each is
//! evaluated. Fitting lives in [`crate::resample`].

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{gamma_cdf, gamma_quantile, normal_cdf, normal_quantile};
use crate::stream::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub sd: f64,
}

impl NormalParams {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean + self.sd * z
    }
}

/// Gamma distribution in shape/rate parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn from_mean(shape: f64, mean: f64) -> Self {
        Self {
            shape,
            rate: shape / mean,
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn cdf(&self, x: f64) -> f64 {
        gamma_cdf(self.shape, self.rate, x)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if self.shape == 1.0 {
            return -(-p).ln_1p() / self.rate;
        }
        gamma_quantile(self.shape, self.rate, p)
    }

    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        rand_distr::Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated gamma parameters")
            .sample(rng)
    }

    /// Draw conditioned on exceeding `lower`, by inverse CDF on the truncated range.
    pub fn sample_above(&self, lower: f64, rng: &mut StreamRng) -> f64 {
        let u: f64 = rng.random();
        self.quantile_above(lower, u)
    }

    fn quantile_above(&self, lower: f64, u: f64) -> f64 {
        if lower <= 0.0 {
            return self.quantile(u);
        }
        let f0 = self.cdf(lower);
        if f0 >= 1.0 - 1e-12 {
            return lower;
        }
        let p = (f0 + u * (1.0 - f0)).min(1.0 - 1e-16);
        self.quantile(p).max(lower)
    }
}

/// Piecewise-constant rate function: `rates[h]` events per unit time over
/// `[h * period, (h + 1) * period)`, repeating cyclically past the last piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseRate {
    pub rates: Vec<f64>,
    pub period: f64,
}

impl PiecewiseRate {
    pub fn horizon(&self) -> f64 {
        self.period * self.rates.len() as f64
    }

    pub fn piece(&self, t: f64) -> usize {
        ((t / self.period).floor().max(0.0) as usize) % self.rates.len()
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.rates[self.piece(t)]
    }

    /// Arrival epochs of the nonhomogeneous Poisson process on `[start, end)`
    /// by thinning a homogeneous process at the window's peak rate.
    pub fn arrival_times(&self, start: f64, end: f64, rng: &mut StreamRng) -> Vec<f64> {
        let mut out = Vec::new();
        if end <= start {
            return out;
        }
        let first = (start / self.period).floor() as i64;
        let last = ((end / self.period).ceil() as i64).max(first + 1);
        let peak = if (last - first) as usize >= self.rates.len() {
            self.rates.iter().cloned().fold(0.0, f64::max)
        } else {
            (first..last)
                .map(|h| self.rates[(h.max(0) as usize) % self.rates.len()])
                .fold(0.0, f64::max)
        };
        if peak <= 0.0 {
            return out;
        }
        let gap = Exp::new(peak).expect("positive rate");
        let mut t = start;
        loop {
            t += gap.sample(rng);
            if t >= end {
                break;
            }
            let u: f64 = rng.random();
            if u * peak < self.rate_at(t) {
                out.push(t);
            }
        }
        out
    }
}

/// Bivariate Gaussian copula with Gamma marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCopula {
    pub marginals: [GammaParams; 2],
    pub rho: f64,
}

impl GaussianCopula {
    pub fn sample(&self, rng: &mut StreamRng) -> [f64; 2] {
        self.sample_first_above(0.0, rng)
    }

    /// Joint draw conditioned on the first coordinate exceeding `lower`.
    ///
    /// The first normal score is drawn from its truncated law by inverse CDF,
    /// so with `lower = 0` this is an ordinary joint draw.
    pub fn sample_first_above(&self, lower: f64, rng: &mut StreamRng) -> [f64; 2] {
        let u1: f64 = rng.random();
        let eps: f64 = rng.sample(StandardNormal);
        let f0 = if lower > 0.0 { self.marginals[0].cdf(lower) } else { 0.0 };
        let p1 = (f0 + u1 * (1.0 - f0)).clamp(1e-300, 1.0 - 1e-16);
        let x1 = if f0 >= 1.0 - 1e-12 {
            lower
        } else {
            self.marginals[0].quantile(p1).max(lower)
        };
        let z1 = normal_quantile(p1);
        let z2 = self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * eps;
        let p2 = normal_cdf(z2).clamp(1e-300, 1.0 - 1e-16);
        [x1, self.marginals[1].quantile(p2)]
    }
}

/// k-nearest-neighbour regressor with inverse-distance weights. Queries are
/// clamped to the bounding box of the training inputs, so predictions are
/// constant outside the observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRegressor {
    pub k: usize,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl KnnRegressor {
    pub fn new(k: usize, inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::IncompatibleData {
                family: "knn",
                reason: "inputs have differing dimensions".into(),
            });
        }
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for x in &inputs {
            for d in 0..dim {
                lower[d] = lower[d].min(x[d]);
                upper[d] = upper[d].max(x[d]);
            }
        }
        Ok(Self {
            k: k.clamp(1, inputs.len()),
            inputs,
            outputs,
            lower,
            upper,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let dim = self.lower.len();
        if x.len() != dim {
            return Err(Error::InputDimension {
                expected: dim,
                got: x.len(),
            });
        }
        let q: Vec<f64> = (0..dim).map(|d| x[d].clamp(self.lower[d], self.upper[d])).collect();
        let mut dist: Vec<(f64, usize)> = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, xi)| {
                let d2: f64 = xi.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), i)
            })
            .collect();

        let exact: Vec<f64> = dist
            .iter()
            .filter(|(d, _)| *d == 0.0)
            .map(|&(_, i)| self.outputs[i])
            .collect();
        if !exact.is_empty() {
            return Ok(exact.iter().sum::<f64>() / exact.len() as f64);
        }

        let k = self.k;
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(d, i) in &dist[..k] {
            let w = 1.0 / d;
            num += w * self.outputs[i];
            den += w;
        }
        Ok(num / den)
    }
}

/// Multinomial logistic model with class 0 as reference.
///
/// `weights[c - 1]` holds `[intercept, w_1, .., w_d]` for class `c >= 1`.
/// `covariance`, when present, is the inverse Hessian of the (penalized)
/// negative log-likelihood at the fitted weights, over the flattened
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub classes: usize,
    pub weights: Vec<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub ridge: f64,
}

impl LogisticModel {
    pub fn new(classes: usize, weights: Vec<Vec<f64>>, covariance: Option<Vec<Vec<f64>>>) -> Self {
        Self {
            classes,
            weights,
            covariance,
            ridge: 0.0,
        }
    }

    pub fn features(&self) -> usize {
        self.weights.first().map_or(0, |w| w.len() - 1)
    }

    pub fn flat_weights(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }

    pub fn with_flat_weights(&self, flat: &[f64]) -> Self {
        let width = self.features() + 1;
        Self {
            classes: self.classes,
            weights: flat.chunks(width).map(<[f64]>::to_vec).collect(),
            covariance: self.covariance.clone(),
            ridge: self.ridge,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.features();
        if x.len() != d {
            return Err(Error::InputDimension { expected: d, got: x.len() });
        }
        let mut eta = Vec::with_capacity(self.classes);
        eta.push(0.0);
        for w in &self.weights {
            eta.push(w[0] + w[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
        Ok(eta)
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let eta = self.logits(x)?;
        Ok(softmax(&eta))
    }
}

pub(crate) fn softmax(eta: &[f64]) -> Vec<f64> {
    let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = eta.iter().map(|e| (e - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
