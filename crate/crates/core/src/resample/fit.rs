//! Point estimation for every supported family.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{softmax, GammaParams, GaussianCopula, KnnRegressor, LogisticModel, NormalParams, PiecewiseRate};
use crate::numeric::{digamma, mean, normal_scores_correlation, trigamma};
use crate::submodel::{Provenance, Submodel, SubmodelInstance, SubmodelKind, TrainingDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    NormalMle,
    GammaMle,
    /// `periods` pieces of length `period`; each rate is the piece's count
    /// divided by `exposure`, the observed time per piece.
    PiecewiseRateMle {
        period: f64,
        periods: usize,
        exposure: f64,
    },
    GaussianCopula,
    Knn {
        k: usize,
    },
    LogisticMle {
        classes: usize,
    },
    LogisticLaplace {
        classes: usize,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::NormalMle => "NormalMLE",
            Family::GammaMle => "GammaMLE",
            Family::PiecewiseRateMle { .. } => "PiecewiseRateMLE",
            Family::GaussianCopula => "GaussianCopula",
            Family::Knn { .. } => "KNNRegressor",
            Family::LogisticMle { .. } => "LogisticMLE",
            Family::LogisticLaplace { .. } => "LogisticLaplace",
        }
    }

    pub fn kind(&self) -> SubmodelKind {
        match self {
            Family::Knn { .. } | Family::LogisticMle { .. } | Family::LogisticLaplace { .. } => {
                SubmodelKind::Deterministic
            }
            _ => SubmodelKind::UnconditionalStochastic,
        }
    }
}

/// How to estimate one submodel slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitter {
    pub submodel_id: usize,
    pub family: Family,
    /// Output columns this member reads from a shared joint-group dataset.
    /// `None` uses every output column.
    pub columns: Option<Vec<usize>>,
}

impl Fitter {
    pub fn new(submodel_id: usize, family: Family) -> Self {
        Self {
            submodel_id,
            family,
            columns: None,
        }
    }

    pub fn with_columns(mut self, columns: Vec<usize>) -> Self {
        self.columns = Some(columns);
        self
    }

    /// Fits on `data` and returns an [`Provenance::Estimated`] instance.
    pub fn fit(&self, data: &TrainingDataset) -> Result<SubmodelInstance> {
        let fitted = self.fit_detailed(data)?;
        Ok(SubmodelInstance::new(
            self.submodel_id,
            0,
            Provenance::Estimated,
            fitted.model,
        ))
    }

    pub(crate) fn fit_detailed(&self, data: &TrainingDataset) -> Result<Fitted> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let view = self.project(data);
        let family = self.family.name();
        let needs_input = self.family.kind().takes_input();
        if needs_input && view.records.iter().any(|r| r.input.is_none()) {
            return Err(Error::IncompatibleData {
                family,
                reason: "records without inputs".into(),
            });
        }
        if !needs_input && view.has_inputs() {
            return Err(Error::IncompatibleData {
                family,
                reason: "unconditional family given input records".into(),
            });
        }
        match &self.family {
            Family::NormalMle => fit_normal(&view.output_column(0)),
            Family::GammaMle => {
                let xs = view.output_column(0);
                let g = gamma_mle(&xs)?;
                Ok(Fitted {
                    model: Submodel::Gamma(g),
                    stats: FitStats::Gamma { m: xs.len() },
                })
            }
            Family::PiecewiseRateMle {
                period,
                periods,
                exposure,
            } => fit_piecewise(&view.output_column(0), *period, *periods, *exposure),
            Family::GaussianCopula => {
                if view.records.iter().any(|r| r.output.len() < 2) {
                    return Err(Error::IncompatibleData {
                        family,
                        reason: "copula records need two outputs".into(),
                    });
                }
                let a = view.output_column(0);
                let b = view.output_column(1);
                let marginals = [gamma_mle(&a)?, gamma_mle(&b)?];
                let rho = normal_scores_correlation(&a, &b).clamp(-0.999, 0.999);
                Ok(Fitted {
                    model: Submodel::Copula(GaussianCopula { marginals, rho }),
                    stats: FitStats::Copula { m: a.len() },
                })
            }
            Family::Knn { k } => {
                let inputs = view.records.iter().map(|r| r.input.clone().unwrap()).collect();
                let knn = KnnRegressor::new(*k, inputs, view.output_column(0))?;
                Ok(Fitted {
                    model: Submodel::Knn(knn),
                    stats: FitStats::None,
                })
            }
            Family::LogisticMle { classes } | Family::LogisticLaplace { classes } => {
                let laplace = matches!(self.family, Family::LogisticLaplace { .. });
                let fit = fit_logistic(&view, *classes)?;
                let mut model = LogisticModel::new(*classes, fit.weights, None);
                model.ridge = fit.ridge;
                if laplace {
                    model.covariance = Some(fit.covariance.clone());
                }
                Ok(Fitted {
                    model: Submodel::Logistic(model),
                    stats: FitStats::Logistic {
                        covariance: fit.covariance,
                    },
                })
            }
        }
    }

    fn project(&self, data: &TrainingDataset) -> TrainingDataset {
        match &self.columns {
            None => data.clone(),
            Some(cols) => TrainingDataset::new(
                data.submodel_id,
                data.records
                    .iter()
                    .map(|r| crate::submodel::Record {
                        input: r.input.clone(),
                        output: cols.iter().map(|&c| r.output[c]).collect(),
                    })
                    .collect(),
            ),
        }
    }
}

/// Fitted model plus the sufficient statistics posterior draws need.
#[derive(Debug, Clone)]
pub(crate) struct Fitted {
    pub model: Submodel,
    pub stats: FitStats,
}

#[derive(Debug, Clone)]
pub(crate) enum FitStats {
    None,
    Normal { m: usize, sum_sq: f64 },
    Gamma { m: usize },
    Piecewise { counts: Vec<usize>, exposure: f64 },
    Copula { m: usize },
    Logistic { covariance: Vec<Vec<f64>> },
}

fn fit_normal(xs: &[f64]) -> Result<Fitted> {
    let m = xs.len();
    let mu = mean(xs);
    let sum_sq: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum();
    let sd = (sum_sq / m as f64).sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateData(format!("zero variance around mean {mu}")));
    }
    Ok(Fitted {
        model: Submodel::Normal(NormalParams { mean: mu, sd }),
        stats: FitStats::Normal { m, sum_sq },
    })
}

/// Gamma maximum likelihood: Newton iteration on `ln k - digamma(k) = s`
/// started from Minka's closed-form approximation.
pub fn gamma_mle(xs: &[f64]) -> Result<GammaParams> {
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if xs.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::IncompatibleData {
            family: "GammaMLE",
            reason: "observations must be positive".into(),
        });
    }
    let mu = mean(xs);
    let mean_log = xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64;
    let s = mu.ln() - mean_log;
    if !(s > 1e-12) {
        return Err(Error::DegenerateData("gamma sample has no spread".into()));
    }
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let score = k.ln() - digamma(k) - s;
        if score.abs() < 1e-10 {
            break;
        }
        let slope = 1.0 / k - trigamma(k);
        let next = k - score / slope;
        k = if next > 0.0 { next } else { k / 2.0 };
    }
    Ok(GammaParams { shape: k, rate: k / mu })
}

fn fit_piecewise(times: &[f64], period: f64, periods: usize, exposure: f64) -> Result<Fitted> {
    if !(period > 0.0) || periods == 0 || !(exposure > 0.0) {
        return Err(Error::InvalidArgument("piecewise rate needs positive period, pieces, exposure".into()));
    }
    let mut counts = vec![0usize; periods];
    for &t in times {
        let h = (t / period).floor();
        if !(h >= 0.0 && (h as usize) < periods) {
            return Err(Error::IncompatibleData {
                family: "PiecewiseRateMLE",
                reason: format!("timestamp {t} outside the observed horizon"),
            });
        }
        counts[h as usize] += 1;
    }
    let rates = counts.iter().map(|&c| c as f64 / exposure).collect();
    Ok(Fitted {
        model: Submodel::PiecewiseRate(PiecewiseRate { rates, period }),
        stats: FitStats::Piecewise { counts, exposure },
    })
}

pub(crate) struct LogisticFit {
    pub weights: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
    pub ridge: f64,
}

const DIVERGENCE_BOUND: f64 = 1e3;
const SEPARATION_RIDGE: f64 = 1e-3;

/// Multinomial logistic regression by Newton-Raphson (IRLS). Falls back to a
/// small ridge penalty when the unpenalized fit diverges or its Hessian is
/// singular, which is what separated data does.
pub(crate) fn fit_logistic(data: &TrainingDataset, classes: usize) -> Result<LogisticFit> {
    if classes < 2 {
        return Err(Error::InvalidArgument("logistic model needs at least two classes".into()));
    }
    let d = data.records[0].input.as_ref().map_or(0, Vec::len);
    let mut xs = Vec::with_capacity(data.len());
    let mut ys = Vec::with_capacity(data.len());
    for r in &data.records {
        let x = r.input.as_ref().unwrap();
        if x.len() != d {
            return Err(Error::InputDimension { expected: d, got: x.len() });
        }
        let y = r.output[0];
        if !(y >= 0.0 && (y as usize) < classes && y.fract() == 0.0) {
            return Err(Error::IncompatibleData {
                family: "LogisticMLE",
                reason: format!("label {y} is not a class index"),
            });
        }
        let mut row = Vec::with_capacity(d + 1);
        row.push(1.0);
        row.extend_from_slice(x);
        xs.push(row);
        ys.push(y as usize);
    }
    match newton_logistic(&xs, &ys, classes, 0.0) {
        Some(fit) => Ok(fit),
        None => newton_logistic(&xs, &ys, classes, SEPARATION_RIDGE)
            .ok_or_else(|| Error::DegenerateData("logistic fit failed even with ridge penalty".into())),
    }
}

fn penalized_nll(xs: &[Vec<f64>], ys: &[usize], beta: &[f64], classes: usize, ridge: f64) -> f64 {
    let width = xs[0].len();
    let mut nll = 0.0;
    let mut eta = vec![0.0; classes];
    for (x, &y) in xs.iter().zip(ys) {
        for c in 1..classes {
            let w = &beta[(c - 1) * width..c * width];
            eta[c] = w.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + eta.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
        nll += lse - eta[y];
    }
    nll + 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
}

fn newton_logistic(xs: &[Vec<f64>], ys: &[usize], classes: usize, ridge: f64) -> Option<LogisticFit> {
    let width = xs[0].len();
    let dim = (classes - 1) * width;
    let mut beta = vec![0.0; dim];
    let mut nll = penalized_nll(xs, ys, &beta, classes, ridge);
    let mut converged = false;

    let grad_hess = |beta: &[f64]| {
        let mut g = DVector::<f64>::zeros(dim);
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut eta = vec![0.0; classes];
        for (x, &y) in xs.iter().zip(ys) {
            for c in 1..classes {
                let w = &beta[(c - 1) * width..c * width];
                eta[c] = w.iter().zip(x).map(|(a, b)| a * b).sum();
            }
            let p = softmax(&eta);
            for c in 1..classes {
                let resid = p[c] - if y == c { 1.0 } else { 0.0 };
                for i in 0..width {
                    g[(c - 1) * width + i] += resid * x[i];
                }
                for c2 in 1..classes {
                    let wgt = p[c] * (if c == c2 { 1.0 } else { 0.0 } - p[c2]);
                    if wgt == 0.0 {
                        continue;
                    }
                    for i in 0..width {
                        let xi = wgt * x[i];
                        for j in 0..width {
                            h[((c - 1) * width + i, (c2 - 1) * width + j)] += xi * x[j];
                        }
                    }
                }
            }
        }
        for i in 0..dim {
            g[i] += ridge * beta[i];
            h[(i, i)] += ridge;
        }
        (g, h)
    };

    for _ in 0..100 {
        let (g, h) = grad_hess(&beta);
        let chol = h.cholesky()?;
        let step = chol.solve(&g);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-10 {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - t * s).collect();
            let trial_nll = penalized_nll(xs, ys, &trial, classes, ridge);
            if trial_nll <= nll + 1e-12 * nll.abs().max(1.0) {
                accepted = Some((trial, trial_nll));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_nll)) = accepted else {
            converged = true;
            break;
        };
        let max_step = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
        beta = next;
        nll = next_nll;
        if beta.iter().any(|b| b.abs() > DIVERGENCE_BOUND) {
            return None;
        }
        if max_step < 1e-9 {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let (_, h) = grad_hess(&beta);
    let inv = h.cholesky()?.inverse();
    let covariance = (0..dim).map(|i| (0..dim).map(|j| inv[(i, j)]).collect()).collect();
    Some(LogisticFit {
        weights: beta.chunks(width).map(<[f64]>::to_vec).collect(),
        covariance,
        ridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::RandomStream;
    use rand::Rng;

    #[test]
    fn normal_two_points() {
        let inst = Fitter::new(0, Family::NormalMle)
            .fit(&TrainingDataset::scalars(0, &[0.0, 2.0]))
            .unwrap();
        match inst.model {
            Submodel::Normal(p) => assert_eq!((p.mean, p.sd), (1.0, 1.0)),
            _ => unreachable!(),
        }
        assert_eq!(inst.provenance, Provenance::Estimated);
    }

    #[test]
    fn normal_constant_is_degenerate() {
        let err = Fitter::new(0, Family::NormalMle)
            .fit(&TrainingDataset::scalars(0, &[1.0; 4]))
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }

    #[test]
    fn gamma_rejects_nonpositive() {
        assert!(matches!(
            gamma_mle(&[1.0, 0.0, 2.0]),
            Err(Error::IncompatibleData { .. })
        ));
        assert!(matches!(gamma_mle(&[2.0, 2.0]), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn gamma_mle_recovers_parameters() {
        let truth = GammaParams { shape: 2.0, rate: 3.0 };
        let mut rng = RandomStream::root(2024).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| truth.sample(&mut rng)).collect();
        let g = gamma_mle(&xs).unwrap();
        assert!((1.94..=2.06).contains(&g.shape), "shape {}", g.shape);
        assert!((2.90..=3.10).contains(&g.rate), "rate {}", g.rate);
    }

    #[test]
    fn gamma_mle_solves_score_equation() {
        let xs = [0.4, 1.3, 2.2, 0.9, 3.1, 0.7];
        let g = gamma_mle(&xs).unwrap();
        let s = mean(&xs).ln() - xs.iter().map(|x: &f64| x.ln()).sum::<f64>() / 6.0;
        assert!((g.shape.ln() - digamma(g.shape) - s).abs() < 1e-10);
        assert!((g.shape / g.rate - mean(&xs)).abs() < 1e-12);
    }

    #[test]
    fn piecewise_counts_over_exposure() {
        let data = TrainingDataset::scalars(0, &[0.1, 0.5, 1.2, 2.9, 2.95]);
        let fitted = Fitter::new(
            0,
            Family::PiecewiseRateMle {
                period: 1.0,
                periods: 3,
                exposure: 2.0,
            },
        )
        .fit(&data)
        .unwrap();
        match fitted.model {
            Submodel::PiecewiseRate(r) => assert_eq!(r.rates, vec![1.0, 0.5, 1.0]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn logistic_recovers_weights() {
        let mut rng = RandomStream::root(5).rng();
        let (w0, w1) = (-0.5, 1.5);
        let records: Vec<_> = (0..4000)
            .map(|_| {
                let x: f64 = rng.random_range(-2.0..2.0);
                let p = 1.0 / (1.0 + (-(w0 + w1 * x)).exp());
                let y = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                crate::submodel::Record::pair(vec![x], vec![y])
            })
            .collect();
        let fit = fit_logistic(&TrainingDataset::new(0, records), 2).unwrap();
        assert_eq!(fit.ridge, 0.0);
        assert!((fit.weights[0][0] - w0).abs() < 0.15);
        assert!((fit.weights[0][1] - w1).abs() < 0.15);
    }

    #[test]
    fn separated_logistic_uses_ridge() {
        let records: Vec<_> = (0..40)
            .map(|i| {
                let x = i as f64 - 20.0;
                crate::submodel::Record::pair(vec![x], vec![if x > 0.0 { 1.0 } else { 0.0 }])
            })
            .collect();
        let fit = fit_logistic(&TrainingDataset::new(0, records), 2).unwrap();
        assert_eq!(fit.ridge, SEPARATION_RIDGE);
        assert!(fit.weights[0][1] > 1.0);
    }

    #[test]
    fn single_class_labels_converge_with_ridge() {
        let records: Vec<_> = (0..30)
            .map(|i| crate::submodel::Record::pair(vec![i as f64, 1.0], vec![0.0]))
            .collect();
        let fit = fit_logistic(&TrainingDataset::new(0, records), 2).unwrap();
        assert_eq!(fit.ridge, SEPARATION_RIDGE);
    }

    #[test]
    fn three_class_probabilities_sum_to_one() {
        let mut rng = RandomStream::root(8).rng();
        let records: Vec<_> = (0..600)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y = if x < -0.3 { 0 } else if x < 0.3 { 1 } else { 2 };
                let y = if rng.random::<f64>() < 0.2 { rng.random_range(0..3) } else { y };
                crate::submodel::Record::pair(vec![x], vec![y as f64])
            })
            .collect();
        let inst = Fitter::new(0, Family::LogisticLaplace { classes: 3 })
            .fit(&TrainingDataset::new(0, records))
            .unwrap();
        let Submodel::Logistic(model) = inst.model else { unreachable!() };
        assert!(model.covariance.is_some());
        let p = model.probabilities(&[0.9]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > p[0]);
    }
}
