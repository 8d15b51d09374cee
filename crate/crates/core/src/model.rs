//! The marginal random-effects model `Y ~ N(X beta, diag(sigma2_hat) + psi I)`.
//!
//! Every quantity here is a pure function of a [`MetaDataset`] and a parameter
//! point. The weight matrix `W(psi)` is diagonal and is never materialized as a
//! K x K matrix; traces involving the hat-type matrix
//! `H(psi) = X (X^T W X)^{-1} X^T W` are evaluated through p x p products.
//!
//! The additive constant `-(K/2) log(2 pi)` is dropped from both objectives.

use std::cmp::Ordering;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{MetaError, Result};

/// One study: effect estimate, its within-study variance and covariates
/// (including the leading 1 when an intercept is modelled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub y: f64,
    pub sigma2_hat: f64,
    pub covariates: Vec<f64>,
}

impl StudyRecord {
    pub fn new(y: f64, sigma2_hat: f64, covariates: Vec<f64>) -> Self {
        Self {
            y,
            sigma2_hat,
            covariates,
        }
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.y
            .total_cmp(&other.y)
            .then(self.sigma2_hat.total_cmp(&other.sigma2_hat))
            .then_with(|| {
                self.covariates
                    .iter()
                    .zip(&other.covariates)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
    }
}

/// K studies together with the K x p design matrix.
///
/// Studies are stored in a canonical order (sorted by `y`, then variance, then
/// covariates) so that every floating-point reduction is independent of the
/// order in which the caller supplied them.
#[derive(Debug, Clone)]
pub struct MetaDataset {
    studies: Vec<StudyRecord>,
    design: DMatrix<f64>,
    y: DVector<f64>,
    sigma2: DVector<f64>,
}

impl MetaDataset {
    pub fn new(mut studies: Vec<StudyRecord>) -> Result<Self> {
        let k = studies.len();
        let p = studies.first().map_or(0, |s| s.covariates.len());
        if p == 0 {
            return Err(MetaError::InvalidData(
                "studies must carry at least one covariate column".into(),
            ));
        }
        if k < p + 1 {
            return Err(MetaError::InvalidData(format!(
                "need at least p + 1 = {} studies, got {k}",
                p + 1
            )));
        }
        for (i, s) in studies.iter().enumerate() {
            if s.covariates.len() != p {
                return Err(MetaError::InvalidData(format!(
                    "study {i} has {} covariates, expected {p}",
                    s.covariates.len()
                )));
            }
            if !(s.sigma2_hat.is_finite() && s.sigma2_hat > 0.0) {
                return Err(MetaError::InvalidData(format!(
                    "study {i} has non-positive or non-finite variance {}",
                    s.sigma2_hat
                )));
            }
            if !s.y.is_finite() || s.covariates.iter().any(|x| !x.is_finite()) {
                return Err(MetaError::InvalidData(format!(
                    "study {i} has a non-finite value"
                )));
            }
        }
        studies.sort_by(StudyRecord::canonical_cmp);

        let design = DMatrix::from_fn(k, p, |i, j| studies[i].covariates[j]);
        let rank = design_rank(&design);
        if rank < p {
            return Err(MetaError::RankDeficient { rank, p });
        }
        let y = DVector::from_iterator(k, studies.iter().map(|s| s.y));
        let sigma2 = DVector::from_iterator(k, studies.iter().map(|s| s.sigma2_hat));
        Ok(Self {
            studies,
            design,
            y,
            sigma2,
        })
    }

    /// Meta-analysis dataset: `X` is a single column of ones.
    pub fn meta_analysis(y: &[f64], sigma2_hat: &[f64]) -> Result<Self> {
        if y.len() != sigma2_hat.len() {
            return Err(MetaError::InvalidData(format!(
                "{} effects but {} variances",
                y.len(),
                sigma2_hat.len()
            )));
        }
        Self::new(
            y.iter()
                .zip(sigma2_hat)
                .map(|(&y, &v)| StudyRecord::new(y, v, vec![1.0]))
                .collect(),
        )
    }

    pub fn studies(&self) -> &[StudyRecord] {
        &self.studies
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn sigma2_hat(&self) -> &DVector<f64> {
        &self.sigma2
    }

    pub fn k(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub(crate) fn max_sigma2(&self) -> f64 {
        self.sigma2.max()
    }

    /// Copy of this dataset with `y -> c y`, `sigma2_hat -> c^2 sigma2_hat`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.studies
                .iter()
                .map(|s| StudyRecord::new(c * s.y, c * c * s.sigma2_hat, s.covariates.clone()))
                .collect(),
        )
    }
}

fn design_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    let tol = smax * f64::EPSILON * (x.nrows().max(x.ncols()) as f64);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Parameter point `(beta, psi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub beta: Vec<f64>,
    pub psi: f64,
}

impl Theta {
    pub fn new(beta: Vec<f64>, psi: f64) -> Self {
        Self { beta, psi }
    }

    fn validate(&self, ds: &MetaDataset) -> Result<()> {
        check_psi(self.psi)?;
        if self.beta.len() != ds.p() {
            return Err(MetaError::InvalidArgument(format!(
                "beta has length {}, expected {}",
                self.beta.len(),
                ds.p()
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(MetaError::InvalidArgument("beta must be finite".into()));
        }
        Ok(())
    }
}

/// Weights, residuals and both objectives at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub weights: Vec<f64>,
    pub residuals: Vec<f64>,
    pub loglik: f64,
    pub penalized_loglik: f64,
}

fn check_psi(psi: f64) -> Result<()> {
    if psi.is_finite() && psi >= 0.0 {
        Ok(())
    } else {
        Err(MetaError::InvalidArgument(format!(
            "psi must be finite and non-negative, got {psi}"
        )))
    }
}

/// The p x p weighted cross-products at a fixed psi.
#[derive(Debug, Clone)]
pub(crate) struct WeightedSystem {
    pub w: DVector<f64>,
    /// Cholesky factor of X^T W X
    chol: Cholesky<f64, Dyn>,
}

impl WeightedSystem {
    pub fn new(ds: &MetaDataset, psi: f64) -> Result<Self> {
        check_psi(psi)?;
        let w = ds.sigma2.map(|s| 1.0 / (s + psi));
        let xtwx = weighted_gram(&ds.design, &w);
        let chol = Cholesky::new(xtwx).ok_or(MetaError::Singular { psi })?;
        Ok(Self { w, chol })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// log |X^T W X|
    pub fn log_det(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
    }

    /// (X^T W X)^{-1} X^T W y
    pub fn beta(&self, ds: &MetaDataset) -> DVector<f64> {
        let xtwy = ds.design.tr_mul(&self.w.component_mul(&ds.y));
        self.solve(&xtwy)
    }

    /// tr(W H) = tr{(X^T W X)^{-1} X^T W^2 X}
    pub fn trace_wh(&self, ds: &MetaDataset) -> f64 {
        let w2 = self.w.map(|w| w * w);
        let xtw2x = weighted_gram(&ds.design, &w2);
        self.solve_matrix(&xtw2x).trace()
    }

    fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn trace_w(&self) -> f64 {
        self.w.sum()
    }

    pub fn trace_w2(&self) -> f64 {
        self.w.iter().map(|w| w * w).sum()
    }
}

/// X^T diag(d) X without forming diag(d).
pub(crate) fn weighted_gram(x: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut out = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v: f64 = x
                .column(a)
                .iter()
                .zip(x.column(b).iter())
                .zip(d.iter())
                .map(|((xa, xb), di)| xa * xb * di)
                .sum();
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    out
}

pub(crate) fn residuals(ds: &MetaDataset, beta: &[f64]) -> DVector<f64> {
    let b = DVector::from_column_slice(beta);
    &ds.y - &ds.design * b
}

fn loglik_parts(w: &DVector<f64>, r: &DVector<f64>) -> f64 {
    let log_det_w: f64 = w.iter().map(|w| w.ln()).sum();
    let quad: f64 = w.iter().zip(r.iter()).map(|(w, r)| w * r * r).sum();
    0.5 * log_det_w - 0.5 * quad
}

/// `R^T W^2 R`
fn weighted_rss2(w: &DVector<f64>, r: &DVector<f64>) -> f64 {
    w.iter().zip(r.iter()).map(|(w, r)| (w * r) * (w * r)).sum()
}

pub fn weights(ds: &MetaDataset, psi: f64) -> Result<Vec<f64>> {
    check_psi(psi)?;
    Ok(ds.sigma2.iter().map(|s| 1.0 / (s + psi)).collect())
}

/// Weighted least squares estimate of beta at a fixed between-study variance.
pub fn beta_wls(ds: &MetaDataset, psi: f64) -> Result<Vec<f64>> {
    let sys = WeightedSystem::new(ds, psi)?;
    Ok(sys.beta(ds).iter().copied().collect())
}

/// `1/2 log|W| - 1/2 R^T W R`.
pub fn log_likelihood(ds: &MetaDataset, theta: &Theta) -> Result<f64> {
    theta.validate(ds)?;
    let w = ds.sigma2.map(|s| 1.0 / (s + theta.psi));
    Ok(loglik_parts(&w, &residuals(ds, &theta.beta)))
}

/// Gradient of [`log_likelihood`]: `(X^T W R, 1/2 {R^T W^2 R - tr W})`.
pub fn score(ds: &MetaDataset, theta: &Theta) -> Result<Vec<f64>> {
    theta.validate(ds)?;
    let w = ds.sigma2.map(|s| 1.0 / (s + theta.psi));
    let r = residuals(ds, &theta.beta);
    let s_beta = ds.design.tr_mul(&w.component_mul(&r));
    let s_psi = 0.5 * (weighted_rss2(&w, &r) - w.sum());
    Ok(s_beta
        .iter()
        .copied()
        .chain(std::iter::once(s_psi))
        .collect())
}

/// Expected information; block diagonal in (beta, psi).
pub fn fisher_information(ds: &MetaDataset, theta: &Theta) -> Result<DMatrix<f64>> {
    theta.validate(ds)?;
    let p = ds.p();
    let w = ds.sigma2.map(|s| 1.0 / (s + theta.psi));
    let mut f = DMatrix::zeros(p + 1, p + 1);
    f.view_mut((0, 0), (p, p))
        .copy_from(&weighted_gram(&ds.design, &w));
    f[(p, p)] = 0.5 * w.iter().map(|w| w * w).sum::<f64>();
    Ok(f)
}

/// First-order bias of the maximum likelihood estimator of psi,
/// `-tr(W H) / tr(W^2)`. The bias of the beta estimator is zero.
pub fn first_order_bias_psi(ds: &MetaDataset, psi: f64) -> Result<f64> {
    let sys = WeightedSystem::new(ds, psi)?;
    Ok(-sys.trace_wh(ds) / sys.trace_w2())
}

pub(crate) fn score_psi_with(sys: &WeightedSystem, r: &DVector<f64>) -> f64 {
    0.5 * (weighted_rss2(&sys.w, r) - sys.trace_w())
}

pub(crate) fn adjusted_score_psi_with(
    ds: &MetaDataset,
    sys: &WeightedSystem,
    r: &DVector<f64>,
) -> f64 {
    0.5 * (weighted_rss2(&sys.w, r) - sys.trace_w() + sys.trace_wh(ds))
}

pub(crate) fn loglik_with(sys: &WeightedSystem, r: &DVector<f64>) -> f64 {
    loglik_parts(&sys.w, r)
}

pub(crate) fn penalized_loglik_with(sys: &WeightedSystem, r: &DVector<f64>) -> f64 {
    loglik_parts(&sys.w, r) - 0.5 * sys.log_det()
}

/// Bias-reducing adjusted score for psi, `1/2 {R^T W^2 R - tr[W (I - H)]}`.
/// This is the exact psi-derivative of [`penalized_log_likelihood`].
pub fn adjusted_score_psi(ds: &MetaDataset, theta: &Theta) -> Result<f64> {
    theta.validate(ds)?;
    let sys = WeightedSystem::new(ds, theta.psi)?;
    Ok(adjusted_score_psi_with(
        ds,
        &sys,
        &residuals(ds, &theta.beta),
    ))
}

/// `log_likelihood - 1/2 log|X^T W X|`.
pub fn penalized_log_likelihood(ds: &MetaDataset, theta: &Theta) -> Result<f64> {
    theta.validate(ds)?;
    let sys = WeightedSystem::new(ds, theta.psi)?;
    Ok(penalized_loglik_with(&sys, &residuals(ds, &theta.beta)))
}

pub fn evaluate(ds: &MetaDataset, theta: &Theta) -> Result<ModelEvaluation> {
    theta.validate(ds)?;
    let sys = WeightedSystem::new(ds, theta.psi)?;
    let r = residuals(ds, &theta.beta);
    Ok(ModelEvaluation {
        weights: sys.w.iter().copied().collect(),
        residuals: r.iter().copied().collect(),
        loglik: loglik_with(&sys, &r),
        penalized_loglik: penalized_loglik_with(&sys, &r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(rng: &mut ChaCha8Rng, k: usize, p: usize) -> MetaDataset {
        let studies = (0..k)
            .map(|_| {
                let mut x = vec![1.0];
                x.extend((1..p).map(|_| rng.random_range(-1.0..1.0)));
                StudyRecord::new(rng.random_range(-1.0..1.0), rng.random_range(0.05..0.8), x)
            })
            .collect();
        MetaDataset::new(studies).unwrap()
    }

    #[test]
    fn weights_examples() {
        let ds = MetaDataset::meta_analysis(&[0.0, 1.0], &[0.5, 1.5]).unwrap();
        assert_eq!(weights(&ds, 0.5).unwrap(), vec![1.0, 0.5]);
        let ds = MetaDataset::meta_analysis(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(weights(&ds, 0.0).unwrap(), vec![1.0, 1.0, 1.0]);
        let ds = MetaDataset::meta_analysis(&[0.0, 1.0], &[0.09, 0.6]).unwrap();
        let w = weights(&ds, 0.03).unwrap();
        assert_relative_eq!(w[0], 1.0 / 0.12, epsilon = 1e-12);
        assert_relative_eq!(w[1], 1.0 / 0.63, epsilon = 1e-12);
        assert!(weights(&ds, -0.1).is_err());
    }

    #[test]
    fn wls_means() {
        let ds = MetaDataset::meta_analysis(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(beta_wls(&ds, 0.3).unwrap()[0], 2.0, epsilon = 1e-14);
        // weights 1 and 3
        let ds = MetaDataset::meta_analysis(&[0.0, 4.0], &[1.0, 1.0 / 3.0]).unwrap();
        assert_relative_eq!(beta_wls(&ds, 0.0).unwrap()[0], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn wls_matches_two_by_two_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ds = random_dataset(&mut rng, 12, 2);
        let psi = 0.2;
        let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in ds.studies() {
            let w = 1.0 / (s.sigma2_hat + psi);
            let (a, b) = (s.covariates[0], s.covariates[1]);
            s00 += w * a * a;
            s01 += w * a * b;
            s11 += w * b * b;
            t0 += w * a * s.y;
            t1 += w * b * s.y;
        }
        let det = s00 * s11 - s01 * s01;
        let oracle = [(s11 * t0 - s01 * t1) / det, (s00 * t1 - s01 * t0) / det];
        let beta = beta_wls(&ds, psi).unwrap();
        assert_relative_eq!(beta[0], oracle[0], epsilon = 1e-10);
        assert_relative_eq!(beta[1], oracle[1], epsilon = 1e-10);
    }

    #[test]
    fn wls_residuals_are_weighted_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = random_dataset(&mut rng, 20, 3);
        let beta = beta_wls(&ds, 0.1).unwrap();
        let s = score(&ds, &Theta::new(beta, 0.1)).unwrap();
        for v in &s[..3] {
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn loglik_examples() {
        let ds = MetaDataset::meta_analysis(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        // single-study example needs K >= p + 1, so check the K = 2 case only;
        // K = 1 identity case follows from the same expression.
        let ll = log_likelihood(&ds, &Theta::new(vec![-1.0], 1.0)).unwrap();
        // residuals [1, 2] in canonical order; sum w r^2 = (1 + 4) / 2
        assert_relative_eq!(ll, (0.5f64).ln() - 1.25, epsilon = 1e-14);
        let ds = MetaDataset::meta_analysis(&[2.0, 0.0], &[1.0, 1.0]).unwrap();
        let ll = log_likelihood(&ds, &Theta::new(vec![0.0], 1.0)).unwrap();
        assert_relative_eq!(ll, -(2.0f64).ln() - 1.0, epsilon = 1e-14);
        let ds = MetaDataset::meta_analysis(&[3.0, 3.0], &[1.0, 1.0]).unwrap();
        let ll = log_likelihood(&ds, &Theta::new(vec![3.0], 0.0)).unwrap();
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn loglik_matches_dense_gaussian_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = random_dataset(&mut rng, 8, 2);
        let theta = Theta::new(vec![0.3, -0.2], 0.17);
        let k = ds.k();
        let cov = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                ds.studies()[i].sigma2_hat + theta.psi
            } else {
                0.0
            }
        });
        let mean = ds.design() * DVector::from_column_slice(&theta.beta);
        let d = ds.y() - mean;
        let chol = Cholesky::new(cov.clone()).unwrap();
        let quad = d.dot(&chol.solve(&d));
        let log_det = cov.determinant().ln();
        let two_pi = 2.0 * std::f64::consts::PI;
        let dense = -0.5 * k as f64 * two_pi.ln() - 0.5 * log_det - 0.5 * quad;
        let ours = log_likelihood(&ds, &theta).unwrap() - 0.5 * k as f64 * two_pi.ln();
        assert_relative_eq!(ours, dense, epsilon = 1e-10);
    }

    #[test]
    fn fisher_structure_and_equal_variance_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ds = random_dataset(&mut rng, 10, 3);
        let f = fisher_information(&ds, &Theta::new(vec![0.0; 3], 0.4)).unwrap();
        for j in 0..3 {
            assert_eq!(f[(j, 3)], 0.0);
            assert_eq!(f[(3, j)], 0.0);
        }
        let w = DMatrix::from_diagonal(&ds.sigma2_hat().map(|s| 1.0 / (s + 0.4)));
        let direct = ds.design().transpose() * &w * ds.design();
        for a in 0..3 {
            for b in 0..3 {
                assert!((f[(a, b)] - direct[(a, b)]).abs() < 1e-12);
            }
        }

        let ds = MetaDataset::meta_analysis(&[0.1, 0.5, -0.3, 0.9], &[0.2; 4]).unwrap();
        let f = fisher_information(&ds, &Theta::new(vec![0.0], 0.3)).unwrap();
        let v = 0.5;
        assert_relative_eq!(f[(0, 0)], 4.0 / v, epsilon = 1e-12);
        assert_relative_eq!(f[(1, 1)], 4.0 / (2.0 * v * v), epsilon = 1e-12);
    }

    #[test]
    fn bias_equal_variance_and_dense_oracle() {
        let ds = MetaDataset::meta_analysis(&[0.1, 0.5, -0.3, 0.9, 0.2], &[0.2; 5]).unwrap();
        let b = first_order_bias_psi(&ds, 0.3).unwrap();
        assert_relative_eq!(b, -(0.2 + 0.3) / 5.0, epsilon = 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ds = random_dataset(&mut rng, 9, 2);
        let psi = 0.07;
        let w = DMatrix::from_diagonal(&ds.sigma2_hat().map(|s| 1.0 / (s + psi)));
        let x = ds.design();
        let xtwx_inv = (x.transpose() * &w * x).try_inverse().unwrap();
        let h = x * xtwx_inv * x.transpose() * &w;
        let oracle = -(&w * h).trace() / (&w * &w).trace();
        assert_relative_eq!(
            first_order_bias_psi(&ds, psi).unwrap(),
            oracle,
            epsilon = 1e-12
        );
        assert!(oracle < 0.0);
    }

    #[test]
    fn penalty_examples() {
        let ds = MetaDataset::meta_analysis(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        let theta = Theta::new(vec![0.4], 0.0);
        let ll = log_likelihood(&ds, &theta).unwrap();
        let pl = penalized_log_likelihood(&ds, &theta).unwrap();
        assert_relative_eq!(pl, ll - 0.5 * (2.0f64).ln(), epsilon = 1e-14);

        let ds = MetaDataset::meta_analysis(&[0.0, 1.0, 0.3], &[0.5, 1.0, 0.2]).unwrap();
        let theta = Theta::new(vec![0.4], 0.1);
        let sum_w: f64 = weights(&ds, 0.1).unwrap().iter().sum();
        let ll = log_likelihood(&ds, &theta).unwrap();
        let pl = penalized_log_likelihood(&ds, &theta).unwrap();
        assert_relative_eq!(pl, ll - 0.5 * sum_w.ln(), epsilon = 1e-13);
    }

    #[test]
    fn adjusted_minus_plain_is_half_trace_wh() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let ds = random_dataset(&mut rng, 15, 2);
            let theta = Theta::new(vec![0.1, 0.2], rng.random_range(0.0..0.5));
            let plain = score(&ds, &theta).unwrap()[2];
            let adj = adjusted_score_psi(&ds, &theta).unwrap();
            let sys = WeightedSystem::new(&ds, theta.psi).unwrap();
            assert!(adj > plain);
            assert_relative_eq!(adj - plain, 0.5 * sys.trace_wh(&ds), epsilon = 1e-10);
        }
    }

    #[test]
    fn invalid_datasets_rejected() {
        assert!(matches!(
            MetaDataset::meta_analysis(&[1.0], &[1.0]),
            Err(MetaError::InvalidData(_))
        ));
        assert!(MetaDataset::meta_analysis(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(MetaDataset::meta_analysis(&[1.0, 2.0], &[1.0, f64::NAN]).is_err());
        let collinear = (0..5)
            .map(|i| StudyRecord::new(i as f64, 1.0, vec![1.0, 2.0]))
            .collect();
        assert!(matches!(
            MetaDataset::new(collinear),
            Err(MetaError::RankDeficient { rank: 1, p: 2 })
        ));
    }
}
