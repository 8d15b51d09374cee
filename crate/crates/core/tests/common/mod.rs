#![allow(dead_code)]

use metareg::{MetaDataset, StudyRecord};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random meta-regression dataset: intercept plus `p - 1` standard normal
/// covariates, variances uniform on (0.02, 1), outcomes with some
/// heterogeneity so that interior estimates are common.
pub fn random_dataset(rng: &mut ChaCha8Rng, k: usize, p: usize) -> MetaDataset {
    loop {
        let psi: f64 = rng.random_range(0.0..0.5);
        let studies = (0..k)
            .map(|_| {
                let s2: f64 = rng.random_range(0.02..1.0);
                let mut x = vec![1.0];
                for _ in 1..p {
                    x.push(rng.sample(StandardNormal));
                }
                let z: f64 = rng.sample(StandardNormal);
                let mean = 0.3 + x.iter().skip(1).map(|v| 0.2 * v).sum::<f64>();
                StudyRecord::new(mean + (s2 + psi).sqrt() * z, s2, x)
            })
            .collect();
        if let Ok(ds) = MetaDataset::new(studies) {
            return ds;
        }
    }
}

/// Dense restricted log-likelihood (constant dropped), evaluated with an
/// explicit K x K marginal covariance and LU determinants.
pub fn dense_restricted_loglik(ds: &MetaDataset, psi: f64) -> f64 {
    let k = ds.k();
    let x = ds.design();
    let v = DMatrix::from_diagonal(&ds.sigma2_hat().map(|s| s + psi));
    let v_inv = v.clone().try_inverse().unwrap();
    let xtvx = x.transpose() * &v_inv * x;
    let beta = xtvx
        .clone()
        .lu()
        .solve(&(x.transpose() * &v_inv * ds.y()))
        .unwrap();
    let r: DVector<f64> = ds.y() - x * beta;
    let quad = (r.transpose() * &v_inv * &r)[(0, 0)];
    assert_eq!(v.nrows(), k);
    -0.5 * v.determinant().ln() - 0.5 * xtvx.determinant().ln() - 0.5 * quad
}
