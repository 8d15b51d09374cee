//! DerSimonian & Laird, maximum likelihood and maximum penalized likelihood
//! fits.
//!
//! ML and MPL share one alternating scheme: beta is updated by weighted least
//! squares at the current psi, then psi is moved to the root of the (adjusted)
//! psi-score at that beta by a bracketed line search. The same engine fits
//! models where some coefficients are held fixed, which the profile and
//! deviance-test code relies on.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MetaError, Result};
use crate::model::{self, weighted_gram, MetaDataset, Theta, WeightedSystem};
use crate::roots::brent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DL")]
    Dl,
    #[serde(rename = "ML")]
    Ml,
    #[serde(rename = "MPL")]
    Mpl,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Dl => "DL",
            Method::Ml => "ML",
            Method::Mpl => "MPL",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Tolerance on the psi-score, relative to `tr(W) / 2`.
    pub score_tol: f64,
    /// Tolerance on parameter changes: psi relative to `psi + median sigma2`,
    /// beta in units of its standard error.
    pub param_tol: f64,
    pub max_iter: usize,
    /// Initial upper end of the psi bracket; defaults to
    /// `max sigma2_hat + sample variance of y`.
    pub psi_upper_init: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            score_tol: 1e-8,
            param_tol: 1e-10,
            max_iter: 500,
            psi_upper_init: None,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        let ok = self.score_tol > 0.0
            && self.param_tol > 0.0
            && self.max_iter >= 1
            && self.psi_upper_init.is_none_or(|u| u > 0.0 && u.is_finite());
        if ok {
            Ok(())
        } else {
            Err(MetaError::InvalidArgument(format!(
                "invalid fit options {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub beta_hat: Vec<f64>,
    pub psi_hat: f64,
    /// `(X^T W(psi_hat) X)^{-1}`
    pub beta_cov: DMatrix<f64>,
    /// Log-likelihood (ML) or penalized log-likelihood (MPL) at the optimum.
    pub objective: Option<f64>,
    /// Cochran's Q (DL only).
    pub q_statistic: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub at_boundary: bool,
    /// Final (adjusted) psi-score; zero for DL.
    pub score_psi: f64,
}

impl FitResult {
    pub fn std_error(&self, j: usize) -> f64 {
        self.beta_cov[(j, j)].sqrt()
    }

    pub fn theta(&self) -> Theta {
        Theta::new(self.beta_hat.clone(), self.psi_hat)
    }
}

/// Coefficients held fixed at given values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Constraint {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Constraint {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Self {
        Self { indices, values }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub(crate) fn validate(&self, p: usize) -> Result<()> {
        if self.indices.len() != self.values.len() {
            return Err(MetaError::InvalidArgument(
                "constraint indices and values differ in length".into(),
            ));
        }
        let mut seen = vec![false; p];
        for &j in &self.indices {
            if j >= p || std::mem::replace(&mut seen[j], true) {
                return Err(MetaError::InvalidArgument(format!(
                    "constraint index {j} out of range or repeated (p = {p})"
                )));
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(MetaError::InvalidArgument(
                "constraint values must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// DerSimonian & Laird moment estimator.
pub fn fit_dl(ds: &MetaDataset) -> Result<FitResult> {
    let k = ds.k() as f64;
    let p = ds.p() as f64;
    let fixed = WeightedSystem::new(ds, 0.0)?;
    let beta_f: Vec<f64> = fixed.beta(ds).iter().copied().collect();
    let r = model::residuals(ds, &beta_f);
    let q: f64 = fixed.w.iter().zip(r.iter()).map(|(w, r)| w * r * r).sum();
    let a = fixed.trace_w() - fixed.trace_wh(ds);
    assert!(
        a > 0.0,
        "DerSimonian-Laird denominator must be positive, got {a}"
    );
    let at_boundary = q <= k - p;
    let psi = if at_boundary { 0.0 } else { (q - k + p) / a };
    let sys = WeightedSystem::new(ds, psi)?;
    Ok(FitResult {
        method: Method::Dl,
        beta_hat: sys.beta(ds).iter().copied().collect(),
        psi_hat: psi,
        beta_cov: sys.inverse(),
        objective: None,
        q_statistic: Some(q),
        converged: true,
        iterations: 0,
        at_boundary,
        score_psi: 0.0,
    })
}

pub fn fit_ml(ds: &MetaDataset, options: &FitOptions) -> Result<FitResult> {
    fit_constrained(ds, Method::Ml, &Constraint::none(), options, None)
}

/// Maximum penalized likelihood: the root of the bias-reducing adjusted score,
/// equivalently the restricted maximum likelihood estimate of psi.
pub fn fit_mpl(ds: &MetaDataset, options: &FitOptions) -> Result<FitResult> {
    fit_constrained(ds, Method::Mpl, &Constraint::none(), options, None)
}

/// ML or MPL fit with the coefficients in `constraint` held fixed. The
/// penalty always uses the full `X^T W X`, so the constrained MPL fit
/// maximizes the same penalized log-likelihood over the free coordinates.
pub fn fit_constrained(
    ds: &MetaDataset,
    method: Method,
    constraint: &Constraint,
    options: &FitOptions,
    warm_start: Option<&Theta>,
) -> Result<FitResult> {
    if method == Method::Dl {
        return Err(MetaError::InvalidArgument(
            "DerSimonian-Laird is not a likelihood fit".into(),
        ));
    }
    options.validate()?;
    constraint.validate(ds.p())?;
    let problem = Problem::new(ds, method, constraint);
    problem.run(options, warm_start)
}

struct Problem<'a> {
    ds: &'a MetaDataset,
    method: Method,
    free: Vec<usize>,
    free_design: DMatrix<f64>,
    /// y minus the contribution of the fixed coefficients.
    y_adj: DVector<f64>,
    fixed_beta: Vec<Option<f64>>,
    psi_scale: f64,
}

impl<'a> Problem<'a> {
    fn new(ds: &'a MetaDataset, method: Method, constraint: &Constraint) -> Self {
        let p = ds.p();
        let mut fixed_beta = vec![None; p];
        for (&j, &v) in constraint.indices.iter().zip(&constraint.values) {
            fixed_beta[j] = Some(v);
        }
        let free: Vec<usize> = (0..p).filter(|&j| fixed_beta[j].is_none()).collect();
        let free_design = ds.design().select_columns(&free);
        let mut y_adj = ds.y().clone();
        for (j, v) in fixed_beta.iter().enumerate() {
            if let Some(v) = v {
                y_adj -= ds.design().column(j) * *v;
            }
        }
        let mut s: Vec<f64> = ds.sigma2_hat().iter().copied().collect();
        s.sort_by(f64::total_cmp);
        let psi_scale = s[s.len() / 2];
        Self {
            ds,
            method,
            free,
            free_design,
            y_adj,
            fixed_beta,
            psi_scale,
        }
    }

    fn beta_at(&self, psi: f64) -> Result<Vec<f64>> {
        let mut beta: Vec<f64> = self.fixed_beta.iter().map(|b| b.unwrap_or(0.0)).collect();
        if self.free.is_empty() {
            return Ok(beta);
        }
        let w = self.ds.sigma2_hat().map(|s| 1.0 / (s + psi));
        let gram = weighted_gram(&self.free_design, &w);
        let chol = Cholesky::new(gram).ok_or(MetaError::Singular { psi })?;
        let lambda = chol.solve(&self.free_design.tr_mul(&w.component_mul(&self.y_adj)));
        for (&j, l) in self.free.iter().zip(lambda.iter()) {
            beta[j] = *l;
        }
        Ok(beta)
    }

    fn psi_score(&self, psi: f64, r: &DVector<f64>) -> Result<f64> {
        let sys = WeightedSystem::new(self.ds, psi)?;
        Ok(self.psi_score_with(&sys, r))
    }

    fn psi_score_with(&self, sys: &WeightedSystem, r: &DVector<f64>) -> f64 {
        match self.method {
            Method::Ml => model::score_psi_with(sys, r),
            _ => model::adjusted_score_psi_with(self.ds, sys, r),
        }
    }

    /// Root of the psi-score at fixed residuals, or 0 when the score admits
    /// no positive root.
    fn solve_psi(&self, r: &DVector<f64>, upper_init: f64) -> Result<f64> {
        let cap = 1e6 * self.ds.max_sigma2();
        let g = |psi: f64| self.psi_score(psi, r);
        let g0 = g(0.0)?;
        let (mut lo, mut g_lo) = (0.0, g0);
        if g0 <= 0.0 {
            // The score need not be monotone: look for a positive stretch
            // before settling on the boundary.
            let mut psi = upper_init;
            let mut found = None;
            for _ in 0..40 {
                let v = g(psi)?;
                if v > 0.0 {
                    found = Some((psi, v));
                    break;
                }
                psi *= 0.5;
            }
            match found {
                None => return Ok(0.0),
                Some((psi, v)) => {
                    lo = psi;
                    g_lo = v;
                }
            }
        }
        let mut hi = upper_init.max(2.0 * lo);
        let mut g_hi = g(hi)?;
        while g_hi > 0.0 {
            lo = hi;
            g_lo = g_hi;
            hi *= 2.0;
            if hi > cap {
                return Err(MetaError::BracketNotFound(format!(
                    "psi-score still positive at cap {cap}"
                )));
            }
            g_hi = g(hi)?;
        }
        let xtol = 1e-15 * self.psi_scale;
        let root = brent(g, lo, g_lo, hi, g_hi, xtol, 0.0, 300)?;
        Ok(root.x.max(0.0))
    }

    fn run(&self, options: &FitOptions, warm_start: Option<&Theta>) -> Result<FitResult> {
        let ds = self.ds;
        let upper_init = options.psi_upper_init.unwrap_or_else(|| {
            let y = ds.y();
            let mean = y.mean();
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ds.k() - 1) as f64;
            ds.max_sigma2() + var
        });

        let mut psi = match warm_start {
            Some(t) => t.psi,
            None => fit_dl(ds)?.psi_hat,
        };
        let mut beta = self.beta_at(psi)?;
        let mut converged = false;
        let mut iterations = 0;
        let mut last_score = f64::NAN;

        for iter in 1..=options.max_iter {
            iterations = iter;
            let r = model::residuals(ds, &beta);
            let psi_new = self.solve_psi(&r, upper_init.max(2.0 * psi))?;
            let beta_new = self.beta_at(psi_new)?;
            let sys = WeightedSystem::new(ds, psi_new)?;
            let cov_diag = sys.inverse().diagonal();

            let d_psi = (psi_new - psi).abs() / (psi_new + self.psi_scale);
            let d_beta = beta_new
                .iter()
                .zip(&beta)
                .zip(cov_diag.iter())
                .map(|((a, b), v)| (a - b).abs() / v.sqrt())
                .fold(0.0, f64::max);
            let s = self.psi_score_with(&sys, &model::residuals(ds, &beta_new));
            let s_rel = s.abs() / (0.5 * sys.trace_w());
            last_score = s;
            psi = psi_new;
            beta = beta_new;

            let params_stable = d_psi <= options.param_tol && d_beta <= options.param_tol;
            let boundary_kkt = psi == 0.0 && s <= 0.0;
            if params_stable || (psi > 0.0 && s_rel <= options.score_tol) || boundary_kkt {
                converged = true;
                break;
            }
        }

        let sys = WeightedSystem::new(ds, psi)?;
        let r = model::residuals(ds, &beta);
        let objective = match self.method {
            Method::Ml => model::loglik_with(&sys, &r),
            _ => model::penalized_loglik_with(&sys, &r),
        };
        Ok(FitResult {
            method: self.method,
            beta_hat: beta,
            psi_hat: psi,
            beta_cov: sys.inverse(),
            objective: Some(objective),
            q_statistic: None,
            converged,
            iterations,
            at_boundary: psi == 0.0,
            score_psi: last_score,
        })
    }
}
