//! Wald and profile-deviance confidence intervals, Wald tests and
//! (penalized) deviance tests for the fixed effects.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use crate::distributions::chi2_survival;
use crate::distributions::{chi2_quantile, normal_quantile};
use crate::error::{MetaError, Result};
use crate::estimators::{fit_constrained, fit_dl, Constraint, FitOptions, FitResult, Method};
use crate::model::{MetaDataset, Theta};
use crate::roots::brent;

/// Largest negative deviance attributed to solver noise before it is an error.
const DEVIANCE_NOISE: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntervalMethod {
    #[serde(rename = "WALD_DL")]
    WaldDl,
    #[serde(rename = "WALD_ML")]
    WaldMl,
    #[serde(rename = "WALD_MPL")]
    WaldMpl,
    #[serde(rename = "PROFILE_MPL")]
    ProfileMpl,
    #[serde(rename = "PROFILE_ML")]
    ProfileMl,
}

impl IntervalMethod {
    pub const ALL: [IntervalMethod; 5] = [
        IntervalMethod::WaldDl,
        IntervalMethod::WaldMl,
        IntervalMethod::WaldMpl,
        IntervalMethod::ProfileMpl,
        IntervalMethod::ProfileMl,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            IntervalMethod::WaldDl => "WALD_DL",
            IntervalMethod::WaldMl => "WALD_ML",
            IntervalMethod::WaldMpl => "WALD_MPL",
            IntervalMethod::ProfileMpl => "PROFILE_MPL",
            IntervalMethod::ProfileMl => "PROFILE_ML",
        }
    }

    /// The estimator whose fit the interval is built from.
    pub fn fit_method(self) -> Method {
        match self {
            IntervalMethod::WaldDl => Method::Dl,
            IntervalMethod::WaldMl | IntervalMethod::ProfileMl => Method::Ml,
            IntervalMethod::WaldMpl | IntervalMethod::ProfileMpl => Method::Mpl,
        }
    }

    pub fn is_profile(self) -> bool {
        matches!(self, IntervalMethod::ProfileMl | IntervalMethod::ProfileMpl)
    }

    pub fn wald(method: Method) -> Self {
        match method {
            Method::Dl => IntervalMethod::WaldDl,
            Method::Ml => IntervalMethod::WaldMl,
            Method::Mpl => IntervalMethod::WaldMpl,
        }
    }
}

impl fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for IntervalMethod {
    type Err = MetaError;

    fn from_str(s: &str) -> Result<Self> {
        IntervalMethod::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| MetaError::InvalidArgument(format!("unknown interval method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalDiagnostics {
    /// Constrained refits spent locating the lower / upper endpoint.
    pub lower_evaluations: usize,
    pub upper_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub coordinate: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
    pub diagnostics: IntervalDiagnostics,
}

impl IntervalResult {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub constrained_fit: FitResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(MetaError::InvalidArgument(format!(
            "level must lie in (0, 1), got {level}"
        )))
    }
}

fn check_coordinate(coordinate: usize, p: usize) -> Result<()> {
    if coordinate < p {
        Ok(())
    } else {
        Err(MetaError::InvalidArgument(format!(
            "coordinate {coordinate} out of range for p = {p}"
        )))
    }
}

/// `beta_j +/- z sqrt(cov_jj)`.
pub fn wald_interval(fit: &FitResult, coordinate: usize, level: f64) -> Result<IntervalResult> {
    check_level(level)?;
    check_coordinate(coordinate, fit.beta_hat.len())?;
    let z = normal_quantile(0.5 * (1.0 + level));
    let half = z * fit.std_error(coordinate);
    let est = fit.beta_hat[coordinate];
    Ok(IntervalResult {
        coordinate,
        estimate: est,
        lower: est - half,
        upper: est + half,
        level,
        method: IntervalMethod::wald(fit.method),
        diagnostics: IntervalDiagnostics::default(),
    })
}

/// Joint Wald chi-squared test of `beta[indices] = values`.
pub fn wald_test(fit: &FitResult, constraint: &Constraint) -> Result<WaldTestResult> {
    constraint.validate(fit.beta_hat.len())?;
    if constraint.is_empty() {
        return Err(MetaError::InvalidArgument("empty constraint".into()));
    }
    let q = constraint.len();
    let diff = DVector::from_iterator(
        q,
        constraint
            .indices
            .iter()
            .zip(&constraint.values)
            .map(|(&j, v)| fit.beta_hat[j] - v),
    );
    let sub = fit
        .beta_cov
        .select_rows(&constraint.indices)
        .select_columns(&constraint.indices);
    let chol = sub
        .cholesky()
        .ok_or(MetaError::Singular { psi: fit.psi_hat })?;
    let statistic = diff.dot(&chol.solve(&diff));
    Ok(WaldTestResult {
        statistic,
        df: q,
        p_value: chi2_survival(statistic, q as u32),
    })
}

fn full_fit(ds: &MetaDataset, method: Method, options: &FitOptions) -> Result<FitResult> {
    let fit = match method {
        Method::Dl => fit_dl(ds)?,
        m => fit_constrained(ds, m, &Constraint::none(), options, None)?,
    };
    if !fit.converged {
        return Err(not_converged(&fit));
    }
    Ok(fit)
}

fn not_converged(fit: &FitResult) -> MetaError {
    MetaError::NotConverged {
        iterations: fit.iterations,
        psi: fit.psi_hat,
        score: fit.score_psi,
    }
}

/// Likelihood-ratio (ML) or penalized deviance (MPL) test of
/// `beta[indices] = values`, referred to chi-squared with `q` degrees of freedom.
pub fn deviance_test(
    ds: &MetaDataset,
    constraint: &Constraint,
    method: Method,
    options: &FitOptions,
) -> Result<TestResult> {
    if method == Method::Dl {
        return Err(MetaError::InvalidArgument(
            "deviance tests need a likelihood fit (ML or MPL)".into(),
        ));
    }
    constraint.validate(ds.p())?;
    if constraint.is_empty() {
        return Err(MetaError::InvalidArgument("empty constraint".into()));
    }
    let full = full_fit(ds, method, options)?;
    let mut start = full.theta();
    for (&j, &v) in constraint.indices.iter().zip(&constraint.values) {
        start.beta[j] = v;
    }
    let constrained = fit_constrained(ds, method, constraint, options, Some(&start))?;
    if !constrained.converged {
        return Err(not_converged(&constrained));
    }
    let raw = 2.0 * (full.objective.unwrap() - constrained.objective.unwrap());
    if raw < -DEVIANCE_NOISE {
        return Err(MetaError::NegativeDeviance(raw));
    }
    let statistic = raw.max(0.0);
    let df = constraint.len();
    Ok(TestResult {
        statistic,
        df,
        p_value: chi2_survival(statistic, df as u32),
        constrained_fit: constrained,
    })
}

/// Penalized deviance test: twice the drop in the penalized log-likelihood
/// when `beta[indices]` is fixed at `values`.
pub fn penalized_deviance_test(
    ds: &MetaDataset,
    constraint: &Constraint,
    options: &FitOptions,
) -> Result<TestResult> {
    deviance_test(ds, constraint, Method::Mpl, options)
}

struct Profile<'a> {
    ds: &'a MetaDataset,
    coordinate: usize,
    method: Method,
    options: &'a FitOptions,
    optimum: f64,
    warm: Theta,
    evaluations: usize,
}

impl Profile<'_> {
    fn deviance(&mut self, value: f64) -> Result<f64> {
        self.evaluations += 1;
        let mut start = self.warm.clone();
        start.beta[self.coordinate] = value;
        let c = Constraint::new(vec![self.coordinate], vec![value]);
        let fit = fit_constrained(self.ds, self.method, &c, self.options, Some(&start))?;
        if !fit.converged {
            return Err(not_converged(&fit));
        }
        self.warm = fit.theta();
        Ok(2.0 * (self.optimum - fit.objective.unwrap()))
    }
}

/// Confidence interval obtained by inverting the profile deviance (ML) or
/// profile penalized deviance (MPL) against the chi-squared(1) quantile.
/// Wald methods are accepted and delegate to [`wald_interval`].
pub fn profile_interval(
    ds: &MetaDataset,
    coordinate: usize,
    level: f64,
    method: IntervalMethod,
    options: &FitOptions,
) -> Result<IntervalResult> {
    check_level(level)?;
    check_coordinate(coordinate, ds.p())?;
    let fit = full_fit(ds, method.fit_method(), options)?;
    if !method.is_profile() {
        return wald_interval(&fit, coordinate, level);
    }
    profile_interval_from_fit(ds, &fit, coordinate, level, options)
}

/// Profile interval around an already converged ML or MPL fit.
pub fn profile_interval_from_fit(
    ds: &MetaDataset,
    fit: &FitResult,
    coordinate: usize,
    level: f64,
    options: &FitOptions,
) -> Result<IntervalResult> {
    check_level(level)?;
    check_coordinate(coordinate, ds.p())?;
    let method = match fit.method {
        Method::Ml => IntervalMethod::ProfileMl,
        Method::Mpl => IntervalMethod::ProfileMpl,
        Method::Dl => {
            return Err(MetaError::InvalidArgument(
                "profile intervals need an ML or MPL fit".into(),
            ))
        }
    };
    let target = chi2_quantile(level, 1);
    let estimate = fit.beta_hat[coordinate];
    let se = fit.std_error(coordinate);
    let mut profile = Profile {
        ds,
        coordinate,
        method: fit.method,
        options,
        optimum: fit.objective.unwrap(),
        warm: fit.theta(),
        evaluations: 0,
    };

    let mut endpoints = [0.0; 2];
    let mut evaluations = [0; 2];
    for (slot, direction) in [-1.0, 1.0].into_iter().enumerate() {
        profile.warm = fit.theta();
        profile.evaluations = 0;
        let (mut inner, mut d_inner) = (estimate, 0.0);
        let mut step = 2.0 * se;
        let mut bracket = None;
        for _ in 0..MAX_DOUBLINGS {
            let outer = estimate + direction * step;
            let d = profile.deviance(outer)?;
            if d >= target {
                bracket = Some((outer, d));
                break;
            }
            inner = outer;
            d_inner = d;
            step *= 2.0;
        }
        let (outer, d_outer) = bracket.ok_or_else(|| {
            MetaError::BracketNotFound(format!(
                "deviance stayed below {target} for coordinate {coordinate} \
                 after {MAX_DOUBLINGS} doublings ({} side)",
                if direction < 0.0 { "lower" } else { "upper" }
            ))
        })?;
        let xtol = 1e-14 * (estimate.abs() + se);
        let root = brent(
            |g| Ok::<_, MetaError>(profile.deviance(g)? - target),
            inner,
            d_inner - target,
            outer,
            d_outer - target,
            xtol,
            1e-8,
            200,
        )?;
        endpoints[slot] = root.x;
        evaluations[slot] = profile.evaluations;
    }

    Ok(IntervalResult {
        coordinate,
        estimate,
        lower: endpoints[0],
        upper: endpoints[1],
        level,
        method,
        diagnostics: IntervalDiagnostics {
            lower_evaluations: evaluations[0],
            upper_evaluations: evaluations[1],
        },
    })
}

/// Profile deviance at a single value of one coefficient.
pub fn profile_deviance(
    ds: &MetaDataset,
    fit: &FitResult,
    coordinate: usize,
    value: f64,
    options: &FitOptions,
) -> Result<f64> {
    check_coordinate(coordinate, ds.p())?;
    if fit.method == Method::Dl {
        return Err(MetaError::InvalidArgument(
            "profile deviance needs an ML or MPL fit".into(),
        ));
    }
    let mut profile = Profile {
        ds,
        coordinate,
        method: fit.method,
        options,
        optimum: fit.objective.unwrap(),
        warm: fit.theta(),
        evaluations: 0,
    };
    profile.deviance(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{fit_ml, fit_mpl};
    use crate::model::StudyRecord;
    use approx::assert_relative_eq;

    fn toy() -> MetaDataset {
        MetaDataset::meta_analysis(
            &[0.21, -0.35, 0.62, 0.05, 0.44, -0.12, 0.9, 0.3],
            &[0.09, 0.2, 0.15, 0.3, 0.12, 0.25, 0.4, 0.1],
        )
        .unwrap()
    }

    #[test]
    fn wald_is_symmetric_closed_form() {
        let y = [0.3, -0.4, 1.2, 0.8, -1.1, 0.05];
        let ds = MetaDataset::meta_analysis(&y, &[0.1; 6]).unwrap();
        let fit = fit_mpl(&ds, &FitOptions::default()).unwrap();
        let ci = wald_interval(&fit, 0, 0.95).unwrap();
        assert_relative_eq!(
            ci.estimate - ci.lower,
            ci.upper - ci.estimate,
            epsilon = 1e-14
        );
        let v = 0.1 + fit.psi_hat;
        assert_relative_eq!(
            ci.upper - ci.estimate,
            1.959_963_984_540_054 * (v / 6.0).sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(ci.method, IntervalMethod::WaldMpl);
        assert!(wald_interval(&fit, 0, 1.0).is_err());
        assert!(wald_interval(&fit, 1, 0.9).is_err());
    }

    #[test]
    fn profile_endpoints_hit_quantile() {
        let ds = toy();
        let opts = FitOptions::default();
        for method in [IntervalMethod::ProfileMpl, IntervalMethod::ProfileMl] {
            let ci = profile_interval(&ds, 0, 0.95, method, &opts).unwrap();
            assert!(ci.lower < ci.estimate && ci.estimate < ci.upper);
            let fit = full_fit(&ds, method.fit_method(), &opts).unwrap();
            for end in [ci.lower, ci.upper] {
                let d = profile_deviance(&ds, &fit, 0, end, &opts).unwrap();
                assert!((d - 3.841459).abs() < 1e-6, "{method}: {d}");
            }
        }
    }

    #[test]
    fn profile_intervals_nest_by_level() {
        let ds = toy();
        let opts = FitOptions::default();
        let narrow = profile_interval(&ds, 0, 0.8, IntervalMethod::ProfileMpl, &opts).unwrap();
        let wide = profile_interval(&ds, 0, 0.95, IntervalMethod::ProfileMpl, &opts).unwrap();
        assert!(wide.lower < narrow.lower && narrow.upper < wide.upper);
    }

    #[test]
    fn deviance_test_at_own_estimate_is_zero() {
        let studies = (0..12)
            .map(|i| {
                StudyRecord::new(
                    0.3 * (i as f64).cos() + 0.2 * (i % 2) as f64,
                    0.05 + 0.02 * i as f64,
                    vec![1.0, (i % 2) as f64],
                )
            })
            .collect();
        let ds = MetaDataset::new(studies).unwrap();
        let opts = FitOptions::default();
        let fit = fit_mpl(&ds, &opts).unwrap();
        let c = Constraint::new(vec![1], vec![fit.beta_hat[1]]);
        let t = penalized_deviance_test(&ds, &c, &opts).unwrap();
        assert!(t.statistic < 1e-10, "{}", t.statistic);
        assert!(t.p_value > 1.0 - 1e-5);
        assert_eq!(t.df, 1);

        let ml = fit_ml(&ds, &opts).unwrap();
        let w = wald_test(&ml, &Constraint::new(vec![1], vec![0.0])).unwrap();
        let z = ml.beta_hat[1] / ml.std_error(1);
        assert_relative_eq!(w.statistic, z * z, epsilon = 1e-10);
    }

    #[test]
    fn method_tags_parse() {
        for m in IntervalMethod::ALL {
            assert_eq!(m.tag().parse::<IntervalMethod>().unwrap(), m);
        }
        assert!("WALD".parse::<IntervalMethod>().is_err());
    }
}
