//! Data generators for the two simulation designs, a coverage-study harness
//! and a Monte Carlo check of the first-order bias of the ML estimator.
//!
//! Randomness comes from ChaCha12 keyed by the user seed, with the stream id
//! derived from `(replicate_index, role)`. Replicate `r` is therefore
//! reproducible on its own and results do not depend on how replicates are
//! scheduled across threads.

use std::fmt;

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MetaError, Result};
use crate::estimators::{fit_dl, fit_ml, fit_mpl, FitOptions, FitResult, Method};
use crate::inference::{profile_interval_from_fit, wald_interval, IntervalMethod};
use crate::model::{first_order_bias_psi, weighted_gram, MetaDataset, StudyRecord};
use crate::roots::brent;

const ROLE_VARIANCES: u64 = 0;
const ROLE_OUTCOMES: u64 = 1;
const ROLE_COVARIATES: u64 = 2;
const ROLE_INDIVIDUALS: u64 = 3;
const ROLES: u64 = 8;

/// Independent generator for `(seed, index, role)`.
pub fn substream(seed: u64, index: u64, role: u64) -> ChaCha12Rng {
    debug_assert!(role < ROLES);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(ROLES).wrapping_add(role));
    rng
}

fn std_normal(rng: &mut ChaCha12Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// How within-study variances outside the window are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truncation {
    /// Redraw until the value falls inside the window.
    Reject,
    /// Clamp to the nearest window end.
    Clip,
}

/// Meta-analysis design: `sigma2_i = var_scale * chi^2_1` restricted to
/// `var_window`, `y_i ~ N(beta, sigma2_i + psi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrockwellConfig {
    pub k: usize,
    pub psi: f64,
    pub beta: f64,
    pub var_scale: f64,
    pub var_window: (f64, f64),
    pub reps: usize,
    pub seed: u64,
    pub truncation: Truncation,
    /// Adds a standard normal covariate with zero effect (meta-regression
    /// with a null slope).
    pub null_covariate: bool,
}

impl BrockwellConfig {
    pub fn new(k: usize, psi: f64, reps: usize, seed: u64) -> Self {
        Self {
            k,
            psi,
            beta: 0.5,
            var_scale: 0.25,
            var_window: (0.09, 0.6),
            reps,
            seed,
            truncation: Truncation::Reject,
            null_covariate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.var_window;
        let min_k = if self.null_covariate { 3 } else { 2 };
        if self.k < min_k
            || !(self.psi >= 0.0 && self.psi.is_finite())
            || !(lo > 0.0 && lo < hi)
            || self.var_scale <= 0.0
        {
            return Err(MetaError::InvalidArgument(format!(
                "invalid design {self:?}"
            )));
        }
        Ok(())
    }

    fn draw_variance(&self, rng: &mut ChaCha12Rng) -> f64 {
        let (lo, hi) = self.var_window;
        loop {
            let z = std_normal(rng);
            let s = self.var_scale * z * z;
            match self.truncation {
                Truncation::Reject if s > lo && s < hi => return s,
                Truncation::Reject => continue,
                Truncation::Clip => return s.clamp(lo, hi),
            }
        }
    }
}

/// Draws one frozen set of K within-study variances from `freeze_seed`.
pub fn freeze_brockwell_variances(config: &BrockwellConfig, freeze_seed: u64) -> Vec<f64> {
    let mut rng = substream(freeze_seed, 0, ROLE_VARIANCES);
    (0..config.k)
        .map(|_| config.draw_variance(&mut rng))
        .collect()
}

/// Dataset for replicate `replicate_index` of the meta-analysis design.
pub fn gen_brockwell(config: &BrockwellConfig, replicate_index: u64) -> Result<MetaDataset> {
    config.validate()?;
    let mut rng = substream(config.seed, replicate_index, ROLE_VARIANCES);
    let variances: Vec<f64> = (0..config.k)
        .map(|_| config.draw_variance(&mut rng))
        .collect();
    brockwell_outcomes(config, &variances, replicate_index)
}

/// Same design with the within-study variances held at `variances`.
pub fn gen_brockwell_frozen(
    config: &BrockwellConfig,
    variances: &[f64],
    replicate_index: u64,
) -> Result<MetaDataset> {
    config.validate()?;
    if variances.len() != config.k {
        return Err(MetaError::InvalidArgument(format!(
            "{} frozen variances for K = {}",
            variances.len(),
            config.k
        )));
    }
    brockwell_outcomes(config, variances, replicate_index)
}

fn brockwell_outcomes(
    config: &BrockwellConfig,
    variances: &[f64],
    replicate_index: u64,
) -> Result<MetaDataset> {
    let mut rng = substream(config.seed, replicate_index, ROLE_OUTCOMES);
    let mut cov_rng = substream(config.seed, replicate_index, ROLE_COVARIATES);
    let studies = variances
        .iter()
        .map(|&s2| {
            let y = config.beta + (s2 + config.psi).sqrt() * std_normal(&mut rng);
            let x = if config.null_covariate {
                vec![1.0, std_normal(&mut cov_rng)]
            } else {
                vec![1.0]
            };
            StudyRecord::new(y, s2, x)
        })
        .collect();
    MetaDataset::new(studies)
}

/// Two-arm individual-level design summarized by standardized mean
/// differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmdConfig {
    pub k: usize,
    pub phi: f64,
    pub mu: f64,
    pub sigma: f64,
    pub delta: f64,
    /// Inclusive range of per-arm sizes.
    pub n_range: (u32, u32),
    pub reps: usize,
    pub seed: u64,
}

impl SmdConfig {
    pub fn new(k: usize, phi: f64, reps: usize, seed: u64) -> Self {
        Self {
            k,
            phi,
            mu: 0.0,
            sigma: 1.0,
            delta: -2.0,
            n_range: (30, 100),
            reps,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2
            || !(self.phi >= 0.0 && self.phi.is_finite())
            || self.sigma.is_nan()
            || self.sigma <= 0.0
            || self.n_range.0 < 2
            || self.n_range.0 > self.n_range.1
        {
            return Err(MetaError::InvalidArgument(format!(
                "invalid design {self:?}"
            )));
        }
        Ok(())
    }
}

/// Hedges-corrected standardized mean difference `J (mean2 - mean1) / s` and
/// its variance estimate `2J/n + J y^2 / (4n)`, for equal arm sizes `n`.
pub fn summarize_two_arm(arm1: &[f64], arm2: &[f64]) -> Result<(f64, f64)> {
    let n = arm1.len();
    if n != arm2.len() || n < 2 {
        return Err(MetaError::InvalidData(format!(
            "arms must have equal size >= 2, got {} and {}",
            arm1.len(),
            arm2.len()
        )));
    }
    let mean = |a: &[f64]| a.iter().sum::<f64>() / a.len() as f64;
    let (m1, m2) = (mean(arm1), mean(arm2));
    let ss = |a: &[f64], m: f64| a.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    let nf = n as f64;
    let pooled = (ss(arm1, m1) + ss(arm2, m2)) / (2.0 * nf - 2.0);
    if pooled.is_nan() || pooled <= 0.0 {
        return Err(MetaError::InvalidData("pooled variance is zero".into()));
    }
    let j = hedges_j(n);
    let y = j * (m2 - m1) / pooled.sqrt();
    let var = 2.0 * j / nf + j * y * y / (4.0 * nf);
    Ok((y, var))
}

/// `1 - 3 / {8 (n - 1) - 1}` for per-arm size `n`.
pub fn hedges_j(n: usize) -> f64 {
    1.0 - 3.0 / (8.0 * (n as f64 - 1.0) - 1.0)
}

/// Individual observations of both arms for one study.
pub fn draw_smd_study(config: &SmdConfig, rng: &mut ChaCha12Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(config.n_range.0..=config.n_range.1) as usize;
    let alpha = config.phi.sqrt() * std_normal(rng);
    let arm1 = (0..n)
        .map(|_| config.mu + config.sigma * std_normal(rng))
        .collect();
    let shift = config.mu + (config.delta + alpha) * config.sigma;
    let arm2 = (0..n)
        .map(|_| shift + config.sigma * std_normal(rng))
        .collect();
    (arm1, arm2)
}

pub fn gen_smd(config: &SmdConfig, replicate_index: u64) -> Result<MetaDataset> {
    config.validate()?;
    let mut rng = substream(config.seed, replicate_index, ROLE_INDIVIDUALS);
    let studies = (0..config.k)
        .map(|_| {
            let (a1, a2) = draw_smd_study(config, &mut rng);
            let (y, v) = summarize_two_arm(&a1, &a2)?;
            Ok(StudyRecord::new(y, v, vec![1.0]))
        })
        .collect::<Result<Vec<_>>>()?;
    MetaDataset::new(studies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Design {
    Brockwell(BrockwellConfig),
    Smd(SmdConfig),
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::Brockwell(_) => "brockwell",
            Design::Smd(_) => "smd",
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Design::Brockwell(c) => c.k,
            Design::Smd(c) => c.k,
        }
    }

    /// psi for the meta-analysis design, phi for the two-arm design.
    pub fn heterogeneity(&self) -> f64 {
        match self {
            Design::Brockwell(c) => c.psi,
            Design::Smd(c) => c.phi,
        }
    }

    pub fn reps(&self) -> usize {
        match self {
            Design::Brockwell(c) => c.reps,
            Design::Smd(c) => c.reps,
        }
    }

    /// The effect that intervals for the intercept are scored against.
    pub fn true_effect(&self) -> f64 {
        match self {
            Design::Brockwell(c) => c.beta,
            Design::Smd(c) => c.delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Design::Brockwell(c) => c.validate(),
            Design::Smd(c) => c.validate(),
        }
    }

    pub fn generate(&self, replicate_index: u64) -> Result<MetaDataset> {
        match self {
            Design::Brockwell(c) => gen_brockwell(c, replicate_index),
            Design::Smd(c) => gen_smd(c, replicate_index),
        }
    }
}

/// One (design cell, method) summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub design: String,
    #[serde(rename = "K")]
    pub k: usize,
    /// psi or phi, depending on the design.
    pub psi: f64,
    pub method: IntervalMethod,
    pub level: f64,
    pub reps: usize,
    pub coverage: f64,
    pub mc_se: f64,
    pub mean_width: f64,
    pub mean_psi_hat: f64,
    pub boundary_rate: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
}

impl CoverageTable {
    pub fn row(
        &self,
        k: usize,
        heterogeneity: f64,
        method: IntervalMethod,
    ) -> Option<&CoverageRow> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.psi == heterogeneity && r.method == method)
    }

    pub fn extend(&mut self, other: CoverageTable) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)
                .map_err(|e| MetaError::InvalidData(e.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| MetaError::InvalidData(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coverage table serializes")
    }
}

impl fmt::Display for CoverageTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>4} {:>8} {:<12} {:>8} {:>8} {:>10} {:>10} {:>9} {:>8}",
            "design",
            "K",
            "psi/phi",
            "method",
            "coverage",
            "mc_se",
            "width",
            "psi_hat",
            "boundary",
            "failures"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>4} {:>8.4} {:<12} {:>8.4} {:>8.4} {:>10.4} {:>10.5} {:>9.3} {:>8}",
                r.design,
                r.k,
                r.psi,
                r.method.tag(),
                r.coverage,
                r.mc_se,
                r.mean_width,
                r.mean_psi_hat,
                r.boundary_rate,
                r.failures
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ReplicateOutcome {
    covered: bool,
    width: f64,
    psi_hat: f64,
    boundary: bool,
}

fn replicate_outcomes(
    design: &Design,
    methods: &[IntervalMethod],
    level: f64,
    options: &FitOptions,
    replicate_index: u64,
) -> Vec<Option<ReplicateOutcome>> {
    let Ok(ds) = design.generate(replicate_index) else {
        return vec![None; methods.len()];
    };
    let needs = |m: Method| methods.iter().any(|im| im.fit_method() == m);
    let fit_if = |m: Method| -> Option<FitResult> {
        if !needs(m) {
            return None;
        }
        let fit = match m {
            Method::Dl => fit_dl(&ds),
            Method::Ml => fit_ml(&ds, options),
            Method::Mpl => fit_mpl(&ds, options),
        };
        fit.ok().filter(|f| f.converged)
    };
    let fits = [
        (Method::Dl, fit_if(Method::Dl)),
        (Method::Ml, fit_if(Method::Ml)),
        (Method::Mpl, fit_if(Method::Mpl)),
    ];
    let truth = design.true_effect();
    methods
        .iter()
        .map(|&im| {
            let fit = fits
                .iter()
                .find(|(m, _)| *m == im.fit_method())
                .and_then(|(_, f)| f.as_ref())?;
            let interval = if im.is_profile() {
                profile_interval_from_fit(&ds, fit, 0, level, options).ok()?
            } else {
                wald_interval(fit, 0, level).ok()?
            };
            Some(ReplicateOutcome {
                covered: interval.contains(truth),
                width: interval.width(),
                psi_hat: fit.psi_hat,
                boundary: fit.at_boundary,
            })
        })
        .collect()
}

/// Empirical coverage of intervals for the overall effect under `design`.
///
/// Replicates run on the current rayon pool; per-replicate outcomes are
/// collected in index order before aggregation, so the table does not depend
/// on the number of threads.
pub fn coverage_study(
    design: &Design,
    methods: &[IntervalMethod],
    level: f64,
    options: &FitOptions,
) -> Result<CoverageTable> {
    design.validate()?;
    if methods.is_empty() {
        return Err(MetaError::InvalidArgument(
            "no interval methods given".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetaError::InvalidArgument(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let reps = design.reps();
    if reps == 0 {
        return Err(MetaError::InvalidArgument("reps must be at least 1".into()));
    }
    let outcomes: Vec<Vec<Option<ReplicateOutcome>>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| replicate_outcomes(design, methods, level, options, r))
        .collect();

    let rows = methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let ok: Vec<ReplicateOutcome> = outcomes.iter().filter_map(|o| o[i]).collect();
            let n = ok.len();
            let failures = reps - n;
            let mean = |f: &dyn Fn(&ReplicateOutcome) -> f64| {
                if n == 0 {
                    f64::NAN
                } else {
                    ok.iter().map(f).sum::<f64>() / n as f64
                }
            };
            let coverage = mean(&|o| if o.covered { 1.0 } else { 0.0 });
            CoverageRow {
                design: design.name().to_string(),
                k: design.k(),
                psi: design.heterogeneity(),
                method,
                level,
                reps,
                coverage,
                mc_se: (coverage * (1.0 - coverage) / n as f64).sqrt(),
                mean_width: mean(&|o| o.width),
                mean_psi_hat: mean(&|o| o.psi_hat),
                boundary_rate: mean(&|o| if o.boundary { 1.0 } else { 0.0 }),
                failures,
            }
        })
        .collect();
    Ok(CoverageTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    /// `mean(psi_hat) - psi` for the truncated (`psi_hat >= 0`) ML estimator.
    pub empirical_bias: f64,
    pub mc_se: f64,
    /// Same for the ML root on the extended domain `psi > -min sigma2`.
    pub untruncated_bias: f64,
    pub untruncated_mc_se: f64,
    /// First-order bias at the true psi.
    pub predicted: f64,
    pub mean_psi_hat: f64,
    pub boundary_rate: f64,
    pub reps: usize,
    /// Replicates where the ML fit failed.
    pub failures: usize,
    /// Replicates with no local maximum of the likelihood on the extended
    /// domain; they are left out of the untruncated summary.
    pub untruncated_failures: usize,
}

impl BiasReport {
    /// `max(3 mc_se, 0.15 |predicted|)` on the untruncated estimator.
    pub fn tolerance(&self) -> f64 {
        (3.0 * self.untruncated_mc_se).max(0.15 * self.predicted.abs())
    }

    /// The first-order expansion describes the untruncated estimator; the
    /// boundary at 0 adds a positive shift that is not part of it.
    /// Requires the untruncated root to exist in at least 99% of replicates,
    /// otherwise its mean is not a meaningful summary.
    pub fn passes(&self) -> bool {
        self.untruncated_failures * 100 <= self.reps
            && (self.untruncated_bias - self.predicted).abs() <= self.tolerance()
    }
}

/// Root of the profile ML psi-score on `psi > -min sigma2`, i.e. the ML
/// estimate without truncation at zero. Searches `[0, inf)` when the score
/// at zero is positive and `(-min sigma2, 0]` otherwise.
pub fn ml_psi_unrestricted(ds: &MetaDataset) -> Result<f64> {
    let score = |psi: f64| -> Result<f64> {
        let w = ds.sigma2_hat().map(|s| 1.0 / (s + psi));
        let gram = weighted_gram(ds.design(), &w);
        let chol = Cholesky::new(gram).ok_or(MetaError::Singular { psi })?;
        let beta = chol.solve(&ds.design().tr_mul(&w.component_mul(ds.y())));
        let r = ds.y() - ds.design() * beta;
        Ok(0.5
            * w.iter()
                .zip(r.iter())
                .map(|(w, r)| (w * r) * (w * r) - w)
                .sum::<f64>())
    };
    let s_min = ds.sigma2_hat().min();
    let g0 = score(0.0)?;
    let (lo, g_lo, hi, g_hi) = if g0 > 0.0 {
        let mut hi = ds.sigma2_hat().max();
        let mut g_hi = score(hi)?;
        let mut lo = 0.0;
        let mut g_lo = g0;
        while g_hi > 0.0 {
            if hi > 1e6 * s_min.max(ds.sigma2_hat().max()) {
                return Err(MetaError::BracketNotFound(
                    "ML psi-score positive at cap".into(),
                ));
            }
            lo = hi;
            g_lo = g_hi;
            hi *= 2.0;
            g_hi = score(hi)?;
        }
        (lo, g_lo, hi, g_hi)
    } else {
        // The score tends to minus infinity as psi approaches -min sigma2, so
        // the local maximum is bracketed by the nearest point below zero where
        // the score is positive.
        let grid = (1..64)
            .map(|j| -s_min * j as f64 / 64.0)
            .chain((7..40).map(|i| -s_min * (1.0 - 0.5f64.powi(i))));
        let mut bracket = None;
        for psi in grid {
            let g = score(psi)?;
            if g > 0.0 {
                bracket = Some((psi, g));
                break;
            }
        }
        let (lo, g_lo) = bracket.ok_or_else(|| {
            MetaError::BracketNotFound("ML psi-score has no sign change below zero".into())
        })?;
        (lo, g_lo, 0.0, g0)
    };
    Ok(brent(score, lo, g_lo, hi, g_hi, 1e-15 * s_min, 0.0, 300)?.x)
}

/// Monte Carlo bias of the ML estimator of psi over replicates that share the
/// within-study variances `frozen`, against the first-order prediction at the
/// true psi. Both the truncated estimator and the untruncated root are
/// summarized.
pub fn mc_bias_oracle(
    config: &BrockwellConfig,
    frozen: &[f64],
    reps: usize,
    options: &FitOptions,
) -> Result<BiasReport> {
    if reps < 2 {
        return Err(MetaError::InvalidArgument(
            "need at least 2 replicates".into(),
        ));
    }
    let template = gen_brockwell_frozen(config, frozen, 0)?;
    let predicted = first_order_bias_psi(&template, config.psi)?;
    let estimates: Vec<(Option<f64>, Option<f64>)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| match gen_brockwell_frozen(config, frozen, r) {
            Ok(ds) => (
                fit_ml(&ds, options)
                    .ok()
                    .filter(|f| f.converged)
                    .map(|f| f.psi_hat),
                ml_psi_unrestricted(&ds).ok(),
            ),
            Err(_) => (None, None),
        })
        .collect();
    let truncated: Vec<f64> = estimates.iter().filter_map(|e| e.0).collect();
    let extended: Vec<f64> = estimates.iter().filter_map(|e| e.1).collect();
    if truncated.len() < 2 || extended.len() < 2 {
        return Err(MetaError::InvalidArgument(
            "too few successful replicates for a bias summary".into(),
        ));
    }
    let (mean, se) = mean_and_se(&truncated);
    let (mean_ext, se_ext) = mean_and_se(&extended);
    Ok(BiasReport {
        empirical_bias: mean - config.psi,
        mc_se: se,
        untruncated_bias: mean_ext - config.psi,
        untruncated_mc_se: se_ext,
        predicted,
        mean_psi_hat: mean,
        boundary_rate: truncated.iter().filter(|&&v| v == 0.0).count() as f64
            / truncated.len() as f64,
        reps,
        failures: reps - truncated.len(),
        untruncated_failures: reps - extended.len(),
    })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn brockwell_variances_in_window_and_deterministic() {
        let cfg = BrockwellConfig::new(20, 0.05, 1, 7);
        for r in 0..200 {
            let ds = gen_brockwell(&cfg, r).unwrap();
            assert!(ds.sigma2_hat().iter().all(|&s| s > 0.09 && s < 0.6));
        }
        let a = gen_brockwell(&cfg, 3).unwrap();
        let b = gen_brockwell(&cfg, 3).unwrap();
        assert_eq!(a.studies(), b.studies());
        let c = gen_brockwell(&cfg, 4).unwrap();
        assert_ne!(a.studies(), c.studies());
    }

    #[test]
    fn clipping_puts_atoms_at_window_ends() {
        let mut cfg = BrockwellConfig::new(200, 0.0, 1, 1);
        cfg.truncation = Truncation::Clip;
        let ds = gen_brockwell(&cfg, 0).unwrap();
        assert!(ds.sigma2_hat().iter().any(|&s| s == 0.09));
    }

    #[test]
    fn two_arm_summary() {
        assert_relative_eq!(hedges_j(30), 1.0 - 3.0 / 231.0, epsilon = 1e-15);
        assert!((hedges_j(30) - 0.987013).abs() < 1e-6);

        let arm1 = [1.0, 2.0, 3.0];
        let arm2 = [3.0, 2.0, 1.0];
        let (y, v) = summarize_two_arm(&arm1, &arm2).unwrap();
        assert_eq!(y, 0.0);
        assert_relative_eq!(v, 2.0 * hedges_j(3) / 3.0, epsilon = 1e-15);

        // pooled variance: ((0.25+0.25+1+0.5^2...)) computed by hand below
        let a = [0.5, 1.5, 1.0, 2.0];
        let b = [2.5, 3.0, 1.5, 3.0];
        let (ma, mb) = (1.25, 2.5);
        let ssa = 0.5625 + 0.0625 + 0.0625 + 0.5625;
        let ssb = 0.0 + 0.25 + 1.0 + 0.25;
        let s = ((ssa + ssb) / 6.0f64).sqrt();
        let j = 1.0 - 3.0 / 23.0;
        let y_oracle = j * (mb - ma) / s;
        let v_oracle = 2.0 * j / 4.0 + j * y_oracle * y_oracle / 16.0;
        let (y, v) = summarize_two_arm(&a, &b).unwrap();
        assert_relative_eq!(y, y_oracle, epsilon = 1e-12);
        assert_relative_eq!(v, v_oracle, epsilon = 1e-12);

        assert!(summarize_two_arm(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(summarize_two_arm(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn smd_deterministic() {
        let cfg = SmdConfig::new(5, 0.5, 1, 99);
        assert_eq!(
            gen_smd(&cfg, 2).unwrap().studies(),
            gen_smd(&cfg, 2).unwrap().studies()
        );
    }

    #[test]
    fn single_replicate_coverage_is_degenerate() {
        let design = Design::Brockwell(BrockwellConfig::new(10, 0.03, 1, 5));
        let t =
            coverage_study(&design, &IntervalMethod::ALL, 0.95, &FitOptions::default()).unwrap();
        for row in &t.rows {
            assert!(row.coverage == 0.0 || row.coverage == 1.0);
            assert_eq!(row.failures, 0);
        }
    }

    #[test]
    fn bias_prediction_equal_variances() {
        let cfg = BrockwellConfig::new(8, 0.05, 1, 3);
        let report = mc_bias_oracle(&cfg, &[0.2; 8], 200, &FitOptions::default()).unwrap();
        assert_relative_eq!(report.predicted, -(0.2 + 0.05) / 8.0, epsilon = 1e-14);
        assert!(report.untruncated_bias <= report.empirical_bias);
    }

    #[test]
    fn unrestricted_root_agrees_with_interior_ml_and_goes_negative() {
        let opts = FitOptions::default();
        let y = [0.3, -0.4, 1.2, 0.8, -1.1, 0.05];
        let ds = MetaDataset::meta_analysis(&y, &[0.1; 6]).unwrap();
        let ml = fit_ml(&ds, &opts).unwrap();
        assert_relative_eq!(
            ml_psi_unrestricted(&ds).unwrap(),
            ml.psi_hat,
            epsilon = 1e-10
        );

        let y = [0.0, 0.02, -0.02, 0.01];
        let ds = MetaDataset::meta_analysis(&y, &[0.5; 4]).unwrap();
        let mean = 0.0025;
        let ss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        assert_relative_eq!(
            ml_psi_unrestricted(&ds).unwrap(),
            ss / 4.0 - 0.5,
            epsilon = 1e-10
        );
    }
}
