//! Python bindings for `metareg`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use metareg::estimators::Constraint;
use metareg::inference::{
    deviance_test as rs_deviance_test, profile_interval, wald_test as rs_wald_test,
};
use metareg::model;
use metareg::simulation::{self, BrockwellConfig, Design, SmdConfig};
use metareg::{FitOptions, IntervalMethod, MetaDataset, MetaError, Method, StudyRecord, Theta};

fn to_py(e: MetaError) -> PyErr {
    match e {
        MetaError::NotConverged { .. }
        | MetaError::BracketNotFound(_)
        | MetaError::NegativeDeviance(_)
        | MetaError::Singular { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    match name.to_ascii_lowercase().as_str() {
        "dl" => Ok(Method::Dl),
        "ml" => Ok(Method::Ml),
        "mpl" => Ok(Method::Mpl),
        other => Err(PyValueError::new_err(format!(
            "unknown method {other:?}; expected 'dl', 'ml' or 'mpl'"
        ))),
    }
}

fn parse_interval_method(name: &str) -> PyResult<IntervalMethod> {
    name.to_ascii_uppercase()
        .parse::<IntervalMethod>()
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Studies `(y_i, v_i, x_i)` with known within-study variances `v_i`.
#[pyclass(name = "Dataset", module = "metareg_py", frozen)]
pub struct PyDataset {
    inner: MetaDataset,
}

#[pymethods]
impl PyDataset {
    /// `x` holds one covariate row per study; when omitted the model is a
    /// plain meta-analysis (intercept only).
    #[new]
    #[pyo3(signature = (y, v, x = None))]
    fn new(y: Vec<f64>, v: Vec<f64>, x: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        if y.len() != v.len() {
            return Err(PyValueError::new_err("y and v must have the same length"));
        }
        let inner = match x {
            None => MetaDataset::meta_analysis(&y, &v),
            Some(rows) => {
                if rows.len() != y.len() {
                    return Err(PyValueError::new_err("x must have one row per study"));
                }
                let studies = y
                    .iter()
                    .zip(&v)
                    .zip(rows)
                    .map(|((&y, &v), x)| StudyRecord::new(y, v, x))
                    .collect();
                MetaDataset::new(studies)
            }
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    /// Outcomes in the dataset's canonical (sorted) study order.
    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().iter().copied().collect()
    }

    #[getter]
    fn v(&self) -> Vec<f64> {
        self.inner.sigma2_hat().iter().copied().collect()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner
            .studies()
            .iter()
            .map(|s| s.covariates.clone())
            .collect()
    }

    /// Copy with `y -> c y` and `v -> c^2 v`.
    fn rescaled(&self, c: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.rescaled(c).map_err(to_py)?,
        })
    }

    fn log_likelihood(&self, beta: Vec<f64>, psi: f64) -> PyResult<f64> {
        model::log_likelihood(&self.inner, &Theta::new(beta, psi)).map_err(to_py)
    }

    fn penalized_log_likelihood(&self, beta: Vec<f64>, psi: f64) -> PyResult<f64> {
        model::penalized_log_likelihood(&self.inner, &Theta::new(beta, psi)).map_err(to_py)
    }

    /// Gradient of the log-likelihood, `beta` components first then `psi`.
    fn score(&self, beta: Vec<f64>, psi: f64) -> PyResult<Vec<f64>> {
        model::score(&self.inner, &Theta::new(beta, psi)).map_err(to_py)
    }

    fn adjusted_score_psi(&self, beta: Vec<f64>, psi: f64) -> PyResult<f64> {
        model::adjusted_score_psi(&self.inner, &Theta::new(beta, psi)).map_err(to_py)
    }

    fn fisher_information(&self, beta: Vec<f64>, psi: f64) -> PyResult<Vec<Vec<f64>>> {
        let f = model::fisher_information(&self.inner, &Theta::new(beta, psi)).map_err(to_py)?;
        Ok(f.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn first_order_bias_psi(&self, psi: f64) -> PyResult<f64> {
        model::first_order_bias_psi(&self.inner, psi).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.k()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(k={}, p={})", self.inner.k(), self.inner.p())
    }
}

#[pyclass(name = "FitResult", module = "metareg_py", frozen)]
pub struct PyFitResult {
    inner: metareg::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.tag()
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta_hat.clone()
    }

    #[getter]
    fn psi(&self) -> f64 {
        self.inner.psi_hat
    }

    #[getter]
    fn se(&self) -> Vec<f64> {
        (0..self.inner.beta_hat.len())
            .map(|j| self.inner.std_error(j))
            .collect()
    }

    #[getter]
    fn cov(&self) -> Vec<Vec<f64>> {
        self.inner
            .beta_cov
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    #[getter]
    fn objective(&self) -> Option<f64> {
        self.inner.objective
    }

    #[getter]
    fn q_statistic(&self) -> Option<f64> {
        self.inner.q_statistic
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn at_boundary(&self) -> bool {
        self.inner.at_boundary
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(method={}, beta={:?}, psi={})",
            self.inner.method, self.inner.beta_hat, self.inner.psi_hat
        )
    }
}

/// Fits the random-effects model with `method` in {"dl", "ml", "mpl"}.
#[pyfunction]
#[pyo3(signature = (dataset, method = "mpl"))]
fn fit(dataset: &PyDataset, method: &str) -> PyResult<PyFitResult> {
    let opts = FitOptions::default();
    let inner = match parse_method(method)? {
        Method::Dl => metareg::fit_dl(&dataset.inner),
        Method::Ml => metareg::fit_ml(&dataset.inner, &opts),
        Method::Mpl => metareg::fit_mpl(&dataset.inner, &opts),
    }
    .map_err(to_py)?;
    Ok(PyFitResult { inner })
}

/// `(lower, upper)` for coefficient `coefficient`. `method` is one of
/// WALD_DL, WALD_ML, WALD_MPL, PROFILE_ML, PROFILE_MPL.
#[pyfunction]
#[pyo3(signature = (dataset, coefficient, level = 0.95, method = "PROFILE_MPL"))]
fn confidence_interval(
    dataset: &PyDataset,
    coefficient: usize,
    level: f64,
    method: &str,
) -> PyResult<(f64, f64)> {
    let m = parse_interval_method(method)?;
    let ci = profile_interval(
        &dataset.inner,
        coefficient,
        level,
        m,
        &FitOptions::default(),
    )
    .map_err(to_py)?;
    Ok((ci.lower, ci.upper))
}

/// Deviance test of `beta[j] = 0` for `j` in `coefficients`:
/// likelihood ratio for "ml", penalized deviance for "mpl".
/// Returns `(statistic, df, p_value)`.
#[pyfunction]
#[pyo3(signature = (dataset, coefficients, method = "mpl"))]
fn deviance_test(
    dataset: &PyDataset,
    coefficients: Vec<usize>,
    method: &str,
) -> PyResult<(f64, usize, f64)> {
    let c = Constraint::new(coefficients.clone(), vec![0.0; coefficients.len()]);
    let t = rs_deviance_test(
        &dataset.inner,
        &c,
        parse_method(method)?,
        &FitOptions::default(),
    )
    .map_err(to_py)?;
    Ok((t.statistic, t.df, t.p_value))
}

/// Wald test of `beta[j] = 0` for `j` in `coefficients` at the fit's
/// covariance. Returns `(statistic, df, p_value)`.
#[pyfunction]
fn wald_test(fit: &PyFitResult, coefficients: Vec<usize>) -> PyResult<(f64, usize, f64)> {
    let c = Constraint::new(coefficients.clone(), vec![0.0; coefficients.len()]);
    let t = rs_wald_test(&fit.inner, &c).map_err(to_py)?;
    Ok((t.statistic, t.df, t.p_value))
}

#[pyfunction]
fn chi2_survival(x: f64, df: u32) -> PyResult<f64> {
    if df == 0 {
        return Err(PyValueError::new_err("df must be at least 1"));
    }
    Ok(metareg::chi2_survival(x, df))
}

#[pyfunction]
#[pyo3(signature = (k, psi, seed, replicate = 0))]
fn gen_brockwell(k: usize, psi: f64, seed: u64, replicate: u64) -> PyResult<PyDataset> {
    let cfg = BrockwellConfig::new(k, psi, 1, seed);
    Ok(PyDataset {
        inner: simulation::gen_brockwell(&cfg, replicate).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (k, phi, seed, replicate = 0))]
fn gen_smd(k: usize, phi: f64, seed: u64, replicate: u64) -> PyResult<PyDataset> {
    let cfg = SmdConfig::new(k, phi, 1, seed);
    Ok(PyDataset {
        inner: simulation::gen_smd(&cfg, replicate).map_err(to_py)?,
    })
}

/// Hedges-corrected standardized mean difference and its variance.
#[pyfunction]
fn summarize_two_arm(arm1: Vec<f64>, arm2: Vec<f64>) -> PyResult<(f64, f64)> {
    simulation::summarize_two_arm(&arm1, &arm2).map_err(to_py)
}

#[pyclass(name = "CoverageRow", module = "metareg_py", frozen, get_all)]
pub struct PyCoverageRow {
    design: String,
    k: usize,
    heterogeneity: f64,
    method: String,
    level: f64,
    reps: usize,
    coverage: f64,
    mc_se: f64,
    mean_width: f64,
    mean_psi_hat: f64,
    boundary_rate: f64,
    failures: usize,
}

#[pymethods]
impl PyCoverageRow {
    fn __repr__(&self) -> String {
        format!(
            "CoverageRow({} K={} {}={} {}: coverage={} mc_se={})",
            self.design,
            self.k,
            if self.design == "smd" { "phi" } else { "psi" },
            self.heterogeneity,
            self.method,
            self.coverage,
            self.mc_se
        )
    }
}

/// Coverage of `methods` intervals for `design` in {"brockwell", "smd"};
/// `heterogeneity` is psi or phi respectively.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (design, k, heterogeneity, reps, seed, methods = vec!["WALD_DL".to_string(), "PROFILE_MPL".to_string()], level = 0.95))]
fn coverage_study(
    py: Python<'_>,
    design: &str,
    k: usize,
    heterogeneity: f64,
    reps: usize,
    seed: u64,
    methods: Vec<String>,
    level: f64,
) -> PyResult<Vec<PyCoverageRow>> {
    let d = match design {
        "brockwell" => Design::Brockwell(BrockwellConfig::new(k, heterogeneity, reps, seed)),
        "smd" => Design::Smd(SmdConfig::new(k, heterogeneity, reps, seed)),
        other => return Err(PyValueError::new_err(format!("unknown design {other:?}"))),
    };
    let methods = methods
        .iter()
        .map(|m| parse_interval_method(m))
        .collect::<PyResult<Vec<_>>>()?;
    let table = py
        .detach(|| simulation::coverage_study(&d, &methods, level, &FitOptions::default()))
        .map_err(to_py)?;
    Ok(table
        .rows
        .into_iter()
        .map(|r| PyCoverageRow {
            design: r.design.to_string(),
            k: r.k,
            heterogeneity: r.psi,
            method: r.method.tag().to_string(),
            level: r.level,
            reps: r.reps,
            coverage: r.coverage,
            mc_se: r.mc_se,
            mean_width: r.mean_width,
            mean_psi_hat: r.mean_psi_hat,
            boundary_rate: r.boundary_rate,
            failures: r.failures,
        })
        .collect())
}

#[pyclass(name = "BiasReport", module = "metareg_py", frozen, get_all)]
pub struct PyBiasReport {
    empirical_bias: f64,
    mc_se: f64,
    untruncated_bias: f64,
    untruncated_mc_se: f64,
    predicted: f64,
    tolerance: f64,
    boundary_rate: f64,
    failures: usize,
    untruncated_failures: usize,
    passed: bool,
}

/// Monte Carlo bias of the ML estimator of psi on a frozen meta-analysis
/// design, against the first-order prediction.
#[pyfunction]
#[pyo3(signature = (k, psi, reps, seed = 1, freeze_seed = 1))]
fn bias_check(
    py: Python<'_>,
    k: usize,
    psi: f64,
    reps: usize,
    seed: u64,
    freeze_seed: u64,
) -> PyResult<PyBiasReport> {
    let cfg = BrockwellConfig::new(k, psi, reps, seed);
    cfg.validate().map_err(to_py)?;
    let frozen = simulation::freeze_brockwell_variances(&cfg, freeze_seed);
    let r = py
        .detach(|| simulation::mc_bias_oracle(&cfg, &frozen, reps, &FitOptions::default()))
        .map_err(to_py)?;
    Ok(PyBiasReport {
        empirical_bias: r.empirical_bias,
        mc_se: r.mc_se,
        untruncated_bias: r.untruncated_bias,
        untruncated_mc_se: r.untruncated_mc_se,
        predicted: r.predicted,
        tolerance: r.tolerance(),
        boundary_rate: r.boundary_rate,
        failures: r.failures,
        untruncated_failures: r.untruncated_failures,
        passed: r.passes(),
    })
}

#[pymodule]
fn metareg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFitResult>()?;
    m.add_class::<PyCoverageRow>()?;
    m.add_class::<PyBiasReport>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_interval, m)?)?;
    m.add_function(wrap_pyfunction!(deviance_test, m)?)?;
    m.add_function(wrap_pyfunction!(wald_test, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_survival, m)?)?;
    m.add_function(wrap_pyfunction!(gen_brockwell, m)?)?;
    m.add_function(wrap_pyfunction!(gen_smd, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_two_arm, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_study, m)?)?;
    m.add_function(wrap_pyfunction!(bias_check, m)?)?;
    Ok(())
}
