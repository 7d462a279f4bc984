//! Python bindings: datasets, per-study effects, the three pooled
//! estimators, the population-share solver and the simulation entry points.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};

use metabin::causal::{pool_causal, CausalConfig, WeightScheme};
use metabin::classical::{
    pool_fixed, pool_random, tau2_dersimonian_laird, tau2_paule_mandel, Tau2Method,
};
use metabin::compare::{compare_batch, CompareConfig};
use metabin::effects::{study_effects, CorrectionPolicy, StudyEffect};
use metabin::forest::format_sig;
use metabin::io::{read_dataset, write_dataset_csv, write_dataset_json};
use metabin::model::{
    validate_dataset, Measure, MetaDataset, PooledEstimate, PoolingMethod, Scale, StudyTable,
};
use metabin::sim::{run_mismatch, simulate_meta, solve_pstar, MismatchConfig, MuTable};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_measure(s: &str) -> PyResult<Measure> {
    s.parse().map_err(PyValueError::new_err)
}

fn parse_correction(s: &str) -> PyResult<CorrectionPolicy> {
    s.parse().map_err(PyValueError::new_err)
}

/// One 2x2 study table: treated events, treated non-events, control events,
/// control non-events.
#[pyclass(module = "metabin_py", from_py_object)]
#[derive(Clone)]
struct Study {
    inner: StudyTable,
}

#[pymethods]
impl Study {
    #[new]
    fn new(label: String, n11: u64, n10: u64, n01: u64, n00: u64) -> Self {
        Self { inner: StudyTable::new(label, n11, n10, n01, n00) }
    }

    #[getter]
    fn label(&self) -> &str {
        &self.inner.label
    }

    #[getter]
    fn n11(&self) -> u64 {
        self.inner.n11
    }

    #[getter]
    fn n10(&self) -> u64 {
        self.inner.n10
    }

    #[getter]
    fn n01(&self) -> u64 {
        self.inner.n01
    }

    #[getter]
    fn n00(&self) -> u64 {
        self.inner.n00
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!("Study({:?}, {}, {}, {}, {})", s.label, s.n11, s.n10, s.n01, s.n00)
    }
}

/// A named collection of studies. Construction validates: no empty arms,
/// no duplicate labels, at least one study.
#[pyclass(module = "metabin_py", skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: MetaDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(name: String, studies: Vec<Study>) -> PyResult<Self> {
        let dataset = MetaDataset::new(name, studies.into_iter().map(|s| s.inner).collect());
        Ok(Self { inner: validate_dataset(dataset).map_err(value_err)? })
    }

    /// Load from a file; `.json` is parsed as JSON, anything else as CSV.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let dataset = read_dataset(&path).map_err(value_err)?;
        Ok(Self { inner: validate_dataset(dataset).map_err(value_err)? })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(value_err)?;
        write_dataset_csv(&self.inner, file).map_err(value_err)
    }

    fn write_json(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(value_err)?;
        write_dataset_json(&self.inner, file).map_err(value_err)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn studies(&self) -> Vec<Study> {
        self.inner.studies.iter().map(|s| Study { inner: s.clone() }).collect()
    }

    #[getter]
    fn n_total(&self) -> u64 {
        self.inner.n_total()
    }

    fn __len__(&self) -> usize {
        self.inner.studies.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({:?}, {} studies, {} participants)",
            self.inner.name,
            self.inner.studies.len(),
            self.inner.n_total()
        )
    }
}

/// Per-study effect on the pooling scale (log scale for ratio measures).
#[pyclass(module = "metabin_py", skip_from_py_object)]
#[derive(Clone)]
struct Effect {
    inner: StudyEffect,
}

#[pymethods]
impl Effect {
    #[getter]
    fn label(&self) -> &str {
        &self.inner.label
    }

    #[getter]
    fn measure(&self) -> String {
        self.inner.measure.to_string()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta_hat
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2_hat
    }

    /// Natural-scale estimate (ratio measures exponentiated).
    #[getter]
    fn point(&self) -> f64 {
        self.inner.point_reported()
    }

    #[getter]
    fn corrected(&self) -> bool {
        self.inner.corrected
    }

    fn __repr__(&self) -> String {
        format!(
            "Effect({:?}, {}, theta={}, sigma2={})",
            self.inner.label,
            self.inner.measure,
            format_sig(self.inner.theta_hat, 4),
            format_sig(self.inner.sigma2_hat, 4)
        )
    }
}

/// A pooled estimate with its confidence interval and study weights.
#[pyclass(module = "metabin_py", skip_from_py_object)]
#[derive(Clone)]
struct Estimate {
    inner: PooledEstimate,
}

#[pymethods]
impl Estimate {
    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn measure(&self) -> String {
        self.inner.measure.to_string()
    }

    #[getter]
    fn point(&self) -> f64 {
        self.inner.point
    }

    /// Variance on the scale named by `scale`, not necessarily the scale of
    /// `point`.
    #[getter]
    fn variance(&self) -> f64 {
        self.inner.variance
    }

    #[getter]
    fn ci_low(&self) -> f64 {
        self.inner.ci_low
    }

    #[getter]
    fn ci_high(&self) -> f64 {
        self.inner.ci_high
    }

    #[getter]
    fn ci(&self) -> (f64, f64) {
        (self.inner.ci_low, self.inner.ci_high)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn tau2(&self) -> Option<f64> {
        self.inner.tau2
    }

    #[getter]
    fn scale(&self) -> &'static str {
        match self.inner.scale {
            Scale::Natural => "natural",
            Scale::Log => "log",
        }
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.iter().map(|w| w.to_string()).collect()
    }

    fn __repr__(&self) -> String {
        let e = &self.inner;
        format!(
            "Estimate({}, {}, point={}, ci=[{}, {}])",
            e.method,
            e.measure,
            format_sig(e.point, 4),
            format_sig(e.ci_low, 4),
            format_sig(e.ci_high, 4)
        )
    }
}

#[pyfunction(name = "study_effects")]
#[pyo3(signature = (dataset, measure = "rd", correction = "haldane"))]
fn study_effects_py(dataset: &Dataset, measure: &str, correction: &str) -> PyResult<Vec<Effect>> {
    let effects = study_effects(&dataset.inner, parse_measure(measure)?, parse_correction(correction)?)
        .map_err(value_err)?;
    Ok(effects.into_iter().map(|inner| Effect { inner }).collect())
}

#[pyfunction(name = "pool_fixed")]
#[pyo3(signature = (dataset, measure = "rd", ci_level = 0.95, correction = "haldane"))]
fn pool_fixed_py(
    dataset: &Dataset,
    measure: &str,
    ci_level: f64,
    correction: &str,
) -> PyResult<Estimate> {
    let effects = study_effects(&dataset.inner, parse_measure(measure)?, parse_correction(correction)?)
        .map_err(value_err)?;
    Ok(Estimate { inner: pool_fixed(&effects, ci_level).map_err(value_err)? })
}

#[pyfunction(name = "pool_random")]
#[pyo3(signature = (dataset, measure = "rd", ci_level = 0.95, correction = "haldane", tau2 = "dl"))]
fn pool_random_py(
    dataset: &Dataset,
    measure: &str,
    ci_level: f64,
    correction: &str,
    tau2: &str,
) -> PyResult<Estimate> {
    let effects = study_effects(&dataset.inner, parse_measure(measure)?, parse_correction(correction)?)
        .map_err(value_err)?;
    let het = match tau2.parse::<Tau2Method>().map_err(PyValueError::new_err)? {
        Tau2Method::DerSimonianLaird => tau2_dersimonian_laird(&effects),
        Tau2Method::PauleMandel => tau2_paule_mandel(&effects),
    }
    .map_err(value_err)?;
    Ok(Estimate { inner: pool_random(&effects, &het, ci_level).map_err(value_err)? })
}

/// `weights` is `"uniform"`, `"pooled"`, `"custom:w1,w2,..."` or a list of
/// per-study shares summing to one.
#[pyfunction(name = "pool_causal")]
#[pyo3(signature = (dataset, measure = "rd", weights = None, ci_level = 0.95, correction = "haldane"))]
fn pool_causal_py(
    dataset: &Dataset,
    measure: &str,
    weights: Option<&Bound<'_, PyAny>>,
    ci_level: f64,
    correction: &str,
) -> PyResult<Estimate> {
    let scheme = match weights {
        None => WeightScheme::Pooled,
        Some(any) => {
            if let Ok(name) = any.extract::<String>() {
                name.parse().map_err(PyValueError::new_err)?
            } else if let Ok(values) = any.extract::<Vec<f64>>() {
                WeightScheme::Custom(values)
            } else {
                return Err(PyValueError::new_err(
                    "weights must be a scheme name or a list of floats",
                ));
            }
        }
    };
    let config = CausalConfig {
        ci_level,
        correction: parse_correction(correction)?,
        ..CausalConfig::default()
    };
    let estimate =
        pool_causal(&dataset.inner, parse_measure(measure)?, &scheme, &config).map_err(value_err)?;
    Ok(Estimate { inner: estimate })
}

/// Population share of `x = 1` at which a homogeneous population reproduces
/// the equal-weight pooled log risk ratio of populations `p1` and `p2`.
#[pyfunction(name = "solve_pstar")]
fn solve_pstar_py(p1: f64, p2: f64, mu11: f64, mu10: f64, mu01: f64, mu00: f64) -> PyResult<f64> {
    for (name, value) in [("p1", p1), ("p2", p2), ("mu11", mu11), ("mu10", mu10), ("mu01", mu01), ("mu00", mu00)]
    {
        if !(value > 0.0 && value < 1.0) {
            return Err(PyValueError::new_err(format!("{name} must be in (0, 1), got {value}")));
        }
    }
    solve_pstar(p1, p2, &MuTable::new(mu11, mu10, mu01, mu00)).map_err(value_err)
}

/// One draw from the two-population mixture generator as a two-study dataset.
#[pyfunction(name = "simulate_dataset")]
#[pyo3(signature = (seed = 0, n = 1000))]
fn simulate_dataset_py(seed: u64, n: u64) -> PyResult<Dataset> {
    let mut dgp = metabin::sim::MismatchDgp::default();
    dgp.n = n;
    Ok(Dataset { inner: simulate_meta(&dgp, seed).map_err(value_err)? })
}

/// Replicated mismatch experiment, reduced to median pooled points:
/// `{method: {measure: median}}`.
#[pyfunction(name = "mismatch_medians")]
#[pyo3(signature = (replications = 20, seed = 0, n = 1000))]
fn mismatch_medians_py<'py>(
    py: Python<'py>,
    replications: u32,
    seed: u64,
    n: u64,
) -> PyResult<Bound<'py, PyDict>> {
    if replications == 0 {
        return Err(PyValueError::new_err("replications must be positive"));
    }
    let mut config = MismatchConfig { replications, seed, ..MismatchConfig::default() };
    config.dgp.n = n;
    let report = run_mismatch(&config).map_err(value_err)?;

    let by_method = PyDict::new(py);
    for method in [PoolingMethod::FixedEffects, PoolingMethod::RandomEffects, PoolingMethod::Causal]
    {
        let by_measure = PyDict::new(py);
        for measure in [Measure::Rd, Measure::Rr, Measure::Or] {
            by_measure.set_item(measure.to_string(), report.median(method, measure))?;
        }
        by_method.set_item(method.to_string(), by_measure)?;
    }
    Ok(by_method)
}

/// Batch comparison of random-effects vs causal pooling over a directory of
/// CSV datasets. Returns the full report as plain dicts and lists.
#[pyfunction(name = "compare_directory")]
#[pyo3(signature = (dir, measures = None, ci_level = 0.95, correction = "haldane"))]
fn compare_directory_py<'py>(
    py: Python<'py>,
    dir: PathBuf,
    measures: Option<Vec<String>>,
    ci_level: f64,
    correction: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let measures = match measures {
        None => vec![Measure::Rd, Measure::Rr, Measure::Or],
        Some(names) => {
            names.iter().map(|n| parse_measure(n)).collect::<PyResult<Vec<_>>>()?
        }
    };
    let config = CompareConfig { ci_level, correction: parse_correction(correction)? };
    let report = compare_batch(&dir, &measures, &config).map_err(value_err)?;
    let value = serde_json::to_value(&report).map_err(value_err)?;
    json_to_py(py, &value)
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_values_cross_into_python_intact() {
        Python::attach(|py| {
            let value = serde_json::json!({
                "name": "demo",
                "count": 3,
                "ratio": 0.5,
                "flags": [true, false, null],
            });
            let obj = json_to_py(py, &value).unwrap();
            let dict = obj.cast::<PyDict>().unwrap();
            assert_eq!(
                dict.get_item("name").unwrap().unwrap().extract::<String>().unwrap(),
                "demo"
            );
            assert_eq!(dict.get_item("count").unwrap().unwrap().extract::<i64>().unwrap(), 3);
            assert_eq!(dict.get_item("ratio").unwrap().unwrap().extract::<f64>().unwrap(), 0.5);
            let flags = dict.get_item("flags").unwrap().unwrap();
            let flags = flags.cast::<PyList>().unwrap();
            assert_eq!(flags.len(), 3);
            assert!(flags.get_item(2).unwrap().is_none());
        });
    }

    #[test]
    fn out_of_range_shares_raise_value_error_not_panic() {
        Python::attach(|py| {
            let err = solve_pstar_py(1.5, 0.5, 0.5, 0.5, 0.9, 0.1).unwrap_err();
            assert!(err.is_instance_of::<PyValueError>(py));
            assert!(err.to_string().contains("p1"));
        });
    }
}

#[pymodule]
fn metabin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Study>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Effect>()?;
    m.add_class::<Estimate>()?;
    m.add_function(wrap_pyfunction!(study_effects_py, m)?)?;
    m.add_function(wrap_pyfunction!(pool_fixed_py, m)?)?;
    m.add_function(wrap_pyfunction!(pool_random_py, m)?)?;
    m.add_function(wrap_pyfunction!(pool_causal_py, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pstar_py, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dataset_py, m)?)?;
    m.add_function(wrap_pyfunction!(mismatch_medians_py, m)?)?;
    m.add_function(wrap_pyfunction!(compare_directory_py, m)?)?;
    Ok(())
}
