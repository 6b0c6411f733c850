//! Python bindings: entropy and agreement helpers, the forest, feature
//! assembly from log directories, and the evaluation pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use stresslens::aggregate::{self, AssembleConfig, FeatureMatrix};
use stresslens::entropy::{self, CountDistribution};
use stresslens::error::Error;
use stresslens::eval::{self, MultiConfusion, PipelineConfig, SplitScheme};
use stresslens::features::{self, FeatureConfig, LabelScheme};
use stresslens::forest::{self, ForestConfig};
use stresslens::ingest::{self, IngestOptions, LogPaths};
use stresslens::matrix::Matrix;
use stresslens::selection::RankConfig;
use stresslens::synth::{self, CohortConfig};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Serializes through JSON into plain Python containers.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(Matrix::from_rows(&rows))
}

fn label_scheme(s: &str) -> PyResult<LabelScheme> {
    match s {
        "binary" => Ok(LabelScheme::Binary),
        "ternary" => Ok(LabelScheme::Ternary),
        other => Err(PyValueError::new_err(format!("unknown label scheme {other:?}"))),
    }
}

fn split_scheme(s: &str) -> PyResult<SplitScheme> {
    s.parse().map_err(py_err)
}

/// Plug-in Shannon entropy of a count vector, in nats.
#[pyfunction]
fn shannon(counts: Vec<u64>) -> PyResult<f64> {
    entropy::shannon_ml(&CountDistribution::new(counts)).map_err(py_err)
}

/// Miller-Madow corrected entropy of a count vector, in nats.
#[pyfunction]
fn miller_madow(counts: Vec<u64>) -> PyResult<f64> {
    entropy::miller_madow(&CountDistribution::new(counts)).map_err(py_err)
}

/// Cohen's kappa of a square `counts[truth][predicted]` table; `None` when
/// chance agreement is 1.
#[pyfunction]
fn kappa(counts: Vec<Vec<u64>>) -> PyResult<Option<f64>> {
    if counts.iter().any(|r| r.len() != counts.len()) {
        return Err(PyValueError::new_err("confusion table must be square"));
    }
    Ok(eval::kappa(&counts))
}

/// Accuracy, kappa, confidence interval and per-class rates of a
/// confusion table over `classes`.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, classes: Vec<i32>, counts: Vec<Vec<u64>>) -> PyResult<Bound<'py, PyAny>> {
    if counts.len() != classes.len() || counts.iter().any(|r| r.len() != classes.len()) {
        return Err(PyValueError::new_err("confusion table must be square over the classes"));
    }
    let r = eval::metrics_multi(&MultiConfusion { classes, counts }).map_err(py_err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (score, scheme = "binary"))]
fn label_stress(score: u8, scheme: &str) -> PyResult<i8> {
    features::label_stress(score, label_scheme(scheme)?).map_err(py_err)
}

/// Writes a synthetic cohort's six logs into `out_dir` and returns the
/// manifest.
#[pyfunction]
#[pyo3(signature = (out_dir, n_subjects = 111, n_days = 180, seed = 2011))]
fn synth_cohort<'py>(
    py: Python<'py>,
    out_dir: PathBuf,
    n_subjects: usize,
    n_days: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = CohortConfig {
        n_subjects,
        n_days,
        seed,
        ..CohortConfig::default()
    };
    let ds = synth::generate(&cfg).map_err(py_err)?;
    let m = synth::emit_cohort(&cfg, &ds, &out_dir).map_err(py_err)?;
    to_py(py, &m)
}

/// Candidate feature matrix; missing cells are NaN.
#[pyclass(frozen)]
struct FeatureTable {
    inner: FeatureMatrix,
}

#[pymethods]
impl FeatureTable {
    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.columns.clone()
    }

    #[getter]
    fn subject_ids(&self) -> Vec<String> {
        self.inner.rows.iter().map(|r| r.subject_id.clone()).collect()
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.inner.rows.iter().map(|r| r.date.to_string()).collect()
    }

    #[getter]
    fn scores(&self) -> Vec<u8> {
        self.inner.rows.iter().map(|r| r.score).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.values.rows().map(<[f64]>::to_vec).collect()
    }

    #[pyo3(signature = (scheme = "binary"))]
    fn labels(&self, scheme: &str) -> PyResult<Vec<i8>> {
        Ok(self.inner.labels(label_scheme(scheme)?))
    }

    /// Subject-disjoint folds as `(train_rows, test_rows)` pairs.
    #[pyo3(signature = (scheme = "random", seed = 2011))]
    fn split(&self, scheme: &str, seed: u64) -> PyResult<Vec<(Vec<usize>, Vec<usize>)>> {
        let plan = eval::make_split(&self.inner.rows, split_scheme(scheme)?, seed).map_err(py_err)?;
        Ok(plan.folds.into_iter().map(|f| (f.train, f.test)).collect())
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(py_err)
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<FeatureTable> {
        FeatureMatrix::read_csv(&path)
            .map(|inner| FeatureTable { inner })
            .map_err(py_err)
    }
}

/// Parses the six logs in `logs_dir`, keeps subjects with enough
/// consecutive reports and assembles the candidate features.
#[pyfunction]
#[pyo3(signature = (logs_dir, min_consecutive_days = ingest::DEFAULT_MIN_CONSECUTIVE_DAYS))]
fn load_features(py: Python<'_>, logs_dir: PathBuf, min_consecutive_days: usize) -> PyResult<FeatureTable> {
    py.detach(|| {
        let (ds, _) = ingest::parse_logs(&LogPaths::in_dir(&logs_dir), &IngestOptions::default())?;
        let roster = ingest::validate_coverage(&ds, min_consecutive_days)?;
        let daily = features::extract_daily(&ds, &roster, &FeatureConfig::default());
        aggregate::assemble(&daily, &ds, &AssembleConfig::default()).map(|(inner, _)| FeatureTable { inner })
    })
    .map_err(py_err)
}

fn pipeline_config(k: usize, ntree: usize, labels: &str, families: Option<Vec<String>>) -> PyResult<PipelineConfig> {
    let families = families
        .map(|f| {
            f.iter()
                .map(|s| s.parse().map_err(py_err))
                .collect::<PyResult<Vec<_>>>()
        })
        .transpose()?;
    let forest = ForestConfig {
        n_trees: ntree,
        ..ForestConfig::default()
    };
    Ok(PipelineConfig {
        k,
        labels: label_scheme(labels)?,
        families,
        rank: RankConfig {
            forest: forest.clone(),
            permutation: false,
        },
        forest,
    })
}

/// Runs the pipeline. The random scheme scores its single held-out split;
/// kfold and loso return the cross-validation report.
#[pyfunction]
#[pyo3(signature = (table, scheme = "random", seed = 2011, k = 32, ntree = 112, labels = "binary", families = None))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    table: &FeatureTable,
    scheme: &str,
    seed: u64,
    k: usize,
    ntree: usize,
    labels: &str,
    families: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = pipeline_config(k, ntree, labels, families)?;
    let scheme = split_scheme(scheme)?;
    let m = &table.inner;
    let plan = eval::make_split(&m.rows, scheme, seed).map_err(py_err)?;
    if scheme == SplitScheme::Random {
        let f = &plan.folds[0];
        let r = py
            .detach(|| eval::run_pipeline(m, &f.train, &f.test, &cfg))
            .map_err(py_err)?;
        to_py(py, &r)
    } else {
        let r = py.detach(|| eval::cross_validate(m, &plan, &cfg)).map_err(py_err)?;
        to_py(py, &r)
    }
}

/// The eight-row family ablation on one split plan.
#[pyfunction]
#[pyo3(signature = (table, scheme = "random", seed = 2011, k = 32, ntree = 112))]
fn ablation<'py>(
    py: Python<'py>,
    table: &FeatureTable,
    scheme: &str,
    seed: u64,
    k: usize,
    ntree: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = pipeline_config(k, ntree, "binary", None)?;
    let m = &table.inner;
    let plan = eval::make_split(&m.rows, split_scheme(scheme)?, seed).map_err(py_err)?;
    let t = py.detach(|| eval::ablation_suite(m, &plan, &cfg)).map_err(py_err)?;
    to_py(py, &t)
}

/// Random forest classifier with out-of-bag estimates.
#[pyclass(frozen)]
struct Forest {
    inner: forest::Forest,
}

#[pymethods]
impl Forest {
    #[staticmethod]
    #[pyo3(signature = (x, y, n_trees = forest::DEFAULT_TREES, mtry = None, min_leaf = 5, seed = 42))]
    fn fit(
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        y: Vec<i32>,
        n_trees: usize,
        mtry: Option<usize>,
        min_leaf: usize,
        seed: u64,
    ) -> PyResult<Forest> {
        let x = matrix(x)?;
        let cfg = ForestConfig {
            n_trees,
            mtry,
            min_leaf,
            seed,
        };
        py.detach(|| forest::fit_forest(&x, &y, &cfg))
            .map(|inner| Forest { inner })
            .map_err(py_err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<i32>> {
        self.inner.predict_matrix(&matrix(x)?).map_err(py_err)
    }

    /// Vote shares per row, aligned with `classes`.
    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        matrix(x)?
            .rows()
            .map(|r| self.inner.predict(r).map(|p| p.fractions))
            .collect::<Result<_, _>>()
            .map_err(py_err)
    }

    #[getter]
    fn classes(&self) -> Vec<i32> {
        self.inner.classes.clone()
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees.len()
    }

    fn oob_accuracy(&self) -> Option<f64> {
        self.inner.oob_accuracy()
    }

    fn mean_decrease_gini(&self) -> Vec<f64> {
        self.inner.mean_decrease_gini()
    }

    /// Gini and permutation importances; `x`, `y` must be the training data.
    fn importances<'py>(&self, py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<i32>) -> PyResult<Bound<'py, PyAny>> {
        let x = matrix(x)?;
        let imp = py.detach(|| forest::importances(&self.inner, &x, &y)).map_err(py_err)?;
        to_py(py, &imp)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Forest> {
        forest::Forest::from_json(text)
            .map(|inner| Forest { inner })
            .map_err(py_err)
    }
}

#[pymodule]
fn stresslens_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(shannon, m)?)?;
    m.add_function(wrap_pyfunction!(miller_madow, m)?)?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(label_stress, m)?)?;
    m.add_function(wrap_pyfunction!(synth_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(load_features, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(ablation, m)?)?;
    m.add_class::<FeatureTable>()?;
    m.add_class::<Forest>()?;
    Ok(())
}
