//! Python bindings: synthetic cohort generation, event-log parsing,
//! feature building, cross-validation, and rule-tree export, mirroring
//! the `retain` CLI surface.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::str::FromStr;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use retain_core::evaluation::{cross_validate as cv, make_folds, robustness_study};
use retain_core::featurize::{
    build_rows, encode_all, write_features_csv, EvalWindow, FeatureVector, FeatureWindow,
};
use retain_core::learners::rule_tree::{export_rules, train_rule_tree, RuleDocument};
use retain_core::learners::{ModelEnvelope, ModelSpec};
use retain_core::synthcohort::{calibrate, generate, GeneratorConfig};
use retain_core::telemetry::{apply_cohort_filter, parse_events_jsonl, ParseOptions};
use retain_core::RetainError;

fn err(e: RetainError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn window_of(s: &str) -> PyResult<FeatureWindow> {
    FeatureWindow::from_str(s).map_err(err)
}

fn eval_of(s: &str) -> PyResult<EvalWindow> {
    EvalWindow::from_str(s).map_err(err)
}

fn spec_of(name: &str) -> PyResult<ModelSpec> {
    match name {
        "heuristic" => Ok(ModelSpec::default_heuristic()),
        "lr" => Ok(ModelSpec::default_lr()),
        "svm" => Ok(ModelSpec::default_svm()),
        "rf" => Ok(ModelSpec::default_rf()),
        "ensemble" => Ok(ModelSpec::default_ensemble()),
        other => Err(PyValueError::new_err(format!("unknown model {other:?}"))),
    }
}

/// Validated telemetry log.
#[pyclass(name = "EventLog", skip_from_py_object)]
#[derive(Clone)]
struct PyEventLog {
    inner: retain_core::telemetry::EventLog,
}

#[pymethods]
impl PyEventLog {
    #[getter]
    fn n_installs(&self) -> usize {
        self.inner.installs.len()
    }

    #[getter]
    fn n_sessions(&self) -> usize {
        self.inner.sessions.len()
    }

    #[getter]
    fn n_rounds(&self) -> usize {
        self.inner.rounds.len()
    }

    #[getter]
    fn n_rejected(&self) -> usize {
        self.inner.rejected.len()
    }

    fn player_ids(&self) -> Vec<String> {
        self.inner.player_ids().iter().map(|s| s.to_string()).collect()
    }

    /// Players with a first session within seven days of install and at
    /// least one round in it.
    fn cohort_filter(&self) -> PyEventLog {
        PyEventLog { inner: apply_cohort_filter(&self.inner) }
    }
}

/// Feature rows for one observation window.
#[pyclass(name = "Features", skip_from_py_object)]
#[derive(Clone)]
struct PyFeatures {
    rows: Vec<FeatureVector>,
    window: FeatureWindow,
    eval: EvalWindow,
}

#[pymethods]
impl PyFeatures {
    fn __len__(&self) -> usize {
        self.rows.len()
    }

    #[getter]
    fn window(&self) -> String {
        self.window.label()
    }

    fn player_ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.player_id.clone()).collect()
    }

    fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.retained_short).collect()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_features_csv(&self.rows, &mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Generate a synthetic telemetry cohort; returns (events_jsonl,
/// truth_jsonl).
#[pyfunction]
#[pyo3(signature = (players, seed, corruption_rate=0.0, calibrated=false))]
fn synth(
    players: usize,
    seed: u64,
    corruption_rate: f64,
    calibrated: bool,
) -> PyResult<(String, String)> {
    let mut cfg = GeneratorConfig {
        n_players: players,
        corruption_rate,
        ..GeneratorConfig::default()
    };
    if calibrated {
        cfg = calibrate(&cfg).map_err(err)?;
    }
    let out = generate(&cfg, seed).map_err(err)?;
    Ok((out.events, out.truth))
}

/// Parse and validate a JSONL event stream.
#[pyfunction]
fn parse_events(text: &str) -> PyResult<PyEventLog> {
    let log =
        parse_events_jsonl(BufReader::new(text.as_bytes()), ParseOptions::default()).map_err(err)?;
    Ok(PyEventLog { inner: log })
}

/// Windowed features plus retention labels for every player in the log.
#[pyfunction]
#[pyo3(signature = (log, window="day", eval_window="8:14", long_window="60:67"))]
fn featurize(
    log: &PyEventLog,
    window: &str,
    eval_window: &str,
    long_window: &str,
) -> PyResult<PyFeatures> {
    let w = window_of(window)?;
    let e = eval_of(eval_window)?;
    let l = eval_of(long_window)?;
    Ok(PyFeatures { rows: build_rows(&log.inner, w, e, l), window: w, eval: e })
}

/// Cross-validate model families; returns the full outcome as JSON.
#[pyfunction]
#[pyo3(signature = (features, models, folds=10, seed=0))]
fn cross_validate(
    features: &PyFeatures,
    models: Vec<String>,
    folds: usize,
    seed: u64,
) -> PyResult<String> {
    let specs: Vec<ModelSpec> =
        models.iter().map(|m| spec_of(m)).collect::<PyResult<_>>()?;
    let players: Vec<String> = features.rows.iter().map(|r| r.player_id.clone()).collect();
    let plan = make_folds(&players, folds, seed).map_err(err)?;
    let outcomes =
        cv(&features.rows, features.window, features.eval, &specs, &plan, seed).map_err(err)?;
    serde_json::to_string(&outcomes).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Train one model on all rows; returns the portable JSON envelope.
#[pyfunction]
#[pyo3(signature = (features, model="rf", seed=0))]
fn train(features: &PyFeatures, model: &str, seed: u64) -> PyResult<String> {
    let spec = spec_of(model)?;
    let data = encode_all(features.window, features.eval, &features.rows).map_err(err)?;
    let trained = spec.train(&data, seed).map_err(err)?;
    Ok(ModelEnvelope::new(trained, &data).to_json())
}

/// Train the small heuristic tree; returns the ordered rule document as
/// JSON.
#[pyfunction]
#[pyo3(signature = (features, max_rules=4, min_leaf=50))]
fn train_rules(features: &PyFeatures, max_rules: usize, min_leaf: usize) -> PyResult<String> {
    let data = encode_all(features.window, features.eval, &features.rows).map_err(err)?;
    let tree = train_rule_tree(&data, max_rules, min_leaf).map_err(err)?;
    Ok(export_rules(&tree).to_json())
}

/// Classify every row with an exported rule document.
#[pyfunction]
fn classify_rules(rules_json: &str, features: &PyFeatures) -> PyResult<Vec<u8>> {
    let doc = RuleDocument::from_json(rules_json).map_err(err)?;
    let data = encode_all(features.window, features.eval, &features.rows).map_err(err)?;
    let mut out = Vec::with_capacity(data.x_raw.len());
    for raw in &data.x_raw {
        let (class, _) = doc.classify(&data.columns, raw).map_err(err)?;
        out.push(class);
    }
    Ok(out)
}

/// Chunked-training nearest-neighbor perturbation study; returns the
/// per-level statistics as JSON.
#[pyfunction]
#[pyo3(signature = (features, chunks=11, max_level=9, max_rules=4, min_leaf=50, seed=0))]
fn robustness(
    features: &PyFeatures,
    chunks: usize,
    max_level: usize,
    max_rules: usize,
    min_leaf: usize,
    seed: u64,
) -> PyResult<String> {
    let data = encode_all(features.window, features.eval, &features.rows).map_err(err)?;
    let report =
        robustness_study(&data, max_rules, min_leaf, chunks, max_level, seed).map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Long-term retention cross-tab against short-term predictions
/// (player_id -> 0/1).
#[pyfunction]
#[pyo3(signature = (log, predicted, eval_window="8:14", long_window="60:67"))]
fn longterm(
    log: &PyEventLog,
    predicted: BTreeMap<String, u8>,
    eval_window: &str,
    long_window: &str,
) -> PyResult<String> {
    let report = retain_core::evaluation::longterm_analysis(
        &log.inner,
        &predicted,
        eval_of(eval_window)?,
        eval_of(long_window)?,
    )
    .map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn retain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEventLog>()?;
    m.add_class::<PyFeatures>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(parse_events, m)?)?;
    m.add_function(wrap_pyfunction!(featurize, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(train_rules, m)?)?;
    m.add_function(wrap_pyfunction!(classify_rules, m)?)?;
    m.add_function(wrap_pyfunction!(robustness, m)?)?;
    m.add_function(wrap_pyfunction!(longterm, m)?)?;
    Ok(())
}
