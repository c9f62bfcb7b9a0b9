//! Python bindings: metrics, personalization-layer math, significance rules,
//! and the end-to-end synthetic detection experiment.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use ifedavg_core::data::{ShiftSpec, StandardizeMode, SyntheticConfig};
use ifedavg_core::error::Error;
use ifedavg_core::fed::{run_synthetic_detection, Algorithm, ExperimentConfig};
use ifedavg_core::interpret::{
    build_heatmap, flag_cells as core_flag_cells, flag_columns as core_flag_columns, Layer,
    LayerHeatmap,
};
use ifedavg_core::matrix::Matrix;
use ifedavg_core::nn::{
    affine_apply as core_affine_apply, lr_schedule as core_lr_schedule, personal_param_count,
    shared_param_count, FOutMode, WOut,
};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(err)
}

fn heatmap_from_values(values: Vec<Vec<f64>>) -> PyResult<LayerHeatmap> {
    let values = matrix_from_rows(values)?;
    Ok(LayerHeatmap {
        layer: Layer::BIn,
        clients: (0..values.rows()).map(|i| format!("client{i}")).collect(),
        columns: (0..values.cols()).map(|j| format!("f{j}")).collect(),
        values,
    })
}

/// Shared and personal parameter counts for a `(d, k)` model.
#[pyfunction]
#[pyo3(signature = (d, k, scalar_w_out = false))]
fn param_counts(d: usize, k: usize, scalar_w_out: bool) -> (usize, usize) {
    (shared_param_count(d, k), personal_param_count(d, k, scalar_w_out))
}

/// Stepped learning-rate schedule: fifty 0.9 decays over `total_rounds`.
#[pyfunction]
#[pyo3(signature = (round, base_lr = 0.002, total_rounds = 1000))]
fn lr_schedule(round: usize, base_lr: f64, total_rounds: usize) -> f64 {
    core_lr_schedule(round, base_lr, total_rounds)
}

/// Element-wise affine map `(x + b) * w`; `w` may be a scalar or a vector.
#[pyfunction]
fn affine_apply(b: Vec<f64>, w: Bound<'_, PyAny>, x: Vec<f64>) -> PyResult<Vec<f64>> {
    let w = if let Ok(scalar) = w.extract::<f64>() {
        WOut::Scalar(scalar)
    } else {
        WOut::Vector(w.extract::<Vec<f64>>()?)
    };
    core_affine_apply(&b, &w, &x).map_err(err)
}

/// Support-weighted F1.
#[pyfunction]
fn f1_weighted(y_true: Vec<u32>, y_pred: Vec<u32>) -> PyResult<f64> {
    ifedavg_core::metrics::f1_weighted(&y_true, &y_pred).map_err(err)
}

/// Mean per-class recall.
#[pyfunction]
fn balanced_accuracy(y_true: Vec<u32>, y_pred: Vec<u32>) -> PyResult<f64> {
    ifedavg_core::metrics::balanced_accuracy(&y_true, &y_pred).map_err(err)
}

/// One-vs-one ROC AUC over a row-per-sample score matrix.
#[pyfunction]
fn roc_auc_ovo(y_true: Vec<u32>, scores: Vec<Vec<f64>>) -> PyResult<f64> {
    let scores = matrix_from_rows(scores)?;
    ifedavg_core::metrics::roc_auc_ovo(&y_true, &scores).map_err(err)
}

/// Inverse-prevalence class weights rescaled to sum to `k`.
#[pyfunction]
fn class_weights(labels: Vec<u32>, k: usize) -> PyResult<Vec<f64>> {
    ifedavg_core::data::class_weights(&labels, k).map_err(err)
}

/// Deterministic train/test split (`max(ceil(0.33 n), 100)` capped at n-1).
#[pyfunction]
fn split_train_test(n: usize, seed: u64, client_index: usize) -> PyResult<(Vec<usize>, Vec<usize>)> {
    ifedavg_core::data::split_train_test(n, seed, client_index).map_err(err)
}

/// Cell-level significance flags (`|v - mean| > threshold * SD` per column).
#[pyfunction]
#[pyo3(signature = (values, threshold = 2.0))]
fn flag_cells(values: Vec<Vec<f64>>, threshold: f64) -> PyResult<Vec<Vec<bool>>> {
    let hm = heatmap_from_values(values)?;
    let flags = core_flag_cells(&hm, threshold).map_err(err)?;
    let n = hm.values.cols();
    Ok(flags.chunks(n).map(<[bool]>::to_vec).collect())
}

/// Column-level significance flags (per-feature SD vs the SD of SDs).
#[pyfunction]
#[pyo3(signature = (values, threshold = 2.0))]
fn flag_columns(values: Vec<Vec<f64>>, threshold: f64) -> PyResult<Vec<bool>> {
    let hm = heatmap_from_values(values)?;
    core_flag_columns(&hm, threshold).map_err(err)
}

/// Runs the synthetic detection experiment end to end and returns, per
/// injected mutation, the per-seed verdicts plus the learned heatmaps.
#[pyfunction]
#[pyo3(signature = (
    clients = 8, samples = 2000, features = 10, rounds = 200, seeds = None,
    inject = None, fout = "none", weights = None, binary_features = None,
    threshold = 2.0, batch_size = 32, threads = 0
))]
#[allow(clippy::too_many_arguments)]
fn run_synthetic(
    py: Python<'_>,
    clients: usize,
    samples: usize,
    features: usize,
    rounds: usize,
    seeds: Option<Vec<u64>>,
    inject: Option<&str>,
    fout: &str,
    weights: Option<Vec<f64>>,
    binary_features: Option<Vec<usize>>,
    threshold: f64,
    batch_size: usize,
    threads: usize,
) -> PyResult<Py<PyDict>> {
    let mut synth = SyntheticConfig::new(clients, samples, features);
    synth.logistic_weights = weights;
    synth.binary_features = binary_features.unwrap_or_default();

    let mut config = ExperimentConfig {
        algorithm: Algorithm::IFedAvg,
        rounds,
        batch_size,
        threads,
        standardize: StandardizeMode::PerClient,
        fout: FOutMode::parse(fout).map_err(err)?,
        ..ExperimentConfig::default()
    };
    if let Some(s) = seeds {
        config.seeds = s;
    }
    if let Some(spec) = inject {
        config.shift = Some(ShiftSpec::parse(spec).map_err(err)?);
    }

    let outcome = py
        .allow_threads(|| run_synthetic_detection(&synth, &config, threshold))
        .map_err(err)?;

    let result = PyDict::new(py);
    let mutations = PyList::empty(py);
    for report in &outcome.reports {
        let entry = PyDict::new(py);
        entry.set_item("mutation", report.mutation.describe())?;
        entry.set_item("layer", report.verdicts.first().map(|v| v.layer.name()))?;
        entry.set_item("detected_seeds", report.n_flagged())?;
        entry.set_item("total_seeds", report.verdicts.len())?;
        let verdicts = PyList::empty(py);
        for v in &report.verdicts {
            let d = PyDict::new(py);
            d.set_item("seed", v.seed)?;
            d.set_item("flagged", v.flagged)?;
            d.set_item("value", v.value)?;
            d.set_item("extra_flips", v.extra_flips.clone())?;
            verdicts.append(d)?;
        }
        entry.set_item("verdicts", verdicts)?;
        mutations.append(entry)?;
    }
    result.set_item("mutations", mutations)?;

    let runs = PyList::empty(py);
    for run in &outcome.artifacts.runs {
        let d = PyDict::new(py);
        d.set_item("seed", run.seed)?;
        let scores = PyList::empty(py);
        for s in &run.scores {
            let sd = PyDict::new(py);
            sd.set_item("client", s.client.clone())?;
            sd.set_item("f1", s.f1)?;
            sd.set_item("roc_auc", s.roc_auc)?;
            sd.set_item("balanced_acc", s.balanced_acc)?;
            scores.append(sd)?;
        }
        d.set_item("scores", scores)?;
        for layer in [Layer::BIn, Layer::WIn, Layer::BOut, Layer::WOut] {
            let trained = run.personal.first().is_some_and(|(_, p)| match layer {
                Layer::BIn => p.train_b_in,
                Layer::WIn => p.train_w_in,
                Layer::BOut => p.train_b_out,
                Layer::WOut => p.train_w_out,
            });
            if !trained {
                continue;
            }
            let hm = build_heatmap(&run.personal, layer, &outcome.artifacts.feature_names)
                .map_err(err)?;
            let rows: Vec<Vec<f64>> = (0..hm.values.rows())
                .map(|i| hm.values.row(i).to_vec())
                .collect();
            d.set_item(layer.name(), rows)?;
        }
        runs.append(d)?;
    }
    result.set_item("runs", runs)?;
    result.set_item("feature_names", outcome.artifacts.feature_names.clone())?;
    result.set_item("clients", outcome.artifacts.client_labels.clone())?;
    Ok(result.into())
}

#[pymodule]
fn ifedavg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(param_counts, m)?)?;
    m.add_function(wrap_pyfunction!(lr_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(affine_apply, m)?)?;
    m.add_function(wrap_pyfunction!(f1_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc_ovo, m)?)?;
    m.add_function(wrap_pyfunction!(class_weights, m)?)?;
    m.add_function(wrap_pyfunction!(split_train_test, m)?)?;
    m.add_function(wrap_pyfunction!(flag_cells, m)?)?;
    m.add_function(wrap_pyfunction!(flag_columns, m)?)?;
    m.add_function(wrap_pyfunction!(run_synthetic, m)?)?;
    Ok(())
}
