//! Python bindings. Waveforms cross the boundary as lists of rows (one spike
//! per row), traces as flat lists of samples.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use spikesort::datagen::{self, Difficulty, NoiseModel, SynthSpec};
use spikesort::estimator::{self, EstimateOptions, GapRule, IndexKind};
use spikesort::signal::{self, FilterSpec, Trace};
use spikesort::{evaluation, solver, Ridge, SolverOptions, SpikeMatrix};

fn py_err(e: spikesort::Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn spikes_from(rows: &[Vec<f64>]) -> PyResult<SpikeMatrix> {
    SpikeMatrix::from_rows(rows).map_err(py_err)
}

fn index_kind(name: &str) -> PyResult<IndexKind> {
    match name {
        "ch" => Ok(IndexKind::CalinskiHarabasz),
        "gap" => Ok(IndexKind::Gap),
        other => Err(PyValueError::new_err(format!(
            "unknown index {other:?}, expected \"ch\" or \"gap\""
        ))),
    }
}

/// Labelled synthetic spike set.
#[pyclass(get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    spikes: Vec<Vec<f64>>,
    labels: Vec<usize>,
    times: Vec<usize>,
    overlapping: Vec<bool>,
}

#[pymethods]
impl Dataset {
    fn __len__(&self) -> usize {
        self.labels.len()
    }

    fn __repr__(&self) -> String {
        let d = self.spikes.first().map_or(0, Vec::len);
        format!("Dataset(n={}, d={d})", self.labels.len())
    }
}

#[pyclass(get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct SortResult {
    labels: Vec<usize>,
    c: usize,
    /// Projection as d rows of m values.
    projection: Vec<Vec<f64>>,
    objective_history: Vec<f64>,
    iterations: usize,
    converged: bool,
    runtime_ms: f64,
    monotonicity_violations: Vec<usize>,
    max_ridge: f64,
}

#[pymethods]
impl SortResult {
    fn __repr__(&self) -> String {
        format!(
            "SortResult(c={}, iterations={}, converged={}, objective={:.6})",
            self.c,
            self.iterations,
            self.converged,
            self.objective_history.last().copied().unwrap_or(f64::NAN)
        )
    }
}

impl From<solver::SortResult> for SortResult {
    fn from(r: solver::SortResult) -> Self {
        let w = r.projection.matrix();
        SortResult {
            labels: r.partition.labels().to_vec(),
            c: r.partition.c(),
            projection: w.row_iter().map(|row| row.iter().copied().collect()).collect(),
            objective_history: r.objective_history,
            iterations: r.iterations,
            converged: r.converged,
            runtime_ms: r.runtime_ms,
            monotonicity_violations: r.monotonicity_violations,
            max_ridge: r.max_ridge,
        }
    }
}

#[pyclass(get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct EstimationReport {
    candidates: Vec<usize>,
    scores: Vec<f64>,
    degenerate: Vec<bool>,
    chosen: usize,
    index: String,
    m0: usize,
}

#[pymethods]
impl EstimationReport {
    fn __repr__(&self) -> String {
        format!("EstimationReport(index={}, chosen={})", self.index, self.chosen)
    }
}

impl From<estimator::EstimationReport> for EstimationReport {
    fn from(r: estimator::EstimationReport) -> Self {
        EstimationReport {
            index: match r.index_kind {
                IndexKind::CalinskiHarabasz => "ch".into(),
                IndexKind::Gap => "gap".into(),
            },
            candidates: r.candidates,
            scores: r.scores,
            degenerate: r.degenerate,
            chosen: r.chosen,
            m0: r.m0,
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (units=3, n=300, noise=0.1, d=64, difficult=false, overlap=0.0, ar=None, seed=42))]
fn synth(
    units: usize,
    n: usize,
    noise: f64,
    d: usize,
    difficult: bool,
    overlap: f64,
    ar: Option<(f64, f64)>,
    seed: u64,
) -> PyResult<Dataset> {
    let spec = SynthSpec {
        d,
        n_units: units,
        n_spikes: n,
        noise_level: noise,
        difficulty: if difficult {
            Difficulty::Difficult
        } else {
            Difficulty::Easy
        },
        overlap_fraction: overlap,
        seed,
        noise_model: ar.map_or(NoiseModel::White, |(a1, a2)| NoiseModel::Ar2 { a1, a2 }),
        ..SynthSpec::default()
    };
    let ds = datagen::synthesize_spikes(&spec).map_err(py_err)?;
    Ok(Dataset {
        labels: ds.require_labels().map_err(py_err)?.to_vec(),
        overlapping: ds.overlap_flags(),
        times: ds.times().to_vec(),
        spikes: ds.spikes.rows(),
    })
}

/// Joint projection and clustering with `c` units.
#[pyfunction]
#[pyo3(signature = (spikes, c, seed=42, restarts=10, max_outer=100, ridge=None))]
fn fit(
    py: Python<'_>,
    spikes: Vec<Vec<f64>>,
    c: usize,
    seed: u64,
    restarts: usize,
    max_outer: usize,
    ridge: Option<f64>,
) -> PyResult<SortResult> {
    let x = spikes_from(&spikes)?;
    let opts = SolverOptions {
        restarts,
        max_outer,
        ridge: ridge.map_or(Ridge::Auto, Ridge::Fixed),
        ..SolverOptions::new(c).with_seed(seed)
    };
    py.detach(|| solver::fit(&x, &opts)).map(Into::into).map_err(py_err)
}

/// PCA to `c - 1` dimensions followed by K-means.
#[pyfunction]
#[pyo3(signature = (spikes, c, seed=42, restarts=10))]
fn baseline(py: Python<'_>, spikes: Vec<Vec<f64>>, c: usize, seed: u64, restarts: usize) -> PyResult<SortResult> {
    let x = spikes_from(&spikes)?;
    let opts = SolverOptions::new(c).with_seed(seed).with_restarts(restarts);
    let m = c.saturating_sub(1).max(1);
    py.detach(|| solver::sequential_baseline(&x, m, &opts))
        .map(Into::into)
        .map_err(py_err)
}

fn estimate_options(
    index: &str,
    c_range: Option<(usize, usize)>,
    m0: usize,
    gap_argmax: bool,
    seed: u64,
) -> PyResult<EstimateOptions> {
    Ok(EstimateOptions {
        m0,
        c_range,
        index: index_kind(index)?,
        gap_rule: if gap_argmax { GapRule::Argmax } else { GapRule::FirstK },
        seed,
        ..EstimateOptions::default()
    })
}

/// Estimated number of units.
#[pyfunction]
#[pyo3(signature = (spikes, index="ch", c_range=None, m0=3, gap_argmax=false, seed=42))]
fn estimate(
    py: Python<'_>,
    spikes: Vec<Vec<f64>>,
    index: &str,
    c_range: Option<(usize, usize)>,
    m0: usize,
    gap_argmax: bool,
    seed: u64,
) -> PyResult<EstimationReport> {
    let x = spikes_from(&spikes)?;
    let opts = estimate_options(index, c_range, m0, gap_argmax, seed)?;
    py.detach(|| estimator::estimate_c(&x, &opts))
        .map(Into::into)
        .map_err(py_err)
}

/// Estimate the number of units, then fit.
#[pyfunction]
#[pyo3(signature = (spikes, index="ch", c_range=None, m0=3, seed=42, restarts=10))]
fn auto_sort(
    py: Python<'_>,
    spikes: Vec<Vec<f64>>,
    index: &str,
    c_range: Option<(usize, usize)>,
    m0: usize,
    seed: u64,
    restarts: usize,
) -> PyResult<(SortResult, EstimationReport)> {
    let x = spikes_from(&spikes)?;
    let est = estimate_options(index, c_range, m0, false, seed)?;
    let solver = SolverOptions::new(2).with_seed(seed).with_restarts(restarts);
    let (r, report) = py.detach(|| estimator::auto_sort(&x, &est, &solver)).map_err(py_err)?;
    Ok((r.into(), report.into()))
}

/// Percentage of labels correct under the best cluster-to-class matching.
#[pyfunction]
fn accuracy(truth: Vec<usize>, pred: Vec<usize>) -> PyResult<f64> {
    evaluation::accuracy_labels(&truth, &pred).map_err(py_err)
}

/// Zero-phase Butterworth filter. `low=None` gives a high-pass at `high`.
#[pyfunction]
#[pyo3(signature = (samples, fs, low=Some(300.0), high=6000.0, order=4))]
fn filter(py: Python<'_>, samples: Vec<f64>, fs: f64, low: Option<f64>, high: f64, order: usize) -> PyResult<Vec<f64>> {
    let spec = match low {
        Some(low) => FilterSpec::bandpass(low, high, order),
        None => FilterSpec::highpass(high, order),
    };
    py.detach(|| {
        let trace = Trace::new(samples, fs)?;
        let sos = signal::design_filter(&spec, fs)?;
        signal::filtfilt(&sos, &trace)
    })
    .map(|t| t.samples)
    .map_err(py_err)
}

/// Sample indices of threshold crossings (peak of each event).
#[pyfunction]
#[pyo3(signature = (samples, fs, k_sigma=signal::DEFAULT_K_SIGMA, refractory_ms=signal::DEFAULT_REFRACTORY_MS))]
fn detect(samples: Vec<f64>, fs: f64, k_sigma: f64, refractory_ms: f64) -> PyResult<Vec<usize>> {
    let trace = Trace::new(samples, fs).map_err(py_err)?;
    let refractory = trace.ms_to_samples(refractory_ms);
    Ok(signal::detect_spikes(&trace, k_sigma, refractory))
}

/// Waveforms cut around `times`; returns the rows and the times kept.
#[pyfunction]
#[pyo3(signature = (samples, fs, times, window=signal::DEFAULT_WINDOW, align=signal::DEFAULT_ALIGN_OFFSET))]
fn extract(
    samples: Vec<f64>,
    fs: f64,
    times: Vec<usize>,
    window: usize,
    align: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let trace = Trace::new(samples, fs).map_err(py_err)?;
    let ex = signal::extract_waveforms(&trace, &times, window, align).map_err(py_err)?;
    Ok((ex.spikes.rows(), ex.spikes.times().to_vec()))
}

#[pymodule]
pub fn spikesort_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<SortResult>()?;
    m.add_class::<EstimationReport>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(auto_sort, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(filter, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    Ok(())
}
