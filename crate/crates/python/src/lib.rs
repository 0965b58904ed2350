//! Python bindings. Matrices cross the boundary as lists of rows; structured
//! results arrive as plain dicts with the same keys as the CLI's JSON.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use selfsim::boxcover::{self, SimpleGraph};
use selfsim::featnet::{self, to_feature_matrix, FeatureMatrix};
use selfsim::fractal::{self, CurveMode, CurveReport, NormalizerMode, ThresholdGrid};
use selfsim::invariance::{self, HillCount, Reducer};
use selfsim::trainer::{self, Activation, TrainConfig};

fn to_py(e: selfsim::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = selfsim::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err("expected a non-empty list of non-empty rows".into());
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(format!("row {i} has {} values, row 0 has {cols}", rows[i].len()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    matrix_from_rows(&rows).map_err(PyValueError::new_err)
}

fn features(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    to_feature_matrix(&matrix(rows)?).map_err(to_py)
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Pairwise channel distances of one layer.
#[pyclass(name = "DistanceMatrix", module = "selfsim", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDistanceMatrix {
    inner: featnet::DistanceMatrix,
}

#[pymethods]
impl PyDistanceMatrix {
    /// From a `B x D` activation table (one row per sample).
    #[staticmethod]
    fn from_activations(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyDistanceMatrix { inner: featnet::distance_matrix(&features(rows)?) })
    }

    /// From a precomputed symmetric `D x D` matrix.
    #[staticmethod]
    fn from_matrix(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyDistanceMatrix { inner: featnet::DistanceMatrix::from_matrix(matrix(rows)?).map_err(to_py)? })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        rows_from_matrix(self.inner.matrix())
    }

    fn __len__(&self) -> usize {
        self.inner.d()
    }

    fn __repr__(&self) -> String {
        format!("DistanceMatrix(d={})", self.inner.d())
    }
}

fn curve(
    c: &PyDistanceMatrix,
    mode: &str,
    k: f64,
    grid_count: usize,
    tz: Option<f64>,
    tv: Option<f64>,
) -> PyResult<fractal::BoxCurve> {
    let grid = match (tz, tv) {
        (None, None) => ThresholdGrid::from_distances(&c.inner, grid_count),
        _ => ThresholdGrid::new(tz.unwrap_or(0.0), tv.unwrap_or(c.inner.max_off_diagonal()), grid_count),
    }
    .map_err(to_py)?;
    let mode = match mode {
        "hard" => CurveMode::Hard,
        "smooth" => CurveMode::smooth(k).map_err(to_py)?,
        other => return Err(PyValueError::new_err(format!("mode must be 'hard' or 'smooth', got '{other}'"))),
    };
    fractal::box_curve(&c.inner, &grid, mode).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (c, mode="hard", k=fractal::DEFAULT_K, grid_count=fractal::DEFAULT_GRID_COUNT, normalizer="bounded", tz=None, tv=None))]
fn ss_rate(
    c: &PyDistanceMatrix,
    mode: &str,
    k: f64,
    grid_count: usize,
    normalizer: &str,
    tz: Option<f64>,
    tv: Option<f64>,
) -> PyResult<f64> {
    let curve = curve(c, mode, k, grid_count, tz, tv)?;
    Ok(fractal::ss_rate(&curve, parse::<NormalizerMode>(normalizer)?).map_err(to_py)?.value)
}

/// Box-count curve report: thetas, p, n, d_B, ss_rate.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (c, mode="hard", k=fractal::DEFAULT_K, grid_count=fractal::DEFAULT_GRID_COUNT, normalizer="bounded", tz=None, tv=None))]
fn box_curve<'py>(
    py: Python<'py>,
    c: &PyDistanceMatrix,
    mode: &str,
    k: f64,
    grid_count: usize,
    normalizer: &str,
    tz: Option<f64>,
    tv: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let curve = curve(c, mode, k, grid_count, tz, tv)?;
    to_dict(py, &CurveReport::new(&curve, parse(normalizer)?).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (values, hill="retained"))]
fn power_law_mle(values: Vec<f64>, hill: &str) -> PyResult<f64> {
    let s = invariance::Spectrum::from_values(&values).map_err(to_py)?;
    invariance::power_law_mle(&s, parse::<HillCount>(hill)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (layers, hill="retained"))]
fn stat_invariance<'py>(py: Python<'py>, layers: Vec<Vec<Vec<f64>>>, hill: &str) -> PyResult<Bound<'py, PyAny>> {
    let layers = layers.into_iter().map(features).collect::<PyResult<Vec<_>>>()?;
    to_dict(py, &invariance::stat_invariance(&layers, parse(hill)?).map_err(to_py)?)
}

#[pyfunction]
#[pyo3(signature = (layers, target_dim=2, reducer="pca"))]
fn geom_invariance<'py>(
    py: Python<'py>,
    layers: Vec<Vec<Vec<f64>>>,
    target_dim: usize,
    reducer: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let layers = layers.into_iter().map(features).collect::<PyResult<Vec<_>>>()?;
    to_dict(py, &invariance::geom_invariance(&layers, target_dim, parse::<Reducer>(reducer)?).map_err(to_py)?)
}

/// Correlation dimension of a point cloud given as rows.
#[pyfunction]
fn corr_dim(points: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(invariance::corr_dim(&matrix(points)?).map_err(to_py)?.d_corr)
}

/// Classical MDS: `(coords, stress)`.
#[pyfunction]
#[pyo3(signature = (c, dim=2))]
fn classical_mds(c: &PyDistanceMatrix, dim: usize) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let e = selfsim::embed::classical_mds(&c.inner, dim).map_err(to_py)?;
    Ok((rows_from_matrix(&e.coords), e.stress))
}

/// Undirected simple graph for classical box covering.
#[pyclass(name = "Graph", module = "selfsim")]
pub struct PyGraph {
    inner: SimpleGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(PyGraph { inner: SimpleGraph::new(n, &edges).map_err(to_py)? })
    }

    #[staticmethod]
    fn ring(n: usize) -> PyResult<Self> {
        if n < 3 {
            return Err(PyValueError::new_err(format!("a ring needs at least 3 nodes, got {n}")));
        }
        Ok(PyGraph { inner: SimpleGraph::ring(n) })
    }

    #[staticmethod]
    fn path(n: usize) -> Self {
        PyGraph { inner: SimpleGraph::path(n) }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    #[pyo3(signature = (theta, seed=0))]
    fn greedy_cover(&self, theta: usize, seed: u64) -> usize {
        boxcover::greedy_box_cover(&self.inner, theta, seed).count
    }

    #[pyo3(signature = (theta, seed=0))]
    fn burning_cover(&self, theta: usize, seed: u64) -> usize {
        boxcover::burning_box_cover(&self.inner, theta, seed).count
    }

    fn exact_cover(&self, theta: usize) -> PyResult<usize> {
        boxcover::exact_min_cover(&self.inner, theta).map_err(to_py)
    }
}

/// Fully connected classifier.
#[pyclass(name = "Mlp", module = "selfsim", skip_from_py_object)]
#[derive(Clone)]
pub struct PyMlp {
    inner: trainer::Mlp,
}

#[pymethods]
impl PyMlp {
    #[new]
    #[pyo3(signature = (widths, activation="relu", seed=0))]
    fn new(widths: Vec<usize>, activation: &str, seed: u64) -> PyResult<Self> {
        Ok(PyMlp { inner: trainer::Mlp::new(&widths, parse::<Activation>(activation)?, seed).map_err(to_py)? })
    }

    #[getter]
    fn widths(&self) -> Vec<usize> {
        self.inner.widths().to_vec()
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params()
    }

    fn forward(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows_from_matrix(&self.inner.forward(&matrix(x)?).map_err(to_py)?.logits))
    }

    fn accuracy(&self, x: Vec<Vec<f64>>, y: Vec<usize>) -> PyResult<f64> {
        let logits = self.inner.forward(&matrix(x)?).map_err(to_py)?.logits;
        Ok(trainer::accuracy(&logits, &y))
    }

    /// Hard SS_rate of each hidden layer on `x`.
    #[pyo3(signature = (x, grid_count=fractal::DEFAULT_GRID_COUNT))]
    fn hidden_ss_rates(&self, x: Vec<Vec<f64>>, grid_count: usize) -> PyResult<Vec<f64>> {
        trainer::hidden_ss_rates(&self.inner, &matrix(x)?, grid_count, NormalizerMode::Bounded).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Mlp(widths={:?}, activation={})", self.inner.widths(), self.inner.activation())
    }
}

fn train_config(py: Python<'_>, config: Option<&Bound<'_, PyDict>>) -> PyResult<TrainConfig> {
    let Some(config) = config else {
        return Ok(TrainConfig::default());
    };
    let text: String = py.import("json")?.call_method1("dumps", (config,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("training config: {e}")))
}

fn dataset(x: Vec<Vec<f64>>, y: Vec<usize>) -> PyResult<selfsim::io::Dataset> {
    let classes = y.iter().max().map_or(2, |m| (m + 1).max(2));
    selfsim::io::Dataset::new(matrix(x)?, y, classes).map_err(to_py)
}

/// Trains a copy of `model`; keyword arguments are training-config keys.
/// Returns `(trained_model, log)`.
#[pyfunction]
#[pyo3(signature = (model, x, y, **config))]
fn train<'py>(
    py: Python<'py>,
    model: &PyMlp,
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<(PyMlp, Bound<'py, PyAny>)> {
    let cfg = train_config(py, config)?;
    let data = dataset(x, y)?;
    let (trained, log) = trainer::train(model.inner.clone(), &data, None, &cfg).map_err(to_py)?;
    Ok((PyMlp { inner: trained }, to_dict(py, &log)?))
}

/// Per-layer targets from an unpenalized run of `model`.
#[pyfunction]
#[pyo3(signature = (model, x, y, **config))]
fn calibrate_gamma(
    py: Python<'_>,
    model: &PyMlp,
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<Vec<f64>> {
    let cfg = train_config(py, config)?;
    trainer::calibrate_gamma(model.inner.clone(), &dataset(x, y)?, &cfg).map_err(to_py)
}

/// `(x, y)` Gaussian blobs.
#[pyfunction]
#[pyo3(signature = (classes=3, per_class=167, dim=2, separation=5.0, seed=0))]
fn synth_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let d = selfsim::io::synth_blobs(classes, per_class, dim, separation, seed).map_err(to_py)?;
    Ok((rows_from_matrix(&d.x), d.y))
}

/// `kind` is `segment`, `uniform_cube[:dim]` or `cantor[:depth]`.
#[pyfunction]
#[pyo3(signature = (kind, n, seed=0))]
fn synth_points(kind: &str, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows_from_matrix(&selfsim::io::synth_points(parse(kind)?, n, seed).map_err(to_py)?))
}

/// Finite-difference self-test with default tolerances.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn gradcheck(py: Python<'_>, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    let cfg = selfsim::selfcheck::SelfCheckConfig { seed, ..Default::default() };
    to_dict(py, &selfsim::selfcheck::run_selfcheck(&cfg).map_err(to_py)?)
}

#[pymodule]
#[pyo3(name = "selfsim")]
fn selfsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDistanceMatrix>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyMlp>()?;
    m.add_function(wrap_pyfunction!(ss_rate, m)?)?;
    m.add_function(wrap_pyfunction!(box_curve, m)?)?;
    m.add_function(wrap_pyfunction!(power_law_mle, m)?)?;
    m.add_function(wrap_pyfunction!(stat_invariance, m)?)?;
    m.add_function(wrap_pyfunction!(geom_invariance, m)?)?;
    m.add_function(wrap_pyfunction!(corr_dim, m)?)?;
    m.add_function(wrap_pyfunction!(classical_mds, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(synth_blobs, m)?)?;
    m.add_function(wrap_pyfunction!(synth_points, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let m = matrix_from_rows(&rows).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(rows_from_matrix(&m), rows);
    }

    #[test]
    fn ragged_and_empty_rows_rejected() {
        assert!(matrix_from_rows(&[]).is_err());
        assert!(matrix_from_rows(&[vec![]]).is_err());
        let err = matrix_from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(err.contains("row 1"), "{err}");
    }
}
