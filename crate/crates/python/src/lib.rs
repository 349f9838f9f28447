//! Python bindings. Matrices cross the boundary as lists of rows.

use cvcluster::surface::{self, DetectionConfig};
use cvcluster::tomography as tomo;
use cvcluster::{cluster, symplectic, witness, ClusterGraph, DMatrix, Error, GaussianState};
use pyo3::exceptions::{PyIOError, PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Rows = Vec<Vec<f64>>;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(err.to_string()),
        Error::InvalidConfig(_)
        | Error::UnknownSyndrome(_)
        | Error::TooSmall(_)
        | Error::TooManyModes(_)
        | Error::InvalidForm(_)
        | Error::OddModeCount(_)
        | Error::SizeMismatch { .. }
        | Error::BadMatrix(_) => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn matrix(rows: &Rows) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Interaction graph of a cluster state.
#[pyclass(name = "ClusterGraph", module = "cvcluster_py", skip_from_py_object)]
#[derive(Clone)]
struct PyClusterGraph {
    inner: ClusterGraph,
}

#[pymethods]
impl PyClusterGraph {
    /// `chain:N`, `grid:RxC`, `rhg:unit` or `rhg:L`.
    #[staticmethod]
    fn from_spec(spec: &str) -> PyResult<Self> {
        ClusterGraph::from_spec(spec)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_edges(vertex_count: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        ClusterGraph::from_edges(vertex_count, &edges)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn adjacency(&self) -> Rows {
        rows(&self.inner.adjacency())
    }

    fn __repr__(&self) -> String {
        format!(
            "ClusterGraph(vertices={}, edges={})",
            self.inner.vertex_count(),
            self.inner.edge_count()
        )
    }
}

/// Zero-or-displaced Gaussian state.
#[pyclass(name = "GaussianState", module = "cvcluster_py", skip_from_py_object)]
#[derive(Clone)]
struct PyGaussianState {
    inner: GaussianState,
}

#[pymethods]
impl PyGaussianState {
    #[new]
    #[pyo3(signature = (cov, mean=None))]
    fn new(cov: Rows, mean: Option<Vec<f64>>) -> PyResult<Self> {
        let cov = matrix(&cov)?;
        let mean = mean.unwrap_or_else(|| vec![0.0; cov.nrows()]);
        GaussianState::new(mean.into(), cov)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn vacuum(mode_count: usize) -> Self {
        Self {
            inner: GaussianState::vacuum(mode_count),
        }
    }

    /// Cluster state on `graph` with squeezing `r` on every mode.
    #[staticmethod]
    fn cluster(graph: &PyClusterGraph, r: f64) -> PyResult<Self> {
        cluster::build_uniform_cluster(&graph.inner, r)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn mode_count(&self) -> usize {
        self.inner.mode_count()
    }

    #[getter]
    fn cov(&self) -> Rows {
        rows(self.inner.cov())
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().iter().copied().collect()
    }

    fn with_detection_loss(&self, eta: f64) -> Self {
        Self {
            inner: self.inner.with_detection_loss(eta),
        }
    }

    fn displace(&self, mode: usize, dx: f64, dp: f64) -> PyResult<Self> {
        self.inner
            .displace(mode, dx, dp)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn min_symplectic_eigenvalue(&self) -> PyResult<f64> {
        self.inner.min_symplectic_eigenvalue().map_err(to_py)
    }
}

#[pyfunction]
fn symplectic_eigenvalues(cov: Rows) -> PyResult<Vec<f64>> {
    let s = symplectic::symplectic_eigenvalues(&matrix(&cov)?).map_err(to_py)?;
    Ok(s.values().to_vec())
}

/// Returns `(S, nu)` with `cov = S diag(nu, nu) Sᵀ`.
#[pyfunction]
fn williamson(cov: Rows) -> PyResult<(Rows, Vec<f64>)> {
    let w = symplectic::williamson(&matrix(&cov)?).map_err(to_py)?;
    Ok((rows(&w.symplectic), w.spectrum.values().to_vec()))
}

/// Detected nullifier variance over vacuum variance, per vertex.
#[pyfunction]
#[pyo3(signature = (state, graph, eta=1.0))]
fn nullifier_ratios(
    state: &PyGaussianState,
    graph: &PyClusterGraph,
    eta: f64,
) -> PyResult<Vec<f64>> {
    let report = cluster::nullifier_report(&state.inner, &graph.inner, eta).map_err(to_py)?;
    Ok(report.iter().map(|r| r.ratio).collect())
}

#[pyfunction]
fn duan_value(cov: Rows, m: usize, n: usize) -> PyResult<f64> {
    witness::duan_value(&matrix(&cov)?, m, n).map_err(to_py)
}

#[pyfunction]
fn epr_product(cov: Rows, m: usize, n: usize) -> PyResult<f64> {
    witness::epr_product(&matrix(&cov)?, m, n).map_err(to_py)
}

#[pyfunction]
fn npt_value(cov: Rows, party: Vec<usize>) -> PyResult<f64> {
    let v = matrix(&cov)?;
    let b = witness::Bipartition::new(v.nrows() / 2, &party).map_err(to_py)?;
    witness::npt_value(&v, &b).map_err(to_py)
}

#[pyfunction]
fn steerability(cov: Rows, source: Vec<usize>, target: Vec<usize>) -> PyResult<f64> {
    witness::steerability(&matrix(&cov)?, &source, &target).map_err(to_py)
}

/// Summary of the sweep over every bipartition, as a JSON string.
#[pyfunction]
#[pyo3(signature = (cov, workers=0))]
fn sweep_summary(py: Python<'_>, cov: Rows, workers: usize) -> PyResult<String> {
    let v = matrix(&cov)?;
    let report = py
        .detach(|| witness::full_sweep(&v, workers))
        .map_err(to_py)?;
    report.summary_json().map_err(to_py)
}

/// Simulated tomography. Returns `(linear, mle, nu_min)`.
#[pyfunction]
#[pyo3(signature = (state, samples, seed, eta=1.0))]
fn tomography(
    py: Python<'_>,
    state: &PyGaussianState,
    samples: usize,
    seed: u64,
    eta: f64,
) -> PyResult<(Rows, Rows, f64)> {
    let s = state.inner.clone();
    py.detach(move || {
        let settings = tomo::informationally_complete_settings(s.mode_count());
        let data = tomo::acquire(&s, &settings, samples, eta, seed)?;
        let lin = tomo::linear_inversion(&data)?;
        let mle = tomo::mle_reconstruct(&data, Some(&lin), Default::default())?;
        Ok((rows(&lin), rows(&mle.covariance), mle.nu_min))
    })
    .map_err(to_py)
}

/// Error-detection sweep. Returns `(label, slope, stderr, detected)` per syndrome.
#[pyfunction]
#[pyo3(signature = (kind, magnitudes, r, seed, shots=1000, eta=1.0, layers=2))]
#[allow(clippy::too_many_arguments)]
fn detection_sweep(
    py: Python<'_>,
    kind: &str,
    magnitudes: Vec<f64>,
    r: f64,
    seed: u64,
    shots: usize,
    eta: f64,
    layers: usize,
) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let kind = kind.parse().map_err(to_py)?;
    let config = DetectionConfig {
        layers,
        r,
        eta,
        shots,
        seed,
        error_mode: None,
    };
    let run = py
        .detach(|| surface::detection_sweep(kind, &magnitudes, &[], &config, 0))
        .map_err(to_py)?;
    Ok(run
        .fits
        .into_iter()
        .map(|f| (f.label, f.slope, f.stderr, f.detected))
        .collect())
}

#[pymodule]
fn cvcluster_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyClusterGraph>()?;
    m.add_class::<PyGaussianState>()?;
    m.add_function(wrap_pyfunction!(symplectic_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(williamson, m)?)?;
    m.add_function(wrap_pyfunction!(nullifier_ratios, m)?)?;
    m.add_function(wrap_pyfunction!(duan_value, m)?)?;
    m.add_function(wrap_pyfunction!(epr_product, m)?)?;
    m.add_function(wrap_pyfunction!(npt_value, m)?)?;
    m.add_function(wrap_pyfunction!(steerability, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_summary, m)?)?;
    m.add_function(wrap_pyfunction!(tomography, m)?)?;
    m.add_function(wrap_pyfunction!(detection_sweep, m)?)?;
    Ok(())
}
