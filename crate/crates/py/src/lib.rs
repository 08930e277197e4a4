//! Python bindings. Matrices cross the boundary as nested lists of
//! `complex` (row-major), so `numpy.array(...)` works on both sides.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qds_core::channels::{DensityMatrix, Dynamics, System as CoreSystem, TimeKind};
use qds_core::coherence;
use qds_core::error::Error;
use qds_core::io;
use qds_core::linalg::{C64, CMatrix};
use qds_core::report::{self, AnalysisOptions};
use qds_core::spectral;
use qds_core::structure::{self, BlockId, StructureDecomposition, DEFAULT_SEED};
use qds_core::tolerance::Tolerances;
use qds_core::zoo::{self, ZooSpec};

pyo3::create_exception!(qds, VerificationError, PyRuntimeError);
pyo3::create_exception!(qds, StructureError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotCompletelyPositive(_) | Error::Verification(_) => VerificationError::new_err(e.to_string()),
        Error::Structure(_) | Error::Numerical(_) => StructureError::new_err(e.to_string()),
        Error::Dimension(_) | Error::InvalidInput(_) | Error::Parse(_) => PyValueError::new_err(e.to_string()),
    }
}

fn matrix_in(rows: Vec<Vec<C64>>) -> PyResult<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(CMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn matrix_out(m: &CMatrix) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

fn tolerances(profile: Option<&str>) -> PyResult<Tolerances> {
    match profile {
        None => Ok(Tolerances::from_env()),
        Some("default") => Ok(Tolerances::default()),
        Some("strict") => Ok(Tolerances::strict()),
        Some(other) => Err(PyValueError::new_err(format!("unknown tolerance profile '{other}'"))),
    }
}

/// A quantum channel or Lindblad generator.
#[pyclass(module = "qds", frozen)]
struct System {
    inner: CoreSystem,
    tol: Tolerances,
}

#[pymethods]
impl System {
    /// Build from the channel JSON format used by the CLI.
    #[staticmethod]
    #[pyo3(signature = (text, profile=None))]
    fn from_json(text: &str, profile: Option<&str>) -> PyResult<Self> {
        let tol = tolerances(profile)?;
        let inner = io::parse_channel(text, &tol).map_err(to_py)?;
        Ok(System { inner, tol })
    }

    /// Channel from a list of Kraus operators.
    #[staticmethod]
    #[pyo3(signature = (kraus, profile=None))]
    fn from_kraus(kraus: Vec<Vec<Vec<C64>>>, profile: Option<&str>) -> PyResult<Self> {
        let tol = tolerances(profile)?;
        let ks = kraus.into_iter().map(matrix_in).collect::<PyResult<Vec<_>>>()?;
        let ch = qds_core::channels::QuantumChannel::from_kraus(ks).map_err(to_py)?;
        Ok(System { inner: ch.into(), tol })
    }

    /// Built-in example, e.g. `System.zoo("cascade", n=5, m=3)`.
    #[staticmethod]
    #[pyo3(signature = (name, seed=None, **params))]
    fn zoo(name: &str, seed: Option<u64>, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut spec = ZooSpec::new(name);
        spec.seed = seed;
        if let Some(d) = params {
            let map: HashMap<String, f64> = d.extract()?;
            for (k, v) in map {
                spec = spec.with(&k, v);
            }
        }
        let inner = zoo::build(&spec).map_err(to_py)?;
        Ok(System { inner, tol: Tolerances::from_env() })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn time_kind(&self) -> &'static str {
        match self.inner.time_kind() {
            TimeKind::Discrete => "discrete",
            TimeKind::Continuous => "continuous",
        }
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&io::channel_to_json(&self.inner)).expect("channel serializes")
    }

    /// Verification report as a dict with a `passed` entry added.
    fn verify(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let rep = self.inner.verify(self.tol.psd.max(self.tol.trace));
        let mut v = serde_json::to_value(&rep).expect("report serializes");
        v["passed"] = rep.passed().into();
        json_to_py(py, &v.to_string())
    }

    /// Schrödinger action on a matrix (the generator itself for continuous time).
    fn apply(&self, x: Vec<Vec<C64>>) -> PyResult<Vec<Vec<C64>>> {
        let x = matrix_in(x)?;
        Ok(matrix_out(&self.inner.apply(&x).map_err(to_py)?))
    }

    fn apply_adjoint(&self, a: Vec<Vec<C64>>) -> PyResult<Vec<Vec<C64>>> {
        let a = matrix_in(a)?;
        Ok(matrix_out(&self.inner.apply_adjoint(&a).map_err(to_py)?))
    }

    fn superoperator(&self) -> Vec<Vec<C64>> {
        matrix_out(self.inner.superop())
    }

    fn peripheral_eigenvalues(&self) -> PyResult<Vec<C64>> {
        let modes = spectral::peripheral_modes(&self.inner, &self.tol).map_err(to_py)?;
        Ok(modes.into_iter().map(|m| m.eigenvalue).collect())
    }

    #[pyo3(signature = (seed=DEFAULT_SEED))]
    fn decompose(&self, seed: u64) -> PyResult<Structure> {
        let sd = structure::decompose_structure(&self.inner, &self.tol, seed).map_err(to_py)?;
        Ok(Structure { sd })
    }

    /// Peripheral modes with their block attribution, as a list of dicts.
    #[pyo3(signature = (seed=DEFAULT_SEED))]
    fn classify(&self, py: Python<'_>, seed: u64) -> PyResult<Py<PyAny>> {
        let sd = structure::decompose_structure(&self.inner, &self.tol, seed).map_err(to_py)?;
        let modes = spectral::peripheral_modes(&self.inner, &self.tol).map_err(to_py)?;
        let cls = coherence::classify_modes(&self.inner, &sd, &modes, &self.tol).map_err(to_py)?;
        json_to_py(py, &serde_json::to_string(&cls).expect("modes serialize"))
    }

    /// Full analysis report, the same document `qds analyze` prints.
    #[pyo3(signature = (seed=DEFAULT_SEED, oracle=false, oracle_samples=report::DEFAULT_ORACLE_SAMPLES))]
    fn analyze(&self, py: Python<'_>, seed: u64, oracle: bool, oracle_samples: usize) -> PyResult<Py<PyAny>> {
        let opts = AnalysisOptions {
            tol: self.tol,
            seed,
            oracle,
            oracle_samples,
        };
        let digest = report::digest(self.to_json().as_bytes());
        let rep = report::analyze(&self.inner, digest, &opts).map_err(to_py)?;
        json_to_py(py, &rep.to_json())
    }

    /// Trajectory of `rho` as a dict; `dt` is required for generators.
    #[pyo3(signature = (rho, steps, dt=None, seed=DEFAULT_SEED))]
    fn evolve(
        &self,
        py: Python<'_>,
        rho: Vec<Vec<C64>>,
        steps: usize,
        dt: Option<f64>,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let rho = DensityMatrix::new(matrix_in(rho)?, &self.tol).map_err(to_py)?;
        let traj = report::evolve(&self.inner, &rho, steps, dt, &self.tol, seed).map_err(to_py)?;
        json_to_py(py, &serde_json::to_string(&traj).expect("trajectory serializes"))
    }

    fn __repr__(&self) -> String {
        format!("System(dim={}, time_kind='{}')", self.dim(), self.time_kind())
    }
}

/// Decomposition of the Hilbert space into decaying and enclosure blocks.
#[pyclass(module = "qds", frozen)]
struct Structure {
    sd: StructureDecomposition,
}

impl Structure {
    fn block(&self, id: &str) -> PyResult<structure::Subspace> {
        let id: BlockId = id.parse().map_err(to_py)?;
        self.sd
            .subspace(id)
            .ok_or_else(|| PyValueError::new_err(format!("no block {id}")))
    }
}

#[pymethods]
impl Structure {
    #[getter]
    fn decaying_dim(&self) -> usize {
        self.sd.decaying.dim()
    }

    #[getter]
    fn u_block_dims(&self) -> Vec<usize> {
        self.sd.u_blocks.iter().map(|b| b.space.dim()).collect()
    }

    /// `(dim, multiplicity, factor_dim)` per X block.
    #[getter]
    fn x_blocks(&self) -> Vec<(usize, usize, usize)> {
        self.sd
            .x_blocks
            .iter()
            .map(|b| (b.space.dim(), b.multiplicity, b.factor_dim))
            .collect()
    }

    #[getter]
    fn stationary_parameter_count(&self) -> usize {
        self.sd.stationary_parameter_count()
    }

    /// Block identifiers: `D`, `R`, `U1`, `X1`, ...
    fn block_ids(&self) -> Vec<String> {
        let mut ids = vec![BlockId::Decaying.to_string(), BlockId::Recurrent.to_string()];
        ids.extend(self.sd.central_blocks().into_iter().map(|(id, _)| id.to_string()));
        ids
    }

    fn projector(&self, block: &str) -> PyResult<Vec<Vec<C64>>> {
        Ok(matrix_out(self.block(block)?.projector()))
    }

    /// Orthonormal basis of the block, one column per basis vector.
    fn basis(&self, block: &str) -> PyResult<Vec<Vec<C64>>> {
        Ok(matrix_out(self.block(block)?.basis()))
    }

    fn mean_state(&self) -> Vec<Vec<C64>> {
        matrix_out(self.sd.mean_state.matrix())
    }

    fn __repr__(&self) -> String {
        format!(
            "Structure(decaying={}, u_blocks={:?}, x_blocks={:?})",
            self.decaying_dim(),
            self.u_block_dims(),
            self.x_blocks()
        )
    }
}

/// Analyze a channel JSON document; returns the report dict.
#[pyfunction]
#[pyo3(signature = (text, seed=DEFAULT_SEED, oracle=false))]
fn analyze(py: Python<'_>, text: &str, seed: u64, oracle: bool) -> PyResult<Py<PyAny>> {
    let opts = AnalysisOptions {
        seed,
        oracle,
        ..AnalysisOptions::default()
    };
    let rep = report::analyze_text(text, &opts).map_err(to_py)?;
    json_to_py(py, &rep.to_json())
}

#[pymodule]
fn qds(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    m.add_class::<Structure>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add("VerificationError", m.py().get_type::<VerificationError>())?;
    m.add("StructureError", m.py().get_type::<StructureError>())?;
    m.add("ZOO", zoo::CONSTRUCTORS.iter().map(|(n, _)| *n).collect::<Vec<_>>())?;
    Ok(())
}
