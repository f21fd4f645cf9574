//! Python bindings. Rich results (assessments, cut-sets, redispatch
//! solutions) cross the boundary as plain dicts built from their JSON form.

use std::fs;

use cscopf_core::cscopf::{self as opf, Mode, RunOptions};
use cscopf_core::cutset::{find_saturated_cutsets, FtOptions};
use cscopf_core::dynamics::{self, FaultSequence, SimeConfig, TdsOptions};
use cscopf_core::grid::{self, parse_dynamics_sidecar, parse_json_case, parse_matpower_case};
use cscopf_core::sensitivity::{topology_hash, SensitivitySet};
use cscopf_core::{fixtures, tscp};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tds_options(dt: f64, t_end: f64) -> TdsOptions {
    TdsOptions { dt, t_end, ..TdsOptions::default() }
}

fn sime_config(tau: Option<f64>) -> SimeConfig {
    let mut cfg = SimeConfig::default();
    if let Some(t) = tau {
        cfg.tau = t;
    }
    cfg
}

/// A static grid, optionally carrying classical machine data.
#[pyclass(name = "Network", module = "cscopf", skip_from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: grid::Network,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    #[pyo3(signature = (text, dynamics=None))]
    fn from_json(text: &str, dynamics: Option<&str>) -> PyResult<Self> {
        let mut inner = parse_json_case(text).map_err(value_err)?;
        if let Some(d) = dynamics {
            inner.merge_sidecar(&parse_dynamics_sidecar(d).map_err(value_err)?).map_err(value_err)?;
        }
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_matpower(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_matpower_case(text).map_err(value_err)? })
    }

    /// Reads a `.m` or JSON case from disk, plus an optional dynamics file.
    #[staticmethod]
    #[pyo3(signature = (path, dynamics=None))]
    fn load(path: &str, dynamics: Option<&str>) -> PyResult<Self> {
        let text = fs::read_to_string(path).map_err(value_err)?;
        let mut net = if path.ends_with(".m") { Self::from_matpower(&text)? } else { Self::from_json(&text, None)? };
        if let Some(d) = dynamics {
            net.merge_dynamics(&fs::read_to_string(d).map_err(value_err)?)?;
        }
        Ok(net)
    }

    #[staticmethod]
    fn wildfire9() -> Self {
        Self { inner: fixtures::wildfire9() }
    }

    #[staticmethod]
    fn case118() -> Self {
        Self { inner: fixtures::case118() }
    }

    fn merge_dynamics(&mut self, text: &str) -> PyResult<()> {
        let sidecar = parse_dynamics_sidecar(text).map_err(value_err)?;
        self.inner.merge_sidecar(&sidecar).map_err(value_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    #[getter]
    fn bus_ids(&self) -> Vec<u32> {
        self.inner.buses.iter().map(|b| b.id).collect()
    }

    #[getter]
    fn branch_ids(&self) -> Vec<u32> {
        self.inner.branches.iter().map(|b| b.id).collect()
    }

    #[getter]
    fn generator_ids(&self) -> Vec<u32> {
        self.inner.generators.iter().map(|g| g.id).collect()
    }

    #[getter]
    fn load_ids(&self) -> Vec<u32> {
        self.inner.loads.iter().map(|l| l.id).collect()
    }

    #[getter]
    fn generation_mw(&self) -> Vec<f64> {
        self.inner.generators.iter().map(|g| g.p0_mw).collect()
    }

    #[getter]
    fn loads_mw(&self) -> Vec<f64> {
        self.inner.loads.iter().map(|l| l.l0_mw).collect()
    }

    #[getter]
    fn reference_bus(&self) -> u32 {
        self.inner.reference_bus()
    }

    #[getter]
    fn has_dynamics(&self) -> bool {
        self.inner.has_dynamics()
    }

    fn topology_hash(&self) -> String {
        topology_hash(&self.inner)
    }

    fn to_json(&self) -> String {
        self.inner.to_canonical_json()
    }

    /// Base-case DC branch flows, MW, in branch order.
    fn dc_flows(&self) -> PyResult<Vec<f64>> {
        Ok(self.sensitivities()?.base_flows_mw)
    }

    /// `[branches x buses]` PTDF rows.
    fn ptdf(&self) -> PyResult<Vec<Vec<f64>>> {
        let s = self.sensitivities()?;
        Ok(s.ptdf.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// `[monitored x outaged]` LODF; `None` where the outage is a bridge.
    fn lodf(&self) -> PyResult<Vec<Vec<Option<f64>>>> {
        let s = self.sensitivities()?;
        let m = self.inner.branches.len();
        Ok((0..m).map(|u| (0..m).map(|a| s.lodf_factor(u, a)).collect()).collect())
    }

    /// Copy with a redispatch applied.
    #[pyo3(signature = (delta_p, delta_l=None))]
    fn redispatched(&self, delta_p: Vec<f64>, delta_l: Option<Vec<f64>>) -> PyResult<Self> {
        if delta_p.len() != self.inner.generators.len() {
            return Err(value_err(format!("expected {} generator deltas", self.inner.generators.len())));
        }
        let dl = delta_l.unwrap_or_else(|| vec![0.0; self.inner.loads.len()]);
        if dl.len() != self.inner.loads.len() {
            return Err(value_err(format!("expected {} load deltas", self.inner.loads.len())));
        }
        let gen: Vec<f64> = self.inner.generators.iter().zip(&delta_p).map(|(g, d)| g.p0_mw + d).collect();
        let load: Vec<f64> = self.inner.loads.iter().zip(&dl).map(|(l, d)| l.l0_mw - d).collect();
        Ok(Self { inner: self.inner.with_operating_point(&gen, &load) })
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(buses={}, branches={}, generators={}, loads={})",
            self.inner.buses.len(),
            self.inner.branches.len(),
            self.inner.generators.len(),
            self.inner.loads.len()
        )
    }
}

impl PyNetwork {
    fn sensitivities(&self) -> PyResult<SensitivitySet> {
        SensitivitySet::compute(&self.inner).map_err(value_err)
    }
}

/// A fault sequence together with the branches it removes.
#[pyclass(name = "Contingency", module = "cscopf", skip_from_py_object)]
#[derive(Clone)]
struct PyContingency {
    inner: opf::Contingency,
}

#[pymethods]
impl PyContingency {
    /// Accepts a contingency document or a bare fault sequence; the latter
    /// needs `id`.
    #[staticmethod]
    #[pyo3(signature = (text, id=None))]
    fn from_json(text: &str, id: Option<&str>) -> PyResult<Self> {
        if let Ok(inner) = serde_json::from_str::<opf::Contingency>(text) {
            return Ok(Self { inner });
        }
        let seq = FaultSequence::from_json(text).map_err(value_err)?;
        Ok(Self { inner: opf::Contingency::new(id.unwrap_or("contingency"), seq) })
    }

    #[staticmethod]
    fn wildfire9() -> Self {
        Self { inner: fixtures::wildfire9_contingency() }
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn outages(&self) -> Vec<u32> {
        self.inner.outage_set()
    }

    #[getter]
    fn events(&self) -> usize {
        self.inner.sequence.events.len()
    }

    fn validate(&self, net: &PyNetwork) -> PyResult<()> {
        self.inner.sequence.validate(&net.inner).map_err(value_err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("contingency serializes")
    }

    fn __repr__(&self) -> String {
        format!("Contingency(id={:?}, outages={:?})", self.inner.id, self.inner.outage_set())
    }
}

/// Linear predictor of the stability correction factor.
#[pyclass(name = "TscpModel", module = "cscopf", skip_from_py_object)]
#[derive(Clone)]
struct PyTscpModel {
    inner: tscp::TscpModel,
}

#[pymethods]
impl PyTscpModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: tscp::TscpModel::from_json(text).map_err(value_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Correction factor in MW for the given loads, clamped at zero.
    fn predict(&self, loads: Vec<f64>) -> PyResult<f64> {
        self.inner.predict(&loads).map_err(value_err)
    }

    fn predict_raw(&self, loads: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_raw(&loads).map_err(value_err)
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta.clone()
    }

    #[getter]
    fn theta0(&self) -> f64 {
        self.inner.theta0
    }

    #[getter]
    fn contingency_id(&self) -> String {
        self.inner.contingency_id.clone()
    }

    #[getter]
    fn load_ids(&self) -> Vec<u32> {
        self.inner.load_ids.clone()
    }

    #[getter]
    fn critical_machines(&self) -> Vec<u32> {
        self.inner.critical_machines.clone()
    }

    #[getter]
    fn sime_tau(&self) -> Option<f64> {
        self.inner.sime_tau
    }

    fn __repr__(&self) -> String {
        format!("TscpModel(contingency={:?}, loads={})", self.inner.contingency_id, self.inner.theta.len())
    }
}

/// Saturated post-contingency cut-sets as dicts. Without a contingency the
/// base topology is screened.
#[pyfunction]
#[pyo3(signature = (net, contingency=None, threshold=0.98))]
fn saturated_cutsets<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    contingency: Option<&PyContingency>,
    threshold: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let outages = contingency.map(|c| c.inner.outage_set()).unwrap_or_default();
    let post = net.inner.apply_outage(&outages.into_iter().collect()).map_err(value_err)?;
    if post.islanded {
        return Err(value_err("outage set islands the network"));
    }
    let sens = SensitivitySet::compute(&post.network).map_err(value_err)?;
    let flows = sens.flows_for(&net.inner.base_injections_mw());
    let opts = FtOptions { utilization_threshold: threshold, ..FtOptions::default() };
    to_py(py, &find_saturated_cutsets(&post.network, &flows, &opts))
}

/// Rotor angles in degrees, `[machines][steps]`, with the time grid.
#[pyfunction]
#[pyo3(signature = (net, contingency, dt=1e-3, t_end=5.0))]
fn simulate<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    contingency: &PyContingency,
    dt: f64,
    t_end: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let (n, seq) = (net.inner.clone(), contingency.inner.sequence.clone());
    let traj = py
        .detach(move || dynamics::simulate_swing_with(&n, &seq, &tds_options(dt, t_end)))
        .map_err(runtime_err)?;
    let angles: Vec<Vec<f64>> = traj.angles.row_iter().map(|r| r.iter().map(|a| a.to_degrees()).collect()).collect();
    to_py(
        py,
        &serde_json::json!({ "time": traj.time_grid, "machine_ids": traj.machine_ids, "angles_deg": angles }),
    )
}

/// TSI, critical machines, SIME margin and the correction factor.
#[pyfunction]
#[pyo3(signature = (net, contingency, tau=None, dt=1e-3, t_end=5.0))]
fn assess<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    contingency: &PyContingency,
    tau: Option<f64>,
    dt: f64,
    t_end: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let (n, seq) = (net.inner.clone(), contingency.inner.sequence.clone());
    let (a, _) = py
        .detach(move || dynamics::assess(&n, &seq, &tds_options(dt, t_end), &sime_config(tau)))
        .map_err(runtime_err)?;
    to_py(py, &a)
}

#[pyfunction]
#[pyo3(signature = (net, contingency, shift_mw=4.0, dt=1e-3, t_end=5.0))]
fn estimate_tau(
    py: Python<'_>,
    net: &PyNetwork,
    contingency: &PyContingency,
    shift_mw: f64,
    dt: f64,
    t_end: f64,
) -> PyResult<f64> {
    let (n, seq) = (net.inner.clone(), contingency.inner.sequence.clone());
    py.detach(move || {
        dynamics::estimate_tau(&n, &seq, &tds_options(dt, t_end), &SimeConfig::default(), shift_mw)
    })
    .map_err(runtime_err)
}

/// Samples loads, simulates each sample and fits the predictor. Returns the
/// model and a summary with in-sample metrics.
#[pyfunction]
#[pyo3(signature = (net, contingency, n=200, seed=1, tau=None, sigma=0.05, include_stable=true, dt=1e-3, t_end=5.0))]
#[allow(clippy::too_many_arguments)]
fn train_tscp<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    contingency: &PyContingency,
    n: usize,
    seed: u64,
    tau: Option<f64>,
    sigma: f64,
    include_stable: bool,
    dt: f64,
    t_end: f64,
) -> PyResult<(PyTscpModel, Bound<'py, PyAny>)> {
    let (net, c) = (net.inner.clone(), contingency.inner.clone());
    let (model, summary) = py
        .detach(move || -> Result<_, String> {
            let tds = tds_options(dt, t_end);
            let sime = sime_config(tau);
            let spec = tscp::SamplingSpec { sigma, ..tscp::SamplingSpec::default() };
            let samples = tscp::sample_loads(&net, &spec, n, seed).map_err(|e| e.to_string())?;
            let ds = tscp::build_dataset(&net, &samples, &c.sequence, &tds, &sime);
            let mut model = tscp::train_model(&ds, &c.id, Some(seed), include_stable).map_err(|e| e.to_string())?;
            model.sime_tau = Some(sime.tau);
            let (x, y) = ds.training_rows(include_stable);
            let metrics = tscp::evaluate(&model, &x, &y, 0.05, 0).map_err(|e| e.to_string())?;
            let unstable = ds.status.iter().filter(|s| **s == tscp::RowStatus::Unstable).count();
            let summary = serde_json::json!({ "samples": n, "unstable_rows": unstable, "metrics": metrics });
            Ok((model, summary))
        })
        .map_err(runtime_err)?;
    Ok((PyTscpModel { inner: model }, to_py(py, &summary)?))
}

/// Runs the redispatch loop in one mode (`rtsced`, `tscopf` or `cscopf`)
/// and returns the solution as a dict.
#[pyfunction]
#[pyo3(signature = (net, contingency, model=None, mode="cscopf", tau=None, max_iter=10))]
fn run_cscopf<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    contingency: &PyContingency,
    model: Option<&PyTscpModel>,
    mode: &str,
    tau: Option<f64>,
    max_iter: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: Mode = mode.parse().map_err(value_err)?;
    let model = model.map(|m| m.inner.clone());
    let mut opts = RunOptions { max_iter, ..RunOptions::default() };
    opts.sime.tau = tau.or(model.as_ref().and_then(|m| m.sime_tau)).unwrap_or(opts.sime.tau);
    let (n, c) = (net.inner.clone(), contingency.inner.clone());
    let sol = py.detach(move || opf::run_cscopf(&n, &c, model.as_ref(), mode, &opts)).map_err(value_err)?;
    to_py(py, &sol)
}

#[pymodule]
fn cscopf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyContingency>()?;
    m.add_class::<PyTscpModel>()?;
    m.add_function(wrap_pyfunction!(saturated_cutsets, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(assess, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_tau, m)?)?;
    m.add_function(wrap_pyfunction!(train_tscp, m)?)?;
    m.add_function(wrap_pyfunction!(run_cscopf, m)?)?;
    Ok(())
}
