//! Python bindings. Reports come back as plain dicts and lists.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rmix_core::cli::{parse_span_dist, parse_weight_dist};
use rmix_core::{
    analysis::step_certificate_with_tolerance, opt::numeric_instance, AdaptiveOptions,
    AdversaryStrategy, BufferState, DeadlineKey, DeadlineModel, Error, GenConfig, Packet, PacketId,
    Scheduler, DEFAULT_TOLERANCE, RATIO_BOUND,
};

fn err(e: Error) -> PyErr {
    match e {
        Error::NotPending(_) => PyKeyError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_model(model: &str) -> PyResult<DeadlineModel> {
    model.parse().map_err(err)
}

type PacketTuple = (u64, f64, u64);

fn tuple(p: &Packet) -> PacketTuple {
    (p.id.0, p.weight, p.deadline.value())
}

/// Pending packets kept in deadline order.
#[pyclass(name = "Buffer", module = "rmix")]
struct PyBuffer {
    inner: BufferState,
    model: DeadlineModel,
}

#[pymethods]
impl PyBuffer {
    /// `packets` is a list of `(id, weight, deadline)`; with `model="ordinal"`
    /// the deadline is a rank.
    #[new]
    #[pyo3(signature = (packets = Vec::new(), model = "numeric"))]
    fn new(packets: Vec<PacketTuple>, model: &str) -> PyResult<Self> {
        let model = parse_model(model)?;
        let inner = BufferState::from_packets(
            packets
                .into_iter()
                .map(|(id, w, d)| Packet::new(id, w, DeadlineKey::with_model(model, d), 0))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?,
        )
        .map_err(err)?;
        Ok(PyBuffer { inner, model })
    }

    #[pyo3(signature = (id, weight, deadline, arrival_step = 0))]
    fn insert(&mut self, id: u64, weight: f64, deadline: u64, arrival_step: u64) -> PyResult<()> {
        let p = Packet::new(
            id,
            weight,
            DeadlineKey::with_model(self.model, deadline),
            arrival_step,
        )
        .map_err(err)?;
        self.inner.insert(p).map_err(err)
    }

    fn remove(&mut self, id: u64) -> PyResult<PacketTuple> {
        self.inner
            .remove(PacketId(id))
            .map(|p| tuple(&p))
            .map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, id: u64) -> bool {
        self.inner.contains(PacketId(id))
    }

    fn __repr__(&self) -> String {
        format!(
            "Buffer({} packets, {})",
            self.inner.len(),
            self.model.as_str()
        )
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.model.as_str()
    }

    /// Packets as `(id, weight, deadline)` in deadline order.
    fn packets(&self) -> Vec<PacketTuple> {
        self.inner.iter().map(tuple).collect()
    }

    fn frontier(&self) -> Vec<PacketTuple> {
        self.inner.pareto_frontier().iter().map(tuple).collect()
    }

    fn heaviest(&self) -> Option<PacketTuple> {
        self.inner.heaviest().map(tuple)
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    /// Packet id RMix transmits for threshold exponent `x` in `[-1, 0]`.
    fn choose(&self, x: f64) -> PyResult<Option<u64>> {
        Ok(rmix_core::rmix_choose(&self.inner, x)
            .map_err(err)?
            .chosen
            .map(|id| id.0))
    }

    #[pyo3(signature = (seed = 0))]
    fn sample(&self, seed: u64) -> (Option<u64>, Option<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rmix_core::rmix_sample(&self.inner, &mut rng);
        (d.chosen.map(|id| id.0), d.sample_x)
    }

    fn distribution<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &rmix_core::rmix_distribution(&self.inner).map_err(err)?)
    }

    fn expected_gain(&self) -> f64 {
        rmix_core::expected_rmix_gain(&self.inner)
    }

    /// Expected amortized adversary gain when the adversary sends `j`.
    fn expected_adv(&self, j: u64) -> PyResult<f64> {
        Ok(rmix_core::expected_adv_amortized(&self.inner, PacketId(j))
            .map_err(err)?
            .value)
    }

    #[pyo3(signature = (tolerance = DEFAULT_TOLERANCE))]
    fn certificate<'py>(&self, py: Python<'py>, tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &step_certificate_with_tolerance(&self.inner, tolerance).map_err(err)?,
        )
    }
}

/// A timed sequence of arrivals (and ordinal expirations).
#[pyclass(name = "Trace", module = "rmix")]
struct PyTrace {
    inner: rmix_core::Trace,
}

#[pymethods]
impl PyTrace {
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        rmix_core::Trace::from_jsonl(text)
            .map(|inner| PyTrace { inner })
            .map_err(err)
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.inner.model.as_str()
    }

    fn __len__(&self) -> usize {
        self.inner.events.len()
    }

    fn packet_count(&self) -> usize {
        self.inner.packet_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace({} events, {} packets, {})",
            self.inner.events.len(),
            self.inner.packet_count(),
            self.inner.model.as_str()
        )
    }

    /// Offline optimum as `{"assignments": [...], "value": ...}`.
    fn opt<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let inst = numeric_instance(&self.inner).map_err(err)?;
        to_py(py, &rmix_core::opt_greedy(inst.as_ref()).map_err(err)?)
    }

    #[pyo3(signature = (scheduler = "rmix", seed = 0, trials = 1000, parallel = true))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        scheduler: &str,
        seed: u64,
        trials: u64,
        parallel: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let scheduler: Scheduler = scheduler.parse().map_err(err)?;
        let report = py
            .detach(|| rmix_core::run_trials(&self.inner, scheduler, seed, trials, parallel))
            .map_err(err)?;
        to_py(py, &report)
    }

    /// Plays RMix against an adaptive adversary. `script` maps steps to
    /// packet ids and selects the scripted strategy.
    #[pyo3(signature = (strategy = "min-ratio", seed = 0, dual_buffers = false, tolerance = DEFAULT_TOLERANCE, script = None))]
    fn adaptive<'py>(
        &self,
        py: Python<'py>,
        strategy: &str,
        seed: u64,
        dual_buffers: bool,
        tolerance: f64,
        script: Option<BTreeMap<u64, u64>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let strategy = match script {
            Some(s) => AdversaryStrategy::Scripted(
                s.into_iter()
                    .map(|(step, id)| (step, PacketId(id)))
                    .collect(),
            ),
            None => strategy.parse().map_err(err)?,
        };
        let opts = AdaptiveOptions {
            seed,
            dual_buffers,
            tolerance,
        };
        let report = py
            .detach(|| rmix_core::run_adaptive(&self.inner, &strategy, &opts))
            .map_err(err)?;
        to_py(py, &report)
    }
}

#[pyfunction]
fn tightness_buffer(k: usize) -> PyResult<PyBuffer> {
    Ok(PyBuffer {
        inner: rmix_core::tightness_buffer(k).map_err(err)?,
        model: DeadlineModel::Numeric,
    })
}

#[pyfunction]
#[pyo3(signature = (n, seed = 0, lo = 1e-3, hi = 1.0))]
fn random_buffer(n: usize, seed: u64, lo: f64, hi: f64) -> PyBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PyBuffer {
        inner: rmix_core::gen::random_buffer(&mut rng, n, lo, hi),
        model: DeadlineModel::Numeric,
    }
}

#[pyfunction]
#[pyo3(signature = (
    steps = 100,
    arrival_rate = 1.0,
    weight_dist = "log-uniform:0.001:1",
    span_dist = "uniform:8",
    s_bounded = None,
    model = "numeric",
    seed = 0,
))]
fn generate(
    steps: u64,
    arrival_rate: f64,
    weight_dist: &str,
    span_dist: &str,
    s_bounded: Option<u64>,
    model: &str,
    seed: u64,
) -> PyResult<PyTrace> {
    let config = GenConfig {
        steps,
        arrival_rate,
        weight_dist: parse_weight_dist(weight_dist).map_err(err)?,
        span_dist: parse_span_dist(span_dist).map_err(err)?,
        s_bounded,
        model: parse_model(model)?,
        seed,
    };
    rmix_core::generate(&config)
        .map(|inner| PyTrace { inner })
        .map_err(err)
}

#[pymodule]
fn rmix(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBuffer>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(tightness_buffer, m)?)?;
    m.add_function(wrap_pyfunction!(random_buffer, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add("RATIO_BOUND", RATIO_BOUND)?;
    m.add("DEFAULT_TOLERANCE", DEFAULT_TOLERANCE)?;
    Ok(())
}
