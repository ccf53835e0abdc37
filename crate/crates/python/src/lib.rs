//! Python module `eventsift`. Structured values cross the boundary as plain
//! dicts and lists built through the `json` module.

use std::path::PathBuf;

use eventsift_core::acquisition::{bald as bald_score, kmeans as run_kmeans, AcquisitionError};
use eventsift_core::corpus::{load_posts, write_manifest as write_posts, ManifestRecord};
use eventsift_core::knn_graph::{build_knn_graph_from_vectors, cosine_distance as cosine, GraphError};
use eventsift_core::session::{
    f1_score as binary_f1, format_summary_table, macro_f1_score, run_oracle_benchmark, Arm,
    BenchmarkEvent, CorpusSource, Session as CoreSession, SessionConfig, SessionError,
};
use eventsift_core::synthetic::{generate, SyntheticConfig};
use eventsift_core::{BinaryLabel, Post};
use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn session_error(e: SessionError) -> PyErr {
    match e {
        SessionError::Io(io) => PyOSError::new_err(io.to_string()),
        SessionError::WrongPhase { .. } => PyRuntimeError::new_err(e.to_string()),
        other => value_error(other),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = PyModule::import(obj.py(), "json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_error)
}

fn config_from(config: Option<&Bound<'_, PyAny>>) -> PyResult<SessionConfig> {
    match config {
        Some(c) if !c.is_none() => from_py(c),
        _ => Ok(SessionConfig::default()),
    }
}

fn parse_label(s: &str) -> PyResult<BinaryLabel> {
    match s {
        "informative" => Ok(BinaryLabel::Informative),
        "not_informative" => Ok(BinaryLabel::NotInformative),
        other => Err(value_error(format!("unknown label {other:?}"))),
    }
}

fn records(posts: &[Post]) -> Vec<ManifestRecord> {
    posts.iter().map(ManifestRecord::from).collect()
}

/// Reads a manifest into a list of record dicts.
#[pyfunction]
fn load_corpus<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let posts = load_posts(&path).map_err(value_error)?;
    to_py(py, &records(&posts))
}

/// Writes record dicts as a line-delimited manifest.
#[pyfunction]
fn write_manifest(path: PathBuf, posts: &Bound<'_, PyAny>) -> PyResult<()> {
    let recs: Vec<ManifestRecord> = from_py(posts)?;
    let posts: Vec<Post> = recs.into_iter().map(Post::from).collect();
    write_posts(&path, &posts).map_err(|e| PyOSError::new_err(e.to_string()))
}

#[pyfunction]
fn cosine_distance(a: Vec<f32>, b: Vec<f32>) -> PyResult<f64> {
    cosine(&a, &b).map_err(|e: GraphError| value_error(e))
}

/// Directed k-NN lists of `(neighbor, distance)` pairs.
#[pyfunction]
fn build_knn_graph(vectors: Vec<Vec<f32>>, k: usize) -> PyResult<Vec<Vec<(usize, f64)>>> {
    let refs: Vec<&[f32]> = vectors.iter().map(Vec::as_slice).collect();
    let graph = build_knn_graph_from_vectors(&refs, k).map_err(value_error)?;
    Ok((0..graph.node_count())
        .map(|u| graph.neighbors(u).iter().map(|n| (n.index, n.distance)).collect())
        .collect())
}

/// BALD score from a `passes × classes` list of log-probabilities.
#[pyfunction]
fn bald(logprobs: Vec<Vec<f64>>) -> PyResult<f64> {
    let k = logprobs.len();
    let c = logprobs.first().map_or(0, Vec::len);
    if logprobs.iter().any(|r| r.len() != c) {
        return Err(value_error("ragged log-probability rows"));
    }
    let m = Array2::from_shape_vec((k, c), logprobs.concat()).map_err(value_error)?;
    bald_score(m.view()).map_err(|e: AcquisitionError| value_error(e))
}

/// Seeded k-means. Returns `assignment`, `centroids` and `iterations`.
#[pyfunction]
fn kmeans<'py>(
    py: Python<'py>,
    vectors: Vec<Vec<f32>>,
    n_clusters: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let refs: Vec<&[f32]> = vectors.iter().map(Vec::as_slice).collect();
    let c = run_kmeans(&refs, n_clusters, seed).map_err(value_error)?;
    to_py(
        py,
        &serde_json::json!({
            "assignment": c.assignment,
            "centroids": c.centroids,
            "iterations": c.iterations,
        }),
    )
}

/// Precision, recall and F1 with `informative` as the positive class, or the
/// two-class mean when `macro_average` is set.
#[pyfunction]
#[pyo3(signature = (predictions, gold, macro_average = false))]
fn f1_score<'py>(
    py: Python<'py>,
    predictions: Vec<String>,
    gold: Vec<String>,
    macro_average: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let p = predictions.iter().map(|s| parse_label(s)).collect::<PyResult<Vec<_>>>()?;
    let g = gold.iter().map(|s| parse_label(s)).collect::<PyResult<Vec<_>>>()?;
    let scores = if macro_average {
        macro_f1_score(&p, &g)
    } else {
        binary_f1(&p, &g)
    }
    .map_err(session_error)?;
    to_py(py, &scores)
}

/// Seeded synthetic corpus as `(event_records, pool_records)`.
#[pyfunction]
#[pyo3(signature = (seed = 0, config = None))]
fn generate_synthetic<'py>(
    py: Python<'py>,
    seed: u64,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let config: SyntheticConfig = match config {
        Some(c) if !c.is_none() => from_py(c)?,
        _ => SyntheticConfig::default(),
    };
    let data = generate(&config, seed);
    Ok((to_py(py, &records(&data.event_posts))?, to_py(py, &records(&data.pool))?))
}

/// Oracle benchmark over manifests. Returns `records`, `summaries` and the
/// printable `table`.
#[pyfunction]
#[pyo3(signature = (manifests, pool = None, arms = vec!["full".to_string()], seeds = 10, config = None))]
fn benchmark<'py>(
    py: Python<'py>,
    manifests: Vec<PathBuf>,
    pool: Option<PathBuf>,
    arms: Vec<String>,
    seeds: u64,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let base = config_from(config)?;
    let arms = arms
        .iter()
        .map(|a| a.parse::<Arm>().map_err(value_error))
        .collect::<PyResult<Vec<_>>>()?;
    let events = manifests
        .iter()
        .map(|m| load_posts(m).map(|posts| BenchmarkEvent { posts }))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_error)?;
    let pool = match &pool {
        Some(p) => load_posts(p).map_err(value_error)?,
        None => Vec::new(),
    };
    let seeds: Vec<u64> = (0..seeds).collect();
    let report = run_oracle_benchmark(&events, &pool, &base, &arms, &seeds).map_err(session_error)?;
    to_py(
        py,
        &serde_json::json!({
            "records": report.records,
            "summaries": report.summaries,
            "table": format_summary_table(&report.summaries),
        }),
    )
}

/// An annotation session: queue, label, train, repeat.
#[pyclass(module = "eventsift")]
struct Session {
    inner: CoreSession,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (manifest, pool = None, config = None, seed = 0))]
    fn new(
        manifest: PathBuf,
        pool: Option<PathBuf>,
        config: Option<&Bound<'_, PyAny>>,
        seed: u64,
    ) -> PyResult<Self> {
        let config = config_from(config)?;
        let inner = CoreSession::start(&manifest, pool.as_deref(), config, seed).map_err(session_error)?;
        Ok(Session { inner })
    }

    /// Builds a session from record dicts instead of manifest files.
    #[staticmethod]
    #[pyo3(signature = (posts, pool = None, config = None, seed = 0))]
    fn from_records(
        posts: &Bound<'_, PyAny>,
        pool: Option<&Bound<'_, PyAny>>,
        config: Option<&Bound<'_, PyAny>>,
        seed: u64,
    ) -> PyResult<Self> {
        let event: Vec<ManifestRecord> = from_py(posts)?;
        let pool: Vec<ManifestRecord> = match pool {
            Some(p) if !p.is_none() => from_py(p)?,
            _ => Vec::new(),
        };
        let source = CorpusSource::Inline { event, pool };
        let inner = CoreSession::from_source(source, config_from(config)?, seed).map_err(session_error)?;
        Ok(Session { inner })
    }

    #[staticmethod]
    fn restore(path: PathBuf) -> PyResult<Self> {
        let inner = CoreSession::restore(&path).map_err(session_error)?;
        Ok(Session { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(session_error)
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id().to_string()
    }

    #[getter]
    fn phase<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.phase())
    }

    #[getter]
    fn iteration(&self) -> u32 {
        self.inner.iteration()
    }

    #[getter]
    fn labeled_count(&self) -> usize {
        self.inner.labeled_count()
    }

    #[getter]
    fn pseudo_count(&self) -> usize {
        self.inner.pseudo_count()
    }

    /// Queued posts as dicts with `id`, `score` and `cluster`.
    fn pending<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.pending())
    }

    /// Labels queued posts from a `{id: label}` mapping.
    fn submit_labels(&mut self, labels: std::collections::BTreeMap<String, String>) -> PyResult<()> {
        let pairs = labels
            .into_iter()
            .map(|(id, l)| parse_label(&l).map(|l| (id, l)))
            .collect::<PyResult<Vec<_>>>()?;
        self.inner.submit_labels(&pairs).map_err(session_error)
    }

    fn answer_from_oracle(&mut self) -> PyResult<()> {
        self.inner.answer_from_oracle().map_err(session_error)
    }

    /// Trains on the current labels and queues the next batch.
    fn run_iteration(&mut self) -> PyResult<()> {
        self.inner.run_iteration().map_err(session_error)
    }

    /// Runs the remaining iterations with gold answers.
    fn run_oracle(&mut self) -> PyResult<()> {
        self.inner.run_oracle().map_err(session_error)
    }

    fn history<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.history())
    }

    fn reports<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.reports())
    }

    fn warnings<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.warnings())
    }

    /// Per-post predictions from the latest model, or `None` before training.
    fn predictions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.predictions())
    }

    fn projection(&self) -> Vec<(String, f64, f64)> {
        self.inner
            .projection()
            .into_iter()
            .map(|(id, [x, y])| (id, x, y))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Session(id={:?}, phase={:?}, iteration={})",
            self.inner.id(),
            self.inner.phase(),
            self.inner.iteration()
        )
    }
}

#[pymodule]
fn eventsift(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(write_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_distance, m)?)?;
    m.add_function(wrap_pyfunction!(build_knn_graph, m)?)?;
    m.add_function(wrap_pyfunction!(bald, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_class::<Session>()?;
    Ok(())
}
