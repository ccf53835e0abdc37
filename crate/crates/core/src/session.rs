//! The annotation loop: cold start, labeling, training, selection and
//! pseudo-labeling, plus the simulated-oracle benchmark.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    self, audit_records, cluster_candidates, cold_start_select, pseudo_label_select,
    random_cold_start, random_select, select_from_clusters, AcquisitionError, AuditRecord,
    Candidate, SelectConfig,
};
use crate::bgnn::{
    self, deterministic_predict, derive_seed, feature_matrix, mc_predict, read_checkpoint,
    write_checkpoint, Architecture, BgnnError, McPrediction, ModelConfig, ModelParams, TrainConfig,
};
use crate::corpus::{
    build_augmented_corpus, load_posts, BinaryLabel, ClassIndex, Corpus, CorpusError,
    LabelSource, LabelState, LabelValue, ManifestRecord, Post, Split, NUM_CLASSES,
};
use crate::knn_graph::{build_knn_graph, GraphError, SparseGraph};
use crate::projection::project_2d;

pub const SESSION_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] BgnnError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("operation needs phase {expected:?}, session is {found:?}")]
    WrongPhase { expected: Phase, found: Phase },
    #[error("unknown post id {0}")]
    UnknownId(String),
    #[error("post {0} is not awaiting annotation")]
    NotPending(String),
    #[error("post {0} already carries a human label")]
    AlreadyLabeled(String),
    #[error("post {0} appears twice in one submission")]
    DuplicateInBatch(String),
    #[error("post {0} has no gold label")]
    MissingGold(String),
    #[error("predictions and gold differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("nothing to score")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("session file: {0}")]
    Persist(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SessionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AwaitingAnnotation,
    Training,
    ReadyForSelection,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColdStart {
    Kmeans,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acquisition {
    /// Highest score per surviving cluster.
    ClusterTop,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub budget_schedule: Vec<usize>,
    pub k: usize,
    pub n_clusters: usize,
    pub min_cluster_size: usize,
    pub pseudo_per_cluster: usize,
    pub augmentation: bool,
    pub cold_start: ColdStart,
    pub acquisition: Acquisition,
    pub pseudo_labeling: bool,
    /// MC Dropout at inference and BALD scores. When off, one deterministic
    /// pass and `1 − max p` stand in.
    pub bayesian: bool,
    /// Report the mean of both classes' F1 instead of the informative one.
    pub macro_f1: bool,
    pub train: TrainConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            budget_schedule: vec![18, 16, 16],
            k: 16,
            n_clusters: 16,
            min_cluster_size: 16,
            pseudo_per_cluster: 16,
            augmentation: true,
            cold_start: ColdStart::Kmeans,
            acquisition: Acquisition::ClusterTop,
            pseudo_labeling: true,
            bayesian: true,
            macro_f1: false,
            train: TrainConfig::default(),
        }
    }
}

impl SessionConfig {
    /// Smaller network and a faster optimizer schedule that train in seconds
    /// on one CPU core. Selection settings are unchanged.
    pub fn desk_scale() -> Self {
        SessionConfig {
            train: TrainConfig {
                model: ModelConfig {
                    hidden1: 32,
                    hidden2: 64,
                    ..ModelConfig::default()
                },
                epochs: 200,
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
            ..SessionConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SessionError::InvalidConfig(m.to_string()));
        if self.budget_schedule.is_empty() || self.budget_schedule.contains(&0) {
            return bad("budget_schedule needs positive entries");
        }
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        if self.n_clusters == 0 {
            return bad("n_clusters must be >= 1");
        }
        self.train.validate()?;
        Ok(())
    }

    fn select_config(&self, budget: usize) -> SelectConfig {
        SelectConfig {
            n_clusters: self.n_clusters,
            min_cluster_size: self.min_cluster_size,
            budget,
        }
    }
}

/// Named benchmark configurations: the component ablations and the model
/// comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    RandomAll,
    PlOnly,
    AlOnly,
    IsOnly,
    AugOnly,
    NoPl,
    NoAl,
    NoIs,
    NoAug,
    Full,
    Mlp,
    Gnn,
    Bmlp,
    Bgnn,
}

impl Arm {
    pub const ABLATIONS: [Arm; 10] = [
        Arm::RandomAll,
        Arm::PlOnly,
        Arm::AlOnly,
        Arm::IsOnly,
        Arm::AugOnly,
        Arm::NoPl,
        Arm::NoAl,
        Arm::NoIs,
        Arm::NoAug,
        Arm::Full,
    ];
    pub const MODELS: [Arm; 4] = [Arm::Mlp, Arm::Gnn, Arm::Bmlp, Arm::Bgnn];

    pub fn name(self) -> &'static str {
        match self {
            Arm::RandomAll => "random-all",
            Arm::PlOnly => "pl-only",
            Arm::AlOnly => "al-only",
            Arm::IsOnly => "is-only",
            Arm::AugOnly => "aug-only",
            Arm::NoPl => "no-pl",
            Arm::NoAl => "no-al",
            Arm::NoIs => "no-is",
            Arm::NoAug => "no-aug",
            Arm::Full => "full",
            Arm::Mlp => "mlp",
            Arm::Gnn => "gnn",
            Arm::Bmlp => "bmlp",
            Arm::Bgnn => "bgnn",
        }
    }

    /// `(augmentation, kmeans cold start, cluster acquisition, pseudo labels)`
    pub fn toggles(self) -> (bool, bool, bool, bool) {
        match self {
            Arm::RandomAll => (false, false, false, false),
            Arm::PlOnly => (false, false, false, true),
            Arm::AlOnly => (false, false, true, false),
            Arm::IsOnly => (false, true, false, false),
            Arm::AugOnly => (true, false, false, false),
            Arm::NoPl => (true, true, true, false),
            Arm::NoAl => (true, true, false, true),
            Arm::NoIs => (true, false, true, true),
            Arm::NoAug => (false, true, true, true),
            _ => (true, true, true, true),
        }
    }

    /// Applies this arm's toggles on top of `base`.
    pub fn configure(self, base: &SessionConfig) -> SessionConfig {
        let (aug, kmeans, cluster, pseudo) = self.toggles();
        let mut config = base.clone();
        config.augmentation = aug;
        config.cold_start = if kmeans { ColdStart::Kmeans } else { ColdStart::Random };
        config.acquisition = if cluster {
            Acquisition::ClusterTop
        } else {
            Acquisition::Random
        };
        config.pseudo_labeling = pseudo;
        let (arch, bayesian) = match self {
            Arm::Mlp => (Architecture::Mlp, false),
            Arm::Gnn => (Architecture::Sage, false),
            Arm::Bmlp => (Architecture::Mlp, true),
            _ => (Architecture::Sage, true),
        };
        config.train.model.architecture = arch;
        config.bayesian = bayesian;
        config
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Arm::ABLATIONS
            .iter()
            .chain(&Arm::MODELS)
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown arm {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn binary_scores(tp: usize, fp: usize, fn_: usize) -> Scores {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        precision,
        recall,
        f1,
    }
}

/// Precision, recall and F1 for `positive`. Zero divisions give zero.
pub fn f1_score_for(
    predictions: &[BinaryLabel],
    gold: &[BinaryLabel],
    positive: BinaryLabel,
) -> Result<Scores> {
    if predictions.len() != gold.len() {
        return Err(SessionError::LengthMismatch(predictions.len(), gold.len()));
    }
    if predictions.is_empty() {
        return Err(SessionError::EmptyInput);
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p == positive, g == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(binary_scores(tp, fp, fn_))
}

/// Scores with `Informative` as the positive class.
pub fn f1_score(predictions: &[BinaryLabel], gold: &[BinaryLabel]) -> Result<Scores> {
    f1_score_for(predictions, gold, BinaryLabel::Informative)
}

/// Unweighted mean over both classes of precision, recall and F1.
pub fn macro_f1_score(predictions: &[BinaryLabel], gold: &[BinaryLabel]) -> Result<Scores> {
    let a = f1_score_for(predictions, gold, BinaryLabel::Informative)?;
    let b = f1_score_for(predictions, gold, BinaryLabel::NotInformative)?;
    Ok(Scores {
        precision: (a.precision + b.precision) / 2.0,
        recall: (a.recall + b.recall) / 2.0,
        f1: (a.f1 + b.f1) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub labeled_count: usize,
    pub iteration: u32,
    pub seed: u64,
    pub wall_time_secs: f64,
}

/// One completed training round, with test metrics when gold labels exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub labeled_count: usize,
    pub pseudo_count: usize,
    pub wall_time_secs: f64,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: String,
    /// `None` for the cold-start batch.
    pub score: Option<f64>,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SessionWarning {
    EmptyAugmentationPool,
    /// The unlabeled pool was smaller than the requested batch.
    PoolExhausted { iteration: u32, requested: usize, queued: usize },
    /// Every labeled post had the same class at this iteration.
    SingleClassTraining { iteration: u32 },
    /// All clusters were discarded; the batch came from the global ranking.
    ClusterFallback { iteration: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostPrediction {
    pub id: String,
    pub label: BinaryLabel,
    pub class: usize,
    /// Mean probability of the predicted class.
    pub confidence: f64,
}

/// Where a session's corpus came from, so a saved session can rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Manifests {
        manifest: PathBuf,
        pool: Option<PathBuf>,
    },
    Inline {
        event: Vec<ManifestRecord>,
        pool: Vec<ManifestRecord>,
    },
}

impl CorpusSource {
    fn posts(&self) -> Result<(Vec<Post>, Vec<Post>)> {
        Ok(match self {
            CorpusSource::Manifests { manifest, pool } => (
                load_posts(manifest)?,
                match pool {
                    Some(p) => load_posts(p)?,
                    None => Vec::new(),
                },
            ),
            CorpusSource::Inline { event, pool } => (
                event.iter().cloned().map(Post::from).collect(),
                pool.iter().cloned().map(Post::from).collect(),
            ),
        })
    }
}

/// Seed streams for the independent random steps of a session.
mod stream {
    pub const AUGMENTATION: u64 = 1;
    pub const COLD_START: u64 = 2;
    pub const TRAIN: u64 = 1_000;
    pub const PREDICT: u64 = 2_000;
    pub const SELECT: u64 = 3_000;
}

/// Model outputs kept between training and selection.
#[derive(Debug, Clone)]
struct Inference {
    mean_probs: Vec<[f64; NUM_CLASSES]>,
    scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    seed: u64,
    source: CorpusSource,
    corpus: Corpus,
    graph: SparseGraph,
    features: Array2<f32>,
    iteration: u32,
    phase: Phase,
    pending: Vec<QueueEntry>,
    history: Vec<IterationRecord>,
    warnings: Vec<SessionWarning>,
    model: Option<ModelParams<f32>>,
    inference: Option<Inference>,
    audit: Vec<AuditRecord>,
    iteration_started: Option<Instant>,
}

fn build_corpus(
    source: &CorpusSource,
    config: &SessionConfig,
    seed: u64,
) -> Result<(Corpus, SparseGraph, Vec<SessionWarning>)> {
    let (event, pool) = source.posts()?;
    let corpus = Corpus::new(event)?;
    let mut warnings = Vec::new();
    let corpus = if config.augmentation {
        let aug = build_augmented_corpus(corpus, &pool, derive_seed(seed, stream::AUGMENTATION))?;
        if aug.warning.is_some() {
            warnings.push(SessionWarning::EmptyAugmentationPool);
        }
        aug.corpus
    } else {
        corpus
    };
    let graph = build_knn_graph(&corpus, config.k)?;
    Ok((corpus, graph, warnings))
}

impl Session {
    /// Builds the corpus and graph and queues the cold-start batch.
    pub fn start(
        manifest: &Path,
        pool_manifest: Option<&Path>,
        config: SessionConfig,
        seed: u64,
    ) -> Result<Self> {
        let source = CorpusSource::Manifests {
            manifest: manifest.to_path_buf(),
            pool: pool_manifest.map(Path::to_path_buf),
        };
        Self::from_source(source, config, seed)
    }

    /// Same as [`Session::start`] for posts already in memory.
    pub fn from_posts(
        event_posts: &[Post],
        pool: &[Post],
        config: SessionConfig,
        seed: u64,
    ) -> Result<Self> {
        let source = CorpusSource::Inline {
            event: event_posts.iter().map(ManifestRecord::from).collect(),
            pool: pool.iter().map(ManifestRecord::from).collect(),
        };
        Self::from_source(source, config, seed)
    }

    pub fn from_source(source: CorpusSource, config: SessionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (corpus, graph, warnings) = build_corpus(&source, &config, seed)?;
        let features = feature_matrix(&corpus);
        let mut session = Session {
            id: format!("s{seed:016x}"),
            config,
            seed,
            source,
            corpus,
            graph,
            features,
            iteration: 0,
            phase: Phase::AwaitingAnnotation,
            pending: Vec::new(),
            history: Vec::new(),
            warnings,
            model: None,
            inference: None,
            audit: Vec::new(),
            iteration_started: None,
        };
        session.cold_start()?;
        Ok(session)
    }

    fn cold_start(&mut self) -> Result<()> {
        let budget = self.config.budget_schedule[0];
        let seed = derive_seed(self.seed, stream::COLD_START);
        let picked = match self.config.cold_start {
            ColdStart::Kmeans => cold_start_select(&self.corpus, budget, seed)?,
            ColdStart::Random => random_cold_start(&self.corpus, budget, seed),
        };
        if picked.pool_exhausted {
            self.warnings.push(SessionWarning::PoolExhausted {
                iteration: 0,
                requested: budget,
                queued: picked.ids.len(),
            });
        }
        self.pending = picked
            .ids
            .into_iter()
            .map(|id| QueueEntry {
                id,
                score: None,
                cluster: None,
            })
            .collect();
        if self.pending.is_empty() {
            self.phase = Phase::Training;
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn graph(&self) -> &SparseGraph {
        &self.graph
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn pending(&self) -> &[QueueEntry] {
        &self.pending
    }

    pub fn pending_ids(&self) -> Vec<String> {
        self.pending.iter().map(|e| e.id.clone()).collect()
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn reports(&self) -> Vec<MetricsReport> {
        self.history.iter().filter_map(|r| r.metrics.clone()).collect()
    }

    pub fn warnings(&self) -> &[SessionWarning] {
        &self.warnings
    }

    pub fn model(&self) -> Option<&ModelParams<f32>> {
        self.model.as_ref()
    }

    /// Candidate records from the most recent selection.
    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    /// Posts with a human or oracle label.
    pub fn labeled_count(&self) -> usize {
        self.corpus.labels().iter().filter(|l| l.is_annotation()).count()
    }

    pub fn pseudo_count(&self) -> usize {
        self.corpus
            .labels()
            .iter()
            .filter(|l| l.value.is_pseudo())
            .count()
    }

    pub fn pseudo_labeled_ids(&self) -> Vec<String> {
        (0..self.corpus.len())
            .filter(|&i| self.corpus.label(i).value.is_pseudo())
            .map(|i| self.corpus.post(i).id.clone())
            .collect()
    }

    fn require(&self, expected: Phase) -> Result<()> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(SessionError::WrongPhase {
                expected,
                found: self.phase,
            })
        }
    }

    /// Records analyst labels for queued posts. The whole batch is validated
    /// before anything changes.
    pub fn submit_labels(&mut self, labels: &[(String, BinaryLabel)]) -> Result<()> {
        self.apply_labels(labels, LabelSource::Human)
    }

    fn apply_labels(&mut self, labels: &[(String, BinaryLabel)], source: LabelSource) -> Result<()> {
        self.require(Phase::AwaitingAnnotation)?;
        let pending: BTreeSet<&str> = self.pending.iter().map(|e| e.id.as_str()).collect();
        let mut seen = BTreeSet::new();
        let mut resolved = Vec::with_capacity(labels.len());
        for (id, label) in labels {
            let idx = self
                .corpus
                .index_of(id)
                .ok_or_else(|| SessionError::UnknownId(id.clone()))?;
            if !seen.insert(id.as_str()) {
                return Err(SessionError::DuplicateInBatch(id.clone()));
            }
            if !pending.contains(id.as_str()) {
                return Err(if self.corpus.label(idx).is_annotation() {
                    SessionError::AlreadyLabeled(id.clone())
                } else {
                    SessionError::NotPending(id.clone())
                });
            }
            resolved.push((idx, *label));
        }
        for (idx, label) in resolved {
            self.corpus.set_label(
                idx,
                LabelState {
                    value: LabelValue::from(label),
                    source,
                    iteration_assigned: self.iteration,
                },
            );
        }
        self.pending.retain(|e| !seen.contains(e.id.as_str()));
        if self.pending.is_empty() {
            self.phase = Phase::Training;
        }
        Ok(())
    }

    /// Answers every queued post from its gold label.
    pub fn answer_from_oracle(&mut self) -> Result<()> {
        let mut labels = Vec::with_capacity(self.pending.len());
        for entry in &self.pending {
            let idx = self.corpus.index_of(&entry.id).expect("queued ids exist");
            let gold = self.corpus.post(idx).gold_label;
            labels.push((
                entry.id.clone(),
                gold.ok_or_else(|| SessionError::MissingGold(entry.id.clone()))?,
            ));
        }
        self.apply_labels(&labels, LabelSource::Oracle)
    }

    fn training_set(&self) -> Vec<(usize, ClassIndex)> {
        (0..self.corpus.len())
            .filter_map(|i| self.corpus.label(i).value.class_index().map(|c| (i, c)))
            .collect()
    }

    /// Trains a fresh model on every labeled post (annotations, other-event
    /// posts and the previous round's pseudo labels), then scores the graph.
    pub fn train_step(&mut self) -> Result<()> {
        self.require(Phase::Training)?;
        self.iteration_started = Some(Instant::now());
        let labeled = self.training_set();
        let mut train_config = self.config.train.clone();
        train_config.seed = derive_seed(self.seed, stream::TRAIN + self.iteration as u64);
        let outcome = bgnn::train_nodes(&self.features, &self.graph, &train_config, &labeled)?;
        if outcome.single_class {
            self.warnings.push(SessionWarning::SingleClassTraining {
                iteration: self.iteration,
            });
        }
        self.model = Some(outcome.params);
        self.inference = Some(self.infer()?);
        self.phase = Phase::ReadyForSelection;
        Ok(())
    }

    fn predict_seed(&self) -> u64 {
        derive_seed(self.seed, stream::PREDICT + self.iteration as u64)
    }

    fn infer(&self) -> Result<Inference> {
        let params = self.model.as_ref().expect("trained");
        let preds: Vec<McPrediction> = if self.config.bayesian {
            mc_predict(
                params,
                &self.graph,
                &self.features,
                self.config.train.mc_samples,
                self.predict_seed(),
            )?
        } else {
            deterministic_predict(params, &self.graph, &self.features)?
        };
        let mut mean_probs = Vec::with_capacity(preds.len());
        let mut scores = Vec::with_capacity(preds.len());
        for p in &preds {
            let m = p.mean_probabilities();
            mean_probs.push([m[0], m[1], m[2]]);
            scores.push(if self.config.bayesian {
                acquisition::bald(p.logprobs().view())?
            } else {
                p.max_prob_uncertainty()
            });
        }
        Ok(Inference { mean_probs, scores })
    }

    fn predicted_class(&self, idx: usize) -> Option<ClassIndex> {
        let inf = self.inference.as_ref()?;
        let row = &inf.mean_probs[idx];
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if row[c] > row[best] {
                best = c;
            }
        }
        Some(ClassIndex(best))
    }

    fn evaluate(&self, labeled_count: usize, wall: f64) -> Option<MetricsReport> {
        let mut predicted = Vec::new();
        let mut gold = Vec::new();
        for (i, post) in self.corpus.posts().iter().enumerate() {
            if post.split == Split::Test {
                if let Some(g) = post.gold_label {
                    predicted.push(self.predicted_class(i)?.to_binary());
                    gold.push(g);
                }
            }
        }
        let scores = if self.config.macro_f1 {
            macro_f1_score(&predicted, &gold)
        } else {
            f1_score(&predicted, &gold)
        }
        .ok()?;
        Some(MetricsReport {
            f1: scores.f1,
            precision: scores.precision,
            recall: scores.recall,
            labeled_count,
            iteration: self.iteration,
            seed: self.seed,
            wall_time_secs: wall,
        })
    }

    /// Reports metrics, clears old pseudo labels and queues the next batch.
    pub fn select_step(&mut self) -> Result<()> {
        self.require(Phase::ReadyForSelection)?;
        let labeled_count = self.labeled_count();
        let trained_with_pseudo = self.pseudo_count();
        self.corpus.clear_pseudo_labels();

        let next = self.iteration as usize + 1;
        let pool = self.corpus.unlabeled_event_train();
        let done = next >= self.config.budget_schedule.len() || pool.is_empty();
        if !done {
            self.select_batch(pool, self.config.budget_schedule[next])?;
        } else {
            self.audit.clear();
        }

        let wall = self
            .iteration_started
            .take()
            .map_or(0.0, |t| t.elapsed().as_secs_f64());
        let metrics = self.evaluate(labeled_count, wall);
        self.history.push(IterationRecord {
            iteration: self.iteration,
            labeled_count,
            pseudo_count: trained_with_pseudo,
            wall_time_secs: wall,
            metrics,
        });
        if done {
            self.phase = Phase::Completed;
        } else {
            self.iteration += 1;
            self.phase = if self.pending.is_empty() {
                Phase::Training
            } else {
                Phase::AwaitingAnnotation
            };
        }
        Ok(())
    }

    fn select_batch(&mut self, pool: Vec<usize>, budget: usize) -> Result<()> {
        let inf = self.inference.as_ref().expect("trained");
        let candidates: Vec<Candidate> = pool
            .iter()
            .map(|&i| Candidate {
                id: self.corpus.post(i).id.clone(),
                score: inf.scores[i],
                predicted: self.predicted_class(i).expect("trained"),
            })
            .collect();
        let seed = derive_seed(self.seed, stream::SELECT + self.iteration as u64);
        let select = self.config.select_config(budget);

        if pool.len() < budget {
            self.warnings.push(SessionWarning::PoolExhausted {
                iteration: self.iteration + 1,
                requested: budget,
                queued: pool.len(),
            });
        }

        let mut clusters = None;
        let mut pseudo = Vec::new();
        let annotate: Vec<usize> = if candidates.len() <= budget {
            let mut all: Vec<usize> = (0..candidates.len()).collect();
            all.sort_by(|&a, &b| candidates[b].score.total_cmp(&candidates[a].score).then(a.cmp(&b)));
            all
        } else {
            let embeddings: Vec<&[f32]> = pool
                .iter()
                .map(|&i| self.corpus.post(i).fused_embedding.as_slice())
                .collect();
            let needs_clusters =
                self.config.acquisition == Acquisition::ClusterTop || self.config.pseudo_labeling;
            let cl = if needs_clusters {
                Some(cluster_candidates(&embeddings, &select, seed)?)
            } else {
                None
            };
            let annotate = match self.config.acquisition {
                Acquisition::ClusterTop => {
                    let sel = select_from_clusters(
                        &candidates,
                        cl.clone().expect("clustered"),
                        budget,
                        seed,
                    )?;
                    if sel.fallback {
                        self.warnings.push(SessionWarning::ClusterFallback {
                            iteration: self.iteration,
                        });
                    }
                    sel.positions
                }
                Acquisition::Random => {
                    random_select(candidates.len(), budget, derive_seed(seed, 2))
                }
            };
            if self.config.pseudo_labeling {
                let exclude: BTreeSet<usize> = annotate.iter().copied().collect();
                pseudo = pseudo_label_select(
                    &candidates,
                    cl.as_ref().expect("clustered"),
                    self.config.pseudo_per_cluster,
                    &exclude,
                );
            }
            clusters = cl;
            annotate
        };

        for &(p, class) in &pseudo {
            self.corpus.set_label(
                pool[p],
                LabelState {
                    value: LabelValue::pseudo_from_class(class),
                    source: LabelSource::Pseudo,
                    iteration_assigned: self.iteration + 1,
                },
            );
        }
        self.pending = annotate
            .iter()
            .map(|&p| QueueEntry {
                id: candidates[p].id.clone(),
                score: Some(candidates[p].score),
                cluster: clusters.as_ref().map(|c| c.assignment[p]),
            })
            .collect();
        self.audit = audit_records(
            self.iteration + 1,
            &candidates,
            clusters.as_ref(),
            &annotate,
            &pseudo,
        );
        Ok(())
    }

    /// One full round: train, report, select.
    pub fn run_iteration(&mut self) -> Result<()> {
        self.train_step()?;
        self.select_step()
    }

    /// Drives the loop to completion, answering every batch from gold labels.
    pub fn run_oracle(&mut self) -> Result<()> {
        loop {
            match self.phase {
                Phase::AwaitingAnnotation => self.answer_from_oracle()?,
                Phase::Training => self.run_iteration()?,
                Phase::ReadyForSelection => self.select_step()?,
                Phase::Completed => return Ok(()),
            }
        }
    }

    /// Current predictions for every event post, once a model exists.
    pub fn predictions(&self) -> Option<Vec<PostPrediction>> {
        let inf = self.inference.as_ref()?;
        Some(
            (0..self.corpus.len())
                .filter(|&i| !self.corpus.is_augmentation(i))
                .map(|i| {
                    let class = self.predicted_class(i).expect("trained");
                    PostPrediction {
                        id: self.corpus.post(i).id.clone(),
                        label: class.to_binary(),
                        class: class.0,
                        confidence: inf.mean_probs[i][class.0],
                    }
                })
                .collect(),
        )
    }

    /// Score of a post from the latest model, if any.
    pub fn score_of(&self, id: &str) -> Option<f64> {
        let inf = self.inference.as_ref()?;
        self.corpus.index_of(id).map(|i| inf.scores[i])
    }

    /// 2D principal-component coordinates of every event post.
    pub fn projection(&self) -> Vec<(String, [f64; 2])> {
        let idx: Vec<usize> = (0..self.corpus.len())
            .filter(|&i| !self.corpus.is_augmentation(i))
            .collect();
        let vectors: Vec<&[f32]> = idx
            .iter()
            .map(|&i| self.corpus.post(i).fused_embedding.as_slice())
            .collect();
        idx.iter()
            .zip(project_2d(&vectors))
            .map(|(&i, xy)| (self.corpus.post(i).id.clone(), xy))
            .collect()
    }

    pub fn to_file(&self) -> Result<SessionFile> {
        let checkpoint = match &self.model {
            Some(params) => {
                let mut buf = Vec::new();
                write_checkpoint(params, &mut buf)?;
                Some(BASE64.encode(buf))
            }
            None => None,
        };
        let labels = (0..self.corpus.len())
            .filter(|&i| !self.corpus.label(i).is_unlabeled())
            .map(|i| (self.corpus.post(i).id.clone(), *self.corpus.label(i)))
            .collect();
        Ok(SessionFile {
            version: SESSION_FILE_VERSION,
            session_id: self.id.clone(),
            source: self.source.clone(),
            config: self.config.clone(),
            seed: self.seed,
            iteration: self.iteration,
            phase: self.phase,
            pending: self.pending.clone(),
            labels,
            history: self.history.clone(),
            warnings: self.warnings.clone(),
            audit: self.audit.clone(),
            checkpoint,
        })
    }

    pub fn from_file(file: SessionFile) -> Result<Self> {
        if file.version != SESSION_FILE_VERSION {
            return Err(SessionError::Persist(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let (mut corpus, graph, _) = build_corpus(&file.source, &file.config, file.seed)?;
        for i in 0..corpus.len() {
            if !corpus.is_augmentation(i) {
                corpus.set_label(i, LabelState::UNLABELED);
            }
        }
        for (id, state) in &file.labels {
            let idx = corpus
                .index_of(id)
                .ok_or_else(|| SessionError::Persist(format!("label for unknown post {id}")))?;
            corpus.set_label(idx, *state);
        }
        let model = match &file.checkpoint {
            Some(b64) => {
                let bytes = BASE64
                    .decode(b64)
                    .map_err(|e| SessionError::Persist(e.to_string()))?;
                Some(read_checkpoint(bytes.as_slice())?)
            }
            None => None,
        };
        let features = feature_matrix(&corpus);
        let mut session = Session {
            id: file.session_id,
            config: file.config,
            seed: file.seed,
            source: file.source,
            corpus,
            graph,
            features,
            iteration: file.iteration,
            phase: file.phase,
            pending: file.pending,
            history: file.history,
            warnings: file.warnings,
            model,
            inference: None,
            audit: file.audit,
            iteration_started: None,
        };
        if session.model.is_some() {
            // Inference seeds are a function of session seed and iteration;
            // after selection the counter has already moved on.
            let at = match session.phase {
                Phase::ReadyForSelection | Phase::Completed => session.iteration,
                _ => session.iteration.saturating_sub(1),
            };
            let current = session.iteration;
            session.iteration = at;
            session.inference = Some(session.infer()?);
            session.iteration = current;
        }
        Ok(session)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = self.to_file()?;
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn restore(path: &Path) -> Result<Self> {
        let file: SessionFile = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_file(file)
    }
}

/// On-disk form of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub version: u32,
    pub session_id: String,
    pub source: CorpusSource,
    pub config: SessionConfig,
    pub seed: u64,
    pub iteration: u32,
    pub phase: Phase,
    pub pending: Vec<QueueEntry>,
    pub labels: Vec<(String, LabelState)>,
    pub history: Vec<IterationRecord>,
    pub warnings: Vec<SessionWarning>,
    pub audit: Vec<AuditRecord>,
    /// Base64 of the binary model checkpoint.
    pub checkpoint: Option<String>,
}

/// One line of benchmark output. Wall time is kept out so repeated runs
/// produce identical records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub arm: String,
    pub event: String,
    pub seed: u64,
    pub iteration: u32,
    pub labeled_count: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub budgets: Vec<usize>,
    /// Mean F1 per cumulative budget over every run.
    pub means: Vec<f64>,
    /// Standard deviation over every run (seeds × events).
    pub stds: Vec<f64>,
    /// Standard deviation over seeds within each event, averaged over events.
    pub seed_stds: Vec<f64>,
    pub sum_mean: f64,
    /// Sum of the per-budget deviations, as in the reference table layout.
    pub sum_std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub records: Vec<BenchmarkRecord>,
    pub summaries: Vec<ArmSummary>,
    /// Full per-run reports, wall time included.
    pub reports: Vec<(String, String, Vec<MetricsReport>)>,
}

/// One event-of-interest dataset.
#[derive(Debug, Clone)]
pub struct BenchmarkEvent {
    pub posts: Vec<Post>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(arm: &str, budgets: &[usize], runs: &[(&str, u64, Vec<MetricsReport>)]) -> ArmSummary {
    let mut means = Vec::new();
    let mut stds = Vec::new();
    let mut seed_stds = Vec::new();
    let events: BTreeSet<&str> = runs.iter().map(|r| r.0).collect();
    for b in 0..budgets.len() {
        let at = |reps: &[MetricsReport]| reps.get(b).map(|r| r.f1);
        let all: Vec<f64> = runs.iter().filter_map(|r| at(&r.2)).collect();
        let (m, s) = mean_std(&all);
        means.push(m);
        stds.push(s);
        let per_event: Vec<f64> = events
            .iter()
            .map(|e| {
                let v: Vec<f64> = runs.iter().filter(|r| r.0 == *e).filter_map(|r| at(&r.2)).collect();
                mean_std(&v).1
            })
            .collect();
        seed_stds.push(mean_std(&per_event).0);
    }
    ArmSummary {
        arm: arm.to_string(),
        budgets: budgets
            .iter()
            .scan(0, |acc, &b| {
                *acc += b;
                Some(*acc)
            })
            .collect(),
        sum_mean: means.iter().sum(),
        sum_std: stds.iter().sum(),
        means,
        stds,
        seed_stds,
        runs: runs.len(),
    }
}

/// Runs every `(arm, event, seed)` loop under oracle answers and aggregates
/// F1 per cumulative budget. Runs are independent and execute in parallel;
/// the output order does not depend on scheduling.
pub fn run_oracle_benchmark(
    events: &[BenchmarkEvent],
    pool: &[Post],
    base: &SessionConfig,
    arms: &[Arm],
    seeds: &[u64],
) -> Result<BenchmarkReport> {
    for event in events {
        if let Some(p) = event
            .posts
            .iter()
            .find(|p| p.gold_label.is_none())
        {
            return Err(SessionError::MissingGold(p.id.clone()));
        }
    }
    let jobs: Vec<(Arm, usize, u64)> = arms
        .iter()
        .flat_map(|&a| (0..events.len()).flat_map(move |e| seeds.iter().map(move |&s| (a, e, s))))
        .collect();
    let results: Vec<Result<(Arm, String, u64, Vec<MetricsReport>)>> = jobs
        .par_iter()
        .map(|&(arm, e, seed)| {
            let mut session =
                Session::from_posts(&events[e].posts, pool, arm.configure(base), seed)?;
            session.run_oracle()?;
            let name = session.corpus().event_of_interest().to_string();
            Ok((arm, name, seed, session.reports()))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut reports = Vec::new();
    for (arm, event, seed, reps) in &results {
        for r in reps {
            records.push(BenchmarkRecord {
                arm: arm.name().to_string(),
                event: event.clone(),
                seed: *seed,
                iteration: r.iteration,
                labeled_count: r.labeled_count,
                f1: r.f1,
                precision: r.precision,
                recall: r.recall,
            });
        }
        reports.push((arm.name().to_string(), event.clone(), reps.clone()));
    }
    let mut summaries = Vec::new();
    for &arm in arms {
        let runs: Vec<(&str, u64, Vec<MetricsReport>)> = results
            .iter()
            .filter(|r| r.0 == arm)
            .map(|r| (r.1.as_str(), r.2, r.3.clone()))
            .collect();
        summaries.push(summarize(arm.name(), &base.budget_schedule, &runs));
    }
    Ok(BenchmarkReport {
        records,
        summaries,
        reports,
    })
}

/// Loads each manifest and the optional pool, then runs the benchmark.
pub fn run_oracle_benchmark_files(
    manifests: &[PathBuf],
    pool_manifest: Option<&Path>,
    base: &SessionConfig,
    arms: &[Arm],
    seeds: &[u64],
) -> Result<BenchmarkReport> {
    let events = manifests
        .iter()
        .map(|m| Ok(BenchmarkEvent { posts: load_posts(m)? }))
        .collect::<Result<Vec<_>>>()?;
    let pool = match pool_manifest {
        Some(p) => load_posts(p)?,
        None => Vec::new(),
    };
    run_oracle_benchmark(&events, &pool, base, arms, seeds)
}

pub fn write_records<W: std::io::Write>(records: &[BenchmarkRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Fixed-width table of F1 percentages, one row per arm.
pub fn format_summary_table(summaries: &[ArmSummary]) -> String {
    let Some(first) = summaries.first() else {
        return String::new();
    };
    let mut out = format!("{:<12}", "arm");
    for b in &first.budgets {
        out.push_str(&format!(" {:>12}", b));
    }
    out.push_str(&format!(" {:>14}\n", "Sum"));
    for s in summaries {
        out.push_str(&format!("{:<12}", s.arm));
        for (m, sd) in s.means.iter().zip(&s.stds) {
            out.push_str(&format!(" {:>12}", format!("{:.1}±{:.1}", 100.0 * m, 100.0 * sd)));
        }
        out.push_str(&format!(
            " {:>14}\n",
            format!("{:.1}±{:.1}", 100.0 * s.sum_mean, 100.0 * s.sum_std)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticConfig};

    fn tiny_config() -> SessionConfig {
        let mut c = SessionConfig::desk_scale();
        c.train.model.hidden1 = 8;
        c.train.model.hidden2 = 8;
        c.train.epochs = 20;
        c
    }

    fn small_data() -> crate::synthetic::SyntheticData {
        generate(
            &SyntheticConfig {
                train: 200,
                test: 60,
                pool_size: 100,
                same_type_pool: 5,
                ..SyntheticConfig::default()
            },
            1,
        )
    }

    #[test]
    fn f1_examples() {
        use BinaryLabel::{Informative as I, NotInformative as N};
        let gold = [I, N, I, N];
        assert_eq!(f1_score(&gold, &gold).unwrap().f1, 1.0);
        assert_eq!(f1_score(&[N, N, N, N], &gold).unwrap().f1, 0.0);
        let gold: Vec<BinaryLabel> = [vec![I; 6], vec![N; 2], vec![I; 2], vec![N; 2]].concat();
        let pred: Vec<BinaryLabel> = [vec![I; 6], vec![I; 2], vec![N; 2], vec![N; 2]].concat();
        let s = f1_score(&pred, &gold).unwrap();
        assert!((s.precision - 0.75).abs() < 1e-12);
        assert!((s.recall - 0.75).abs() < 1e-12);
        assert!((s.f1 - 0.75).abs() < 1e-12);
        assert!(matches!(
            f1_score(&[I], &[I, N]),
            Err(SessionError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn start_queues_cold_start_batch_deterministically() {
        let data = small_data();
        let a = Session::from_posts(&data.event_posts, &data.pool, tiny_config(), 3).unwrap();
        let b = Session::from_posts(&data.event_posts, &data.pool, tiny_config(), 3).unwrap();
        assert_eq!(a.pending().len(), 18);
        assert_eq!(a.pending_ids(), b.pending_ids());
        assert_eq!(a.phase(), Phase::AwaitingAnnotation);
        assert_eq!(a.corpus().augmentation_ids().len(), 100);
    }

    #[test]
    fn tiny_pool_queues_everything_with_warning() {
        let data = generate(
            &SyntheticConfig {
                train: 10,
                test: 5,
                pool_size: 5,
                ..SyntheticConfig::default()
            },
            2,
        );
        let s = Session::from_posts(&data.event_posts, &data.pool, tiny_config(), 0).unwrap();
        assert_eq!(s.pending().len(), 10);
        assert!(s
            .warnings()
            .iter()
            .any(|w| matches!(w, SessionWarning::PoolExhausted { queued: 10, .. })));
    }

    #[test]
    fn submission_rules() {
        let data = small_data();
        let mut s = Session::from_posts(&data.event_posts, &data.pool, tiny_config(), 3).unwrap();
        let ids = s.pending_ids();
        let five: Vec<(String, BinaryLabel)> = ids[..5]
            .iter()
            .map(|id| (id.clone(), BinaryLabel::Informative))
            .collect();
        s.submit_labels(&five).unwrap();
        assert_eq!(s.pending().len(), 13);
        assert_eq!(s.phase(), Phase::AwaitingAnnotation);

        let before = s.to_file().unwrap();
        let bad = vec![
            (ids[5].clone(), BinaryLabel::Informative),
            ("te00000".to_string(), BinaryLabel::Informative),
        ];
        assert!(matches!(s.submit_labels(&bad), Err(SessionError::NotPending(_))));
        assert!(matches!(
            s.submit_labels(&five[..1]),
            Err(SessionError::AlreadyLabeled(_))
        ));
        assert!(matches!(
            s.submit_labels(&[("nope".into(), BinaryLabel::Informative)]),
            Err(SessionError::UnknownId(_))
        ));
        let dup = vec![
            (ids[6].clone(), BinaryLabel::Informative),
            (ids[6].clone(), BinaryLabel::NotInformative),
        ];
        assert!(matches!(s.submit_labels(&dup), Err(SessionError::DuplicateInBatch(_))));
        assert_eq!(s.to_file().unwrap(), before);

        let rest: Vec<(String, BinaryLabel)> = ids[5..]
            .iter()
            .map(|id| (id.clone(), BinaryLabel::NotInformative))
            .collect();
        s.submit_labels(&rest).unwrap();
        assert_eq!(s.phase(), Phase::Training);
        assert!(matches!(
            s.submit_labels(&rest),
            Err(SessionError::WrongPhase { .. })
        ));
    }

    #[test]
    fn oracle_loop_follows_budget_schedule() {
        let data = small_data();
        let mut s = Session::from_posts(&data.event_posts, &data.pool, tiny_config(), 4).unwrap();
        s.answer_from_oracle().unwrap();
        s.run_iteration().unwrap();
        assert_eq!(s.phase(), Phase::AwaitingAnnotation);
        assert_eq!(s.pending().len(), 16);
        assert!(s.pseudo_count() > 0);
        let pending: BTreeSet<String> = s.pending_ids().into_iter().collect();
        for id in s.pseudo_labeled_ids() {
            assert!(!pending.contains(&id));
            let post = s.corpus().post(s.corpus().index_of(&id).unwrap());
            assert_eq!(post.split, Split::Train);
        }
        s.run_oracle().unwrap();
        assert_eq!(s.phase(), Phase::Completed);
        let counts: Vec<usize> = s.reports().iter().map(|r| r.labeled_count).collect();
        assert_eq!(counts, [18, 34, 50]);
    }

    #[test]
    fn zero_dropout_still_fills_quota() {
        let data = small_data();
        let mut c = tiny_config();
        c.train.model.dropout_p = 0.0;
        let mut s = Session::from_posts(&data.event_posts, &data.pool, c, 5).unwrap();
        s.answer_from_oracle().unwrap();
        s.run_iteration().unwrap();
        assert_eq!(s.pending().len(), 16);
        assert!(s.audit().iter().all(|r| r.bald_score == 0.0));
    }

    #[test]
    fn restore_mid_loop_matches_uninterrupted_run() {
        let data = small_data();
        let mut a = Session::from_posts(&data.event_posts, &data.pool, tiny_config(), 6).unwrap();
        a.answer_from_oracle().unwrap();
        a.run_iteration().unwrap();
        let file = a.to_file().unwrap();
        let json = serde_json::to_string(&file).unwrap();
        let mut b = Session::from_file(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(b.predictions(), a.predictions());
        a.run_oracle().unwrap();
        b.run_oracle().unwrap();
        let strip = |s: &Session| {
            s.reports()
                .into_iter()
                .map(|mut r| {
                    r.wall_time_secs = 0.0;
                    r
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn arms_parse_and_configure() {
        for arm in Arm::ABLATIONS.iter().chain(&Arm::MODELS) {
            assert_eq!(arm.name().parse::<Arm>().unwrap(), *arm);
        }
        let base = SessionConfig::default();
        let r = Arm::RandomAll.configure(&base);
        assert!(!r.augmentation && !r.pseudo_labeling);
        assert_eq!(r.acquisition, Acquisition::Random);
        let m = Arm::Mlp.configure(&base);
        assert!(!m.bayesian);
        assert_eq!(m.train.model.architecture, Architecture::Mlp);
        assert!("bogus".parse::<Arm>().is_err());
    }

    #[test]
    fn summary_sums_columns() {
        let rep = |f1: f64| MetricsReport {
            f1,
            precision: 0.0,
            recall: 0.0,
            labeled_count: 0,
            iteration: 0,
            seed: 0,
            wall_time_secs: 0.0,
        };
        let runs = vec![
            ("e", 0, vec![rep(0.6), rep(0.7), rep(0.8)]),
            ("e", 1, vec![rep(0.8), rep(0.7), rep(0.6)]),
        ];
        let s = summarize("full", &[18, 16, 16], &runs);
        assert_eq!(s.budgets, [18, 34, 50]);
        assert!((s.sum_mean - 2.1).abs() < 1e-12);
        assert!((s.sum_std - s.stds.iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(s.stds, s.seed_stds);
        let table = format_summary_table(&[s]);
        assert!(table.contains("Sum") && table.contains("210.0"));
    }
}
