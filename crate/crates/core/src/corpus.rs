//! Posts, label state, manifest ingestion and the augmented training corpus.
//!
//! A corpus holds the posts of one event of interest plus, optionally, an
//! augmentation set drawn from other events. Augmentation posts enter the
//! training split already labeled with the third class, `OtherEvent`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of training classes: informative, not informative, another event.
pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("post {id}: embedding dimensions ({image}, {text}) differ from corpus ({expected_image}, {expected_text})")]
    DimensionMismatch {
        id: String,
        image: usize,
        text: usize,
        expected_image: usize,
        expected_text: usize,
    },
    #[error("duplicate post id {0}")]
    DuplicateId(String),
    #[error("post {0}: embedding contains NaN or Inf")]
    NonFinite(String),
    #[error("post {0}: missing image or text embedding")]
    MissingModality(String),
    #[error("post {id} belongs to event {found}, expected {expected}")]
    MixedEvents {
        id: String,
        found: String,
        expected: String,
    },
    #[error("manifest contains no posts")]
    Empty,
    #[error("unknown post id {0}")]
    UnknownId(String),
    #[error("unlabeled state has no binary label")]
    UnlabeledState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Binary label space used by analysts and by evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    Informative,
    NotInformative,
}

impl BinaryLabel {
    pub fn class_index(self) -> usize {
        match self {
            BinaryLabel::Informative => 0,
            BinaryLabel::NotInformative => 1,
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinaryLabel::Informative => "informative",
            BinaryLabel::NotInformative => "not_informative",
        })
    }
}

/// Training class index. `0` informative, `1` not informative, `2` another event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassIndex(pub usize);

impl ClassIndex {
    pub const INFORMATIVE: ClassIndex = ClassIndex(0);
    pub const NOT_INFORMATIVE: ClassIndex = ClassIndex(1);
    pub const OTHER_EVENT: ClassIndex = ClassIndex(2);

    /// Collapses the three training classes onto the binary evaluation space.
    pub fn to_binary(self) -> BinaryLabel {
        if self == ClassIndex::INFORMATIVE {
            BinaryLabel::Informative
        } else {
            BinaryLabel::NotInformative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelValue {
    Unlabeled,
    Informative,
    NotInformative,
    OtherEvent,
    PseudoInformative,
    PseudoNotInformative,
    PseudoOtherEvent,
}

impl LabelValue {
    pub fn is_pseudo(self) -> bool {
        matches!(
            self,
            LabelValue::PseudoInformative
                | LabelValue::PseudoNotInformative
                | LabelValue::PseudoOtherEvent
        )
    }

    /// Training class for a labeled value; `None` when unlabeled.
    pub fn class_index(self) -> Option<ClassIndex> {
        match self {
            LabelValue::Unlabeled => None,
            LabelValue::Informative | LabelValue::PseudoInformative => {
                Some(ClassIndex::INFORMATIVE)
            }
            LabelValue::NotInformative | LabelValue::PseudoNotInformative => {
                Some(ClassIndex::NOT_INFORMATIVE)
            }
            LabelValue::OtherEvent | LabelValue::PseudoOtherEvent => Some(ClassIndex::OTHER_EVENT),
        }
    }

    pub fn pseudo_from_class(class: ClassIndex) -> LabelValue {
        match class.0 {
            0 => LabelValue::PseudoInformative,
            1 => LabelValue::PseudoNotInformative,
            _ => LabelValue::PseudoOtherEvent,
        }
    }
}

impl From<BinaryLabel> for LabelValue {
    fn from(label: BinaryLabel) -> Self {
        match label {
            BinaryLabel::Informative => LabelValue::Informative,
            BinaryLabel::NotInformative => LabelValue::NotInformative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelSource {
    Human,
    Oracle,
    Auto,
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelState {
    pub value: LabelValue,
    pub source: LabelSource,
    pub iteration_assigned: u32,
}

impl LabelState {
    pub const UNLABELED: LabelState = LabelState {
        value: LabelValue::Unlabeled,
        source: LabelSource::Auto,
        iteration_assigned: 0,
    };

    pub fn is_unlabeled(&self) -> bool {
        self.value == LabelValue::Unlabeled
    }

    /// Labels that came from a person or a simulated person.
    pub fn is_annotation(&self) -> bool {
        matches!(self.source, LabelSource::Human | LabelSource::Oracle)
            && !self.is_unlabeled()
    }
}

/// Projects a training label onto the binary evaluation space; another-event
/// posts count as not informative.
pub fn effective_binary_label(state: &LabelState) -> Result<BinaryLabel, CorpusError> {
    state
        .value
        .class_index()
        .map(ClassIndex::to_binary)
        .ok_or(CorpusError::UnlabeledState)
}

/// One social-media item with its precomputed modality embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Post {
    pub id: String,
    pub text: String,
    pub image_ref: String,
    pub image_embedding: Vec<f32>,
    pub text_embedding: Vec<f32>,
    pub fused_embedding: Vec<f32>,
    pub origin_event: String,
    pub event_type: String,
    pub split: Split,
    pub gold_label: Option<BinaryLabel>,
}

impl Post {
    /// Builds a post, concatenating the two modality vectors into the fused embedding.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        image_ref: impl Into<String>,
        image_embedding: Vec<f32>,
        text_embedding: Vec<f32>,
        origin_event: impl Into<String>,
        event_type: impl Into<String>,
        split: Split,
        gold_label: Option<BinaryLabel>,
    ) -> Self {
        let fused_embedding = fuse(&image_embedding, &text_embedding);
        Post {
            id: id.into(),
            text: text.into(),
            image_ref: image_ref.into(),
            image_embedding,
            text_embedding,
            fused_embedding,
            origin_event: origin_event.into(),
            event_type: event_type.into(),
            split,
            gold_label,
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.image_embedding.is_empty() || self.text_embedding.is_empty() {
            return Err(CorpusError::MissingModality(self.id.clone()));
        }
        let finite = self
            .image_embedding
            .iter()
            .chain(&self.text_embedding)
            .all(|v| v.is_finite());
        if !finite {
            return Err(CorpusError::NonFinite(self.id.clone()));
        }
        Ok(())
    }
}

/// `[image ‖ text]`
pub fn fuse(image: &[f32], text: &[f32]) -> Vec<f32> {
    let mut fused = Vec::with_capacity(image.len() + text.len());
    fused.extend_from_slice(image);
    fused.extend_from_slice(text);
    fused
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub image_ref: String,
    #[serde(deserialize_with = "lenient_floats")]
    pub image_embedding: Vec<f32>,
    #[serde(deserialize_with = "lenient_floats")]
    pub text_embedding: Vec<f32>,
    pub origin_event: String,
    pub event_type: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<BinaryLabel>,
}

/// Embedding entries written as `null` (how JSON encoders emit NaN) become NaN
/// so validation can name the offending post.
fn lenient_floats<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<f32>, D::Error> {
    let raw: Vec<Option<f32>> = Deserialize::deserialize(d)?;
    Ok(raw.into_iter().map(|v| v.unwrap_or(f32::NAN)).collect())
}

/// Replaces bare `NaN`, `Infinity` and `-Infinity` tokens outside string
/// literals with `null`.
fn null_non_finite_tokens(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        let token = ["-Infinity", "Infinity", "NaN"]
            .into_iter()
            .find(|t| rest.starts_with(t));
        match token {
            Some(t) => {
                out.push_str("null");
                rest = &rest[t.len()..];
            }
            None => {
                out.push(c);
                rest = &rest[c.len_utf8()..];
            }
        }
    }
    out
}

impl From<ManifestRecord> for Post {
    fn from(r: ManifestRecord) -> Self {
        Post::new(
            r.id,
            r.text,
            r.image_ref,
            r.image_embedding,
            r.text_embedding,
            r.origin_event,
            r.event_type,
            r.split,
            r.gold_label,
        )
    }
}

impl From<&Post> for ManifestRecord {
    fn from(p: &Post) -> Self {
        ManifestRecord {
            id: p.id.clone(),
            text: p.text.clone(),
            image_ref: p.image_ref.clone(),
            image_embedding: p.image_embedding.clone(),
            text_embedding: p.text_embedding.clone(),
            origin_event: p.origin_event.clone(),
            event_type: p.event_type.clone(),
            split: p.split,
            gold_label: p.gold_label,
        }
    }
}

/// Reads a line-delimited manifest into posts, validating each record and the
/// dimension consistency across records. Blank lines are skipped.
pub fn load_posts(path: &Path) -> Result<Vec<Post>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut posts = Vec::new();
    let mut seen = BTreeSet::new();
    let mut dims: Option<(usize, usize)> = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line)
            .or_else(|e| serde_json::from_str(&null_non_finite_tokens(&line)).map_err(|_| e))
            .map_err(|e| CorpusError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        let post = Post::from(record);
        post.validate()?;
        let post_dims = (post.image_embedding.len(), post.text_embedding.len());
        match dims {
            None => dims = Some(post_dims),
            Some(expected) if expected != post_dims => {
                return Err(CorpusError::DimensionMismatch {
                    id: post.id,
                    image: post_dims.0,
                    text: post_dims.1,
                    expected_image: expected.0,
                    expected_text: expected.1,
                })
            }
            Some(_) => {}
        }
        if !seen.insert(post.id.clone()) {
            return Err(CorpusError::DuplicateId(post.id));
        }
        posts.push(post);
    }
    Ok(posts)
}

/// Writes posts as a line-delimited manifest.
pub fn write_manifest<'a>(
    path: &Path,
    posts: impl IntoIterator<Item = &'a Post>,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for post in posts {
        serde_json::to_writer(&mut out, &ManifestRecord::from(post))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Working set: the event-of-interest posts plus any augmentation posts.
#[derive(Debug, Clone)]
pub struct Corpus {
    posts: Vec<Post>,
    labels: Vec<LabelState>,
    index: HashMap<String, usize>,
    event_of_interest: String,
    event_type: String,
    augmentation_ids: BTreeSet<String>,
    dims: (usize, usize),
}

impl Corpus {
    /// Builds an event corpus. Every post must come from the same event.
    pub fn new(posts: Vec<Post>) -> Result<Self, CorpusError> {
        let first = posts.first().ok_or(CorpusError::Empty)?;
        let event_of_interest = first.origin_event.clone();
        let event_type = first.event_type.clone();
        let dims = (first.image_embedding.len(), first.text_embedding.len());
        let mut index = HashMap::with_capacity(posts.len());
        for (i, post) in posts.iter().enumerate() {
            post.validate()?;
            let post_dims = (post.image_embedding.len(), post.text_embedding.len());
            if post_dims != dims {
                return Err(CorpusError::DimensionMismatch {
                    id: post.id.clone(),
                    image: post_dims.0,
                    text: post_dims.1,
                    expected_image: dims.0,
                    expected_text: dims.1,
                });
            }
            if post.origin_event != event_of_interest {
                return Err(CorpusError::MixedEvents {
                    id: post.id.clone(),
                    found: post.origin_event.clone(),
                    expected: event_of_interest,
                });
            }
            if index.insert(post.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(post.id.clone()));
            }
        }
        let labels = vec![LabelState::UNLABELED; posts.len()];
        Ok(Corpus {
            posts,
            labels,
            index,
            event_of_interest,
            event_type,
            augmentation_ids: BTreeSet::new(),
            dims,
        })
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn post(&self, idx: usize) -> &Post {
        &self.posts[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn event_of_interest(&self) -> &str {
        &self.event_of_interest
    }

    pub fn event_type(&self) -> &str {
        &self.event_type
    }

    pub fn augmentation_ids(&self) -> &BTreeSet<String> {
        &self.augmentation_ids
    }

    pub fn is_augmentation(&self, idx: usize) -> bool {
        self.augmentation_ids.contains(&self.posts[idx].id)
    }

    /// `(D_img, D_txt)`
    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn fused_dim(&self) -> usize {
        self.dims.0 + self.dims.1
    }

    pub fn label(&self, idx: usize) -> &LabelState {
        &self.labels[idx]
    }

    pub fn label_of(&self, id: &str) -> Option<&LabelState> {
        self.index_of(id).map(|i| &self.labels[i])
    }

    pub fn labels(&self) -> &[LabelState] {
        &self.labels
    }

    pub fn set_label(&mut self, idx: usize, state: LabelState) {
        self.labels[idx] = state;
    }

    /// Resets every pseudo label back to unlabeled.
    pub fn clear_pseudo_labels(&mut self) {
        for state in &mut self.labels {
            if state.value.is_pseudo() {
                *state = LabelState::UNLABELED;
            }
        }
    }

    /// Number of train posts that belong to the event of interest.
    pub fn event_train_count(&self) -> usize {
        self.posts
            .iter()
            .filter(|p| p.split == Split::Train && !self.augmentation_ids.contains(&p.id))
            .count()
    }

    /// Indices of event-of-interest train posts that carry no label.
    pub fn unlabeled_event_train(&self) -> Vec<usize> {
        (0..self.posts.len())
            .filter(|&i| {
                self.posts[i].split == Split::Train
                    && !self.is_augmentation(i)
                    && self.labels[i].is_unlabeled()
            })
            .collect()
    }
}

/// Reads the event-of-interest manifest into a corpus with all posts unlabeled.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus, CorpusError> {
    Corpus::new(load_posts(manifest_path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AugmentationWarning {
    /// No pool post had an event type different from the event of interest.
    EmptyEligiblePool,
}

#[derive(Debug, Clone)]
pub struct AugmentedCorpus {
    pub corpus: Corpus,
    pub added: usize,
    pub warning: Option<AugmentationWarning>,
}

/// Adds a seeded uniform sample of other-event posts, labeled `OtherEvent`, to
/// the training split. The sample size is capped at the number of
/// event-of-interest train posts. Pool posts whose event type matches the
/// event of interest, or whose id already exists in the corpus, are ineligible.
pub fn build_augmented_corpus(
    event_corpus: Corpus,
    pool: &[Post],
    seed: u64,
) -> Result<AugmentedCorpus, CorpusError> {
    let eligible: Vec<&Post> = pool
        .iter()
        .filter(|p| p.event_type != event_corpus.event_type)
        .filter(|p| event_corpus.index_of(&p.id).is_none())
        .collect();

    if eligible.is_empty() {
        return Ok(AugmentedCorpus {
            corpus: event_corpus,
            added: 0,
            warning: Some(AugmentationWarning::EmptyEligiblePool),
        });
    }

    let cap = event_corpus
        .event_train_count()
        .saturating_sub(event_corpus.augmentation_ids.len());
    let amount = eligible.len().min(cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, eligible.len(), amount).into_vec();
    picked.sort_unstable();

    let mut corpus = event_corpus;
    for i in picked {
        let mut post = eligible[i].clone();
        post.validate()?;
        let post_dims = (post.image_embedding.len(), post.text_embedding.len());
        if post_dims != corpus.dims {
            return Err(CorpusError::DimensionMismatch {
                id: post.id,
                image: post_dims.0,
                text: post_dims.1,
                expected_image: corpus.dims.0,
                expected_text: corpus.dims.1,
            });
        }
        post.split = Split::Train;
        post.gold_label = None;
        let idx = corpus.posts.len();
        if corpus.index.insert(post.id.clone(), idx).is_some() {
            return Err(CorpusError::DuplicateId(post.id));
        }
        corpus.augmentation_ids.insert(post.id.clone());
        corpus.posts.push(post);
        corpus.labels.push(LabelState {
            value: LabelValue::OtherEvent,
            source: LabelSource::Auto,
            iteration_assigned: 0,
        });
    }

    Ok(AugmentedCorpus {
        corpus,
        added: amount,
        warning: None,
    })
}
