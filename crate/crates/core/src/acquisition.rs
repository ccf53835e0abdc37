//! BALD scoring, KMeans, and the selection rules that turn scores into an
//! annotation batch and a pseudo-label set.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::Write;

use ndarray::ArrayView2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bgnn::derive_seed;
use crate::corpus::{ClassIndex, Corpus};

/// Scores this far below zero are rounding noise and clamp to zero.
pub const BALD_TOLERANCE: f64 = 1e-9;
/// How far a log-probability row may drift from summing to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;
pub const KMEANS_MAX_ITERATIONS: usize = 300;
pub const KMEANS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum AcquisitionError {
    #[error("log-probability matrix is empty")]
    Empty,
    #[error("non-finite log-probability at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("row {row} is not normalized (logsumexp = {lse})")]
    NotNormalized { row: usize, lse: f64 },
    #[error("{rows} rows cannot form {clusters} clusters")]
    TooFewRows { rows: usize, clusters: usize },
    #[error("vectors have inconsistent dimensions")]
    DimensionMismatch,
}

fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// BALD mutual information of `K` stochastic passes over `C` classes.
///
/// `logprobs[j][i]` is the log-probability pass `j` assigns to class `i`.
/// Computes `(1/K) Σ_i Σ_j p_ij·e^{p_ij} − Σ_i p̄_i·e^{p̄_i}` where
/// `p̄_i = ln((1/K) Σ_j e^{p_ij})`, i.e. the entropy of the mean prediction
/// minus the mean per-pass entropy.
pub fn bald(logprobs: ArrayView2<'_, f64>) -> Result<f64, AcquisitionError> {
    let (k, c) = logprobs.dim();
    if k == 0 || c == 0 {
        return Err(AcquisitionError::Empty);
    }
    for ((j, i), v) in logprobs.indexed_iter() {
        if !v.is_finite() {
            return Err(AcquisitionError::NonFinite(j, i));
        }
    }
    for (j, row) in logprobs.rows().into_iter().enumerate() {
        let lse = logsumexp(row.iter().copied());
        if lse.abs() > NORMALIZATION_TOLERANCE {
            return Err(AcquisitionError::NotNormalized { row: j, lse });
        }
    }
    let first = logprobs.row(0);
    if logprobs.rows().into_iter().all(|row| row == first) {
        return Ok(0.0);
    }

    let ln_k = (k as f64).ln();
    let mut conditional = 0.0;
    let mut marginal = 0.0;
    for column in logprobs.columns() {
        conditional += column.iter().map(|&p| p * p.exp()).sum::<f64>();
        let mean_log = logsumexp(column.iter().copied()) - ln_k;
        marginal += mean_log * mean_log.exp();
    }
    let score = conditional / k as f64 - marginal;
    if (-BALD_TOLERANCE..0.0).contains(&score) {
        Ok(0.0)
    } else {
        Ok(score)
    }
}

/// Result of KMeans over a candidate set, with the small-cluster discard flags
/// used by the acquisition step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster of each input row.
    pub assignment: Vec<usize>,
    /// Row positions per cluster, ascending.
    pub members: Vec<Vec<usize>>,
    pub discarded: Vec<bool>,
    pub iterations: usize,
}

impl ClusterAssignment {
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    /// Marks clusters with fewer than `min_size` members as discarded.
    pub fn apply_discard(&mut self, min_size: usize) {
        self.discarded = self.members.iter().map(|m| m.len() < min_size).collect();
    }

    pub fn surviving(&self) -> Vec<usize> {
        (0..self.n_clusters()).filter(|&c| !self.discarded[c]).collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn to_f64_rows(vectors: &[&[f32]]) -> Result<Vec<Vec<f64>>, AcquisitionError> {
    let dim = vectors.first().map_or(0, |v| v.len());
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(AcquisitionError::DimensionMismatch);
    }
    Ok(vectors
        .iter()
        .map(|v| v.iter().map(|&x| x as f64).collect())
        .collect())
}

/// Distance-weighted seeding: the first centre is uniform, each next centre
/// is drawn with probability proportional to its squared distance from the
/// closest chosen centre. Falls back to a uniform unchosen row when every
/// distance is zero.
fn careful_seeding(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut closest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[first]))
        .collect();
    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in closest.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if target < d {
                    pick = Some(i);
                    break;
                }
                target -= d;
            }
            pick.unwrap_or_else(|| closest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            closest[i] = closest[i].min(squared_distance(p, &points[next]));
        }
    }
    centroids
}

/// Seeded KMeans with careful seeding and Lloyd iterations until the largest
/// centroid shift drops below `1e-6` or 300 iterations pass. An empty cluster
/// takes the point of the largest cluster that lies farthest from its centroid.
/// Nothing is discarded; see [`ClusterAssignment::apply_discard`].
pub fn kmeans(
    vectors: &[&[f32]],
    n_clusters: usize,
    seed: u64,
) -> Result<ClusterAssignment, AcquisitionError> {
    let n = vectors.len();
    if n_clusters == 0 || n < n_clusters {
        return Err(AcquisitionError::TooFewRows {
            rows: n,
            clusters: n_clusters,
        });
    }
    let points = to_f64_rows(vectors)?;
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = careful_seeding(&points, n_clusters, &mut rng);
    let mut assignment = vec![0usize; n];
    let mut iterations = 0;

    loop {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            assignment[i] = nearest_centroid(p, &centroids).0;
        }
        repair_empty_clusters(&points, &mut assignment, &centroids);

        let mut sums = vec![vec![0.0; dim]; n_clusters];
        let mut counts = vec![0usize; n_clusters];
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..n_clusters {
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(squared_distance(&mean, &centroids[c]).sqrt());
            centroids[c] = mean;
        }
        if shift < KMEANS_TOLERANCE || iterations >= KMEANS_MAX_ITERATIONS {
            break;
        }
    }

    let mut members = vec![Vec::new(); n_clusters];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }
    Ok(ClusterAssignment {
        centroids,
        assignment,
        members,
        discarded: vec![false; n_clusters],
        iterations,
    })
}

fn repair_empty_clusters(points: &[Vec<f64>], assignment: &mut [usize], centroids: &[Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &c in assignment.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        // First maximum wins on count ties.
        let largest = (0..k).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if assignment[i] == largest {
                let d = squared_distance(p, &centroids[largest]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        assignment[far.expect("largest cluster is non-empty")] = empty;
    }
}

/// An unlabeled train post offered to the selectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    /// BALD, or another uncertainty score where larger means less certain.
    pub score: f64,
    pub predicted: ClassIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub n_clusters: usize,
    /// Clusters with fewer members are discarded.
    pub min_cluster_size: usize,
    pub budget: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            n_clusters: 16,
            min_cluster_size: 16,
            budget: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Candidate positions chosen for annotation.
    pub positions: Vec<usize>,
    pub ids: Vec<String>,
    pub clusters: Option<ClusterAssignment>,
    /// Picks per cluster (zero for discarded clusters).
    pub allocation: Vec<usize>,
    /// Every cluster was discarded, the batch is a global top-score pick.
    pub fallback: bool,
}

fn descending_score(candidates: &[Candidate]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    |&a, &b| {
        candidates[b]
            .score
            .total_cmp(&candidates[a].score)
            .then(a.cmp(&b))
    }
}

fn ascending_score(candidates: &[Candidate]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    |&a, &b| {
        candidates[a]
            .score
            .total_cmp(&candidates[b].score)
            .then(a.cmp(&b))
    }
}

/// Splits `budget` over `survivors` clusters: each gets `budget / survivors`,
/// and `budget % survivors` of them, chosen uniformly with `seed`, get one more.
pub fn allocate(survivors: usize, budget: usize, seed: u64) -> Vec<usize> {
    if survivors == 0 {
        return Vec::new();
    }
    let mut out = vec![budget / survivors; survivors];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, survivors, budget % survivors) {
        out[i] += 1;
    }
    out
}

/// Clusters candidate embeddings and flags small clusters. Uses
/// `min(n_clusters, candidates)` clusters.
pub fn cluster_candidates(
    embeddings: &[&[f32]],
    config: &SelectConfig,
    seed: u64,
) -> Result<ClusterAssignment, AcquisitionError> {
    let k = config.n_clusters.min(embeddings.len());
    let mut clusters = kmeans(embeddings, k, seed)?;
    clusters.apply_discard(config.min_cluster_size);
    Ok(clusters)
}

/// Diversity-aware batch selection: cluster the candidates, drop clusters
/// smaller than the size threshold, and take the highest-scoring members of
/// each surviving cluster. The budget is spread evenly with a seeded random
/// remainder. Ties in score go to the earlier candidate.
pub fn bald_kmeans_select(
    candidates: &[Candidate],
    embeddings: &[&[f32]],
    config: &SelectConfig,
    seed: u64,
) -> Result<Selection, AcquisitionError> {
    if candidates.len() != embeddings.len() {
        return Err(AcquisitionError::DimensionMismatch);
    }
    let budget = config.budget;
    if candidates.len() <= budget {
        let mut positions: Vec<usize> = (0..candidates.len()).collect();
        positions.sort_by(descending_score(candidates));
        return Ok(finish(candidates, positions, None, Vec::new(), false));
    }

    let clusters = cluster_candidates(embeddings, config, seed)?;
    select_from_clusters(candidates, clusters, budget, seed)
}

/// Selection over an existing clustering; see [`bald_kmeans_select`].
pub fn select_from_clusters(
    candidates: &[Candidate],
    clusters: ClusterAssignment,
    budget: usize,
    seed: u64,
) -> Result<Selection, AcquisitionError> {
    let survivors = clusters.surviving();
    let by_score = descending_score(candidates);
    let mut allocation = vec![0usize; clusters.n_clusters()];

    if survivors.is_empty() {
        let mut positions: Vec<usize> = (0..candidates.len()).collect();
        positions.sort_by(&by_score);
        positions.truncate(budget);
        return Ok(finish(candidates, positions, Some(clusters), allocation, true));
    }

    let shares = allocate(survivors.len(), budget, derive_seed(seed, 1));
    let mut spill = 0usize;
    for (&c, &share) in survivors.iter().zip(&shares) {
        let take = share.min(clusters.members[c].len());
        spill += share - take;
        allocation[c] = take;
    }
    // Quota beyond a cluster's size moves, in cluster order, to clusters with room.
    while spill > 0 {
        let mut moved = false;
        for &c in &survivors {
            if spill > 0 && allocation[c] < clusters.members[c].len() {
                allocation[c] += 1;
                spill -= 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }

    let mut positions = Vec::with_capacity(budget);
    for &c in &survivors {
        let mut members = clusters.members[c].clone();
        members.sort_by(&by_score);
        positions.extend(members.into_iter().take(allocation[c]));
    }
    if spill > 0 {
        // Surviving clusters are exhausted; top up from discarded ones.
        let taken: BTreeSet<usize> = positions.iter().copied().collect();
        let mut rest: Vec<usize> = (0..candidates.len()).filter(|p| !taken.contains(p)).collect();
        rest.sort_by(&by_score);
        positions.extend(rest.into_iter().take(spill));
    }
    Ok(finish(candidates, positions, Some(clusters), allocation, false))
}

fn finish(
    candidates: &[Candidate],
    positions: Vec<usize>,
    clusters: Option<ClusterAssignment>,
    allocation: Vec<usize>,
    fallback: bool,
) -> Selection {
    let ids = positions.iter().map(|&p| candidates[p].id.clone()).collect();
    Selection {
        positions,
        ids,
        clusters,
        allocation,
        fallback,
    }
}

/// Uniform seeded choice of `budget` candidate positions.
pub fn random_select(candidates: usize, budget: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, candidates, budget.min(candidates)).into_vec()
}

/// For every surviving cluster, the `per_cluster` lowest-scoring members not
/// in `exclude`, tagged with their predicted class.
pub fn pseudo_label_select(
    candidates: &[Candidate],
    clusters: &ClusterAssignment,
    per_cluster: usize,
    exclude: &BTreeSet<usize>,
) -> Vec<(usize, ClassIndex)> {
    let by_score = ascending_score(candidates);
    let mut out = Vec::new();
    for c in clusters.surviving() {
        let mut members: Vec<usize> = clusters.members[c]
            .iter()
            .copied()
            .filter(|p| !exclude.contains(p))
            .collect();
        members.sort_by(&by_score);
        out.extend(
            members
                .into_iter()
                .take(per_cluster)
                .map(|p| (p, candidates[p].predicted)),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColdStart {
    pub indices: Vec<usize>,
    pub ids: Vec<String>,
    /// The pool held fewer candidates than the budget.
    pub pool_exhausted: bool,
}

fn cold_start_pool(corpus: &Corpus, budget: usize) -> (Vec<usize>, Option<ColdStart>) {
    let pool = corpus.unlabeled_event_train();
    if pool.len() <= budget {
        let ids = pool.iter().map(|&i| corpus.post(i).id.clone()).collect();
        let exhausted = pool.len() < budget;
        return (
            Vec::new(),
            Some(ColdStart {
                indices: pool,
                ids,
                pool_exhausted: exhausted,
            }),
        );
    }
    (pool, None)
}

/// First batch before any model exists: KMeans with `budget` centroids over the
/// unlabeled event train posts, then the post nearest (Euclidean) to each
/// centroid. A post already taken by an earlier centroid is skipped in favor
/// of the next nearest, so the batch is always `budget` distinct posts.
pub fn cold_start_select(
    corpus: &Corpus,
    budget: usize,
    seed: u64,
) -> Result<ColdStart, AcquisitionError> {
    let (pool, done) = cold_start_pool(corpus, budget);
    if let Some(done) = done {
        return Ok(done);
    }
    let vectors: Vec<&[f32]> = pool
        .iter()
        .map(|&i| corpus.post(i).fused_embedding.as_slice())
        .collect();
    let clusters = kmeans(&vectors, budget, seed)?;
    let points = to_f64_rows(&vectors)?;
    let mut taken = vec![false; pool.len()];
    let mut indices = Vec::with_capacity(budget);
    for centroid in &clusters.centroids {
        let mut best: Option<(usize, f64)> = None;
        for (p, point) in points.iter().enumerate() {
            if taken[p] {
                continue;
            }
            let d = squared_distance(point, centroid);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((p, d));
            }
        }
        let (p, _) = best.expect("pool larger than budget");
        taken[p] = true;
        indices.push(pool[p]);
    }
    let ids = indices.iter().map(|&i| corpus.post(i).id.clone()).collect();
    Ok(ColdStart {
        indices,
        ids,
        pool_exhausted: false,
    })
}

/// Uniform seeded first batch.
pub fn random_cold_start(corpus: &Corpus, budget: usize, seed: u64) -> ColdStart {
    let (pool, done) = cold_start_pool(corpus, budget);
    if let Some(done) = done {
        return done;
    }
    let indices: Vec<usize> = random_select(pool.len(), budget, seed)
        .into_iter()
        .map(|p| pool[p])
        .collect();
    let ids = indices.iter().map(|&i| corpus.post(i).id.clone()).collect();
    ColdStart {
        indices,
        ids,
        pool_exhausted: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditAction {
    Annotate,
    Pseudo,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub iteration: u32,
    pub id: String,
    pub bald_score: f64,
    pub cluster: Option<usize>,
    pub action: AuditAction,
}

/// One record per candidate describing what the selectors did with it.
pub fn audit_records(
    iteration: u32,
    candidates: &[Candidate],
    clusters: Option<&ClusterAssignment>,
    annotate: &[usize],
    pseudo: &[(usize, ClassIndex)],
) -> Vec<AuditRecord> {
    let annotate: BTreeSet<usize> = annotate.iter().copied().collect();
    let pseudo: BTreeSet<usize> = pseudo.iter().map(|(p, _)| *p).collect();
    candidates
        .iter()
        .enumerate()
        .map(|(p, c)| AuditRecord {
            iteration,
            id: c.id.clone(),
            bald_score: c.score,
            cluster: clusters.map(|cl| cl.assignment[p]),
            action: if annotate.contains(&p) {
                AuditAction::Annotate
            } else if pseudo.contains(&p) {
                AuditAction::Pseudo
            } else {
                AuditAction::Skip
            },
        })
        .collect()
}

pub fn write_audit_log<W: Write>(records: &[AuditRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
