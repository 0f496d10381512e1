//! Frame sampling, frame-aligned embedding similarity, and the corpus-level
//! curve and summary statistics computed over per-iteration score traces.
//!
//! The numeric kernels are generic over [`Scalar`] so they run on `f32`
//! embeddings as well as the `f64` scores the engine records.

use crate::adapters::Embedder;
use crate::env::Env;
use crate::error::{AdapterError, MediaError, ValidationError};
use crate::media::Frame;
use crate::model::{ClipId, VideoClip};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Default number of frames sampled from each clip when scoring.
pub const DEFAULT_FRAMES_PER_CLIP: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error("embedding failed: {0}")]
    Embedding(#[from] AdapterError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct EmbeddingVector<T: Scalar> {
    components: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(components: Vec<T>) -> Result<Self, ValidationError> {
        if components.is_empty() {
            return Err(ValidationError::new("dimension", "must be positive"));
        }
        if let Some(i) = components.iter().position(|c| !c.is_finite()) {
            return Err(ValidationError::new("components", format!("component {i} is not finite")));
        }
        Ok(Self { components })
    }

    /// Like [`EmbeddingVector::new`] but also pins the expected dimension.
    pub fn with_dimension(components: Vec<T>, dimension: usize) -> Result<Self, ValidationError> {
        if components.len() != dimension {
            return Err(ValidationError::new(
                "dimension",
                format!("expected {dimension} components, got {}", components.len()),
            ));
        }
        Self::new(components)
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[T] {
        &self.components
    }

    pub fn norm(&self) -> T {
        self.components.iter().map(|&c| c * c).sum::<T>().sqrt()
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for EmbeddingVector<T> {
    type Error = ValidationError;
    fn try_from(v: Vec<T>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl<T: Scalar> From<EmbeddingVector<T>> for Vec<T> {
    fn from(v: EmbeddingVector<T>) -> Self {
        v.components
    }
}

/// A similarity value in `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SimilarityScore<T: Scalar = f64>(T);

impl<T: Scalar + Serialize> Serialize for SimilarityScore<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for SimilarityScore<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = T::deserialize(d)?;
        Self::new(v).map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> SimilarityScore<T> {
    pub fn new(value: T) -> Result<Self, ValidationError> {
        if value.is_finite() && value >= -T::one() && value <= T::one() {
            Ok(Self(value))
        } else {
            Err(ValidationError::new("value", format!("similarity {value} outside [-1, 1]")))
        }
    }

    /// Clamps a finite value into range; rounding can push a cosine of
    /// near-parallel vectors a few ulps past 1.
    pub fn clamped(value: T) -> Self {
        Self(value.max(-T::one()).min(T::one()))
    }

    pub fn value(self) -> T {
        self.0
    }
}


/// Per-iteration scores of one clip's reconstruction run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrace<T: Scalar = f64> {
    clip_id: ClipId,
    scores: Vec<T>,
}

impl<T: Scalar> ScoreTrace<T> {
    pub fn new(clip_id: ClipId, scores: Vec<T>) -> Result<Self, ValidationError> {
        if scores.is_empty() {
            return Err(ValidationError::new("scores", "trace must not be empty"));
        }
        for (i, &s) in scores.iter().enumerate() {
            SimilarityScore::new(s)
                .map_err(|e| ValidationError::new("scores", format!("entry {i}: {}", e.reason)))?;
        }
        Ok(Self { clip_id, scores })
    }

    pub fn clip_id(&self) -> &ClipId {
        &self.clip_id
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn peak(&self) -> T {
        self.scores.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// 1-based index of the first occurrence of the peak.
    fn first_peak_index(&self) -> usize {
        let peak = self.peak();
        self.scores.iter().position(|&s| s == peak).unwrap_or(0) + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurves<T: Scalar = f64> {
    pub per_iteration_mean: Vec<T>,
    pub best_so_far_mean: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats<T: Scalar = f64> {
    pub n_clips: usize,
    pub improved_fraction: T,
    pub mean_initial: T,
    pub mean_peak: T,
    pub mean_improvement: T,
    pub mean_best_iteration: T,
    pub final_iteration_mean: T,
}

// ---------------------------------------------------------------------------
// Frame sampling

/// Midpoint sample times `(i + 0.5) * duration / n` for `i` in `0..n`.
pub fn sample_timestamps(duration: f64, n: usize) -> Result<Vec<f64>, ValidationError> {
    if n == 0 {
        return Err(ValidationError::new("n", "must sample at least one frame"));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(ValidationError::new("duration", format!("must be positive, got {duration}")));
    }
    let step = duration / n as f64;
    Ok((0..n).map(|i| (i as f64 + 0.5) * step).collect())
}

/// Decodes `n` frames spread uniformly over the clip, one per equal-width
/// slot, each the nearest decoded frame to its slot's midpoint.
pub fn sample_frames(env: &Env, clip: &VideoClip, n: usize) -> Result<Vec<Frame>, SimilarityError> {
    let ts = sample_timestamps(clip.duration(), n)?;
    let bytes = env.store.get(clip.media_ref())?;
    let frames = env.decoder.frames_at(&bytes, &ts)?;
    if frames.len() != n {
        return Err(MediaError::Decode(format!("decoder returned {} of {n} frames", frames.len())).into());
    }
    Ok(frames)
}

// ---------------------------------------------------------------------------
// Similarity

pub fn cosine<T: Scalar>(
    u: &EmbeddingVector<T>,
    v: &EmbeddingVector<T>,
) -> Result<SimilarityScore<T>, SimilarityError> {
    if u.dimension() != v.dimension() {
        return Err(ValidationError::new(
            "dimension",
            format!("cannot compare {}-d with {}-d embeddings", u.dimension(), v.dimension()),
        )
        .into());
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == T::zero() || nv == T::zero() {
        return Err(SimilarityError::DegenerateEmbedding("zero-norm embedding".into()));
    }
    let dot: T = u
        .components
        .iter()
        .zip(&v.components)
        .map(|(&a, &b)| a * b)
        .sum();
    let c = dot / (nu * nv);
    if !c.is_finite() {
        return Err(SimilarityError::DegenerateEmbedding("non-finite cosine".into()));
    }
    Ok(SimilarityScore::clamped(c))
}

/// Arithmetic mean of a non-empty set of cosine values.
pub fn mean_score<T: Scalar>(scores: &[SimilarityScore<T>]) -> Result<SimilarityScore<T>, ValidationError> {
    if scores.is_empty() {
        return Err(ValidationError::new("scores", "nothing to average"));
    }
    let total: T = scores.iter().map(|s| s.value()).sum();
    Ok(SimilarityScore::clamped(total / T::count(scores.len())))
}

/// Mean cosine similarity between the embeddings of index-paired frames
/// sampled uniformly from both clips.
pub fn frame_aligned_similarity(
    env: &Env,
    a: &VideoClip,
    b: &VideoClip,
    embedder: &dyn Embedder,
    n: usize,
) -> Result<SimilarityScore<f64>, SimilarityError> {
    if n == 0 {
        return Err(ValidationError::new("n", "must sample at least one frame").into());
    }
    let fa = sample_frames(env, a, n)?;
    let fb = sample_frames(env, b, n)?;
    let mut cosines = Vec::with_capacity(n);
    for (x, y) in fa.iter().zip(&fb) {
        let ex = embedder.embed(x)?;
        let ey = embedder.embed(y)?;
        cosines.push(cosine(&ex, &ey)?);
    }
    Ok(mean_score(&cosines)?)
}

// ---------------------------------------------------------------------------
// Curves and corpus statistics

/// Prefix maximum of a trace.
pub fn best_so_far<T: Scalar>(trace: &ScoreTrace<T>) -> Vec<T> {
    trace
        .scores
        .iter()
        .scan(T::neg_infinity(), |best, &s| {
            *best = best.max(s);
            Some(*best)
        })
        .collect()
}

/// Peak minus final score; how far a run fell after its best iteration.
pub fn drift_amount<T: Scalar>(trace: &ScoreTrace<T>) -> T {
    let last = *trace.scores.last().expect("trace is non-empty");
    (trace.peak() - last).max(T::zero())
}

fn common_length<T: Scalar>(traces: &[ScoreTrace<T>]) -> Result<usize, ValidationError> {
    let first = traces
        .first()
        .ok_or_else(|| ValidationError::new("traces", "need at least one trace"))?;
    let len = first.len();
    if let Some(bad) = traces.iter().find(|t| t.len() != len) {
        return Err(ValidationError::new(
            "traces",
            format!(
                "trace for {} has {} scores, expected {len}; traces must share one length",
                bad.clip_id,
                bad.len()
            ),
        ));
    }
    Ok(len)
}

pub fn aggregate_curves<T: Scalar>(traces: &[ScoreTrace<T>]) -> Result<AggregateCurves<T>, ValidationError> {
    let len = common_length(traces)?;
    let n = T::count(traces.len());
    let mut per_iteration = vec![T::zero(); len];
    let mut best = vec![T::zero(); len];
    for t in traces {
        for (acc, &s) in per_iteration.iter_mut().zip(&t.scores) {
            *acc = *acc + s;
        }
        for (acc, b) in best.iter_mut().zip(best_so_far(t)) {
            *acc = *acc + b;
        }
    }
    Ok(AggregateCurves {
        per_iteration_mean: per_iteration.into_iter().map(|s| s / n).collect(),
        best_so_far_mean: best.into_iter().map(|s| s / n).collect(),
    })
}

pub fn corpus_stats<T: Scalar>(traces: &[ScoreTrace<T>]) -> Result<CorpusStats<T>, ValidationError> {
    let len = common_length(traces)?;
    let n = T::count(traces.len());
    let mean = |f: &dyn Fn(&ScoreTrace<T>) -> T| traces.iter().map(f).sum::<T>() / n;

    let improved = traces.iter().filter(|t| t.peak() > t.scores[0]).count();
    let mean_initial = mean(&|t| t.scores[0]);
    let mean_peak = mean(&|t| t.peak());
    Ok(CorpusStats {
        n_clips: traces.len(),
        improved_fraction: T::count(improved) / n,
        mean_initial,
        mean_peak,
        mean_improvement: mean_peak - mean_initial,
        mean_best_iteration: mean(&|t| T::count(t.first_peak_index())),
        final_iteration_mean: mean(&|t| t.scores[len - 1]),
    })
}

/// Tab-separated curve table with a header row; iterations are 1-based.
pub fn curves_tsv<T: Scalar>(curves: &AggregateCurves<T>) -> String {
    let mut out = String::from("iteration\tper_iteration_mean\tbest_so_far_mean\n");
    for (i, (m, b)) in curves
        .per_iteration_mean
        .iter()
        .zip(&curves.best_so_far_mean)
        .enumerate()
    {
        let _ = writeln!(out, "{}\t{m}\t{b}", i + 1);
    }
    out
}
