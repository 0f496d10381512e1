//! Shared domain types. Constructors and deserializers enforce every
//! invariant, so a value that exists is a valid value.

use crate::error::{ensure, ValidationError};
use crate::media::MediaRef;
use crate::similarity::SimilarityScore;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Longest clip the default generator backend accepts, in seconds.
pub const DEFAULT_MAX_CLIP_SECONDS: f64 = 8.0;

macro_rules! string_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(
    /// Clip identity. Stored clips use their media digest.
    ClipId
);
string_id!(SessionId);

impl SessionId {
    pub fn random() -> Self {
        SessionId(uuid::Uuid::new_v4().to_string())
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VideoClipFields")]
pub struct VideoClip {
    id: ClipId,
    media_ref: MediaRef,
    duration: f64,
    native_fps: f64,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct VideoClipFields {
    id: ClipId,
    media_ref: MediaRef,
    duration: f64,
    native_fps: f64,
    width: u32,
    height: u32,
}

impl TryFrom<VideoClipFields> for VideoClip {
    type Error = ValidationError;
    fn try_from(f: VideoClipFields) -> Result<Self, Self::Error> {
        VideoClip::new(f.id, f.media_ref, f.duration, f.native_fps, f.width, f.height)
    }
}

impl VideoClip {
    pub fn new(
        id: ClipId,
        media_ref: MediaRef,
        duration: f64,
        native_fps: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, ValidationError> {
        ensure(!id.0.is_empty(), "id", || "must not be empty".into())?;
        ensure(duration.is_finite() && duration > 0.0, "duration", || {
            format!("must be a positive number of seconds, got {duration}")
        })?;
        ensure(native_fps.is_finite() && native_fps > 0.0, "native_fps", || {
            format!("must be positive, got {native_fps}")
        })?;
        ensure(width > 0, "width", || "must be positive".into())?;
        ensure(height > 0, "height", || "must be positive".into())?;
        Ok(Self {
            id,
            media_ref,
            duration,
            native_fps,
            width,
            height,
        })
    }

    /// Checks the clip fits the generator's length limit.
    pub fn check_max_duration(&self, max_seconds: f64) -> Result<(), ValidationError> {
        ensure(self.duration <= max_seconds + 1e-9, "duration", || {
            format!("{}s exceeds the generator maximum of {max_seconds}s", self.duration)
        })
    }

    pub fn id(&self) -> &ClipId {
        &self.id
    }
    pub fn media_ref(&self) -> &MediaRef {
        &self.media_ref
    }
    pub fn duration(&self) -> f64 {
        self.duration
    }
    pub fn native_fps(&self) -> f64 {
        self.native_fps
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
}

/// A persisted frame: a still image in the media store plus its timestamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameRefFields")]
pub struct FrameRef {
    timestamp: f64,
    media: MediaRef,
}

#[derive(Deserialize)]
struct FrameRefFields {
    timestamp: f64,
    media: MediaRef,
}

impl TryFrom<FrameRefFields> for FrameRef {
    type Error = ValidationError;
    fn try_from(f: FrameRefFields) -> Result<Self, Self::Error> {
        FrameRef::new(f.timestamp, f.media)
    }
}

impl FrameRef {
    pub fn new(timestamp: f64, media: MediaRef) -> Result<Self, ValidationError> {
        ensure(timestamp.is_finite() && timestamp >= 0.0, "timestamp", || {
            format!("must be a non-negative number of seconds, got {timestamp}")
        })?;
        Ok(Self { timestamp, media })
    }

    /// Additionally checks the timestamp lies within `clip`.
    pub fn within(timestamp: f64, media: MediaRef, clip: &VideoClip) -> Result<Self, ValidationError> {
        ensure(timestamp <= clip.duration(), "timestamp", || {
            format!("{timestamp}s lies beyond the clip's {}s", clip.duration())
        })?;
        Self::new(timestamp, media)
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }
    pub fn media(&self) -> &MediaRef {
        &self.media
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    Refined { iteration: u32 },
    UserEdited,
    AssistantSuggested,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PromptFields")]
pub struct Prompt {
    text: String,
    provenance: Provenance,
    created_at: DateTime<Utc>,
}

#[derive(Deserialize)]
struct PromptFields {
    text: String,
    provenance: Provenance,
    created_at: DateTime<Utc>,
}

impl TryFrom<PromptFields> for Prompt {
    type Error = ValidationError;
    fn try_from(f: PromptFields) -> Result<Self, Self::Error> {
        Prompt::new(f.text, f.provenance, f.created_at)
    }
}

impl Prompt {
    pub fn new(
        text: impl Into<String>,
        provenance: Provenance,
        created_at: DateTime<Utc>,
    ) -> Result<Self, ValidationError> {
        let text = text.into();
        ensure(!text.trim().is_empty(), "text", || "prompt text must not be blank".into())?;
        Ok(Self {
            text,
            provenance,
            created_at,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyCategory {
    Object,
    Color,
    Lighting,
    Composition,
    Motion,
    Pacing,
    Other,
}

impl DiscrepancyCategory {
    pub const ALL: [DiscrepancyCategory; 7] = [
        Self::Object,
        Self::Color,
        Self::Lighting,
        Self::Composition,
        Self::Motion,
        Self::Pacing,
        Self::Other,
    ];

    /// Maps a free-form label from a model reply into the closed set.
    pub fn from_label(label: &str) -> Self {
        let l = label.trim().to_ascii_lowercase();
        match l.as_str() {
            "object" | "objects" | "subject" | "content" => Self::Object,
            "color" | "colour" | "colors" | "palette" => Self::Color,
            "lighting" | "light" | "exposure" => Self::Lighting,
            "composition" | "framing" | "camera" | "layout" | "background" | "setting" => Self::Composition,
            "motion" | "movement" | "camera_motion" | "action" => Self::Motion,
            "pacing" | "timing" | "tempo" | "temporal" => Self::Pacing,
            _ => Self::Other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub category: DiscrepancyCategory,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DifferenceReportFields")]
pub struct DifferenceReport {
    discrepancies: Vec<Discrepancy>,
    revised_prompt: Prompt,
}

#[derive(Deserialize)]
struct DifferenceReportFields {
    discrepancies: Vec<Discrepancy>,
    revised_prompt: Prompt,
}

impl TryFrom<DifferenceReportFields> for DifferenceReport {
    type Error = ValidationError;
    fn try_from(f: DifferenceReportFields) -> Result<Self, Self::Error> {
        DifferenceReport::new(f.discrepancies, f.revised_prompt)
    }
}

impl DifferenceReport {
    pub fn new(discrepancies: Vec<Discrepancy>, revised_prompt: Prompt) -> Result<Self, ValidationError> {
        ensure(
            matches!(revised_prompt.provenance(), Provenance::Refined { .. }),
            "revised_prompt",
            || "provenance must be refined".into(),
        )?;
        Ok(Self {
            discrepancies,
            revised_prompt,
        })
    }

    pub fn discrepancies(&self) -> &[Discrepancy] {
        &self.discrepancies
    }
    pub fn revised_prompt(&self) -> &Prompt {
        &self.revised_prompt
    }

    /// Re-stamps the revised prompt with the iteration that produced it.
    pub fn for_iteration(mut self, iteration: u32) -> Self {
        self.revised_prompt.provenance = Provenance::Refined { iteration };
        self
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoppingPolicyFields")]
pub struct StoppingPolicy {
    max_iterations: u32,
    patience: u32,
    min_delta: f64,
}

#[derive(Deserialize)]
struct StoppingPolicyFields {
    max_iterations: u32,
    patience: u32,
    min_delta: f64,
}

impl TryFrom<StoppingPolicyFields> for StoppingPolicy {
    type Error = ValidationError;
    fn try_from(f: StoppingPolicyFields) -> Result<Self, Self::Error> {
        StoppingPolicy::new(f.max_iterations, f.patience, f.min_delta)
    }
}

impl Default for StoppingPolicy {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            patience: 2,
            min_delta: 0.0,
        }
    }
}

impl StoppingPolicy {
    pub fn new(max_iterations: u32, patience: u32, min_delta: f64) -> Result<Self, ValidationError> {
        ensure(max_iterations >= 1, "max_iterations", || "must be at least 1".into())?;
        ensure(min_delta.is_finite() && min_delta >= 0.0, "min_delta", || {
            format!("must be a finite non-negative number, got {min_delta}")
        })?;
        Ok(Self {
            max_iterations,
            patience,
            min_delta,
        })
    }

    /// Exactly `k` iterations with early stopping disabled.
    pub fn fixed(k: u32) -> Result<Self, ValidationError> {
        Self::new(k, 0, 0.0)
    }

    pub fn max_iterations(&self) -> u32 {
        self.max_iterations
    }
    pub fn patience(&self) -> u32 {
        self.patience
    }
    pub fn min_delta(&self) -> f64 {
        self.min_delta
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub prompt: Prompt,
    pub generated_clip: VideoClip,
    pub score: SimilarityScore<f64>,
    pub report: Option<DifferenceReport>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    Converged,
    MaxReached,
    Failed { reason: String },
}

impl SessionStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, SessionStatus::Converged | SessionStatus::MaxReached)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReconstructionSessionFields")]
pub struct ReconstructionSession {
    id: SessionId,
    source_clip: VideoClip,
    first_frame: FrameRef,
    frames_per_clip: usize,
    records: Vec<IterationRecord>,
    best_index: Option<u32>,
    status: SessionStatus,
    created_at: DateTime<Utc>,
}

#[derive(Deserialize)]
struct ReconstructionSessionFields {
    id: SessionId,
    source_clip: VideoClip,
    first_frame: FrameRef,
    frames_per_clip: usize,
    records: Vec<IterationRecord>,
    best_index: Option<u32>,
    status: SessionStatus,
    created_at: DateTime<Utc>,
}

impl TryFrom<ReconstructionSessionFields> for ReconstructionSession {
    type Error = ValidationError;
    fn try_from(f: ReconstructionSessionFields) -> Result<Self, Self::Error> {
        let s = ReconstructionSession {
            id: f.id,
            source_clip: f.source_clip,
            first_frame: f.first_frame,
            frames_per_clip: f.frames_per_clip,
            records: f.records,
            best_index: f.best_index,
            status: f.status,
            created_at: f.created_at,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Smallest 1-based index achieving the maximum score.
pub fn earliest_argmax(scores: impl IntoIterator<Item = f64>) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i as u32 + 1, s));
        }
    }
    best.map(|(i, _)| i)
}

impl ReconstructionSession {
    pub fn new(
        id: SessionId,
        source_clip: VideoClip,
        first_frame: FrameRef,
        frames_per_clip: usize,
        created_at: DateTime<Utc>,
    ) -> Result<Self, ValidationError> {
        ensure(frames_per_clip >= 1, "frames_per_clip", || "must be at least 1".into())?;
        Ok(Self {
            id,
            source_clip,
            first_frame,
            frames_per_clip,
            records: Vec::new(),
            best_index: None,
            status: SessionStatus::Running,
            created_at,
        })
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(self.frames_per_clip >= 1, "frames_per_clip", || "must be at least 1".into())?;
        for (pos, r) in self.records.iter().enumerate() {
            ensure(r.index as usize == pos + 1, "records", || {
                format!("record at position {pos} has index {}, expected {}", r.index, pos + 1)
            })?;
            ensure(r.report.is_some() || pos + 1 == self.records.len(), "records", || {
                format!("record {} is missing its difference report", r.index)
            })?;
        }
        ensure(self.best_index == earliest_argmax(self.scores()), "best_index", || {
            "must be the earliest record with the maximal score".into()
        })?;
        if self.status.is_terminal() {
            ensure(
                self.records.last().is_some_and(|r| r.report.is_none()),
                "status",
                || "a finished session ends with a report-free record".into(),
            )?;
        }
        Ok(())
    }

    pub fn id(&self) -> &SessionId {
        &self.id
    }
    pub fn source_clip(&self) -> &VideoClip {
        &self.source_clip
    }
    pub fn first_frame(&self) -> &FrameRef {
        &self.first_frame
    }
    pub fn frames_per_clip(&self) -> usize {
        self.frames_per_clip
    }
    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }
    pub fn best_index(&self) -> Option<u32> {
        self.best_index
    }
    pub fn status(&self) -> &SessionStatus {
        &self.status
    }
    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.score.value())
    }

    pub fn best_record(&self) -> Option<&IterationRecord> {
        self.best_index.map(|i| &self.records[i as usize - 1])
    }

    /// The prompt of the earliest highest-scoring iteration.
    pub fn best_prompt(&self) -> Option<&Prompt> {
        self.best_record().map(|r| &r.prompt)
    }

    pub fn trace(&self) -> Option<crate::similarity::ScoreTrace<f64>> {
        crate::similarity::ScoreTrace::new(self.source_clip.id.clone(), self.scores().collect()).ok()
    }

    pub(crate) fn push_record(&mut self, record: IterationRecord) {
        debug_assert_eq!(record.index as usize, self.records.len() + 1);
        self.records.push(record);
        self.best_index = earliest_argmax(self.scores());
    }

    pub(crate) fn set_status(&mut self, status: SessionStatus) {
        self.status = status;
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            text: text.into(),
        }
    }
    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Version {
    pub version_index: u32,
    pub prompt_snapshot: Prompt,
    pub first_frame_snapshot: FrameRef,
    pub clip: VideoClip,
    pub created_at: DateTime<Utc>,
}

/// Where a rewrite session's starting prompt came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewriteSource {
    Reconstruction { session_id: SessionId },
    Clip,
}

/// A first-frame replacement, kept so it can be undone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEdit {
    pub goal: String,
    pub instruction: String,
    pub previous: FrameRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RewriteSessionFields")]
pub struct RewriteSession {
    pub(crate) id: SessionId,
    pub(crate) source: RewriteSource,
    pub(crate) source_clip: VideoClip,
    pub(crate) working_prompt: Prompt,
    pub(crate) working_first_frame: FrameRef,
    pub(crate) frame_history: Vec<FrameEdit>,
    pub(crate) chat: Vec<ChatMessage>,
    pub(crate) versions: Vec<Version>,
}

#[derive(Deserialize)]
struct RewriteSessionFields {
    id: SessionId,
    source: RewriteSource,
    source_clip: VideoClip,
    working_prompt: Prompt,
    working_first_frame: FrameRef,
    frame_history: Vec<FrameEdit>,
    chat: Vec<ChatMessage>,
    versions: Vec<Version>,
}

impl TryFrom<RewriteSessionFields> for RewriteSession {
    type Error = ValidationError;
    fn try_from(f: RewriteSessionFields) -> Result<Self, Self::Error> {
        for (pos, v) in f.versions.iter().enumerate() {
            ensure(v.version_index as usize == pos + 1, "versions", || {
                format!("version at position {pos} has index {}", v.version_index)
            })?;
        }
        Ok(RewriteSession {
            id: f.id,
            source: f.source,
            source_clip: f.source_clip,
            working_prompt: f.working_prompt,
            working_first_frame: f.working_first_frame,
            frame_history: f.frame_history,
            chat: f.chat,
            versions: f.versions,
        })
    }
}

impl RewriteSession {
    pub fn id(&self) -> &SessionId {
        &self.id
    }
    pub fn source(&self) -> &RewriteSource {
        &self.source
    }
    pub fn source_clip(&self) -> &VideoClip {
        &self.source_clip
    }
    pub fn working_prompt(&self) -> &Prompt {
        &self.working_prompt
    }
    pub fn working_first_frame(&self) -> &FrameRef {
        &self.working_first_frame
    }
    pub fn frame_history(&self) -> &[FrameEdit] {
        &self.frame_history
    }
    pub fn chat(&self) -> &[ChatMessage] {
        &self.chat
    }
    pub fn versions(&self) -> &[Version] {
        &self.versions
    }
}
