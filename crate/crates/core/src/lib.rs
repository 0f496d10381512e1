//! Reverse-engineering videos into editable text prompts.
//!
//! A source clip is described, regenerated, scored against the original
//! with frame-aligned embedding similarity, compared, and re-prompted until
//! the score stops improving. The best prompt then seeds a rewrite session
//! where it can be edited and turned into new versions.
//!
//! Model access goes through the traits in [`adapters`]; a deterministic
//! simulation backend runs the whole pipeline offline.

pub mod adapters;
pub mod clock;
pub mod engine;
pub mod env;
pub mod error;
pub mod media;
pub mod model;
pub mod rewrite;
pub mod scalar;
pub mod similarity;

pub use adapters::{AdapterConfig, AdapterKind, AdapterSet};
pub use engine::{fixed_iterations, resume, run_reconstruction, EngineError, Reconstructor};
pub use env::Env;
pub use error::{AdapterError, MediaError, ValidationError};
pub use model::{
    IterationRecord, Prompt, Provenance, ReconstructionSession, RewriteSession, SessionId, SessionStatus,
    StoppingPolicy, VideoClip,
};
pub use rewrite::RewriteError;
pub use scalar::Scalar;

pub type Embedding = similarity::EmbeddingVector<f64>;
pub type Embedding32 = similarity::EmbeddingVector<f32>;
pub type Score = similarity::SimilarityScore<f64>;
pub type Trace = similarity::ScoreTrace<f64>;
pub type Curves = similarity::AggregateCurves<f64>;
pub type Stats = similarity::CorpusStats<f64>;
