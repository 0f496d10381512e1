//! The closed generate / score / compare-and-refine loop that turns a
//! source clip into the prompt that best regenerates it.

use crate::adapters::AdapterSet;
use crate::clock::seconds_between;
use crate::env::Env;
use crate::error::{MediaError, ValidationError};
use crate::model::{
    IterationRecord, Prompt, ReconstructionSession, SessionId, SessionStatus, StoppingPolicy, VideoClip,
};
use crate::similarity::{frame_aligned_similarity, DEFAULT_FRAMES_PER_CLIP};
use std::ops::ControlFlow;
use thiserror::Error;
use tracing::{debug, info};

/// Probe configuration: iterations run before a clip is handed to the user.
pub const PROBE_ITERATIONS: u32 = 6;
/// Iterations per clip in the batch evaluation protocol.
pub const EVAL_ITERATIONS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("could not prepare the source clip: {0}")]
    Media(#[from] MediaError),
    #[error("session cannot be resumed: {0}")]
    Unrecoverable(String),
}

/// Called once per completed iteration with the session as it stands and
/// the record just added. Returning `Break` suspends the run; the session
/// comes back with status `running` and can be resumed.
pub type ProgressSink<'a> = &'a mut dyn FnMut(&ReconstructionSession, &IterationRecord) -> ControlFlow<()>;

/// Decides whether the run stops after the latest score in `scores`.
///
/// Early stopping tracks a reference best that only moves when a score
/// beats it by more than `min_delta`; the run converges once `patience`
/// iterations pass without such an improvement. With `min_delta == 0` the
/// reference is exactly the earliest argmax.
pub fn stopping_decision(scores: &[f64], policy: &StoppingPolicy) -> Option<SessionStatus> {
    let i = scores.len();
    if i == 0 {
        return None;
    }
    if policy.patience() > 0 {
        let mut ref_score = scores[0];
        let mut ref_iter = 1;
        for (k, &s) in scores.iter().enumerate().skip(1) {
            if s > ref_score + policy.min_delta() {
                ref_score = s;
                ref_iter = k + 1;
            }
        }
        if i - ref_iter >= policy.patience() as usize {
            return Some(SessionStatus::Converged);
        }
    }
    if i >= policy.max_iterations() as usize {
        return Some(SessionStatus::MaxReached);
    }
    None
}

pub struct Reconstructor<'a> {
    adapters: &'a AdapterSet,
    env: &'a Env,
    frames_per_clip: usize,
}

impl<'a> Reconstructor<'a> {
    pub fn new(adapters: &'a AdapterSet, env: &'a Env) -> Self {
        Self {
            adapters,
            env,
            frames_per_clip: DEFAULT_FRAMES_PER_CLIP,
        }
    }

    pub fn frames_per_clip(mut self, n: usize) -> Self {
        self.frames_per_clip = n;
        self
    }

    /// Creates an empty running session: validates the clip against the
    /// generator's length limit and stores the frame at t = 0.
    pub fn begin(&self, id: SessionId, clip: VideoClip) -> Result<ReconstructionSession, EngineError> {
        clip.check_max_duration(self.adapters.generator.max_duration())?;
        let frame = self.env.frame_at(&clip, 0.0)?;
        let first_frame = self.env.save_frame(&frame)?;
        Ok(ReconstructionSession::new(
            id,
            clip,
            first_frame,
            self.frames_per_clip,
            self.env.clock.now(),
        )?)
    }

    /// Runs iterations until the policy stops the session, an adapter
    /// fails, or the progress sink asks to suspend.
    pub fn drive(
        &self,
        mut session: ReconstructionSession,
        policy: &StoppingPolicy,
        mut progress: Option<ProgressSink<'_>>,
    ) -> Result<ReconstructionSession, EngineError> {
        if session.status().is_terminal() {
            return Ok(session);
        }
        let done = session.records().len();
        if done > policy.max_iterations() as usize {
            return Err(ValidationError::new(
                "max_iterations",
                format!("session already has {done} records"),
            )
            .into());
        }
        if let Some(status) = stopping_decision(&session.scores().collect::<Vec<_>>(), policy) {
            // Policy already satisfied by the recorded iterations.
            if session.records().last().is_some_and(|r| r.report.is_none()) {
                session.set_status(status);
                return Ok(session);
            }
        }
        session.set_status(SessionStatus::Running);

        let fail = |mut s: ReconstructionSession, reason: String| {
            info!(session = %s.id(), %reason, "reconstruction failed");
            s.set_status(SessionStatus::Failed { reason });
            Ok(s)
        };

        let first_frame = match self.env.load_frame(session.first_frame()) {
            Ok(f) => f,
            Err(e) => return fail(session, format!("first frame: {e}")),
        };
        let source = session.source_clip().clone();
        let n = session.frames_per_clip();

        let mut prompt: Prompt = match session.records().last() {
            Some(r) => match &r.report {
                Some(report) => report.revised_prompt().clone(),
                None => {
                    return Err(EngineError::Unrecoverable(format!(
                        "record {} has no difference report to continue from",
                        r.index
                    )))
                }
            },
            None => match self.adapters.describer.initial_prompt(&source) {
                Ok(p) => p,
                Err(e) => return fail(session, format!("describer: {e}")),
            },
        };

        loop {
            let index = session.records().len() as u32 + 1;
            let started = self.env.clock.now();

            let generated = match self.adapters.generator.generate(&prompt, &first_frame) {
                Ok(c) => c,
                Err(e) => return fail(session, format!("generator (iteration {index}): {e}")),
            };
            let score = match frame_aligned_similarity(self.env, &source, &generated, &*self.adapters.embedder, n) {
                Ok(s) => s,
                Err(e) => return fail(session, format!("scoring (iteration {index}): {e}")),
            };

            let mut scores: Vec<f64> = session.scores().collect();
            scores.push(score.value());
            let stop = stopping_decision(&scores, policy);

            let report = match stop {
                Some(_) => None,
                None => match self.adapters.comparator.compare(&source, &generated, &prompt) {
                    Ok(r) => Some(r.for_iteration(index)),
                    Err(e) => return fail(session, format!("comparator (iteration {index}): {e}")),
                },
            };

            let record = IterationRecord {
                index,
                prompt: prompt.clone(),
                generated_clip: generated,
                score,
                report,
                wall_time: seconds_between(started, self.env.clock.now()),
            };
            debug!(session = %session.id(), index, score = score.value(), "iteration complete");
            let next = record.report.as_ref().map(|r| r.revised_prompt().clone());
            session.push_record(record);
            if let Some(status) = stop {
                session.set_status(status);
            }

            let flow = match progress.as_mut() {
                Some(sink) => sink(&session, session.records().last().expect("just pushed")),
                None => ControlFlow::Continue(()),
            };
            match (next, flow) {
                (None, _) => return Ok(session),
                (Some(_), ControlFlow::Break(())) => return Ok(session),
                (Some(p), ControlFlow::Continue(())) => prompt = p,
            }
        }
    }
}

/// Identifier derived from the clip and the start time, so runs under a
/// manual clock are reproducible.
fn derived_id(clip: &VideoClip, env: &Env) -> SessionId {
    let stamp = env.clock.now().to_rfc3339();
    let name = format!("{}@{stamp}", clip.id());
    SessionId(uuid::Uuid::new_v5(&uuid::Uuid::NAMESPACE_OID, name.as_bytes()).to_string())
}

/// Reconstructs `clip` under `policy`.
pub fn run_reconstruction(
    clip: VideoClip,
    adapters: &AdapterSet,
    env: &Env,
    policy: &StoppingPolicy,
    progress: Option<ProgressSink<'_>>,
) -> Result<ReconstructionSession, EngineError> {
    let r = Reconstructor::new(adapters, env);
    let id = derived_id(&clip, env);
    let session = r.begin(id, clip)?;
    r.drive(session, policy, progress)
}

/// Continues a suspended or failed session from its last complete record.
/// Finished sessions are returned unchanged.
pub fn resume(
    session: ReconstructionSession,
    adapters: &AdapterSet,
    env: &Env,
    policy: &StoppingPolicy,
) -> Result<ReconstructionSession, EngineError> {
    if session.status().is_terminal() {
        return Ok(session);
    }
    check_resumable(&session, env)?;
    Reconstructor::new(adapters, env)
        .frames_per_clip(session.frames_per_clip())
        .drive(session, policy, None)
}

/// Like [`resume`] but reports progress.
pub fn resume_with_progress(
    session: ReconstructionSession,
    adapters: &AdapterSet,
    env: &Env,
    policy: &StoppingPolicy,
    progress: ProgressSink<'_>,
) -> Result<ReconstructionSession, EngineError> {
    if session.status().is_terminal() {
        return Ok(session);
    }
    check_resumable(&session, env)?;
    Reconstructor::new(adapters, env)
        .frames_per_clip(session.frames_per_clip())
        .drive(session, policy, Some(progress))
}

fn check_resumable(session: &ReconstructionSession, env: &Env) -> Result<(), EngineError> {
    session
        .validate()
        .map_err(|e| EngineError::Unrecoverable(e.to_string()))?;
    for media in [session.source_clip().media_ref(), session.first_frame().media()] {
        if !env.store.contains(media) {
            return Err(EngineError::Unrecoverable(format!("media {media} is missing")));
        }
    }
    if let Some(last) = session.records().last() {
        if last.report.is_none() {
            return Err(EngineError::Unrecoverable(format!(
                "record {} has no difference report to continue from",
                last.index
            )));
        }
        if !env.store.contains(last.generated_clip.media_ref()) {
            return Err(EngineError::Unrecoverable(format!(
                "generated media for record {} is missing",
                last.index
            )));
        }
    }
    Ok(())
}

/// Runs exactly `k` iterations with early stopping disabled.
pub fn fixed_iterations(
    clip: VideoClip,
    adapters: &AdapterSet,
    env: &Env,
    k: u32,
) -> Result<ReconstructionSession, EngineError> {
    let policy = StoppingPolicy::fixed(k)?;
    run_reconstruction(clip, adapters, env, &policy, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(max: u32, patience: u32, delta: f64) -> StoppingPolicy {
        StoppingPolicy::new(max, patience, delta).unwrap()
    }

    #[test]
    fn patience_counts_from_best() {
        let p = policy(10, 2, 0.0);
        assert_eq!(stopping_decision(&[0.5], &p), None);
        assert_eq!(stopping_decision(&[0.5, 0.6], &p), None);
        assert_eq!(stopping_decision(&[0.5, 0.6, 0.6], &p), None);
        assert_eq!(stopping_decision(&[0.5, 0.6, 0.6, 0.55], &p), Some(SessionStatus::Converged));
        assert_eq!(stopping_decision(&[0.5, 0.4, 0.3], &p), Some(SessionStatus::Converged));
    }

    #[test]
    fn min_delta_ignores_small_gains() {
        let p = policy(10, 2, 0.05);
        assert_eq!(stopping_decision(&[0.5, 0.52, 0.54], &p), Some(SessionStatus::Converged));
        assert_eq!(stopping_decision(&[0.5, 0.52, 0.56], &p), None);
    }

    #[test]
    fn zero_patience_never_converges() {
        let p = policy(4, 0, 0.0);
        assert_eq!(stopping_decision(&[0.5, 0.5, 0.5], &p), None);
        assert_eq!(stopping_decision(&[0.5, 0.5, 0.5, 0.5], &p), Some(SessionStatus::MaxReached));
    }

    #[test]
    fn convergence_wins_ties_with_max() {
        let p = policy(3, 2, 0.0);
        assert_eq!(stopping_decision(&[0.9, 0.5, 0.5], &p), Some(SessionStatus::Converged));
        assert_eq!(stopping_decision(&[0.5], &policy(1, 2, 0.0)), Some(SessionStatus::MaxReached));
    }
}
