//! Rewrite workflow: reverse-engineer a clip, edit the prompt directly or
//! with chat help, swap the first frame, and generate comparable versions.
//!
//! Every operation takes the session by reference and returns the next
//! state, so a failed operation leaves the caller's copy untouched.

use crate::adapters::templates::{assist_starter, first_frame_request};
use crate::adapters::AdapterSet;
use crate::engine::{EngineError, Reconstructor, PROBE_ITERATIONS};
use crate::env::Env;
use crate::error::{AdapterError, MediaError, ValidationError};
use crate::model::{
    ChatMessage, ChatRole, FrameEdit, Prompt, Provenance, ReconstructionSession, RewriteSession,
    RewriteSource, SessionId, SessionStatus, StoppingPolicy, Version, VideoClip,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewriteError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("{0} not found")]
    NotFound(String),
    #[error("reconstruction failed: {0}")]
    Reconstruction(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Media(#[from] MediaError),
}

impl From<EngineError> for RewriteError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Validation(v) => RewriteError::Validation(v),
            other => RewriteError::Reconstruction(other.to_string()),
        }
    }
}

fn non_empty(field: &str, text: &str) -> Result<(), ValidationError> {
    if text.trim().is_empty() {
        Err(ValidationError::new(field, "must not be empty"))
    } else {
        Ok(())
    }
}

/// Id of the reconstruction that backs a rewrite session started from a clip.
pub fn probe_session_id(rewrite_id: &SessionId) -> SessionId {
    let name = format!("probe:{rewrite_id}");
    SessionId(uuid::Uuid::new_v5(&uuid::Uuid::NAMESPACE_OID, name.as_bytes()).to_string())
}

impl RewriteSession {
    /// Reverse-engineers `clip` for a fixed six iterations and opens a
    /// rewrite session on the best prompt found. The finished
    /// reconstruction is returned alongside.
    pub fn start_from_clip(
        id: SessionId,
        clip: VideoClip,
        adapters: &AdapterSet,
        env: &Env,
    ) -> Result<(RewriteSession, ReconstructionSession), RewriteError> {
        let engine = Reconstructor::new(adapters, env);
        let recon = engine.begin(probe_session_id(&id), clip)?;
        let recon = engine.drive(recon, &StoppingPolicy::fixed(PROBE_ITERATIONS)?, None)?;
        let rewrite = Self::start_from_reconstruction(id, &recon)?;
        Ok((rewrite, recon))
    }

    /// Opens a rewrite session on a finished reconstruction.
    pub fn start_from_reconstruction(
        id: SessionId,
        recon: &ReconstructionSession,
    ) -> Result<RewriteSession, RewriteError> {
        match recon.status() {
            SessionStatus::Converged | SessionStatus::MaxReached => {}
            SessionStatus::Failed { reason } => return Err(RewriteError::Reconstruction(reason.clone())),
            SessionStatus::Running => {
                return Err(RewriteError::Reconstruction(format!(
                    "session {} has not finished",
                    recon.id()
                )))
            }
        }
        let prompt = recon
            .best_prompt()
            .ok_or_else(|| RewriteError::Reconstruction(format!("session {} has no iterations", recon.id())))?;
        Ok(RewriteSession {
            id,
            source: RewriteSource::Reconstruction {
                session_id: recon.id().clone(),
            },
            source_clip: recon.source_clip().clone(),
            working_prompt: prompt.clone(),
            working_first_frame: recon.first_frame().clone(),
            frame_history: Vec::new(),
            chat: Vec::new(),
            versions: Vec::new(),
        })
    }

    /// Replaces the working prompt with user text.
    pub fn edit_prompt(&self, text: &str, env: &Env) -> Result<RewriteSession, RewriteError> {
        let prompt = Prompt::new(text, Provenance::UserEdited, env.clock.now())?;
        let mut next = self.clone();
        next.working_prompt = prompt;
        Ok(next)
    }

    /// Sends a message to the chat assistant and appends its reply. The
    /// opening message of a conversation is the starter template.
    pub fn request_assist(&self, goal: &str, adapters: &AdapterSet) -> Result<RewriteSession, RewriteError> {
        non_empty("goal", goal)?;
        let outgoing = if self.chat.is_empty() {
            assist_starter(goal, self.working_prompt.text())
        } else {
            goal.to_string()
        };
        let mut next = self.clone();
        next.chat.push(ChatMessage::user(outgoing));
        let reply = adapters.chat.assist(&next.chat)?;
        next.chat.push(ChatMessage::assistant(reply.text));
        Ok(next)
    }

    /// Makes the assistant message at `chat_index` the working prompt.
    pub fn adopt_suggestion(&self, chat_index: usize, env: &Env) -> Result<RewriteSession, RewriteError> {
        let msg = self
            .chat
            .get(chat_index)
            .filter(|m| m.role == ChatRole::Assistant)
            .ok_or_else(|| RewriteError::NotFound(format!("assistant message {chat_index}")))?;
        let prompt = Prompt::new(msg.text.clone(), Provenance::AssistantSuggested, env.clock.now())?;
        let mut next = self.clone();
        next.working_prompt = prompt;
        Ok(next)
    }

    /// Asks the assistant for an image-editing instruction matching `goal`
    /// and applies it to the working first frame. This exchange is kept out
    /// of the rewrite conversation.
    pub fn request_first_frame(
        &self,
        goal: &str,
        adapters: &AdapterSet,
        env: &Env,
    ) -> Result<RewriteSession, RewriteError> {
        non_empty("goal", goal)?;
        let request = [ChatMessage::user(first_frame_request(goal))];
        let instruction = adapters.chat.assist(&request)?.text;
        let base = env.load_frame(&self.working_first_frame)?;
        let edited = adapters.image_editor.edit(&base, &instruction)?;
        let saved = env.save_frame(&edited)?;
        let mut next = self.clone();
        next.frame_history.push(FrameEdit {
            goal: goal.to_string(),
            instruction,
            previous: self.working_first_frame.clone(),
        });
        next.working_first_frame = saved;
        Ok(next)
    }

    /// Undoes the most recent first-frame edit.
    pub fn revert_first_frame(&self) -> Result<RewriteSession, RewriteError> {
        let mut next = self.clone();
        let edit = next
            .frame_history
            .pop()
            .ok_or_else(|| RewriteError::NotFound("first-frame edit".into()))?;
        next.working_first_frame = edit.previous;
        Ok(next)
    }

    /// Generates a clip from the working prompt and first frame and appends
    /// it as the next version. Working state is left as it was.
    pub fn generate_version(&self, adapters: &AdapterSet, env: &Env) -> Result<RewriteSession, RewriteError> {
        let frame = env.load_frame(&self.working_first_frame)?;
        let clip = adapters.generator.generate(&self.working_prompt, &frame)?;
        let mut next = self.clone();
        next.versions.push(Version {
            version_index: self.versions.len() as u32 + 1,
            prompt_snapshot: self.working_prompt.clone(),
            first_frame_snapshot: self.working_first_frame.clone(),
            clip,
            created_at: env.clock.now(),
        });
        Ok(next)
    }

    pub fn version(&self, index: u32) -> Result<&Version, RewriteError> {
        index
            .checked_sub(1)
            .and_then(|i| self.versions.get(i as usize))
            .ok_or_else(|| RewriteError::NotFound(format!("version {index}")))
    }

    /// Both versions, for side-by-side viewing.
    pub fn compare_versions(&self, a: u32, b: u32) -> Result<(&Version, &Version), RewriteError> {
        Ok((self.version(a)?, self.version(b)?))
    }
}
