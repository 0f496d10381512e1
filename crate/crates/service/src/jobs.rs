//! Background jobs and the in-memory queue that feeds the workers.

use chrono::{DateTime, Utc};
use parking_lot::{Condvar, Mutex};
use reauthor_core::StoppingPolicy;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Reconstruct,
    GenerateVersion,
    Assist,
    FirstFrame,
}

/// What a job does and to which session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum JobSpec {
    /// Runs (or continues) a reconstruction session.
    Reconstruct { session_id: String, policy: StoppingPolicy },
    /// Runs the six-iteration probe and opens the rewrite session on it.
    StartRewrite {
        rewrite_id: String,
        reconstruction_id: String,
    },
    GenerateVersion { rewrite_id: String },
    Assist { rewrite_id: String, goal: String },
    FirstFrame { rewrite_id: String, goal: String },
}

impl JobSpec {
    pub fn kind(&self) -> JobKind {
        match self {
            JobSpec::Reconstruct { .. } | JobSpec::StartRewrite { .. } => JobKind::Reconstruct,
            JobSpec::GenerateVersion { .. } => JobKind::GenerateVersion,
            JobSpec::Assist { .. } => JobKind::Assist,
            JobSpec::FirstFrame { .. } => JobKind::FirstFrame,
        }
    }

    /// The session whose lock the job needs.
    pub fn session(&self) -> &str {
        match self {
            JobSpec::Reconstruct { session_id, .. } => session_id,
            JobSpec::StartRewrite { rewrite_id, .. }
            | JobSpec::GenerateVersion { rewrite_id }
            | JobSpec::Assist { rewrite_id, .. }
            | JobSpec::FirstFrame { rewrite_id, .. } => rewrite_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed { reason: String },
}

impl JobState {
    fn rank(&self) -> u8 {
        match self {
            JobState::Queued => 0,
            JobState::Running => 1,
            JobState::Done | JobState::Failed { .. } => 2,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.rank() == 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub spec: JobSpec,
    #[serde(flatten)]
    pub state: JobState,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    /// Session (or session/version) the job produced or changed.
    pub result_ref: Option<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("illegal job transition {from:?} -> {to:?}")]
pub struct IllegalTransition {
    pub from: JobState,
    pub to: JobState,
}

impl Job {
    pub fn new(spec: JobSpec, now: DateTime<Utc>) -> Self {
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            kind: spec.kind(),
            spec,
            state: JobState::Queued,
            created_at: now,
            started_at: None,
            finished_at: None,
            result_ref: None,
        }
    }

    /// Moves one step forward: queued to running, running to done or failed.
    pub fn advance(&mut self, to: JobState, now: DateTime<Utc>) -> Result<(), IllegalTransition> {
        if to.rank() != self.state.rank() + 1 {
            return Err(IllegalTransition {
                from: self.state.clone(),
                to,
            });
        }
        match to {
            JobState::Running => self.started_at = Some(now),
            _ => self.finished_at = Some(now),
        }
        self.state = to;
        Ok(())
    }
}

#[derive(Default)]
struct QueueState {
    pending: VecDeque<(String, String)>,
    busy: HashSet<String>,
    closed: bool,
}

/// FIFO of job ids. A job is only handed out while no other job on the
/// same session is in progress, so each session sees its jobs in order.
#[derive(Default)]
pub struct Queue {
    state: Mutex<QueueState>,
    ready: Condvar,
}

pub struct Claim {
    pub job_id: String,
    pub session: String,
}

impl Queue {
    pub fn push(&self, job_id: String, session: String) {
        self.state.lock().pending.push_back((job_id, session));
        self.ready.notify_all();
    }

    /// Blocks until a job is available or the queue is closed.
    pub fn claim(&self) -> Option<Claim> {
        let mut st = self.state.lock();
        loop {
            if st.closed {
                return None;
            }
            let pos = st.pending.iter().position(|(_, s)| !st.busy.contains(s));
            if let Some(pos) = pos {
                let (job_id, session) = st.pending.remove(pos).expect("position valid");
                st.busy.insert(session.clone());
                return Some(Claim { job_id, session });
            }
            self.ready.wait(&mut st);
        }
    }

    pub fn release(&self, claim: Claim) {
        self.state.lock().busy.remove(&claim.session);
        self.ready.notify_all();
    }

    pub fn close(&self) {
        self.state.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn pending(&self) -> usize {
        self.state.lock().pending.len()
    }
}
