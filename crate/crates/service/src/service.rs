//! Session operations behind the HTTP API, and the workers that execute
//! queued jobs.

use crate::data::{DataDir, SessionDoc};
use crate::jobs::{Job, JobSpec, JobState, Queue};
use chrono::Utc;
use parking_lot::Mutex;
use reauthor_core::adapters::{AdapterConfig, AdapterKind, ConfigError};
use reauthor_core::clock::SystemClock;
use reauthor_core::engine::{resume_with_progress, EngineError, Reconstructor, PROBE_ITERATIONS};
use reauthor_core::media::{DecoderChain, FfmpegDecoder, MediaRef};
use reauthor_core::adapters::sim::SimVideoDecoder;
use reauthor_core::model::{RewriteSession, SessionId, Version};
use reauthor_core::rewrite::probe_session_id;
use reauthor_core::{
    AdapterError, AdapterSet, Env, IterationRecord, MediaError, ReconstructionSession, RewriteError, SessionStatus,
    StoppingPolicy, ValidationError, VideoClip,
};
use serde::Serialize;
use serde_json::json;
use std::collections::HashMap;
use std::io;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use thiserror::Error;
use tracing::{error, info, warn};

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("upload of {size} bytes exceeds the limit of {limit} bytes")]
    TooLarge { size: usize, limit: usize },
    #[error("unsupported media: {0}")]
    UnsupportedMedia(String),
    #[error("model backend unavailable: {0}")]
    Unavailable(String),
    #[error("request rejected by the model backend: {0}")]
    Rejected(String),
    #[error("service is shutting down")]
    ShuttingDown,
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<io::Error> for ServiceError {
    fn from(e: io::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl From<MediaError> for ServiceError {
    fn from(e: MediaError) -> Self {
        match e {
            MediaError::NotFound(m) => ServiceError::NotFound(format!("media {m}")),
            MediaError::Unsupported(m) | MediaError::Decode(m) => ServiceError::UnsupportedMedia(m),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<AdapterError> for ServiceError {
    fn from(e: AdapterError) -> Self {
        match e {
            AdapterError::Unavailable(m) => ServiceError::Unavailable(m),
            AdapterError::ContentPolicy(m) | AdapterError::MalformedResponse(m) => ServiceError::Rejected(m),
            AdapterError::Validation(v) => ServiceError::Validation(v),
            AdapterError::Media(m) => m.into(),
        }
    }
}

impl From<RewriteError> for ServiceError {
    fn from(e: RewriteError) -> Self {
        match e {
            RewriteError::Validation(v) => ServiceError::Validation(v),
            RewriteError::NotFound(m) => ServiceError::NotFound(m),
            RewriteError::Adapter(a) => a.into(),
            RewriteError::Media(m) => m.into(),
            RewriteError::Reconstruction(m) => ServiceError::Internal(m),
        }
    }
}

impl From<EngineError> for ServiceError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Validation(v) => ServiceError::Validation(v),
            EngineError::Media(m) => m.into(),
            EngineError::Unrecoverable(m) => ServiceError::Conflict(m),
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub adapters: AdapterConfig,
    pub max_upload_bytes: usize,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data directory: {0}")]
    Data(#[from] io::Error),
    #[error("the remote adapter needs ffmpeg and ffprobe for frame extraction: {0}")]
    ExtractorMissing(MediaError),
}

/// Reconstruction session as served, with the job driving it.
#[derive(Clone, Debug, Serialize)]
pub struct ReconstructionView {
    pub session: ReconstructionSession,
    pub job: Option<Job>,
}

/// Rewrite session as served. `session` is absent until the probe
/// reconstruction has finished.
#[derive(Clone, Debug, Serialize)]
pub struct RewriteView {
    pub id: String,
    pub reconstruction_id: String,
    pub session: Option<RewriteSession>,
    pub jobs: Vec<Job>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VersionPair {
    pub a: Version,
    pub b: Version,
}

enum Driven {
    Finished(ReconstructionSession),
    /// Left running for the next process start.
    Suspended,
    Stopped(String),
}

impl From<ReconstructionSession> for Driven {
    fn from(s: ReconstructionSession) -> Self {
        match s.status() {
            SessionStatus::Running => Driven::Suspended,
            SessionStatus::Failed { reason } => Driven::Stopped(reason.clone()),
            _ => Driven::Finished(s),
        }
    }
}

pub struct Service {
    data: DataDir,
    env: Env,
    adapters: AdapterSet,
    queue: Queue,
    jobs_by_session: Mutex<HashMap<String, Vec<String>>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    stopping: AtomicBool,
    max_upload: usize,
}

impl Service {
    /// Opens the data directory, builds the adapters and re-queues every
    /// job that had not finished when the previous process stopped.
    pub fn open(config: &ServiceConfig) -> Result<Arc<Self>, StartupError> {
        config.adapters.validate().map_err(ConfigError::from)?;
        if let (AdapterKind::Remote, Some(var)) = (config.adapters.kind, &config.adapters.credential_ref) {
            if std::env::var_os(var).is_none() {
                return Err(ConfigError::MissingCredential(var.clone()).into());
            }
        }
        let data = DataDir::open(&config.data_dir)?;
        let mut decoders = DecoderChain::new().with(Arc::new(SimVideoDecoder));
        match FfmpegDecoder::locate() {
            Ok(ff) => decoders = decoders.with(Arc::new(ff)),
            Err(e) if config.adapters.kind == AdapterKind::Remote => return Err(StartupError::ExtractorMissing(e)),
            Err(e) => info!("ffmpeg not available, only synthetic clips can be decoded: {e}"),
        }
        let env = Env::new(data.media(), Arc::new(decoders), Arc::new(SystemClock));
        let adapters = config.adapters.build(&env)?;

        let service = Arc::new(Self {
            data,
            env,
            adapters,
            queue: Queue::default(),
            jobs_by_session: Mutex::new(HashMap::new()),
            locks: Mutex::new(HashMap::new()),
            stopping: AtomicBool::new(false),
            max_upload: config.max_upload_bytes,
        });
        let mut jobs = service.data.list_jobs()?;
        jobs.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        let mut requeued = 0;
        for job in jobs {
            let session = job.spec.session().to_string();
            service
                .jobs_by_session
                .lock()
                .entry(session.clone())
                .or_default()
                .push(job.id.clone());
            if !job.state.is_finished() {
                service.queue.push(job.id.clone(), session);
                requeued += 1;
            }
        }
        if requeued > 0 {
            info!(requeued, "recovered unfinished jobs");
        }
        Ok(service)
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn data(&self) -> &DataDir {
        &self.data
    }

    pub fn start_workers(self: &Arc<Self>, n: usize) -> Vec<JoinHandle<()>> {
        (0..n.max(1))
            .map(|i| {
                let svc = self.clone();
                std::thread::Builder::new()
                    .name(format!("worker-{i}"))
                    .spawn(move || svc.worker_loop())
                    .expect("spawn worker thread")
            })
            .collect()
    }

    /// Stops handing out jobs. Running reconstructions stop after their
    /// current iteration and stay queued for the next start.
    pub fn begin_shutdown(&self) {
        self.stopping.store(true, Ordering::SeqCst);
        self.queue.close();
    }

    fn worker_loop(&self) {
        while let Some(claim) = self.queue.claim() {
            let id = claim.job_id.clone();
            if let Err(e) = self.run_job(&id) {
                error!(job = %id, "job execution error: {e}");
            }
            self.queue.release(claim);
        }
    }

    fn lock(&self, session: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .entry(session.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(())))
            .clone()
    }

    fn enqueue(&self, spec: JobSpec) -> Result<Job> {
        if self.stopping.load(Ordering::SeqCst) {
            return Err(ServiceError::ShuttingDown);
        }
        let job = Job::new(spec, Utc::now());
        let session = job.spec.session().to_string();
        self.data.save_job(&job)?;
        self.jobs_by_session
            .lock()
            .entry(session.clone())
            .or_default()
            .push(job.id.clone());
        self.queue.push(job.id.clone(), session);
        Ok(job)
    }

    pub fn job(&self, id: &str) -> Result<Job> {
        self.data
            .load_job(id)?
            .ok_or_else(|| ServiceError::NotFound(format!("job {id}")))
    }

    fn jobs_of(&self, session: &str) -> Result<Vec<Job>> {
        let ids = self.jobs_by_session.lock().get(session).cloned().unwrap_or_default();
        ids.iter().map(|id| self.job(id)).collect()
    }

    fn log(&self, session: &str, op: &str, detail: serde_json::Value) -> Result<()> {
        let entry = json!({ "at": Utc::now(), "op": op, "detail": detail });
        Ok(self.data.append_log(session, &entry)?)
    }

    // -- clips and media -------------------------------------------------

    /// Stores an upload. Returns the clip and whether it was new.
    pub fn store_clip(&self, bytes: &[u8]) -> Result<(VideoClip, bool)> {
        if bytes.len() > self.max_upload {
            return Err(ServiceError::TooLarge {
                size: bytes.len(),
                limit: self.max_upload,
            });
        }
        if bytes.is_empty() {
            return Err(ServiceError::UnsupportedMedia("empty upload".into()));
        }
        let digest = MediaRef::digest_of(bytes);
        if let Some(existing) = self.data.load_clip(&digest)? {
            return Ok((existing, false));
        }
        let clip = self.env.store_clip(bytes)?;
        self.data.save_clip(&clip)?;
        Ok((clip, true))
    }

    pub fn clip(&self, id: &str) -> Result<VideoClip> {
        let media = MediaRef::parse(id).map_err(|_| ServiceError::NotFound(format!("clip {id}")))?;
        self.data
            .load_clip(&media)?
            .ok_or_else(|| ServiceError::NotFound(format!("clip {id}")))
    }

    pub fn media(&self, digest: &str) -> Result<Arc<Vec<u8>>> {
        let media = MediaRef::parse(digest).map_err(|_| ServiceError::NotFound(format!("media {digest}")))?;
        Ok(self.env.store.get(&media)?)
    }

    // -- reconstructions ---------------------------------------------------

    fn begin_reconstruction(&self, id: SessionId, clip: VideoClip) -> Result<ReconstructionSession> {
        let session = Reconstructor::new(&self.adapters, &self.env).begin(id, clip)?;
        self.save_reconstruction(&session)?;
        self.log(session.id().as_str(), "create", json!({ "clip_id": session.source_clip().id() }))?;
        Ok(session)
    }

    fn save_reconstruction(&self, session: &ReconstructionSession) -> io::Result<()> {
        self.data.save_session(
            session.id().as_str(),
            &SessionDoc::Reconstruction {
                session: session.clone(),
            },
        )
    }

    pub fn create_reconstruction(&self, clip_id: &str, policy: StoppingPolicy) -> Result<(ReconstructionSession, Job)> {
        let clip = self.clip(clip_id)?;
        let session = self.begin_reconstruction(SessionId::random(), clip)?;
        let job = self.enqueue(JobSpec::Reconstruct {
            session_id: session.id().to_string(),
            policy,
        })?;
        Ok((session, job))
    }

    fn load_reconstruction(&self, id: &str) -> Result<ReconstructionSession> {
        match self.data.load_session(id)? {
            Some(SessionDoc::Reconstruction { session }) => Ok(session),
            _ => Err(ServiceError::NotFound(format!("reconstruction {id}"))),
        }
    }

    pub fn reconstruction(&self, id: &str) -> Result<ReconstructionView> {
        let session = self.load_reconstruction(id)?;
        let job = self.jobs_of(id)?.pop();
        Ok(ReconstructionView { session, job })
    }

    /// Queues another run of a failed or suspended reconstruction with the
    /// policy of its last job.
    pub fn resume_reconstruction(&self, id: &str) -> Result<Job> {
        let session = self.load_reconstruction(id)?;
        if session.status().is_terminal() {
            return Err(ServiceError::Conflict(format!("reconstruction {id} has already finished")));
        }
        let jobs = self.jobs_of(id)?;
        if jobs.iter().any(|j| !j.state.is_finished()) {
            return Err(ServiceError::Conflict(format!("reconstruction {id} is already queued")));
        }
        let policy = jobs
            .iter()
            .rev()
            .find_map(|j| match &j.spec {
                JobSpec::Reconstruct { policy, .. } => Some(*policy),
                _ => None,
            })
            .unwrap_or_default();
        self.enqueue(JobSpec::Reconstruct {
            session_id: id.to_string(),
            policy,
        })
    }

    // -- rewrites --------------------------------------------------------

    /// Validates the clip, prepares the probe reconstruction and queues it.
    pub fn create_rewrite(&self, clip_id: &str) -> Result<(String, String, Job)> {
        let clip = self.clip(clip_id)?;
        let rewrite_id = SessionId::random();
        let recon_id = probe_session_id(&rewrite_id);
        self.begin_reconstruction(recon_id.clone(), clip)?;
        let job = self.enqueue(JobSpec::StartRewrite {
            rewrite_id: rewrite_id.to_string(),
            reconstruction_id: recon_id.to_string(),
        })?;
        Ok((rewrite_id.to_string(), recon_id.to_string(), job))
    }

    fn load_rewrite(&self, id: &str) -> Result<(RewriteSession, Vec<String>)> {
        match self.data.load_session(id)? {
            Some(SessionDoc::Rewrite { session, applied_jobs }) => Ok((session, applied_jobs)),
            Some(_) => Err(ServiceError::NotFound(format!("rewrite {id}"))),
            None if self.probe_job(id)?.is_some() => {
                Err(ServiceError::Conflict(format!("rewrite {id} is still being reverse-engineered")))
            }
            None => Err(ServiceError::NotFound(format!("rewrite {id}"))),
        }
    }

    fn probe_job(&self, rewrite_id: &str) -> Result<Option<Job>> {
        Ok(self
            .jobs_of(rewrite_id)?
            .into_iter()
            .find(|j| matches!(j.spec, JobSpec::StartRewrite { .. })))
    }

    fn save_rewrite(&self, session: &RewriteSession, applied_jobs: Vec<String>) -> io::Result<()> {
        self.data.save_session(
            session.id().as_str(),
            &SessionDoc::Rewrite {
                session: session.clone(),
                applied_jobs,
            },
        )
    }

    pub fn rewrite(&self, id: &str) -> Result<RewriteView> {
        let jobs = self.jobs_of(id)?;
        let session = match self.data.load_session(id)? {
            Some(SessionDoc::Rewrite { session, .. }) => Some(session),
            _ if jobs.is_empty() => return Err(ServiceError::NotFound(format!("rewrite {id}"))),
            _ => None,
        };
        Ok(RewriteView {
            id: id.to_string(),
            reconstruction_id: probe_session_id(&SessionId(id.to_string())).to_string(),
            session,
            jobs,
        })
    }

    /// Applies a synchronous edit under the session lock and logs it.
    fn mutate(
        &self,
        id: &str,
        op: &str,
        detail: serde_json::Value,
        f: impl FnOnce(&RewriteSession) -> Result<RewriteSession, RewriteError>,
    ) -> Result<RewriteSession> {
        // Fail fast while the probe still holds the lock.
        self.load_rewrite(id)?;
        let lock = self.lock(id);
        let _guard = lock.lock();
        let (session, applied) = self.load_rewrite(id)?;
        let next = f(&session)?;
        self.save_rewrite(&next, applied)?;
        self.log(id, op, detail)?;
        Ok(next)
    }

    pub fn edit_prompt(&self, id: &str, text: &str) -> Result<RewriteSession> {
        self.mutate(id, "edit_prompt", json!({ "text": text }), |s| s.edit_prompt(text, &self.env))
    }

    pub fn adopt_suggestion(&self, id: &str, chat_index: usize) -> Result<RewriteSession> {
        self.mutate(id, "adopt_suggestion", json!({ "chat_index": chat_index }), |s| {
            s.adopt_suggestion(chat_index, &self.env)
        })
    }

    pub fn revert_first_frame(&self, id: &str) -> Result<RewriteSession> {
        self.mutate(id, "revert_first_frame", json!({}), |s| s.revert_first_frame())
    }

    fn require_rewrite(&self, id: &str) -> Result<()> {
        match self.load_rewrite(id) {
            Ok(_) => Ok(()),
            // Queued behind the probe; runs once the session exists.
            Err(ServiceError::Conflict(_)) => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn require_goal(goal: &str) -> Result<()> {
        if goal.trim().is_empty() {
            return Err(ValidationError::new("goal", "must not be empty").into());
        }
        Ok(())
    }

    pub fn request_assist(&self, id: &str, goal: &str) -> Result<Job> {
        Self::require_goal(goal)?;
        self.require_rewrite(id)?;
        self.enqueue(JobSpec::Assist {
            rewrite_id: id.to_string(),
            goal: goal.to_string(),
        })
    }

    pub fn request_first_frame(&self, id: &str, goal: &str) -> Result<Job> {
        Self::require_goal(goal)?;
        self.require_rewrite(id)?;
        self.enqueue(JobSpec::FirstFrame {
            rewrite_id: id.to_string(),
            goal: goal.to_string(),
        })
    }

    pub fn generate_version(&self, id: &str) -> Result<Job> {
        self.require_rewrite(id)?;
        self.enqueue(JobSpec::GenerateVersion {
            rewrite_id: id.to_string(),
        })
    }

    pub fn versions(&self, id: &str) -> Result<Vec<Version>> {
        Ok(self.load_rewrite(id)?.0.versions().to_vec())
    }

    pub fn compare_versions(&self, id: &str, a: u32, b: u32) -> Result<VersionPair> {
        let (s, _) = self.load_rewrite(id)?;
        let (va, vb) = s.compare_versions(a, b)?;
        Ok(VersionPair {
            a: va.clone(),
            b: vb.clone(),
        })
    }

    // -- job execution ---------------------------------------------------

    fn finish(&self, job: &mut Job, outcome: Result<Option<String>, String>) -> Result<()> {
        let state = match outcome {
            Ok(result_ref) => {
                job.result_ref = result_ref;
                JobState::Done
            }
            Err(reason) => JobState::Failed { reason },
        };
        job.advance(state, Utc::now())
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.data.save_job(job)?;
        info!(job = %job.id, kind = ?job.kind, state = ?job.state, "job finished");
        Ok(())
    }

    pub fn run_job(&self, id: &str) -> Result<()> {
        let mut job = self.job(id)?;
        if job.state.is_finished() {
            return Ok(());
        }
        if job.state == JobState::Queued {
            job.advance(JobState::Running, Utc::now())
                .map_err(|e| ServiceError::Internal(e.to_string()))?;
            self.data.save_job(&job)?;
        }
        let lock = self.lock(job.spec.session());
        let _guard = lock.lock();

        let outcome = match job.spec.clone() {
            JobSpec::Reconstruct { session_id, policy } => match self.drive(&session_id, &policy)? {
                Driven::Suspended => return Ok(()),
                Driven::Stopped(reason) => Err(reason),
                Driven::Finished(_) => Ok(Some(session_id)),
            },
            JobSpec::StartRewrite {
                rewrite_id,
                reconstruction_id,
            } => {
                if self.data.load_session(&rewrite_id)?.is_some() {
                    Ok(Some(rewrite_id))
                } else {
                    let policy = StoppingPolicy::fixed(PROBE_ITERATIONS)?;
                    match self.drive(&reconstruction_id, &policy)? {
                        Driven::Suspended => return Ok(()),
                        Driven::Stopped(reason) => Err(reason),
                        Driven::Finished(recon) => match RewriteSession::start_from_reconstruction(SessionId(rewrite_id.clone()), &recon) {
                            Ok(session) => {
                                self.save_rewrite(&session, vec![job.id.clone()])?;
                                self.log(&rewrite_id, "start", json!({ "reconstruction_id": reconstruction_id, "job": job.id }))?;
                                Ok(Some(rewrite_id))
                            }
                            Err(e) => Err(e.to_string()),
                        },
                    }
                }
            }
            JobSpec::GenerateVersion { rewrite_id } => self.apply(&job.id, &rewrite_id, "generate_version", json!({}), |s| {
                s.generate_version(&self.adapters, &self.env)
            })?,
            JobSpec::Assist { rewrite_id, goal } => {
                self.apply(&job.id, &rewrite_id, "assist", json!({ "goal": goal }), |s| {
                    s.request_assist(&goal, &self.adapters)
                })?
            }
            JobSpec::FirstFrame { rewrite_id, goal } => {
                self.apply(&job.id, &rewrite_id, "first_frame", json!({ "goal": goal }), |s| {
                    s.request_first_frame(&goal, &self.adapters, &self.env)
                })?
            }
        };
        self.finish(&mut job, outcome)
    }

    /// Continues a reconstruction, saving after every iteration.
    fn drive(&self, id: &str, policy: &StoppingPolicy) -> Result<Driven> {
        let session = self.load_reconstruction(id)?;
        if session.status().is_terminal() {
            return Ok(Driven::from(session));
        }
        let mut save_error = None;
        let mut sink = |s: &ReconstructionSession, r: &IterationRecord| {
            if let Err(e) = self.save_reconstruction(s) {
                save_error = Some(e);
                return ControlFlow::Break(());
            }
            info!(session = %s.id(), iteration = r.index, score = r.score.value(), "iteration saved");
            if self.stopping.load(Ordering::SeqCst) {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        };
        let result = resume_with_progress(session, &self.adapters, &self.env, policy, &mut sink);
        if let Some(e) = save_error {
            return Err(e.into());
        }
        match result {
            Ok(session) => {
                self.save_reconstruction(&session)?;
                if *session.status() == SessionStatus::Running {
                    warn!(session = %id, "reconstruction suspended");
                }
                Ok(Driven::from(session))
            }
            Err(EngineError::Unrecoverable(reason)) => {
                warn!(session = %id, %reason, "reconstruction cannot continue");
                Ok(Driven::Stopped(reason))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Runs a job's rewrite operation once. A job already recorded as
    /// applied is not repeated.
    fn apply(
        &self,
        job_id: &str,
        rewrite_id: &str,
        op: &str,
        detail: serde_json::Value,
        f: impl FnOnce(&RewriteSession) -> Result<RewriteSession, RewriteError>,
    ) -> Result<Result<Option<String>, String>> {
        let (session, mut applied) = match self.load_rewrite(rewrite_id) {
            Ok(v) => v,
            Err(e @ (ServiceError::NotFound(_) | ServiceError::Conflict(_))) => return Ok(Err(e.to_string())),
            Err(e) => return Err(e),
        };
        if applied.iter().any(|j| j == job_id) {
            return Ok(Ok(Some(rewrite_id.to_string())));
        }
        match f(&session) {
            Ok(next) => {
                let result_ref = if next.versions().len() > session.versions().len() {
                    format!("{rewrite_id}/versions/{}", next.versions().len())
                } else {
                    rewrite_id.to_string()
                };
                applied.push(job_id.to_string());
                self.save_rewrite(&next, applied)?;
                let mut detail = detail;
                detail["job"] = json!(job_id);
                self.log(rewrite_id, op, detail)?;
                Ok(Ok(Some(result_ref)))
            }
            Err(e) => Ok(Err(e.to_string())),
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.queue.close();
    }
}
