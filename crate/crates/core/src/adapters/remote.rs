//! JSON-over-HTTP clients for hosted models.
//!
//! Every role posts a multipart request to its endpoint: a `request` part
//! holding a [`RemoteRequest`] document, plus one file part per media
//! handle listed in it. Replies are [`RemoteReply`] documents.

use super::templates::{self, ANALYSIS_FPS};
use super::{
    check_transcript, AdapterConfig, AdapterSet, ChatAssistant, Comparator, Describer, Embedder, Generator,
    ImageEditor, Role,
};
use crate::env::Env;
use crate::error::{AdapterError, ValidationError};
use crate::media::{Frame, Image, MediaRef};
use crate::model::{
    ChatMessage, DifferenceReport, Discrepancy, DiscrepancyCategory, Prompt, Provenance, VideoClip,
};
use crate::similarity::EmbeddingVector;
use base64::Engine as _;
use parking_lot::{Condvar, Mutex};
use rand::Rng;
use reqwest::blocking::{multipart, Client};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Duration;
use tracing::warn;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediaHandle {
    pub handle: String,
    pub kind: MediaKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Video,
    Image,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub role: Role,
    pub instruction_or_prompt: String,
    #[serde(default)]
    pub media: Vec<MediaHandle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_fps: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcript: Vec<ChatMessage>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RemoteReply {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub media_base64: Option<String>,
    #[serde(default)]
    pub embedding: Option<Vec<f64>>,
}

/// Bounds concurrent requests to one endpoint.
struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock();
        while *p == 0 {
            self.freed.wait(&mut p);
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock() += 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteBackend {
    http: Client,
    endpoints: BTreeMap<Role, String>,
    credential: String,
    max_retries: u32,
    backoff_base: Duration,
    limits: HashMap<String, Arc<Semaphore>>,
    dimension: usize,
    env: Env,
}

impl RemoteBackend {
    pub fn new(config: &AdapterConfig, credential: String, env: Env) -> Result<Self, ValidationError> {
        config.validate()?;
        let http = Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| ValidationError::new("endpoint", e.to_string()))?;
        let mut endpoints = BTreeMap::new();
        let mut limits = HashMap::new();
        for role in Role::ALL {
            let url = config
                .endpoint_for(role)
                .ok_or_else(|| ValidationError::new("endpoint", format!("no endpoint for {}", role.as_str())))?;
            reqwest::Url::parse(&url).map_err(|e| ValidationError::new("endpoint", format!("{url}: {e}")))?;
            limits
                .entry(url.clone())
                .or_insert_with(|| Arc::new(Semaphore::new(config.max_in_flight)));
            endpoints.insert(role, url);
        }
        Ok(Self {
            http,
            endpoints,
            credential,
            max_retries: config.max_retries,
            backoff_base: Duration::from_millis(250),
            limits,
            dimension: config.embedding_dimension,
            env,
        })
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn into_set(self) -> AdapterSet {
        let b = Arc::new(self);
        AdapterSet {
            describer: b.clone(),
            generator: b.clone(),
            comparator: b.clone(),
            image_editor: b.clone(),
            embedder: b.clone(),
            chat: b,
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let exp = self.backoff_base.saturating_mul(1u32 << attempt.min(16));
        let jitter = rand::rng().random_range(0.5..1.0);
        exp.mul_f64(jitter)
    }

    /// Sends one logical request, retrying transient failures. Requests
    /// that create media carry an idempotency key shared by all attempts.
    fn call(
        &self,
        request: RemoteRequest,
        media: Vec<(String, Vec<u8>)>,
        idempotent: bool,
    ) -> Result<RemoteReply, AdapterError> {
        let url = &self.endpoints[&request.role];
        let _permit = self.limits[url].acquire();
        let doc = serde_json::to_string(&request).expect("request serializes");
        let key = (!idempotent).then(|| uuid::Uuid::new_v4().to_string());

        let mut last_err = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            let mut form = multipart::Form::new().part(
                "request",
                multipart::Part::text(doc.clone())
                    .mime_str("application/json")
                    .expect("static mime"),
            );
            for (handle, bytes) in &media {
                form = form.part(
                    handle.clone(),
                    multipart::Part::bytes(bytes.clone()).file_name(handle.clone()),
                );
            }
            let mut req = self.http.post(url).bearer_auth(&self.credential).multipart(form);
            if let Some(k) = &key {
                req = req.header("Idempotency-Key", k);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let body = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return serde_json::from_str(&body)
                            .map_err(|e| AdapterError::MalformedResponse(format!("reply document: {e}")));
                    }
                    if status == StatusCode::UNAVAILABLE_FOR_LEGAL_REASONS || body.contains("content_policy") {
                        return Err(AdapterError::ContentPolicy(body));
                    }
                    let transient = status.is_server_error()
                        || status == StatusCode::TOO_MANY_REQUESTS
                        || status == StatusCode::REQUEST_TIMEOUT;
                    if !transient {
                        return Err(AdapterError::MalformedResponse(format!("{url} returned {status}: {body}")));
                    }
                    last_err = format!("{url} returned {status}");
                }
                Err(e) => last_err = format!("{url}: {e}"),
            }
            warn!(attempt, error = %last_err, "remote call failed");
        }
        Err(AdapterError::Unavailable(format!(
            "{last_err} (after {} attempts)",
            self.max_retries + 1
        )))
    }

    fn clip_media(&self, clip: &VideoClip) -> Result<(MediaHandle, (String, Vec<u8>)), AdapterError> {
        let bytes = self.env.store.get(clip.media_ref())?;
        let h = clip.media_ref().to_string();
        Ok((
            MediaHandle {
                handle: h.clone(),
                kind: MediaKind::Video,
            },
            (h, bytes.to_vec()),
        ))
    }

    fn frame_media(frame: &Frame) -> (MediaHandle, (String, Vec<u8>)) {
        let png = frame.image.to_png();
        let h = MediaRef::digest_of(&png).to_string();
        (
            MediaHandle {
                handle: h.clone(),
                kind: MediaKind::Image,
            },
            (h, png),
        )
    }

    fn reply_text(reply: RemoteReply) -> Result<String, AdapterError> {
        match reply.text {
            Some(t) if !t.trim().is_empty() => Ok(t),
            _ => Err(AdapterError::MalformedResponse("empty reply text".into())),
        }
    }

    fn reply_media(reply: &RemoteReply) -> Result<Vec<u8>, AdapterError> {
        let b64 = reply
            .media_base64
            .as_deref()
            .ok_or_else(|| AdapterError::MalformedResponse("reply carries no media".into()))?;
        base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| AdapterError::MalformedResponse(format!("media payload: {e}")))
    }
}

#[derive(Deserialize)]
struct ReportDoc {
    #[serde(default)]
    discrepancies: Vec<DiscrepancyDoc>,
    revised_prompt: String,
}

#[derive(Deserialize)]
struct DiscrepancyDoc {
    #[serde(default)]
    category: String,
    #[serde(default)]
    description: String,
}

/// Parses a comparator reply, tolerating a fenced code block around the
/// JSON. Unknown categories map to `other`.
pub fn parse_report(text: &str, created_at: chrono::DateTime<chrono::Utc>) -> Result<DifferenceReport, AdapterError> {
    let trimmed = text.trim();
    let body = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed);
    let doc: ReportDoc = serde_json::from_str(body.trim())
        .map_err(|e| AdapterError::MalformedResponse(format!("difference report: {e}")))?;
    let prompt = Prompt::new(doc.revised_prompt, Provenance::Refined { iteration: 0 }, created_at)
        .map_err(|_| AdapterError::MalformedResponse("difference report has an empty revised prompt".into()))?;
    let discrepancies = doc
        .discrepancies
        .into_iter()
        .map(|d| Discrepancy {
            category: DiscrepancyCategory::from_label(&d.category),
            description: d.description,
        })
        .collect();
    Ok(DifferenceReport::new(discrepancies, prompt)?)
}

impl Describer for RemoteBackend {
    fn initial_prompt(&self, clip: &VideoClip) -> Result<Prompt, AdapterError> {
        let (handle, part) = self.clip_media(clip)?;
        let reply = self.call(
            RemoteRequest {
                role: Role::Describer,
                instruction_or_prompt: templates::initial_instruction(clip.duration()),
                media: vec![handle],
                analysis_fps: Some(ANALYSIS_FPS),
                transcript: vec![],
            },
            vec![part],
            true,
        )?;
        let text = Self::reply_text(reply)?;
        Ok(Prompt::new(text.trim(), Provenance::Initial, self.env.clock.now())?)
    }
}

impl Generator for RemoteBackend {
    fn generate(&self, prompt: &Prompt, first_frame: &Frame) -> Result<VideoClip, AdapterError> {
        let (handle, part) = Self::frame_media(first_frame);
        let reply = self.call(
            RemoteRequest {
                role: Role::Generator,
                instruction_or_prompt: prompt.text().to_string(),
                media: vec![handle],
                analysis_fps: None,
                transcript: vec![],
            },
            vec![part],
            false,
        )?;
        let bytes = Self::reply_media(&reply)?;
        Ok(self.env.store_clip(&bytes)?)
    }
}

impl Comparator for RemoteBackend {
    fn compare(
        &self,
        original: &VideoClip,
        generated: &VideoClip,
        current: &Prompt,
    ) -> Result<DifferenceReport, AdapterError> {
        let (h1, p1) = self.clip_media(original)?;
        let (h2, p2) = self.clip_media(generated)?;
        let reply = self.call(
            RemoteRequest {
                role: Role::Comparator,
                instruction_or_prompt: templates::comparison_instruction(current.text()),
                media: vec![h1, h2],
                analysis_fps: Some(ANALYSIS_FPS),
                transcript: vec![],
            },
            vec![p1, p2],
            true,
        )?;
        parse_report(&Self::reply_text(reply)?, self.env.clock.now())
    }
}

impl ImageEditor for RemoteBackend {
    fn edit(&self, base: &Frame, instruction: &str) -> Result<Frame, AdapterError> {
        if instruction.trim().is_empty() {
            return Err(ValidationError::new("instruction", "must not be empty").into());
        }
        let (handle, part) = Self::frame_media(base);
        let reply = self.call(
            RemoteRequest {
                role: Role::ImageEditor,
                instruction_or_prompt: instruction.to_string(),
                media: vec![handle],
                analysis_fps: None,
                transcript: vec![],
            },
            vec![part],
            false,
        )?;
        let bytes = Self::reply_media(&reply)?;
        let image = Image::decode(&bytes)?;
        self.env.store.put(&bytes)?;
        Ok(Frame::new(base.timestamp, image))
    }
}

impl Embedder for RemoteBackend {
    fn embed(&self, frame: &Frame) -> Result<EmbeddingVector<f64>, AdapterError> {
        let (handle, part) = Self::frame_media(frame);
        let reply = self.call(
            RemoteRequest {
                role: Role::Embedder,
                instruction_or_prompt: String::new(),
                media: vec![handle],
                analysis_fps: None,
                transcript: vec![],
            },
            vec![part],
            true,
        )?;
        let v = reply
            .embedding
            .ok_or_else(|| AdapterError::MalformedResponse("reply carries no embedding".into()))?;
        EmbeddingVector::with_dimension(v, self.dimension)
            .map_err(|e| AdapterError::MalformedResponse(e.to_string()))
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

impl ChatAssistant for RemoteBackend {
    fn assist(&self, transcript: &[ChatMessage]) -> Result<ChatMessage, AdapterError> {
        check_transcript(transcript)?;
        let reply = self.call(
            RemoteRequest {
                role: Role::Chat,
                instruction_or_prompt: transcript.last().expect("checked").text.clone(),
                media: vec![],
                analysis_fps: None,
                transcript: transcript.to_vec(),
            },
            vec![],
            true,
        )?;
        Ok(ChatMessage::assistant(Self::reply_text(reply)?))
    }
}
