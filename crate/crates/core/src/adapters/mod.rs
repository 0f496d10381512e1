//! Model roles used by the reconstruction loop and the rewrite workflow.
//!
//! Each role is its own trait so backends can be swapped independently.
//! Two families implement all of them: [`sim`], a deterministic synthetic
//! world for offline runs and tests, and [`remote`], JSON-over-HTTP clients
//! for hosted models.

pub mod remote;
pub mod sim;
pub mod templates;

use crate::env::Env;
use crate::error::{AdapterError, ValidationError};
use crate::media::Frame;
use crate::model::{ChatMessage, DifferenceReport, Prompt, VideoClip, DEFAULT_MAX_CLIP_SECONDS};
use crate::similarity::EmbeddingVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

pub trait Describer: Send + Sync {
    /// Produces the seed prompt for a source clip.
    fn initial_prompt(&self, clip: &VideoClip) -> Result<Prompt, AdapterError>;
}

pub trait Generator: Send + Sync {
    /// Renders a clip from a prompt, anchored on `first_frame`.
    fn generate(&self, prompt: &Prompt, first_frame: &Frame) -> Result<VideoClip, AdapterError>;

    fn max_duration(&self) -> f64 {
        DEFAULT_MAX_CLIP_SECONDS
    }
}

pub trait Comparator: Send + Sync {
    fn compare(
        &self,
        original: &VideoClip,
        generated: &VideoClip,
        current: &Prompt,
    ) -> Result<DifferenceReport, AdapterError>;
}

pub trait ImageEditor: Send + Sync {
    fn edit(&self, base: &Frame, instruction: &str) -> Result<Frame, AdapterError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, frame: &Frame) -> Result<EmbeddingVector<f64>, AdapterError>;
    fn dimension(&self) -> usize;
}

pub trait ChatAssistant: Send + Sync {
    /// Replies to a transcript whose last message is from the user.
    fn assist(&self, transcript: &[ChatMessage]) -> Result<ChatMessage, AdapterError>;
}

pub(crate) fn check_transcript(transcript: &[ChatMessage]) -> Result<(), ValidationError> {
    match transcript.last() {
        None => Err(ValidationError::new("transcript", "must not be empty")),
        Some(m) if m.role != crate::model::ChatRole::User => {
            Err(ValidationError::new("transcript", "last message must come from the user"))
        }
        Some(_) => Ok(()),
    }
}

/// One backend per role.
#[derive(Clone)]
pub struct AdapterSet {
    pub describer: Arc<dyn Describer>,
    pub generator: Arc<dyn Generator>,
    pub comparator: Arc<dyn Comparator>,
    pub image_editor: Arc<dyn ImageEditor>,
    pub embedder: Arc<dyn Embedder>,
    pub chat: Arc<dyn ChatAssistant>,
}

impl AdapterSet {
    /// Every role served by one simulated world.
    pub fn simulation(config: sim::SimulationConfig, env: &Env) -> Self {
        let backend = Arc::new(sim::SimulationBackend::new(config, env.clone()));
        Self {
            describer: backend.clone(),
            generator: backend.clone(),
            comparator: backend.clone(),
            image_editor: backend.clone(),
            embedder: backend.clone(),
            chat: backend,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Describer,
    Generator,
    Comparator,
    ImageEditor,
    Embedder,
    Chat,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Describer,
        Role::Generator,
        Role::Comparator,
        Role::ImageEditor,
        Role::Embedder,
        Role::Chat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Describer => "describer",
            Role::Generator => "generator",
            Role::Comparator => "comparator",
            Role::ImageEditor => "image_editor",
            Role::Embedder => "embedder",
            Role::Chat => "chat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Simulation,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
}

/// Backend selection as read from a configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    /// Base URL; each role posts to `<endpoint>/<role>` unless overridden.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub role_endpoints: BTreeMap<Role, String>,
    /// Name of the environment variable holding the API credential.
    #[serde(default)]
    pub credential_ref: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub simulation: sim::SimulationParams,
    #[serde(default = "default_dimension")]
    pub embedding_dimension: usize,
}

fn default_timeout() -> f64 {
    300.0
}
fn default_retries() -> u32 {
    3
}
fn default_in_flight() -> usize {
    4
}
fn default_dimension() -> usize {
    sim::DEFAULT_EMBEDDING_DIMENSION
}

impl AdapterConfig {
    pub fn simulation(seed: u64) -> Self {
        Self {
            kind: AdapterKind::Simulation,
            endpoint: None,
            role_endpoints: BTreeMap::new(),
            credential_ref: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
            seed: Some(seed),
            simulation: sim::SimulationParams::default(),
            embedding_dimension: default_dimension(),
        }
    }

    pub fn remote(endpoint: impl Into<String>, credential_ref: impl Into<String>) -> Self {
        Self {
            kind: AdapterKind::Remote,
            endpoint: Some(endpoint.into()),
            credential_ref: Some(credential_ref.into()),
            seed: None,
            ..Self::simulation(0)
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(ValidationError::new("timeout", "must be positive"));
        }
        if self.embedding_dimension == 0 {
            return Err(ValidationError::new("embedding_dimension", "must be positive"));
        }
        match self.kind {
            AdapterKind::Simulation => {
                if self.seed.is_none() {
                    return Err(ValidationError::new("seed", "simulation adapters require a seed"));
                }
                self.simulation.validate()
            }
            AdapterKind::Remote => {
                let all_roles = Role::ALL.iter().all(|r| self.role_endpoints.contains_key(r));
                if self.endpoint.is_none() && !all_roles {
                    return Err(ValidationError::new("endpoint", "remote adapters require an endpoint"));
                }
                if self.credential_ref.as_deref().is_none_or(str::is_empty) {
                    return Err(ValidationError::new(
                        "credential_ref",
                        "remote adapters require a credential environment variable name",
                    ));
                }
                if self.max_in_flight == 0 {
                    return Err(ValidationError::new("max_in_flight", "must be at least 1"));
                }
                Ok(())
            }
        }
    }

    pub fn endpoint_for(&self, role: Role) -> Option<String> {
        self.role_endpoints.get(&role).cloned().or_else(|| {
            self.endpoint
                .as_ref()
                .map(|base| format!("{}/{}", base.trim_end_matches('/'), role.as_str()))
        })
    }

    /// Validates and instantiates the backends. Remote credentials are read
    /// from the environment here, so a missing variable fails immediately.
    pub fn build(&self, env: &Env) -> Result<AdapterSet, ConfigError> {
        self.validate()?;
        match self.kind {
            AdapterKind::Simulation => Ok(AdapterSet::simulation(
                sim::SimulationConfig {
                    seed: self.seed.expect("validated"),
                    params: self.simulation.clone(),
                    dimension: self.embedding_dimension,
                },
                env,
            )),
            AdapterKind::Remote => {
                let var = self.credential_ref.clone().expect("validated");
                let credential =
                    std::env::var(&var).map_err(|_| ConfigError::MissingCredential(var.clone()))?;
                Ok(remote::RemoteBackend::new(self, credential, env.clone())?.into_set())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_names_fields() {
        let mut c = AdapterConfig::simulation(1);
        c.seed = None;
        assert_eq!(c.validate().unwrap_err().field, "seed");

        let mut r = AdapterConfig::remote("http://x", "KEY");
        assert!(r.validate().is_ok());
        r.credential_ref = None;
        assert_eq!(r.validate().unwrap_err().field, "credential_ref");
        let mut r = AdapterConfig::remote("http://x", "KEY");
        r.endpoint = None;
        assert_eq!(r.validate().unwrap_err().field, "endpoint");
    }

    #[test]
    fn missing_credential_is_named() {
        let r = AdapterConfig::remote("http://localhost:1", "REAUTHOR_TEST_UNSET_CREDENTIAL");
        match r.build(&Env::in_memory()) {
            Err(ConfigError::MissingCredential(v)) => assert_eq!(v, "REAUTHOR_TEST_UNSET_CREDENTIAL"),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected failure"),
        }
    }

    #[test]
    fn role_endpoints_override_base() {
        let mut r = AdapterConfig::remote("http://models/", "KEY");
        r.role_endpoints.insert(Role::Chat, "http://chat/v1".into());
        assert_eq!(r.endpoint_for(Role::Generator).unwrap(), "http://models/generator");
        assert_eq!(r.endpoint_for(Role::Chat).unwrap(), "http://chat/v1");
    }

    #[test]
    fn config_document_round_trip() {
        let c = AdapterConfig::simulation(7);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<AdapterConfig>(&s).unwrap(), c);
        let minimal: AdapterConfig = serde_json::from_str(r#"{"kind":"simulation","seed":3}"#).unwrap();
        assert!(minimal.validate().is_ok());
    }

    #[test]
    fn empty_transcript_rejected() {
        assert!(check_transcript(&[]).is_err());
        assert!(check_transcript(&[ChatMessage::assistant("hi")]).is_err());
        assert!(check_transcript(&[ChatMessage::user("hi")]).is_ok());
    }
}
