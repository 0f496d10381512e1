//! Remote backend against an in-process HTTP mock.

mod common;

use axum::extract::{Multipart, Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;
use base64::Engine as _;
use common::random_scene;
use parking_lot::Mutex;
use reauthor_core::adapters::remote::{RemoteBackend, RemoteRequest};
use reauthor_core::adapters::sim::SimVideo;
use reauthor_core::adapters::templates::{initial_instruction, ANALYSIS_FPS};
use reauthor_core::adapters::{AdapterConfig, ConfigError, Role};
use reauthor_core::model::{ChatMessage, Prompt, Provenance};
use reauthor_core::{AdapterError, AdapterSet, Env};
use std::collections::{HashMap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

#[derive(Clone, Debug)]
struct Seen {
    role: String,
    auth: Option<String>,
    idempotency_key: Option<String>,
    request: RemoteRequest,
    parts: Vec<String>,
}

#[derive(Default)]
struct Mock {
    replies: Mutex<HashMap<String, VecDeque<(u16, String)>>>,
    seen: Mutex<Vec<Seen>>,
}

async fn handle(
    State(mock): State<Arc<Mock>>,
    Path(role): Path<String>,
    headers: HeaderMap,
    mut form: Multipart,
) -> (StatusCode, String) {
    let mut request = None;
    let mut parts = Vec::new();
    while let Some(field) = form.next_field().await.unwrap() {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.unwrap();
        if name == "request" {
            request = Some(serde_json::from_slice::<RemoteRequest>(&bytes).unwrap());
        } else {
            parts.push(name);
        }
    }
    let header = |k: &str| headers.get(k).map(|v| v.to_str().unwrap().to_string());
    mock.seen.lock().push(Seen {
        role: role.clone(),
        auth: header("authorization"),
        idempotency_key: header("idempotency-key"),
        request: request.expect("request part"),
        parts,
    });
    let (status, body) = mock
        .replies
        .lock()
        .get_mut(&role)
        .and_then(|q| q.pop_front())
        .unwrap_or((500, "no scripted reply".into()));
    (StatusCode::from_u16(status).unwrap(), body)
}

fn serve(mock: Arc<Mock>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new().route("/{role}", post(handle)).with_state(mock);
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

struct Harness {
    mock: Arc<Mock>,
    env: Env,
    set: AdapterSet,
}

impl Harness {
    fn new(dimension: usize) -> Self {
        let mock = Arc::new(Mock::default());
        let base = serve(mock.clone());
        let mut config = AdapterConfig::remote(base, "TEST_REMOTE_KEY");
        config.max_retries = 2;
        config.timeout_secs = 10.0;
        config.embedding_dimension = dimension;
        let env = Env::in_memory();
        let set = RemoteBackend::new(&config, "s3cret".into(), env.clone())
            .unwrap()
            .with_backoff_base(Duration::from_millis(1))
            .into_set();
        Self { mock, env, set }
    }

    fn script(&self, role: &str, replies: &[(u16, &str)]) {
        self.mock
            .replies
            .lock()
            .entry(role.to_string())
            .or_default()
            .extend(replies.iter().map(|(s, b)| (*s, b.to_string())));
    }

    fn seen(&self) -> Vec<Seen> {
        self.mock.seen.lock().clone()
    }
}

fn text_reply(text: &str) -> String {
    serde_json::json!({ "text": text }).to_string()
}

fn sample_clip(env: &Env, seed: u64) -> reauthor_core::VideoClip {
    let video = SimVideo::new(&random_scene(seed), 1, 8.0, 4.0, 24, 12);
    env.store_clip(&video.encode()).unwrap()
}

#[test]
fn describer_forwards_initial_instruction() {
    let h = Harness::new(4);
    let clip = sample_clip(&h.env, 1);
    h.script("describer", &[(200, &text_reply("  A dog runs on a beach.\n"))]);
    let p = h.set.describer.initial_prompt(&clip).unwrap();
    assert_eq!(p.text(), "A dog runs on a beach.");
    assert_eq!(p.provenance(), Provenance::Initial);

    let seen = h.seen();
    assert_eq!(seen.len(), 1);
    let s = &seen[0];
    assert_eq!(s.role, "describer");
    assert_eq!(s.auth.as_deref(), Some("Bearer s3cret"));
    assert_eq!(s.request.role, Role::Describer);
    assert_eq!(s.request.instruction_or_prompt, initial_instruction(4.0));
    assert_eq!(s.request.analysis_fps, Some(ANALYSIS_FPS));
    assert_eq!(s.parts, vec![clip.media_ref().to_string()]);
    assert!(s.idempotency_key.is_none());
}

#[test]
fn generation_retries_transient_errors_with_one_key() {
    let h = Harness::new(4);
    let clip = sample_clip(&h.env, 2);
    let frame = h.env.frame_at(&clip, 0.0).unwrap();
    let payload = SimVideo::new(&random_scene(3), 1, 8.0, 2.0, 24, 12).encode();
    let body = serde_json::json!({
        "media_base64": base64::engine::general_purpose::STANDARD.encode(&payload)
    })
    .to_string();
    h.script("generator", &[(503, "busy"), (429, "slow down"), (200, &body)]);

    let prompt = Prompt::new("subject: fox", Provenance::UserEdited, chrono::Utc::now()).unwrap();
    let out = h.set.generator.generate(&prompt, &frame).unwrap();
    assert_eq!(out.duration(), 2.0);
    assert!(h.env.store.contains(out.media_ref()));

    let seen = h.seen();
    assert_eq!(seen.len(), 3);
    let key = seen[0].idempotency_key.clone().expect("generation carries a key");
    assert!(seen.iter().all(|s| s.idempotency_key.as_ref() == Some(&key)));
    assert_eq!(seen[0].request.instruction_or_prompt, "subject: fox");

    // A second logical request gets a fresh key.
    h.script("generator", &[(200, &body)]);
    h.set.generator.generate(&prompt, &frame).unwrap();
    assert_ne!(h.seen()[3].idempotency_key.as_ref(), Some(&key));
}

#[test]
fn persistent_server_errors_become_unavailable() {
    let h = Harness::new(4);
    let clip = sample_clip(&h.env, 4);
    h.script("describer", &[(500, "x"), (502, "x"), (503, "x"), (200, &text_reply("late"))]);
    let err = h.set.describer.initial_prompt(&clip).unwrap_err();
    assert!(matches!(err, AdapterError::Unavailable(ref m) if m.contains("3 attempts")), "{err:?}");
    assert_eq!(h.seen().len(), 3);
}

#[test]
fn content_policy_and_client_errors_are_not_retried() {
    let h = Harness::new(4);
    let clip = sample_clip(&h.env, 5);
    h.script("describer", &[(451, "blocked"), (400, "bad field"), (200, "{not json")]);
    assert!(matches!(
        h.set.describer.initial_prompt(&clip),
        Err(AdapterError::ContentPolicy(_))
    ));
    assert!(matches!(
        h.set.describer.initial_prompt(&clip),
        Err(AdapterError::MalformedResponse(_))
    ));
    assert!(matches!(
        h.set.describer.initial_prompt(&clip),
        Err(AdapterError::MalformedResponse(_))
    ));
    assert_eq!(h.seen().len(), 3);

    h.script("describer", &[(422, r#"{"error":"content_policy"}"#)]);
    assert!(matches!(
        h.set.describer.initial_prompt(&clip),
        Err(AdapterError::ContentPolicy(_))
    ));
}

#[test]
fn comparator_reply_becomes_report() {
    let h = Harness::new(4);
    let a = sample_clip(&h.env, 6);
    let b = sample_clip(&h.env, 7);
    let doc = r#"{"discrepancies":[{"category":"lighting","description":"darker"}],"revised_prompt":"Brighter scene."}"#;
    h.script("comparator", &[(200, &text_reply(doc))]);
    let prompt = Prompt::new("Dark scene.", Provenance::Initial, chrono::Utc::now()).unwrap();
    let report = h.set.comparator.compare(&a, &b, &prompt).unwrap();
    assert_eq!(report.revised_prompt().text(), "Brighter scene.");
    assert_eq!(report.discrepancies().len(), 1);
    let seen = h.seen();
    assert!(seen[0].request.instruction_or_prompt.contains("Dark scene."));
    assert_eq!(seen[0].parts.len(), 2);
}

#[test]
fn chat_and_embedding_payloads() {
    let h = Harness::new(3);
    h.script("chat", &[(200, &text_reply("Try a sunset."))]);
    let transcript = vec![ChatMessage::user("hi"), ChatMessage::assistant("hello"), ChatMessage::user("ideas?")];
    let reply = h.set.chat.assist(&transcript).unwrap();
    assert_eq!(reply.text, "Try a sunset.");
    assert_eq!(h.seen()[0].request.transcript, transcript);

    let clip = sample_clip(&h.env, 8);
    let frame = h.env.frame_at(&clip, 0.0).unwrap();
    h.script(
        "embedder",
        &[(200, r#"{"embedding":[1.0,0.0,0.0]}"#), (200, r#"{"embedding":[1.0,0.0]}"#)],
    );
    assert_eq!(h.set.embedder.embed(&frame).unwrap().components(), &[1.0, 0.0, 0.0]);
    assert!(matches!(
        h.set.embedder.embed(&frame),
        Err(AdapterError::MalformedResponse(_))
    ));
}

#[test]
fn missing_credential_is_reported_by_name() {
    let config = AdapterConfig::remote("http://127.0.0.1:9", "REAUTHOR_TEST_MISSING_KEY");
    match config.build(&Env::in_memory()) {
        Err(ConfigError::MissingCredential(var)) => assert_eq!(var, "REAUTHOR_TEST_MISSING_KEY"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("build succeeded without a credential"),
    }
}
