#![allow(dead_code)]

use reauthor_core::adapters::sim::{SimVideo, SimulationParams, SyntheticScene};
use reauthor_core::adapters::AdapterConfig;
use reauthor_service::{Service, ServiceConfig};
use reqwest::blocking::Client;
use serde_json::Value;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

pub fn scene(seed: u64) -> SyntheticScene {
    use rand::SeedableRng;
    SyntheticScene::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
}

/// Encoded synthetic clip with default simulation geometry.
pub fn clip_bytes(seed: u64) -> Vec<u8> {
    let p = SimulationParams::default();
    SimVideo::new(&scene(seed), 0, p.fps, p.clip_duration, p.width, p.height).encode()
}

pub fn sim_config(seed: u64, params: SimulationParams) -> AdapterConfig {
    let mut c = AdapterConfig::simulation(seed);
    c.simulation = params;
    c
}

/// A service with workers and an HTTP listener inside this process.
pub struct InProcess {
    pub service: Arc<Service>,
    pub base: String,
    workers: Vec<std::thread::JoinHandle<()>>,
}

impl InProcess {
    pub fn start(data_dir: &Path, adapters: AdapterConfig, workers: usize) -> Self {
        let config = ServiceConfig {
            data_dir: data_dir.to_path_buf(),
            adapters,
            max_upload_bytes: 1 << 20,
        };
        let service = Service::open(&config).unwrap();
        let handles = service.start_workers(workers);
        let (tx, rx) = std::sync::mpsc::channel();
        let svc = service.clone();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, reauthor_service::api::router(svc, 1 << 20))
                    .await
                    .unwrap();
            });
        });
        let addr = rx.recv().unwrap();
        Self {
            service,
            base: format!("http://{addr}"),
            workers: handles,
        }
    }

    pub fn stop(self) {
        self.service.begin_shutdown();
        for w in self.workers {
            w.join().unwrap();
        }
    }
}

/// The `reauthor serve` binary running as a child process.
pub struct ServerProcess {
    pub child: Child,
    pub base: String,
}

impl ServerProcess {
    pub fn spawn(data_dir: &Path, extra: &[&str]) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_reauthor"))
            .arg("serve")
            .arg("--port")
            .arg("0")
            .arg("--data-dir")
            .arg(data_dir)
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn reauthor serve");
        let stdout = child.stdout.take().unwrap();
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Self {
            child,
            base: format!("http://{addr}"),
        }
    }

    /// Hard kill: no chance to save anything.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct Api {
    pub base: String,
    pub http: Client,
}

impl Api {
    pub fn new(base: &str) -> Self {
        Self {
            base: base.to_string(),
            http: Client::builder().timeout(Duration::from_secs(30)).build().unwrap(),
        }
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }

    pub fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }

    pub fn put(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.http.put(format!("{}{path}", self.base)).json(&body).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }

    pub fn upload(&self, bytes: Vec<u8>) -> (u16, Value) {
        let form = reqwest::blocking::multipart::Form::new()
            .part("file", reqwest::blocking::multipart::Part::bytes(bytes).file_name("clip.simv"));
        let r = self.http.post(format!("{}/clips", self.base)).multipart(form).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }

    pub fn upload_raw(&self, bytes: Vec<u8>) -> (u16, Value) {
        let r = self
            .http
            .post(format!("{}/clips", self.base))
            .header("content-type", "application/octet-stream")
            .body(bytes)
            .send()
            .unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }

    /// Polls a job until it finishes and returns its final document.
    pub fn wait_job(&self, id: &str, timeout: Duration) -> Value {
        let start = Instant::now();
        loop {
            let (status, job) = self.get(&format!("/jobs/{id}"));
            assert_eq!(status, 200, "{job}");
            if matches!(job["state"].as_str(), Some("done") | Some("failed")) {
                return job;
            }
            assert!(start.elapsed() < timeout, "job {id} still {} after {timeout:?}", job["state"]);
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    /// Polls until `probe` returns a value.
    pub fn wait_for<T>(&self, timeout: Duration, mut probe: impl FnMut(&Self) -> Option<T>) -> T {
        let start = Instant::now();
        loop {
            if let Some(v) = probe(self) {
                return v;
            }
            assert!(start.elapsed() < timeout, "condition not met within {timeout:?}");
            std::thread::sleep(Duration::from_millis(10));
        }
    }
}

pub fn temp_dir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

pub fn path(dir: &tempfile::TempDir) -> PathBuf {
    dir.path().to_path_buf()
}
