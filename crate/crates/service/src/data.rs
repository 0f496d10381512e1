//! On-disk layout under the data directory:
//!
//! ```text
//! clips/<digest>          media objects (uploads, generated clips, frames)
//! clips/<digest>.json     probed metadata of uploaded clips
//! sessions/<id>.json      reconstruction or rewrite session document
//! sessions/<id>.log       one JSON line per acknowledged mutation
//! jobs/<id>.json          job records
//! ```

use crate::jobs::Job;
use reauthor_core::media::{DirStore, MediaRef};
use reauthor_core::model::{ReconstructionSession, RewriteSession};
use reauthor_core::VideoClip;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionDoc {
    Reconstruction {
        session: ReconstructionSession,
    },
    Rewrite {
        session: RewriteSession,
        /// Jobs whose effect is already part of `session`; lets a job that
        /// was interrupted after saving finish without applying twice.
        #[serde(default)]
        applied_jobs: Vec<String>,
    },
}

#[derive(Clone)]
pub struct DataDir {
    root: PathBuf,
    media: Arc<DirStore>,
}

impl DataDir {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        for sub in ["sessions", "jobs"] {
            fs::create_dir_all(root.join(sub))?;
        }
        let media = DirStore::open(root.join("clips")).map_err(io::Error::other)?;
        Ok(Self {
            root,
            media: Arc::new(media),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn media(&self) -> Arc<DirStore> {
        self.media.clone()
    }

    pub fn media_path(&self, media: &MediaRef) -> PathBuf {
        self.media.path_of(media)
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    fn job_path(&self, id: &str) -> PathBuf {
        self.root.join("jobs").join(format!("{id}.json"))
    }

    fn clip_meta_path(&self, media: &MediaRef) -> PathBuf {
        self.root.join("clips").join(format!("{media}.json"))
    }

    pub fn save_session(&self, id: &str, doc: &SessionDoc) -> io::Result<()> {
        write_json(&self.session_path(id), doc)
    }

    pub fn load_session(&self, id: &str) -> io::Result<Option<SessionDoc>> {
        read_json(&self.session_path(id))
    }

    /// Appends one line to the session's mutation log.
    pub fn append_log(&self, id: &str, entry: &serde_json::Value) -> io::Result<()> {
        let path = self.root.join("sessions").join(format!("{id}.log"));
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        f.write_all(&line)?;
        f.sync_data()
    }

    pub fn read_log(&self, id: &str) -> io::Result<Vec<serde_json::Value>> {
        let path = self.root.join("sessions").join(format!("{id}.log"));
        match fs::read_to_string(path) {
            Ok(s) => s
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str(l).map_err(io::Error::other))
                .collect(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e),
        }
    }

    pub fn save_job(&self, job: &Job) -> io::Result<()> {
        write_json(&self.job_path(&job.id), job)
    }

    pub fn load_job(&self, id: &str) -> io::Result<Option<Job>> {
        read_json(&self.job_path(id))
    }

    pub fn list_jobs(&self) -> io::Result<Vec<Job>> {
        let mut jobs = Vec::new();
        for entry in fs::read_dir(self.root.join("jobs"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(job) = read_json(&path)? {
                    jobs.push(job);
                }
            }
        }
        Ok(jobs)
    }

    pub fn save_clip(&self, clip: &VideoClip) -> io::Result<()> {
        write_json(&self.clip_meta_path(clip.media_ref()), clip)
    }

    pub fn load_clip(&self, media: &MediaRef) -> io::Result<Option<VideoClip>> {
        read_json(&self.clip_meta_path(media))
    }
}

/// Writes through a temporary file and renames, so readers never see a
/// partial document.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&mut tmp, value)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<Option<T>> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}
