use super::MediaRef;
use crate::error::MediaError;
use parking_lot::RwLock;
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Content-addressed blob storage. Identical bytes always map to one object.
pub trait MediaStore: Send + Sync {
    fn put(&self, bytes: &[u8]) -> Result<MediaRef, MediaError>;
    fn get(&self, media: &MediaRef) -> Result<Arc<Vec<u8>>, MediaError>;
    fn contains(&self, media: &MediaRef) -> bool;
}

#[derive(Default)]
pub struct MemoryStore {
    objects: RwLock<HashMap<MediaRef, Arc<Vec<u8>>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn remove(&self, media: &MediaRef) -> bool {
        self.objects.write().remove(media).is_some()
    }
}

impl MediaStore for MemoryStore {
    fn put(&self, bytes: &[u8]) -> Result<MediaRef, MediaError> {
        let r = MediaRef::digest_of(bytes);
        self.objects
            .write()
            .entry(r.clone())
            .or_insert_with(|| Arc::new(bytes.to_vec()));
        Ok(r)
    }

    fn get(&self, media: &MediaRef) -> Result<Arc<Vec<u8>>, MediaError> {
        self.objects
            .read()
            .get(media)
            .cloned()
            .ok_or_else(|| MediaError::NotFound(media.to_string()))
    }

    fn contains(&self, media: &MediaRef) -> bool {
        self.objects.read().contains_key(media)
    }
}

/// One file per object, named by digest. Writes go through a temp file and
/// an atomic rename so a crash never leaves a truncated object behind.
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, MediaError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, media: &MediaRef) -> PathBuf {
        self.root.join(media.as_str())
    }
}

impl MediaStore for DirStore {
    fn put(&self, bytes: &[u8]) -> Result<MediaRef, MediaError> {
        let r = MediaRef::digest_of(bytes);
        let path = self.path_of(&r);
        if path.exists() {
            return Ok(r);
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| MediaError::Io(e.to_string()))?;
        Ok(r)
    }

    fn get(&self, media: &MediaRef) -> Result<Arc<Vec<u8>>, MediaError> {
        match fs::read(self.path_of(media)) {
            Ok(b) => Ok(Arc::new(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(MediaError::NotFound(media.to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn contains(&self, media: &MediaRef) -> bool {
        self.path_of(media).is_file()
    }
}
