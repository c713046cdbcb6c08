//! Content-addressed store for cut activations.
//!
//! An entry is the activation of one model at one representation cut for one
//! network input. Its key is the SHA-256 of the model's serialized weights,
//! the architecture name, the cut index and an input key that itself hashes
//! the source image pixels, the augmentation draw and the channel mean. Equal
//! keys therefore mean equal computations, and a hit returns exactly what a
//! recomputation would.
//!
//! On disk an entry lives at `<dir>/<first 2 hex digits>/<64 hex digits>.otsw`
//! as a one-tensor container named `activation`. Files are written to a
//! temporary name and renamed into place, so an interrupted run never leaves
//! a truncated entry behind; unreadable entries are treated as misses.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use layergauge_core::Tensor;
use sha2::{Digest, Sha256};

use crate::container::{self, Container, TAG_PRETRAINED};
use crate::error::{Error, Result};

pub type Key = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheMode {
    /// Recompute every activation.
    Off,
    /// Keep entries in memory until the trial ends.
    Memory,
    /// Keep entries on disk. Unless `retain` is set, entries written during a
    /// trial are deleted when it ends.
    Disk { dir: PathBuf, retain: bool },
}

impl CacheMode {
    pub fn describe(&self) -> String {
        match self {
            CacheMode::Off => "off".into(),
            CacheMode::Memory => "memory".into(),
            CacheMode::Disk { dir, retain } => format!("disk:{} (retain={retain})", dir.display()),
        }
    }
}

pub fn cut_key(model: &Key, arch: &str, cut: usize, input: &Key) -> Key {
    let mut h = Sha256::new();
    h.update(b"layergauge-activation-v1");
    h.update(model);
    h.update((arch.len() as u64).to_le_bytes());
    h.update(arch.as_bytes());
    h.update((cut as u64).to_le_bytes());
    h.update(input);
    h.finalize().into()
}

pub fn tensor_digest(t: &Tensor) -> Key {
    let mut h = Sha256::new();
    for &d in t.shape() {
        h.update((d as u64).to_le_bytes());
    }
    for chunk in t.data().chunks(1 << 16) {
        let bytes: Vec<u8> = chunk.iter().flat_map(|v| v.to_le_bytes()).collect();
        h.update(&bytes);
    }
    h.finalize().into()
}

pub struct ActivationCache {
    mode: CacheMode,
    memory: Mutex<HashMap<Key, Arc<Tensor>>>,
    written: Mutex<Vec<PathBuf>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl ActivationCache {
    pub fn new(mode: CacheMode) -> Result<Self> {
        if let CacheMode::Disk { dir, .. } = &mode {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(ActivationCache {
            mode,
            memory: Mutex::new(HashMap::new()),
            written: Mutex::new(Vec::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn mode(&self) -> &CacheMode {
        &self.mode
    }

    pub fn enabled(&self) -> bool {
        self.mode != CacheMode::Off
    }

    fn entry_path(dir: &Path, key: &Key) -> PathBuf {
        let name = hex::encode(key);
        dir.join(&name[..2]).join(format!("{name}.otsw"))
    }

    pub fn get(&self, key: &Key) -> Option<Arc<Tensor>> {
        let found = match &self.mode {
            CacheMode::Off => None,
            CacheMode::Memory => self.memory.lock().expect("cache lock").get(key).cloned(),
            CacheMode::Disk { dir, .. } => container::load(&Self::entry_path(dir, key))
                .ok()
                .and_then(|mut c| c.tensors.pop())
                .filter(|(name, _)| name == "activation")
                .map(|(_, t)| Arc::new(t)),
        };
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    pub fn put(&self, key: &Key, value: Arc<Tensor>) -> Result<()> {
        match &self.mode {
            CacheMode::Off => {}
            CacheMode::Memory => {
                self.memory.lock().expect("cache lock").insert(*key, value);
            }
            CacheMode::Disk { dir, .. } => {
                let path = Self::entry_path(dir, key);
                let parent = path.parent().expect("entry has a parent");
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                let mut c = Container::new(TAG_PRETRAINED, 0, "activation");
                c.push("activation", (*value).clone());
                container::save(&path, &c)?;
                self.written.lock().expect("cache lock").push(path);
            }
        }
        Ok(())
    }

    /// Drops trial-scoped entries.
    pub fn end_trial(&self) -> Result<()> {
        self.memory.lock().expect("cache lock").clear();
        let written = std::mem::take(&mut *self.written.lock().expect("cache lock"));
        if let CacheMode::Disk { retain: false, .. } = self.mode {
            for path in written {
                match std::fs::remove_file(&path) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                    Err(e) => return Err(Error::io(path, e)),
                }
            }
        }
        Ok(())
    }

    /// `(hits, misses)` since creation.
    pub fn stats(&self) -> (usize, usize) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}
