//! Session storage with per-session serialization and idle expiry.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use triage_core::conversation::Session;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session snapshot {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("session snapshot {}: {detail}", path.display())]
    Corrupt { path: PathBuf, detail: String },
}

/// One session plus the lock that admits a single in-flight turn.
pub struct Slot {
    pub session: Arc<tokio::sync::Mutex<Session>>,
    last_used: Mutex<Instant>,
}

impl Slot {
    fn new(session: Session) -> Arc<Self> {
        Arc::new(Slot { session: Arc::new(tokio::sync::Mutex::new(session)), last_used: Mutex::new(Instant::now()) })
    }

    fn touch(&self, now: Instant) {
        *self.last_used.lock().expect("slot clock") = now;
    }

    fn idle_since(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_used.lock().expect("slot clock"))
    }
}

pub struct SessionStore {
    slots: Mutex<HashMap<String, Arc<Slot>>>,
    idle_expiry: Duration,
    snapshot_dir: Option<PathBuf>,
}

/// Only ids shaped like generated ones may name a snapshot file.
fn is_session_id(id: &str) -> bool {
    id.len() == 32 && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

impl SessionStore {
    pub fn memory(idle_expiry: Duration) -> Self {
        SessionStore { slots: Mutex::new(HashMap::new()), idle_expiry, snapshot_dir: None }
    }

    /// Also writes every stored session to `dir` and reloads it on a miss.
    pub fn file_snapshot(dir: &Path, idle_expiry: Duration) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
        Ok(SessionStore { slots: Mutex::new(HashMap::new()), idle_expiry, snapshot_dir: Some(dir.to_path_buf()) })
    }

    fn snapshot_path(&self, id: &str) -> Option<PathBuf> {
        let dir = self.snapshot_dir.as_ref()?;
        is_session_id(id).then(|| dir.join(format!("{id}.json")))
    }

    pub fn insert(&self, session: Session) -> Result<Arc<Slot>, StoreError> {
        self.persist(&session)?;
        let slot = Slot::new(session.clone());
        self.slots.lock().expect("store").insert(session.id, slot.clone());
        Ok(slot)
    }

    /// The live slot for `id`, refreshed; expired sessions are gone.
    pub fn get(&self, id: &str) -> Result<Option<Arc<Slot>>, StoreError> {
        let now = Instant::now();
        let found = self.slots.lock().expect("store").get(id).cloned();
        if let Some(slot) = found {
            if slot.idle_since(now) > self.idle_expiry {
                self.remove(id);
                return Ok(None);
            }
            slot.touch(now);
            return Ok(Some(slot));
        }
        let Some(path) = self.snapshot_path(id) else { return Ok(None) };
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        let session: Session = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { path: path.clone(), detail: e.to_string() })?;
        let slot = Slot::new(session);
        let mut slots = self.slots.lock().expect("store");
        Ok(Some(slots.entry(id.to_string()).or_insert(slot).clone()))
    }

    /// Writes the snapshot, if this store keeps them.
    pub fn persist(&self, session: &Session) -> Result<(), StoreError> {
        let Some(path) = self.snapshot_path(&session.id) else { return Ok(()) };
        let text = serde_json::to_string(session).expect("sessions serialize");
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text).map_err(|source| StoreError::Io { path: tmp.clone(), source })?;
        std::fs::rename(&tmp, &path).map_err(|source| StoreError::Io { path, source })
    }

    fn remove(&self, id: &str) {
        self.slots.lock().expect("store").remove(id);
        if let Some(path) = self.snapshot_path(id) {
            let _ = std::fs::remove_file(path);
        }
    }

    /// Drops sessions idle longer than the expiry as of `now`; returns how many.
    pub fn sweep_at(&self, now: Instant) -> usize {
        let stale: Vec<String> = self
            .slots
            .lock()
            .expect("store")
            .iter()
            .filter(|(_, s)| s.idle_since(now) > self.idle_expiry)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &stale {
            self.remove(id);
        }
        stale.len()
    }

    pub fn sweep(&self) -> usize {
        self.sweep_at(Instant::now())
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("store").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idle_expiry(&self) -> Duration {
        self.idle_expiry
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;
    use triage_core::conversation::{Engine, EngineConfig};
    use triage_core::flowchart::load_library;

    fn engine() -> Engine {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/flowcharts");
        Engine::offline(Arc::new(load_library(&dir).unwrap().0), EngineConfig::default()).unwrap()
    }

    #[test]
    fn expiry_removes_idle_sessions() {
        let store = SessionStore::memory(Duration::from_secs(60));
        let s = engine().start_session(None);
        store.insert(s.clone()).unwrap();
        assert!(store.get(&s.id).unwrap().is_some());
        assert_eq!(store.sweep_at(Instant::now()), 0);
        assert_eq!(store.sweep_at(Instant::now() + Duration::from_secs(61)), 1);
        assert!(store.get(&s.id).unwrap().is_none());
    }

    #[test]
    fn snapshots_survive_a_restart() {
        let dir = tempfile::tempdir().unwrap();
        let e = engine();
        let mut s = e.start_session(None);
        {
            let store = SessionStore::file_snapshot(dir.path(), Duration::from_secs(60)).unwrap();
            store.insert(s.clone()).unwrap();
            e.submit_message(&mut s, "male, 35 years").unwrap();
            store.persist(&s).unwrap();
        }
        let store = SessionStore::file_snapshot(dir.path(), Duration::from_secs(60)).unwrap();
        let slot = store.get(&s.id).unwrap().unwrap();
        assert_eq!(*slot.session.try_lock().unwrap(), s);
        assert!(store.get("../../etc/passwd").unwrap().is_none());
        store.sweep_at(Instant::now() + Duration::from_secs(120));
        assert!(!dir.path().join(format!("{}.json", s.id)).exists());
    }
}
