//! Session storage.
//!
//! Each session keeps its last committed [`Snapshot`] behind an `Arc`;
//! readers clone the `Arc` and never wait on a computation. Mutations take
//! the session's writer lock, compute a new snapshot from the committed one
//! and swap it in, so concurrent edits apply in some sequential order.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use polsynth_core::invariants::InvariantInstance;
use polsynth_core::scenario::{parse_scenario, Scenario};
use polsynth_core::stateful::verify_stateful;
use polsynth_core::synthesis::{verify, VerificationReport};
use polsynth_core::{EdgeSet, PolicyGraph, StatefulPolicy};

/// Everything a response may need, computed against one revision.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub id: String,
    pub revision: u64,
    pub scenario: Arc<Scenario>,
    pub instances: Arc<Vec<InvariantInstance>>,
    pub policy: PolicyGraph,
    pub report: VerificationReport,
    pub stateful: Option<StatefulPolicy>,
    pub report_stateful: Option<VerificationReport>,
}

impl Snapshot {
    /// The next revision with a new policy; any stateful result is dropped
    /// because it was computed for the old graph.
    pub fn with_policy(&self, policy: PolicyGraph, report: VerificationReport) -> Snapshot {
        Snapshot {
            revision: self.revision + 1,
            policy,
            report,
            stateful: None,
            report_stateful: None,
            ..self.clone()
        }
    }
}

pub struct Session {
    /// Held for the duration of a mutation.
    pub writer: tokio::sync::Mutex<()>,
    committed: RwLock<Arc<Snapshot>>,
}

impl Session {
    fn new(snap: Snapshot) -> Self {
        Session {
            writer: tokio::sync::Mutex::new(()),
            committed: RwLock::new(Arc::new(snap)),
        }
    }

    pub fn current(&self) -> Arc<Snapshot> {
        self.committed.read().clone()
    }

    /// Replaces the committed snapshot. Callers must hold `writer`.
    fn commit(&self, snap: Snapshot) -> Arc<Snapshot> {
        let snap = Arc::new(snap);
        *self.committed.write() = snap.clone();
        snap
    }
}

#[derive(Serialize, Deserialize)]
struct StoredSession {
    id: String,
    revision: u64,
    scenario: Value,
    policy: EdgeSet,
    stateful: Option<EdgeSet>,
}

pub struct Store {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    snapshot_dir: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            sessions: RwLock::new(HashMap::new()),
            snapshot_dir: None,
        }
    }

    /// A store persisted to `dir`, reloading any sessions found there.
    pub fn persistent(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let snap = load_snapshot(&path)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            sessions.insert(snap.id.clone(), Arc::new(Session::new(snap)));
        }
        Ok(Store {
            sessions: RwLock::new(sessions),
            snapshot_dir: Some(dir),
        })
    }

    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().get(id).cloned()
    }

    pub fn insert(&self, snap: Snapshot) -> io::Result<Arc<Snapshot>> {
        self.persist(&snap)?;
        let session = Arc::new(Session::new(snap));
        let current = session.current();
        self.sessions.write().insert(current.id.clone(), session);
        Ok(current)
    }

    /// Persists and commits. Callers must hold the session's writer lock.
    pub fn commit(&self, session: &Session, snap: Snapshot) -> io::Result<Arc<Snapshot>> {
        self.persist(&snap)?;
        Ok(session.commit(snap))
    }

    fn persist(&self, snap: &Snapshot) -> io::Result<()> {
        let Some(dir) = &self.snapshot_dir else {
            return Ok(());
        };
        let stored = StoredSession {
            id: snap.id.clone(),
            revision: snap.revision,
            scenario: snap.scenario.to_json(),
            policy: snap.policy.edges().clone(),
            stateful: snap.stateful.as_ref().map(|s| s.stateful().clone()),
        };
        let text = serde_json::to_string_pretty(&stored).map_err(io::Error::other)?;
        // write-then-rename so a crash never leaves a torn file
        let tmp = dir.join(format!("{}.json.tmp", snap.id));
        fs::write(&tmp, text)?;
        fs::rename(tmp, dir.join(format!("{}.json", snap.id)))
    }
}

fn load_snapshot(path: &Path) -> Result<Snapshot, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let stored: StoredSession = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let scenario_text = serde_json::to_string(&stored.scenario).map_err(|e| e.to_string())?;
    let scenario = parse_scenario(&scenario_text).map_err(|e| e.to_string())?;
    let instances = scenario.instantiate().map_err(|e| e.to_string())?;
    let policy = PolicyGraph::new(scenario.entity_set(), stored.policy).map_err(|e| e.to_string())?;
    let report = verify(&policy, &instances).map_err(|e| e.to_string())?;
    let (stateful, report_stateful) = match stored.stateful {
        None => (None, None),
        Some(st) => {
            let sp = StatefulPolicy::new(policy.clone(), st).map_err(|e| e.to_string())?;
            let r = verify_stateful(&sp, &instances).map_err(|e| e.to_string())?;
            (Some(sp), Some(r))
        }
    };
    Ok(Snapshot {
        id: stored.id,
        revision: stored.revision,
        scenario: Arc::new(scenario),
        instances: Arc::new(instances),
        policy,
        report,
        stateful,
        report_stateful,
    })
}
