//! Content-addressed, append-only artifact store on the local filesystem.
//!
//! Layout: `<root>/{rulesets,runs,comparisons,reviews,fixtures}/` plus
//! `config.json`. Each entry lives in `<kind dir>/<id>.json` where `id` is the
//! SHA-256 of the canonical JSON of its payload (top-level `id` excluded).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::analyzer::Weights;
use crate::canonical::content_id;
use crate::model::{validate_ruleset, Diagnostic, OutcomeSpec, Provenance, RuleSet};
use crate::prompt::TRIAGE_OBJECTIVE;
use crate::registry::{RegistryError, VariableRegistry, VariableSpec};
use crate::review::{apply_review, ReviewDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Ruleset,
    Run,
    Comparison,
    Review,
}

impl EntryKind {
    pub const ALL: [EntryKind; 4] = [EntryKind::Ruleset, EntryKind::Run, EntryKind::Comparison, EntryKind::Review];

    pub fn dir(self) -> &'static str {
        match self {
            EntryKind::Ruleset => "rulesets",
            EntryKind::Run => "runs",
            EntryKind::Comparison => "comparisons",
            EntryKind::Review => "reviews",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceEntry {
    pub id: String,
    pub kind: EntryKind,
    pub created_at: String,
    pub payload: Value,
}

impl WorkspaceEntry {
    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, WorkspaceError> {
        Ok(serde_json::from_value(self.payload.clone())?)
    }
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("no entry with id `{0}`")]
    NotFound(String),
    #[error("id prefix `{0}` is ambiguous")]
    AmbiguousId(String),
    #[error("entry {id} is corrupt: payload hashes to {actual}")]
    HashMismatch { id: String, actual: String },
    #[error("entry {id} is a {found:?}, expected {expected:?}")]
    KindMismatch { id: String, expected: EntryKind, found: EntryKind },
    #[error("validation failed: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<Diagnostic>),
    #[error("registry: {0}")]
    Registry(#[from] RegistryError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDefaults {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ProviderDefaults {
    fn default() -> Self {
        ProviderDefaults {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            temperature: 1.0,
            max_tokens: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkspaceConfig {
    pub domain: String,
    pub objective: String,
    pub outcome: OutcomeSpec,
    pub weights: Weights,
    pub threshold_tolerance: f64,
    pub epsilon: f64,
    pub provider: ProviderDefaults,
    /// Variables registered while parsing responses, on top of the built-in registry.
    pub registry_extensions: Vec<VariableSpec>,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig {
            domain: "Medical".into(),
            objective: TRIAGE_OBJECTIVE.into(),
            outcome: OutcomeSpec::triage(),
            weights: Weights::default(),
            threshold_tolerance: 0.0,
            epsilon: 0.1,
            provider: ProviderDefaults::default(),
            registry_extensions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().expect("entry paths have a parent");
    static SEQ: AtomicU64 = AtomicU64::new(0);
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("entry"),
        std::process::id(),
        SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Workspace {
    /// Opens `root`, creating the layout and a default config when missing.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, WorkspaceError> {
        let root = root.into();
        for kind in EntryKind::ALL {
            fs::create_dir_all(root.join(kind.dir()))?;
        }
        fs::create_dir_all(root.join("fixtures"))?;
        let ws = Workspace { root };
        if !ws.config_path().exists() {
            ws.save_config(&WorkspaceConfig::default())?;
        }
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn fixtures_dir(&self) -> PathBuf {
        self.root.join("fixtures")
    }

    fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn config(&self) -> Result<WorkspaceConfig, WorkspaceError> {
        Ok(serde_json::from_slice(&fs::read(self.config_path())?)?)
    }

    pub fn save_config(&self, config: &WorkspaceConfig) -> Result<(), WorkspaceError> {
        let mut bytes = serde_json::to_vec_pretty(config)?;
        bytes.push(b'\n');
        write_atomic(&self.config_path(), &bytes)?;
        Ok(())
    }

    /// Built-in registry plus this workspace's extensions.
    pub fn registry(&self) -> Result<VariableRegistry, WorkspaceError> {
        let mut reg = VariableRegistry::medical();
        reg.extend_with(&self.config()?.registry_extensions)?;
        Ok(reg)
    }

    /// Records variables discovered while parsing so later validation accepts them.
    pub fn extend_registry(&self, specs: &[VariableSpec]) -> Result<(), WorkspaceError> {
        let mut config = self.config()?;
        let mut reg = self.registry()?;
        let mut changed = false;
        for spec in specs {
            if reg.get(&spec.canonical_name).is_none() {
                reg.register(spec.clone())?;
                config.registry_extensions.push(spec.clone());
                changed = true;
            }
        }
        if changed {
            self.save_config(&config)?;
        }
        Ok(())
    }

    fn path(&self, kind: EntryKind, id: &str) -> PathBuf {
        self.root.join(kind.dir()).join(format!("{id}.json"))
    }

    /// Stores `payload` and returns its id. Identical payloads share one file.
    pub fn store(&self, kind: EntryKind, payload: &Value) -> Result<String, WorkspaceError> {
        if kind == EntryKind::Ruleset {
            let rs: RuleSet = serde_json::from_value(payload.clone())?;
            let diags = validate_ruleset(&rs, &self.registry()?);
            if !diags.is_empty() {
                return Err(WorkspaceError::ValidationFailed(diags));
            }
        }
        let id = content_id(payload);
        let path = self.path(kind, &id);
        if !path.exists() {
            let entry = WorkspaceEntry { id: id.clone(), kind, created_at: now(), payload: payload.clone() };
            let mut bytes = serde_json::to_vec_pretty(&entry)?;
            bytes.push(b'\n');
            write_atomic(&path, &bytes)?;
        }
        Ok(id)
    }

    pub fn store_ruleset(&self, rs: &RuleSet) -> Result<String, WorkspaceError> {
        self.store(EntryKind::Ruleset, &serde_json::to_value(rs)?)
    }

    pub fn store_value<T: Serialize>(&self, kind: EntryKind, payload: &T) -> Result<String, WorkspaceError> {
        self.store(kind, &serde_json::to_value(payload)?)
    }

    fn read_entry(&self, path: &Path, id: &str) -> Result<WorkspaceEntry, WorkspaceError> {
        let entry: WorkspaceEntry = serde_json::from_slice(&fs::read(path)?)?;
        let actual = content_id(&entry.payload);
        if actual != id || entry.id != id {
            return Err(WorkspaceError::HashMismatch { id: id.to_string(), actual });
        }
        Ok(entry)
    }

    fn resolve(&self, kinds: &[EntryKind], id: &str) -> Result<(EntryKind, String), WorkspaceError> {
        let mut hits = Vec::new();
        for &kind in kinds {
            if self.path(kind, id).exists() {
                return Ok((kind, id.to_string()));
            }
            if id.len() >= 4 && id.chars().all(|c| c.is_ascii_hexdigit()) {
                for name in self.ids(kind)? {
                    if name.starts_with(id) {
                        hits.push((kind, name));
                    }
                }
            }
        }
        match hits.len() {
            0 => Err(WorkspaceError::NotFound(id.to_string())),
            1 => Ok(hits.remove(0)),
            _ => Err(WorkspaceError::AmbiguousId(id.to_string())),
        }
    }

    /// Loads an entry of any kind by full id or unique hex prefix.
    pub fn load(&self, id: &str) -> Result<WorkspaceEntry, WorkspaceError> {
        let (kind, full) = self.resolve(&EntryKind::ALL, id)?;
        self.read_entry(&self.path(kind, &full), &full)
    }

    pub fn load_kind(&self, kind: EntryKind, id: &str) -> Result<WorkspaceEntry, WorkspaceError> {
        match self.resolve(&[kind], id) {
            Ok((_, full)) => self.read_entry(&self.path(kind, &full), &full),
            Err(WorkspaceError::NotFound(_)) => match self.resolve(&EntryKind::ALL, id) {
                Ok((found, full)) => Err(WorkspaceError::KindMismatch { id: full, expected: kind, found }),
                Err(e) => Err(e),
            },
            Err(e) => Err(e),
        }
    }

    pub fn load_ruleset(&self, id: &str) -> Result<RuleSet, WorkspaceError> {
        self.load_kind(EntryKind::Ruleset, id)?.decode()
    }

    fn ids(&self, kind: EntryKind) -> Result<Vec<String>, WorkspaceError> {
        let mut out = Vec::new();
        for item in fs::read_dir(self.root.join(kind.dir()))? {
            let name = item?.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name.strip_suffix(".json") {
                if !stem.starts_with('.') {
                    out.push(stem.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Every entry of `kind`, oldest first (ties by id).
    pub fn list(&self, kind: EntryKind) -> Result<Vec<WorkspaceEntry>, WorkspaceError> {
        let mut out = Vec::new();
        for id in self.ids(kind)? {
            out.push(self.read_entry(&self.path(kind, &id), &id)?);
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }

    /// Rule sets whose provenance names `id` as parent.
    pub fn children(&self, id: &str) -> Result<Vec<String>, WorkspaceError> {
        let mut out = Vec::new();
        for entry in self.list(EntryKind::Ruleset)? {
            if let Ok(rs) = entry.decode::<RuleSet>() {
                if matches!(&rs.provenance, Provenance::Edited { parent, .. } if parent == id) {
                    out.push(rs.id);
                }
            }
        }
        Ok(out)
    }

    /// Applies a review: stores the edited rule set and the decision, leaving
    /// the reviewed entry untouched. Returns the edited rule set.
    pub fn apply_review(&self, decision: &ReviewDecision) -> Result<RuleSet, WorkspaceError> {
        let parent = self.load_ruleset(&decision.ruleset_id)?;
        let mut decision = decision.clone();
        decision.ruleset_id = parent.id.clone();
        let edited = apply_review(&parent, &decision, &self.registry()?).map_err(WorkspaceError::ValidationFailed)?;
        self.store_ruleset(&edited)?;
        decision.resulting_ruleset_id = Some(edited.id.clone());
        self.store_value(EntryKind::Review, &decision)?;
        Ok(edited)
    }
}
