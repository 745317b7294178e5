use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionBackend, CompletionRequest, GatewayError, Role};

/// One line of a script file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub role: Role,
    pub iteration: u32,
    #[serde(default)]
    pub attempt: u32,
    pub text: String,
}

/// Replays canned completions keyed by `(role, iteration, attempt)`.
///
/// Several entries with the same key are returned in file order, one per
/// call. Once a key's entries are used up, further calls fail with
/// [`GatewayError::ScriptExhausted`].
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: Mutex<BTreeMap<(Role, u32, u32), VecDeque<String>>>,
}

impl ScriptedBackend {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let mut map: BTreeMap<(Role, u32, u32), VecDeque<String>> = BTreeMap::new();
        for e in entries {
            map.entry((e.role, e.iteration, e.attempt)).or_default().push_back(e.text);
        }
        Self { entries: Mutex::new(map) }
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| GatewayError::Config(format!("script line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn remaining(&self) -> usize {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).values().map(VecDeque::len).sum()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let key = (request.role, request.iteration, request.attempt);
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        entries.get_mut(&key).and_then(VecDeque::pop_front).ok_or(GatewayError::ScriptExhausted {
            role: request.role,
            iteration: request.iteration,
            attempt: request.attempt,
        })
    }
}
