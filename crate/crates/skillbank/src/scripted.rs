//! Deterministic backend that answers from fixture records.
//!
//! Fixture lines are `{"tag": ..., "index": n | null, "response": ...}`. A
//! tag ending in `*` matches any request tag with that prefix. `index` is
//! matched against the request's turn; `null` matches any turn. Lookup
//! order: exact tag and index, exact tag any index, then the longest
//! matching prefix (indexed before any-index). No match is an exhausted
//! script.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use skillbank_core::backend::{BackendError, ChatBackend, ChatRequest};

use crate::io::{read_ndjson, IoError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tag: String,
    #[serde(default)]
    pub index: Option<u32>,
    pub response: String,
}

impl ScriptEntry {
    pub fn at(tag: impl Into<String>, index: u32, response: impl Into<String>) -> Self {
        ScriptEntry {
            tag: tag.into(),
            index: Some(index),
            response: response.into(),
        }
    }

    pub fn any(tag: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry {
            tag: tag.into(),
            index: None,
            response: response.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("duplicate script entry for tag {tag:?} index {index:?}")]
    Duplicate { tag: String, index: Option<u32> },
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    exact: BTreeMap<(String, Option<u32>), String>,
    prefixes: BTreeMap<(String, Option<u32>), String>,
}

impl ScriptedBackend {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Result<Self, ScriptError> {
        let mut backend = ScriptedBackend::default();
        for e in entries {
            let (map, tag) = match e.tag.strip_suffix('*') {
                Some(prefix) => (&mut backend.prefixes, prefix.to_string()),
                None => (&mut backend.exact, e.tag.clone()),
            };
            if map.insert((tag, e.index), e.response).is_some() {
                return Err(ScriptError::Duplicate {
                    tag: e.tag,
                    index: e.index,
                });
            }
        }
        Ok(backend)
    }

    /// Load one fixture file, or every `*.ndjson` file of a directory in
    /// name order.
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let mut entries: Vec<ScriptEntry> = Vec::new();
        if path.is_dir() {
            let mut files: Vec<_> = std::fs::read_dir(path)
                .map_err(|e| IoError::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
                .collect();
            files.sort();
            for f in files {
                entries.extend(read_ndjson::<ScriptEntry>(&f)?);
            }
        } else {
            entries = read_ndjson(path)?;
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, tag: &str, turn: u32) -> Option<&str> {
        for index in [Some(turn), None] {
            if let Some(r) = self.exact.get(&(tag.to_string(), index)) {
                return Some(r);
            }
        }
        let mut best: Option<(usize, bool, &str)> = None;
        for ((prefix, index), response) in &self.prefixes {
            if !tag.starts_with(prefix.as_str()) || !(index.is_none() || *index == Some(turn)) {
                continue;
            }
            let rank = (prefix.len(), index.is_some());
            if best.is_none_or(|(len, indexed, _)| rank > (len, indexed)) {
                best = Some((rank.0, rank.1, response));
            }
        }
        best.map(|(_, _, r)| r)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        self.lookup(&req.tag, req.turn)
            .map(str::to_string)
            .ok_or_else(|| BackendError::ScriptExhausted {
                tag: req.tag.clone(),
                turn: req.turn,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: &str, turn: u32) -> ChatRequest {
        ChatRequest::single(tag, "sys", "hi").with_turn(turn)
    }

    #[test]
    fn three_turns_then_exhausted() {
        let b = ScriptedBackend::new((0..3).map(|i| ScriptEntry::at("agent/r/p1", i, format!("r{i}")))).unwrap();
        for i in 0..3 {
            assert_eq!(b.complete(&req("agent/r/p1", i)).unwrap(), format!("r{i}"));
        }
        assert_eq!(
            b.complete(&req("agent/r/p1", 3)),
            Err(BackendError::ScriptExhausted {
                tag: "agent/r/p1".into(),
                turn: 3
            })
        );
    }

    #[test]
    fn lookup_precedence() {
        let b = ScriptedBackend::new([
            ScriptEntry::any("scorer/*", "generic"),
            ScriptEntry::any("scorer/verify/*", "verify"),
            ScriptEntry::at("scorer/verify/*", 2, "verify-2"),
            ScriptEntry::any("scorer/verify/x/p", "exact-any"),
            ScriptEntry::at("scorer/verify/x/p", 0, "exact-0"),
        ])
        .unwrap();
        assert_eq!(b.lookup("scorer/verify/x/p", 0), Some("exact-0"));
        assert_eq!(b.lookup("scorer/verify/x/p", 5), Some("exact-any"));
        assert_eq!(b.lookup("scorer/verify/y/p", 2), Some("verify-2"));
        assert_eq!(b.lookup("scorer/verify/y/p", 1), Some("verify"));
        assert_eq!(b.lookup("scorer/stage1/p", 1), Some("generic"));
        assert_eq!(b.lookup("agent/stage1/p", 1), None);
    }

    #[test]
    fn duplicates_rejected_and_files_load() {
        assert!(ScriptedBackend::new([ScriptEntry::any("a", "1"), ScriptEntry::any("a", "2")]).is_err());
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.ndjson"), "{\"tag\":\"x\",\"response\":\"y\"}\n").unwrap();
        std::fs::write(
            dir.path().join("a.ndjson"),
            "{\"tag\":\"z\",\"index\":1,\"response\":\"w\"}\n",
        )
        .unwrap();
        let b = ScriptedBackend::load(dir.path()).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.lookup("z", 1), Some("w"));
    }
}
