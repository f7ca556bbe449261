//! The skill bank: named, versioned skills plus an append-only mutation log.
//!
//! Every change goes through [`SkillBank::apply`], which records a
//! [`Mutation`] carrying the full resulting document. [`replay`] rebuilds a
//! bank from its base snapshot and log, byte for byte.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::skill::{parse_skill, serialize_skill, Category, Skill, SkillError, SkillVersion};
use crate::taxonomy::SeekerState;

/// Which stage of the lifecycle a bank snapshot represents.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GenerationTag {
    /// The synthesized initial bank.
    B0,
    BIntermediate,
    /// The evolved bank.
    BStar,
    Custom(String),
}

impl Default for GenerationTag {
    fn default() -> Self {
        GenerationTag::Custom(String::from("custom"))
    }
}

impl core::fmt::Display for GenerationTag {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            GenerationTag::B0 => "B0",
            GenerationTag::BIntermediate => "B_intermediate",
            GenerationTag::BStar => "B_star",
            GenerationTag::Custom(s) => s,
        })
    }
}

impl core::str::FromStr for GenerationTag {
    type Err = core::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "B0" => GenerationTag::B0,
            "B_intermediate" => GenerationTag::BIntermediate,
            "B_star" => GenerationTag::BStar,
            other => GenerationTag::Custom(other.to_string()),
        })
    }
}

impl Serialize for GenerationTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GenerationTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(raw.parse().unwrap_or_else(|e| match e {}))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BankError {
    #[error("skill {0:?} already exists")]
    Duplicate(String),
    #[error("no skill named {0:?}")]
    NotFound(String),
    #[error("update of {name:?} must raise the version ({from} -> {to})")]
    VersionRegression {
        name: String,
        from: SkillVersion,
        to: SkillVersion,
    },
    #[error("nothing to roll back for {0:?}")]
    NothingToRollback(String),
    #[error("mutation for {name:?} is missing its content")]
    MissingContent { name: String },
    #[error("stored skill {name:?}: {source}")]
    Skill { name: String, source: SkillError },
}

/// Where a skill in the bank came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Part of the initial bank.
    Induced,
    /// Initial skill revised by at least one accepted update.
    Updated,
    /// Created during evolution.
    Added,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankEntry {
    pub skill: Skill,
    /// Canonical `SKILL.md` text of `skill`.
    pub text: String,
    pub origin: Origin,
}

impl BankEntry {
    fn new(skill: Skill, origin: Origin) -> Self {
        let text = serialize_skill(&skill);
        BankEntry { skill, text, origin }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MutationOp {
    Add,
    Update,
    Remove,
    Rollback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    /// Caller-supplied logical clock.
    pub timestamp: u64,
    pub op: MutationOp,
    pub name: String,
    pub from_version: Option<SkillVersion>,
    pub to_version: Option<SkillVersion>,
    pub reason: String,
    /// Document after the mutation; `None` when the skill no longer exists.
    pub content: Option<String>,
    /// Origin after the mutation.
    pub origin: Option<Origin>,
}

/// Requested change; [`SkillBank::apply`] turns it into a logged [`Mutation`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    Add(Skill),
    Update(Skill),
    Remove(String),
    Rollback(String),
}

impl Change {
    pub fn name(&self) -> &str {
        match self {
            Change::Add(s) | Change::Update(s) => &s.name,
            Change::Remove(n) | Change::Rollback(n) => n,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkillBank {
    entries: BTreeMap<String, BankEntry>,
    log: Vec<Mutation>,
    /// Per skill, the entries replaced by each add/update (None = absent).
    history: BTreeMap<String, Vec<Option<BankEntry>>>,
    generation: GenerationTag,
}

impl SkillBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// A base bank of induced skills with an empty log.
    pub fn from_skills<I: IntoIterator<Item = Skill>>(skills: I) -> Result<Self, BankError> {
        let mut bank = SkillBank::new();
        for skill in skills {
            if bank.entries.contains_key(&skill.name) {
                return Err(BankError::Duplicate(skill.name));
            }
            bank.entries
                .insert(skill.name.clone(), BankEntry::new(skill, Origin::Induced));
        }
        Ok(bank)
    }

    /// Parse `(name, text)` documents into a base bank.
    pub fn from_documents<'a, I: IntoIterator<Item = &'a str>>(docs: I) -> Result<Self, BankError> {
        let skills = docs
            .into_iter()
            .map(|text| {
                parse_skill(text).map_err(|source| BankError::Skill {
                    name: text
                        .lines()
                        .find_map(|l| l.strip_prefix("name: "))
                        .unwrap_or("?")
                        .to_string(),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_skills(skills)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&BankEntry> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Entries in name order.
    pub fn entries(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries.values()
    }

    pub fn skills(&self) -> impl Iterator<Item = &Skill> {
        self.entries.values().map(|e| &e.skill)
    }

    pub fn log(&self) -> &[Mutation] {
        &self.log
    }

    /// Restore provenance recorded outside the bank (e.g. in a stored log).
    pub fn set_origin(&mut self, name: &str, origin: Origin) -> bool {
        match self.entries.get_mut(name) {
            Some(e) => {
                e.origin = origin;
                true
            }
            None => false,
        }
    }

    pub fn generation(&self) -> &GenerationTag {
        &self.generation
    }

    pub fn with_generation(mut self, tag: GenerationTag) -> Self {
        self.generation = tag;
        self
    }

    /// The bank without its log and history: the base for further replay.
    pub fn snapshot_base(&self) -> SkillBank {
        SkillBank {
            entries: self.entries.clone(),
            log: Vec::new(),
            history: BTreeMap::new(),
            generation: self.generation.clone(),
        }
    }

    /// Name to canonical text.
    pub fn documents(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.text.clone())).collect()
    }

    pub fn origin_counts(&self) -> BTreeMap<Origin, usize> {
        let mut out = BTreeMap::new();
        for e in self.entries.values() {
            *out.entry(e.origin).or_insert(0) += 1;
        }
        out
    }

    pub fn category_counts(&self) -> BTreeMap<Category, usize> {
        let mut out = BTreeMap::new();
        for e in self.entries.values() {
            *out.entry(e.skill.metadata.category).or_insert(0) += 1;
        }
        out
    }

    /// Apply a change and append it to the log.
    pub fn apply(&mut self, change: Change, timestamp: u64, reason: &str) -> Result<&Mutation, BankError> {
        let name = change.name().to_string();
        let prior = self.entries.get(&name).cloned();
        let from_version = prior.as_ref().map(|e| e.skill.version());
        let (op, next) = match change {
            Change::Add(skill) => {
                if prior.is_some() {
                    return Err(BankError::Duplicate(name));
                }
                (MutationOp::Add, Some(BankEntry::new(skill, Origin::Added)))
            }
            Change::Update(skill) => {
                let prior_entry = prior.as_ref().ok_or_else(|| BankError::NotFound(name.clone()))?;
                let from = prior_entry.skill.version();
                let to = skill.version();
                if to <= from {
                    return Err(BankError::VersionRegression { name, from, to });
                }
                let origin = match prior_entry.origin {
                    Origin::Induced => Origin::Updated,
                    other => other,
                };
                (MutationOp::Update, Some(BankEntry::new(skill, origin)))
            }
            Change::Remove(_) => {
                if prior.is_none() {
                    return Err(BankError::NotFound(name));
                }
                (MutationOp::Remove, None)
            }
            Change::Rollback(_) => {
                let restored = self
                    .history
                    .get_mut(&name)
                    .and_then(Vec::pop)
                    .ok_or_else(|| BankError::NothingToRollback(name.clone()))?;
                (MutationOp::Rollback, restored)
            }
        };
        if matches!(op, MutationOp::Add | MutationOp::Update | MutationOp::Remove) {
            self.history.entry(name.clone()).or_default().push(prior);
        }
        let mutation = Mutation {
            timestamp,
            op,
            name: name.clone(),
            from_version,
            to_version: next.as_ref().map(|e| e.skill.version()),
            reason: reason.to_string(),
            content: next.as_ref().map(|e| e.text.clone()),
            origin: next.as_ref().map(|e| e.origin),
        };
        match next {
            Some(entry) => {
                self.entries.insert(name, entry);
            }
            None => {
                self.entries.remove(&name);
            }
        }
        self.log.push(mutation);
        Ok(self.log.last().expect("just pushed"))
    }

    /// Catalog lines `- name: description`, one per skill in name order.
    pub fn catalog(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            out.push_str("- ");
            out.push_str(&e.skill.name);
            out.push_str(": ");
            out.push_str(&e.skill.description);
            out.push('\n');
        }
        out
    }
}

/// Rebuild a bank by applying `log` to `base`. Contents come from the log
/// records, so the result is byte-identical to the bank that wrote the log.
pub fn replay(base: &SkillBank, log: &[Mutation]) -> Result<SkillBank, BankError> {
    let mut bank = base.snapshot_base();
    for m in log {
        let prior = bank.entries.get(&m.name).cloned();
        match m.op {
            MutationOp::Add if prior.is_some() => return Err(BankError::Duplicate(m.name.clone())),
            MutationOp::Update | MutationOp::Remove if prior.is_none() => {
                return Err(BankError::NotFound(m.name.clone()))
            }
            _ => {}
        }
        if m.op != MutationOp::Rollback {
            bank.history.entry(m.name.clone()).or_default().push(prior);
        } else {
            bank.history.get_mut(&m.name).and_then(Vec::pop);
        }
        match &m.content {
            Some(text) => {
                let skill = parse_skill(text).map_err(|source| BankError::Skill {
                    name: m.name.clone(),
                    source,
                })?;
                let origin = m.origin.unwrap_or(match m.op {
                    MutationOp::Add => Origin::Added,
                    _ => Origin::Updated,
                });
                bank.entries.insert(
                    m.name.clone(),
                    BankEntry {
                        skill,
                        text: text.clone(),
                        origin,
                    },
                );
            }
            None if matches!(m.op, MutationOp::Add | MutationOp::Update) => {
                return Err(BankError::MissingContent { name: m.name.clone() })
            }
            None => {
                bank.entries.remove(&m.name);
            }
        }
        bank.log.push(m.clone());
    }
    Ok(bank)
}

// ---------------------------------------------------------------------------
// retrieval

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalQuery<'a> {
    pub states: &'a [SeekerState],
    pub last_utterance: &'a str,
    pub k: usize,
}

pub const DEFAULT_TOP_K: usize = 5;

/// Score used to rank skills; compared lexicographically, higher first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RetrievalScore {
    pub state_matches: usize,
    pub trigger_hits: usize,
}

fn activation_text(skill: &Skill) -> String {
    const KEYS: [&str; 5] = ["when to use", "activation", "trigger", "rule", "indication"];
    skill
        .section_text(|s| {
            let h = s.heading.to_lowercase();
            KEYS.iter().any(|k| h.contains(k))
        })
        .to_lowercase()
}

/// Quoted phrases on `Trigger:` lines, lowercased.
pub fn trigger_phrases(skill: &Skill) -> Vec<String> {
    let mut out = Vec::new();
    for s in &skill.sections {
        for line in s.body.lines() {
            let lower = line.to_lowercase();
            let Some(pos) = lower.find("trigger:") else { continue };
            let mut rest = &lower[pos + "trigger:".len()..];
            while let Some(open) = rest.find('"') {
                let after = &rest[open + 1..];
                let Some(close) = after.find('"') else { break };
                let phrase = after[..close]
                    .trim()
                    .trim_end_matches(|c: char| c == ',' || c == '.')
                    .trim();
                if !phrase.is_empty() {
                    out.push(phrase.to_string());
                }
                rest = &after[close + 1..];
            }
        }
    }
    out
}

pub fn retrieval_score(skill: &Skill, query: &RetrievalQuery<'_>) -> RetrievalScore {
    let haystack = {
        let mut h = skill.name.to_lowercase();
        h.push('\n');
        h.push_str(&skill.description.to_lowercase());
        h.push('\n');
        h.push_str(&activation_text(skill));
        h
    };
    let state_matches = query
        .states
        .iter()
        .filter(|st| {
            let spaced = st.as_str().to_lowercase();
            let hyphen = spaced.replace(' ', "-");
            let space = spaced.replace('-', " ");
            haystack.contains(&spaced) || haystack.contains(&hyphen) || haystack.contains(&space)
        })
        .count();
    let utterance = query.last_utterance.to_lowercase();
    let trigger_hits = trigger_phrases(skill)
        .iter()
        .filter(|p| utterance.contains(p.as_str()))
        .count();
    RetrievalScore {
        state_matches,
        trigger_hits,
    }
}

/// Top-k skills: by score, then category priority, then name. Deterministic.
pub fn retrieve<'b>(bank: &'b SkillBank, query: &RetrievalQuery<'_>) -> Vec<&'b Skill> {
    let mut scored: Vec<(RetrievalScore, &Skill)> = bank.skills().map(|s| (retrieval_score(s, query), s)).collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.cmp(sa)
            .then(a.metadata.category.priority().cmp(&b.metadata.category.priority()))
            .then(a.name.cmp(&b.name))
    });
    scored.into_iter().take(query.k).map(|(_, s)| s).collect()
}

/// Backend-driven ranking, for callers that want semantic retrieval
/// instead of the lexical default.
pub trait SemanticRetriever {
    /// Names of the chosen skills, best first.
    fn rank(&self, bank: &SkillBank, query: &RetrievalQuery<'_>) -> Result<Vec<String>, crate::backend::BackendError>;
}

/// Resolve a semantic ranking against the bank: unknown and repeated
/// names are dropped, the list is cut to `k`.
pub fn retrieve_with<'b>(
    bank: &'b SkillBank,
    query: &RetrievalQuery<'_>,
    retriever: &dyn SemanticRetriever,
) -> Result<Vec<&'b Skill>, crate::backend::BackendError> {
    let mut out: Vec<&Skill> = Vec::new();
    for name in retriever.rank(bank, query)? {
        if let Some(e) = bank.get(&name) {
            if !out.iter().any(|s| s.name == name) {
                out.push(&e.skill);
            }
        }
        if out.len() == query.k {
            break;
        }
    }
    Ok(out)
}

/// The agent prompt's skills section for the given skills.
pub fn render_skills_section(skills: &[&Skill]) -> String {
    if skills.is_empty() {
        return String::new();
    }
    let mut out = String::from("## Skills\nApply the following skills where they fit the conversation.\n");
    for s in skills {
        out.push_str("\n### Skill: ");
        out.push_str(&s.name);
        out.push('\n');
        out.push_str(&s.description);
        out.push('\n');
        out.push_str(&s.body());
        if !out.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skill::Section;

    fn skill(name: &str, cat: Category, v: (u64, u64)) -> Skill {
        Skill::minimal(name, alloc::format!("About {name}."), cat, "Overview").with_version(SkillVersion::new(v.0, v.1))
    }

    #[test]
    fn mutations_and_replay() {
        let base = SkillBank::from_skills([
            skill("esc-a", Category::Meta, (1, 0)),
            skill("esc-b", Category::Phase, (1, 0)),
        ])
        .unwrap();
        let mut bank = base.clone();
        bank.apply(Change::Update(skill("esc-a", Category::Meta, (2, 0))), 1, "better")
            .unwrap();
        bank.apply(Change::Add(skill("esc-c", Category::Technique, (1, 0))), 2, "gap")
            .unwrap();
        bank.apply(Change::Remove("esc-b".into()), 3, "unused").unwrap();
        assert_eq!(bank.names(), ["esc-a", "esc-c"]);
        assert_eq!(bank.get("esc-a").unwrap().origin, Origin::Updated);
        let replayed = replay(&base, bank.log()).unwrap();
        assert_eq!(replayed.documents(), bank.documents());
        assert_eq!(replayed.origin_counts(), bank.origin_counts());
    }

    #[test]
    fn version_must_increase() {
        let mut bank = SkillBank::from_skills([skill("esc-a", Category::Meta, (2, 0))]).unwrap();
        for v in [(2, 0), (1, 9)] {
            assert!(matches!(
                bank.apply(Change::Update(skill("esc-a", Category::Meta, v)), 1, ""),
                Err(BankError::VersionRegression { .. })
            ));
        }
        assert!(bank.log().is_empty());
        assert!(matches!(
            bank.apply(Change::Add(skill("esc-a", Category::Meta, (1, 0))), 1, ""),
            Err(BankError::Duplicate(_))
        ));
        assert!(matches!(
            bank.apply(Change::Update(skill("esc-z", Category::Meta, (3, 0))), 1, ""),
            Err(BankError::NotFound(_))
        ));
    }

    #[test]
    fn rollback_restores_prior_bytes() {
        let base = SkillBank::from_skills([skill("esc-a", Category::Meta, (1, 0))]).unwrap();
        let mut bank = base.clone();
        bank.apply(Change::Update(skill("esc-a", Category::Meta, (2, 0))), 1, "")
            .unwrap();
        bank.apply(Change::Add(skill("esc-n", Category::Scenario, (1, 0))), 2, "")
            .unwrap();
        bank.apply(Change::Rollback("esc-a".into()), 3, "").unwrap();
        bank.apply(Change::Rollback("esc-n".into()), 4, "").unwrap();
        assert_eq!(bank.documents(), base.documents());
        assert_eq!(bank.get("esc-a").unwrap().origin, Origin::Induced);
        assert!(matches!(
            bank.apply(Change::Rollback("esc-a".into()), 5, ""),
            Err(BankError::NothingToRollback(_))
        ));
        assert_eq!(replay(&base, bank.log()).unwrap().documents(), base.documents());
    }

    #[test]
    fn retrieval_ranks_states_then_triggers_then_category() {
        let mut blame = skill("esc-self-blame-response", Category::Scenario, (1, 0));
        blame.sections.push(Section {
            level: 2,
            heading: "When to Use".into(),
            body: "- Trigger: seeker says \"it's my fault\", \"i ruined\"\n".into(),
        });
        let meta = skill("esc-state-assessment", Category::Meta, (1, 0));
        let phase = skill("esc-opening-rapport", Category::Phase, (1, 0));
        let bank = SkillBank::from_skills([blame, meta, phase]).unwrap();
        let q = RetrievalQuery {
            states: &[SeekerState::SelfBlame],
            last_utterance: "I think it's my fault",
            k: 2,
        };
        let top: Vec<&str> = retrieve(&bank, &q).iter().map(|s| s.name.as_str()).collect();
        assert_eq!(top, ["esc-self-blame-response", "esc-state-assessment"]);
        let s = retrieval_score(&bank.get("esc-self-blame-response").unwrap().skill, &q);
        assert_eq!(
            s,
            RetrievalScore {
                state_matches: 1,
                trigger_hits: 1
            }
        );
        let none = RetrievalQuery {
            states: &[],
            last_utterance: "",
            k: 5,
        };
        let order: Vec<&str> = retrieve(&bank, &none).iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            order,
            ["esc-state-assessment", "esc-self-blame-response", "esc-opening-rapport"]
        );
    }
}
