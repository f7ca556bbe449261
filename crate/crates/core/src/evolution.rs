//! Multi-profile self-evolution of a skill bank.
//!
//! Pipeline: simulate every profile, analyse each profile's conversations,
//! consolidate the recommendations into a plan, then run a
//! generate–verify loop per plan entry. Candidates are verified one at a
//! time against the frozen input bank; accepted ones are committed at the
//! end, so a rejected candidate never touches the bank.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{BackendError, Backends, ChatBackend, ChatRequest};
use crate::bank::{replay, BankEntry, BankError, Change, Mutation, SkillBank};
use crate::prompts::{RenderError, ANALYSIS, SKILL_CREATE, SKILL_UPDATE};
use crate::reply::{parse_analysis_report, parse_object, AnalysisReport, Recommendation, ReplyError};
use crate::simulation::{
    batch_simulate, BatchExecutor, BatchResult, Outcome, SeekerProfile, SimConfig, SimulationError, Transcript,
};
use crate::skill::{parse_skill, SectionSchema, Skill, SkillError, SkillVersion, DEFAULT_DOMAIN};

// ---------------------------------------------------------------------------
// acceptance rule

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Retry,
    Reject,
}

/// Accept when every verification conversation succeeded or the average
/// strictly beats the baseline; otherwise retry until `max_attempts`.
pub fn decide(all_success: bool, avg_score: f64, baseline_avg: f64, attempt: u32, max_attempts: u32) -> Decision {
    if all_success || avg_score > baseline_avg {
        Decision::Accept
    } else if attempt < max_attempts {
        Decision::Retry
    } else {
        Decision::Reject
    }
}

// ---------------------------------------------------------------------------
// configuration and errors

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsolidatorMode {
    #[default]
    Deterministic,
    Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub n_verify: usize,
    pub max_attempts: u32,
    /// Conversations shown to the generator per candidate.
    pub max_evidence: usize,
    pub consolidator: ConsolidatorMode,
    pub sim: SimConfig,
    pub temperature: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            n_verify: 15,
            max_attempts: 3,
            max_evidence: 2,
            consolidator: ConsolidatorMode::Deterministic,
            sim: SimConfig::default(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("bad evolve config: {0}")]
    BadConfig(&'static str),
}

/// Why a generated candidate was unusable. Counts as a failed attempt.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CandidateError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("generated document: {0}")]
    Parse(#[from] SkillError),
    #[error("candidate renamed {expected:?} to {got:?}")]
    NameChanged { expected: String, got: String },
    #[error("candidate version {to} does not increase {from}")]
    VersionNotIncreased { from: SkillVersion, to: SkillVersion },
    #[error("candidate changed `{0}`")]
    FrontmatterChanged(&'static str),
    #[error("new skill must start at version 1.0, got {0}")]
    BadInitialVersion(SkillVersion),
    #[error("new skill domain must be {DEFAULT_DOMAIN:?}, got {0:?}")]
    WrongDomain(String),
    #[error("candidate lacks sections: {0:?}")]
    MissingSections(Vec<&'static str>),
    #[error("a skill named {0:?} already exists")]
    NameCollision(String),
}

// ---------------------------------------------------------------------------
// analysis

fn first_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Render the analysis prompt for one profile's conversations.
pub fn analysis_prompt(
    profile: &SeekerProfile,
    transcripts: &[Transcript],
    bank: &SkillBank,
) -> Result<String, RenderError> {
    let used: BTreeSet<String> = transcripts.iter().flat_map(|t| t.skills_used()).collect();
    let used_list = if used.is_empty() {
        "(none)".to_string()
    } else {
        used.iter().cloned().collect::<Vec<_>>().join(", ")
    };
    let mut used_content = String::new();
    for name in &used {
        if let Some(e) = bank.get(name) {
            used_content.push_str(&e.text);
            if !used_content.ends_with('\n') {
                used_content.push('\n');
            }
        }
    }
    let mut conversations = String::new();
    for (i, t) in transcripts.iter().enumerate() {
        conversations.push_str(&t.render_for_analysis(&alloc::format!("Conversation {}", i + 1)));
    }
    ANALYSIS.render(&[
        ("task", &profile.task),
        ("scene_summary", first_chars(&profile.scene_summary, 500)),
        ("skills_catalog", &bank.catalog()),
        ("skills_used_list", &used_list),
        ("used_skills_content", &used_content),
        ("conversations_text", &conversations),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no transcripts for profile")]
    NoTranscripts,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Reply(#[from] ReplyError),
}

pub fn analyze_profile(
    profile: &SeekerProfile,
    transcripts: &[Transcript],
    bank: &SkillBank,
    backend: &dyn ChatBackend,
    temperature: f64,
) -> Result<AnalysisReport, AnalysisError> {
    if transcripts.is_empty() {
        return Err(AnalysisError::NoTranscripts);
    }
    let prompt = analysis_prompt(profile, transcripts, bank)?;
    let req = ChatRequest::single(
        alloc::format!("analyze/{}", profile.profile_id),
        "You analyse emotional support conversations and output JSON only.",
        prompt,
    )
    .with_temperature(temperature);
    let raw = backend.complete(&req)?;
    Ok(parse_analysis_report(&raw, Some(&bank.names()))?)
}

// ---------------------------------------------------------------------------
// consolidation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdatePlan {
    pub target_skill: String,
    pub merged_reasons: Vec<String>,
    pub key_improvements: Vec<String>,
    pub evidence_profile_ids: Vec<String>,
    pub evidence_avg_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditionPlan {
    pub new_skill_name: String,
    pub description: String,
    pub rationale: String,
    pub evidence_profile_ids: Vec<String>,
    pub evidence_avg_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionPlan {
    pub updates: Vec<UpdatePlan>,
    pub additions: Vec<AdditionPlan>,
}

impl EvolutionPlan {
    pub fn is_empty(&self) -> bool {
        self.updates.is_empty() && self.additions.is_empty()
    }
}

/// Lowercase kebab-case: runs of non-alphanumerics become one hyphen.
pub fn normalize_skill_name(raw: &str) -> String {
    let mut out = String::new();
    for c in raw.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('-') {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

fn push_unique(v: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() && !v.iter().any(|x| x == s) {
        v.push(s.to_string());
    }
}

fn evidence_avg(ids: &[String], reports: &[&AnalysisReport], scores: &BTreeMap<String, f64>) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let sum: f64 = ids
        .iter()
        .map(|id| {
            scores.get(id).copied().unwrap_or_else(|| {
                reports
                    .iter()
                    .find(|r| &r.profile_id == id)
                    .map_or(0.0, |r| r.avg_score)
            })
        })
        .sum();
    sum / ids.len() as f64
}

/// Backend-free consolidation: group updates by exact target, dedupe new
/// proposals by normalized name. Reports are taken in profile-id order.
/// `scores` maps profile id to its observed average final score.
pub fn consolidate_deterministic(reports: &[AnalysisReport], scores: &BTreeMap<String, f64>) -> EvolutionPlan {
    let mut sorted: Vec<&AnalysisReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.profile_id.cmp(&b.profile_id));

    let mut updates: BTreeMap<String, (Vec<String>, Vec<String>, Vec<String>)> = BTreeMap::new();
    let mut additions: BTreeMap<String, (String, Vec<String>, Vec<String>)> = BTreeMap::new();
    for r in &sorted {
        match r.recommendation {
            Recommendation::NoAction => {}
            Recommendation::UpdateExisting => {
                let Some(target) = &r.target_skill else { continue };
                let entry = updates.entry(target.clone()).or_default();
                push_unique(&mut entry.0, r.update_reason.as_deref().unwrap_or(&r.analysis));
                for gap in &r.skill_gaps {
                    push_unique(&mut entry.1, gap);
                }
                push_unique(&mut entry.2, &r.profile_id);
            }
            Recommendation::AddNew => {
                let Some(name) = &r.new_skill_name else { continue };
                let key = normalize_skill_name(name);
                if key.is_empty() {
                    continue;
                }
                let entry = additions.entry(key).or_insert_with(|| {
                    (
                        r.new_skill_description.clone().unwrap_or_default(),
                        Vec::new(),
                        Vec::new(),
                    )
                });
                push_unique(&mut entry.1, &r.reasoning);
                for gap in &r.skill_gaps {
                    push_unique(&mut entry.1, gap);
                }
                push_unique(&mut entry.2, &r.profile_id);
            }
        }
    }
    EvolutionPlan {
        updates: updates
            .into_iter()
            .map(|(target_skill, (merged_reasons, key_improvements, ids))| UpdatePlan {
                evidence_avg_score: evidence_avg(&ids, &sorted, scores),
                target_skill,
                merged_reasons,
                key_improvements,
                evidence_profile_ids: ids,
            })
            .collect(),
        additions: additions
            .into_iter()
            .map(|(new_skill_name, (description, rationale, ids))| AdditionPlan {
                evidence_avg_score: evidence_avg(&ids, &sorted, scores),
                new_skill_name,
                description,
                rationale: rationale.join("\n"),
                evidence_profile_ids: ids,
            })
            .collect(),
    }
}

pub const CONSOLIDATE_SYSTEM: &str = "You consolidate skill-bank improvement recommendations.
Merge update reasons that target the same skill and cluster new-skill proposals that overlap semantically.
Reply with a JSON object only:
{\"updates\": [{\"target_skill\": \"<existing skill>\", \"merged_reason\": \"<merged reason>\", \"key_improvements\": [\"<improvement>\"]}],
 \"additions\": [{\"new_skill_name\": \"<canonical kebab-case name>\", \"description\": \"<one sentence>\", \"rationale\": \"<why>\", \"merged_from\": [\"<proposed names merged into this one>\"]}]}";

fn consolidate_via_backend(
    reports: &[AnalysisReport],
    scores: &BTreeMap<String, f64>,
    bank: &SkillBank,
    backend: &dyn ChatBackend,
    temperature: f64,
) -> Result<EvolutionPlan, String> {
    let actionable: Vec<&AnalysisReport> = reports
        .iter()
        .filter(|r| r.recommendation != Recommendation::NoAction)
        .collect();
    let payload = serde_json::to_string(&actionable).map_err(|e| e.to_string())?;
    let req = ChatRequest::single("consolidate", CONSOLIDATE_SYSTEM, payload).with_temperature(temperature);
    let raw = backend.complete(&req).map_err(|e| e.to_string())?;
    let map = parse_object(&raw).map_err(|e| e.to_string())?;
    let get_arr = |k: &str| match map.get(k) {
        Some(serde_json::Value::Array(a)) => Ok(a.clone()),
        None => Ok(Vec::new()),
        _ => Err(alloc::format!("`{k}` is not a list")),
    };
    let s = |v: &serde_json::Value, k: &str| v.get(k).and_then(|x| x.as_str()).unwrap_or("").to_string();
    let mut plan = EvolutionPlan::default();
    for u in get_arr("updates")? {
        let target = s(&u, "target_skill");
        if !bank.contains(&target) {
            return Err(alloc::format!("unknown update target {target:?}"));
        }
        let evidence: Vec<&AnalysisReport> = actionable
            .iter()
            .copied()
            .filter(|r| {
                r.recommendation == Recommendation::UpdateExisting && r.target_skill.as_deref() == Some(target.as_str())
            })
            .collect();
        if evidence.is_empty() {
            return Err(alloc::format!("update target {target:?} has no supporting report"));
        }
        let mut ids: Vec<String> = evidence.iter().map(|r| r.profile_id.clone()).collect();
        ids.sort();
        ids.dedup();
        let key_improvements = u
            .get("key_improvements")
            .and_then(|v| v.as_array())
            .map(|a| a.iter().filter_map(|x| x.as_str().map(str::to_string)).collect())
            .unwrap_or_default();
        plan.updates.push(UpdatePlan {
            evidence_avg_score: evidence_avg(&ids, &evidence, scores),
            target_skill: target,
            merged_reasons: alloc::vec![s(&u, "merged_reason")],
            key_improvements,
            evidence_profile_ids: ids,
        });
    }
    for a in get_arr("additions")? {
        let name = normalize_skill_name(&s(&a, "new_skill_name"));
        if name.is_empty() || bank.contains(&name) {
            return Err(alloc::format!("bad addition name {name:?}"));
        }
        let mut members: BTreeSet<String> = a
            .get("merged_from")
            .and_then(|v| v.as_array())
            .map(|arr| {
                arr.iter()
                    .filter_map(|x| x.as_str().map(normalize_skill_name))
                    .collect()
            })
            .unwrap_or_default();
        members.insert(name.clone());
        let evidence: Vec<&AnalysisReport> = actionable
            .iter()
            .copied()
            .filter(|r| {
                r.recommendation == Recommendation::AddNew
                    && r.new_skill_name
                        .as_deref()
                        .is_some_and(|n| members.contains(&normalize_skill_name(n)))
            })
            .collect();
        if evidence.is_empty() {
            return Err(alloc::format!("addition {name:?} has no supporting report"));
        }
        let mut ids: Vec<String> = evidence.iter().map(|r| r.profile_id.clone()).collect();
        ids.sort();
        ids.dedup();
        plan.additions.push(AdditionPlan {
            evidence_avg_score: evidence_avg(&ids, &evidence, scores),
            new_skill_name: name,
            description: s(&a, "description"),
            rationale: s(&a, "rationale"),
            evidence_profile_ids: ids,
        });
    }
    plan.updates.sort_by(|a, b| a.target_skill.cmp(&b.target_skill));
    plan.additions.sort_by(|a, b| a.new_skill_name.cmp(&b.new_skill_name));
    let names: BTreeSet<&str> = plan.additions.iter().map(|a| a.new_skill_name.as_str()).collect();
    let targets: BTreeSet<&str> = plan.updates.iter().map(|u| u.target_skill.as_str()).collect();
    if names.len() != plan.additions.len() || targets.len() != plan.updates.len() {
        return Err("duplicate plan entries".into());
    }
    Ok(plan)
}

/// Consolidate with the backend, falling back to the deterministic
/// consolidator (with a warning) on any backend or validation error.
pub fn consolidate(
    reports: &[AnalysisReport],
    scores: &BTreeMap<String, f64>,
    bank: &SkillBank,
    mode: ConsolidatorMode,
    backend: &dyn ChatBackend,
    temperature: f64,
) -> (EvolutionPlan, Option<String>) {
    match mode {
        ConsolidatorMode::Deterministic => (consolidate_deterministic(reports, scores), None),
        ConsolidatorMode::Backend => match consolidate_via_backend(reports, scores, bank, backend, temperature) {
            Ok(plan) => (plan, None),
            Err(e) => (
                consolidate_deterministic(reports, scores),
                Some(alloc::format!(
                    "backend consolidation failed ({e}); used deterministic consolidation"
                )),
            ),
        },
    }
}

// ---------------------------------------------------------------------------
// generation

/// The `SKILL.md` text inside a model reply: leading prose and code fences
/// dropped, the document's final line break kept.
pub fn extract_skill_document(raw: &str) -> &str {
    let text = raw.trim_start();
    let start = if text.starts_with("---") {
        0
    } else {
        match text.find("\n---") {
            Some(i) => i + 1,
            None => return text.trim_end(),
        }
    };
    let fenced = text[..start].lines().any(|l| l.trim_start().starts_with("```"));
    let doc = &text[start..];
    if fenced {
        if let Some(i) = doc.rfind("\n```") {
            return &doc[..i + 1];
        }
    }
    let body = doc.trim_end();
    if doc[body.len()..].starts_with('\n') {
        &doc[..body.len() + 1]
    } else {
        body
    }
}

fn conversation_examples(evidence: &[&Transcript]) -> String {
    if evidence.is_empty() {
        return "(none)".to_string();
    }
    let mut out = String::new();
    for (i, t) in evidence.iter().enumerate() {
        out.push_str(&t.render_for_analysis(&alloc::format!("Example {} (profile {})", i + 1, t.profile_id)));
    }
    out
}

fn bullet_list(items: &[String]) -> String {
    items
        .iter()
        .map(|s| alloc::format!("- {s}"))
        .collect::<Vec<_>>()
        .join("\n")
}

const GENERATOR_SYSTEM: &str = "You write SKILL.md documents. Follow the user's instructions exactly.";

pub fn generate_update(
    original: &BankEntry,
    plan: &UpdatePlan,
    evidence: &[&Transcript],
    backend: &dyn ChatBackend,
    attempt: u32,
    temperature: f64,
) -> Result<Skill, CandidateError> {
    let prompt = SKILL_UPDATE.render(&[
        ("current_content", &original.text),
        ("update_reason", &plan.merged_reasons.join("\n")),
        ("key_improvements", &bullet_list(&plan.key_improvements)),
        ("evidence_count", &plan.evidence_profile_ids.len().to_string()),
        ("avg_score", &alloc::format!("{}", plan.evidence_avg_score)),
        ("conversation_examples", &conversation_examples(evidence)),
    ])?;
    let req = ChatRequest::single(
        alloc::format!("generate/{}/{}", plan.target_skill, attempt),
        GENERATOR_SYSTEM,
        prompt,
    )
    .with_temperature(temperature);
    let raw = backend.complete(&req)?;
    let cand = parse_skill(extract_skill_document(&raw))?;
    check_update(&original.skill, &cand)?;
    Ok(cand)
}

/// Same name, domain and category; strictly higher version; no loss of
/// schema sections the original had.
pub fn check_update(original: &Skill, cand: &Skill) -> Result<(), CandidateError> {
    if cand.name != original.name {
        return Err(CandidateError::NameChanged {
            expected: original.name.clone(),
            got: cand.name.clone(),
        });
    }
    if cand.version() <= original.version() {
        return Err(CandidateError::VersionNotIncreased {
            from: original.version(),
            to: cand.version(),
        });
    }
    if cand.metadata.domain != original.metadata.domain {
        return Err(CandidateError::FrontmatterChanged("metadata.domain"));
    }
    if cand.metadata.category != original.metadata.category {
        return Err(CandidateError::FrontmatterChanged("metadata.category"));
    }
    let schema = SectionSchema::bank();
    let before: BTreeSet<&str> = schema.missing(original).into_iter().collect();
    let lost: Vec<&'static str> = schema
        .missing(cand)
        .into_iter()
        .filter(|r| !before.contains(r))
        .collect();
    if !lost.is_empty() {
        return Err(CandidateError::MissingSections(lost));
    }
    Ok(())
}

pub fn generate_new(
    plan: &AdditionPlan,
    reference: &BankEntry,
    bank: &SkillBank,
    evidence: &[&Transcript],
    backend: &dyn ChatBackend,
    attempt: u32,
    temperature: f64,
) -> Result<Skill, CandidateError> {
    if bank.contains(&plan.new_skill_name) {
        return Err(CandidateError::NameCollision(plan.new_skill_name.clone()));
    }
    let prompt = SKILL_CREATE.render(&[
        ("reference_skill", &reference.text),
        ("skill_name", &plan.new_skill_name),
        ("description", &plan.description),
        ("rationale", &plan.rationale),
        ("evidence_count", &plan.evidence_profile_ids.len().to_string()),
        ("avg_score", &alloc::format!("{}", plan.evidence_avg_score)),
        ("conversation_examples", &conversation_examples(evidence)),
        ("skills_list", &bank.catalog()),
    ])?;
    let req = ChatRequest::single(
        alloc::format!("generate/{}/{}", plan.new_skill_name, attempt),
        GENERATOR_SYSTEM,
        prompt,
    )
    .with_temperature(temperature);
    let raw = backend.complete(&req)?;
    let cand = parse_skill(extract_skill_document(&raw))?;
    check_new(&plan.new_skill_name, bank, &cand)?;
    Ok(cand)
}

/// Requested name, version 1.0, the standard domain, creation sections.
pub fn check_new(name: &str, bank: &SkillBank, cand: &Skill) -> Result<(), CandidateError> {
    if cand.name != name {
        return Err(CandidateError::NameChanged {
            expected: name.to_string(),
            got: cand.name.clone(),
        });
    }
    if bank.contains(&cand.name) {
        return Err(CandidateError::NameCollision(cand.name.clone()));
    }
    if cand.version() != SkillVersion::INITIAL {
        return Err(CandidateError::BadInitialVersion(cand.version()));
    }
    if cand.metadata.domain != DEFAULT_DOMAIN {
        return Err(CandidateError::WrongDomain(cand.metadata.domain.clone()));
    }
    let missing = SectionSchema::creation().missing(cand);
    if !missing.is_empty() {
        return Err(CandidateError::MissingSections(missing));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verification

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileScore {
    pub profile_id: String,
    pub final_score: i64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub skill_name: String,
    pub attempt: u32,
    pub profile_scores: Vec<ProfileScore>,
    pub avg_score: f64,
    pub all_success: bool,
    pub baseline_avg: f64,
    pub decision: Decision,
}

fn scores_of(transcripts: &[Transcript]) -> Vec<ProfileScore> {
    transcripts
        .iter()
        .map(|t| ProfileScore {
            profile_id: t.profile_id.clone(),
            final_score: t.final_score,
            outcome: t.outcome,
        })
        .collect()
}

fn mean_final(scores: &[ProfileScore]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().map(|s| s.final_score as f64).sum::<f64>() / scores.len() as f64
}

/// The `n` lowest-scoring profiles, ties by id. With `target`, profiles
/// whose conversation used that skill come first.
pub fn select_verification_profiles(stage: &[Transcript], n: usize, target: Option<&str>) -> Vec<String> {
    let mut ranked: Vec<&Transcript> = stage.iter().collect();
    ranked.sort_by(|a, b| a.final_score.cmp(&b.final_score).then(a.profile_id.cmp(&b.profile_id)));
    let mut out: Vec<String> = Vec::new();
    if let Some(t) = target {
        for tr in &ranked {
            if out.len() < n && tr.turns.iter().any(|turn| turn.skills_active.iter().any(|s| s == t)) {
                out.push(tr.profile_id.clone());
            }
        }
    }
    for tr in &ranked {
        if out.len() >= n {
            break;
        }
        if !out.contains(&tr.profile_id) {
            out.push(tr.profile_id.clone());
        }
    }
    out
}

/// Up to `max` lowest-scoring transcripts among `ids`, preferring ones
/// that used `skill`.
fn pick_evidence<'t>(stage: &'t [Transcript], ids: &[String], skill: Option<&str>, max: usize) -> Vec<&'t Transcript> {
    let mut pool: Vec<&Transcript> = stage.iter().filter(|t| ids.contains(&t.profile_id)).collect();
    pool.sort_by_key(|t| {
        let used = skill.is_some_and(|s| t.turns.iter().any(|turn| turn.skills_active.iter().any(|x| x == s)));
        (!used, t.final_score, t.profile_id.clone())
    });
    pool.truncate(max);
    pool
}

pub fn verify_skill(
    candidate: &Skill,
    base: &SkillBank,
    profiles: &[SeekerProfile],
    backends: Backends<'_>,
    config: &EvolveConfig,
    baseline_avg: f64,
    attempt: u32,
    executor: &dyn BatchExecutor,
) -> Result<VerificationResult, EvolutionError> {
    let mut trial = base.snapshot_base();
    let change = if base.contains(&candidate.name) {
        Change::Update(candidate.clone())
    } else {
        Change::Add(candidate.clone())
    };
    trial.apply(change, 0, "verification")?;
    let run = alloc::format!("verify/{}/{}", candidate.name, attempt);
    let res = batch_simulate(profiles, &trial, backends, &config.sim, &run, executor)?;
    let profile_scores = scores_of(&res.transcripts);
    let avg_score = mean_final(&profile_scores);
    let all_success = !profile_scores.is_empty() && profile_scores.iter().all(|p| p.outcome == Outcome::Success);
    Ok(VerificationResult {
        skill_name: candidate.name.clone(),
        attempt,
        decision: decide(all_success, avg_score, baseline_avg, attempt, config.max_attempts),
        profile_scores,
        avg_score,
        all_success,
        baseline_avg,
    })
}

// ---------------------------------------------------------------------------
// audit

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditPhase {
    Simulate,
    Analyze,
    Consolidate,
    Baseline,
    Attempt,
    Commit,
    Rollback,
    Remove,
    NoAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub phase: AuditPhase,
    pub skill: Option<String>,
    pub attempt: Option<u32>,
    pub decision: Option<Decision>,
    pub avg_score: Option<f64>,
    pub baseline_avg: Option<f64>,
    pub profile_scores: Vec<ProfileScore>,
    /// SHA-256 of the line diff between the base and candidate documents.
    pub diff_digest: Option<String>,
    pub note: String,
    /// Bank mutation for commit records.
    pub mutation: Option<Mutation>,
}

impl AuditRecord {
    fn new(phase: AuditPhase) -> Self {
        AuditRecord {
            seq: 0,
            phase,
            skill: None,
            attempt: None,
            decision: None,
            avg_score: None,
            baseline_avg: None,
            profile_scores: Vec::new(),
            diff_digest: None,
            note: String::new(),
            mutation: None,
        }
    }
}

#[derive(Debug, Default)]
struct Audit {
    records: Vec<AuditRecord>,
}

impl Audit {
    fn push(&mut self, mut r: AuditRecord) {
        r.seq = self.records.len() as u64 + 1;
        self.records.push(r);
    }
}

/// Line diff (`-`, `+`, ` ` prefixes) from an LCS table.
pub fn line_diff(old: &str, new: &str) -> String {
    let a: Vec<&str> = old.lines().collect();
    let b: Vec<&str> = new.lines().collect();
    let (n, m) = (a.len(), b.len());
    let mut lcs = alloc::vec![alloc::vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut out = String::new();
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] {
            out.push_str(&alloc::format!(" {}\n", a[i]));
            i += 1;
            j += 1;
        } else if i < n && (j == m || lcs[i + 1][j] >= lcs[i][j + 1]) {
            out.push_str(&alloc::format!("-{}\n", a[i]));
            i += 1;
        } else {
            out.push_str(&alloc::format!("+{}\n", b[j]));
            j += 1;
        }
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        out.push_str(&alloc::format!("{b:02x}"));
    }
    out
}

/// Rebuild the evolved bank from the input bank and the audit's commits.
pub fn replay_audit(initial: &SkillBank, audit: &[AuditRecord]) -> Result<SkillBank, BankError> {
    let mut commits: Vec<&AuditRecord> = audit.iter().filter(|r| r.phase == AuditPhase::Commit).collect();
    commits.sort_by_key(|r| r.seq);
    let log: Vec<Mutation> = commits.iter().filter_map(|r| r.mutation.clone()).collect();
    replay(initial, &log)
}

// ---------------------------------------------------------------------------
// evolve

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryOutcome {
    pub skill: String,
    pub is_update: bool,
    pub accepted: bool,
    pub attempts: u32,
    /// Attempt with the highest average (earliest on ties), if any ran.
    pub best_attempt: Option<u32>,
    pub best_avg: Option<f64>,
    pub baseline_avg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionOutcome {
    pub bank: SkillBank,
    pub audit: Vec<AuditRecord>,
    pub plan: EvolutionPlan,
    pub reports: Vec<AnalysisReport>,
    pub stage: BatchResult,
    pub entries: Vec<EntryOutcome>,
    pub warnings: Vec<String>,
}

impl EvolutionOutcome {
    pub fn accepted_updates(&self) -> usize {
        self.entries.iter().filter(|e| e.is_update && e.accepted).count()
    }

    pub fn accepted_additions(&self) -> usize {
        self.entries.iter().filter(|e| !e.is_update && e.accepted).count()
    }
}

enum Target<'p> {
    Update(&'p UpdatePlan),
    Add(&'p AdditionPlan),
}

/// Run the full evolution pipeline on `bank`.
pub fn evolve(
    bank: &SkillBank,
    profiles: &[SeekerProfile],
    backends: Backends<'_>,
    config: &EvolveConfig,
    executor: &dyn BatchExecutor,
) -> Result<EvolutionOutcome, EvolutionError> {
    if config.max_attempts == 0 {
        return Err(EvolutionError::BadConfig("max_attempts must be at least 1"));
    }
    if config.n_verify == 0 {
        return Err(EvolutionError::BadConfig("n_verify must be at least 1"));
    }
    let base = bank.snapshot_base();
    let mut audit = Audit::default();
    let mut warnings = Vec::new();

    let stage = batch_simulate(profiles, &base, backends, &config.sim, "stage1", executor)?;
    let mut rec = AuditRecord::new(AuditPhase::Simulate);
    rec.avg_score = Some(stage.report.avg_score);
    rec.profile_scores = scores_of(&stage.transcripts);
    audit.push(rec);

    let scores: BTreeMap<String, f64> = stage
        .transcripts
        .iter()
        .map(|t| (t.profile_id.clone(), t.final_score as f64))
        .collect();

    let mut reports = Vec::new();
    for (profile, transcript) in profiles.iter().zip(&stage.transcripts) {
        let mut rec = AuditRecord::new(AuditPhase::Analyze);
        rec.note = profile.profile_id.clone();
        match analyze_profile(
            profile,
            core::slice::from_ref(transcript),
            &base,
            backends.analyst,
            config.temperature,
        ) {
            Ok(r) => {
                rec.decision = None;
                rec.note = alloc::format!("{}: {}", profile.profile_id, r.recommendation.as_str());
                reports.push(r);
            }
            Err(e) => {
                let w = alloc::format!("analysis of {} failed: {e}", profile.profile_id);
                rec.note = w.clone();
                warnings.push(w);
            }
        }
        audit.push(rec);
    }

    let (plan, warning) = consolidate(
        &reports,
        &scores,
        &base,
        config.consolidator,
        backends.analyst,
        config.temperature,
    );
    let mut rec = AuditRecord::new(AuditPhase::Consolidate);
    rec.note = alloc::format!("{} updates, {} additions", plan.updates.len(), plan.additions.len());
    if let Some(w) = warning {
        rec.note.push_str("; ");
        rec.note.push_str(&w);
        warnings.push(w);
    }
    audit.push(rec);
    if plan.is_empty() {
        let mut rec = AuditRecord::new(AuditPhase::NoAction);
        rec.note = "plan is empty".into();
        audit.push(rec);
    }

    let by_id: BTreeMap<&str, &SeekerProfile> = profiles.iter().map(|p| (p.profile_id.as_str(), p)).collect();
    let reference = base
        .entries()
        .max_by(|a, b| {
            a.skill
                .version()
                .cmp(&b.skill.version())
                .then(b.skill.name.cmp(&a.skill.name))
        })
        .cloned();

    let targets: Vec<Target<'_>> = plan
        .updates
        .iter()
        .map(Target::Update)
        .chain(plan.additions.iter().map(Target::Add))
        .collect();
    let mut accepted: Vec<(Change, String, Option<String>)> = Vec::new();
    let mut entries = Vec::new();

    for target in targets {
        let (name, is_update, evidence_ids) = match target {
            Target::Update(u) => (u.target_skill.clone(), true, &u.evidence_profile_ids),
            Target::Add(a) => (a.new_skill_name.clone(), false, &a.evidence_profile_ids),
        };
        let verify_ids =
            select_verification_profiles(&stage.transcripts, config.n_verify, is_update.then_some(name.as_str()));
        let verify_profiles: Vec<SeekerProfile> = verify_ids
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).map(|p| (*p).clone()))
            .collect();
        let baseline = batch_simulate(
            &verify_profiles,
            &base,
            backends,
            &config.sim,
            &alloc::format!("baseline/{name}"),
            executor,
        )?;
        let baseline_scores = scores_of(&baseline.transcripts);
        let baseline_avg = mean_final(&baseline_scores);
        let mut rec = AuditRecord::new(AuditPhase::Baseline);
        rec.skill = Some(name.clone());
        rec.avg_score = Some(baseline_avg);
        rec.baseline_avg = Some(baseline_avg);
        rec.profile_scores = baseline_scores;
        audit.push(rec);

        let evidence = pick_evidence(
            &stage.transcripts,
            evidence_ids,
            is_update.then_some(name.as_str()),
            config.max_evidence,
        );
        let old_text = base.get(&name).map(|e| e.text.clone()).unwrap_or_default();

        let mut best: Option<(u32, f64)> = None;
        let mut winner: Option<Skill> = None;
        let mut attempts = 0;
        for attempt in 1..=config.max_attempts {
            attempts = attempt;
            let cand = match target {
                Target::Update(u) => {
                    let original = base
                        .get(&u.target_skill)
                        .ok_or_else(|| BankError::NotFound(u.target_skill.clone()))?;
                    generate_update(original, u, &evidence, backends.analyst, attempt, config.temperature)
                }
                Target::Add(a) => match &reference {
                    Some(r) => generate_new(a, r, &base, &evidence, backends.analyst, attempt, config.temperature),
                    None => Err(CandidateError::MissingSections(alloc::vec!["reference skill"])),
                },
            };
            let mut rec = AuditRecord::new(AuditPhase::Attempt);
            rec.skill = Some(name.clone());
            rec.attempt = Some(attempt);
            rec.baseline_avg = Some(baseline_avg);
            let cand = match cand {
                Ok(c) => c,
                Err(CandidateError::NameCollision(n)) => {
                    rec.decision = Some(Decision::Reject);
                    rec.note = alloc::format!("name collision: {n}");
                    audit.push(rec);
                    break;
                }
                Err(e) => {
                    let d = if attempt < config.max_attempts {
                        Decision::Retry
                    } else {
                        Decision::Reject
                    };
                    rec.decision = Some(d);
                    rec.note = alloc::format!("invalid candidate: {e}");
                    audit.push(rec);
                    continue;
                }
            };
            let text = crate::skill::serialize_skill(&cand);
            rec.diff_digest = Some(sha256_hex(line_diff(&old_text, &text).as_bytes()));
            let result = verify_skill(
                &cand,
                &base,
                &verify_profiles,
                backends,
                config,
                baseline_avg,
                attempt,
                executor,
            )?;
            rec.decision = Some(result.decision);
            rec.avg_score = Some(result.avg_score);
            rec.profile_scores = result.profile_scores.clone();
            rec.note = alloc::format!("all_success={}", result.all_success);
            audit.push(rec);
            if best.is_none_or(|(_, b)| result.avg_score > b) {
                best = Some((attempt, result.avg_score));
            }
            if result.decision == Decision::Accept {
                winner = Some(cand);
                break;
            }
        }

        let accepted_now = winner.is_some();
        match winner {
            Some(skill) => {
                let reason = alloc::format!("accepted after {attempts} attempt(s)");
                let text = crate::skill::serialize_skill(&skill);
                let digest = sha256_hex(line_diff(&old_text, &text).as_bytes());
                let change = if is_update {
                    Change::Update(skill)
                } else {
                    Change::Add(skill)
                };
                accepted.push((change, reason, Some(digest)));
            }
            None => {
                let mut rec = AuditRecord::new(if is_update {
                    AuditPhase::Rollback
                } else {
                    AuditPhase::Remove
                });
                rec.skill = Some(name.clone());
                rec.decision = Some(Decision::Reject);
                rec.baseline_avg = Some(baseline_avg);
                rec.avg_score = best.map(|b| b.1);
                rec.note = match best {
                    Some((a, avg)) => {
                        alloc::format!("best attempt {a} avg {avg:.2} did not beat baseline {baseline_avg:.2}")
                    }
                    None => "no valid candidate".into(),
                };
                audit.push(rec);
            }
        }
        entries.push(EntryOutcome {
            skill: name,
            is_update,
            accepted: accepted_now,
            attempts,
            best_attempt: best.map(|b| b.0),
            best_avg: best.map(|b| b.1),
            baseline_avg,
        });
    }

    let mut evolved = base.clone();
    for (change, reason, digest) in accepted {
        let ts = audit.records.len() as u64 + 1;
        let name = change.name().to_string();
        let mutation = evolved.apply(change, ts, &reason)?.clone();
        let mut rec = AuditRecord::new(AuditPhase::Commit);
        rec.skill = Some(name);
        rec.decision = Some(Decision::Accept);
        rec.diff_digest = digest;
        rec.note = reason;
        rec.mutation = Some(mutation);
        audit.push(rec);
    }

    Ok(EvolutionOutcome {
        bank: evolved,
        audit: audit.records,
        plan,
        reports,
        stage,
        entries,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceptance_rule_truth_table() {
        for all_success in [false, true] {
            for (avg, base) in [(40.0, 50.0), (50.0, 50.0), (60.0, 50.0)] {
                for attempt in 1..=3 {
                    let d = decide(all_success, avg, base, attempt, 3);
                    let expect = if all_success || avg > base {
                        Decision::Accept
                    } else if attempt < 3 {
                        Decision::Retry
                    } else {
                        Decision::Reject
                    };
                    assert_eq!(d, expect);
                }
            }
        }
        assert_eq!(decide(false, 72.1, 66.4, 2, 3), Decision::Accept);
    }

    fn report(id: &str, rec: Recommendation, target: Option<&str>, name: Option<&str>) -> AnalysisReport {
        AnalysisReport {
            profile_id: id.into(),
            avg_score: 40.0,
            analysis: "a".into(),
            skills_actually_used: Vec::new(),
            skill_effectiveness: String::new(),
            skill_gaps: alloc::vec![alloc::format!("gap from {id}")],
            recommendation: rec,
            target_skill: target.map(Into::into),
            update_reason: target.map(|t| alloc::format!("{t} too slow ({id})")),
            new_skill_name: name.map(Into::into),
            new_skill_description: name.map(|_| "desc".into()),
            reasoning: alloc::format!("because {id}"),
        }
    }

    #[test]
    fn deterministic_consolidation() {
        use Recommendation::*;
        let reports = alloc::vec![
            report("p3", UpdateExisting, Some("esc-a"), None),
            report("p1", UpdateExisting, Some("esc-a"), None),
            report("p2", UpdateExisting, Some("esc-a"), None),
            report("p4", AddNew, None, Some("esc-new-skill")),
            report("p5", AddNew, None, Some("ESC New_Skill")),
            report("p6", NoAction, None, None),
        ];
        let scores: BTreeMap<String, f64> = [("p1", 10.0), ("p2", 20.0), ("p3", 30.0), ("p4", 50.0), ("p5", 70.0)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let plan = consolidate_deterministic(&reports, &scores);
        assert_eq!(plan.updates.len(), 1);
        assert_eq!(plan.updates[0].merged_reasons.len(), 3);
        assert_eq!(plan.updates[0].evidence_profile_ids, ["p1", "p2", "p3"]);
        assert_eq!(plan.updates[0].evidence_avg_score, 20.0);
        assert_eq!(plan.additions.len(), 1);
        assert_eq!(plan.additions[0].new_skill_name, "esc-new-skill");
        assert_eq!(plan.additions[0].evidence_avg_score, 60.0);
        let empty = consolidate_deterministic(&[report("p", NoAction, None, None)], &BTreeMap::new());
        assert!(empty.is_empty());
    }

    #[test]
    fn document_extraction() {
        assert_eq!(
            extract_skill_document("```markdown\n---\nname: a\n---\n```"),
            "---\nname: a\n---\n"
        );
        assert_eq!(
            extract_skill_document("Sure:\n```md\n---\nname: a\n```x\n```\n"),
            "---\nname: a\n```x\n"
        );
        assert_eq!(extract_skill_document("---\nname: a\n\n\n"), "---\nname: a\n");
        assert_eq!(extract_skill_document("Here you go:\n---\nname: a"), "---\nname: a");
        assert_eq!(extract_skill_document("---\nx"), "---\nx");
    }

    #[test]
    fn diff_and_digest() {
        assert_eq!(line_diff("a\nb\nc", "a\nx\nc"), " a\n-b\n+x\n c\n");
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn verification_selection() {
        use crate::simulation::{Grade, Turn};
        use crate::taxonomy::Strategy;
        let tr = |id: &str, score: i64, skill: Option<&str>| Transcript {
            profile_id: id.into(),
            run: "stage1".into(),
            initial_score: 50,
            turns: alloc::vec![Turn {
                index: 0,
                seeker_thought: String::new(),
                seeker_utterance: String::new(),
                seeker_states: Vec::new(),
                agent_strategy: Strategy::Question,
                agent_text: String::new(),
                scorer_analysis: String::new(),
                emotion_delta: 0,
                emotion_score_after: score,
                skills_active: skill.into_iter().map(Into::into).collect(),
            }],
            final_score: score,
            outcome: Outcome::Neutral,
            grade: Grade::B,
            aborted: None,
        };
        let stage = alloc::vec![
            tr("b", 20, None),
            tr("a", 20, None),
            tr("c", 90, Some("esc-x")),
            tr("d", 10, None)
        ];
        assert_eq!(select_verification_profiles(&stage, 3, None), ["d", "a", "b"]);
        assert_eq!(select_verification_profiles(&stage, 2, Some("esc-x")), ["c", "d"]);
        assert_eq!(select_verification_profiles(&stage, 10, None).len(), 4);
    }
}
