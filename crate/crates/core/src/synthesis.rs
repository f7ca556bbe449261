//! Cluster-to-skill synthesis and the chain-of-thought self-generation baseline.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, ChatRequest};
use crate::evolution::extract_skill_document;
use crate::prompts::SELFGEN_COT;
use crate::prototype::PrototypeCluster;
use crate::skill::{is_kebab_case, parse_skill, SectionSchema, Skill, SkillError, DEFAULT_DOMAIN};
use crate::taxonomy::ResponseChange;

pub const SYNTHESIS_SYSTEM: &str =
    "You are an expert in emotional support counseling who writes executable skill documents for a support agent.
Write exactly one SKILL.md for the cluster you are given, using only the information in that cluster.
Recommended actions come from effective prototypes; prototypes flagged as risky become pitfalls to avoid.
Output ONLY the SKILL.md content, starting with `---`.";

const SCHEMA_TEMPLATE: &str = "---
name: esc-<kebab-case-name>
description: <one paragraph: what the skill does and when it activates>
metadata:
  domain: emotional-support-counseling
  category: <meta | phase | technique | scenario>
  version: \"1.0\"
---

# <Title>

## Overview
## Activation Conditions
## Recommended Actions
## Pitfalls to Avoid
## Examples";

fn change_summary(p: &crate::prototype::SkillPrototype) -> String {
    let parts: Vec<String> = p
        .change_histogram
        .iter()
        .map(|(c, n): (&ResponseChange, &u64)| format!("{} {}", c.as_str(), n))
        .collect();
    parts.join("; ")
}

/// The user message for one cluster: prototype table, snippets, schema.
pub fn synthesis_prompt(cluster: &PrototypeCluster) -> String {
    let mut out = format!(
        "# Cluster {}: {}\n\n## Prototypes\n\n",
        cluster.cluster_id, cluster.theme
    );
    out.push_str("| Seeker state | Support action | IUs | Effectiveness | Response changes | Risk |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for p in &cluster.prototypes {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            p.state.as_str(),
            p.action.as_str(),
            p.n_total,
            p.effectiveness.render_percent(),
            change_summary(p),
            if p.flagged_risk { "risk" } else { "" },
        ));
    }
    out.push_str("\n## Dialogue snippets\n");
    if cluster.sample_snippets.is_empty() {
        out.push_str("\n(none)\n");
    }
    for s in &cluster.sample_snippets {
        out.push_str(&format!(
            "\n[{} turn {}]\nSeeker: {}\nSupporter: {}\nSeeker: {}\n",
            s.dialog_id, s.turn_id, s.pre_seeker_text, s.supporter_text, s.post_seeker_text
        ));
    }
    out.push_str("\n## Schema\n\n");
    out.push_str(SCHEMA_TEMPLATE);
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Parse(#[from] SkillError),
    #[error("skill name {0:?} is not kebab-case")]
    BadName(String),
    #[error("skill lacks sections: {0:?}")]
    MissingSections(Vec<&'static str>),
    #[error("skill name {0:?} already produced by another cluster")]
    DuplicateName(String),
}

/// Generate and validate one skill from one cluster.
pub fn synthesize_skill(
    cluster: &PrototypeCluster,
    backend: &dyn ChatBackend,
    temperature: f64,
) -> Result<Skill, SynthesisError> {
    let req = ChatRequest::single(
        format!("synthesize/{}", cluster.cluster_id),
        SYNTHESIS_SYSTEM,
        synthesis_prompt(cluster),
    )
    .with_temperature(temperature);
    let raw = backend.complete(&req)?;
    let skill = parse_skill(extract_skill_document(&raw))?;
    if !is_kebab_case(&skill.name) {
        return Err(SynthesisError::BadName(skill.name));
    }
    let missing = SectionSchema::bank().missing(&skill);
    if !missing.is_empty() {
        return Err(SynthesisError::MissingSections(missing));
    }
    Ok(skill)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisFailure {
    pub cluster_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutcome {
    /// (cluster id, skill) in cluster order.
    pub skills: Vec<(String, Skill)>,
    pub failures: Vec<SynthesisFailure>,
}

/// One independent call per cluster. Failures are collected, not fatal.
pub fn synthesize_bank(clusters: &[PrototypeCluster], backend: &dyn ChatBackend, temperature: f64) -> SynthesisOutcome {
    let mut names = BTreeSet::new();
    let mut skills = Vec::new();
    let mut failures = Vec::new();
    for c in clusters {
        let res = synthesize_skill(c, backend, temperature).and_then(|s| {
            if names.insert(s.name.clone()) {
                Ok(s)
            } else {
                Err(SynthesisError::DuplicateName(s.name))
            }
        });
        match res {
            Ok(s) => skills.push((c.cluster_id.clone(), s)),
            Err(e) => failures.push(SynthesisFailure {
                cluster_id: c.cluster_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    SynthesisOutcome { skills, failures }
}

/// Text after the last `</thinking>` tag, or the whole reply.
fn strip_thinking(raw: &str) -> &str {
    match raw.rfind("</thinking>") {
        Some(i) => &raw[i + "</thinking>".len()..],
        None => raw,
    }
}

/// The baseline frontmatter carries only name and description; default
/// the metadata block so the result loads like any bank skill.
fn with_default_metadata(doc: &str) -> String {
    let Some(rest) = doc.strip_prefix("---\n") else {
        return doc.to_string();
    };
    let Some(close) = rest.find("\n---") else {
        return doc.to_string();
    };
    format!(
        "---\n{}\nmetadata:\n  domain: {}\n  category: meta\n  version: \"1.0\"{}",
        &rest[..close],
        DEFAULT_DOMAIN,
        &rest[close..]
    )
}

/// Single-pass chain-of-thought self-generation of one skill.
pub fn cot_self_generate(backend: &dyn ChatBackend, temperature: f64) -> Result<Skill, SynthesisError> {
    let req = ChatRequest::single(
        "selfgen_cot",
        "You are an expert skill author for emotional support agents.",
        SELFGEN_COT.text,
    )
    .with_temperature(temperature);
    let raw = backend.complete(&req)?;
    let doc = extract_skill_document(strip_thinking(&raw)).replace("\r\n", "\n");
    match parse_skill(&doc) {
        Err(SkillError::MissingField("metadata")) => Ok(parse_skill(&with_default_metadata(&doc))?),
        other => Ok(other?),
    }
}
