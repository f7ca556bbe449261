//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use skillbank::io::to_ndjson;
use skillbank::scripted::ScriptEntry;
use skillbank_core::bank::SkillBank;
use skillbank_core::simulation::SeekerProfile;
use skillbank_core::skill::{parse_skill, serialize_skill, SkillVersion};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

/// The 34-skill final bank, name → document.
pub fn golden_bank() -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(golden_dir().join("bank")).unwrap() {
        let path = entry.unwrap().path();
        out.insert(
            path.file_stem().unwrap().to_string_lossy().into_owned(),
            fs::read_to_string(&path).unwrap(),
        );
    }
    out
}

pub const UPDATED: [&str; 9] = [
    "esc-action-planning",
    "esc-ambivalence-guidance",
    "esc-empathic-reflection",
    "esc-insight-deepening",
    "esc-normalization-validation",
    "esc-opening-rapport",
    "esc-relationship-conflict",
    "esc-state-assessment",
    "esc-strategy-switching",
];

pub const ADDED: [&str; 7] = [
    "esc-advice-readiness-detection",
    "esc-authentic-attunement",
    "esc-dialectical-analysis",
    "esc-motive-perspective-analysis",
    "esc-other-perspective-analysis",
    "esc-specific-effort-recognition",
    "esc-unfair-blame-validation",
];

/// Proposed additions that never beat the baseline.
pub const REJECTED: [&str; 5] = [
    "esc-future-self-visualization",
    "esc-humor-lightening",
    "esc-silence-holding",
    "esc-somatic-grounding",
    "esc-values-clarification",
];

const LESSONS: &str = "Lessons from Verification";

/// The pre-evolution form of a golden skill: version 1.0, no lessons section.
pub fn downgrade(doc: &str) -> String {
    let mut skill = parse_skill(doc).unwrap();
    skill.sections.retain(|s| s.heading != LESSONS);
    serialize_skill(&skill.with_version(SkillVersion::new(1, 0)))
}

/// The 27-skill initial bank.
pub fn b0_docs() -> BTreeMap<String, String> {
    golden_bank()
        .into_iter()
        .filter(|(name, _)| !ADDED.contains(&name.as_str()))
        .map(|(name, doc)| {
            let doc = if UPDATED.contains(&name.as_str()) {
                downgrade(&doc)
            } else {
                doc
            };
            (name, doc)
        })
        .collect()
}

pub fn b0_bank() -> SkillBank {
    SkillBank::from_documents(b0_docs().values().map(String::as_str)).unwrap()
}

/// A creation-schema document for a proposed skill.
pub fn proposal_doc(name: &str) -> String {
    format!(
        "---\nname: {name}\ndescription: Proposed skill {name}.\nmetadata:\n  domain: emotional-support-counseling\n  category: technique\n  version: \"1.0\"\n---\n\n# {name}\n\n## Technique Overview\nProposed.\n\n## When to Use\n- Rarely.\n\n## Operational Steps\n1. Try it.\n\n## Contrastive Examples\nWeak vs strong.\n\n## Coordination with Other Skills\nNone.\n"
    )
}

// ---------------------------------------------------------------------------
// evolve scenario

/// How a verification attempt goes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Attempt {
    /// Every verification conversation reaches Success.
    AllSuccess,
    /// Average beats the baseline without all succeeding.
    Improves,
    /// Average equals the baseline.
    Ties,
    /// Average falls below the baseline.
    Worse,
    /// The generated candidate fails validation.
    Invalid,
}

/// Per plan entry, what each of the three attempts does. Accepting stops
/// the loop, so later attempts are never requested.
pub fn attempt_plan(skill: &str) -> [Attempt; 3] {
    use Attempt::*;
    match skill {
        "esc-action-planning" | "esc-opening-rapport" | "esc-advice-readiness-detection" => [AllSuccess; 3],
        "esc-empathic-reflection" | "esc-relationship-conflict" | "esc-strategy-switching" => [Improves; 3],
        "esc-authentic-attunement" | "esc-motive-perspective-analysis" => [AllSuccess; 3],
        "esc-specific-effort-recognition" | "esc-unfair-blame-validation" => [Improves; 3],
        "esc-ambivalence-guidance" | "esc-state-assessment" | "esc-dialectical-analysis" => [Ties, AllSuccess, Ties],
        "esc-insight-deepening" => [Invalid, Improves, Ties],
        "esc-normalization-validation" | "esc-other-perspective-analysis" => [Ties, Worse, Improves],
        "esc-humor-lightening" => [Invalid, Invalid, Invalid],
        "esc-silence-holding" => [Worse, Worse, Worse],
        _ => [Ties, Worse, Ties],
    }
}

pub const STAGE_DELTA: i64 = -45;

fn delta_for(a: Attempt) -> i64 {
    match a {
        Attempt::AllSuccess => 50,
        Attempt::Improves => 10,
        Attempt::Ties | Attempt::Invalid => STAGE_DELTA,
        Attempt::Worse => -46,
    }
}

pub fn evolve_profiles() -> Vec<SeekerProfile> {
    (0..23)
        .map(|i| SeekerProfile {
            profile_id: format!("p{i:02}"),
            task: format!("theme {i}"),
            scene_summary: format!("scene for profile {i}"),
            persona: String::new(),
            initial_score: 50,
        })
        .collect()
}

fn analysis(pid: &str, body: serde_json::Value) -> String {
    let mut v = json!({
        "profile_id": pid,
        "avg_score": 5,
        "analysis": format!("analysis of {pid}"),
        "skills_actually_used": [],
        "skill_effectiveness": "weak",
        "skill_gaps": [format!("gap seen in {pid}")],
        "reasoning": format!("reasoning for {pid}"),
    });
    v.as_object_mut().unwrap().extend(body.as_object().unwrap().clone());
    format!("```json\n{v}\n```")
}

/// Script for the evolve scenario. With `all_reject`, every verification
/// attempt ties the baseline.
pub fn evolve_script(all_reject: bool) -> Vec<ScriptEntry> {
    let golden = golden_bank();
    let b0 = b0_docs();
    let mut out = vec![
        ScriptEntry::any(
            "seeker/*",
            r#"{"thinking": "they are not hearing me", "utterance": "I don't know what to do anymore", "states": ["Helplessness", "Advice seeking"]}"#,
        ),
        ScriptEntry::any(
            "agent/*",
            r#"{"strategy": "Reflection of feelings", "text": "That sounds really hard."}"#,
        ),
        ScriptEntry::any(
            "scorer/*",
            format!(r#"{{"analysis": "no change", "delta": {STAGE_DELTA}}}"#),
        ),
    ];

    // analyses: one update per updated skill, one addition per proposal,
    // a duplicate update and a no-action report
    let mut proposals: Vec<&str> = ADDED.iter().chain(REJECTED.iter()).copied().collect();
    proposals.sort();
    for (i, target) in UPDATED.iter().enumerate() {
        let pid = format!("p{i:02}");
        let body = json!({"recommendation": "update_existing", "target_skill": target,
            "update_reason": format!("{target} missed the seeker's request")});
        out.push(ScriptEntry::any(format!("analyze/{pid}"), analysis(&pid, body)));
    }
    for (i, name) in proposals.iter().enumerate() {
        let pid = format!("p{:02}", 9 + i);
        let body = json!({"recommendation": "add_new", "new_skill_name": name,
            "new_skill_description": format!("Covers {name}.")});
        out.push(ScriptEntry::any(format!("analyze/{pid}"), analysis(&pid, body)));
    }
    out.push(ScriptEntry::any(
        "analyze/p21",
        analysis(
            "p21",
            json!({"recommendation": "update_existing", "target_skill": "esc-action-planning",
            "update_reason": "plans were too vague"}),
        ),
    ));
    out.push(ScriptEntry::any(
        "analyze/p22",
        analysis("p22", json!({"recommendation": "no_action"})),
    ));

    for name in UPDATED.iter().chain(ADDED.iter()).chain(REJECTED.iter()) {
        let plan = attempt_plan(name);
        for (k, a) in plan.iter().enumerate() {
            let attempt = k + 1;
            let doc = match (*a, golden.get(*name)) {
                (Attempt::Invalid, _) => b0.get(*name).cloned().unwrap_or_else(|| proposal_doc("wrong-name")),
                (_, Some(g)) => g.clone(),
                (_, None) => proposal_doc(name),
            };
            // models often wrap documents in prose and fences
            out.push(ScriptEntry::any(
                format!("generate/{name}/{attempt}"),
                format!("Here is the revised skill:\n```markdown\n{doc}```\n"),
            ));
            let a = if all_reject { Attempt::Ties } else { *a };
            out.push(ScriptEntry::any(
                format!("scorer/verify/{name}/{attempt}/*"),
                format!(r#"{{"analysis": "verification", "delta": {}}}"#, delta_for(a)),
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// simulation batch

pub fn sim_profiles(n: usize) -> Vec<SeekerProfile> {
    (0..n)
        .map(|i| SeekerProfile {
            profile_id: format!("s{i:03}"),
            task: format!("hidden theme {}", i % 7),
            scene_summary: format!("scene {i}"),
            persona: format!("persona {}", i % 3),
            initial_score: [50, 0, 100, 35, 95][i % 5],
        })
        .collect()
}

/// Per-profile, per-turn deltas with overshoots in both directions.
pub fn sim_script(n: usize, run: &str) -> Vec<ScriptEntry> {
    let mut out = vec![
        ScriptEntry::any(
            "agent/*",
            r#"{"strategy": "[Question]", "text": "What feels hardest right now?"}"#,
        ),
        ScriptEntry::any(
            "seeker/*",
            r#"{"thinking": "hm", "utterance": "work again", "states": ["Rumination", "Not a state"]}"#,
        ),
    ];
    for i in 0..n {
        for turn in 0..6u32 {
            let d = ((i as i64 * 37 + turn as i64 * 11) % 61) - 30 + if i % 4 == 0 { 40 } else { 0 };
            let d = if i % 9 == 0 && turn == 1 { -500 } else { d };
            out.push(ScriptEntry::at(
                format!("scorer/{run}/s{i:03}"),
                turn,
                format!(r#"{{"analysis": "turn {turn}", "delta": {d}}}"#),
            ));
        }
    }
    out
}

pub fn write_script(path: &Path, entries: &[ScriptEntry]) {
    fs::write(path, to_ndjson(entries)).unwrap();
}
