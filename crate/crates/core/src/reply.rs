//! Parsing of structured model replies.
//!
//! Models wrap JSON in prose or code fences; [`extract_json_object`] finds the
//! first balanced object. Each parser then checks types and cross-field
//! consistency and reports a typed [`ReplyError`] on violation.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::taxonomy::Strategy;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplyError {
    #[error("reply contains no JSON object")]
    NoJson,
    #[error("reply JSON is malformed: {0}")]
    Malformed(String),
    #[error("reply is missing `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` has the wrong type or value: {reason}")]
    BadField { field: &'static str, reason: String },
    #[error("unknown strategy {0:?}")]
    BadStrategy(String),
    #[error("score `{field}` = {value} is outside 1..=5")]
    OutOfRange { field: &'static str, value: i64 },
    #[error("inconsistent report: {0}")]
    InconsistentReport(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplyMode {
    /// Coerce recoverable problems (unknown strategy becomes `Others`).
    #[default]
    Lenient,
    Strict,
}

/// The first balanced `{...}` in `raw`, preferring the body of a code fence.
///
/// Quotes and escapes are respected while matching braces.
pub fn extract_json_object(raw: &str) -> Option<&str> {
    if let Some(start) = raw.find("```") {
        let after = &raw[start + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        let body = body.find("```").map_or(body, |end| &body[..end]);
        if let Some(obj) = first_balanced(body) {
            return Some(obj);
        }
    }
    first_balanced(raw)
}

fn first_balanced(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(off) = text[from..].find('{') {
        let start = from + off;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&text[start..=i]);
                    }
                }
                _ => {}
            }
        }
        from = start + 1;
    }
    None
}

/// Extract and parse the first JSON object in a reply.
pub fn parse_object(raw: &str) -> Result<Map<String, Value>, ReplyError> {
    let text = extract_json_object(raw).ok_or(ReplyError::NoJson)?;
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ReplyError::Malformed("not an object".into())),
        Err(e) => Err(ReplyError::Malformed(e.to_string())),
    }
}

pub(crate) fn req_str(map: &Map<String, Value>, field: &'static str) -> Result<String, ReplyError> {
    match map.get(field) {
        None | Some(Value::Null) => Err(ReplyError::MissingField(field)),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(ReplyError::BadField {
            field,
            reason: alloc::format!("expected a string, got {other}"),
        }),
    }
}

/// A string field where JSON null, `"null"` and blank all mean absent.
pub(crate) fn opt_str(map: &Map<String, Value>, field: &'static str) -> Result<Option<String>, ReplyError> {
    match map.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => {
            let t = s.trim();
            Ok((!t.is_empty() && !t.eq_ignore_ascii_case("null")).then(|| s.clone()))
        }
        Some(other) => Err(ReplyError::BadField {
            field,
            reason: alloc::format!("expected a string or null, got {other}"),
        }),
    }
}

pub(crate) fn req_number(map: &Map<String, Value>, field: &'static str) -> Result<f64, ReplyError> {
    let bad = |reason: String| ReplyError::BadField { field, reason };
    match map.get(field) {
        None | Some(Value::Null) => Err(ReplyError::MissingField(field)),
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| bad("not representable".into())),
        Some(Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| bad(alloc::format!("not a number: {s:?}"))),
        Some(other) => Err(bad(alloc::format!("expected a number, got {other}"))),
    }
}

fn str_list(map: &Map<String, Value>, field: &'static str) -> Result<Vec<String>, ReplyError> {
    match map.get(field) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(ReplyError::BadField {
                    field,
                    reason: alloc::format!("list item {other} is not a string"),
                }),
            })
            .collect(),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(alloc::vec![s.clone()]),
        Some(other) => Err(ReplyError::BadField {
            field,
            reason: alloc::format!("expected a list, got {other}"),
        }),
    }
}

// ---------------------------------------------------------------------------
// agent replies

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentReply {
    pub strategy: Strategy,
    /// The strategy string as the model wrote it.
    pub strategy_raw: String,
    pub text: String,
    /// True when an unknown strategy was mapped to `Others`.
    pub coerced: bool,
}

/// Accepts `Question`, `[Question]`, any case.
pub fn parse_strategy(raw: &str) -> Option<Strategy> {
    let t = raw.trim();
    let t = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')).unwrap_or(t);
    Strategy::parse(t).ok()
}

/// Parse `{"strategy": ..., "text": ...}`.
pub fn parse_agent_reply(raw: &str, mode: ReplyMode) -> Result<AgentReply, ReplyError> {
    let map = parse_object(raw)?;
    let strategy_raw = req_str(&map, "strategy")?;
    let text = req_str(&map, "text")?;
    if text.trim().is_empty() {
        return Err(ReplyError::BadField {
            field: "text",
            reason: "empty response text".into(),
        });
    }
    let (strategy, coerced) = match (parse_strategy(&strategy_raw), mode) {
        (Some(s), _) => (s, false),
        (None, ReplyMode::Lenient) => (Strategy::Others, true),
        (None, ReplyMode::Strict) => return Err(ReplyError::BadStrategy(strategy_raw)),
    };
    Ok(AgentReply {
        strategy,
        strategy_raw,
        text,
        coerced,
    })
}

// ---------------------------------------------------------------------------
// analysis reports

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    NoAction,
    UpdateExisting,
    AddNew,
}

impl Recommendation {
    pub fn as_str(self) -> &'static str {
        match self {
            Recommendation::NoAction => "no_action",
            Recommendation::UpdateExisting => "update_existing",
            Recommendation::AddNew => "add_new",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "no_action" => Some(Recommendation::NoAction),
            "update_existing" => Some(Recommendation::UpdateExisting),
            "add_new" => Some(Recommendation::AddNew),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub profile_id: String,
    pub avg_score: f64,
    pub analysis: String,
    pub skills_actually_used: Vec<String>,
    pub skill_effectiveness: String,
    pub skill_gaps: Vec<String>,
    pub recommendation: Recommendation,
    pub target_skill: Option<String>,
    pub update_reason: Option<String>,
    pub new_skill_name: Option<String>,
    pub new_skill_description: Option<String>,
    pub reasoning: String,
}

/// Parse an analysis report.
///
/// `update_existing` needs a target skill; `add_new` needs a name and a
/// description. `known_skills`, when given, must contain the update target
/// and must not contain the proposed new name.
pub fn parse_analysis_report(raw: &str, known_skills: Option<&[String]>) -> Result<AnalysisReport, ReplyError> {
    let map = parse_object(raw)?;
    let rec_raw = req_str(&map, "recommendation")?;
    let recommendation = Recommendation::parse(&rec_raw).ok_or_else(|| ReplyError::BadField {
        field: "recommendation",
        reason: alloc::format!("expected no_action, update_existing or add_new, got {rec_raw:?}"),
    })?;
    let profile_id = match map.get("profile_id") {
        Some(Value::Number(n)) => n.to_string(),
        _ => req_str(&map, "profile_id")?,
    };
    let report = AnalysisReport {
        profile_id,
        avg_score: req_number(&map, "avg_score")?,
        analysis: opt_str(&map, "analysis")?.unwrap_or_default(),
        skills_actually_used: str_list(&map, "skills_actually_used")?,
        skill_effectiveness: opt_str(&map, "skill_effectiveness")?.unwrap_or_default(),
        skill_gaps: str_list(&map, "skill_gaps")?,
        recommendation,
        target_skill: opt_str(&map, "target_skill")?,
        update_reason: opt_str(&map, "update_reason")?,
        new_skill_name: opt_str(&map, "new_skill_name")?,
        new_skill_description: opt_str(&map, "new_skill_description")?,
        reasoning: opt_str(&map, "reasoning")?.unwrap_or_default(),
    };
    let inconsistent = |msg: String| Err(ReplyError::InconsistentReport(msg));
    match recommendation {
        Recommendation::NoAction => {}
        Recommendation::UpdateExisting => {
            let Some(target) = &report.target_skill else {
                return inconsistent("update_existing without target_skill".into());
            };
            if let Some(known) = known_skills {
                if !known.iter().any(|k| k == target) {
                    return inconsistent(alloc::format!("target_skill {target:?} is not in the bank"));
                }
            }
        }
        Recommendation::AddNew => {
            let Some(name) = &report.new_skill_name else {
                return inconsistent("add_new without new_skill_name".into());
            };
            if report.new_skill_description.is_none() {
                return inconsistent("add_new without new_skill_description".into());
            }
            if let Some(known) = known_skills {
                if known.iter().any(|k| k == name) {
                    return inconsistent(alloc::format!("new_skill_name {name:?} already exists"));
                }
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// judge scores

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub empathy: u8,
    pub relevance: u8,
    pub helpfulness: u8,
    pub overall: u8,
    pub rationale: String,
}

fn likert(map: &Map<String, Value>, field: &'static str) -> Result<u8, ReplyError> {
    let v = map.get(field).ok_or(ReplyError::MissingField(field))?;
    let n = match v {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| libm::trunc(*f) == *f).map(|f| f as i64)),
        Value::String(s) => s.trim().parse::<i64>().ok(),
        _ => None,
    }
    .ok_or_else(|| ReplyError::BadField {
        field,
        reason: alloc::format!("expected an integer, got {v}"),
    })?;
    if !(1..=5).contains(&n) {
        return Err(ReplyError::OutOfRange { field, value: n });
    }
    Ok(n as u8)
}

pub fn parse_judge_scores(raw: &str) -> Result<JudgeScores, ReplyError> {
    let map = parse_object(raw)?;
    Ok(JudgeScores {
        empathy: likert(&map, "empathy")?,
        relevance: likert(&map, "relevance")?,
        helpfulness: likert(&map, "helpfulness")?,
        overall: likert(&map, "overall")?,
        rationale: opt_str(&map, "rationale")?.unwrap_or_default(),
    })
}
