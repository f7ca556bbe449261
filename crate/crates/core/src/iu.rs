//! Intervention units: record model, line-oriented ingestion, key/non-key
//! classification, and corpus statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::taxonomy::{Direction, ResponseChange, ScenarioLabel, SeekerState, SupportAction, Taxonomy, TaxonomyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DialogOutcome {
    Success,
    Failed,
}

impl DialogOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            DialogOutcome::Success => "success",
            DialogOutcome::Failed => "failed",
        }
    }
}

/// One localized (pre-state, action, post-state) record around a supporter turn.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionUnit {
    pub dialog_id: String,
    pub outcome: DialogOutcome,
    pub scenario_labels: Vec<ScenarioLabel>,
    pub problem_type: String,
    pub emotion_type: String,
    pub turn_id: u64,
    pub pre_seeker_states: Vec<SeekerState>,
    pub pre_seeker_text: String,
    pub counselor_actions: Vec<SupportAction>,
    pub supporter_text: String,
    pub response_change: ResponseChange,
    pub change_direction: Direction,
    /// The wire direction disagreed with the taxonomy mapping and was kept.
    pub direction_override: bool,
    pub post_seeker_states: Vec<SeekerState>,
    pub post_seeker_text: String,
    pub is_pivotal: bool,
    /// Fields outside the known schema, carried through untouched.
    pub extra: Map<String, Value>,
}

/// How multi-label units expand into (state, action) pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairExpansion {
    #[default]
    CrossProduct,
    FirstLabelOnly,
}

impl InterventionUnit {
    /// Distinct (state, action) pairs this unit contributes, in sorted order.
    pub fn state_action_pairs(&self, mode: PairExpansion) -> Vec<(SeekerState, SupportAction)> {
        match mode {
            PairExpansion::FirstLabelOnly => self
                .pre_seeker_states
                .first()
                .zip(self.counselor_actions.first())
                .map(|(s, a)| alloc::vec![(*s, *a)])
                .unwrap_or_default(),
            PairExpansion::CrossProduct => {
                let mut pairs = BTreeSet::new();
                for s in &self.pre_seeker_states {
                    for a in &self.counselor_actions {
                        pairs.insert((*s, *a));
                    }
                }
                pairs.into_iter().collect()
            }
        }
    }

    /// Wire representation: one JSON object with the known field names.
    pub fn to_record(&self) -> Value {
        let mut obj = self.extra.clone();
        let labels = |v: &[&str]| Value::Array(v.iter().map(|s| Value::from(*s)).collect());
        obj.insert("dialog_id".into(), self.dialog_id.clone().into());
        obj.insert("outcome".into(), self.outcome.as_str().into());
        let scen: Vec<&str> = self.scenario_labels.iter().map(|s| s.as_str()).collect();
        obj.insert("scenario_labels".into(), labels(&scen));
        obj.insert("problem_type".into(), self.problem_type.clone().into());
        obj.insert("emotion_type".into(), self.emotion_type.clone().into());
        obj.insert("turn_id".into(), self.turn_id.into());
        let pre: Vec<&str> = self.pre_seeker_states.iter().map(|s| s.as_str()).collect();
        obj.insert("pre_seeker_states".into(), labels(&pre));
        obj.insert("pre_seeker_text".into(), self.pre_seeker_text.clone().into());
        let acts: Vec<&str> = self.counselor_actions.iter().map(|s| s.as_str()).collect();
        obj.insert("counselor_actions".into(), labels(&acts));
        obj.insert("supporter_text".into(), self.supporter_text.clone().into());
        obj.insert("response_change".into(), self.response_change.as_str().into());
        obj.insert("change_direction".into(), self.change_direction.as_str().into());
        let post: Vec<&str> = self.post_seeker_states.iter().map(|s| s.as_str()).collect();
        obj.insert("post_seeker_states".into(), labels(&post));
        obj.insert("post_seeker_text".into(), self.post_seeker_text.clone().into());
        obj.insert("is_pivotal".into(), self.is_pivotal.into());
        Value::Object(obj)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("json value serializes")
    }
}

const KNOWN_FIELDS: &[&str] = &[
    "dialog_id",
    "outcome",
    "scenario_labels",
    "problem_type",
    "emotion_type",
    "turn_id",
    "pre_seeker_states",
    "pre_seeker_text",
    "counselor_actions",
    "supporter_text",
    "response_change",
    "change_direction",
    "post_seeker_states",
    "post_seeker_text",
    "is_pivotal",
];

/// Why one input line was not turned into a unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordIssue {
    Malformed { message: String },
    MissingField { field: String },
    BadField { field: String, message: String },
    UnknownLabel { field: String, message: String },
    DuplicateTurn { dialog_id: String, turn_id: u64 },
}

impl fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordIssue::Malformed { message } => write!(f, "malformed record: {message}"),
            RecordIssue::MissingField { field } => write!(f, "missing field `{field}`"),
            RecordIssue::BadField { field, message } => write!(f, "field `{field}`: {message}"),
            RecordIssue::UnknownLabel { field, message } => write!(f, "field `{field}`: {message}"),
            RecordIssue::DuplicateTurn { dialog_id, turn_id } => {
                write!(f, "duplicate turn {turn_id} in dialog {dialog_id}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedLine {
    /// 1-based line number in the input.
    pub line: usize,
    pub issue: RecordIssue,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub skipped: Vec<SkippedLine>,
    /// Units whose wire direction overrode the taxonomy default.
    pub direction_overrides: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("{} invalid record(s) in strict mode; first at line {}: {}",
        .0.skipped.len(),
        .0.skipped.first().map(|s| s.line).unwrap_or(0),
        .0.skipped.first().map(|s| s.issue.to_string()).unwrap_or_default())]
    Strict(IngestReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub units: Vec<InterventionUnit>,
    pub report: IngestReport,
}

fn label_err(field: &str, err: TaxonomyError) -> RecordIssue {
    RecordIssue::UnknownLabel {
        field: field.to_string(),
        message: err.to_string(),
    }
}

fn req<'a>(obj: &'a Map<String, Value>, field: &str) -> Result<&'a Value, RecordIssue> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(RecordIssue::MissingField {
            field: field.to_string(),
        }),
        Some(v) => Ok(v),
    }
}

fn as_string(field: &str, v: &Value) -> Result<String, RecordIssue> {
    v.as_str().map(str::to_string).ok_or_else(|| RecordIssue::BadField {
        field: field.to_string(),
        message: "expected a string".into(),
    })
}

fn opt_string(obj: &Map<String, Value>, field: &str) -> Result<String, RecordIssue> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(v) => as_string(field, v),
    }
}

fn string_list(field: &str, v: &Value) -> Result<Vec<String>, RecordIssue> {
    match v {
        Value::Array(items) => items.iter().map(|i| as_string(field, i)).collect(),
        // single labels are common in hand-made exports
        Value::String(s) => Ok(alloc::vec![s.clone()]),
        _ => Err(RecordIssue::BadField {
            field: field.to_string(),
            message: "expected a list of strings".into(),
        }),
    }
}

fn opt_list(obj: &Map<String, Value>, field: &str) -> Result<Vec<String>, RecordIssue> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(v) => string_list(field, v),
    }
}

fn states(field: &str, raw: &[String]) -> Result<Vec<SeekerState>, RecordIssue> {
    raw.iter()
        .map(|s| SeekerState::parse(s).map_err(|e| label_err(field, e)))
        .collect()
}

/// Validate one decoded record into a unit.
pub fn unit_from_record(value: Value, taxonomy: &Taxonomy) -> Result<InterventionUnit, RecordIssue> {
    let Value::Object(mut obj) = value else {
        return Err(RecordIssue::Malformed {
            message: "record is not an object".into(),
        });
    };

    let dialog_id = match req(&obj, "dialog_id")? {
        Value::Number(n) => n.to_string(),
        v => as_string("dialog_id", v)?,
    };
    let outcome = match as_string("outcome", req(&obj, "outcome")?)?
        .trim()
        .to_lowercase()
        .as_str()
    {
        "success" | "successful" => DialogOutcome::Success,
        "failed" | "failure" => DialogOutcome::Failed,
        other => {
            return Err(RecordIssue::BadField {
                field: "outcome".into(),
                message: alloc::format!("expected success or failed, got {other:?}"),
            })
        }
    };
    let turn_id = req(&obj, "turn_id")?.as_u64().ok_or_else(|| RecordIssue::BadField {
        field: "turn_id".into(),
        message: "expected a non-negative integer".into(),
    })?;

    let pre_seeker_states = states(
        "pre_seeker_states",
        &string_list("pre_seeker_states", req(&obj, "pre_seeker_states")?)?,
    )?;
    if pre_seeker_states.is_empty() {
        return Err(RecordIssue::MissingField {
            field: "pre_seeker_states".into(),
        });
    }
    let counselor_actions = string_list("counselor_actions", req(&obj, "counselor_actions")?)?
        .iter()
        .map(|a| SupportAction::parse(a).map_err(|e| label_err("counselor_actions", e)))
        .collect::<Result<Vec<_>, _>>()?;
    if counselor_actions.is_empty() {
        return Err(RecordIssue::MissingField {
            field: "counselor_actions".into(),
        });
    }
    let supporter_text = as_string("supporter_text", req(&obj, "supporter_text")?)?;
    let response_change = ResponseChange::parse(&as_string("response_change", req(&obj, "response_change")?)?)
        .map_err(|e| label_err("response_change", e))?;

    let mapped = taxonomy.direction(response_change);
    let (change_direction, direction_override) = match obj.get("change_direction") {
        None | Some(Value::Null) => (mapped, false),
        Some(v) => {
            let raw = as_string("change_direction", v)?;
            if raw.trim().is_empty() {
                (mapped, false)
            } else {
                let d = Direction::parse(&raw).ok_or_else(|| RecordIssue::BadField {
                    field: "change_direction".into(),
                    message: alloc::format!("unknown direction {raw:?}"),
                })?;
                (d, d != mapped)
            }
        }
    };

    let scenario_labels = opt_list(&obj, "scenario_labels")?
        .iter()
        .map(|s| taxonomy.scenario(s).map_err(|e| label_err("scenario_labels", e)))
        .collect::<Result<Vec<_>, _>>()?;
    let post_seeker_states = states("post_seeker_states", &opt_list(&obj, "post_seeker_states")?)?;
    let is_pivotal = match obj.get("is_pivotal") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => {
            return Err(RecordIssue::BadField {
                field: "is_pivotal".into(),
                message: "expected a boolean".into(),
            })
        }
    };

    let unit = InterventionUnit {
        dialog_id,
        outcome,
        scenario_labels,
        problem_type: opt_string(&obj, "problem_type")?,
        emotion_type: opt_string(&obj, "emotion_type")?,
        turn_id,
        pre_seeker_states,
        pre_seeker_text: opt_string(&obj, "pre_seeker_text")?,
        counselor_actions,
        supporter_text,
        response_change,
        change_direction,
        direction_override,
        post_seeker_states,
        post_seeker_text: opt_string(&obj, "post_seeker_text")?,
        is_pivotal,
        extra: Map::new(),
    };
    for field in KNOWN_FIELDS {
        obj.remove(*field);
    }
    Ok(InterventionUnit { extra: obj, ..unit })
}

/// Ingest line-delimited records. Blank lines are ignored; order is preserved.
pub fn ingest_lines<'a, I>(lines: I, taxonomy: &Taxonomy, mode: IngestMode) -> Result<Ingested, IngestError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut units = Vec::new();
    let mut report = IngestReport::default();
    let mut seen: BTreeSet<(String, u64)> = BTreeSet::new();

    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(line)
            .map_err(|e| RecordIssue::Malformed { message: e.to_string() })
            .and_then(|v| unit_from_record(v, taxonomy))
            .and_then(|u| {
                if seen.insert((u.dialog_id.clone(), u.turn_id)) {
                    Ok(u)
                } else {
                    Err(RecordIssue::DuplicateTurn {
                        dialog_id: u.dialog_id,
                        turn_id: u.turn_id,
                    })
                }
            });
        match parsed {
            Ok(unit) => {
                if unit.direction_override {
                    report.direction_overrides += 1;
                }
                units.push(unit);
            }
            Err(issue) => report.skipped.push(SkippedLine { line: i + 1, issue }),
        }
    }
    report.accepted = units.len();
    if mode == IngestMode::Strict && !report.skipped.is_empty() {
        return Err(IngestError::Strict(report));
    }
    Ok(Ingested { units, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyClass {
    KeyPositive,
    KeyNegative,
    NonKey,
}

/// Key units carry a salient positive or negative shift; `is_pivotal` is ignored.
pub fn classify_key(unit: &InterventionUnit) -> KeyClass {
    match unit.change_direction {
        Direction::Positive => KeyClass::KeyPositive,
        Direction::Negative => KeyClass::KeyNegative,
        Direction::Neutral => KeyClass::NonKey,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub total: u64,
    pub key_positive: u64,
    pub key_negative: u64,
}

impl ClassCounts {
    fn add(&mut self, class: KeyClass) {
        self.total += 1;
        match class {
            KeyClass::KeyPositive => self.key_positive += 1,
            KeyClass::KeyNegative => self.key_negative += 1,
            KeyClass::NonKey => {}
        }
    }

    pub fn key_total(&self) -> u64 {
        self.key_positive + self.key_negative
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub total: u64,
    pub key_total: u64,
    pub key_positive: u64,
    pub key_negative: u64,
    /// Counts per expanded (state, action) pair.
    pub by_state_action: BTreeMap<(SeekerState, SupportAction), ClassCounts>,
}

impl CorpusStats {
    pub fn merge(&mut self, other: &CorpusStats) {
        self.total += other.total;
        self.key_total += other.key_total;
        self.key_positive += other.key_positive;
        self.key_negative += other.key_negative;
        for (pair, counts) in &other.by_state_action {
            let entry = self.by_state_action.entry(*pair).or_default();
            entry.total += counts.total;
            entry.key_positive += counts.key_positive;
            entry.key_negative += counts.key_negative;
        }
    }

    pub fn non_key(&self) -> u64 {
        self.total - self.key_total
    }
}

#[derive(Serialize)]
struct PairRow<'a> {
    state: &'a str,
    action: &'a str,
    #[serde(flatten)]
    counts: ClassCounts,
}

impl Serialize for CorpusStats {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let rows: Vec<PairRow<'_>> = self
            .by_state_action
            .iter()
            .map(|((s, a), c)| PairRow {
                state: s.as_str(),
                action: a.as_str(),
                counts: *c,
            })
            .collect();
        let mut st = serializer.serialize_struct("CorpusStats", 6)?;
        st.serialize_field("total", &self.total)?;
        st.serialize_field("key_total", &self.key_total)?;
        st.serialize_field("key_positive", &self.key_positive)?;
        st.serialize_field("key_negative", &self.key_negative)?;
        st.serialize_field("non_key", &self.non_key())?;
        st.serialize_field("by_state_action", &rows)?;
        st.end()
    }
}

pub fn corpus_stats(units: &[InterventionUnit], expansion: PairExpansion) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for unit in units {
        let class = classify_key(unit);
        stats.total += 1;
        match class {
            KeyClass::KeyPositive => stats.key_positive += 1,
            KeyClass::KeyNegative => stats.key_negative += 1,
            KeyClass::NonKey => {}
        }
        for pair in unit.state_action_pairs(expansion) {
            stats.by_state_action.entry(pair).or_default().add(class);
        }
    }
    stats.key_total = stats.key_positive + stats.key_negative;
    stats
}
