//! Multi-turn seeker simulation with emotion-score dynamics.
//!
//! Each turn: the seeker speaks, skills are retrieved for the seeker's
//! state, the agent replies, and the scorer returns an emotion delta. The
//! score is clamped to [0, 100]; the conversation ends on Success, Failure
//! or the turn limit.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{Backends, ChatRequest, Message, Role};
use crate::bank::{render_skills_section, retrieve, RetrievalQuery, SkillBank, DEFAULT_TOP_K};
use crate::prompts::AGENT_SYSTEM;
use crate::reply::{opt_str, parse_agent_reply, parse_object, ReplyError, ReplyMode};
use crate::taxonomy::{SeekerState, Strategy};

pub const SCORE_MIN: i64 = 0;
pub const SCORE_MAX: i64 = 100;
pub const DEFAULT_INITIAL_SCORE: i64 = 50;
pub const DEFAULT_MAX_TURNS: u32 = 20;

fn default_initial_score() -> i64 {
    DEFAULT_INITIAL_SCORE
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeekerProfile {
    pub profile_id: String,
    /// Hidden theme.
    pub task: String,
    pub scene_summary: String,
    #[serde(default)]
    pub persona: String,
    #[serde(default = "default_initial_score")]
    pub initial_score: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimulationError {
    #[error("max_turns must be at least 1")]
    NoTurns,
    #[error("initial score {0} outside 0..=100")]
    BadInitialScore(i64),
    #[error("duplicate profile id {0:?}")]
    DuplicateProfile(String),
    #[error("no profiles to simulate")]
    NoProfiles,
    #[error("bad thresholds: {0}")]
    BadThresholds(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Failure,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    S,
    A,
    B,
    C,
    F,
}

impl Grade {
    pub const ALL: [Grade; 5] = [Grade::S, Grade::A, Grade::B, Grade::C, Grade::F];
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grade::S => "S",
            Grade::A => "A",
            Grade::B => "B",
            Grade::C => "C",
            Grade::F => "F",
        })
    }
}

/// Success at or above `success`, Failure below `failure`; A/B/C bands
/// start at `a_lo` and `b_lo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub success: i64,
    pub failure: i64,
    pub a_lo: i64,
    pub b_lo: i64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            success: 100,
            failure: 10,
            a_lo: 60,
            b_lo: 30,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(SCORE_MIN < self.failure
            && self.failure <= self.b_lo
            && self.b_lo <= self.a_lo
            && self.a_lo <= self.success
            && self.success <= SCORE_MAX)
        {
            return Err(SimulationError::BadThresholds(
                "need 0 < failure <= b_lo <= a_lo <= success <= 100",
            ));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        alloc::format!(
            "S: >= {s}; A: [{a}, {s}); B: [{b}, {a}); C: [{f}, {b}); F: < {f}",
            s = self.success,
            a = self.a_lo,
            b = self.b_lo,
            f = self.failure
        )
    }
}

pub fn clamp_score(score: i64) -> i64 {
    score.clamp(SCORE_MIN, SCORE_MAX)
}

pub fn classify_outcome(final_score: i64, t: &Thresholds) -> (Outcome, Grade) {
    if final_score >= t.success {
        (Outcome::Success, Grade::S)
    } else if final_score < t.failure {
        (Outcome::Failure, Grade::F)
    } else if final_score >= t.a_lo {
        (Outcome::Neutral, Grade::A)
    } else if final_score >= t.b_lo {
        (Outcome::Neutral, Grade::B)
    } else {
        (Outcome::Neutral, Grade::C)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    pub seeker_thought: String,
    pub seeker_utterance: String,
    #[serde(default)]
    pub seeker_states: Vec<SeekerState>,
    pub agent_strategy: Strategy,
    pub agent_text: String,
    pub scorer_analysis: String,
    pub emotion_delta: i64,
    pub emotion_score_after: i64,
    pub skills_active: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub profile_id: String,
    pub run: String,
    pub initial_score: i64,
    pub turns: Vec<Turn>,
    pub final_score: i64,
    pub outcome: Outcome,
    pub grade: Grade,
    /// Set when a backend or parse error cut the conversation short.
    pub aborted: Option<String>,
}

impl Transcript {
    pub fn skills_used(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .turns
            .iter()
            .flat_map(|t| t.skills_active.iter().cloned())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Dialogue text with the scorer's analysis and the seeker's thinking.
    pub fn render_for_analysis(&self, label: &str) -> String {
        let mut out = alloc::format!(
            "### {label} (final emotion score: {}, outcome: {:?}{})\n",
            self.final_score,
            self.outcome,
            if self.aborted.is_some() { ", aborted" } else { "" }
        );
        for t in &self.turns {
            out.push_str(&alloc::format!("[Seeker Thinking]: {}\n", t.seeker_thought));
            out.push_str(&alloc::format!("Seeker: {}\n", t.seeker_utterance));
            out.push_str(&alloc::format!("Agent [{}]: {}\n", t.agent_strategy, t.agent_text));
            out.push_str(&alloc::format!(
                "[Emotion Analysis]: {} (emotion change: {:+}, score: {})\n",
                t.scorer_analysis,
                t.emotion_delta,
                t.emotion_score_after
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub max_turns: u32,
    pub thresholds: Thresholds,
    pub top_k: usize,
    pub reply_mode: ReplyMode,
    pub temperature: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            max_turns: DEFAULT_MAX_TURNS,
            thresholds: Thresholds::default(),
            top_k: DEFAULT_TOP_K,
            reply_mode: ReplyMode::Lenient,
            temperature: 0.0,
        }
    }
}

pub const SEEKER_SYSTEM: &str = "You are role-playing a help-seeker talking to an emotional support agent.
Stay in character. Your hidden theme and scene are below; reveal them gradually.

Hidden theme: {task}
Scene: {scene_summary}
Persona: {persona}
Current emotion score (0-100): {score}

Reply with a JSON object only:
{\"thinking\": \"<your private thoughts about the agent's last reply>\", \"utterance\": \"<what you say next>\", \"states\": [\"<current seeker states>\"]}";

pub const SCORER_SYSTEM: &str = "You track how a help-seeker's emotion changes during a support conversation.
Given the seeker's profile, their current emotion score (0-100) and the agent's latest reply,
analyse how the reply affects the seeker and output the change in emotion score.

Reply with a JSON object only:
{\"analysis\": \"<how the reply affected the seeker>\", \"delta\": <integer change>}";

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in pairs {
        out = out.replace(&alloc::format!("{{{k}}}"), v);
    }
    out
}

fn dialogue_text(turns: &[Turn], pending_seeker: Option<&str>) -> String {
    let mut out = String::new();
    for t in turns {
        out.push_str(&alloc::format!(
            "Seeker: {}\nAgent: {}\n",
            t.seeker_utterance,
            t.agent_text
        ));
    }
    if let Some(s) = pending_seeker {
        out.push_str(&alloc::format!("Seeker: {s}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SeekerReply {
    thinking: String,
    utterance: String,
    states: Vec<SeekerState>,
}

fn parse_seeker_reply(raw: &str, mode: ReplyMode) -> Result<SeekerReply, ReplyError> {
    let map = match parse_object(raw) {
        Ok(m) => m,
        Err(ReplyError::NoJson) if mode == ReplyMode::Lenient && !raw.trim().is_empty() => {
            return Ok(SeekerReply {
                thinking: String::new(),
                utterance: raw.trim().to_string(),
                states: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let utterance = crate::reply::req_str(&map, "utterance")?;
    let thinking = opt_str(&map, "thinking")?.unwrap_or_default();
    let mut states = Vec::new();
    if let Some(Value::Array(items)) = map.get("states") {
        for item in items {
            let Value::String(s) = item else { continue };
            match SeekerState::parse(s) {
                Ok(st) if !states.contains(&st) => states.push(st),
                Ok(_) => {}
                Err(_) if mode == ReplyMode::Lenient => {}
                Err(_) => {
                    return Err(ReplyError::BadField {
                        field: "states",
                        reason: alloc::format!("unknown seeker state {s:?}"),
                    })
                }
            }
        }
    }
    Ok(SeekerReply {
        thinking,
        utterance,
        states,
    })
}

fn parse_scorer_reply(raw: &str) -> Result<(String, i64), ReplyError> {
    let map = parse_object(raw)?;
    let delta = crate::reply::req_number(&map, "delta")?;
    if libm::trunc(delta) != delta || delta.abs() > 1e9 {
        return Err(ReplyError::BadField {
            field: "delta",
            reason: alloc::format!("expected an integer, got {delta}"),
        });
    }
    Ok((opt_str(&map, "analysis")?.unwrap_or_default(), delta as i64))
}

fn tag(role: &str, run: &str, profile: &str) -> String {
    alloc::format!("{role}/{run}/{profile}")
}

/// Run one conversation. Never fails: errors end it early and are recorded
/// in [`Transcript::aborted`].
pub fn run_conversation(
    profile: &SeekerProfile,
    bank: &SkillBank,
    backends: Backends<'_>,
    config: &SimConfig,
    run: &str,
) -> Transcript {
    let mut score = clamp_score(profile.initial_score);
    let mut turns: Vec<Turn> = Vec::new();
    let mut agent_history: Vec<Message> = Vec::new();
    let mut aborted = None;
    let score_text = |s: i64| alloc::format!("{s}");

    for index in 0..config.max_turns {
        let step = (|| -> Result<Turn, String> {
            let seeker_sys = fill(
                SEEKER_SYSTEM,
                &[
                    ("task", &profile.task),
                    ("scene_summary", &profile.scene_summary),
                    ("persona", &profile.persona),
                    ("score", &score_text(score)),
                ],
            );
            let seeker_user = if turns.is_empty() {
                "Start the conversation by sharing what is on your mind.".to_string()
            } else {
                alloc::format!("Conversation so far:\n{}", dialogue_text(&turns, None))
            };
            let req = ChatRequest::single(tag("seeker", run, &profile.profile_id), seeker_sys, seeker_user)
                .with_temperature(config.temperature)
                .with_turn(index);
            let raw = backends
                .seeker
                .complete(&req)
                .map_err(|e| alloc::format!("seeker: {e}"))?;
            let seeker = parse_seeker_reply(&raw, config.reply_mode).map_err(|e| alloc::format!("seeker: {e}"))?;

            let skills = retrieve(
                bank,
                &RetrievalQuery {
                    states: &seeker.states,
                    last_utterance: &seeker.utterance,
                    k: config.top_k,
                },
            );
            let skills_active: Vec<String> = skills.iter().map(|s| s.name.clone()).collect();
            let system = AGENT_SYSTEM
                .render(&[("skills_section", &render_skills_section(&skills))])
                .map_err(|e| alloc::format!("agent prompt: {e}"))?;
            let mut messages = agent_history.clone();
            messages.push(Message {
                role: Role::User,
                content: seeker.utterance.clone(),
            });
            let req = ChatRequest {
                system,
                messages,
                temperature: config.temperature,
                max_tokens: crate::backend::DEFAULT_MAX_TOKENS,
                tag: tag("agent", run, &profile.profile_id),
                turn: index,
            };
            let raw = backends
                .agent
                .complete(&req)
                .map_err(|e| alloc::format!("agent: {e}"))?;
            let reply = parse_agent_reply(&raw, config.reply_mode).map_err(|e| alloc::format!("agent: {e}"))?;

            let scorer_user = alloc::format!(
                "Seeker profile: {}\nScene: {}\nCurrent emotion score: {}\n\nConversation:\n{}Agent: {}\n",
                profile.task,
                profile.scene_summary,
                score,
                dialogue_text(&turns, Some(&seeker.utterance)),
                reply.text
            );
            let req = ChatRequest::single(tag("scorer", run, &profile.profile_id), SCORER_SYSTEM, scorer_user)
                .with_temperature(config.temperature)
                .with_turn(index);
            let raw = backends
                .scorer
                .complete(&req)
                .map_err(|e| alloc::format!("scorer: {e}"))?;
            let (analysis, delta) = parse_scorer_reply(&raw).map_err(|e| alloc::format!("scorer: {e}"))?;

            Ok(Turn {
                index,
                seeker_thought: seeker.thinking,
                seeker_utterance: seeker.utterance,
                seeker_states: seeker.states,
                agent_strategy: reply.strategy,
                agent_text: reply.text,
                scorer_analysis: analysis,
                emotion_delta: delta,
                emotion_score_after: clamp_score(score.saturating_add(delta)),
                skills_active,
            })
        })();
        match step {
            Ok(turn) => {
                score = turn.emotion_score_after;
                agent_history.push(Message {
                    role: Role::User,
                    content: turn.seeker_utterance.clone(),
                });
                agent_history.push(Message {
                    role: Role::Assistant,
                    content: turn.agent_text.clone(),
                });
                turns.push(turn);
                let (outcome, _) = classify_outcome(score, &config.thresholds);
                if outcome != Outcome::Neutral {
                    break;
                }
            }
            Err(e) => {
                aborted = Some(e);
                break;
            }
        }
    }
    let (outcome, grade) = classify_outcome(score, &config.thresholds);
    Transcript {
        profile_id: profile.profile_id.clone(),
        run: run.to_string(),
        initial_score: clamp_score(profile.initial_score),
        turns,
        final_score: score,
        outcome,
        grade,
        aborted,
    }
}

/// Runs independent jobs, returning results in job order.
pub trait BatchExecutor: Sync {
    fn run_all(&self, jobs: usize, job: &(dyn Fn(usize) -> Transcript + Sync)) -> Vec<Transcript>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BatchExecutor for Sequential {
    fn run_all(&self, jobs: usize, job: &(dyn Fn(usize) -> Transcript + Sync)) -> Vec<Transcript> {
        (0..jobs).map(job).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n: usize,
    pub avg_score: f64,
    pub median: f64,
    pub min: i64,
    pub max: i64,
    pub success_count: usize,
    pub failure_count: usize,
    pub neutral_count: usize,
    pub aborted_count: usize,
    pub grade_histogram: BTreeMap<Grade, usize>,
    pub thresholds: Thresholds,
}

impl SimulationReport {
    pub fn from_transcripts(transcripts: &[Transcript], thresholds: Thresholds) -> Result<Self, SimulationError> {
        if transcripts.is_empty() {
            return Err(SimulationError::NoProfiles);
        }
        let mut finals: Vec<i64> = transcripts.iter().map(|t| t.final_score).collect();
        finals.sort_unstable();
        let n = finals.len();
        let sum: i64 = finals.iter().sum();
        let median = if n % 2 == 1 {
            finals[n / 2] as f64
        } else {
            (finals[n / 2 - 1] + finals[n / 2]) as f64 / 2.0
        };
        let mut grade_histogram: BTreeMap<Grade, usize> = Grade::ALL.iter().map(|g| (*g, 0)).collect();
        let (mut success_count, mut failure_count, mut neutral_count) = (0, 0, 0);
        for t in transcripts {
            *grade_histogram.get_mut(&t.grade).expect("all grades present") += 1;
            match t.outcome {
                Outcome::Success => success_count += 1,
                Outcome::Failure => failure_count += 1,
                Outcome::Neutral => neutral_count += 1,
            }
        }
        Ok(SimulationReport {
            n,
            avg_score: sum as f64 / n as f64,
            median,
            min: finals[0],
            max: finals[n - 1],
            success_count,
            failure_count,
            neutral_count,
            aborted_count: transcripts.iter().filter(|t| t.aborted.is_some()).count(),
            grade_histogram,
            thresholds,
        })
    }

    /// Header, one value row, and the grade bands used.
    pub fn table(&self, label: &str) -> String {
        let mut out = alloc::format!(
            "{:<16} {:>10} {:>7} {:>4} {:>4} {:>8} {:>8} {:>4} {:>4} {:>4} {:>4} {:>4}\n",
            "Model",
            "Avg. Score",
            "Median",
            "Min",
            "Max",
            "Success",
            "Failure",
            "S",
            "A",
            "B",
            "C",
            "F"
        );
        let g = |grade| self.grade_histogram.get(&grade).copied().unwrap_or(0);
        out.push_str(&alloc::format!(
            "{:<16} {:>10.2} {:>7.1} {:>4} {:>4} {:>8} {:>8} {:>4} {:>4} {:>4} {:>4} {:>4}\n",
            label,
            self.avg_score,
            self.median,
            self.min,
            self.max,
            self.success_count,
            self.failure_count,
            g(Grade::S),
            g(Grade::A),
            g(Grade::B),
            g(Grade::C),
            g(Grade::F)
        ));
        out.push_str(&alloc::format!("Grade bands: {}\n", self.thresholds.describe()));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub transcripts: Vec<Transcript>,
    pub report: SimulationReport,
}

pub fn validate_profiles(profiles: &[SeekerProfile]) -> Result<(), SimulationError> {
    let mut seen = alloc::collections::BTreeSet::new();
    for p in profiles {
        if !(SCORE_MIN..=SCORE_MAX).contains(&p.initial_score) {
            return Err(SimulationError::BadInitialScore(p.initial_score));
        }
        if !seen.insert(p.profile_id.as_str()) {
            return Err(SimulationError::DuplicateProfile(p.profile_id.clone()));
        }
    }
    Ok(())
}

/// Simulate every profile; transcripts come back in profile order.
pub fn batch_simulate(
    profiles: &[SeekerProfile],
    bank: &SkillBank,
    backends: Backends<'_>,
    config: &SimConfig,
    run: &str,
    executor: &dyn BatchExecutor,
) -> Result<BatchResult, SimulationError> {
    if config.max_turns == 0 {
        return Err(SimulationError::NoTurns);
    }
    config.thresholds.validate()?;
    validate_profiles(profiles)?;
    if profiles.is_empty() {
        return Err(SimulationError::NoProfiles);
    }
    let job = |i: usize| run_conversation(&profiles[i], bank, backends, config, run);
    let transcripts = executor.run_all(profiles.len(), &job);
    let report = SimulationReport::from_transcripts(&transcripts, config.thresholds)?;
    Ok(BatchResult { transcripts, report })
}
