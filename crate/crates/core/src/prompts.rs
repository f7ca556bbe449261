//! Frozen prompt templates and slot rendering.
//!
//! Template text is byte-identical to the reference prompts, including their
//! hard line wraps. Placeholders are `{ident}` or `{ident:.Nf}`; any other
//! brace is literal text (the JSON examples inside the prompts).

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("template {template} needs slot `{slot}`")]
    MissingSlot { template: &'static str, slot: String },
    #[error("template {template} has no slot `{slot}`")]
    UnknownSlot { template: &'static str, slot: String },
    #[error("slot `{slot}` expects a number, got {value:?}")]
    BadNumber { slot: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub text: &'static str,
}

pub const AGENT_SYSTEM: PromptTemplate = PromptTemplate {
    name: "agent_system",
    text: include_str!("prompts/agent_system.txt"),
};

pub const ANALYSIS: PromptTemplate = PromptTemplate {
    name: "analysis",
    text: include_str!("prompts/analysis.txt"),
};

pub const SKILL_UPDATE: PromptTemplate = PromptTemplate {
    name: "skill_update",
    text: include_str!("prompts/skill_update.txt"),
};

pub const SKILL_CREATE: PromptTemplate = PromptTemplate {
    name: "skill_create",
    text: include_str!("prompts/skill_create.txt"),
};

pub const SELFGEN_COT: PromptTemplate = PromptTemplate {
    name: "selfgen_cot",
    text: include_str!("prompts/selfgen_cot.txt"),
};

/// The full judge prompt; use [`judge_system`] and [`judge_user`] for calls.
pub const JUDGE: PromptTemplate = PromptTemplate {
    name: "judge",
    text: include_str!("prompts/judge.txt"),
};

pub const ALL: [PromptTemplate; 6] = [AGENT_SYSTEM, ANALYSIS, SKILL_UPDATE, SKILL_CREATE, SELFGEN_COT, JUDGE];

const JUDGE_SPLIT: &str = "\n\n--- User Message Template ---\n\n";

fn judge_parts() -> (&'static str, &'static str) {
    JUDGE
        .text
        .split_once(JUDGE_SPLIT)
        .expect("judge template carries a user-message marker")
}

/// Judge system prompt (the rubric). Has no slots.
pub fn judge_system() -> &'static str {
    judge_parts().0
}

/// Judge user message with `{situation}`, `{history}`, `{strategy}`, `{response}`.
pub fn judge_user() -> PromptTemplate {
    PromptTemplate {
        name: "judge_user",
        text: judge_parts().1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece<'a> {
    Text(&'a str),
    Slot { name: &'a str, decimals: Option<usize> },
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parse `ident` or `ident:.Nf`.
fn parse_slot(inner: &str) -> Option<(&str, Option<usize>)> {
    match inner.split_once(':') {
        None => is_ident(inner).then_some((inner, None)),
        Some((name, spec)) => {
            let digits = spec.strip_prefix('.')?.strip_suffix('f')?;
            if !is_ident(name) || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            Some((name, Some(digits.parse().ok()?)))
        }
    }
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let slot = after
            .find('}')
            .and_then(|close| parse_slot(&after[..close]).map(|s| (close, s)));
        match slot {
            Some((close, (name, decimals))) => {
                if open > 0 {
                    out.push(Piece::Text(&rest[..open]));
                }
                out.push(Piece::Slot { name, decimals });
                rest = &after[close + 1..];
            }
            None => {
                out.push(Piece::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    out
}

impl PromptTemplate {
    /// Slot names in first-appearance order.
    pub fn slots(&self) -> Vec<&'static str> {
        let mut seen = BTreeSet::new();
        pieces(self.text)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot { name, .. } if seen.insert(name) => Some(name),
                _ => None,
            })
            .collect()
    }

    /// Substitute every slot in one pass; values are never re-scanned.
    ///
    /// All template slots must be supplied and no extra slots are allowed.
    /// `{x:.Nf}` slots take a decimal number and are rendered with N places.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, RenderError> {
        let slots = self.slots();
        for (k, _) in values {
            if !slots.contains(k) {
                return Err(RenderError::UnknownSlot {
                    template: self.name,
                    slot: k.to_string(),
                });
            }
        }
        let lookup = |name: &str| values.iter().find(|(k, _)| *k == name).map(|(_, v)| *v);
        let mut out = String::with_capacity(self.text.len());
        for piece in pieces(self.text) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot { name, decimals } => {
                    let value = lookup(name).ok_or_else(|| RenderError::MissingSlot {
                        template: self.name,
                        slot: name.to_string(),
                    })?;
                    match decimals {
                        None => out.push_str(value),
                        Some(places) => {
                            let x: f64 =
                                value
                                    .trim()
                                    .parse()
                                    .ok()
                                    .filter(|x: &f64| x.is_finite())
                                    .ok_or_else(|| RenderError::BadNumber {
                                        slot: name.to_string(),
                                        value: value.to_string(),
                                    })?;
                            out.push_str(&alloc::format!("{x:.places$}"));
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
