//! Seeded synthetic corpus whose counts and group census are known up front.
//!
//! The generator first fixes the census (group sizes and positive counts
//! per (state, action) pair), then emits one single-label record per unit
//! and shuffles them. Ingestion and grouping can be checked against the
//! census without sharing any code path with them.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use skillbank_core::taxonomy::{change_direction, Direction, ResponseChange, SeekerState, SupportAction};

/// Full-scale corpus counts.
pub const FULL_TOTAL: u64 = 17_858;
pub const FULL_KEY: u64 = 10_181;
pub const FULL_POSITIVE: u64 = 9_697;
pub const FULL_NEGATIVE: u64 = 484;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MirrorSpec {
    pub total: u64,
    pub positive: u64,
    pub negative: u64,
    /// Largest group size drawn; sizes are uniform in 1..=max_group.
    pub max_group: u64,
    pub seed: u64,
}

fn scaled(n: u64, divisor: u64) -> u64 {
    (n + divisor / 2) / divisor
}

impl MirrorSpec {
    /// The full-scale counts divided by `divisor`, rounded half-up.
    pub fn scaled(divisor: u64, seed: u64) -> Self {
        MirrorSpec {
            total: scaled(FULL_TOTAL, divisor),
            positive: scaled(FULL_POSITIVE, divisor),
            negative: scaled(FULL_NEGATIVE, divisor),
            max_group: 12,
            seed,
        }
    }

    pub fn key(&self) -> u64 {
        self.positive + self.negative
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupTruth {
    pub n_total: u64,
    pub n_positive: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorCorpus {
    pub lines: Vec<String>,
    pub total: u64,
    pub key: u64,
    pub positive: u64,
    pub negative: u64,
    /// Every key group, including those under any support cutoff.
    pub census: BTreeMap<(SeekerState, SupportAction), GroupTruth>,
}

impl MirrorCorpus {
    /// Groups with at least `min_support` members.
    pub fn census_at(&self, min_support: u64) -> BTreeMap<(SeekerState, SupportAction), GroupTruth> {
        self.census
            .iter()
            .filter(|(_, g)| g.n_total >= min_support)
            .map(|(k, g)| (*k, *g))
            .collect()
    }

    pub fn text(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}

fn labels_with(direction: Direction) -> Vec<ResponseChange> {
    ResponseChange::ALL
        .iter()
        .copied()
        .filter(|c| change_direction(*c) == direction)
        .collect()
}

/// Generate a corpus for `spec`.
pub fn generate(spec: &MirrorSpec) -> MirrorCorpus {
    assert!(spec.total >= spec.key(), "more key units than units");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let key = spec.key();

    let mut pairs: Vec<(SeekerState, SupportAction)> = SeekerState::ALL
        .iter()
        .flat_map(|s| SupportAction::ALL.iter().map(move |a| (*s, *a)))
        .collect();
    pairs.shuffle(&mut rng);

    // census: group sizes until the key budget is spent
    let mut sizes: Vec<((SeekerState, SupportAction), u64)> = Vec::new();
    let mut left = key;
    let mut cursor = 0;
    while left > 0 {
        let size = rng.random_range(1..=spec.max_group.max(1)).min(left);
        let pair = pairs[cursor % pairs.len()];
        cursor += 1;
        match sizes.iter_mut().find(|(p, _)| *p == pair) {
            Some((_, n)) => *n += size,
            None => sizes.push((pair, size)),
        }
        left -= size;
    }

    // negatives land on random key slots
    let mut slot_owner: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(g, (_, n))| std::iter::repeat_n(g, *n as usize))
        .collect();
    slot_owner.shuffle(&mut rng);
    let mut negatives = vec![0u64; sizes.len()];
    for &g in &slot_owner[..spec.negative as usize] {
        negatives[g] += 1;
    }

    let mut census = BTreeMap::new();
    for (g, (pair, n)) in sizes.iter().enumerate() {
        census.insert(
            *pair,
            GroupTruth {
                n_total: *n,
                n_positive: n - negatives[g],
            },
        );
    }

    let pos = labels_with(Direction::Positive);
    let neg = labels_with(Direction::Negative);
    let neutral = labels_with(Direction::Neutral);
    let mut units: Vec<(SeekerState, SupportAction, ResponseChange)> = Vec::new();
    for ((state, action), truth) in &census {
        for i in 0..truth.n_total {
            let pool = if i < truth.n_positive { &pos } else { &neg };
            units.push((*state, *action, pool[rng.random_range(0..pool.len())]));
        }
    }
    for _ in 0..(spec.total - key) {
        let (s, a) = pairs[rng.random_range(0..pairs.len())];
        units.push((s, a, neutral[rng.random_range(0..neutral.len())]));
    }
    units.shuffle(&mut rng);

    let lines = units
        .iter()
        .enumerate()
        .map(|(i, (state, action, change))| {
            let rec: Value = json!({
                "dialog_id": format!("mirror-{}", i / 8),
                "outcome": if i % 5 == 0 { "failed" } else { "success" },
                "turn_id": (i % 8) as u64,
                "pre_seeker_states": [state.as_str()],
                "pre_seeker_text": format!("seeker text {i}"),
                "counselor_actions": [action.as_str()],
                "supporter_text": format!("supporter text {i}"),
                "response_change": change.as_str(),
                "post_seeker_text": format!("seeker reply {i}"),
            });
            rec.to_string()
        })
        .collect();

    MirrorCorpus {
        lines,
        total: spec.total,
        key,
        positive: spec.positive,
        negative: spec.negative,
        census,
    }
}
