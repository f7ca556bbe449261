//! Skill prototypes: (state, action) groups of key units with effectiveness
//! statistics, risk flagging, and clustering into synthesis inputs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, ChatRequest};
use crate::iu::{classify_key, InterventionUnit, KeyClass, PairExpansion};
use crate::taxonomy::{Direction, DirectionMap, ResponseChange, SeekerState, SupportAction};

/// Exact non-negative rational `num / den` with `den >= 1`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0).then_some(Ratio { num, den })
    }

    /// Parse a decimal such as `0.6` or `1` exactly.
    pub fn parse_decimal(raw: &str) -> Option<Self> {
        let raw = raw.trim();
        let (int, frac) = raw.split_once('.').unwrap_or((raw, ""));
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if frac.len() > 18 {
            return None;
        }
        let den = 10u64.checked_pow(frac.len() as u32)?;
        let int_part: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let frac_part: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        Some(Ratio {
            num: int_part.checked_mul(den)?.checked_add(frac_part)?,
            den,
        })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Percentage in tenths, rounded half-up: 3/7 → 429 (42.9%).
    pub fn percent_tenths(self) -> u64 {
        let num = self.num as u128 * 2000 + self.den as u128;
        (num / (2 * self.den as u128)) as u64
    }

    pub fn render_percent(self) -> String {
        let t = self.percent_tenths();
        format!("{}.{}%", t / 10, t % 10)
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrototypeError {
    #[error("effectiveness of an empty group is undefined")]
    EmptyGroup,
    #[error("{positive} positive units exceed group size {total}")]
    InvalidCounts { positive: u64, total: u64 },
    #[error("clusterer returned an invalid partition: {0}")]
    BadPartition(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub fn effectiveness_rate(n_positive: u64, n_total: u64) -> Result<Ratio, PrototypeError> {
    if n_total == 0 {
        return Err(PrototypeError::EmptyGroup);
    }
    if n_positive > n_total {
        return Err(PrototypeError::InvalidCounts {
            positive: n_positive,
            total: n_total,
        });
    }
    Ok(Ratio {
        num: n_positive,
        den: n_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InductionConfig {
    pub min_support: u64,
    pub effectiveness_threshold: Ratio,
    pub expansion: PairExpansion,
}

impl Default for InductionConfig {
    fn default() -> Self {
        InductionConfig {
            min_support: 5,
            // inferred: the printed filtered rows top out at 57.1%
            effectiveness_threshold: Ratio { num: 3, den: 5 },
            expansion: PairExpansion::CrossProduct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemberId {
    pub dialog_id: String,
    pub turn_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillPrototype {
    pub state: SeekerState,
    pub action: SupportAction,
    pub member_ids: Vec<MemberId>,
    pub n_total: u64,
    pub n_positive: u64,
    pub effectiveness: Ratio,
    pub change_histogram: BTreeMap<ResponseChange, u64>,
    pub flagged_risk: bool,
    pub dominant_negative: Option<ResponseChange>,
}

impl SkillPrototype {
    pub fn key(&self) -> (SeekerState, SupportAction) {
        (self.state, self.action)
    }
}

/// Group key units by (state, action); groups under `min_support` are dropped.
/// Output is sorted by (state, action).
pub fn group_prototypes(
    key_units: &[InterventionUnit],
    config: &InductionConfig,
    directions: &DirectionMap,
) -> Vec<SkillPrototype> {
    struct Acc {
        members: Vec<MemberId>,
        positive: u64,
        histogram: BTreeMap<ResponseChange, u64>,
    }
    let mut groups: BTreeMap<(SeekerState, SupportAction), Acc> = BTreeMap::new();
    for unit in key_units {
        let class = classify_key(unit);
        if class == KeyClass::NonKey {
            continue;
        }
        for pair in unit.state_action_pairs(config.expansion) {
            let acc = groups.entry(pair).or_insert_with(|| Acc {
                members: Vec::new(),
                positive: 0,
                histogram: BTreeMap::new(),
            });
            acc.members.push(MemberId {
                dialog_id: unit.dialog_id.clone(),
                turn_id: unit.turn_id,
            });
            if class == KeyClass::KeyPositive {
                acc.positive += 1;
            }
            *acc.histogram.entry(unit.response_change).or_default() += 1;
        }
    }

    groups
        .into_iter()
        .filter(|(_, acc)| acc.members.len() as u64 >= config.min_support.max(1))
        .map(|((state, action), acc)| {
            let n_total = acc.members.len() as u64;
            let effectiveness = Ratio {
                num: acc.positive,
                den: n_total,
            };
            let dominant_negative = acc
                .histogram
                .iter()
                .filter(|(c, _)| directions.direction(**c) == Direction::Negative)
                // max_by_key keeps the last maximum; reverse so the first label wins ties
                .rev()
                .max_by_key(|(_, n)| **n)
                .map(|(c, _)| *c);
            SkillPrototype {
                state,
                action,
                member_ids: acc.members,
                n_total,
                n_positive: acc.positive,
                effectiveness,
                change_histogram: acc.histogram,
                flagged_risk: effectiveness < config.effectiveness_threshold,
                dominant_negative,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RiskPartition {
    pub recommended: Vec<SkillPrototype>,
    pub risk: Vec<SkillPrototype>,
}

/// Split by `effectiveness < threshold` (strict). Risk prototypes are kept:
/// they feed synthesis as pitfalls.
pub fn flag_risk(prototypes: Vec<SkillPrototype>, threshold: Ratio) -> RiskPartition {
    let mut out = RiskPartition::default();
    for mut p in prototypes {
        p.flagged_risk = p.effectiveness < threshold;
        if p.flagged_risk {
            out.risk.push(p);
        } else {
            out.recommended.push(p);
        }
    }
    out
}

/// Render prototype rows as a fixed-width table sorted by effectiveness
/// (descending), then support, then (state, action).
pub fn summary_table(prototypes: &[SkillPrototype]) -> String {
    let mut rows: Vec<&SkillPrototype> = prototypes.iter().collect();
    rows.sort_by(|a, b| {
        b.effectiveness
            .cmp(&a.effectiveness)
            .then(b.n_total.cmp(&a.n_total))
            .then(a.key().cmp(&b.key()))
    });
    let mut out = String::new();
    out.push_str(&format!(
        "{:<30} {:<32} {:>6} {:>8}  {}\n",
        "Seeker State", "Support Action", "#IUs", "Eff.", "Negative Impact"
    ));
    for p in rows {
        out.push_str(&format!(
            "{:<30} {:<32} {:>6} {:>8}  {}\n",
            p.state.as_str(),
            p.action.as_str(),
            p.n_total,
            p.effectiveness.render_percent(),
            p.dominant_negative.map(|c| c.as_str()).unwrap_or("-"),
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// clustering

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub dialog_id: String,
    pub turn_id: u64,
    pub pre_seeker_text: String,
    pub supporter_text: String,
    pub post_seeker_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrototypeCluster {
    pub cluster_id: String,
    pub theme: String,
    pub prototypes: Vec<SkillPrototype>,
    pub sample_snippets: Vec<Snippet>,
}

/// A clusterer's answer: themes with indices into the input prototype slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub theme: String,
    pub members: Vec<usize>,
}

pub trait Clusterer {
    fn assign(&self, prototypes: &[SkillPrototype]) -> Result<Vec<ClusterAssignment>, PrototypeError>;
}

/// Scenario theme for a seeker state, used to name built-in clusters.
pub fn state_theme(state: SeekerState) -> &'static str {
    use SeekerState::*;
    match state {
        HighDefensiveness | Avoidance => "resistance handling",
        SelfBlame => "self-blame response",
        DepressedMood | Helplessness => "low mood support",
        Intellectualization => "intellectualization grounding",
        SelfAwareness | WillingnessToExplore => "insight deepening",
        Indecisiveness => "ambivalence guidance",
        AdviceSeeking => "action planning",
        HeightenedEmotionalArousal | AngerExpression => "emotional crisis",
        Rumination | DisorganizedExpression => "confusion clarification",
        TentativeDisclosure => "opening rapport",
    }
}

pub(crate) fn slug(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

/// Group by seeker state; singleton groups that share a support action are
/// merged into one action-themed cluster.
#[derive(Debug, Clone, Copy, Default)]
pub struct StateClusterer;

impl Clusterer for StateClusterer {
    fn assign(&self, prototypes: &[SkillPrototype]) -> Result<Vec<ClusterAssignment>, PrototypeError> {
        let mut by_state: BTreeMap<SeekerState, Vec<usize>> = BTreeMap::new();
        for (i, p) in prototypes.iter().enumerate() {
            by_state.entry(p.state).or_default().push(i);
        }
        let mut out = Vec::new();
        let mut singles_by_action: BTreeMap<SupportAction, Vec<usize>> = BTreeMap::new();
        for (state, members) in &by_state {
            if members.len() == 1 {
                singles_by_action
                    .entry(prototypes[members[0]].action)
                    .or_default()
                    .push(members[0]);
            } else {
                out.push(ClusterAssignment {
                    theme: state_theme(*state).to_string(),
                    members: members.clone(),
                });
            }
        }
        for (action, members) in singles_by_action {
            let theme = if members.len() == 1 {
                state_theme(prototypes[members[0]].state).to_string()
            } else {
                action.as_str().to_lowercase()
            };
            out.push(ClusterAssignment { theme, members });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetConfig {
    pub per_cluster: usize,
    pub seed: u64,
}

impl Default for SnippetConfig {
    fn default() -> Self {
        SnippetConfig {
            per_cluster: 3,
            seed: 0,
        }
    }
}

fn mix(seed: u64, dialog: &str, turn: u64) -> u64 {
    // FNV-1a over the seed, dialog id and turn
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed
        .to_le_bytes()
        .iter()
        .chain(dialog.as_bytes())
        .chain(turn.to_le_bytes().iter())
    {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Validate a clusterer's assignment and materialize clusters with snippets.
pub fn cluster_prototypes(
    prototypes: &[SkillPrototype],
    units: &[InterventionUnit],
    clusterer: &dyn Clusterer,
    snippets: SnippetConfig,
) -> Result<Vec<PrototypeCluster>, PrototypeError> {
    if prototypes.is_empty() {
        return Ok(Vec::new());
    }
    let assignments = clusterer.assign(prototypes)?;
    let mut seen = alloc::vec![false; prototypes.len()];
    for a in &assignments {
        if a.members.is_empty() {
            return Err(PrototypeError::BadPartition(format!("cluster {:?} is empty", a.theme)));
        }
        for &m in &a.members {
            let slot = seen
                .get_mut(m)
                .ok_or_else(|| PrototypeError::BadPartition(format!("index {m} out of range")))?;
            if *slot {
                return Err(PrototypeError::BadPartition(format!("prototype {m} assigned twice")));
            }
            *slot = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(PrototypeError::BadPartition(format!("prototype {missing} unassigned")));
    }

    let by_id: BTreeMap<(&str, u64), &InterventionUnit> =
        units.iter().map(|u| ((u.dialog_id.as_str(), u.turn_id), u)).collect();

    let mut used_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut clusters = Vec::with_capacity(assignments.len());
    for a in assignments {
        let members: Vec<SkillPrototype> = a.members.iter().map(|&i| prototypes[i].clone()).collect();

        let mut candidates: Vec<&MemberId> = Vec::new();
        for p in &members {
            for m in &p.member_ids {
                if !candidates.contains(&m) {
                    candidates.push(m);
                }
            }
        }
        candidates.sort_by(|x, y| {
            y.turn_id
                .cmp(&x.turn_id)
                .then_with(|| {
                    mix(snippets.seed, &x.dialog_id, x.turn_id).cmp(&mix(snippets.seed, &y.dialog_id, y.turn_id))
                })
                .then_with(|| x.cmp(y))
        });
        let sample_snippets = candidates
            .into_iter()
            .filter_map(|m| by_id.get(&(m.dialog_id.as_str(), m.turn_id)))
            .take(snippets.per_cluster)
            .map(|u| Snippet {
                dialog_id: u.dialog_id.clone(),
                turn_id: u.turn_id,
                pre_seeker_text: u.pre_seeker_text.clone(),
                supporter_text: u.supporter_text.clone(),
                post_seeker_text: u.post_seeker_text.clone(),
            })
            .collect();

        let base = format!("cluster-{}", slug(&a.theme));
        let n = used_ids.entry(base.clone()).or_insert(0);
        *n += 1;
        let cluster_id = if *n == 1 { base } else { format!("{base}-{n}") };
        clusters.push(PrototypeCluster {
            cluster_id,
            theme: a.theme,
            prototypes: members,
            sample_snippets,
        });
    }
    Ok(clusters)
}

/// Backend-driven clustering: the model receives a numbered prototype list and
/// answers `{"clusters": [{"theme": "...", "members": [0, 3]}]}`.
pub struct SemanticClusterer<'a> {
    pub backend: &'a dyn ChatBackend,
    pub temperature: f64,
}

pub const SEMANTIC_CLUSTER_SYSTEM: &str = "You group emotional support skill prototypes into recurring support scenarios by the semantic similarity of their seeker states and support actions.\nAnswer with ONLY a JSON object of the form {\"clusters\": [{\"theme\": \"<scenario name>\", \"members\": [<prototype numbers>]}]}. Every prototype number must appear in exactly one cluster.";

impl Clusterer for SemanticClusterer<'_> {
    fn assign(&self, prototypes: &[SkillPrototype]) -> Result<Vec<ClusterAssignment>, PrototypeError> {
        let mut listing = String::new();
        for (i, p) in prototypes.iter().enumerate() {
            listing.push_str(&format!(
                "{i}. {} x {} (n={}, effectiveness {})\n",
                p.state,
                p.action,
                p.n_total,
                p.effectiveness.render_percent()
            ));
        }
        let req = ChatRequest::single("cluster/prototypes", SEMANTIC_CLUSTER_SYSTEM, listing)
            .with_temperature(self.temperature);
        let raw = self.backend.complete(&req)?;
        #[derive(Deserialize)]
        struct Answer {
            clusters: Vec<ClusterAssignment>,
        }
        let body = crate::reply::extract_json_object(&raw)
            .ok_or_else(|| PrototypeError::BadPartition("no JSON object in reply".into()))?;
        let answer: Answer = serde_json::from_str(body).map_err(|e| PrototypeError::BadPartition(e.to_string()))?;
        Ok(answer.clusters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iu::tests::unit;

    fn units_for(
        state: SeekerState,
        action: SupportAction,
        changes: &[(ResponseChange, usize)],
        dialog: &str,
    ) -> Vec<InterventionUnit> {
        let mut out = Vec::new();
        let mut turn = 0;
        for (change, n) in changes {
            for _ in 0..*n {
                let mut u = unit(dialog, turn, *change);
                u.pre_seeker_states = alloc::vec![state];
                u.counselor_actions = alloc::vec![action];
                out.push(u);
                turn += 1;
            }
        }
        out
    }

    #[test]
    fn all_positive_group() {
        let units = units_for(
            SeekerState::SelfAwareness,
            SupportAction::OpenEndedQuestioning,
            &[(ResponseChange::MoreSpecificExpression, 238)],
            "d",
        );
        let ps = group_prototypes(&units, &InductionConfig::default(), &DirectionMap::default());
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].n_total, 238);
        assert_eq!(ps[0].effectiveness, Ratio::new(1, 1).unwrap());
        assert!(!ps[0].flagged_risk);
        assert_eq!(ps[0].dominant_negative, None);
    }

    #[test]
    fn small_groups_are_discarded() {
        let units = units_for(
            SeekerState::SelfBlame,
            SupportAction::Normalization,
            &[(ResponseChange::EmotionalRelief, 4)],
            "d",
        );
        assert!(group_prototypes(&units, &InductionConfig::default(), &DirectionMap::default()).is_empty());
        assert!(group_prototypes(&[], &InductionConfig::default(), &DirectionMap::default()).is_empty());
    }

    #[test]
    fn non_key_members_do_not_count() {
        let mut units = units_for(
            SeekerState::SelfBlame,
            SupportAction::Normalization,
            &[(ResponseChange::EmotionalRelief, 5)],
            "d",
        );
        units.extend(units_for(
            SeekerState::SelfBlame,
            SupportAction::Normalization,
            &[(ResponseChange::NoObservableChange, 3)],
            "e",
        ));
        let ps = group_prototypes(&units, &InductionConfig::default(), &DirectionMap::default());
        assert_eq!(ps[0].n_total, 5);
    }

    #[test]
    fn effectiveness_examples() {
        let r = effectiveness_rate(3, 7).unwrap();
        assert_eq!(r.render_percent(), "42.9%");
        assert!((r.as_f64() - 0.428_571_428_571_428_6).abs() < 1e-15);
        assert_eq!(effectiveness_rate(9, 9).unwrap(), Ratio::new(1, 1).unwrap());
        assert_eq!(effectiveness_rate(4, 7).unwrap().render_percent(), "57.1%");
        assert_eq!(effectiveness_rate(0, 0), Err(PrototypeError::EmptyGroup));
        assert!(matches!(
            effectiveness_rate(8, 7),
            Err(PrototypeError::InvalidCounts { .. })
        ));
        // half-up: 1/8 = 12.5% exactly, 1/16 = 6.25% → 6.3%
        assert_eq!(effectiveness_rate(1, 8).unwrap().render_percent(), "12.5%");
        assert_eq!(effectiveness_rate(1, 16).unwrap().render_percent(), "6.3%");
    }

    #[test]
    fn decimal_parse() {
        assert_eq!(Ratio::parse_decimal("0.6"), Ratio::new(3, 5));
        assert_eq!(Ratio::parse_decimal("1"), Ratio::new(1, 1));
        assert_eq!(Ratio::parse_decimal(".25"), Ratio::new(1, 4));
        assert_eq!(Ratio::parse_decimal("abc"), None);
        assert_eq!(Ratio::parse_decimal(""), None);
    }

    #[test]
    fn risk_flagging() {
        use ResponseChange::*;
        let mut units = units_for(
            SeekerState::HighDefensiveness,
            SupportAction::BoundarySettingReminder,
            &[
                (EmotionalRelief, 3),
                (IncreasedEmotionalAgitation, 3),
                (IncreasedWithdrawal, 1),
            ],
            "a",
        );
        units.extend(units_for(
            SeekerState::SelfAwareness,
            SupportAction::ExploratoryDeepening,
            &[(ContinuedDisclosure, 5)],
            "b",
        ));
        // exactly at threshold: 3/5
        units.extend(units_for(
            SeekerState::Indecisiveness,
            SupportAction::GentleChallenge,
            &[(EmotionalRelief, 3), (IncreasedConfusion, 2)],
            "c",
        ));
        let cfg = InductionConfig::default();
        let ps = group_prototypes(&units, &cfg, &DirectionMap::default());
        let part = flag_risk(ps, cfg.effectiveness_threshold);
        assert_eq!(part.risk.len(), 1);
        let risky = &part.risk[0];
        assert_eq!(risky.effectiveness.render_percent(), "42.9%");
        assert_eq!(risky.dominant_negative, Some(IncreasedEmotionalAgitation));
        assert_eq!(part.recommended.len(), 2);
        assert!(part.recommended.iter().all(|p| !p.flagged_risk));
    }

    #[test]
    fn dominant_negative_tie_takes_first_label() {
        use ResponseChange::*;
        let units = units_for(
            SeekerState::DisorganizedExpression,
            SupportAction::GentleChallenge,
            &[(EmotionalRelief, 2), (IncreasedConfusion, 1), (IncreasedWithdrawal, 1)],
            "a",
        );
        let cfg = InductionConfig {
            min_support: 1,
            ..Default::default()
        };
        let ps = group_prototypes(&units, &cfg, &DirectionMap::default());
        assert_eq!(ps[0].dominant_negative, Some(IncreasedConfusion));
    }

    fn sample_prototypes() -> (Vec<SkillPrototype>, Vec<InterventionUnit>) {
        use ResponseChange::*;
        let mut units = Vec::new();
        let specs = [
            (
                SeekerState::HighDefensiveness,
                SupportAction::BoundarySettingReminder,
                "a",
            ),
            (SeekerState::HighDefensiveness, SupportAction::CognitiveReframing, "b"),
            (SeekerState::HighDefensiveness, SupportAction::GentleChallenge, "c"),
            (SeekerState::SelfBlame, SupportAction::Normalization, "d"),
            (SeekerState::Rumination, SupportAction::Normalization, "e"),
            (
                SeekerState::Intellectualization,
                SupportAction::OpenEndedQuestioning,
                "f",
            ),
        ];
        for (s, a, d) in specs {
            units.extend(units_for(s, a, &[(EmotionalRelief, 5), (IncreasedWithdrawal, 1)], d));
        }
        let ps = group_prototypes(&units, &InductionConfig::default(), &DirectionMap::default());
        (ps, units)
    }

    #[test]
    fn builtin_clusters_partition_and_theme() {
        let (ps, units) = sample_prototypes();
        let clusters = cluster_prototypes(&ps, &units, &StateClusterer, SnippetConfig::default()).unwrap();
        let total: usize = clusters.iter().map(|c| c.prototypes.len()).sum();
        assert_eq!(total, ps.len());
        let resistance = clusters.iter().find(|c| c.theme == "resistance handling").unwrap();
        assert_eq!(resistance.prototypes.len(), 3);
        assert!(resistance
            .prototypes
            .iter()
            .all(|p| p.state == SeekerState::HighDefensiveness));
        // self-blame and rumination singletons share "Normalization"
        let merged = clusters.iter().find(|c| c.theme == "normalization").unwrap();
        assert_eq!(merged.prototypes.len(), 2);
        // snippets: newest turns first, drawn from members
        assert_eq!(resistance.sample_snippets.len(), 3);
        assert!(resistance.sample_snippets.iter().all(|s| s.turn_id == 5));
        let again = cluster_prototypes(&ps, &units, &StateClusterer, SnippetConfig::default()).unwrap();
        assert_eq!(clusters, again);
    }

    #[test]
    fn single_prototype_single_cluster() {
        let (ps, units) = sample_prototypes();
        let one = &ps[..1];
        let clusters = cluster_prototypes(one, &units, &StateClusterer, SnippetConfig::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].prototypes.len(), 1);
    }

    struct Fixed(Vec<ClusterAssignment>);
    impl Clusterer for Fixed {
        fn assign(&self, _: &[SkillPrototype]) -> Result<Vec<ClusterAssignment>, PrototypeError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn invalid_partitions_rejected() {
        let (ps, units) = sample_prototypes();
        let overlap = Fixed(alloc::vec![
            ClusterAssignment {
                theme: "x".into(),
                members: (0..ps.len()).collect()
            },
            ClusterAssignment {
                theme: "y".into(),
                members: alloc::vec![0]
            },
        ]);
        assert!(matches!(
            cluster_prototypes(&ps, &units, &overlap, SnippetConfig::default()),
            Err(PrototypeError::BadPartition(_))
        ));
        let missing = Fixed(alloc::vec![ClusterAssignment {
            theme: "x".into(),
            members: alloc::vec![0]
        }]);
        assert!(cluster_prototypes(&ps, &units, &missing, SnippetConfig::default()).is_err());
    }

    #[test]
    fn table_sorted_by_effectiveness() {
        use ResponseChange::*;
        let mut units = units_for(
            SeekerState::HighDefensiveness,
            SupportAction::GentleChallenge,
            &[(EmotionalRelief, 4), (PerceivedOffense, 3)],
            "a",
        );
        units.extend(units_for(
            SeekerState::SelfAwareness,
            SupportAction::OpenEndedQuestioning,
            &[(EmotionalRelief, 6)],
            "b",
        ));
        let ps = group_prototypes(&units, &InductionConfig::default(), &DirectionMap::default());
        let table = summary_table(&ps);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[1].starts_with("Self-awareness"));
        assert!(lines[1].contains("100.0%"));
        assert!(lines[2].contains("57.1%"));
        assert!(lines[2].contains("Perceived offense"));
    }
}
