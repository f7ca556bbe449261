//! Closed annotation label sets and the response-change direction mapping.
//!
//! Every label is matched case-insensitively on ingest (after trimming and
//! collapsing internal whitespace) and stored in its canonical spelling.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Which closed set a raw label is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelKind {
    Scenario,
    State,
    Action,
    Change,
    Strategy,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Scenario => "scenario",
            LabelKind::State => "state",
            LabelKind::Action => "action",
            LabelKind::Change => "change",
            LabelKind::Strategy => "strategy",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match normalize(raw).as_str() {
            "scenario" => Some(LabelKind::Scenario),
            "state" => Some(LabelKind::State),
            "action" => Some(LabelKind::Action),
            "change" => Some(LabelKind::Change),
            "strategy" => Some(LabelKind::Strategy),
            _ => None,
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("unknown {kind} label: {raw:?}")]
    UnknownLabel { kind: LabelKind, raw: String },
    #[error("direction mapping line {line}: {reason}")]
    BadMappingLine { line: usize, reason: String },
    #[error("direction mapping has no entry for {0:?}")]
    IncompleteMapping(String),
}

/// Trim, lowercase, and collapse runs of whitespace to a single space.
pub fn normalize(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

macro_rules! closed_label {
    (
        $(#[$meta:meta])*
        $name:ident, $kind:expr, [$($variant:ident => $text:literal),+ $(,)?]
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            /// Case- and whitespace-insensitive lookup.
            pub fn parse(raw: &str) -> Result<Self, TaxonomyError> {
                let key = normalize(raw);
                Self::ALL
                    .iter()
                    .copied()
                    .find(|label| normalize(label.as_str()) == key)
                    .ok_or_else(|| TaxonomyError::UnknownLabel {
                        kind: $kind,
                        raw: raw.to_string(),
                    })
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(deserializer)?;
                $name::parse(&raw).map_err(serde::de::Error::custom)
            }
        }
    };
}

closed_label!(
    /// Utterance-level seeker emotional state.
    SeekerState, LabelKind::State, [
        WillingnessToExplore => "Willingness to explore",
        SelfAwareness => "Self-awareness",
        DepressedMood => "Depressed mood",
        Intellectualization => "Intellectualization",
        Helplessness => "Helplessness",
        AdviceSeeking => "Advice seeking",
        TentativeDisclosure => "Tentative disclosure",
        HeightenedEmotionalArousal => "Heightened emotional arousal",
        Rumination => "Rumination",
        DisorganizedExpression => "Disorganized expression",
        Avoidance => "Avoidance",
        Indecisiveness => "Indecisiveness",
        AngerExpression => "Anger expression",
        SelfBlame => "Self-blame",
        HighDefensiveness => "High defensiveness",
    ]
);

closed_label!(
    /// Utterance-level supporter intervention action.
    SupportAction, LabelKind::Action, [
        ActionOrientedSuggestions => "Action-oriented suggestions",
        StrengthsResourceAffirmation => "Strengths/resource affirmation",
        OpenEndedQuestioning => "Open-ended questioning",
        EmpathicReflection => "Empathic reflection",
        SupporterSelfDisclosure => "Supporter self-disclosure",
        InformationProvision => "Information provision",
        Normalization => "Normalization",
        ClosedEndedQuestioning => "Closed-ended questioning",
        CognitiveReframing => "Cognitive reframing",
        ExploratoryDeepening => "Exploratory deepening",
        ParaphrasingAndClarification => "Paraphrasing and clarification",
        BoundarySettingReminder => "Boundary setting/reminder",
        EmotionLabeling => "Emotion labeling",
        GuidedQuestioning => "Guided questioning",
        SummarizingAndFocusing => "Summarizing and focusing",
        GentleChallenge => "Gentle challenge",
        IntentionalSilence => "Intentional silence",
    ]
);

closed_label!(
    /// Observed seeker response change after a supporter turn.
    ResponseChange, LabelKind::Change, [
        MoreSpecificExpression => "More specific expression",
        ContinuedDisclosure => "Continued disclosure",
        NoObservableChange => "No observable change",
        EmotionalRelief => "Emotional relief",
        WillingnessToTakeAction => "Expression of willingness to take action",
        WillingnessToConsiderNewPerspective => "Willingness to consider a new perspective",
        Indeterminable => "Indeterminable",
        TopicShift => "Topic shift",
        IncreasedSelfAwareness => "Increased self-awareness",
        IncreasedConfusion => "Increased confusion",
        IncreasedWithdrawal => "Increased withdrawal",
        IncreasedEmotionalAgitation => "Increased emotional agitation",
        ReducedRepetitiveResponding => "Reduced repetitive responding",
        PerceivedOffense => "Perceived offense",
    ]
);

closed_label!(
    /// The eight response strategies an agent reply must declare.
    Strategy, LabelKind::Strategy, [
        Question => "Question",
        RestatementOrParaphrasing => "Restatement or Paraphrasing",
        ReflectionOfFeelings => "Reflection of feelings",
        SelfDisclosure => "Self-disclosure",
        AffirmationAndReassurance => "Affirmation and Reassurance",
        ProvidingSuggestions => "Providing Suggestions",
        Information => "Information",
        Others => "Others",
    ]
);

/// Scenario labels as printed; the table claims 18 but lists these 17.
/// Deployments that know the missing label add it through
/// [`Taxonomy::with_extra_scenarios`].
pub const PRINTED_SCENARIOS: &[&str] = &[
    "Loss of perceived control",
    "Anxiety and stress",
    "Loneliness",
    "Doubts about self-worth",
    "Loss and grief",
    "Trust rupture",
    "Career uncertainty / intimate relationship conflict",
    "Excessive sense of responsibility",
    "Feelings of neglect",
    "Family conflict",
    "Social withdrawal",
    "Depressed mood",
    "Interpersonal conflict",
    "Self-negation",
    "Perfectionism-related distress",
    "Impaired personal boundaries",
    "Identity confusion",
];

/// A dialogue-level scenario label in canonical spelling.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScenarioLabel(String);

impl ScenarioLabel {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
    Neutral,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
            Direction::Neutral => "neutral",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match normalize(raw).as_str() {
            "positive" => Some(Direction::Positive),
            "negative" => Some(Direction::Negative),
            "neutral" => Some(Direction::Neutral),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Shipped default for the change → direction mapping file.
pub const DEFAULT_DIRECTION_MAP: &str = "\
# response change = direction
More specific expression = positive
Continued disclosure = positive
Emotional relief = positive
Expression of willingness to take action = positive
Willingness to consider a new perspective = positive
Increased self-awareness = positive
Reduced repetitive responding = positive
Increased confusion = negative
Increased withdrawal = negative
Increased emotional agitation = negative
Perceived offense = negative
No observable change = neutral
Indeterminable = neutral
# listed without a direction; neither salient-positive nor a negative impact
Topic shift = neutral
";

/// Total mapping from every [`ResponseChange`] to a [`Direction`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionMap {
    map: BTreeMap<ResponseChange, Direction>,
}

impl DirectionMap {
    /// Parse a mapping file. Every change label must be covered exactly once.
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let mut map = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            if line.trim().is_empty() {
                continue;
            }
            let (label, direction) = line.split_once('=').ok_or_else(|| TaxonomyError::BadMappingLine {
                line: line_no,
                reason: "expected `label = direction`".to_string(),
            })?;
            let change = ResponseChange::parse(label).map_err(|e| TaxonomyError::BadMappingLine {
                line: line_no,
                reason: e.to_string(),
            })?;
            let direction = Direction::parse(direction).ok_or_else(|| TaxonomyError::BadMappingLine {
                line: line_no,
                reason: alloc::format!("unknown direction {:?}", direction.trim()),
            })?;
            if map.insert(change, direction).is_some() {
                return Err(TaxonomyError::BadMappingLine {
                    line: line_no,
                    reason: alloc::format!("duplicate entry for {change}"),
                });
            }
        }
        if let Some(missing) = ResponseChange::ALL.iter().find(|c| !map.contains_key(c)) {
            return Err(TaxonomyError::IncompleteMapping(missing.as_str().to_string()));
        }
        Ok(DirectionMap { map })
    }

    pub fn direction(&self, change: ResponseChange) -> Direction {
        // parse() guarantees totality
        self.map[&change]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ResponseChange, Direction)> + '_ {
        self.map.iter().map(|(c, d)| (*c, *d))
    }
}

impl Default for DirectionMap {
    fn default() -> Self {
        DirectionMap::parse(DEFAULT_DIRECTION_MAP).expect("embedded direction map is valid")
    }
}

/// Direction under the shipped default mapping.
pub fn change_direction(change: ResponseChange) -> Direction {
    use ResponseChange::*;
    match change {
        MoreSpecificExpression
        | ContinuedDisclosure
        | EmotionalRelief
        | WillingnessToTakeAction
        | WillingnessToConsiderNewPerspective
        | IncreasedSelfAwareness
        | ReducedRepetitiveResponding => Direction::Positive,
        IncreasedConfusion | IncreasedWithdrawal | IncreasedEmotionalAgitation | PerceivedOffense => {
            Direction::Negative
        }
        NoObservableChange | Indeterminable | TopicShift => Direction::Neutral,
    }
}

/// Expected set sizes, checked by [`Taxonomy::size_mismatches`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedSizes {
    pub scenario: usize,
    pub state: usize,
    pub action: usize,
    pub change: usize,
    pub strategy: usize,
}

impl Default for ExpectedSizes {
    fn default() -> Self {
        ExpectedSizes {
            scenario: 18,
            state: 15,
            action: 17,
            change: 14,
            strategy: 8,
        }
    }
}

/// The loaded taxonomy: scenario set (printed rows plus configured extras),
/// the fixed enum sets, and the direction mapping. Immutable after load.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    scenarios: Vec<String>,
    directions: DirectionMap,
    expected: ExpectedSizes,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy {
            scenarios: PRINTED_SCENARIOS.iter().map(|s| s.to_string()).collect(),
            directions: DirectionMap::default(),
            expected: ExpectedSizes::default(),
        }
    }
}

/// Canonical label returned by [`Taxonomy::validate_label`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    Scenario(ScenarioLabel),
    State(SeekerState),
    Action(SupportAction),
    Change(ResponseChange, Direction),
    Strategy(Strategy),
}

impl Label {
    pub fn as_str(&self) -> &str {
        match self {
            Label::Scenario(s) => s.as_str(),
            Label::State(s) => s.as_str(),
            Label::Action(a) => a.as_str(),
            Label::Change(c, _) => c.as_str(),
            Label::Strategy(s) => s.as_str(),
        }
    }
}

impl Taxonomy {
    pub fn with_extra_scenarios<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for label in extra {
            let label = label.into();
            let key = normalize(&label);
            if !self.scenarios.iter().any(|s| normalize(s) == key) {
                self.scenarios.push(label.trim().to_string());
            }
        }
        self
    }

    pub fn with_directions(mut self, directions: DirectionMap) -> Self {
        self.directions = directions;
        self
    }

    pub fn with_expected_sizes(mut self, expected: ExpectedSizes) -> Self {
        self.expected = expected;
        self
    }

    pub fn directions(&self) -> &DirectionMap {
        &self.directions
    }

    pub fn scenarios(&self) -> &[String] {
        &self.scenarios
    }

    pub fn direction(&self, change: ResponseChange) -> Direction {
        self.directions.direction(change)
    }

    pub fn scenario(&self, raw: &str) -> Result<ScenarioLabel, TaxonomyError> {
        let key = normalize(raw);
        self.scenarios
            .iter()
            .find(|s| normalize(s) == key)
            .map(|s| ScenarioLabel(s.clone()))
            .ok_or_else(|| TaxonomyError::UnknownLabel {
                kind: LabelKind::Scenario,
                raw: raw.to_string(),
            })
    }

    pub fn validate_label(&self, kind: LabelKind, raw: &str) -> Result<Label, TaxonomyError> {
        Ok(match kind {
            LabelKind::Scenario => Label::Scenario(self.scenario(raw)?),
            LabelKind::State => Label::State(SeekerState::parse(raw)?),
            LabelKind::Action => Label::Action(SupportAction::parse(raw)?),
            LabelKind::Change => {
                let change = ResponseChange::parse(raw)?;
                Label::Change(change, self.direction(change))
            }
            LabelKind::Strategy => Label::Strategy(Strategy::parse(raw)?),
        })
    }

    pub fn size(&self, kind: LabelKind) -> usize {
        match kind {
            LabelKind::Scenario => self.scenarios.len(),
            LabelKind::State => SeekerState::ALL.len(),
            LabelKind::Action => SupportAction::ALL.len(),
            LabelKind::Change => ResponseChange::ALL.len(),
            LabelKind::Strategy => Strategy::ALL.len(),
        }
    }

    /// Sets whose actual size differs from the configured expectation,
    /// as `(kind, actual, expected)`.
    pub fn size_mismatches(&self) -> Vec<(LabelKind, usize, usize)> {
        let e = self.expected;
        [
            (LabelKind::Scenario, e.scenario),
            (LabelKind::State, e.state),
            (LabelKind::Action, e.action),
            (LabelKind::Change, e.change),
            (LabelKind::Strategy, e.strategy),
        ]
        .into_iter()
        .filter_map(|(kind, expected)| {
            let actual = self.size(kind);
            (actual != expected).then_some((kind, actual, expected))
        })
        .collect()
    }
}
