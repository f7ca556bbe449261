//! The `SKILL.md` document format.
//!
//! A skill is a markdown document with a `---`-fenced frontmatter block:
//!
//! ```text
//! ---
//! name: esc-strategy-switching
//! description: Decide when and how to switch intervention strategies ...
//! metadata:
//!   domain: emotional-support-counseling
//!   category: meta
//!   version: "3.2"
//! ---
//! ```
//!
//! The frontmatter grammar is a deliberately small mapping subset: scalars
//! (plain, `"double"` or `'single'` quoted), one level of nested mapping,
//! and lists of scalars (block `- item` or flow `[a, b]`). Anything richer
//! (anchors, block scalars, inline maps, deeper nesting) is rejected.
//!
//! [`serialize_skill`] writes a canonical layout; documents already in that
//! layout round-trip byte for byte.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SkillError {
    #[error("document does not start with a `---` frontmatter fence")]
    MissingFrontmatter,
    #[error("frontmatter is not closed by a second `---` line")]
    UnterminatedFrontmatter,
    #[error("frontmatter is missing `{0}`")]
    MissingField(&'static str),
    #[error("bad version {0:?}: expected \"X.Y\"")]
    BadVersion(String),
    #[error("bad category {0:?}: expected meta, phase, technique or scenario")]
    BadCategory(String),
    #[error("bad skill name {0:?}: expected kebab-case")]
    BadName(String),
    #[error("frontmatter line {line}: {reason}")]
    Unsupported { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Meta,
    Phase,
    Technique,
    Scenario,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Meta, Category::Phase, Category::Technique, Category::Scenario];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Meta => "meta",
            Category::Phase => "phase",
            Category::Technique => "technique",
            Category::Scenario => "scenario",
        }
    }

    /// Retrieval priority, lower first: meta > scenario > technique > phase.
    pub fn priority(self) -> u8 {
        match self {
            Category::Meta => 0,
            Category::Scenario => 1,
            Category::Technique => 2,
            Category::Phase => 3,
        }
    }
}

impl FromStr for Category {
    type Err = SkillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "meta" => Ok(Category::Meta),
            "phase" => Ok(Category::Phase),
            "technique" => Ok(Category::Technique),
            "scenario" => Ok(Category::Scenario),
            _ => Err(SkillError::BadCategory(s.to_string())),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `major.minor`, ordered numerically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SkillVersion {
    pub major: u64,
    pub minor: u64,
}

impl SkillVersion {
    pub const INITIAL: SkillVersion = SkillVersion { major: 1, minor: 0 };

    pub fn new(major: u64, minor: u64) -> Self {
        SkillVersion { major, minor }
    }

    /// Next major version: "1.0" -> "2.0", "3.2" -> "4.0".
    pub fn bump_major(self) -> Self {
        SkillVersion {
            major: self.major + 1,
            minor: 0,
        }
    }
}

impl FromStr for SkillVersion {
    type Err = SkillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SkillError::BadVersion(s.to_string());
        let (major, minor) = s.split_once('.').ok_or_else(bad)?;
        let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !digits(major) || !digits(minor) {
            return Err(bad());
        }
        Ok(SkillVersion {
            major: major.parse().map_err(|_| bad())?,
            minor: minor.parse().map_err(|_| bad())?,
        })
    }
}

impl fmt::Display for SkillVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.major, self.minor)
    }
}

impl Serialize for SkillVersion {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SkillVersion {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarStyle {
    Plain,
    Double,
    Single,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scalar {
    pub value: String,
    pub style: ScalarStyle,
}

impl Scalar {
    pub fn plain(value: impl Into<String>) -> Self {
        Scalar {
            value: value.into(),
            style: ScalarStyle::Plain,
        }
    }
}

/// Frontmatter value for keys the typed model does not know about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FmValue {
    Scalar(Scalar),
    List { items: Vec<Scalar>, flow: bool },
    Map(Vec<(String, FmValue)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub domain: String,
    pub category: Category,
    pub version: SkillVersion,
    pub techniques: Option<Vec<String>>,
    pub extra: Vec<(String, FmValue)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    /// ATX heading level, 1..=6.
    pub level: u8,
    pub heading: String,
    /// Text after the heading line up to the next heading, verbatim.
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skill {
    pub name: String,
    pub description: String,
    pub metadata: Metadata,
    /// Unknown top-level frontmatter keys, in document order.
    pub extra: Vec<(String, FmValue)>,
    /// Body text before the first heading.
    pub preamble: String,
    pub sections: Vec<Section>,
}

pub const DEFAULT_DOMAIN: &str = "emotional-support-counseling";

impl Skill {
    /// A skill with the given frontmatter and a single empty section.
    pub fn minimal(
        name: impl Into<String>,
        description: impl Into<String>,
        category: Category,
        first_section: impl Into<String>,
    ) -> Self {
        Skill {
            name: name.into(),
            description: description.into(),
            metadata: Metadata {
                domain: DEFAULT_DOMAIN.to_string(),
                category,
                version: SkillVersion::INITIAL,
                techniques: None,
                extra: Vec::new(),
            },
            extra: Vec::new(),
            preamble: String::new(),
            sections: alloc::vec![Section {
                level: 2,
                heading: first_section.into(),
                body: String::new(),
            }],
        }
    }

    pub fn version(&self) -> SkillVersion {
        self.metadata.version
    }

    pub fn with_version(mut self, version: SkillVersion) -> Self {
        self.metadata.version = version;
        self
    }

    /// The body as markdown (everything after the frontmatter).
    pub fn body(&self) -> String {
        let mut out = self.preamble.clone();
        for s in &self.sections {
            write_section(&mut out, s);
        }
        out
    }

    pub fn section_text(&self, pred: impl Fn(&Section) -> bool) -> String {
        let mut out = String::new();
        for s in self.sections.iter().filter(|s| pred(s)) {
            out.push_str(&s.heading);
            out.push('\n');
            out.push_str(&s.body);
        }
        out
    }
}

pub fn is_kebab_case(name: &str) -> bool {
    !name.is_empty()
        && name
            .split('-')
            .all(|part| !part.is_empty() && part.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()))
}

// ---------------------------------------------------------------------------
// parsing

fn unsupported(line: usize, reason: impl Into<String>) -> SkillError {
    SkillError::Unsupported {
        line,
        reason: reason.into(),
    }
}

fn is_key(key: &str) -> bool {
    !key.is_empty() && key.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn parse_scalar(raw: &str, line: usize) -> Result<Scalar, SkillError> {
    let raw = raw.trim_end();
    if let Some(rest) = raw.strip_prefix('"') {
        let inner = rest
            .strip_suffix('"')
            .ok_or_else(|| unsupported(line, "unterminated double-quoted string"))?;
        let mut value = String::new();
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some('"') => value.push('"'),
                    Some('\\') => value.push('\\'),
                    Some('n') => value.push('\n'),
                    Some('t') => value.push('\t'),
                    Some('/') => value.push('/'),
                    other => {
                        return Err(unsupported(
                            line,
                            alloc::format!("unsupported escape \\{}", other.unwrap_or(' ')),
                        ))
                    }
                },
                '"' => return Err(unsupported(line, "unescaped quote inside string")),
                c => value.push(c),
            }
        }
        return Ok(Scalar {
            value,
            style: ScalarStyle::Double,
        });
    }
    if let Some(rest) = raw.strip_prefix('\'') {
        let inner = rest
            .strip_suffix('\'')
            .ok_or_else(|| unsupported(line, "unterminated single-quoted string"))?;
        if inner.replace("''", "").contains('\'') {
            return Err(unsupported(line, "unescaped quote inside string"));
        }
        return Ok(Scalar {
            value: inner.replace("''", "'"),
            style: ScalarStyle::Single,
        });
    }
    if let Some(c) = raw.chars().next() {
        if matches!(c, '{' | '|' | '>' | '&' | '*' | '!' | '%' | '@' | '`') {
            return Err(unsupported(
                line,
                alloc::format!("unsupported syntax starting with {c:?}"),
            ));
        }
    }
    Ok(Scalar::plain(raw))
}

fn parse_flow_list(raw: &str, line: usize) -> Result<Vec<Scalar>, SkillError> {
    let inner = raw
        .trim_end()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| unsupported(line, "unterminated flow list"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    // split on commas outside quotes
    let mut items = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for c in inner.chars() {
        if escaped {
            escaped = false;
            cur.push(c);
            continue;
        }
        match (quote, c) {
            (Some('"'), '\\') => {
                escaped = true;
                cur.push(c);
            }
            (None, ',') => {
                items.push(parse_scalar(cur.trim(), line)?);
                cur.clear();
            }
            (None, '"' | '\'') => {
                quote = Some(c);
                cur.push(c);
            }
            (Some(q), c) if c == q => {
                quote = None;
                cur.push(c);
            }
            (None, '[' | ']' | '{' | '}') => return Err(unsupported(line, "nested collections are not supported")),
            _ => cur.push(c),
        }
    }
    items.push(parse_scalar(cur.trim(), line)?);
    Ok(items)
}

fn parse_inline_value(raw: &str, line: usize) -> Result<FmValue, SkillError> {
    if raw.starts_with('[') {
        Ok(FmValue::List {
            items: parse_flow_list(raw, line)?,
            flow: true,
        })
    } else {
        Ok(FmValue::Scalar(parse_scalar(raw, line)?))
    }
}

struct FmLine<'a> {
    no: usize,
    indent: usize,
    text: &'a str,
}

/// Split `key: value` / `key:`; returns (key, Some(value)) or (key, None).
fn split_entry<'a>(l: &FmLine<'a>) -> Result<(&'a str, Option<&'a str>), SkillError> {
    let (key, rest) = l
        .text
        .split_once(':')
        .ok_or_else(|| unsupported(l.no, "expected `key: value`"))?;
    if !is_key(key) {
        return Err(unsupported(l.no, alloc::format!("bad key {key:?}")));
    }
    if rest.is_empty() {
        return Ok((key, None));
    }
    let value = rest
        .strip_prefix(' ')
        .ok_or_else(|| unsupported(l.no, "expected a space after `:`"))?;
    if value.trim().is_empty() {
        return Ok((key, None));
    }
    Ok((key, Some(value)))
}

fn parse_block(lines: &[FmLine<'_>], depth: usize) -> Result<(FmValue, usize), SkillError> {
    // lines[0..] are candidates for children at indent == depth * 2
    let indent = depth * 2;
    let mut used = 0;
    if lines
        .first()
        .is_some_and(|l| l.indent == indent && l.text.starts_with("- "))
    {
        let mut items = Vec::new();
        while let Some(l) = lines.get(used) {
            if l.indent < indent {
                break;
            }
            if l.indent != indent || !l.text.starts_with("- ") {
                return Err(unsupported(l.no, "inconsistent list indentation"));
            }
            items.push(parse_scalar(&l.text[2..], l.no)?);
            used += 1;
        }
        return Ok((FmValue::List { items, flow: false }, used));
    }
    let mut entries = Vec::new();
    while let Some(l) = lines.get(used) {
        if l.indent < indent {
            break;
        }
        if l.indent > indent {
            return Err(unsupported(l.no, "unexpected indentation"));
        }
        let (key, value) = split_entry(l)?;
        used += 1;
        match value {
            Some(v) => entries.push((key.to_string(), parse_inline_value(v, l.no)?)),
            None => {
                let rest = &lines[used..];
                if rest.first().is_some_and(|n| n.indent > indent) {
                    if depth >= 1 && !rest[0].text.starts_with("- ") {
                        return Err(unsupported(rest[0].no, "mappings nest only one level"));
                    }
                    let (child, n) = parse_block(rest, depth + 1)?;
                    entries.push((key.to_string(), child));
                    used += n;
                } else {
                    entries.push((key.to_string(), FmValue::Map(Vec::new())));
                }
            }
        }
    }
    Ok((FmValue::Map(entries), used))
}

fn scalar_of(value: FmValue, field: &'static str) -> Result<String, SkillError> {
    match value {
        FmValue::Scalar(s) => Ok(s.value),
        _ => Err(SkillError::Unsupported {
            line: 0,
            reason: alloc::format!("`{field}` must be a scalar"),
        }),
    }
}

fn is_fence(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("```") || t.starts_with("~~~")
}

fn heading_of(line: &str) -> Option<(u8, &str)> {
    let hashes = line.bytes().take_while(|b| *b == b'#').count();
    if !(1..=6).contains(&hashes) {
        return None;
    }
    let rest = &line[hashes..];
    if rest.is_empty() {
        return Some((hashes as u8, ""));
    }
    rest.strip_prefix(' ').map(|t| (hashes as u8, t))
}

fn split_sections(body: &str) -> (String, Vec<Section>) {
    let mut preamble = String::new();
    let mut sections: Vec<Section> = Vec::new();
    let mut in_fence = false;
    for line in body.split_inclusive('\n') {
        let content = line.strip_suffix('\n').unwrap_or(line);
        if !in_fence {
            if let Some((level, heading)) = heading_of(content) {
                sections.push(Section {
                    level,
                    heading: heading.to_string(),
                    body: String::new(),
                });
                continue;
            }
        }
        if is_fence(content) {
            in_fence = !in_fence;
        }
        match sections.last_mut() {
            Some(s) => s.body.push_str(line),
            None => preamble.push_str(line),
        }
    }
    (preamble, sections)
}

pub fn parse_skill(text: &str) -> Result<Skill, SkillError> {
    let normalized;
    let text = if text.contains('\r') {
        normalized = text.replace("\r\n", "\n");
        normalized.as_str()
    } else {
        text
    };
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    let mut lines = text.split_inclusive('\n');
    match lines.next() {
        Some(first) if first.trim_end() == "---" => {}
        _ => return Err(SkillError::MissingFrontmatter),
    }
    let mut fm_lines = Vec::new();
    let mut consumed = text.split_inclusive('\n').next().map_or(0, str::len);
    let mut closed = false;
    for (i, raw) in lines.enumerate() {
        consumed += raw.len();
        let line = raw.strip_suffix('\n').unwrap_or(raw);
        if line.trim_end() == "---" {
            closed = true;
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('\t') {
            return Err(unsupported(i + 2, "tabs are not allowed for indentation"));
        }
        let indent = line.len() - line.trim_start_matches(' ').len();
        if indent % 2 != 0 {
            return Err(unsupported(i + 2, "indentation must be a multiple of two spaces"));
        }
        if line.trim_start().starts_with('#') {
            return Err(unsupported(i + 2, "comments are not supported"));
        }
        fm_lines.push(FmLine {
            no: i + 2,
            indent,
            text: line.trim_start_matches(' '),
        });
    }
    if !closed {
        return Err(SkillError::UnterminatedFrontmatter);
    }

    let (root, used) = parse_block(&fm_lines, 0)?;
    if let Some(l) = fm_lines.get(used) {
        return Err(unsupported(l.no, "unexpected line"));
    }
    let FmValue::Map(entries) = root else {
        return Err(unsupported(2, "frontmatter must be a mapping"));
    };

    let mut name = None;
    let mut description = None;
    let mut metadata = None;
    let mut extra = Vec::new();
    for (key, value) in entries {
        match key.as_str() {
            "name" => name = Some(scalar_of(value, "name")?),
            "description" => description = Some(scalar_of(value, "description")?),
            "metadata" => metadata = Some(value),
            _ => extra.push((key, value)),
        }
    }
    let name = name.ok_or(SkillError::MissingField("name"))?;
    if !is_kebab_case(&name) {
        return Err(SkillError::BadName(name));
    }
    let description = description.ok_or(SkillError::MissingField("description"))?;
    let metadata = match metadata {
        Some(FmValue::Map(entries)) => parse_metadata(entries)?,
        Some(_) => return Err(unsupported(0, "`metadata` must be a mapping")),
        None => return Err(SkillError::MissingField("metadata")),
    };

    let (preamble, sections) = split_sections(&text[consumed..]);
    Ok(Skill {
        name,
        description,
        metadata,
        extra,
        preamble,
        sections,
    })
}

fn parse_metadata(entries: Vec<(String, FmValue)>) -> Result<Metadata, SkillError> {
    let mut domain = None;
    let mut category = None;
    let mut version = None;
    let mut techniques = None;
    let mut extra = Vec::new();
    for (key, value) in entries {
        match key.as_str() {
            "domain" => domain = Some(scalar_of(value, "metadata.domain")?),
            "category" => category = Some(scalar_of(value, "metadata.category")?.parse::<Category>()?),
            "version" => version = Some(scalar_of(value, "metadata.version")?.parse::<SkillVersion>()?),
            "techniques" => {
                techniques = Some(match value {
                    FmValue::List { items, .. } => items.into_iter().map(|s| s.value).collect(),
                    FmValue::Scalar(s) => alloc::vec![s.value],
                    FmValue::Map(m) if m.is_empty() => Vec::new(),
                    FmValue::Map(_) => return Err(unsupported(0, "`metadata.techniques` must be a list")),
                })
            }
            _ => extra.push((key, value)),
        }
    }
    Ok(Metadata {
        domain: domain.ok_or(SkillError::MissingField("metadata.domain"))?,
        category: category.ok_or(SkillError::MissingField("metadata.category"))?,
        version: version.ok_or(SkillError::MissingField("metadata.version"))?,
        techniques,
        extra,
    })
}

// ---------------------------------------------------------------------------
// serialization

fn needs_quotes(value: &str) -> bool {
    value.is_empty()
        || value != value.trim()
        || value.contains('\n')
        || value.contains('\t')
        || value.contains(" #")
        || value.starts_with("- ")
        || value == "-"
        || value.starts_with(|c: char| {
            matches!(
                c,
                '"' | '\'' | '[' | '{' | '|' | '>' | '&' | '*' | '!' | '%' | '@' | '`' | '#'
            )
        })
}

fn write_double(out: &mut String, value: &str) {
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_scalar(out: &mut String, s: &Scalar) {
    match s.style {
        ScalarStyle::Plain if !needs_quotes(&s.value) => out.push_str(&s.value),
        ScalarStyle::Single if !s.value.contains('\n') => {
            out.push('\'');
            out.push_str(&s.value.replace('\'', "''"));
            out.push('\'');
        }
        _ => write_double(out, &s.value),
    }
}

/// Plain flow items holding separators or quotes are double-quoted.
fn write_flow_item(out: &mut String, s: &Scalar) {
    let unsafe_in_flow = |v: &str| v.contains([',', '[', ']', '{', '}', '"', '\'']);
    if s.style == ScalarStyle::Plain && unsafe_in_flow(&s.value) {
        write_double(out, &s.value);
    } else {
        write_scalar(out, s);
    }
}

fn write_auto(out: &mut String, value: &str) {
    write_scalar(out, &Scalar::plain(value));
}

fn write_entry(out: &mut String, indent: usize, key: &str, value: &FmValue) {
    let pad = " ".repeat(indent);
    out.push_str(&pad);
    out.push_str(key);
    out.push(':');
    match value {
        FmValue::Scalar(s) => {
            out.push(' ');
            write_scalar(out, s);
            out.push('\n');
        }
        FmValue::List { items, flow: true } => {
            out.push_str(" [");
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_flow_item(out, item);
            }
            out.push_str("]\n");
        }
        FmValue::List { items, flow: false } => {
            out.push('\n');
            for item in items {
                out.push_str(&pad);
                out.push_str("  - ");
                write_scalar(out, item);
                out.push('\n');
            }
        }
        FmValue::Map(entries) => {
            out.push('\n');
            for (k, v) in entries {
                write_entry(out, indent + 2, k, v);
            }
        }
    }
}

fn write_section(out: &mut String, s: &Section) {
    for _ in 0..s.level {
        out.push('#');
    }
    if !s.heading.is_empty() {
        out.push(' ');
        out.push_str(&s.heading);
    }
    out.push('\n');
    out.push_str(&s.body);
}

/// Canonical layout: name, description, metadata (domain, category, quoted
/// version, techniques, other keys), remaining top-level keys, then the body.
pub fn serialize_skill(skill: &Skill) -> String {
    let mut out = String::from("---\nname: ");
    write_auto(&mut out, &skill.name);
    out.push_str("\ndescription: ");
    write_auto(&mut out, &skill.description);
    out.push_str("\nmetadata:\n  domain: ");
    write_auto(&mut out, &skill.metadata.domain);
    out.push_str("\n  category: ");
    out.push_str(skill.metadata.category.as_str());
    out.push_str("\n  version: \"");
    out.push_str(&skill.metadata.version.to_string());
    out.push_str("\"\n");
    if let Some(t) = &skill.metadata.techniques {
        let items = t.iter().map(Scalar::plain).collect();
        write_entry(&mut out, 2, "techniques", &FmValue::List { items, flow: false });
    }
    for (k, v) in &skill.metadata.extra {
        write_entry(&mut out, 2, k, v);
    }
    for (k, v) in &skill.extra {
        write_entry(&mut out, 0, k, v);
    }
    out.push_str("---\n");
    out.push_str(&skill.preamble);
    let n = skill.sections.len();
    for (i, s) in skill.sections.iter().enumerate() {
        write_section(&mut out, s);
        if i + 1 < n && !s.body.is_empty() && !s.body.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// `serialize_skill(parse_skill(text))`.
pub fn normalize_document(text: &str) -> Result<String, SkillError> {
    parse_skill(text).map(|s| serialize_skill(&s))
}

// ---------------------------------------------------------------------------
// schema

/// One required part of a skill, satisfied by any heading containing one of
/// the keywords (case-insensitive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionRole {
    pub name: &'static str,
    pub keywords: &'static [&'static str],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionSchema {
    pub roles: Vec<SectionRole>,
}

impl SectionSchema {
    /// Overview, activation conditions, recommended actions, pitfalls, examples.
    pub fn bank() -> Self {
        SectionSchema {
            roles: alloc::vec![
                SectionRole {
                    name: "overview",
                    keywords: &["overview"]
                },
                SectionRole {
                    name: "activation",
                    keywords: &["when to use", "activation", "trigger", "rule", "indication"],
                },
                SectionRole {
                    name: "recommended actions",
                    keywords: &[
                        "recommended",
                        "action",
                        "step",
                        "protocol",
                        "principle",
                        "workflow",
                        "technique"
                    ],
                },
                SectionRole {
                    name: "pitfalls",
                    keywords: &[
                        "pitfall",
                        "avoid",
                        "anti-pattern",
                        "failure",
                        "risk",
                        "mistake",
                        "contrastive",
                        "warning"
                    ],
                },
                SectionRole {
                    name: "examples",
                    keywords: &["example", "scenario", "case"],
                },
            ],
        }
    }

    /// Sections the skill-creation prompt mandates for new skills.
    pub fn creation() -> Self {
        SectionSchema {
            roles: alloc::vec![
                SectionRole {
                    name: "Technique Overview",
                    keywords: &["overview"]
                },
                SectionRole {
                    name: "When to Use",
                    keywords: &["when to use"]
                },
                SectionRole {
                    name: "Operational Steps",
                    keywords: &["operational steps"]
                },
                SectionRole {
                    name: "Contrastive Examples",
                    keywords: &["contrastive examples"]
                },
                SectionRole {
                    name: "Coordination with Other Skills",
                    keywords: &["coordination"]
                },
            ],
        }
    }

    /// Names of roles no heading satisfies.
    pub fn missing(&self, skill: &Skill) -> Vec<&'static str> {
        let headings: Vec<String> = skill.sections.iter().map(|s| s.heading.to_lowercase()).collect();
        self.roles
            .iter()
            .filter(|role| !headings.iter().any(|h| role.keywords.iter().any(|k| h.contains(k))))
            .map(|role| role.name)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIG3: &str = include_str!("../tests/golden/esc-strategy-switching.md");

    #[test]
    fn parses_reference_skill() {
        let s = parse_skill(FIG3).unwrap();
        assert_eq!(s.name, "esc-strategy-switching");
        assert_eq!(s.metadata.version, SkillVersion::new(3, 2));
        assert_eq!(s.metadata.category, Category::Meta);
        assert_eq!(s.metadata.domain, DEFAULT_DOMAIN);
        assert!(s.description.starts_with("Decide when and how"));
        assert_eq!(s.sections[0].level, 1);
        assert_eq!(s.sections[0].heading, "Dynamic Strategy Switching");
        assert!(s.sections.iter().any(|x| x.heading == "Anti-Pattern Library"));
        assert_eq!(serialize_skill(&s), FIG3);
        assert!(SectionSchema::bank().missing(&s).is_empty());
    }

    #[test]
    fn missing_fence() {
        assert_eq!(parse_skill("name: x\n"), Err(SkillError::MissingFrontmatter));
        assert_eq!(parse_skill(""), Err(SkillError::MissingFrontmatter));
        assert_eq!(parse_skill("---\nname: x\n"), Err(SkillError::UnterminatedFrontmatter));
    }

    #[test]
    fn missing_fields_and_bad_values() {
        let doc = |fm: &str| alloc::format!("---\n{fm}---\n# T\n");
        assert_eq!(
            parse_skill(&doc(
                "description: d\nmetadata:\n  domain: x\n  category: meta\n  version: \"1.0\"\n"
            )),
            Err(SkillError::MissingField("name"))
        );
        assert_eq!(
            parse_skill(&doc(
                "name: a\nmetadata:\n  domain: x\n  category: meta\n  version: \"1.0\"\n"
            )),
            Err(SkillError::MissingField("description"))
        );
        assert_eq!(
            parse_skill(&doc(
                "name: a\ndescription: d\nmetadata:\n  domain: x\n  category: meta\n  version: \"v1\"\n"
            )),
            Err(SkillError::BadVersion("v1".into()))
        );
        assert_eq!(
            parse_skill(&doc(
                "name: a\ndescription: d\nmetadata:\n  domain: x\n  category: misc\n  version: \"1.0\"\n"
            )),
            Err(SkillError::BadCategory("misc".into()))
        );
        assert_eq!(
            parse_skill(&doc(
                "name: Not_Kebab\ndescription: d\nmetadata:\n  domain: x\n  category: meta\n  version: \"1.0\"\n"
            )),
            Err(SkillError::BadName("Not_Kebab".into()))
        );
    }

    #[test]
    fn rich_syntax_fails_loudly() {
        let base = "name: a\ndescription: d\nmetadata:\n  domain: x\n  category: meta\n  version: \"1.0\"\n";
        for extra in [
            "anchor: &a value\n",
            "block: |\n  text\n",
            "inline: {a: 1}\n",
            "deep:\n  one:\n    two: x\n",
            "odd:\n   three: spaces\n",
            "# comment\n",
        ] {
            let doc = alloc::format!("---\n{base}{extra}---\n");
            assert!(
                matches!(parse_skill(&doc), Err(SkillError::Unsupported { .. })),
                "{extra:?} should be rejected"
            );
        }
    }

    #[test]
    fn minimal_skill_is_nine_lines() {
        let s = Skill::minimal("esc-demo", "A demo skill.", Category::Technique, "Overview");
        let text = serialize_skill(&s);
        assert_eq!(text.lines().count(), 9);
        assert_eq!(parse_skill(&text).unwrap(), s);
    }

    #[test]
    fn version_bump_changes_only_version_line() {
        let s = Skill::minimal("esc-demo", "A demo skill.", Category::Technique, "Overview");
        let before = serialize_skill(&s);
        let after = serialize_skill(&s.clone().with_version(SkillVersion::new(2, 0)));
        let diff: Vec<(&str, &str)> = before.lines().zip(after.lines()).filter(|(a, b)| a != b).collect();
        assert_eq!(diff, alloc::vec![("  version: \"1.0\"", "  version: \"2.0\"")]);
        assert_eq!(SkillVersion::new(3, 2).bump_major(), SkillVersion::new(4, 0));
    }

    #[test]
    fn extras_and_techniques_survive() {
        let doc = "---\nname: esc-x\ndescription: \"Quoted: with # hash\"\nmetadata:\n  domain: d\n  category: technique\n  version: \"1.0\"\n  techniques:\n    - Empathic reflection\n    - \"Normalization\"\n  owner: team-a\nlicense: 'it''s fine'\ntags: [a, \"b c\"]\n---\nintro\n## Overview\nbody\n";
        let s = parse_skill(doc).unwrap();
        assert_eq!(s.description, "Quoted: with # hash");
        assert_eq!(
            s.metadata.techniques,
            Some(alloc::vec!["Empathic reflection".into(), "Normalization".into()])
        );
        assert_eq!(s.extra.len(), 2);
        assert_eq!(s.preamble, "intro\n");
        let once = serialize_skill(&s);
        assert_eq!(parse_skill(&once).unwrap(), s);
        assert_eq!(normalize_document(&once).unwrap(), once);
    }

    #[test]
    fn headings_inside_fences_are_body() {
        let doc = "---\nname: a\ndescription: d\nmetadata:\n  domain: x\n  category: meta\n  version: \"1.0\"\n---\n## Examples\n```\n# not a heading\n```\n## Next\n";
        let s = parse_skill(doc).unwrap();
        assert_eq!(s.sections.len(), 2);
        assert!(s.sections[0].body.contains("# not a heading"));
        assert_eq!(serialize_skill(&s), doc);
    }

    #[test]
    fn crlf_is_normalized() {
        let crlf = FIG3.replace('\n', "\r\n");
        assert_eq!(serialize_skill(&parse_skill(&crlf).unwrap()), FIG3);
    }

    #[test]
    fn creation_schema() {
        let mut s = Skill::minimal("esc-new", "d", Category::Technique, "Technique Overview");
        for h in ["When to Use", "Operational Steps", "Coordination with Other Skills"] {
            s.sections.push(Section {
                level: 2,
                heading: h.into(),
                body: String::new(),
            });
        }
        assert_eq!(
            SectionSchema::creation().missing(&s),
            alloc::vec!["Contrastive Examples"]
        );
    }
}
