//! Canonical data model for annotated dialogue corpora.
//!
//! A corpus file holds one [`Dialogue`] per line. Text offsets everywhere are
//! Unicode scalar-value indices, never byte offsets, so multilingual text
//! (zh/ja) can be sliced without splitting characters.

mod arith;
mod io;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption::CaptionRecord;

pub use arith::{
    downsample_frames, token_count_for_duration, tokens_for_hours, ADAPTER_RATE_HZ, ENCODER_RATE_HZ, SECONDS_PER_HOUR,
};
pub use io::{
    parse_corpus, parse_corpus_str, parse_corpus_with_jobs, serialize_dialogue, write_corpus, ParsedCorpus, Reject,
};
pub use validate::{validate_corpus, validate_dialogue, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Zh,
    En,
    Ja,
    Ko,
    Other,
}

impl Language {
    pub const ALL: [Language; 5] = [Language::Zh, Language::En, Language::Ja, Language::Ko, Language::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Zh => "zh",
            Language::En => "en",
            Language::Ja => "ja",
            Language::Ko => "ko",
            Language::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    RealLife,
    Synthetic,
    Podcast,
    Audiobook,
    ShortUtterance,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::RealLife,
        Source::Synthetic,
        Source::Podcast,
        Source::Audiobook,
        Source::ShortUtterance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::RealLife => "real_life",
            Source::Synthetic => "synthetic",
            Source::Podcast => "podcast",
            Source::Audiobook => "audiobook",
            Source::ShortUtterance => "short_utterance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::User => Role::Assistant,
            Role::Assistant => Role::User,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

/// Half-open `[start, end)` range, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// True when the two ranges share at least one position.
    pub fn overlaps(&self, other: &Span) -> bool {
        !self.is_empty() && !other.is_empty() && self.start < other.end && other.start < self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioTokenSpan {
    pub token_ids: Vec<u32>,
    pub frame_rate_hz: f64,
    pub duration_s: f64,
}

impl AudioTokenSpan {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// `round(duration_s * frame_rate_hz)`, the count the duration implies.
    pub fn expected_tokens(&self) -> i64 {
        (self.duration_s * self.frame_rate_hz).round() as i64
    }

    pub fn satisfies_duration_bound(&self) -> bool {
        self.duration_s.is_finite()
            && self.frame_rate_hz.is_finite()
            && (self.token_ids.len() as i64 - self.expected_tokens()).abs() <= 1
    }

    /// Content digest over the token ids, used for byte-exactness checks.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.token_ids.len() * 4 + 16);
        for t in &self.token_ids {
            bytes.extend_from_slice(&t.to_le_bytes());
        }
        bytes.extend_from_slice(&self.frame_rate_hz.to_le_bytes());
        bytes.extend_from_slice(&self.duration_s.to_le_bytes());
        crate::seed::sha256_hex(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentSpan {
    pub text_range: Span,
    pub audio_range: Span,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    LogicContradictionCorrectable,
    LogicContradictionSevere,
    MissingContext,
    Clean,
}

impl FlagKind {
    pub const ALL: [FlagKind; 4] = [
        FlagKind::LogicContradictionCorrectable,
        FlagKind::LogicContradictionSevere,
        FlagKind::MissingContext,
        FlagKind::Clean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::LogicContradictionCorrectable => "logic_contradiction_correctable",
            FlagKind::LogicContradictionSevere => "logic_contradiction_severe",
            FlagKind::MissingContext => "missing_context",
            FlagKind::Clean => "clean",
        }
    }
}

/// Upstream quality label. Spans are character offsets into the dialogue's
/// turn texts concatenated in turn order with no separator; see
/// [`Dialogue::locate_span`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityFlag {
    pub kind: FlagKind,
    #[serde(default)]
    pub spans: Vec<Span>,
}

impl QualityFlag {
    pub fn clean() -> Self {
        QualityFlag {
            kind: FlagKind::Clean,
            spans: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub role: Role,
    pub speaker_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioTokenSpan>,
    #[serde(default)]
    pub alignment: Vec<AlignmentSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<CaptionRecord>,
}

impl Turn {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Slice of the text by character range; `None` when out of bounds.
    pub fn text_slice(&self, range: Span) -> Option<&str> {
        char_slice(&self.text, range)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    pub id: String,
    pub language: Language,
    pub source: Source,
    #[serde(default)]
    pub quality_flags: BTreeSet<QualityFlag>,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn has_flag(&self, kind: FlagKind) -> bool {
        self.quality_flags.iter().any(|f| f.kind == kind)
    }

    /// Maps a dialogue-level character span onto per-turn local spans. A span
    /// crossing a turn boundary yields one piece per turn it touches.
    pub fn locate_span(&self, span: Span) -> Vec<(usize, Span)> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (i, t) in self.turns.iter().enumerate() {
            let len = t.char_len();
            let turn_span = Span::new(offset, offset + len);
            if span.overlaps(&turn_span) {
                let s = span.start.max(offset) - offset;
                let e = span.end.min(offset + len) - offset;
                out.push((i, Span::new(s, e)));
            }
            offset += len;
        }
        out
    }

    pub fn total_chars(&self) -> usize {
        self.turns.iter().map(Turn::char_len).sum()
    }

    pub fn audio_seconds(&self) -> f64 {
        self.turns
            .iter()
            .filter_map(|t| t.audio.as_ref())
            .map(|a| a.duration_s)
            .sum()
    }
}

/// Slices `text` by Unicode scalar-value offsets.
pub fn char_slice(text: &str, range: Span) -> Option<&str> {
    if range.start > range.end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let start = indices.nth(range.start)?;
    let end = if range.end == range.start {
        start
    } else {
        indices.nth(range.end - range.start - 1)?
    };
    Some(&text[start..end])
}
