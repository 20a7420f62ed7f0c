use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Dialogue, FlagKind, Role, Turn};
use crate::caption::{validate_caption, Taxonomy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Path to the offending field, e.g. `turns[1].alignment[2].text_range`.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub(crate) fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn extend_prefixed(&mut self, prefix: &str, other: ValidationReport) {
        for v in other.violations {
            self.push(format!("{prefix}.{}", v.path), v.message);
        }
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

/// Checks every dialogue, turn, audio, alignment, flag and caption invariant.
/// Never fails; an empty report means the dialogue is valid.
pub fn validate_dialogue(d: &Dialogue) -> ValidationReport {
    validate_dialogue_with(d, Taxonomy::bundled())
}

pub(crate) fn validate_dialogue_with(d: &Dialogue, taxonomy: &Taxonomy) -> ValidationReport {
    let mut r = ValidationReport::default();
    if d.id.is_empty() {
        r.push("id", "dialogue id is empty");
    }
    if d.turns.is_empty() {
        r.push("turns", "dialogue has no turns");
    }
    let mut expected = Role::User;
    for (i, t) in d.turns.iter().enumerate() {
        if t.role != expected {
            r.push(
                format!("turns[{i}].role"),
                format!("role alternation violated: expected {expected}, found {}", t.role),
            );
        }
        expected = t.role.other();
        validate_turn(&mut r, i, t, taxonomy);
    }

    let total = d.total_chars();
    let has_clean = d.has_flag(FlagKind::Clean);
    for (k, flag) in d.quality_flags.iter().enumerate() {
        let path = format!("quality_flags[{k}]");
        match flag.kind {
            FlagKind::LogicContradictionSevere if flag.spans.is_empty() => {
                r.push(&path, "severe contradiction flag carries no spans");
            }
            FlagKind::Clean if !flag.spans.is_empty() => {
                r.push(&path, "clean flag must not carry spans");
            }
            FlagKind::Clean => {}
            _ if has_clean => {
                r.push(&path, format!("{} flag co-occurs with clean", flag.kind.as_str()));
            }
            _ => {}
        }
        for (j, s) in flag.spans.iter().enumerate() {
            if s.is_empty() || s.end > total {
                r.push(
                    format!("{path}.spans[{j}]"),
                    format!("span {s} is empty or exceeds dialogue text length {total}"),
                );
            }
        }
    }
    r
}

fn validate_turn(r: &mut ValidationReport, i: usize, t: &Turn, taxonomy: &Taxonomy) {
    let p = format!("turns[{i}]");
    if t.speaker_id.is_empty() {
        r.push(format!("{p}.speaker_id"), "speaker id is empty");
    }
    let n_tokens = t.audio.as_ref().map(|a| a.token_ids.len());
    if let Some(a) = &t.audio {
        if !(a.frame_rate_hz > 0.0) || !a.frame_rate_hz.is_finite() {
            r.push(
                format!("{p}.audio.frame_rate_hz"),
                format!("frame rate {} is not positive", a.frame_rate_hz),
            );
        }
        if !(a.duration_s >= 0.0) || !a.duration_s.is_finite() {
            r.push(
                format!("{p}.audio.duration_s"),
                format!("duration {} is negative", a.duration_s),
            );
        } else if !a.satisfies_duration_bound() {
            r.push(
                format!("{p}.audio.token_ids"),
                format!(
                    "{} tokens but duration {}s at {} Hz implies {}",
                    a.token_ids.len(),
                    a.duration_s,
                    a.frame_rate_hz,
                    a.expected_tokens()
                ),
            );
        }
    }

    let text_len = t.char_len();
    let mut prev: Option<(usize, &super::AlignmentSpan)> = None;
    for (j, span) in t.alignment.iter().enumerate() {
        let sp = format!("{p}.alignment[{j}]");
        if span.index != j {
            r.push(
                format!("{sp}.index"),
                format!("index {} out of sequence, expected {j}", span.index),
            );
        }
        if span.text_range.is_empty() {
            r.push(
                format!("{sp}.text_range"),
                format!("text range {} is empty", span.text_range),
            );
        }
        if span.text_range.end > text_len {
            r.push(
                format!("{sp}.text_range"),
                format!("text range {} exceeds text length {text_len}", span.text_range),
            );
        }
        if span.audio_range.start > span.audio_range.end {
            r.push(
                format!("{sp}.audio_range"),
                format!("audio range {} is reversed", span.audio_range),
            );
        }
        match n_tokens {
            Some(n) if span.audio_range.end > n => r.push(
                format!("{sp}.audio_range"),
                format!("audio range {} exceeds {n} audio tokens", span.audio_range),
            ),
            None if !span.audio_range.is_empty() => r.push(
                format!("{sp}.audio_range"),
                format!("audio range {} set on a turn without audio", span.audio_range),
            ),
            _ => {}
        }
        match prev {
            None if span.text_range.start != 0 => r.push(
                format!("{sp}.text_range"),
                format!("first span starts at {} instead of 0", span.text_range.start),
            ),
            Some((k, q)) => {
                if span.text_range.overlaps(&q.text_range) || span.text_range.start < q.text_range.start {
                    r.push(
                        format!("{sp}.text_range"),
                        format!(
                            "text range {} overlaps alignment[{k}] {}",
                            span.text_range, q.text_range
                        ),
                    );
                } else if span.text_range.start != q.text_range.end {
                    r.push(
                        format!("{sp}.text_range"),
                        format!(
                            "gap between alignment[{k}] ending at {} and start {}",
                            q.text_range.end, span.text_range.start
                        ),
                    );
                }
                if span.audio_range.start < q.audio_range.end {
                    r.push(
                        format!("{sp}.audio_range"),
                        format!(
                            "audio range {} overlaps or precedes alignment[{k}] {}",
                            span.audio_range, q.audio_range
                        ),
                    );
                }
            }
            _ => {}
        }
        prev = Some((j, span));
    }
    if let Some((j, last)) = prev {
        if last.text_range.end != text_len {
            r.push(
                format!("{p}.alignment[{j}].text_range"),
                format!(
                    "spans end at {} but text has {text_len} characters",
                    last.text_range.end
                ),
            );
        }
    }

    if let Some(c) = &t.caption {
        r.extend_prefixed(&format!("{p}.caption"), validate_caption(c, taxonomy));
    }
}

/// Per-dialogue reports plus corpus-level checks (id uniqueness).
pub fn validate_corpus(dialogues: &[Dialogue]) -> Vec<(String, ValidationReport)> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::new();
    for (n, d) in dialogues.iter().enumerate() {
        let mut r = validate_dialogue(d);
        if let Some(first) = seen.insert(d.id.as_str(), n) {
            r.push("id", format!("duplicate id, first seen at record {}", first + 1));
        }
        if !r.is_empty() {
            out.push((d.id.clone(), r));
        }
    }
    out
}
