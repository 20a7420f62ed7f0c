//! Talker sequence assembly.
//!
//! Every sequence has the shape
//!
//! ```text
//! REF_START <reference speech> REF_END (ROLE_x <block tokens>)+ EOS
//! ```
//!
//! The reference is speech from the same speaker taken from a different
//! sample, never the current one. Assistant blocks merge text and speech
//! tokens in a repeating `n_text:m_speech` pattern so speech can start from
//! partial text; user blocks carry their text followed by their speech.
//! Only assistant speech tokens carry loss.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AudioTokenSpan, Dialogue, Role, Source};
use crate::seed::record_rng;

pub const SEED_DOMAIN: &str = "talker";

/// First reserved special-token id; speech ids must stay below it and text
/// ids (Unicode scalar values) always do.
pub const SPECIAL_BASE: u32 = 0xFFFF_FF00;
pub const REGISTRY_VERSION: &str = "talker-special-v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TalkerError {
    #[error("speaker {speaker:?} has no reference segment outside sample {sample:?}")]
    NoReference { speaker: String, sample: String },
    #[error("{mode} mode: {reason}")]
    ModeMismatch { mode: Mode, reason: String },
    #[error("unknown mode {0:?}; expected dialogue, long_text or standard_sentence")]
    UnknownMode(String),
    #[error("speech token {id} collides with the reserved special range")]
    ReservedId { id: u32 },
    #[error("grammar violation at token {index}: {reason}")]
    Parse { index: usize, reason: String },
    #[error("invalid stream ratio: {0}")]
    Ratio(String),
    #[error("special token registry: {0}")]
    Registry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpecialToken {
    RefStart,
    RefEnd,
    RoleUser,
    RoleAssistant,
    TextShift,
    SpeechShift,
    Eos,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 7] = [
        SpecialToken::RefStart,
        SpecialToken::RefEnd,
        SpecialToken::RoleUser,
        SpecialToken::RoleAssistant,
        SpecialToken::TextShift,
        SpecialToken::SpeechShift,
        SpecialToken::Eos,
    ];

    pub fn id(self) -> u32 {
        SPECIAL_BASE + self as u32
    }

    pub fn from_id(id: u32) -> Option<SpecialToken> {
        SpecialToken::ALL.into_iter().find(|t| t.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            SpecialToken::RefStart => "REF_START",
            SpecialToken::RefEnd => "REF_END",
            SpecialToken::RoleUser => "ROLE_USER",
            SpecialToken::RoleAssistant => "ROLE_ASSISTANT",
            SpecialToken::TextShift => "TEXT_SHIFT",
            SpecialToken::SpeechShift => "SPEECH_SHIFT",
            SpecialToken::Eos => "EOS",
        }
    }

    fn role(role: Role) -> SpecialToken {
        match role {
            Role::User => SpecialToken::RoleUser,
            Role::Assistant => SpecialToken::RoleAssistant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: SpecialToken,
    pub id: u32,
}

/// Name-to-id map written next to talker outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokenRegistry {
    pub version: String,
    pub tokens: Vec<RegistryEntry>,
}

impl SpecialTokenRegistry {
    pub fn current() -> Self {
        SpecialTokenRegistry {
            version: REGISTRY_VERSION.to_string(),
            tokens: SpecialToken::ALL
                .into_iter()
                .map(|name| RegistryEntry { name, id: name.id() })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("registry serializes")
    }

    /// Parses a registry file and checks it matches this build's ids.
    pub fn check_json(json: &str) -> Result<Self, TalkerError> {
        let reg: SpecialTokenRegistry = serde_json::from_str(json).map_err(|e| TalkerError::Registry(e.to_string()))?;
        if reg != Self::current() {
            return Err(TalkerError::Registry(format!(
                "registry {} does not match {REGISTRY_VERSION}",
                reg.version
            )));
        }
        Ok(reg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Special,
    Text,
    Speech,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Dialogue,
    LongText,
    StandardSentence,
}

impl Mode {
    /// Default organization for a corpus source: conversations as dialogue,
    /// audiobooks as long text, everything else as standalone sentences.
    pub fn for_source(source: Source) -> Mode {
        match source {
            Source::RealLife | Source::Podcast => Mode::Dialogue,
            Source::Audiobook => Mode::LongText,
            Source::ShortUtterance | Source::Synthetic => Mode::StandardSentence,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dialogue => "dialogue",
            Mode::LongText => "long_text",
            Mode::StandardSentence => "standard_sentence",
        })
    }
}

impl FromStr for Mode {
    type Err = TalkerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "dialogue" => Ok(Mode::Dialogue),
            "long_text" => Ok(Mode::LongText),
            "standard_sentence" => Ok(Mode::StandardSentence),
            _ => Err(TalkerError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRatio {
    pub n_text: usize,
    pub m_speech: usize,
}

impl StreamRatio {
    pub fn new(n_text: usize, m_speech: usize) -> Result<Self, TalkerError> {
        if n_text == 0 || m_speech == 0 {
            return Err(TalkerError::Ratio(format!("{n_text}:{m_speech} has a zero side")));
        }
        Ok(StreamRatio { n_text, m_speech })
    }
}

impl Default for StreamRatio {
    fn default() -> Self {
        StreamRatio {
            n_text: 5,
            m_speech: 15,
        }
    }
}

/// Fixed ratio, or a ratio drawn per sample from inclusive ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioSpec {
    Fixed(StreamRatio),
    Uniform {
        text: (usize, usize),
        speech: (usize, usize),
    },
}

impl Default for RatioSpec {
    fn default() -> Self {
        RatioSpec::Fixed(StreamRatio::default())
    }
}

impl RatioSpec {
    fn resolve(&self, rng: &mut impl Rng) -> StreamRatio {
        match *self {
            RatioSpec::Fixed(r) => r,
            RatioSpec::Uniform { text, speech } => StreamRatio {
                n_text: rng.gen_range(text.0..=text.1),
                m_speech: rng.gen_range(speech.0..=speech.1),
            },
        }
    }
}

impl FromStr for RatioSpec {
    type Err = TalkerError;

    /// `5:15` for a fixed ratio, `1-5:3-15` for per-sample ranges.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TalkerError::Ratio(format!("cannot parse {s:?}; expected N:M or A-B:C-D"));
        let (t, m) = s.split_once(':').ok_or_else(bad)?;
        let range = |part: &str| -> Result<(usize, usize), TalkerError> {
            match part.split_once('-') {
                Some((a, b)) => Ok((
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                )),
                None => {
                    let v = part.trim().parse().map_err(|_| bad())?;
                    Ok((v, v))
                }
            }
        };
        let (t, m) = (range(t)?, range(m)?);
        if t.0 == 0 || m.0 == 0 || t.0 > t.1 || m.0 > m.1 {
            return Err(TalkerError::Ratio(format!("{s:?} has an empty or zero range")));
        }
        if t.0 == t.1 && m.0 == m.1 {
            Ok(RatioSpec::Fixed(StreamRatio::new(t.0, m.0)?))
        } else {
            Ok(RatioSpec::Uniform { text: t, speech: m })
        }
    }
}

/// Merges text and speech ids as `n_text` text, `m_speech` speech, repeated.
/// When one stream runs out the rest of the other follows contiguously.
pub fn stream_interleave(text_ids: &[u32], speech_ids: &[u32], ratio: StreamRatio) -> Vec<(Stream, u32)> {
    let mut out = Vec::with_capacity(text_ids.len() + speech_ids.len());
    let mut text = text_ids.chunks(ratio.n_text);
    let mut speech = speech_ids.chunks(ratio.m_speech);
    loop {
        let t = text.next();
        let s = speech.next();
        if t.is_none() && s.is_none() {
            break;
        }
        out.extend(t.into_iter().flatten().map(|&id| (Stream::Text, id)));
        out.extend(s.into_iter().flatten().map(|&id| (Stream::Speech, id)));
    }
    out
}

/// Text tokenization used for talker text streams: one id per Unicode
/// scalar value.
pub fn text_ids(text: &str) -> Vec<u32> {
    text.chars().map(u32::from).collect()
}

/// A candidate reference: one turn's audio.
#[derive(Debug, Clone, PartialEq)]
pub struct RefSegment {
    /// `<dialogue id>#<turn index>`.
    pub segment_id: String,
    pub sample_id: String,
    pub audio: AudioTokenSpan,
}

/// Speaker to candidate reference segments, sorted by segment id.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    by_speaker: HashMap<String, Vec<RefSegment>>,
}

impl CorpusIndex {
    pub fn build<'a>(dialogues: impl IntoIterator<Item = &'a Dialogue>) -> Self {
        let mut by_speaker: HashMap<String, Vec<RefSegment>> = HashMap::new();
        for d in dialogues {
            for (i, t) in d.turns.iter().enumerate() {
                if let Some(audio) = t.audio.as_ref().filter(|a| !a.is_empty()) {
                    by_speaker.entry(t.speaker_id.clone()).or_default().push(RefSegment {
                        segment_id: format!("{}#{i}", d.id),
                        sample_id: d.id.clone(),
                        audio: audio.clone(),
                    });
                }
            }
        }
        for v in by_speaker.values_mut() {
            v.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
        }
        CorpusIndex { by_speaker }
    }

    pub fn segments(&self, speaker_id: &str) -> &[RefSegment] {
        self.by_speaker.get(speaker_id).map_or(&[], Vec::as_slice)
    }
}

/// Picks a same-speaker segment from a sample other than `current_sample_id`,
/// uniformly at random under `seed`.
pub fn select_reference<'a>(
    index: &'a CorpusIndex,
    speaker_id: &str,
    current_sample_id: &str,
    seed: u64,
) -> Result<&'a RefSegment, TalkerError> {
    let mut rng = record_rng(seed, current_sample_id, "talker-reference");
    pick_reference(index, speaker_id, current_sample_id, &mut rng)
}

fn pick_reference<'a>(
    index: &'a CorpusIndex,
    speaker_id: &str,
    current_sample_id: &str,
    rng: &mut impl Rng,
) -> Result<&'a RefSegment, TalkerError> {
    let candidates: Vec<&RefSegment> = index
        .segments(speaker_id)
        .iter()
        .filter(|s| s.sample_id != current_sample_id)
        .collect();
    if candidates.is_empty() {
        return Err(TalkerError::NoReference {
            speaker: speaker_id.to_string(),
            sample: current_sample_id.to_string(),
        });
    }
    Ok(candidates[rng.gen_range(0..candidates.len())])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TalkerManifest {
    pub master_seed: u64,
    pub ratio: StreamRatio,
    pub reference_segment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TalkerSequence {
    pub sample_id: String,
    pub mode: Mode,
    pub tokens: Vec<(Stream, u32)>,
    #[serde(with = "bitstring")]
    pub speech_loss_mask: Vec<bool>,
    pub manifest: TalkerManifest,
}

mod bitstring {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&bits.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let s = String::deserialize(d)?;
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(serde::de::Error::custom("mask must be a 0/1 string")),
            })
            .collect()
    }
}

impl TalkerSequence {
    pub fn ids(&self) -> Vec<u32> {
        self.tokens.iter().map(|&(_, id)| id).collect()
    }
}

struct Block {
    role: Role,
    text: Vec<u32>,
    speech: Vec<u32>,
}

fn check_mode(d: &Dialogue, mode: Mode) -> Result<(), TalkerError> {
    let err = |reason: String| Err(TalkerError::ModeMismatch { mode, reason });
    if d.turns.is_empty() {
        return err("dialogue has no turns".into());
    }
    match mode {
        Mode::Dialogue => {
            let has = |r| d.turns.iter().any(|t| t.role == r);
            if !has(Role::User) || !has(Role::Assistant) {
                return err("needs both user and assistant turns".into());
            }
            let first = &d.turns[0].speaker_id;
            if d.turns.iter().all(|t| &t.speaker_id == first) {
                return err("needs at least two speakers".into());
            }
        }
        Mode::LongText => {
            let first = &d.turns[0].speaker_id;
            if let Some(t) = d.turns.iter().find(|t| &t.speaker_id != first) {
                return err(format!(
                    "expects a single speaker, found {first:?} and {:?}",
                    t.speaker_id
                ));
            }
        }
        Mode::StandardSentence => {}
    }
    Ok(())
}

/// Builds one talker sequence. `master_seed` drives reference choice and,
/// for ranged ratios, the per-sample ratio.
pub fn assemble(
    d: &Dialogue,
    mode: Mode,
    ratio: &RatioSpec,
    index: &CorpusIndex,
    master_seed: u64,
) -> Result<TalkerSequence, TalkerError> {
    check_mode(d, mode)?;
    let mut rng = record_rng(master_seed, &d.id, SEED_DOMAIN);
    let ratio = ratio.resolve(&mut rng);

    let audio_ids = |t: &crate::corpus::Turn| t.audio.as_ref().map(|a| a.token_ids.clone()).unwrap_or_default();
    let (target_speaker, blocks) = match mode {
        Mode::Dialogue => {
            let speaker = d
                .turns
                .iter()
                .find(|t| t.role == Role::Assistant)
                .map(|t| t.speaker_id.clone())
                .expect("checked by check_mode");
            let blocks = d
                .turns
                .iter()
                .map(|t| Block {
                    role: t.role,
                    text: text_ids(&t.text),
                    speech: audio_ids(t),
                })
                .collect::<Vec<_>>();
            (speaker, blocks)
        }
        Mode::LongText => {
            let mut block = Block {
                role: Role::Assistant,
                text: Vec::new(),
                speech: Vec::new(),
            };
            for t in &d.turns {
                block.text.extend(text_ids(&t.text));
                block.speech.extend(audio_ids(t));
            }
            (d.turns[0].speaker_id.clone(), vec![block])
        }
        Mode::StandardSentence => {
            let t = d.turns.last().expect("checked by check_mode");
            if t.audio.as_ref().is_none_or(|a| a.is_empty()) {
                return Err(TalkerError::ModeMismatch {
                    mode,
                    reason: "target utterance has no audio".into(),
                });
            }
            let block = Block {
                role: Role::Assistant,
                text: text_ids(&t.text),
                speech: audio_ids(t),
            };
            (t.speaker_id.clone(), vec![block])
        }
    };

    let reference = pick_reference(index, &target_speaker, &d.id, &mut rng)?;
    let n_tokens = 3 + reference.audio.len() + blocks.iter().map(|b| 1 + b.text.len() + b.speech.len()).sum::<usize>();
    let mut tokens = Vec::with_capacity(n_tokens);
    let mut mask = Vec::with_capacity(n_tokens);
    let mut push = |stream: Stream, id: u32, loss: bool| -> Result<(), TalkerError> {
        if stream == Stream::Speech && id >= SPECIAL_BASE {
            return Err(TalkerError::ReservedId { id });
        }
        tokens.push((stream, id));
        mask.push(loss);
        Ok(())
    };

    push(Stream::Special, SpecialToken::RefStart.id(), false)?;
    for &id in &reference.audio.token_ids {
        push(Stream::Speech, id, false)?;
    }
    push(Stream::Special, SpecialToken::RefEnd.id(), false)?;
    for b in &blocks {
        push(Stream::Special, SpecialToken::role(b.role).id(), false)?;
        let is_assistant = b.role == Role::Assistant;
        if is_assistant {
            for (stream, id) in stream_interleave(&b.text, &b.speech, ratio) {
                push(stream, id, stream == Stream::Speech)?;
            }
        } else {
            for &id in &b.text {
                push(Stream::Text, id, false)?;
            }
            for &id in &b.speech {
                push(Stream::Speech, id, false)?;
            }
        }
    }
    push(Stream::Special, SpecialToken::Eos.id(), false)?;

    Ok(TalkerSequence {
        sample_id: d.id.clone(),
        mode,
        tokens,
        speech_loss_mask: mask,
        manifest: TalkerManifest {
            master_seed,
            ratio,
            reference_segment: reference.segment_id.clone(),
        },
    })
}

/// Assembles a batch on the current rayon pool, in input order. `mode`
/// `None` picks [`Mode::for_source`] per dialogue.
pub fn assemble_batch(
    dialogues: &[Dialogue],
    mode: Option<Mode>,
    ratio: &RatioSpec,
    index: &CorpusIndex,
    master_seed: u64,
) -> Vec<Result<TalkerSequence, TalkerError>> {
    dialogues
        .par_iter()
        .map(|d| {
            assemble(
                d,
                mode.unwrap_or_else(|| Mode::for_source(d.source)),
                ratio,
                index,
                master_seed,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParsedBlock {
    pub role: Role,
    pub text_ids: Vec<u32>,
    pub speech_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParsedSequence {
    pub reference: Vec<u32>,
    pub blocks: Vec<ParsedBlock>,
}

/// Parses a token stream back into reference and role blocks.
pub fn parse_sequence(tokens: &[(Stream, u32)]) -> Result<ParsedSequence, TalkerError> {
    let err = |index: usize, reason: &str| TalkerError::Parse {
        index,
        reason: reason.to_string(),
    };
    let special = |i: usize| -> Result<Option<SpecialToken>, TalkerError> {
        let (stream, id) = tokens[i];
        match stream {
            Stream::Special => SpecialToken::from_id(id)
                .map(Some)
                .ok_or_else(|| err(i, "unknown special id")),
            _ => Ok(None),
        }
    };

    if tokens.is_empty() || special(0)? != Some(SpecialToken::RefStart) {
        return Err(err(0, "sequence must start with REF_START"));
    }
    let mut i = 1;
    let mut reference = Vec::new();
    loop {
        if i == tokens.len() {
            return Err(err(i, "missing REF_END"));
        }
        match (tokens[i].0, special(i)?) {
            (Stream::Speech, _) => reference.push(tokens[i].1),
            (_, Some(SpecialToken::RefEnd)) => break,
            (Stream::Text, _) => return Err(err(i, "text token inside reference")),
            (_, Some(_)) => return Err(err(i, "missing REF_END before this token")),
            (Stream::Special, None) => unreachable!(),
        }
        i += 1;
    }
    i += 1;

    let mut blocks: Vec<ParsedBlock> = Vec::new();
    loop {
        if i == tokens.len() {
            return Err(err(i, "missing EOS"));
        }
        match special(i)? {
            Some(SpecialToken::RoleUser) | Some(SpecialToken::RoleAssistant) => {
                let role = if special(i)? == Some(SpecialToken::RoleUser) {
                    Role::User
                } else {
                    Role::Assistant
                };
                blocks.push(ParsedBlock {
                    role,
                    text_ids: Vec::new(),
                    speech_ids: Vec::new(),
                });
            }
            Some(SpecialToken::Eos) => {
                if blocks.is_empty() {
                    return Err(err(i, "EOS before any role block"));
                }
                if i + 1 != tokens.len() {
                    return Err(err(i + 1, "tokens after EOS"));
                }
                break;
            }
            Some(_) => return Err(err(i, "unexpected special token in body")),
            None => {
                let block = blocks
                    .last_mut()
                    .ok_or_else(|| err(i, "content before first role token"))?;
                match tokens[i].0 {
                    Stream::Text => block.text_ids.push(tokens[i].1),
                    Stream::Speech => block.speech_ids.push(tokens[i].1),
                    Stream::Special => unreachable!(),
                }
            }
        }
        i += 1;
    }
    Ok(ParsedSequence { reference, blocks })
}

/// Recomputes which tokens should carry speech loss from the grammar and
/// compares with the stored mask.
pub fn mask_is_exact(seq: &TalkerSequence) -> bool {
    let mut role = None;
    let mut in_ref = false;
    if seq.tokens.len() != seq.speech_loss_mask.len() {
        return false;
    }
    seq.tokens.iter().zip(&seq.speech_loss_mask).all(|(&(stream, id), &m)| {
        match SpecialToken::from_id(id).filter(|_| stream == Stream::Special) {
            Some(SpecialToken::RefStart) => in_ref = true,
            Some(SpecialToken::RefEnd) => in_ref = false,
            Some(SpecialToken::RoleUser) => role = Some(Role::User),
            Some(SpecialToken::RoleAssistant) => role = Some(Role::Assistant),
            _ => {}
        }
        let want = stream == Stream::Speech && !in_ref && role == Some(Role::Assistant);
        want == m
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Language, Turn};
    use std::collections::BTreeSet;

    fn turn(role: Role, speaker: &str, text: &str, speech: std::ops::Range<u32>) -> Turn {
        let n = speech.len();
        Turn {
            role,
            speaker_id: speaker.into(),
            text: text.into(),
            audio: (n > 0).then(|| AudioTokenSpan {
                token_ids: speech.collect(),
                frame_rate_hz: 12.5,
                duration_s: n as f64 / 12.5,
            }),
            alignment: vec![],
            caption: None,
        }
    }

    fn dialogue(id: &str, source: Source, turns: Vec<Turn>) -> Dialogue {
        Dialogue {
            id: id.into(),
            language: Language::En,
            source,
            quality_flags: BTreeSet::new(),
            turns,
        }
    }

    fn ids(r: std::ops::RangeInclusive<u32>) -> Vec<u32> {
        r.collect()
    }

    #[test]
    fn single_block_when_ratio_covers_everything() {
        let out = stream_interleave(&ids(1..=5), &ids(101..=115), StreamRatio::new(5, 15).unwrap());
        let expect: Vec<_> = ids(1..=5)
            .into_iter()
            .map(|i| (Stream::Text, i))
            .chain(ids(101..=115).into_iter().map(|i| (Stream::Speech, i)))
            .collect();
        assert_eq!(out, expect);
    }

    #[test]
    fn two_rounds_of_five_and_fifteen() {
        let out = stream_interleave(&ids(1..=10), &ids(101..=130), StreamRatio::new(5, 15).unwrap());
        let t = |r: std::ops::RangeInclusive<u32>| r.map(|i| (Stream::Text, i)).collect::<Vec<_>>();
        let s = |r: std::ops::RangeInclusive<u32>| r.map(|i| (Stream::Speech, i)).collect::<Vec<_>>();
        let expect = [t(1..=5), s(101..=115), t(6..=10), s(116..=130)].concat();
        assert_eq!(out, expect);
    }

    #[test]
    fn empty_text_passes_speech_through() {
        let out = stream_interleave(&[], &ids(1..=7), StreamRatio::default());
        assert_eq!(
            out,
            ids(1..=7).into_iter().map(|i| (Stream::Speech, i)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn reference_forced_choice_and_singleton() {
        let a = dialogue("A", Source::RealLife, vec![turn(Role::User, "s1", "x", 0..3)]);
        let b = dialogue("B", Source::RealLife, vec![turn(Role::User, "s1", "y", 10..13)]);
        let c = dialogue("C", Source::RealLife, vec![turn(Role::User, "solo", "z", 0..3)]);
        let idx = CorpusIndex::build([&a, &b, &c]);
        for seed in 0..20 {
            assert_eq!(select_reference(&idx, "s1", "A", seed).unwrap().segment_id, "B#0");
        }
        assert!(matches!(
            select_reference(&idx, "solo", "C", 0),
            Err(TalkerError::NoReference { .. })
        ));
    }

    fn corpus() -> (Vec<Dialogue>, CorpusIndex) {
        let main = dialogue(
            "main",
            Source::RealLife,
            vec![
                turn(Role::User, "u", "hi", 0..4),
                turn(Role::Assistant, "a", "hello", 10..20),
                turn(Role::User, "u", "how", 30..34),
                turn(Role::Assistant, "a", "fine", 40..48),
            ],
        );
        let other = dialogue(
            "other",
            Source::ShortUtterance,
            vec![
                turn(Role::User, "a", "ref", 500..506),
                turn(Role::Assistant, "u", "r", 600..602),
            ],
        );
        let idx = CorpusIndex::build([&main, &other]);
        (vec![main, other], idx)
    }

    #[test]
    fn dialogue_mode_has_alternating_role_tokens() {
        let (ds, idx) = corpus();
        let seq = assemble(&ds[0], Mode::Dialogue, &RatioSpec::default(), &idx, 1).unwrap();
        let roles: Vec<_> = seq
            .tokens
            .iter()
            .filter(|&&(s, _)| s == Stream::Special)
            .map(|&(_, id)| SpecialToken::from_id(id).unwrap())
            .filter(|t| matches!(t, SpecialToken::RoleUser | SpecialToken::RoleAssistant))
            .collect();
        assert_eq!(
            roles,
            [
                SpecialToken::RoleUser,
                SpecialToken::RoleAssistant,
                SpecialToken::RoleUser,
                SpecialToken::RoleAssistant
            ]
        );
        assert_eq!(seq.manifest.reference_segment, "other#0");
        assert!(mask_is_exact(&seq));
        let masked = seq.speech_loss_mask.iter().filter(|&&m| m).count();
        assert_eq!(masked, 10 + 8);
    }

    #[test]
    fn standard_sentence_layout() {
        let (mut ds, idx) = corpus();
        // zero-length text
        ds[1].turns[1].text.clear();
        let seq = assemble(&ds[1], Mode::StandardSentence, &RatioSpec::default(), &idx, 0);
        // speaker "u" has segments in "main" only, which is a different sample
        let seq = seq.unwrap();
        let mut expect = vec![(Stream::Special, SpecialToken::RefStart.id())];
        let reference = idx
            .segments("u")
            .iter()
            .find(|s| s.segment_id == seq.manifest.reference_segment)
            .unwrap();
        assert_eq!(reference.sample_id, "main");
        expect.extend(reference.audio.token_ids.iter().map(|&i| (Stream::Speech, i)));
        expect.push((Stream::Special, SpecialToken::RefEnd.id()));
        expect.push((Stream::Special, SpecialToken::RoleAssistant.id()));
        expect.extend((600..602).map(|i| (Stream::Speech, i)));
        expect.push((Stream::Special, SpecialToken::Eos.id()));
        assert_eq!(seq.tokens, expect);
        let parsed = parse_sequence(&seq.tokens).unwrap();
        assert_eq!(parsed.blocks.len(), 1);
    }

    #[test]
    fn empty_dialogue_is_rejected() {
        let (_, idx) = corpus();
        let d = dialogue("e", Source::RealLife, vec![]);
        for mode in [Mode::Dialogue, Mode::LongText, Mode::StandardSentence] {
            assert!(matches!(
                assemble(&d, mode, &RatioSpec::default(), &idx, 0),
                Err(TalkerError::ModeMismatch { .. })
            ));
        }
    }

    #[test]
    fn long_text_requires_one_speaker() {
        let (ds, idx) = corpus();
        let err = assemble(&ds[0], Mode::LongText, &RatioSpec::default(), &idx, 0).unwrap_err();
        assert!(matches!(
            err,
            TalkerError::ModeMismatch {
                mode: Mode::LongText,
                ..
            }
        ));
    }

    #[test]
    fn missing_ref_end_reported_at_first_role_token() {
        let (ds, idx) = corpus();
        let seq = assemble(&ds[0], Mode::Dialogue, &RatioSpec::default(), &idx, 0).unwrap();
        let mut toks = seq.tokens.clone();
        let ref_end = toks
            .iter()
            .position(|&(_, id)| id == SpecialToken::RefEnd.id())
            .unwrap();
        toks.remove(ref_end);
        match parse_sequence(&toks) {
            Err(TalkerError::Parse { index, .. }) => assert_eq!(index, ref_end),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimal_sequence_parses_to_one_block() {
        let toks = vec![
            (Stream::Special, SpecialToken::RefStart.id()),
            (Stream::Special, SpecialToken::RefEnd.id()),
            (Stream::Special, SpecialToken::RoleAssistant.id()),
            (Stream::Special, SpecialToken::Eos.id()),
        ];
        let p = parse_sequence(&toks).unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert!(p.reference.is_empty());
    }

    #[test]
    fn reserved_speech_ids_are_rejected() {
        let (mut ds, _) = corpus();
        ds[0].turns[1].audio.as_mut().unwrap().token_ids[0] = SPECIAL_BASE + 1;
        let idx = CorpusIndex::build(&ds);
        assert!(matches!(
            assemble(&ds[0], Mode::Dialogue, &RatioSpec::default(), &idx, 0),
            Err(TalkerError::ReservedId { .. })
        ));
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(
            "5:15".parse::<RatioSpec>().unwrap(),
            RatioSpec::Fixed(StreamRatio::new(5, 15).unwrap())
        );
        assert_eq!(
            "1-5:3-15".parse::<RatioSpec>().unwrap(),
            RatioSpec::Uniform {
                text: (1, 5),
                speech: (3, 15)
            }
        );
        assert!("0:3".parse::<RatioSpec>().is_err());
        assert!("5".parse::<RatioSpec>().is_err());
    }

    #[test]
    fn registry_is_stable() {
        let json = SpecialTokenRegistry::current().to_json();
        assert_eq!(
            json,
            r#"{"version":"talker-special-v1","tokens":[{"name":"REF_START","id":4294967040},{"name":"REF_END","id":4294967041},{"name":"ROLE_USER","id":4294967042},{"name":"ROLE_ASSISTANT","id":4294967043},{"name":"TEXT_SHIFT","id":4294967044},{"name":"SPEECH_SHIFT","id":4294967045},{"name":"EOS","id":4294967046}]}"#
        );
        assert!(SpecialTokenRegistry::check_json(&json).is_ok());
        assert!(SpecialTokenRegistry::check_json(&json.replace("4294967046", "7")).is_err());
    }
}
