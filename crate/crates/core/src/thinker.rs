//! Thinker sequence compilation with sentence-level modality interleaving.
//!
//! User turns are rendered whole, as text or speech. Assistant turns are
//! split at their alignment spans and each segment draws its modality,
//! except the last, which is always text. Loss targets are exactly the
//! assistant text elements that do not overlap a span masked by cleaning.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{char_slice, Dialogue, Role, Span, Turn};
use crate::seed::{config_hash, record_rng};

pub const SEED_DOMAIN: &str = "thinker";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThinkerError {
    #[error("dialogue {dialogue}: turn {turn} drew speech but has no audio")]
    MissingAudio { dialogue: String, turn: usize },
    #[error("turn has no alignment spans; sub-sentence segments must come from upstream alignment")]
    MissingAlignment,
    #[error("alignment span {0} is out of range for its turn")]
    BadSpan(usize),
    #[error("dialogue {dialogue}: turn {turn} alignment span {span} is out of range")]
    BadAlignment { dialogue: String, turn: usize, span: usize },
    #[error("turn is not an assistant turn")]
    NotAssistant,
    #[error("invalid policy: {0}")]
    Policy(String),
}

/// How user-side modality draws are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserDraw {
    PerTurn,
    PerDialogue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterleavePolicy {
    pub p_user_speech: f64,
    pub p_assistant_segment_speech: f64,
    pub final_segment_text: bool,
    pub user_draw: UserDraw,
}

impl Default for InterleavePolicy {
    fn default() -> Self {
        InterleavePolicy {
            p_user_speech: 0.5,
            p_assistant_segment_speech: 0.5,
            final_segment_text: true,
            user_draw: UserDraw::PerTurn,
        }
    }
}

impl InterleavePolicy {
    pub fn new(p_user_speech: f64, p_assistant_segment_speech: f64) -> Result<Self, ThinkerError> {
        let p = InterleavePolicy {
            p_user_speech,
            p_assistant_segment_speech,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ThinkerError> {
        for (name, v) in [
            ("p_user_speech", self.p_user_speech),
            ("p_assistant_segment_speech", self.p_assistant_segment_speech),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ThinkerError::Policy(format!("{name} = {v} is not a probability")));
            }
        }
        if !self.final_segment_text {
            return Err(ThinkerError::Policy("final_segment_text must be true".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Speech,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Text(String),
    Speech(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, usize, usize)", into = "(String, usize, usize)")]
pub struct Origin {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub segment_index: usize,
}

impl From<(String, usize, usize)> for Origin {
    fn from((dialogue_id, turn_index, segment_index): (String, usize, usize)) -> Self {
        Origin {
            dialogue_id,
            turn_index,
            segment_index,
        }
    }
}

impl From<Origin> for (String, usize, usize) {
    fn from(o: Origin) -> Self {
        (o.dialogue_id, o.turn_index, o.segment_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub modality: Modality,
    pub role: Role,
    pub payload: Payload,
    pub loss_target: bool,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub master_seed: u64,
    pub policy: InterleavePolicy,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub dialogue_id: String,
    pub elements: Vec<Element>,
    #[serde(skip)]
    pub manifest: Option<SequenceManifest>,
}

/// One assistant sub-sentence: its text slice and audio-token slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment<'a> {
    pub index: usize,
    pub text_range: Span,
    pub text: &'a str,
    /// `None` when the turn carries no audio.
    pub audio: Option<&'a [u32]>,
}

/// Splits an assistant turn at its alignment spans.
pub fn segment_assistant(turn: &Turn) -> Result<Vec<Segment<'_>>, ThinkerError> {
    if turn.role != Role::Assistant {
        return Err(ThinkerError::NotAssistant);
    }
    if turn.alignment.is_empty() {
        return Err(ThinkerError::MissingAlignment);
    }
    segments_of(turn).map_err(ThinkerError::BadSpan)
}

fn segments_of(turn: &Turn) -> Result<Vec<Segment<'_>>, usize> {
    turn.alignment
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let text = char_slice(&turn.text, a.text_range).ok_or(i)?;
            let audio = match &turn.audio {
                Some(au) => Some(au.token_ids.get(a.audio_range.start..a.audio_range.end).ok_or(i)?),
                None => None,
            };
            Ok(Segment {
                index: i,
                text_range: a.text_range,
                text,
                audio,
            })
        })
        .collect()
}

/// Text ranges excluded from loss, per turn index.
pub type MaskedSpans = [(usize, Span)];

/// Compiles one dialogue with no cleaning masks.
pub fn interleave_dialogue(
    d: &Dialogue,
    policy: &InterleavePolicy,
    master_seed: u64,
) -> Result<TrainingSequence, ThinkerError> {
    interleave_masked(d, &[], policy, master_seed)
}

/// Compiles one dialogue; assistant text elements overlapping `masked` are
/// kept in the sequence but never marked as loss targets.
pub fn interleave_masked(
    d: &Dialogue,
    masked: &MaskedSpans,
    policy: &InterleavePolicy,
    master_seed: u64,
) -> Result<TrainingSequence, ThinkerError> {
    policy.validate()?;
    let mut rng = record_rng(master_seed, &d.id, SEED_DOMAIN);
    let mut elements = Vec::with_capacity(d.turns.len() * 2);
    let dialogue_user_speech = match policy.user_draw {
        UserDraw::PerDialogue => Some(rng.gen_bool(policy.p_user_speech)),
        UserDraw::PerTurn => None,
    };
    let origin = |turn_index, segment_index| Origin {
        dialogue_id: d.id.clone(),
        turn_index,
        segment_index,
    };

    for (ti, turn) in d.turns.iter().enumerate() {
        match turn.role {
            Role::User => {
                let speech = dialogue_user_speech.unwrap_or_else(|| rng.gen_bool(policy.p_user_speech));
                let payload = if speech {
                    let audio = turn.audio.as_ref().ok_or_else(|| ThinkerError::MissingAudio {
                        dialogue: d.id.clone(),
                        turn: ti,
                    })?;
                    Payload::Speech(audio.token_ids.clone())
                } else {
                    Payload::Text(turn.text.clone())
                };
                elements.push(Element {
                    modality: if speech { Modality::Speech } else { Modality::Text },
                    role: Role::User,
                    payload,
                    loss_target: false,
                    origin: origin(ti, 0),
                });
            }
            Role::Assistant => {
                // An unaligned turn is one whole-turn segment; being final it
                // is always text and needs no audio.
                let segments = if turn.alignment.is_empty() {
                    vec![Segment {
                        index: 0,
                        text_range: Span::new(0, turn.char_len()),
                        text: turn.text.as_str(),
                        audio: turn.audio.as_ref().map(|a| a.token_ids.as_slice()),
                    }]
                } else {
                    segments_of(turn).map_err(|span| ThinkerError::BadAlignment {
                        dialogue: d.id.clone(),
                        turn: ti,
                        span,
                    })?
                };
                let last = segments.len() - 1;
                for seg in &segments {
                    let speech = seg.index != last && rng.gen_bool(policy.p_assistant_segment_speech);
                    let element = if speech {
                        let audio = seg.audio.ok_or_else(|| ThinkerError::MissingAudio {
                            dialogue: d.id.clone(),
                            turn: ti,
                        })?;
                        Element {
                            modality: Modality::Speech,
                            role: Role::Assistant,
                            payload: Payload::Speech(audio.to_vec()),
                            loss_target: false,
                            origin: origin(ti, seg.index),
                        }
                    } else {
                        let is_masked = masked
                            .iter()
                            .any(|(mt, span)| *mt == ti && span.overlaps(&seg.text_range));
                        Element {
                            modality: Modality::Text,
                            role: Role::Assistant,
                            payload: Payload::Text(seg.text.to_string()),
                            loss_target: !is_masked,
                            origin: origin(ti, seg.index),
                        }
                    };
                    elements.push(element);
                }
            }
        }
    }
    Ok(TrainingSequence {
        dialogue_id: d.id.clone(),
        elements,
        manifest: Some(SequenceManifest {
            master_seed,
            policy: *policy,
            config_hash: config_hash(policy),
        }),
    })
}

/// Loss-bearing elements in sequence order.
pub fn extract_loss_targets(seq: &TrainingSequence) -> Vec<(Origin, String)> {
    seq.elements
        .iter()
        .filter(|e| e.loss_target)
        .filter_map(|e| match &e.payload {
            Payload::Text(t) => Some((e.origin.clone(), t.clone())),
            Payload::Speech(_) => None,
        })
        .collect()
}

/// Input to a batch compile: a dialogue and its cleaning masks.
#[derive(Debug, Clone, Copy)]
pub struct CompileItem<'a> {
    pub dialogue: &'a Dialogue,
    pub masked: &'a MaskedSpans,
}

/// Compiles a batch on the current rayon pool. Output order follows input
/// order and is independent of the number of workers.
pub fn compile_batch(
    items: &[CompileItem<'_>],
    policy: &InterleavePolicy,
    master_seed: u64,
) -> Vec<Result<TrainingSequence, ThinkerError>> {
    items
        .par_iter()
        .map(|it| interleave_masked(it.dialogue, it.masked, policy, master_seed))
        .collect()
}

/// Header line of a thinker output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHeader {
    pub kind: String,
    pub master_seed: u64,
    pub policy: InterleavePolicy,
    pub config_hash: String,
    pub counts: std::collections::BTreeMap<String, u64>,
}
