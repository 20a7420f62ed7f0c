//! Three-branch cleaning and augmentation.
//!
//! Dialogues are routed by their quality flags:
//!
//! | flag                              | branch                    |
//! |-----------------------------------|---------------------------|
//! | `logic_contradiction_correctable` | logic correction          |
//! | `logic_contradiction_severe`      | information preservation  |
//! | `missing_context`                 | context completion        |
//! | `clean` / none                    | passthrough               |
//!
//! Co-occurring flags resolve severe > missing_context > correctable.
//! Client failures defer the dialogue untouched; nothing is ever partially
//! mutated.

mod client;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{validate_dialogue, AlignmentSpan, Dialogue, FlagKind, Role, Span, Turn, ValidationReport};
use crate::seed::derive_seed;

pub use client::{
    ClientError, ClientRequest, ClientResponse, CorrectMode, CorrectorClient, HttpClient, HttpSettings, MockCorrector,
    MockSynth, SynthClient,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CleaningError {
    #[error("dialogue {0}: severe contradiction flag carries no spans")]
    MissingSpans(String),
    #[error("dialogue {id}: routed to {actual:?}, not {expected:?}")]
    WrongBranch {
        id: String,
        expected: Branch,
        actual: Branch,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    LogicCorrection,
    InformationPreservation,
    ContextCompletion,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    /// Attempts per client call before deferring.
    pub retries: u32,
    /// Give backfilled turns synthesized audio.
    pub synthesize_backfill: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            retries: 3,
            synthesize_backfill: true,
        }
    }
}

/// One client call that produced (or failed to produce) a field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub call_id: String,
    pub operation: String,
    /// Field written from the response, e.g. `turns[3].audio`.
    pub target: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    Completed,
    Deferred {
        operation: String,
        attempts: u32,
        error: String,
    },
    Rejected {
        report: ValidationReport,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningOutcome {
    pub branch: Branch,
    pub status: Status,
    pub dialogue: Dialogue,
    pub masked_spans: Vec<(usize, Span)>,
    pub provenance: Vec<ProvenanceEntry>,
}

impl CleaningOutcome {
    fn completed(branch: Branch, dialogue: Dialogue) -> Self {
        CleaningOutcome {
            branch,
            status: Status::Completed,
            dialogue,
            masked_spans: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == Status::Completed
    }
}

/// Branch for a dialogue's flags.
pub fn route(d: &Dialogue) -> Branch {
    if d.has_flag(FlagKind::LogicContradictionSevere) {
        Branch::InformationPreservation
    } else if d.has_flag(FlagKind::MissingContext) {
        Branch::ContextCompletion
    } else if d.has_flag(FlagKind::LogicContradictionCorrectable) {
        Branch::LogicCorrection
    } else {
        Branch::Passthrough
    }
}

fn expect_branch(d: &Dialogue, expected: Branch) -> Result<(), CleaningError> {
    let actual = route(d);
    if actual != expected {
        return Err(CleaningError::WrongBranch {
            id: d.id.clone(),
            expected,
            actual,
        });
    }
    Ok(())
}

fn call_id(seed: u64, d: &Dialogue, target: &str, op: &str) -> String {
    format!(
        "{:016x}",
        derive_seed(seed, &format!("{}|{target}|{op}", d.id), "cleaning")
    )
}

struct Deferral {
    operation: String,
    attempts: u32,
    error: ClientError,
}

fn with_retry<T>(retries: u32, op: &str, mut f: impl FnMut() -> Result<T, ClientError>) -> Result<(T, u32), Deferral> {
    let max = retries.max(1);
    let mut last = None;
    for attempt in 1..=max {
        match f() {
            Ok(v) => return Ok((v, attempt)),
            Err(e) => last = Some(e),
        }
    }
    Err(Deferral {
        operation: op.to_string(),
        attempts: max,
        error: last.expect("at least one attempt"),
    })
}

fn deferred(branch: Branch, d: &Dialogue, provenance: Vec<ProvenanceEntry>, def: Deferral) -> CleaningOutcome {
    CleaningOutcome {
        branch,
        status: Status::Deferred {
            operation: def.operation,
            attempts: def.attempts,
            error: def.error.to_string(),
        },
        dialogue: d.clone(),
        masked_spans: Vec::new(),
        provenance,
    }
}

fn single_span_alignment(text: &str, n_tokens: usize) -> Vec<AlignmentSpan> {
    let n = text.chars().count();
    if n == 0 {
        return Vec::new();
    }
    vec![AlignmentSpan {
        text_range: Span::new(0, n),
        audio_range: Span::new(0, n_tokens),
        index: 0,
    }]
}

/// Turns a correctable flag points at: those its spans touch, or every
/// assistant turn when the flag carries no spans.
fn correctable_turns(d: &Dialogue) -> Vec<usize> {
    let mut turns = Vec::new();
    for f in d
        .quality_flags
        .iter()
        .filter(|f| f.kind == FlagKind::LogicContradictionCorrectable)
    {
        if f.spans.is_empty() {
            turns.extend(
                d.turns
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.role == Role::Assistant)
                    .map(|(i, _)| i),
            );
        } else {
            for s in &f.spans {
                turns.extend(d.locate_span(*s).into_iter().map(|(i, _)| i));
            }
        }
    }
    turns.sort_unstable();
    turns.dedup();
    turns
}

/// Re-writes flagged turns with corrected text and re-synthesized audio.
/// Corrected turns get a whole-turn alignment span and lose their caption,
/// which described the original recording.
pub fn apply_logic_correction(
    d: &Dialogue,
    corrector: &dyn CorrectorClient,
    synth: &dyn SynthClient,
    config: &CleaningConfig,
    seed: u64,
) -> Result<CleaningOutcome, CleaningError> {
    expect_branch(d, Branch::LogicCorrection)?;
    let branch = Branch::LogicCorrection;
    let mut provenance = Vec::new();
    let mut replacements = Vec::new();
    for ti in correctable_turns(d) {
        let turn = &d.turns[ti];
        let target = format!("turns[{ti}].text");
        let id = call_id(seed, d, &target, "correct");
        let (text, attempts) = match with_retry(config.retries, "correct", || {
            corrector.correct(&turn.text, d, &id).and_then(|t| {
                if t.is_empty() {
                    Err(ClientError::Malformed("empty correction".into()))
                } else {
                    Ok(t)
                }
            })
        }) {
            Ok(v) => v,
            Err(def) => return Ok(deferred(branch, d, provenance, def)),
        };
        provenance.push(ProvenanceEntry {
            call_id: id,
            operation: "correct".into(),
            target,
            attempts,
        });

        let target = format!("turns[{ti}].audio");
        let id = call_id(seed, d, &target, "synthesize");
        let (audio, attempts) = match with_retry(config.retries, "synthesize", || {
            synth.synthesize(&text, &turn.speaker_id, &id)
        }) {
            Ok(v) => v,
            Err(def) => return Ok(deferred(branch, d, provenance, def)),
        };
        provenance.push(ProvenanceEntry {
            call_id: id,
            operation: "synthesize".into(),
            target,
            attempts,
        });
        replacements.push((ti, text, audio));
    }

    let mut out = d.clone();
    for (ti, text, audio) in replacements {
        let t = &mut out.turns[ti];
        t.alignment = single_span_alignment(&text, audio.len());
        t.text = text;
        t.audio = Some(audio);
        t.caption = None;
    }
    Ok(finish(branch, out, Vec::new(), provenance))
}

/// Masked spans implied by a dialogue's severe-contradiction flags, mapped
/// onto turns.
pub fn masks_for(d: &Dialogue) -> Vec<(usize, Span)> {
    let mut out: Vec<(usize, Span)> = d
        .quality_flags
        .iter()
        .filter(|f| f.kind == FlagKind::LogicContradictionSevere)
        .flat_map(|f| f.spans.iter().flat_map(|s| d.locate_span(*s)))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Keeps text and audio byte-identical and records the flagged spans as
/// excluded from loss.
pub fn apply_masking(d: &Dialogue) -> Result<CleaningOutcome, CleaningError> {
    expect_branch(d, Branch::InformationPreservation)?;
    let severe = d
        .quality_flags
        .iter()
        .filter(|f| f.kind == FlagKind::LogicContradictionSevere);
    if severe.clone().any(|f| f.spans.is_empty()) {
        return Err(CleaningError::MissingSpans(d.id.clone()));
    }
    let masked = masks_for(d);
    if masked.is_empty() {
        return Err(CleaningError::MissingSpans(d.id.clone()));
    }
    let mut outcome = CleaningOutcome::completed(Branch::InformationPreservation, d.clone());
    outcome.masked_spans = masked;
    Ok(outcome)
}

/// Prepends corrector-inferred history. The backfill must itself alternate
/// roles and join the original so the result validates; otherwise the
/// outcome is rejected with the validation report.
pub fn apply_context_completion(
    d: &Dialogue,
    corrector: &dyn CorrectorClient,
    synth: &dyn SynthClient,
    config: &CleaningConfig,
    seed: u64,
) -> Result<CleaningOutcome, CleaningError> {
    expect_branch(d, Branch::ContextCompletion)?;
    let branch = Branch::ContextCompletion;
    let id = call_id(seed, d, "turns[..0]", "backfill");
    let (mut backfill, attempts) = match with_retry(config.retries, "backfill", || corrector.backfill(d, &id)) {
        Ok(v) => v,
        Err(def) => return Ok(deferred(branch, d, Vec::new(), def)),
    };
    let mut provenance = vec![ProvenanceEntry {
        call_id: id,
        operation: "backfill".into(),
        target: format!("turns[0..{}]", backfill.len()),
        attempts,
    }];
    if backfill.is_empty() {
        return Ok(finish(branch, d.clone(), Vec::new(), provenance));
    }

    let mut report = ValidationReport::default();
    for (i, pair) in backfill.windows(2).enumerate() {
        if pair[0].role == pair[1].role {
            report.push(
                format!("backfill[{}].role", i + 1),
                format!("consecutive {} turns in backfill", pair[1].role),
            );
        }
    }
    if !report.is_empty() {
        return Ok(rejected(branch, d, provenance, report));
    }

    if config.synthesize_backfill {
        for (i, t) in backfill.iter_mut().enumerate().filter(|(_, t)| t.audio.is_none()) {
            let target = format!("turns[{i}].audio");
            let id = call_id(seed, d, &target, "synthesize");
            let (audio, attempts) = match with_retry(config.retries, "synthesize", || {
                synth.synthesize(&t.text, &t.speaker_id, &id)
            }) {
                Ok(v) => v,
                Err(def) => return Ok(deferred(branch, d, provenance, def)),
            };
            provenance.push(ProvenanceEntry {
                call_id: id,
                operation: "synthesize".into(),
                target,
                attempts,
            });
            t.alignment = single_span_alignment(&t.text, audio.len());
            t.audio = Some(audio);
        }
    }

    let mut out = d.clone();
    let shift: usize = backfill.iter().map(Turn::char_len).sum();
    out.turns = backfill.into_iter().chain(d.turns.iter().cloned()).collect();
    // flag spans address the concatenated text, which grew at the front
    out.quality_flags = d
        .quality_flags
        .iter()
        .cloned()
        .map(|mut f| {
            for s in &mut f.spans {
                *s = Span::new(s.start + shift, s.end + shift);
            }
            f
        })
        .collect();
    Ok(finish(branch, out, Vec::new(), provenance))
}

fn rejected(
    branch: Branch,
    d: &Dialogue,
    provenance: Vec<ProvenanceEntry>,
    report: ValidationReport,
) -> CleaningOutcome {
    CleaningOutcome {
        branch,
        status: Status::Rejected { report },
        dialogue: d.clone(),
        masked_spans: Vec::new(),
        provenance,
    }
}

fn finish(
    branch: Branch,
    out: Dialogue,
    masked: Vec<(usize, Span)>,
    provenance: Vec<ProvenanceEntry>,
) -> CleaningOutcome {
    let report = validate_dialogue(&out);
    if !report.is_empty() {
        return CleaningOutcome {
            branch,
            status: Status::Rejected { report },
            dialogue: out,
            masked_spans: masked,
            provenance,
        };
    }
    CleaningOutcome {
        branch,
        status: Status::Completed,
        dialogue: out,
        masked_spans: masked,
        provenance,
    }
}

/// Routes and cleans one dialogue.
pub fn clean_dialogue(
    d: &Dialogue,
    corrector: &dyn CorrectorClient,
    synth: &dyn SynthClient,
    config: &CleaningConfig,
    seed: u64,
) -> Result<CleaningOutcome, CleaningError> {
    match route(d) {
        Branch::Passthrough => Ok(CleaningOutcome::completed(Branch::Passthrough, d.clone())),
        Branch::InformationPreservation => apply_masking(d),
        Branch::LogicCorrection => apply_logic_correction(d, corrector, synth, config, seed),
        Branch::ContextCompletion => apply_context_completion(d, corrector, synth, config, seed),
    }
}

/// Cleans a batch on the current rayon pool; outcomes keep input order.
pub fn clean_batch(
    dialogues: &[Dialogue],
    corrector: &dyn CorrectorClient,
    synth: &dyn SynthClient,
    config: &CleaningConfig,
    seed: u64,
) -> Vec<Result<CleaningOutcome, CleaningError>> {
    dialogues
        .par_iter()
        .map(|d| clean_dialogue(d, corrector, synth, config, seed))
        .collect()
}
