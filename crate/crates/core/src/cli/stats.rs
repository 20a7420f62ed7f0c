use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokens_for_hours, Dialogue, FlagKind, Language, Source, ADAPTER_RATE_HZ, SECONDS_PER_HOUR};
use crate::schedule::Quantity;

/// Corpus totals in the shape the budget check consumes: `classes` maps
/// each source to its audio hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dialogues: u64,
    pub turns: u64,
    pub audio_seconds: f64,
    pub audio_tokens: u64,
    pub hours_by_source: BTreeMap<String, f64>,
    pub tokens_by_source: BTreeMap<String, u64>,
    pub languages: BTreeMap<String, u64>,
    pub flags: BTreeMap<String, u64>,
    pub classes: BTreeMap<String, Quantity>,
}

fn tokens(seconds: f64) -> u64 {
    tokens_for_hours(seconds / SECONDS_PER_HOUR, ADAPTER_RATE_HZ).expect("audio seconds are finite and non-negative")
}

pub fn stats(corpus: &[Dialogue]) -> StatsReport {
    let mut seconds: BTreeMap<String, f64> = Source::ALL.iter().map(|s| (s.as_str().to_string(), 0.0)).collect();
    let mut languages: BTreeMap<String, u64> = Language::ALL.iter().map(|l| (l.as_str().to_string(), 0)).collect();
    let mut flags: BTreeMap<String, u64> = FlagKind::ALL.iter().map(|f| (f.as_str().to_string(), 0)).collect();
    let mut turns = 0;
    for d in corpus {
        *seconds.get_mut(d.source.as_str()).unwrap() += d.audio_seconds();
        *languages.get_mut(d.language.as_str()).unwrap() += 1;
        for f in &d.quality_flags {
            *flags.get_mut(f.kind.as_str()).unwrap() += 1;
        }
        turns += d.turns.len() as u64;
    }
    let audio_seconds: f64 = seconds.values().sum();
    StatsReport {
        dialogues: corpus.len() as u64,
        turns,
        audio_seconds,
        audio_tokens: tokens(audio_seconds),
        hours_by_source: seconds.iter().map(|(k, s)| (k.clone(), s / SECONDS_PER_HOUR)).collect(),
        tokens_by_source: seconds.iter().map(|(k, s)| (k.clone(), tokens(*s))).collect(),
        languages,
        flags,
        classes: seconds
            .iter()
            .map(|(k, s)| (k.clone(), Quantity::Hours(s / SECONDS_PER_HOUR)))
            .collect(),
    }
}
