//! Seeded synthetic corpus generator.
//!
//! Produces valid dialogues with sentence-aligned audio, pooled speakers (so
//! every speaker has reference candidates in other samples), optional
//! captions and a configurable mix of quality flags. Used by tests, the
//! examples and throughput checks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caption::{Attribute, CaptionRecord, Tag, Taxonomy};
use crate::corpus::{
    AlignmentSpan, AudioTokenSpan, Dialogue, FlagKind, Language, QualityFlag, Role, Source, Span, Turn, ADAPTER_RATE_HZ,
};
use crate::seed::record_rng;

const EN_WORDS: &[&str] = &[
    "the", "weather", "is", "nice", "today", "we", "could", "walk", "to", "market", "later", "maybe", "after", "lunch",
    "train", "leaves", "at", "noon", "please", "bring", "an", "umbrella", "coffee", "tastes", "good", "music",
    "sounds", "quiet", "tonight", "book", "was", "long", "but", "worth", "reading",
];
const ZH_CHARS: &[&str] = &[
    "今", "天", "气", "很", "好", "我", "们", "去", "公", "园", "散", "步", "吧", "晚", "上", "吃", "饭", "听", "音",
    "乐", "书", "看", "完", "了", "明", "早", "见",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub dialogues: usize,
    /// Inclusive range of user/assistant exchanges per dialogue.
    pub min_exchanges: usize,
    pub max_exchanges: usize,
    /// Inclusive range of sentences per assistant turn.
    pub max_sentences: usize,
    pub speakers: usize,
    pub p_correctable: f64,
    pub p_severe: f64,
    pub p_missing_context: f64,
    pub p_caption: f64,
    /// Restrict sources; empty means all.
    pub sources: Vec<Source>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            dialogues: 100,
            min_exchanges: 1,
            max_exchanges: 3,
            max_sentences: 4,
            speakers: 6,
            p_correctable: 0.1,
            p_severe: 0.1,
            p_missing_context: 0.05,
            p_caption: 0.2,
            sources: Vec::new(),
        }
    }
}

impl GeneratorConfig {
    /// Only clean dialogues.
    pub fn clean(seed: u64, dialogues: usize) -> Self {
        GeneratorConfig {
            seed,
            dialogues,
            p_correctable: 0.0,
            p_severe: 0.0,
            p_missing_context: 0.0,
            ..Self::default()
        }
    }
}

fn sentence(rng: &mut ChaCha8Rng, lang: Language) -> String {
    match lang {
        Language::Zh => {
            let n = rng.gen_range(3..10);
            let body: String = (0..n).map(|_| *ZH_CHARS.choose(rng).unwrap()).collect();
            format!("{body}。")
        }
        _ => {
            let n = rng.gen_range(2..8);
            let words: Vec<&str> = (0..n).map(|_| *EN_WORDS.choose(rng).unwrap()).collect();
            let mut s = words.join(" ");
            s[..1].make_ascii_uppercase();
            let end = [".", "?", "!"][rng.gen_range(0..3)];
            format!("{s}{end}")
        }
    }
}

/// A turn from sentence pieces, with one alignment span per piece and one
/// audio token per character.
pub fn aligned_turn(rng: &mut ChaCha8Rng, role: Role, speaker: &str, pieces: &[String]) -> Turn {
    let sep = |i: usize| if i + 1 < pieces.len() { " " } else { "" };
    let mut text = String::new();
    let mut alignment = Vec::with_capacity(pieces.len());
    let mut c = 0;
    for (i, p) in pieces.iter().enumerate() {
        let piece = format!("{p}{}", sep(i));
        let n = piece.chars().count();
        alignment.push(AlignmentSpan {
            text_range: Span::new(c, c + n),
            audio_range: Span::new(c, c + n),
            index: i,
        });
        text.push_str(&piece);
        c += n;
    }
    let token_ids = (0..c).map(|_| rng.gen_range(0..4096)).collect();
    Turn {
        role,
        speaker_id: speaker.to_string(),
        text,
        audio: Some(AudioTokenSpan {
            token_ids,
            frame_rate_hz: ADAPTER_RATE_HZ,
            duration_s: c as f64 / ADAPTER_RATE_HZ,
        }),
        alignment,
        caption: None,
    }
}

fn random_caption(rng: &mut ChaCha8Rng) -> CaptionRecord {
    let tax = Taxonomy::bundled();
    let mut c = CaptionRecord::default();
    for attr in Attribute::ALL {
        if rng.gen_bool(0.5) {
            let vocab = tax.vocabulary(attr);
            c.insert(attr, Tag::known(vocab.choose(rng).unwrap().clone()));
        }
    }
    c
}

/// Sentence spans of an assistant turn, offset into the concatenated text.
fn sentence_spans(turns: &[Turn], ti: usize) -> Vec<Span> {
    let offset: usize = turns[..ti].iter().map(Turn::char_len).sum();
    turns[ti]
        .alignment
        .iter()
        .map(|a| Span::new(offset + a.text_range.start, offset + a.text_range.end))
        .collect()
}

/// One dialogue, a pure function of `(seed, id)` and the config.
pub fn generate_dialogue(config: &GeneratorConfig, id: &str) -> Dialogue {
    let mut rng = record_rng(config.seed, id, "generator");
    let sources: &[Source] = if config.sources.is_empty() {
        &Source::ALL
    } else {
        &config.sources
    };
    let source = *sources.choose(&mut rng).unwrap();
    let language = if rng.gen_bool(0.2) { Language::Zh } else { Language::En };
    let pool = config.speakers.max(2);
    let user = format!("spk{}", rng.gen_range(0..pool));
    let assistant = if source == Source::Audiobook {
        user.clone()
    } else {
        let mut a = format!("spk{}", rng.gen_range(0..pool));
        while a == user {
            a = format!("spk{}", rng.gen_range(0..pool));
        }
        a
    };

    let exchanges = rng.gen_range(config.min_exchanges.max(1)..=config.max_exchanges.max(config.min_exchanges.max(1)));
    let mut turns = Vec::with_capacity(exchanges * 2);
    for _ in 0..exchanges {
        let u = sentence(&mut rng, language);
        let mut ut = aligned_turn(&mut rng, Role::User, &user, &[u]);
        if rng.gen_bool(config.p_caption) {
            ut.caption = Some(random_caption(&mut rng));
        }
        turns.push(ut);
        let n = rng.gen_range(1..=config.max_sentences.max(1));
        let pieces: Vec<String> = (0..n).map(|_| sentence(&mut rng, language)).collect();
        turns.push(aligned_turn(&mut rng, Role::Assistant, &assistant, &pieces));
    }

    let mut flags = BTreeSet::new();
    let assistant_turns: Vec<usize> = (1..turns.len()).step_by(2).collect();
    let pick_spans = |rng: &mut ChaCha8Rng| {
        let ti = *assistant_turns.choose(rng).unwrap();
        let spans = sentence_spans(&turns, ti);
        let k = rng.gen_range(1..=spans.len());
        spans.choose_multiple(rng, k).copied().collect::<Vec<_>>()
    };
    if rng.gen_bool(config.p_severe) {
        let mut spans = pick_spans(&mut rng);
        spans.sort();
        flags.insert(QualityFlag {
            kind: FlagKind::LogicContradictionSevere,
            spans,
        });
    }
    if rng.gen_bool(config.p_correctable) {
        let mut spans = if rng.gen_bool(0.5) {
            pick_spans(&mut rng)
        } else {
            Vec::new()
        };
        spans.sort();
        flags.insert(QualityFlag {
            kind: FlagKind::LogicContradictionCorrectable,
            spans,
        });
    }
    if rng.gen_bool(config.p_missing_context) {
        flags.insert(QualityFlag {
            kind: FlagKind::MissingContext,
            spans: Vec::new(),
        });
    }
    if flags.is_empty() {
        flags.insert(QualityFlag::clean());
    }

    Dialogue {
        id: id.to_string(),
        language,
        source,
        quality_flags: flags,
        turns,
    }
}

/// `config.dialogues` dialogues with ids `g000000`, `g000001`, ...
pub fn generate_corpus(config: &GeneratorConfig) -> Vec<Dialogue> {
    (0..config.dialogues)
        .map(|i| generate_dialogue(config, &format!("g{i:06}")))
        .collect()
}

/// Two-turn clean dialogue with audio and alignment.
pub fn tiny_dialogue(id: &str) -> Dialogue {
    let mut rng = record_rng(0, id, "tiny");
    Dialogue {
        id: id.to_string(),
        language: Language::En,
        source: Source::RealLife,
        quality_flags: BTreeSet::from([QualityFlag::clean()]),
        turns: vec![
            aligned_turn(&mut rng, Role::User, "spk-user", &["Is it raining?".to_string()]),
            aligned_turn(
                &mut rng,
                Role::Assistant,
                "spk-assistant",
                &["Not yet.".to_string(), "Take a coat anyway.".to_string()],
            ),
        ],
    }
}
