//! Generate a synthetic corpus, round-trip it through JSONL and validate it,
//! then break one dialogue and show the report.

use std::error::Error;

use forge::corpus::{parse_corpus_str, serialize_dialogue, validate_corpus, validate_dialogue, Span};
use forge::generator::{generate_corpus, GeneratorConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let corpus = generate_corpus(&GeneratorConfig {
        dialogues: 50,
        ..GeneratorConfig::default()
    });
    let jsonl: String = corpus.iter().map(|d| serialize_dialogue(d) + "\n").collect();
    let parsed = parse_corpus_str(&jsonl);
    assert!(parsed.rejects.is_empty());
    assert_eq!(parsed.dialogues, corpus);

    let failing = validate_corpus(&parsed.dialogues)
        .into_iter()
        .filter(|(_, r)| !r.is_empty())
        .count();
    println!("{} dialogues parsed, {failing} invalid", parsed.dialogues.len());

    let mut broken = corpus[0].clone();
    broken.turns[1].alignment[0].text_range = Span::new(0, 10_000);
    broken.turns.swap(0, 1);
    let report = validate_dialogue(&broken);
    println!("{} after tampering:\n{report}", broken.id);
    assert!(!report.is_empty());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
