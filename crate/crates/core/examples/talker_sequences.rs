//! Assemble talker sequences in each mode and parse them back.

use std::error::Error;

use forge::corpus::Source;
use forge::generator::{generate_corpus, GeneratorConfig};
use forge::talker::{assemble, parse_sequence, CorpusIndex, Mode, RatioSpec, SpecialTokenRegistry, Stream};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let corpus = generate_corpus(&GeneratorConfig {
        sources: vec![Source::Podcast, Source::Audiobook],
        ..GeneratorConfig::clean(3, 40)
    });
    let index = CorpusIndex::build(&corpus);
    let ratio: RatioSpec = "2-5:6-15".parse()?;

    for mode in [Mode::Dialogue, Mode::LongText, Mode::StandardSentence] {
        let d = corpus
            .iter()
            .find(|d| Mode::for_source(d.source) == mode || mode == Mode::StandardSentence)
            .unwrap();
        let seq = assemble(d, mode, &ratio, &index, 3)?;
        let parsed = parse_sequence(&seq.tokens)?;
        let speech_targets = seq.speech_loss_mask.iter().filter(|&&m| m).count();
        // run lengths of the body after the reference, e.g. "S t4 a13 t4 a13"
        let body = &seq.tokens[parsed.reference.len() + 2..];
        let mut runs: Vec<(Stream, usize)> = Vec::new();
        for &(s, _) in body {
            match runs.last_mut() {
                Some((last, n)) if *last == s && s != Stream::Special => *n += 1,
                _ => runs.push((s, 1)),
            }
        }
        let head = runs
            .iter()
            .take(8)
            .map(|(s, n)| match s {
                Stream::Special => "S".to_string(),
                Stream::Text => format!("t{n}"),
                Stream::Speech => format!("a{n}"),
            })
            .collect::<Vec<_>>()
            .join(" ");
        println!(
            "{mode} {}: {} tokens, ratio {}:{}, reference {} ({} tokens), {} blocks, {speech_targets} speech targets, body {head}",
            d.id,
            seq.tokens.len(),
            seq.manifest.ratio.n_text,
            seq.manifest.ratio.m_speech,
            seq.manifest.reference_segment,
            parsed.reference.len(),
            parsed.blocks.len(),
        );
    }
    println!("{}", SpecialTokenRegistry::current().to_json());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
