//! Route a flagged corpus through the cleaning branches with mock clients,
//! including a corrector that always times out.

use std::collections::BTreeMap;
use std::error::Error;

use forge::cleaning::{clean_batch, CleaningConfig, CorrectMode, MockCorrector, MockSynth, Status};
use forge::generator::{generate_corpus, GeneratorConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let corpus = generate_corpus(&GeneratorConfig {
        dialogues: 60,
        p_correctable: 0.3,
        p_severe: 0.2,
        p_missing_context: 0.1,
        ..GeneratorConfig::default()
    });
    let config = CleaningConfig::default();
    let synth = MockSynth::new();

    let corrector = MockCorrector::new(CorrectMode::Append(" (revised)".into()));
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for out in clean_batch(&corpus, &corrector, &synth, &config, 5) {
        let out = out?;
        let state = match &out.status {
            Status::Completed => "completed",
            Status::Deferred { .. } => "deferred",
            Status::Rejected { .. } => "rejected",
        };
        *tally.entry(format!("{:?}/{state}", out.branch)).or_default() += 1;
    }
    println!("{tally:#?}");
    println!("corrector calls {}, synth calls {}", corrector.calls(), synth.calls());

    let down = MockCorrector::identity().failing(usize::MAX);
    let deferred = clean_batch(&corpus, &down, &synth, &config, 5)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|o| matches!(o.status, Status::Deferred { .. }))
        .count();
    println!("with the corrector down, {deferred} dialogues deferred");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
