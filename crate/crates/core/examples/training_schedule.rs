//! Walk the default training plan step by step and check a corpus against
//! the declared budgets.

use std::collections::BTreeMap;
use std::error::Error;

use forge::schedule::{budget_check, build_default_plan, directive_at, Quantity, StageId};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut plan = build_default_plan();
    plan.stage_mut(StageId::S1GeneralAudio)?.total_steps = Some(10);
    for step in 1..=10 {
        let d = directive_at(&plan, StageId::S1GeneralAudio, step)?;
        println!("s1 step {step:>2}: phase {} lr {:?} {:?}", d.phase, d.lr, d.trainable);
    }
    println!("declared pretraining tokens {:.4e}", plan.declared_token_total());

    let stats = BTreeMap::from([
        ("asr".to_string(), Quantity::Hours(255_000.0)),
        ("audio_caption".to_string(), Quantity::Hours(50_000.0)),
    ]);
    let report = budget_check(&plan, &stats);
    for e in report.entries.iter().filter(|e| e.stage == StageId::S1GeneralAudio) {
        println!("{e:?}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
