//! Compile modality-interleaved thinker sequences, with a masked span, and
//! list the loss targets.

use std::error::Error;

use forge::cleaning::masks_for;
use forge::corpus::{FlagKind, QualityFlag};
use forge::generator::tiny_dialogue;
use forge::thinker::{compile_batch, extract_loss_targets, CompileItem, InterleavePolicy, Payload};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut d = tiny_dialogue("demo");
    // flag the assistant's first sentence ("Not yet. ")
    let offset = d.turns[0].char_len();
    d.quality_flags = [QualityFlag {
        kind: FlagKind::LogicContradictionSevere,
        spans: vec![forge::corpus::Span::new(offset, offset + 9)],
    }]
    .into();
    let masked = masks_for(&d);
    println!("masked spans {masked:?}");

    let policy = InterleavePolicy::new(0.5, 0.5)?;
    for seed in 0..3 {
        let seq = compile_batch(
            &[CompileItem {
                dialogue: &d,
                masked: &masked,
            }],
            &policy,
            seed,
        )
        .pop()
        .unwrap()?;
        println!("seed {seed}:");
        for e in &seq.elements {
            let shown = match &e.payload {
                Payload::Text(t) => format!("{t:?}"),
                Payload::Speech(ids) => format!("<{} speech tokens>", ids.len()),
            };
            println!("  {:?} {:?} loss={} {shown}", e.role, e.modality, e.loss_target);
        }
        for (origin, text) in extract_loss_targets(&seq) {
            assert_ne!(text, "Not yet. ");
            println!(
                "  target turn {} seg {}: {text:?}",
                origin.turn_index, origin.segment_index
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
