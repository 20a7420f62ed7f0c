//! CER/WER with per-operation counts, pooled corpus rates, only-yes
//! accuracy and the ablation gap.

use std::error::Error;

use forge::metrics::{
    ablation_gap, cer, cer_ops, corpus_rate, only_yes_accuracy, wer, wer_ops, AblationCell, Normalization, RateKind,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (r, h) = ("The cat sat on the mat.", "the cat sat on a mat");
    println!("wer {:.3} {:?}", wer(r, h), wer_ops(r, h, Normalization::Standard));
    println!("raw wer {:?}", wer_ops(r, h, Normalization::Raw));
    println!("cer {:.3} {:?}", cer(r, h), cer_ops(r, h, Normalization::Standard));
    println!("zh cer {:.3}", cer("今天天气很好", "今天天汽很好啊"));

    let pairs = vec![
        ("one two three".to_string(), "one two".to_string()),
        ("four".to_string(), "for".to_string()),
    ];
    let pooled = corpus_rate(&pairs, RateKind::Wer, Normalization::Standard);
    println!("pooled wer {:.3} over {} words", pooled.rate(), pooled.reference_length);

    println!("only-yes {:.2}", only_yes_accuracy(&["Yes.", "yes", "No", "yes!"])?);

    let (ds, dc) = ablation_gap(AblationCell::new(0.816, 0.708)?, AblationCell::new(0.783, 0.633)?);
    println!("a2a - a2t: similarity {ds:+.3}, consistency {dc:+.3}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
