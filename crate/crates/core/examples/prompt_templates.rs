//! Expand instruction templates, sample prompts by seed and build the
//! only-yes probe set.

use std::error::Error;

use forge::templates::{build_only_yes_set, expand_templates, matches_grammar, sample_prompt, Registry};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let registry = Registry::bundled();
    for (id, spec) in &registry.tasks {
        let variants = expand_templates(spec, 4)?;
        println!(
            "{id} [{}] {} variants, e.g. {:?}",
            spec.language_tag(),
            spec.cardinality(),
            variants[0].text
        );
    }

    let asr = registry.get("asr")?;
    let a = sample_prompt(asr, 7)?;
    assert_eq!(a, sample_prompt(asr, 7)?);
    assert!(matches_grammar(asr, &a.text));
    println!("asr seed 7 -> {:?}", a.text);

    let probes = build_only_yes_set(&["clip-001".to_string(), "clip-002".to_string()])?;
    for (audio, prompt) in probes {
        println!("{audio}: {prompt}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
