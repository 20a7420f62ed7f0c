//! Build a caption against the bundled taxonomy, render it to prose and
//! recover the tags from the rendering.

use std::error::Error;

use forge::caption::{extract_tags, render_caption, validate_caption, Attribute, CaptionRecord, Tag, Taxonomy};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let taxonomy = Taxonomy::bundled();
    let mut caption = CaptionRecord::default();
    for attr in [Attribute::ALL[0], Attribute::ALL[2], Attribute::ALL[5]] {
        let tag = taxonomy.vocabulary(attr)[0].clone();
        caption.insert(attr, Tag::known(tag));
    }
    caption.insert(
        Attribute::ALL[5],
        Tag::known(taxonomy.vocabulary(Attribute::ALL[5])[1].clone()),
    );
    assert!(validate_caption(&caption, taxonomy).is_empty());

    for seed in 0..3 {
        let text = render_caption(&caption, taxonomy, seed)?;
        let mut tags = extract_tags(&text, taxonomy)?;
        tags.sort();
        let mut want = caption.tags();
        want.sort();
        assert_eq!(tags, want);
        println!("seed {seed}: {text}");
    }

    let mut bad = caption.clone();
    bad.insert(Attribute::ALL[0], Tag::known("not-a-tag"));
    println!("invalid caption:\n{}", validate_caption(&bad, taxonomy));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
