//! Caption rendering and its inverse.
//!
//! Each populated attribute becomes one sentence chosen from a small phrase
//! table. Sentences end with `.`, set-valued attributes list their tags
//! separated by `, `. Tags never contain either delimiter (enforced by
//! validation), which makes the rendering invertible.

use rand::Rng;

use super::{validate_caption, Attribute, CaptionError, CaptionRecord, Tag, Taxonomy};
use crate::seed::record_rng;

/// A sentence template: `prefix` + tag text + `suffix`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phrase {
    pub prefix: &'static str,
    pub suffix: &'static str,
}

const fn p(prefix: &'static str, suffix: &'static str) -> Phrase {
    Phrase { prefix, suffix }
}

const GENDER_AGE: [Phrase; 3] = [
    p("The speaker is a ", " voice"),
    p("This is spoken by a ", " speaker"),
    p("The voice belongs to a ", " speaker"),
];
const ACCENT: [Phrase; 3] = [
    p("The accent is ", ""),
    p("Accent-wise the delivery is ", ""),
    p("Pronunciation follows ", " conventions"),
];
const EMOTION: [Phrase; 3] = [
    p("The emotional state is ", ""),
    p("Emotionally the speaker sounds ", ""),
    p("The prevailing emotion is ", ""),
];
const TONE: [Phrase; 3] = [
    p("The tone is ", ""),
    p("The delivery has a ", " tone"),
    p("In terms of tone it comes across as ", ""),
];
const SPEECH_RATE: [Phrase; 3] = [
    p("The speaking rate is ", ""),
    p("Speech rate: ", ""),
    p("The pace of speech is ", ""),
];
const VOCALIZATIONS: [Phrase; 3] = [
    p("Audible vocalizations include ", ""),
    p("Non-verbal vocal sounds present: ", ""),
    p("The recording contains vocalizations such as ", ""),
];
const AFFECTIVE_BURST: [Phrase; 3] = [
    p("Affective bursts heard: ", ""),
    p("There are affective bursts of ", ""),
    p("Emotional outbursts include ", ""),
];
const PATHOLOGY: [Phrase; 3] = [
    p("Vocal pathology observed: ", ""),
    p("The voice shows signs of ", ""),
    p("Voice quality issues include ", ""),
];
const ACOUSTIC_SCENE: [Phrase; 3] = [
    p("The acoustic scene is ", ""),
    p("It was recorded in a ", " setting"),
    p("The background environment sounds like ", ""),
];
const SOUND_EVENTS: [Phrase; 3] = [
    p("Background sound events include ", ""),
    p("Other sounds in the scene: ", ""),
    p("Notable sound events: ", ""),
];

/// Surface variants for one attribute.
pub fn phrase_table(attr: Attribute) -> &'static [Phrase] {
    match attr {
        Attribute::GenderAge => &GENDER_AGE,
        Attribute::Accent => &ACCENT,
        Attribute::Emotion => &EMOTION,
        Attribute::Tone => &TONE,
        Attribute::SpeechRate => &SPEECH_RATE,
        Attribute::Vocalizations => &VOCALIZATIONS,
        Attribute::AffectiveBurst => &AFFECTIVE_BURST,
        Attribute::VocalPathology => &PATHOLOGY,
        Attribute::AcousticScene => &ACOUSTIC_SCENE,
        Attribute::SoundEvents => &SOUND_EVENTS,
    }
}

const LIST_SEP: &str = ", ";

/// Renders a caption as natural-language sentences, one per populated
/// attribute. The seed picks surface phrasing only; content is fixed.
pub fn render_caption(c: &CaptionRecord, taxonomy: &Taxonomy, seed: u64) -> Result<String, CaptionError> {
    let report = validate_caption(c, taxonomy);
    if !report.is_empty() {
        return Err(CaptionError::Invalid(report));
    }
    let mut rng = record_rng(seed, &taxonomy.version, "caption");
    let mut sentences = Vec::new();
    for attr in Attribute::ALL {
        let tags = c.attribute_tags(attr);
        if tags.is_empty() {
            continue;
        }
        let table = phrase_table(attr);
        let phrase = table[rng.gen_range(0..table.len())];
        let body = tags.iter().map(|t| t.text()).collect::<Vec<_>>().join(LIST_SEP);
        sentences.push(format!("{}{}{}.", phrase.prefix, body, phrase.suffix));
    }
    Ok(sentences.join(" "))
}

/// Recovers the `(attribute, tag)` multiset from a rendered caption.
pub fn extract_tags(rendered: &str, taxonomy: &Taxonomy) -> Result<Vec<(Attribute, Tag)>, CaptionError> {
    let text = rendered.trim();
    let body = text.strip_suffix('.').ok_or_else(|| CaptionError::Parse {
        fragment: text.to_string(),
        reason: if text.is_empty() {
            "empty caption".into()
        } else {
            "caption must end with '.'".into()
        },
    })?;
    let mut out = Vec::new();
    let mut seen = Vec::new();
    for fragment in body.split(". ") {
        let (attr, inner) = match_fragment(fragment)?;
        if seen.contains(&attr) {
            return Err(CaptionError::Parse {
                fragment: fragment.to_string(),
                reason: format!("{attr} described twice"),
            });
        }
        seen.push(attr);
        let parts: Vec<&str> = if attr.is_set_valued() {
            inner.split(LIST_SEP).collect()
        } else {
            vec![inner]
        };
        for part in parts {
            if part.is_empty() {
                return Err(CaptionError::Parse {
                    fragment: fragment.to_string(),
                    reason: "empty tag".into(),
                });
            }
            let tag = if taxonomy.contains(attr, part) {
                Tag::Known(part.to_string())
            } else {
                Tag::Other(part.to_string())
            };
            out.push((attr, tag));
        }
    }
    out.sort();
    Ok(out)
}

fn match_fragment(fragment: &str) -> Result<(Attribute, &str), CaptionError> {
    let mut hit = None;
    for attr in Attribute::ALL {
        for phrase in phrase_table(attr) {
            let inner = fragment
                .strip_prefix(phrase.prefix)
                .and_then(|rest| rest.strip_suffix(phrase.suffix));
            if let Some(inner) = inner.filter(|s| !s.is_empty()) {
                if hit.is_some() {
                    return Err(CaptionError::Parse {
                        fragment: fragment.to_string(),
                        reason: "ambiguous phrasing".into(),
                    });
                }
                hit = Some((attr, inner));
            }
        }
    }
    hit.ok_or_else(|| CaptionError::Parse {
        fragment: fragment.to_string(),
        reason: "unrecognized phrasing".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn sample_record() -> CaptionRecord {
        let mut c = CaptionRecord::default();
        c.insert(Attribute::GenderAge, Tag::known("Young male"));
        c.insert(Attribute::Emotion, Tag::known("Happy"));
        c.insert(Attribute::SpeechRate, Tag::known("Fast"));
        c.insert(Attribute::AffectiveBurst, Tag::known("Laughing"));
        c.insert(Attribute::AcousticScene, Tag::known("Cafe"));
        c
    }

    #[test]
    fn seeds_vary_phrasing_not_content() {
        let t = Taxonomy::bundled();
        let c = sample_record();
        let a = render_caption(&c, t, 1).unwrap();
        let b = render_caption(&c, t, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(extract_tags(&a, t).unwrap(), extract_tags(&b, t).unwrap());
        assert_eq!(extract_tags(&a, t).unwrap(), c.tags());
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = Taxonomy::bundled();
        let c = sample_record();
        assert_eq!(render_caption(&c, t, 9).unwrap(), render_caption(&c, t, 9).unwrap());
    }

    #[test]
    fn only_populated_attributes_are_mentioned() {
        let t = Taxonomy::bundled();
        let mut c = CaptionRecord::default();
        c.insert(Attribute::Emotion, Tag::known("Sad"));
        let s = render_caption(&c, t, 3).unwrap();
        assert_eq!(s.matches('.').count(), 1, "{s}");
        assert!(s.contains("Sad"));
    }

    /// Independent check: for each attribute, some phrase of its table must
    /// occur in the output along with the tag text.
    #[test]
    fn fully_populated_record_mentions_all_ten() {
        let t = Taxonomy::bundled();
        let mut c = CaptionRecord::default();
        for a in Attribute::ALL {
            c.insert(a, Tag::known(t.vocabulary(a)[0].clone()));
        }
        let s = render_caption(&c, t, 11).unwrap();
        for a in Attribute::ALL {
            let tag = &t.vocabulary(a)[0];
            let found = phrase_table(a)
                .iter()
                .any(|p| s.contains(&format!("{}{}{}.", p.prefix, tag, p.suffix)));
            assert!(found, "{a} missing from {s}");
        }
    }

    #[test]
    fn invalid_record_is_refused() {
        let mut c = sample_record();
        c.insert(Attribute::Emotion, Tag::known("Melancholy"));
        assert!(matches!(
            render_caption(&c, Taxonomy::bundled(), 0),
            Err(CaptionError::Invalid(_))
        ));
    }

    #[test]
    fn empty_string_is_parse_error() {
        assert!(matches!(
            extract_tags("", Taxonomy::bundled()),
            Err(CaptionError::Parse { .. })
        ));
    }

    #[test]
    fn injected_phrase_is_named() {
        let t = Taxonomy::bundled();
        let s = render_caption(&sample_record(), t, 1).unwrap();
        let injected = format!("{s} The moon is made of cheese.");
        match extract_tags(&injected, t) {
            Err(CaptionError::Parse { fragment, .. }) => assert_eq!(fragment, "The moon is made of cheese"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn phrase_tables_are_unambiguous() {
        let all: Vec<(Attribute, Phrase)> = Attribute::ALL
            .into_iter()
            .flat_map(|a| phrase_table(a).iter().map(move |p| (a, *p)))
            .collect();
        for a in Attribute::ALL {
            assert!(phrase_table(a).len() >= 3);
        }
        for (i, (a1, p1)) in all.iter().enumerate() {
            assert!(!p1.prefix.contains('.') && !p1.suffix.contains('.'));
            for (a2, p2) in &all[i + 1..] {
                let prefix_compatible = p1.prefix.starts_with(p2.prefix) || p2.prefix.starts_with(p1.prefix);
                let suffix_compatible = p1.suffix.ends_with(p2.suffix) || p2.suffix.ends_with(p1.suffix);
                assert!(
                    !(prefix_compatible && suffix_compatible),
                    "{a1} {p1:?} collides with {a2} {p2:?}"
                );
            }
        }
    }

    fn arb_record() -> impl Strategy<Value = CaptionRecord> {
        let t = Taxonomy::bundled();
        let per_attr: Vec<_> = Attribute::ALL
            .into_iter()
            .map(|a| {
                let vocab: Vec<String> = t.vocabulary(a).to_vec();
                let n = vocab.len();
                let known = proptest::collection::btree_set(0..n, 0..=n.min(3)).prop_map(move |idx| {
                    idx.into_iter()
                        .map(|i| Tag::Known(vocab[i].clone()))
                        .collect::<BTreeSet<_>>()
                });
                let other = proptest::option::weighted(0.2, "[A-Z][a-z]{2,8}( [a-z]{2,6})?")
                    .prop_map(|o| o.map(|s| Tag::Other(format!("Zz{s}"))));
                (known, other).prop_map(move |(mut k, o)| {
                    if a.is_open() {
                        k.extend(o);
                    }
                    (a, k)
                })
            })
            .collect();
        per_attr.prop_map(|sets| {
            let mut c = CaptionRecord::default();
            for (a, tags) in sets {
                if a.is_set_valued() {
                    for tag in tags {
                        c.insert(a, tag);
                    }
                } else if let Some(tag) = tags.into_iter().next() {
                    c.insert(a, tag);
                }
            }
            c
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn render_then_extract_recovers_tags(c in arb_record(), seed in any::<u64>()) {
            let t = Taxonomy::bundled();
            let s = render_caption(&c, t, seed).unwrap();
            if c.tags().is_empty() {
                prop_assert!(s.is_empty());
            } else {
                prop_assert_eq!(extract_tags(&s, t).unwrap(), c.tags());
            }
        }
    }
}
