//! Acoustic caption taxonomy.
//!
//! Ten attributes in five categories (speaker profile, prosody,
//! paralinguistics, pathology, environment), each with a closed core
//! vocabulary. Tags outside the vocabulary are expressed with the `other:`
//! escape, except for emotion, which is a closed seven-class set.

mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::ValidationReport;

pub use render::{extract_tags, phrase_table, render_caption, Phrase};

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("caption record is invalid: {0}")]
    Invalid(ValidationReport),
    #[error("cannot parse caption fragment {fragment:?}: {reason}")]
    Parse { fragment: String, reason: String },
    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribute {
    GenderAge,
    Accent,
    Emotion,
    Tone,
    SpeechRate,
    Vocalizations,
    AffectiveBurst,
    VocalPathology,
    AcousticScene,
    SoundEvents,
}

impl Attribute {
    pub const ALL: [Attribute; 10] = [
        Attribute::GenderAge,
        Attribute::Accent,
        Attribute::Emotion,
        Attribute::Tone,
        Attribute::SpeechRate,
        Attribute::Vocalizations,
        Attribute::AffectiveBurst,
        Attribute::VocalPathology,
        Attribute::AcousticScene,
        Attribute::SoundEvents,
    ];

    /// Attribute name as it appears in the taxonomy file.
    pub fn name(self) -> &'static str {
        match self {
            Attribute::GenderAge => "Gender & Age",
            Attribute::Accent => "Accent",
            Attribute::Emotion => "Emotion",
            Attribute::Tone => "Tone",
            Attribute::SpeechRate => "Speech Rate",
            Attribute::Vocalizations => "Vocalizations",
            Attribute::AffectiveBurst => "Affective Burst",
            Attribute::VocalPathology => "Vocal Pathology",
            Attribute::AcousticScene => "Acoustic Scene",
            Attribute::SoundEvents => "Sound Events",
        }
    }

    pub fn from_name(name: &str) -> Option<Attribute> {
        Attribute::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn is_set_valued(self) -> bool {
        matches!(
            self,
            Attribute::Vocalizations | Attribute::AffectiveBurst | Attribute::VocalPathology | Attribute::SoundEvents
        )
    }

    /// Whether the `other:` escape is allowed.
    pub fn is_open(self) -> bool {
        self != Attribute::Emotion
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A caption tag: a vocabulary member or an `other(...)` escape.
/// Serialized as a plain string, with escapes prefixed `other:`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Known(String),
    Other(String),
}

impl Tag {
    pub fn known(s: impl Into<String>) -> Tag {
        Tag::Known(s.into())
    }

    pub fn other(s: impl Into<String>) -> Tag {
        Tag::Other(s.into())
    }

    /// Surface text used in rendered captions.
    pub fn text(&self) -> &str {
        match self {
            Tag::Known(s) | Tag::Other(s) => s,
        }
    }
}

const OTHER_PREFIX: &str = "other:";

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Tag::Known(t) => s.serialize_str(t),
            Tag::Other(t) => s.serialize_str(&format!("{OTHER_PREFIX}{t}")),
        }
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.strip_prefix(OTHER_PREFIX) {
            Some(rest) => Tag::Other(rest.to_string()),
            None => Tag::Known(s),
        })
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Known(t) => f.write_str(t),
            Tag::Other(t) => write!(f, "{OTHER_PREFIX}{t}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerProfile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender_age: Option<Tag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accent: Option<Tag>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prosody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<Tag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone: Option<Tag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech_rate: Option<Tag>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paralinguistics {
    #[serde(default)]
    pub vocalizations: BTreeSet<Tag>,
    #[serde(default)]
    pub affective_burst: BTreeSet<Tag>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acoustic_scene: Option<Tag>,
    #[serde(default)]
    pub sound_events: BTreeSet<Tag>,
}

/// Multi-dimensional acoustic annotation for one utterance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    #[serde(default)]
    pub speaker_profile: SpeakerProfile,
    #[serde(default)]
    pub prosody: Prosody,
    #[serde(default)]
    pub paralinguistics: Paralinguistics,
    #[serde(default)]
    pub pathology: BTreeSet<Tag>,
    #[serde(default)]
    pub environment: Environment,
}

impl CaptionRecord {
    /// Tags held for `attr`, in set order.
    pub fn attribute_tags(&self, attr: Attribute) -> Vec<&Tag> {
        fn one(t: &Option<Tag>) -> Vec<&Tag> {
            t.iter().collect()
        }
        match attr {
            Attribute::GenderAge => one(&self.speaker_profile.gender_age),
            Attribute::Accent => one(&self.speaker_profile.accent),
            Attribute::Emotion => one(&self.prosody.emotion),
            Attribute::Tone => one(&self.prosody.tone),
            Attribute::SpeechRate => one(&self.prosody.speech_rate),
            Attribute::Vocalizations => self.paralinguistics.vocalizations.iter().collect(),
            Attribute::AffectiveBurst => self.paralinguistics.affective_burst.iter().collect(),
            Attribute::VocalPathology => self.pathology.iter().collect(),
            Attribute::AcousticScene => one(&self.environment.acoustic_scene),
            Attribute::SoundEvents => self.environment.sound_events.iter().collect(),
        }
    }

    /// Sets one tag. Single-valued attributes are overwritten.
    pub fn insert(&mut self, attr: Attribute, tag: Tag) {
        match attr {
            Attribute::GenderAge => self.speaker_profile.gender_age = Some(tag),
            Attribute::Accent => self.speaker_profile.accent = Some(tag),
            Attribute::Emotion => self.prosody.emotion = Some(tag),
            Attribute::Tone => self.prosody.tone = Some(tag),
            Attribute::SpeechRate => self.prosody.speech_rate = Some(tag),
            Attribute::Vocalizations => {
                self.paralinguistics.vocalizations.insert(tag);
            }
            Attribute::AffectiveBurst => {
                self.paralinguistics.affective_burst.insert(tag);
            }
            Attribute::VocalPathology => {
                self.pathology.insert(tag);
            }
            Attribute::AcousticScene => self.environment.acoustic_scene = Some(tag),
            Attribute::SoundEvents => {
                self.environment.sound_events.insert(tag);
            }
        }
    }

    /// All `(attribute, tag)` pairs, sorted.
    pub fn tags(&self) -> Vec<(Attribute, Tag)> {
        let mut out: Vec<(Attribute, Tag)> = Attribute::ALL
            .into_iter()
            .flat_map(|a| self.attribute_tags(a).into_iter().map(move |t| (a, t.clone())))
            .collect();
        out.sort();
        out
    }
}

/// Closed per-attribute vocabularies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    pub version: String,
    vocab: [Vec<String>; 10],
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    version: String,
    attributes: BTreeMap<String, Vec<String>>,
}

static BUNDLED: OnceLock<Taxonomy> = OnceLock::new();

impl Taxonomy {
    /// The bundled default vocabulary.
    pub fn bundled() -> &'static Taxonomy {
        BUNDLED.get_or_init(|| {
            Taxonomy::from_json(include_str!("../../data/taxonomy.json")).expect("bundled taxonomy is valid")
        })
    }

    pub fn from_json(json: &str) -> Result<Taxonomy, CaptionError> {
        let file: TaxonomyFile = serde_json::from_str(json).map_err(|e| CaptionError::Taxonomy(e.to_string()))?;
        if file.version.is_empty() {
            return Err(CaptionError::Taxonomy("empty version".into()));
        }
        let mut vocab: [Vec<String>; 10] = Default::default();
        let mut seen = BTreeSet::new();
        for (name, tags) in file.attributes {
            let attr = Attribute::from_name(&name)
                .ok_or_else(|| CaptionError::Taxonomy(format!("unknown attribute {name:?}")))?;
            seen.insert(attr);
            if tags.is_empty() {
                return Err(CaptionError::Taxonomy(format!("{name}: empty vocabulary")));
            }
            let mut uniq = BTreeSet::new();
            for t in &tags {
                if !uniq.insert(t.as_str()) {
                    return Err(CaptionError::Taxonomy(format!("{name}: duplicate tag {t:?}")));
                }
                if let Some(reason) = surface_problem(t) {
                    return Err(CaptionError::Taxonomy(format!("{name}: tag {t:?} {reason}")));
                }
            }
            vocab[attr.index()] = tags;
        }
        if seen.len() != Attribute::ALL.len() {
            let missing: Vec<_> = Attribute::ALL
                .iter()
                .filter(|a| !seen.contains(a))
                .map(|a| a.name())
                .collect();
            return Err(CaptionError::Taxonomy(format!(
                "missing attributes: {}",
                missing.join(", ")
            )));
        }
        Ok(Taxonomy {
            version: file.version,
            vocab,
        })
    }

    pub fn to_json(&self) -> String {
        let file = TaxonomyFile {
            version: self.version.clone(),
            attributes: Attribute::ALL
                .into_iter()
                .map(|a| (a.name().to_string(), self.vocab[a.index()].clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("taxonomy serializes")
    }

    pub fn vocabulary(&self, attr: Attribute) -> &[String] {
        &self.vocab[attr.index()]
    }

    pub fn contains(&self, attr: Attribute, tag: &str) -> bool {
        self.vocabulary(attr).iter().any(|t| t == tag)
    }
}

/// Characters a tag cannot carry without breaking rendered-caption parsing.
fn surface_problem(text: &str) -> Option<&'static str> {
    if text.is_empty() {
        Some("is empty")
    } else if text.trim() != text {
        Some("has surrounding whitespace")
    } else if text.contains(['.', ',', '\n', '\r']) {
        Some("contains '.', ',' or a line break")
    } else {
        None
    }
}

/// Reports every tag that is not a member of its attribute's vocabulary.
/// `other:` escapes are accepted on open attributes when their text is
/// renderable and does not shadow a vocabulary tag.
pub fn validate_caption(c: &CaptionRecord, taxonomy: &Taxonomy) -> ValidationReport {
    let mut r = ValidationReport::default();
    for attr in Attribute::ALL {
        for tag in c.attribute_tags(attr) {
            let path = attr.name().to_string();
            match tag {
                Tag::Known(t) => {
                    if !taxonomy.contains(attr, t) {
                        r.push(path, format!("tag {t:?} is not in the {attr} vocabulary"));
                    }
                }
                Tag::Other(t) => {
                    if !attr.is_open() {
                        r.push(path, format!("{attr} is a closed set; other:{t:?} not allowed"));
                    } else if let Some(reason) = surface_problem(t) {
                        r.push(path, format!("other tag {t:?} {reason}"));
                    } else if taxonomy.vocabulary(attr).iter().any(|v| v.eq_ignore_ascii_case(t)) {
                        r.push(path, format!("other tag {t:?} shadows a vocabulary tag"));
                    }
                }
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> CaptionRecord {
        let mut c = CaptionRecord::default();
        c.insert(Attribute::Emotion, Tag::known("Neutral"));
        c.insert(Attribute::AcousticScene, Tag::known("Quiet indoor"));
        c
    }

    #[test]
    fn bundled_taxonomy_has_ten_attributes() {
        let t = Taxonomy::bundled();
        for a in Attribute::ALL {
            assert!(!t.vocabulary(a).is_empty(), "{a}");
        }
        assert_eq!(
            t.vocabulary(Attribute::Emotion),
            ["Neutral", "Happy", "Sad", "Angry", "Fearful", "Surprised", "Disgusted"]
        );
    }

    #[test]
    fn taxonomy_round_trips_through_json() {
        let t = Taxonomy::bundled();
        assert_eq!(&Taxonomy::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn taxonomy_rejects_duplicates_and_missing_rows() {
        let json = Taxonomy::bundled().to_json().replace("\"Sad\"", "\"Happy\"");
        assert!(matches!(Taxonomy::from_json(&json), Err(CaptionError::Taxonomy(m)) if m.contains("duplicate")));
        let json = r#"{"version":"v","attributes":{"Emotion":["Happy"]}}"#;
        assert!(matches!(Taxonomy::from_json(json), Err(CaptionError::Taxonomy(m)) if m.contains("missing")));
    }

    #[test]
    fn minimal_record_is_valid() {
        assert!(validate_caption(&minimal(), Taxonomy::bundled()).is_empty());
    }

    #[test]
    fn unknown_emotion_is_one_violation() {
        let mut c = minimal();
        c.insert(Attribute::Emotion, Tag::known("Melancholy"));
        let r = validate_caption(&c, Taxonomy::bundled());
        assert_eq!(r.len(), 1);
        assert_eq!(r.violations[0].path, "Emotion");
    }

    #[test]
    fn listed_vocalizations_are_valid() {
        let mut c = minimal();
        c.insert(Attribute::Vocalizations, Tag::known("Sighing"));
        c.insert(Attribute::Vocalizations, Tag::known("Coughing"));
        assert!(validate_caption(&c, Taxonomy::bundled()).is_empty());
    }

    #[test]
    fn every_vocabulary_tag_is_accepted() {
        let t = Taxonomy::bundled();
        for a in Attribute::ALL {
            for tag in t.vocabulary(a) {
                let mut c = CaptionRecord::default();
                c.insert(a, Tag::known(tag.clone()));
                assert!(validate_caption(&c, t).is_empty(), "{a}: {tag}");
            }
        }
    }

    #[test]
    fn other_escape_rules() {
        let t = Taxonomy::bundled();
        let mut c = CaptionRecord::default();
        c.insert(Attribute::AcousticScene, Tag::other("Train station"));
        assert!(validate_caption(&c, t).is_empty());
        c.insert(Attribute::Emotion, Tag::other("Melancholy"));
        assert_eq!(validate_caption(&c, t).len(), 1);
        let mut c = CaptionRecord::default();
        c.insert(Attribute::Tone, Tag::other("calm"));
        assert!(validate_caption(&c, t).violations[0].message.contains("shadows"));
        let mut c = CaptionRecord::default();
        c.insert(Attribute::Tone, Tag::other("a, b"));
        assert_eq!(validate_caption(&c, t).len(), 1);
    }

    #[test]
    fn tag_serialization() {
        let mut c = CaptionRecord::default();
        c.insert(Attribute::AcousticScene, Tag::other("Train station"));
        c.insert(Attribute::Emotion, Tag::known("Sad"));
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains(r#""acoustic_scene":"other:Train station""#), "{json}");
        let back: CaptionRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
