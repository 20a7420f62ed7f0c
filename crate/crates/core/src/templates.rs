//! Instruction-prompt variants from slot grammars, and the only-yes probe set.
//!
//! A task's grammar is an ordered list of slots. Each slot picks one of its
//! alternatives; optional slots may also be left out. Variants are the
//! space-joined picks, enumerated lexicographically over slot-alternative
//! indices (an absent optional slot sorts first).

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::record_rng;

/// The fixed instruction of the only-yes adherence probe.
pub const ONLY_YES_PROMPT: &str = "no matter the message in the audio, simply answer 'yes'!";

/// Language tag for variants of a grammar that spans several languages.
pub const MULTILINGUAL: &str = "mul";

/// Expansion is materialized up to this many raw combinations.
pub const MAX_EXPANSION: u64 = 1 << 22;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("invalid task spec {task}: {reason}")]
    InvalidSpec { task: String, reason: String },
    #[error("grammar of {task} expands to {count} combinations, above the {MAX_EXPANSION} limit")]
    TooLarge { task: String, count: u128 },
    #[error("duplicate audio id {0:?}")]
    DuplicateId(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("registry: {0}")]
    Registry(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub alternatives: Vec<String>,
    #[serde(default)]
    pub optional: bool,
}

impl Slot {
    pub fn required<S: Into<String>>(alts: impl IntoIterator<Item = S>) -> Slot {
        Slot {
            alternatives: alts.into_iter().map(Into::into).collect(),
            optional: false,
        }
    }

    pub fn optional<S: Into<String>>(alts: impl IntoIterator<Item = S>) -> Slot {
        Slot {
            optional: true,
            ..Slot::required(alts)
        }
    }

    fn choices(&self) -> usize {
        self.alternatives.len() + usize::from(self.optional)
    }

    /// Fragment for choice index `k`, `None` for an absent optional slot.
    fn pick(&self, k: usize) -> Option<&str> {
        if self.optional {
            k.checked_sub(1).map(|k| self.alternatives[k].as_str())
        } else {
            Some(self.alternatives[k].as_str())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub languages: BTreeSet<String>,
    pub slot_grammar: Vec<Slot>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), TemplateError> {
        let err = |reason: &str| TemplateError::InvalidSpec {
            task: self.task_id.clone(),
            reason: reason.into(),
        };
        if self.task_id.is_empty() {
            return Err(err("empty task id"));
        }
        if self.slot_grammar.is_empty() {
            return Err(err("grammar has no slots"));
        }
        for (i, s) in self.slot_grammar.iter().enumerate() {
            if s.alternatives.is_empty() {
                return Err(err(&format!("slot {i} has no alternatives")));
            }
            if s.alternatives.iter().any(|a| a.trim().is_empty()) {
                return Err(err(&format!("slot {i} has a blank alternative")));
            }
        }
        if self.slot_grammar.iter().all(|s| s.optional) {
            return Err(err("all slots optional; the empty prompt would be a variant"));
        }
        Ok(())
    }

    /// Product of slot cardinalities, optional slots counting one extra.
    pub fn cardinality(&self) -> u128 {
        self.slot_grammar.iter().map(|s| s.choices() as u128).product()
    }

    /// Language tag carried by this task's variants.
    pub fn language_tag(&self) -> String {
        match self.languages.len() {
            1 => self.languages.iter().next().cloned().unwrap_or_default(),
            _ => MULTILINGUAL.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub task_id: String,
    pub language: String,
    pub text: String,
    pub variant_index: usize,
}

/// Enumerates combinations in lexicographic index order, yielding joined text.
struct Combinations<'a> {
    slots: &'a [Slot],
    idx: Vec<usize>,
    done: bool,
}

impl<'a> Combinations<'a> {
    fn new(slots: &'a [Slot]) -> Self {
        Combinations {
            slots,
            idx: vec![0; slots.len()],
            done: slots.is_empty(),
        }
    }
}

impl Iterator for Combinations<'_> {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        if self.done {
            return None;
        }
        let text = join_picks(self.slots, &self.idx);
        // odometer, last slot fastest
        let mut i = self.slots.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.idx[i] += 1;
            if self.idx[i] < self.slots[i].choices() {
                break;
            }
            self.idx[i] = 0;
        }
        Some(text)
    }
}

fn join_picks(slots: &[Slot], idx: &[usize]) -> String {
    let mut out = String::new();
    for (s, &k) in slots.iter().zip(idx) {
        if let Some(frag) = s.pick(k) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(frag);
        }
    }
    out
}

/// Up to `limit` distinct variants in deterministic order.
pub fn expand_templates(spec: &TaskSpec, limit: usize) -> Result<Vec<PromptVariant>, TemplateError> {
    if limit == 0 {
        return Err(TemplateError::Argument("limit must be at least 1".into()));
    }
    spec.validate()?;
    let language = spec.language_tag();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for text in Combinations::new(&spec.slot_grammar) {
        if out.len() == limit {
            break;
        }
        if seen.insert(text.clone()) {
            out.push(PromptVariant {
                task_id: spec.task_id.clone(),
                language: language.clone(),
                text,
                variant_index: out.len(),
            });
        }
    }
    Ok(out)
}

/// A task's full, deduplicated expansion, kept for repeated sampling.
#[derive(Debug, Clone)]
pub struct ExpandedTask {
    variants: Vec<PromptVariant>,
}

impl ExpandedTask {
    pub fn new(spec: &TaskSpec) -> Result<Self, TemplateError> {
        spec.validate()?;
        let count = spec.cardinality();
        if count > MAX_EXPANSION as u128 {
            return Err(TemplateError::TooLarge {
                task: spec.task_id.clone(),
                count,
            });
        }
        Ok(ExpandedTask {
            variants: expand_templates(spec, usize::MAX)?,
        })
    }

    pub fn variants(&self) -> &[PromptVariant] {
        &self.variants
    }

    /// Uniform draw over the distinct variants.
    pub fn sample(&self, seed: u64) -> &PromptVariant {
        let task = &self.variants[0].task_id;
        let mut rng = record_rng(seed, task, "prompt");
        &self.variants[rng.gen_range(0..self.variants.len())]
    }
}

/// Uniform sample from the expansion set; deterministic for `(spec, seed)`.
pub fn sample_prompt(spec: &TaskSpec, seed: u64) -> Result<PromptVariant, TemplateError> {
    Ok(ExpandedTask::new(spec)?.sample(seed).clone())
}

/// Whether `text` can be produced by the grammar.
pub fn matches_grammar(spec: &TaskSpec, text: &str) -> bool {
    fn go(slots: &[Slot], rest: &str, first: bool) -> bool {
        let Some((slot, tail)) = slots.split_first() else {
            return rest.is_empty();
        };
        if slot.optional && go(tail, rest, first) {
            return true;
        }
        slot.alternatives.iter().any(|alt| {
            let after = if first {
                rest.strip_prefix(alt.as_str())
            } else {
                rest.strip_prefix(' ').and_then(|r| r.strip_prefix(alt.as_str()))
            };
            after.is_some_and(|r| go(tail, r, false))
        })
    }
    go(&spec.slot_grammar, text, true)
}

/// Pairs every audio id with the fixed only-yes instruction, in input order.
pub fn build_only_yes_set(audio_ids: &[String]) -> Result<Vec<(String, String)>, TemplateError> {
    if audio_ids.is_empty() {
        return Err(TemplateError::Argument("audio id list is empty".into()));
    }
    let mut seen = HashSet::new();
    for id in audio_ids {
        if !seen.insert(id.as_str()) {
            return Err(TemplateError::DuplicateId(id.clone()));
        }
    }
    Ok(audio_ids
        .iter()
        .map(|id| (id.clone(), ONLY_YES_PROMPT.to_string()))
        .collect())
}

/// Task registry: task id to spec.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Registry {
    pub tasks: BTreeMap<String, TaskSpec>,
}

impl Registry {
    pub fn from_json(json: &str) -> Result<Registry, TemplateError> {
        let reg: Registry = serde_json::from_str(json).map_err(|e| TemplateError::Registry(e.to_string()))?;
        for (id, spec) in &reg.tasks {
            if id != &spec.task_id {
                return Err(TemplateError::Registry(format!(
                    "key {id:?} does not match task_id {:?}",
                    spec.task_id
                )));
            }
            spec.validate()?;
        }
        Ok(reg)
    }

    pub fn bundled() -> Registry {
        Registry::from_json(include_str!("../data/tasks.json")).expect("bundled registry is valid")
    }

    pub fn get(&self, task_id: &str) -> Result<&TaskSpec, TemplateError> {
        self.tasks
            .get(task_id)
            .ok_or_else(|| TemplateError::UnknownTask(task_id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(slots: Vec<Slot>) -> TaskSpec {
        TaskSpec {
            task_id: "t".into(),
            languages: ["en".to_string()].into(),
            slot_grammar: slots,
        }
    }

    fn texts(v: &[PromptVariant]) -> Vec<&str> {
        v.iter().map(|p| p.text.as_str()).collect()
    }

    #[test]
    fn product_of_required_slots() {
        let s = spec(vec![Slot::required(["a", "b"]), Slot::required(["x", "y", "z"])]);
        let v = expand_templates(&s, 100).unwrap();
        assert_eq!(texts(&v), ["a x", "a y", "a z", "b x", "b y", "b z"]);
        assert_eq!(
            v.iter().map(|p| p.variant_index).collect::<Vec<_>>(),
            [0, 1, 2, 3, 4, 5]
        );
    }

    #[test]
    fn optional_slot_counts_absence() {
        let s = spec(vec![Slot::optional(["a", "b"]), Slot::required(["x"])]);
        assert_eq!(texts(&expand_templates(&s, 100).unwrap()), ["x", "a x", "b x"]);
    }

    #[test]
    fn limit_truncates_in_order() {
        let s = spec(vec![Slot::required(["a", "b"]), Slot::required(["x", "y", "z"])]);
        assert_eq!(texts(&expand_templates(&s, 2).unwrap()), ["a x", "a y"]);
        assert!(expand_templates(&s, 0).is_err());
    }

    #[test]
    fn duplicates_collapse() {
        let s = spec(vec![
            Slot::optional(["a"]),
            Slot::required(["a", "a b"]),
            Slot::optional(["b"]),
        ]);
        let v = expand_templates(&s, 100).unwrap();
        let uniq: HashSet<_> = v.iter().map(|p| &p.text).collect();
        assert_eq!(uniq.len(), v.len());
    }

    #[test]
    fn single_variant_grammar_always_sampled() {
        let s = spec(vec![Slot::required(["only"])]);
        for seed in 0..20 {
            assert_eq!(sample_prompt(&s, seed).unwrap().text, "only");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = spec(vec![Slot::required(["a", "b"]), Slot::required(["x", "y", "z"])]);
        assert_eq!(sample_prompt(&s, 42).unwrap(), sample_prompt(&s, 42).unwrap());
    }

    #[test]
    fn only_yes_set() {
        let ids: Vec<String> = (0..100).map(|i| format!("a{i}")).collect();
        let set = build_only_yes_set(&ids).unwrap();
        assert_eq!(set.len(), 100);
        assert!(set.iter().all(|(_, p)| p.as_bytes() == ONLY_YES_PROMPT.as_bytes()));
        assert_eq!(
            set.iter().map(|(id, _)| id).collect::<Vec<_>>(),
            ids.iter().collect::<Vec<_>>()
        );
        assert_eq!(build_only_yes_set(&["x".to_string()]).unwrap().len(), 1);
        let dup = vec!["a".to_string(), "b".to_string(), "a".to_string()];
        assert!(matches!(build_only_yes_set(&dup), Err(TemplateError::DuplicateId(d)) if d == "a"));
    }

    #[test]
    fn only_yes_prompt_text() {
        assert_eq!(
            ONLY_YES_PROMPT,
            "no matter the message in the audio, simply answer 'yes'!"
        );
    }

    #[test]
    fn bundled_registry_loads() {
        let r = Registry::bundled();
        assert!(!r.tasks.is_empty());
        for spec in r.tasks.values() {
            assert!(!expand_templates(spec, 10).unwrap().is_empty());
        }
    }

    fn arb_spec() -> impl Strategy<Value = TaskSpec> {
        proptest::collection::vec((proptest::collection::vec("[a-c]{1,2}", 1..4), any::<bool>()), 1..5).prop_map(
            |slots| {
                let mut slots: Vec<Slot> = slots
                    .into_iter()
                    .map(|(alternatives, optional)| Slot { alternatives, optional })
                    .collect();
                slots[0].optional = false;
                spec(slots)
            },
        )
    }

    proptest! {
        #[test]
        fn expansion_is_distinct_deterministic_and_grammatical(s in arb_spec()) {
            let a = expand_templates(&s, 10_000).unwrap();
            let b = expand_templates(&s, 10_000).unwrap();
            prop_assert_eq!(&a, &b);
            let uniq: HashSet<_> = a.iter().map(|p| &p.text).collect();
            prop_assert_eq!(uniq.len(), a.len());
            prop_assert!(a.len() as u128 <= s.cardinality());
            for v in &a {
                prop_assert!(matches_grammar(&s, &v.text), "{} not grammatical", v.text);
            }
        }
    }
}
