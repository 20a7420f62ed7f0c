//! Evaluation arithmetic: edit-distance error rates, only-yes strict
//! accuracy, cosine similarity and A2T/A2A gaps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{0}")]
    Argument(String),
}

type Result<T> = std::result::Result<T, MetricError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOps {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
}

impl EditOps {
    pub fn distance(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Errors over reference length; an empty reference divides by one.
    pub fn rate(&self) -> f64 {
        self.distance() as f64 / self.reference_length.max(1) as f64
    }

    pub fn merge(self, other: EditOps) -> EditOps {
        EditOps {
            substitutions: self.substitutions + other.substitutions,
            insertions: self.insertions + other.insertions,
            deletions: self.deletions + other.deletions,
            reference_length: self.reference_length + other.reference_length,
        }
    }
}

/// Unit-cost Levenshtein alignment. Among minimal alignments, ties prefer
/// substitution, then deletion, then insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditOps {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for (j, cell) in d.iter_mut().take(w).enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut ops = EditOps {
        reference_length: n,
        ..EditOps::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                if !same {
                    ops.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    ops
}

/// Lowercase, drop everything but letters, digits and whitespace, collapse
/// whitespace runs.
pub fn normalize(text: &str) -> String {
    let kept: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Standard,
    Raw,
}

impl Normalization {
    fn apply(self, text: &str) -> String {
        match self {
            Normalization::Standard => normalize(text),
            Normalization::Raw => text.to_string(),
        }
    }
}

/// Han, Hiragana, Katakana: scored per character in WER.
fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x31F0..=0x31FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

pub fn char_tokens(text: &str) -> Vec<char> {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

pub fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut run = String::new();
        for c in word.chars() {
            if is_cjk(c) {
                if !run.is_empty() {
                    out.push(std::mem::take(&mut run));
                }
                out.push(c.to_string());
            } else {
                run.push(c);
            }
        }
        if !run.is_empty() {
            out.push(run);
        }
    }
    out
}

pub fn cer_ops(reference: &str, hypothesis: &str, norm: Normalization) -> EditOps {
    edit_distance(
        &char_tokens(&norm.apply(reference)),
        &char_tokens(&norm.apply(hypothesis)),
    )
}

pub fn wer_ops(reference: &str, hypothesis: &str, norm: Normalization) -> EditOps {
    edit_distance(
        &word_tokens(&norm.apply(reference)),
        &word_tokens(&norm.apply(hypothesis)),
    )
}

pub fn cer(reference: &str, hypothesis: &str) -> f64 {
    cer_ops(reference, hypothesis, Normalization::Standard).rate()
}

pub fn wer(reference: &str, hypothesis: &str) -> f64 {
    wer_ops(reference, hypothesis, Normalization::Standard).rate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Cer,
    Wer,
}

/// Pooled corpus-level rate: total errors over total reference length.
pub fn corpus_rate(pairs: &[(String, String)], kind: RateKind, norm: Normalization) -> EditOps {
    pairs
        .iter()
        .map(|(r, h)| match kind {
            RateKind::Cer => cer_ops(r, h, norm),
            RateKind::Wer => wer_ops(r, h, norm),
        })
        .fold(EditOps::default(), EditOps::merge)
}

const TERMINAL_PUNCT: &[char] = &['.', ',', '!', '?', '。', '！', '？', '，'];

/// Whether a response is exactly "yes" after trimming whitespace and
/// terminal punctuation and case-folding.
pub fn is_strict_yes(response: &str) -> bool {
    let core = response.trim().trim_end_matches(TERMINAL_PUNCT).trim();
    core.to_lowercase() == "yes"
}

pub fn only_yes_accuracy<S: AsRef<str>>(responses: &[S]) -> Result<f64> {
    if responses.is_empty() {
        return Err(MetricError::Argument("no responses".into()));
    }
    let passed = responses.iter().filter(|r| is_strict_yes(r.as_ref())).count();
    Ok(passed as f64 / responses.len() as f64)
}

fn pairwise(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise(a) + pairwise(b)
        }
    }
}

/// `a·b / (‖a‖‖b‖)`, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(MetricError::Argument(format!(
            "vector lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(MetricError::Argument("non-finite component".into()));
    }
    // rescale by the largest magnitude so squares cannot overflow or underflow
    let scale = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (sa, sb) = (scale(a), scale(b));
    if sa == 0.0 || sb == 0.0 {
        return Err(MetricError::Argument("zero vector".into()));
    }
    let a: Vec<f64> = a.iter().map(|x| x / sa).collect();
    let b: Vec<f64> = b.iter().map(|x| x / sb).collect();
    let dot = pairwise(&a.iter().zip(&b).map(|(x, y)| x * y).collect::<Vec<_>>());
    let na = pairwise(&a.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    let nb = pairwise(&b.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub similarity: f64,
    /// Fraction in [0, 1].
    pub consistency: f64,
}

impl AblationCell {
    pub fn new(similarity: f64, consistency: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&similarity) || !(0.0..=1.0).contains(&consistency) {
            return Err(MetricError::Argument(format!(
                "cell ({similarity}, {consistency}) out of range"
            )));
        }
        Ok(AblationCell {
            similarity,
            consistency,
        })
    }
}

/// Componentwise `a2a − a2t`: (Δsimilarity, Δconsistency).
pub fn ablation_gap(a2t: AblationCell, a2a: AblationCell) -> (f64, f64) {
    (a2a.similarity - a2t.similarity, a2a.consistency - a2t.consistency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain recursive Levenshtein.
    fn oracle(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = oracle(ra, rb) + usize::from(x != y);
                sub.min(oracle(ra, b) + 1).min(oracle(a, rb) + 1)
            }
        }
    }

    fn all_ab(max: usize) -> Vec<Vec<u8>> {
        let mut out = vec![vec![]];
        for len in 1..=max {
            for bits in 0..(1u32 << len) {
                out.push((0..len).map(|i| if bits >> i & 1 == 1 { b'b' } else { b'a' }).collect());
            }
        }
        out
    }

    #[test]
    fn exhaustive_ab_up_to_4() {
        // the full length-6 sweep lives in the acceptance suite
        let words = all_ab(4);
        for a in &words {
            for b in &words {
                let ops = edit_distance(a, b);
                assert_eq!(ops.distance(), oracle(a, b));
                assert_eq!(
                    ops.insertions as isize - ops.deletions as isize,
                    b.len() as isize - a.len() as isize
                );
            }
        }
    }

    #[test]
    fn examples() {
        let c = |s: &str| s.chars().collect::<Vec<_>>();
        assert_eq!(edit_distance(&c("abc"), &c("abc")).rate(), 0.0);
        let ops = edit_distance(&c("abc"), &c("abd"));
        assert_eq!(ops.substitutions, 1);
        assert!((ops.rate() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(edit_distance(&c("kitten"), &c("sitting")).distance(), 3);
        assert!((wer("hello world", "hello word") - 0.5).abs() < 1e-15);
        assert_eq!(cer("Hello, World!", "hello world"), 0.0);
    }

    #[test]
    fn empty_reference() {
        let ops = edit_distance::<char>(&[], &['a', 'b']);
        assert_eq!(ops.insertions, 2);
        assert_eq!(ops.rate(), 2.0);
        assert_eq!(edit_distance::<char>(&[], &[]).rate(), 0.0);
    }

    #[test]
    fn pooled_differs_from_mean_of_rates() {
        let pairs = vec![
            ("a".to_string(), "b".to_string()),
            ("a b c d".to_string(), "a b c d".to_string()),
        ];
        let pooled = corpus_rate(&pairs, RateKind::Wer, Normalization::Standard);
        assert_eq!(pooled.distance(), 1);
        assert_eq!(pooled.reference_length, 5);
        assert!((pooled.rate() - 0.2).abs() < 1e-15);
        // mean of per-utterance rates would be (1 + 0) / 2
        assert!((pooled.rate() - 0.5).abs() > 0.1);
    }

    #[test]
    fn cjk_words_are_characters() {
        assert_eq!(word_tokens("今天 天气好 ok"), ["今", "天", "天", "气", "好", "ok"]);
        assert_eq!(word_tokens("これはpen"), ["こ", "れ", "は", "pen"]);
        assert!((wer("今天天气好", "今天天汽好") - 0.2).abs() < 1e-15);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("  Hello,   WORLD!! "), "hello world");
        assert_eq!(normalize("你好，世界。"), "你好 世界");
        assert_eq!(cer_ops("A b", "a b", Normalization::Raw).substitutions, 1);
    }

    #[test]
    fn only_yes_rules() {
        let r = only_yes_accuracy(&["yes", "Yes.", "The audio says hello"]).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        assert!(is_strict_yes("  YES!  "));
        assert!(is_strict_yes("yes。"));
        assert!(!is_strict_yes("yes, it is"));
        assert!(!is_strict_yes("yeah"));
        assert!(!is_strict_yes("'yes'"));
        assert!(only_yes_accuracy::<&str>(&[]).is_err());
        let mut batch = vec!["yes"; 88];
        batch.extend(vec!["no"; 12]);
        assert_eq!(only_yes_accuracy(&batch).unwrap(), 0.88);
        assert_eq!(only_yes_accuracy(&["Yes"; 100]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_basics() {
        let v = [0.3, -1.0, 2.5];
        assert_eq!(cosine(&v, &v).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(cosine(&[1e-300, 0.0], &[1e300, 0.0]).unwrap(), 1.0);
    }

    /// Double-double arithmetic for the cosine oracle.
    #[derive(Clone, Copy)]
    struct Dd(f64, f64);

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }

    fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd(p, a.mul_add(b, -p))
    }

    fn dd_add(x: Dd, y: Dd) -> Dd {
        let s = two_sum(x.0, y.0);
        let e = s.1 + x.1 + y.1;
        two_sum(s.0, e)
    }

    fn dd_dot(a: &[f64], b: &[f64]) -> f64 {
        let mut acc = Dd(0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            acc = dd_add(acc, two_prod(*x, *y));
        }
        acc.0 + acc.1
    }

    #[test]
    fn cosine_matches_extended_precision() {
        use rand::Rng;
        let mut rng = crate::seed::record_rng(9, "cosine", "test");
        for _ in 0..1000 {
            let n = rng.gen_range(1..64);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expect = dd_dot(&a, &b) / (dd_dot(&a, &a).sqrt() * dd_dot(&b, &b).sqrt());
            assert!((cosine(&a, &b).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn ablation_rows() {
        let cell = |s, c| AblationCell::new(s, c).unwrap();
        let (ds, dc) = ablation_gap(cell(0.816, 0.708), cell(0.783, 0.633));
        assert!((ds + 0.033).abs() < 1e-9);
        assert!((dc + 0.075).abs() < 1e-9);
        let (ds, _) = ablation_gap(cell(0.594, 0.241), cell(0.549, 0.129));
        assert!((ds + 0.045).abs() < 1e-9);
        assert_eq!(ablation_gap(cell(0.5, 0.5), cell(0.5, 0.5)), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn swap_exchanges_insertions_and_deletions(a in "[a-c]{0,8}", b in "[a-c]{0,8}") {
            let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            let x = edit_distance(&a, &b);
            let y = edit_distance(&b, &a);
            prop_assert_eq!(x.distance(), y.distance());
            prop_assert_eq!(x.distance(), x.substitutions + x.insertions + x.deletions);
            prop_assert_eq!(x.insertions as isize - x.deletions as isize, y.deletions as isize - y.insertions as isize);
        }

        #[test]
        fn triangle_inequality(a in "[ab]{0,6}", b in "[ab]{0,6}", c in "[ab]{0,6}") {
            let d = |x: &str, y: &str| oracle(x.as_bytes(), y.as_bytes());
            prop_assert_eq!(edit_distance(a.as_bytes(), c.as_bytes()).distance(), d(&a, &c));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn cosine_in_range(a in prop::collection::vec(-1e6..1e6f64, 1..16), b in prop::collection::vec(-1e6..1e6f64, 1..16)) {
            let n = a.len().min(b.len());
            if let Ok(c) = cosine(&a[..n], &b[..n]) {
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }

        #[test]
        fn only_yes_monotone(flags in prop::collection::vec(any::<bool>(), 1..50), flip in any::<prop::sample::Index>()) {
            let resp: Vec<&str> = flags.iter().map(|&f| if f { "yes" } else { "no" }).collect();
            let before = only_yes_accuracy(&resp).unwrap();
            prop_assert!((0.0..=1.0).contains(&before));
            let mut more = resp.clone();
            more[flip.index(resp.len())] = "yes";
            prop_assert!(only_yes_accuracy(&more).unwrap() >= before);
        }
    }
}
