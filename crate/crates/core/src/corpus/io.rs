//! Line-delimited JSON corpus ingest and serialization.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{CorpusError, Dialogue};

/// A line that failed schema parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCorpus {
    pub dialogues: Vec<Dialogue>,
    pub rejects: Vec<Reject>,
}

/// Reads a corpus file. Unreadable files are fatal; malformed lines are
/// collected into `rejects` and never dropped silently.
pub fn parse_corpus(path: impl AsRef<Path>) -> Result<ParsedCorpus, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_corpus_str(&content))
}

/// [`parse_corpus`] on a dedicated pool of `jobs` workers.
pub fn parse_corpus_with_jobs(path: impl AsRef<Path>, jobs: usize) -> Result<ParsedCorpus, CorpusError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let path = path.as_ref().to_path_buf();
    pool.install(|| parse_corpus(&path))
}

/// Parses corpus text. Lines are parsed in parallel on the current rayon
/// pool; results keep file order regardless of worker count.
pub fn parse_corpus_str(content: &str) -> ParsedCorpus {
    let lines: Vec<(usize, &str)> = content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let parsed: Vec<Result<Dialogue, Reject>> = lines
        .par_iter()
        .map(|&(i, line)| {
            serde_json::from_str::<Dialogue>(line).map_err(|e| Reject {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect();
    let mut out = ParsedCorpus::default();
    for r in parsed {
        match r {
            Ok(d) => out.dialogues.push(d),
            Err(rej) => out.rejects.push(rej),
        }
    }
    out
}

/// Compact JSON with the canonical key order.
pub fn serialize_dialogue(d: &Dialogue) -> String {
    serde_json::to_string(d).expect("dialogue serializes")
}

pub fn write_corpus(path: impl AsRef<Path>, dialogues: &[Dialogue]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for d in dialogues {
        f.write_all(serialize_dialogue(d).as_bytes())?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = r#"{"id":"d1","language":"en","source":"real_life","quality_flags":[{"kind":"clean","spans":[]}],"turns":[{"role":"user","speaker_id":"u1","text":"hi there","audio":{"token_ids":[1,2,3],"frame_rate_hz":12.5,"duration_s":0.24},"alignment":[{"text_range":[0,8],"audio_range":[0,3],"index":0}]},{"role":"assistant","speaker_id":"a1","text":"hello","alignment":[]}]}"#;

    #[test]
    fn empty_file_gives_empty_corpus() {
        let p = parse_corpus_str("");
        assert!(p.dialogues.is_empty());
        assert!(p.rejects.is_empty());
    }

    #[test]
    fn single_valid_dialogue() {
        let p = parse_corpus_str(VALID);
        assert_eq!(p.dialogues.len(), 1);
        assert_eq!(p.dialogues[0].turns.len(), 2);
        assert!(p.rejects.is_empty());
    }

    #[test]
    fn missing_turns_is_rejected_with_line_number() {
        let bad = r#"{"id":"d2","language":"en","source":"podcast","quality_flags":[]}"#;
        let p = parse_corpus_str(&format!("{VALID}\n{bad}\n"));
        assert_eq!(p.dialogues.len(), 1);
        assert_eq!(p.rejects.len(), 1);
        assert_eq!(p.rejects[0].line, 2);
        assert!(
            p.rejects[0].reason.contains("missing field `turns`"),
            "{}",
            p.rejects[0].reason
        );
    }

    #[test]
    fn negative_token_id_is_a_schema_violation() {
        let bad = VALID.replace("[1,2,3]", "[1,-2,3]");
        let p = parse_corpus_str(&bad);
        assert_eq!(p.rejects.len(), 1);
    }

    #[test]
    fn serialization_is_byte_stable() {
        let p = parse_corpus_str(VALID);
        assert_eq!(serialize_dialogue(&p.dialogues[0]), VALID);
    }

    #[test]
    fn unreadable_file_is_fatal() {
        assert!(matches!(
            parse_corpus("/nonexistent/corpus.jsonl"),
            Err(CorpusError::Unreadable { .. })
        ));
    }
}
