// SPDX-License-Identifier: MIT OR Apache-2.0

//! Factorial agreement stimuli, human-experiment sessions and synthetic
//! training corpora.
//!
//! Trials are written one JSON object per line. Lines starting with `#` are
//! treated as headers (run manifests) and skipped on read.

mod corpus;
mod design;
mod generate;
pub mod lexicon;
mod session;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub use corpus::{corpus_vocabulary, synth_corpus, CorpusTemplate, COVERAGE_FLOOR};
pub use design::{conditions_for, conditions_for_name, Condition, Feature, Slot, TargetRole, Task};
pub use generate::{
    assignment_space, build_trial, expand, expand_with, generate_task, make_filler, make_filler_at,
    make_violation, reconstruct_base, ExpandOptions, FillerKind, Grammaticality, LexemeAssignment,
    ObjectNp, Sampling, Target, TokenEdit, Trial,
};
pub use lexicon::{build_lexicon, build_training_lexicon, Gender, Lexicon, Number};
pub use session::{assemble_sessions, DesignRow, Session, SessionPlan};

use crate::error::{Error, Result};

/// Serializes trials as JSONL (no header).
pub fn trials_to_jsonl(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        out.push_str(&serde_json::to_string(t).expect("trial serializes"));
        out.push('\n');
    }
    out
}

/// Parses JSONL, skipping blank lines and `#` header lines.
pub fn trials_from_jsonl(text: &str) -> Result<Vec<Trial>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::arg(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn write_trials(path: impl AsRef<Path>, header: Option<&str>, trials: &[Trial]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut body = String::new();
    if let Some(h) = header {
        body.push_str("# ");
        body.push_str(h);
        body.push('\n');
    }
    body.push_str(&trials_to_jsonl(trials));
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<Trial>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::arg(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}
