//! Dataset ingestion. Examples arrive word-pre-tokenized as JSONL, one
//! example per line, with role frames inlined so runs never depend on an
//! external labeler:
//!
//! ```text
//! {"id": "ex1", "words_a": [...], "words_b": [...],
//!  "srl_a": [{"pred": 2, "tags": [...]}], "srl_b": [...],
//!  "label": 1}                     // classification (integer class)
//!  "label": 3.2                    // regression (real score)
//!  "answers": [{"start": 0, "end": 2}]  // span task, [] = unanswerable
//! ```
//!
//! Loading is all-or-nothing: every bad line is reported, then the whole
//! file is rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TaskKind;
use crate::error::{Error, Result};
use crate::srl::{load_annotation, LabelVocab, RawFrame, SrlAnnotation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpan {
    /// Word index into the passage (`words_b`), inclusive.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    Real(f64),
    /// Acceptable gold spans; empty means unanswerable.
    Spans(Vec<AnswerSpan>),
}

#[derive(Debug, Clone)]
pub struct TaskExample {
    pub id: String,
    pub words_a: Vec<String>,
    pub words_b: Option<Vec<String>>,
    pub srl_a: SrlAnnotation,
    pub srl_b: Option<SrlAnnotation>,
    pub target: Target,
}

impl TaskExample {
    /// Gold answer strings for span scoring, in passage order.
    pub fn answer_texts(&self) -> Vec<String> {
        let (Target::Spans(spans), Some(words)) = (&self.target, &self.words_b) else {
            return Vec::new();
        };
        spans
            .iter()
            .map(|s| words[s.start..=s.end].join(" "))
            .collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExample {
    id: String,
    words_a: Vec<String>,
    #[serde(default)]
    words_b: Option<Vec<String>>,
    srl_a: Vec<RawFrame>,
    #[serde(default)]
    srl_b: Option<Vec<RawFrame>>,
    #[serde(default)]
    label: Option<serde_json::Value>,
    #[serde(default)]
    answers: Option<Vec<AnswerSpan>>,
}

fn parse_target(raw: &RawExample, kind: TaskKind) -> std::result::Result<Target, String> {
    match kind {
        TaskKind::Classification => {
            if raw.answers.is_some() {
                return Err("classification example carries \"answers\"".into());
            }
            let v = raw.label.as_ref().ok_or("missing \"label\"")?;
            let n = v
                .as_u64()
                .ok_or_else(|| format!("label must be a nonnegative integer, got {v}"))?;
            Ok(Target::Class(n as usize))
        }
        TaskKind::Regression => {
            if raw.answers.is_some() {
                return Err("regression example carries \"answers\"".into());
            }
            let v = raw.label.as_ref().ok_or("missing \"label\"")?;
            let x = v
                .as_f64()
                .ok_or_else(|| format!("label must be a number, got {v}"))?;
            Ok(Target::Real(x))
        }
        TaskKind::Span => {
            if raw.label.is_some() {
                return Err("span example carries \"label\"".into());
            }
            let spans = raw.answers.clone().ok_or("missing \"answers\"")?;
            Ok(Target::Spans(spans))
        }
    }
}

fn parse_example(
    raw: RawExample,
    kind: TaskKind,
    labels: &LabelVocab,
) -> std::result::Result<TaskExample, String> {
    if raw.words_a.is_empty() {
        return Err("words_a is empty".into());
    }
    if raw.words_b.is_some() != raw.srl_b.is_some() {
        return Err("words_b and srl_b must be given together".into());
    }
    for w in raw.words_a.iter().chain(raw.words_b.iter().flatten()) {
        if w.is_empty() || w.chars().any(char::is_whitespace) {
            return Err(format!("word {w:?} is empty or contains whitespace"));
        }
    }
    let target = parse_target(&raw, kind)?;
    if let Target::Spans(spans) = &target {
        let words_b = raw
            .words_b
            .as_ref()
            .ok_or("span example needs a passage (words_b)")?;
        for s in spans {
            if s.start > s.end || s.end >= words_b.len() {
                return Err(format!(
                    "answer span {}..{} outside passage of {} words",
                    s.start,
                    s.end,
                    words_b.len()
                ));
            }
        }
    }
    let srl_a = load_annotation(&raw.srl_a, raw.words_a.len(), labels)
        .map_err(|e| format!("srl_a: {e}"))?;
    let srl_b = match (&raw.words_b, &raw.srl_b) {
        (Some(words), Some(frames)) => {
            if words.is_empty() {
                return Err("words_b is empty (omit it instead)".into());
            }
            Some(load_annotation(frames, words.len(), labels).map_err(|e| format!("srl_b: {e}"))?)
        }
        _ => None,
    };
    Ok(TaskExample {
        id: raw.id,
        words_a: raw.words_a,
        words_b: raw.words_b,
        srl_a,
        srl_b,
        target,
    })
}

#[derive(Debug)]
pub struct LoadedDataset {
    pub examples: Vec<TaskExample>,
    pub warnings: Vec<String>,
}

/// Parse and validate a whole JSONL file. Any invalid line fails the load,
/// but only after every line has been checked, so the error's report names
/// all of them at once.
pub fn load_dataset(path: &Path, kind: TaskKind, labels: &LabelVocab) -> Result<LoadedDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut examples = Vec::new();
    let mut rejects: Vec<String> = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawExample = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                rejects.push(format!("line {lineno}: {e}"));
                continue;
            }
        };
        if !seen_ids.insert(raw.id.clone()) {
            rejects.push(format!("line {lineno}: duplicate id {:?}", raw.id));
            continue;
        }
        match parse_example(raw, kind, labels) {
            Ok(ex) => examples.push(ex),
            Err(msg) => rejects.push(format!("line {lineno}: {msg}")),
        }
    }
    if !rejects.is_empty() {
        return Err(Error::DatasetInvalid {
            path: path.display().to_string(),
            count: rejects.len(),
            report: rejects.join("\n"),
        });
    }
    let mut warnings = Vec::new();
    if examples.is_empty() {
        warnings.push(format!("{}: no examples", path.display()));
    }
    Ok(LoadedDataset { examples, warnings })
}

/// Example in wire form, for writing datasets. Exactly one of `label` /
/// `answers` should be set, matching the task kind.
#[derive(Debug, Clone, Serialize)]
pub struct WireExample {
    pub id: String,
    pub words_a: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub words_b: Option<Vec<String>>,
    pub srl_a: Vec<RawFrame>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub srl_b: Option<Vec<RawFrame>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<AnswerSpan>>,
}

/// Serialize examples to the wire format, one JSON object per line.
pub fn save_dataset(path: &Path, examples: &[WireExample]) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
