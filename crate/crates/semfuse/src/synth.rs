//! Deterministic synthetic datasets. Everything here is a pure function
//! of hard-coded seeds, so the committed fixture files can be regenerated
//! and byte-compared at any time.
//!
//! Three families:
//! - `overfit64`: 64 three-class examples whose class is flagged by a
//!   marker word, for memorization sanity checks.
//! - `semsig`: every sentence appears once per class with identical words
//!   and class-specific role frames, so the label is a function of the
//!   frames alone and a text-only model cannot beat coin flipping on
//!   held-out sentences.
//! - `span_set`: short template QA with word-span answers and a share of
//!   unanswerable questions.

use std::path::Path;

use serde_json::json;

use crate::data::{save_dataset, AnswerSpan, WireExample};
use crate::error::Result;
use crate::rng::Rng;
use crate::srl::RawFrame;

pub const RUNNING_EXAMPLE_WORDS: [&str; 8] = [
    "reconstructing",
    "dormitories",
    "will",
    "not",
    "be",
    "approved",
    "by",
    "cavanaugh",
];

pub const RUNNING_EXAMPLE_PIECES: [&str; 14] = [
    "rec",
    "##ons",
    "##tructing",
    "dorm",
    "##itor",
    "##ies",
    "will",
    "not",
    "be",
    "approved",
    "by",
    "ca",
    "##vana",
    "##ugh",
];

const MARKERS: [&str; 3] = ["alpha", "beta", "gamma"];
const NOUNS: [&str; 10] = [
    "cats", "dogs", "birds", "fish", "farmer", "teacher", "doctor", "child", "baker", "friend",
];
const VERBS: [&str; 8] = [
    "sleeps", "barks", "sings", "swims", "feeds", "helps", "watches", "chases",
];
const ADVERBS: [&str; 5] = ["loudly", "quietly", "slowly", "today", "never"];
const ADJECTIVES: [&str; 6] = ["red", "blue", "big", "small", "old", "new"];

/// Fixture vocabulary: specials, the pieces the running example needs,
/// and every whole word the synthetic sets draw from. The multi-piece
/// adverbs keep subword pooling honest in trained fixtures.
pub fn fixture_vocab_lines() -> Vec<String> {
    let mut lines: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    lines.extend(RUNNING_EXAMPLE_PIECES.iter().map(|s| s.to_string()));
    for w in MARKERS
        .iter()
        .chain(NOUNS.iter())
        .chain(VERBS.iter())
        .chain(ADJECTIVES.iter())
        .chain(["who", "what", "the", "loud", "quiet", "slow", "##ly", "never", "today"].iter())
    {
        lines.push(w.to_string());
    }
    lines
}

fn tags(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// The running example with both of its predicate frames.
pub fn running_example() -> WireExample {
    WireExample {
        id: "running-example".into(),
        words_a: RUNNING_EXAMPLE_WORDS.iter().map(|s| s.to_string()).collect(),
        words_b: None,
        srl_a: vec![
            RawFrame {
                pred: 0,
                tags: tags(&["V", "B-ARG1", "O", "O", "O", "O", "O", "O"]),
            },
            RawFrame {
                pred: 5,
                tags: tags(&[
                    "B-ARG1",
                    "I-ARG1",
                    "B-ARGM-MOD",
                    "B-ARGM-NEG",
                    "O",
                    "V",
                    "B-ARG0",
                    "I-ARG0",
                ]),
            },
        ],
        srl_b: None,
        label: Some(json!(0)),
        answers: None,
    }
}

/// 64 examples, class i % 3, marked by the class's marker word. Trivially
/// separable on text alone; exists to verify memorization capacity.
pub fn overfit64() -> Vec<WireExample> {
    let mut rng = Rng::new(101);
    (0..64)
        .map(|i| {
            let class = i % 3;
            let noun = NOUNS[rng.below(NOUNS.len())];
            let verb = VERBS[rng.below(VERBS.len())];
            let adverb = ADVERBS[rng.below(ADVERBS.len())];
            WireExample {
                id: format!("ov{i}"),
                words_a: vec![
                    MARKERS[class].into(),
                    noun.into(),
                    verb.into(),
                    adverb.into(),
                ],
                words_b: None,
                srl_a: vec![RawFrame {
                    pred: 2,
                    tags: tags(&["B-ARG0", "I-ARG0", "V", "B-ARGM-MNR"]),
                }],
                srl_b: None,
                label: Some(json!(class)),
                answers: None,
            }
        })
        .collect()
}

fn class_frame(class: usize) -> RawFrame {
    let subject = if class == 0 { "B-ARG0" } else { "B-ARG1" };
    RawFrame {
        pred: 1,
        tags: tags(&[subject, "V", "B-ARGM-MNR"]),
    }
}

/// Train/dev pairs where the words never decide the class: each distinct
/// sentence occurs once as class 0 (subject tagged ARG0) and once as
/// class 1 (subject tagged ARG1). Dev sentences are disjoint from train.
pub fn semsig() -> (Vec<WireExample>, Vec<WireExample>) {
    let mut rng = Rng::new(202);
    let mut bases: Vec<(String, String, String)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    while bases.len() < 80 {
        let b = (
            NOUNS[rng.below(NOUNS.len())].to_string(),
            VERBS[rng.below(VERBS.len())].to_string(),
            ADVERBS[rng.below(ADVERBS.len())].to_string(),
        );
        if seen.insert(b.clone()) {
            bases.push(b);
        }
    }
    let build = |split: &str, chunk: &[(String, String, String)]| {
        chunk
            .iter()
            .enumerate()
            .flat_map(|(i, (n, v, a))| {
                [0usize, 1].into_iter().map(move |class| WireExample {
                    id: format!("{split}{i}{}", ["a", "b"][class]),
                    words_a: vec![n.clone(), v.clone(), a.clone()],
                    words_b: None,
                    srl_a: vec![class_frame(class)],
                    srl_b: None,
                    label: Some(json!(class)),
                    answers: None,
                })
            })
            .collect::<Vec<_>>()
    };
    (build("tr", &bases[..48]), build("dv", &bases[48..]))
}

/// Template QA. Two passage shapes; "who" questions answer with the
/// subject span, "what" questions are unanswerable.
pub fn span_set() -> (Vec<WireExample>, Vec<WireExample>) {
    let mut rng = Rng::new(303);
    let mut make = |split: &str, count: usize| {
        (0..count)
            .map(|i| {
                let adj = ADJECTIVES[rng.below(ADJECTIVES.len())];
                let noun = NOUNS[rng.below(NOUNS.len())];
                let verb = VERBS[rng.below(VERBS.len())];
                let adverb = ADVERBS[rng.below(ADVERBS.len())];
                let fronted = rng.chance(0.5);
                let (words_b, frame, answer) = if fronted {
                    // today the red farmer sleeps
                    (
                        vec!["today".into(), "the".into(), adj.into(), noun.into(), verb.into()],
                        RawFrame {
                            pred: 4,
                            tags: tags(&["B-ARGM-TMP", "B-ARG0", "I-ARG0", "I-ARG0", "V"]),
                        },
                        AnswerSpan { start: 1, end: 3 },
                    )
                } else {
                    // the red farmer sleeps quietly
                    (
                        vec!["the".into(), adj.into(), noun.into(), verb.into(), adverb.into()],
                        RawFrame {
                            pred: 3,
                            tags: tags(&["B-ARG0", "I-ARG0", "I-ARG0", "V", "B-ARGM-MNR"]),
                        },
                        AnswerSpan { start: 0, end: 2 },
                    )
                };
                let answerable = rng.chance(0.75);
                let (question, answers) = if answerable {
                    (vec!["who".to_string(), verb.to_string()], vec![answer])
                } else {
                    (vec!["what".to_string(), verb.to_string()], vec![])
                };
                WireExample {
                    id: format!("{split}q{i}"),
                    words_a: question,
                    words_b: Some(words_b),
                    srl_a: vec![],
                    srl_b: Some(vec![frame]),
                    label: None,
                    answers: Some(answers),
                }
            })
            .collect::<Vec<_>>()
    };
    let train = make("tr", 48);
    let dev = make("dv", 32);
    (train, dev)
}

/// Write every fixture into `dir`: the vocabulary and the five datasets.
pub fn write_fixtures(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("vocab.txt"), fixture_vocab_lines().join("\n") + "\n")?;
    save_dataset(&dir.join("running_example.jsonl"), &[running_example()])?;
    save_dataset(&dir.join("overfit64.jsonl"), &overfit64())?;
    let (tr, dv) = semsig();
    save_dataset(&dir.join("semsig_train.jsonl"), &tr)?;
    save_dataset(&dir.join("semsig_dev.jsonl"), &dv)?;
    let (tr, dv) = span_set();
    save_dataset(&dir.join("span_train.jsonl"), &tr)?;
    save_dataset(&dir.join("span_dev.jsonl"), &dv)?;
    Ok(())
}
