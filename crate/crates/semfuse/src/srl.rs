//! Semantic-role label vocabulary, annotation ingestion, BIO-constrained
//! Viterbi decoding, and the label-noise injector.
//!
//! Annotations arrive pre-computed inside dataset records; this module
//! validates them and turns them into word-aligned label-id frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const O_LABEL: &str = "O";
pub const V_LABEL: &str = "V";

/// Label structure for transition checking.
#[derive(Debug, Clone, PartialEq, Eq)]
enum LabelKind {
    Outside,
    Verb,
    Begin(String),
    Inside(String),
    Other,
}

fn parse_kind(label: &str) -> LabelKind {
    if label == O_LABEL {
        LabelKind::Outside
    } else if label == V_LABEL {
        LabelKind::Verb
    } else if let Some(role) = label.strip_prefix("B-") {
        LabelKind::Begin(role.to_string())
    } else if let Some(role) = label.strip_prefix("I-") {
        LabelKind::Inside(role.to_string())
    } else {
        LabelKind::Other
    }
}

pub struct LabelVocab {
    labels: Vec<String>,
    kinds: Vec<LabelKind>,
    o: usize,
    v: usize,
}

impl LabelVocab {
    pub fn new(labels: Vec<String>) -> Result<LabelVocab> {
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(Error::Vocab(format!("duplicate SRL label {l:?}")));
            }
        }
        let o = labels
            .iter()
            .position(|l| l == O_LABEL)
            .ok_or_else(|| Error::Vocab("label set lacks O".into()))?;
        let v = labels
            .iter()
            .position(|l| l == V_LABEL)
            .ok_or_else(|| Error::Vocab("label set lacks V".into()))?;
        let kinds = labels.iter().map(|l| parse_kind(l)).collect();
        Ok(LabelVocab {
            labels,
            kinds,
            o,
            v,
        })
    }

    /// The built-in role inventory: O, V, and B-/I- pairs for the PropBank
    /// core and adjunct roles plus numbered filler roles, 104 labels total.
    pub fn default_roles() -> LabelVocab {
        let mut roles: Vec<String> = Vec::new();
        for i in 0..=5 {
            roles.push(format!("ARG{i}"));
        }
        for m in [
            "ADV", "CAU", "COM", "DIR", "DIS", "EXT", "GOL", "LOC", "MNR", "MOD", "NEG", "PNC",
            "PRD", "PRP", "REC", "TMP",
        ] {
            roles.push(format!("ARGM-{m}"));
        }
        for i in 0..=4 {
            roles.push(format!("C-ARG{i}"));
        }
        for i in 0..=4 {
            roles.push(format!("R-ARG{i}"));
        }
        for m in ["LOC", "MNR", "TMP"] {
            roles.push(format!("R-ARGM-{m}"));
        }
        for i in 1..=16 {
            roles.push(format!("ROLE{i}"));
        }
        let mut labels = vec![O_LABEL.to_string(), V_LABEL.to_string()];
        for r in roles {
            labels.push(format!("B-{r}"));
            labels.push(format!("I-{r}"));
        }
        LabelVocab::new(labels).expect("built-in inventory is valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn id_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn o_id(&self) -> usize {
        self.o
    }

    pub fn v_id(&self) -> usize {
        self.v
    }

    /// May `next` directly follow `prev`? Only I-X is constrained: it needs
    /// B-X or I-X of the same role immediately before it.
    pub fn legal_transition(&self, prev: usize, next: usize) -> bool {
        match &self.kinds[next] {
            LabelKind::Inside(role) => matches!(
                &self.kinds[prev],
                LabelKind::Begin(r) | LabelKind::Inside(r) if r == role
            ),
            _ => true,
        }
    }

    /// May a path start with `label`? I-X may not.
    pub fn legal_start(&self, label: usize) -> bool {
        !matches!(self.kinds[label], LabelKind::Inside(_))
    }
}

/// One predicate's word-aligned labels. `predicate` is `None` only for
/// synthetic all-O padding frames produced by [`select_frames`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrlFrame {
    pub predicate: Option<usize>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SrlAnnotation {
    pub frames: Vec<SrlFrame>,
}

/// Frame as it appears in dataset JSONL.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RawFrame {
    pub pred: usize,
    pub tags: Vec<String>,
}

/// Validate raw frames against the word count and label vocabulary.
///
/// Checks, per frame: tag count equals `n_words`; every tag is a known
/// label; I-X only follows B-X/I-X of the same role (and never starts);
/// the V label appears exactly at the predicate position. Frames must be
/// ordered by strictly increasing predicate position.
pub fn load_annotation(
    raw: &[RawFrame],
    n_words: usize,
    vocab: &LabelVocab,
) -> Result<SrlAnnotation> {
    let mut frames = Vec::with_capacity(raw.len());
    let mut last_pred: Option<usize> = None;
    for (fi, rf) in raw.iter().enumerate() {
        if rf.tags.len() != n_words {
            return Err(Error::FrameAlignment {
                frame: fi,
                got: rf.tags.len(),
                want: n_words,
            });
        }
        if rf.pred >= n_words {
            return Err(Error::IndexOutOfRange {
                what: "predicate position",
                index: rf.pred,
                size: n_words,
            });
        }
        let mut ids = Vec::with_capacity(n_words);
        for tag in &rf.tags {
            ids.push(vocab.id_of(tag).ok_or_else(|| Error::UnknownLabel {
                label: tag.clone(),
            })?);
        }
        for (pos, &id) in ids.iter().enumerate() {
            let ok = if pos == 0 {
                vocab.legal_start(id)
            } else {
                vocab.legal_transition(ids[pos - 1], id)
            };
            if !ok {
                return Err(Error::BioViolation {
                    frame: fi,
                    pos,
                    prev: if pos == 0 {
                        "<start>".to_string()
                    } else {
                        vocab.label(ids[pos - 1]).to_string()
                    },
                    next: vocab.label(id).to_string(),
                });
            }
        }
        for (pos, &id) in ids.iter().enumerate() {
            let is_v = id == vocab.v_id();
            if is_v != (pos == rf.pred) {
                return Err(Error::PredicateMismatch {
                    frame: fi,
                    pos: if is_v { pos } else { rf.pred },
                });
            }
        }
        if let Some(lp) = last_pred {
            if rf.pred <= lp {
                return Err(Error::FrameOrder { frame: fi });
            }
        }
        last_pred = Some(rf.pred);
        frames.push(SrlFrame {
            predicate: Some(rf.pred),
            labels: ids,
        });
    }
    Ok(SrlAnnotation { frames })
}

/// Highest-scoring label path under the BIO constraints. Transition scores
/// are zero; the constraints only prune. Ties prefer the smaller label id.
pub fn viterbi_decode(scores: &Tensor, vocab: &LabelVocab) -> Result<Vec<usize>> {
    let (n, l) = scores.dims2()?;
    if n == 0 {
        return Err(Error::EmptyInput("viterbi_decode: zero-length sequence"));
    }
    if l != vocab.len() {
        return Err(Error::DimMismatch {
            op: "viterbi_decode",
            lhs: format!("{l} score columns"),
            rhs: format!("{} labels", vocab.len()),
        });
    }
    let mut dp = vec![f64::NEG_INFINITY; n * l];
    let mut back = vec![0usize; n * l];
    for (j, slot) in dp.iter_mut().enumerate().take(l) {
        if vocab.legal_start(j) {
            *slot = scores.get2(0, j);
        }
    }
    for t in 1..n {
        for j in 0..l {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for p in 0..l {
                if dp[(t - 1) * l + p] > best && vocab.legal_transition(p, j) {
                    best = dp[(t - 1) * l + p];
                    arg = p;
                }
            }
            if best > f64::NEG_INFINITY {
                dp[t * l + j] = best + scores.get2(t, j);
                back[t * l + j] = arg;
            }
        }
    }
    let mut cur = 0;
    let mut best = f64::NEG_INFINITY;
    for j in 0..l {
        if dp[(n - 1) * l + j] > best {
            best = dp[(n - 1) * l + j];
            cur = j;
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = cur;
    for t in (1..n).rev() {
        cur = back[t * l + cur];
        path[t - 1] = cur;
    }
    Ok(path)
}

/// Exhaustive reference decoder: scores every legal label sequence.
/// Exponential in `n`; exists to cross-check [`viterbi_decode`] in tests.
pub fn exhaustive_decode(scores: &Tensor, vocab: &LabelVocab) -> Result<Vec<usize>> {
    let (n, l) = scores.dims2()?;
    if n == 0 {
        return Err(Error::EmptyInput("exhaustive_decode: zero-length sequence"));
    }
    let mut best_path: Option<Vec<usize>> = None;
    let mut best_score = f64::NEG_INFINITY;
    let mut path = vec![0usize; n];
    // flat argument list keeps the oracle free of shared state
    #[allow(clippy::too_many_arguments)]
    fn rec(
        t: usize,
        n: usize,
        l: usize,
        scores: &Tensor,
        vocab: &LabelVocab,
        path: &mut Vec<usize>,
        acc: f64,
        best_score: &mut f64,
        best_path: &mut Option<Vec<usize>>,
    ) {
        if t == n {
            if acc > *best_score {
                *best_score = acc;
                *best_path = Some(path.clone());
            }
            return;
        }
        for j in 0..l {
            let ok = if t == 0 {
                vocab.legal_start(j)
            } else {
                vocab.legal_transition(path[t - 1], j)
            };
            if !ok {
                continue;
            }
            path[t] = j;
            rec(
                t + 1,
                n,
                l,
                scores,
                vocab,
                path,
                acc + scores.get2(t, j),
                best_score,
                best_path,
            );
        }
    }
    rec(
        0,
        n,
        l,
        scores,
        vocab,
        &mut path,
        0.0,
        &mut best_score,
        &mut best_path,
    );
    best_path.ok_or(Error::EmptyInput("exhaustive_decode: no legal path"))
}

/// Replace each label independently with probability `p` by a uniformly
/// random different id. Output is deliberately not re-checked for BIO
/// validity; the predicate field is untouched.
pub fn inject_noise(ann: &SrlAnnotation, p: f64, vocab: &LabelVocab, rng: &mut Rng) -> Result<SrlAnnotation> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::OutOfRange {
            what: "noise fraction",
            value: p,
            expected: "[0, 1]",
        });
    }
    let l = vocab.len();
    let frames = ann
        .frames
        .iter()
        .map(|f| {
            let labels = f
                .labels
                .iter()
                .map(|&id| {
                    if rng.chance(p) {
                        let mut nl = rng.below(l - 1);
                        if nl >= id {
                            nl += 1;
                        }
                        nl
                    } else {
                        id
                    }
                })
                .collect();
            SrlFrame {
                predicate: f.predicate,
                labels,
            }
        })
        .collect();
    Ok(SrlAnnotation { frames })
}

/// Exactly `m` frames: the first `m` in predicate order, padded with all-O
/// frames when the sentence has fewer.
pub fn select_frames(ann: &SrlAnnotation, m: usize, n_words: usize, vocab: &LabelVocab) -> Vec<SrlFrame> {
    let mut out: Vec<SrlFrame> = ann.frames.iter().take(m).cloned().collect();
    while out.len() < m {
        out.push(SrlFrame {
            predicate: None,
            labels: vec![vocab.o_id(); n_words],
        });
    }
    out
}
