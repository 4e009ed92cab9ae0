//! Subword-to-word alignment and the view fusion.
//!
//! The encoder works on subwords; role labels are word-aligned. Each word's
//! subword encodings pass through a Conv1D + ReLU + max-pool (zero-padded
//! to the kernel width for short words), giving one vector per word. The
//! fused representation is the per-word concatenation of that vector with
//! the semantic embedding. The subword-level ablation skips the alignment
//! and instead copies each parent word's raw label embeddings onto its
//! subwords.

use crate::error::{Error, Result};
use crate::ops;
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::srl::SrlFrame;
use crate::tape::{NodeId, Tape};
use crate::tokenizer::TokenizedSentence;

pub struct FusionParams {
    /// Kernel width of the per-word convolution.
    pub k: usize,
    pub d_w: usize,
    w1: ParamId,
    b1: ParamId,
}

impl FusionParams {
    pub fn create(
        d_enc: usize,
        d_w: usize,
        k: usize,
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
    ) -> Result<FusionParams> {
        if k == 0 || d_w == 0 {
            return Err(Error::Config("fusion: k and d_w must be positive".into()));
        }
        let w1 = store.add_xavier(&format!("{prefix}w1"), k * d_enc, d_w, rng);
        let b1 = store.add_bias(&format!("{prefix}b1"), d_w);
        Ok(FusionParams { k, d_w, w1, b1 })
    }

    /// Align subword encodings to words: per word span, conv over its
    /// encoder rows (zero-padded on the right up to the kernel width),
    /// ReLU, max-pool. `enc` must have one row per subword of `sent`,
    /// specials included. Output is (n_words, d_w).
    pub fn subwords_to_words(
        &self,
        tape: &mut Tape,
        bound: &[NodeId],
        enc: NodeId,
        sent: &TokenizedSentence,
    ) -> Result<NodeId> {
        let (rows, _) = tape.dims(enc);
        if rows != sent.n_subwords() {
            return Err(Error::DimMismatch {
                op: "subwords_to_words",
                lhs: format!("{rows} encoder rows"),
                rhs: format!("{} subwords", sent.n_subwords()),
            });
        }
        let w1 = bound[self.w1.0];
        let b1 = bound[self.b1.0];
        let mut words = Vec::with_capacity(sent.n_words());
        for &(start, len) in &sent.spans {
            if start + len > rows {
                return Err(Error::IndexOutOfRange {
                    what: "word span",
                    index: start + len,
                    size: rows,
                });
            }
            let mut span = tape.slice_rows(enc, start, len);
            if len < self.k {
                span = tape.zero_pad_rows(span, self.k);
            }
            let conv = ops::conv1d_valid(tape, span, w1, b1, self.k)?;
            words.push(ops::relu_maxpool(tape, conv)?);
        }
        if words.is_empty() {
            return Err(Error::EmptyInput("subwords_to_words: sentence has no words"));
        }
        Ok(tape.stack_rows(&words))
    }
}

/// Row-wise concatenation of the word view and the semantic view.
/// `e_t = None` is the semantics-disabled case (d = 0): the fused
/// representation is the word view alone.
pub fn fuse(tape: &mut Tape, e_w: NodeId, e_t: Option<NodeId>) -> Result<NodeId> {
    let Some(e_t) = e_t else {
        return Ok(e_w);
    };
    let (rw, _) = tape.dims(e_w);
    let (rt, _) = tape.dims(e_t);
    if rw != rt {
        return Err(Error::DimMismatch {
            op: "fuse",
            lhs: format!("{rw} word rows"),
            rhs: format!("{rt} semantic rows"),
        });
    }
    Ok(tape.concat_cols(&[e_w, e_t]))
}

/// Subword-level ablation: every subword inherits its parent word's m raw
/// label embeddings (no BiGRU, no projection), concatenated to its encoder
/// row; specials carry the O label. Output is (l_total, d_enc + m*d_srl).
pub fn fuse_subword_ablation(
    tape: &mut Tape,
    enc: NodeId,
    frames: &[SrlFrame],
    sent: &TokenizedSentence,
    label_table: NodeId,
    o_id: usize,
) -> Result<NodeId> {
    let (rows, _) = tape.dims(enc);
    if rows != sent.n_subwords() {
        return Err(Error::DimMismatch {
            op: "fuse_subword_ablation",
            lhs: format!("{rows} encoder rows"),
            rhs: format!("{} subwords", sent.n_subwords()),
        });
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput("fuse_subword_ablation: no frames"));
    }
    for f in frames {
        if f.labels.len() != sent.n_words() {
            return Err(Error::DimMismatch {
                op: "fuse_subword_ablation",
                lhs: format!("frame of length {}", f.labels.len()),
                rhs: format!("{} words", sent.n_words()),
            });
        }
    }
    // parent word of each subword position; None for specials
    let mut parent: Vec<Option<usize>> = vec![None; rows];
    for (wi, &(start, len)) in sent.spans.iter().enumerate() {
        for p in parent.iter_mut().skip(start).take(len) {
            *p = Some(wi);
        }
    }
    let mut parts = vec![enc];
    for f in frames {
        let ids: Vec<usize> = parent
            .iter()
            .map(|p| p.map_or(o_id, |wi| f.labels[wi]))
            .collect();
        parts.push(ops::embedding_lookup(tape, label_table, &ids)?);
    }
    Ok(tape.concat_cols(&parts))
}
