//! Small transformer encoder over subword ids.
//!
//! Token, position, and segment embeddings are summed, then passed through
//! `n_layers` blocks of masked multi-head self-attention and a GELU
//! feed-forward, each with residual connection and post-layer-norm (the
//! BERT convention). Trained from random initialization; there is no
//! pre-trained checkpoint to load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};

/// Additive attention bias at masked key positions. Large enough that the
/// softmax weight underflows to exactly 0, small enough to stay finite.
pub const MASK_BIAS: f64 = -1e30;

const LN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct EncoderConfig {
    pub d_enc: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_enc == 0 || self.n_heads == 0 {
            return Err(Error::Config("encoder: zero width or head count".into()));
        }
        if !self.d_enc.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "encoder: d_enc {} not divisible by n_heads {}",
                self.d_enc, self.n_heads
            )));
        }
        if self.max_positions == 0 || self.vocab_size == 0 {
            return Err(Error::Config(
                "encoder: max_positions and vocab_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

struct LayerParams {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1: (ParamId, ParamId),
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2: (ParamId, ParamId),
}

pub struct EncoderParams {
    pub cfg: EncoderConfig,
    tok_emb: ParamId,
    pos_emb: ParamId,
    seg_emb: ParamId,
    layers: Vec<LayerParams>,
}

impl EncoderParams {
    /// Register all encoder weights in `store` under `prefix`.
    pub fn create(
        cfg: EncoderConfig,
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
    ) -> Result<EncoderParams> {
        cfg.validate()?;
        let d = cfg.d_enc;
        let tok_emb = store.add_embedding(&format!("{prefix}tok_emb"), cfg.vocab_size, d, rng);
        let pos_emb = store.add_embedding(&format!("{prefix}pos_emb"), cfg.max_positions, d, rng);
        let seg_emb = store.add_embedding(&format!("{prefix}seg_emb"), 2, d, rng);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            let p = |n: &str| format!("{prefix}layer{i}.{n}");
            layers.push(LayerParams {
                wq: store.add_xavier(&p("wq"), d, d, rng),
                bq: store.add_bias(&p("bq"), d),
                wk: store.add_xavier(&p("wk"), d, d, rng),
                bk: store.add_bias(&p("bk"), d),
                wv: store.add_xavier(&p("wv"), d, d, rng),
                bv: store.add_bias(&p("bv"), d),
                wo: store.add_xavier(&p("wo"), d, d, rng),
                bo: store.add_bias(&p("bo"), d),
                ln1: store.add_layer_norm(&p("ln1"), d),
                w1: store.add_xavier(&p("w1"), d, cfg.d_ff, rng),
                b1: store.add_bias(&p("b1"), cfg.d_ff),
                w2: store.add_xavier(&p("w2"), cfg.d_ff, d, rng),
                b2: store.add_bias(&p("b2"), d),
                ln2: store.add_layer_norm(&p("ln2"), d),
            });
        }
        Ok(EncoderParams {
            cfg,
            tok_emb,
            pos_emb,
            seg_emb,
            layers,
        })
    }

    /// Per-token encodings plus every layer's per-head attention matrix.
    pub fn encode_with_attention(
        &self,
        tape: &mut Tape,
        bound: &[NodeId],
        ids: &[usize],
        segments: &[usize],
        mask: &[bool],
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let l = ids.len();
        if l == 0 {
            return Err(Error::EmptyInput("encode: empty sequence"));
        }
        if segments.len() != l || mask.len() != l {
            return Err(Error::DimMismatch {
                op: "encode",
                lhs: format!("{l} ids"),
                rhs: format!("{} segments / {} mask", segments.len(), mask.len()),
            });
        }
        if l > self.cfg.max_positions {
            return Err(Error::TooLong {
                len: l,
                max: self.cfg.max_positions,
            });
        }
        for &s in segments {
            if s > 1 {
                return Err(Error::IndexOutOfRange {
                    what: "segment id",
                    index: s,
                    size: 2,
                });
            }
        }
        let b = |pid: ParamId| bound[pid.0];

        let tok = ops::embedding_lookup(tape, b(self.tok_emb), ids)?;
        let positions: Vec<usize> = (0..l).collect();
        let pos = ops::embedding_lookup(tape, b(self.pos_emb), &positions)?;
        let seg = ops::embedding_lookup(tape, b(self.seg_emb), segments)?;
        let tp = tape.add(tok, pos);
        let mut x = tape.add(tp, seg);

        // additive key-mask bias shared by every layer and head
        let mut bias = vec![0.0; l * l];
        for i in 0..l {
            for j in 0..l {
                if !mask[j] {
                    bias[i * l + j] = MASK_BIAS;
                }
            }
        }
        let bias = tape.constant(l, l, bias);

        let n_heads = self.cfg.n_heads;
        let dh = self.cfg.d_enc / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut attentions = Vec::new();
        for layer in &self.layers {
            let q = ops::linear(tape, x, b(layer.wq), b(layer.bq))?;
            let k = ops::linear(tape, x, b(layer.wk), b(layer.bk))?;
            let v = ops::linear(tape, x, b(layer.wv), b(layer.bv))?;
            let mut head_outs = Vec::with_capacity(n_heads);
            for h in 0..n_heads {
                let qh = tape.slice_cols(q, h * dh, dh);
                let kh = tape.slice_cols(k, h * dh, dh);
                let vh = tape.slice_cols(v, h * dh, dh);
                let kt = tape.transpose(kh);
                let raw = tape.matmul(qh, kt);
                let scaled = tape.affine(raw, scale, 0.0);
                let masked = tape.add(scaled, bias);
                let attn = tape.softmax_rows(masked);
                attentions.push(attn);
                head_outs.push(tape.matmul(attn, vh));
            }
            let merged = tape.concat_cols(&head_outs);
            let proj = ops::linear(tape, merged, b(layer.wo), b(layer.bo))?;
            let res1 = tape.add(x, proj);
            let normed1 = tape.layer_norm(res1, b(layer.ln1.0), b(layer.ln1.1), LN_EPS);

            let ff1 = ops::linear(tape, normed1, b(layer.w1), b(layer.b1))?;
            let act = tape.gelu(ff1);
            let ff2 = ops::linear(tape, act, b(layer.w2), b(layer.b2))?;
            let res2 = tape.add(normed1, ff2);
            x = tape.layer_norm(res2, b(layer.ln2.0), b(layer.ln2.1), LN_EPS);
        }
        Ok((x, attentions))
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        bound: &[NodeId],
        ids: &[usize],
        segments: &[usize],
        mask: &[bool],
    ) -> Result<NodeId> {
        self.encode_with_attention(tape, bound, ids, segments, mask)
            .map(|(x, _)| x)
    }
}
