//! Label-sequence embedding: per-frame lookup, a BiGRU shared across
//! frames, per-position concatenation of the m frame encodings, and a
//! linear projection to the joint semantic embedding (n x d).

use crate::error::{Error, Result};
use crate::ops::{self, GruWeights};
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::srl::SrlFrame;
use crate::tape::{NodeId, Tape};

/// Parameter ids for one GRU direction.
pub struct GruParamIds {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

impl GruParamIds {
    pub fn create(
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        d_in: usize,
        h: usize,
    ) -> GruParamIds {
        let p = |n: &str| format!("{prefix}{n}");
        GruParamIds {
            wz: store.add_xavier(&p("wz"), d_in, h, rng),
            uz: store.add_xavier(&p("uz"), h, h, rng),
            bz: store.add_bias(&p("bz"), h),
            wr: store.add_xavier(&p("wr"), d_in, h, rng),
            ur: store.add_xavier(&p("ur"), h, h, rng),
            br: store.add_bias(&p("br"), h),
            wh: store.add_xavier(&p("wh"), d_in, h, rng),
            uh: store.add_xavier(&p("uh"), h, h, rng),
            bh: store.add_bias(&p("bh"), h),
        }
    }

    pub fn bind(&self, bound: &[NodeId]) -> GruWeights {
        GruWeights {
            wz: bound[self.wz.0],
            uz: bound[self.uz.0],
            bz: bound[self.bz.0],
            wr: bound[self.wr.0],
            ur: bound[self.ur.0],
            br: bound[self.br.0],
            wh: bound[self.wh.0],
            uh: bound[self.uh.0],
            bh: bound[self.bh.0],
        }
    }
}

pub struct EmbedderParams {
    pub m: usize,
    pub d_srl: usize,
    /// BiGRU hidden width per direction.
    pub h: usize,
    /// Output width of the joint embedding.
    pub d: usize,
    label_table: ParamId,
    fwd: GruParamIds,
    bwd: GruParamIds,
    w2: ParamId,
    b2: ParamId,
}

impl EmbedderParams {
    // five sizing knobs plus the registration context; a builder would
    // only restate them
    #[allow(clippy::too_many_arguments)]
    pub fn create(
        n_labels: usize,
        m: usize,
        d_srl: usize,
        h: usize,
        d: usize,
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
    ) -> Result<EmbedderParams> {
        if m == 0 || d_srl == 0 || h == 0 || d == 0 {
            return Err(Error::Config(
                "embedder: m, d_srl, h, d must all be positive".into(),
            ));
        }
        let label_table =
            store.add_embedding(&format!("{prefix}label_table"), n_labels, d_srl, rng);
        let fwd = GruParamIds::create(store, rng, &format!("{prefix}gru_f."), d_srl, h);
        let bwd = GruParamIds::create(store, rng, &format!("{prefix}gru_b."), d_srl, h);
        let w2 = store.add_xavier(&format!("{prefix}w2"), m * 2 * h, d, rng);
        let b2 = store.add_bias(&format!("{prefix}b2"), d);
        Ok(EmbedderParams {
            m,
            d_srl,
            h,
            d,
            label_table,
            fwd,
            bwd,
            w2,
            b2,
        })
    }

    pub fn label_table(&self) -> ParamId {
        self.label_table
    }

    /// Joint semantic embedding of exactly `m` word-aligned frames:
    /// per frame, label lookup then the shared BiGRU; per word position,
    /// concatenation of the m frame vectors; then the linear projection.
    /// Output is (n, d).
    pub fn embed_frames(
        &self,
        tape: &mut Tape,
        bound: &[NodeId],
        frames: &[SrlFrame],
    ) -> Result<NodeId> {
        if frames.len() != self.m {
            return Err(Error::DimMismatch {
                op: "embed_frames",
                lhs: format!("{} frames", frames.len()),
                rhs: format!("m = {}", self.m),
            });
        }
        let n = frames[0].labels.len();
        if n == 0 {
            return Err(Error::EmptyInput("embed_frames: zero-length frames"));
        }
        for f in frames {
            if f.labels.len() != n {
                return Err(Error::DimMismatch {
                    op: "embed_frames",
                    lhs: format!("frame of length {}", f.labels.len()),
                    rhs: format!("frame of length {n}"),
                });
            }
        }
        let fwd = self.fwd.bind(bound);
        let bwd = self.bwd.bind(bound);
        let mut per_frame = Vec::with_capacity(self.m);
        for f in frames {
            let emb = ops::embedding_lookup(tape, bound[self.label_table.0], &f.labels)?;
            per_frame.push(ops::bigru_forward(tape, emb, &fwd, &bwd)?);
        }
        let joined = tape.concat_cols(&per_frame);
        ops::linear(tape, joined, bound[self.w2.0], bound[self.b2.0])
    }
}
