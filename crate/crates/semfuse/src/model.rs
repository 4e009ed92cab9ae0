//! End-to-end model assembly. An example becomes a sequence of units
//! ([CLS], the words of sentence a, [SEP], optionally the words of
//! sentence b and a final [SEP]); the encoder runs over the units'
//! subwords, pooling aligns subwords back to units, and role frames are
//! embedded per unit. Heads read the fused rows: row 0 (the [CLS] unit)
//! for classification and regression, one row per unit for spans.

use std::path::Path;

use crate::config::{FusionMode, RunConfig, TaskKind};
use crate::data::{Target, TaskExample};
use crate::embedder::EmbedderParams;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::fusion::{self, FusionParams};
use crate::heads::{self, ClassifierHead, NullThreshold, SpanHead, SpanPrediction};
use crate::ops;
use crate::params::{self, ParamStore};
use crate::rng::Rng;
use crate::srl::{select_frames, LabelVocab, SrlAnnotation, SrlFrame};
use crate::tape::{NodeId, Tape};
use crate::tokenizer::{tokenize, TokenizedSentence, Vocab, CLS, SEP};

pub const DEFAULT_MAX_SPAN_LEN: usize = 30;

const HEAD_WEIGHT_NAME: &str = "head.w";

/// One example, assembled for the forward pass.
#[derive(Debug, Clone)]
pub struct ModelInput {
    /// Units view: `words` lists [CLS]/[SEP] alongside real words, and
    /// every unit owns a span of subwords.
    pub layout: TokenizedSentence,
    /// Per-subword segment ids (0 through the first [SEP], then 1).
    pub segments: Vec<usize>,
    /// m frames over units; specials and padding carry O everywhere.
    pub frames: Vec<SrlFrame>,
    /// Unit index range [start, end) of the passage (words_b), if any.
    pub passage_units: Option<(usize, usize)>,
    /// Span target in unit coordinates; (0, 0) is the null answer.
    /// None for non-span tasks.
    pub span_target: Option<(usize, usize)>,
}

impl ModelInput {
    pub fn n_units(&self) -> usize {
        self.layout.n_words()
    }

    /// Candidate mask for span decoding: true exactly on passage units.
    pub fn passage_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_units()];
        if let Some((s, e)) = self.passage_units {
            for slot in &mut mask[s..e] {
                *slot = true;
            }
        }
        mask
    }
}

/// Drop trailing words until the two bodies fit the subword budget.
/// Pops from the strictly longer sentence; ties pop the second.
fn truncate_pair(
    a: &mut TokenizedSentence,
    b: Option<&mut TokenizedSentence>,
    budget: usize,
) -> Result<()> {
    let pop_word = |t: &mut TokenizedSentence| {
        let (start, len) = t.spans.pop().expect("nonempty sentence");
        // body pieces sit before the trailing [SEP]
        t.subwords.drain(start..start + len);
        t.words.pop();
        *t.special_positions.last_mut().expect("sep") -= len;
    };
    match b {
        None => {
            while a.body().len() > budget {
                if a.n_words() == 1 {
                    return Err(Error::TooLong {
                        len: a.body().len(),
                        max: budget,
                    });
                }
                pop_word(a);
            }
        }
        Some(b) => {
            while a.body().len() + b.body().len() > budget {
                if a.n_words() == 1 && b.n_words() == 1 {
                    return Err(Error::TooLong {
                        len: a.body().len() + b.body().len(),
                        max: budget,
                    });
                }
                if b.n_words() == 1 || (a.body().len() > b.body().len() && a.n_words() > 1) {
                    pop_word(a);
                } else {
                    pop_word(b);
                }
            }
        }
    }
    Ok(())
}

/// Cut an annotation down to the first `keep` words. A predicate that
/// falls off the end leaves the frame in place with no predicate.
fn truncate_annotation(ann: &SrlAnnotation, keep: usize) -> SrlAnnotation {
    let frames = ann
        .frames
        .iter()
        .map(|f| SrlFrame {
            predicate: f.predicate.filter(|&p| p < keep),
            labels: f.labels[..keep.min(f.labels.len())].to_vec(),
        })
        .collect();
    SrlAnnotation { frames }
}

/// Assemble one example: tokenize both sentences, truncate whole words to
/// the subword budget, lay out units, and zip per-sentence frames into m
/// combined frames over the unit sequence.
pub fn assemble(
    ex: &TaskExample,
    m: usize,
    max_len: usize,
    vocab: &Vocab,
    labels: &LabelVocab,
) -> Result<ModelInput> {
    let mut ta = tokenize(&ex.words_a.join(" "), vocab)?;
    let mut tb = match &ex.words_b {
        Some(words) => Some(tokenize(&words.join(" "), vocab)?),
        None => None,
    };
    let specials = if tb.is_some() { 3 } else { 2 };
    if max_len <= specials {
        return Err(Error::Config(format!(
            "max_len {max_len} leaves no room for words"
        )));
    }
    truncate_pair(&mut ta, tb.as_mut(), max_len - specials)?;

    let n_a = ta.n_words();
    let cls_id = vocab.cls_id();
    let sep_id = vocab.sep_id();

    let mut words: Vec<String> = vec![CLS.to_string()];
    words.extend(ta.words.iter().cloned());
    words.push(SEP.to_string());
    let mut subwords = vec![cls_id];
    subwords.extend_from_slice(ta.body());
    subwords.push(sep_id);
    // [CLS] owns position 0; sentence-a spans carry over unchanged
    let mut spans = vec![(0, 1)];
    spans.extend(ta.spans.iter().copied());
    spans.push((subwords.len() - 1, 1));
    let mut special_positions = vec![0, subwords.len() - 1];
    let mut segments = vec![0; subwords.len()];

    let fa = select_frames(&truncate_annotation(&ex.srl_a, n_a), m, n_a, labels);
    let o = labels.o_id();

    let (frames, passage_units) = match &tb {
        None => {
            let frames = fa
                .into_iter()
                .map(|f| {
                    let mut t = vec![o];
                    t.extend(f.labels);
                    t.push(o);
                    SrlFrame {
                        predicate: f.predicate.map(|p| p + 1),
                        labels: t,
                    }
                })
                .collect();
            (frames, None)
        }
        Some(tb) => {
            let n_b = tb.n_words();
            let offset = subwords.len();
            for &(s, l) in &tb.spans {
                // strip tb's [CLS] (position shift of 1), then re-offset
                spans.push((offset + s - 1, l));
            }
            subwords.extend_from_slice(tb.body());
            subwords.push(sep_id);
            words.extend(tb.words.iter().cloned());
            words.push(SEP.to_string());
            spans.push((subwords.len() - 1, 1));
            special_positions.push(subwords.len() - 1);
            segments.resize(subwords.len(), 1);

            let ann_b = truncate_annotation(ex.srl_b.as_ref().expect("pair"), n_b);
            let fb = select_frames(&ann_b, m, n_b, labels);
            let frames = fa
                .into_iter()
                .zip(fb)
                .map(|(a, b)| {
                    let mut t = vec![o];
                    t.extend(a.labels);
                    t.push(o);
                    t.extend(b.labels);
                    t.push(o);
                    SrlFrame {
                        predicate: a
                            .predicate
                            .map(|p| p + 1)
                            .or(b.predicate.map(|p| p + n_a + 2)),
                        labels: t,
                    }
                })
                .collect();
            (frames, Some((n_a + 2, n_a + 2 + n_b)))
        }
    };

    let span_target = match &ex.target {
        Target::Spans(golds) => {
            let (ps, _pe) = passage_units.ok_or(Error::Config(
                "span example lost its passage during assembly".into(),
            ))?;
            let n_b_kept = tb.as_ref().map(|t| t.n_words()).unwrap_or(0);
            // train on the first gold; one that got truncated away makes
            // the example unanswerable for the loss
            let t = golds
                .first()
                .filter(|g| g.end < n_b_kept)
                .map(|g| (ps + g.start, ps + g.end))
                .unwrap_or((0, 0));
            Some(t)
        }
        _ => None,
    };

    Ok(ModelInput {
        layout: TokenizedSentence {
            words,
            subwords,
            spans,
            special_positions,
        },
        segments,
        frames,
        passage_units,
        span_target,
    })
}

enum Head {
    Classify(ClassifierHead),
    Span(SpanHead),
}

/// All parameters plus the mode-dependent wiring.
pub struct Model {
    pub mode: FusionMode,
    pub task: TaskKind,
    pub m: usize,
    encoder: EncoderParams,
    fusion: Option<FusionParams>,
    embedder: Option<EmbedderParams>,
    head: Head,
    o_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Class(usize),
    Real(f64),
    Span(SpanPrediction),
}

impl Model {
    /// Register every parameter for the configured mode. `n_outputs` is
    /// the classifier arity (class count, or 1 for regression); span
    /// tasks ignore it.
    pub fn create(
        cfg: &RunConfig,
        vocab: &Vocab,
        labels: &LabelVocab,
        n_outputs: usize,
        store: &mut ParamStore,
        rng: &mut Rng,
    ) -> Result<Model> {
        cfg.validate()?;
        if cfg.task_kind == TaskKind::Span && cfg.fusion_mode == FusionMode::SubwordAblation {
            return Err(Error::Config(
                "span decoding needs word-aligned rows; subword_ablation provides none".into(),
            ));
        }
        let encoder = EncoderParams::create(cfg.encoder_config(vocab.len()), store, rng, "enc.")?;
        let (fusion, embedder, head_dim) = match cfg.fusion_mode {
            FusionMode::Sembert => {
                let f = FusionParams::create(cfg.d_enc, cfg.d_w, cfg.kernel_size, store, rng, "pool.")?;
                let e = EmbedderParams::create(
                    labels.len(),
                    cfg.m,
                    cfg.d_srl,
                    cfg.d_srl,
                    cfg.d,
                    store,
                    rng,
                    "sem.",
                )?;
                (Some(f), Some(e), cfg.d_w + cfg.d)
            }
            FusionMode::Baseline => {
                let f = FusionParams::create(cfg.d_enc, cfg.d_w, cfg.kernel_size, store, rng, "pool.")?;
                (Some(f), None, cfg.d_w)
            }
            FusionMode::SubwordAblation => {
                let e = EmbedderParams::create(
                    labels.len(),
                    cfg.m,
                    cfg.d_srl,
                    cfg.d_srl,
                    cfg.d,
                    store,
                    rng,
                    "sem.",
                )?;
                (None, Some(e), cfg.d_enc + cfg.m * cfg.d_srl)
            }
        };
        let head = match cfg.task_kind {
            TaskKind::Span => Head::Span(SpanHead::create(head_dim, store, rng, "head.")?),
            _ => {
                if n_outputs == 0 {
                    return Err(Error::Config("no output classes".into()));
                }
                Head::Classify(ClassifierHead::create(head_dim, n_outputs, store, rng, "head.")?)
            }
        };
        Ok(Model {
            mode: cfg.fusion_mode,
            task: cfg.task_kind,
            m: cfg.m,
            encoder,
            fusion,
            embedder,
            head,
            o_id: labels.o_id(),
        })
    }

    /// Classifier arity recorded in a checkpoint (columns of the head
    /// weight), so evaluation can rebuild the same shape regardless of
    /// which classes its dataset happens to contain.
    pub fn checkpoint_outputs(path: &Path) -> Result<usize> {
        let shape = params::checkpoint_shape(path, HEAD_WEIGHT_NAME)?;
        Ok(shape[1])
    }

    /// Fused representation: one row per unit (sembert, baseline) or per
    /// subword (subword_ablation).
    pub fn fused(&self, tape: &mut Tape, bound: &[NodeId], input: &ModelInput) -> Result<NodeId> {
        let mask = vec![true; input.layout.n_subwords()];
        let enc = self.encoder.encode(
            tape,
            bound,
            &input.layout.subwords,
            &input.segments,
            &mask,
        )?;
        match self.mode {
            FusionMode::Sembert => {
                let e_w = self
                    .fusion
                    .as_ref()
                    .expect("sembert has pooling")
                    .subwords_to_words(tape, bound, enc, &input.layout)?;
                let e_t = self
                    .embedder
                    .as_ref()
                    .expect("sembert has an embedder")
                    .embed_frames(tape, bound, &input.frames)?;
                fusion::fuse(tape, e_w, Some(e_t))
            }
            FusionMode::Baseline => {
                let e_w = self
                    .fusion
                    .as_ref()
                    .expect("baseline has pooling")
                    .subwords_to_words(tape, bound, enc, &input.layout)?;
                fusion::fuse(tape, e_w, None)
            }
            FusionMode::SubwordAblation => {
                let table = self.embedder.as_ref().expect("ablation has a label table");
                fusion::fuse_subword_ablation(
                    tape,
                    enc,
                    &input.frames,
                    &input.layout,
                    bound[table.label_table().0],
                    self.o_id,
                )
            }
        }
    }

    /// Scalar training loss for one example.
    pub fn loss(
        &self,
        tape: &mut Tape,
        bound: &[NodeId],
        input: &ModelInput,
        target: &Target,
    ) -> Result<NodeId> {
        let h = self.fused(tape, bound, input)?;
        match (&self.head, target) {
            (Head::Classify(head), Target::Class(c)) => {
                let logits = head.logits(tape, bound, h)?;
                let (_, n_out) = tape.dims(logits);
                if *c >= n_out {
                    return Err(Error::IndexOutOfRange {
                        what: "class label",
                        index: *c,
                        size: n_out,
                    });
                }
                ops::cross_entropy(tape, logits, &[*c])
            }
            (Head::Classify(head), Target::Real(x)) => {
                let logits = head.logits(tape, bound, h)?;
                ops::mse(tape, logits, &[*x])
            }
            (Head::Span(head), Target::Spans(_)) => {
                let logits = head.logits(tape, bound, h)?;
                let (start, end) = input.span_target.expect("assembled span example");
                ops::span_loss(tape, logits, start, end)
            }
            _ => Err(Error::Config(
                "example target does not match the model's task".into(),
            )),
        }
    }

    /// Deterministic prediction for one example (no gradients).
    pub fn predict(
        &self,
        tape: &mut Tape,
        bound: &[NodeId],
        input: &ModelInput,
        tau: NullThreshold,
        max_span_len: usize,
    ) -> Result<Prediction> {
        let h = self.fused(tape, bound, input)?;
        match &self.head {
            Head::Classify(head) => {
                let logits = head.logits(tape, bound, h)?;
                let row = tape.value(logits);
                if self.task == TaskKind::Regression {
                    return Ok(Prediction::Real(row[0]));
                }
                let best = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                    .map(|(i, _)| i)
                    .expect("nonempty logits");
                Ok(Prediction::Class(best))
            }
            Head::Span(head) => {
                let logits = head.logits(tape, bound, h)?;
                let vals = tape.value(logits);
                let n = input.n_units();
                let start_logits: Vec<f64> = (0..n).map(|i| vals[2 * i]).collect();
                let end_logits: Vec<f64> = (0..n).map(|i| vals[2 * i + 1]).collect();
                let p = heads::decode_span(
                    &start_logits,
                    &end_logits,
                    &input.passage_mask(),
                    tau,
                    max_span_len,
                )?;
                Ok(Prediction::Span(p))
            }
        }
    }

    /// Predicted answer text in original words, or None for null.
    pub fn span_text(input: &ModelInput, p: &SpanPrediction) -> Option<String> {
        if p.is_null {
            return None;
        }
        Some(input.layout.words[p.start..=p.end].join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AnswerSpan;
    use crate::srl::RawFrame;

    fn vocab() -> Vocab {
        let toks = [
            "[PAD]", "[UNK]", "[CLS]", "[SEP]", "cats", "sleep", "dogs", "bark", "loud",
            "##ly", "who", "the",
        ];
        Vocab::parse(toks.iter().map(|s| s.to_string())).unwrap()
    }

    fn labels() -> LabelVocab {
        LabelVocab::default_roles()
    }

    fn frame(pred: usize, tags: &[&str]) -> RawFrame {
        RawFrame {
            pred,
            tags: tags.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn pair_example() -> TaskExample {
        let labels = labels();
        let srl_a =
            crate::srl::load_annotation(&[frame(1, &["B-ARG0", "V"])], 2, &labels).unwrap();
        let srl_b = crate::srl::load_annotation(
            &[frame(1, &["B-ARG0", "V", "B-ARGM-MNR"])],
            3,
            &labels,
        )
        .unwrap();
        TaskExample {
            id: "p1".into(),
            words_a: vec!["cats".into(), "sleep".into()],
            words_b: Some(vec!["dogs".into(), "bark".into(), "loudly".into()]),
            srl_a,
            srl_b: Some(srl_b),
            target: Target::Class(1),
        }
    }

    #[test]
    fn assembles_pair_units_and_frames() {
        let v = vocab();
        let l = labels();
        let input = assemble(&pair_example(), 2, 32, &v, &l).unwrap();
        // units: [CLS] cats sleep [SEP] dogs bark loudly [SEP]
        assert_eq!(input.n_units(), 8);
        assert_eq!(input.layout.words[0], CLS);
        assert_eq!(input.layout.words[3], SEP);
        assert_eq!(input.layout.words[7], SEP);
        // subwords: [CLS] cats sleep [SEP] dogs bark loud ##ly [SEP]
        assert_eq!(input.layout.n_subwords(), 9);
        assert_eq!(input.layout.spans[6], (6, 2)); // loudly -> loud ##ly
        assert_eq!(input.segments, vec![0, 0, 0, 0, 1, 1, 1, 1, 1]);
        assert_eq!(input.passage_units, Some((4, 7)));
        assert_eq!(input.frames.len(), 2);
        for f in &input.frames {
            assert_eq!(f.labels.len(), 8);
            assert_eq!(f.labels[0], l.o_id());
            assert_eq!(f.labels[3], l.o_id());
            assert_eq!(f.labels[7], l.o_id());
        }
        // first combined frame zips the two real frames
        let f0 = &input.frames[0];
        assert_eq!(f0.labels[2], l.id_of("V").unwrap());
        assert_eq!(f0.labels[5], l.id_of("V").unwrap());
        assert_eq!(f0.predicate, Some(2));
        // second frame is padding on both sides
        assert!(input.frames[1].labels.iter().all(|&t| t == l.o_id()));
        assert_eq!(input.frames[1].predicate, None);
    }

    #[test]
    fn passage_mask_marks_exactly_words_b() {
        let v = vocab();
        let input = assemble(&pair_example(), 1, 32, &v, &labels()).unwrap();
        assert_eq!(
            input.passage_mask(),
            vec![false, false, false, false, true, true, true, false]
        );
    }

    #[test]
    fn truncation_pops_whole_words_from_the_longer_side() {
        let v = vocab();
        let l = labels();
        // budget: max_len 8, pair specials 3 -> 5 body subwords.
        // a has 2, b has 4 ("loudly" is two pieces); b loses "loudly".
        let input = assemble(&pair_example(), 1, 8, &v, &l).unwrap();
        let words: Vec<&str> = input.layout.words.iter().map(|s| s.as_str()).collect();
        assert_eq!(
            words,
            vec!["[CLS]", "cats", "sleep", "[SEP]", "dogs", "bark", "[SEP]"]
        );
        assert_eq!(input.layout.n_subwords(), 7);
        assert_eq!(input.frames[0].labels.len(), 7);
        // spans still partition and stay in range
        for &(s, len) in &input.layout.spans {
            assert!(s + len <= input.layout.n_subwords());
        }
    }

    #[test]
    fn span_target_lands_in_unit_coordinates() {
        let v = vocab();
        let l = labels();
        let mut ex = pair_example();
        ex.target = Target::Spans(vec![AnswerSpan { start: 1, end: 2 }]);
        let input = assemble(&ex, 1, 32, &v, &l).unwrap();
        // passage starts at unit 4: words 1..2 of it are units 5..6
        assert_eq!(input.span_target, Some((5, 6)));
        // a truncated-away gold becomes the null target
        ex.target = Target::Spans(vec![AnswerSpan { start: 2, end: 2 }]);
        let input = assemble(&ex, 1, 8, &v, &l).unwrap();
        assert_eq!(input.span_target, Some((0, 0)));
    }

    fn desk_cfg(mode: FusionMode, task: TaskKind) -> RunConfig {
        RunConfig {
            task_kind: task,
            fusion_mode: mode,
            m: 2,
            d_srl: 4,
            d: 5,
            kernel_size: 3,
            d_w: 6,
            d_enc: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 16,
            max_positions: 32,
            max_len: 32,
            ..RunConfig::default()
        }
    }

    #[test]
    fn fused_rows_and_width_follow_the_mode() {
        let v = vocab();
        let l = labels();
        let ex = pair_example();
        for (mode, want_rows, want_cols) in [
            (FusionMode::Sembert, 8, 6 + 5),
            (FusionMode::Baseline, 8, 6),
            (FusionMode::SubwordAblation, 9, 8 + 2 * 4),
        ] {
            let mut store = ParamStore::new();
            let mut rng = Rng::new(5);
            let cfg = desk_cfg(mode, TaskKind::Classification);
            let model = Model::create(&cfg, &v, &l, 3, &mut store, &mut rng).unwrap();
            let input = assemble(&ex, cfg.m, cfg.max_len, &v, &l).unwrap();
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let h = model.fused(&mut tape, &bound, &input).unwrap();
            assert_eq!(tape.dims(h), (want_rows, want_cols), "{mode:?}");
        }
    }

    #[test]
    fn loss_is_finite_and_backward_runs_in_every_mode() {
        let v = vocab();
        let l = labels();
        let ex = pair_example();
        for mode in [
            FusionMode::Sembert,
            FusionMode::Baseline,
            FusionMode::SubwordAblation,
        ] {
            let mut store = ParamStore::new();
            let mut rng = Rng::new(7);
            let cfg = desk_cfg(mode, TaskKind::Classification);
            let model = Model::create(&cfg, &v, &l, 3, &mut store, &mut rng).unwrap();
            let input = assemble(&ex, cfg.m, cfg.max_len, &v, &l).unwrap();
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let loss = model.loss(&mut tape, &bound, &input, &ex.target).unwrap();
            assert!(tape.scalar_value(loss).is_finite());
            let mut gb = tape.backward(loss);
            let grads = tape.param_grads(&mut gb);
            assert!(!grads.is_empty());
            assert!(grads.values().all(|g| g.iter().all(|v| v.is_finite())));
        }
    }

    #[test]
    fn span_task_predicts_inside_the_passage() {
        let v = vocab();
        let l = labels();
        let mut ex = pair_example();
        ex.target = Target::Spans(vec![AnswerSpan { start: 0, end: 1 }]);
        let mut store = ParamStore::new();
        let mut rng = Rng::new(9);
        let cfg = desk_cfg(FusionMode::Sembert, TaskKind::Span);
        let model = Model::create(&cfg, &v, &l, 0, &mut store, &mut rng).unwrap();
        let input = assemble(&ex, cfg.m, cfg.max_len, &v, &l).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let p = model
            .predict(
                &mut tape,
                &bound,
                &input,
                NullThreshold { tau: heads::TAU_MIN },
                DEFAULT_MAX_SPAN_LEN,
            )
            .unwrap();
        match p {
            Prediction::Span(sp) => {
                assert!(!sp.is_null);
                let (ps, pe) = input.passage_units.unwrap();
                assert!(sp.start >= ps && sp.end < pe);
                let text = Model::span_text(&input, &sp).unwrap();
                assert!(!text.contains("[SEP]"));
            }
            other => panic!("expected a span, got {other:?}"),
        }
    }

    #[test]
    fn ablation_mode_rejects_span_task() {
        let v = vocab();
        let l = labels();
        let mut store = ParamStore::new();
        let mut rng = Rng::new(11);
        let cfg = desk_cfg(FusionMode::SubwordAblation, TaskKind::Span);
        assert!(Model::create(&cfg, &v, &l, 0, &mut store, &mut rng).is_err());
    }

    #[test]
    fn checkpoint_records_head_arity() {
        let v = vocab();
        let l = labels();
        let mut store = ParamStore::new();
        let mut rng = Rng::new(13);
        let cfg = desk_cfg(FusionMode::Baseline, TaskKind::Classification);
        Model::create(&cfg, &v, &l, 5, &mut store, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ckpt.json");
        store.save(&p).unwrap();
        assert_eq!(Model::checkpoint_outputs(&p).unwrap(), 5);
    }

    #[test]
    fn single_sentence_examples_assemble() {
        let v = vocab();
        let l = labels();
        let srl_a =
            crate::srl::load_annotation(&[frame(1, &["B-ARG0", "V"])], 2, &l).unwrap();
        let ex = TaskExample {
            id: "s1".into(),
            words_a: vec!["cats".into(), "sleep".into()],
            words_b: None,
            srl_a,
            srl_b: None,
            target: Target::Class(0),
        };
        let input = assemble(&ex, 3, 16, &v, &l).unwrap();
        assert_eq!(input.n_units(), 4); // [CLS] cats sleep [SEP]
        assert_eq!(input.passage_units, None);
        assert_eq!(input.frames.len(), 3);
        assert!(input.segments.iter().all(|&s| s == 0));
    }
}
