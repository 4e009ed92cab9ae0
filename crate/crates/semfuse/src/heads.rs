//! Task heads over the fused representation: classification/regression at
//! the first token, and span extraction with null-answer thresholding.
//!
//! Span decoding works on probabilities: start/end logits are softmaxed
//! over the caller's passage mask (position 0 always participates as the
//! null anchor), a span (i, j) scores s_i + e_j, and a non-null answer is
//! produced only when the best span beats the null score by more than tau.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};

/// Sentinel thresholds swept alongside observed score differences: low
/// enough / high enough to dominate any probability difference while
/// staying finite and JSON-representable.
pub const TAU_MIN: f64 = -1e30;
pub const TAU_MAX: f64 = 1e30;

pub struct ClassifierHead {
    w: ParamId,
    b: ParamId,
    pub n_out: usize,
}

impl ClassifierHead {
    pub fn create(
        d_in: usize,
        n_out: usize,
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
    ) -> Result<ClassifierHead> {
        if n_out == 0 {
            return Err(Error::Config("classifier head: zero outputs".into()));
        }
        Ok(ClassifierHead {
            w: store.add_xavier(&format!("{prefix}w"), d_in, n_out, rng),
            b: store.add_bias(&format!("{prefix}b"), n_out),
            n_out,
        })
    }

    /// Logits from the first-token row of `h` (the sentence-level slot).
    /// Regression uses `n_out = 1` and reads the logit as the score.
    pub fn logits(&self, tape: &mut Tape, bound: &[NodeId], h: NodeId) -> Result<NodeId> {
        let pooled = tape.slice_rows(h, 0, 1);
        ops::linear(tape, pooled, bound[self.w.0], bound[self.b.0])
    }
}

pub struct SpanHead {
    w: ParamId,
    b: ParamId,
}

impl SpanHead {
    pub fn create(
        d_in: usize,
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
    ) -> Result<SpanHead> {
        Ok(SpanHead {
            w: store.add_xavier(&format!("{prefix}w"), d_in, 2, rng),
            b: store.add_bias(&format!("{prefix}b"), 2),
        })
    }

    /// Per-position span logits, column 0 = start, column 1 = end.
    pub fn logits(&self, tape: &mut Tape, bound: &[NodeId], h: NodeId) -> Result<NodeId> {
        ops::linear(tape, h, bound[self.w.0], bound[self.b.0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub start: usize,
    pub end: usize,
    /// Best span score (probability scale), even when the decision is null.
    pub score: f64,
    pub null_score: f64,
    pub is_null: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullThreshold {
    pub tau: f64,
}

/// Softmax over the active subset; inactive positions get probability 0.
fn masked_softmax(logits: &[f64], active: &[bool]) -> Vec<f64> {
    let m = logits
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; logits.len()];
    let mut z = 0.0;
    for i in 0..logits.len() {
        if active[i] {
            out[i] = (logits[i] - m).exp();
            z += out[i];
        }
    }
    for v in &mut out {
        *v /= z;
    }
    out
}

fn span_probs(
    start_logits: &[f64],
    end_logits: &[f64],
    mask: &[bool],
    max_span_len: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let n = start_logits.len();
    if n == 0 {
        return Err(Error::EmptyInput("decode_span: no positions"));
    }
    if end_logits.len() != n || mask.len() != n {
        return Err(Error::DimMismatch {
            op: "decode_span",
            lhs: format!("{n} start logits"),
            rhs: format!("{} end logits / {} mask", end_logits.len(), mask.len()),
        });
    }
    if max_span_len == 0 {
        return Err(Error::Degenerate {
            what: "decode_span",
            msg: "max_span_len must be at least 1".into(),
        });
    }
    // position 0 anchors the null score and is always normalized over;
    // it is never a span candidate
    let mut active = mask.to_vec();
    active[0] = true;
    if !active[1..].iter().any(|&a| a) {
        return Err(Error::AllMasked);
    }
    let s = masked_softmax(start_logits, &active);
    let e = masked_softmax(end_logits, &active);
    Ok((s, e, active))
}

/// Best span under the mask and length cap, or null when it does not beat
/// `s_null + tau`.
pub fn decode_span(
    start_logits: &[f64],
    end_logits: &[f64],
    mask: &[bool],
    tau: NullThreshold,
    max_span_len: usize,
) -> Result<SpanPrediction> {
    let (s, e, active) = span_probs(start_logits, end_logits, mask, max_span_len)?;
    let n = s.len();
    let mut best = f64::NEG_INFINITY;
    let mut best_ij = (0, 0);
    for i in 1..n {
        if !active[i] {
            continue;
        }
        for j in i..n.min(i + max_span_len) {
            if !active[j] {
                continue;
            }
            let sc = s[i] + e[j];
            if sc > best {
                best = sc;
                best_ij = (i, j);
            }
        }
    }
    let null_score = s[0] + e[0];
    if best > null_score + tau.tau {
        Ok(SpanPrediction {
            start: best_ij.0,
            end: best_ij.1,
            score: best,
            null_score,
            is_null: false,
        })
    } else {
        Ok(SpanPrediction {
            start: 0,
            end: 0,
            score: best,
            null_score,
            is_null: true,
        })
    }
}

/// Reference decoder that re-derives the probabilities and scans every
/// legal pair without pruning tricks. For cross-checking in tests.
pub fn exhaustive_span_decode(
    start_logits: &[f64],
    end_logits: &[f64],
    mask: &[bool],
    tau: NullThreshold,
    max_span_len: usize,
) -> Result<SpanPrediction> {
    let n = start_logits.len();
    if n == 0 {
        return Err(Error::EmptyInput("decode_span: no positions"));
    }
    let mut active = mask.to_vec();
    active[0] = true;
    if !active[1..].iter().any(|&a| a) {
        return Err(Error::AllMasked);
    }
    // independent softmax: two-pass sum in plain order
    let soft = |logits: &[f64]| -> Vec<f64> {
        let mx = logits
            .iter()
            .enumerate()
            .filter(|(i, _)| active[*i])
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits
            .iter()
            .enumerate()
            .filter(|(i, _)| active[*i])
            .map(|(_, &v)| (v - mx).exp())
            .sum();
        logits
            .iter()
            .enumerate()
            .map(|(i, &v)| if active[i] { (v - mx).exp() / total } else { 0.0 })
            .collect()
    };
    let s = soft(start_logits);
    let e = soft(end_logits);
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for i in 1..n {
        for j in 1..n {
            if active[i] && active[j] && j >= i && j - i < max_span_len {
                cands.push((s[i] + e[j], i, j));
            }
        }
    }
    let &(best, bi, bj) = cands
        .iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("candidate set nonempty");
    let null_score = s[0] + e[0];
    if best > null_score + tau.tau {
        Ok(SpanPrediction {
            start: bi,
            end: bj,
            score: best,
            null_score,
            is_null: false,
        })
    } else {
        Ok(SpanPrediction {
            start: 0,
            end: 0,
            score: best,
            null_score,
            is_null: true,
        })
    }
}

/// One dev example's contribution to threshold tuning: the decision margin
/// and the metric earned under each decision.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdCase {
    /// Best-span score minus null score.
    pub diff: f64,
    /// Per-example F1 when the span is emitted.
    pub f1_if_answered: f64,
    /// Per-example F1 when null is emitted (1 for unanswerable golds).
    pub f1_if_null: f64,
}

/// Mean dev F1 under threshold `tau`: answer when `diff > tau`.
pub fn threshold_f1(cases: &[ThresholdCase], tau: f64) -> f64 {
    if cases.is_empty() {
        return 0.0;
    }
    let total: f64 = cases
        .iter()
        .map(|c| if c.diff > tau { c.f1_if_answered } else { c.f1_if_null })
        .sum();
    total / cases.len() as f64
}

/// Exact dev-set optimum of [`threshold_f1`]: sweeps the observed margins
/// plus both sentinels. Ties go to the larger (more conservative) tau.
pub fn tune_threshold(cases: &[ThresholdCase]) -> Result<NullThreshold> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("tune_threshold: no dev cases"));
    }
    let mut grid: Vec<f64> = cases.iter().map(|c| c.diff).collect();
    grid.push(TAU_MIN);
    grid.push(TAU_MAX);
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite margins"));
    grid.dedup();
    let mut best_tau = TAU_MIN;
    let mut best_f1 = f64::NEG_INFINITY;
    for &tau in &grid {
        let f1 = threshold_f1(cases, tau);
        if f1 >= best_f1 {
            best_f1 = f1;
            best_tau = tau;
        }
    }
    Ok(NullThreshold { tau: best_tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, BuildFn};

    #[test]
    fn zero_head_weights_give_uniform_logits() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(1);
        let head = ClassifierHead::create(4, 3, &mut store, &mut rng, "head.").unwrap();
        let w = store.lookup("head.w").unwrap();
        for v in &mut store.value_mut(w).data {
            *v = 0.0;
        }
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let h = tape.constant(2, 4, vec![1.0, -2.0, 0.5, 3.0, 9.0, 9.0, 9.0, 9.0]);
        let logits = head.logits(&mut tape, &bound, h).unwrap();
        assert_eq!(tape.dims(logits), (1, 3));
        assert_eq!(tape.value(logits), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn head_arity_matches_task() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(2);
        let cls = ClassifierHead::create(4, 2, &mut store, &mut rng, "c.").unwrap();
        let reg = ClassifierHead::create(4, 1, &mut store, &mut rng, "r.").unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let h = tape.constant(1, 4, vec![0.1, 0.2, 0.3, 0.4]);
        let two = cls.logits(&mut tape, &bound, h).unwrap();
        let one = reg.logits(&mut tape, &bound, h).unwrap();
        assert_eq!(tape.dims(two), (1, 2));
        assert_eq!(tape.dims(one), (1, 1));
    }

    #[test]
    fn head_gradients_check_out() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(3);
        let head = ClassifierHead::create(3, 2, &mut store, &mut rng, "head.").unwrap();
        store.add(
            "h_in",
            crate::tensor::Tensor::matrix(2, 3, vec![0.3, -0.1, 0.8, 0.0, 0.5, -0.7]),
            true,
        );
        let build: BuildFn = &|tape, store, bound| {
            let h = bound[store.lookup("h_in").unwrap().0];
            let logits = head.logits(tape, bound, h)?;
            ops::cross_entropy(tape, logits, &[1])
        };
        let mut rng2 = Rng::new(4);
        let r = grad_check(build, &mut store, 1e-5, 0, &mut rng2).unwrap();
        assert!(r.max_rel_err < 1e-7, "rel err {}", r.max_rel_err);
    }

    fn all_true(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn tau_max_always_null() {
        let s = vec![0.0, 5.0, 1.0, 0.5];
        let e = vec![0.0, 0.2, 6.0, 0.1];
        let p = decode_span(&s, &e, &all_true(4), NullThreshold { tau: TAU_MAX }, 30).unwrap();
        assert!(p.is_null);
        assert_eq!((p.start, p.end), (0, 0));
    }

    #[test]
    fn tau_min_returns_best_span() {
        // make (2, 3) clearly best: start peaks at 2, end peaks at 3
        let s = vec![0.0, 1.0, 8.0, 0.0, 0.0];
        let e = vec![0.0, 0.0, 1.0, 8.0, 0.0];
        let p = decode_span(&s, &e, &all_true(5), NullThreshold { tau: TAU_MIN }, 30).unwrap();
        assert!(!p.is_null);
        assert_eq!((p.start, p.end), (2, 3));
    }

    #[test]
    fn span_respects_length_cap() {
        // best unconstrained span is (1, 4); cap of 2 forbids j - i >= 2
        // and the runner-up end at position 2 makes (1, 2) the unique winner
        let s = vec![0.0, 9.0, 0.0, 0.0, 0.0];
        let e = vec![0.0, 0.0, 5.0, 0.0, 9.0];
        let uncapped =
            decode_span(&s, &e, &all_true(5), NullThreshold { tau: TAU_MIN }, 30).unwrap();
        assert_eq!((uncapped.start, uncapped.end), (1, 4));
        let p = decode_span(&s, &e, &all_true(5), NullThreshold { tau: TAU_MIN }, 2).unwrap();
        assert!(!p.is_null);
        assert_eq!((p.start, p.end), (1, 2));
    }

    #[test]
    fn masked_positions_never_selected() {
        let s = vec![0.0, 9.0, 0.1, 0.2];
        let e = vec![0.0, 9.0, 0.1, 0.2];
        let mut mask = all_true(4);
        mask[1] = false; // the would-be winner
        let p = decode_span(&s, &e, &mask, NullThreshold { tau: TAU_MIN }, 30).unwrap();
        assert!(p.start >= 2);
    }

    #[test]
    fn all_masked_is_an_error() {
        let s = vec![0.0, 1.0, 2.0];
        let e = vec![0.0, 1.0, 2.0];
        let mask = vec![false, false, false];
        assert!(matches!(
            decode_span(&s, &e, &mask, NullThreshold { tau: 0.0 }, 30),
            Err(Error::AllMasked)
        ));
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_instances() {
        let mut rng = Rng::new(77);
        for trial in 0..300 {
            let n = 2 + rng.below(23);
            let s: Vec<f64> = (0..n).map(|_| rng.uniform(-4.0, 4.0)).collect();
            let e: Vec<f64> = (0..n).map(|_| rng.uniform(-4.0, 4.0)).collect();
            let mask: Vec<bool> = (0..n).map(|i| i == 1 || rng.chance(0.8)).collect();
            let tau = NullThreshold {
                tau: [-5.0, 0.0, 5.0][trial % 3],
            };
            let cap = 1 + rng.below(8);
            let a = decode_span(&s, &e, &mask, tau, cap).unwrap();
            let b = exhaustive_span_decode(&s, &e, &mask, tau, cap).unwrap();
            assert_eq!(a, b, "trial {trial}");
        }
    }

    #[test]
    fn shift_invariance_of_decode() {
        let mut rng = Rng::new(31);
        for _ in 0..50 {
            let n = 3 + rng.below(10);
            let s: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let e: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let mask: Vec<bool> = (0..n).map(|i| i % 3 != 2).collect();
            let tau = NullThreshold { tau: 0.05 };
            let base = decode_span(&s, &e, &mask, tau, 30).unwrap();
            let s2: Vec<f64> = s.iter().map(|v| v + 7.3).collect();
            let e2: Vec<f64> = e.iter().map(|v| v - 3.1).collect();
            let shifted = decode_span(&s2, &e2, &mask, tau, 30).unwrap();
            assert_eq!(base.is_null, shifted.is_null);
            assert_eq!((base.start, base.end), (shifted.start, shifted.end));
            assert!((base.score - shifted.score).abs() < 1e-9);
        }
    }

    #[test]
    fn all_correct_answerable_tunes_to_min_sentinel() {
        let cases: Vec<ThresholdCase> = (0..10)
            .map(|i| ThresholdCase {
                diff: 0.1 * i as f64 - 0.3,
                f1_if_answered: 1.0,
                f1_if_null: 0.0,
            })
            .collect();
        let t = tune_threshold(&cases).unwrap();
        assert_eq!(t.tau, TAU_MIN);
    }

    #[test]
    fn all_unanswerable_tunes_to_max_sentinel() {
        let cases: Vec<ThresholdCase> = (0..10)
            .map(|i| ThresholdCase {
                diff: 0.1 * i as f64,
                f1_if_answered: 0.0,
                f1_if_null: 1.0,
            })
            .collect();
        let t = tune_threshold(&cases).unwrap();
        assert_eq!(t.tau, TAU_MAX);
    }

    #[test]
    fn tuned_tau_dominates_every_grid_candidate() {
        let mut rng = Rng::new(91);
        let cases: Vec<ThresholdCase> = (0..200)
            .map(|_| {
                let answerable = rng.chance(0.5);
                ThresholdCase {
                    diff: rng.uniform(-1.0, 1.0),
                    f1_if_answered: if answerable {
                        [0.0, 0.5, 0.8, 1.0][rng.below(4)]
                    } else {
                        0.0
                    },
                    f1_if_null: if answerable { 0.0 } else { 1.0 },
                }
            })
            .collect();
        let t = tune_threshold(&cases).unwrap();
        let best = threshold_f1(&cases, t.tau);
        for c in cases.iter().map(|c| c.diff).chain([TAU_MIN, TAU_MAX]) {
            assert!(
                best >= threshold_f1(&cases, c) - 1e-12,
                "tau {c} beats tuned {}",
                t.tau
            );
        }
        // ties break toward larger tau
        for c in cases.iter().map(|c| c.diff).chain([TAU_MIN, TAU_MAX]) {
            if c > t.tau {
                assert!(threshold_f1(&cases, c) < best);
            }
        }
    }
}
