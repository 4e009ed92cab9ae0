//! Validated building blocks over the tape: dense layers, the 1-D
//! convolution, pooling, embedding lookup, a bidirectional GRU, and losses.
//!
//! Tape primitives assert on misuse; everything here checks shapes up front
//! and returns typed errors so callers can surface bad data without
//! aborting.

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};

fn shape_str(tape: &Tape, id: NodeId) -> String {
    let (r, c) = tape.dims(id);
    format!("{r}x{c}")
}

fn dim_err(tape: &Tape, op: &'static str, lhs: NodeId, rhs: NodeId) -> Error {
    Error::DimMismatch {
        op,
        lhs: shape_str(tape, lhs),
        rhs: shape_str(tape, rhs),
    }
}

/// `x · w + b` with `x: (n, d_in)`, `w: (d_in, d_out)`, `b: (1, d_out)`.
pub fn linear(tape: &mut Tape, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let (_, d_in) = tape.dims(x);
    let (wr, d_out) = tape.dims(w);
    if wr != d_in {
        return Err(dim_err(tape, "linear", x, w));
    }
    if tape.dims(b) != (1, d_out) {
        return Err(dim_err(tape, "linear bias", w, b));
    }
    let y = tape.matmul(x, w);
    Ok(tape.add_bias(y, b))
}

/// Valid (no padding) 1-D convolution over the rows of `x: (l, d_in)`.
///
/// `w: (k * d_in, d_out)` holds the kernel with taps stacked row-major: the
/// first `d_in` rows belong to tap 0, the next `d_in` to tap 1, and so on,
/// matching the flattening of a window of `k` consecutive input rows.
/// Output is `(l - k + 1, d_out)`; requires `l >= k >= 1`.
pub fn conv1d_valid(
    tape: &mut Tape,
    x: NodeId,
    w: NodeId,
    b: NodeId,
    k: usize,
) -> Result<NodeId> {
    let (l, d_in) = tape.dims(x);
    if k == 0 {
        return Err(Error::EmptyInput("conv1d_valid: kernel width 0"));
    }
    if l < k {
        return Err(Error::DimMismatch {
            op: "conv1d_valid",
            lhs: format!("{l} input rows"),
            rhs: format!("kernel width {k}"),
        });
    }
    let (wr, d_out) = tape.dims(w);
    if wr != k * d_in {
        return Err(Error::DimMismatch {
            op: "conv1d_valid weight",
            lhs: format!("{}x{}", k * d_in, d_out),
            rhs: shape_str(tape, w),
        });
    }
    if tape.dims(b) != (1, d_out) {
        return Err(dim_err(tape, "conv1d_valid bias", w, b));
    }
    let win = tape.windows(x, k);
    let y = tape.matmul(win, w);
    Ok(tape.add_bias(y, b))
}

/// ReLU then column-wise max over rows: `(p, b)` -> `(1, b)`.
pub fn relu_maxpool(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    let (p, _) = tape.dims(x);
    if p == 0 {
        return Err(Error::EmptyInput("relu_maxpool: no rows"));
    }
    let r = tape.relu(x);
    Ok(tape.max_rows(r))
}

/// Gather rows of an embedding `table: (v, d)` by id.
pub fn embedding_lookup(tape: &mut Tape, table: NodeId, ids: &[usize]) -> Result<NodeId> {
    let (v, _) = tape.dims(table);
    if ids.is_empty() {
        return Err(Error::EmptyInput("embedding_lookup: no ids"));
    }
    for &id in ids {
        if id >= v {
            return Err(Error::IndexOutOfRange {
                what: "embedding_lookup",
                index: id,
                size: v,
            });
        }
    }
    Ok(tape.gather_rows(table, ids))
}

/// One direction of GRU weights. Update/reset/candidate gates each have an
/// input map `(d, h)`, a recurrent map `(h, h)`, and a bias `(1, h)`.
#[derive(Clone, Copy)]
pub struct GruWeights {
    pub wz: NodeId,
    pub uz: NodeId,
    pub bz: NodeId,
    pub wr: NodeId,
    pub ur: NodeId,
    pub br: NodeId,
    pub wh: NodeId,
    pub uh: NodeId,
    pub bh: NodeId,
}

impl GruWeights {
    fn check(&self, tape: &Tape, d: usize) -> Result<usize> {
        let (wd, h) = tape.dims(self.wz);
        if wd != d {
            return Err(Error::DimMismatch {
                op: "gru input weight",
                lhs: format!("input dim {d}"),
                rhs: format!("{wd}x{h}"),
            });
        }
        for (name, id, want) in [
            ("wr", self.wr, (d, h)),
            ("wh", self.wh, (d, h)),
            ("uz", self.uz, (h, h)),
            ("ur", self.ur, (h, h)),
            ("uh", self.uh, (h, h)),
            ("bz", self.bz, (1, h)),
            ("br", self.br, (1, h)),
            ("bh", self.bh, (1, h)),
        ] {
            if tape.dims(id) != want {
                return Err(Error::DimMismatch {
                    op: "gru weight",
                    lhs: format!("{name} {}", shape_str(tape, id)),
                    rhs: format!("{}x{}", want.0, want.1),
                });
            }
        }
        Ok(h)
    }
}

/// Unrolled single-direction GRU over the rows of `x: (l, d)`, zero initial
/// state, returning all hidden states `(l, h)`.
///
/// Gate convention:
///   z_t = sigmoid(x_t Wz + h_{t-1} Uz + bz)
///   r_t = sigmoid(x_t Wr + h_{t-1} Ur + br)
///   c_t = tanh(x_t Wh + (r_t * h_{t-1}) Uh + bh)
///   h_t = (1 - z_t) * h_{t-1} + z_t * c_t
pub fn gru_forward(tape: &mut Tape, x: NodeId, w: &GruWeights) -> Result<NodeId> {
    let (l, d) = tape.dims(x);
    if l == 0 {
        return Err(Error::EmptyInput("gru_forward: empty sequence"));
    }
    let h = w.check(tape, d)?;
    let mut state = tape.constant(1, h, vec![0.0; h]);
    let mut outs = Vec::with_capacity(l);
    for t in 0..l {
        let xt = tape.slice_rows(x, t, 1);
        let z = gate(tape, xt, state, w.wz, w.uz, w.bz);
        let z = tape.sigmoid(z);
        let r = gate(tape, xt, state, w.wr, w.ur, w.br);
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, state);
        let c = gate(tape, xt, rh, w.wh, w.uh, w.bh);
        let c = tape.tanh(c);
        let keep = tape.affine(z, -1.0, 1.0);
        let a = tape.mul(keep, state);
        let b = tape.mul(z, c);
        state = tape.add(a, b);
        outs.push(state);
    }
    Ok(tape.stack_rows(&outs))
}

fn gate(tape: &mut Tape, x: NodeId, h: NodeId, wi: NodeId, wr: NodeId, b: NodeId) -> NodeId {
    let xi = tape.matmul(x, wi);
    let hi = tape.matmul(h, wr);
    let s = tape.add(xi, hi);
    tape.add(s, b)
}

/// Bidirectional GRU: forward pass over `x` and a backward pass over the
/// row-reversed sequence, outputs re-aligned and concatenated per position
/// to `(l, 2h)`.
pub fn bigru_forward(
    tape: &mut Tape,
    x: NodeId,
    fwd: &GruWeights,
    bwd: &GruWeights,
) -> Result<NodeId> {
    let (l, _) = tape.dims(x);
    if l == 0 {
        return Err(Error::EmptyInput("bigru_forward: empty sequence"));
    }
    let hf = gru_forward(tape, x, fwd)?;
    let rev: Vec<usize> = (0..l).rev().collect();
    let xr = tape.gather_rows(x, &rev);
    let hb_rev = gru_forward(tape, xr, bwd)?;
    let hb = tape.gather_rows(hb_rev, &rev);
    Ok(tape.concat_cols(&[hf, hb]))
}

/// Mean cross-entropy of `logits: (n, c)` rows against class indices.
pub fn cross_entropy(tape: &mut Tape, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
    let (n, c) = tape.dims(logits);
    if targets.len() != n {
        return Err(Error::DimMismatch {
            op: "cross_entropy",
            lhs: format!("{n} logit rows"),
            rhs: format!("{} targets", targets.len()),
        });
    }
    for &t in targets {
        if t >= c {
            return Err(Error::IndexOutOfRange {
                what: "cross_entropy target",
                index: t,
                size: c,
            });
        }
    }
    Ok(tape.cross_entropy_mean(logits, targets))
}

/// Mean squared error of `pred` against constants.
pub fn mse(tape: &mut Tape, pred: NodeId, target: &[f64]) -> Result<NodeId> {
    let (r, c) = tape.dims(pred);
    if r * c != target.len() {
        return Err(Error::DimMismatch {
            op: "mse",
            lhs: format!("{r}x{c} predictions"),
            rhs: format!("{} targets", target.len()),
        });
    }
    Ok(tape.mse_mean(pred, target))
}

/// Span objective: average of the start-position and end-position
/// cross-entropies. `span_logits: (l, 2)` carries start scores in column 0
/// and end scores in column 1.
pub fn span_loss(
    tape: &mut Tape,
    span_logits: NodeId,
    start: usize,
    end: usize,
) -> Result<NodeId> {
    let (l, c) = tape.dims(span_logits);
    if c != 2 {
        return Err(Error::DimMismatch {
            op: "span_loss",
            lhs: format!("{l}x{c}"),
            rhs: "lx2".to_string(),
        });
    }
    for (what, pos) in [("span start", start), ("span end", end)] {
        if pos >= l {
            return Err(Error::IndexOutOfRange {
                what: if what == "span start" {
                    "span_loss start"
                } else {
                    "span_loss end"
                },
                index: pos,
                size: l,
            });
        }
    }
    let s_col = tape.slice_cols(span_logits, 0, 1);
    let s_row = tape.transpose(s_col);
    let ce_s = tape.cross_entropy_mean(s_row, &[start]);
    let e_col = tape.slice_cols(span_logits, 1, 1);
    let e_row = tape.transpose(e_col);
    let ce_e = tape.cross_entropy_mean(e_row, &[end]);
    let sum = tape.add(ce_s, ce_e);
    Ok(tape.affine(sum, 0.5, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamId, ParamStore};
    use crate::rng::Rng;

    #[test]
    fn conv_matches_hand_example() {
        // k=2, single in/out channel, kernel [1, 1]: sliding sums.
        let mut tape = Tape::new();
        let x = tape.constant(3, 1, vec![1.0, 2.0, 3.0]);
        let w = tape.constant(2, 1, vec![1.0, 1.0]);
        let b = tape.constant(1, 1, vec![0.0]);
        let y = conv1d_valid(&mut tape, x, w, b, 2).unwrap();
        assert_eq!(tape.value(y), &[3.0, 5.0]);
    }

    #[test]
    fn conv_rejects_short_input() {
        let mut tape = Tape::new();
        let x = tape.constant(2, 1, vec![1.0, 2.0]);
        let w = tape.constant(3, 1, vec![1.0, 1.0, 1.0]);
        let b = tape.constant(1, 1, vec![0.0]);
        assert!(matches!(
            conv1d_valid(&mut tape, x, w, b, 3),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn relu_maxpool_hand_example() {
        let mut tape = Tape::new();
        let x = tape.constant(2, 2, vec![1.0, 5.0, 3.0, 2.0]);
        let y = relu_maxpool(&mut tape, x).unwrap();
        assert_eq!(tape.value(y), &[3.0, 5.0]);
    }

    #[test]
    fn relu_maxpool_rejects_empty() {
        let mut tape = Tape::new();
        let x = tape.constant(0, 2, vec![]);
        assert!(matches!(
            relu_maxpool(&mut tape, x),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn embedding_lookup_checks_range() {
        let mut tape = Tape::new();
        let t = tape.constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(embedding_lookup(&mut tape, t, &[2]).is_err());
        let y = embedding_lookup(&mut tape, t, &[1, 0]).unwrap();
        assert_eq!(tape.value(y), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn cross_entropy_hand_example() {
        // logits [1,2,3], target class 2: loss = ln(e + e^2 + e^3) - 3.
        let mut tape = Tape::new();
        let x = tape.constant(1, 3, vec![1.0, 2.0, 3.0]);
        let l = cross_entropy(&mut tape, x, &[2]).unwrap();
        let want = (1.0_f64.exp() + 2.0_f64.exp() + 3.0_f64.exp()).ln() - 3.0;
        assert!((tape.scalar_value(l) - want).abs() < 1e-12);
    }

    #[test]
    fn gru_single_step_matches_scalar_recurrence() {
        // 1-d input, 1-d state, all weights fixed scalars; first step has
        // h0 = 0 so z = sigmoid(wz*x + bz), c = tanh(wh*x + bh), h1 = z*c.
        let mut tape = Tape::new();
        let x = tape.constant(1, 1, vec![0.7]);
        let c = |t: &mut Tape, v: f64| t.constant(1, 1, vec![v]);
        let w = GruWeights {
            wz: c(&mut tape, 0.5),
            uz: c(&mut tape, 0.3),
            bz: c(&mut tape, 0.1),
            wr: c(&mut tape, -0.4),
            ur: c(&mut tape, 0.2),
            br: c(&mut tape, 0.0),
            wh: c(&mut tape, 0.9),
            uh: c(&mut tape, -0.6),
            bh: c(&mut tape, 0.05),
        };
        let h = gru_forward(&mut tape, x, &w).unwrap();
        let z = 1.0 / (1.0 + (-(0.5 * 0.7 + 0.1_f64)).exp());
        let cand = (0.9 * 0.7 + 0.05_f64).tanh();
        let want = z * cand;
        assert!((tape.value(h)[0] - want).abs() < 1e-12);
    }

    #[test]
    fn gru_two_steps_match_scalar_recurrence() {
        let xs = [0.7, -0.3];
        let (wz, uz, bz) = (0.5, 0.3, 0.1);
        let (wr, ur, br) = (-0.4, 0.2, 0.0);
        let (wh, uh, bh) = (0.9, -0.6, 0.05);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = 0.0;
        let mut want = Vec::new();
        for &x in &xs {
            let z = sig(wz * x + uz * h + bz);
            let r = sig(wr * x + ur * h + br);
            let c = (wh * x + uh * (r * h) + bh).tanh();
            h = (1.0 - z) * h + z * c;
            want.push(h);
        }

        let mut tape = Tape::new();
        let x = tape.constant(2, 1, xs.to_vec());
        let c = |t: &mut Tape, v: f64| t.constant(1, 1, vec![v]);
        let w = GruWeights {
            wz: c(&mut tape, wz),
            uz: c(&mut tape, uz),
            bz: c(&mut tape, bz),
            wr: c(&mut tape, wr),
            ur: c(&mut tape, ur),
            br: c(&mut tape, br),
            wh: c(&mut tape, wh),
            uh: c(&mut tape, uh),
            bh: c(&mut tape, bh),
        };
        let out = gru_forward(&mut tape, x, &w).unwrap();
        for (got, want) in tape.value(out).iter().zip(&want) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn bigru_back_direction_sees_future() {
        // With a 2-step sequence, position 0 of the backward half must
        // depend on the input at position 1.
        let mut rng = Rng::new(3);
        let mut store = ParamStore::new();
        let mk = |s: &mut ParamStore, n: &str, r: usize, c: usize, rng: &mut Rng| {
            s.add_xavier(n, r, c, rng)
        };
        let names = ["wz", "uz", "wr", "ur", "wh", "uh"];
        for dir in ["f", "b"] {
            for n in names {
                let rows = if n.starts_with('w') { 1 } else { 2 };
                mk(&mut store, &format!("{dir}.{n}"), rows, 2, &mut rng);
            }
            for n in ["bz", "br", "bh"] {
                store.add_bias(&format!("{dir}.{n}"), 2);
            }
        }
        let run = |x_data: Vec<f64>, store: &ParamStore| -> Vec<f64> {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let g = |n: &str| bound[store.lookup(n).unwrap().0];
            let w = |d: &str| GruWeights {
                wz: g(&format!("{d}.wz")),
                uz: g(&format!("{d}.uz")),
                bz: g(&format!("{d}.bz")),
                wr: g(&format!("{d}.wr")),
                ur: g(&format!("{d}.ur")),
                br: g(&format!("{d}.br")),
                wh: g(&format!("{d}.wh")),
                uh: g(&format!("{d}.uh")),
                bh: g(&format!("{d}.bh")),
            };
            let x = tape.constant(2, 1, x_data);
            let out = bigru_forward(&mut tape, x, &w("f"), &w("b")).unwrap();
            tape.value(out).to_vec()
        };
        let a = run(vec![0.5, 1.0], &store);
        let b = run(vec![0.5, -1.0], &store);
        // forward half at position 0 is unchanged, backward half is not
        assert_eq!(a[0..2], b[0..2]);
        assert_ne!(a[2..4], b[2..4]);
        let _ = ParamId(0);
    }

    #[test]
    fn span_loss_is_mean_of_two_ces() {
        let mut tape = Tape::new();
        let logits = tape.constant(3, 2, vec![1.0, 0.0, 2.0, 1.0, 0.5, -1.0]);
        let l = span_loss(&mut tape, logits, 1, 0).unwrap();
        let lse = |v: &[f64]| {
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        };
        let ce_s = lse(&[1.0, 2.0, 0.5]) - 2.0;
        let ce_e = lse(&[0.0, 1.0, -1.0]) - 0.0;
        assert!((tape.scalar_value(l) - 0.5 * (ce_s + ce_e)).abs() < 1e-12);
    }
}
