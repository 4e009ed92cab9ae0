//! Central-difference verification of tape gradients.
//!
//! Piecewise-linear ops (ReLU, max pooling) make finite differences
//! meaningless at coordinates where the ±eps evaluations land on different
//! linear pieces. Each forward pass therefore records a signature of its
//! discrete choices; a coordinate is skipped when the signatures of the
//! three evaluations (center, +eps, -eps) disagree.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};

/// Builds the scalar objective. Receives the tape, the store (for shapes or
/// names), and the bound leaf for each parameter, indexed by `ParamId.0`.
pub type BuildFn<'a> = &'a dyn Fn(&mut Tape, &ParamStore, &[NodeId]) -> Result<NodeId>;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

type ForwardOut = (f64, Vec<u32>, HashMap<ParamId, Vec<f64>>);

fn forward(build: BuildFn, params: &ParamStore, want_grads: bool) -> Result<ForwardOut> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = build(&mut tape, params, &bound)?;
    if tape.dims(out) != (1, 1) {
        let (r, c) = tape.dims(out);
        return Err(Error::Degenerate {
            what: "grad_check",
            msg: format!("objective must be scalar, got {r}x{c}"),
        });
    }
    let value = tape.scalar_value(out);
    let sig = tape.kink_signature();
    let grads = if want_grads {
        let mut gb = tape.backward(out);
        tape.param_grads(&mut gb)
    } else {
        HashMap::new()
    };
    Ok((value, sig, grads))
}

/// Compare analytic gradients against central differences on up to
/// `samples` randomly chosen coordinates (0 checks every coordinate).
/// Relative error per coordinate is `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check(
    build: BuildFn,
    params: &mut ParamStore,
    eps: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let (_, sig0, grads) = forward(build, params, true)?;

    let mut coords: Vec<(ParamId, usize)> = params
        .ids()
        .flat_map(|pid| (0..params.value(pid).len()).map(move |i| (pid, i)))
        .collect();
    if samples > 0 && samples < coords.len() {
        rng.shuffle(&mut coords);
        coords.truncate(samples);
    }

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    for (pid, i) in coords {
        let orig = params.value(pid).data[i];
        params.value_mut(pid).data[i] = orig + eps;
        let (f_plus, sig_plus, _) = forward(build, params, false)?;
        params.value_mut(pid).data[i] = orig - eps;
        let (f_minus, sig_minus, _) = forward(build, params, false)?;
        params.value_mut(pid).data[i] = orig;

        if sig_plus != sig_minus || sig_plus != sig0 {
            report.skipped += 1;
            continue;
        }
        let numeric = (f_plus - f_minus) / (2.0 * eps);
        let analytic = grads.get(&pid).map_or(0.0, |g| g[i]);
        let rel = (analytic - numeric).abs() / (1e-8_f64).max(analytic.abs() + numeric.abs());
        report.checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((params.name(pid).to_string(), i));
        }
    }
    Ok(report)
}
