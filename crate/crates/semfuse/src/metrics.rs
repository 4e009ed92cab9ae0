//! Evaluation metrics: label-level scores for classification/regression
//! heads and text-level exact-match / token-F1 for extracted spans.

use std::collections::HashMap;

use crate::error::{Error, Result};

fn check_pair_lengths(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch {
            op: what,
            lhs: format!("{a} predictions"),
            rhs: format!("{b} golds"),
        });
    }
    if a == 0 {
        return Err(Error::EmptyInput(what));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], golds: &[usize]) -> Result<f64> {
    check_pair_lengths("accuracy", preds.len(), golds.len())?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// F1 of the positive class (label 1). Zero precision+recall denominator
/// collapses to 0 rather than erroring: a run that never predicts the
/// positive class still gets a score.
pub fn f1_binary(preds: &[usize], golds: &[usize]) -> Result<f64> {
    check_pair_lengths("f1_binary", preds.len(), golds.len())?;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (&p, &g) in preds.iter().zip(golds) {
        match (p, g) {
            (1, 1) => tp += 1.0,
            (1, _) => fp += 1.0,
            (_, 1) => fn_ += 1.0,
            _ => {}
        }
    }
    let denom = 2.0 * tp + fp + fn_;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp / denom)
}

/// Matthews correlation over binary labels; 0 when any confusion-matrix
/// margin is empty (the conventional value, not an error).
pub fn matthews(preds: &[usize], golds: &[usize]) -> Result<f64> {
    check_pair_lengths("matthews", preds.len(), golds.len())?;
    let (mut tp, mut tn, mut fp, mut fn_) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for (&p, &g) in preds.iter().zip(golds) {
        match (p, g) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (1, 0) => fp += 1.0,
            (0, 1) => fn_ += 1.0,
            _ => {
                return Err(Error::OutOfRange {
                    what: "matthews label",
                    value: p.max(g) as f64,
                    expected: "0 or 1",
                })
            }
        }
    }
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((tp * tn - fp * fn_) / denom)
}

/// Pearson correlation; constant inputs have no defined correlation and
/// are reported as an error rather than NaN.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair_lengths("pearson", xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::EmptyInput("pearson: need at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Degenerate {
            what: "pearson",
            msg: "zero variance input".into(),
        });
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Answer-string normalization: lowercase, drop ASCII punctuation, drop
/// the articles a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    // punctuation is deleted outright, so "17.5" becomes one token "175"
    let depunct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    depunct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p == g { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Exact match and token-overlap F1 against a set of acceptable answers,
/// both after normalization, taking the best gold. `pred = None` means a
/// null (no-answer) prediction, matched against an empty gold set.
pub fn squad_em_f1(pred: Option<&str>, golds: &[String]) -> (f64, f64) {
    match (pred, golds.is_empty()) {
        (None, true) => (1.0, 1.0),
        (None, false) | (Some(_), true) => (0.0, 0.0),
        (Some(p), false) => {
            let np = normalize_answer(p);
            let mut em = 0.0;
            let mut f1 = 0.0_f64;
            for g in golds {
                let ng = normalize_answer(g);
                if np == ng {
                    em = 1.0;
                }
                f1 = f1.max(token_f1(&np, &ng));
            }
            (em, f1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PREDS: [usize; 6] = [1, 0, 1, 1, 0, 1];
    const GOLDS: [usize; 6] = [1, 0, 0, 1, 0, 1];

    #[test]
    fn accuracy_hand_value() {
        assert_eq!(accuracy(&PREDS, &GOLDS).unwrap(), 5.0 / 6.0);
    }

    #[test]
    fn f1_hand_value() {
        // tp 3, fp 1, fn 0: f1 = 6/7
        assert!((f1_binary(&PREDS, &GOLDS).unwrap() - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn matthews_hand_value() {
        // (3*2 - 1*0) / sqrt(4*3*3*2) = 6/sqrt(72); the frozen literal
        // happens to equal 1/sqrt(2)
        #[allow(clippy::approx_constant)]
        const EXPECTED: f64 = 0.7071067811865476;
        let got = matthews(&PREDS, &GOLDS).unwrap();
        assert!((got - EXPECTED).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn matthews_zero_denominator_is_zero() {
        assert_eq!(matthews(&[1, 1, 1], &[1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn f1_zero_denominator_is_zero() {
        assert_eq!(f1_binary(&[0, 0], &[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn pearson_hand_value() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [1.0, 3.0, 2.0, 5.0, 4.0, 6.0];
        let got = pearson(&x, &y).unwrap();
        assert!((got - 0.8857142857142857).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn pearson_perfect_and_inverse() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_input_errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn metric_length_and_empty_checks() {
        assert!(accuracy(&[1], &[1, 0]).is_err());
        assert!(accuracy(&[], &[]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn normalization_steps() {
        assert_eq!(normalize_answer("The  Quick, Brown Fox!"), "quick brown fox");
        assert_eq!(normalize_answer("an apple a day"), "apple day");
        assert_eq!(normalize_answer("17.5 million"), "175 million");
    }

    #[test]
    fn em_f1_exact_match_pair() {
        let golds = vec!["over 17.5 million".to_string()];
        assert_eq!(squad_em_f1(Some("over 17.5 million"), &golds), (1.0, 1.0));
    }

    #[test]
    fn em_f1_partial_overlap_pair() {
        let golds = vec!["over 17.5 million".to_string()];
        let (em, f1) = squad_em_f1(Some("17.5 million"), &golds);
        assert_eq!(em, 0.0);
        assert!((f1 - 0.8).abs() < 1e-15, "got {f1}");
    }

    #[test]
    fn em_f1_null_conventions() {
        assert_eq!(squad_em_f1(None, &[]), (1.0, 1.0));
        assert_eq!(squad_em_f1(None, &["x".to_string()]), (0.0, 0.0));
        assert_eq!(squad_em_f1(Some("x"), &[]), (0.0, 0.0));
    }

    #[test]
    fn em_f1_takes_best_gold() {
        let golds = vec!["blue whale".to_string(), "whale".to_string()];
        let (em, f1) = squad_em_f1(Some("the whale"), &golds);
        assert_eq!(em, 1.0);
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn f1_counts_token_multiplicity() {
        // "big big cat" vs "big cat": one "big" matches, the extra does not
        let got = token_f1("big big cat", "big cat");
        let want = 2.0 * (2.0 / 3.0) * 1.0 / (2.0 / 3.0 + 1.0);
        assert!((got - want).abs() < 1e-15);
    }
}
