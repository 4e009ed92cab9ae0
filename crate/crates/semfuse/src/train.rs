//! Training and evaluation driver, plus the sweep and ablation harnesses.
//!
//! One process trains one model. Every run is a pure function of the
//! config (seed included) and the datasets: batches reshuffle from the
//! run's own generator, the optimizer schedule is step-indexed, and log
//! lines reproduce byte for byte when a run repeats.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use crate::config::{FusionMode, RunConfig, TaskKind};
use crate::data::{Target, TaskExample};
use crate::error::{Error, Result};
use crate::heads::{self, NullThreshold, ThresholdCase};
use crate::metrics;
use crate::model::{assemble, Model, ModelInput, Prediction, DEFAULT_MAX_SPAN_LEN};
use crate::optim::{schedule_multiplier, Adam, AdamConfig};
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::srl::{inject_noise, LabelVocab};
use crate::tape::Tape;
use crate::tokenizer::Vocab;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const CONFIG_FILE: &str = "run_config.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const THRESHOLD_FILE: &str = "threshold.json";

/// Dev-set tau used while training span models; the real threshold is
/// tuned afterwards.
const TRAIN_TAU: NullThreshold = NullThreshold { tau: 0.0 };

#[derive(Debug, Serialize)]
struct EpochLog {
    epoch: usize,
    train_loss: f64,
    train_metric: f64,
    /// None when the run has no dev set.
    dev_metric: Option<f64>,
}

#[derive(Debug)]
pub struct TrainReport {
    pub best_dev_metric: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub final_train_metric: f64,
    /// Exact lines written to the run log, one per epoch.
    pub log_lines: Vec<String>,
}

/// Classifier arity implied by the data: highest class id plus one.
/// Regression heads always have one output.
pub fn output_arity(cfg: &RunConfig, sets: &[&[TaskExample]]) -> usize {
    match cfg.task_kind {
        TaskKind::Classification => sets
            .iter()
            .flat_map(|s| s.iter())
            .filter_map(|ex| match ex.target {
                Target::Class(c) => Some(c + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0),
        _ => 1,
    }
}

fn assemble_all(
    examples: &[TaskExample],
    cfg: &RunConfig,
    vocab: &Vocab,
    labels: &LabelVocab,
) -> Result<Vec<ModelInput>> {
    examples
        .iter()
        .map(|ex| assemble(ex, cfg.m, cfg.max_len, vocab, labels))
        .collect()
}

/// Mean task metric of `model` over a set. Classification reports
/// accuracy, regression the Pearson correlation (0 when undefined, as
/// early constant predictors are normal), spans the mean token F1 at the
/// training tau.
pub fn evaluate(
    model: &Model,
    store: &ParamStore,
    examples: &[TaskExample],
    inputs: &[ModelInput],
    tau: NullThreshold,
) -> Result<EvalReport> {
    assert_eq!(examples.len(), inputs.len());
    if examples.is_empty() {
        return Err(Error::EmptyInput("evaluate: no examples"));
    }
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    let mut reals = Vec::new();
    let mut real_golds = Vec::new();
    let mut em_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut rows = Vec::new();
    for (ex, input) in examples.iter().zip(inputs) {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let p = model.predict(&mut tape, &bound, input, tau, DEFAULT_MAX_SPAN_LEN)?;
        match (p, &ex.target) {
            (Prediction::Class(c), Target::Class(g)) => {
                preds.push(c);
                golds.push(*g);
            }
            (Prediction::Real(x), Target::Real(g)) => {
                reals.push(x);
                real_golds.push(*g);
            }
            (Prediction::Span(sp), Target::Spans(_)) => {
                let text = Model::span_text(input, &sp);
                let golds = ex.answer_texts();
                let (em, f1) = metrics::squad_em_f1(text.as_deref(), &golds);
                em_sum += em;
                f1_sum += f1;
                rows.push(PredRow {
                    id: ex.id.clone(),
                    pred: match text {
                        Some(t) => serde_json::Value::String(t),
                        None => serde_json::Value::Null,
                    },
                    score: sp.score,
                    null_score: sp.null_score,
                });
            }
            _ => return Err(Error::Config("prediction kind does not match target".into())),
        }
    }
    let n = examples.len() as f64;
    let (metric, em) = match model.task {
        TaskKind::Classification => (metrics::accuracy(&preds, &golds)?, None),
        TaskKind::Regression => {
            let r = metrics::pearson(&reals, &real_golds).unwrap_or(0.0);
            (r, None)
        }
        TaskKind::Span => (f1_sum / n, Some(em_sum / n)),
    };
    Ok(EvalReport { metric, em, rows })
}

#[derive(Debug, Serialize)]
pub struct PredRow {
    pub id: String,
    pub pred: serde_json::Value,
    pub score: f64,
    pub null_score: f64,
}

#[derive(Debug)]
pub struct EvalReport {
    pub metric: f64,
    /// Mean exact match; span tasks only.
    pub em: Option<f64>,
    /// One row per span example, for the prediction dump.
    pub rows: Vec<PredRow>,
}

pub fn write_predictions(path: &Path, rows: &[PredRow]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Train a model from scratch. Writes the canonical config, a per-epoch
/// JSONL log, and the best-dev checkpoint into `run_dir`. Classification
/// runs stop after the first epoch with perfect training accuracy; there
/// is nothing left for the loss to reorder at desk scale.
pub fn train(
    cfg: &RunConfig,
    train_set: &[TaskExample],
    dev_set: &[TaskExample],
    vocab: &Vocab,
    labels: &LabelVocab,
    run_dir: &Path,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("train: empty training set"));
    }
    std::fs::create_dir_all(run_dir)?;
    cfg.save(&run_dir.join(CONFIG_FILE))?;

    let n_outputs = output_arity(cfg, &[train_set, dev_set]);
    let mut store = ParamStore::new();
    let mut rng = Rng::new(cfg.seed);
    let model = Model::create(cfg, vocab, labels, n_outputs, &mut store, &mut rng)?;
    let train_inputs = assemble_all(train_set, cfg, vocab, labels)?;
    let dev_inputs = assemble_all(dev_set, cfg, vocab, labels)?;

    let n_batches = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * n_batches) as u64;
    let mut adam = Adam::new(AdamConfig::new(cfg.learning_rate, cfg.weight_decay), &store);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step: u64 = 0;

    let ckpt = run_dir.join(CHECKPOINT_FILE);
    let mut best_dev = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut log_lines = Vec::new();
    let mut final_train_metric = 0.0;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_sum: HashMap<ParamId, Vec<f64>> = HashMap::new();
            for &i in batch {
                let mut tape = Tape::new();
                let bound = store.bind(&mut tape);
                let loss = model.loss(&mut tape, &bound, &train_inputs[i], &train_set[i].target)?;
                let value = tape.scalar_value(loss);
                if !value.is_finite() {
                    return Err(Error::Diverged { step: step as usize });
                }
                loss_sum += value;
                let mut gb = tape.backward(loss);
                for (pid, g) in tape.param_grads(&mut gb) {
                    match grad_sum.entry(pid) {
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            for (a, b) in e.get_mut().iter_mut().zip(&g) {
                                *a += b;
                            }
                        }
                        std::collections::hash_map::Entry::Vacant(e) => {
                            e.insert(g);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grad_sum.values_mut() {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            let lr_scale = schedule_multiplier(step, total_steps, cfg.warmup_fraction);
            adam.step(&mut store, &grad_sum, lr_scale);
            step += 1;
        }
        if !store.all_finite() {
            return Err(Error::Diverged { step: step as usize });
        }

        let train_eval = evaluate(&model, &store, train_set, &train_inputs, TRAIN_TAU)?;
        let dev_eval = if dev_set.is_empty() {
            None
        } else {
            Some(evaluate(&model, &store, dev_set, &dev_inputs, TRAIN_TAU)?)
        };
        let dev_metric = dev_eval.as_ref().map(|e| e.metric);
        final_train_metric = train_eval.metric;

        let line = serde_json::to_string(&EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_metric: train_eval.metric,
            dev_metric,
        })?;
        log_lines.push(line);

        if let Some(dev_metric) = dev_metric {
            if dev_metric > best_dev {
                best_dev = dev_metric;
                best_epoch = epoch;
                store.save(&ckpt)?;
            }
        }
        if cfg.task_kind == TaskKind::Classification && train_eval.metric == 1.0 {
            break;
        }
    }
    if best_dev == f64::NEG_INFINITY {
        // no dev set: keep the final parameters
        store.save(&ckpt)?;
        best_dev = final_train_metric;
        best_epoch = log_lines.len().saturating_sub(1);
    }
    std::fs::write(run_dir.join(LOG_FILE), log_lines.join("\n") + "\n")?;
    Ok(TrainReport {
        best_dev_metric: best_dev,
        best_epoch,
        epochs_run: log_lines.len(),
        final_train_metric,
        log_lines,
    })
}

/// Rebuild the model a checkpoint was trained with and load its weights.
pub fn load_model(
    cfg: &RunConfig,
    vocab: &Vocab,
    labels: &LabelVocab,
    checkpoint: &Path,
) -> Result<(Model, ParamStore)> {
    let n_outputs = match cfg.task_kind {
        TaskKind::Span => 0,
        _ => Model::checkpoint_outputs(checkpoint)?,
    };
    let mut store = ParamStore::new();
    let mut rng = Rng::new(cfg.seed);
    let model = Model::create(cfg, vocab, labels, n_outputs, &mut store, &mut rng)?;
    store.load(checkpoint)?;
    Ok((model, store))
}

/// Evaluate a checkpoint on a dataset.
pub fn eval_checkpoint(
    cfg: &RunConfig,
    examples: &[TaskExample],
    vocab: &Vocab,
    labels: &LabelVocab,
    checkpoint: &Path,
    tau: NullThreshold,
) -> Result<EvalReport> {
    let (model, store) = load_model(cfg, vocab, labels, checkpoint)?;
    let inputs = assemble_all(examples, cfg, vocab, labels)?;
    evaluate(&model, &store, examples, &inputs, tau)
}

/// Decode every dev example once, then pick the tau that maximizes mean
/// span F1 over the sweep grid.
pub fn tune_threshold_on(
    cfg: &RunConfig,
    dev_set: &[TaskExample],
    vocab: &Vocab,
    labels: &LabelVocab,
    checkpoint: &Path,
) -> Result<(NullThreshold, f64)> {
    if cfg.task_kind != TaskKind::Span {
        return Err(Error::Config("threshold tuning needs a span task".into()));
    }
    let (model, store) = load_model(cfg, vocab, labels, checkpoint)?;
    let inputs = assemble_all(dev_set, cfg, vocab, labels)?;
    let mut cases = Vec::with_capacity(dev_set.len());
    for (ex, input) in dev_set.iter().zip(&inputs) {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let p = model.predict(
            &mut tape,
            &bound,
            input,
            NullThreshold { tau: heads::TAU_MIN },
            DEFAULT_MAX_SPAN_LEN,
        )?;
        let Prediction::Span(sp) = p else {
            return Err(Error::Config("span model produced a non-span prediction".into()));
        };
        let golds = ex.answer_texts();
        let text = Model::span_text(input, &sp).expect("forced non-null");
        let (_, f1_ans) = metrics::squad_em_f1(Some(&text), &golds);
        cases.push(ThresholdCase {
            diff: sp.score - sp.null_score,
            f1_if_answered: f1_ans,
            f1_if_null: if golds.is_empty() { 1.0 } else { 0.0 },
        });
    }
    let tau = heads::tune_threshold(&cases)?;
    Ok((tau, heads::threshold_f1(&cases, tau.tau)))
}

/// Train and evaluate once per m, same seed and budget throughout.
pub fn sweep_m(
    cfg: &RunConfig,
    train_set: &[TaskExample],
    dev_set: &[TaskExample],
    vocab: &Vocab,
    labels: &LabelVocab,
    run_dir: &Path,
    m_values: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::new();
    for &m in m_values {
        let mut c = cfg.clone();
        c.m = m;
        let report = train(&c, train_set, dev_set, vocab, labels, &run_dir.join(format!("m{m}")))?;
        rows.push((m, report.best_dev_metric));
    }
    Ok(rows)
}

fn noisy_copy(
    examples: &[TaskExample],
    p: f64,
    labels: &LabelVocab,
    rng: &mut Rng,
) -> Result<Vec<TaskExample>> {
    examples
        .iter()
        .map(|ex| {
            let mut out = ex.clone();
            out.srl_a = inject_noise(&ex.srl_a, p, labels, rng)?;
            if let Some(srl_b) = &ex.srl_b {
                out.srl_b = Some(inject_noise(srl_b, p, labels, rng)?);
            }
            Ok(out)
        })
        .collect()
}

/// Corrupt the annotations of both splits at each rate, retrain, report.
/// p = 0 reuses the pipeline and must match a plain run exactly.
pub fn sweep_noise(
    cfg: &RunConfig,
    train_set: &[TaskExample],
    dev_set: &[TaskExample],
    vocab: &Vocab,
    labels: &LabelVocab,
    run_dir: &Path,
    p_values: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for (i, &p) in p_values.iter().enumerate() {
        let mut noise_rng = Rng::new(cfg.seed).derive(1000 + i as u64);
        let noisy_train = noisy_copy(train_set, p, labels, &mut noise_rng)?;
        let noisy_dev = noisy_copy(dev_set, p, labels, &mut noise_rng)?;
        let dir = run_dir.join(format!("noise{i}"));
        let report = train(cfg, &noisy_train, &noisy_dev, vocab, labels, &dir)?;
        rows.push((p, report.best_dev_metric));
    }
    Ok(rows)
}

/// The three-way comparison: text-only baseline, subword-level label
/// concatenation, and full word-level fusion, one seed and budget.
pub fn ablate(
    cfg: &RunConfig,
    train_set: &[TaskExample],
    dev_set: &[TaskExample],
    vocab: &Vocab,
    labels: &LabelVocab,
    run_dir: &Path,
) -> Result<Vec<(FusionMode, f64)>> {
    let modes = [
        FusionMode::Baseline,
        FusionMode::SubwordAblation,
        FusionMode::Sembert,
    ];
    let mut rows = Vec::new();
    for mode in modes {
        let mut c = cfg.clone();
        c.fusion_mode = mode;
        let dir = run_dir.join(mode.name());
        let report = train(&c, train_set, dev_set, vocab, labels, &dir)?;
        rows.push((mode, report.best_dev_metric));
    }
    Ok(rows)
}
