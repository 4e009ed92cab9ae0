//! Python surface for the semfuse core: tokenizer, role-label decoding,
//! span decoding with null thresholding, answer metrics, and whole
//! train/eval runs driven from paths. Wrappers stay thin; anything with
//! behavior lives in the core crate.

use std::path::{Path, PathBuf};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use semfuse::config::RunConfig;
use semfuse::data::load_dataset;
use semfuse::heads::{self, NullThreshold, ThresholdCase};
use semfuse::metrics;
use semfuse::srl::{self, LabelVocab};
use semfuse::synth;
use semfuse::tensor::Tensor;
use semfuse::tokenizer;
use semfuse::train;

fn pyerr(e: semfuse::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen)]
struct Vocab {
    inner: tokenizer::Vocab,
}

#[pymethods]
impl Vocab {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Vocab> {
        Ok(Vocab {
            inner: tokenizer::Vocab::load(&path).map_err(pyerr)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(pyerr)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn token(&self, id: usize) -> PyResult<String> {
        if id >= self.inner.len() {
            return Err(PyValueError::new_err(format!("token id {id} out of range")));
        }
        Ok(self.inner.token(id).to_string())
    }

    fn id_of(&self, token: &str) -> Option<usize> {
        self.inner.id_of(token)
    }
}

#[pyclass(frozen)]
struct Labels {
    inner: LabelVocab,
}

#[pymethods]
impl Labels {
    #[new]
    fn new(labels: Vec<String>) -> PyResult<Labels> {
        Ok(Labels {
            inner: LabelVocab::new(labels).map_err(pyerr)?,
        })
    }

    #[staticmethod]
    fn default_roles() -> Labels {
        Labels {
            inner: LabelVocab::default_roles(),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn label(&self, id: usize) -> PyResult<String> {
        if id >= self.inner.len() {
            return Err(PyValueError::new_err(format!("label id {id} out of range")));
        }
        Ok(self.inner.label(id).to_string())
    }

    fn id_of(&self, label: &str) -> Option<usize> {
        self.inner.id_of(label)
    }
}

#[pyclass(frozen, get_all)]
struct SpanResult {
    start: usize,
    end: usize,
    score: f64,
    null_score: f64,
    is_null: bool,
}

#[pymethods]
impl SpanResult {
    fn __repr__(&self) -> String {
        format!(
            "SpanResult(start={}, end={}, score={:.6}, null_score={:.6}, is_null={})",
            self.start, self.end, self.score, self.null_score, self.is_null
        )
    }
}

#[pyclass(frozen, get_all)]
struct TrainSummary {
    best_dev_metric: f64,
    best_epoch: usize,
    epochs_run: usize,
    final_train_metric: f64,
    run_dir: String,
}

#[pymethods]
impl TrainSummary {
    fn __repr__(&self) -> String {
        format!(
            "TrainSummary(best_dev_metric={:.6}, best_epoch={}, epochs_run={}, final_train_metric={:.6})",
            self.best_dev_metric, self.best_epoch, self.epochs_run, self.final_train_metric
        )
    }
}

#[pyclass(frozen, get_all)]
struct EvalSummary {
    metric: f64,
    em: Option<f64>,
    n_examples: usize,
}

#[pymethods]
impl EvalSummary {
    fn __repr__(&self) -> String {
        format!(
            "EvalSummary(metric={:.6}, em={:?}, n_examples={})",
            self.metric, self.em, self.n_examples
        )
    }
}

/// Wordpiece-split each whitespace word; returns (word, pieces) pairs.
#[pyfunction]
fn tokenize(text: &str, vocab: &Vocab) -> PyResult<Vec<(String, Vec<String>)>> {
    let sent = tokenizer::tokenize(text, &vocab.inner).map_err(pyerr)?;
    let out = sent
        .words
        .iter()
        .zip(&sent.spans)
        .map(|(w, &(s, l))| {
            let pieces = sent.subwords[s..s + l]
                .iter()
                .map(|&id| vocab.inner.token(id).to_string())
                .collect();
            (w.clone(), pieces)
        })
        .collect();
    Ok(out)
}

/// Best label sequence under the BIO transition rules; `scores` is one row
/// per word, one column per label.
#[pyfunction]
fn viterbi(scores: Vec<Vec<f64>>, labels: &Labels) -> PyResult<Vec<String>> {
    let n = scores.len();
    let k = labels.inner.len();
    let mut flat = Vec::with_capacity(n * k);
    for row in &scores {
        if row.len() != k {
            return Err(PyValueError::new_err(format!(
                "score row has {} entries, vocabulary has {k} labels",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    let path = srl::viterbi_decode(&Tensor::matrix(n, k, flat), &labels.inner).map_err(pyerr)?;
    Ok(path.iter().map(|&i| labels.inner.label(i).to_string()).collect())
}

/// Best span under the mask and length cap, or null when the best span
/// does not beat `null_score + tau`. Position 0 is the null anchor.
#[pyfunction]
#[pyo3(signature = (start_logits, end_logits, mask, tau=0.0, max_span_len=30))]
fn decode_span(
    start_logits: Vec<f64>,
    end_logits: Vec<f64>,
    mask: Vec<bool>,
    tau: f64,
    max_span_len: usize,
) -> PyResult<SpanResult> {
    let p = heads::decode_span(
        &start_logits,
        &end_logits,
        &mask,
        NullThreshold { tau },
        max_span_len,
    )
    .map_err(pyerr)?;
    Ok(SpanResult {
        start: p.start,
        end: p.end,
        score: p.score,
        null_score: p.null_score,
        is_null: p.is_null,
    })
}

/// Pick the answer/abstain threshold maximizing mean F1 over dev cases.
/// Each case is (margin, f1_if_answered, f1_if_null); returns (tau, f1).
#[pyfunction]
fn tune_threshold(cases: Vec<(f64, f64, f64)>) -> PyResult<(f64, f64)> {
    let cases: Vec<ThresholdCase> = cases
        .iter()
        .map(|&(diff, a, n)| ThresholdCase {
            diff,
            f1_if_answered: a,
            f1_if_null: n,
        })
        .collect();
    let tau = heads::tune_threshold(&cases).map_err(pyerr)?;
    Ok((tau.tau, heads::threshold_f1(&cases, tau.tau)))
}

#[pyfunction]
fn normalize_answer(text: &str) -> String {
    metrics::normalize_answer(text)
}

/// (exact_match, token_f1) of a predicted answer against gold strings;
/// `None` means the model abstained, an empty gold list means unanswerable.
#[pyfunction]
#[pyo3(signature = (pred, golds))]
fn squad_em_f1(pred: Option<String>, golds: Vec<String>) -> (f64, f64) {
    metrics::squad_em_f1(pred.as_deref(), &golds)
}

#[pyfunction]
fn accuracy(preds: Vec<usize>, golds: Vec<usize>) -> PyResult<f64> {
    metrics::accuracy(&preds, &golds).map_err(pyerr)
}

#[pyfunction]
fn f1_binary(preds: Vec<usize>, golds: Vec<usize>) -> PyResult<f64> {
    metrics::f1_binary(&preds, &golds).map_err(pyerr)
}

#[pyfunction]
fn matthews(preds: Vec<usize>, golds: Vec<usize>) -> PyResult<f64> {
    metrics::matthews(&preds, &golds).map_err(pyerr)
}

#[pyfunction]
fn pearson(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<f64> {
    metrics::pearson(&xs, &ys).map_err(pyerr)
}

/// Write the bundled toy datasets and vocabulary into `dir`.
#[pyfunction]
fn write_fixtures(dir: PathBuf) -> PyResult<()> {
    synth::write_fixtures(&dir).map_err(pyerr)
}

fn config_from_json(config_json: Option<&str>) -> PyResult<RunConfig> {
    let cfg = match config_json {
        None => RunConfig::default(),
        Some(text) => serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("config: {e}")))?,
    };
    cfg.validate().map_err(pyerr)?;
    Ok(cfg)
}

fn load_examples(
    path: &Path,
    cfg: &RunConfig,
    labels: &LabelVocab,
) -> PyResult<Vec<semfuse::data::TaskExample>> {
    let loaded = load_dataset(path, cfg.task_kind, labels).map_err(pyerr)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded.examples)
}

/// Train from JSONL datasets; config is the run-config JSON (defaults when
/// omitted). Writes the checkpoint, log, and canonical config to `run_dir`.
#[pyfunction]
#[pyo3(signature = (train_path, dev_path, vocab_path, run_dir, config_json=None))]
fn train_run(
    py: Python<'_>,
    train_path: PathBuf,
    dev_path: PathBuf,
    vocab_path: PathBuf,
    run_dir: PathBuf,
    config_json: Option<&str>,
) -> PyResult<TrainSummary> {
    let cfg = config_from_json(config_json)?;
    let vocab = tokenizer::Vocab::load(&vocab_path).map_err(pyerr)?;
    let labels = LabelVocab::default_roles();
    let train_set = load_examples(&train_path, &cfg, &labels)?;
    let dev_set = load_examples(&dev_path, &cfg, &labels)?;
    let report = py
        .detach(|| train::train(&cfg, &train_set, &dev_set, &vocab, &labels, &run_dir))
        .map_err(pyerr)?;
    Ok(TrainSummary {
        best_dev_metric: report.best_dev_metric,
        best_epoch: report.best_epoch,
        epochs_run: report.epochs_run,
        final_train_metric: report.final_train_metric,
        run_dir: run_dir.display().to_string(),
    })
}

/// Score a finished run's checkpoint on a dataset. `tau` only matters for
/// span tasks; span runs also write predictions.jsonl next to the log.
#[pyfunction]
#[pyo3(signature = (dataset_path, vocab_path, run_dir, tau=0.0))]
fn eval_run(
    py: Python<'_>,
    dataset_path: PathBuf,
    vocab_path: PathBuf,
    run_dir: PathBuf,
    tau: f64,
) -> PyResult<EvalSummary> {
    let cfg = RunConfig::load(&run_dir.join(train::CONFIG_FILE)).map_err(pyerr)?;
    let vocab = tokenizer::Vocab::load(&vocab_path).map_err(pyerr)?;
    let labels = LabelVocab::default_roles();
    let examples = load_examples(&dataset_path, &cfg, &labels)?;
    let n = examples.len();
    let ckpt = run_dir.join(train::CHECKPOINT_FILE);
    let report = py
        .detach(|| {
            let report = train::eval_checkpoint(
                &cfg,
                &examples,
                &vocab,
                &labels,
                &ckpt,
                NullThreshold { tau },
            )?;
            if !report.rows.is_empty() {
                train::write_predictions(&run_dir.join(train::PREDICTIONS_FILE), &report.rows)?;
            }
            Ok::<_, semfuse::Error>(report)
        })
        .map_err(pyerr)?;
    Ok(EvalSummary {
        metric: report.metric,
        em: report.em,
        n_examples: n,
    })
}

/// Sweep the answer/abstain threshold of a trained span run against a dev
/// set; returns (tau, dev_f1) and writes threshold.json into the run dir.
#[pyfunction]
fn tune_run_threshold(
    py: Python<'_>,
    dev_path: PathBuf,
    vocab_path: PathBuf,
    run_dir: PathBuf,
) -> PyResult<(f64, f64)> {
    let cfg = RunConfig::load(&run_dir.join(train::CONFIG_FILE)).map_err(pyerr)?;
    let vocab = tokenizer::Vocab::load(&vocab_path).map_err(pyerr)?;
    let labels = LabelVocab::default_roles();
    let dev_set = load_examples(&dev_path, &cfg, &labels)?;
    let ckpt = run_dir.join(train::CHECKPOINT_FILE);
    let (tau, f1) = py
        .detach(|| {
            let out = train::tune_threshold_on(&cfg, &dev_set, &vocab, &labels, &ckpt)?;
            let text = serde_json::to_string(&out.0)?;
            std::fs::write(run_dir.join(train::THRESHOLD_FILE), text + "\n")?;
            Ok::<_, semfuse::Error>(out)
        })
        .map_err(pyerr)?;
    Ok((tau.tau, f1))
}

#[pymodule]
fn semfuse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Vocab>()?;
    m.add_class::<Labels>()?;
    m.add_class::<SpanResult>()?;
    m.add_class::<TrainSummary>()?;
    m.add_class::<EvalSummary>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(viterbi, m)?)?;
    m.add_function(wrap_pyfunction!(decode_span, m)?)?;
    m.add_function(wrap_pyfunction!(tune_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_answer, m)?)?;
    m.add_function(wrap_pyfunction!(squad_em_f1, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(f1_binary, m)?)?;
    m.add_function(wrap_pyfunction!(matthews, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(write_fixtures, m)?)?;
    m.add_function(wrap_pyfunction!(train_run, m)?)?;
    m.add_function(wrap_pyfunction!(eval_run, m)?)?;
    m.add_function(wrap_pyfunction!(tune_run_threshold, m)?)?;
    Ok(())
}
