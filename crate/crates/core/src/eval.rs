//! Train-from-scratch evaluation of (synthetic) training sets.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::dataio::{LabeledSignalSet, SyntheticSet};
use crate::distill::{mdm_distill, DistillConfig};
use crate::error::{Error, Result};
use crate::models::{ArchSpec, Classifier, IN_CHANNELS};
use crate::rng::{derive_seed, stream_rng, Stream};

const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub arch: String,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub n_runs: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            arch: "alexnet1d".into(),
            lr: 0.001,
            momentum: 0.9,
            batch_size: 128,
            epochs: 300,
            n_runs: 5,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.n_runs == 0 || self.batch_size == 0 {
            return Err(Error::validation("n_runs and batch_size must be positive"));
        }
        ArchSpec::preset(&self.arch).map(|_| ())
    }
}

/// Mean and population standard deviation of test accuracy (percent) over
/// independent training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub per_run: Vec<f64>,
    pub config: EvalConfig,
}

impl EvalResult {
    pub fn from_runs(per_run: Vec<f64>, config: EvalConfig) -> Self {
        let n = per_run.len().max(1) as f64;
        let mean = per_run.iter().sum::<f64>() / n;
        let var = per_run.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        EvalResult {
            mean_accuracy: mean,
            std_accuracy: var.sqrt(),
            per_run,
            config,
        }
    }
}

/// Anything that assigns class indices to records.
pub trait Predictor {
    fn predict(&self, set: &LabeledSignalSet) -> Result<Vec<usize>>;
}

/// Stack records into `[B, 2, N]`.
pub fn records_to_tensor(set: &LabeledSignalSet, indices: &[usize]) -> Tensor<f32> {
    let n = set.n_samples();
    let mut data = Vec::with_capacity(indices.len() * IN_CHANNELS * n);
    for &idx in indices {
        let rec = &set.records()[idx];
        data.extend_from_slice(&rec.i);
        data.extend_from_slice(&rec.q);
    }
    Tensor::new(vec![indices.len(), IN_CHANNELS, n], data).expect("record layout")
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

impl Predictor for Classifier<f32> {
    fn predict(&self, set: &LabeledSignalSet) -> Result<Vec<usize>> {
        if set.n_samples() != self.n_samples() {
            return Err(Error::validation(format!(
                "classifier expects records of length {}, got {}",
                self.n_samples(),
                set.n_samples()
            )));
        }
        let all: Vec<usize> = (0..set.len()).collect();
        let mut out = Vec::with_capacity(set.len());
        for chunk in all.chunks(PREDICT_CHUNK) {
            let logits = self.logits(records_to_tensor(set, chunk))?;
            out.extend(logits.data().chunks(self.num_classes()).map(argmax));
        }
        Ok(out)
    }
}

/// Percentage of records whose prediction equals their label.
pub fn accuracy(model: &impl Predictor, test: &LabeledSignalSet) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::validation("accuracy on an empty test set"));
    }
    let predictions = model.predict(test)?;
    let correct = predictions
        .iter()
        .zip(test.records())
        .filter(|(&p, r)| p == r.label)
        .count();
    Ok(100.0 * correct as f64 / test.len() as f64)
}

/// Train a fresh classifier with SGD + momentum on mean cross-entropy.
///
/// Momentum follows the usual `v ← μ·v + g; θ ← θ − lr·v` form. The function
/// only sees the training set.
pub fn train_classifier(train: &LabeledSignalSet, cfg: &EvalConfig, run_seed: u64) -> Result<Classifier<f32>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::validation("cannot train on an empty set"));
    }
    let arch = ArchSpec::preset(&cfg.arch)?;
    let mut clf = Classifier::sample(&arch, train.n_samples(), train.num_classes(), derive_seed(run_seed, Stream::Network, 0))?;
    let mut velocity: Vec<Vec<f32>> = clf.params().iter().map(|p| vec![0.0; p.numel()]).collect();
    let labels: Vec<usize> = train.records().iter().map(|r| r.label).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = stream_rng(run_seed, Stream::Shuffle, 0);
    let (lr, mu) = (cfg.lr as f32, cfg.momentum as f32);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let params = clf.bind(&mut g, true);
            let x = g.constant(records_to_tensor(train, batch));
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let step = clf
                .forward(&mut g, &params, x)
                .and_then(|logits| g.cross_entropy(logits, &batch_labels));
            let loss = match step {
                Ok(loss) => loss,
                Err(Error::NonFinite { .. }) => {
                    return Err(Error::Diverged {
                        what: "classifier training",
                        iteration: epoch,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            g.backward(loss)?;
            for ((p, v), &id) in clf.params_mut().into_iter().zip(&mut velocity).zip(&params) {
                let grad = g.grad(id).expect("trainable leaf");
                for ((w, vel), &gr) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(grad) {
                    *vel = mu * *vel + gr;
                    *w -= lr * *vel;
                }
            }
        }
    }
    if clf.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Diverged {
            what: "classifier training",
            iteration: cfg.epochs,
            loss: f64::NAN,
        });
    }
    Ok(clf)
}

fn check_compatible(train: &LabeledSignalSet, test: &LabeledSignalSet) -> Result<()> {
    if train.class_names() != test.class_names() {
        return Err(Error::validation(format!(
            "class mismatch between training set {:?} and test set {:?}",
            train.class_names(),
            test.class_names()
        )));
    }
    if train.n_samples() != test.n_samples() {
        return Err(Error::validation(format!(
            "record length mismatch: {} vs {}",
            train.n_samples(),
            test.n_samples()
        )));
    }
    if test.is_empty() {
        return Err(Error::validation("test set is empty"));
    }
    Ok(())
}

/// Seed for evaluation run `r`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    derive_seed(seed, Stream::EvalRun, run as u64)
}

/// `n_runs` independent trainings on `train`, each scored on `test`.
pub fn evaluate(train: &LabeledSignalSet, test: &LabeledSignalSet, cfg: &EvalConfig) -> Result<EvalResult> {
    cfg.validate()?;
    check_compatible(train, test)?;
    let per_run = (0..cfg.n_runs)
        .into_par_iter()
        .map(|r| {
            let clf = train_classifier(train, cfg, run_seed(cfg.seed, r))?;
            accuracy(&clf, test)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EvalResult::from_runs(per_run, cfg.clone()))
}

/// Cross-architecture results: `cells[c][t]` evaluates the set distilled with
/// `distill_archs[c]` on `eval_archs[t]`.
#[derive(Debug, Clone)]
pub struct CrossArchMatrix {
    pub distill_archs: Vec<String>,
    pub eval_archs: Vec<String>,
    pub synthetic: Vec<SyntheticSet>,
    pub cells: Vec<Vec<EvalResult>>,
}

pub fn cross_arch_matrix(
    train: &LabeledSignalSet,
    test: &LabeledSignalSet,
    distill_archs: &[String],
    eval_archs: &[String],
    dcfg: &DistillConfig,
    ecfg: &EvalConfig,
) -> Result<CrossArchMatrix> {
    for name in distill_archs.iter().chain(eval_archs) {
        ArchSpec::preset(name)?;
    }
    check_compatible(train, test)?;
    let mut synthetic = Vec::with_capacity(distill_archs.len());
    let mut cells = Vec::with_capacity(distill_archs.len());
    for c in distill_archs {
        let cfg = DistillConfig {
            arch: c.clone(),
            ..dcfg.clone()
        };
        let (synth, _) = mdm_distill(train, &cfg, |_| {})?;
        let row = eval_archs
            .iter()
            .map(|t| {
                let cfg = EvalConfig {
                    arch: t.clone(),
                    ..ecfg.clone()
                };
                evaluate(&synth, test, &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        synthetic.push(synth);
        cells.push(row);
    }
    Ok(CrossArchMatrix {
        distill_archs: distill_archs.to_vec(),
        eval_archs: eval_archs.to_vec(),
        synthetic,
        cells,
    })
}
