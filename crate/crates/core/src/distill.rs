//! Multi-domain distribution matching.
//!
//! Each iteration samples a fresh randomly initialized embedding network,
//! draws a batch of real records per class, and measures the squared distance
//! between real and synthetic mean embeddings, once on the raw I/Q samples
//! (time domain) and once on their per-channel DFT magnitudes (frequency
//! domain). The synthetic samples then take a plain gradient step on
//! `L = L_td + alpha * L_fd`.
//!
//! Matching is class-conditional: the loss is the sum over classes of the
//! per-class mean-embedding distance.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::dataio::{take_per_class, LabeledSignalSet, SignalRecord, SyntheticSet};
use crate::error::{Error, Result};
use crate::models::{sample_network, ArchSpec, EmbeddingNet, IN_CHANNELS};
use crate::real::Real;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::spectral;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    /// Number of optimization steps `K`.
    pub iterations: usize,
    /// Step size on the synthetic samples.
    pub eta: f64,
    /// Weight of the frequency-domain loss.
    pub alpha: f64,
    /// Synthetic signals per class.
    pub spc: usize,
    /// Real records drawn per class and iteration (capped at the class size).
    pub real_batch_per_class: usize,
    pub arch: String,
    pub seed: u64,
    /// Divide DFT magnitudes by `N` before embedding.
    pub freq_scale: bool,
    pub report_every: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            iterations: 20_000,
            eta: 1e-4,
            alpha: 1.0,
            spc: 10,
            real_batch_per_class: 256,
            arch: "alexnet1d".into(),
            seed: 0,
            freq_scale: false,
            report_every: 100,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::validation("iterations must be at least 1"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::validation(format!("eta must be a finite non-negative step, got {}", self.eta)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if self.spc == 0 || self.real_batch_per_class == 0 || self.report_every == 0 {
            return Err(Error::validation("spc, real_batch_per_class and report_every must be positive"));
        }
        ArchSpec::preset(&self.arch).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: usize,
    pub l_td: f64,
    pub l_fd: f64,
    pub l_total: f64,
}

impl LossReport {
    pub fn csv_header() -> &'static str {
        "iter,l_td,l_fd,l_total"
    }

    pub fn csv_line(&self) -> String {
        format!("{},{:e},{:e},{:e}", self.iteration, self.l_td, self.l_fd, self.l_total)
    }
}

pub fn combined_loss(l_td: f64, l_fd: f64, alpha: f64) -> f64 {
    l_td + alpha * l_fd
}

/// `Σ_c ‖mean ψ(real_c) − mean ψ(synth_c)‖²` over inputs already in the
/// domain being matched.
pub fn mean_embedding_distance<F: Real>(
    g: &mut Graph<F>,
    net: &EmbeddingNet<F>,
    params: &[NodeId],
    real: &[NodeId],
    synth: &[NodeId],
) -> Result<NodeId> {
    if real.is_empty() || real.len() != synth.len() {
        return Err(Error::validation(format!(
            "need one real and one synthetic batch per class, got {} and {}",
            real.len(),
            synth.len()
        )));
    }
    let mut total: Option<NodeId> = None;
    for (class, (&r, &s)) in real.iter().zip(synth).enumerate() {
        if g.shape(r).first() == Some(&0) || g.shape(s).first() == Some(&0) {
            return Err(Error::validation(format!("class {class} has an empty batch")));
        }
        let er = net.forward(g, params, r)?;
        let mr = g.mean_over_batch(er)?;
        let es = net.forward(g, params, s)?;
        let ms = g.mean_over_batch(es)?;
        let diff = g.sub(mr, ms)?;
        let term = g.sum_of_squares(diff)?;
        total = Some(match total {
            None => term,
            Some(t) => g.add(t, term)?,
        });
    }
    Ok(total.expect("at least one class"))
}

/// Time-domain matching loss.
pub fn loss_time_domain<F: Real>(
    g: &mut Graph<F>,
    net: &EmbeddingNet<F>,
    params: &[NodeId],
    real: &[NodeId],
    synth: &[NodeId],
) -> Result<NodeId> {
    mean_embedding_distance(g, net, params, real, synth)
}

/// DFT magnitude of both channels, optionally divided by `N`.
pub fn frequency_view<F: Real>(g: &mut Graph<F>, x: NodeId, freq_scale: bool) -> Result<NodeId> {
    let spec = g.dft_magnitude(x)?;
    if freq_scale {
        let n = *g.shape(x).last().expect("dft_magnitude checked rank");
        g.scale(spec, 1.0 / n as f64)
    } else {
        Ok(spec)
    }
}

/// Frequency-domain matching loss: real and synthetic time-domain batches are
/// transformed inside the graph, so gradients reach the synthetic samples
/// through the DFT magnitude.
pub fn loss_freq_domain<F: Real>(
    g: &mut Graph<F>,
    net: &EmbeddingNet<F>,
    params: &[NodeId],
    real: &[NodeId],
    synth: &[NodeId],
    freq_scale: bool,
) -> Result<NodeId> {
    let real_f = real
        .iter()
        .map(|&r| frequency_view(g, r, freq_scale))
        .collect::<Result<Vec<_>>>()?;
    let synth_f = synth
        .iter()
        .map(|&s| frequency_view(g, s, freq_scale))
        .collect::<Result<Vec<_>>>()?;
    mean_embedding_distance(g, net, params, &real_f, &synth_f)
}

/// A real batch for one class in both domains.
#[derive(Debug, Clone)]
pub struct ClassBatch<F: Real> {
    pub time: Tensor<F>,
    /// DFT magnitudes of `time` (scaled when `freq_scale` is set).
    pub freq: Tensor<F>,
}

/// Loss values and, when requested, `∂L/∂S` per class.
#[derive(Debug, Clone)]
pub struct ObjectiveEval<F: Real> {
    pub l_td: f64,
    pub l_fd: f64,
    pub l_total: f64,
    pub grads: Vec<Tensor<F>>,
}

fn synth_leaves<F: Real>(g: &mut Graph<F>, synth: &[Tensor<F>], requires_grad: bool) -> Vec<NodeId> {
    synth.iter().map(|s| g.leaf(s.clone(), requires_grad)).collect()
}

fn collect_grads<F: Real>(g: &Graph<F>, leaves: &[NodeId]) -> Vec<Tensor<F>> {
    leaves
        .iter()
        .map(|&id| {
            let shape = g.shape(id).to_vec();
            match g.grad(id) {
                Some(grad) => Tensor::new(shape, grad.to_vec()).expect("gradient matches leaf"),
                None => Tensor::zeros(shape),
            }
        })
        .collect()
}

/// Combined objective `L_td + alpha * L_fd` with one shared network sample.
pub fn multi_domain_objective<F: Real>(
    net: &EmbeddingNet<F>,
    real: &[ClassBatch<F>],
    synth: &[Tensor<F>],
    alpha: f64,
    freq_scale: bool,
    with_grad: bool,
) -> Result<ObjectiveEval<F>> {
    let mut g = Graph::new();
    let params = net.bind(&mut g, false);
    let s = synth_leaves(&mut g, synth, with_grad);
    let rt: Vec<NodeId> = real.iter().map(|b| g.constant(b.time.clone())).collect();
    let l_td = loss_time_domain(&mut g, net, &params, &rt, &s)?;
    let rf: Vec<NodeId> = real.iter().map(|b| g.constant(b.freq.clone())).collect();
    let sf = s
        .iter()
        .map(|&x| frequency_view(&mut g, x, freq_scale))
        .collect::<Result<Vec<_>>>()?;
    let l_fd = mean_embedding_distance(&mut g, net, &params, &rf, &sf)?;
    let weighted = g.scale(l_fd, alpha)?;
    let total = g.add(l_td, weighted)?;
    if with_grad {
        g.backward(total)?;
    }
    let (td, fd) = (g.scalar(l_td).as_f64(), g.scalar(l_fd).as_f64());
    Ok(ObjectiveEval {
        l_td: td,
        l_fd: fd,
        l_total: combined_loss(td, fd, alpha),
        grads: collect_grads(&g, &s),
    })
}

/// Time-domain-only objective (plain distribution matching). `l_fd` is
/// evaluated after the backward pass, outside the differentiated loss, only
/// when `report_fd` is set.
pub fn time_domain_objective<F: Real>(
    net: &EmbeddingNet<F>,
    real: &[ClassBatch<F>],
    synth: &[Tensor<F>],
    freq_scale: bool,
    report_fd: bool,
) -> Result<ObjectiveEval<F>> {
    let mut g = Graph::new();
    let params = net.bind(&mut g, false);
    let s = synth_leaves(&mut g, synth, true);
    let rt: Vec<NodeId> = real.iter().map(|b| g.constant(b.time.clone())).collect();
    let l_td = loss_time_domain(&mut g, net, &params, &rt, &s)?;
    g.backward(l_td)?;
    let grads = collect_grads(&g, &s);
    let td = g.scalar(l_td).as_f64();
    let fd = if report_fd {
        let plain = synth_leaves(&mut g, synth, false);
        let rf: Vec<NodeId> = real.iter().map(|b| g.constant(b.freq.clone())).collect();
        let sf = plain
            .iter()
            .map(|&x| frequency_view(&mut g, x, freq_scale))
            .collect::<Result<Vec<_>>>()?;
        let l_fd = mean_embedding_distance(&mut g, net, &params, &rf, &sf)?;
        g.scalar(l_fd).as_f64()
    } else {
        0.0
    };
    Ok(ObjectiveEval {
        l_td: td,
        l_fd: fd,
        l_total: td,
        grads,
    })
}

/// Real records of one class, flattened `[count, 2, N]` in both domains.
struct ClassPool {
    count: usize,
    time: Vec<f32>,
    freq: Vec<f32>,
}

fn record_values(rec: &SignalRecord) -> impl Iterator<Item = f32> + '_ {
    rec.i.iter().chain(&rec.q).copied()
}

fn build_pools(train: &LabeledSignalSet, freq_scale: bool) -> Result<Vec<ClassPool>> {
    let n = train.n_samples();
    let scale = if freq_scale { 1.0 / n as f64 } else { 1.0 };
    let mut pools: Vec<ClassPool> = (0..train.num_classes())
        .map(|_| ClassPool {
            count: 0,
            time: Vec::new(),
            freq: Vec::new(),
        })
        .collect();
    for rec in train.records() {
        let pool = &mut pools[rec.label];
        pool.count += 1;
        pool.time.extend(record_values(rec));
        for channel in [&rec.i, &rec.q] {
            let mags = spectral::dft_magnitude(channel)?;
            pool.freq.extend(mags.iter().map(|&m| (m as f64 * scale) as f32));
        }
    }
    Ok(pools)
}

fn sample_real_batches(pools: &[ClassPool], n: usize, batch: usize, seed: u64, iteration: usize) -> Vec<ClassBatch<f32>> {
    let row = IN_CHANNELS * n;
    pools
        .iter()
        .enumerate()
        .map(|(class, pool)| {
            let mut rng = stream_rng(derive_seed(seed, Stream::RealBatch, iteration as u64), Stream::RealBatch, class as u64);
            let take = batch.min(pool.count);
            let picks = index::sample(&mut rng, pool.count, take);
            let mut time = Vec::with_capacity(take * row);
            let mut freq = Vec::with_capacity(take * row);
            for idx in picks {
                time.extend_from_slice(&pool.time[idx * row..(idx + 1) * row]);
                freq.extend_from_slice(&pool.freq[idx * row..(idx + 1) * row]);
            }
            let shape = vec![take, IN_CHANNELS, n];
            ClassBatch {
                time: Tensor::new(shape.clone(), time).expect("batch layout"),
                freq: Tensor::new(shape, freq).expect("batch layout"),
            }
        })
        .collect()
}

fn synth_to_tensors(init: &SyntheticSet) -> Vec<Tensor<f32>> {
    let n = init.n_samples();
    let mut per_class: Vec<Vec<f32>> = vec![Vec::new(); init.num_classes()];
    for rec in init.records() {
        per_class[rec.label].extend(record_values(rec));
    }
    per_class
        .into_iter()
        .map(|data| Tensor::new(vec![init.spc(), IN_CHANNELS, n], data).expect("spc records per class"))
        .collect()
}

fn tensors_to_synth(template: &SyntheticSet, synth: &[Tensor<f32>]) -> Result<SyntheticSet> {
    let n = template.n_samples();
    let mut records = Vec::with_capacity(template.len());
    for (label, t) in synth.iter().enumerate() {
        for row in t.data().chunks(IN_CHANNELS * n) {
            records.push(SignalRecord::new(row[..n].to_vec(), row[n..].to_vec(), label));
        }
    }
    SyntheticSet::new(template.with_records(records)?, template.spc())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Objective {
    TimeOnly,
    MultiDomain,
}

/// Network seed for iteration `k`.
pub fn network_seed(seed: u64, iteration: usize) -> u64 {
    derive_seed(seed, Stream::Network, iteration as u64)
}

fn run(
    train: &LabeledSignalSet,
    cfg: &DistillConfig,
    objective: Objective,
    mut progress: impl FnMut(&LossReport),
) -> Result<(SyntheticSet, Vec<LossReport>)> {
    cfg.validate()?;
    let arch = ArchSpec::preset(&cfg.arch)?;
    arch.output_shape(train.n_samples())?;
    let init = take_per_class(train, cfg.spc, cfg.seed)?;
    let pools = build_pools(train, cfg.freq_scale)?;
    let mut synth = synth_to_tensors(&init);
    let eta = cfg.eta as f32;
    let alpha = match objective {
        Objective::TimeOnly => 0.0,
        Objective::MultiDomain => cfg.alpha,
    };
    let mut reports = Vec::new();

    for k in 0..cfg.iterations {
        let report_now = k % cfg.report_every == 0;
        let net: EmbeddingNet<f32> = sample_network(&arch, network_seed(cfg.seed, k));
        let real = sample_real_batches(&pools, train.n_samples(), cfg.real_batch_per_class, cfg.seed, k);
        let eval = match objective {
            Objective::TimeOnly => time_domain_objective(&net, &real, &synth, cfg.freq_scale, report_now),
            Objective::MultiDomain => multi_domain_objective(&net, &real, &synth, alpha, cfg.freq_scale, true),
        }
        .map_err(|e| match e {
            Error::NonFinite { .. } => Error::Diverged {
                what: "distillation",
                iteration: k,
                loss: f64::NAN,
            },
            other => other,
        })?;
        if !eval.l_total.is_finite() {
            return Err(Error::Diverged {
                what: "distillation",
                iteration: k,
                loss: eval.l_total,
            });
        }
        if report_now {
            let report = LossReport {
                iteration: k,
                l_td: eval.l_td,
                l_fd: eval.l_fd,
                l_total: combined_loss(eval.l_td, eval.l_fd, alpha),
            };
            progress(&report);
            reports.push(report);
        }
        for (s, grad) in synth.iter_mut().zip(&eval.grads) {
            for (v, &gv) in s.data_mut().iter_mut().zip(grad.data()) {
                *v -= eta * gv;
            }
        }
    }
    if synth.iter().any(|s| !s.is_finite()) {
        return Err(Error::Diverged {
            what: "distillation",
            iteration: cfg.iterations,
            loss: f64::NAN,
        });
    }
    Ok((tensors_to_synth(&init, &synth)?, reports))
}

/// Multi-domain distillation: time and frequency losses weighted by
/// `cfg.alpha`.
pub fn mdm_distill(
    train: &LabeledSignalSet,
    cfg: &DistillConfig,
    progress: impl FnMut(&LossReport),
) -> Result<(SyntheticSet, Vec<LossReport>)> {
    run(train, cfg, Objective::MultiDomain, progress)
}

/// Time-domain-only distribution matching. Shares every random draw with
/// [`mdm_distill`] for the same config; `cfg.alpha` is ignored.
pub fn dm_distill(
    train: &LabeledSignalSet,
    cfg: &DistillConfig,
    progress: impl FnMut(&LossReport),
) -> Result<(SyntheticSet, Vec<LossReport>)> {
    run(train, cfg, Objective::TimeOnly, progress)
}
