//! Measurements shared by the regular suites and the acceptance runner. Each
//! returns the worst observed error so callers decide how to report it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigdistill_core::distill::{loss_freq_domain, loss_time_domain, multi_domain_objective, ClassBatch};
use sigdistill_core::{dft_magnitude, sample_network, to_frequency, ArchSpec, EmbeddingNet, Graph, Layer, SignalRecord, Tensor};

use super::oracle;

/// Records of one class, each `[i, q]`.
pub type Batch = Vec<Vec<Vec<f64>>>;

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn random_batch(rng: &mut ChaCha8Rng, b: usize, n: usize) -> Batch {
    (0..b)
        .map(|_| (0..2).map(|_| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).collect())
        .collect()
}

pub fn to_tensor(batch: &Batch) -> Tensor<f64> {
    let n = batch[0][0].len();
    let data = batch.iter().flat_map(|r| r.iter().flatten().copied()).collect();
    Tensor::new(vec![batch.len(), 2, n], data).unwrap()
}

/// `(l_td, l_fd)` through the graph, with the synthetic batches as leaves.
pub fn graph_losses(net: &EmbeddingNet<f64>, real: &[Batch], synth: &[Batch]) -> (f64, f64) {
    let mut g = Graph::<f64>::new();
    let params = net.bind(&mut g, false);
    let r: Vec<_> = real.iter().map(|b| g.constant(to_tensor(b))).collect();
    let s: Vec<_> = synth.iter().map(|b| g.leaf(to_tensor(b), true)).collect();
    let td = loss_time_domain(&mut g, net, &params, &r, &s).unwrap();
    let fd = loss_freq_domain(&mut g, net, &params, &r, &s, false).unwrap();
    (g.scalar(td), g.scalar(fd))
}

pub fn identity_arch() -> ArchSpec {
    ArchSpec::new("identity", vec![]).unwrap()
}

pub fn small_residual_arch() -> ArchSpec {
    ArchSpec::new(
        "tiny-res",
        vec![
            Layer::Conv {
                out_channels: 3,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            Layer::Relu,
            Layer::Residual { kernel: 3 },
            Layer::MaxPool { width: 2, stride: 2 },
        ],
    )
    .unwrap()
}

/// Worst relative disagreement of the graph losses with the straight-line
/// oracle over `instances` random tiny problems.
pub fn loss_oracle_worst(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let archs = [ArchSpec::preset("cnn2").unwrap(), small_residual_arch(), identity_arch()];
    let mut worst = 0.0f64;
    for instance in 0..instances {
        let arch = &archs[instance % archs.len()];
        let n = [8, 12, 16][rng.random_range(0..3)];
        let classes = rng.random_range(1..=3);
        let mut batches = |max_b: usize| -> Vec<Batch> {
            (0..classes)
                .map(|_| {
                    let b = rng.random_range(1..=max_b);
                    random_batch(&mut rng, b, n)
                })
                .collect()
        };
        let real = batches(4);
        let synth = batches(3);
        let net = sample_network::<f64>(arch, instance as u64);
        let (td, fd) = graph_losses(&net, &real, &synth);
        worst = worst
            .max(rel(td, oracle::matching_loss(&net, &real, &synth, false)))
            .max(rel(fd, oracle::matching_loss(&net, &real, &synth, true)));
    }
    worst
}

fn class_batch(batch: &Batch) -> ClassBatch<f64> {
    let time = to_tensor(batch);
    let freq: Vec<f64> = time.data().chunks(time.shape()[2]).flat_map(|row| dft_magnitude(row).unwrap()).collect();
    ClassBatch {
        freq: Tensor::new(time.shape().to_vec(), freq).unwrap(),
        time,
    }
}

/// `∇_S L` of the combined objective (cnn2, N=16, 2 classes, spc=2, α=1)
/// against central differences on every coordinate with |grad| > 1e-6.
/// Returns the worst relative error and the number of coordinates compared.
pub fn end_to_end_gradient_worst(seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = sample_network::<f64>(&ArchSpec::preset("cnn2").unwrap(), seed);
    let real: Vec<ClassBatch<f64>> = (0..2).map(|_| class_batch(&random_batch(&mut rng, 6, 16))).collect();
    let synth: Vec<Tensor<f64>> = (0..2).map(|_| to_tensor(&random_batch(&mut rng, 2, 16))).collect();
    let analytic = multi_domain_objective(&net, &real, &synth, 1.0, false, true).unwrap();
    // A small step keeps the probes on one side of every relu and pooling kink.
    let h = 1e-6;
    let loss = |s: &[Tensor<f64>]| multi_domain_objective(&net, &real, s, 1.0, false, false).unwrap().l_total;
    let (mut worst, mut checked) = (0.0f64, 0);
    for c in 0..synth.len() {
        for idx in 0..synth[c].numel() {
            let a = analytic.grads[c].data()[idx];
            if a.abs() <= 1e-6 {
                continue;
            }
            let mut plus = synth.clone();
            plus[c].data_mut()[idx] += h;
            let mut minus = synth.clone();
            minus[c].data_mut()[idx] -= h;
            worst = worst.max(rel(a, (loss(&plus) - loss(&minus)) / (2.0 * h)));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Worst error of the fast magnitude against direct summation, relative to
/// the largest bin of each signal, over `count` random signals of length `n`.
pub fn dft_oracle_worst(n: usize, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fast = dft_magnitude(&x).unwrap();
        let slow = oracle::brute_dft_magnitude(&x);
        let scale = slow.iter().cloned().fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    worst
}

/// Worst relative Parseval error and worst relative mirror asymmetry over
/// `count` random records of length `n`.
pub fn parseval_symmetry_worst(n: usize, count: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut parseval, mut mirror) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let i: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = to_frequency(&SignalRecord::new(i.clone(), q.clone(), 0)).unwrap();
        for (x, mag) in [(&i, &f.i_mag), (&q, &f.q_mag)] {
            let time: f64 = x.iter().map(|&v| (v as f64).powi(2)).sum();
            let freq: f64 = mag.iter().map(|&v| (v as f64).powi(2)).sum();
            parseval = parseval.max(rel(freq, n as f64 * time));
            for k in 1..n {
                mirror = mirror.max(rel(mag[k] as f64, mag[n - k] as f64));
            }
        }
    }
    (parseval, mirror)
}
