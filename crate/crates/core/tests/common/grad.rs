//! Central-difference gradient checking on f64 graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigdistill_core::{Graph, NodeId, Result, Tensor};

pub const H: f64 = 1e-3;
pub const TOL: f64 = 1e-3;
pub const SHAPES_PER_OP: usize = 5;

pub type Build = dyn Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>;
pub type Case = (Vec<Vec<usize>>, Box<Build>);
pub type CaseGen = Box<dyn FnMut(&mut ChaCha8Rng) -> Case>;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Builds the op on fresh leaves. A non-scalar output is reduced with fixed
/// random weights so every element contributes to the checked scalar.
fn evaluate(inputs: &[Tensor<f64>], weights: &Option<Tensor<f64>>, build: &Build, grad: bool) -> (f64, Vec<Vec<f64>>) {
    let mut g = Graph::<f64>::new();
    let leaves: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), grad)).collect();
    let out = build(&mut g, &leaves).unwrap();
    let root = match weights {
        Some(w) => {
            let w = g.constant(w.clone());
            let prod = g.mul(out, w).unwrap();
            g.sum(prod).unwrap()
        }
        None => out,
    };
    let value = g.scalar(root);
    let mut grads = Vec::new();
    if grad {
        g.backward(root).unwrap();
        for (&leaf, t) in leaves.iter().zip(inputs) {
            grads.push(g.grad(leaf).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; t.numel()]));
        }
    }
    (value, grads)
}

/// Largest relative error over all input coordinates whose gradient is not
/// negligibly small, and the number of coordinates compared.
pub fn max_rel_error(shapes: &[Vec<usize>], build: &Build, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor<f64>> = shapes.iter().map(|s| random_tensor(&mut rng, s)).collect();
    let out_shape = {
        let mut g = Graph::<f64>::new();
        let leaves: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let out = build(&mut g, &leaves).unwrap();
        g.shape(out).to_vec()
    };
    let weights = (out_shape.iter().product::<usize>() != 1).then(|| random_tensor(&mut rng, &out_shape));
    let (_, analytic) = evaluate(&inputs, &weights, build, true);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (which, grads) in analytic.iter().enumerate() {
        for (idx, &a) in grads.iter().enumerate() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[idx] += H;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[idx] -= H;
            let numeric =
                (evaluate(&plus, &weights, build, false).0 - evaluate(&minus, &weights, build, false).0) / (2.0 * H);
            let scale = a.abs().max(numeric.abs());
            if scale < 1e-7 {
                continue;
            }
            worst = worst.max((a - numeric).abs() / scale);
            checked += 1;
        }
    }
    (worst, checked)
}

fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

fn case(shapes: Vec<Vec<usize>>, build: impl Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId> + 'static) -> Case {
    (shapes, Box::new(build))
}

/// One shape generator per op.
pub fn op_cases() -> Vec<(&'static str, CaseGen)> {
    let mut cases: Vec<(&'static str, CaseGen)> = vec![
        (
            "conv1d",
            Box::new(|rng| {
                let (b, c, f, k) = (dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 1, 4));
                let l = dims(rng, k, 12);
                let (stride, pad) = (dims(rng, 1, 2), dims(rng, 0, 2));
                case(vec![vec![b, c, l], vec![f, c, k], vec![f]], move |g, x| {
                    g.conv1d(x[0], x[1], Some(x[2]), stride, pad)
                })
            }),
        ),
        (
            "conv1d_nobias",
            Box::new(|rng| {
                let (b, c, f, k) = (dims(rng, 1, 2), dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 1, 5));
                let l = dims(rng, k, 10);
                case(vec![vec![b, c, l], vec![f, c, k]], |g, x| g.conv1d(x[0], x[1], None, 1, 0))
            }),
        ),
        (
            "relu",
            Box::new(|rng| case(vec![vec![dims(rng, 1, 4), dims(rng, 1, 4), dims(rng, 2, 8)]], |g, x| g.relu(x[0]))),
        ),
        (
            "max_pool1d",
            Box::new(|rng| {
                let (width, stride) = (dims(rng, 1, 3), dims(rng, 1, 3));
                let l = dims(rng, width, 12);
                case(vec![vec![dims(rng, 1, 3), dims(rng, 1, 3), l]], move |g, x| {
                    g.max_pool1d(x[0], width, stride)
                })
            }),
        ),
        (
            "linear",
            Box::new(|rng| {
                let (b, d, e) = (dims(rng, 1, 4), dims(rng, 1, 6), dims(rng, 1, 5));
                case(vec![vec![b, d], vec![d, e], vec![e]], |g, x| g.linear(x[0], x[1], x[2]))
            }),
        ),
        (
            "reshape_flatten",
            Box::new(|rng| {
                let (a, b, c) = (dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 1, 4));
                case(vec![vec![a, b, c]], move |g, x| {
                    let r = g.reshape(x[0], vec![a * b, c])?;
                    let r = g.reshape(r, vec![a, b, c])?;
                    g.flatten(r)
                })
            }),
        ),
        (
            "mean_over_batch",
            Box::new(|rng| {
                case(vec![vec![dims(rng, 1, 5), dims(rng, 1, 3), dims(rng, 1, 4)]], |g, x| g.mean_over_batch(x[0]))
            }),
        ),
        (
            "scale",
            Box::new(|rng| {
                let factor = rng.random_range(-3.0..3.0);
                case(vec![vec![dims(rng, 1, 4), dims(rng, 1, 4)]], move |g, x| g.scale(x[0], factor))
            }),
        ),
        ("sum", Box::new(|rng| case(vec![vec![dims(rng, 1, 4), dims(rng, 1, 6)]], |g, x| g.sum(x[0])))),
        (
            "sum_of_squares",
            Box::new(|rng| case(vec![vec![dims(rng, 1, 4), dims(rng, 1, 6)]], |g, x| g.sum_of_squares(x[0]))),
        ),
        (
            "dft_magnitude",
            Box::new(|rng| {
                let n = [2, 4, 5, 7, 8, 12, 16][rng.random_range(0..7)];
                case(vec![vec![dims(rng, 1, 3), 2, n]], |g, x| g.dft_magnitude(x[0]))
            }),
        ),
        (
            "cross_entropy",
            Box::new(|rng| {
                let (b, e) = (dims(rng, 1, 5), dims(rng, 2, 6));
                let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..e)).collect();
                case(vec![vec![b, e]], move |g, x| g.cross_entropy(x[0], &labels))
            }),
        ),
        (
            "conv_relu_pool_linear",
            Box::new(|rng| {
                let (b, l) = (dims(rng, 1, 3), dims(rng, 8, 12));
                let pooled = (l - 2) / 2 + 1;
                case(
                    vec![vec![b, 2, l], vec![3, 2, 3], vec![3], vec![3 * pooled, 4], vec![4]],
                    |g, x| {
                        let h = g.conv1d(x[0], x[1], Some(x[2]), 1, 1)?;
                        let h = g.relu(h)?;
                        let h = g.max_pool1d(h, 2, 2)?;
                        let h = g.flatten(h)?;
                        g.linear(h, x[3], x[4])
                    },
                )
            }),
        ),
    ];
    for op in ["add", "sub", "mul"] {
        cases.push((
            op,
            Box::new(move |rng| {
                let shape = vec![dims(rng, 1, 3), dims(rng, 1, 5)];
                case(vec![shape.clone(), shape], move |g, x| match op {
                    "add" => g.add(x[0], x[1]),
                    "sub" => g.sub(x[0], x[1]),
                    _ => g.mul(x[0], x[1]),
                })
            }),
        ));
    }
    cases
}

/// Worst relative error of one op over `SHAPES_PER_OP` random shapes.
pub fn check_op(name: &str, gen: &mut CaseGen, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for k in 0..SHAPES_PER_OP {
        let (shapes, build) = gen(&mut rng);
        let (err, n) = max_rel_error(&shapes, build.as_ref(), seed.wrapping_mul(31).wrapping_add(k as u64));
        if err > TOL {
            eprintln!("{name} {shapes:?}: relative error {err:.3e}");
        }
        worst = worst.max(err);
        checked += n;
    }
    (worst, checked)
}
