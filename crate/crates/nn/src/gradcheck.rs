//! Central-difference gradient checks.

#![allow(clippy::cloned_ref_to_slice_refs)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Graph, Tensor, Var};

const H: f64 = 1e-5;

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Norm-wise relative error between analytic and central-difference gradients of
/// `sum(weights * f(inputs))`.
pub fn grad_error<F>(inputs: &[Tensor], f: F, seed: u64) -> f64
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
{
    let weights = {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let shape = f(&g, &vars).shape();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
        random_tensor(&shape, -1.0, 1.0, &mut rng)
    };
    let eval = |inputs: &[Tensor]| -> f64 {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&g, &vars).value();
        out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };
    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&g, &vars);
    let w = g.constant(weights.clone());
    let loss = out.mul(w).unwrap().sum();
    g.backward(loss).unwrap();

    let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
    for (k, input) in inputs.iter().enumerate() {
        let analytic = vars[k].grad().unwrap_or_else(|| Tensor::zeros(input.shape()));
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let a = analytic.data()[i];
            diff += (a - numeric).powi(2);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
    }
    diff.sqrt() / norm_a.sqrt().max(norm_n.sqrt()).max(1e-12)
}

fn dims(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(1..5)).collect()
}

macro_rules! check {
    ($out:expr, $name:expr, $seed:expr, $inputs:expr, $f:expr) => {{
        $out.push(($name, grad_error(&$inputs, $f, $seed)));
    }};
}

/// Relative gradient error of every op on random inputs drawn from `seed`.
pub fn op_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;

    let s = dims(r, 3);
    let a = random_tensor(&s, -2.0, 2.0, r);
    let b = random_tensor(&s[1..], -2.0, 2.0, r);
    check!(out, "add", seed, [a.clone(), b.clone()], |_, v| v[0].add(v[1]).unwrap());
    check!(out, "sub", seed, [a.clone(), b.clone()], |_, v| v[0].sub(v[1]).unwrap());
    check!(out, "mul", seed, [a.clone(), b.clone()], |_, v| v[0].mul(v[1]).unwrap());
    let pos = random_tensor(&s[1..], 0.5, 2.0, r);
    check!(out, "div", seed, [a.clone(), pos.clone()], |_, v| v[0].div(v[1]).unwrap());
    check!(out, "scale", seed, [a.clone()], |_, v| v[0].scale(-1.7));
    check!(out, "add_scalar", seed, [a.clone()], |_, v| v[0].add_scalar(0.3).exp());
    check!(out, "exp", seed, [a.clone()], |_, v| v[0].exp());
    check!(out, "log", seed, [pos.clone()], |_, v| v[0].log());
    check!(out, "sigmoid", seed, [a.clone()], |_, v| v[0].sigmoid());
    check!(out, "log_sigmoid", seed, [a.clone()], |_, v| v[0].log_sigmoid());
    check!(out, "tanh", seed, [a.clone()], |_, v| v[0].tanh());
    check!(out, "relu", seed, [a.clone()], |_, v| v[0].relu());
    check!(out, "leaky_relu", seed, [a.clone()], |_, v| v[0].leaky_relu(0.2));

    let (m, k, n, bt) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5), r.random_range(1..4));
    let x2 = random_tensor(&[m, k], -1.0, 1.0, r);
    let y2 = random_tensor(&[k, n], -1.0, 1.0, r);
    let x3 = random_tensor(&[bt, m, k], -1.0, 1.0, r);
    let y3 = random_tensor(&[bt, k, n], -1.0, 1.0, r);
    check!(out, "matmul", seed, [x2.clone(), y2.clone()], |_, v| v[0].matmul(v[1]).unwrap());
    check!(out, "matmul batched", seed, [x3.clone(), y3.clone()], |_, v| v[0].matmul(v[1]).unwrap());
    check!(out, "matmul lhs broadcast", seed, [x2.clone(), y3.clone()], |_, v| v[0].matmul(v[1]).unwrap());
    check!(out, "matmul rhs broadcast", seed, [x3.clone(), y2.clone()], |_, v| v[0].matmul(v[1]).unwrap());

    let axis = r.random_range(0..3);
    check!(out, "softmax", seed, [a.clone()], |_, v| v[0].softmax(axis).unwrap());
    check!(out, "log_softmax", seed, [a.clone()], |_, v| v[0].log_softmax(axis).unwrap());
    let wide = random_tensor(&[s[0], s[1], s[2] + 1], -2.0, 2.0, r);
    check!(out, "layer_norm", seed, [wide.clone()], |_, v| v[0].layer_norm(1e-5));
    let bn = random_tensor(&[s[0] + 1, s[1], s[2]], -2.0, 2.0, r);
    check!(out, "batch_norm", seed, [bn], |_, v| v[0].batch_norm_train(1, 1e-5).unwrap().0);

    let table = random_tensor(&[5, 3], -1.0, 1.0, r);
    let ids: Vec<usize> = (0..4).map(|_| r.random_range(0..5)).collect();
    check!(out, "embedding", seed, [table], |g, v| g.embedding(v[0], &ids).unwrap());
    let picks: Vec<usize> = (0..s[0] * s[1]).map(|_| r.random_range(0..s[2])).collect();
    check!(out, "pick", seed, [a.clone()], |_, v| v[0].pick(&picks).unwrap());

    let (cin, cout, len) = (r.random_range(1..4), r.random_range(1..4), r.random_range(3..8));
    let kern = r.random_range(1..4);
    let stride = r.random_range(1..3);
    let pad = r.random_range(0..2);
    let x = random_tensor(&[2, cin, len], -1.0, 1.0, r);
    let w = random_tensor(&[cout, cin, kern], -1.0, 1.0, r);
    check!(out, "conv1d", seed, [x, w], |_, v| v[0].conv1d(v[1], stride, pad).unwrap());
    let (hh, ww) = (r.random_range(3..7), r.random_range(3..7));
    let x = random_tensor(&[2, cin, hh, ww], -1.0, 1.0, r);
    let w = random_tensor(&[cout, cin, kern, kern + 1], -1.0, 1.0, r);
    let pad2 = (pad, 1);
    check!(out, "conv2d", seed, [x, w], |_, v| v[0].conv2d(v[1], (stride, 2), pad2).unwrap());

    let total: usize = s.iter().product();
    check!(out, "reshape", seed, [a.clone()], |_, v| v[0].reshape(&[total]).unwrap().tanh());
    let (ta, tb) = (r.random_range(0..3), r.random_range(0..3));
    check!(out, "transpose", seed, [a.clone()], |_, v| v[0].transpose(ta, tb).unwrap().tanh());
    check!(out, "sum", seed, [a.clone()], |_, v| v[0].exp().sum());
    check!(out, "mean", seed, [a.clone()], |_, v| v[0].exp().mean());
    check!(out, "sum_axis", seed, [a.clone()], |_, v| v[0].sum_axis(axis).unwrap());
    check!(out, "mean_axis", seed, [a.clone()], |_, v| v[0].mean_axis(axis).unwrap());
    check!(out, "max_axis", seed, [a.clone()], |_, v| v[0].max_axis(axis).unwrap());
    let other = random_tensor(&{ let mut t = s.clone(); t[axis] += 1; t }, -1.0, 1.0, r);
    check!(out, "concat", seed, [a.clone(), other], |g, v| g.concat(&[v[0], v[1]], axis).unwrap());
    let end = s[axis];
    let start = r.random_range(0..end);
    check!(out, "slice", seed, [a.clone()], |_, v| v[0].slice(axis, start, end).unwrap());
    check!(out, "dropout", seed, [a.clone()], |_, v| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
        v[0].dropout(0.3, true, &mut mask_rng).unwrap()
    });
    out
}
