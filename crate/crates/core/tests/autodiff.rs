use approx::assert_relative_eq;
use nasc_core::autodiff::{grad_check, relu_margin, Graph, NodeId, Tensor};
use nasc_core::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const POINTS: u64 = 100;

type Build = fn(&mut Graph<f64>, NodeId) -> Result<NodeId>;

/// Weighted sum so every output entry reaches the scalar with a distinct
/// coefficient.
fn readout(g: &mut Graph<f64>, y: NodeId) -> Result<NodeId> {
    let n = g.value(y).len();
    let w: Vec<f64> = (0..n).map(|i| 0.3 + 0.17 * i as f64).collect();
    let c = g.constant(Tensor::new(g.value(y).shape().to_vec(), w)?);
    let p = g.mul(y, c)?;
    g.sum(p)
}

fn pair(g: &mut Graph<f64>, x: NodeId, shape: [usize; 2]) -> Result<(NodeId, NodeId)> {
    let n = shape[0] * shape[1];
    Ok((
        g.slice(x, 0, shape.to_vec())?,
        g.slice(x, n, shape.to_vec())?,
    ))
}

/// `(name, input size, positive inputs only, builder)` for every
/// differentiable graph operation.
fn catalog() -> Vec<(&'static str, usize, bool, Build)> {
    vec![
        ("matmul", 12, false, |g, x| {
            let a = g.slice(x, 0, vec![2, 3])?;
            let b = g.slice(x, 6, vec![3, 2])?;
            let y = g.matmul(a, b)?;
            readout(g, y)
        }),
        ("add", 12, false, |g, x| {
            let (a, b) = pair(g, x, [2, 3])?;
            let y = g.add(a, b)?;
            readout(g, y)
        }),
        ("sub", 12, false, |g, x| {
            let (a, b) = pair(g, x, [2, 3])?;
            let y = g.sub(a, b)?;
            readout(g, y)
        }),
        ("mul", 12, false, |g, x| {
            let (a, b) = pair(g, x, [2, 3])?;
            let y = g.mul(a, b)?;
            readout(g, y)
        }),
        ("mul_scalar", 7, false, |g, x| {
            let s = g.element(x, 6)?;
            let a = g.slice(x, 0, vec![2, 3])?;
            let y = g.mul(s, a)?;
            readout(g, y)
        }),
        ("add_bias", 9, false, |g, x| {
            let a = g.slice(x, 0, vec![2, 3])?;
            let b = g.slice(x, 6, vec![1, 3])?;
            let y = g.add_bias(a, b)?;
            readout(g, y)
        }),
        ("relu", 6, false, |g, x| {
            let y = g.relu(x)?;
            readout(g, y)
        }),
        ("tanh", 6, false, |g, x| {
            let y = g.tanh(x)?;
            readout(g, y)
        }),
        ("exp", 6, false, |g, x| {
            let y = g.exp(x)?;
            readout(g, y)
        }),
        ("log", 6, true, |g, x| {
            let y = g.log(x)?;
            readout(g, y)
        }),
        ("scale", 6, false, |g, x| {
            let y = g.scale(x, -1.7)?;
            readout(g, y)
        }),
        ("softmax_rows", 6, false, |g, x| {
            let a = g.slice(x, 0, vec![2, 3])?;
            let y = g.softmax_rows(a)?;
            readout(g, y)
        }),
        ("cross_entropy", 12, false, |g, x| {
            let a = g.slice(x, 0, vec![4, 3])?;
            g.cross_entropy(a, &[0, 2, 1, 2])
        }),
        ("sum", 6, false, |g, x| {
            let y = g.mul(x, x)?;
            g.sum(y)
        }),
        ("mean", 6, false, |g, x| {
            let y = g.mul(x, x)?;
            g.mean(y)
        }),
        ("element", 6, false, |g, x| {
            let a = g.element(x, 4)?;
            g.mul(a, a)
        }),
        ("slice", 6, false, |g, x| {
            let y = g.slice(x, 1, vec![4])?;
            readout(g, y)
        }),
    ]
}

fn point(rng: &mut ChaCha8Rng, n: usize, positive: bool) -> Tensor<f64> {
    let data = (0..n)
        .map(|_| {
            if positive {
                rng.random_range(0.2..3.0)
            } else {
                rng.random_range(-2.0..2.0)
            }
        })
        .collect();
    Tensor::new(vec![n], data).unwrap()
}

#[test]
fn every_op_matches_central_differences() {
    for (name, n, positive, build) in catalog() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < POINTS {
            let p = point(&mut rng, n, positive);
            // Central differences straddling a relu kink are meaningless.
            if relu_margin(build, &p).unwrap().is_some_and(|m| m < 1e-3) {
                continue;
            }
            let err = grad_check(build, &p, H).unwrap();
            assert!(err < TOL, "{name}: relative error {err} at {p:?}");
            checked += 1;
        }
    }
}

#[test]
fn straight_through_forwards_hard_and_backwards_identity() {
    let mut g = Graph::new();
    let soft = g.param(Tensor::from_f64(vec![1, 3], &[0.2, 0.5, 0.3]).unwrap());
    let hard = g
        .straight_through(soft, Tensor::one_hot(&[1], 3).unwrap())
        .unwrap();
    assert_eq!(g.value(hard).data(), &[0.0, 1.0, 0.0]);
    let y = readout(&mut g, hard).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(soft).unwrap().data(), &[0.3, 0.47, 0.64]);
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::full(&[2, 2], 1.5));
    let p = g.param(Tensor::full(&[2, 2], 2.0));
    let y = g.mul(c, p).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert!(g.grad(c).is_none());
    assert_eq!(g.grad(p).unwrap().data(), &[1.5; 4]);
}

#[test]
fn softmax_then_log_matches_cross_entropy() {
    let logits = Tensor::<f64>::from_f64(vec![2, 3], &[0.1, -1.0, 2.0, 0.5, 0.5, -0.3]).unwrap();
    let mut g = Graph::new();
    let l = g.constant(logits.clone());
    let ce = g.cross_entropy(l, &[2, 0]).unwrap();
    let p = logits.softmax_rows().unwrap();
    let manual = -(p.get(0, 2).ln() + p.get(1, 0).ln()) / 2.0;
    assert_relative_eq!(g.value(ce).item(), manual, max_relative = 1e-14);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-30.0f64..30.0, 12)) {
        let t = Tensor::new(vec![3, 4], v).unwrap().softmax_rows().unwrap();
        for r in 0..3 {
            let s: f64 = t.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_transpose_identity(a in prop::collection::vec(-5.0f64..5.0, 6), b in prop::collection::vec(-5.0f64..5.0, 6)) {
        let a = Tensor::new(vec![2, 3], a).unwrap();
        let b = Tensor::new(vec![3, 2], b).unwrap();
        let lhs = a.matmul(&b).unwrap().transpose().unwrap();
        let rhs = b.transpose().unwrap().matmul(&a.transpose().unwrap()).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_grad_is_exact(v in prop::collection::vec(-3.0f64..3.0, 5)) {
        let p = Tensor::new(vec![5], v).unwrap();
        let err = grad_check(|g, x| { let y = g.mul(x, x)?; g.sum(y) }, &p, H).unwrap();
        prop_assert!(err < 1e-8);
    }
}
