use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the two operands of a binary elementwise op line up.
#[derive(Clone, Copy, Debug)]
enum Pairing {
    Same,
    ScalarLhs,
    ScalarRhs,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId, Pairing),
    Sub(NodeId, NodeId, Pairing),
    Mul(NodeId, NodeId, Pairing),
    AddBias(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Scale(NodeId, T),
    SoftmaxRows(NodeId),
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
    Sum(NodeId),
    Mean(NodeId),
    Element(NodeId, usize),
    Slice(NodeId, usize),
    StraightThrough(NodeId),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Scale(..) => "scale",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Element(..) => "element",
            Op::Slice(..) => "slice",
            Op::StraightThrough(_) => "straight_through",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Define-by-run reverse-mode tape.
///
/// Nodes are appended in evaluation order, so arena order is a topological
/// order and `backward` simply walks it in reverse.
#[derive(Clone, Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    relu_margin: Option<T>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            relu_margin: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Accumulated gradient, `None` if no backward pass has reached the node.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Smallest |input| seen by any relu in this graph. Finite-difference
    /// checks are only meaningful when this exceeds the perturbation size.
    pub fn relu_margin(&self) -> Option<T> {
        self.relu_margin
    }

    fn push_raw(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::Matmul(a, b), &[a, b])
    }

    fn pairing(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Pairing> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() == vb.shape() {
            Ok(Pairing::Same)
        } else if va.is_scalar() {
            Ok(Pairing::ScalarLhs)
        } else if vb.is_scalar() {
            Ok(Pairing::ScalarRhs)
        } else {
            Err(Error::Dimension {
                op,
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            })
        }
    }

    fn binary(&self, a: NodeId, b: NodeId, pairing: Pairing, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        match pairing {
            Pairing::Same => va.zip_map(vb, f),
            Pairing::ScalarLhs => {
                let s = va.item();
                vb.map(|v| f(s, v))
            }
            Pairing::ScalarRhs => {
                let s = vb.item();
                va.map(|v| f(v, s))
            }
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let p = self.pairing("add", a, b)?;
        let value = self.binary(a, b, p, |x, y| x + y);
        self.push(value, Op::Add(a, b, p), &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let p = self.pairing("sub", a, b)?;
        let value = self.binary(a, b, p, |x, y| x - y);
        self.push(value, Op::Sub(a, b, p), &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let p = self.pairing("mul", a, b)?;
        let value = self.binary(a, b, p, |x, y| x * y);
        self.push(value, Op::Mul(a, b, p), &[a, b])
    }

    /// `x[B×N] + bias[1×N]`, the bias repeated over rows.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let (_, n) = vx.dims2()?;
        if vb.shape() != [1, n] {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: vx.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let b = vb.data();
        let mut data = vx.data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, &bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        self.push(value, Op::AddBias(x, bias), &[x, bias])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let margin = va.data().iter().fold(T::infinity(), |m, v| m.min(v.abs()));
        let value = va.map(|v| if v > T::zero() { v } else { T::zero() });
        self.relu_margin = Some(self.relu_margin.map_or(margin, |m| m.min(margin)));
        self.push(value, Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(T::tanh);
        self.push(value, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(T::exp);
        self.push(value, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if let Some(bad) = va.data().iter().find(|v| **v <= T::zero()) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive entry {bad}"),
            });
        }
        let value = va.map(T::ln);
        self.push(value, Op::Log(a), &[a])
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        let value = self.value(a).map(|v| v * c);
        self.push(value, Op::Scale(a, c), &[a])
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if !va.is_finite() {
            return Err(Error::NonFinite { op: "softmax_rows" });
        }
        let value = va.softmax_rows()?;
        self.push(value, Op::SoftmaxRows(a), &[a])
    }

    /// Mean negative log-likelihood of `labels` under row-softmax of `logits`.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let vl = self.value(logits);
        let (b, c) = vl.dims2()?;
        if labels.len() != b {
            return Err(Error::Dimension {
                op: "cross_entropy",
                lhs: vl.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= c) {
            return Err(Error::Index(format!(
                "label {y} at position {i} outside 0..{c}"
            )));
        }
        let mut loss = T::zero();
        for (i, &y) in labels.iter().enumerate() {
            let row = vl.row(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            loss += lse - row[y];
        }
        loss /= T::of(b as f64);
        let probs = vl.softmax_rows()?;
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let value = Tensor::scalar(va.sum() / T::of(va.len() as f64));
        self.push(value, Op::Mean(a), &[a])
    }

    /// Scalar node holding the element at flat index `idx`.
    pub fn element(&mut self, a: NodeId, idx: usize) -> Result<NodeId> {
        let va = self.value(a);
        let v = *va.data().get(idx).ok_or_else(|| {
            Error::Index(format!("element {idx} of tensor with {} entries", va.len()))
        })?;
        self.push(Tensor::scalar(v), Op::Element(a, idx), &[a])
    }

    /// Contiguous run of the flat data starting at `offset`, viewed as `shape`.
    pub fn slice(&mut self, a: NodeId, offset: usize, shape: Vec<usize>) -> Result<NodeId> {
        let va = self.value(a);
        let n: usize = shape.iter().product();
        if offset + n > va.len() {
            return Err(Error::Index(format!(
                "slice {offset}..{} of tensor with {} entries",
                offset + n,
                va.len()
            )));
        }
        let value = Tensor::new(shape, va.data()[offset..offset + n].to_vec())?;
        self.push(value, Op::Slice(a, offset), &[a])
    }

    /// Forward value `hard`, backward identity into `soft`.
    pub fn straight_through(&mut self, soft: NodeId, hard: Tensor<T>) -> Result<NodeId> {
        if hard.shape() != self.value(soft).shape() {
            return Err(Error::Dimension {
                op: "straight_through",
                lhs: self.value(soft).shape().to_vec(),
                rhs: hard.shape().to_vec(),
            });
        }
        self.push(hard, Op::StraightThrough(soft), &[soft])
    }

    /// Reverse pass from a scalar root. Gradients are added to whatever the
    /// nodes already hold.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut local: Vec<Option<Tensor<T>>> = vec![None; root.0 + 1];
        local[root.0] = Some(Tensor::full(self.value(root).shape(), T::one()));
        for i in (0..=root.0).rev() {
            let Some(g) = local[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = &self.nodes[i].op;
            let name = op.name();
            for (parent, contrib) in self.local_grads(i, &g)? {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                if !contrib.is_finite() {
                    return Err(Error::NonFinite { op: name });
                }
                match &mut local[parent.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
            match &mut self.grads[i] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `i` to each of its parents.
    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(NodeId, Tensor<T>)>> {
        let node = &self.nodes[i];
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Matmul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut v = Vec::with_capacity(2);
                if self.requires_grad(*a) {
                    v.push((*a, g.matmul_t(vb)?));
                }
                if self.requires_grad(*b) {
                    v.push((*b, va.t_matmul(g)?));
                }
                v
            }
            Op::Add(a, b, p) => vec![
                (*a, reduce_for(*p, true, g.clone())),
                (*b, reduce_for(*p, false, g.clone())),
            ],
            Op::Sub(a, b, p) => vec![
                (*a, reduce_for(*p, true, g.clone())),
                (*b, reduce_for(*p, false, g.map(|v| -v))),
            ],
            Op::Mul(a, b, p) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                match p {
                    Pairing::Same => vec![
                        (*a, g.zip_map(vb, |x, y| x * y)),
                        (*b, g.zip_map(va, |x, y| x * y)),
                    ],
                    Pairing::ScalarLhs => {
                        let s = va.item();
                        vec![(*a, Tensor::scalar(dot(g, vb))), (*b, g.map(|x| x * s))]
                    }
                    Pairing::ScalarRhs => {
                        let s = vb.item();
                        vec![(*a, g.map(|x| x * s)), (*b, Tensor::scalar(dot(g, va)))]
                    }
                }
            }
            Op::AddBias(x, b) => {
                let n = g.cols();
                let mut db = vec![T::zero(); n];
                for row in g.data().chunks(n) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                vec![(*x, g.clone()), (*b, Tensor::new(vec![1, n], db)?)]
            }
            Op::Relu(a) => {
                let va = self.value(*a);
                vec![(
                    *a,
                    g.zip_map(va, |gv, x| if x > T::zero() { gv } else { T::zero() }),
                )]
            }
            Op::Tanh(a) => vec![(*a, g.zip_map(&node.value, |gv, y| gv * (T::one() - y * y)))],
            Op::Exp(a) => vec![(*a, g.zip_map(&node.value, |gv, y| gv * y))],
            Op::Log(a) => vec![(*a, g.zip_map(self.value(*a), |gv, x| gv / x))],
            Op::Scale(a, c) => {
                let c = *c;
                vec![(*a, g.map(|v| v * c))]
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut data = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                    let inner: T = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                    data.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - inner)));
                }
                vec![(*a, Tensor::new(y.shape().to_vec(), data)?)]
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let scale = g.item() / T::of(labels.len() as f64);
                let c = probs.cols();
                let mut data = probs.data().to_vec();
                for (i, &y) in labels.iter().enumerate() {
                    data[i * c + y] -= T::one();
                }
                data.iter_mut().for_each(|v| *v *= scale);
                vec![(*logits, Tensor::new(probs.shape().to_vec(), data)?)]
            }
            Op::Sum(a) => {
                let va = self.value(*a);
                vec![(*a, Tensor::full(va.shape(), g.item()))]
            }
            Op::Mean(a) => {
                let va = self.value(*a);
                vec![(
                    *a,
                    Tensor::full(va.shape(), g.item() / T::of(va.len() as f64)),
                )]
            }
            Op::Element(a, idx) => {
                let mut t = Tensor::zeros(self.value(*a).shape());
                t.data_mut()[*idx] = g.item();
                vec![(*a, t)]
            }
            Op::Slice(a, offset) => {
                let mut t = Tensor::zeros(self.value(*a).shape());
                t.data_mut()[*offset..*offset + g.len()].copy_from_slice(g.data());
                vec![(*a, t)]
            }
            Op::StraightThrough(soft) => vec![(*soft, g.clone())],
        };
        Ok(out)
    }
}

fn dot<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> T {
    a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).sum()
}

/// Collapses a broadcast gradient back onto the scalar operand.
fn reduce_for<T: Scalar>(p: Pairing, lhs: bool, g: Tensor<T>) -> Tensor<T> {
    match (p, lhs) {
        (Pairing::ScalarLhs, true) | (Pairing::ScalarRhs, false) => Tensor::scalar(g.sum()),
        _ => g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let m = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let p = g.matmul(i, m).unwrap();
        assert_eq!(g.value(p), &t(&[2, 2], &[1., 2., 3., 4.]));
    }

    #[test]
    fn orthogonal_rows() {
        let mut g = Graph::new();
        let a = g.constant(t(&[1, 2], &[1., 0.]));
        let b = g.constant(t(&[2, 1], &[0., 1.]));
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.value(p).data(), &[0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let msg = g.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn relu_and_exp_values() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[-1., 0., 2.]));
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0., 0., 2.]);
        let z = g.constant(t(&[1], &[0.]));
        let e = g.exp(z).unwrap();
        assert_eq!(g.value(e).data(), &[1.]);
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[1., 0.]));
        assert!(matches!(g.log(x), Err(Error::Domain { .. })));
    }

    #[test]
    fn softmax_rows_known_values() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Tensor::zeros(&[1, 7]));
        let s = g.softmax_rows(z).unwrap();
        for &v in g.value(s).data() {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
        let a = g.constant(t(&[1, 2], &[2f64.ln(), 0.]));
        let s = g.softmax_rows(a).unwrap();
        let v = g.value(s).data();
        assert!((v[0] - 2. / 3.).abs() < 1e-15 && (v[1] - 1. / 3.).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_limits() {
        let mut g = Graph::<f64>::new();
        let l = g.constant(Tensor::zeros(&[3, 4]));
        let ce = g.cross_entropy(l, &[0, 1, 3]).unwrap();
        assert!((g.value(ce).item() - 4f64.ln()).abs() < 1e-15);

        let l = g.constant(t(&[1, 3], &[50., 0., 0.]));
        let ce = g.cross_entropy(l, &[0]).unwrap();
        assert!(g.value(ce).item() < 1e-20);

        let l = g.constant(Tensor::zeros(&[1, 3]));
        assert!(matches!(g.cross_entropy(l, &[3]), Err(Error::Index(_))));
    }

    #[test]
    fn square_and_relu_sum_gradients() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 6.0);

        let mut g = Graph::new();
        let x = g.param(t(&[2], &[-1., 2.]));
        let r = g.relu(x).unwrap();
        let s = g.sum(r).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0., 1.]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1., 2.]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let y = g.mul(x, x).unwrap();
        let z = g.exp(y).unwrap();
        g.backward(z).unwrap();
        let once = g.grad(x).unwrap().item();
        g.backward(z).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 2.0 * once);
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn straight_through_passes_gradient_unchanged() {
        let mut g = Graph::new();
        let soft = g.param(t(&[1, 2], &[0.3, 0.7]));
        let hard = g.straight_through(soft, t(&[1, 2], &[0., 1.])).unwrap();
        let w = g.constant(t(&[1, 2], &[5., 7.]));
        let m = g.mul(hard, w).unwrap();
        let s = g.sum(m).unwrap();
        assert_eq!(g.value(s).item(), 7.0);
        g.backward(s).unwrap();
        assert_eq!(g.grad(soft).unwrap().data(), &[5., 7.]);
    }

    #[test]
    fn scalar_broadcast_mul_gradient() {
        let mut g = Graph::new();
        let s = g.param(Tensor::scalar(2.0));
        let v = g.param(t(&[3], &[1., 2., 3.]));
        let m = g.mul(s, v).unwrap();
        let total = g.sum(m).unwrap();
        g.backward(total).unwrap();
        assert_eq!(g.grad(s).unwrap().item(), 6.0);
        assert_eq!(g.grad(v).unwrap().data(), &[2., 2., 2.]);
    }

    #[test]
    fn non_scalar_broadcast_is_rejected() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 2]));
        let b = g.constant(Tensor::zeros(&[1, 2]));
        assert!(matches!(g.add(a, b), Err(Error::Dimension { .. })));
    }
}
