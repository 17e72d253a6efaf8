use rand::Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::{Activation, ArchSpace, Architecture, OpKind};

/// How each layer combines its candidate operators.
#[derive(Clone, Copy, Debug)]
pub enum Route<'a> {
    /// Exactly one operator per layer. With `gates` (the P̄ node), the
    /// chosen output is multiplied by its gate entry so the architecture
    /// logits receive a gradient; without, this is the stand-alone network.
    Path {
        ops: &'a [usize],
        gates: Option<NodeId>,
    },
    /// Every operator runs; layer output is `Σ_k w[l,k] · o_k(x)`.
    Mixture { weights: NodeId },
}

/// Whether weights enter the graph as trainable leaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binding {
    Trainable,
    Frozen,
}

/// Instrumentation of one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardStats {
    /// Operator evaluations across all layers.
    pub ops_executed: usize,
    /// Operator outputs held for the backward pass.
    pub live_activations: usize,
}

#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub logits: NodeId,
    /// Graph node of each parameter, for those the pass touched.
    pub bound: Vec<Option<NodeId>>,
    pub stats: ForwardStats,
}

/// Indices of one expand block's `[w1, b1, w2, b2]` in the parameter list.
type BlockSlot = Option<usize>;

/// Weight-sharing network over an [`ArchSpace`]: linear stem, `L` layers of
/// candidate operators, optional dropout, linear head.
///
/// Parameters live in one flat list ordered stem, head, then blocks
/// layer-major. A stand-alone network built with [`Supernet::standalone`]
/// allocates only the blocks its architecture uses, so its initialization
/// consumes the random stream in the same order as a bare stem+head model.
#[derive(Clone, Debug)]
pub struct Supernet<T> {
    space: ArchSpace,
    input_dim: usize,
    classes: usize,
    params: Vec<Tensor<T>>,
    blocks: Vec<Vec<BlockSlot>>,
}

const STEM: usize = 0;
const HEAD: usize = 2;

impl<T: Scalar> Supernet<T> {
    pub fn new<R: Rng + ?Sized>(
        space: &ArchSpace,
        input_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(space, input_dim, classes, None, rng)
    }

    pub fn standalone<R: Rng + ?Sized>(
        space: &ArchSpace,
        arch: &Architecture,
        input_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(space, input_dim, classes, Some(arch), rng)
    }

    /// Stand-alone network for `arch` that inherits this network's trunk and
    /// the chosen operators' weights.
    pub fn extract(&self, arch: &Architecture) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::build(
            &self.space,
            self.input_dim,
            self.classes,
            Some(arch),
            &mut rng,
        )?;
        for i in self.trunk_params() {
            net.params[i] = self.params[i].clone();
        }
        for (l, &k) in arch.ops().iter().enumerate() {
            if let Some(dst) = net.blocks[l][k] {
                let src = self.blocks[l][k].ok_or_else(|| {
                    Error::Config(format!(
                        "layer {l} operator {k} is not part of this network"
                    ))
                })?;
                for j in 0..4 {
                    net.params[dst + j] = self.params[src + j].clone();
                }
            }
        }
        Ok(net)
    }

    fn build<R: Rng + ?Sized>(
        space: &ArchSpace,
        input_dim: usize,
        classes: usize,
        only: Option<&Architecture>,
        rng: &mut R,
    ) -> Result<Self> {
        space.validate()?;
        if input_dim == 0 || classes == 0 {
            return Err(Error::Config(
                "input_dim and classes must be positive".into(),
            ));
        }
        if let Some(a) = only {
            crate::space::encode::<T>(a, space)?;
        }
        let c = space.width;
        let mut params = Vec::new();
        params.extend(linear(input_dim, c, rng));
        params.extend(linear(c, classes, rng));
        let mut blocks = Vec::with_capacity(space.num_layers);
        for l in 0..space.num_layers {
            let mut row = Vec::with_capacity(space.ops_per_layer());
            for (k, op) in space.menu.iter().enumerate() {
                let wanted = only.is_none_or(|a| a.ops()[l] == k);
                if op.kind == OpKind::ExpandBlock && wanted {
                    row.push(Some(params.len()));
                    let hidden = op.expansion_ratio * c;
                    params.extend(linear(c, hidden, rng));
                    params.extend(linear(hidden, c, rng));
                } else {
                    row.push(None);
                }
            }
            blocks.push(row);
        }
        Ok(Self {
            space: space.clone(),
            input_dim,
            classes,
            params,
            blocks,
        })
    }

    pub fn space(&self) -> &ArchSpace {
        &self.space
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Parameter indices owned by operator `k` of layer `l` (empty for skip).
    pub fn op_params(&self, l: usize, k: usize) -> std::ops::Range<usize> {
        match self.blocks[l][k] {
            Some(i) => i..i + 4,
            None => 0..0,
        }
    }

    /// Stem + head parameter indices.
    pub fn trunk_params(&self) -> std::ops::Range<usize> {
        STEM..HEAD + 2
    }

    /// Builds the forward pass on `g` for inputs `x` (B × input_dim).
    ///
    /// `dropout` applies inverted dropout before the head with the given
    /// rate and generator.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        x: NodeId,
        route: Route<'_>,
        binding: Binding,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<ForwardPass> {
        let (_, d) = g.value(x).dims2()?;
        if d != self.input_dim {
            return Err(Error::Config(format!(
                "input has {d} features, network expects {}",
                self.input_dim
            )));
        }
        let (l_count, k_count) = (self.space.num_layers, self.space.ops_per_layer());
        let gate_node = match route {
            Route::Path { ops, gates } => {
                if ops.len() != l_count || ops.iter().any(|&k| k >= k_count) {
                    return Err(Error::Config(format!(
                        "path {ops:?} does not fit a {l_count}-layer, {k_count}-op space"
                    )));
                }
                gates
            }
            Route::Mixture { weights } => Some(weights),
        };
        if let Some(gn) = gate_node {
            if g.value(gn).shape() != [l_count, k_count] {
                return Err(Error::Config(format!(
                    "gate matrix is {:?}, space is {l_count}×{k_count}",
                    g.value(gn).shape()
                )));
            }
        }

        let mut pass = ForwardPass {
            logits: x,
            bound: vec![None; self.params.len()],
            stats: ForwardStats::default(),
        };
        let mut h = self.dense(g, &mut pass, x, STEM, binding)?;
        for l in 0..l_count {
            h = match route {
                Route::Path { ops, gates } => {
                    let k = ops[l];
                    let out = self.apply_op(g, &mut pass, h, l, k, binding)?;
                    pass.stats.ops_executed += 1;
                    pass.stats.live_activations += 1;
                    match gates {
                        Some(gn) => {
                            let gate = g.element(gn, l * k_count + k)?;
                            g.mul(gate, out)?
                        }
                        None => out,
                    }
                }
                Route::Mixture { weights } => {
                    let mut acc = None;
                    for k in 0..k_count {
                        let out = self.apply_op(g, &mut pass, h, l, k, binding)?;
                        pass.stats.ops_executed += 1;
                        pass.stats.live_activations += 1;
                        let w = g.element(weights, l * k_count + k)?;
                        let term = g.mul(w, out)?;
                        acc = Some(match acc {
                            Some(a) => g.add(a, term)?,
                            None => term,
                        });
                    }
                    acc.expect("menu is non-empty")
                }
            };
        }
        if let Some((rate, rng)) = dropout {
            if rate > 0.0 {
                let keep = 1.0 - rate;
                let shape = g.value(h).shape().to_vec();
                let n: usize = shape.iter().product();
                let mask = (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            T::of(1.0 / keep)
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let m = g.constant(Tensor::new(shape, mask)?);
                h = g.mul(h, m)?;
            }
        }
        pass.logits = self.dense(g, &mut pass, h, HEAD, binding)?;
        Ok(pass)
    }

    /// Gradients of the bound parameters; `None` for parameters the pass
    /// never touched.
    pub fn gradients(&self, g: &Graph<T>, pass: &ForwardPass) -> Vec<Option<Tensor<T>>> {
        pass.bound
            .iter()
            .zip(&self.params)
            .map(|(b, p)| {
                b.map(|id| {
                    g.grad(id)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(p.shape()))
                })
            })
            .collect()
    }

    /// Class scores of `x` through the given path, without dropout.
    pub fn predict(&self, x: &Tensor<T>, ops: &[usize]) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let pass = self.forward::<rand_chacha::ChaCha8Rng>(
            &mut g,
            xn,
            Route::Path { ops, gates: None },
            Binding::Frozen,
            None,
        )?;
        Ok(g.value(pass.logits).clone())
    }

    fn bind(&self, g: &mut Graph<T>, pass: &mut ForwardPass, i: usize, binding: Binding) -> NodeId {
        *pass.bound[i].get_or_insert_with(|| match binding {
            Binding::Trainable => g.param(self.params[i].clone()),
            Binding::Frozen => g.constant(self.params[i].clone()),
        })
    }

    fn dense(
        &self,
        g: &mut Graph<T>,
        pass: &mut ForwardPass,
        x: NodeId,
        at: usize,
        binding: Binding,
    ) -> Result<NodeId> {
        let w = self.bind(g, pass, at, binding);
        let b = self.bind(g, pass, at + 1, binding);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }

    fn apply_op(
        &self,
        g: &mut Graph<T>,
        pass: &mut ForwardPass,
        x: NodeId,
        l: usize,
        k: usize,
        binding: Binding,
    ) -> Result<NodeId> {
        let op = &self.space.menu[k];
        match op.kind {
            OpKind::SkipConnect => Ok(x),
            OpKind::ExpandBlock => {
                let at = self.blocks[l][k].ok_or_else(|| {
                    Error::Config(format!(
                        "operator {} of layer {l} is not part of this network",
                        op.label
                    ))
                })?;
                let pre = self.dense(g, pass, x, at, binding)?;
                let hidden = match op.activation {
                    Activation::Relu => g.relu(pre)?,
                    Activation::Tanh => g.tanh(pre)?,
                };
                let proj = self.dense(g, pass, hidden, at + 2, binding)?;
                g.add(x, proj)
            }
        }
    }
}

/// Weight `fan_in×fan_out` and bias `1×fan_out`, both uniform on ±1/√fan_in.
fn linear<T: Scalar, R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> [Tensor<T>; 2] {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut draw = |n: usize| -> Vec<T> {
        (0..n)
            .map(|_| T::of(rng.random_range(-bound..bound)))
            .collect()
    };
    let w = Tensor::new(vec![fan_in, fan_out], draw(fan_in * fan_out)).expect("shape");
    let b = Tensor::new(vec![1, fan_out], draw(fan_out)).expect("shape");
    [w, b]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_space() -> ArchSpace {
        let mut s = ArchSpace::desk();
        s.num_layers = 3;
        s.width = 5;
        s
    }

    fn input(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    #[test]
    fn all_skip_path_is_stem_then_head() {
        let space = tiny_space();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Supernet::<f64>::new(&space, 2, 3, &mut rng).unwrap();
        let x = input(4, 2, 2);
        let mut ops = vec![0; 3];
        ops[0] = 0;
        let logits = net.predict(&x, &ops).unwrap();
        let p = net.params();
        let stem = x.matmul(&p[0]).unwrap();
        let stem = Tensor::new(
            stem.shape().to_vec(),
            stem.data()
                .iter()
                .enumerate()
                .map(|(i, v)| v + p[1].data()[i % 5])
                .collect(),
        )
        .unwrap();
        let head = stem.matmul(&p[2]).unwrap();
        let expect: Vec<f64> = head
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + p[3].data()[i % 3])
            .collect();
        assert_eq!(logits.data(), &expect[..]);
    }

    #[test]
    fn inactive_operator_weights_get_no_gradient() {
        let space = tiny_space();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Supernet::<f64>::new(&space, 2, 3, &mut rng).unwrap();
        let ops = [1, 3, 0];
        let mut g = Graph::new();
        let xn = g.constant(input(6, 2, 5));
        let pass = net
            .forward::<ChaCha8Rng>(
                &mut g,
                xn,
                Route::Path {
                    ops: &ops,
                    gates: None,
                },
                Binding::Trainable,
                None,
            )
            .unwrap();
        assert_eq!(pass.stats.ops_executed, 3);
        let loss = g.cross_entropy(pass.logits, &[0, 1, 2, 0, 1, 2]).unwrap();
        g.backward(loss).unwrap();
        let grads = net.gradients(&g, &pass);
        for (l, &chosen) in ops.iter().enumerate() {
            for k in 0..4 {
                for i in net.op_params(l, k) {
                    if k == chosen {
                        assert!(grads[i].as_ref().unwrap().max_abs() > 0.0);
                    } else {
                        assert!(grads[i].is_none());
                    }
                }
            }
        }
    }

    #[test]
    fn mixture_executes_every_operator() {
        let space = tiny_space();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Supernet::<f64>::new(&space, 2, 3, &mut rng).unwrap();
        let mut g = Graph::new();
        let xn = g.constant(input(2, 2, 5));
        let w = g.constant(Tensor::full(&[3, 4], 0.25));
        let pass = net
            .forward::<ChaCha8Rng>(
                &mut g,
                xn,
                Route::Mixture { weights: w },
                Binding::Frozen,
                None,
            )
            .unwrap();
        assert_eq!(pass.stats.ops_executed, 12);
        assert_eq!(pass.stats.live_activations, 12);
    }

    #[test]
    fn wrong_input_width_is_a_config_error() {
        let space = tiny_space();
        let net = Supernet::<f64>::new(&space, 2, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(
            net.predict(&input(1, 3, 0), &[1, 0, 0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn standalone_allocates_only_its_blocks() {
        let space = tiny_space();
        let arch = Architecture::new(vec![1, 0, 3], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Supernet::<f64>::standalone(&space, &arch, 2, 3, &mut rng).unwrap();
        let expect =
            (2 * 5 + 5) + (5 * 3 + 3) + space.menu[1].param_count(5) + space.menu[3].param_count(5);
        assert_eq!(net.param_count(), expect);
        let skip = Architecture::new(vec![0, 0, 0], 4).unwrap();
        let bare =
            Supernet::<f64>::standalone(&space, &skip, 2, 3, &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap();
        assert_eq!(bare.param_count(), (2 * 5 + 5) + (5 * 3 + 3));
    }
}
