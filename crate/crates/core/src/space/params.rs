use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::{ArchSpace, Architecture};

/// What the Gumbel noise is added to before the tempered softmax.
///
/// `LogProbs` is the categorical reparameterization proper: the argmax of
/// `log P + G` is distributed exactly as `P`. `Probs` adds the noise to the
/// probabilities themselves; its argmax then follows `softmax(P)`, which is
/// flatter than `P`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    #[default]
    LogProbs,
    Probs,
}

/// Real-valued architecture logits, one row per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchParams<T> {
    alpha: Tensor<T>,
}

/// Result of one Gumbel draw: the noise, the relaxed sample P̂ and its
/// row-wise binarization P̄.
#[derive(Clone, Debug)]
pub struct GumbelSample<T> {
    pub noise: Tensor<T>,
    pub soft: Tensor<T>,
    pub hard: Tensor<T>,
    pub ops: Vec<usize>,
}

impl<T: Scalar> ArchParams<T> {
    pub fn new(alpha: Tensor<T>) -> Result<Self> {
        alpha.dims2()?;
        if !alpha.is_finite() {
            return Err(Error::NonFinite { op: "arch_params" });
        }
        Ok(Self { alpha })
    }

    pub fn zeros(layers: usize, ops: usize) -> Self {
        Self {
            alpha: Tensor::zeros(&[layers, ops]),
        }
    }

    pub fn alpha(&self) -> &Tensor<T> {
        &self.alpha
    }

    pub fn alpha_mut(&mut self) -> &mut Tensor<T> {
        &mut self.alpha
    }

    pub fn num_layers(&self) -> usize {
        self.alpha.rows()
    }

    pub fn num_ops(&self) -> usize {
        self.alpha.cols()
    }

    /// Per-layer operator probabilities P (row softmax of α).
    pub fn layer_probs(&self) -> Tensor<T> {
        self.alpha.softmax_rows().expect("alpha is 2-D")
    }

    /// Probability of drawing `arch`: the product of its per-layer entries of P.
    pub fn path_prob(&self, arch: &Architecture) -> Result<T> {
        if arch.num_layers() != self.num_layers() || arch.num_ops() != self.num_ops() {
            return Err(Error::Dimension {
                op: "path_prob",
                lhs: self.alpha.shape().to_vec(),
                rhs: vec![arch.num_layers(), arch.num_ops()],
            });
        }
        let p = self.layer_probs();
        Ok(arch
            .ops()
            .iter()
            .enumerate()
            .map(|(l, &k)| p.get(l, k))
            .fold(T::one(), |acc, v| acc * v))
    }

    /// Draws Gumbel noise and returns the relaxed and binarized samples.
    pub fn gumbel_sample<R: Rng + ?Sized>(
        &self,
        tau: T,
        target: NoiseTarget,
        rng: &mut R,
    ) -> Result<GumbelSample<T>> {
        let noise = gumbel_noise(self.num_layers(), self.num_ops(), rng);
        let mut g = Graph::new();
        let a = g.constant(self.alpha.clone());
        let s = relaxed_sample(&mut g, a, &noise, tau, target, None)?;
        Ok(GumbelSample {
            soft: g.value(s.soft).clone(),
            hard: g.value(s.hard).clone(),
            ops: s.ops,
            noise,
        })
    }

    /// Strongest operator per layer (ties to the lowest index), with the
    /// space's pinned layer forced.
    pub fn finalize(&self, space: &ArchSpace) -> Architecture {
        let mut ops = self.alpha.argmax_rows();
        if let Some((l, k)) = space.pinned() {
            ops[l] = k;
        }
        Architecture::new(ops, self.num_ops()).expect("argmax is in range")
    }
}

/// i.i.d. Gumbel(0, 1) matrix via `−ln(−ln u)`, `u` uniform on (0, 1).
pub fn gumbel_noise<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Tensor<T> {
    let data = (0..rows * cols)
        .map(|_| {
            let u = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            T::of(-(-u.ln()).ln())
        })
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

/// Graph nodes of one relaxed draw.
#[derive(Clone, Debug)]
pub struct RelaxedSample {
    /// P, the row softmax of α.
    pub probs: NodeId,
    /// P̂, the tempered softmax of the noisy logits.
    pub soft: NodeId,
    /// P̄, one-hot per row in the forward pass, identity in the backward pass.
    pub hard: NodeId,
    pub ops: Vec<usize>,
}

/// Builds P → P̂ → P̄ on `g` from the α node and a fixed noise draw.
///
/// `pin` forces one row of P̄ to a given operator, for spaces whose first
/// layer is not searched.
pub fn relaxed_sample<T: Scalar>(
    g: &mut Graph<T>,
    alpha: NodeId,
    noise: &Tensor<T>,
    tau: T,
    target: NoiseTarget,
    pin: Option<(usize, usize)>,
) -> Result<RelaxedSample> {
    if !(tau > T::zero()) {
        return Err(Error::Parameter(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let probs = g.softmax_rows(alpha)?;
    let base = match target {
        NoiseTarget::LogProbs => g.log(probs)?,
        NoiseTarget::Probs => probs,
    };
    let gn = g.constant(noise.clone());
    let noisy = g.add(base, gn)?;
    let tempered = g.scale(noisy, T::one() / tau)?;
    let soft = g.softmax_rows(tempered)?;
    let mut ops = g.value(soft).argmax_rows();
    if let Some((l, k)) = pin {
        ops[l] = k;
    }
    let cols = g.value(soft).cols();
    let hard = g.straight_through(soft, Tensor::one_hot(&ops, cols)?)?;
    Ok(RelaxedSample {
        probs,
        soft,
        hard,
        ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layer_probs_known_rows() {
        let p = ArchParams::<f64>::zeros(2, 7).layer_probs();
        assert!(p.data().iter().all(|&v| (v - 1. / 7.).abs() < 1e-15));
        let a = ArchParams::<f64>::new(Tensor::from_f64(vec![1, 3], &[3f64.ln(), 0., 0.]).unwrap())
            .unwrap();
        let p = a.layer_probs();
        for (v, e) in p.data().iter().zip([0.6, 0.2, 0.2]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_probs_match_graph_softmax_bitwise() {
        let alpha = gumbel_noise::<f64, _>(4, 5, &mut ChaCha8Rng::seed_from_u64(9));
        let params = ArchParams::new(alpha.clone()).unwrap();
        let mut g = Graph::new();
        let a = g.constant(alpha);
        let s = g.softmax_rows(a).unwrap();
        assert_eq!(g.value(s), &params.layer_probs());
    }

    #[test]
    fn uniform_path_probability() {
        let p = ArchParams::<f64>::zeros(2, 2);
        for ops in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let a = Architecture::new(ops.to_vec(), 2).unwrap();
            assert!((p.path_prob(&a).unwrap() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn single_layer_path_prob_is_the_softmax_entry() {
        let alpha = Tensor::<f64>::from_f64(vec![1, 3], &[0.2, -1.0, 0.7]).unwrap();
        let p = ArchParams::new(alpha).unwrap();
        let probs = p.layer_probs();
        for k in 0..3 {
            let a = Architecture::new(vec![k], 3).unwrap();
            assert_eq!(p.path_prob(&a).unwrap(), probs.get(0, k));
        }
    }

    #[test]
    fn path_probs_sum_to_one_by_enumeration() {
        let alpha = gumbel_noise::<f64, _>(3, 3, &mut ChaCha8Rng::seed_from_u64(2));
        let p = ArchParams::new(alpha).unwrap();
        let mut total = 0.0;
        for i in 0..27 {
            let ops = vec![i / 9, (i / 3) % 3, i % 3];
            total += p.path_prob(&Architecture::new(ops, 3).unwrap()).unwrap();
        }
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn gumbel_rows_are_normalized_and_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alpha = gumbel_noise::<f64, _>(6, 4, &mut rng);
        let p = ArchParams::new(alpha).unwrap();
        for tau in [5.0, 1.0, 0.01] {
            let s = p
                .gumbel_sample(tau, NoiseTarget::LogProbs, &mut rng)
                .unwrap();
            for l in 0..6 {
                let row: f64 = s.soft.row(l).iter().sum();
                assert!((row - 1.0).abs() < 1e-12);
                assert_eq!(s.hard.row(l).iter().filter(|&&v| v == 1.0).count(), 1);
                assert_eq!(s.hard.row(l).iter().sum::<f64>(), 1.0);
                let argmax = s.soft.argmax_rows()[l];
                assert_eq!(s.hard.get(l, argmax), 1.0);
            }
        }
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let p = ArchParams::<f64>::zeros(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            p.gumbel_sample(0.0, NoiseTarget::LogProbs, &mut rng),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn finalize_recovers_scaled_encoding_and_pins_first_layer() {
        let space = ArchSpace::desk();
        let arch = Architecture::new(vec![1, 0, 3, 2, 2, 1, 0, 3, 0], 4).unwrap();
        let enc: Tensor<f64> = arch.encoding().map(|v| v * 10.0);
        let params = ArchParams::new(enc).unwrap();
        assert_eq!(params.finalize(&space), arch);

        let flat = ArchParams::<f64>::zeros(9, 4).finalize(&space);
        assert_eq!(flat.ops()[0], 1);
        assert!(flat.ops()[1..].iter().all(|&k| k == 0));
    }
}
