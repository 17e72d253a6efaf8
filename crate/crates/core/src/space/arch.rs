use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::ArchSpace;

/// A concrete single-path network: one operator index per layer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Architecture {
    ops: Vec<usize>,
    num_ops: usize,
}

impl Architecture {
    pub fn new(ops: Vec<usize>, num_ops: usize) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Encoding("architecture has no layers".into()));
        }
        if let Some((l, &k)) = ops.iter().enumerate().find(|(_, &k)| k >= num_ops) {
            return Err(Error::Encoding(format!(
                "layer {l} selects operator {k}, menu has {num_ops}"
            )));
        }
        Ok(Self { ops, num_ops })
    }

    /// Every layer set to `op`, except a pinned first layer.
    pub fn uniform(space: &ArchSpace, op: usize) -> Result<Self> {
        let mut ops = vec![op; space.num_layers];
        if let Some((l, k)) = space.pinned() {
            ops[l] = k;
        }
        Self::new(ops, space.ops_per_layer())
    }

    /// Uniform draw over the space (pinned layer respected).
    pub fn random<R: Rng + ?Sized>(space: &ArchSpace, rng: &mut R) -> Self {
        let k = space.ops_per_layer();
        let mut ops: Vec<usize> = (0..space.num_layers)
            .map(|_| rng.random_range(0..k))
            .collect();
        if let Some((l, p)) = space.pinned() {
            ops[l] = p;
        }
        Self { ops, num_ops: k }
    }

    pub fn ops(&self) -> &[usize] {
        &self.ops
    }

    pub fn num_layers(&self) -> usize {
        self.ops.len()
    }

    pub fn num_ops(&self) -> usize {
        self.num_ops
    }

    /// L×K one-hot matrix.
    pub fn encoding<T: Scalar>(&self) -> Tensor<T> {
        Tensor::one_hot(&self.ops, self.num_ops).expect("ops validated at construction")
    }

    /// Inverse of [`encode`]; every row must be exactly one-hot.
    pub fn decode<T: Scalar>(encoding: &Tensor<T>) -> Result<Self> {
        let (l, k) = encoding.dims2()?;
        let mut ops = Vec::with_capacity(l);
        for row in 0..l {
            let mut hot = None;
            for (col, &v) in encoding.row(row).iter().enumerate() {
                if v == T::one() {
                    if hot.is_some() {
                        return Err(Error::Encoding(format!("layer {row} has more than one 1")));
                    }
                    hot = Some(col);
                } else if v != T::zero() {
                    return Err(Error::Encoding(format!(
                        "layer {row} holds non-binary value {v}"
                    )));
                }
            }
            ops.push(hot.ok_or_else(|| Error::Encoding(format!("layer {row} has no 1")))?);
        }
        Self::new(ops, k)
    }

    pub fn labels(&self, space: &ArchSpace) -> Vec<String> {
        self.ops
            .iter()
            .map(|&k| space.menu[k].label.clone())
            .collect()
    }

    /// Compact identifier such as `e1-skip-e4-e2`.
    pub fn id(&self, space: &ArchSpace) -> String {
        self.labels(space).join("-")
    }

    pub fn is_all_skip(&self, space: &ArchSpace) -> bool {
        let skip = space.skip_index();
        self.ops
            .iter()
            .enumerate()
            .all(|(l, &k)| Some(k) == skip || space.pinned().is_some_and(|(pl, _)| pl == l))
    }

    /// Rows of 0/1, comma separated, one line per layer.
    pub fn encoding_csv(&self) -> String {
        let mut out = String::new();
        for &k in &self.ops {
            let row: Vec<&str> = (0..self.num_ops)
                .map(|c| if c == k { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_doc(&self, space: &ArchSpace, meta: Option<serde_json::Value>) -> ArchitectureDoc {
        ArchitectureDoc {
            layers: self
                .labels(space)
                .into_iter()
                .map(|op| LayerDoc { op })
                .collect(),
            space: SpaceDoc {
                num_layers: space.num_layers,
                ops_per_layer: space.ops_per_layer(),
                width: space.width,
                menu: space.labels(),
            },
            meta,
        }
    }

    /// Reads an architecture document, checking it was produced for `space`.
    pub fn from_doc(doc: &ArchitectureDoc, space: &ArchSpace) -> Result<Self> {
        if doc.space.num_layers != space.num_layers
            || doc.space.ops_per_layer != space.ops_per_layer()
            || doc.space.width != space.width
            || doc.space.menu != space.labels()
        {
            return Err(Error::Config(format!(
                "architecture was searched in a different space (L={}, K={}, width={}, menu={:?})",
                doc.space.num_layers, doc.space.ops_per_layer, doc.space.width, doc.space.menu
            )));
        }
        if doc.layers.len() != space.num_layers {
            return Err(Error::Encoding(format!(
                "{} layers listed, space has {}",
                doc.layers.len(),
                space.num_layers
            )));
        }
        let ops = doc
            .layers
            .iter()
            .map(|l| space.op_index(&l.op))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ops, space.ops_per_layer())
    }
}

/// One-hot encoding of `arch` after checking it against `space`.
pub fn encode<T: Scalar>(arch: &Architecture, space: &ArchSpace) -> Result<Tensor<T>> {
    if arch.num_layers() != space.num_layers || arch.num_ops() != space.ops_per_layer() {
        return Err(Error::Encoding(format!(
            "architecture is {}×{}, space is {}×{}",
            arch.num_layers(),
            arch.num_ops(),
            space.num_layers,
            space.ops_per_layer()
        )));
    }
    Ok(arch.encoding())
}

/// JSON form: `{"layers":[{"op":..}], "space":{"L","K","width","menu"}, "meta":{..}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureDoc {
    pub layers: Vec<LayerDoc>,
    pub space: SpaceDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub op: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDoc {
    #[serde(rename = "L")]
    pub num_layers: usize,
    #[serde(rename = "K")]
    pub ops_per_layer: usize,
    pub width: usize,
    pub menu: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_space(l: usize, k: usize) -> ArchSpace {
        let mut s = ArchSpace::desk();
        s.num_layers = l;
        s.menu.truncate(k);
        s.first_layer_fixed = false;
        s
    }

    #[test]
    fn encodes_definitionally() {
        let space = small_space(3, 2);
        let a = Architecture::new(vec![0, 1, 0], 2).unwrap();
        let e: Tensor<f64> = encode(&a, &space).unwrap();
        assert_eq!(e.data(), &[1., 0., 0., 1., 1., 0.]);
        assert_eq!(e.sum(), 3.0);
    }

    #[test]
    fn out_of_range_op_is_an_encoding_error() {
        assert!(matches!(
            Architecture::new(vec![0, 2], 2),
            Err(Error::Encoding(_))
        ));
    }

    #[test]
    fn random_round_trip() {
        let space = ArchSpace::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = Architecture::random(&space, &mut rng);
            assert_eq!(a.ops()[0], space.fixed_first_op);
            let e: Tensor<f64> = encode(&a, &space).unwrap();
            assert_eq!(Architecture::decode(&e).unwrap(), a);
        }
    }

    #[test]
    fn decode_rejects_double_hot_rows() {
        let t = Tensor::<f64>::from_f64(vec![2, 2], &[1., 1., 0., 1.]).unwrap();
        let msg = Architecture::decode(&t).unwrap_err().to_string();
        assert!(msg.contains("layer 0"), "{msg}");
    }

    #[test]
    fn json_doc_round_trip() {
        let space = ArchSpace::desk();
        let a = Architecture::random(&space, &mut ChaCha8Rng::seed_from_u64(1));
        let json = serde_json::to_string(&a.to_doc(&space, None)).unwrap();
        assert!(json.contains("\"L\":9"));
        let doc: ArchitectureDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(Architecture::from_doc(&doc, &space).unwrap(), a);
        assert!(Architecture::from_doc(&doc, &ArchSpace::paper()).is_err());
    }

    #[test]
    fn encoding_csv_rows() {
        let a = Architecture::new(vec![1, 0], 3).unwrap();
        assert_eq!(a.encoding_csv(), "0,1,0\n1,0,0\n");
    }
}
