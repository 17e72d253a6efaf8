use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::hardware::{LutPredictor, MetricKind, MlpPredictor};
use crate::space::Architecture;

/// Either cost model behind one interface. Serialized as JSON with a
/// `kind` tag of `"lut"` or `"mlp"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    Lut(LutPredictor),
    Mlp(MlpPredictor),
}

impl From<LutPredictor> for Predictor {
    fn from(p: LutPredictor) -> Self {
        Predictor::Lut(p)
    }
}

impl From<MlpPredictor> for Predictor {
    fn from(p: MlpPredictor) -> Self {
        Predictor::Mlp(p)
    }
}

impl Predictor {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Predictor::Lut(_) => "lut",
            Predictor::Mlp(_) => "mlp",
        }
    }

    pub fn metric_kind(&self) -> MetricKind {
        match self {
            Predictor::Lut(p) => p.metric_kind,
            Predictor::Mlp(p) => p.metric_kind(),
        }
    }

    pub fn num_layers(&self) -> usize {
        match self {
            Predictor::Lut(p) => p.num_layers(),
            Predictor::Mlp(p) => p.num_layers(),
        }
    }

    pub fn num_ops(&self) -> usize {
        match self {
            Predictor::Lut(p) => p.num_ops(),
            Predictor::Mlp(p) => p.num_ops(),
        }
    }

    pub fn predict(&self, encoding: &Tensor<f64>) -> Result<f64> {
        match self {
            Predictor::Lut(p) => p.predict(encoding),
            Predictor::Mlp(p) => p.predict(encoding),
        }
    }

    pub fn predict_arch(&self, arch: &Architecture) -> Result<f64> {
        self.predict(&arch.encoding())
    }

    pub fn predict_batch(&self, encodings: &[Tensor<f64>]) -> Result<Vec<f64>> {
        match self {
            Predictor::Lut(p) => encodings.iter().map(|e| p.predict(e)).collect(),
            Predictor::Mlp(p) => p.predict_batch(encodings),
        }
    }

    /// Input gradient of the MLP. A LUT's gradient is its constant table,
    /// available through [`lut_grad`](Self::lut_grad).
    pub fn predict_grad(&self, encoding: &Tensor<f64>) -> Result<Tensor<f64>> {
        match self {
            Predictor::Lut(_) => Err(Error::Unsupported(
                "predict_grad on a LUT; use lut_grad for its constant table".into(),
            )),
            Predictor::Mlp(p) => p.predict_grad(encoding),
        }
    }

    pub fn lut_grad(&self) -> Result<Tensor<f64>> {
        match self {
            Predictor::Lut(p) => Ok(p.grad()),
            Predictor::Mlp(_) => Err(Error::Unsupported("lut_grad on an MLP predictor".into())),
        }
    }

    /// Differentiable prediction from an L×K encoding node.
    pub fn predict_node(&self, g: &mut Graph<f64>, encoding: NodeId) -> Result<NodeId> {
        match self {
            Predictor::Lut(p) => p.predict_node(g, encoding),
            Predictor::Mlp(p) => p.predict_node(g, encoding),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Predictor = serde_json::from_str(s)
            .map_err(|e| Error::parse(format!("line {}", e.line()), e.to_string()))?;
        if let Predictor::Lut(l) = &p {
            l.validate()?;
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lut_rejects_predict_grad() {
        let p =
            Predictor::from(LutPredictor::new(MetricKind::Latency, vec![vec![1.0, 2.0]]).unwrap());
        assert!(matches!(
            p.predict_grad(&Tensor::zeros(&[1, 2])),
            Err(Error::Unsupported(_))
        ));
        assert_eq!(p.lut_grad().unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn tagged_json_round_trip() {
        let lut = Predictor::from(
            LutPredictor::new(MetricKind::Latency, vec![vec![0.1, 1.0 / 3.0]]).unwrap(),
        );
        let s = lut.to_json().unwrap();
        assert!(s.contains("\"kind\": \"lut\""));
        assert_eq!(Predictor::from_json(&s).unwrap(), lut);

        let mlp = Predictor::from(
            MlpPredictor::new(
                2,
                2,
                &[3],
                MetricKind::Latency,
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap(),
        );
        let s = mlp.to_json().unwrap();
        assert!(s.contains("\"kind\": \"mlp\""));
        assert_eq!(Predictor::from_json(&s).unwrap(), mlp);
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(
            Predictor::from_json("{\"kind\": \"tree\"}"),
            Err(Error::Parse { .. })
        ));
    }
}
