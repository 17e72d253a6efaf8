use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    SkipConnect,
    ExpandBlock,
}

/// Hidden nonlinearity of an expand block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// One entry of the per-layer operator menu.
///
/// An expand block of ratio `e` on width `C` computes
/// `x + W₂·act(W₁·x + b₁) + b₂` with `W₁: C×eC` and `W₂: eC×C`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OperatorSpec {
    pub kind: OpKind,
    pub expansion_ratio: usize,
    pub activation: Activation,
    pub label: String,
}

impl OperatorSpec {
    pub fn skip() -> Self {
        Self {
            kind: OpKind::SkipConnect,
            expansion_ratio: 0,
            activation: Activation::Relu,
            label: "skip".into(),
        }
    }

    pub fn expand(ratio: usize) -> Self {
        Self::expand_with(ratio, Activation::Relu)
    }

    pub fn expand_with(ratio: usize, activation: Activation) -> Self {
        assert!(ratio > 0, "expansion ratio must be positive");
        let suffix = match activation {
            Activation::Relu => "",
            Activation::Tanh => "t",
        };
        Self {
            kind: OpKind::ExpandBlock,
            expansion_ratio: ratio,
            activation,
            label: format!("e{ratio}{suffix}"),
        }
    }

    /// Parses `skip`, `e<ratio>` or `e<ratio>t` (tanh variant).
    pub fn from_label(label: &str) -> Result<Self> {
        if label == "skip" {
            return Ok(Self::skip());
        }
        let bad = || Error::Config(format!("unknown operator label {label:?}"));
        let body = label.strip_prefix('e').ok_or_else(bad)?;
        let (digits, act) = match body.strip_suffix('t') {
            Some(d) => (d, Activation::Tanh),
            None => (body, Activation::Relu),
        };
        let ratio: usize = digits.parse().map_err(|_| bad())?;
        if ratio == 0 {
            return Err(bad());
        }
        Ok(Self::expand_with(ratio, act))
    }

    pub fn is_skip(&self) -> bool {
        self.kind == OpKind::SkipConnect
    }

    /// Trainable scalars this operator owns at feature width `width`.
    pub fn param_count(&self, width: usize) -> usize {
        match self.kind {
            OpKind::SkipConnect => 0,
            OpKind::ExpandBlock => {
                let hidden = self.expansion_ratio * width;
                2 * width * hidden + hidden + width
            }
        }
    }
}

impl Serialize for OperatorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label)
    }
}

impl<'de> Deserialize<'de> for OperatorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let label = String::deserialize(d)?;
        Self::from_label(&label).map_err(serde::de::Error::custom)
    }
}

/// Layer-wise search space: the same operator menu at each of `num_layers`
/// positions, optionally with the first layer pinned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpace {
    pub num_layers: usize,
    pub menu: Vec<OperatorSpec>,
    pub width: usize,
    pub first_layer_fixed: bool,
    pub fixed_first_op: usize,
}

impl ArchSpace {
    /// Eight searchable layers behind a pinned `e1` layer, menu
    /// `{skip, e1, e2, e4}`, width 32.
    pub fn desk() -> Self {
        Self {
            num_layers: 9,
            menu: vec![
                OperatorSpec::skip(),
                OperatorSpec::expand(1),
                OperatorSpec::expand(2),
                OperatorSpec::expand(4),
            ],
            width: 32,
            first_layer_fixed: true,
            fixed_first_op: 1,
        }
    }

    /// 22 layers, first pinned, seven operators per layer.
    pub fn paper() -> Self {
        Self {
            num_layers: 22,
            menu: vec![
                OperatorSpec::skip(),
                OperatorSpec::expand(1),
                OperatorSpec::expand(2),
                OperatorSpec::expand(3),
                OperatorSpec::expand(4),
                OperatorSpec::expand(6),
                OperatorSpec::expand_with(6, Activation::Tanh),
            ],
            width: 32,
            first_layer_fixed: true,
            fixed_first_op: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.menu.is_empty() || self.width == 0 {
            return Err(Error::Config(
                "space needs positive num_layers, width and a non-empty menu".into(),
            ));
        }
        if self.first_layer_fixed && self.fixed_first_op >= self.menu.len() {
            return Err(Error::Config(format!(
                "fixed_first_op {} outside menu of {}",
                self.fixed_first_op,
                self.menu.len()
            )));
        }
        let mut labels: Vec<_> = self.menu.iter().map(|o| &o.label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.menu.len() {
            return Err(Error::Config("duplicate operator labels in menu".into()));
        }
        Ok(())
    }

    /// K.
    pub fn ops_per_layer(&self) -> usize {
        self.menu.len()
    }

    pub fn searchable_layers(&self) -> usize {
        if self.first_layer_fixed {
            self.num_layers - 1
        } else {
            self.num_layers
        }
    }

    /// Number of distinct architectures, K^(searchable layers).
    pub fn space_size(&self) -> f64 {
        (self.ops_per_layer() as f64).powi(self.searchable_layers() as i32)
    }

    pub fn skip_index(&self) -> Option<usize> {
        self.menu.iter().position(OperatorSpec::is_skip)
    }

    pub fn labels(&self) -> Vec<String> {
        self.menu.iter().map(|o| o.label.clone()).collect()
    }

    pub fn op_index(&self, label: &str) -> Result<usize> {
        self.menu
            .iter()
            .position(|o| o.label == label)
            .ok_or_else(|| Error::Encoding(format!("operator {label:?} not in menu")))
    }

    /// Layer whose operator is forced, with the forced index.
    pub fn pinned(&self) -> Option<(usize, usize)> {
        self.first_layer_fixed.then_some((0, self.fixed_first_op))
    }
}
