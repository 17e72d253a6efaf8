use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::hardware::{MeasurementRecord, MetricKind, SyntheticDevice};
use crate::space::ArchSpace;

const TIKHONOV: f64 = 1e-8;

/// Additive per-(layer, operator) cost table with no intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LutPredictor {
    pub metric_kind: MetricKind,
    pub table: Vec<Vec<f64>>,
}

impl LutPredictor {
    pub fn new(metric_kind: MetricKind, table: Vec<Vec<f64>>) -> Result<Self> {
        let lut = Self { metric_kind, table };
        lut.validate()?;
        Ok(lut)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.table.first().map_or(0, Vec::len);
        if k == 0 || self.table.iter().any(|r| r.len() != k) {
            return Err(Error::Validation(
                "LUT table must be a non-empty rectangle".into(),
            ));
        }
        if self.table.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("LUT table has non-finite entries".into()));
        }
        Ok(())
    }

    /// Least-squares fit on one-hot features, no intercept, solved through
    /// the damped normal equations `(XᵀX + δI)θ = Xᵀy`.
    ///
    /// Layers whose operator never varies in the data (a pinned layer) are
    /// allowed; any other layer must exercise every operator at least once.
    pub fn fit(train: &[MeasurementRecord]) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::Fit("no training records".into()))?;
        let (l_count, k_count, kind) = (
            first.arch.num_layers(),
            first.arch.num_ops(),
            first.metric_kind,
        );
        check_homogeneous(train, l_count, k_count, kind)?;

        let d = l_count * k_count;
        let mut counts = vec![0usize; d];
        let mut xtx = DMatrix::<f64>::zeros(d, d);
        let mut xty = DVector::<f64>::zeros(d);
        let mut idx = vec![0usize; l_count];
        for r in train {
            for (l, &k) in r.arch.ops().iter().enumerate() {
                idx[l] = l * k_count + k;
            }
            for &i in &idx {
                counts[i] += 1;
                xty[i] += r.value;
                for &j in &idx {
                    xtx[(i, j)] += 1.0;
                }
            }
        }

        let mut deficient = Vec::new();
        for l in 0..l_count {
            let row = &counts[l * k_count..(l + 1) * k_count];
            if row.iter().filter(|&&c| c > 0).count() > 1 {
                deficient.extend(
                    row.iter()
                        .enumerate()
                        .filter(|(_, &c)| c == 0)
                        .map(|(k, _)| (l, k)),
                );
            }
        }
        if !deficient.is_empty() {
            let cells: Vec<String> = deficient
                .iter()
                .map(|(l, k)| format!("(layer {l}, op {k})"))
                .collect();
            return Err(Error::Fit(format!(
                "no observations for cells {}",
                cells.join(", ")
            )));
        }

        for i in 0..d {
            xtx[(i, i)] += TIKHONOV;
        }
        let theta = xtx
            .cholesky()
            .ok_or_else(|| Error::Fit("normal equations are not positive definite".into()))?
            .solve(&xty);
        let table = (0..l_count)
            .map(|l| (0..k_count).map(|k| theta[l * k_count + k]).collect())
            .collect();
        Self::new(kind, table)
    }

    /// Table built from isolated per-operator benchmarks, `reps` runs each.
    /// Such a table never sees the fixed overhead or neighbour effects.
    pub fn from_benchmarks(device: &mut SyntheticDevice, reps: usize) -> Result<Self> {
        let kind = device.metric_kind();
        Self::new(kind, device.op_benchmark_table(reps))
    }

    pub fn num_layers(&self) -> usize {
        self.table.len()
    }

    pub fn num_ops(&self) -> usize {
        self.table[0].len()
    }

    fn check_shape(&self, encoding: &Tensor<f64>) -> Result<()> {
        if encoding.shape() != [self.num_layers(), self.num_ops()] {
            return Err(Error::Dimension {
                op: "lut_predict",
                lhs: vec![self.num_layers(), self.num_ops()],
                rhs: encoding.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// `Σ table ⊙ encoding`; on one-hot rows this is the table sum along the path.
    pub fn predict(&self, encoding: &Tensor<f64>) -> Result<f64> {
        self.check_shape(encoding)?;
        Ok(self
            .table
            .iter()
            .flatten()
            .zip(encoding.data())
            .map(|(t, e)| t * e)
            .sum())
    }

    /// The table itself, which is the gradient of `predict` everywhere.
    pub fn grad(&self) -> Tensor<f64> {
        Tensor::from_rows(&self.table).expect("validated rectangle")
    }

    pub fn predict_node(&self, g: &mut Graph<f64>, encoding: NodeId) -> Result<NodeId> {
        self.check_shape(g.value(encoding))?;
        let t = g.constant(self.grad());
        let prod = g.mul(encoding, t)?;
        g.sum(prod)
    }

    /// (min, max) of the table sum over `space`, respecting a pinned layer.
    pub fn bounds(&self, space: &ArchSpace) -> (f64, f64) {
        let pinned = space.pinned();
        self.table
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(lo, hi), (l, row)| match pinned {
                Some((pl, pk)) if pl == l => (lo + row[pk], hi + row[pk]),
                _ => (
                    lo + row.iter().copied().fold(f64::INFINITY, f64::min),
                    hi + row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ),
            })
    }
}

pub(crate) fn check_homogeneous(
    records: &[MeasurementRecord],
    l_count: usize,
    k_count: usize,
    kind: MetricKind,
) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        if r.arch.num_layers() != l_count || r.arch.num_ops() != k_count {
            return Err(Error::Fit(format!(
                "record {i} is {}×{}, expected {l_count}×{k_count}",
                r.arch.num_layers(),
                r.arch.num_ops()
            )));
        }
        if r.metric_kind != kind {
            return Err(Error::Fit(format!(
                "record {i} measures {}, expected {kind}",
                r.metric_kind
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Architecture;

    fn records(table: &[Vec<f64>], all: &[Vec<usize>]) -> Vec<MeasurementRecord> {
        all.iter()
            .map(|ops| MeasurementRecord {
                value: ops.iter().enumerate().map(|(l, &k)| table[l][k]).sum(),
                arch: Architecture::new(ops.clone(), table[0].len()).unwrap(),
                metric_kind: MetricKind::Latency,
            })
            .collect()
    }

    #[test]
    fn predict_is_table_sum() {
        let lut =
            LutPredictor::new(MetricKind::Latency, vec![vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
        let arch = Architecture::new(vec![1, 0], 2).unwrap();
        assert_eq!(lut.predict(&arch.encoding()).unwrap(), 5.0);
        assert!(matches!(
            lut.predict(&Tensor::zeros(&[3, 2])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn exact_recovery_through_predictions() {
        let table = vec![vec![0.5, 1.0, 2.5], vec![0.1, 0.7, 0.2]];
        let all: Vec<Vec<usize>> = (0..9).map(|i| vec![i / 3, i % 3]).collect();
        let lut = LutPredictor::fit(&records(&table, &all)).unwrap();
        for r in records(&table, &all) {
            assert!((lut.predict(&r.encoding()).unwrap() - r.value).abs() < 1e-6);
        }
    }

    #[test]
    fn unobserved_cells_are_named() {
        let table = vec![vec![0.5, 1.0, 2.5], vec![0.1, 0.7, 0.2]];
        let all = vec![vec![0, 0], vec![1, 1], vec![2, 1]];
        let err = LutPredictor::fit(&records(&table, &all))
            .unwrap_err()
            .to_string();
        assert!(err.contains("(layer 1, op 2)"), "{err}");
    }

    #[test]
    fn mixed_metric_kinds_are_rejected() {
        let table = vec![vec![0.5, 1.0]];
        let mut rs = records(&table, &[vec![0], vec![1]]);
        rs[1].metric_kind = MetricKind::Energy;
        assert!(matches!(LutPredictor::fit(&rs), Err(Error::Fit(_))));
        assert!(matches!(LutPredictor::fit(&[]), Err(Error::Fit(_))));
    }

    #[test]
    fn bounds_respect_pinned_layer() {
        let mut space = ArchSpace::desk();
        space.num_layers = 2;
        space.menu.truncate(2);
        space.fixed_first_op = 1;
        let lut =
            LutPredictor::new(MetricKind::Latency, vec![vec![0.0, 4.0], vec![1.0, 3.0]]).unwrap();
        assert_eq!(lut.bounds(&space), (5.0, 7.0));
    }
}
