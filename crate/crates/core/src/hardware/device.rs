use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ArchSpace, Architecture, OpKind};

/// Which hardware cost a measurement or predictor refers to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Latency,
    Energy,
}

impl MetricKind {
    pub fn unit(self) -> &'static str {
        match self {
            MetricKind::Latency => "ms",
            MetricKind::Energy => "mJ",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "latency" => Some(Self::Latency),
            "energy" => Some(Self::Energy),
            _ => None,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Latency => "latency",
            MetricKind::Energy => "energy",
        })
    }
}

/// Recipe for drawing a [`SyntheticDevice`].
///
/// An expand block of ratio `e` costs `expand_overhead + e·U(cost_low,
/// cost_high)`; skip connections cost nothing. Keeping `expand_overhead`
/// above `2·interaction_coeff` makes the all-skip network the cheapest one
/// despite its run of identical neighbours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceProfile {
    pub metric_kind: MetricKind,
    pub base_overhead: f64,
    pub cost_low: f64,
    pub cost_high: f64,
    pub expand_overhead: f64,
    pub interaction_coeff: f64,
    /// Absolute noise standard deviation, or a fraction of the mean cost of
    /// a uniformly random architecture when `noise_relative` is set.
    pub noise_sd: f64,
    pub noise_relative: bool,
}

impl Default for DeviceProfile {
    fn default() -> Self {
        Self::latency()
    }
}

impl DeviceProfile {
    pub fn latency() -> Self {
        Self {
            metric_kind: MetricKind::Latency,
            base_overhead: 11.48,
            cost_low: 0.1,
            cost_high: 2.0,
            expand_overhead: 1.2,
            interaction_coeff: 0.5,
            noise_sd: 0.05,
            noise_relative: false,
        }
    }

    /// Energy in mJ with noise at 2% of the mean.
    pub fn energy() -> Self {
        Self {
            metric_kind: MetricKind::Energy,
            base_overhead: 20.0,
            cost_low: 0.5,
            cost_high: 4.0,
            expand_overhead: 13.0,
            interaction_coeff: 6.0,
            noise_sd: 0.02,
            noise_relative: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.base_overhead >= 0.0
            && self.cost_low >= 0.0
            && self.cost_high > self.cost_low
            && self.expand_overhead >= 0.0
            && self.interaction_coeff >= 0.0
            && self.noise_sd >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid device profile {self:?}")))
        }
    }
}

/// Ground-truth cost model standing in for on-device measurement:
///
/// `cost = base + Σ_l per_op_cost[l][op_l] + interaction · #{l : op_l = op_{l+1}} + N(0, noise_sd²)`
#[derive(Clone, Debug)]
pub struct SyntheticDevice {
    metric_kind: MetricKind,
    per_op_cost: Vec<Vec<f64>>,
    base_overhead: f64,
    interaction_coeff: f64,
    noise_sd: f64,
    rng: ChaCha8Rng,
}

impl SyntheticDevice {
    pub fn new(
        metric_kind: MetricKind,
        per_op_cost: Vec<Vec<f64>>,
        base_overhead: f64,
        interaction_coeff: f64,
        noise_sd: f64,
        seed: u64,
    ) -> Result<Self> {
        let k = per_op_cost.first().map_or(0, Vec::len);
        if k == 0 || per_op_cost.iter().any(|r| r.len() != k) {
            return Err(Error::Config(
                "per-op cost table must be a non-empty rectangle".into(),
            ));
        }
        if per_op_cost.iter().flatten().any(|&c| !(c >= 0.0))
            || !(base_overhead >= 0.0 && interaction_coeff >= 0.0 && noise_sd >= 0.0)
        {
            return Err(Error::Config("device costs must be non-negative".into()));
        }
        Ok(Self {
            metric_kind,
            per_op_cost,
            base_overhead,
            interaction_coeff,
            noise_sd,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Draws a device for `space` from `profile`. The cost table and the
    /// measurement noise use separate streams derived from `seed`.
    pub fn generate(space: &ArchSpace, profile: &DeviceProfile, seed: u64) -> Result<Self> {
        space.validate()?;
        profile.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table: Vec<Vec<f64>> = (0..space.num_layers)
            .map(|_| {
                space
                    .menu
                    .iter()
                    .map(|op| match op.kind {
                        OpKind::SkipConnect => 0.0,
                        OpKind::ExpandBlock => {
                            profile.expand_overhead
                                + op.expansion_ratio as f64
                                    * rng.random_range(profile.cost_low..profile.cost_high)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut device = Self::new(
            profile.metric_kind,
            table,
            profile.base_overhead,
            profile.interaction_coeff,
            0.0,
            seed ^ 0x006e_6f69_7365,
        )?;
        device.noise_sd = if profile.noise_relative {
            profile.noise_sd * device.uniform_mean(space)
        } else {
            profile.noise_sd
        };
        Ok(device)
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.metric_kind
    }

    pub fn per_op_cost(&self) -> &[Vec<f64>] {
        &self.per_op_cost
    }

    pub fn base_overhead(&self) -> f64 {
        self.base_overhead
    }

    pub fn interaction_coeff(&self) -> f64 {
        self.interaction_coeff
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn num_layers(&self) -> usize {
        self.per_op_cost.len()
    }

    pub fn num_ops(&self) -> usize {
        self.per_op_cost[0].len()
    }

    fn check(&self, arch: &Architecture) -> Result<()> {
        if arch.num_layers() != self.num_layers() || arch.num_ops() != self.num_ops() {
            return Err(Error::Config(format!(
                "device models {}×{} architectures, got {}×{}",
                self.num_layers(),
                self.num_ops(),
                arch.num_layers(),
                arch.num_ops()
            )));
        }
        Ok(())
    }

    /// Cost without measurement noise.
    pub fn noiseless(&self, arch: &Architecture) -> Result<f64> {
        self.check(arch)?;
        let ops = arch.ops();
        let sum: f64 = ops
            .iter()
            .enumerate()
            .map(|(l, &k)| self.per_op_cost[l][k])
            .sum();
        let pairs = ops.windows(2).filter(|w| w[0] == w[1]).count();
        Ok(self.base_overhead + sum + self.interaction_coeff * pairs as f64)
    }

    /// One noisy measurement; advances the device's noise stream.
    pub fn measure(&mut self, arch: &Architecture) -> Result<f64> {
        let clean = self.noiseless(arch)?;
        Ok(clean + self.draw_noise())
    }

    /// Isolated benchmark of a single operator: its own cost plus noise,
    /// without the fixed overhead or neighbour effects.
    pub fn measure_op(&mut self, layer: usize, op: usize) -> f64 {
        let c = self.per_op_cost[layer][op];
        (c + self.draw_noise()).max(0.0)
    }

    /// Per-operator table averaged over `reps` isolated benchmarks.
    pub fn op_benchmark_table(&mut self, reps: usize) -> Vec<Vec<f64>> {
        let reps = reps.max(1);
        (0..self.num_layers())
            .map(|l| {
                (0..self.num_ops())
                    .map(|k| (0..reps).map(|_| self.measure_op(l, k)).sum::<f64>() / reps as f64)
                    .collect()
            })
            .collect()
    }

    fn draw_noise(&mut self) -> f64 {
        if self.noise_sd == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, self.noise_sd)
            .expect("noise_sd is finite and non-negative")
            .sample(&mut self.rng)
    }

    /// Exact mean noiseless cost of a uniformly random architecture in `space`.
    pub fn uniform_mean(&self, space: &ArchSpace) -> f64 {
        let k = self.num_ops() as f64;
        let pinned = space.pinned();
        let dist = |l: usize| -> Vec<f64> {
            match pinned {
                Some((pl, pk)) if pl == l => (0..self.num_ops())
                    .map(|c| if c == pk { 1.0 } else { 0.0 })
                    .collect(),
                _ => vec![1.0 / k; self.num_ops()],
            }
        };
        let mut total = self.base_overhead;
        for l in 0..self.num_layers() {
            let d = dist(l);
            total += d
                .iter()
                .zip(&self.per_op_cost[l])
                .map(|(p, c)| p * c)
                .sum::<f64>();
            if l + 1 < self.num_layers() {
                let n = dist(l + 1);
                total += self.interaction_coeff * d.iter().zip(&n).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        total
    }

    /// Exact (min, max) noiseless cost over `space`, by dynamic programming
    /// along the layer chain.
    pub fn bounds(&self, space: &ArchSpace) -> (Architecture, f64, Architecture, f64) {
        let lo = self.extreme(space, false);
        let hi = self.extreme(space, true);
        (lo.0, lo.1, hi.0, hi.1)
    }

    fn extreme(&self, space: &ArchSpace, maximize: bool) -> (Architecture, f64) {
        let (l_count, k_count) = (self.num_layers(), self.num_ops());
        let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
        let allowed = |l: usize, k: usize| space.pinned().is_none_or(|(pl, pk)| pl != l || pk == k);
        let worst = if maximize {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        let mut best = vec![vec![worst; k_count]; l_count];
        let mut back = vec![vec![0usize; k_count]; l_count];
        for (k, b) in best[0].iter_mut().enumerate() {
            if allowed(0, k) {
                *b = self.per_op_cost[0][k];
            }
        }
        for l in 1..l_count {
            for k in 0..k_count {
                if !allowed(l, k) {
                    continue;
                }
                for j in 0..k_count {
                    if !best[l - 1][j].is_finite() {
                        continue;
                    }
                    let pair = if j == k { self.interaction_coeff } else { 0.0 };
                    let v = best[l - 1][j] + pair + self.per_op_cost[l][k];
                    if better(v, best[l][k]) || !best[l][k].is_finite() {
                        best[l][k] = v;
                        back[l][k] = j;
                    }
                }
            }
        }
        let mut k = 0;
        for j in 1..k_count {
            if best[l_count - 1][j].is_finite()
                && (better(best[l_count - 1][j], best[l_count - 1][k])
                    || !best[l_count - 1][k].is_finite())
            {
                k = j;
            }
        }
        let value = best[l_count - 1][k] + self.base_overhead;
        let mut ops = vec![0; l_count];
        for l in (0..l_count).rev() {
            ops[l] = k;
            k = back[l][k];
        }
        (Architecture::new(ops, k_count).expect("in range"), value)
    }
}
