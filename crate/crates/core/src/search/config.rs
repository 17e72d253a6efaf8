use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::NoiseTarget;

/// What the architecture step minimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Validation cross-entropy alone.
    AccuracyOnly,
    /// `CE + λ_fixed · LAT(α)`.
    FixedLambda,
    /// `CE + λ · (LAT(α)/T − 1)` with λ learned by gradient ascent.
    #[default]
    LearnableLambda,
}

/// How the supernet is relaxed during search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    /// One Gumbel-sampled operator per layer, straight-through gradients.
    #[default]
    SinglePath,
    /// Every operator runs, mixed by softmax(α); the differentiable baseline.
    Multipath,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub objective: Objective,
    pub path_mode: PathMode,
    /// Target cost T, in the predictor's units.
    pub target_latency: f64,
    pub lambda_fixed: f64,
    pub lambda_init: f64,
    pub epochs: usize,
    /// Leading epochs that train weights only.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr_w: f64,
    pub momentum_w: f64,
    pub wd_w: f64,
    pub lr_alpha: f64,
    pub wd_alpha: f64,
    pub lr_lambda: f64,
    pub tau_init: f64,
    pub tau_min: f64,
    /// Half-width of the uniform initialization of α.
    pub alpha_init: f64,
    pub noise_target: NoiseTarget,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SearchConfig {
    /// Minutes-scale defaults for the desk search space.
    pub fn desk() -> Self {
        Self {
            objective: Objective::LearnableLambda,
            path_mode: PathMode::SinglePath,
            target_latency: 24.0,
            lambda_fixed: 0.0,
            lambda_init: 0.0,
            epochs: 20,
            warmup_epochs: 3,
            batch_size: 64,
            lr_w: 0.05,
            momentum_w: 0.9,
            wd_w: 3e-5,
            lr_alpha: 0.05,
            wd_alpha: 0.05,
            lr_lambda: 0.1,
            tau_init: 5.0,
            tau_min: 0.01,
            alpha_init: 1e-3,
            noise_target: NoiseTarget::LogProbs,
            seed: 0,
        }
    }

    /// The full-scale recipe: 90 epochs with 10 of warm-up, batch 128,
    /// weights at lr 0.1, α at lr 0.001 with decay 1e-3, λ at lr 0.0005.
    pub fn paper() -> Self {
        Self {
            epochs: 90,
            warmup_epochs: 10,
            batch_size: 128,
            lr_w: 0.1,
            lr_alpha: 0.001,
            wd_alpha: 1e-3,
            lr_lambda: 0.0005,
            ..Self::desk()
        }
    }

    pub fn needs_predictor(&self) -> bool {
        self.objective != Objective::AccuracyOnly
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs <= self.warmup_epochs {
            return fail(format!(
                "epochs ({}) must exceed warmup_epochs ({})",
                self.epochs, self.warmup_epochs
            ));
        }
        if self.objective == Objective::LearnableLambda
            && !(self.target_latency > 0.0 && self.target_latency.is_finite())
        {
            return fail(format!(
                "target_latency must be positive, got {}",
                self.target_latency
            ));
        }
        for (name, v) in [
            ("lr_w", self.lr_w),
            ("lr_alpha", self.lr_alpha),
            ("lr_lambda", self.lr_lambda),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.tau_init > self.tau_min && self.tau_min > 0.0 && self.tau_init.is_finite()) {
            return fail(format!(
                "need tau_init > tau_min > 0, got {} and {}",
                self.tau_init, self.tau_min
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        let finite = [
            self.lambda_fixed,
            self.lambda_init,
            self.momentum_w,
            self.wd_w,
            self.wd_alpha,
            self.alpha_init,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.alpha_init < 0.0 {
            return fail("non-finite search hyper-parameter".into());
        }
        Ok(())
    }
}

/// Exponential decay from `tau_init` at epoch 0 to `tau_min` at the last
/// epoch, floored at `tau_min`.
pub fn anneal_tau(epoch: usize, cfg: &SearchConfig) -> f64 {
    if cfg.epochs <= 1 {
        return cfg.tau_init;
    }
    let r = (cfg.tau_init / cfg.tau_min).ln() / (cfg.epochs - 1) as f64;
    (cfg.tau_init * (-r * epoch as f64).exp()).max(cfg.tau_min)
}

/// One ascent step on the multiplier: `λ + η · (LAT/T − 1)`.
pub fn step_lambda(lambda: f64, latency: f64, target: f64, eta: f64) -> f64 {
    lambda + eta * (latency / target - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_schedule_endpoints_and_monotone() {
        let cfg = SearchConfig::desk();
        assert_eq!(anneal_tau(0, &cfg), 5.0);
        assert!((anneal_tau(cfg.epochs - 1, &cfg) - 0.01).abs() < 1e-12);
        let taus: Vec<f64> = (0..cfg.epochs).map(|e| anneal_tau(e, &cfg)).collect();
        assert!(taus.windows(2).all(|w| w[1] <= w[0]));
        assert!(taus.iter().all(|&t| (0.01..=5.0).contains(&t)));
    }

    #[test]
    fn lambda_step_arithmetic() {
        let l = step_lambda(0.1, 26.0, 24.0, 0.0005);
        assert_eq!(l, 0.1 + 0.0005 * (26.0 / 24.0 - 1.0));
        assert!((l - 0.1000417).abs() < 1e-7);
        assert_eq!(step_lambda(0.1, 24.0, 24.0, 0.0005), 0.1);
        assert!(step_lambda(0.1, 20.0, 24.0, 0.0005) < 0.1);
    }

    #[test]
    fn presets_validate() {
        SearchConfig::desk().validate().unwrap();
        SearchConfig::paper().validate().unwrap();
        let bad = SearchConfig {
            warmup_epochs: 20,
            ..SearchConfig::desk()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = SearchConfig {
            tau_min: 6.0,
            ..SearchConfig::desk()
        };
        assert!(bad.validate().is_err());
    }
}
