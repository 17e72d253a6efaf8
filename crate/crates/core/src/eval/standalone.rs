use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::eval::Splits;
use crate::hardware::{Predictor, SyntheticDevice};
use crate::optim::{warmup_cosine_lr, Sgd};
use crate::search::stream;
use crate::space::{ArchSpace, Architecture, Binding, Route, Supernet};

pub const REPORT_HEADER: &str = "arch_id,T_ms,seed,top1,pred_latency_ms,meas_latency_ms,wall_s";

const STREAM_INIT: u64 = 0;
const STREAM_BATCH: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

/// Recipe for training a searched architecture from scratch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate, reached after the warm-up and then cosine-decayed.
    pub lr: f64,
    /// Learning rate at the first warm-up step.
    pub lr_start: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    /// Dropout rate before the classification head.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl EvalConfig {
    pub fn desk() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            lr: 0.05,
            lr_start: 0.01,
            momentum: 0.9,
            weight_decay: 4e-5,
            warmup_epochs: 2,
            dropout: 0.2,
            seed: 0,
        }
    }

    /// 360 epochs, batch 1024, lr warmed from 0.1 to 0.5 over 5 epochs.
    pub fn paper() -> Self {
        Self {
            epochs: 360,
            batch_size: 1024,
            lr: 0.5,
            lr_start: 0.1,
            warmup_epochs: 5,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("eval epochs and batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.lr > 0.0
            && self.lr.is_finite()
            && self.lr_start >= 0.0
            && self.lr_start.is_finite())
        {
            return fail(format!(
                "bad eval learning rates {} / {}",
                self.lr_start, self.lr
            ));
        }
        if !(self.momentum.is_finite() && self.weight_decay.is_finite()) {
            return fail("non-finite eval hyper-parameter".into());
        }
        Ok(())
    }
}

/// Outcome of one stand-alone training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub arch_id: String,
    /// Target the architecture was searched for; NaN when none.
    pub target_ms: f64,
    pub seed: u64,
    pub train_acc: f64,
    pub top1: f64,
    /// NaN without predictor.
    pub pred_latency_ms: f64,
    /// NaN without device.
    pub meas_latency_ms: f64,
    pub wall_s: f64,
}

/// Trains `arch` from scratch on `data.train` and scores it on
/// `data.valid`, using the same single-path forward as the search.
pub fn train_standalone(
    space: &ArchSpace,
    arch: &Architecture,
    data: &Splits,
    cfg: &EvalConfig,
    predictor: Option<&Predictor>,
    device: Option<&mut SyntheticDevice>,
) -> Result<EvalReport> {
    Ok(train_network(space, arch, data, cfg, predictor, device)?.1)
}

/// [`train_standalone`] that also hands back the trained network.
pub fn train_network(
    space: &ArchSpace,
    arch: &Architecture,
    data: &Splits,
    cfg: &EvalConfig,
    predictor: Option<&Predictor>,
    device: Option<&mut SyntheticDevice>,
) -> Result<(Supernet<f64>, EvalReport)> {
    cfg.validate()?;
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(Error::Config(
            "evaluation needs non-empty training and validation splits".into(),
        ));
    }
    let start = Instant::now();
    let mut net = Supernet::standalone(
        space,
        arch,
        data.train.dim(),
        data.train.classes(),
        &mut stream(cfg.seed, STREAM_INIT),
    )?;
    let mut batch_rng = stream(cfg.seed, STREAM_BATCH);
    let mut drop_rng = stream(cfg.seed, STREAM_DROPOUT);
    let mut sgd = Sgd::new(cfg.momentum, cfg.weight_decay);
    let per_epoch = data.train.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * per_epoch;
    let warmup = cfg.warmup_epochs * per_epoch;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut batch_rng);
        for b in order.chunks(cfg.batch_size) {
            let (x, y) = data.train.batch(b)?;
            let mut g = Graph::new();
            let xn = g.constant(x);
            let route = Route::Path {
                ops: arch.ops(),
                gates: None,
            };
            let pass = net.forward(
                &mut g,
                xn,
                route,
                Binding::Trainable,
                Some((cfg.dropout, &mut drop_rng)),
            )?;
            let loss = g.cross_entropy(pass.logits, &y)?;
            if !g.value(loss).item().is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: "non-finite training loss".into(),
                    history: Vec::new(),
                });
            }
            g.backward(loss)?;
            let grads = net.gradients(&g, &pass);
            let lr = warmup_cosine_lr(cfg.lr, cfg.lr_start, step, warmup, total);
            sgd.step(net.params_mut(), &grads, lr)?;
            step += 1;
        }
    }
    let train_acc = data
        .train
        .accuracy(&net.predict(data.train.x(), arch.ops())?);
    let top1 = data
        .valid
        .accuracy(&net.predict(data.valid.x(), arch.ops())?);
    let pred_latency_ms = match predictor {
        Some(p) => p.predict_arch(arch)?,
        None => f64::NAN,
    };
    let meas_latency_ms = match device {
        Some(d) => d.measure(arch)?,
        None => f64::NAN,
    };
    let report = EvalReport {
        arch_id: arch.id(space),
        target_ms: f64::NAN,
        seed: cfg.seed,
        train_acc,
        top1,
        pred_latency_ms,
        meas_latency_ms,
        wall_s: start.elapsed().as_secs_f64(),
    };
    Ok((net, report))
}

/// Writes reports as CSV. `wall_s` is written only when `with_wall` is set,
/// since it is the one column that differs between identical reruns.
pub fn write_reports<W: Write>(mut w: W, rows: &[EvalReport], with_wall: bool) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        let wall = if with_wall {
            r.wall_s.to_string()
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.arch_id, r.target_ms, r.seed, r.top1, r.pred_latency_ms, r.meas_latency_ms, wall
        )?;
    }
    Ok(())
}
