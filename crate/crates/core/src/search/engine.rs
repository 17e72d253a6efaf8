use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::eval::{Dataset, Splits};
use crate::hardware::Predictor;
use crate::optim::{cosine_lr, Adam, Sgd};
use crate::search::{anneal_tau, step_lambda, Objective, PathMode, SearchConfig};
use crate::space::{
    gumbel_noise, relaxed_sample, ArchParams, ArchSpace, Architecture, Binding, ForwardStats,
    Route, Supernet,
};

pub const HISTORY_HEADER: &str = "epoch,valid_loss,pred_latency_ms,lambda,tau";

/// Random streams of one search, all derived from the config seed.
const STREAM_INIT: u64 = 0;
const STREAM_GUMBEL: u64 = 1;
const STREAM_BATCH: u64 = 2;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-epoch log entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    /// Cross-entropy of the finalized path on the architecture fold.
    pub valid_loss: f64,
    /// Predicted cost of `finalize(α)`; NaN without a predictor.
    pub pred_latency_ms: f64,
    pub lambda: f64,
    pub tau: f64,
    /// Mean predicted cost of the sampled paths used by the α steps.
    pub sampled_latency_ms: f64,
}

pub fn write_history<W: Write>(mut w: W, rows: &[HistoryRow]) -> Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.epoch, r.valid_loss, r.pred_latency_ms, r.lambda, r.tau
        )?;
    }
    Ok(())
}

/// Builds the architecture objective from its cross-entropy node and,
/// in hardware-aware modes, the predicted-cost node.
pub fn objective_value(
    g: &mut Graph<f64>,
    ce: NodeId,
    latency: Option<NodeId>,
    lambda: f64,
    cfg: &SearchConfig,
) -> Result<NodeId> {
    let need = |lat: Option<NodeId>| {
        lat.ok_or_else(|| {
            Error::Config(format!(
                "{:?} objective needs a latency predictor",
                cfg.objective
            ))
        })
    };
    match cfg.objective {
        Objective::AccuracyOnly => Ok(ce),
        Objective::FixedLambda => {
            let lat = need(latency)?;
            let pen = g.scale(lat, cfg.lambda_fixed)?;
            g.add(ce, pen)
        }
        Objective::LearnableLambda => {
            let lat = need(latency)?;
            let ratio = g.scale(lat, 1.0 / cfg.target_latency)?;
            let one = g.constant(Tensor::full(g.value(ratio).shape(), 1.0));
            let excess = g.sub(ratio, one)?;
            let pen = g.scale(excess, lambda)?;
            g.add(ce, pen)
        }
    }
}

/// Nodes of one architecture-step objective.
#[derive(Clone, Debug)]
pub struct AlphaObjective {
    pub objective: NodeId,
    pub ce: NodeId,
    pub latency: Option<NodeId>,
    /// Operators executed in single-path mode (argmax of P in multipath).
    pub ops: Vec<usize>,
    pub stats: ForwardStats,
}

/// Builds the α objective on `g` for one batch, reading α from `alpha`.
///
/// Single-path mode needs the Gumbel draw `noise` and temperature `tau`;
/// multipath mode mixes every operator by softmax(α) and ignores both.
#[allow(clippy::too_many_arguments)]
pub fn alpha_objective(
    g: &mut Graph<f64>,
    alpha: NodeId,
    net: &Supernet<f64>,
    x: &Tensor<f64>,
    y: &[usize],
    predictor: Option<&Predictor>,
    lambda: f64,
    cfg: &SearchConfig,
    noise: Option<&Tensor<f64>>,
    tau: f64,
) -> Result<AlphaObjective> {
    let space = net.space();
    let xn = g.constant(x.clone());
    let (pass, encoding, ops) = match cfg.path_mode {
        PathMode::SinglePath => {
            let noise = noise.ok_or_else(|| {
                Error::Contract("single-path objective needs Gumbel noise".into())
            })?;
            let s = relaxed_sample(g, alpha, noise, tau, cfg.noise_target, space.pinned())?;
            let route = Route::Path {
                ops: &s.ops,
                gates: Some(s.hard),
            };
            let pass = net.forward::<ChaCha8Rng>(g, xn, route, Binding::Frozen, None)?;
            (pass, s.hard, s.ops)
        }
        PathMode::Multipath => {
            let probs = g.softmax_rows(alpha)?;
            let pass = net.forward::<ChaCha8Rng>(
                g,
                xn,
                Route::Mixture { weights: probs },
                Binding::Frozen,
                None,
            )?;
            let ops = g.value(probs).argmax_rows();
            (pass, probs, ops)
        }
    };
    let ce = g.cross_entropy(pass.logits, y)?;
    let latency = match (cfg.needs_predictor(), predictor) {
        (true, Some(p)) => Some(p.predict_node(g, encoding)?),
        _ => None,
    };
    let objective = objective_value(g, ce, latency, lambda, cfg)?;
    Ok(AlphaObjective {
        objective,
        ce,
        latency,
        ops,
        stats: pass.stats,
    })
}

/// Everything a search mutates.
#[derive(Clone, Debug)]
pub struct SearchState {
    pub net: Supernet<f64>,
    pub alpha: ArchParams<f64>,
    pub lambda: f64,
    pub tau: f64,
    pub epoch: usize,
    pub history: Vec<HistoryRow>,
    sgd: Sgd<f64>,
    adam: Adam<f64>,
    gumbel_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
    w_steps: usize,
    total_w_steps: usize,
    /// Forward statistics of the latest step.
    pub last_stats: ForwardStats,
}

impl SearchState {
    pub fn new(
        space: &ArchSpace,
        input_dim: usize,
        classes: usize,
        cfg: &SearchConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut init = stream(cfg.seed, STREAM_INIT);
        let net = Supernet::new(space, input_dim, classes, &mut init)?;
        let (l, k) = (space.num_layers, space.ops_per_layer());
        let pinned = space.pinned();
        let data = (0..l * k)
            .map(|i| {
                let v = if cfg.alpha_init > 0.0 {
                    init.random_range(-cfg.alpha_init..cfg.alpha_init)
                } else {
                    0.0
                };
                if pinned.is_some_and(|(pl, _)| pl == i / k) {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        Ok(Self {
            net,
            alpha: ArchParams::new(Tensor::new(vec![l, k], data)?)?,
            lambda: cfg.lambda_init,
            tau: cfg.tau_init,
            epoch: 0,
            history: Vec::new(),
            sgd: Sgd::new(cfg.momentum_w, cfg.wd_w),
            adam: Adam::new(cfg.wd_alpha),
            gumbel_rng: stream(cfg.seed, STREAM_GUMBEL),
            batch_rng: stream(cfg.seed, STREAM_BATCH),
            w_steps: 0,
            total_w_steps: 0,
            last_stats: ForwardStats::default(),
        })
    }

    pub fn space(&self) -> &ArchSpace {
        self.net.space()
    }

    pub fn finalize(&self) -> Architecture {
        self.alpha.finalize(self.space())
    }

    fn sample_ops(&mut self, cfg: &SearchConfig) -> Result<Vec<usize>> {
        let mut ops = self
            .alpha
            .gumbel_sample(self.tau, cfg.noise_target, &mut self.gumbel_rng)?
            .ops;
        if let Some((l, k)) = self.space().pinned() {
            ops[l] = k;
        }
        Ok(ops)
    }

    /// One momentum-SGD step on the supernet weights; single-path mode
    /// trains only the operators of a freshly sampled path.
    pub fn step_w(&mut self, x: &Tensor<f64>, y: &[usize], cfg: &SearchConfig) -> Result<f64> {
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let ops;
        let route = match cfg.path_mode {
            PathMode::SinglePath => {
                ops = self.sample_ops(cfg)?;
                Route::Path {
                    ops: &ops,
                    gates: None,
                }
            }
            PathMode::Multipath => {
                let w = g.constant(self.alpha.layer_probs());
                Route::Mixture { weights: w }
            }
        };
        let pass = self
            .net
            .forward::<ChaCha8Rng>(&mut g, xn, route, Binding::Trainable, None)?;
        let loss = g.cross_entropy(pass.logits, y)?;
        g.backward(loss)?;
        let grads = self.net.gradients(&g, &pass);
        let lr = cosine_lr(cfg.lr_w, self.w_steps, self.total_w_steps.max(1));
        self.sgd.step(self.net.params_mut(), &grads, lr)?;
        self.w_steps += 1;
        self.last_stats = pass.stats;
        Ok(g.value(loss).item())
    }

    /// One Adam step on α through the straight-through estimator. In the
    /// learnable mode the multiplier takes its ascent step here as well,
    /// from the finalized architecture's predicted cost before α moves.
    ///
    /// Returns the sampled path's predicted cost (NaN without predictor).
    pub fn step_alpha(
        &mut self,
        x: &Tensor<f64>,
        y: &[usize],
        predictor: Option<&Predictor>,
        cfg: &SearchConfig,
    ) -> Result<f64> {
        if cfg.needs_predictor() && predictor.is_none() {
            return Err(Error::Config(format!(
                "{:?} objective needs a latency predictor",
                cfg.objective
            )));
        }
        let (l_count, k_count) = (self.alpha.num_layers(), self.alpha.num_ops());
        let noise = match cfg.path_mode {
            PathMode::SinglePath => Some(gumbel_noise(l_count, k_count, &mut self.gumbel_rng)),
            PathMode::Multipath => None,
        };
        let mut g = Graph::new();
        let a = g.param(self.alpha.alpha().clone());
        let obj = alpha_objective(
            &mut g,
            a,
            &self.net,
            x,
            y,
            predictor,
            self.lambda,
            cfg,
            noise.as_ref(),
            self.tau,
        )?;
        g.backward(obj.objective)?;
        let mut grad = g
            .grad(a)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&[l_count, k_count]));
        if let Some((pl, _)) = self.space().pinned() {
            grad.data_mut()[pl * k_count..(pl + 1) * k_count].fill(0.0);
        }
        let sampled = obj.latency.map_or(f64::NAN, |n| g.value(n).item());

        if cfg.objective == Objective::LearnableLambda {
            let p = predictor.expect("checked above");
            let lat = p.predict_arch(&self.finalize())?;
            self.lambda = step_lambda(self.lambda, lat, cfg.target_latency, cfg.lr_lambda);
            if !self.lambda.is_finite() {
                return Err(Error::NonFinite { op: "step_lambda" });
            }
        }
        let mut params = [self.alpha.alpha().clone()];
        self.adam.step(&mut params, &[Some(grad)], cfg.lr_alpha)?;
        let [alpha] = params;
        self.alpha = ArchParams::new(alpha)?;
        self.last_stats = obj.stats;
        Ok(sampled)
    }

    /// Cross-entropy of the finalized path over a whole dataset.
    pub fn eval_loss(&self, data: &Dataset) -> Result<f64> {
        let logits = self.net.predict(data.x(), self.finalize().ops())?;
        let mut g = Graph::new();
        let l = g.constant(logits);
        let ce = g.cross_entropy(l, data.y())?;
        Ok(g.value(ce).item())
    }

    fn batches(&mut self, n: usize, size: usize) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.batch_rng);
        idx.chunks(size).map(<[usize]>::to_vec).collect()
    }
}

/// Result of [`run_search`].
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub arch: Architecture,
    pub history: Vec<HistoryRow>,
    pub state: SearchState,
    /// Predicted cost of `arch`; NaN without predictor.
    pub final_latency: f64,
    pub wall_s: f64,
}

/// Warm-up, then alternating epochs: weight steps over the training fold,
/// then architecture steps over the validation fold. Deterministic in the
/// config seed. On a non-finite loss the search aborts with
/// [`Error::Divergence`], which carries the history so far.
pub fn run_search(
    space: &ArchSpace,
    cfg: &SearchConfig,
    data: &Splits,
    predictor: Option<&Predictor>,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    if cfg.needs_predictor() && predictor.is_none() {
        return Err(Error::Config(format!(
            "{:?} objective needs a latency predictor",
            cfg.objective
        )));
    }
    if let Some(p) = predictor {
        if p.num_layers() != space.num_layers || p.num_ops() != space.ops_per_layer() {
            return Err(Error::Config(format!(
                "predictor covers {}×{} encodings, space is {}×{}",
                p.num_layers(),
                p.num_ops(),
                space.num_layers,
                space.ops_per_layer()
            )));
        }
    }
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(Error::Config(
            "search needs non-empty training and validation folds".into(),
        ));
    }
    let start = Instant::now();
    let mut st = SearchState::new(space, data.train.dim(), data.train.classes(), cfg)?;
    st.total_w_steps = cfg.epochs * data.train.len().div_ceil(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        st.epoch = epoch;
        st.tau = anneal_tau(epoch, cfg);
        let res = run_epoch(&mut st, epoch, cfg, data, predictor);
        match res {
            Ok(row) => st.history.push(row),
            Err(e) if is_divergence(&e) => {
                return Err(Error::Divergence {
                    epoch,
                    detail: e.to_string(),
                    history: st.history,
                })
            }
            Err(e) => return Err(e),
        }
    }
    let arch = st.finalize();
    let final_latency = match predictor {
        Some(p) => p.predict_arch(&arch)?,
        None => f64::NAN,
    };
    Ok(SearchOutcome {
        arch,
        history: st.history.clone(),
        state: st,
        final_latency,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::Domain { .. })
}

fn run_epoch(
    st: &mut SearchState,
    epoch: usize,
    cfg: &SearchConfig,
    data: &Splits,
    predictor: Option<&Predictor>,
) -> Result<HistoryRow> {
    for b in st.batches(data.train.len(), cfg.batch_size) {
        let (x, y) = data.train.batch(&b)?;
        let loss = st.step_w(&x, &y, cfg)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                op: "cross_entropy",
            });
        }
    }
    let mut sampled = Vec::new();
    if epoch >= cfg.warmup_epochs {
        for b in st.batches(data.valid.len(), cfg.batch_size) {
            let (x, y) = data.valid.batch(&b)?;
            sampled.push(st.step_alpha(&x, &y, predictor, cfg)?);
        }
    }
    let valid_loss = st.eval_loss(&data.valid)?;
    if !valid_loss.is_finite() {
        return Err(Error::NonFinite {
            op: "cross_entropy",
        });
    }
    let pred_latency_ms = match predictor {
        Some(p) => p.predict_arch(&st.finalize())?,
        None => f64::NAN,
    };
    let sampled_latency_ms = if sampled.is_empty() {
        f64::NAN
    } else {
        sampled.iter().sum::<f64>() / sampled.len() as f64
    };
    Ok(HistoryRow {
        epoch,
        valid_loss,
        pred_latency_ms,
        lambda: st.lambda,
        tau: st.tau,
        sampled_latency_ms,
    })
}
