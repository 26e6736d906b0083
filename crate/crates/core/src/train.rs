//! Loss, optimizer, schedule, initialization and the single-image training loop.

use std::collections::BTreeMap;
use std::fmt;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{drsan_forward, ModelConfig, ModelParams};
use crate::rng::SplitMix64;
use crate::tensor::{Float, Graph, Tensor, Var};

/// Sum of squared differences of both the initial and the refined map from
/// the ground truth: `‖M0 − D‖² + ‖Mn − D‖²`.
pub fn loss(graph: &mut Graph, m0: Var, mn: Var, target: Var) -> Result<Var> {
    let d0 = graph.sub(m0, target)?;
    let dn = graph.sub(mn, target)?;
    let l0 = graph.sum_squares(d0);
    let ln = graph.sum_squares(dn);
    graph.add(l0, ln)
}

/// Value-only [`loss`].
pub fn loss_value(m0: &Tensor, mn: &Tensor, target: &Tensor) -> Result<Float> {
    let mut g = Graph::new();
    let (a, b, d) = (g.constant(m0.clone()), g.constant(mn.clone()), g.constant(target.clone()));
    let l = loss(&mut g, a, b, d)?;
    Ok(g.value(l).data()[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Normal(0, std) rejected outside `±bound·std`; biases zero.
    TruncatedNormal { std: f64, bound: f64 },
    /// As `TruncatedNormal` with `std = gain / sqrt(fan_in)` per tensor, and
    /// `output_bias` on the rectified `M0` layer so it does not start dead.
    ScaledTruncatedNormal { gain: f64, bound: f64, output_bias: f64 },
    /// Normal with variance `1/fan_in`, random biases. Used by gradient checks
    /// so that every layer carries signal.
    FanIn { bias_std: f64 },
}

impl InitScheme {
    /// `ScaledTruncatedNormal` with unit gain, a ±2σ cut and `M0` bias 0.5.
    pub fn scaled() -> Self {
        InitScheme::ScaledTruncatedNormal {
            gain: 1.0,
            bound: 2.0,
            output_bias: 0.5,
        }
    }
}

fn fan_in(shape: &[usize]) -> usize {
    if shape.len() == 4 {
        shape[1..].iter().product()
    } else {
        shape[0]
    }
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::TruncatedNormal { std: 0.01, bound: 2.0 }
    }
}

/// Default initialization: narrow truncated normal weights, zero biases, and
/// an identity-glimpse transform head.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    init_params_with(cfg, seed, InitScheme::default())
}

pub fn init_params_with(cfg: &ModelConfig, seed: u64, scheme: InitScheme) -> ModelParams {
    let mut rng = SplitMix64::new(seed);
    let mut params = ModelParams::new();
    for (name, shape) in cfg.inventory() {
        let is_bias = name.ends_with(".b") || name.contains(".b_");
        let tensor = match scheme {
            InitScheme::TruncatedNormal { .. } | InitScheme::ScaledTruncatedNormal { .. } => {
                let (std, bound, output_bias) = match scheme {
                    InitScheme::ScaledTruncatedNormal { gain, bound, output_bias } => {
                        (gain / (fan_in(&shape) as f64).sqrt(), bound, output_bias)
                    }
                    InitScheme::TruncatedNormal { std, bound } => (std, bound, 0.0),
                    InitScheme::FanIn { .. } => unreachable!(),
                };
                if name == "head.w" {
                    Tensor::zeros(&shape)
                } else if name == "head.b" {
                    Tensor::new(&shape, cfg.head_identity_bias()).expect("head bias")
                } else if name == "init.b" {
                    Tensor::full(&shape, output_bias as Float)
                } else if is_bias {
                    Tensor::zeros(&shape)
                } else {
                    Tensor::from_fn(&shape, |_| rng.truncated_normal(std, bound) as Float)
                }
            }
            InitScheme::FanIn { bias_std } => {
                if name == "head.b" {
                    let base = cfg.head_identity_bias();
                    Tensor::from_fn(&shape, |i| base[i] + (rng.normal() * bias_std) as Float)
                } else if name == "init.b" {
                    Tensor::full(&shape, 0.5)
                } else if is_bias {
                    Tensor::from_fn(&shape, |_| (rng.normal() * bias_std) as Float)
                } else {
                    let std = (1.0 / fan_in(&shape) as f64).sqrt();
                    Tensor::from_fn(&shape, |_| (rng.normal() * std) as Float)
                }
            }
        };
        params.insert(name, tensor);
    }
    params
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates per parameter and the step count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub first: BTreeMap<String, Tensor>,
    pub second: BTreeMap<String, Tensor>,
    pub step: u64,
}

/// One bias-corrected Adam update, applied in lexicographic parameter order.
/// Gradients are validated before anything is modified.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Tensor>,
    opt: &mut OptimizerState,
    lr: f64,
    adam: &AdamConfig,
) -> Result<()> {
    for (name, param) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::MissingArray(format!("gradient for {name}")))?;
        if g.shape() != param.shape() {
            return Err(Error::dim("adam_step", name.clone(), format!("{:?} vs {:?}", g.shape(), param.shape())));
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    opt.step += 1;
    let t = opt.step as i32;
    let bias1 = 1.0 - adam.beta1.powi(t);
    let bias2 = 1.0 - adam.beta2.powi(t);
    let (b1, b2, eps) = (adam.beta1 as Float, adam.beta2 as Float, adam.eps as Float);
    let (c1, c2, lr) = (bias1 as Float, bias2 as Float, lr as Float);

    for (name, param) in params.iter_mut() {
        let g = &grads[name];
        let m = opt
            .first
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(param.shape()));
        let v = opt
            .second
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(param.shape()));
        let (m, v) = (m.data_mut(), v.data_mut());
        for (i, (p, &gi)) in param.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Global L2 norm over all gradients.
pub fn global_norm(grads: &BTreeMap<String, Tensor>) -> f64 {
    grads
        .values()
        .flat_map(|t| t.data().iter())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Multiplicative decay applied every `decay_every` iterations.
    pub decay: f64,
    pub decay_every: usize,
    pub adam: AdamConfig,
    pub iterations: usize,
    /// Refinement steps `n`.
    pub steps: usize,
    pub seed: u64,
    pub init: InitScheme,
    pub log_every: usize,
    /// Rescale gradients whose global norm exceeds this.
    pub clip_norm: Option<f64>,
    /// Emit a checkpoint event every this many iterations.
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            decay: 0.98,
            decay_every: 1000,
            adam: AdamConfig::default(),
            iterations: 2000,
            steps: 4,
            seed: 7,
            init: InitScheme::default(),
            log_every: 100,
            clip_norm: None,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::Contract(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if self.decay_every == 0 || self.log_every == 0 {
            return Err(Error::Contract("decay_every and log_every must be positive".into()));
        }
        Ok(())
    }
}

/// `lr0 · decay^floor(iter / decay_every)`.
pub fn lr_at(iter: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.decay.powi((iter / cfg.decay_every) as i32)
}

/// One line of the metrics log: means over the iterations since the previous line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    /// Iterations completed.
    pub iter: usize,
    pub loss: f64,
    /// Mean absolute count error of `M0`.
    pub mae0: f64,
    /// Mean absolute count error of `Mn`.
    pub maen: f64,
    pub lr: f64,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:.9e} {:.6} {:.6} {:.9e}",
            self.iter, self.loss, self.mae0, self.maen, self.lr
        )
    }
}

pub enum TrainEvent<'a> {
    Log(&'a LogRecord),
    Checkpoint { iter: usize, params: &'a ModelParams },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<LogRecord>,
    pub optimizer: OptimizerState,
}

impl TrainOutcome {
    /// The metrics log as text, one record per line.
    pub fn log_text(&self) -> String {
        self.log.iter().map(|r| format!("{r}\n")).collect()
    }
}

/// Single-image Adam training from [`init_params_with`]`(cfg.init)`.
pub fn train(
    model: &ModelConfig,
    cfg: &TrainConfig,
    samples: &[Sample],
    observer: impl FnMut(TrainEvent<'_>),
) -> Result<TrainOutcome> {
    let params = init_params_with(model, cfg.seed, cfg.init);
    train_from(model, cfg, samples, params, observer)
}

/// Training starting from the given parameters.
pub fn train_from(
    model: &ModelConfig,
    cfg: &TrainConfig,
    samples: &[Sample],
    mut params: ModelParams,
    mut observer: impl FnMut(TrainEvent<'_>),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    params.check_inventory(model)?;

    let mut opt = OptimizerState::default();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut order_rng = SplitMix64::new(cfg.seed ^ 0x0005_EED0_0DE5);
    let (mut sum_loss, mut sum_e0, mut sum_en, mut window) = (0.0, 0.0, 0.0, 0usize);

    for iter in 0..cfg.iterations {
        let pos = iter % samples.len();
        if pos == 0 {
            order_rng.shuffle(&mut order);
        }
        let sample = &samples[order[pos]];

        let mut graph = Graph::new();
        let bound = params.bind(&mut graph, true);
        let x = graph.constant(sample.image.clone());
        let out = drsan_forward(&mut graph, &bound, model, x, cfg.steps)?;
        let target = graph.constant(sample.target.clone());
        let l = loss(&mut graph, out.m0, out.mn, target)?;
        let loss_val = graph.value(l).data()[0] as f64;
        if !loss_val.is_finite() {
            return Err(Error::Diverged { iter, loss: loss_val });
        }
        let truth = sample.count();
        sum_e0 += (graph.value(out.m0).sum() as f64 - truth).abs();
        sum_en += (graph.value(out.mn).sum() as f64 - truth).abs();
        sum_loss += loss_val;
        window += 1;

        graph.backward(l)?;
        let mut grads = bound.gradients(&graph);
        drop(graph);
        if let Some(max_norm) = cfg.clip_norm {
            let norm = global_norm(&grads);
            if norm > max_norm {
                let s = (max_norm / norm) as Float;
                for g in grads.values_mut() {
                    g.data_mut().iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        let lr = lr_at(iter, cfg);
        adam_step(&mut params, &grads, &mut opt, lr, &cfg.adam)?;

        let done = iter + 1;
        if done % cfg.log_every == 0 || done == cfg.iterations {
            let n = window as f64;
            let record = LogRecord {
                iter: done,
                loss: sum_loss / n,
                mae0: sum_e0 / n,
                maen: sum_en / n,
                lr,
            };
            observer(TrainEvent::Log(&record));
            log.push(record);
            (sum_loss, sum_e0, sum_en, window) = (0.0, 0.0, 0.0, 0);
        }
        if cfg.checkpoint_every.is_some_and(|k| k > 0 && done % k == 0) {
            observer(TrainEvent::Checkpoint {
                iter: done,
                params: &params,
            });
        }
    }
    Ok(TrainOutcome {
        params,
        log,
        optimizer: opt,
    })
}
