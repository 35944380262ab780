//! Certified training: losses over exact and worst-case logits, the κ/ε
//! schedule, Adam with decoupled weight decay, and the mini-batch loop.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::circuit::{argmax, simulate, CircuitSpec, Params};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::propagation::{certify_sample, propagate_bounds, Arithmetic, BoundConfig, BoundedLogits};
use crate::scalar::{sum, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `κ·CE(exact) + (1−κ)·CE(worst case)`.
    CombinedCe,
    /// `κ·CE(exact) + (1−κ)·max(0, γ − margin)`.
    #[default]
    Margin,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::CombinedCe => "combined_ce",
            LossKind::Margin => "margin",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "combined_ce" | "combined" | "ce" => Ok(LossKind::CombinedCe),
            "margin" => Ok(LossKind::Margin),
            other => Err(Error::usage(format!(
                "unknown loss '{other}' (expected combined_ce or margin)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub target_kappa: f64,
    pub target_epsilon: f64,
    pub warmup_epochs: usize,
    pub ramp_epochs: usize,
    pub loss_kind: LossKind,
    pub gamma: f64,
    pub seed: u64,
    pub arithmetic: Arithmetic,
    pub perturb_imag: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.005,
            weight_decay: 0.01,
            batch_size: 64,
            target_kappa: 0.5,
            target_epsilon: 0.001,
            warmup_epochs: 5,
            ramp_epochs: 15,
            loss_kind: LossKind::Margin,
            gamma: 0.2,
            seed: 0,
            arithmetic: Arithmetic::Affine,
            perturb_imag: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::usage(msg));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.warmup_epochs + self.ramp_epochs > self.epochs {
            return bad(format!(
                "warmup ({}) + ramp ({}) exceeds epochs ({})",
                self.warmup_epochs, self.ramp_epochs, self.epochs
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.target_kappa) {
            return bad(format!("target_kappa must be in [0, 1], got {}", self.target_kappa));
        }
        if !(self.target_epsilon.is_finite() && self.target_epsilon >= 0.0) {
            return bad(format!(
                "target_epsilon must be non-negative, got {}",
                self.target_epsilon
            ));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        Ok(())
    }

    pub fn bound_config(&self) -> BoundConfig {
        BoundConfig {
            arithmetic: self.arithmetic,
            perturb_imag: self.perturb_imag,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub epoch: usize,
    pub kappa: f64,
    pub epsilon: f64,
}

/// `κ = 1, ε = 0` during warmup, then a linear ramp reaching the targets on
/// the last ramp epoch, then the targets.
pub fn schedule(epoch: usize, config: &TrainConfig) -> Result<ScheduleState> {
    if epoch >= config.epochs {
        return Err(Error::usage(format!(
            "epoch {epoch} out of range for {} epochs",
            config.epochs
        )));
    }
    let frac = if epoch < config.warmup_epochs {
        0.0
    } else if config.ramp_epochs == 0 {
        1.0
    } else {
        ((epoch - config.warmup_epochs + 1) as f64 / config.ramp_epochs as f64).min(1.0)
    };
    Ok(ScheduleState {
        epoch,
        kappa: 1.0 - frac * (1.0 - config.target_kappa),
        epsilon: frac * config.target_epsilon,
    })
}

/// Lower bound for the true class, upper bound for every other class.
pub fn worst_case_logits<T: Scalar>(bounds: &BoundedLogits<T>, true_class: usize) -> Result<Vec<T>> {
    check_class(bounds.len(), true_class)?;
    Ok(bounds.worst_case(true_class))
}

fn check_class(n_classes: usize, true_class: usize) -> Result<()> {
    if true_class >= n_classes {
        return Err(Error::usage(format!(
            "class {true_class} out of range for {n_classes} classes"
        )));
    }
    Ok(())
}

/// Softmax cross-entropy, shifted by the largest logit before exponentiating.
pub fn cross_entropy<T: Scalar>(logits: &[T], true_class: usize) -> Result<T> {
    if logits.len() < 2 {
        return Err(Error::usage("cross-entropy needs at least two classes"));
    }
    check_class(logits.len(), true_class)?;
    let shift = logits
        .iter()
        .map(|z| z.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = T::constant(shift);
    let total = sum(logits.iter().map(|&z| (z - shift).exp()));
    Ok(shift + total.ln() - logits[true_class])
}

/// `lo_y − max_{j≠y} hi_j`.
pub fn margin<T: Scalar>(bounds: &BoundedLogits<T>, true_class: usize) -> Result<T> {
    check_class(bounds.len(), true_class)?;
    if bounds.len() < 2 {
        return Err(Error::usage("margin needs at least two classes"));
    }
    let others = bounds
        .bounds
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != true_class)
        .map(|(_, b)| b.hi());
    let mut it = others;
    let first = it.next().expect("at least one other class");
    let worst = it.fold(first, |acc, h| acc.max(h));
    Ok(bounds.bounds[true_class].lo() - worst)
}

/// Robust training objective for one sample. With `κ = 1` this is exactly the
/// clean cross-entropy and the bounds are not read.
pub fn loss<T: Scalar>(
    bounds: &BoundedLogits<T>,
    exact_logits: &[T],
    true_class: usize,
    kappa: f64,
    kind: LossKind,
    gamma: f64,
) -> Result<T> {
    let clean = cross_entropy(exact_logits, true_class)?;
    if kappa == 1.0 {
        return Ok(clean);
    }
    let robust = match kind {
        LossKind::CombinedCe => cross_entropy(&worst_case_logits(bounds, true_class)?, true_class)?,
        LossKind::Margin => (T::constant(gamma) - margin(bounds, true_class)?).max(T::zero()),
    };
    Ok(T::constant(kappa) * clean + T::constant(1.0 - kappa) * robust)
}

/// Adam with `β₁ = 0.9`, `β₂ = 0.999`, `δ = 1e−8` and decoupled weight decay
/// `θ ← θ − lr·wd·θ` applied before each step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const DELTA: f64 = 1e-8;

    pub fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        assert_eq!(theta.len(), self.m.len(), "parameter count changed");
        assert_eq!(grad.len(), self.m.len(), "gradient length mismatch");
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - Self::BETA1.powi(t);
        let bc2 = 1.0 - Self::BETA2.powi(t);
        for i in 0..theta.len() {
            theta[i] -= self.lr * self.weight_decay * theta[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::DELTA);
        }
    }
}

/// Metrics of one training epoch, measured on each batch before its update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub kappa: f64,
    pub epsilon: f64,
    pub loss: f64,
    pub clean_acc: f64,
    pub cert_frac: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: Params,
    pub history: Vec<EpochRecord>,
}

/// Loss, gradient and bookkeeping for one sample.
#[derive(Clone, Debug)]
pub struct SampleStep {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub correct: bool,
    pub certified: bool,
}

/// Records the loss of one sample on a fresh tape and differentiates it with
/// respect to `theta`.
pub fn sample_step(
    spec: &CircuitSpec,
    theta: &[f64],
    features: &[f64],
    label: usize,
    state: ScheduleState,
    config: &TrainConfig,
) -> Result<SampleStep> {
    let tape = Tape::new();
    let vars = tape.vars(theta);
    let inputs: Vec<Var<'_>> = features.iter().map(|&x| Var::constant(x)).collect();
    let exact = simulate(spec, &vars, &inputs, None);
    let exact_values: Vec<f64> = exact.iter().map(|z| z.value()).collect();
    let bound_config = config.bound_config();

    let (value, certified) = if state.kappa == 1.0 {
        let value = cross_entropy(&exact, label)?;
        let bounds = propagate_bounds::<f64>(spec, theta, features, state.epsilon, bound_config);
        (value, certify_sample(&bounds, label)?)
    } else {
        let bounds = propagate_bounds(spec, &vars, features, state.epsilon, bound_config);
        let value = loss(&bounds, &exact, label, state.kappa, config.loss_kind, config.gamma)?;
        (value, certify_sample(&bounds.to_f64(), label)?)
    };
    tape.check_finite()?;
    let grads = tape.gradients(value);
    Ok(SampleStep {
        loss: value.value(),
        grad: vars.iter().map(|&v| grads.wrt(v)).collect(),
        correct: argmax(&exact_values) == label,
        certified,
    })
}

fn check_data(spec: &CircuitSpec, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::usage("training set is empty"));
    }
    if data.dim() != spec.dim() {
        return Err(Error::usage(format!(
            "dataset has {} features, circuit expects {}",
            data.dim(),
            spec.dim()
        )));
    }
    if data.n_classes() != spec.n_classes {
        return Err(Error::usage(format!(
            "dataset has {} classes, circuit has {}",
            data.n_classes(),
            spec.n_classes
        )));
    }
    Ok(())
}

/// Trains from `Params::random(spec, config.seed)`.
pub fn train(
    spec: &CircuitSpec,
    data: &Dataset,
    config: &TrainConfig,
    observer: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    train_from(spec, Params::random(spec, config.seed), data, config, observer)
}

/// Mini-batch training from given initial parameters. Samples of a batch are
/// processed in parallel and their gradients summed in sample order, so a run
/// is bitwise reproducible for a fixed seed.
pub fn train_from(
    spec: &CircuitSpec,
    initial: Params,
    data: &Dataset,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    check_data(spec, data)?;
    let mut theta = Params::new(spec, initial.into_vec())?.into_vec();
    let mut adam = Adam::new(theta.len(), config.lr, config.weight_decay);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let state = schedule(epoch, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        let (mut loss_sum, mut correct, mut certified) = (0.0, 0usize, 0usize);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let steps: Vec<Result<SampleStep>> = chunk
                .par_iter()
                .map(|&i| {
                    let (x, y) = data.sample(i);
                    sample_step(spec, &theta, x, y, state, config)
                })
                .collect();
            let mut grad = vec![0.0; theta.len()];
            let mut batch_loss = 0.0;
            for step in steps {
                let step = step.map_err(|e| Error::Divergence {
                    epoch,
                    batch,
                    detail: e.to_string(),
                })?;
                batch_loss += step.loss;
                correct += step.correct as usize;
                certified += step.certified as usize;
                for (g, s) in grad.iter_mut().zip(&step.grad) {
                    *g += s;
                }
            }
            let n = chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch,
                    detail: format!("non-finite loss {batch_loss} or gradient"),
                });
            }
            loss_sum += batch_loss;
            adam.step(&mut theta, &grad);
        }

        let n = data.len() as f64;
        let record = EpochRecord {
            epoch,
            kappa: state.kappa,
            epsilon: state.epsilon,
            loss: loss_sum / n,
            clean_acc: correct as f64 / n,
            cert_frac: certified as f64 / n,
        };
        observer(&record);
        history.push(record);
    }
    Ok(TrainOutcome {
        params: Params::new(spec, theta)?,
        history,
    })
}
