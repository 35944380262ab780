//! Test, certified and PGD accuracy, and the PGD attack itself.
//!
//! Attacks perturb the normalized feature vector inside the same l∞ box that
//! certification covers, and the perturbed vector is fed to the circuit
//! without renormalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::circuit::{argmax, check_features, forward_exact, simulate, CircuitSpec, Params};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::propagation::{certify_sample, propagate_bounds, Arithmetic, BoundConfig};
use crate::scalar::Scalar;
use crate::training::cross_entropy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub steps: usize,
    /// `ε / 10` when unset.
    pub step_size: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            steps: 40,
            step_size: None,
            restarts: 1,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        Self {
            epsilon,
            seed,
            ..Self::default()
        }
    }

    pub fn step_size(&self) -> f64 {
        self.step_size.unwrap_or(self.epsilon / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::usage(format!(
                "attack epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if self.steps == 0 || self.restarts == 0 {
            return Err(Error::usage("attack needs at least one step and one restart"));
        }
        let step = self.step_size();
        if self.epsilon > 0.0 && !(step.is_finite() && step > 0.0) {
            return Err(Error::usage(format!("attack step size must be positive, got {step}")));
        }
        Ok(())
    }
}

/// Predicted class: argmax of the exact logits, ties to the lowest index.
pub fn predict(spec: &CircuitSpec, params: &Params, features: &[f64]) -> Result<usize> {
    Ok(argmax(&forward_exact(spec, params, features)?))
}

fn check_eval(spec: &CircuitSpec, params: &Params, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::usage("evaluation set is empty"));
    }
    if data.dim() != spec.dim() {
        return Err(Error::usage(format!(
            "dataset has {} features, circuit expects {}",
            data.dim(),
            spec.dim()
        )));
    }
    if data.n_classes() > spec.n_classes {
        return Err(Error::usage(format!(
            "dataset has {} classes, circuit has {}",
            data.n_classes(),
            spec.n_classes
        )));
    }
    Params::new(spec, params.as_slice().to_vec()).map(|_| ())
}

pub fn test_accuracy(spec: &CircuitSpec, params: &Params, data: &Dataset) -> Result<f64> {
    check_eval(spec, params, data)?;
    let correct: Vec<bool> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = data.sample(i);
            argmax(&simulate(spec, params.as_slice(), x, None)) == y
        })
        .collect();
    Ok(fraction(&correct))
}

pub fn certified_accuracy(
    spec: &CircuitSpec,
    params: &Params,
    data: &Dataset,
    epsilon: f64,
    config: BoundConfig,
) -> Result<f64> {
    check_eval(spec, params, data)?;
    Ok(fraction(&certified_flags(spec, params, data, epsilon, config)?))
}

fn certified_flags(
    spec: &CircuitSpec,
    params: &Params,
    data: &Dataset,
    epsilon: f64,
    config: BoundConfig,
) -> Result<Vec<bool>> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::usage(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = data.sample(i);
            let b = propagate_bounds::<f64>(spec, params.as_slice(), x, epsilon, config);
            certify_sample(&b, y)
        })
        .collect()
}

fn fraction(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    /// Highest-loss iterate found.
    pub adversarial: Vec<f64>,
    pub loss: f64,
    /// Best loss so far after each evaluated iterate.
    pub loss_trace: Vec<f64>,
}

fn ce_and_input_grad(spec: &CircuitSpec, theta: &[f64], x: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let inputs = tape.vars(x);
    let theta: Vec<Var<'_>> = theta.iter().map(|&t| Var::constant(t)).collect();
    let logits = simulate(spec, &theta, &inputs, None);
    let loss = cross_entropy(&logits, label)?;
    tape.check_finite()?;
    let grads = tape.gradients(loss);
    Ok((loss.value(), inputs.iter().map(|&v| grads.wrt(v)).collect()))
}

/// Sign-gradient ascent on the cross-entropy, projected onto `x₀ ± ε`.
/// `stream` selects an independent random stream (typically the sample
/// index) so attacks are reproducible in any evaluation order.
pub fn pgd_attack(
    spec: &CircuitSpec,
    params: &Params,
    sample: &[f64],
    label: usize,
    attack: &AttackConfig,
    stream: u64,
) -> Result<AttackResult> {
    attack.validate()?;
    check_features(spec, sample)?;
    let eps = attack.epsilon;
    let theta = params.as_slice();
    if eps == 0.0 {
        let (loss, _) = ce_and_input_grad(spec, theta, sample, label)?;
        return Ok(AttackResult {
            adversarial: sample.to_vec(),
            loss,
            loss_trace: vec![loss],
        });
    }
    let step = attack.step_size();
    let mut rng = ChaCha8Rng::seed_from_u64(attack.seed);
    rng.set_stream(stream);
    let clip = |v: f64, x0: f64| v.clamp(x0 - eps, x0 + eps);

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::with_capacity(attack.restarts * (attack.steps + 1));
    for _ in 0..attack.restarts {
        let mut x: Vec<f64> = sample
            .iter()
            .map(|&x0| clip(x0 + rng.gen_range(-eps..=eps), x0))
            .collect();
        for k in 0..=attack.steps {
            let (loss, grad) = ce_and_input_grad(spec, theta, &x, label)?;
            if best.as_ref().map_or(true, |(b, _)| loss > *b) {
                best = Some((loss, x.clone()));
            }
            trace.push(best.as_ref().map_or(loss, |(b, _)| *b));
            if k == attack.steps {
                break;
            }
            for ((xi, &x0), g) in x.iter_mut().zip(sample).zip(&grad) {
                let dir = if *g > 0.0 {
                    1.0
                } else if *g < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *xi = clip(*xi + step * dir, x0);
            }
        }
    }
    let (loss, adversarial) = best.expect("at least one iterate");
    Ok(AttackResult {
        adversarial,
        loss,
        loss_trace: trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFlags {
    pub correct: bool,
    pub certified: bool,
    /// Classified correctly both clean and under attack.
    pub survived: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_acc: f64,
    pub cert_acc: f64,
    pub pgd_acc: f64,
    pub epsilon: f64,
    pub arithmetic: Arithmetic,
    pub n_samples: usize,
    pub flags: Vec<SampleFlags>,
}

/// All three metrics on the same samples. A certified sample that the attack
/// flips is a soundness failure and aborts the evaluation.
pub fn evaluate(
    spec: &CircuitSpec,
    params: &Params,
    data: &Dataset,
    config: BoundConfig,
    attack: &AttackConfig,
) -> Result<EvalReport> {
    check_eval(spec, params, data)?;
    attack.validate()?;
    let epsilon = attack.epsilon;
    let flags: Vec<SampleFlags> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = data.sample(i);
            let correct = argmax(&simulate(spec, params.as_slice(), x, None)) == y;
            let b = propagate_bounds::<f64>(spec, params.as_slice(), x, epsilon, config);
            let certified = certify_sample(&b, y)?;
            let survived = correct && {
                let adv = pgd_attack(spec, params, x, y, attack, i as u64)?;
                argmax(&simulate(spec, params.as_slice(), &adv.adversarial, None)) == y
            };
            Ok(SampleFlags {
                correct,
                certified,
                survived,
            })
        })
        .collect::<Result<_>>()?;
    if let Some(i) = flags.iter().position(|f| f.certified && !f.survived) {
        return Err(Error::Soundness(format!(
            "sample {i} is certified at epsilon {epsilon} but the attack changed its prediction"
        )));
    }
    let pick = |f: fn(&SampleFlags) -> bool| fraction(&flags.iter().map(f).collect::<Vec<_>>());
    let report = EvalReport {
        test_acc: pick(|f| f.correct),
        cert_acc: pick(|f| f.certified),
        pgd_acc: pick(|f| f.survived),
        epsilon,
        arithmetic: config.arithmetic,
        n_samples: flags.len(),
        flags,
    };
    if report.cert_acc > report.pgd_acc {
        return Err(Error::Soundness(format!(
            "certified accuracy {} exceeds PGD accuracy {}",
            report.cert_acc, report.pgd_acc
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::RotationKind;

    fn toy() -> (CircuitSpec, Dataset) {
        let spec = CircuitSpec::new(2, 1, 2, RotationKind::Ry).unwrap();
        let data = Dataset::new(
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            vec![0, 1],
            2,
        )
        .unwrap();
        (spec, data)
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (spec, _) = toy();
        let empty = Dataset::new(vec![], vec![], 2).unwrap();
        assert!(matches!(test_accuracy(&spec, &Params::zeros(&spec), &empty), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_epsilon_attack_returns_clean_sample() {
        let (spec, data) = toy();
        let params = Params::random(&spec, 1);
        let (x, y) = data.sample(1);
        let r = pgd_attack(&spec, &params, x, y, &AttackConfig::new(0.0, 3), 0).unwrap();
        assert_eq!(r.adversarial, x);
    }

    #[test]
    fn attack_stays_in_box_and_trace_is_monotone() {
        let (spec, _) = toy();
        let params = Params::random(&spec, 2);
        let x = [0.5, 0.5, 0.5, 0.5];
        let attack = AttackConfig::new(0.05, 7);
        let r = pgd_attack(&spec, &params, &x, 0, &attack, 0).unwrap();
        for (a, b) in r.adversarial.iter().zip(&x) {
            assert!((a - b).abs() <= 0.05 + 1e-12);
        }
        assert!(r.loss_trace.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r.loss, *r.loss_trace.last().unwrap());
        let again = pgd_attack(&spec, &params, &x, 0, &attack, 0).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn attack_increases_loss_over_clean() {
        let (spec, _) = toy();
        let params = Params::random(&spec, 4);
        let x = [0.5, 0.5, 0.5, 0.5];
        let (clean, _) = ce_and_input_grad(&spec, params.as_slice(), &x, 1).unwrap();
        let r = pgd_attack(&spec, &params, &x, 1, &AttackConfig::new(0.1, 0), 0).unwrap();
        assert!(r.loss > clean);
    }

    #[test]
    fn report_fractions_are_consistent() {
        let (spec, data) = toy();
        let params = Params::zeros(&spec);
        let r = evaluate(&spec, &params, &data, BoundConfig::default(), &AttackConfig::new(0.01, 0)).unwrap();
        assert_eq!(r.n_samples, 2);
        assert!(r.cert_acc <= r.pgd_acc && r.pgd_acc <= r.test_acc);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"arithmetic\":\"affine\""));
    }

    #[test]
    fn attack_config_validation() {
        let bad = AttackConfig {
            steps: 0,
            ..AttackConfig::new(0.1, 0)
        };
        assert!(bad.validate().is_err());
        assert!((AttackConfig::new(0.1, 0).step_size() - 0.01).abs() < 1e-18);
    }
}
