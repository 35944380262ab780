//! Propagation of an l∞ input box through the circuit in interval or affine
//! arithmetic, producing per-class logit bounds.
//!
//! The input box is `[x − ε, x + ε]` on the real parts, and optionally on the
//! imaginary parts. It is not renormalized, so it over-approximates the set of
//! valid perturbed states.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::affine::{AffineForm, ComplexAffine, NoiseSymbolSpace};
use crate::circuit::{
    check_features, for_each_cnot_swap, for_each_pair, qubit_stride, rotation_matrix,
    zero_bit_indices, CircuitSpec, Cnot, GateMatrix, Params,
};
use crate::error::{Error, Result};
use crate::interval::{ComplexInterval, Interval};
use crate::scalar::{sum, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Interval,
    #[default]
    Affine,
}

impl fmt::Display for Arithmetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arithmetic::Interval => "interval",
            Arithmetic::Affine => "affine",
        })
    }
}

impl FromStr for Arithmetic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "interval" => Ok(Arithmetic::Interval),
            "affine" => Ok(Arithmetic::Affine),
            other => Err(Error::usage(format!(
                "unknown arithmetic '{other}' (expected interval or affine)"
            ))),
        }
    }
}

/// How an input box is built and which arithmetic carries it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BoundConfig {
    pub arithmetic: Arithmetic,
    /// Also perturb the (zero) imaginary parts by `±ε`.
    #[serde(default)]
    pub perturb_imag: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalState<T: Scalar = f64> {
    n_qubits: usize,
    pub amps: Vec<ComplexInterval<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffineState<T: Scalar = f64> {
    n_qubits: usize,
    pub amps: Vec<ComplexAffine<T>>,
}

/// Per-class logit bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedLogits<T: Scalar = f64> {
    pub bounds: Vec<Interval<T>>,
}

impl<T: Scalar> BoundedLogits<T> {
    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn to_f64(&self) -> BoundedLogits<f64> {
        BoundedLogits {
            bounds: self.bounds.iter().map(Interval::to_f64).collect(),
        }
    }

    /// Worst-case logits for `true_class`: its lower bound and every other
    /// class's upper bound.
    pub fn worst_case(&self, true_class: usize) -> Vec<T> {
        self.bounds
            .iter()
            .enumerate()
            .map(|(j, b)| if j == true_class { b.lo() } else { b.hi() })
            .collect()
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::usage(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )));
    }
    Ok(())
}

fn check_layer(spec: &CircuitSpec, theta_len: usize, layer: usize) -> Result<()> {
    if layer >= spec.n_layers {
        return Err(Error::usage(format!(
            "layer {layer} out of range for {} layers",
            spec.n_layers
        )));
    }
    if theta_len != spec.n_params() {
        return Err(Error::usage(format!(
            "expected {} parameters, got {theta_len}",
            spec.n_params()
        )));
    }
    Ok(())
}

fn n_qubits_for(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::usage(format!(
            "feature length must be a power of two ≥ 2, got {len}"
        )));
    }
    Ok(len.trailing_zeros() as usize)
}

/// Box `re ∈ [x_j − ε, x_j + ε]`, `im ∈ [−ε, ε]` or `[0, 0]`.
pub fn embed_interval<T: Scalar>(
    features: &[f64],
    epsilon: f64,
    perturb_imag: bool,
) -> Result<IntervalState<T>> {
    check_epsilon(epsilon)?;
    let n_qubits = n_qubits_for(features.len())?;
    crate::circuit::check_unit_norm(features)?;
    Ok(embed_interval_unchecked(n_qubits, features, epsilon, perturb_imag))
}

fn embed_interval_unchecked<T: Scalar>(
    n_qubits: usize,
    features: &[f64],
    epsilon: f64,
    perturb_imag: bool,
) -> IntervalState<T> {
    let im = if perturb_imag {
        Interval::from_bounds(T::constant(-epsilon), T::constant(epsilon))
    } else {
        Interval::point(T::zero())
    };
    let amps = features
        .iter()
        .map(|&x| ComplexInterval {
            re: Interval::from_bounds(T::constant(x - epsilon), T::constant(x + epsilon)),
            im,
        })
        .collect();
    IntervalState { n_qubits, amps }
}

/// `re_j = x_j + ε·ε_j`; with `perturb_imag`, `im_j = ε·ε_{N+j}` on a second
/// block of symbols, otherwise `im_j = 0`.
pub fn embed_affine<T: Scalar>(
    features: &[f64],
    epsilon: f64,
    perturb_imag: bool,
    space: &NoiseSymbolSpace,
) -> Result<AffineState<T>> {
    check_epsilon(epsilon)?;
    let n_qubits = n_qubits_for(features.len())?;
    crate::circuit::check_unit_norm(features)?;
    Ok(embed_affine_unchecked(n_qubits, features, epsilon, perturb_imag, space))
}

fn embed_affine_unchecked<T: Scalar>(
    n_qubits: usize,
    features: &[f64],
    epsilon: f64,
    perturb_imag: bool,
    space: &NoiseSymbolSpace,
) -> AffineState<T> {
    let n = features.len() as u32;
    let re_base = space.fresh_block(n);
    let im_base = perturb_imag.then(|| space.fresh_block(n));
    let eps = T::constant(epsilon);
    let amps = features
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let re = AffineForm::with_symbol(space, re_base + j as u32, T::constant(x), eps);
            let im = match im_base {
                Some(base) => AffineForm::with_symbol(space, base + j as u32, T::zero(), eps),
                None => AffineForm::zero(),
            };
            ComplexAffine { re, im }
        })
        .collect();
    AffineState { n_qubits, amps }
}

impl<T: Scalar> IntervalState<T> {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn apply_gate(&mut self, gate: &GateMatrix<T>, qubit: usize) {
        let stride = qubit_stride(self.n_qubits, qubit);
        let amps = &mut self.amps;
        for_each_pair(amps.len(), stride, |i, j| {
            let (a, b) = (amps[i], amps[j]);
            amps[i] = interval_row(gate, 0, a, b);
            amps[j] = interval_row(gate, 1, a, b);
        });
    }

    pub fn apply_cnot(&mut self, gate: Cnot) {
        let amps = &mut self.amps;
        for_each_cnot_swap(self.n_qubits, gate, |i, j| amps.swap(i, j));
    }
}

/// Row `r` of `W·(a, b)` with the real and imaginary parts of `W` applied in
/// positive/negative-part form: `re = W_re·v_re − W_im·v_im`,
/// `im = W_re·v_im + W_im·v_re`.
fn interval_row<T: Scalar>(
    gate: &GateMatrix<T>,
    r: usize,
    a: ComplexInterval<T>,
    b: ComplexInterval<T>,
) -> ComplexInterval<T> {
    let m = gate.re[r];
    let re_re = a.re.scale(m[0]) + b.re.scale(m[1]);
    let re_im = a.im.scale(m[0]) + b.im.scale(m[1]);
    match gate.im {
        None => ComplexInterval {
            re: re_re,
            im: re_im,
        },
        Some(w) => {
            let w = w[r];
            let im_im = a.im.scale(w[0]) + b.im.scale(w[1]);
            let im_re = a.re.scale(w[0]) + b.re.scale(w[1]);
            ComplexInterval {
                re: re_re - im_im,
                im: re_im + im_re,
            }
        }
    }
}

impl<T: Scalar> AffineState<T> {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn apply_gate(&mut self, gate: &GateMatrix<T>, qubit: usize) {
        let stride = qubit_stride(self.n_qubits, qubit);
        let amps = &mut self.amps;
        for_each_pair(amps.len(), stride, |i, j| {
            let ri = affine_row(gate, 0, &amps[i], &amps[j]);
            let rj = affine_row(gate, 1, &amps[i], &amps[j]);
            amps[i] = ri;
            amps[j] = rj;
        });
    }

    pub fn apply_cnot(&mut self, gate: Cnot) {
        let amps = &mut self.amps;
        for_each_cnot_swap(self.n_qubits, gate, |i, j| amps.swap(i, j));
    }
}

/// `ca·a + cb·b`, skipping constant-zero coefficients.
fn affine_lin<T: Scalar>(ca: T, a: &AffineForm<T>, cb: T, b: &AffineForm<T>) -> AffineForm<T> {
    match (ca.is_const_zero(), cb.is_const_zero()) {
        (true, true) => AffineForm::zero(),
        (false, true) => a.scale(ca),
        (true, false) => b.scale(cb),
        (false, false) => &a.scale(ca) + &b.scale(cb),
    }
}

fn affine_row<T: Scalar>(
    gate: &GateMatrix<T>,
    r: usize,
    a: &ComplexAffine<T>,
    b: &ComplexAffine<T>,
) -> ComplexAffine<T> {
    let m = gate.re[r];
    let re_re = affine_lin(m[0], &a.re, m[1], &b.re);
    let re_im = affine_lin(m[0], &a.im, m[1], &b.im);
    match gate.im {
        None => ComplexAffine {
            re: re_re,
            im: re_im,
        },
        Some(w) => {
            let w = w[r];
            let im_im = affine_lin(w[0], &a.im, w[1], &b.im);
            let im_re = affine_lin(w[0], &a.re, w[1], &b.re);
            ComplexAffine {
                re: &re_re - &im_im,
                im: &re_im + &im_re,
            }
        }
    }
}

fn layer_gates<T: Scalar>(spec: &CircuitSpec, theta: &[T], layer: usize) -> Vec<GateMatrix<T>> {
    (0..spec.n_qubits)
        .map(|q| rotation_matrix(spec.rotation, theta[spec.param_index(layer, q)]))
        .collect()
}

pub fn propagate_interval_layer<T: Scalar>(
    mut state: IntervalState<T>,
    spec: &CircuitSpec,
    theta: &[T],
    layer: usize,
) -> Result<IntervalState<T>> {
    check_layer(spec, theta.len(), layer)?;
    check_state(spec, state.n_qubits)?;
    interval_layer(&mut state, spec, theta, layer);
    Ok(state)
}

pub fn propagate_affine_layer<T: Scalar>(
    mut state: AffineState<T>,
    spec: &CircuitSpec,
    theta: &[T],
    layer: usize,
) -> Result<AffineState<T>> {
    check_layer(spec, theta.len(), layer)?;
    check_state(spec, state.n_qubits)?;
    affine_layer(&mut state, spec, theta, layer);
    Ok(state)
}

fn check_state(spec: &CircuitSpec, n_qubits: usize) -> Result<()> {
    if n_qubits != spec.n_qubits {
        return Err(Error::usage(format!(
            "state has {n_qubits} qubits, circuit has {}",
            spec.n_qubits
        )));
    }
    Ok(())
}

fn interval_layer<T: Scalar>(state: &mut IntervalState<T>, spec: &CircuitSpec, theta: &[T], layer: usize) {
    for (q, gate) in layer_gates(spec, theta, layer).iter().enumerate() {
        state.apply_gate(gate, q);
    }
    for &g in &spec.entangler {
        state.apply_cnot(g);
    }
}

fn affine_layer<T: Scalar>(state: &mut AffineState<T>, spec: &CircuitSpec, theta: &[T], layer: usize) {
    for (q, gate) in layer_gates(spec, theta, layer).iter().enumerate() {
        state.apply_gate(gate, q);
    }
    for &g in &spec.entangler {
        state.apply_cnot(g);
    }
}

/// `2·P(q_c = 0) − 1` per class, with `P` bounded by `re² + im²` summed over
/// the basis states whose bit for qubit `c` is zero.
pub fn measure_interval<T: Scalar>(state: &IntervalState<T>, n_classes: usize) -> BoundedLogits<T> {
    let probs: Vec<Interval<T>> = state.amps.iter().map(|a| a.norm_sqr()).collect();
    let two = T::constant(2.0);
    let minus_one = Interval::point(T::constant(-1.0));
    let bounds = (0..n_classes)
        .map(|c| {
            let mut idx = zero_bit_indices(state.n_qubits, c);
            let first = probs[idx.next().expect("at least one zero-bit index")];
            let p0 = idx.fold(first, |acc, j| acc + probs[j]);
            p0.scale(two) + minus_one
        })
        .collect();
    BoundedLogits { bounds }
}

/// Affine counterpart of [`measure_interval`]: probabilities by Chebyshev
/// squaring, exact affine marginal sums, concretized at the end.
pub fn measure_affine<T: Scalar>(state: &AffineState<T>, n_classes: usize) -> BoundedLogits<T> {
    let probs: Vec<AffineForm<T>> = state.amps.iter().map(ComplexAffine::norm_sqr).collect();
    let two = T::constant(2.0);
    let minus_one = T::constant(-1.0);
    let bounds = (0..n_classes)
        .map(|c| {
            let mut idx = zero_bit_indices(state.n_qubits, c);
            let first = probs[idx.next().expect("at least one zero-bit index")].clone();
            let p0 = idx.fold(first, |acc, j| &acc + &probs[j]);
            p0.scale(two).shift(minus_one).to_interval()
        })
        .collect();
    BoundedLogits { bounds }
}

/// Logit bounds for one input box. Inputs are not validated; see
/// [`bound_logits`] for the checked entry point.
pub fn propagate_bounds<T: Scalar>(
    spec: &CircuitSpec,
    theta: &[T],
    features: &[f64],
    epsilon: f64,
    config: BoundConfig,
) -> BoundedLogits<T> {
    match config.arithmetic {
        Arithmetic::Interval => {
            let mut state = embed_interval_unchecked(spec.n_qubits, features, epsilon, config.perturb_imag);
            for layer in 0..spec.n_layers {
                interval_layer(&mut state, spec, theta, layer);
            }
            measure_interval(&state, spec.n_classes)
        }
        Arithmetic::Affine => {
            let space = NoiseSymbolSpace::new();
            let mut state =
                embed_affine_unchecked(spec.n_qubits, features, epsilon, config.perturb_imag, &space);
            for layer in 0..spec.n_layers {
                affine_layer(&mut state, spec, theta, layer);
            }
            measure_affine(&state, spec.n_classes)
        }
    }
}

/// Validated logit bounds for a unit-norm feature vector.
pub fn bound_logits(
    spec: &CircuitSpec,
    params: &Params,
    features: &[f64],
    epsilon: f64,
    config: BoundConfig,
) -> Result<BoundedLogits> {
    check_epsilon(epsilon)?;
    check_features(spec, features)?;
    Ok(propagate_bounds(spec, params.as_slice(), features, epsilon, config))
}

/// `true` iff the true class's lower bound strictly exceeds every other
/// class's upper bound. A single class is trivially certified.
pub fn certify_sample(bounds: &BoundedLogits, true_class: usize) -> Result<bool> {
    if true_class >= bounds.len() {
        return Err(Error::usage(format!(
            "class {true_class} out of range for {} classes",
            bounds.len()
        )));
    }
    let lo = bounds.bounds[true_class].lo();
    Ok(bounds
        .bounds
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != true_class)
        .all(|(_, b)| lo > b.hi()))
}

/// Width of every logit bound, summed; a tightness diagnostic.
pub fn total_width<T: Scalar>(bounds: &BoundedLogits<T>) -> T {
    sum(bounds.bounds.iter().map(Interval::width))
}
