//! Circuit description and exact statevector simulation.
//!
//! Bit convention: qubit 0 is the most significant bit of a basis index, so
//! qubit `q` of an `n`-qubit register toggles index bit `n - 1 - q`.
//!
//! A layer applies one rotation per qubit (qubit 0 first) and then the
//! entangler CNOTs in listed order. Class `c` reads `⟨Z⟩` on qubit `c`,
//! computed as `2·P(q_c = 0) − 1`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on `‖features‖₂ = 1` accepted by the forward pass and embeddings.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RotationKind {
    #[default]
    Ry,
    Rx,
    Rz,
}

impl fmt::Display for RotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RotationKind::Ry => "ry",
            RotationKind::Rx => "rx",
            RotationKind::Rz => "rz",
        })
    }
}

impl FromStr for RotationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ry" => Ok(RotationKind::Ry),
            "rx" => Ok(RotationKind::Rx),
            "rz" => Ok(RotationKind::Rz),
            other => Err(Error::usage(format!(
                "unknown rotation kind '{other}' (expected ry, rx or rz)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cnot {
    pub control: usize,
    pub target: usize,
}

/// `CNOT(i, i+1)` for `i = 0..n-2`, closed by `CNOT(n-1, 0)`. Empty for one
/// qubit; a single `CNOT(0, 1), CNOT(1, 0)` pair for two.
pub fn ring_entangler(n_qubits: usize) -> Vec<Cnot> {
    if n_qubits < 2 {
        return Vec::new();
    }
    (0..n_qubits)
        .map(|i| Cnot {
            control: i,
            target: (i + 1) % n_qubits,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub rotation: RotationKind,
    /// Applied after the rotations of every layer.
    pub entangler: Vec<Cnot>,
    pub n_classes: usize,
}

impl CircuitSpec {
    /// Circuit with the default ring entangler.
    pub fn new(
        n_qubits: usize,
        n_layers: usize,
        n_classes: usize,
        rotation: RotationKind,
    ) -> Result<Self> {
        Self::with_entangler(
            n_qubits,
            n_layers,
            n_classes,
            rotation,
            ring_entangler(n_qubits),
        )
    }

    pub fn with_entangler(
        n_qubits: usize,
        n_layers: usize,
        n_classes: usize,
        rotation: RotationKind,
        entangler: Vec<Cnot>,
    ) -> Result<Self> {
        let spec = Self {
            n_qubits,
            n_layers,
            rotation,
            entangler,
            n_classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > 24 {
            return Err(Error::usage(format!(
                "n_qubits must be in 1..=24, got {}",
                self.n_qubits
            )));
        }
        if self.n_classes == 0 || self.n_classes > self.n_qubits {
            return Err(Error::usage(format!(
                "n_classes must be in 1..={}, got {}",
                self.n_qubits, self.n_classes
            )));
        }
        for g in &self.entangler {
            if g.control >= self.n_qubits || g.target >= self.n_qubits || g.control == g.target {
                return Err(Error::usage(format!(
                    "invalid CNOT({}, {}) on {} qubits",
                    g.control, g.target, self.n_qubits
                )));
            }
        }
        Ok(())
    }

    /// Statevector dimension `2^n`.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_qubits * self.n_layers
    }

    pub fn param_index(&self, layer: usize, qubit: usize) -> usize {
        layer * self.n_qubits + qubit
    }
}

/// Trainable rotation angles, indexed `(layer, qubit)` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(Vec<f64>);

impl Params {
    pub fn new(spec: &CircuitSpec, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != spec.n_params() {
            return Err(Error::usage(format!(
                "expected {} parameters, got {}",
                spec.n_params(),
                theta.len()
            )));
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(Error::domain(format!("parameter {i} is not finite")));
        }
        Ok(Self(theta))
    }

    /// Uniform on `(-π, π)` from a seeded generator.
    pub fn random(spec: &CircuitSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = std::f64::consts::PI;
        Self(
            (0..spec.n_params())
                .map(|_| rng.gen_range(-pi..pi))
                .collect(),
        )
    }

    pub fn zeros(spec: &CircuitSpec) -> Self {
        Self(vec![0.0; spec.n_params()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A 2×2 complex matrix stored as real and imaginary parts. `im` is `None`
/// for real-valued gates so kernels can skip the imaginary path.
#[derive(Clone, Copy, Debug)]
pub struct GateMatrix<T = f64> {
    pub re: [[T; 2]; 2],
    pub im: Option<[[T; 2]; 2]>,
}

impl<T: Scalar> GateMatrix<T> {
    pub fn entry(&self, row: usize, col: usize) -> (T, T) {
        (
            self.re[row][col],
            self.im.map_or_else(T::zero, |m| m[row][col]),
        )
    }
}

/// Single-qubit rotation matrix for angle `theta` (radians).
///
/// `RY = [[c, −s], [s, c]]`, `RX = [[c, −is], [−is, c]]`,
/// `RZ = diag(e^{−iθ/2}, e^{iθ/2})` with `c = cos(θ/2)`, `s = sin(θ/2)`.
pub fn rotation_matrix<T: Scalar>(kind: RotationKind, theta: T) -> GateMatrix<T> {
    let half = theta.half();
    let c = half.cos();
    let s = half.sin();
    let z = T::zero();
    match kind {
        RotationKind::Ry => GateMatrix {
            re: [[c, -s], [s, c]],
            im: None,
        },
        RotationKind::Rx => GateMatrix {
            re: [[c, z], [z, c]],
            im: Some([[z, -s], [-s, z]]),
        },
        RotationKind::Rz => GateMatrix {
            re: [[c, z], [z, c]],
            im: Some([[-s, z], [z, s]]),
        },
    }
}

/// Index offset between the two amplitudes a gate on `qubit` couples.
#[inline]
pub fn qubit_stride(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

/// Calls `f(i, j)` for every amplitude pair `(i, i | stride)` with the
/// qubit's bit clear in `i`.
#[inline]
pub(crate) fn for_each_pair(dim: usize, stride: usize, mut f: impl FnMut(usize, usize)) {
    let mut block = 0;
    while block < dim {
        for i in block..block + stride {
            f(i, i + stride);
        }
        block += 2 * stride;
    }
}

/// Calls `f(i, j)` for every pair a CNOT swaps: control bit set, target bit
/// clear in `i`, and `j = i` with the target bit set.
#[inline]
pub(crate) fn for_each_cnot_swap(n_qubits: usize, gate: Cnot, mut f: impl FnMut(usize, usize)) {
    let c = qubit_stride(n_qubits, gate.control);
    let t = qubit_stride(n_qubits, gate.target);
    for i in 0..1usize << n_qubits {
        if i & c != 0 && i & t == 0 {
            f(i, i | t);
        }
    }
}

/// Basis indices whose bit for `qubit` is zero.
pub(crate) fn zero_bit_indices(n_qubits: usize, qubit: usize) -> impl Iterator<Item = usize> {
    let stride = qubit_stride(n_qubits, qubit);
    (0..1usize << n_qubits).filter(move |i| i & stride == 0)
}

/// Dense statevector with separate real and imaginary arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T = f64> {
    n_qubits: usize,
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Scalar> StateVector<T> {
    pub fn from_parts(n_qubits: usize, re: Vec<T>, im: Vec<T>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if re.len() != dim || im.len() != dim {
            return Err(Error::usage(format!(
                "statevector on {n_qubits} qubits needs {dim} amplitudes, got {}/{}",
                re.len(),
                im.len()
            )));
        }
        Ok(Self { n_qubits, re, im })
    }

    /// Amplitude embedding of real features; the imaginary part is zero.
    pub fn from_real(n_qubits: usize, re: Vec<T>) -> Result<Self> {
        let im = vec![T::zero(); re.len()];
        Self::from_parts(n_qubits, re, im)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn apply_gate(&mut self, gate: &GateMatrix<T>, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::usage(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        self.apply_gate_unchecked(gate, qubit);
        Ok(())
    }

    pub(crate) fn apply_gate_unchecked(&mut self, gate: &GateMatrix<T>, qubit: usize) {
        let stride = qubit_stride(self.n_qubits, qubit);
        let m = &gate.re;
        let (re, im) = (&mut self.re, &mut self.im);
        match gate.im {
            None => for_each_pair(re.len(), stride, |i, j| {
                let (ar, ai, br, bi) = (re[i], im[i], re[j], im[j]);
                re[i] = m[0][0] * ar + m[0][1] * br;
                re[j] = m[1][0] * ar + m[1][1] * br;
                im[i] = m[0][0] * ai + m[0][1] * bi;
                im[j] = m[1][0] * ai + m[1][1] * bi;
            }),
            Some(w) => for_each_pair(re.len(), stride, |i, j| {
                let (ar, ai, br, bi) = (re[i], im[i], re[j], im[j]);
                re[i] = (m[0][0] * ar - w[0][0] * ai) + (m[0][1] * br - w[0][1] * bi);
                re[j] = (m[1][0] * ar - w[1][0] * ai) + (m[1][1] * br - w[1][1] * bi);
                im[i] = (m[0][0] * ai + w[0][0] * ar) + (m[0][1] * bi + w[0][1] * br);
                im[j] = (m[1][0] * ai + w[1][0] * ar) + (m[1][1] * bi + w[1][1] * br);
            }),
        }
    }

    pub fn apply_cnot(&mut self, gate: Cnot) -> Result<()> {
        if gate.control >= self.n_qubits || gate.target >= self.n_qubits || gate.control == gate.target
        {
            return Err(Error::usage(format!(
                "invalid CNOT({}, {}) on {} qubits",
                gate.control, gate.target, self.n_qubits
            )));
        }
        self.apply_cnot_unchecked(gate);
        Ok(())
    }

    pub(crate) fn apply_cnot_unchecked(&mut self, gate: Cnot) {
        let (re, im) = (&mut self.re, &mut self.im);
        for_each_cnot_swap(self.n_qubits, gate, |i, j| {
            re.swap(i, j);
            im.swap(i, j);
        });
    }

    /// Applies rotations and entanglers of one layer.
    pub fn apply_layer(&mut self, spec: &CircuitSpec, theta: &[T], layer: usize) {
        for q in 0..spec.n_qubits {
            let gate = rotation_matrix(spec.rotation, theta[spec.param_index(layer, q)]);
            self.apply_gate_unchecked(&gate, q);
        }
        for &g in &spec.entangler {
            self.apply_cnot_unchecked(g);
        }
    }

    /// `|re_j|² + |im_j|²` per basis state.
    pub fn probabilities(&self) -> Vec<T> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| r.square() + i.square())
            .collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r.value().powi(2) + i.value().powi(2))
            .sum()
    }
}

/// `2·P(q_c = 0) − 1` for the first `n_classes` qubits, with marginals summed
/// over the basis states whose bit for qubit `c` is zero.
pub fn pauli_z_logits<T: Scalar>(probs: &[T], n_qubits: usize, n_classes: usize) -> Vec<T> {
    let two = T::constant(2.0);
    let one = T::constant(1.0);
    (0..n_classes)
        .map(|c| {
            let p0 = crate::scalar::sum(zero_bit_indices(n_qubits, c).map(|j| probs[j]));
            two * p0 - one
        })
        .collect()
}

/// Runs the circuit on an (unvalidated) amplitude vector. Inputs outside the
/// unit sphere are allowed; perturbed points of a certification box are fed
/// through here without renormalization.
pub fn simulate<T: Scalar>(spec: &CircuitSpec, theta: &[T], re: &[T], im: Option<&[T]>) -> Vec<T> {
    let im = im.map_or_else(|| vec![T::zero(); re.len()], <[T]>::to_vec);
    let mut state = StateVector {
        n_qubits: spec.n_qubits,
        re: re.to_vec(),
        im,
    };
    for layer in 0..spec.n_layers {
        state.apply_layer(spec, theta, layer);
    }
    pauli_z_logits(&state.probabilities(), spec.n_qubits, spec.n_classes)
}

pub(crate) fn check_features(spec: &CircuitSpec, features: &[f64]) -> Result<()> {
    if features.len() != spec.dim() {
        return Err(Error::usage(format!(
            "expected {} features for {} qubits, got {}",
            spec.dim(),
            spec.n_qubits,
            features.len()
        )));
    }
    check_unit_norm(features)
}

pub(crate) fn check_unit_norm(features: &[f64]) -> Result<()> {
    if let Some(i) = features.iter().position(|x| !x.is_finite()) {
        return Err(Error::domain(format!("feature {i} is not finite")));
    }
    let norm = features.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::usage(format!(
            "features must have unit l2 norm (got {norm})"
        )));
    }
    Ok(())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Exact logits for a unit-norm real feature vector.
pub fn forward_exact(spec: &CircuitSpec, params: &Params, features: &[f64]) -> Result<Vec<f64>> {
    check_features(spec, features)?;
    Ok(simulate(spec, params.as_slice(), features, None))
}
