//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64 as C;
use qcert_core::circuit::{Cnot, RotationKind};
use qcert_core::CircuitSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Matrix = Vec<Vec<C>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rotation matrix written out directly from the textbook definitions.
pub fn gate(kind: RotationKind, theta: f64) -> [[C; 2]; 2] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    match kind {
        RotationKind::Ry => [[C::new(c, 0.0), C::new(-s, 0.0)], [C::new(s, 0.0), C::new(c, 0.0)]],
        RotationKind::Rx => [[C::new(c, 0.0), C::new(0.0, -s)], [C::new(0.0, -s), C::new(c, 0.0)]],
        RotationKind::Rz => [
            [C::from_polar(1.0, -theta / 2.0), C::new(0.0, 0.0)],
            [C::new(0.0, 0.0), C::from_polar(1.0, theta / 2.0)],
        ],
    }
}

fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![C::new(0.0, 0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| C::new((i == j) as u8 as f64, 0.0)).collect())
        .collect()
}

/// `I ⊗ … ⊗ U ⊗ … ⊗ I` with qubit 0 as the leftmost (most significant) factor.
pub fn dense_single(n_qubits: usize, qubit: usize, u: [[C; 2]; 2]) -> Matrix {
    let u: Matrix = u.iter().map(|r| r.to_vec()).collect();
    let id = identity(2);
    let mut m = vec![vec![C::new(1.0, 0.0)]];
    for q in 0..n_qubits {
        m = kron(&m, if q == qubit { &u } else { &id });
    }
    m
}

/// CNOT as a dense permutation matrix built from bit manipulation.
pub fn dense_cnot(n_qubits: usize, g: Cnot) -> Matrix {
    let dim = 1 << n_qubits;
    let bit = |q: usize| 1usize << (n_qubits - 1 - q);
    let mut m = vec![vec![C::new(0.0, 0.0); dim]; dim];
    for i in 0..dim {
        let j = if i & bit(g.control) != 0 { i ^ bit(g.target) } else { i };
        m[j][i] = C::new(1.0, 0.0);
    }
    m
}

pub fn matvec(m: &Matrix, v: &[C]) -> Vec<C> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Full circuit by dense matrix products; returns the final state.
pub fn dense_state(spec: &CircuitSpec, theta: &[f64], input: &[C]) -> Vec<C> {
    let mut v = input.to_vec();
    for layer in 0..spec.n_layers {
        for q in 0..spec.n_qubits {
            let u = gate(spec.rotation, theta[layer * spec.n_qubits + q]);
            v = matvec(&dense_single(spec.n_qubits, q, u), &v);
        }
        for &g in &spec.entangler {
            v = matvec(&dense_cnot(spec.n_qubits, g), &v);
        }
    }
    v
}

/// `⟨Z_c⟩ = Σ_j |v_j|² · (±1)` with the sign from bit `c` of `j`.
pub fn dense_logits(spec: &CircuitSpec, theta: &[f64], input: &[C]) -> Vec<f64> {
    let v = dense_state(spec, theta, input);
    (0..spec.n_classes)
        .map(|c| {
            let bit = 1usize << (spec.n_qubits - 1 - c);
            v.iter()
                .enumerate()
                .map(|(j, a)| if j & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                .sum()
        })
        .collect()
}

pub fn real_input(x: &[f64]) -> Vec<C> {
    x.iter().map(|&v| C::new(v, 0.0)).collect()
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> RotationKind {
    [RotationKind::Ry, RotationKind::Rx, RotationKind::Rz][rng.gen_range(0..3)]
}

pub fn random_spec(rng: &mut impl Rng, qubits: std::ops::RangeInclusive<usize>, min_classes: usize) -> CircuitSpec {
    let n = rng.gen_range(qubits);
    let layers = rng.gen_range(1..=3);
    let classes = rng.gen_range(min_classes.min(n)..=n);
    CircuitSpec::new(n, layers, classes, random_rotation(rng)).unwrap()
}

pub fn random_theta(rng: &mut impl Rng, spec: &CircuitSpec) -> Vec<f64> {
    (0..spec.n_params())
        .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect()
}

/// Dataset root: `QCERT_DATA_DIR`, else `<workspace>/data`.
pub fn data_root() -> PathBuf {
    std::env::var_os("QCERT_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}
