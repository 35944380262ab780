mod common;

use common::*;
use num_complex::Complex64 as C;
use qcert_core::affine::NoiseSymbolSpace;
use qcert_core::circuit::{rotation_matrix, simulate, Cnot, RotationKind, StateVector};
use qcert_core::interval::Interval;
use qcert_core::propagation::{
    embed_affine, embed_interval, measure_interval, propagate_affine_layer, propagate_interval_layer,
};
use qcert_core::{forward_exact, CircuitSpec, ComplexInterval, Params};
use rand::Rng;

#[test]
fn rx_half_pi_is_unitary_with_expected_entries() {
    let g = rotation_matrix(RotationKind::Rx, std::f64::consts::FRAC_PI_2);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let m: Vec<Vec<C>> = (0..2)
        .map(|r| (0..2).map(|c| { let (re, im) = g.entry(r, c); C::new(re, im) }).collect())
        .collect();
    assert!((m[0][0] - C::new(h, 0.0)).norm() < 1e-15);
    assert!((m[0][1] - C::new(0.0, -h)).norm() < 1e-15);
    for i in 0..2 {
        for j in 0..2 {
            let dot: C = (0..2).map(|k| m[k][i].conj() * m[k][j]).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((dot - C::new(expect, 0.0)).norm() <= 1e-12);
        }
    }
}

#[test]
fn single_gate_matches_dense_kronecker_product() {
    let mut rng = rng(1);
    let x = random_unit(&mut rng, 8);
    let mut s = StateVector::from_real(3, x.clone()).unwrap();
    s.apply_gate(&rotation_matrix(RotationKind::Ry, 0.7), 1).unwrap();
    let dense = matvec(&dense_single(3, 1, gate(RotationKind::Ry, 0.7)), &real_input(&x));
    for j in 0..8 {
        assert!((s.re[j] - dense[j].re).abs() <= 1e-12 && (s.im[j] - dense[j].im).abs() <= 1e-12);
    }
}

#[test]
fn strided_kernels_match_dense_oracle_on_all_small_circuits() {
    let mut rng = rng(2);
    for draw in 0..100 {
        let spec = random_spec(&mut rng, 1..=4, 1);
        let theta = random_theta(&mut rng, &spec);
        let x = random_unit(&mut rng, spec.dim());
        let params = Params::new(&spec, theta.clone()).unwrap();
        let fast = forward_exact(&spec, &params, &x).unwrap();
        let slow = dense_logits(&spec, &theta, &real_input(&x));
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-10, "draw {draw}: {a} vs {b}");
        }
        let mut s = StateVector::from_real(spec.n_qubits, x).unwrap();
        for layer in 0..spec.n_layers {
            s.apply_layer(&spec, &theta, layer);
            assert!((s.norm_sqr().sqrt() - 1.0).abs() <= 1e-10);
        }
        assert!(fast.iter().all(|z| (-1.0 - 1e-12..=1.0 + 1e-12).contains(z)));
    }
}

#[test]
fn two_qubit_forward_matches_dense_chain() {
    let mut rng = rng(3);
    let spec = CircuitSpec::new(2, 1, 2, RotationKind::Ry).unwrap();
    let theta = random_theta(&mut rng, &spec);
    let x = random_unit(&mut rng, 4);
    let got = forward_exact(&spec, &Params::new(&spec, theta.clone()).unwrap(), &x).unwrap();
    let want = dense_logits(&spec, &theta, &real_input(&x));
    assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-10));
}

#[test]
fn cnot_on_dense_basis_matches_permutation() {
    let m = dense_cnot(2, Cnot { control: 0, target: 1 });
    let v = real_input(&[1.0, 2.0, 3.0, 4.0]);
    let out: Vec<f64> = matvec(&m, &v).iter().map(|c| c.re).collect();
    assert_eq!(out, vec![1.0, 2.0, 4.0, 3.0]);
}

/// Every ±ε corner of the input box, as complex amplitudes.
fn corners(x: &[f64], eps: f64, imag: bool) -> Vec<Vec<C>> {
    let k = if imag { 2 * x.len() } else { x.len() };
    (0..1u32 << k)
        .map(|mask| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let sr = if mask >> j & 1 == 1 { eps } else { -eps };
                    let si = if imag { if mask >> (x.len() + j) & 1 == 1 { eps } else { -eps } } else { 0.0 };
                    C::new(v + sr, si)
                })
                .collect()
        })
        .collect()
}

#[test]
fn interval_layer_contains_corner_enumeration() {
    let mut rng = rng(4);
    for _ in 0..60 {
        let spec = random_spec(&mut rng, 1..=2, 1);
        let theta = random_theta(&mut rng, &spec);
        let x = random_unit(&mut rng, spec.dim());
        let eps = [0.0, 0.01, 0.1][rng.gen_range(0..3)];
        let imag = rng.gen_bool(0.5);
        let state = embed_interval::<f64>(&x, eps, imag).unwrap();
        let out = propagate_interval_layer(state, &spec, &theta, 0).unwrap();
        let mut one_layer = spec.clone();
        one_layer.n_layers = 1;
        for corner in corners(&x, eps, imag) {
            let exact = dense_state(&one_layer, &theta, &corner);
            for (b, e) in out.amps.iter().zip(&exact) {
                assert!(b.contains(e.re, e.im, 1e-12), "{b:?} misses {e}");
            }
        }
    }
}

#[test]
fn ry_layer_interval_widths_equal_corner_extremes() {
    // A single RY on a 2-qubit box is a real linear map, so each output
    // interval is exactly the range over the corners.
    let mut rng = rng(5);
    let spec = CircuitSpec::with_entangler(2, 1, 1, RotationKind::Ry, vec![]).unwrap();
    let theta = [0.9, 0.0];
    for _ in 0..20 {
        let x = random_unit(&mut rng, 4);
        let lo: Vec<f64> = x.iter().map(|v| v - 0.05 - rng.gen_range(0.0..0.05)).collect();
        let hi: Vec<f64> = x.iter().map(|v| v + rng.gen_range(0.0..0.1)).collect();
        let mut state = embed_interval::<f64>(&x, 0.0, false).unwrap();
        state.amps = lo
            .iter()
            .zip(&hi)
            .map(|(&l, &h)| ComplexInterval::new(Interval::new(l, h).unwrap(), Interval::point(0.0)))
            .collect();
        let out = propagate_interval_layer(state, &spec, &theta, 0).unwrap();
        let g = dense_single(2, 0, gate(RotationKind::Ry, 0.9));
        let mut ext = vec![(f64::INFINITY, f64::NEG_INFINITY); 4];
        for mask in 0..16u32 {
            let v: Vec<C> = (0..4).map(|j| C::new(if mask >> j & 1 == 1 { hi[j] } else { lo[j] }, 0.0)).collect();
            for (e, a) in ext.iter_mut().zip(matvec(&g, &v)) {
                *e = (e.0.min(a.re), e.1.max(a.re));
            }
        }
        for (b, e) in out.amps.iter().zip(&ext) {
            assert!((b.re.lo() - e.0).abs() <= 1e-10 && (b.re.hi() - e.1).abs() <= 1e-10);
        }
    }
}

#[test]
fn affine_layer_is_tighter_than_interval_and_sound() {
    let mut rng = rng(6);
    for _ in 0..40 {
        let spec = random_spec(&mut rng, 1..=3, 1);
        let theta = random_theta(&mut rng, &spec);
        let x = random_unit(&mut rng, spec.dim());
        let eps = 0.05;
        let space = NoiseSymbolSpace::new();
        let af = propagate_affine_layer(embed_affine::<f64>(&x, eps, false, &space).unwrap(), &spec, &theta, 0).unwrap();
        let iv = propagate_interval_layer(embed_interval::<f64>(&x, eps, false).unwrap(), &spec, &theta, 0).unwrap();
        for (a, i) in af.amps.iter().zip(&iv.amps) {
            assert!(a.re.to_interval().width() <= i.re.width() + 1e-12);
            assert!(a.im.to_interval().width() <= i.im.width() + 1e-12);
        }
        let mut one_layer = spec.clone();
        one_layer.n_layers = 1;
        for _ in 0..50 {
            let e: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let p: Vec<f64> = x.iter().zip(&e).map(|(v, s)| v + eps * s).collect();
            let exact = dense_state(&one_layer, &theta, &real_input(&p));
            for (a, z) in af.amps.iter().zip(&exact) {
                assert!(a.re.to_interval().contains(z.re, 1e-12));
                assert!(a.im.to_interval().contains(z.im, 1e-12));
                // Linear layers keep affine forms exact: evaluating the form at
                // the drawn symbols reproduces the amplitude.
                assert!((a.re.evaluate(|s| e[s as usize]) - z.re).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn point_states_propagate_like_the_exact_simulator() {
    let mut rng = rng(7);
    for _ in 0..20 {
        let spec = random_spec(&mut rng, 1..=4, 1);
        let theta = random_theta(&mut rng, &spec);
        let x = random_unit(&mut rng, spec.dim());
        let space = NoiseSymbolSpace::new();
        let iv = propagate_interval_layer(embed_interval::<f64>(&x, 0.0, false).unwrap(), &spec, &theta, 0).unwrap();
        let af = propagate_affine_layer(embed_affine::<f64>(&x, 0.0, false, &space).unwrap(), &spec, &theta, 0).unwrap();
        let mut s = StateVector::from_real(spec.n_qubits, x).unwrap();
        s.apply_layer(&spec, &theta, 0);
        for j in 0..spec.dim() {
            assert!(iv.amps[j].re.width() == 0.0 && (iv.amps[j].re.lo() - s.re[j]).abs() <= 1e-12);
            assert!((af.amps[j].re.center() - s.re[j]).abs() <= 1e-12);
            assert!((af.amps[j].im.center() - s.im[j]).abs() <= 1e-12);
            assert_eq!(af.amps[j].re.radius(), 0.0);
        }
    }
}

#[test]
fn measured_bounds_contain_box_samples() {
    let mut rng = rng(8);
    let spec = CircuitSpec::new(2, 1, 2, RotationKind::Rx).unwrap();
    let theta = random_theta(&mut rng, &spec);
    let x = random_unit(&mut rng, 4);
    let eps = 0.05;
    let state = propagate_interval_layer(embed_interval::<f64>(&x, eps, false).unwrap(), &spec, &theta, 0).unwrap();
    let bounds = measure_interval(&state, 2);
    for _ in 0..10_000 {
        let p: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-eps..=eps)).collect();
        let logits = simulate(&spec, &theta, &p, None);
        for (b, z) in bounds.bounds.iter().zip(&logits) {
            assert!(b.contains(*z, 1e-12));
        }
    }
}
