mod common;

use std::f64::consts::PI;

use common::{expect_z, kernel_reference, kernel_unitary, matvec, zero_state};
use proptest::prelude::*;
use qcnn_core::{Error, KernelConfig, KernelParams, Patch, QuantumKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn draw(n: usize, depth: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let pixels = (0..n * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let theta = (0..3 * n * n * depth).map(|_| rng.random_range(-PI..PI)).collect();
    (pixels, theta)
}

fn forward(n: usize, depth: usize, pixels: &[f64], theta: &[f64]) -> f64 {
    let cfg = KernelConfig::new(n, depth).unwrap();
    QuantumKernel::new(cfg)
        .forward(
            &Patch::new(n, pixels.to_vec()).unwrap(),
            &KernelParams::new(theta.to_vec(), &cfg).unwrap(),
        )
        .unwrap()
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[test]
fn config_validation() {
    assert_eq!(KernelConfig::new(3, 2).unwrap().param_count(), 54);
    assert_eq!(KernelConfig::new(2, 2).unwrap().param_count(), 24);
    assert!(matches!(KernelConfig::new(4, 1), Err(Error::Config(_))));
    assert!(matches!(KernelConfig::new(0, 1), Err(Error::Config(_))));
    assert!(matches!(KernelConfig::new(2, 0), Err(Error::Config(_))));
    let cfg = KernelConfig::new(2, 1).unwrap();
    assert!(KernelParams::new(vec![0.0; 11], &cfg).is_err());
    assert!(Patch::new(2, vec![0.0; 3]).is_err());
    let kernel = QuantumKernel::new(cfg);
    assert!(kernel.forward(&Patch::zeros(3), &KernelParams::zeros(&cfg)).is_err());
}

#[test]
fn single_qubit_matches_matrix_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for depth in 1..=3 {
        for _ in 0..50 {
            let (px, th) = draw(1, depth, &mut rng);
            let got = forward(1, depth, &px, &th);
            assert!((got - kernel_reference(&px, &th, depth)).abs() < 1e-12);
        }
    }
}

#[test]
fn two_by_two_matches_full_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let (px, th) = draw(2, 2, &mut rng);
        let got = forward(2, 2, &px, &th);
        let want = expect_z(&matvec(&kernel_unitary(&px, &th, 2), &zero_state(4)), 0);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn three_by_three_matches_full_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let (px, th) = draw(3, 1, &mut rng);
        assert!((forward(3, 1, &px, &th) - kernel_reference(&px, &th, 1)).abs() < 1e-10);
    }
}

#[test]
fn zero_parameters_and_zero_patch_give_one() {
    for n in 1..=3 {
        let cfg = KernelConfig::new(n, 2).unwrap();
        let out = QuantumKernel::new(cfg)
            .forward(&Patch::zeros(n), &KernelParams::zeros(&cfg))
            .unwrap();
        assert!((out - 1.0).abs() < 1e-12);
    }
}

#[test]
fn parameter_layout() {
    let cfg = KernelConfig::new(2, 2).unwrap();
    assert_eq!(KernelParams::index(&cfg, 0, 0, 0), 0);
    assert_eq!(KernelParams::index(&cfg, 0, 1, 2), 5);
    assert_eq!(KernelParams::index(&cfg, 1, 3, 2), 23);
}

#[test]
fn shift_rule_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-4;
    for n in 1..=3 {
        for depth in 1..=2 {
            let cfg = KernelConfig::new(n, depth).unwrap();
            let kernel = QuantumKernel::new(cfg);
            for _ in 0..5 {
                let (px, th) = draw(n, depth, &mut rng);
                let patch = Patch::new(n, px.clone()).unwrap();
                let params = KernelParams::new(th.clone(), &cfg).unwrap();
                let grads = kernel.gradients(&patch, &params, true).unwrap();
                assert_eq!(grads.params, kernel.grad_params(&patch, &params).unwrap());
                for j in 0..th.len() {
                    let fd = central(
                        |v| {
                            let mut t = th.clone();
                            t[j] = v;
                            forward(n, depth, &px, &t)
                        },
                        th[j],
                        h,
                    );
                    assert!((grads.params[j] - fd).abs() < 1e-6, "n={n} D={depth} param {j}");
                }
                let input = grads.input.unwrap();
                for i in 0..px.len() {
                    let fd = central(
                        |v| {
                            let mut p = px.clone();
                            p[i] = v;
                            forward(n, depth, &p, &th)
                        },
                        px[i],
                        h,
                    );
                    assert!((input[i] - fd).abs() < 1e-6, "n={n} D={depth} pixel {i}");
                }
            }
        }
    }
}

#[test]
fn finite_difference_error_shrinks_quadratically() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (px, th) = draw(2, 2, &mut rng);
    let cfg = KernelConfig::new(2, 2).unwrap();
    let exact = QuantumKernel::new(cfg)
        .grad_params(
            &Patch::new(2, px.clone()).unwrap(),
            &KernelParams::new(th.clone(), &cfg).unwrap(),
        )
        .unwrap();
    let j = 7;
    let err = |h: f64| {
        let fd = central(
            |v| {
                let mut t = th.clone();
                t[j] = v;
                forward(2, 2, &px, &t)
            },
            th[j],
            h,
        );
        (fd - exact[j]).abs()
    };
    let (e1, e2) = (err(0.1), err(0.05));
    assert!(e1 > 1e-8);
    let ratio = e1 / e2;
    assert!((3.0..5.0).contains(&ratio), "halving h reduced the error by {ratio}");
}

#[test]
fn input_gradient_is_nonzero_and_matches_encoding() {
    let cfg = KernelConfig::new(2, 1).unwrap();
    let kernel = QuantumKernel::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (px, th) = draw(2, 1, &mut rng);
    let g = kernel
        .grad_input(&Patch::new(2, px).unwrap(), &KernelParams::new(th, &cfg).unwrap())
        .unwrap();
    assert!(g.iter().any(|v| v.abs() > 1e-3));
}

#[test]
fn encoding_state_amplitudes() {
    // One pixel x: Ry(atan x) then Rz(atan x^2).
    let cfg = KernelConfig::new(1, 1).unwrap();
    let x: f64 = 0.7;
    let state = QuantumKernel::new(cfg)
        .encode(&Patch::new(1, vec![x]).unwrap())
        .unwrap();
    let (t, p) = (x.atan(), (x * x).atan());
    let a = state.amplitudes();
    assert!((a[0].norm() - (t / 2.0).cos()).abs() < 1e-12);
    assert!((a[1].norm() - (t / 2.0).sin()).abs() < 1e-12);
    assert!(((a[1] / a[0]).arg() - p).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn output_is_bounded(px in prop::collection::vec(-50.0f64..50.0, 4), th in prop::collection::vec(-10.0f64..10.0, 24)) {
        let out = forward(2, 2, &px, &th);
        prop_assert!((-1.0..=1.0).contains(&out));
    }

    #[test]
    fn angles_are_two_pi_periodic(px in prop::collection::vec(-3.0f64..3.0, 4), th in prop::collection::vec(-3.0f64..3.0, 12), j in 0usize..12) {
        let mut shifted = th.clone();
        shifted[j] += 2.0 * PI;
        prop_assert!((forward(2, 1, &px, &th) - forward(2, 1, &px, &shifted)).abs() < 1e-10);
    }
}
