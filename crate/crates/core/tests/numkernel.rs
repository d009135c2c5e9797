use mmcert::numkernel::{
    eig_sym, expm, lyapunov, matrix_from_rows, min_eigenvalue, negdef_margin, Matrix, NumError,
    SymMatrix,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn eig_examples() {
    let s = eig_sym(&SymMatrix::identity(2)).unwrap();
    assert_eq!(s.values, vec![1.0, 1.0]);
    let r2 = 2f64.sqrt();
    let s = eig_sym(&SymMatrix::from_rows(&[&[1.0, r2], &[r2, 1.0]]).unwrap()).unwrap();
    assert!(close(s.values[0], 1.0 - r2, 1e-14) && close(s.values[1], 1.0 + r2, 1e-14));
    let s = eig_sym(&SymMatrix::diag(&[3.0, -5.0])).unwrap();
    assert_eq!(s.values, vec![-5.0, 3.0]);
    assert!(close(s.vectors[(1, 0)].abs(), 1.0, 0.0) && close(s.vectors[(0, 1)].abs(), 1.0, 0.0));
}

#[test]
fn non_finite_rejected() {
    let mut m = Matrix::zeros(2, 2);
    m[(0, 1)] = f64::NAN;
    m[(1, 0)] = f64::NAN;
    assert!(matches!(SymMatrix::new(m), Err(NumError::NonFinite(..))));
    assert!(SymMatrix::new(matrix_from_rows(&[&[1.0, 2.0], &[0.0, 1.0]])).is_err());
}

#[test]
fn expm_examples() {
    let z = expm(&Matrix::zeros(3, 3), 2.5).unwrap();
    assert!((z - Matrix::identity(3, 3)).norm() < 1e-15);
    let a1 = matrix_from_rows(&[&[-0.1, 1.0], &[-5.0, -0.1]]);
    let t = std::f64::consts::PI / 5f64.sqrt();
    let e = expm(&a1, t).unwrap();
    let want = -Matrix::identity(2, 2) * (-t / 10.0).exp();
    assert!((e - want).norm() < 1e-10);
    let d = expm(&matrix_from_rows(&[&[-1.0, 0.0], &[0.0, 0.5]]), 1.3).unwrap();
    assert!(close(d[(0, 0)], (-1.3f64).exp(), 1e-13) && close(d[(1, 1)], 0.65f64.exp(), 1e-13));
}

#[test]
fn expm_closed_form_along_time() {
    let a1 = matrix_from_rows(&[&[-0.1, 1.0], &[-5.0, -0.1]]);
    let s5 = 5f64.sqrt();
    for k in 0..50 {
        let t = 0.1 * k as f64;
        let e = expm(&a1, t).unwrap();
        let d = (-t / 10.0).exp();
        let want = matrix_from_rows(&[
            &[d * (s5 * t).cos(), d * (s5 / 5.0) * (s5 * t).sin()],
            &[-d * s5 * (s5 * t).sin(), d * (s5 * t).cos()],
        ]);
        assert!((e - want).norm() < 1e-8, "t = {t}");
    }
}

#[test]
fn negdef_examples() {
    assert_eq!(negdef_margin(&SymMatrix::identity(3).scale(-1.0)), -1.0);
    assert!(close(
        negdef_margin(&SymMatrix::diag(&[3.8, -4.2])),
        3.8,
        1e-15
    ));
    assert_eq!(negdef_margin(&SymMatrix::zeros(2)), 0.0);
    assert!(close(
        min_eigenvalue(&SymMatrix::diag(&[3.8, -4.2])),
        -4.2,
        1e-15
    ));
}

#[test]
fn lyapunov_solves_equation() {
    let a = matrix_from_rows(&[&[-1.0, 2.0], &[-3.0, -1.0]]);
    let p = lyapunov(&a, &SymMatrix::identity(2)).unwrap();
    let r = p.lyap_form(&a).add(&SymMatrix::identity(2));
    assert!(r.norm() < 1e-12);
    assert!(min_eigenvalue(&p) > 0.0);
}

#[test]
fn negdef_dominates_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..=4 {
        let m = random_sym(&mut rng, n);
        let margin = negdef_margin(&m);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..10_000 {
            let v = mmcert::sampling::unit_vector(&mut rng, n);
            best = best.max(m.quad(&v));
        }
        assert!(best <= margin + 1e-12);
        // sampling approaches the margin from below
        let gap = if n == 2 { 1e-4 } else { 0.1 };
        assert!(margin - best < gap, "n = {n}: {margin} vs {best}");
    }
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    use rand::Rng;
    let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    SymMatrix::sym_part(&m)
}

fn sym_strategy(max_n: usize) -> impl Strategy<Value = SymMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, n * n)
            .prop_map(move |v| SymMatrix::sym_part(&Matrix::from_vec(n, n, v)))
    })
}

fn square_strategy(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| Matrix::from_vec(n, n, v))
}

proptest! {
    #[test]
    fn eig_reconstructs(m in sym_strategy(6)) {
        let s = eig_sym(&m).unwrap();
        let n = m.dim();
        let lam = Matrix::from_diagonal(&nalgebra::DVector::from_vec(s.values.clone()));
        let rec = &s.vectors * lam * s.vectors.transpose();
        prop_assert!((rec - m.matrix()).norm() <= 1e-10 * m.norm().max(1e-300));
        let gram = s.vectors.transpose() * &s.vectors;
        prop_assert!((gram - Matrix::identity(n, n)).norm() <= 1e-10);
        prop_assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn expm_semigroup(a in prop_oneof![square_strategy(2), square_strategy(3)], s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let lhs = expm(&a, s).unwrap() * expm(&a, t).unwrap();
        let rhs = expm(&a, s + t).unwrap();
        prop_assert!((lhs - &rhs).norm() <= 1e-8 * (1.0 + rhs.norm()));
    }
}
