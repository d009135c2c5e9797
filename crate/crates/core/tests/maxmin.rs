use mmcert::maxmin::{
    active_indices, clarke_gradient, dualize, eval, phi, values, ActiveMethod, Basis, MaxMinSpec,
    Permutation, Polarity, QuadraticBasis,
};
use mmcert::numkernel::{NumericPolicy, SymMatrix};
use mmcert::problem::{abs_value, example1, example1_lines};
use mmcert::sampling::sphere_points;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn perm(v: &[usize]) -> Permutation {
    Permutation::new(v.iter().map(|i| i - 1).collect()).unwrap()
}

#[test]
fn phi_table_example1() {
    let pr = example1();
    let spec = pr.spec().unwrap();
    let order = [
        [1, 2, 3],
        [1, 3, 2],
        [2, 1, 3],
        [2, 3, 1],
        [3, 1, 2],
        [3, 2, 1],
    ];
    let got: Vec<usize> = order.iter().map(|r| phi(spec, &perm(r)) + 1).collect();
    assert_eq!(got, vec![3, 3, 3, 3, 1, 2]);
}

#[test]
fn phi_pure_max_is_last() {
    let spec = MaxMinSpec::pure_max(4);
    for p in Permutation::all(4) {
        assert_eq!(phi(&spec, &p), p.as_slice()[3]);
    }
    assert_eq!(phi(&MaxMinSpec::pure_max(1), &perm(&[1])), 0);
}

#[test]
fn dualize_examples() {
    let s = MaxMinSpec::new(3, vec![vec![0, 1], vec![2]], Polarity::MaxOfMin).unwrap();
    let d = dualize(&s);
    assert_eq!(d.polarity(), Polarity::MinOfMax);
    assert_eq!(d.families(), &[vec![0, 2], vec![1, 2]]);

    let s = MaxMinSpec::new(2, vec![vec![0], vec![1]], Polarity::MaxOfMin).unwrap();
    let d = dualize(&s);
    assert_eq!(d.families(), &[vec![0, 1]]);
    assert_eq!(d.polarity(), Polarity::MinOfMax);

    // a single family distributes into singletons
    let s = MaxMinSpec::new(2, vec![vec![0, 1]], Polarity::MaxOfMin).unwrap();
    assert_eq!(dualize(&s).families(), &[vec![0], vec![1]]);
    assert_eq!(dualize(&dualize(&s)), s);
}

#[test]
fn eval_examples() {
    let b = QuadraticBasis::new(vec![
        SymMatrix::diag(&[5.0, 1.0]),
        SymMatrix::diag(&[1.0, 5.0]),
    ])
    .unwrap();
    assert_eq!(
        eval(&MaxMinSpec::pure_min(2), &b, &[0.0, 0.0]).unwrap(),
        0.0
    );
    assert_eq!(
        eval(&MaxMinSpec::pure_min(2), &b, &[1.0, 1.0]).unwrap(),
        6.0
    );
    let (_, spec, basis) = abs_value(1.0, 1.0);
    assert_eq!(eval(&spec, &basis, &[-2.0]).unwrap(), 2.0);
}

#[test]
fn active_examples() {
    let policy = NumericPolicy::default();
    let b = QuadraticBasis::new(vec![
        SymMatrix::diag(&[5.0, 1.0]),
        SymMatrix::diag(&[1.0, 5.0]),
    ])
    .unwrap();
    let a = active_indices(&MaxMinSpec::pure_min(2), &b, &[1.0, 0.0], &policy).unwrap();
    assert_eq!(a.indices, vec![1]);
    assert_eq!(a.method, ActiveMethod::ExactSmooth);

    let pr = example1();
    let v1 = example1_lines()[0];
    let a = active_indices(pr.spec().unwrap(), pr.basis().unwrap(), &v1, &policy).unwrap();
    assert_eq!(a.indices, vec![0, 2]);

    let (_, spec, basis) = abs_value(1.0, 1.0);
    let a = active_indices(&spec, &basis, &[0.0], &policy).unwrap();
    assert_eq!(a.indices, vec![0, 1]);
}

#[test]
fn clarke_examples() {
    let policy = NumericPolicy::default();
    let pr = example1();
    let p = pr.basis().unwrap().quadratic().unwrap().to_vec();
    let v1 = example1_lines()[0];
    let h = clarke_gradient(pr.spec().unwrap(), pr.basis().unwrap(), &v1, &policy).unwrap();
    let want: Vec<Vec<f64>> = [0, 2]
        .iter()
        .map(|&l| p[l].apply(&v1).iter().map(|c| 2.0 * c).collect())
        .collect();
    assert_eq!(h.vertices.len(), 2);
    for (g, w) in h.vertices.iter().zip(&want) {
        assert!((g[0] - w[0]).abs() < 1e-12 && (g[1] - w[1]).abs() < 1e-12);
    }

    let h = clarke_gradient(
        pr.spec().unwrap(),
        pr.basis().unwrap(),
        &[1.0, 0.3],
        &policy,
    )
    .unwrap();
    assert_eq!(h.vertices.len(), 1);

    let (_, spec, basis) = abs_value(1.0, 1.0);
    let h = clarke_gradient(&spec, &basis, &[0.0], &policy).unwrap();
    let mut v: Vec<f64> = h.vertices.iter().map(|g| g[0]).collect();
    v.sort_by(f64::total_cmp);
    assert_eq!(v, vec![-1.0, 1.0]);
}

#[test]
fn degenerate_basis_warns() {
    let b = QuadraticBasis::new(vec![SymMatrix::identity(2), SymMatrix::identity(2)]).unwrap();
    let a = active_indices(
        &MaxMinSpec::pure_max(2),
        &b,
        &[1.0, 0.5],
        &NumericPolicy::default(),
    )
    .unwrap();
    assert!(a.warning.is_some());
}

fn random_spec(rng: &mut ChaCha8Rng, k: usize) -> MaxMinSpec {
    let j = rng.random_range(1..=3);
    let families: Vec<Vec<usize>> = (0..j)
        .map(|_| {
            let mut f: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
            if f.is_empty() {
                f.push(rng.random_range(0..k));
            }
            f
        })
        .collect();
    let pol = if rng.random_bool(0.5) {
        Polarity::MaxOfMin
    } else {
        Polarity::MinOfMax
    };
    MaxMinSpec::new(k, families, pol).unwrap()
}

#[test]
fn dualize_pointwise_equal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut points = 0;
    while points < 10_000 {
        let k = rng.random_range(1..=5);
        let spec = random_spec(&mut rng, k);
        let dual = dualize(&spec);
        for _ in 0..100 {
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert_eq!(spec.combine(&v), dual.combine(&v), "{spec:?}");
            points += 1;
        }
    }
}

fn example_basis() -> QuadraticBasis {
    let pr = example1();
    QuadraticBasis::new(pr.basis().unwrap().quadratic().unwrap().to_vec()).unwrap()
}

#[test]
fn phi_consistency_on_random_points() {
    let pr = example1();
    let spec = pr.spec().unwrap();
    let basis = example_basis();
    let policy = NumericPolicy::default();
    for x in sphere_points(2, 1000, 1.0, 5) {
        let vals = values(&basis, &x).unwrap();
        let Some(rho) = Permutation::of_values(&vals) else {
            continue;
        };
        let a = active_indices(spec, &basis, &x, &policy).unwrap();
        assert_eq!(a.indices, vec![phi(spec, &rho)]);
    }
}

proptest! {
    #[test]
    fn active_inside_equal_value_set(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, line in 0usize..4) {
        let pr = example1();
        let spec = pr.spec().unwrap();
        let basis = example_basis();
        let policy = NumericPolicy::default();
        // half the cases sit exactly on a switching line
        let x = if line < 3 { let v = example1_lines()[line]; vec![v[0] * x0, v[1] * x0] } else { vec![x0, x1] };
        prop_assume!(x.iter().any(|c| *c != 0.0));
        let vals = values(&basis, &x).unwrap();
        let v = spec.combine(&vals);
        let a = active_indices(spec, &basis, &x, &policy).unwrap();
        prop_assert!(!a.indices.is_empty());
        for &l in &a.indices {
            prop_assert!((vals[l] - v).abs() <= policy.tie(v) * 10.0);
        }
    }

    #[test]
    fn homogeneity(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, s in prop::sample::select(vec![-2.0, -1.0, 0.5, 3.0])) {
        prop_assume!(x0.abs() + x1.abs() > 1e-3);
        let pr = example1();
        let spec = pr.spec().unwrap();
        let basis = example_basis();
        let policy = NumericPolicy::default();
        let x = [x0, x1];
        let y = [s * x0, s * x1];
        let (vx, vy) = (eval(spec, &basis, &x).unwrap(), eval(spec, &basis, &y).unwrap());
        prop_assert!((vy - s * s * vx).abs() <= 1e-12 * (1.0 + vy.abs()));
        prop_assert_eq!(active_indices(spec, &basis, &x, &policy).unwrap().indices, active_indices(spec, &basis, &y, &policy).unwrap().indices);
    }
}

#[test]
fn basis_dimension_checked() {
    let b = example_basis();
    assert_eq!(b.dim(), 2);
    assert!(values(&b, &[1.0, 2.0, 3.0]).is_err());
}
