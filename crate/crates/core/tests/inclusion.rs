use mmcert::inclusion::{
    filippov_set, index_set, validate_partition, InclusionError, SwitchedSystem,
};
use mmcert::numkernel::{mat_vec, matrix_from_rows, NumericPolicy, SymMatrix};
use mmcert::problem::{example1, example1_lines, example2, example3};
use mmcert::sampling::sphere_points;

#[test]
fn example3_index_sets() {
    let pr = example3();
    let sys = pr.system().unwrap();
    let p = NumericPolicy::default();
    assert_eq!(index_set(sys, &[1.0, 0.0, 0.0], &p).unwrap(), vec![0]);
    assert_eq!(index_set(sys, &[1.0, 0.0, 1.0], &p).unwrap(), vec![0, 1]);
}

#[test]
fn example1_line_shared_by_modes_1_and_2() {
    let pr = example1();
    let sys = pr.system().unwrap();
    assert_eq!(
        index_set(sys, &[1.0, -1.0], &NumericPolicy::default()).unwrap(),
        vec![0, 1]
    );
}

#[test]
fn filippov_examples() {
    let p = NumericPolicy::default();
    let pr = example1();
    let sys = pr.system().unwrap();
    let f = filippov_set(sys, &[1.0, 0.3], &p).unwrap();
    assert_eq!(f.vertices.len(), 1);
    assert_eq!(f.vertices.len(), f.modes.len());

    let v1 = example1_lines()[0];
    let f = filippov_set(sys, &v1, &p).unwrap();
    assert_eq!(f.modes, vec![0, 2]);
    let lin = sys.as_linear().unwrap();
    assert_eq!(
        f.vertices,
        vec![mat_vec(&lin.a[0], &v1), mat_vec(&lin.a[2], &v1)]
    );

    let pr = example2(0.0);
    let f = filippov_set(pr.system().unwrap(), &[1.0, 1.0], &p).unwrap();
    let mut got = f.vertices.clone();
    got.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let want = [[-5.1, 0.9], [0.9, -5.1]];
    for (g, w) in got.iter().zip(&want) {
        assert!(
            (g[0] - w[0]).abs() < 1e-12 && (g[1] - w[1]).abs() < 1e-12,
            "{got:?}"
        );
    }
}

#[test]
fn coverage_error_for_gap() {
    let a = matrix_from_rows(&[&[-1.0, 0.0], &[0.0, -1.0]]);
    let q = SymMatrix::diag(&[1.0, -1.0]);
    let sys = SwitchedSystem::linear_cones(vec![a], vec![q]).unwrap();
    let err = index_set(&sys, &[0.0, 1.0], &NumericPolicy::default()).unwrap_err();
    assert!(matches!(err, InclusionError::Coverage(_)));
    let rep = validate_partition(&sys, 500, 1, &NumericPolicy::default()).unwrap();
    assert!(!rep.ok() && !rep.uncovered.is_empty());
}

#[test]
fn example_partitions_are_valid() {
    let p = NumericPolicy::default();
    for pr in [example1(), example2(10.0), example3()] {
        let rep = validate_partition(pr.system().unwrap(), 10_000, 2, &p).unwrap();
        assert!(
            rep.ok(),
            "{:?} {:?}",
            rep.uncovered.first(),
            rep.overlapping.first()
        );
    }
}

#[test]
fn cone_index_set_is_homogeneous() {
    let p = NumericPolicy::default();
    let pr = example1();
    let sys = pr.system().unwrap();
    let mut pts = sphere_points(2, 300, 1.0, 9);
    pts.extend(example1_lines().iter().map(|v| v.to_vec()));
    for x in pts {
        let base = index_set(sys, &x, &p).unwrap();
        for s in [-3.0, -0.5, 0.01, 7.0] {
            let y: Vec<f64> = x.iter().map(|c| c * s).collect();
            assert_eq!(index_set(sys, &y, &p).unwrap(), base);
        }
    }
}
