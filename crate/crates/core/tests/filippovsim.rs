use mmcert::filippovsim::{
    export_csv, fd_lie_check, phase_portrait_svg, simulate, sliding_lambda, Regime, SimOptions,
    SlideTest, Status,
};
use mmcert::inclusion::{Mode, Region, SwitchedSystem, VectorField};
use mmcert::numkernel::{expm, mat_vec, matrix_from_rows, norm, NumericPolicy};
use mmcert::problem::{example1, example2, example3, Problem};

fn half_turn(z0: &[f64]) -> mmcert::filippovsim::Trajectory {
    let p = example1();
    let mut opts = SimOptions::new(20.0);
    opts.max_crossings = Some(3);
    simulate(p.system().unwrap(), z0, &opts).unwrap()
}

#[test]
fn example1_half_turn_contracts() {
    let traj = half_turn(&[-1.0, 1.0]);
    let c = traj.crossings();
    assert_eq!(c.len(), 3);
    let seq: Vec<_> = c.iter().map(|e| (e.from, e.to)).collect();
    assert_eq!(
        seq,
        vec![
            (Regime::Mode(0), Regime::Mode(2)),
            (Regime::Mode(2), Regime::Mode(1)),
            (Regime::Mode(1), Regime::Mode(0))
        ]
    );
    let z3 = norm(&c[2].x);
    assert!((z3 - 1.2671).abs() < 1e-3, "{z3}");
    let beta = z3 / 2f64.sqrt();
    assert!((beta - 0.8961).abs() < 1e-3, "{beta}");
}

#[test]
fn example1_central_symmetry() {
    let a = half_turn(&[-1.0, 1.0]);
    let b = half_turn(&[1.0, -1.0]);
    assert_eq!(a.samples.len(), b.samples.len());
    for (p, q) in a.samples.iter().zip(&b.samples) {
        assert!((p.t - q.t).abs() < 1e-8);
        for (u, v) in p.x.iter().zip(&q.x) {
            assert!((u + v).abs() < 1e-8);
        }
    }
}

#[test]
fn single_mode_decay() {
    let sys = SwitchedSystem::from_config(
        &mmcert::sysdsl::parse_config(
            "[system]\ndim = 2\nmode 1 { A = [[-1, 0], [0, -1]]; region = all }\n",
        )
        .unwrap()
        .system
        .unwrap(),
    )
    .unwrap();
    let traj = simulate(&sys, &[1.0, 0.0], &SimOptions::new(1.0)).unwrap();
    assert_eq!(traj.status, Status::Completed);
    let end = traj.last();
    assert!((end.t - 1.0).abs() < 1e-12);
    assert!((end.x[0] - (-1f64).exp()).abs() < 1e-6);
}

fn single(a: mmcert::numkernel::Matrix) -> SwitchedSystem {
    SwitchedSystem::new(
        a.nrows(),
        vec![Mode {
            field: VectorField::Linear(a),
            region: Region::All,
        }],
    )
    .unwrap()
}

#[test]
fn single_linear_mode_matches_expm() {
    let a = matrix_from_rows(&[&[-0.1, 1.0], &[-5.0, -0.1]]);
    let sys = single(a.clone());
    let x0 = [0.4, -1.3];
    let traj = simulate(&sys, &x0, &SimOptions::new(10.0)).unwrap();
    assert_eq!(traj.status, Status::Completed);
    for s in traj.samples.iter().step_by(7) {
        let want = mat_vec(&expm(&a, s.t).unwrap(), &x0);
        let err = norm(
            &s.x.iter()
                .zip(&want)
                .map(|(p, q)| p - q)
                .collect::<Vec<_>>(),
        );
        assert!(err <= 1e-6 * norm(&want).max(1e-3), "t = {}: {err}", s.t);
    }
}

fn fd_along(p: &Problem, starts: &[Vec<f64>], horizon: f64) -> usize {
    let pol = NumericPolicy::default();
    let (sys, spec, basis) = (p.system().unwrap(), p.spec().unwrap(), p.basis().unwrap());
    let mut n = 0;
    for x0 in starts {
        let traj = simulate(sys, x0, &SimOptions::new(horizon)).unwrap();
        for c in fd_lie_check(&traj, sys, spec, basis, &pol).unwrap() {
            assert!(
                c.ok,
                "{x0:?} t = {}: fd {} not in [{}, {}]",
                c.t, c.fd, c.lo, c.hi
            );
            n += 1;
        }
    }
    n
}

#[test]
fn fd_derivative_inside_lie_set() {
    assert!(
        fd_along(
            &example1(),
            &[vec![-1.0, 1.0], vec![0.3, 2.0], vec![2.0, -0.1]],
            10.0
        ) > 50
    );
    assert!(
        fd_along(
            &example2(10.0),
            &[vec![0.3, 0.3], vec![1.0, -0.2], vec![-0.5, 2.0]],
            2.0
        ) > 50
    );
    assert!(
        fd_along(
            &example3(),
            &[vec![1.0, 0.0, 0.5], vec![0.2, -0.4, 1.0]],
            10.0
        ) > 50
    );
}

#[test]
fn sliding_stays_on_surface() {
    let p = example2(10.0);
    let traj = simulate(p.system().unwrap(), &[0.3, 0.3], &SimOptions::new(2.0)).unwrap();
    let mut seen = 0;
    for s in traj
        .samples
        .iter()
        .filter(|s| matches!(s.regime, Regime::Sliding { .. }))
    {
        let r = (s.x[0].abs() - s.x[1].abs()).abs();
        assert!(r <= 1e-8 * (1.0 + norm(&s.x)), "{:?}", s.x);
        assert!((s.regime.lambda().unwrap() - 0.5).abs() < 1e-9);
        seen += 1;
    }
    assert!(seen > 0);
}

#[test]
fn csv_layout() {
    let sys = single(matrix_from_rows(&[&[-1.0]]));
    let traj = simulate(&sys, &[1.0], &SimOptions::new(0.0)).unwrap();
    let csv = export_csv(&traj, None).unwrap();
    assert_eq!(csv, "t,x1,regime,lambda\n0,1,Mode(1),\n");

    let p = example3();
    let traj = simulate(p.system().unwrap(), &[1.0, 0.0, 0.5], &SimOptions::new(3.0)).unwrap();
    let csv = export_csv(&traj, Some((p.spec().unwrap(), p.basis().unwrap()))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,x3,regime,lambda,V"));
    assert!(lines.all(|l| l.split(',').count() == 7));
    let again = export_csv(
        &simulate(p.system().unwrap(), &[1.0, 0.0, 0.5], &SimOptions::new(3.0)).unwrap(),
        Some((p.spec().unwrap(), p.basis().unwrap())),
    )
    .unwrap();
    assert_eq!(csv, again);
}

#[test]
fn svg_portrait() {
    let p = example1();
    let traj = half_turn(&[-1.0, 1.0]);
    let svg = phase_portrait_svg(
        &[traj],
        &[1.0, 2.0],
        Some((p.spec().unwrap(), p.basis().unwrap())),
    )
    .unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline") && svg.contains("<path"));
}

#[test]
fn example2_slides_on_both_lines() {
    let p = example2(10.0);
    let sys = p.system().unwrap();
    let pol = NumericPolicy::default();
    for s in [0.01, 0.5, 3.0] {
        for x in [[s, s], [-s, -s], [s, -s], [-s, s]] {
            match sliding_lambda(sys, &x, 0, 1, &pol).unwrap() {
                SlideTest::Sliding(l) => assert!((l - 0.5).abs() < 1e-9, "{l}"),
                other => panic!("{other:?} at {x:?}"),
            }
        }
    }
    let traj = simulate(sys, &[0.3, 0.3], &SimOptions::new(2.0)).unwrap();
    assert!(traj
        .samples
        .iter()
        .any(|s| matches!(s.regime, Regime::Sliding { .. })));
    let csv = export_csv(&traj, Some((p.spec().unwrap(), p.basis().unwrap()))).unwrap();
    assert!(csv.starts_with("t,x1,x2,regime,lambda,V\n"));
    assert!(csv.contains("Sliding(1)"));
    println!("{}", traj.status);
    println!("{}", &csv[..csv.len().min(600)]);
}
