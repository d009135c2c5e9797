use std::time::Duration;

use mmcert::certify::{
    certify, check_condition_i, check_condition_ii_2mode, cone_factors, linear_system,
    planar_condition_ii, q_cone_decompose, reduced_blocks, report::render_certificate, reverify,
    search_condition_i, sliding_exclusion, Candidate, CandidateSource, CertifyError,
    CertifyOptions, ConditionII, LineOutcome, PairStatus, SearchOptions, Verdict,
};
use mmcert::inclusion::SwitchedSystem;
use mmcert::maxmin::{MaxMinSpec, Polarity};
use mmcert::numkernel::{matrix_from_rows, NumericPolicy, SymMatrix};
use mmcert::problem::{example1, example2, example3};
use mmcert::setderiv::SimplexSet;
use mmcert::sysdsl::parse_config;

fn given(p: &mmcert::problem::Problem) -> Candidate {
    Candidate::from_config(&p.config).expect("candidate in config")
}

#[test]
fn example1_reduces_to_four_inequalities() {
    let pr = example1();
    let sys = linear_system(pr.system().unwrap()).unwrap();
    let ci = check_condition_i(
        &sys,
        pr.spec().unwrap(),
        &given(&pr),
        &NumericPolicy::default(),
    )
    .unwrap();
    let req: Vec<String> = ci
        .required()
        .map(|e| format!("mode {} {}", e.mode + 1, e.block))
        .collect();
    assert_eq!(
        req,
        vec![
            "mode 1 active 1 pairs (1<2, 3<1)",
            "mode 2 active 2 pairs (2<1, 3<2)",
            "mode 3 active 3 pairs (1<3)",
            "mode 3 active 3 pairs (2<3, 3<1)",
        ]
    );
    for e in ci.required() {
        let PairStatus::Required { margin, given, .. } = &e.status else {
            unreachable!()
        };
        assert!(*given);
        assert!(*margin < -1e-6, "{} {margin}", e.block);
    }
    assert!(ci.holds());
}

#[test]
fn example1_block_structure() {
    let pr = example1();
    let blocks = reduced_blocks(pr.spec().unwrap()).unwrap();
    // active 1 and 2 each cover one ordering, active 3 covers four
    let covered: usize = blocks.iter().map(|b| b.orderings.len()).sum();
    assert_eq!(covered, 6);
    assert!(blocks
        .iter()
        .filter(|b| b.active == 2)
        .all(|b| b.pairs.len() <= 2));
}

#[test]
fn mode3_with_identity_fails() {
    let pr = example1();
    let sys = linear_system(pr.system().unwrap()).unwrap();
    let spec = MaxMinSpec::pure_max(1);
    let cand = Candidate::new(vec![SymMatrix::identity(2)]);
    let one = mmcert::inclusion::LinearConeSystem {
        a: vec![sys.a[2].clone()],
        q: vec![None],
    };
    let ci = check_condition_i(&one, &spec, &cand, &NumericPolicy::default()).unwrap();
    assert!((ci.worst() - 3.8).abs() < 1e-12);
    assert!(!ci.holds());
}

#[test]
fn example1_planar_lambda_empty_everywhere() {
    let pr = example1();
    let sys = linear_system(pr.system().unwrap()).unwrap();
    let rep = planar_condition_ii(
        &sys,
        pr.spec().unwrap(),
        &given(&pr).p,
        &NumericPolicy::default(),
    )
    .unwrap();
    assert_eq!(rep.lines.len(), 3);
    for l in &rep.lines {
        assert_eq!(l.lambda, SimplexSet::Empty { m: 2 });
        assert_eq!(l.outcome, LineOutcome::EmptyLambda);
    }
    assert!(rep.pass());
    assert!(rep.factors.max_reconstruction_error < 1e-8);
}

#[test]
fn example1_gas_certified_and_reverified() {
    let pr = example1();
    let opts = CertifyOptions::default();
    let cert = certify(
        pr.system().unwrap(),
        pr.spec().unwrap(),
        CandidateSource::Given(given(&pr)),
        &opts,
    )
    .unwrap();
    assert_eq!(cert.verdict, Verdict::GasCertified);
    assert!(matches!(cert.condition_ii, Some(ConditionII::Planar(_))));
    assert!(reverify(pr.system().unwrap(), pr.spec().unwrap(), &cert).unwrap());
}

#[test]
fn fixed_basis_finds_multipliers() {
    let pr = example1();
    let p = given(&pr).p;
    let cert = certify(
        pr.system().unwrap(),
        pr.spec().unwrap(),
        CandidateSource::FixedBasis(p),
        &CertifyOptions::default(),
    )
    .unwrap();
    assert_eq!(cert.verdict, Verdict::GasCertified);
    assert!(cert.condition_i.unwrap().worst() < -1e-3);
}

#[test]
fn example3_certified() {
    let pr = example3();
    let sys = linear_system(pr.system().unwrap()).unwrap();
    let policy = NumericPolicy::default();
    let ci = check_condition_i(&sys, pr.spec().unwrap(), &given(&pr), &policy).unwrap();
    assert!(ci.holds());
    assert_eq!(ci.required().count(), 2);
    let ex = sliding_exclusion(&sys, &policy, 10_000).unwrap();
    assert!(ex.min_product > 0.0 && ex.pass);
    let rep = check_condition_ii_2mode(&sys, &given(&pr).p, &policy, 10_000).unwrap();
    assert!(rep.rank_pass && rep.pass());
    let cert = certify(
        pr.system().unwrap(),
        pr.spec().unwrap(),
        CandidateSource::Given(given(&pr)),
        &CertifyOptions::default(),
    )
    .unwrap();
    assert_eq!(cert.verdict, Verdict::GasCertified);
}

#[test]
fn sliding_exclusion_fails_for_equal_fields() {
    let a = matrix_from_rows(&[&[-1.0, 0.0], &[0.0, -1.0]]);
    let q = SymMatrix::diag(&[1.0, -1.0]);
    let sys = linear_system(
        &SwitchedSystem::linear_cones(vec![a.clone(), a], vec![q.clone(), q.scale(-1.0)]).unwrap(),
    )
    .unwrap();
    let ex = sliding_exclusion(&sys, &NumericPolicy::default(), 1000).unwrap();
    assert!(ex.min_product.abs() < 1e-12);
    assert!(!ex.pass);
}

#[test]
fn sliding_exclusion_fails_on_example2_linear_part() {
    let pr = example2(10.0);
    let a1 = matrix_from_rows(&[&[-0.1, 1.0], &[-5.0, -0.1]]);
    let a2 = matrix_from_rows(&[&[-0.1, -5.0], &[1.0, -0.1]]);
    let q = SymMatrix::diag(&[1.0, -1.0]);
    let _ = pr;
    let sys = linear_system(
        &SwitchedSystem::linear_cones(vec![a2, a1], vec![q.clone(), q.scale(-1.0)]).unwrap(),
    )
    .unwrap();
    let ex = sliding_exclusion(&sys, &NumericPolicy::default(), 1000).unwrap();
    assert!(ex.min_product <= 0.0);
}

#[test]
fn example3_with_sliding_mode_fails_exclusion() {
    let pr = example3();
    let mut sys = linear_system(pr.system().unwrap()).unwrap();
    sys.a[1] = -sys.a[0].clone();
    let rep =
        check_condition_ii_2mode(&sys, &given(&pr).p, &NumericPolicy::default(), 2000).unwrap();
    assert!(!rep.exclusion.pass);
}

#[test]
fn equal_basis_fails_rank() {
    let pr = example3();
    let sys = linear_system(pr.system().unwrap()).unwrap();
    let p = vec![SymMatrix::identity(3), SymMatrix::identity(3)];
    let rep = check_condition_ii_2mode(&sys, &p, &NumericPolicy::default(), 100).unwrap();
    assert!(!rep.rank_pass);
}

#[test]
fn singular_q_rejected() {
    let a = matrix_from_rows(&[&[-1.0, 0.0], &[0.0, -1.0]]);
    let q = SymMatrix::diag(&[1.0, 0.0]);
    let sys = linear_system(
        &SwitchedSystem::linear_cones(vec![a.clone(), a], vec![q.clone(), q.scale(-1.0)]).unwrap(),
    )
    .unwrap();
    assert!(matches!(
        sliding_exclusion(&sys, &NumericPolicy::default(), 10),
        Err(CertifyError::Precondition(_))
    ));
}

#[test]
fn q_cone_examples() {
    let (t1, t2) = q_cone_decompose(&SymMatrix::diag(&[1.0, -1.0])).unwrap();
    let h = 0.5f64.sqrt();
    let got = [t1, t2];
    let want = [[h, -h], [h, h]];
    for (g, w) in got.iter().zip(&want) {
        assert!(
            (g[0] - w[0]).abs() < 1e-12 && (g[1] - w[1]).abs() < 1e-12,
            "{got:?}"
        );
    }
    let s2 = 2f64.sqrt();
    let q3 = SymMatrix::from_rows(&[&[1.0, s2], &[s2, 1.0]]).unwrap();
    let (t1, t2) = q_cone_decompose(&q3).unwrap();
    assert!(mmcert::certify::planar::reconstruction_error(&q3, &t1, &t2) < 1e-10);
    assert!(q_cone_decompose(&SymMatrix::diag(&[1.0, 0.0])).is_err());
}

#[test]
fn inconsistent_chain_rejected() {
    let q = SymMatrix::diag(&[1.0, -1.0]);
    let q2 = SymMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
    assert!(matches!(
        cone_factors(&[q, q2]),
        Err(CertifyError::Partition(_))
    ));
}

#[test]
fn planar_failure_with_expanding_sliding() {
    // example 2 linear parts with the damping reversed: sliding along x1 = x2 runs outward
    let a1 = matrix_from_rows(&[&[3.0, 1.0], &[-5.0, 3.0]]);
    let a2 = matrix_from_rows(&[&[3.0, -5.0], &[1.0, 3.0]]);
    let q = SymMatrix::diag(&[1.0, -1.0]);
    let sys =
        linear_system(&SwitchedSystem::linear_cones(vec![a1, a2], vec![q.scale(-1.0), q]).unwrap())
            .unwrap();
    let p = vec![SymMatrix::diag(&[5.0, 1.0]), SymMatrix::diag(&[1.0, 5.0])];
    let spec = MaxMinSpec::new(2, vec![vec![0], vec![1]], Polarity::MaxOfMin).unwrap();
    let rep = planar_condition_ii(&sys, &spec, &p, &NumericPolicy::default()).unwrap();
    assert!(!rep.pass());
    let bad = rep.lines.iter().find(|l| !l.pass).unwrap();
    let LineOutcome::Checked { value, witness } = &bad.outcome else {
        panic!("{:?}", bad.outcome)
    };
    // direct evaluation of the quadratic form at the reported weights
    let v = bad.line.v;
    let l = bad.active[0];
    let f = |m: &mmcert::numkernel::Matrix| {
        [
            m[(0, 0)] * v[0] + m[(0, 1)] * v[1],
            m[(1, 0)] * v[0] + m[(1, 1)] * v[1],
        ]
    };
    let (i, k) = bad.line.modes;
    let (fi, fk) = (f(&sys.a[i]), f(&sys.a[k]));
    let pv = p[l].apply(&v);
    let direct = (0..2)
        .map(|c| pv[c] * (witness[0] * fi[c] + witness[1] * fk[c]))
        .sum::<f64>();
    assert!((direct - value).abs() < 1e-12 && *value > 0.0);
}

#[test]
fn three_dim_three_modes_is_condition_i_only() {
    let a = matrix_from_rows(&[&[-1.0, 0.0, 0.0], &[0.0, -1.0, 0.0], &[0.0, 0.0, -1.0]]);
    let q1 = SymMatrix::diag(&[1.0, -1.0, 0.0]);
    let q2 = SymMatrix::diag(&[-1.0, 1.0, 0.0]);
    let q3 = SymMatrix::diag(&[0.0, 0.0, 1.0]);
    let sys =
        SwitchedSystem::linear_cones(vec![a.clone(), a.clone(), a], vec![q1, q2, q3]).unwrap();
    let spec = MaxMinSpec::pure_max(1);
    let cert = certify(
        &sys,
        &spec,
        CandidateSource::Given(Candidate::new(vec![SymMatrix::identity(3)])),
        &CertifyOptions::default(),
    )
    .unwrap();
    assert_eq!(cert.verdict, Verdict::ConditionIOnly);
    assert!(cert.notes.iter().any(|n| n.contains("unchecked")));
}

#[test]
fn too_many_basis_functions_refused() {
    let pr = example1();
    let sys = linear_system(pr.system().unwrap()).unwrap();
    let spec = MaxMinSpec::pure_max(7);
    let p: Vec<SymMatrix> = (0..7)
        .map(|k| SymMatrix::diag(&[1.0 + k as f64, 1.0]))
        .collect();
    let r = check_condition_i(&sys, &spec, &Candidate::new(p), &NumericPolicy::default());
    assert!(matches!(r, Err(CertifyError::Complexity { k: 7 })));
}

#[test]
fn indefinite_basis_rejected() {
    let pr = example1();
    let sys = linear_system(pr.system().unwrap()).unwrap();
    let mut c = given(&pr);
    c.p[1] = SymMatrix::diag(&[1.0, -1.0]);
    let r = check_condition_i(&sys, pr.spec().unwrap(), &c, &NumericPolicy::default());
    assert!(matches!(r, Err(CertifyError::NotPositiveDefinite(1))));
}

#[test]
fn report_reparses_and_reverifies() {
    let pr = example1();
    let cert = certify(
        pr.system().unwrap(),
        pr.spec().unwrap(),
        CandidateSource::Given(given(&pr)),
        &CertifyOptions::default(),
    )
    .unwrap();
    let text = render_certificate(&pr.config, &cert);
    let cfg = parse_config(&text).unwrap();
    assert!(cfg.extra.contains_key("margins"));
    assert!(cfg.extra["verdict"]
        .iter()
        .any(|l| l.contains("gas-certified")));
    let back = mmcert::problem::Problem::from_config(cfg).unwrap();
    let c2 = Candidate::from_config(&back.config).unwrap();
    assert_eq!(c2, given(&pr));
    let again = certify(
        back.system().unwrap(),
        back.spec().unwrap(),
        CandidateSource::Given(c2),
        &CertifyOptions::default(),
    )
    .unwrap();
    assert_eq!(again.verdict, Verdict::GasCertified);
}

#[test]
fn search_single_stable_mode() {
    let pr = parse_config("[system]\ndim = 2\nmode 1 { A = [[-1, 2], [-3, -1]]; region = all }\n")
        .unwrap();
    let sys =
        linear_system(&SwitchedSystem::from_config(pr.system.as_ref().unwrap()).unwrap()).unwrap();
    let opts = SearchOptions {
        budget: Duration::from_secs(5),
        ..SearchOptions::default()
    };
    let out = search_condition_i(
        &sys,
        &MaxMinSpec::pure_max(1),
        &opts,
        &NumericPolicy::default(),
    )
    .unwrap();
    assert!(out.candidate().is_some());
}

#[test]
fn search_unstable_mode_not_found() {
    let a = matrix_from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let sys = mmcert::inclusion::LinearConeSystem {
        a: vec![a],
        q: vec![None],
    };
    let opts = SearchOptions {
        budget: Duration::from_millis(500),
        ..SearchOptions::default()
    };
    let out = search_condition_i(
        &sys,
        &MaxMinSpec::pure_max(1),
        &opts,
        &NumericPolicy::default(),
    )
    .unwrap();
    assert!(out.candidate().is_none());
}

#[test]
fn search_example1_structure() {
    let pr = example1();
    let sys = linear_system(pr.system().unwrap()).unwrap();
    let out = search_condition_i(
        &sys,
        pr.spec().unwrap(),
        &SearchOptions::default(),
        &NumericPolicy::default(),
    )
    .unwrap();
    let cand = out.candidate().expect("candidate within budget");
    let strict = NumericPolicy {
        margin: 1e-6,
        ..NumericPolicy::default()
    };
    let ci = check_condition_i(&sys, pr.spec().unwrap(), cand, &strict).unwrap();
    assert!(ci.holds(), "{ci:?}");
}

#[test]
fn q_cone_reconstruction_random() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let mut done = 0;
    while done < 1000 {
        let (a, b, c) = (
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        if a * c - b * b >= -1e-6 {
            continue;
        }
        let q = SymMatrix::from_rows(&[&[a, b], &[b, c]]).unwrap();
        let (t1, t2) = q_cone_decompose(&q).unwrap();
        assert!(
            mmcert::certify::planar::reconstruction_error(&q, &t1, &t2) <= 1e-8 * q.norm().max(1.0),
            "{q:?}"
        );
        done += 1;
    }
}
