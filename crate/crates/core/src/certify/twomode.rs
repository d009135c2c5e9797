//! Two modes split by a quadric cone in R^n: sampled exclusion of sliding on
//! x'Qx = 0 and the rank condition on basis differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::inclusion::LinearConeSystem;
use crate::numkernel::{dot, eig_sym, mat_vec, min_singular_value, NumericPolicy, SymMatrix};
use crate::sampling::unit_vector;

use super::CertifyError;

#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionReport {
    pub samples: usize,
    pub min_product: f64,
    pub argmin: Vec<f64>,
    pub pass: bool,
}

/// The common boundary matrix Q with Q_1 = Q and Q_2 a negative multiple of Q.
fn boundary_matrix(
    sys: &LinearConeSystem,
    policy: &NumericPolicy,
) -> Result<SymMatrix, CertifyError> {
    if sys.len() != 2 {
        return Err(CertifyError::Precondition(format!(
            "sliding exclusion needs exactly two modes, got {}",
            sys.len()
        )));
    }
    let (Some(q1), Some(q2)) = (&sys.q[0], &sys.q[1]) else {
        return Err(CertifyError::Precondition(
            "both modes need cone regions".into(),
        ));
    };
    let s = -dot(q1.upper().as_slice(), q2.upper().as_slice())
        / dot(q1.upper().as_slice(), q1.upper().as_slice());
    if !(s > 0.0) || q2.add(&q1.scale(s)).norm() > 1e-9 * q2.norm() {
        return Err(CertifyError::Precondition(
            "regions are not of the form x'Qx > 0 and x'Qx < 0".into(),
        ));
    }
    let det = q1.matrix().determinant();
    if det.abs() <= policy.abs {
        return Err(CertifyError::Precondition(format!(
            "Q is singular (|det| = {:e})",
            det.abs()
        )));
    }
    Ok(q1.clone())
}

/// Minimum over N samples of the signature cone of (z'QA_1z)(z'QA_2z).
pub fn sliding_exclusion(
    sys: &LinearConeSystem,
    policy: &NumericPolicy,
    samples: usize,
) -> Result<ExclusionReport, CertifyError> {
    let q = boundary_matrix(sys, policy)?;
    let n = q.dim();
    let spec = eig_sym(&q)?;
    let pos: Vec<usize> = (0..n).filter(|&k| spec.values[k] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|&k| spec.values[k] < 0.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(CertifyError::Precondition(
            "Q is definite; the switching surface is empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut best = (f64::INFINITY, Vec::new());
    for _ in 0..samples.max(1) {
        let u = unit_vector(&mut rng, pos.len());
        let w = unit_vector(&mut rng, neg.len());
        let mut zbar = vec![0.0; n];
        for (k, &i) in pos.iter().enumerate() {
            zbar[i] = h * u[k];
        }
        for (k, &i) in neg.iter().enumerate() {
            zbar[i] = h * w[k];
        }
        let scaled: Vec<f64> = (0..n)
            .map(|k| zbar[k] / spec.values[k].abs().sqrt())
            .collect();
        let z = mat_vec(&spec.vectors, &scaled);
        let qz = q.apply(&z);
        let a1 = dot(&qz, &mat_vec(&sys.a[0], &z));
        let a2 = dot(&qz, &mat_vec(&sys.a[1], &z));
        let prod = a1 * a2;
        if prod < best.0 {
            best = (prod, z);
        }
    }
    Ok(ExclusionReport {
        samples: samples.max(1),
        min_product: best.0,
        argmin: best.1,
        pass: best.0 > policy.margin,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeReport {
    pub exclusion: ExclusionReport,
    /// Smallest singular value of P_a - P_b per pair a < b.
    pub rank_margins: Vec<((usize, usize), f64)>,
    pub rank_pass: bool,
}

impl TwoModeReport {
    pub fn pass(&self) -> bool {
        self.exclusion.pass && self.rank_pass
    }
}

pub fn check_condition_ii_2mode(
    sys: &LinearConeSystem,
    p: &[SymMatrix],
    policy: &NumericPolicy,
    samples: usize,
) -> Result<TwoModeReport, CertifyError> {
    let exclusion = sliding_exclusion(sys, policy, samples)?;
    let mut rank_margins = Vec::new();
    for a in 0..p.len() {
        for b in a + 1..p.len() {
            rank_margins.push(((a, b), min_singular_value(p[a].sub(&p[b]).matrix())));
        }
    }
    let rank_pass = rank_margins.iter().all(|m| m.1 > policy.abs);
    Ok(TwoModeReport {
        exclusion,
        rank_margins,
        rank_pass,
    })
}
