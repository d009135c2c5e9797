//! Planar conic partitions: factorization Q = t1 t2' + t2 t1', the chain of
//! switching lines, and the check on each line where V is not smooth.

use crate::inclusion::LinearConeSystem;
use crate::maxmin::{active_indices, MaxMinSpec, QuadraticBasis};
use crate::numkernel::{dot, eig_sym, mat_vec, NumericPolicy, SymMatrix};
use crate::setderiv::{lambda_set, SimplexSet};

use super::CertifyError;

/// Q = t1 t2' + t2 t1' for an indefinite 2x2 Q; t1 has a nonnegative first
/// nonzero component.
pub fn q_cone_decompose(q: &SymMatrix) -> Result<([f64; 2], [f64; 2]), CertifyError> {
    if q.dim() != 2 {
        return Err(CertifyError::Precondition(format!(
            "expected a 2x2 matrix, got {0}x{0}",
            q.dim()
        )));
    }
    let s = eig_sym(q)?;
    let (lm, lp) = (s.values[0], s.values[1]);
    let tol = 1e-12 * q.norm().max(1e-300);
    if !(lm < -tol && lp > tol) {
        return Err(CertifyError::Precondition(format!(
            "matrix is not indefinite (eigenvalues {lm:e}, {lp:e})"
        )));
    }
    let vm = s.vector(0);
    let vp = s.vector(1);
    let eta = (-lm / (lp - lm)).sqrt();
    let kappa = ((lp - lm) / 2.0).sqrt();
    let c = (1.0 - eta * eta).sqrt();
    let mut t1 = [
        kappa * (c * vp[0] - eta * vm[0]),
        kappa * (c * vp[1] - eta * vm[1]),
    ];
    let mut t2 = [
        kappa * (c * vp[0] + eta * vm[0]),
        kappa * (c * vp[1] + eta * vm[1]),
    ];
    let lead = if t1[0].abs() > 1e-14 * (t1[0].abs() + t1[1].abs()) {
        t1[0]
    } else {
        t1[1]
    };
    if lead < 0.0 {
        t1 = [-t1[0], -t1[1]];
        t2 = [-t2[0], -t2[1]];
    }
    Ok((t1, t2))
}

/// Frobenius error of t1 t2' + t2 t1' against Q.
pub fn reconstruction_error(q: &SymMatrix, t1: &[f64; 2], t2: &[f64; 2]) -> f64 {
    let mut e: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let r = t1[i] * t2[j] + t2[i] * t1[j] - q.get(i, j);
            e += r * r;
        }
    }
    e.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingLine {
    /// Normal direction (a factor of the adjacent Q's), first component >= 0.
    pub theta: [f64; 2],
    /// Unit vector spanning the line.
    pub v: [f64; 2],
    pub angle: f64,
    /// The two modes meeting on the line.
    pub modes: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeFactors {
    pub factors: Vec<([f64; 2], [f64; 2])>,
    /// Ordered by the angle of theta.
    pub lines: Vec<SwitchingLine>,
    pub max_reconstruction_error: f64,
}

fn half_angle(t: &[f64; 2]) -> f64 {
    let a = t[1].atan2(t[0]);
    a.rem_euclid(std::f64::consts::PI)
}

/// Factors every Q_i and links the factors into switching lines shared by
/// exactly two modes.
pub fn cone_factors(qs: &[SymMatrix]) -> Result<ConeFactors, CertifyError> {
    let mut factors = Vec::new();
    let mut max_err: f64 = 0.0;
    for q in qs {
        let (t1, t2) = q_cone_decompose(q)?;
        max_err = max_err.max(reconstruction_error(q, &t1, &t2) / q.norm());
        factors.push((t1, t2));
    }
    if max_err > 1e-8 {
        return Err(CertifyError::Partition(format!(
            "factor reconstruction error {max_err:e}"
        )));
    }
    let pi = std::f64::consts::PI;
    let mut lines: Vec<(f64, [f64; 2], Vec<usize>)> = Vec::new();
    for (i, (t1, t2)) in factors.iter().enumerate() {
        for t in [t1, t2] {
            let ang = half_angle(t);
            let found = lines.iter_mut().find(|l| {
                let d = (l.0 - ang).rem_euclid(pi);
                d.min(pi - d) <= 1e-8
            });
            match found {
                Some(l) => l.2.push(i),
                None => lines.push((ang, *t, vec![i])),
            }
        }
    }
    lines.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for (ang, t, modes) in lines {
        if modes.len() != 2 || modes[0] == modes[1] {
            return Err(CertifyError::Partition(format!(
                "switching line at angle {ang:.6} is shared by modes {:?}, expected exactly two",
                modes.iter().map(|m| m + 1).collect::<Vec<_>>()
            )));
        }
        let r = (t[0] * t[0] + t[1] * t[1]).sqrt();
        let mut th = [t[0] / r, t[1] / r];
        if th[0] < 0.0 || (th[0] == 0.0 && th[1] < 0.0) {
            th = [-th[0], -th[1]];
        }
        out.push(SwitchingLine {
            theta: th,
            v: [-th[1], th[0]],
            angle: ang,
            modes: (modes[0].min(modes[1]), modes[0].max(modes[1])),
        });
    }
    Ok(ConeFactors {
        factors,
        lines: out,
        max_reconstruction_error: max_err,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineOutcome {
    /// V is smooth at v.
    Smooth,
    /// No convex combination of the adjacent fields is compatible with all active gradients.
    EmptyLambda,
    /// Worst value of v'P_l(sum lambda_j A_j)v over the vertices of the Lambda set.
    Checked { value: f64, witness: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineReport {
    pub line: SwitchingLine,
    pub active: Vec<usize>,
    pub lambda: SimplexSet,
    pub outcome: LineOutcome,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarReport {
    pub factors: ConeFactors,
    pub lines: Vec<LineReport>,
}

impl PlanarReport {
    pub fn pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }
}

pub fn planar_condition_ii(
    sys: &LinearConeSystem,
    spec: &MaxMinSpec,
    p: &[SymMatrix],
    policy: &NumericPolicy,
) -> Result<PlanarReport, CertifyError> {
    if sys.dim() != 2 {
        return Err(CertifyError::Precondition(
            "planar check needs a 2-D system".into(),
        ));
    }
    let qs: Vec<SymMatrix> = sys.q.iter().flatten().cloned().collect();
    if qs.len() != sys.len() {
        return Err(CertifyError::Precondition(
            "every mode needs a cone region".into(),
        ));
    }
    let factors = if qs.len() >= 2 {
        cone_factors(&qs)?
    } else {
        ConeFactors {
            factors: Vec::new(),
            lines: Vec::new(),
            max_reconstruction_error: 0.0,
        }
    };
    let basis = QuadraticBasis::unchecked(p.to_vec());
    let mut lines = Vec::new();
    for line in &factors.lines {
        let v = line.v.to_vec();
        let act = active_indices(spec, &basis, &v, policy)?;
        if act.indices.len() == 1 {
            lines.push(LineReport {
                line: line.clone(),
                active: act.indices,
                lambda: SimplexSet::FullSimplex { m: 2 },
                outcome: LineOutcome::Smooth,
                pass: true,
            });
            continue;
        }
        let grads: Vec<Vec<f64>> = act
            .indices
            .iter()
            .map(|&l| p[l].apply(&v).into_iter().map(|c| 2.0 * c).collect())
            .collect();
        let (i, k) = line.modes;
        let fields = vec![mat_vec(&sys.a[i], &v), mat_vec(&sys.a[k], &v)];
        let lambda = lambda_set(&grads, &fields, policy);
        if lambda.is_empty() {
            lines.push(LineReport {
                line: line.clone(),
                active: act.indices,
                lambda,
                outcome: LineOutcome::EmptyLambda,
                pass: true,
            });
            continue;
        }
        let l = act.indices[0];
        let pv = p[l].apply(&v);
        let mut worst = (f64::NEG_INFINITY, Vec::new());
        for lam in lambda.vertices() {
            let f: Vec<f64> = (0..2)
                .map(|c| lam[0] * fields[0][c] + lam[1] * fields[1][c])
                .collect();
            let val = dot(&pv, &f);
            if val > worst.0 {
                worst = (val, lam);
            }
        }
        let pass = worst.0 < -policy.margin;
        lines.push(LineReport {
            line: line.clone(),
            active: act.indices,
            lambda,
            outcome: LineOutcome::Checked {
                value: worst.0,
                witness: worst.1,
            },
            pass,
        });
    }
    Ok(PlanarReport { factors, lines })
}
