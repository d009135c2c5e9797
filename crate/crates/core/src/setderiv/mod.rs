//! Set-valued derivatives of max-min functions along Filippov fields: the
//! simplex set of consistent convex combinations, the Lie derivative set and
//! the Clarke derivative interval, plus sampled decrease checks.

pub mod lp;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::inclusion::{filippov_set, InclusionError, SwitchedSystem};
use crate::maxmin::{clarke_gradient, Basis, MaxMinError, MaxMinSpec};
use crate::numkernel::{dot, norm, NumericPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DerivError {
    #[error(
        "Lie values disagree across active indices by {spread:e} (active set over-approximated?)"
    )]
    Inconsistent { spread: f64 },
    #[error("empty sample set")]
    NoSamples,
    #[error("sample {0} is the origin")]
    ZeroSample(usize),
    #[error(transparent)]
    MaxMin(#[from] MaxMinError),
    #[error(transparent)]
    Inclusion(#[from] InclusionError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexSet {
    Empty {
        m: usize,
    },
    Point(Vec<f64>),
    Segment(Vec<f64>, Vec<f64>),
    /// `exhaustive` is false when only optimization witnesses are listed.
    Polytope {
        vertices: Vec<Vec<f64>>,
        exhaustive: bool,
    },
    FullSimplex {
        m: usize,
    },
}

impl SimplexSet {
    pub fn is_empty(&self) -> bool {
        matches!(self, SimplexSet::Empty { .. })
    }

    /// Extreme points (unit vectors for the full simplex).
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        match self {
            SimplexSet::Empty { .. } => Vec::new(),
            SimplexSet::Point(p) => vec![p.clone()],
            SimplexSet::Segment(a, b) => vec![a.clone(), b.clone()],
            SimplexSet::Polytope { vertices, .. } => vertices.clone(),
            SimplexSet::FullSimplex { m } => (0..*m)
                .map(|j| (0..*m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SimplexSet::Empty { .. } => "empty",
            SimplexSet::Point(_) => "point",
            SimplexSet::Segment(..) => "segment",
            SimplexSet::Polytope { .. } => "polytope",
            SimplexSet::FullSimplex { .. } => "full-simplex",
        }
    }
}

/// Rows c_k = ((g_{k+1} - g_k) . f_j)_j with negligible entries zeroed; all-zero rows dropped.
fn constraint_rows(
    grads: &[Vec<f64>],
    fields: &[Vec<f64>],
    policy: &NumericPolicy,
) -> Vec<Vec<f64>> {
    let gs = grads.iter().map(|g| norm(g)).fold(0.0, f64::max);
    let fs = fields.iter().map(|f| norm(f)).fold(0.0, f64::max);
    let tol = policy.tie(gs * fs);
    let mut rows = Vec::new();
    for k in 0..grads.len().saturating_sub(1) {
        let d: Vec<f64> = grads[k + 1]
            .iter()
            .zip(&grads[k])
            .map(|(a, b)| a - b)
            .collect();
        let mut row: Vec<f64> = fields.iter().map(|f| dot(&d, f)).collect();
        for v in row.iter_mut() {
            if v.abs() <= tol {
                *v = 0.0;
            }
        }
        let mx = row.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if mx > 0.0 {
            rows.push(row.into_iter().map(|v| v / mx).collect());
        }
    }
    rows
}

/// Convex weights lambda on the m-simplex with sum_j lambda_j (g_{k+1}-g_k).f_j = 0 for all k.
pub fn lambda_set(grads: &[Vec<f64>], fields: &[Vec<f64>], policy: &NumericPolicy) -> SimplexSet {
    let m = fields.len();
    if grads.len() <= 1 {
        return SimplexSet::FullSimplex { m };
    }
    let rows = constraint_rows(grads, fields, policy);
    if rows.is_empty() {
        return SimplexSet::FullSimplex { m };
    }
    if m <= 4 {
        classify(enumerate_vertices(&rows, m), m, true)
    } else {
        match lp_extremes(&rows, m, &vec![0.0; m]) {
            None => SimplexSet::Empty { m },
            Some((a, _)) => classify(vec![a], m, false),
        }
    }
}

fn classify(mut verts: Vec<Vec<f64>>, m: usize, exhaustive: bool) -> SimplexSet {
    match verts.len() {
        0 => SimplexSet::Empty { m },
        1 if exhaustive => SimplexSet::Point(verts.pop().unwrap()),
        2 if exhaustive => {
            let b = verts.pop().unwrap();
            SimplexSet::Segment(verts.pop().unwrap(), b)
        }
        _ => SimplexSet::Polytope {
            vertices: verts,
            exhaustive,
        },
    }
}

/// Basic feasible solutions of {C lambda = 0, 1' lambda = 1, lambda >= 0}.
fn enumerate_vertices(rows: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    const TOL: f64 = 1e-10;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mask in 1u32..(1u32 << m) {
        let support: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let s = support.len();
        let mut b = DMatrix::zeros(rows.len() + 1, s);
        for (c, &j) in support.iter().enumerate() {
            for (r, row) in rows.iter().enumerate() {
                b[(r, c)] = row[j];
            }
            b[(rows.len(), c)] = 1.0;
        }
        let svd = b.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd
            .singular_values
            .iter()
            .filter(|&&v| v > 1e-10 * smax.max(1.0))
            .count()
            < s
        {
            continue;
        }
        let mut rhs = nalgebra::DVector::zeros(rows.len() + 1);
        rhs[rows.len()] = 1.0;
        let Ok(sol) = svd.solve(&rhs, 1e-12) else {
            continue;
        };
        let resid = (&b * &sol - &rhs).amax();
        if resid > 1e-9 || sol.iter().any(|&v| v < -TOL) {
            continue;
        }
        let mut lam = vec![0.0; m];
        for (c, &j) in support.iter().enumerate() {
            lam[j] = sol[c].max(0.0);
        }
        let total: f64 = lam.iter().sum();
        lam.iter_mut().for_each(|v| *v /= total);
        if !out
            .iter()
            .any(|v| v.iter().zip(&lam).all(|(a, b)| (a - b).abs() <= 1e-9))
        {
            out.push(lam);
        }
    }
    out
}

/// LP minimizer and maximizer of obj . lambda over the constrained simplex.
fn lp_extremes(rows: &[Vec<f64>], m: usize, obj: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    a.push(vec![1.0; m]);
    let mut b = vec![0.0; rows.len()];
    b.push(1.0);
    let lo = match lp::minimize(&a, &b, obj) {
        lp::LpOutcome::Optimal { x, .. } => x,
        _ => return None,
    };
    let neg: Vec<f64> = obj.iter().map(|v| -v).collect();
    let hi = match lp::minimize(&a, &b, &neg) {
        lp::LpOutcome::Optimal { x, .. } => x,
        _ => return None,
    };
    Some((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub enum LieStatus {
    /// max of the empty set is -infinity.
    Empty,
    Interval {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LieSet {
    pub status: LieStatus,
    /// Simplex weights (over `modes`) attaining lo and hi.
    pub witness_lo: Option<Vec<f64>>,
    pub witness_hi: Option<Vec<f64>>,
    pub active: Vec<usize>,
    pub modes: Vec<usize>,
    pub lambda: SimplexSet,
}

impl LieSet {
    pub fn max(&self) -> Option<f64> {
        match self.status {
            LieStatus::Empty => None,
            LieStatus::Interval { hi, .. } => Some(hi),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.status == LieStatus::Empty
    }
}

/// Lie set from precomputed gradients (over the active set) and fields.
pub fn lie_from_parts(
    grads: &[Vec<f64>],
    fields: &[Vec<f64>],
    policy: &NumericPolicy,
) -> Result<(LieStatus, Option<Vec<f64>>, Option<Vec<f64>>, SimplexSet), DerivError> {
    let lambda = lambda_set(grads, fields, policy);
    let m = fields.len();
    let n = grads[0].len();
    let combo = |lam: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|c| (0..m).map(|j| lam[j] * fields[j][c]).sum())
            .collect()
    };
    let gs = grads.iter().map(|g| norm(g)).fold(0.0, f64::max);
    let fs = fields.iter().map(|f| norm(f)).fold(0.0, f64::max);
    let tol = 10.0 * grads.len() as f64 * policy.tie(gs * fs);
    let value = |lam: &[f64]| -> Result<f64, DerivError> {
        let f = combo(lam);
        let vals: Vec<f64> = grads.iter().map(|g| dot(g, &f)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > tol {
            return Err(DerivError::Inconsistent { spread: hi - lo });
        }
        Ok(vals[0])
    };
    let candidates = match &lambda {
        SimplexSet::Empty { .. } => return Ok((LieStatus::Empty, None, None, lambda)),
        SimplexSet::Polytope {
            exhaustive: false, ..
        } => {
            let rows = constraint_rows(grads, fields, policy);
            let obj: Vec<f64> = fields.iter().map(|f| dot(&grads[0], f)).collect();
            match lp_extremes(&rows, m, &obj) {
                Some((a, b)) => vec![a, b],
                None => return Ok((LieStatus::Empty, None, None, lambda)),
            }
        }
        other => other.vertices(),
    };
    let mut lo = (f64::INFINITY, None);
    let mut hi = (f64::NEG_INFINITY, None);
    for lam in candidates {
        let v = value(&lam)?;
        if v < lo.0 {
            lo = (v, Some(lam.clone()));
        }
        if v > hi.0 {
            hi = (v, Some(lam));
        }
    }
    Ok((
        LieStatus::Interval { lo: lo.0, hi: hi.0 },
        lo.1,
        hi.1,
        lambda,
    ))
}

/// Set-valued Lie derivative at x.
pub fn lie_derivative(
    spec: &MaxMinSpec,
    basis: &dyn Basis,
    sys: &SwitchedSystem,
    x: &[f64],
    policy: &NumericPolicy,
) -> Result<LieSet, DerivError> {
    let hull = clarke_gradient(spec, basis, x, policy)?;
    let fil = filippov_set(sys, x, policy)?;
    let (status, witness_lo, witness_hi, lambda) =
        lie_from_parts(&hull.vertices, &fil.vertices, policy)?;
    Ok(LieSet {
        status,
        witness_lo,
        witness_hi,
        active: hull.indices,
        modes: fil.modes,
        lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarkeSet {
    pub lo: f64,
    pub hi: f64,
}

pub fn clarke_from_parts(grads: &[Vec<f64>], fields: &[Vec<f64>]) -> ClarkeSet {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for g in grads {
        for f in fields {
            let v = dot(g, f);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    ClarkeSet { lo, hi }
}

/// Clarke generalized derivative interval at x.
pub fn clarke_derivative(
    spec: &MaxMinSpec,
    basis: &dyn Basis,
    sys: &SwitchedSystem,
    x: &[f64],
    policy: &NumericPolicy,
) -> Result<ClarkeSet, DerivError> {
    let hull = clarke_gradient(spec, basis, x, policy)?;
    let fil = filippov_set(sys, x, policy)?;
    Ok(clarke_from_parts(&hull.vertices, &fil.vertices))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivMode {
    Lie,
    Clarke,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecreasePoint {
    pub x: Vec<f64>,
    /// None encodes -infinity (empty Lie set).
    pub value: Option<f64>,
    pub bound: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseReport {
    pub mode: DerivMode,
    pub rate: f64,
    pub points: Vec<DecreasePoint>,
    pub violations: Vec<usize>,
}

impl DecreaseReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Sampling can refute decrease but never prove it.
    pub fn status(&self) -> &'static str {
        if self.passed() {
            "sampled, not certified"
        } else {
            "violated"
        }
    }
}

/// Checks max dV < -c |x|^2 at every sample.
pub fn decrease_check(
    spec: &MaxMinSpec,
    basis: &dyn Basis,
    sys: &SwitchedSystem,
    samples: &[Vec<f64>],
    rate: f64,
    mode: DerivMode,
    policy: &NumericPolicy,
) -> Result<DecreaseReport, DerivError> {
    if samples.is_empty() {
        return Err(DerivError::NoSamples);
    }
    let mut points = Vec::with_capacity(samples.len());
    let mut violations = Vec::new();
    for (k, x) in samples.iter().enumerate() {
        let r2 = dot(x, x);
        if r2 == 0.0 {
            return Err(DerivError::ZeroSample(k));
        }
        let value = match mode {
            DerivMode::Lie => lie_derivative(spec, basis, sys, x, policy)?.max(),
            DerivMode::Clarke => Some(clarke_derivative(spec, basis, sys, x, policy)?.hi),
        };
        let bound = -rate * r2;
        let violation = matches!(value, Some(v) if v >= bound);
        if violation {
            violations.push(k);
        }
        points.push(DecreasePoint {
            x: x.clone(),
            value,
            bound,
            violation,
        });
    }
    Ok(DecreaseReport {
        mode,
        rate,
        points,
        violations,
    })
}
