//! Max-min functions V(x) = max_j min_{k in S_j} V_k(x) and their nonsmooth
//! calculus: ordering map, dualization, essentially-active sets, Clarke gradients.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numkernel::{NumericPolicy, SymMatrix};
use crate::sampling::unit_vector;
use crate::sysdsl::{BasisConfig, BasisFunctions, EvalError, Expr, PolarityTag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaxMinError {
    #[error("structure needs at least one family")]
    NoFamilies,
    #[error("family S{0} is empty")]
    EmptyFamily(usize),
    #[error("index {index} out of range 1..{k}")]
    IndexRange { index: usize, k: usize },
    #[error("basis has {basis} functions, structure expects {spec}")]
    Count { basis: usize, spec: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("basis matrix P{0} is not positive definite")]
    NotPositive(usize),
    #[error("not a permutation of 1..{0}")]
    BadPermutation(usize),
    #[error("configuration has no basis functions")]
    MissingBasis,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    MaxOfMin,
    MinOfMax,
}

/// Combinatorial part of a max-min function. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxMinSpec {
    k: usize,
    families: Vec<Vec<usize>>,
    polarity: Polarity,
}

impl MaxMinSpec {
    pub fn new(
        k: usize,
        families: Vec<Vec<usize>>,
        polarity: Polarity,
    ) -> Result<Self, MaxMinError> {
        if families.is_empty() {
            return Err(MaxMinError::NoFamilies);
        }
        let mut fams = Vec::with_capacity(families.len());
        for (j, mut f) in families.into_iter().enumerate() {
            if f.is_empty() {
                return Err(MaxMinError::EmptyFamily(j + 1));
            }
            if let Some(&bad) = f.iter().find(|&&i| i >= k) {
                return Err(MaxMinError::IndexRange { index: bad + 1, k });
            }
            f.sort_unstable();
            f.dedup();
            fams.push(f);
        }
        Ok(MaxMinSpec {
            k,
            families: fams,
            polarity,
        })
    }

    /// max{V_1, ..., V_k}
    pub fn pure_max(k: usize) -> Self {
        MaxMinSpec {
            k,
            families: (0..k).map(|i| vec![i]).collect(),
            polarity: Polarity::MaxOfMin,
        }
    }

    /// min{V_1, ..., V_k}
    pub fn pure_min(k: usize) -> Self {
        MaxMinSpec {
            k,
            families: vec![(0..k).collect()],
            polarity: Polarity::MaxOfMin,
        }
    }

    pub fn from_config(cfg: &BasisConfig, k: usize) -> Result<Self, MaxMinError> {
        let pol = match cfg.polarity {
            PolarityTag::MaxMin => Polarity::MaxOfMin,
            PolarityTag::MinMax => Polarity::MinOfMax,
        };
        MaxMinSpec::new(k, cfg.families.clone(), pol)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn families(&self) -> &[Vec<usize>] {
        &self.families
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// Nested max/min of the given base values.
    pub fn combine(&self, values: &[f64]) -> f64 {
        match self.polarity {
            Polarity::MaxOfMin => self
                .families
                .iter()
                .map(|f| f.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max),
            Polarity::MinOfMax => self
                .families
                .iter()
                .map(|f| {
                    f.iter()
                        .map(|&i| values[i])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// The same structure in max-of-min form.
    pub fn max_of_min(&self) -> MaxMinSpec {
        match self.polarity {
            Polarity::MaxOfMin => self.clone(),
            Polarity::MinOfMax => dualize(self),
        }
    }
}

/// Opposite-polarity structure obtained by distributing the outer operation
/// over the inner one (one index from every family), with supersets pruned.
pub fn dualize(spec: &MaxMinSpec) -> MaxMinSpec {
    let mut selections: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut idx = vec![0usize; spec.families.len()];
    loop {
        let mut s: Vec<usize> = idx.iter().zip(&spec.families).map(|(&i, f)| f[i]).collect();
        s.sort_unstable();
        s.dedup();
        selections.insert(s);
        let mut j = 0;
        loop {
            if j == idx.len() {
                break;
            }
            idx[j] += 1;
            if idx[j] < spec.families[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == idx.len() {
            break;
        }
    }
    let all: Vec<Vec<usize>> = selections.into_iter().collect();
    let pruned: Vec<Vec<usize>> = all
        .iter()
        .filter(|s| {
            !all.iter()
                .any(|t| t != *s && t.iter().all(|i| s.contains(i)))
        })
        .cloned()
        .collect();
    let polarity = match spec.polarity {
        Polarity::MaxOfMin => Polarity::MinOfMax,
        Polarity::MinOfMax => Polarity::MaxOfMin,
    };
    MaxMinSpec {
        k: spec.k,
        families: pruned,
        polarity,
    }
}

/// Strict ordering V_{rho_1} < ... < V_{rho_K}; zero-based entries.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(v: Vec<usize>) -> Result<Self, MaxMinError> {
        let k = v.len();
        let mut seen = vec![false; k];
        for &i in &v {
            if i >= k || seen[i] {
                return Err(MaxMinError::BadPermutation(k));
            }
            seen[i] = true;
        }
        Ok(Permutation(v))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, index: usize) -> usize {
        self.0
            .iter()
            .position(|&i| i == index)
            .expect("index in permutation")
    }

    /// All permutations of 0..k in lexicographic order.
    pub fn all(k: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..k).collect();
        loop {
            out.push(Permutation(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }

    /// Ordering of `values` ascending; `None` when two values tie exactly.
    pub fn of_values(values: &[f64]) -> Option<Permutation> {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        if idx.windows(2).any(|w| values[w[0]] >= values[w[1]]) {
            return None;
        }
        Some(Permutation(idx))
    }
}

impl std::fmt::Display for Permutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let items: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "({})", items.join(","))
    }
}

/// Index active on the ordering cone of `rho`: for each family its
/// rho-earliest member, then the rho-latest of those.
pub fn phi(spec: &MaxMinSpec, rho: &Permutation) -> usize {
    let spec = spec.max_of_min();
    let k = rho.len();
    let mut pos = vec![0usize; k];
    for (p, &i) in rho.as_slice().iter().enumerate() {
        pos[i] = p;
    }
    let mut best: Option<usize> = None;
    for f in &spec.families {
        let earliest = *f.iter().min_by_key(|&&i| pos[i]).unwrap();
        best = match best {
            Some(b) if pos[b] >= pos[earliest] => Some(b),
            _ => Some(earliest),
        };
    }
    best.unwrap()
}

/// K scalar base functions with gradients.
pub trait Basis: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn value(&self, l: usize, x: &[f64]) -> Result<f64, MaxMinError>;
    fn gradient(&self, l: usize, x: &[f64]) -> Result<Vec<f64>, MaxMinError>;
    fn quadratic(&self) -> Option<&[SymMatrix]> {
        None
    }
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBasis {
    mats: Vec<SymMatrix>,
}

impl QuadraticBasis {
    /// Requires positive definite matrices of a common dimension.
    pub fn new(mats: Vec<SymMatrix>) -> Result<Self, MaxMinError> {
        let n = mats.first().map_or(0, |m| m.dim());
        for (k, m) in mats.iter().enumerate() {
            if m.dim() != n {
                return Err(MaxMinError::Dimension {
                    expected: n,
                    got: m.dim(),
                });
            }
            if crate::numkernel::min_eigenvalue(m) <= 0.0 {
                return Err(MaxMinError::NotPositive(k + 1));
            }
        }
        Ok(QuadraticBasis { mats })
    }

    /// No definiteness check; for intermediate iterates of searches.
    pub fn unchecked(mats: Vec<SymMatrix>) -> Self {
        QuadraticBasis { mats }
    }

    pub fn matrices(&self) -> &[SymMatrix] {
        &self.mats
    }
}

impl Basis for QuadraticBasis {
    fn dim(&self) -> usize {
        self.mats.first().map_or(0, |m| m.dim())
    }
    fn len(&self) -> usize {
        self.mats.len()
    }
    fn value(&self, l: usize, x: &[f64]) -> Result<f64, MaxMinError> {
        check_dim(self.dim(), x)?;
        Ok(self.mats[l].quad(x))
    }
    fn gradient(&self, l: usize, x: &[f64]) -> Result<Vec<f64>, MaxMinError> {
        check_dim(self.dim(), x)?;
        Ok(self.mats[l].apply(x).into_iter().map(|v| 2.0 * v).collect())
    }
    fn quadratic(&self) -> Option<&[SymMatrix]> {
        Some(&self.mats)
    }
}

/// Base functions given as expressions; gradients are differentiated symbolically.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprBasis {
    dim: usize,
    exprs: Vec<Expr>,
    grads: Vec<Vec<Expr>>,
}

impl ExprBasis {
    pub fn new(dim: usize, exprs: Vec<Expr>) -> Result<Self, MaxMinError> {
        if let Some(e) = exprs.iter().find(|e| e.arity() > dim) {
            return Err(MaxMinError::Dimension {
                expected: dim,
                got: e.arity(),
            });
        }
        let grads = exprs.iter().map(|e| e.gradient(dim)).collect();
        Ok(ExprBasis { dim, exprs, grads })
    }
}

impl Basis for ExprBasis {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        self.exprs.len()
    }
    fn value(&self, l: usize, x: &[f64]) -> Result<f64, MaxMinError> {
        check_dim(self.dim, x)?;
        Ok(self.exprs[l].eval(x)?)
    }
    fn gradient(&self, l: usize, x: &[f64]) -> Result<Vec<f64>, MaxMinError> {
        check_dim(self.dim, x)?;
        self.grads[l]
            .iter()
            .map(|g| g.eval(x).map_err(MaxMinError::from))
            .collect()
    }
}

fn check_dim(n: usize, x: &[f64]) -> Result<(), MaxMinError> {
    if x.len() != n {
        return Err(MaxMinError::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    Ok(())
}

/// Builds the basis named in a configuration.
pub fn basis_from_config(cfg: &BasisConfig, dim: usize) -> Result<Box<dyn Basis>, MaxMinError> {
    match &cfg.functions {
        Some(BasisFunctions::Quadratic(ps)) => Ok(Box::new(QuadraticBasis::new(ps.clone())?)),
        Some(BasisFunctions::Expr(es)) => Ok(Box::new(ExprBasis::new(dim, es.clone())?)),
        None => Err(MaxMinError::MissingBasis),
    }
}

pub fn values(basis: &dyn Basis, x: &[f64]) -> Result<Vec<f64>, MaxMinError> {
    (0..basis.len()).map(|l| basis.value(l, x)).collect()
}

pub fn eval(spec: &MaxMinSpec, basis: &dyn Basis, x: &[f64]) -> Result<f64, MaxMinError> {
    if basis.len() != spec.k {
        return Err(MaxMinError::Count {
            basis: basis.len(),
            spec: spec.k,
        });
    }
    Ok(spec.combine(&values(basis, x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveMethod {
    ExactSmooth,
    PlanarSweep,
    PerturbationSampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    /// Sorted, zero-based.
    pub indices: Vec<usize>,
    pub method: ActiveMethod,
    pub warning: Option<String>,
}

/// Indices whose value is within tie tolerance of V(x).
pub fn equal_value_set(spec: &MaxMinSpec, vals: &[f64], policy: &NumericPolicy) -> Vec<usize> {
    let v = spec.combine(vals);
    let tol = policy.tie(v);
    (0..vals.len())
        .filter(|&l| (vals[l] - v).abs() <= tol)
        .collect()
}

/// Essentially-active index set alpha_V(x).
pub fn active_indices(
    spec: &MaxMinSpec,
    basis: &dyn Basis,
    x: &[f64],
    policy: &NumericPolicy,
) -> Result<ActiveSet, MaxMinError> {
    if basis.len() != spec.k {
        return Err(MaxMinError::Count {
            basis: basis.len(),
            spec: spec.k,
        });
    }
    let vals = values(basis, x)?;
    let ties = equal_value_set(spec, &vals, policy);
    if ties.len() == 1 {
        return Ok(ActiveSet {
            indices: ties,
            method: ActiveMethod::ExactSmooth,
            warning: None,
        });
    }
    let (found, method, mut warning) = match basis.quadratic() {
        Some(mats) if basis.dim() == 2 => {
            let (s, w) = planar_sweep(spec, mats, x, policy);
            (s, ActiveMethod::PlanarSweep, w)
        }
        _ => (
            perturbation_sample(spec, basis, x, policy)?,
            ActiveMethod::PerturbationSampled,
            None,
        ),
    };
    let mut indices: Vec<usize> = found.into_iter().filter(|l| ties.contains(l)).collect();
    if indices.is_empty() {
        warning = Some(
            "degenerate basis: no strict ordering near the point; using the equal-value set".into(),
        );
        indices = ties;
    }
    Ok(ActiveSet {
        indices,
        method,
        warning,
    })
}

fn perturbation_sample(
    spec: &MaxMinSpec,
    basis: &dyn Basis,
    x: &[f64],
    policy: &NumericPolicy,
) -> Result<BTreeSet<usize>, MaxMinError> {
    let n = x.len();
    let r0 = policy.rel * crate::numkernel::norm(x).max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut out = BTreeSet::new();
    for scale in [1.0, 2.0, 4.0] {
        for _ in 0..policy.samples.max(1) {
            let d = unit_vector(&mut rng, n);
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + r0 * scale * b).collect();
            let vals = values(basis, &y)?;
            if let Some(rho) = Permutation::of_values(&vals) {
                out.insert(phi(spec, &rho));
            }
        }
    }
    Ok(out)
}

/// Angles in [0, pi) where x^T D x vanishes on the unit circle.
pub(crate) fn circle_roots(d: &SymMatrix) -> Vec<f64> {
    let (a, b, c) = (d.get(0, 0), d.get(0, 1), d.get(1, 1));
    // x^T D x at angle t: alpha + rho cos(2t - phi)
    let alpha = 0.5 * (a + c);
    let cc = 0.5 * (a - c);
    let rho = (cc * cc + b * b).sqrt();
    if rho <= 1e-300 {
        return Vec::new();
    }
    let ratio = -alpha / rho;
    if ratio.abs() > 1.0 {
        return Vec::new();
    }
    let phi = b.atan2(cc);
    let w = ratio.acos();
    let pi = std::f64::consts::PI;
    let mut out = Vec::new();
    for s in [phi + w, phi - w] {
        out.push((0.5 * s).rem_euclid(pi));
    }
    out
}

pub(crate) fn circ_dist(a: f64, b: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let d = (a - b).rem_euclid(pi);
    d.min(pi - d)
}

/// Exact angular sweep for planar quadratic bases: the active index on each
/// open arc adjacent to x (all arcs when x = 0).
fn planar_sweep(
    spec: &MaxMinSpec,
    mats: &[SymMatrix],
    x: &[f64],
    policy: &NumericPolicy,
) -> (BTreeSet<usize>, Option<String>) {
    let pi = std::f64::consts::PI;
    let mut roots = Vec::new();
    let mut warning = None;
    for a in 0..mats.len() {
        for b in (a + 1)..mats.len() {
            let d = mats[a].sub(&mats[b]);
            if d.norm() <= policy.abs * (mats[a].norm() + mats[b].norm()) {
                warning = Some(format!("degenerate basis: P{} equals P{}", a + 1, b + 1));
                continue;
            }
            roots.extend(circle_roots(&d));
        }
    }
    let active_at = |t: f64| -> Option<usize> {
        let y = [t.cos(), t.sin()];
        let vals: Vec<f64> = mats.iter().map(|m| m.quad(&y)).collect();
        Permutation::of_values(&vals).map(|rho| phi(spec, &rho))
    };
    let mut out = BTreeSet::new();
    let r = crate::numkernel::norm(x);
    const AT_POINT: f64 = 1e-6;
    if r == 0.0 {
        roots.sort_by(f64::total_cmp);
        if roots.is_empty() {
            out.extend(active_at(0.3));
        }
        for (i, &t) in roots.iter().enumerate() {
            let next = if i + 1 < roots.len() {
                roots[i + 1]
            } else {
                roots[0] + pi
            };
            if next - t > 1e-12 {
                out.extend(active_at(0.5 * (t + next)));
            }
        }
        return (out, warning);
    }
    let t0 = x[1].atan2(x[0]).rem_euclid(pi);
    // nearest roots strictly on each side of t0
    let mut up = pi;
    let mut down = pi;
    for &t in &roots {
        if circ_dist(t, t0) <= AT_POINT {
            continue;
        }
        let du = (t - t0).rem_euclid(pi);
        let dd = (t0 - t).rem_euclid(pi);
        up = up.min(du);
        down = down.min(dd);
    }
    out.extend(active_at(t0 + 0.5 * up.max(2.0 * AT_POINT)));
    out.extend(active_at(t0 - 0.5 * down.max(2.0 * AT_POINT)));
    (out, warning)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientHull {
    pub indices: Vec<usize>,
    pub vertices: Vec<Vec<f64>>,
    pub method: ActiveMethod,
    pub warning: Option<String>,
}

/// Vertices of the Clarke generalized gradient.
pub fn clarke_gradient(
    spec: &MaxMinSpec,
    basis: &dyn Basis,
    x: &[f64],
    policy: &NumericPolicy,
) -> Result<GradientHull, MaxMinError> {
    let act = active_indices(spec, basis, x, policy)?;
    let vertices = act
        .indices
        .iter()
        .map(|&l| basis.gradient(l, x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GradientHull {
        indices: act.indices,
        vertices,
        method: act.method,
        warning: act.warning,
    })
}
