//! State-dependent switched systems and their Filippov set-valued fields.

use thiserror::Error;

use crate::numkernel::{mat_vec, norm, Matrix, NumericPolicy, SymMatrix};
use crate::sampling::sphere_points;
use crate::sysdsl::{EvalError, Expr, FieldConfig, RegionConfig, SystemConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InclusionError {
    #[error("no region contains {0:?} (system misconfigured)")]
    Coverage(Vec<f64>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite state")]
    NonFinite,
    #[error("system needs at least one mode")]
    NoModes,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum VectorField {
    Linear(Matrix),
    Expr(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Cone(SymMatrix),
    Expr { h: Expr, grad: Vec<Expr> },
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub field: VectorField,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    dim: usize,
    modes: Vec<Mode>,
}

impl SwitchedSystem {
    pub fn new(dim: usize, modes: Vec<Mode>) -> Result<Self, InclusionError> {
        if modes.is_empty() {
            return Err(InclusionError::NoModes);
        }
        for m in &modes {
            let ok = match &m.field {
                VectorField::Linear(a) => a.nrows() == dim && a.ncols() == dim,
                VectorField::Expr(f) => f.len() == dim && f.iter().all(|e| e.arity() <= dim),
            } && match &m.region {
                Region::Cone(q) => q.dim() == dim,
                Region::Expr { h, .. } => h.arity() <= dim,
                Region::All => true,
            };
            if !ok {
                return Err(InclusionError::Dimension {
                    expected: dim,
                    got: 0,
                });
            }
        }
        Ok(SwitchedSystem { dim, modes })
    }

    /// Linear modes on cone regions.
    pub fn linear_cones(a: Vec<Matrix>, q: Vec<SymMatrix>) -> Result<Self, InclusionError> {
        let dim = a.first().map_or(0, |m| m.nrows());
        let modes = a
            .into_iter()
            .zip(q)
            .map(|(a, q)| Mode {
                field: VectorField::Linear(a),
                region: Region::Cone(q),
            })
            .collect();
        SwitchedSystem::new(dim, modes)
    }

    pub fn from_config(cfg: &SystemConfig) -> Result<Self, InclusionError> {
        let modes = cfg
            .modes
            .iter()
            .map(|m| Mode {
                field: match &m.field {
                    FieldConfig::Linear(a) => VectorField::Linear(a.clone()),
                    FieldConfig::Expr(f) => VectorField::Expr(f.clone()),
                },
                region: match &m.region {
                    RegionConfig::Cone(q) => Region::Cone(q.clone()),
                    RegionConfig::Expr(h) => Region::Expr {
                        h: h.clone(),
                        grad: h.gradient(cfg.dim),
                    },
                    RegionConfig::All => Region::All,
                },
            })
            .collect();
        SwitchedSystem::new(cfg.dim, modes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    fn check(&self, x: &[f64]) -> Result<(), InclusionError> {
        if x.len() != self.dim {
            return Err(InclusionError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(InclusionError::NonFinite);
        }
        Ok(())
    }

    pub fn field(&self, i: usize, x: &[f64]) -> Result<Vec<f64>, InclusionError> {
        self.check(x)?;
        match &self.modes[i].field {
            VectorField::Linear(a) => Ok(mat_vec(a, x)),
            VectorField::Expr(f) => f
                .iter()
                .map(|e| e.eval(x).map_err(InclusionError::from))
                .collect(),
        }
    }

    /// H_i(x); mode i is strictly active where this is positive. `None` for `all`.
    pub fn region_value(&self, i: usize, x: &[f64]) -> Result<Option<f64>, InclusionError> {
        self.check(x)?;
        Ok(match &self.modes[i].region {
            Region::Cone(q) => Some(q.quad(x)),
            Region::Expr { h, .. } => Some(h.eval(x)?),
            Region::All => None,
        })
    }

    pub fn region_gradient(&self, i: usize, x: &[f64]) -> Result<Option<Vec<f64>>, InclusionError> {
        self.check(x)?;
        Ok(match &self.modes[i].region {
            Region::Cone(q) => Some(q.apply(x).into_iter().map(|v| 2.0 * v).collect()),
            Region::Expr { grad, .. } => {
                Some(grad.iter().map(|g| g.eval(x)).collect::<Result<_, _>>()?)
            }
            Region::All => None,
        })
    }

    /// Boundary band used for closure membership at x.
    pub fn band(&self, i: usize, x: &[f64], policy: &NumericPolicy) -> f64 {
        let r2 = norm(x).powi(2);
        match &self.modes[i].region {
            Region::Cone(_) => policy.abs * r2,
            _ => policy.abs * r2.max(1.0),
        }
    }

    /// Linear matrices and cone matrices (None for `all`), if every mode is linear.
    pub fn as_linear(&self) -> Option<LinearConeSystem> {
        let mut a = Vec::new();
        let mut q = Vec::new();
        for m in &self.modes {
            match (&m.field, &m.region) {
                (VectorField::Linear(am), Region::Cone(qm)) => {
                    a.push(am.clone());
                    q.push(Some(qm.clone()));
                }
                (VectorField::Linear(am), Region::All) => {
                    a.push(am.clone());
                    q.push(None);
                }
                _ => return None,
            }
        }
        Some(LinearConeSystem { a, q })
    }
}

/// x' = A_i x on {x^T Q_i x > 0}.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConeSystem {
    pub a: Vec<Matrix>,
    pub q: Vec<Option<SymMatrix>>,
}

impl LinearConeSystem {
    pub fn dim(&self) -> usize {
        self.a.first().map_or(0, |m| m.nrows())
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// I(x): modes whose closed region contains x.
pub fn index_set(
    sys: &SwitchedSystem,
    x: &[f64],
    policy: &NumericPolicy,
) -> Result<Vec<usize>, InclusionError> {
    let mut out = Vec::new();
    for i in 0..sys.len() {
        match sys.region_value(i, x)? {
            None => out.push(i),
            Some(h) if h >= -sys.band(i, x, policy) => out.push(i),
            _ => {}
        }
    }
    if out.is_empty() {
        return Err(InclusionError::Coverage(x.to_vec()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilippovSet {
    pub modes: Vec<usize>,
    pub vertices: Vec<Vec<f64>>,
}

/// Vertices f_i(x), i in I(x), of the Filippov convexification.
pub fn filippov_set(
    sys: &SwitchedSystem,
    x: &[f64],
    policy: &NumericPolicy,
) -> Result<FilippovSet, InclusionError> {
    let modes = index_set(sys, x, policy)?;
    let vertices = modes
        .iter()
        .map(|&i| sys.field(i, x))
        .collect::<Result<_, _>>()?;
    Ok(FilippovSet { modes, vertices })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    pub samples: usize,
    /// Points in no closed region.
    pub uncovered: Vec<Vec<f64>>,
    /// Points strictly inside two or more regions.
    pub overlapping: Vec<(Vec<f64>, Vec<usize>)>,
}

impl PartitionReport {
    pub fn ok(&self) -> bool {
        self.uncovered.is_empty() && self.overlapping.is_empty()
    }
}

/// Samples the unit sphere for coverage and disjointness violations.
pub fn validate_partition(
    sys: &SwitchedSystem,
    samples: usize,
    seed: u64,
    policy: &NumericPolicy,
) -> Result<PartitionReport, InclusionError> {
    let mut uncovered = Vec::new();
    let mut overlapping = Vec::new();
    for x in sphere_points(sys.dim(), samples, 1.0, seed) {
        let mut strict = Vec::new();
        let mut closed = 0;
        for i in 0..sys.len() {
            match sys.region_value(i, &x)? {
                None => {
                    strict.push(i);
                    closed += 1;
                }
                Some(h) => {
                    let band = sys.band(i, &x, policy);
                    if h > band {
                        strict.push(i);
                    }
                    if h >= -band {
                        closed += 1;
                    }
                }
            }
        }
        if closed == 0 {
            uncovered.push(x);
        } else if strict.len() > 1 {
            overlapping.push((x, strict));
        }
    }
    Ok(PartitionReport {
        samples,
        uncovered,
        overlapping,
    })
}
