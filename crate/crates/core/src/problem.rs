//! A parsed configuration turned into model objects, plus the bundled examples.

use thiserror::Error;

use crate::inclusion::{InclusionError, Mode, Region, SwitchedSystem, VectorField};
use crate::maxmin::{basis_from_config, Basis, ExprBasis, MaxMinError, MaxMinSpec};
use crate::sysdsl::{parse_config, Config, Expr, ParseError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    MaxMin(#[from] MaxMinError),
    #[error(transparent)]
    Inclusion(#[from] InclusionError),
    #[error("configuration has no {0}")]
    Missing(&'static str),
}

pub struct Problem {
    pub config: Config,
    pub system: Option<SwitchedSystem>,
    pub spec: Option<MaxMinSpec>,
    pub basis: Option<Box<dyn Basis>>,
}

impl Problem {
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        Problem::from_config(parse_config(text)?)
    }

    pub fn from_config(config: Config) -> Result<Self, ProblemError> {
        let system = config
            .system
            .as_ref()
            .map(SwitchedSystem::from_config)
            .transpose()?;
        let dim = config.system.as_ref().map(|s| s.dim);
        let (spec, basis) = match &config.basis {
            None => (None, None),
            Some(b) => {
                let basis = match (&b.functions, dim) {
                    (Some(_), Some(d)) => Some(basis_from_config(b, d)?),
                    (Some(f), None) => {
                        let d = match f {
                            crate::sysdsl::BasisFunctions::Quadratic(ps) => ps[0].dim(),
                            crate::sysdsl::BasisFunctions::Expr(es) => {
                                es.iter().map(|e| e.arity()).max().unwrap_or(1).max(1)
                            }
                        };
                        Some(basis_from_config(b, d)?)
                    }
                    (None, _) => None,
                };
                let k = match &basis {
                    Some(bs) => bs.len(),
                    None => b
                        .families
                        .iter()
                        .flatten()
                        .map(|i| i + 1)
                        .max()
                        .unwrap_or(1),
                };
                (Some(MaxMinSpec::from_config(b, k)?), basis)
            }
        };
        Ok(Problem {
            config,
            system,
            spec,
            basis,
        })
    }

    pub fn system(&self) -> Result<&SwitchedSystem, ProblemError> {
        self.system
            .as_ref()
            .ok_or(ProblemError::Missing("[system] section"))
    }

    pub fn spec(&self) -> Result<&MaxMinSpec, ProblemError> {
        self.spec
            .as_ref()
            .ok_or(ProblemError::Missing("max-min structure"))
    }

    pub fn basis(&self) -> Result<&dyn Basis, ProblemError> {
        self.basis
            .as_deref()
            .ok_or(ProblemError::Missing("basis functions"))
    }
}

pub const EXAMPLE1: &str = include_str!("../configs/example1.cfg");
pub const EXAMPLE2: &str = include_str!("../configs/example2.cfg");
pub const EXAMPLE3: &str = include_str!("../configs/example3.cfg");

pub fn example1() -> Problem {
    Problem::parse(EXAMPLE1).expect("bundled config parses")
}

/// The nonlinear two-mode example with gain b on the arctan term.
pub fn example2(b: f64) -> Problem {
    let text = EXAMPLE2.replace("const b = 10", &format!("const b = {b:?}"));
    Problem::parse(&text).expect("bundled config parses")
}

pub fn example3() -> Problem {
    Problem::parse(EXAMPLE3).expect("bundled config parses")
}

/// Unit vectors on the three switching lines of example 1, in the order
/// modes 1|3, 2|1, 3|2.
pub fn example1_lines() -> [[f64; 2]; 3] {
    let s2 = 2f64.sqrt();
    let unit = |a: f64| {
        let r = (1.0 + a * a).sqrt();
        [1.0 / r, a / r]
    };
    [unit(-(1.0 + s2)), unit(-1.0), unit(-1.0 / (1.0 + s2))]
}

/// 1-D system with constant fields f1 on x < 0 and f2 on x > 0, and V = max{x, -x}.
pub fn abs_value(f1: f64, f2: f64) -> (SwitchedSystem, MaxMinSpec, ExprBasis) {
    let x = Expr::Var(0);
    let sys = SwitchedSystem::new(
        1,
        vec![
            Mode {
                field: VectorField::Expr(vec![Expr::Const(f1)]),
                region: Region::Expr {
                    h: crate::sysdsl::expr::neg(x.clone()),
                    grad: vec![Expr::Const(-1.0)],
                },
            },
            Mode {
                field: VectorField::Expr(vec![Expr::Const(f2)]),
                region: Region::Expr {
                    h: x.clone(),
                    grad: vec![Expr::Const(1.0)],
                },
            },
        ],
    )
    .expect("valid 1-D system");
    let basis =
        ExprBasis::new(1, vec![x.clone(), crate::sysdsl::expr::neg(x)]).expect("valid basis");
    (sys, MaxMinSpec::pure_max(2), basis)
}
