//! Configuration language: systems, bases, max-min structure and multipliers.
//!
//! ```text
//! [system]
//! dim = 2
//! const b = 10
//! mode 1 { A = [[-1, 0], [0, -1]]; region = all }
//! mode 2 { f = (x2, -x1 - b*atan(x2)); Q = [[1, 0], [0, -1]] }
//! [basis]
//! P1 = [[5, 0], [0, 1]]
//! [structure]
//! polarity = maxmin
//! S1 = {1, 2}
//! ```

pub mod expr;
mod lexer;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

pub use expr::{fmt_num, EvalError, Expr};
use lexer::{lex, Spanned, Tok};

use crate::numkernel::{negdef_margin, Matrix, NumError, SymMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        found: String,
        expected: String,
    },
    #[error("{line}:{col}: set `{name}` is empty")]
    EmptyFamily {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("{line}:{col}: matrix is not symmetric")]
    NonSymmetric { line: usize, col: usize },
    #[error("{line}:{col}: dimension mismatch: {message}")]
    Dimension {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: {message}")]
    Invalid {
        line: usize,
        col: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldConfig {
    Linear(Matrix),
    Expr(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionConfig {
    /// {x : x^T Q x > 0}
    Cone(SymMatrix),
    /// {x : H(x) > 0}
    Expr(Expr),
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeConfig {
    pub field: FieldConfig,
    pub region: RegionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub dim: usize,
    pub modes: Vec<ModeConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisFunctions {
    Quadratic(Vec<SymMatrix>),
    Expr(Vec<Expr>),
}

impl BasisFunctions {
    pub fn len(&self) -> usize {
        match self {
            BasisFunctions::Quadratic(v) => v.len(),
            BasisFunctions::Expr(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarityTag {
    MaxMin,
    MinMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    pub functions: Option<BasisFunctions>,
    /// Zero-based indices.
    pub families: Vec<Vec<usize>>,
    pub polarity: PolarityTag,
}

/// Multipliers for one (mode, ordering block) inequality. Indices zero-based;
/// a pair `(a, b)` stands for the constraint V_a < V_b.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierEntry {
    pub mode: usize,
    pub active: usize,
    pub pairs: Vec<(usize, usize)>,
    pub tau: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub system: Option<SystemConfig>,
    pub basis: Option<BasisConfig>,
    pub multipliers: Vec<MultiplierEntry>,
    pub constants: BTreeMap<String, f64>,
    /// Sections this parser does not interpret (report output), raw lines.
    pub extra: BTreeMap<String, Vec<String>>,
}

const KNOWN: [&str; 5] = ["system", "basis", "structure", "signal", "multipliers"];

pub fn parse_config(text: &str) -> Result<Config, ParseError> {
    // lines of sections we do not interpret are blanked before lexing
    let mut masked = String::with_capacity(text.len());
    let mut extra: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut current_unknown: Option<String> = None;
    for line in text.lines() {
        let t = line.trim();
        if let Some(name) = section_name(t) {
            if KNOWN.contains(&name.as_str()) {
                current_unknown = None;
            } else {
                extra.entry(name.clone()).or_default();
                current_unknown = Some(name);
                masked.push('\n');
                continue;
            }
        }
        match &current_unknown {
            Some(name) => {
                if !t.is_empty() && !t.starts_with('#') {
                    extra.get_mut(name).unwrap().push(t.to_string());
                }
                masked.push('\n');
            }
            None => {
                masked.push_str(line);
                masked.push('\n');
            }
        }
    }
    let toks = lex(&masked)?;
    let mut p = Parser {
        toks,
        pos: 0,
        consts: BTreeMap::new(),
        dim: None,
    };
    let mut cfg = p.parse_all()?;
    cfg.extra = extra;
    Ok(cfg)
}

fn section_name(t: &str) -> Option<String> {
    let inner = t
        .strip_prefix('[')?
        .split('#')
        .next()?
        .trim()
        .strip_suffix(']')?
        .trim();
    if !inner.is_empty() && inner.chars().all(|c| c.is_alphanumeric() || c == '_') {
        Some(inner.to_string())
    } else {
        None
    }
}

/// Parses a standalone expression over x1..x`dim`.
pub fn parse_expr(text: &str, dim: usize) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        consts: BTreeMap::new(),
        dim: Some(dim),
    };
    p.skip_newlines();
    let e = p.expr()?;
    p.skip_newlines();
    p.expect(&Tok::Eof)?;
    Ok(e)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    consts: BTreeMap<String, f64>,
    dim: Option<usize>,
}

struct Pending<T> {
    value: T,
    line: usize,
    col: usize,
}

#[derive(Default)]
struct ModeDraft {
    a: Option<Pending<Matrix>>,
    f: Option<Pending<Vec<Expr>>>,
    region: Option<Pending<RegionConfig>>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &str) -> ParseError {
        let (line, col) = self.here();
        ParseError::Syntax {
            line,
            col,
            found: self.peek().describe(),
            expected: expected.to_string(),
        }
    }

    fn expect(&mut self, t: &Tok) -> Result<(), ParseError> {
        if self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&t.describe()))
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Semi) {
            self.bump();
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.err("an identifier")),
        }
    }

    fn end_of_statement(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Newline | Tok::Semi | Tok::Eof => {
                self.skip_newlines();
                Ok(())
            }
            _ => Err(self.err("end of line")),
        }
    }

    fn parse_all(&mut self) -> Result<Config, ParseError> {
        let mut section = String::new();
        let mut modes: BTreeMap<usize, (ModeDraft, usize, usize)> = BTreeMap::new();
        let mut signal: BTreeMap<usize, Pending<RegionConfig>> = BTreeMap::new();
        let mut pmats: BTreeMap<usize, Pending<SymMatrix>> = BTreeMap::new();
        let mut vexprs: BTreeMap<usize, Pending<Expr>> = BTreeMap::new();
        let mut families: BTreeMap<usize, Pending<Vec<usize>>> = BTreeMap::new();
        let mut polarity = PolarityTag::MaxMin;
        let mut multipliers = Vec::new();
        let mut saw_structure = false;
        self.skip_newlines();
        while self.peek() != &Tok::Eof {
            if self.peek() == &Tok::LBracket {
                self.bump();
                section = self.ident()?;
                self.expect(&Tok::RBracket)?;
                if section == "structure" {
                    saw_structure = true;
                }
                self.end_of_statement()?;
                continue;
            }
            let (line, col) = self.here();
            let key = self.ident()?;
            match section.as_str() {
                "system" => match key.as_str() {
                    "dim" => {
                        self.expect(&Tok::Eq)?;
                        let n = self.integer()?;
                        if n < 1 {
                            return Err(ParseError::Invalid {
                                line,
                                col,
                                message: "dim must be positive".into(),
                            });
                        }
                        self.set_dim(n as usize, line, col)?;
                    }
                    "const" => {
                        let name = self.ident()?;
                        self.expect(&Tok::Eq)?;
                        let e = self.expr()?;
                        if e.arity() > 0 {
                            return Err(ParseError::Invalid {
                                line,
                                col,
                                message: format!("constant `{name}` depends on the state"),
                            });
                        }
                        let v = e.eval(&[]).map_err(|er| ParseError::Invalid {
                            line,
                            col,
                            message: er.to_string(),
                        })?;
                        self.consts.insert(name, v);
                    }
                    "mode" => {
                        let idx = self.integer()?;
                        if idx < 1 || modes.contains_key(&(idx as usize)) {
                            return Err(ParseError::Invalid {
                                line,
                                col,
                                message: format!("bad or repeated mode index {idx}"),
                            });
                        }
                        let draft = self.mode_block()?;
                        modes.insert(idx as usize, (draft, line, col));
                    }
                    _ => {
                        return Err(ParseError::Syntax {
                            line,
                            col,
                            found: format!("`{key}`"),
                            expected: "`dim`, `const` or `mode`".into(),
                        })
                    }
                },
                "basis" => {
                    self.expect(&Tok::Eq)?;
                    let (kind, idx) = split_indexed(&key).ok_or_else(|| ParseError::Syntax {
                        line,
                        col,
                        found: format!("`{key}`"),
                        expected: "`P<k>` or `V<k>`".into(),
                    })?;
                    match kind {
                        "P" => {
                            let m = self.sym_matrix()?;
                            pmats.insert(
                                idx,
                                Pending {
                                    value: m,
                                    line,
                                    col,
                                },
                            );
                        }
                        "V" => {
                            let e = self.expr()?;
                            vexprs.insert(
                                idx,
                                Pending {
                                    value: e,
                                    line,
                                    col,
                                },
                            );
                        }
                        _ => {
                            return Err(ParseError::Syntax {
                                line,
                                col,
                                found: format!("`{key}`"),
                                expected: "`P<k>` or `V<k>`".into(),
                            })
                        }
                    }
                }
                "structure" => {
                    self.expect(&Tok::Eq)?;
                    if key == "polarity" {
                        let v = self.ident()?;
                        polarity = match v.as_str() {
                            "maxmin" => PolarityTag::MaxMin,
                            "minmax" => PolarityTag::MinMax,
                            _ => {
                                return Err(ParseError::Syntax {
                                    line,
                                    col,
                                    found: format!("`{v}`"),
                                    expected: "`maxmin` or `minmax`".into(),
                                })
                            }
                        };
                    } else {
                        let (kind, idx) = split_indexed(&key)
                            .filter(|(k, _)| *k == "S")
                            .ok_or_else(|| ParseError::Syntax {
                                line,
                                col,
                                found: format!("`{key}`"),
                                expected: "`polarity` or `S<j>`".into(),
                            })?;
                        let _ = kind;
                        let set = self.index_set()?;
                        if set.is_empty() {
                            return Err(ParseError::EmptyFamily {
                                line,
                                col,
                                name: key,
                            });
                        }
                        families.insert(
                            idx,
                            Pending {
                                value: set,
                                line,
                                col,
                            },
                        );
                    }
                }
                "signal" => {
                    self.expect(&Tok::Eq)?;
                    let (kind, idx) = split_indexed(&key).ok_or_else(|| ParseError::Syntax {
                        line,
                        col,
                        found: format!("`{key}`"),
                        expected: "`Q<i>`, `H<i>` or `region<i>`".into(),
                    })?;
                    let region = self.region_value(kind, line, col)?;
                    signal.insert(
                        idx,
                        Pending {
                            value: region,
                            line,
                            col,
                        },
                    );
                }
                "multipliers" => {
                    if key != "mode" {
                        return Err(ParseError::Syntax {
                            line,
                            col,
                            found: format!("`{key}`"),
                            expected: "`mode`".into(),
                        });
                    }
                    multipliers.push(self.multiplier_entry()?);
                }
                "" => {
                    return Err(ParseError::Syntax {
                        line,
                        col,
                        found: format!("`{key}`"),
                        expected: "a section header".into(),
                    })
                }
                _ => unreachable!("unknown sections are masked"),
            }
            self.end_of_statement()?;
        }
        let consts = std::mem::take(&mut self.consts);
        let system = self.build_system(modes, signal)?;
        let basis = self.build_basis(pmats, vexprs, families, polarity, saw_structure)?;
        Ok(Config {
            system,
            basis,
            multipliers,
            constants: consts,
            extra: BTreeMap::new(),
        })
    }

    fn set_dim(&mut self, n: usize, line: usize, col: usize) -> Result<(), ParseError> {
        match self.dim {
            Some(d) if d != n => Err(ParseError::Dimension {
                line,
                col,
                message: format!("expected {d}, got {n}"),
            }),
            _ => {
                self.dim = Some(n);
                Ok(())
            }
        }
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        let neg = if self.peek() == &Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() < 1e9 => {
                self.bump();
                Ok(if neg { -(v as i64) } else { v as i64 })
            }
            _ => Err(self.err("an integer")),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let (line, col) = self.here();
        let e = self.expr()?;
        if e.arity() > 0 {
            return Err(ParseError::Invalid {
                line,
                col,
                message: "expected a constant".into(),
            });
        }
        e.eval(&[]).map_err(|er| ParseError::Invalid {
            line,
            col,
            message: er.to_string(),
        })
    }

    fn mode_block(&mut self) -> Result<ModeDraft, ParseError> {
        self.expect(&Tok::LBrace)?;
        let mut d = ModeDraft::default();
        self.skip_newlines();
        while self.peek() != &Tok::RBrace {
            let (line, col) = self.here();
            let key = self.ident()?;
            self.expect(&Tok::Eq)?;
            match key.as_str() {
                "A" => {
                    let m = self.matrix()?;
                    if m.nrows() != m.ncols() {
                        return Err(ParseError::Dimension {
                            line,
                            col,
                            message: "A must be square".into(),
                        });
                    }
                    self.set_dim(m.nrows(), line, col)?;
                    d.a = Some(Pending {
                        value: m,
                        line,
                        col,
                    });
                }
                "f" => {
                    let v = self.expr_tuple()?;
                    d.f = Some(Pending {
                        value: v,
                        line,
                        col,
                    });
                }
                "Q" | "H" | "region" => {
                    let r = self.region_value(&key, line, col)?;
                    d.region = Some(Pending {
                        value: r,
                        line,
                        col,
                    });
                }
                _ => {
                    return Err(ParseError::Syntax {
                        line,
                        col,
                        found: format!("`{key}`"),
                        expected: "`A`, `f`, `Q`, `H` or `region`".into(),
                    })
                }
            }
            match self.peek() {
                Tok::Semi | Tok::Newline => self.skip_newlines(),
                Tok::RBrace => {}
                _ => return Err(self.err("`;` or `}`")),
            }
        }
        self.expect(&Tok::RBrace)?;
        Ok(d)
    }

    fn region_value(
        &mut self,
        kind: &str,
        line: usize,
        col: usize,
    ) -> Result<RegionConfig, ParseError> {
        match kind {
            "Q" => {
                let q = self.sym_matrix()?;
                self.set_dim(q.dim(), line, col)?;
                if negdef_margin(&q) <= 0.0 {
                    return Err(ParseError::Invalid {
                        line,
                        col,
                        message: "region matrix is negative semidefinite (empty region)".into(),
                    });
                }
                Ok(RegionConfig::Cone(q))
            }
            "H" => Ok(RegionConfig::Expr(self.expr()?)),
            "region" => {
                let v = self.ident()?;
                if v == "all" {
                    Ok(RegionConfig::All)
                } else {
                    Err(ParseError::Syntax {
                        line,
                        col,
                        found: format!("`{v}`"),
                        expected: "`all`".into(),
                    })
                }
            }
            _ => Err(ParseError::Syntax {
                line,
                col,
                found: format!("`{kind}`"),
                expected: "`Q`, `H` or `region`".into(),
            }),
        }
    }

    fn multiplier_entry(&mut self) -> Result<MultiplierEntry, ParseError> {
        let (line, col) = self.here();
        let mode = self.integer()?;
        let kw = self.ident()?;
        if kw != "active" {
            return Err(ParseError::Syntax {
                line,
                col,
                found: format!("`{kw}`"),
                expected: "`active`".into(),
            });
        }
        let active = self.integer()?;
        let kw = self.ident()?;
        if kw != "pairs" {
            return Err(ParseError::Syntax {
                line,
                col,
                found: format!("`{kw}`"),
                expected: "`pairs`".into(),
            });
        }
        self.expect(&Tok::LParen)?;
        let mut pairs = Vec::new();
        while self.peek() != &Tok::RParen {
            let a = self.integer()?;
            self.expect(&Tok::Lt)?;
            let b = self.integer()?;
            if a < 1 || b < 1 {
                return Err(ParseError::Invalid {
                    line,
                    col,
                    message: "indices start at 1".into(),
                });
            }
            pairs.push((a as usize - 1, b as usize - 1));
            if self.peek() == &Tok::Comma {
                self.bump();
            }
        }
        self.expect(&Tok::RParen)?;
        self.expect(&Tok::LBrace)?;
        let mut tau = Vec::new();
        let mut beta = 0.0;
        self.skip_newlines();
        while self.peek() != &Tok::RBrace {
            let key = self.ident()?;
            self.expect(&Tok::Eq)?;
            match key.as_str() {
                "tau" => {
                    self.expect(&Tok::LParen)?;
                    while self.peek() != &Tok::RParen {
                        tau.push(self.number()?);
                        if self.peek() == &Tok::Comma {
                            self.bump();
                        }
                    }
                    self.expect(&Tok::RParen)?;
                }
                "beta" => beta = self.number()?,
                _ => {
                    return Err(ParseError::Syntax {
                        line,
                        col,
                        found: format!("`{key}`"),
                        expected: "`tau` or `beta`".into(),
                    })
                }
            }
            self.skip_newlines();
        }
        self.expect(&Tok::RBrace)?;
        if mode < 1 || active < 1 {
            return Err(ParseError::Invalid {
                line,
                col,
                message: "indices start at 1".into(),
            });
        }
        if tau.len() != pairs.len() {
            return Err(ParseError::Invalid {
                line,
                col,
                message: format!("{} pairs but {} tau values", pairs.len(), tau.len()),
            });
        }
        if tau.iter().any(|t| *t < 0.0) || beta < 0.0 {
            return Err(ParseError::Invalid {
                line,
                col,
                message: "multipliers must be nonnegative".into(),
            });
        }
        Ok(MultiplierEntry {
            mode: mode as usize - 1,
            active: active as usize - 1,
            pairs,
            tau,
            beta,
        })
    }

    fn index_set(&mut self) -> Result<Vec<usize>, ParseError> {
        self.expect(&Tok::LBrace)?;
        let mut out = Vec::new();
        while self.peek() != &Tok::RBrace {
            let (line, col) = self.here();
            let v = self.integer()?;
            if v < 1 {
                return Err(ParseError::Invalid {
                    line,
                    col,
                    message: "indices start at 1".into(),
                });
            }
            out.push(v as usize - 1);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RBrace => {}
                _ => return Err(self.err("`,` or `}`")),
            }
        }
        self.expect(&Tok::RBrace)?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    fn matrix(&mut self) -> Result<Matrix, ParseError> {
        let (line, col) = self.here();
        self.expect(&Tok::LBracket)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        while self.peek() != &Tok::RBracket {
            self.expect(&Tok::LBracket)?;
            let mut row = Vec::new();
            while self.peek() != &Tok::RBracket {
                row.push(self.number()?);
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RBracket => {}
                    _ => return Err(self.err("`,` or `]`")),
                }
            }
            self.expect(&Tok::RBracket)?;
            rows.push(row);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RBracket => {}
                _ => return Err(self.err("`,` or `]`")),
            }
        }
        self.expect(&Tok::RBracket)?;
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
            return Err(ParseError::Dimension {
                line,
                col,
                message: "ragged or empty matrix literal".into(),
            });
        }
        Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    fn sym_matrix(&mut self) -> Result<SymMatrix, ParseError> {
        let (line, col) = self.here();
        let m = self.matrix()?;
        SymMatrix::new(m).map_err(|e| match e {
            NumError::NotSymmetric { .. } => ParseError::NonSymmetric { line, col },
            other => ParseError::Dimension {
                line,
                col,
                message: other.to_string(),
            },
        })
    }

    fn expr_tuple(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect(&Tok::LParen)?;
        let mut out = vec![self.expr()?];
        while self.peek() == &Tok::Comma {
            self.bump();
            out.push(self.expr()?);
        }
        self.expect(&Tok::RParen)?;
        Ok(out)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == &Tok::Minus {
            self.bump();
            // a minus directly on a literal folds into the literal
            if let Tok::Num(v) = self.peek().clone() {
                self.bump();
                return Ok(Expr::Const(-v));
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.peek() == &Tok::LParen {
                    return self.call(&name, line, col);
                }
                if let Some(v) = self.consts.get(&name) {
                    return Ok(Expr::Const(*v));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if idx >= 1 && !name[1..].starts_with('0') {
                        if let Some(d) = self.dim {
                            if idx > d {
                                return Err(ParseError::Dimension {
                                    line,
                                    col,
                                    message: format!("`{name}` exceeds dimension {d}"),
                                });
                            }
                        }
                        return Ok(Expr::Var(idx - 1));
                    }
                }
                Err(ParseError::Invalid {
                    line,
                    col,
                    message: format!("unknown symbol `{name}`"),
                })
            }
            _ => Err(self.err("an expression")),
        }
    }

    fn call(&mut self, name: &str, line: usize, col: usize) -> Result<Expr, ParseError> {
        self.expect(&Tok::LParen)?;
        let e = match name {
            "pow" => {
                let base = self.expr()?;
                self.expect(&Tok::Comma)?;
                let k = self.integer()?;
                Expr::Pow(Box::new(base), k as i32)
            }
            "sin" => Expr::Sin(Box::new(self.expr()?)),
            "cos" => Expr::Cos(Box::new(self.expr()?)),
            "atan" => Expr::Atan(Box::new(self.expr()?)),
            "sqrt" => Expr::Sqrt(Box::new(self.expr()?)),
            "quadform" => {
                let (l2, c2) = self.here();
                let p = self.sym_matrix()?;
                self.set_dim(p.dim(), l2, c2)?;
                Expr::QuadForm(p)
            }
            _ => {
                return Err(ParseError::Invalid {
                    line,
                    col,
                    message: format!("unknown function `{name}`"),
                })
            }
        };
        self.expect(&Tok::RParen)?;
        Ok(e)
    }

    fn build_system(
        &self,
        modes: BTreeMap<usize, (ModeDraft, usize, usize)>,
        mut signal: BTreeMap<usize, Pending<RegionConfig>>,
    ) -> Result<Option<SystemConfig>, ParseError> {
        if modes.is_empty() {
            return Ok(None);
        }
        let count = modes.len();
        let mut out = Vec::with_capacity(count);
        for (k, (idx, (draft, line, col))) in modes.into_iter().enumerate() {
            if idx != k + 1 {
                return Err(ParseError::Invalid {
                    line,
                    col,
                    message: format!("modes must be numbered 1..{count}"),
                });
            }
            let dim = self.dim.ok_or(ParseError::Invalid {
                line,
                col,
                message: "state dimension unknown; add `dim = n`".into(),
            })?;
            let field = match (draft.a, draft.f) {
                (Some(_), Some(_)) => {
                    return Err(ParseError::Invalid {
                        line,
                        col,
                        message: "mode has both `A` and `f`".into(),
                    })
                }
                (Some(a), None) => {
                    if a.value.nrows() != dim {
                        return Err(ParseError::Dimension {
                            line: a.line,
                            col: a.col,
                            message: format!(
                                "A is {}x{}, state has dimension {dim}",
                                a.value.nrows(),
                                a.value.ncols()
                            ),
                        });
                    }
                    FieldConfig::Linear(a.value)
                }
                (None, Some(f)) => {
                    if f.value.len() != dim {
                        return Err(ParseError::Dimension {
                            line: f.line,
                            col: f.col,
                            message: format!(
                                "f has {} components, state has dimension {dim}",
                                f.value.len()
                            ),
                        });
                    }
                    if let Some(e) = f.value.iter().find(|e| e.arity() > dim) {
                        return Err(ParseError::Dimension {
                            line: f.line,
                            col: f.col,
                            message: format!("`{e}` exceeds dimension {dim}"),
                        });
                    }
                    FieldConfig::Expr(f.value)
                }
                (None, None) => {
                    return Err(ParseError::Invalid {
                        line,
                        col,
                        message: "mode needs `A` or `f`".into(),
                    })
                }
            };
            let region = match (draft.region, signal.remove(&idx)) {
                (Some(_), Some(s)) => {
                    return Err(ParseError::Invalid {
                        line: s.line,
                        col: s.col,
                        message: format!("region of mode {idx} given twice"),
                    })
                }
                (Some(r), None) | (None, Some(r)) => r,
                (None, None) => {
                    return Err(ParseError::Invalid {
                        line,
                        col,
                        message: format!("mode {idx} has no region"),
                    })
                }
            };
            match &region.value {
                RegionConfig::Cone(q) if q.dim() != dim => {
                    return Err(ParseError::Dimension {
                        line: region.line,
                        col: region.col,
                        message: format!("Q is {}x{}, state has dimension {dim}", q.dim(), q.dim()),
                    })
                }
                RegionConfig::Expr(h) if h.arity() > dim => {
                    return Err(ParseError::Dimension {
                        line: region.line,
                        col: region.col,
                        message: format!("`{h}` exceeds dimension {dim}"),
                    })
                }
                _ => {}
            }
            out.push(ModeConfig {
                field,
                region: region.value,
            });
        }
        if let Some((idx, s)) = signal.into_iter().next() {
            return Err(ParseError::Invalid {
                line: s.line,
                col: s.col,
                message: format!("region for undeclared mode {idx}"),
            });
        }
        Ok(Some(SystemConfig {
            dim: self.dim.unwrap_or(0),
            modes: out,
        }))
    }

    fn build_basis(
        &self,
        pmats: BTreeMap<usize, Pending<SymMatrix>>,
        vexprs: BTreeMap<usize, Pending<Expr>>,
        families: BTreeMap<usize, Pending<Vec<usize>>>,
        polarity: PolarityTag,
        saw_structure: bool,
    ) -> Result<Option<BasisConfig>, ParseError> {
        if !pmats.is_empty() && !vexprs.is_empty() {
            let p = vexprs.values().next().unwrap();
            return Err(ParseError::Invalid {
                line: p.line,
                col: p.col,
                message: "basis mixes matrices and expressions".into(),
            });
        }
        let functions = if !pmats.is_empty() {
            let mut mats = Vec::new();
            for (k, (idx, p)) in pmats.into_iter().enumerate() {
                if idx != k + 1 {
                    return Err(ParseError::Invalid {
                        line: p.line,
                        col: p.col,
                        message: "basis functions must be numbered 1..K".into(),
                    });
                }
                if let Some(d) = self.dim {
                    if p.value.dim() != d {
                        return Err(ParseError::Dimension {
                            line: p.line,
                            col: p.col,
                            message: format!(
                                "P{idx} is {}x{}, state has dimension {d}",
                                p.value.dim(),
                                p.value.dim()
                            ),
                        });
                    }
                }
                if negdef_margin(&p.value.scale(-1.0)) >= 0.0 {
                    return Err(ParseError::Invalid {
                        line: p.line,
                        col: p.col,
                        message: format!("P{idx} is not positive definite"),
                    });
                }
                mats.push(p.value);
            }
            Some(BasisFunctions::Quadratic(mats))
        } else if !vexprs.is_empty() {
            let mut exprs = Vec::new();
            for (k, (idx, p)) in vexprs.into_iter().enumerate() {
                if idx != k + 1 {
                    return Err(ParseError::Invalid {
                        line: p.line,
                        col: p.col,
                        message: "basis functions must be numbered 1..K".into(),
                    });
                }
                exprs.push(p.value);
            }
            Some(BasisFunctions::Expr(exprs))
        } else {
            None
        };
        if families.is_empty() {
            if saw_structure {
                return Err(ParseError::Invalid {
                    line: 1,
                    col: 1,
                    message: "structure section has no `S<j>` sets".into(),
                });
            }
            return Ok(functions.map(|f| {
                let k = f.len();
                BasisConfig {
                    functions: Some(f),
                    families: vec![(0..k).collect()],
                    polarity: PolarityTag::MinMax,
                }
            }));
        }
        let mut fams = Vec::new();
        for (j, (idx, f)) in families.into_iter().enumerate() {
            if idx != j + 1 {
                return Err(ParseError::Invalid {
                    line: f.line,
                    col: f.col,
                    message: "sets must be numbered S1..SJ".into(),
                });
            }
            if let Some(fun) = &functions {
                if let Some(bad) = f.value.iter().find(|&&i| i >= fun.len()) {
                    return Err(ParseError::Invalid {
                        line: f.line,
                        col: f.col,
                        message: format!("index {} exceeds K = {}", bad + 1, fun.len()),
                    });
                }
            }
            fams.push(f.value);
        }
        Ok(Some(BasisConfig {
            functions,
            families: fams,
            polarity,
        }))
    }
}

/// `P12` -> ("P", 12)
fn split_indexed(key: &str) -> Option<(&str, usize)> {
    let pos = key.find(|c: char| c.is_ascii_digit())?;
    let (head, digits) = key.split_at(pos);
    let idx: usize = digits.parse().ok()?;
    if head.is_empty() || idx == 0 {
        return None;
    }
    Some((head, idx))
}

fn fmt_matrix(m: &Matrix) -> String {
    expr::fmt_matrix_rows(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn fmt_sym(m: &SymMatrix) -> String {
    fmt_matrix(m.matrix())
}

/// Renders a configuration in the grammar accepted by [`parse_config`].
pub fn render_config(cfg: &Config) -> String {
    let mut s = String::new();
    if let Some(sys) = &cfg.system {
        render_system(&mut s, sys);
    }
    if let Some(b) = &cfg.basis {
        render_basis(&mut s, b);
    }
    if !cfg.multipliers.is_empty() {
        s.push_str("[multipliers]\n");
        for m in &cfg.multipliers {
            render_multiplier(&mut s, m);
        }
    }
    for (name, lines) in &cfg.extra {
        let _ = writeln!(s, "[{name}]");
        for l in lines {
            let _ = writeln!(s, "{l}");
        }
    }
    s
}

pub fn render_system(s: &mut String, sys: &SystemConfig) {
    let _ = writeln!(s, "[system]\ndim = {}", sys.dim);
    for (i, m) in sys.modes.iter().enumerate() {
        let field = match &m.field {
            FieldConfig::Linear(a) => format!("A = {}", fmt_matrix(a)),
            FieldConfig::Expr(v) => {
                format!(
                    "f = ({})",
                    v.iter()
                        .map(|e| e.to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            }
        };
        let region = match &m.region {
            RegionConfig::Cone(q) => format!("Q = {}", fmt_sym(q)),
            RegionConfig::Expr(h) => format!("H = {h}"),
            RegionConfig::All => "region = all".to_string(),
        };
        let _ = writeln!(s, "mode {} {{ {field}; {region} }}", i + 1);
    }
}

pub fn render_basis(s: &mut String, b: &BasisConfig) {
    match &b.functions {
        Some(BasisFunctions::Quadratic(ps)) => {
            s.push_str("[basis]\n");
            for (k, p) in ps.iter().enumerate() {
                let _ = writeln!(s, "P{} = {}", k + 1, fmt_sym(p));
            }
        }
        Some(BasisFunctions::Expr(es)) => {
            s.push_str("[basis]\n");
            for (k, e) in es.iter().enumerate() {
                let _ = writeln!(s, "V{} = {e}", k + 1);
            }
        }
        None => {}
    }
    s.push_str("[structure]\n");
    let _ = writeln!(
        s,
        "polarity = {}",
        if b.polarity == PolarityTag::MaxMin {
            "maxmin"
        } else {
            "minmax"
        }
    );
    for (j, f) in b.families.iter().enumerate() {
        let items: Vec<String> = f.iter().map(|i| (i + 1).to_string()).collect();
        let _ = writeln!(s, "S{} = {{{}}}", j + 1, items.join(", "));
    }
}

pub fn render_multiplier(s: &mut String, m: &MultiplierEntry) {
    let pairs: Vec<String> = m
        .pairs
        .iter()
        .map(|(a, b)| format!("{}<{}", a + 1, b + 1))
        .collect();
    let tau: Vec<String> = m.tau.iter().map(|t| fmt_num(*t)).collect();
    let _ = writeln!(
        s,
        "mode {} active {} pairs ({}) {{ tau = ({}); beta = {} }}",
        m.mode + 1,
        m.active + 1,
        pairs.join(", "),
        tau.join(", "),
        fmt_num(m.beta)
    );
}
