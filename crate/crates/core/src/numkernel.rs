//! Dense small-matrix numerics: symmetric eigendecomposition (cyclic Jacobi),
//! matrix exponential (Padé 6 with scaling and squaring), definiteness margins.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: entry ({row}, {col}) differs by {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("empty matrix")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("singular linear system")]
    Singular,
}

/// Tolerances and sampling parameters shared by every verdict-producing routine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericPolicy {
    pub abs: f64,
    pub rel: f64,
    /// Strictness required of sign verdicts (negative margins must be below `-margin`).
    pub margin: f64,
    /// Directions per radius for perturbation sampling.
    pub samples: usize,
    pub seed: u64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        NumericPolicy {
            abs: 1e-9,
            rel: 1e-9,
            margin: 1e-9,
            samples: 64,
            seed: 0,
        }
    }
}

impl NumericPolicy {
    /// Tie tolerance for values of magnitude `scale`.
    pub fn tie(&self, scale: f64) -> f64 {
        self.abs + self.rel * scale.abs()
    }
}

/// Symmetric matrix; construction checks symmetry and finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self, NumError> {
        check_finite(&m)?;
        if m.nrows() != m.ncols() {
            return Err(NumError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(NumError::Empty);
        }
        let scale = m.amax().max(1.0);
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                let diff = (m[(i, j)] - m[(j, i)]).abs();
                if diff > 1e-12 * scale {
                    return Err(NumError::NotSymmetric {
                        row: i,
                        col: j,
                        diff,
                    });
                }
            }
        }
        Ok(SymMatrix((&m + m.transpose()) * 0.5))
    }

    /// Symmetric part (M + M^T)/2 of any square matrix.
    pub fn sym_part(m: &Matrix) -> Self {
        SymMatrix((m + m.transpose()) * 0.5)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, NumError> {
        let n = rows.len();
        let mut m = Matrix::zeros(n, n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(NumError::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        SymMatrix::new(m)
    }

    pub fn diag(d: &[f64]) -> Self {
        SymMatrix(Matrix::from_diagonal(&Vector::from_column_slice(d)))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// x^T M x
    pub fn quad(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            let mut r = 0.0;
            for j in 0..n {
                r += self.0[(i, j)] * x[j];
            }
            s += x[i] * r;
        }
        s
    }

    /// M x
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.0[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Upper-triangle entries, row by row.
    pub fn upper(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn from_upper(n: usize, v: &[f64]) -> SymMatrix {
        let mut m = Matrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m[(i, j)] = v[k];
                m[(j, i)] = v[k];
                k += 1;
            }
        }
        SymMatrix(m)
    }

    /// A^T M + M A
    pub fn lyap_form(&self, a: &Matrix) -> SymMatrix {
        let pa = &self.0 * a;
        SymMatrix::sym_part(&(&pa * 2.0))
    }
}

fn check_finite(m: &Matrix) -> Result<(), NumError> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Err(NumError::NonFinite(i, j));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column k is the unit eigenvector for `values[k]`.
    pub vectors: Matrix,
}

impl Spectrum {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().copied().collect()
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn eig_sym(m: &SymMatrix) -> Result<Spectrum, NumError> {
    check_finite(m.matrix())?;
    let n = m.dim();
    let mut a = m.matrix().clone();
    let mut v = Matrix::identity(n, n);
    let total = a.norm();
    if total > 0.0 {
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off.sqrt() <= 1e-17 * total {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &v.column(i));
    }
    Ok(Spectrum { values, vectors })
}

/// Largest eigenvalue: M is negative definite iff the result is negative.
pub fn negdef_margin(m: &SymMatrix) -> f64 {
    let a = m.matrix();
    match m.dim() {
        1 => a[(0, 0)],
        2 => lmax2(a[(0, 0)], a[(0, 1)], a[(1, 1)]),
        _ => eig_sym(m)
            .map(|s| s.values[s.values.len() - 1])
            .unwrap_or(f64::NAN),
    }
}

/// Smallest eigenvalue.
pub fn min_eigenvalue(m: &SymMatrix) -> f64 {
    -negdef_margin(&m.scale(-1.0))
}

#[inline]
pub(crate) fn lmax2(a: f64, b: f64, d: f64) -> f64 {
    let h = 0.5 * (a - d);
    0.5 * (a + d) + (h * h + b * b).sqrt()
}

/// e^{A t}
pub fn expm(a: &Matrix, t: f64) -> Result<Matrix, NumError> {
    check_finite(a)?;
    if a.nrows() != a.ncols() {
        return Err(NumError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if !t.is_finite() {
        return Err(NumError::NonFinite(0, 0));
    }
    let n = a.nrows();
    let b = a * t;
    let norm1 = (0..n)
        .map(|j| b.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0i32;
    if norm1 > 0.5 {
        s = (norm1 / 0.5).log2().ceil() as i32;
    }
    let b = &b / 2f64.powi(s);
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let id = Matrix::identity(n, n);
    let mut num = &id * C[0];
    let mut den = &id * C[0];
    let mut pow = id.clone();
    for (k, c) in C.iter().enumerate().skip(1) {
        pow = &pow * &b;
        num += &pow * *c;
        if k % 2 == 0 {
            den += &pow * *c;
        } else {
            den -= &pow * *c;
        }
    }
    let lu = den.lu();
    let mut e = lu.solve(&num).ok_or(NumError::Singular)?;
    for _ in 0..s {
        e = &e * &e;
    }
    Ok(e)
}

/// Solves A^T P + P A = -Q through the Kronecker form.
pub fn lyapunov(a: &Matrix, q: &SymMatrix) -> Result<SymMatrix, NumError> {
    let n = a.nrows();
    if q.dim() != n {
        return Err(NumError::Dimension {
            expected: n,
            got: q.dim(),
        });
    }
    let mut k = Matrix::zeros(n * n, n * n);
    // vec(P) column-major index: P[(i,j)] -> j*n + i
    for i in 0..n {
        for j in 0..n {
            let row = j * n + i;
            for l in 0..n {
                // (A^T P)_{ij} = sum_l A_{li} P_{lj}
                k[(row, j * n + l)] += a[(l, i)];
                // (P A)_{ij} = sum_l P_{il} A_{lj}
                k[(row, l * n + i)] += a[(l, j)];
            }
        }
    }
    let rhs = Vector::from_iterator(n * n, (0..n * n).map(|idx| -q.get(idx % n, idx / n)));
    let sol = k.lu().solve(&rhs).ok_or(NumError::Singular)?;
    let p = Matrix::from_fn(n, n, |i, j| sol[j * n + i]);
    Ok(SymMatrix::sym_part(&p))
}

/// Smallest singular value.
pub fn min_singular_value(m: &Matrix) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn mat_vec(a: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Builds a dense matrix from row slices.
pub fn matrix_from_rows(rows: &[&[f64]]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}
