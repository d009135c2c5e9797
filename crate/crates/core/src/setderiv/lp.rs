//! Dense two-phase simplex for  min c^T x  s.t.  A x = b, x >= 0.

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Infeasible,
    Unbounded,
    Optimal { x: Vec<f64>, value: f64 },
}

const EPS: f64 = 1e-11;

pub fn minimize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    // tableau rows: constraints with artificials, rhs last column
    let width = n + m + 1;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width];
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = 1.0;
        row[width - 1] = sign * b[i];
        t.push(row);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // phase one objective: sum of artificials
    let mut obj = vec![0.0; width];
    for row in t.iter() {
        for j in 0..width {
            if j < n || j == width - 1 {
                obj[j] -= row[j];
            }
        }
    }
    t.push(obj);
    if !run(&mut t, &mut basis, n + m) {
        return LpOutcome::Unbounded;
    }
    if -t[m][width - 1] > 1e-9 * (1.0 + b.iter().map(|v| v.abs()).sum::<f64>()) {
        return LpOutcome::Infeasible;
    }
    // drive remaining artificials out of the basis
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > EPS) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }
    // phase two: drop artificial columns by never letting them enter
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(c);
    for i in 0..m {
        let bj = basis[i];
        if bj < n && c[bj] != 0.0 {
            let f = c[bj];
            for j in 0..width {
                obj[j] -= f * t[i][j];
            }
        }
    }
    t[m] = obj;
    if !run(&mut t, &mut basis, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][width - 1];
        }
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, value }
}

/// Bland's rule iterations over entering columns `0..allowed`.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], allowed: usize) -> bool {
    let m = t.len() - 1;
    let width = t[0].len();
    for _ in 0..10_000 {
        let Some(j) = (0..allowed).find(|&j| t[m][j] < -EPS) else {
            return true;
        };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][j] > EPS {
                let ratio = t[i][width - 1] / t[i][j];
                match best {
                    Some((bi, br))
                        if ratio > br + 1e-15 || (ratio >= br - 1e-15 && basis[i] > basis[bi]) => {}
                    _ => best = Some((i, ratio)),
                }
            }
        }
        let Some((i, _)) = best else { return false };
        pivot(t, basis, i, j);
    }
    true
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let width = t[0].len();
    let p = t[r][c];
    for j in 0..width {
        t[r][j] /= p;
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[c];
            if f != 0.0 {
                for j in 0..width {
                    row[j] -= f * prow[j];
                }
            }
        }
    }
    basis[r] = c;
}
