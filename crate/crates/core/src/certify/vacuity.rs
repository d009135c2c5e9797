//! Emptiness of the cones {x : x'F_k x > 0 for all k}.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::maxmin::circle_roots;
use crate::numkernel::{eig_sym, negdef_margin, NumericPolicy, SymMatrix};
use crate::sampling::unit_vector;

#[derive(Debug, Clone, PartialEq)]
pub enum Vacuity {
    /// Angular sweep found no open arc where every form is positive.
    EmptyExact,
    /// sum_k c_k F_k <= 0 for convex weights c.
    EmptyCertified { weights: Vec<f64>, margin: f64 },
    /// A witness direction with every form positive.
    NonEmpty(Vec<f64>),
    /// Neither certificate nor witness found; treated as non-empty.
    Unresolved,
}

impl Vacuity {
    pub fn is_empty(&self) -> bool {
        matches!(self, Vacuity::EmptyExact | Vacuity::EmptyCertified { .. })
    }
}

fn normalized(forms: &[SymMatrix]) -> Vec<SymMatrix> {
    forms
        .iter()
        .map(|f| {
            let n = f.norm();
            if n > 0.0 {
                f.scale(1.0 / n)
            } else {
                f.clone()
            }
        })
        .collect()
}

pub fn cone_vacuity(forms: &[SymMatrix], policy: &NumericPolicy) -> Vacuity {
    let n = forms[0].dim();
    let forms = normalized(forms);
    if forms.iter().any(|f| f.norm() == 0.0) {
        // a zero form is never strictly positive
        return Vacuity::EmptyExact;
    }
    if n == 1 {
        return if forms.iter().all(|f| f.get(0, 0) > 0.0) {
            Vacuity::NonEmpty(vec![1.0])
        } else {
            Vacuity::EmptyExact
        };
    }
    if n == 2 {
        return planar(&forms);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed ^ 0x5eed);
    let mut probe = |count: usize| {
        (0..count)
            .map(|_| unit_vector(&mut rng, n))
            .find(|x| forms.iter().all(|f| f.quad(x) > policy.abs))
    };
    if let Some(x) = probe(2_000) {
        return Vacuity::NonEmpty(x);
    }
    let (weights, margin) = simplex_min(&forms, policy.abs);
    if margin <= policy.abs {
        return Vacuity::EmptyCertified { weights, margin };
    }
    if let Some(x) = probe(20_000) {
        return Vacuity::NonEmpty(x);
    }
    // the maximizing eigenvector of the best combination is a natural probe
    if let Ok(s) = eig_sym(&combine(&forms, &weights)) {
        let x = s.vector(n - 1);
        if forms.iter().all(|f| f.quad(&x) > policy.abs) {
            return Vacuity::NonEmpty(x);
        }
    }
    Vacuity::Unresolved
}

fn planar(forms: &[SymMatrix]) -> Vacuity {
    let pi = std::f64::consts::PI;
    let mut roots: Vec<f64> = forms.iter().flat_map(circle_roots).collect();
    roots.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::new();
    for r in roots {
        if merged.last().is_none_or(|&m| r - m > 1e-9) {
            merged.push(r);
        }
    }
    if merged.len() > 1 && merged[0] + pi - merged[merged.len() - 1] <= 1e-9 {
        merged.pop();
    }
    let probes: Vec<f64> = if merged.is_empty() {
        vec![0.0]
    } else {
        (0..merged.len())
            .map(|i| {
                let next = if i + 1 < merged.len() {
                    merged[i + 1]
                } else {
                    merged[0] + pi
                };
                0.5 * (merged[i] + next)
            })
            .collect()
    };
    for t in probes {
        let x = vec![t.cos(), t.sin()];
        if forms.iter().all(|f| f.quad(&x) > 0.0) {
            return Vacuity::NonEmpty(x);
        }
    }
    Vacuity::EmptyExact
}

fn combine(forms: &[SymMatrix], c: &[f64]) -> SymMatrix {
    let mut acc = SymMatrix::zeros(forms[0].dim());
    for (f, &w) in forms.iter().zip(c) {
        acc = acc.add(&f.scale(w));
    }
    acc
}

/// min over the simplex of lambda_max(sum c_k F_k), by exponentiated subgradient steps.
pub(crate) fn simplex_min(forms: &[SymMatrix], stop_below: f64) -> (Vec<f64>, f64) {
    let r = forms.len();
    let n = forms[0].dim();
    let mut c = vec![1.0 / r as f64; r];
    let mut best = (c.clone(), negdef_margin(&combine(forms, &c)));
    for it in 0..3000 {
        let m = combine(forms, &c);
        let Ok(s) = eig_sym(&m) else { break };
        let val = s.values[n - 1];
        if val < best.1 {
            best = (c.clone(), val);
        }
        if best.1 <= stop_below {
            break;
        }
        let v = s.vector(n - 1);
        let step = 0.5 / ((it + 1) as f64).sqrt();
        let g: Vec<f64> = forms.iter().map(|f| f.quad(&v)).collect();
        let mut z = 0.0;
        for k in 0..r {
            c[k] *= (-step * g[k]).exp();
            z += c[k];
        }
        c.iter_mut().for_each(|w| *w /= z);
    }
    best
}
