//! Multiplier optimization for a fixed basis: minimize lambda_max(M0 + sum t_k D_k)
//! over t in [0, cap]^r. The objective is convex in t; line searches along
//! coordinate and pairwise directions use golden sections.

use crate::numkernel::{lmax2, negdef_margin, SymMatrix};

pub const CAP: f64 = 1e4;

fn lmax(m0: &SymMatrix, ds: &[SymMatrix], t: &[f64]) -> f64 {
    if m0.dim() == 2 {
        let (mut a, mut b, mut d) = (m0.get(0, 0), m0.get(0, 1), m0.get(1, 1));
        for (dk, &tk) in ds.iter().zip(t) {
            a += tk * dk.get(0, 0);
            b += tk * dk.get(0, 1);
            d += tk * dk.get(1, 1);
        }
        return lmax2(a, b, d);
    }
    let mut m = m0.clone();
    for (dk, &tk) in ds.iter().zip(t) {
        m = m.add(&dk.scale(tk));
    }
    negdef_margin(&m)
}

fn golden(lo: f64, hi: f64, iters: usize, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Returns (t, value); `warm` seeds the iteration.
pub fn minimize_multipliers(
    m0: &SymMatrix,
    ds: &[SymMatrix],
    warm: Option<&[f64]>,
) -> (Vec<f64>, f64) {
    let r = ds.len();
    let mut t: Vec<f64> = match warm {
        Some(w) if w.len() == r => w.iter().map(|v| v.clamp(0.0, CAP)).collect(),
        _ => vec![0.0; r],
    };
    let mut val = lmax(m0, ds, &t);
    if r == 0 {
        return (t, val);
    }
    let zero = vec![0.0; r];
    let v0 = lmax(m0, ds, &zero);
    if v0 < val {
        t = zero;
        val = v0;
    }
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..r {
        let mut d = vec![0.0; r];
        d[i] = 1.0;
        dirs.push(d);
    }
    for i in 0..r {
        for j in i + 1..r {
            for s in [1.0, -1.0] {
                let mut d = vec![0.0; r];
                d[i] = 1.0;
                d[j] = s;
                dirs.push(d);
            }
        }
    }
    dirs.push(vec![1.0; r]);
    for _sweep in 0..40 {
        let before = val;
        for d in &dirs {
            // feasible step range keeping 0 <= t + s d <= CAP
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..r {
                if d[k] > 0.0 {
                    lo = lo.max(-t[k] / d[k]);
                    hi = hi.min((CAP - t[k]) / d[k]);
                } else if d[k] < 0.0 {
                    lo = lo.max((CAP - t[k]) / d[k]);
                    hi = hi.min(-t[k] / d[k]);
                }
            }
            if !(hi > lo) {
                continue;
            }
            let mut eval = |s: f64| {
                let p: Vec<f64> = t
                    .iter()
                    .zip(d)
                    .map(|(a, b)| (a + s * b).clamp(0.0, CAP))
                    .collect();
                lmax(m0, ds, &p)
            };
            // bracket on a log scale before the golden section
            let span = (hi - lo).max(1e-12);
            let mut best = (0.0, val);
            let mut step = 1e-3;
            while step < span {
                for s in [step, -step] {
                    if s >= lo && s <= hi {
                        let v = eval(s);
                        if v < best.1 {
                            best = (s, v);
                        }
                    }
                }
                step *= 4.0;
            }
            let (a, b) = (
                (best.0 - best.0.abs() * 0.75 - 1e-3).max(lo),
                (best.0 + best.0.abs() * 3.0 + 1e-3).min(hi),
            );
            let (s, v) = golden(a, b, 40, &mut eval);
            if v < best.1 {
                best = (s, v);
            }
            if best.1 < val {
                for (tk, dk) in t.iter_mut().zip(d) {
                    *tk = (*tk + best.0 * dk).clamp(0.0, CAP);
                }
                val = lmax(m0, ds, &t);
            }
        }
        if before - val <= 1e-12 * (1.0 + val.abs()) {
            break;
        }
    }
    (t, val)
}
