//! Heuristic search for a basis satisfying condition (i).
//!
//! The outer problem over the basis matrices is non-convex; it is attacked by
//! Nelder-Mead on the worst (mode, block) margin, each margin already minimized
//! over its multipliers. Planar cone systems get a second phase restricted to
//! bases whose pieces tie on every switching line, which is where the
//! inequalities tend to be tight. Anything found is re-checked from scratch.

use std::cell::{Cell, RefCell};
use std::time::{Duration, Instant};

use argmin::core::{CostFunction, Error, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::inclusion::LinearConeSystem;
use crate::maxmin::MaxMinSpec;
use crate::numkernel::{eig_sym, lyapunov, Matrix, NumericPolicy, SymMatrix};

use super::{
    check_condition_i, cone_factors, cone_vacuity, inequality_terms, inner, optimize_multipliers,
    reduced_blocks, region_forms, Block, Candidate, CertifyError, ConditionI,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub budget: Duration,
    pub seed: u64,
    /// Multi-start count for the unconstrained phase.
    pub starts: usize,
    /// Required strictness: every margin must be below -accept.
    pub accept: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            budget: Duration::from_secs(60),
            seed: 0,
            starts: 16,
            accept: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found {
        candidate: Candidate,
        condition_i: ConditionI,
        evaluations: usize,
        elapsed: Duration,
        phase: String,
    },
    /// Budget exhausted; `best` is the lowest worst-margin seen (normalized basis).
    NotFound {
        best: f64,
        evaluations: usize,
        elapsed: Duration,
    },
}

impl SearchOutcome {
    pub fn candidate(&self) -> Option<&Candidate> {
        match self {
            SearchOutcome::Found { candidate, .. } => Some(candidate),
            SearchOutcome::NotFound { .. } => None,
        }
    }
}

const MIN_EIG: f64 = 1e-3;
const MIN_GAP: f64 = 1e-3;

struct Problem<'a> {
    sys: &'a LinearConeSystem,
    blocks: Vec<Block>,
    policy: NumericPolicy,
    k: usize,
    n: usize,
}

impl Problem<'_> {
    fn width(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    fn unpack(&self, x: &[f64]) -> Vec<SymMatrix> {
        let w = self.width();
        (0..self.k)
            .map(|k| SymMatrix::from_upper(self.n, &x[k * w..(k + 1) * w]))
            .collect()
    }

    /// Basis scaled so its largest eigenvalue is one, or a penalty.
    fn normalize(&self, x: &[f64]) -> Result<Vec<SymMatrix>, f64> {
        let ps = self.unpack(x);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &ps {
            let Ok(s) = eig_sym(p) else { return Err(30.0) };
            lo = lo.min(s.values[0]);
            hi = hi.max(s.values[self.n - 1]);
        }
        if !(hi > 0.0) {
            return Err(20.0);
        }
        let ps: Vec<SymMatrix> = ps.iter().map(|p| p.scale(1.0 / hi)).collect();
        let lo = lo / hi;
        if lo <= MIN_EIG {
            return Err(10.0 + (MIN_EIG - lo));
        }
        for a in 0..self.k {
            for b in a + 1..self.k {
                let d = ps[a].sub(&ps[b]).norm();
                if d <= MIN_GAP {
                    return Err(10.0 + (MIN_GAP - d));
                }
            }
        }
        Ok(ps)
    }
}

struct Objective<'a> {
    prob: &'a Problem<'a>,
    /// (mode, block) -> last multipliers.
    warm: RefCell<Vec<Option<Vec<f64>>>>,
    best: RefCell<(f64, Vec<f64>)>,
    evals: Cell<usize>,
    /// Set on deadline or target; later calls return a constant so the
    /// optimizer winds down without evaluating anything.
    stopped: Cell<bool>,
    deadline: Instant,
    target: f64,
    /// Maps the optimizer's variables to stacked basis entries.
    embed: Option<Matrix>,
}

impl<'a> Objective<'a> {
    fn new(prob: &'a Problem<'a>, deadline: Instant, target: f64, embed: Option<Matrix>) -> Self {
        Objective {
            prob,
            warm: RefCell::new(vec![None; prob.sys.len() * prob.blocks.len()]),
            best: RefCell::new((f64::INFINITY, Vec::new())),
            evals: Cell::new(0),
            stopped: Cell::new(false),
            deadline,
            target,
            embed,
        }
    }

    fn stacked(&self, z: &[f64]) -> Vec<f64> {
        match &self.embed {
            None => z.to_vec(),
            Some(nm) => {
                let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                (0..nm.nrows())
                    .map(|r| (0..nm.ncols()).map(|c| nm[(r, c)] * z[c]).sum::<f64>() / zn)
                    .collect()
            }
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let prob = self.prob;
        let ps = match prob.normalize(x) {
            Ok(ps) => ps,
            Err(pen) => return pen,
        };
        let mut worst = f64::NEG_INFINITY;
        let mut warm = self.warm.borrow_mut();
        for mode in 0..prob.sys.len() {
            for (bi, block) in prob.blocks.iter().enumerate() {
                if cone_vacuity(&region_forms(prob.sys, &ps, mode, block), &prob.policy).is_empty()
                {
                    continue;
                }
                let (m0, ds) = inequality_terms(prob.sys, &ps, mode, block);
                let slot = &mut warm[mode * prob.blocks.len() + bi];
                let (t, v) = inner::minimize_multipliers(&m0, &ds, slot.as_deref());
                *slot = Some(t);
                worst = worst.max(v);
            }
        }
        if worst == f64::NEG_INFINITY {
            // every inequality is vacuous
            worst = -1.0;
        }
        worst
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> Result<Self::Output, Error> {
        if self.stopped.get() || Instant::now() >= self.deadline {
            self.stopped.set(true);
            return Ok(self.best.borrow().0.min(1e3));
        }
        self.evals.set(self.evals.get() + 1);
        let x = self.stacked(z);
        let v = self.value(&x);
        {
            let mut best = self.best.borrow_mut();
            if v < best.0 {
                *best = (v, x);
            }
        }
        if v < self.target {
            self.stopped.set(true);
        }
        Ok(v)
    }
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let b = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    SymMatrix::sym_part(&(&b * b.transpose() + Matrix::identity(n, n) * (0.2 * n as f64)))
}

fn initial_basis(sys: &LinearConeSystem, k: usize, start: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = sys.dim();
    let mut x = Vec::new();
    for j in 0..k {
        let lyap = lyapunov(&sys.a[(j + start) % sys.len()], &SymMatrix::identity(n))
            .ok()
            .filter(|p| super::min_eigenvalue(p) > 0.0);
        let p = match lyap {
            Some(p) if start < sys.len() => {
                let s = p.norm();
                p.scale(1.0 / s)
                    .add(&random_pd(rng, n).scale(0.05 / n as f64))
            }
            _ => random_pd(rng, n),
        };
        x.extend(p.upper());
    }
    x
}

fn simplex_around(x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
    let mut s = vec![x.to_vec()];
    for i in 0..x.len() {
        let mut y = x.to_vec();
        y[i] += step * scale;
        s.push(y);
    }
    s
}

/// Nelder-Mead with restarts from the best point.
fn run_nm(obj: &Objective<'_>, start: Vec<f64>, restarts: usize, iters: u64) {
    let mut z = start;
    for r in 0..=restarts {
        if obj.stopped.get() {
            return;
        }
        let step = if r == 0 { 0.3 } else { 0.1 };
        let Ok(solver) = NelderMead::new(simplex_around(&z, step)).with_sd_tolerance(1e-12) else {
            return;
        };
        match Executor::new(ObjRef(obj), solver)
            .configure(|s| s.max_iters(iters))
            .run()
        {
            Ok(out) => {
                if let Some(p) = out.state().get_best_param() {
                    z = p.clone();
                }
            }
            Err(_) => return,
        }
    }
}

/// Lets the executor own a cost function that borrows the shared state.
struct ObjRef<'o, 'a>(&'o Objective<'a>);

impl CostFunction for ObjRef<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> Result<f64, Error> {
        self.0.cost(z)
    }
}

/// Rows c with c . x = v'(P_a - P_b)v for the stacked basis x.
fn tie_row(k: usize, v: [f64; 2], a: usize, b: usize) -> Vec<f64> {
    let coef = [v[0] * v[0], 2.0 * v[0] * v[1], v[1] * v[1]];
    let mut row = vec![0.0; 3 * k];
    for c in 0..3 {
        row[3 * a + c] = coef[c];
        row[3 * b + c] = -coef[c];
    }
    row
}

fn null_space(rows: &[Vec<f64>], width: usize) -> Option<Matrix> {
    let c = Matrix::from_fn(rows.len(), width, |r, j| rows[r][j]);
    let s = eig_sym(&SymMatrix::sym_part(&(c.transpose() * &c))).ok()?;
    let top = s.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cols: Vec<usize> = (0..width).filter(|&j| s.values[j] <= 1e-10 * top).collect();
    if cols.is_empty() {
        return None;
    }
    Some(Matrix::from_fn(width, cols.len(), |r, j| {
        s.vectors[(r, cols[j])]
    }))
}

struct Searcher<'a> {
    prob: Problem<'a>,
    spec: &'a MaxMinSpec,
    opts: &'a SearchOptions,
    deadline: Instant,
    target: f64,
    evals: usize,
    best: (f64, Vec<f64>),
}

impl Searcher<'_> {
    /// Confirms a hit with freshly optimized multipliers.
    fn confirm(&mut self, x: &[f64]) -> Result<Option<(Candidate, ConditionI)>, CertifyError> {
        let Ok(ps) = self.prob.normalize(x) else {
            return Ok(None);
        };
        let cand = optimize_multipliers(self.prob.sys, self.spec, &ps, &self.prob.policy)?;
        let strict = NumericPolicy {
            margin: self.opts.accept,
            ..self.prob.policy
        };
        let ci = check_condition_i(self.prob.sys, self.spec, &cand, &strict)?;
        if ci.holds() {
            return Ok(Some((cand, ci)));
        }
        self.target = self.target.min(ci.worst()) * 2.0;
        Ok(None)
    }

    fn attempt(
        &mut self,
        embed: Option<Matrix>,
        start: Vec<f64>,
    ) -> Result<Option<(Candidate, ConditionI)>, CertifyError> {
        let obj = Objective::new(&self.prob, self.deadline, self.target, embed);
        run_nm(&obj, start, 2, 4000);
        let evals = obj.evals.get();
        let hit = obj.best.into_inner();
        self.evals += evals;
        if hit.0 < self.best.0 {
            self.best = hit.clone();
        }
        if hit.0 < self.target {
            return self.confirm(&hit.1);
        }
        Ok(None)
    }
}

pub fn search_condition_i(
    sys: &LinearConeSystem,
    spec: &MaxMinSpec,
    opts: &SearchOptions,
    policy: &NumericPolicy,
) -> Result<SearchOutcome, CertifyError> {
    let t0 = Instant::now();
    let blocks = reduced_blocks(spec)?;
    let k = spec.k();
    let n = sys.dim();
    let prob = Problem {
        sys,
        blocks,
        policy: *policy,
        k,
        n,
    };
    let mut s = Searcher {
        prob,
        spec,
        opts,
        deadline: t0 + opts.budget,
        target: -(10.0 * opts.accept).max(1e-5),
        evals: 0,
        best: (f64::INFINITY, Vec::new()),
    };
    let found = |c: Candidate, ci: ConditionI, evals: usize, phase: &str| SearchOutcome::Found {
        candidate: c,
        condition_i: ci,
        evaluations: evals,
        elapsed: t0.elapsed(),
        phase: phase.to_string(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let planar = n == 2 && sys.len() >= 2 && sys.q.iter().all(|q| q.is_some()) && k >= 2;
    let phase_a_end = if planar {
        t0 + opts.budget.mul_f64(0.3)
    } else {
        s.deadline
    };

    // phase A: unconstrained multi-start
    for start in 0..opts.starts.max(1) {
        if Instant::now() >= phase_a_end {
            break;
        }
        let x0 = initial_basis(sys, k, start, &mut rng);
        let saved = s.deadline;
        s.deadline = phase_a_end.min(saved);
        let r = s.attempt(None, x0);
        s.deadline = saved;
        if let Some((c, ci)) = r? {
            return Ok(found(c, ci, s.evals, "unconstrained"));
        }
    }

    // phase B: bases tying on every switching line
    if planar {
        let qs: Vec<SymMatrix> = sys.q.iter().flatten().cloned().collect();
        if let Ok(factors) = cone_factors(&qs) {
            let pairs: Vec<(usize, usize)> = (0..k)
                .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
                .collect();
            let lines: Vec<[f64; 2]> = factors.lines.iter().map(|l| l.v).collect();
            let total = pairs.len().pow(lines.len() as u32);
            if total <= 4096 {
                let reference = if s.best.1.is_empty() {
                    initial_basis(sys, k, 0, &mut rng)
                } else {
                    s.best.1.clone()
                };
                let ref_ps = s.prob.unpack(&reference);
                let mut assignments: Vec<(f64, Vec<usize>)> = (0..total)
                    .map(|code| {
                        let mut c = code;
                        let choice: Vec<usize> = (0..lines.len())
                            .map(|_| {
                                let d = c % pairs.len();
                                c /= pairs.len();
                                d
                            })
                            .collect();
                        let gap: f64 = choice
                            .iter()
                            .zip(&lines)
                            .map(|(&ci, v)| {
                                let (a, b) = pairs[ci];
                                let (va, vb) = (ref_ps[a].quad(v), ref_ps[b].quad(v));
                                (va - vb).abs() / (va.abs() + vb.abs()).max(1e-300)
                            })
                            .sum();
                        (gap, choice)
                    })
                    .collect();
                assignments.sort_by(|a, b| a.0.total_cmp(&b.0));
                let width = 3 * k;
                'outer: loop {
                    for (_, choice) in &assignments {
                        if Instant::now() >= s.deadline {
                            break 'outer;
                        }
                        let rows: Vec<Vec<f64>> = choice
                            .iter()
                            .zip(&lines)
                            .map(|(&ci, v)| tie_row(k, *v, pairs[ci].0, pairs[ci].1))
                            .collect();
                        let Some(nm) = null_space(&rows, width) else {
                            continue;
                        };
                        let best_x = if s.best.1.is_empty() {
                            reference.clone()
                        } else {
                            s.best.1.clone()
                        };
                        let mut starts = vec![(0..nm.ncols())
                            .map(|c| (0..width).map(|r| nm[(r, c)] * best_x[r]).sum())
                            .collect::<Vec<f64>>()];
                        let x1 = initial_basis(sys, k, starts.len() + 7, &mut rng);
                        starts.push(
                            (0..nm.ncols())
                                .map(|c| (0..width).map(|r| nm[(r, c)] * x1[r]).sum())
                                .collect(),
                        );
                        for z in starts {
                            if z.iter().all(|v| *v == 0.0) {
                                continue;
                            }
                            if let Some((c, ci)) = s.attempt(Some(nm.clone()), z)? {
                                return Ok(found(c, ci, s.evals, "aligned"));
                            }
                        }
                    }
                    if assignments.is_empty() {
                        break;
                    }
                }
            }
        }
    }
    // leftover budget goes to further unconstrained starts
    let mut start = opts.starts.max(1);
    while Instant::now() < s.deadline {
        let x0 = initial_basis(sys, k, start, &mut rng);
        start += 1;
        if let Some((c, ci)) = s.attempt(None, x0)? {
            return Ok(found(c, ci, s.evals, "unconstrained"));
        }
    }
    Ok(SearchOutcome::NotFound {
        best: s.best.0,
        evaluations: s.evals,
        elapsed: t0.elapsed(),
    })
}
