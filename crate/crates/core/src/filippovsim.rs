//! Event-driven Filippov simulation: adaptive Dormand-Prince inside a mode,
//! bisection on region boundaries, first-order sliding, CSV and SVG export.

use std::fmt;

use thiserror::Error;

use crate::inclusion::{index_set, InclusionError, SwitchedSystem};
use crate::maxmin::{self, Basis, MaxMinSpec};
use crate::numkernel::{dot, norm, NumericPolicy};
use crate::setderiv::{lie_derivative, DerivError, LieStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid options: {0}")]
    Options(String),
    #[error("initial state must be finite")]
    NonFinite,
    #[error(transparent)]
    Inclusion(#[from] InclusionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub max_step: f64,
    /// Boundary residual accepted at events and on sliding surfaces (relative to |x|^2).
    pub event_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Stop after this many boundary crossings (None = run to the horizon).
    pub max_crossings: Option<usize>,
    pub policy: NumericPolicy,
}

impl SimOptions {
    pub fn new(horizon: f64) -> Self {
        SimOptions {
            horizon,
            max_step: 0.05,
            event_tol: 1e-12,
            rtol: 1e-10,
            atol: 1e-12,
            max_crossings: None,
            policy: NumericPolicy::default(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(SimError::Options("horizon must be nonnegative".into()));
        }
        if !pos(self.max_step) || !pos(self.event_tol) || !pos(self.rtol) || !pos(self.atol) {
            return Err(SimError::Options(
                "tolerances and max step must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Mode(usize),
    /// On the common boundary of modes a < b; lambda weights f_a.
    Sliding {
        a: usize,
        b: usize,
        lambda: f64,
    },
}

impl Regime {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Regime::Mode(_) => None,
            Regime::Sliding { lambda, .. } => Some(*lambda),
        }
    }

    /// 1-based surface id: pairs (a, b) numbered lexicographically.
    pub fn surface_id(&self, modes: usize) -> Option<usize> {
        match *self {
            Regime::Mode(_) => None,
            Regime::Sliding { a, b, .. } => Some(a * modes - a * (a + 1) / 2 + (b - a - 1) + 1),
        }
    }

    pub fn label(&self, modes: usize) -> String {
        match self {
            Regime::Mode(i) => format!("Mode({})", i + 1),
            Regime::Sliding { .. } => format!("Sliding({})", self.surface_id(modes).unwrap_or(0)),
        }
    }

    fn same_kind(&self, other: &Regime) -> bool {
        match (self, other) {
            (Regime::Mode(a), Regime::Mode(b)) => a == b,
            (Regime::Sliding { a, b, .. }, Regime::Sliding { a: c, b: d, .. }) => a == c && b == d,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Completed,
    LeftDomain,
    Stall(String),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Completed => write!(f, "completed"),
            Status::LeftDomain => write!(f, "left-domain"),
            Status::Stall(why) => write!(f, "stall ({why})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: Vec<f64>,
    pub from: Regime,
    pub to: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub modes: usize,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub status: Status,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectory has an initial sample")
    }

    /// Events that switch between two plain modes.
    pub fn crossings(&self) -> Vec<&Event> {
        self.events
            .iter()
            .filter(|e| matches!((e.from, e.to), (Regime::Mode(_), Regime::Mode(_))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlideTest {
    /// Weight on the first mode's field.
    Sliding(f64),
    Crossing,
    Tangent,
}

fn scaled(v: &[f64]) -> f64 {
    norm(v).max(1e-300)
}

/// Normal components of f_a, f_b along grad H_a at x.
fn normal_components(
    sys: &SwitchedSystem,
    x: &[f64],
    a: usize,
    b: usize,
) -> Result<(f64, f64, f64), SimError> {
    let n = sys
        .region_gradient(a, x)?
        .or(sys
            .region_gradient(b, x)?
            .map(|g| g.into_iter().map(|v| -v).collect()))
        .ok_or_else(|| SimError::Options("sliding needs a region boundary".into()))?;
    let fa = sys.field(a, x)?;
    let fb = sys.field(b, x)?;
    let scale = scaled(&n) * (norm(&fa).max(norm(&fb))).max(1e-300);
    Ok((dot(&n, &fa), dot(&n, &fb), scale))
}

/// Convex weight lambda on f_a making lambda f_a + (1-lambda) f_b tangent to the a|b surface.
pub fn sliding_lambda(
    sys: &SwitchedSystem,
    x: &[f64],
    a: usize,
    b: usize,
    policy: &NumericPolicy,
) -> Result<SlideTest, SimError> {
    let (sa, sb, scale) = normal_components(sys, x, a, b)?;
    let tol = policy.tie(scale);
    if sa.abs() <= tol && sb.abs() <= tol {
        return Ok(SlideTest::Tangent);
    }
    if sa * sb > 0.0 || (sb - sa).abs() <= tol {
        return Ok(SlideTest::Crossing);
    }
    Ok(SlideTest::Sliding((sb / (sb - sa)).clamp(0.0, 1.0)))
}

struct Sim<'a> {
    sys: &'a SwitchedSystem,
    opts: &'a SimOptions,
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl Sim<'_> {
    fn rhs(&self, regime: Regime, x: &[f64]) -> Result<Vec<f64>, SimError> {
        match regime {
            Regime::Mode(i) => Ok(self.sys.field(i, x)?),
            Regime::Sliding { a, b, .. } => {
                let (sa, sb, _) = normal_components(self.sys, x, a, b)?;
                let lam = if (sb - sa).abs() > 0.0 {
                    (sb / (sb - sa)).clamp(0.0, 1.0)
                } else {
                    0.5
                };
                let fa = self.sys.field(a, x)?;
                let fb = self.sys.field(b, x)?;
                Ok(fa
                    .iter()
                    .zip(&fb)
                    .map(|(p, q)| lam * p + (1.0 - lam) * q)
                    .collect())
            }
        }
    }

    /// One Dormand-Prince step; returns (x_new, error estimate norm).
    fn step(&self, regime: Regime, x: &[f64], h: f64) -> Result<(Vec<f64>, f64), SimError> {
        let n = x.len();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let xs: Vec<f64> = (0..n)
                .map(|c| x[c] + h * (0..s).map(|j| DP_A[s][j] * k[j][c]).sum::<f64>())
                .collect();
            let _ = DP_C[s];
            k.push(self.rhs(regime, &xs)?);
        }
        let x5: Vec<f64> = (0..n)
            .map(|c| x[c] + h * (0..7).map(|s| DP_B5[s] * k[s][c]).sum::<f64>())
            .collect();
        let mut err: f64 = 0.0;
        for c in 0..n {
            let e = h * (0..7).map(|s| (DP_B5[s] - DP_B4[s]) * k[s][c]).sum::<f64>();
            let sc = self.opts.atol + self.opts.rtol * x[c].abs().max(x5[c].abs());
            err = err.max((e / sc).abs());
        }
        Ok((x5, err))
    }

    fn project(&self, a: usize, x: &mut Vec<f64>) -> Result<(), SimError> {
        for _ in 0..4 {
            let (Some(h), Some(g)) = (
                self.sys.region_value(a, x)?,
                self.sys.region_gradient(a, x)?,
            ) else {
                return Ok(());
            };
            let g2 = dot(&g, &g);
            if g2 == 0.0 {
                return Ok(());
            }
            for (xc, gc) in x.iter_mut().zip(&g) {
                *xc -= h * gc / g2;
            }
        }
        Ok(())
    }

    fn band(&self, i: usize, x: &[f64]) -> f64 {
        self.sys.band(i, x, &self.opts.policy)
    }

    /// Guard functions that must stay >= 0 in the regime, normalized.
    fn guards(&self, regime: Regime, x: &[f64]) -> Result<Vec<f64>, SimError> {
        match regime {
            Regime::Mode(i) => {
                let r2 = dot(x, x).max(1e-300);
                Ok(self
                    .sys
                    .region_value(i, x)?
                    .map(|h| vec![h / r2])
                    .unwrap_or_default())
            }
            Regime::Sliding { a, b, .. } => {
                let (sa, sb, scale) = normal_components(self.sys, x, a, b)?;
                Ok(vec![-sa / scale, sb / scale])
            }
        }
    }

    /// Regime to enter at a point where mode set `modes` meet.
    fn initial_regime(&self, x: &[f64]) -> Result<Result<Regime, String>, SimError> {
        let modes = index_set(self.sys, x, &self.opts.policy)?;
        if modes.len() == 1 {
            return Ok(Ok(Regime::Mode(modes[0])));
        }
        let mut inward = Vec::new();
        for &i in &modes {
            match self.sys.region_gradient(i, x)? {
                None => return Ok(Ok(Regime::Mode(i))),
                Some(g) => {
                    let f = self.sys.field(i, x)?;
                    let s = dot(&g, &f) / (scaled(&g) * scaled(&f));
                    inward.push((i, s));
                }
            }
        }
        if modes.len() == 2 {
            let (a, sa) = inward[0];
            let (b, sb) = inward[1];
            if sa > 0.0 && sb <= 0.0 {
                return Ok(Ok(Regime::Mode(a)));
            }
            if sb > 0.0 && sa <= 0.0 {
                return Ok(Ok(Regime::Mode(b)));
            }
            return Ok(
                match sliding_lambda(self.sys, x, a, b, &self.opts.policy)? {
                    SlideTest::Sliding(lambda) => Ok(Regime::Sliding { a, b, lambda }),
                    _ => Ok(Regime::Mode(if sa >= sb { a } else { b })),
                },
            );
        }
        let best = inward
            .iter()
            .copied()
            .filter(|p| p.1 > 0.0)
            .max_by(|p, q| p.1.total_cmp(&q.1));
        Ok(match best {
            Some((i, _)) => Ok(Regime::Mode(i)),
            None => Err("codimension-2 point".into()),
        })
    }

    /// Regime after leaving `from` at x (just past the boundary).
    fn next_regime(&self, from: Regime, x: &[f64]) -> Result<Result<Regime, String>, SimError> {
        match from {
            Regime::Mode(i) => {
                let mut others = Vec::new();
                for k in 0..self.sys.len() {
                    if k == i {
                        continue;
                    }
                    let h = self.sys.region_value(k, x)?.unwrap_or(f64::INFINITY);
                    others.push((k, h));
                }
                let near = others.iter().filter(|p| p.1 >= -self.band(p.0, x)).count();
                let Some(&(j, _)) = others.iter().max_by(|p, q| p.1.total_cmp(&q.1)) else {
                    return Ok(Err("no neighbouring mode".into()));
                };
                if near > 1 {
                    return Ok(Err("codimension-2 point".into()));
                }
                let (a, b) = (i.min(j), i.max(j));
                let (sa, sb, scale) = normal_components(self.sys, x, i, j)?;
                let tol = self.opts.policy.tie(scale);
                if sb < -tol || sa > tol {
                    return Ok(Ok(Regime::Mode(j)));
                }
                let lam_i = if sb - sa > 0.0 { sb / (sb - sa) } else { 0.5 };
                let lambda = if a == i { lam_i } else { 1.0 - lam_i };
                Ok(Ok(Regime::Sliding {
                    a,
                    b,
                    lambda: lambda.clamp(0.0, 1.0),
                }))
            }
            Regime::Sliding { a, b, .. } => {
                let (sa, sb, _) = normal_components(self.sys, x, a, b)?;
                // -sa < 0: f_a re-enters D_a; sb < 0: f_b re-enters D_b
                Ok(Ok(if -sa < sb {
                    Regime::Mode(a)
                } else {
                    Regime::Mode(b)
                }))
            }
        }
    }

    fn annotate(&self, regime: Regime, x: &[f64]) -> Result<Regime, SimError> {
        Ok(match regime {
            Regime::Sliding { a, b, .. } => {
                match sliding_lambda(self.sys, x, a, b, &self.opts.policy)? {
                    SlideTest::Sliding(lambda) => Regime::Sliding { a, b, lambda },
                    _ => regime,
                }
            }
            r => r,
        })
    }
}

/// Integrates a Filippov solution from x0 over [0, horizon].
pub fn simulate(
    sys: &SwitchedSystem,
    x0: &[f64],
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    opts.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite);
    }
    if x0.len() != sys.dim() {
        return Err(InclusionError::Dimension {
            expected: sys.dim(),
            got: x0.len(),
        }
        .into());
    }
    let sim = Sim { sys, opts };
    let mut traj = Trajectory {
        modes: sys.len(),
        samples: Vec::new(),
        events: Vec::new(),
        status: Status::Completed,
        warnings: Vec::new(),
    };
    if norm(x0) == 0.0 {
        traj.samples.push(Sample {
            t: 0.0,
            x: x0.to_vec(),
            regime: Regime::Mode(0),
        });
        traj.status = Status::Stall("equilibrium at the origin".into());
        return Ok(traj);
    }
    let mut regime = match sim.initial_regime(x0)? {
        Ok(r) => r,
        Err(why) => {
            traj.samples.push(Sample {
                t: 0.0,
                x: x0.to_vec(),
                regime: Regime::Mode(0),
            });
            traj.status = Status::Stall(why);
            return Ok(traj);
        }
    };
    let mut x = x0.to_vec();
    if let Regime::Sliding { a, .. } = regime {
        sim.project(a, &mut x)?;
        regime = sim.annotate(regime, &x)?;
    }
    let mut t = 0.0;
    traj.samples.push(Sample {
        t,
        x: x.clone(),
        regime,
    });
    let mut h = opts.max_step.min(opts.horizon) * 0.1;
    let mut switch_times: Vec<f64> = Vec::new();
    let mut crossings = 0usize;

    while t < opts.horizon {
        if norm(&x) > 1e9 {
            traj.status = Status::LeftDomain;
            return Ok(traj);
        }
        h = h.min(opts.max_step).min(opts.horizon - t);
        if h < 1e-14 * t.max(1.0) {
            traj.status = Status::Stall("step size underflow".into());
            return Ok(traj);
        }
        let (mut xn, err) = sim.step(regime, &x, h)?;
        if !err.is_finite() || err > 1.0 {
            h *= if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.5)
            } else {
                0.1
            };
            continue;
        }
        if let Regime::Sliding { a, .. } = regime {
            sim.project(a, &mut xn)?;
        }
        let g_old = sim.guards(regime, &x)?;
        let g_new = sim.guards(regime, &xn)?;
        let tol_h = opts.event_tol;
        let fired = g_new
            .iter()
            .zip(&g_old)
            .any(|(&gn, &go)| gn < -tol_h || (gn < 0.0 && go >= 0.0));
        if !fired {
            t += h;
            x = xn;
            regime = sim.annotate(regime, &x)?;
            traj.samples.push(Sample {
                t,
                x: x.clone(),
                regime,
            });
            h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
            continue;
        }
        // bisection on the step length for the first guard crossing
        let (mut lo, mut hi) = (0.0, h);
        let mut x_hi = xn.clone();
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (mut xm, _) = sim.step(regime, &x, mid)?;
            if let Regime::Sliding { a, .. } = regime {
                sim.project(a, &mut xm)?;
            }
            let gm = sim.guards(regime, &xm)?;
            if gm.iter().any(|&g| g < 0.0) {
                hi = mid;
                x_hi = xm;
                if gm.iter().all(|&g| g >= -tol_h) {
                    break;
                }
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * (t + h).max(1.0) {
                break;
            }
        }
        if hi <= 0.0 {
            traj.status = Status::Stall("event at zero step".into());
            return Ok(traj);
        }
        t += hi;
        x = x_hi;
        let next = match sim.next_regime(regime, &x)? {
            Ok(r) => r,
            Err(why) => {
                traj.samples.push(Sample {
                    t,
                    x: x.clone(),
                    regime,
                });
                traj.status = Status::Stall(why);
                return Ok(traj);
            }
        };
        let mut next = next;
        switch_times.push(t);
        switch_times.retain(|&s| s >= t - opts.max_step);
        if switch_times.len() > 50 {
            if let (Regime::Mode(i), Regime::Mode(j)) = (regime, next) {
                let (a, b) = (i.min(j), i.max(j));
                traj.warnings.push(format!(
                    "chattering at t={t:.6}; forcing sliding on {}|{}",
                    a + 1,
                    b + 1
                ));
                next = Regime::Sliding { a, b, lambda: 0.5 };
            }
            switch_times.clear();
        }
        if let Regime::Sliding { a, .. } = next {
            sim.project(a, &mut x)?;
            next = sim.annotate(next, &x)?;
        }
        traj.events.push(Event {
            t,
            x: x.clone(),
            from: regime,
            to: next,
        });
        if !regime.same_kind(&next) {
            regime = next;
        }
        regime = sim.annotate(regime, &x)?;
        traj.samples.push(Sample {
            t,
            x: x.clone(),
            regime,
        });
        if matches!(
            (traj.events.last().unwrap().from, next),
            (Regime::Mode(_), Regime::Mode(_))
        ) {
            crossings += 1;
            if opts.max_crossings.is_some_and(|m| crossings >= m) {
                return Ok(traj);
            }
        }
        h = h.max(opts.max_step * 1e-3);
    }
    Ok(traj)
}

/// Formats like C's `%.{digits}g`.
pub fn fmt_g(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let p = digits.max(1);
    let sci = format!("{:.*e}", p - 1, v);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mant), sign, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, v))
    }
}

/// CSV rows `t,x1..xn,regime,lambda[,V]`.
pub fn export_csv(
    traj: &Trajectory,
    v: Option<(&MaxMinSpec, &dyn Basis)>,
) -> Result<String, maxmin::MaxMinError> {
    let n = traj.samples.first().map_or(0, |s| s.x.len());
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    out.push_str(",regime,lambda");
    if v.is_some() {
        out.push_str(",V");
    }
    out.push('\n');
    for s in &traj.samples {
        out.push_str(&fmt_g(s.t, 12));
        for c in &s.x {
            out.push(',');
            out.push_str(&fmt_g(*c, 12));
        }
        out.push(',');
        out.push_str(&s.regime.label(traj.modes));
        out.push(',');
        if let Some(l) = s.regime.lambda() {
            out.push_str(&fmt_g(l, 12));
        }
        if let Some((spec, basis)) = v {
            out.push(',');
            out.push_str(&fmt_g(maxmin::eval(spec, basis, &s.x)?, 12));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdCheck {
    pub t: f64,
    pub fd: f64,
    pub lo: f64,
    pub hi: f64,
    pub ok: bool,
}

/// Compares difference quotients of V over accepted steps with the Lie set at
/// the step midpoint. Steps that change regime or active index are skipped.
pub fn fd_lie_check(
    traj: &Trajectory,
    sys: &SwitchedSystem,
    spec: &MaxMinSpec,
    basis: &dyn Basis,
    policy: &NumericPolicy,
) -> Result<Vec<FdCheck>, DerivError> {
    let opts = SimOptions::new(1.0);
    let sim = Sim { sys, opts: &opts };
    let active = |x: &[f64]| maxmin::active_indices(spec, basis, x, policy).map(|a| a.indices);
    let mut out = Vec::new();
    for w in traj.samples.windows(2) {
        let (s0, s1) = (&w[0], &w[1]);
        let h = s1.t - s0.t;
        if h <= 0.0 || !s0.regime.same_kind(&s1.regime) || norm(&s0.x) < 1e-6 {
            continue;
        }
        let a0 = active(&s0.x)?;
        if a0.len() != 1 && !matches!(s0.regime, Regime::Sliding { .. }) {
            continue;
        }
        if a0 != active(&s1.x)? {
            continue;
        }
        let mid = match sim.step(s0.regime, &s0.x, 0.5 * h) {
            Ok((mut xm, _)) => {
                if let Regime::Sliding { a, .. } = s0.regime {
                    let _ = sim.project(a, &mut xm);
                }
                xm
            }
            Err(_) => continue,
        };
        if active(&mid)? != a0 {
            continue;
        }
        let lie = lie_derivative(spec, basis, sys, &mid, policy)?;
        let LieStatus::Interval { lo, hi } = lie.status else {
            continue;
        };
        let fd = (maxmin::eval(spec, basis, &s1.x)? - maxmin::eval(spec, basis, &s0.x)?) / h;
        let tol = 1e-3 * (1.0 + fd.abs());
        out.push(FdCheck {
            t: s0.t + 0.5 * h,
            fd,
            lo,
            hi,
            ok: fd >= lo - tol && fd <= hi + tol,
        });
    }
    Ok(out)
}

/// Static SVG phase portrait (planar systems): trajectories plus level sets of V.
pub fn phase_portrait_svg(
    trajs: &[Trajectory],
    levels: &[f64],
    v: Option<(&MaxMinSpec, &dyn Basis)>,
) -> Result<String, maxmin::MaxMinError> {
    let pts = trajs
        .iter()
        .flat_map(|t| t.samples.iter())
        .filter(|s| s.x.len() >= 2);
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for s in pts {
        x0 = x0.min(s.x[0]);
        x1 = x1.max(s.x[0]);
        y0 = y0.min(s.x[1]);
        y1 = y1.max(s.x[1]);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = 0.05 * (x1 - x0).max(y1 - y0).max(1e-9);
    let (x0, x1, y0, y1) = (x0 - pad, x1 + pad, y0 - pad, y1 + pad);
    let (w, hgt) = (x1 - x0, y1 - y0);
    let stroke = 0.002 * w.max(hgt);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">\n<g transform=\"scale(1,-1)\">\n",
        fmt_g(x0, 6),
        fmt_g(-y1, 6),
        fmt_g(w, 6),
        fmt_g(hgt, 6)
    );
    if let Some((spec, basis)) = v {
        const G: usize = 400;
        let mut grid = vec![vec![0.0; G + 1]; G + 1];
        for (i, row) in grid.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let p = [x0 + w * j as f64 / G as f64, y0 + hgt * i as f64 / G as f64];
                *cell = maxmin::eval(spec, basis, &p)?;
            }
        }
        for &lvl in levels {
            s.push_str(&format!(
                "<path fill=\"none\" stroke=\"#888\" stroke-width=\"{}\" d=\"",
                fmt_g(stroke, 4)
            ));
            for seg in marching_squares(&grid, lvl) {
                let px = |c: (f64, f64)| (x0 + w * c.0 / G as f64, y0 + hgt * c.1 / G as f64);
                let (a, b) = (px(seg.0), px(seg.1));
                s.push_str(&format!(
                    "M{} {}L{} {}",
                    fmt_g(a.0, 6),
                    fmt_g(a.1, 6),
                    fmt_g(b.0, 6),
                    fmt_g(b.1, 6)
                ));
            }
            s.push_str("\"/>\n");
        }
    }
    for t in trajs {
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"#c00\" stroke-width=\"{}\" points=\"",
            fmt_g(stroke, 4)
        ));
        let pts: Vec<String> = t
            .samples
            .iter()
            .map(|p| format!("{},{}", fmt_g(p.x[0], 6), fmt_g(p.x[1], 6)))
            .collect();
        s.push_str(&pts.join(" "));
        s.push_str("\"/>\n");
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

/// Segments (in grid coordinates: column, row) of the level set grid == level.
fn marching_squares(grid: &[Vec<f64>], level: f64) -> Vec<((f64, f64), (f64, f64))> {
    let mut segs = Vec::new();
    let rows = grid.len();
    let cols = grid[0].len();
    let lerp = |a: f64, b: f64| {
        if (b - a).abs() < 1e-300 {
            0.5
        } else {
            (level - a) / (b - a)
        }
    };
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            let v = [
                grid[i][j],
                grid[i][j + 1],
                grid[i + 1][j + 1],
                grid[i + 1][j],
            ];
            let corners = [
                (j as f64, i as f64),
                (j as f64 + 1.0, i as f64),
                (j as f64 + 1.0, i as f64 + 1.0),
                (j as f64, i as f64 + 1.0),
            ];
            let mut cuts = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if (v[a] < level) != (v[b] < level) {
                    let s = lerp(v[a], v[b]);
                    let p = (
                        corners[a].0 + s * (corners[b].0 - corners[a].0),
                        corners[a].1 + s * (corners[b].1 - corners[a].1),
                    );
                    cuts.push(p);
                }
            }
            if cuts.len() == 2 {
                segs.push((cuts[0], cuts[1]));
            } else if cuts.len() == 4 {
                segs.push((cuts[0], cuts[1]));
                segs.push((cuts[2], cuts[3]));
            }
        }
    }
    segs
}
