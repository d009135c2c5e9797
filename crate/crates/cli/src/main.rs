use std::fmt::Write as _;
use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use mmcert::certify::report::render_certificate;
use mmcert::certify::{
    certify, cone_factors, q_cone_decompose, reduced_blocks, Candidate, CandidateSource,
    Certificate, CertifyError, CertifyOptions, ConditionII, LineOutcome, PairStatus, SearchOptions,
    Verdict,
};
use mmcert::filippovsim::{
    export_csv, phase_portrait_svg, simulate, sliding_lambda, SimError, SimOptions, SlideTest,
};
use mmcert::inclusion::{validate_partition, InclusionError};
use mmcert::maxmin::{
    active_indices, clarke_gradient, eval, phi, MaxMinError, MaxMinSpec, Permutation, Polarity,
};
use mmcert::numkernel::{norm, NumError, NumericPolicy};
use mmcert::problem::{
    example1, example2, example3, Problem, ProblemError, EXAMPLE1, EXAMPLE2, EXAMPLE3,
};
use mmcert::sampling::{ray_points, sphere_points};
use mmcert::setderiv::{
    clarke_derivative, decrease_check, lie_derivative, DerivError, DerivMode, LieStatus,
};
use mmcert::sysdsl::{fmt_num, BasisConfig, Config, ParseError, PolarityTag};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(
    name = "mmcert",
    version,
    about = "Max-min Lyapunov certificates for switched linear and nonlinear systems"
)]
struct Cli {
    /// Seed for every sampled check.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Absolute tie tolerance.
    #[arg(long, global = true)]
    abs_tol: Option<f64>,
    /// Relative tie tolerance.
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    /// Strictness required of negative margins.
    #[arg(long, global = true)]
    margin: Option<f64>,
    /// Also write every output file into this directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a config and sample-check that the regions partition the space.
    Validate {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Table of the active index for every ordering of the basis values.
    Phi { config: PathBuf },
    /// Active indices and Clarke gradient vertices at a point.
    Grad {
        config: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        at: Vec<f64>,
    },
    /// Set-valued Lie derivative and Clarke derivative at a point.
    Lie {
        config: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        at: Vec<f64>,
    },
    /// Sampled decrease check max dV < -rate |x|^2.
    Decrease {
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Use the Clarke derivative instead of the Lie derivative.
        #[arg(long)]
        clarke: bool,
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        /// Sample along this direction (radii 0.1..10) instead of the unit sphere.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        along: Option<Vec<f64>>,
    },
    /// Filippov simulation; CSV on stdout, SVG portrait for planar systems.
    Simulate {
        config: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        from: Vec<f64>,
        #[arg(long)]
        horizon: f64,
        /// Stop after this many mode-to-mode crossings.
        #[arg(long)]
        max_crossings: Option<usize>,
    },
    /// Check conditions (i) and (ii); searches for a basis if asked or if none is given.
    Certify {
        config: PathBuf,
        #[arg(long)]
        search: bool,
        /// Search budget in seconds.
        #[arg(long, default_value_t = 60.0)]
        budget: f64,
        #[arg(long, default_value_t = 16)]
        starts: usize,
    },
    /// Cone factors, switching lines and reduced inequality blocks.
    Decompose { config: PathBuf },
    /// Rerun one of the bundled examples.
    Reproduce { example: Example },
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    Example1,
    Example2,
    Example3,
}

#[derive(Debug)]
enum Fail {
    Usage(String),
    Internal(String),
}

impl From<ParseError> for Fail {
    fn from(e: ParseError) -> Self {
        Fail::Usage(e.to_string())
    }
}

impl From<ProblemError> for Fail {
    fn from(e: ProblemError) -> Self {
        Fail::Usage(e.to_string())
    }
}

impl From<MaxMinError> for Fail {
    fn from(e: MaxMinError) -> Self {
        Fail::Usage(e.to_string())
    }
}

impl From<InclusionError> for Fail {
    fn from(e: InclusionError) -> Self {
        match e {
            InclusionError::Coverage(_) | InclusionError::NonFinite => {
                Fail::Internal(e.to_string())
            }
            _ => Fail::Usage(e.to_string()),
        }
    }
}

impl From<SimError> for Fail {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Inclusion(i) => i.into(),
            _ => Fail::Usage(e.to_string()),
        }
    }
}

impl From<DerivError> for Fail {
    fn from(e: DerivError) -> Self {
        match e {
            DerivError::MaxMin(m) => m.into(),
            DerivError::Inclusion(i) => i.into(),
            DerivError::Inconsistent { .. } => Fail::Internal(e.to_string()),
            _ => Fail::Usage(e.to_string()),
        }
    }
}

impl From<NumError> for Fail {
    fn from(e: NumError) -> Self {
        Fail::Internal(e.to_string())
    }
}

impl From<CertifyError> for Fail {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::Num(n) => n.into(),
            CertifyError::Mismatch(_) => Fail::Internal(e.to_string()),
            _ => Fail::Usage(e.to_string()),
        }
    }
}

/// One emitted file; the first one also goes to stdout.
struct Artifact {
    name: String,
    body: String,
}

struct Outcome {
    artifacts: Vec<Artifact>,
    ok: bool,
}

impl Outcome {
    fn text(name: &str, body: String, ok: bool) -> Self {
        Outcome {
            artifacts: vec![Artifact {
                name: name.into(),
                body,
            }],
            ok,
        }
    }
}

struct Ctx {
    policy: NumericPolicy,
    seed: u64,
}

fn load(path: &PathBuf) -> Result<(String, Problem), Fail> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
    let pr = Problem::parse(&text).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
    Ok((text, pr))
}

fn need_point(x: &[f64], n: usize) -> Result<(), Fail> {
    if x.len() != n {
        return Err(Fail::Usage(format!(
            "point has {} coordinates, system dimension is {n}",
            x.len()
        )));
    }
    Ok(())
}

fn vec_str(v: &[f64]) -> String {
    format!(
        "({})",
        v.iter().map(|c| fmt_num(*c)).collect::<Vec<_>>().join(", ")
    )
}

fn idx_str(v: &[usize]) -> String {
    format!(
        "{{{}}}",
        v.iter()
            .map(|i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn lie_str(s: &LieStatus) -> String {
    match s {
        LieStatus::Empty => "empty".into(),
        LieStatus::Interval { lo, hi } if lo == hi => format!("{{{}}}", fmt_num(*lo)),
        LieStatus::Interval { lo, hi } => format!("[{}, {}]", fmt_num(*lo), fmt_num(*hi)),
    }
}

fn phi_table(spec: &MaxMinSpec) -> String {
    let mut s = String::new();
    for rho in Permutation::all(spec.k()) {
        let _ = writeln!(s, "phi{rho} = {}", phi(spec, &rho) + 1);
    }
    s
}

fn cmd_validate(path: &PathBuf, samples: usize, ctx: &Ctx) -> Result<Outcome, Fail> {
    let (_, pr) = load(path)?;
    let mut s = String::new();
    let mut ok = true;
    if let Some(sys) = &pr.system {
        let rep = validate_partition(sys, samples, ctx.seed, &ctx.policy)?;
        let _ = writeln!(s, "system: dim {} modes {}", sys.dim(), sys.len());
        let _ = writeln!(
            s,
            "partition: {} samples, {} uncovered, {} overlapping",
            rep.samples,
            rep.uncovered.len(),
            rep.overlapping.len()
        );
        if let Some(x) = rep.uncovered.first() {
            let _ = writeln!(s, "uncovered at {}", vec_str(x));
        }
        if let Some((x, m)) = rep.overlapping.first() {
            let _ = writeln!(s, "overlap of modes {} at {}", idx_str(m), vec_str(x));
        }
        ok = rep.ok();
    }
    if let Some(spec) = &pr.spec {
        let fams: Vec<String> = spec.families().iter().map(|f| idx_str(f)).collect();
        let pol = match spec.polarity() {
            Polarity::MaxOfMin => "max of min",
            Polarity::MinOfMax => "min of max",
        };
        let _ = writeln!(
            s,
            "structure: K = {}, {pol} over {}",
            spec.k(),
            fams.join(" ")
        );
    }
    if let Some(b) = &pr.basis {
        let _ = writeln!(
            s,
            "basis: {} functions{}",
            b.len(),
            if b.quadratic().is_some() {
                " (quadratic)"
            } else {
                ""
            }
        );
    }
    let _ = writeln!(s, "valid = {ok}");
    Ok(Outcome::text("validate.txt", s, ok))
}

fn cmd_phi(path: &PathBuf) -> Result<Outcome, Fail> {
    let (_, pr) = load(path)?;
    Ok(Outcome::text("phi.txt", phi_table(pr.spec()?), true))
}

fn cmd_grad(path: &PathBuf, at: &[f64], ctx: &Ctx) -> Result<Outcome, Fail> {
    let (_, pr) = load(path)?;
    let (spec, basis) = (pr.spec()?, pr.basis()?);
    need_point(at, basis.dim())?;
    let a = active_indices(spec, basis, at, &ctx.policy)?;
    let h = clarke_gradient(spec, basis, at, &ctx.policy)?;
    let mut s = String::new();
    let _ = writeln!(s, "x = {}", vec_str(at));
    let _ = writeln!(s, "V = {}", fmt_num(eval(spec, basis, at)?));
    let _ = writeln!(s, "active = {} ({:?})", idx_str(&a.indices), a.method);
    for (l, g) in h.indices.iter().zip(&h.vertices) {
        let _ = writeln!(s, "grad V{} = {}", l + 1, vec_str(g));
    }
    if let Some(w) = &a.warning {
        let _ = writeln!(s, "warning = {w}");
    }
    Ok(Outcome::text("grad.txt", s, true))
}

fn cmd_lie(path: &PathBuf, at: &[f64], ctx: &Ctx) -> Result<Outcome, Fail> {
    let (_, pr) = load(path)?;
    let (sys, spec, basis) = (pr.system()?, pr.spec()?, pr.basis()?);
    need_point(at, sys.dim())?;
    let lie = lie_derivative(spec, basis, sys, at, &ctx.policy)?;
    let c = clarke_derivative(spec, basis, sys, at, &ctx.policy)?;
    let mut s = String::new();
    let _ = writeln!(s, "x = {}", vec_str(at));
    let _ = writeln!(s, "modes = {}", idx_str(&lie.modes));
    let _ = writeln!(s, "active = {}", idx_str(&lie.active));
    let _ = writeln!(s, "lambda = {}", lie.lambda.label());
    for v in lie.lambda.vertices() {
        let _ = writeln!(s, "lambda vertex = {}", vec_str(&v));
    }
    let _ = writeln!(s, "lie = {}", lie_str(&lie.status));
    let _ = writeln!(s, "clarke = [{}, {}]", fmt_num(c.lo), fmt_num(c.hi));
    Ok(Outcome::text("lie.txt", s, true))
}

fn cmd_decrease(
    path: &PathBuf,
    samples: usize,
    clarke: bool,
    rate: f64,
    along: Option<&[f64]>,
    ctx: &Ctx,
) -> Result<Outcome, Fail> {
    let (_, pr) = load(path)?;
    let (sys, spec, basis) = (pr.system()?, pr.spec()?, pr.basis()?);
    let pts = match along {
        Some(d) => {
            need_point(d, sys.dim())?;
            if norm(d) == 0.0 {
                return Err(Fail::Usage("--along needs a nonzero direction".into()));
            }
            ray_points(d, samples, 0.1, 10.0)
        }
        None => sphere_points(sys.dim(), samples, 1.0, ctx.seed),
    };
    let mode = if clarke {
        DerivMode::Clarke
    } else {
        DerivMode::Lie
    };
    let rep = decrease_check(spec, basis, sys, &pts, rate, mode, &ctx.policy)?;
    let mut s = String::new();
    let _ = writeln!(s, "derivative = {}", if clarke { "clarke" } else { "lie" });
    let _ = writeln!(s, "rate = {}", fmt_num(rate));
    let _ = writeln!(s, "samples = {}", rep.points.len());
    let empty = rep.points.iter().filter(|p| p.value.is_none()).count();
    if !clarke {
        let _ = writeln!(s, "empty lie sets = {empty}");
    }
    let worst = rep
        .points
        .iter()
        .filter_map(|p| p.value.map(|v| (v - p.bound, p)))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((gap, p)) = worst {
        let _ = writeln!(
            s,
            "worst = {} at {} (bound {}, excess {})",
            fmt_num(p.value.unwrap_or(f64::NAN)),
            vec_str(&p.x),
            fmt_num(p.bound),
            fmt_num(gap)
        );
    }
    let _ = writeln!(s, "violations = {}", rep.violations.len());
    for &k in rep.violations.iter().take(10) {
        let p = &rep.points[k];
        let _ = writeln!(
            s,
            "violation at {}: {} >= {}",
            vec_str(&p.x),
            fmt_num(p.value.unwrap_or(f64::NAN)),
            fmt_num(p.bound)
        );
    }
    let _ = writeln!(s, "status = {}", rep.status());
    Ok(Outcome::text("decrease.txt", s, rep.passed()))
}

fn cmd_simulate(
    path: &PathBuf,
    from: &[f64],
    horizon: f64,
    max_crossings: Option<usize>,
    ctx: &Ctx,
) -> Result<Outcome, Fail> {
    let (_, pr) = load(path)?;
    let sys = pr.system()?;
    need_point(from, sys.dim())?;
    let mut opts = SimOptions::new(horizon);
    opts.policy = ctx.policy;
    opts.max_crossings = max_crossings;
    let traj = simulate(sys, from, &opts)?;
    let v = match (&pr.spec, &pr.basis) {
        (Some(s), Some(b)) => Some((s, b.as_ref())),
        _ => None,
    };
    for w in &traj.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("status: {}", traj.status);
    let mut artifacts = vec![Artifact {
        name: "trajectory.csv".into(),
        body: export_csv(&traj, v)?,
    }];
    if sys.dim() == 2 {
        let levels: Vec<f64> = match v {
            Some((s, b)) => {
                let v0 = eval(s, b, from)?;
                (1..=4).map(|k| v0 * k as f64 / 4.0).collect()
            }
            None => Vec::new(),
        };
        artifacts.push(Artifact {
            name: "portrait.svg".into(),
            body: phase_portrait_svg(std::slice::from_ref(&traj), &levels, v)?,
        });
    }
    let ok = matches!(traj.status, mmcert::filippovsim::Status::Completed);
    Ok(Outcome { artifacts, ok })
}

/// Structure to certify: the configured one, else a pure max over one
/// quadratic per mode.
fn certify_spec(pr: &Problem, modes: usize) -> MaxMinSpec {
    match &pr.spec {
        Some(s) => s.clone(),
        None => MaxMinSpec::pure_max(modes),
    }
}

fn base_config(pr: &Problem, spec: &MaxMinSpec) -> Config {
    let mut cfg = pr.config.clone();
    let polarity = match spec.polarity() {
        Polarity::MaxOfMin => PolarityTag::MaxMin,
        Polarity::MinOfMax => PolarityTag::MinMax,
    };
    let functions = cfg.basis.as_ref().and_then(|b| b.functions.clone());
    cfg.basis = Some(BasisConfig {
        functions,
        families: spec.families().to_vec(),
        polarity,
    });
    cfg
}

/// Searches when asked to or when the config has no basis; otherwise checks
/// the given basis (and multipliers, if any).
fn run_certify(
    pr: &Problem,
    search: bool,
    so: SearchOptions,
    ctx: &Ctx,
) -> Result<(Certificate, MaxMinSpec), Fail> {
    let sys = pr.system()?;
    let spec = certify_spec(pr, sys.len());
    let quad = pr
        .basis
        .as_ref()
        .and_then(|b| b.quadratic().map(|p| p.to_vec()));
    let source = match quad {
        _ if search => CandidateSource::Search(so),
        None if pr.basis.is_none() => CandidateSource::Search(so),
        Some(p) => match Candidate::from_config(&pr.config) {
            Some(c) if !c.multipliers.is_empty() => CandidateSource::Given(c),
            _ => CandidateSource::FixedBasis(p),
        },
        None => {
            return Err(Fail::Usage(
                "certify needs quadratic basis functions (P1 = ...) or --search".into(),
            ))
        }
    };
    let opts = CertifyOptions {
        policy: ctx.policy,
        ..CertifyOptions::default()
    };
    let cert = certify(sys, &spec, source, &opts)?;
    Ok((cert, spec))
}

fn cmd_certify(
    path: &PathBuf,
    search: bool,
    budget: f64,
    starts: usize,
    ctx: &Ctx,
) -> Result<Outcome, Fail> {
    let (_, pr) = load(path)?;
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Fail::Usage("--budget must be positive".into()));
    }
    let so = SearchOptions {
        budget: Duration::from_secs_f64(budget),
        seed: ctx.seed,
        starts,
        ..SearchOptions::default()
    };
    let (cert, spec) = run_certify(&pr, search, so, ctx)?;
    if let Some(out) = &cert.search {
        match out {
            mmcert::certify::SearchOutcome::Found { elapsed, .. } => {
                eprintln!("search: found in {:.2} s", elapsed.as_secs_f64())
            }
            mmcert::certify::SearchOutcome::NotFound { elapsed, .. } => eprintln!(
                "search: budget exhausted after {:.2} s",
                elapsed.as_secs_f64()
            ),
        }
    }
    let text = render_certificate(&base_config(&pr, &spec), &cert);
    Ok(Outcome::text(
        "certificate.txt",
        text,
        cert.verdict == Verdict::GasCertified,
    ))
}

fn cmd_decompose(path: &PathBuf) -> Result<Outcome, Fail> {
    let (_, pr) = load(path)?;
    let mut s = String::new();
    if let Some(sys) = &pr.system {
        let lin = mmcert::certify::linear_system(sys).ok();
        let qs: Option<Vec<_>> = lin.as_ref().and_then(|l| l.q.iter().cloned().collect());
        match qs {
            Some(qs) if sys.dim() == 2 => {
                for (i, q) in qs.iter().enumerate() {
                    let (t1, t2) = q_cone_decompose(q)?;
                    let _ = writeln!(
                        s,
                        "mode {}: Q = sym(theta1 theta2'), theta1 = {}, theta2 = {}",
                        i + 1,
                        vec_str(&t1),
                        vec_str(&t2)
                    );
                }
                let cf = cone_factors(&qs)?;
                let _ = writeln!(
                    s,
                    "max reconstruction error = {}",
                    fmt_num(cf.max_reconstruction_error)
                );
                for (j, l) in cf.lines.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "line {}: v = {} between modes {} and {}",
                        j + 1,
                        vec_str(&l.v),
                        l.modes.0 + 1,
                        l.modes.1 + 1
                    );
                }
            }
            _ => {
                let _ = writeln!(s, "cone factors: planar cone systems only");
            }
        }
    }
    if let Some(spec) = &pr.spec {
        let blocks = reduced_blocks(spec)?;
        let _ = writeln!(s, "reduced blocks = {}", blocks.len());
        for b in &blocks {
            let orders: Vec<String> = b.orderings.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(s, "{b} covers {}", orders.join(" "));
        }
    }
    Ok(Outcome::text("decompose.txt", s, true))
}

fn margins_text(s: &mut String, cert: &Certificate) {
    if let Some(ci) = &cert.condition_i {
        for e in &ci.entries {
            match &e.status {
                PairStatus::Required { margin, .. } => {
                    let _ = writeln!(
                        s,
                        "margin mode {} {} = {}",
                        e.mode + 1,
                        e.block,
                        fmt_num(*margin)
                    );
                }
                PairStatus::Vacuous(_) => {
                    let _ = writeln!(s, "margin mode {} {} = vacuous", e.mode + 1, e.block);
                }
            }
        }
    }
}

fn repro_example1(ctx: &Ctx) -> Result<Outcome, Fail> {
    let pr = example1();
    let sys = pr.system()?;
    let mut s = String::new();
    let mut ok = true;
    let z0 = [-1.0, 1.0];
    let mut opts = SimOptions::new(20.0);
    opts.max_crossings = Some(3);
    let traj = simulate(sys, &z0, &opts)?;
    let crossings = traj.crossings();
    for (k, e) in crossings.iter().enumerate() {
        let _ = writeln!(
            s,
            "z{} = {} at t = {} ({} -> {})",
            k + 1,
            vec_str(&e.x),
            fmt_num(e.t),
            e.from.label(3),
            e.to.label(3)
        );
    }
    let z3 = crossings.get(2).map(|e| norm(&e.x)).unwrap_or(f64::NAN);
    let beta = z3 / norm(&z0);
    let _ = writeln!(s, "|z3| = {}", fmt_num(z3));
    let _ = writeln!(s, "beta = {}", fmt_num(beta));
    ok &= (z3 - 1.2671).abs() < 1e-3 && (beta - 0.8961).abs() < 1e-3;
    s.push_str(&phi_table(pr.spec()?));
    let (cert, _) = run_certify(&pr, false, SearchOptions::default(), ctx)?;
    margins_text(&mut s, &cert);
    if let Some(ConditionII::Planar(r)) = &cert.condition_ii {
        for l in &r.lines {
            let outcome = match &l.outcome {
                LineOutcome::Smooth => "smooth".to_string(),
                LineOutcome::EmptyLambda => "empty".to_string(),
                LineOutcome::Checked { value, .. } => format!("value {}", fmt_num(*value)),
            };
            let _ = writeln!(
                s,
                "Lambda on line {}|{} at {} = {outcome}",
                l.line.modes.0 + 1,
                l.line.modes.1 + 1,
                vec_str(&l.line.v)
            );
        }
    }
    let _ = writeln!(s, "verdict = {}", cert.verdict);
    ok &= cert.verdict == Verdict::GasCertified;
    Ok(Outcome::text("example1.txt", s, ok))
}

fn repro_example2(ctx: &Ctx) -> Result<Outcome, Fail> {
    let mut s = String::new();
    let mut ok = true;
    let pr = example2(10.0);
    let (sys, spec, basis) = (pr.system()?, pr.spec()?, pr.basis()?);
    let mut lam_err: f64 = 0.0;
    for r in [0.05, 0.5, 2.0, 8.0] {
        for x in [[r, r], [-r, -r], [r, -r], [-r, r]] {
            match sliding_lambda(sys, &x, 0, 1, &ctx.policy)? {
                SlideTest::Sliding(l) => lam_err = lam_err.max((l - 0.5).abs()),
                _ => lam_err = f64::INFINITY,
            }
        }
    }
    let _ = writeln!(
        s,
        "sliding lambda on x2 = x1 and x2 = -x1: max |lambda - 1/2| = {}",
        fmt_num(lam_err)
    );
    ok &= lam_err < 1e-9;

    let line1: Vec<Vec<f64>> = (1..=100)
        .map(|k| {
            let r = 0.1 * k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
            vec![r, r]
        })
        .collect();
    let rep = decrease_check(spec, basis, sys, &line1, 12.5, DerivMode::Lie, &ctx.policy)?;
    let worst = rep
        .points
        .iter()
        .filter_map(|p| p.value.map(|v| v / (p.x[0] * p.x[0] + p.x[1] * p.x[1])))
        .fold(f64::NEG_INFINITY, f64::max);
    let _ = writeln!(
        s,
        "b = 10, x2 = x1: max dV/|x|^2 = {} over 100 points; violations = {}",
        fmt_num(worst),
        rep.violations.len()
    );
    ok &= rep.passed();

    let near: Vec<Vec<f64>> = (1..=20)
        .map(|k| {
            let r = 0.1 * k as f64 / 20.0 / 2f64.sqrt();
            vec![r, -r]
        })
        .collect();
    let far: Vec<Vec<f64>> = (0..20)
        .map(|k| {
            let r = (10.0 + 10.0 * k as f64) / 2f64.sqrt();
            vec![r, -r]
        })
        .collect();
    let lie_max = |x: &[f64]| lie_derivative(spec, basis, sys, x, &ctx.policy).map(|l| l.max());
    let mut near_max = f64::NEG_INFINITY;
    for x in &near {
        near_max = near_max.max(lie_max(x)?.unwrap_or(f64::NEG_INFINITY));
    }
    let mut far_pos = None;
    for x in &far {
        if let Some(v) = lie_max(x)? {
            if v > 0.0 && far_pos.is_none() {
                far_pos = Some((x.clone(), v));
            }
        }
    }
    let _ = writeln!(
        s,
        "b = 10, x2 = -x1, |x| <= 0.1: max dV = {}",
        fmt_num(near_max)
    );
    match &far_pos {
        Some((x, v)) => {
            let _ = writeln!(
                s,
                "b = 10, x2 = -x1, |x| >= 10: dV = {} > 0 at {} (diverging sliding)",
                fmt_num(*v),
                vec_str(x)
            );
        }
        None => {
            let _ = writeln!(s, "b = 10, x2 = -x1, |x| >= 10: no positive sample");
        }
    }
    ok &= near_max < 0.0 && far_pos.is_some();
    let _ = writeln!(
        s,
        "conclusion = {}",
        if ok {
            "local decrease only"
        } else {
            "unexpected"
        }
    );
    Ok(Outcome::text("example2.txt", s, ok))
}

fn repro_example3(ctx: &Ctx) -> Result<Outcome, Fail> {
    let pr = example3();
    let mut s = String::new();
    let (cert, _) = run_certify(&pr, false, SearchOptions::default(), ctx)?;
    margins_text(&mut s, &cert);
    if let Some(ConditionII::TwoMode(r)) = &cert.condition_ii {
        let _ = writeln!(
            s,
            "sliding exclusion: N = {}, min product = {}",
            r.exclusion.samples,
            fmt_num(r.exclusion.min_product)
        );
        for ((a, b), sv) in &r.rank_margins {
            let _ = writeln!(
                s,
                "P{} - P{}: smallest singular value {}",
                a + 1,
                b + 1,
                fmt_num(*sv)
            );
        }
    }
    let _ = writeln!(s, "verdict = {}", cert.verdict);
    Ok(Outcome::text(
        "example3.txt",
        s,
        cert.verdict == Verdict::GasCertified,
    ))
}

fn manifest_hash(args: &[String], inputs: &[&str]) -> String {
    let mut h = Sha256::new();
    for a in args {
        h.update(a.as_bytes());
        h.update([0u8]);
    }
    for i in inputs {
        h.update(i.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn with_header(name: &str, body: &str, header: &str) -> String {
    if name.ends_with(".svg") {
        format!("<!-- {header} -->\n{body}")
    } else {
        format!("# {header}\n{body}")
    }
}

fn dispatch(cli: &Cli, ctx: &Ctx) -> Result<Outcome, Fail> {
    match &cli.cmd {
        Cmd::Validate { config, samples } => cmd_validate(config, *samples, ctx),
        Cmd::Phi { config } => cmd_phi(config),
        Cmd::Grad { config, at } => cmd_grad(config, at, ctx),
        Cmd::Lie { config, at } => cmd_lie(config, at, ctx),
        Cmd::Decrease {
            config,
            samples,
            clarke,
            rate,
            along,
        } => cmd_decrease(config, *samples, *clarke, *rate, along.as_deref(), ctx),
        Cmd::Simulate {
            config,
            from,
            horizon,
            max_crossings,
        } => cmd_simulate(config, from, *horizon, *max_crossings, ctx),
        Cmd::Certify {
            config,
            search,
            budget,
            starts,
        } => cmd_certify(config, *search, *budget, *starts, ctx),
        Cmd::Decompose { config } => cmd_decompose(config),
        Cmd::Reproduce { example } => match example {
            Example::Example1 => repro_example1(ctx),
            Example::Example2 => repro_example2(ctx),
            Example::Example3 => repro_example3(ctx),
        },
    }
}

fn input_text(cmd: &Cmd) -> String {
    let path = match cmd {
        Cmd::Validate { config, .. }
        | Cmd::Phi { config }
        | Cmd::Grad { config, .. }
        | Cmd::Lie { config, .. }
        | Cmd::Decrease { config, .. }
        | Cmd::Simulate { config, .. }
        | Cmd::Certify { config, .. }
        | Cmd::Decompose { config } => config,
        Cmd::Reproduce { example } => {
            return match example {
                Example::Example1 => EXAMPLE1,
                Example::Example2 => EXAMPLE2,
                Example::Example3 => EXAMPLE3,
            }
            .to_string()
        }
    };
    std::fs::read_to_string(path).unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut policy = NumericPolicy {
        seed: cli.seed,
        ..NumericPolicy::default()
    };
    if let Some(v) = cli.abs_tol {
        policy.abs = v;
    }
    if let Some(v) = cli.rel_tol {
        policy.rel = v;
    }
    if let Some(v) = cli.margin {
        policy.margin = v;
    }
    let ctx = Ctx {
        policy,
        seed: cli.seed,
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let input = input_text(&cli.cmd);

    panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    let result = match panic::catch_unwind(panic::AssertUnwindSafe(|| dispatch(&cli, &ctx))) {
        Ok(r) => r,
        Err(_) => return ExitCode::from(3),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(Fail::Usage(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
        Err(Fail::Internal(m)) => {
            eprintln!("internal error: {m}");
            return ExitCode::from(3);
        }
    };
    let header = format!(
        "mmcert {} manifest={} seed={}",
        env!("CARGO_PKG_VERSION"),
        manifest_hash(&args, &[&input]),
        cli.seed
    );
    if let Some(first) = outcome.artifacts.first() {
        print!("{}", with_header(&first.name, &first.body, &header));
    }
    if let Some(dir) = &cli.out_dir {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("error: {}: {e}", dir.display());
            return ExitCode::from(2);
        }
        for a in &outcome.artifacts {
            let p = dir.join(&a.name);
            if let Err(e) = std::fs::write(&p, with_header(&a.name, &a.body, &header)) {
                eprintln!("error: {}: {e}", p.display());
                return ExitCode::from(2);
            }
        }
    }
    if outcome.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
