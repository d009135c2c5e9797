//! Certification of max-min quadratic Lyapunov functions for linear systems on
//! conic partitions: the S-procedure matrix inequalities on each ordering
//! block, the planar and two-mode checks at switching surfaces, and the verdict.

pub mod blocks;
pub mod inner;
pub mod planar;
pub mod report;
pub mod search;
pub mod twomode;
pub mod vacuity;

use std::fmt;

use thiserror::Error;

use crate::inclusion::{LinearConeSystem, SwitchedSystem};
use crate::maxmin::{MaxMinError, MaxMinSpec};
use crate::numkernel::{min_eigenvalue, negdef_margin, NumError, NumericPolicy, SymMatrix};
use crate::sysdsl::{BasisFunctions, Config, MultiplierEntry};

pub use blocks::{reduced_blocks, Block};
pub use planar::{
    cone_factors, planar_condition_ii, q_cone_decompose, ConeFactors, LineOutcome, PlanarReport,
};
pub use search::{search_condition_i, SearchOptions, SearchOutcome};
pub use twomode::{check_condition_ii_2mode, sliding_exclusion, ExclusionReport, TwoModeReport};
pub use vacuity::{cone_vacuity, Vacuity};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("certification needs linear modes on cone regions")]
    NotLinear,
    #[error("K = {k} base functions: {k}! orderings is too many (at most {max})", max = blocks::MAX_K)]
    Complexity { k: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("inconsistent partition: {0}")]
    Partition(String),
    #[error("P{} is not positive definite", .0 + 1)]
    NotPositiveDefinite(usize),
    #[error("degenerate basis: P{} and P{} coincide", .0 + 1, .1 + 1)]
    DegenerateBasis(usize, usize),
    #[error("candidate does not match the problem: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    MaxMin(#[from] MaxMinError),
}

/// S-procedure weights for one (mode, block) inequality: `tau[k]` multiplies
/// P_b - P_a for the block's k-th pair (a, b), `beta` multiplies Q_mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplier {
    pub mode: usize,
    pub active: usize,
    pub pairs: Vec<(usize, usize)>,
    pub tau: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub p: Vec<SymMatrix>,
    pub multipliers: Vec<Multiplier>,
}

impl Candidate {
    pub fn new(p: Vec<SymMatrix>) -> Self {
        Candidate {
            p,
            multipliers: Vec::new(),
        }
    }

    pub fn lookup(&self, mode: usize, block: &Block) -> Option<&Multiplier> {
        self.multipliers
            .iter()
            .find(|m| m.mode == mode && m.active == block.active && m.pairs == block.pairs)
    }

    /// Quadratic basis and multipliers of a configuration; None without a matrix basis.
    pub fn from_config(cfg: &Config) -> Option<Candidate> {
        let Some(BasisFunctions::Quadratic(ps)) =
            cfg.basis.as_ref().and_then(|b| b.functions.as_ref())
        else {
            return None;
        };
        let multipliers = cfg.multipliers.iter().map(Multiplier::from_entry).collect();
        Some(Candidate {
            p: ps.clone(),
            multipliers,
        })
    }

    pub fn entries(&self) -> Vec<MultiplierEntry> {
        self.multipliers
            .iter()
            .map(|m| MultiplierEntry {
                mode: m.mode,
                active: m.active,
                pairs: m.pairs.clone(),
                tau: m.tau.clone(),
                beta: m.beta,
            })
            .collect()
    }
}

impl Multiplier {
    /// Sorts the pairs (and their weights) into block order.
    pub fn from_entry(e: &MultiplierEntry) -> Multiplier {
        let mut idx: Vec<usize> = (0..e.pairs.len()).collect();
        idx.sort_by_key(|&i| e.pairs[i]);
        Multiplier {
            mode: e.mode,
            active: e.active,
            pairs: idx.iter().map(|&i| e.pairs[i]).collect(),
            tau: idx.iter().map(|&i| e.tau[i]).collect(),
            beta: e.beta,
        }
    }
}

/// A_i'P_l + P_l A_i and the constraint forms (P_b - P_a per pair, then Q_i).
pub fn inequality_terms(
    sys: &LinearConeSystem,
    p: &[SymMatrix],
    mode: usize,
    block: &Block,
) -> (SymMatrix, Vec<SymMatrix>) {
    let m0 = p[block.active].lyap_form(&sys.a[mode]);
    let mut ds: Vec<SymMatrix> = block.pairs.iter().map(|&(a, b)| p[b].sub(&p[a])).collect();
    if let Some(q) = &sys.q[mode] {
        ds.push(q.clone());
    }
    (m0, ds)
}

/// Forms whose common positivity cone is D_mode intersected with the block.
pub fn region_forms(
    sys: &LinearConeSystem,
    p: &[SymMatrix],
    mode: usize,
    block: &Block,
) -> Vec<SymMatrix> {
    let mut forms: Vec<SymMatrix> = sys.q[mode].iter().cloned().collect();
    forms.extend(block.pairs.iter().map(|&(a, b)| p[b].sub(&p[a])));
    if forms.is_empty() {
        forms.push(SymMatrix::identity(p[0].dim()));
    }
    forms
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairStatus {
    Vacuous(Vacuity),
    Required {
        margin: f64,
        tau: Vec<f64>,
        beta: f64,
        given: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginEntry {
    pub mode: usize,
    pub block: Block,
    pub status: PairStatus,
}

impl MarginEntry {
    pub fn margin(&self) -> Option<f64> {
        match self.status {
            PairStatus::Required { margin, .. } => Some(margin),
            PairStatus::Vacuous(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionI {
    pub entries: Vec<MarginEntry>,
    pub threshold: f64,
}

impl ConditionI {
    pub fn required(&self) -> impl Iterator<Item = &MarginEntry> {
        self.entries.iter().filter(|e| e.margin().is_some())
    }

    pub fn worst(&self) -> f64 {
        self.required()
            .filter_map(|e| e.margin())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn holds(&self) -> bool {
        self.required()
            .all(|e| e.margin().is_some_and(|m| m < -self.threshold))
    }
}

pub fn linear_system(sys: &SwitchedSystem) -> Result<LinearConeSystem, CertifyError> {
    sys.as_linear().ok_or(CertifyError::NotLinear)
}

fn validate_basis(
    sys: &LinearConeSystem,
    spec: &MaxMinSpec,
    p: &[SymMatrix],
    policy: &NumericPolicy,
) -> Result<(), CertifyError> {
    if p.len() != spec.k() {
        return Err(CertifyError::Mismatch(format!(
            "{} matrices for K = {}",
            p.len(),
            spec.k()
        )));
    }
    let n = sys.dim();
    for (k, pk) in p.iter().enumerate() {
        if pk.dim() != n {
            return Err(CertifyError::Mismatch(format!(
                "P{} is {}x{}, state has dimension {n}",
                k + 1,
                pk.dim(),
                pk.dim()
            )));
        }
        if min_eigenvalue(pk) <= 0.0 {
            return Err(CertifyError::NotPositiveDefinite(k));
        }
    }
    for a in 0..p.len() {
        for b in a + 1..p.len() {
            if p[a].sub(&p[b]).norm() <= policy.tie(p[a].norm() + p[b].norm()) {
                return Err(CertifyError::DegenerateBasis(a, b));
            }
        }
    }
    Ok(())
}

/// Margins lambda_max of every non-vacuous (mode, block) inequality using the
/// candidate's multipliers (zero where none are given).
pub fn check_condition_i(
    sys: &LinearConeSystem,
    spec: &MaxMinSpec,
    cand: &Candidate,
    policy: &NumericPolicy,
) -> Result<ConditionI, CertifyError> {
    validate_basis(sys, spec, &cand.p, policy)?;
    if let Some(m) = cand
        .multipliers
        .iter()
        .find(|m| m.tau.iter().any(|t| *t < 0.0) || m.beta < 0.0)
    {
        return Err(CertifyError::Mismatch(format!(
            "negative multiplier for mode {}",
            m.mode + 1
        )));
    }
    let blocks = reduced_blocks(spec)?;
    let mut entries = Vec::new();
    for mode in 0..sys.len() {
        for block in &blocks {
            let vac = cone_vacuity(&region_forms(sys, &cand.p, mode, block), policy);
            if vac.is_empty() {
                entries.push(MarginEntry {
                    mode,
                    block: block.clone(),
                    status: PairStatus::Vacuous(vac),
                });
                continue;
            }
            let (m0, ds) = inequality_terms(sys, &cand.p, mode, block);
            let (tau, beta, given) = match cand.lookup(mode, block) {
                Some(m) => (m.tau.clone(), m.beta, true),
                None => (vec![0.0; block.pairs.len()], 0.0, false),
            };
            let mut m = m0;
            for (d, t) in ds.iter().zip(&tau) {
                m = m.add(&d.scale(*t));
            }
            if sys.q[mode].is_some() {
                m = m.add(&ds[ds.len() - 1].scale(beta));
            }
            let margin = negdef_margin(&m);
            entries.push(MarginEntry {
                mode,
                block: block.clone(),
                status: PairStatus::Required {
                    margin,
                    tau,
                    beta,
                    given,
                },
            });
        }
    }
    Ok(ConditionI {
        entries,
        threshold: policy.margin,
    })
}

/// Best multipliers for a fixed basis.
pub fn optimize_multipliers(
    sys: &LinearConeSystem,
    spec: &MaxMinSpec,
    p: &[SymMatrix],
    policy: &NumericPolicy,
) -> Result<Candidate, CertifyError> {
    validate_basis(sys, spec, p, policy)?;
    let blocks = reduced_blocks(spec)?;
    let mut multipliers = Vec::new();
    for mode in 0..sys.len() {
        for block in &blocks {
            if cone_vacuity(&region_forms(sys, p, mode, block), policy).is_empty() {
                continue;
            }
            let (m0, ds) = inequality_terms(sys, p, mode, block);
            let (t, _) = inner::minimize_multipliers(&m0, &ds, None);
            let r = block.pairs.len();
            let beta = if sys.q[mode].is_some() { t[r] } else { 0.0 };
            multipliers.push(Multiplier {
                mode,
                active: block.active,
                pairs: block.pairs.clone(),
                tau: t[..r].to_vec(),
                beta,
            });
        }
    }
    Ok(Candidate {
        p: p.to_vec(),
        multipliers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionII {
    Planar(PlanarReport),
    TwoMode(TwoModeReport),
    /// Nothing to check (e.g. a single region).
    Trivial(String),
    Unchecked(String),
}

impl ConditionII {
    pub fn pass(&self) -> Option<bool> {
        match self {
            ConditionII::Planar(r) => Some(r.pass()),
            ConditionII::TwoMode(r) => Some(r.pass()),
            ConditionII::Trivial(_) => Some(true),
            ConditionII::Unchecked(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    GasCertified,
    ConditionIOnly,
    NotCertified,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::GasCertified => "gas-certified",
            Verdict::ConditionIOnly => "condition-i-only",
            Verdict::NotCertified => "not-certified",
        })
    }
}

#[derive(Debug, Clone)]
pub enum CandidateSource {
    /// Basis and multipliers as given.
    Given(Candidate),
    /// Basis given, multipliers optimized.
    FixedBasis(Vec<SymMatrix>),
    Search(SearchOptions),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub policy: NumericPolicy,
    pub exclusion_samples: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            policy: NumericPolicy::default(),
            exclusion_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub candidate: Option<Candidate>,
    pub condition_i: Option<ConditionI>,
    pub condition_ii: Option<ConditionII>,
    pub search: Option<SearchOutcome>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
    pub exclusion_samples: usize,
    pub policy: NumericPolicy,
}

/// Condition (ii) for a basis that satisfies condition (i).
pub fn condition_ii(
    sys: &LinearConeSystem,
    spec: &MaxMinSpec,
    p: &[SymMatrix],
    opts: &CertifyOptions,
) -> Result<ConditionII, CertifyError> {
    if sys.len() == 1 {
        return Ok(ConditionII::Trivial(
            "single region: no switching surface".into(),
        ));
    }
    if sys.q.iter().any(|q| q.is_none()) {
        return Ok(ConditionII::Unchecked(
            "a mode without a cone region shares the space with others".into(),
        ));
    }
    if sys.dim() == 2 {
        return Ok(ConditionII::Planar(planar_condition_ii(
            sys,
            spec,
            p,
            &opts.policy,
        )?));
    }
    if sys.len() == 2 {
        return Ok(ConditionII::TwoMode(check_condition_ii_2mode(
            sys,
            p,
            &opts.policy,
            opts.exclusion_samples,
        )?));
    }
    Ok(ConditionII::Unchecked(format!(
        "no procedure for n = {} with {} modes",
        sys.dim(),
        sys.len()
    )))
}

pub fn certify(
    sys: &SwitchedSystem,
    spec: &MaxMinSpec,
    source: CandidateSource,
    opts: &CertifyOptions,
) -> Result<Certificate, CertifyError> {
    let lin = linear_system(sys)?;
    let policy = opts.policy;
    let mut notes = Vec::new();
    let mut search_outcome = None;
    let cand = match source {
        CandidateSource::Given(c) => Some(c),
        CandidateSource::FixedBasis(p) => {
            notes.push("multipliers optimized for the given basis".into());
            Some(optimize_multipliers(&lin, spec, &p, &policy)?)
        }
        CandidateSource::Search(so) => {
            let out = search_condition_i(&lin, spec, &so, &policy)?;
            let c = out.candidate().cloned();
            search_outcome = Some(out);
            c
        }
    };
    let mut cert = Certificate {
        candidate: cand.clone(),
        condition_i: None,
        condition_ii: None,
        search: search_outcome,
        verdict: Verdict::NotCertified,
        notes,
        exclusion_samples: opts.exclusion_samples,
        policy,
    };
    let Some(cand) = cand else {
        cert.notes.push(
            "no candidate found within the search budget; this does not prove infeasibility".into(),
        );
        return Ok(cert);
    };
    let ci = check_condition_i(&lin, spec, &cand, &policy)?;
    let holds = ci.holds();
    cert.condition_i = Some(ci);
    if !holds {
        cert.notes.push("condition (i) fails".into());
        return Ok(cert);
    }
    let cii = condition_ii(&lin, spec, &cand.p, opts)?;
    cert.verdict = match cii.pass() {
        Some(true) => Verdict::GasCertified,
        Some(false) => {
            cert.notes.push("condition (ii) fails".into());
            Verdict::NotCertified
        }
        None => {
            cert.notes.push("condition (ii) unchecked".into());
            Verdict::ConditionIOnly
        }
    };
    cert.condition_ii = Some(cii);
    Ok(cert)
}

/// Recomputes every margin from the candidate alone and compares verdicts.
pub fn reverify(
    sys: &SwitchedSystem,
    spec: &MaxMinSpec,
    cert: &Certificate,
) -> Result<bool, CertifyError> {
    let Some(cand) = &cert.candidate else {
        return Ok(cert.verdict == Verdict::NotCertified);
    };
    let opts = CertifyOptions {
        policy: cert.policy,
        exclusion_samples: cert.exclusion_samples,
    };
    let again = certify(sys, spec, CandidateSource::Given(cand.clone()), &opts)?;
    if again.verdict != cert.verdict {
        return Ok(false);
    }
    if cert.verdict == Verdict::GasCertified {
        let ci = again
            .condition_i
            .as_ref()
            .expect("certified implies condition (i)");
        if !ci.holds() {
            return Ok(false);
        }
    }
    Ok(true)
}
