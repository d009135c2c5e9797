//! Certificate serialization in the configuration grammar: the system,
//! structure, basis and multipliers re-parse as a config, the evidence goes
//! into extra sections.

use std::fmt::Write;

use crate::sysdsl::{fmt_num, render_config, BasisConfig, BasisFunctions, Config, PolarityTag};

use super::{Certificate, ConditionII, LineOutcome, PairStatus, SearchOutcome, Vacuity};

fn vec_str(v: &[f64]) -> String {
    format!(
        "({})",
        v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", ")
    )
}

fn vacuity_str(v: &Vacuity) -> String {
    match v {
        Vacuity::EmptyExact => "vacuous (exact)".into(),
        Vacuity::EmptyCertified { weights, margin } => format!(
            "vacuous (weights {}, lambda_max {})",
            vec_str(weights),
            fmt_num(*margin)
        ),
        Vacuity::NonEmpty(_) => "non-empty".into(),
        Vacuity::Unresolved => "unresolved".into(),
    }
}

/// Text report; `base` supplies the system and structure sections.
pub fn render_certificate(base: &Config, cert: &Certificate) -> String {
    let mut cfg = Config {
        system: base.system.clone(),
        constants: base.constants.clone(),
        ..Config::default()
    };
    let mut basis = base.basis.clone().unwrap_or(BasisConfig {
        functions: None,
        families: Vec::new(),
        polarity: PolarityTag::MaxMin,
    });
    if let Some(c) = &cert.candidate {
        basis.functions = Some(BasisFunctions::Quadratic(c.p.clone()));
        cfg.multipliers = c.entries();
    }
    cfg.basis = Some(basis);

    let mut margins = Vec::new();
    if let Some(ci) = &cert.condition_i {
        margins.push(format!("threshold = {}", fmt_num(ci.threshold)));
        for e in &ci.entries {
            let status = match &e.status {
                PairStatus::Vacuous(v) => vacuity_str(v),
                PairStatus::Required { margin, given, .. } => {
                    format!(
                        "margin = {}{}",
                        fmt_num(*margin),
                        if *given {
                            ""
                        } else {
                            " (no multipliers given)"
                        }
                    )
                }
            };
            margins.push(format!("mode {} {}: {status}", e.mode + 1, e.block));
        }
        margins.push(format!("worst = {}", fmt_num(ci.worst())));
        margins.push(format!("holds = {}", ci.holds()));
    }
    if !margins.is_empty() {
        cfg.extra.insert("margins".into(), margins);
    }

    let mut c2 = Vec::new();
    match &cert.condition_ii {
        Some(ConditionII::Planar(r)) => {
            c2.push("procedure = planar".to_string());
            c2.push(format!(
                "reconstruction_error = {}",
                fmt_num(r.factors.max_reconstruction_error)
            ));
            for (j, l) in r.lines.iter().enumerate() {
                let active: Vec<String> = l.active.iter().map(|a| (a + 1).to_string()).collect();
                let outcome = match &l.outcome {
                    LineOutcome::Smooth => "smooth".to_string(),
                    LineOutcome::EmptyLambda => "lambda empty".to_string(),
                    LineOutcome::Checked { value, witness } => {
                        format!("value {} at lambda {}", fmt_num(*value), vec_str(witness))
                    }
                };
                c2.push(format!(
                    "line {}: v = {} modes {}|{} active {{{}}} lambda {}: {outcome}; {}",
                    j + 1,
                    vec_str(&l.line.v),
                    l.line.modes.0 + 1,
                    l.line.modes.1 + 1,
                    active.join(", "),
                    l.lambda.label(),
                    if l.pass { "pass" } else { "fail" }
                ));
            }
        }
        Some(ConditionII::TwoMode(r)) => {
            c2.push("procedure = two-mode".to_string());
            c2.push(format!(
                "sliding_exclusion = sampled (N = {}, margin = {}): min product {} at {}; {}",
                r.exclusion.samples,
                fmt_num(cert.policy.margin),
                fmt_num(r.exclusion.min_product),
                vec_str(&r.exclusion.argmin),
                if r.exclusion.pass { "pass" } else { "fail" }
            ));
            for ((a, b), s) in &r.rank_margins {
                c2.push(format!(
                    "rank P{}-P{}: smallest singular value {}",
                    a + 1,
                    b + 1,
                    fmt_num(*s)
                ));
            }
        }
        Some(ConditionII::Trivial(why)) => c2.push(format!("procedure = none ({why})")),
        Some(ConditionII::Unchecked(why)) => c2.push(format!("procedure = unchecked ({why})")),
        None => {}
    }
    if !c2.is_empty() {
        cfg.extra.insert("condition_ii".into(), c2);
    }

    let mut sampling = vec![
        format!("abs = {}", fmt_num(cert.policy.abs)),
        format!("rel = {}", fmt_num(cert.policy.rel)),
        format!("margin = {}", fmt_num(cert.policy.margin)),
        format!("seed = {}", cert.policy.seed),
        format!("exclusion_samples = {}", cert.exclusion_samples),
    ];
    match &cert.search {
        // wall-clock time stays out of the report so equal runs give equal text
        Some(SearchOutcome::Found {
            evaluations, phase, ..
        }) => {
            sampling.push(format!(
                "search = found ({phase} phase, {evaluations} evaluations)"
            ));
        }
        Some(SearchOutcome::NotFound {
            best, evaluations, ..
        }) => {
            sampling.push(format!(
                "search = not found (best worst-margin {}, {evaluations} evaluations)",
                fmt_num(*best)
            ));
        }
        None => {}
    }
    cfg.extra.insert("sampling".into(), sampling);

    let mut verdict = vec![format!("verdict = {}", cert.verdict)];
    verdict.extend(cert.notes.iter().map(|n| format!("note = {n}")));
    cfg.extra.insert("verdict".into(), verdict);

    let mut s = String::new();
    let _ = write!(s, "{}", render_config(&cfg));
    s
}
