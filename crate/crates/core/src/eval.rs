//! Formula evaluation at matrix assignments and certified one-sided bounds
//! for quantified sentences.
//!
//! Quantifiers range over contraction tuples in M_p(C) at a caller-fixed p.
//! A sup is approached from below by seeded multi-start hill climbing, an inf
//! from above by the same engine on the negated body; both return the witness
//! tuple, so every reported bound is re-checkable by direct evaluation. The
//! exact alternative, `net_eval`, brute-forces a deterministic grid and pairs
//! the max with a covering-radius gap.

use crate::formula::{dotminus, modulus_of_continuity, Classification, Formula, Sentence};
use crate::matrix::{
    gaussian_matrix, normalized_trace, project_to_contraction, random_contraction, two_norm,
    ComplexMatrix, MatrixTuple,
};
use crate::scalars::{rat_to_f64, Rat};
use crate::terms::Term;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How to read EvalResult.value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BoundKind {
    /// Deterministic evaluation, no quantifiers involved.
    #[serde(rename = "exact")]
    Exact,
    /// value <= sup, witnessed by the certificate.
    #[serde(rename = "lower-bound-of-sup")]
    LowerBoundOfSup,
    /// value >= inf, witnessed by the certificate.
    #[serde(rename = "upper-bound-of-inf")]
    UpperBoundOfInf,
    /// Net maximum r with r <= sup <= r + gap at the evaluated dimension.
    #[serde(rename = "net-bound-with-gap")]
    NetBound { gap: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub restarts: usize,
    pub iterations: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalResult {
    pub value: f64,
    pub bound_kind: BoundKind,
    pub certificate: Option<MatrixTuple>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Quantifier domain dimension.
    pub p: usize,
    pub restarts: usize,
    pub max_iterations: u64,
    pub initial_step: f64,
    pub step_decay: f64,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(p: usize, seed: u64) -> Self {
        OptimizerConfig {
            p,
            restarts: 32,
            max_iterations: 2000,
            initial_step: 0.3,
            step_decay: 0.97,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidArgument("dimension p must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidArgument("initial step must be positive".into()));
        }
        if !(self.step_decay > 0.0 && self.step_decay < 1.0) {
            return Err(Error::InvalidArgument("step decay must lie in (0,1)".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Quantifier-free evaluation.

pub fn eval_term(t: &Term, a: &MatrixTuple) -> Result<ComplexMatrix> {
    let p = a.p();
    Ok(match t {
        Term::Var(i) => a.get(*i)?.clone(),
        Term::One => ComplexMatrix::identity(p, p),
        Term::Zero => ComplexMatrix::zeros(p, p),
        Term::Adjoint(t) => eval_term(t, a)?.adjoint(),
        Term::Sum(x, y) => eval_term(x, a)? + eval_term(y, a)?,
        Term::Prod(x, y) => eval_term(x, a)? * eval_term(y, a)?,
        Term::Scale(c, t) => eval_term(t, a)?.map(|z| c.to_c64() * z),
    })
}

pub fn eval_qf(f: &Formula, a: &MatrixTuple) -> Result<f64> {
    Ok(match f {
        Formula::Norm2(t) => two_norm(&eval_term(t, a)?),
        Formula::TraceRe(t) => normalized_trace(&eval_term(t, a)?).re,
        Formula::TraceIm(t) => normalized_trace(&eval_term(t, a)?).im,
        Formula::Const(q) => rat_to_f64(q),
        Formula::Add(x, y) => eval_qf(x, a)? + eval_qf(y, a)?,
        Formula::Mul(x, y) => eval_qf(x, a)? * eval_qf(y, a)?,
        Formula::Scale(q, f) => rat_to_f64(q) * eval_qf(f, a)?,
        Formula::DotMinus(x, y) => dotminus(eval_qf(x, a)?, eval_qf(y, a)?),
        Formula::Max(x, y) => eval_qf(x, a)?.max(eval_qf(y, a)?),
        Formula::Min(x, y) => eval_qf(x, a)?.min(eval_qf(y, a)?),
        Formula::Half(f) => eval_qf(f, a)? / 2.0,
        Formula::Sup(_, _) | Formula::Inf(_, _) => {
            return Err(Error::Unsupported(
                "eval_qf requires a quantifier-free formula".into(),
            ))
        }
    })
}

/// Like eval_qf but with `-.` as plain subtraction. Used only as a secondary
/// objective so the hill climber keeps a gradient on truncated plateaus; the
/// reported value always comes from eval_qf.
fn eval_signed(f: &Formula, a: &MatrixTuple) -> Result<f64> {
    Ok(match f {
        Formula::DotMinus(x, y) => eval_signed(x, a)? - eval_signed(y, a)?,
        Formula::Add(x, y) => eval_signed(x, a)? + eval_signed(y, a)?,
        Formula::Mul(x, y) => eval_signed(x, a)? * eval_signed(y, a)?,
        Formula::Scale(q, f) => rat_to_f64(q) * eval_signed(f, a)?,
        Formula::Max(x, y) => eval_signed(x, a)?.max(eval_signed(y, a)?),
        Formula::Min(x, y) => eval_signed(x, a)?.min(eval_signed(y, a)?),
        Formula::Half(f) => eval_signed(f, a)? / 2.0,
        other => eval_qf(other, a)?,
    })
}

// ---------------------------------------------------------------------------
// The hill-climbing engine.

/// Objective pair: `clamped` is the real objective; `soft` breaks ties on its
/// plateaus. Acceptance is lexicographic, so the clamped value never drops.
pub(crate) struct Objective<'a> {
    pub clamped: &'a (dyn Fn(&MatrixTuple) -> f64 + Sync),
    pub soft: Option<&'a (dyn Fn(&MatrixTuple) -> f64 + Sync)>,
}

pub(crate) struct EngineOutcome {
    pub tuple: MatrixTuple,
    pub iterations: u64,
}

/// Seeded multi-start maximization over contraction tuples. Streams r+1..
/// drive the random restarts; warm starts, when given, replace the random
/// initial point of the leading restarts but share their streams, so adding
/// restarts never changes earlier branches (monotonicity in restarts).
pub(crate) fn maximize(
    n: usize,
    cfg: &OptimizerConfig,
    obj: &Objective<'_>,
    warm_starts: &[MatrixTuple],
) -> Result<EngineOutcome> {
    cfg.validate()?;
    let p = cfg.p;
    let total = cfg.restarts.max(warm_starts.len());
    let runs: Vec<(f64, f64, usize, MatrixTuple)> = (0..total)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64 + 1);
            let mut cur = match warm_starts.get(r) {
                Some(w) => w.clone(),
                None => {
                    let mats = (0..n).map(|_| random_contraction(p, &mut rng)).collect();
                    MatrixTuple::new(p, mats).expect("consistent dimensions")
                }
            };
            let mut best_c = (obj.clamped)(&cur);
            let mut best_s = obj.soft.map_or(best_c, |s| s(&cur));
            let mut step = cfg.initial_step;
            for it in 0..cfg.max_iterations {
                if n == 0 {
                    break;
                }
                let var = (it as usize % n) as u32 + 1;
                let base = cur.get(var).unwrap().clone();
                let bump = gaussian_matrix(p, step, &mut rng);
                // One random bump plus two radial moves: optima of these
                // objectives concentrate on the ball boundary (unitaries,
                // projections) or at the center, and pure scaling converges
                // geometrically where the random walk stalls.
                let candidates = [
                    project_to_contraction(&(&base + bump)),
                    project_to_contraction(&base.map(|z| z * (1.0 + step))),
                    base.map(|z| z * (1.0 - step)),
                ];
                let mut accepted = false;
                for m in candidates {
                    let mut cand = cur.clone();
                    cand.set(var, m);
                    let c = (obj.clamped)(&cand);
                    let s = obj.soft.map_or(c, |f| f(&cand));
                    if c > best_c || (c == best_c && s > best_s) {
                        best_c = c;
                        best_s = s;
                        cur = cand;
                        accepted = true;
                    }
                }
                if accepted {
                    step = (step * 1.1).min(cfg.initial_step);
                } else {
                    step = (step * cfg.step_decay).max(1e-7);
                }
            }
            (best_c, best_s, r, cur)
        })
        .collect();
    // Deterministic merge regardless of thread schedule: best value, then
    // lowest restart index.
    let mut best: Option<&(f64, f64, usize, MatrixTuple)> = None;
    for run in &runs {
        let better = match best {
            None => true,
            Some(b) => run.0 > b.0 || (run.0 == b.0 && run.2 < b.2),
        };
        if better {
            best = Some(run);
        }
    }
    let chosen = best.expect("restarts >= 1");
    Ok(EngineOutcome {
        tuple: chosen.3.clone(),
        iterations: total as u64 * cfg.max_iterations,
    })
}

// ---------------------------------------------------------------------------
// Sentence-level entry points.

fn optimizer_domain(vars: &[u32], body: &Formula) -> Result<usize> {
    let max_quantified = vars.iter().copied().max().unwrap_or(0);
    if let Some(&v) = body.free_vars().iter().find(|v| **v > max_quantified) {
        return Err(Error::UnboundVariable(v));
    }
    Ok(max_quantified as usize)
}

/// Certified lower bound for sup over contraction tuples of the body's value.
/// The result's value is eval_qf at the certificate, bit for bit.
pub fn sup_lower_bound(body: &Formula, vars: &[u32], cfg: &OptimizerConfig) -> Result<EvalResult> {
    if !body.is_quantifier_free() {
        return Err(Error::Unsupported("sup body must be quantifier-free".into()));
    }
    let n = optimizer_domain(vars, body)?;
    let clamped = move |a: &MatrixTuple| eval_qf(body, a).unwrap_or(f64::NEG_INFINITY);
    let soft = move |a: &MatrixTuple| eval_signed(body, a).unwrap_or(f64::NEG_INFINITY);
    let outcome = maximize(n, cfg, &Objective { clamped: &clamped, soft: Some(&soft) }, &[])?;
    let value = eval_qf(body, &outcome.tuple)?;
    Ok(EvalResult {
        value,
        bound_kind: BoundKind::LowerBoundOfSup,
        certificate: Some(outcome.tuple),
        diagnostics: Diagnostics {
            restarts: cfg.restarts,
            iterations: outcome.iterations,
            seed: cfg.seed,
        },
    })
}

/// Certified upper bound for inf: maximizes the negated body.
pub fn inf_upper_bound(body: &Formula, vars: &[u32], cfg: &OptimizerConfig) -> Result<EvalResult> {
    if !body.is_quantifier_free() {
        return Err(Error::Unsupported("inf body must be quantifier-free".into()));
    }
    let n = optimizer_domain(vars, body)?;
    let clamped = move |a: &MatrixTuple| -eval_qf(body, a).unwrap_or(f64::INFINITY);
    let soft = move |a: &MatrixTuple| -eval_signed(body, a).unwrap_or(f64::INFINITY);
    let outcome = maximize(n, cfg, &Objective { clamped: &clamped, soft: Some(&soft) }, &[])?;
    let value = eval_qf(body, &outcome.tuple)?;
    Ok(EvalResult {
        value,
        bound_kind: BoundKind::UpperBoundOfInf,
        certificate: Some(outcome.tuple),
        diagnostics: Diagnostics {
            restarts: cfg.restarts,
            iterations: outcome.iterations,
            seed: cfg.seed,
        },
    })
}

/// Exact maximum of the body over a deterministic grid net of the contraction
/// tuples, with gap = sum of per-variable Lipschitz constants times the
/// per-variable covering radius, so value <= sup over M_p <= value + gap.
pub fn net_eval(body: &Formula, vars: &[u32], p: usize, mesh: &Rat, budget: u128) -> Result<EvalResult> {
    if !body.is_quantifier_free() {
        return Err(Error::Unsupported("net body must be quantifier-free".into()));
    }
    let n = optimizer_domain(vars, body)?;
    let modulus = modulus_of_continuity(body)?;
    if n == 0 {
        let value = eval_qf(body, &MatrixTuple::zeros(p, 0))?;
        return Ok(EvalResult {
            value,
            bound_kind: BoundKind::NetBound { gap: 0.0 },
            certificate: None,
            diagnostics: Diagnostics { restarts: 0, iterations: 1, seed: 0 },
        });
    }
    let (points, spec) = crate::moments::matrix_ball_net(p, n, mesh, budget)?;
    let values: Vec<f64> = points
        .par_iter()
        .map(|t| eval_qf(body, t).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let per_var_radius = spec.covering_radius / n as f64;
    let gap = rat_to_f64(&modulus.lipschitz_sum()) * per_var_radius;
    // Same envelope clip as the reporting path: round-off at clipped
    // boundary points must not leak past the proven |body| <= R.
    let envelope = rat_to_f64(&crate::formula::range_bound(body)?);
    Ok(EvalResult {
        value: values[best].clamp(-envelope, envelope),
        bound_kind: BoundKind::NetBound { gap },
        certificate: Some(points[best].clone()),
        diagnostics: Diagnostics { restarts: 0, iterations: values.len() as u64, seed: 0 },
    })
}

/// Dispatch on classification: exact for quantifier-free, certified one-sided
/// bounds for universal/existential, unsupported for mixed prenexes.
pub fn eval_sentence(s: &Sentence, cfg: &OptimizerConfig) -> Result<EvalResult> {
    match s.classification() {
        Classification::QuantifierFree => {
            let value = eval_qf(s.formula(), &MatrixTuple::zeros(cfg.p, 0))?;
            Ok(EvalResult {
                value,
                bound_kind: BoundKind::Exact,
                certificate: None,
                diagnostics: Diagnostics { restarts: 0, iterations: 1, seed: cfg.seed },
            })
        }
        Classification::Universal => {
            let (vars, body) = s.prenex();
            sup_lower_bound(body, &vars, cfg)
        }
        Classification::Existential => {
            let (vars, body) = s.prenex();
            inf_upper_bound(body, &vars, cfg)
        }
        Classification::Mixed => Err(Error::Unsupported(
            "mixed quantifier prenexes are not supported".into(),
        )),
    }
}
