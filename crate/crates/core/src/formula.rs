//! Restricted continuous-logic formulas: AST, printer, classification, and
//! structural moduli of continuity.
//!
//! The connective set is fixed: +, *, non-negative rational scaling, the
//! truncated difference `-.`, constants, halving, and max/min as primitives.
//! Quantifiers range over the operator-norm unit ball of M_p(C).

use crate::scalars::{rat_str, CRat, Rat};
use crate::terms::Term;
use crate::{Error, Result};
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    Norm2(Term),
    TraceRe(Term),
    TraceIm(Term),
    Const(#[serde(with = "crate::scalars::rat_serde")] Rat),
    Add(Box<Formula>, Box<Formula>),
    Mul(Box<Formula>, Box<Formula>),
    Scale(#[serde(with = "crate::scalars::rat_serde")] Rat, Box<Formula>),
    DotMinus(Box<Formula>, Box<Formula>),
    Max(Box<Formula>, Box<Formula>),
    Min(Box<Formula>, Box<Formula>),
    Half(Box<Formula>),
    /// Quantifier variable lists are nonempty.
    Sup(Vec<u32>, Box<Formula>),
    Inf(Vec<u32>, Box<Formula>),
}

/// x -. y = max(x - y, 0).
pub fn dotminus(a: f64, b: f64) -> f64 {
    (a - b).max(0.0)
}

impl Formula {
    pub fn add(a: Formula, b: Formula) -> Formula {
        Formula::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Formula, b: Formula) -> Formula {
        Formula::Mul(Box::new(a), Box::new(b))
    }

    /// Coefficients must be >= 0; the parser enforces this, programmatic
    /// callers are trusted.
    pub fn scale(q: Rat, f: Formula) -> Formula {
        Formula::Scale(q, Box::new(f))
    }

    pub fn dot_minus(a: Formula, b: Formula) -> Formula {
        Formula::DotMinus(Box::new(a), Box::new(b))
    }

    pub fn fmax(a: Formula, b: Formula) -> Formula {
        Formula::Max(Box::new(a), Box::new(b))
    }

    pub fn fmin(a: Formula, b: Formula) -> Formula {
        Formula::Min(Box::new(a), Box::new(b))
    }

    pub fn half(f: Formula) -> Formula {
        Formula::Half(Box::new(f))
    }

    pub fn sup(vars: Vec<u32>, f: Formula) -> Formula {
        debug_assert!(!vars.is_empty());
        Formula::Sup(vars, Box::new(f))
    }

    pub fn inf(vars: Vec<u32>, f: Formula) -> Formula {
        debug_assert!(!vars.is_empty());
        Formula::Inf(vars, Box::new(f))
    }

    /// Left fold of Max over a nonempty list.
    pub fn max_of(mut items: Vec<Formula>) -> Formula {
        let first = items.remove(0);
        items.into_iter().fold(first, Formula::fmax)
    }

    /// Left fold of Add over a nonempty list.
    pub fn sum_of(mut items: Vec<Formula>) -> Formula {
        let first = items.remove(0);
        items.into_iter().fold(first, Formula::add)
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::Norm2(_) | Formula::TraceRe(_) | Formula::TraceIm(_) | Formula::Const(_) => {
                true
            }
            Formula::Half(f) | Formula::Scale(_, f) => f.is_quantifier_free(),
            Formula::Add(a, b)
            | Formula::Mul(a, b)
            | Formula::DotMinus(a, b)
            | Formula::Max(a, b)
            | Formula::Min(a, b) => a.is_quantifier_free() && b.is_quantifier_free(),
            Formula::Sup(_, _) | Formula::Inf(_, _) => false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        self.free_vars_into(&mut bound, &mut out);
        out
    }

    fn free_vars_into(&self, bound: &mut Vec<u32>, out: &mut BTreeSet<u32>) {
        match self {
            Formula::Norm2(t) | Formula::TraceRe(t) | Formula::TraceIm(t) => {
                let mut vars = BTreeSet::new();
                t.collect_vars(&mut vars);
                for v in vars {
                    if !bound.contains(&v) {
                        out.insert(v);
                    }
                }
            }
            Formula::Const(_) => {}
            Formula::Half(f) | Formula::Scale(_, f) => f.free_vars_into(bound, out),
            Formula::Add(a, b)
            | Formula::Mul(a, b)
            | Formula::DotMinus(a, b)
            | Formula::Max(a, b)
            | Formula::Min(a, b) => {
                a.free_vars_into(bound, out);
                b.free_vars_into(bound, out);
            }
            Formula::Sup(vars, f) | Formula::Inf(vars, f) => {
                let depth = bound.len();
                bound.extend_from_slice(vars);
                f.free_vars_into(bound, out);
                bound.truncate(depth);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    #[serde(rename = "quantifier-free")]
    QuantifierFree,
    #[serde(rename = "universal")]
    Universal,
    #[serde(rename = "existential")]
    Existential,
    #[serde(rename = "mixed")]
    Mixed,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Classification::QuantifierFree => "quantifier-free",
            Classification::Universal => "universal",
            Classification::Existential => "existential",
            Classification::Mixed => "mixed",
        };
        write!(f, "{s}")
    }
}

/// Universal means an outer prenex Sup block over a quantifier-free body;
/// existential dually; anything else with quantifiers is mixed.
pub fn classify(f: &Formula) -> Classification {
    if f.is_quantifier_free() {
        return Classification::QuantifierFree;
    }
    let mut body = f;
    let mut sups = 0;
    while let Formula::Sup(_, inner) = body {
        body = inner;
        sups += 1;
    }
    if sups > 0 && body.is_quantifier_free() {
        return Classification::Universal;
    }
    let mut body = f;
    let mut infs = 0;
    while let Formula::Inf(_, inner) = body {
        body = inner;
        infs += 1;
    }
    if infs > 0 && body.is_quantifier_free() {
        return Classification::Existential;
    }
    Classification::Mixed
}

/// A formula with no free variables, tagged with its classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    formula: Formula,
    classification: Classification,
}

impl Sentence {
    pub fn new(formula: Formula) -> Result<Sentence> {
        let free = formula.free_vars();
        if !free.is_empty() {
            let names: Vec<String> = free.iter().map(|v| format!("x{v}")).collect();
            return Err(Error::Validation(format!(
                "sentence has free variables: {}",
                names.join(", ")
            )));
        }
        let classification = classify(&formula);
        Ok(Sentence { formula, classification })
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn classification(&self) -> Classification {
        self.classification
    }

    /// Strips the outer prenex block: quantified variables in binding order
    /// (deduplicated) plus the quantifier-free body. Only meaningful for
    /// universal/existential sentences.
    pub fn prenex(&self) -> (Vec<u32>, &Formula) {
        let mut vars: Vec<u32> = Vec::new();
        let mut body = &self.formula;
        loop {
            let (vs, inner) = match body {
                Formula::Sup(vs, inner) if self.classification == Classification::Universal => {
                    (vs, inner)
                }
                Formula::Inf(vs, inner) if self.classification == Classification::Existential => {
                    (vs, inner)
                }
                _ => break,
            };
            for &v in vs {
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
            body = inner;
        }
        (vars, body)
    }
}

// ---------------------------------------------------------------------------
// Modulus of continuity.

/// Per-variable Lipschitz data for a quantifier-free formula over contraction
/// tuples, with respect to the 2-norm on each variable. Conservative by
/// construction: |f(u) - f(v)| <= sum_i lip[i] * ||u_i - v_i||_2.
#[derive(Clone, Debug)]
pub struct Modulus {
    pub per_var: BTreeMap<u32, Rat>,
}

impl Modulus {
    /// Largest per-variable constant: the Lipschitz bound w.r.t. the
    /// l1-of-2-norm metric on tuples.
    pub fn lipschitz_max(&self) -> Rat {
        self.per_var.values().cloned().fold(Rat::zero(), |a, b| if b > a { b } else { a })
    }

    /// Sum of per-variable constants: pairs with a uniform per-variable
    /// covering radius to bound a net gap.
    pub fn lipschitz_sum(&self) -> Rat {
        self.per_var.values().cloned().fold(Rat::zero(), |a, b| a + b)
    }

    /// delta(eps) = eps / L, None when the formula ignores its variables.
    /// Monotone nondecreasing and positive for eps > 0.
    pub fn delta(&self, eps: &Rat) -> Option<Rat> {
        let l = self.lipschitz_max();
        if l.is_zero() {
            None
        } else {
            Some(eps / l)
        }
    }
}

struct TermBounds {
    lip: BTreeMap<u32, Rat>,
    /// Upper bound on the operator norm over contraction assignments.
    op: Rat,
}

fn add_into(dst: &mut BTreeMap<u32, Rat>, src: &BTreeMap<u32, Rat>, factor: &Rat) {
    for (v, l) in src {
        let entry = dst.entry(*v).or_insert_with(Rat::zero);
        *entry += l * factor;
    }
}

fn term_bounds(t: &Term) -> TermBounds {
    match t {
        Term::Var(i) => TermBounds {
            lip: BTreeMap::from([(*i, Rat::from_integer(1.into()))]),
            op: Rat::from_integer(1.into()),
        },
        Term::One => TermBounds { lip: BTreeMap::new(), op: Rat::from_integer(1.into()) },
        Term::Zero => TermBounds { lip: BTreeMap::new(), op: Rat::zero() },
        Term::Adjoint(t) => term_bounds(t),
        Term::Sum(a, b) => {
            let (ba, bb) = (term_bounds(a), term_bounds(b));
            let mut lip = ba.lip;
            add_into(&mut lip, &bb.lip, &Rat::from_integer(1.into()));
            TermBounds { lip, op: ba.op + bb.op }
        }
        Term::Prod(a, b) => {
            // ||(a - a')b||_2 <= ||a - a'||_2 ||b||_op and symmetrically.
            let (ba, bb) = (term_bounds(a), term_bounds(b));
            let mut lip = BTreeMap::new();
            add_into(&mut lip, &ba.lip, &bb.op);
            add_into(&mut lip, &bb.lip, &ba.op);
            TermBounds { lip, op: ba.op * bb.op }
        }
        Term::Scale(c, t) => {
            let bt = term_bounds(t);
            let factor = c.abs_bound();
            let mut lip = BTreeMap::new();
            add_into(&mut lip, &bt.lip, &factor);
            TermBounds { lip, op: bt.op * factor }
        }
    }
}

struct FormulaBounds {
    lip: BTreeMap<u32, Rat>,
    /// Upper bound on |f| over contraction tuples.
    range: Rat,
}

fn formula_bounds(f: &Formula) -> Result<FormulaBounds> {
    Ok(match f {
        // |tau(a)| <= ||a||_2 <= ||a||_op and | ||a||_2 - ||b||_2 | <= ||a-b||_2,
        // so atoms inherit the term's per-variable constants directly.
        Formula::Norm2(t) | Formula::TraceRe(t) | Formula::TraceIm(t) => {
            let b = term_bounds(t);
            FormulaBounds { lip: b.lip, range: b.op }
        }
        Formula::Const(q) => FormulaBounds { lip: BTreeMap::new(), range: q.clone() },
        Formula::Add(a, b) => {
            let (fa, fb) = (formula_bounds(a)?, formula_bounds(b)?);
            let mut lip = fa.lip;
            add_into(&mut lip, &fb.lip, &Rat::from_integer(1.into()));
            FormulaBounds { lip, range: fa.range + fb.range }
        }
        Formula::Mul(a, b) => {
            let (fa, fb) = (formula_bounds(a)?, formula_bounds(b)?);
            let mut lip = BTreeMap::new();
            add_into(&mut lip, &fa.lip, &fb.range);
            add_into(&mut lip, &fb.lip, &fa.range);
            FormulaBounds { lip, range: fa.range * fb.range }
        }
        Formula::Scale(q, inner) => {
            let fi = formula_bounds(inner)?;
            let mut lip = BTreeMap::new();
            add_into(&mut lip, &fi.lip, q);
            FormulaBounds { lip, range: fi.range * q }
        }
        Formula::DotMinus(a, b) => {
            // 1-Lipschitz in each argument jointly.
            let (fa, fb) = (formula_bounds(a)?, formula_bounds(b)?);
            let mut lip = fa.lip;
            add_into(&mut lip, &fb.lip, &Rat::from_integer(1.into()));
            FormulaBounds { lip, range: fa.range + fb.range }
        }
        Formula::Max(a, b) | Formula::Min(a, b) => {
            // |max(x,y) - max(x',y')| <= max(|x-x'|, |y-y'|).
            let (fa, fb) = (formula_bounds(a)?, formula_bounds(b)?);
            let mut lip = fa.lip;
            for (v, l) in fb.lip {
                let entry = lip.entry(v).or_insert_with(Rat::zero);
                if l > *entry {
                    *entry = l;
                }
            }
            let range = if fa.range > fb.range { fa.range } else { fb.range };
            FormulaBounds { lip, range }
        }
        Formula::Half(inner) => {
            let fi = formula_bounds(inner)?;
            let mut lip = BTreeMap::new();
            add_into(&mut lip, &fi.lip, &crate::scalars::rat(1, 2));
            FormulaBounds { lip, range: fi.range * crate::scalars::rat(1, 2) }
        }
        Formula::Sup(_, _) | Formula::Inf(_, _) => {
            return Err(Error::Unsupported(
                "modulus of continuity is only defined for quantifier-free formulas".into(),
            ))
        }
    })
}

/// Structural modulus for a quantifier-free formula. The constants are
/// conservative upper bounds; domain-aware callers (the game machinery) may
/// know tighter ones on restricted zerosets.
pub fn modulus_of_continuity(f: &Formula) -> Result<Modulus> {
    let b = formula_bounds(f)?;
    Ok(Modulus { per_var: b.lip })
}

/// Upper bound on |f| over contraction tuples; used for net budget math.
pub fn range_bound(f: &Formula) -> Result<Rat> {
    Ok(formula_bounds(f)?.range)
}

// ---------------------------------------------------------------------------
// Printing. Exact inverse of the parser: parse(print(f)) == f structurally.

#[derive(Clone, Copy, PartialEq)]
enum FCtx {
    Top,
    SumLhs,
    SumRhs,
    ChainLhs,
    ChainRhs,
    ScaleBody,
}

impl Formula {
    fn fmt_ctx(&self, f: &mut fmt::Formatter<'_>, ctx: FCtx) -> fmt::Result {
        let bare = match self {
            Formula::Norm2(_)
            | Formula::TraceRe(_)
            | Formula::TraceIm(_)
            | Formula::Const(_)
            | Formula::Max(_, _)
            | Formula::Min(_, _)
            | Formula::Half(_) => true,
            Formula::Mul(_, _) => !matches!(ctx, FCtx::ChainRhs),
            Formula::Scale(_, _) => matches!(ctx, FCtx::Top | FCtx::SumLhs | FCtx::SumRhs),
            Formula::Add(_, _) | Formula::DotMinus(_, _) => {
                matches!(ctx, FCtx::Top | FCtx::SumLhs)
            }
            Formula::Sup(_, _) | Formula::Inf(_, _) => ctx == FCtx::Top,
        };
        if !bare {
            write!(f, "(")?;
            self.fmt_ctx(f, FCtx::Top)?;
            return write!(f, ")");
        }
        match self {
            Formula::Norm2(t) => write!(f, "norm2({t})"),
            Formula::TraceRe(t) => write!(f, "trRe({t})"),
            Formula::TraceIm(t) => write!(f, "trIm({t})"),
            Formula::Const(q) => write!(f, "{}", rat_str(q)),
            Formula::Add(a, b) => {
                a.fmt_ctx(f, FCtx::SumLhs)?;
                write!(f, " + ")?;
                b.fmt_ctx(f, FCtx::SumRhs)
            }
            Formula::DotMinus(a, b) => {
                a.fmt_ctx(f, FCtx::SumLhs)?;
                write!(f, " -. ")?;
                b.fmt_ctx(f, FCtx::SumRhs)
            }
            Formula::Mul(a, b) => {
                a.fmt_ctx(f, FCtx::ChainLhs)?;
                write!(f, " * ")?;
                b.fmt_ctx(f, FCtx::ChainRhs)
            }
            Formula::Scale(q, inner) => {
                write!(f, "{} ", rat_str(q))?;
                inner.fmt_ctx(f, FCtx::ScaleBody)
            }
            Formula::Max(a, b) => {
                write!(f, "max(")?;
                a.fmt_ctx(f, FCtx::Top)?;
                write!(f, ", ")?;
                b.fmt_ctx(f, FCtx::Top)?;
                write!(f, ")")
            }
            Formula::Min(a, b) => {
                write!(f, "min(")?;
                a.fmt_ctx(f, FCtx::Top)?;
                write!(f, ", ")?;
                b.fmt_ctx(f, FCtx::Top)?;
                write!(f, ")")
            }
            Formula::Half(inner) => {
                write!(f, "half(")?;
                inner.fmt_ctx(f, FCtx::Top)?;
                write!(f, ")")
            }
            Formula::Sup(vars, body) | Formula::Inf(vars, body) => {
                let kw = if matches!(self, Formula::Sup(_, _)) { "sup" } else { "inf" };
                write!(f, "{kw} ")?;
                for v in vars {
                    write!(f, "x{v} ")?;
                }
                write!(f, ". ")?;
                body.fmt_ctx(f, FCtx::Top)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_ctx(f, FCtx::Top)
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.formula.fmt(f)
    }
}

// ---------------------------------------------------------------------------
// Seeded AST generators for the round-trip tests.

const COEFF_POOL: [(i64, i64, i64, i64); 12] = [
    // (re num, re den, im num, im den)
    (2, 1, 0, 1),
    (-2, 1, 0, 1),
    (1, 2, 0, 1),
    (2, 3, 0, 1),
    (-3, 4, 0, 1),
    (5, 7, 0, 1),
    (0, 1, 1, 1),
    (0, 1, -3, 2),
    (1, 2, 3, 4),
    (-1, 2, 1, 3),
    (1, 1, 0, 1),
    (0, 1, 0, 1),
];

const CONST_POOL: [(i64, i64); 8] =
    [(0, 1), (1, 1), (1, 2), (2, 1), (2, 3), (5, 4), (7, 2), (1, 7)];

pub fn random_term<R: Rng>(rng: &mut R, depth: usize) -> Term {
    if depth == 0 {
        return match rng.gen_range(0..5) {
            0 | 1 | 2 => Term::Var(rng.gen_range(1..=4)),
            3 => Term::One,
            _ => Term::Zero,
        };
    }
    match rng.gen_range(0..8) {
        0 => Term::Var(rng.gen_range(1..=4)),
        1 => Term::One,
        2 => Term::adj(random_term(rng, depth - 1)),
        3 | 4 => Term::sum(random_term(rng, depth - 1), random_term(rng, depth - 1)),
        5 | 6 => Term::prod(random_term(rng, depth - 1), random_term(rng, depth - 1)),
        _ => {
            let (rn, rd, im, id) = COEFF_POOL[rng.gen_range(0..COEFF_POOL.len())];
            let c = CRat::new(crate::scalars::rat(rn, rd), crate::scalars::rat(im, id));
            Term::scale(c, random_term(rng, depth - 1))
        }
    }
}

pub fn random_formula<R: Rng>(rng: &mut R, depth: usize) -> Formula {
    let atom = |rng: &mut R, d: usize| -> Formula {
        match rng.gen_range(0..4) {
            0 => {
                let (n, d2) = CONST_POOL[rng.gen_range(0..CONST_POOL.len())];
                Formula::Const(crate::scalars::rat(n, d2))
            }
            1 => Formula::Norm2(random_term(rng, d.min(3))),
            2 => Formula::TraceRe(random_term(rng, d.min(3))),
            _ => Formula::TraceIm(random_term(rng, d.min(3))),
        }
    };
    if depth == 0 {
        return atom(rng, 1);
    }
    match rng.gen_range(0..12) {
        0 | 1 => atom(rng, depth),
        2 => Formula::add(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        3 => Formula::mul(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        4 => {
            let (n, d2) = CONST_POOL[rng.gen_range(0..CONST_POOL.len())];
            Formula::scale(crate::scalars::rat(n, d2), random_formula(rng, depth - 1))
        }
        5 | 6 => Formula::dot_minus(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        7 => Formula::fmax(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        8 => Formula::fmin(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
        9 => Formula::half(random_formula(rng, depth - 1)),
        10 => {
            let k = rng.gen_range(1..=2);
            let mut vars: Vec<u32> = Vec::new();
            while vars.len() < k {
                let v = rng.gen_range(1..=4);
                if !vars.contains(&v) {
                    vars.push(v);
                }
            }
            Formula::sup(vars, random_formula(rng, depth - 1))
        }
        _ => {
            let v = rng.gen_range(1..=4);
            Formula::inf(vec![v], random_formula(rng, depth - 1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalars::rat;

    fn tr(t: Term) -> Formula {
        Formula::TraceRe(t)
    }

    #[test]
    fn dotminus_table() {
        assert_eq!(dotminus(3.0, 1.0), 2.0);
        assert_eq!(dotminus(1.0, 3.0), 0.0);
        assert_eq!(dotminus(0.7, 0.7), 0.0);
    }

    #[test]
    fn classification_examples() {
        let qf = tr(Term::One);
        assert_eq!(classify(&qf), Classification::QuantifierFree);

        let uni = Formula::sup(
            vec![1],
            Formula::dot_minus(Formula::Const(rat(1, 1)), tr(Term::prod(Term::adj(Term::var(1)), Term::var(1)))),
        );
        assert_eq!(classify(&uni), Classification::Universal);

        let exi = Formula::inf(vec![1], Formula::Norm2(Term::minus(Term::var(1), Term::adj(Term::var(1)))));
        assert_eq!(classify(&exi), Classification::Existential);

        let mixed = Formula::sup(
            vec![1],
            Formula::inf(vec![2], Formula::Norm2(Term::minus(Term::var(1), Term::var(2)))),
        );
        assert_eq!(classify(&mixed), Classification::Mixed);
    }

    #[test]
    fn sentences_reject_free_variables() {
        assert!(Sentence::new(tr(Term::var(1))).is_err());
        let s = Sentence::new(Formula::sup(vec![1], tr(Term::var(1)))).unwrap();
        assert_eq!(s.classification(), Classification::Universal);
        let (vars, body) = s.prenex();
        assert_eq!(vars, vec![1]);
        assert_eq!(*body, tr(Term::var(1)));
    }

    #[test]
    fn shadowed_binding_is_not_free() {
        let f = Formula::sup(vec![1], Formula::sup(vec![1], tr(Term::var(1))));
        assert!(f.free_vars().is_empty());
    }

    #[test]
    fn modulus_examples() {
        // TraceRe(x1): per-variable constant 1.
        let m = modulus_of_continuity(&tr(Term::var(1))).unwrap();
        assert_eq!(m.lipschitz_max(), rat(1, 1));
        assert_eq!(m.delta(&rat(1, 10)), Some(rat(1, 10)));

        // Scale(2, g): delta(eps) = delta_g(eps/2).
        let g = tr(Term::var(1));
        let scaled = Formula::scale(rat(2, 1), g);
        let m2 = modulus_of_continuity(&scaled).unwrap();
        assert_eq!(m2.delta(&rat(1, 5)), Some(rat(1, 10)));

        // Products over contractions: tau(x1 x1*) is 2-Lipschitz in x1.
        let sq = tr(Term::prod(Term::var(1), Term::adj(Term::var(1))));
        let m3 = modulus_of_continuity(&sq).unwrap();
        assert_eq!(m3.lipschitz_max(), rat(2, 1));
        assert_eq!(m3.lipschitz_sum(), rat(2, 1));

        // Max takes the worse branch, not the sum.
        let mx = Formula::fmax(tr(Term::var(1)), tr(Term::var(1)));
        assert_eq!(modulus_of_continuity(&mx).unwrap().lipschitz_max(), rat(1, 1));

        // Monotone and positive.
        let deltas: Vec<Rat> = [rat(1, 100), rat(1, 10), rat(1, 2)]
            .iter()
            .map(|e| m3.delta(e).unwrap())
            .collect();
        assert!(deltas[0] > Rat::zero() && deltas[0] < deltas[1] && deltas[1] < deltas[2]);

        let quantified = Formula::sup(vec![1], tr(Term::var(1)));
        assert!(modulus_of_continuity(&quantified).is_err());
    }

    #[test]
    fn display_shapes() {
        let f = Formula::sup(
            vec![1],
            Formula::Norm2(Term::minus(Term::prod(Term::adj(Term::var(1)), Term::var(1)), Term::One)),
        );
        assert_eq!(f.to_string(), "sup x1 . norm2(x1' * x1 - 1)");

        let g = Formula::dot_minus(Formula::Const(rat(1, 1)), Formula::Const(rat(1, 1)));
        assert_eq!(g.to_string(), "1 -. 1");

        let nested = Formula::add(
            Formula::Const(rat(1, 2)),
            Formula::dot_minus(Formula::Const(rat(1, 1)), Formula::Const(rat(1, 3))),
        );
        assert_eq!(nested.to_string(), "1/2 + (1 -. 1/3)");
    }

    #[test]
    fn serde_ast_round_trip() {
        let f = Formula::sup(
            vec![1, 2],
            Formula::fmax(
                Formula::Norm2(Term::minus(Term::var(1), Term::var(2))),
                Formula::scale(rat(2, 3), Formula::TraceIm(Term::var(2))),
            ),
        );
        let json = serde_json::to_string(&f).unwrap();
        let back: Formula = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }
}
