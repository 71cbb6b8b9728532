//! Free *-algebra terms over x_1, ..., x_n and canonical enumeration of
//! *-monomials of bounded degree.

use crate::scalars::CRat;
use crate::{Error, Result};
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// One letter of a word: x_i or x_i*. Ordering is (var, star) with the
/// unstarred letter first, which fixes the lexicographic order on words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub var: u32,
    pub star: bool,
}

impl Letter {
    pub fn flip(self) -> Letter {
        Letter { var: self.var, star: !self.star }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}{}", self.var, if self.star { "'" } else { "" })
    }
}

/// A word in the letters x_i, x_i*. The empty word is the identity and is
/// excluded from moment enumeration.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StarMonomial(pub Vec<Letter>);

impl StarMonomial {
    pub fn degree(&self) -> usize {
        self.0.len()
    }

    /// Reverses the word and flips every star. Involution.
    pub fn adjoint(&self) -> StarMonomial {
        StarMonomial(self.0.iter().rev().map(|l| l.flip()).collect())
    }

    pub fn max_var(&self) -> u32 {
        self.0.iter().map(|l| l.var).max().unwrap_or(0)
    }
}

impl fmt::Display for StarMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join("*"))
    }
}

pub fn monomial_adjoint(m: &StarMonomial) -> StarMonomial {
    m.adjoint()
}

fn check_nd(n: u32, d: u32) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "monomial enumeration needs n >= 1 and d >= 1, got n={n}, d={d}"
        )));
    }
    Ok(())
}

/// Number of *-monomials of degree 1..=d over n variables:
/// sum over j of (2n)^j.
pub fn monomial_count(n: u32, d: u32) -> Result<u128> {
    check_nd(n, d)?;
    let base = 2u128 * n as u128;
    let mut total: u128 = 0;
    let mut power: u128 = 1;
    for _ in 0..d {
        power = power
            .checked_mul(base)
            .ok_or_else(|| Error::InvalidArgument("monomial count overflows u128".into()))?;
        total = total
            .checked_add(power)
            .ok_or_else(|| Error::InvalidArgument("monomial count overflows u128".into()))?;
    }
    Ok(total)
}

/// All *-monomials of degree 1..=d in canonical order: degree ascending,
/// then lexicographic with x_1 < x_1* < x_2 < x_2* < ...
pub fn enumerate_monomials(n: u32, d: u32) -> Result<Vec<StarMonomial>> {
    check_nd(n, d)?;
    let count = monomial_count(n, d)?;
    if count > 10_000_000 {
        return Err(Error::InvalidArgument(format!(
            "refusing to materialize {count} monomials"
        )));
    }
    let alphabet: Vec<Letter> = (1..=n)
        .flat_map(|v| [Letter { var: v, star: false }, Letter { var: v, star: true }])
        .collect();
    let mut out = Vec::with_capacity(count as usize);
    for deg in 1..=d as usize {
        // Odometer over base-2n digits, most significant first = lex order.
        let mut digits = vec![0usize; deg];
        loop {
            out.push(StarMonomial(digits.iter().map(|&k| alphabet[k]).collect()));
            let mut pos = deg;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < alphabet.len() {
                    break;
                }
                digits[pos] = 0;
            }
            if digits.iter().all(|&k| k == 0) {
                break;
            }
        }
    }
    Ok(out)
}

/// Expression tree in the free *-algebra. Coefficients are complex rationals
/// so that print/parse round trips are exact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Var(u32),
    One,
    Zero,
    Adjoint(Box<Term>),
    Sum(Box<Term>, Box<Term>),
    Prod(Box<Term>, Box<Term>),
    Scale(CRat, Box<Term>),
}

impl Term {
    pub fn var(i: u32) -> Term {
        Term::Var(i)
    }

    pub fn adj(t: Term) -> Term {
        Term::Adjoint(Box::new(t))
    }

    pub fn sum(a: Term, b: Term) -> Term {
        Term::Sum(Box::new(a), Box::new(b))
    }

    pub fn prod(a: Term, b: Term) -> Term {
        Term::Prod(Box::new(a), Box::new(b))
    }

    pub fn scale(c: CRat, t: Term) -> Term {
        Term::Scale(c, Box::new(t))
    }

    /// a - b as sum with a -1 coefficient; the printer undoes this sugar.
    pub fn minus(a: Term, b: Term) -> Term {
        match b {
            Term::Scale(c, t) => Term::sum(a, Term::Scale(-c, t)),
            other => Term::sum(a, Term::scale(CRat::from_int(-1), other)),
        }
    }

    pub fn collect_vars(&self, into: &mut BTreeSet<u32>) {
        match self {
            Term::Var(i) => {
                into.insert(*i);
            }
            Term::One | Term::Zero => {}
            Term::Adjoint(t) | Term::Scale(_, t) => t.collect_vars(into),
            Term::Sum(a, b) | Term::Prod(a, b) => {
                a.collect_vars(into);
                b.collect_vars(into);
            }
        }
    }

    pub fn from_monomial(m: &StarMonomial) -> Term {
        let mut letters = m.0.iter();
        let first = match letters.next() {
            Some(l) => letter_term(*l),
            None => return Term::One,
        };
        letters.fold(first, |acc, l| Term::prod(acc, letter_term(*l)))
    }
}

fn letter_term(l: Letter) -> Term {
    if l.star {
        Term::adj(Term::Var(l.var))
    } else {
        Term::Var(l.var)
    }
}

// Printing. The grammar: a product is an optional scalar coefficient followed
// by postfix-adjoint atoms joined by `*` or juxtaposition; the coefficient
// scales the whole product. Sums use `+`, with `a - q t` as sugar for adding
// a negatively scaled product.
#[derive(Clone, Copy, PartialEq)]
enum TermCtx {
    Sum,
    SumRhs,
    ProdLhs,
    ProdRhs,
    ScaleBody,
    AdjBase,
}

impl Term {
    fn fmt_ctx(&self, f: &mut fmt::Formatter<'_>, ctx: TermCtx) -> fmt::Result {
        let bare = match self {
            Term::Var(_) | Term::One | Term::Zero | Term::Adjoint(_) => true,
            Term::Prod(_, _) => !matches!(ctx, TermCtx::ProdRhs | TermCtx::AdjBase),
            Term::Scale(_, _) => matches!(ctx, TermCtx::Sum | TermCtx::SumRhs),
            Term::Sum(_, _) => ctx == TermCtx::Sum,
        };
        if !bare {
            write!(f, "(")?;
            self.fmt_ctx(f, TermCtx::Sum)?;
            return write!(f, ")");
        }
        match self {
            Term::Var(i) => write!(f, "x{i}"),
            Term::One => write!(f, "1"),
            Term::Zero => write!(f, "0"),
            Term::Adjoint(t) => {
                t.fmt_ctx(f, TermCtx::AdjBase)?;
                write!(f, "'")
            }
            Term::Sum(a, b) => {
                a.fmt_ctx(f, TermCtx::Sum)?;
                // Negative real coefficients print as subtraction.
                if let Term::Scale(c, t) = b.as_ref() {
                    if c.is_real() && c.re.is_negative() {
                        let pos = -c.clone();
                        if pos.is_one() {
                            write!(f, " - ")?;
                            return t.fmt_ctx(f, TermCtx::ScaleBody);
                        }
                        write!(f, " - {pos} ")?;
                        return t.fmt_ctx(f, TermCtx::ScaleBody);
                    }
                }
                write!(f, " + ")?;
                b.fmt_ctx(f, TermCtx::SumRhs)
            }
            Term::Prod(a, b) => {
                a.fmt_ctx(f, TermCtx::ProdLhs)?;
                write!(f, " * ")?;
                b.fmt_ctx(f, TermCtx::ProdRhs)
            }
            Term::Scale(c, t) => {
                // Bare `q` reads back as Scale(q, One); q in {0, 1} still
                // needs the explicit `q 1` to stay distinct from One/Zero.
                if matches!(t.as_ref(), Term::One) && !c.is_zero() && !c.is_one() {
                    return write_coeff(f, c);
                }
                write_coeff(f, c)?;
                write!(f, " ")?;
                t.fmt_ctx(f, TermCtx::ScaleBody)
            }
        }
    }
}

/// Prints a coefficient as the lexer reads it back: a leading `-` negates the
/// whole fused scalar token that follows.
fn write_coeff(f: &mut fmt::Formatter<'_>, c: &CRat) -> fmt::Result {
    let neg_lead = c.re.is_negative() || (c.re.is_zero() && c.im.is_negative());
    if neg_lead {
        write!(f, "-{}", -c.clone())
    } else {
        write!(f, "{c}")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_ctx(f, TermCtx::Sum)
    }
}
