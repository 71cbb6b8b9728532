//! Lexer and recursive-descent parser for terms and formulas.
//!
//! The concrete syntax is the printers' output language, and the two are
//! exact inverses: `parse(print(ast)) == ast` structurally, for every AST.
//! The parser also accepts some spellings the printers never emit (extra
//! parentheses, `2` for `2 1`); those normalize on reprint.
//!
//! Lexical notes. `-` is always its own token except in two fused positions:
//! `-.` is the truncated-difference operator, and a sign directly between a
//! rational and an imaginary tail binds into one complex scalar token
//! (`1/2-3/4i`). Fusion requires adjacency; `1 - 3/4i` is a subtraction.

use crate::formula::{Formula, Sentence};
use crate::scalars::{CRat, Rat};
use crate::terms::Term;
use crate::{Error, Result};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};

pub fn parse_term(src: &str) -> Result<Term> {
    let mut p = Parser::new(src)?;
    let t = p.tsum()?;
    p.expect_end()?;
    Ok(t)
}

pub fn parse_formula(src: &str) -> Result<Formula> {
    let mut p = Parser::new(src)?;
    let f = p.formula()?;
    p.expect_end()?;
    Ok(f)
}

/// Parses a formula and requires it to be closed.
pub fn parse_sentence(src: &str) -> Result<Sentence> {
    Sentence::new(parse_formula(src)?)
}

// ---------------------------------------------------------------------------
// Lexer.

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(CRat),
    Var(u32),
    Ident(String),
    Plus,
    Minus,
    DotMinus,
    Star,
    Quote,
    Dot,
    LParen,
    RParen,
    Comma,
}

fn tok_desc(t: &Tok) -> String {
    match t {
        Tok::Num(c) => format!("number `{c}`"),
        Tok::Var(i) => format!("variable `x{i}`"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::DotMinus => "`-.`".into(),
        Tok::Star => "`*`".into(),
        Tok::Quote => "`'`".into(),
        Tok::Dot => "`.`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: usize,
}

struct Lexer<'a> {
    src: &'a [u8],
    i: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), i: 0 }
    }

    fn cur(&self) -> Option<u8> {
        self.src.get(self.i).copied()
    }

    fn digits(&mut self) -> BigInt {
        let start = self.i;
        while matches!(self.cur(), Some(b'0'..=b'9')) {
            self.i += 1;
        }
        std::str::from_utf8(&self.src[start..self.i]).unwrap().parse().unwrap()
    }

    /// digits ('/' digits)?, the '/' binding only when a digit follows.
    fn rational(&mut self) -> Result<Rat> {
        let num = self.digits();
        if self.cur() == Some(b'/') && matches!(self.src.get(self.i + 1), Some(b'0'..=b'9')) {
            self.i += 1;
            let den = self.digits();
            if den.is_zero() {
                return Err(Error::Syntax {
                    pos: self.i,
                    expected: "nonzero denominator".into(),
                    found: "0".into(),
                });
            }
            Ok(Rat::new(num, den))
        } else {
            Ok(Rat::from_integer(num))
        }
    }

    /// A scalar token: rational, `Ri` imaginary, or fused `R+Ri` / `R-Ri`.
    /// The fused tail must be complete and adjacent or we back off to the
    /// plain rational.
    fn number(&mut self) -> Result<Tok> {
        let re = self.rational()?;
        if self.cur() == Some(b'i') {
            self.i += 1;
            return Ok(Tok::Num(CRat::new(Rat::zero(), re)));
        }
        if let Some(sign @ (b'+' | b'-')) = self.cur() {
            let save = self.i;
            self.i += 1;
            if matches!(self.cur(), Some(b'0'..=b'9')) {
                let im = self.rational()?;
                if self.cur() == Some(b'i') {
                    self.i += 1;
                    let im = if sign == b'-' { -im } else { im };
                    return Ok(Tok::Num(CRat::new(re, im)));
                }
            }
            self.i = save;
        }
        Ok(Tok::Num(CRat::new(re, Rat::zero())))
    }

    fn run(mut self) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        while let Some(c) = self.cur() {
            let pos = self.i;
            let tok = match c {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    self.i += 1;
                    continue;
                }
                b'0'..=b'9' => self.number()?,
                b'a'..=b'z' | b'A'..=b'Z' => {
                    let start = self.i;
                    while matches!(self.cur(), Some(b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9')) {
                        self.i += 1;
                    }
                    let word = std::str::from_utf8(&self.src[start..self.i]).unwrap();
                    if let Some(rest) = word.strip_prefix('x') {
                        if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                            let idx: u32 = rest.parse().map_err(|_| Error::Syntax {
                                pos: start,
                                expected: "variable index that fits in u32".into(),
                                found: format!("`{word}`"),
                            })?;
                            out.push(Token { tok: Tok::Var(idx), pos: start });
                            continue;
                        }
                    }
                    out.push(Token { tok: Tok::Ident(word.to_string()), pos: start });
                    continue;
                }
                b'+' => {
                    self.i += 1;
                    Tok::Plus
                }
                b'-' => {
                    self.i += 1;
                    if self.cur() == Some(b'.') {
                        self.i += 1;
                        Tok::DotMinus
                    } else {
                        Tok::Minus
                    }
                }
                b'*' => {
                    self.i += 1;
                    Tok::Star
                }
                b'\'' => {
                    self.i += 1;
                    Tok::Quote
                }
                b'.' => {
                    self.i += 1;
                    Tok::Dot
                }
                b'(' => {
                    self.i += 1;
                    Tok::LParen
                }
                b')' => {
                    self.i += 1;
                    Tok::RParen
                }
                b',' => {
                    self.i += 1;
                    Tok::Comma
                }
                other => {
                    return Err(Error::Syntax {
                        pos,
                        expected: "token".into(),
                        found: format!("`{}`", other as char),
                    })
                }
            };
            out.push(Token { tok, pos });
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Parser.

struct Parser {
    toks: Vec<Token>,
    i: usize,
    end: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Parser> {
        let toks = Lexer::new(src).run()?;
        Ok(Parser { toks, i: 0, end: src.len() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |t| t.pos)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        self.i += 1;
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn err_here(&self, expected: &str) -> Error {
        Error::Syntax {
            pos: self.pos(),
            expected: expected.into(),
            found: self.peek().map_or_else(|| "end of input".into(), tok_desc),
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.err_here(what))
        }
    }

    fn expect_end(&self) -> Result<()> {
        if self.i == self.toks.len() {
            Ok(())
        } else {
            Err(self.err_here("end of input"))
        }
    }

    // -- terms --------------------------------------------------------------

    fn tsum(&mut self) -> Result<Term> {
        let mut acc = self.signed_prod()?;
        loop {
            if self.eat(&Tok::Plus) {
                let rhs = self.signed_prod()?;
                acc = Term::sum(acc, rhs);
            } else if self.eat(&Tok::Minus) {
                let rhs = self.unsigned_prod(false)?;
                acc = Term::minus(acc, rhs);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn signed_prod(&mut self) -> Result<Term> {
        let neg = self.eat(&Tok::Minus);
        self.unsigned_prod(neg)
    }

    /// `[coef] factor (* factor)*`; the coefficient scales the whole chain.
    /// A lone number is `q 1`; a number in factor position must be 0 or 1.
    fn unsigned_prod(&mut self, neg: bool) -> Result<Term> {
        if let Some(Tok::Num(_)) = self.peek() {
            let qpos = self.pos();
            let q = match self.bump() {
                Tok::Num(q) => q,
                _ => unreachable!(),
            };
            let c = if neg { -q.clone() } else { q.clone() };
            return Ok(match self.peek() {
                Some(Tok::Var(_) | Tok::LParen | Tok::Num(_)) => Term::scale(c, self.chain()?),
                Some(Tok::Quote | Tok::Star) => {
                    let base = self.postfix(num_atom(qpos, q)?)?;
                    let t = self.chain_cont(base)?;
                    if neg {
                        Term::scale(CRat::from_int(-1), t)
                    } else {
                        t
                    }
                }
                _ => {
                    if neg {
                        Term::scale(c, Term::One)
                    } else if q.is_one() {
                        Term::One
                    } else if q.is_zero() {
                        Term::Zero
                    } else {
                        Term::scale(q, Term::One)
                    }
                }
            });
        }
        let t = self.chain()?;
        Ok(if neg { Term::scale(CRat::from_int(-1), t) } else { t })
    }

    fn chain(&mut self) -> Result<Term> {
        let first = self.postfix_atom()?;
        self.chain_cont(first)
    }

    fn chain_cont(&mut self, mut acc: Term) -> Result<Term> {
        while self.eat(&Tok::Star) {
            let rhs = self.postfix_atom()?;
            acc = Term::prod(acc, rhs);
        }
        Ok(acc)
    }

    fn postfix_atom(&mut self) -> Result<Term> {
        let a = self.atom()?;
        self.postfix(a)
    }

    fn postfix(&mut self, mut t: Term) -> Result<Term> {
        while self.eat(&Tok::Quote) {
            t = Term::adj(t);
        }
        Ok(t)
    }

    fn atom(&mut self) -> Result<Term> {
        match self.peek() {
            Some(Tok::Var(_)) => {
                let i = match self.bump() {
                    Tok::Var(i) => i,
                    _ => unreachable!(),
                };
                Ok(Term::Var(i))
            }
            Some(Tok::LParen) => {
                self.bump();
                let t = self.tsum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Some(Tok::Num(_)) => {
                let pos = self.pos();
                let q = match self.bump() {
                    Tok::Num(q) => q,
                    _ => unreachable!(),
                };
                num_atom(pos, q)
            }
            _ => Err(self.err_here("term")),
        }
    }

    // -- formulas -----------------------------------------------------------

    fn formula(&mut self) -> Result<Formula> {
        if matches!(self.peek(), Some(Tok::Ident(k)) if k == "sup" || k == "inf") {
            let kw = match self.bump() {
                Tok::Ident(k) => k,
                _ => unreachable!(),
            };
            let mut vars = Vec::new();
            while let Some(Tok::Var(_)) = self.peek() {
                if let Tok::Var(i) = self.bump() {
                    vars.push(i);
                }
            }
            if vars.is_empty() {
                return Err(self.err_here("quantified variable"));
            }
            self.expect(Tok::Dot, "`.`")?;
            let body = self.formula()?;
            return Ok(if kw == "sup" {
                Formula::sup(vars, body)
            } else {
                Formula::inf(vars, body)
            });
        }
        self.fsum()
    }

    fn fsum(&mut self) -> Result<Formula> {
        let mut acc = self.fterm()?;
        loop {
            if self.eat(&Tok::Plus) {
                acc = Formula::add(acc, self.fterm()?);
            } else if self.eat(&Tok::DotMinus) {
                acc = Formula::dot_minus(acc, self.fterm()?);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    /// `[coef] unit (* unit)*`; a lone number is a constant. Formula scalars
    /// must be non-negative rationals.
    fn fterm(&mut self) -> Result<Formula> {
        if let Some(Tok::Minus) = self.peek() {
            return Err(Error::ScaleNegative { pos: self.pos() });
        }
        if let Some(Tok::Num(_)) = self.peek() {
            let pos = self.pos();
            let q = match self.bump() {
                Tok::Num(q) => q,
                _ => unreachable!(),
            };
            let q = formula_scalar(pos, q)?;
            return if self.funit_start() {
                Ok(Formula::scale(q, self.fchain()?))
            } else if self.peek() == Some(&Tok::Star) {
                self.fchain_cont(Formula::Const(q))
            } else {
                Ok(Formula::Const(q))
            };
        }
        self.fchain()
    }

    fn funit_start(&self) -> bool {
        match self.peek() {
            Some(Tok::Num(_) | Tok::LParen) => true,
            Some(Tok::Ident(k)) => {
                matches!(k.as_str(), "norm2" | "trRe" | "trIm" | "max" | "min" | "half")
            }
            _ => false,
        }
    }

    fn fchain(&mut self) -> Result<Formula> {
        let first = self.funit()?;
        self.fchain_cont(first)
    }

    fn fchain_cont(&mut self, mut acc: Formula) -> Result<Formula> {
        while self.eat(&Tok::Star) {
            acc = Formula::mul(acc, self.funit()?);
        }
        Ok(acc)
    }

    fn funit(&mut self) -> Result<Formula> {
        match self.peek() {
            Some(Tok::Minus) => Err(Error::ScaleNegative { pos: self.pos() }),
            Some(Tok::LParen) => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Num(_)) => {
                let pos = self.pos();
                let q = match self.bump() {
                    Tok::Num(q) => q,
                    _ => unreachable!(),
                };
                Ok(Formula::Const(formula_scalar(pos, q)?))
            }
            Some(Tok::Ident(k)) => match k.as_str() {
                "norm2" | "trRe" | "trIm" => {
                    let kw = match self.bump() {
                        Tok::Ident(k) => k,
                        _ => unreachable!(),
                    };
                    self.expect(Tok::LParen, "`(`")?;
                    let t = self.tsum()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(match kw.as_str() {
                        "norm2" => Formula::Norm2(t),
                        "trRe" => Formula::TraceRe(t),
                        _ => Formula::TraceIm(t),
                    })
                }
                "max" | "min" => {
                    let kw = match self.bump() {
                        Tok::Ident(k) => k,
                        _ => unreachable!(),
                    };
                    self.expect(Tok::LParen, "`(`")?;
                    let a = self.formula()?;
                    self.expect(Tok::Comma, "`,`")?;
                    let b = self.formula()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(if kw == "max" { Formula::fmax(a, b) } else { Formula::fmin(a, b) })
                }
                "half" => {
                    self.bump();
                    self.expect(Tok::LParen, "`(`")?;
                    let f = self.formula()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Formula::half(f))
                }
                _ => Err(self.err_here("formula")),
            },
            _ => Err(self.err_here("formula")),
        }
    }
}

/// A number in term-factor position must be the constant 0 or 1; other
/// scalars need a scale position or parentheses.
fn num_atom(pos: usize, q: CRat) -> Result<Term> {
    if q.is_one() {
        Ok(Term::One)
    } else if q.is_zero() {
        Ok(Term::Zero)
    } else {
        Err(Error::Syntax {
            pos,
            expected: "term factor (scalars other than 0/1 belong before the product)".into(),
            found: format!("number `{q}`"),
        })
    }
}

fn formula_scalar(pos: usize, q: CRat) -> Result<Rat> {
    if !q.is_real() {
        return Err(Error::Syntax {
            pos,
            expected: "nonnegative rational".into(),
            found: format!("complex scalar `{q}`"),
        });
    }
    if q.re.is_negative() {
        return Err(Error::ScaleNegative { pos });
    }
    Ok(q.re)
}
