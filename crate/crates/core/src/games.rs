//! Synchronous nonlocal games over tracial matrix algebras: the PVM defect
//! and score formulas, dimension-p value search, deterministic (classical)
//! values, and the penalized relaxation with spectral rounding.
//!
//! Throughout, a strategy for an n-question m-answer game at dimension p is
//! a tuple of n PVMs (m projections summing to 1 each), flattened to the
//! variable layout x_{v,i} = variable v*m + i + 1.

use crate::eval::{eval_qf, maximize, Diagnostics, EvalResult, Objective, OptimizerConfig};
use crate::eval::BoundKind;
use crate::formula::Formula;
use crate::matrix::{
    gaussian_matrix, hermitian_eig, pvm_from_ranks, random_ranks, random_unitary, two_dist,
    ComplexMatrix, MatrixTuple, PVMTuple,
};
use crate::scalars::{rat_int, rat_to_f64, Rat};
use crate::terms::Term;
use crate::{Error, Result};
use num_complex::Complex64;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A nonlocal game: n questions per player, m answers, an exact rational
/// question distribution mu on pairs, and the accepting predicate D.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlocalGame {
    id: Option<String>,
    n: u32,
    m: u32,
    mu: Vec<Vec<Rat>>,
    d: Vec<Vec<Vec<Vec<bool>>>>,
}

impl NonlocalGame {
    pub fn new(
        id: Option<String>,
        n: u32,
        m: u32,
        mu: Vec<Vec<Rat>>,
        d: Vec<Vec<Vec<Vec<bool>>>>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("game needs n >= 1 and m >= 1".into()));
        }
        let (n_us, m_us) = (n as usize, m as usize);
        if mu.len() != n_us || mu.iter().any(|row| row.len() != n_us) {
            return Err(Error::Validation(format!("mu must be {n}x{n}")));
        }
        let mut total = Rat::zero();
        for row in &mu {
            for q in row {
                if q.is_negative() {
                    return Err(Error::Validation("mu entries must be >= 0".into()));
                }
                total += q;
            }
        }
        if !total.is_one() {
            return Err(Error::Validation(format!(
                "mu must sum to 1, got {}",
                crate::scalars::rat_str(&total)
            )));
        }
        let d_ok = d.len() == n_us
            && d.iter().all(|a| {
                a.len() == n_us
                    && a.iter().all(|b| b.len() == m_us && b.iter().all(|c| c.len() == m_us))
            });
        if !d_ok {
            return Err(Error::Validation(format!("D must be {n}x{n}x{m}x{m}")));
        }
        Ok(NonlocalGame { id, n, m, mu, d })
    }

    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    pub fn set_id(&mut self, id: String) {
        self.id = Some(id);
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn mu(&self, v: usize, w: usize) -> &Rat {
        &self.mu[v][w]
    }

    pub fn allowed(&self, v: usize, w: usize, i: usize, j: usize) -> bool {
        self.d[v][w][i][j]
    }

    /// Every question pair has positive probability.
    pub fn is_proper(&self) -> bool {
        self.mu.iter().all(|row| row.iter().all(|q| q.is_positive()))
    }

    /// On repeated questions only equal answers are accepted.
    pub fn is_synchronous(&self) -> bool {
        let m = self.m as usize;
        (0..self.n as usize)
            .all(|v| (0..m).all(|i| (0..m).all(|j| i == j || !self.d[v][v][i][j])))
    }
}

/// Wire format: mu entries are rational strings, D entries 0/1.
#[derive(Serialize, Deserialize)]
struct GameWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    n: u32,
    m: u32,
    mu: Vec<Vec<String>>,
    #[serde(rename = "D")]
    d: Vec<Vec<Vec<Vec<u8>>>>,
}

impl Serialize for NonlocalGame {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = GameWire {
            id: self.id.clone(),
            n: self.n,
            m: self.m,
            mu: self
                .mu
                .iter()
                .map(|row| row.iter().map(crate::scalars::rat_str).collect())
                .collect(),
            d: self
                .d
                .iter()
                .map(|a| {
                    a.iter()
                        .map(|b| b.iter().map(|c| c.iter().map(|&x| x as u8).collect()).collect())
                        .collect()
                })
                .collect(),
        };
        wire.serialize(s)
    }
}

impl<'de> Deserialize<'de> for NonlocalGame {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = GameWire::deserialize(d)?;
        let mu = wire
            .mu
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| {
                        crate::scalars::parse_rat(s)
                            .ok_or_else(|| serde::de::Error::custom(format!("bad rational: {s}")))
                    })
                    .collect()
            })
            .collect::<std::result::Result<Vec<Vec<Rat>>, D::Error>>()?;
        let accept = wire
            .d
            .iter()
            .map(|a| {
                a.iter()
                    .map(|b| b.iter().map(|c| c.iter().map(|&x| x != 0).collect()).collect())
                    .collect()
            })
            .collect();
        NonlocalGame::new(wire.id, wire.n, wire.m, mu, accept)
            .map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Game construction.

/// Simple undirected graph as `{"n": .., "edges": [[u, v], ..]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Graph {
    pub n: u32,
    pub edges: Vec<(u32, u32)>,
}

/// The synchronous m-coloring game of a graph: questions are vertices with
/// the uniform distribution on ordered pairs; repeated questions demand equal
/// colors, adjacent questions demand distinct colors, everything else is
/// accepted.
pub fn coloring_game(g: &Graph, m: u32) -> Result<NonlocalGame> {
    if g.n == 0 {
        return Err(Error::InvalidArgument("graph needs at least one vertex".into()));
    }
    let n = g.n as usize;
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in &g.edges {
        if u >= g.n || v >= g.n {
            return Err(Error::Validation(format!("edge ({u}, {v}) out of range")));
        }
        if u == v {
            return Err(Error::Validation(format!("self-loop at {u}")));
        }
        adj[u as usize][v as usize] = true;
        adj[v as usize][u as usize] = true;
    }
    let cell = Rat::one() / rat_int((n * n) as i64);
    let mu = vec![vec![cell; n]; n];
    let m_us = m as usize;
    let d = (0..n)
        .map(|v| {
            (0..n)
                .map(|w| {
                    (0..m_us)
                        .map(|i| {
                            (0..m_us)
                                .map(|j| {
                                    if v == w {
                                        i == j
                                    } else if adj[v][w] {
                                        i != j
                                    } else {
                                        true
                                    }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    NonlocalGame::new(Some(format!("coloring-n{}-m{m}", g.n)), g.n, m, mu, d)
}

/// Deterministic generator of proper synchronous games for tests and
/// benchmarks: mu gets small positive numerators normalized exactly, D is a
/// fair coin off the diagonal and equality on it.
pub fn random_game(n: u32, m: u32, seed: u64) -> Result<NonlocalGame> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("game needs n >= 1 and m >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_us = n as usize;
    let m_us = m as usize;
    let weights: Vec<Vec<i64>> =
        (0..n_us).map(|_| (0..n_us).map(|_| rng.gen_range(1..=9)).collect()).collect();
    let total: i64 = weights.iter().flatten().sum();
    let mu = weights
        .iter()
        .map(|row| row.iter().map(|&w| rat_int(w) / rat_int(total)).collect())
        .collect();
    let d = (0..n_us)
        .map(|v| {
            (0..n_us)
                .map(|w| {
                    (0..m_us)
                        .map(|i| {
                            (0..m_us)
                                .map(|j| {
                                    if v == w {
                                        i == j
                                    } else {
                                        rng.gen_range(0..2) == 1
                                    }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    NonlocalGame::new(Some(format!("random-n{n}-m{m}-s{seed}")), n, m, mu, d)
}

// ---------------------------------------------------------------------------
// Formulas and their fast evaluators.

fn game_var(v: usize, m: usize, i: usize) -> u32 {
    (v * m + i + 1) as u32
}

/// The PVM defect phi_{n,m}: max over groups and answers of the projection,
/// self-adjointness, and partition-of-unity residuals. Zero exactly on PVM
/// tuples, and every point is within O(phi) of one.
pub fn build_pvm_formula(n: u32, m: u32) -> Result<Formula> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("phi needs n >= 1 and m >= 1".into()));
    }
    let (n, m) = (n as usize, m as usize);
    let mut blocks = Vec::new();
    for v in 0..n {
        for i in 0..m {
            let x = Term::var(game_var(v, m, i));
            blocks.push(Formula::Norm2(Term::minus(Term::prod(x.clone(), x.clone()), x)));
        }
    }
    for v in 0..n {
        for i in 0..m {
            let x = Term::var(game_var(v, m, i));
            blocks.push(Formula::Norm2(Term::minus(Term::adj(x.clone()), x)));
        }
    }
    for v in 0..n {
        let mut sum = Term::var(game_var(v, m, 0));
        for i in 1..m {
            sum = Term::sum(sum, Term::var(game_var(v, m, i)));
        }
        blocks.push(Formula::Norm2(Term::minus(sum, Term::One)));
    }
    Ok(Formula::max_of(blocks))
}

/// The score psi of a game: sum over question pairs of mu(v,w) times the sum
/// of TraceRe(x_{v,i} x_{w,j}) over accepted answer pairs.
pub fn build_game_formula(game: &NonlocalGame) -> Formula {
    let (n, m) = (game.n as usize, game.m as usize);
    let mut parts = Vec::new();
    for v in 0..n {
        for w in 0..n {
            if game.mu[v][w].is_zero() {
                continue;
            }
            let mut traces = Vec::new();
            for i in 0..m {
                for j in 0..m {
                    if game.d[v][w][i][j] {
                        traces.push(Formula::TraceRe(Term::prod(
                            Term::var(game_var(v, m, i)),
                            Term::var(game_var(w, m, j)),
                        )));
                    }
                }
            }
            if !traces.is_empty() {
                parts.push(Formula::scale(game.mu[v][w].clone(), Formula::sum_of(traces)));
            }
        }
    }
    if parts.is_empty() {
        Formula::Const(Rat::zero())
    } else {
        Formula::sum_of(parts)
    }
}

/// Re tau(a b) without forming the product matrix.
fn trace_prod_re(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let p = a.nrows();
    let mut acc = 0.0;
    for r in 0..p {
        for c in 0..p {
            let x = a[(r, c)];
            let y = b[(c, r)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc / p as f64
}

/// Flattened games for hot loops: mu as f64 and D as an accepted-pair list.
struct FastGame {
    m: usize,
    terms: Vec<(usize, usize, f64, Vec<(usize, usize)>)>,
}

impl FastGame {
    fn new(game: &NonlocalGame) -> Self {
        let (n, m) = (game.n as usize, game.m as usize);
        let mut terms = Vec::new();
        for v in 0..n {
            for w in 0..n {
                if game.mu[v][w].is_zero() {
                    continue;
                }
                let pairs: Vec<(usize, usize)> = (0..m)
                    .flat_map(|i| (0..m).filter(move |&j| game.d[v][w][i][j]).map(move |j| (i, j)))
                    .collect();
                if !pairs.is_empty() {
                    terms.push((v, w, rat_to_f64(&game.mu[v][w]), pairs));
                }
            }
        }
        FastGame { m, terms }
    }

    fn psi_groups(&self, groups: &[Vec<ComplexMatrix>]) -> f64 {
        let mut acc = 0.0;
        for (v, w, mu, pairs) in &self.terms {
            let mut block = 0.0;
            for &(i, j) in pairs {
                block += trace_prod_re(&groups[*v][i], &groups[*w][j]);
            }
            acc += mu * block;
        }
        acc
    }

    fn psi_tuple(&self, t: &MatrixTuple) -> f64 {
        let m = self.m;
        let mut acc = 0.0;
        for (v, w, mu, pairs) in &self.terms {
            let mut block = 0.0;
            for &(i, j) in pairs {
                let a = t.get(game_var(*v, m, i)).expect("layout checked");
                let b = t.get(game_var(*w, m, j)).expect("layout checked");
                block += trace_prod_re(a, b);
            }
            acc += mu * block;
        }
        acc
    }
}

/// psi at a flattened strategy tuple; agrees with evaluating
/// build_game_formula to float precision.
pub fn psi_value(game: &NonlocalGame, t: &MatrixTuple) -> Result<f64> {
    check_layout(t, game.n as usize, game.m as usize)?;
    Ok(FastGame::new(game).psi_tuple(t))
}

/// phi_{n,m} at a flattened tuple; agrees with evaluating
/// build_pvm_formula to float precision.
pub fn phi_value(n: u32, m: u32, t: &MatrixTuple) -> Result<f64> {
    let (n, m) = (n as usize, m as usize);
    check_layout(t, n, m)?;
    let p = t.p();
    let id = ComplexMatrix::identity(p, p);
    let mut worst: f64 = 0.0;
    for v in 0..n {
        let mut sum = ComplexMatrix::zeros(p, p);
        for i in 0..m {
            let x = t.get(game_var(v, m, i))?;
            worst = worst.max(two_dist(&(x * x), x));
            worst = worst.max(two_dist(&x.adjoint(), x));
            sum += x;
        }
        worst = worst.max(two_dist(&sum, &id));
    }
    Ok(worst)
}

fn check_layout(t: &MatrixTuple, n: usize, m: usize) -> Result<()> {
    if t.n() != n * m {
        return Err(Error::DimensionMismatch(format!(
            "tuple has {} variables, expected n*m = {}",
            t.n(),
            n * m
        )));
    }
    Ok(())
}

/// Lipschitz constant of psi on near-PVM tuples, in the l1-of-2-norm metric:
/// max over questions v of (row mass + column mass of mu at v). Uses that a
/// subset-sum of one group's projections has operator norm at most 1, which
/// is why this beats the structural formula bound.
pub fn psi_lipschitz_bound(game: &NonlocalGame) -> Rat {
    let n = game.n as usize;
    let mut best = Rat::zero();
    for v in 0..n {
        let mut mass = Rat::zero();
        for w in 0..n {
            mass += &game.mu[v][w];
            mass += &game.mu[w][v];
        }
        if mass > best {
            best = mass;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Classical (deterministic) value.

/// Exact value over deterministic strategies: assignments of one answer per
/// question. Returns the value and the lexicographically first optimal
/// assignment. Costs m^n evaluations; errors past the budget.
pub fn deterministic_value(game: &NonlocalGame, budget: u128) -> Result<(Rat, Vec<usize>)> {
    let (n, m) = (game.n as usize, game.m as usize);
    let mut count: u128 = 1;
    for _ in 0..n {
        count = count
            .checked_mul(m as u128)
            .ok_or(Error::BudgetExceeded { required: u128::MAX, budget })?;
        if count > budget {
            return Err(Error::BudgetExceeded { required: count, budget });
        }
    }
    let mut assign = vec![0usize; n];
    let mut best: Option<(Rat, Vec<usize>)> = None;
    loop {
        let mut score = Rat::zero();
        for v in 0..n {
            for w in 0..n {
                if game.d[v][w][assign[v]][assign[w]] {
                    score += &game.mu[v][w];
                }
            }
        }
        match &best {
            Some((b, _)) if *b >= score => {}
            _ => best = Some((score, assign.clone())),
        }
        // Odometer step, most significant digit first for lex order.
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(best.expect("at least one assignment"));
            }
            k -= 1;
            assign[k] += 1;
            if assign[k] < m {
                break;
            }
            assign[k] = 0;
        }
    }
}

fn classical_pvm(game: &NonlocalGame, p: usize, assign: &[usize]) -> PVMTuple {
    let m = game.m as usize;
    let id = ComplexMatrix::identity(p, p);
    let groups = assign
        .iter()
        .map(|&a| {
            (0..m)
                .map(|i| if i == a { id.clone() } else { ComplexMatrix::zeros(p, p) })
                .collect()
        })
        .collect();
    PVMTuple::new(p, groups).expect("classical strategy is a PVM tuple")
}

// ---------------------------------------------------------------------------
// Spectral rounding onto the PVM variety.

#[derive(Clone, Debug, Serialize)]
pub struct RoundedPvm {
    pub pvm: PVMTuple,
    /// l1-of-2-norm distance from the input tuple to the rounded one.
    pub distance: f64,
    /// distance / phi(input); 0 when the input was already exact.
    pub constant: f64,
    /// Some eigenvalue gap below 1e-8 separated differently-assigned
    /// eigenvectors, so the assignment was numerically fragile.
    pub degenerate_spectrum: bool,
}

/// Rounds a near-PVM tuple to an exact PVM tuple: self-adjointify each group,
/// form the scored sum S_v = sum_i (i + 8/7) y_{v,i} with distinct weights,
/// and partition its eigenbasis by which y_{v,i} gives each eigenvector the
/// largest Rayleigh quotient (lowest index on ties). Errors with TooFar when
/// phi(input) > tol. Fixes exact PVM tuples and is idempotent.
pub fn round_to_pvm(a: &MatrixTuple, n: u32, m: u32, tol: f64) -> Result<RoundedPvm> {
    let (n_us, m_us) = (n as usize, m as usize);
    check_layout(a, n_us, m_us)?;
    let residual = phi_value(n, m, a)?;
    if residual > tol {
        return Err(Error::TooFar { residual, tol });
    }
    let p = a.p();
    let mut groups = Vec::with_capacity(n_us);
    let mut degenerate = false;
    for v in 0..n_us {
        let ys: Vec<ComplexMatrix> = (0..m_us)
            .map(|i| {
                let x = a.get(game_var(v, m_us, i)).expect("layout checked");
                (x + x.adjoint()) * Complex64::new(0.5, 0.0)
            })
            .collect();
        let mut scored = ComplexMatrix::zeros(p, p);
        for (i, y) in ys.iter().enumerate() {
            scored += y * Complex64::from(i as f64 + 1.0 + 1.0 / 7.0);
        }
        let (eigenvalues, basis) = hermitian_eig(&scored)?;
        let assignments: Vec<usize> = (0..p)
            .map(|k| {
                let u = basis.column(k);
                let mut arg = 0;
                let mut best = f64::NEG_INFINITY;
                for (i, y) in ys.iter().enumerate() {
                    let score = u.dotc(&(y * u)).re;
                    if score > best {
                        best = score;
                        arg = i;
                    }
                }
                arg
            })
            .collect();
        for k in 1..p {
            if (eigenvalues[k - 1] - eigenvalues[k]).abs() < 1e-8
                && assignments[k - 1] != assignments[k]
            {
                degenerate = true;
            }
        }
        let mut projections = vec![ComplexMatrix::zeros(p, p); m_us];
        for (k, &i) in assignments.iter().enumerate() {
            let u = basis.column(k);
            projections[i] += u * u.adjoint();
        }
        groups.push(projections);
    }
    let pvm = PVMTuple::new(p, groups)?;
    let distance = a.l1_two_dist(&pvm.flatten());
    let constant = if residual > 0.0 { distance / residual } else { 0.0 };
    Ok(RoundedPvm { pvm, distance, constant, degenerate_spectrum: degenerate })
}

// ---------------------------------------------------------------------------
// Synchronous correlations.

/// The correlation p(i,j|v,w) = tau(x_{v,i} x_{w,j}) of a PVM strategy.
#[derive(Clone, Debug, Serialize)]
pub struct SynchronousCorrelation {
    pub n: u32,
    pub m: u32,
    pub p: usize,
    /// values[v][w][i][j].
    pub values: Vec<Vec<Vec<Vec<f64>>>>,
}

impl SynchronousCorrelation {
    /// Largest deviation of a question pair's total mass from 1.
    pub fn row_sum_residual(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .map(|block| (block.iter().flatten().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest total mass on mismatched answers to a repeated question.
    pub fn synchronicity_residual(&self) -> f64 {
        let m = self.m as usize;
        (0..self.n as usize)
            .map(|v| {
                let block = &self.values[v][v];
                (0..m)
                    .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| block[i][j].abs()))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

pub fn correlation_from_pvms(pvm: &PVMTuple) -> SynchronousCorrelation {
    let (n, m) = (pvm.n(), pvm.m());
    let values = (0..n)
        .map(|v| {
            (0..n)
                .map(|w| {
                    (0..m)
                        .map(|i| {
                            (0..m)
                                .map(|j| trace_prod_re(&pvm.group(v)[i], &pvm.group(w)[j]))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    SynchronousCorrelation { n: n as u32, m: m as u32, p: pvm.p(), values }
}

// ---------------------------------------------------------------------------
// Dimension-p synchronous value search.

#[derive(Clone, Debug, Serialize)]
pub struct GameValueReport {
    pub game: String,
    pub p: usize,
    /// psi at the certificate: a true lower bound for the dimension-p
    /// synchronous value (hence for every trace embedding target).
    pub lower_bound: f64,
    #[serde(with = "crate::scalars::rat_opt_serde")]
    pub classical_value: Option<Rat>,
    pub synchronicity_residual: f64,
    pub certificate: PVMTuple,
    pub diagnostics: Diagnostics,
}

/// Enumerating more than this many joint rank patterns switches the search
/// to seeded sampling.
const MAX_EXHAUSTIVE_PATTERNS: u128 = 512;
/// Classical assignments are enumerated as a warm-start branch up to here.
pub const CLASSICAL_BRANCH_BUDGET: u128 = 4096;
/// Iterations between defect-cleaning snaps of the inner walk.
const SNAP_PERIOD: u64 = 64;

fn compositions(p: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=left {
            prefix.push(first);
            rec(left - first, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(p, m, &mut Vec::new(), &mut out);
    out
}

/// exp(i step H) for a random Gaussian Hermitian H: a near-identity unitary.
fn near_identity_unitary<R: Rng>(p: usize, step: f64, rng: &mut R) -> Result<ComplexMatrix> {
    let g = gaussian_matrix(p, 1.0, rng);
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let (eigenvalues, basis) = hermitian_eig(&h)?;
    let phases = ComplexMatrix::from_fn(p, p, |r, c| {
        if r == c {
            Complex64::from_polar(1.0, step * eigenvalues[r])
        } else {
            Complex64::zero()
        }
    });
    Ok(&basis * phases * basis.adjoint())
}

enum Branch {
    /// Exact classical strategy; invariant under conjugation, so no walk.
    Classical(Vec<usize>),
    /// Caller-provided PVM tuple to refine.
    Warm(usize),
    /// Basis projections with these per-group ranks, conjugated by a random
    /// unitary from the branch's stream before the walk.
    Ranks(Vec<Vec<usize>>),
}

/// Lower-bounds the dimension-p synchronous game value by hill climbing over
/// PVM tuples: an outer loop over per-group rank patterns (exhaustive when
/// the joint count is small, seeded sampling otherwise, plus the best
/// classical assignment and any caller-provided warm starts), and an inner
/// walk conjugating one group at a time by near-identity unitaries, with
/// periodic rounding snaps to keep the defect at float noise.
pub fn synchronous_value_lower_bound(
    game: &NonlocalGame,
    cfg: &OptimizerConfig,
    warm: &[PVMTuple],
) -> Result<GameValueReport> {
    cfg.validate()?;
    let p = cfg.p;
    let (n, m) = (game.n as usize, game.m as usize);
    for w in warm {
        if w.p() != p || w.n() != n || w.m() != m {
            return Err(Error::DimensionMismatch(
                "warm start shape does not match the game and dimension".into(),
            ));
        }
    }
    let fast = FastGame::new(game);
    let classical = deterministic_value(game, CLASSICAL_BRANCH_BUDGET).ok();

    let mut branches = Vec::new();
    if let Some((_, assign)) = &classical {
        branches.push(Branch::Classical(assign.clone()));
    }
    for k in 0..warm.len() {
        branches.push(Branch::Warm(k));
    }
    let per_group = compositions(p, m);
    let mut joint: u128 = 1;
    let mut exhaustive = true;
    for _ in 0..n {
        joint = match joint.checked_mul(per_group.len() as u128) {
            Some(j) if j <= MAX_EXHAUSTIVE_PATTERNS => j,
            _ => {
                exhaustive = false;
                break;
            }
        };
    }
    if exhaustive {
        let mut pattern = vec![0usize; n];
        loop {
            branches.push(Branch::Ranks(
                pattern.iter().map(|&k| per_group[k].clone()).collect(),
            ));
            let mut idx = n;
            loop {
                if idx == 0 {
                    break;
                }
                idx -= 1;
                pattern[idx] += 1;
                if pattern[idx] < per_group.len() {
                    break;
                }
                pattern[idx] = 0;
            }
            if pattern.iter().all(|&k| k == 0) {
                break;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0);
        for _ in 0..cfg.restarts {
            branches
                .push(Branch::Ranks((0..n).map(|_| random_ranks(p, m, &mut rng)).collect()));
        }
    }

    let runs: Vec<(f64, usize, PVMTuple)> = branches
        .par_iter()
        .enumerate()
        .map(|(b, branch)| -> Result<(f64, usize, PVMTuple)> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64 + 1);
            let (mut groups, walk) = match branch {
                Branch::Classical(assign) => {
                    (classical_pvm(game, p, assign).groups().to_vec(), false)
                }
                Branch::Warm(k) => (warm[*k].groups().to_vec(), p > 1),
                Branch::Ranks(ranks) => {
                    let groups = ranks
                        .iter()
                        .map(|r| pvm_from_ranks(r, &random_unitary(p, &mut rng)))
                        .collect();
                    (groups, p > 1)
                }
            };
            let mut best = fast.psi_groups(&groups);
            if walk {
                let mut step = cfg.initial_step;
                for it in 0..cfg.max_iterations {
                    let v = (it as usize) % n;
                    let u = near_identity_unitary(p, step, &mut rng)?;
                    let conjugated: Vec<ComplexMatrix> =
                        groups[v].iter().map(|x| &u * x * u.adjoint()).collect();
                    let old = std::mem::replace(&mut groups[v], conjugated);
                    let val = fast.psi_groups(&groups);
                    if val > best {
                        best = val;
                        step = (step * 1.1).min(cfg.initial_step);
                    } else {
                        groups[v] = old;
                        step = (step * cfg.step_decay).max(1e-7);
                    }
                    if (it + 1) % SNAP_PERIOD == 0 {
                        groups = snap_groups(groups, n as u32, m as u32)?;
                        best = fast.psi_groups(&groups);
                    }
                }
                groups = snap_groups(groups, n as u32, m as u32)?;
                best = fast.psi_groups(&groups);
            }
            Ok((best, b, PVMTuple::new(p, groups)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut chosen = &runs[0];
    for run in &runs[1..] {
        if run.0 > chosen.0 || (run.0 == chosen.0 && run.1 < chosen.1) {
            chosen = run;
        }
    }
    let certificate = chosen.2.clone();
    let lower_bound = fast.psi_groups(certificate.groups());
    let synchronicity_residual = correlation_from_pvms(&certificate).synchronicity_residual();
    Ok(GameValueReport {
        game: game.id.clone().unwrap_or_else(|| "unnamed".into()),
        p,
        lower_bound,
        classical_value: classical.map(|(value, _)| value),
        synchronicity_residual,
        certificate,
        diagnostics: Diagnostics {
            restarts: runs.len(),
            iterations: runs.len() as u64 * cfg.max_iterations,
            seed: cfg.seed,
        },
    })
}

fn snap_groups(groups: Vec<Vec<ComplexMatrix>>, n: u32, m: u32) -> Result<Vec<Vec<ComplexMatrix>>> {
    let p = groups[0][0].nrows();
    let flat = PVMTuple::new(p, groups)?.flatten();
    // Conjugation keeps the defect at float noise; 1e-3 only guards against
    // a genuinely broken walk.
    let rounded = round_to_pvm(&flat, n, m, 1e-3)?;
    Ok(rounded.pvm.groups().to_vec())
}

// ---------------------------------------------------------------------------
// Penalized relaxation.

#[derive(Clone, Debug, Serialize)]
pub struct RelaxedGameReport {
    /// Lower bound for sup over contraction tuples of psi -. beta*phi, with
    /// the unconstrained certificate.
    pub relaxed: EvalResult,
    /// psi at the rounded certificate: a true PVM-strategy value.
    pub rounded_value: f64,
    pub rounded_distance: f64,
    pub degenerate_spectrum: bool,
    pub rounded: PVMTuple,
}

/// Maximizes psi -. beta*phi over unconstrained contraction tuples, then
/// rounds the certificate onto the PVM variety and reports both values. The
/// relaxed value dominates the constrained one; the rounded value is again a
/// certified lower bound.
pub fn relaxed_game_value(
    game: &NonlocalGame,
    beta: &Rat,
    cfg: &OptimizerConfig,
) -> Result<RelaxedGameReport> {
    cfg.validate()?;
    if beta.is_negative() {
        return Err(Error::InvalidArgument("beta must be >= 0".into()));
    }
    let (n, m) = (game.n, game.m);
    let fast = FastGame::new(game);
    let beta_f = rat_to_f64(beta);
    let clamped = |t: &MatrixTuple| {
        let phi = phi_value(n, m, t).unwrap_or(f64::INFINITY);
        (fast.psi_tuple(t) - beta_f * phi).max(0.0)
    };
    let soft = |t: &MatrixTuple| {
        let phi = phi_value(n, m, t).unwrap_or(f64::INFINITY);
        fast.psi_tuple(t) - beta_f * phi
    };
    let warm: Vec<MatrixTuple> = deterministic_value(game, CLASSICAL_BRANCH_BUDGET)
        .ok()
        .map(|(_, assign)| classical_pvm(game, cfg.p, &assign).flatten())
        .into_iter()
        .collect();
    let outcome = maximize(
        (n * m) as usize,
        cfg,
        &Objective { clamped: &clamped, soft: Some(&soft) },
        &warm,
    )?;
    let body = Formula::dot_minus(
        build_game_formula(game),
        Formula::scale(beta.clone(), build_pvm_formula(n, m)?),
    );
    let value = eval_qf(&body, &outcome.tuple)?;
    let rounded = round_to_pvm(&outcome.tuple, n, m, f64::INFINITY)?;
    let rounded_value = fast.psi_groups(rounded.pvm.groups());
    Ok(RelaxedGameReport {
        relaxed: EvalResult {
            value,
            bound_kind: BoundKind::LowerBoundOfSup,
            certificate: Some(outcome.tuple),
            diagnostics: Diagnostics {
                restarts: cfg.restarts.max(warm.len()),
                iterations: outcome.iterations,
                seed: cfg.seed,
            },
        },
        rounded_value,
        rounded_distance: rounded.distance,
        degenerate_spectrum: rounded.degenerate_spectrum,
        rounded: rounded.pvm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::random_pvm_tuple;
    use crate::scalars::rat;

    fn triangle() -> Graph {
        Graph { n: 3, edges: vec![(0, 1), (1, 2), (0, 2)] }
    }

    fn k5() -> Graph {
        let edges =
            (0..5).flat_map(|u| (u + 1..5).map(move |v| (u, v))).collect();
        Graph { n: 5, edges }
    }

    fn test_cfg(p: usize, seed: u64) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::new(p, seed);
        cfg.restarts = 8;
        cfg.max_iterations = 400;
        cfg
    }

    #[test]
    fn game_wire_round_trip() {
        let game = coloring_game(&triangle(), 3).unwrap();
        assert!(game.is_proper());
        assert!(game.is_synchronous());
        let json = serde_json::to_string(&game).unwrap();
        assert!(json.contains("\"1/9\""));
        let back: NonlocalGame = serde_json::from_str(&json).unwrap();
        assert_eq!(back, game);

        let bad = json.replacen("\"1/9\"", "\"2/9\"", 1);
        assert!(serde_json::from_str::<NonlocalGame>(&bad).is_err(), "mu sum check");
    }

    #[test]
    fn synchrony_and_properness_detect_violations() {
        let game = random_game(3, 2, 5).unwrap();
        assert!(game.is_proper());
        assert!(game.is_synchronous());

        let mut d = game.d.clone();
        d[1][1][0][1] = true;
        let loud = NonlocalGame::new(None, 3, 2, game.mu.clone(), d).unwrap();
        assert!(!loud.is_synchronous());

        let mut mu = game.mu.clone();
        let shifted = mu[0][0].clone();
        mu[0][0] = Rat::zero();
        mu[0][1] += shifted;
        let sparse = NonlocalGame::new(None, 3, 2, mu, game.d.clone()).unwrap();
        assert!(!sparse.is_proper());
    }

    #[test]
    fn classical_coloring_values() {
        let tri3 = coloring_game(&triangle(), 3).unwrap();
        let (value, assign) = deterministic_value(&tri3, 1 << 20).unwrap();
        assert_eq!(value, rat(1, 1));
        assert_eq!(assign, vec![0, 1, 2]);

        let tri2 = coloring_game(&triangle(), 2).unwrap();
        assert_eq!(deterministic_value(&tri2, 1 << 20).unwrap().0, rat(7, 9));

        let k5c = coloring_game(&k5(), 3).unwrap();
        assert_eq!(deterministic_value(&k5c, 1 << 20).unwrap().0, rat(21, 25));

        match deterministic_value(&k5c, 100) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert_eq!(required, 243);
                assert_eq!(budget, 100);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn formulas_agree_with_fast_evaluators() {
        let game = random_game(2, 3, 11).unwrap();
        let psi = build_game_formula(&game);
        let phi = build_pvm_formula(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mats =
                (0..6).map(|_| crate::matrix::random_contraction(2, &mut rng)).collect();
            let t = MatrixTuple::new(2, mats).unwrap();
            assert!((eval_qf(&psi, &t).unwrap() - psi_value(&game, &t).unwrap()).abs() < 1e-12);
            assert!((eval_qf(&phi, &t).unwrap() - phi_value(2, 3, &t).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_is_quantifier_free_and_sup_closure_is_universal() {
        use crate::formula::{classify, Classification};
        for &(n, m) in &[(1u32, 1u32), (2, 3), (3, 2)] {
            let phi = build_pvm_formula(n, m).unwrap();
            assert_eq!(classify(&phi), Classification::QuantifierFree);
            let closed = Formula::sup((1..=n * m).collect(), phi);
            assert_eq!(classify(&closed), Classification::Universal);
            assert!(closed.free_vars().is_empty());
        }
    }

    #[test]
    fn phi_vanishes_on_pvms_and_tracks_perturbations() {
        let pvm = random_pvm_tuple(3, 2, 3, 21).unwrap();
        assert!(phi_value(2, 3, &pvm.flatten()).unwrap() <= 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for &eps in &[1e-2, 1e-3] {
            let mut t = pvm.flatten();
            for var in 1..=6u32 {
                let g = gaussian_matrix(3, 1.0, &mut rng);
                let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
                let h = &h * Complex64::from(1.0 / crate::matrix::operator_norm(&h).max(1e-12));
                t.set(var, t.get(var).unwrap() + h * Complex64::from(eps));
            }
            let phi = phi_value(2, 3, &t).unwrap();
            assert!(phi <= 5.0 * eps, "phi {phi} vs eps {eps}");
            assert!(phi > 0.0);
        }
    }

    #[test]
    fn rounding_fixes_exact_pvms() {
        let pvm = random_pvm_tuple(4, 2, 3, 31).unwrap();
        let rounded = round_to_pvm(&pvm.flatten(), 2, 3, 1e-6).unwrap();
        assert!(rounded.distance <= 1e-9, "distance {}", rounded.distance);
        assert!(!rounded.degenerate_spectrum);
        assert!(rounded.pvm.residual() <= 1e-10);

        let again = round_to_pvm(&rounded.pvm.flatten(), 2, 3, 1e-6).unwrap();
        assert!(rounded.pvm.flatten().l1_two_dist(&again.pvm.flatten()) <= 1e-10);
    }

    #[test]
    fn rounding_repairs_perturbations() {
        let pvm = random_pvm_tuple(3, 2, 2, 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut t = pvm.flatten();
        let eps = 1e-3;
        for var in 1..=4u32 {
            let g = gaussian_matrix(3, 1.0, &mut rng);
            let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
            let h = &h * Complex64::from(eps / crate::matrix::operator_norm(&h).max(1e-12));
            t.set(var, t.get(var).unwrap() + h);
        }
        let rounded = round_to_pvm(&t, 2, 2, 0.5).unwrap();
        assert!(rounded.pvm.residual() <= 1e-10);
        // Perturbed by at most eps per projection, so the round trip stays
        // within a small multiple of the total perturbation.
        assert!(rounded.distance <= 10.0 * 2.0 * eps, "distance {}", rounded.distance);
        let back = psi_value(
            &coloring_game(&triangle(), 2).unwrap(),
            &rounded.pvm.flatten(),
        );
        assert!(back.is_err(), "layout mismatch must error");
    }

    #[test]
    fn rounding_rejects_far_points_and_flags_degeneracy() {
        let zeros = MatrixTuple::zeros(2, 4);
        match round_to_pvm(&zeros, 2, 2, 0.5) {
            Err(Error::TooFar { residual, tol }) => {
                assert!((residual - 1.0).abs() < 1e-12);
                assert_eq!(tol, 0.5);
            }
            other => panic!("expected TooFar, got {other:?}"),
        }
        // Generous tolerance: everything collapses to the first answer.
        let rounded = round_to_pvm(&zeros, 2, 2, 2.0).unwrap();
        assert!(rounded.pvm.residual() <= 1e-12);

        let e = 1e-10;
        let x0 = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(0.5 + e, 0.0),
            Complex64::new(0.5 - e, 0.0),
        ]));
        let x1 = ComplexMatrix::identity(2, 2) - &x0;
        let t = MatrixTuple::new(2, vec![x0, x1]).unwrap();
        let rounded = round_to_pvm(&t, 1, 2, 1.0).unwrap();
        assert!(rounded.degenerate_spectrum, "near-degenerate split must warn");
    }

    #[test]
    fn correlations_are_synchronous_probabilities() {
        let pvm = random_pvm_tuple(4, 3, 3, 51).unwrap();
        let corr = correlation_from_pvms(&pvm);
        assert!(corr.row_sum_residual() <= 1e-10);
        assert!(corr.synchronicity_residual() <= 1e-10);
        for block in corr.values.iter().flatten() {
            for x in block.iter().flatten() {
                assert!(*x >= -1e-10);
            }
        }
    }

    #[test]
    fn exhaustive_scalar_search_matches_deterministic() {
        for seed in [1u64, 2, 3] {
            let game = random_game(3, 2, seed).unwrap();
            let report =
                synchronous_value_lower_bound(&game, &test_cfg(1, 7), &[]).unwrap();
            let (classical, _) = deterministic_value(&game, 1 << 20).unwrap();
            assert!(
                (report.lower_bound - rat_to_f64(&classical)).abs() < 1e-9,
                "seed {seed}: {} vs {}",
                report.lower_bound,
                rat_to_f64(&classical)
            );
            report.certificate.validate(1e-8).unwrap();
            assert!(report.synchronicity_residual <= 1e-8);
        }
    }

    #[test]
    fn triangle_search_reaches_one() {
        let game = coloring_game(&triangle(), 3).unwrap();
        for p in [1usize, 3] {
            let mut cfg = test_cfg(p, 9);
            cfg.max_iterations = 200;
            let report = synchronous_value_lower_bound(&game, &cfg, &[]).unwrap();
            assert!(report.lower_bound >= 1.0 - 1e-6, "p={p}: {}", report.lower_bound);
            assert!(report.lower_bound <= 1.0 + 1e-9);
            assert_eq!(report.classical_value, Some(rat(1, 1)));
        }
    }

    #[test]
    fn warm_start_is_never_lost() {
        let game = random_game(2, 3, 77).unwrap();
        let mut cfg = test_cfg(2, 5);
        cfg.restarts = 2;
        cfg.max_iterations = 50;
        let first = synchronous_value_lower_bound(&game, &cfg, &[]).unwrap();
        let again =
            synchronous_value_lower_bound(&game, &cfg, &[first.certificate.clone()]).unwrap();
        assert!(again.lower_bound >= first.lower_bound - 1e-12);
    }

    #[test]
    fn relaxed_triangle_recovers_coloring() {
        let game = coloring_game(&triangle(), 3).unwrap();
        let mut cfg = test_cfg(1, 13);
        cfg.max_iterations = 600;
        let report = relaxed_game_value(&game, &rat(10, 1), &cfg).unwrap();
        assert!(report.relaxed.value >= 1.0 - 1e-4, "relaxed {}", report.relaxed.value);
        assert!(report.rounded_value >= 1.0 - 1e-6, "rounded {}", report.rounded_value);
        assert!(report.rounded.residual() <= 1e-10);
    }

    #[test]
    fn lipschitz_bound_is_the_worst_question_mass() {
        let tri = coloring_game(&triangle(), 3).unwrap();
        assert_eq!(psi_lipschitz_bound(&tri), rat(2, 3));
        let skew = NonlocalGame::new(
            None,
            2,
            2,
            vec![vec![rat(1, 2), rat(1, 2)], vec![Rat::zero(), Rat::zero()]],
            vec![vec![vec![vec![true; 2]; 2]; 2]; 2],
        )
        .unwrap();
        // Question 0 carries all outgoing mass plus the shared entry.
        assert_eq!(psi_lipschitz_bound(&skew), rat(3, 2));
    }

    #[test]
    fn report_serialization_shape() {
        let game = coloring_game(&triangle(), 2).unwrap();
        let report = synchronous_value_lower_bound(&game, &test_cfg(1, 3), &[]).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["game"], "coloring-n3-m2");
        assert_eq!(json["classical_value"], "7/9");
        assert!(json["certificate"]["groups"].is_array() || json["certificate"].is_object());
    }
}
