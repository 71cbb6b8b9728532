//! Dense complex p x p matrix algebra with the normalized trace tau
//! (tau(1) = 1), the induced 2-norm, contraction projection, spectral
//! tools, and seeded generation of contractions and PVMs.
//!
//! All randomness takes explicit seeds or caller-owned RNGs; nothing here
//! reads global state.

use crate::{Error, Result};
use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type ComplexMatrix = DMatrix<Complex64>;

/// tau(a) = Tr(a) / p.
pub fn normalized_trace(a: &ComplexMatrix) -> Complex64 {
    debug_assert_eq!(a.nrows(), a.ncols());
    a.trace() / (a.nrows() as f64)
}

/// ||a||_2 = sqrt(tau(a* a)) = Frobenius norm / sqrt(p).
pub fn two_norm(a: &ComplexMatrix) -> f64 {
    debug_assert_eq!(a.nrows(), a.ncols());
    a.norm() / (a.nrows() as f64).sqrt()
}

/// ||a - b||_2 without mutating either argument.
pub fn two_dist(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    two_norm(&(a - b))
}

/// Largest singular value.
pub fn operator_norm(a: &ComplexMatrix) -> f64 {
    a.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Largest entry modulus. Cheap sanity metric for near-equality checks.
pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Nearest contraction: singular values clipped at 1, unitary factors kept.
/// This is the metric projection onto the operator-norm unit ball in the
/// Frobenius (hence 2-norm) metric, so it is nonexpansive; contractions are
/// returned unchanged.
pub fn project_to_contraction(a: &ComplexMatrix) -> ComplexMatrix {
    if operator_norm(a) <= 1.0 + 1e-12 {
        return a.clone();
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let clipped = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values.iter().map(|s| Complex64::new(s.min(1.0), 0.0)),
    );
    &u * DMatrix::from_diagonal(&clipped) * v_t
}

/// Hermitian eigendecomposition with deterministic ordering: eigenvalues
/// descending (ties kept in input order), each eigenvector's first
/// significant component rotated to be real positive.
///
/// Fails with NotHermitian when ||a - a*||_2 > 1e-8; smaller asymmetries are
/// symmetrized away before decomposing.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let asym = two_dist(&a.adjoint(), a);
    if asym > 1e-8 {
        return Err(Error::NotHermitian { residual: asym });
    }
    let sym = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let p = a.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = ComplexMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let phase = col
            .iter()
            .find(|z| z.norm() > 1e-12)
            .map(|z| z.conj() / z.norm())
            .unwrap_or(Complex64::new(1.0, 0.0));
        for r in 0..p {
            vectors[(r, dst)] = col[r] * phase;
        }
    }
    Ok((values, vectors))
}

/// One pair of independent standard normals (Box-Muller).
pub fn std_normal_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (r * th.cos(), r * th.sin())
}

/// p x p matrix with iid complex Gaussian entries of the given scale,
/// filled column-major so the draw order is fixed.
pub fn gaussian_matrix<R: Rng>(p: usize, scale: f64, rng: &mut R) -> ComplexMatrix {
    let entries: Vec<Complex64> = (0..p * p)
        .map(|_| {
            let (re, im) = std_normal_pair(rng);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    ComplexMatrix::from_vec(p, p, entries)
}

/// Seeded random contraction: a Gaussian matrix pushed inside the unit ball.
pub fn random_contraction<R: Rng>(p: usize, rng: &mut R) -> ComplexMatrix {
    let g = gaussian_matrix(p, 0.5 / (p as f64).sqrt(), rng);
    project_to_contraction(&g)
}

/// Haar-like random unitary: QR of a Ginibre matrix with the R diagonal's
/// phases folded into Q.
pub fn random_unitary<R: Rng>(p: usize, rng: &mut R) -> ComplexMatrix {
    let g = gaussian_matrix(p, 1.0, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..p {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// m orthogonal projections with the given ranks, conjugated by u.
pub fn pvm_from_ranks(ranks: &[usize], u: &ComplexMatrix) -> Vec<ComplexMatrix> {
    let p: usize = ranks.iter().sum();
    debug_assert_eq!(u.nrows(), p);
    let mut out = Vec::with_capacity(ranks.len());
    let mut start = 0;
    for &r in ranks {
        let mut d = ComplexMatrix::zeros(p, p);
        for k in start..start + r {
            d[(k, k)] = Complex64::new(1.0, 0.0);
        }
        out.push(u * d * u.adjoint());
        start += r;
    }
    out
}

/// Uniform composition of p into m non-negative parts (stars and bars).
pub fn random_ranks<R: Rng>(p: usize, m: usize, rng: &mut R) -> Vec<usize> {
    if m == 1 {
        return vec![p];
    }
    let mut bars = rand::seq::index::sample(rng, p + m - 1, m - 1).into_vec();
    bars.sort_unstable();
    let mut parts = Vec::with_capacity(m);
    let mut prev: isize = -1;
    for &b in &bars {
        parts.push((b as isize - prev - 1) as usize);
        prev = b as isize;
    }
    parts.push((p + m - 1) as usize - 1 - bars[m - 2]);
    parts
}

/// One random PVM group: m projections summing to the identity. Ranks as
/// given, otherwise drawn uniformly among compositions of p into m parts.
pub fn random_pvm(p: usize, m: usize, ranks: Option<&[usize]>, seed: u64) -> Result<Vec<ComplexMatrix>> {
    if p == 0 || m == 0 {
        return Err(Error::InvalidArgument("random_pvm needs p >= 1 and m >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranks = match ranks {
        Some(r) => {
            if r.len() != m || r.iter().sum::<usize>() != p {
                return Err(Error::InvalidArgument(format!(
                    "ranks {r:?} do not form a composition of {p} into {m} parts"
                )));
            }
            r.to_vec()
        }
        None => random_ranks(p, m, &mut rng),
    };
    let u = random_unitary(p, &mut rng);
    Ok(pvm_from_ranks(&ranks, &u))
}

/// a tensored with the q x q identity. Trace-preserving block embedding
/// M_p -> M_pq.
pub fn embed_block(a: &ComplexMatrix, q: usize) -> ComplexMatrix {
    a.kronecker(&ComplexMatrix::identity(q, q))
}

/// An assignment of variables x_1..x_n to p x p matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixTuple {
    p: usize,
    mats: Vec<ComplexMatrix>,
}

impl MatrixTuple {
    pub fn new(p: usize, mats: Vec<ComplexMatrix>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be >= 1".into()));
        }
        for (k, m) in mats.iter().enumerate() {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::DimensionMismatch(format!(
                    "variable x{} is {}x{}, tuple dimension is {p}",
                    k + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(MatrixTuple { p, mats })
    }

    pub fn zeros(p: usize, n: usize) -> Self {
        MatrixTuple { p, mats: vec![ComplexMatrix::zeros(p, p); n] }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.mats.len()
    }

    /// 1-based variable access.
    pub fn get(&self, var: u32) -> Result<&ComplexMatrix> {
        if var == 0 || var as usize > self.mats.len() {
            return Err(Error::UnboundVariable(var));
        }
        Ok(&self.mats[var as usize - 1])
    }

    pub fn set(&mut self, var: u32, m: ComplexMatrix) {
        self.mats[var as usize - 1] = m;
    }

    pub fn mats(&self) -> &[ComplexMatrix] {
        &self.mats
    }

    pub fn is_contraction(&self, tol: f64) -> bool {
        self.mats.iter().all(|m| operator_norm(m) <= 1.0 + tol)
    }

    /// Sum over variables of the 2-norm distance: the l1-of-2-norm metric.
    pub fn l1_two_dist(&self, other: &MatrixTuple) -> f64 {
        debug_assert_eq!(self.n(), other.n());
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| two_dist(a, b))
            .sum()
    }

    /// Block embedding of every entry into M_{p q}.
    pub fn embed(&self, q: usize) -> MatrixTuple {
        MatrixTuple {
            p: self.p * q,
            mats: self.mats.iter().map(|m| embed_block(m, q)).collect(),
        }
    }
}

/// n groups of m projections, each group a PVM on C^p.
#[derive(Clone, Debug)]
pub struct PVMTuple {
    p: usize,
    groups: Vec<Vec<ComplexMatrix>>,
}

impl PVMTuple {
    pub fn new(p: usize, groups: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        if groups.is_empty() || groups[0].is_empty() {
            return Err(Error::InvalidArgument("PVM tuple needs n >= 1 groups of m >= 1".into()));
        }
        let m = groups[0].len();
        for g in &groups {
            if g.len() != m {
                return Err(Error::DimensionMismatch("ragged PVM groups".into()));
            }
            for x in g {
                if x.nrows() != p || x.ncols() != p {
                    return Err(Error::DimensionMismatch(format!(
                        "PVM entry is {}x{}, expected {p}x{p}",
                        x.nrows(),
                        x.ncols()
                    )));
                }
            }
        }
        Ok(PVMTuple { p, groups })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.groups.len()
    }

    pub fn m(&self) -> usize {
        self.groups[0].len()
    }

    pub fn group(&self, v: usize) -> &[ComplexMatrix] {
        &self.groups[v]
    }

    pub fn groups(&self) -> &[Vec<ComplexMatrix>] {
        &self.groups
    }

    /// Largest of the three residual families: ||x^2 - x||_2, ||x* - x||_2,
    /// ||sum_i x_i - 1||_2. Zero exactly on PVM tuples.
    pub fn residual(&self) -> f64 {
        let id = ComplexMatrix::identity(self.p, self.p);
        let mut worst: f64 = 0.0;
        for g in &self.groups {
            let mut sum = ComplexMatrix::zeros(self.p, self.p);
            for x in g {
                worst = worst.max(two_dist(&(x * x), x));
                worst = worst.max(two_dist(&x.adjoint(), x));
                sum += x;
            }
            worst = worst.max(two_dist(&sum, &id));
        }
        worst
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let r = self.residual();
        if r > tol {
            return Err(Error::Validation(format!(
                "PVM residual {r:.3e} exceeds tolerance {tol:.3e}"
            )));
        }
        Ok(())
    }

    /// Flattens group (v, i) to variable v*m + i + 1 (0-based v, i), the
    /// variable layout every game formula uses.
    pub fn flatten(&self) -> MatrixTuple {
        let mats: Vec<ComplexMatrix> = self.groups.iter().flatten().cloned().collect();
        MatrixTuple { p: self.p, mats }
    }

    /// Inverse of flatten for an n x m layout.
    pub fn from_tuple(t: &MatrixTuple, n: usize, m: usize) -> Result<Self> {
        if t.n() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "tuple has {} variables, expected n*m = {}",
                t.n(),
                n * m
            )));
        }
        let groups = (0..n)
            .map(|v| t.mats[v * m..(v + 1) * m].to_vec())
            .collect();
        PVMTuple::new(t.p, groups)
    }

    pub fn embed(&self, q: usize) -> PVMTuple {
        PVMTuple {
            p: self.p * q,
            groups: self
                .groups
                .iter()
                .map(|g| g.iter().map(|x| embed_block(x, q)).collect())
                .collect(),
        }
    }
}

/// n independent seeded PVM groups of m projections each.
pub fn random_pvm_tuple(p: usize, n: usize, m: usize, seed: u64) -> Result<PVMTuple> {
    let mut groups = Vec::with_capacity(n);
    for v in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(v as u64 + 1);
        let ranks = random_ranks(p, m, &mut rng);
        let u = random_unitary(p, &mut rng);
        groups.push(pvm_from_ranks(&ranks, &u));
    }
    PVMTuple::new(p, groups)
}

/// Wire format: `{"p": int, "re": [[..]], "im": [[..]]}`, row major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixRepr {
    pub p: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&ComplexMatrix> for MatrixRepr {
    fn from(m: &ComplexMatrix) -> Self {
        let p = m.nrows();
        let part = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..p).map(|i| (0..p).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        MatrixRepr { p, re: part(|z| z.re), im: part(|z| z.im) }
    }
}

impl TryFrom<&MatrixRepr> for ComplexMatrix {
    type Error = Error;

    fn try_from(r: &MatrixRepr) -> Result<ComplexMatrix> {
        let p = r.p;
        if p == 0 {
            return Err(Error::Validation("matrix dimension must be >= 1".into()));
        }
        for rows in [&r.re, &r.im] {
            if rows.len() != p || rows.iter().any(|row| row.len() != p) {
                return Err(Error::Validation(format!("matrix entries are not {p}x{p}")));
            }
            if rows.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Validation("non-finite matrix entry".into()));
            }
        }
        Ok(ComplexMatrix::from_fn(p, p, |i, j| Complex64::new(r.re[i][j], r.im[i][j])))
    }
}

pub fn tuple_to_repr(t: &MatrixTuple) -> Vec<MatrixRepr> {
    t.mats().iter().map(MatrixRepr::from).collect()
}

pub fn tuple_from_repr(reprs: &[MatrixRepr]) -> Result<MatrixTuple> {
    if reprs.is_empty() {
        return Err(Error::Validation("empty matrix tuple".into()));
    }
    let mats = reprs.iter().map(ComplexMatrix::try_from).collect::<Result<Vec<_>>>()?;
    MatrixTuple::new(mats[0].nrows(), mats)
}

pub fn pvm_to_repr(t: &PVMTuple) -> Vec<Vec<MatrixRepr>> {
    t.groups()
        .iter()
        .map(|g| g.iter().map(MatrixRepr::from).collect())
        .collect()
}

pub fn pvm_from_repr(reprs: &[Vec<MatrixRepr>]) -> Result<PVMTuple> {
    if reprs.is_empty() || reprs[0].is_empty() {
        return Err(Error::Validation("empty PVM tuple".into()));
    }
    let groups = reprs
        .iter()
        .map(|g| g.iter().map(ComplexMatrix::try_from).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    PVMTuple::new(groups[0][0].nrows(), groups)
}

#[derive(Serialize, Deserialize)]
struct TupleWire {
    p: usize,
    mats: Vec<MatrixRepr>,
}

impl Serialize for MatrixTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TupleWire { p: self.p, mats: tuple_to_repr(self) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MatrixTuple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = TupleWire::deserialize(d)?;
        let t = tuple_from_repr(&wire.mats).map_err(serde::de::Error::custom)?;
        if t.p() != wire.p {
            return Err(serde::de::Error::custom("tuple p does not match matrices"));
        }
        Ok(t)
    }
}

#[derive(Serialize, Deserialize)]
struct PvmWire {
    p: usize,
    groups: Vec<Vec<MatrixRepr>>,
}

impl Serialize for PVMTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PvmWire { p: self.p, groups: pvm_to_repr(self) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PVMTuple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = PvmWire::deserialize(d)?;
        let t = pvm_from_repr(&wire.groups).map_err(serde::de::Error::custom)?;
        if t.p() != wire.p {
            return Err(serde::de::Error::custom("tuple p does not match matrices"));
        }
        Ok(t)
    }
}
