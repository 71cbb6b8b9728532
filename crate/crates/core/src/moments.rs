//! Trace-moment maps, deterministic nets, and the net lower-bound algorithm
//! for universal sentences.
//!
//! The moment map sends a contraction tuple to the vector of normalized
//! traces of all *-monomials of degree 1..=d in canonical order. Nets are
//! deterministic entry grids (real and imaginary parts on a rational mesh)
//! projected into the contraction ball; projection onto a convex set is
//! nonexpansive, so grid covering radii survive the projection.

use crate::eval::{eval_qf, maximize, Objective, OptimizerConfig};
use crate::formula::{modulus_of_continuity, Classification, Sentence};
use crate::matrix::{ComplexMatrix, MatrixTuple};
use crate::scalars::{rat_to_f64, Rat};
use crate::terms::{enumerate_monomials, StarMonomial};
use crate::{Error, Result};
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

/// Values of tau at every canonical monomial of degree 1..=d.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector {
    pub n: u32,
    pub d: u32,
    pub values: Vec<Complex64>,
}

impl Serialize for MomentVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let monomials: Vec<String> = enumerate_monomials(self.n, self.d)
            .map_err(serde::ser::Error::custom)?
            .iter()
            .map(|m| m.to_string())
            .collect();
        let values: Vec<[f64; 2]> = self.values.iter().map(|z| [z.re, z.im]).collect();
        let mut st = s.serialize_struct("MomentVector", 4)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("d", &self.d)?;
        st.serialize_field("monomials", &monomials)?;
        st.serialize_field("values", &values)?;
        st.end()
    }
}

fn eval_monomial(m: &StarMonomial, t: &MatrixTuple) -> Result<ComplexMatrix> {
    let p = t.p();
    let mut acc = ComplexMatrix::identity(p, p);
    for l in &m.0 {
        let x = t.get(l.var)?;
        acc = if l.star { acc * x.adjoint() } else { acc * x };
    }
    Ok(acc)
}

pub fn moment_map(t: &MatrixTuple, d: u32) -> Result<MomentVector> {
    let n = t.n() as u32;
    let monomials = enumerate_monomials(n, d)?;
    let values = monomials
        .iter()
        .map(|m| {
            let prod = eval_monomial(m, t)?;
            Ok(prod.diagonal().sum() / Complex64::from(t.p() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentVector { n, d, values })
}

// ---------------------------------------------------------------------------
// Deterministic nets.

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "space")]
pub enum NetTarget {
    #[serde(rename = "disk-power")]
    DiskPower { l: u32 },
    #[serde(rename = "matrix-ball")]
    MatrixBall { p: usize, n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetSpec {
    pub target: NetTarget,
    #[serde(with = "crate::scalars::rat_serde")]
    pub mesh: Rat,
    /// For the matrix ball: radius in the l1-of-2-norm metric over the whole
    /// tuple. For disk powers: per-coordinate radius (l-infinity metric).
    pub covering_radius: f64,
    pub cardinality: u128,
}

/// Axis values j*mesh for |j*mesh| <= 1, with the worst-case distance from a
/// point of [-1,1] to the axis set. Halving the mesh keeps every old value.
struct Axis {
    values: Vec<f64>,
    radius: f64,
}

fn axis_grid(mesh: &Rat) -> Result<Axis> {
    if !mesh.is_positive() {
        return Err(Error::InvalidArgument("mesh must be positive".into()));
    }
    if *mesh > Rat::from_integer(1.into()) {
        return Err(Error::InvalidArgument("mesh must be <= 1".into()));
    }
    let jmax = (Rat::from_integer(1.into()) / mesh)
        .floor()
        .to_integer()
        .to_i64()
        .ok_or_else(|| Error::InvalidArgument("mesh too small".into()))?;
    let values: Vec<f64> =
        (-jmax..=jmax).map(|j| rat_to_f64(&(mesh * Rat::from_integer(j.into())))).collect();
    let edge = 1.0 - rat_to_f64(&(mesh * Rat::from_integer(jmax.into())));
    let radius = (rat_to_f64(mesh) / 2.0).max(edge);
    Ok(Axis { values, radius })
}

fn checked_card(axis: usize, slots: u32, budget: u128) -> Result<u128> {
    let mut card: u128 = 1;
    for _ in 0..slots {
        card = card
            .checked_mul(axis as u128)
            .ok_or(Error::BudgetExceeded { required: u128::MAX, budget })?;
        if card > budget {
            return Err(Error::BudgetExceeded { required: card, budget });
        }
    }
    Ok(card)
}

/// Grid net of (M_p)_1^n: every real and imaginary entry part ranges over the
/// axis grid, then each matrix is projected to the contraction ball. Covers
/// the ball with l1-of-2-norm radius n * axis_radius * sqrt(2p).
pub fn matrix_ball_net(
    p: usize,
    n: usize,
    mesh: &Rat,
    budget: u128,
) -> Result<(Vec<MatrixTuple>, NetSpec)> {
    if p == 0 || n == 0 {
        return Err(Error::InvalidArgument("matrix net needs p >= 1 and n >= 1".into()));
    }
    let axis = axis_grid(mesh)?;
    let slots = 2 * (p * p * n) as u32;
    let card = checked_card(axis.values.len(), slots, budget)?;
    let a = axis.values.len() as u128;
    let points: Vec<MatrixTuple> = (0..card)
        .into_par_iter()
        .map(|k| {
            let mut rest = k;
            let mut digit = || {
                let v = axis.values[(rest % a) as usize];
                rest /= a;
                v
            };
            let mats = (0..n)
                .map(|_| {
                    let m = ComplexMatrix::from_fn(p, p, |_, _| {
                        let re = digit();
                        let im = digit();
                        Complex64::new(re, im)
                    });
                    crate::matrix::project_to_contraction(&m)
                })
                .collect();
            MatrixTuple::new(p, mats).expect("grid dimensions consistent")
        })
        .collect();
    let per_var = axis.radius * (2.0 * p as f64).sqrt();
    let spec = NetSpec {
        target: NetTarget::MatrixBall { p, n },
        mesh: mesh.clone(),
        covering_radius: n as f64 * per_var,
        cardinality: card,
    };
    Ok((points, spec))
}

/// Product grid net of the polydisk D^L with per-coordinate covering radius
/// <= eps (axis step eps/2, then radial projection into the disk).
pub fn disk_net(l: u32, eps: &Rat, budget: u128) -> Result<(Vec<Vec<Complex64>>, NetSpec)> {
    if l == 0 {
        return Err(Error::InvalidArgument("disk net needs l >= 1".into()));
    }
    let step = eps / Rat::from_integer(2.into());
    let axis = axis_grid(&step)?;
    let card = checked_card(axis.values.len(), 2 * l, budget)?;
    let a = axis.values.len() as u128;
    let points: Vec<Vec<Complex64>> = (0..card)
        .map(|k| {
            let mut rest = k;
            let mut digit = || {
                let v = axis.values[(rest % a) as usize];
                rest /= a;
                v
            };
            (0..l)
                .map(|_| {
                    let z = Complex64::new(digit(), digit());
                    let r = z.norm();
                    if r > 1.0 {
                        z / r
                    } else {
                        z
                    }
                })
                .collect()
        })
        .collect();
    let spec = NetSpec {
        target: NetTarget::DiskPower { l },
        mesh: step,
        covering_radius: axis.radius * 2f64.sqrt(),
        cardinality: card,
    };
    Ok((points, spec))
}

// ---------------------------------------------------------------------------
// Net lower bounds for universal sentences.

#[derive(Clone, Debug, Serialize)]
pub struct NetBoundReport {
    /// Max of the body over the net: r <= sup over M_p <= r + gap, and r is
    /// also a lower bound for the sup over any trace embedding target.
    pub r: f64,
    pub gap: f64,
    pub spec: NetSpec,
}

pub fn net_lower_bound(s: &Sentence, p: usize, mesh: &Rat, budget: u128) -> Result<NetBoundReport> {
    net_lower_bound_with(s, p, mesh, budget, |_, _| {})
}

/// Same, streaming (point index, body value) pairs in net order to `sink`.
pub fn net_lower_bound_with(
    s: &Sentence,
    p: usize,
    mesh: &Rat,
    budget: u128,
    mut sink: impl FnMut(usize, f64),
) -> Result<NetBoundReport> {
    if s.classification() != Classification::Universal {
        return Err(Error::Unsupported(
            "net lower bounds require a universal sentence".into(),
        ));
    }
    let (vars, body) = s.prenex();
    let n = vars.iter().copied().max().unwrap_or(0) as usize;
    let modulus = modulus_of_continuity(body)?;
    let (points, spec) = matrix_ball_net(p, n, mesh, budget)?;
    let values: Vec<f64> = points
        .par_iter()
        .map(|t| eval_qf(body, t).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate() {
        sink(i, *v);
        if *v > values[best] {
            best = i;
        }
    }
    let per_var_radius = spec.covering_radius / n as f64;
    let gap = rat_to_f64(&modulus.lipschitz_sum()) * per_var_radius;
    // Round-off at clipped boundary points can leak past the proven envelope
    // |body| <= R; true values never do, so clipping keeps r sound and keeps
    // refinement monotone when the max sits on the boundary.
    let envelope = rat_to_f64(&crate::formula::range_bound(body)?);
    Ok(NetBoundReport { r: values[best].clamp(-envelope, envelope), gap, spec })
}

// ---------------------------------------------------------------------------
// Empirical moment-density gap between dimensions.

/// l-infinity distance between moment vectors.
fn moment_dist(a: &MomentVector, b: &[Complex64]) -> f64 {
    a.values.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Samples contraction tuples at p_large, and for each measures how closely
/// tuples at p_small = cfg.p can match its moment vector (inner minimization
/// of the l-infinity moment distance by the shared optimizer). Returns the
/// max over samples: an empirical one-sided density gap. Witnesses found at
/// divisor dimensions are block-embedded as warm starts, which makes the gap
/// non-increasing in p_small along divisor chains; at p_small = p_large the
/// sample itself is a warm start and the gap is exactly 0.
pub fn density_gap(
    n: u32,
    d: u32,
    p_large: usize,
    samples: u32,
    cfg: &OptimizerConfig,
) -> Result<f64> {
    cfg.validate()?;
    if cfg.p > p_large {
        return Err(Error::InvalidArgument("p_small must be <= p_large".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be >= 1".into()));
    }
    let mut worst = 0.0f64;
    for k in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1_000_000 + k as u64);
        let mats =
            (0..n).map(|_| crate::matrix::random_contraction(p_large, &mut rng)).collect();
        let sample = MatrixTuple::new(p_large, mats)?;
        let target = moment_map(&sample, d)?;
        let (dist, _) = match_moments(&target, &sample, cfg)?;
        worst = worst.max(dist);
    }
    Ok(worst)
}

/// Best l-infinity match to `target` at dimension cfg.p; returns the achieved
/// distance and witness. Recurses on divisors of cfg.p for warm starts.
fn match_moments(
    target: &MomentVector,
    sample: &MatrixTuple,
    cfg: &OptimizerConfig,
) -> Result<(f64, MatrixTuple)> {
    let n = target.n as usize;
    let mut warm: Vec<MatrixTuple> = Vec::new();
    if cfg.p == sample.p() {
        warm.push(sample.clone());
    }
    for q in 1..cfg.p {
        if cfg.p % q == 0 {
            let mut sub = cfg.clone();
            sub.p = q;
            let (_, witness) = match_moments(target, sample, &sub)?;
            warm.push(witness.embed(cfg.p / q));
        }
    }
    let objective = |a: &MatrixTuple| -> f64 {
        match moment_map(a, target.d) {
            Ok(mv) => -moment_dist(&mv, &target.values),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let outcome = maximize(n, cfg, &Objective { clamped: &objective, soft: None }, &warm)?;
    let dist = moment_dist(&moment_map(&outcome.tuple, target.d)?, &target.values);
    Ok((dist, outcome.tuple))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::random_pvm;
    use crate::scalars::rat;
    use crate::terms::monomial_count;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn random_tuple(p: usize, n: usize, seed: u64) -> MatrixTuple {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mats = (0..n).map(|_| crate::matrix::random_contraction(p, &mut rng)).collect();
        MatrixTuple::new(p, mats).unwrap()
    }

    #[test]
    fn moments_of_constant_tuples() {
        let ones =
            MatrixTuple::new(2, vec![ComplexMatrix::identity(2, 2); 2]).unwrap();
        let mv = moment_map(&ones, 3).unwrap();
        assert_eq!(mv.values.len() as u128, monomial_count(2, 3).unwrap());
        assert!(mv.values.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-12));

        let zeros = MatrixTuple::zeros(3, 2);
        let mv0 = moment_map(&zeros, 2).unwrap();
        assert!(mv0.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn scalar_case_matches_complex_arithmetic() {
        let z = Complex64::new(0.3, -0.4);
        let t = MatrixTuple::new(1, vec![ComplexMatrix::from_element(1, 1, z)]).unwrap();
        let mv = moment_map(&t, 2).unwrap();
        let zb = z.conj();
        let expect = [z, zb, z * z, z * zb, zb * z, zb * zb];
        assert_eq!(mv.values.len(), 6);
        for (got, want) in mv.values.iter().zip(expect) {
            assert!((got - want).norm() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn conjugate_pairing_and_disk_containment() {
        for seed in 0..10u64 {
            let p = 1 + (seed as usize % 4);
            let n = 1 + (seed as usize % 3);
            let t = random_tuple(p, n, 100 + seed);
            let d = 3;
            let mv = moment_map(&t, d).unwrap();
            let mons = enumerate_monomials(n as u32, d).unwrap();
            let index: BTreeMap<&StarMonomial, usize> =
                mons.iter().enumerate().map(|(i, m)| (m, i)).collect();
            for (i, m) in mons.iter().enumerate() {
                assert!(mv.values[i].norm() <= 1.0 + 1e-10);
                let adj = m.adjoint();
                let j = index[&adj];
                assert!((mv.values[i].conj() - mv.values[j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn moment_map_lipschitz_by_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = 1 + rng.gen_range(0..3);
            let n = 1 + rng.gen_range(0..2usize);
            let a = random_tuple(p, n, rng.gen());
            let b = random_tuple(p, n, rng.gen());
            let dist = a.l1_two_dist(&b);
            let d = 4;
            let (ma, mb) = (moment_map(&a, d).unwrap(), moment_map(&b, d).unwrap());
            let mons = enumerate_monomials(n as u32, d).unwrap();
            for (i, m) in mons.iter().enumerate() {
                let delta = (ma.values[i] - mb.values[i]).norm();
                assert!(
                    delta <= m.degree() as f64 * dist + 1e-9,
                    "degree {} delta {delta} dist {dist}",
                    m.degree()
                );
            }
        }
    }

    #[test]
    fn matrix_net_smallest_case() {
        let (points, spec) = matrix_ball_net(1, 1, &rat(1, 2), 1_000).unwrap();
        assert_eq!(points.len(), 25);
        assert_eq!(spec.cardinality, 25);
        // Covering radius: axis radius 1/4, sqrt(2p) = sqrt(2).
        assert!((spec.covering_radius - 0.25 * 2f64.sqrt()).abs() < 1e-12);
        assert!(spec.covering_radius <= rat_to_f64(&rat(1, 2)) * 2f64.sqrt());
        for t in &points {
            assert!(t.is_contraction(1e-9));
        }
        // The corners +/-1 +/-i survive as unit scalars after projection.
        let has_one = points.iter().any(|t| {
            let z = t.get(1).unwrap()[(0, 0)];
            (z - Complex64::new(1.0, 0.0)).norm() < 1e-12
        });
        assert!(has_one);
    }

    #[test]
    fn axis_nesting_and_radius_halving() {
        let coarse = axis_grid(&rat(1, 2)).unwrap();
        let fine = axis_grid(&rat(1, 4)).unwrap();
        for v in &coarse.values {
            assert!(fine.values.iter().any(|w| w == v), "lost axis value {v}");
        }
        assert!((fine.radius - coarse.radius / 2.0).abs() < 1e-12);
    }

    #[test]
    fn net_budget_errors() {
        match matrix_ball_net(2, 2, &rat(1, 10), 1_000) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert!(required > budget);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn disk_net_small() {
        let (points, spec) = disk_net(1, &rat(1, 1), 10_000).unwrap();
        assert_eq!(points.len() as u128, spec.cardinality);
        assert!(spec.covering_radius <= 1.0);
        for pt in &points {
            assert!(pt[0].norm() <= 1.0 + 1e-12);
        }
        // Probe: random disk points are within the covering radius of the net.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let z = loop {
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if c.norm() <= 1.0 {
                    break c;
                }
            };
            let nearest = points.iter().map(|p| (p[0] - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest <= spec.covering_radius + 1e-12, "uncovered {z}, dist {nearest}");
        }
    }

    #[test]
    fn net_lower_bound_for_square_norm() {
        let s = crate::parser::parse_sentence("sup x1 . trRe(x1 * x1')").unwrap();
        let report = net_lower_bound(&s, 1, &rat(1, 20), 100_000).unwrap();
        assert!(report.r <= 1.0 + 1e-12 && report.r >= 1.0 - report.gap);
        assert!(report.gap <= 0.1, "gap {}", report.gap);
        let fine = net_lower_bound(&s, 1, &rat(1, 40), 100_000).unwrap();
        assert!(fine.r >= report.r - 1e-12);
        assert!(fine.gap <= report.gap / 2.0 + 1e-12);

        let constant = crate::parser::parse_sentence("sup x1 . 1/2").unwrap();
        let rc = net_lower_bound(&constant, 1, &rat(1, 2), 1_000).unwrap();
        assert_eq!(rc.r, 0.5);
        assert_eq!(rc.gap, 0.0);
    }

    #[test]
    fn net_rejects_non_universal() {
        let s = crate::parser::parse_sentence("inf x1 . norm2(x1)").unwrap();
        assert!(matches!(
            net_lower_bound(&s, 1, &rat(1, 2), 1_000),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn density_gap_reflexive_and_monotone() {
        let mut cfg = OptimizerConfig::new(2, 17);
        cfg.restarts = 4;
        cfg.max_iterations = 150;
        let same = density_gap(1, 2, 2, 3, &cfg).unwrap();
        assert!(same <= 1e-6, "self-match failed: {same}");

        let mut small = cfg.clone();
        small.p = 1;
        let across = density_gap(1, 2, 2, 3, &small).unwrap();
        assert!(across >= same - 1e-9, "gap increased with dimension: {across} < {same}");
    }

    #[test]
    fn moment_vector_json_shape() {
        let t = MatrixTuple::new(1, vec![ComplexMatrix::from_element(1, 1, Complex64::new(0.5, 0.0))])
            .unwrap();
        let mv = moment_map(&t, 1).unwrap();
        let json = serde_json::to_value(&mv).unwrap();
        assert_eq!(json["monomials"], serde_json::json!(["x1", "x1'"]));
        assert_eq!(json["values"][0][0], 0.5);
    }

    #[test]
    fn pvm_moments_stay_in_disk() {
        // Projections are contractions; their moments must respect the disk.
        let pvm = random_pvm(4, 3, None, 9).unwrap();
        let t = MatrixTuple::new(4, pvm.clone()).unwrap();
        let mv = moment_map(&t, 4).unwrap();
        assert!(mv.values.iter().all(|z| z.norm() <= 1.0 + 1e-10));
    }
}
