//! Acceptance gate: every release-blocking property, one test per criterion,
//! each printing a single PASS line with its measured runtime. Tolerances and
//! wall-clock budgets are asserted, not advisory.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tracial::eval::{eval_qf, eval_sentence, OptimizerConfig};
use tracial::formula::random_formula;
use tracial::games::{
    build_pvm_formula, deterministic_value, psi_value, random_game, relaxed_game_value,
    round_to_pvm, synchronous_value_lower_bound, NonlocalGame,
};
use tracial::matrix::{gaussian_matrix, random_contraction, random_pvm_tuple, two_norm, MatrixTuple};
use tracial::moments::{moment_map, net_lower_bound};
use tracial::parser::{parse_formula, parse_sentence};
use tracial::scalars::{rat, rat_to_f64};
use tracial::terms::enumerate_monomials;

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn load_game(name: &str) -> NonlocalGame {
    let path = corpus().join(name);
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

/// The shared 20-game corpus: seeded proper synchronous games with n, m <= 3.
fn corpus_game(k: u64) -> NonlocalGame {
    let n = 2 + (k % 2) as u32;
    let m = 2 + ((k / 2) % 2) as u32;
    random_game(n, m, 500 + k).unwrap()
}

fn done(label: &str, t0: Instant, budget_secs: u64) {
    let dt = t0.elapsed();
    assert!(
        dt <= Duration::from_secs(budget_secs),
        "{label}: {dt:?} exceeded the {budget_secs}s budget"
    );
    println!("{label}: PASS in {dt:.2?}");
}

#[test]
fn c01_pvm_formula_zeroset() {
    let t0 = Instant::now();
    for k in 0..200u64 {
        let p = 1 + (k % 6) as usize;
        let n = 1 + (k % 4) as u32;
        let m = 1 + ((k / 4) % 4) as u32;
        let t = random_pvm_tuple(p, n as usize, m as usize, 9_000 + k).unwrap();
        let phi = build_pvm_formula(n, m).unwrap();
        let v = eval_qf(&phi, &t.flatten()).unwrap();
        assert!(v <= 1e-9, "phi = {v} on an exact PVM tuple (p={p} n={n} m={m} k={k})");
    }
    done("criterion 1 (PVM formula zeroset)", t0, 5);
}

#[test]
fn c02_rounding_soundness() {
    let t0 = Instant::now();
    let epsilons = [1e-2, 1e-3, 1e-4];
    for k in 0..100u64 {
        let p = 2 + (k % 5) as usize;
        let m = 2 + (k % 3) as usize;
        let eps = epsilons[(k % 3) as usize];
        let exact = random_pvm_tuple(p, 1, m, 40_000 + k).unwrap();
        let flat = exact.flatten();

        let fixed = round_to_pvm(&flat, 1, m as u32, 0.5).unwrap();
        assert!(fixed.distance <= 1e-9, "exact PVM moved {} (k={k})", fixed.distance);

        let mut rng = ChaCha8Rng::seed_from_u64(77_000 + k);
        let mut mats = Vec::with_capacity(m);
        for x in flat.mats() {
            let g = gaussian_matrix(p, 1.0, &mut rng);
            let h = (&g + g.adjoint()).map(|z| z * 0.5);
            let h = h.map(|z| z * (eps / two_norm(&h)));
            mats.push(x + h);
        }
        let noisy = MatrixTuple::new(p, mats).unwrap();
        let rounded = round_to_pvm(&noisy, 1, m as u32, 0.5).unwrap();
        assert!(
            rounded.pvm.residual() <= 1e-10,
            "rounded residual {} (k={k})",
            rounded.pvm.residual()
        );
        assert!(
            rounded.distance <= 10.0 * m as f64 * eps,
            "distance {} > 10*{m}*{eps} (k={k})",
            rounded.distance
        );
    }
    done("criterion 2 (rounding soundness)", t0, 10);
}

#[test]
fn c03_scalar_game_oracle_agreement() {
    let t0 = Instant::now();
    for k in 0..20u64 {
        let game = corpus_game(k);
        assert!(game.is_proper() && game.is_synchronous());
        let (det, _) = deterministic_value(&game, 1 << 20).unwrap();
        let report =
            synchronous_value_lower_bound(&game, &OptimizerConfig::new(1, 600 + k), &[]).unwrap();
        let diff = (report.lower_bound - rat_to_f64(&det)).abs();
        assert!(diff <= 1e-6, "game {k}: search {} vs brute force {det}", report.lower_bound);
    }
    done("criterion 3 (p=1 oracle agreement)", t0, 30);
}

#[test]
fn c04_coloring_game_oracles() {
    let t0 = Instant::now();
    let triangle = load_game("games/triangle-3coloring.json");
    for p in [1usize, 3] {
        let report =
            synchronous_value_lower_bound(&triangle, &OptimizerConfig::new(p, 71), &[]).unwrap();
        assert!(
            report.lower_bound >= 1.0 - 1e-6,
            "triangle 3-coloring at p={p}: {}",
            report.lower_bound
        );
    }

    let k5 = load_game("games/k5-3coloring.json");
    let (classical, _) = deterministic_value(&k5, 1 << 20).unwrap();
    assert!(classical < rat(1, 1));
    assert_eq!(classical, rat(21, 25));
    let report = synchronous_value_lower_bound(&k5, &OptimizerConfig::new(1, 72), &[]).unwrap();
    let diff = (report.lower_bound - rat_to_f64(&classical)).abs();
    assert!(diff <= 1e-6, "K5 at p=1: {} vs {classical}", report.lower_bound);
    done("criterion 4 (coloring games)", t0, 20);
}

#[test]
fn c05_relaxation_consistency() {
    let t0 = Instant::now();
    let beta = rat(10, 1);
    for k in 0..20u64 {
        let game = corpus_game(k);
        for p in [1usize, 2] {
            let mut cfg = OptimizerConfig::new(p, 800 + k);
            cfg.restarts = 16;
            cfg.max_iterations = 800;
            let relaxed = relaxed_game_value(&game, &beta, &cfg).unwrap();
            let constrained =
                synchronous_value_lower_bound(&game, &cfg, &[relaxed.rounded.clone()]).unwrap();
            let (r, c) = (relaxed.rounded_value, constrained.lower_bound);
            assert!(r <= c + 1e-6, "rounded {r} exceeds constrained {c} (game {k}, p={p})");
            assert!((r - c).abs() <= 2e-2, "pipelines {} apart (game {k}, p={p})", (r - c).abs());
        }
    }
    done("criterion 5 (relaxation consistency)", t0, 120);
}

#[test]
fn c06_net_lower_bound() {
    let t0 = Instant::now();
    let sigma = parse_sentence("sup x1 . trRe(x1 * x1')").unwrap();
    let coarse = net_lower_bound(&sigma, 1, &rat(1, 20), 10_000_000).unwrap();
    assert!(coarse.gap <= 0.1, "gap {}", coarse.gap);
    assert!(
        1.0 - coarse.gap <= coarse.r && coarse.r <= 1.0,
        "r {} outside [1 - {}, 1]",
        coarse.r,
        coarse.gap
    );
    let fine = net_lower_bound(&sigma, 1, &rat(1, 40), 10_000_000).unwrap();
    assert!(fine.r >= coarse.r, "refinement decreased r: {} -> {}", coarse.r, fine.r);
    done("criterion 6 (net lower bound)", t0, 10);
}

#[test]
fn c07_moment_map_invariants() {
    let t0 = Instant::now();
    for k in 0..500u64 {
        let n = 1 + (k % 3) as usize;
        let p = 1 + (k % 4) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + k);
        let mats = (0..n).map(|_| random_contraction(p, &mut rng)).collect();
        let t = MatrixTuple::new(p, mats).unwrap();
        let mv = moment_map(&t, 4).unwrap();
        let mons = enumerate_monomials(n as u32, 4).unwrap();
        let index: HashMap<_, _> =
            mons.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        for (i, mon) in mons.iter().enumerate() {
            let v = mv.values[i];
            assert!(v.norm() <= 1.0 + 1e-10, "|tau| = {} for {mon:?}", v.norm());
            let paired = mv.values[index[&mon.adjoint()]];
            assert!((paired - v.conj()).norm() <= 1e-12, "conjugate pairing broke at {mon:?}");
            if p == 1 {
                let scalar: Complex64 = mon
                    .0
                    .iter()
                    .map(|l| {
                        let z = t.mats()[(l.var - 1) as usize][(0, 0)];
                        if l.star {
                            z.conj()
                        } else {
                            z
                        }
                    })
                    .product();
                assert!((v - scalar).norm() <= 1e-12, "scalar oracle broke at {mon:?}");
            }
        }
    }
    done("criterion 7 (moment-map invariants)", t0, 10);
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_tracial")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

#[test]
fn c08_determinism() {
    let t0 = Instant::now();
    let corpus = corpus();
    let sentence = corpus.join("sentences/commutator-defect.txt");
    let sentence = sentence.to_str().unwrap();
    let triangle = corpus.join("games/triangle-3coloring.json");
    let triangle = triangle.to_str().unwrap();

    let eval_args = ["eval", sentence, "--p", "2", "--seed", "7", "--restarts", "8", "--iters", "500"];
    let a = run_cli(&eval_args);
    let b = run_cli(&eval_args);
    assert_eq!(a, b, "eval: same seed, different bytes");
    for threads in ["1", "4"] {
        let c = run_cli(&[&eval_args[..], &["--threads", threads]].concat());
        assert_eq!(a, c, "eval: --threads {threads} changed output");
    }

    let game_args =
        ["game-value", triangle, "--p", "2", "--seed", "3", "--restarts", "8", "--iters", "400"];
    let a = run_cli(&game_args);
    let b = run_cli(&game_args);
    assert_eq!(a, b, "game-value: same seed, different bytes");
    for threads in ["1", "4"] {
        let c = run_cli(&[&game_args[..], &["--threads", threads]].concat());
        assert_eq!(a, c, "game-value: --threads {threads} changed output");
    }

    let density_args = [
        "density", "--n", "1", "--d", "3", "--p-small", "1", "--p-large", "2", "--samples", "2",
        "--seed", "9", "--restarts", "4", "--iters", "300",
    ];
    let a = run_cli(&density_args);
    let b = run_cli(&density_args);
    assert_eq!(a, b, "density: same seed, different bytes");
    let c = run_cli(&[&density_args[..], &["--threads", "3"]].concat());
    assert_eq!(a, c, "density: --threads changed output");

    done("criterion 8 (determinism)", t0, 60);
}

#[test]
fn c09_dimension_monotonicity() {
    let t0 = Instant::now();
    let text = fs::read_to_string(corpus().join("sentences/universal.txt")).unwrap();
    let sentences: Vec<_> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(sentences.len(), 10);
    for (i, line) in sentences.iter().enumerate() {
        let s = parse_sentence(line).unwrap();
        let mut cfg = OptimizerConfig::new(1, 7_000 + i as u64);
        cfg.restarts = 16;
        cfg.max_iterations = 1_000;
        let r1 = eval_sentence(&s, &cfg).unwrap();
        let cert = r1.certificate.expect("universal sentences carry certificates");
        let (_, body) = s.prenex();
        let v2 = eval_qf(body, &cert.embed(2)).unwrap();
        assert!(v2 >= r1.value - 1e-9, "sentence {i}: p=2 bound {v2} < p=1 bound {}", r1.value);
    }
    for k in 0..10u64 {
        let game = corpus_game(k);
        let r1 =
            synchronous_value_lower_bound(&game, &OptimizerConfig::new(1, 7_100 + k), &[]).unwrap();
        let v2 = psi_value(&game, &r1.certificate.embed(2).flatten()).unwrap();
        assert!(
            v2 >= r1.lower_bound - 1e-9,
            "game {k}: p=2 bound {v2} < p=1 bound {}",
            r1.lower_bound
        );
    }
    done("criterion 9 (dimension monotonicity)", t0, 60);
}

#[test]
fn c10_parser_corpus() {
    let t0 = Instant::now();
    let text = fs::read_to_string(corpus().join("formulas/corpus.txt")).unwrap();
    let lines: Vec<_> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 50);
    for line in &lines {
        let f = parse_formula(line).unwrap_or_else(|e| panic!("{line}: {e}"));
        let printed = f.to_string();
        let again = parse_formula(&printed).unwrap();
        assert_eq!(f, again, "round trip changed the AST of {line}");
        assert_eq!(printed, again.to_string(), "print is not a fixpoint for {line}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(424_242);
    for i in 0..1_000 {
        let f = random_formula(&mut rng, 6);
        let p1 = f.to_string();
        let g = parse_formula(&p1).unwrap_or_else(|e| panic!("fuzz {i}: {p1}: {e}"));
        assert_eq!(f, g, "fuzz {i}: reparse changed the AST");
        assert_eq!(p1, g.to_string(), "fuzz {i}: print is not a fixpoint");
    }
    done("criterion 10 (parser corpus)", t0, 5);
}

/// The phi gate must reject inputs outside its modulus radius rather than
/// round them silently; checked here so the acceptance suite also locks the
/// CLI-visible failure mode.
#[test]
fn rounding_rejects_garbage() {
    let zeros = MatrixTuple::zeros(2, 2);
    assert!(round_to_pvm(&zeros, 1, 2, 0.1).is_err());
}
