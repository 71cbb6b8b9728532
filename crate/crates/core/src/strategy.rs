//! Runtime-selectable strategies behind common traits. The CLI (and tests)
//! look algorithms up by name, so variants can be swapped per invocation
//! without touching call sites.

use crate::eval::{eval_sentence, net_eval, EvalResult, OptimizerConfig};
use crate::formula::{Classification, Sentence};
use crate::games::{
    deterministic_value, relaxed_game_value, synchronous_value_lower_bound, correlation_from_pvms,
    GameValueReport, NonlocalGame, CLASSICAL_BRANCH_BUDGET,
};
use crate::matrix::PVMTuple;
use crate::scalars::{rat, Rat};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct EvalContext {
    pub cfg: OptimizerConfig,
    pub mesh: Rat,
    pub budget: u128,
}

impl EvalContext {
    pub fn new(cfg: OptimizerConfig) -> Self {
        EvalContext { cfg, mesh: rat(1, 20), budget: 1_000_000 }
    }
}

pub trait SentenceStrategy: Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn evaluate(&self, s: &Sentence, ctx: &EvalContext) -> Result<EvalResult>;
}

struct ExactStrategy;

impl SentenceStrategy for ExactStrategy {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn describe(&self) -> &'static str {
        "deterministic evaluation of quantifier-free sentences"
    }

    fn evaluate(&self, s: &Sentence, ctx: &EvalContext) -> Result<EvalResult> {
        if s.classification() != Classification::QuantifierFree {
            return Err(Error::Unsupported(
                "exact strategy needs a quantifier-free sentence".into(),
            ));
        }
        eval_sentence(s, &ctx.cfg)
    }
}

struct HillClimbStrategy;

impl SentenceStrategy for HillClimbStrategy {
    fn name(&self) -> &'static str {
        "hillclimb"
    }

    fn describe(&self) -> &'static str {
        "seeded multi-start optimization; certified one-sided bounds for sup/inf sentences"
    }

    fn evaluate(&self, s: &Sentence, ctx: &EvalContext) -> Result<EvalResult> {
        eval_sentence(s, &ctx.cfg)
    }
}

struct NetStrategy;

impl SentenceStrategy for NetStrategy {
    fn name(&self) -> &'static str {
        "net"
    }

    fn describe(&self) -> &'static str {
        "deterministic grid nets with a modulus-of-continuity gap for universal sentences"
    }

    fn evaluate(&self, s: &Sentence, ctx: &EvalContext) -> Result<EvalResult> {
        match s.classification() {
            Classification::QuantifierFree => eval_sentence(s, &ctx.cfg),
            Classification::Universal => {
                let (vars, body) = s.prenex();
                net_eval(body, &vars, ctx.cfg.p, &ctx.mesh, ctx.budget)
            }
            _ => Err(Error::Unsupported(
                "net strategy needs a universal or quantifier-free sentence".into(),
            )),
        }
    }
}

static SENTENCE_STRATEGIES: [&dyn SentenceStrategy; 3] =
    [&ExactStrategy, &HillClimbStrategy, &NetStrategy];

pub fn sentence_strategies() -> &'static [&'static dyn SentenceStrategy] {
    &SENTENCE_STRATEGIES
}

pub fn sentence_strategy(name: &str) -> Result<&'static dyn SentenceStrategy> {
    SENTENCE_STRATEGIES.iter().copied().find(|s| s.name() == name).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "unknown sentence strategy {name:?}; available: {}",
            names(SENTENCE_STRATEGIES.iter().map(|s| s.name()))
        ))
    })
}

#[derive(Clone, Debug)]
pub struct GameContext {
    pub cfg: OptimizerConfig,
    pub beta: Rat,
    pub warm: Vec<PVMTuple>,
}

impl GameContext {
    pub fn new(cfg: OptimizerConfig) -> Self {
        GameContext { cfg, beta: rat(10, 1), warm: Vec::new() }
    }
}

pub trait GameValueStrategy: Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn run(&self, game: &NonlocalGame, ctx: &GameContext) -> Result<GameValueReport>;
}

struct PvmSearchStrategy;

impl GameValueStrategy for PvmSearchStrategy {
    fn name(&self) -> &'static str {
        "pvm-search"
    }

    fn describe(&self) -> &'static str {
        "rank-pattern search over exact PVM tuples with unitary-conjugation walks"
    }

    fn run(&self, game: &NonlocalGame, ctx: &GameContext) -> Result<GameValueReport> {
        synchronous_value_lower_bound(game, &ctx.cfg, &ctx.warm)
    }
}

struct RelaxedStrategy;

impl GameValueStrategy for RelaxedStrategy {
    fn name(&self) -> &'static str {
        "relaxed"
    }

    fn describe(&self) -> &'static str {
        "penalized unconstrained optimization, rounded back onto the PVM variety"
    }

    fn run(&self, game: &NonlocalGame, ctx: &GameContext) -> Result<GameValueReport> {
        let report = relaxed_game_value(game, &ctx.beta, &ctx.cfg)?;
        // The reported bound is psi at the rounded certificate, which is a
        // genuine PVM strategy; the relaxed value itself is not one-sided.
        Ok(GameValueReport {
            game: game.id().unwrap_or("unnamed").to_string(),
            p: ctx.cfg.p,
            lower_bound: report.rounded_value,
            classical_value: deterministic_value(game, CLASSICAL_BRANCH_BUDGET)
                .ok()
                .map(|(v, _)| v),
            synchronicity_residual: correlation_from_pvms(&report.rounded)
                .synchronicity_residual(),
            certificate: report.rounded,
            diagnostics: report.relaxed.diagnostics,
        })
    }
}

static GAME_STRATEGIES: [&dyn GameValueStrategy; 2] = [&PvmSearchStrategy, &RelaxedStrategy];

pub fn game_strategies() -> &'static [&'static dyn GameValueStrategy] {
    &GAME_STRATEGIES
}

pub fn game_strategy(name: &str) -> Result<&'static dyn GameValueStrategy> {
    GAME_STRATEGIES.iter().copied().find(|s| s.name() == name).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "unknown game strategy {name:?}; available: {}",
            names(GAME_STRATEGIES.iter().map(|s| s.name()))
        ))
    })
}

fn names<'a>(it: impl Iterator<Item = &'a str>) -> String {
    it.collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::BoundKind;
    use crate::games::{coloring_game, psi_value, Graph};
    use crate::parser::parse_sentence;

    fn ctx(p: usize, seed: u64) -> EvalContext {
        let mut cfg = OptimizerConfig::new(p, seed);
        cfg.restarts = 8;
        cfg.max_iterations = 400;
        EvalContext::new(cfg)
    }

    #[test]
    fn registries_resolve_by_name() {
        for s in sentence_strategies() {
            assert_eq!(sentence_strategy(s.name()).unwrap().name(), s.name());
            assert!(!s.describe().is_empty());
        }
        for s in game_strategies() {
            assert_eq!(game_strategy(s.name()).unwrap().name(), s.name());
        }
        let err = sentence_strategy("annealing").err().unwrap().to_string();
        assert!(err.contains("hillclimb") && err.contains("net"), "{err}");
        assert!(game_strategy("sdp").is_err());
    }

    #[test]
    fn sentence_strategies_respect_classification() {
        let qf = parse_sentence("1/2 + (1 -. 1/3)").unwrap();
        let universal = parse_sentence("sup x1 . trRe(x1 * x1')").unwrap();
        let c = ctx(1, 5);

        for name in ["exact", "hillclimb", "net"] {
            let r = sentence_strategy(name).unwrap().evaluate(&qf, &c).unwrap();
            assert_eq!(r.bound_kind, BoundKind::Exact);
            assert!((r.value - (0.5 + 2.0 / 3.0)).abs() < 1e-12);
        }

        assert!(sentence_strategy("exact").unwrap().evaluate(&universal, &c).is_err());
        let hill = sentence_strategy("hillclimb").unwrap().evaluate(&universal, &c).unwrap();
        assert_eq!(hill.bound_kind, BoundKind::LowerBoundOfSup);
        let net = sentence_strategy("net").unwrap().evaluate(&universal, &c).unwrap();
        match net.bound_kind {
            BoundKind::NetBound { gap } => assert!(gap > 0.0),
            other => panic!("expected net bound, got {other:?}"),
        }
        // Both certify lower bounds of the same sup, attained at 1.
        assert!(hill.value <= 1.0 + 1e-9 && net.value <= 1.0 + 1e-9);
        assert!(hill.value >= 1.0 - 1e-6);
    }

    #[test]
    fn game_strategies_agree_on_the_triangle() {
        let game = coloring_game(
            &Graph { n: 3, edges: vec![(0, 1), (1, 2), (0, 2)] },
            3,
        )
        .unwrap();
        let mut gctx = GameContext::new(ctx(1, 7).cfg);
        gctx.cfg.max_iterations = 600;
        for name in ["pvm-search", "relaxed"] {
            let report = game_strategy(name).unwrap().run(&game, &gctx).unwrap();
            assert!(report.lower_bound >= 1.0 - 1e-6, "{name}: {}", report.lower_bound);
            report.certificate.validate(1e-8).unwrap();
            let psi = psi_value(&game, &report.certificate.flatten()).unwrap();
            assert!((psi - report.lower_bound).abs() <= 1e-9);
        }
    }
}
