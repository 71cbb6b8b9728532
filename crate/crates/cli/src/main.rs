//! Command-line driver: parses formulas, evaluates sentences, values games,
//! rounds tuples, and runs net/moment procedures. Every command is a pure
//! function of its inputs and flags; all randomness comes from --seed.

use clap::{Parser, Subcommand};
use num_bigint::BigInt;
use num_traits::One;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tracial::games::{self, Graph, NonlocalGame};
use tracial::moments;
use tracial::scalars::{parse_rat, rat_str, Rat};
use tracial::{
    game_strategy, sentence_strategy, Error, EvalContext, GameContext, MatrixTuple,
    OptimizerConfig,
};

#[derive(Parser)]
#[command(
    name = "tracial",
    version,
    about = "Continuous-logic sentence evaluation over tracial matrix algebras, \
             synchronous game values, and moment-net bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; explicit flags take precedence over its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Matrix dimension p of the evaluation algebra.
    #[arg(long, global = true)]
    p: Option<usize>,

    /// Net mesh, a rational like 1/20 or a decimal like 0.05.
    #[arg(long, global = true)]
    mesh: Option<String>,

    /// Optimizer restarts.
    #[arg(long, global = true)]
    restarts: Option<usize>,

    /// Optimizer iterations per restart.
    #[arg(long, global = true)]
    iters: Option<u64>,

    /// RNG seed; required by every stochastic command.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Enumeration budget (net points, classical assignments).
    #[arg(long, global = true)]
    budget: Option<u128>,

    /// Residual tolerance gate for rounding.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Defect penalty for the relaxed game strategy (rational).
    #[arg(long, global = true)]
    beta: Option<String>,

    /// Worker thread cap; never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a formula file ("-" for stdin) into its AST and classification.
    Parse {
        input: PathBuf,
        /// Print the canonical spelling instead of JSON.
        #[arg(long)]
        reprint: bool,
    },
    /// Evaluate a sentence file at dimension p.
    Eval {
        input: PathBuf,
        /// exact | hillclimb | net
        #[arg(long, default_value = "hillclimb")]
        strategy: String,
    },
    /// Lower-bound a synchronous game's dimension-p value.
    GameValue {
        input: PathBuf,
        /// pvm-search | relaxed
        #[arg(long, default_value = "pvm-search")]
        strategy: String,
    },
    /// Exact classical (deterministic-strategy) value of a game.
    GameClassical { input: PathBuf },
    /// Build the m-coloring game of a graph file.
    GenColoring {
        input: PathBuf,
        #[arg(long)]
        m: u32,
    },
    /// Round a near-PVM tuple file onto the PVM variety.
    RoundPvm {
        input: PathBuf,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: u32,
    },
    /// Trace moments of a tuple file up to degree d.
    Moments {
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        d: u32,
    },
    /// Net lower bound r with gap for a universal sentence.
    NetBound {
        input: PathBuf,
        /// Also write (point index, body value) rows here.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Empirical moment-density gap between two dimensions.
    Density {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 4)]
        d: u32,
        #[arg(long)]
        p_small: usize,
        #[arg(long)]
        p_large: usize,
        #[arg(long, default_value_t = 8)]
        samples: u32,
    },
}

/// Config-file keys mirror the global flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    p: Option<usize>,
    mesh: Option<String>,
    restarts: Option<usize>,
    iters: Option<u64>,
    seed: Option<u64>,
    budget: Option<u64>,
    tol: Option<f64>,
    beta: Option<String>,
    threads: Option<usize>,
}

struct Run {
    p: usize,
    mesh: Rat,
    restarts: usize,
    iters: u64,
    seed: Option<u64>,
    budget: u128,
    tol: f64,
    beta: Rat,
    threads: Option<usize>,
    out: Option<PathBuf>,
}

impl Run {
    /// Optimizer config for a stochastic command; errors without a seed.
    fn optimizer(&self, what: &str) -> Result<OptimizerConfig, Error> {
        let seed = self.seed.ok_or_else(|| {
            Error::Validation(format!("{what} is stochastic: --seed is required"))
        })?;
        let mut cfg = OptimizerConfig::new(self.p, seed);
        cfg.restarts = self.restarts;
        cfg.max_iterations = self.iters;
        Ok(cfg)
    }

    /// Same shape for deterministic paths, where the seed is inert.
    fn optimizer_unseeded(&self) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::new(self.p, self.seed.unwrap_or(0));
        cfg.restarts = self.restarts;
        cfg.max_iterations = self.iters;
        cfg
    }
}

/// Rational flag: "p/q", an integer, or a finite decimal like 0.05.
fn parse_rational(text: &str) -> Result<Rat, Error> {
    if let Some(q) = parse_rat(text) {
        return Ok(q);
    }
    let bad = || Error::Validation(format!("not a rational or finite decimal: {text:?}"));
    let (sign, digits) = match text.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, text),
    };
    let (int_part, frac_part) = digits.split_once('.').ok_or_else(bad)?;
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
        || frac_part.len() > 18
    {
        return Err(bad());
    }
    let mantissa: i128 = format!("{int_part}{frac_part}").parse().map_err(|_| bad())?;
    let den = 10i128.pow(frac_part.len() as u32);
    Ok(Rat::new(BigInt::from(sign * mantissa), BigInt::from(den)))
}

fn resolve(cli: &Cli) -> Result<Run, Error> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = read_file(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let mesh_text = cli.mesh.clone().or(file.mesh);
    let beta_text = cli.beta.clone().or(file.beta);
    let run = Run {
        p: cli.p.or(file.p).unwrap_or(1),
        mesh: mesh_text.as_deref().map(parse_rational).transpose()?.unwrap_or_else(|| {
            Rat::new(BigInt::one(), BigInt::from(20))
        }),
        restarts: cli.restarts.or(file.restarts).unwrap_or(32),
        iters: cli.iters.or(file.iters).unwrap_or(2000),
        seed: cli.seed.or(file.seed),
        budget: cli.budget.or(file.budget.map(u128::from)).unwrap_or(1_000_000),
        tol: cli.tol.or(file.tol).unwrap_or(0.1),
        beta: beta_text.as_deref().map(parse_rational).transpose()?.unwrap_or_else(|| {
            Rat::new(BigInt::from(10), BigInt::one())
        }),
        threads: cli.threads.or(file.threads),
        out: cli.out.clone(),
    };
    if run.p == 0 {
        return Err(Error::Validation("--p must be >= 1".into()));
    }
    Ok(run)
}

fn read_file(path: &Path) -> Result<String, Error> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Error::Validation(format!("stdin: {e}")))?;
        return Ok(text);
    }
    fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn emit<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<(), Error> {
    let mut json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Validation(format!("serialization: {e}")))?;
    json.push('\n');
    match out {
        Some(path) => fs::write(path, json)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display()))),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "unnamed".into(), |s| s.to_string_lossy().into_owned())
}

fn load_game(path: &Path) -> Result<NonlocalGame, Error> {
    let mut game: NonlocalGame = read_json(path)?;
    if game.id().is_none() {
        game.set_id(file_stem(path));
    }
    Ok(game)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Syntax { .. } | Error::ScaleNegative { .. } => 2,
        Error::Unsupported(_) => 3,
        Error::BudgetExceeded { .. } => 4,
        _ => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    let run = resolve(cli)?;
    if let Some(threads) = run.threads {
        // Nothing has touched rayon yet, so the global pool is still ours to
        // size. Capping workers never alters results; merges are
        // order-independent.
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Parse { input, reprint } => {
            let text = read_file(input)?;
            let formula = tracial::parser::parse_formula(text.trim())?;
            if *reprint {
                match &run.out {
                    Some(path) => fs::write(path, format!("{formula}\n"))
                        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?,
                    None => println!("{formula}"),
                }
                return Ok(());
            }
            #[derive(Serialize)]
            struct ParseReport {
                classification: tracial::Classification,
                canonical: String,
                ast: tracial::Formula,
            }
            let report = ParseReport {
                classification: tracial::formula::classify(&formula),
                canonical: formula.to_string(),
                ast: formula,
            };
            emit(&run.out, &report)
        }
        Command::Eval { input, strategy } => {
            let text = read_file(input)?;
            let sentence = tracial::parser::parse_sentence(text.trim())?;
            let strat = sentence_strategy(strategy)?;
            let cfg = match strategy.as_str() {
                "hillclimb" => run.optimizer("eval --strategy hillclimb")?,
                _ => run.optimizer_unseeded(),
            };
            let mut ctx = EvalContext::new(cfg);
            ctx.mesh = run.mesh.clone();
            ctx.budget = run.budget;
            eprintln!(
                "eval: strategy={} p={} classification={}",
                strat.name(),
                ctx.cfg.p,
                sentence.classification()
            );
            let result = strat.evaluate(&sentence, &ctx)?;
            emit(&run.out, &result)
        }
        Command::GameValue { input, strategy } => {
            let game = load_game(input)?;
            let strat = game_strategy(strategy)?;
            let cfg = run.optimizer("game-value")?;
            let mut ctx = GameContext::new(cfg);
            ctx.beta = run.beta.clone();
            eprintln!(
                "game-value: strategy={} game={} p={} seed={}",
                strat.name(),
                game.id().unwrap_or("unnamed"),
                ctx.cfg.p,
                ctx.cfg.seed
            );
            let report = strat.run(&game, &ctx)?;
            emit(&run.out, &report)
        }
        Command::GameClassical { input } => {
            let game = load_game(input)?;
            let (value, assignment) = games::deterministic_value(&game, run.budget)?;
            #[derive(Serialize)]
            struct ClassicalReport {
                game: String,
                classical_value: String,
                assignment: Vec<usize>,
            }
            emit(
                &run.out,
                &ClassicalReport {
                    game: game.id().unwrap_or("unnamed").to_string(),
                    classical_value: rat_str(&value),
                    assignment,
                },
            )
        }
        Command::GenColoring { input, m } => {
            let graph: Graph = read_json(input)?;
            let game = games::coloring_game(&graph, *m)?;
            emit(&run.out, &game)
        }
        Command::RoundPvm { input, n, m } => {
            let tuple: MatrixTuple = read_json(input)?;
            let rounded = games::round_to_pvm(&tuple, *n, *m, run.tol)?;
            if rounded.degenerate_spectrum {
                eprintln!("round-pvm: warning: near-degenerate spectrum split across answers");
            }
            emit(&run.out, &rounded)
        }
        Command::Moments { input, d } => {
            let tuple: MatrixTuple = read_json(input)?;
            let mv = moments::moment_map(&tuple, *d)?;
            emit(&run.out, &mv)
        }
        Command::NetBound { input, csv } => {
            let text = read_file(input)?;
            let sentence = tracial::parser::parse_sentence(text.trim())?;
            let mut rows = String::new();
            let report = moments::net_lower_bound_with(
                &sentence,
                run.p,
                &run.mesh,
                run.budget,
                |index, value| {
                    if csv.is_some() {
                        rows.push_str(&format!("{index},{value}\n"));
                    }
                },
            )?;
            if let Some(path) = csv {
                let table = format!("point,value\n{rows}");
                fs::write(path, table)
                    .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
            }
            eprintln!(
                "net-bound: points={} mesh={} covering_radius={}",
                report.spec.cardinality,
                rat_str(&run.mesh),
                report.spec.covering_radius
            );
            emit(&run.out, &report)
        }
        Command::Density { n, d, p_small, p_large, samples } => {
            let mut cfg = run.optimizer("density")?;
            cfg.p = *p_small;
            let gap = moments::density_gap(*n, *d, *p_large, *samples, &cfg)?;
            #[derive(Serialize)]
            struct DensityReport {
                n: u32,
                d: u32,
                p_small: usize,
                p_large: usize,
                samples: u32,
                seed: u64,
                gap: f64,
            }
            emit(
                &run.out,
                &DensityReport {
                    n: *n,
                    d: *d,
                    p_small: *p_small,
                    p_large: *p_large,
                    samples: *samples,
                    seed: cfg.seed,
                    gap,
                },
            )
        }
    }
}
