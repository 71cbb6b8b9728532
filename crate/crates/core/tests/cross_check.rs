//! Cross-checks between the two bound machines, the stochastic optimizer and
//! the deterministic net, on the penalized game body both of them serve.

use tracial::eval::{net_eval, sup_lower_bound, OptimizerConfig};
use tracial::formula::Formula;
use tracial::games::{build_game_formula, build_pvm_formula, deterministic_value, random_game};
use tracial::scalars::{rat, rat_to_f64};

#[test]
fn optimizer_and_net_agree_on_penalized_game_body() {
    let game = random_game(2, 2, 31).unwrap();
    let body = Formula::dot_minus(
        build_game_formula(&game),
        Formula::scale(rat(10, 1), build_pvm_formula(2, 2).unwrap()),
    );
    let vars: Vec<u32> = (1..=4).collect();

    let climbed = sup_lower_bound(&body, &vars, &OptimizerConfig::new(1, 2024)).unwrap();
    let netted = net_eval(&body, &vars, 1, &rat(1, 2), 1_000_000).unwrap();
    assert!(
        (climbed.value - netted.value).abs() <= 2e-2,
        "optimizer {} vs net {}",
        climbed.value,
        netted.value
    );

    // The mesh-1/2 grid contains every deterministic strategy exactly, with
    // zero penalty there, so the net value dominates the classical value.
    let (classical, _) = deterministic_value(&game, 1 << 20).unwrap();
    assert!(netted.value >= rat_to_f64(&classical) - 1e-9);
}
