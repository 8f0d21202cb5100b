mod common;

use common::{max_relative_error, toy_networks};

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

#[test]
fn backprop_matches_central_differences() {
    for seed in [11, 12, 13] {
        for toy in toy_networks(seed) {
            let err = max_relative_error(&toy, STEP, FLOOR);
            assert!(err <= TOLERANCE, "{} (seed {seed}): relative error {err:e}", toy.name);
        }
    }
}

#[test]
fn perturbing_a_weight_moves_the_loss() {
    // guards against a check that passes because every gradient is zero
    let toy = toy_networks(5).remove(1);
    let g = common::analytic(&toy.net, &toy.input, &toy.target);
    assert!(g.squared_norm() > 1e-8);
}
