//! Acceptance suite: runs every numbered criterion at its stated tolerance
//! and wall-time budget, printing one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p ifslab --test acceptance -- --nocapture` to see
//! the lines; `ifslab verify-all` prints the same from the CLI.

use ifslab::verify::run_criterion;

fn check(id: usize) {
    let result = run_criterion(id).expect("unknown criterion id");
    println!("{}", result.line());
    assert!(result.passed, "{}", result.line());
}

#[test]
fn criterion_01_exact_stationarity() {
    check(1);
}

#[test]
fn criterion_02_cube_map_round_trip() {
    check(2);
}

#[test]
fn criterion_03_fiber_uniformity() {
    check(3);
}

#[test]
fn criterion_04_root_classification() {
    check(4);
}

#[test]
fn criterion_05_coefficient_law() {
    check(5);
}

#[test]
fn criterion_06_boundedness_threshold() {
    check(6);
}

#[test]
fn criterion_07_divergence_scaling() {
    check(7);
}

#[test]
fn criterion_08_synchronization() {
    check(8);
}

#[test]
fn criterion_09_intermittency() {
    check(9);
}

#[test]
fn criterion_10_wald_and_martingale() {
    check(10);
}

#[test]
fn criterion_11_infinite_expectation_signature() {
    check(11);
}

#[test]
fn criterion_12_sigma_finite_regime() {
    check(12);
}
