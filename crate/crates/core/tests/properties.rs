mod common;

use common::{run, PROPERTIES};

fn check(name: &str) {
    let prop = PROPERTIES.iter().find(|p| p.name == name).expect("known property");
    if let Err(msg) = run(prop) {
        panic!("{msg}");
    }
}

#[test]
fn gauge_p_nestedness() {
    check("gauge_p nestedness in p");
}

#[test]
fn gauge_homogeneity() {
    check("gauge and gauge_p homogeneity");
}

#[test]
fn gauge_dual_norm_polarity() {
    check("gauge/dual-norm polarity");
}

#[test]
fn machine_feasibility() {
    check("machine feasibility");
}

#[test]
fn machine_monotonicity() {
    check("machine monotonicity in psi and p");
}

#[test]
fn dual_alternating_duality() {
    check("dual alternating weak and strong duality");
}

#[test]
fn bnb_equals_oracle() {
    check("branch-and-bound equals oracle");
}

#[test]
fn suite_has_one_thousand_cases() {
    assert_eq!(PROPERTIES.iter().map(|p| p.cases).sum::<u32>(), 1000);
}
