//! One test per acceptance criterion; each prints its verdict line.

use elsim::check::{self, CriterionOutcome};

fn assert_criterion(outcome: CriterionOutcome) {
    println!("{outcome}");
    assert!(outcome.passed, "{outcome}");
}

#[test]
fn c01_energy_density_derivatives() {
    assert_criterion(check::derivatives());
}

#[test]
fn c02_pointwise_ellipticity() {
    assert_criterion(check::ellipticity());
}

#[test]
fn c03_equal_constant_reduction() {
    assert_criterion(check::equal_constant_reduction());
}

#[test]
fn c04_saddle_splay_null_lagrangian() {
    assert_criterion(check::null_lagrangian());
}

#[test]
fn c05_frame_invariance() {
    assert_criterion(check::rotation_invariance());
}

#[test]
fn c06_director_tangency() {
    assert_criterion(check::tangency());
}

#[test]
fn c07_energy_law() {
    assert_criterion(check::energy_law());
}

#[test]
fn c08_scaling_invariance() {
    assert_criterion(check::scaling_invariance());
}

#[test]
fn c09_incompressibility_and_determinism() {
    assert_criterion(check::incompressibility_and_determinism());
}

#[test]
fn c10_stability_functional() {
    assert_criterion(check::stability_functional());
}

#[test]
fn c11_blowup_monitor() {
    assert_criterion(check::blowup_monitor());
}

#[test]
fn c12_interpolation_inequality() {
    assert_criterion(check::interpolation_inequality());
}
