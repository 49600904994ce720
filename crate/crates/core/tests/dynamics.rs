//! Trajectory-level properties of the solver and the diagnostics built on it.

use std::f64::consts::PI;

use elsim::config::RunConfig;
use elsim::diagnostics::{self, EnergyBalance, LocalEnergyTracker};
use elsim::frank::FrankConstants;
use elsim::grid::{Ball, Grid, GridField, Spectral, VectorField};
use elsim::initial::{self, InitialKind, InitialSpec};
use elsim::reference::SimplifiedSolver;
use elsim::run::{self, Mode, Outcome};
use elsim::solver::{FlowState, Scheme, SchemeConfig, Solver, TimeStep};
use proptest::prelude::*;

fn grid(n: usize) -> Grid {
    Grid::new(n, 2.0 * PI).unwrap()
}

fn general() -> FrankConstants {
    FrankConstants::new(1.2, 0.8, 1.0, 0.1).unwrap()
}

fn director(g: Grid, kind: InitialKind, amplitude: f64, modes: u32, seed: u64) -> VectorField {
    initial::make_director(&InitialSpec { kind, amplitude, mode_count: modes, seed, ..InitialSpec::default() }, g).unwrap()
}

fn velocity(g: Grid, amplitude: f64, modes: u32, seed: u64) -> VectorField {
    initial::make_velocity(&InitialSpec { amplitude, mode_count: modes, seed, ..InitialSpec::default() }, g).unwrap()
}

fn smooth_state(g: Grid, seed: u64) -> FlowState {
    FlowState::new(velocity(g, 0.5, 1, seed + 1), director(g, InitialKind::RandomSmooth, 0.3, 1, seed)).unwrap()
}

fn integrate(k: FrankConstants, scheme: Scheme, state: &FlowState, dt: f64, steps: usize) -> FlowState {
    let cfg = SchemeConfig { scheme, ..SchemeConfig::fixed(dt) };
    let mut solver = Solver::new(state.grid(), k, cfg).unwrap();
    let mut s = state.clone();
    for _ in 0..steps {
        s = solver.step(&s).unwrap();
    }
    s
}

fn distance(a: &FlowState, b: &FlowState) -> f64 {
    let du = a.u.zip_components(&b.u, |x, y| x - y).max_abs();
    let dv = a.v.zip_components(&b.v, |x, y| x - y).max_abs();
    du.max(dv)
}

#[test]
fn imex_scheme_converges_at_first_order() {
    let g = grid(16);
    let s0 = smooth_state(g, 5);
    let t = 0.04;
    let reference = integrate(general(), Scheme::ImexASplit, &s0, t / 1024.0, 1024);
    let coarse = distance(&integrate(general(), Scheme::ImexASplit, &s0, t / 8.0, 8), &reference);
    let fine = distance(&integrate(general(), Scheme::ImexASplit, &s0, t / 16.0, 16), &reference);
    let order = (coarse / fine).log2();
    println!("imex errors {coarse:.3e} {fine:.3e} order {order:.3}");
    assert!((0.8..=1.2).contains(&order), "observed order {order}");
}

#[test]
fn explicit_scheme_agrees_with_imex() {
    let g = grid(16);
    let s0 = smooth_state(g, 6);
    let dt = 1e-3;
    let a = integrate(general(), Scheme::ImexASplit, &s0, dt, 20);
    let b = integrate(general(), Scheme::ExplicitRk2, &s0, dt, 20);
    let gap = distance(&a, &b);
    println!("imex vs rk2 gap {gap:.3e}");
    assert!(gap < 1e-3);
}

#[test]
fn energy_residuals_of_both_schemes_are_consistent() {
    let g = grid(16);
    let k = general();
    let residual = |scheme: Scheme| {
        let mut solver = Solver::new(g, k, SchemeConfig { scheme, ..SchemeConfig::fixed(1e-3) }).unwrap();
        let mut s = solver.with_pressure(smooth_state(g, 7)).unwrap();
        let mut balance = EnergyBalance::new();
        for i in 0..=100 {
            if i > 0 {
                s = solver.step(&s).unwrap();
            }
            balance.push(s.t, diagnostics::total_energy(solver.ops(), &s, &k).total, diagnostics::dissipation_rate(&solver, &s).unwrap());
        }
        balance.max_residual()
    };
    let imex = residual(Scheme::ImexASplit);
    let rk2 = residual(Scheme::ExplicitRk2);
    println!("energy residual imex {imex:.3e} rk2 {rk2:.3e}");
    assert!(imex <= 1e-2 && rk2 <= 2.0 * imex);
}

#[test]
fn director_drift_per_step_shrinks_quadratically_with_dt() {
    let drift = |cfl: f64| {
        let mut cfg = RunConfig { max_steps: 10, t_end: 1e9, ..RunConfig::default() };
        cfg.scheme.time_step = TimeStep::Cfl(cfl);
        let summary = run::run(&cfg, Mode::Dynamic, None).unwrap();
        assert!(summary.last.u.max_unit_drift() <= 1e-14);
        summary.max_drift
    };
    let d = [drift(0.5), drift(0.25), drift(0.125)];
    println!("drift per step {:.3e} {:.3e} {:.3e}", d[0], d[1], d[2]);
    for w in d.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }
    assert!(d[0] <= 1e-3);
}

#[test]
fn director_drift_per_step_meets_the_reference_bound() {
    let cfg = RunConfig { max_steps: 10, t_end: 1e9, ..RunConfig::default() };
    let summary = run::run(&cfg, Mode::Dynamic, None).unwrap();
    assert!(summary.max_drift <= 1e-6, "drift {:.3e} at N = 32, cfl 0.5", summary.max_drift);
}

#[test]
fn zero_data_stays_exactly_constant() {
    let mut cfg = RunConfig { n: 16, t_end: 0.05, ..RunConfig::default() };
    cfg.director.amplitude = 0.0;
    cfg.velocity.amplitude = 0.0;
    let summary = run::run(&cfg, Mode::Dynamic, None).unwrap();
    assert_eq!(summary.outcome, Outcome::Completed);
    assert_eq!(summary.last.u, summary.initial.u);
    assert!(summary.last.v.max_abs() == 0.0 && summary.last.p.max_abs() == 0.0);
}

#[test]
fn small_data_run_has_monotone_energy_and_positive_local_margin() {
    let mut cfg = RunConfig { n: 16, t_end: 0.2, frank: general(), ..RunConfig::default() };
    cfg.diag.cadence = 1;
    let summary = run::run(&cfg, Mode::Dynamic, None).unwrap();
    for w in summary.records.windows(2) {
        assert!(w[1].e_total <= w[0].e_total);
    }
    let report = &summary.local_energy;
    println!("C_report {:.3e} margin {:.3e}", report.c_report, report.margin);
    assert!(report.margin >= 0.0 && report.c_report <= 100.0);
}

#[test]
fn narrower_cutoffs_weigh_cutoff_gradients_more() {
    let g = grid(16);
    let k = general();
    let mut solver = Solver::new(g, k, SchemeConfig::fixed(2e-3)).unwrap();
    let mut states = vec![solver.with_pressure(smooth_state(g, 8)).unwrap()];
    for _ in 0..20 {
        let next = solver.step(states.last().unwrap()).unwrap();
        states.push(next);
    }
    let ball = Ball::new(g, [PI; 3], 2.0).unwrap();
    let mut previous = 0.0;
    for width in [2.0, 1.5, 1.0, 0.5] {
        let mut tracker = LocalEnergyTracker::new(g, ball, width, k.a()).unwrap();
        for s in &states {
            tracker.push(s);
        }
        let term = tracker.report().breakdown.cutoff_gradient;
        assert!(term > previous, "width {width}: {term} <= {previous}");
        previous = term;
    }
}

#[test]
fn gradient_flow_relaxes_a_perturbed_twist() {
    let g = grid(16);
    let k = general();
    let solver = Solver::new(g, k, SchemeConfig::default()).unwrap();
    let ops = Spectral::new(g);
    let mut u = director(g, InitialKind::Twist, 0.3, 1, 3);
    let energy = |u: &VectorField| diagnostics::total_energy(&ops, &FlowState::new(VectorField::zeros(g), u.clone()).unwrap(), &k).elastic;
    let e0 = energy(&u);
    let mut last = e0;
    for _ in 0..50 {
        u = solver.gradient_flow_step(&u, 5e-3).unwrap();
        let e = energy(&u);
        assert!(e < last);
        last = e;
    }
    assert!(last < e0);
}

#[test]
fn equal_constant_gradient_flow_is_harmonic_map_heat_flow() {
    let g = grid(32);
    let solver = Solver::new(g, FrankConstants::equal(), SchemeConfig { dealias: false, ..SchemeConfig::default() }).unwrap();
    let reference = SimplifiedSolver::new(g);
    let mut a = director(g, InitialKind::RandomSmooth, 0.3, 1, 4);
    let mut b = a.clone();
    for _ in 0..10 {
        a = solver.gradient_flow_step(&a, 1e-3).unwrap();
        b = reference.heat_flow_step(&b, 1e-3);
    }
    let gap = a.zip_components(&b, |x, y| x - y).max_abs();
    assert!(gap <= 1e-8, "gap {gap}");
}

#[test]
fn gradient_flow_dissipation_matches_energy_decrease() {
    let g = grid(16);
    let k = general();
    let solver = Solver::new(g, k, SchemeConfig::default()).unwrap();
    let ops = Spectral::new(g);
    let u = director(g, InitialKind::RandomSmooth, 0.3, 1, 9);
    let state = FlowState::new(VectorField::zeros(g), u.clone()).unwrap();
    let rate = diagnostics::dissipation_rate(&solver, &state).unwrap();
    let e = |u: &VectorField| diagnostics::total_energy(&ops, &FlowState::new(VectorField::zeros(g), u.clone()).unwrap(), &k).elastic;
    let mut defects = Vec::new();
    for dt in [1e-4, 5e-5] {
        let slope = (e(&solver.gradient_flow_step(&u, dt).unwrap()) - e(&u)) / dt;
        defects.push((slope + rate).abs() / rate);
    }
    assert!(defects[0] < 0.05);
    assert!(defects[1] < 0.6 * defects[0], "{defects:?}");
}

#[test]
fn equal_constant_momentum_matches_simplified_forcing() {
    let g = grid(64);
    let solver = Solver::new(g, FrankConstants::equal(), SchemeConfig { dealias: false, ..SchemeConfig::default() }).unwrap();
    let state = solver.with_pressure(FlowState::new(velocity(g, 0.5, 1, 11), director(g, InitialKind::RandomSmooth, 0.3, 1, 10)).unwrap()).unwrap();
    let ops = Spectral::new(g);
    let ours = ops.leray_project(&solver.momentum_rhs(&state).unwrap());
    let reference = SimplifiedSolver::new(g);
    let forcing = reference.momentum_forcing(&state.u, &state.v);
    let theirs = ops.leray_project(&ops.laplacian(&state.v).zip_components(&forcing, |a, b| a + b));
    let gap = ours.zip_components(&theirs, |a, b| a - b).max_abs();
    println!("momentum gap {gap:.3e} scale {:.3e}", theirs.max_abs());
    assert!(gap <= 1e-10, "gap {gap}");
    assert!(ops.divergence(&ours).max_abs() <= 1e-10);
}

#[test]
fn scaling_checks_compose() {
    let g = grid(16);
    let solver = Solver::new(g, general(), SchemeConfig::default()).unwrap();
    let s = solver.with_pressure(smooth_state(g, 11)).unwrap();
    let centre = [PI; 3];
    let direct = diagnostics::rescale_state(&s, 4).unwrap();
    let twice = diagnostics::rescale_state(&diagnostics::rescale_state(&s, 2).unwrap(), 2).unwrap();
    assert_eq!(direct, twice);
    let r4 = diagnostics::scaling_check(&s, 4, centre, 2.0).unwrap();
    let r2 = diagnostics::scaling_check(&s, 2, centre, 2.0).unwrap();
    assert!(r4.relative_gap <= 1e-6 && r2.relative_gap <= 1e-6);
    assert!((r4.rescaled - r2.rescaled).abs() <= 1e-6 * r2.original);
}

#[test]
fn l3_uloc_stride_two_is_close_to_exhaustive() {
    let g = grid(16);
    let s = smooth_state(g, 12);
    let ops = Spectral::new(g);
    let grad_u = ops.gradient(&s.u);
    for r in [0.8, 1.5] {
        let full = diagnostics::l3_uloc(&s.v, r, 1).unwrap();
        let strided = diagnostics::l3_uloc(&s.v, r, 2).unwrap();
        assert!(strided <= full && strided >= 0.95 * full, "v, R {r}: {strided} vs {full}");
        let full = diagnostics::l3_uloc(&grad_u, r, 1).unwrap();
        let strided = diagnostics::l3_uloc(&grad_u, r, 2).unwrap();
        assert!(strided <= full && strided >= 0.95 * full, "grad u, R {r}: {strided} vs {full}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_step_stays_divergence_free_and_unit(seed in 0u64..1000, amp_u in 0.0f64..0.8, amp_v in 0.0f64..2.0) {
        let g = grid(16);
        let k = general();
        let state = FlowState::new(velocity(g, amp_v, 2, seed + 1), director(g, InitialKind::RandomSmooth, amp_u, 2, seed)).unwrap();
        let mut solver = Solver::new(g, k, SchemeConfig::default()).unwrap();
        let ops = Spectral::new(g);
        let mut s = state;
        for _ in 0..5 {
            s = solver.step(&s).unwrap();
            prop_assert!(ops.divergence(&s.v).max_abs() <= 1e-9);
            prop_assert!(s.u.max_unit_drift() <= 1e-14);
            prop_assert!(s.p.mean().abs() <= 1e-12 * (1.0 + s.p.max_abs()));
        }
    }

    #[test]
    fn dissipation_is_nonnegative_and_gap_symmetric(seed in 0u64..1000, amp in 0.0f64..1.0) {
        let g = grid(8);
        let solver = Solver::new(g, general(), SchemeConfig::default()).unwrap();
        let a = FlowState::new(velocity(g, amp, 1, seed), director(g, InitialKind::RandomSmooth, amp, 1, seed + 7)).unwrap();
        let b = FlowState::new(velocity(g, 1.0 - amp, 1, seed + 3), director(g, InitialKind::PerturbedConstant, amp, 1, seed + 9)).unwrap();
        prop_assert!(diagnostics::dissipation_rate(&solver, &a).unwrap() >= 0.0);
        let ops = Spectral::new(g);
        let ab = diagnostics::uniqueness_gap(&ops, &a, &b).unwrap();
        let ba = diagnostics::uniqueness_gap(&ops, &b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab.phi >= 0.0);
        let e = diagnostics::total_energy(&ops, &a, solver.constants());
        prop_assert!((e.total - e.elastic - e.kinetic).abs() <= 1e-12 * (1.0 + e.total));
    }
}

#[test]
fn total_energy_ignores_saddle_splay() {
    let g = grid(16);
    let ops = Spectral::new(g);
    let s = FlowState::new(velocity(g, 0.7, 2, 21), director(g, InitialKind::RandomSmooth, 0.8, 3, 20)).unwrap();
    let base = FrankConstants::new(1.1, 1.0, 0.9, 0.0).unwrap();
    let e0 = diagnostics::total_energy(&ops, &s, &base).total;
    for k4 in [-0.9, -0.4, 0.3, 0.6, 0.9] {
        let e = diagnostics::total_energy(&ops, &s, &base.with_k4(k4).unwrap()).total;
        assert!((e - e0).abs() <= 1e-10 * e0, "k4 {k4}: {e} vs {e0}");
    }
}
