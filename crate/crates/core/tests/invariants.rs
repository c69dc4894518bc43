use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use cqed_core::analytic::light_shift;
use cqed_core::dump::{parse_density, write_density};
use cqed_core::experiments::{
    features, fit_fringe, initial_state, run_transit, run_transit_from, FieldSpec, RunSettings,
};
use cqed_core::fockspace::{excitation_operator, expectation, make_field_state, photon_distribution};
use cqed_core::{khz, AtomLevel, DetuningSchedule, FieldKind, Mode, StepperSettings, SystemParams};

fn field_kind() -> impl Strategy<Value = FieldKind> {
    prop_oneof![
        (0usize..8).prop_map(FieldKind::Fock),
        (0.0f64..12.0).prop_map(FieldKind::coherent_mean),
        (0.0f64..2.0).prop_map(FieldKind::Thermal),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_states_are_normalized(kind in field_kind()) {
        let n_max = FieldSpec::new(kind).n_max();
        let s = make_field_state(kind, n_max).unwrap();
        prop_assert!((s.trace() - 1.0).abs() < 1e-8);
        prop_assert!(s.distribution().iter().all(|&p| (-1e-15..=1.0 + 1e-15).contains(&p)));
        prop_assert!((s.mean() - kind.mean_photons()).abs() < 1e-2 * (1.0 + kind.mean_photons()));
    }

    #[test]
    fn ground_shift_is_linear_in_photon_number(n_a in 0usize..10, n_b in 0usize..10, d in 10.0f64..300.0) {
        let p = SystemParams::nominal();
        let s = |a, b| light_shift(AtomLevel::Ground, a, b, khz(d), p.delta, p.omega0).unwrap().shift;
        let sum = s(n_a, 0) + s(0, n_b);
        prop_assert!((s(n_a, n_b) - sum).abs() <= 1e-9 * sum.abs().max(1.0));
    }

    #[test]
    fn fringe_fit_recovers_phase(phase in -3.0f64..3.0, amp in 0.05f64..0.5) {
        let t_r = 1e-4;
        let pts: Vec<(f64, f64)> = (0..=60)
            .map(|k| {
                let nu = -6000.0 + 200.0 * k as f64;
                (nu, 0.5 + amp * (2.0 * PI * nu * t_r + phase).cos())
            })
            .collect();
        let fit = fit_fringe(&pts, t_r).unwrap();
        prop_assert!((fit.phase - phase).abs() < 1e-9);
        prop_assert!((fit.amplitude - amp).abs() < 1e-9);
    }

    #[test]
    fn feature_prominence_never_exceeds_range(ys in prop::collection::vec(0.0f64..1.0, 3..40)) {
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        for f in features(&pts) {
            prop_assert!(f.prominence >= 0.0);
            prop_assert!(f.prominence <= ys[f.index] - lo + 1e-15);
        }
    }
}

proptest! {
    // each case is a full transit
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn closed_transit_conserves_trace_and_excitations(n in 0usize..5, d in -150.0f64..150.0) {
        let p = SystemParams::nominal().with_velocity(400.0);
        let (fa, fb) = (FieldSpec::vacuum(), FieldSpec::fock(n));
        let rho0 = initial_state(AtomLevel::Excited, &fa, &fb).unwrap();
        let out = run_transit(AtomLevel::Excited, &fa, &fb, &DetuningSchedule::flat(khz(d), &p), &p, &RunSettings::closed()).unwrap();
        let n_op = excitation_operator(rho0.space());
        let dn = expectation(&n_op, &out.state).unwrap().re - expectation(&n_op, &rho0).unwrap().re;
        prop_assert!(dn.abs() < 1e-9);
        prop_assert!(out.trace_drift < 1e-8);
        let pg = out.p_g();
        prop_assert!((0.0..=1.0).contains(&pg));
    }

    #[test]
    fn open_transit_stays_physical(nbar in 0.0f64..1.5, d in -150.0f64..150.0) {
        let p = SystemParams::nominal().with_velocity(400.0).with_thermal(nbar, nbar);
        let out = run_transit(
            AtomLevel::Excited,
            &FieldSpec::thermal(nbar),
            &FieldSpec::vacuum(),
            &DetuningSchedule::flat(khz(d), &p),
            &p,
            &RunSettings::default(),
        ).unwrap();
        prop_assert!(out.trace_drift < 1e-8);
        prop_assert!(out.min_eigenvalue > -1e-8);
        for mode in [Mode::A, Mode::B] {
            let dist = photon_distribution(&out.state, mode);
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn halving_the_step_changes_nothing() {
    let p = SystemParams::nominal();
    let rho0 = initial_state(AtomLevel::Excited, &FieldSpec::vacuum(), &FieldSpec::coherent(6.0)).unwrap();
    let run = |dt: f64| {
        let settings = RunSettings {
            stepper: StepperSettings::fixed(dt),
            ..RunSettings::default()
        };
        run_transit_from(rho0.clone(), &DetuningSchedule::flat(khz(65.0), &p), &p, &settings)
            .unwrap()
            .state
    };
    let coarse = run(0.1e-6);
    let fine = run(0.05e-6);
    let infidelity = 1.0 - coarse.fidelity(&fine).unwrap();
    assert!(infidelity < 1e-6, "{infidelity:e}");
}

#[test]
fn adaptive_agrees_with_fixed() {
    let p = SystemParams::nominal();
    let (fa, fb) = (FieldSpec::vacuum(), FieldSpec::fock(6));
    let sched = DetuningSchedule::flat(khz(65.0), &p);
    let fixed = run_transit(AtomLevel::Excited, &fa, &fb, &sched, &p, &RunSettings::default()).unwrap();
    let adaptive = RunSettings {
        stepper: StepperSettings::adaptive(1e-9),
        ..RunSettings::default()
    };
    let adapt = run_transit(AtomLevel::Excited, &fa, &fb, &sched, &p, &adaptive).unwrap();
    assert_abs_diff_eq!(fixed.p_g(), adapt.p_g(), epsilon = 1e-6);
}

#[test]
fn density_dump_round_trips_after_a_transit() {
    let p = SystemParams::nominal().with_velocity(400.0);
    let out = run_transit(
        AtomLevel::Excited,
        &FieldSpec::vacuum(),
        &FieldSpec::fock(2),
        &DetuningSchedule::flat(khz(65.0), &p),
        &p,
        &RunSettings::default(),
    )
    .unwrap();
    let text = write_density(&out.state);
    assert!(text.starts_with("operator "));
    let back = parse_density(&text).unwrap();
    assert_eq!(back.space(), out.state.space());
    assert!((back.matrix() - out.state.matrix()).norm() < 1e-12);
}
