mod common;

use ffr_core::linearizer::closed_loop_of;
use ffr_core::scenario::{bundled, DisturbanceSpec};
use ffr_core::timesim::max_stable_dt;
use ffr_core::*;

#[test]
fn no_disturbance_stays_at_nominal() {
    let s = bundled("high_inertia").unwrap();
    let cl = closed_loop_of(&s).unwrap();
    let ds = [DisturbanceSpec { bus: 2, magnitude_mw: 0.0 }];
    let tr = step_response(&cl, &ds, 10.0, 1e-3).unwrap();
    assert!(tr.f_coi.iter().all(|f| *f == 50.0));
    assert!(tr.p_ibr.iter().flatten().all(|p| *p == 0.0));
    let mt = metrics(&tr, 50.0).unwrap();
    assert_eq!((mt.nadir_hz, mt.rocof_hz_s, mt.oscillation), (50.0, 0.0, None));
}

#[test]
fn single_machine_initial_slope() {
    let s = common::single_machine(5.0, None);
    let cl = closed_loop_of(&s).unwrap();
    let tr = step_response(&cl, &s.disturbances, 10.0, 1e-3).unwrap();
    let mt = metrics(&tr, 50.0).unwrap();
    assert!((mt.rocof_hz_s + 0.5).abs() < 1e-9, "{}", mt.rocof_hz_s);
    assert!((mt.initial_rocof_hz_s + 0.5).abs() < 1e-9);
}

#[test]
fn single_generator_coi_is_its_frequency() {
    let s = common::single_machine(5.0, Some(20.0));
    let tr = step_response(&closed_loop_of(&s).unwrap(), &s.disturbances, 10.0, 1e-3).unwrap();
    assert_eq!(tr.f_coi, tr.freq[0]);
}

#[test]
fn coi_matches_weighted_buses_at_every_sample() {
    let s = bundled("low_inertia").unwrap();
    let tr = step_response(&closed_loop_of(&s).unwrap(), &s.disturbances, 10.0, 1e-3).unwrap();
    let h = &tr.inertias;
    let total: f64 = h.iter().sum();
    for k in (0..tr.t.len()).step_by(97) {
        let f: f64 = (0..h.len()).map(|i| h[i] * tr.freq[i][k]).sum::<f64>() / total;
        assert!((f - tr.f_coi[k]).abs() < 1e-12);
    }
}

#[test]
fn nadir_below_steady_state_below_nominal() {
    for name in ["high_inertia", "low_inertia", "mitigated_allocation"] {
        let s = bundled(name).unwrap();
        let tr = step_response(&closed_loop_of(&s).unwrap(), &s.disturbances, 40.0, 1e-3).unwrap();
        let mt = metrics(&tr, 50.0).unwrap();
        assert!(mt.nadir_hz <= mt.steady_state_hz && mt.steady_state_hz <= 50.0, "{name}: {mt:?}");
    }
}

#[test]
fn superposition() {
    let s = bundled("high_inertia").unwrap();
    let cl = closed_loop_of(&s).unwrap();
    let d1 = [DisturbanceSpec { bus: 2, magnitude_mw: 400.0 }];
    let d2 = [DisturbanceSpec { bus: 5, magnitude_mw: -150.0 }];
    let both = [d1[0].clone(), d2[0].clone()];
    let run = |d: &[DisturbanceSpec]| step_response(&cl, d, 10.0, 1e-3).unwrap();
    let (a, b, c) = (run(&d1), run(&d2), run(&both));
    for i in 0..a.domega.len() {
        for k in 0..a.t.len() {
            assert!((a.domega[i][k] + b.domega[i][k] - c.domega[i][k]).abs() < 1e-14);
        }
    }
}

#[test]
fn oversized_step_is_refused_with_a_suggestion() {
    let s = bundled("high_inertia").unwrap();
    let cl = closed_loop_of(&s).unwrap();
    match step_response(&cl, &s.disturbances, 40.0, 0.5) {
        Err(Error::StepTooLarge { suggested, .. }) => {
            assert!(suggested <= max_stable_dt(&cl.a_cl));
            step_response(&cl, &s.disturbances, 10.0, suggested).unwrap();
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn short_horizon_is_invalid() {
    let s = bundled("high_inertia").unwrap();
    let cl = closed_loop_of(&s).unwrap();
    assert!(step_response(&cl, &s.disturbances, 5.0, 1e-3).unwrap_err().is_validation());
}

#[test]
fn growing_verdict_agrees_with_modal_instability() {
    let s = bundled("high_droop_bus3").unwrap();
    for gain in [150.0, 200.0, 220.0] {
        let mut sc = s.clone();
        sc.ibr[0].droop_gain = gain;
        let cl = closed_loop_of(&sc).unwrap();
        let unstable = eigenvalues(&cl.a_cl).unwrap().max_real() > 1e-8;
        let tr = step_response(&cl, &sc.disturbances, 40.0, 1e-3).unwrap();
        let growing = metrics(&tr, 50.0)
            .unwrap()
            .oscillation
            .is_some_and(|o| o.kind == OscillationKind::Growing);
        assert_eq!(growing, unstable, "gain {gain}");
    }
}
