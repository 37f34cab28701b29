mod common;

use approx::assert_relative_eq;
use ffr_core::freq::{Input, Output};
use ffr_core::linearizer::{close_loop, closed_loop_of};
use ffr_core::scenario::{bundled, bundled_names};
use ffr_core::{eigen, evaluate_tf, linearize, metrics, step_response, FrequencyGrid};

#[test]
fn single_machine_swing_equation() {
    let s = common::single_machine(5.0, None);
    let m = linearize(&s).unwrap();
    let wb = 2.0 * std::f64::consts::PI * 50.0;
    assert_eq!(m.a.as_slice(), &[0.0, 0.0, wb, 0.0]);
    assert_relative_eq!(m.b_d[(1, 0)], -1.0 / 10.0, max_relative = 1e-15);
}

#[test]
fn state_count_of_the_test_system() {
    let s = bundled("high_inertia").unwrap();
    let m = linearize(&s).unwrap();
    assert_eq!(m.n_states(), 5 * 2 + 3 * 3);
    assert!(m.check_dimensions());
    let cl = close_loop(&m, &s.ibr).unwrap();
    // Each controller here carries a filter and a response lag.
    assert_eq!(cl.n_states(), m.n_states() + 2 * s.ibr.len());
}

#[test]
fn coi_row_uses_kinetic_energy_weights() {
    let m = linearize(&bundled("high_inertia").unwrap()).unwrap();
    let w = [34.0, 22.5, 7.5, 33.0, 13.0];
    for (i, wi) in w.iter().enumerate() {
        assert_relative_eq!(m.c_z[(0, 5 + i)], wi / 110.0, max_relative = 1e-14);
    }
    assert_eq!(m.c_z.row(0).iter().filter(|v| **v != 0.0).count(), 5);
}

#[test]
fn open_loop_has_one_reference_mode_and_is_otherwise_stable() {
    for name in bundled_names() {
        let m = linearize(&bundled(name).unwrap()).unwrap();
        let sp = eigen::eig(&m.a);
        assert_eq!(sp.unconverged, 0);
        assert_eq!(sp.values.iter().filter(|l| l.norm() < 1e-8).count(), 1, "{name}");
        assert!(sp.values.iter().filter(|l| l.norm() >= 1e-8).all(|l| l.re < 0.0), "{name}");
    }
}

#[test]
fn zero_gain_controller_leaves_gzd_unchanged() {
    let s = bundled("high_inertia").unwrap().with_zero_ibr();
    let m = linearize(&s).unwrap();
    let cl = close_loop(&m, &s.ibr).unwrap();
    let w = FrequencyGrid::default().points();
    let k = m.disturbance_channel(2).unwrap();
    let g = evaluate_tf(&m, Input::D(k), Output::Z(0), &w).unwrap();
    let t = evaluate_tf(&cl.as_plant(), Input::D(k), Output::Z(0), &w).unwrap();
    for (a, b) in g.values.iter().zip(&t.values) {
        assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
    }
}

#[test]
fn droop_sets_the_final_value() {
    let s = common::single_machine(5.0, Some(20.0));
    let cl = closed_loop_of(&s).unwrap();
    let tr = step_response(&cl, &s.disturbances, 20.0, 1e-3).unwrap();
    assert!((tr.domega[0].last().unwrap() + 0.005).abs() < 1e-8);
    let mt = metrics(&tr, 50.0).unwrap();
    assert!((mt.steady_state_hz - 50.0 * (1.0 - 0.005)).abs() < 1e-6);
}

#[test]
fn reference_eigenvector_is_uniform_over_angles() {
    for name in bundled_names() {
        let cl = closed_loop_of(&bundled(name).unwrap()).unwrap();
        let sp = eigen::eig(&cl.a_cl);
        let l0 = *sp.values.iter().min_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        let (v, _) = eigen::eigenvector(&cl.a_cl, l0);
        let nb = cl.plant.meta.buses.len();
        let scale = v[0];
        for i in 0..v.len() {
            let expect = if i < nb { 1.0 } else { 0.0 };
            assert!((v[i] / scale - expect).norm() < 1e-8, "{name} state {i}");
        }
    }
}

#[test]
fn duplicate_and_unknown_channels_are_rejected() {
    let s = bundled("high_inertia").unwrap();
    let m = linearize(&s).unwrap();
    let mut two = s.ibr.clone();
    two.push(two[0].clone());
    assert!(close_loop(&m, &two).is_err());
    let mut elsewhere = s.ibr.clone();
    elsewhere[0].bus = 4;
    assert!(close_loop(&m, &elsewhere).is_err());
}

#[test]
fn all_matrices_are_finite() {
    for name in bundled_names() {
        let cl = closed_loop_of(&bundled(name).unwrap()).unwrap();
        assert!(cl.a_cl.iter().chain(cl.b_d.iter()).chain(cl.c_z.iter()).all(|v| v.is_finite()));
    }
}
