mod common;

use std::f64::consts::PI;

use ffr_core::linearizer::{close_loop, closed_loop_of};
use ffr_core::scenario::{bundled, bundled_names};
use ffr_core::*;
use nalgebra::DMatrix;
use num_complex::Complex64;

fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    v
}

#[test]
fn harmonic_and_diagonal_spectra() {
    let ms = eigenvalues(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, 0.0])).unwrap();
    for m in &ms.modes {
        assert!((m.lambda.im.abs() - 2.0).abs() < 1e-14 && m.zeta.abs() < 1e-14);
        assert!((m.freq_hz - 1.0 / PI).abs() < 1e-14);
    }
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, -0.5, -7.25, -1.0]));
    let got: Vec<f64> = sorted(ffr_core::eigen::eig(&d).values).iter().map(|l| l.re).collect();
    assert_eq!(got, vec![-7.25, -3.0, -1.0, -0.5]);
}

#[test]
fn agrees_with_nalgebra_on_bundled_closed_loops() {
    for name in bundled_names() {
        let cl = closed_loop_of(&bundled(name).unwrap()).unwrap();
        let ours = sorted(ffr_core::eigen::eig(&cl.a_cl).values);
        let theirs = sorted(cl.a_cl.clone().complex_eigenvalues().iter().copied().collect());
        let scale = cl.a_cl.amax();
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).norm() < 1e-8 * scale, "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn conjugate_pairs_and_damping_range() {
    for name in bundled_names() {
        let ms = eigenvalues(&closed_loop_of(&bundled(name).unwrap()).unwrap().a_cl).unwrap();
        for m in ms.modes.iter().filter(|m| m.is_oscillatory()) {
            assert!(ms.modes.iter().any(|o| (o.lambda - m.lambda.conj()).norm() < 1e-9 * m.lambda.norm()));
            assert!(m.zeta > -1.0 && m.zeta <= 1.0);
        }
        assert!(ms.reference_mode.is_some());
        assert!(ms.max_residual < 1e-8);
    }
}

#[test]
fn zero_gain_adds_only_controller_poles() {
    for name in bundled_names() {
        let s = bundled(name).unwrap().with_zero_ibr();
        let m = linearize(&s).unwrap();
        let cl = close_loop(&m, &s.ibr).unwrap();
        let mut expect = ffr_core::eigen::eig(&m.a).values;
        for c in &s.ibr {
            expect.push(Complex64::new(-1.0 / c.filter_time_s, 0.0));
            if c.response_time_s > 0.0 {
                expect.push(Complex64::new(-1.0 / c.response_time_s, 0.0));
            }
        }
        let (a, b) = (sorted(expect), sorted(ffr_core::eigen::eig(&cl.a_cl).values));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-8, "{name}: {x} vs {y}");
        }
    }
}

#[test]
fn sweep_at_zero_gain_matches_open_loop() {
    let s = bundled("high_droop_bus3").unwrap();
    let sw = damping_sweep(&s, 3, &[0.0]).unwrap();
    let open = eigenvalues(&linearize(&s.with_zero_ibr()).unwrap().a).unwrap();
    assert!((sw.min_zeta[0] - open.min_zeta()).abs() < 1e-10);
}

#[test]
fn bundled_droop_level_is_close_to_critical() {
    let s = bundled("high_droop_bus3").unwrap();
    let gains: Vec<f64> = (0..=30).map(|k| 8.0 * k as f64).collect();
    let sw = damping_sweep(&s, 3, &gains).unwrap();
    let kc = sw.critical_gain.unwrap();
    let nominal = s.ibr[0].droop_gain;
    let at = damping_sweep(&s, 3, &[nominal]).unwrap();
    assert!(at.min_zeta[0] > 0.0 && at.min_zeta[0] < 0.01, "{}", at.min_zeta[0]);
    assert!(nominal < kc && nominal > 0.9 * kc);
    // Strict decrease just below the crossing.
    let i = gains.iter().position(|&g| g > kc).unwrap();
    assert!(sw.min_zeta[i - 6..=i].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn eigenvalues_move_continuously_with_gain() {
    let s = bundled("high_droop_bus3").unwrap();
    let spectrum = |g: f64| {
        let mut sc = s.clone();
        sc.ibr[0].droop_gain = g;
        sorted(ffr_core::eigen::eig(&closed_loop_of(&sc).unwrap().a_cl).values)
    };
    let displacement = |h: f64| {
        let (a, b) = (spectrum(100.0), spectrum(100.0 + h));
        a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    };
    let (coarse, fine) = (displacement(1.0), displacement(0.1));
    assert!(fine < 0.2 * coarse, "{fine} vs {coarse}");
}

#[test]
fn log_decrement_agrees_with_modal_damping() {
    let s = common::two_machine();
    let cl = closed_loop_of(&s).unwrap();
    let m = *eigenvalues(&cl.a_cl).unwrap().least_damped().unwrap();
    let tr = step_response(&cl, &s.disturbances, 20.0, 1e-3).unwrap();
    let y: Vec<f64> = tr.domega[0].iter().zip(&tr.domega[1]).map(|(a, b)| a - b).collect();
    let z = ffr_core::timesim::log_decrement(&tr.t, &y).unwrap();
    assert!((z / m.zeta - 1.0).abs() < 0.05, "{z} vs {}", m.zeta);
}
