mod common;

use approx::assert_relative_eq;
use ffr_core::network::components;
use ffr_core::scenario::{bundled, bundled_names, machine_inertia, kinetic_energy};
use ffr_core::{build_network, parse_scenario, Error};

fn table2_defaults() -> ffr_core::Scenario {
    let mut s = bundled("high_inertia").unwrap();
    s.system.nominal_kv = 400.0;
    s.system.reactance_ohm_per_km = 0.3;
    s
}

#[test]
fn hand_evaluated_susceptance() {
    let b = build_network(&table2_defaults()).unwrap();
    assert_relative_eq!(b[(0, 1)], -160.0 / (0.3 * 300.0), max_relative = 1e-14);
    assert_relative_eq!(b[(0, 0)], 160.0 / 90.0 + 160.0 / 30.0, max_relative = 1e-14);
}

#[test]
fn laplacian_structure_on_bundled_scenarios() {
    for name in bundled_names() {
        let b = build_network(&bundled(name).unwrap()).unwrap();
        assert_eq!(b, b.transpose());
        for i in 0..b.nrows() {
            assert!(b.row(i).sum().abs() < 1e-12, "{name} row {i}");
        }
        let ev = b.symmetric_eigenvalues();
        let zeros = ev.iter().filter(|v| v.abs() < 1e-9 * b.amax()).count();
        assert_eq!(zeros, 1, "{name}: {ev}");
    }
}

#[test]
fn disconnected_graph_lists_components() {
    let mut s = bundled("high_inertia").unwrap();
    s.lines.retain(|l| !(l.from_bus == 3 && l.to_bus == 5) && !(l.from_bus == 2 && l.to_bus == 3));
    match s.validate() {
        Err(Error::Disconnected(c)) => assert_eq!(c, vec![vec![1, 2, 4], vec![3], vec![5]]),
        other => panic!("{other:?}"),
    }
    assert_eq!(components(&s).len(), 3);
}

#[test]
fn kinetic_energy_totals() {
    assert_relative_eq!(bundled("high_inertia").unwrap().total_kinetic_energy(), 110.0, max_relative = 1e-14);
    assert_relative_eq!(bundled("low_inertia").unwrap().total_kinetic_energy(), 74.25, max_relative = 1e-14);
}

#[test]
fn inertia_round_trip_on_table_values() {
    for (e, p) in [(34.0, 9000.0), (11.25, 3000.0), (7.5, 2000.0)] {
        assert_relative_eq!(kinetic_energy(machine_inertia(e, p), p), e, max_relative = 1e-12);
    }
}

#[test]
fn self_loop_error_names_the_line() {
    let mut src = bundled("high_inertia").unwrap().to_toml();
    src = src.replacen("to_bus = 4", "to_bus = 1", 1);
    let e = parse_scenario(&src).unwrap_err();
    assert!(e.to_string().contains("lines[1]"), "{e}");
    assert!(e.is_validation());
}

#[test]
fn unknown_key_is_reported_with_path() {
    let src = bundled("high_inertia").unwrap().to_toml().replacen("[system]", "[system]\nfrequency = 60", 1);
    match parse_scenario(&src) {
        Err(Error::UnknownKey(k)) => assert!(k.contains("system.frequency"), "{k}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_file_is_a_parse_error() {
    assert!(matches!(parse_scenario("[system\nname = 1"), Err(Error::Parse(_))));
}
