#![allow(dead_code)]

use ffr_core::{parse_scenario, Scenario};

/// One machine, no lines, no governor.
pub fn single_machine(h: f64, ibr_gain: Option<f64>) -> Scenario {
    let ibr = ibr_gain.map_or(String::new(), |k| {
        format!("[[ibr]]\nbus = 1\ndroop_gain = {k:?}\nfilter_time_s = 0.001\n")
    });
    parse_scenario(&format!(
        r#"
[system]
name = "single machine"

[[buses]]
id = 1
kinetic_energy_gws = {e:?}
rated_power_mw = 1000.0

[[generators]]
bus = 1
kind = "thermal"

{ibr}
[[disturbances]]
bus = 1
magnitude_mw = 100.0
"#,
        e = h
    ))
    .unwrap()
}

/// Two thermal machines with equal damping-to-inertia ratio, so the
/// inter-machine mode is decoupled from the common-mode motion.
pub fn two_machine() -> Scenario {
    parse_scenario(
        r#"
[system]
name = "two machine"

[[buses]]
id = 1
kinetic_energy_gws = 4.0
rated_power_mw = 1000.0

[[buses]]
id = 2
kinetic_energy_gws = 2.0
rated_power_mw = 500.0

[[lines]]
from_bus = 1
to_bus = 2
length_km = 250.0

[[generators]]
bus = 1
kind = "thermal"
damping = 1.0

[[generators]]
bus = 2
kind = "thermal"
damping = 1.0

[[disturbances]]
bus = 1
magnitude_mw = 50.0
"#,
    )
    .unwrap()
}

/// One damped machine with a fast droop controller of gain `k`.
pub fn damped_machine(h: f64, damping: f64, k: f64) -> Scenario {
    parse_scenario(&format!(
        r#"
[[buses]]
id = 1
kinetic_energy_gws = {h:?}
rated_power_mw = 1000.0

[[generators]]
bus = 1
kind = "thermal"
damping = {damping:?}

[[ibr]]
bus = 1
droop_gain = {k:?}
filter_time_s = 0.001

[[disturbances]]
bus = 1
magnitude_mw = 100.0
"#
    ))
    .unwrap()
}
