//! Scenario files: schema, defaults, validation and per-unit helpers.
//!
//! Scenarios are TOML documents with the top-level keys `system`,
//! `buses`, `lines`, `generators`, `ibr`, `disturbances` and `study`.
//! Unknown keys are rejected so that typos do not silently fall back to
//! defaults.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_S_BASE_MVA: f64 = 1000.0;
pub const DEFAULT_F0_HZ: f64 = 50.0;
pub const DEFAULT_NOMINAL_KV: f64 = 400.0;
pub const DEFAULT_REACTANCE_OHM_PER_KM: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub system: SystemSpec,
    pub buses: Vec<BusSpec>,
    #[serde(default)]
    pub lines: Vec<LineSpec>,
    #[serde(default)]
    pub generators: Vec<GeneratorSpec>,
    #[serde(default)]
    pub ibr: Vec<IbrControllerSpec>,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceSpec>,
    #[serde(default)]
    pub study: StudySettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default = "d_s_base")]
    pub s_base_mva: f64,
    #[serde(default = "d_f0")]
    pub f0_hz: f64,
    /// Voltage for buses that do not set their own.
    #[serde(default = "d_kv")]
    pub nominal_kv: f64,
    /// Reactance for lines that do not set their own.
    #[serde(default = "d_x")]
    pub reactance_ohm_per_km: f64,
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec {
            name: String::new(),
            s_base_mva: DEFAULT_S_BASE_MVA,
            f0_hz: DEFAULT_F0_HZ,
            nominal_kv: DEFAULT_NOMINAL_KV,
            reactance_ohm_per_km: DEFAULT_REACTANCE_OHM_PER_KM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub id: usize,
    /// Stored rotational energy at nominal speed, GWs.
    #[serde(default)]
    pub kinetic_energy_gws: f64,
    /// Rated power of the machine at this bus, MW. Also its MVA base.
    #[serde(default)]
    pub rated_power_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_kv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub from_bus: usize,
    pub to_bus: usize,
    pub length_km: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactance_ohm_per_km: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Hydro,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub bus: usize,
    pub kind: GeneratorKind,
    /// Load/damping torque, pu torque per pu speed on the machine base.
    #[serde(default)]
    pub damping: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub governor: Option<GovernorSpec>,
}

/// Hydro governor with transient droop and a water column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernorSpec {
    /// Steady-state gain 1/R, pu power per pu frequency on the system base.
    pub droop_gain: f64,
    #[serde(default = "d_tg")]
    pub servo_time_s: f64,
    #[serde(default = "d_tr")]
    pub reset_time_s: f64,
    #[serde(default = "d_rt")]
    pub transient_droop: f64,
    #[serde(default = "d_tw")]
    pub water_time_s: f64,
}

impl GovernorSpec {
    pub fn with_gain(droop_gain: f64) -> Self {
        GovernorSpec {
            droop_gain,
            servo_time_s: d_tg(),
            reset_time_s: d_tr(),
            transient_droop: d_rt(),
            water_time_s: d_tw(),
        }
    }
}

/// Droop controller of an inverter-based resource fed by the local bus
/// frequency: `u = -K / ((1 + s T_f)(1 + s T_a)) · Δω`. The power-response
/// lag `T_a` is optional; zero leaves the measurement filter alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbrControllerSpec {
    pub bus: usize,
    pub droop_gain: f64,
    pub filter_time_s: f64,
    #[serde(default)]
    pub response_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub bus: usize,
    /// Power deficit, MW. Positive means lost generation or added load.
    pub magnitude_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    #[serde(default = "d_wmin")]
    pub omega_min: f64,
    #[serde(default = "d_wmax")]
    pub omega_max: f64,
    #[serde(default = "d_ppd")]
    pub points_per_decade: usize,
    #[serde(default = "d_horizon")]
    pub horizon_s: f64,
    #[serde(default = "d_dt")]
    pub dt_s: f64,
    /// Alternative buses for relocating the scenario's reserves in
    /// placement comparisons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub placements: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<AllocationSettings>,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            omega_min: d_wmin(),
            omega_max: d_wmax(),
            points_per_decade: d_ppd(),
            horizon_s: d_horizon(),
            dt_s: d_dt(),
            placements: Vec::new(),
            allocation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSettings {
    pub candidates: Vec<usize>,
    #[serde(default = "d_cap")]
    pub cap: f64,
    #[serde(default = "d_step")]
    pub step: f64,
}

fn d_s_base() -> f64 {
    DEFAULT_S_BASE_MVA
}
fn d_f0() -> f64 {
    DEFAULT_F0_HZ
}
fn d_kv() -> f64 {
    DEFAULT_NOMINAL_KV
}
fn d_x() -> f64 {
    DEFAULT_REACTANCE_OHM_PER_KM
}
fn d_tg() -> f64 {
    0.2
}
fn d_tr() -> f64 {
    5.0
}
fn d_rt() -> f64 {
    0.4
}
fn d_tw() -> f64 {
    1.0
}
fn d_wmin() -> f64 {
    1e-2
}
fn d_wmax() -> f64 {
    1e2
}
fn d_ppd() -> usize {
    100
}
fn d_horizon() -> f64 {
    40.0
}
fn d_dt() -> f64 {
    1e-3
}
pub(crate) fn d_cap() -> f64 {
    1.35
}
pub(crate) fn d_step() -> f64 {
    0.01
}

const BUNDLED: [(&str, &str); 4] = [
    ("high_inertia.scn", include_str!("../scenarios/high_inertia.scn")),
    ("low_inertia.scn", include_str!("../scenarios/low_inertia.scn")),
    ("high_droop_bus3.scn", include_str!("../scenarios/high_droop_bus3.scn")),
    ("mitigated_allocation.scn", include_str!("../scenarios/mitigated_allocation.scn")),
];

/// Names of the scenarios compiled into the library.
pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// Source text of a bundled scenario, by file name with or without `.scn`.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    let key = name.strip_suffix(".scn").unwrap_or(name);
    BUNDLED
        .iter()
        .find(|(n, _)| n.strip_suffix(".scn") == Some(key))
        .map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Result<Scenario> {
    let src = bundled_source(name).ok_or_else(|| Error::invalid("scenario", format!("no bundled scenario `{name}`")))?;
    parse_scenario(src)
}

/// Reads a scenario from disk. A path that does not exist but names a
/// bundled scenario resolves to the bundled copy.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    match std::fs::read_to_string(path) {
        Ok(src) => parse_scenario(&src),
        Err(e) => {
            let fname = path.file_name().and_then(|f| f.to_str()).unwrap_or("");
            if path.components().count() == 1 {
                if let Some(src) = bundled_source(fname) {
                    return parse_scenario(src);
                }
            }
            Err(Error::Io {
                path: path.display().to_string(),
                source: e,
            })
        }
    }
}

/// Parses and validates scenario text.
pub fn parse_scenario(src: &str) -> Result<Scenario> {
    let de = toml::Deserializer::parse(src).map_err(|e| Error::Parse(e.to_string()))?;
    let mut unknown = Vec::new();
    let parsed: std::result::Result<Scenario, _> = serde_ignored::deserialize(de, |p| unknown.push(p.to_string()));
    if let Some(first) = unknown.into_iter().next() {
        return Err(Error::UnknownKey(first));
    }
    let s = parsed.map_err(|e| Error::Parse(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

impl Scenario {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus(&self, id: usize) -> Option<&BusSpec> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn generator_at(&self, bus: usize) -> Option<&GeneratorSpec> {
        self.generators.iter().find(|g| g.bus == bus)
    }

    pub fn bus_kv(&self, id: usize) -> f64 {
        self.bus(id).and_then(|b| b.nominal_kv).unwrap_or(self.system.nominal_kv)
    }

    pub fn line_reactance(&self, line: &LineSpec) -> f64 {
        line.reactance_ohm_per_km.unwrap_or(self.system.reactance_ohm_per_km)
    }

    pub fn omega_base(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.system.f0_hz
    }

    /// Inertia constant of the machine at `bus` on its own MVA base, s.
    pub fn inertia_machine(&self, bus: usize) -> f64 {
        let b = self.bus(bus).expect("validated bus");
        machine_inertia(b.kinetic_energy_gws, b.rated_power_mw)
    }

    /// Inertia constant of the machine at `bus` on the system base, s.
    pub fn inertia_system(&self, bus: usize) -> f64 {
        let b = self.bus(bus).expect("validated bus");
        b.kinetic_energy_gws * 1e3 / self.system.s_base_mva
    }

    pub fn total_kinetic_energy(&self) -> f64 {
        self.buses.iter().map(|b| b.kinetic_energy_gws).sum()
    }

    /// Summed governor and IBR droop gains, pu on the system base.
    pub fn total_droop(&self) -> f64 {
        let gov: f64 = self
            .generators
            .iter()
            .filter_map(|g| g.governor.as_ref())
            .map(|g| g.droop_gain)
            .sum();
        gov + self.ibr.iter().map(|c| c.droop_gain).sum::<f64>()
    }

    pub fn to_pu(&self, mw: f64) -> f64 {
        mw / self.system.s_base_mva
    }

    /// Copy with all reserves moved to `bus`, keeping gains and time constants.
    pub fn with_ibr_at(&self, bus: usize) -> Scenario {
        let mut s = self.clone();
        let gain: f64 = s.ibr.iter().map(|c| c.droop_gain).sum();
        if let Some(first) = s.ibr.first().cloned() {
            s.ibr = vec![IbrControllerSpec { bus, droop_gain: gain, ..first }];
        }
        s
    }

    /// Copy with every IBR droop gain set to zero.
    pub fn with_zero_ibr(&self) -> Scenario {
        let mut s = self.clone();
        s.ibr.iter_mut().for_each(|c| c.droop_gain = 0.0);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let sys = &self.system;
        positive("system.s_base_mva", sys.s_base_mva)?;
        positive("system.f0_hz", sys.f0_hz)?;
        positive("system.nominal_kv", sys.nominal_kv)?;
        positive("system.reactance_ohm_per_km", sys.reactance_ohm_per_km)?;

        if self.buses.is_empty() {
            return Err(Error::invalid("buses", "at least one bus is required"));
        }
        let mut ids: Vec<usize> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        for (i, b) in self.buses.iter().enumerate() {
            if self.buses[..i].iter().any(|o| o.id == b.id) {
                return Err(Error::invalid(format!("buses[{i}].id"), format!("duplicate bus id {}", b.id)));
            }
        }
        if ids.iter().enumerate().any(|(k, &id)| id != k + 1) {
            let i = self.buses.iter().position(|b| b.id == 0 || b.id > self.buses.len()).unwrap_or(0);
            return Err(Error::invalid(format!("buses[{i}].id"), "bus ids must be contiguous from 1"));
        }
        for (i, b) in self.buses.iter().enumerate() {
            nonneg(&format!("buses[{i}].kinetic_energy_gws"), b.kinetic_energy_gws)?;
            nonneg(&format!("buses[{i}].rated_power_mw"), b.rated_power_mw)?;
            if let Some(kv) = b.nominal_kv {
                positive(&format!("buses[{i}].nominal_kv"), kv)?;
            }
        }

        for (i, l) in self.lines.iter().enumerate() {
            let p = format!("lines[{i}]");
            self.check_bus(&format!("{p}.from_bus"), l.from_bus)?;
            self.check_bus(&format!("{p}.to_bus"), l.to_bus)?;
            if l.from_bus == l.to_bus {
                return Err(Error::invalid(format!("{p}.to_bus"), format!("line {i} connects bus {} to itself", l.from_bus)));
            }
            positive(&format!("{p}.length_km"), l.length_km)?;
            if let Some(x) = l.reactance_ohm_per_km {
                positive(&format!("{p}.reactance_ohm_per_km"), x)?;
            }
            if (self.bus_kv(l.from_bus) - self.bus_kv(l.to_bus)).abs() > 1e-9 {
                return Err(Error::invalid(format!("{p}"), "line ends have different nominal voltages"));
            }
        }
        let comps = crate::network::components(self);
        if comps.len() > 1 {
            return Err(Error::Disconnected(comps));
        }

        for (i, g) in self.generators.iter().enumerate() {
            let p = format!("generators[{i}]");
            self.check_bus(&format!("{p}.bus"), g.bus)?;
            if self.generators[..i].iter().any(|o| o.bus == g.bus) {
                return Err(Error::invalid(format!("{p}.bus"), format!("second generator at bus {}", g.bus)));
            }
            let b = self.bus(g.bus).expect("checked");
            positive(&format!("{p}: bus {} rated_power_mw", g.bus), b.rated_power_mw)?;
            positive(&format!("{p}: bus {} kinetic_energy_gws", g.bus), b.kinetic_energy_gws)?;
            nonneg(&format!("{p}.damping"), g.damping)?;
            if let Some(gov) = &g.governor {
                if g.kind == GeneratorKind::Thermal {
                    return Err(Error::invalid(format!("{p}.governor"), "thermal units carry no governor"));
                }
                nonneg(&format!("{p}.governor.droop_gain"), gov.droop_gain)?;
                positive(&format!("{p}.governor.servo_time_s"), gov.servo_time_s)?;
                positive(&format!("{p}.governor.reset_time_s"), gov.reset_time_s)?;
                positive(&format!("{p}.governor.transient_droop"), gov.transient_droop)?;
                positive(&format!("{p}.governor.water_time_s"), gov.water_time_s)?;
            }
        }

        for (i, c) in self.ibr.iter().enumerate() {
            let p = format!("ibr[{i}]");
            self.check_bus(&format!("{p}.bus"), c.bus)?;
            if self.ibr[..i].iter().any(|o| o.bus == c.bus) {
                return Err(Error::invalid(format!("{p}.bus"), format!("second controller at bus {}", c.bus)));
            }
            nonneg(&format!("{p}.droop_gain"), c.droop_gain)?;
            positive(&format!("{p}.filter_time_s"), c.filter_time_s)?;
            nonneg(&format!("{p}.response_time_s"), c.response_time_s)?;
        }

        for (i, d) in self.disturbances.iter().enumerate() {
            let p = format!("disturbances[{i}]");
            self.check_bus(&format!("{p}.bus"), d.bus)?;
            if !d.magnitude_mw.is_finite() || d.magnitude_mw == 0.0 {
                return Err(Error::invalid(format!("{p}.magnitude_mw"), "must be finite and nonzero"));
            }
        }

        let st = &self.study;
        positive("study.omega_min", st.omega_min)?;
        if !(st.omega_max > st.omega_min) || !st.omega_max.is_finite() {
            return Err(Error::invalid("study.omega_max", "must exceed omega_min"));
        }
        if st.points_per_decade == 0 {
            return Err(Error::invalid("study.points_per_decade", "must be at least 1"));
        }
        if !(st.horizon_s >= 10.0) || !st.horizon_s.is_finite() {
            return Err(Error::invalid("study.horizon_s", "must be at least 10 s"));
        }
        positive("study.dt_s", st.dt_s)?;
        for (i, &b) in st.placements.iter().enumerate() {
            self.check_bus(&format!("study.placements[{i}]"), b)?;
        }
        if let Some(a) = &st.allocation {
            if !(a.cap >= 1.0) || !a.cap.is_finite() {
                return Err(Error::invalid("study.allocation.cap", "must be at least 1"));
            }
            if !(a.step > 0.0 && a.step <= 1.0) {
                return Err(Error::invalid("study.allocation.step", "must lie in (0, 1]"));
            }
            let distinct: BTreeSet<_> = a.candidates.iter().collect();
            if a.candidates.len() < 2 || distinct.len() != a.candidates.len() {
                return Err(Error::invalid("study.allocation.candidates", "need two or more distinct buses"));
            }
            for (i, &b) in a.candidates.iter().enumerate() {
                self.check_bus(&format!("study.allocation.candidates[{i}]"), b)?;
            }
        }
        Ok(())
    }

    fn check_bus(&self, path: &str, id: usize) -> Result<()> {
        if self.bus(id).is_none() {
            return Err(Error::invalid(path, format!("bus {id} does not exist")));
        }
        Ok(())
    }
}

/// `H = K_en / S_rated` in seconds for energy in GWs and rating in MW.
pub fn machine_inertia(kinetic_energy_gws: f64, rated_power_mw: f64) -> f64 {
    kinetic_energy_gws * 1e3 / rated_power_mw
}

/// Inverse of [`machine_inertia`].
pub fn kinetic_energy(h_machine: f64, rated_power_mw: f64) -> f64 {
    h_machine * rated_power_mw / 1e3
}

fn positive(path: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(path, format!("must be positive and finite (got {v})")));
    }
    Ok(())
}

fn nonneg(path: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::invalid(path, format!("must be non-negative and finite (got {v})")));
    }
    Ok(())
}
