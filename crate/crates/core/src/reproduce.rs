//! The bundled experiment suite: reserve placement at two inertia levels,
//! destabilization by excessive droop at one bus and droop reallocation.
//!
//! Cases run in parallel; results and emitted files are keyed by case name
//! so the output is independent of scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::allocator::{allocate_droop, AllocationProblem, AllocationResult};
use crate::error::{Error, Result};
use crate::freq::{crossover_frequency, disturbance_response_ratio, peak, FrequencyGrid};
use crate::linearizer::{close_loop, linearize_with_channels, ClosedLoopModel, StateSpaceModel};
use crate::modal::{damping_sweep, eigenvalues, with_bus_gain, SweepResult};
use crate::report::{allocation_csv, curve_csv, magnitude_svg, num, trajectory_csv, trajectory_svg};
use crate::scenario::{bundled, AllocationSettings, Scenario};
use crate::timesim::{metrics, step_response, Oscillation, OscillationKind, TrajectoryMetrics};

pub const PLACEMENT_CASES: [&str; 2] = ["high_inertia", "low_inertia"];
pub const DROOP_CASE: &str = "high_droop_bus3";
pub const ALLOCATION_CASE: &str = "mitigated_allocation";
/// Fraction of the critical gain used for the near-critical simulation.
pub const NEAR_CRITICAL: f64 = 0.98;
/// Gains either side of the critical one used to confirm the stability verdict.
pub const BRACKET: [f64; 2] = [0.9, 1.1];
/// Largest swept gain relative to the scenario's own gain at the bus.
const SWEEP_SPAN: f64 = 1.25;
const SWEEP_POINTS: usize = 50;
/// Every 10th sample of a 1 ms trajectory.
pub const TRAJECTORY_STRIDE: usize = 10;

/// Command-line style overrides applied on top of a scenario's study block.
#[derive(Debug, Clone, Default)]
pub struct StudyOverrides {
    pub grid: Option<FrequencyGrid>,
    pub horizon_s: Option<f64>,
    pub dt_s: Option<f64>,
    pub cap: Option<f64>,
}

impl StudyOverrides {
    pub fn apply(&self, s: &mut Scenario) {
        if let Some(g) = self.grid {
            s.study.omega_min = g.omega_min;
            s.study.omega_max = g.omega_max;
            s.study.points_per_decade = g.points_per_decade;
        }
        if let Some(h) = self.horizon_s {
            s.study.horizon_s = h;
        }
        if let Some(dt) = self.dt_s {
            s.study.dt_s = dt;
        }
        if let Some(cap) = self.cap {
            if let Some(a) = s.study.allocation.as_mut() {
                a.cap = cap;
            } else {
                s.study.allocation = Some(AllocationSettings {
                    candidates: s.ibr.iter().map(|c| c.bus).collect(),
                    cap,
                    step: crate::scenario::d_step(),
                });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
    Both,
}

impl Format {
    pub fn svg(self) -> bool {
        self != Format::Csv
    }
}

#[derive(Debug, Clone)]
pub struct PlacementRow {
    pub case: String,
    pub bus: usize,
    pub metrics: TrajectoryMetrics,
    pub crossover_rad_s: Option<f64>,
    pub peak_rad_s: f64,
    pub peak: f64,
    pub min_zeta: f64,
}

#[derive(Debug, Clone)]
pub struct BracketPoint {
    pub gain: f64,
    pub stable: bool,
    pub oscillation: Option<Oscillation>,
}

impl BracketPoint {
    pub fn growing(&self) -> bool {
        self.oscillation.is_some_and(|o| o.kind == OscillationKind::Growing)
    }
}

#[derive(Debug, Clone)]
pub struct DroopStudy {
    pub bus: usize,
    pub nominal_gain: f64,
    pub nominal_peak_rad_s: f64,
    pub nominal_peak: f64,
    pub sweep: SweepResult,
    pub near_critical_gain: Option<f64>,
    pub near_critical_peak_rad_s: Option<f64>,
    pub near_critical_oscillation: Option<Oscillation>,
    pub bracket: Vec<BracketPoint>,
}

impl DroopStudy {
    /// Gap between the simulated oscillation and the ratio peak, in DFT bins.
    pub fn coincidence_bins(&self) -> Option<f64> {
        let o = self.near_critical_oscillation?;
        let w = self.near_critical_peak_rad_s?;
        Some((o.frequency_hz - w / (2.0 * std::f64::consts::PI)).abs() / o.bin_hz)
    }
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub placements: Vec<PlacementRow>,
    pub droop: DroopStudy,
    pub allocation: AllocationResult,
    /// Emitted files by name, sorted.
    pub files: BTreeMap<String, String>,
}

impl Reproduction {
    pub fn placement(&self, case: &str, bus: usize) -> Option<&PlacementRow> {
        self.placements.iter().find(|r| r.case == case && r.bus == bus)
    }

    /// Rows of a case in placement order.
    fn nadirs(&self, case: &str) -> Vec<&PlacementRow> {
        self.placements.iter().filter(|r| r.case == case).collect()
    }

    /// Nadir difference between the first and second placement of a case.
    pub fn nadir_gap(&self, case: &str) -> Option<f64> {
        let r = self.nadirs(case);
        (r.len() >= 2).then(|| r[0].metrics.nadir_hz - r[1].metrics.nadir_hz)
    }

    /// Plain-text comparison table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "placement study");
        let _ = writeln!(
            s,
            "{:<14} {:>4} {:>10} {:>10} {:>12} {:>12} {:>9} {:>7}",
            "case", "bus", "nadir_hz", "t_nadir_s", "rocof0_hz_s", "rocof_hz_s", "wc_rad_s", "|R|max"
        );
        for r in &self.placements {
            let _ = writeln!(
                s,
                "{:<14} {:>4} {:>10.4} {:>10.2} {:>12.6} {:>12.6} {:>9} {:>7.3}",
                r.case,
                r.bus,
                r.metrics.nadir_hz,
                r.metrics.nadir_time_s,
                r.metrics.initial_rocof_hz_s,
                r.metrics.rocof_hz_s,
                r.crossover_rad_s.map_or("none".into(), |w| format!("{w:.3}")),
                r.peak
            );
        }
        for case in PLACEMENT_CASES {
            let r = self.nadirs(case);
            if r.len() < 2 {
                continue;
            }
            let _ = writeln!(
                s,
                "{case}: nadir(bus {}) > nadir(bus {}): {}, gap {:.4} Hz; wc(bus {}) > wc(bus {}): {}",
                r[0].bus,
                r[1].bus,
                yes(r[0].metrics.nadir_hz > r[1].metrics.nadir_hz),
                r[0].metrics.nadir_hz - r[1].metrics.nadir_hz,
                r[0].bus,
                r[1].bus,
                yes(r[0].crossover_rad_s.unwrap_or(0.0) > r[1].crossover_rad_s.unwrap_or(0.0)),
            );
        }
        let [a, b] = PLACEMENT_CASES;
        if let (Some(ga), Some(gb)) = (self.nadir_gap(a), self.nadir_gap(b)) {
            let _ = writeln!(s, "gap({b}) > gap({a}): {}", yes(gb > ga));
        }
        let d = &self.droop;
        let _ = writeln!(s, "\ndroop study at bus {}", d.bus);
        let _ = writeln!(
            s,
            "gain {:.2}: |R|max {:.3} at {:.3} Hz",
            d.nominal_gain,
            d.nominal_peak,
            d.nominal_peak_rad_s / (2.0 * std::f64::consts::PI)
        );
        match (d.sweep.critical_gain, d.sweep.critical_freq_hz) {
            (Some(g), Some(f)) => {
                let _ = writeln!(s, "critical gain {g:.3} ({:.3} of nominal), mode {f:.4} Hz", g / d.nominal_gain);
            }
            _ => {
                let _ = writeln!(s, "no critical gain within the sweep");
            }
        }
        if let (Some(g), Some(o), Some(w)) = (d.near_critical_gain, d.near_critical_oscillation, d.near_critical_peak_rad_s) {
            let _ = writeln!(
                s,
                "gain {g:.3}: {} oscillation {:.4} Hz, |R| peak {:.4} Hz, gap {:.2} bins",
                o.kind.name(),
                o.frequency_hz,
                w / (2.0 * std::f64::consts::PI),
                d.coincidence_bins().unwrap_or(f64::NAN)
            );
        }
        for b in &d.bracket {
            let _ = writeln!(
                s,
                "gain {:.3}: modal {}, trajectory {}",
                b.gain,
                if b.stable { "stable" } else { "unstable" },
                b.oscillation.map_or("quiet", |o| o.kind.name())
            );
        }
        let a = &self.allocation;
        let _ = writeln!(s, "\nallocation over buses {:?}", a.candidates);
        let _ = writeln!(
            s,
            "converged {} after {} iterations ({:?})",
            yes(a.converged),
            a.iterations,
            a.stop
        );
        for (i, b) in a.candidates.iter().enumerate() {
            let _ = writeln!(
                s,
                "bus {b}: share {:.3}, peak {:.3} -> {:.3}",
                a.shares[i], a.peaks_before[i], a.peaks_after[i]
            );
        }
        let _ = writeln!(s, "min zeta {:.5} -> {:.5}", a.min_zeta_before, a.min_zeta_after);
        s
    }
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Plant with channels at the controllers and the loop closed around them.
pub fn closed_with(s: &Scenario, ctrls: &[crate::scenario::IbrControllerSpec]) -> Result<(StateSpaceModel, ClosedLoopModel)> {
    let chans: Vec<usize> = ctrls.iter().map(|c| c.bus).collect();
    let m = linearize_with_channels(s, &chans)?;
    let cl = close_loop(&m, ctrls)?;
    Ok((m, cl))
}

fn disturbance_bus(s: &Scenario) -> Result<usize> {
    s.disturbances
        .first()
        .map(|d| d.bus)
        .ok_or_else(|| Error::invalid("disturbances", "the study needs a disturbance"))
}

enum CaseOutput {
    Placement(Vec<PlacementRow>),
    Droop(Box<DroopStudy>),
    Allocation(Box<AllocationResult>),
}

struct CaseRun {
    output: CaseOutput,
    files: Vec<(String, String)>,
}

fn placement_case(name: &str, s: &Scenario, fmt: Format) -> Result<CaseRun> {
    let buses = if s.study.placements.is_empty() {
        s.ibr.iter().map(|c| c.bus).collect()
    } else {
        s.study.placements.clone()
    };
    let grid = FrequencyGrid::from_scenario(s).points();
    let dbus = disturbance_bus(s)?;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for bus in buses {
        let sc = s.with_ibr_at(bus);
        let (m, cl) = closed_with(&sc, &sc.ibr)?;
        let tr = step_response(&cl, &sc.disturbances, sc.study.horizon_s, sc.study.dt_s)?;
        let mt = metrics(&tr, sc.system.f0_hz)?;
        let curves = disturbance_response_ratio(&m, &cl, &[bus], dbus, &grid)?;
        let r = &curves[0].ratio;
        let (wp, rp) = peak(r);
        let stem = format!("{name}_bus{bus}");
        files.push((format!("{stem}_trajectory.csv"), trajectory_csv(&tr, TRAJECTORY_STRIDE)));
        files.push((format!("{stem}_rzd.csv"), curve_csv(r)));
        if fmt.svg() {
            files.push((
                format!("{stem}_trajectory.svg"),
                trajectory_svg(&format!("{name}, reserves at bus {bus}"), &tr, TRAJECTORY_STRIDE),
            ));
            files.push((
                format!("{stem}_rzd.svg"),
                magnitude_svg(&format!("{name}, |R_zd| with reserves at bus {bus}"), &[("R_zd", r)]),
            ));
        }
        rows.push(PlacementRow {
            case: name.to_string(),
            bus,
            metrics: mt,
            crossover_rad_s: crossover_frequency(r),
            peak_rad_s: wp,
            peak: rp,
            min_zeta: eigenvalues(&cl.a_cl)?.min_zeta(),
        });
    }
    Ok(CaseRun {
        output: CaseOutput::Placement(rows),
        files,
    })
}

fn droop_case(name: &str, s: &Scenario, fmt: Format) -> Result<CaseRun> {
    let ctrl = s
        .ibr
        .first()
        .ok_or_else(|| Error::invalid("ibr", "the droop study needs a controller"))?;
    let bus = ctrl.bus;
    let nominal = ctrl.droop_gain;
    let grid = FrequencyGrid::from_scenario(s).points();
    let dbus = disturbance_bus(s)?;
    let mut files = Vec::new();

    let ratio_at = |gain: f64| -> Result<(ClosedLoopModel, crate::freq::FrequencyResponseCurve)> {
        let ctrls = with_bus_gain(s, bus, gain)?;
        let (m, cl) = closed_with(s, &ctrls)?;
        let mut c = disturbance_response_ratio(&m, &cl, &[bus], dbus, &grid)?;
        Ok((cl, c.remove(0).ratio))
    };
    let simulate = |cl: &ClosedLoopModel| -> Result<Option<Oscillation>> {
        let tr = step_response(cl, &s.disturbances, s.study.horizon_s, s.study.dt_s)?;
        Ok(metrics(&tr, s.system.f0_hz)?.oscillation)
    };

    let (cl, r) = ratio_at(nominal)?;
    let (nwp, npk) = peak(&r);
    let tr = step_response(&cl, &s.disturbances, s.study.horizon_s, s.study.dt_s)?;
    files.push((format!("{name}_trajectory.csv"), trajectory_csv(&tr, TRAJECTORY_STRIDE)));
    files.push((format!("{name}_rzd.csv"), curve_csv(&r)));
    if fmt.svg() {
        files.push((
            format!("{name}_trajectory.svg"),
            trajectory_svg(&format!("{name}, droop {nominal} at bus {bus}"), &tr, TRAJECTORY_STRIDE),
        ));
        files.push((format!("{name}_rzd.svg"), magnitude_svg(&format!("{name}, |R_zd|"), &[("R_zd", &r)])));
    }

    let top = SWEEP_SPAN * nominal;
    let gains: Vec<f64> = (0..=SWEEP_POINTS).map(|k| top * k as f64 / SWEEP_POINTS as f64).collect();
    let sweep = damping_sweep(s, bus, &gains)?;
    let mut csv = String::from("gain,min_zeta,mode_freq_hz\n");
    for i in 0..gains.len() {
        let _ = writeln!(csv, "{},{},{}", num(gains[i]), num(sweep.min_zeta[i]), num(sweep.mode_freq_hz[i]));
    }
    files.push((format!("{name}_sweep.csv"), csv));

    let (mut near_gain, mut near_peak, mut near_osc, mut bracket) = (None, None, None, Vec::new());
    if let Some(kc) = sweep.critical_gain {
        let g = NEAR_CRITICAL * kc;
        let (cl, r) = ratio_at(g)?;
        near_gain = Some(g);
        near_peak = Some(peak(&r).0);
        near_osc = simulate(&cl)?;
        files.push((format!("{name}_near_critical_rzd.csv"), curve_csv(&r)));
        for f in BRACKET {
            let ctrls = with_bus_gain(s, bus, f * kc)?;
            let (_, cl) = closed_with(s, &ctrls)?;
            bracket.push(BracketPoint {
                gain: f * kc,
                stable: eigenvalues(&cl.a_cl)?.stable,
                oscillation: simulate(&cl)?,
            });
        }
    }
    Ok(CaseRun {
        output: CaseOutput::Droop(Box::new(DroopStudy {
            bus,
            nominal_gain: nominal,
            nominal_peak_rad_s: nwp,
            nominal_peak: npk,
            sweep,
            near_critical_gain: near_gain,
            near_critical_peak_rad_s: near_peak,
            near_critical_oscillation: near_osc,
            bracket,
        })),
        files,
    })
}

fn allocation_case(name: &str, s: &Scenario, fmt: Format) -> Result<CaseRun> {
    let p = AllocationProblem::from_scenario(s)?;
    let res = allocate_droop(&p)?;
    let mut files = vec![(format!("{name}_trace.csv"), allocation_csv(&res))];
    for (tag, shares) in [("before", &p.initial_shares), ("after", &res.shares)] {
        let ctrls = p.controllers(shares);
        let (m, cl) = closed_with(s, &ctrls)?;
        let tr = step_response(&cl, &s.disturbances, s.study.horizon_s, s.study.dt_s)?;
        files.push((format!("{name}_{tag}_trajectory.csv"), trajectory_csv(&tr, TRAJECTORY_STRIDE)));
        let grid = p.grid.points();
        let curves = disturbance_response_ratio(&m, &cl, &p.candidates, p.disturbance_bus, &grid)?;
        for c in &curves {
            files.push((format!("{name}_{tag}_rzd_bus{}.csv", c.bus), curve_csv(&c.ratio)));
        }
        if fmt.svg() {
            files.push((
                format!("{name}_{tag}_trajectory.svg"),
                trajectory_svg(&format!("{name}, {tag} reallocation"), &tr, TRAJECTORY_STRIDE),
            ));
            let labels: Vec<String> = curves.iter().map(|c| format!("R_zd^{}", c.bus)).collect();
            let named: Vec<(&str, &crate::freq::FrequencyResponseCurve)> =
                labels.iter().zip(&curves).map(|(l, c)| (l.as_str(), &c.ratio)).collect();
            files.push((
                format!("{name}_{tag}_rzd.svg"),
                magnitude_svg(&format!("{name}, {tag} reallocation"), &named),
            ));
        }
    }
    Ok(CaseRun {
        output: CaseOutput::Allocation(Box::new(res)),
        files,
    })
}

fn summary_csv(r: &Reproduction) -> String {
    let mut s = String::from(
        "case,ibr_bus,nadir_hz,nadir_time_s,initial_rocof_hz_s,rocof_hz_s,steady_state_hz,crossover_rad_s,peak_rad_s,peak_mag,min_zeta\n",
    );
    for p in &r.placements {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.case,
            p.bus,
            num(p.metrics.nadir_hz),
            num(p.metrics.nadir_time_s),
            num(p.metrics.initial_rocof_hz_s),
            num(p.metrics.rocof_hz_s),
            num(p.metrics.steady_state_hz),
            p.crossover_rad_s.map_or("".into(), num),
            num(p.peak_rad_s),
            num(p.peak),
            num(p.min_zeta)
        );
    }
    s
}

/// Runs the four bundled cases with `overrides` applied to each.
pub fn reproduce(overrides: &StudyOverrides, fmt: Format) -> Result<Reproduction> {
    let mut names: Vec<&str> = PLACEMENT_CASES.to_vec();
    names.push(DROOP_CASE);
    names.push(ALLOCATION_CASE);
    let runs: Vec<(String, CaseRun)> = names
        .par_iter()
        .map(|&name| {
            let mut s = bundled(name)?;
            overrides.apply(&mut s);
            s.validate()?;
            let run = match name {
                DROOP_CASE => droop_case(name, &s, fmt)?,
                ALLOCATION_CASE => allocation_case(name, &s, fmt)?,
                _ => placement_case(name, &s, fmt)?,
            };
            Ok((name.to_string(), run))
        })
        .collect::<Result<_>>()?;
    let mut by_name: BTreeMap<String, CaseRun> = runs.into_iter().collect();

    let mut placements = Vec::new();
    for name in PLACEMENT_CASES {
        if let Some(CaseRun {
            output: CaseOutput::Placement(rows),
            ..
        }) = by_name.get(name)
        {
            placements.extend(rows.iter().cloned());
        }
    }
    let droop = match by_name.get(DROOP_CASE).map(|r| &r.output) {
        Some(CaseOutput::Droop(d)) => (**d).clone(),
        _ => unreachable!("droop case always runs"),
    };
    let allocation = match by_name.get(ALLOCATION_CASE).map(|r| &r.output) {
        Some(CaseOutput::Allocation(a)) => (**a).clone(),
        _ => unreachable!("allocation case always runs"),
    };
    let mut files = BTreeMap::new();
    for run in by_name.values_mut() {
        files.extend(std::mem::take(&mut run.files));
    }
    let mut out = Reproduction {
        placements,
        droop,
        allocation,
        files,
    };
    out.files.insert("summary.csv".into(), summary_csv(&out));
    out.files.insert("summary.txt".into(), out.table());
    Ok(out)
}
