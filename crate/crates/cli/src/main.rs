//! `ffr`: batch studies of fast frequency reserve placement.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ffr_core::linearizer::{close_loop, ClosedLoopModel, StateSpaceModel};
use ffr_core::report::{curve_csv, magnitude_svg, matrix_csv, modes_csv, trajectory_csv, trajectory_svg, allocation_csv};
use ffr_core::reproduce::closed_with;
use ffr_core::*;

#[derive(Parser)]
#[command(name = "ffr", version, about = "Locational screening of fast frequency reserves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Step-disturbance trajectory and its metrics.
    Simulate(Common),
    /// Disturbance response ratio, sensitivity and loop gain curves.
    Freqresp(Common),
    /// Closed-loop eigenvalues and damping ratios.
    Modes {
        #[command(flatten)]
        common: Common,
        /// Analyse the plant without the IBR loops.
        #[arg(long)]
        open_loop: bool,
    },
    /// Redistribute IBR droop until every ratio peak respects the cap.
    Allocate(Common),
    /// Run the four bundled cases and write a comparison table.
    Reproduce(Shared),
}

#[derive(Args, Clone)]
struct Shared {
    /// Output directory, created if missing.
    #[arg(long, default_value = "ffr-out")]
    out: PathBuf,
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long)]
    omega_per_decade: Option<usize>,
    /// Simulation horizon, s.
    #[arg(long)]
    horizon: Option<f64>,
    /// Integration step, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Cap on every per-controller ratio peak.
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    format: FormatArg,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(value_name = "SCENARIO", required_unless_present = "scenario")]
    path: Option<PathBuf>,
    #[arg(long, conflicts_with = "path")]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    shared: Shared,
    /// Write every state-space matrix as a labelled CSV.
    #[arg(long)]
    dump_matrices: bool,
    /// Keep every n-th trajectory sample in CSV and SVG output.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Svg,
    Both,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Svg => Format::Svg,
            FormatArg::Both => Format::Both,
        }
    }
}

enum Failure {
    Core(Error),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Run = std::result::Result<(), Failure>;

impl Shared {
    fn overrides(&self, base: &Scenario) -> Result<StudyOverrides> {
        let grid = if self.omega_min.is_some() || self.omega_max.is_some() || self.omega_per_decade.is_some() {
            Some(FrequencyGrid::new(
                self.omega_min.unwrap_or(base.study.omega_min),
                self.omega_max.unwrap_or(base.study.omega_max),
                self.omega_per_decade.unwrap_or(base.study.points_per_decade),
            )?)
        } else {
            None
        };
        Ok(StudyOverrides {
            grid,
            horizon_s: self.horizon,
            dt_s: self.dt,
            cap: self.cap,
        })
    }

    fn writer(&self) -> Result<Writer> {
        fs::create_dir_all(&self.out).map_err(|e| Error::Io {
            path: self.out.display().to_string(),
            source: e,
        })?;
        Ok(Writer {
            dir: self.out.clone(),
            format: self.format.into(),
        })
    }
}

impl Common {
    fn load(&self) -> Result<(Scenario, String)> {
        let path = self.scenario.as_ref().or(self.path.as_ref()).expect("clap enforces a scenario");
        let mut s = load_scenario(path)?;
        let ov = self.shared.overrides(&s)?;
        ov.apply(&mut s);
        s.validate()?;
        if self.stride == 0 {
            return Err(Error::invalid("--stride", "must be at least 1"));
        }
        Ok((s, stem(path)))
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned())
}

struct Writer {
    dir: PathBuf,
    format: Format,
}

impl Writer {
    fn put(&self, name: &str, body: &str) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, body).map_err(|e| Error::Io {
            path: p.display().to_string(),
            source: e,
        })
    }

    fn svg(&self, name: &str, body: impl FnOnce() -> String) -> Result<()> {
        if self.format.svg() {
            self.put(name, &body())?;
        }
        Ok(())
    }
}

fn dump(w: &Writer, stem: &str, m: &StateSpaceModel, cl: Option<&ClosedLoopModel>) -> Result<()> {
    let mats = [
        ("a", &m.a, &m.state_labels, &m.state_labels),
        ("b_u", &m.b_u, &m.state_labels, &m.input_labels),
        ("b_d", &m.b_d, &m.state_labels, &m.disturbance_labels),
        ("c_y", &m.c_y, &m.output_labels, &m.state_labels),
        ("c_z", &m.c_z, &m.performance_labels, &m.state_labels),
        ("d_yu", &m.d_yu, &m.output_labels, &m.input_labels),
        ("d_yd", &m.d_yd, &m.output_labels, &m.disturbance_labels),
    ];
    for (name, mat, rows, cols) in mats {
        w.put(&format!("{stem}_{name}.csv"), &matrix_csv(mat, rows, cols))?;
    }
    if let Some(cl) = cl {
        let l = &cl.state_labels;
        w.put(&format!("{stem}_a_cl.csv"), &matrix_csv(&cl.a_cl, l, l))?;
    }
    Ok(())
}

fn metrics_block(s: &Scenario, mt: &TrajectoryMetrics) -> String {
    let mut b = String::new();
    let dp: f64 = s.disturbances.iter().map(|d| d.magnitude_mw).sum();
    let at: Vec<String> = s.disturbances.iter().map(|d| d.bus.to_string()).collect();
    let _ = writeln!(b, "disturbance_mw = {dp} at bus {}", at.join(", "));
    let _ = writeln!(b, "nadir_hz = {:.6}", mt.nadir_hz);
    let _ = writeln!(b, "nadir_time_s = {:.3}", mt.nadir_time_s);
    let _ = writeln!(b, "rocof_hz_s = {:.6}", mt.rocof_hz_s);
    let _ = writeln!(b, "initial_rocof_hz_s = {:.6}", mt.initial_rocof_hz_s);
    let _ = writeln!(b, "steady_state_hz = {:.6}", mt.steady_state_hz);
    match mt.oscillation {
        Some(o) => {
            let _ = writeln!(
                b,
                "oscillation = {:.4} Hz, amplitude {:.3e} Hz, {} ({:.4} per cycle)",
                o.frequency_hz,
                o.amplitude_hz,
                o.kind.name(),
                o.per_cycle_ratio
            );
        }
        None => {
            let _ = writeln!(b, "oscillation = none");
        }
    }
    b
}

fn simulate(c: &Common) -> Run {
    let (s, stem) = c.load()?;
    let w = c.shared.writer()?;
    let m = linearize(&s)?;
    let cl = close_loop(&m, &s.ibr)?;
    if c.dump_matrices {
        dump(&w, &stem, &m, Some(&cl))?;
    }
    let tr = step_response(&cl, &s.disturbances, s.study.horizon_s, s.study.dt_s)?;
    let mt = metrics(&tr, s.system.f0_hz)?;
    w.put(&format!("{stem}_trajectory.csv"), &trajectory_csv(&tr, c.stride))?;
    w.svg(&format!("{stem}_trajectory.svg"), || trajectory_svg(&s.system.name, &tr, c.stride))?;
    let block = metrics_block(&s, &mt);
    w.put(&format!("{stem}_metrics.txt"), &block)?;
    print!("{block}");
    Ok(())
}

fn freqresp(c: &Common) -> Run {
    let (s, stem) = c.load()?;
    let w = c.shared.writer()?;
    let (m, cl) = closed_with(&s, &s.ibr)?;
    if c.dump_matrices {
        dump(&w, &stem, &m, Some(&cl))?;
    }
    let dbus = s
        .disturbances
        .first()
        .ok_or_else(|| Error::invalid("disturbances", "a disturbance channel is needed"))?
        .bus;
    let omega = FrequencyGrid::from_scenario(&s).points();
    let curves = if s.ibr.is_empty() {
        Vec::new()
    } else {
        disturbance_response_ratio(&m, &cl, &[], dbus, &omega)?
    };
    let mut summary = String::new();
    for r in &curves {
        w.put(&format!("{stem}_rzd_bus{}.csv", r.bus), &curve_csv(&r.ratio))?;
        w.put(&format!("{stem}_tzd_bus{}.csv", r.bus), &curve_csv(&r.t_zd))?;
        w.put(&format!("{stem}_gzd_bus{}.csv", r.bus), &curve_csv(&r.g_zd))?;
        let (wp, pk) = peak(&r.ratio);
        let wc = crossover_frequency(&r.ratio);
        let _ = writeln!(
            summary,
            "bus {}: crossover {} rad/s, peak {pk:.4} at {wp:.4} rad/s, masked {}",
            r.bus,
            wc.map_or("none".into(), |x| format!("{x:.4}")),
            r.ratio.masked.len()
        );
        if !r.ratio.masked.is_empty() {
            let pts: Vec<String> = r.ratio.masked.iter().map(|x| format!("{x:.6e}")).collect();
            eprintln!("bus {}: |G_zd| below floor at omega = {}", r.bus, pts.join(", "));
        }
    }
    if curves.is_empty() {
        // Without controllers the ratio is identically one.
        let k = m.disturbance_channel(dbus).ok_or_else(|| Error::invalid("disturbances[0].bus", "no channel"))?;
        let g = evaluate_tf(&m, freq::Input::D(k), freq::Output::Z(0), &omega)?;
        let one = FrequencyResponseCurve::from_fn(&omega, CurveKind::Rzd, g.channel.clone(), |_| 1.0.into());
        w.put(&format!("{stem}_rzd.csv"), &curve_csv(&one))?;
        w.put(&format!("{stem}_gzd.csv"), &curve_csv(&g))?;
        let _ = writeln!(summary, "no controllers: R_zd = 1");
    }
    if s.ibr.len() == 1 {
        let lg = freq::loop_gain(&m, &s.ibr, &omega)?;
        let sens = sensitivity(&m, &s.ibr, &omega)?;
        let nm = nyquist_margin(&m, &s.ibr, &omega)?;
        w.put(&format!("{stem}_loop_gain.csv"), &curve_csv(&lg))?;
        w.put(&format!("{stem}_sensitivity.csv"), &curve_csv(&sens))?;
        let _ = writeln!(summary, "nyquist distance {:.4e} at {:.4} rad/s", nm.distance, nm.omega);
    }
    let labels: Vec<String> = curves.iter().map(|r| format!("R_zd^{}", r.bus)).collect();
    let named: Vec<(&str, &FrequencyResponseCurve)> = labels.iter().zip(&curves).map(|(l, r)| (l.as_str(), &r.ratio)).collect();
    if !named.is_empty() {
        w.svg(&format!("{stem}_rzd.svg"), || magnitude_svg(&s.system.name, &named))?;
    }
    w.put(&format!("{stem}_freqresp.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn modes(c: &Common, open_loop: bool) -> Run {
    let (s, stem) = c.load()?;
    let w = c.shared.writer()?;
    let (m, cl) = closed_with(&s, &s.ibr)?;
    if c.dump_matrices {
        dump(&w, &stem, &m, Some(&cl))?;
    }
    let a = if open_loop { &m.a } else { &cl.a_cl };
    let ms = eigenvalues(a)?;
    w.put(&format!("{stem}_modes.csv"), &modes_csv(&ms))?;
    println!("states = {}", a.nrows());
    println!("stable = {}", ms.stable);
    println!("min_zeta = {:.6}", ms.min_zeta());
    if let Some(l) = ms.least_damped() {
        println!("least_damped = {:.6} {:+.6}j ({:.4} Hz, zeta {:.6})", l.lambda.re, l.lambda.im, l.freq_hz, l.zeta);
    }
    println!("max_residual = {:.2e}", ms.max_residual);
    if ms.unconverged > 0 {
        return Err(Error::EigenNoConvergence {
            unconverged: ms.unconverged,
        }
        .into());
    }
    Ok(())
}

fn allocate(c: &Common) -> Run {
    let (s, stem) = c.load()?;
    let w = c.shared.writer()?;
    let p = AllocationProblem::from_scenario(&s)?;
    let r = allocate_droop(&p)?;
    w.put(&format!("{stem}_allocation.csv"), &allocation_csv(&r))?;
    let mut b = String::new();
    let _ = writeln!(b, "converged = {}", r.converged);
    let _ = writeln!(b, "iterations = {}", r.iterations);
    let _ = writeln!(b, "stop = {:?}", r.stop);
    for (i, bus) in r.candidates.iter().enumerate() {
        let _ = writeln!(
            b,
            "bus {bus}: share {:.4} -> {:.4}, peak {:.4} -> {:.4}",
            p.initial_shares[i], r.shares[i], r.peaks_before[i], r.peaks_after[i]
        );
    }
    let _ = writeln!(b, "min_zeta = {:.6} -> {:.6}", r.min_zeta_before, r.min_zeta_after);
    for e in &r.extremes {
        let _ = writeln!(b, "all droop at bus {}: worst peak {:.4}", e.bus, e.worst_peak);
    }
    if r.infeasible {
        let _ = writeln!(b, "infeasible: every single-bus extreme exceeds cap {}", p.cap);
    }
    w.put(&format!("{stem}_allocation.txt"), &b)?;
    print!("{b}");
    if !r.converged {
        return Err(Failure::NotConverged(format!("allocation did not reach cap {} ({:?})", p.cap, r.stop)));
    }
    Ok(())
}

fn run_reproduce(sh: &Shared) -> Run {
    let base = scenario::bundled(reproduce::PLACEMENT_CASES[0])?;
    let ov = sh.overrides(&base)?;
    let w = sh.writer()?;
    let r = reproduce(&ov, sh.format.into())?;
    for (name, body) in &r.files {
        w.put(name, body)?;
    }
    print!("{}", r.table());
    if !r.allocation.converged {
        return Err(Failure::NotConverged("reallocation case did not converge".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let out = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Freqresp(c) => freqresp(c),
        Command::Modes { common, open_loop } => modes(common, *open_loop),
        Command::Allocate(c) => allocate(c),
        Command::Reproduce(s) => run_reproduce(s),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
