//! CSV and SVG emitters. Number formatting is fixed so repeated runs
//! produce byte-identical files.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::allocator::AllocationResult;
use crate::freq::FrequencyResponseCurve;
use crate::modal::ModeSet;
use crate::timesim::Trajectory;

pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.10e}")
    }
}

pub fn curve_csv(c: &FrequencyResponseCurve) -> String {
    let mut s = String::from("omega_rad_s,re,im,mag,phase_deg\n");
    for (w, v) in c.omega.iter().zip(&c.values) {
        let _ = writeln!(s, "{},{},{},{},{}", num(*w), num(v.re), num(v.im), num(v.norm()), num(v.arg().to_degrees()));
    }
    s
}

/// Trajectory table; `stride` keeps every n-th sample.
pub fn trajectory_csv(tr: &Trajectory, stride: usize) -> String {
    let stride = stride.max(1);
    let mut s = String::from("t_s");
    for b in &tr.buses {
        let _ = write!(s, ",f_bus{b}_hz");
    }
    s.push_str(",f_coi_hz");
    for b in &tr.ibr_buses {
        let _ = write!(s, ",p_ibr_bus{b}_pu");
    }
    s.push('\n');
    for k in (0..tr.t.len()).step_by(stride) {
        let _ = write!(s, "{:.6}", tr.t[k]);
        for f in &tr.freq {
            let _ = write!(s, ",{}", num(f[k]));
        }
        let _ = write!(s, ",{}", num(tr.f_coi[k]));
        for p in &tr.p_ibr {
            let _ = write!(s, ",{}", num(p[k]));
        }
        s.push('\n');
    }
    s
}

pub fn modes_csv(ms: &ModeSet) -> String {
    let mut s = String::from("re,im,zeta,freq_hz,is_reference\n");
    for m in &ms.modes {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            num(m.lambda.re),
            num(m.lambda.im),
            num(m.zeta),
            num(m.freq_hz),
            m.is_reference
        );
    }
    s
}

pub fn allocation_csv(r: &AllocationResult) -> String {
    let mut s = String::from("iter");
    for b in &r.candidates {
        let _ = write!(s, ",share_bus{b}");
    }
    for b in &r.candidates {
        let _ = write!(s, ",peak_bus{b}");
    }
    s.push_str(",min_zeta\n");
    for st in &r.trace {
        let _ = write!(s, "{}", st.iter);
        for x in &st.shares {
            let _ = write!(s, ",{x:.6}");
        }
        for x in &st.peaks {
            let _ = write!(s, ",{}", num(*x));
        }
        let _ = writeln!(s, ",{}", num(st.min_zeta));
    }
    s
}

pub fn matrix_csv(m: &DMatrix<f64>, rows: &[String], cols: &[String]) -> String {
    let mut s = String::from("row");
    for c in cols {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for i in 0..m.nrows() {
        s.push_str(rows.get(i).map_or("", |r| r.as_str()));
        for j in 0..m.ncols() {
            let _ = write!(s, ",{}", num(m[(i, j)]));
        }
        s.push('\n');
    }
    s
}

pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Horizontal reference lines with labels.
    pub hlines: Vec<(f64, String)>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 720.0;
const H: f64 = 440.0;
const ML: f64 = 80.0;
const MR: f64 = 170.0;
const MT: f64 = 40.0;
const MB: f64 = 60.0;

fn ticks_linear(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 7.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

/// Integer decades inside `[lo, hi]`, both given as log10 values.
fn ticks_log(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = ((lo - 1e-9).ceil() as i32, (hi + 1e-9).floor() as i32);
    (a..=b).map(|e| e as f64).collect()
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        let p = 10f64.powf(v);
        if (-3..=3).contains(&(v as i32)) {
            format!("{}", p)
        } else {
            format!("1e{}", v as i32)
        }
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    }
}

impl Plot {
    pub fn to_svg(&self) -> String {
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.max(1e-300).log10() } else { v };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for (&x, &y) in s.x.iter().zip(&s.y) {
                if x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0) {
                    xs.push(tx(x));
                    ys.push(ty(y));
                }
            }
        }
        for (y, _) in &self.hlines {
            ys.push(ty(*y));
        }
        let (mut x0, mut x1) = bounds(&xs);
        let (mut y0, mut y1) = bounds(&ys);
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 * y1.abs().max(1.0) {
            let d = 0.05 * y1.abs().max(1e-3);
            y0 -= d;
            y1 += d;
        } else {
            let pad = 0.05 * (y1 - y0);
            y0 -= pad;
            y1 += pad;
        }
        let pw = W - ML - MR;
        let ph = H - MT - MB;
        let px = |v: f64| ML + (v - x0) / (x1 - x0) * pw;
        let py = |v: f64| MT + ph - (v - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, ML + pw / 2.0, esc(&self.title));
        let xt = if self.log_x { ticks_log(x0, x1) } else { ticks_linear(x0, x1) };
        let yt = if self.log_y { ticks_log(y0, y1) } else { ticks_linear(y0, y1) };
        for &t in &xt {
            let x = px(t);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{MT}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, MT + ph);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MT + ph + 16.0, tick_label(t, self.log_x));
        }
        for &t in &yt {
            let y = py(t);
            let _ = writeln!(s, r##"<line x1="{ML}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, ML + pw);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, ML - 6.0, y + 4.0, tick_label(t, self.log_y));
        }
        let _ = writeln!(s, r#"<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, ML + pw / 2.0, H - 18.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            MT + ph / 2.0,
            MT + ph / 2.0,
            esc(&self.y_label)
        );
        for (y, label) in &self.hlines {
            let yy = py(ty(*y));
            let _ = writeln!(s, r##"<line x1="{ML}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#555" stroke-dasharray="6 4"/>"##, ML + pw);
            let _ = writeln!(s, r##"<text x="{:.2}" y="{:.2}" fill="#555">{}</text>"##, ML + pw + 6.0, yy + 4.0, esc(label));
        }
        for (i, se) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut d = String::new();
            let mut first = true;
            for (&x, &y) in se.x.iter().zip(&se.y) {
                if !(x.is_finite() && y.is_finite()) || (self.log_x && x <= 0.0) || (self.log_y && y <= 0.0) {
                    first = true;
                    continue;
                }
                let _ = write!(d, "{}{:.2},{:.2} ", if first { "M" } else { "L" }, px(tx(x)), py(ty(y)));
                first = false;
            }
            let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end());
            let ly = MT + 14.0 + 18.0 * i as f64;
            let lx = ML + pw + 12.0;
            let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, esc(&se.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn bounds(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 1.0);
    }
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log magnitude plot of several curves with the `|R| = 1` line.
pub fn magnitude_svg(title: &str, curves: &[(&str, &FrequencyResponseCurve)]) -> String {
    Plot {
        title: title.into(),
        x_label: "ω (rad/s)".into(),
        y_label: "|R_zd|".into(),
        log_x: true,
        log_y: true,
        series: curves
            .iter()
            .map(|(n, c)| Series {
                name: n.to_string(),
                x: c.omega.clone(),
                y: c.magnitudes(),
            })
            .collect(),
        hlines: vec![(1.0, "|R| = 1".into())],
    }
    .to_svg()
}

/// Bus and COI frequencies against time.
pub fn trajectory_svg(title: &str, tr: &Trajectory, stride: usize) -> String {
    let stride = stride.max(1);
    let t: Vec<f64> = tr.t.iter().step_by(stride).copied().collect();
    let mut series: Vec<Series> = tr
        .buses
        .iter()
        .zip(&tr.freq)
        .map(|(b, f)| Series {
            name: format!("f{b}"),
            x: t.clone(),
            y: f.iter().step_by(stride).copied().collect(),
        })
        .collect();
    series.push(Series {
        name: "f_COI".into(),
        x: t,
        y: tr.f_coi.iter().step_by(stride).copied().collect(),
    });
    Plot {
        title: title.into(),
        x_label: "t (s)".into(),
        y_label: "f (Hz)".into(),
        log_x: false,
        log_y: false,
        series,
        hlines: vec![],
    }
    .to_svg()
}
