//! Frequency responses of the plant and loop quantities on a log grid,
//! with the scalar screening metrics drawn from them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::solve_shifted;
use crate::linearizer::{close_loop, ClosedLoopModel, StateSpaceModel};
use crate::scenario::{IbrControllerSpec, Scenario};

/// Below this `|G_zd|` a ratio sample is masked instead of divided.
pub const GZD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points_per_decade: usize,
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, points_per_decade: usize) -> Result<Self> {
        if !(omega_min > 0.0) || !(omega_max > omega_min) || !omega_max.is_finite() {
            return Err(Error::invalid("grid", "need 0 < omega_min < omega_max"));
        }
        if points_per_decade == 0 {
            return Err(Error::invalid("grid.points_per_decade", "must be at least 1"));
        }
        Ok(FrequencyGrid {
            omega_min,
            omega_max,
            points_per_decade,
        })
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        FrequencyGrid {
            omega_min: s.study.omega_min,
            omega_max: s.study.omega_max,
            points_per_decade: s.study.points_per_decade,
        }
    }

    /// Log-spaced samples including both ends.
    pub fn points(&self) -> Vec<f64> {
        let (l0, l1) = (self.omega_min.log10(), self.omega_max.log10());
        let n = ((l1 - l0) * self.points_per_decade as f64 - 1e-9).ceil().max(1.0) as usize;
        (0..=n)
            .map(|k| {
                if k == n {
                    self.omega_max
                } else {
                    10f64.powf(l0 + (l1 - l0) * k as f64 / n as f64)
                }
            })
            .collect()
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid {
            omega_min: 1e-2,
            omega_max: 1e2,
            points_per_decade: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Gzd,
    Gzu,
    Gyu,
    Gyd,
    L,
    S,
    Tzd,
    Rzd,
}

impl CurveKind {
    pub fn name(&self) -> &'static str {
        match self {
            CurveKind::Gzd => "G_zd",
            CurveKind::Gzu => "G_zu",
            CurveKind::Gyu => "G_yu",
            CurveKind::Gyd => "G_yd",
            CurveKind::L => "L",
            CurveKind::S => "S",
            CurveKind::Tzd => "T_zd",
            CurveKind::Rzd => "R_zd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrequencyResponseCurve {
    pub omega: Vec<f64>,
    pub values: Vec<Complex64>,
    pub channel: (String, String),
    pub kind: CurveKind,
    /// Grid points dropped because the ratio denominator vanished there.
    pub masked: Vec<f64>,
}

impl FrequencyResponseCurve {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn from_fn(omega: &[f64], kind: CurveKind, channel: (String, String), f: impl Fn(f64) -> Complex64) -> Self {
        FrequencyResponseCurve {
            omega: omega.to_vec(),
            values: omega.iter().map(|&w| f(w)).collect(),
            channel,
            kind,
            masked: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    U(usize),
    D(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Y(usize),
    Z(usize),
}

fn input_column(m: &StateSpaceModel, i: Input) -> Result<DVector<f64>> {
    let (mat, k) = match i {
        Input::U(k) => (&m.b_u, k),
        Input::D(k) => (&m.b_d, k),
    };
    if k >= mat.ncols() {
        return Err(Error::invalid("input", format!("channel {k} out of range")));
    }
    Ok(mat.column(k).into_owned())
}

fn output_row(m: &StateSpaceModel, o: Output) -> Result<DVector<f64>> {
    let (mat, k) = match o {
        Output::Y(k) => (&m.c_y, k),
        Output::Z(k) => (&m.c_z, k),
    };
    if k >= mat.nrows() {
        return Err(Error::invalid("output", format!("channel {k} out of range")));
    }
    Ok(mat.row(k).transpose())
}

fn feedthrough(m: &StateSpaceModel, i: Input, o: Output) -> f64 {
    match (o, i) {
        (Output::Y(r), Input::U(c)) => m.d_yu[(r, c)],
        (Output::Y(r), Input::D(c)) => m.d_yd[(r, c)],
        _ => 0.0,
    }
}

fn label_in(m: &StateSpaceModel, i: Input) -> String {
    match i {
        Input::U(k) => m.input_labels[k].clone(),
        Input::D(k) => m.disturbance_labels[k].clone(),
    }
}

fn label_out(m: &StateSpaceModel, o: Output) -> String {
    match o {
        Output::Y(k) => m.output_labels[k].clone(),
        Output::Z(k) => m.performance_labels[k].clone(),
    }
}

#[inline]
fn dot(c: &DVector<f64>, x: &DVector<Complex64>) -> Complex64 {
    c.iter().zip(x.iter()).map(|(a, b)| b * *a).sum()
}

/// Transfer values `c_k·(jωI - A)⁻¹·b` for several output rows sharing one solve.
pub fn response_rows(a: &DMatrix<f64>, b: &DVector<f64>, rows: &[&DVector<f64>], omega: f64) -> Result<Vec<Complex64>> {
    let x = solve_shifted(a, omega, b)?;
    Ok(rows.iter().map(|c| dot(c, &x)).collect())
}

/// `C (jωI - A)⁻¹ B + D` for one channel pair on the grid.
pub fn evaluate_tf(m: &StateSpaceModel, input: Input, output: Output, omega: &[f64]) -> Result<FrequencyResponseCurve> {
    validate_grid(omega)?;
    let b = input_column(m, input)?;
    let c = output_row(m, output)?;
    let dff = feedthrough(m, input, output);
    let values: Result<Vec<Complex64>> = omega
        .par_iter()
        .map(|&w| Ok(response_rows(&m.a, &b, &[&c], w)?[0] + dff))
        .collect();
    let kind = match (input, output) {
        (Input::D(_), Output::Z(_)) => CurveKind::Gzd,
        (Input::U(_), Output::Z(_)) => CurveKind::Gzu,
        (Input::U(_), Output::Y(_)) => CurveKind::Gyu,
        (Input::D(_), Output::Y(_)) => CurveKind::Gyd,
    };
    Ok(FrequencyResponseCurve {
        omega: omega.to_vec(),
        values: values?,
        channel: (label_in(m, input), label_out(m, output)),
        kind,
        masked: Vec::new(),
    })
}

fn validate_grid(omega: &[f64]) -> Result<()> {
    if omega.is_empty() {
        return Err(Error::invalid("grid", "empty frequency grid"));
    }
    if omega.iter().any(|w| !(*w > 0.0) || !w.is_finite()) || omega.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::invalid("grid", "frequencies must be positive and strictly increasing"));
    }
    Ok(())
}

/// `C(jω) = K / ((1 + jωT_f)(1 + jωT_a))`.
pub fn controller_response(c: &IbrControllerSpec, omega: f64) -> Complex64 {
    let j = Complex64::new(0.0, omega);
    let lag = if c.response_time_s > 0.0 {
        Complex64::new(1.0, 0.0) + j * c.response_time_s
    } else {
        Complex64::new(1.0, 0.0)
    };
    Complex64::new(c.droop_gain, 0.0) / ((Complex64::new(1.0, 0.0) + j * c.filter_time_s) * lag)
}

fn single_loop<'a>(m: &StateSpaceModel, controllers: &'a [IbrControllerSpec]) -> Result<(&'a IbrControllerSpec, usize)> {
    if controllers.len() != 1 {
        return Err(Error::invalid(
            "controllers",
            format!("a scalar loop needs exactly one controller, got {}", controllers.len()),
        ));
    }
    let c = &controllers[0];
    let ch = m
        .channel(c.bus)
        .ok_or_else(|| Error::invalid("controllers[0].bus", format!("plant has no channel at bus {}", c.bus)))?;
    Ok((c, ch))
}

/// Loop gain `L = G_yu C` of a single controller loop.
pub fn loop_gain(m: &StateSpaceModel, controllers: &[IbrControllerSpec], omega: &[f64]) -> Result<FrequencyResponseCurve> {
    let (c, ch) = single_loop(m, controllers)?;
    let g = evaluate_tf(m, Input::U(ch), Output::Y(ch), omega)?;
    let values = g.values.iter().zip(omega).map(|(v, &w)| v * controller_response(c, w)).collect();
    Ok(FrequencyResponseCurve {
        values,
        kind: CurveKind::L,
        ..g
    })
}

/// `S = 1 / (1 + L)` for a single controller loop.
pub fn sensitivity(m: &StateSpaceModel, controllers: &[IbrControllerSpec], omega: &[f64]) -> Result<FrequencyResponseCurve> {
    let l = loop_gain(m, controllers, omega)?;
    let values = l.values.iter().map(|v| Complex64::new(1.0, 0.0) / (Complex64::new(1.0, 0.0) + v)).collect();
    Ok(FrequencyResponseCurve {
        values,
        kind: CurveKind::S,
        ..l
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NyquistMargin {
    pub distance: f64,
    pub omega: f64,
}

/// Smallest distance of `L(jω)` to `-1` over the grid (lowest ω on ties).
pub fn nyquist_margin(m: &StateSpaceModel, controllers: &[IbrControllerSpec], omega: &[f64]) -> Result<NyquistMargin> {
    let l = loop_gain(m, controllers, omega)?;
    let mut best = NyquistMargin {
        distance: f64::INFINITY,
        omega: omega[0],
    };
    for (v, &w) in l.values.iter().zip(omega) {
        let d = (v + 1.0).norm();
        if d < best.distance {
            best = NyquistMargin { distance: d, omega: w };
        }
    }
    Ok(best)
}

/// Ratio curve for one probed controller together with both routes to it.
#[derive(Debug, Clone)]
pub struct RatioCurves {
    pub bus: usize,
    /// `R_zd` from the loop algebra on the partially closed plant.
    pub ratio: FrequencyResponseCurve,
    /// `T_zd` of the fully closed loop, assembled independently.
    pub t_zd: FrequencyResponseCurve,
    /// `G_zd` of the plant with every other loop closed.
    pub g_zd: FrequencyResponseCurve,
}

impl RatioCurves {
    /// Largest relative mismatch between `R_zd` and `T_zd / G_zd`.
    pub fn identity_error(&self) -> f64 {
        self.ratio
            .omega
            .iter()
            .zip(&self.ratio.values)
            .map(|(w, r)| {
                let k = self.t_zd.omega.iter().position(|x| x == w).expect("shared grid");
                let direct = self.t_zd.values[k] / self.g_zd.values[k];
                (r - direct).norm() / direct.norm().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

/// Per-controller disturbance response ratios.
///
/// For each probed bus `k` every other controller of `cl` is closed into the
/// plant first, then `R = 1 - G_zu C (1 + G_yu C)⁻¹ G_yd / G_zd` is applied
/// to loop `k`. The closed-loop `T_zd` is taken from `cl` itself, so the two
/// routes are independent. An empty `probe` means every controller.
pub fn disturbance_response_ratio(
    open: &StateSpaceModel,
    cl: &ClosedLoopModel,
    probe: &[usize],
    disturbance_bus: usize,
    omega: &[f64],
) -> Result<Vec<RatioCurves>> {
    validate_grid(omega)?;
    let dch = open
        .disturbance_channel(disturbance_bus)
        .ok_or_else(|| Error::invalid("disturbance", format!("no disturbance channel at bus {disturbance_bus}")))?;
    let buses: Vec<usize> = if probe.is_empty() {
        cl.controllers.iter().map(|c| c.spec.bus).collect()
    } else {
        probe.to_vec()
    };
    let full = cl.as_plant();
    let t_zd = evaluate_tf(&full, Input::D(dch), Output::Z(0), omega)?;
    let t_zd = FrequencyResponseCurve {
        kind: CurveKind::Tzd,
        ..t_zd
    };

    buses
        .iter()
        .map(|&bus| {
            let me = cl
                .controller_at(bus)
                .ok_or_else(|| Error::invalid("probe", format!("no controller at bus {bus}")))?;
            let others: Vec<IbrControllerSpec> = cl
                .controllers
                .iter()
                .filter(|c| c.spec.bus != bus)
                .map(|c| c.spec.clone())
                .collect();
            let partial = close_loop(open, &others)?.as_plant();
            ratio_on_plant(&partial, &me.spec, dch, omega, &t_zd)
        })
        .collect()
}

fn ratio_on_plant(
    plant: &StateSpaceModel,
    ctrl: &IbrControllerSpec,
    dch: usize,
    omega: &[f64],
    t_zd: &FrequencyResponseCurve,
) -> Result<RatioCurves> {
    let ch = plant.channel(ctrl.bus).expect("controller channel");
    let bu = plant.b_u.column(ch).into_owned();
    let bd = plant.b_d.column(dch).into_owned();
    let cy = plant.c_y.row(ch).transpose();
    let cz = plant.c_z.row(0).transpose();
    let dyu = plant.d_yu[(ch, ch)];
    let dyd = plant.d_yd[(ch, dch)];
    let samples: Vec<(Complex64, Complex64)> = omega
        .par_iter()
        .map(|&w| {
            let from_u = response_rows(&plant.a, &bu, &[&cz, &cy], w)?;
            let from_d = response_rows(&plant.a, &bd, &[&cz, &cy], w)?;
            let (gzu, gyu) = (from_u[0], from_u[1] + dyu);
            let (gzd, gyd) = (from_d[0], from_d[1] + dyd);
            let c = controller_response(ctrl, w);
            let one = Complex64::new(1.0, 0.0);
            let r = if gzd.norm() < GZD_FLOOR {
                Complex64::new(f64::NAN, f64::NAN)
            } else {
                one - gzu * c / (one + gyu * c) * gyd / gzd
            };
            Ok((r, gzd))
        })
        .collect::<Result<_>>()?;

    let mut keep_w = Vec::with_capacity(omega.len());
    let mut r_vals = Vec::with_capacity(omega.len());
    let mut masked = Vec::new();
    for (&w, (r, _)) in omega.iter().zip(&samples) {
        if r.re.is_finite() {
            keep_w.push(w);
            r_vals.push(*r);
        } else {
            masked.push(w);
        }
    }
    let d_label = plant.disturbance_labels[dch].clone();
    let z_label = plant.performance_labels[0].clone();
    Ok(RatioCurves {
        bus: ctrl.bus,
        ratio: FrequencyResponseCurve {
            omega: keep_w,
            values: r_vals,
            channel: (d_label.clone(), format!("{z_label}@ibr{}", ctrl.bus)),
            kind: CurveKind::Rzd,
            masked,
        },
        t_zd: t_zd.clone(),
        g_zd: FrequencyResponseCurve {
            omega: omega.to_vec(),
            values: samples.iter().map(|s| s.1).collect(),
            channel: (d_label, z_label),
            kind: CurveKind::Gzd,
            masked: Vec::new(),
        },
    })
}

/// Smallest ω where `|value|` rises through 1, interpolated linearly in
/// magnitude against log ω.
pub fn crossover_frequency(curve: &FrequencyResponseCurve) -> Option<f64> {
    let mags = curve.magnitudes();
    for i in 1..mags.len() {
        let (m0, m1) = (mags[i - 1], mags[i]);
        if m0 < 1.0 && m1 >= 1.0 {
            let (l0, l1) = (curve.omega[i - 1].ln(), curve.omega[i].ln());
            let t = (1.0 - m0) / (m1 - m0);
            return Some((l0 + t * (l1 - l0)).exp());
        }
    }
    None
}

/// Grid maximum of `|value|` (lowest ω on ties), refined by a parabola
/// through the log-magnitudes of the three neighbouring samples.
pub fn peak(curve: &FrequencyResponseCurve) -> (f64, f64) {
    let mags = curve.magnitudes();
    let mut k = 0;
    for i in 1..mags.len() {
        if mags[i] > mags[k] {
            k = i;
        }
    }
    if k == 0 || k + 1 >= mags.len() {
        return (curve.omega[k], mags[k]);
    }
    let x = [curve.omega[k - 1].ln(), curve.omega[k].ln(), curve.omega[k + 1].ln()];
    let y = [mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln()];
    // Divided differences of the interpolating parabola.
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d12 - d01) / (x[2] - x[0]);
    if !(a < 0.0) {
        return (curve.omega[k], mags[k]);
    }
    let b = d01 - a * (x[0] + x[1]);
    let xv = (-b / (2.0 * a)).clamp(x[0], x[2]);
    let yv = y[0] + d01 * (xv - x[0]) + a * (xv - x[0]) * (xv - x[1]);
    (xv.exp(), yv.exp().max(mags[k]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_order() -> StateSpaceModel {
        let s = crate::scenario::parse_scenario(
            "[[buses]]\nid = 1\nkinetic_energy_gws = 5\nrated_power_mw = 1000\n\n[[generators]]\nbus = 1\nkind = \"thermal\"\n",
        )
        .unwrap();
        let mut m = crate::linearizer::linearize_with_channels(&s, &[1]).unwrap();
        m.a = DMatrix::from_element(1, 1, -1.0);
        m.b_u = DMatrix::from_element(1, 1, 1.0);
        m.b_d = DMatrix::from_element(1, 1, 1.0);
        m.c_y = DMatrix::from_element(1, 1, 1.0);
        m.c_z = DMatrix::from_element(1, 1, 1.0);
        m.state_labels = vec!["x".into()];
        m
    }

    #[test]
    fn first_order_lag_values() {
        let m = first_order();
        let c = evaluate_tf(&m, Input::U(0), Output::Y(0), &[1e-6, 1.0]).unwrap();
        assert!((c.values[0] - 1.0).norm() < 1e-5);
        assert!((c.values[1].norm() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((c.values[1].arg().to_degrees() + 45.0).abs() < 1e-12);
    }

    #[test]
    fn grid_includes_both_ends() {
        let g = FrequencyGrid::default().points();
        assert_eq!(g.len(), 401);
        assert_eq!(g[0], 1e-2);
        assert_eq!(*g.last().unwrap(), 1e2);
        assert!((g[100] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn crossover_of_identity_magnitude() {
        let w = FrequencyGrid::new(0.5, 2.0, 100).unwrap().points();
        let c = FrequencyResponseCurve::from_fn(&w, CurveKind::Rzd, Default::default(), |w| Complex64::new(w, 0.0));
        let wc = crossover_frequency(&c).unwrap();
        assert!((wc - 1.0).abs() < w[1] - w[0]);
        let flat = FrequencyResponseCurve::from_fn(&w, CurveKind::Rzd, Default::default(), |_| Complex64::new(0.5, 0.0));
        assert_eq!(crossover_frequency(&flat), None);
    }

    #[test]
    fn flat_peak_takes_lowest_omega() {
        let w = FrequencyGrid::default().points();
        let c = FrequencyResponseCurve::from_fn(&w, CurveKind::Rzd, Default::default(), |_| Complex64::new(1.0, 0.0));
        assert_eq!(peak(&c), (w[0], 1.0));
    }

    #[test]
    fn resonance_peak_within_one_percent() {
        // 1 / (s² + 2ζω_n s + ω_n²), peak at ω_n √(1 - 2ζ²)
        let (wn, z) = (3.0f64, 0.05f64);
        let w = FrequencyGrid::new(0.1, 100.0, 50).unwrap().points();
        let c = FrequencyResponseCurve::from_fn(&w, CurveKind::Gzd, Default::default(), |w| {
            let s = Complex64::new(0.0, w);
            1.0 / (s * s + s * (2.0 * z * wn) + wn * wn)
        });
        let (wp, mp) = peak(&c);
        let wp_true = wn * (1.0 - 2.0 * z * z).sqrt();
        let mp_true = 1.0 / (2.0 * z * (1.0 - z * z).sqrt() * wn * wn);
        assert!((wp / wp_true - 1.0).abs() < 0.01);
        assert!((mp / mp_true - 1.0).abs() < 0.01, "{mp} vs {mp_true}");
    }
}
