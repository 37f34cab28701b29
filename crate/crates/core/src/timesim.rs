//! Fixed-step simulation of step disturbances and the trajectory metrics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::eigen::eig;
use crate::error::{Error, Result};
use crate::linalg::forced_response;
use crate::linearizer::ClosedLoopModel;
use crate::scenario::DisturbanceSpec;

/// Stability bound of RK4 on the negative real axis, with margin.
const RK4_REAL_LIMIT: f64 = 2.5;
/// Largest accepted `dt · max|Im λ|`.
const OSC_LIMIT: f64 = 0.2;
pub const ROCOF_WINDOW_S: f64 = 0.5;
pub const OSC_WINDOW_FRACTION: f64 = 0.6;
/// Tones smaller than this (Hz) are not reported.
pub const OSC_MIN_AMPLITUDE_HZ: f64 = 1e-6;
/// Per-cycle amplitude change separating sustained from decaying.
pub const DECAY_PER_CYCLE: f64 = 0.02;
/// Per-cycle amplitude growth above which an oscillation counts as growing.
pub const GROWTH_PER_CYCLE: f64 = 1e-3;
const CHECKPOINTS: usize = 10;
const DETREND_ORDER: usize = 3;
/// Lowest DFT bin searched; fewer cycles than this per window are trend.
const FIRST_BIN: usize = 3;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub f0_hz: f64,
    pub buses: Vec<usize>,
    /// Speed deviation per machine bus, pu.
    pub domega: Vec<Vec<f64>>,
    /// Bus frequency `f_0 (1 + Δω)`, Hz.
    pub freq: Vec<Vec<f64>>,
    pub f_coi: Vec<f64>,
    pub ibr_buses: Vec<usize>,
    /// Injected IBR power per controller, pu.
    pub p_ibr: Vec<Vec<f64>>,
    /// Inertia weights used for the COI, system base.
    pub inertias: Vec<f64>,
    /// Largest state error against the matrix-exponential solution at the
    /// checkpoints, pu.
    pub oracle_error: f64,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscillationKind {
    Decaying,
    Sustained,
    Growing,
}

impl OscillationKind {
    pub fn name(&self) -> &'static str {
        match self {
            OscillationKind::Decaying => "decaying",
            OscillationKind::Sustained => "sustained",
            OscillationKind::Growing => "growing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub frequency_hz: f64,
    pub amplitude_hz: f64,
    pub kind: OscillationKind,
    /// Amplitude ratio per cycle between the two halves of the window.
    pub per_cycle_ratio: f64,
    /// DFT bin width of the analysis window, Hz.
    pub bin_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMetrics {
    pub nadir_hz: f64,
    pub nadir_time_s: f64,
    /// Least-squares slope of `f_COI` over the first 500 ms, Hz/s.
    pub rocof_hz_s: f64,
    /// Derivative of `f_COI` at `t = 0⁺` from the first three samples, Hz/s.
    pub initial_rocof_hz_s: f64,
    /// Mean of the final 10 % of the horizon, Hz.
    pub steady_state_hz: f64,
    pub oscillation: Option<Oscillation>,
}

/// Largest step the integrator accepts for `a`.
pub fn max_stable_dt(a: &DMatrix<f64>) -> f64 {
    let sp = eig(a).values;
    let im = sp.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
    let md = sp.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let a = if im > 0.0 { OSC_LIMIT / im } else { f64::INFINITY };
    let b = if md > 0.0 { RK4_REAL_LIMIT / md } else { f64::INFINITY };
    a.min(b)
}

fn round_down_step(dt: f64) -> f64 {
    let e = 10f64.powf(dt.log10().floor());
    let m = dt / e;
    let m = if m >= 5.0 {
        5.0
    } else if m >= 2.0 {
        2.0
    } else {
        1.0
    };
    m * e
}

/// Integrates `ẋ = A x + B_d d` from rest with classical RK4.
pub fn step_response(cl: &ClosedLoopModel, ds: &[DisturbanceSpec], horizon: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if !(horizon >= 10.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", "must be at least 10 s"));
    }
    let dmax = max_stable_dt(&cl.a_cl);
    if dt > dmax {
        return Err(Error::StepTooLarge {
            dt,
            suggested: round_down_step(dmax),
        });
    }
    let plant = &cl.plant;
    let d = plant.disturbance_vector(ds)?;
    let b = &cl.b_d * &d;
    let a = &cl.a_cl;
    let steps = (horizon / dt).round() as usize;
    let n = a.nrows();
    let nb = plant.meta.buses.len();
    let f0 = plant.meta.f0_hz;
    let speed: Vec<usize> = (0..nb).map(|i| nb + i).collect();
    let inj: Vec<usize> = cl.controllers.iter().map(|c| c.output_state()).collect();

    let mut t = Vec::with_capacity(steps + 1);
    let mut domega = vec![Vec::with_capacity(steps + 1); nb];
    let mut p_ibr = vec![Vec::with_capacity(steps + 1); inj.len()];
    let checkpoint_every = (steps / CHECKPOINTS).max(1);
    let mut checkpoints = Vec::new();

    let mut x = DVector::<f64>::zeros(n);
    let f = |x: &DVector<f64>| a * x + &b;
    for k in 0..=steps {
        t.push(k as f64 * dt);
        for (i, &s) in speed.iter().enumerate() {
            domega[i].push(x[s]);
        }
        for (i, &s) in inj.iter().enumerate() {
            p_ibr[i].push(x[s]);
        }
        if k > 0 && k % checkpoint_every == 0 {
            checkpoints.push((k as f64 * dt, x.clone()));
        }
        if k == steps {
            break;
        }
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (0.5 * dt)));
        let k3 = f(&(&x + &k2 * (0.5 * dt)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("state overflow at t = {:.3} s", (k + 1) as f64 * dt)));
        }
    }

    let oracle_error = checkpoints
        .iter()
        .map(|(tk, xk)| (forced_response(a, &b, *tk) - xk).amax())
        .fold(0.0, f64::max);

    let freq: Vec<Vec<f64>> = domega.iter().map(|w| w.iter().map(|v| f0 * (1.0 + v)).collect()).collect();
    let inertias = plant.meta.h_sys.clone();
    let f_coi = coi_series(&freq, &inertias)?;
    Ok(Trajectory {
        t,
        f0_hz: f0,
        buses: plant.meta.buses.clone(),
        domega,
        freq,
        f_coi,
        ibr_buses: cl.controllers.iter().map(|c| c.spec.bus).collect(),
        p_ibr,
        inertias,
        oracle_error,
    })
}

/// Inertia-weighted mean of the bus frequency series.
pub fn coi_series(freq: &[Vec<f64>], inertias: &[f64]) -> Result<Vec<f64>> {
    if freq.len() != inertias.len() {
        return Err(Error::invalid(
            "inertias",
            format!("{} inertias for {} series", inertias.len(), freq.len()),
        ));
    }
    if inertias.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::invalid("inertias", "must all be positive"));
    }
    let total: f64 = inertias.iter().sum();
    let len = freq.first().map_or(0, |f| f.len());
    Ok((0..len)
        .map(|k| freq.iter().zip(inertias).map(|(f, h)| h * f[k]).sum::<f64>() / total)
        .collect())
}

fn ls_slope(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        sxy += (a - tm) * (b - ym);
        sxx += (a - tm) * (a - tm);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, ym - slope * tm)
}

pub fn metrics(tr: &Trajectory, f0: f64) -> Result<TrajectoryMetrics> {
    let horizon = *tr.t.last().ok_or_else(|| Error::invalid("trajectory", "empty"))?;
    if horizon < ROCOF_WINDOW_S || tr.t.len() < 3 {
        return Err(Error::invalid("trajectory", "horizon shorter than the RoCoF window"));
    }
    let y = &tr.f_coi;
    let mut k = 0;
    for i in 1..y.len() {
        if y[i] < y[k] {
            k = i;
        }
    }
    let w_end = tr.t.iter().position(|&t| t > ROCOF_WINDOW_S + 1e-12).unwrap_or(tr.t.len());
    let (rocof, _) = ls_slope(&tr.t[..w_end], &y[..w_end]);
    // Second-order one-sided difference at t = 0.
    let initial = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * (tr.t[1] - tr.t[0]));
    let tail = (tr.t.len() as f64 * 0.9).floor() as usize;
    let ss = y[tail..].iter().sum::<f64>() / (y.len() - tail) as f64;
    let _ = f0;
    Ok(TrajectoryMetrics {
        nadir_hz: y[k],
        nadir_time_s: tr.t[k],
        rocof_hz_s: rocof,
        initial_rocof_hz_s: initial,
        steady_state_hz: ss,
        oscillation: detect_oscillation(&tr.t, y),
    })
}

fn hann(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

/// Removes a least-squares cubic, which absorbs the slow aperiodic
/// governor recovery over the analysis window.
fn detrend(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n <= DETREND_ORDER + 1 {
        let (m, c) = ls_slope(t, y);
        return t.iter().zip(y).map(|(a, b)| b - (m * a + c)).collect();
    }
    let (t0, t1) = (t[0], t[n - 1]);
    let u = |x: f64| if t1 > t0 { 2.0 * (x - t0) / (t1 - t0) - 1.0 } else { 0.0 };
    let v = DMatrix::from_fn(n, DETREND_ORDER + 1, |i, j| u(t[i]).powi(j as i32));
    let rhs = DVector::from_column_slice(y);
    let coef = v.clone().svd(true, true).solve(&rhs, 1e-12).expect("both factors computed");
    let fit = v * coef;
    y.iter().zip(fit.iter()).map(|(a, b)| a - b).collect()
}

/// Hann-windowed single-frequency amplitude of a detrended segment.
fn tone_amplitude(t: &[f64], y: &[f64], f: f64) -> f64 {
    let w = hann(y.len());
    let ws: f64 = w.iter().sum();
    let (mut re, mut im) = (0.0, 0.0);
    for ((ti, yi), wi) in t.iter().zip(y).zip(&w) {
        let ph = 2.0 * PI * f * (ti - t[0]);
        re += wi * yi * ph.cos();
        im -= wi * yi * ph.sin();
    }
    2.0 * (re * re + im * im).sqrt() / ws
}

/// Dominant tone in the final 60 % of a signal and its growth between the
/// two halves of that window.
pub fn detect_oscillation(t: &[f64], y: &[f64]) -> Option<Oscillation> {
    let n = t.len();
    let start = ((n as f64) * (1.0 - OSC_WINDOW_FRACTION)).floor() as usize;
    if n - start < 16 {
        return None;
    }
    let tt = &t[start..];
    let seg = detrend(tt, &y[start..]);
    let dt = tt[1] - tt[0];
    let span = dt * seg.len() as f64;
    let bin = 1.0 / span;
    let nyq = 0.5 / dt;
    // Electromechanical and governor content lives well below 10 Hz.
    let kmax = ((10.0f64.min(0.8 * nyq)) / bin).floor() as usize;
    let amps: Vec<f64> = (FIRST_BIN..=kmax).map(|k| tone_amplitude(tt, &seg, k as f64 * bin)).collect();
    let (ki, &amax) = amps
        .iter()
        .enumerate()
        .fold((0, &0.0), |best, (i, a)| if *a > *best.1 { (i, a) } else { best });
    if !(amax > OSC_MIN_AMPLITUDE_HZ) {
        return None;
    }
    let k = ki + FIRST_BIN;
    let mut f = k as f64 * bin;
    if ki > 0 && ki + 1 < amps.len() {
        let (a0, a1, a2) = (amps[ki - 1].ln(), amps[ki].ln(), amps[ki + 1].ln());
        let den = a0 - 2.0 * a1 + a2;
        if den < 0.0 {
            f += 0.5 * (a0 - a2) / den * bin;
        }
    }
    let amplitude = tone_amplitude(tt, &seg, f);
    let half = seg.len() / 2;
    let a1 = tone_amplitude(&tt[..half], &detrend(&tt[..half], &y[start..start + half]), f);
    let a2 = tone_amplitude(&tt[half..], &detrend(&tt[half..], &y[start + half..]), f);
    let cycles = f * (tt[half] - tt[0]);
    let ratio = if a1 > 0.0 && cycles > 0.0 {
        (a2 / a1).powf(1.0 / cycles)
    } else {
        1.0
    };
    let kind = if ratio > 1.0 + GROWTH_PER_CYCLE {
        OscillationKind::Growing
    } else if ratio < 1.0 - DECAY_PER_CYCLE {
        OscillationKind::Decaying
    } else {
        OscillationKind::Sustained
    };
    Some(Oscillation {
        frequency_hz: f,
        amplitude_hz: amplitude,
        kind,
        per_cycle_ratio: ratio,
        bin_hz: bin,
    })
}

/// Damping ratio from the logarithmic decrement between successive
/// positive peaks of an oscillating signal.
pub fn log_decrement(t: &[f64], y: &[f64]) -> Option<f64> {
    let seg = detrend(t, y);
    let peaks: Vec<f64> = (1..seg.len() - 1)
        .filter(|&i| seg[i] > seg[i - 1] && seg[i] >= seg[i + 1] && seg[i] > 0.0)
        .map(|i| {
            // Parabolic refinement of the sampled maximum.
            let (a, b, c) = (seg[i - 1], seg[i], seg[i + 1]);
            let den = a - 2.0 * b + c;
            if den < 0.0 {
                b - 0.125 * (a - c) * (a - c) / den
            } else {
                b
            }
        })
        .collect();
    if peaks.len() < 3 {
        return None;
    }
    let n = peaks.len() - 1;
    let delta = (peaks[0] / peaks[n]).ln() / n as f64;
    Some(delta / (4.0 * PI * PI + delta * delta).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(f: impl Fn(f64) -> f64, horizon: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..=(horizon / dt).round() as usize).map(|k| k as f64 * dt).collect();
        let y = t.iter().map(|&x| f(x)).collect();
        (t, y)
    }

    #[test]
    fn planted_tone_is_found() {
        let (t, y) = synth(
            |t| 50.0 - 0.3 * (-t / 5.0).exp() - 0.05 * (2.0 * PI * 0.81 * t).sin() * (-0.001 * t).exp(),
            40.0,
            1e-2,
        );
        let o = detect_oscillation(&t, &y).unwrap();
        assert!((o.frequency_hz - 0.81).abs() <= o.bin_hz, "{o:?}");
        assert_eq!(o.kind, OscillationKind::Sustained);
    }

    #[test]
    fn growth_and_decay_are_classified() {
        let (t, y) = synth(|t| (2.0 * PI * 1.2 * t).sin() * (0.05 * t).exp(), 40.0, 1e-2);
        assert_eq!(detect_oscillation(&t, &y).unwrap().kind, OscillationKind::Growing);
        let (t, y) = synth(|t| (2.0 * PI * 1.2 * t).sin() * (-0.1 * t).exp(), 40.0, 1e-2);
        assert_eq!(detect_oscillation(&t, &y).unwrap().kind, OscillationKind::Decaying);
    }

    #[test]
    fn flat_signal_has_no_tone() {
        let (t, y) = synth(|_| 50.0, 40.0, 1e-2);
        assert!(detect_oscillation(&t, &y).is_none());
    }

    #[test]
    fn coi_weights() {
        let f = vec![vec![49.9], vec![50.0], vec![50.0], vec![50.0], vec![50.0]];
        let c = coi_series(&f, &[34.0, 22.5, 7.5, 33.0, 13.0]).unwrap();
        assert!((c[0] - (34.0 * 49.9 + 76.0 * 50.0) / 110.0).abs() < 1e-12);
        assert!(coi_series(&f, &[1.0]).is_err());
    }

    #[test]
    fn log_decrement_of_damped_sine() {
        let zeta: f64 = 0.03;
        let wn = 2.0 * PI;
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let (t, y) = synth(|t| (-zeta * wn * t).exp() * (wd * t).cos(), 20.0, 1e-3);
        let z = log_decrement(&t, &y).unwrap();
        assert!((z / zeta - 1.0).abs() < 0.05, "{z}");
    }
}
