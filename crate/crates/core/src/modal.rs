//! Modal damping of open- and closed-loop state matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::eigen::{eig, eigenvector};
use crate::error::{Error, Result};
use crate::linearizer::{close_loop, linearize_with_channels};
use crate::scenario::{IbrControllerSpec, Scenario};

/// Eigenvalues of modulus below this are candidates for the angle-reference mode.
pub const REFERENCE_TOL: f64 = 1e-6;
/// Real parts above `-STABILITY_TOL` count as not stable.
pub const STABILITY_TOL: f64 = 1e-8;
/// Imaginary parts below this are treated as real modes.
const OSC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub lambda: Complex64,
    /// `-σ / |λ|`; `1` for real stable poles, `-1` for real unstable ones.
    pub zeta: f64,
    pub freq_hz: f64,
    pub is_reference: bool,
}

impl Mode {
    fn new(lambda: Complex64, is_reference: bool) -> Self {
        let r = lambda.norm();
        Mode {
            lambda,
            zeta: if r > 0.0 { -lambda.re / r } else { 1.0 },
            freq_hz: lambda.im.abs() / (2.0 * std::f64::consts::PI),
            is_reference,
        }
    }

    pub fn is_oscillatory(&self) -> bool {
        self.lambda.im.abs() > OSC_TOL
    }
}

#[derive(Debug, Clone)]
pub struct ModeSet {
    /// Sorted by oscillation frequency, then real part, then sign of the
    /// imaginary part.
    pub modes: Vec<Mode>,
    pub reference_mode: Option<Mode>,
    pub stable: bool,
    /// Eigenvalues the QR sweep failed to isolate; zero on success.
    pub unconverged: usize,
    /// Worst relative eigenpair residual over the checked modes.
    pub max_residual: f64,
}

impl ModeSet {
    pub fn non_reference(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(|m| !m.is_reference)
    }

    /// Smallest damping ratio over non-reference modes.
    pub fn min_zeta(&self) -> f64 {
        self.non_reference().map(|m| m.zeta).fold(f64::INFINITY, f64::min)
    }

    /// Least damped oscillatory mode with positive frequency.
    pub fn least_damped(&self) -> Option<&Mode> {
        self.non_reference()
            .filter(|m| m.is_oscillatory() && m.lambda.im > 0.0)
            .fold(None, |best: Option<&Mode>, m| match best {
                Some(b) if b.zeta <= m.zeta => Some(b),
                _ => Some(m),
            })
    }

    pub fn max_real(&self) -> f64 {
        self.non_reference().map(|m| m.lambda.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Eigenvalues, damping and the excluded reference mode of `a`.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<ModeSet> {
    let sp = eig(a);
    let mut vals = sp.values;
    vals.sort_by(|x, y| {
        x.im.abs()
            .total_cmp(&y.im.abs())
            .then(x.re.total_cmp(&y.re))
            .then(x.im.total_cmp(&y.im))
    });
    let near: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].norm() < REFERENCE_TOL).collect();
    if near.len() > 1 {
        return Err(Error::Numerical(format!(
            "{} eigenvalues below {REFERENCE_TOL:e} in modulus; the reference mode is ambiguous",
            near.len()
        )));
    }
    let reference = near.first().copied();
    let modes: Vec<Mode> = vals
        .iter()
        .enumerate()
        .map(|(i, &l)| Mode::new(l, Some(i) == reference))
        .collect();
    let stable = sp.unconverged == 0 && modes.iter().filter(|m| !m.is_reference).all(|m| m.lambda.re < -STABILITY_TOL);
    // Inverse iteration costs a factorization per eigenvalue, so large
    // spectra are sampled.
    let stride = (vals.len() / 64).max(1);
    let max_residual = vals
        .iter()
        .step_by(stride)
        .map(|&l| eigenvector(a, l).1)
        .fold(0.0, f64::max);
    Ok(ModeSet {
        reference_mode: reference.map(|i| modes[i]),
        modes,
        stable,
        unconverged: sp.unconverged,
        max_residual,
    })
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub bus: usize,
    pub gains: Vec<f64>,
    pub min_zeta: Vec<f64>,
    /// Frequency of the least damped oscillatory mode at each gain, Hz.
    pub mode_freq_hz: Vec<f64>,
    /// Gain where min ζ first falls through zero, refined by bisection.
    pub critical_gain: Option<f64>,
    pub critical_freq_hz: Option<f64>,
}

/// Closed loop of `s` with the droop at `bus` replaced by `gain`. Time
/// constants come from the existing controller at that bus, else from the
/// first controller of the scenario.
pub fn with_bus_gain(s: &Scenario, bus: usize, gain: f64) -> Result<Vec<IbrControllerSpec>> {
    let template = s
        .ibr
        .iter()
        .find(|c| c.bus == bus)
        .or_else(|| s.ibr.first())
        .ok_or_else(|| Error::invalid("ibr", "a sweep needs at least one controller for its time constants"))?;
    let mut ctrls: Vec<IbrControllerSpec> = s.ibr.iter().filter(|c| c.bus != bus).cloned().collect();
    ctrls.push(IbrControllerSpec {
        bus,
        droop_gain: gain,
        ..template.clone()
    });
    Ok(ctrls)
}

fn sweep_point(s: &Scenario, bus: usize, gain: f64) -> Result<(f64, f64)> {
    let ctrls = with_bus_gain(s, bus, gain)?;
    let chans: Vec<usize> = ctrls.iter().map(|c| c.bus).collect();
    let m = linearize_with_channels(s, &chans)?;
    let cl = close_loop(&m, &ctrls)?;
    let ms = eigenvalues(&cl.a_cl)?;
    Ok((ms.min_zeta(), ms.least_damped().map_or(0.0, |m| m.freq_hz)))
}

/// Minimum non-reference damping as the droop gain at `bus` is varied.
pub fn damping_sweep(s: &Scenario, bus: usize, gains: &[f64]) -> Result<SweepResult> {
    if gains.iter().any(|g| !(*g >= 0.0)) || gains.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("gains", "must be non-negative and ascending"));
    }
    let pts: Vec<(f64, f64)> = gains.par_iter().map(|&g| sweep_point(s, bus, g)).collect::<Result<_>>()?;
    let min_zeta: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let mode_freq_hz: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mut critical_gain = None;
    let mut critical_freq_hz = None;
    if let Some(i) = (1..gains.len()).find(|&i| min_zeta[i - 1] > 0.0 && min_zeta[i] <= 0.0) {
        let (mut lo, mut hi) = (gains[i - 1], gains[i]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if sweep_point(s, bus, mid)?.0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
        }
        critical_gain = Some(0.5 * (lo + hi));
        critical_freq_hz = Some(sweep_point(s, bus, lo)?.1);
    }
    Ok(SweepResult {
        bus,
        gains: gains.to_vec(),
        min_zeta,
        mode_freq_hz,
        critical_gain,
        critical_freq_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_pair() {
        let ms = eigenvalues(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, 0.0])).unwrap();
        assert_eq!(ms.modes.len(), 2);
        for m in &ms.modes {
            assert!(m.zeta.abs() < 1e-14);
            assert!((m.freq_hz - 1.0 / std::f64::consts::PI).abs() < 1e-14);
        }
        assert!(!ms.stable);
    }

    #[test]
    fn damping_ratio_formula() {
        let ms = eigenvalues(&DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, -1.0])).unwrap();
        assert!((ms.modes[0].zeta - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(ms.stable);
    }

    #[test]
    fn reference_mode_is_excluded() {
        let ms = eigenvalues(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -2.0])).unwrap();
        assert!(ms.reference_mode.is_some());
        assert!(ms.stable);
        assert_eq!(ms.min_zeta(), 1.0);
    }

    #[test]
    fn two_zero_eigenvalues_are_ambiguous() {
        assert!(eigenvalues(&DMatrix::zeros(2, 2)).is_err());
    }
}
