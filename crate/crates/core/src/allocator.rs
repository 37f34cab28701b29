//! Greedy redistribution of IBR droop between candidate buses under a cap
//! on every per-controller disturbance response ratio peak.

use crate::error::{Error, Result};
use crate::freq::{disturbance_response_ratio, peak, FrequencyGrid};
use crate::linearizer::{close_loop, linearize_with_channels};
use crate::modal::eigenvalues;
use crate::scenario::{d_cap, d_step, IbrControllerSpec, Scenario};

const SHARE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AllocationProblem {
    pub scenario: Scenario,
    pub candidates: Vec<usize>,
    /// Total droop `Σ governor gains + Σ IBR gains`, pu on the system base.
    pub total_droop: f64,
    /// Starting fraction of `total_droop` at each candidate.
    pub initial_shares: Vec<f64>,
    pub total_ibr_share: f64,
    pub cap: f64,
    /// Fraction of `total_droop` moved per iteration.
    pub step: f64,
    pub disturbance_bus: usize,
    pub grid: FrequencyGrid,
}

impl AllocationProblem {
    /// Reads candidates, cap and step from `study.allocation`; the starting
    /// split is the scenario's IBR gains at the candidate buses.
    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        let (candidates, cap, step) = match &s.study.allocation {
            Some(a) => (a.candidates.clone(), a.cap, a.step),
            None => {
                let c: Vec<usize> = s.ibr.iter().map(|c| c.bus).collect();
                (c, d_cap(), d_step())
            }
        };
        let total = s.total_droop();
        if !(total > 0.0) {
            return Err(Error::invalid("ibr", "total droop must be positive"));
        }
        let shares: Vec<f64> = candidates
            .iter()
            .map(|&b| s.ibr.iter().find(|c| c.bus == b).map_or(0.0, |c| c.droop_gain / total))
            .collect();
        let d = s
            .disturbances
            .first()
            .ok_or_else(|| Error::invalid("disturbances", "allocation needs a disturbance"))?;
        let p = AllocationProblem {
            scenario: s.clone(),
            total_ibr_share: shares.iter().sum(),
            initial_shares: shares,
            candidates,
            total_droop: total,
            cap,
            step,
            disturbance_bus: d.bus,
            grid: FrequencyGrid::from_scenario(s),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() < 2 {
            return Err(Error::invalid("candidates", "need two or more candidate buses"));
        }
        if self.candidates.len() != self.initial_shares.len() {
            return Err(Error::invalid("initial_shares", "one share per candidate"));
        }
        if self.initial_shares.iter().any(|x| !(*x >= 0.0 && *x <= 1.0)) {
            return Err(Error::invalid("initial_shares", "shares must lie in [0, 1]"));
        }
        if (self.initial_shares.iter().sum::<f64>() - self.total_ibr_share).abs() > 1e-12 || self.total_ibr_share > 1.0 {
            return Err(Error::invalid("total_ibr_share", "must equal the summed shares and not exceed 1"));
        }
        if !(self.cap >= 1.0) {
            return Err(Error::invalid("cap", "must be at least 1"));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::invalid("step", "must lie in (0, 1]"));
        }
        if !self.scenario.ibr.iter().any(|c| self.candidates.contains(&c.bus)) {
            return Err(Error::invalid("ibr", "no controller at any candidate bus to copy time constants from"));
        }
        Ok(())
    }

    /// Controllers for a given split: fixed controllers outside the candidate
    /// set are kept, candidates get `share · total_droop`.
    pub fn controllers(&self, shares: &[f64]) -> Vec<IbrControllerSpec> {
        let s = &self.scenario;
        let template = s
            .ibr
            .iter()
            .find(|c| self.candidates.contains(&c.bus))
            .expect("validated")
            .clone();
        let mut out: Vec<IbrControllerSpec> = s.ibr.iter().filter(|c| !self.candidates.contains(&c.bus)).cloned().collect();
        for (&b, &x) in self.candidates.iter().zip(shares) {
            let base = s.ibr.iter().find(|c| c.bus == b).unwrap_or(&template);
            out.push(IbrControllerSpec {
                bus: b,
                droop_gain: x * self.total_droop,
                ..base.clone()
            });
        }
        out
    }

    /// Per-candidate peaks `|R_zd^k|`, their frequencies and min ζ.
    pub fn evaluate(&self, shares: &[f64]) -> Result<AllocationStep> {
        let ctrls = self.controllers(shares);
        let chans: Vec<usize> = ctrls.iter().map(|c| c.bus).collect();
        let m = linearize_with_channels(&self.scenario, &chans)?;
        let cl = close_loop(&m, &ctrls)?;
        let omega = self.grid.points();
        let curves = disturbance_response_ratio(&m, &cl, &self.candidates, self.disturbance_bus, &omega)?;
        let pk: Vec<(f64, f64)> = curves.iter().map(|c| peak(&c.ratio)).collect();
        let ms = eigenvalues(&cl.a_cl)?;
        Ok(AllocationStep {
            iter: 0,
            shares: shares.to_vec(),
            peaks: pk.iter().map(|p| p.1).collect(),
            peak_omegas: pk.iter().map(|p| p.0).collect(),
            min_zeta: ms.min_zeta(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationStep {
    pub iter: usize,
    pub shares: Vec<f64>,
    pub peaks: Vec<f64>,
    pub peak_omegas: Vec<f64>,
    pub min_zeta: f64,
}

impl AllocationStep {
    pub fn worst(&self) -> f64 {
        self.peaks.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    CapMet,
    ShareBound,
    WorseningMove,
    IterationLimit,
}

/// Worst peak when all IBR droop sits at a single candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Extreme {
    pub bus: usize,
    pub worst_peak: f64,
}

#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub candidates: Vec<usize>,
    pub shares: Vec<f64>,
    pub peaks_before: Vec<f64>,
    pub peaks_after: Vec<f64>,
    pub min_zeta_before: f64,
    pub min_zeta_after: f64,
    pub converged: bool,
    pub iterations: usize,
    pub stop: StopReason,
    pub trace: Vec<AllocationStep>,
    /// Single-bus extremes, filled when the procedure did not converge.
    pub extremes: Vec<Extreme>,
    /// True when every single-bus extreme exceeds the cap.
    pub infeasible: bool,
}

/// Moves `step` of droop from the candidate with the largest peak to the one
/// with the smallest until every peak is within the cap.
pub fn allocate_droop(p: &AllocationProblem) -> Result<AllocationResult> {
    p.validate()?;
    let n = p.candidates.len();
    let mut cur = p.evaluate(&p.initial_shares)?;
    let mut trace = vec![cur.clone()];
    let max_iters = ((p.total_ibr_share / p.step).ceil() as usize + 1) * n * 4;
    let stop = loop {
        if cur.worst() <= p.cap {
            break StopReason::CapMet;
        }
        if cur.iter >= max_iters {
            break StopReason::IterationLimit;
        }
        let hi = argmax(&cur.peaks);
        let lo = (0..n)
            .filter(|&i| i != hi)
            .fold(None, |b: Option<usize>, i| match b {
                Some(j) if cur.peaks[j] <= cur.peaks[i] => Some(j),
                _ => Some(i),
            })
            .expect("two candidates");
        if cur.shares[hi] < p.step - SHARE_EPS {
            break StopReason::ShareBound;
        }
        let mut next = cur.shares.clone();
        next[hi] = (next[hi] - p.step).max(0.0);
        if next[hi] < SHARE_EPS {
            next[hi] = 0.0;
        }
        let others: f64 = (0..n).filter(|&i| i != lo).map(|i| next[i]).sum();
        next[lo] = p.total_ibr_share - others;
        let mut step = p.evaluate(&next)?;
        step.iter = cur.iter + 1;
        trace.push(step.clone());
        if step.worst() > cur.worst() {
            break StopReason::WorseningMove;
        }
        cur = step;
    };
    let best = if stop == StopReason::CapMet {
        cur.clone()
    } else {
        trace
            .iter()
            .fold(None, |b: Option<&AllocationStep>, s| match b {
                Some(x) if x.worst() <= s.worst() => Some(x),
                _ => Some(s),
            })
            .expect("nonempty trace")
            .clone()
    };
    let converged = stop == StopReason::CapMet;
    let mut extremes = Vec::new();
    let mut infeasible = false;
    if !converged {
        for (i, &b) in p.candidates.iter().enumerate() {
            let mut shares = vec![0.0; n];
            shares[i] = p.total_ibr_share;
            extremes.push(Extreme {
                bus: b,
                worst_peak: p.evaluate(&shares)?.worst(),
            });
        }
        infeasible = extremes.iter().all(|e| e.worst_peak > p.cap);
    }
    Ok(AllocationResult {
        candidates: p.candidates.clone(),
        shares: best.shares.clone(),
        peaks_before: trace[0].peaks.clone(),
        peaks_after: best.peaks.clone(),
        min_zeta_before: trace[0].min_zeta,
        min_zeta_after: best.min_zeta,
        converged,
        iterations: cur.iter,
        stop,
        trace,
        extremes,
        infeasible,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut k = 0;
    for i in 1..v.len() {
        if v[i] > v[k] {
            k = i;
        }
    }
    k
}
