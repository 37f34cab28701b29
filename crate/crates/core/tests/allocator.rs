use ffr_core::allocator::StopReason;
use ffr_core::scenario::bundled;
use ffr_core::*;

fn problem() -> AllocationProblem {
    AllocationProblem::from_scenario(&bundled("mitigated_allocation").unwrap()).unwrap()
}

#[test]
fn converges_under_the_cap_and_favours_bus_one() {
    let r = allocate_droop(&problem()).unwrap();
    assert!(r.converged && r.stop == StopReason::CapMet);
    assert!(r.peaks_after.iter().all(|&p| p <= 1.35));
    assert!(r.shares[0] > r.shares[1]);
    assert!(r.min_zeta_after >= r.min_zeta_before);
    assert!(r.extremes.is_empty() && !r.infeasible);
}

#[test]
fn total_droop_is_conserved_at_every_iteration() {
    let p = problem();
    let r = allocate_droop(&p).unwrap();
    for st in &r.trace {
        assert!((st.shares.iter().sum::<f64>() - p.total_ibr_share).abs() < 1e-12);
        assert!(st.shares.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}

#[test]
fn repeated_runs_give_the_same_trace() {
    let p = problem();
    assert_eq!(allocate_droop(&p).unwrap().trace, allocate_droop(&p).unwrap().trace);
}

#[test]
fn looser_cap_never_needs_more_iterations() {
    let mut p = problem();
    let mut last = usize::MAX;
    for cap in [1.35, 1.5, 1.8] {
        p.cap = cap;
        let r = allocate_droop(&p).unwrap();
        assert!(r.iterations <= last, "cap {cap}");
        last = r.iterations;
    }
}

#[test]
fn satisfied_start_takes_zero_iterations() {
    let mut p = problem();
    p.cap = 100.0;
    let r = allocate_droop(&p).unwrap();
    assert!(r.converged);
    assert_eq!(r.iterations, 0);
    assert_eq!(r.shares, p.initial_shares);
}

#[test]
fn unit_cap_is_infeasible_with_diagnostics() {
    let mut p = problem();
    p.cap = 1.0;
    let r = allocate_droop(&p).unwrap();
    assert!(!r.converged && r.infeasible);
    assert_eq!(r.extremes.len(), 2);
    assert!(r.extremes.iter().all(|e| e.worst_peak > 1.0));
    let best = r.trace.iter().map(|s| s.worst()).fold(f64::INFINITY, f64::min);
    assert_eq!(r.peaks_after.iter().copied().fold(f64::NEG_INFINITY, f64::max), best);
}

#[test]
fn invalid_problems_are_rejected() {
    let mut p = problem();
    p.candidates.truncate(1);
    p.initial_shares.truncate(1);
    assert!(allocate_droop(&p).unwrap_err().is_validation());
    let mut p = problem();
    p.step = 0.0;
    assert!(allocate_droop(&p).is_err());
    let mut p = problem();
    p.cap = 0.5;
    assert!(allocate_droop(&p).is_err());
}
