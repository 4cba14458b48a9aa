//! Column-and-constraint generation for the robust and unified models.
//!
//! The master is the extensive form over the scenarios generated so far,
//! with an epigraph variable `θ` bounding their balancing costs. Each
//! iteration solves the worst-case MILP at the master's first stage and adds
//! the returned deviation as a new block. Patterns already in the master are
//! cut from the MILP: `θ` covers them, so the worst case is the larger of `θ`
//! and the best new deviation.

use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::balancing::solve_worst_case_excluding;
use crate::composite::{build_extensive, ModelKind, ModelSolution};
use crate::dayahead::ReserveRequirement;
use crate::error::{Error, Result};
use crate::lp::SolveOptions;
use crate::schedule::csv_err;
use crate::system::HydroSystem;
use crate::uncertainty::{equiprobable, Origin, UncertaintySet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcgOptions {
    /// Absolute tolerance on `UB − LB`, in money units.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial robust scenarios; the zero vector when empty.
    pub warm_start: Vec<Vec<f64>>,
    /// Seconds allowed per worst-case MILP. `None` solves each one to
    /// optimality; with a limit the bounds stay valid but may not close.
    pub subproblem_time_limit: Option<f64>,
}

impl Default for CcgOptions {
    fn default() -> Self {
        Self {
            tolerance: 1.0,
            max_iterations: 100,
            warm_start: Vec::new(),
            subproblem_time_limit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcgIteration {
    pub iteration: usize,
    /// Master objective, including the reserve tie-break term.
    pub lower_bound: f64,
    /// Best upper bound so far.
    pub upper_bound: f64,
    pub gap: f64,
    /// W^bal at this iteration's first stage.
    pub worst_case_value: f64,
    /// Proven bound on W^bal; above `worst_case_value` only when the
    /// subproblem hit its time limit.
    pub worst_case_bound: f64,
    pub deltas: Vec<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CcgTrace {
    pub iterations: Vec<CcgIteration>,
    pub converged: bool,
    /// The loop ended because the worst case was already in the master.
    pub stopped_on_duplicate: bool,
    pub final_gap: f64,
}

impl CcgTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn lower_bounds_monotone(&self) -> bool {
        self.iterations
            .windows(2)
            .all(|w| w[1].lower_bound >= w[0].lower_bound - 1e-6 * (1.0 + w[0].lower_bound.abs()))
    }

    /// `iteration,lower_bound,upper_bound,gap,worst_case_value,worst_case_bound`.
    /// Timings are left out so reruns produce identical files.
    pub fn write_csv<W: Write>(&self, writer: W, run_id: Option<&str>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "iteration",
            "lower_bound",
            "upper_bound",
            "gap",
            "worst_case_value",
            "worst_case_bound",
        ];
        if run_id.is_some() {
            header.push("run_id");
        }
        w.write_record(&header).map_err(csv_err)?;
        for it in &self.iterations {
            let mut rec = vec![
                it.iteration.to_string(),
                it.lower_bound.to_string(),
                it.upper_bound.to_string(),
                it.gap.to_string(),
                it.worst_case_value.to_string(),
                it.worst_case_bound.to_string(),
            ];
            if let Some(id) = run_id {
                rec.push(id.to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

/// `min_x Z^da(x) + max_{Δ ∈ set} Z^bal(x, Δ)`.
///
/// The reported objective evaluates the returned schedule at the worst case
/// found for it. It is exact when the subproblems are solved to optimality.
pub fn solve_robust(
    system: &HydroSystem,
    set: &UncertaintySet,
    reserve: &ReserveRequirement,
    ccg: &CcgOptions,
    options: &SolveOptions,
) -> Result<ModelSolution> {
    run_ccg(system, &[], 1.0, set, reserve, ccg, options)
}

fn same(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Shared loop: `base` blocks enter the master with fixed weights and the
/// generated worst cases through `theta_weight · θ`.
pub(crate) fn run_ccg(
    system: &HydroSystem,
    base: &[(&[f64], f64)],
    theta_weight: f64,
    set: &UncertaintySet,
    reserve: &ReserveRequirement,
    ccg: &CcgOptions,
    options: &SolveOptions,
) -> Result<ModelSolution> {
    if !(ccg.tolerance > 0.0) {
        return Err(Error::InvalidInput("CCG tolerance must be positive".into()));
    }
    let periods = system.periods();
    set.check_periods(periods)?;
    let req = reserve.resolve(&system.grid)?;
    let dup_tol = 1e-9 * set.lambda_max.max(1.0);
    let sub_options = SolveOptions {
        time_limit: ccg.subproblem_time_limit.or(options.time_limit),
        ..options.clone()
    };

    let mut scenarios: Vec<Vec<f64>> = Vec::new();
    for d in &ccg.warm_start {
        if d.len() != periods || !set.contains(d) {
            return Err(Error::InvalidInput(format!(
                "warm-start scenario {d:?} is not in the uncertainty set"
            )));
        }
        if !scenarios.iter().any(|s| same(s, d, dup_tol)) {
            scenarios.push(d.clone());
        }
    }
    if scenarios.is_empty() {
        scenarios.push(vec![0.0; periods]);
    }

    let mut trace = CcgTrace::default();
    let mut best: Option<(f64, ModelSolution)> = None;
    let mut lower = f64::NEG_INFINITY;
    for iteration in 1..=ccg.max_iterations.max(1) {
        let start = Instant::now();
        let robust: Vec<&[f64]> = scenarios.iter().map(Vec::as_slice).collect();
        let master = build_extensive(system, &req, base, &robust, theta_weight);
        let result = master.solve(options)?;
        let mut sol = master.solution(system, ModelKind::Robust, base, &robust, &result);
        lower = lower.max(result.objective);
        let theta = sol.theta.unwrap_or(0.0);

        let found =
            solve_worst_case_excluding(system, &sol.schedule, set, &scenarios, &sub_options)?;
        let (value, bound, deltas) = match &found {
            Some(wc) => (wc.value.max(theta), wc.bound.max(theta), wc.deltas.clone()),
            None => (theta, theta, Vec::new()),
        };
        // Recourse in the base blocks is already optimal for this first stage.
        let first_stage = result.objective - theta_weight * theta;
        let upper_here = first_stage + theta_weight * bound;
        let improved = best.as_ref().map_or(true, |(ub, _)| upper_here < *ub);
        let gap_here = upper_here - result.objective;
        sol.objective = first_stage + theta_weight * value - sol.reserve_cost;
        if improved {
            best = Some((upper_here, sol.clone()));
        }
        let upper = best.as_ref().map(|(ub, _)| *ub).unwrap_or(upper_here);
        let gap = upper - lower;
        trace.iterations.push(CcgIteration {
            iteration,
            lower_bound: result.objective,
            upper_bound: upper,
            gap,
            worst_case_value: value,
            worst_case_bound: bound,
            deltas: deltas.clone(),
            seconds: start.elapsed().as_secs_f64(),
        });
        info!("ccg iteration {iteration}: lb {lower:.6} ub {upper:.6} gap {gap:.3e}");

        if theta_weight == 0.0 || gap_here <= ccg.tolerance {
            trace.converged = true;
            trace.final_gap = gap_here.max(0.0);
            return Ok(finish(sol, scenarios, trace));
        }
        let Some(wc) = found.filter(|wc| !scenarios.iter().any(|s| same(s, &wc.deltas, dup_tol)))
        else {
            // The cut was lost to tolerances, so the master cannot move.
            trace.stopped_on_duplicate = true;
            trace.final_gap = gap_here.max(0.0);
            return Ok(finish(sol, scenarios, trace));
        };
        if gap <= ccg.tolerance {
            trace.converged = true;
            trace.final_gap = gap.max(0.0);
            let (_, incumbent) = best.expect("upper bound recorded");
            return Ok(finish(incumbent, scenarios, trace));
        }
        scenarios.push(wc.deltas);
    }
    warn!("ccg stopped after {} iterations without converging", ccg.max_iterations);
    let (upper, incumbent) = best.expect("at least one iteration ran");
    trace.final_gap = upper - lower;
    Ok(finish(incumbent, scenarios, trace))
}

fn finish(mut sol: ModelSolution, scenarios: Vec<Vec<f64>>, trace: CcgTrace) -> ModelSolution {
    sol.robust_scenarios = equiprobable(scenarios, Origin::Robust);
    sol.trace = Some(trace);
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::solve_min_max;
    use crate::dayahead::day_ahead_cost;
    use crate::fixtures;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    fn tight() -> CcgOptions {
        CcgOptions {
            tolerance: 1e-7,
            ..CcgOptions::default()
        }
    }

    #[test]
    fn empty_budget_converges_at_once() {
        let sys = fixtures::c2(3);
        let set = UncertaintySet::new(5.0, 0).unwrap();
        let sol = solve_robust(&sys, &set, &ReserveRequirement::Zero, &tight(), &opts()).unwrap();
        let trace = sol.trace.as_ref().unwrap();
        assert_eq!(trace.len(), 1);
        assert!(trace.converged);
        let z_da = day_ahead_cost(&sys, &sol.schedule).unwrap();
        assert!((sol.objective - (z_da + sol.robust_costs[0])).abs() < 1e-6);
    }

    #[test]
    fn matches_min_max_over_enumeration() {
        let sys = fixtures::c2(3);
        let set = UncertaintySet::new(6.0, 2).unwrap();
        let sol = solve_robust(&sys, &set, &ReserveRequirement::Zero, &tight(), &opts()).unwrap();
        let all = set.enumerate(3).unwrap();
        let oracle = solve_min_max(&sys, &all, &ReserveRequirement::Zero, &opts()).unwrap();
        let a = sol.objective + sol.reserve_cost;
        let b = oracle.objective + oracle.reserve_cost;
        assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        let trace = sol.trace.unwrap();
        assert!(trace.converged);
        assert!(trace.lower_bounds_monotone());
        assert!(trace.len() <= all.len() + 1);
    }

    #[test]
    fn warm_start_with_final_set_verifies_in_one_pass() {
        let sys = fixtures::c2(3);
        let set = UncertaintySet::new(6.0, 1).unwrap();
        let cold = solve_robust(&sys, &set, &ReserveRequirement::Zero, &tight(), &opts()).unwrap();
        let warm_opts = CcgOptions {
            warm_start: cold.robust_scenarios.iter().map(|s| s.deltas.clone()).collect(),
            ..tight()
        };
        let warm = solve_robust(&sys, &set, &ReserveRequirement::Zero, &warm_opts, &opts()).unwrap();
        assert_eq!(warm.trace.as_ref().unwrap().len(), 1);
        assert!(warm.trace.as_ref().unwrap().len() <= cold.trace.as_ref().unwrap().len());
        assert!((warm.objective - cold.objective).abs() <= 1e-6 * (1.0 + cold.objective.abs()));
    }

    #[test]
    fn warm_start_outside_set_is_rejected() {
        let sys = fixtures::c2(3);
        let set = UncertaintySet::new(6.0, 1).unwrap();
        let bad = CcgOptions {
            warm_start: vec![vec![6.0, 6.0, 0.0]],
            ..CcgOptions::default()
        };
        assert!(solve_robust(&sys, &set, &ReserveRequirement::Zero, &bad, &opts()).is_err());
        let zero = CcgOptions {
            warm_start: vec![vec![0.0; 3]],
            ..CcgOptions::default()
        };
        assert!(solve_robust(&sys, &set, &ReserveRequirement::Zero, &zero, &opts()).is_ok());
    }

    #[test]
    fn trace_csv_has_one_row_per_iteration() {
        let sys = fixtures::c2(2);
        let set = UncertaintySet::new(6.0, 1).unwrap();
        let sol = solve_robust(&sys, &set, &ReserveRequirement::Zero, &tight(), &opts()).unwrap();
        let trace = sol.trace.unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, Some("abc")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), trace.len() + 1);
        assert!(text.starts_with("iteration,lower_bound,upper_bound,gap"));
    }
}
