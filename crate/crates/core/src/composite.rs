//! Two-stage models solved as one extensive-form LP: stochastic, mixed
//! stochastic-robust and the min-max form used by the robust models.

use serde::{Deserialize, Serialize};

use crate::balancing::BalancingOutcome;
use crate::blocks::{add_balancing, add_first_stage, BalancingVars, Coupling, FirstStageVars};
use crate::ccg::{self, CcgOptions, CcgTrace};
use crate::dayahead::{solve_day_ahead, DayAheadConfig, ReserveRequirement};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, ObjSense, RowSense, SolveOptions, SolveResult, SolveStatus, Var};
use crate::schedule::Schedule;
use crate::system::HydroSystem;
use crate::uncertainty::{check_scenarios, equiprobable, NetLoadScenario, Origin, UncertaintySet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Deterministic,
    Stochastic,
    Robust,
    Unified,
    Mixed,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Deterministic => "deterministic",
            ModelKind::Stochastic => "stochastic",
            ModelKind::Robust => "robust",
            ModelKind::Unified => "unified",
            ModelKind::Mixed => "mixed",
        })
    }
}

/// A model together with the data it needs.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Deterministic {
        reserve: ReserveRequirement,
    },
    Stochastic {
        scenarios: Vec<NetLoadScenario>,
        reserve: ReserveRequirement,
    },
    Robust {
        set: UncertaintySet,
        ccg: CcgOptions,
        reserve: ReserveRequirement,
    },
    Unified {
        scenarios: Vec<NetLoadScenario>,
        set: UncertaintySet,
        beta: f64,
        ccg: CcgOptions,
        reserve: ReserveRequirement,
    },
    Mixed {
        scenarios: Vec<NetLoadScenario>,
        robust: Vec<NetLoadScenario>,
        beta: f64,
        reserve: ReserveRequirement,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Deterministic { .. } => ModelKind::Deterministic,
            ModelSpec::Stochastic { .. } => ModelKind::Stochastic,
            ModelSpec::Robust { .. } => ModelKind::Robust,
            ModelSpec::Unified { .. } => ModelKind::Unified,
            ModelSpec::Mixed { .. } => ModelKind::Mixed,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            ModelSpec::Unified { beta, .. } | ModelSpec::Mixed { beta, .. } => Some(*beta),
            _ => None,
        }
    }
}

/// Solution of any model kind.
#[derive(Clone, Debug)]
pub struct ModelSolution {
    pub kind: ModelKind,
    pub schedule: Schedule,
    /// Model objective at `schedule`, without the reserve tie-break term.
    pub objective: f64,
    /// The reserve tie-break term `ε Σ r`.
    pub reserve_cost: f64,
    /// Z^bal of each scenario block, in input order.
    pub scenario_costs: Vec<f64>,
    pub scenario_outcomes: Vec<BalancingOutcome>,
    /// Z^bal of each robust block.
    pub robust_costs: Vec<f64>,
    pub robust_scenarios: Vec<NetLoadScenario>,
    /// Epigraph variable of the min-max models.
    pub theta: Option<f64>,
    pub trace: Option<CcgTrace>,
}

pub(crate) struct Extensive {
    pub lp: LinearProgram,
    pub first: FirstStageVars,
    pub base: Vec<BalancingVars>,
    pub robust: Vec<BalancingVars>,
    pub theta: Option<Var>,
}

/// First stage, weighted scenario blocks and, when `robust` is non-empty,
/// an epigraph variable `θ ≥ Z^bal_j` with objective weight `theta_weight`.
pub(crate) fn build_extensive(
    system: &HydroSystem,
    reserve_req: &[f64],
    base: &[(&[f64], f64)],
    robust: &[&[f64]],
    theta_weight: f64,
) -> Extensive {
    let mut lp = LinearProgram::new(ObjSense::Minimize);
    let first = add_first_stage(&mut lp, system, reserve_req);
    let mut blocks = Vec::with_capacity(base.len());
    for (s, &(deltas, weight)) in base.iter().enumerate() {
        let b = add_balancing(&mut lp, system, &format!("s{s}/"), deltas, Coupling::Linked(&first));
        for &(v, c) in &b.cost_terms {
            lp.add_cost(v, weight * c);
        }
        blocks.push(b);
    }
    let mut robust_blocks = Vec::with_capacity(robust.len());
    let mut theta = None;
    if !robust.is_empty() {
        let th = lp.add_var("theta", f64::NEG_INFINITY, f64::INFINITY, theta_weight);
        for (j, deltas) in robust.iter().enumerate() {
            let b = add_balancing(&mut lp, system, &format!("j{j}/"), deltas, Coupling::Linked(&first));
            let mut terms = vec![(th, 1.0)];
            terms.extend(b.cost_terms.iter().map(|&(v, c)| (v, -c)));
            lp.add_constraint(format!("epigraph[{j}]"), terms, RowSense::Ge, 0.0);
            robust_blocks.push(b);
        }
        theta = Some(th);
    }
    Extensive {
        lp,
        first,
        base: blocks,
        robust: robust_blocks,
        theta,
    }
}

impl Extensive {
    pub fn solve(&self, options: &SolveOptions) -> Result<SolveResult> {
        let result = lp::solve(&self.lp, options)?;
        match result.status {
            SolveStatus::Optimal => Ok(result),
            SolveStatus::Infeasible => Err(Error::Infeasible {
                group: "reserve requirement or first-stage power balance".into(),
            }),
            status => Err(Error::NotOptimal {
                context: "extensive form".into(),
                status,
            }),
        }
    }

    pub fn solution(
        &self,
        system: &HydroSystem,
        kind: ModelKind,
        base: &[(&[f64], f64)],
        robust: &[&[f64]],
        result: &SolveResult,
    ) -> ModelSolution {
        let x = &result.primal;
        let schedule = self.first.extract(system, x);
        let reserve_cost = self.first.reserve_cost(system, x);
        let scenario_outcomes: Vec<BalancingOutcome> = self
            .base
            .iter()
            .zip(base)
            .map(|(b, (d, _))| BalancingOutcome::from_values(b, d, x))
            .collect();
        let robust_costs = self.robust.iter().map(|b| b.cost(x)).collect();
        ModelSolution {
            kind,
            schedule,
            objective: result.objective - reserve_cost,
            reserve_cost,
            scenario_costs: scenario_outcomes.iter().map(|o| o.cost).collect(),
            scenario_outcomes,
            robust_costs,
            robust_scenarios: equiprobable(robust.iter().map(|d| d.to_vec()).collect(), Origin::Robust),
            theta: self.theta.map(|t| result.value(t)),
            trace: None,
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("beta must lie in [0, 1], got {beta}")))
    }
}

fn weighted(scenarios: &[NetLoadScenario], scale: f64) -> Vec<(&[f64], f64)> {
    scenarios
        .iter()
        .map(|s| (s.deltas.as_slice(), scale * s.probability))
        .collect()
}

/// Day-ahead plus one balancing block per scenario, weighted by probability.
pub fn solve_stochastic(
    system: &HydroSystem,
    scenarios: &[NetLoadScenario],
    reserve: &ReserveRequirement,
    options: &SolveOptions,
) -> Result<ModelSolution> {
    check_scenarios(scenarios, system.periods())?;
    let req = reserve.resolve(&system.grid)?;
    let base = weighted(scenarios, 1.0);
    let ext = build_extensive(system, &req, &base, &[], 0.0);
    let result = ext.solve(options)?;
    Ok(ext.solution(system, ModelKind::Stochastic, &base, &[], &result))
}

/// Scenario blocks weighted `β π_s` and robust blocks weighted `(1 − β)/|J|`.
pub fn solve_mixed(
    system: &HydroSystem,
    scenarios: &[NetLoadScenario],
    robust: &[NetLoadScenario],
    beta: f64,
    reserve: &ReserveRequirement,
    options: &SolveOptions,
) -> Result<ModelSolution> {
    check_beta(beta)?;
    check_scenarios(scenarios, system.periods())?;
    if robust.is_empty() {
        return Err(Error::InvalidInput("robust scenario set is empty".into()));
    }
    let req = reserve.resolve(&system.grid)?;
    let pj = (1.0 - beta) / robust.len() as f64;
    let mut base = weighted(scenarios, beta);
    for r in robust {
        if r.deltas.len() != system.periods() {
            return Err(Error::InvalidInput("robust scenario length does not match the horizon".into()));
        }
        base.push((r.deltas.as_slice(), pj));
    }
    let ext = build_extensive(system, &req, &base, &[], 0.0);
    let result = ext.solve(options)?;
    let mut sol = ext.solution(system, ModelKind::Mixed, &base, &[], &result);
    let split = scenarios.len();
    sol.robust_costs = sol.scenario_costs.split_off(split);
    sol.scenario_outcomes.truncate(split);
    sol.robust_scenarios = robust
        .iter()
        .map(|r| NetLoadScenario {
            deltas: r.deltas.clone(),
            probability: 1.0 / robust.len() as f64,
            origin: r.origin,
        })
        .collect();
    Ok(sol)
}

/// `min_x Z^da(x) + max_j Z^bal(x, Δ_j)` over an explicit list of deviations.
pub fn solve_min_max(
    system: &HydroSystem,
    deviations: &[Vec<f64>],
    reserve: &ReserveRequirement,
    options: &SolveOptions,
) -> Result<ModelSolution> {
    if deviations.is_empty() {
        return Err(Error::InvalidInput("deviation list is empty".into()));
    }
    if deviations.iter().any(|d| d.len() != system.periods()) {
        return Err(Error::InvalidInput("deviation length does not match the horizon".into()));
    }
    let req = reserve.resolve(&system.grid)?;
    let robust: Vec<&[f64]> = deviations.iter().map(Vec::as_slice).collect();
    let ext = build_extensive(system, &req, &[], &robust, 1.0);
    let result = ext.solve(options)?;
    Ok(ext.solution(system, ModelKind::Robust, &[], &robust, &result))
}

/// Stochastic blocks weighted `β π_s` plus `(1 − β) θ`, with robust cuts
/// generated over `set`.
pub fn solve_unified(
    system: &HydroSystem,
    scenarios: &[NetLoadScenario],
    set: &UncertaintySet,
    beta: f64,
    reserve: &ReserveRequirement,
    ccg_options: &CcgOptions,
    options: &SolveOptions,
) -> Result<ModelSolution> {
    check_beta(beta)?;
    check_scenarios(scenarios, system.periods())?;
    let base = weighted(scenarios, beta);
    let mut sol = ccg::run_ccg(system, &base, 1.0 - beta, set, reserve, ccg_options, options)?;
    sol.kind = ModelKind::Unified;
    Ok(sol)
}

/// Solves any model kind.
pub fn solve_model(system: &HydroSystem, spec: &ModelSpec, options: &SolveOptions) -> Result<ModelSolution> {
    match spec {
        ModelSpec::Deterministic { reserve } => {
            let cfg = DayAheadConfig::with_reserve(reserve.clone());
            let model = crate::dayahead::build_day_ahead(system, &cfg)?;
            let result = lp::solve(&model.lp, options)?;
            if result.status != SolveStatus::Optimal {
                // Re-run through the diagnosing entry point for a precise error.
                solve_day_ahead(system, &cfg, options)?;
            }
            let schedule = model.extract_schedule(system, &result)?;
            let reserve_cost = model.reserve_cost(system, &result);
            Ok(ModelSolution {
                kind: ModelKind::Deterministic,
                objective: schedule.first_stage_cost,
                schedule,
                reserve_cost,
                scenario_costs: Vec::new(),
                scenario_outcomes: Vec::new(),
                robust_costs: Vec::new(),
                robust_scenarios: Vec::new(),
                theta: None,
                trace: None,
            })
        }
        ModelSpec::Stochastic { scenarios, reserve } => solve_stochastic(system, scenarios, reserve, options),
        ModelSpec::Robust { set, ccg, reserve } => ccg::solve_robust(system, set, reserve, ccg, options),
        ModelSpec::Unified {
            scenarios,
            set,
            beta,
            ccg,
            reserve,
        } => solve_unified(system, scenarios, set, *beta, reserve, ccg, options),
        ModelSpec::Mixed {
            scenarios,
            robust,
            beta,
            reserve,
        } => solve_mixed(system, scenarios, robust, *beta, reserve, options),
    }
}
