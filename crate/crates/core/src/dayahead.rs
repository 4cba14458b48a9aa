//! Deterministic day-ahead scheduling.

use serde::{Deserialize, Serialize};

use crate::blocks::{add_first_stage, FirstStageVars};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, ObjSense, SolveOptions, SolveResult, SolveStatus};
use crate::schedule::Schedule;
use crate::system::{HydroSystem, TimeGrid};

/// Source of the spinning reserve requirement `R_t`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReserveRequirement {
    #[default]
    Zero,
    /// The grid's `reserve_req` series.
    FromGrid,
    Uniform(f64),
    Profile(Vec<f64>),
}

impl ReserveRequirement {
    pub fn resolve(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let t = grid.periods();
        let out = match self {
            ReserveRequirement::Zero => vec![0.0; t],
            ReserveRequirement::FromGrid => grid.reserve_req.clone(),
            ReserveRequirement::Uniform(r) => vec![*r; t],
            ReserveRequirement::Profile(p) => {
                if p.len() != t {
                    return Err(Error::InvalidInput(format!(
                        "reserve profile has {} entries for {t} periods",
                        p.len()
                    )));
                }
                p.clone()
            }
        };
        if out.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidInput("reserve requirement must be non-negative".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DayAheadConfig {
    pub reserve: ReserveRequirement,
}

impl DayAheadConfig {
    pub fn without_reserve() -> Self {
        Self {
            reserve: ReserveRequirement::Zero,
        }
    }

    pub fn with_reserve(reserve: ReserveRequirement) -> Self {
        Self { reserve }
    }
}

/// The day-ahead LP together with its variable map.
pub struct DayAheadModel {
    pub lp: LinearProgram,
    vars: FirstStageVars,
}

pub fn build_day_ahead(system: &HydroSystem, config: &DayAheadConfig) -> Result<DayAheadModel> {
    let req = config.reserve.resolve(&system.grid)?;
    let mut lp = LinearProgram::new(ObjSense::Minimize);
    let vars = add_first_stage(&mut lp, system, &req);
    Ok(DayAheadModel { lp, vars })
}

impl DayAheadModel {
    /// Builds a [`Schedule`] from an optimal solve of this model.
    pub fn extract_schedule(&self, system: &HydroSystem, result: &SolveResult) -> Result<Schedule> {
        if result.status != SolveStatus::Optimal {
            return Err(Error::NotOptimal {
                context: "day-ahead".into(),
                status: result.status,
            });
        }
        Ok(self.vars.extract(system, &result.primal))
    }

    /// Value of the reserve tie-break term at `result`.
    pub fn reserve_cost(&self, system: &HydroSystem, result: &SolveResult) -> f64 {
        self.vars.reserve_cost(system, &result.primal)
    }
}

/// Solves the deterministic problem. Infeasibility is attributed to the
/// reserve requirement when dropping it restores feasibility.
pub fn solve_day_ahead(
    system: &HydroSystem,
    config: &DayAheadConfig,
    options: &SolveOptions,
) -> Result<Schedule> {
    let model = build_day_ahead(system, config)?;
    let result = lp::solve(&model.lp, options)?;
    match result.status {
        SolveStatus::Optimal => model.extract_schedule(system, &result),
        SolveStatus::Infeasible => {
            let relaxed = build_day_ahead(system, &DayAheadConfig::without_reserve())?;
            let group = match lp::solve(&relaxed.lp, options)?.status {
                SolveStatus::Optimal => "reserve requirement",
                _ => "power balance and hydraulics",
            };
            Err(Error::Infeasible { group: group.into() })
        }
        status => Err(Error::NotOptimal {
            context: "day-ahead".into(),
            status,
        }),
    }
}

/// Z^da recomputed from schedule fields. Rejects invalid schedules.
pub fn day_ahead_cost(system: &HydroSystem, schedule: &Schedule) -> Result<f64> {
    schedule.check(system)?;
    let grid = &system.grid;
    let costs = &system.costs;
    let mut z = 0.0;
    for (ms, module) in schedule.modules.iter().zip(system.modules()) {
        z -= module.water_value * ms.end_volume();
        for t in 0..grid.periods() {
            z += grid.period_hours[t] * (costs.bypass_penalty * ms.bypass[t] + costs.spill_penalty * ms.spill[t]);
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn c1_without_reserve() {
        let sys = fixtures::c1();
        let model = build_day_ahead(&sys, &DayAheadConfig::without_reserve()).unwrap();
        let res = lp::solve(&model.lp, &opts()).unwrap();
        assert!((res.objective + 482.0).abs() < 1e-9, "{}", res.objective);
        let s = model.extract_schedule(&sys, &res).unwrap();
        assert!((s.modules[0].production[0] - 10.0).abs() < 1e-9);
        assert_eq!(s.modules[0].reserve[0], 0.0);
        assert!((s.modules[0].end_volume() - 0.482).abs() < 1e-12);
        assert!((s.modules[0].total_discharge(0) - 5.0).abs() < 1e-9);
        assert!((s.first_stage_cost + 482.0).abs() < 1e-9);
        assert!((day_ahead_cost(&sys, &s).unwrap() + 482.0).abs() < 1e-9);
    }

    #[test]
    fn c1_without_load_keeps_all_water() {
        let sys = fixtures::c1();
        let mut grid = sys.grid.clone();
        grid.net_load = vec![0.0];
        let sys = sys.with_grid(grid).unwrap();
        let s = solve_day_ahead(&sys, &DayAheadConfig::without_reserve(), &opts()).unwrap();
        assert!((s.first_stage_cost + 500.0).abs() < 1e-9);
        let m = &s.modules[0];
        assert!(m.total_discharge(0).abs() < 1e-12);
        assert!(m.bypass[0].abs() < 1e-12 && m.spill[0].abs() < 1e-12);
    }

    #[test]
    fn c1_reserve_requirement_too_large() {
        let sys = fixtures::c1();
        let err = solve_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(15.0)), &opts())
            .unwrap_err();
        match err {
            Error::Infeasible { group } => assert_eq!(group, "reserve requirement"),
            other => panic!("unexpected {other}"),
        }
        // 10 MW is the largest symmetric band around p = 10 MW.
        let s = solve_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(10.0)), &opts())
            .unwrap();
        assert!((s.total_reserve(0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn zero_schedule_is_rejected() {
        let sys = fixtures::c1();
        let mut s = solve_day_ahead(&sys, &DayAheadConfig::without_reserve(), &opts()).unwrap();
        for m in &mut s.modules {
            m.production.iter_mut().for_each(|x| *x = 0.0);
            m.discharge.iter_mut().flatten().for_each(|x| *x = 0.0);
            m.outflow.iter_mut().for_each(|x| *x = 0.0);
            let v0 = m.volume[0];
            m.volume.iter_mut().for_each(|x| *x = v0);
        }
        assert!(matches!(day_ahead_cost(&sys, &s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn forced_bypass_costs_penalty_plus_lost_water() {
        let sys = fixtures::c1();
        let base = solve_day_ahead(&sys, &DayAheadConfig::without_reserve(), &opts()).unwrap();
        let mut forced = base.clone();
        let m = &mut forced.modules[0];
        m.bypass[0] = 1.0;
        m.outflow[0] += 1.0;
        m.volume[1] -= crate::system::flow_to_volume(1.0, 1.0);
        let delta = day_ahead_cost(&sys, &forced).unwrap() - day_ahead_cost(&sys, &base).unwrap();
        let module = &sys.modules()[0];
        let expected = sys.costs.bypass_penalty * 1.0 * 1.0 + module.water_value * crate::system::flow_to_volume(1.0, 1.0);
        assert!((delta - expected).abs() < 1e-9, "{delta} vs {expected}");
    }

    #[test]
    fn c2_routing_reaches_downstream_module() {
        let sys = fixtures::c2(4);
        let s = solve_day_ahead(&sys, &DayAheadConfig::without_reserve(), &opts()).unwrap();
        assert!(s.violations(&sys).is_empty());
        let (a, b) = (&s.modules[0], &s.modules[1]);
        for t in 0..4 {
            let from_a = a.total_discharge(t) + a.bypass[t] + a.spill[t];
            assert!((b.inflow[t] - from_a).abs() < 1e-9);
        }
        assert!(s.water_balance_residual(&sys) <= 1e-9);
    }

    #[test]
    fn solver_objective_matches_recomputed_cost() {
        let sys = fixtures::c2(4);
        let model = build_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(5.0))).unwrap();
        let res = lp::solve(&model.lp, &opts()).unwrap();
        let s = model.extract_schedule(&sys, &res).unwrap();
        let recomputed = day_ahead_cost(&sys, &s).unwrap();
        let eps_term = model.reserve_cost(&sys, &res);
        assert!((recomputed - (res.objective - eps_term)).abs() <= 1e-6);
    }

    #[test]
    fn reserve_requirement_is_monotone() {
        let sys = fixtures::c2(4);
        let mut last = f64::NEG_INFINITY;
        for r in [0.0, 1.0, 2.0, 3.5, 5.0, 6.0] {
            let s = solve_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(r)), &opts())
                .unwrap();
            let z = day_ahead_cost(&sys, &s).unwrap();
            assert!(z >= last - 1e-9, "R={r}: {z} < {last}");
            last = z;
        }
    }
}
