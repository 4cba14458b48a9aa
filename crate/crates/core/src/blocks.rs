//! Shared LP building blocks: hydraulics, first stage and balancing stage.
//!
//! Every builder takes a name prefix so that several copies of a block can
//! live in one extensive-form model.

use crate::lp::{LinearProgram, RowSense, Var};
use crate::schedule::{ModuleSchedule, Schedule};
use crate::system::{HydroSystem, FLOW_TO_VOLUME};

/// Variables of one copy of the water routing and production equations.
#[derive(Clone, Debug)]
pub(crate) struct HydroVars {
    /// `[module][segment][period]`
    pub discharge: Vec<Vec<Vec<Var>>>,
    pub bypass: Vec<Vec<Var>>,
    pub spill: Vec<Vec<Var>>,
    pub inflow: Vec<Vec<Var>>,
    pub outflow: Vec<Vec<Var>>,
    /// `[module][0..=T]`, index `T` is the end volume.
    pub volume: Vec<Vec<Var>>,
    pub power: Vec<Vec<Var>>,
    /// Stage objective: end-of-horizon water value and gate penalties.
    pub cost_terms: Vec<(Var, f64)>,
}

/// Adds routing, mass balance and production rows. `power_upper` is the
/// upper bound placed on each module's production variable.
pub(crate) fn add_hydraulics(
    lp: &mut LinearProgram,
    system: &HydroSystem,
    prefix: &str,
    power_upper: &dyn Fn(usize) -> f64,
) -> HydroVars {
    let topo = &system.topology;
    let grid = &system.grid;
    let costs = &system.costs;
    let t_len = grid.periods();
    let inf = f64::INFINITY;

    let mut hv = HydroVars {
        discharge: Vec::new(),
        bypass: Vec::new(),
        spill: Vec::new(),
        inflow: Vec::new(),
        outflow: Vec::new(),
        volume: Vec::new(),
        power: Vec::new(),
        cost_terms: Vec::new(),
    };

    for (m, module) in topo.modules().iter().enumerate() {
        let id = &module.id;
        hv.discharge.push(
            module
                .segments
                .iter()
                .enumerate()
                .map(|(n, s)| {
                    (0..t_len)
                        .map(|t| lp.add_var(format!("{prefix}qd[{id},{n},{t}]"), 0.0, s.max_discharge, 0.0))
                        .collect()
                })
                .collect(),
        );
        hv.bypass.push(
            (0..t_len)
                .map(|t| lp.add_var(format!("{prefix}qb[{id},{t}]"), 0.0, module.max_bypass, 0.0))
                .collect(),
        );
        hv.spill.push(
            (0..t_len)
                .map(|t| lp.add_var(format!("{prefix}qo[{id},{t}]"), 0.0, module.max_spill, 0.0))
                .collect(),
        );
        hv.inflow.push(
            (0..t_len)
                .map(|t| lp.add_var(format!("{prefix}qin[{id},{t}]"), 0.0, inf, 0.0))
                .collect(),
        );
        hv.outflow.push(
            (0..t_len)
                .map(|t| lp.add_var(format!("{prefix}qout[{id},{t}]"), 0.0, inf, 0.0))
                .collect(),
        );
        hv.volume.push(
            (0..=t_len)
                .map(|t| lp.add_var(format!("{prefix}v[{id},{t}]"), 0.0, module.max_volume, 0.0))
                .collect(),
        );
        let cap = power_upper(m);
        hv.power.push(
            (0..t_len)
                .map(|t| lp.add_var(format!("{prefix}p[{id},{t}]"), 0.0, cap, 0.0))
                .collect(),
        );
    }

    for (m, module) in topo.modules().iter().enumerate() {
        let id = &module.id;
        let up = topo.upstream(m);
        for t in 0..t_len {
            let mut terms = vec![(hv.inflow[m][t], 1.0)];
            for &i in &up.discharge {
                terms.extend(hv.discharge[i].iter().map(|seg| (seg[t], -1.0)));
            }
            terms.extend(up.bypass.iter().map(|&j| (hv.bypass[j][t], -1.0)));
            terms.extend(up.spill.iter().map(|&k| (hv.spill[k][t], -1.0)));
            lp.add_constraint(format!("{prefix}water_in[{id},{t}]"), terms, RowSense::Eq, 0.0);

            let mut terms = vec![(hv.outflow[m][t], 1.0)];
            terms.extend(hv.discharge[m].iter().map(|seg| (seg[t], -1.0)));
            terms.push((hv.bypass[m][t], -1.0));
            terms.push((hv.spill[m][t], -1.0));
            lp.add_constraint(format!("{prefix}water_out[{id},{t}]"), terms, RowSense::Eq, 0.0);
        }
        lp.add_constraint(
            format!("{prefix}init[{id}]"),
            vec![(hv.volume[m][0], 1.0)],
            RowSense::Eq,
            module.initial_volume,
        );
        for t in 0..t_len {
            let k = FLOW_TO_VOLUME * grid.period_hours[t];
            lp.add_constraint(
                format!("{prefix}balance[{id},{t}]"),
                vec![
                    (hv.volume[m][t + 1], 1.0),
                    (hv.volume[m][t], -1.0),
                    (hv.inflow[m][t], -k),
                    (hv.outflow[m][t], k),
                ],
                RowSense::Eq,
                k * module.inflow[t],
            );
            let mut terms = vec![(hv.power[m][t], 1.0)];
            terms.extend(
                module
                    .segments
                    .iter()
                    .zip(&hv.discharge[m])
                    .map(|(s, seg)| (seg[t], -s.energy_coeff)),
            );
            lp.add_constraint(format!("{prefix}production[{id},{t}]"), terms, RowSense::Eq, 0.0);
        }

        hv.cost_terms.push((hv.volume[m][t_len], -module.water_value));
        for t in 0..t_len {
            let f = grid.period_hours[t];
            hv.cost_terms.push((hv.bypass[m][t], f * costs.bypass_penalty));
            hv.cost_terms.push((hv.spill[m][t], f * costs.spill_penalty));
        }
    }
    hv
}

/// Day-ahead decision variables (the first stage).
#[derive(Clone, Debug)]
pub(crate) struct FirstStageVars {
    pub hydro: HydroVars,
    pub reserve: Vec<Vec<Var>>,
    /// Z^da terms, without the reserve tie-break cost.
    pub cost_terms: Vec<(Var, f64)>,
}

/// Adds the first stage with reserve requirement `reserve_req[t]`. Its costs
/// are put into the objective with unit weight, together with the reserve
/// tie-break term.
pub(crate) fn add_first_stage(
    lp: &mut LinearProgram,
    system: &HydroSystem,
    reserve_req: &[f64],
) -> FirstStageVars {
    let prefix = "da/";
    let caps: Vec<f64> = system.modules().iter().map(|m| m.max_production).collect();
    let hydro = add_hydraulics(lp, system, prefix, &|m| caps[m]);
    let t_len = system.periods();
    let eps = system.costs.reserve_epsilon;

    let mut reserve = Vec::new();
    for (m, module) in system.modules().iter().enumerate() {
        let id = &module.id;
        let row: Vec<Var> = (0..t_len)
            .map(|t| lp.add_var(format!("{prefix}r[{id},{t}]"), 0.0, f64::INFINITY, eps))
            .collect();
        for t in 0..t_len {
            lp.add_constraint(
                format!("{prefix}reserve_up[{id},{t}]"),
                vec![(hydro.power[m][t], 1.0), (row[t], 1.0)],
                RowSense::Le,
                module.max_production,
            );
            lp.add_constraint(
                format!("{prefix}reserve_down[{id},{t}]"),
                vec![(hydro.power[m][t], 1.0), (row[t], -1.0)],
                RowSense::Ge,
                0.0,
            );
        }
        reserve.push(row);
    }
    for t in 0..t_len {
        let terms = hydro.power.iter().map(|p| (p[t], 1.0)).collect();
        lp.add_constraint(format!("{prefix}power_balance[{t}]"), terms, RowSense::Eq, system.grid.net_load[t]);
        let terms = reserve.iter().map(|r| (r[t], 1.0)).collect();
        lp.add_constraint(format!("{prefix}reserve_req[{t}]"), terms, RowSense::Ge, reserve_req[t]);
    }
    for &(v, c) in &hydro.cost_terms {
        lp.add_cost(v, c);
    }
    FirstStageVars {
        cost_terms: hydro.cost_terms.clone(),
        hydro,
        reserve,
    }
}

impl FirstStageVars {
    pub fn extract(&self, system: &HydroSystem, values: &[f64]) -> Schedule {
        let h = &self.hydro;
        let get = |v: &Vec<Var>| v.iter().map(|x| values[x.index()]).collect::<Vec<f64>>();
        let modules = system
            .modules()
            .iter()
            .enumerate()
            .map(|(m, module)| ModuleSchedule {
                id: module.id.clone(),
                production: get(&h.power[m]),
                reserve: get(&self.reserve[m]),
                discharge: h.discharge[m].iter().map(get).collect(),
                bypass: get(&h.bypass[m]),
                spill: get(&h.spill[m]),
                inflow: get(&h.inflow[m]),
                outflow: get(&h.outflow[m]),
                volume: get(&h.volume[m]),
            })
            .collect();
        let first_stage_cost = self
            .cost_terms
            .iter()
            .map(|&(v, c)| c * values[v.index()])
            .sum();
        Schedule {
            system_hash: system.content_hash(),
            modules,
            first_stage_cost,
        }
    }

    pub fn reserve_cost(&self, system: &HydroSystem, values: &[f64]) -> f64 {
        system.costs.reserve_epsilon
            * self
                .reserve
                .iter()
                .flatten()
                .map(|v| values[v.index()])
                .sum::<f64>()
    }
}

/// How balancing production is tied to the first stage.
pub(crate) enum Coupling<'a> {
    /// `p - r <= p̄ <= p + r` with `p`, `r` taken from a fixed schedule.
    Fixed(&'a Schedule),
    /// Same limits, but `p`, `r` are variables of the same model.
    Linked(&'a FirstStageVars),
    /// `0 <= p̄ <= P`.
    PerfectForesight,
}

#[derive(Clone, Debug)]
pub(crate) struct BalancingVars {
    pub hydro: HydroVars,
    pub shed: Vec<Var>,
    pub dump: Vec<Var>,
    /// Z^bal terms.
    pub cost_terms: Vec<(Var, f64)>,
}

impl BalancingVars {
    pub fn cost(&self, values: &[f64]) -> f64 {
        self.cost_terms
            .iter()
            .map(|&(v, c)| c * values[v.index()])
            .sum()
    }
}

/// Adds one balancing block for deviation `deltas`. Costs are not placed in
/// the objective; the caller weights `cost_terms` as needed.
pub(crate) fn add_balancing(
    lp: &mut LinearProgram,
    system: &HydroSystem,
    prefix: &str,
    deltas: &[f64],
    coupling: Coupling<'_>,
) -> BalancingVars {
    let pf = matches!(coupling, Coupling::PerfectForesight);
    let caps: Vec<f64> = system.modules().iter().map(|m| m.max_production).collect();
    let upper = |m: usize| if pf { caps[m] } else { f64::INFINITY };
    let hydro = add_hydraulics(lp, system, prefix, &upper);
    let t_len = system.periods();
    let costs = &system.costs;

    let shed: Vec<Var> = (0..t_len)
        .map(|t| lp.add_var(format!("{prefix}shed[{t}]"), 0.0, f64::INFINITY, 0.0))
        .collect();
    let dump: Vec<Var> = (0..t_len)
        .map(|t| lp.add_var(format!("{prefix}dump[{t}]"), 0.0, f64::INFINITY, 0.0))
        .collect();
    for t in 0..t_len {
        let mut terms: Vec<(Var, f64)> = hydro.power.iter().map(|p| (p[t], 1.0)).collect();
        terms.push((shed[t], 1.0));
        terms.push((dump[t], -1.0));
        lp.add_constraint(
            format!("{prefix}power_balance[{t}]"),
            terms,
            RowSense::Eq,
            system.grid.net_load[t] + deltas[t],
        );
    }

    if !pf {
        for (m, module) in system.modules().iter().enumerate() {
            let id = &module.id;
            for t in 0..t_len {
                let pbar = hydro.power[m][t];
                let (upper, lower) = match &coupling {
                    Coupling::Fixed(s) => {
                        let ms = &s.modules[m];
                        let (p, r) = (ms.production[t], ms.reserve[t]);
                        ((vec![(pbar, 1.0)], p + r), (vec![(pbar, 1.0)], p - r))
                    }
                    Coupling::Linked(fs) => {
                        let p = fs.hydro.power[m][t];
                        let r = fs.reserve[m][t];
                        (
                            (vec![(pbar, 1.0), (p, -1.0), (r, -1.0)], 0.0),
                            (vec![(pbar, 1.0), (p, -1.0), (r, 1.0)], 0.0),
                        )
                    }
                    Coupling::PerfectForesight => unreachable!(),
                };
                lp.add_constraint(format!("{prefix}prod_upper[{id},{t}]"), upper.0, RowSense::Le, upper.1);
                lp.add_constraint(format!("{prefix}prod_lower[{id},{t}]"), lower.0, RowSense::Ge, lower.1);
            }
        }
    }

    let mut cost_terms = hydro.cost_terms.clone();
    cost_terms.extend(shed.iter().map(|&v| (v, costs.load_shed)));
    cost_terms.extend(dump.iter().map(|&v| (v, costs.power_spill)));
    BalancingVars {
        hydro,
        shed,
        dump,
        cost_terms,
    }
}
