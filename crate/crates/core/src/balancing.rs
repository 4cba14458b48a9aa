//! Balancing stage: primal recourse LP, perfect-foresight relaxation, its
//! dual and the worst-case deviation MILP.
//!
//! Dual variables of the balancing LP, by primal row:
//!
//! | row | dual | sign |
//! |---|---|---|
//! | `water_in`, `water_out` | `ψin`, `ψout` | free |
//! | `init` | `ν` | free |
//! | `balance` | `μ` | free |
//! | `production` | `η` | free |
//! | `power_balance` | `λ` | `[−C⁻, C⁺]` |
//! | `prod_upper` | `ρ⁺` | `≤ 0` |
//! | `prod_lower` | `ρ⁻` | `≥ 0` |
//! | volume, gate upper bounds | `ω`, `γ` | `≤ 0` |
//!
//! The bounds on `λ` are the dual rows of the shed and dump columns.

use crate::blocks::{add_balancing, BalancingVars, Coupling};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, ObjSense, RowSense, SolveOptions, SolveResult, SolveStatus, Var};
use crate::schedule::{Schedule, POWER_BALANCE_TOL, WATER_BALANCE_TOL};
use crate::system::{HydroSystem, FLOW_TO_VOLUME};
use crate::uncertainty::UncertaintySet;

/// Re-dispatch after a deviation has been realised.
#[derive(Clone, Debug, PartialEq)]
pub struct BalancingOutcome {
    pub deltas: Vec<f64>,
    /// `[module][period]`
    pub production: Vec<Vec<f64>>,
    /// `[module][segment][period]`
    pub discharge: Vec<Vec<Vec<f64>>>,
    pub bypass: Vec<Vec<f64>>,
    pub spill: Vec<Vec<f64>>,
    pub inflow: Vec<Vec<f64>>,
    pub outflow: Vec<Vec<f64>>,
    /// `[module][0..=T]`
    pub volume: Vec<Vec<f64>>,
    pub shed: Vec<f64>,
    pub dump: Vec<f64>,
    /// Z^bal
    pub cost: f64,
}

impl BalancingOutcome {
    pub(crate) fn from_values(vars: &BalancingVars, deltas: &[f64], x: &[f64]) -> Self {
        let get = |v: &Vec<Var>| v.iter().map(|i| x[i.index()]).collect::<Vec<f64>>();
        let h = &vars.hydro;
        Self {
            deltas: deltas.to_vec(),
            production: h.power.iter().map(get).collect(),
            discharge: h.discharge.iter().map(|m| m.iter().map(get).collect()).collect(),
            bypass: h.bypass.iter().map(get).collect(),
            spill: h.spill.iter().map(get).collect(),
            inflow: h.inflow.iter().map(get).collect(),
            outflow: h.outflow.iter().map(get).collect(),
            volume: h.volume.iter().map(get).collect(),
            shed: get(&vars.shed),
            dump: get(&vars.dump),
            cost: vars.cost(x),
        }
    }

    /// Largest absolute mass-balance residual in Mm³.
    pub fn water_balance_residual(&self, system: &HydroSystem) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, module) in system.modules().iter().enumerate() {
            worst = worst.max((self.volume[m][0] - module.initial_volume).abs());
            for t in 0..system.periods() {
                let k = FLOW_TO_VOLUME * system.grid.period_hours[t];
                let r = self.volume[m][t + 1]
                    - self.volume[m][t]
                    - k * (self.inflow[m][t] - self.outflow[m][t] + module.inflow[t]);
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Rule violations; `schedule` adds the `p − r ≤ p̄ ≤ p + r` check.
    pub fn violations(&self, system: &HydroSystem, schedule: Option<&Schedule>) -> Vec<String> {
        let mut out = Vec::new();
        let tol = POWER_BALANCE_TOL;
        for t in 0..system.periods() {
            let total: f64 = self.production.iter().map(|p| p[t]).sum();
            let lhs = total + self.shed[t] - self.dump[t];
            let rhs = system.grid.net_load[t] + self.deltas[t];
            if (lhs - rhs).abs() > tol {
                out.push(format!("period {t}: power balance off by {}", lhs - rhs));
            }
            if self.shed[t] < -tol || self.dump[t] < -tol {
                out.push(format!("period {t}: negative shed or dump"));
            }
            for (m, ms) in self.production.iter().enumerate() {
                if ms[t] < -tol {
                    out.push(format!("module {m} period {t}: negative production"));
                }
                if let Some(s) = schedule {
                    let sm = &s.modules[m];
                    let (p, r) = (sm.production[t], sm.reserve[t]);
                    if ms[t] > p + r + tol || ms[t] < p - r - tol {
                        out.push(format!("module {m} period {t}: production {} outside [{}, {}]", ms[t], p - r, p + r));
                    }
                }
            }
        }
        let residual = self.water_balance_residual(system);
        if residual > WATER_BALANCE_TOL {
            out.push(format!("water balance residual {residual:e} exceeds {WATER_BALANCE_TOL:e}"));
        }
        out
    }
}

/// A primal balancing LP with its variable map.
pub struct BalancingModel {
    pub lp: LinearProgram,
    vars: BalancingVars,
    deltas: Vec<f64>,
}

impl BalancingModel {
    pub fn extract(&self, result: &SolveResult) -> Result<BalancingOutcome> {
        if result.status != SolveStatus::Optimal {
            return Err(Error::NotOptimal {
                context: "balancing".into(),
                status: result.status,
            });
        }
        Ok(BalancingOutcome::from_values(&self.vars, &self.deltas, &result.primal))
    }
}

fn check_deltas(system: &HydroSystem, deltas: &[f64]) -> Result<()> {
    if deltas.len() != system.periods() {
        return Err(Error::InvalidInput(format!(
            "deviation vector has {} entries for {} periods",
            deltas.len(),
            system.periods()
        )));
    }
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("deviation vector is not finite".into()));
    }
    Ok(())
}

fn check_shape(system: &HydroSystem, schedule: &Schedule) -> Result<()> {
    let t = system.periods();
    let ok = schedule.modules.len() == system.modules().len()
        && schedule
            .modules
            .iter()
            .all(|m| m.production.len() == t && m.reserve.len() == t);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput("schedule does not match the system".into()))
    }
}

fn balancing_model(system: &HydroSystem, deltas: &[f64], coupling: Coupling<'_>) -> BalancingModel {
    let mut lp = LinearProgram::new(ObjSense::Minimize);
    let vars = add_balancing(&mut lp, system, "", deltas, coupling);
    for &(v, c) in &vars.cost_terms {
        lp.add_cost(v, c);
    }
    BalancingModel {
        lp,
        vars,
        deltas: deltas.to_vec(),
    }
}

pub fn build_balancing_primal(system: &HydroSystem, schedule: &Schedule, deltas: &[f64]) -> Result<BalancingModel> {
    check_deltas(system, deltas)?;
    check_shape(system, schedule)?;
    Ok(balancing_model(system, deltas, Coupling::Fixed(schedule)))
}

/// Balancing with production limits relaxed to `[0, P]`.
pub fn build_perfect_foresight(system: &HydroSystem, deltas: &[f64]) -> Result<BalancingModel> {
    check_deltas(system, deltas)?;
    Ok(balancing_model(system, deltas, Coupling::PerfectForesight))
}

fn solve_model(model: &BalancingModel, options: &SolveOptions) -> Result<BalancingOutcome> {
    let result = lp::solve(&model.lp, options)?;
    model.extract(&result)
}

pub fn solve_balancing(
    system: &HydroSystem,
    schedule: &Schedule,
    deltas: &[f64],
    options: &SolveOptions,
) -> Result<BalancingOutcome> {
    solve_model(&build_balancing_primal(system, schedule, deltas)?, options)
}

pub fn solve_perfect_foresight(system: &HydroSystem, deltas: &[f64], options: &SolveOptions) -> Result<BalancingOutcome> {
    solve_model(&build_perfect_foresight(system, deltas)?, options)
}

/// Dual of the balancing LP, either for a fixed deviation or with the
/// deviation chosen by binaries from an uncertainty set.
pub struct DualModel {
    pub lp: LinearProgram,
    lambda: Vec<Var>,
    up: Vec<Var>,
    down: Vec<Var>,
    set: Option<UncertaintySet>,
}

/// Worst-case deviation for a fixed schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstCase {
    pub deltas: Vec<f64>,
    /// W^bal
    pub value: f64,
    /// Proven upper bound on the worst case. Equals `value` unless the
    /// search stopped at a time limit.
    pub bound: f64,
    pub up: Vec<bool>,
    pub down: Vec<bool>,
}

impl WorstCase {
    pub fn is_proven(&self) -> bool {
        self.bound - self.value <= 1e-9 * (1.0 + self.value.abs())
    }
}

impl DualModel {
    pub fn lambda(&self, result: &SolveResult) -> Vec<f64> {
        self.lambda.iter().map(|&v| result.value(v)).collect()
    }

    /// Fixes the binaries to the pattern of `deltas`, which must belong to
    /// the set the model was built for.
    pub fn fix_pattern(&mut self, deltas: &[f64]) -> Result<()> {
        let set = self
            .set
            .ok_or_else(|| Error::InvalidInput("model has no deviation binaries".into()))?;
        if deltas.len() != self.up.len() || !set.contains(deltas) {
            return Err(Error::InvalidInput("deviation vector is not in the uncertainty set".into()));
        }
        let (up, down) = set.pattern(deltas);
        for t in 0..deltas.len() {
            let (u, l) = (f64::from(u8::from(up[t])), f64::from(u8::from(down[t])));
            self.lp.set_bounds(self.up[t], u, u);
            self.lp.set_bounds(self.down[t], l, l);
        }
        Ok(())
    }

    /// Cuts off the sign pattern of `deltas`.
    pub fn exclude_pattern(&mut self, deltas: &[f64]) -> Result<()> {
        let set = self
            .set
            .ok_or_else(|| Error::InvalidInput("model has no deviation binaries".into()))?;
        if deltas.len() != self.up.len() || !set.contains(deltas) {
            return Err(Error::InvalidInput("deviation vector is not in the uncertainty set".into()));
        }
        let (up, down) = set.pattern(deltas);
        let mut terms = Vec::with_capacity(2 * deltas.len());
        let mut rhs = 1.0;
        for (vars, on) in [(&self.up, &up), (&self.down, &down)] {
            for (&v, &b) in vars.iter().zip(on) {
                if b {
                    terms.push((v, -1.0));
                    rhs -= 1.0;
                } else {
                    terms.push((v, 1.0));
                }
            }
        }
        let name = format!("exclude[{}]", self.lp.num_constraints());
        self.lp.add_constraint(name, terms, RowSense::Ge, rhs);
        Ok(())
    }

    /// Undoes [`DualModel::fix_pattern`].
    pub fn release_pattern(&mut self) {
        for &u in self.up.iter().chain(&self.down) {
            self.lp.set_bounds(u, 0.0, 1.0);
        }
    }

    /// Reads the deviation from an optimal result, or from an incumbent
    /// found before a limit.
    pub fn worst_case(&self, result: &SolveResult) -> Result<WorstCase> {
        let set = self
            .set
            .ok_or_else(|| Error::InvalidInput("model has no deviation binaries".into()))?;
        if !result.has_solution() {
            return Err(Error::NotOptimal {
                context: "worst-case subproblem".into(),
                status: result.status,
            });
        }
        let up: Vec<bool> = self.up.iter().map(|&v| result.value(v) > 0.5).collect();
        let down: Vec<bool> = self.down.iter().map(|&v| result.value(v) > 0.5).collect();
        Ok(WorstCase {
            deltas: set.from_pattern(&up, &down),
            value: result.objective,
            bound: result.bound.unwrap_or(result.objective).max(result.objective),
            up,
            down,
        })
    }
}

/// Dual variables and rows shared by both dual forms; the `λ` objective
/// terms are left to the caller.
fn add_dual_core(lp: &mut LinearProgram, system: &HydroSystem, schedule: &Schedule) -> Vec<Var> {
    let topo = &system.topology;
    let grid = &system.grid;
    let costs = &system.costs;
    let t_len = grid.periods();
    let inf = f64::INFINITY;
    let free = |lp: &mut LinearProgram, name: String, cost: f64| lp.add_var(name, -inf, inf, cost);

    let lambda: Vec<Var> = (0..t_len)
        .map(|t| lp.add_var(format!("lambda[{t}]"), -costs.power_spill, costs.load_shed, 0.0))
        .collect();

    let mut psi_in = Vec::new();
    let mut psi_out = Vec::new();
    let mut mu = Vec::new();
    let mut eta = Vec::new();
    let mut nu = Vec::new();
    for module in topo.modules() {
        let id = &module.id;
        psi_in.push((0..t_len).map(|t| free(lp, format!("psi_in[{id},{t}]"), 0.0)).collect::<Vec<_>>());
        psi_out.push((0..t_len).map(|t| free(lp, format!("psi_out[{id},{t}]"), 0.0)).collect::<Vec<_>>());
        nu.push(free(lp, format!("nu[{id}]"), module.initial_volume));
        mu.push(
            (0..t_len)
                .map(|t| {
                    let k = FLOW_TO_VOLUME * grid.period_hours[t];
                    free(lp, format!("mu[{id},{t}]"), k * module.inflow[t])
                })
                .collect::<Vec<_>>(),
        );
        eta.push((0..t_len).map(|t| free(lp, format!("eta[{id},{t}]"), 0.0)).collect::<Vec<_>>());
    }

    for (m, module) in topo.modules().iter().enumerate() {
        let id = &module.id;
        let down = topo.downstream(m);
        let sm = &schedule.modules[m];
        for t in 0..t_len {
            let f = grid.period_hours[t];
            let k = FLOW_TO_VOLUME * f;
            lp.add_constraint(
                format!("col_qin[{id},{t}]"),
                vec![(psi_in[m][t], 1.0), (mu[m][t], -k)],
                RowSense::Le,
                0.0,
            );
            lp.add_constraint(
                format!("col_qout[{id},{t}]"),
                vec![(psi_out[m][t], 1.0), (mu[m][t], k)],
                RowSense::Le,
                0.0,
            );
            let gate_terms = |target: Option<usize>| {
                let mut terms = vec![(psi_out[m][t], -1.0)];
                if let Some(j) = target {
                    terms.push((psi_in[j][t], -1.0));
                }
                terms
            };
            for (n, seg) in module.segments.iter().enumerate() {
                let g = lp.add_var(format!("gamma_d[{id},{n},{t}]"), -inf, 0.0, seg.max_discharge);
                let mut terms = gate_terms(down.discharge);
                terms.push((eta[m][t], -seg.energy_coeff));
                terms.push((g, 1.0));
                lp.add_constraint(format!("col_qd[{id},{n},{t}]"), terms, RowSense::Le, 0.0);
            }
            let g = lp.add_var(format!("gamma_b[{id},{t}]"), -inf, 0.0, module.max_bypass);
            let mut terms = gate_terms(down.bypass);
            terms.push((g, 1.0));
            lp.add_constraint(format!("col_qb[{id},{t}]"), terms, RowSense::Le, f * costs.bypass_penalty);
            let g = lp.add_var(format!("gamma_o[{id},{t}]"), -inf, 0.0, module.max_spill);
            let mut terms = gate_terms(down.spill);
            terms.push((g, 1.0));
            lp.add_constraint(format!("col_qo[{id},{t}]"), terms, RowSense::Le, f * costs.spill_penalty);

            let (p, r) = (sm.production[t], sm.reserve[t]);
            let rho_up = lp.add_var(format!("rho_up[{id},{t}]"), -inf, 0.0, p + r);
            let rho_dn = lp.add_var(format!("rho_dn[{id},{t}]"), 0.0, inf, p - r);
            lp.add_constraint(
                format!("col_p[{id},{t}]"),
                vec![(eta[m][t], 1.0), (lambda[t], 1.0), (rho_up, 1.0), (rho_dn, 1.0)],
                RowSense::Le,
                0.0,
            );
        }
        for k in 0..=t_len {
            let omega = lp.add_var(format!("omega[{id},{k}]"), -inf, 0.0, module.max_volume);
            let mut terms = vec![(omega, 1.0)];
            if k == 0 {
                terms.push((nu[m], 1.0));
            } else {
                terms.push((mu[m][k - 1], 1.0));
            }
            if k < t_len {
                terms.push((mu[m][k], -1.0));
            }
            let rhs = if k == t_len { -module.water_value } else { 0.0 };
            lp.add_constraint(format!("col_v[{id},{k}]"), terms, RowSense::Le, rhs);
        }
    }
    lambda
}

/// Dual LP for a fixed deviation. Its optimum equals Z^bal.
pub fn build_balancing_dual(system: &HydroSystem, schedule: &Schedule, deltas: &[f64]) -> Result<DualModel> {
    check_deltas(system, deltas)?;
    check_shape(system, schedule)?;
    let mut lp = LinearProgram::new(ObjSense::Maximize);
    let lambda = add_dual_core(&mut lp, system, schedule);
    for (t, &l) in lambda.iter().enumerate() {
        lp.set_cost(l, system.grid.net_load[t] + deltas[t]);
    }
    Ok(DualModel {
        lp,
        lambda,
        up: Vec::new(),
        down: Vec::new(),
        set: None,
    })
}

/// Worst case over `set`: the dual with `Δ_t λ_t` linearised through
/// `w± = u± λ`, which is exact because `λ` is bounded.
pub fn build_worst_case_milp(system: &HydroSystem, schedule: &Schedule, set: &UncertaintySet) -> Result<DualModel> {
    check_shape(system, schedule)?;
    let costs = &system.costs;
    let (c_up, c_dn) = (costs.load_shed, costs.power_spill);
    let mut lp = LinearProgram::new(ObjSense::Maximize);
    let lambda = add_dual_core(&mut lp, system, schedule);
    let mut up = Vec::new();
    let mut down = Vec::new();
    for (t, &l) in lambda.iter().enumerate() {
        lp.set_cost(l, system.grid.net_load[t]);
        let u_up = lp.add_binary(format!("u_up[{t}]"), 0.0);
        let u_dn = lp.add_binary(format!("u_dn[{t}]"), 0.0);
        lp.add_constraint(format!("one_sign[{t}]"), vec![(u_up, 1.0), (u_dn, 1.0)], RowSense::Le, 1.0);
        for (u, tag, sign) in [(u_up, "up", 1.0), (u_dn, "dn", -1.0)] {
            let w = lp.add_var(format!("w_{tag}[{t}]"), -c_dn, c_up, sign * set.lambda_max);
            lp.add_constraint(format!("w_{tag}_a[{t}]"), vec![(w, 1.0), (u, -c_up)], RowSense::Le, 0.0);
            lp.add_constraint(format!("w_{tag}_b[{t}]"), vec![(w, 1.0), (u, c_dn)], RowSense::Ge, 0.0);
            lp.add_constraint(
                format!("w_{tag}_c[{t}]"),
                vec![(w, 1.0), (l, -1.0), (u, c_dn)],
                RowSense::Le,
                c_dn,
            );
            lp.add_constraint(
                format!("w_{tag}_d[{t}]"),
                vec![(w, 1.0), (l, -1.0), (u, -c_up)],
                RowSense::Ge,
                -c_up,
            );
        }
        up.push(u_up);
        down.push(u_dn);
    }
    let budget = up.iter().chain(&down).map(|&u| (u, 1.0)).collect();
    lp.add_constraint("budget", budget, RowSense::Le, set.gamma as f64);
    Ok(DualModel {
        lp,
        lambda,
        up,
        down,
        set: Some(*set),
    })
}

/// Finds the deviation in `set` that maximises the balancing cost of
/// `schedule`. A local search seeds the MILP with an incumbent. With
/// `options.time_limit` set the MILP may stop early; the best deviation
/// found is returned together with the proven bound.
pub fn solve_worst_case(
    system: &HydroSystem,
    schedule: &Schedule,
    set: &UncertaintySet,
    options: &SolveOptions,
) -> Result<WorstCase> {
    solve_worst_case_excluding(system, schedule, set, &[], options)?
        .ok_or_else(|| Error::InvalidInput("uncertainty set is empty".into()))
}

/// As [`solve_worst_case`] over the deviations of `set` not listed in
/// `exclude`. Returns `None` when every deviation is excluded.
pub fn solve_worst_case_excluding(
    system: &HydroSystem,
    schedule: &Schedule,
    set: &UncertaintySet,
    exclude: &[Vec<f64>],
    options: &SolveOptions,
) -> Result<Option<WorstCase>> {
    let mut model = build_worst_case_milp(system, schedule, set)?;
    for d in exclude {
        model.exclude_pattern(d)?;
    }
    let guess = local_search(system, schedule, set, options)?;
    let mut start = None;
    if !exclude.iter().any(|d| set.same_pattern(d, &guess)) {
        model.fix_pattern(&guess)?;
        let seeded = lp::solve(&model.lp, options)?;
        model.release_pattern();
        start = seeded.is_optimal().then_some(seeded.primal);
    }
    let result = lp::solve_from(&model.lp, options, start.as_deref())?;
    match result.status {
        SolveStatus::Optimal => model.worst_case(&result).map(Some),
        SolveStatus::Infeasible if !exclude.is_empty() => Ok(None),
        SolveStatus::Unbounded => Err(Error::InvalidInput(
            "worst-case dual is unbounded, so the balancing primal is infeasible".into(),
        )),
        SolveStatus::Limit if result.has_solution() => {
            let mut wc = model.worst_case(&result)?;
            // The incumbent's dual value only bounds Z^bal from below.
            wc.value = solve_balancing(system, schedule, &wc.deltas, options)?.cost;
            wc.bound = result.bound.unwrap_or(f64::INFINITY).max(wc.value);
            Ok(Some(wc))
        }
        status => Err(Error::NotOptimal {
            context: "worst-case subproblem".into(),
            status,
        }),
    }
}

const LOCAL_SEARCH_ROUNDS: usize = 20;

/// Alternating ascent from `Δ = 0`: price the current deviation, then spend
/// the budget on the periods with the largest `|λ|`. Stops at a local
/// maximum.
fn local_search(
    system: &HydroSystem,
    schedule: &Schedule,
    set: &UncertaintySet,
    options: &SolveOptions,
) -> Result<Vec<f64>> {
    let periods = system.periods();
    let mut current = vec![0.0; periods];
    let mut value = f64::NEG_INFINITY;
    let mut candidate = current.clone();
    for _ in 0..LOCAL_SEARCH_ROUNDS {
        let model = build_balancing_dual(system, schedule, &candidate)?;
        let res = lp::solve(&model.lp, options)?;
        if !res.is_optimal() || res.objective <= value + 1e-9 * (1.0 + value.abs()) {
            break;
        }
        value = res.objective;
        current = candidate;
        let lambda = model.lambda(&res);
        let mut order: Vec<usize> = (0..periods).filter(|&t| lambda[t] != 0.0).collect();
        order.sort_by(|&a, &b| lambda[b].abs().total_cmp(&lambda[a].abs()).then(a.cmp(&b)));
        candidate = vec![0.0; periods];
        for &t in order.iter().take(set.gamma) {
            candidate[t] = set.lambda_max * lambda[t].signum();
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dayahead::{solve_day_ahead, DayAheadConfig, ReserveRequirement};
    use crate::fixtures;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    fn c1_schedule(reserve: f64) -> (HydroSystem, Schedule) {
        let sys = fixtures::c1();
        let cfg = DayAheadConfig::with_reserve(ReserveRequirement::Uniform(reserve));
        let s = solve_day_ahead(&sys, &cfg, &opts()).unwrap();
        (sys, s)
    }

    #[test]
    fn no_deviation_reproduces_day_ahead() {
        let (sys, s) = c1_schedule(0.0);
        let out = solve_balancing(&sys, &s, &[0.0], &opts()).unwrap();
        assert!((out.cost + 482.0).abs() < 1e-9, "{}", out.cost);
        assert!((out.production[0][0] - 10.0).abs() < 1e-9);
        assert!(out.violations(&sys, Some(&s)).is_empty());
    }

    #[test]
    fn positive_deviation_without_reserve_is_shed() {
        let (sys, s) = c1_schedule(0.0);
        let out = solve_balancing(&sys, &s, &[4.0], &opts()).unwrap();
        assert!((out.shed[0] - 4.0).abs() < 1e-9);
        assert!((out.cost - (-482.0 + 3000.0 * 4.0)).abs() < 1e-9);
    }

    #[test]
    fn reserve_never_hurts() {
        let (sys, s0) = c1_schedule(0.0);
        let (_, s5) = c1_schedule(5.0);
        assert!(s5.total_reserve(0) >= 5.0 - 1e-9);
        for d in [-6.0, -2.0, 0.0, 3.0, 7.0] {
            let a = solve_balancing(&sys, &s0, &[d], &opts()).unwrap().cost;
            let b = solve_balancing(&sys, &s5, &[d], &opts()).unwrap().cost;
            assert!(b <= a + 1e-9, "Δ={d}: {b} > {a}");
        }
    }

    #[test]
    fn perfect_foresight_values() {
        let (sys, s) = c1_schedule(0.0);
        let pf = solve_perfect_foresight(&sys, &[0.0], &opts()).unwrap();
        assert!((pf.cost + 482.0).abs() < 1e-9);
        let pf = solve_perfect_foresight(&sys, &[5.0], &opts()).unwrap();
        assert!(pf.shed[0].abs() < 1e-9);
        assert!((pf.discharge[0][0][0] - 7.5).abs() < 1e-9);
        // 7.5 m³/s for one hour
        assert!((pf.cost - (-1000.0 * (0.5 - 7.5 * FLOW_TO_VOLUME))).abs() < 1e-9);
        for d in [-9.0, 0.0, 5.0, 12.0] {
            let bal = solve_balancing(&sys, &s, &[d], &opts()).unwrap().cost;
            let pf = solve_perfect_foresight(&sys, &[d], &opts()).unwrap().cost;
            assert!(pf <= bal + 1e-9);
        }
    }

    #[test]
    fn dual_lp_matches_primal() {
        let sys = fixtures::c2(4);
        let s = solve_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(4.0)), &opts())
            .unwrap();
        for deltas in [[0.0, 0.0, 0.0, 0.0], [3.0, -2.0, 6.0, 0.5], [-10.0, 10.0, -1.0, 4.0]] {
            let primal = solve_balancing(&sys, &s, &deltas, &opts()).unwrap().cost;
            let dual = build_balancing_dual(&sys, &s, &deltas).unwrap();
            let res = lp::solve(&dual.lp, &opts()).unwrap();
            assert!((primal - res.objective).abs() <= 1e-6 * (1.0 + primal.abs()), "{primal} vs {}", res.objective);
            for l in dual.lambda(&res) {
                assert!((-1000.0 - 1e-9..=3000.0 + 1e-9).contains(&l));
            }
        }
    }

    #[test]
    fn fixed_pattern_milp_matches_primal() {
        let sys = fixtures::c2(4);
        let s = solve_day_ahead(&sys, &DayAheadConfig::without_reserve(), &opts()).unwrap();
        let set = UncertaintySet::new(8.0, 2).unwrap();
        let mut model = build_worst_case_milp(&sys, &s, &set).unwrap();
        for deltas in [vec![0.0, 8.0, 0.0, -8.0], vec![-8.0, 0.0, 0.0, 0.0]] {
            model.fix_pattern(&deltas).unwrap();
            let res = lp::solve(&model.lp, &opts()).unwrap();
            let primal = solve_balancing(&sys, &s, &deltas, &opts()).unwrap().cost;
            assert!((primal - res.objective).abs() <= 1e-6 * (1.0 + primal.abs()));
        }
        assert!(model.fix_pattern(&[4.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn empty_budget_gives_nominal_cost() {
        let (sys, s) = c1_schedule(0.0);
        let set = UncertaintySet::new(5.0, 0).unwrap();
        let wc = solve_worst_case(&sys, &s, &set, &opts()).unwrap();
        assert_eq!(wc.deltas, vec![0.0]);
        assert!((wc.value + 482.0).abs() < 1e-6);
    }

    #[test]
    fn single_period_worst_case_sheds() {
        let (sys, s) = c1_schedule(0.0);
        let set = UncertaintySet::new(5.0, 1).unwrap();
        let wc = solve_worst_case(&sys, &s, &set, &opts()).unwrap();
        assert_eq!(wc.deltas, vec![5.0]);
        assert!((wc.value - (-482.0 + 3000.0 * 5.0)).abs() < 1e-6);
    }

    #[test]
    fn worst_case_matches_enumeration_on_c2() {
        let sys = fixtures::c2(4);
        let s = solve_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(3.0)), &opts())
            .unwrap();
        let set = UncertaintySet::new(8.0, 2).unwrap();
        let best = set
            .enumerate(4)
            .unwrap()
            .iter()
            .map(|d| solve_balancing(&sys, &s, d, &opts()).unwrap().cost)
            .fold(f64::NEG_INFINITY, f64::max);
        let wc = solve_worst_case(&sys, &s, &set, &opts()).unwrap();
        assert!(set.contains(&wc.deltas));
        assert!((wc.value - best).abs() <= 1e-6 * (1.0 + best.abs()), "{} vs {best}", wc.value);
        let at = solve_balancing(&sys, &s, &wc.deltas, &opts()).unwrap().cost;
        assert!((at - wc.value).abs() <= 1e-6 * (1.0 + at.abs()));
    }

    #[test]
    fn excluded_patterns_are_skipped() {
        let sys = fixtures::c2(3);
        let s = solve_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(2.0)), &opts())
            .unwrap();
        let set = UncertaintySet::new(6.0, 1).unwrap();
        let mut costs: Vec<(f64, Vec<f64>)> = set
            .enumerate(3)
            .unwrap()
            .into_iter()
            .map(|d| (solve_balancing(&sys, &s, &d, &opts()).unwrap().cost, d))
            .collect();
        costs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let exclude = vec![costs[0].1.clone(), costs[1].1.clone()];
        let wc = solve_worst_case_excluding(&sys, &s, &set, &exclude, &opts()).unwrap().unwrap();
        assert!(!exclude.iter().any(|d| set.same_pattern(d, &wc.deltas)));
        assert!((wc.value - costs[2].0).abs() <= 1e-6 * (1.0 + costs[2].0.abs()));

        let all: Vec<Vec<f64>> = costs.into_iter().map(|(_, d)| d).collect();
        assert!(solve_worst_case_excluding(&sys, &s, &set, &all, &opts()).unwrap().is_none());
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let (sys, s) = c1_schedule(0.0);
        assert!(build_balancing_primal(&sys, &s, &[0.0, 1.0]).is_err());
        assert!(build_perfect_foresight(&sys, &[f64::NAN]).is_err());
        let c2 = fixtures::c2(2);
        assert!(build_balancing_primal(&c2, &s, &[0.0, 0.0]).is_err());
    }
}
