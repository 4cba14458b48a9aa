//! Backend-neutral linear and mixed-integer programs.
//!
//! Models are assembled with [`LinearProgram`] and dispatched to a solver
//! through [`solve`]. The only backend wired in is HiGHS. Every optimal
//! result is re-checked against the model with an independent residual
//! computation before it is returned.
//!
//! Dual sign convention: for a minimisation, the dual of a `<=` row is
//! non-positive and the dual of a `>=` row is non-negative. Equality rows have
//! free duals. Reduced costs satisfy `c = A^T y + d`.

use std::ffi::CString;
use std::fmt;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use highs::{HighsModelStatus, RowProblem, Sense};

use crate::error::LpError;

/// Column handle inside a [`LinearProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row handle inside a [`LinearProgram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Row(usize);

impl Row {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for RowSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
            RowSense::Ge => ">=",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(Var, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// A linear objective over declared variables plus explicit linear rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    sense: ObjSense,
    variables: Vec<Variable>,
    objective: Vec<f64>,
    constant: f64,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(sense: ObjSense) -> Self {
        Self {
            sense,
            variables: Vec::new(),
            objective: Vec::new(),
            constant: 0.0,
            constraints: Vec::new(),
        }
    }

    pub fn sense(&self) -> ObjSense {
        self.sense
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> Var {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind: VarKind::Continuous,
        });
        self.objective.push(cost);
        Var(self.variables.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> Var {
        self.variables.push(Variable {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            kind: VarKind::Binary,
        });
        self.objective.push(cost);
        Var(self.variables.len() - 1)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(Var, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> Row {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
        Row(self.constraints.len() - 1)
    }

    pub fn cost(&self, var: Var) -> f64 {
        self.objective[var.0]
    }

    pub fn set_cost(&mut self, var: Var, cost: f64) {
        self.objective[var.0] = cost;
    }

    pub fn add_cost(&mut self, var: Var, cost: f64) {
        self.objective[var.0] += cost;
    }

    pub fn add_constant(&mut self, value: f64) {
        self.constant += value;
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn set_bounds(&mut self, var: Var, lower: f64, upper: f64) {
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn set_rhs(&mut self, row: Row, rhs: f64) {
        self.constraints[row.0].rhs = rhs;
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn variable(&self, var: Var) -> &Variable {
        &self.variables[var.0]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraint(&self, row: Row) -> &Constraint {
        &self.constraints[row.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_coefficients(&self) -> &[f64] {
        &self.objective
    }

    pub fn is_mip(&self) -> bool {
        self.variables.iter().any(|v| v.kind == VarKind::Binary)
    }

    /// Linear scan; meant for tests and diagnostics, not hot loops.
    pub fn find_var(&self, name: &str) -> Option<Var> {
        self.variables.iter().position(|v| v.name == name).map(Var)
    }

    pub fn find_constraint(&self, name: &str) -> Option<Row> {
        self.constraints.iter().position(|c| c.name == name).map(Row)
    }

    /// Structural checks performed before a model is handed to a backend.
    pub fn check_consistency(&self) -> Result<(), LpError> {
        let n = self.variables.len();
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(LpError::Inconsistent(format!(
                    "variable {} has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(LpError::Inconsistent(format!(
                    "binary variable {} has bounds outside [0, 1]",
                    v.name
                )));
            }
        }
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(LpError::Inconsistent(format!(
                    "objective coefficient of {} is {}",
                    self.variables[j].name, c
                )));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(LpError::Inconsistent(format!("row {} has rhs {}", c.name, c.rhs)));
            }
            for &(var, a) in &c.terms {
                if var.0 >= n {
                    return Err(LpError::Inconsistent(format!(
                        "row {} references undeclared column {}",
                        c.name, var.0
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::Inconsistent(format!(
                        "row {} has coefficient {} on {}",
                        c.name, a, self.variables[var.0].name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    pub fn row_activity(&self, row: Row, x: &[f64]) -> f64 {
        self.constraints[row.0]
            .terms
            .iter()
            .map(|&(v, a)| a * x[v.0])
            .sum()
    }

    /// Maximum row, bound and integrality violation of a candidate point.
    pub fn residuals(&self, x: &[f64]) -> Residuals {
        let mut out = Residuals::default();
        for (i, c) in self.constraints.iter().enumerate() {
            let act: f64 = c.terms.iter().map(|&(v, a)| a * x[v.0]).sum();
            let viol = match c.sense {
                RowSense::Le => (act - c.rhs).max(0.0),
                RowSense::Ge => (c.rhs - act).max(0.0),
                RowSense::Eq => (act - c.rhs).abs(),
            };
            if viol > out.max_row {
                out.max_row = viol;
                out.worst_row = Some(Row(i));
            }
        }
        for (v, &val) in self.variables.iter().zip(x) {
            let viol = (v.lower - val).max(val - v.upper).max(0.0);
            out.max_bound = out.max_bound.max(viol);
            if v.kind == VarKind::Binary {
                out.max_integrality = out.max_integrality.max((val - val.round()).abs());
            }
        }
        out
    }

    /// Objective of the dual solution `(y, d)` evaluated at the bounds that
    /// `x` sits on. Equals the primal objective at an optimal basis.
    pub fn dual_objective(&self, x: &[f64], duals: &[f64], reduced_costs: &[f64]) -> f64 {
        let rows: f64 = self
            .constraints
            .iter()
            .zip(duals)
            .map(|(c, y)| c.rhs * y)
            .sum();
        let bounds: f64 = self
            .variables
            .iter()
            .zip(reduced_costs)
            .zip(x)
            .map(|((v, d), &val)| {
                if *d == 0.0 {
                    return 0.0;
                }
                let at_lower = (val - v.lower).abs() <= (v.upper - val).abs();
                let b = if at_lower { v.lower } else { v.upper };
                if b.is_finite() {
                    d * b
                } else {
                    d * val
                }
            })
            .sum();
        self.constant + rows + bounds
    }

    /// Writes the model in CPLEX LP text format. Intended for debugging.
    pub fn write_lp<W: Write>(&self, mut w: W) -> io::Result<()> {
        let name = |j: usize| sanitize(&self.variables[j].name, "x", j);
        writeln!(
            w,
            "{}",
            match self.sense {
                ObjSense::Minimize => "Minimize",
                ObjSense::Maximize => "Maximize",
            }
        )?;
        write!(w, " obj:")?;
        let mut any = false;
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                write!(w, " {} {} {}", sign(*c), c.abs(), name(j))?;
                any = true;
            }
        }
        if self.constant != 0.0 || !any {
            write!(w, " {} {}", sign(self.constant), self.constant.abs())?;
        }
        writeln!(w)?;
        writeln!(w, "Subject To")?;
        for (i, c) in self.constraints.iter().enumerate() {
            if c.terms.is_empty() {
                writeln!(w, "\\ {} has no terms", c.name)?;
                continue;
            }
            write!(w, " {}:", sanitize(&c.name, "c", i))?;
            for &(v, a) in &c.terms {
                write!(w, " {} {} {}", sign(a), a.abs(), name(v.0))?;
            }
            writeln!(w, " {} {}", c.sense, c.rhs)?;
        }
        writeln!(w, "Bounds")?;
        for (j, v) in self.variables.iter().enumerate() {
            let lo = fmt_bound(v.lower);
            let hi = fmt_bound(v.upper);
            writeln!(w, " {} <= {} <= {}", lo, name(j), hi)?;
        }
        let binaries: Vec<usize> = self
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(j, _)| j)
            .collect();
        if !binaries.is_empty() {
            writeln!(w, "Binaries")?;
            for j in binaries {
                writeln!(w, " {}", name(j))?;
            }
        }
        writeln!(w, "End")
    }
}

fn sign(v: f64) -> char {
    if v < 0.0 {
        '-'
    } else {
        '+'
    }
}

fn fmt_bound(b: f64) -> String {
    if b == f64::INFINITY {
        "+inf".into()
    } else if b == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{b}")
    }
}

fn sanitize(name: &str, prefix: &str, idx: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "!\"#$%&()/,.;?@_`'{}|~".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    match cleaned.chars().next() {
        Some(c) if !c.is_ascii_digit() && c != '.' => cleaned,
        _ => format!("{prefix}{idx}_{cleaned}"),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    pub max_row: f64,
    pub max_bound: f64,
    pub max_integrality: f64,
    pub worst_row: Option<Row>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub mip_abs_gap: f64,
    pub mip_rel_gap: f64,
    pub integrality_tol: f64,
    pub feasibility_tol: f64,
    /// Residual threshold enforced on every optimal result.
    pub residual_tol: f64,
    pub time_limit: Option<f64>,
    pub method: LpMethod,
}

/// Algorithm for continuous models. MIPs always use branch and bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LpMethod {
    Simplex,
    /// Interior point without crossover. Much faster on the large,
    /// degenerate extensive forms; the point is not a vertex.
    InteriorPoint,
    /// Interior point above [`IPM_THRESHOLD`] columns, simplex below.
    #[default]
    Auto,
}

pub const IPM_THRESHOLD: usize = 10_000;

impl LpMethod {
    fn use_ipm(self, columns: usize) -> bool {
        match self {
            LpMethod::Simplex => false,
            LpMethod::InteriorPoint => true,
            LpMethod::Auto => columns > IPM_THRESHOLD,
        }
    }
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mip_abs_gap: 0.0,
            mip_rel_gap: 0.0,
            integrality_tol: 1e-9,
            feasibility_tol: 1e-9,
            residual_tol: 1e-6,
            time_limit: None,
            method: LpMethod::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Limit => "limit",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// Row duals; present only for optimal continuous models.
    pub duals: Option<Vec<f64>>,
    pub reduced_costs: Option<Vec<f64>>,
    /// Proven bound on the optimum of a MIP: exact when optimal, otherwise
    /// the dual bound HiGHS reached before stopping.
    pub bound: Option<f64>,
    pub wall_time: Duration,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// A validated point is available: optimal, or a MIP incumbent found
    /// before a limit.
    pub fn has_solution(&self) -> bool {
        self.objective.is_finite()
    }

    pub fn value(&self, var: Var) -> f64 {
        self.primal[var.0]
    }

    pub fn dual(&self, row: Row) -> Option<f64> {
        self.duals.as_ref().map(|d| d[row.0])
    }

    pub fn value_by_name(&self, lp: &LinearProgram, name: &str) -> Option<f64> {
        lp.find_var(name).map(|v| self.primal[v.0])
    }

    pub fn dual_by_name(&self, lp: &LinearProgram, name: &str) -> Option<f64> {
        lp.find_constraint(name).and_then(|r| self.dual(r))
    }
}

/// Solves `lp` with HiGHS and validates the returned point.
pub fn solve(lp: &LinearProgram, options: &SolveOptions) -> Result<SolveResult, LpError> {
    solve_from(lp, options, None)
}

/// As [`solve`], handing `start` to HiGHS as an initial MIP incumbent.
pub fn solve_from(lp: &LinearProgram, options: &SolveOptions, start: Option<&[f64]>) -> Result<SolveResult, LpError> {
    lp.check_consistency()?;
    if let Some(x) = start {
        if x.len() != lp.num_vars() {
            return Err(LpError::Inconsistent(format!(
                "start has {} values for {} columns",
                x.len(),
                lp.num_vars()
            )));
        }
    }
    let started = Instant::now();
    if lp.num_vars() == 0 || lp.num_constraints() == 0 {
        let mut res = solve_box(lp);
        res.wall_time = started.elapsed();
        return Ok(res);
    }

    let mut status;
    let mut solved;
    let mut presolve = true;
    loop {
        let mut problem = RowProblem::default();
        let cols: Vec<_> = lp
            .variables
            .iter()
            .zip(&lp.objective)
            .map(|(v, &c)| match v.kind {
                VarKind::Continuous => problem.add_column(c, v.lower..=v.upper),
                VarKind::Binary => problem.add_integer_column(c, v.lower..=v.upper),
            })
            .collect();
        for c in &lp.constraints {
            let terms: Vec<_> = c.terms.iter().map(|&(v, a)| (cols[v.0], a)).collect();
            match c.sense {
                RowSense::Le => problem.add_row(..=c.rhs, terms),
                RowSense::Ge => problem.add_row(c.rhs.., terms),
                RowSense::Eq => problem.add_row(c.rhs..=c.rhs, terms),
            }
        }
        let sense = match lp.sense {
            ObjSense::Minimize => Sense::Minimise,
            ObjSense::Maximize => Sense::Maximise,
        };
        let mut model = problem
            .try_optimise(sense)
            .map_err(|s| LpError::Backend(format!("HiGHS rejected the model: {s:?}")))?;
        model.make_quiet();
        model.set_option("primal_feasibility_tolerance", options.feasibility_tol);
        model.set_option("dual_feasibility_tolerance", options.feasibility_tol);
        model.set_option("mip_feasibility_tolerance", options.integrality_tol);
        model.set_option("mip_abs_gap", options.mip_abs_gap);
        model.set_option("mip_rel_gap", options.mip_rel_gap);
        if let Some(limit) = options.time_limit {
            model.set_option("time_limit", limit);
        }
        if !presolve {
            model.set_option("presolve", "off");
        }
        if !lp.is_mip() && options.method.use_ipm(lp.num_vars()) {
            model.set_option("solver", "ipm");
            model.set_option("run_crossover", "off");
        }
        if let Some(x) = start.filter(|_| lp.is_mip()) {
            model
                .try_set_solution(Some(x), None, None, None)
                .map_err(|s| LpError::Backend(format!("HiGHS rejected the start: {s:?}")))?;
        }
        solved = model
            .try_solve()
            .map_err(|s| LpError::Backend(format!("HiGHS solve failed: {s:?}")))?;
        status = solved.status();
        // Presolve can only say "infeasible or unbounded"; rerun without it
        // to get a definite answer.
        if status == HighsModelStatus::UnboundedOrInfeasible && presolve {
            presolve = false;
            continue;
        }
        break;
    }

    let status = match status {
        HighsModelStatus::Optimal => SolveStatus::Optimal,
        HighsModelStatus::Infeasible => SolveStatus::Infeasible,
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
            SolveStatus::Unbounded
        }
        HighsModelStatus::ReachedTimeLimit
        | HighsModelStatus::ReachedIterationLimit
        | HighsModelStatus::ObjectiveBound
        | HighsModelStatus::ObjectiveTarget => SolveStatus::Limit,
        other => return Err(LpError::Backend(format!("HiGHS returned status {other:?}"))),
    };

    let solution = solved.get_solution();
    let mut primal = solution.columns().to_vec();
    let mut duals = None;
    let mut reduced_costs = None;
    let mut objective = f64::NAN;
    let mut bound = None;
    let incumbent = status == SolveStatus::Limit
        && lp.is_mip()
        && int_info(&solved, "primal_solution_status") == Some(highs_sys::SOLUTION_STATUS_FEASIBLE);
    if status == SolveStatus::Limit && lp.is_mip() {
        bound = double_info(&solved, "mip_dual_bound").map(|b| b + lp.constant);
    }
    if status == SolveStatus::Optimal || incumbent {
        // Snap tiny bound and integrality drift before validating.
        for (x, v) in primal.iter_mut().zip(&lp.variables) {
            if v.kind == VarKind::Binary && (*x - x.round()).abs() <= options.integrality_tol.max(1e-7) {
                *x = x.round();
            }
            *x = x.clamp(v.lower, v.upper);
        }
        let res = lp.residuals(&primal);
        if res.max_row > options.residual_tol || res.max_integrality > options.integrality_tol {
            let row = res
                .worst_row
                .map(|r| lp.constraints[r.0].name.clone())
                .unwrap_or_default();
            return Err(LpError::Residual {
                max_row: res.max_row,
                max_integrality: res.max_integrality,
                row,
            });
        }
        objective = lp.objective_value(&primal);
        if status == SolveStatus::Optimal && lp.is_mip() {
            bound = Some(objective);
        }
        if !lp.is_mip() && status == SolveStatus::Optimal {
            duals = Some(solution.dual_rows().to_vec());
            reduced_costs = Some(solution.dual_columns().to_vec());
        }
    }
    Ok(SolveResult {
        status,
        objective,
        primal,
        duals,
        reduced_costs,
        bound,
        wall_time: started.elapsed(),
    })
}

fn int_info(model: &highs::SolvedModel, name: &str) -> Option<highs_sys::HighsInt> {
    let key = CString::new(name).ok()?;
    let mut value: highs_sys::HighsInt = 0;
    let status = unsafe { highs_sys::Highs_getIntInfoValue(model.as_ptr(), key.as_ptr(), &mut value) };
    (status == highs_sys::STATUS_OK).then_some(value)
}

fn double_info(model: &highs::SolvedModel, name: &str) -> Option<f64> {
    let key = CString::new(name).ok()?;
    let mut value = f64::NAN;
    let status = unsafe { highs_sys::Highs_getDoubleInfoValue(model.as_ptr(), key.as_ptr(), &mut value) };
    (status == highs_sys::STATUS_OK && value.is_finite()).then_some(value)
}

/// Version of the linked HiGHS library.
pub fn backend_version() -> String {
    let (major, minor, patch) =
        unsafe { (highs_sys::Highs_versionMajor(), highs_sys::Highs_versionMinor(), highs_sys::Highs_versionPatch()) };
    format!("HiGHS {major}.{minor}.{patch}")
}

/// Models without rows (or without columns) separate per variable.
fn solve_box(lp: &LinearProgram) -> SolveResult {
    let maximize = lp.sense == ObjSense::Maximize;
    let mut primal = Vec::with_capacity(lp.num_vars());
    let mut status = SolveStatus::Optimal;
    for (v, &c) in lp.variables.iter().zip(&lp.objective) {
        let c = if maximize { -c } else { c };
        let x = if c > 0.0 {
            v.lower
        } else if c < 0.0 {
            v.upper
        } else {
            0.0f64.clamp(v.lower, v.upper)
        };
        if !x.is_finite() {
            status = SolveStatus::Unbounded;
        }
        primal.push(x);
    }
    // Rows without columns are constant comparisons.
    for c in &lp.constraints {
        let ok = match c.sense {
            RowSense::Le => 0.0 <= c.rhs,
            RowSense::Ge => 0.0 >= c.rhs,
            RowSense::Eq => c.rhs == 0.0,
        };
        if !ok {
            status = SolveStatus::Infeasible;
        }
    }
    let optimal = status == SolveStatus::Optimal;
    SolveResult {
        status,
        objective: if optimal { lp.objective_value(&primal) } else { f64::NAN },
        duals: optimal.then(|| vec![0.0; lp.num_constraints()]),
        reduced_costs: optimal.then(|| lp.objective.clone()),
        bound: None,
        primal,
        wall_time: Duration::ZERO,
    }
}
