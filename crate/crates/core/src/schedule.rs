//! First-stage schedules and their CSV exports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{HydroSystem, FLOW_TO_VOLUME};

/// Per-module slice of a [`Schedule`]. Vectors are indexed by period,
/// `discharge` by segment then period, and `volume` has one extra entry for
/// the end of the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleSchedule {
    pub id: String,
    pub production: Vec<f64>,
    pub reserve: Vec<f64>,
    pub discharge: Vec<Vec<f64>>,
    pub bypass: Vec<f64>,
    pub spill: Vec<f64>,
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
    pub volume: Vec<f64>,
}

impl ModuleSchedule {
    pub fn total_discharge(&self, t: usize) -> f64 {
        self.discharge.iter().map(|seg| seg[t]).sum()
    }

    pub fn end_volume(&self) -> f64 {
        *self.volume.last().expect("volume has T+1 entries")
    }
}

/// Day-ahead decisions: production, reserves, flows and volumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Content hash of the system the schedule was computed for.
    pub system_hash: String,
    pub modules: Vec<ModuleSchedule>,
    /// Z^da, excluding the reserve tie-break cost.
    pub first_stage_cost: f64,
}

/// Tolerances used by [`Schedule::check`].
pub const WATER_BALANCE_TOL: f64 = 1e-9;
pub const POWER_BALANCE_TOL: f64 = 1e-6;

impl Schedule {
    pub fn total_reserve(&self, t: usize) -> f64 {
        self.modules.iter().map(|m| m.reserve[t]).sum()
    }

    pub fn total_production(&self, t: usize) -> f64 {
        self.modules.iter().map(|m| m.production[t]).sum()
    }

    /// Largest absolute mass-balance residual in Mm³.
    pub fn water_balance_residual(&self, system: &HydroSystem) -> f64 {
        let mut worst: f64 = 0.0;
        for (ms, module) in self.modules.iter().zip(system.modules()) {
            worst = worst.max((ms.volume[0] - module.initial_volume).abs());
            for t in 0..system.periods() {
                let k = FLOW_TO_VOLUME * system.grid.period_hours[t];
                let r = ms.volume[t + 1] - ms.volume[t]
                    - k * (ms.inflow[t] - ms.outflow[t] + module.inflow[t]);
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Every rule a first-stage solution must satisfy; empty when valid.
    pub fn violations(&self, system: &HydroSystem) -> Vec<String> {
        let mut out = Vec::new();
        let t_len = system.periods();
        if self.modules.len() != system.modules().len() {
            out.push(format!(
                "schedule has {} modules, system has {}",
                self.modules.len(),
                system.modules().len()
            ));
            return out;
        }
        let topo = &system.topology;
        for (m, (ms, module)) in self.modules.iter().zip(system.modules()).enumerate() {
            let shape_ok = ms.production.len() == t_len
                && ms.reserve.len() == t_len
                && ms.bypass.len() == t_len
                && ms.spill.len() == t_len
                && ms.inflow.len() == t_len
                && ms.outflow.len() == t_len
                && ms.volume.len() == t_len + 1
                && ms.discharge.len() == module.segments.len()
                && ms.discharge.iter().all(|d| d.len() == t_len);
            if !shape_ok {
                out.push(format!("module {}: vector lengths do not match the grid", ms.id));
                return out;
            }
            let tol = POWER_BALANCE_TOL;
            for t in 0..t_len {
                let (p, r) = (ms.production[t], ms.reserve[t]);
                if r < -tol || p + r > module.max_production + tol || p - r < -tol {
                    out.push(format!("module {} period {t}: reserve box violated (p={p}, r={r})", ms.id));
                }
                let curve: f64 = module
                    .segments
                    .iter()
                    .zip(&ms.discharge)
                    .map(|(s, d)| s.energy_coeff * d[t])
                    .sum();
                if (p - curve).abs() > tol {
                    out.push(format!("module {} period {t}: production {p} off the turbine curve {curve}", ms.id));
                }
                let out_sum = ms.total_discharge(t) + ms.bypass[t] + ms.spill[t];
                if (ms.outflow[t] - out_sum).abs() > tol {
                    out.push(format!("module {} period {t}: outflow does not add up", ms.id));
                }
                let up = topo.upstream(m);
                let in_sum: f64 = up
                    .discharge
                    .iter()
                    .map(|&i| self.modules[i].total_discharge(t))
                    .chain(up.bypass.iter().map(|&j| self.modules[j].bypass[t]))
                    .chain(up.spill.iter().map(|&k| self.modules[k].spill[t]))
                    .sum();
                if (ms.inflow[t] - in_sum).abs() > tol {
                    out.push(format!("module {} period {t}: inflow does not add up", ms.id));
                }
                for (n, (s, d)) in module.segments.iter().zip(&ms.discharge).enumerate() {
                    if d[t] < -tol || d[t] > s.max_discharge + tol {
                        out.push(format!("module {} period {t}: segment {n} discharge out of range", ms.id));
                    }
                }
                if ms.bypass[t] < -tol || ms.bypass[t] > module.max_bypass + tol {
                    out.push(format!("module {} period {t}: bypass out of range", ms.id));
                }
                if ms.spill[t] < -tol || ms.spill[t] > module.max_spill + tol {
                    out.push(format!("module {} period {t}: spill out of range", ms.id));
                }
            }
            for (t, v) in ms.volume.iter().enumerate() {
                if *v < -tol || *v > module.max_volume + tol {
                    out.push(format!("module {} volume[{t}] = {v} out of range", ms.id));
                }
            }
        }
        for t in 0..t_len {
            let total = self.total_production(t);
            if (total - system.grid.net_load[t]).abs() > POWER_BALANCE_TOL {
                out.push(format!(
                    "period {t}: production {total} does not meet net load {}",
                    system.grid.net_load[t]
                ));
            }
        }
        let residual = self.water_balance_residual(system);
        if residual > WATER_BALANCE_TOL {
            out.push(format!("water balance residual {residual:e} exceeds {WATER_BALANCE_TOL:e}"));
        }
        out
    }

    pub fn check(&self, system: &HydroSystem) -> Result<()> {
        let v = self.violations(system);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("schedule violates: {}", v.join("; "))))
        }
    }

    /// One row per (module, period).
    pub fn write_csv<W: Write>(&self, writer: W, run_id: Option<&str>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "module",
            "period",
            "production_mw",
            "reserve_mw",
            "discharge_m3s",
            "bypass_m3s",
            "spill_m3s",
            "inflow_m3s",
            "outflow_m3s",
            "volume_start_mm3",
            "volume_end_mm3",
        ];
        if run_id.is_some() {
            header.push("run_id");
        }
        w.write_record(&header).map_err(csv_err)?;
        for ms in &self.modules {
            for t in 0..ms.production.len() {
                let mut rec = vec![
                    ms.id.clone(),
                    t.to_string(),
                    ms.production[t].to_string(),
                    ms.reserve[t].to_string(),
                    ms.total_discharge(t).to_string(),
                    ms.bypass[t].to_string(),
                    ms.spill[t].to_string(),
                    ms.inflow[t].to_string(),
                    ms.outflow[t].to_string(),
                    ms.volume[t].to_string(),
                    ms.volume[t + 1].to_string(),
                ];
                if let Some(id) = run_id {
                    rec.push(id.to_string());
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    /// `module,period,reserve_mw` for stacked-area plots.
    pub fn write_reserve_csv<W: Write>(&self, writer: W, run_id: Option<&str>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["module", "period", "reserve_mw"];
        if run_id.is_some() {
            header.push("run_id");
        }
        w.write_record(&header).map_err(csv_err)?;
        for ms in &self.modules {
            for (t, r) in ms.reserve.iter().enumerate() {
                let mut rec = vec![ms.id.clone(), t.to_string(), r.to_string()];
                if let Some(id) = run_id {
                    rec.push(id.to_string());
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
