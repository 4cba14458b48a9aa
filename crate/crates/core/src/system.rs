//! Cascaded hydropower system description.
//!
//! Units: flows in m³/s, volumes in Mm³, power in MW, durations in hours and
//! money in arbitrary monetary units (mu).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Mm³ per (m³/s · h).
pub const FLOW_TO_VOLUME: f64 = 0.0036;

/// Volume moved by a constant `flow` (m³/s) over `hours`.
pub fn flow_to_volume(flow: f64, hours: f64) -> f64 {
    flow * hours * FLOW_TO_VOLUME
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DischargeSegment {
    pub max_discharge: f64,
    pub energy_coeff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroModule {
    pub id: String,
    pub water_value: f64,
    pub segments: Vec<DischargeSegment>,
    pub max_bypass: f64,
    pub max_spill: f64,
    pub max_volume: f64,
    pub initial_volume: f64,
    pub max_production: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discharge_to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bypass_to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spill_to: Option<String>,
    pub inflow: Vec<f64>,
}

impl HydroModule {
    /// Production reachable with every segment at full discharge.
    pub fn turbine_capacity(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.max_discharge * s.energy_coeff)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub period_hours: Vec<f64>,
    pub net_load: Vec<f64>,
    pub reserve_req: Vec<f64>,
}

impl TimeGrid {
    pub fn periods(&self) -> usize {
        self.net_load.len()
    }
}

fn default_reserve_epsilon() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub load_shed: f64,
    pub power_spill: f64,
    pub bypass_penalty: f64,
    pub spill_penalty: f64,
    #[serde(default = "default_reserve_epsilon")]
    pub reserve_epsilon: f64,
}

/// Downstream module indices of one module, per waterway.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Routing {
    pub discharge: Option<usize>,
    pub bypass: Option<usize>,
    pub spill: Option<usize>,
}

/// Upstream module indices feeding one module, per waterway.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Upstream {
    pub discharge: Vec<usize>,
    pub bypass: Vec<usize>,
    pub spill: Vec<usize>,
}

/// Modules plus the routing maps derived from their `*_to` fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    modules: Vec<HydroModule>,
    downstream: Vec<Routing>,
    upstream: Vec<Upstream>,
}

impl Topology {
    pub fn modules(&self) -> &[HydroModule] {
        &self.modules
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn downstream(&self, m: usize) -> &Routing {
        &self.downstream[m]
    }

    pub fn upstream(&self, m: usize) -> &Upstream {
        &self.upstream[m]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.modules.iter().position(|m| m.id == id)
    }

    pub fn total_capacity(&self) -> f64 {
        self.modules.iter().map(|m| m.max_production).sum()
    }

    // Assumes ids were validated.
    fn derive(modules: Vec<HydroModule>) -> Self {
        let index: HashMap<&str, usize> = modules
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.as_str(), i))
            .collect();
        let resolve = |to: &Option<String>| to.as_deref().and_then(|id| index.get(id).copied());
        let downstream: Vec<Routing> = modules
            .iter()
            .map(|m| Routing {
                discharge: resolve(&m.discharge_to),
                bypass: resolve(&m.bypass_to),
                spill: resolve(&m.spill_to),
            })
            .collect();
        let mut upstream = vec![Upstream::default(); modules.len()];
        for (m, r) in downstream.iter().enumerate() {
            if let Some(d) = r.discharge {
                upstream[d].discharge.push(m);
            }
            if let Some(d) = r.bypass {
                upstream[d].bypass.push(m);
            }
            if let Some(d) = r.spill {
                upstream[d].spill.push(m);
            }
        }
        Self {
            modules,
            downstream,
            upstream,
        }
    }
}

/// One broken rule found by [`validate_topology`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub module: Option<String>,
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(module: Option<&str>, field: &str, rule: impl Into<String>) -> Self {
        Self {
            module: module.map(str::to_owned),
            field: field.to_owned(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.module {
            Some(m) => write!(f, "module {m}: {} {}", self.field, self.rule),
            None => write!(f, "{} {}", self.field, self.rule),
        }
    }
}

/// Checks every data-model rule and returns the broken ones.
pub fn validate_topology(modules: &[HydroModule], grid: &TimeGrid) -> Vec<Violation> {
    let mut out = Vec::new();
    let t = grid.periods();

    if t == 0 {
        out.push(Violation::new(None, "time_grid", "must contain at least one period"));
    }
    if grid.period_hours.len() != t {
        out.push(Violation::new(None, "time_grid.period_hours", format!("has length {} but net_load has {t}", grid.period_hours.len())));
    }
    if grid.reserve_req.len() != t {
        out.push(Violation::new(None, "time_grid.reserve_req", format!("has length {} but net_load has {t}", grid.reserve_req.len())));
    }
    if grid.period_hours.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        out.push(Violation::new(None, "time_grid.period_hours", "must be positive"));
    }
    if grid.reserve_req.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        out.push(Violation::new(None, "time_grid.reserve_req", "must be non-negative"));
    }
    if grid.net_load.iter().any(|l| !l.is_finite()) {
        out.push(Violation::new(None, "time_grid.net_load", "must be finite"));
    }
    if modules.is_empty() {
        out.push(Violation::new(None, "modules", "must not be empty"));
    }

    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, m) in modules.iter().enumerate() {
        if index.insert(m.id.as_str(), i).is_some() {
            out.push(Violation::new(Some(&m.id), "id", "is duplicated"));
        }
    }

    for m in modules {
        let id = Some(m.id.as_str());
        let non_negative = [
            ("water_value", m.water_value),
            ("max_bypass", m.max_bypass),
            ("max_spill", m.max_spill),
            ("max_volume", m.max_volume),
            ("max_production", m.max_production),
        ];
        for (field, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                out.push(Violation::new(id, field, "must be finite and non-negative"));
            }
        }
        if m.segments.is_empty() {
            out.push(Violation::new(id, "segments", "must not be empty"));
        }
        for (n, s) in m.segments.iter().enumerate() {
            if !(s.max_discharge.is_finite() && s.max_discharge > 0.0) {
                out.push(Violation::new(id, &format!("segments[{n}].max_discharge"), "must be positive"));
            }
            if !(s.energy_coeff.is_finite() && s.energy_coeff > 0.0) {
                out.push(Violation::new(id, &format!("segments[{n}].energy_coeff"), "must be positive"));
            }
        }
        for (n, w) in m.segments.windows(2).enumerate() {
            if w[1].energy_coeff > w[0].energy_coeff {
                out.push(Violation::new(
                    id,
                    &format!("segments[{}].energy_coeff", n + 1),
                    "must not exceed the previous segment's coefficient (convex turbine curve)",
                ));
            }
        }
        if !(m.initial_volume >= 0.0 && m.initial_volume <= m.max_volume) {
            out.push(Violation::new(id, "initial_volume", format!("must lie in [0, max_volume = {}]", m.max_volume)));
        }
        if m.max_production > m.turbine_capacity() + 1e-9 {
            out.push(Violation::new(
                id,
                "max_production",
                format!("exceeds the turbine curve maximum {}", m.turbine_capacity()),
            ));
        }
        if m.inflow.len() != t {
            out.push(Violation::new(id, "inflow", format!("has length {} but the grid has {t} periods", m.inflow.len())));
        }
        if m.inflow.iter().any(|q| !q.is_finite()) {
            out.push(Violation::new(id, "inflow", "must be finite"));
        }
        for (field, to) in [
            ("discharge_to", &m.discharge_to),
            ("bypass_to", &m.bypass_to),
            ("spill_to", &m.spill_to),
        ] {
            if let Some(target) = to {
                if target == &m.id {
                    out.push(Violation::new(id, field, "routes water into the module itself"));
                } else if !index.contains_key(target.as_str()) {
                    out.push(Violation::new(id, field, format!("references unknown module {target}")));
                }
            }
        }
    }

    // Kahn's algorithm over the union of the three waterway graphs.
    let n = modules.len();
    let mut indegree = vec![0usize; n];
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, m) in modules.iter().enumerate() {
        for to in [&m.discharge_to, &m.bypass_to, &m.spill_to].into_iter().flatten() {
            if let Some(&j) = index.get(to.as_str()) {
                if j != i {
                    edges[i].push(j);
                    indegree[j] += 1;
                }
            }
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop() {
        seen += 1;
        for &j in &edges[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                queue.push(j);
            }
        }
    }
    if seen < n {
        let members: Vec<&str> = (0..n)
            .filter(|&i| indegree[i] > 0)
            .map(|i| modules[i].id.as_str())
            .collect();
        out.push(Violation::new(None, "routing", format!("contains a cycle through {}", members.join(", "))));
    }
    out
}

fn validate_costs(costs: &CostParams) -> Vec<Violation> {
    [
        ("costs.load_shed", costs.load_shed),
        ("costs.power_spill", costs.power_spill),
        ("costs.bypass_penalty", costs.bypass_penalty),
        ("costs.spill_penalty", costs.spill_penalty),
        ("costs.reserve_epsilon", costs.reserve_epsilon),
    ]
    .into_iter()
    .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
    .map(|(f, _)| Violation::new(None, f, "must be finite and non-negative"))
    .collect()
}

/// A validated system: topology, time grid and cost parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct HydroSystem {
    pub topology: Topology,
    pub grid: TimeGrid,
    pub costs: CostParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    modules: Vec<HydroModule>,
    time_grid: TimeGrid,
    costs: CostParams,
}

impl HydroSystem {
    pub fn new(modules: Vec<HydroModule>, grid: TimeGrid, costs: CostParams) -> Result<Self> {
        let mut violations = validate_topology(&modules, &grid);
        violations.extend(validate_costs(&costs));
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        Ok(Self {
            topology: Topology::derive(modules),
            grid,
            costs,
        })
    }

    pub fn modules(&self) -> &[HydroModule] {
        self.topology.modules()
    }

    pub fn periods(&self) -> usize {
        self.grid.periods()
    }

    /// Copy of the system with a different grid (same validation rules).
    pub fn with_grid(&self, grid: TimeGrid) -> Result<Self> {
        Self::new(self.modules().to_vec(), grid, self.costs.clone())
    }

    pub fn with_reserve_req(&self, reserve_req: Vec<f64>) -> Result<Self> {
        let mut grid = self.grid.clone();
        grid.reserve_req = reserve_req;
        self.with_grid(grid)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SystemFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(file.modules, file.time_grid, file.costs)
    }

    pub fn to_json(&self) -> String {
        let file = SystemFile {
            modules: self.modules().to_vec(),
            time_grid: self.grid.clone(),
            costs: self.costs.clone(),
        };
        serde_json::to_string_pretty(&file).expect("system serialises")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }
}

/// SHA-256 of `bytes` as lowercase hex.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn load_system(path: impl AsRef<Path>) -> Result<HydroSystem> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    HydroSystem::from_json(&text)
}

pub fn save_system(system: &HydroSystem, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, system.to_json() + "\n").map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn one_module(id: &str) -> HydroModule {
        let mut m = fixtures::c1().modules()[0].clone();
        m.id = id.into();
        m
    }

    #[test]
    fn flow_to_volume_values() {
        assert_eq!(flow_to_volume(0.0, 1.0), 0.0);
        assert!((flow_to_volume(100.0, 1.0) - 0.36).abs() < 1e-15);
        assert!((flow_to_volume(42.0, 24.0) - 3.6288).abs() < 1e-12);
    }

    #[test]
    fn single_module_is_valid() {
        let sys = fixtures::c1();
        assert!(validate_topology(sys.modules(), &sys.grid).is_empty());
    }

    #[test]
    fn two_cycle_is_reported() {
        let sys = fixtures::c1();
        let mut a = one_module("a");
        let mut b = one_module("b");
        a.discharge_to = Some("b".into());
        b.discharge_to = Some("a".into());
        let v = validate_topology(&[a, b], &sys.grid);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "routing");
        assert!(v[0].rule.contains("cycle"));
    }

    #[test]
    fn overfull_reservoir_is_reported() {
        let sys = fixtures::c1();
        let mut m = one_module("a");
        m.initial_volume = 1.2 * m.max_volume;
        let v = validate_topology(&[m], &sys.grid);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "initial_volume");
        assert_eq!(v[0].module.as_deref(), Some("a"));
    }

    #[test]
    fn other_rules() {
        let sys = fixtures::c1();
        let mut m = one_module("a");
        m.segments.push(DischargeSegment {
            max_discharge: 1.0,
            energy_coeff: 3.0,
        });
        m.max_production = 100.0;
        m.inflow = vec![];
        m.bypass_to = Some("nowhere".into());
        let fields: Vec<String> = validate_topology(&[m], &sys.grid)
            .into_iter()
            .map(|v| v.field)
            .collect();
        assert!(fields.contains(&"segments[1].energy_coeff".to_string()));
        assert!(fields.contains(&"max_production".to_string()));
        assert!(fields.contains(&"inflow".to_string()));
        assert!(fields.contains(&"bypass_to".to_string()));
    }

    #[test]
    fn upstream_maps_invert_routing() {
        let sys = fixtures::synthetic_twelve();
        let topo = &sys.topology;
        for m in 0..topo.len() {
            let r = topo.downstream(m);
            let pick: [(Option<usize>, fn(&Upstream) -> &Vec<usize>); 3] = [
                (r.discharge, |u| &u.discharge),
                (r.bypass, |u| &u.bypass),
                (r.spill, |u| &u.spill),
            ];
            for (to, list) in pick {
                if let Some(d) = to {
                    assert_eq!(list(topo.upstream(d)).iter().filter(|&&x| x == m).count(), 1);
                }
            }
        }
        let total: usize = (0..topo.len())
            .map(|m| {
                let u = topo.upstream(m);
                u.discharge.len() + u.bypass.len() + u.spill.len()
            })
            .sum();
        let edges: usize = (0..topo.len())
            .map(|m| {
                let r = topo.downstream(m);
                [r.discharge, r.bypass, r.spill].iter().flatten().count()
            })
            .sum();
        assert_eq!(total, edges);
    }

    #[test]
    fn json_round_trip() {
        let sys = fixtures::synthetic_twelve();
        let back = HydroSystem::from_json(&sys.to_json()).unwrap();
        assert_eq!(back, sys);
        assert_eq!(back.content_hash(), sys.content_hash());
    }

    #[test]
    fn missing_inflow_is_a_parse_error() {
        let text = fixtures::c1().to_json();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["modules"][0].as_object_mut().unwrap().remove("inflow");
        let err = HydroSystem::from_json(&value.to_string()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn invalid_file_lists_violations() {
        let text = fixtures::c1().to_json();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["modules"][0]["initial_volume"] = serde_json::json!(5.0);
        let err = HydroSystem::from_json(&value.to_string()).unwrap_err();
        match err {
            Error::Validation(v) => assert_eq!(v[0].field, "initial_volume"),
            other => panic!("unexpected {other}"),
        }
    }
}
