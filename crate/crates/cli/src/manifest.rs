use std::collections::BTreeMap;
use std::path::Path;

use hydro_reserve::lp::{backend_version, SolveOptions};
use hydro_reserve::system::hex_digest;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything that determines a run's outputs. The run id hashes this.
#[derive(Clone, Debug, Serialize)]
pub struct RunInputs {
    pub command: String,
    pub artifact_version: String,
    pub solver: String,
    pub system_hash: Option<String>,
    pub tolerances: Tolerances,
    /// Command-specific settings: model, scenario digests, seeds.
    pub settings: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Tolerances {
    pub feasibility: f64,
    pub integrality: f64,
    pub mip_abs_gap: f64,
    pub mip_rel_gap: f64,
    pub residual: f64,
}

impl From<&SolveOptions> for Tolerances {
    fn from(o: &SolveOptions) -> Self {
        Self {
            feasibility: o.feasibility_tol,
            integrality: o.integrality_tol,
            mip_abs_gap: o.mip_abs_gap,
            mip_rel_gap: o.mip_rel_gap,
            residual: o.residual_tol,
        }
    }
}

impl RunInputs {
    pub fn new(command: &str, options: &SolveOptions) -> Self {
        Self {
            command: command.into(),
            artifact_version: ARTIFACT_VERSION.into(),
            solver: backend_version(),
            system_hash: None,
            tolerances: options.into(),
            settings: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("settings serialize");
        self.settings.insert(key.into(), value);
    }

    pub fn run_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("inputs serialize");
        hex_digest(&bytes)[..16].to_string()
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub run_id: String,
    #[serde(flatten)]
    pub inputs: RunInputs,
    pub outputs: Vec<String>,
    /// Summary values for quick inspection.
    pub results: BTreeMap<String, Value>,
    pub wall_times: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn new(inputs: RunInputs) -> Self {
        Self {
            run_id: inputs.run_id(),
            inputs,
            outputs: Vec::new(),
            results: BTreeMap::new(),
            wall_times: BTreeMap::new(),
        }
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("results serialize");
        self.results.insert(key.into(), value);
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n").map_err(|e| CliError::io(dir, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_depends_only_on_inputs() {
        let o = SolveOptions::default();
        let mut a = RunInputs::new("solve", &o);
        a.set("model", "det");
        let b = a.clone();
        assert_eq!(a.run_id(), b.run_id());
        assert_eq!(a.run_id().len(), 16);
        let mut c = a.clone();
        c.set("seed", 3);
        assert_ne!(a.run_id(), c.run_id());
        let mut m = Manifest::new(a.clone());
        m.wall_times.insert("solve".into(), 1.5);
        assert_eq!(m.run_id, a.run_id());
    }
}
