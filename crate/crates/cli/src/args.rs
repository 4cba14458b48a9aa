use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "hydro-reserve", about = "Hydropower reserve procurement under net-load uncertainty")]
pub struct Cli {
    /// JSON file supplying default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one model and write its schedule.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve one model and evaluate it on sampled deviations.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Evaluate the mixed model over a range of weights.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long)]
        betas: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sample net-load deviation scenarios.
    GenerateScenarios {
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        dist: Option<DistArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a built-in test system as JSON.
    ExportSystem {
        #[arg(long, value_enum)]
        fixture: FixtureArg,
        /// Periods for the two-module fixture.
        #[arg(long, default_value_t = 4)]
        periods: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Det,
    Stoch,
    Robust,
    Unified,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistArg {
    Normal,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FixtureArg {
    C1,
    C2,
    Synthetic,
}

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ModelArgs {
    #[arg(long)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Balancing scenarios S; sampled when absent.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Robust scenarios J for the mixed model; generated by CCG when absent.
    #[arg(long)]
    pub robust_scenarios: Option<PathBuf>,
    /// Deviation bound Λ in MW.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Budget Γ: number of periods that may deviate.
    #[arg(long)]
    pub gamma: Option<usize>,
    /// Absolute CCG tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Seconds per worst-case MILP; unlimited by default.
    #[arg(long)]
    pub subproblem_time_limit: Option<f64>,
    /// MW, `grid` for the system's series, or a file with one value per period.
    #[arg(long)]
    pub reserve_req: Option<String>,
    /// Size of the sampled S.
    #[arg(long)]
    pub scenario_count: Option<usize>,
    #[arg(long)]
    pub scenario_dist: Option<DistArg>,
    #[arg(long)]
    pub scenario_seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SimArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub dist: Option<DistArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate samples on one thread.
    #[arg(long)]
    #[serde(skip)]
    pub sequential: bool,
}

#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(default)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Config file contents: any flag, keyed by its long name.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub model: ModelArgs,
    #[serde(flatten)]
    pub sim: SimArgs,
    pub out: Option<PathBuf>,
    pub betas: Option<String>,
    pub count: Option<usize>,
    #[serde(flatten)]
    pub unknown: BTreeMap<String, serde_json::Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        if let Some(key) = cfg.unknown.keys().next() {
            return Err(CliError::usage(format!("config {}: unknown key {key:?}", path.display())));
        }
        Ok(cfg)
    }
}

macro_rules! fill {
    ($dst:expr, $src:expr; $($field:ident),+) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field.take(); } )+
    };
}

impl ModelArgs {
    /// Flags win; the config only fills what was not given.
    pub fn fill_from(&mut self, cfg: &mut ModelArgs) {
        fill!(self, cfg; model, system, beta, scenarios, robust_scenarios, lambda, gamma, tol,
            max_iter, subproblem_time_limit, reserve_req, scenario_count, scenario_dist, scenario_seed);
    }
}

impl SimArgs {
    pub fn fill_from(&mut self, cfg: &mut SimArgs) {
        fill!(self, cfg; samples, dist, seed);
    }
}

impl OutputArgs {
    pub fn fill_from(&mut self, cfg: &mut Option<PathBuf>) {
        if self.out.is_none() {
            self.out = cfg.take();
        }
    }

    pub fn dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
