//! Monte Carlo cost evaluation of day-ahead schedules.
//!
//! `K` is the increase of the first-stage cost over the schedule obtained
//! without any reserve requirement. `B_i` is the balancing cost of sample `i`
//! minus its perfect-foresight cost, and `U_i = K + B_i`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balancing::{solve_balancing, solve_perfect_foresight};
use crate::composite::solve_mixed;
use crate::dayahead::{day_ahead_cost, solve_day_ahead, DayAheadConfig, ReserveRequirement};
use crate::error::{Error, Result};
use crate::lp::SolveOptions;
use crate::schedule::{csv_err, Schedule};
use crate::system::HydroSystem;
use crate::uncertainty::{sample_one, Distribution, NetLoadScenario};

/// Z^da_0 of a system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub system_hash: String,
    pub cost: f64,
}

pub fn baseline(system: &HydroSystem, options: &SolveOptions) -> Result<Baseline> {
    let schedule = solve_day_ahead(system, &DayAheadConfig::without_reserve(), options)?;
    Ok(Baseline {
        system_hash: system.content_hash(),
        cost: day_ahead_cost(system, &schedule)?,
    })
}

/// `K = Z^da(x) − Z^da_0`.
pub fn procurement_cost(system: &HydroSystem, schedule: &Schedule, baseline: &Baseline) -> Result<f64> {
    if schedule.system_hash != baseline.system_hash {
        return Err(Error::SystemMismatch {
            schedule: schedule.system_hash.clone(),
            baseline: baseline.system_hash.clone(),
        });
    }
    Ok(day_ahead_cost(system, schedule)? - baseline.cost)
}

/// `B = Z^bal − Z^PF` for one deviation.
pub fn balancing_cost(system: &HydroSystem, schedule: &Schedule, deltas: &[f64], options: &SolveOptions) -> Result<f64> {
    let bal = solve_balancing(system, schedule, deltas, options)?.cost;
    let pf = solve_perfect_foresight(system, deltas, options)?.cost;
    Ok(bal - pf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub distribution: Distribution,
    pub lambda: f64,
    pub samples: usize,
    pub seed: u64,
    /// Evaluate samples on the rayon pool; results do not depend on it.
    pub parallel: bool,
}

impl SimulationConfig {
    pub fn new(distribution: Distribution, lambda: f64, samples: usize, seed: u64) -> Self {
        Self {
            distribution,
            lambda,
            samples,
            seed,
            parallel: true,
        }
    }
}

/// Sampled deviations and their perfect-foresight costs, which do not depend
/// on the schedule and can be shared by every evaluation.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub config: SimulationConfig,
    pub deltas: Vec<Vec<f64>>,
    pub perfect_foresight: Vec<f64>,
}

fn indexed<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let wrap = |i: usize| {
        f(i).map_err(|e| Error::Scenario {
            index: i,
            source: Box::new(e),
        })
    };
    if parallel {
        (0..n).into_par_iter().map(wrap).collect()
    } else {
        (0..n).map(wrap).collect()
    }
}

impl SampleSet {
    pub fn draw(system: &HydroSystem, config: &SimulationConfig, options: &SolveOptions) -> Result<Self> {
        if config.samples == 0 {
            return Err(Error::InvalidInput("sample count must be at least 1".into()));
        }
        if !(config.lambda.is_finite() && config.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {}", config.lambda)));
        }
        let periods = system.periods();
        let deltas: Vec<Vec<f64>> = (0..config.samples)
            .map(|i| sample_one(config.distribution, config.lambda, periods, config.seed, i))
            .collect();
        let perfect_foresight = indexed(deltas.len(), config.parallel, |i| {
            Ok(solve_perfect_foresight(system, &deltas[i], options)?.cost)
        })?;
        Ok(Self {
            config: config.clone(),
            deltas,
            perfect_foresight,
        })
    }

    /// Balancing costs `B_i` of `schedule` for every sample.
    pub fn balancing_costs(&self, system: &HydroSystem, schedule: &Schedule, options: &SolveOptions) -> Result<Vec<f64>> {
        indexed(self.deltas.len(), self.config.parallel, |i| {
            let bal = solve_balancing(system, schedule, &self.deltas[i], options)?.cost;
            Ok(bal - self.perfect_foresight[i])
        })
    }

    pub fn evaluate(
        &self,
        system: &HydroSystem,
        schedule: &Schedule,
        baseline: &Baseline,
        label: &str,
        options: &SolveOptions,
    ) -> Result<CostReport> {
        let k = procurement_cost(system, schedule, baseline)?;
        let b = self.balancing_costs(system, schedule, options)?;
        let mut report = CostReport::from_samples(label, k, b);
        report.distribution = Some(self.config.distribution);
        report.seed = Some(self.config.seed);
        Ok(report)
    }
}

/// Samples, evaluates and aggregates in one call.
pub fn run_monte_carlo(
    system: &HydroSystem,
    schedule: &Schedule,
    baseline: &Baseline,
    config: &SimulationConfig,
    options: &SolveOptions,
) -> Result<CostReport> {
    SampleSet::draw(system, config, options)?.evaluate(system, schedule, baseline, "", options)
}

/// K, per-sample costs and their aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub label: String,
    pub k: f64,
    pub balancing: Vec<f64>,
    pub total: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std_dev: f64,
    pub distribution: Option<Distribution>,
    pub seed: Option<u64>,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Middle order statistic, or the mean of the two middle ones.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

impl CostReport {
    pub fn from_samples(label: &str, k: f64, balancing: Vec<f64>) -> Self {
        let total: Vec<f64> = balancing.iter().map(|b| k + b).collect();
        Self {
            label: label.to_string(),
            k,
            max: total.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: mean(&total),
            median: median(&total),
            std_dev: sample_std(&total),
            balancing,
            total,
            distribution: None,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }
}

/// One row per report: `label,k,u_max,u_mean,u_median,u_std,samples,distribution,seed`.
pub fn write_report_csv<W: Write>(writer: W, reports: &[CostReport], run_id: Option<&str>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label", "k", "u_max", "u_mean", "u_median", "u_std", "samples", "distribution", "seed"];
    if run_id.is_some() {
        header.push("run_id");
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        let mut rec = vec![
            r.label.clone(),
            r.k.to_string(),
            r.max.to_string(),
            r.mean.to_string(),
            r.median.to_string(),
            r.std_dev.to_string(),
            r.len().to_string(),
            r.distribution.map(|d| d.to_string()).unwrap_or_default(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
        ];
        if let Some(id) = run_id {
            rec.push(id.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

/// Per-sample values: `label,sample,b,u`.
pub fn write_samples_csv<W: Write>(writer: W, reports: &[CostReport], run_id: Option<&str>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label", "sample", "b", "u"];
    if run_id.is_some() {
        header.push("run_id");
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        for (i, (b, u)) in r.balancing.iter().zip(&r.total).enumerate() {
            let mut rec = vec![r.label.clone(), i.to_string(), b.to_string(), u.to_string()];
            if let Some(id) = run_id {
                rec.push(id.to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

/// Result of one β in a sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub beta: f64,
    pub schedule: Option<Schedule>,
    pub report: std::result::Result<CostReport, String>,
}

/// Solves the mixed model for every β and evaluates it on `samples`. A
/// failing row is reported and the others still complete.
pub fn sweep_beta(
    system: &HydroSystem,
    scenarios: &[NetLoadScenario],
    robust: &[NetLoadScenario],
    betas: &[f64],
    reserve: &ReserveRequirement,
    samples: &SampleSet,
    options: &SolveOptions,
) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        return Err(Error::InvalidInput("no beta values given".into()));
    }
    let base = baseline(system, options)?;
    let row = |beta: f64| {
        let label = format!("beta={beta}");
        let solved = solve_mixed(system, scenarios, robust, beta, reserve, options);
        match solved {
            Ok(sol) => SweepRow {
                beta,
                report: samples
                    .evaluate(system, &sol.schedule, &base, &label, options)
                    .map_err(|e| e.to_string()),
                schedule: Some(sol.schedule),
            },
            Err(e) => SweepRow {
                beta,
                schedule: None,
                report: Err(e.to_string()),
            },
        }
    };
    let rows = if samples.config.parallel {
        betas.par_iter().map(|&b| row(b)).collect()
    } else {
        betas.iter().map(|&b| row(b)).collect()
    };
    Ok(rows)
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_betas(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("cannot parse beta list {text:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.len() {
        1 => text.split(',').map(num).collect::<Result<Vec<f64>>>()?,
        3 => {
            let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || b < a {
                return Err(bad());
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            // Round to 12 decimals so 0.1 steps print as 0.3, not 0.30000000000000004.
            (0..=n)
                .map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        _ => return Err(bad()),
    };
    if values.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(Error::InvalidInput("beta values must lie in [0, 1]".into()));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(sample_std(&[7.0]), 0.0);
        let r = CostReport::from_samples("x", 2.0, vec![0.0, 1.0, 5.0]);
        assert_eq!(r.total, vec![2.0, 3.0, 7.0]);
        assert_eq!(r.max, 7.0);
        assert_eq!(r.median, 3.0);
        assert!((r.mean - 4.0).abs() < 1e-12);
    }

    #[test]
    fn optimum_without_reserve_has_zero_k() {
        let sys = fixtures::c1();
        let base = baseline(&sys, &opts()).unwrap();
        assert!((base.cost + 482.0).abs() < 1e-9);
        let s = solve_day_ahead(&sys, &DayAheadConfig::without_reserve(), &opts()).unwrap();
        assert!(procurement_cost(&sys, &s, &base).unwrap().abs() < 1e-9);
        let other = fixtures::c2(1);
        let s2 = solve_day_ahead(&other, &DayAheadConfig::without_reserve(), &opts()).unwrap();
        assert!(matches!(
            procurement_cost(&sys, &s2, &base),
            Err(Error::SystemMismatch { .. })
        ));
    }

    #[test]
    fn nominal_deviation_costs_nothing() {
        let sys = fixtures::c1();
        let s = solve_day_ahead(&sys, &DayAheadConfig::without_reserve(), &opts()).unwrap();
        assert!(balancing_cost(&sys, &s, &[0.0], &opts()).unwrap().abs() < 1e-9);
        let full = solve_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(10.0)), &opts())
            .unwrap();
        assert!(balancing_cost(&sys, &full, &[0.0], &opts()).unwrap().abs() < 1e-9);
    }

    #[test]
    fn zero_lambda_report_is_k() {
        let sys = fixtures::c2(3);
        let base = baseline(&sys, &opts()).unwrap();
        let s = solve_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(2.0)), &opts())
            .unwrap();
        let cfg = SimulationConfig::new(Distribution::TruncatedNormal, 0.0, 1, 4);
        let r = run_monte_carlo(&sys, &s, &base, &cfg, &opts()).unwrap();
        assert!((r.max - r.k).abs() < 1e-9 && (r.mean - r.k).abs() < 1e-9);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let sys = fixtures::c2(4);
        let base = baseline(&sys, &opts()).unwrap();
        let s = solve_day_ahead(&sys, &DayAheadConfig::with_reserve(ReserveRequirement::Uniform(3.0)), &opts())
            .unwrap();
        let mut cfg = SimulationConfig::new(Distribution::TruncatedNormal, 8.0, 40, 17);
        let a = run_monte_carlo(&sys, &s, &base, &cfg, &opts()).unwrap();
        cfg.parallel = false;
        let b = run_monte_carlo(&sys, &s, &base, &cfg, &opts()).unwrap();
        assert_eq!(a, b);
        assert!(a.balancing.iter().all(|&x| x >= -1e-6));
        for (u, b_i) in a.total.iter().zip(&a.balancing) {
            assert_eq!(*u, a.k + b_i);
        }
    }

    #[test]
    fn beta_lists() {
        let b = parse_betas("0:1:0.1").unwrap();
        assert_eq!(b.len(), 11);
        assert_eq!(b[3], 0.3);
        assert_eq!(b[10], 1.0);
        assert_eq!(parse_betas("0.5, 0.9").unwrap(), vec![0.5, 0.9]);
        assert!(parse_betas("0:2:0.5").is_err());
        assert!(parse_betas("a").is_err());
    }

    #[test]
    fn report_csv_layout() {
        let r = CostReport::from_samples("det", 1.5, vec![0.0, 2.0]);
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[r.clone()], None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("label,k,u_max,u_mean,u_median,u_std,samples"));
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &[r], Some("id")).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
