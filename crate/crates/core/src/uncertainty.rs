//! Budgeted net-load uncertainty sets and scenario sampling.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::csv_err;

/// Largest set [`UncertaintySet::enumerate`] will materialise.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Deviations of exactly `±lambda_max` in at most `gamma` periods.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySet {
    pub lambda_max: f64,
    pub gamma: usize,
}

impl UncertaintySet {
    pub fn new(lambda_max: f64, gamma: usize) -> Result<Self> {
        if !(lambda_max.is_finite() && lambda_max >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda_max}")));
        }
        Ok(Self { lambda_max, gamma })
    }

    /// Rejects budgets larger than the horizon.
    pub fn check_periods(&self, periods: usize) -> Result<()> {
        if self.gamma > periods {
            return Err(Error::InvalidInput(format!(
                "gamma {} exceeds the {periods} periods of the horizon",
                self.gamma
            )));
        }
        Ok(())
    }

    fn tol(&self) -> f64 {
        1e-9 * self.lambda_max.max(1.0)
    }

    pub fn contains(&self, deltas: &[f64]) -> bool {
        let tol = self.tol();
        let mut nonzero = 0;
        for &d in deltas {
            if d.abs() <= tol {
                continue;
            }
            if (d.abs() - self.lambda_max).abs() > tol {
                return false;
            }
            nonzero += 1;
        }
        nonzero <= self.gamma
    }

    /// `sum_{k<=gamma} C(T,k) 2^k`, saturating.
    pub fn count(&self, periods: usize) -> u128 {
        let mut total: u128 = 0;
        let mut binom: u128 = 1;
        let mut pow: u128 = 1;
        for k in 0..=self.gamma.min(periods) {
            if k > 0 {
                binom = binom.saturating_mul((periods - k + 1) as u128) / k as u128;
                pow = pow.saturating_mul(2);
            }
            total = total.saturating_add(binom.saturating_mul(pow));
        }
        total
    }

    /// Every vertex of the set, zero vector first.
    pub fn enumerate(&self, periods: usize) -> Result<Vec<Vec<f64>>> {
        let count = self.count(periods);
        if count > ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge {
                count,
                limit: ENUMERATION_LIMIT,
            });
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut current = vec![0.0; periods];
        self.extend(&mut out, &mut current, 0, 0);
        if self.lambda_max == 0.0 {
            out.truncate(1);
        }
        Ok(out)
    }

    fn extend(&self, out: &mut Vec<Vec<f64>>, current: &mut Vec<f64>, t: usize, used: usize) {
        if t == current.len() {
            out.push(current.clone());
            return;
        }
        self.extend(out, current, t + 1, used);
        if used < self.gamma {
            for sign in [1.0, -1.0] {
                current[t] = sign * self.lambda_max;
                self.extend(out, current, t + 1, used + 1);
            }
            current[t] = 0.0;
        }
    }

    /// `Δ_t = Λ (u⁺_t − u⁻_t)`.
    /// Sign pattern of a vertex: which periods sit at `+Λ` and at `−Λ`.
    pub fn pattern(&self, deltas: &[f64]) -> (Vec<bool>, Vec<bool>) {
        let half = self.lambda_max / 2.0;
        let on = |d: f64, sign: f64| self.lambda_max > 0.0 && sign * d > half;
        (
            deltas.iter().map(|&d| on(d, 1.0)).collect(),
            deltas.iter().map(|&d| on(d, -1.0)).collect(),
        )
    }

    pub fn same_pattern(&self, a: &[f64], b: &[f64]) -> bool {
        self.pattern(a) == self.pattern(b)
    }

    pub fn from_pattern(&self, up: &[bool], down: &[bool]) -> Vec<f64> {
        up.iter()
            .zip(down)
            .map(|(&u, &d)| self.lambda_max * (u as i32 - d as i32) as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Sampled,
    Robust,
    Manual,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Sampled => "sampled",
            Origin::Robust => "robust",
            Origin::Manual => "manual",
        })
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(Origin::Sampled),
            "robust" => Ok(Origin::Robust),
            "manual" => Ok(Origin::Manual),
            other => Err(Error::Parse(format!("unknown scenario origin {other:?}"))),
        }
    }
}

/// A net-load deviation vector with its probability weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetLoadScenario {
    pub deltas: Vec<f64>,
    pub probability: f64,
    pub origin: Origin,
}

/// Wraps deviation vectors as equiprobable scenarios.
pub fn equiprobable(deltas: Vec<Vec<f64>>, origin: Origin) -> Vec<NetLoadScenario> {
    let p = 1.0 / deltas.len().max(1) as f64;
    deltas
        .into_iter()
        .map(|d| NetLoadScenario {
            deltas: d,
            probability: p,
            origin,
        })
        .collect()
}

/// Checks lengths, non-negative weights and that weights sum to one.
pub fn check_scenarios(scenarios: &[NetLoadScenario], periods: usize) -> Result<()> {
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("scenario set is empty".into()));
    }
    for (i, s) in scenarios.iter().enumerate() {
        if s.deltas.len() != periods {
            return Err(Error::InvalidInput(format!(
                "scenario {i} has {} periods, expected {periods}",
                s.deltas.len()
            )));
        }
        if !(s.probability >= 0.0) || s.deltas.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidInput(format!("scenario {i} has invalid values")));
        }
    }
    let total: f64 = scenarios.iter().map(|s| s.probability).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("scenario probabilities sum to {total}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// `N(0, (Λ/2.5)²)` clipped to `[−Λ, Λ]`.
    TruncatedNormal,
    Uniform,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::TruncatedNormal => "normal",
            Distribution::Uniform => "uniform",
        })
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" | "truncated_normal" => Ok(Distribution::TruncatedNormal),
            "uniform" => Ok(Distribution::Uniform),
            other => Err(Error::InvalidInput(format!("unknown distribution {other:?}"))),
        }
    }
}

/// Generator used for scenario `index` under `seed`: ChaCha20 seeded with
/// `seed`, on stream `index`.
pub fn scenario_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Deviation vector of a single sample; independent of every other index.
pub fn sample_one(dist: Distribution, lambda: f64, periods: usize, seed: u64, index: usize) -> Vec<f64> {
    if lambda == 0.0 {
        return vec![0.0; periods];
    }
    let mut rng = scenario_rng(seed, index);
    match dist {
        Distribution::TruncatedNormal => {
            let normal = Normal::new(0.0, lambda / 2.5).expect("positive std");
            (0..periods)
                .map(|_| normal.sample(&mut rng).clamp(-lambda, lambda))
                .collect()
        }
        Distribution::Uniform => (0..periods).map(|_| rng.gen_range(-lambda..=lambda)).collect(),
    }
}

pub fn sample(dist: Distribution, lambda: f64, periods: usize, count: usize, seed: u64) -> Result<Vec<NetLoadScenario>> {
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let deltas = (0..count)
        .map(|i| sample_one(dist, lambda, periods, seed, i))
        .collect();
    Ok(equiprobable(deltas, Origin::Sampled))
}

/// `scenario,probability,origin,t1..tT[,run_id]`.
pub fn write_scenarios<W: Write>(writer: W, scenarios: &[NetLoadScenario], run_id: Option<&str>) -> Result<()> {
    let periods = scenarios.first().map_or(0, |s| s.deltas.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["scenario".to_string(), "probability".into(), "origin".into()];
    header.extend((1..=periods).map(|t| format!("t{t}")));
    if run_id.is_some() {
        header.push("run_id".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, s) in scenarios.iter().enumerate() {
        if s.deltas.len() != periods {
            return Err(Error::InvalidInput("scenarios have different lengths".into()));
        }
        let mut rec = vec![i.to_string(), s.probability.to_string(), s.origin.to_string()];
        rec.extend(s.deltas.iter().map(|d| d.to_string()));
        if let Some(id) = run_id {
            rec.push(id.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn read_scenarios<R: Read>(reader: R) -> Result<Vec<NetLoadScenario>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_err)?.clone();
    let fixed = ["scenario", "probability", "origin"];
    if header.len() < 3 || header.iter().take(3).ne(fixed.iter().copied()) {
        return Err(Error::Parse("scenario file must start with scenario,probability,origin".into()));
    }
    let tagged = header.iter().last() == Some("run_id");
    let periods = header.len() - 3 - usize::from(tagged);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: {s:?}: {e}", line + 1)))
        };
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("row {} has {} fields", line + 1, rec.len())));
        }
        let deltas = rec.iter().skip(3).take(periods).map(num).collect::<Result<Vec<f64>>>()?;
        out.push(NetLoadScenario {
            deltas,
            probability: num(&rec[1])?,
            origin: rec[2].trim().parse()?,
        });
    }
    Ok(out)
}

pub fn save_scenarios(path: impl AsRef<Path>, scenarios: &[NetLoadScenario]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    write_scenarios(file, scenarios, None)
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<NetLoadScenario>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_scenarios(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn membership() {
        let set = UncertaintySet::new(42.0, 6).unwrap();
        assert!(set.contains(&[0.0; 24]));
        let mut d = vec![0.0; 24];
        for x in d.iter_mut().take(6) {
            *x = 42.0;
        }
        assert!(set.contains(&d));
        d[10] = -42.0;
        assert!(!set.contains(&d));
        let mut half = vec![0.0; 24];
        half[3] = 21.0;
        assert!(!set.contains(&half));
    }

    #[test]
    fn enumeration_counts() {
        let count = |t, g| UncertaintySet::new(1.0, g).unwrap().enumerate(t).unwrap().len();
        assert_eq!(count(3, 0), 1);
        assert_eq!(count(3, 1), 7);
        assert_eq!(count(4, 2), 33);
        assert_eq!(UncertaintySet::new(1.0, 2).unwrap().count(4), 33);
        assert_eq!(UncertaintySet::new(1.0, 24).unwrap().count(24), 3u128.pow(24));
    }

    #[test]
    fn enumeration_guard() {
        let set = UncertaintySet::new(42.0, 6).unwrap();
        match set.enumerate(24) {
            Err(Error::EnumerationTooLarge { count, .. }) => assert_eq!(count, set.count(24)),
            other => panic!("expected guard, got {other:?}"),
        }
    }

    #[test]
    fn enumeration_is_distinct() {
        let set = UncertaintySet::new(3.0, 3).unwrap();
        let all = set.enumerate(5).unwrap();
        let mut keys: Vec<String> = all.iter().map(|d| format!("{d:?}")).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), all.len());
        assert_eq!(all[0], vec![0.0; 5]);
    }

    #[test]
    fn sampling_support_and_zero_lambda() {
        let s = sample(Distribution::TruncatedNormal, 42.0, 24, 1, 3).unwrap();
        assert!(s[0].deltas.iter().all(|d| d.abs() <= 42.0));
        let z = sample(Distribution::Uniform, 0.0, 24, 5, 3).unwrap();
        assert!(z.iter().all(|s| s.deltas.iter().all(|&d| d == 0.0)));
        assert!((z.iter().map(|s| s.probability).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_index_addressable() {
        let all = sample(Distribution::Uniform, 10.0, 6, 20, 99).unwrap();
        for (i, s) in all.iter().enumerate() {
            assert_eq!(s.deltas, sample_one(Distribution::Uniform, 10.0, 6, 99, i));
        }
        let other = sample(Distribution::Uniform, 10.0, 6, 20, 100).unwrap();
        assert_ne!(all, other);
    }

    /// Std of N(0, 1) clipped to ±2.5, estimated from draws that are
    /// independent of the generator under test.
    fn clipped_std_correction() -> f64 {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let x: f64 = normal.sample(&mut rng);
            let x = x.clamp(-2.5, 2.5);
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        (sq / n as f64 - mean * mean).sqrt()
    }

    #[test]
    fn truncated_normal_spread() {
        let c = clipped_std_correction();
        assert!(c > 0.97 && c < 1.0, "{c}");
        let lambda = 42.0;
        let all = sample(Distribution::TruncatedNormal, lambda, 24, 50, 7).unwrap();
        let values: Vec<f64> = all.iter().flat_map(|s| s.deltas.iter().copied()).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = lambda / 2.5 * c;
        assert!(var.sqrt() >= 0.8 * target && var.sqrt() <= 1.2 * target, "{} vs {target}", var.sqrt());
    }

    #[test]
    fn csv_round_trip() {
        let mut s = sample(Distribution::TruncatedNormal, 42.0, 24, 50, 11).unwrap();
        s[3].origin = Origin::Robust;
        let mut buf = Vec::new();
        write_scenarios(&mut buf, &s, None).unwrap();
        let back = read_scenarios(buf.as_slice()).unwrap();
        assert_eq!(back, s);

        let mut buf = Vec::new();
        write_scenarios(&mut buf, &[], None).unwrap();
        assert!(read_scenarios(buf.as_slice()).unwrap().is_empty());

        let mut tagged = Vec::new();
        write_scenarios(&mut tagged, &s, Some("run")).unwrap();
        assert_eq!(read_scenarios(tagged.as_slice()).unwrap(), back);
        assert!(read_scenarios("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_scenarios("scenario,probability,origin,t1\n0,1,sampled,x\n".as_bytes()).is_err());
    }

    #[test]
    fn scenario_set_checks() {
        let good = equiprobable(vec![vec![0.0; 3], vec![1.0; 3]], Origin::Manual);
        check_scenarios(&good, 3).unwrap();
        assert!(check_scenarios(&good, 4).is_err());
        let mut bad = good.clone();
        bad[0].probability = 0.7;
        assert!(check_scenarios(&bad, 3).is_err());
        assert!(check_scenarios(&[], 3).is_err());
    }

    proptest! {
        #[test]
        fn enumerated_vectors_are_members(t in 1usize..6, gamma in 0usize..4, lambda in 0.5f64..50.0) {
            let set = UncertaintySet::new(lambda, gamma).unwrap();
            let all = set.enumerate(t).unwrap();
            prop_assert_eq!(all.len() as u128, set.count(t));
            for d in &all {
                prop_assert!(set.contains(d));
            }
        }

        #[test]
        fn members_are_enumerated(pattern in proptest::collection::vec(-1i8..=1, 1..6), gamma in 0usize..6) {
            let set = UncertaintySet::new(7.5, gamma).unwrap();
            let d: Vec<f64> = pattern.iter().map(|&s| 7.5 * s as f64).collect();
            let nonzero = pattern.iter().filter(|&&s| s != 0).count();
            prop_assert_eq!(set.contains(&d), nonzero <= gamma);
            if nonzero <= gamma {
                prop_assert!(set.enumerate(pattern.len()).unwrap().contains(&d));
            }
        }

        #[test]
        fn samples_stay_in_support(seed in any::<u64>(), lambda in 0.0f64..100.0, uniform in any::<bool>()) {
            let dist = if uniform { Distribution::Uniform } else { Distribution::TruncatedNormal };
            for s in sample(dist, lambda, 8, 3, seed).unwrap() {
                prop_assert!(s.deltas.iter().all(|d| d.abs() <= lambda));
            }
        }
    }
}
