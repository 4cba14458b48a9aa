use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hydro_reserve::composite::solve_mixed;
use hydro_reserve::lp::SolveOptions;
use hydro_reserve::simulator::{
    baseline, parse_betas, sweep_beta, write_report_csv, write_samples_csv, SampleSet,
};
use hydro_reserve::system::hex_digest;
use hydro_reserve::uncertainty::{load_scenarios, sample, write_scenarios};
use hydro_reserve::{
    fixtures, load_system, save_system, solve_model, solve_robust, CcgOptions, Distribution, HydroSystem,
    ModelSolution, ModelSpec, NetLoadScenario, ReserveRequirement, SimulationConfig, UncertaintySet,
};
use log::{info, warn};
use serde_json::json;

use crate::args::{Command, ConfigFile, DistArg, FixtureArg, ModelArg, ModelArgs, OutputArgs, SimArgs};
use crate::manifest::{Manifest, RunInputs};
use crate::CliError;

const DEFAULT_SCENARIOS: usize = 50;
const DEFAULT_SAMPLES: usize = 1000;
const DEFAULT_BETAS: &str = "0:1:0.1";

pub fn run(command: Command, mut config: ConfigFile) -> Result<(), CliError> {
    let options = SolveOptions::default();
    match command {
        Command::Solve { mut model, mut output } => {
            model.fill_from(&mut config.model);
            output.fill_from(&mut config.out);
            solve(&model, &output, &options)
        }
        Command::Simulate {
            mut model,
            mut sim,
            mut output,
        } => {
            model.fill_from(&mut config.model);
            sim.fill_from(&mut config.sim);
            output.fill_from(&mut config.out);
            simulate(&model, &sim, &output, &options)
        }
        Command::Sweep {
            mut model,
            mut sim,
            betas,
            mut output,
        } => {
            model.fill_from(&mut config.model);
            sim.fill_from(&mut config.sim);
            output.fill_from(&mut config.out);
            let betas = betas.or(config.betas.take()).unwrap_or_else(|| DEFAULT_BETAS.into());
            sweep(&model, &sim, &betas, &output, &options)
        }
        Command::GenerateScenarios {
            system,
            count,
            dist,
            seed,
            lambda,
            mut output,
        } => {
            output.fill_from(&mut config.out);
            let system = system.or(config.model.system.take());
            let count = count.or(config.count).unwrap_or(DEFAULT_SCENARIOS);
            let dist = dist.or(config.sim.dist).unwrap_or(DistArg::Normal);
            let seed = seed.or(config.sim.seed).unwrap_or(0);
            let lambda = lambda.or(config.model.lambda);
            generate(system.as_deref(), count, dist, seed, lambda, &output, &options)
        }
        Command::ExportSystem { fixture, periods, out } => {
            let system = match fixture {
                FixtureArg::C1 => fixtures::c1(),
                FixtureArg::C2 => {
                    if !(1..=4).contains(&periods) {
                        return Err(CliError::usage("the two-module fixture has 1 to 4 periods"));
                    }
                    fixtures::c2(periods)
                }
                FixtureArg::Synthetic => fixtures::synthetic_twelve(),
            };
            save_system(&system, &out)?;
            println!("{}", json!({ "system": out, "hash": system.content_hash() }));
            Ok(())
        }
    }
}

fn distribution(arg: Option<DistArg>) -> Distribution {
    match arg.unwrap_or(DistArg::Normal) {
        DistArg::Normal => Distribution::TruncatedNormal,
        DistArg::Uniform => Distribution::Uniform,
    }
}

fn require<T: Copy>(value: Option<T>, flag: &str, why: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("--{flag} is required {why}")))
}

fn out_dir(output: &OutputArgs) -> Result<PathBuf, CliError> {
    let dir = output.dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str, manifest: &mut Manifest) -> Result<File, CliError> {
    let path = dir.join(name);
    manifest.outputs.push(name.into());
    File::create(&path).map_err(|e| CliError::io(&path, e))
}

fn load(args: &ModelArgs, inputs: &mut RunInputs) -> Result<HydroSystem, CliError> {
    let path = args
        .system
        .as_deref()
        .ok_or_else(|| CliError::usage("--system is required"))?;
    let system = load_system(path)?;
    inputs.system_hash = Some(system.content_hash());
    Ok(system)
}

/// `--reserve-req`: MW, `grid`, or a file of per-period values.
fn reserve_requirement(arg: Option<&str>, default: ReserveRequirement) -> Result<ReserveRequirement, CliError> {
    let Some(text) = arg else {
        return Ok(default);
    };
    if text == "grid" {
        return Ok(ReserveRequirement::FromGrid);
    }
    if let Ok(mw) = text.parse::<f64>() {
        return Ok(if mw == 0.0 {
            ReserveRequirement::Zero
        } else {
            ReserveRequirement::Uniform(mw)
        });
    }
    let body = fs::read_to_string(text).map_err(|e| CliError::usage(format!("--reserve-req {text}: {e}")))?;
    let values = body
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| CliError::usage(format!("--reserve-req {text}: {e}")))?;
    Ok(ReserveRequirement::Profile(values))
}

fn scenario_digest(scenarios: &[NetLoadScenario]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_scenarios(&mut buf, scenarios, None)?;
    Ok(hex_digest(&buf))
}

/// S from `--scenarios`, or sampled with the recorded seed.
fn base_scenarios(
    args: &ModelArgs,
    system: &HydroSystem,
    inputs: &mut RunInputs,
) -> Result<Vec<NetLoadScenario>, CliError> {
    let (scenarios, record) = match &args.scenarios {
        Some(path) => {
            let s = load_scenarios(path)?;
            let record = json!({ "source": "file", "count": s.len() });
            (s, record)
        }
        None => {
            let lambda = require(args.lambda, "lambda", "to sample scenarios")?;
            let count = args.scenario_count.unwrap_or(DEFAULT_SCENARIOS);
            let dist = distribution(args.scenario_dist);
            let seed = args.scenario_seed.unwrap_or(0);
            let s = sample(dist, lambda, system.periods(), count, seed)?;
            let record = json!({
                "source": "sampled", "count": count, "distribution": dist.to_string(),
                "seed": seed, "lambda": lambda,
            });
            (s, record)
        }
    };
    let mut record = record;
    record["digest"] = json!(scenario_digest(&scenarios)?);
    inputs.set("scenarios", record);
    Ok(scenarios)
}

fn uncertainty_set(args: &ModelArgs, inputs: &mut RunInputs) -> Result<UncertaintySet, CliError> {
    let lambda = require(args.lambda, "lambda", "for the uncertainty set")?;
    let gamma = require(args.gamma, "gamma", "for the uncertainty set")?;
    inputs.set("lambda", lambda);
    inputs.set("gamma", gamma);
    Ok(UncertaintySet::new(lambda, gamma)?)
}

fn ccg_options(args: &ModelArgs, inputs: &mut RunInputs) -> CcgOptions {
    let defaults = CcgOptions::default();
    let ccg = CcgOptions {
        tolerance: args.tol.unwrap_or(defaults.tolerance),
        max_iterations: args.max_iter.unwrap_or(defaults.max_iterations),
        warm_start: Vec::new(),
        subproblem_time_limit: args.subproblem_time_limit,
    };
    inputs.set("ccg", &ccg);
    ccg
}

fn beta(args: &ModelArgs, model: &str, inputs: &mut RunInputs) -> Result<f64, CliError> {
    let beta = require(args.beta, "beta", &format!("for the {model} model"))?;
    inputs.set("beta", beta);
    Ok(beta)
}

/// J for the mixed model: loaded, or generated by CCG on the same set.
fn robust_scenarios(
    args: &ModelArgs,
    system: &HydroSystem,
    reserve: &ReserveRequirement,
    inputs: &mut RunInputs,
    options: &SolveOptions,
) -> Result<(Vec<NetLoadScenario>, Option<ModelSolution>), CliError> {
    if let Some(path) = &args.robust_scenarios {
        let j = load_scenarios(path)?;
        inputs.set(
            "robust_scenarios",
            json!({ "source": "file", "count": j.len(), "digest": scenario_digest(&j)? }),
        );
        return Ok((j, None));
    }
    let set = uncertainty_set(args, inputs)?;
    let ccg = ccg_options(args, inputs);
    inputs.set("robust_scenarios", json!({ "source": "ccg" }));
    info!("generating robust scenarios with CCG");
    let sol = solve_robust(system, &set, reserve, &ccg, options)?;
    Ok((sol.robust_scenarios.clone(), Some(sol)))
}

struct Prepared {
    system: HydroSystem,
    spec: ModelSpec,
    /// The CCG run that produced J for a mixed model.
    robust: Option<ModelSolution>,
}

fn prepare(args: &ModelArgs, inputs: &mut RunInputs, options: &SolveOptions) -> Result<Prepared, CliError> {
    let model = args.model.ok_or_else(|| CliError::usage("--model is required"))?;
    let system = load(args, inputs)?;
    let default_reserve = match model {
        ModelArg::Det => ReserveRequirement::FromGrid,
        _ => ReserveRequirement::Zero,
    };
    let reserve = reserve_requirement(args.reserve_req.as_deref(), default_reserve)?;
    inputs.set("model", format!("{model:?}").to_lowercase());
    inputs.set("reserve", &reserve);
    let mut robust = None;
    let spec = match model {
        ModelArg::Det => ModelSpec::Deterministic { reserve },
        ModelArg::Stoch => ModelSpec::Stochastic {
            scenarios: base_scenarios(args, &system, inputs)?,
            reserve,
        },
        ModelArg::Robust => ModelSpec::Robust {
            set: uncertainty_set(args, inputs)?,
            ccg: ccg_options(args, inputs),
            reserve,
        },
        ModelArg::Unified => {
            let beta = beta(args, "unified", inputs)?;
            ModelSpec::Unified {
                scenarios: base_scenarios(args, &system, inputs)?,
                set: uncertainty_set(args, inputs)?,
                beta,
                ccg: ccg_options(args, inputs),
                reserve,
            }
        }
        ModelArg::Mixed => {
            let beta = beta(args, "mixed", inputs)?;
            let scenarios = base_scenarios(args, &system, inputs)?;
            let (j, sol) = robust_scenarios(args, &system, &reserve, inputs, options)?;
            robust = sol;
            ModelSpec::Mixed {
                scenarios,
                robust: j,
                beta,
                reserve,
            }
        }
    };
    Ok(Prepared { system, spec, robust })
}

fn write_solution(
    dir: &Path,
    manifest: &mut Manifest,
    sol: &ModelSolution,
    robust: Option<&ModelSolution>,
    spec: &ModelSpec,
) -> Result<(), CliError> {
    let id = manifest.run_id.clone();
    let f = create(dir, "schedule.csv", manifest)?;
    sol.schedule.write_csv(f, Some(&id))?;
    let f = create(dir, "reserve.csv", manifest)?;
    sol.schedule.write_reserve_csv(f, Some(&id))?;
    let j: &[NetLoadScenario] = match spec {
        ModelSpec::Mixed { robust, .. } => robust,
        _ => &sol.robust_scenarios,
    };
    if !j.is_empty() {
        let f = create(dir, "robust_scenarios.csv", manifest)?;
        write_scenarios(f, j, Some(&id))?;
    }
    if let Some(trace) = sol.trace.as_ref().or(robust.and_then(|r| r.trace.as_ref())) {
        let f = create(dir, "trace.csv", manifest)?;
        trace.write_csv(f, Some(&id))?;
        manifest.result("ccg_iterations", trace.len());
        manifest.result("ccg_converged", trace.converged);
        manifest.result("ccg_final_gap", trace.final_gap);
        let seconds: Vec<f64> = trace.iterations.iter().map(|i| i.seconds).collect();
        manifest.wall_times.insert("ccg".into(), seconds.iter().sum());
    }
    manifest.result("model", sol.kind.to_string());
    manifest.result("objective", sol.objective);
    manifest.result("reserve_cost", sol.reserve_cost);
    Ok(())
}

fn solve(args: &ModelArgs, output: &OutputArgs, options: &SolveOptions) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = RunInputs::new("solve", options);
    let prep = prepare(args, &mut inputs, options)?;
    let sol = solve_model(&prep.system, &prep.spec, options)?;
    let dir = out_dir(output)?;
    let mut manifest = Manifest::new(inputs);
    write_solution(&dir, &mut manifest, &sol, prep.robust.as_ref(), &prep.spec)?;
    manifest.wall_times.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.write(&dir)?;
    println!(
        "{}",
        json!({ "run_id": manifest.run_id, "objective": sol.objective, "out": dir })
    );
    Ok(())
}

fn simulation_config(
    sim: &SimArgs,
    args: &ModelArgs,
    inputs: &mut RunInputs,
) -> Result<SimulationConfig, CliError> {
    let lambda = require(args.lambda, "lambda", "to sample deviations")?;
    let mut config = SimulationConfig::new(
        distribution(sim.dist),
        lambda,
        sim.samples.unwrap_or(DEFAULT_SAMPLES),
        sim.seed.unwrap_or(0),
    );
    config.parallel = !sim.sequential;
    inputs.set(
        "simulation",
        json!({
            "distribution": config.distribution.to_string(),
            "lambda": config.lambda,
            "samples": config.samples,
            "seed": config.seed,
        }),
    );
    Ok(config)
}

fn simulate(args: &ModelArgs, sim: &SimArgs, output: &OutputArgs, options: &SolveOptions) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = RunInputs::new("simulate", options);
    let prep = prepare(args, &mut inputs, options)?;
    let config = simulation_config(sim, args, &mut inputs)?;
    let sol = solve_model(&prep.system, &prep.spec, options)?;
    let solved = start.elapsed().as_secs_f64();
    let base = baseline(&prep.system, options)?;
    let samples = SampleSet::draw(&prep.system, &config, options)?;
    let report = samples.evaluate(&prep.system, &sol.schedule, &base, &sol.kind.to_string(), options)?;

    let dir = out_dir(output)?;
    let mut manifest = Manifest::new(inputs);
    write_solution(&dir, &mut manifest, &sol, prep.robust.as_ref(), &prep.spec)?;
    let id = manifest.run_id.clone();
    let f = create(&dir, "report.csv", &mut manifest)?;
    write_report_csv(f, std::slice::from_ref(&report), Some(&id))?;
    let f = create(&dir, "samples.csv", &mut manifest)?;
    write_samples_csv(f, std::slice::from_ref(&report), Some(&id))?;
    manifest.result("k", report.k);
    manifest.result("u_mean", report.mean);
    manifest.result("u_std", report.std_dev);
    manifest.wall_times.insert("solve".into(), solved);
    manifest.wall_times.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.write(&dir)?;
    println!(
        "{}",
        json!({ "run_id": manifest.run_id, "k": report.k, "u_mean": report.mean, "u_std": report.std_dev, "out": dir })
    );
    Ok(())
}

fn sweep(
    args: &ModelArgs,
    sim: &SimArgs,
    betas: &str,
    output: &OutputArgs,
    options: &SolveOptions,
) -> Result<(), CliError> {
    if args.model.is_some_and(|m| m != ModelArg::Mixed) {
        return Err(CliError::usage("sweep runs the mixed model only"));
    }
    let start = Instant::now();
    let mut inputs = RunInputs::new("sweep", options);
    let betas = parse_betas(betas)?;
    inputs.set("betas", &betas);
    let system = load(args, &mut inputs)?;
    let reserve = reserve_requirement(args.reserve_req.as_deref(), ReserveRequirement::Zero)?;
    inputs.set("reserve", &reserve);
    let scenarios = base_scenarios(args, &system, &mut inputs)?;
    let (j, robust) = robust_scenarios(args, &system, &reserve, &mut inputs, options)?;
    let config = simulation_config(sim, args, &mut inputs)?;
    // Fail early on inputs the model would reject for every β.
    solve_mixed(&system, &scenarios, &j, betas[0], &reserve, options)?;
    let samples = SampleSet::draw(&system, &config, options)?;
    let rows = sweep_beta(&system, &scenarios, &j, &betas, &reserve, &samples, options)?;

    let dir = out_dir(output)?;
    let mut manifest = Manifest::new(inputs);
    let id = manifest.run_id.clone();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for row in rows {
        match row.report {
            Ok(r) => reports.push(r),
            Err(e) => {
                warn!("beta {} failed: {e}", row.beta);
                failures.push(json!({ "beta": row.beta, "error": e }));
            }
        }
    }
    let f = create(&dir, "sweep.csv", &mut manifest)?;
    write_report_csv(f, &reports, Some(&id))?;
    let f = create(&dir, "samples.csv", &mut manifest)?;
    write_samples_csv(f, &reports, Some(&id))?;
    let f = create(&dir, "robust_scenarios.csv", &mut manifest)?;
    write_scenarios(f, &j, Some(&id))?;
    if let Some(trace) = robust.as_ref().and_then(|r| r.trace.as_ref()) {
        let f = create(&dir, "trace.csv", &mut manifest)?;
        trace.write_csv(f, Some(&id))?;
    }
    if let Some(best) = reports.iter().min_by(|a, b| a.mean.total_cmp(&b.mean)) {
        manifest.result("best", json!({ "label": best.label, "u_mean": best.mean }));
    }
    manifest.result("failures", &failures);
    manifest.wall_times.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.write(&dir)?;
    println!(
        "{}",
        json!({ "run_id": manifest.run_id, "rows": reports.len(), "failures": failures.len(), "out": dir })
    );
    Ok(())
}

fn generate(
    system: Option<&Path>,
    count: usize,
    dist: DistArg,
    seed: u64,
    lambda: Option<f64>,
    output: &OutputArgs,
    options: &SolveOptions,
) -> Result<(), CliError> {
    let mut inputs = RunInputs::new("generate-scenarios", options);
    let path = system.ok_or_else(|| CliError::usage("--system is required"))?;
    let system = load_system(path)?;
    inputs.system_hash = Some(system.content_hash());
    let lambda = require(lambda, "lambda", "to sample scenarios")?;
    let dist = distribution(Some(dist));
    let scenarios = sample(dist, lambda, system.periods(), count, seed)?;
    inputs.set(
        "scenarios",
        json!({ "count": count, "distribution": dist.to_string(), "seed": seed, "lambda": lambda }),
    );
    let dir = out_dir(output)?;
    let mut manifest = Manifest::new(inputs);
    let id = manifest.run_id.clone();
    let f = create(&dir, "scenarios.csv", &mut manifest)?;
    write_scenarios(f, &scenarios, Some(&id))?;
    manifest.write(&dir)?;
    println!("{}", json!({ "run_id": manifest.run_id, "count": count, "out": dir }));
    Ok(())
}
