use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use lambertpo_core::advantage::{group_advantage, population_advantage};
use lambertpo_core::lambertw::{w0_exp_report, w0_report};
use lambertpo_core::target::{sensitivity, solve_tau, target_policy};
use lambertpo_core::trainer::{run_experiment, summarize, sweep_plan, SweepAxis};
use lambertpo_core::verify::{run_check, CHECK_NAMES};
use lambertpo_core::{AdvantageMethod, BanditInstance, Dist, Group, Regime};
use rayon::prelude::*;

use crate::config::{config_pairs, parse_config, render_config};
use crate::error::CliError;
use crate::instance;
use crate::output::{num, write_metrics, RunManifest, SummaryRecord};

fn parse_list(what: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| CliError::validation(format!("{what}: cannot parse `{}`: {e}", t.trim())))
        })
        .collect()
}

fn parse_method(text: &str) -> Result<AdvantageMethod, CliError> {
    text.parse().map_err(CliError::from_core)
}

pub fn w(z: Option<f64>, exp_arg: Option<f64>) -> Result<(), CliError> {
    match (z, exp_arg) {
        (_, Some(u)) => {
            let (value, iterations) = w0_exp_report(u);
            outln!("value {}", num(value));
            outln!("residual {}", num((value + value.ln() - u).abs()));
            outln!("iterations {iterations}");
        }
        (Some(z), None) => {
            let r = w0_report(z).map_err(CliError::from_core)?;
            outln!("value {}", num(r.value));
            outln!("residual {}", num(r.residual));
            outln!("iterations {}", r.iterations);
        }
        (None, None) => return Err(CliError::validation("pass --z or --exp-arg")),
    }
    Ok(())
}

/// Temperature for `method`: beta2 for the decoupled estimator, else beta.
fn temperature(method: AdvantageMethod, beta: Option<f64>, beta2: Option<f64>) -> Result<f64, CliError> {
    let needed = match method {
        AdvantageMethod::OaplDecoupled => beta2.or(beta),
        AdvantageMethod::Oapl | AdvantageMethod::ShiftedMean => beta,
        AdvantageMethod::GrpoNorm | AdvantageMethod::Centered => return Ok(beta.unwrap_or(1.0)),
    };
    needed.ok_or_else(|| CliError::validation(format!("--beta is required for the {method} advantage")))
}

pub fn advantage(
    method: &str,
    rewards: &str,
    beta: Option<f64>,
    beta2: Option<f64>,
    sigma_floor: f64,
) -> Result<(), CliError> {
    let method = parse_method(method)?;
    let rewards = parse_list("rewards", rewards)?;
    let g = Group::from_rewards(rewards).map_err(CliError::from_core)?;
    let t = temperature(method, beta, beta2)?;
    let adv = group_advantage(method, &g, t, sigma_floor).map_err(CliError::from_core)?;
    outln!("index,reward,advantage");
    for (i, (r, a)) in g.rewards().iter().zip(&adv.values).enumerate() {
        outln!("{i},{},{}", num(*r), num(*a));
    }
    outln!("mean {}", num(adv.mean()));
    if let Some(m) = adv.exp_normalization() {
        outln!("mean_exp {}", num(m));
    }
    Ok(())
}

pub struct TargetRequest<'a> {
    pub advantages: Option<&'a str>,
    pub instance: Option<&'a Path>,
    pub context: usize,
    pub method: &'a str,
    pub group_size: usize,
    pub behavior: Option<&'a str>,
    pub beta: Option<f64>,
    pub beta2: Option<f64>,
}

fn behavior_or_uniform(text: Option<&str>, n: usize) -> Result<Dist, CliError> {
    match text {
        Some(b) => Dist::new(parse_list("behavior", b)?),
        None => Dist::uniform(n),
    }
    .map_err(CliError::from_core)
}

pub fn target(req: TargetRequest<'_>) -> Result<(), CliError> {
    let (adv, behavior, beta) = match (req.advantages, req.instance) {
        (Some(text), _) => {
            let adv = parse_list("advantages", text)?;
            let behavior = behavior_or_uniform(req.behavior, adv.len())?;
            (adv, behavior, req.beta)
        }
        (None, Some(path)) => match instance::load_any(path)? {
            instance::InputFile::Target(p) => {
                let behavior = match req.behavior {
                    Some(_) => behavior_or_uniform(req.behavior, p.advantages.len())?,
                    None => p.behavior,
                };
                (p.advantages, behavior, req.beta.or(p.beta))
            }
            instance::InputFile::Bandit(inst) => {
                if req.context >= inst.num_contexts() {
                    return Err(CliError::validation(format!(
                        "context {} out of range for {} contexts",
                        req.context,
                        inst.num_contexts()
                    )));
                }
                let behavior = behavior_or_uniform(req.behavior, inst.outcomes())?;
                let method = parse_method(req.method)?;
                let t = temperature(method, req.beta, req.beta2)?;
                let adv = population_advantage(method, inst.rewards(req.context), &behavior, req.group_size, t)
                    .map_err(CliError::from_core)?;
                (adv, behavior, req.beta)
            }
        },
        (None, None) => return Err(CliError::validation("pass --advantages or --instance")),
    };
    let beta = beta.ok_or_else(|| CliError::validation("beta is required: pass --beta or set it in the file"))?;
    let lt = solve_tau(&adv, &behavior, beta).map_err(CliError::from_core)?;
    outln!("regime {}", lt.regime);
    outln!("tau {}", num(lt.tau));
    outln!("z_exp {}", num(lt.z_exp.value));
    if lt.regime == Regime::NoSolution {
        return Ok(());
    }
    let pi = target_policy(&lt, &behavior).map_err(CliError::from_core)?;
    let sens = sensitivity(&lt).map_err(CliError::from_core)?;
    outln!("outcome,advantage,rho,target,sensitivity,near_singular");
    for y in 0..adv.len() {
        outln!(
            "{y},{},{},{},{},{}",
            num(adv[y]),
            num(lt.rho[y]),
            num(pi.probs()[y]),
            num(sens[y].value),
            sens[y].near_singular
        );
    }
    Ok(())
}

pub fn instance_gen(contexts: usize, outcomes: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let inst = BanditInstance::generate(contexts, outcomes, seed).map_err(CliError::from_core)?;
    write_text(out, &instance::render(&inst))?;
    let manifest_path = out.with_extension("manifest.json");
    let echo = vec![
        ("contexts".to_string(), contexts.to_string()),
        ("outcomes".to_string(), outcomes.to_string()),
        ("seed".to_string(), seed.to_string()),
    ];
    let mut manifest = RunManifest::new("instance gen", echo, seed);
    manifest.output_paths = vec![out.to_path_buf(), manifest_path.clone()];
    manifest.write(&manifest_path)?;
    outln!("{}", out.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn read_config(path: &Path) -> Result<lambertpo_core::TrainConfig, CliError> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads `path`, or generates the default instance and saves a copy to `out`
/// so the run stays reproducible from its outputs.
fn resolve_instance(path: Option<&Path>, out: &Path, outputs: &mut Vec<PathBuf>) -> Result<(BanditInstance, String), CliError> {
    match path {
        Some(p) => Ok((instance::load(p)?, p.display().to_string())),
        None => {
            let inst = BanditInstance::generate(4, 32, 0).map_err(CliError::from_core)?;
            let copy = out.join("instance.txt");
            write_text(&copy, &instance::render(&inst))?;
            outputs.push(copy.clone());
            Ok((inst, copy.display().to_string()))
        }
    }
}

/// Writes the fully resolved config, defaults included.
fn save_config(cfg: &lambertpo_core::TrainConfig, out: &Path) -> Result<PathBuf, CliError> {
    let path = out.join("config.txt");
    write_text(&path, &render_config(cfg))?;
    Ok(path)
}

fn echo(cfg: &lambertpo_core::TrainConfig, instance: String) -> Vec<(String, String)> {
    let mut pairs: Vec<(String, String)> = config_pairs(cfg).into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    pairs.push(("instance".into(), instance));
    pairs
}

fn runtime(e: lambertpo_core::Error) -> CliError {
    CliError::Runtime(anyhow::Error::new(e))
}

pub fn train(config: &Path, instance_path: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let cfg = read_config(config)?;
    let mut outputs = Vec::new();
    let (inst, inst_name) = resolve_instance(instance_path, out, &mut outputs)?;
    outputs.push(save_config(&cfg, out)?);
    let records = run_experiment(&cfg, &inst).map_err(runtime)?;
    let metrics = out.join("metrics.csv");
    write_metrics(&metrics, &records)?;
    outputs.push(metrics.clone());
    let manifest_path = out.join("manifest.json");
    let mut manifest = RunManifest::new("train", echo(&cfg, inst_name), cfg.seed);
    outputs.push(manifest_path.clone());
    manifest.output_paths = outputs;
    manifest.write(&manifest_path)?;
    if let Some(last) = records.last() {
        outln!(
            "steps {} expected_reward {} entropy {}",
            records.len(),
            num(last.expected_reward),
            num(last.entropy)
        );
    }
    outln!("{}", metrics.display());
    Ok(())
}

pub struct SweepRequest<'a> {
    pub config: &'a Path,
    pub axis: &'a str,
    pub values: &'a str,
    pub seeds: u64,
    pub instance: Option<&'a Path>,
    pub out: &'a Path,
    pub jobs: Option<usize>,
}

pub fn sweep(req: SweepRequest<'_>) -> Result<(), CliError> {
    let base = read_config(req.config)?;
    let axis: SweepAxis = req.axis.parse().map_err(CliError::from_core)?;
    let values = parse_list("values", req.values)?;
    let plan = sweep_plan(&base, axis, &values, req.seeds).map_err(CliError::from_core)?;
    let mut outputs = Vec::new();
    let (inst, inst_name) = resolve_instance(req.instance, req.out, &mut outputs)?;
    outputs.push(save_config(&base, req.out)?);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.jobs.unwrap_or(0))
        .build()
        .context("cannot start worker threads")?;
    let results: Vec<Result<(lambertpo_core::trainer::SweepSummary, PathBuf), CliError>> = pool.install(|| {
        plan.par_iter()
            .map(|cell| {
                let records = run_experiment(&cell.config, &inst).map_err(runtime)?;
                let name = format!("{}_{}-{}_seed-{}.csv", cell.method.name(), axis, cell.value, cell.seed);
                let path = req.out.join("runs").join(name);
                write_metrics(&path, &records)?;
                Ok((summarize(cell, &inst, &records), path))
            })
            .collect()
    });

    let summary_path = req.out.join("summary.jsonl");
    let mut lines = String::new();
    for r in results {
        let (summary, path) = r?;
        let rec = SummaryRecord::new(&summary, &path);
        lines.push_str(&serde_json::to_string(&rec).context("cannot encode summary")?);
        lines.push('\n');
        outputs.push(path);
    }
    write_text(&summary_path, &lines)?;
    outputs.push(summary_path.clone());

    let mut config_echo = echo(&base, inst_name);
    config_echo.push(("axis".into(), axis.name().into()));
    config_echo.push(("values".into(), req.values.into()));
    config_echo.push(("seeds".into(), req.seeds.to_string()));
    let manifest_path = req.out.join("manifest.json");
    let mut manifest = RunManifest::new("sweep", config_echo, base.seed);
    outputs.push(manifest_path.clone());
    manifest.output_paths = outputs;
    manifest.write(&manifest_path)?;
    outln!("{} runs", plan.len());
    outln!("{}", summary_path.display());
    Ok(())
}

pub fn verify(check: Option<&str>, seed: u64, tolerance: Option<f64>) -> Result<(), CliError> {
    let names: Vec<&str> = match check {
        Some(name) if CHECK_NAMES.contains(&name) => vec![name],
        Some(name) => {
            return Err(CliError::validation(format!(
                "unknown check `{name}`; available: {}",
                CHECK_NAMES.join(", ")
            )))
        }
        None => CHECK_NAMES.to_vec(),
    };
    outln!("{:<22} {:>9} {:>13} {:>9}  status", "check", "instances", "max_violation", "tolerance");
    let mut failed = Vec::new();
    for name in names {
        let mut r = run_check(name, seed).with_context(|| format!("check {name} could not run"))?;
        if let Some(t) = tolerance {
            r = r.with_tolerance(t);
        }
        outln!(
            "{:<22} {:>9} {:>13.3e} {:>9.0e}  {}",
            r.check_name,
            r.instances_tested,
            r.max_violation,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
        for note in &r.notes {
            outln!("    {note}");
        }
        if !r.passed {
            failed.push(r.check_name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}
