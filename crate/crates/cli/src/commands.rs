use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use neuralparc::blackbox::{builtin, collect, derive_seed, meta_path, BlackBoxSystem, Dataset};
use neuralparc::errbound::{partition_and_estimate, validate, PartitionedBounds, Validation, DEFAULT_SUBSTEPS};
use neuralparc::reachavoid::{solve_with, verify_sample, Budget, Outcome, RegionWork, VERIFY_POINTS_PER_STEP};
use neuralparc::relunet::{train, TrainConfig};
use neuralparc::trajmodel::predict;
use neuralparc::{Hyperrectangle, ReluNetwork, Scenario, SolveReport};

use crate::manifest::{file_sha256, manifest_path, read_bytes, read_json, write_json, Manifest};
use crate::svg::{outline, Plot};
use crate::Failure;

#[derive(Debug, Parser)]
#[command(name = "neuralparc", version, about = "Certified reach-avoid planning for black-box trajectory families")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample trajectories of a built-in system into a dataset.
    Collect(CollectArgs),
    /// Fit a ReLU trajectory model to a dataset.
    Train(TrainArgs),
    /// Estimate model error bounds against the black box.
    Bounds(BoundsArgs),
    /// Search for certified initial conditions and parameters.
    Solve(SolveArgs),
    /// Replay solved samples on the black box.
    Verify(VerifyArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect(a) => cmd_collect(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Bounds(a) => cmd_bounds(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CollectArgs {
    /// drift2d or boat2d.
    #[arg(long)]
    pub system: String,
    /// Number of trajectories.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    #[serde(skip)]
    pub output: PathBuf,
}

pub fn cmd_collect(a: &CollectArgs) -> Result<()> {
    let system = builtin(&a.system)?;
    let start = Instant::now();
    let data = collect(system.as_ref(), system.parameter_box(), a.n, a.seed)?;
    data.save(&a.output)?;
    let mut m = Manifest::new("collect", a)?;
    m.output("dataset", &a.output)?;
    m.output("metadata", &meta_path(&a.output))?;
    m.write(&manifest_path(&a.output))?;
    eprintln!("collected {} {} trajectories in {:.1}s", a.n, a.system, start.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "8,8,8,8")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub batch_size: usize,
    #[arg(short, long)]
    #[serde(skip)]
    pub output: PathBuf,
}

/// Training facts later commands rely on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub system: String,
    pub final_mse: f64,
    pub epochs: usize,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    read_bytes(&a.data)?;
    read_bytes(&meta_path(&a.data))?;
    let data = Dataset::load(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let mut cfg = TrainConfig::new(a.widths.clone(), a.epochs, a.seed);
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch_size;
    let start = Instant::now();
    let report = train(&data.training_set()?, &cfg)?;
    report.net.save(&a.output)?;
    let summary = TrainSummary { system: data.meta.system.clone(), final_mse: report.final_mse, epochs: a.epochs };
    let mut m = Manifest::new("train", a)?;
    m.input("dataset", &a.data)?;
    m.output("network", &a.output)?;
    write_json(&summary_path(&a.output), &summary)?;
    m.output("summary", &summary_path(&a.output))?;
    m.write(&manifest_path(&a.output))?;
    eprintln!("trained {:?} in {:.1}s, mse {:.3e}", a.widths, start.elapsed().as_secs_f64(), report.final_mse);
    Ok(())
}

/// `<net>.summary.json`.
pub fn summary_path(net: &Path) -> PathBuf {
    let mut s = net.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long)]
    #[serde(skip)]
    pub net: PathBuf,
    /// Defaults to the system the network was trained on.
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub n_sample: usize,
    /// Checked points per timestep interval, both ends included.
    #[arg(long, default_value_t = DEFAULT_SUBSTEPS)]
    pub substeps: usize,
    /// Cells per parameter axis; one value applies to every axis.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub splits: Vec<usize>,
    /// Half-width of the initial-position box sampled around the origin.
    #[arg(long, default_value_t = 0.5)]
    pub p0_halfwidth: f64,
    /// Multiplier applied to the sampled maxima.
    #[arg(long, default_value_t = 1.0)]
    pub inflate: f64,
    /// Fresh draws used to validate the bounds; 0 skips validation.
    #[arg(long, default_value_t = 10_000)]
    pub validate: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    #[serde(skip)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsArtifact {
    pub system: String,
    pub p0: Hyperrectangle,
    pub inflation: f64,
    pub n_substeps: usize,
    pub bounds: PartitionedBounds,
    pub validation: Option<Validation>,
}

pub fn cmd_bounds(a: &BoundsArgs) -> Result<()> {
    let net_bytes = read_bytes(&a.net)?;
    let net = ReluNetwork::from_json(std::str::from_utf8(&net_bytes)?)?;
    let system_name = match &a.system {
        Some(s) => s.clone(),
        None => read_json::<TrainSummary>(&summary_path(&a.net)).context("pass --system or keep the training summary")?.system,
    };
    let system = builtin(&system_name)?;
    anyhow::ensure!(a.inflate >= 1.0, "--inflate must be at least 1");
    anyhow::ensure!(a.p0_halfwidth >= 0.0, "--p0-halfwidth must be nonnegative");
    let spec = system.spec();
    let kd = system.parameter_box();
    let splits = match a.splits.as_slice() {
        [s] => vec![*s; kd.dim()],
        s => s.to_vec(),
    };
    let p0 = Hyperrectangle::centered(&vec![a.p0_halfwidth; spec.n_p])?;
    let start = Instant::now();
    let raw = partition_and_estimate(system.as_ref(), &net, spec, &p0, kd, &splits, a.n_sample, a.substeps, a.seed)?;
    let bounds = raw.inflated(a.inflate);
    let validation = if a.validate > 0 {
        Some(validate(system.as_ref(), &net, spec, &bounds, &p0, a.validate, a.substeps, a.seed)?)
    } else {
        None
    };
    let artifact =
        BoundsArtifact { system: system_name, p0, inflation: a.inflate, n_substeps: a.substeps, bounds, validation };
    write_json(&a.output, &artifact)?;
    let mut m = Manifest::new("bounds", a)?;
    m.input("network", &a.net)?;
    m.output("bounds", &a.output)?;
    m.write(&manifest_path(&a.output))?;
    let env = artifact.bounds.envelope();
    eprintln!(
        "bounds over {} cells in {:.1}s; final error {:?}",
        artifact.bounds.cells.len(),
        start.elapsed().as_secs_f64(),
        env.e_final
    );
    if let Some(v) = &artifact.validation {
        eprintln!("validation: {}/{} fresh draws exceed the bounds (worst ratio {:.3})", v.n_exceeding, v.n_fresh, v.worst_ratio);
    }
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    #[serde(skip)]
    pub scenario: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub net: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub bounds: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub budget_regions: usize,
    #[arg(long, default_value_t = neuralparc::reachavoid::SAMPLES_PER_REGION)]
    pub samples_per_region: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(short, long)]
    #[serde(skip)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveArtifact {
    pub system: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub budget: Budget,
    pub result: SolveReport,
}

pub fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let scenario: Scenario = read_json(&a.scenario)?;
    let net_bytes = read_bytes(&a.net)?;
    let net = ReluNetwork::from_json(std::str::from_utf8(&net_bytes)?)?;
    let artifact: BoundsArtifact = read_json(&a.bounds)?;
    let bounds_manifest = Manifest::load(&manifest_path(&a.bounds))?;
    let net_hash = file_sha256(&a.net)?;
    if bounds_manifest.inputs.get("network") != Some(&net_hash) {
        return Err(Failure::Mismatch(format!(
            "{} was estimated for a different network than {}",
            a.bounds.display(),
            a.net.display()
        ))
        .into());
    }
    let system = builtin(&artifact.system)?;
    if system.spec() != &scenario.spec {
        bail!("scenario timing {:?} does not match {} ({:?})", scenario.spec, artifact.system, system.spec());
    }

    let budget = Budget { max_regions: a.budget_regions, samples_per_region: a.samples_per_region };
    let start = Instant::now();
    let mut last = start;
    let mut timings = String::new();
    let mut found: Option<RegionWork<f64>> = None;
    let report = solve_with(&scenario, &net, &artifact.bounds, budget, a.seed, |w| {
        let now = Instant::now();
        let _ = writeln!(timings, "region {} cell {} {:.6}", w.report.region, w.report.cell, (now - last).as_secs_f64());
        last = now;
        if !w.samples.is_empty() {
            found = Some(w.clone());
        }
    })?;
    let total = start.elapsed().as_secs_f64();
    timings.insert_str(0, &format!("total {total:.6}\nregions {}\n", report.regions_explored));

    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let report_path = a.output.join("report.json");
    let outcome = report.outcome;
    let n_samples = report.samples.len();
    let solved = SolveArtifact { system: artifact.system.clone(), scenario, seed: a.seed, budget, result: report };
    write_json(&report_path, &solved)?;
    std::fs::write(a.output.join("timings.txt"), timings)?;
    let plot = solve_plot(&solved, &net, &artifact.bounds, system.as_ref(), found.as_ref())?;
    std::fs::write(a.output.join("plot.svg"), plot)?;
    let mut m = Manifest::new("solve", a)?;
    m.input("scenario", &a.scenario)?;
    m.input("network", &a.net)?;
    m.input("bounds", &a.bounds)?;
    m.output("report", &report_path)?;
    m.write(&a.output.join("manifest.json"))?;

    eprintln!(
        "{:?} after {} regions in {:.2}s; {} certified samples",
        outcome, solved.result.regions_explored, total, n_samples
    );
    match outcome {
        Outcome::Found => Ok(()),
        Outcome::GoalEmpty => Err(Failure::NoBras("the goal is empty after shrinking by the final error".into()).into()),
        Outcome::Exhausted => Err(Failure::NoBras("every region was explored".into()).into()),
        Outcome::Budget => Err(Failure::NoBras(format!("region budget of {} spent", a.budget_regions)).into()),
    }
}

fn scene(plot: &mut Plot, scenario: &Scenario) -> Result<()> {
    plot.rect(
        [scenario.p0.lower()[0], scenario.p0.lower()[1]],
        [scenario.p0.upper()[0], scenario.p0.upper()[1]],
        "gray",
        0.3,
    );
    plot.polygon(outline(&scenario.goal)?, "green", 0.35);
    for o in &scenario.obstacles {
        plot.polygon(outline(o)?, "red", 0.5);
    }
    Ok(())
}

fn solve_plot(
    solved: &SolveArtifact,
    net: &ReluNetwork,
    bounds: &PartitionedBounds,
    system: &dyn BlackBoxSystem,
    work: Option<&RegionWork<f64>>,
) -> Result<String> {
    let scenario = &solved.scenario;
    let mut plot = Plot::new();
    scene(&mut plot, scenario)?;
    if let (Some(s), Some(_)) = (&solved.result.first, work) {
        let spec = &scenario.spec;
        let pred = predict(net, spec, &s.p0, &s.k)?;
        let cell = bounds.cell_for(&s.k)?;
        for (j, e) in cell.e_interval.iter().enumerate() {
            let (a, b) = (&pred.positions[j], &pred.positions[j + 1]);
            plot.rect(
                [a[0].min(b[0]) - e[0], a[1].min(b[1]) - e[1]],
                [a[0].max(b[0]) + e[0], a[1].max(b[1]) + e[1]],
                "orange",
                0.08,
            );
        }
        plot.line(pred.positions.iter().map(|p| [p[0], p[1]]).collect(), "black", 1.5, true, 1.0);
        let times: Vec<f64> = (0..=spec.steps()).map(|j| spec.time(j)).collect();
        let (ps, _) = system.simulate(&s.k, 0, &times)?;
        plot.line(ps.iter().map(|p| [p[0] + s.p0[0], p[1] + s.p0[1]]).collect(), "blue", 1.0, false, 0.8);
    }
    Ok(plot.render(900.0))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// A solve report file or the directory holding report.json.
    #[arg(long)]
    #[serde(skip)]
    pub report: PathBuf,
    /// Fresh disturbance realizations per sample.
    #[arg(long, default_value_t = 100)]
    pub rollouts: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = VERIFY_POINTS_PER_STEP)]
    pub points_per_step: usize,
    /// Defaults to verify.json next to the report.
    #[arg(short, long)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerification {
    pub index: usize,
    pub p0: Vec<f64>,
    pub k: Vec<f64>,
    pub reached: usize,
    pub avoided: usize,
    pub successes: usize,
    pub min_clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyArtifact {
    pub system: String,
    pub rollouts: usize,
    pub seed: u64,
    pub samples: Vec<SampleVerification>,
    pub successes: usize,
    pub total: usize,
}

/// Disturbance seed of rollout `r` of sample `i`; never the nominal seed 0.
pub fn rollout_seed(base: u64, sample: usize, rollout: usize) -> u64 {
    derive_seed(derive_seed(base, sample as u64), rollout as u64).max(1)
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let report_path = if a.report.is_dir() { a.report.join("report.json") } else { a.report.clone() };
    let solved: SolveArtifact = read_json(&report_path)?;
    let system = builtin(&solved.system)?;
    if solved.result.samples.is_empty() {
        return Err(Failure::NoBras(format!("{} holds no certified samples", report_path.display())).into());
    }
    anyhow::ensure!(a.rollouts > 0, "--rollouts must be positive");
    let scenario = &solved.scenario;
    let jobs: Vec<(usize, usize)> =
        (0..solved.result.samples.len()).flat_map(|i| (0..a.rollouts).map(move |r| (i, r))).collect();
    let checks = jobs
        .par_iter()
        .map(|&(i, r)| {
            verify_sample(system.as_ref(), scenario, &solved.result.samples[i], rollout_seed(a.seed, i, r), a.points_per_step)
        })
        .collect::<neuralparc::Result<Vec<_>>>()?;
    let mut samples = Vec::new();
    for (i, s) in solved.result.samples.iter().enumerate() {
        let mine = &checks[i * a.rollouts..(i + 1) * a.rollouts];
        samples.push(SampleVerification {
            index: i,
            p0: s.p0.clone(),
            k: s.k.clone(),
            reached: mine.iter().filter(|c| c.reached).count(),
            avoided: mine.iter().filter(|c| c.avoided).count(),
            successes: mine.iter().filter(|c| c.reached && c.avoided).count(),
            min_clearance: mine.iter().map(|c| c.min_clearance).fold(f64::INFINITY, f64::min),
        });
    }
    let successes = samples.iter().map(|s| s.successes).sum();
    let out = VerifyArtifact {
        system: solved.system.clone(),
        rollouts: a.rollouts,
        seed: a.seed,
        samples,
        successes,
        total: jobs.len(),
    };
    let out_path = a.output.clone().unwrap_or_else(|| report_path.with_file_name("verify.json"));
    write_json(&out_path, &out)?;
    std::fs::write(out_path.with_extension("svg"), verify_plot(&solved, system.as_ref(), a)?)?;
    let mut m = Manifest::new("verify", a)?;
    m.input("report", &report_path)?;
    m.output("verification", &out_path)?;
    m.write(&manifest_path(&out_path))?;

    for s in &out.samples {
        println!("sample {}: reach {}/{} avoid {}/{} success {}/{}", s.index, s.reached, a.rollouts, s.avoided, a.rollouts, s.successes, a.rollouts);
    }
    println!("total {}/{}", out.successes, out.total);
    if out.successes != out.total {
        return Err(Failure::Verification(format!("{} of {} rollouts failed", out.total - out.successes, out.total)).into());
    }
    Ok(())
}

fn verify_plot(solved: &SolveArtifact, system: &dyn BlackBoxSystem, a: &VerifyArgs) -> Result<String> {
    let scenario = &solved.scenario;
    let spec = &scenario.spec;
    let mut plot = Plot::new();
    scene(&mut plot, scenario)?;
    let s = &solved.result.samples[0];
    let times: Vec<f64> = (0..=spec.steps()).map(|j| spec.time(j)).collect();
    for r in 0..a.rollouts {
        let (ps, _) = system.simulate(&s.k, rollout_seed(a.seed, 0, r), &times)?;
        plot.line(ps.iter().map(|p| [p[0] + s.p0[0], p[1] + s.p0[1]]).collect(), "blue", 0.8, false, 0.3);
    }
    Ok(plot.render(900.0))
}
