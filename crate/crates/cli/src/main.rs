//! `scenario-opt`: sample-size planning, scenario solving, constraint
//! removal, validation and the cuboid benchmark tables.
//!
//! Exit codes: 0 success, 2 invalid flags or problem file, 3 infeasible
//! scenario program, 1 anything else.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use scenario_opt::bounds::{self, Policy};
use scenario_opt::cuboid_bench::{self, ExtremeSampler, Pairing, Table2Options, TABLE_EPS, TABLE_N};
use scenario_opt::discard::{self, RemovalAlgorithm};
use scenario_opt::rng::thread_pool;
use scenario_opt::scenario_core::{self, ScenarioLp, SolveStatus};
use scenario_opt::validate::{self, SurveyOptions, ViolationMethod};
use scenario_opt::{Error as CoreError, ScenarioProgram};

use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("scenario program is infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Core(CoreError::Numerical(_)) | CliError::Io { .. } => 1,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "scenario-opt", version, about = "Scenario approach to chance-constrained linear programs")]
struct Cli {
    /// Worker threads for replication loops.
    #[arg(long, global = true, env = "SCENARIO_OPT_THREADS")]
    threads: Option<usize>,
    /// Directory that receives the run manifest.
    #[arg(long, global = true)]
    manifest_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample size for one chance constraint.
    Samplesize(SampleSizeArgs),
    /// Per-stage sample sizes for a problem file.
    Plan(PlanArgs),
    /// Plan, sample, solve, optionally discard and validate.
    Solve(SolveArgs),
    /// Violation survey over many replications, or a check of one point.
    Validate(ValidateArgs),
    /// Minimal-diameter cuboid benchmark tables.
    #[command(subcommand)]
    Cuboid(CuboidCommand),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Implicit,
    Chernoff,
    Refined,
}

impl From<MethodArg> for Policy {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Implicit => Policy::Implicit,
            MethodArg::Chernoff => Policy::Chernoff,
            MethodArg::Refined => Policy::Refined,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RemovalArg {
    Greedy,
    Marginal,
    Optimal,
}

impl From<RemovalArg> for RemovalAlgorithm {
    fn from(r: RemovalArg) -> Self {
        match r {
            RemovalArg::Greedy => RemovalAlgorithm::Greedy,
            RemovalArg::Marginal => RemovalAlgorithm::Marginal,
            RemovalArg::Optimal => RemovalAlgorithm::Optimal,
        }
    }
}

#[derive(Args, Debug)]
struct SampleSizeArgs {
    #[arg(long)]
    zeta: u64,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    theta: f64,
    /// Number of samples to be discarded afterwards.
    #[arg(long, default_value_t = 0)]
    discard: u64,
    #[arg(long, value_enum, default_value = "implicit")]
    method: MethodArg,
}

#[derive(Args, Debug, Clone)]
struct PlanFlags {
    /// Problem file (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Total confidence parameter, split evenly over stages.
    #[arg(long, default_value_t = 1e-6)]
    theta: f64,
    #[arg(long, value_enum, default_value = "implicit")]
    method: MethodArg,
    /// Per-stage discard counts (comma separated); one value applies to all.
    #[arg(long = "R", value_delimiter = ',')]
    discard_counts: Option<Vec<u64>>,
    /// Fixed per-stage sample sizes, bypassing the bounds.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[command(flatten)]
    plan: PlanFlags,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    plan: PlanFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Removal algorithm for stages with a discard count.
    #[arg(long, value_enum)]
    discard: Option<RemovalArg>,
    /// Validation samples per stage for the final solution.
    #[arg(long)]
    validate: Option<u64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Skip the support-set computation.
    #[arg(long)]
    no_support: bool,
    /// Write the solution here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    plan: PlanFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    replications: u64,
    /// Validation samples per stage and replication.
    #[arg(long, default_value_t = 100_000)]
    n_val: u64,
    /// Use closed-form violation probabilities where the stage allows it.
    #[arg(long)]
    exact: bool,
    #[arg(long, value_enum)]
    discard: Option<RemovalArg>,
    /// Estimate violations at this point instead of running a survey.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    point: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Per-replication CSV (replication, stage, v_hat, exceeds).
    #[arg(long)]
    survey: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum CuboidCommand {
    /// Implicit sample sizes, multi-stage and single-stage.
    Table1 {
        #[arg(long, default_value_t = 1e-6)]
        theta: f64,
        /// Directory for table1a.csv and table1b.csv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Relative objective surplus of the single-stage formulation.
    Table2 {
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        theta: f64,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Levels as fractions, e.g. 0.01,0.1.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "shared")]
        pairing: PairingArg,
        /// Draw every sample instead of only the extremes.
        #[arg(long)]
        direct: bool,
        /// Directory for table2.csv, table2_se.csv and table2_long.csv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PairingArg {
    Shared,
    Independent,
}

fn load_program(path: &Path) -> Result<ScenarioProgram, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let program: ScenarioProgram = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    program.validate()?;
    Ok(program)
}

fn build_plan(flags: &PlanFlags, program: &ScenarioProgram) -> Result<bounds::SampleSizePlan, CliError> {
    let n = program.stages.len();
    let expand = |v: &Vec<u64>, what: &str| -> Result<Vec<u64>, CliError> {
        match v.len() {
            1 => Ok(vec![v[0]; n]),
            len if len == n => Ok(v.clone()),
            len => Err(CliError::Input(format!("{len} {what} values for {n} stages"))),
        }
    };
    let discards = flags.discard_counts.as_ref().map(|v| expand(v, "--R")).transpose()?;
    if let Some(sizes) = &flags.sizes {
        let sizes = expand(sizes, "--sizes")?;
        let mut p = program.clone();
        if let Some(r) = &discards {
            for (s, &ri) in p.stages.iter_mut().zip(r) {
                s.discard = ri as usize;
            }
        }
        return Ok(bounds::SampleSizePlan::fixed(&p, &sizes, flags.theta));
    }
    Ok(bounds::plan_multistage(program, flags.theta, flags.method.into(), discards.as_deref(), None)?)
}

fn plan_params(flags: &PlanFlags) -> Value {
    json!({
        "spec": flags.spec.display().to_string(),
        "theta": flags.theta,
        "method": format!("{:?}", flags.method).to_lowercase(),
        "R": flags.discard_counts,
        "sizes": flags.sizes,
    })
}

fn finish_manifest(manifest: &RunManifest, dir: Option<&Path>) -> Result<(), CliError> {
    if let Some(dir) = dir {
        manifest.save(dir)?;
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes") + "\n"
}

fn cmd_samplesize(a: &SampleSizeArgs, mdir: Option<&Path>) -> Result<(), CliError> {
    let manifest = RunManifest::new(
        "samplesize",
        json!({"zeta": a.zeta, "eps": a.eps, "theta": a.theta, "discard": a.discard, "method": format!("{:?}", a.method).to_lowercase()}),
        None,
    );
    let (k, bound) = if a.discard == 0 {
        let k = match a.method {
            MethodArg::Implicit => bounds::implicit_sample_size(a.zeta, a.eps, a.theta)?,
            MethodArg::Chernoff => bounds::chernoff_sample_size(a.zeta, a.eps, a.theta)?,
            MethodArg::Refined => bounds::refined_sample_size(a.zeta, a.eps, a.theta)?,
        };
        (k, bounds::discard_posterior_confidence(a.zeta, k.max(a.zeta), 0, a.eps)?)
    } else {
        let k = match a.method {
            MethodArg::Implicit => bounds::implicit_sample_size_with_discarding(a.zeta, a.eps, a.theta, a.discard)?,
            _ => bounds::explicit_sample_size_with_discarding(a.zeta, a.eps, a.theta, a.discard)?,
        };
        (k, bounds::discard_posterior_confidence(a.zeta, k, a.discard, a.eps)?)
    };
    println!("{k}");
    println!("bound={bound:.6e}");
    finish_manifest(&manifest, mdir)
}

fn cmd_plan(a: &PlanArgs, mdir: Option<&Path>) -> Result<(), CliError> {
    let program = load_program(&a.plan.spec)?;
    let plan = build_plan(&a.plan, &program)?;
    let manifest = RunManifest::new("plan", plan_params(&a.plan), None);
    print!("{}", pretty(&json!({"manifest_id": manifest.id, "plan": plan})));
    finish_manifest(&manifest, mdir)
}

fn cmd_solve(a: &SolveArgs, mdir: Option<&Path>) -> Result<(), CliError> {
    let program = load_program(&a.plan.spec)?;
    let plan = build_plan(&a.plan, &program)?;
    let mut params = plan_params(&a.plan);
    params["discard"] = json!(a.discard.map(|d| format!("{d:?}").to_lowercase()));
    params["validate"] = json!(a.validate);
    params["alpha"] = json!(a.alpha);
    let mut manifest = RunManifest::new("solve", params, Some(a.seed));

    let sample = scenario_core::draw_multisample(&program, &plan, a.seed)?;
    let lp = ScenarioLp::new(&program, &sample)?;
    let original = lp.solve(&lp.full_mask())?;
    let mut out = json!({
        "manifest_id": manifest.id,
        "seed": a.seed,
        "plan": plan,
        "status": original.status,
    });
    if original.status != SolveStatus::Optimal {
        print!("{}", pretty(&out));
        return Err(CliError::Infeasible(format!(
            "no point satisfies the deterministic set and all {} sampled constraints",
            plan.sizes().iter().sum::<usize>()
        )));
    }
    let discards: Vec<usize> = plan.stages.iter().map(|s| s.r as usize).collect();
    let (solution, removal) = if discards.iter().any(|&r| r > 0) {
        let alg = a.discard.map_or(RemovalAlgorithm::Greedy, Into::into);
        let res = discard::remove(alg, &program, &sample, &discards)?;
        let summary = json!({
            "algorithm": res.algorithm,
            "removed": res.removed,
            "original_objective": res.original_objective,
            "objective_improvement": res.objective_improvement,
            "assumption": res.assumption,
        });
        (res.reduced_solution, Some(summary))
    } else {
        (original, None)
    };
    out["objective"] = json!(solution.objective);
    out["x"] = json!(solution.x);
    out["active"] = json!(solution.active);
    if !a.no_support && removal.is_none() {
        out["support_sets"] = json!(scenario_core::support_set(&program, &sample, &solution)?);
    }
    out["duals"] = json!(solution.duals);
    out["removal"] = json!(removal);
    if let Some(n_val) = a.validate {
        let est = program
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| validate::estimate_violation(&solution.x, s, i, n_val, a.alpha, a.seed))
            .collect::<Result<Vec<_>, _>>()?;
        out["validation"] = json!(est);
    }
    let text = pretty(&out);
    match &a.out {
        Some(path) => manifest.write_output(path, &text)?,
        None => print!("{text}"),
    }
    finish_manifest(&manifest, mdir)
}

fn cmd_validate(a: &ValidateArgs, mdir: Option<&Path>) -> Result<(), CliError> {
    let program = load_program(&a.plan.spec)?;
    let mut params = plan_params(&a.plan);
    params["replications"] = json!(a.replications);
    params["n_val"] = json!(a.n_val);
    params["exact"] = json!(a.exact);
    params["point"] = json!(a.point);
    params["alpha"] = json!(a.alpha);
    params["discard"] = json!(a.discard.map(|d| format!("{d:?}").to_lowercase()));
    let mut manifest = RunManifest::new("validate", params, Some(a.seed));

    if let Some(x) = &a.point {
        if x.len() != program.dimension {
            return Err(CliError::Input(format!("--point has {} entries, expected {}", x.len(), program.dimension)));
        }
        let est = program
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| validate::estimate_violation(x, s, i, a.n_val, a.alpha, a.seed))
            .collect::<Result<Vec<_>, _>>()?;
        print!("{}", pretty(&json!({"manifest_id": manifest.id, "estimates": est})));
        return finish_manifest(&manifest, mdir);
    }

    let plan = build_plan(&a.plan, &program)?;
    let method = if a.exact {
        ViolationMethod::Exact { fallback_n_val: a.n_val }
    } else {
        ViolationMethod::MonteCarlo { n_val: a.n_val }
    };
    let opts = SurveyOptions { method, discard: Some(a.discard.map_or(RemovalAlgorithm::Greedy, Into::into)) };
    let survey = validate::violation_survey(&program, &plan, a.replications, a.seed, &opts)?;
    let n = program.stages.len();
    let mut mean = vec![0.0; n];
    let mut count = vec![0u64; n];
    for r in &survey.records {
        mean[r.stage] += r.v_hat;
        count[r.stage] += 1;
    }
    for (m, c) in mean.iter_mut().zip(&count) {
        *m /= (*c).max(1) as f64;
    }
    if let Some(path) = &a.survey {
        manifest.write_output(path, &format!("# manifest={}\n{}", manifest.id, survey.to_csv()))?;
    }
    print!(
        "{}",
        pretty(&json!({
            "manifest_id": manifest.id,
            "replications": survey.replications,
            "infeasible": survey.infeasible,
            "plan": plan,
            "mean_violation": mean,
            "exceed_frequency": survey.exceed_frequency,
        }))
    );
    finish_manifest(&manifest, mdir)
}

fn cmd_cuboid(c: &CuboidCommand, mdir: Option<&Path>) -> Result<(), CliError> {
    match c {
        CuboidCommand::Table1 { theta, out_dir } => {
            let mut manifest = RunManifest::new("cuboid table1", json!({"theta": theta}), None);
            let t = cuboid_bench::run_table1(*theta)?;
            let (a, b) = (t.multi_csv(), t.single_csv());
            if let Some(dir) = out_dir {
                let tag = format!("# manifest={}\n", manifest.id);
                manifest.write_output(&dir.join("table1a.csv"), &(tag.clone() + &a))?;
                manifest.write_output(&dir.join("table1b.csv"), &(tag + &b))?;
                manifest.save(dir)?;
            }
            print!("# multi-stage\n{a}# single-stage\n{b}");
            finish_manifest(&manifest, mdir)
        }
        CuboidCommand::Table2 { reps, seed, theta, n, eps, pairing, direct, out_dir } => {
            let n_list = n.clone().unwrap_or_else(|| TABLE_N.to_vec());
            let eps_list = eps.clone().unwrap_or_else(|| TABLE_EPS.to_vec());
            if n_list.iter().any(|&v| v == 0) {
                return Err(CliError::Input("--n values must be positive".into()));
            }
            let opts = Table2Options {
                replications: *reps,
                seed: *seed,
                pairing: match pairing {
                    PairingArg::Shared => Pairing::Shared,
                    PairingArg::Independent => Pairing::Independent,
                },
                sampler: if *direct { ExtremeSampler::Direct } else { ExtremeSampler::OrderStatistics },
                theta_total: *theta,
            };
            let mut manifest = RunManifest::new(
                "cuboid table2",
                json!({"reps": reps, "theta": theta, "n": n_list, "eps": eps_list, "pairing": opts.pairing, "sampler": opts.sampler}),
                Some(*seed),
            );
            let t = cuboid_bench::run_table2(&n_list, &eps_list, &opts)?;
            if let Some(dir) = out_dir {
                let tag = format!("# manifest={}\n", manifest.id);
                manifest.write_output(&dir.join("table2.csv"), &(tag.clone() + &t.mean_csv()))?;
                manifest.write_output(&dir.join("table2_se.csv"), &(tag.clone() + &t.std_err_csv()))?;
                manifest.write_output(&dir.join("table2_long.csv"), &(tag + &t.long_csv()))?;
                manifest.save(dir)?;
            }
            print!("{}", t.long_csv());
            finish_manifest(&manifest, mdir)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mdir = cli.manifest_dir.as_deref();
    match &cli.command {
        Command::Samplesize(a) => cmd_samplesize(a, mdir),
        Command::Plan(a) => cmd_plan(a, mdir),
        Command::Solve(a) => cmd_solve(a, mdir),
        Command::Validate(a) => cmd_validate(a, mdir),
        Command::Cuboid(c) => cmd_cuboid(c, mdir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = thread_pool(cli.threads);
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
