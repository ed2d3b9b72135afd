//! Command-line interface: solve, evaluate, compare, simulate-frequency and
//! export-conic.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::eval::{audit_frequency, compare_variants, evaluate_solution, paired_scenarios, CompareConfig};
use crate::freq::{simulate_swing, FrequencySnapshot, RK4_STEP, SIM_HORIZON};
use crate::gasnet::{trace_csv, PccpParams};
use crate::instance::{load_instance, IegsInstance};
use crate::optmodel::conic::{export_conic, import_conic};
use crate::scheduler::{
    assemble, prepare, run_algorithm1, verify_solution, ExitCondition, ModelVariant, RunParams, ScheduleError, ScheduleSolution, Stage,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_LIMIT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Run settings that may also come from a JSON file given with `--config`.
/// Command-line flags take precedence over file values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub instance: Option<PathBuf>,
    pub variant: Option<String>,
    pub epsilon: Option<f64>,
    pub in_samples: Option<usize>,
    pub out_samples: Option<usize>,
    pub moment_samples: Option<usize>,
    pub seed: Option<u64>,
    pub pccp: Option<PccpParams>,
    pub mip_gap: Option<f64>,
    pub time_limit: Option<f64>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(
    name = "drfcuc",
    version,
    about = "Distributionally robust frequency-constrained unit commitment for coupled electricity and gas systems"
)]
pub struct Cli {
    /// MILP backend (default: $DRFCUC_BACKEND, else highs).
    #[arg(long, global = true, env = "DRFCUC_BACKEND")]
    pub backend: Option<String>,
    /// Log level: error, warn, info, debug.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Schedule one variant and write the solution and iteration trace.
    Solve(SolveArgs),
    /// Score a saved solution out of sample and audit frequency and gas.
    Evaluate(EvaluateArgs),
    /// Solve a grid of variants and sample sizes on a shared out-of-sample set.
    Compare(CompareArgs),
    /// Simulate each hour's contingency for a saved solution.
    SimulateFrequency(SimulateArgs),
    /// Write the relaxed problem of a variant in the conic text format.
    ExportConic(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Instance file (JSON).
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Joint violation budget ε, dimensionless in (0, 1) (default: instance value).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Seed of the scenario stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Estimate moments from this many in-sample draws instead of the forecast.
    #[arg(long)]
    pub moment_samples: Option<usize>,
    /// Relative MIP gap, dimensionless in [0, 1) (default 0.01).
    #[arg(long)]
    pub mip_gap: Option<f64>,
    /// Time limit per backend call, seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Weymouth gap tolerance, relative (default 0.001).
    #[arg(long)]
    pub eps_gap: Option<f64>,
    /// Initial slack penalty, cost per (pressure unit)² (default 0.02).
    #[arg(long)]
    pub rho0: Option<f64>,
    /// Largest slack penalty, cost per (pressure unit)² (default 1000).
    #[arg(long)]
    pub rho_max: Option<f64>,
    /// Penalty growth factor per iteration, dimensionless (default 1.5).
    #[arg(long)]
    pub growth: Option<f64>,
    /// Largest number of penalized iterations (default 50).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Variant: saa[:N], dr-m, dr-u, dr-m-i[:ε], dr-u-i[:ε], no-fc, no-ngs, no-vi.
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Solution file written by `solve` (JSON).
    #[arg(long)]
    pub solution: PathBuf,
    /// Draws reserved for in-sample use ahead of the out-of-sample block.
    #[arg(long)]
    pub in_samples: Option<usize>,
    /// Out-of-sample draws for the violation rate.
    #[arg(long)]
    pub out_samples: Option<usize>,
    /// Skip the gas feasibility audit.
    #[arg(long)]
    pub no_gas_audit: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', default_value = "saa,dr-m,dr-u")]
    pub variants: Vec<String>,
    /// Comma-separated in-sample sizes, draws (empty: instance moments).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Draws reserved for in-sample use.
    #[arg(long)]
    pub in_samples: Option<usize>,
    /// Out-of-sample draws shared by every row.
    #[arg(long)]
    pub out_samples: Option<usize>,
    /// Worker threads for independent rows.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Skip the gas feasibility audit.
    #[arg(long)]
    pub no_gas_audit: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Solution file written by `solve` (JSON).
    #[arg(long)]
    pub solution: PathBuf,
    /// Also write the full trajectory of this hour (0-based).
    #[arg(long)]
    pub hour: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Variant, as for `solve`.
    #[arg(long)]
    pub variant: Option<String>,
    /// Output file (default: <out>/model.conic).
    #[arg(long)]
    pub file: Option<PathBuf>,
}

struct Failure {
    code: i32,
    message: String,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: EXIT_ERROR, message: e.to_string() }
    }
}

fn fail(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_ERROR, message: message.into() }
}

struct Resolved {
    config: RunConfig,
    instance: IegsInstance,
    params: RunParams,
    out: PathBuf,
}

fn resolve(common: &CommonArgs, backend: &Option<String>, variant: Option<&String>) -> Result<Resolved, Failure> {
    let mut config: RunConfig = match &common.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(|e| fail(format!("config {}: {e}", p.display())))?)?,
        None => RunConfig::default(),
    };
    macro_rules! take {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                config.$field = Some(v);
            }
        };
    }
    take!(instance, common.instance.clone());
    take!(variant, variant.cloned());
    take!(epsilon, common.epsilon);
    take!(seed, common.seed);
    take!(moment_samples, common.moment_samples);
    take!(mip_gap, common.mip_gap);
    take!(time_limit, common.time_limit);
    take!(output, common.out.clone());
    let mut pccp = config.pccp.clone().unwrap_or_default();
    if let Some(v) = common.eps_gap {
        pccp.eps_gap = v;
    }
    if let Some(v) = common.rho0 {
        pccp.rho0 = v;
    }
    if let Some(v) = common.rho_max {
        pccp.rho_max = v;
    }
    if let Some(v) = common.growth {
        pccp.growth = v;
    }
    if let Some(v) = common.max_iter {
        pccp.max_iter = v;
    }
    config.pccp = Some(pccp.clone());

    let path = config.instance.clone().ok_or_else(|| fail("no instance given (use --instance or the config file)"))?;
    let instance = load_instance(&path)?;
    let defaults = RunParams::default();
    let params = RunParams {
        epsilon: config.epsilon,
        seed: config.seed.unwrap_or(defaults.seed),
        moment_samples: config.moment_samples,
        pccp,
        mip_gap: config.mip_gap.unwrap_or(defaults.mip_gap),
        time_limit: config.time_limit,
        backend: backend.clone(),
    };
    let out = config.output.clone().unwrap_or_else(|| PathBuf::from("."));
    Ok(Resolved { config, instance, params, out })
}

fn parse_variant(config: &RunConfig) -> Result<ModelVariant, Failure> {
    config.variant.as_deref().unwrap_or("dr-m").parse::<ModelVariant>().map_err(fail)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn load_solution(path: &Path) -> Result<ScheduleSolution, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fail(format!("solution {}: {e}", path.display())))?;
    Ok(ScheduleSolution::from_json(&text)?)
}

fn cmd_solve(args: &SolveArgs, backend: &Option<String>) -> Result<i32, Failure> {
    let r = resolve(&args.common, backend, args.variant.as_ref())?;
    let variant = parse_variant(&r.config)?;
    let run = match run_algorithm1(&r.instance, &variant, &r.params) {
        Ok(run) => run,
        Err(e @ ScheduleError::Infeasible { .. }) => return Err(Failure { code: EXIT_INFEASIBLE, message: e.to_string() }),
        Err(e @ ScheduleError::NoIncumbent(_)) => return Err(Failure { code: EXIT_LIMIT, message: e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    let sol = &run.solution;
    write(&r.out.join("solution.json"), &sol.to_json())?;
    write(&r.out.join("pccp_trace.csv"), &trace_csv(&sol.pccp))?;
    let check = verify_solution(&r.instance, sol, &run.context);
    println!("variant        {}", variant);
    println!("total cost     {:.2}", sol.cost.total);
    println!("exit           {:?}", sol.exit);
    println!("solves         {}", sol.stats.iterations);
    if let Some(g) = sol.max_gap {
        println!("weymouth gap   {g:.3e}");
    }
    println!("re-check       {:.2e}", check.max_violation);
    println!("wrote          {}", r.out.join("solution.json").display());
    Ok(match sol.exit {
        ExitCondition::Converged => EXIT_OK,
        ExitCondition::IterationLimit | ExitCondition::SolverLimit => EXIT_LIMIT,
    })
}

fn cmd_evaluate(args: &EvaluateArgs, backend: &Option<String>) -> Result<i32, Failure> {
    let r = resolve(&args.common, backend, None)?;
    let sol = load_solution(&args.solution)?;
    let n_in = args.in_samples.or(r.config.in_samples).unwrap_or(10_000);
    let n_out = args.out_samples.or(r.config.out_samples).unwrap_or(10_000);
    let (_, out) = paired_scenarios(&r.instance, r.params.seed, n_in, n_out);
    let backend = r.params.backend()?;
    let audit = (!args.no_gas_audit).then_some((&r.params.pccp, backend.as_ref()));
    let report = evaluate_solution(&sol, &r.instance, &out, audit)?;
    write(&r.out.join("evaluation.json"), &serde_json::to_string_pretty(&report)?)?;
    println!("variant        {}", report.variant);
    println!("total cost     {:.2}", sol.cost.total);
    println!("EJVP           {:.2} % over {} draws", report.ejvp.unwrap_or(f64::NAN), n_out);
    println!("frequency      {}", if report.frequency_pass == Some(true) { "pass" } else { "FAIL" });
    if let Some(g) = report.gas {
        println!("gas            {g:?}");
    }
    Ok(EXIT_OK)
}

fn cmd_compare(args: &CompareArgs, backend: &Option<String>) -> Result<i32, Failure> {
    let r = resolve(&args.common, backend, None)?;
    let variants: Vec<ModelVariant> = args.variants.iter().map(|v| v.parse::<ModelVariant>()).collect::<Result<_, _>>().map_err(fail)?;
    let config = CompareConfig {
        params: r.params.clone(),
        in_samples: args.in_samples.or(r.config.in_samples).unwrap_or(10_000),
        out_samples: args.out_samples.or(r.config.out_samples).unwrap_or(10_000),
        gas_audit: !args.no_gas_audit,
        threads: args.threads.max(1),
    };
    let table = compare_variants(&r.instance, &variants, &args.sizes, &config)?;
    table.write(&r.out)?;
    print!("{}", table.to_text());
    Ok(EXIT_OK)
}

fn cmd_simulate(args: &SimulateArgs, backend: &Option<String>) -> Result<i32, Failure> {
    let r = resolve(&args.common, backend, None)?;
    let sol = load_solution(&args.solution)?;
    let audit = audit_frequency(&sol, &r.instance);
    write(&r.out.join("frequency_by_hour.csv"), &audit.to_csv())?;
    if let Some(t) = args.hour {
        if t >= r.instance.horizon {
            return Err(fail(format!("hour {t} is outside the {}-hour horizon", r.instance.horizon)));
        }
        let snap = FrequencySnapshot::from_schedule(
            &r.instance,
            t,
            &sol.committed_at(t),
            &sol.vi_at(t),
            &sol.gen_reserve_at(t),
            &sol.wind_reserve_at(t),
        );
        let tr = simulate_swing(&snap, &r.instance.frequency, RK4_STEP, SIM_HORIZON)?;
        write(&r.out.join(format!("trajectory_h{t}.csv")), &tr.to_csv())?;
    }
    let failing = audit.failing_hours();
    println!("hours passing  {}/{}", audit.hours.len() - failing.len(), audit.hours.len());
    if !failing.is_empty() {
        println!("failing hours  {failing:?}");
    }
    Ok(EXIT_OK)
}

fn cmd_export(args: &ExportArgs, backend: &Option<String>) -> Result<i32, Failure> {
    let r = resolve(&args.common, backend, args.variant.as_ref())?;
    let variant = parse_variant(&r.config)?;
    let ctx = prepare(&r.instance, &variant, &r.params)?;
    let model = assemble(&r.instance, &variant, &ctx, Stage::Relaxed)?.model;
    let path = args.file.clone().unwrap_or_else(|| r.out.join("model.conic"));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    export_conic(&model, &path)?;
    let back = import_conic(&path)?;
    if back.checksum() != model.checksum() {
        return Err(fail("re-imported model differs from the exported one"));
    }
    println!("wrote {} ({} variables, {} rows, {} cones)", path.display(), model.num_vars(), model.rows.len(), model.socs.len());
    Ok(EXIT_OK)
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log).try_init();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, &cli.backend),
        Command::Evaluate(a) => cmd_evaluate(a, &cli.backend),
        Command::Compare(a) => cmd_compare(a, &cli.backend),
        Command::SimulateFrequency(a) => cmd_simulate(a, &cli.backend),
        Command::ExportConic(a) => cmd_export(a, &cli.backend),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn missing_instance_is_an_error() {
        assert_eq!(run_from(["drfcuc", "solve", "--instance", "/nonexistent/x.json"]), EXIT_ERROR);
    }
}
