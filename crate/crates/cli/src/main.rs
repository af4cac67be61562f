use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hmimo_isac::config::{dbm_to_watts, ScenarioConfig, SweepAxis};
use hmimo_isac::experiment::{run_experiment, ExperimentPlan, TrialResult};
use hmimo_isac::optimizers::Algorithm;
use hmimo_isac::par::Execution;
use hmimo_isac::records::{self, StatsReport};

#[derive(Parser)]
#[command(name = "hmimo", version, about = "Holographic MIMO RS-NOMA ISAC batch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo plan of a scenario and write results plus statistics.
    Run(RunArgs),
    /// Run the plan once per value of a sweep axis.
    Sweep(SweepArgs),
    /// Recompute the statistics report from a result file.
    Stats(StatsArgs),
    /// Check a configuration and print derived quantities.
    Validate(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML scenario file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: desk_small, desk_correlated or full_scale.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    out: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of hao_sca, e_wmmse, fp, conv_noma.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    /// Worker threads; 0 picks the pool default, 1 runs sequentially.
    #[arg(long, env = "HMIMO_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// alpha, antennas, phase_noise (alias impairment), irr or csi_eps.
    #[arg(long)]
    axis: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct StatsArgs {
    /// Result file (.csv or .kv).
    #[arg(long)]
    results: PathBuf,
    /// Second result file compared with Welch tests.
    #[arg(long)]
    against: Option<PathBuf>,
    /// Reference algorithm for the paired comparisons.
    #[arg(long, default_value = "hao_sca")]
    reference: Algorithm,
    #[arg(long)]
    out: PathBuf,
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig> {
    let cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        (None, None) => ScenarioConfig::preset("desk_small")?,
    };
    Ok(cfg)
}

fn build_plan(args: &PlanArgs) -> Result<ExperimentPlan> {
    let mut cfg = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.experiment.trials = trials;
    }
    if let Some(algs) = &args.algorithms {
        cfg.experiment.algorithms = algs.clone();
    }
    cfg.validate()?;
    Ok(ExperimentPlan::from_config(&cfg))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_report(dir: &Path, report: &StatsReport) -> Result<()> {
    records::write_summary_csv(create(dir, "stats_summary.csv")?, &report.summary)?;
    records::write_tests_csv(create(dir, "stats_tests.csv")?, &report.tests)?;
    records::write_plot_data(create(dir, "plot_data.csv")?, &report.summary)?;
    Ok(())
}

fn reference_for(rows: &[TrialResult], wanted: Algorithm) -> Algorithm {
    if rows.iter().any(|r| r.algorithm == wanted) {
        wanted
    } else {
        rows.first().map(|r| r.algorithm).unwrap_or(wanted)
    }
}

fn print_summary(rows: &[TrialResult], report: &StatsReport) {
    println!("rows: {}", rows.len());
    println!("failed: {}", report.failed);
    println!("non_converged: {}", report.non_converged);
    for s in report.summary.iter().filter(|s| s.metric == "sum_rate") {
        println!(
            "sweep {} x={} {}: sum_rate mean {:.4} [{:.4}, {:.4}] n={}",
            s.sweep_index, s.sweep_value, s.algorithm, s.mean, s.ci95.0, s.ci95.1, s.n
        );
    }
}

fn execute(plan: &ExperimentPlan, threads: usize, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let rows = run_experiment(plan, Execution::from_threads(threads))?;
    records::write_results_csv(create(out, "results.csv")?, &rows)?;
    records::write_results_kv(create(out, "results.kv")?, &rows)?;
    let mut cfg = plan.config.clone();
    cfg.experiment.sweep_axis = plan.sweep_axis;
    cfg.experiment.sweep_values = plan.sweep_values.clone();
    create(out, "config.toml")?.write_all(cfg.to_toml_string().as_bytes())?;
    let report = records::compute_stats(&rows, reference_for(&rows, Algorithm::HaoSca));
    write_report(out, &report)?;
    print_summary(&rows, &report);
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let plan = build_plan(&args.plan)?;
    execute(&plan, args.plan.threads, &args.plan.out)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut plan = build_plan(&args.plan)?;
    plan.sweep_axis = SweepAxis::parse(&args.axis)?;
    if plan.sweep_axis == SweepAxis::None {
        bail!("sweep needs an axis other than `none`");
    }
    plan.sweep_values = args.values;
    execute(&plan, args.plan.threads, &args.plan.out)
}

fn stats(args: StatsArgs) -> Result<()> {
    let rows = records::load_results(&args.results).with_context(|| format!("reading {}", args.results.display()))?;
    fs::create_dir_all(&args.out)?;
    let mut report = records::compute_stats(&rows, reference_for(&rows, args.reference));
    if let Some(other) = &args.against {
        let against = records::load_results(other).with_context(|| format!("reading {}", other.display()))?;
        report.tests.extend(records::compare_files(&rows, &against));
    }
    write_report(&args.out, &report)?;
    print_summary(&rows, &report);
    Ok(())
}

fn validate(args: ScenarioArgs) -> Result<()> {
    let cfg = load_scenario(&args)?;
    let geom = cfg.array_geometry()?;
    println!("config: ok");
    println!("antennas = {}", geom.m_total());
    println!("wavelength_m = {}", cfg.wavelength());
    println!("aperture_m = {}", geom.aperture());
    println!("rayleigh_distance = {:.3} m", geom.rayleigh_distance());
    println!("p_max_w = {}", dbm_to_watts(cfg.powers.p_max_dbm));
    println!("sigma_n2_w = {:e}", dbm_to_watts(cfg.powers.sigma_n_dbm));
    println!("sigma_s2_w = {:e}", dbm_to_watts(cfg.powers.sigma_s_dbm));
    println!(
        "users = {}, targets = {}, groups = {}, trials = {}",
        cfg.population.users, cfg.population.targets, cfg.population.groups, cfg.experiment.trials
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Stats(a) => stats(a),
        Command::Validate(a) => validate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
