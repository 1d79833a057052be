//! `memevo`: evolve recurrent networks on CSV time series and summarize the
//! results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use memevo_core::data::{write_fixture, FixtureSpec, NormalizeMode};
use memevo_core::genome::CellType;
use memevo_core::harness::{
    aggregate, collect_stats, emit_tables, fold_data, fold_plan, load_files, load_genome, plot_data, ranking_csv,
    read_report, replay_run, run_experiment, save_genome, RunConfig, RunStats, StdDevMode, RUN_CONFIG_FILE,
};
use memevo_core::islands::{replay_populations, EventLog};
use memevo_core::runtime::parse_replay;
use memevo_core::trainer::{evaluate, genome_weights, Network};

#[derive(Parser)]
#[command(name = "memevo", version, about = "Neuro-evolution of recurrent memory-cell networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a repeated k-fold evolution experiment.
    Evolve(EvolveArgs),
    /// Aggregate run statistics into min/avg/max/correlation tables.
    Stats(StatsArgs),
    /// Rank run types by standard deviations from the mean.
    Rank(RankArgs),
    /// Write the synthetic multivariate fixture.
    Fixtures(FixtureArgs),
    /// Re-execute a run from its recorded completion order.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct EvolveArgs {
    /// Run-config file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    islands: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated cell types, e.g. `lstm,simple`.
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<CellType>>,
    #[arg(long)]
    normalize: Option<NormalizeMode>,
    /// Write the overall best genome here.
    #[arg(long)]
    save_genome: Option<PathBuf>,
    /// Score this genome on every fold instead of evolving.
    #[arg(long)]
    load_genome: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Directory searched recursively for `stats.json`.
    #[arg(long)]
    runs: PathBuf,
    /// Where tables go; defaults to `--runs`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    population_sd: bool,
}

#[derive(Args)]
struct RankArgs {
    /// A `report.json` written by `stats`.
    #[arg(long, conflicts_with = "runs")]
    report: Option<PathBuf>,
    /// Or a directory of runs to aggregate first.
    #[arg(long)]
    runs: Option<PathBuf>,
    #[arg(long)]
    population_sd: bool,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = FixtureSpec::default().files)]
    files: usize,
    #[arg(long, default_value_t = FixtureSpec::default().rows)]
    rows: usize,
    #[arg(long, default_value_t = FixtureSpec::default().columns)]
    columns: usize,
    #[arg(long, default_value_t = FixtureSpec::default().seed)]
    seed: u64,
}

#[derive(Args)]
struct ReplayArgs {
    /// Defaults to the configuration recorded in the run directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory holding `replay.txt` and `events.tsv`.
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    fold: usize,
    #[arg(long, default_value_t = 0)]
    repeat: usize,
}

fn sd_mode(population: bool) -> StdDevMode {
    if population {
        StdDevMode::Population
    } else {
        StdDevMode::Sample
    }
}

fn evolve(args: EvolveArgs) -> Result<bool> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(v) = args.output {
        config.output_dir = v;
    }
    if let Some(v) = args.workers {
        config.n_workers = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.budget {
        config.evolution.islands.generation_budget = v;
    }
    if let Some(v) = args.epochs {
        config.evolution.training.epochs = v;
    }
    if let Some(v) = args.islands {
        config.evolution.islands.n_islands = v;
    }
    if let Some(v) = args.population {
        config.evolution.islands.population_size = v;
    }
    if let Some(v) = args.repeats {
        config.data.repeats = v;
    }
    if let Some(v) = args.cells {
        config.evolution.operators.allowed_cell_types = v;
    }
    if let Some(v) = args.normalize {
        config.data.normalize = v;
    }
    config.validate()?;

    if let Some(path) = args.load_genome {
        return score_genome(&config, &path);
    }

    let quiet = args.quiet;
    let progress = move |fold: usize, repeat: usize, p: &memevo_core::runtime::Progress| {
        if !quiet {
            eprintln!("[fold {fold} repeat {repeat}] {p}");
        }
    };
    let report = run_experiment(&config, Some(&progress))?;
    let mut best: Option<(f64, PathBuf)> = None;
    for run in &report.runs {
        match &run.result {
            Ok(stats) => {
                println!(
                    "fold {} repeat {}: best mse {} ({} hidden, {} edges, {} recurrent) -> {}",
                    run.fold,
                    run.repeat,
                    stats.best_mse,
                    stats.hidden_nodes,
                    stats.edges,
                    stats.recurrent_edges,
                    run.dir.display()
                );
                if best.as_ref().is_none_or(|(b, _)| stats.best_mse < *b) {
                    best = Some((stats.best_mse, run.dir.join("best.rnng")));
                }
            }
            Err(e) => eprintln!("fold {} repeat {}: failed: {e}", run.fold, run.repeat),
        }
    }
    if let (Some(dest), Some((_, src))) = (args.save_genome, best) {
        let genome = load_genome(&src)?;
        save_genome(&dest, &genome)?;
        println!("saved best genome to {}", dest.display());
    }
    Ok(report.failures() == 0)
}

fn score_genome(config: &RunConfig, path: &Path) -> Result<bool> {
    let genome = load_genome(path)?;
    print!("{}", genome.dump());
    let files = load_files(&config.data.paths)?;
    let plan = fold_plan(config, files.len())?;
    let net = Network::compile(&genome)?;
    let weights = genome_weights(&genome);
    for fold in 0..plan.k {
        let data = fold_data(config, &files, &plan, fold)?;
        let mse = evaluate(&net, &weights, &data.validation)?;
        println!("fold {fold}: validation mse {mse}");
    }
    Ok(true)
}

fn stats(args: StatsArgs) -> Result<bool> {
    let runs = collect_stats(&args.runs)?;
    if runs.is_empty() {
        bail!("no stats.json below {}", args.runs.display());
    }
    for events in find_files(&args.runs, "events.tsv")? {
        let text = std::fs::read_to_string(&events)?;
        let log = EventLog::parse(&text).with_context(|| events.display().to_string())?;
        std::fs::write(events.with_file_name("trajectory.tsv"), plot_data(&log))?;
    }
    let report = aggregate(&runs, sd_mode(args.population_sd))?;
    let out = args.out.unwrap_or(args.runs);
    for path in emit_tables(&report, &out)? {
        println!("wrote {}", path.display());
    }
    print_rows(&runs);
    Ok(true)
}

fn print_rows(runs: &[RunStats]) {
    println!("{:<16} {:>4} {:>12}", "run_type", "runs", "best_mse");
    let mut seen: Vec<&str> = Vec::new();
    for r in runs {
        if seen.contains(&r.run_type.as_str()) {
            continue;
        }
        seen.push(&r.run_type);
        let group: Vec<&RunStats> = runs.iter().filter(|s| s.run_type == r.run_type).collect();
        let best = group.iter().map(|s| s.best_mse).fold(f64::INFINITY, f64::min);
        println!("{:<16} {:>4} {:>12.6e}", r.run_type, group.len(), best);
    }
}

fn find_files(root: &Path, name: &str) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == name) {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

fn rank(args: RankArgs) -> Result<bool> {
    let report = match (args.report, args.runs) {
        (Some(path), _) => read_report(&path)?,
        (None, Some(dir)) => aggregate(&collect_stats(&dir)?, sd_mode(args.population_sd))?,
        (None, None) => bail!("pass --report or --runs"),
    };
    if report.ranking.is_empty() {
        bail!("ranking needs at least two run types");
    }
    print!("{}", ranking_csv(&report));
    Ok(true)
}

fn fixtures(args: FixtureArgs) -> Result<bool> {
    let spec = FixtureSpec { files: args.files, rows: args.rows, columns: args.columns, seed: args.seed };
    for path in write_fixture(&args.out, &spec)? {
        println!("{}", path.display());
    }
    Ok(true)
}

fn replay(args: ReplayArgs) -> Result<bool> {
    let config_path = args.config.unwrap_or_else(|| args.run_dir.join(RUN_CONFIG_FILE));
    let config = RunConfig::load(&config_path)?;
    let steps_path = args.run_dir.join("replay.txt");
    let steps = parse_replay(&std::fs::read_to_string(&steps_path)?).map_err(anyhow::Error::msg)?;
    let report = replay_run(&config, args.fold, args.repeat, &steps)?;
    let recorded_text = std::fs::read_to_string(args.run_dir.join("events.tsv"))?;
    let recorded = EventLog::parse(&recorded_text)?;
    let islands = &config.evolution.islands;
    let expected = replay_populations(&recorded, islands.n_islands, islands.population_size);
    let got = replay_populations(&report.log, islands.n_islands, islands.population_size);
    let identical = report.log.to_tsv() == recorded_text;
    println!("replayed {} steps; best mse {:?}", steps.len(), report.best_fitness());
    println!("event log identical: {identical}");
    println!("final populations identical: {}", expected == got);
    Ok(expected == got)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve(a) => evolve(a),
        Command::Stats(a) => stats(a),
        Command::Rank(a) => rank(a),
        Command::Fixtures(a) => fixtures(a),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
