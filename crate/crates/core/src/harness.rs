//! Run configuration, repeated k-fold experiments, and the statistics and
//! ranking tables built from their results.
//!
//! # Run-config file
//!
//! TOML, `version = 1`. Every section except `[data]` is optional.
//!
//! ```toml
//! version = 1
//! seed = 2019
//! output_dir = "runs"          # overridden by $MEMEVO_OUTPUT_DIR
//! n_workers = 4
//! cell_types = ["lstm", "simple"]
//!
//! [data]
//! paths = ["fixture/synthetic_00.csv", "fixture/synthetic_01.csv"]
//! target = "target"
//! normalize = "minmax"        # or "none"
//! fold_size = 2
//! repeats = 1
//!
//! [evolution.islands]
//! n_islands = 4
//! population_size = 5
//! generation_budget = 300
//!
//! [evolution.training]
//! epochs = 10
//! batch = { mode = "window", length = 50 }
//!
//! [evolution.operators]
//! p_mutation = 0.7
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{
    folds_for_size, load_csv, make_folds, DataError, FoldData, FoldPlan, NormalizeMode, TimeSeriesFile, TimeSeriesSet,
};
use crate::genome::{self, CellType, RnnGenome};
use crate::islands::EventLog;
use crate::runtime::{
    derive_seed, format_replay, replay, run_with, EvolutionConfig, Progress, ReplayStep, RunOptions, RunReport,
    RuntimeError, TrainingEvaluator,
};

pub const CONFIG_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "MEMEVO_OUTPUT_DIR";
/// Effective configuration saved next to each run's outputs.
pub const RUN_CONFIG_FILE: &str = "config.toml";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("no run types to report")]
    EmptyReport,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |error| HarnessError::Io { path: path.to_path_buf(), error }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub paths: Vec<PathBuf>,
    pub target: String,
    #[serde(default = "default_normalize")]
    pub normalize: NormalizeMode,
    #[serde(default = "default_fold_size")]
    pub fold_size: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_normalize() -> NormalizeMode {
    NormalizeMode::Minmax
}

fn default_fold_size() -> usize {
    2
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub n_workers: usize,
    /// Overrides `evolution.operators.allowed_cell_types` when present.
    #[serde(default)]
    pub cell_types: Option<Vec<CellType>>,
    /// Runs folds and repeats on separate threads.
    #[serde(default)]
    pub concurrent_runs: bool,
    pub data: DataConfig,
    #[serde(default)]
    pub evolution: EvolutionConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_workers() -> usize {
    1
}

impl RunConfig {
    pub fn new(data: DataConfig) -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            output_dir: default_output_dir(),
            n_workers: 1,
            cell_types: None,
            concurrent_runs: false,
            data,
            evolution: EvolutionConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if config.version != CONFIG_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                config.version
            )));
        }
        if let Some(cells) = config.cell_types.take() {
            config.evolution.operators.allowed_cell_types = cells;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut config.data.paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.evolution.validate().map_err(HarnessError::Config)?;
        if self.n_workers == 0 {
            return Err(HarnessError::Config("n_workers must be at least 1".into()));
        }
        if self.data.fold_size == 0 || self.data.repeats == 0 {
            return Err(HarnessError::Config("fold_size and repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub fn run_type(&self) -> String {
        run_type_label(&self.evolution.operators.allowed_cell_types)
    }

    /// Configured output directory unless the override variable is set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| self.output_dir.clone())
    }
}

/// `"all"` for every cell type, `"<cell>"` or `"<cell>+simple"` for the
/// single-memory-cell types, `+`-joined names otherwise.
pub fn run_type_label(cells: &[CellType]) -> String {
    let mut set: Vec<CellType> = cells.to_vec();
    set.sort_by_key(|c| c.code());
    set.dedup();
    if set.len() == CellType::ALL.len() {
        return "all".into();
    }
    let memory: Vec<&CellType> = set.iter().filter(|c| **c != CellType::Simple).collect();
    let has_simple = set.contains(&CellType::Simple);
    match (memory.as_slice(), has_simple) {
        ([m], false) => m.name().into(),
        ([m], true) => format!("{}+simple", m.name()),
        _ => set.iter().map(|c| c.name()).collect::<Vec<_>>().join("+"),
    }
}

/// The eleven standard run types: each memory cell alone, each with simple
/// neurons, and all node types together.
pub fn standard_run_types() -> Vec<(String, Vec<CellType>)> {
    let mut out = Vec::with_capacity(11);
    for m in CellType::MEMORY {
        out.push((run_type_label(&[m]), vec![m]));
    }
    for m in CellType::MEMORY {
        out.push((run_type_label(&[m, CellType::Simple]), vec![CellType::Simple, m]));
    }
    out.push(("all".into(), CellType::ALL.to_vec()));
    out
}

/// Summary of one evolution run, keyed by its best genome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub run_type: String,
    pub fold: usize,
    pub repeat: usize,
    pub seed: u64,
    pub best_mse: f64,
    pub edges: usize,
    pub recurrent_edges: usize,
    pub hidden_nodes: usize,
    pub cell_counts: BTreeMap<String, usize>,
    pub generated: usize,
    pub evaluated: usize,
    pub inserted: usize,
    pub failed: usize,
}

impl RunStats {
    pub fn from_report(run_type: &str, fold: usize, repeat: usize, seed: u64, report: &RunReport) -> Option<Self> {
        let best = report.best_genome.as_ref()?;
        Some(Self {
            run_type: run_type.to_string(),
            fold,
            repeat,
            seed,
            best_mse: best.fitness.value()?,
            edges: best.enabled_edge_count(),
            recurrent_edges: best.enabled_recurrent_edge_count(),
            hidden_nodes: best.enabled_hidden_count(),
            cell_counts: structure_cells(best),
            generated: report.generated,
            evaluated: report.evaluated,
            inserted: report.inserted,
            failed: report.failed,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialize");
        s.push('\n');
        s
    }
}

/// Enabled hidden nodes per cell type.
fn structure_cells(genome: &RnnGenome) -> BTreeMap<String, usize> {
    CellType::ALL
        .iter()
        .map(|&c| {
            let n = genome.nodes.iter().filter(|n| n.enabled && n.is_hidden() && n.cell_type() == c).count();
            (c.name().to_string(), n)
        })
        .collect()
}

/// Seed of one (fold, repeat) run.
pub fn run_seed(base: u64, fold: usize, repeat: usize) -> u64 {
    derive_seed(&[base, fold as u64, repeat as u64])
}

/// Every file a run leaves behind in `dir`, apart from [`RUN_CONFIG_FILE`].
pub fn write_run_outputs(dir: &Path, stats: Option<&RunStats>, report: &RunReport) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))
    };
    write("events.tsv", report.log.to_tsv().as_bytes())?;
    write("replay.txt", format_replay(&report.replay).as_bytes())?;
    write("trajectory.tsv", plot_data(&report.log).as_bytes())?;
    if let Some(stats) = stats {
        write("stats.json", stats.to_json().as_bytes())?;
    }
    if let Some(best) = &report.best_genome {
        write("best.rnng", &genome::serialize(best))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub fold: usize,
    pub repeat: usize,
    pub seed: u64,
    pub dir: PathBuf,
    pub result: Result<RunStats, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub run_type: String,
    pub output_dir: PathBuf,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count()
    }

    pub fn stats(&self) -> Vec<RunStats> {
        self.runs.iter().filter_map(|r| r.result.as_ref().ok().cloned()).collect()
    }
}

pub fn load_files(paths: &[PathBuf]) -> Result<Vec<TimeSeriesFile>, HarnessError> {
    paths.iter().map(|p| load_csv(p).map_err(HarnessError::from)).collect()
}

/// Fold assignment of the configured files.
pub fn fold_plan(config: &RunConfig, n_files: usize) -> Result<FoldPlan, HarnessError> {
    let k = folds_for_size(n_files, config.data.fold_size);
    Ok(make_folds(n_files, k, config.seed)?)
}

/// Normalized frames of one fold.
pub fn fold_data(
    config: &RunConfig,
    files: &[TimeSeriesFile],
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldData, HarnessError> {
    let pick = |ids: Vec<usize>| ids.into_iter().map(|i| files[i].clone()).collect::<Vec<_>>();
    Ok(TimeSeriesSet::prepare_fold(
        &pick(plan.training_files(fold)),
        &pick(plan.validation_files(fold)),
        &config.data.target,
        config.data.normalize,
    )?)
}

/// Re-executes one run of an experiment from its recorded master order.
pub fn replay_run(
    config: &RunConfig,
    fold: usize,
    repeat: usize,
    steps: &[ReplayStep],
) -> Result<RunReport, HarnessError> {
    let files = load_files(&config.data.paths)?;
    let plan = fold_plan(config, files.len())?;
    let data = fold_data(config, &files, &plan, fold)?;
    let n_inputs = data.input_columns.len();
    let evaluator = TrainingEvaluator { data: Arc::new(data), config: config.evolution.training.clone() };
    Ok(replay(n_inputs, &config.evolution, run_seed(config.seed, fold, repeat), &evaluator, steps)?)
}

/// Runs `repeats × folds` evolutions. Each writes its outputs under
/// `<output>/<run type>/fold<f>_rep<r>/`; failed runs are recorded and the
/// experiment carries on.
pub fn run_experiment(
    config: &RunConfig,
    progress: Option<&(dyn Fn(usize, usize, &Progress) + Sync)>,
) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let files = load_files(&config.data.paths)?;
    let run_type = config.run_type();
    let output_dir = config.resolved_output_dir();
    let plan = fold_plan(config, files.len())?;

    let mut recorded = config.clone();
    recorded.output_dir = output_dir.clone();
    for p in &mut recorded.data.paths {
        *p = fs::canonicalize(&*p).map_err(io_err(p))?;
    }
    let recorded = &recorded;

    let jobs: Vec<(usize, usize)> = (0..config.data.repeats).flat_map(|r| (0..plan.k).map(move |f| (f, r))).collect();
    let one = |&(fold, repeat): &(usize, usize)| -> RunRecord {
        let seed = run_seed(config.seed, fold, repeat);
        let dir = output_dir.join(&run_type).join(format!("fold{fold}_rep{repeat}"));
        let result = (|| -> Result<RunStats, HarnessError> {
            let data = fold_data(config, &files, &plan, fold)?;
            let n_inputs = data.input_columns.len();
            let evaluator =
                Arc::new(TrainingEvaluator { data: Arc::new(data), config: config.evolution.training.clone() });
            let mut report_progress = |p: &Progress| {
                if let Some(cb) = progress {
                    cb(fold, repeat, p);
                }
            };
            let options =
                RunOptions { n_workers: config.n_workers, progress: Some(&mut report_progress), progress_every: 50 };
            let report = run_with(n_inputs, &config.evolution, seed, evaluator, options)?;
            let stats = RunStats::from_report(&run_type, fold, repeat, seed, &report);
            write_run_outputs(&dir, stats.as_ref(), &report)?;
            let path = dir.join(RUN_CONFIG_FILE);
            fs::write(&path, recorded.to_toml()).map_err(io_err(&path))?;
            stats.ok_or_else(|| HarnessError::Config("run produced no evaluated genome".into()))
        })();
        RunRecord { fold, repeat, seed, dir: dir.clone(), result: result.map_err(|e| e.to_string()) }
    };

    let runs = if config.concurrent_runs {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs.iter().map(|job| s.spawn(move || one(job))).collect();
            handles.into_iter().map(|h| h.join().expect("run thread")).collect()
        })
    } else {
        jobs.iter().map(one).collect()
    };
    Ok(ExperimentReport { run_type, output_dir, runs })
}

/// `evaluated<TAB>best_mse` rows: one before the first insertion and one
/// after every insertion.
pub fn plot_data(log: &EventLog) -> String {
    let mut out = String::from("evaluated\tbest_mse\n");
    for (n, best) in log.best_trajectory() {
        out.push_str(&format!("{n}\t{best}\n"));
    }
    out
}

/// Sample Pearson correlation; `None` when lengths differ, fewer than two
/// points, or either series is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdDevMode {
    #[default]
    Sample,
    Population,
}

fn std_dev(xs: &[f64], mode: StdDevMode) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    let denom = match mode {
        StdDevMode::Sample => n - 1.0,
        StdDevMode::Population => n,
    };
    if denom <= 0.0 {
        0.0
    } else {
        (ss / denom).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub run_type: String,
    /// One z-score per metric.
    pub scores: Vec<f64>,
    pub combined: f64,
}

/// Standard deviations from the mean per metric, averaged per run type and
/// sorted ascending (lower is better). A metric with zero spread scores 0.
pub fn deviation_ranking(metrics: &[(String, Vec<f64>)], mode: StdDevMode) -> Vec<RankEntry> {
    if metrics.is_empty() {
        return Vec::new();
    }
    let n_metrics = metrics[0].1.len();
    let mut columns = vec![Vec::with_capacity(metrics.len()); n_metrics];
    for (_, values) in metrics {
        assert_eq!(values.len(), n_metrics, "every run type needs the same metrics");
        for (c, &v) in columns.iter_mut().zip(values) {
            c.push(v);
        }
    }
    let stats: Vec<(f64, f64)> =
        columns.iter().map(|c| (c.iter().sum::<f64>() / c.len() as f64, std_dev(c, mode))).collect();
    let mut entries: Vec<RankEntry> = metrics
        .iter()
        .map(|(name, values)| {
            let scores: Vec<f64> = values
                .iter()
                .zip(&stats)
                .map(|(&v, &(mean, sd))| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
                .collect();
            let combined = if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 };
            RankEntry { run_type: name.clone(), scores, combined }
        })
        .collect();
    entries.sort_by(|a, b| a.combined.total_cmp(&b.combined));
    entries
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
    /// Correlation with best MSE across runs, when defined. Always `None`
    /// on the MSE summary itself.
    pub corr: Option<f64>,
}

impl MetricSummary {
    fn of(values: &[f64], mse: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let avg = (values.iter().sum::<f64>() / values.len() as f64).clamp(min, max);
        Self { min, avg, max, corr: pearson(values, mse) }
    }
}

pub const STRUCTURE_METRICS: [&str; 3] = ["edges", "recurrent_edges", "hidden_nodes"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTypeRow {
    pub run_type: String,
    pub runs: usize,
    pub mse: MetricSummary,
    /// Keyed by [`STRUCTURE_METRICS`] then `cell:<name>`.
    pub structure: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: Vec<RunTypeRow>,
    pub std_dev_mode: StdDevMode,
    /// Ranked on min, avg and max best MSE.
    pub ranking: Vec<RankEntry>,
}

/// Groups run statistics by run type (in first-seen order) and summarizes.
pub fn aggregate(stats: &[RunStats], mode: StdDevMode) -> Result<AggregateReport, HarnessError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&RunStats>> = BTreeMap::new();
    for s in stats {
        if !groups.contains_key(&s.run_type) {
            order.push(s.run_type.clone());
        }
        groups.entry(s.run_type.clone()).or_default().push(s);
    }
    if order.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let rows: Vec<RunTypeRow> = order
        .iter()
        .map(|name| {
            let runs = &groups[name];
            let mse: Vec<f64> = runs.iter().map(|r| r.best_mse).collect();
            let mut structure = BTreeMap::new();
            let column = |f: &dyn Fn(&RunStats) -> usize| runs.iter().map(|r| f(r) as f64).collect::<Vec<f64>>();
            structure.insert("edges".to_string(), MetricSummary::of(&column(&|r| r.edges), &mse));
            structure.insert("recurrent_edges".to_string(), MetricSummary::of(&column(&|r| r.recurrent_edges), &mse));
            structure.insert("hidden_nodes".to_string(), MetricSummary::of(&column(&|r| r.hidden_nodes), &mse));
            for c in CellType::ALL {
                let values = column(&|r| r.cell_counts.get(c.name()).copied().unwrap_or(0));
                structure.insert(format!("cell:{}", c.name()), MetricSummary::of(&values, &mse));
            }
            let mse = MetricSummary { corr: None, ..MetricSummary::of(&mse, &mse) };
            RunTypeRow { run_type: name.clone(), runs: runs.len(), mse, structure }
        })
        .collect();
    let ranking = if rows.len() >= 2 {
        let metrics: Vec<(String, Vec<f64>)> =
            rows.iter().map(|r| (r.run_type.clone(), vec![r.mse.min, r.mse.avg, r.mse.max])).collect();
        deviation_ranking(&metrics, mode)
    } else {
        Vec::new()
    };
    Ok(AggregateReport { rows, std_dev_mode: mode, ranking })
}

fn fmt_corr(c: Option<f64>) -> String {
    c.map_or_else(String::new, |v| v.to_string())
}

/// Comma-separated table: one row per run type, `min,avg,max,corr` per
/// metric.
pub fn table_csv(report: &AggregateReport) -> String {
    let metric_names: Vec<String> =
        report.rows.first().map(|r| r.structure.keys().cloned().collect()).unwrap_or_default();
    let mut header = vec!["run_type".to_string(), "runs".into(), "mse_min".into(), "mse_avg".into(), "mse_max".into()];
    for m in &metric_names {
        for part in ["min", "avg", "max", "corr"] {
            header.push(format!("{m}_{part}"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for row in &report.rows {
        let mut cells = vec![
            row.run_type.clone(),
            row.runs.to_string(),
            row.mse.min.to_string(),
            row.mse.avg.to_string(),
            row.mse.max.to_string(),
        ];
        for m in &metric_names {
            let s = &row.structure[m];
            cells.extend([s.min.to_string(), s.avg.to_string(), s.max.to_string(), fmt_corr(s.corr)]);
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn ranking_csv(report: &AggregateReport) -> String {
    let mut out = String::from("rank,run_type,mse_min_dev,mse_avg_dev,mse_max_dev,combined\n");
    for (i, e) in report.ranking.iter().enumerate() {
        let scores: Vec<String> = e.scores.iter().map(f64::to_string).collect();
        out.push_str(&format!("{},{},{},{}\n", i + 1, e.run_type, scores.join(","), e.combined));
    }
    out
}

/// Parses [`table_csv`] output back into rows (ranking not included).
pub fn parse_table_csv(text: &str) -> Result<Vec<RunTypeRow>, String> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let metric_names: Vec<String> = headers
        .iter()
        .skip(5)
        .step_by(4)
        .map(|h| h.strip_suffix("_min").map(str::to_string).ok_or(format!("bad header `{h}`")))
        .collect::<Result<_, _>>()?;
    let real = |s: &str| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    let corr = |s: &str| if s.is_empty() { Ok(None) } else { real(s).map(Some) };
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| e.to_string())?;
        let mut structure = BTreeMap::new();
        for (i, m) in metric_names.iter().enumerate() {
            let at = 5 + 4 * i;
            structure.insert(
                m.clone(),
                MetricSummary {
                    min: real(&r[at])?,
                    avg: real(&r[at + 1])?,
                    max: real(&r[at + 2])?,
                    corr: corr(&r[at + 3])?,
                },
            );
        }
        let mse = MetricSummary { min: real(&r[2])?, avg: real(&r[3])?, max: real(&r[4])?, corr: None };
        rows.push(RunTypeRow {
            run_type: r[0].to_string(),
            runs: r[1].parse().map_err(|e| format!("runs: {e}"))?,
            mse,
            structure,
        });
    }
    Ok(rows)
}

/// Writes `tables.csv`, `ranking.csv` and `report.json` into `dir`.
pub fn emit_tables(report: &AggregateReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if report.rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    let mut written = Vec::new();
    for (name, body) in [("tables.csv", table_csv(report)), ("ranking.csv", ranking_csv(report)), ("report.json", json)]
    {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<AggregateReport, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

/// Every `stats.json` below `root`, sorted by path.
pub fn collect_stats(root: &Path) -> Result<Vec<RunStats>, HarnessError> {
    let mut paths = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "stats.json") {
                paths.push(path);
            }
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| HarnessError::Parse { path: p.clone(), message: e.to_string() })
        })
        .collect()
}

/// Loads a genome file written with `--save-genome`.
pub fn load_genome(path: &Path) -> Result<RnnGenome, HarnessError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    genome::deserialize(&bytes).map_err(|e| HarnessError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

pub fn save_genome(path: &Path, genome: &RnnGenome) -> Result<(), HarnessError> {
    fs::write(path, genome::serialize(genome)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(run_type_label(&CellType::ALL), "all");
        assert_eq!(run_type_label(&[CellType::Lstm]), "lstm");
        assert_eq!(run_type_label(&[CellType::Simple, CellType::Gru]), "gru+simple");
        assert_eq!(standard_run_types().len(), 11);
    }

    #[test]
    fn pearson_extremes() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), None);
    }

    #[test]
    fn two_point_z_scores() {
        let r = deviation_ranking(&[("a".into(), vec![1.0]), ("b".into(), vec![3.0])], StdDevMode::Sample);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(r[0].run_type, "a");
        assert!((r[0].combined + h).abs() < 1e-15);
        assert!((r[1].combined - h).abs() < 1e-15);
    }

    #[test]
    fn equal_metrics_keep_order() {
        let m: Vec<(String, Vec<f64>)> = ["x", "y", "z"].iter().map(|n| (n.to_string(), vec![2.0, 2.0])).collect();
        let r = deviation_ranking(&m, StdDevMode::Sample);
        assert_eq!(r.iter().map(|e| e.run_type.as_str()).collect::<Vec<_>>(), ["x", "y", "z"]);
        assert!(r.iter().all(|e| e.combined == 0.0));
    }

    #[test]
    fn config_round_trip_and_version() {
        let mut c = RunConfig::new(DataConfig {
            paths: vec!["a.csv".into()],
            target: "target".into(),
            normalize: NormalizeMode::Minmax,
            fold_size: 2,
            repeats: 3,
        });
        c.seed = 11;
        let text = c.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        let bumped = text.replace("version = 1", "version = 2");
        assert!(RunConfig::from_toml(&bumped).is_err());
    }

    #[test]
    fn doc_example_config_parses() {
        let doc = include_str!("harness.rs");
        let start = doc.find("//! ```toml").unwrap();
        let end = start + doc[start..].find("//! ```\n").unwrap();
        let body: String = doc[start..end]
            .lines()
            .skip(1)
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let c = RunConfig::from_toml(&body).unwrap();
        assert_eq!(c.run_type(), "lstm+simple");
        assert_eq!(c.evolution.islands.generation_budget, 300);
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(matches!(aggregate(&[], StdDevMode::Sample), Err(HarnessError::EmptyReport)));
    }
}
