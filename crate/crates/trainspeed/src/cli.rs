//! Experiment commands behind the `trainspeed` binary: JSON configs with a
//! versioned schema, a run manifest with artifact checksums per command, and
//! CSV/SVG report emission. All randomness flows from one master seed per
//! command through named streams, so worker count never changes results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use rand::seq::index::sample;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::curves::{load_benchmark, BenchmarkDataset};
use crate::diffnas::{darts_tse_run, DiffNasConfig, DiffNasTrace, ToyCell, DEFAULT_OPS};
use crate::error::{Error, Result};
use crate::estimators::{effective_budget, EstimatorSpec};
use crate::rankeval::{common_seeds, rank_evaluate, EvalRow};
use crate::search::{compare_strategies, ComparisonReport, Evaluator, Strategy, TpeConfig};
use crate::seeding::stream_rng;
use crate::stats::aggregate;
use crate::svg::{Chart, Series};
use crate::toytrain::{
    build_toy_benchmark, enumerate_toy_space, make_synthetic_dataset, Activation, TrainConfig,
};

pub const SCHEMA_VERSION: u64 = 1;

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct CommonArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Overrides the config's master seed.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses the default pool.
    pub jobs: Option<usize>,
    pub svg: bool,
}

/// Everything needed to reproduce a run bit-exactly (at the same version),
/// plus checksums of what it produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub master_seed: u64,
    pub config: Value,
    /// artifact file name -> sha256 hex digest
    pub artifacts: BTreeMap<String, String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<(T, Value)> {
    let text = read_file(path)?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let schema = raw.get("schema").and_then(Value::as_u64);
    if schema != Some(SCHEMA_VERSION) {
        return Err(Error::Config {
            path: format!("{}:schema", path.display()),
            message: format!("expected \"schema\": {SCHEMA_VERSION}, got {schema:?}"),
        });
    }
    let cfg: T = serde_json::from_value(raw.clone()).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok((cfg, raw))
}

/// Paths inside a config resolve relative to the config file's directory.
fn resolve(config_path: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

struct RunContext {
    out: PathBuf,
    command: String,
    started: String,
    master_seed: u64,
    config: Value,
    artifacts: Vec<String>,
}

impl RunContext {
    fn new(command: &str, args: &CommonArgs, config: Value, master_seed: u64) -> Result<Self> {
        fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;
        Ok(RunContext {
            out: args.out.clone(),
            command: command.to_string(),
            started: now(),
            master_seed,
            config,
            artifacts: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        write_file(&path, contents)?;
        self.artifacts.push(name.to_string());
        Ok(path)
    }

    fn track(&mut self, name: &str) {
        self.artifacts.push(name.to_string());
    }

    fn finish(self) -> Result<RunManifest> {
        let mut artifacts = BTreeMap::new();
        for name in &self.artifacts {
            artifacts.insert(name.clone(), sha256_hex(&self.out.join(name))?);
        }
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started,
            finished: now(),
            master_seed: self.master_seed,
            config: self.config,
            artifacts,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_file(&self.out.join("manifest.json"), &text)?;
        Ok(manifest)
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(n) => {
            if n == 0 {
                return Err(Error::invalid("--jobs must be at least 1"));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(f)
        }
    }
}

// ---------------------------------------------------------------- gen-toy

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dim: usize,
    pub classes: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub difficulty: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub width_menu: Vec<usize>,
    pub depth_min: usize,
    pub depth_max: usize,
    pub activations: Vec<Activation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenToyConfig {
    pub schema: u64,
    pub name: String,
    pub master_seed: u64,
    pub data: DataConfig,
    pub space: SpaceConfig,
    pub train: TrainConfig,
    /// Training seeds recorded per architecture.
    pub seeds: Vec<u64>,
}

/// Generates the toy benchmark: enumerates the space, trains every
/// (architecture, seed) pair, writes the JSON-lines file and a manifest.
pub fn cmd_gen_toy(args: &CommonArgs) -> Result<RunManifest> {
    let (cfg, raw) = load_config::<GenToyConfig>(&args.config)?;
    let master = args.seed.unwrap_or(cfg.master_seed);
    let mut ctx = RunContext::new("gen-toy", args, raw, master)?;

    let space = enumerate_toy_space(
        &cfg.space.width_menu,
        (cfg.space.depth_min, cfg.space.depth_max),
        &cfg.space.activations,
    )?;
    let d = &cfg.data;
    let dataset = make_synthetic_dataset(
        d.dim, d.classes, d.n_train, d.n_val, d.n_test, d.difficulty, master,
    )?;
    let bench = with_jobs(args.jobs, || {
        build_toy_benchmark(&space, &dataset, &cfg.train, &cfg.seeds, &cfg.name)
    })?;

    let file_name = format!("{}.jsonl", cfg.name);
    bench.save(ctx.out.join(&file_name))?;
    ctx.track(&file_name);
    ctx.finish()
}

// ---------------------------------------------------------------- rankeval

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankevalConfig {
    pub schema: u64,
    pub benchmark: String,
    /// Estimator strings such as "tse-e@E=1"; the budget comes from t_grid.
    pub estimators: Vec<String>,
    pub t_grid: Vec<usize>,
}

fn fmt_rho(rho: Option<f64>) -> String {
    rho.map(|r| r.to_string()).unwrap_or_else(|| "NA".into())
}

fn rankeval_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("estimator,T,rho,n\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.estimator,
            row.t,
            fmt_rho(row.rho),
            row.n
        ));
    }
    out
}

fn rankeval_per_seed_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("estimator,T,seed,rho\n");
    for row in rows {
        for (seed, rho) in &row.per_seed {
            out.push_str(&format!("{},{},{},{}\n", row.estimator, row.t, seed, rho));
        }
    }
    out
}

fn scores_csv(bench: &BenchmarkDataset, specs: &[EstimatorSpec], t_grid: &[usize]) -> String {
    let seeds = common_seeds(bench);
    let mut out = String::from("arch_id,seed,estimator,T,score\n");
    for spec in specs {
        for &t in t_grid {
            let Ok(cell) = spec.with_t(t) else { continue };
            for record in &bench.records {
                for &seed in &seeds {
                    let Ok(score) = cell.score(&record.seeds[&seed]) else { continue };
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        record.arch_id,
                        seed,
                        cell.name(),
                        t,
                        score.scalar()
                    ));
                }
            }
        }
    }
    out
}

fn rankeval_chart(labels: &[String], rows: &[EvalRow], t_grid: &[usize]) -> Chart {
    let series = labels
        .iter()
        .enumerate()
        .map(|(i, label)| Series {
            label: label.clone(),
            points: rows[i * t_grid.len()..(i + 1) * t_grid.len()]
                .iter()
                .filter_map(|r| r.rho.map(|rho| (r.t as f64, rho)))
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    Chart {
        title: "Rank correlation vs training budget".into(),
        x_label: "T (epochs)".into(),
        y_label: "Spearman rho".into(),
        series,
    }
}

/// Evaluates every estimator over the budget grid and writes the rho table,
/// per-seed correlations, raw scores and an optional SVG chart.
pub fn cmd_rankeval(args: &CommonArgs) -> Result<RunManifest> {
    let (cfg, raw) = load_config::<RankevalConfig>(&args.config)?;
    let mut ctx = RunContext::new("rankeval", args, raw, args.seed.unwrap_or(0))?;

    let bench = load_benchmark(resolve(&args.config, &cfg.benchmark))?;
    if cfg.t_grid.is_empty() || cfg.estimators.is_empty() {
        return Err(Error::invalid("rankeval needs estimators and a T grid"));
    }
    let specs: Result<Vec<EstimatorSpec>> =
        cfg.estimators.iter().map(|s| EstimatorSpec::parse(s)).collect();
    let specs = specs?;

    let rows = rank_evaluate(&bench, &specs, &cfg.t_grid);
    ctx.emit("rankeval.csv", &rankeval_csv(&rows))?;
    ctx.emit("rankeval_per_seed.csv", &rankeval_per_seed_csv(&rows))?;
    ctx.emit("scores.csv", &scores_csv(&bench, &specs, &cfg.t_grid))?;
    if args.svg {
        let chart = rankeval_chart(&cfg.estimators, &rows, &cfg.t_grid);
        ctx.emit("rankeval.svg", &chart.render()?)?;
    }
    ctx.finish()
}

// ---------------------------------------------------------------- budget

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub schema: u64,
    pub benchmark: String,
    pub master_seed: u64,
    pub sample_sizes: Vec<usize>,
    pub n_repeats: usize,
    pub threshold: f64,
}

/// For each sample size N_s, repeatedly samples architectures without
/// replacement, applies the effective-budget procedure, and reports the mean
/// and standard error of T_effective.
pub fn cmd_budget(args: &CommonArgs) -> Result<RunManifest> {
    let (cfg, raw) = load_config::<BudgetConfig>(&args.config)?;
    let master = args.seed.unwrap_or(cfg.master_seed);
    let mut ctx = RunContext::new("budget", args, raw, master)?;

    let bench = load_benchmark(resolve(&args.config, &cfg.benchmark))?;
    if cfg.n_repeats == 0 || cfg.sample_sizes.is_empty() {
        return Err(Error::invalid("budget needs sample sizes and repeats"));
    }
    let population = bench.records.len();
    let mut csv = String::from("N_s,mean_T_effective,stderr,n_repeats\n");
    for (si, &n_s) in cfg.sample_sizes.iter().enumerate() {
        if n_s == 0 || n_s > population {
            return Err(Error::invalid(format!(
                "sample size {n_s} outside [1, {population}]"
            )));
        }
        let mut budgets = Vec::with_capacity(cfg.n_repeats);
        for rep in 0..cfg.n_repeats {
            let idx = (si * cfg.n_repeats + rep) as u64;
            let mut rng = stream_rng(master, "budget/sample", idx);
            let picked = sample(&mut rng, population, n_s);
            let curves: Vec<_> = picked
                .iter()
                .flat_map(|i| bench.records[i].seeds.values())
                .collect();
            let t = effective_budget(&curves, cfg.threshold, bench.metadata.t_end)?;
            budgets.push(t as f64);
        }
        let (mean, stderr) = aggregate(&budgets)?;
        csv.push_str(&format!("{n_s},{mean},{stderr},{}\n", cfg.n_repeats));
    }
    ctx.emit("budget.csv", &csv)?;
    ctx.finish()
}

// ---------------------------------------------------------------- search

fn default_re_pop_size() -> usize {
    8
}
fn default_re_sample_size() -> usize {
    3
}
fn default_grid_points() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpeKnobs {
    pub gamma_split: f64,
    pub n_init: usize,
    pub n_candidates: usize,
}

impl Default for TpeKnobs {
    fn default() -> Self {
        let d = TpeConfig::default();
        TpeKnobs {
            gamma_split: d.gamma_split,
            n_init: d.n_init,
            n_candidates: d.n_candidates,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub schema: u64,
    pub benchmark: String,
    /// Strategy names: any of "rs", "re", "tpe".
    pub strategies: Vec<String>,
    /// Evaluator strings: "gt" or an estimator such as "tse-ema@T=10".
    pub evaluators: Vec<String>,
    /// Total simulated cost in epoch units.
    pub budget: f64,
    pub n_seeds: u64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_re_pop_size")]
    pub re_pop_size: usize,
    #[serde(default = "default_re_sample_size")]
    pub re_sample_size: usize,
    #[serde(default)]
    pub tpe: TpeKnobs,
}

fn parse_strategy(name: &str, cfg: &SearchConfig) -> Result<Strategy> {
    match name {
        "rs" => Ok(Strategy::RandomSearch),
        "re" => Ok(Strategy::RegularizedEvolution {
            pop_size: cfg.re_pop_size,
            sample_size: cfg.re_sample_size,
        }),
        "tpe" => Ok(Strategy::Tpe(TpeConfig {
            gamma_split: cfg.tpe.gamma_split,
            n_init: cfg.tpe.n_init,
            n_candidates: cfg.tpe.n_candidates,
        })),
        other => Err(Error::invalid(format!(
            "unknown strategy '{other}' (expected rs, re, tpe)"
        ))),
    }
}

fn parse_evaluator(name: &str) -> Result<Evaluator> {
    if name == "gt" {
        Ok(Evaluator::GroundTruth)
    } else {
        Ok(Evaluator::Estimator(EstimatorSpec::parse(name)?))
    }
}

fn search_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("strategy,evaluator,cost,mean_acc,stderr\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.strategy, row.evaluator, row.cost, row.mean_acc, row.stderr
        ));
    }
    out
}

fn search_chart(report: &ComparisonReport) -> Chart {
    let mut series: Vec<Series> = Vec::new();
    for row in &report.rows {
        let label = format!("{}/{}", row.strategy, row.evaluator);
        if series.last().map(|s| s.label != label).unwrap_or(true) {
            series.push(Series {
                label,
                points: Vec::new(),
            });
        }
        series.last_mut().unwrap().points.push((row.cost, row.mean_acc));
    }
    Chart {
        title: "Best test accuracy vs simulated cost".into(),
        x_label: "cost (epoch units)".into(),
        y_label: "best test accuracy".into(),
        series,
    }
}

/// Runs every strategy x evaluator cell over `n_seeds` seeds and writes the
/// aggregate CSV, the raw traces and an optional SVG chart.
pub fn cmd_search(args: &CommonArgs) -> Result<RunManifest> {
    let (cfg, raw) = load_config::<SearchConfig>(&args.config)?;
    let mut ctx = RunContext::new("search", args, raw, args.seed.unwrap_or(0))?;

    let bench = load_benchmark(resolve(&args.config, &cfg.benchmark))?;
    let strategies: Result<Vec<Strategy>> = cfg
        .strategies
        .iter()
        .map(|s| parse_strategy(s, &cfg))
        .collect();
    let strategies = strategies?;
    let evaluators: Result<Vec<Evaluator>> =
        cfg.evaluators.iter().map(|e| parse_evaluator(e)).collect();
    let evaluators = evaluators?;

    let report = with_jobs(args.jobs, || {
        compare_strategies(
            &bench,
            &evaluators,
            &strategies,
            cfg.budget,
            cfg.n_seeds,
            cfg.grid_points,
        )
    })?;
    ctx.emit("search.csv", &search_csv(&report))?;
    ctx.emit(
        "traces.json",
        &serde_json::to_string_pretty(&report.traces).expect("traces serialize"),
    )?;
    if args.svg {
        ctx.emit("search.svg", &search_chart(&report).render()?)?;
    }
    ctx.finish()
}

// ---------------------------------------------------------------- diffnas

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffnasCliConfig {
    pub schema: u64,
    pub master_seed: u64,
    pub data: DataConfig,
    /// Intermediate nodes in the cell.
    pub nodes: usize,
    pub diffnas: DiffNasConfig,
}

fn diffnas_csv(trace: &DiffNasTrace) -> String {
    let mut out = String::from("step,derived_encoding,retrain_test_acc\n");
    for step in &trace.steps {
        let enc: Vec<String> = step.derived_encoding.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!(
            "{},{},{}\n",
            step.step,
            enc.join("-"),
            step.retrain_test_acc
        ));
    }
    out
}

/// Runs the training-speed-driven differentiable search and writes the trace
/// as JSON plus a CSV summary.
pub fn cmd_diffnas(args: &CommonArgs) -> Result<RunManifest> {
    let (mut cfg, raw) = load_config::<DiffnasCliConfig>(&args.config)?;
    let master = args.seed.unwrap_or(cfg.master_seed);
    cfg.diffnas.seed = master;
    let mut ctx = RunContext::new("diffnas", args, raw, master)?;

    let d = &cfg.data;
    let data = make_synthetic_dataset(
        d.dim, d.classes, d.n_train, d.n_val, d.n_test, d.difficulty, master,
    )?;
    let mut init_rng = stream_rng(master, "diffnas/init", 0);
    let mut cell = ToyCell::new(d.dim, d.classes, cfg.nodes, &DEFAULT_OPS, &mut init_rng)?;
    let trace = darts_tse_run(&mut cell, &data, &cfg.diffnas)?;

    ctx.emit(
        "diffnas_trace.json",
        &serde_json::to_string_pretty(&trace).expect("trace serializes"),
    )?;
    ctx.emit("diffnas.csv", &diffnas_csv(&trace))?;
    ctx.finish()
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub schema: u64,
    /// A rankeval.csv or search.csv produced by an earlier command.
    pub input: String,
    pub output: String,
}

fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::invalid("empty CSV"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

/// Series keyed by one label column, points from two numeric columns;
/// non-numeric cells (e.g. "NA") are skipped.
fn chart_from_rows(
    rows: &[Vec<String>],
    label_cols: &[usize],
    x_col: usize,
    y_col: usize,
    title: &str,
    x_label: &str,
    y_label: &str,
) -> Chart {
    let mut series: Vec<Series> = Vec::new();
    for row in rows {
        let label: Vec<&str> = label_cols.iter().map(|&c| row[c].as_str()).collect();
        let label = label.join("/");
        let (Ok(x), Ok(y)) = (row[x_col].parse::<f64>(), row[y_col].parse::<f64>()) else {
            continue;
        };
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((x, y)),
            None => series.push(Series {
                label,
                points: vec![(x, y)],
            }),
        }
    }
    Chart {
        title: title.into(),
        x_label: x_label.into(),
        y_label: y_label.into(),
        series,
    }
}

/// Re-renders a previously emitted CSV report as an SVG chart. The report
/// kind is detected from the header.
pub fn cmd_report(args: &CommonArgs) -> Result<RunManifest> {
    let (cfg, raw) = load_config::<ReportConfig>(&args.config)?;
    let mut ctx = RunContext::new("report", args, raw, args.seed.unwrap_or(0))?;

    let input = resolve(&args.config, &cfg.input);
    let (header, rows) = parse_csv(&read_file(&input)?)?;
    let chart = match header.join(",").as_str() {
        "estimator,T,rho,n" => chart_from_rows(
            &rows,
            &[0],
            1,
            2,
            "Rank correlation vs training budget",
            "T (epochs)",
            "Spearman rho",
        ),
        "strategy,evaluator,cost,mean_acc,stderr" => chart_from_rows(
            &rows,
            &[0, 1],
            2,
            3,
            "Best test accuracy vs simulated cost",
            "cost (epoch units)",
            "best test accuracy",
        ),
        other => {
            return Err(Error::invalid(format!(
                "unrecognised report header '{other}'"
            )))
        }
    };
    ctx.emit(&cfg.output, &chart.render()?)?;
    ctx.finish()
}
