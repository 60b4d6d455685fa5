//! `proxcerf` command-line interface: simulate, fit, benchmark, plot, check
//! and config subcommands.

pub mod manifest;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use proxcerf::baselines::{linear_nc, Mode};
use proxcerf::data::{load_csv, ColumnMap, Dataset};
use proxcerf::diagnostics::assumption_tests;
use proxcerf::gibbs::write_draws_csv;
use proxcerf::identification::level_tag;
use proxcerf::simulation::{
    exposure_quantile, run_replications, simulate, simulate_linear, true_cerf, BenchmarkReport,
    BenchmarkSpec, Scenario,
};
use proxcerf::stats;
use proxcerf::{fit, Error, ModelConfig};

use manifest::RunManifest;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: String) -> Self {
        CliError { code, message }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new(4, format!("I/O error on {}: {e}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// 2 for configuration or validation problems, 3 for numerical or
/// identification failures, 4 for I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) | Error::Parse { .. } | Error::Validation(_) | Error::ZeroVariance(_) => 2,
        Error::Identification { .. } | Error::IdentificationRate { .. } | Error::Numerical(_) => 3,
        Error::Io { .. } => 4,
        Error::AtIteration { .. } | Error::AtReplicate { .. } => 3,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::new(exit_code(&e), e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "proxcerf", version, about = "Exposure-response curves with negative controls")]
pub struct Cli {
    /// Upper bound on worker threads for chains, replicates and bootstrap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario dataset with a known true curve.
    Simulate(SimulateArgs),
    /// Fit a model to a CSV dataset.
    Fit(FitArgs),
    /// Repeated simulate-and-fit study against the true curve.
    Benchmark(BenchmarkArgs),
    /// Draw curve CSVs as an SVG figure.
    Plot(PlotArgs),
    /// Partial-correlation checks of the negative-control assumptions.
    Check(CheckArgs),
    /// Print model settings in config-file form.
    Config(ConfigArgs),
}

#[derive(Debug, Args, Clone)]
pub struct SettingsArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set K=10`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
}

impl SettingsArgs {
    /// Defaults, then the config file, then `--set`, then dedicated flags.
    pub fn resolve(&self) -> CliResult<ModelConfig> {
        let mut cfg = ModelConfig::default();
        if let Some(p) = &self.config {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            cfg.apply_ini(&text)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::new(2, format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.iterations {
            cfg.iterations = r;
        }
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Clone)]
pub struct ColumnArgs {
    #[arg(long, default_value = "y")]
    pub y: String,
    #[arg(long, default_value = "x")]
    pub x: String,
    #[arg(long, default_value = "z")]
    pub z: String,
    #[arg(long, default_value = "w")]
    pub w: String,
    /// Measured covariates entering every regression, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Confounder column, read when present.
    #[arg(long, default_value = "u")]
    pub u: String,
    /// Ignore the confounder column even if present.
    #[arg(long)]
    pub mask_u: bool,
}

impl ColumnArgs {
    pub fn map(&self) -> ColumnMap {
        ColumnMap {
            y: self.y.clone(),
            x: self.x.clone(),
            z: self.z.clone(),
            w: self.w.clone(),
            covariates: self.covariates.clone(),
            u: (!self.mask_u).then(|| self.u.clone()),
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct SimulateArgs {
    /// Scenario 1-4.
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Use the linear system with causal slope 2 instead of a scenario.
    #[arg(long, conflicts_with = "scenario")]
    pub linear: bool,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Drop the confounder column from the written file.
    #[arg(long)]
    pub mask_u: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// bnp-nc, yx, yxu or linear-nc.
    #[arg(long, default_value = "bnp-nc")]
    pub mode: String,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[command(flatten)]
    pub settings: SettingsArgs,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub scenario: u8,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 30)]
    pub replicates: usize,
    /// Models to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "bnp-nc,yx")]
    pub models: Vec<String>,
    #[command(flatten)]
    pub settings: SettingsArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct PlotArgs {
    /// Curve CSVs written by `fit` or `benchmark`.
    #[arg(required = true)]
    pub curves: Vec<PathBuf>,
    /// Reference curve CSV with columns x and truth.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Legend labels, comma separated, in file order.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// Interpolate curves onto the first file's grid when grids differ.
    #[arg(long)]
    pub interpolate: bool,
    #[arg(long, default_value = "Exposure-response curve")]
    pub title: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct CheckArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// Print built-in defaults, ignoring any file or overrides.
    #[arg(long)]
    pub defaults: bool,
    #[command(flatten)]
    pub settings: SettingsArgs,
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new(4, format!("cannot encode {}: {e}", path.display())))?;
    write_file(path, (text + "\n").as_bytes())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::new(4, format!("cannot format CSV: {e}")))?;
    Ok(buf)
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.threads {
        Some(t) if t > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::new(2, format!("cannot start {t} threads: {e}")))?;
            pool.install(|| dispatch(cli.command))
        }
        Some(_) => Err(CliError::new(2, "--threads must be at least 1".into())),
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a).map(drop),
        Command::Fit(a) => cmd_fit(&a).map(drop),
        Command::Benchmark(a) => cmd_benchmark(&a).map(drop),
        Command::Plot(a) => cmd_plot(&a).map(drop),
        Command::Check(a) => cmd_check(&a).map(drop),
        Command::Config(a) => {
            let cfg = if a.defaults {
                ModelConfig::default()
            } else {
                a.settings.resolve()?
            };
            print!("{}", cfg.to_ini());
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    manifest::set_arguments(args.iter().map(|a| a.to_string_lossy().into_owned()).collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Writes `data.csv`, `truth.csv` (scenarios only) and the manifest.
pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    let mut m = RunManifest::start("simulate");
    m.seed = Some(a.seed);
    let (data, truth) = if a.linear {
        (simulate_linear(a.n, a.seed)?, None)
    } else {
        let id = a
            .scenario
            .ok_or_else(|| CliError::new(2, "pass --scenario 1-4 or --linear".into()))?;
        let data = simulate(&Scenario::new(id, a.n, a.seed)?)?;
        let grid = stats::linspace(exposure_quantile(id, 0.01), exposure_quantile(id, 0.99), 100);
        (data, Some((id, grid)))
    };
    let data = if a.mask_u { data.without_u() } else { data };
    create_dir(&a.out)?;
    let data_path = a.out.join("data.csv");
    data.save_csv(&data_path)?;
    m.output(&data_path)?;
    let mut outputs = vec![data_path];
    if let Some((id, grid)) = truth {
        let mut text = String::from("x,truth\n");
        for x in grid {
            text.push_str(&format!("{x},{}\n", true_cerf(id, x)));
        }
        let p = a.out.join("truth.csv");
        write_file(&p, text.as_bytes())?;
        m.output(&p)?;
        outputs.push(p);
    }
    outputs.push(m.finish(&a.out)?);
    Ok(outputs)
}

fn load(path: &Path, columns: &ColumnArgs) -> CliResult<Dataset> {
    let loaded = load_csv(path, &columns.map())?;
    if !loaded.dropped_rows.is_empty() {
        eprintln!(
            "note: dropped {} row(s) with missing values (first: row {})",
            loaded.dropped_rows.len(),
            loaded.dropped_rows[0]
        );
    }
    Ok(loaded.dataset)
}

#[derive(Debug, Serialize)]
struct FitReport {
    label: String,
    mode: &'static str,
    #[serde(flatten)]
    summary: proxcerf::fit::FitSummary,
}

/// Writes `draws.csv`, `cerf.csv`, `summary.json` and the manifest, or
/// `effect.csv` for the closed-form linear estimator.
pub fn cmd_fit(a: &FitArgs) -> CliResult<Vec<PathBuf>> {
    let mode = Mode::parse(&a.mode)?;
    let cfg = a.settings.resolve()?;
    let data = load(&a.data, &a.columns)?;
    let mut m = RunManifest::start("fit");
    m.input(&a.data)?;
    m.seed = Some(cfg.seed);
    m.chains = Some(a.chains);
    m.config = Some(cfg.to_ini());
    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    match mode.outcome_model() {
        None => {
            let level = cfg.sorted_levels().last().copied().unwrap_or(0.95);
            let e = linear_nc(&data, cfg.bootstrap, level, cfg.seed, cfg.tol_wz)?;
            let p = a.out.join("effect.csv");
            write_file(&p, &csv_bytes(|b| e.write_csv(b))?)?;
            outputs.push(p);
        }
        Some(model) => {
            let f = fit(&data, model, &cfg, a.chains)?;
            let draws = a.out.join("draws.csv");
            let mut buf = Vec::new();
            write_draws_csv(&f.chains, &mut buf)?;
            write_file(&draws, &buf)?;
            let cerf = a.out.join("cerf.csv");
            write_file(&cerf, &csv_bytes(|b| f.estimate.write_csv(b))?)?;
            let summary = a.out.join("summary.json");
            write_json(
                &summary,
                &FitReport {
                    label: model.label().into(),
                    mode: mode.as_str(),
                    summary: f.summary,
                },
            )?;
            outputs.extend([draws, cerf, summary]);
        }
    }
    for p in &outputs {
        m.output(p)?;
    }
    outputs.push(m.finish(&a.out)?);
    Ok(outputs)
}

#[derive(Debug, Serialize)]
struct ModelSummary {
    label: String,
    pooled_coverage: Vec<(f64, f64)>,
    pooled_median_rmse: f64,
    mean_replicate_rmse: f64,
    failed_replicates: usize,
}

#[derive(Debug, Serialize)]
struct Threshold {
    name: String,
    value: f64,
    threshold: f64,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct BenchmarkSummary {
    scenario: u8,
    n: usize,
    replicates: usize,
    central_range: (f64, f64),
    central_points: usize,
    runtime_secs: f64,
    models: Vec<ModelSummary>,
    thresholds: Vec<Threshold>,
}

fn curve_csv(r: &BenchmarkReport) -> String {
    let mut s = String::from("x,truth,central,median");
    for iv in &r.pooled.intervals {
        let t = level_tag(iv.level);
        s.push_str(&format!(",lo_{t},hi_{t}"));
    }
    for (l, _) in &r.replicate_coverage {
        s.push_str(&format!(",replicate_cover_{}", level_tag(*l)));
    }
    s.push('\n');
    for (j, x) in r.grid.iter().enumerate() {
        s.push_str(&format!(
            "{x},{},{},{}",
            r.truth[j],
            r.central.contains(&j) as u8,
            r.pooled.median[j]
        ));
        for iv in &r.pooled.intervals {
            s.push_str(&format!(",{},{}", iv.lower[j], iv.upper[j]));
        }
        for (_, c) in &r.replicate_coverage {
            s.push_str(&format!(",{}", c[j]));
        }
        s.push('\n');
    }
    s
}

fn replicates_csv(reports: &[BenchmarkReport]) -> String {
    let mut s = String::from("model,replicate,data_seed,chain_seed,rmse,cover_95,identification_failures,runtime_secs,error\n");
    for r in reports {
        for rep in &r.results {
            let (rmse, cover) = match &rep.score {
                Some(sc) => (
                    sc.rmse.to_string(),
                    sc.coverage
                        .iter()
                        .find(|(l, _)| (l - 0.95).abs() < 1e-12)
                        .map_or(String::new(), |c| c.1.to_string()),
                ),
                None => (String::new(), String::new()),
            };
            let err = rep.error.as_deref().unwrap_or("").replace(['"', '\n'], "'");
            s.push_str(&format!(
                "{},{},{},{},{rmse},{cover},{},{},\"{err}\"\n",
                r.model.label(),
                rep.index,
                rep.data_seed,
                rep.chain_seed,
                rep.identification_failures,
                rep.runtime_secs
            ));
        }
    }
    s
}

/// Writes per-model `benchmark_s<id>_<mode>.csv`, `replicates.csv`,
/// `summary.json` and the manifest.
pub fn cmd_benchmark(a: &BenchmarkArgs) -> CliResult<Vec<PathBuf>> {
    let modes = a.models.iter().map(|s| Mode::parse(s)).collect::<proxcerf::Result<Vec<_>>>()?;
    let models = modes
        .iter()
        .map(|m| {
            m.outcome_model()
                .ok_or_else(|| CliError::new(2, "linear-nc has no curve to benchmark".into()))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let cfg = a.settings.resolve()?;
    let spec = BenchmarkSpec {
        scenario: a.scenario,
        n: a.n,
        replicates: a.replicates,
        models,
    };
    let reports = run_replications(&spec, &cfg)?;
    let mut m = RunManifest::start("benchmark");
    m.seed = Some(cfg.seed);
    m.config = Some(cfg.to_ini());
    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    for (mode, r) in modes.iter().zip(&reports) {
        let p = a.out.join(format!("benchmark_s{}_{}.csv", a.scenario, mode.as_str()));
        write_file(&p, curve_csv(r).as_bytes())?;
        outputs.push(p);
    }
    let p = a.out.join("replicates.csv");
    write_file(&p, replicates_csv(&reports).as_bytes())?;
    outputs.push(p);

    let mut thresholds = Vec::new();
    let nc = reports.iter().find(|r| r.model == proxcerf::OutcomeModel::NegativeControl);
    if let Some(nc) = nc {
        let cov = nc.pooled_coverage(0.95).unwrap_or(f64::NAN);
        thresholds.push(Threshold {
            name: "pooled 95% band covers truth on central grid".into(),
            value: cov,
            threshold: 0.8,
            pass: cov >= 0.8,
        });
        if let Some(yx) = reports.iter().find(|r| r.model == proxcerf::OutcomeModel::Unadjusted) {
            thresholds.push(Threshold {
                name: "BNP-NC median RMSE below YX median RMSE".into(),
                value: nc.pooled_score.rmse,
                threshold: yx.pooled_score.rmse,
                pass: nc.pooled_score.rmse < yx.pooled_score.rmse,
            });
        }
    }
    let first = &reports[0];
    let summary = BenchmarkSummary {
        scenario: a.scenario,
        n: a.n,
        replicates: a.replicates,
        central_range: first.central_range,
        central_points: first.central.len(),
        runtime_secs: first.runtime_secs,
        models: reports
            .iter()
            .map(|r| ModelSummary {
                label: r.model.label().into(),
                pooled_coverage: r.pooled_score.coverage.clone(),
                pooled_median_rmse: r.pooled_score.rmse,
                mean_replicate_rmse: r.mean_replicate_rmse,
                failed_replicates: r.failed(),
            })
            .collect(),
        thresholds,
    };
    let p = a.out.join("summary.json");
    write_json(&p, &summary)?;
    outputs.push(p);
    for p in &outputs {
        m.output(p)?;
    }
    outputs.push(m.finish(&a.out)?);
    Ok(outputs)
}

fn label_for(path: &Path) -> String {
    if let Some(dir) = path.parent() {
        let summary = dir.join("summary.json");
        if let Ok(text) = fs::read_to_string(summary) {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) {
                if let Some(l) = v.get("label").and_then(|l| l.as_str()) {
                    return l.to_string();
                }
            }
        }
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().to_lowercase()).unwrap_or_default();
    if stem.contains("bnp-nc") || stem.contains("bnp_nc") {
        "BNP-NC".into()
    } else if stem.contains("yxu") {
        "YXU".into()
    } else if stem.contains("yx") {
        "YX".into()
    } else {
        stem
    }
}

/// Writes the SVG named by `--out`.
pub fn cmd_plot(a: &PlotArgs) -> CliResult<PathBuf> {
    let mut series = Vec::new();
    for (i, p) in a.curves.iter().enumerate() {
        let label = a.labels.get(i).cloned().unwrap_or_else(|| label_for(p));
        series.push(plot::read_series(p, label)?);
    }
    let series = plot::align(series, a.interpolate)?;
    let truth = match &a.truth {
        Some(p) => {
            let (tx, ty) = plot::read_truth(p)?;
            let grid = &series[0].x;
            if tx.last() < grid.first() || tx.first() > grid.last() {
                return Err(CliError::new(2, "truth curve is disjoint from the curve grid".into()));
            }
            Some((tx, ty))
        }
        None => None,
    };
    let svg = plot::render(&series, truth.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice())), &a.title);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(&a.out, svg.as_bytes())?;
    Ok(a.out.clone())
}

/// Prints the assumption table and writes `assumptions.csv` and the manifest.
pub fn cmd_check(a: &CheckArgs) -> CliResult<Vec<PathBuf>> {
    let data = load(&a.data, &a.columns)?;
    let report = assumption_tests(&data)?;
    print!("{}", report.to_text());
    let mut m = RunManifest::start("check");
    m.input(&a.data)?;
    create_dir(&a.out)?;
    let p = a.out.join("assumptions.csv");
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(&p, &buf)?;
    m.output(&p)?;
    let mp = m.finish(&a.out)?;
    Ok(vec![p, mp])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Identification { theta_wz: 0.0, tol: 1e-6 }), 3);
        let wrapped = Error::AtIteration {
            iteration: 3,
            source: Box::new(Error::Validation("v".into())),
        };
        assert_eq!(exit_code(&wrapped), 2);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), 4);
    }

    #[test]
    fn settings_precedence() {
        let s = SettingsArgs {
            config: None,
            set: vec!["K=7".into(), "seed=3".into()],
            seed: Some(9),
            iterations: None,
            burn_in: None,
            k: None,
        };
        let c = s.resolve().unwrap();
        assert_eq!((c.k, c.seed), (7, 9));
    }

    #[test]
    fn labels_from_file_names() {
        assert_eq!(label_for(Path::new("/nonexistent/benchmark_s2_yx.csv")), "YX");
        assert_eq!(label_for(Path::new("/nonexistent/benchmark_s2_bnp-nc.csv")), "BNP-NC");
    }
}
