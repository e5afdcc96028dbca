//! `conehull` command line: `gen`, `solve`, `bench`, `sweep`.
//!
//! Settings resolve as flag, then `--config` JSON file, then built-in
//! default. Exit code 0 on success, 1 on a configuration error, 2 on a
//! runtime error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dca::{self, BasisAccess, Ensemble, Mode, SolveConfig};
use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::matstore::{self, SampledMatrix};
use crate::rng::DEFAULT_SEED;
use crate::sampler::PostSelectConfig;
use crate::snmf::{self, BenchConfig, SweepGrid};

#[derive(Debug, Parser)]
#[command(name = "conehull", version, about = "Sampling-based minimum conical hull solver")]
pub struct Cli {
    /// JSON file with default settings; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic near-separable instance (X.csv + anchors.json)
    Gen(GenArgs),
    /// Find k anchor rows of Y (default Y = X) covering the rows of X
    Solve(SolveArgs),
    /// Generate, solve and score one synthetic instance
    Bench(BenchArgs),
    /// Run a grid of benchmarks over s, mu and seeds
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "camelCase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Rows
    #[arg(long)]
    pub n: Option<usize>,
    /// Columns
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of anchors
    #[arg(long)]
    pub k: Option<usize>,
    /// Noise standard deviation
    #[arg(long)]
    pub mu: Option<f64>,
    /// Generator seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

/// Solver settings shared by `solve`, `bench` and `sweep`.
#[derive(Debug, Args, Default)]
pub struct SolverArgs {
    /// Number of anchors
    #[arg(long)]
    pub k: Option<usize>,
    /// Exact dense subproblems or the sampled pipeline
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Number of subproblems (default ceil(k log2 k) * 10 for solve, 100 for bench)
    #[arg(long)]
    pub p: Option<usize>,
    /// Sketch sample count
    #[arg(long)]
    pub s: Option<usize>,
    /// Post-selection draws from the X distribution
    #[arg(long)]
    pub nx: Option<usize>,
    /// Post-selection draws from the Y distribution
    #[arg(long)]
    pub ny: Option<usize>,
    /// Separation threshold; sizes nx and ny when they are not given
    #[arg(long)]
    pub eps: Option<f64>,
    /// Failure probability for the estimators and draw counts
    #[arg(long)]
    pub delta: Option<f64>,
    /// Draws per median-of-means group
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Projection ensemble
    #[arg(long, value_enum)]
    pub ensemble: Option<Ensemble>,
    /// How the sampled pipeline reads the sketch basis
    #[arg(long, value_enum)]
    pub basis_access: Option<BasisAccess>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Data matrix (CSV, or Matrix Market for .mtx)
    #[arg(long)]
    pub x: PathBuf,
    /// Candidate matrix; defaults to X
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    /// Rows
    #[arg(long)]
    pub n: Option<usize>,
    /// Columns
    #[arg(long)]
    pub m: Option<usize>,
    /// Noise standard deviation
    #[arg(long)]
    pub mu: Option<f64>,
    /// Write 0 for wall_ms so repeated runs are byte-identical
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Grid axis, `s=500,2000,8000` or `mu=0,0.5`; repeatable
    #[arg(long = "grid", value_name = "AXIS=V1,V2,..")]
    pub grid: Vec<String>,
    /// Replicates per grid cell
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Also write per-cell medians and variances to this CSV file
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

/// Every setting a `--config` file may carry. Unknown keys are rejected.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct FileConfig {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub mu: Option<f64>,
    pub mode: Option<Mode>,
    pub p: Option<usize>,
    pub s: Option<usize>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub group_size: Option<usize>,
    pub ensemble: Option<Ensemble>,
    pub basis_access: Option<BasisAccess>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub format: Option<Format>,
    pub seeds: Option<usize>,
    pub grid_s: Option<Vec<usize>>,
    pub grid_mu: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Resolved {
    pub k: usize,
    pub mode: Mode,
    pub p: Option<usize>,
    pub s: usize,
    pub nx: usize,
    pub ny: usize,
    pub eps: Option<f64>,
    pub delta: f64,
    pub group_size: usize,
    pub ensemble: Ensemble,
    pub basis_access: BasisAccess,
    pub seed: u64,
    pub workers: Option<usize>,
    pub format: Format,
}

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_GROUP_SIZE: usize = 1000;
pub const DEFAULT_DRAWS: usize = 4096;

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

pub fn resolve(a: &SolverArgs, f: &FileConfig, default_k: Option<usize>) -> Result<Resolved> {
    let k = pick(a.k, f.k)
        .or(default_k)
        .ok_or_else(|| Error::InvalidConfig("--k is required".into()))?;
    let delta = pick(a.delta, f.delta).unwrap_or(DEFAULT_DELTA);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("--delta must lie in (0, 1), got {delta}")));
    }
    let eps = pick(a.eps, f.eps);
    if let Some(e) = eps {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::InvalidConfig(format!("--eps must be positive, got {e}")));
        }
    }
    let sized = eps.map(|e| PostSelectConfig::draws_for(e, delta));
    let nx = pick(a.nx, f.nx).or(sized).unwrap_or(DEFAULT_DRAWS);
    let ny = pick(a.ny, f.ny).or(sized).unwrap_or(DEFAULT_DRAWS);
    let r = Resolved {
        k,
        mode: pick(a.mode, f.mode).unwrap_or(Mode::Approx),
        p: pick(a.p, f.p),
        s: pick(a.s, f.s).unwrap_or(4000),
        nx,
        ny,
        eps,
        delta,
        group_size: pick(a.group_size, f.group_size).unwrap_or(DEFAULT_GROUP_SIZE),
        ensemble: pick(a.ensemble, f.ensemble).unwrap_or(Ensemble::Gaussian),
        basis_access: pick(a.basis_access, f.basis_access).unwrap_or(BasisAccess::Materialized),
        seed: pick(a.seed, f.seed).unwrap_or(DEFAULT_SEED),
        workers: pick(a.workers, f.workers),
        format: pick(a.format, f.format).unwrap_or(Format::Csv),
    };
    if r.k == 0 || r.s == 0 || r.nx == 0 || r.ny == 0 || r.group_size == 0 || r.p == Some(0) || r.workers == Some(0) {
        return Err(Error::InvalidConfig("k, p, s, nx, ny, group-size and workers must be positive".into()));
    }
    Ok(r)
}

impl Resolved {
    pub fn estimator(&self) -> EstimatorConfig {
        let mut e = EstimatorConfig::with_group_size(self.group_size, self.delta);
        e.eps = self.eps.unwrap_or(f64::NAN);
        e
    }

    pub fn post_select(&self) -> PostSelectConfig {
        let mut ps = PostSelectConfig::with_draws(self.nx, self.ny);
        ps.eps_gap = self.eps.unwrap_or(f64::NAN);
        ps
    }

    pub fn solve_config(&self) -> SolveConfig {
        let mut cfg = SolveConfig::new(self.k, self.mode);
        cfg.p = self.p;
        cfg.s = self.s;
        cfg.ensemble = self.ensemble;
        cfg.basis_access = self.basis_access;
        cfg.subproblem.estimator = self.estimator();
        cfg.subproblem.post_select = self.post_select();
        cfg.workers = self.workers;
        cfg.seed = self.seed;
        cfg
    }

    pub fn bench_config(&self, n: usize, m: usize, mu: f64) -> BenchConfig {
        BenchConfig {
            n,
            m,
            k: self.k,
            mu,
            p: self.p.unwrap_or(100),
            s: self.s,
            mode: self.mode,
            seed: self.seed,
            ensemble: self.ensemble,
            n_x: self.nx,
            n_y: self.ny,
            estimator: self.estimator(),
            basis_access: self.basis_access,
            workers: self.workers,
        }
    }
}

pub fn load_matrix(path: &Path) -> Result<SampledMatrix> {
    let is_mtx = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx"));
    let loaded = if is_mtx { matstore::load_matrix_market(path) } else { matstore::load_csv(path) };
    loaded.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

/// Parse `axis=v1,v2,..` entries into the `s` and `mu` axes.
pub fn parse_grid(entries: &[String]) -> Result<(Option<Vec<usize>>, Option<Vec<f64>>)> {
    let mut s = None;
    let mut mu = None;
    for entry in entries {
        let (axis, values) = entry
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("grid entry `{entry}` is not axis=values")))?;
        let parts: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if parts.is_empty() {
            return Err(Error::InvalidConfig(format!("grid axis `{axis}` has no values")));
        }
        let bad = |v: &str| Error::InvalidConfig(format!("grid axis `{axis}`: cannot parse `{v}`"));
        match axis.trim() {
            "s" => s = Some(parts.iter().map(|v| v.parse::<usize>().map_err(|_| bad(v))).collect::<Result<_>>()?),
            "mu" => mu = Some(parts.iter().map(|v| v.parse::<f64>().map_err(|_| bad(v))).collect::<Result<_>>()?),
            other => return Err(Error::InvalidConfig(format!("unknown grid axis `{other}` (expected s or mu)"))),
        }
    }
    Ok((s, mu))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SolveReport<'a> {
    config: &'a Resolved,
    p: usize,
    n_degenerate: usize,
    anchors: Vec<ScoredAnchor>,
}

#[derive(Serialize)]
struct ScoredAnchor {
    index: usize,
    score: f64,
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Exact => "exact",
        Mode::Approx => "approx",
    }
}

fn run_gen(a: &GenArgs, f: &FileConfig) -> Result<()> {
    let n = pick(a.n, f.n).unwrap_or(500);
    let m = pick(a.m, f.m).unwrap_or(500);
    let k = pick(a.k, f.k).unwrap_or(10);
    let mu = pick(a.mu, f.mu).unwrap_or(0.0);
    let seed = pick(a.seed, f.seed).unwrap_or(DEFAULT_SEED);
    let inst = snmf::generate_synthetic(n, m, k, mu, seed)?;
    fs::create_dir_all(&a.out)?;
    matstore::write_csv(&inst.store(), a.out.join("X.csv"))?;
    fs::write(a.out.join("anchors.json"), serde_json::to_string(&inst.true_anchors)? + "\n")?;
    Ok(())
}

fn run_solve(a: &SolveArgs, f: &FileConfig) -> Result<()> {
    let r = resolve(&a.solver, f, None)?;
    let x = load_matrix(&a.x)?;
    let y = a.y.as_deref().map(load_matrix).transpose()?;
    let cfg = r.solve_config();
    let set = dca::solve(&x, y.as_ref(), &cfg)?;
    let anchors: Vec<ScoredAnchor> =
        set.indices.iter().map(|&i| ScoredAnchor { index: i, score: set.scores[i] }).collect();
    let text = match r.format {
        Format::Json => {
            let report = SolveReport { config: &r, p: cfg.subproblems(), n_degenerate: set.n_degenerate(), anchors };
            serde_json::to_string_pretty(&report)? + "\n"
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["k", "mode", "p", "s", "seed", "index", "score"])?;
            for a in &anchors {
                w.write_record([
                    r.k.to_string(),
                    mode_name(r.mode).to_string(),
                    cfg.subproblems().to_string(),
                    r.s.to_string(),
                    r.seed.to_string(),
                    a.index.to_string(),
                    a.score.to_string(),
                ])?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8")
        }
    };
    emit(a.solver.out.as_deref(), &text)
}

fn records_text(records: &[snmf::BenchRecord], format: Format, omit_timing: bool) -> Result<String> {
    match format {
        Format::Csv => snmf::records_to_csv(records, omit_timing),
        Format::Json => {
            let mut recs = records.to_vec();
            if omit_timing {
                recs.iter_mut().for_each(|r| r.wall_ms = 0);
            }
            Ok(serde_json::to_string_pretty(&recs)? + "\n")
        }
    }
}

fn instance(a: &InstanceArgs, f: &FileConfig) -> (usize, usize, f64) {
    (pick(a.n, f.n).unwrap_or(500), pick(a.m, f.m).unwrap_or(500), pick(a.mu, f.mu).unwrap_or(0.0))
}

fn run_bench(a: &BenchArgs, f: &FileConfig) -> Result<()> {
    let r = resolve(&a.solver, f, Some(10))?;
    let (n, m, mu) = instance(&a.instance, f);
    let rec = snmf::run_bench(&r.bench_config(n, m, mu))?;
    emit(a.solver.out.as_deref(), &records_text(&[rec], r.format, a.instance.omit_timing)?)
}

fn run_sweep(a: &SweepArgs, f: &FileConfig) -> Result<()> {
    let r = resolve(&a.solver, f, Some(10))?;
    let (n, m, mu) = instance(&a.instance, f);
    let (gs, gmu) = parse_grid(&a.grid)?;
    let grid = SweepGrid {
        s: gs.or_else(|| f.grid_s.clone()).unwrap_or_else(|| vec![r.s]),
        mu: gmu.or_else(|| f.grid_mu.clone()).unwrap_or_else(|| vec![mu]),
        seeds: pick(a.seeds, f.seeds).unwrap_or(1),
    };
    let records = snmf::sweep(&r.bench_config(n, m, mu), &grid)?;
    emit(a.solver.out.as_deref(), &records_text(&records, r.format, a.instance.omit_timing)?)?;
    if let Some(path) = &a.summary {
        let mut w = csv::Writer::from_writer(Vec::new());
        for cell in snmf::summarize(&records) {
            w.serialize(cell)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        emit(Some(path), &String::from_utf8(bytes).expect("utf-8"))?;
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Gen(a) => run_gen(a, &file),
        Command::Solve(a) => run_solve(a, &file),
        Command::Bench(a) => run_bench(a, &file),
        Command::Sweep(a) => run_sweep(a, &file),
    }
}

/// Exit code for an error: 1 for configuration problems, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => 1,
        Error::Subproblem { source, .. } => exit_code(source),
        _ => 2,
    }
}

/// Parse `argv`, run, report errors on stderr, return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
