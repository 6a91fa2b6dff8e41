//! The `membrane` command line.
//!
//! One task per invocation. Options come from flags, then from an optional
//! `key=value` file given by `--config`. Reports are JSON (sorted keys) and
//! CSV; timestamps go to a separate `.meta.json` beside each report.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::extremes::{extremes_report, histogram, recentred_max};
use crate::greens::cache::CACHE_ENV;
use crate::greens::{
    dense_green_column, ColumnCache, ColumnSource, FullSpaceGreen, FullSpaceMethod, Normalization,
    DENSE_MAX_N,
};
use crate::lattice::{io, GridSpec, Site, DIM};
use crate::report::{num, write_json, write_metadata};
use crate::sampler::{sample_batch, SampleBatch, DEFAULT_SAMPLE_TOL};
use crate::scheme::{measure_rate, ManufacturedSolution};
use crate::verify::{
    check_b0, check_b1, check_closeness, check_poincare, check_poincare_sobolev, default_b0_sites,
    easy_bound, near_diagonal_limit, off_diagonal_limit, AssumptionReport, PairPlan, ScalePolicy,
};

/// Grids above this size need `--allow-large-grids`.
pub const LARGE_GRID: usize = 48;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_CACHE: &str = ".membrane-cache";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Fullspace,
    Green,
    SchemeRate,
    Sample,
    Extremes,
    VerifyB0,
    VerifyB1,
    NearDiagonal,
    OffDiagonal,
    Inequalities,
    Closeness,
}

#[derive(Debug, Parser)]
#[command(name = "membrane", version, about = "Membrane model experiments")]
pub struct Args {
    #[arg(value_enum)]
    pub task: Task,
    /// Grid size; repeat for several grids.
    #[arg(long = "n")]
    pub n: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cache directory (the CACHE_DIR variable overrides the config file).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub keep_fields: bool,
    #[arg(long)]
    pub allow_large_grids: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    /// `key=value` file merged below the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Manufactured solution: zero, sin2 or power[:a].
    #[arg(long)]
    pub sol: Option<String>,
    /// Source site `a,b,c,d` in lattice units.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub check_dense: bool,
    /// Point in [0,1]^4, `x1,x2,x3,x4`.
    #[arg(long)]
    pub x: Option<String>,
    #[arg(long)]
    pub y: Option<String>,
    /// Lattice offsets for near-diagonal evaluation.
    #[arg(long)]
    pub u: Option<String>,
    #[arg(long)]
    pub v: Option<String>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    /// Declared separation scale: `|x - y| >= 1/l`.
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub per_cell: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Compute closeness even when r < 192 h, flagging the result.
    #[arg(long)]
    pub relaxed: bool,
}

/// Fully resolved options.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub task: String,
    pub grids: Vec<usize>,
    pub seed: u64,
    pub tol: Option<f64>,
    pub samples: usize,
    pub out: PathBuf,
    pub cache: PathBuf,
    pub keep_fields: bool,
    pub allow_large_grids: bool,
    pub threads: Option<usize>,
    pub sol: String,
    pub source: Option<[i64; DIM]>,
    pub check_dense: bool,
    pub x: Option<[f64; DIM]>,
    pub y: Option<[f64; DIM]>,
    pub u: [i64; DIM],
    pub v: [i64; DIM],
    pub r: Option<f64>,
    pub k: f64,
    pub l: f64,
    pub trials: usize,
    pub per_cell: usize,
    pub bins: usize,
    pub relaxed: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Failure(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

const CONFIG_KEYS: &[&str] = &[
    "n",
    "seed",
    "tol",
    "samples",
    "out",
    "cache",
    "keep_fields",
    "allow_large_grids",
    "threads",
    "sol",
    "source",
    "check_dense",
    "x",
    "y",
    "u",
    "v",
    "r",
    "k",
    "l",
    "trials",
    "per_cell",
    "bins",
    "relaxed",
];

/// Parses a `key=value` file; `#` starts a comment, unknown keys are errors.
pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key=value", lineno + 1)))?;
        let key = k.trim().replace('-', "_");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(usage(format!(
                "config line {}: unknown key `{key}`",
                lineno + 1
            )));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(flag: &str, s: &str) -> CliResult<T> {
    s.trim()
        .parse()
        .map_err(|_| usage(format!("--{flag}: cannot parse `{s}`")))
}

fn parse_list<T: std::str::FromStr + Copy + Default>(flag: &str, s: &str) -> CliResult<[T; DIM]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != DIM {
        return Err(usage(format!(
            "--{flag}: expected {DIM} comma-separated values, got `{s}`"
        )));
    }
    let mut out = [T::default(); DIM];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_value(flag, p)?;
    }
    Ok(out)
}

fn parse_bool(flag: &str, s: &str) -> CliResult<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(usage(format!(
            "--{flag}: expected true or false, got `{s}`"
        ))),
    }
}

impl RunConfig {
    pub fn resolve(args: &Args, config: &BTreeMap<String, String>) -> CliResult<Self> {
        let get = |key: &str| config.get(key).map(String::as_str);
        let opt = |flag: Option<String>, key: &str| flag.or_else(|| get(key).map(str::to_string));
        let num_opt = |key: &str| -> CliResult<Option<f64>> {
            get(key).map(|s| parse_value(key, s)).transpose()
        };
        let usize_opt = |key: &str| -> CliResult<Option<usize>> {
            get(key).map(|s| parse_value(key, s)).transpose()
        };
        let flag_or = |flag: bool, key: &str| -> CliResult<bool> {
            Ok(flag
                || get(key)
                    .map(|s| parse_bool(key, s))
                    .transpose()?
                    .unwrap_or(false))
        };

        let grids = if !args.n.is_empty() {
            args.n.clone()
        } else if let Some(s) = get("n") {
            s.split(',')
                .map(|p| parse_value("n", p))
                .collect::<CliResult<_>>()?
        } else {
            Vec::new()
        };
        let cache = match (&args.cache, std::env::var_os(CACHE_ENV)) {
            (Some(c), _) => c.clone(),
            (None, Some(env)) if !env.is_empty() => PathBuf::from(env),
            _ => get("cache")
                .map(PathBuf::from)
                .unwrap_or(DEFAULT_CACHE.into()),
        };
        let cfg = RunConfig {
            task: args
                .task
                .to_possible_value()
                .map(|v| v.get_name().to_string())
                .unwrap_or_default(),
            grids,
            seed: match args.seed {
                Some(s) => s,
                None => get("seed")
                    .map(|s| parse_value("seed", s))
                    .transpose()?
                    .unwrap_or(1),
            },
            tol: args.tol.or(num_opt("tol")?),
            samples: args.samples.or(usize_opt("samples")?).unwrap_or(200),
            out: args
                .out
                .clone()
                .or_else(|| get("out").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out")),
            cache,
            keep_fields: flag_or(args.keep_fields, "keep_fields")?,
            allow_large_grids: flag_or(args.allow_large_grids, "allow_large_grids")?,
            threads: args.threads.or(usize_opt("threads")?),
            sol: opt(args.sol.clone(), "sol").unwrap_or_else(|| "sin2".into()),
            source: opt(args.source.clone(), "source")
                .map(|s| parse_list("source", &s))
                .transpose()?,
            check_dense: flag_or(args.check_dense, "check_dense")?,
            x: opt(args.x.clone(), "x")
                .map(|s| parse_list("x", &s))
                .transpose()?,
            y: opt(args.y.clone(), "y")
                .map(|s| parse_list("y", &s))
                .transpose()?,
            u: opt(args.u.clone(), "u")
                .map(|s| parse_list("u", &s))
                .transpose()?
                .unwrap_or([0; DIM]),
            v: opt(args.v.clone(), "v")
                .map(|s| parse_list("v", &s))
                .transpose()?
                .unwrap_or([0; DIM]),
            r: args.r.or(num_opt("r")?),
            k: args.k.or(num_opt("k")?).unwrap_or(2.0),
            l: args.l.or(num_opt("l")?).unwrap_or(4.0),
            trials: args.trials.or(usize_opt("trials")?).unwrap_or(8),
            per_cell: args.per_cell.or(usize_opt("per_cell")?).unwrap_or(8),
            bins: args.bins.or(usize_opt("bins")?).unwrap_or(20),
            relaxed: flag_or(args.relaxed, "relaxed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(usage("--tol: must be positive"));
            }
        }
        for &n in &self.grids {
            if n == 0 {
                return Err(usage("--n: grid size must be positive"));
            }
            if n > LARGE_GRID && !self.allow_large_grids {
                return Err(usage(format!(
                    "--n {n}: grids above {LARGE_GRID} need --allow-large-grids"
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(usage("--threads: must be at least 1"));
        }
        Ok(())
    }

    fn tol(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_TOL)
    }

    fn grids_or(&self, default: &[usize]) -> CliResult<Vec<GridSpec>> {
        let ns = if self.grids.is_empty() {
            default.to_vec()
        } else {
            self.grids.clone()
        };
        ns.into_iter()
            .map(|n| GridSpec::new(n).map_err(CliError::from))
            .collect()
    }

    fn columns(&self) -> ColumnSource {
        ColumnSource::cached(ColumnCache::new(&self.cache))
    }

    fn check_internal_grid(&self, n: usize) -> CliResult<()> {
        if n > LARGE_GRID && !self.allow_large_grids {
            return Err(usage(format!(
                "--n: this task needs the grid {n} > {LARGE_GRID}; pass --allow-large-grids"
            )));
        }
        Ok(())
    }
}

/// Entry point; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&args) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            2
        }
        Err(CliError::Failure(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(args: &Args) -> CliResult<()> {
    let config = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| usage(format!("--config {}: {e}", p.display())))?;
            parse_config(&text)?
        }
        None => BTreeMap::new(),
    };
    let cfg = RunConfig::resolve(args, &config)?;
    if let Some(t) = cfg.threads {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Failure(Error::io(&cfg.out, e)))?;
    match args.task {
        Task::Fullspace => fullspace(&cfg),
        Task::Green => green(&cfg),
        Task::SchemeRate => scheme_rate(&cfg),
        Task::Sample => sample(&cfg),
        Task::Extremes => extremes(&cfg),
        Task::VerifyB0 => verify_b0(&cfg),
        Task::VerifyB1 => verify_b1(&cfg),
        Task::NearDiagonal => near_diagonal(&cfg),
        Task::OffDiagonal => off_diagonal(&cfg),
        Task::Inequalities => inequalities(&cfg),
        Task::Closeness => closeness(&cfg),
    }
}

fn emit<T: Serialize>(cfg: &RunConfig, stem: &str, value: &T) -> CliResult<PathBuf> {
    let path = cfg.out.join(format!("{stem}.json"));
    write_json(&path, value)?;
    write_metadata(&cfg.out, stem, &cfg.task)?;
    Ok(path)
}

#[derive(Serialize)]
struct FullSpaceRow {
    x: [i64; DIM],
    quadrature: f64,
    asymptotic: f64,
}

#[derive(Serialize)]
struct FullSpaceReport {
    normalization: Normalization,
    crossover: f64,
    axis: Vec<FullSpaceRow>,
}

fn fullspace(cfg: &RunConfig) -> CliResult<()> {
    let green = FullSpaceGreen::with_cache(&cfg.cache)?;
    let axis = [1i64, 2, 4, 8, 16, 24, 32]
        .iter()
        .map(|&r| {
            let x = [r, 0, 0, 0];
            Ok(FullSpaceRow {
                x,
                quadrature: green.eval_with(x, FullSpaceMethod::FourierQuadrature)?,
                asymptotic: green.eval_with(x, FullSpaceMethod::Asymptotic)?,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let report = FullSpaceReport {
        normalization: green.normalization().clone(),
        crossover: green.crossover(),
        axis,
    };
    let path = emit(cfg, "fullspace", &report)?;
    println!(
        "fullspace: F(0) = {:.12}, fit rms {:.2e} -> {}",
        green.f0(),
        report.normalization.fit_rms,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct GreenReport {
    n: usize,
    source: Site,
    tolerance: f64,
    iterations: usize,
    residual: f64,
    value_at_source: f64,
    column_file: String,
    dense_max_relative_error: Option<f64>,
}

fn green(cfg: &RunConfig) -> CliResult<()> {
    for grid in cfg.grids_or(&[8])? {
        let n = grid.n() as i64;
        let source = Site(cfg.source.unwrap_or([n / 2; DIM]));
        if grid.index_of(source).is_none() {
            return Err(usage(format!(
                "--source {:?}: outside [0, {n}]^4",
                source.0
            )));
        }
        let col = cfg.columns().column(grid, source, cfg.tol())?;
        let c = source.0;
        let file = format!("green_n{}_{}_{}_{}_{}.mbf", n, c[0], c[1], c[2], c[3]);
        io::save(&col.values, &cfg.out.join(&file))?;
        let dense = if cfg.check_dense {
            if grid.n() > DENSE_MAX_N {
                return Err(usage(format!("--check-dense: needs n <= {DENSE_MAX_N}")));
            }
            let d = dense_green_column(grid, source)?;
            let scale = d.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Some(
                d.values()
                    .iter()
                    .zip(col.values.values())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                    / scale,
            )
        } else {
            None
        };
        let report = GreenReport {
            n: grid.n(),
            source,
            tolerance: col.stats.tolerance,
            iterations: col.stats.iterations,
            residual: col.stats.residual,
            value_at_source: col.at(source),
            column_file: file.clone(),
            dense_max_relative_error: dense,
        };
        emit(cfg, &format!("green_n{}", grid.n()), &report)?;
        let mut line = format!(
            "green n={}: G(y,y) = {:.10}, {} iterations, residual {:.2e} -> {file}",
            grid.n(),
            report.value_at_source,
            report.iterations,
            report.residual
        );
        if let Some(e) = dense {
            line.push_str(&format!("; dense oracle max rel. error {e:.2e}"));
        }
        println!("{line}");
    }
    Ok(())
}

fn parse_solution(s: &str) -> CliResult<ManufacturedSolution> {
    match s {
        "zero" => Ok(ManufacturedSolution::zero()),
        "sin2" => Ok(ManufacturedSolution::sin_squared()),
        "power" => Ok(ManufacturedSolution::power(1.6)?),
        other => match other.strip_prefix("power:") {
            Some(a) => Ok(ManufacturedSolution::power(parse_value("sol", a)?)?),
            None => Err(usage(format!("--sol: unknown solution `{other}`"))),
        },
    }
}

fn scheme_rate(cfg: &RunConfig) -> CliResult<()> {
    let sol = parse_solution(&cfg.sol)?;
    let ns: Vec<usize> = cfg.grids_or(&[8, 16, 32])?.iter().map(|g| g.n()).collect();
    let report = measure_rate(&sol, &ns, cfg.tol())?;
    emit(cfg, "scheme", &report)?;
    report.to_csv().write(&cfg.out.join("scheme.csv"))?;
    println!(
        "scheme-rate {}: rate {} over n = {:?}",
        report.solution,
        report.rate.map(num).unwrap_or_else(|| "undefined".into()),
        ns
    );
    Ok(())
}

fn write_batch(cfg: &RunConfig, batch: &SampleBatch) -> CliResult<()> {
    let stem = format!("samples_n{}", batch.n);
    emit(cfg, &stem, batch)?;
    batch.to_csv().write(&cfg.out.join(format!("{stem}.csv")))?;
    if let Some(fields) = &batch.fields {
        let dir = cfg.out.join(format!("fields_n{}", batch.n));
        fs::create_dir_all(&dir).map_err(|e| CliError::Failure(Error::io(&dir, e)))?;
        for (s, f) in batch.samples.iter().zip(fields) {
            io::save(f, &dir.join(format!("sample_{}.mbf", s.index)))?;
        }
    }
    Ok(())
}

fn sample_tol(cfg: &RunConfig) -> f64 {
    cfg.tol.unwrap_or(DEFAULT_SAMPLE_TOL)
}

fn sample(cfg: &RunConfig) -> CliResult<()> {
    for grid in cfg.grids_or(&[16])? {
        let batch = sample_batch(
            grid,
            cfg.seed,
            cfg.samples,
            sample_tol(cfg),
            cfg.keep_fields,
        )?;
        write_batch(cfg, &batch)?;
        let mean = batch.maxima().iter().sum::<f64>() / batch.count as f64;
        println!(
            "sample n={}: {} samples, seed {}, mean max {:.6}",
            grid.n(),
            batch.count,
            cfg.seed,
            mean
        );
    }
    Ok(())
}

fn extremes(cfg: &RunConfig) -> CliResult<()> {
    let grids = cfg.grids_or(&[16, 32])?;
    let mut batches = Vec::new();
    for grid in grids {
        let batch = sample_batch(
            grid,
            cfg.seed,
            cfg.samples,
            sample_tol(cfg),
            cfg.keep_fields,
        )?;
        write_batch(cfg, &batch)?;
        let hist = histogram(&recentred_max(&batch)?, cfg.bins)?;
        hist.write(&cfg.out.join(format!("hist_n{}.csv", grid.n())))?;
        batches.push(batch);
    }
    let report = extremes_report(&batches)?;
    emit(cfg, "extremes", &report)?;
    for l in &report.levels {
        println!(
            "extremes n={}: mean(M - m_N) = {:.4}, var = {:.4}, Z>0 in {:.1}%",
            l.n,
            l.mean,
            l.variance,
            100.0 * l.z_positive_fraction
        );
    }
    for k in &report.ks {
        println!("extremes KS(n={}, n={}) = {:.4}", k.n_a, k.n_b, k.distance);
    }
    Ok(())
}

fn assumptions(cfg: &RunConfig) -> AssumptionReport {
    AssumptionReport {
        grids: cfg.grids.clone(),
        seed: cfg.seed,
        tolerance: cfg.tol(),
        b0: Vec::new(),
        b1: Vec::new(),
        near_diagonal: Vec::new(),
        off_diagonal: Vec::new(),
    }
}

fn verify_b0(cfg: &RunConfig) -> CliResult<()> {
    let mut report = assumptions(cfg);
    for grid in cfg.grids_or(&[16])? {
        let r = check_b0(&cfg.columns(), grid, &default_b0_sites(grid), cfg.tol())?;
        println!(
            "verify-b0 n={}: alpha_0' = {:.6} ({})",
            grid.n(),
            r.alpha_0,
            r.binding
        );
        report.b0.push(r);
    }
    emit(cfg, "assumptions_b0", &report)?;
    Ok(())
}

fn verify_b1(cfg: &RunConfig) -> CliResult<()> {
    let mut report = assumptions(cfg);
    let mut plan = PairPlan::standard(cfg.seed);
    plan.per_cell = cfg.per_cell;
    for grid in cfg.grids_or(&[16, 32])? {
        let r = check_b1(&cfg.columns(), grid, &plan, cfg.tol())?;
        println!(
            "verify-b1 n={}: alpha_0'' = {:.6} over {} pairs ({} columns)",
            grid.n(),
            r.alpha_dd,
            r.pair_count,
            r.column_count
        );
        report.b1.push(r);
    }
    emit(cfg, "assumptions_b1", &report)?;
    Ok(())
}

fn center() -> [f64; DIM] {
    [0.5; DIM]
}

fn near_diagonal(cfg: &RunConfig) -> CliResult<()> {
    let ns: Vec<usize> = cfg.grids_or(&[8, 16, 32])?.iter().map(|g| g.n()).collect();
    let f = FullSpaceGreen::with_cache(&cfg.cache)?;
    let x = cfg.x.unwrap_or_else(center);
    let part = near_diagonal_limit(&cfg.columns(), &f, x, &ns, cfg.u, cfg.v, cfg.tol())?;
    println!(
        "near-diagonal x={:?}: values {:?}, extrapolated f1 = {:.6} (residual {:.2e})",
        x,
        part.values
            .levels
            .iter()
            .map(|l| l.value)
            .collect::<Vec<_>>(),
        part.f1(),
        part.values.residual
    );
    let mut report = assumptions(cfg);
    report.near_diagonal.push(part);
    emit(cfg, "assumptions_near_diagonal", &report)?;
    Ok(())
}

fn off_diagonal(cfg: &RunConfig) -> CliResult<()> {
    let ns: Vec<usize> = cfg.grids_or(&[8, 16, 32])?.iter().map(|g| g.n()).collect();
    let x = cfg.x.unwrap_or([0.25, 0.5, 0.5, 0.5]);
    let y = cfg.y.unwrap_or([0.75, 0.5, 0.5, 0.5]);
    let od = off_diagonal_limit(&cfg.columns(), x, y, cfg.l, &ns, cfg.tol())?;
    println!(
        "off-diagonal: lambda^2 G values {:?}, extrapolated {:.6}",
        od.values.levels.iter().map(|l| l.value).collect::<Vec<_>>(),
        od.values.extrapolated
    );
    let mut report = assumptions(cfg);
    report.off_diagonal.push(od);
    emit(cfg, "assumptions_off_diagonal", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct InequalityReport {
    poincare: Vec<crate::verify::PoincareReport>,
    poincare_sobolev: Vec<crate::verify::PoincareSobolevReport>,
    easy_bound: Vec<crate::verify::EasyBoundReport>,
}

fn inequalities(cfg: &RunConfig) -> CliResult<()> {
    let mut report = InequalityReport {
        poincare: Vec::new(),
        poincare_sobolev: Vec::new(),
        easy_bound: Vec::new(),
    };
    let src = cfg.columns();
    for grid in cfg.grids_or(&[16, 32])? {
        let p = check_poincare(grid, cfg.trials, cfg.seed)?;
        let ps = check_poincare_sobolev(&src, grid, cfg.trials, cfg.seed, cfg.tol())?;
        let m = grid.n() as i64 / 2;
        let cols = [Site([m; DIM]), Site([1, m, m, m])]
            .iter()
            .map(|&s| src.column(grid, s, cfg.tol()))
            .collect::<crate::Result<Vec<_>>>()?;
        let eb = easy_bound(&cols)?;
        println!(
            "inequalities n={}: poincare {:.4} (sharp {:.4}), poincare-sobolev {:.6}, easy bound {:.6}",
            grid.n(),
            p.random_constant,
            p.sharp_constant,
            ps.constant,
            eb.constant
        );
        report.poincare.push(p);
        report.poincare_sobolev.push(ps);
        report.easy_bound.push(eb);
    }
    emit(cfg, "inequalities", &report)?;
    Ok(())
}

fn closeness(cfg: &RunConfig) -> CliResult<()> {
    let f = FullSpaceGreen::with_cache(&cfg.cache)?;
    let x = cfg.x.unwrap_or_else(center);
    let y = cfg.y.unwrap_or_else(center);
    let r = cfg.r.ok_or_else(|| usage("--r: required for closeness"))?;
    let policy = if cfg.relaxed {
        ScalePolicy::Relaxed
    } else {
        ScalePolicy::Strict
    };
    let mut reports = Vec::new();
    for grid in cfg.grids_or(&[16, 32])? {
        cfg.check_internal_grid(2 * grid.n())?;
        let rep = check_closeness(
            &cfg.columns(),
            &f,
            x,
            y,
            grid.n(),
            r,
            cfg.k,
            policy,
            cfg.tol(),
        )?;
        println!(
            "closeness n={} (vs {}): {:.3e}{}",
            grid.n(),
            2 * grid.n(),
            rep.value,
            if rep.scale_satisfied {
                String::new()
            } else {
                format!(" [r < 192h: needs n >= {}]", rep.required_n)
            }
        );
        reports.push(rep);
    }
    emit(cfg, "closeness", &reports)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Args {
        Args::try_parse_from(std::iter::once("membrane").chain(v.iter().copied())).unwrap()
    }

    #[test]
    fn config_merges_below_flags() {
        let conf = parse_config("seed = 9\n# comment\nsamples=50\nn=8,16\n").unwrap();
        let cfg = RunConfig::resolve(&args(&["sample", "--seed", "3"]), &conf).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.samples, 50);
        assert_eq!(cfg.grids, vec![8, 16]);
        assert!(matches!(
            parse_config("colour=red"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(parse_config("justtext"), Err(CliError::Usage(_))));
    }

    #[test]
    fn large_grid_guard_and_parsing() {
        let none = BTreeMap::new();
        let e = RunConfig::resolve(&args(&["green", "--n", "64"]), &none);
        assert!(matches!(e, Err(CliError::Usage(m)) if m.contains("--allow-large-grids")));
        let ok = RunConfig::resolve(&args(&["green", "--n", "64", "--allow-large-grids"]), &none);
        assert!(ok.is_ok());
        let e = RunConfig::resolve(&args(&["green", "--source", "1,2,3"]), &none);
        assert!(matches!(e, Err(CliError::Usage(m)) if m.contains("--source")));
        assert!(parse_solution("power:2.0").is_ok());
        assert!(matches!(parse_solution("cubic"), Err(CliError::Usage(_))));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["membrane", "no-such-task"]), 2);
        assert_eq!(run(["membrane", "green", "--tol=-1"]), 2);
    }

    #[test]
    fn green_with_dense_check_writes_reports() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let cache = dir.path().join("cache");
        let code = run([
            "membrane",
            "green",
            "--n",
            "4",
            "--source",
            "2,2,2,2",
            "--check-dense",
            "--out",
            out.to_str().unwrap(),
            "--cache",
            cache.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = fs::read_to_string(out.join("green_n4.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["dense_max_relative_error"].as_f64().unwrap() < 1e-8);
        assert!(out.join("green_n4_2_2_2_2.mbf").exists());
        assert!(out.join("green_n4.meta.json").exists());
        assert!(cache.join("n4/index.json").exists());
    }
}
