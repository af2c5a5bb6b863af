//! Command-line front end.
//!
//! Data goes to stdout (or `--output`), diagnostics to stderr. Exit codes:
//! 0 success, 1 validation failure, 2 usage or domain error, 3 numerical
//! failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::excursion_law::{ranked_height_tail, RankedHeightQuery, SkewParam};
use crate::first_passage::{evaluate_curve, linear_grid, log_grid, CurveKind, DEFAULT_QUAD_TOL};
use crate::kernels::SeriesControl;
use crate::montecarlo::{first_passage_sample, ks_band, ks_distance, McConfig, Sampler};
use crate::validation::{self, analytic_cdf, Suite, ValidateOptions, DEFAULT_SEED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "skew-fpt", version, about = "First-passage times and excursion heights of skew Brownian motion")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Passage-time density and distribution function on a time grid
    Density(DensityArgs),
    /// Tail probabilities of the ranked excursion heights
    Excursions(ExcursionArgs),
    /// Monte Carlo first-passage times
    Simulate(SimulateArgs),
    /// Run validation suites
    Validate(ValidateArgs),
    /// Crossing densities between -1 and 1 for several skewness values
    Figure5(FigureArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write data here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SeriesArgs {
    /// Absolute tolerance for series truncation
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_terms: usize,
}

impl SeriesArgs {
    fn control(&self) -> Result<SeriesControl, Error> {
        SeriesControl::new(self.tol, self.max_terms)
    }
}

fn parse_skew(s: &str) -> Result<SkewParam, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[arg(long, value_parser = parse_skew)]
    alpha: SkewParam,
    #[arg(long, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, allow_hyphen_values = true)]
    y: f64,
    #[arg(long, default_value_t = 0.01)]
    t_min: f64,
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Space the grid evenly in log t (pass `false` for a linear grid)
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    log_grid: bool,
    #[arg(long, default_value_t = DEFAULT_QUAD_TOL)]
    quad_tol: f64,
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct ExcursionArgs {
    #[arg(long, value_parser = parse_skew)]
    alpha: SkewParam,
    /// Ranks, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1")]
    j: Vec<usize>,
    /// Levels, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    y: Vec<f64>,
    /// Times, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<f64>,
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SamplerArg {
    ExcursionFlip,
    SkewWalk,
}

impl From<SamplerArg> for Sampler {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::ExcursionFlip => Sampler::ExcursionFlip,
            SamplerArg::SkewWalk => Sampler::SkewWalk,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Emit {
    Samples,
    Summary,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SamplerArg::SkewWalk)]
    sampler: SamplerArg,
    #[arg(long, value_parser = parse_skew)]
    alpha: SkewParam,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    x: f64,
    #[arg(long, allow_hyphen_values = true)]
    y: f64,
    #[arg(long, default_value_t = 10_000)]
    paths: u64,
    /// Spatial step for skew-walk (default 0.02), time step for
    /// excursion-flip (default 4e-4)
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Emit::Summary)]
    emit: Emit,
    #[arg(long, default_value_t = DEFAULT_QUAD_TOL)]
    quad_tol: f64,
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, default_value = "all", value_parser = |s: &str| s.parse::<Suite>().map_err(|e| e.to_string()))]
    suite: Suite,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Skewness values for the ordering suite, comma separated
    #[arg(long, value_delimiter = ',', value_parser = parse_skew)]
    alpha: Vec<SkewParam>,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FigureArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_skew, default_value = "0.1,0.25,0.5,0.75,0.9")]
    alphas: Vec<SkewParam>,
    #[arg(long, default_value_t = 0.05)]
    t_min: f64,
    #[arg(long, default_value_t = 50.0)]
    t_max: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, default_value_t = DEFAULT_QUAD_TOL)]
    quad_tol: f64,
    #[command(flatten)]
    series: SeriesArgs,
    #[command(flatten)]
    out: OutputArgs,
}

enum Failure {
    /// A library error, with the query being evaluated when known.
    Lib(Error, Option<String>),
    Io(io::Error),
    Validation,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e, None)
    }
}

fn at_query(query: impl FnOnce() -> String) -> impl FnOnce(Error) -> Failure {
    move |e| Failure::Lib(e, Some(query()))
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.into())
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Density(a) => with_output(&a.out.output.clone(), stdout, |w| density(&a, w)),
        Command::Excursions(a) => with_output(&a.out.output.clone(), stdout, |w| excursions(&a, w)),
        Command::Simulate(a) => with_output(&a.out.output.clone(), stdout, |w| simulate(&a, w)),
        Command::Validate(a) => with_output(&a.output.clone(), stdout, |w| validate(&a, w, stderr)),
        Command::Figure5(a) => with_output(&a.out.output.clone(), stdout, |w| figure5(&a, w)),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Validation) => EXIT_VALIDATION,
        Err(Failure::Lib(e, query)) => {
            let _ = match query {
                Some(q) => writeln!(stderr, "error: {e} (query: {q})"),
                None => writeln!(stderr, "error: {e}"),
            };
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
        // a closed downstream pipe (`| head`) is not an error
        Err(Failure::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(Failure::Io(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn with_output(
    path: &Option<PathBuf>,
    stdout: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> Result<(), Failure>,
) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            body(stdout)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Round-trip representation: 17 significant digits, '.' as separator.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_table(w: &mut dyn Write, format: Format, header: &[&str], rows: &[Vec<f64>]) -> Result<(), Failure> {
    match format {
        Format::Csv => {
            writeln!(w, "{}", header.join(","))?;
            for row in rows {
                let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
        }
        Format::Json => {
            let records: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|row| header.iter().map(|h| h.to_string()).zip(row.iter().map(|&v| json!(v))).collect())
                .collect();
            serde_json::to_writer_pretty(&mut *w, &records)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn grid(t_min: f64, t_max: f64, points: usize, log: bool) -> Result<Vec<f64>, Error> {
    if log {
        log_grid(t_min, t_max, points)
    } else {
        linear_grid(t_min, t_max, points)
    }
}

fn density(a: &DensityArgs, w: &mut dyn Write) -> Result<(), Failure> {
    let ctrl = a.series.control()?;
    if !(a.t_min > 0.0) {
        return Err(Error::Domain {
            op: "density",
            reason: format!("--t-min must be positive, got {}", a.t_min),
        }
        .into());
    }
    let ts = grid(a.t_min, a.t_max, a.points, a.log_grid)?;
    let query = || format!("alpha={} x={} y={} t in [{}, {}]", a.alpha, a.x, a.y, a.t_min, a.t_max);
    let pdf = evaluate_curve(a.alpha, a.x, a.y, &ts, CurveKind::Density, ctrl, a.quad_tol, true).map_err(at_query(query))?;
    let cdf = evaluate_curve(a.alpha, a.x, a.y, &ts, CurveKind::Cdf, ctrl, a.quad_tol, true).map_err(at_query(query))?;
    let rows: Vec<Vec<f64>> = (0..ts.len())
        .map(|i| {
            vec![
                ts[i],
                pdf.values[i],
                cdf.values[i],
                pdf.error_bounds[i].max(cdf.error_bounds[i]),
            ]
        })
        .collect();
    write_table(w, a.out.format, &["t", "density", "cdf", "tail_bound"], &rows)
}

fn excursions(a: &ExcursionArgs, w: &mut dyn Write) -> Result<(), Failure> {
    let ctrl = a.series.control()?;
    let mut rows = Vec::new();
    for &j in &a.j {
        for &y in &a.y {
            for &t in &a.t {
                let tail = ranked_height_tail(a.alpha, RankedHeightQuery::new(j, y, t)?, ctrl)
                    .map_err(at_query(|| format!("alpha={} j={j} y={y} t={t}", a.alpha)))?;
                rows.push(vec![j as f64, y, t, tail.value]);
            }
        }
    }
    match a.out.format {
        // ranks print as integers
        Format::Csv => {
            writeln!(w, "j,y,t,tail")?;
            for r in &rows {
                writeln!(w, "{},{},{},{}", r[0] as usize, num(r[1]), num(r[2]), num(r[3]))?;
            }
            Ok(())
        }
        Format::Json => write_table(w, Format::Json, &["j", "y", "t", "tail"], &rows),
    }
}

#[derive(Serialize)]
struct SimulationSummary {
    sampler: String,
    alpha: SkewParam,
    x: f64,
    y: f64,
    step: f64,
    horizon: f64,
    seed: u64,
    n_paths: u64,
    n_censored: usize,
    ks: f64,
    band_99: f64,
    within_band: bool,
}

fn simulate(a: &SimulateArgs, w: &mut dyn Write) -> Result<(), Failure> {
    let sampler: Sampler = a.sampler.into();
    let step = a.step.unwrap_or(match sampler {
        Sampler::SkewWalk => 0.02,
        Sampler::ExcursionFlip => 4e-4,
    });
    let cfg = McConfig::new(sampler, step, a.horizon, a.paths, a.seed)?;
    let sample = first_passage_sample(&cfg, a.alpha, a.x, a.y)?;
    match a.emit {
        Emit::Samples => match a.out.format {
            Format::Csv => {
                writeln!(w, "t")?;
                for &t in &sample.samples {
                    writeln!(w, "{}", num(t))?;
                }
            }
            Format::Json => {
                serde_json::to_writer_pretty(&mut *w, &sample)?;
                writeln!(w)?;
            }
        },
        Emit::Summary => {
            let opts = ValidateOptions {
                ctrl: a.series.control()?,
                quad_tol: a.quad_tol,
                ..ValidateOptions::default()
            };
            let ks = ks_distance(&sample, analytic_cdf(a.alpha, a.x, a.y, &opts))?;
            if ks.is_nan() {
                return Err(Error::Domain {
                    op: "simulate",
                    reason: "analytic distribution function could not be evaluated".into(),
                }
                .into());
            }
            let band = ks_band(sample.samples.len());
            let summary = SimulationSummary {
                sampler: sampler.to_string(),
                alpha: a.alpha,
                x: a.x,
                y: a.y,
                step,
                horizon: a.horizon,
                seed: a.seed,
                n_paths: a.paths,
                n_censored: sample.n_censored,
                ks,
                band_99: band,
                within_band: ks <= band,
            };
            match a.out.format {
                Format::Csv => {
                    writeln!(w, "sampler,alpha,x,y,step,horizon,seed,n_paths,n_censored,ks,band_99,within_band")?;
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{},{},{},{}",
                        summary.sampler,
                        summary.alpha,
                        num(a.x),
                        num(a.y),
                        num(step),
                        num(a.horizon),
                        a.seed,
                        a.paths,
                        summary.n_censored,
                        num(ks),
                        num(band),
                        summary.within_band
                    )?;
                }
                Format::Json => {
                    serde_json::to_writer_pretty(&mut *w, &summary)?;
                    writeln!(w)?;
                }
            }
        }
    }
    Ok(())
}

fn validate(a: &ValidateArgs, w: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let mut opts = ValidateOptions {
        seed: a.seed,
        ..ValidateOptions::default()
    };
    if !a.alpha.is_empty() {
        opts.ordering_alphas = a.alpha.clone();
    }
    let reports = validation::run(a.suite, &opts)?;
    for r in &reports {
        stderr.write_all(r.render().as_bytes())?;
    }
    let passed = reports.iter().all(|r| r.passed);
    serde_json::to_writer_pretty(&mut *w, &json!({ "passed": passed, "reports": reports }))?;
    writeln!(w)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn figure5(a: &FigureArgs, w: &mut dyn Write) -> Result<(), Failure> {
    let ctrl = a.series.control()?;
    let ts = log_grid(a.t_min, a.t_max, a.points)?;
    let mut rows = Vec::new();
    for &alpha in &a.alphas {
        let up = evaluate_curve(alpha, -1.0, 1.0, &ts, CurveKind::Density, ctrl, a.quad_tol, true)
            .map_err(at_query(|| format!("alpha={alpha} x=-1 y=1")))?;
        let down = evaluate_curve(alpha, 1.0, -1.0, &ts, CurveKind::Density, ctrl, a.quad_tol, true)
            .map_err(at_query(|| format!("alpha={alpha} x=1 y=-1")))?;
        for (i, &t) in ts.iter().enumerate() {
            rows.push(vec![alpha.value(), t, up.values[i], down.values[i]]);
        }
    }
    write_table(w, a.out.format, &["alpha", "t", "density_minus1_to_1", "density_1_to_minus1"], &rows)
}
