//! `cs-solver`: signs, solve, certify, oracle and sweep for spherical mixed
//! p-spin models given as `{"terms": [[p, c_p], ...], "h": h}`.
//!
//! Exit codes: 0 success or certified, 2 input error, 3 uncertified,
//! 4 certification failed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cs_core::solver::oracle::{grid_oracle_with, OracleOptions};
use cs_core::solver::sweep::linspace;
use cs_core::{
    certify_with, family_from_pattern, sign_pattern, solve, sweep, MeasureSpec, MixedModel,
    SolveOptions, SolveReport, SolveStatus, Tolerances,
};

const EXIT_INPUT: u8 = 2;
const EXIT_UNCERTIFIED: u8 = 3;
const EXIT_CERTIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "cs-solver", version, about = "Certified Crisanti-Sommers solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sign pattern of the discriminant, with certified root enclosures.
    Signs {
        #[command(flatten)]
        io: Io,
        /// Also emit the ansatz family derived from the pattern.
        #[arg(long)]
        family: bool,
    },
    /// Minimize the functional and attach a duality certificate.
    Solve {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Certify a given measure.
    Certify {
        #[command(flatten)]
        io: Io,
        /// Measure JSON, or a solve report whose measure is used.
        #[arg(long, value_name = "FILE")]
        measure: PathBuf,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Brute-force bracket on a uniform grid.
    Oracle {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_name = "N", default_value_t = 2000)]
        grid: usize,
        #[arg(long, default_value_t = 1e-10)]
        fw_tol: f64,
        #[arg(long, default_value_t = 20_000)]
        max_iter: usize,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Solve every (beta, h) cell; coefficients are scaled by beta^2.
    Sweep {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_name = "A:B:N")]
        beta_range: String,
        #[arg(long, value_name = "A:B:N", default_value = "0:0:1")]
        h_range: String,
        #[arg(long, value_name = "K", env = "CS_SOLVER_JOBS")]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct Io {
    /// Model JSON file, or the JSON itself.
    #[arg(long, value_name = "FILE|JSON")]
    model: String,
    /// Write here instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TolArgs {
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long)]
    quad_tol: Option<f64>,
    #[arg(long)]
    coin_tol: Option<f64>,
    #[arg(long)]
    root_tol: Option<f64>,
    #[arg(long)]
    fp_tol: Option<f64>,
}

#[derive(Args)]
struct SolverArgs {
    #[command(flatten)]
    tol: TolArgs,
    /// Solver options JSON; flags given on the command line take precedence.
    #[arg(long, value_name = "FILE")]
    options: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    starts: Option<usize>,
    /// Outer iteration budget; 0 skips the search.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl TolArgs {
    fn apply(&self, mut t: Tolerances) -> Result<Tolerances> {
        let fields = [
            (&mut t.gap_tol, self.gap_tol),
            (&mut t.quad_tol, self.quad_tol),
            (&mut t.coin_tol, self.coin_tol),
            (&mut t.root_tol, self.root_tol),
            (&mut t.fp_tol, self.fp_tol),
        ];
        for (slot, value) in fields {
            if let Some(v) = value {
                *slot = v;
            }
        }
        t.validate()?;
        Ok(t)
    }
}

impl SolverArgs {
    fn options(&self) -> Result<SolveOptions> {
        let mut opts = match &self.options {
            Some(path) => serde_json::from_str(&read(path)?)
                .with_context(|| format!("parsing options {}", path.display()))?,
            None => SolveOptions::default(),
        };
        opts.tolerances = self.tol.apply(opts.tolerances)?;
        if let Some(s) = self.seed {
            opts.seed = s;
        }
        if let Some(s) = self.starts {
            opts.starts = s;
        }
        if let Some(m) = self.max_iter {
            opts.max_iter = m;
        }
        Ok(opts)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(arg: &str) -> Result<MixedModel> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read(Path::new(arg))?
    };
    serde_json::from_str(&text).context("parsing model")
}

fn load_measure(path: &Path) -> Result<MeasureSpec> {
    let text = read(path)?;
    if let Ok(spec) = serde_json::from_str::<MeasureSpec>(&text) {
        return Ok(spec);
    }
    serde_json::from_str::<SolveReport>(&text)
        .map(|r| r.measure)
        .map_err(|_| anyhow!("{} is neither a measure nor a solve report", path.display()))
}

fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        bail!("range {s:?} must look like a:b:n");
    };
    let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
    let n: usize = n.trim().parse()?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        bail!("range {s:?} needs finite ends and n >= 1");
    }
    Ok(linspace(a, b, n))
}

fn emit(output: &Option<PathBuf>, body: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(output: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    emit(output, &body)
}

#[derive(Serialize)]
struct SignsOutput {
    #[serde(flatten)]
    pattern: cs_core::SignPattern,
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<cs_core::AnsatzFamily>,
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Signs { io, family } => {
            let model = load_model(&io.model)?;
            let pattern = sign_pattern(&model, Tolerances::default().root_tol);
            let family = family.then(|| family_from_pattern(&pattern));
            emit_json(&io.output, &SignsOutput { pattern, family })?;
            Ok(0)
        }
        Command::Solve { io, solver } => {
            let model = load_model(&io.model)?;
            let report = solve(&model, &solver.options()?)?;
            emit_json(&io.output, &report)?;
            Ok(match report.status {
                SolveStatus::Certified => 0,
                SolveStatus::Uncertified => EXIT_UNCERTIFIED,
            })
        }
        Command::Certify { io, measure, tol } => {
            let model = load_model(&io.model)?;
            let tol = tol.apply(Tolerances::default())?;
            let mu = load_measure(&measure)?.bind(&model)?;
            let cert = certify_with(&model, &mu, &tol)?;
            emit_json(&io.output, &cert)?;
            Ok(if cert.is_certified() { 0 } else { EXIT_CERTIFY_FAILED })
        }
        Command::Oracle {
            io,
            grid,
            fw_tol,
            max_iter,
            tol,
        } => {
            let model = load_model(&io.model)?;
            if !(fw_tol > 0.0) {
                bail!("fw_tol must be positive");
            }
            let opts = OracleOptions {
                fw_tol,
                max_iter,
                tolerances: tol.apply(Tolerances::default())?,
            };
            emit_json(&io.output, &grid_oracle_with(&model, grid, &opts)?)?;
            Ok(0)
        }
        Command::Sweep {
            io,
            solver,
            beta_range,
            h_range,
            jobs,
            format,
        } => {
            let model = load_model(&io.model)?;
            let (betas, hs) = (parse_range(&beta_range)?, parse_range(&h_range)?);
            let opts = solver.options()?;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(k) = jobs {
                if k == 0 {
                    bail!("--jobs must be at least 1");
                }
                pool = pool.num_threads(k);
            }
            let rows = pool.build()?.install(|| sweep(&model, &betas, &hs, &opts));
            match format {
                Format::Json => emit_json(&io.output, &rows)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    for row in &rows {
                        w.serialize(row)?;
                    }
                    emit(&io.output, &String::from_utf8(w.into_inner()?)?)?;
                }
            }
            let all_failed = rows.iter().all(|r| r.status.starts_with("error"));
            Ok(if all_failed { EXIT_INPUT } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
