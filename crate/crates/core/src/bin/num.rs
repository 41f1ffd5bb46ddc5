use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use netum::{
    em_run, emit_report, generate_instance, reference_solution, run_alg1, run_alg2, run_bench,
    Algorithm, BenchConfig, Direction, EmConfig, Error, InstanceSpec, MdConfig, Mode, NumProblem,
    ReportFormat, ResultFile, UtilitySpec,
};

/// Network utility maximization: instance generation, solvers, sweeps.
#[derive(Parser)]
#[command(name = "num", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.1)]
        b_min: f64,
        #[arg(long, default_value_t = 0.4)]
        b_max: f64,
        /// `log` or `power:ALPHA`
        #[arg(long, default_value = "log", value_parser = parse_utility)]
        utility: UtilitySpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one solver on an instance file.
    Solve(SolveArgs),
    /// Run a sweep described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        format: Option<ReportFormat>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact solution of a tiny instance.
    Oracle {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    algo: Algorithm,
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    theta0: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value = "log-shift")]
    mode: Mode,
    #[arg(long, default_value = "standard")]
    em_direction: Direction,
    /// Safety cap on iterations.
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_utility(s: &str) -> Result<UtilitySpec, String> {
    match s.split_once(':') {
        None if s == "log" => Ok(UtilitySpec::Log),
        Some(("power", a)) => a
            .parse()
            .map(|alpha| UtilitySpec::Power { alpha })
            .map_err(|e| format!("bad power exponent {a:?}: {e}")),
        _ => Err(format!(
            "unknown utility {s:?} (expected log or power:ALPHA)"
        )),
    }
}

fn write(path: &Path, text: &str) -> netum::Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    Ok(fs::write(path, text)?)
}

fn solve(args: &SolveArgs, problem: &NumProblem) -> netum::Result<ResultFile> {
    let SolveArgs {
        algo,
        eps,
        theta0,
        radius,
        mode,
        em_direction: direction,
        max_iters,
        ..
    } = *args;
    match algo {
        Algorithm::Md1 | Algorithm::Md2 => {
            let mut cfg = MdConfig::new(problem, eps, mode);
            if let Some(t) = theta0 {
                cfg = cfg.with_theta0(t);
            }
            if let Some(c) = max_iters {
                cfg = cfg.with_cap(c);
            }
            let report = if algo == Algorithm::Md1 {
                run_alg1(problem, &cfg)?
            } else {
                run_alg2(problem, &cfg)?
            };
            Ok(ResultFile::from(&report))
        }
        Algorithm::Em => {
            let mut cfg = EmConfig::new(problem, eps).with_direction(direction);
            if let Some(r) = radius {
                cfg = cfg.with_radius(r);
            }
            if let Some(c) = max_iters {
                cfg = cfg.with_max_iters(c);
            }
            Ok(ResultFile::from(&em_run(problem, &cfg)?))
        }
    }
}

fn run(cli: Cli) -> netum::Result<ExitCode> {
    match cli.command {
        Command::Gen {
            n,
            m,
            p,
            b_min,
            b_max,
            utility,
            seed,
            out,
        } => {
            let spec = InstanceSpec {
                n,
                m,
                p,
                b_min,
                b_max,
                utility,
                seed,
            };
            generate_instance(&spec)?.write(&out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve(args) => {
            let problem = NumProblem::read(&args.problem)?;
            let result = solve(&args, &problem)?;
            let out = args.out;
            write(&out, &serde_json::to_string_pretty(&result)?)?;
            if result.stop_reason.is_success() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("num: solver stopped with {}", result.stop_reason);
                Ok(ExitCode::from(3))
            }
        }
        Command::Bench {
            config,
            format,
            parallel,
            out,
        } => {
            let cfg = BenchConfig::from_json(&fs::read_to_string(&config)?)?;
            let format = format.or(cfg.format).unwrap_or(ReportFormat::Csv);
            let records = run_bench(&cfg, parallel)?;
            for r in records.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "num: {} on n = {}, m = {}, seed = {} failed: {}",
                    r.algorithm,
                    r.n,
                    r.m,
                    r.seed,
                    r.error.as_deref().unwrap_or_default()
                );
            }
            write(&out, &emit_report(&records, format)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { problem, out } => {
            let problem = NumProblem::read(&problem)?;
            let solution = reference_solution(&problem)?;
            write(&out, &serde_json::to_string_pretty(&solution)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("num: {e}");
            ExitCode::from(match e {
                Error::OracleRefused { .. } => 4,
                Error::NoProductiveSteps => 3,
                _ => 2,
            })
        }
    }
}
