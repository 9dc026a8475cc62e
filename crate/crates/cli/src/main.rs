use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use secagg_core::harness::{
    run_benchmark, run_experiment, selftest, BenchCell, BenchOp, BenchOptions, BenchScheme,
    ExperimentConfig, ExperimentError, RoundReport,
};
use secagg_core::SecurityProfile;

const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_SELFTEST: u8 = 4;

#[derive(Parser)]
#[command(
    name = "secagg",
    version,
    about = "Secure aggregation simulator and benchmarks"
)]
struct Cli {
    /// Overrides the seed of the config or benchmark.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run a FedAvg experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Time protect and aggregate over a scheme x dimension matrix.
    Bench {
        /// Comma-separated: jl, jl-naive, lom.
        #[arg(long, default_value = "jl,lom")]
        scheme: String,
        /// Comma-separated model dimensions; scientific notation allowed.
        #[arg(long, default_value = "1e2,1e3,1e4")]
        dims: String,
        #[arg(long, default_value = "test")]
        profile: SecurityProfile,
        /// Comma-separated cohort sizes.
        #[arg(long, default_value = "3")]
        nodes: String,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Comma-separated: protect, aggregate.
        #[arg(long, default_value = "protect,aggregate")]
        ops: String,
    },
    /// Run the invariant checks.
    Selftest,
}

struct Failure {
    code: u8,
    message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn list<T>(raw: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, Failure> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(s.trim()).ok_or_else(|| config_error(format!("invalid {what} `{s}`"))))
        .collect()
}

fn parse_count(s: &str) -> Option<usize> {
    if let Ok(v) = s.parse::<usize>() {
        return Some(v);
    }
    let v: f64 = s.parse().ok()?;
    (v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as usize)
}

/// Writes `text` to `dir/name`, or stdout without a directory.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .and_then(|_| fs::write(dir.join(name), text))
                .map_err(|e| {
                    config_error(format!("cannot write {}: {e}", dir.join(name).display()))
                })?;
            eprintln!("wrote {}", dir.join(name).display());
        }
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
    }
    Ok(())
}

fn reports_text(reports: &[RoundReport], format: Format) -> String {
    match format {
        Format::Json => reports
            .iter()
            .map(|r| serde_json::to_string(r).expect("reports serialize") + "\n")
            .collect(),
        Format::Csv => {
            let mut s = String::from(
                "tau,train_s,protect_s,aggregate_s,total_s,metric,checksum,fedavg_deviation\n",
            );
            for r in reports {
                s += &format!(
                    "{},{:.9},{:.9},{:.9},{:.9},{},{},{}\n",
                    r.tau,
                    r.train_s,
                    r.protect_s,
                    r.aggregate_s,
                    r.total_s,
                    r.metric,
                    r.checksum,
                    r.fedavg_deviation
                );
            }
            s
        }
    }
}

fn run(cli: &Cli, config: &Path) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(config).map_err(|e| config_error(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let format = cli.format.unwrap_or(Format::Json);
    let name = if format == Format::Json {
        "rounds.jsonl"
    } else {
        "rounds.csv"
    };
    let write = |reports: &[RoundReport]| -> Result<(), Failure> {
        let text = reports_text(reports, format);
        match (&cli.out, &cfg.output) {
            (Some(dir), _) => emit(Some(dir), name, &text),
            (None, Some(path)) => {
                let path = Path::new(path);
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(|e| config_error(e.to_string()))?;
                }
                fs::write(path, text).map_err(|e| config_error(e.to_string()))?;
                eprintln!("wrote {}", path.display());
                Ok(())
            }
            (None, None) => emit(None, name, &text),
        }
    };
    match run_experiment(&cfg) {
        Ok(result) => {
            write(&result.reports)?;
            if let Some(last) = result.reports.last() {
                eprintln!(
                    "{} rounds, final metric {:.6}, transcript {}",
                    result.reports.len(),
                    last.metric,
                    result.transcript.digest()
                );
            }
            Ok(())
        }
        Err(ExperimentError::Config(e)) => Err(config_error(e.to_string())),
        Err(err @ ExperimentError::Protocol { .. }) => {
            if let ExperimentError::Protocol { completed, .. } = &err {
                write(completed)?;
            }
            Err(Failure {
                code: EXIT_ABORT,
                message: err.to_string(),
            })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    cli: &Cli,
    scheme: &str,
    dims: &str,
    profile: SecurityProfile,
    nodes: &str,
    reps: usize,
    ops: &str,
) -> Result<(), Failure> {
    let schemes = list(scheme, "scheme", BenchScheme::parse)?;
    let dims = list(dims, "dimension", parse_count)?;
    let nodes = list(nodes, "cohort size", parse_count)?;
    let ops = list(ops, "op", |s| match s {
        "protect" => Some(BenchOp::Protect),
        "aggregate" => Some(BenchOp::Aggregate),
        _ => None,
    })?;
    if schemes.is_empty() || dims.is_empty() || nodes.is_empty() || ops.is_empty() {
        return Err(config_error("empty benchmark matrix"));
    }
    if let Some(&n) = nodes.iter().find(|&&n| n < 2) {
        return Err(config_error(format!(
            "cohort size must be at least 2, got {n}"
        )));
    }
    let mut cells = Vec::new();
    for &scheme in &schemes {
        for &n in &nodes {
            for &d in &dims {
                cells.push(BenchCell {
                    scheme,
                    d,
                    n,
                    profile,
                });
            }
        }
    }
    let opts = BenchOptions {
        reps: reps.max(1),
        ops,
        seed: cli.seed.unwrap_or(0),
        ..BenchOptions::default()
    };
    let report = run_benchmark(&cells, &opts).map_err(|e| Failure {
        code: EXIT_ABORT,
        message: e.to_string(),
    })?;
    for r in &report.ratios {
        eprintln!(
            "d={} n={} {}: jl/lom protect ratio {:.1}",
            r.d,
            r.n,
            r.profile.name(),
            r.jl_over_lom
        );
    }
    for f in &report.fits {
        eprintln!(
            "{} {} n={}: log-log slope {:.3} (R^2 {:.3})",
            f.scheme.name(),
            f.op.name(),
            f.n,
            f.slope,
            f.r_squared
        );
    }
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => emit(cli.out.as_deref(), "bench.csv", &report.to_csv()),
        Format::Json => {
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            emit(cli.out.as_deref(), "bench.json", &text)
        }
    }
}

fn run_selftest(cli: &Cli) -> Result<(), Failure> {
    let checks = selftest(cli.seed.unwrap_or(0));
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Json => serde_json::to_string_pretty(&checks).expect("checks serialize") + "\n",
        Format::Csv => checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                )
            })
            .collect(),
    };
    emit(cli.out.as_deref(), "selftest.txt", &text)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure {
            code: EXIT_SELFTEST,
            message: format!("{failed} of {} checks failed", checks.len()),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Bench {
            scheme,
            dims,
            profile,
            nodes,
            reps,
            ops,
        } => bench(&cli, scheme, dims, *profile, nodes, *reps, ops),
        Command::Selftest => run_selftest(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
