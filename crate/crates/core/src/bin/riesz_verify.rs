use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use riesz_lab::harness::{self, emit, Suite, SuiteConfig, EXIT_CONFIG};
use riesz_lab::orthosys::Family;
use riesz_lab::LabError;

/// Run a verification suite and write report.json, report.csv and plot data.
#[derive(Debug, Parser)]
#[command(name = "riesz-verify", version)]
struct Cli {
    /// ortho, ladder, assumptions, form1, embedding, bellman, diffineq, normbound, constants or all
    suite: String,
    /// Restrict the run to one system, e.g. hermite-poly or jacobi-func
    #[arg(long)]
    system: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Dimension, at most 3
    #[arg(long)]
    d: Option<usize>,
    /// Truncation degree per axis
    #[arg(long = "N", short = 'N')]
    n: Option<usize>,
    /// Comma-separated exponents
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the report files
    #[arg(long, default_value = "riesz-report")]
    out: PathBuf,
    /// Tolerance override KEY=V, repeatable
    #[arg(long)]
    tol: Vec<String>,
}

fn config(cli: &Cli) -> Result<SuiteConfig, LabError> {
    let suite: Suite = cli.suite.parse()?;
    let mut cfg = SuiteConfig::new(suite);
    match &cli.system {
        Some(name) => cfg = cfg.with_systems(vec![Family::from_name(name, cli.alpha, cli.beta)?]),
        None if cli.alpha.is_some() || cli.beta.is_some() => {
            return Err(LabError::Argument("--alpha and --beta need --system".into()));
        }
        None => {}
    }
    cfg.d = cli.d;
    cfg.n = cli.n;
    cfg.p_list = cli.p.clone();
    cfg.trials = cli.trials;
    cfg.seed = cli.seed;
    cfg.output_dir = Some(cli.out.clone());
    for spec in &cli.tol {
        cfg.tolerances.apply_override(spec)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    if let Ok(v) = std::env::var("RIESZ_VERIFY_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("riesz-verify: RIESZ_VERIFY_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        }
    }
    let cfg = match config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("riesz-verify: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let report = match harness::run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("riesz-verify: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    for r in report.failures() {
        eprintln!("FAIL {}/{} value={:?} bound={:?} {}", r.suite, r.check, r.value, r.bound, r.note);
    }
    println!(
        "{}: {} checks, {} passed, {} failed in {:.1}s",
        report.suite, report.summary.total, report.summary.passed, report.summary.failed, report.wall_time_s
    );
    if let Err(e) = emit(&report, &cli.out) {
        eprintln!("riesz-verify: cannot write report: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    ExitCode::from(harness::exit_code(&report) as u8)
}
