//! Suite orchestration: configuration in, [`SuiteReport`] and exit code out.

pub mod config;
pub mod report;
pub mod suites;

use std::time::Instant;

pub use config::{default_systems, Suite, SuiteConfig};
pub use report::{emit, read_records_csv, read_report, CheckRecord, Cmp, EmbeddingRow, EmitError, NormRow, Summary, SuiteReport};
use suites::SuiteOutput;

use crate::error::Result;

/// Exit status for a finished run: 0 when every check passed, 1 otherwise.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
/// Exit status for an invalid configuration.
pub const EXIT_CONFIG: i32 = 2;

fn run_one(suite: Suite, cfg: &SuiteConfig) -> SuiteOutput {
    match suite {
        Suite::Ortho => suites::ortho_suite(cfg),
        Suite::Ladder => suites::ladder_suite(cfg),
        Suite::Assumptions => suites::assumptions_suite(cfg),
        Suite::Form1 => suites::form1_suite(cfg),
        Suite::Embedding => suites::embedding_suite(cfg),
        Suite::Bellman => suites::bellman_suite(cfg),
        Suite::Diffineq => suites::diffineq_suite(cfg),
        Suite::Normbound => suites::normbound_suite(cfg),
        Suite::Constants => suites::constants_suite(cfg),
        Suite::All => {
            let mut out = SuiteOutput::default();
            for s in Suite::EACH {
                let part = run_one(s, cfg);
                out.records.extend(part.records);
                out.norm_rows.extend(part.norm_rows);
                out.embedding_rows.extend(part.embedding_rows);
            }
            out
        }
    }
}

/// Validate `cfg` and run its suite. Errors only on invalid configuration;
/// failing checks are reported in the records.
pub fn run(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let start = Instant::now();
    let out = run_one(cfg.suite, cfg);
    let mut report = SuiteReport::new(cfg.suite.name(), cfg.seed);
    report.records = out.records;
    report.norm_rows = out.norm_rows;
    report.embedding_rows = out.embedding_rows;
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.refresh_summary();
    Ok(report)
}

pub fn exit_code(report: &SuiteReport) -> i32 {
    if report.passed() { EXIT_PASS } else { EXIT_FAIL }
}
