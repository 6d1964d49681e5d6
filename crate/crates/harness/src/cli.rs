//! The `miis` command line.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use miis_core::models::mmpp::{format_events, simulate_mmpp};
use miis_core::models::MmppParams;
use miis_core::Stream;

use crate::bundle::{aggregate, read_bundle, read_csv, ResultBundle, TableRow};
use crate::config::{load_config, ConfigError};
use crate::oracle_check::{oracle_suite, ORACLE_TOLERANCE};
use crate::run::{diagnostics_summary, resolve_threads, run_experiment, write_outputs};
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(
    name = "miis",
    version,
    about = "Markov interacting importance samplers: experiments and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Worker threads (overrides the config; MIIS_THREADS overrides this).
        #[arg(long)]
        threads: Option<usize>,
        /// Base seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate a two-state MMPP and write an event-time file.
    SimulateMmpp {
        /// Intensities, comma separated, e.g. 10,17
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        psi: Vec<f64>,
        /// Switching rates q12,q21
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        q: Vec<f64>,
        #[arg(long)]
        window: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the MSE and diagnostics tables of a written bundle.
    Summarize { bundle: PathBuf },
    /// Exact stationarity checks on enumerated discrete kernels.
    OracleCheck,
}

/// Runs the command line and returns the exit code.
pub fn main_with(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io(e: std::io::Error) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, HarnessError> {
    match cmd {
        Command::Run { config, threads, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            let threads = resolve_threads(cfg.threads, threads)?;
            let dir = cfg.output_dir.clone();
            let bundle = run_experiment(&cfg, threads)?;
            write_outputs(&bundle, &dir)?;
            write!(out, "{}", format_table(&bundle.mse_table)).map_err(io)?;
            writeln!(out, "wrote {}", dir.display()).map_err(io)?;
            if !bundle.failures.is_empty() {
                let list: Vec<String> = bundle
                    .failures
                    .iter()
                    .map(|f| {
                        format!(
                            "({}, dataset {}, replication {}): {}",
                            f.method, f.dataset, f.replication, f.message
                        )
                    })
                    .collect();
                return Err(HarnessError::Runtime(format!(
                    "{} chain(s) failed:\n  {}",
                    list.len(),
                    list.join("\n  ")
                )));
            }
            Ok(0)
        }
        Command::SimulateMmpp {
            psi,
            q,
            window,
            seed,
            out: path,
        } => {
            let params = MmppParams::new(psi, q).map_err(|e| ConfigError::new("--psi/--q", e.to_string()))?;
            if !(window > 0.0 && window.is_finite()) {
                return Err(ConfigError::new("--window", "must be positive").into());
            }
            let times = simulate_mmpp(&params, window, &mut Stream::new(seed).rng())?;
            std::fs::write(&path, format_events(&times, Some(window)))
                .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))?;
            writeln!(out, "wrote {} events to {}", times.len(), path.display()).map_err(io)?;
            Ok(0)
        }
        Command::Summarize { bundle } => {
            let b = read_bundle(&bundle)?;
            let (_, rows) = aggregate(&b.config, &b.datasets, &b.methods)?;
            write!(out, "{}", format_table(&rows)).map_err(io)?;
            write!(out, "{}", format_diagnostics(&b)).map_err(io)?;
            if rows != b.mse_table {
                return Err(HarnessError::Runtime(
                    "recomputed table differs from the stored table".into(),
                ));
            }
            let csv = bundle.with_file_name("mse_table.csv");
            if csv.exists() && read_csv(&csv)? != rows {
                return Err(HarnessError::Runtime(format!(
                    "{} differs from the bundle",
                    csv.display()
                )));
            }
            Ok(0)
        }
        Command::OracleCheck => {
            let cases = oracle_suite()?;
            let mut failed = 0;
            for c in &cases {
                let status = if c.passed() { "PASS" } else { "FAIL" };
                failed += usize::from(!c.passed());
                writeln!(
                    out,
                    "{status} {:<32} states={:<4} max|p - pi/N^d|={:.3e} row defect={:.3e}",
                    c.name, c.states, c.max_deviation, c.max_row_defect
                )
                .map_err(io)?;
            }
            writeln!(
                out,
                "{} of {} cases within {ORACLE_TOLERANCE:e}",
                cases.len() - failed,
                cases.len()
            )
            .map_err(io)?;
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

pub fn format_table(rows: &[TableRow]) -> String {
    let mut s = format!(
        "{:<12} {:<18} {:>12} {:>10} {:>10} {:>9} {:>7}\n",
        "functional", "method", "mse", "rel_mse", "time_adj", "iact", "accept"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:<18} {:>12.4e} {:>10.4} {:>10.4} {:>9} {:>7.3}\n",
            r.functional,
            r.method,
            r.mse,
            r.relative_mse,
            r.time_adjusted_relative_mse,
            opt(r.mean_iact),
            r.acceptance
        ));
    }
    s
}

fn format_diagnostics(b: &ResultBundle) -> String {
    let mut s = format!(
        "\n{:<18} {:>9} {:>7} {:>14} {:>10}\n",
        "method", "iact", "accept", "evals/chain", "secs/chain"
    );
    for m in &b.methods {
        let (iact, acc, evals, wall) = diagnostics_summary(b)[&m.label];
        s.push_str(&format!(
            "{:<18} {:>9} {:>7.3} {:>14.0} {:>10.3}\n",
            m.label,
            opt(iact),
            acc,
            evals,
            wall
        ));
    }
    if !b.failures.is_empty() {
        s.push_str(&format!("{} failed replication(s)\n", b.failures.len()));
    }
    s
}
