//! `csifb`: dataset generation, codebook and network evaluation, training,
//! complexity accounting and report consolidation.
//!
//! Failures print one line, `error[<class>]: <message>`, to stderr and exit
//! with a class-specific nonzero code.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csifb_core::config::{ExperimentConfig, ReportFormat};
use csifb_core::error::Error;
use csifb_core::experiment;
use csifb_core::report::{to_csv, ReportRow};

#[derive(Parser)]
#[command(name = "csifb", version, about = "Implicit CSI feedback experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the configured one, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset and write the train/val/test splits.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured sample count.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Type I codebook on the test split.
    EvalType1 {
        #[command(flatten)]
        common: Common,
    },
    /// Type II codebook on the test split.
    EvalType2 {
        #[command(flatten)]
        common: Common,
    },
    /// Train one network per configured feedback budget.
    Train {
        #[command(flatten)]
        common: Common,
        /// Print a progress line every this many epochs (0 = silent).
        #[arg(long, default_value_t = 10)]
        progress: usize,
    },
    /// Evaluate trained networks on the test split.
    EvalNn {
        #[command(flatten)]
        common: Common,
    },
    /// Parameter and FLOP counts of the configured networks.
    Complexity {
        #[command(flatten)]
        common: Common,
    },
    /// Consolidate run directories into one table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories; every reporting subdirectory of the output
        /// directory when omitted.
        runs: Vec<PathBuf>,
        /// Table format when no config is given.
        #[arg(long, value_parser = ["csv", "json"])]
        format: Option<String>,
    },
}

struct Failure {
    class: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            class: e.class(),
            message: e.to_string(),
        }
    }
}

fn exit_code(class: &str) -> u8 {
    match class {
        "usage" => 2,
        "config" => 3,
        "io" => 4,
        "format" => 5,
        "contract" => 6,
        "domain" => 7,
        "degenerate" => 8,
        _ => 1,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let path = common.config.as_ref().ok_or_else(|| Failure {
        class: "usage",
        message: "--config <path> is required".into(),
    })?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&ExperimentConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn print_rows(rows: &[ReportRow]) -> Result<(), Failure> {
    print!("{}", to_csv(rows)?);
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Gen { common, count } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = count {
                cfg.count = n;
            }
            let out = out_dir(&common, Some(&cfg));
            for w in experiment::gen(&cfg, &out)? {
                println!("{} {} {} {}", w.split, w.count, w.sha256, w.path.display());
            }
        }
        Command::EvalType1 { common } => {
            let cfg = load_config(&common)?;
            print_rows(&[experiment::eval_type1(&cfg, &out_dir(&common, Some(&cfg)))?])?;
        }
        Command::EvalType2 { common } => {
            let cfg = load_config(&common)?;
            print_rows(&[experiment::eval_type2(&cfg, &out_dir(&common, Some(&cfg)))?])?;
        }
        Command::Train { common, progress } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, Some(&cfg));
            let summaries = experiment::train(&cfg, &out, &mut |scheme, r| {
                if progress > 0 && (r.epoch + 1) % progress == 0 {
                    eprintln!(
                        "{scheme} epoch {} train_loss {:.5} val_loss {:.5} lr {:.2e}",
                        r.epoch + 1,
                        r.train_loss,
                        r.val_loss,
                        r.lr
                    );
                }
            })?;
            println!("scheme,best_epoch,untrained_val_rho,best_val_rho,history_sha256");
            for s in summaries {
                let best = s.best_epoch.map_or(String::new(), |e| e.to_string());
                println!(
                    "{},{best},{},{},{}",
                    s.scheme, s.untrained_val_rho, s.best_val_rho, s.history_sha256
                );
            }
        }
        Command::EvalNn { common } => {
            let cfg = load_config(&common)?;
            print_rows(&experiment::eval_nn(&cfg, &out_dir(&common, Some(&cfg)))?)?;
        }
        Command::Complexity { common } => {
            let cfg = load_config(&common)?;
            let rows = experiment::complexity(&cfg)?;
            if let Some(out) = common.out.as_ref().or(cfg.out.as_ref()) {
                std::fs::create_dir_all(out).map_err(|e| Failure {
                    class: "io",
                    message: format!("{}: {e}", out.display()),
                })?;
                let path = out.join("complexity.csv");
                std::fs::write(&path, to_csv(&rows)?).map_err(|e| Failure {
                    class: "io",
                    message: format!("{}: {e}", path.display()),
                })?;
            }
            print_rows(&rows)?;
        }
        Command::Report { common, runs, format } => {
            let cfg = match &common.config {
                Some(_) => Some(load_config(&common)?),
                None => None,
            };
            let fmt = match (format.as_deref(), &cfg) {
                (Some("json"), _) => ReportFormat::Json,
                (Some(_), _) => ReportFormat::Csv,
                (None, Some(c)) => c.report_format,
                (None, None) => ReportFormat::Csv,
            };
            let out = out_dir(&common, cfg.as_ref());
            print_rows(&experiment::report(fmt, &runs, &out)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(exit_code("usage"));
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let one_line = f.message.split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error[{}]: {one_line}", f.class);
            ExitCode::from(exit_code(f.class))
        }
    }
}
