mod compare;
mod config;
mod experiments;
mod plot;
mod store;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use clap::{Parser, Subcommand};

use crate::experiments::{Outcome, EXPERIMENTS};
use crate::store::RunRecord;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 2.
    Usage(String),
    Io(String),
}

const EXIT_DRIFT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "horolab", version, about = "Run and compare horolab experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment: `run <name> [--key value ...] [--seed N] [--out DIR] [--config FILE] [--baseline GOLDEN]`.
    Run {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// List experiments and their parameters.
    List {
        /// Also list the runs stored under this directory.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// Compare a run against a golden file, or write one with --bless.
    Compare {
        record: PathBuf,
        golden: PathBuf,
        #[arg(long)]
        bless: bool,
        #[arg(long, default_value_t = compare::DEFAULT_TOL)]
        tol: f64,
    },
    /// Render the series of a run as SVG.
    Plot {
        record: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shortcut for `run bianchi-<op>` that also prints the results.
    Bianchi {
        #[arg(value_parser = ["reduce", "height", "sheets", "margulis", "nondiv", "density-probe"])]
        op: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { args } => run(&args, false),
        Command::List { runs } => list(runs.as_deref()),
        Command::Compare { record, golden, bless, tol } => compare_cmd(&record, &golden, bless, tol),
        Command::Plot { record, out } => plot_cmd(&record, out),
        Command::Bianchi { op, args } => {
            let mut full = vec![format!("bianchi-{op}")];
            full.extend(args);
            run(&full, true)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn run(args: &[String], echo: bool) -> Result<u8, CliError> {
    let env_out = std::env::var_os("HOROLAB_OUT").map(PathBuf::from);
    let cfg = config::resolve(args, env_out)?;
    let golden = match &cfg.baseline {
        Some(path) => Some(compare::parse_golden(store::read_json(path)?)?),
        None => None,
    };
    let spec = experiments::find(&cfg.experiment).expect("resolved experiment");
    let started = now();
    let params = config::Params(cfg.params.clone());
    let outcome = std::panic::catch_unwind(|| (spec.run)(&params, cfg.seed))
        .unwrap_or_else(|_| Err(horolab::HoroError::InvalidArgument("internal panic".into())));
    let finished = now();
    let dir = store::new_run_dir(&cfg, &Utc::now().format("%Y%m%dT%H%M%SZ").to_string())?;

    let (out, error) = match outcome {
        Ok(out) => (out, None),
        Err(e) => (Outcome::default(), Some(e.to_string())),
    };
    let failed = out.verdicts.iter().filter(|v| !v.pass).count();
    let status = match (&error, failed) {
        (Some(_), _) => "error",
        (None, 0) => "pass",
        _ => "fail",
    };
    let record = RunRecord {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        started,
        finished,
        status: status.into(),
        error: error.clone(),
        results: out.results.clone(),
        verdicts: out.verdicts.clone(),
    };
    store::write_json(&dir.join("record.json"), &record)?;
    println!("run: {}", dir.display());
    if let Some(e) = &error {
        eprintln!("error: {} failed: {e}", cfg.experiment);
        return Ok(EXIT_INTERNAL);
    }

    let payload = store::results_payload(&cfg, &out);
    store::write_json(&dir.join("results.json"), &payload)?;
    for t in &out.tables {
        store::write_table(&dir, t)?;
    }
    if !out.series.is_empty() {
        let path = dir.join("plot.svg");
        std::fs::write(&path, plot::svg(&cfg.experiment, &out.series)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    if echo {
        println!("{}", serde_json::to_string_pretty(&out.results).expect("json"));
    }
    for v in &out.verdicts {
        println!("{} {} (margin {:.4e})", if v.pass { "PASS" } else { "FAIL" }, v.id, v.margin);
    }

    let mut code = if failed > 0 { EXIT_DRIFT } else { 0 };
    if let Some(g) = golden {
        let drifts = compare::compare(&payload, &g);
        store::write_json(&dir.join("drift.json"), &drifts)?;
        println!("baseline: {} drifting field(s)", drifts.len());
        if !drifts.is_empty() {
            code = EXIT_DRIFT;
        }
    }
    Ok(code)
}

fn list(runs: Option<&Path>) -> Result<u8, CliError> {
    for e in EXPERIMENTS {
        println!("{:<22} {}", e.name, e.about);
        for p in e.params {
            println!("    --{:<12} {:<8} {}", p.name, p.default, p.help);
        }
    }
    if let Some(out) = runs {
        println!();
        for r in store::stored_runs(out) {
            let status = store::read_json(&r.join("record.json"))
                .ok()
                .and_then(|v| v["status"].as_str().map(String::from))
                .unwrap_or_else(|| "?".into());
            println!("{status:<6} {}", r.display());
        }
    }
    Ok(0)
}

fn compare_cmd(record: &Path, golden: &Path, bless: bool, tol: f64) -> Result<u8, CliError> {
    let results = store::read_json(&store::results_path(record))?;
    if bless {
        if !(tol >= 0.0) {
            return Err(CliError::Usage(format!("--tol must be nonnegative, got {tol}")));
        }
        store::write_json(golden, &compare::bless(&results, tol))?;
        println!("blessed {}", golden.display());
        return Ok(0);
    }
    let g = compare::parse_golden(store::read_json(golden)?)?;
    let drifts = compare::compare(&results, &g);
    println!("{}", serde_json::to_string_pretty(&drifts).expect("json"));
    Ok(if drifts.is_empty() { 0 } else { EXIT_DRIFT })
}

fn plot_cmd(record: &Path, out: Option<PathBuf>) -> Result<u8, CliError> {
    let path = store::results_path(record);
    let results = store::read_json(&path)?;
    let series: Vec<experiments::Series> = serde_json::from_value(results["series"].clone())
        .map_err(|e| CliError::Usage(format!("{}: no plottable series ({e})", path.display())))?;
    if series.is_empty() {
        return Err(CliError::Usage(format!("{}: run has no series", path.display())));
    }
    let title = results["experiment"].as_str().unwrap_or("run");
    let target = out.unwrap_or_else(|| path.with_file_name("plot.svg"));
    std::fs::write(&target, plot::svg(title, &series)).map_err(|e| CliError::Io(format!("{}: {e}", target.display())))?;
    println!("{}", target.display());
    Ok(0)
}
