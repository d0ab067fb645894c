//! `pa-lab`: runs experiments on the slowed-down pseudo-Anosov model and
//! writes CSV series, SVG plots, `summary.txt` and `config.resolved`.
//!
//! Exit status: 0 when every hard check passes, 1 when one fails, 2 for a
//! bad configuration, 3 for an I/O failure.

mod config;
mod experiments;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::builder::PossibleValuesParser;
use clap::Parser;

use config::{ConfigError, ExperimentConfig};
use experiments::{dispatch, IoFailure, Run, SUBCOMMANDS};

#[derive(Parser, Debug)]
#[command(name = "pa-lab", version, about = "Slowed-down pseudo-Anosov laboratory")]
struct Cli {
    /// Experiment to run.
    #[arg(value_parser = PossibleValuesParser::new(SUBCOMMANDS))]
    subcommand: String,
    /// Config file (sectioned key = value); defaults apply to missing keys.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides as `section.key=value` or a bare unique `key=value`.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| IoFailure(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        cfg.set_override(o)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(a) = cli.alpha {
        cfg.model.alpha = a;
    }
    if let Some(m) = cli.mu {
        cfg.model.mu = m;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    // Fail on bad model parameters before any work starts.
    cfg.model()?;
    Ok(cfg)
}

fn status_of(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if e.downcast_ref::<IoFailure>().is_some() || e.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    match e.downcast_ref::<palab::Error>() {
        Some(palab::Error::InvalidParam(_)) => 2,
        Some(palab::Error::Io(_) | palab::Error::Csv(_)) => 3,
        _ => 1,
    }
}

/// Runs one experiment into `dir`. Runtime failures other than I/O and
/// configuration become a failed check so the summary is still written.
fn run_one(cfg: &ExperimentConfig, sub: &str, dir: PathBuf, workers: usize) -> Result<bool> {
    let mut run = Run::create(cfg, sub, dir, workers)?;
    if let Err(e) = dispatch(&mut run) {
        if status_of(&e) != 1 {
            return Err(e);
        }
        run.check("completed", false, format!("{e:#}"));
    }
    run.finish()?;
    for c in &run.checks {
        println!("{} {sub}: {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(run.passed())
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = resolve(cli)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(|e| anyhow::anyhow!("worker pool: {e}"))?;
    let workers = pool.current_num_threads();
    let sub = cli.subcommand.as_str();
    pool.install(|| {
        if sub != "report" {
            return run_one(&cfg, sub, cfg.out.clone(), workers);
        }
        let mut report = Run::create(&cfg, "report", cfg.out.clone(), workers)?;
        for &part in SUBCOMMANDS.iter().filter(|&&s| s != "report") {
            let ok = run_one(&cfg, part, cfg.out.join(part), workers)?;
            report.check(part, ok, format!("see {part}/summary.txt"));
        }
        report.finish()?;
        Ok(report.passed())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("pa-lab: {e:#}");
            ExitCode::from(status_of(&e))
        }
    }
}
