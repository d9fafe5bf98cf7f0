use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use levy_coupling::harness::{run_experiment, ExperimentConfig, HarnessError, Report, Verdict, EXPERIMENTS};

#[derive(Parser)]
#[command(name = "levy-coupling", version, about = "Lévy-area coupling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write results.csv and summary.json.
    Run {
        #[arg(long)]
        experiment: String,
        /// Flat `key = value` configuration file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replaces one configuration entry; may be repeated.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load(experiment: String, config: PathBuf, seed: Option<u64>, out: Option<PathBuf>, overrides: &[String]) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(&config)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    for kv in overrides {
        cfg.apply_override(kv)?;
    }
    cfg.experiment = experiment;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_verdicts(rep: &Report) {
    for v in &rep.verdicts {
        let status = if v.pass { "PASS" } else { "FAIL" };
        let bounds = match (v.lower, v.upper) {
            (Some(l), Some(u)) => format!("[{l:.6e}, {u:.6e}]"),
            (Some(l), None) => format!(">= {l:.6e}"),
            (None, Some(u)) => format!("<= {u:.6e}"),
            (None, None) => String::new(),
        };
        println!("{status} {} = {:.6e} (err {:.2e}) {bounds}", v.name, v.estimate, v.error);
    }
}

fn main() -> ExitCode {
    let Command::Run { experiment, config, seed, out, overrides } = Cli::parse().command;
    let cfg = match load(experiment, config, seed, out, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, HarnessError::UnknownExperiment(_)) {
                eprintln!("known experiments: {}", EXPERIMENTS.join(", "));
                eprintln!("{}", Cli::command().render_usage());
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            let mut rep = Report { experiment: cfg.experiment.clone(), seed: cfg.seed, config: cfg.echo(), ..Default::default() };
            rep.push(Verdict::flag(&format!("run: {e}"), false));
            if let Err(w) = rep.write(&cfg.out) {
                eprintln!("error: {w}");
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    print_verdicts(&report);
    if let Err(e) = report.write(&cfg.out) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let failed = report.failures();
    if failed.is_empty() {
        println!("all {} checks passed; outputs in {}", report.verdicts.len(), cfg.out.display());
        ExitCode::SUCCESS
    } else {
        println!("{} of {} checks failed: {}", failed.len(), report.verdicts.len(), failed.join(", "));
        ExitCode::from(1)
    }
}
