use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use primo::formalism::{experiment_povm, flash_history_povm, ExperimentSpec, Povm};
use primo::harness::{builtin, builtin_scenarios, run_acceptance, run_scenario, write_run_dir, ReportFormat, ScenarioConfig};
use primo::theories::TheoryId;
use primo::Error;

#[derive(Parser)]
#[command(name = "primo", version, about = "Toy GRW and Bohmian theories with primitive ontologies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, built in or from a JSON config.
    Run {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        scenario: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ensemble: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Run a named suite; `acceptance` runs every acceptance criterion.
    Suite {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Export a POVM as JSON.
    Povm {
        #[arg(long, default_value = "tiny-1p1")]
        model: String,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        /// Flash-history POVM of the joint model instead of the experiment POVM.
        #[arg(long)]
        histories: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List theories or scenarios.
    List {
        #[arg(value_enum, default_value = "scenarios")]
        what: ListWhat,
    },
    /// Print a built-in scenario's JSON config.
    Show { scenario: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum ListWhat {
    Theories,
    Scenarios,
}

fn emit(text: &str) -> primo::Result<()> {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn is_config_error(e: &Error) -> bool {
    match e {
        Error::Config(_) | Error::BadArgument(_) | Error::Json(_) | Error::Io(_) | Error::BadInit { .. } | Error::BadPartition(_) => true,
        Error::InRun { source, .. } => is_config_error(source),
        _ => false,
    }
}

fn load(scenario: Option<String>, config: Option<PathBuf>) -> primo::Result<ScenarioConfig> {
    match (scenario, config) {
        (Some(name), _) => builtin(&name),
        (None, Some(path)) => ScenarioConfig::from_json(&fs::read_to_string(path)?),
        (None, None) => Err(Error::Config("pass --scenario or --config".into())),
    }
}

fn run(cli: Cli) -> primo::Result<bool> {
    match cli.command {
        Command::Run { scenario, config, seed, ensemble, out, format } => {
            let mut cfg = load(scenario, config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if ensemble.is_some() {
                cfg.ensemble = ensemble;
            }
            cfg.validate()?;
            let output = run_scenario(&cfg)?;
            match format {
                Format::Json => emit(&output.report.to_json())?,
                Format::Csv => emit(output.report.to_csv().trim_end())?,
            }
            eprintln!("{}", output.report.summary());
            if let Some(dir) = out {
                let manifest = write_run_dir(&dir, &cfg.to_json(), &[(output.report.clone(), output.raw)], format.into())?;
                eprintln!("wrote {}", manifest.display());
            }
            Ok(output.report.passed())
        }
        Command::Suite { name, seed, out, format } => {
            if name != "acceptance" {
                return Err(Error::Config(format!("unknown suite {name:?}; available: acceptance")));
            }
            let results = run_acceptance(seed, |r| println!("{}", r.line()))?;
            if let Some(dir) = out {
                let mut reports = Vec::new();
                for r in &results {
                    for rep in &r.reports {
                        reports.push((rep.clone(), Vec::new()));
                    }
                }
                let cfgs: Vec<ScenarioConfig> = reports.iter().map(|(r, _)| builtin(&r.scenario)).collect::<primo::Result<_>>()?;
                let json = serde_json::to_string_pretty(&cfgs)?;
                let manifest = write_run_dir(&dir, &json, &reports, format.into())?;
                eprintln!("wrote {}", manifest.display());
            }
            Ok(results.iter().all(|r| r.passed))
        }
        Command::Povm { model, steps, histories, out } => {
            if model != "tiny-1p1" {
                return Err(Error::Config(format!("unknown model {model:?}; available: tiny-1p1")));
            }
            let spec = ExperimentSpec::tiny_1p1(steps)?;
            let povm = if histories {
                Povm::from_histories(&flash_history_povm(&spec.hamiltonian, &spec.params, steps, spec.dt)?)?
            } else {
                experiment_povm(&spec)?
            };
            let json = povm.to_json();
            match out {
                Some(p) => fs::write(p, json + "\n")?,
                None => emit(&json)?,
            }
            Ok(true)
        }
        Command::List { what } => {
            match what {
                ListWhat::Theories => {
                    for id in TheoryId::ALL {
                        println!("{:<9} {}", id.as_str(), id.description());
                    }
                }
                ListWhat::Scenarios => {
                    for s in builtin_scenarios() {
                        let theories: Vec<&str> = s.theories.iter().map(|t| t.as_str()).collect();
                        println!("{:<27} {:<20} {}", s.name, s.plan.name(), theories.join(","));
                    }
                }
            }
            Ok(true)
        }
        Command::Show { scenario } => {
            emit(&builtin(&scenario)?.to_json())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
