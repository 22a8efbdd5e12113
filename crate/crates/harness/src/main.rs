use clap::{Parser, Subcommand};
use erosion_harness::config::ExperimentConfig;
use erosion_harness::record::RunRecord;
use erosion_harness::{find, registry, run_experiment};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "erosion", version, about = "Run and inspect erosion-flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List registered experiments.
    List,
    /// Show an experiment's description and parameters.
    Describe { name: String },
    /// Run an experiment; exits with 0 only if every criterion passes.
    Run {
        name: String,
        /// Parameter override, `key=value` (value parsed as JSON when possible).
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for results.json, CSV and SVG files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Flat JSON config; `name` must match and command-line flags win.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the report stored in a run directory.
    Report {
        dir: PathBuf,
        #[arg(long, short)]
        verbose: bool,
    },
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: Cli) -> erosion_harness::Result<bool> {
    match cli.command {
        Command::List => {
            for e in registry() {
                let crit: Vec<String> = e.criteria.iter().map(|c| c.to_string()).collect();
                println!("{:<24} criteria {:<6} {}", e.name, crit.join(","), e.title);
            }
            Ok(true)
        }
        Command::Describe { name } => {
            let e = find(&name)?;
            println!("{}\n\n{}\n\nparameters:", e.name, e.description);
            for p in e.params {
                println!("  {:<22} {:<10} default {:<32} {}", p.key, format!("{:?}", p.kind), p.default, p.help);
            }
            Ok(true)
        }
        Command::Run { name, params, seed, out, config } => {
            let mut cfg = match config {
                Some(path) => {
                    let c = ExperimentConfig::load(&path)?;
                    if c.name != name {
                        return Err(erosion_harness::HarnessError::InvalidParam {
                            key: "name".into(),
                            reason: format!("config is for {:?}, not {name:?}", c.name),
                        });
                    }
                    c
                }
                None => ExperimentConfig::new(&name),
            };
            for kv in &params {
                cfg.set_override(kv)?;
            }
            if let Some(s) = seed {
                cfg.root_seed = s;
            }
            if out.is_some() {
                cfg.output_dir = out;
            }
            let record = run_experiment(&cfg)?;
            print!("{}", record.render(true));
            Ok(record.pass)
        }
        Command::Report { dir, verbose } => {
            let record = RunRecord::load(&dir)?;
            print!("{}", record.render(verbose));
            Ok(record.pass)
        }
    }
}
