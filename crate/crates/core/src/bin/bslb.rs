use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bslb::design::{get_good_subset, DesignSettings};
use bslb::harness::{lasso_bench, preset, run_experiment, ExperimentConfig, LassoBenchConfig, PRESET_NAMES};
use bslb::model::Instance;
use bslb::rng::from_seed;
use bslb::{Error, Result};

#[derive(Parser)]
#[command(name = "bslb", version, about = "Blocked sparse linear bandit simulator")]
struct Cli {
    /// Default output directory when a config names none.
    #[arg(long, env = "BSLB_OUTPUT_DIR", global = true)]
    output_dir: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, short = 'j', global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config.
    Run { config: PathBuf },
    /// Run a named preset, or write its config with --emit.
    Preset {
        name: String,
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Select an exploration subset for an instance file.
    Design {
        instance: PathBuf,
        #[arg(long)]
        u_hat: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        search: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Lasso l1-error scaling sweep.
    LassoBench {
        /// JSON file overriding the default sweep.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn print_summary(result: &bslb::harness::ExperimentResult) {
    println!("{:<16} {:>6} {:>12} {:>10}", "policy", "runs", "final_mean", "final_se");
    for p in &result.summary.policies {
        println!("{:<16} {:>6} {:>12.4} {:>10.4}", p.policy, p.runs, p.final_mean, p.final_se);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = cfg.output_dir.clone().or(cli.output_dir);
            let result = run_experiment(&cfg, dir.as_deref(), cli.jobs)?;
            print_summary(&result);
        }
        Command::Preset { name, emit } => {
            let cfg = preset(&name).ok_or_else(|| {
                Error::Config(vec![format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", "))])
            })?;
            if let Some(path) = emit {
                std::fs::write(path, cfg.to_json()?)?;
                return Ok(());
            }
            let dir = cli.output_dir.or(cfg.output_dir.clone());
            let result = run_experiment(&cfg, dir.as_deref(), cli.jobs)?;
            print_summary(&result);
        }
        Command::Design { instance, u_hat, repeats, search, seed } => {
            let inst = Instance::load(&instance)?;
            let design = get_good_subset(
                inst.arms(),
                u_hat,
                repeats,
                search,
                &DesignSettings::default(),
                None,
                &mut from_seed(seed),
            )?;
            println!("{}", serde_json::to_string_pretty(&design)?);
        }
        Command::LassoBench { config } => {
            let cfg = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => LassoBenchConfig::default(),
            };
            let result = lasso_bench(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
