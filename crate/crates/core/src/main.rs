use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use paramexp::harness::{
    preset, preset_names, run_experiment, summarize_episode_log, summary_rows, write_outputs,
    write_summary_csv, ExperimentConfig, SummaryRow,
};
use paramexp::Result;

#[derive(Parser)]
#[command(name = "paramexp", version, about = "Tuned exploration schedules for bandits and a glucose MDP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config file or a preset name.
    Run {
        config: String,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the built-in configs.
    ListPresets {
        /// Print the full TOML of each preset.
        #[arg(long)]
        verbose: bool,
    },
    /// Recompute the summary table from an episode log.
    Summarize { episode_log: PathBuf },
}

fn load(config: &str) -> Result<ExperimentConfig> {
    let path = Path::new(config);
    if path.exists() {
        ExperimentConfig::from_path(path)
    } else {
        preset(config)
    }
}

fn print_summary(rows: &[SummaryRow]) -> Result<()> {
    write_summary_csv(rows, std::io::stdout().lock())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, replicates, seed, out_dir, workers } => {
            let mut cfg = load(&config)?;
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            cfg.validate()?;
            eprintln!(
                "running {}: {} variants x {} replicates, T = {}",
                cfg.name,
                cfg.variants.len(),
                cfg.replicates,
                cfg.horizon
            );
            let out = run_experiment(&cfg, workers)?;
            let paths = write_outputs(&out, &cfg.out_dir)?;
            print_summary(&summary_rows(&out))?;
            if out.n_failures() > 0 {
                eprintln!("warning: {} episode(s) failed; see metadata", out.n_failures());
            }
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::ListPresets { verbose } => {
            for name in preset_names() {
                let cfg = preset(&name)?;
                if verbose {
                    println!("# {name}\n{}", cfg.resolved()?.to_toml_string()?);
                } else {
                    println!(
                        "{name}\t{} T={} R={} variants={}",
                        cfg.environment.kind(),
                        cfg.horizon,
                        cfg.replicates,
                        cfg.variants.len()
                    );
                }
            }
        }
        Command::Summarize { episode_log } => {
            let f = std::fs::File::open(&episode_log)
                .map_err(|e| paramexp::Error::Io(format!("{}: {e}", episode_log.display())))?;
            print_summary(&summarize_episode_log(std::io::BufReader::new(f))?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                paramexp::Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
