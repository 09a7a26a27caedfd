use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use csi_p2d::harness::config::{ExperimentConfig, Mode, Profile};
use csi_p2d::harness::{jobs, plot, results, run_sweep};
use csi_p2d::Result;

#[derive(Parser)]
#[command(name = "csi-p2d", version, about = "P2D estimation, ISTA feedback and differential encoding experiments")]
struct Cli {
    /// JSON file overlaid on the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for data, codecs and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk", value_parser = parse_profile)]
    profile: Profile,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a channel dataset (DCST file).
    Generate,
    /// NMSE of the P2D estimator over the pattern grid.
    P2dEval,
    /// Train one codec and save its checkpoint and history.
    Train,
    /// Train a differential chain and save its manifest and checkpoints.
    ChainTrain,
    /// Run the configured sweep and write CSV, SVG and manifest.
    Sweep,
    /// Redraw the charts of an existing results CSV.
    Plot {
        /// Results CSV; defaults to results.csv in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    s.parse().map_err(|e: csi_p2d::Error| e.to_string())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(cli.profile, p)?,
        None => ExperimentConfig::profile(cli.profile),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.resolve_seeds();
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Generate => {
            let p = jobs::generate_dataset(&cfg)?;
            println!("wrote {}", p.display());
        }
        Command::P2dEval | Command::Sweep => {
            if matches!(cli.command, Command::P2dEval) {
                cfg.mode = Mode::P2d;
            }
            let out = run_sweep(&cfg)?;
            for r in &out.rows {
                println!(
                    "dr_f={:.6} d={} cr={:.6} t={} {}: {:.3} dB",
                    r.dr_f, r.d, r.cr, r.timeslot, r.codec, r.nmse_db
                );
            }
            println!("wrote {} and {} chart(s)", out.csv.display(), out.charts.len());
        }
        Command::Train => {
            let out = jobs::train_codec(&cfg)?;
            println!("validation NMSE {:.3} dB", out.val_nmse_db);
            println!("wrote {}", cfg.output_dir.join(jobs::CODEC_FILE).display());
        }
        Command::ChainTrain => {
            let out = jobs::train_chain(&cfg)?;
            for (t, v) in out.val_nmse_db.iter().enumerate() {
                println!("t={} validation NMSE {:.3} dB", t + 1, v);
            }
            println!("wrote {}", cfg.output_dir.join(jobs::CHAIN_DIR).display());
        }
        Command::Plot { input } => {
            let input = input.unwrap_or_else(|| cfg.output_dir.join("results.csv"));
            let rows = results::read_csv(&input)?;
            for p in plot::write_charts(&rows, &cfg.output_dir)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
