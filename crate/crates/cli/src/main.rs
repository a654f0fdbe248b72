use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irsec_cli::beampattern::{beampattern, display_lattice, eve_lattice, BeampatternGrid};
use irsec_cli::config::ConfigFile;
use irsec_cli::experiment::{execute, parse_seeds, write_outputs, ExperimentKind, ExperimentSpec};
use irsec_cli::format::sig9;
use irsec_cli::{CliError, Result};
use irsec_core::optimizer::alternate;
use irsec_core::scenario::Instance;
use serde_json::json;

#[derive(Parser)]
#[command(name = "irsec", version, about = "Robust secure IRS beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment over its sweep axis, schemes and seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        experiment: ExperimentKind,
        /// Seed list such as `0-19` or `1,4,7`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Record per-run wall times; outputs then differ between reruns.
        #[arg(long)]
        wall_clock: bool,
    },
    /// Check a config file and print it with every default filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Optimize one seed with the robust scheme and write its beampattern.
    Beampattern {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_grid(grid: &BeampatternGrid, path: &Path) -> Result<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut wtr = csv::Writer::from_path(path).map_err(csv_err)?;
    wtr.write_record(["theta_deg", "phi_deg", "gain_db"]).map_err(csv_err)?;
    for (a, g) in grid.points.iter().zip(&grid.gain_db) {
        let (th, ph) = a.to_degrees();
        wtr.write_record([sig9(th), sig9(ph), sig9(*g)]).map_err(csv_err)?;
    }
    wtr.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run_beampattern(cfg: &ConfigFile, out: &Path) -> Result<()> {
    let inst = Instance::build(&cfg.to_scenario(), cfg.seed)?;
    let result = alternate(&inst, cfg.seed);
    let pattern = beampattern(&result.w, &result.q, &inst, &display_lattice(&inst, cfg.beampattern_step_deg)?)?;
    let eves = beampattern(&result.w, &result.q, &inst, &eve_lattice(&inst))?;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    write_grid(&pattern, &out.join("beampattern.csv"))?;
    write_grid(&eves, &out.join("eve_lattice.csv"))?;
    let (su_theta, su_phi) = pattern.su_direction.to_degrees();
    let manifest = json!({
        "artifact": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": "beampattern",
        "seed": cfg.seed,
        "worst_case_asr": result.final_worst_case_asr,
        "su_direction_deg": [su_theta, su_phi],
        "max_eve_gain_db": eves.max_gain_db(),
        "feasible": result.feasibility.is_feasible(irsec_cli::experiment::FEASIBILITY_TOL),
        "failure": result.failure,
        "files": ["beampattern.csv", "eve_lattice.csv"],
        "config": cfg,
    });
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")
        .map_err(|source| CliError::Io { path, source })?;
    println!("max Eve-lattice gain {} dB", sig9(eves.max_gain_db()));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            experiment,
            seeds,
            out,
            jobs,
            wall_clock,
        } => {
            let cfg = ConfigFile::load(&config)?;
            let spec = ExperimentSpec::new(experiment, cfg, parse_seeds(&seeds)?)?;
            let output = execute(&spec, jobs, wall_clock)?;
            for path in write_outputs(&spec, &output, &out)? {
                println!("wrote {}", path.display());
            }
            if output.failed_rows > 0 {
                eprintln!("{} rows failed; see the error column", output.failed_rows);
            }
        }
        Command::Validate { config } => {
            let cfg = ConfigFile::load(&config)?;
            let text = serde_json::to_string_pretty(&cfg).expect("config serializes");
            // A closed pipe (e.g. `| head`) is not an error for a report command.
            let _ = writeln!(std::io::stdout(), "{text}");
        }
        Command::Beampattern { config, out } => run_beampattern(&ConfigFile::load(&config)?, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
