use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lspsim::scenario::{self, SimError, Simulation};

#[derive(Parser)]
#[command(name = "lspsim", version, about = "Discrete-event MPLS/RSVP-TE network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for output files.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Write packets.csv.
        #[arg(long)]
        csv: bool,
        /// Write trace.txt with one line per event.
        #[arg(long)]
        trace: bool,
        /// Write summary.txt.
        #[arg(long)]
        summary: bool,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_SIGNALING: u8 = 2;

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, SimError> {
    File::create(path).map(BufWriter::new).map_err(io_error(path))
}

fn run(
    scenario_path: &Path,
    seed: Option<u64>,
    out_dir: &Path,
    csv: bool,
    trace: bool,
    summary: bool,
) -> Result<(), SimError> {
    let text = fs::read_to_string(scenario_path).map_err(io_error(scenario_path))?;
    let mut config = scenario::parse(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if csv || trace || summary {
        fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    }
    let mut sim = Simulation::new(config)?;
    if trace {
        sim = sim.with_trace(create(&out_dir.join("trace.txt"))?);
    }
    let report = sim.run()?;
    if csv {
        let path = out_dir.join("packets.csv");
        let mut out = create(&path)?;
        scenario::write_packets_csv(&mut out, sim.deliveries())
            .and_then(|_| out.flush())
            .map_err(io_error(&path))?;
    }
    if summary {
        let path = out_dir.join("summary.txt");
        let mut out = create(&path)?;
        scenario::write_summary(&mut out, &report)
            .and_then(|_| out.flush())
            .map_err(io_error(&path))?;
    }
    print!("{}", scenario::summary_text(&report));
    eprintln!("runtime={:.3}s", report.runtime.as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        scenario,
        seed,
        out_dir,
        csv,
        trace,
        summary,
    } = cli.command;
    match run(&scenario, seed, &out_dir, csv, trace, summary) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lspsim: {e}");
            match e {
                SimError::Signaling(_) => ExitCode::from(EXIT_SIGNALING),
                _ => ExitCode::from(EXIT_CONFIG),
            }
        }
    }
}
