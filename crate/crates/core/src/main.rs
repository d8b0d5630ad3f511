use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use nfisac::array::WavefrontModel;
use nfisac::sim::{
    default_probe_grid, run_beampattern, run_se_vs_bandwidth, run_se_vs_snr, Compensation,
    DesignDump, Preset, SimConfig, Trial, Workspace,
};
use nfisac::{Error, Result};

#[derive(Parser)]
#[command(name = "nfisac", version, about = "Near-field wideband ISAC hybrid beamforming sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML file with SimConfig fields; applied on top of the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = PresetArg::Paper)]
    preset: PresetArg,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true, value_enum)]
    bsa: Option<Switch>,
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Mean spectral efficiency against SNR.
    SeVsSnr,
    /// Mean spectral efficiency against bandwidth, with and without compensation.
    SeVsBandwidth,
    /// Subcarrier-averaged beampattern of one design.
    Beampattern {
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, default_value_t = 121)]
        probe_directions: usize,
        #[arg(long, default_value_t = 60)]
        probe_ranges: usize,
    },
    /// One hybrid design as JSON.
    DesignDump {
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Nearfield,
    Farfield,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn build_config(c: &Common) -> Result<SimConfig> {
    let preset = match c.preset {
        PresetArg::Paper => Preset::Paper,
        PresetArg::Desk => Preset::Desk,
    };
    let mut cfg = SimConfig::preset(preset);
    if let Some(path) = &c.config {
        cfg = cfg.overlay_file(path)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = c.mode {
        cfg.mode = match m {
            ModeArg::Nearfield => WavefrontModel::NearField,
            ModeArg::Farfield => WavefrontModel::FarField,
        };
    }
    if let Some(b) = c.bsa {
        cfg.compensation = match b {
            Switch::On => Compensation::Bsa,
            Switch::Off => Compensation::None,
        };
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(&cli.common)?;
    match &cli.command {
        Command::SeVsSnr => {
            let table = run_se_vs_snr(&cfg)?;
            table.write_csv(output(&cli.common.out)?)?;
        }
        Command::SeVsBandwidth => {
            let table = run_se_vs_bandwidth(&cfg)?;
            table.write_csv(output(&cli.common.out)?)?;
        }
        Command::Beampattern {
            trial,
            probe_directions,
            probe_ranges,
        } => {
            if *probe_directions == 0 || *probe_ranges == 0 {
                return Err(Error::Config("probe grid must be non-empty".into()));
            }
            let ws = Workspace::new(&cfg)?;
            let t = Trial::draw(&ws, *trial, cfg.bandwidth)?;
            let design = t.design(&ws, cfg.mode)?;
            let probe = default_probe_grid(&cfg, *probe_directions, *probe_ranges);
            let report = run_beampattern(&ws, &t, &design, &probe, cfg.compensation == Compensation::Bsa)?;
            report.write_csv(output(&cli.common.out)?)?;
        }
        Command::DesignDump { trial } => {
            let ws = Workspace::new(&cfg)?;
            let t = Trial::draw(&ws, *trial, cfg.bandwidth)?;
            let design = t.design(&ws, cfg.mode)?;
            let dump = DesignDump::new(&cfg, *trial, &t.targets, &ws.dictionary(cfg.mode)?.grid, &design);
            let mut out = output(&cli.common.out)?;
            dump.write_json(&mut out)?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
