//! `quench-winding`: winding numbers from quench overlaps, emission spectra
//! and emulated cold-atom densities.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure or
//! disagreement between methods, 3 IO.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{ColdAtomArgs, Output, SweepGrid};
use config::{grid, model_field, parse_model, thresholds, CliError, CliResult, FileConfig, ModelArg};

#[derive(Parser)]
#[command(name = "quench-winding", version, about = "Read winding numbers out of quench overlap profiles")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of k points (64 ..= 1048576).
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// RNG seed for sampled densities (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG line charts.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct ThresholdArgs {
    /// Samples at or above 1 - eps_hi count as high (default 0.02).
    #[arg(long, allow_negative_numbers = true)]
    eps_hi: Option<f64>,
    /// Samples at or below eps_lo count as low (default 0.02).
    #[arg(long, allow_negative_numbers = true)]
    eps_lo: Option<f64>,
    /// Sub-unity maxima at or above this are flagged (default 0.5).
    #[arg(long, allow_negative_numbers = true)]
    suspect_low: Option<f64>,
}

#[derive(Args)]
struct PairArgs {
    /// Pre-quench model, e.g. `qwz:m=1,t_s=2,t_so=1,n=3`.
    #[arg(long)]
    initial: Option<String>,
    /// Post-quench model.
    #[arg(long = "final")]
    final_model: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Bands, gauge angle and winding of one model.
    Model {
        /// e.g. `qwz:m=5,t_s=2,t_so=1,n=1`, `ssh:t1=0.5,t2=1`, `table:d.csv`.
        #[arg(long)]
        model: Option<String>,
    },
    /// Overlap profile and CP report of a quench.
    Quench {
        #[command(flatten)]
        pair: PairArgs,
        #[command(flatten)]
        th: ThresholdArgs,
        /// Compute cross-plane quenches without the CP guarantee.
        #[arg(long)]
        allow_cross_plane: bool,
    },
    /// Emission spectrum of a quench into a QWZ band and its inversion.
    Emission {
        #[command(flatten)]
        pair: PairArgs,
        /// Number of uniform ω bins (default 512).
        #[arg(long)]
        bins: Option<usize>,
        #[command(flatten)]
        th: ThresholdArgs,
    },
    /// Emulated spin-resolved densities and the readout pipeline.
    Coldatom {
        #[command(flatten)]
        pair: PairArgs,
        /// Atoms measured per momentum (default 1000).
        #[arg(long)]
        shots: Option<u64>,
        /// Start from the spin-polarized |down> state of the final lattice.
        #[arg(long)]
        polarized: bool,
        /// Read measured densities (`q,n_up,n_down,shots`) instead of sampling.
        #[arg(long)]
        densities: Option<PathBuf>,
        #[command(flatten)]
        th: ThresholdArgs,
    },
    /// All QWZ pairs over a parameter grid.
    Sweep {
        /// Mass values, comma separated (default 1,5).
        #[arg(long, value_delimiter = ',')]
        m: Vec<f64>,
        /// Harmonics, comma separated (default 0,1,2,3,4).
        #[arg(long, value_delimiter = ',')]
        n: Vec<u32>,
        /// Nearest-neighbour hopping (default 2).
        #[arg(long)]
        t_s: Option<f64>,
        /// Spin-orbit strengths, comma separated (default 0.5,1,3).
        #[arg(long, value_delimiter = ',')]
        t_so: Vec<f64>,
        /// Add a false_cps column; rows then only need a correct exact count.
        #[arg(long)]
        flag_false_cps: bool,
        #[command(flatten)]
        th: ThresholdArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Model { .. } => "model",
            Command::Quench { .. } => "quench",
            Command::Emission { .. } => "emission",
            Command::Coldatom { .. } => "coldatom",
            Command::Sweep { .. } => "sweep",
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    file.check_command(cli.command.name())?;
    let grid_n = cli.grid_n.or(file.grid_n);
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let out = || Output::new(cli.out.clone().or(file.out.clone()), cli.svg || file.svg);
    let th = |t: &ThresholdArgs| thresholds(&file.thresholds, t.eps_hi, t.eps_lo, t.suspect_low);

    match cli.command {
        Command::Model { ref model } => {
            let m = model_field(model.clone(), &file.model, "model")?;
            let g = grid(grid_n)?;
            commands::cmd_model(&m, g, &out()?)
        }
        Command::Quench { ref pair, th: ref t, allow_cross_plane } => {
            let (i, f) = pair_models(pair, &file)?;
            let (g, th) = (grid(grid_n)?, th(t)?);
            commands::cmd_quench(&i, &f, g, &th, allow_cross_plane || file.allow_cross_plane, &out()?)
        }
        Command::Emission { ref pair, bins, th: ref t } => {
            let (i, f) = pair_models(pair, &file)?;
            let bins = bins.or(file.bins).unwrap_or(quench_winding::emission::DEFAULT_BINS);
            let (g, th) = (grid(grid_n)?, th(t)?);
            commands::cmd_emission(&i, &f, g, bins, &th, &out()?)
        }
        Command::Coldatom { ref pair, shots, polarized, ref densities, th: ref t } => {
            let f = model_field(pair.final_model.clone(), &file.final_model, "final")?;
            let densities = densities.clone().or(file.densities.clone());
            let polarized = polarized || file.polarized;
            let initial = match (pair.initial.clone().or(file.initial.clone()), polarized) {
                (Some(_), true) => {
                    return Err(CliError::Config("--polarized replaces --initial; give only one".into()))
                }
                (Some(text), false) => Some(parse_model(&text)?),
                (None, true) => match &f {
                    ModelArg::Lattice(c) => Some(ModelArg::Lattice(c.polarized_down())),
                    _ => return Err(CliError::Config("--polarized needs a coldatom: final model".into())),
                },
                (None, false) => None,
            };
            let shots = shots.or(file.shots).unwrap_or(1000);
            let (g, th) = (grid(grid_n)?, th(t)?);
            let args = ColdAtomArgs {
                initial: initial.as_ref(),
                final_arg: &f,
                densities: densities.as_deref(),
                grid: g,
                shots,
                seed,
            };
            commands::cmd_coldatom(args, &th, &out()?)
        }
        Command::Sweep { ref m, ref n, t_s, ref t_so, flag_false_cps, th: ref t } => {
            let sweep = match &file.sweep {
                Some(s) => SweepGrid {
                    m: s.m.clone(),
                    n: s.n.clone(),
                    t_s: s.t_s.unwrap_or(2.0),
                    t_so: s.t_so.clone(),
                },
                None => SweepGrid::default_grid(),
            };
            let sweep = SweepGrid {
                m: if m.is_empty() { sweep.m } else { m.clone() },
                n: if n.is_empty() { sweep.n } else { n.clone() },
                t_s: t_s.unwrap_or(sweep.t_s),
                t_so: if t_so.is_empty() { sweep.t_so } else { t_so.clone() },
            };
            let (g, th) = (grid(grid_n)?, th(t)?);
            commands::cmd_sweep(&sweep, g, &th, flag_false_cps || file.flag_false_cps, &out()?)
        }
    }
}

fn pair_models(pair: &PairArgs, file: &FileConfig) -> CliResult<(ModelArg, ModelArg)> {
    Ok((
        model_field(pair.initial.clone(), &file.initial, "initial")?,
        model_field(pair.final_model.clone(), &file.final_model, "final")?,
    ))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
