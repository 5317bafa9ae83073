//! `mbeam` command-line front end.
//!
//! Every subcommand writes CSV (or TOML for path sets) to `--out`, or to
//! stdout when no path is given. Exit status is 0 on success, 2 on a usage
//! or configuration error and 1 when the simulation itself fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mbeam", version, about = "Multi-beam mmWave analog beamforming simulator")]
struct Cli {
    /// Print a short summary of each run to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Radiation pattern of a single or multi-beam as `angle_deg,gain_db`.
    Pattern(PatternArgs),
    /// Exhaustive beam training on a path set; writes `angle_deg,snr_db,side`.
    Train(TrainArgs),
    /// One probe round and constructive combining; writes `beam_id,angle_deg,delta_db,sigma_deg`.
    Probe(ProbeArgs),
    /// Per-path amplitudes from a CIR; writes `beam_id,alpha_db,alpha_phase_deg`.
    Superres(SuperresArgs),
    /// Replays per-beam power samples through the tracker; writes the tracker log.
    Track(TrackArgs),
    /// Monte Carlo link simulation; writes `scheme,reliability,mean_tput,overhead_ms,trp_product`.
    Sim(SimArgs),
    /// Probing air time per maintenance cycle; writes `scheme,antennas,overhead_ms`.
    Overhead(OverheadArgs),
    /// Parameter sweeps behind the analysis figures.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ArrayArgs {
    /// Number of array elements.
    #[arg(long, default_value_t = 8)]
    antennas: usize,
    /// Element spacing in wavelengths.
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    /// Carrier frequency in Hz.
    #[arg(long, default_value_t = 28e9)]
    carrier_hz: f64,
}

#[derive(Debug, Args)]
struct PatternArgs {
    /// Lobe directions in degrees, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "spec")]
    angles: Vec<f64>,
    /// Per-lobe amplitude in dB relative to the first lobe (default 0 each).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta_db: Vec<f64>,
    /// Per-lobe phase in degrees (default 0 each).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sigma_deg: Vec<f64>,
    /// Beam spec file with `angle_deg`, `delta_db`, `sigma_deg` per lobe.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    array: ArrayArgs,
    /// First grid angle in degrees.
    #[arg(long, default_value_t = -90.0, allow_hyphen_values = true)]
    start_deg: f64,
    /// Last grid angle in degrees.
    #[arg(long, default_value_t = 90.0, allow_hyphen_values = true)]
    stop_deg: f64,
    /// Grid step in degrees.
    #[arg(long, default_value_t = 0.1)]
    step_deg: f64,
    /// Phase shifter resolution in bits; enables quantization.
    #[arg(long, requires = "amp_range_db")]
    phase_bits: Option<u32>,
    /// Attenuator range in dB used with `--phase-bits`.
    #[arg(long, requires = "phase_bits")]
    amp_range_db: Option<f64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Path set file (fields aod_deg, aoa_deg, gain_db, phase_deg, tof_ns).
    #[arg(long)]
    config: PathBuf,
    /// Seed for the measurement noise.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    array: ArrayArgs,
    /// Codebook step in degrees.
    #[arg(long, default_value_t = 2.0)]
    step_deg: f64,
    /// Minimum peak prominence in dB.
    #[arg(long, default_value_t = 3.0)]
    prominence_db: f64,
    /// Transmit power over noise power, in dB.
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    snr_db: f64,
    /// Also write the estimated path set here.
    #[arg(long)]
    paths_out: Option<PathBuf>,
    /// Also write the probe ledger (`slot,probe_type,duration_ms,beam_id`) here.
    #[arg(long)]
    ledger_out: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Path set file (fields aod_deg, aoa_deg, gain_db, phase_deg, tof_ns).
    #[arg(long)]
    config: PathBuf,
    /// Transmit lobe directions in degrees, reference first.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    angles: Vec<f64>,
    /// Seed for the measurement noise.
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    array: ArrayArgs,
    /// Transmit power over per-subcarrier noise power, in dB.
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    snr_db: f64,
    /// Also write the probe ledger (`slot,probe_type,duration_ms,beam_id`) here.
    #[arg(long)]
    ledger_out: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct SuperresArgs {
    /// CIR file with rows `tap_index,re,im`.
    #[arg(long)]
    cir: PathBuf,
    /// Relative times of flight in ns, one per path.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    tofs_ns: Vec<f64>,
    /// Sampling bandwidth in MHz.
    #[arg(long, default_value_t = 400.0)]
    bandwidth_mhz: f64,
    /// Ridge weight; the dictionary default when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Power samples with rows `slot,beam_id,power_db`.
    #[arg(long)]
    input: PathBuf,
    /// Receive lobe directions in degrees, one per beam.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    angles: Vec<f64>,
    /// Tracker settings file; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    array: ArrayArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Scenario file; the default ensemble when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of trials; overrides the scenario file.
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; overrides the scenario file.
    #[arg(long)]
    seed: u64,
    /// Run trials on the calling thread only.
    #[arg(long)]
    sequential: bool,
    /// Directory for per-slot CSVs (`trial,slot,snr_db,se_bits_s_hz,outage,probing`), one per scheme.
    #[arg(long)]
    slots_dir: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct OverheadArgs {
    /// Number of array elements (power of two).
    #[arg(long, default_value_t = 8)]
    antennas: usize,
    /// Beams maintained by the multi-beam scheme.
    #[arg(long, default_value_t = 2)]
    beams: usize,
    /// Refinement phases per maintenance cycle.
    #[arg(long, default_value_t = 3)]
    phases: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Figure {
    /// Two-beam gain in dB over (delta_db, sigma_deg); 8 elements, channel at -3 dB, -40 deg.
    Sensitivity,
    /// Analytic reliability versus blockage probability for 1 to 3 beams.
    Reliability,
    /// Analytic throughput under blockage, single versus multi-beam.
    Throughput,
    /// Probing time in ms versus array size.
    Overhead,
    /// Matched two-beam gain in dB versus lobe separation in degrees.
    Separation,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Which sweep to run.
    #[arg(long, value_enum)]
    figure: Figure,
    /// Second-lobe amplitude in dB for the throughput sweep.
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    delta_db: f64,
    /// Base SNR in dB for the throughput sweep.
    #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
    snr_db: f64,
    /// Array size for the separation sweep.
    #[arg(long, default_value_t = 64)]
    antennas: usize,
    #[command(flatten)]
    out: OutArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
