use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use mbeam::array::{pattern_csv, quantize, AngleGrid, ArrayGeometry};
use mbeam::beamgen::{delta_db, multi_beam_weights, MultiBeamSpec};
use mbeam::channel::{Cir, Endpoints, PathSet, SubcarrierGrid};
use mbeam::combiner::{optimize_beams, probe_round, recover_all_beams, ProbeLink};
use mbeam::exec::Execution;
use mbeam::ledger::{ProbeLedger, SsbAccounting};
use mbeam::linksim::scenario::{run_scenario, ScenarioConfig};
use mbeam::linksim::{
    default_sensitivity_grid, probing_overhead_ms, reliability_curve_csv, sensitivity_map, separation_gain_db,
    throughput_curve_csv, OverheadScheme, SensitivitySetup,
};
use mbeam::superres::{estimate_amplitudes, SuperresConfig};
use mbeam::tracker::{estimate_rotation, tracker_log_csv, BeamPattern, Event, TrackerConfig, TrackerState};
use mbeam::trainer::{train, ScanSetup, TrainingConfig};
use mbeam::{db_to_lin, lin_to_db, Complex64};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::{
    ArrayArgs, Cli, Command, Figure, OutArg, OverheadArgs, PatternArgs, ProbeArgs, SimArgs, SuperresArgs, SweepArgs,
    TrackArgs, TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or input files.
    Config(String),
    /// The pipeline failed on valid input, or output could not be written.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<mbeam::Error> for CliError {
    fn from(e: mbeam::Error) -> Self {
        use mbeam::Error as E;
        match e {
            E::AngleOutOfRange(_) | E::InvalidInput(_) | E::LengthMismatch { .. } | E::Parse(_) | E::DelayOutOfSpan { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Pattern(a) => pattern(a),
        Command::Train(a) => train_cmd(a, verbose),
        Command::Probe(a) => probe(a, verbose),
        Command::Superres(a) => superres(a),
        Command::Track(a) => track(a),
        Command::Sim(a) => sim(a, verbose),
        Command::Overhead(a) => overhead(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: &OutArg, text: &str) -> CliResult<()> {
    match &out.out {
        Some(p) => write_file(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("cannot write to stdout: {e}"))),
    }
}

fn geometry(a: &ArrayArgs) -> CliResult<ArrayGeometry> {
    Ok(ArrayGeometry::new(a.antennas, a.spacing, a.carrier_hz)?)
}

/// Fills a per-lobe list to `n` entries with zeros, rejecting other lengths.
fn per_lobe(values: &[f64], n: usize, flag: &str) -> CliResult<Vec<f64>> {
    match values.len() {
        0 => Ok(vec![0.0; n]),
        len if len == n => Ok(values.to_vec()),
        len => Err(CliError::Config(format!("--{flag} has {len} entries, expected {n}"))),
    }
}

fn equal_spec(angles: &[f64]) -> CliResult<MultiBeamSpec> {
    let zeros = vec![0.0; angles.len()];
    Ok(MultiBeamSpec::from_db(angles, &zeros, &zeros)?)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let text = read_text(path)?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn pattern(a: PatternArgs) -> CliResult<()> {
    let geom = geometry(&a.array)?;
    let spec = match &a.spec {
        Some(p) => MultiBeamSpec::from_toml(&read_text(p)?)?,
        None if a.angles.is_empty() => return Err(CliError::Config("give --angles or --spec".into())),
        None => {
            let n = a.angles.len();
            MultiBeamSpec::from_db(&a.angles, &per_lobe(&a.delta_db, n, "delta-db")?, &per_lobe(&a.sigma_deg, n, "sigma-deg")?)?
        }
    };
    let mut w = multi_beam_weights(&geom, &spec)?;
    if let (Some(bits), Some(range)) = (a.phase_bits, a.amp_range_db) {
        w = quantize(&w, bits, range)?;
    }
    let grid = AngleGrid::new(a.start_deg, a.stop_deg, a.step_deg)?;
    emit(&a.out, &pattern_csv(&geom, &w, &grid)?)
}

fn train_cmd(a: TrainArgs, verbose: bool) -> CliResult<()> {
    let ps = PathSet::from_toml(&read_text(&a.config)?)?;
    let geom = geometry(&a.array)?;
    let arrays = Endpoints::new(geom, geom);
    let cfg = TrainingConfig {
        codebook: AngleGrid::new(-90.0, 90.0, a.step_deg)?,
        min_prominence_db: a.prominence_db,
        setup: ScanSetup {
            link: ProbeLink { tx_power: db_to_lin(a.snr_db), noise_power: 1.0 },
            subcarriers: SubcarrierGrid::default(),
        },
        ..TrainingConfig::default()
    };
    let mut ledger = ProbeLedger::new(SsbAccounting::PerSsb);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let result = train(&ps, &arrays, &cfg, &mut ledger, 0, Some(&mut rng))?;

    let mut csv = result.tx_profile.to_csv();
    csv.extend(result.rx_profile.to_csv().lines().skip(1).flat_map(|l| [l, "\n"]));
    emit(&a.out, &csv)?;
    if let Some(p) = &a.paths_out {
        write_file(p, &result.association.to_path_set(ps.carrier_hz())?.to_toml())?;
    }
    if let Some(p) = &a.ledger_out {
        write_file(p, &ledger.to_csv())?;
    }
    if verbose {
        eprintln!(
            "found {} paths{}; {} probes, {} ms",
            result.association.paths.len(),
            if result.association.ambiguous { " (ambiguous association)" } else { "" },
            ledger.len(),
            ledger.total_ms()
        );
    }
    Ok(())
}

fn probe(a: ProbeArgs, verbose: bool) -> CliResult<()> {
    if a.angles.len() < 2 {
        return Err(CliError::Config("combining needs at least two --angles".into()));
    }
    let ps = PathSet::from_toml(&read_text(&a.config)?)?;
    let geom = geometry(&a.array)?;
    let arrays = Endpoints::tx_only(geom);
    let base = equal_spec(&a.angles)?;
    let link = ProbeLink { tx_power: db_to_lin(a.snr_db), noise_power: 1.0 };
    let omni = mbeam::array::WeightVector::omni();
    let mut ledger = ProbeLedger::new(SsbAccounting::PerSsb);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let grid = SubcarrierGrid::default();
    let reports = probe_round(&ps, &arrays, &base, &omni, &link, &grid, &mut ledger, 0, Some(&mut rng))?;
    let channels = recover_all_beams(&geom, &reports)?;
    let estimates = optimize_beams(&channels, Some((&geom, &a.angles)))?;

    let mut out = String::from("beam_id,angle_deg,delta_db,sigma_deg\n");
    for (b, (angle, est)) in a.angles.iter().zip(&estimates).enumerate() {
        let _ = writeln!(out, "{b},{angle},{},{}", delta_db(est.delta), est.sigma_rad.to_degrees());
    }
    emit(&a.out, &out)?;
    if let Some(p) = &a.ledger_out {
        write_file(p, &ledger.to_csv())?;
    }
    if verbose {
        eprintln!("{} probes, {} ms", ledger.len(), ledger.total_ms());
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TapRow {
    tap_index: usize,
    re: f64,
    im: f64,
}

fn superres(a: SuperresArgs) -> CliResult<()> {
    let rows: Vec<TapRow> = read_csv(&a.cir)?;
    let len = rows.iter().map(|r| r.tap_index + 1).max().unwrap_or(0);
    if len == 0 {
        return Err(CliError::Config(format!("{} has no taps", a.cir.display())));
    }
    let mut taps = vec![Complex64::new(0.0, 0.0); len];
    for r in &rows {
        taps[r.tap_index] = Complex64::new(r.re, r.im);
    }
    let cir = Cir::from_taps(taps, a.bandwidth_mhz * 1e6)?;
    let tofs: Vec<f64> = a.tofs_ns.iter().map(|t| t * 1e-9).collect();
    let cfg = SuperresConfig { lambda: a.lambda.or(SuperresConfig::default().lambda), ..SuperresConfig::default() };
    let est = estimate_amplitudes(&cir, &tofs, &cfg)?;
    let mut out = String::from("beam_id,alpha_db,alpha_phase_deg\n");
    for (b, alpha) in est.alphas.iter().enumerate() {
        let _ = writeln!(out, "{b},{},{}", lin_to_db(alpha.norm_sqr()), alpha.arg().to_degrees());
    }
    emit(&a.out, &out)
}

#[derive(Debug, Deserialize)]
struct PowerRow {
    slot: u64,
    beam_id: usize,
    power_db: f64,
}

fn track(a: TrackArgs) -> CliResult<()> {
    let cfg = match &a.config {
        Some(p) => TrackerConfig::from_toml(&read_text(p)?)?,
        None => TrackerConfig::default(),
    };
    let beams = a.angles.len();
    let geom = geometry(&a.array)?;
    let w = multi_beam_weights(&geom, &equal_spec(&a.angles)?)?;
    let rx = BeamPattern::new(&geom, &w)?;

    let mut by_slot: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for r in read_csv::<PowerRow>(&a.input)? {
        if r.beam_id >= beams {
            return Err(CliError::Config(format!("beam {} at slot {} but only {beams} angles", r.beam_id, r.slot)));
        }
        by_slot.entry(r.slot).or_insert_with(|| vec![None; beams])[r.beam_id] = Some(r.power_db);
    }

    let mut state = TrackerState::new(beams, cfg)?;
    let mut rows = Vec::new();
    for (slot, powers) in by_slot {
        let powers: Vec<f64> = powers
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| CliError::Config(format!("slot {slot} is missing a beam")))?;
        state.ingest_power_db(slot, &powers)?;
        if state.sample_count() < state.config().blockage_span {
            rows.extend(state.log_rows(None, 0));
            continue;
        }
        let event = state.classify_event()?;
        if event == Event::Rotation && state.should_refine() {
            let est = estimate_rotation(&state, rx, &a.angles)?;
            rows.extend(state.log_rows(Some(est.phi_deg), 0));
            state.mark_refined(slot);
        } else {
            rows.extend(state.log_rows(None, 0));
        }
    }
    emit(&a.out, &tracker_log_csv(&rows))
}

fn sim(a: SimArgs, verbose: bool) -> CliResult<()> {
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::from_toml(&read_text(p)?)?,
        None => ScenarioConfig::default(),
    };
    cfg.seed = a.seed;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if a.sequential {
        cfg.exec = Execution::Sequential;
    }
    cfg.record_slots = a.slots_dir.is_some();
    cfg.validate()?;

    let report = run_scenario(&cfg)?;
    emit(&a.out, &report.aggregate_csv())?;
    if let Some(dir) = &a.slots_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        for s in &report.schemes {
            let text = report.slots_csv(s.scheme).unwrap_or_default();
            write_file(&dir.join(format!("slots_{}.csv", s.scheme.label())), &text)?;
        }
    }
    if verbose {
        eprintln!("{} trials of {} slots, seed {}", cfg.trials, cfg.num_slots(), cfg.seed);
    }
    Ok(())
}

fn overhead(a: OverheadArgs) -> CliResult<()> {
    let multi = probing_overhead_ms(OverheadScheme::MultiBeam { beams: a.beams }, a.antennas, a.phases)?;
    let nr = probing_overhead_ms(OverheadScheme::NrSweep, a.antennas, a.phases)?;
    let mut out = String::from("scheme,antennas,overhead_ms\n");
    let _ = writeln!(out, "mmreliable_k{},{},{multi}", a.beams, a.antennas);
    let _ = writeln!(out, "nr_sweep,{},{nr}", a.antennas);
    emit(&a.out, &out)
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    let betas: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let text = match a.figure {
        Figure::Sensitivity => {
            let (delta, sigma) = default_sensitivity_grid();
            sensitivity_map(&SensitivitySetup::default(), &delta, &sigma, Execution::Sequential)?.to_csv()
        }
        Figure::Reliability => reliability_curve_csv(&betas)?,
        Figure::Throughput => throughput_curve_csv(&betas, 10f64.powf(a.delta_db / 20.0), db_to_lin(a.snr_db))?,
        Figure::Overhead => {
            let mut out = String::from("antennas,nr_sweep_ms,mmreliable_k2_ms,mmreliable_k3_ms\n");
            let phases = mbeam::linksim::DEFAULT_REFINEMENT_PHASES;
            for n in (3..=8).map(|p| 1usize << p) {
                let _ = writeln!(
                    out,
                    "{n},{},{},{}",
                    probing_overhead_ms(OverheadScheme::NrSweep, n, phases)?,
                    probing_overhead_ms(OverheadScheme::MultiBeam { beams: 2 }, n, phases)?,
                    probing_overhead_ms(OverheadScheme::MultiBeam { beams: 3 }, n, phases)?
                );
            }
            out
        }
        Figure::Separation => {
            let geom = ArrayGeometry::ula(a.antennas);
            let mut out = String::from("separation_deg,gain_db\n");
            for s in 1..=60 {
                let _ = writeln!(out, "{s},{}", separation_gain_db(&geom, s as f64)?);
            }
            out
        }
    };
    emit(&a.out, &text)
}
