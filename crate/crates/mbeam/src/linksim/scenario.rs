//! Slot-stepped Monte Carlo over a moving, intermittently blocked link.
//!
//! The world is a 2-D room: the transmitter sits at the origin facing `+x`,
//! the receiver faces it from `link_distance_m` away, and walls parallel to
//! the link add one specular bounce each. Paths are recomputed every slot
//! from the receiver's position and orientation, so angles, delays and
//! carrier phases evolve continuously under motion.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{single_beam_weights, ArrayGeometry, WeightVector};
use crate::beamgen::{multi_beam_weights, reliability_first_rebalance, Lobe, MultiBeamSpec, DEFAULT_MIN_POWER_FLOOR};
use crate::channel::{
    complex_gaussian, effective_path_amplitudes, mean_grid_power, Endpoints, Material, Path, PathSet,
    SubcarrierGrid,
};
use crate::combiner::{optimize_beams, probe_round, recover_all_beams, ProbeLink};
use crate::exec::{map_indices, Execution};
use crate::ledger::{ProbeKind, ProbeLedger, SsbAccounting, CSI_RS_MS, SSB_MS};
use crate::linksim::nr_sweep_ssbs;
use crate::math::{db_to_lin, lin_to_db};
use crate::tracker::{
    estimate_rotation_from_decays, estimate_translation_from_decays, reallocate_on_blockage, resolve_ambiguity,
    BeamPattern, Event, TrackerConfig, TrackerState,
};
use crate::{Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Attenuation of a path arriving from behind an array.
const BACKLOBE_DB: f64 = -40.0;
/// Paths this far below the strongest are not worth a beam.
const BEAM_CANDIDATE_RANGE_DB: f64 = 20.0;
/// Below this much headroom over the outage threshold the strongest path
/// gets all the power.
const SPLIT_HEADROOM_DB: f64 = 10.0;
/// A blocked path counts as back once a probe sees it within this margin of
/// its pre-blockage level.
const RECOVERY_MARGIN_DB: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    /// Wall position: the line `y = offset_m`.
    pub offset_m: f64,
    pub material: Material,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub link_distance_m: f64,
    pub reflectors: Vec<Reflector>,
}

impl Room {
    fn validate(&self) -> Result<()> {
        if !(self.link_distance_m > 0.0) {
            return Err(Error::InvalidInput("link distance must be positive".into()));
        }
        if self.reflectors.len() + 1 > crate::channel::MAX_PATHS {
            return Err(Error::InvalidInput("too many reflectors".into()));
        }
        if self.reflectors.iter().any(|r| r.offset_m == 0.0 || !r.offset_m.is_finite()) {
            return Err(Error::InvalidInput("a wall cannot lie on the link axis".into()));
        }
        Ok(())
    }
}

/// Randomly drawn room: one wall on each side of the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomEnsemble {
    pub link_distance_m: (f64, f64),
    pub wall_offset_m: (f64, f64),
    pub materials: Vec<Material>,
}

impl Default for RoomEnsemble {
    fn default() -> Self {
        Self { link_distance_m: (4.0, 7.0), wall_offset_m: (1.5, 3.0), materials: Material::ALL.to_vec() }
    }
}

impl RoomEnsemble {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Room {
        let wall = |sign: f64, rng: &mut R| Reflector {
            offset_m: sign * rng.gen_range(self.wall_offset_m.0..=self.wall_offset_m.1),
            material: self.materials[rng.gen_range(0..self.materials.len())],
        };
        let link_distance_m = rng.gen_range(self.link_distance_m.0..=self.link_distance_m.1);
        let left = wall(1.0, rng);
        let right = wall(-1.0, rng);
        Room { link_distance_m, reflectors: vec![left, right] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RoomSource {
    Fixed(Room),
    Random(RoomEnsemble),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Mobility {
    None,
    /// Receiver spins in place.
    Rotation { deg_per_s: f64 },
    /// Receiver slides parallel to the transmit array.
    Translation { m_per_s: f64 },
    /// Each trial draws rotation or translation with a random direction.
    Mixed { deg_per_s: f64, m_per_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blocker {
    pub start_s: f64,
    pub duration_s: f64,
    pub path_ids: Vec<usize>,
    #[serde(default = "default_depth")]
    pub depth_db: f64,
}

fn default_depth() -> f64 {
    25.0
}

/// One blocker per trial with a uniformly drawn duration and start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomBlocker {
    pub duration_s: (f64, f64),
    pub depth_db: f64,
    pub path_ids: Vec<usize>,
}

impl Default for RandomBlocker {
    fn default() -> Self {
        Self { duration_s: (0.1, 0.5), depth_db: default_depth(), path_ids: vec![0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scheme {
    MmReliable { beams: usize },
    SingleReactive,
    Widebeam,
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::MmReliable { beams } => format!("mmreliable_k{beams}"),
            Scheme::SingleReactive => "single_reactive".into(),
            Scheme::Widebeam => "widebeam".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub room: RoomSource,
    pub mobility: Mobility,
    pub blockers: Vec<Blocker>,
    pub random_blocker: Option<RandomBlocker>,
    pub schemes: Vec<Scheme>,
    pub duration_s: f64,
    pub slot_s: f64,
    pub trials: usize,
    pub seed: u64,
    pub num_antennas: usize,
    /// SNR of the LOS path with aligned single beams at the start.
    pub los_snr_db: f64,
    pub outage_snr_db: f64,
    /// Consecutive outage slots before the reactive baseline rescans.
    pub detection_slots: usize,
    pub recovery_check_s: f64,
    pub min_power_share: f64,
    pub ssb_accounting: SsbAccounting,
    pub tracker: TrackerConfig,
    pub exec: Execution,
    /// Keep every slot of every trial in the report.
    pub record_slots: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            room: RoomSource::Random(RoomEnsemble::default()),
            mobility: Mobility::Mixed { deg_per_s: 24.0, m_per_s: 1.5 },
            blockers: Vec::new(),
            random_blocker: Some(RandomBlocker::default()),
            schemes: vec![Scheme::MmReliable { beams: 2 }, Scheme::SingleReactive, Scheme::Widebeam],
            duration_s: 1.0,
            slot_s: CSI_RS_MS * 1e-3,
            trials: 100,
            seed: 0,
            num_antennas: 8,
            los_snr_db: 20.0,
            outage_snr_db: 0.0,
            detection_slots: 10,
            recovery_check_s: 0.05,
            min_power_share: DEFAULT_MIN_POWER_FLOOR,
            ssb_accounting: SsbAccounting::PerSsb,
            tracker: TrackerConfig::default(),
            exec: Execution::Parallel,
            record_slots: false,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn num_slots(&self) -> u64 {
        (self.duration_s / self.slot_s).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.duration_s > 0.0) || !(self.slot_s > 0.0) || self.slot_s > self.duration_s {
            return bad("duration and slot length must be positive with slot <= duration");
        }
        if self.trials == 0 || self.schemes.is_empty() {
            return bad("need at least one trial and one scheme");
        }
        if self.num_antennas < 2 || !self.num_antennas.is_power_of_two() {
            return bad("antenna count must be a power of two >= 2");
        }
        if !(self.recovery_check_s > 0.0) || !(0.0..0.5).contains(&self.min_power_share) {
            return bad("recovery interval must be positive and power share in [0, 0.5)");
        }
        for b in &self.blockers {
            if !(b.start_s >= 0.0) || !(b.duration_s > 0.0) || b.start_s + b.duration_s > self.duration_s + 1e-12 {
                return bad("blocker interval must lie within the trial");
            }
        }
        if let Some(rb) = &self.random_blocker {
            if !(rb.duration_s.0 > 0.0) || rb.duration_s.1 < rb.duration_s.0 || rb.duration_s.1 > self.duration_s {
                return bad("random blocker duration range must fit in the trial");
            }
        }
        for s in &self.schemes {
            if let Scheme::MmReliable { beams } = s {
                if *beams == 0 || *beams > crate::beamgen::MAX_BEAMS {
                    return bad("multi-beam count out of range");
                }
            }
        }
        match &self.room {
            RoomSource::Fixed(room) => room.validate(),
            RoomSource::Random(e) => {
                if e.materials.is_empty() || !(e.link_distance_m.0 > 0.0) || !(e.wall_offset_m.0 > 0.0) {
                    return bad("room ensemble ranges must be positive with at least one material");
                }
                Ok(())
            }
        }
    }

    fn slots_for_ms(&self, ms: f64) -> u64 {
        ((ms * 1e-3) / self.slot_s).round().max(1.0) as u64
    }
}

/// Aggregate link quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    /// Fraction of slots neither in outage nor spent probing.
    pub reliability: f64,
    /// Mean spectral efficiency over all slots, bits/s/Hz.
    pub mean_throughput: f64,
    pub probing_overhead_ms: f64,
    pub throughput_reliability_product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub metrics: LinkMetrics,
    pub outage_slots: u64,
    pub probing_slots: u64,
    pub total_slots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub trial: usize,
    pub slot: u64,
    /// SNR of the beams in place; on probing slots no data is carried.
    pub snr_db: f64,
    pub se_bits_s_hz: f64,
    pub outage: bool,
    pub probing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub aggregate: LinkMetrics,
    pub trials: Vec<TrialMetrics>,
    pub slots: Vec<SlotRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schemes: Vec<SchemeSummary>,
}

impl ScenarioReport {
    pub fn get(&self, scheme: Scheme) -> Option<&SchemeSummary> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }

    /// CSV `scheme,reliability,mean_tput,overhead_ms,trp_product`.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("scheme,reliability,mean_tput,overhead_ms,trp_product\n");
        for s in &self.schemes {
            let m = s.aggregate;
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.scheme.label(),
                m.reliability,
                m.mean_throughput,
                m.probing_overhead_ms,
                m.throughput_reliability_product
            );
        }
        out
    }

    /// CSV `trial,slot,snr_db,se_bits_s_hz,outage,probing` for one scheme.
    pub fn slots_csv(&self, scheme: Scheme) -> Option<String> {
        let s = self.get(scheme)?;
        let mut out = String::from("trial,slot,snr_db,se_bits_s_hz,outage,probing\n");
        for r in &s.slots {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.trial, r.slot, r.snr_db, r.se_bits_s_hz, r.outage as u8, r.probing as u8
            );
        }
        Some(out)
    }
}

/// Motion of the receiver during one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Motion {
    rotation_deg_per_s: f64,
    velocity_mps: f64,
}

/// Everything random about one trial, shared by all schemes.
#[derive(Debug, Clone)]
struct World {
    room: Room,
    motion: Motion,
    blockers: Vec<Blocker>,
    slot_s: f64,
    carrier_hz: f64,
    geometry: ArrayGeometry,
    grid: SubcarrierGrid,
    tx_power: f64,
}

fn wrap_deg(x: f64) -> f64 {
    let y = (x + 180.0).rem_euclid(360.0) - 180.0;
    if y == -180.0 {
        180.0
    } else {
        y
    }
}

impl World {
    fn draw(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let room = match &cfg.room {
            RoomSource::Fixed(r) => r.clone(),
            RoomSource::Random(e) => e.draw(rng),
        };
        let sign = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let motion = match cfg.mobility {
            Mobility::None => Motion { rotation_deg_per_s: 0.0, velocity_mps: 0.0 },
            Mobility::Rotation { deg_per_s } => Motion { rotation_deg_per_s: deg_per_s, velocity_mps: 0.0 },
            Mobility::Translation { m_per_s } => Motion { rotation_deg_per_s: 0.0, velocity_mps: m_per_s },
            Mobility::Mixed { deg_per_s, m_per_s } => {
                let rotate = rng.gen_bool(0.5);
                let s = sign(rng);
                if rotate {
                    Motion { rotation_deg_per_s: s * deg_per_s, velocity_mps: 0.0 }
                } else {
                    Motion { rotation_deg_per_s: 0.0, velocity_mps: s * m_per_s }
                }
            }
        };
        let mut blockers = cfg.blockers.clone();
        if let Some(rb) = &cfg.random_blocker {
            let duration_s = rng.gen_range(rb.duration_s.0..=rb.duration_s.1);
            let start_s = rng.gen_range(0.0..=(cfg.duration_s - duration_s));
            blockers.push(Blocker { start_s, duration_s, path_ids: rb.path_ids.clone(), depth_db: rb.depth_db });
        }
        let geometry = ArrayGeometry::ula(cfg.num_antennas);
        let mut world = Self {
            room,
            motion,
            blockers,
            slot_s: cfg.slot_s,
            carrier_hz: geometry.carrier_hz,
            geometry,
            grid: SubcarrierGrid::default(),
            tx_power: 1.0,
        };
        let los = world.paths(0)?.paths()[0].gain.norm_sqr();
        let n = cfg.num_antennas as f64;
        world.tx_power = db_to_lin(cfg.los_snr_db) / (n * n * los);
        Ok(world)
    }

    fn arrays(&self) -> Endpoints {
        Endpoints::new(self.geometry, self.geometry)
    }

    /// The channel at the start of `slot`.
    fn paths(&self, slot: u64) -> Result<PathSet> {
        let t = slot as f64 * self.slot_s;
        let rx = (self.room.link_distance_m, self.motion.velocity_mps * t);
        let heading = self.motion.rotation_deg_per_s * t;
        let lambda = SPEED_OF_LIGHT / self.carrier_hz;
        let mut paths = Vec::with_capacity(self.room.reflectors.len() + 1);
        let mut add = |id: usize, toward: (f64, f64), from: (f64, f64), length: f64, loss_db: f64| {
            let aod = toward.1.atan2(toward.0).to_degrees();
            let aoa = wrap_deg(from.1.atan2(from.0).to_degrees() - 180.0 - heading);
            let mut db = loss_db;
            if aod.abs() > 90.0 || aoa.abs() > 90.0 {
                db += BACKLOBE_DB;
            }
            for b in &self.blockers {
                if b.path_ids.contains(&id) && t >= b.start_s && t < b.start_s + b.duration_s {
                    db -= b.depth_db;
                }
            }
            let amplitude = lambda / (4.0 * PI * length) * db_to_lin(db).sqrt();
            let gain = Complex64::from_polar(amplitude, -2.0 * PI * length / lambda);
            paths.push(Path::new(aod.clamp(-90.0, 90.0), aoa.clamp(-90.0, 90.0), gain, length / SPEED_OF_LIGHT));
        };
        let los_len = (rx.0 * rx.0 + rx.1 * rx.1).sqrt();
        add(0, rx, (-rx.0, -rx.1), los_len, 0.0);
        for (i, r) in self.room.reflectors.iter().enumerate() {
            let image = (rx.0, 2.0 * r.offset_m - rx.1);
            let length = (image.0 * image.0 + image.1 * image.1).sqrt();
            let frac = r.offset_m / image.1;
            let bounce = (image.0 * frac, r.offset_m);
            add(i + 1, image, (bounce.0 - rx.0, bounce.1 - rx.1), length, r.material.attenuation_db());
        }
        PathSet::new(paths, self.carrier_hz)
    }

    fn snr(&self, ps: &PathSet, w_t: &WeightVector, w_r: &WeightVector) -> Result<f64> {
        let alphas = effective_path_amplitudes(ps, &self.arrays(), w_t, w_r)?;
        Ok(mean_grid_power(&alphas, &ps.tofs(), &self.grid) * self.tx_power)
    }

    /// Power a path would deliver with single beams aligned to it.
    fn aligned_power(&self, p: &Path) -> f64 {
        let n = self.geometry.num_elements as f64;
        p.gain.norm_sqr() * n * n * self.tx_power
    }

    /// Paths worth a beam, strongest first, up to `k`.
    fn best_paths(&self, ps: &PathSet, k: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..ps.len()).collect();
        let power: Vec<f64> = ps.paths().iter().map(|p| self.aligned_power(p)).collect();
        ids.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
        let floor = power[ids[0]] * db_to_lin(-BEAM_CANDIDATE_RANGE_DB);
        ids.into_iter().filter(|&i| power[i] >= floor).take(k).collect()
    }
}

/// Per-slot outcome bookkeeping for one scheme in one trial.
struct Tally {
    trial: usize,
    outage_snr_db: f64,
    outage: u64,
    probing: u64,
    se_sum: f64,
    slots: Vec<SlotRecord>,
    record: bool,
}

impl Tally {
    fn new(trial: usize, cfg: &ScenarioConfig) -> Self {
        Self { trial, outage_snr_db: cfg.outage_snr_db, outage: 0, probing: 0, se_sum: 0.0, slots: Vec::new(), record: cfg.record_slots }
    }

    /// Records a probing slot; `snr` is only evaluated when slots are kept.
    fn probe_slot(&mut self, slot: u64, snr: impl FnOnce() -> Result<f64>) -> Result<()> {
        self.probing += 1;
        if self.record {
            let snr_db = lin_to_db(snr()?);
            self.slots.push(SlotRecord { trial: self.trial, slot, snr_db, se_bits_s_hz: 0.0, outage: false, probing: true });
        }
        Ok(())
    }

    /// Records a data slot and reports whether it was in outage.
    fn data_slot(&mut self, slot: u64, snr: f64) -> bool {
        let snr_db = lin_to_db(snr);
        let outage = snr_db < self.outage_snr_db;
        let se = if outage { 0.0 } else { (1.0 + snr).log2() };
        self.se_sum += se;
        self.outage += outage as u64;
        if self.record {
            self.slots.push(SlotRecord { trial: self.trial, slot, snr_db, se_bits_s_hz: se, outage, probing: false });
        }
        outage
    }

    fn finish(self, total: u64, ledger: &ProbeLedger) -> (TrialMetrics, Vec<SlotRecord>) {
        let reliability = 1.0 - (self.outage + self.probing) as f64 / total as f64;
        let mean_throughput = self.se_sum / total as f64;
        let metrics = LinkMetrics {
            reliability,
            mean_throughput,
            probing_overhead_ms: ledger.total_ms(),
            throughput_reliability_product: reliability * mean_throughput,
        };
        (
            TrialMetrics { trial: self.trial, metrics, outage_slots: self.outage, probing_slots: self.probing, total_slots: total },
            self.slots,
        )
    }
}

fn run_widebeam(world: &World, cfg: &ScenarioConfig, trial: usize) -> Result<(TrialMetrics, Vec<SlotRecord>)> {
    let ps0 = world.paths(0)?;
    let best = world.best_paths(&ps0, 1)[0];
    let p = ps0.paths()[best];
    let half = |angle: f64| -> Result<WeightVector> {
        let n = world.geometry.num_elements;
        let sub = single_beam_weights(&ArrayGeometry::ula(n / 2), angle)?;
        let mut w = sub.into_inner();
        w.resize(n, Complex64::new(0.0, 0.0));
        Ok(WeightVector::new(w))
    };
    let (w_t, w_r) = (half(p.aod_deg)?, half(p.aoa_deg)?);
    let ledger = ProbeLedger::new(cfg.ssb_accounting);
    let mut tally = Tally::new(trial, cfg);
    let total = cfg.num_slots();
    for slot in 0..total {
        let ps = world.paths(slot)?;
        tally.data_slot(slot, world.snr(&ps, &w_t, &w_r)?);
    }
    Ok(tally.finish(total, &ledger))
}

fn run_reactive(world: &World, cfg: &ScenarioConfig, trial: usize) -> Result<(TrialMetrics, Vec<SlotRecord>)> {
    let geom = &world.geometry;
    let point = |ps: &PathSet| -> Result<(WeightVector, WeightVector)> {
        let p = ps.paths()[world.best_paths(ps, 1)[0]];
        Ok((single_beam_weights(geom, p.aod_deg)?, single_beam_weights(geom, p.aoa_deg)?))
    };
    let (mut w_t, mut w_r) = point(&world.paths(0)?)?;
    let mut ledger = ProbeLedger::new(cfg.ssb_accounting);
    let mut tally = Tally::new(trial, cfg);
    let total = cfg.num_slots();
    let ssbs = nr_sweep_ssbs(cfg.num_antennas)?;
    let ssb_slots = cfg.slots_for_ms(SSB_MS);
    let mut busy = 0u64;
    let mut below = 0usize;
    for slot in 0..total {
        if busy > 0 {
            busy -= 1;
            tally.probe_slot(slot, || world.snr(&world.paths(slot)?, &w_t, &w_r))?;
            continue;
        }
        let ps = world.paths(slot)?;
        if tally.data_slot(slot, world.snr(&ps, &w_t, &w_r)?) {
            below += 1;
        } else {
            below = 0;
        }
        if below >= cfg.detection_slots {
            for i in 0..ssbs {
                ledger.record(slot + 1 + i as u64 * ssb_slots, ProbeKind::Ssb, i);
            }
            busy = ssbs as u64 * ssb_slots;
            (w_t, w_r) = point(&world.paths(slot + 1)?)?;
            below = 0;
        }
    }
    Ok(tally.finish(total, &ledger))
}

#[derive(Debug, Clone, Copy)]
struct BeamPair {
    path: usize,
    tx_deg: f64,
    rx_deg: f64,
    /// Signs of the last accepted correction at each end.
    last_move: Option<(i8, i8)>,
}

impl BeamPair {
    fn new(path: &Path, id: usize) -> Self {
        Self { path: id, tx_deg: path.aod_deg, rx_deg: path.aoa_deg, last_move: None }
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy)]
struct BlockedBeam {
    beam: BeamPair,
    /// Expected single-beam power of the path before it was blocked, dB.
    reference_db: f64,
    next_check: u64,
}

/// State of the multi-beam maintenance loop.
struct MultiBeam<'a> {
    world: &'a World,
    cfg: &'a ScenarioConfig,
    k_target: usize,
    active: Vec<BeamPair>,
    /// Lobe amplitudes and phases over `active`, transmit side.
    spec: MultiBeamSpec,
    blocked: Vec<BlockedBeam>,
    w_t: WeightVector,
    w_r: WeightVector,
    tracker: TrackerState,
    ledger: ProbeLedger,
    rng: ChaCha8Rng,
}

impl<'a> MultiBeam<'a> {
    fn link(&self) -> ProbeLink {
        ProbeLink { tx_power: self.world.tx_power, noise_power: 1.0 }
    }

    fn rebuild_weights(&mut self) -> Result<()> {
        let geom = &self.world.geometry;
        let tx_angles: Vec<f64> = self.active.iter().map(|b| b.tx_deg).collect();
        let rx_angles: Vec<f64> = self.active.iter().map(|b| b.rx_deg).collect();
        self.spec = self.spec.with_angles(&tx_angles)?;
        self.w_t = multi_beam_weights(geom, &self.spec)?;
        let rx_lobes = self
            .spec
            .beams()
            .iter()
            .zip(&rx_angles)
            .map(|(l, &a)| Lobe::new(a, l.delta, 0.0))
            .collect();
        self.w_r = multi_beam_weights(geom, &MultiBeamSpec::new(rx_lobes)?)?;
        Ok(())
    }

    fn select_beams(&self, ps: &PathSet) -> Vec<BeamPair> {
        let mut ids = self.world.best_paths(ps, self.k_target);
        let strongest_db = lin_to_db(self.world.aligned_power(&ps.paths()[ids[0]]));
        if strongest_db < self.cfg.outage_snr_db + SPLIT_HEADROOM_DB {
            ids.truncate(1);
        }
        ids.into_iter()
            .map(|i| BeamPair::new(&ps.paths()[i], i))
            .collect()
    }

    fn equal_spec(&self) -> Result<MultiBeamSpec> {
        MultiBeamSpec::new(self.active.iter().map(|b| Lobe::new(b.tx_deg, 1.0, 0.0)).collect())
    }

    fn reset_tracker(&mut self) -> Result<()> {
        self.tracker = TrackerState::new(self.active.len(), self.cfg.tracker.clone())?;
        Ok(())
    }

    /// Points beams at the strongest current paths after a full sweep.
    fn retrain(&mut self, slot: u64) -> Result<u64> {
        let ssbs = nr_sweep_ssbs(self.cfg.num_antennas)?;
        let ssb_slots = self.cfg.slots_for_ms(SSB_MS);
        for i in 0..ssbs {
            self.ledger.record(slot + i as u64 * ssb_slots, ProbeKind::Ssb, i);
        }
        let mut used = ssbs as u64 * ssb_slots;
        let ps = self.world.paths(slot + used)?;
        self.active = self.select_beams(&ps);
        let chosen: Vec<usize> = self.active.iter().map(|b| b.path).collect();
        self.blocked.retain(|b| !chosen.contains(&b.beam.path));
        self.spec = self.equal_spec()?;
        self.rebuild_weights()?;
        used += self.combine(slot + used)?;
        self.reset_tracker()?;
        Ok(used)
    }

    /// One constructive-combining probe round over the active beams.
    fn combine(&mut self, slot: u64) -> Result<u64> {
        if self.active.len() < 2 {
            self.spec = self.equal_spec()?;
            self.rebuild_weights()?;
            return Ok(0);
        }
        let ps = self.world.paths(slot)?;
        let base = self.equal_spec()?;
        let arrays = self.world.arrays();
        let reports = probe_round(
            &ps,
            &arrays,
            &base,
            &self.w_r,
            &self.link(),
            &self.world.grid,
            &mut self.ledger,
            slot,
            Some(&mut self.rng),
        )?;
        let used = reports.len() as u64 * self.cfg.slots_for_ms(CSI_RS_MS);
        let channels = recover_all_beams(&self.world.geometry, &reports)?;
        let angles: Vec<f64> = self.active.iter().map(|b| b.tx_deg).collect();
        let estimates = optimize_beams(&channels, Some((&self.world.geometry, &angles)))?;
        let lobes = self
            .active
            .iter()
            .zip(&estimates)
            .map(|(b, e)| Lobe::new(b.tx_deg, if e.negligible { 0.0 } else { e.delta }, e.sigma_rad))
            .collect();
        let spec = MultiBeamSpec::new(lobes)?;
        self.spec = if self.cfg.min_power_share > 0.0 {
            reliability_first_rebalance(&spec, self.cfg.min_power_share)?
        } else {
            spec
        };
        self.rebuild_weights()?;
        Ok(used)
    }

    fn current_snr_db(&self, ps: &PathSet) -> Result<f64> {
        Ok(lin_to_db(self.world.snr(ps, &self.w_t, &self.w_r)?))
    }

    /// SNR with the beams re-pointed by per-beam offsets.
    fn snr_with_offsets(&self, ps: &PathSet, tx_off: &[f64], rx_off: &[f64]) -> Result<f64> {
        let mut trial = MultiBeam {
            world: self.world,
            cfg: self.cfg,
            k_target: self.k_target,
            active: self.active.clone(),
            spec: self.spec.clone(),
            blocked: Vec::new(),
            w_t: self.w_t.clone(),
            w_r: self.w_r.clone(),
            tracker: self.tracker.clone(),
            ledger: ProbeLedger::new(self.cfg.ssb_accounting),
            rng: self.rng.clone(),
        };
        for (b, (t, r)) in trial.active.iter_mut().zip(tx_off.iter().zip(rx_off)) {
            b.tx_deg = (b.tx_deg + t).clamp(-90.0, 90.0);
            b.rx_deg = (b.rx_deg + r).clamp(-90.0, 90.0);
        }
        trial.rebuild_weights()?;
        trial.current_snr_db(ps)
    }

    fn apply_offsets(&mut self, tx_off: &[f64], rx_off: &[f64]) -> Result<()> {
        for (b, (t, r)) in self.active.iter_mut().zip(tx_off.iter().zip(rx_off)) {
            b.tx_deg = (b.tx_deg + t).clamp(-90.0, 90.0);
            b.rx_deg = (b.rx_deg + r).clamp(-90.0, 90.0);
        }
        self.rebuild_weights()
    }

    fn handle_blockage(&mut self, slot: u64, ids: &[usize]) -> Result<u64> {
        let n = self.world.geometry.num_elements as f64;
        for &k in ids {
            let b = self.active[k];
            let tx_gain = crate::array::beam_gain_lin(&self.world.geometry, &self.w_t, b.tx_deg)?;
            let rx_gain = crate::array::beam_gain_lin(&self.world.geometry, &self.w_r, b.rx_deg)?;
            let measured = self.tracker.baseline_db(k).unwrap_or(crate::DB_FLOOR);
            let reference_db = measured + lin_to_db(n / tx_gain.max(1e-12)) + lin_to_db(n / rx_gain.max(1e-12));
            self.blocked.push(BlockedBeam {
                beam: b,
                reference_db,
                next_check: slot + (self.cfg.recovery_check_s / self.cfg.slot_s).round() as u64,
            });
        }
        if ids.len() == self.active.len() {
            return self.retrain(slot);
        }
        let realloc = reallocate_on_blockage(&self.spec, ids)?;
        let keep: Vec<usize> = realloc.order.iter().copied().filter(|i| !ids.contains(i)).collect();
        let lobes: Vec<Lobe> = realloc
            .spec
            .beams()
            .iter()
            .zip(&realloc.order)
            .filter(|(_, i)| !ids.contains(i))
            .map(|(l, _)| *l)
            .collect();
        self.active = keep.iter().map(|&i| self.active[i]).collect();
        self.spec = MultiBeamSpec::new(lobes)?;
        self.rebuild_weights()?;
        self.reset_tracker()?;
        Ok(0)
    }

    /// Probes blocked paths whose check is due; returns probe slots used.
    fn check_blocked(&mut self, slot: u64, ps: &PathSet) -> Result<u64> {
        let Some(idx) = self.blocked.iter().position(|b| b.next_check <= slot) else { return Ok(0) };
        let geom = &self.world.geometry;
        let b = self.blocked[idx];
        self.ledger.record(slot, ProbeKind::CsiRs, b.beam.path);
        let w_t = single_beam_weights(geom, b.beam.tx_deg)?;
        let w_r = single_beam_weights(geom, b.beam.rx_deg)?;
        let alphas = effective_path_amplitudes(ps, &self.world.arrays(), &w_t, &w_r)?;
        let noise = complex_gaussian(&mut self.rng, 1.0 / self.world.grid.count as f64);
        let power_db = lin_to_db((alphas[b.beam.path] * self.world.tx_power.sqrt() + noise).norm_sqr());
        let mut used = self.cfg.slots_for_ms(CSI_RS_MS);
        if power_db < b.reference_db - RECOVERY_MARGIN_DB && power_db >= self.current_snr_db(ps)? + RECOVERY_MARGIN_DB {
            return Ok(used + self.retrain(slot + used)?);
        }
        if power_db >= b.reference_db - RECOVERY_MARGIN_DB {
            self.blocked.remove(idx);
            if self.active.len() >= self.k_target {
                let weakest = (0..self.active.len())
                    .min_by(|&i, &j| {
                        let p = |k| self.tracker.smoothed_db(k).unwrap_or(crate::DB_FLOOR);
                        p(i).total_cmp(&p(j))
                    })
                    .unwrap_or(0);
                self.active.remove(weakest);
            }
            self.active.push(b.beam);
            self.spec = self.equal_spec()?;
            self.rebuild_weights()?;
            used += self.combine(slot + used)?;
            self.reset_tracker()?;
        } else {
            self.blocked[idx].next_check = slot + (self.cfg.recovery_check_s / self.cfg.slot_s).round() as u64;
        }
        Ok(used)
    }

    /// Re-points beams after the tracker reports enough decay.
    /// Tries offset candidates in order, one probe each, and keeps the first
    /// that beats `baseline_db` by the improvement gate.
    fn try_offsets(
        &mut self,
        ps: &PathSet,
        slot: u64,
        beam: usize,
        candidates: &[(Vec<f64>, Vec<f64>)],
        baseline_db: f64,
        used: &mut u64,
    ) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let gate = self.cfg.tracker.improvement_gate_db;
        let moves = |c: &(Vec<f64>, Vec<f64>)| (sign(c.0[beam]), sign(c.1[beam]));
        let last = self.active[beam].last_move;
        let mut ordered: Vec<&(Vec<f64>, Vec<f64>)> = candidates.iter().collect();
        ordered.sort_by_key(|c| Some(moves(c)) != last);
        for c in ordered {
            let (tx_off, rx_off) = c;
            self.ledger.record(slot + *used, ProbeKind::CsiRs, beam);
            *used += self.cfg.slots_for_ms(CSI_RS_MS);
            let snr = self.snr_with_offsets(ps, tx_off, rx_off)?;
            if snr >= baseline_db + gate {
                self.apply_offsets(tx_off, rx_off)?;
                self.active[beam].last_move = Some(moves(c));
                return Ok(Some((tx_off.clone(), rx_off.clone())));
            }
        }
        Ok(None)
    }

    /// A receiver rotation turns every arrival, including blocked ones.
    fn rotate_blocked(&mut self, rx_offset_deg: f64) {
        for b in &mut self.blocked {
            b.beam.rx_deg = (b.beam.rx_deg + rx_offset_deg).clamp(-90.0, 90.0);
        }
    }

    /// Sign combinations of a per-beam deviation applied at both ends.
    fn joint_candidates(k: usize, beam: usize, phi: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
        [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]
            .into_iter()
            .map(|(st, sr)| {
                let mut tx_off = vec![0.0; k];
                let mut rx_off = vec![0.0; k];
                tx_off[beam] = st * phi;
                rx_off[beam] = sr * phi;
                (tx_off, rx_off)
            })
            .collect()
    }

    /// A lone beam cannot tell rotation from translation, so both
    /// explanations are probed before falling back to a sweep.
    fn refine_single(&mut self, slot: u64, ps: &PathSet) -> Result<u64> {
        let decays = [self.tracker.fitted_decay_db(0)];
        let b = self.active[0];
        let geom = &self.world.geometry;
        let tp = BeamPattern::new(geom, &self.w_t)?;
        let rp = BeamPattern::new(geom, &self.w_r)?;
        let rot = estimate_rotation_from_decays(&self.cfg.tracker, rp, &[b.rx_deg], &decays)?;
        let trans = estimate_translation_from_decays(&self.cfg.tracker, tp, rp, &[b.tx_deg], &[b.rx_deg], &decays)?;
        let mut candidates: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        if !rot.saturated {
            candidates.extend(rot.candidates.iter().filter(|c| **c != 0.0).map(|&c| (vec![0.0], vec![c])));
        }
        if let Some(t) = trans.first().filter(|t| !t.saturated && t.phi_deg > 0.0) {
            candidates.extend(Self::joint_candidates(1, 0, t.phi_deg));
        }
        let current = self.current_snr_db(ps)?;
        let mut used = 0u64;
        match self.try_offsets(ps, slot, 0, &candidates, current, &mut used)? {
            None => return Ok(used + self.retrain(slot + used)?),
            Some((tx_off, rx_off)) if tx_off[0] == 0.0 => self.rotate_blocked(rx_off[0]),
            Some(_) => {}
        }
        self.tracker.mark_refined(slot);
        Ok(used)
    }

    /// Re-points beams after the tracker reports enough decay.
    fn refine(&mut self, slot: u64, event: &Event, ps: &PathSet) -> Result<u64> {
        let k = self.active.len();
        if k == 1 {
            return self.refine_single(slot, ps);
        }
        let decays: Vec<f64> = (0..k).map(|i| self.tracker.fitted_decay_db(i)).collect();
        let tx_angles: Vec<f64> = self.active.iter().map(|b| b.tx_deg).collect();
        let rx_angles: Vec<f64> = self.active.iter().map(|b| b.rx_deg).collect();
        let current = self.current_snr_db(ps)?;
        let mut used = 0u64;
        if *event == Event::Translation {
            let geom = &self.world.geometry;
            let tp = BeamPattern::new(geom, &self.w_t)?;
            let rp = BeamPattern::new(geom, &self.w_r)?;
            let ests = estimate_translation_from_decays(&self.cfg.tracker, tp, rp, &tx_angles, &rx_angles, &decays)?;
            let mut baseline = current;
            for est in ests {
                let Some(b) = est.beam else { continue };
                if est.resolved || est.saturated || est.phi_deg == 0.0 {
                    continue;
                }
                let candidates = Self::joint_candidates(k, b, est.phi_deg);
                if self.try_offsets(ps, slot, b, &candidates, baseline, &mut used)?.is_some() {
                    baseline = self.current_snr_db(ps)?;
                }
            }
        } else {
            let rp = BeamPattern::new(&self.world.geometry, &self.w_r)?;
            let est = estimate_rotation_from_decays(&self.cfg.tracker, rp, &rx_angles, &decays)?;
            if est.saturated {
                return self.retrain(slot);
            }
            let zeros = vec![0.0; k];
            let gate = self.cfg.tracker.improvement_gate_db;
            let mut ledger = ProbeLedger::new(self.cfg.ssb_accounting);
            let resolution = {
                let this = &*self;
                let measure = |phi: f64| this.snr_with_offsets(ps, &zeros, &vec![phi; k]);
                resolve_ambiguity(&est, current, gate, measure, &mut ledger, slot)?
            };
            self.ledger.extend(&ledger);
            used += resolution.probes_used as u64;
            if resolution.retrain {
                return Ok(used + self.retrain(slot + used)?);
            }
            self.apply_offsets(&zeros, &vec![resolution.applied_deg; k])?;
            self.rotate_blocked(resolution.applied_deg);
        }
        used += self.combine(slot + used)?;
        self.tracker.mark_refined(slot);
        Ok(used)
    }

    fn step(&mut self, slot: u64, ps: &PathSet) -> Result<u64> {
        let arrays = self.world.arrays();
        let alphas = effective_path_amplitudes(ps, &arrays, &self.w_t, &self.w_r)?;
        let scale = self.world.tx_power.sqrt();
        let sample_var = 1.0 / self.world.grid.count as f64;
        let measured: Vec<Complex64> = self
            .active
            .iter()
            .map(|b| alphas[b.path] * scale + complex_gaussian(&mut self.rng, sample_var))
            .collect();
        self.tracker.ingest_power(slot, &measured)?;
        let used = self.check_blocked(slot + 1, ps)?;
        if used > 0 {
            return Ok(used);
        }
        if self.tracker.sample_count() < self.cfg.tracker.blockage_span {
            return Ok(0);
        }
        let event = self.tracker.classify_event()?;
        if let Event::Blockage(ids) = &event {
            return self.handle_blockage(slot + 1, ids);
        }
        if event != Event::Static && self.tracker.should_refine() {
            return self.refine(slot + 1, &event, ps);
        }
        Ok(0)
    }
}

fn run_multibeam(world: &World, cfg: &ScenarioConfig, trial: usize, beams: usize, rng: ChaCha8Rng) -> Result<(TrialMetrics, Vec<SlotRecord>)> {
    let geom = &world.geometry;
    let placeholder = MultiBeamSpec::single(0.0)?;
    let mut mb = MultiBeam {
        world,
        cfg,
        k_target: beams,
        active: Vec::new(),
        spec: placeholder,
        blocked: Vec::new(),
        w_t: single_beam_weights(geom, 0.0)?,
        w_r: single_beam_weights(geom, 0.0)?,
        tracker: TrackerState::new(1, cfg.tracker.clone())?,
        ledger: ProbeLedger::new(cfg.ssb_accounting),
        rng,
    };
    let ps0 = world.paths(0)?;
    mb.active = mb.select_beams(&ps0);
    mb.spec = mb.equal_spec()?;
    mb.rebuild_weights()?;
    mb.combine(0)?;
    mb.ledger = ProbeLedger::new(cfg.ssb_accounting);
    mb.reset_tracker()?;
    let mut busy = 0u64;

    let mut tally = Tally::new(trial, cfg);
    let total = cfg.num_slots();
    let mut below = 0usize;
    for slot in 0..total {
        if busy > 0 {
            busy -= 1;
            tally.probe_slot(slot, || world.snr(&world.paths(slot)?, &mb.w_t, &mb.w_r))?;
            continue;
        }
        let ps = world.paths(slot)?;
        if tally.data_slot(slot, world.snr(&ps, &mb.w_t, &mb.w_r)?) {
            below += 1;
        } else {
            below = 0;
        }
        busy = if below >= cfg.detection_slots {
            below = 0;
            mb.retrain(slot + 1)?
        } else {
            mb.step(slot, &ps)?
        };
    }
    let MultiBeam { ledger, .. } = mb;
    Ok(tally.finish(total, &ledger))
}

fn trial_rng(seed: u64, trial: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 8) | stream);
    rng
}

fn run_trial(cfg: &ScenarioConfig, trial: usize) -> Result<Vec<(TrialMetrics, Vec<SlotRecord>)>> {
    let world = World::draw(cfg, &mut trial_rng(cfg.seed, trial, 0))?;
    cfg.schemes
        .iter()
        .enumerate()
        .map(|(i, s)| match *s {
            Scheme::MmReliable { beams } => run_multibeam(&world, cfg, trial, beams, trial_rng(cfg.seed, trial, 1 + i as u64)),
            Scheme::SingleReactive => run_reactive(&world, cfg, trial),
            Scheme::Widebeam => run_widebeam(&world, cfg, trial),
        })
        .collect()
}

fn aggregate(trials: &[TrialMetrics]) -> LinkMetrics {
    let n = trials.len() as f64;
    let mean = |f: fn(&LinkMetrics) -> f64| trials.iter().fold(0.0, |acc, t| acc + f(&t.metrics)) / n;
    let reliability = mean(|m| m.reliability);
    let mean_throughput = mean(|m| m.mean_throughput);
    LinkMetrics {
        reliability,
        mean_throughput,
        probing_overhead_ms: mean(|m| m.probing_overhead_ms),
        throughput_reliability_product: reliability * mean_throughput,
    }
}

/// Runs every configured scheme over the same seeded trials. Trials may run
/// in parallel; results are identical either way.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    let per_trial = map_indices(cfg.exec, cfg.trials, |t| run_trial(cfg, t));
    let per_trial: Vec<_> = per_trial.into_iter().collect::<Result<_>>()?;
    let schemes = cfg
        .schemes
        .iter()
        .enumerate()
        .map(|(i, &scheme)| {
            let mut trials = Vec::with_capacity(cfg.trials);
            let mut slots = Vec::new();
            for t in &per_trial {
                trials.push(t[i].0.clone());
                slots.extend_from_slice(&t[i].1);
            }
            SchemeSummary { scheme, aggregate: aggregate(&trials), trials, slots }
        })
        .collect();
    Ok(ScenarioReport { schemes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(schemes: Vec<Scheme>) -> ScenarioConfig {
        ScenarioConfig {
            room: RoomSource::Fixed(Room {
                link_distance_m: 5.0,
                reflectors: vec![Reflector { offset_m: 2.0, material: Material::Metal }],
            }),
            mobility: Mobility::None,
            random_blocker: None,
            schemes,
            duration_s: 0.1,
            trials: 2,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn static_single_beam_is_fully_reliable() {
        let cfg = quiet(vec![Scheme::SingleReactive]);
        let report = run_scenario(&cfg).unwrap();
        let s = &report.schemes[0];
        assert_eq!(s.aggregate.reliability, 1.0);
        let first = s.trials[0].metrics.mean_throughput;
        assert!(s.trials.iter().all(|t| t.metrics.mean_throughput == first));
    }

    #[test]
    fn geometry_puts_los_first_and_mirrors_reflection() {
        let cfg = quiet(vec![Scheme::Widebeam]);
        let world = World::draw(&cfg, &mut trial_rng(0, 0, 0)).unwrap();
        let ps = world.paths(0).unwrap();
        let los = ps.paths()[0];
        assert!(los.aod_deg.abs() < 1e-12 && los.aoa_deg.abs() < 1e-12);
        let r = ps.paths()[1];
        let expected = (4.0f64 / 5.0).atan().to_degrees();
        assert!((r.aod_deg - expected).abs() < 1e-9);
        assert!((r.aoa_deg + expected).abs() < 1e-9, "{}", r.aoa_deg);
        assert!((los.tof_s - 5.0 / SPEED_OF_LIGHT).abs() < 1e-15);
        let aligned = world.aligned_power(&los);
        assert!((lin_to_db(aligned) - cfg.los_snr_db).abs() < 1e-9);
    }

    #[test]
    fn rotation_shifts_every_arrival_equally() {
        let mut cfg = quiet(vec![Scheme::Widebeam]);
        cfg.mobility = Mobility::Rotation { deg_per_s: 24.0 };
        let world = World::draw(&cfg, &mut trial_rng(0, 0, 0)).unwrap();
        let a = world.paths(0).unwrap();
        let b = world.paths(4000).unwrap();
        for (p, q) in a.paths().iter().zip(b.paths()) {
            assert!((p.aoa_deg - q.aoa_deg - 12.0).abs() < 1e-9);
            assert_eq!(p.aod_deg, q.aod_deg);
        }
    }

    #[test]
    fn blocker_attenuates_listed_paths_only_while_active() {
        let mut cfg = quiet(vec![Scheme::Widebeam]);
        cfg.blockers = vec![Blocker { start_s: 0.02, duration_s: 0.03, path_ids: vec![0], depth_db: 25.0 }];
        let world = World::draw(&cfg, &mut trial_rng(0, 0, 0)).unwrap();
        let g = |slot: u64, id: usize| lin_to_db(world.paths(slot).unwrap().paths()[id].gain.norm_sqr());
        assert!((g(0, 0) - g(200, 0) - 25.0).abs() < 1e-9);
        assert!((g(0, 1) - g(200, 1)).abs() < 1e-9);
        assert!((g(0, 0) - g(400, 0)).abs() < 1e-9);
    }

    #[test]
    fn config_validation_and_text_roundtrip() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
        let mut bad = quiet(vec![Scheme::Widebeam]);
        bad.blockers = vec![Blocker { start_s: 0.09, duration_s: 0.05, path_ids: vec![0], depth_db: 25.0 }];
        assert!(bad.validate().is_err());
        assert!(ScenarioConfig::from_toml("duration_s = -1.0").is_err());
    }

    #[test]
    fn reactive_rescans_and_mmreliable_survives_blockage() {
        let mut cfg = quiet(vec![Scheme::MmReliable { beams: 2 }, Scheme::SingleReactive]);
        cfg.blockers = vec![Blocker { start_s: 0.03, duration_s: 0.05, path_ids: vec![0], depth_db: 25.0 }];
        cfg.trials = 1;
        let report = run_scenario(&cfg).unwrap();
        let mm = report.get(Scheme::MmReliable { beams: 2 }).unwrap();
        let re = report.get(Scheme::SingleReactive).unwrap();
        assert!(re.trials[0].probing_slots >= 24, "{:?}", re.trials[0]);
        assert!(mm.aggregate.reliability >= re.aggregate.reliability, "{:?} vs {:?}", mm.aggregate, re.aggregate);
    }

    #[test]
    fn parallel_and_sequential_runs_match() {
        let mut cfg = ScenarioConfig {
            trials: 4,
            duration_s: 0.2,
            record_slots: true,
            random_blocker: Some(RandomBlocker { duration_s: (0.02, 0.1), ..RandomBlocker::default() }),
            ..ScenarioConfig::default()
        };
        let par = run_scenario(&cfg).unwrap();
        cfg.exec = Execution::Sequential;
        let seq = run_scenario(&cfg).unwrap();
        assert_eq!(par.aggregate_csv(), seq.aggregate_csv());
        let s = Scheme::MmReliable { beams: 2 };
        assert_eq!(par.slots_csv(s), seq.slots_csv(s));
    }
}
