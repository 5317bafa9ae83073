//! Initial beam training.
//!
//! Each side is scanned with single beams while the other side listens
//! omnidirectionally. Paths are pulled out of the SNR-vs-angle profile one at
//! a time: the strongest unexplained peak is located, fitted against the
//! known single-beam pattern, and its modelled contribution is subtracted
//! before the next search. Per-beam CIRs give each peak a time of flight,
//! and the shared time of flight pairs departure with arrival angles.

use std::fmt::Write as _;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::{single_beam_weights, AngleGrid, ArrayGeometry, WeightVector};
use crate::channel::{
    received_snr, synthesize_cir, Cir, Endpoints, NoiseSpec, PathSet, SubcarrierGrid, MAX_PATHS,
};
use crate::combiner::ProbeLink;
use crate::ledger::{ProbeKind, ProbeLedger};
use crate::math::{db_to_lin, lin_to_db};
use crate::{Error, Result};

pub const DEFAULT_CODEBOOK_STEP_DEG: f64 = 2.0;
pub const DEFAULT_MIN_PROMINENCE_DB: f64 = 3.0;
pub const DEFAULT_UPSAMPLE: usize = 8;
/// Two pairings closer than this in time of flight are indistinguishable.
pub const TOF_MATCH_TOLERANCE_S: f64 = 0.5e-9;

/// Candidates weaker than this below the profile maximum are ignored.
const DYNAMIC_RANGE_DB: f64 = 25.0;
/// A candidate must keep this fraction of its profile value after the
/// already-found paths are subtracted.
const MIN_RESIDUAL_FRACTION: f64 = 0.25;
const EXCLUSION_DEG: f64 = 6.0;
const FIT_WINDOW_DEG: f64 = 7.0;
const FIT_SEARCH_DEG: f64 = 2.0;
const FIT_STEP_DEG: f64 = 0.01;
const FIT_PASSES: usize = 3;
/// Main-lobe -3 dB width of a single sinc, in taps.
const SINC_HALF_POWER_WIDTH: f64 = 0.886;
const MERGED_WIDTH_RATIO: f64 = 1.15;
const FIT_HALF_SPAN_TAPS: i64 = 6;
/// Single-arrival fit residual, as a fraction of local energy, above which
/// a peak counts as merged when noise is negligible.
const MERGED_RESIDUAL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Transmit,
    Receive,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Transmit => "tx",
            Side::Receive => "rx",
        }
    }
}

/// Measured SNR for every codebook direction on one side of the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanProfile {
    angles_deg: Vec<f64>,
    snr_db: Vec<f64>,
    side: Side,
    geometry: ArrayGeometry,
}

impl ScanProfile {
    pub fn new(angles_deg: Vec<f64>, snr_db: Vec<f64>, side: Side, geometry: ArrayGeometry) -> Result<Self> {
        if angles_deg.len() != snr_db.len() {
            return Err(Error::LengthMismatch { expected: angles_deg.len(), got: snr_db.len() });
        }
        if angles_deg.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("scan angles must be strictly increasing".into()));
        }
        Ok(Self { angles_deg, snr_db, side, geometry })
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn snr_db(&self) -> &[f64] {
        &self.snr_db
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    /// CSV rows `angle_deg,snr_db,side`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_deg,snr_db,side\n");
        for (a, s) in self.angles_deg.iter().zip(&self.snr_db) {
            let _ = writeln!(out, "{a},{s},{}", self.side.label());
        }
        out
    }

    fn nearest_index(&self, angle_deg: f64) -> usize {
        let mut best = 0;
        for (i, a) in self.angles_deg.iter().enumerate() {
            if (a - angle_deg).abs() < (self.angles_deg[best] - angle_deg).abs() {
                best = i;
            }
        }
        best
    }
}

/// Link budget and grid used while scanning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSetup {
    pub link: ProbeLink,
    pub subcarriers: SubcarrierGrid,
}

impl Default for ScanSetup {
    fn default() -> Self {
        Self { link: ProbeLink { tx_power: 100.0, noise_power: 1.0 }, subcarriers: SubcarrierGrid::default() }
    }
}

fn side_endpoints(arrays: &Endpoints, side: Side) -> Endpoints {
    match side {
        Side::Transmit => Endpoints::new(arrays.tx, ArrayGeometry::omni()),
        Side::Receive => Endpoints::new(ArrayGeometry::omni(), arrays.rx),
    }
}

fn side_weights(arrays: &Endpoints, side: Side, angle_deg: f64) -> Result<(WeightVector, WeightVector)> {
    Ok(match side {
        Side::Transmit => (single_beam_weights(&arrays.tx, angle_deg)?, WeightVector::omni()),
        Side::Receive => (WeightVector::omni(), single_beam_weights(&arrays.rx, angle_deg)?),
    })
}

/// Sweeps single beams over `codebook` on one side, the other side omni.
/// One SSB per direction is charged to `ledger`, starting at `slot`. With an
/// RNG the per-subcarrier observations carry noise and the SNR is estimated
/// from them.
#[allow(clippy::too_many_arguments)]
pub fn exhaustive_scan<R: Rng + ?Sized>(
    ps: &PathSet,
    arrays: &Endpoints,
    side: Side,
    codebook: &AngleGrid,
    setup: &ScanSetup,
    ledger: &mut ProbeLedger,
    slot: u64,
    mut rng: Option<&mut R>,
) -> Result<ScanProfile> {
    let ends = side_endpoints(arrays, side);
    let noise = NoiseSpec { noise_power: setup.link.noise_power, seed: 0 };
    let angles = codebook.points();
    let mut snr_db = Vec::with_capacity(angles.len());
    for (i, &angle) in angles.iter().enumerate() {
        let (w_t, w_r) = side_weights(&ends, side, angle)?;
        let snr = match rng.as_deref_mut() {
            Some(r) => crate::channel::measured_snr_db(
                ps,
                &ends,
                &w_t,
                &w_r,
                setup.link.tx_power,
                &noise,
                &setup.subcarriers,
                r,
            )?,
            None => lin_to_db(received_snr(ps, &ends, &w_t, &w_r, setup.link.tx_power, &noise, &setup.subcarriers)?),
        };
        snr_db.push(snr);
        ledger.record(slot + i as u64, ProbeKind::Ssb, i);
    }
    let geometry = match side {
        Side::Transmit => arrays.tx,
        Side::Receive => arrays.rx,
    };
    ScanProfile::new(angles, snr_db, side, geometry)
}

/// Normalized single-beam power gain toward `angle_deg` of a beam steered at
/// `steer_deg`: `|a(angle)^T conj(a(steer))|^2 / N`.
fn scan_gain(geom: &ArrayGeometry, steer_deg: f64, angle_deg: f64) -> f64 {
    let step = 2.0 * PI * geom.spacing_over_lambda * (angle_deg.to_radians().sin() - steer_deg.to_radians().sin());
    let sum: Complex64 = (0..geom.num_elements).map(|n| Complex64::from_polar(1.0, -step * n as f64)).sum();
    sum.norm_sqr() / geom.num_elements as f64
}

/// A direction extracted from a scan profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub angle_deg: f64,
    /// Fitted SNR the path would give with a perfectly aligned beam.
    pub snr_db: f64,
}

/// Local maxima of `y` with their topographic prominence.
fn prominent_maxima(y: &[f64]) -> Vec<(usize, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    for i in 0..n {
        let left_ok = i == 0 || y[i] > y[i - 1];
        let right_ok = i + 1 == n || y[i] >= y[i + 1];
        if !(left_ok && right_ok) || n == 1 {
            continue;
        }
        let mut left_min = y[i];
        let mut j = i;
        while j > 0 && y[j - 1] <= y[i] {
            j -= 1;
            left_min = left_min.min(y[j]);
        }
        let left_bounded = j > 0;
        let mut right_min = y[i];
        let mut j = i;
        while j + 1 < n && y[j + 1] <= y[i] {
            j += 1;
            right_min = right_min.min(y[j]);
        }
        let right_bounded = j + 1 < n;
        let base = match (left_bounded, right_bounded) {
            (true, true) => left_min.max(right_min),
            (true, false) => left_min,
            (false, true) => right_min,
            (false, false) => left_min.min(right_min),
        };
        out.push((i, y[i] - base));
    }
    out
}

fn quadratic_vertex(ym: f64, y0: f64, yp: f64) -> f64 {
    let denom = ym - 2.0 * y0 + yp;
    if denom.abs() < 1e-15 {
        0.0
    } else {
        (0.5 * (ym - yp) / denom).clamp(-1.0, 1.0)
    }
}

/// Least-squares fit of one path's angle and power against `target`, using
/// the codebook samples within the fit window around `center`.
fn fit_one(profile: &ScanProfile, target: &[f64], center: f64) -> (f64, f64) {
    let geom = &profile.geometry;
    let window: Vec<usize> = (0..profile.len())
        .filter(|&i| (profile.angles_deg[i] - center).abs() <= FIT_WINDOW_DEG)
        .collect();
    let steps = (2.0 * FIT_SEARCH_DEG / FIT_STEP_DEG).round() as usize;
    let lo = profile.angles_deg[0];
    let hi = profile.angles_deg[profile.len() - 1];
    let mut best = (center, 0.0, f64::INFINITY);
    for s in 0..=steps {
        let theta = (center - FIT_SEARCH_DEG + s as f64 * FIT_STEP_DEG).clamp(lo, hi);
        let (mut tg, mut gg) = (0.0, 0.0);
        for &i in &window {
            let g = scan_gain(geom, profile.angles_deg[i], theta);
            tg += target[i] * g;
            gg += g * g;
        }
        if gg <= 0.0 {
            continue;
        }
        let power = (tg / gg).max(0.0);
        let cost: f64 = window
            .iter()
            .map(|&i| (target[i] - power * scan_gain(geom, profile.angles_deg[i], theta)).powi(2))
            .sum();
        if cost < best.2 {
            best = (theta, power, cost);
        }
    }
    (best.0, best.1)
}

fn model_excluding(profile: &ScanProfile, found: &[(f64, f64)], skip: Option<usize>) -> Vec<f64> {
    profile
        .angles_deg
        .iter()
        .map(|&steer| {
            found
                .iter()
                .enumerate()
                .filter(|(j, _)| Some(*j) != skip)
                .map(|(_, &(theta, p))| p * scan_gain(&profile.geometry, steer, theta))
                .sum()
        })
        .collect()
}

/// Finds path directions in a scan profile, strongest first.
///
/// Peaks must rise `min_prominence_db` above their surroundings in the
/// profile that remains after earlier paths are removed.
pub fn extract_paths(profile: &ScanProfile, min_prominence_db: f64) -> Vec<Peak> {
    if profile.len() < 3 {
        return Vec::new();
    }
    let lin: Vec<f64> = profile.snr_db.iter().map(|&s| db_to_lin(s)).collect();
    let max_lin = lin.iter().cloned().fold(0.0, f64::max);
    if !(max_lin > 0.0) {
        return Vec::new();
    }
    let floor = max_lin * 1e-9;
    let max_db = lin_to_db(max_lin);
    let mut found: Vec<(f64, f64)> = Vec::new();
    while found.len() < MAX_PATHS {
        let model = model_excluding(profile, &found, None);
        let resid: Vec<f64> = lin.iter().zip(&model).map(|(y, m)| y - m).collect();
        let resid_db: Vec<f64> = resid.iter().map(|&r| lin_to_db(r.max(floor))).collect();
        let candidate = prominent_maxima(&resid_db)
            .into_iter()
            .filter(|&(i, prom)| {
                prom >= min_prominence_db
                    && found.iter().all(|&(t, _)| (profile.angles_deg[i] - t).abs() > EXCLUSION_DEG)
            })
            .max_by(|a, b| resid[a.0].total_cmp(&resid[b.0]));
        let Some((i, _)) = candidate else { break };
        if resid_db[i] < max_db - DYNAMIC_RANGE_DB || resid[i] < MIN_RESIDUAL_FRACTION * lin[i] {
            break;
        }
        let offset = if i > 0 && i + 1 < profile.len() {
            quadratic_vertex(resid_db[i - 1], resid_db[i], resid_db[i + 1])
        } else {
            0.0
        };
        let step = if i + 1 < profile.len() {
            profile.angles_deg[i + 1] - profile.angles_deg[i]
        } else {
            profile.angles_deg[i] - profile.angles_deg[i - 1]
        };
        let start = profile.angles_deg[i] + offset * step;
        let g = scan_gain(&profile.geometry, profile.angles_deg[i], start);
        found.push((start, resid[i] / g.max(1e-12)));
        for _ in 0..FIT_PASSES {
            for j in 0..found.len() {
                let others = model_excluding(profile, &found, Some(j));
                let target: Vec<f64> = lin.iter().zip(&others).map(|(y, m)| y - m).collect();
                found[j] = fit_one(profile, &target, found[j].0);
            }
        }
    }
    let n = profile.geometry.num_elements as f64;
    found
        .into_iter()
        .map(|(angle_deg, p)| Peak { angle_deg, snr_db: lin_to_db(p * n) })
        .collect()
}

/// Time-of-flight estimate for the dominant arrival in a CIR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TofEstimate {
    pub tof_s: f64,
    /// The peak barely stands out of the noise.
    pub low_confidence: bool,
    /// The peak is wider than a single arrival; likely several merged paths.
    pub merged: bool,
}

/// Peak time of flight via band-limited upsampling around the strongest tap
/// and a three-point cosine fit.
pub fn estimate_tof(cir: &Cir, upsample_factor: usize) -> Result<TofEstimate> {
    estimate_tof_near(cir, cir.peak_tap(), upsample_factor)
}

/// As [`estimate_tof`], around a chosen tap rather than the global peak.
pub fn estimate_tof_near(cir: &Cir, tap: usize, upsample_factor: usize) -> Result<TofEstimate> {
    if upsample_factor == 0 {
        return Err(Error::InvalidInput("upsample factor must be positive".into()));
    }
    if tap >= cir.num_taps() {
        return Err(Error::InvalidInput(format!("tap {tap} outside the CIR")));
    }
    let up = upsample_factor as f64;
    let mag = |pos: f64| cir.interpolate(pos).norm();
    let span = upsample_factor as i64;
    let mut best = (tap as f64, mag(tap as f64));
    for s in -span..=span {
        let pos = tap as f64 + s as f64 / up;
        let m = mag(pos);
        if m > best.1 {
            best = (pos, m);
        }
    }
    let (center, y0) = best;
    let ym = mag(center - 1.0 / up);
    let yp = mag(center + 1.0 / up);
    let offset = cosine_peak_offset(ym, y0, yp);
    let peak_pos = center + offset / up;

    let mut powers: Vec<f64> = cir.taps().iter().map(|t| t.norm_sqr()).collect();
    powers.sort_by(f64::total_cmp);
    let median = powers[powers.len() / 2];
    let peak_power = mag(peak_pos).powi(2);
    let low_confidence = peak_power < 2.0 * median;

    let width = half_power_width(&mag, peak_pos, peak_power.sqrt(), up);
    let noise_var = median / std::f64::consts::LN_2;
    let merged = width > MERGED_WIDTH_RATIO * SINC_HALF_POWER_WIDTH
        || single_arrival_misfit(cir, peak_pos, noise_var) > 0.0;

    Ok(TofEstimate {
        tof_s: peak_pos * cir.sample_interval_s(),
        low_confidence,
        merged,
    })
}

/// Energy left after fitting one sinc near `peak_pos` to the taps within
/// [`FIT_HALF_SPAN_TAPS`], in excess of what noise explains. Positive means
/// the arrival does not look like a single path.
fn single_arrival_misfit(cir: &Cir, peak_pos: f64, noise_var: f64) -> f64 {
    let center = peak_pos.round() as i64;
    let lo = (center - FIT_HALF_SPAN_TAPS).max(0) as usize;
    let hi = ((center + FIT_HALF_SPAN_TAPS) as usize).min(cir.num_taps() - 1);
    let taps = &cir.taps()[lo..=hi];
    let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    if !(energy > 0.0) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for s in -100..=100 {
        let pos = peak_pos + s as f64 * 0.005;
        let basis: Vec<f64> = (lo..=hi).map(|n| crate::math::sinc(n as f64 - pos)).collect();
        let bb: f64 = basis.iter().map(|b| b * b).sum();
        let proj: Complex64 = taps.iter().zip(&basis).map(|(t, b)| t * b).sum::<Complex64>() / bb;
        let resid: f64 = taps.iter().zip(&basis).map(|(t, b)| (t - proj * b).norm_sqr()).sum();
        best = best.min(resid);
    }
    let fraction = best / energy;
    let allowance = (MERGED_RESIDUAL_FLOOR).max(4.0 * taps.len() as f64 * noise_var / energy);
    fraction - allowance
}

/// Vertex of `A cos(w k + phi)` through samples at `k = -1, 0, 1`.
fn cosine_peak_offset(ym: f64, y0: f64, yp: f64) -> f64 {
    if !(y0 > 0.0) {
        return 0.0;
    }
    let c = (ym + yp) / (2.0 * y0);
    if !(c < 1.0) {
        return 0.0;
    }
    let omega = c.max(-1.0).acos();
    let phi = ((ym - yp) / (2.0 * y0 * omega.sin())).atan();
    (-phi / omega).clamp(-1.0, 1.0)
}

fn half_power_width(mag: &dyn Fn(f64) -> f64, peak: f64, peak_mag: f64, up: f64) -> f64 {
    let level = peak_mag / 2f64.sqrt();
    let step = 1.0 / (4.0 * up);
    let edge = |dir: f64| {
        let mut prev = (0.0, peak_mag);
        let mut x = step;
        while x < 4.0 {
            let m = mag(peak + dir * x);
            if m < level {
                let frac = (prev.1 - level) / (prev.1 - m);
                return prev.0 + frac * (x - prev.0);
            }
            prev = (x, m);
            x += step;
        }
        4.0
    };
    edge(-1.0) + edge(1.0)
}

/// A scan peak with its measured time of flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPeak {
    pub angle_deg: f64,
    pub snr_db: f64,
    pub tof_s: f64,
}

/// A departure/arrival pair joined through time of flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociatedPath {
    pub aod_deg: f64,
    pub aoa_deg: f64,
    pub tof_s: f64,
    pub snr_db: f64,
    pub los: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    /// Ordered by time of flight; the first entry is the LOS path.
    pub paths: Vec<AssociatedPath>,
    /// Some departure peak had more than one arrival peak within tolerance.
    pub ambiguous: bool,
}

impl Association {
    /// A path set built from the estimates. Gains are real and scaled so the
    /// LOS path has unit power.
    pub fn to_path_set(&self, carrier_hz: f64) -> Result<PathSet> {
        let ref_db = self.paths.first().map(|p| p.snr_db).unwrap_or(0.0);
        let paths = self
            .paths
            .iter()
            .map(|p| crate::channel::Path::from_db(p.aod_deg, p.aoa_deg, p.snr_db - ref_db, 0.0, p.tof_s))
            .collect();
        PathSet::sorted(paths, carrier_hz)
    }
}

/// Pairs departure and arrival peaks by nearest time of flight.
///
/// Departure peaks are taken strongest first. When several unused arrival
/// peaks lie within [`TOF_MATCH_TOLERANCE_S`], the strongest of them is
/// taken and the result is flagged ambiguous.
pub fn associate_paths(tx_peaks: &[TimedPeak], rx_peaks: &[TimedPeak]) -> Result<Association> {
    if tx_peaks.len() != rx_peaks.len() {
        return Err(Error::LengthMismatch { expected: tx_peaks.len(), got: rx_peaks.len() });
    }
    let mut order: Vec<usize> = (0..tx_peaks.len()).collect();
    order.sort_by(|&a, &b| {
        tx_peaks[b].snr_db.total_cmp(&tx_peaks[a].snr_db).then(tx_peaks[a].tof_s.total_cmp(&tx_peaks[b].tof_s))
    });
    let mut used = vec![false; rx_peaks.len()];
    let mut ambiguous = false;
    let mut paths = Vec::with_capacity(tx_peaks.len());
    for i in order {
        let tx = tx_peaks[i];
        let free: Vec<usize> = (0..rx_peaks.len()).filter(|&j| !used[j]).collect();
        let close: Vec<usize> = free
            .iter()
            .copied()
            .filter(|&j| (rx_peaks[j].tof_s - tx.tof_s).abs() <= TOF_MATCH_TOLERANCE_S)
            .collect();
        let pick = if close.len() > 1 {
            ambiguous = true;
            close.into_iter().max_by(|&a, &b| rx_peaks[a].snr_db.total_cmp(&rx_peaks[b].snr_db))
        } else {
            free.into_iter().min_by(|&a, &b| {
                (rx_peaks[a].tof_s - tx.tof_s).abs().total_cmp(&(rx_peaks[b].tof_s - tx.tof_s).abs())
            })
        };
        let j = pick.expect("equal-length lists leave a free arrival peak");
        used[j] = true;
        let rx = rx_peaks[j];
        paths.push(AssociatedPath {
            aod_deg: tx.angle_deg,
            aoa_deg: rx.angle_deg,
            tof_s: 0.5 * (tx.tof_s + rx.tof_s),
            snr_db: 0.5 * (tx.snr_db + rx.snr_db),
            los: false,
        });
    }
    paths.sort_by(|a, b| a.tof_s.total_cmp(&b.tof_s));
    if let Some(first) = paths.first_mut() {
        first.los = true;
    }
    Ok(Association { paths, ambiguous })
}

/// Parameters of the full training pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub codebook: AngleGrid,
    pub min_prominence_db: f64,
    pub setup: ScanSetup,
    pub cir_taps: usize,
    pub upsample_factor: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            codebook: AngleGrid::new(-90.0, 90.0, DEFAULT_CODEBOOK_STEP_DEG).expect("valid codebook"),
            min_prominence_db: DEFAULT_MIN_PROMINENCE_DB,
            setup: ScanSetup::default(),
            cir_taps: 256,
            upsample_factor: DEFAULT_UPSAMPLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingResult {
    pub tx_profile: ScanProfile,
    pub rx_profile: ScanProfile,
    pub tx_peaks: Vec<TimedPeak>,
    pub rx_peaks: Vec<TimedPeak>,
    pub association: Association,
}

/// CIR seen with the codebook beam nearest to each peak.
fn peak_cirs<R: Rng + ?Sized>(
    ps: &PathSet,
    arrays: &Endpoints,
    profile: &ScanProfile,
    peaks: &[Peak],
    cfg: &TrainingConfig,
    rng: &mut Option<&mut R>,
) -> Result<Vec<Cir>> {
    let side = profile.side;
    let ends = side_endpoints(arrays, side);
    let noise = NoiseSpec { noise_power: cfg.setup.link.noise_power, seed: 0 };
    let bw = cfg.setup.subcarriers.bandwidth_hz();
    peaks
        .iter()
        .map(|p| {
            let angle = profile.angles_deg[profile.nearest_index(p.angle_deg)];
            let (w_t, w_r) = side_weights(&ends, side, angle)?;
            let cir = synthesize_cir(ps, &ends, &w_t, &w_r, bw, cfg.cir_taps)?;
            Ok(match rng.as_deref_mut() {
                Some(r) => {
                    let snr = received_snr(ps, &ends, &w_t, &w_r, cfg.setup.link.tx_power, &noise, &cfg.setup.subcarriers)?;
                    cir.with_noise(lin_to_db(snr), r)
                }
                None => cir,
            })
        })
        .collect()
}

/// Picks, for every beam, the CIR peak that is most specific to that beam
/// and refines its time of flight.
fn per_beam_tofs(cirs: &[Cir], upsample: usize) -> Result<Vec<f64>> {
    let power = |c: &Cir, n: usize| c.taps()[n].norm_sqr();
    let mut candidates: Vec<usize> = Vec::new();
    for c in cirs {
        let max = c.taps()[c.peak_tap()].norm_sqr();
        for n in 0..c.num_taps() {
            let p = power(c, n);
            let left = n == 0 || p > power(c, n - 1);
            let right = n + 1 == c.num_taps() || p >= power(c, n + 1);
            if left && right && p >= 0.05 * max && !candidates.contains(&n) {
                candidates.push(n);
            }
        }
    }
    candidates.sort_unstable();
    cirs.iter()
        .map(|c| {
            let max = c.taps()[c.peak_tap()].norm_sqr();
            let total = |n: usize| cirs.iter().map(|o| power(o, n)).sum::<f64>();
            let scored: Vec<(usize, f64, f64)> = candidates
                .iter()
                .map(|&n| (n, power(c, n) / total(n).max(f64::MIN_POSITIVE), power(c, n)))
                .filter(|&(_, _, p)| p >= 0.1 * max)
                .collect();
            let best_share = scored.iter().map(|s| s.1).fold(0.0, f64::max);
            let tap = scored
                .iter()
                .filter(|s| s.1 >= best_share - 0.05)
                .max_by(|a, b| a.2.total_cmp(&b.2))
                .map(|s| s.0)
                .unwrap_or_else(|| c.peak_tap());
            Ok(estimate_tof_near(c, tap, upsample)?.tof_s)
        })
        .collect()
}

/// Full training pass: scan both sides, extract peaks, time them and pair
/// them. Scans are logged on consecutive slots starting at `slot`.
pub fn train<R: Rng + ?Sized>(
    ps: &PathSet,
    arrays: &Endpoints,
    cfg: &TrainingConfig,
    ledger: &mut ProbeLedger,
    slot: u64,
    mut rng: Option<&mut R>,
) -> Result<TrainingResult> {
    let n = cfg.codebook.len() as u64;
    let tx_profile =
        exhaustive_scan(ps, arrays, Side::Transmit, &cfg.codebook, &cfg.setup, ledger, slot, rng.as_deref_mut())?;
    let rx_profile =
        exhaustive_scan(ps, arrays, Side::Receive, &cfg.codebook, &cfg.setup, ledger, slot + n, rng.as_deref_mut())?;
    let mut tx = extract_paths(&tx_profile, cfg.min_prominence_db);
    let mut rx = extract_paths(&rx_profile, cfg.min_prominence_db);
    let keep = tx.len().min(rx.len());
    tx.truncate(keep);
    rx.truncate(keep);

    let timed = |profile: &ScanProfile, peaks: &[Peak], rng: &mut Option<&mut R>| -> Result<Vec<TimedPeak>> {
        let cirs = peak_cirs(ps, arrays, profile, peaks, cfg, rng)?;
        let tofs = per_beam_tofs(&cirs, cfg.upsample_factor)?;
        Ok(peaks
            .iter()
            .zip(tofs)
            .map(|(p, tof_s)| TimedPeak { angle_deg: p.angle_deg, snr_db: p.snr_db, tof_s })
            .collect())
    };
    let tx_peaks = timed(&tx_profile, &tx, &mut rng)?;
    let rx_peaks = timed(&rx_profile, &rx, &mut rng)?;
    let association = associate_paths(&tx_peaks, &rx_peaks)?;
    Ok(TrainingResult { tx_profile, rx_profile, tx_peaks, rx_peaks, association })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{cir_from_amplitudes, Path, RandomChannel};
    use crate::ledger::SsbAccounting;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const BW: f64 = 400e6;

    fn arrays() -> Endpoints {
        Endpoints::new(ArrayGeometry::ula(8), ArrayGeometry::ula(8))
    }

    fn noiseless_scan(ps: &PathSet, side: Side, grid: &AngleGrid) -> ScanProfile {
        let mut ledger = ProbeLedger::new(SsbAccounting::PerSsb);
        exhaustive_scan::<ChaCha8Rng>(ps, &arrays(), side, grid, &ScanSetup::default(), &mut ledger, 0, None).unwrap()
    }

    fn codebook() -> AngleGrid {
        AngleGrid::new(-90.0, 90.0, 2.0).unwrap()
    }

    #[test]
    fn single_path_profile_peaks_at_nearest_codebook_angle() {
        let ps = PathSet::new(vec![Path::new(20.5, -10.0, Complex64::new(1.0, 0.0), 20e-9)], 28e9).unwrap();
        let prof = noiseless_scan(&ps, Side::Transmit, &codebook());
        let best = prof.snr_db.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(prof.angles_deg[best], 20.0);
        let peaks = extract_paths(&prof, 3.0);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].angle_deg - 20.5).abs() < 1.0);
    }

    #[test]
    fn two_paths_give_two_maxima_three_db_apart() {
        let ps = PathSet::new(
            vec![
                Path::from_db(0.0, 0.0, 0.0, 0.0, 20e-9),
                Path::from_db(30.0, 30.0, -3.0, 0.0, 40e-9),
            ],
            28e9,
        )
        .unwrap();
        let prof = noiseless_scan(&ps, Side::Transmit, &codebook());
        let mut maxima: Vec<f64> = prominent_maxima(&prof.snr_db).into_iter().map(|(i, _)| prof.snr_db[i]).collect();
        maxima.sort_by(|a, b| b.total_cmp(a));
        assert!((maxima[0] - maxima[1] - 3.0).abs() < 0.3, "{maxima:?}");
        assert!(maxima[1] - maxima[2] > 8.0);
        let peaks = extract_paths(&prof, 3.0);
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].angle_deg).abs() < 1.0 && (peaks[1].angle_deg - 30.0).abs() < 1.0);
    }

    #[test]
    fn flat_profile_has_no_peaks() {
        let prof = ScanProfile::new(codebook().points(), vec![10.0; 91], Side::Receive, ArrayGeometry::ula(8)).unwrap();
        assert!(extract_paths(&prof, 3.0).is_empty());
    }

    #[test]
    fn sixty_four_beam_scan_costs_32_ms() {
        let ps = PathSet::new(vec![Path::new(0.0, 0.0, Complex64::new(1.0, 0.0), 20e-9)], 28e9).unwrap();
        let grid = AngleGrid::new(-63.0, 63.0, 2.0).unwrap();
        let mut ledger = ProbeLedger::new(SsbAccounting::PerSsb);
        exhaustive_scan::<ChaCha8Rng>(&ps, &arrays(), Side::Transmit, &grid, &ScanSetup::default(), &mut ledger, 0, None)
            .unwrap();
        assert_eq!(ledger.count(ProbeKind::Ssb), 64);
        assert!((ledger.total_ms() - 32.0).abs() < 1e-12);
    }

    #[test]
    fn profile_rejects_unsorted_angles_and_writes_csv() {
        assert!(ScanProfile::new(vec![0.0, 0.0], vec![1.0, 1.0], Side::Transmit, ArrayGeometry::ula(8)).is_err());
        let p = ScanProfile::new(vec![-2.0, 0.0], vec![1.0, 2.5], Side::Receive, ArrayGeometry::ula(8)).unwrap();
        assert_eq!(p.to_csv(), "angle_deg,snr_db,side\n-2,1,rx\n0,2.5,rx\n");
    }

    #[test]
    fn tof_on_tap_is_exact() {
        let cir = cir_from_amplitudes(&[Complex64::new(1.0, 0.0)], &[30.0 / BW], BW, 128).unwrap();
        let est = estimate_tof(&cir, 8).unwrap();
        assert!((est.tof_s - 30.0 / BW).abs() < 1e-15);
        assert!(!est.low_confidence && !est.merged);
    }

    #[test]
    fn fractional_tof_within_eighth_tap() {
        let ts = 1.0 / BW;
        for frac in [0.1, 0.3, 0.5, 0.77] {
            let tau = (40.0 + frac) * ts;
            let cir = cir_from_amplitudes(&[Complex64::from_polar(1.0, 1.1)], &[tau], BW, 128).unwrap();
            let est = estimate_tof(&cir, 8).unwrap();
            assert!((est.tof_s - tau).abs() < ts / 8.0, "frac {frac}: {}", est.tof_s - tau);
        }
    }

    #[test]
    fn merged_paths_are_flagged() {
        let a = [Complex64::new(1.0, 0.0), Complex64::new(0.8, 0.0)];
        let cir = cir_from_amplitudes(&a, &[40e-9, 41e-9], BW, 128).unwrap();
        let est = estimate_tof(&cir, 8).unwrap();
        assert!(est.merged, "{est:?}");
        assert!(est.tof_s > 40e-9 + 0.05e-9);
    }

    #[test]
    fn weak_peak_is_low_confidence() {
        let mut taps: Vec<Complex64> =
            (0..128).map(|n| Complex64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        taps[64] = Complex64::new(1.3, 0.0);
        let est = estimate_tof(&Cir::from_taps(taps, BW).unwrap(), 8).unwrap();
        assert!(est.low_confidence, "{est:?}");
    }

    fn timed(angle: f64, snr: f64, tof_ns: f64) -> TimedPeak {
        TimedPeak { angle_deg: angle, snr_db: snr, tof_s: tof_ns * 1e-9 }
    }

    #[test]
    fn association_pairs_by_tof_and_labels_los() {
        let tx = [timed(10.0, 20.0, 30.0), timed(-20.0, 12.0, 55.0)];
        let rx = [timed(40.0, 11.0, 55.2), timed(-5.0, 21.0, 29.9)];
        let a = associate_paths(&tx, &rx).unwrap();
        assert!(!a.ambiguous);
        assert_eq!(a.paths[0].aod_deg, 10.0);
        assert_eq!(a.paths[0].aoa_deg, -5.0);
        assert!(a.paths[0].los && !a.paths[1].los);
        assert_eq!(a.paths[1].aoa_deg, 40.0);
        let rx_rev = [rx[1], rx[0]];
        let b = associate_paths(&[tx[1], tx[0]], &rx_rev).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn close_tofs_are_ambiguous() {
        let tx = [timed(10.0, 20.0, 30.0), timed(-20.0, 12.0, 30.3)];
        let rx = [timed(40.0, 11.0, 30.2), timed(-5.0, 21.0, 30.1)];
        let a = associate_paths(&tx, &rx).unwrap();
        assert!(a.ambiguous);
        let first = a.paths.iter().find(|p| p.aod_deg == 10.0).unwrap();
        assert_eq!(first.aoa_deg, -5.0);
        assert!(associate_paths(&tx, &rx[..1]).is_err());
    }

    #[test]
    fn single_path_training() {
        let ps = PathSet::new(vec![Path::new(12.3, -33.0, Complex64::new(1.0, 0.0), 25e-9)], 28e9).unwrap();
        let mut ledger = ProbeLedger::new(SsbAccounting::PerSsb);
        let res = train::<ChaCha8Rng>(&ps, &arrays(), &TrainingConfig::default(), &mut ledger, 0, None).unwrap();
        assert_eq!(res.association.paths.len(), 1);
        let p = res.association.paths[0];
        assert!(p.los);
        assert!((p.aod_deg - 12.3).abs() < 1.0 && (p.aoa_deg + 33.0).abs() < 1.0);
        assert!((p.tof_s - 25e-9).abs() < 0.5e-9);
        assert_eq!(ledger.count(ProbeKind::Ssb), 2 * 91);
    }

    pub(crate) fn trial_ok(ps: &PathSet, res: &TrainingResult) -> bool {
        if res.association.paths.len() != ps.len() {
            return false;
        }
        ps.paths().iter().all(|truth| {
            res.association.paths.iter().any(|e| {
                (e.aod_deg - truth.aod_deg).abs() <= 1.0
                    && (e.aoa_deg - truth.aoa_deg).abs() <= 1.0
                    && (e.tof_s - truth.tof_s).abs() <= 0.5e-9
            })
        })
    }

    #[test]
    fn random_channels_train_reliably() {
        let gen = RandomChannel::default();
        let cfg = TrainingConfig::default();
        let mut ok = 0;
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ps = gen.generate(&mut rng);
            let mut ledger = ProbeLedger::new(SsbAccounting::PerSsb);
            let res = train(&ps, &arrays(), &cfg, &mut ledger, 0, Some(&mut rng)).unwrap();
            if trial_ok(&ps, &res) {
                ok += 1;
            }
        }
        assert!(ok >= 190, "{ok}/200");
    }
}
