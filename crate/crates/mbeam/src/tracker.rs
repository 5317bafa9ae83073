//! Per-beam power tracking, event classification and beam refinement.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{beam_gain_lin, ArrayGeometry, WeightVector};
use crate::beamgen::{Lobe, MultiBeamSpec};
use crate::ledger::{ProbeKind, ProbeLedger};
use crate::math::{lin_to_db, wrap_pi, DB_FLOOR};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub forgetting_factor: f64,
    pub fit_window: usize,
    pub refine_threshold_db: f64,
    pub blockage_drop_db: f64,
    pub blockage_span: usize,
    /// Consecutive low samples needed before a drop counts as blockage.
    pub blockage_confirm: usize,
    /// A beam whose drop over the blockage span stays below this is stable.
    pub stable_drop_db: f64,
    pub equal_decay_band_db: f64,
    pub min_decay_db: f64,
    /// Samples averaged into the reference level after a reset.
    pub baseline_samples: usize,
    pub improvement_gate_db: f64,
    pub max_motion_deg: f64,
    pub search_step_deg: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            forgetting_factor: 0.9,
            fit_window: 50,
            refine_threshold_db: 1.5,
            blockage_drop_db: 10.0,
            blockage_span: 10,
            blockage_confirm: 2,
            stable_drop_db: 3.0,
            equal_decay_band_db: 0.5,
            min_decay_db: 0.3,
            baseline_samples: 5,
            improvement_gate_db: 0.3,
            max_motion_deg: 30.0,
            search_step_deg: 0.01,
        }
    }
}

impl TrackerConfig {
    /// Parses a settings file; missing fields take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.forgetting_factor)
            && self.fit_window >= 3
            && self.refine_threshold_db > 0.0
            && self.blockage_span >= 1
            && (1..=self.blockage_span).contains(&self.blockage_confirm)
            && self.baseline_samples >= 1
            && self.max_motion_deg > 0.0
            && self.max_motion_deg <= 90.0
            && self.search_step_deg > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid tracker config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    #[default]
    Static,
    Blockage(Vec<usize>),
    Rotation,
    Translation,
    /// Power is moving but one beam cannot tell rotation from translation.
    MobilityUnclassified,
}

impl Event {
    pub fn label(&self) -> &'static str {
        match self {
            Event::Static => "static",
            Event::Blockage(_) => "blockage",
            Event::Rotation => "rotation",
            Event::Translation => "translation",
            Event::MobilityUnclassified => "mobility_unclassified",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct BeamHistory {
    samples: VecDeque<(u64, f64)>,
    smoothed_db: Option<f64>,
    fit: Option<[f64; 3]>,
    baseline_sum: f64,
    since_reset: usize,
}

impl BeamHistory {
    fn baseline_db(&self, needed: usize) -> Option<f64> {
        (self.since_reset > 0).then(|| self.baseline_sum / self.since_reset.min(needed) as f64)
    }

    fn refit(&mut self) {
        let Some(&(last, _)) = self.samples.back() else {
            self.fit = None;
            return;
        };
        if self.samples.len() < 3 {
            let mean = self.samples.iter().map(|s| s.1).sum::<f64>() / self.samples.len() as f64;
            self.fit = Some([mean, 0.0, 0.0]);
            return;
        }
        let mut ata = Matrix3::<f64>::zeros();
        let mut atb = Vector3::<f64>::zeros();
        for &(slot, p) in &self.samples {
            let t = slot as f64 - last as f64;
            let row = Vector3::new(1.0, t, t * t);
            ata += row * row.transpose();
            atb += row * p;
        }
        self.fit = ata.lu().solve(&atb).map(|c| [c[0], c[1], c[2]]);
    }
}

/// Power history, smoothing and refinement bookkeeping for every beam of the
/// active multi-beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    config: TrackerConfig,
    beams: Vec<BeamHistory>,
    classification: Event,
    last_refine_slot: Option<u64>,
}

impl TrackerState {
    pub fn new(num_beams: usize, config: TrackerConfig) -> Result<Self> {
        if num_beams == 0 {
            return Err(Error::InvalidInput("tracker needs at least one beam".into()));
        }
        config.validate()?;
        Ok(Self {
            config,
            beams: vec![BeamHistory::default(); num_beams],
            classification: Event::Static,
            last_refine_slot: None,
        })
    }

    /// Fewest samples held by any beam.
    pub fn sample_count(&self) -> usize {
        self.beams.iter().map(|b| b.samples.len()).min().unwrap_or(0)
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn num_beams(&self) -> usize {
        self.beams.len()
    }

    pub fn classification(&self) -> &Event {
        &self.classification
    }

    pub fn last_refine_slot(&self) -> Option<u64> {
        self.last_refine_slot
    }

    /// Appends `20 log10 |alpha_k|` for every beam at `slot`.
    pub fn ingest_power(&mut self, slot: u64, alphas: &[Complex64]) -> Result<()> {
        let powers: Vec<f64> = alphas.iter().map(|a| lin_to_db(a.norm_sqr())).collect();
        self.ingest_power_db(slot, &powers)
    }

    /// As [`Self::ingest_power`] with powers already in dB.
    pub fn ingest_power_db(&mut self, slot: u64, powers_db: &[f64]) -> Result<()> {
        if powers_db.len() != self.beams.len() {
            return Err(Error::LengthMismatch { expected: self.beams.len(), got: powers_db.len() });
        }
        let capacity = self.config.fit_window.max(self.config.blockage_span + 1);
        let gamma = self.config.forgetting_factor;
        for (beam, &p) in self.beams.iter_mut().zip(powers_db) {
            if let Some(&(prev, _)) = beam.samples.back() {
                if slot <= prev {
                    return Err(Error::InvalidInput(format!("slot {slot} not after {prev}")));
                }
            }
            beam.samples.push_back((slot, p));
            while beam.samples.len() > capacity {
                beam.samples.pop_front();
            }
            beam.smoothed_db = Some(match beam.smoothed_db {
                Some(s) => gamma * s + (1.0 - gamma) * p,
                None => p,
            });
            if beam.since_reset < self.config.baseline_samples {
                beam.baseline_sum += p;
            }
            beam.since_reset += 1;
            beam.refit();
        }
        Ok(())
    }

    pub fn smoothed_db(&self, beam: usize) -> Option<f64> {
        self.beams.get(beam).and_then(|b| b.smoothed_db)
    }

    /// Reference level the decay is measured against.
    pub fn baseline_db(&self, beam: usize) -> Option<f64> {
        self.beams.get(beam).and_then(|b| b.baseline_db(self.config.baseline_samples))
    }

    /// Quadratic fit of the recent raw powers evaluated at `slot`.
    pub fn fitted_db(&self, beam: usize, slot: u64) -> Option<f64> {
        let b = self.beams.get(beam)?;
        let c = b.fit?;
        let last = b.samples.back()?.0;
        let t = slot as f64 - last as f64;
        Some(c[0] + c[1] * t + c[2] * t * t)
    }

    /// Smoothed power lost since the last reset, positive when falling.
    pub fn smoothed_decay_db(&self, beam: usize) -> f64 {
        match (self.baseline_db(beam), self.smoothed_db(beam)) {
            (Some(b), Some(s)) => b - s,
            _ => 0.0,
        }
    }

    /// Fitted power lost since the last reset, positive when falling.
    pub fn fitted_decay_db(&self, beam: usize) -> f64 {
        let Some(last) = self.beams[beam].samples.back().map(|s| s.0) else { return 0.0 };
        match (self.baseline_db(beam), self.fitted_db(beam, last)) {
            (Some(b), Some(f)) => b - f,
            _ => 0.0,
        }
    }

    fn recent_drop_db(&self, beam: usize) -> f64 {
        let s = &self.beams[beam].samples;
        if s.is_empty() {
            return 0.0;
        }
        let level = s.iter().rev().take(self.config.blockage_confirm).map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let span = self.config.blockage_span + 1;
        s.iter().rev().take(span).map(|x| x.1).fold(f64::NEG_INFINITY, f64::max) - level
    }

    /// Re-evaluates the event from the current history.
    pub fn classify_event(&mut self) -> Result<Event> {
        let min_samples = self.beams.iter().map(|b| b.samples.len()).min().unwrap_or(0);
        if min_samples < self.config.blockage_span {
            return Err(Error::InvalidInput(format!(
                "classification needs {} samples, have {min_samples}",
                self.config.blockage_span
            )));
        }
        let cfg = &self.config;
        let drops: Vec<f64> = (0..self.beams.len()).map(|k| self.recent_drop_db(k)).collect();
        let blocked: Vec<usize> = (0..drops.len()).filter(|&k| drops[k] >= cfg.blockage_drop_db).collect();
        let any_stable = drops.iter().any(|&d| d < cfg.stable_drop_db);
        let event = if !blocked.is_empty() && (any_stable || blocked.len() == drops.len()) {
            Event::Blockage(blocked)
        } else {
            let decays: Vec<f64> = (0..self.beams.len()).map(|k| self.smoothed_decay_db(k)).collect();
            self.mobility_event(&decays)
        };
        self.classification = event.clone();
        Ok(event)
    }

    fn mobility_event(&self, decays: &[f64]) -> Event {
        let cfg = &self.config;
        let min = decays.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = decays.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if min < cfg.min_decay_db {
            return Event::Static;
        }
        if decays.len() == 1 {
            return Event::MobilityUnclassified;
        }
        if max - min <= cfg.equal_decay_band_db {
            return Event::Rotation;
        }
        let pairwise_distinct = decays
            .iter()
            .enumerate()
            .all(|(i, a)| decays[i + 1..].iter().all(|b| (a - b).abs() > cfg.equal_decay_band_db));
        if pairwise_distinct {
            Event::Translation
        } else {
            Event::Static
        }
    }

    /// Whether any beam has lost at least the refinement threshold.
    pub fn should_refine(&self) -> bool {
        (0..self.beams.len()).any(|k| self.smoothed_decay_db(k) >= self.config.refine_threshold_db)
    }

    /// Starts a fresh reference after the beams were re-pointed.
    pub fn mark_refined(&mut self, slot: u64) {
        for k in 0..self.beams.len() {
            self.reset_beam(k);
        }
        self.last_refine_slot = Some(slot);
        self.classification = Event::Static;
    }

    /// Forgets one beam's history, e.g. after its lobe was switched off or
    /// restored.
    pub fn reset_beam(&mut self, beam: usize) {
        if let Some(b) = self.beams.get_mut(beam) {
            *b = BeamHistory::default();
        }
    }

    /// One log row per beam for the most recent sample.
    pub fn log_rows(&self, phi_est_deg: Option<f64>, probes_used: usize) -> Vec<TrackerLogRow> {
        self.beams
            .iter()
            .enumerate()
            .filter_map(|(k, b)| {
                let &(slot, power_db) = b.samples.back()?;
                Some(TrackerLogRow {
                    slot,
                    beam_id: k,
                    power_db,
                    smoothed_db: b.smoothed_db.unwrap_or(power_db),
                    event: self.classification.label().to_string(),
                    phi_est_deg,
                    probes_used,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerLogRow {
    pub slot: u64,
    pub beam_id: usize,
    pub power_db: f64,
    pub smoothed_db: f64,
    pub event: String,
    pub phi_est_deg: Option<f64>,
    pub probes_used: usize,
}

/// CSV `slot,beam_id,power_db,smoothed_db,event,phi_est_deg,probes_used`;
/// a missing angle is written as an empty field.
pub fn tracker_log_csv(rows: &[TrackerLogRow]) -> String {
    let mut out = String::from("slot,beam_id,power_db,smoothed_db,event,phi_est_deg,probes_used\n");
    for r in rows {
        let phi = r.phi_est_deg.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.slot, r.beam_id, r.power_db, r.smoothed_db, r.event, phi, r.probes_used
        );
    }
    out
}

/// Power pattern of a fixed weight vector, in dB.
#[derive(Debug, Clone, Copy)]
pub struct BeamPattern<'a> {
    pub geometry: &'a ArrayGeometry,
    pub weights: &'a WeightVector,
}

impl<'a> BeamPattern<'a> {
    pub fn new(geometry: &'a ArrayGeometry, weights: &'a WeightVector) -> Result<Self> {
        geometry.check_len(weights)?;
        Ok(Self { geometry, weights })
    }

    /// Gain toward `angle_deg`; directions past endfire read as the floor.
    pub fn gain_db(&self, angle_deg: f64) -> f64 {
        beam_gain_lin(self.geometry, self.weights, angle_deg).map(lin_to_db).unwrap_or(DB_FLOOR)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Rotation,
    Translation,
}

/// Angular deviation recovered from power decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionEstimate {
    pub kind: MotionKind,
    /// Magnitude of the deviation.
    pub phi_deg: f64,
    /// Best positive and best negative deviation.
    pub candidates: [f64; 2],
    pub resolved: bool,
    /// The decay could not be explained inside the search range.
    pub saturated: bool,
    /// Beam the estimate belongs to, for per-beam translation estimates.
    pub beam: Option<usize>,
}

/// Best deviation in each direction for a cost over candidate angles.
fn signed_search(max_deg: f64, step_deg: f64, cost: impl Fn(f64) -> f64) -> ([f64; 2], [f64; 2]) {
    let steps = (max_deg / step_deg).round() as usize;
    let mut best = [(0.0, cost(0.0)), (0.0, cost(0.0))];
    for i in 1..=steps {
        let phi = i as f64 * step_deg;
        for (slot, signed) in best.iter_mut().zip([phi, -phi]) {
            let c = cost(signed);
            if c < slot.1 {
                *slot = (signed, c);
            }
        }
    }
    ([best[0].0, best[1].0], [best[0].1, best[1].1])
}

fn motion_estimate(
    kind: MotionKind,
    candidates: [f64; 2],
    costs: [f64; 2],
    terms: usize,
    max_deg: f64,
    beam: Option<usize>,
) -> MotionEstimate {
    let rms = costs.iter().cloned().fold(f64::INFINITY, f64::min) / terms.max(1) as f64;
    let at_edge = candidates.iter().any(|c| (c.abs() - max_deg).abs() < 1e-9);
    MotionEstimate {
        kind,
        phi_deg: 0.5 * (candidates[0] - candidates[1]),
        candidates,
        resolved: candidates == [0.0, 0.0],
        saturated: at_edge || rms.sqrt() > 1.0,
        beam,
    }
}

/// Common receive-side rotation from the decay of every beam, searched over
/// the receive pattern around each beam's steering angle.
pub fn estimate_rotation(state: &TrackerState, rx: BeamPattern<'_>, beam_angles_deg: &[f64]) -> Result<MotionEstimate> {
    if state.classification != Event::Rotation {
        return Err(Error::InvalidInput(format!("classification is {}", state.classification.label())));
    }
    estimate_rotation_from_decays(state.config(), rx, beam_angles_deg, &fitted_decays(state))
}

fn fitted_decays(state: &TrackerState) -> Vec<f64> {
    (0..state.num_beams()).map(|k| state.fitted_decay_db(k)).collect()
}

/// Rotation estimate from explicit per-beam decays (dB, positive = loss).
pub fn estimate_rotation_from_decays(
    cfg: &TrackerConfig,
    rx: BeamPattern<'_>,
    beam_angles_deg: &[f64],
    decays_db: &[f64],
) -> Result<MotionEstimate> {
    if beam_angles_deg.len() != decays_db.len() {
        return Err(Error::LengthMismatch { expected: beam_angles_deg.len(), got: decays_db.len() });
    }
    let reference: Vec<f64> = beam_angles_deg.iter().map(|&a| rx.gain_db(a)).collect();
    let cost = |phi: f64| {
        beam_angles_deg
            .iter()
            .zip(&reference)
            .zip(decays_db)
            .map(|((&a, &g0), &d)| (rx.gain_db(a + phi) - g0 + d).powi(2))
            .sum::<f64>()
    };
    let (cands, costs) = signed_search(cfg.max_motion_deg, cfg.search_step_deg, cost);
    Ok(motion_estimate(MotionKind::Rotation, cands, costs, decays_db.len(), cfg.max_motion_deg, None))
}

/// Per-beam deviation under translation, where each path drifts by the same
/// angle at both ends.
pub fn estimate_translation(
    state: &TrackerState,
    tx: BeamPattern<'_>,
    rx: BeamPattern<'_>,
    aod_deg: &[f64],
    aoa_deg: &[f64],
) -> Result<Vec<MotionEstimate>> {
    if state.classification != Event::Translation {
        return Err(Error::InvalidInput(format!("classification is {}", state.classification.label())));
    }
    estimate_translation_from_decays(state.config(), tx, rx, aod_deg, aoa_deg, &fitted_decays(state))
}

pub fn estimate_translation_from_decays(
    cfg: &TrackerConfig,
    tx: BeamPattern<'_>,
    rx: BeamPattern<'_>,
    aod_deg: &[f64],
    aoa_deg: &[f64],
    decays_db: &[f64],
) -> Result<Vec<MotionEstimate>> {
    if aod_deg.len() != decays_db.len() || aoa_deg.len() != decays_db.len() {
        return Err(Error::LengthMismatch { expected: decays_db.len(), got: aod_deg.len().min(aoa_deg.len()) });
    }
    Ok((0..decays_db.len())
        .map(|k| {
            let (t0, r0) = (tx.gain_db(aod_deg[k]), rx.gain_db(aoa_deg[k]));
            let cost =
                |phi: f64| (tx.gain_db(aod_deg[k] + phi) - t0 + rx.gain_db(aoa_deg[k] + phi) - r0 + decays_db[k]).powi(2);
            let (cands, costs) = signed_search(cfg.max_motion_deg, cfg.search_step_deg, cost);
            motion_estimate(MotionKind::Translation, cands, costs, 1, cfg.max_motion_deg, Some(k))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub estimate: MotionEstimate,
    /// Signed correction now in effect; zero after a revert.
    pub applied_deg: f64,
    pub probes_used: usize,
    /// Neither direction helped; the link should be retrained.
    pub retrain: bool,
}

/// Picks the sign of an ambiguous deviation.
///
/// `measure(phi)` returns the SNR (dB) with the correction `phi` applied.
/// The positive candidate is tried on one CSI-RS probe, which is logged.
/// If it does not beat `current_snr_db` by the improvement gate, the
/// negative candidate is applied and checked on the following data slot.
pub fn resolve_ambiguity<F>(
    estimate: &MotionEstimate,
    current_snr_db: f64,
    gate_db: f64,
    mut measure: F,
    ledger: &mut ProbeLedger,
    slot: u64,
) -> Result<Resolution>
where
    F: FnMut(f64) -> Result<f64>,
{
    let beam_id = estimate.beam.unwrap_or(0);
    if estimate.resolved || estimate.candidates == [0.0, 0.0] {
        let applied_deg = if estimate.resolved { estimate.candidates[0] } else { 0.0 };
        return Ok(Resolution { estimate: MotionEstimate { resolved: true, ..*estimate }, applied_deg, probes_used: 0, retrain: false });
    }
    ledger.record(slot, ProbeKind::CsiRs, beam_id);
    let done = |phi: f64| Resolution {
        estimate: MotionEstimate { resolved: true, phi_deg: phi.abs(), candidates: [phi, phi], ..*estimate },
        applied_deg: phi,
        probes_used: 1,
        retrain: false,
    };
    let [plus, minus] = estimate.candidates;
    if measure(plus)? >= current_snr_db + gate_db {
        return Ok(done(plus));
    }
    if measure(minus)? >= current_snr_db + gate_db {
        return Ok(done(minus));
    }
    Ok(Resolution { estimate: *estimate, applied_deg: 0.0, probes_used: 1, retrain: true })
}

/// Result of switching off blocked lobes.
#[derive(Debug, Clone, PartialEq)]
pub struct Reallocation {
    pub spec: MultiBeamSpec,
    /// `order[i]` is the original index of lobe `i` in `spec`.
    pub order: Vec<usize>,
}

/// Zeroes the blocked lobes so their power goes to the others at synthesis.
/// If the reference lobe is blocked, the strongest survivor becomes the new
/// reference and the survivors keep their mutual amplitude and phase ratios.
pub fn reallocate_on_blockage(spec: &MultiBeamSpec, blocked: &[usize]) -> Result<Reallocation> {
    let k = spec.len();
    if let Some(&b) = blocked.iter().find(|&&b| b >= k) {
        return Err(Error::InvalidInput(format!("beam {b} not in a {k}-beam spec")));
    }
    let beams = spec.beams();
    let alive: Vec<usize> = (0..k).filter(|i| !blocked.contains(i) && beams[*i].delta > 0.0).collect();
    let Some(&reference) = alive.iter().max_by(|&&a, &&b| {
        beams[a].delta.total_cmp(&beams[b].delta).then(b.cmp(&a))
    }) else {
        return Err(Error::Outage);
    };
    let reference = if alive.contains(&0) { 0 } else { reference };
    let mut order = vec![reference];
    order.extend((0..k).filter(|&i| i != reference));
    let r = beams[reference];
    let lobes = order
        .iter()
        .map(|&i| {
            let b = beams[i];
            if i == reference {
                Lobe::new(b.angle_deg, 1.0, 0.0)
            } else if blocked.contains(&i) {
                Lobe::new(b.angle_deg, 0.0, 0.0)
            } else {
                Lobe::new(b.angle_deg, b.delta / r.delta, wrap_pi(b.sigma_rad - r.sigma_rad))
            }
        })
        .collect();
    Ok(Reallocation { spec: MultiBeamSpec::new(lobes)?, order })
}

/// Decay over a straight-line pass: beam misalignment at a fixed transmit
/// beam versus the extra free-space loss, both in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct V2xDecay {
    pub misalignment_db: f64,
    pub path_loss_db: f64,
    pub deviation_deg: f64,
}

/// A receiver `distance_m` from a fixed transmit beam moves perpendicular to
/// the link at `speed_mps` for `duration_s`; only the transmit side is
/// directional.
pub fn v2x_decay(geom: &ArrayGeometry, distance_m: f64, speed_mps: f64, duration_s: f64) -> Result<V2xDecay> {
    if !(distance_m > 0.0) || !(speed_mps >= 0.0) || !(duration_s >= 0.0) {
        return Err(Error::InvalidInput("distance must be positive, speed and time non-negative".into()));
    }
    let offset = speed_mps * duration_s;
    let deviation_deg = (offset / distance_m).atan().to_degrees();
    let w = crate::array::single_beam_weights(geom, 0.0)?;
    let misalignment_db = lin_to_db(beam_gain_lin(geom, &w, 0.0)?) - lin_to_db(beam_gain_lin(geom, &w, deviation_deg)?);
    let path_loss_db = 10.0 * (1.0 + (offset / distance_m).powi(2)).log10();
    Ok(V2xDecay { misalignment_db, path_loss_db, deviation_deg })
}
