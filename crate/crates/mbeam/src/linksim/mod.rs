//! Link-level models: closed-form capacity and reliability under blockage,
//! the two-beam phase/amplitude sensitivity map, probe overhead, and the
//! slot-stepped Monte Carlo engine in [`scenario`].

pub mod scenario;

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{single_beam_weights, ArrayGeometry, WeightVector};
use crate::beamgen::{multi_beam_weights, MultiBeamSpec};
use crate::channel::{received_snr, Endpoints, NoiseSpec, Path, PathSet, SubcarrierGrid};
use crate::exec::{map_indices, Execution};
use crate::ledger::{CSI_RS_MS, SSB_MS};
use crate::math::lin_to_db;
use crate::{Error, Result};

pub use scenario::{
    run_scenario, Blocker, LinkMetrics, Mobility, RandomBlocker, Room, ScenarioConfig, ScenarioReport, Scheme,
    SchemeSummary, SlotRecord, TrialMetrics,
};

/// Refinement phases in one maintenance cycle.
pub const DEFAULT_REFINEMENT_PHASES: usize = 3;

/// `log2(1 + snr)`.
pub fn capacity_single(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::InvalidInput(format!("snr {snr} must be non-negative")));
    }
    Ok((1.0 + snr).log2())
}

/// `log2(1 + (1 + delta^2) snr)`: two coherently combined paths, the second
/// `delta` weaker in amplitude.
pub fn capacity_multibeam(snr: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    capacity_single((1.0 + delta * delta) * snr)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!("delta {delta} not in [0, 1]")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidInput(format!("blockage probability {beta} not in [0, 1]")));
    }
    Ok(())
}

/// Probability that not every one of `k` independently blocked beams is
/// blocked: `1 - beta^k`.
pub fn reliability_analytic(beta: f64, k_beams: u32) -> Result<f64> {
    check_beta(beta)?;
    if k_beams == 0 {
        return Err(Error::InvalidInput("at least one beam required".into()));
    }
    Ok(1.0 - beta.powi(k_beams as i32))
}

/// Average throughput with independent per-beam blockage probability
/// `beta`, for a single beam and for a two-beam link.
///
/// The two-beam figure sums the three states with at least one beam up:
/// both up, only the stronger up, only the weaker up.
pub fn avg_throughput_blockage(beta: f64, delta: f64, snr: f64) -> Result<(f64, f64)> {
    check_beta(beta)?;
    check_delta(delta)?;
    let single = (1.0 - beta) * capacity_single(snr)?;
    let both = (1.0 - beta).powi(2) * capacity_multibeam(snr, delta)?;
    let strong_only = beta * (1.0 - beta) * capacity_single(snr)?;
    let weak_only = beta * (1.0 - beta) * capacity_single(delta * delta * snr)?;
    Ok((single, both + strong_only + weak_only))
}

/// Two-beam SNR gain in dB over a single beam for every point of a
/// `(delta_db, sigma_deg)` grid, on a channel whose second path is
/// `channel_delta_db` weaker with phase `channel_sigma_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub delta_db: Vec<f64>,
    pub sigma_deg: Vec<f64>,
    /// Row per `delta_db`, column per `sigma_deg`.
    pub gain_db: Vec<Vec<f64>>,
}

impl SensitivityMap {
    pub fn peak(&self) -> (f64, f64, f64) {
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for (i, row) in self.gain_db.iter().enumerate() {
            for (j, &g) in row.iter().enumerate() {
                if g > best.2 {
                    best = (self.delta_db[i], self.sigma_deg[j], g);
                }
            }
        }
        best
    }

    /// CSV `delta_db,sigma_deg,gain_db`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta_db,sigma_deg,gain_db\n");
        for (d, row) in self.delta_db.iter().zip(&self.gain_db) {
            for (s, g) in self.sigma_deg.iter().zip(row) {
                let _ = writeln!(out, "{d},{s},{g}");
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySetup {
    pub geometry: ArrayGeometry,
    pub beam_angles_deg: [f64; 2],
    pub channel_delta_db: f64,
    pub channel_sigma_deg: f64,
}

impl Default for SensitivitySetup {
    fn default() -> Self {
        Self {
            geometry: ArrayGeometry::ula(8),
            beam_angles_deg: [0.0, 30.0],
            channel_delta_db: -3.0,
            channel_sigma_deg: -40.0,
        }
    }
}

fn two_path_channel(setup: &SensitivitySetup) -> Result<PathSet> {
    let [a0, a1] = setup.beam_angles_deg;
    PathSet::new(
        vec![
            Path::new(a0, 0.0, Complex64::new(1.0, 0.0), 0.0),
            Path::from_db(a1, 0.0, setup.channel_delta_db, setup.channel_sigma_deg, 0.0),
        ],
        setup.geometry.carrier_hz,
    )
}

pub fn sensitivity_map(
    setup: &SensitivitySetup,
    delta_db: &[f64],
    sigma_deg: &[f64],
    exec: Execution,
) -> Result<SensitivityMap> {
    let ps = two_path_channel(setup)?;
    let arrays = Endpoints::tx_only(setup.geometry);
    let grid = SubcarrierGrid::narrowband();
    let noise = NoiseSpec::default();
    let omni = WeightVector::omni();
    let snr = |w: &WeightVector| received_snr(&ps, &arrays, w, &omni, 1.0, &noise, &grid);
    let single = snr(&single_beam_weights(&setup.geometry, setup.beam_angles_deg[0])?)?;
    let rows = map_indices(exec, delta_db.len(), |i| -> Result<Vec<f64>> {
        sigma_deg
            .iter()
            .map(|&s| {
                let spec = MultiBeamSpec::from_db(&setup.beam_angles_deg, &[0.0, delta_db[i]], &[0.0, s])?;
                Ok(lin_to_db(snr(&multi_beam_weights(&setup.geometry, &spec)?)? / single))
            })
            .collect()
    });
    Ok(SensitivityMap {
        delta_db: delta_db.to_vec(),
        sigma_deg: sigma_deg.to_vec(),
        gain_db: rows.into_iter().collect::<Result<_>>()?,
    })
}

/// Grid used for the published map: phase -180..180 in 1 degree steps,
/// amplitude -20..2 dB in 0.5 dB steps.
pub fn default_sensitivity_grid() -> (Vec<f64>, Vec<f64>) {
    let delta = (0..=44).map(|i| -20.0 + 0.5 * i as f64).collect();
    let sigma = (0..=360).map(|i| -180.0 + i as f64).collect();
    (delta, sigma)
}

/// Gain of a matched `delta = 1` two-beam over a single beam on a channel of
/// two equal, co-phased, equal-delay paths `separation_deg` apart.
pub fn separation_gain_db(geom: &ArrayGeometry, separation_deg: f64) -> Result<f64> {
    let setup = SensitivitySetup {
        geometry: *geom,
        beam_angles_deg: [0.0, separation_deg],
        channel_delta_db: 0.0,
        channel_sigma_deg: 0.0,
    };
    let map = sensitivity_map(&setup, &[0.0], &[0.0], Execution::Sequential)?;
    Ok(map.gain_db[0][0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverheadScheme {
    /// Multi-beam maintenance with this many beams.
    MultiBeam { beams: usize },
    /// Hierarchical NR beam sweep.
    NrSweep,
}

/// Probe air time in ms.
///
/// Multi-beam: `(2 (K - 1) + 1)` CSI-RS probes per phase. NR sweep:
/// `2 log2(N)` SSBs, which needs `N` to be a power of two.
pub fn probing_overhead_ms(scheme: OverheadScheme, num_antennas: usize, refinement_phases: usize) -> Result<f64> {
    match scheme {
        OverheadScheme::MultiBeam { beams } => {
            if beams == 0 {
                return Err(Error::InvalidInput("at least one beam required".into()));
            }
            let probes = 2 * (beams - 1) + 1;
            Ok((probes * refinement_phases) as f64 * CSI_RS_MS)
        }
        OverheadScheme::NrSweep => Ok(nr_sweep_ssbs(num_antennas)? as f64 * SSB_MS),
    }
}

/// SSBs in one NR sweep of an `n`-antenna array.
pub fn nr_sweep_ssbs(num_antennas: usize) -> Result<usize> {
    if num_antennas == 0 || !num_antennas.is_power_of_two() {
        return Err(Error::InvalidInput(format!("{num_antennas} antennas is not a power of two")));
    }
    Ok(2 * num_antennas.trailing_zeros() as usize)
}

/// Rows `beta,reliability_k1,reliability_k2,reliability_k3`.
pub fn reliability_curve_csv(betas: &[f64]) -> Result<String> {
    let mut out = String::from("beta,reliability_k1,reliability_k2,reliability_k3\n");
    for &b in betas {
        let _ = writeln!(
            out,
            "{b},{},{},{}",
            reliability_analytic(b, 1)?,
            reliability_analytic(b, 2)?,
            reliability_analytic(b, 3)?
        );
    }
    Ok(out)
}

/// Rows `beta,single,multibeam,ratio` for a fixed `delta` and base SNR.
pub fn throughput_curve_csv(betas: &[f64], delta: f64, snr: f64) -> Result<String> {
    let mut out = String::from("beta,single,multibeam,ratio\n");
    for &b in betas {
        let (s, m) = avg_throughput_blockage(b, delta, snr)?;
        let _ = writeln!(out, "{b},{s},{m},{}", m / s);
    }
    Ok(out)
}
