//! Sparse geometric multipath channel.
//!
//! A [`PathSet`] lists a handful of discrete paths, each with departure and
//! arrival angles, a complex baseband gain and a time of flight. The gain
//! already contains the carrier phase of the path, so the per-subcarrier
//! response of path `l` at offset `k` is `gain_l * exp(-j 2 pi k df tau_l)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{check_angle, steering_vector, ArrayGeometry, WeightVector};
use crate::math::{lin_to_db, sinc};
use crate::{Error, Result};

pub const MAX_PATHS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub aod_deg: f64,
    pub aoa_deg: f64,
    pub gain: Complex64,
    pub tof_s: f64,
}

impl Path {
    pub fn new(aod_deg: f64, aoa_deg: f64, gain: Complex64, tof_s: f64) -> Self {
        Self { aod_deg, aoa_deg, gain, tof_s }
    }

    pub fn from_db(aod_deg: f64, aoa_deg: f64, gain_db: f64, phase_deg: f64, tof_s: f64) -> Self {
        let mag = 10f64.powf(gain_db / 20.0);
        Self::new(aod_deg, aoa_deg, Complex64::from_polar(mag, phase_deg.to_radians()), tof_s)
    }
}

/// Reflector materials with their attenuation relative to the direct path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Metal,
    Monitor,
    Wood,
    Wall,
}

impl Material {
    pub const ALL: [Material; 4] = [Material::Metal, Material::Monitor, Material::Wood, Material::Wall];

    pub fn attenuation_db(self) -> f64 {
        match self {
            Material::Metal => -3.0,
            Material::Monitor => -12.0,
            Material::Wood => -15.0,
            Material::Wall => -16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    paths: Vec<Path>,
    carrier_hz: f64,
}

impl PathSet {
    /// Validates the path list. Path 0 must have the smallest time of flight.
    pub fn new(paths: Vec<Path>, carrier_hz: f64) -> Result<Self> {
        if paths.is_empty() || paths.len() > MAX_PATHS {
            return Err(Error::InvalidInput(format!(
                "path count {} not in 1..={MAX_PATHS}",
                paths.len()
            )));
        }
        if !(carrier_hz > 0.0) {
            return Err(Error::InvalidInput(format!("carrier {carrier_hz} Hz must be positive")));
        }
        for p in &paths {
            check_angle(p.aod_deg)?;
            check_angle(p.aoa_deg)?;
            if !(p.tof_s >= 0.0) || !p.tof_s.is_finite() {
                return Err(Error::InvalidInput(format!("time of flight {} s", p.tof_s)));
            }
            if !p.gain.re.is_finite() || !p.gain.im.is_finite() {
                return Err(Error::InvalidInput("non-finite path gain".into()));
            }
        }
        if paths.iter().any(|p| p.tof_s < paths[0].tof_s) {
            return Err(Error::InvalidInput("path 0 must have the minimum time of flight".into()));
        }
        Ok(Self { paths, carrier_hz })
    }

    /// Like [`PathSet::new`] but sorts by time of flight first.
    pub fn sorted(mut paths: Vec<Path>, carrier_hz: f64) -> Result<Self> {
        paths.sort_by(|a, b| a.tof_s.total_cmp(&b.tof_s));
        Self::new(paths, carrier_hz)
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let paths = self.paths.iter().map(|p| Path { gain: p.gain * c, ..*p }).collect();
        Self { paths, carrier_hz: self.carrier_hz }
    }

    pub fn tofs(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.tof_s).collect()
    }

    pub fn to_toml(&self) -> String {
        let file = PathSetFile {
            carrier_hz: self.carrier_hz,
            paths: self
                .paths
                .iter()
                .map(|p| PathRecord {
                    aod_deg: p.aod_deg,
                    aoa_deg: p.aoa_deg,
                    gain_db: lin_to_db(p.gain.norm_sqr()),
                    phase_deg: p.gain.arg().to_degrees(),
                    tof_ns: p.tof_s * 1e9,
                })
                .collect(),
        };
        toml::to_string(&file).expect("path set serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: PathSetFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let paths = file
            .paths
            .iter()
            .map(|r| Path::from_db(r.aod_deg, r.aoa_deg, r.gain_db, r.phase_deg, r.tof_ns * 1e-9))
            .collect();
        Self::new(paths, file.carrier_hz)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PathSetFile {
    #[serde(default = "default_carrier")]
    carrier_hz: f64,
    paths: Vec<PathRecord>,
}

fn default_carrier() -> f64 {
    crate::array::DEFAULT_CARRIER_HZ
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRecord {
    aod_deg: f64,
    aoa_deg: f64,
    gain_db: f64,
    phase_deg: f64,
    tof_ns: f64,
}

/// OFDM subcarrier grid centred on the carrier: offsets `-count/2 .. count/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierGrid {
    pub count: usize,
    pub spacing_hz: f64,
}

impl SubcarrierGrid {
    pub fn new(count: usize, spacing_hz: f64) -> Result<Self> {
        if count == 0 || !(spacing_hz > 0.0) {
            return Err(Error::InvalidInput(format!("subcarrier grid {count} x {spacing_hz} Hz")));
        }
        Ok(Self { count, spacing_hz })
    }

    /// A single subcarrier at the carrier frequency.
    pub fn narrowband() -> Self {
        Self { count: 1, spacing_hz: 1.0 }
    }

    pub fn first_index(&self) -> i64 {
        -((self.count / 2) as i64)
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        let first = self.first_index();
        (0..self.count as i64).map(move |m| first + m)
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.count as f64 * self.spacing_hz
    }

    /// `mean_k exp(-j 2 pi k df dt)` over the grid, in closed form.
    pub fn delay_kernel(&self, dt_s: f64) -> Complex64 {
        let x = 2.0 * PI * self.spacing_hz * dt_s;
        let k = self.count as f64;
        let half = 0.5 * x;
        if half.sin().abs() < 1e-9 {
            return self.delay_kernel_direct(dt_s);
        }
        let ratio = (k * half).sin() / (k * half.sin());
        let phase = -x * (self.first_index() as f64 + 0.5 * (k - 1.0));
        Complex64::from_polar(ratio, phase)
    }

    fn delay_kernel_direct(&self, dt_s: f64) -> Complex64 {
        let x = 2.0 * PI * self.spacing_hz * dt_s;
        let sum: Complex64 = self.indices().map(|k| Complex64::from_polar(1.0, -x * k as f64)).sum();
        sum / self.count as f64
    }
}

impl Default for SubcarrierGrid {
    fn default() -> Self {
        Self { count: 256, spacing_hz: 1.5625e6 }
    }
}

/// Array descriptions of the transmitter and the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
}

impl Endpoints {
    pub fn new(tx: ArrayGeometry, rx: ArrayGeometry) -> Self {
        Self { tx, rx }
    }

    /// Directional transmitter, single-element receiver.
    pub fn tx_only(tx: ArrayGeometry) -> Self {
        Self { tx, rx: ArrayGeometry::omni() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub noise_power: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(noise_power: f64, seed: u64) -> Result<Self> {
        if !(noise_power > 0.0) {
            return Err(Error::InvalidInput(format!("noise power {noise_power} must be positive")));
        }
        Ok(Self { noise_power, seed })
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { noise_power: 1.0, seed: 0 }
    }
}

fn path_rotation(k: i64, delta_f_hz: f64, tof_s: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * k as f64 * delta_f_hz * tof_s)
}

/// Per-transmit-element channel at subcarrier `k` seen by a single receive
/// element.
pub fn freq_response(
    ps: &PathSet,
    geom_t: &ArrayGeometry,
    k: i64,
    delta_f_hz: f64,
) -> Result<Vec<Complex64>> {
    let rx_gain = vec![Complex64::new(1.0, 0.0); ps.len()];
    freq_response_weighted(ps, geom_t, &rx_gain, k, delta_f_hz)
}

/// Per-transmit-element channel at subcarrier `k` after receive combining.
pub fn freq_response_with_rx(
    ps: &PathSet,
    arrays: &Endpoints,
    w_r: &WeightVector,
    k: i64,
    delta_f_hz: f64,
) -> Result<Vec<Complex64>> {
    let rx_gain = ps
        .paths
        .iter()
        .map(|p| arrays.rx.response(w_r, p.aoa_deg))
        .collect::<Result<Vec<_>>>()?;
    freq_response_weighted(ps, &arrays.tx, &rx_gain, k, delta_f_hz)
}

fn freq_response_weighted(
    ps: &PathSet,
    geom_t: &ArrayGeometry,
    rx_gain: &[Complex64],
    k: i64,
    delta_f_hz: f64,
) -> Result<Vec<Complex64>> {
    let mut h = vec![Complex64::new(0.0, 0.0); geom_t.num_elements];
    for (p, g) in ps.paths.iter().zip(rx_gain) {
        let coeff = p.gain * g * path_rotation(k, delta_f_hz, p.tof_s);
        for (hn, an) in h.iter_mut().zip(steering_vector(geom_t, p.aod_deg)?) {
            *hn += coeff * an;
        }
    }
    Ok(h)
}

/// Beam-projected amplitude of each path,
/// `(a_R^T w_r) (a_T^T w_t) gain`.
pub fn effective_path_amplitudes(
    ps: &PathSet,
    arrays: &Endpoints,
    w_t: &WeightVector,
    w_r: &WeightVector,
) -> Result<Vec<Complex64>> {
    ps.paths
        .iter()
        .map(|p| Ok(arrays.rx.response(w_r, p.aoa_deg)? * arrays.tx.response(w_t, p.aod_deg)? * p.gain))
        .collect()
}

/// Scalar end-to-end channel on every subcarrier of the grid.
pub fn effective_freq_response(
    ps: &PathSet,
    arrays: &Endpoints,
    w_t: &WeightVector,
    w_r: &WeightVector,
    grid: &SubcarrierGrid,
) -> Result<Vec<Complex64>> {
    let alphas = effective_path_amplitudes(ps, arrays, w_t, w_r)?;
    Ok(grid
        .indices()
        .map(|k| {
            alphas
                .iter()
                .zip(&ps.paths)
                .map(|(a, p)| a * path_rotation(k, grid.spacing_hz, p.tof_s))
                .sum()
        })
        .collect())
}

/// Mean over the grid of `|sum_l alpha_l exp(-j 2 pi k df tau_l)|^2`.
pub fn mean_grid_power(alphas: &[Complex64], tofs: &[f64], grid: &SubcarrierGrid) -> f64 {
    let mut total = 0.0;
    for i in 0..alphas.len() {
        total += alphas[i].norm_sqr();
        for j in (i + 1)..alphas.len() {
            let cross = alphas[i] * alphas[j].conj() * grid.delay_kernel(tofs[i] - tofs[j]);
            total += 2.0 * cross.re;
        }
    }
    total.max(0.0)
}

/// Linear SNR averaged over the subcarrier grid.
pub fn received_snr(
    ps: &PathSet,
    arrays: &Endpoints,
    w_t: &WeightVector,
    w_r: &WeightVector,
    tx_power: f64,
    noise: &NoiseSpec,
    grid: &SubcarrierGrid,
) -> Result<f64> {
    let alphas = effective_path_amplitudes(ps, arrays, w_t, w_r)?;
    Ok(mean_grid_power(&alphas, &ps.tofs(), grid) * tx_power / noise.noise_power)
}

/// [`received_snr`] in dB.
pub fn received_snr_db(
    ps: &PathSet,
    arrays: &Endpoints,
    w_t: &WeightVector,
    w_r: &WeightVector,
    tx_power: f64,
    noise: &NoiseSpec,
    grid: &SubcarrierGrid,
) -> Result<f64> {
    Ok(lin_to_db(received_snr(ps, arrays, w_t, w_r, tx_power, noise, grid)?))
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// SNR estimated from noisy per-subcarrier observations: the mean received
/// power minus the known noise power, floored at a tiny positive value.
#[allow(clippy::too_many_arguments)]
pub fn measured_snr_db<R: Rng + ?Sized>(
    ps: &PathSet,
    arrays: &Endpoints,
    w_t: &WeightVector,
    w_r: &WeightVector,
    tx_power: f64,
    noise: &NoiseSpec,
    grid: &SubcarrierGrid,
    rng: &mut R,
) -> Result<f64> {
    let amp = tx_power.sqrt();
    let h = effective_freq_response(ps, arrays, w_t, w_r, grid)?;
    let power = h
        .iter()
        .map(|x| (x * amp + complex_gaussian(rng, noise.noise_power)).norm_sqr())
        .sum::<f64>()
        / h.len() as f64;
    Ok(lin_to_db(((power - noise.noise_power) / noise.noise_power).max(1e-6)))
}

/// Critically sampled, band-limited channel impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    taps: Vec<Complex64>,
    bandwidth_hz: f64,
}

impl Cir {
    pub fn from_taps(taps: Vec<Complex64>, bandwidth_hz: f64) -> Result<Self> {
        if taps.is_empty() || !(bandwidth_hz > 0.0) {
            return Err(Error::InvalidInput("CIR needs taps and a positive bandwidth".into()));
        }
        Ok(Self { taps, bandwidth_hz })
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn num_taps(&self) -> usize {
        self.taps.len()
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn sample_interval_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    /// Index of the strongest tap.
    pub fn peak_tap(&self) -> usize {
        let mut best = 0;
        for (i, t) in self.taps.iter().enumerate() {
            if t.norm_sqr() > self.taps[best].norm_sqr() {
                best = i;
            }
        }
        best
    }

    /// Band-limited value of the response at a fractional tap position.
    pub fn interpolate(&self, position: f64) -> Complex64 {
        self.taps.iter().enumerate().map(|(n, t)| t * sinc(position - n as f64)).sum()
    }

    /// Discrete-time Fourier transform of the taps at each grid frequency.
    pub fn frequency_response(&self, grid: &SubcarrierGrid) -> Vec<Complex64> {
        let ts = self.sample_interval_s();
        grid.indices()
            .map(|k| {
                let step = -2.0 * PI * k as f64 * grid.spacing_hz * ts;
                self.taps
                    .iter()
                    .enumerate()
                    .map(|(n, t)| t * Complex64::from_polar(1.0, step * n as f64))
                    .sum()
            })
            .collect()
    }

    /// Adds white complex Gaussian noise. `snr_db` is the per-subcarrier SNR
    /// of the noiseless response, so each tap receives variance
    /// `energy / (snr * num_taps)`.
    pub fn with_noise<R: Rng + ?Sized>(&self, snr_db: f64, rng: &mut R) -> Self {
        let snr = 10f64.powf(snr_db / 10.0);
        let variance = self.energy() / (snr * self.taps.len() as f64);
        let taps = self.taps.iter().map(|t| t + complex_gaussian(rng, variance)).collect();
        Self { taps, bandwidth_hz: self.bandwidth_hz }
    }
}

/// CIR of a set of delayed, scaled sincs.
pub fn cir_from_amplitudes(
    alphas: &[Complex64],
    tofs_s: &[f64],
    bandwidth_hz: f64,
    num_taps: usize,
) -> Result<Cir> {
    if alphas.len() != tofs_s.len() {
        return Err(Error::InvalidInput("one delay per amplitude required".into()));
    }
    if !(bandwidth_hz > 0.0) || num_taps == 0 {
        return Err(Error::InvalidInput("positive bandwidth and tap count required".into()));
    }
    let ts = 1.0 / bandwidth_hz;
    let span = (num_taps - 1) as f64 * ts;
    for &tof_s in tofs_s {
        if !(tof_s >= 0.0) || tof_s > span * (1.0 + 1e-12) {
            return Err(Error::DelayOutOfSpan { tof_s, num_taps });
        }
    }
    let taps = (0..num_taps)
        .map(|n| {
            alphas
                .iter()
                .zip(tofs_s)
                .map(|(a, &tau)| a * sinc(n as f64 - tau / ts))
                .sum()
        })
        .collect();
    Cir::from_taps(taps, bandwidth_hz)
}

/// CIR of the beam-projected channel.
pub fn synthesize_cir(
    ps: &PathSet,
    arrays: &Endpoints,
    w_t: &WeightVector,
    w_r: &WeightVector,
    bandwidth_hz: f64,
    num_taps: usize,
) -> Result<Cir> {
    let alphas = effective_path_amplitudes(ps, arrays, w_t, w_r)?;
    cir_from_amplitudes(&alphas, &ps.tofs(), bandwidth_hz, num_taps)
}

/// Random sparse channels for tests and Monte Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomChannel {
    pub min_paths: usize,
    pub max_paths: usize,
    pub angle_limit_deg: f64,
    pub min_separation_deg: f64,
    pub rel_gain_db: (f64, f64),
    pub los_tof_ns: (f64, f64),
    pub extra_tof_ns: (f64, f64),
    pub min_tof_gap_ns: f64,
    pub carrier_hz: f64,
}

impl Default for RandomChannel {
    fn default() -> Self {
        Self {
            min_paths: 2,
            max_paths: 3,
            angle_limit_deg: 60.0,
            min_separation_deg: 15.0,
            rel_gain_db: (-16.0, -3.0),
            los_tof_ns: (10.0, 30.0),
            extra_tof_ns: (10.0, 60.0),
            min_tof_gap_ns: 10.0,
            carrier_hz: crate::array::DEFAULT_CARRIER_HZ,
        }
    }
}

impl RandomChannel {
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> PathSet {
        let count = rng.gen_range(self.min_paths..=self.max_paths);
        let aods = self.separated_angles(rng, count);
        let aoas = self.separated_angles(rng, count);
        let los_tof = rng.gen_range(self.los_tof_ns.0..=self.los_tof_ns.1);
        let mut tofs: Vec<f64> = Vec::with_capacity(count);
        while tofs.len() + 1 < count {
            let t = los_tof + rng.gen_range(self.extra_tof_ns.0..=self.extra_tof_ns.1);
            if tofs.iter().all(|&o| (o - t).abs() >= self.min_tof_gap_ns) {
                tofs.push(t);
            }
        }
        let mut paths = vec![Path::from_db(aods[0], aoas[0], 0.0, rng.gen_range(0.0..360.0), los_tof * 1e-9)];
        for i in 1..count {
            let gain_db = rng.gen_range(self.rel_gain_db.0..=self.rel_gain_db.1);
            let phase = rng.gen_range(0.0..360.0);
            paths.push(Path::from_db(aods[i], aoas[i], gain_db, phase, tofs[i - 1] * 1e-9));
        }
        PathSet::new(paths, self.carrier_hz).expect("generator respects path set invariants")
    }

    fn separated_angles<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(count);
        while out.len() < count {
            let a = rng.gen_range(-self.angle_limit_deg..=self.angle_limit_deg);
            if out.iter().all(|&o| (o - a).abs() >= self.min_separation_deg) {
                out.push(a);
            }
        }
        out
    }
}
