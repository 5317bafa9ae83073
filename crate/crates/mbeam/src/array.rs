//! Uniform linear arrays: steering vectors, pattern gain, weight
//! quantization and radiated-power accounting.
//!
//! Angles are in degrees at every public boundary, measured from broadside
//! with positive angles toward increasing element index. Element `n` of a
//! steering vector carries phase `-2 pi n (d / lambda) sin(angle)`.
//!
//! The array response to weights `w` toward `angle` is the plain
//! (unconjugated) inner product `a(angle)^T w`, so a beam built from
//! `conj(a(theta0))` peaks at `theta0`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::math::{lin_to_db, wrap_2pi};
use crate::{Error, Result};

pub const DEFAULT_CARRIER_HZ: f64 = 28e9;
pub const DEFAULT_SPACING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    pub spacing_over_lambda: f64,
    pub carrier_hz: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, spacing_over_lambda: f64, carrier_hz: f64) -> Result<Self> {
        if num_elements == 0 {
            return Err(Error::InvalidInput("array needs at least one element".into()));
        }
        if !(spacing_over_lambda > 0.0) || !spacing_over_lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "element spacing {spacing_over_lambda} must be positive"
            )));
        }
        if !(carrier_hz > 0.0) {
            return Err(Error::InvalidInput(format!("carrier {carrier_hz} Hz must be positive")));
        }
        Ok(Self { num_elements, spacing_over_lambda, carrier_hz })
    }

    /// Half-wavelength array at the default carrier.
    pub fn ula(num_elements: usize) -> Self {
        Self::new(num_elements, DEFAULT_SPACING, DEFAULT_CARRIER_HZ).expect("valid default array")
    }

    /// A single isotropic element.
    pub fn omni() -> Self {
        Self::ula(1)
    }

    pub fn wavelength_m(&self) -> f64 {
        299_792_458.0 / self.carrier_hz
    }

    /// Response `a(angle)^T w` of the array to a weight vector.
    pub fn response(&self, w: &WeightVector, angle_deg: f64) -> Result<Complex64> {
        self.check_len(w)?;
        let u = phase_step(self, angle_deg)?;
        Ok(response_at(u, &w.weights))
    }

    pub(crate) fn check_len(&self, w: &WeightVector) -> Result<()> {
        if w.len() != self.num_elements {
            return Err(Error::LengthMismatch { expected: self.num_elements, got: w.len() });
        }
        Ok(())
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::ula(8)
    }
}

pub(crate) fn check_angle(angle_deg: f64) -> Result<f64> {
    if !(-90.0..=90.0).contains(&angle_deg) {
        return Err(Error::AngleOutOfRange(angle_deg));
    }
    Ok(angle_deg.to_radians())
}

/// Per-element phase increment `2 pi (d / lambda) sin(angle)`.
fn phase_step(geom: &ArrayGeometry, angle_deg: f64) -> Result<f64> {
    Ok(2.0 * PI * geom.spacing_over_lambda * check_angle(angle_deg)?.sin())
}

fn response_at(step: f64, weights: &[Complex64]) -> Complex64 {
    weights
        .iter()
        .enumerate()
        .map(|(n, w)| Complex64::from_polar(1.0, -step * n as f64) * w)
        .sum()
}

pub fn steering_vector(geom: &ArrayGeometry, angle_deg: f64) -> Result<Vec<Complex64>> {
    let step = phase_step(geom, angle_deg)?;
    Ok((0..geom.num_elements)
        .map(|n| Complex64::from_polar(1.0, -step * n as f64))
        .collect())
}

/// Complex element weights plus the quantization they went through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<Complex64>,
    quantized: bool,
    phase_bits: Option<u32>,
    amp_range_db: Option<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<Complex64>) -> Self {
        Self { weights, quantized: false, phase_bits: None, amp_range_db: None }
    }

    /// The single-element weight `[1]` used by an omnidirectional end.
    pub fn omni() -> Self {
        Self::new(vec![Complex64::new(1.0, 0.0)])
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    pub fn phase_bits(&self) -> Option<u32> {
        self.phase_bits
    }

    pub fn amp_range_db(&self) -> Option<f64> {
        self.amp_range_db
    }

    pub fn norm_sqr(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_sqr()).sum()
    }

    /// Scales to unit norm. Fails on an all-zero vector.
    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidInput("cannot normalize a zero weight vector".into()));
        }
        for w in &mut self.weights {
            *w /= norm;
        }
        Ok(self)
    }

    /// `self^H other`.
    pub fn inner(&self, other: &WeightVector) -> Complex64 {
        self.weights.iter().zip(&other.weights).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Unit-norm beam toward `angle_deg`: `conj(a(angle)) / sqrt(N)`.
pub fn single_beam_weights(geom: &ArrayGeometry, angle_deg: f64) -> Result<WeightVector> {
    let scale = 1.0 / (geom.num_elements as f64).sqrt();
    let a = steering_vector(geom, angle_deg)?;
    Ok(WeightVector::new(a.into_iter().map(|x| x.conj() * scale).collect()))
}

/// Pattern gain `10 log10 |a(angle)^T w|^2`, floored at [`crate::DB_FLOOR`].
pub fn beam_gain_db(geom: &ArrayGeometry, w: &WeightVector, angle_deg: f64) -> Result<f64> {
    Ok(lin_to_db(geom.response(w, angle_deg)?.norm_sqr()))
}

/// Linear pattern gain `|a(angle)^T w|^2`.
pub fn beam_gain_lin(geom: &ArrayGeometry, w: &WeightVector, angle_deg: f64) -> Result<f64> {
    Ok(geom.response(w, angle_deg)?.norm_sqr())
}

/// Snaps phases to `2^phase_bits` uniform levels and clamps magnitudes to
/// `amp_range_db` below the strongest element, then renormalizes.
///
/// `amp_range_db == 0` means on/off amplitude control: elements at or above
/// half the peak magnitude are switched fully on, the rest off.
pub fn quantize(w: &WeightVector, phase_bits: u32, amp_range_db: f64) -> Result<WeightVector> {
    if phase_bits == 0 || phase_bits > 24 {
        return Err(Error::InvalidInput(format!("phase_bits {phase_bits} not in 1..=24")));
    }
    if !(amp_range_db >= 0.0) {
        return Err(Error::InvalidInput(format!("amp_range_db {amp_range_db} must be >= 0")));
    }
    let max_mag = w.weights.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if !(max_mag > 0.0) {
        return Err(Error::InvalidInput("cannot quantize a zero weight vector".into()));
    }
    let levels = (1u64 << phase_bits) as f64;
    let step = 2.0 * PI / levels;
    let min_mag = max_mag * 10f64.powf(-amp_range_db / 20.0);
    let weights = w
        .weights
        .iter()
        .map(|x| {
            let level = (wrap_2pi(x.arg()) / step).round() % levels;
            let mag = if amp_range_db == 0.0 {
                if x.norm() >= 0.5 * max_mag {
                    max_mag
                } else {
                    0.0
                }
            } else {
                x.norm().clamp(min_mag, max_mag)
            };
            Complex64::from_polar(mag, level * step)
        })
        .collect();
    let mut out = WeightVector::new(weights).normalized()?;
    out.quantized = true;
    out.phase_bits = Some(phase_bits);
    out.amp_range_db = Some(amp_range_db);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LobeEirp {
    pub angle_deg: f64,
    pub eirp_dbm: f64,
    /// EIRP relative to a single unit-norm beam at the same TRP.
    pub relative_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EirpReport {
    pub trp_dbm: f64,
    pub lobes: Vec<LobeEirp>,
}

/// EIRP toward each declared lobe angle for a unit-norm weight vector.
pub fn trp_and_eirp(
    geom: &ArrayGeometry,
    w: &WeightVector,
    lobe_angles_deg: &[f64],
    trp_dbm: f64,
) -> Result<EirpReport> {
    geom.check_len(w)?;
    let reference = lin_to_db(geom.num_elements as f64);
    let lobes = lobe_angles_deg
        .iter()
        .map(|&angle_deg| {
            let gain = beam_gain_db(geom, w, angle_deg)?;
            Ok(LobeEirp { angle_deg, eirp_dbm: trp_dbm + gain, relative_db: gain - reference })
        })
        .collect::<Result<_>>()?;
    Ok(EirpReport { trp_dbm, lobes })
}

/// Inclusive, evenly spaced angle grid in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl AngleGrid {
    pub fn new(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Self> {
        check_angle(start_deg)?;
        check_angle(stop_deg)?;
        if !(step_deg > 0.0) || stop_deg < start_deg {
            return Err(Error::InvalidInput(format!(
                "bad angle grid {start_deg}..{stop_deg} step {step_deg}"
            )));
        }
        let span = (stop_deg - start_deg) / step_deg;
        if (span - span.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "step {step_deg} does not divide {start_deg}..{stop_deg}"
            )));
        }
        Ok(Self { start_deg, stop_deg, step_deg })
    }

    pub fn len(&self) -> usize {
        ((self.stop_deg - self.start_deg) / self.step_deg).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| (self.start_deg + i as f64 * self.step_deg).min(self.stop_deg))
            .collect()
    }
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self { start_deg: -90.0, stop_deg: 90.0, step_deg: 0.1 }
    }
}

/// Gain in dB over every grid point.
pub fn pattern(geom: &ArrayGeometry, w: &WeightVector, grid: &AngleGrid) -> Result<Vec<(f64, f64)>> {
    grid.points()
        .into_iter()
        .map(|a| Ok((a, beam_gain_db(geom, w, a)?)))
        .collect()
}

/// `angle_deg,gain_db` CSV of a pattern.
pub fn pattern_csv(geom: &ArrayGeometry, w: &WeightVector, grid: &AngleGrid) -> Result<String> {
    let mut out = String::from("angle_deg,gain_db\n");
    for (a, g) in pattern(geom, w, grid)? {
        let _ = writeln!(out, "{a:.4},{g:.6}");
    }
    Ok(out)
}

/// Radiated power integrated over the visible region in `u = sin(angle)`,
/// `sum gain(angle) cos(angle) d_angle`. For half-wavelength spacing this
/// equals `2 ||w||^2` up to grid error.
pub fn integrated_power(geom: &ArrayGeometry, w: &WeightVector, grid: &AngleGrid) -> Result<f64> {
    let step = grid.step_deg.to_radians();
    grid.points().into_iter().try_fold(0.0, |acc, a| {
        Ok(acc + beam_gain_lin(geom, w, a)? * a.to_radians().cos() * step)
    })
}

/// Local maxima of a pattern above `floor_db`, as grid angles.
pub fn pattern_peaks(samples: &[(f64, f64)], floor_db: f64) -> Vec<f64> {
    samples
        .windows(3)
        .filter(|w| w[1].1 > w[0].1 && w[1].1 >= w[2].1 && w[1].1 > floor_db)
        .map(|w| w[1].0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn steering_boresight_is_all_ones() {
        let a = steering_vector(&ArrayGeometry::ula(4), 0.0).unwrap();
        for x in a {
            assert_relative_eq!(x.re, 1.0);
            assert_relative_eq!(x.im, 0.0);
        }
    }

    #[test]
    fn steering_two_elements_at_thirty() {
        let a = steering_vector(&ArrayGeometry::ula(2), 30.0).unwrap();
        assert_relative_eq!(a[1].re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(a[1].im, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_is_conjugate_symmetric() {
        let g = ArrayGeometry::ula(16);
        let p = steering_vector(&g, 37.0).unwrap();
        let m = steering_vector(&g, -37.0).unwrap();
        for (x, y) in p.iter().zip(&m) {
            assert_relative_eq!(x.re, y.re, epsilon = 1e-12);
            assert_relative_eq!(x.im, -y.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn angle_domain_is_checked() {
        assert_eq!(
            steering_vector(&ArrayGeometry::ula(4), 91.0),
            Err(Error::AngleOutOfRange(91.0))
        );
        assert!(steering_vector(&ArrayGeometry::ula(4), f64::NAN).is_err());
    }

    #[test]
    fn single_beam_boresight_weights() {
        let w = single_beam_weights(&ArrayGeometry::ula(64), 0.0).unwrap();
        for x in w.as_slice() {
            assert_relative_eq!(x.re, 0.125, epsilon = 1e-15);
        }
        assert_relative_eq!(w.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn boresight_gain_is_array_gain() {
        let g = ArrayGeometry::ula(64);
        let w = single_beam_weights(&g, 0.0).unwrap();
        assert_relative_eq!(beam_gain_db(&g, &w, 0.0).unwrap(), 18.061_799_739_838_87, epsilon = 1e-9);
        let w = single_beam_weights(&g, 23.0).unwrap();
        assert_relative_eq!(beam_gain_db(&g, &w, 23.0).unwrap(), 10.0 * 64f64.log10(), epsilon = 1e-9);
    }

    #[test]
    fn null_returns_floor() {
        let g = ArrayGeometry::ula(2);
        let w = single_beam_weights(&g, 0.0).unwrap();
        assert_eq!(beam_gain_db(&g, &w, 90.0).unwrap(), crate::DB_FLOOR);
    }

    #[test]
    fn eight_element_half_power_beamwidth() {
        let g = ArrayGeometry::ula(8);
        let w = single_beam_weights(&g, 0.0).unwrap();
        let peak = beam_gain_db(&g, &w, 0.0).unwrap();
        let mut edge = 0.0;
        while beam_gain_db(&g, &w, edge).unwrap() > peak - 3.0103 {
            edge += 0.001;
        }
        assert!((2.0 * edge - 12.0).abs() <= 1.5, "hpbw {}", 2.0 * edge);
    }

    #[test]
    fn eight_element_decay_at_four_degrees() {
        let g = ArrayGeometry::ula(8);
        let w = single_beam_weights(&g, 0.0).unwrap();
        let decay = beam_gain_db(&g, &w, 0.0).unwrap() - beam_gain_db(&g, &w, 4.0).unwrap();
        assert!((decay - 1.5).abs() <= 0.5, "decay {decay}");
    }

    #[test]
    fn quantize_is_idempotent_and_normalized() {
        let g = ArrayGeometry::ula(8);
        let w = single_beam_weights(&g, 17.0).unwrap();
        let q = quantize(&w, 3, 10.0).unwrap();
        let qq = quantize(&q, 3, 10.0).unwrap();
        assert_relative_eq!(q.norm_sqr(), 1.0, epsilon = 1e-12);
        for (a, b) in q.as_slice().iter().zip(qq.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(q.is_quantized());
        assert_eq!(q.phase_bits(), Some(3));
    }

    #[test]
    fn on_off_amplitude() {
        let w = WeightVector::new(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.4, 0.0),
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.0),
        ]);
        let q = quantize(&w, 2, 0.0).unwrap();
        let mags: Vec<f64> = q.as_slice().iter().map(|x| x.norm()).collect();
        let on = 1.0 / 2f64.sqrt();
        assert_relative_eq!(mags[0], on, epsilon = 1e-12);
        assert_relative_eq!(mags[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(mags[2], on, epsilon = 1e-12);
        assert_relative_eq!(mags[3], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn eirp_reference_is_single_beam() {
        let g = ArrayGeometry::ula(8);
        let w = single_beam_weights(&g, 10.0).unwrap();
        let r = trp_and_eirp(&g, &w, &[10.0], 30.0).unwrap();
        assert_relative_eq!(r.lobes[0].relative_db, 0.0, epsilon = 1e-9);
        assert_relative_eq!(r.lobes[0].eirp_dbm, 30.0 + 10.0 * 8f64.log10(), epsilon = 1e-9);
    }

    #[test]
    fn grid_validation() {
        assert_eq!(AngleGrid::new(-90.0, 90.0, 2.0).unwrap().len(), 91);
        assert!(AngleGrid::new(-90.0, 90.0, 7.0).is_err());
        assert_eq!(AngleGrid::default().len(), 1801);
    }

    #[test]
    fn pattern_csv_header() {
        let g = ArrayGeometry::ula(4);
        let w = single_beam_weights(&g, 0.0).unwrap();
        let csv = pattern_csv(&g, &w, &AngleGrid::new(-1.0, 1.0, 1.0).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "angle_deg,gain_db");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0.0000,6.0206"));
    }
}
