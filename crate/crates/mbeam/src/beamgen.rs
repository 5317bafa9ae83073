//! Multi-beam weight synthesis and the conjugate-channel oracle.
//!
//! A multi-beam pattern is a linear superposition of single beams,
//! `sum_b delta_b exp(-j sigma_b) w(angle_b)`, scaled back to unit norm.
//! Beam 0 is the amplitude and phase reference.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{check_angle, single_beam_weights, ArrayGeometry, WeightVector};
use crate::channel::{freq_response_with_rx, Endpoints, PathSet, SubcarrierGrid};
use crate::math::{lin_to_db, wrap_2pi};
use crate::{Error, Result};

pub const MAX_BEAMS: usize = 4;
pub const DEFAULT_MIN_POWER_FLOOR: f64 = 0.1;
const MIN_NF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lobe {
    pub angle_deg: f64,
    pub delta: f64,
    pub sigma_rad: f64,
}

impl Lobe {
    pub fn new(angle_deg: f64, delta: f64, sigma_rad: f64) -> Self {
        Self { angle_deg, delta, sigma_rad: wrap_2pi(sigma_rad) }
    }

    /// Complex coefficient `delta exp(-j sigma)` applied to this lobe.
    pub fn coefficient(&self) -> Complex64 {
        Complex64::from_polar(self.delta, -self.sigma_rad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiBeamSpec {
    beams: Vec<Lobe>,
}

impl MultiBeamSpec {
    /// Validates 1 to 4 lobes with beam 0 at unit amplitude and zero phase.
    pub fn new(beams: Vec<Lobe>) -> Result<Self> {
        if beams.is_empty() || beams.len() > MAX_BEAMS {
            return Err(Error::InvalidInput(format!("beam count {} not in 1..={MAX_BEAMS}", beams.len())));
        }
        for b in &beams {
            check_angle(b.angle_deg)?;
            if !(b.delta >= 0.0) || !b.delta.is_finite() || !b.sigma_rad.is_finite() {
                return Err(Error::InvalidInput(format!("bad lobe {b:?}")));
            }
        }
        if (beams[0].delta - 1.0).abs() > 1e-12 || beams[0].sigma_rad.abs() > 1e-12 {
            return Err(Error::InvalidInput("beam 0 must have delta 1 and sigma 0".into()));
        }
        let beams = beams.into_iter().map(|b| Lobe::new(b.angle_deg, b.delta, b.sigma_rad)).collect();
        Ok(Self { beams })
    }

    pub fn single(angle_deg: f64) -> Result<Self> {
        Self::new(vec![Lobe::new(angle_deg, 1.0, 0.0)])
    }

    /// Builds a spec from per-beam amplitudes in dB and phases in degrees.
    /// The first entry is the reference and its amplitude and phase are ignored.
    pub fn from_db(angles_deg: &[f64], delta_db: &[f64], sigma_deg: &[f64]) -> Result<Self> {
        if angles_deg.len() != delta_db.len() || angles_deg.len() != sigma_deg.len() {
            return Err(Error::InvalidInput("angle, amplitude and phase lists differ in length".into()));
        }
        let beams = angles_deg
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                if i == 0 {
                    Lobe::new(a, 1.0, 0.0)
                } else {
                    Lobe::new(a, 10f64.powf(delta_db[i] / 20.0), sigma_deg[i].to_radians())
                }
            })
            .collect();
        Self::new(beams)
    }

    /// Lobes matched to per-beam channel gains: `delta_b = |g_b / g_0|`,
    /// `sigma_b = arg(g_b / g_0)`.
    pub fn matched(angles_deg: &[f64], gains: &[Complex64]) -> Result<Self> {
        if angles_deg.len() != gains.len() || gains.is_empty() {
            return Err(Error::InvalidInput("one gain per beam angle required".into()));
        }
        if gains[0].norm() == 0.0 {
            return Err(Error::InvalidInput("reference beam gain is zero".into()));
        }
        let beams = angles_deg
            .iter()
            .zip(gains)
            .enumerate()
            .map(|(i, (&a, g))| {
                if i == 0 {
                    Lobe::new(a, 1.0, 0.0)
                } else {
                    let r = g / gains[0];
                    Lobe::new(a, r.norm(), r.arg())
                }
            })
            .collect();
        Self::new(beams)
    }

    pub fn beams(&self) -> &[Lobe] {
        &self.beams
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.beams.iter().map(|b| b.angle_deg).collect()
    }

    /// Copy with lobe `b` replaced. Beam 0 cannot be edited this way.
    pub fn with_lobe(&self, b: usize, delta: f64, sigma_rad: f64) -> Result<Self> {
        if b == 0 || b >= self.beams.len() {
            return Err(Error::InvalidInput(format!("cannot edit lobe {b}")));
        }
        let mut beams = self.beams.clone();
        beams[b] = Lobe::new(beams[b].angle_deg, delta, sigma_rad);
        Self::new(beams)
    }

    /// Copy with all steering angles replaced.
    pub fn with_angles(&self, angles_deg: &[f64]) -> Result<Self> {
        if angles_deg.len() != self.beams.len() {
            return Err(Error::InvalidInput("one angle per beam required".into()));
        }
        let beams = self
            .beams
            .iter()
            .zip(angles_deg)
            .map(|(b, &a)| Lobe { angle_deg: a, ..*b })
            .collect();
        Self::new(beams)
    }

    /// Fraction of radiated power each lobe would carry if the lobes were
    /// orthogonal.
    pub fn power_shares(&self) -> Vec<f64> {
        let total: f64 = self.beams.iter().map(|b| b.delta * b.delta).sum();
        self.beams.iter().map(|b| b.delta * b.delta / total).collect()
    }

    pub fn to_toml(&self) -> String {
        let file = SpecFile {
            beams: self
                .beams
                .iter()
                .map(|b| LobeRecord {
                    angle_deg: b.angle_deg,
                    delta_db: 20.0 * b.delta.log10(),
                    sigma_deg: b.sigma_rad.to_degrees(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SpecFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let beams = file
            .beams
            .iter()
            .map(|r| Lobe::new(r.angle_deg, 10f64.powf(r.delta_db / 20.0), r.sigma_deg.to_radians()))
            .collect();
        Self::new(beams)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SpecFile {
    beams: Vec<LobeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LobeRecord {
    angle_deg: f64,
    delta_db: f64,
    sigma_deg: f64,
}

/// Unnormalized sum `sum_b c_b w(angle_b)`.
pub fn superpose(geom: &ArrayGeometry, lobes: &[(f64, Complex64)]) -> Result<WeightVector> {
    let mut acc = vec![Complex64::new(0.0, 0.0); geom.num_elements];
    for &(angle, c) in lobes {
        for (a, w) in acc.iter_mut().zip(single_beam_weights(geom, angle)?.as_slice()) {
            *a += c * w;
        }
    }
    Ok(WeightVector::new(acc))
}

fn lobes_of(spec: &MultiBeamSpec) -> Vec<(f64, Complex64)> {
    spec.beams.iter().map(|b| (b.angle_deg, b.coefficient())).collect()
}

/// `||sum_b delta_b exp(-j sigma_b) w(angle_b)||^2`.
pub fn normalization_factor(geom: &ArrayGeometry, spec: &MultiBeamSpec) -> Result<f64> {
    Ok(superpose(geom, &lobes_of(spec))?.norm_sqr())
}

/// Unit-norm multi-beam weights.
pub fn multi_beam_weights(geom: &ArrayGeometry, spec: &MultiBeamSpec) -> Result<WeightVector> {
    let raw = superpose(geom, &lobes_of(spec))?;
    let nf = raw.norm_sqr();
    if nf < MIN_NF {
        return Err(Error::DegenerateNormalization(nf));
    }
    raw.normalized()
}

/// Cross-term ratio `delta Re(exp(-j sigma) w1^H w2) / (1 + delta^2)` of a
/// two-beam spec.
pub fn orthonormality_factor(geom: &ArrayGeometry, spec: &MultiBeamSpec) -> Result<f64> {
    if spec.len() != 2 {
        return Err(Error::InvalidInput("orthonormality factor needs exactly two beams".into()));
    }
    let b = &spec.beams[1];
    let w1 = single_beam_weights(geom, spec.beams[0].angle_deg)?;
    let w2 = single_beam_weights(geom, b.angle_deg)?;
    let cross = Complex64::from_polar(1.0, -b.sigma_rad) * w1.inner(&w2);
    Ok(b.delta * cross.re / (1.0 + b.delta * b.delta))
}

/// Oracle transmit weights for a single-element receiver.
pub fn oracle_weights(ps: &PathSet, geom: &ArrayGeometry, grid: &SubcarrierGrid) -> Result<WeightVector> {
    oracle_weights_for(ps, &Endpoints::tx_only(*geom), &WeightVector::omni(), grid)
}

/// Transmit weights maximizing the grid-averaged SNR for fixed receive
/// weights: the principal eigenvector of `mean_k conj(h_k) h_k^T`. On a
/// channel whose paths share one delay this is `conj(h) / ||h||`.
pub fn oracle_weights_for(
    ps: &PathSet,
    arrays: &Endpoints,
    w_r: &WeightVector,
    grid: &SubcarrierGrid,
) -> Result<WeightVector> {
    let n = arrays.tx.num_elements;
    let t0 = ps.paths()[0].tof_s;
    let flat = grid.count == 1 || ps.paths().iter().all(|p| p.tof_s == t0);
    if flat {
        let h = freq_response_with_rx(ps, arrays, w_r, 0, grid.spacing_hz)?;
        return conj_normalized(h);
    }
    let mut cov = DMatrix::<Complex64>::zeros(n, n);
    for k in grid.indices() {
        let h = freq_response_with_rx(ps, arrays, w_r, k, grid.spacing_hz)?;
        for i in 0..n {
            let hi = h[i].conj();
            for j in 0..n {
                cov[(i, j)] += hi * h[j];
            }
        }
    }
    let trace: f64 = (0..n).map(|i| cov[(i, i)].re).sum();
    if !(trace > 0.0) {
        return Err(Error::InvalidInput("zero channel".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let v: Vec<Complex64> = eig.eigenvectors.column(top).iter().copied().collect();
    // Fix the global phase so element 0 is real and non-negative.
    let rot = if v[0].norm() > 0.0 { v[0].conj() / v[0].norm() } else { Complex64::new(1.0, 0.0) };
    WeightVector::new(v.into_iter().map(|x| x * rot).collect()).normalized()
}

fn conj_normalized(h: Vec<Complex64>) -> Result<WeightVector> {
    if h.iter().all(|x| x.norm_sqr() == 0.0) {
        return Err(Error::InvalidInput("zero channel".into()));
    }
    WeightVector::new(h.into_iter().map(|x| x.conj()).collect()).normalized()
}

/// Raises every lobe's power share to at least `min_floor`, taking the
/// excess proportionally from the lobes above the floor.
pub fn reliability_first_rebalance(spec: &MultiBeamSpec, min_floor: f64) -> Result<MultiBeamSpec> {
    let k = spec.len();
    if k < 2 {
        return Err(Error::InvalidInput("rebalancing needs at least two beams".into()));
    }
    if !(min_floor >= 0.0) || k as f64 * min_floor > 1.0 + 1e-12 {
        return Err(Error::Infeasible(format!("{k} beams cannot each hold a {min_floor} share")));
    }
    let mut shares = spec.power_shares();
    if shares.iter().all(|&s| s >= min_floor - 1e-12) {
        return Ok(spec.clone());
    }
    let mut pinned = vec![false; k];
    loop {
        for (s, p) in shares.iter_mut().zip(pinned.iter_mut()) {
            if *s < min_floor {
                *s = min_floor;
                *p = true;
            }
        }
        let pinned_total = pinned.iter().filter(|&&p| p).count() as f64 * min_floor;
        let free_total: f64 = shares.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(s, _)| s).sum();
        let scale = (1.0 - pinned_total) / free_total;
        for (s, p) in shares.iter_mut().zip(&pinned) {
            if !p {
                *s *= scale;
            }
        }
        if shares.iter().zip(&pinned).all(|(s, p)| *p || *s >= min_floor - 1e-12) {
            break;
        }
    }
    let beams = spec
        .beams
        .iter()
        .zip(&shares)
        .map(|(b, s)| Lobe::new(b.angle_deg, (s / shares[0]).sqrt(), b.sigma_rad))
        .collect();
    MultiBeamSpec::new(beams)
}

/// Gain of `10 log10` form for reporting amplitude ratios.
pub fn delta_db(delta: f64) -> f64 {
    lin_to_db(delta * delta)
}
