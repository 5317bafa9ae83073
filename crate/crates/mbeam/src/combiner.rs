//! Constructive-combining probe protocol.
//!
//! For every non-reference beam `b` two probes are sent that differ only in
//! the phase of lobe `b` (0 and pi). After undoing each probe's power
//! normalization, the half-sum and half-difference of the pair separate the
//! contribution of beam `b` from the rest. Once every beam's channel is
//! known, the per-lobe amplitude and phase follow from a small eigenproblem.
//!
//! Two closed-form single-pair estimators are exposed:
//!
//! * [`Estimator::LeastSquares`]: `delta exp(j sigma) = -h_b^H h_ref / h_b^H h_b`,
//!   the projection formula taken literally. It returns the phase that
//!   *cancels* beam `b` against the reference, so it sits pi away from the
//!   combining optimum.
//! * [`Estimator::Normalized`]: maximizer of
//!   `||h_ref + delta exp(-j sigma) h_b||^2 / (1 + delta^2)`, the dominant
//!   eigenvector of the 2x2 Gram matrix of `[h_ref, h_b]`. This is what the
//!   simulator uses.
//!
//! With `h_b = c h_ref` and `|c| = 1` the normalized estimator returns
//! `sigma = arg(c)` and the least-squares one `sigma = pi - arg(c)`; both
//! give `delta = 1`.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::{single_beam_weights, ArrayGeometry, WeightVector};
use crate::beamgen::{multi_beam_weights, normalization_factor, Lobe, MultiBeamSpec};
use crate::channel::{complex_gaussian, effective_freq_response, mean_grid_power, Endpoints, PathSet, SubcarrierGrid};
use crate::ledger::{ProbeKind, ProbeLedger};
use crate::math::wrap_2pi;
use crate::{Error, Result};

const NEGLIGIBLE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe_id: usize,
    pub csi: Vec<Complex64>,
    pub spec_used: MultiBeamSpec,
    pub timestamp_slot: u64,
}

/// The `2 (K - 1)` probe patterns for a base spec: for each beam `b >= 1`,
/// one pattern with `sigma_b = 0` and one with `sigma_b = pi`, every other
/// lobe at phase 0 and base amplitude.
pub fn gen_probe_specs(base: &MultiBeamSpec) -> Result<Vec<MultiBeamSpec>> {
    let zeroed: Vec<Lobe> = base.beams().iter().map(|b| Lobe::new(b.angle_deg, b.delta, 0.0)).collect();
    let mut out = Vec::with_capacity(2 * base.len().saturating_sub(1));
    for b in 1..base.len() {
        for phase in [0.0, std::f64::consts::PI] {
            let mut lobes = zeroed.clone();
            lobes[b] = Lobe::new(lobes[b].angle_deg, lobes[b].delta, phase);
            out.push(MultiBeamSpec::new(lobes)?);
        }
    }
    Ok(out)
}

/// Which beam a probe pair isolates, checking that the pair is well formed.
fn probed_beam(first: &MultiBeamSpec, second: &MultiBeamSpec) -> Result<usize> {
    let bad = || Error::InvalidInput("probe specs are not a matched pair".into());
    if first.len() != second.len() || first.len() < 2 {
        return Err(bad());
    }
    let mut probed = None;
    for (i, (a, b)) in first.beams().iter().zip(second.beams()).enumerate() {
        if a.angle_deg != b.angle_deg || a.delta != b.delta {
            return Err(bad());
        }
        let diff = wrap_2pi(b.sigma_rad - a.sigma_rad);
        if (diff - std::f64::consts::PI).abs() < 1e-9 {
            if probed.is_some() {
                return Err(bad());
            }
            probed = Some(i);
        } else if diff.abs() > 1e-9 && (diff - 2.0 * std::f64::consts::PI).abs() > 1e-9 {
            return Err(bad());
        }
    }
    match probed {
        Some(i) if i > 0 && first.beams()[i].delta > 0.0 => Ok(i),
        _ => Err(bad()),
    }
}

/// Splits a probe pair into the channel of everything except beam `b` and
/// the unit-amplitude channel of beam `b`. Each probe is first scaled by
/// the square root of its normalization factor.
pub fn recover_per_beam_csi(
    geom: &ArrayGeometry,
    first: &ProbeReport,
    second: &ProbeReport,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let b = probed_beam(&first.spec_used, &second.spec_used)?;
    if first.csi.len() != second.csi.len() {
        return Err(Error::InvalidInput("probe CSI lengths differ".into()));
    }
    let s1 = normalization_factor(geom, &first.spec_used)?.sqrt();
    let s2 = normalization_factor(geom, &second.spec_used)?.sqrt();
    let lobe = first.spec_used.beams()[b];
    let coeff = Complex64::from_polar(lobe.delta, -lobe.sigma_rad);
    let mut rest = Vec::with_capacity(first.csi.len());
    let mut beam = Vec::with_capacity(first.csi.len());
    for (p1, p2) in first.csi.iter().zip(&second.csi) {
        let (q1, q2) = (p1 * s1, p2 * s2);
        rest.push((q1 + q2) * 0.5);
        beam.push((q1 - q2) * 0.5 / coeff);
    }
    Ok((rest, beam))
}

/// Unit-amplitude channel of every beam, reference first, from a full
/// probe round produced by [`gen_probe_specs`].
pub fn recover_all_beams(geom: &ArrayGeometry, reports: &[ProbeReport]) -> Result<Vec<Vec<Complex64>>> {
    if reports.is_empty() || !reports.len().is_multiple_of(2) {
        return Err(Error::InvalidInput("probe reports must come in pairs".into()));
    }
    let base = &reports[0].spec_used;
    let k = base.len();
    if reports.len() != 2 * (k - 1) {
        return Err(Error::InvalidInput(format!("{k} beams need {} probes", 2 * (k - 1))));
    }
    let mut beams = vec![Vec::new(); k];
    let mut rests = Vec::with_capacity(k - 1);
    for pair in reports.chunks(2) {
        let b = probed_beam(&pair[0].spec_used, &pair[1].spec_used)?;
        let (rest, hb) = recover_per_beam_csi(geom, &pair[0], &pair[1])?;
        beams[b] = hb;
        rests.push((b, rest));
    }
    // Reference channel from the first pair: remove the other non-reference beams.
    let (b0, rest) = &rests[0];
    let mut h_ref = rest.clone();
    for (o, lobe) in base.beams().iter().enumerate().skip(1) {
        if o == *b0 {
            continue;
        }
        let c = Complex64::from_polar(lobe.delta, 0.0);
        for (r, h) in h_ref.iter_mut().zip(&beams[o]) {
            *r -= c * h;
        }
    }
    beams[0] = h_ref;
    Ok(beams)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    LeastSquares,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombiningEstimate {
    pub delta: f64,
    pub sigma_rad: f64,
    /// Beam channel too weak to estimate; `delta` is forced to zero.
    pub negligible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombiningEstimates {
    pub least_squares: CombiningEstimate,
    pub normalized: CombiningEstimate,
}

impl CombiningEstimates {
    pub fn get(&self, which: Estimator) -> CombiningEstimate {
        match which {
            Estimator::LeastSquares => self.least_squares,
            Estimator::Normalized => self.normalized,
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Both single-pair estimators for one non-reference beam.
pub fn optimize_combining(h_ref: &[Complex64], h_b: &[Complex64]) -> Result<CombiningEstimates> {
    if h_ref.len() != h_b.len() || h_ref.is_empty() {
        return Err(Error::InvalidInput("channel vectors differ in length".into()));
    }
    let e_ref = dot(h_ref, h_ref).re;
    let e_b = dot(h_b, h_b).re;
    if e_b.sqrt() <= NEGLIGIBLE * e_ref.sqrt() || e_b == 0.0 {
        let off = CombiningEstimate { delta: 0.0, sigma_rad: 0.0, negligible: true };
        return Ok(CombiningEstimates { least_squares: off, normalized: off });
    }
    let ls = -dot(h_b, h_ref) / e_b;
    let least_squares = CombiningEstimate { delta: ls.norm(), sigma_rad: wrap_2pi(ls.arg()), negligible: false };
    let gram = gram_matrix(&[h_ref.to_vec(), h_b.to_vec()]);
    let x = principal_direction(&gram, None)?;
    let normalized = estimate_from_direction(x[1] / x[0]);
    Ok(CombiningEstimates { least_squares, normalized })
}

fn estimate_from_direction(ratio: Complex64) -> CombiningEstimate {
    CombiningEstimate { delta: ratio.norm(), sigma_rad: wrap_2pi(-ratio.arg()), negligible: false }
}

/// `G_ij = mean_k conj(H_i(k)) H_j(k)`.
pub fn gram_matrix(channels: &[Vec<Complex64>]) -> DMatrix<Complex64> {
    let k = channels.len();
    let len = channels.first().map_or(1, |c| c.len().max(1)) as f64;
    DMatrix::from_fn(k, k, |i, j| dot(&channels[i], &channels[j]) / len)
}

/// `W_ij = w_i^H w_j` for the single-beam weights of each lobe.
pub fn weight_gram(geom: &ArrayGeometry, angles_deg: &[f64]) -> Result<DMatrix<Complex64>> {
    let ws = angles_deg
        .iter()
        .map(|&a| single_beam_weights(geom, a))
        .collect::<Result<Vec<WeightVector>>>()?;
    Ok(DMatrix::from_fn(ws.len(), ws.len(), |i, j| ws[i].inner(&ws[j])))
}

/// Maximizer of `x^H G x / x^H W x` (`W = I` when absent).
fn principal_direction(g: &DMatrix<Complex64>, w: Option<&DMatrix<Complex64>>) -> Result<Vec<Complex64>> {
    let n = g.nrows();
    let (m, back) = match w {
        None => (g.clone(), None),
        Some(w) => {
            let chol = Cholesky::new(w.clone()).ok_or(Error::Singular)?;
            let l = chol.l();
            let l_inv = l.clone().try_inverse().ok_or(Error::Singular)?;
            let m = &l_inv * g * l_inv.adjoint();
            (m, Some(l.adjoint()))
        }
    };
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.imax();
    let y = eig.eigenvectors.column(top).into_owned();
    let x = match back {
        None => y,
        Some(lh) => lh.solve_upper_triangular(&y).ok_or(Error::Singular)?,
    };
    let x: Vec<Complex64> = (0..n).map(|i| x[i]).collect();
    let peak = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if x[0].norm() < 1e-6 * peak {
        return Err(Error::Infeasible("reference beam carries no power".into()));
    }
    Ok(x)
}

/// Per-lobe amplitude and phase maximizing the grid-averaged SNR for given
/// per-beam channels. Passing the array geometry accounts for overlap
/// between lobes in the power normalization.
pub fn optimize_beams(
    channels: &[Vec<Complex64>],
    geom_and_angles: Option<(&ArrayGeometry, &[f64])>,
) -> Result<Vec<CombiningEstimate>> {
    if channels.len() < 2 {
        return Err(Error::InvalidInput("combining needs at least two beams".into()));
    }
    let e_ref = dot(&channels[0], &channels[0]).re.sqrt();
    let active: Vec<usize> = (0..channels.len())
        .filter(|&i| i == 0 || dot(&channels[i], &channels[i]).re.sqrt() > NEGLIGIBLE * e_ref)
        .collect();
    let sub: Vec<Vec<Complex64>> = active.iter().map(|&i| channels[i].clone()).collect();
    let g = gram_matrix(&sub);
    let w = match geom_and_angles {
        Some((geom, angles)) => {
            let chosen: Vec<f64> = active.iter().map(|&i| angles[i]).collect();
            Some(weight_gram(geom, &chosen)?)
        }
        None => None,
    };
    let mut out = vec![CombiningEstimate { delta: 0.0, sigma_rad: 0.0, negligible: true }; channels.len()];
    out[0] = CombiningEstimate { delta: 1.0, sigma_rad: 0.0, negligible: false };
    if active.len() == 1 {
        return Ok(out);
    }
    let x = principal_direction(&g, w.as_ref())?;
    for (slot, &i) in active.iter().enumerate().skip(1) {
        out[i] = estimate_from_direction(x[slot] / x[0]);
    }
    Ok(out)
}

/// Applies per-beam estimates (one per non-reference beam) and records the
/// probe round that produced them.
pub fn refine_multibeam(
    base: &MultiBeamSpec,
    estimates: &[CombiningEstimate],
    ledger: &mut ProbeLedger,
    slot: u64,
) -> Result<MultiBeamSpec> {
    if estimates.len() + 1 != base.len() {
        return Err(Error::InvalidInput(format!(
            "{} beams need {} estimates",
            base.len(),
            base.len() - 1
        )));
    }
    let mut lobes = base.beams().to_vec();
    for (lobe, est) in lobes.iter_mut().skip(1).zip(estimates) {
        *lobe = Lobe::new(lobe.angle_deg, est.delta, est.sigma_rad);
    }
    for b in 1..base.len() {
        ledger.record(slot, ProbeKind::CsiRs, b);
        ledger.record(slot + 1, ProbeKind::CsiRs, b);
    }
    MultiBeamSpec::new(lobes)
}

/// Link parameters shared by the probe simulation helpers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeLink {
    pub tx_power: f64,
    pub noise_power: f64,
}

impl Default for ProbeLink {
    fn default() -> Self {
        Self { tx_power: 1.0, noise_power: 1.0 }
    }
}

/// Simulates one probe: the per-subcarrier channel under the probe pattern,
/// in units where the noise has unit variance. With an RNG, sampled noise
/// is added.
#[allow(clippy::too_many_arguments)]
pub fn measure_probe<R: Rng + ?Sized>(
    ps: &PathSet,
    arrays: &Endpoints,
    spec: &MultiBeamSpec,
    w_r: &WeightVector,
    link: &ProbeLink,
    grid: &SubcarrierGrid,
    probe_id: usize,
    slot: u64,
    rng: Option<&mut R>,
) -> Result<ProbeReport> {
    let w_t = multi_beam_weights(&arrays.tx, spec)?;
    let scale = (link.tx_power / link.noise_power).sqrt();
    let mut csi: Vec<Complex64> = effective_freq_response(ps, arrays, &w_t, w_r, grid)?
        .into_iter()
        .map(|h| h * scale)
        .collect();
    if let Some(rng) = rng {
        for c in &mut csi {
            *c += complex_gaussian(rng, 1.0);
        }
    }
    Ok(ProbeReport { probe_id, csi, spec_used: spec.clone(), timestamp_slot: slot })
}

/// Runs a full probe round for `base`, logging each probe, and returns the
/// reports in [`gen_probe_specs`] order.
#[allow(clippy::too_many_arguments)]
pub fn probe_round<R: Rng + ?Sized>(
    ps: &PathSet,
    arrays: &Endpoints,
    base: &MultiBeamSpec,
    w_r: &WeightVector,
    link: &ProbeLink,
    grid: &SubcarrierGrid,
    ledger: &mut ProbeLedger,
    slot: u64,
    mut rng: Option<&mut R>,
) -> Result<Vec<ProbeReport>> {
    let specs = gen_probe_specs(base)?;
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let beam = 1 + i / 2;
            ledger.record(slot + i as u64, ProbeKind::CsiRs, beam);
            measure_probe(ps, arrays, spec, w_r, link, grid, i, slot + i as u64, rng.as_deref_mut())
        })
        .collect()
}

/// Brute-force search over a `(delta_db, sigma)` grid for a two-beam spec;
/// returns `(delta, sigma_rad, snr_linear)` of the best point.
pub fn scan_two_beam(
    ps: &PathSet,
    arrays: &Endpoints,
    base: &MultiBeamSpec,
    w_r: &WeightVector,
    grid: &SubcarrierGrid,
    delta_db: &[f64],
    sigma_rad: &[f64],
) -> Result<(f64, f64, f64)> {
    if base.len() != 2 {
        return Err(Error::InvalidInput("scan expects a two-beam spec".into()));
    }
    let tofs = ps.tofs();
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for &d in delta_db {
        let delta = 10f64.powf(d / 20.0);
        for &s in sigma_rad {
            let spec = base.with_lobe(1, delta, s)?;
            let w = match multi_beam_weights(&arrays.tx, &spec) {
                Ok(w) => w,
                Err(Error::DegenerateNormalization(_)) => continue,
                Err(e) => return Err(e),
            };
            let alphas = crate::channel::effective_path_amplitudes(ps, arrays, &w, w_r)?;
            let snr = mean_grid_power(&alphas, &tofs, grid);
            if snr > best.2 {
                best = (delta, wrap_2pi(s), snr);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Path;
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn probe_specs_shape() {
        let k2 = MultiBeamSpec::from_db(&[0.0, 30.0], &[0.0, -3.0], &[0.0, 50.0]).unwrap();
        let p = gen_probe_specs(&k2).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].beams()[1].sigma_rad, 0.0);
        assert_relative_eq!(p[1].beams()[1].sigma_rad, PI);
        assert_relative_eq!(p[1].beams()[1].delta, k2.beams()[1].delta);
        let k3 = MultiBeamSpec::from_db(&[0.0, 30.0, -30.0], &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(gen_probe_specs(&k3).unwrap().len(), 4);
        assert!(gen_probe_specs(&MultiBeamSpec::single(0.0).unwrap()).unwrap().is_empty());
    }

    fn pair(h1: &[Complex64], h2: &[Complex64]) -> (ProbeReport, ProbeReport) {
        let base = MultiBeamSpec::from_db(&[0.0, 30.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let specs = gen_probe_specs(&base).unwrap();
        // Orthogonal lobes on an 8-element array: NF = 2 for both probes.
        let s = 1.0 / 2f64.sqrt();
        let p1 = h1.iter().zip(h2).map(|(a, b)| (a + b) * s).collect();
        let p2 = h1.iter().zip(h2).map(|(a, b)| (a - b) * s).collect();
        (
            ProbeReport { probe_id: 0, csi: p1, spec_used: specs[0].clone(), timestamp_slot: 0 },
            ProbeReport { probe_id: 1, csi: p2, spec_used: specs[1].clone(), timestamp_slot: 1 },
        )
    }

    #[test]
    fn exact_recovery_and_blocked_beam() {
        let g = ArrayGeometry::ula(8);
        let h1 = vec![c(1.0, 0.5), c(-0.2, 0.1)];
        let h2 = vec![c(0.3, -0.7), c(0.0, 2.0)];
        let (a, b) = pair(&h1, &h2);
        let (r1, r2) = recover_per_beam_csi(&g, &a, &b).unwrap();
        for i in 0..2 {
            assert!((r1[i] - h1[i]).norm() < 1e-12);
            assert!((r2[i] - h2[i]).norm() < 1e-12);
        }
        let (a, b) = pair(&h1, &[c(0.0, 0.0); 2]);
        let (_, r2) = recover_per_beam_csi(&g, &a, &b).unwrap();
        assert!(r2.iter().all(|x| x.norm() < 1e-12));
        assert!(recover_per_beam_csi(&g, &a, &a).is_err());
    }

    #[test]
    fn matched_phase_example() {
        let est = optimize_combining(&[c(1.0, 0.0)], &[Complex64::from_polar(1.0, PI / 4.0)]).unwrap();
        assert_relative_eq!(est.normalized.delta, 1.0, epsilon = 1e-12);
        assert_relative_eq!(est.normalized.sigma_rad, PI / 4.0, epsilon = 1e-12);
        assert_relative_eq!(est.least_squares.delta, 1.0, epsilon = 1e-12);
        assert_relative_eq!(est.least_squares.sigma_rad, 3.0 * PI / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn negligible_beam() {
        let est = optimize_combining(&[c(1.0, 0.0)], &[c(1e-12, 0.0)]).unwrap();
        assert!(est.normalized.negligible);
        assert_eq!(est.normalized.delta, 0.0);
    }

    #[test]
    fn refinement_fixed_point_and_probe_log() {
        let base = MultiBeamSpec::from_db(&[0.0, 30.0, -30.0], &[0.0, -3.0, -6.0], &[0.0, 20.0, 100.0]).unwrap();
        let est: Vec<CombiningEstimate> = base.beams()[1..]
            .iter()
            .map(|l| CombiningEstimate { delta: l.delta, sigma_rad: l.sigma_rad, negligible: false })
            .collect();
        let mut ledger = ProbeLedger::default();
        let out = refine_multibeam(&base, &est, &mut ledger, 0).unwrap();
        assert_eq!(out, base);
        assert_eq!(ledger.count(ProbeKind::CsiRs), 4);
    }

    #[test]
    fn three_beam_round_recovers_each_beam() {
        let g = ArrayGeometry::ula(8);
        let arrays = Endpoints::tx_only(g);
        let ps = PathSet::new(
            vec![
                Path::new(0.0, 0.0, c(1.0, 0.0), 10e-9),
                Path::from_db(-30.0, 0.0, -4.0, 80.0, 30e-9),
                Path::from_db(20.0, 0.0, -9.0, 200.0, 45e-9),
            ],
            28e9,
        )
        .unwrap();
        let base = MultiBeamSpec::from_db(&[0.0, -30.0, 20.0], &[0.0; 3], &[0.0; 3]).unwrap();
        let grid = SubcarrierGrid::default();
        let mut ledger = ProbeLedger::default();
        let reports = probe_round::<ChaCha8Rng>(
            &ps, &arrays, &base, &WeightVector::omni(), &ProbeLink::default(), &grid, &mut ledger, 0, None,
        )
        .unwrap();
        let beams = recover_all_beams(&g, &reports).unwrap();
        for (b, &angle) in [0.0, -30.0, 20.0].iter().enumerate() {
            let w = single_beam_weights(&g, angle).unwrap();
            let truth = effective_freq_response(&ps, &arrays, &w, &WeightVector::omni(), &grid).unwrap();
            for (x, y) in beams[b].iter().zip(&truth) {
                assert!((x - y).norm() < 1e-9, "beam {b}");
            }
        }
        assert_eq!(ledger.len(), 4);
    }
}
