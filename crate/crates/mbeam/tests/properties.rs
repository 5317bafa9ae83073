use std::f64::consts::PI;

use mbeam::array::{beam_gain_lin, integrated_power, quantize, single_beam_weights, AngleGrid, ArrayGeometry, WeightVector};
use mbeam::beamgen::{multi_beam_weights, oracle_weights, superpose, Lobe, MultiBeamSpec};
use mbeam::channel::{
    cir_from_amplitudes, effective_freq_response, received_snr, received_snr_db, Cir, Endpoints, NoiseSpec, Path,
    PathSet, RandomChannel, SubcarrierGrid,
};
use mbeam::combiner::{optimize_beams, optimize_combining};
use mbeam::exec::Execution;
use mbeam::ledger::{ProbeLedger, SsbAccounting};
use mbeam::linksim::avg_throughput_blockage;
use mbeam::superres::{build_dictionary, estimate_amplitudes, jitter_search, solve_amplitudes, JitterGrid, SincDictionary, SuperresConfig};
use mbeam::tracker::reallocate_on_blockage;
use mbeam::trainer::{associate_paths, exhaustive_scan, extract_paths, ScanSetup, Side, TimedPeak};
use mbeam::{lin_to_db, Complex64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BW: f64 = 400e6;

fn random_channel(seed: u64) -> PathSet {
    RandomChannel::default().generate(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn rotated(w: &WeightVector, phase: f64) -> WeightVector {
    WeightVector::new(w.as_slice().iter().map(|x| x * Complex64::from_polar(1.0, phase)).collect())
}

/// Two or three lobes at least `gap` degrees apart, reference first.
fn lobes(gap: f64) -> impl Strategy<Value = Vec<Lobe>> {
    (2usize..=3, -70.0..-30.0f64, prop::collection::vec((0.1..1.0f64, 0.0..2.0 * PI), 2)).prop_map(
        move |(k, start, extra)| {
            let mut out = vec![Lobe::new(start, 1.0, 0.0)];
            for i in 1..k {
                let (d, s) = extra[i - 1];
                out.push(Lobe::new(start + gap * i as f64, d, s));
            }
            out
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_beam_weights_have_unit_norm(n in 1usize..=1024, angle in -90.0..=90.0f64) {
        let w = single_beam_weights(&ArrayGeometry::ula(n), angle).unwrap();
        prop_assert!((w.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gain_ignores_global_phase(n in 2usize..64, steer in -90.0..90.0f64, look in -90.0..90.0f64, phase in 0.0..2.0 * PI) {
        let geom = ArrayGeometry::ula(n);
        let w = single_beam_weights(&geom, steer).unwrap();
        let g = beam_gain_lin(&geom, &w, look).unwrap();
        let g_rot = beam_gain_lin(&geom, &rotated(&w, phase), look).unwrap();
        prop_assert!((g - g_rot).abs() <= 1e-9 * g.max(1e-12));
    }

    #[test]
    fn boresight_pattern_is_symmetric(n in 1usize..128, theta in 0.0..90.0f64) {
        let geom = ArrayGeometry::ula(n);
        let w = single_beam_weights(&geom, 0.0).unwrap();
        let (plus, minus) = (beam_gain_lin(&geom, &w, theta).unwrap(), beam_gain_lin(&geom, &w, -theta).unwrap());
        prop_assert!((plus - minus).abs() <= 1e-9 * plus.max(1e-12));
    }

    #[test]
    fn radiated_power_does_not_depend_on_beam_shape(lobes in lobes(25.0)) {
        let geom = ArrayGeometry::ula(8);
        let grid = AngleGrid::new(-90.0, 90.0, 0.1).unwrap();
        let single = integrated_power(&geom, &single_beam_weights(&geom, lobes[0].angle_deg).unwrap(), &grid).unwrap();
        let w = multi_beam_weights(&geom, &MultiBeamSpec::new(lobes).unwrap());
        prop_assume!(w.is_ok());
        let multi = integrated_power(&geom, &w.unwrap(), &grid).unwrap();
        prop_assert!((multi / single - 1.0).abs() < 0.02, "{multi} vs {single}");
    }

    #[test]
    fn multi_beam_weights_have_unit_norm(lobes in lobes(12.0), bits in 1u32..=6, range in 0.0..30.0f64) {
        let geom = ArrayGeometry::ula(16);
        let w = multi_beam_weights(&geom, &MultiBeamSpec::new(lobes).unwrap());
        prop_assume!(w.is_ok());
        let w = w.unwrap();
        prop_assert!((w.norm_sqr() - 1.0).abs() < 1e-9);
        let q = quantize(&w, bits, range).unwrap();
        prop_assert!((q.norm_sqr() - 1.0).abs() < 1e-3);
        let again = quantize(&q, bits, range).unwrap();
        for (a, b) in q.as_slice().iter().zip(again.as_slice()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn common_lobe_scale_leaves_pattern_unchanged(lobes in lobes(20.0), scale in 0.05..20.0f64) {
        let geom = ArrayGeometry::ula(8);
        let coeffs: Vec<(f64, Complex64)> = lobes.iter().map(|l| (l.angle_deg, l.coefficient())).collect();
        let scaled: Vec<(f64, Complex64)> = coeffs.iter().map(|&(a, c)| (a, c * scale)).collect();
        let w = superpose(&geom, &coeffs).unwrap().normalized();
        prop_assume!(w.is_ok());
        let w = w.unwrap();
        let ws = superpose(&geom, &scaled).unwrap().normalized().unwrap();
        for (a, b) in w.as_slice().iter().zip(ws.as_slice()) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn snr_scales_with_channel_power(seed in any::<u64>(), mag in 0.1..10.0f64, phase in 0.0..2.0 * PI) {
        let ps = random_channel(seed);
        let geom = ArrayGeometry::ula(8);
        let arrays = Endpoints::new(geom, geom);
        let w_t = single_beam_weights(&geom, ps.paths()[0].aod_deg).unwrap();
        let w_r = single_beam_weights(&geom, ps.paths()[0].aoa_deg).unwrap();
        let noise = NoiseSpec::default();
        let grid = SubcarrierGrid::default();
        let base = received_snr(&ps, &arrays, &w_t, &w_r, 1.0, &noise, &grid).unwrap();
        let c = Complex64::from_polar(mag, phase);
        let scaled = received_snr(&ps.scaled(c), &arrays, &w_t, &w_r, 1.0, &noise, &grid).unwrap();
        prop_assert!((scaled - mag * mag * base).abs() <= 1e-9 * scaled);
    }

    #[test]
    fn cir_energy_equals_path_power(
        offset in 0.0..1.0f64,
        gaps in prop::collection::vec(4usize..20, 0..3),
        amps in prop::collection::vec((0.1..2.0f64, 0.0..2.0 * PI), 3),
    ) {
        let mut taps = vec![100.0 + offset];
        for g in &gaps {
            taps.push(taps.last().unwrap() + *g as f64);
        }
        let tofs: Vec<f64> = taps.iter().map(|t| t / BW).collect();
        let alphas: Vec<Complex64> = amps[..tofs.len()].iter().map(|&(m, p)| Complex64::from_polar(m, p)).collect();
        let cir = cir_from_amplitudes(&alphas, &tofs, BW, 256).unwrap();
        let expected: f64 = alphas.iter().map(|a| a.norm_sqr()).sum();
        prop_assert!((cir.energy() / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn cir_spectrum_matches_frequency_response(seed in any::<u64>(), taps in prop::collection::vec(4u32..200, 1..4)) {
        let mut taps = taps;
        taps.sort_unstable();
        taps.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths: Vec<Path> = taps
            .iter()
            .map(|&t| {
                use rand::Rng;
                Path::from_db(rng.gen_range(-60.0..60.0), 0.0, rng.gen_range(-10.0..0.0), rng.gen_range(0.0..360.0), t as f64 / BW)
            })
            .collect();
        let ps = PathSet::new(paths, 28e9).unwrap();
        let geom = ArrayGeometry::ula(8);
        let arrays = Endpoints::tx_only(geom);
        let w = single_beam_weights(&geom, 10.0).unwrap();
        let omni = WeightVector::omni();
        let grid = SubcarrierGrid::default();
        let cir = mbeam::channel::synthesize_cir(&ps, &arrays, &w, &omni, BW, 256).unwrap();
        let from_taps = cir.frequency_response(&grid);
        let direct = effective_freq_response(&ps, &arrays, &w, &omni, &grid).unwrap();
        let scale = direct.iter().map(|h| h.norm()).fold(0.0, f64::max);
        for (a, b) in from_taps.iter().zip(&direct) {
            prop_assert!((a - b).norm() <= 1e-6 * scale);
        }
    }

    #[test]
    fn oracle_beats_every_multi_beam(seed in any::<u64>(), coeffs in prop::collection::vec((0.0..1.5f64, 0.0..2.0 * PI), 2)) {
        let ps = random_channel(seed);
        let geom = ArrayGeometry::ula(8);
        let arrays = Endpoints::tx_only(geom);
        let grid = SubcarrierGrid::default();
        let noise = NoiseSpec::default();
        let omni = WeightVector::omni();
        let oracle = oracle_weights(&ps, &geom, &grid).unwrap();
        let best = received_snr_db(&ps, &arrays, &oracle, &omni, 1.0, &noise, &grid).unwrap();
        let mut lobes = vec![Lobe::new(ps.paths()[0].aod_deg, 1.0, 0.0)];
        for (p, &(d, s)) in ps.paths()[1..].iter().zip(&coeffs) {
            lobes.push(Lobe::new(p.aod_deg, d, s));
        }
        let w = multi_beam_weights(&geom, &MultiBeamSpec::new(lobes).unwrap());
        prop_assume!(w.is_ok());
        let snr = received_snr_db(&ps, &arrays, &w.unwrap(), &omni, 1.0, &noise, &grid).unwrap();
        prop_assert!(best >= snr - 0.01, "oracle {best} < {snr}");
    }

    #[test]
    fn best_k_beam_snr_grows_with_k(seed in any::<u64>()) {
        let ps = random_channel(seed);
        let geom = ArrayGeometry::ula(8);
        let arrays = Endpoints::tx_only(geom);
        let grid = SubcarrierGrid::default();
        let noise = NoiseSpec::default();
        let omni = WeightVector::omni();
        let angles: Vec<f64> = ps.paths().iter().map(|p| p.aod_deg).collect();
        let channels: Vec<Vec<Complex64>> = angles
            .iter()
            .map(|&a| effective_freq_response(&ps, &arrays, &single_beam_weights(&geom, a).unwrap(), &omni, &grid).unwrap())
            .collect();
        let mut last = f64::NEG_INFINITY;
        for k in 1..=angles.len() {
            let spec = if k == 1 {
                MultiBeamSpec::single(angles[0]).unwrap()
            } else {
                let est = optimize_beams(&channels[..k], Some((&geom, &angles[..k]))).unwrap();
                MultiBeamSpec::new(angles[..k].iter().zip(&est).map(|(&a, e)| Lobe::new(a, e.delta, e.sigma_rad)).collect()).unwrap()
            };
            let w = multi_beam_weights(&geom, &spec).unwrap();
            let snr = received_snr_db(&ps, &arrays, &w, &omni, 1.0, &noise, &grid).unwrap();
            prop_assert!(snr >= last - 1e-9, "K={k}: {snr} < {last}");
            last = snr;
        }
    }

    #[test]
    fn phase_only_channels_give_unit_amplitude(
        h in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..64),
        phase in 0.0..2.0 * PI,
    ) {
        let h_ref: Vec<Complex64> = h.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        prop_assume!(h_ref.iter().map(|x| x.norm_sqr()).sum::<f64>() > 1e-3);
        let c = Complex64::from_polar(1.0, phase);
        let h_b: Vec<Complex64> = h_ref.iter().map(|x| x * c).collect();
        let est = optimize_combining(&h_ref, &h_b).unwrap();
        let wrapped = |x: f64| x.rem_euclid(2.0 * PI);
        let angle_err = |a: f64, b: f64| { let d = wrapped(a - b); d.min(2.0 * PI - d) };
        prop_assert!((est.normalized.delta - 1.0).abs() < 1e-9);
        prop_assert!(angle_err(est.normalized.sigma_rad, phase) < 1e-9);
        prop_assert!((est.least_squares.delta - 1.0).abs() < 1e-9);
        prop_assert!(angle_err(est.least_squares.sigma_rad, PI - phase) < 1e-9);
    }

    #[test]
    fn jitter_search_never_fits_worse(seed in any::<u64>(), rel in prop::collection::vec(0.6..2.0f64, 1..3)) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tofs = vec![0.0];
        for r in rel {
            tofs.push(tofs.last().unwrap() + r * 1e-9);
        }
        let alphas: Vec<Complex64> = tofs.iter().map(|_| Complex64::from_polar(rng.gen_range(0.2..1.0), rng.gen_range(0.0..6.0))).collect();
        let truth: Vec<f64> = tofs.iter().map(|t| t + 10.0 / BW + rng.gen_range(-0.2e-9..0.2e-9)).collect();
        let cir = cir_from_amplitudes(&alphas, &truth, BW, 32).unwrap();
        let dict = SincDictionary::anchored(&tofs, BW, 32, 10.0).unwrap();
        let plain = solve_amplitudes(&cir, &dict, 1e-6).unwrap();
        let jittered = jitter_search(&cir, &dict, &JitterGrid::default(), 1e-6, Execution::Sequential).unwrap();
        prop_assert!(jittered.residual_norm <= plain.residual_norm + 1e-12);
    }

    #[test]
    fn ridge_weight_shrinks_amplitudes(seed in any::<u64>(), lambda in 1e-6..1.0f64, factor in 1.0..100.0f64) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps: Vec<Complex64> = (0..16).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let cir = Cir::from_taps(taps, BW).unwrap();
        let dict = build_dictionary(&[0.0, 1e-9, 2.5e-9], BW, 16).unwrap();
        let norm = |l: f64| solve_amplitudes(&cir, &dict, l).unwrap().alphas.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(norm(lambda * factor) <= norm(lambda) * (1.0 + 1e-12));
    }

    #[test]
    fn amplitudes_ignore_absolute_timing(shift in 1usize..40, gap in 0.8..3.0f64, a1 in 0.2..1.0f64, p1 in 0.0..2.0 * PI) {
        let rel = [0.0, gap * 1e-9];
        let alphas = [Complex64::new(1.0, 0.0), Complex64::from_polar(a1, p1)];
        let at = |start: f64| {
            let tofs: Vec<f64> = rel.iter().map(|r| r + start / BW).collect();
            let cir = cir_from_amplitudes(&alphas, &tofs, BW, 128).unwrap();
            estimate_amplitudes(&cir, &rel, &SuperresConfig::default()).unwrap().powers_db()
        };
        let (base, moved) = (at(30.3), at(30.3 + shift as f64));
        for (x, y) in base.iter().zip(&moved) {
            prop_assert!((x - y).abs() < 0.01, "{base:?} vs {moved:?}");
        }
    }

    #[test]
    fn ridge_fit_matches_peak_reading_for_separated_paths(
        gaps in prop::collection::vec(2usize..10, 1..3),
        amps in prop::collection::vec((0.1..1.0f64, 0.0..2.0 * PI), 3),
    ) {
        let mut taps = vec![0usize];
        for g in &gaps {
            taps.push(taps.last().unwrap() + g);
        }
        let rel: Vec<f64> = taps.iter().map(|&t| t as f64 / BW).collect();
        let alphas: Vec<Complex64> = amps[..rel.len()].iter().map(|&(m, p)| Complex64::from_polar(m, p)).collect();
        let abs: Vec<f64> = rel.iter().map(|r| r + 8.0 / BW).collect();
        let cir = cir_from_amplitudes(&alphas, &abs, BW, 64).unwrap();
        let dict = SincDictionary::anchored(&rel, BW, 64, 8.0).unwrap();
        let est = solve_amplitudes(&cir, &dict, 1e-6).unwrap();
        for (k, &t) in taps.iter().enumerate() {
            let read = lin_to_db(cir.taps()[t + 8].norm_sqr());
            prop_assert!((est.powers_db()[k] - read).abs() < 0.1);
        }
    }

    #[test]
    fn peak_count_never_exceeds_path_count(seed in any::<u64>(), prominence in 3.0..10.0f64) {
        let ps = random_channel(seed);
        let geom = ArrayGeometry::ula(8);
        let arrays = Endpoints::new(geom, geom);
        let codebook = AngleGrid::new(-90.0, 90.0, 2.0).unwrap();
        let mut ledger = ProbeLedger::new(SsbAccounting::PerSsb);
        for side in [Side::Transmit, Side::Receive] {
            let profile = exhaustive_scan::<ChaCha8Rng>(&ps, &arrays, side, &codebook, &ScanSetup::default(), &mut ledger, 0, None).unwrap();
            prop_assert!(extract_paths(&profile, prominence).len() <= ps.len());
        }
    }

    #[test]
    fn association_ignores_input_order(
        peaks in prop::collection::vec((-80.0..80.0f64, -80.0..80.0f64, 0.0..30.0f64), 1..5),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let tx: Vec<TimedPeak> = peaks.iter().enumerate().map(|(i, &(a, _, s))| TimedPeak { angle_deg: a, snr_db: s + i as f64 * 1e-3, tof_s: (10 + 5 * i) as f64 * 1e-9 }).collect();
        let rx: Vec<TimedPeak> = peaks.iter().enumerate().map(|(i, &(_, a, s))| TimedPeak { angle_deg: a, snr_db: s - 1.0 + i as f64 * 1e-3, tof_s: (10 + 5 * i) as f64 * 1e-9 + 0.1e-9 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        let (mut tx2, mut rx2) = (tx.clone(), rx.clone());
        tx2.shuffle(&mut rng);
        rx2.shuffle(&mut rng);
        prop_assert_eq!(associate_paths(&tx, &rx).unwrap(), associate_paths(&tx2, &rx2).unwrap());
    }

    #[test]
    fn reallocation_keeps_unit_norm(lobes in lobes(20.0), mask in 1u8..7) {
        let spec = MultiBeamSpec::new(lobes).unwrap();
        let blocked: Vec<usize> = (0..spec.len()).filter(|&i| mask & (1 << i) != 0).collect();
        prop_assume!(blocked.len() < spec.len());
        let geom = ArrayGeometry::ula(8);
        let realloc = reallocate_on_blockage(&spec, &blocked).unwrap();
        let w = multi_beam_weights(&geom, &realloc.spec);
        prop_assume!(w.is_ok());
        prop_assert!((w.unwrap().norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn multi_beam_throughput_dominates_single(beta in 0.0..=1.0f64, delta in 0.0..=1.0f64, snr_db in -20.0..40.0f64) {
        let (single, multi) = avg_throughput_blockage(beta, delta, 10f64.powf(snr_db / 10.0)).unwrap();
        prop_assert!(multi >= single - 1e-12);
    }
}
