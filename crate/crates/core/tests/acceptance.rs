//! End-to-end acceptance gate. Each test covers one numbered criterion and
//! prints a single pass line; a failed assertion is the corresponding fail
//! line. Run with `--nocapture` to see the pass lines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use tfqkd::analysis::{
    aopp_analytic, aopp_simulate, analyze_tally, chernoff_bounds, decoy_bounds, plob_skc0,
    AnalysisConfig,
};
use tfqkd::channel::PhaseNoiseModel;
use tfqkd::fixtures;
use tfqkd::params::{sns_constraint_sides, LinkConfig, ProtocolParams};
use tfqkd::protocol::{ez_before_aopp, run_simulation, xqber, XClass};
use tfqkd::stabilizer::{
    drift_rate_std, estimate_frequency_offset, qber_floor, residual_scale, residual_std,
    simulate_dual_lock, simulate_lock, visibility, DualLockOptions, PidConfig, FAST_N_EXTREMES,
    FAST_SEGMENT_LEN, LAMBDA_C_NM, LAMBDA_Q_NM,
};

/// Published per-dataset reference values, in fixture order
/// (403.73 km, 518.16 km, 615.59 km, 407.23 km asym, 455.65 km asym).
const LENGTH_KM: [f64; 5] = [403.73, 518.16, 615.59, 407.23, 455.65];
const EZ_BEFORE_PCT: [f64; 5] = [27.24, 27.62, 27.37, 29.44, 29.06];
const EZ_PRIME_PCT: [f64; 5] = [0.19, 0.48, 1.97, 0.26, 0.27];
const N1_PRIME: [f64; 5] = [1.616e6, 2.763e5, 2.984e5, 6.963e5, 7.084e5];
const E1PH_PRIME: [f64; 5] = [0.1336, 0.1449, 0.1224, 0.1543, 0.1460];
const SKR_PER_SIGNAL: [f64; 5] = [2.934e-7, 2.875e-8, 6.366e-10, 9.261e-8, 1.015e-7];
const SKR_PER_SECOND: [f64; 5] = [146.70, 14.38, 0.32, 46.31, 50.75];
const SKC0_PER_SIGNAL: [f64; 5] = [2.380e-7, 2.845e-9, 6.565e-11, 2.078e-7, 3.193e-8];
const RATIO_SKR_SKC0: [f64; 5] = [1.23, 10.11, 9.70, 0.45, 3.18];
const FIBRE_DB_PER_KM: f64 = 0.168;

fn analysis_for(idx: usize) -> AnalysisConfig {
    AnalysisConfig {
        external_after_aopp: Some((N1_PRIME[idx], E1PH_PRIME[idx])),
        total_attenuation_db: Some(LENGTH_KM[idx] * FIBRE_DB_PER_KM),
        ..AnalysisConfig::default()
    }
}

#[test]
fn criterion_1_z_error_rates_before_pairing() {
    for (idx, (label, _, _, tally)) in fixtures::all_datasets().into_iter().enumerate() {
        let ez = 100.0 * ez_before_aopp(&tally).unwrap();
        let want = EZ_BEFORE_PCT[idx];
        assert!(
            (ez - want).abs() < 0.005,
            "criterion 1: FAIL ({label}: ez {ez:.4} % vs {want} %)"
        );
    }
    println!("criterion 1: PASS (E_z before pairing matches all five tables)");
}

#[test]
fn criterion_2_pairing_error_rates() {
    for (idx, (label, params, _, tally)) in fixtures::all_datasets().into_iter().enumerate() {
        let out = analyze_tally(&tally, &params, &analysis_for(idx)).unwrap();
        let ez_prime = 100.0 * out.aopp.ez_prime;
        let want = EZ_PRIME_PCT[idx];
        assert!(
            (ez_prime - want).abs() < 0.01,
            "criterion 2: FAIL ({label}: ez' {ez_prime:.4} % vs {want} %)"
        );
    }

    // Monte Carlo pairing on synthetic million-bit keys must agree with the
    // analytic formula to within sampling error.
    let mut rng = ChaCha8Rng::seed_from_u64(1201);
    for (p_one, e0, e1) in [(0.5, 0.28, 0.02), (0.3, 0.25, 0.05), (0.6, 0.30, 0.01)] {
        let n = 1_000_000usize;
        let mut alice = Vec::with_capacity(n);
        let mut bob = Vec::with_capacity(n);
        for _ in 0..n {
            let b: u8 = if rng.random::<f64>() < p_one { 1 } else { 0 };
            let err = rng.random::<f64>() < if b == 0 { e0 } else { e1 };
            bob.push(b);
            alice.push(if err { 1 - b } else { b });
        }
        let zeros = bob.iter().filter(|&&b| b == 0).count() as f64;
        let ones = n as f64 - zeros;
        let sim = aopp_simulate(&alice, &bob, &mut rng);
        let ana = aopp_analytic(sim.e0, sim.e1, zeros, ones);
        let sigma = (ana.ez_prime * (1.0 - ana.ez_prime) / ana.nt_prime).sqrt();
        assert!(
            (sim.ez_prime - ana.ez_prime).abs() <= 4.0 * sigma,
            "criterion 2: FAIL (simulated ez' {} vs analytic {} beyond 4σ = {})",
            sim.ez_prime,
            ana.ez_prime,
            4.0 * sigma
        );
    }
    println!("criterion 2: PASS (ez' matches tables; pairing Monte Carlo within 4σ)");
}

#[test]
fn criterion_3_key_rate_reproduction() {
    for (idx, (label, params, _, tally)) in fixtures::all_datasets().into_iter().enumerate() {
        let out = analyze_tally(&tally, &params, &analysis_for(idx)).unwrap();
        let skr = out.report.skr_per_signal;
        let want = SKR_PER_SIGNAL[idx];
        assert!(
            (skr / want - 1.0).abs() < 0.01,
            "criterion 3: FAIL ({label}: skr {skr:.4e} vs {want:.4e} bit/signal)"
        );
        let bps = out.report.skr_per_second;
        let want_bps = SKR_PER_SECOND[idx];
        assert!(
            (bps / want_bps - 1.0).abs() < 0.01,
            "criterion 3: FAIL ({label}: {bps:.3} vs {want_bps} bit/s)"
        );
    }
    println!("criterion 3: PASS (key rates match all five tables within 1 %)");
}

#[test]
fn criterion_4_repeaterless_bound() {
    for (idx, (label, params, _, tally)) in fixtures::all_datasets().into_iter().enumerate() {
        let skc0 = plob_skc0(LENGTH_KM[idx], FIBRE_DB_PER_KM);
        let want = SKC0_PER_SIGNAL[idx];
        assert!(
            (skc0 / want - 1.0).abs() < 0.01,
            "criterion 4: FAIL ({label}: SKC0 {skc0:.4e} vs {want:.4e})"
        );
        let out = analyze_tally(&tally, &params, &analysis_for(idx)).unwrap();
        let ratio = out.report.ratio_skr_skc0.unwrap();
        let want_ratio = RATIO_SKR_SKC0[idx];
        assert!(
            (ratio / want_ratio - 1.0).abs() < 0.02,
            "criterion 4: FAIL ({label}: ratio {ratio:.3} vs {want_ratio})"
        );
    }
    println!("criterion 4: PASS (SKC0 within 1 %, SKR/SKC0 ratios within 2 %)");
}

#[test]
fn criterion_5_asymmetric_source_constraint() {
    for params in [fixtures::params_407km(), fixtures::params_455km()] {
        let (lhs, rhs) = sns_constraint_sides(&params.alice, &params.bob).unwrap();
        let dev = (lhs / rhs - 1.0).abs();
        assert!(
            dev < 0.005,
            "criterion 5: FAIL (constraint sides {lhs} vs {rhs}, deviation {dev})"
        );
    }
    println!("criterion 5: PASS (asymmetric source constraint holds within 0.5 %)");
}

#[test]
fn criterion_6_visibility_and_qber_floor() {
    assert_eq!(
        qber_floor(0.968),
        (1.0 - 0.968) / 2.0,
        "criterion 6: FAIL (qber_floor(0.968) != 1.6 %)"
    );

    // Ideal full-contrast fringe, densely sampled over many periods.
    let ideal: Vec<f64> = (0..400_000)
        .map(|k| 0.5 * (1.0 + (k as f64 * 1e-3).cos()))
        .collect();
    let v = visibility(&ideal, FAST_SEGMENT_LEN, FAST_N_EXTREMES).unwrap().mean_v;
    assert!(
        (v - 1.0).abs() <= 0.001,
        "criterion 6: FAIL (ideal fringe visibility {v})"
    );

    // Free drift at ~1 kHz with injected contrast 0.978.
    let v_true = 0.978;
    let mut rng = ChaCha8Rng::seed_from_u64(1601);
    let noise = PhaseNoiseModel::new(1000.0, 200.0);
    let dt = 2e-6;
    let hold = (noise.rate_hold_s / dt) as usize;
    let mut phi = 0.0;
    let mut rate = 0.0;
    let samples: Vec<f64> = (0..5_000_000)
        .map(|k| {
            if k % hold == 0 {
                rate = noise.delta_nu_hz + noise.draw_rate(&mut rng);
            }
            phi += TAU * rate * dt;
            0.5 * (1.0 + v_true * phi.cos())
        })
        .collect();
    let recovered = visibility(&samples, FAST_SEGMENT_LEN, FAST_N_EXTREMES)
        .unwrap()
        .mean_v;
    assert!(
        (recovered - v_true).abs() <= 0.005,
        "criterion 6: FAIL (recovered visibility {recovered} vs {v_true})"
    );
    println!("criterion 6: PASS (QBER floor exact; visibility estimator within tolerance)");
}

#[test]
fn criterion_7_stabiliser_properties() {
    // (a) frequency-offset readout linearity over ±2 kHz.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &delta) in [-2000.0, -1000.0, 0.0, 1000.0, 2000.0].iter().enumerate() {
        let noise = PhaseNoiseModel::new(delta, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1700 + i as u64);
        let trace = simulate_lock(&noise, &PidConfig::default(), 1.5, &mut rng).unwrap();
        xs.push(delta);
        ys.push(estimate_frequency_offset(&trace, 1.0).unwrap());
    }
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum::<f64>()
        / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>();
    assert!(
        (slope - 1.0).abs() < 0.02,
        "criterion 7: FAIL (offset readout slope {slope})"
    );

    // (b) residual channel-reference phase std with calibrated fibre noise.
    let noise = PhaseNoiseModel::new(0.0, 1070.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1710);
    let trace = simulate_lock(&noise, &PidConfig::default(), 10.0, &mut rng).unwrap();
    let std = residual_std(&trace);
    assert!(std <= 0.15, "criterion 7: FAIL (residual std {std} rad)");

    // (c) noiseless common-mode scaling of the λ_q residual.
    let mut rng = ChaCha8Rng::seed_from_u64(1720);
    let opts = DualLockOptions {
        perfect_lock: true,
        ..DualLockOptions::default()
    };
    let dual = simulate_dual_lock(&noise, &PidConfig::default(), &opts, 4.0, &mut rng).unwrap();
    let q_std = drift_rate_std(&dual.q_residual_rad, dual.dt_s, noise.rate_hold_s, None).unwrap();
    let rates: Vec<f64> = dual
        .fibre_rate_hz
        .chunks_exact((noise.rate_hold_s / dual.dt_s) as usize)
        .map(|c| c[0])
        .collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let fibre_std = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
        / (rates.len() - 1) as f64)
        .sqrt();
    let ratio = q_std / fibre_std;
    let scale = residual_scale(LAMBDA_Q_NM, LAMBDA_C_NM);
    assert!(
        (ratio / scale - 1.0).abs() < 0.01,
        "criterion 7: FAIL (common-mode ratio {ratio:.4e} vs {scale:.4e})"
    );

    // (d) λ_q residual drift-rate std with shot noise, factor-2 band on 0.72 Hz.
    let mut rng = ChaCha8Rng::seed_from_u64(1730);
    let dual = simulate_dual_lock(
        &noise,
        &PidConfig::default(),
        &DualLockOptions::default(),
        10.0,
        &mut rng,
    )
    .unwrap();
    let q_drift = drift_rate_std(&dual.q_residual_rad, dual.dt_s, 0.01, Some(0.005)).unwrap();
    assert!(
        (0.36..=1.44).contains(&q_drift),
        "criterion 7: FAIL (λ_q residual drift std {q_drift} Hz outside [0.36, 1.44])"
    );
    println!("criterion 7: PASS (offset slope, residual std, common-mode scaling, λ_q drift)");
}

#[test]
fn criterion_8_decoy_bound_soundness() {
    let link = LinkConfig::symmetric(50.0);
    let n_slots: u64 = 100_000_000;
    let params = ProtocolParams::symmetric_reference(n_slots);

    for seed in [801u64, 802, 803] {
        let tally = run_simulation(&params, &link, 0.968, n_slots, seed);
        let truth = tally.truth.expect("simulated tallies carry truth counters");
        let y1_truth =
            truth.single_photon_z_events as f64 / truth.zz_single_photon_pairs as f64;

        // Finite-size bound never exceeds the ground truth.
        let finite = decoy_bounds(&tally, &params, Some(1e-10)).unwrap();
        assert!(
            finite.y1_lower <= y1_truth,
            "criterion 8: FAIL (seed {seed}: y1_lower {0:.4e} > truth {y1_truth:.4e})",
            finite.y1_lower
        );

        // Asymptotic bound lands within 5 % of the truth.
        let asym = decoy_bounds(&tally, &params, None).unwrap();
        assert!(
            asym.y1_lower <= y1_truth && asym.y1_lower >= 0.95 * y1_truth,
            "criterion 8: FAIL (seed {seed}: asymptotic y1 {0:.4e} vs truth {y1_truth:.4e})",
            asym.y1_lower
        );
    }

    // Chernoff interval coverage at ξ = 1e-3 over 1000 Poisson trials.
    let mean = 1.0e4;
    let dist = rand_distr::Poisson::new(mean).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(810);
    let mut covered = 0u32;
    for _ in 0..1000 {
        let observed: f64 = rng.sample(dist);
        let (lo, hi) = chernoff_bounds(observed, 1e-3).unwrap();
        if lo <= mean && mean <= hi {
            covered += 1;
        }
    }
    assert!(
        covered >= 995,
        "criterion 8: FAIL (Chernoff coverage {covered}/1000)"
    );

    // Diagnostic n1 reconstruction on the 403 km table.
    let tally = fixtures::table_s5_403km();
    let bounds = decoy_bounds(&tally, &fixtures::params_403km(), Some(1e-10)).unwrap();
    let want = 9.565e6;
    assert!(
        (bounds.n1_lower / want - 1.0).abs() < 0.20,
        "criterion 8: FAIL (n1 diagnostic {0:.4e} vs {want:.4e})",
        bounds.n1_lower
    );
    println!("criterion 8: PASS (y1 bound sound and tight; Chernoff coverage {covered}/1000)");
}

#[test]
fn criterion_9_simulation_realism() {
    let link = LinkConfig::symmetric(50.0);
    let n_slots: u64 = 100_000_000;
    let params = ProtocolParams::symmetric_reference(n_slots);
    let tally = run_simulation(&params, &link, 0.968, n_slots, 901);

    let q11 = 100.0 * xqber(&tally, XClass::X11).unwrap();
    assert!(
        (3.75..=6.31).contains(&q11),
        "criterion 9: FAIL (QBER(X11) {q11:.3} % outside [3.75, 6.31] %)"
    );
    let ez = 100.0 * ez_before_aopp(&tally).unwrap();
    assert!(
        (25.0..=30.0).contains(&ez),
        "criterion 9: FAIL (E_z {ez:.3} % outside [25, 30] %)"
    );
    println!("criterion 9: PASS (QBER(X11) {q11:.2} %, E_z {ez:.2} % at 50 km)");
}
