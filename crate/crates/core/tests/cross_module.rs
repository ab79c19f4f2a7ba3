use std::f64::consts::PI;

use proptest::prelude::*;
use spade_core::estimate::{lse_frequency, LseOptions, Pipeline};
use spade_core::fisher::{cfi, qfi_ideal, qfi_noisy, LOEWNER_TOL};
use spade_core::modes::{PixelArray, Scheme};
use spade_core::motion::{MotionModel, NoiseBudget, Param, SamplingSchedule};
use spade_core::sim::{expected_counts, run_ensemble, TrialConfig};
use spade_core::{FisherMatrixF32, MotionModelF32, SamplingScheduleF32, SchemeF32};

const FS: f64 = 20.0;

/// `(nu / sigma^2) sum_n (ds/df)^2` for `A sin(2 pi f n + phi) + A`.
fn sinusoid_frequency_qfi(a: f64, f: f64, phi: f64, frames: usize, nu: f64) -> f64 {
    (0..frames)
        .map(|n| {
            let n = n as f64;
            let d = a * 2.0 * PI * n * (2.0 * PI * f * n + phi).cos();
            d * d
        })
        .sum::<f64>()
        * nu
}

#[test]
fn ideal_qfi_matches_hand_sum() {
    let sched = SamplingSchedule::new(50, FS).unwrap();
    for (a, f, phi) in [(0.47, 0.2, 0.0), (0.28, 0.13, 1.1), (1.0, 0.41, -0.4)] {
        let m = MotionModel::sinusoid(a, f, phi, FS).unwrap();
        let q = qfi_ideal(&m, &sched, 60.0, &[Param::Frequency]).unwrap().scalar();
        let oracle = sinusoid_frequency_qfi(a, f, phi, 50, 60.0);
        assert!((q - oracle).abs() / oracle < 1e-12, "{q} vs {oracle}");
    }
}

#[test]
fn direct_imaging_counts_follow_gaussian_pixel_integrals() {
    let pitch = 0.25;
    let scheme = Scheme::direct_imaging(PixelArray::new(pitch, -40, 40).unwrap());
    let s = 0.37;
    let mu = expected_counts(&scheme, s, 1.0, 0.0);
    // midpoint rule on the unit-width Gaussian intensity, 2000 sub-intervals per pixel
    for (i, k) in (-40i64..=40).enumerate().step_by(7) {
        let (lo, hi) = ((k as f64 - 0.5) * pitch, (k as f64 + 0.5) * pitch);
        let m = 2000;
        let h = (hi - lo) / m as f64;
        let oracle: f64 = (0..m)
            .map(|j| {
                let x = lo + (j as f64 + 0.5) * h - s;
                (-x * x / 2.0).exp() / (2.0 * PI).sqrt() * h
            })
            .sum();
        assert!((mu[i] - oracle).abs() < 1e-9, "pixel {k}: {} vs {oracle}", mu[i]);
    }
    assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn hg_probabilities_are_poisson_weights() {
    let scheme = Scheme::hg_spade(21).unwrap();
    for s in [0.0f64, 0.3, 0.94, 2.0] {
        let mu = scheme.mu(s);
        let lambda = s * s / 4.0;
        let mut w = (-lambda).exp();
        for (q, m) in mu.iter().enumerate() {
            assert!((m - w).abs() < 1e-13, "q={q} s={s}");
            w *= lambda / (q + 1) as f64;
        }
    }
}

#[test]
fn single_precision_tracks_double() {
    let m64 = MotionModel::sinusoid(0.47, 0.2, 0.3, FS).unwrap();
    let m32: MotionModelF32 = MotionModel::sinusoid(0.47f32, 0.2, 0.3, 20.0).unwrap();
    let s64 = SamplingSchedule::new(50, FS).unwrap();
    let s32: SamplingScheduleF32 = SamplingSchedule::new(50, 20.0).unwrap();
    let n64 = NoiseBudget::with_ratio(60.0, 0.05).unwrap();
    let n32 = NoiseBudget::with_ratio(60.0f32, 0.05).unwrap();
    let p = [Param::Frequency, Param::Phase];
    let pm32: SchemeF32 = Scheme::pm_spade();
    let c64 = cfi(&m64, &s64, &Scheme::pm_spade(), n64, &p).unwrap();
    let c32: FisherMatrixF32 = cfi(&m32, &s32, &pm32, n32, &p).unwrap();
    for (a, b) in c64.values.iter().zip(&c32.values) {
        assert!((a - *b as f64).abs() / a.abs().max(1.0) < 1e-4);
    }
}

#[test]
fn ensemble_mean_counts_match_expectation() {
    let m = MotionModel::sinusoid(0.47, 0.2, 0.0, FS).unwrap();
    let sched = SamplingSchedule::new(10, FS).unwrap();
    let cfg = TrialConfig::new(m, sched, NoiseBudget::new(60.0, 3.0).unwrap(), 5).unwrap();
    let scheme = Scheme::hg_spade(21).unwrap();
    let trials = 4000;
    let runs = run_ensemble(&cfg, &scheme, trials, 1).unwrap();
    for n in [0, 3, 7] {
        let s = m.displacement(n as f64 / FS);
        let e = expected_counts(&scheme, s, 60.0, 3.0);
        for (q, &eq) in e.iter().enumerate().take(4) {
            let mean = runs.iter().map(|r| r.frames[n].counts[q] as f64).sum::<f64>() / trials as f64;
            let se = (eq / trials as f64).sqrt();
            assert!((mean - eq).abs() < 5.0 * se, "frame {n} mode {q}: {mean} vs {eq}");
        }
    }
}

#[test]
fn noiseless_fit_recovers_frequency_exactly() {
    let sched = SamplingSchedule::new(50, FS).unwrap();
    for f in [0.07, 0.2, 0.33, 0.45] {
        let m = MotionModel::square_fundamental(0.47, f, 0.0, FS).unwrap();
        let s: Vec<f64> = sched.nominal_times().iter().map(|&t| m.displacement(t)).collect();
        let e = lse_frequency(&s, &sched, &m, &LseOptions::default()).unwrap();
        assert!((e.f_hat - f).abs() < 1e-9, "{f}: {}", e.f_hat);
    }
}

#[test]
fn pm_pipeline_is_near_efficient_without_noise() {
    let m = MotionModel::square_fundamental(0.47, 0.2, 0.0, FS).unwrap();
    let sched = SamplingSchedule::new(50, FS).unwrap();
    let cfg = TrialConfig::new(m, sched, NoiseBudget::new(60.0, 0.0).unwrap(), 99).unwrap();
    let p = Pipeline::new(cfg, Scheme::pm_spade(), m, None, LseOptions::default()).unwrap();
    let stats = p.summarize(&p.run(150, 1).unwrap());
    let crb = 60.0 / cfi(&m, &sched, &Scheme::pm_spade(), cfg.noise, &[Param::Frequency]).unwrap().scalar();
    let ratio = stats.rescaled_variance / crb;
    assert!(ratio > 0.7 && ratio < 2.0, "Var/CRB {ratio}");
    assert!((stats.mean - 0.2).abs() < 4.0 * stats.se_mean);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn cfi_below_noisy_qfi_below_ideal(
        a in 0.01f64..1.5,
        f in 0.02f64..0.48,
        phi in -3.0f64..3.0,
        beta in 0.0f64..0.5,
        which in 0usize..3,
    ) {
        let m = MotionModel::sinusoid(a, f, phi, FS).unwrap();
        let sched = SamplingSchedule::new(30, FS).unwrap();
        let scheme = match which {
            0 => Scheme::direct_imaging(PixelArray::for_motion(0.0447, m.min_displacement(), m.max_displacement()).unwrap()),
            1 => Scheme::hg_spade(21).unwrap(),
            _ => Scheme::pm_spade(),
        };
        let noise = NoiseBudget::with_ratio(60.0, beta).unwrap();
        let p = [Param::Amplitude, Param::Frequency, Param::Phase];
        let c = cfi(&m, &sched, &scheme, noise, &p).unwrap();
        let qn = qfi_noisy(&m, &sched, noise, &p).unwrap();
        let qi = qfi_ideal(&m, &sched, 60.0, &p).unwrap();
        prop_assert!(c.is_symmetric());
        prop_assert!(c.loewner_le(&qn, LOEWNER_TOL));
        prop_assert!(qn.loewner_le(&qi, LOEWNER_TOL));
    }

    #[test]
    fn pm_plus_minus_equals_first_two_hg(s in -5.0f64..5.0) {
        let pm = Scheme::pm_spade().mu(s);
        let hg = Scheme::hg_spade(2).unwrap().mu(s);
        prop_assert!((pm[0] + pm[1] - hg[0] - hg[1]).abs() < 1e-12);
        let g = (-s * s / 4.0).exp();
        prop_assert!((pm[0] + pm[1] - g * (1.0 + s * s / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn gamma_never_exceeds_noisy_ceiling(s in -3.0f64..3.0, beta in 0.0f64..1.0) {
        let ceiling = 1.0 / (1.0 + 2.0 * beta);
        for scheme in [Scheme::pm_spade(), Scheme::hg_spade(21).unwrap()] {
            prop_assert!(scheme.gamma(s, beta) <= ceiling * (1.0 + 1e-12));
        }
    }
}
