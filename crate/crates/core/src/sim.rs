//! Seeded Monte Carlo photon counting.
//!
//! Every detector count in a frame is an independent Poisson draw with mean
//! `nu * mu_j(s) + b`. Trials derive their random streams from the master seed
//! and the trial index only, so ensembles are reproducible regardless of how
//! many workers execute them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::modes::Scheme;
use crate::motion::{MotionModel, NoiseBudget, SamplingSchedule};
use crate::scalar::Real;

/// Everything needed to simulate one run of the experiment, apart from the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig<T> {
    pub motion: MotionModel<T>,
    pub schedule: SamplingSchedule<T>,
    pub noise: NoiseBudget<T>,
    pub seed: u64,
}

impl<T: Real> TrialConfig<T> {
    pub fn new(
        motion: MotionModel<T>,
        schedule: SamplingSchedule<T>,
        noise: NoiseBudget<T>,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            motion: motion.validated()?,
            schedule: schedule.validated()?,
            noise: NoiseBudget::new(noise.nu, noise.b)?,
            seed,
        })
    }

    /// Random stream for trial `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        trial_rng(self.seed, index)
    }
}

/// ChaCha stream `index` under key `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord<T> {
    pub index: usize,
    /// True sampling time in seconds, including any trigger delay.
    pub time: T,
    pub counts: Vec<u64>,
}

impl<T> FrameRecord<T> {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult<T> {
    pub trial: u64,
    pub seed: u64,
    /// Trigger delay applied to all frames of this run.
    pub delay: T,
    pub config: TrialConfig<T>,
    pub scheme: Scheme<T>,
    pub frames: Vec<FrameRecord<T>>,
}

impl<T: Real> TrialResult<T> {
    /// Displacement actually sampled at each frame.
    pub fn true_displacements(&self) -> Vec<T> {
        self.frames
            .iter()
            .map(|f| self.config.motion.displacement(f.time))
            .collect()
    }
}

/// Draws from Poisson(`mean`); a zero mean yields zero.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive Poisson mean");
    d.sample(rng) as u64
}

/// Expected counts `nu * mu_j(s) + b` for every detector.
pub fn expected_counts<T: Real>(scheme: &Scheme<T>, s: T, nu: T, b: T) -> Vec<T> {
    scheme.mu(s).into_iter().map(|m| nu * m + b).collect()
}

/// Counts of one frame with the source at `s`.
pub fn sample_frame<T: Real, R: Rng + ?Sized>(
    scheme: &Scheme<T>,
    s: T,
    nu: T,
    b: T,
    rng: &mut R,
) -> Vec<u64> {
    let mut mu = vec![T::zero(); scheme.detector_count()];
    let mut out = Vec::with_capacity(mu.len());
    sample_frame_into(scheme, s, nu, b, rng, &mut mu, &mut out);
    out
}

fn sample_frame_into<T: Real, R: Rng + ?Sized>(
    scheme: &Scheme<T>,
    s: T,
    nu: T,
    b: T,
    rng: &mut R,
    mu: &mut [T],
    out: &mut Vec<u64>,
) {
    scheme.mu_into(s, mu);
    out.clear();
    out.extend(mu.iter().map(|&m| poisson((nu * m + b).as_f64(), rng)));
}

pub(crate) fn simulate<T: Real>(config: &TrialConfig<T>, scheme: &Scheme<T>, trial: u64) -> TrialResult<T> {
    let mut rng = config.rng(trial);
    let delay = config.schedule.draw_delay(&mut rng);
    let mut mu = vec![T::zero(); scheme.detector_count()];
    let frames = config
        .schedule
        .frame_times(delay)
        .into_iter()
        .enumerate()
        .map(|(index, time)| {
            let s = config.motion.displacement(time);
            let mut counts = Vec::with_capacity(mu.len());
            sample_frame_into(scheme, s, config.noise.nu, config.noise.b, &mut rng, &mut mu, &mut counts);
            FrameRecord { index, time, counts }
        })
        .collect();
    TrialResult {
        trial,
        seed: config.seed,
        delay,
        config: *config,
        scheme: scheme.clone(),
        frames,
    }
}

/// A single run; identical to trial 0 of an ensemble with the same seed.
pub fn run_trial<T: Real>(config: &TrialConfig<T>, scheme: &Scheme<T>) -> TrialResult<T> {
    simulate(config, scheme, 0)
}

/// Runs `trials` independent trials on at most `workers` threads (0 selects the
/// rayon default). Results are ordered by trial index.
pub fn run_ensemble<T: Real>(
    config: &TrialConfig<T>,
    scheme: &Scheme<T>,
    trials: usize,
    workers: usize,
) -> Result<Vec<TrialResult<T>>> {
    if trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    par_map_indexed(trials, workers, |i| simulate(config, scheme, i as u64))
}

/// Maps `f` over `0..n` on a dedicated pool, preserving index order.
pub fn par_map_indexed<U, F>(n: usize, workers: usize, f: F) -> Result<Vec<U>>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid("workers", e.to_string()))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::PixelArray;

    const FS: f64 = 20.0;

    fn config(seed: u64) -> TrialConfig<f64> {
        TrialConfig::new(
            MotionModel::sinusoid(0.47, 0.2, 0.0, FS).unwrap(),
            SamplingSchedule::new(50, FS).unwrap(),
            NoiseBudget::new(60.0, 0.0).unwrap(),
            seed,
        )
        .unwrap()
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    // Wilson-Hilferty upper quantile of chi-square with k dof at z standard normal.
    fn chi2_quantile(k: f64, z: f64) -> f64 {
        let c = 2.0 / (9.0 * k);
        k * (1.0 - c + z * c.sqrt()).powi(3)
    }

    fn chi2_poisson(draws: &[u64], lambda: f64) -> (f64, usize) {
        let kmax = *draws.iter().max().unwrap() as usize + 1;
        let mut hist = vec![0u64; kmax + 1];
        for &d in draws {
            hist[d as usize] += 1;
        }
        let n = draws.len() as f64;
        let mut pmf = (-lambda).exp();
        let mut cells: Vec<(f64, f64)> = Vec::new();
        let (mut obs, mut exp) = (0.0, 0.0);
        let mut cdf = 0.0;
        for (k, &h) in hist.iter().enumerate() {
            if k > 0 {
                pmf *= lambda / k as f64;
            }
            cdf += pmf;
            obs += h as f64;
            exp += n * pmf;
            if exp >= 5.0 {
                cells.push((obs, exp));
                obs = 0.0;
                exp = 0.0;
            }
        }
        let tail = n * (1.0 - cdf).max(0.0);
        let last = cells.last_mut().unwrap();
        last.0 += obs;
        last.1 += exp + tail;
        let stat = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
        (stat, cells.len() - 1)
    }

    #[test]
    fn pm_moments_at_origin() {
        let scheme = Scheme::pm_spade();
        let mut rng = trial_rng(7, 0);
        let draws: Vec<Vec<u64>> = (0..10_000)
            .map(|_| sample_frame(&scheme, 0.0, 60.0, 0.0, &mut rng))
            .collect();
        for j in 0..2 {
            let xs: Vec<f64> = draws.iter().map(|c| c[j] as f64).collect();
            let (m, _) = mean_var(&xs);
            let se = (30.0f64 / 10_000.0).sqrt();
            assert!((m - 30.0).abs() < 3.0 * se, "{m}");
        }
    }

    #[test]
    fn node_detector_stays_dark() {
        let scheme = Scheme::pm_spade();
        let mut rng = trial_rng(3, 0);
        for _ in 0..1000 {
            assert_eq!(sample_frame(&scheme, 2.0, 60.0, 0.0, &mut rng)[1], 0);
        }
    }

    #[test]
    fn variance_equals_mean() {
        let scheme = Scheme::hg_spade(5).unwrap();
        let mut rng = trial_rng(11, 0);
        let draws: Vec<Vec<u64>> = (0..100_000)
            .map(|_| sample_frame(&scheme, 1.0, 60.0, 2.0, &mut rng))
            .collect();
        for j in 0..3 {
            let xs: Vec<f64> = draws.iter().map(|c| c[j] as f64).collect();
            let (m, v) = mean_var(&xs);
            assert!((v / m - 1.0).abs() < 0.05, "detector {j}: mean {m} var {v}");
        }
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        let pm = Scheme::pm_spade();
        let hg = Scheme::hg_spade(21).unwrap();
        let di = Scheme::direct_imaging(PixelArray::for_motion(0.25, 0.0, 0.94).unwrap());
        let points: [(&Scheme<f64>, f64, f64, f64); 5] = [
            (&pm, 0.0, 60.0, 0.0),
            (&pm, 0.5, 60.0, 3.0),
            (&pm, 1.5, 60.0, 0.6),
            (&hg, 0.94, 60.0, 6.0),
            (&di, 0.3, 400.0, 0.5),
        ];
        for (p, &(scheme, s, nu, b)) in points.iter().enumerate() {
            let mut rng = trial_rng(100 + p as u64, 0);
            let lambdas = expected_counts(scheme, s, nu, b);
            let draws: Vec<Vec<u64>> = (0..100_000)
                .map(|_| sample_frame(scheme, s, nu, b, &mut rng))
                .collect();
            // the two most informative detectors plus a tail detector when present
            let mut order: Vec<usize> = (0..lambdas.len()).collect();
            order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap());
            for &j in order.iter().take(2) {
                let col: Vec<u64> = draws.iter().map(|c| c[j]).collect();
                let (stat, dof) = chi2_poisson(&col, lambdas[j]);
                let crit = chi2_quantile(dof as f64, 3.0902);
                assert!(stat < crit, "point {p} det {j}: chi2 {stat} > {crit} (dof {dof})");
            }
        }
    }

    #[test]
    fn expected_signal_bounded_by_nu() {
        let di = Scheme::direct_imaging(PixelArray::for_motion(0.05, 0.0, 0.94).unwrap());
        let hg = Scheme::hg_spade(60).unwrap();
        let pm = Scheme::pm_spade();
        for s in [0.0, 0.3, 0.94] {
            for (scheme, complete) in [(&di, true), (&hg, true), (&pm, false)] {
                let total: f64 = expected_counts(scheme, s, 60.0, 0.0).iter().sum();
                assert!(total <= 60.0 * (1.0 + 1e-12));
                if complete {
                    assert!((total - 60.0).abs() < 1e-6, "{} {s}: {total}", scheme.name());
                }
            }
        }
    }

    #[test]
    fn trial_times_and_determinism() {
        let cfg = config(42);
        let scheme = Scheme::pm_spade();
        let a = run_trial(&cfg, &scheme);
        assert_eq!(a.frames.len(), 50);
        assert_eq!(a.frames[49].time, 2.45);
        assert_eq!(a.delay, 0.0);
        let b = run_trial(&cfg, &scheme);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = run_trial(&config(43), &scheme);
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn jitter_shifts_all_frames_equally() {
        let mut cfg = config(5);
        cfg.schedule = cfg
            .schedule
            .with_jitter(crate::motion::DelayJitter::camera_trigger())
            .unwrap();
        let r = run_trial(&cfg, &Scheme::pm_spade());
        assert!(r.delay != 0.0);
        for f in &r.frames {
            assert!((f.time - (f.index as f64 / FS + r.delay)).abs() < 1e-15);
        }
    }

    #[test]
    fn ensemble_independent_of_worker_count() {
        let cfg = config(9);
        let scheme = Scheme::pm_spade();
        let seq = run_ensemble(&cfg, &scheme, 200, 1).unwrap();
        let par = run_ensemble(&cfg, &scheme, 200, 3).unwrap();
        assert_eq!(seq, par);
        for (i, t) in seq.iter().enumerate() {
            assert_eq!(t.trial, i as u64);
        }
        let one = run_ensemble(&cfg, &scheme, 1, 2).unwrap();
        assert_eq!(one, vec![run_trial(&cfg, &scheme)]);
        assert!(run_ensemble(&cfg, &scheme, 0, 1).is_err());
    }
}
