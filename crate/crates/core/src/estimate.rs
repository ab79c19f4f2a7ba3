//! Two-stage frequency estimation: a per-frame maximum-likelihood displacement
//! followed by a least-squares sinusoid fit across frames.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::modes::Scheme;
use crate::motion::{MotionModel, SamplingSchedule};
use crate::scalar::Real;
use crate::sim::{par_map_indexed, FrameRecord, TrialConfig, TrialResult};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Bounded interval and coarse grid for the displacement search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchInterval<T> {
    pub lo: T,
    pub hi: T,
    pub grid: usize,
    /// Refinement stops once the bracket is narrower than this.
    pub tol: T,
}

impl<T: Real> SearchInterval<T> {
    pub fn new(lo: T, hi: T, grid: usize, tol: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("search", "need finite lo < hi"));
        }
        if grid < 3 {
            return Err(invalid("search.grid", "need at least 3 grid points"));
        }
        if !(tol > T::zero()) {
            return Err(invalid("search.tol", "must be positive"));
        }
        Ok(Self { lo, hi, grid, tol })
    }

    /// `[s_min - sigma, s_max + sigma]` with 400 grid points and `1e-4` tolerance.
    /// Parity-blind schemes cannot tell `s` from `-s`, so the search starts at 0.
    pub fn for_motion(motion: &MotionModel<T>, scheme: &Scheme<T>) -> Self {
        let mut lo = motion.min_displacement() - T::one();
        if scheme.is_parity_blind() {
            lo = lo.max(T::zero());
        }
        Self {
            lo,
            hi: motion.max_displacement() + T::one(),
            grid: 400,
            tol: T::lit(1e-4),
        }
    }

    pub fn step(&self) -> T {
        (self.hi - self.lo) / T::from_usize_lossy(self.grid - 1)
    }

    pub fn point(&self, i: usize) -> T {
        if i + 1 == self.grid {
            self.hi
        } else {
            self.lo + self.step() * T::from_usize_lossy(i)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementEstimate<T> {
    pub frame: usize,
    pub s_hat: T,
    pub log_likelihood: T,
    /// The frame carried no usable information (no counts, or a flat likelihood).
    pub flagged: bool,
}

/// Poisson log-likelihood `sum_j m_j ln(lambda_j) - lambda_j`, dropping the
/// count-only `ln m_j!` term. `0 ln 0` is taken as 0.
pub fn log_likelihood<T: Real>(counts: &[u64], expected: &[T]) -> T {
    counts
        .iter()
        .zip(expected)
        .map(|(&m, &lambda)| {
            if m == 0 {
                -lambda
            } else if lambda <= T::zero() {
                T::neg_infinity()
            } else {
                T::from_u64(m).unwrap() * lambda.ln() - lambda
            }
        })
        .sum()
}

/// Per-frame displacement MLE for one scheme and photon budget.
///
/// Rates on the coarse grid are tabulated once, so a frame costs one pass over
/// its nonzero counts per grid point plus a short golden-section refinement.
#[derive(Debug, Clone)]
pub struct DisplacementMle<T> {
    scheme: Scheme<T>,
    nu: T,
    b: T,
    search: SearchInterval<T>,
    detectors: usize,
    /// `ln lambda_j(s_i)`, row-major by grid point.
    log_rates: Vec<T>,
    /// `sum_j lambda_j(s_i)`.
    totals: Vec<T>,
}

impl<T: Real> DisplacementMle<T> {
    pub fn new(scheme: &Scheme<T>, nu: T, b: T, search: SearchInterval<T>) -> Result<Self> {
        let search = SearchInterval::new(search.lo, search.hi, search.grid, search.tol)?;
        if !(nu > T::zero()) || !(b >= T::zero()) {
            return Err(invalid("noise", "need nu > 0 and b >= 0"));
        }
        let detectors = scheme.detector_count();
        let mut log_rates = Vec::with_capacity(search.grid * detectors);
        let mut totals = Vec::with_capacity(search.grid);
        let mut mu = vec![T::zero(); detectors];
        for i in 0..search.grid {
            scheme.mu_into(search.point(i), &mut mu);
            let mut total = T::zero();
            for &m in &mu {
                let lambda = nu * m + b;
                total = total + lambda;
                log_rates.push(lambda.ln());
            }
            totals.push(total);
        }
        Ok(Self {
            scheme: scheme.clone(),
            nu,
            b,
            search,
            detectors,
            log_rates,
            totals,
        })
    }

    pub fn search(&self) -> &SearchInterval<T> {
        &self.search
    }

    /// Log-likelihood of `counts` at an arbitrary displacement.
    pub fn log_likelihood_at(&self, counts: &[u64], s: T) -> T {
        let expected: Vec<T> = self
            .scheme
            .mu(s)
            .into_iter()
            .map(|m| self.nu * m + self.b)
            .collect();
        log_likelihood(counts, &expected)
    }

    /// Log-likelihood from the nonzero counts only.
    fn sparse_log_likelihood(&self, nonzero: &[(usize, T)], indices: &[usize], buf: &mut [T], s: T) -> T {
        let total = self.scheme.mu_sparse(s, indices, buf);
        let mut acc = -(self.nu * total + self.b * T::from_usize_lossy(self.detectors));
        for (&(_, m), &mu) in nonzero.iter().zip(buf.iter()) {
            let lambda = self.nu * mu + self.b;
            if lambda <= T::zero() {
                return T::neg_infinity();
            }
            acc = acc + m * lambda.ln();
        }
        acc
    }

    fn grid_log_likelihood(&self, nonzero: &[(usize, T)], i: usize) -> T {
        let row = &self.log_rates[i * self.detectors..(i + 1) * self.detectors];
        let mut acc = -self.totals[i];
        for &(j, m) in nonzero {
            acc = acc + m * row[j];
        }
        if acc.is_nan() {
            T::neg_infinity()
        } else {
            acc
        }
    }

    pub fn estimate(&self, frame: &FrameRecord<T>) -> Result<DisplacementEstimate<T>> {
        self.estimate_counts(frame.index, &frame.counts)
    }

    pub fn estimate_counts(&self, index: usize, counts: &[u64]) -> Result<DisplacementEstimate<T>> {
        if counts.len() != self.detectors {
            return Err(Error::RejectedInput(format!(
                "frame {index} has {} counts, scheme has {} detectors",
                counts.len(),
                self.detectors
            )));
        }
        let nonzero: Vec<(usize, T)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0)
            .map(|(j, &m)| (j, T::from_u64(m).unwrap()))
            .collect();

        // Strict comparison keeps the smallest s among equal maxima.
        let mut best = 0;
        let mut best_ll = T::neg_infinity();
        let mut worst_ll = T::infinity();
        for i in 0..self.search.grid {
            let ll = self.grid_log_likelihood(&nonzero, i);
            if ll > best_ll {
                best = i;
                best_ll = ll;
            }
            worst_ll = worst_ll.min(ll);
        }
        let scale = T::one() + best_ll.abs();
        let flat = best_ll.is_finite() && (best_ll - worst_ll) <= T::lit(1e-12) * scale;
        let flagged = nonzero.is_empty() || flat || !best_ll.is_finite();
        if flagged {
            return Ok(DisplacementEstimate {
                frame: index,
                s_hat: self.search.point(best),
                log_likelihood: best_ll,
                flagged: true,
            });
        }

        let a = self.search.point(best.saturating_sub(1));
        let b = self.search.point((best + 1).min(self.search.grid - 1));
        let indices: Vec<usize> = nonzero.iter().map(|&(j, _)| j).collect();
        let mut buf = vec![T::zero(); indices.len()];
        let (s, ll) = golden_maximize(
            |s| self.sparse_log_likelihood(&nonzero, &indices, &mut buf, s),
            a,
            b,
            self.search.tol,
        );
        let (s_hat, log_likelihood) = if ll >= best_ll {
            (s, ll)
        } else {
            (self.search.point(best), best_ll)
        };
        Ok(DisplacementEstimate {
            frame: index,
            s_hat,
            log_likelihood,
            flagged: false,
        })
    }
}

/// Convenience wrapper around [`DisplacementMle`] for a single frame.
pub fn mle_displacement<T: Real>(
    frame: &FrameRecord<T>,
    scheme: &Scheme<T>,
    nu: T,
    b: T,
    search: SearchInterval<T>,
) -> Result<DisplacementEstimate<T>> {
    DisplacementMle::new(scheme, nu, b, search)?.estimate(frame)
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
fn golden_maximize<T: Real>(mut f: impl FnMut(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T) {
    let r = T::lit(INV_PHI);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) * T::lit(0.5);
    let fx = f(x);
    [(c, fc), (d, fd), (x, fx)]
        .into_iter()
        .fold((x, fx), |acc, p| if p.1 > acc.1 { p } else { acc })
}

/// Brent's minimizer (parabolic steps with golden-section fallback) on `[a, b]`.
fn brent_minimize<T: Real>(mut f: impl FnMut(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T) {
    let cgold = T::one() - T::lit(INV_PHI);
    let half = T::lit(0.5);
    let eps = T::epsilon().sqrt();
    let mut x = a + cgold * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (T::zero(), T::zero());
    for _ in 0..200 {
        let m = half * (a + b);
        let tol1 = eps * x.abs() + tol / T::lit(3.0);
        let tol2 = tol1 + tol1;
        if (x - m).abs() <= tol2 - half * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = (q - r) + (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (half * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = cgold * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > T::zero() {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LseOptions<T> {
    pub lo: T,
    pub hi: T,
    /// Grid spacing; `None` means `1 / (40 N)`.
    pub spacing: Option<T>,
    pub tol: T,
    /// Also fit the phase (profiled per frequency). Off reproduces the
    /// fixed-phase protocol.
    pub fit_phase: bool,
}

impl<T: Real> Default for LseOptions<T> {
    fn default() -> Self {
        Self {
            lo: T::lit(0.02),
            hi: T::lit(0.48),
            spacing: None,
            tol: T::lit(1e-10),
            fit_phase: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate<T> {
    pub f_hat: T,
    pub phase: T,
    /// Residual sum of squares at the optimum.
    pub rss: T,
    /// Degenerate input (constant displacement estimates) or a flat objective.
    pub flagged: bool,
}

fn residual_sum<T: Real>(s_hats: &[T], times: &[T], model: &MotionModel<T>) -> T {
    s_hats
        .iter()
        .zip(times)
        .map(|(&s, &t)| {
            let r = s - model.displacement(t);
            r * r
        })
        .sum()
}

/// Least-squares fit of the template's frequency to displacement estimates at
/// the schedule's nominal frame times. The template fixes amplitude, offset
/// and (unless `fit_phase`) phase.
pub fn lse_frequency<T: Real>(
    s_hats: &[T],
    schedule: &SamplingSchedule<T>,
    template: &MotionModel<T>,
    options: &LseOptions<T>,
) -> Result<FrequencyEstimate<T>> {
    if s_hats.is_empty() {
        return Err(Error::RejectedInput("no displacement estimates".into()));
    }
    if s_hats.iter().any(|s| !s.is_finite()) {
        return Err(Error::RejectedInput("non-finite displacement estimate".into()));
    }
    if s_hats.len() != schedule.frames {
        return Err(Error::RejectedInput(format!(
            "{} estimates for {} frames",
            s_hats.len(),
            schedule.frames
        )));
    }
    if s_hats.len() < 4 {
        return Err(invalid("frames", "need at least 4 frames for a frequency fit"));
    }
    if !(options.lo > T::zero() && options.lo < options.hi && options.hi < T::lit(0.5)) {
        return Err(invalid("lse", "need 0 < lo < hi < 0.5"));
    }
    let times = schedule.nominal_times();
    let n = T::from_usize_lossy(s_hats.len());
    let spacing = options
        .spacing
        .unwrap_or_else(|| T::one() / (T::lit(40.0) * n));
    if !(spacing > T::zero()) {
        return Err(invalid("lse.spacing", "must be positive"));
    }

    let objective = |f: T, phase: T| {
        let mut m = *template;
        m.frequency = f;
        m.phase = phase;
        residual_sum(s_hats, &times, &m)
    };
    let profile = |f: T| -> (T, T) {
        if options.fit_phase {
            best_phase(|p| objective(f, p))
        } else {
            (objective(f, template.phase), template.phase)
        }
    };

    let cells = ((options.hi - options.lo) / spacing).ceil().to_usize().unwrap_or(1).max(2);
    let step = (options.hi - options.lo) / T::from_usize_lossy(cells);
    let grid: Vec<(T, T, T)> = (0..=cells)
        .map(|i| {
            let f = options.lo + step * T::from_usize_lossy(i);
            let (v, p) = profile(f);
            (f, v, p)
        })
        .collect();
    let (ibest, &(fg, vg, pg)) = grid
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &(T, T, T))>, (i, g)| match acc {
            Some((_, b)) if b.1 <= g.1 => acc,
            _ => Some((i, g)),
        })
        .expect("non-empty grid");
    let vmax = grid.iter().map(|g| g.1).fold(T::neg_infinity(), T::max);

    let mean = s_hats.iter().copied().sum::<T>() / n;
    let spread = s_hats.iter().map(|&s| (s - mean).abs()).fold(T::zero(), T::max);
    let constant_data = spread <= T::lit(1e-12) * (T::one() + mean.abs());
    let flat = (vmax - vg) <= T::lit(1e-12) * (T::one() + vg.abs());

    let a = grid[ibest.saturating_sub(1)].0;
    let b = grid[(ibest + 1).min(cells)].0;
    let (f_ref, v_ref) = brent_minimize(|f| profile(f).0, a, b, options.tol);
    let (f_hat, rss, phase) = if v_ref <= vg {
        (f_ref, v_ref, profile(f_ref).1)
    } else {
        (fg, vg, pg)
    };
    Ok(FrequencyEstimate {
        f_hat,
        phase,
        rss,
        flagged: constant_data || flat,
    })
}

/// Phase minimizing `g` over one period: 64-point scan then Brent.
fn best_phase<T: Real>(g: impl Fn(T) -> T) -> (T, T) {
    let m = 64;
    let step = T::TAU() / T::from_usize_lossy(m);
    let (ib, _) = (0..m)
        .map(|i| g(-T::PI() + step * T::from_usize_lossy(i)))
        .enumerate()
        .fold((0, T::infinity()), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let centre = -T::PI() + step * T::from_usize_lossy(ib);
    let (p, v) = brent_minimize(&g, centre - step, centre + step, T::lit(1e-10));
    (v, p)
}

/// Sample moments of an ensemble of estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats<T> {
    /// Estimates entering the statistics.
    pub count: usize,
    /// Estimates excluded as degenerate.
    pub flagged: usize,
    pub mean: T,
    /// Unbiased sample variance.
    pub variance: T,
    /// `nu * variance`.
    pub rescaled_variance: T,
    /// Standard error of the mean.
    pub se_mean: T,
    /// Standard error of the sample variance.
    pub se_variance: T,
}

/// Mean, unbiased variance and `nu`-rescaled variance. Variance-type fields
/// are NaN with fewer than two values.
pub fn ensemble_stats<T: Real>(values: &[T], nu: T) -> EnsembleStats<T> {
    let n = values.len();
    let nf = T::from_usize_lossy(n);
    let mean = if n == 0 {
        T::nan()
    } else {
        values.iter().copied().sum::<T>() / nf
    };
    let (variance, se_mean, se_variance) = if n < 2 {
        (T::nan(), T::nan(), T::nan())
    } else {
        let m2 = values.iter().map(|&v| (v - mean).powi(2)).sum::<T>() / nf;
        let m4 = values.iter().map(|&v| (v - mean).powi(4)).sum::<T>() / nf;
        let var = m2 * nf / (nf - T::one());
        // Var(s^2) = (mu4 - sigma^4 (n-3)/(n-1)) / n
        let three = T::lit(3.0);
        let var_of_var = (m4 - var * var * (nf - three) / (nf - T::one())) / nf;
        (var, (var / nf).sqrt(), var_of_var.max(T::zero()).sqrt())
    };
    EnsembleStats {
        count: n,
        flagged: 0,
        mean,
        variance,
        rescaled_variance: variance * nu,
        se_mean,
        se_variance: se_variance * nu,
    }
}

/// [`ensemble_stats`] over unflagged estimates, counting the rest.
pub fn summarize<T: Real>(estimates: &[FrequencyEstimate<T>], nu: T) -> EnsembleStats<T> {
    let kept: Vec<T> = estimates.iter().filter(|e| !e.flagged).map(|e| e.f_hat).collect();
    let mut stats = ensemble_stats(&kept, nu);
    stats.flagged = estimates.len() - kept.len();
    stats
}

/// Result of running both estimation stages on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEstimate<T> {
    pub trial: u64,
    pub displacements: Vec<DisplacementEstimate<T>>,
    pub frequency: FrequencyEstimate<T>,
}

impl<T> TrialEstimate<T> {
    pub fn flagged_frames(&self) -> usize {
        self.displacements.iter().filter(|d| d.flagged).count()
    }
}

/// Simulation plus estimation for a fixed scheme, motion and fit template.
#[derive(Debug, Clone)]
pub struct Pipeline<T> {
    pub config: TrialConfig<T>,
    pub scheme: Scheme<T>,
    pub template: MotionModel<T>,
    pub lse: LseOptions<T>,
    mle: DisplacementMle<T>,
}

impl<T: Real> Pipeline<T> {
    /// The MLE search defaults to [`SearchInterval::for_motion`] of the template.
    pub fn new(
        config: TrialConfig<T>,
        scheme: Scheme<T>,
        template: MotionModel<T>,
        search: Option<SearchInterval<T>>,
        lse: LseOptions<T>,
    ) -> Result<Self> {
        let search = search.unwrap_or_else(|| {
            let mut s = SearchInterval::for_motion(&template, &scheme);
            s.lo = s.lo.min(config.motion.min_displacement() - T::one()).max(
                if scheme.is_parity_blind() { T::zero() } else { T::neg_infinity() },
            );
            s.hi = s.hi.max(config.motion.max_displacement() + T::one());
            s
        });
        let mle = DisplacementMle::new(&scheme, config.noise.nu, config.noise.b, search)?;
        Ok(Self {
            config,
            scheme,
            template: template.validated()?,
            lse,
            mle,
        })
    }

    pub fn mle(&self) -> &DisplacementMle<T> {
        &self.mle
    }

    pub fn estimate_trial(&self, trial: &TrialResult<T>) -> Result<TrialEstimate<T>> {
        let displacements = trial
            .frames
            .iter()
            .map(|f| self.mle.estimate(f))
            .collect::<Result<Vec<_>>>()?;
        let s_hats: Vec<T> = displacements.iter().map(|d| d.s_hat).collect();
        let frequency = lse_frequency(&s_hats, &self.config.schedule, &self.template, &self.lse)?;
        Ok(TrialEstimate {
            trial: trial.trial,
            displacements,
            frequency,
        })
    }

    /// Simulates and estimates `trials` trials; order follows the trial index.
    pub fn run(&self, trials: usize, workers: usize) -> Result<Vec<TrialEstimate<T>>> {
        if trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        par_map_indexed(trials, workers, |i| {
            let trial = crate::sim::simulate(&self.config, &self.scheme, i as u64);
            self.estimate_trial(&trial)
        })?
        .into_iter()
        .collect()
    }

    pub fn summarize(&self, estimates: &[TrialEstimate<T>]) -> EnsembleStats<T> {
        let f: Vec<FrequencyEstimate<T>> = estimates.iter().map(|e| e.frequency).collect();
        summarize(&f, self.config.noise.nu)
    }
}
