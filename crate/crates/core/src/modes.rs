//! Detector probabilities `mu_j(s)` for direct imaging and mode-sorting
//! measurements, their displacement derivatives, and the information density
//! `gamma(s, b/nu) = sum_j (d mu_j / ds)^2 / (mu_j + b/nu)`.
//!
//! All lengths are in units of `sigma`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::special::{erfc, normal_pdf};

/// Quotients with a denominator at or below this are treated as zero.
const ZERO_RATE: f64 = 1e-300;

/// Contiguous row of camera pixels of width `pitch`; pixel `k` spans
/// `[k a - a/2, k a + a/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelArray<T> {
    pub pitch: T,
    pub k_min: i64,
    pub k_max: i64,
}

impl<T: Real> PixelArray<T> {
    pub fn new(pitch: T, k_min: i64, k_max: i64) -> Result<Self> {
        if !(pitch > T::zero()) || !pitch.is_finite() {
            return Err(invalid("pitch", "pixel size must be positive"));
        }
        if k_max < k_min {
            return Err(invalid("pixel range", "k_max < k_min"));
        }
        Ok(Self { pitch, k_min, k_max })
    }

    /// Pixels whose centres span `[lo - margin, hi + margin]`.
    pub fn covering(pitch: T, lo: T, hi: T, margin: T) -> Result<Self> {
        if !(pitch > T::zero()) {
            return Err(invalid("pitch", "pixel size must be positive"));
        }
        let k_min = ((lo - margin) / pitch).floor().to_i64().unwrap_or(i64::MIN / 4);
        let k_max = ((hi + margin) / pitch).ceil().to_i64().unwrap_or(i64::MAX / 4);
        Self::new(pitch, k_min, k_max)
    }

    /// Default coverage for a trajectory in `[lo, hi]`: six widths either side.
    pub fn for_motion(pitch: T, lo: T, hi: T) -> Result<Self> {
        Self::covering(pitch, lo, hi, T::lit(6.0))
    }

    pub fn len(&self) -> usize {
        (self.k_max - self.k_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn centre(&self, index: usize) -> T {
        T::from_i64(self.k_min + index as i64).unwrap() * self.pitch
    }

    /// Probability that a photon from a source at `s` falls inside `[lo, hi]`,
    /// evaluated on the side of the source that avoids cancellation.
    fn bin_probability(s: T, lo: T, hi: T) -> T {
        let half = T::lit(0.5);
        let r2 = T::SQRT_2();
        if lo >= s {
            // both edges in the upper tail
            half * erfc((lo - s) / r2) - half * erfc((hi - s) / r2)
        } else if hi <= s {
            half * erfc((s - hi) / r2) - half * erfc((s - lo) / r2)
        } else {
            T::one() - half * erfc((hi - s) / r2) - half * erfc((s - lo) / r2)
        }
    }
}

/// Measurement applied to every frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scheme<T> {
    /// Pixelated camera in the image plane.
    DirectImaging(PixelArray<T>),
    /// Photon counting in the first `modes` Hermite-Gaussian modes.
    HgSpade { modes: usize },
    /// Photon counting in `(phi_0 + phi_1)/sqrt2` and `(phi_0 - phi_1)/sqrt2`.
    PmSpade,
}

impl<T: Real> Scheme<T> {
    pub fn direct_imaging(pixels: PixelArray<T>) -> Self {
        Scheme::DirectImaging(pixels)
    }

    pub fn hg_spade(modes: usize) -> Result<Self> {
        if modes < 2 {
            return Err(invalid("modes", "HG-SPADE needs at least 2 modes"));
        }
        Ok(Scheme::HgSpade { modes })
    }

    pub fn pm_spade() -> Self {
        Scheme::PmSpade
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::DirectImaging(_) => "di",
            Scheme::HgSpade { .. } => "hg",
            Scheme::PmSpade => "pm",
        }
    }

    pub fn detector_count(&self) -> usize {
        match self {
            Scheme::DirectImaging(p) => p.len(),
            Scheme::HgSpade { modes } => *modes,
            Scheme::PmSpade => 2,
        }
    }

    /// Whether `mu_j(s)` is even in `s`, making the sign of the displacement
    /// unobservable.
    pub fn is_parity_blind(&self) -> bool {
        matches!(self, Scheme::HgSpade { .. })
    }

    /// Mode overlaps `c_j(s) = <phi_j | psi_s>` and `dc_j/ds` for the
    /// mode-sorting schemes, with `mu_j = c_j^2`.
    fn amplitudes_into(&self, s: T, c: &mut [T], dc: &mut [T]) {
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        let envelope = (-(s * s) / T::lit(8.0)).exp();
        match self {
            Scheme::HgSpade { modes } => {
                // c_q = e^{-s^2/8} (s/2)^q / sqrt(q!)
                let x = s * half;
                c[0] = envelope;
                for q in 1..*modes {
                    c[q] = c[q - 1] * x / T::from_usize_lossy(q).sqrt();
                }
                // dc_q = sqrt(q)/2 c_{q-1} - s/4 c_q
                dc[0] = -s * quarter * c[0];
                for q in 1..*modes {
                    dc[q] = half * T::from_usize_lossy(q).sqrt() * c[q - 1] - s * quarter * c[q];
                }
            }
            Scheme::PmSpade => {
                let g = envelope / T::SQRT_2();
                let x = s * half;
                c[0] = (x + T::one()) * g;
                c[1] = (x - T::one()) * g;
                dc[0] = half * g - s * quarter * c[0];
                dc[1] = half * g - s * quarter * c[1];
            }
            Scheme::DirectImaging(_) => unreachable!("direct imaging has no mode amplitudes"),
        }
    }

    /// Detection probabilities for a source at displacement `s`.
    pub fn mu(&self, s: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.detector_count()];
        self.mu_into(s, &mut out);
        out
    }

    pub fn mu_into(&self, s: T, out: &mut [T]) {
        match self {
            Scheme::DirectImaging(p) => {
                let half = p.pitch * T::lit(0.5);
                for (i, o) in out.iter_mut().enumerate() {
                    let centre = p.centre(i);
                    *o = PixelArray::bin_probability(s, centre - half, centre + half)
                        .max(T::zero());
                }
            }
            _ => {
                let n = self.detector_count();
                let mut dc = vec![T::zero(); n];
                self.amplitudes_into(s, out, &mut dc);
                for o in out.iter_mut() {
                    *o = *o * *o;
                }
            }
        }
    }

    /// `mu_j(s)` for the detectors in `indices`, written to `out`; returns the
    /// total probability over all detectors. Direct imaging evaluates only the
    /// requested pixels.
    pub fn mu_sparse(&self, s: T, indices: &[usize], out: &mut [T]) -> T {
        match self {
            Scheme::DirectImaging(p) => {
                let half = p.pitch * T::lit(0.5);
                for (o, &i) in out.iter_mut().zip(indices) {
                    let centre = p.centre(i);
                    *o = PixelArray::bin_probability(s, centre - half, centre + half).max(T::zero());
                }
                PixelArray::bin_probability(s, p.centre(0) - half, p.centre(p.len() - 1) + half)
            }
            _ => {
                let mu = self.mu(s);
                for (o, &i) in out.iter_mut().zip(indices) {
                    *o = mu[i];
                }
                mu.into_iter().sum()
            }
        }
    }

    /// `d mu_j / ds`.
    pub fn mu_gradient(&self, s: T) -> Vec<T> {
        let n = self.detector_count();
        let mut out = vec![T::zero(); n];
        match self {
            Scheme::DirectImaging(p) => {
                let half = p.pitch * T::lit(0.5);
                for (i, o) in out.iter_mut().enumerate() {
                    let centre = p.centre(i);
                    *o = normal_pdf(centre - half - s) - normal_pdf(centre + half - s);
                }
            }
            _ => {
                let mut c = vec![T::zero(); n];
                self.amplitudes_into(s, &mut c, &mut out);
                for (o, cj) in out.iter_mut().zip(&c) {
                    *o = T::lit(2.0) * *cj * *o;
                }
            }
        }
        out
    }

    /// Information density `gamma` (units 1/sigma^2) at displacement `s`
    /// with background-to-signal ratio `b_over_nu`.
    ///
    /// For the mode-sorting schemes each term is written through the mode
    /// amplitude, `(d mu)^2 / (mu + beta) = 4 c'^2 c^2 / (c^2 + beta)`, which
    /// takes its exact limit `4 c'^2` at nodes of `c` when `beta = 0`.
    pub fn gamma(&self, s: T, b_over_nu: T) -> T {
        match self {
            Scheme::DirectImaging(_) => {
                let mu = self.mu(s);
                let dmu = self.mu_gradient(s);
                mu.iter()
                    .zip(&dmu)
                    .map(|(&m, &d)| {
                        let denom = m + b_over_nu;
                        if denom <= T::lit(ZERO_RATE) {
                            T::zero()
                        } else {
                            d * d / denom
                        }
                    })
                    .sum()
            }
            _ => {
                let n = self.detector_count();
                let mut c = vec![T::zero(); n];
                let mut dc = vec![T::zero(); n];
                self.amplitudes_into(s, &mut c, &mut dc);
                let four = T::lit(4.0);
                c.iter()
                    .zip(&dc)
                    .map(|(&cj, &dj)| {
                        if b_over_nu == T::zero() {
                            four * dj * dj
                        } else {
                            let c2 = cj * cj;
                            four * dj * dj * c2 / (c2 + b_over_nu)
                        }
                    })
                    .sum()
            }
        }
    }

    /// `gamma` with explicit photon budget: `b` background per detector, `nu` signal photons.
    pub fn gamma_with_budget(&self, s: T, b: T, nu: T) -> T {
        self.gamma(s, b / nu)
    }
}

/// Closed form of `gamma` for PM-SPADE without background.
pub fn pm_gamma_noiseless<T: Real>(s: T) -> T {
    let x2 = s * s / T::lit(4.0);
    (T::one() - x2 + x2 * x2) * (-x2).exp()
}

/// Ceiling on `gamma` imposed by the noisy quantum Fisher information, `1/(1 + 2 b/nu)`.
pub fn gamma_ceiling<T: Real>(b_over_nu: T) -> T {
    T::one() / (T::one() + T::lit(2.0) * b_over_nu)
}
