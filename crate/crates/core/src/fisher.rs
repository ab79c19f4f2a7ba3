//! Classical and quantum Fisher-information matrices over the trajectory
//! parameters, Cramér-Rao bounds, and the closed-form frequency bound.
//!
//! With lengths in units of `sigma`, the ideal quantum Fisher information is
//! `nu * sum_t grad s grad s^T`, the noisy one is that times `1/(1 + 2 b/nu)`,
//! and a concrete measurement gives `nu * sum_t gamma(s_t) grad s grad s^T`.
//! All sums run exactly over the frame times.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::modes::{gamma_ceiling, Scheme};
use crate::motion::{MotionModel, NoiseBudget, Param, SamplingSchedule};
use crate::scalar::Real;

/// Relative eigenvalue tolerance for Loewner comparisons.
pub const LOEWNER_TOL: f64 = 1e-9;

/// Symmetric Fisher matrix indexed by trajectory parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix<T> {
    pub params: Vec<Param>,
    /// Row-major `params.len() x params.len()` entries.
    pub values: Vec<T>,
}

impl<T: Real> FisherMatrix<T> {
    pub fn zeros(params: &[Param]) -> Self {
        let n = params.len();
        Self {
            params: params.to_vec(),
            values: vec![T::zero(); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.dim() + j]
    }

    /// Entry for a single-parameter matrix.
    pub fn scalar(&self) -> T {
        self.values[0]
    }

    fn add_outer(&mut self, weight: T, grad: &[T]) {
        let n = self.dim();
        for i in 0..n {
            let wi = weight * grad[i];
            for j in i..n {
                let v = self.values[i * n + j] + wi * grad[j];
                self.values[i * n + j] = v;
                self.values[j * n + i] = v;
            }
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            params: self.params.clone(),
            values: self.values.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn sum(&self, other: &Self) -> Self {
        assert_eq!(self.params, other.params, "parameter sets differ");
        Self {
            params: self.params.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn trace(&self) -> T {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_iterator(n, n, self.values.iter().map(|v| v.as_f64()))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.to_dmatrix())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// `self <= other` in the Loewner order, up to `-tol * trace(other)` on the
    /// smallest eigenvalue of the difference.
    pub fn loewner_le(&self, other: &Self, tol: f64) -> bool {
        assert_eq!(self.params, other.params, "parameter sets differ");
        let diff = other.to_dmatrix() - self.to_dmatrix();
        let min = SymmetricEigen::new(diff)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v));
        min >= -tol * other.trace().as_f64().abs()
    }

    /// Frobenius-norm relative difference `|self - other| / |other|`.
    pub fn relative_difference(&self, other: &Self) -> f64 {
        let num: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
            .sum();
        let den: f64 = other.values.iter().map(|b| b.as_f64().powi(2)).sum();
        (num / den).sqrt()
    }

    /// Diagonal of the inverse (Cramér-Rao variances); infinite when singular.
    pub fn inverse_diagonal(&self) -> Vec<T> {
        match self.to_dmatrix().try_inverse() {
            Some(inv) => (0..self.dim()).map(|i| T::lit(inv[(i, i)])).collect(),
            None => vec![T::infinity(); self.dim()],
        }
    }
}

fn validate_params(params: &[Param]) -> Result<()> {
    if params.is_empty() {
        return Err(invalid("params", "need at least one parameter"));
    }
    for (i, p) in params.iter().enumerate() {
        if params[..i].contains(p) {
            return Err(invalid("params", format!("{p:?} listed twice")));
        }
    }
    Ok(())
}

/// `sum_t weight(s(t)) grad s(t) grad s(t)^T`.
fn weighted_gradient_sum<T: Real>(
    model: &MotionModel<T>,
    times: &[T],
    params: &[Param],
    mut weight: impl FnMut(T) -> T,
) -> Result<FisherMatrix<T>> {
    validate_params(params)?;
    let mut acc = FisherMatrix::zeros(params);
    let mut grad = vec![T::zero(); params.len()];
    for &t in times {
        for (g, &p) in grad.iter_mut().zip(params) {
            *g = model.displacement_gradient(t, p)?;
        }
        acc.add_outer(weight(model.displacement(t)), &grad);
    }
    Ok(acc)
}

/// Ideal quantum Fisher information over explicit frame times.
pub fn qfi_ideal_at<T: Real>(
    model: &MotionModel<T>,
    times: &[T],
    nu: T,
    params: &[Param],
) -> Result<FisherMatrix<T>> {
    Ok(weighted_gradient_sum(model, times, params, |_| T::one())?.scaled(nu))
}

pub fn qfi_ideal<T: Real>(
    model: &MotionModel<T>,
    schedule: &SamplingSchedule<T>,
    nu: T,
    params: &[Param],
) -> Result<FisherMatrix<T>> {
    qfi_ideal_at(model, &schedule.nominal_times(), nu, params)
}

/// Quantum Fisher information under uniform background `b` per detector.
pub fn qfi_noisy<T: Real>(
    model: &MotionModel<T>,
    schedule: &SamplingSchedule<T>,
    noise: NoiseBudget<T>,
    params: &[Param],
) -> Result<FisherMatrix<T>> {
    Ok(qfi_ideal(model, schedule, noise.nu, params)?.scaled(gamma_ceiling(noise.ratio())))
}

/// Classical Fisher information of `scheme` over explicit frame times.
pub fn cfi_at<T: Real>(
    model: &MotionModel<T>,
    times: &[T],
    scheme: &Scheme<T>,
    noise: NoiseBudget<T>,
    params: &[Param],
) -> Result<FisherMatrix<T>> {
    let beta = noise.ratio();
    Ok(weighted_gradient_sum(model, times, params, |s| scheme.gamma(s, beta))?.scaled(noise.nu))
}

pub fn cfi<T: Real>(
    model: &MotionModel<T>,
    schedule: &SamplingSchedule<T>,
    scheme: &Scheme<T>,
    noise: NoiseBudget<T>,
    params: &[Param],
) -> Result<FisherMatrix<T>> {
    cfi_at(model, &schedule.nominal_times(), scheme, noise, params)
}

/// Which closed-form frequency bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundWaveform {
    /// Sinusoid of amplitude `A`: `3 sigma^2 / (pi^2 A^2 N(N-1)(2N-1) nu)`.
    Sinusoid,
    /// First harmonic `(4A/pi)` of a square wave of amplitude `A`:
    /// `3 sigma^2 / (16 A^2 N(N-1)(2N-1) nu)`.
    SquareWaveFundamental,
}

/// `N (N-1) (2N-1)`, i.e. six times the sum of squares `0..N-1`.
pub fn sum_of_squares_factor(frames: usize) -> u128 {
    let n = frames as u128;
    n * (n - 1) * (2 * n - 1)
}

/// Approximate quantum Cramér-Rao bound on `Var(f_hat)` (not rescaled by `nu`).
pub fn qcrb_frequency<T: Real>(
    amplitude: T,
    frames: usize,
    nu: T,
    sigma: T,
    waveform: BoundWaveform,
) -> Result<T> {
    if frames < 2 {
        return Err(invalid("frames", "need at least 2 frames"));
    }
    if !(amplitude > T::zero()) {
        return Err(invalid("amplitude", "must be positive"));
    }
    if !(nu > T::zero()) {
        return Err(invalid("nu", "must be positive"));
    }
    let factor = T::from_u128(sum_of_squares_factor(frames)).unwrap();
    let three_sigma2 = T::lit(3.0) * sigma * sigma;
    let a2 = amplitude * amplitude;
    let denom = match waveform {
        BoundWaveform::Sinusoid => T::PI() * T::PI() * a2 * factor * nu,
        BoundWaveform::SquareWaveFundamental => T::lit(16.0) * a2 * factor * nu,
    };
    Ok(three_sigma2 / denom)
}

/// Large-`N` closed form of the sinusoid's frequency QFI, `nu pi^2 A^2 N(N-1)(2N-1) / 3`.
pub fn sinusoid_frequency_qfi_closed_form<T: Real>(amplitude: T, frames: usize, nu: T) -> T {
    let factor = T::from_u128(sum_of_squares_factor(frames)).unwrap();
    nu * T::PI() * T::PI() * amplitude * amplitude * factor / T::lit(3.0)
}

/// Fisher matrices, bounds and per-frame `gamma` values for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport<T> {
    pub cfi: FisherMatrix<T>,
    pub qfi_ideal: FisherMatrix<T>,
    pub qfi_noisy: FisherMatrix<T>,
    pub crb_diag: Vec<T>,
    pub qcrb_diag: Vec<T>,
    /// `gamma(t_n)` for each nominal frame time.
    pub gamma_trace: Vec<T>,
}

pub fn fisher_report<T: Real>(
    model: &MotionModel<T>,
    schedule: &SamplingSchedule<T>,
    scheme: &Scheme<T>,
    noise: NoiseBudget<T>,
    params: &[Param],
) -> Result<FisherReport<T>> {
    let cfi = cfi(model, schedule, scheme, noise, params)?;
    let qfi_ideal = qfi_ideal(model, schedule, noise.nu, params)?;
    let qfi_noisy = qfi_noisy(model, schedule, noise, params)?;
    let beta = noise.ratio();
    let gamma_trace = schedule
        .nominal_times()
        .into_iter()
        .map(|t| scheme.gamma(model.displacement(t), beta))
        .collect();
    Ok(FisherReport {
        crb_diag: cfi.inverse_diagonal(),
        qcrb_diag: qfi_noisy.inverse_diagonal(),
        cfi,
        qfi_ideal,
        qfi_noisy,
        gamma_trace,
    })
}
