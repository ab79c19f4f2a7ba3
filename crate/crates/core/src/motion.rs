//! Unit conventions, point-source trajectories, sampling schedules and noise
//! budgets.
//!
//! Lengths are expressed in units of the PSF width `sigma`; the physical width
//! lives only on [`Psf`] for conversion at the I/O boundary. Times are in
//! seconds and the oscillation frequency is carried in dimensionless form
//! `f = f_o / f_s`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Gaussian point-spread function `psi(x) = (2 pi sigma^2)^{-1/4} exp(-x^2 / 4 sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psf<T> {
    /// Physical width in micrometres (reporting only).
    pub sigma_um: T,
}

impl<T: Real> Psf<T> {
    pub fn new(sigma_um: T) -> Result<Self> {
        if !(sigma_um > T::zero()) || !sigma_um.is_finite() {
            return Err(invalid("sigma", "must be positive and finite"));
        }
        Ok(Self { sigma_um })
    }

    /// Physical length to sigma units.
    pub fn to_sigma_units(&self, length_um: T) -> T {
        length_um / self.sigma_um
    }

    pub fn to_micrometres(&self, length_sigma: T) -> T {
        length_sigma * self.sigma_um
    }

    /// Normalized amplitude PSF at `x` (sigma units).
    pub fn amplitude(x: T) -> T {
        T::TAU().powf(T::lit(-0.25)) * (-(x * x) / T::lit(4.0)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Waveform {
    Sinusoid,
    SquareWave,
    Constant,
}

/// Trajectory parameter with respect to which Fisher information is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Param {
    Amplitude,
    Frequency,
    Phase,
}

/// Offset of the trajectory's centre line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Offset<T> {
    /// Offset equals the amplitude, so the minimum of the motion sits at the origin.
    Amplitude,
    Fixed(T),
}

/// One-dimensional displacement `s(t)` of the point source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel<T> {
    pub kind: Waveform,
    /// `A`, in sigma units.
    pub amplitude: T,
    /// Dimensionless frequency `f = f_o / f_s`.
    pub frequency: T,
    /// Initial phase in radians.
    pub phase: T,
    pub offset: Offset<T>,
    /// Sampling rate `f_s` in Hz, used to turn `f` into `f_o`.
    pub sample_rate: T,
}

impl<T: Real> MotionModel<T> {
    /// `s(t) = A sin(2 pi f_o t + phi) + A`.
    pub fn sinusoid(amplitude: T, frequency: T, phase: T, sample_rate: T) -> Result<Self> {
        Self {
            kind: Waveform::Sinusoid,
            amplitude,
            frequency,
            phase,
            offset: Offset::Amplitude,
            sample_rate,
        }
        .validated()
    }

    /// `s(t) = A sgn[sin(2 pi f_o t + phi)] + A`, with `sgn(0) = +1`.
    pub fn square_wave(amplitude: T, frequency: T, phase: T, sample_rate: T) -> Result<Self> {
        Self {
            kind: Waveform::SquareWave,
            amplitude,
            frequency,
            phase,
            offset: Offset::Amplitude,
            sample_rate,
        }
        .validated()
    }

    /// First Fourier harmonic of a square wave of amplitude `A`:
    /// `(4A/pi) sin(2 pi f_o t + phi) + 4A/pi`.
    pub fn square_fundamental(amplitude: T, frequency: T, phase: T, sample_rate: T) -> Result<Self> {
        let scale = T::lit(4.0) / T::PI();
        Self::sinusoid(amplitude * scale, frequency, phase, sample_rate)
    }

    /// A source at rest at `position`.
    pub fn constant(position: T, sample_rate: T) -> Result<Self> {
        Self {
            kind: Waveform::Constant,
            amplitude: T::zero(),
            frequency: T::zero(),
            phase: T::zero(),
            offset: Offset::Fixed(position),
            sample_rate,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.amplitude >= T::zero()) || !self.amplitude.is_finite() {
            return Err(invalid("amplitude", "must be finite and >= 0"));
        }
        if !(self.sample_rate > T::zero()) {
            return Err(invalid("sample_rate", "must be positive"));
        }
        if !self.phase.is_finite() {
            return Err(invalid("phase", "must be finite"));
        }
        if self.kind != Waveform::Constant
            && !(self.frequency > T::zero() && self.frequency < T::lit(0.5))
        {
            return Err(invalid("frequency", "dimensionless frequency must lie in (0, 0.5)"));
        }
        Ok(self)
    }

    pub fn with_frequency(mut self, frequency: T) -> Self {
        self.frequency = frequency;
        self
    }

    pub fn offset_value(&self) -> T {
        match self.offset {
            Offset::Amplitude => self.amplitude,
            Offset::Fixed(v) => v,
        }
    }

    /// Largest displacement reached by the trajectory.
    pub fn max_displacement(&self) -> T {
        match self.kind {
            Waveform::Constant => self.offset_value(),
            _ => self.offset_value() + self.amplitude,
        }
    }

    pub fn min_displacement(&self) -> T {
        match self.kind {
            Waveform::Constant => self.offset_value(),
            _ => self.offset_value() - self.amplitude,
        }
    }

    #[inline]
    fn argument(&self, t: T) -> T {
        T::TAU() * self.frequency * self.sample_rate * t + self.phase
    }

    /// `s(t)` at time `t` (seconds), in sigma units.
    pub fn displacement(&self, t: T) -> T {
        let off = self.offset_value();
        match self.kind {
            Waveform::Constant => off,
            Waveform::Sinusoid => self.amplitude * self.argument(t).sin() + off,
            Waveform::SquareWave => {
                let sgn = if self.argument(t).sin() >= T::zero() {
                    T::one()
                } else {
                    -T::one()
                };
                self.amplitude * sgn + off
            }
        }
    }

    /// Analytic partial derivative of `s(t)` with respect to `param`.
    pub fn displacement_gradient(&self, t: T, param: Param) -> Result<T> {
        let d_offset = match self.offset {
            Offset::Amplitude => T::one(),
            Offset::Fixed(_) => T::zero(),
        };
        match self.kind {
            Waveform::Constant => Ok(T::zero()),
            Waveform::Sinusoid => {
                let arg = self.argument(t);
                Ok(match param {
                    Param::Amplitude => arg.sin() + d_offset,
                    Param::Phase => self.amplitude * arg.cos(),
                    Param::Frequency => {
                        T::TAU() * self.sample_rate * t * self.amplitude * arg.cos()
                    }
                })
            }
            Waveform::SquareWave => match param {
                Param::Amplitude => {
                    let sgn = if self.argument(t).sin() >= T::zero() {
                        T::one()
                    } else {
                        -T::one()
                    };
                    Ok(sgn + d_offset)
                }
                other => Err(Error::UnsupportedGradient(other)),
            },
        }
    }

    /// Parameter value by component (used by finite-difference checks and fits).
    pub fn param(&self, param: Param) -> T {
        match param {
            Param::Amplitude => self.amplitude,
            Param::Frequency => self.frequency,
            Param::Phase => self.phase,
        }
    }

    pub fn with_param(mut self, param: Param, value: T) -> Self {
        match param {
            Param::Amplitude => self.amplitude = value,
            Param::Frequency => self.frequency = value,
            Param::Phase => self.phase = value,
        }
        self
    }

    /// Partial sum of the square wave's Fourier series through harmonic
    /// `2 * harmonics - 1`. Valid for `Offset::Amplitude` square waves.
    pub fn square_fourier_partial_sum(&self, t: T, harmonics: usize) -> T {
        let scale = T::lit(4.0) * self.amplitude / T::PI();
        let base = T::TAU() * self.frequency * self.sample_rate * t;
        let series: T = (1..=harmonics)
            .map(|k| {
                let m = T::from_usize_lossy(2 * k - 1);
                (m * base + m * self.phase).sin() / m
            })
            .sum();
        self.amplitude + scale * series
    }
}

/// Normal trigger delay applied once per run to every frame time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayJitter<T> {
    /// Seconds.
    pub mean: T,
    /// Seconds.
    pub sd: T,
}

impl<T: Real> DelayJitter<T> {
    /// Trigger-latency model measured for the camera: mean 2.8 ms, sd 0.48 ms.
    pub fn camera_trigger() -> Self {
        Self {
            mean: T::lit(2.8e-3),
            sd: T::lit(0.48e-3),
        }
    }
}

/// Frame times `t_n = n / f_s + delta_tau`, `n = 0..N-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule<T> {
    pub frames: usize,
    /// Hz.
    pub sample_rate: T,
    pub jitter: Option<DelayJitter<T>>,
}

impl<T: Real> SamplingSchedule<T> {
    pub fn new(frames: usize, sample_rate: T) -> Result<Self> {
        Self {
            frames,
            sample_rate,
            jitter: None,
        }
        .validated()
    }

    pub fn with_jitter(mut self, jitter: DelayJitter<T>) -> Result<Self> {
        self.jitter = Some(jitter);
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.frames < 2 {
            return Err(invalid("frames", "need at least 2 frames"));
        }
        if !(self.sample_rate > T::zero()) || !self.sample_rate.is_finite() {
            return Err(invalid("sample_rate", "must be positive and finite"));
        }
        if let Some(j) = self.jitter {
            if !(j.sd >= T::zero()) || !j.mean.is_finite() {
                return Err(invalid("jitter", "sd must be >= 0 and mean finite"));
            }
        }
        Ok(self)
    }

    /// Nominal frame times `n / f_s`.
    pub fn nominal_times(&self) -> Vec<T> {
        self.frame_times(T::zero())
    }

    pub fn frame_times(&self, delay: T) -> Vec<T> {
        (0..self.frames)
            .map(|n| T::from_usize_lossy(n) / self.sample_rate + delay)
            .collect()
    }

    /// Draws the per-run delay; zero when jitter is disabled.
    pub fn draw_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self.jitter {
            None => T::zero(),
            Some(j) if j.sd == T::zero() => j.mean,
            Some(j) => {
                let normal = Normal::new(j.mean.as_f64(), j.sd.as_f64())
                    .expect("validated jitter parameters");
                T::lit(normal.sample(rng))
            }
        }
    }
}

/// Mean signal photons per frame and mean background photons per detector per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget<T> {
    pub nu: T,
    pub b: T,
}

impl<T: Real> NoiseBudget<T> {
    pub fn new(nu: T, b: T) -> Result<Self> {
        if !(nu > T::zero()) || !nu.is_finite() {
            return Err(invalid("nu", "must be positive and finite"));
        }
        if !(b >= T::zero()) || !b.is_finite() {
            return Err(invalid("b", "must be finite and >= 0"));
        }
        Ok(Self { nu, b })
    }

    /// Budget with background given relative to the signal, `b = ratio * nu`.
    pub fn with_ratio(nu: T, ratio: T) -> Result<Self> {
        Self::new(nu, ratio * nu)
    }

    #[inline]
    pub fn ratio(&self) -> T {
        self.b / self.nu
    }
}
