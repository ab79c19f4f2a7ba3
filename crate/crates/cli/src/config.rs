//! Experiment configuration: a versioned TOML document with per-field
//! validation. Physical inputs (micrometres, hertz, milliseconds) are converted
//! to the library's dimensionless units here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spade_core::estimate::{LseOptions, SearchInterval};
use spade_core::fisher::BoundWaveform;
use spade_core::holo::{Carriers, GridSpec, Optics};
use spade_core::modes::{PixelArray, Scheme};
use spade_core::motion::{DelayJitter, MotionModel, NoiseBudget, SamplingSchedule};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub version: u32,
    pub seed: u64,
    pub trials: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub output: PathBuf,
    pub psf: PsfConfig,
    pub motion: MotionConfig,
    pub schedule: ScheduleConfig,
    pub noise: NoiseConfig,
    pub schemes: SchemesConfig,
    pub sweep: SweepConfig,
    pub estimate: EstimateConfig,
    pub holo: HoloConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 2024,
            trials: 200,
            workers: 0,
            output: PathBuf::from("out"),
            psf: PsfConfig::default(),
            motion: MotionConfig::default(),
            schedule: ScheduleConfig::default(),
            noise: NoiseConfig::default(),
            schemes: SchemesConfig::default(),
            sweep: SweepConfig::default(),
            estimate: EstimateConfig::default(),
            holo: HoloConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfConfig {
    pub sigma_um: f64,
}

impl Default for PsfConfig {
    fn default() -> Self {
        Self { sigma_um: 103.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformChoice {
    /// `A sin(2 pi f_o t + phi) + A`, fitted with itself.
    Sinusoid,
    /// `A sgn[sin(2 pi f_o t + phi)] + A`, fitted with its first harmonic.
    SquareWave,
    /// First harmonic of the square wave, `(4A/pi) sin(...) + 4A/pi`.
    SquareFundamental,
}

impl WaveformChoice {
    pub fn label(self) -> &'static str {
        match self {
            WaveformChoice::Sinusoid => "sinusoid",
            WaveformChoice::SquareWave => "square-wave",
            WaveformChoice::SquareFundamental => "square-fundamental",
        }
    }

    pub fn bound(self) -> BoundWaveform {
        match self {
            WaveformChoice::Sinusoid => BoundWaveform::Sinusoid,
            _ => BoundWaveform::SquareWaveFundamental,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig {
    pub waveform: WaveformChoice,
    /// Sigma units.
    pub amplitude: f64,
    /// Dimensionless `f_o / f_s`.
    pub frequency: f64,
    /// Radians.
    pub phase: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            waveform: WaveformChoice::SquareFundamental,
            amplitude: 0.47,
            frequency: 0.2,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub frames: usize,
    pub sample_rate_hz: f64,
    pub jitter: Option<JitterConfig>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            frames: 50,
            sample_rate_hz: 20.0,
            jitter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JitterConfig {
    pub mean_ms: f64,
    pub sd_ms: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            mean_ms: 2.8,
            sd_ms: 0.48,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Signal photons per frame for direct imaging.
    pub nu_direct: f64,
    /// Signal photons per frame for the mode-sorting schemes.
    pub nu_spade: f64,
    /// Background per detector relative to `nu`.
    pub b_over_nu: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            nu_direct: 400.0,
            nu_spade: 60.0,
            b_over_nu: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Di,
    Hg,
    Pm,
}

impl SchemeKind {
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Di => "di",
            SchemeKind::Hg => "hg",
            SchemeKind::Pm => "pm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "di" => Some(SchemeKind::Di),
            "hg" => Some(SchemeKind::Hg),
            "pm" => Some(SchemeKind::Pm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemesConfig {
    /// Schemes to run; empty selects each command's default set.
    pub enabled: Vec<SchemeKind>,
    pub hg_modes: usize,
    pub pixel_um: f64,
}

impl Default for SchemesConfig {
    fn default() -> Self {
        Self {
            enabled: Vec::new(),
            hg_modes: 21,
            pixel_um: 4.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanAxis {
    /// `gamma` against displacement.
    Displacement,
    /// Frequency Fisher information against `b/nu`.
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub frequencies: Vec<f64>,
    pub jitter_frequencies: Vec<f64>,
    pub b_over_nu: Vec<f64>,
    /// Sigma units.
    pub displacements: Vec<f64>,
    pub axis: ScanAxis,
}

fn grid(lo: f64, step: f64, n: usize) -> Vec<f64> {
    // keep two decimals exact in the emitted tables
    (0..n).map(|i| ((lo + step * i as f64) * 1e6).round() / 1e6).collect()
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            frequencies: grid(0.05, 0.05, 9),
            jitter_frequencies: grid(0.03, 0.01, 45),
            b_over_nu: vec![0.0, 0.01, 0.02, 0.05, 0.1],
            displacements: grid(-2.0, 0.05, 121),
            axis: ScanAxis::Noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub mle_grid: usize,
    /// Sigma units.
    pub mle_tol: f64,
    pub lse_lo: f64,
    pub lse_hi: f64,
    /// Defaults to `1 / (40 N)`.
    pub lse_spacing: Option<f64>,
    pub fit_phase: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            mle_grid: 400,
            mle_tol: 1e-4,
            lse_lo: 0.02,
            lse_hi: 0.48,
            lse_spacing: None,
            fit_phase: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoloConfig {
    pub nx: usize,
    pub ny: usize,
    pub pitch_um: f64,
    /// Carrier frequencies in cycles per pixel.
    pub carrier_x: f64,
    pub carrier_y: f64,
    pub wavelength_um: f64,
    pub focal_length_mm: f64,
    /// Random displacements checked end to end.
    pub checks: usize,
    /// Upper end of the random displacement range, sigma units.
    pub s_max: f64,
    /// Relative tolerance of the demultiplexing self-check.
    pub tolerance: f64,
}

impl Default for HoloConfig {
    fn default() -> Self {
        Self {
            nx: 512,
            ny: 512,
            pitch_um: 8.0,
            carrier_x: 0.125,
            carrier_y: 0.0625,
            wavelength_um: 0.77,
            focal_length_mm: 150.0,
            checks: 20,
            s_max: 0.94,
            tolerance: 0.02,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// All field-level problems, empty when the configuration is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut check = |ok: bool, field: &str, msg: &str| {
            if !ok {
                p.push(format!("{field}: {msg}"));
            }
        };
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        let in_band = |f: f64| f.is_finite() && f > 0.0 && f < 0.5;

        check(self.version == CONFIG_VERSION, "version", "unsupported schema version (expected 1)");
        check(self.trials >= 1, "trials", "must be at least 1");
        check(finite_pos(self.psf.sigma_um), "psf.sigma_um", "must be positive");
        check(finite_nonneg(self.motion.amplitude), "motion.amplitude", "must be >= 0");
        check(in_band(self.motion.frequency), "motion.frequency", "must lie in (0, 0.5)");
        check(self.motion.phase.is_finite(), "motion.phase", "must be finite");
        check(self.schedule.frames >= 4, "schedule.frames", "need at least 4 frames for a frequency fit");
        check(finite_pos(self.schedule.sample_rate_hz), "schedule.sample_rate_hz", "must be positive");
        if let Some(j) = self.schedule.jitter {
            check(j.mean_ms.is_finite(), "schedule.jitter.mean_ms", "must be finite");
            check(finite_nonneg(j.sd_ms), "schedule.jitter.sd_ms", "must be >= 0");
        }
        check(finite_pos(self.noise.nu_direct), "noise.nu_direct", "must be positive");
        check(finite_pos(self.noise.nu_spade), "noise.nu_spade", "must be positive");
        check(finite_nonneg(self.noise.b_over_nu), "noise.b_over_nu", "must be >= 0");
        check(self.schemes.hg_modes >= 2, "schemes.hg_modes", "need at least 2 modes");
        check(finite_pos(self.schemes.pixel_um), "schemes.pixel_um", "must be positive");
        check(
            self.sweep.frequencies.iter().all(|&f| in_band(f)),
            "sweep.frequencies",
            "every entry must lie in (0, 0.5)",
        );
        check(
            self.sweep.jitter_frequencies.iter().all(|&f| in_band(f)),
            "sweep.jitter_frequencies",
            "every entry must lie in (0, 0.5)",
        );
        check(
            self.sweep.b_over_nu.iter().all(|&b| finite_nonneg(b)),
            "sweep.b_over_nu",
            "every entry must be >= 0",
        );
        check(
            self.sweep.displacements.iter().all(|s| s.is_finite()),
            "sweep.displacements",
            "every entry must be finite",
        );
        check(self.estimate.mle_grid >= 3, "estimate.mle_grid", "need at least 3 grid points");
        check(finite_pos(self.estimate.mle_tol), "estimate.mle_tol", "must be positive");
        check(
            self.estimate.lse_lo > 0.0 && self.estimate.lse_lo < self.estimate.lse_hi && self.estimate.lse_hi < 0.5,
            "estimate.lse_lo/lse_hi",
            "need 0 < lse_lo < lse_hi < 0.5",
        );
        if let Some(s) = self.estimate.lse_spacing {
            check(finite_pos(s), "estimate.lse_spacing", "must be positive");
        }
        let h = &self.holo;
        check(
            h.nx.is_power_of_two() && h.ny.is_power_of_two() && h.nx >= 2 && h.ny >= 2,
            "holo.nx/ny",
            "must be powers of two",
        );
        check(finite_pos(h.pitch_um), "holo.pitch_um", "must be positive");
        check(
            h.carrier_x.abs() < 0.5 && h.carrier_y.abs() < 0.5,
            "holo.carrier_x/carrier_y",
            "carriers alias at or above 0.5 cycles per pixel",
        );
        check(finite_pos(h.wavelength_um), "holo.wavelength_um", "must be positive");
        check(finite_pos(h.focal_length_mm), "holo.focal_length_mm", "must be positive");
        check(finite_nonneg(h.s_max), "holo.s_max", "must be >= 0");
        check(finite_pos(h.tolerance), "holo.tolerance", "must be positive");
        p
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(p))
        }
    }

    /// Schemes to run, or `default` when none are configured.
    pub fn schemes_or(&self, default: &[SchemeKind]) -> Vec<SchemeKind> {
        if self.schemes.enabled.is_empty() {
            default.to_vec()
        } else {
            self.schemes.enabled.clone()
        }
    }

    pub fn nu_for(&self, kind: SchemeKind) -> f64 {
        match kind {
            SchemeKind::Di => self.noise.nu_direct,
            _ => self.noise.nu_spade,
        }
    }

    pub fn motion_for(&self, waveform: WaveformChoice, frequency: f64) -> Result<MotionModel<f64>, CliError> {
        let m = &self.motion;
        let fs = self.schedule.sample_rate_hz;
        Ok(match waveform {
            WaveformChoice::Sinusoid => MotionModel::sinusoid(m.amplitude, frequency, m.phase, fs)?,
            WaveformChoice::SquareWave => MotionModel::square_wave(m.amplitude, frequency, m.phase, fs)?,
            WaveformChoice::SquareFundamental => {
                MotionModel::square_fundamental(m.amplitude, frequency, m.phase, fs)?
            }
        })
    }

    /// Model fitted by the least-squares stage (and used for Fisher bounds).
    pub fn template_for(&self, waveform: WaveformChoice, frequency: f64) -> Result<MotionModel<f64>, CliError> {
        match waveform {
            WaveformChoice::Sinusoid => self.motion_for(waveform, frequency),
            _ => self.motion_for(WaveformChoice::SquareFundamental, frequency),
        }
    }

    pub fn schedule(&self) -> Result<SamplingSchedule<f64>, CliError> {
        let s = SamplingSchedule::new(self.schedule.frames, self.schedule.sample_rate_hz)?;
        Ok(match self.schedule.jitter {
            Some(j) => s.with_jitter(DelayJitter {
                mean: j.mean_ms * 1e-3,
                sd: j.sd_ms * 1e-3,
            })?,
            None => s,
        })
    }

    pub fn noise_for(&self, kind: SchemeKind, b_over_nu: f64) -> Result<NoiseBudget<f64>, CliError> {
        Ok(NoiseBudget::with_ratio(self.nu_for(kind), b_over_nu)?)
    }

    /// Scheme with the direct-imaging pixel row covering `[lo, hi]` (sigma units).
    pub fn scheme(&self, kind: SchemeKind, lo: f64, hi: f64) -> Result<Scheme<f64>, CliError> {
        Ok(match kind {
            SchemeKind::Di => {
                let pitch = self.schemes.pixel_um / self.psf.sigma_um;
                Scheme::direct_imaging(PixelArray::for_motion(pitch, lo, hi)?)
            }
            SchemeKind::Hg => Scheme::hg_spade(self.schemes.hg_modes)?,
            SchemeKind::Pm => Scheme::pm_spade(),
        })
    }

    pub fn search_for(&self, template: &MotionModel<f64>, scheme: &Scheme<f64>) -> SearchInterval<f64> {
        let mut s = SearchInterval::for_motion(template, scheme);
        s.grid = self.estimate.mle_grid;
        s.tol = self.estimate.mle_tol;
        s
    }

    pub fn lse(&self) -> LseOptions<f64> {
        LseOptions {
            lo: self.estimate.lse_lo,
            hi: self.estimate.lse_hi,
            spacing: self.estimate.lse_spacing,
            tol: 1e-10,
            fit_phase: self.estimate.fit_phase,
        }
    }

    pub fn holo_grid(&self) -> Result<GridSpec<f64>, CliError> {
        Ok(GridSpec::new(self.holo.nx, self.holo.ny, self.holo.pitch_um, self.psf.sigma_um)?)
    }

    pub fn carriers(&self) -> Carriers<f64> {
        Carriers::cycles_per_pixel(self.holo.carrier_x, self.holo.carrier_y, self.holo.pitch_um)
    }

    pub fn optics(&self) -> Optics<f64> {
        Optics {
            focal_length_um: self.holo.focal_length_mm * 1e3,
            wavelength_um: self.holo.wavelength_um,
        }
    }
}
