//! Subcommand implementations. Each returns the tables it produced; writing
//! them and the run manifest is left to [`crate::run`].

use rand::Rng;
use sha2::{Digest, Sha256};
use spade_core::estimate::{EnsembleStats, Pipeline};
use spade_core::fisher::{cfi, qcrb_frequency, qfi_ideal, qfi_noisy};
use spade_core::holo::{demux_check, pm_hologram, Hologram, LEAKAGE_LIMIT};
use spade_core::modes::{gamma_ceiling, Scheme};
use spade_core::motion::Param;
use spade_core::sim::{trial_rng, TrialConfig};

use crate::config::{Config, JitterConfig, ScanAxis, SchemeKind, WaveformChoice};
use crate::error::CliError;
use crate::table::Table;

pub const MC_COLUMNS: [&str; 8] = [
    "f[1]",
    "mean_f_hat[1]",
    "se_mean[1]",
    "nu_var[1]",
    "se_nu_var[1]",
    "bound_nu_var[1]",
    "ratio[1]",
    "flagged[trials]",
];

/// Seed for one Monte Carlo point; identical inputs give identical streams
/// regardless of which command requested them.
pub fn derive_seed(master: u64, scheme: SchemeKind, f: f64, b_over_nu: f64, waveform: WaveformChoice, jitter: Option<JitterConfig>) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(scheme.label().as_bytes());
    h.update(f.to_bits().to_le_bytes());
    h.update(b_over_nu.to_bits().to_le_bytes());
    h.update(waveform.label().as_bytes());
    if let Some(j) = jitter {
        h.update(j.mean_ms.to_bits().to_le_bytes());
        h.update(j.sd_ms.to_bits().to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// One Monte Carlo point: simulation, estimation and ensemble statistics.
#[derive(Debug, Clone, Copy)]
pub struct McPoint {
    pub stats: EnsembleStats<f64>,
    pub nu: f64,
    /// Frequency QCRB rescaled by `nu` for the fitted template.
    pub bound: f64,
}

pub fn monte_carlo_point(
    cfg: &Config,
    kind: SchemeKind,
    waveform: WaveformChoice,
    f: f64,
    b_over_nu: f64,
) -> Result<McPoint, CliError> {
    let motion = cfg.motion_for(waveform, f)?;
    let template = cfg.template_for(waveform, f)?;
    let schedule = cfg.schedule()?;
    let noise = cfg.noise_for(kind, b_over_nu)?;
    let lo = motion.min_displacement().min(template.min_displacement());
    let hi = motion.max_displacement().max(template.max_displacement());
    let scheme = cfg.scheme(kind, lo, hi)?;
    let seed = derive_seed(cfg.seed, kind, f, b_over_nu, waveform, cfg.schedule.jitter);
    let config = TrialConfig::new(motion, schedule, noise, seed)?;
    let mut search = cfg.search_for(&template, &scheme);
    search.lo = search.lo.min(lo - 1.0);
    if scheme.is_parity_blind() {
        search.lo = search.lo.max(0.0);
    }
    search.hi = search.hi.max(hi + 1.0);
    let pipeline = Pipeline::new(config, scheme, template, Some(search), cfg.lse())?;
    let estimates = pipeline.run(cfg.trials, cfg.workers)?;
    let stats = pipeline.summarize(&estimates);
    let bound = template_bound(cfg, waveform)?;
    Ok(McPoint {
        stats,
        nu: noise.nu,
        bound,
    })
}

/// `nu * Var` bound in sigma units for the fitted template.
pub fn template_bound(cfg: &Config, waveform: WaveformChoice) -> Result<f64, CliError> {
    Ok(qcrb_frequency(cfg.motion.amplitude, cfg.schedule.frames, 1.0, 1.0, waveform.bound())?)
}

fn mc_row(f: f64, p: &McPoint) -> Vec<f64> {
    let s = &p.stats;
    vec![
        f,
        s.mean,
        s.se_mean,
        s.rescaled_variance,
        s.se_variance,
        p.bound,
        s.rescaled_variance / p.bound,
        s.flagged as f64,
    ]
}

fn require_nonempty(values: &[f64], field: &str) -> Result<(), CliError> {
    if values.is_empty() {
        Err(CliError::Validation(vec![format!("{field}: sweep list is empty")]))
    } else {
        Ok(())
    }
}

/// Mean and `nu Var(f_hat)` against frequency without background.
pub fn ideal_sweep(cfg: &Config) -> Result<Vec<Table>, CliError> {
    require_nonempty(&cfg.sweep.frequencies, "sweep.frequencies")?;
    let waveform = cfg.motion.waveform;
    cfg.schemes_or(&[SchemeKind::Pm, SchemeKind::Di])
        .into_iter()
        .map(|kind| {
            let mut t = Table::new(format!("ideal_sweep_{}", kind.label()), &MC_COLUMNS);
            for &f in &cfg.sweep.frequencies {
                let p = monte_carlo_point(cfg, kind, waveform, f, 0.0)?;
                t.push(mc_row(f, &p));
            }
            Ok(t)
        })
        .collect()
}

pub const NOISE_COLUMNS: [&str; 9] = [
    "b_over_nu[1]",
    "mean_f_hat[1]",
    "se_mean[1]",
    "nu_var[1]",
    "se_nu_var[1]",
    "crb_nu_var[1]",
    "qcrb_nu_var[1]",
    "qcrb_ideal_nu_var[1]",
    "flagged[trials]",
];

/// Frequency CRB and noisy QCRB, both rescaled by `nu`.
pub fn frequency_bounds(cfg: &Config, kind: SchemeKind, b_over_nu: f64) -> Result<(f64, f64), CliError> {
    let waveform = cfg.motion.waveform;
    let f = cfg.motion.frequency;
    let motion = cfg.motion_for(waveform, f)?;
    let template = cfg.template_for(waveform, f)?;
    let scheme = cfg.scheme(
        kind,
        motion.min_displacement().min(template.min_displacement()),
        motion.max_displacement().max(template.max_displacement()),
    )?;
    let schedule = cfg.schedule()?;
    let noise = cfg.noise_for(kind, b_over_nu)?;
    let p = [Param::Frequency];
    let c = cfi(&template, &schedule, &scheme, noise, &p)?.scalar();
    let q = qfi_noisy(&template, &schedule, noise, &p)?.scalar();
    Ok((noise.nu / c, noise.nu / q))
}

/// Mean, `nu Var(f_hat)`, CRB and QCRB against `b/nu` at the configured frequency.
pub fn noise_sweep(cfg: &Config) -> Result<Vec<Table>, CliError> {
    require_nonempty(&cfg.sweep.b_over_nu, "sweep.b_over_nu")?;
    let f = cfg.motion.frequency;
    let waveform = cfg.motion.waveform;
    cfg.schemes_or(&[SchemeKind::Pm, SchemeKind::Hg, SchemeKind::Di])
        .into_iter()
        .map(|kind| {
            let mut t = Table::new(format!("noise_sweep_{}", kind.label()), &NOISE_COLUMNS);
            for &beta in &cfg.sweep.b_over_nu {
                let p = monte_carlo_point(cfg, kind, waveform, f, beta)?;
                let (crb, qcrb) = frequency_bounds(cfg, kind, beta)?;
                let s = &p.stats;
                t.push(vec![
                    beta,
                    s.mean,
                    s.se_mean,
                    s.rescaled_variance,
                    s.se_variance,
                    crb,
                    qcrb,
                    p.bound,
                    s.flagged as f64,
                ]);
            }
            Ok(t)
        })
        .collect()
}

/// Sinusoid and square-wave motion under random trigger delay.
pub fn jitter_study(cfg: &Config) -> Result<Vec<Table>, CliError> {
    require_nonempty(&cfg.sweep.jitter_frequencies, "sweep.jitter_frequencies")?;
    let mut cfg = cfg.clone();
    if cfg.schedule.jitter.is_none() {
        cfg.schedule.jitter = Some(JitterConfig::default());
    }
    let beta = cfg.noise.b_over_nu;
    let mut out = Vec::new();
    for kind in cfg.schemes_or(&[SchemeKind::Di]) {
        for waveform in [WaveformChoice::Sinusoid, WaveformChoice::SquareWave] {
            let mut t = Table::new(
                format!("jitter_study_{}_{}", kind.label(), waveform.label().replace('-', "_")),
                &MC_COLUMNS,
            );
            for &f in &cfg.sweep.jitter_frequencies {
                let p = monte_carlo_point(&cfg, kind, waveform, f, beta)?;
                t.push(mc_row(f, &p));
            }
            out.push(t);
        }
    }
    Ok(out)
}

pub const GAMMA_COLUMNS: [&str; 3] = ["s[sigma]", "gamma[1]", "gamma_ceiling[1]"];
pub const FI_COLUMNS: [&str; 5] = [
    "b_over_nu[1]",
    "cfi_f[1/sigma^2]",
    "qfi_noisy_f[1/sigma^2]",
    "cfi_normalized[1]",
    "qfi_normalized[1]",
];

/// `gamma(s)` or frequency Fisher information against `b/nu`, per scheme.
pub fn fisher_scan(cfg: &Config) -> Result<Vec<Table>, CliError> {
    let kinds = cfg.schemes_or(&[SchemeKind::Di, SchemeKind::Hg, SchemeKind::Pm]);
    match cfg.sweep.axis {
        ScanAxis::Displacement => {
            require_nonempty(&cfg.sweep.displacements, "sweep.displacements")?;
            let lo = cfg.sweep.displacements.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = cfg.sweep.displacements.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let beta = cfg.noise.b_over_nu;
            kinds
                .into_iter()
                .map(|kind| {
                    let scheme = cfg.scheme(kind, lo, hi)?;
                    let mut t = Table::new(format!("fisher_scan_s_{}", kind.label()), &GAMMA_COLUMNS);
                    for &s in &cfg.sweep.displacements {
                        t.push(vec![s, scheme.gamma(s, beta), gamma_ceiling(beta)]);
                    }
                    Ok(t)
                })
                .collect()
        }
        ScanAxis::Noise => {
            require_nonempty(&cfg.sweep.b_over_nu, "sweep.b_over_nu")?;
            let f = cfg.motion.frequency;
            let template = cfg.template_for(cfg.motion.waveform, f)?;
            let schedule = cfg.schedule()?;
            let p = [Param::Frequency];
            kinds
                .into_iter()
                .map(|kind| {
                    let scheme: Scheme<f64> =
                        cfg.scheme(kind, template.min_displacement(), template.max_displacement())?;
                    let nu = cfg.nu_for(kind);
                    let ideal = qfi_ideal(&template, &schedule, nu, &p)?.scalar();
                    let mut t = Table::new(format!("fisher_scan_noise_{}", kind.label()), &FI_COLUMNS);
                    for &beta in &cfg.sweep.b_over_nu {
                        let noise = cfg.noise_for(kind, beta)?;
                        let c = cfi(&template, &schedule, &scheme, noise, &p)?.scalar();
                        let q = qfi_noisy(&template, &schedule, noise, &p)?.scalar();
                        t.push(vec![beta, c, q, c / ideal, q / ideal]);
                    }
                    Ok(t)
                })
                .collect()
        }
    }
}

pub const HOLO_COLUMNS: [&str; 5] = [
    "s[sigma]",
    "readout_plus_fraction[1]",
    "model_plus_fraction[1]",
    "relative_error[1]",
    "leakage[1]",
];

#[derive(Debug)]
pub struct HoloOutcome {
    pub hologram: Hologram<f64>,
    pub table: Table,
    /// First failing check, if any.
    pub failure: Option<String>,
}

/// Builds the PM hologram and reads it out for random source positions.
pub fn holo(cfg: &Config) -> Result<HoloOutcome, CliError> {
    let grid = cfg.holo_grid()?;
    let carriers = cfg.carriers();
    carriers.check_aliasing(&grid)?;
    carriers.check_separation(&grid)?;
    let hologram = pm_hologram(grid, carriers)?;
    let optics = cfg.optics();
    let mut rng = trial_rng(cfg.seed, 0);
    let mut table = Table::new("holo_readout", &HOLO_COLUMNS);
    let mut failure = None;
    for _ in 0..cfg.holo.checks {
        let s = rng.random_range(0.0..=cfg.holo.s_max);
        let c = demux_check(&hologram, s, optics)?;
        table.push(vec![s, c.readout_fraction, c.model_fraction, c.relative_error, c.leakage]);
        if failure.is_none() {
            if c.leakage > LEAKAGE_LIMIT {
                failure = Some(format!("s = {s:.4}: leakage {:.3} exceeds {LEAKAGE_LIMIT}", c.leakage));
            } else if !(c.relative_error <= cfg.holo.tolerance) {
                failure = Some(format!(
                    "s = {s:.4}: readout ratio off by {:.2e} (tolerance {:.2e})",
                    c.relative_error, cfg.holo.tolerance
                ));
            }
        }
    }
    Ok(HoloOutcome {
        hologram,
        table,
        failure,
    })
}
