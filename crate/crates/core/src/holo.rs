//! Phase-only hologram synthesis for plus/minus mode sorting and a discrete
//! Fourier-optics readout of the two mode intensities.
//!
//! A complex modulation `V = a e^{i phi}` with `a <= 1` is encoded as the
//! phase `G = f(a) sin(phi)` where `J1(f(a)) = kappa a`. By Jacobi-Anger the
//! first diffraction order of `e^{iG}` is `kappa V`. The modulation carries
//! both analysis modes on opposite vertical carriers, so the lens' Fourier
//! plane shows one spot per mode at `(k_x, +-k_y)`.
//!
//! Grid arrays are row-major, `values[iy * nx + ix]`, and coordinates are
//! centred: `x = (ix - nx/2) * pitch`.

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::modes::Scheme;
use crate::motion::Psf;
use crate::scalar::Real;
use crate::special::{bessel_j1, bessel_j1_derivative, hermite_gauss, J1_FIRST_MAX_ARG, J1_MAX};

/// Scalar usable on the DFT path.
pub trait HoloReal: Real + FftNum {}
impl<T: Real + FftNum> HoloReal for T {}

/// Sampling of the SLM plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub nx: usize,
    pub ny: usize,
    /// Pixel pitch in micrometres.
    pub pitch_um: T,
    /// PSF width in micrometres.
    pub sigma_um: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(nx: usize, ny: usize, pitch_um: T, sigma_um: T) -> Result<Self> {
        if !nx.is_power_of_two() || !ny.is_power_of_two() || nx < 2 || ny < 2 {
            return Err(invalid("grid", format!("{nx}x{ny} is not a power-of-two grid")));
        }
        if !(pitch_um > T::zero()) || !pitch_um.is_finite() {
            return Err(invalid("pitch", "must be positive and finite"));
        }
        Psf::new(sigma_um)?;
        Ok(Self {
            nx,
            ny,
            pitch_um,
            sigma_um,
        })
    }

    /// 512 x 512 pixels of 8 um, sigma = 103 um.
    pub fn slm_default() -> Self {
        Self {
            nx: 512,
            ny: 512,
            pitch_um: T::lit(8.0),
            sigma_um: T::lit(103.0),
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel-centre coordinate in micrometres.
    pub fn x_um(&self, ix: usize) -> T {
        (T::from_usize_lossy(ix) - T::from_usize_lossy(self.nx / 2)) * self.pitch_um
    }

    pub fn y_um(&self, iy: usize) -> T {
        (T::from_usize_lossy(iy) - T::from_usize_lossy(self.ny / 2)) * self.pitch_um
    }

    /// Pixel area in sigma units.
    pub fn cell_area(&self) -> T {
        let d = self.pitch_um / self.sigma_um;
        d * d
    }

    /// Width of a first-order spot in DFT bins.
    pub fn spot_width_bins(&self) -> T {
        T::SQRT_2() * T::from_usize_lossy(self.nx.max(self.ny)) * self.pitch_um / (T::TAU() * self.sigma_um)
    }
}

/// Complex field samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    pub grid: GridSpec<T>,
    pub values: Vec<Complex<T>>,
}

impl<T: Real> Field<T> {
    pub fn from_fn(grid: GridSpec<T>, mut f: impl FnMut(T, T) -> Complex<T>) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..grid.ny {
            let y = grid.y_um(iy);
            for ix in 0..grid.nx {
                values.push(f(grid.x_um(ix), y));
            }
        }
        Self { grid, values }
    }

    /// Point-source image `psi(x - s) psi(y)` displaced by `s` (sigma units) along x.
    pub fn shifted_psf(grid: GridSpec<T>, s: T) -> Self {
        let sig = grid.sigma_um;
        Self::from_fn(grid, |x, y| {
            Complex::new(
                Psf::amplitude(x / sig - s) * Psf::amplitude(y / sig) / sig,
                T::zero(),
            )
        })
    }

    /// Discrete inner product `<self|other>` in sigma units.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        let acc: Complex<T> = self
            .values
            .iter()
            .zip(&other.values)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
        acc * (self.grid.cell_area() * self.grid.sigma_um * self.grid.sigma_um)
    }

    pub fn energy(&self) -> T {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// The plus and minus analysis modes, `phi_+-(x) g0(y)`, with
/// `phi_+- = (phi_0 +- phi_1) / sqrt2` and `g0` the fundamental Gaussian.
pub fn pm_modes<T: Real>(grid: GridSpec<T>) -> (Field<T>, Field<T>) {
    let sig = grid.sigma_um;
    let mode = |sign: T| {
        Field::from_fn(grid, move |x, y| {
            let u = x / sig;
            let v = y / sig;
            let px = (hermite_gauss(0, u, T::one()) + sign * hermite_gauss(1, u, T::one())) / T::SQRT_2();
            Complex::new(px * hermite_gauss(0, v, T::one()) / sig, T::zero())
        })
    };
    (mode(T::one()), mode(-T::one()))
}

/// Spatial carriers in rad/um.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Carriers<T> {
    pub kx: T,
    pub ky: T,
}

impl<T: Real> Carriers<T> {
    /// Carriers of `cx` and `cy` cycles per pixel.
    pub fn cycles_per_pixel(cx: T, cy: T, pitch_um: T) -> Self {
        Self {
            kx: T::TAU() * cx / pitch_um,
            ky: T::TAU() * cy / pitch_um,
        }
    }

    /// 1/8 and 1/16 cycles per pixel.
    pub fn slm_default(pitch_um: T) -> Self {
        Self::cycles_per_pixel(T::lit(0.125), T::lit(0.0625), pitch_um)
    }

    /// Carrier positions in DFT bins `(x bin, y bin)`.
    pub fn bins(&self, grid: &GridSpec<T>) -> (T, T) {
        let bx = self.kx * grid.pitch_um * T::from_usize_lossy(grid.nx) / T::TAU();
        let by = self.ky * grid.pitch_um * T::from_usize_lossy(grid.ny) / T::TAU();
        (bx, by)
    }

    pub fn check_aliasing(&self, grid: &GridSpec<T>) -> Result<()> {
        for (axis, k) in [("kx", self.kx), ("ky", self.ky)] {
            if !(k.abs() * grid.pitch_um < T::PI()) {
                return Err(Error::CarrierAliasing {
                    axis,
                    k: k.as_f64(),
                    pitch: grid.pitch_um.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Requires every first-order spot to sit at least three spot widths from
    /// the other spot and from neighbouring diffraction orders.
    pub fn check_separation(&self, grid: &GridSpec<T>) -> Result<()> {
        let (bx, by) = self.bins(grid);
        let wrap = |d: T, n: usize| {
            let n = T::from_usize_lossy(n);
            let d = d.abs() % n;
            d.min(n - d)
        };
        let separation = wrap(bx, grid.nx).min(wrap(by, grid.ny)).min(wrap(by + by, grid.ny));
        let required = T::lit(3.0) * grid.spot_width_bins();
        if separation < required {
            return Err(Error::SpotSeparation {
                separation: separation.as_f64(),
                required: required.as_f64(),
            });
        }
        Ok(())
    }
}

/// Solves `J1(x) = kappa a` on `[0, x_max]`, with `kappa` the maximum of `J1`
/// and `x_max` its first maximum.
pub fn invert_j1<T: Real>(a: T) -> Result<T> {
    if !(a >= T::zero() && a <= T::one()) {
        return Err(Error::Domain {
            value: a.as_f64(),
            domain: "[0, 1]",
        });
    }
    let xmax = T::lit(J1_FIRST_MAX_ARG);
    if a == T::zero() {
        return Ok(T::zero());
    }
    if a == T::one() {
        return Ok(xmax);
    }
    let target = T::lit(J1_MAX) * a;
    let (mut lo, mut hi) = (T::zero(), xmax);
    // J1(x) ~ x/2 near the origin
    let mut x = (target + target).min(xmax * T::lit(0.5));
    for _ in 0..100 {
        let r = bessel_j1(x) - target;
        if r.abs() <= T::epsilon() * T::lit(4.0) * target {
            break;
        }
        if r > T::zero() {
            hi = x;
        } else {
            lo = x;
        }
        let d = bessel_j1_derivative(x);
        let step = x - r / d;
        x = if d > T::zero() && step > lo && step < hi {
            step
        } else {
            (lo + hi) * T::lit(0.5)
        };
        if hi - lo <= T::epsilon() * xmax {
            break;
        }
    }
    Ok(x)
}

/// First Fourier coefficient `(1/2pi) int e^{i x sin(phi)} e^{-i phi} dphi`
/// by the trapezoid rule on `samples` points (spectrally accurate).
pub fn first_order_coefficient<T: Real>(x: T, samples: usize) -> Complex<T> {
    let n = T::from_usize_lossy(samples);
    let mut acc = Complex::new(T::zero(), T::zero());
    for k in 0..samples {
        let phi = T::TAU() * T::from_usize_lossy(k) / n;
        let arg = x * phi.sin() - phi;
        acc = acc + Complex::new(arg.cos(), arg.sin());
    }
    acc / n
}

/// Normalized modulation `V = [phi_+^* e^{i ky y} + phi_-^* e^{-i ky y}] e^{i kx x} / V_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulation<T> {
    pub field: Field<T>,
    pub carriers: Carriers<T>,
    /// The factor that brought `max |V|` to one.
    pub vmax: T,
}

pub fn modulation_function<T: Real>(
    plus: &Field<T>,
    minus: &Field<T>,
    carriers: Carriers<T>,
) -> Result<Modulation<T>> {
    let grid = plus.grid;
    if minus.grid != grid {
        return Err(invalid("modes", "plus and minus modes are sampled on different grids"));
    }
    carriers.check_aliasing(&grid)?;
    let mut values = Vec::with_capacity(grid.len());
    for iy in 0..grid.ny {
        let ky = carriers.ky * grid.y_um(iy);
        let ey = Complex::new(ky.cos(), ky.sin());
        for ix in 0..grid.nx {
            let kx = carriers.kx * grid.x_um(ix);
            let ex = Complex::new(kx.cos(), kx.sin());
            let i = iy * grid.nx + ix;
            values.push((plus.values[i].conj() * ey + minus.values[i].conj() * ey.conj()) * ex);
        }
    }
    let vmax = values.iter().map(|v| v.norm()).fold(T::zero(), T::max);
    if !(vmax > T::zero()) {
        return Err(invalid("modes", "modulation vanishes on the grid"));
    }
    for v in values.iter_mut() {
        *v = *v / vmax;
    }
    Ok(Modulation {
        field: Field { grid, values },
        carriers,
        vmax,
    })
}

/// Phase-only hologram `G = f(|V|) sin(arg V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hologram<T> {
    pub grid: GridSpec<T>,
    pub carriers: Carriers<T>,
    pub vmax: T,
    /// Phase in radians, row-major.
    pub phase: Vec<T>,
}

pub fn encode_hologram<T: Real>(modulation: &Modulation<T>) -> Result<Hologram<T>> {
    let slack = T::one() + T::lit(1e-12);
    let phase = modulation
        .field
        .values
        .iter()
        .map(|v| {
            let a = v.norm();
            if a > slack {
                return Err(Error::Domain {
                    value: a.as_f64(),
                    domain: "|V| <= 1",
                });
            }
            Ok(invert_j1(a.min(T::one()))? * v.arg().sin())
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(Hologram {
        grid: modulation.field.grid,
        carriers: modulation.carriers,
        vmax: modulation.vmax,
        phase,
    })
}

impl<T: Real> Hologram<T> {
    /// Phase mapped linearly from `[-pi, pi]` to `[0, 255]`.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.phase
            .iter()
            .map(|&g| {
                let u = ((g + T::PI()) / T::TAU()).max(T::zero()).min(T::one());
                (u * T::lit(255.0)).round().to_u8().unwrap_or(0)
            })
            .collect()
    }

    pub fn sidecar(&self) -> HologramSidecar {
        let (bx, by) = self.carriers.bins(&self.grid);
        HologramSidecar {
            nx: self.grid.nx,
            ny: self.grid.ny,
            pitch_um: self.grid.pitch_um.as_f64(),
            sigma_um: self.grid.sigma_um.as_f64(),
            kx_rad_per_um: self.carriers.kx.as_f64(),
            ky_rad_per_um: self.carriers.ky.as_f64(),
            carrier_bins: [bx.as_f64(), by.as_f64()],
            vmax: self.vmax.as_f64(),
            kappa: J1_MAX,
            gray_mapping: "phase [-pi, pi] -> [0, 255]".into(),
        }
    }

    /// Writes `<stem>.pgm` and `<stem>.json`.
    pub fn export(&self, dir: &Path, stem: &str) -> std::io::Result<()> {
        use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
        use image::ImageEncoder;
        let pgm = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.pgm")))?);
        PnmEncoder::new(pgm)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(
                &self.to_gray8(),
                self.grid.nx as u32,
                self.grid.ny as u32,
                image::ExtendedColorType::L8,
            )
            .map_err(std::io::Error::other)?;
        let mut f = std::fs::File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(&mut f, &self.sidecar())?;
        f.write_all(b"\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HologramSidecar {
    pub nx: usize,
    pub ny: usize,
    pub pitch_um: f64,
    pub sigma_um: f64,
    pub kx_rad_per_um: f64,
    pub ky_rad_per_um: f64,
    pub carrier_bins: [f64; 2],
    pub vmax: f64,
    pub kappa: f64,
    pub gray_mapping: String,
}

/// Fourier lens and illumination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optics<T> {
    pub focal_length_um: T,
    pub wavelength_um: T,
}

impl<T: Real> Default for Optics<T> {
    /// 150 mm lens at 770 nm.
    fn default() -> Self {
        Self {
            focal_length_um: T::lit(150_000.0),
            wavelength_um: T::lit(0.77),
        }
    }
}

/// Unnormalized 2-D DFT `F[ky, kx] = sum U[y, x] e^{-2 pi i (kx x / nx + ky y / ny)}`.
pub fn fft2<T: HoloReal>(field: &Field<T>) -> Vec<Complex<T>> {
    let (nx, ny) = (field.grid.nx, field.grid.ny);
    let mut planner = FftPlanner::new();
    let mut data = field.values.clone();
    planner.plan_fft_forward(nx).process(&mut data);
    let col_fft = planner.plan_fft_forward(ny);
    let mut col = vec![Complex::new(T::zero(), T::zero()); ny];
    for ix in 0..nx {
        for iy in 0..ny {
            col[iy] = data[iy * nx + ix];
        }
        col_fft.process(&mut col);
        for iy in 0..ny {
            data[iy * nx + ix] = col[iy];
        }
    }
    data
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readout<T> {
    /// Intensity at `(x0', +y0')`, the plus-mode spot.
    pub i_plus: T,
    /// Intensity at `(x0', -y0')`.
    pub i_minus: T,
    /// Intensities rescaled to mode occupancies `|<phi_+-|U>|^2`.
    pub mu_plus: T,
    pub mu_minus: T,
    /// Spot position in the Fourier plane, micrometres.
    pub x0_um: T,
    pub y0_um: T,
    /// Fraction of spot-window energy not explained by the first order.
    pub leakage: T,
    pub leakage_warning: bool,
    /// Relative Parseval defect of the DFT.
    pub parseval_error: T,
}

impl<T: Real> Readout<T> {
    /// `I_+ / (I_+ + I_-)`.
    pub fn plus_fraction(&self) -> T {
        self.i_plus / (self.i_plus + self.i_minus)
    }
}

pub const LEAKAGE_LIMIT: f64 = 0.05;

/// Intensities at the two first-order spots of `U e^{iG}` after a Fourier lens.
pub fn fourier_readout<T: HoloReal>(
    input: &Field<T>,
    hologram: &Hologram<T>,
    optics: Optics<T>,
) -> Result<Readout<T>> {
    let grid = hologram.grid;
    if input.grid != grid {
        return Err(invalid("input", "field and hologram grids differ"));
    }
    hologram.carriers.check_aliasing(&grid)?;
    hologram.carriers.check_separation(&grid)?;

    let modulated = Field {
        grid,
        values: input
            .values
            .iter()
            .zip(&hologram.phase)
            .map(|(u, &g)| u * Complex::new(g.cos(), g.sin()))
            .collect(),
    };
    let spectrum = fft2(&modulated);
    let n = T::from_usize_lossy(grid.len());
    let spectral_energy: T = spectrum.iter().map(|v| v.norm_sqr()).sum();
    let field_energy = modulated.energy();
    let parseval_error = ((spectral_energy - n * field_energy) / (n * field_energy)).abs();

    let (bx, by) = hologram.carriers.bins(&grid);
    let wrap = |b: T, len: usize| -> usize {
        let len_i = len as i64;
        (b.round().to_i64().unwrap_or(0)).rem_euclid(len_i) as usize
    };
    let cx = wrap(bx, grid.nx);
    let cy_plus = wrap(by, grid.ny);
    let cy_minus = wrap(-by, grid.ny);
    let i_plus = spectrum[cy_plus * grid.nx + cx].norm_sqr();
    let i_minus = spectrum[cy_minus * grid.nx + cx].norm_sqr();

    // Reference: the ideal first-order field kappa U V alone.
    let modulation_values = reconstruct_modulation(hologram);
    let kappa = T::lit(J1_MAX);
    let reference = fft2(&Field {
        grid,
        values: input
            .values
            .iter()
            .zip(&modulation_values)
            .map(|(u, v)| u * v * kappa)
            .collect(),
    });
    let radius = T::lit(3.0) * grid.spot_width_bins();
    let (mut diff, mut base) = (T::zero(), T::zero());
    for (cy, cxx) in [(cy_plus, cx), (cy_minus, cx)] {
        for_window(grid, cxx, cy, radius, |i| {
            diff = diff + (spectrum[i] - reference[i]).norm_sqr();
            base = base + reference[i].norm_sqr();
        });
    }
    let leakage = if base > T::zero() { diff / base } else { T::infinity() };

    let scale = hologram.vmax * grid.cell_area() * grid.sigma_um * grid.sigma_um / kappa;
    let scale2 = scale * scale;
    let lambda_l = optics.wavelength_um * optics.focal_length_um / T::TAU();
    Ok(Readout {
        i_plus,
        i_minus,
        mu_plus: i_plus * scale2,
        mu_minus: i_minus * scale2,
        x0_um: lambda_l * hologram.carriers.kx,
        y0_um: lambda_l * hologram.carriers.ky,
        leakage,
        leakage_warning: !(leakage <= T::lit(LEAKAGE_LIMIT)),
        parseval_error,
    })
}

/// `V` recovered from the hologram's own mode definition.
fn reconstruct_modulation<T: Real>(hologram: &Hologram<T>) -> Vec<Complex<T>> {
    let (plus, minus) = pm_modes(hologram.grid);
    modulation_function(&plus, &minus, hologram.carriers)
        .expect("carriers validated")
        .field
        .values
}

fn for_window<T: Real>(grid: GridSpec<T>, cx: usize, cy: usize, radius: T, mut f: impl FnMut(usize)) {
    let r = radius.ceil().to_i64().unwrap_or(0);
    let r2 = radius * radius;
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = T::from_i64(dx * dx + dy * dy).unwrap();
            if d2 > r2 {
                continue;
            }
            let x = (cx as i64 + dx).rem_euclid(grid.nx as i64) as usize;
            let y = (cy as i64 + dy).rem_euclid(grid.ny as i64) as usize;
            f(y * grid.nx + x);
        }
    }
}

/// The full chain on the default PM modes: modes, modulation, hologram.
pub fn pm_hologram<T: Real>(grid: GridSpec<T>, carriers: Carriers<T>) -> Result<Hologram<T>> {
    let (plus, minus) = pm_modes(grid);
    encode_hologram(&modulation_function(&plus, &minus, carriers)?)
}

/// Readout for a point source at `s` alongside the modes module's prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemuxCheck<T> {
    pub s: T,
    pub readout_fraction: T,
    pub model_fraction: T,
    pub relative_error: T,
    pub leakage: T,
}

pub fn demux_check<T: HoloReal>(hologram: &Hologram<T>, s: T, optics: Optics<T>) -> Result<DemuxCheck<T>> {
    let r = fourier_readout(&Field::shifted_psf(hologram.grid, s), hologram, optics)?;
    let mu = Scheme::pm_spade().mu(s);
    let model_fraction = mu[0] / (mu[0] + mu[1]);
    let readout_fraction = r.plus_fraction();
    Ok(DemuxCheck {
        s,
        readout_fraction,
        model_fraction,
        relative_error: ((readout_fraction - model_fraction) / model_fraction).abs(),
        leakage: r.leakage,
    })
}
