//! Forward model: multimode Fabry-Perot transmission through a lossy,
//! dispersive waveguide and the measurement chain that records it.
//!
//! Evaluation runs on a dense wavelength grid (an integer subdivision of the
//! pixel grid, padded for the PSF) before PSF convolution and pixel sampling,
//! so fringes narrower than a pixel are not aliased.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::model::{InstrumentSpec, ModeSpec, ResonatorSpec, Spectrum, SpectrumMeta};

const NM: f64 = 1e-9;
const MM: f64 = 1e-3;

/// Half-width of the truncated PSF kernel in standard deviations.
pub const PSF_TRUNCATION_SIGMAS: f64 = 5.0;

/// Closed wavelength interval in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub lo_nm: f64,
    pub hi_nm: f64,
}

impl Band {
    pub fn new(lo_nm: f64, hi_nm: f64) -> Result<Self> {
        let band = Self { lo_nm, hi_nm };
        band.validate()?;
        Ok(band)
    }

    pub fn centered(center_nm: f64, span_nm: f64) -> Result<Self> {
        Self::new(center_nm - 0.5 * span_nm, center_nm + 0.5 * span_nm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo_nm > 0.0 && self.hi_nm > self.lo_nm) || !self.hi_nm.is_finite() {
            return Err(Error::config(
                "band",
                format!("need 0 < lo < hi, got [{}, {}]", self.lo_nm, self.hi_nm),
            ));
        }
        Ok(())
    }

    pub fn span_nm(&self) -> f64 {
        self.hi_nm - self.lo_nm
    }

    pub fn center_nm(&self) -> f64 {
        0.5 * (self.lo_nm + self.hi_nm)
    }
}

/// Airy transmittance of one mode at vacuum wavenumber `beta` (rad/m).
///
/// `T = (1−R)²A / [(1−RA)² + 4RA·sin²(φ + n(β)·L·β)]` with the single-pass
/// intensity attenuation `A = exp(−2kLβ)`.
pub fn single_mode_transmittance(beta: f64, mode: &ModeSpec, length_mm: f64) -> f64 {
    let length = length_mm * MM;
    let r = mode.reflectivity;
    let a = (-2.0 * mode.k * length * beta).exp();
    let ra = r * a;
    let phase = mode.facet_phase + mode.dispersion.index(beta) * length * beta;
    let s = phase.sin();
    (1.0 - r).powi(2) * a / ((1.0 - ra).powi(2) + 4.0 * ra * s * s)
}

/// Weighted sum `Σ x_i T_i` on a wavelength grid (nm).
pub fn multimode_spectrum(resonator: &ResonatorSpec, grid_nm: &[f64]) -> Result<Spectrum> {
    resonator.validate()?;
    let intensity = grid_nm
        .iter()
        .map(|&lambda| {
            let beta = 2.0 * std::f64::consts::PI / (lambda * NM);
            resonator
                .modes
                .iter()
                .map(|m| m.excitation * single_mode_transmittance(beta, m, resonator.length_mm))
                .sum()
        })
        .collect();
    Spectrum::new(grid_nm.to_vec(), intensity)
}

/// Pixel wavelengths `lo + i·pitch` inside the band.
pub fn pixel_grid(band: Band, pitch_pm: f64) -> Vec<f64> {
    let pitch = pitch_pm * 1e-3;
    let count = ((band.span_nm() / pitch) + 1e-9).floor() as usize + 1;
    (0..count).map(|i| band.lo_nm + i as f64 * pitch).collect()
}

/// Padding needed on each side of a band for the PSF kernel, in nm.
pub fn psf_padding_nm(instrument: &InstrumentSpec) -> f64 {
    PSF_TRUNCATION_SIGMAS * instrument.psf_sigma_nm()
}

/// Dense evaluation grid: the pixel grid subdivided `dense_factor` times and
/// extended past both band edges by the PSF padding plus two pixels.
pub fn dense_grid(band: Band, instrument: &InstrumentSpec) -> Vec<f64> {
    let pitch = instrument.pixel_pitch_pm * 1e-3;
    let step = pitch / instrument.dense_factor as f64;
    let pad = psf_padding_nm(instrument) + 2.0 * pitch;
    let pad_steps = (pad / step).ceil() as i64;
    let pixels = pixel_grid(band, instrument.pixel_pitch_pm).len() as i64;
    let last = (pixels - 1) * instrument.dense_factor as i64 + pad_steps;
    (-pad_steps..=last)
        .map(|j| band.lo_nm + j as f64 * step)
        .collect()
}

fn gaussian_kernel(sigma_samples: f64) -> Vec<f64> {
    let half = (PSF_TRUNCATION_SIGMAS * sigma_samples).ceil() as i64;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|j| {
            let x = j as f64 / sigma_samples;
            (-0.5 * x * x).exp()
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= total);
    kernel
}

fn is_uniform(x: &[f64]) -> bool {
    let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    x.windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-6 * step)
}

/// Record `spectrum` through the instrument onto the pixel grid of `band`.
///
/// In order: source envelope, parasitic etalon, Gaussian PSF convolution,
/// sampling at the pixel wavelengths, then additive Gaussian noise with
/// standard deviation `noise_sigma × local intensity` drawn from `rng_seed`.
pub fn apply_instrument(
    spectrum: &Spectrum,
    instrument: &InstrumentSpec,
    band: Band,
) -> Result<Spectrum> {
    instrument.validate()?;
    band.validate()?;
    let pad = psf_padding_nm(instrument);
    if spectrum.first_nm() > band.lo_nm - pad + 1e-9 || spectrum.last_nm() < band.hi_nm + pad - 1e-9
    {
        return Err(Error::config(
            "instrument.psf_fwhm_pm",
            format!(
                "input spectrum [{:.4}, {:.4}] nm does not cover the band [{:.4}, {:.4}] nm plus {:.4} nm PSF padding",
                spectrum.first_nm(),
                spectrum.last_nm(),
                band.lo_nm,
                band.hi_nm,
                pad
            ),
        ));
    }

    // Uniform working grid for the convolution.
    let (grid, mut values) = if is_uniform(spectrum.wavelength_nm()) {
        (
            spectrum.wavelength_nm().to_vec(),
            spectrum.intensity().to_vec(),
        )
    } else {
        let n = spectrum.len();
        let lo = spectrum.first_nm();
        let step = spectrum.span_nm() / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
        let spline = CubicSpline::new(spectrum.wavelength_nm(), spectrum.intensity())?;
        let values = spline.eval_sorted(&grid);
        (grid, values)
    };

    if let Some(envelope) = &instrument.envelope {
        for (v, &l) in values.iter_mut().zip(&grid) {
            *v *= envelope.at(l);
        }
    }
    if let Some(etalon) = &instrument.etalon {
        for (v, &l) in values.iter_mut().zip(&grid) {
            *v *= etalon.at(l);
        }
    }

    if instrument.psf_fwhm_pm > 0.0 {
        let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
        let kernel = gaussian_kernel(instrument.psf_sigma_nm() / step);
        let half = kernel.len() / 2;
        if kernel.len() > values.len() {
            return Err(Error::config(
                "instrument.psf_fwhm_pm",
                "PSF kernel is wider than the spectrum span",
            ));
        }
        let mut out = vec![0.0; values.len()];
        // only the interior where the kernel fits is valid; the band lies inside it
        for i in half..values.len() - half {
            out[i] = kernel
                .iter()
                .zip(&values[i - half..=i + half])
                .map(|(k, v)| k * v)
                .sum();
        }
        values = out;
    }

    let pixels = pixel_grid(band, instrument.pixel_pitch_pm);
    let spline = CubicSpline::new(&grid, &values)?;
    let mut sampled = spline.eval_sorted(&pixels);

    if instrument.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(instrument.rng_seed);
        let normal = Normal::new(0.0, instrument.noise_sigma).expect("finite sigma");
        for v in sampled.iter_mut() {
            let z: f64 = normal.sample(&mut rng);
            *v = (*v * (1.0 + z)).max(0.0);
        }
    }
    for v in sampled.iter_mut() {
        *v = v.max(0.0);
    }

    let meta = SpectrumMeta {
        central_wavelength_nm: spectrum.meta.central_wavelength_nm,
        source: spectrum.meta.source.clone(),
        warnings: spectrum.meta.warnings.clone(),
    };
    Ok(Spectrum::new(pixels, sampled)?.with_meta(meta))
}

/// Noise-free model on the dense grid, then the instrument, for one band.
pub fn simulate_spectrum(
    resonator: &ResonatorSpec,
    instrument: &InstrumentSpec,
    band: Band,
) -> Result<Spectrum> {
    instrument.validate()?;
    band.validate()?;
    let dense = multimode_spectrum(resonator, &dense_grid(band, instrument))?;
    apply_instrument(&dense, instrument, band)
}

/// Central wavelengths of a set of spectrograph exposures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposurePlan {
    pub central_wavelengths_nm: Vec<f64>,
    /// Coverage of each exposure.
    pub span_nm: f64,
    /// Per-exposure intensity factors (source drift, integration time); empty means 1.
    #[serde(default)]
    pub intensity_scales: Vec<f64>,
    /// Whether the exposures are meant to be stitched.
    #[serde(default = "default_true")]
    pub stitch: bool,
}

fn default_true() -> bool {
    true
}

impl ExposurePlan {
    /// `count` exposures centered on `center_nm` with a fixed overlap between neighbours.
    pub fn evenly_spaced(center_nm: f64, count: usize, span_nm: f64, overlap_nm: f64) -> Self {
        let spacing = span_nm - overlap_nm;
        let first = center_nm - 0.5 * spacing * (count.saturating_sub(1)) as f64;
        Self {
            central_wavelengths_nm: (0..count).map(|i| first + i as f64 * spacing).collect(),
            span_nm,
            intensity_scales: Vec::new(),
            stitch: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.central_wavelengths_nm.is_empty() {
            return Err(Error::config("plan.central_wavelengths_nm", "no exposures"));
        }
        if !(self.span_nm > 0.0) {
            return Err(Error::config("plan.span_nm", "must be positive"));
        }
        if self
            .central_wavelengths_nm
            .windows(2)
            .any(|w| !(w[1] > w[0]))
        {
            return Err(Error::config(
                "plan.central_wavelengths_nm",
                "must be strictly increasing",
            ));
        }
        if !self.intensity_scales.is_empty()
            && (self.intensity_scales.len() != self.central_wavelengths_nm.len()
                || self.intensity_scales.iter().any(|s| !(*s > 0.0)))
        {
            return Err(Error::config(
                "plan.intensity_scales",
                "need one positive factor per exposure",
            ));
        }
        Ok(())
    }

    /// Overlap between each pair of neighbouring exposures.
    pub fn overlaps_nm(&self) -> Vec<f64> {
        self.central_wavelengths_nm
            .windows(2)
            .map(|w| self.span_nm - (w[1] - w[0]))
            .collect()
    }

    pub fn coverage(&self) -> Band {
        let first = self.central_wavelengths_nm[0];
        let last = self.central_wavelengths_nm[self.central_wavelengths_nm.len() - 1];
        Band {
            lo_nm: first - 0.5 * self.span_nm,
            hi_nm: last + 0.5 * self.span_nm,
        }
    }

    pub fn bands(&self) -> Vec<Band> {
        self.central_wavelengths_nm
            .iter()
            .map(|&c| Band {
                lo_nm: c - 0.5 * self.span_nm,
                hi_nm: c + 0.5 * self.span_nm,
            })
            .collect()
    }
}

/// Seed for exposure `index` derived from the instrument seed.
pub fn exposure_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One recorded spectrum per central wavelength of `plan`.
///
/// Every exposure is drawn from the same underlying model; exposures are
/// tagged with their central wavelength, and a plan intended for stitching
/// whose neighbours do not overlap carries a warning in each exposure's metadata.
pub fn simulate_exposures(
    resonator: &ResonatorSpec,
    instrument: &InstrumentSpec,
    plan: &ExposurePlan,
) -> Result<Vec<Spectrum>> {
    plan.validate()?;
    let mut warnings = Vec::new();
    if plan.stitch {
        for (i, overlap) in plan.overlaps_nm().iter().enumerate() {
            if *overlap <= 0.0 {
                warnings.push(format!(
                    "exposures {i} and {} do not overlap ({overlap:.3} nm); stitching will fail",
                    i + 1
                ));
            }
        }
    }
    plan.bands()
        .into_iter()
        .enumerate()
        .map(|(i, band)| {
            let mut inst = instrument.clone();
            inst.rng_seed = exposure_seed(instrument.rng_seed, i);
            let mut spectrum = simulate_spectrum(resonator, &inst, band)?;
            if let Some(scale) = plan.intensity_scales.get(i) {
                spectrum = spectrum.scaled(*scale);
            }
            spectrum.meta.central_wavelength_nm = Some(plan.central_wavelengths_nm[i]);
            spectrum.meta.source = Some(format!("exposure {i}"));
            spectrum.meta.warnings.extend(warnings.iter().cloned());
            Ok(spectrum)
        })
        .collect()
}
