use std::collections::HashMap;
use std::sync::RwLock;

use crate::analyze::{condition, mode_spectrum, read_harmonics, AnalysisConfig, NoiseFloor};
use crate::error::{Error, Result};
use crate::model::{
    DispersionModel, InstrumentSpec, ModeDetection, ModeSpec, ResonatorSpec, FWHM_PER_SIGMA,
};
use crate::simulate::{simulate_spectrum, Band};

/// Total loss of the reference fixture used to measure the bias.
pub const BIAS_REFERENCE_R_TILDE: f64 = 0.3;

/// A pass damped below this fraction of its undamped amplitude `2·r_ref^m`
/// counts as lost.
const MIN_SURVIVING_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct BiasOptions {
    /// Band of the measured spectrum; the fixture is simulated over the same range.
    pub band: Band,
    pub analysis: AnalysisConfig,
    pub reference_r_tilde: f64,
}

impl BiasOptions {
    pub fn new(band: Band, analysis: AnalysisConfig) -> Self {
        Self {
            band,
            analysis,
            reference_r_tilde: BIAS_REFERENCE_R_TILDE,
        }
    }
}

/// Closed-form factor for a Gaussian PSF: pass `m` is damped by
/// `exp(−2σ_β²m²(n_g L)²)`, so the ratio over `passes` passes is low by
/// `exp(−2(passes+1)σ_β²(n_g L)²)`.
pub fn analytic_bias_factor(
    group_index: f64,
    length_mm: f64,
    psf_fwhm_pm: f64,
    wavelength_nm: f64,
    passes: usize,
) -> f64 {
    let sigma_lambda = psf_fwhm_pm * 1e-12 / FWHM_PER_SIGMA;
    let lambda = wavelength_nm * 1e-9;
    let sigma_beta = 2.0 * std::f64::consts::PI * sigma_lambda / (lambda * lambda);
    let ol = group_index * length_mm * 1e-3;
    (2.0 * (passes as f64 + 1.0) * (sigma_beta * ol).powi(2)).exp()
}

/// Factor by which instrument resolution lowers the measured total loss of a
/// mode with group index `group_index` in a waveguide of `length_mm`, read
/// from `passes` harmonics.
///
/// A noiseless single mode with known total loss is simulated through the
/// PSF and pixel grid of `instrument` over `options.band`, analysed like a
/// measurement, and the known loss divided by the measured one.
pub fn resolution_bias(
    group_index: f64,
    length_mm: f64,
    instrument: &InstrumentSpec,
    passes: usize,
    options: &BiasOptions,
) -> Result<f64> {
    instrument.validate()?;
    if passes < 2 {
        return Err(Error::config("passes", "at least two passes are needed"));
    }
    if !(group_index > 1.0) || !(length_mm > 0.0) {
        return Err(Error::Domain(format!(
            "need n_g > 1 and L > 0, got {group_index} and {length_mm}"
        )));
    }
    if instrument.psf_fwhm_pm == 0.0 {
        return Ok(1.0);
    }
    let r_ref = options.reference_r_tilde;
    let mode = ModeSpec::new(
        "bias-reference",
        DispersionModel::dispersionless(group_index, options.band.center_nm())?,
        0.0,
        r_ref,
        1.0,
    )?;
    let resonator = ResonatorSpec::new(length_mm, vec![mode])?;
    let fixture_instrument = InstrumentSpec {
        envelope: None,
        noise_sigma: 0.0,
        etalon: None,
        ..instrument.clone()
    };
    let spectrum = simulate_spectrum(&resonator, &fixture_instrument, options.band)?;
    let analysis = &options.analysis;
    let signal = condition(&spectrum, analysis)?;
    let fs = mode_spectrum(&signal, analysis.window, analysis.zero_pad)?;
    let noise = NoiseFloor::estimate(
        &fs,
        analysis.detection.noise_floor_quantile,
        analysis.detection.noise_block_bins,
    );

    let mut cfg = analysis.detection.clone();
    cfg.max_passes = 1;
    let guess = group_index * length_mm / fs.step_mm;
    let first = read_harmonics(&fs, &noise, guess, &[], &cfg);
    let Some(fundamental) = first.first() else {
        return Err(Error::Uncorrectable(format!(
            "optical length {:.3} mm lies outside the transform",
            group_index * length_mm
        )));
    };
    cfg.max_passes = passes;
    let readings = read_harmonics(&fs, &noise, fundamental.peak.position, &[], &cfg);
    if readings.len() < passes {
        return Err(Error::Uncorrectable(format!(
            "pass {passes} at {:.3} mm lies outside the transform",
            passes as f64 * group_index * length_mm
        )));
    }
    let a1 = readings[0].amplitude;
    let ap = readings[passes - 1].amplitude;
    let lost = readings.iter().enumerate().any(|(i, r)| {
        let undamped = 2.0 * r_ref.powi(i as i32 + 1);
        !r.above_floor || !(r.amplitude > MIN_SURVIVING_FRACTION * undamped)
    });
    if lost {
        return Err(Error::Uncorrectable(format!(
            "pass {passes} of the reference mode (n_g = {group_index}, L = {length_mm} mm) is damped beyond recovery at {} pm resolution",
            instrument.psf_fwhm_pm
        )));
    }
    let measured = (ap / a1).powf(1.0 / (passes - 1) as f64);
    Ok(r_ref / measured)
}

/// Caches bias factors for one instrument and band. Safe to share between
/// threads: lookups take a read lock, new entries a short write lock.
#[derive(Debug)]
pub struct BiasCorrector {
    instrument: InstrumentSpec,
    options: BiasOptions,
    cache: RwLock<HashMap<(u64, u64, usize), f64>>,
}

impl BiasCorrector {
    pub fn new(instrument: InstrumentSpec, options: BiasOptions) -> Self {
        Self {
            instrument,
            options,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn instrument(&self) -> &InstrumentSpec {
        &self.instrument
    }

    pub fn factor(&self, group_index: f64, length_mm: f64, passes: usize) -> Result<f64> {
        let key = (group_index.to_bits(), length_mm.to_bits(), passes);
        if let Some(f) = self.cache.read().expect("bias cache poisoned").get(&key) {
            return Ok(*f);
        }
        let f = resolution_bias(
            group_index,
            length_mm,
            &self.instrument,
            passes,
            &self.options,
        )?;
        self.cache
            .write()
            .expect("bias cache poisoned")
            .insert(key, f);
        Ok(f)
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.read().expect("bias cache poisoned").len()
    }

    /// Corrected `(r_tilde, sigma)` for a confirmed detection in a waveguide of `length_mm`.
    pub fn correct(&self, detection: &ModeDetection, length_mm: f64) -> Result<Option<(f64, f64)>> {
        let (Some(r), Some(s)) = (detection.r_tilde, detection.r_tilde_sigma) else {
            return Ok(None);
        };
        let n_g = detection.optical_length_mm / length_mm;
        let f = self.factor(n_g, length_mm, detection.harmonic_amplitudes.len())?;
        Ok(Some((r * f, s * f)))
    }
}
