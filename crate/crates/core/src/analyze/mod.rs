//! From a transmission spectrum to modes: resampling to uniform wavenumber,
//! detrending, the optical-length transform, peak and harmonic detection, and
//! sliding-window spectrograms.

mod detect;
mod signal;
mod spectrogram;
mod transform;

pub use detect::{
    detect_modes, excitation_fractions, lobe_amplitude, read_harmonics, refine_peak,
    AmplitudeEstimator, DetectionConfig, ExcitationShare, HarmonicReading, NoiseFloor, RefinedPeak,
};
pub use signal::{detrend, resample_uniform_wavenumber, Detrend, WavenumberSignal, MIN_SAMPLES};
pub use spectrogram::{spectrogram, Spectrogram, SpectrogramConfig};
pub use transform::{
    mode_spectrum, windowed_transform, windowed_transform_complex, FourierMeta, FourierSpectrum,
    Window, AXIS_CONVENTION, MIN_FRINGES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModeDetection, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub oversample: usize,
    pub window: Window,
    pub zero_pad: usize,
    pub detrend: Detrend,
    pub detection: DetectionConfig,
    /// Fail when the strongest mode has fewer fringes than `detection.min_fringes`.
    pub strict_resolution: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            oversample: 2,
            window: Window::Hann,
            zero_pad: 8,
            detrend: Detrend::default(),
            detection: DetectionConfig::default(),
            strict_resolution: true,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.oversample == 0 {
            return Err(Error::config("oversample", "must be >= 1"));
        }
        if self.zero_pad < 4 {
            return Err(Error::config(
                "zero_pad",
                "must be >= 4 for peak interpolation",
            ));
        }
        self.detection.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub signal: WavenumberSignal,
    pub fourier: FourierSpectrum,
    pub detections: Vec<ModeDetection>,
    pub warnings: Vec<String>,
}

/// Resample to uniform wavenumber and detrend.
pub fn condition(spectrum: &Spectrum, config: &AnalysisConfig) -> Result<WavenumberSignal> {
    let uniform = resample_uniform_wavenumber(spectrum, config.oversample)?;
    detrend(&uniform, config.detrend)
}

/// Full inverse pipeline for one (possibly stitched) spectrum.
pub fn analyze_spectrum(
    spectrum: &Spectrum,
    length_mm: Option<f64>,
    config: &AnalysisConfig,
) -> Result<Analysis> {
    config.validate()?;
    let min_fringes = config.detection.min_fringes;
    if let (true, Some(l), true) = (config.strict_resolution, length_mm, spectrum.len() >= 2) {
        // even the longest plausible optical length cannot be resolved
        let span = 2.0
            * std::f64::consts::PI
            * (1.0 / spectrum.first_nm() - 1.0 / spectrum.last_nm())
            * 1e9;
        let fringes = config.detection.group_index_max * l * 1e-3 * span / std::f64::consts::PI;
        if fringes < min_fringes {
            return Err(Error::Resolution(format!(
                "a {:.3} nm record holds at most {fringes:.1} fringes for L = {l} mm; at least {min_fringes} are needed to resolve the modes",
                spectrum.span_nm()
            )));
        }
    }
    let signal = condition(spectrum, config)?;
    let mut fourier = mode_spectrum(&signal, config.window, config.zero_pad)?;
    fourier.meta.oversample = Some(config.oversample);
    let detections = detect_modes(&fourier, length_mm, &config.detection)?;

    let mut warnings = spectrum.meta.warnings.clone();
    warnings.extend(fourier.meta.warnings.iter().cloned());
    for d in &detections {
        if d.fringe_count < min_fringes {
            warnings.push(format!(
                "mode at {:.4} mm spans only {:.1} fringes (< {min_fringes})",
                d.optical_length_mm, d.fringe_count
            ));
        }
        if d.unresolved {
            warnings.push(format!(
                "mode at {:.4} mm merges maxima closer than {} resolution bins",
                d.optical_length_mm, config.detection.merge_bins
            ));
        }
        if d.unphysical_gain {
            warnings.push(format!(
                "mode at {:.4} mm has a harmonic ratio >= 1",
                d.optical_length_mm
            ));
        }
    }
    if config.strict_resolution {
        let strongest = detections
            .iter()
            .max_by(|a, b| a.peak_amplitude.total_cmp(&b.peak_amplitude));
        let fringes = match (strongest, length_mm) {
            (Some(d), _) => d.fringe_count,
            // nothing found: judge by the longest plausible optical length
            (None, Some(l)) => fourier.fringe_count(config.detection.group_index_max * l),
            (None, None) => f64::INFINITY,
        };
        if fringes < min_fringes {
            return Err(Error::Resolution(format!(
                "{fringes:.1} fringes in a {:.3} nm record; at least {min_fringes} are needed to resolve the modes",
                fourier.meta.source_span_nm
            )));
        }
    }
    Ok(Analysis {
        signal,
        fourier,
        detections,
        warnings,
    })
}
