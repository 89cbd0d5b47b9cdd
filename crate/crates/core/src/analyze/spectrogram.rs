use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detect::refine_peak;
use super::signal::WavenumberSignal;
use super::transform::{mode_spectrum, FourierSpectrum, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrogramConfig {
    pub window_fraction: f64,
    pub window: Window,
    pub n_slices: usize,
    pub zero_pad: usize,
    /// Smallest spacing between modes that each column should resolve (mm).
    pub resolve_spacing_mm: Option<f64>,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            window_fraction: 0.7,
            window: Window::Sinc,
            n_slices: 21,
            zero_pad: 8,
            resolve_spacing_mm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// Wavelength at the centre of each slice (nm).
    pub center_wavelength_nm: Vec<f64>,
    /// Optical-length axis spacing shared by all columns (mm).
    pub step_mm: f64,
    /// One amplitude column per slice.
    pub columns: Vec<Vec<f64>>,
    pub window_fraction: f64,
    pub window: Window,
    /// Resolution of one column (mm).
    pub resolution_mm: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Spectrogram {
    pub fn optical_length_axis(&self) -> Vec<f64> {
        let n = self.columns.first().map_or(0, Vec::len);
        (0..n).map(|i| i as f64 * self.step_mm).collect()
    }

    /// Refined position (mm) of the strongest peak inside `[lo_mm, hi_mm]` in each column.
    pub fn ridge(&self, lo_mm: f64, hi_mm: f64) -> Vec<f64> {
        let lo = (lo_mm / self.step_mm).ceil().max(1.0) as usize;
        self.columns
            .iter()
            .map(|col| {
                let hi = ((hi_mm / self.step_mm).floor() as usize).min(col.len() - 2);
                let imax = (lo..=hi)
                    .max_by(|&a, &b| col[a].total_cmp(&col[b]))
                    .unwrap_or(lo);
                refine_peak(col, imax).position * self.step_mm
            })
            .collect()
    }
}

/// Sliding-window transforms over a conditioned signal.
///
/// Every slice holds `round(window_fraction × len)` samples; slice offsets are
/// spread evenly over the record and columns are ordered by increasing
/// wavelength. Each column is exactly [`mode_spectrum`] of its slice.
pub fn spectrogram(signal: &WavenumberSignal, config: &SpectrogramConfig) -> Result<Spectrogram> {
    let f = config.window_fraction;
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::config("window_fraction", "must lie in (0, 1]"));
    }
    if config.n_slices < 2 {
        return Err(Error::config("n_slices", "must be >= 2"));
    }
    let n = signal.len();
    let len = ((f * n as f64).round() as usize).clamp(2, n);
    let room = n - len;
    let starts: Vec<usize> = (0..config.n_slices)
        .rev()
        .map(|k| ((k as f64 * room as f64) / (config.n_slices - 1) as f64).round() as usize)
        .collect();

    let columns: Vec<FourierSpectrum> = starts
        .par_iter()
        .map(|&s| mode_spectrum(&signal.slice(s, len), config.window, config.zero_pad))
        .collect::<Result<_>>()?;

    let resolution_mm = columns[0].meta.resolution_mm;
    let mut warnings = Vec::new();
    if let Some(spacing) = config.resolve_spacing_mm {
        if 2.0 * resolution_mm > spacing {
            for (k, c) in columns.iter().enumerate() {
                warnings.push(format!(
                    "slice {k} at {:.3} nm: resolution {:.4} mm cannot separate modes {spacing:.4} mm apart",
                    c.meta.center_wavelength_nm, resolution_mm
                ));
            }
        }
    }
    Ok(Spectrogram {
        center_wavelength_nm: columns
            .iter()
            .map(|c| c.meta.center_wavelength_nm)
            .collect(),
        step_mm: columns[0].step_mm,
        columns: columns.into_iter().map(|c| c.amplitude).collect(),
        window_fraction: f,
        window: config.window,
        resolution_mm,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chirp(n: usize, ol_mm: f64, slope: f64) -> WavenumberSignal {
        // local optical length ol + slope·(β − β_mid)
        let beta_start = 8.03e6;
        let beta_step = 10.0;
        let mid = beta_start + 0.5 * n as f64 * beta_step;
        let values = (0..n)
            .map(|i| {
                let b = beta_start + i as f64 * beta_step;
                let u = b - mid;
                let phase = 2.0 * ol_mm * 1e-3 * b + slope * 1e-3 * u * u;
                phase.cos()
            })
            .collect();
        WavenumberSignal {
            beta_start,
            beta_step,
            values,
        }
    }

    #[test]
    fn full_window_equals_global_transform() {
        let sig = chirp(4000, 3.0, 0.0);
        let cfg = SpectrogramConfig {
            window_fraction: 1.0,
            n_slices: 3,
            ..SpectrogramConfig::default()
        };
        let sg = spectrogram(&sig, &cfg).unwrap();
        let global = mode_spectrum(&sig, Window::Sinc, 8).unwrap();
        for col in &sg.columns {
            assert_eq!(col, &global.amplitude);
        }
    }

    #[test]
    fn flat_and_drifting_ridges() {
        let flat = spectrogram(&chirp(16_000, 3.0, 0.0), &SpectrogramConfig::default()).unwrap();
        let ridge = flat.ridge(2.5, 3.5);
        for r in &ridge {
            assert!((r - 3.0).abs() < flat.resolution_mm);
        }
        let drift = spectrogram(&chirp(16_000, 3.0, 1e-6), &SpectrogramConfig::default()).unwrap();
        let ridge = drift.ridge(2.5, 3.5);
        // optical length grows with β, so it falls with wavelength
        assert!(ridge.windows(2).all(|w| w[1] < w[0]));
        assert!(drift.center_wavelength_nm.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_configuration() {
        let sig = chirp(1000, 3.0, 0.0);
        let mut cfg = SpectrogramConfig {
            window_fraction: 0.0,
            ..SpectrogramConfig::default()
        };
        assert!(spectrogram(&sig, &cfg).is_err());
        cfg.window_fraction = 0.5;
        cfg.n_slices = 1;
        assert!(spectrogram(&sig, &cfg).is_err());
    }

    #[test]
    fn warns_when_too_short_to_resolve() {
        let sig = chirp(2000, 3.0, 0.0);
        let cfg = SpectrogramConfig {
            resolve_spacing_mm: Some(0.01),
            ..SpectrogramConfig::default()
        };
        let sg = spectrogram(&sig, &cfg).unwrap();
        assert_eq!(sg.warnings.len(), cfg.n_slices);
    }
}
