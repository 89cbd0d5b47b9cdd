use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::model::Spectrum;

/// Minimum number of input samples accepted for resampling.
pub const MIN_SAMPLES: usize = 16;

/// Samples on a uniform grid of vacuum wavenumber (rad/m), ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavenumberSignal {
    pub beta_start: f64,
    pub beta_step: f64,
    pub values: Vec<f64>,
}

impl WavenumberSignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.beta_start + i as f64 * self.beta_step
    }

    pub fn beta_end(&self) -> f64 {
        self.beta(self.len() - 1)
    }

    /// `N·Δβ`, the span that sets the transform's resolution.
    pub fn record_span(&self) -> f64 {
        self.len() as f64 * self.beta_step
    }

    /// Wavelength (nm) of the centre of the wavenumber range.
    pub fn center_wavelength_nm(&self) -> f64 {
        let mid = 0.5 * (self.beta_start + self.beta_end());
        2.0 * std::f64::consts::PI / mid * 1e9
    }

    /// Contiguous sub-range `[start, start+len)`.
    pub fn slice(&self, start: usize, len: usize) -> WavenumberSignal {
        WavenumberSignal {
            beta_start: self.beta(start),
            beta_step: self.beta_step,
            values: self.values[start..start + len].to_vec(),
        }
    }

    pub fn scaled(&self, factor: f64) -> WavenumberSignal {
        WavenumberSignal {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Interpolate a wavelength-sampled spectrum onto a uniform wavenumber grid
/// with `oversample × len` points spanning the same range.
pub fn resample_uniform_wavenumber(
    spectrum: &Spectrum,
    oversample: usize,
) -> Result<WavenumberSignal> {
    if oversample == 0 {
        return Err(Error::config("oversample", "must be >= 1"));
    }
    let n = spectrum.len();
    if n < MIN_SAMPLES {
        return Err(Error::Data(format!(
            "{n} samples; at least {MIN_SAMPLES} are needed"
        )));
    }
    if spectrum.wavelength_nm().windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Data(
            "wavelength axis is not strictly increasing".into(),
        ));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let beta: Vec<f64> = spectrum
        .wavelength_nm()
        .iter()
        .rev()
        .map(|l| two_pi / (l * 1e-9))
        .collect();
    let values: Vec<f64> = spectrum.intensity().iter().rev().copied().collect();
    let spline = CubicSpline::new(&beta, &values)?;
    let count = n * oversample;
    let start = beta[0];
    let end = beta[n - 1];
    let step = (end - start) / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count).map(|i| start + i as f64 * step).collect();
    grid[count - 1] = end;
    let mut out = spline.eval_sorted(&grid);
    out[0] = values[0];
    out[count - 1] = values[n - 1];
    Ok(WavenumberSignal {
        beta_start: start,
        beta_step: step,
        values: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Detrend {
    /// Divide by a smooth baseline spanning at least 20 fringes of the
    /// shortest optical length of interest, then remove the mean.
    DivideSmoothBaseline {
        min_optical_length_mm: f64,
    },
    SubtractMean,
}

impl Default for Detrend {
    fn default() -> Self {
        Detrend::DivideSmoothBaseline {
            min_optical_length_mm: 2.5,
        }
    }
}

/// Fringe periods covered by the baseline window.
pub const BASELINE_FRINGES: f64 = 20.0;

fn box_average(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + values[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Remove the slowly varying background so the fringes oscillate about zero.
pub fn detrend(signal: &WavenumberSignal, method: Detrend) -> Result<WavenumberSignal> {
    let values = match method {
        Detrend::SubtractMean => {
            let mean = signal.values.iter().sum::<f64>() / signal.len() as f64;
            signal.values.iter().map(|v| v - mean).collect()
        }
        Detrend::DivideSmoothBaseline {
            min_optical_length_mm,
        } => {
            if !(min_optical_length_mm > 0.0) {
                return Err(Error::config(
                    "detrend.min_optical_length_mm",
                    "must be positive",
                ));
            }
            let period = std::f64::consts::PI / (min_optical_length_mm * 1e-3);
            let width = BASELINE_FRINGES * period;
            let span = signal.beta_step * (signal.len() - 1) as f64;
            if width > span {
                return Err(Error::config(
                    "detrend.min_optical_length_mm",
                    format!(
                        "baseline window ({width:.0} rad/m) is wider than the signal ({span:.0} rad/m)"
                    ),
                ));
            }
            if signal.values.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Data(
                    "baseline division needs strictly positive intensities".into(),
                ));
            }
            let half = ((0.5 * width / signal.beta_step).round() as usize).max(1);
            // two passes of a box give a triangular kernel
            let baseline = box_average(&box_average(&signal.values, half), half);
            let ratio: Vec<f64> = signal
                .values
                .iter()
                .zip(&baseline)
                .map(|(v, b)| v / b - 1.0)
                .collect();
            let mean = ratio.iter().sum::<f64>() / ratio.len() as f64;
            ratio.into_iter().map(|v| v - mean).collect()
        }
    };
    Ok(WavenumberSignal {
        beta_start: signal.beta_start,
        beta_step: signal.beta_step,
        values,
    })
}
