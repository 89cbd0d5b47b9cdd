use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::signal::WavenumberSignal;
use crate::error::{Error, Result};

/// Fringes needed in the band before mode peaks are trustworthy.
pub const MIN_FRINGES: f64 = 30.0;

pub const AXIS_CONVENTION: &str =
    "kernel exp(-i*x*beta); optical_length = x/2, so pass m of a mode peaks at m*n_g*L";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
    /// Lanczos window, the central lobe of a sinc.
    Sinc,
}

impl Window {
    pub fn weights(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let t = i as f64 / last;
                match self {
                    Window::Rectangular => 1.0,
                    Window::Hann => 0.5 - 0.5 * (2.0 * PI * t).cos(),
                    Window::Sinc => {
                        let x = 2.0 * t - 1.0;
                        if x == 0.0 {
                            1.0
                        } else {
                            (PI * x).sin() / (PI * x)
                        }
                    }
                }
            })
            .collect()
    }

    /// Largest sidelobe of the window's transform at or beyond `distance`
    /// resolution bins from the peak, relative to the peak. `None` inside the
    /// main lobe.
    pub fn sidelobe_envelope(self, distance: f64) -> Option<f64> {
        let t = self.table();
        let d = distance.abs();
        if d < t.first_null {
            return None;
        }
        let i = (d / ENVELOPE_STEP) as usize;
        Some(match t.envelope.get(i) {
            Some(&v) => v,
            // sidelobes of these windows fall at least as 1/d
            None => t.tail * (ENVELOPE_SPAN - 0.5) / d,
        })
    }

    /// Fraction of a line's energy within `half_width` resolution bins of its peak.
    pub fn lobe_energy_fraction(self, half_width: f64) -> f64 {
        let t = self.table();
        let h = half_width.abs();
        let x = h / ENVELOPE_STEP;
        let i = x as usize;
        if i + 1 >= t.cumulative.len() {
            let last = t.cumulative[t.cumulative.len() - 1];
            return 1.0 - (1.0 - last) * ENVELOPE_SPAN / h;
        }
        let f = x - i as f64;
        t.cumulative[i] * (1.0 - f) + t.cumulative[i + 1] * f
    }

    fn table(self) -> &'static SidelobeTable {
        static TABLES: OnceLock<[SidelobeTable; 3]> = OnceLock::new();
        let tables = TABLES.get_or_init(|| {
            [Window::Rectangular, Window::Hann, Window::Sinc].map(SidelobeTable::new)
        });
        &tables[self as usize]
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Rectangular => "rectangular",
            Window::Hann => "hann",
            Window::Sinc => "sinc",
        }
    }
}

const ENVELOPE_STEP: f64 = 1.0 / 32.0;
const ENVELOPE_SPAN: f64 = 64.0;

struct SidelobeTable {
    first_null: f64,
    envelope: Vec<f64>,
    /// Envelope over the last bin of the table.
    tail: f64,
    /// Energy within ± each table distance, as a fraction of the total.
    cumulative: Vec<f64>,
}

impl SidelobeTable {
    fn new(window: Window) -> Self {
        let n = 4096;
        let w = window.weights(n);
        let sum: f64 = w.iter().sum();
        let count = (ENVELOPE_SPAN / ENVELOPE_STEP) as usize + 1;
        let mag: Vec<f64> = (0..count)
            .map(|k| {
                let d = k as f64 * ENVELOPE_STEP;
                let z: Complex<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(i, &wi)| {
                        wi * Complex::from_polar(1.0, -2.0 * PI * d * i as f64 / (n - 1) as f64)
                    })
                    .sum();
                z.norm() / sum
            })
            .collect();
        let null = (1..count - 1)
            .find(|&k| mag[k] <= mag[k - 1] && mag[k] <= mag[k + 1])
            .unwrap_or(count - 1);
        let mut envelope = mag.clone();
        for k in (0..count - 1).rev() {
            envelope[k] = envelope[k].max(envelope[k + 1]);
        }
        let tail = envelope[count - 1 - (1.0 / ENVELOPE_STEP) as usize];
        // Parseval: ∫|W|² over all distances is Σw²·n / (Σw)²
        let total = w.iter().map(|v| v * v).sum::<f64>() * n as f64 / (sum * sum);
        let mut cumulative = vec![0.0; count];
        for k in 1..count {
            let slab = 0.5 * (mag[k - 1].powi(2) + mag[k].powi(2)) * ENVELOPE_STEP;
            cumulative[k] = cumulative[k - 1] + 2.0 * slab / total;
        }
        Self {
            first_null: null as f64 * ENVELOPE_STEP,
            envelope,
            tail,
            cumulative,
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "rect" | "none" => Ok(Window::Rectangular),
            "hann" | "hanning" => Ok(Window::Hann),
            "sinc" | "lanczos" => Ok(Window::Sinc),
            other => Err(Error::config(
                "window",
                format!("unknown window `{other}` (rectangular, hann, sinc)"),
            )),
        }
    }
}

/// Discrete transform `X_k = Σ_j w_j s_j e^{−2πijk/N}` of the windowed
/// samples, zero-padded to `N = zero_pad × len`.
pub fn windowed_transform_complex(
    values: &[Complex<f64>],
    window: Window,
    zero_pad: usize,
) -> Result<Vec<Complex<f64>>> {
    if zero_pad == 0 {
        return Err(Error::config("zero_pad", "must be >= 1"));
    }
    if values.is_empty() {
        return Err(Error::Data("empty signal".into()));
    }
    let n = values.len() * zero_pad;
    let w = window.weights(values.len());
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (i, (v, wi)) in values.iter().zip(&w).enumerate() {
        buf[i] = v * *wi;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    Ok(buf)
}

pub fn windowed_transform(
    values: &[f64],
    window: Window,
    zero_pad: usize,
) -> Result<Vec<Complex<f64>>> {
    let complex: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    windowed_transform_complex(&complex, window, zero_pad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierMeta {
    pub window: Window,
    pub zero_pad: usize,
    /// Oversampling used when the input was resampled, when known.
    pub oversample: Option<usize>,
    /// Input samples.
    pub samples: usize,
    pub beta_step: f64,
    /// Wavelength span of the source record (nm).
    pub source_span_nm: f64,
    pub center_wavelength_nm: f64,
    /// Width of one unpadded transform bin in optical length (mm).
    pub resolution_mm: f64,
    /// `Σw` of the window, the normalization of the amplitude.
    pub window_sum: f64,
    /// `Σw²` of the window.
    pub window_energy: f64,
    pub axis_convention: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Modulus of the transform against optical length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSpectrum {
    /// Spacing of the (zero-padded) optical-length axis, mm.
    pub step_mm: f64,
    pub amplitude: Vec<f64>,
    pub meta: FourierMeta,
}

impl FourierSpectrum {
    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    pub fn optical_length_mm(&self, i: usize) -> f64 {
        i as f64 * self.step_mm
    }

    pub fn optical_length_axis(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.optical_length_mm(i)).collect()
    }

    /// Index nearest to `optical_length_mm`.
    pub fn index_of(&self, optical_length_mm: f64) -> usize {
        ((optical_length_mm / self.step_mm).round().max(0.0) as usize).min(self.len() - 1)
    }

    /// Samples per unpadded resolution bin.
    pub fn samples_per_bin(&self) -> f64 {
        self.meta.resolution_mm / self.step_mm
    }

    /// Fringes contributed to the record by a component at `optical_length_mm`.
    pub fn fringe_count(&self, optical_length_mm: f64) -> f64 {
        optical_length_mm / self.meta.resolution_mm
    }

    /// Factor converting a sum of squared amplitudes over a lobe into the
    /// squared amplitude of the underlying cosine.
    pub fn energy_norm(&self) -> f64 {
        let n = (self.meta.samples * self.meta.zero_pad) as f64;
        self.meta.window_sum.powi(2) / (n * self.meta.window_energy)
    }

    pub fn scaled(&self, factor: f64) -> FourierSpectrum {
        FourierSpectrum {
            amplitude: self.amplitude.iter().map(|a| a * factor).collect(),
            ..self.clone()
        }
    }
}

/// Windowed, zero-padded transform of a conditioned signal on a uniform
/// wavenumber grid. Amplitudes are scaled so a unit cosine fringe peaks at 1.
pub fn mode_spectrum(
    signal: &WavenumberSignal,
    window: Window,
    zero_pad: usize,
) -> Result<FourierSpectrum> {
    if !(signal.beta_step > 0.0) {
        return Err(Error::Data("wavenumber grid must be ascending".into()));
    }
    let m = signal.len();
    if m < 2 {
        return Err(Error::Data("signal needs at least two samples".into()));
    }
    let spectrum = windowed_transform(&signal.values, window, zero_pad)?;
    let w = window.weights(m);
    let window_sum: f64 = w.iter().sum();
    let window_energy: f64 = w.iter().map(|v| v * v).sum();
    let n = spectrum.len();
    let half = n / 2 + 1;
    let mut amplitude: Vec<f64> = spectrum[..half]
        .iter()
        .map(|c| 2.0 * c.norm() / window_sum)
        .collect();
    amplitude[0] *= 0.5;
    if n % 2 == 0 {
        amplitude[half - 1] *= 0.5;
    }
    // x_k = 2πk/(NΔβ); optical length is x/2, converted from m to mm
    let step_mm = PI / (n as f64 * signal.beta_step) * 1e3;
    let resolution_mm = PI / (m as f64 * signal.beta_step) * 1e3;
    let lam_hi = 2.0 * PI / signal.beta_start * 1e9;
    let lam_lo = 2.0 * PI / signal.beta_end() * 1e9;
    let mut warnings = Vec::new();
    if (m as f64) < 2.0 * MIN_FRINGES {
        warnings.push(format!(
            "only {m} samples: the record cannot hold {MIN_FRINGES} resolved fringes"
        ));
    }
    Ok(FourierSpectrum {
        step_mm,
        amplitude,
        meta: FourierMeta {
            window,
            zero_pad,
            oversample: None,
            samples: m,
            beta_step: signal.beta_step,
            source_span_nm: lam_hi - lam_lo,
            center_wavelength_nm: signal.center_wavelength_nm(),
            resolution_mm,
            window_sum,
            window_energy,
            axis_convention: AXIS_CONVENTION.to_string(),
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lobe_energy_fraction_matches_sine_integral() {
        // rectangular: ∫_{-h}^{h} sinc² = (2/π)(Si(2πh) − sin²(πh)/(πh))
        let si = |x: f64| {
            let n = 20_000;
            (0..n)
                .map(|i| {
                    let t = (i as f64 + 0.5) * x / n as f64;
                    t.sin() / t
                })
                .sum::<f64>()
                * x
                / n as f64
        };
        for h in [1.0, 2.5, 4.0, 10.0] {
            let x = PI * h;
            let expected = 2.0 / PI * (si(2.0 * x) - x.sin().powi(2) / x);
            let got = Window::Rectangular.lobe_energy_fraction(h);
            assert!((got - expected).abs() < 1e-3, "h {h}: {got} vs {expected}");
        }
        assert!(Window::Hann.lobe_energy_fraction(4.0) > 0.999);
    }

    #[test]
    fn sidelobe_envelopes_match_textbook_levels() {
        // peak sidelobes: rectangular −13.3 dB, Hann −31.5 dB
        let rect = Window::Rectangular.sidelobe_envelope(1.0).unwrap();
        let hann = Window::Hann.sidelobe_envelope(2.0).unwrap();
        assert!((20.0 * rect.log10() + 13.26).abs() < 0.1, "{rect}");
        assert!((20.0 * hann.log10() + 31.47).abs() < 0.1, "{hann}");
        assert!(Window::Rectangular.sidelobe_envelope(0.9).is_none());
        assert!(Window::Hann.sidelobe_envelope(1.9).is_none());
        let far = Window::Rectangular.sidelobe_envelope(100.5).unwrap();
        assert!((far * PI * 100.5 - 1.0).abs() < 2e-3, "{far}");
        for w in [Window::Rectangular, Window::Hann, Window::Sinc] {
            assert!(w.lobe_energy_fraction(3.0) < w.lobe_energy_fraction(4.0));
            assert!((w.lobe_energy_fraction(500.0) - 1.0).abs() < 1e-3);
            let a = w.sidelobe_envelope(5.0).unwrap();
            let b = w.sidelobe_envelope(10.0).unwrap();
            assert!(b <= a);
        }
    }

    fn cosine(optical_length_mm: f64, amp: f64, n: usize) -> WavenumberSignal {
        let beta_start = 8.03e6;
        let beta_step = 10.0;
        let ol = optical_length_mm * 1e-3;
        WavenumberSignal {
            beta_start,
            beta_step,
            values: (0..n)
                .map(|i| amp * (2.0 * ol * (beta_start + i as f64 * beta_step)).cos())
                .collect(),
        }
    }

    fn naive_dft(x: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v * Complex::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<f64> = (0..50)
            .map(|i| ((i * 7 % 11) as f64).sin() + 0.1 * i as f64)
            .collect();
        for window in [Window::Rectangular, Window::Hann, Window::Sinc] {
            let fast = windowed_transform(&x, window, 3).unwrap();
            let w = window.weights(50);
            let mut padded = vec![Complex::new(0.0, 0.0); 150];
            for i in 0..50 {
                padded[i] = Complex::new(x[i] * w[i], 0.0);
            }
            let slow = naive_dft(&padded);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn unit_cosine_peaks_at_optical_length() {
        // a whole number of bins so the peak falls on a sample
        let n = 20_000;
        let res_mm = PI / (n as f64 * 10.0) * 1e3;
        let ol = 200.0 * res_mm;
        let sig = cosine(ol, 1.0, n);
        for window in [Window::Rectangular, Window::Hann, Window::Sinc] {
            let fs = mode_spectrum(&sig, window, 4).unwrap();
            let (imax, amax) =
                fs.amplitude
                    .iter()
                    .enumerate()
                    .skip(1)
                    .fold(
                        (0, 0.0),
                        |acc, (i, &a)| if a > acc.1 { (i, a) } else { acc },
                    );
            assert!((fs.optical_length_mm(imax) - ol).abs() < 1e-9, "{window}");
            assert!((amax - 1.0).abs() < 1e-3, "{window}: {amax}");
        }
    }

    #[test]
    fn parseval_for_every_window() {
        let x: Vec<f64> = (0..997)
            .map(|i| (i as f64 * 0.37).sin() * (1.0 + 0.001 * i as f64))
            .collect();
        for window in [Window::Rectangular, Window::Hann, Window::Sinc] {
            let w = window.weights(x.len());
            let time: f64 = x.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum();
            let spec = windowed_transform(&x, window, 8).unwrap();
            let freq: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / spec.len() as f64;
            assert!(((time - freq) / time).abs() < 1e-9);
        }
    }

    #[test]
    fn window_parsing() {
        assert_eq!("Hann".parse::<Window>().unwrap(), Window::Hann);
        assert_eq!("sinc".parse::<Window>().unwrap(), Window::Sinc);
        assert!("kaiser".parse::<Window>().is_err());
        let lanczos = Window::Sinc.weights(5);
        assert!((lanczos[2] - 1.0).abs() < 1e-15);
        assert!(lanczos[0].abs() < 1e-15 && lanczos[4].abs() < 1e-15);
    }

    #[test]
    fn short_record_warns() {
        let sig = cosine(1.0, 1.0, 40);
        let fs = mode_spectrum(&sig, Window::Hann, 4).unwrap();
        assert!(!fs.meta.warnings.is_empty());
    }
}
