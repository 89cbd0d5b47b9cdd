use serde::{Deserialize, Serialize};

use super::transform::{FourierSpectrum, MIN_FRINGES};
use crate::error::{Error, Result};
use crate::fit::total_loss_ratio;
use crate::model::ModeDetection;

/// How the height of each harmonic is read from the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeEstimator {
    /// Energy summed over the peak's lobe, noise-debiased. Robust against
    /// the broadening of higher passes by dispersion.
    LobeEnergy,
    /// Interpolated maximum of the peak.
    Peak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub noise_floor_quantile: f64,
    /// Peaks must exceed this multiple of the local noise floor.
    pub min_prominence: f64,
    /// Peaks weaker than this fraction of the strongest are ignored.
    pub min_relative_amplitude: f64,
    /// Plausible group-index range, used when the physical length is known.
    pub group_index_min: f64,
    pub group_index_max: f64,
    /// Search range in optical length when the physical length is unknown.
    pub min_optical_length_mm: f64,
    pub max_optical_length_mm: Option<f64>,
    pub max_passes: usize,
    /// Maxima closer than this (resolution bins) are merged and flagged.
    pub merge_bins: f64,
    /// A peak below this multiple of the window's sidelobe envelope, measured
    /// from a stronger peak, is taken as that peak's sidelobe.
    pub sidelobe_margin: f64,
    /// A peak offset from a mode by the optical length of a carrier below the
    /// search range, and weaker than this fraction of the mode, is a mixing
    /// product of the two.
    pub mixing_ratio: f64,
    /// Half-width of the search for pass `m` around `m` times the fundamental.
    pub harmonic_search_bins: f64,
    pub estimator: AmplitudeEstimator,
    /// Lobe half-width for the first pass; pass `m` uses `m` times this.
    pub lobe_half_width_bins: f64,
    /// Cap on the excitation integration half-window.
    pub excitation_window_bins: f64,
    pub noise_block_bins: f64,
    pub min_fringes: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            noise_floor_quantile: 0.9,
            min_prominence: 3.0,
            min_relative_amplitude: 0.01,
            group_index_min: 1.0,
            group_index_max: 6.0,
            min_optical_length_mm: 0.5,
            max_optical_length_mm: None,
            max_passes: 4,
            merge_bins: 2.0,
            sidelobe_margin: 2.0,
            mixing_ratio: 0.5,
            harmonic_search_bins: 1.0,
            estimator: AmplitudeEstimator::LobeEnergy,
            lobe_half_width_bins: 4.0,
            excitation_window_bins: 10.0,
            noise_block_bins: 128.0,
            min_fringes: MIN_FRINGES,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("detection.{field}"), msg))
            }
        };
        check(
            self.noise_floor_quantile > 0.0 && self.noise_floor_quantile < 1.0,
            "noise_floor_quantile",
            "must lie in (0, 1)",
        )?;
        check(
            self.min_prominence > 0.0,
            "min_prominence",
            "must be positive",
        )?;
        check(
            (0.0..1.0).contains(&self.min_relative_amplitude),
            "min_relative_amplitude",
            "must lie in [0, 1)",
        )?;
        check(
            self.group_index_min > 0.0 && self.group_index_max > self.group_index_min,
            "group_index_min",
            "need 0 < min < max",
        )?;
        check(
            self.min_optical_length_mm >= 0.0,
            "min_optical_length_mm",
            "must be >= 0",
        )?;
        check(self.max_passes >= 2, "max_passes", "must be >= 2")?;
        check(self.merge_bins > 0.0, "merge_bins", "must be positive")?;
        check(
            self.sidelobe_margin >= 1.0,
            "sidelobe_margin",
            "must be >= 1",
        )?;
        check(
            (0.0..1.0).contains(&self.mixing_ratio),
            "mixing_ratio",
            "must lie in [0, 1)",
        )?;
        check(
            self.lobe_half_width_bins >= 1.0,
            "lobe_half_width_bins",
            "must be >= 1",
        )?;
        check(
            self.excitation_window_bins >= 1.0,
            "excitation_window_bins",
            "must be >= 1",
        )?;
        check(
            self.noise_block_bins >= 8.0,
            "noise_block_bins",
            "must be >= 8",
        )?;
        Ok(())
    }
}

/// Blockwise estimate of the background level of a transform.
///
/// Block medians are used throughout, so mode lobes covering up to half of a
/// block do not raise the floor. The level is the requested quantile of a
/// Rayleigh distribution with the observed median.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFloor {
    centers: Vec<f64>,
    level: Vec<f64>,
    power: Vec<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl NoiseFloor {
    pub fn estimate(fs: &FourierSpectrum, level_quantile: f64, block_bins: f64) -> Self {
        let n = fs.len();
        let block = ((block_bins * fs.samples_per_bin()).round() as usize).clamp(16, n.max(16));
        let mut starts: Vec<usize> = (0..n).step_by(block).collect();
        if starts.len() > 1 && n - starts[starts.len() - 1] < block / 2 {
            starts.pop();
        }
        let mut centers = Vec::new();
        let mut level = Vec::new();
        let mut power = Vec::new();
        for (b, &s) in starts.iter().enumerate() {
            let e = starts.get(b + 1).copied().unwrap_or(n);
            let mut amps: Vec<f64> = fs.amplitude[s..e].to_vec();
            amps.sort_by(f64::total_cmp);
            let mut pw: Vec<f64> = amps.iter().map(|a| a * a).collect();
            pw.sort_by(f64::total_cmp);
            centers.push(0.5 * (s + e - 1) as f64);
            let rayleigh = ((1.0 / (1.0 - level_quantile)).ln() / std::f64::consts::LN_2).sqrt();
            level.push(quantile(&amps, 0.5) * rayleigh);
            // median of an exponential distribution is ln 2 times its mean
            power.push(quantile(&pw, 0.5) / std::f64::consts::LN_2);
        }
        Self {
            centers,
            level,
            power,
        }
    }

    fn interp(&self, values: &[f64], i: f64) -> f64 {
        let c = &self.centers;
        if i <= c[0] {
            return values[0];
        }
        if i >= c[c.len() - 1] {
            return values[values.len() - 1];
        }
        let k = c.partition_point(|&x| x <= i) - 1;
        let t = (i - c[k]) / (c[k + 1] - c[k]);
        values[k] + t * (values[k + 1] - values[k])
    }

    /// Amplitude quantile near sample `i`.
    pub fn level_at(&self, i: f64) -> f64 {
        self.interp(&self.level, i)
    }

    /// Mean squared noise amplitude per sample near `i`.
    pub fn power_at(&self, i: f64) -> f64 {
        self.interp(&self.power, i)
    }

    /// Mean noise amplitude (Rayleigh mean) near `i`.
    pub fn mean_amplitude_at(&self, i: f64) -> f64 {
        (std::f64::consts::FRAC_PI_4 * self.power_at(i)).sqrt()
    }
}

/// A peak refined by quadratic interpolation of the log-amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedPeak {
    pub index: usize,
    /// Fractional sample position.
    pub position: f64,
    pub height: f64,
}

pub fn refine_peak(amplitude: &[f64], i: usize) -> RefinedPeak {
    if i == 0 || i + 1 >= amplitude.len() {
        return RefinedPeak {
            index: i,
            position: i as f64,
            height: amplitude[i],
        };
    }
    let (a, b, c) = (amplitude[i - 1], amplitude[i], amplitude[i + 1]);
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return RefinedPeak {
            index: i,
            position: i as f64,
            height: b,
        };
    }
    let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
    let denom = la - 2.0 * lb + lc;
    if denom >= 0.0 {
        return RefinedPeak {
            index: i,
            position: i as f64,
            height: b,
        };
    }
    let delta = (0.5 * (la - lc) / denom).clamp(-0.5, 0.5);
    RefinedPeak {
        index: i,
        position: i as f64 + delta,
        height: (lb - 0.25 * (la - lc) * delta).exp(),
    }
}

fn local_maxima(amplitude: &[f64], lo: usize, hi: usize) -> Vec<usize> {
    let lo = lo.max(1);
    let hi = hi.min(amplitude.len().saturating_sub(2));
    (lo..=hi)
        .filter(|&i| amplitude[i] > amplitude[i - 1] && amplitude[i] >= amplitude[i + 1])
        .collect()
}

/// Reading of one pass of a mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicReading {
    pub pass: usize,
    pub peak: RefinedPeak,
    /// Height used downstream, per the configured estimator.
    pub amplitude: f64,
    /// Peak height exceeds the detection threshold.
    pub above_floor: bool,
}

/// Lobe-energy amplitude around sample `center` with `half` samples on each
/// side, corrected for the energy the window leaks outside them.
pub fn lobe_amplitude(fs: &FourierSpectrum, noise: &NoiseFloor, center: usize, half: usize) -> f64 {
    let lo = center.saturating_sub(half).max(1);
    let hi = (center + half).min(fs.len() - 1);
    let sum: f64 = fs.amplitude[lo..=hi].iter().map(|a| a * a).sum();
    let count = (hi - lo + 1) as f64;
    let debiased = (sum - count * noise.power_at(center as f64)).max(0.0);
    let inside = fs
        .meta
        .window
        .lobe_energy_fraction((half as f64 + 0.5) / fs.samples_per_bin());
    (debiased * fs.energy_norm() / inside).sqrt()
}

/// Read passes `1..=max_passes` of a mode whose fundamental sits at
/// `position` (fractional sample). `others` lists positions (samples) of all
/// other peaks that limit the lobe width.
pub fn read_harmonics(
    fs: &FourierSpectrum,
    noise: &NoiseFloor,
    position: f64,
    others: &[f64],
    config: &DetectionConfig,
) -> Vec<HarmonicReading> {
    let spb = fs.samples_per_bin();
    let search = (config.harmonic_search_bins * spb).ceil() as usize;
    let mut out = Vec::new();
    for m in 1..=config.max_passes {
        let target = m as f64 * position;
        if target + search as f64 + 2.0 >= fs.len() as f64 {
            break;
        }
        let c = target.round() as usize;
        let lo = c.saturating_sub(search).max(1);
        let hi = (c + search).min(fs.len() - 2);
        let imax = (lo..=hi)
            .max_by(|&a, &b| fs.amplitude[a].total_cmp(&fs.amplitude[b]))
            .unwrap_or(c);
        let peak = refine_peak(&fs.amplitude, imax);
        let threshold = config.min_prominence * noise.level_at(peak.position);
        let above_floor = peak.height > threshold && peak.height > 0.0;
        let amplitude = match config.estimator {
            AmplitudeEstimator::Peak => peak.height,
            AmplitudeEstimator::LobeEnergy => {
                let gap = others
                    .iter()
                    .map(|o| (o - peak.position).abs())
                    .fold(f64::INFINITY, f64::min);
                let half = (m as f64 * config.lobe_half_width_bins * spb)
                    .min(0.5 * gap)
                    .max(spb)
                    .round() as usize;
                lobe_amplitude(fs, noise, imax, half)
            }
        };
        out.push(HarmonicReading {
            pass: m,
            peak,
            amplitude,
            above_floor,
        });
    }
    out
}

/// Share of the first-pass signal carried by one detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationShare {
    /// `None` for unconfirmed detections.
    pub fraction: Option<f64>,
    pub window_truncated: bool,
}

/// Integrate the first-pass peak of every confirmed detection and normalize.
///
/// Each peak is integrated over ± half the gap to its nearest neighbour,
/// capped at `excitation_window_bins`, after removing the mean noise amplitude.
pub fn excitation_fractions(
    fs: &FourierSpectrum,
    detections: &[ModeDetection],
    config: &DetectionConfig,
) -> Result<Vec<ExcitationShare>> {
    if !detections.iter().any(|d| d.confirmed) {
        return Err(Error::Data(
            "no confirmed mode to attribute excitation to".into(),
        ));
    }
    let noise = NoiseFloor::estimate(fs, config.noise_floor_quantile, config.noise_block_bins);
    let spb = fs.samples_per_bin();
    let cap = config.excitation_window_bins * spb;
    let positions: Vec<f64> = detections
        .iter()
        .map(|d| d.optical_length_mm / fs.step_mm)
        .collect();
    let mut integrals = Vec::with_capacity(detections.len());
    let mut shares = Vec::with_capacity(detections.len());
    for (i, d) in detections.iter().enumerate() {
        let half_gap = positions
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| 0.5 * (p - positions[i]).abs())
            .fold(f64::INFINITY, f64::min);
        let half = half_gap.min(cap);
        let lo = ((positions[i] - half).ceil().max(1.0)) as usize;
        let hi = ((positions[i] + half).floor() as usize).min(fs.len() - 1);
        let integral: f64 = (lo..=hi)
            .map(|k| fs.amplitude[k] - noise.mean_amplitude_at(k as f64))
            .sum::<f64>()
            .max(0.0);
        integrals.push(if d.confirmed { integral } else { 0.0 });
        shares.push(ExcitationShare {
            fraction: None,
            window_truncated: half_gap < cap,
        });
    }
    let total: f64 = integrals.iter().sum();
    for ((share, d), integral) in shares.iter_mut().zip(detections).zip(&integrals) {
        if d.confirmed {
            share.fraction = Some(if total > 0.0 { integral / total } else { 0.0 });
        }
    }
    Ok(shares)
}

struct Candidate {
    peak: RefinedPeak,
    unresolved: bool,
}

const MAX_CARRIERS: usize = 4;

/// Find mode peaks in the optical-length domain and read their harmonic ladders.
///
/// With `length_mm` the search covers the plausible group-index range,
/// otherwise `[min_optical_length_mm, max_optical_length_mm]`. Detections are
/// returned in order of optical length.
pub fn detect_modes(
    fs: &FourierSpectrum,
    length_mm: Option<f64>,
    config: &DetectionConfig,
) -> Result<Vec<ModeDetection>> {
    config.validate()?;
    if fs.meta.zero_pad < 4 {
        return Err(Error::config(
            "zero_pad",
            format!(
                "peak interpolation needs zero_pad >= 4, got {}",
                fs.meta.zero_pad
            ),
        ));
    }
    if let Some(l) = length_mm {
        if !(l > 0.0) {
            return Err(Error::config("length_mm", "must be positive"));
        }
    }
    let spb = fs.samples_per_bin();
    let res = fs.meta.resolution_mm;
    let axis_max = fs.optical_length_mm(fs.len() - 1);
    let (lo_mm, hi_mm) = match length_mm {
        Some(l) => (config.group_index_min * l, config.group_index_max * l),
        None => (
            config.min_optical_length_mm,
            config.max_optical_length_mm.unwrap_or(0.5 * axis_max),
        ),
    };
    let lo = ((lo_mm / fs.step_mm).floor() as usize).max((2.0 * spb) as usize);
    let hi = ((hi_mm / fs.step_mm).ceil() as usize).min(fs.len().saturating_sub(2));
    if lo >= hi {
        return Ok(Vec::new());
    }

    let noise = NoiseFloor::estimate(fs, config.noise_floor_quantile, config.noise_block_bins);
    let mut candidates: Vec<RefinedPeak> = local_maxima(&fs.amplitude, lo, hi)
        .into_iter()
        .map(|i| refine_peak(&fs.amplitude, i))
        .filter(|p| p.height > config.min_prominence * noise.level_at(p.position))
        .collect();
    candidates.sort_by(|a, b| b.height.total_cmp(&a.height));
    let Some(strongest) = candidates.first().map(|p| p.height) else {
        return Ok(Vec::new());
    };

    // slow multiplicative ripple, e.g. a parasitic etalon
    let mut carriers: Vec<RefinedPeak> = local_maxima(&fs.amplitude, (2.0 * spb) as usize, lo)
        .into_iter()
        .map(|i| refine_peak(&fs.amplitude, i))
        .filter(|p| p.height > config.min_prominence * noise.level_at(p.position))
        .collect();
    carriers.sort_by(|a, b| b.height.total_cmp(&a.height));
    carriers.truncate(MAX_CARRIERS);

    let window = fs.meta.window;
    let mut accepted: Vec<Candidate> = Vec::new();
    for peak in candidates {
        if peak.height < config.min_relative_amplitude * strongest {
            break;
        }
        let sidelobe = accepted.iter().any(|a| {
            window
                .sidelobe_envelope((a.peak.position - peak.position) / spb)
                .is_some_and(|env| peak.height < config.sidelobe_margin * env * a.peak.height)
        });
        if sidelobe {
            continue;
        }
        let mixing = accepted.iter().any(|a| {
            peak.height < config.mixing_ratio * a.peak.height
                && carriers.iter().any(|c| {
                    ((a.peak.position - peak.position).abs() - c.position).abs()
                        < config.merge_bins * spb
                })
        });
        if mixing {
            continue;
        }
        if let Some(a) = accepted
            .iter_mut()
            .find(|a| (a.peak.position - peak.position).abs() < config.merge_bins * spb)
        {
            a.unresolved = true;
            continue;
        }
        let harmonic = accepted.iter().any(|a| {
            (2..=config.max_passes + 1).any(|m| {
                (m as f64 * a.peak.position - peak.position).abs()
                    < config.merge_bins * spb * m as f64
            })
        });
        if harmonic {
            continue;
        }
        accepted.push(Candidate {
            peak,
            unresolved: false,
        });
    }

    let ladder: Vec<(usize, f64)> = accepted
        .iter()
        .enumerate()
        .flat_map(|(i, a)| {
            (1..=config.max_passes + 1).map(move |m| (i, m as f64 * a.peak.position))
        })
        .collect();

    let mut detections: Vec<ModeDetection> = accepted
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let others: Vec<f64> = ladder
                .iter()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| *p)
                .collect();
            let readings = read_harmonics(fs, &noise, a.peak.position, &others, config);
            let usable: Vec<&HarmonicReading> =
                readings.iter().take_while(|r| r.above_floor).collect();
            let amplitudes: Vec<f64> = usable.iter().map(|r| r.amplitude).collect();
            let confirmed = usable.len() >= 2 && amplitudes.iter().all(|&v| v > 0.0);
            let optical_length_mm = a.peak.position * fs.step_mm;
            let (r_tilde, r_tilde_sigma, gain) = if confirmed {
                let noise_amp = noise.power_at(a.peak.position).sqrt();
                match total_loss_ratio(&amplitudes, Some(noise_amp)) {
                    Ok(lr) => (Some(lr.r_tilde), Some(lr.sigma), lr.unphysical_gain),
                    Err(_) => (None, None, false),
                }
            } else {
                (None, None, false)
            };
            ModeDetection {
                optical_length_mm,
                group_index: length_mm.map(|l| optical_length_mm / l),
                harmonic_amplitudes: amplitudes,
                peak_amplitude: a.peak.height,
                r_tilde,
                r_tilde_sigma,
                confirmed,
                excitation_fraction: None,
                fringe_count: optical_length_mm / res,
                unresolved: a.unresolved,
                unphysical_gain: gain,
                window_truncated: false,
            }
        })
        .collect();
    detections.sort_by(|a, b| a.optical_length_mm.total_cmp(&b.optical_length_mm));

    if detections.iter().any(|d| d.confirmed) {
        let shares = excitation_fractions(fs, &detections, config)?;
        for (d, s) in detections.iter_mut().zip(shares) {
            d.excitation_fraction = s.fraction;
            d.window_truncated = s.window_truncated;
        }
    }
    Ok(detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyze::signal::WavenumberSignal;
    use crate::analyze::transform::{mode_spectrum, Window};

    fn ladder(ols_mm: &[f64], amps: &[f64], q: f64, passes: usize) -> WavenumberSignal {
        let n = 16_000;
        let beta_start = 8.03e6;
        let beta_step = 10.0;
        let values = (0..n)
            .map(|i| {
                let beta = beta_start + i as f64 * beta_step;
                ols_mm
                    .iter()
                    .zip(amps)
                    .map(|(ol, a)| {
                        (1..=passes)
                            .map(|m| {
                                a * q.powi(m as i32 - 1) * (2.0 * m as f64 * ol * 1e-3 * beta).cos()
                            })
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect();
        WavenumberSignal {
            beta_start,
            beta_step,
            values,
        }
    }

    #[test]
    fn quadratic_refinement_is_exact_for_gaussians() {
        let amp: Vec<f64> = (0..20)
            .map(|i| (-(i as f64 - 9.3f64).powi(2) / 8.0).exp() * 2.0)
            .collect();
        let p = refine_peak(&amp, 9);
        assert!((p.position - 9.3).abs() < 1e-12);
        assert!((p.height - 2.0).abs() < 1e-12);
    }

    #[test]
    fn finds_two_ladders() {
        let sig = ladder(&[3.3, 3.97], &[0.8, 0.2], 0.3, 5);
        let fs = mode_spectrum(&sig, Window::Hann, 8).unwrap();
        let modes = detect_modes(&fs, Some(0.9), &DetectionConfig::default()).unwrap();
        assert_eq!(modes.len(), 2, "{modes:#?}");
        for (m, ol) in modes.iter().zip([3.3, 3.97]) {
            assert!(m.confirmed);
            assert!((m.optical_length_mm - ol).abs() < 0.05 * fs.meta.resolution_mm);
            assert!((m.r_tilde.unwrap() - 0.3).abs() < 3e-3, "{:?}", m.r_tilde);
            assert_eq!(m.harmonic_amplitudes.len(), 4);
        }
        let f: Vec<f64> = modes
            .iter()
            .map(|m| m.excitation_fraction.unwrap())
            .collect();
        assert!(
            (f[0] - 0.8).abs() < 0.01 && (f[1] - 0.2).abs() < 0.01,
            "{f:?}"
        );
        assert!((modes[0].harmonic_amplitudes[0] - 0.8).abs() < 0.01);
    }

    #[test]
    fn peak_estimator_agrees_on_clean_ladder() {
        let sig = ladder(&[3.3], &[1.0], 0.25, 5);
        let fs = mode_spectrum(&sig, Window::Hann, 8).unwrap();
        let cfg = DetectionConfig {
            estimator: AmplitudeEstimator::Peak,
            ..DetectionConfig::default()
        };
        let modes = detect_modes(&fs, None, &cfg).unwrap();
        assert_eq!(modes.len(), 1);
        assert!((modes[0].r_tilde.unwrap() - 0.25).abs() < 2e-3);
        assert_eq!(modes[0].excitation_fraction, Some(1.0));
    }

    #[test]
    fn noise_only_gives_nothing() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let sig = WavenumberSignal {
            beta_start: 8.03e6,
            beta_step: 10.0,
            values: (0..16_000).map(|_| normal.sample(&mut rng)).collect(),
        };
        let fs = mode_spectrum(&sig, Window::Hann, 8).unwrap();
        let modes = detect_modes(&fs, Some(0.9), &DetectionConfig::default()).unwrap();
        assert!(modes.iter().all(|m| !m.confirmed), "{}", modes.len());
    }

    #[test]
    fn close_maxima_merge() {
        // two narrow maxima 1.5 resolution bins apart on a flat floor
        let mut fs = mode_spectrum(&ladder(&[3.3], &[1.0], 0.3, 3), Window::Hann, 8).unwrap();
        let spb = fs.samples_per_bin();
        let a = fs.index_of(3.3) as f64;
        let b = a + 1.5 * spb;
        for (i, v) in fs.amplitude.iter_mut().enumerate() {
            let x = i as f64;
            let g = |c: f64| (-0.5 * ((x - c) / (0.3 * spb)).powi(2)).exp();
            *v = 1e-4 + g(a) + 0.8 * g(b);
        }
        let modes = detect_modes(&fs, Some(0.9), &DetectionConfig::default()).unwrap();
        assert_eq!(modes.len(), 1);
        assert!(modes[0].unresolved);
        assert!((modes[0].optical_length_mm - 3.3).abs() < 0.5 * fs.meta.resolution_mm);
    }

    #[test]
    fn small_zero_pad_is_rejected() {
        let sig = ladder(&[3.3], &[1.0], 0.3, 3);
        let fs = mode_spectrum(&sig, Window::Hann, 2).unwrap();
        assert!(matches!(
            detect_modes(&fs, None, &DetectionConfig::default()),
            Err(Error::Config { .. })
        ));
    }
}
