//! Loss extraction: harmonic ratios, resolution-bias correction and the joint
//! fit of facet reflectivity and propagation loss over several lengths.

mod bias;

pub use bias::{
    analytic_bias_factor, resolution_bias, BiasCorrector, BiasOptions, BIAS_REFERENCE_R_TILDE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::alpha_to_db_per_mm;

/// Total loss estimated from a harmonic ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRatio {
    pub r_tilde: f64,
    pub sigma: f64,
    /// Successive ratios `A_{m+1}/A_m`.
    pub ratios: Vec<f64>,
    pub unphysical_gain: bool,
}

/// Geometric mean of successive harmonic ratios.
///
/// With three or more harmonics the uncertainty comes from the scatter of the
/// individual log-ratios; with two it is propagated from `noise_amplitude`.
pub fn total_loss_ratio(amplitudes: &[f64], noise_amplitude: Option<f64>) -> Result<LossRatio> {
    if amplitudes.len() < 2 {
        return Err(Error::Data(format!(
            "need at least two harmonics, got {}",
            amplitudes.len()
        )));
    }
    if amplitudes.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::Data("harmonic amplitudes must be positive".into()));
    }
    let ratios: Vec<f64> = amplitudes.windows(2).map(|w| w[1] / w[0]).collect();
    let logs: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let n = logs.len() as f64;
    let mean_log = logs.iter().sum::<f64>() / n;
    let r_tilde = mean_log.exp();
    let sigma = if logs.len() >= 2 {
        let var = logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / (n - 1.0);
        r_tilde * (var / n).sqrt()
    } else {
        match noise_amplitude {
            Some(s) if s > 0.0 => {
                r_tilde * ((s / amplitudes[0]).powi(2) + (s / amplitudes[1]).powi(2)).sqrt()
            }
            _ => 0.0,
        }
    };
    let unphysical_gain = ratios.iter().any(|r| *r >= 1.0);
    if unphysical_gain {
        log::warn!("harmonic ladder {amplitudes:?} contains a ratio >= 1");
    }
    Ok(LossRatio {
        r_tilde,
        sigma,
        ratios,
        unphysical_gain,
    })
}

/// Bias-corrected total loss of one mode in one waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMeasurement {
    pub waveguide_id: String,
    pub length_mm: f64,
    pub r_tilde: f64,
    pub sigma: f64,
    #[serde(default)]
    pub group_index: Option<f64>,
}

impl LossMeasurement {
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("measurements[{}].{f}", self.waveguide_id);
        if !(self.length_mm > 0.0) {
            return Err(Error::config(field("length_mm"), "must be positive"));
        }
        if !(self.r_tilde > 0.0 && self.r_tilde < 1.0) {
            return Err(Error::config(
                field("r_tilde"),
                format!("must lie in (0, 1), got {}", self.r_tilde),
            ));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config(field("sigma"), "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWeighting {
    /// Every waveguide is a point weighted by its own uncertainty.
    #[default]
    PerWaveguide,
    /// Waveguides of equal length are first averaged; the scatter of each
    /// group sets its uncertainty.
    PerLengthAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResidual {
    pub waveguide_id: String,
    pub length_mm: f64,
    /// `ln R̃ − (ln R − αL)`.
    pub log_residual: f64,
    /// Residual divided by the point's log-space uncertainty.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRFit {
    pub alpha_per_mm: f64,
    pub alpha_db_per_mm: f64,
    pub reflectivity: f64,
    pub sigma_alpha_per_mm: f64,
    pub sigma_reflectivity: f64,
    /// Covariance of `(R, α)`.
    pub covariance: [[f64; 2]; 2],
    /// Covariance of `(ln R, α)`, the fitted parameters.
    pub log_covariance: [[f64; 2]; 2],
    pub residuals: Vec<PointResidual>,
    pub chi2: f64,
    pub dof: usize,
    pub weighting: FitWeighting,
    /// Fitted α < 0 (net gain, unphysical).
    pub negative_alpha: bool,
}

struct Point {
    id: String,
    length: f64,
    y: f64,
    sigma_y: f64,
}

fn points(measurements: &[LossMeasurement], weighting: FitWeighting) -> Vec<Point> {
    let per_wg = measurements.iter().map(|m| Point {
        id: m.waveguide_id.clone(),
        length: m.length_mm,
        y: m.r_tilde.ln(),
        sigma_y: m.sigma / m.r_tilde,
    });
    match weighting {
        FitWeighting::PerWaveguide => per_wg.collect(),
        FitWeighting::PerLengthAverage => {
            let mut groups: Vec<Vec<Point>> = Vec::new();
            for p in per_wg {
                match groups
                    .iter_mut()
                    .find(|g| (g[0].length - p.length).abs() <= 1e-9 * p.length)
                {
                    Some(g) => g.push(p),
                    None => groups.push(vec![p]),
                }
            }
            groups
                .into_iter()
                .map(|g| {
                    let n = g.len() as f64;
                    let mean = g.iter().map(|p| p.y).sum::<f64>() / n;
                    let sigma_y = if g.len() >= 2 {
                        let var = g.iter().map(|p| (p.y - mean).powi(2)).sum::<f64>() / (n - 1.0);
                        (var / n).sqrt()
                    } else {
                        g[0].sigma_y
                    }
                    .max(g.iter().map(|p| p.sigma_y).fold(f64::INFINITY, f64::min) / n.sqrt());
                    Point {
                        id: g
                            .iter()
                            .map(|p| p.id.as_str())
                            .collect::<Vec<_>>()
                            .join("+"),
                        length: g[0].length,
                        y: mean,
                        sigma_y,
                    }
                })
                .collect()
        }
    }
}

/// Weighted least squares of `ln R̃ = ln R − αL` over all measurements.
pub fn fit_alpha_r(measurements: &[LossMeasurement], weighting: FitWeighting) -> Result<AlphaRFit> {
    for m in measurements {
        m.validate()?;
    }
    let mut lengths: Vec<f64> = measurements.iter().map(|m| m.length_mm).collect();
    lengths.sort_by(f64::total_cmp);
    lengths.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    if lengths.len() < 2 {
        return Err(Error::Underdetermined(format!(
            "{} distinct waveguide length(s); at least two are needed to separate R and α",
            lengths.len()
        )));
    }
    let pts = points(measurements, weighting);
    // normal equations for y = a + b·L with weights 1/σ²
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in &pts {
        let w = 1.0 / (p.sigma_y * p.sigma_y);
        s += w;
        sx += w * p.length;
        sxx += w * p.length * p.length;
        sy += w * p.y;
        sxy += w * p.length * p.y;
    }
    let det = s * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(Error::Underdetermined(
            "normal equations are singular".into(),
        ));
    }
    let a = (sxx * sy - sx * sxy) / det;
    let b = (s * sxy - sx * sy) / det;
    let var_a = sxx / det;
    let var_b = s / det;
    let cov_ab = -sx / det;

    let alpha = -b;
    let reflectivity = a.exp();
    let residuals: Vec<PointResidual> = pts
        .iter()
        .map(|p| {
            let r = p.y - (a + b * p.length);
            PointResidual {
                waveguide_id: p.id.clone(),
                length_mm: p.length,
                log_residual: r,
                normalized: r / p.sigma_y,
            }
        })
        .collect();
    let chi2 = residuals.iter().map(|r| r.normalized * r.normalized).sum();
    // (ln R, α): α = −b flips the sign of the cross term
    let log_covariance = [[var_a, -cov_ab], [-cov_ab, var_b]];
    let covariance = [
        [reflectivity * reflectivity * var_a, -reflectivity * cov_ab],
        [-reflectivity * cov_ab, var_b],
    ];
    let negative_alpha = alpha < 0.0;
    if negative_alpha {
        log::warn!("fitted loss coefficient is negative ({alpha:.4} /mm)");
    }
    Ok(AlphaRFit {
        alpha_per_mm: alpha,
        alpha_db_per_mm: alpha_to_db_per_mm(alpha),
        reflectivity,
        sigma_alpha_per_mm: var_b.sqrt(),
        sigma_reflectivity: reflectivity * var_a.sqrt(),
        covariance,
        log_covariance,
        residuals,
        chi2,
        dof: pts.len().saturating_sub(2),
        weighting,
        negative_alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    pub alpha_per_mm: f64,
    pub alpha_db_per_mm: f64,
    /// `R̃ > R`: the estimate implies gain.
    pub exceeds_reflectivity: bool,
}

/// `α = ln(R/R̃)/L` for a known facet reflectivity.
pub fn loss_from_r_tilde(r_tilde: f64, reflectivity: f64, length_mm: f64) -> Result<LossEstimate> {
    if !(r_tilde > 0.0) || !(reflectivity > 0.0) || !(length_mm > 0.0) {
        return Err(Error::Domain(format!(
            "r_tilde, R and L must be positive (got {r_tilde}, {reflectivity}, {length_mm})"
        )));
    }
    let alpha = (reflectivity / r_tilde).ln() / length_mm;
    let exceeds = r_tilde > reflectivity;
    if exceeds {
        log::warn!("r_tilde {r_tilde} exceeds R {reflectivity}: negative loss");
    }
    Ok(LossEstimate {
        alpha_per_mm: alpha,
        alpha_db_per_mm: alpha_to_db_per_mm(alpha),
        exceeds_reflectivity: exceeds,
    })
}

/// Standard uncertainty of [`loss_from_r_tilde`] from the uncertainties of
/// `R̃` and `R`.
pub fn loss_uncertainty(
    r_tilde: f64,
    sigma_r_tilde: f64,
    reflectivity: f64,
    sigma_reflectivity: f64,
    length_mm: f64,
) -> f64 {
    ((sigma_reflectivity / reflectivity).powi(2) + (sigma_r_tilde / r_tilde).powi(2)).sqrt()
        / length_mm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meas(id: &str, l: f64, r: f64, s: f64) -> LossMeasurement {
        LossMeasurement {
            waveguide_id: id.into(),
            length_mm: l,
            r_tilde: r,
            sigma: s,
            group_index: None,
        }
    }

    #[test]
    fn exact_ladder() {
        let lr = total_loss_ratio(&[1.0, 0.3, 0.09, 0.027], None).unwrap();
        assert!((lr.r_tilde - 0.3).abs() < 1e-12);
        assert!(lr.sigma < 1e-12);
        assert!(!lr.unphysical_gain);
        assert!(total_loss_ratio(&[1.0], None).is_err());
    }

    #[test]
    fn two_harmonics_use_noise() {
        let lr = total_loss_ratio(&[1.0, 0.3], Some(0.01)).unwrap();
        let expect = 0.3 * (0.01f64.powi(2) + (0.01f64 / 0.3).powi(2)).sqrt();
        assert!((lr.sigma - expect).abs() < 1e-12);
        let gain = total_loss_ratio(&[0.3, 0.4], None).unwrap();
        assert!(gain.unphysical_gain);
    }

    #[test]
    fn paper_like_single_mode() {
        let alpha = crate::model::alpha_from_k(1e-5, 775.0).unwrap();
        let r = 0.3 * (-alpha * 0.9).exp();
        let amps: Vec<f64> = (0..4).map(|m| 0.7 * r.powi(m)).collect();
        let lr = total_loss_ratio(&amps, None).unwrap();
        assert!((lr.r_tilde - 0.259).abs() < 1e-3);
    }

    #[test]
    fn exact_two_length_recovery() {
        let r = 0.35;
        let alpha = 0.5;
        let ms: Vec<LossMeasurement> = [0.9, 2.0, 0.9, 2.0]
            .iter()
            .enumerate()
            .map(|(i, &l)| meas(&format!("w{i}"), l, r * (-alpha * l).exp(), 0.01))
            .collect();
        for weighting in [FitWeighting::PerWaveguide, FitWeighting::PerLengthAverage] {
            let fit = fit_alpha_r(&ms, weighting).unwrap();
            assert!((fit.reflectivity - r).abs() < 1e-12);
            assert!((fit.alpha_per_mm - alpha).abs() < 1e-12);
            assert!(fit.residuals.iter().all(|p| p.log_residual.abs() < 1e-10));
            assert!(!fit.negative_alpha);
        }
    }

    #[test]
    fn one_length_is_underdetermined() {
        let ms = vec![meas("a", 0.9, 0.2, 0.01), meas("b", 0.9, 0.21, 0.01)];
        assert!(matches!(
            fit_alpha_r(&ms, FitWeighting::PerWaveguide),
            Err(Error::Underdetermined(_))
        ));
    }

    #[test]
    fn gain_is_flagged() {
        let ms = vec![meas("a", 0.9, 0.2, 0.01), meas("b", 2.0, 0.25, 0.01)];
        let fit = fit_alpha_r(&ms, FitWeighting::PerWaveguide).unwrap();
        assert!(fit.negative_alpha);
        assert!(fit.alpha_per_mm < 0.0);
    }

    #[test]
    fn covariance_matches_textbook_formula() {
        // two points: the line passes through both; σ_α² = (σ1² + σ2²)/ΔL²
        let ms = vec![meas("a", 1.0, 0.3, 0.03), meas("b", 3.0, 0.1, 0.02)];
        let fit = fit_alpha_r(&ms, FitWeighting::PerWaveguide).unwrap();
        let expect = ((0.1f64).powi(2) + (0.2f64).powi(2)) / 4.0;
        assert!((fit.sigma_alpha_per_mm.powi(2) - expect).abs() < 1e-12);
    }

    #[test]
    fn loss_from_known_reflectivity() {
        let est = loss_from_r_tilde(0.35, 0.35, 0.9).unwrap();
        assert_eq!(est.alpha_per_mm, 0.0);
        let r = 0.35 * (-0.46f64 * 0.9).exp();
        assert!((r - 0.231).abs() < 5e-4);
        let est = loss_from_r_tilde(r, 0.35, 0.9).unwrap();
        assert!((est.alpha_per_mm - 0.46).abs() < 1e-12);
        // brute-force scan of R·exp(−αL) for the α that reproduces r
        let best = (0..100_000)
            .map(|i| i as f64 * 1e-5)
            .min_by(|a, b| {
                (0.35 * (-a * 0.9f64).exp() - r)
                    .abs()
                    .total_cmp(&(0.35 * (-b * 0.9f64).exp() - r).abs())
            })
            .unwrap();
        assert!((best - 0.46).abs() < 2e-5);
        let est = loss_from_r_tilde(0.3 * (-0.5f64 * 2.0).exp(), 0.3, 2.0).unwrap();
        assert!((est.alpha_db_per_mm - 2.17).abs() < 0.01);
        assert!(loss_from_r_tilde(0.0, 0.35, 0.9).is_err());
        assert!(
            loss_from_r_tilde(0.4, 0.35, 0.9)
                .unwrap()
                .exceeds_reflectivity
        );
    }

    #[test]
    fn per_mode_losses_from_fixed_reflectivity() {
        for (alpha, l) in [(0.46_f64, 0.9), (0.36, 0.9), (0.46, 2.0), (0.36, 2.0)] {
            let r = 0.35 * (-alpha * l).exp();
            let est = loss_from_r_tilde(r, 0.35, l).unwrap();
            assert!((est.alpha_per_mm - alpha).abs() < 1e-12);
        }
        let s = loss_uncertainty(0.23, 0.0, 0.35, 0.04, 0.9);
        assert!((s - 0.04 / 0.35 / 0.9).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ratio_is_scale_invariant(c in 1e-3f64..1e3, r in 0.05f64..0.9, noise in 0.0f64..0.05) {
            let amps: Vec<f64> = (0..4).map(|m| r.powi(m) * (1.0 + noise * ((m * 7) as f64).sin())).collect();
            let scaled: Vec<f64> = amps.iter().map(|a| a * c).collect();
            let a = total_loss_ratio(&amps, None).unwrap();
            let b = total_loss_ratio(&scaled, None).unwrap();
            prop_assert!((a.r_tilde - b.r_tilde).abs() <= 1e-12 * a.r_tilde);
            prop_assert!((a.sigma - b.sigma).abs() <= 1e-9 * a.r_tilde);
        }
    }
}
