//! Domain types and unit conversions.
//!
//! Canonical internal units: vacuum wavenumber `β = 2π/λ` in rad/m, wavelengths
//! in nm at every I/O boundary, lengths (physical and optical) in mm.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in µm/ps.
pub const SPEED_OF_LIGHT_UM_PER_PS: f64 = 299.792_458;

/// 10·log10(e): converts a linear intensity loss coefficient to dB.
pub const DB_PER_NEPER_INTENSITY: f64 = 4.342_944_819_032_518;

const NM: f64 = 1e-9;
const MM: f64 = 1e-3;

/// Vacuum wavenumber in rad/m for a wavelength in nm.
pub fn wavelength_to_wavenumber(lambda_nm: f64) -> Result<f64> {
    if !(lambda_nm > 0.0) || !lambda_nm.is_finite() {
        return Err(Error::Domain(format!(
            "wavelength must be positive and finite, got {lambda_nm} nm"
        )));
    }
    Ok(2.0 * PI / (lambda_nm * NM))
}

/// Inverse of [`wavelength_to_wavenumber`].
pub fn wavenumber_to_wavelength(beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!(
            "wavenumber must be positive and finite, got {beta} rad/m"
        )));
    }
    Ok(2.0 * PI / beta / NM)
}

/// Linear intensity loss coefficient `α = 4πk/λ₀`, in 1/mm.
pub fn alpha_from_k(k: f64, lambda0_nm: f64) -> Result<f64> {
    if k < 0.0 || !k.is_finite() {
        return Err(Error::Domain(format!(
            "absorption index must be >= 0, got {k}"
        )));
    }
    if !(lambda0_nm > 0.0) {
        return Err(Error::Domain(format!(
            "wavelength must be positive, got {lambda0_nm} nm"
        )));
    }
    Ok(4.0 * PI * k / (lambda0_nm * NM) * MM)
}

/// Absorption index for a loss coefficient given in 1/mm.
pub fn k_from_alpha(alpha_per_mm: f64, lambda0_nm: f64) -> Result<f64> {
    if alpha_per_mm < 0.0 || !alpha_per_mm.is_finite() {
        return Err(Error::Domain(format!(
            "loss coefficient must be >= 0, got {alpha_per_mm} /mm"
        )));
    }
    if !(lambda0_nm > 0.0) {
        return Err(Error::Domain(format!(
            "wavelength must be positive, got {lambda0_nm} nm"
        )));
    }
    Ok(alpha_per_mm / MM * lambda0_nm * NM / (4.0 * PI))
}

pub fn alpha_to_db_per_mm(alpha_per_mm: f64) -> f64 {
    alpha_per_mm * DB_PER_NEPER_INTENSITY
}

pub fn db_per_mm_to_alpha(db_per_mm: f64) -> f64 {
    db_per_mm / DB_PER_NEPER_INTENSITY
}

/// Group velocity `c/n_g` in µm/ps.
pub fn group_velocity_um_per_ps(group_index: f64) -> f64 {
    SPEED_OF_LIGHT_UM_PER_PS / group_index
}

pub fn group_index_from_velocity(v_um_per_ps: f64) -> f64 {
    SPEED_OF_LIGHT_UM_PER_PS / v_um_per_ps
}

/// Fringe spacing `λ²/(2·n_g·L)` in pm.
pub fn free_spectral_range_pm(lambda_nm: f64, group_index: f64, length_mm: f64) -> f64 {
    let lambda = lambda_nm * NM;
    lambda * lambda / (2.0 * group_index * length_mm * MM) / 1e-12
}

/// Second-order Taylor model of the effective index around `beta_ref`:
/// `n(β) = c0 + c1·(β−β_ref) + ½·c2·(β−β_ref)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionModel {
    /// Reference vacuum wavenumber (rad/m).
    pub beta_ref: f64,
    pub c0: f64,
    /// dn/dβ at the reference, in m.
    #[serde(default)]
    pub c1: f64,
    /// d²n/dβ² at the reference, in m².
    #[serde(default)]
    pub c2: f64,
}

impl DispersionModel {
    pub fn new(beta_ref: f64, c0: f64, c1: f64, c2: f64) -> Result<Self> {
        let model = Self {
            beta_ref,
            c0,
            c1,
            c2,
        };
        model.validate()?;
        Ok(model)
    }

    /// Constant index `n`, reference placed at `lambda_ref_nm`.
    pub fn dispersionless(n: f64, lambda_ref_nm: f64) -> Result<Self> {
        Self::new(wavelength_to_wavenumber(lambda_ref_nm)?, n, 0.0, 0.0)
    }

    /// Model with phase index `n` and group index `n_g` at `lambda_ref_nm`,
    /// plus curvature `c2`.
    pub fn from_group_index(n: f64, n_g: f64, lambda_ref_nm: f64, c2: f64) -> Result<Self> {
        let beta_ref = wavelength_to_wavenumber(lambda_ref_nm)?;
        Self::new(beta_ref, n, (n_g - n) / beta_ref, c2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_ref > 0.0) || !self.beta_ref.is_finite() {
            return Err(Error::config("dispersion.beta_ref", "must be positive"));
        }
        if !(self.c0 > 1.0) || !self.c0.is_finite() {
            return Err(Error::config(
                "dispersion.c0",
                format!("guided effective index must exceed 1, got {}", self.c0),
            ));
        }
        if !self.c1.is_finite() || !self.c2.is_finite() {
            return Err(Error::config("dispersion", "coefficients must be finite"));
        }
        Ok(())
    }

    pub fn index(&self, beta: f64) -> f64 {
        let u = beta - self.beta_ref;
        self.c0 + self.c1 * u + 0.5 * self.c2 * u * u
    }

    pub fn index_derivative(&self, beta: f64) -> f64 {
        self.c1 + self.c2 * (beta - self.beta_ref)
    }

    /// `n_g = n + β·dn/dβ`.
    pub fn group_index(&self, beta: f64) -> f64 {
        self.index(beta) + beta * self.index_derivative(beta)
    }

    /// `dn_g/dβ` in m.
    pub fn group_index_slope(&self, beta: f64) -> f64 {
        2.0 * self.index_derivative(beta) + beta * self.c2
    }

    /// `dn_g/dλ` in 1/nm at the wavelength `lambda_nm`.
    pub fn group_index_slope_per_nm(&self, lambda_nm: f64) -> f64 {
        let beta = 2.0 * PI / (lambda_nm * NM);
        // dβ/dλ = −β/λ
        -self.group_index_slope(beta) * beta / lambda_nm
    }
}

/// Group index of `dispersion` at `beta`.
pub fn group_index(dispersion: &DispersionModel, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!(
            "wavenumber must be positive, got {beta}"
        )));
    }
    Ok(dispersion.group_index(beta))
}

fn default_excitation() -> f64 {
    1.0
}

/// One guided spatial mode of the resonator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub label: String,
    pub dispersion: DispersionModel,
    /// Absorption index (imaginary part of the effective index).
    #[serde(default)]
    pub k: f64,
    /// Facet intensity reflectivity.
    #[serde(alias = "reflectivity_R")]
    pub reflectivity: f64,
    /// Facet phase change (rad).
    #[serde(default, alias = "facet_phase_phi")]
    pub facet_phase: f64,
    /// Relative amount of light coupled into the mode.
    #[serde(default = "default_excitation", alias = "excitation_x")]
    pub excitation: f64,
}

impl ModeSpec {
    pub fn new(
        label: impl Into<String>,
        dispersion: DispersionModel,
        k: f64,
        reflectivity: f64,
        excitation: f64,
    ) -> Result<Self> {
        let mode = Self {
            label: label.into(),
            dispersion,
            k,
            reflectivity,
            facet_phase: 0.0,
            excitation,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        self.dispersion.validate()?;
        let field = |f: &str| format!("modes[{}].{f}", self.label);
        if !(self.reflectivity > 0.0 && self.reflectivity < 1.0) {
            return Err(Error::config(
                field("reflectivity"),
                format!("must lie in (0, 1), got {}", self.reflectivity),
            ));
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::config(
                field("k"),
                format!("must be >= 0, got {}", self.k),
            ));
        }
        if !(self.excitation >= 0.0) || !self.excitation.is_finite() {
            return Err(Error::config(
                field("excitation"),
                format!("must be >= 0, got {}", self.excitation),
            ));
        }
        if !self.facet_phase.is_finite() {
            return Err(Error::config(field("facet_phase"), "must be finite"));
        }
        Ok(())
    }
}

/// The physical device: waveguide length and its guided modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorSpec {
    pub length_mm: f64,
    pub modes: Vec<ModeSpec>,
}

impl ResonatorSpec {
    pub fn new(length_mm: f64, modes: Vec<ModeSpec>) -> Result<Self> {
        let spec = Self { length_mm, modes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_mm > 0.0) || !self.length_mm.is_finite() {
            return Err(Error::config(
                "resonator.length_mm",
                format!("must be positive, got {}", self.length_mm),
            ));
        }
        if self.modes.is_empty() {
            return Err(Error::config(
                "resonator.modes",
                "at least one mode is required",
            ));
        }
        let mut seen = HashSet::new();
        for mode in &self.modes {
            mode.validate()?;
            if !seen.insert(mode.label.as_str()) {
                return Err(Error::config(
                    "resonator.modes",
                    format!("duplicate mode label `{}`", mode.label),
                ));
            }
        }
        Ok(())
    }
}

/// Gaussian source envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEnvelope {
    pub center_nm: f64,
    pub fwhm_nm: f64,
}

impl SourceEnvelope {
    pub fn at(&self, lambda_nm: f64) -> f64 {
        let d = (lambda_nm - self.center_nm) / self.fwhm_nm;
        (-4.0 * std::f64::consts::LN_2 * d * d).exp()
    }
}

/// Weak parasitic resonator elsewhere in the beam path, modelled as a sinusoidal
/// modulation `1 + depth·cos(2πλ/fsr + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParasiticEtalon {
    pub fsr_nm: f64,
    pub modulation_depth: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl ParasiticEtalon {
    pub fn at(&self, lambda_nm: f64) -> f64 {
        1.0 + self.modulation_depth * (2.0 * PI * lambda_nm / self.fsr_nm + self.phase_rad).cos()
    }
}

fn default_dense_factor() -> usize {
    8
}

/// The measurement chain between the resonator and the recorded spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    /// Wavelength sampling interval of the camera pixels (pm).
    pub pixel_pitch_pm: f64,
    /// FWHM of the Gaussian point-spread function (pm); 0 disables the PSF.
    #[serde(default)]
    pub psf_fwhm_pm: f64,
    /// `None` is a flat source.
    #[serde(default)]
    pub envelope: Option<SourceEnvelope>,
    /// Standard deviation of additive noise relative to the local intensity.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub etalon: Option<ParasiticEtalon>,
    #[serde(default)]
    pub rng_seed: u64,
    /// Internal evaluation grid density relative to the pixel grid.
    #[serde(default = "default_dense_factor")]
    pub dense_factor: usize,
}

impl InstrumentSpec {
    /// Pixel grid only: no PSF, envelope, etalon or noise.
    pub fn ideal(pixel_pitch_pm: f64) -> Self {
        Self {
            pixel_pitch_pm,
            psf_fwhm_pm: 0.0,
            envelope: None,
            noise_sigma: 0.0,
            etalon: None,
            rng_seed: 0,
            dense_factor: default_dense_factor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_pitch_pm > 0.0) || !self.pixel_pitch_pm.is_finite() {
            return Err(Error::config(
                "instrument.pixel_pitch_pm",
                "must be positive",
            ));
        }
        if !(self.psf_fwhm_pm >= 0.0) || !self.psf_fwhm_pm.is_finite() {
            return Err(Error::config("instrument.psf_fwhm_pm", "must be >= 0"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::config("instrument.noise_sigma", "must be >= 0"));
        }
        if self.dense_factor == 0 {
            return Err(Error::config("instrument.dense_factor", "must be >= 1"));
        }
        if let Some(env) = &self.envelope {
            if !(env.fwhm_nm > 0.0) || !(env.center_nm > 0.0) {
                return Err(Error::config(
                    "instrument.envelope",
                    "center and FWHM must be positive",
                ));
            }
        }
        if let Some(etalon) = &self.etalon {
            if !(etalon.fsr_nm > 0.0) {
                return Err(Error::config(
                    "instrument.etalon.fsr_nm",
                    "must be positive",
                ));
            }
            if !(0.0..1.0).contains(&etalon.modulation_depth) {
                return Err(Error::config(
                    "instrument.etalon.modulation_depth",
                    "must lie in [0, 1)",
                ));
            }
        }
        Ok(())
    }

    /// Standard deviation of the PSF in nm.
    pub fn psf_sigma_nm(&self) -> f64 {
        self.psf_fwhm_pm * 1e-3 / FWHM_PER_SIGMA
    }
}

/// `2·sqrt(2·ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    /// Central-wavelength setting of the spectrograph for this exposure.
    #[serde(default)]
    pub central_wavelength_nm: Option<f64>,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Sampled intensity versus vacuum wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    wavelength_nm: Vec<f64>,
    intensity: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(wavelength_nm: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        if wavelength_nm.len() != intensity.len() {
            return Err(Error::Data(format!(
                "wavelength ({}) and intensity ({}) lengths differ",
                wavelength_nm.len(),
                intensity.len()
            )));
        }
        if wavelength_nm.len() < 2 {
            return Err(Error::Data("a spectrum needs at least two samples".into()));
        }
        if let Some(i) = wavelength_nm
            .iter()
            .position(|w| !(w.is_finite() && *w > 0.0))
        {
            return Err(Error::Data(format!("invalid wavelength at sample {i}")));
        }
        if let Some(i) = wavelength_nm.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!(
                "wavelengths must be strictly increasing (sample {})",
                i + 1
            )));
        }
        if let Some(i) = intensity.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data(format!(
                "intensity must be finite and non-negative (sample {i})"
            )));
        }
        Ok(Self {
            wavelength_nm,
            intensity,
            meta: SpectrumMeta::default(),
        })
    }

    pub fn with_meta(mut self, meta: SpectrumMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn wavelength_nm(&self) -> &[f64] {
        &self.wavelength_nm
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn len(&self) -> usize {
        self.wavelength_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelength_nm.is_empty()
    }

    pub fn first_nm(&self) -> f64 {
        self.wavelength_nm[0]
    }

    pub fn last_nm(&self) -> f64 {
        self.wavelength_nm[self.wavelength_nm.len() - 1]
    }

    pub fn span_nm(&self) -> f64 {
        self.last_nm() - self.first_nm()
    }

    /// Multiply every intensity by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            wavelength_nm: self.wavelength_nm.clone(),
            intensity: self.intensity.iter().map(|v| v * factor).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>, SpectrumMeta) {
        (self.wavelength_nm, self.intensity, self.meta)
    }
}

/// Per-mode quantities recovered from the optical-length domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDetection {
    /// `n_g·L` read from the fundamental peak (mm).
    pub optical_length_mm: f64,
    /// `optical_length / L`, when the physical length is known.
    pub group_index: Option<f64>,
    /// Amplitudes of the usable passes `m = 1..M`.
    pub harmonic_amplitudes: Vec<f64>,
    /// Interpolated height of the fundamental peak.
    pub peak_amplitude: f64,
    /// Total loss from the harmonic ladder (needs two passes).
    pub r_tilde: Option<f64>,
    pub r_tilde_sigma: Option<f64>,
    /// Second pass found above the detection threshold.
    pub confirmed: bool,
    pub excitation_fraction: Option<f64>,
    /// Fringes of this mode inside the recorded band.
    pub fringe_count: f64,
    /// Another maximum closer than the merge distance was folded into this one.
    pub unresolved: bool,
    /// A successive harmonic ratio was >= 1.
    pub unphysical_gain: bool,
    /// The excitation integration window was truncated by a neighbour.
    pub window_truncated: bool,
}

impl ModeDetection {
    pub fn group_velocity_um_per_ps(&self) -> Option<f64> {
        self.group_index.map(group_velocity_um_per_ps)
    }
}

/// Fresnel estimates of facet reflectivity and phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelEstimate {
    pub reflectivity: f64,
    pub phase_rad: f64,
}

/// Normal-incidence Fresnel reflectivity and phase for a complex index `n + ik`.
pub fn fresnel_estimates(n: f64, k: f64) -> Result<FresnelEstimate> {
    if !(n > 0.0) {
        return Err(Error::Domain(format!("index must be positive, got {n}")));
    }
    if k < 0.0 {
        return Err(Error::Domain(format!(
            "absorption index must be >= 0, got {k}"
        )));
    }
    let reflectivity = ((n - 1.0).powi(2) + k * k) / ((n + 1.0).powi(2) + k * k);
    let denom = n * n + k * k - 1.0;
    if denom.abs() < 1e-15 {
        if k == 0.0 {
            // index-matched: no reflection, phase irrelevant
            return Ok(FresnelEstimate {
                reflectivity,
                phase_rad: 0.0,
            });
        }
        return Err(Error::Degenerate(format!(
            "facet phase undefined for n²+k² = 1 (n = {n}, k = {k})"
        )));
    }
    Ok(FresnelEstimate {
        reflectivity,
        phase_rad: (-2.0 * k / denom).atan(),
    })
}

/// Coefficient of finesse `π·√R̃/(1−R̃)`.
pub fn coefficient_finesse(r_tilde: f64) -> Result<f64> {
    if !(r_tilde > 0.0 && r_tilde < 1.0) {
        return Err(Error::Domain(format!(
            "total loss must lie in (0, 1), got {r_tilde}"
        )));
    }
    Ok(PI * r_tilde.sqrt() / (1.0 - r_tilde))
}
