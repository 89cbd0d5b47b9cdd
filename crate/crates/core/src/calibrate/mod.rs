//! Czerny-Turner wavelength calibration from reference lamp lines.

mod stitch;

pub use stitch::{stitch, StitchResult, STITCH_MISMATCH_WARNING};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{self, LmOptions};
use crate::simulate::Band;

/// Half-width of the camera sensor along the dispersion axis (1600 pixels of 9 µm).
pub const SENSOR_HALF_WIDTH_MM: f64 = 7.2;

/// Camera pixel pitch.
pub const PIXEL_SIZE_MM: f64 = 0.009;

/// Bright argon lines in the 760-812 nm range (nm, air).
pub const ARGON_LINES_NM: [f64; 8] = [
    763.5106, 772.3761, 772.4207, 794.8176, 800.6157, 801.4786, 810.3693, 811.5311,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CzernyTurnerParams {
    /// Inclusion angle between the incident and diffracted beams.
    pub gamma_rad: f64,
    pub focal_mm: f64,
    pub groove_spacing_nm: f64,
    pub order_m: u32,
    /// Off-center distance of the input fiber.
    #[serde(default)]
    pub dx_in_mm: f64,
}

impl CzernyTurnerParams {
    /// 1800 grooves/mm grating in first order behind 750 mm optics.
    pub fn typical() -> Self {
        Self {
            gamma_rad: 0.25,
            focal_mm: 750.0,
            groove_spacing_nm: 1e6 / 1800.0,
            order_m: 1,
            dx_in_mm: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_mm > 0.0) || !self.focal_mm.is_finite() {
            return Err(Error::config("calibration.focal_mm", "must be positive"));
        }
        if !(self.groove_spacing_nm > 0.0) || !self.groove_spacing_nm.is_finite() {
            return Err(Error::config(
                "calibration.groove_spacing_nm",
                "must be positive",
            ));
        }
        if self.order_m == 0 {
            return Err(Error::config("calibration.order_m", "must be >= 1"));
        }
        if !(self.gamma_rad.abs() < std::f64::consts::PI) {
            return Err(Error::config(
                "calibration.gamma_rad",
                "|gamma| must be below pi",
            ));
        }
        if !self.dx_in_mm.is_finite() {
            return Err(Error::config("calibration.dx_in_mm", "must be finite"));
        }
        Ok(())
    }

    fn d_over_m(&self) -> f64 {
        self.groove_spacing_nm / self.order_m as f64
    }

    /// Grating rotation angle for the central-wavelength setting.
    pub fn grating_angle(&self, lambda_c_nm: f64) -> Result<f64> {
        let arg = self.order_m as f64 * lambda_c_nm
            / (2.0 * self.groove_spacing_nm * (0.5 * self.gamma_rad).cos());
        if !(arg.abs() <= 1.0) {
            return Err(Error::Geometry(format!(
                "central wavelength {lambda_c_nm} nm is outside the grating range (sin Ψ = {arg:.4})"
            )));
        }
        Ok(arg.asin())
    }

    fn input_angle(&self, psi: f64) -> f64 {
        psi - 0.5 * self.gamma_rad - (self.dx_in_mm / self.focal_mm).atan()
    }

    fn output_angle(&self, psi: f64, dx_cam_mm: f64) -> f64 {
        psi + 0.5 * self.gamma_rad + (dx_cam_mm / self.focal_mm).atan()
    }
}

/// Wavelength seen at camera offset `dx_cam_mm` with the grating set to `lambda_c_nm`.
pub fn czerny_turner_wavelength(
    params: &CzernyTurnerParams,
    lambda_c_nm: f64,
    dx_cam_mm: f64,
) -> Result<f64> {
    let psi = params.grating_angle(lambda_c_nm)?;
    Ok(params.d_over_m()
        * (params.input_angle(psi).sin() + params.output_angle(psi, dx_cam_mm).sin()))
}

/// Camera offset at which `lambda_nm` appears; inverse of [`czerny_turner_wavelength`].
pub fn czerny_turner_position(
    params: &CzernyTurnerParams,
    lambda_c_nm: f64,
    lambda_nm: f64,
) -> Result<f64> {
    let psi = params.grating_angle(lambda_c_nm)?;
    let s = lambda_nm / params.d_over_m() - params.input_angle(psi).sin();
    if !(s.abs() <= 1.0) {
        return Err(Error::Geometry(format!(
            "{lambda_nm} nm is not diffracted onto the camera at λc = {lambda_c_nm} nm"
        )));
    }
    let out = s.asin() - psi - 0.5 * params.gamma_rad;
    Ok(params.focal_mm * out.tan())
}

/// Linear dispersion dλ/d(dx_cam) in nm/mm.
pub fn linear_dispersion(
    params: &CzernyTurnerParams,
    lambda_c_nm: f64,
    dx_cam_mm: f64,
) -> Result<f64> {
    let psi = params.grating_angle(lambda_c_nm)?;
    let f = params.focal_mm;
    Ok(
        params.d_over_m() * params.output_angle(psi, dx_cam_mm).cos() * f
            / (f * f + dx_cam_mm * dx_cam_mm),
    )
}

/// One reference line found on the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineObservation {
    pub lambda_true_nm: f64,
    pub lambda_c_nm: f64,
    pub dx_cam_mm: f64,
}

impl LineObservation {
    pub fn validate(&self, sensor_half_width_mm: f64) -> Result<()> {
        if !(self.lambda_true_nm.is_finite()
            && self.lambda_c_nm.is_finite()
            && self.dx_cam_mm.is_finite())
        {
            return Err(Error::Data(
                "line observation has a non-finite field".into(),
            ));
        }
        if self.dx_cam_mm.abs() > sensor_half_width_mm {
            return Err(Error::Data(format!(
                "dx_cam {} mm lies outside the sensor (±{sensor_half_width_mm} mm)",
                self.dx_cam_mm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    Gamma,
    Focal,
    DxIn,
}

impl FreeParam {
    pub const ALL: [FreeParam; 3] = [FreeParam::Gamma, FreeParam::Focal, FreeParam::DxIn];

    fn get(self, p: &CzernyTurnerParams) -> f64 {
        match self {
            FreeParam::Gamma => p.gamma_rad,
            FreeParam::Focal => p.focal_mm,
            FreeParam::DxIn => p.dx_in_mm,
        }
    }

    fn set(self, p: &mut CzernyTurnerParams, v: f64) {
        match self {
            FreeParam::Gamma => p.gamma_rad = v,
            FreeParam::Focal => p.focal_mm = v,
            FreeParam::DxIn => p.dx_in_mm = v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub free_params: Vec<FreeParam>,
    pub sensor_half_width_mm: f64,
    pub solver: LmOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            free_params: FreeParam::ALL.to_vec(),
            sensor_half_width_mm: SENSOR_HALF_WIDTH_MM,
            solver: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub params: CzernyTurnerParams,
    /// `λ_pred − λ_true` per observation (pm).
    pub residuals_pm: Vec<f64>,
    pub rms_pm: f64,
    pub free_params: Vec<FreeParam>,
    /// Covariance of the free parameters scaled by the residual variance.
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Least-squares fit of the free geometry parameters to tabulated line positions.
pub fn fit_calibration(
    observations: &[LineObservation],
    initial: &CzernyTurnerParams,
    free_params: &[FreeParam],
) -> Result<CalibrationFit> {
    fit_calibration_with(
        observations,
        initial,
        &CalibrationOptions {
            free_params: free_params.to_vec(),
            ..CalibrationOptions::default()
        },
    )
}

pub fn fit_calibration_with(
    observations: &[LineObservation],
    initial: &CzernyTurnerParams,
    options: &CalibrationOptions,
) -> Result<CalibrationFit> {
    initial.validate()?;
    let free = &options.free_params;
    if free.is_empty() {
        return Err(Error::config(
            "calibration.free_params",
            "no free parameters",
        ));
    }
    let mut unique = free.clone();
    unique.sort_by_key(|p| *p as u8);
    unique.dedup();
    if unique.len() != free.len() {
        return Err(Error::config(
            "calibration.free_params",
            "duplicate entries",
        ));
    }
    if observations.len() < free.len() {
        return Err(Error::Underdetermined(format!(
            "{} observations for {} free parameters",
            observations.len(),
            free.len()
        )));
    }
    for obs in observations {
        obs.validate(options.sensor_half_width_mm)?;
    }
    let mut settings: Vec<f64> = observations.iter().map(|o| o.lambda_c_nm).collect();
    settings.sort_by(f64::total_cmp);
    settings.dedup();
    if settings.len() < 2 {
        return Err(Error::RankDeficient(
            "all observations share one central-wavelength setting".into(),
        ));
    }

    let params_of = |x: &[f64]| {
        let mut p = *initial;
        for (fp, v) in free.iter().zip(x) {
            fp.set(&mut p, *v);
        }
        p
    };
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let p = params_of(x);
        if !(p.focal_mm > 0.0) {
            return Err(Error::Geometry(
                "focal length left the physical range".into(),
            ));
        }
        observations
            .iter()
            .map(|o| {
                Ok(
                    (czerny_turner_wavelength(&p, o.lambda_c_nm, o.dx_cam_mm)? - o.lambda_true_nm)
                        * 1e3,
                )
            })
            .collect()
    };

    let x0: Vec<f64> = free.iter().map(|fp| fp.get(initial)).collect();
    let jac0 = lsq::numeric_jacobian(&residuals, &x0, options.solver.fd_step)?;
    if lsq::normalized_condition(&jac0) < 1e-10 {
        return Err(Error::RankDeficient(
            "observations do not constrain the free parameters independently".into(),
        ));
    }

    let report = lsq::levenberg_marquardt(residuals, None, &x0, &options.solver)?;
    let params = params_of(&report.x);
    let rms_pm = (2.0 * report.cost / observations.len() as f64).sqrt();
    if !report.converged() {
        return Err(Error::FitFailure {
            diagnostic: format!(
                "{:?} after {} iterations, rms {rms_pm:.3} pm",
                report.status, report.iterations
            ),
            best: Some(Box::new(params)),
            best_rms_pm: rms_pm,
        });
    }
    if lsq::normalized_condition(&report.jacobian) < 1e-10 {
        return Err(Error::RankDeficient(
            "Jacobian at the solution is singular".into(),
        ));
    }
    let dof = (observations.len() - free.len()).max(1) as f64;
    let s2 = 2.0 * report.cost / dof;
    let covariance = lsq::unscaled_covariance(&report.jacobian)
        .map(|c| {
            (0..c.nrows())
                .map(|i| (0..c.ncols()).map(|j| c[(i, j)] * s2).collect())
                .collect()
        })
        .unwrap_or_default();
    Ok(CalibrationFit {
        params,
        residuals_pm: report.residuals,
        rms_pm,
        free_params: free.clone(),
        covariance,
        iterations: report.iterations,
    })
}

fn line_fit_max_residual(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).abs())
        .fold(0.0, f64::max)
}

/// Largest deviation of λ(dx_cam) from its best straight line over `band`,
/// relative to the band width, with the grating centred on the band.
pub fn nonlinearity_report(params: &CzernyTurnerParams, band: Band) -> Result<f64> {
    params.validate()?;
    band.validate()?;
    let lambda_c = band.center_nm();
    let x_lo = czerny_turner_position(params, lambda_c, band.lo_nm)?;
    let x_hi = czerny_turner_position(params, lambda_c, band.hi_nm)?;
    let n = 401;
    let xs: Vec<f64> = (0..n)
        .map(|i| x_lo + (x_hi - x_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let ls = xs
        .iter()
        .map(|&x| czerny_turner_wavelength(params, lambda_c, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(line_fit_max_residual(&xs, &ls) / band.span_nm())
}

/// A calibration error of `error_pm` expressed relative to a band of `band_nm`.
pub fn calibration_nonlinearity(error_pm: f64, band_nm: f64) -> f64 {
    error_pm * 1e-3 / band_nm
}

/// Nonlinear part of the wavelength error of a fitted calibration against the
/// true geometry, relative to the band width.
///
/// The error `λ_fit − λ_true` is sampled over the sensor at each setting in
/// `lambda_c_settings_nm`, restricted to `band`; a straight line is removed
/// (a linear error only rescales the axis) and the largest remaining deviation
/// is returned.
pub fn calibration_error_nonlinearity(
    fitted: &CzernyTurnerParams,
    truth: &CzernyTurnerParams,
    band: Band,
    lambda_c_settings_nm: &[f64],
    sensor_half_width_mm: f64,
) -> Result<f64> {
    let mut lam = Vec::new();
    let mut err = Vec::new();
    for &lc in lambda_c_settings_nm {
        for i in 0..=200 {
            let x = -sensor_half_width_mm + 2.0 * sensor_half_width_mm * i as f64 / 200.0;
            let t = czerny_turner_wavelength(truth, lc, x)?;
            if t < band.lo_nm || t > band.hi_nm {
                continue;
            }
            lam.push(t);
            err.push(czerny_turner_wavelength(fitted, lc, x)? - t);
        }
    }
    if lam.len() < 3 {
        return Err(Error::Data(
            "calibration band is not covered by the settings".into(),
        ));
    }
    Ok(line_fit_max_residual(&lam, &err) / band.span_nm())
}

/// Recipe for a synthetic line table.
#[derive(Debug, Clone)]
pub struct SyntheticLines {
    pub lines_nm: Vec<f64>,
    pub lambda_c_settings_nm: Vec<f64>,
    pub sensor_half_width_mm: f64,
    /// Gaussian noise added to the tabulated line wavelength (pm).
    pub noise_pm: f64,
    pub seed: u64,
    /// Keep this many observations, spread evenly over the full table.
    pub max_observations: Option<usize>,
}

impl SyntheticLines {
    /// Argon lines with the grating stepped over `[lo, hi]` nm.
    pub fn argon_sweep(lo_nm: f64, hi_nm: f64, step_nm: f64) -> Self {
        let count = ((hi_nm - lo_nm) / step_nm).round() as usize + 1;
        Self {
            lines_nm: ARGON_LINES_NM.to_vec(),
            lambda_c_settings_nm: (0..count).map(|i| lo_nm + i as f64 * step_nm).collect(),
            sensor_half_width_mm: SENSOR_HALF_WIDTH_MM,
            noise_pm: 0.0,
            seed: 0,
            max_observations: None,
        }
    }
}

/// Line observations produced by the forward model of `params`.
pub fn synthetic_observations(
    params: &CzernyTurnerParams,
    recipe: &SyntheticLines,
) -> Result<Vec<LineObservation>> {
    params.validate()?;
    let mut all = Vec::new();
    for &lc in &recipe.lambda_c_settings_nm {
        for &line in &recipe.lines_nm {
            let Ok(x) = czerny_turner_position(params, lc, line) else {
                continue;
            };
            if x.abs() <= recipe.sensor_half_width_mm {
                all.push(LineObservation {
                    lambda_true_nm: line,
                    lambda_c_nm: lc,
                    dx_cam_mm: x,
                });
            }
        }
    }
    if let Some(keep) = recipe.max_observations {
        if keep < all.len() {
            let step = all.len() as f64 / keep as f64;
            all = (0..keep).map(|i| all[(i as f64 * step) as usize]).collect();
        }
    }
    if recipe.noise_pm > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
        let normal = Normal::new(0.0, recipe.noise_pm * 1e-3).expect("finite noise");
        for obs in all.iter_mut() {
            obs.lambda_true_nm += normal.sample(&mut rng);
        }
    }
    Ok(all)
}
