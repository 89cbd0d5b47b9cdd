#![allow(dead_code)]

use modal_fp::model::{
    wavelength_to_wavenumber, DispersionModel, InstrumentSpec, ModeSpec, ResonatorSpec,
};
use modal_fp::simulate::Band;

pub const LAMBDA0_NM: f64 = 775.0;
pub const SPAN_NM: f64 = 14.5;
pub const PITCH_PM: f64 = 4.0;

pub fn band() -> Band {
    Band::centered(LAMBDA0_NM, SPAN_NM).unwrap()
}

/// Phase index `n` and group index `n_g` at 775 nm with `c2 = −c1/β_ref`.
pub fn quadratic(n: f64, n_g: f64) -> DispersionModel {
    let beta = wavelength_to_wavenumber(LAMBDA0_NM).unwrap();
    let c1 = (n_g - n) / beta;
    DispersionModel::from_group_index(n, n_g, LAMBDA0_NM, -c1 / beta).unwrap()
}

/// Two dispersive modes excited 80/20 in a 0.9 mm waveguide.
pub fn two_mode_resonator() -> ResonatorSpec {
    ResonatorSpec::new(
        0.9,
        vec![
            ModeSpec::new("a", quadratic(3.13, 3.702), 1e-5, 0.3, 0.8).unwrap(),
            ModeSpec::new("b", quadratic(3.4, 4.409), 1e-5, 0.3, 0.2).unwrap(),
        ],
    )
    .unwrap()
}

pub fn single_mode(n_g: f64, reflectivity: f64, k: f64, length_mm: f64) -> ResonatorSpec {
    let disp = DispersionModel::dispersionless(n_g, LAMBDA0_NM).unwrap();
    ResonatorSpec::new(
        length_mm,
        vec![ModeSpec::new("m", disp, k, reflectivity, 1.0).unwrap()],
    )
    .unwrap()
}

pub fn instrument(psf_fwhm_pm: f64) -> InstrumentSpec {
    InstrumentSpec {
        psf_fwhm_pm,
        ..InstrumentSpec::ideal(PITCH_PM)
    }
}

/// Mean of `e^{−α(λ)L}` over the band for absorption index `k`.
pub fn band_mean_attenuation(k: f64, length_mm: f64) -> f64 {
    let b = band();
    let n = 2001;
    (0..n)
        .map(|i| {
            let lam = b.lo_nm + b.span_nm() * i as f64 / (n - 1) as f64;
            let alpha = 4.0 * std::f64::consts::PI * k / (lam * 1e-9) * 1e-3;
            (-alpha * length_mm).exp()
        })
        .sum::<f64>()
        / n as f64
}
