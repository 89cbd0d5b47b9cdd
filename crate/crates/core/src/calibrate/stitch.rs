use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::model::{Spectrum, SpectrumMeta};

/// Relative overlap mismatch above which a warning is attached to the result.
pub const STITCH_MISMATCH_WARNING: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct StitchResult {
    pub spectrum: Spectrum,
    /// Intensity of each exposure relative to the first (by wavelength), in input order.
    pub relative_scales: Vec<f64>,
    /// Post-scaling RMS mismatch / mean intensity for each junction.
    pub overlap_mismatch: Vec<f64>,
}

/// Merge calibrated exposures into one spectrum.
///
/// Exposures are ordered by their first wavelength. Each one is scaled by a
/// single factor, fitted by least squares on its overlap with the spectrum
/// accumulated so far (so the first exposure is the anchor); in the overlap
/// the two are averaged on the accumulated axis, beyond it the new samples are
/// appended.
pub fn stitch(exposures: &[Spectrum]) -> Result<StitchResult> {
    if exposures.is_empty() {
        return Err(Error::Stitch("no exposures".into()));
    }
    let mut order: Vec<usize> = (0..exposures.len()).collect();
    order.sort_by(|&a, &b| exposures[a].first_nm().total_cmp(&exposures[b].first_nm()));

    let first = &exposures[order[0]];
    let mut lam = first.wavelength_nm().to_vec();
    let mut val = first.intensity().to_vec();
    let mut scales = vec![1.0; exposures.len()];
    let mut mismatch = Vec::new();
    let mut warnings = first.meta.warnings.clone();

    for &idx in &order[1..] {
        let next = &exposures[idx];
        let acc_last = *lam.last().unwrap();
        let lo = next.first_nm();
        let hi = next.last_nm().min(acc_last);
        let start = lam.partition_point(|&l| l < lo);
        let end = lam.partition_point(|&l| l <= hi);
        if end <= start + 1 {
            return Err(Error::Stitch(format!(
                "exposure starting at {lo:.4} nm does not overlap the spectrum ending at {acc_last:.4} nm"
            )));
        }
        let spline = CubicSpline::new(next.wavelength_nm(), next.intensity())?;
        let b = spline.eval_sorted(&lam[start..end]);
        let a = &val[start..end];
        let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let sbb: f64 = b.iter().map(|y| y * y).sum();
        if !(sbb > 0.0 && sab > 0.0) {
            return Err(Error::Stitch("overlap carries no signal to match".into()));
        }
        let s = sab / sbb;
        scales[idx] = 1.0 / s;

        let mean_a = a.iter().sum::<f64>() / a.len() as f64;
        let rms = (a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - s * y).powi(2))
            .sum::<f64>()
            / a.len() as f64)
            .sqrt();
        let m = rms / mean_a;
        if m > STITCH_MISMATCH_WARNING {
            warnings.push(format!("overlap mismatch {:.1}% at {lo:.3} nm", 100.0 * m));
        }
        mismatch.push(m);

        for (v, y) in val[start..end].iter_mut().zip(&b) {
            *v = 0.5 * (*v + s * y);
        }
        let tail = next.wavelength_nm().partition_point(|&l| l <= acc_last);
        lam.extend_from_slice(&next.wavelength_nm()[tail..]);
        val.extend(next.intensity()[tail..].iter().map(|y| s * y));
    }

    let meta = SpectrumMeta {
        central_wavelength_nm: None,
        source: Some(format!("stitched from {} exposures", exposures.len())),
        warnings,
    };
    let spectrum = if exposures.len() == 1 {
        first.clone()
    } else {
        Spectrum::new(lam, val)?.with_meta(meta)
    };
    Ok(StitchResult {
        spectrum,
        relative_scales: scales,
        overlap_mismatch: mismatch,
    })
}
