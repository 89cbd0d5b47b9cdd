//! CSV and JSON file formats. Every write goes to a temporary file in the
//! target directory and is renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analyze::{FourierSpectrum, Spectrogram};
use crate::calibrate::{czerny_turner_wavelength, CzernyTurnerParams, LineObservation};
use crate::error::{Error, Result};
use crate::fit::LossMeasurement;
use crate::model::{Spectrum, SpectrumMeta};

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::config("path", format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_records<T: DeserializeOwned>(path: &Path, expected: &[&str]) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    for col in expected {
        if !headers.iter().any(|h| h == *col) {
            return Err(Error::Data(format!(
                "{}: missing column `{col}` (found {:?})",
                path.display(),
                headers.iter().collect::<Vec<_>>()
            )));
        }
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in records {
        writer.serialize(r)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    atomic_write(path, &bytes)
}

#[derive(Debug, Serialize, Deserialize)]
struct SpectrumRow {
    wavelength_nm: f64,
    intensity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraRow {
    dx_cam_mm: f64,
    intensity: f64,
}

/// Spectrum CSV with header `wavelength_nm,intensity`.
pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum> {
    let rows: Vec<SpectrumRow> = read_records(path, &["wavelength_nm", "intensity"])?;
    let (lam, val) = rows
        .into_iter()
        .map(|r| (r.wavelength_nm, r.intensity))
        .unzip();
    let spectrum = Spectrum::new(lam, val).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(spectrum.with_meta(SpectrumMeta {
        source: Some(path.display().to_string()),
        ..SpectrumMeta::default()
    }))
}

pub fn write_spectrum_csv(path: &Path, spectrum: &Spectrum) -> Result<()> {
    let rows: Vec<SpectrumRow> = spectrum
        .wavelength_nm()
        .iter()
        .zip(spectrum.intensity())
        .map(|(&wavelength_nm, &intensity)| SpectrumRow {
            wavelength_nm,
            intensity,
        })
        .collect();
    write_records(path, &rows)
}

/// Camera-axis CSV (`dx_cam_mm,intensity`) converted to wavelength with a
/// calibration at grating setting `lambda_c_nm`.
pub fn read_camera_csv(
    path: &Path,
    params: &CzernyTurnerParams,
    lambda_c_nm: f64,
) -> Result<Spectrum> {
    params.validate()?;
    let mut rows: Vec<CameraRow> = read_records(path, &["dx_cam_mm", "intensity"])?;
    rows.sort_by(|a, b| a.dx_cam_mm.total_cmp(&b.dx_cam_mm));
    let mut lam = Vec::with_capacity(rows.len());
    let mut val = Vec::with_capacity(rows.len());
    for r in rows {
        lam.push(czerny_turner_wavelength(params, lambda_c_nm, r.dx_cam_mm)?);
        val.push(r.intensity);
    }
    Ok(Spectrum::new(lam, val)?.with_meta(SpectrumMeta {
        central_wavelength_nm: Some(lambda_c_nm),
        source: Some(path.display().to_string()),
        warnings: Vec::new(),
    }))
}

pub fn write_camera_csv(
    path: &Path,
    spectrum: &Spectrum,
    params: &CzernyTurnerParams,
    lambda_c_nm: f64,
) -> Result<()> {
    let rows = spectrum
        .wavelength_nm()
        .iter()
        .zip(spectrum.intensity())
        .map(|(&l, &intensity)| {
            Ok(CameraRow {
                dx_cam_mm: crate::calibrate::czerny_turner_position(params, lambda_c_nm, l)?,
                intensity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_records(path, &rows)
}

/// Loss table: `waveguide_id,length_mm,r_tilde,sigma,group_index`.
pub fn read_measurements_csv(path: &Path) -> Result<Vec<LossMeasurement>> {
    read_records(path, &["waveguide_id", "length_mm", "r_tilde", "sigma"])
}

pub fn write_measurements_csv(path: &Path, measurements: &[LossMeasurement]) -> Result<()> {
    write_records(path, measurements)
}

/// Reference lines: `lambda_true_nm,lambda_c_nm,dx_cam_mm`.
pub fn read_lines_csv(path: &Path) -> Result<Vec<LineObservation>> {
    read_records(path, &["lambda_true_nm", "lambda_c_nm", "dx_cam_mm"])
}

pub fn write_lines_csv(path: &Path, lines: &[LineObservation]) -> Result<()> {
    write_records(path, lines)
}

#[derive(Debug, Serialize)]
struct FourierRow {
    optical_length_mm: f64,
    amplitude: f64,
}

/// `optical_length_mm,amplitude`.
pub fn write_fourier_csv(path: &Path, fs: &FourierSpectrum) -> Result<()> {
    let rows: Vec<FourierRow> = fs
        .amplitude
        .iter()
        .enumerate()
        .map(|(i, &amplitude)| FourierRow {
            optical_length_mm: fs.optical_length_mm(i),
            amplitude,
        })
        .collect();
    write_records(path, &rows)
}

/// One row per optical length; the header lists the slice-centre wavelengths.
pub fn write_spectrogram_csv(path: &Path, sg: &Spectrogram) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["optical_length_mm".to_string()];
    header.extend(sg.center_wavelength_nm.iter().map(|l| format!("{l}")));
    writer.write_record(&header)?;
    for (i, ol) in sg.optical_length_axis().iter().enumerate() {
        let mut row = vec![format!("{ol}")];
        row.extend(sg.columns.iter().map(|c| format!("{}", c[i])));
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    atomic_write(path, &bytes)
}
