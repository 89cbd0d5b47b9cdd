//! Command-line front end. Each subcommand reads a JSON run configuration
//! (optional) plus flags, which take precedence, and writes CSV tables and a
//! versioned JSON report into the output directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analyze::{
    analyze_spectrum, condition, spectrogram, AnalysisConfig, Detrend, SpectrogramConfig, Window,
};
use crate::calibrate::{
    calibration_nonlinearity, fit_calibration_with, nonlinearity_report, stitch,
    CalibrationOptions, CzernyTurnerParams, FreeParam, SENSOR_HALF_WIDTH_MM,
};
use crate::error::{Error, Result};
use crate::fit::{fit_alpha_r, AlphaRFit, BiasCorrector, BiasOptions, FitWeighting};
use crate::io::{self, SCHEMA_VERSION};
use crate::model::{InstrumentSpec, ResonatorSpec, Spectrum};
use crate::simulate::{simulate_exposures, simulate_spectrum, Band, ExposurePlan};

#[derive(Debug, Parser)]
#[command(
    name = "modal-fp",
    version,
    about = "Modally resolved Fabry-Perot analysis of multimode waveguides"
)]
pub struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, global = true, env = "MODAL_FP_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate transmission spectra from the `simulate` section of the configuration.
    Simulate,
    /// Fit spectrograph geometry to a reference-line table.
    Calibrate(CalibrateArgs),
    /// Recover modes from one or more spectra.
    Analyze(AnalyzeArgs),
    /// Fit propagation loss and facet reflectivity to per-waveguide total losses.
    FitLoss(FitLossArgs),
    /// Sliding-window optical-length spectrogram of one spectrum.
    Spectrogram(SpectrogramArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV with columns lambda_true_nm,lambda_c_nm,dx_cam_mm.
    pub lines: PathBuf,
    /// JSON with the starting geometry.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Parameters to fit (gamma, focal, dx_in).
    #[arg(long, value_delimiter = ',', value_parser = parse_free_param)]
    pub free: Vec<FreeParam>,
    /// Band for the nonlinearity figure (nm).
    #[arg(long, requires = "band_hi_nm")]
    pub band_lo_nm: Option<f64>,
    #[arg(long, requires = "band_lo_nm")]
    pub band_hi_nm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalysisFlags {
    #[arg(long)]
    pub oversample: Option<usize>,
    /// rectangular, hann or sinc.
    #[arg(long)]
    pub window: Option<Window>,
    #[arg(long)]
    pub zero_pad: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Spectrum CSVs (wavelength_nm,intensity), or camera CSVs
    /// (dx_cam_mm,intensity) when --calibration is given.
    #[arg(required = true)]
    pub spectra: Vec<PathBuf>,
    /// Calibration report from `calibrate`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Grating setting of each camera file (nm).
    #[arg(long, value_delimiter = ',')]
    pub lambda_c: Vec<f64>,
    /// Physical waveguide length; enables group indices and bias correction.
    #[arg(long)]
    pub length_mm: Option<f64>,
    /// Spectrograph PSF FWHM for the resolution-bias correction (pm).
    #[arg(long)]
    pub psf_fwhm_pm: Option<f64>,
    /// Pixel pitch for the bias correction; inferred from the data when absent (pm).
    #[arg(long)]
    pub pixel_pitch_pm: Option<f64>,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
}

#[derive(Debug, Args)]
pub struct FitLossArgs {
    /// CSV with columns waveguide_id,length_mm,r_tilde,sigma[,group_index].
    pub measurements: PathBuf,
    /// per-waveguide or per-length-average.
    #[arg(long, value_parser = parse_weighting)]
    pub weighting: Option<FitWeighting>,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    pub spectrum: PathBuf,
    #[arg(long)]
    pub window_fraction: Option<f64>,
    #[arg(long)]
    pub n_slices: Option<usize>,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
}

fn parse_free_param(s: &str) -> std::result::Result<FreeParam, String> {
    match s.trim() {
        "gamma" => Ok(FreeParam::Gamma),
        "focal" => Ok(FreeParam::Focal),
        "dx_in" | "dx-in" => Ok(FreeParam::DxIn),
        other => Err(format!("unknown parameter `{other}` (gamma, focal, dx_in)")),
    }
}

fn parse_weighting(s: &str) -> std::result::Result<FitWeighting, String> {
    match s.trim() {
        "per-waveguide" | "per_waveguide" => Ok(FitWeighting::PerWaveguide),
        "per-length-average" | "per_length_average" => Ok(FitWeighting::PerLengthAverage),
        other => Err(format!("unknown weighting `{other}`")),
    }
}

// ---------------------------------------------------------------------------
// Run configuration

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rng_seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub verbosity: Option<u8>,
    pub simulate: Option<SimulateConfig>,
    pub calibrate: CalibrateConfig,
    pub analyze: AnalyzeConfig,
    pub fit_loss: FitLossConfig,
    pub spectrogram: SpectrogramCmdConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub resonator: ResonatorSpec,
    pub instrument: InstrumentSpec,
    /// Single exposure over this band ...
    #[serde(default)]
    pub band: Option<Band>,
    /// ... or several exposures.
    #[serde(default)]
    pub plan: Option<ExposurePlan>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub initial: Option<CzernyTurnerParams>,
    pub free_params: Option<Vec<FreeParam>>,
    pub nonlinearity_band: Option<Band>,
    pub sensor_half_width_mm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub analysis: AnalysisConfig,
    pub length_mm: Option<f64>,
    pub lambda_c_nm: Vec<f64>,
    pub psf_fwhm_pm: Option<f64>,
    pub pixel_pitch_pm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitLossConfig {
    pub weighting: FitWeighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrogramCmdConfig {
    pub window_fraction: f64,
    pub n_slices: usize,
    pub window: Window,
    pub zero_pad: usize,
    pub oversample: usize,
    pub detrend: Detrend,
    pub resolve_spacing_mm: Option<f64>,
}

impl Default for SpectrogramCmdConfig {
    fn default() -> Self {
        let sg = SpectrogramConfig::default();
        let an = AnalysisConfig::default();
        Self {
            window_fraction: sg.window_fraction,
            n_slices: sg.n_slices,
            window: sg.window,
            zero_pad: sg.zero_pad,
            oversample: an.oversample,
            detrend: an.detrend,
            resolve_spacing_mm: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

fn apply_analysis_flags(cfg: &mut AnalysisConfig, flags: &AnalysisFlags) {
    if let Some(v) = flags.oversample {
        cfg.oversample = v;
    }
    if let Some(w) = flags.window {
        cfg.window = w;
    }
    if let Some(z) = flags.zero_pad {
        cfg.zero_pad = z;
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub error: ErrorBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub kind: String,
    pub exit_code: i32,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ErrorReport {
    pub fn from_error(e: &Error) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            error: ErrorBody {
                kind: e.kind().to_string(),
                exit_code: e.exit_code(),
                message: e.to_string(),
                field: match e {
                    Error::Config { field, .. } => Some(field.clone()),
                    _ => None,
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateManifest {
    pub schema_version: u32,
    pub kind: String,
    pub rng_seed: u64,
    pub exposures: Vec<ManifestEntry>,
    pub resonator: ResonatorSpec,
    pub instrument: InstrumentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub central_wavelength_nm: Option<f64>,
    pub first_nm: f64,
    pub last_nm: f64,
    pub samples: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationReport {
    pub schema_version: u32,
    pub kind: String,
    pub params: CzernyTurnerParams,
    pub free_params: Vec<FreeParam>,
    pub rms_pm: f64,
    pub residuals_pm: Vec<f64>,
    pub observations: usize,
    pub iterations: usize,
    pub covariance: Vec<Vec<f64>>,
    pub nonlinearity_band: Band,
    /// RMS calibration error relative to the band width (%).
    pub nonlinearity_percent: f64,
    /// Largest deviation of λ(dx_cam) from a straight line over the band,
    /// relative to the band width, grating centred on the band (%).
    pub axis_curvature_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StitchReport {
    pub relative_scales: Vec<f64>,
    pub overlap_mismatch: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeReport {
    pub optical_length_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_index: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_velocity_um_per_ps: Option<f64>,
    pub harmonic_amplitudes: Vec<f64>,
    pub peak_amplitude: f64,
    pub r_tilde_raw: Option<f64>,
    pub r_tilde_sigma_raw: Option<f64>,
    pub bias_factor: Option<f64>,
    pub r_tilde_corrected: Option<f64>,
    pub r_tilde_sigma_corrected: Option<f64>,
    pub excitation_fraction: Option<f64>,
    pub fringe_count: f64,
    pub confirmed: bool,
    pub unresolved: bool,
    pub unphysical_gain: bool,
    pub window_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub kind: String,
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_mm: Option<f64>,
    pub first_nm: f64,
    pub last_nm: f64,
    pub samples: usize,
    pub window: Window,
    pub oversample: usize,
    pub zero_pad: usize,
    pub resolution_mm: f64,
    pub axis_convention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stitch: Option<StitchReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psf_fwhm_pm: Option<f64>,
    pub modes: Vec<ModeReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossFitReport {
    pub schema_version: u32,
    pub kind: String,
    pub measurements: usize,
    pub fit: AlphaRFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrogramReport {
    pub schema_version: u32,
    pub kind: String,
    pub input: String,
    pub window: Window,
    pub window_fraction: f64,
    pub n_slices: usize,
    pub step_mm: f64,
    pub resolution_mm: f64,
    pub center_wavelength_nm: Vec<f64>,
    pub warnings: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const FOURIER_FILE: &str = "fourier.csv";
pub const LOSS_FIT_FILE: &str = "loss_fit.json";
pub const SPECTROGRAM_FILE: &str = "spectrogram.csv";
pub const SPECTROGRAM_REPORT_FILE: &str = "spectrogram.json";

// ---------------------------------------------------------------------------
// Execution

struct Context {
    config: RunConfig,
    seed: Option<u64>,
    out_dir: PathBuf,
}

/// Parse `args`, run the subcommand and return the process exit code. Errors
/// are written to stderr as an [`ErrorReport`].
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let report = ErrorReport::from_error(&e);
            eprintln!(
                "{}",
                serde_json::to_string(&report).unwrap_or_else(|_| e.to_string())
            );
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let verbosity = if cli.verbose > 0 {
        cli.verbose
    } else {
        config.verbosity.unwrap_or(0)
    };
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    let ctx = Context {
        seed: cli.seed.or(config.rng_seed),
        out_dir: cli
            .out_dir
            .clone()
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        config,
    };
    match &cli.command {
        Command::Simulate => cmd_simulate(&ctx),
        Command::Calibrate(a) => cmd_calibrate(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::FitLoss(a) => cmd_fit_loss(&ctx, a),
        Command::Spectrogram(a) => cmd_spectrogram(&ctx, a),
    }
}

fn cmd_simulate(ctx: &Context) -> Result<()> {
    let Some(sim) = ctx.config.simulate.clone() else {
        return Err(Error::config(
            "simulate",
            "the configuration has no `simulate` section",
        ));
    };
    let mut instrument = sim.instrument;
    if let Some(seed) = ctx.seed {
        instrument.rng_seed = seed;
    }
    sim.resonator.validate()?;
    instrument.validate()?;
    let spectra: Vec<Spectrum> = match (sim.band, &sim.plan) {
        (Some(band), None) => vec![simulate_spectrum(&sim.resonator, &instrument, band)?],
        (None, Some(plan)) => simulate_exposures(&sim.resonator, &instrument, plan)?,
        _ => {
            return Err(Error::config(
                "simulate",
                "give exactly one of `band` and `plan`",
            ))
        }
    };
    let mut exposures = Vec::with_capacity(spectra.len());
    for (i, s) in spectra.iter().enumerate() {
        let file = if spectra.len() == 1 {
            "spectrum.csv".to_string()
        } else {
            format!("exposure_{i:02}.csv")
        };
        io::write_spectrum_csv(&ctx.out_dir.join(&file), s)?;
        for w in &s.meta.warnings {
            log::warn!("{file}: {w}");
        }
        exposures.push(ManifestEntry {
            file,
            central_wavelength_nm: s.meta.central_wavelength_nm,
            first_nm: s.first_nm(),
            last_nm: s.last_nm(),
            samples: s.len(),
            warnings: s.meta.warnings.clone(),
        });
    }
    let manifest = SimulateManifest {
        schema_version: SCHEMA_VERSION,
        kind: "simulate".into(),
        rng_seed: instrument.rng_seed,
        exposures,
        resonator: sim.resonator,
        instrument,
    };
    io::write_json(&ctx.out_dir.join(MANIFEST_FILE), &manifest)?;
    println!(
        "wrote {} spectra to {}",
        manifest.exposures.len(),
        ctx.out_dir.display()
    );
    Ok(())
}

fn cmd_calibrate(ctx: &Context, args: &CalibrateArgs) -> Result<()> {
    let cc = &ctx.config.calibrate;
    let lines = io::read_lines_csv(&args.lines)?;
    let initial = match &args.initial {
        Some(p) => read_params(p)?,
        None => cc.initial.unwrap_or_else(CzernyTurnerParams::typical),
    };
    let free_params = if !args.free.is_empty() {
        args.free.clone()
    } else {
        cc.free_params
            .clone()
            .unwrap_or_else(|| FreeParam::ALL.to_vec())
    };
    let options = CalibrationOptions {
        free_params,
        sensor_half_width_mm: cc.sensor_half_width_mm.unwrap_or(SENSOR_HALF_WIDTH_MM),
        ..CalibrationOptions::default()
    };
    let fit = fit_calibration_with(&lines, &initial, &options)?;
    let band = match (args.band_lo_nm, args.band_hi_nm) {
        (Some(lo), Some(hi)) => Band::new(lo, hi)?,
        _ => match cc.nonlinearity_band {
            Some(b) => b,
            None => {
                let lo = lines
                    .iter()
                    .map(|l| l.lambda_true_nm)
                    .fold(f64::INFINITY, f64::min);
                let hi = lines
                    .iter()
                    .map(|l| l.lambda_true_nm)
                    .fold(f64::NEG_INFINITY, f64::max);
                Band::new(lo, hi)?
            }
        },
    };
    let curvature = nonlinearity_report(&fit.params, band)?;
    let report = CalibrationReport {
        schema_version: SCHEMA_VERSION,
        kind: "calibration".into(),
        params: fit.params,
        free_params: fit.free_params,
        rms_pm: fit.rms_pm,
        residuals_pm: fit.residuals_pm,
        observations: lines.len(),
        iterations: fit.iterations,
        covariance: fit.covariance,
        nonlinearity_band: band,
        nonlinearity_percent: 100.0 * calibration_nonlinearity(fit.rms_pm, band.span_nm()),
        axis_curvature_percent: 100.0 * curvature,
    };
    io::write_json(&ctx.out_dir.join(CALIBRATION_FILE), &report)?;
    println!("rms_pm {:.6}", report.rms_pm);
    println!("nonlinearity_percent {:.4}", report.nonlinearity_percent);
    Ok(())
}

/// Geometry from either a calibration report or a bare parameter document.
fn read_params(path: &Path) -> Result<CzernyTurnerParams> {
    let value: serde_json::Value = io::read_json(path)?;
    let inner = match value.get("params") {
        Some(p) if value.get("kind").is_some() => p.clone(),
        _ => value,
    };
    let params: CzernyTurnerParams = serde_json::from_value(inner)?;
    params.validate()?;
    Ok(params)
}

fn median_pitch_pm(s: &Spectrum) -> f64 {
    let mut d: Vec<f64> = s.wavelength_nm().windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2] * 1e3
}

fn cmd_analyze(ctx: &Context, args: &AnalyzeArgs) -> Result<()> {
    let ac = &ctx.config.analyze;
    let mut cfg = ac.analysis.clone();
    apply_analysis_flags(&mut cfg, &args.analysis);
    cfg.validate()?;
    let length_mm = args.length_mm.or(ac.length_mm);
    if let Some(l) = length_mm {
        if !(l > 0.0) {
            return Err(Error::config("length_mm", "must be positive"));
        }
    }

    let spectra: Vec<Spectrum> = match &args.calibration {
        Some(cal) => {
            let params = read_params(cal)?;
            let lambda_c = if args.lambda_c.is_empty() {
                &ac.lambda_c_nm
            } else {
                &args.lambda_c
            };
            if lambda_c.len() != args.spectra.len() {
                return Err(Error::config(
                    "lambda_c_nm",
                    format!(
                        "{} grating settings for {} camera files",
                        lambda_c.len(),
                        args.spectra.len()
                    ),
                ));
            }
            args.spectra
                .iter()
                .zip(lambda_c)
                .map(|(p, &lc)| io::read_camera_csv(p, &params, lc))
                .collect::<Result<_>>()?
        }
        None => args
            .spectra
            .iter()
            .map(|p| io::read_spectrum_csv(p))
            .collect::<Result<_>>()?,
    };

    let mut warnings = Vec::new();
    let (spectrum, stitch_report) = if spectra.len() > 1 {
        let st = stitch(&spectra)?;
        let report = StitchReport {
            relative_scales: st.relative_scales,
            overlap_mismatch: st.overlap_mismatch,
        };
        (st.spectrum, Some(report))
    } else {
        (
            spectra.into_iter().next().expect("at least one spectrum"),
            None,
        )
    };

    let analysis = analyze_spectrum(&spectrum, length_mm, &cfg)?;
    warnings.extend(analysis.warnings.iter().cloned());

    let psf = args.psf_fwhm_pm.or(ac.psf_fwhm_pm);
    let corrector = match (psf, length_mm) {
        (Some(psf), Some(_)) => {
            let instrument = InstrumentSpec {
                psf_fwhm_pm: psf,
                ..InstrumentSpec::ideal(
                    args.pixel_pitch_pm
                        .or(ac.pixel_pitch_pm)
                        .unwrap_or_else(|| median_pitch_pm(&spectrum)),
                )
            };
            instrument.validate()?;
            let band = Band::new(spectrum.first_nm(), spectrum.last_nm())?;
            Some(BiasCorrector::new(
                instrument,
                BiasOptions::new(band, cfg.clone()),
            ))
        }
        (Some(_), None) => {
            warnings.push("bias correction needs the waveguide length; skipped".into());
            None
        }
        _ => None,
    };

    let mut modes = Vec::with_capacity(analysis.detections.len());
    for d in &analysis.detections {
        let mut report = ModeReport {
            optical_length_mm: d.optical_length_mm,
            group_index: d.group_index,
            group_velocity_um_per_ps: d.group_velocity_um_per_ps(),
            harmonic_amplitudes: d.harmonic_amplitudes.clone(),
            peak_amplitude: d.peak_amplitude,
            r_tilde_raw: d.r_tilde,
            r_tilde_sigma_raw: d.r_tilde_sigma,
            bias_factor: None,
            r_tilde_corrected: None,
            r_tilde_sigma_corrected: None,
            excitation_fraction: d.excitation_fraction,
            fringe_count: d.fringe_count,
            confirmed: d.confirmed,
            unresolved: d.unresolved,
            unphysical_gain: d.unphysical_gain,
            window_truncated: d.window_truncated,
        };
        if let (Some(c), Some(l)) = (&corrector, length_mm) {
            match c.correct(d, l) {
                Ok(Some((r, s))) => {
                    report.bias_factor = d.r_tilde.map(|raw| r / raw);
                    report.r_tilde_corrected = Some(r);
                    report.r_tilde_sigma_corrected = Some(s);
                }
                Ok(None) => {}
                Err(e @ Error::Uncorrectable(_)) => {
                    warnings.push(format!("mode at {:.4} mm: {e}", d.optical_length_mm))
                }
                Err(e) => return Err(e),
            }
        }
        modes.push(report);
    }

    let fm = &analysis.fourier.meta;
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        kind: "analysis".into(),
        inputs: args
            .spectra
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        length_mm,
        first_nm: spectrum.first_nm(),
        last_nm: spectrum.last_nm(),
        samples: spectrum.len(),
        window: cfg.window,
        oversample: cfg.oversample,
        zero_pad: cfg.zero_pad,
        resolution_mm: fm.resolution_mm,
        axis_convention: fm.axis_convention.clone(),
        stitch: stitch_report,
        psf_fwhm_pm: psf,
        modes,
        warnings,
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    io::write_fourier_csv(&ctx.out_dir.join(FOURIER_FILE), &analysis.fourier)?;
    io::write_json(&ctx.out_dir.join(ANALYSIS_FILE), &report)?;
    println!("{} modes", report.modes.len());
    for m in &report.modes {
        match m.group_index {
            Some(ng) => println!("  OL {:.4} mm  n_g {:.4}", m.optical_length_mm, ng),
            None => println!("  OL {:.4} mm", m.optical_length_mm),
        }
    }
    Ok(())
}

fn cmd_fit_loss(ctx: &Context, args: &FitLossArgs) -> Result<()> {
    let measurements = io::read_measurements_csv(&args.measurements)?;
    let weighting = args.weighting.unwrap_or(ctx.config.fit_loss.weighting);
    let fit = fit_alpha_r(&measurements, weighting)?;
    println!(
        "alpha {:.5} /mm ({:.4} dB/mm)  R {:.4}",
        fit.alpha_per_mm, fit.alpha_db_per_mm, fit.reflectivity
    );
    let report = LossFitReport {
        schema_version: SCHEMA_VERSION,
        kind: "loss_fit".into(),
        measurements: measurements.len(),
        fit,
    };
    io::write_json(&ctx.out_dir.join(LOSS_FIT_FILE), &report)
}

fn cmd_spectrogram(ctx: &Context, args: &SpectrogramArgs) -> Result<()> {
    let sc = &ctx.config.spectrogram;
    let mut analysis = AnalysisConfig {
        oversample: sc.oversample,
        window: sc.window,
        zero_pad: sc.zero_pad,
        detrend: sc.detrend,
        ..AnalysisConfig::default()
    };
    apply_analysis_flags(&mut analysis, &args.analysis);
    analysis.validate()?;
    let sg_cfg = SpectrogramConfig {
        window_fraction: args.window_fraction.unwrap_or(sc.window_fraction),
        window: analysis.window,
        n_slices: args.n_slices.unwrap_or(sc.n_slices),
        zero_pad: analysis.zero_pad,
        resolve_spacing_mm: sc.resolve_spacing_mm,
    };
    let spectrum = io::read_spectrum_csv(&args.spectrum)?;
    let signal = condition(&spectrum, &analysis)?;
    let sg = spectrogram(&signal, &sg_cfg)?;
    io::write_spectrogram_csv(&ctx.out_dir.join(SPECTROGRAM_FILE), &sg)?;
    let report = SpectrogramReport {
        schema_version: SCHEMA_VERSION,
        kind: "spectrogram".into(),
        input: args.spectrum.display().to_string(),
        window: sg.window,
        window_fraction: sg.window_fraction,
        n_slices: sg.columns.len(),
        step_mm: sg.step_mm,
        resolution_mm: sg.resolution_mm,
        center_wavelength_nm: sg.center_wavelength_nm.clone(),
        warnings: sg.warnings.clone(),
    };
    io::write_json(&ctx.out_dir.join(SPECTROGRAM_REPORT_FILE), &report)?;
    println!(
        "{} slices x {} bins",
        sg.columns.len(),
        sg.optical_length_axis().len()
    );
    Ok(())
}
