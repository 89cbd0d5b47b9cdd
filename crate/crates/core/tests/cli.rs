mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use modal_fp::calibrate::{synthetic_observations, CzernyTurnerParams, SyntheticLines};
use modal_fp::cli::{
    AnalysisReport, CalibrationReport, ErrorReport, LossFitReport, RunConfig, SimulateConfig,
    SimulateManifest, SpectrogramReport,
};
use modal_fp::fit::LossMeasurement;
use modal_fp::io;
use modal_fp::model::{InstrumentSpec, ResonatorSpec};
use modal_fp::simulate::{Band, ExposurePlan};

use common::*;

const C_UM_PER_PS: f64 = 299.792458;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_modal-fp"));
    c.env_remove("MODAL_FP_OUT_DIR");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout {}\nstderr {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_report(out: &Output) -> ErrorReport {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {stderr}"))
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn sim_config(
    resonator: ResonatorSpec,
    instrument: InstrumentSpec,
    band: Option<Band>,
    plan: Option<ExposurePlan>,
) -> RunConfig {
    RunConfig {
        simulate: Some(SimulateConfig {
            resonator,
            instrument,
            band,
            plan,
        }),
        ..RunConfig::default()
    }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> String {
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.display().to_string()
}

/// Simulate the two-mode waveguide into `dir/spectrum.csv`.
fn simulate_two_mode(dir: &Path, instrument: InstrumentSpec, band: Band) {
    let cfg = write_config(
        dir,
        &sim_config(two_mode_resonator(), instrument, Some(band), None),
    );
    ok(&run(dir, &["--config", &cfg, "--out-dir", ".", "simulate"]));
}

#[test]
fn help_and_bad_usage_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["analyze"]).status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_from_the_seed() {
    let mut inst = instrument(10.0);
    inst.noise_sigma = 0.005;
    let cfg = sim_config(two_mode_resonator(), inst, Some(band()), None);
    let bytes = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let c = write_config(dir.path(), &cfg);
        ok(&run(
            dir.path(),
            &[
                "--config",
                &c,
                "--seed",
                seed,
                "--out-dir",
                "out",
                "simulate",
            ],
        ));
        let manifest: SimulateManifest = read(&dir.path().join("out/manifest.json"));
        assert_eq!(manifest.rng_seed, seed.parse::<u64>().unwrap());
        assert_eq!(manifest.exposures.len(), 1);
        assert_eq!(manifest.exposures[0].file, "spectrum.csv");
        assert_eq!(manifest.resonator, two_mode_resonator());
        fs::read(dir.path().join("out/spectrum.csv")).unwrap()
    };
    let a = bytes("42");
    assert_eq!(a, bytes("42"));
    assert_ne!(a, bytes("43"));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sim_config(two_mode_resonator(), instrument(0.0), Some(band()), None);
    let mut v = serde_json::to_value(&cfg).unwrap();
    v["simulate"]["resonator"]["modes"] = Value::Array(vec![]);
    let path = dir.path().join("empty.json");
    fs::write(&path, v.to_string()).unwrap();
    let out = run(
        dir.path(),
        &["--config", path.to_str().unwrap(), "simulate"],
    );
    assert_eq!(out.status.code(), Some(2));
    let r = error_report(&out);
    assert_eq!(r.error.kind, "config");
    assert_eq!(r.error.exit_code, 2);
    assert_eq!(r.error.field.as_deref(), Some("resonator.modes"));
    assert!(!dir.path().join("manifest.json").exists());

    let mut v = serde_json::to_value(&cfg).unwrap();
    v["simulate"]["instrument"]["psf_fwhm"] = Value::from(3.0);
    fs::write(&path, v.to_string()).unwrap();
    let out = run(
        dir.path(),
        &["--config", path.to_str().unwrap(), "simulate"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(error_report(&out).error.message.contains("psf_fwhm"));

    let out = run(dir.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_report(&out).error.field.as_deref(), Some("simulate"));
}

#[test]
fn analyze_reports_modes_fractions_and_group_velocity() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_mode(dir.path(), instrument(0.0), band());
    ok(&run(
        dir.path(),
        &["analyze", "spectrum.csv", "--length-mm", "0.9"],
    ));
    let report: AnalysisReport = read(&dir.path().join("analysis.json"));
    assert_eq!(report.schema_version, io::SCHEMA_VERSION);
    let modes: Vec<_> = report.modes.iter().filter(|m| m.confirmed).collect();
    assert_eq!(modes.len(), 2);
    for (m, (n_g, x)) in modes.iter().zip([(3.702, 0.8), (4.409, 0.2)]) {
        let g = m.group_index.unwrap();
        assert!((g / n_g - 1.0).abs() < 0.003, "n_g {g}");
        assert!((m.excitation_fraction.unwrap() - x).abs() < 0.03);
        let v = m.group_velocity_um_per_ps.unwrap();
        assert!((v - C_UM_PER_PS / g).abs() < 1e-9 * v);
        assert!((m.r_tilde_raw.unwrap() / 0.259 - 1.0).abs() < 0.01);
        assert!(m.r_tilde_corrected.is_none());
    }
    let fourier = fs::read_to_string(dir.path().join("fourier.csv")).unwrap();
    assert_eq!(fourier.lines().next(), Some("optical_length_mm,amplitude"));

    // without a length there is no group index to report
    ok(&run(
        dir.path(),
        &["analyze", "spectrum.csv", "--window", "sinc"],
    ));
    let raw: Value = read(&dir.path().join("analysis.json"));
    assert_eq!(raw["window"], "sinc");
    assert!(raw.get("length_mm").is_none());
    for m in raw["modes"].as_array().unwrap() {
        assert!(m.get("group_index").is_none());
        assert!(m.get("group_velocity_um_per_ps").is_none());
    }
}

#[test]
fn short_record_is_a_resolution_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_mode(
        dir.path(),
        instrument(0.0),
        Band::centered(LAMBDA0_NM, 0.5).unwrap(),
    );
    let out = run(
        dir.path(),
        &["analyze", "spectrum.csv", "--length-mm", "0.9"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_report(&out).error.kind, "resolution");
    assert!(!dir.path().join("analysis.json").exists());
}

#[test]
fn psf_correction_raises_the_loss_ratio() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_mode(dir.path(), instrument(10.0), band());
    ok(&run(
        dir.path(),
        &[
            "analyze",
            "spectrum.csv",
            "--length-mm",
            "0.9",
            "--psf-fwhm-pm",
            "10",
        ],
    ));
    let report: AnalysisReport = read(&dir.path().join("analysis.json"));
    assert_eq!(report.psf_fwhm_pm, Some(10.0));
    let modes: Vec<_> = report.modes.iter().filter(|m| m.confirmed).collect();
    assert_eq!(modes.len(), 2);
    for m in modes {
        let (raw, cor) = (m.r_tilde_raw.unwrap(), m.r_tilde_corrected.unwrap());
        assert!(cor > raw && m.bias_factor.unwrap() > 1.0);
        assert!((cor / 0.259 - 1.0).abs() < 0.02, "{raw} -> {cor}");
    }

    // a PSF without a length cannot be corrected
    ok(&run(
        dir.path(),
        &["analyze", "spectrum.csv", "--psf-fwhm-pm", "10"],
    ));
    let report: AnalysisReport = read(&dir.path().join("analysis.json"));
    assert!(report.warnings.iter().any(|w| w.contains("length")));
}

#[test]
fn camera_exposures_are_calibrated_and_stitched() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = ExposurePlan::evenly_spaced(LAMBDA0_NM, 3, 6.5, 2.4);
    plan.intensity_scales = vec![1.0, 1.3, 0.8];
    let cfg = write_config(
        dir.path(),
        &sim_config(two_mode_resonator(), instrument(0.0), None, Some(plan)),
    );
    ok(&run(
        dir.path(),
        &["--config", &cfg, "--out-dir", "sim", "simulate"],
    ));
    let manifest: SimulateManifest = read(&dir.path().join("sim/manifest.json"));
    assert_eq!(manifest.exposures.len(), 3);

    let params = CzernyTurnerParams::typical();
    fs::write(
        dir.path().join("geometry.json"),
        serde_json::to_string(&params).unwrap(),
    )
    .unwrap();
    let mut files = Vec::new();
    let mut settings = Vec::new();
    for (i, e) in manifest.exposures.iter().enumerate() {
        let s = io::read_spectrum_csv(&dir.path().join("sim").join(&e.file)).unwrap();
        let lc = e.central_wavelength_nm.unwrap();
        let name = format!("cam_{i}.csv");
        io::write_camera_csv(&dir.path().join(&name), &s, &params, lc).unwrap();
        files.push(name);
        settings.push(lc.to_string());
    }
    let lambda_c = settings.join(",");
    let mut args = vec![
        "analyze",
        "--calibration",
        "geometry.json",
        "--lambda-c",
        &lambda_c,
        "--length-mm",
        "0.9",
    ];
    args.extend(files.iter().map(String::as_str));
    ok(&run(dir.path(), &args));
    let report: AnalysisReport = read(&dir.path().join("analysis.json"));
    let st = report.stitch.expect("stitch report");
    assert_eq!(st.relative_scales.len(), 3);
    assert!(
        (st.relative_scales[1] / st.relative_scales[0] - 1.3).abs() < 0.01,
        "{:?}",
        st.relative_scales
    );
    assert!(
        (st.relative_scales[2] / st.relative_scales[0] - 0.8).abs() < 0.01,
        "{:?}",
        st.relative_scales
    );
    assert!((report.last_nm - report.first_nm - SPAN_NM).abs() < 0.3);
    let n_g: Vec<f64> = report
        .modes
        .iter()
        .filter(|m| m.confirmed)
        .map(|m| m.group_index.unwrap())
        .collect();
    assert_eq!(n_g.len(), 2);
    assert!(
        (n_g[0] / 3.702 - 1.0).abs() < 0.003 && (n_g[1] / 4.409 - 1.0).abs() < 0.003,
        "{n_g:?}"
    );

    let mut args = vec![
        "analyze",
        "--calibration",
        "geometry.json",
        "--lambda-c",
        "775",
    ];
    args.extend(files.iter().map(String::as_str));
    let out = run(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        error_report(&out).error.field.as_deref(),
        Some("lambda_c_nm")
    );
}

#[test]
fn calibrate_recovers_geometry_from_line_tables() {
    let truth = CzernyTurnerParams::typical();
    let initial = CzernyTurnerParams {
        gamma_rad: truth.gamma_rad + 0.01,
        focal_mm: truth.focal_mm * 1.005,
        dx_in_mm: truth.dx_in_mm + 0.1,
        ..truth
    };
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("initial.json"),
        serde_json::to_string(&initial).unwrap(),
    )
    .unwrap();
    let calibrate = |noise_pm: f64| -> CalibrationReport {
        let mut recipe = SyntheticLines::argon_sweep(766.0, 801.0, 0.2);
        recipe.noise_pm = noise_pm;
        recipe.seed = 3;
        recipe.max_observations = Some(110);
        let lines = synthetic_observations(&truth, &recipe).unwrap();
        io::write_lines_csv(&dir.path().join("lines.csv"), &lines).unwrap();
        let out = run(
            dir.path(),
            &["calibrate", "lines.csv", "--initial", "initial.json"],
        );
        ok(&out);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("rms_pm") && stdout.contains("nonlinearity_percent"));
        read(&dir.path().join("calibration.json"))
    };
    let exact = calibrate(0.0);
    assert_eq!(exact.observations, 110);
    assert!(exact.rms_pm < 0.01, "{}", exact.rms_pm);
    assert!((exact.params.gamma_rad - truth.gamma_rad).abs() < 1e-6);
    assert!((exact.params.focal_mm - truth.focal_mm).abs() < 1e-3);
    assert!((exact.params.dx_in_mm - truth.dx_in_mm).abs() < 1e-3);

    let noisy = calibrate(5.0);
    assert!((4.0..6.0).contains(&noisy.rms_pm), "{}", noisy.rms_pm);
    assert!(noisy.nonlinearity_percent < 0.05);
    assert_eq!(noisy.covariance.len(), 3);

    // the report doubles as a starting geometry
    ok(&run(
        dir.path(),
        &[
            "calibrate",
            "lines.csv",
            "--initial",
            "calibration.json",
            "--free",
            "gamma,focal",
        ],
    ));
    let refit: CalibrationReport = read(&dir.path().join("calibration.json"));
    assert_eq!(refit.free_params.len(), 2);
    assert_eq!(refit.covariance.len(), 2);
}

#[test]
fn fit_loss_recovers_exact_parameters() {
    let (alpha, refl) = (0.35, 0.3);
    let row = |id: &str, l: f64| LossMeasurement {
        waveguide_id: id.into(),
        length_mm: l,
        r_tilde: refl * (-alpha * l).exp(),
        sigma: 0.01,
        group_index: None,
    };
    let dir = tempfile::tempdir().unwrap();
    io::write_measurements_csv(
        &dir.path().join("m.csv"),
        &[row("a", 0.9), row("b", 0.9), row("c", 2.0), row("d", 2.0)],
    )
    .unwrap();
    for weighting in ["per-waveguide", "per-length-average"] {
        ok(&run(
            dir.path(),
            &["fit-loss", "m.csv", "--weighting", weighting],
        ));
        let r: LossFitReport = read(&dir.path().join("loss_fit.json"));
        assert_eq!(r.measurements, 4);
        assert!(
            (r.fit.alpha_per_mm - alpha).abs() < 1e-9,
            "{weighting}: {}",
            r.fit.alpha_per_mm
        );
        assert!((r.fit.reflectivity - refl).abs() < 1e-9);
    }

    io::write_measurements_csv(&dir.path().join("one.csv"), &[row("a", 0.9), row("b", 0.9)])
        .unwrap();
    let out = run(dir.path(), &["fit-loss", "one.csv"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(
        dir.path().join("bad.csv"),
        "waveguide_id,length_mm,sigma\na,0.9,0.01\n",
    )
    .unwrap();
    let out = run(dir.path(), &["fit-loss", "bad.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_report(&out).error.message.contains("r_tilde"));
}

#[test]
fn spectrogram_writes_one_column_per_slice() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_mode(dir.path(), instrument(0.0), band());
    ok(&run(
        dir.path(),
        &[
            "spectrogram",
            "spectrum.csv",
            "--n-slices",
            "5",
            "--window-fraction",
            "0.7",
        ],
    ));
    let report: SpectrogramReport = read(&dir.path().join("spectrogram.json"));
    assert_eq!(report.n_slices, 5);
    let centers = &report.center_wavelength_nm;
    assert!(centers.windows(2).all(|w| w[1] > w[0]));
    let csv = fs::read_to_string(dir.path().join("spectrogram.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 6);
    assert_eq!(header[0], "optical_length_mm");
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() > 100);
    assert!(rows.iter().all(|r| r.split(',').count() == 6));

    let out = run(
        dir.path(),
        &["spectrogram", "spectrum.csv", "--window-fraction", "1.5"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_directory_comes_from_flag_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    simulate_two_mode(dir.path(), instrument(0.0), band());
    let env_dir = dir.path().join("from_env");
    let out = bin()
        .current_dir(dir.path())
        .env("MODAL_FP_OUT_DIR", &env_dir)
        .args(["analyze", "spectrum.csv", "--length-mm", "0.9"])
        .output()
        .unwrap();
    ok(&out);
    assert!(env_dir.join("analysis.json").exists());

    let out = bin()
        .current_dir(dir.path())
        .env("MODAL_FP_OUT_DIR", &env_dir)
        .args(["--out-dir", "over_env", "spectrogram", "spectrum.csv"])
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("over_env/spectrogram.csv").exists());
    assert!(!env_dir.join("spectrogram.csv").exists());

    let out = run(dir.path(), &["fit-loss", "missing.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_report(&out).error.kind, "io");

    let cfg = RunConfig {
        out_dir: Some("from_config".into()),
        ..RunConfig::default()
    };
    let c = write_config(dir.path(), &cfg);
    ok(&run(
        dir.path(),
        &["--config", &c, "spectrogram", "spectrum.csv"],
    ));
    assert!(dir.path().join("from_config/spectrogram.csv").exists());
    ok(&run(
        dir.path(),
        &[
            "--config",
            &c,
            "--out-dir",
            "from_flag",
            "spectrogram",
            "spectrum.csv",
        ],
    ));
    assert!(dir.path().join("from_flag/spectrogram.csv").exists());
}
