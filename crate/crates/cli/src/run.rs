use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use homsim_core::interference::{
    fourfold_csi, fourfold_dip, fwhm, thermal_csi, thermal_dip, twin_csi, twin_dip, visibility, CsiMap, DelayScan,
    DipCurve, DipMode,
};
use homsim_core::multipair::{multipair_visibility, MultipairConfig, MultipairReport};
use homsim_core::schmidt::{decompose, purity};
use homsim_core::spdc_model::{build_jsa, reduced_kernel, JointSpectralAmplitude, PhaseMatching, Photon};
use homsim_core::spectrometer::{
    read_events_csv, reconstruct_csi, resolution, sample_events, smear_csi, window_filter_scan, write_events_csv,
    write_scan_csv,
};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, EigenvalueSource, RunConfig, Scenario};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{context}: {message}")]
    Input { context: &'static str, message: String },
    #[error("{context}: {message}")]
    Numerical { context: &'static str, message: String },
    #[error("{0}")]
    Io(String),
}

impl RunError {
    /// 2 configuration, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Input { .. } => 2,
            RunError::Numerical { .. } => 3,
            RunError::Io(_) => 4,
        }
    }
}

trait Context<T> {
    fn context(self, context: &'static str) -> Result<T, RunError>;
}

impl<T> Context<T> for homsim_core::Result<T> {
    fn context(self, context: &'static str) -> Result<T, RunError> {
        self.map_err(|e| match e {
            homsim_core::Error::Io(msg) => RunError::Io(format!("{context}: {msg}")),
            e if e.is_input_error() => RunError::Input {
                context,
                message: e.to_string(),
            },
            e => RunError::Numerical {
                context,
                message: e.to_string(),
            },
        })
    }
}

/// One CSV written by a run, with its gnuplot column mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: PathBuf,
    pub columns: Vec<&'static str>,
    pub plot: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub artifacts: Vec<Artifact>,
    pub metadata_path: PathBuf,
    pub results: Map<String, Value>,
}

/// Writes `name` inside `dir` through a temporary file that is renamed into
/// place only after `fill` succeeds.
fn write_atomic<F>(dir: &Path, name: &str, fill: F) -> Result<PathBuf, RunError>
where
    F: FnOnce(&mut BufWriter<&mut fs::File>) -> Result<(), RunError>,
{
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(io)?;
    }
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| io(e.error))?;
    Ok(target)
}

fn csv_artifact<F>(dir: &Path, name: &str, columns: Vec<&'static str>, plot: &str, fill: F) -> Result<Artifact, RunError>
where
    F: FnOnce(&mut BufWriter<&mut fs::File>) -> homsim_core::Result<()>,
{
    let path = write_atomic(dir, name, |w| fill(w).context("writing output"))?;
    Ok(Artifact {
        path,
        columns,
        plot: format!("plot '{name}' {plot}"),
    })
}

fn source(cfg: &RunConfig) -> Result<JointSpectralAmplitude, RunError> {
    build_jsa(&cfg.pump, &cfg.crystal, &cfg.grid, &cfg.grid).context("building joint spectral amplitude")
}

fn dip_curve(jsa: &JointSpectralAmplitude, mode: DipMode, scan: &DelayScan) -> Result<DipCurve, RunError> {
    match mode {
        DipMode::Fourfold => fourfold_dip(jsa, jsa, scan),
        DipMode::Thermal => thermal_dip(jsa, scan).map(|(c, _)| c),
        DipMode::Twin => twin_dip(jsa, scan),
    }
    .context("computing dip")
}

fn csi_map(jsa: &JointSpectralAmplitude, mode: DipMode, tau_ps: f64) -> Result<CsiMap, RunError> {
    match mode {
        DipMode::Fourfold => fourfold_csi(jsa, jsa, tau_ps),
        DipMode::Thermal => thermal_csi(jsa, tau_ps),
        DipMode::Twin => twin_csi(jsa, tau_ps),
    }
    .context("computing CSI")
}

fn number(x: f64) -> Value {
    // JSON has no infinities
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}

fn config_digest(text: &str, cfg: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    // command-line overrides change the run without changing the document
    h.update(format!("\0{}\0{}", cfg.scenario, cfg.sample.seed).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Executes the configured scenario, writing CSV results and `metadata.json`
/// into `cfg.output_dir`.
pub fn run(cfg: &RunConfig, config_text: &str) -> Result<RunSummary, RunError> {
    let started = Instant::now();
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;

    let mut results = Map::new();
    let mut artifacts = Vec::new();

    match cfg.scenario {
        Scenario::Jsa => {
            let jsa = source(cfg)?;
            let rho = reduced_kernel(&jsa, Photon::Idler).context("reducing kernel")?;
            results.insert("purity".into(), number(rho.purity()));
            artifacts.push(csv_artifact(
                dir,
                "jsa.csv",
                vec!["omega_s", "omega_i", "re", "im"],
                "using 1:2:($3**2+$4**2) with image",
                |w| jsa.write_csv(w),
            )?);
        }
        Scenario::Schmidt => {
            let dec = decompose(&source(cfg)?, cfg.schmidt_truncation).context("Schmidt decomposition")?;
            results.insert("purity".into(), number(purity(&dec)));
            results.insert("leading_eigenvalue".into(), number(dec.eigenvalues()[0]));
            results.insert(
                "retained_eigenvalues".into(),
                Value::Array(dec.retained(false).into_iter().map(number).collect()),
            );
            artifacts.push(csv_artifact(
                dir,
                "schmidt.csv",
                vec!["index", "lambda"],
                "using 1:2 with impulses",
                |w| dec.write_csv(w),
            )?);
        }
        Scenario::Dip => {
            let jsa = source(cfg)?;
            let scan = DelayScan::linspace(cfg.dip.delay_start_ps, cfg.dip.delay_stop_ps, cfg.dip.delay_points)
                .context("delay scan")?;
            let curve = dip_curve(&jsa, cfg.dip.mode, &scan)?;
            results.insert("mode".into(), cfg.dip.mode.as_str().into());
            results.insert("visibility".into(), number(visibility(&curve).context("visibility")?));
            results.insert(
                "fwhm_ps".into(),
                fwhm(&curve).map(number).unwrap_or(Value::Null),
            );
            results.insert("asymptote".into(), curve.asymptote.map_or(Value::Null, number));
            artifacts.push(csv_artifact(
                dir,
                "dip.csv",
                vec!["tau_ps", "probability"],
                "using 1:2 with linespoints",
                |w| curve.write_csv(w),
            )?);
        }
        Scenario::Csi => {
            let jsa = source(cfg)?;
            let mut map = csi_map(&jsa, cfg.csi.mode, cfg.csi.delay_ps)?;
            if cfg.csi.smear {
                map = smear_csi(&map, &cfg.spectrometer).context("smearing CSI")?;
            }
            results.insert("mode".into(), cfg.csi.mode.as_str().into());
            results.insert("tau_ps".into(), number(cfg.csi.delay_ps));
            results.insert("integral".into(), number(map.integral()));
            results.insert("clamped_cells".into(), map.clamped.into());
            artifacts.push(csv_artifact(
                dir,
                "csi.csv",
                vec!["lambda1_nm", "lambda2_nm", "intensity"],
                "using 1:2:3 with image",
                |w| map.write_csv(w),
            )?);
        }
        Scenario::Multipair => {
            let mut model = cfg.multipair.model.clone();
            if cfg.multipair.eigenvalue_source == EigenvalueSource::Computed {
                let dec = decompose(&source(cfg)?, cfg.schmidt_truncation).context("Schmidt decomposition")?;
                model.schmidt_eigenvalues = dec.retained(false);
            }
            let mut reports = vec![multipair_visibility(&model).context("multi-pair model")?];
            for n in &cfg.multipair.sweep_mean_photon_numbers {
                let m = MultipairConfig {
                    mean_photon_number: *n,
                    ..model.clone()
                };
                reports.push(multipair_visibility(&m).context("multi-pair sweep")?);
            }
            results.insert("visibility".into(), number(reports[0].visibility));
            results.insert("squeezing".into(), number(reports[0].squeezing));
            results.insert(
                "schmidt_eigenvalues".into(),
                Value::Array(model.schmidt_eigenvalues.iter().copied().map(number).collect()),
            );
            artifacts.push(csv_artifact(
                dir,
                "multipair.csv",
                vec!["nbar", "eta", "xi", "p", "r", "P_mean", "P_min", "V"],
                "using 1:8 with linespoints",
                |w| MultipairReport::write_csv(&reports, w),
            )?);
        }
        Scenario::FilterScan => {
            let jsa = source(cfg)?;
            let scan = window_filter_scan(&jsa, &jsa, &cfg.filter.windows_nm).context("window scan")?;
            results.insert(
                "visibilities".into(),
                Value::Array(scan.iter().map(|(_, v)| number(*v)).collect()),
            );
            results.insert("window_ps_per_nm".into(), number(cfg.filter.window_ps_per_nm));
            artifacts.push(csv_artifact(
                dir,
                "filter_scan.csv",
                vec!["window_nm", "visibility"],
                "using 1:2 with linespoints",
                |w| write_scan_csv(&scan, w),
            )?);
        }
        Scenario::Sample => {
            let jsa = source(cfg)?;
            let map = csi_map(&jsa, cfg.sample.mode, cfg.sample.delay_ps)?;
            let events = sample_events(&map, cfg.sample.pairs, cfg.sample.seed, &cfg.spectrometer)
                .context("sampling events")?;
            results.insert("pairs".into(), events.len().into());
            results.insert("seed".into(), cfg.sample.seed.into());
            results.insert("resolution_nm".into(), number(resolution(&cfg.spectrometer).context("resolution")?));
            artifacts.push(csv_artifact(
                dir,
                "events.csv",
                vec!["channel", "arrival_time_ps"],
                "every ::1 using 0:2 with dots",
                |w| write_events_csv(&events, w),
            )?);
        }
        Scenario::Reconstruct => {
            let path = cfg.reconstruct.events_file.as_ref().ok_or_else(|| ConfigError {
                problems: vec!["reconstruct.events_file: required by the reconstruct scenario".into()],
            })?;
            let file = fs::File::open(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
            let events = read_events_csv(std::io::BufReader::new(file)).context("reading events")?;
            let hist =
                reconstruct_csi(&events, &cfg.spectrometer, cfg.reconstruct.bin_width_nm).context("reconstruction")?;
            results.insert("pairs".into(), hist.total().into());
            results.insert("bins".into(), json!([hist.counts.nrows(), hist.counts.ncols()]));
            artifacts.push(csv_artifact(
                dir,
                "histogram.csv",
                vec!["lambda1_nm", "lambda2_nm", "count"],
                "using 1:2:3 with image",
                |w| hist.write_csv(w),
            )?);
        }
    }

    let metadata = json!({
        "tool": "homsim",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": cfg.scenario.as_str(),
        "config_sha256": config_digest(config_text, cfg),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "grid": {
            "center_wavelength_nm": cfg.grid.center_wavelength_nm(),
            "span_nm": cfg.grid.spacing_nm() * (cfg.grid.len() - 1) as f64,
            "points": cfg.grid.len(),
            "max_delay_ps": cfg.grid.max_delay_ps(),
        },
        "pump": {
            "center_wavelength_nm": cfg.pump.center_wavelength_nm,
            "duration_fwhm_ps": cfg.pump.duration_fwhm_ps,
        },
        "crystal": {
            "length_mm": cfg.crystal.length_mm,
            "inverse_group_velocity_pump_ps_per_mm": cfg.crystal.inverse_group_velocity_pump_ps_per_mm,
            "inverse_group_velocity_signal_ps_per_mm": cfg.crystal.inverse_group_velocity_signal_ps_per_mm,
            "inverse_group_velocity_idler_ps_per_mm": cfg.crystal.inverse_group_velocity_idler_ps_per_mm,
            "phase_matching": match cfg.crystal.phase_matching {
                PhaseMatching::Sinc => "sinc",
                PhaseMatching::GaussianApprox => "gaussian",
            },
        },
        "results": Value::Object(results.clone()),
        "outputs": artifacts.iter().map(|a| json!({
            "file": a.path.file_name().map(|n| n.to_string_lossy().into_owned()),
            "columns": a.columns,
            "gnuplot": a.plot,
        })).collect::<Vec<_>>(),
    });
    let metadata_path = write_atomic(dir, "metadata.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &metadata).map_err(|e| RunError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| RunError::Io(e.to_string()))
    })?;

    Ok(RunSummary {
        artifacts,
        metadata_path,
        results,
    })
}
