//! Run configuration: a flat TOML document of dotted keys, with physical
//! units carried in the key names.
//!
//! ```toml
//! pump.duration_fwhm_ps = 2.0
//! crystal.length_mm = 30.0
//! dip.delay_points = 101
//! ```
//!
//! Every problem found while reading a document is collected, so a single
//! pass reports all of them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use homsim_core::interference::DipMode;
use homsim_core::multipair::{MultipairConfig, PAPER_SCHMIDT_EIGENVALUES};
use homsim_core::schmidt::DEFAULT_TRUNCATION;
use homsim_core::spdc_model::{CrystalSpec, FrequencyGrid, PhaseMatching, PumpShape, PumpSpec};
use homsim_core::spectrometer::{default_window_ps_per_nm, resolution, window_ns_to_nm, DispersionSpec};
use toml::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Scenario {
    Jsa,
    Schmidt,
    Dip,
    Csi,
    Multipair,
    FilterScan,
    Sample,
    Reconstruct,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Jsa => "jsa",
            Scenario::Schmidt => "schmidt",
            Scenario::Dip => "dip",
            Scenario::Csi => "csi",
            Scenario::Multipair => "multipair",
            Scenario::FilterScan => "filter-scan",
            Scenario::Sample => "sample",
            Scenario::Reconstruct => "reconstruct",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::value_variants().iter().copied().find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All validation problems of one configuration document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration problem(s):", self.problems.len())?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenvalueSource {
    /// The published six-mode list, truncated.
    Published,
    /// Schmidt decomposition of the configured source.
    Computed,
    /// `multipair.schmidt_eigenvalues`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipSettings {
    pub mode: DipMode,
    pub delay_start_ps: f64,
    pub delay_stop_ps: f64,
    pub delay_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiSettings {
    pub mode: DipMode,
    pub delay_ps: f64,
    /// Blur with the spectrometer resolution.
    pub smear: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipairSettings {
    pub model: MultipairConfig,
    pub eigenvalue_source: EigenvalueSource,
    /// Extra mean photon numbers evaluated after `model`.
    pub sweep_mean_photon_numbers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub windows_nm: Vec<f64>,
    pub window_ps_per_nm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSettings {
    pub pairs: usize,
    pub seed: u64,
    pub mode: DipMode,
    pub delay_ps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructSettings {
    pub events_file: Option<PathBuf>,
    pub bin_width_nm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub grid: FrequencyGrid,
    pub pump: PumpSpec,
    pub crystal: CrystalSpec,
    pub schmidt_truncation: usize,
    pub dip: DipSettings,
    pub csi: CsiSettings,
    pub multipair: MultipairSettings,
    pub filter: FilterSettings,
    pub spectrometer: DispersionSpec,
    pub sample: SampleSettings,
    pub reconstruct: ReconstructSettings,
    pub output_dir: PathBuf,
}

/// Reads typed values out of the flattened document, remembering which keys
/// were consumed and every problem met along the way.
struct Fields {
    values: BTreeMap<String, Value>,
    used: BTreeSet<String>,
    problems: Vec<String>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<&Value> {
        self.used.insert(key.to_string());
        self.values.get(key)
    }

    fn problem(&mut self, key: &str, msg: impl fmt::Display) {
        self.problems.push(format!("{key}: {msg}"));
    }

    fn float(&mut self, key: &str, default: f64) -> f64 {
        match self.take(key).cloned() {
            None => default,
            Some(Value::Float(f)) => f,
            Some(Value::Integer(i)) => i as f64,
            Some(other) => {
                self.problem(key, format!("expected a number, got {}", other.type_str()));
                default
            }
        }
    }

    fn integer(&mut self, key: &str, default: i64) -> i64 {
        match self.take(key).cloned() {
            None => default,
            Some(Value::Integer(i)) => i,
            Some(other) => {
                self.problem(key, format!("expected an integer, got {}", other.type_str()));
                default
            }
        }
    }

    fn count(&mut self, key: &str, default: usize) -> usize {
        let v = self.integer(key, default as i64);
        usize::try_from(v).unwrap_or_else(|_| {
            self.problem(key, format!("must be non-negative, got {v}"));
            default
        })
    }

    fn boolean(&mut self, key: &str, default: bool) -> bool {
        match self.take(key).cloned() {
            None => default,
            Some(Value::Boolean(b)) => b,
            Some(other) => {
                self.problem(key, format!("expected true or false, got {}", other.type_str()));
                default
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.take(key).cloned() {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(other) => {
                self.problem(key, format!("expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        match self.take(key).cloned() {
            None => None,
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (k, item) in items.iter().enumerate() {
                    match item {
                        Value::Float(f) => out.push(*f),
                        Value::Integer(i) => out.push(*i as f64),
                        other => self.problem(key, format!("element {k} is {}, expected a number", other.type_str())),
                    }
                }
                Some(out)
            }
            Some(other) => {
                self.problem(key, format!("expected an array of numbers, got {}", other.type_str()));
                None
            }
        }
    }

    fn dip_mode(&mut self, key: &str) -> DipMode {
        match self.string(key).as_deref() {
            None | Some("fourfold") => DipMode::Fourfold,
            Some("thermal") => DipMode::Thermal,
            Some("twin") => DipMode::Twin,
            Some(other) => {
                self.problem(key, format!("unknown mode {other:?} (fourfold, thermal, twin)"));
                DipMode::Fourfold
            }
        }
    }

    fn require(&mut self, ok: bool, key: &str, msg: impl fmt::Display) {
        if !ok {
            self.problem(key, msg);
        }
    }

    fn positive(&mut self, key: &str, v: f64) {
        self.require(v.is_finite() && v > 0.0, key, format!("must be positive, got {v}"));
    }

    fn finite(&mut self, key: &str, v: f64) {
        self.require(v.is_finite(), key, format!("must be finite, got {v}"));
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses and validates a configuration document.
///
/// The scenario comes from `requested` (the command line) or from the
/// document's `scenario` key; when both are present they must agree.
pub fn parse_config(text: &str, requested: Option<Scenario>) -> Result<RunConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        problems: vec![format!("syntax: {}", e.message())],
    })?;
    let mut values = BTreeMap::new();
    flatten("", &table, &mut values);
    let mut f = Fields {
        values,
        used: BTreeSet::new(),
        problems: Vec::new(),
    };

    let declared = f.string("scenario");
    let declared_scenario = declared.as_deref().and_then(|s| {
        let parsed = Scenario::parse(s);
        if parsed.is_none() {
            f.problem("scenario", format!("unknown scenario {s:?}"));
        }
        parsed
    });
    let scenario = match (requested, declared_scenario) {
        (Some(a), Some(b)) if a != b => {
            f.problem("scenario", format!("document declares {b} but {a} was requested"));
            a
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            if declared.is_none() {
                f.problem("scenario", "no scenario given");
            }
            Scenario::Dip
        }
    };

    let center_nm = f.float("grid.center_wavelength_nm", 1584.0);
    let span_nm = f.float("grid.span_nm", 30.0);
    let points = f.count("grid.points", 256);
    f.positive("grid.center_wavelength_nm", center_nm);
    f.positive("grid.span_nm", span_nm);
    f.require(points >= 2, "grid.points", format!("needs at least 2 points, got {points}"));
    let grid = FrequencyGrid::from_wavelength(center_nm, span_nm, points.max(2)).unwrap_or_else(|e| {
        f.problem("grid", e);
        FrequencyGrid::default()
    });

    let pump = PumpSpec {
        center_wavelength_nm: f.float("pump.center_wavelength_nm", 792.0),
        duration_fwhm_ps: f.float("pump.duration_fwhm_ps", 2.0),
        shape: match f.string("pump.shape").as_deref() {
            None | Some("gaussian") => PumpShape::Gaussian,
            Some(other) => {
                f.problem("pump.shape", format!("unknown shape {other:?} (gaussian)"));
                PumpShape::Gaussian
            }
        },
    };
    f.positive("pump.center_wavelength_nm", pump.center_wavelength_nm);
    f.positive("pump.duration_fwhm_ps", pump.duration_fwhm_ps);

    let base = CrystalSpec::default();
    let crystal = CrystalSpec {
        length_mm: f.float("crystal.length_mm", base.length_mm),
        inverse_group_velocity_pump_ps_per_mm: f.float(
            "crystal.inverse_group_velocity_pump_ps_per_mm",
            base.inverse_group_velocity_pump_ps_per_mm,
        ),
        inverse_group_velocity_signal_ps_per_mm: f.float(
            "crystal.inverse_group_velocity_signal_ps_per_mm",
            base.inverse_group_velocity_signal_ps_per_mm,
        ),
        inverse_group_velocity_idler_ps_per_mm: f.float(
            "crystal.inverse_group_velocity_idler_ps_per_mm",
            base.inverse_group_velocity_idler_ps_per_mm,
        ),
        phase_matching: match f.string("crystal.phase_matching").as_deref() {
            None | Some("sinc") => PhaseMatching::Sinc,
            Some("gaussian") => PhaseMatching::GaussianApprox,
            Some(other) => {
                f.problem("crystal.phase_matching", format!("unknown profile {other:?} (sinc, gaussian)"));
                PhaseMatching::Sinc
            }
        },
    };
    f.positive("crystal.length_mm", crystal.length_mm);
    if let Err(e) = crystal.validate() {
        f.problem("crystal", e);
    }

    let schmidt_truncation = f.count("schmidt.truncation", DEFAULT_TRUNCATION);
    f.require(
        (1..=points.max(1)).contains(&schmidt_truncation),
        "schmidt.truncation",
        format!("must lie in 1..={points}, got {schmidt_truncation}"),
    );

    let dip = DipSettings {
        mode: f.dip_mode("dip.mode"),
        delay_start_ps: f.float("dip.delay_start_ps", -20.0),
        delay_stop_ps: f.float("dip.delay_stop_ps", 20.0),
        delay_points: f.count("dip.delay_points", 101),
    };
    f.finite("dip.delay_start_ps", dip.delay_start_ps);
    f.finite("dip.delay_stop_ps", dip.delay_stop_ps);
    f.require(
        dip.delay_stop_ps > dip.delay_start_ps,
        "dip.delay_stop_ps",
        "must exceed dip.delay_start_ps",
    );
    f.require(dip.delay_points >= 2, "dip.delay_points", "needs at least 2 delays");

    let csi = CsiSettings {
        mode: f.dip_mode("csi.mode"),
        delay_ps: f.float("csi.delay_ps", 0.0),
        smear: f.boolean("csi.smear", false),
    };
    f.require(!csi.delay_ps.is_nan(), "csi.delay_ps", "must be a number");

    let spectrometer = DispersionSpec {
        dispersion_ps_per_km_nm: f.float("spectrometer.dispersion_ps_per_km_nm", 125.0),
        fiber_length_km: f.float("spectrometer.fiber_length_km", 7.53),
        jitter_fwhm_ps: f.float("spectrometer.jitter_fwhm_ps", 100.0),
        reference_wavelength_nm: f.float("spectrometer.reference_wavelength_nm", center_nm),
    };
    f.finite("spectrometer.dispersion_ps_per_km_nm", spectrometer.dispersion_ps_per_km_nm);
    f.require(
        spectrometer.total_dispersion_ps_per_nm() != 0.0,
        "spectrometer.fiber_length_km",
        "total dispersion (dispersion x length) must be non-zero",
    );
    f.require(
        spectrometer.jitter_fwhm_ps.is_finite() && spectrometer.jitter_fwhm_ps >= 0.0,
        "spectrometer.jitter_fwhm_ps",
        format!("must be non-negative, got {}", spectrometer.jitter_fwhm_ps),
    );
    f.positive("spectrometer.reference_wavelength_nm", spectrometer.reference_wavelength_nm);

    let multipair = read_multipair(&mut f, schmidt_truncation);

    let window_ps_per_nm = f.float("filter.window_ps_per_nm", default_window_ps_per_nm(&spectrometer));
    f.positive("filter.window_ps_per_nm", window_ps_per_nm);
    let windows_nm = match (f.floats("filter.windows_nm"), f.floats("filter.windows_ns")) {
        (Some(_), Some(_)) => {
            f.problem("filter.windows_ns", "give either filter.windows_nm or filter.windows_ns, not both");
            Vec::new()
        }
        (Some(nm), None) => nm,
        (None, Some(ns)) => ns
            .iter()
            .map(|w| window_ns_to_nm(*w, window_ps_per_nm).unwrap_or(f64::NAN))
            .collect(),
        (None, None) => vec![f64::INFINITY, 2.66, 1.06, 0.53],
    };
    if windows_nm.iter().any(|w| w.is_nan() || *w <= 0.0) {
        f.problem("filter.windows_nm", "every window must be positive");
    }
    let filter = FilterSettings {
        windows_nm,
        window_ps_per_nm,
    };

    let seed = f.integer("sample.seed", 1);
    let sample = SampleSettings {
        pairs: f.count("sample.pairs", 100_000),
        seed: u64::try_from(seed).unwrap_or_else(|_| {
            f.problem("sample.seed", format!("must be non-negative, got {seed}"));
            0
        }),
        mode: f.dip_mode("sample.mode"),
        delay_ps: f.float("sample.delay_ps", 0.0),
    };
    f.finite("sample.delay_ps", sample.delay_ps);

    let default_bin = resolution(&spectrometer).unwrap_or(0.1);
    let reconstruct = ReconstructSettings {
        events_file: f.string("reconstruct.events_file").map(PathBuf::from),
        bin_width_nm: f.float("reconstruct.bin_width_nm", if default_bin > 0.0 { default_bin } else { 0.1 }),
    };
    f.positive("reconstruct.bin_width_nm", reconstruct.bin_width_nm);
    if scenario == Scenario::Reconstruct && reconstruct.events_file.is_none() {
        f.problem("reconstruct.events_file", "required by the reconstruct scenario");
    }

    let output_dir = PathBuf::from(f.string("output.directory").unwrap_or_else(|| "homsim-out".into()));

    let unknown: Vec<String> = f.values.keys().filter(|k| !f.used.contains(*k)).cloned().collect();
    for key in unknown {
        f.problem(&key, "unknown key");
    }

    if !f.problems.is_empty() {
        return Err(ConfigError { problems: f.problems });
    }
    Ok(RunConfig {
        scenario,
        grid,
        pump,
        crystal,
        schmidt_truncation,
        dip,
        csi,
        multipair,
        filter,
        spectrometer,
        sample,
        reconstruct,
        output_dir,
    })
}

fn read_multipair(f: &mut Fields, truncation: usize) -> MultipairSettings {
    let defaults = MultipairConfig::default();
    let mean_photon_number = f.float("multipair.mean_photon_number", defaults.mean_photon_number);
    let efficiency = f.float("multipair.efficiency", defaults.efficiency);
    let mode_match = f.float("multipair.mode_match", defaults.mode_match);
    let renormalize = f.boolean("multipair.renormalize", defaults.renormalize);
    f.require(
        mean_photon_number.is_finite() && mean_photon_number >= 0.0,
        "multipair.mean_photon_number",
        format!("must be non-negative, got {mean_photon_number}"),
    );
    f.require(
        efficiency > 0.0 && efficiency <= 1.0,
        "multipair.efficiency",
        format!("must lie in (0, 1], got {efficiency}"),
    );
    f.require(
        (0.0..=1.0).contains(&mode_match),
        "multipair.mode_match",
        format!("must lie in [0, 1], got {mode_match}"),
    );

    let explicit = f.floats("multipair.schmidt_eigenvalues");
    let source = match f.string("multipair.eigenvalue_source").as_deref() {
        None if explicit.is_some() => EigenvalueSource::Explicit,
        None | Some("published") => EigenvalueSource::Published,
        Some("computed") => EigenvalueSource::Computed,
        Some("explicit") => EigenvalueSource::Explicit,
        Some(other) => {
            f.problem(
                "multipair.eigenvalue_source",
                format!("unknown source {other:?} (published, computed, explicit)"),
            );
            EigenvalueSource::Published
        }
    };
    let schmidt_eigenvalues = match (source, explicit) {
        (EigenvalueSource::Explicit, Some(list)) => {
            if list.is_empty() || list.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || list.iter().sum::<f64>() <= 0.0 {
                f.problem(
                    "multipair.schmidt_eigenvalues",
                    "needs at least one non-negative value and a positive sum",
                );
            }
            list
        }
        (EigenvalueSource::Explicit, None) => {
            f.problem("multipair.schmidt_eigenvalues", "required when multipair.eigenvalue_source = \"explicit\"");
            Vec::new()
        }
        (_, Some(_)) => {
            f.problem(
                "multipair.schmidt_eigenvalues",
                "only allowed when multipair.eigenvalue_source = \"explicit\"",
            );
            Vec::new()
        }
        (EigenvalueSource::Published, None) => {
            PAPER_SCHMIDT_EIGENVALUES[..truncation.clamp(1, PAPER_SCHMIDT_EIGENVALUES.len())].to_vec()
        }
        // filled in from the decomposition at run time
        (EigenvalueSource::Computed, None) => Vec::new(),
    };

    let sweep = f.floats("multipair.sweep_mean_photon_numbers").unwrap_or_default();
    if sweep.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
        f.problem("multipair.sweep_mean_photon_numbers", "every value must be non-negative");
    }

    MultipairSettings {
        model: MultipairConfig {
            mean_photon_number,
            efficiency,
            schmidt_eigenvalues,
            mode_match,
            renormalize,
        },
        eigenvalue_source: source,
        sweep_mean_photon_numbers: sweep,
    }
}
