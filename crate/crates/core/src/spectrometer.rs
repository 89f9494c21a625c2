//! Dispersive-fiber time-of-flight spectrometer.
//!
//! A fiber of total dispersion D*L maps wavelength to arrival time linearly.
//! Detector timing jitter then limits the spectral resolution. This module
//! also synthesizes time-tagged coincidence events from a CSI map, rebuilds
//! histograms from them, and scans rectangular spectral windows.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::interference::{fourfold_visibility, CsiMap};
use crate::spdc_model::{omega_to_wavelength_nm, FrequencyGrid, JointSpectralAmplitude};

/// FWHM = 2 sqrt(2 ln 2) sigma for a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionSpec {
    pub dispersion_ps_per_km_nm: f64,
    pub fiber_length_km: f64,
    pub jitter_fwhm_ps: f64,
    pub reference_wavelength_nm: f64,
}

impl Default for DispersionSpec {
    /// Dispersion-compensating module in front of each beam-splitter output.
    fn default() -> Self {
        Self {
            dispersion_ps_per_km_nm: 125.0,
            fiber_length_km: 7.53,
            jitter_fwhm_ps: 100.0,
            reference_wavelength_nm: 1584.0,
        }
    }
}

impl DispersionSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.dispersion_ps_per_km_nm,
            self.fiber_length_km,
            self.jitter_fwhm_ps,
            self.reference_wavelength_nm,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("dispersion spec has non-finite fields".into()));
        }
        if self.total_dispersion_ps_per_nm() == 0.0 {
            return Err(Error::InvalidSpec("total dispersion is zero".into()));
        }
        if self.jitter_fwhm_ps < 0.0 {
            return Err(Error::OutOfRange {
                what: "jitter",
                value: self.jitter_fwhm_ps,
            });
        }
        Ok(())
    }

    /// D * L in ps/nm.
    pub fn total_dispersion_ps_per_nm(&self) -> f64 {
        self.dispersion_ps_per_km_nm * self.fiber_length_km
    }

    /// Gaussian sigma of the jitter expressed as wavelength, nm.
    pub fn jitter_sigma_nm(&self) -> f64 {
        self.jitter_fwhm_ps / FWHM_PER_SIGMA / self.total_dispersion_ps_per_nm().abs()
    }
}

/// Arrival time (ps) relative to the reference wavelength.
pub fn wavelength_to_time(wavelength_nm: f64, spec: &DispersionSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.total_dispersion_ps_per_nm() * (wavelength_nm - spec.reference_wavelength_nm))
}

pub fn time_to_wavelength(time_ps: f64, spec: &DispersionSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.reference_wavelength_nm + time_ps / spec.total_dispersion_ps_per_nm())
}

/// Jitter-limited resolution, nm.
pub fn resolution(spec: &DispersionSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.jitter_fwhm_ps / spec.total_dispersion_ps_per_nm().abs())
}

/// Normalized weights spreading sample `k` of `n` over its neighbours with a
/// Gaussian of width `sigma` (in samples), integrated over each cell.
fn spread_weights(k: usize, n: usize, sigma: f64) -> Vec<(usize, f64)> {
    let reach = (6.0 * sigma).ceil() as isize + 1;
    let cdf = |x: f64| 0.5 * (1.0 + erf(x / (sigma * std::f64::consts::SQRT_2)));
    let mut out: Vec<(usize, f64)> = (-reach..=reach)
        .filter_map(|d| {
            let j = k as isize + d;
            (0..n as isize).contains(&j).then(|| {
                let w = cdf(d as f64 + 0.5) - cdf(d as f64 - 0.5);
                (j as usize, w)
            })
        })
        .collect();
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    out.iter_mut().for_each(|(_, w)| *w /= total);
    out
}

fn smear_axis(m: &DMatrix<f64>, sigma: f64, along_rows: bool) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let mut out = DMatrix::zeros(rows, cols);
    if along_rows {
        for a in 0..rows {
            for (j, w) in spread_weights(a, rows, sigma) {
                for b in 0..cols {
                    out[(j, b)] += w * m[(a, b)];
                }
            }
        }
    } else {
        for b in 0..cols {
            for (j, w) in spread_weights(b, cols, sigma) {
                for a in 0..rows {
                    out[(a, j)] += w * m[(a, b)];
                }
            }
        }
    }
    out
}

fn jitter_sigma_samples(grid: &FrequencyGrid, spec: &DispersionSpec) -> f64 {
    spec.jitter_sigma_nm() / grid.spacing_nm()
}

/// Gaussian blur of each axis by the jitter-limited resolution. Each sample's
/// weight is renormalized over the samples inside the map, so the total is
/// conserved.
pub fn smear_csi(csi: &CsiMap, spec: &DispersionSpec) -> Result<CsiMap> {
    spec.validate()?;
    if spec.jitter_fwhm_ps == 0.0 {
        return Ok(csi.clone());
    }
    let kernel_fwhm_nm = resolution(spec)?;
    for axis in [&csi.axis1, &csi.axis2] {
        let span_nm = axis.spacing_nm() * (axis.len() - 1) as f64;
        if kernel_fwhm_nm > span_nm {
            return Err(Error::InvalidSpec(format!(
                "smearing kernel ({kernel_fwhm_nm:.4} nm) is wider than the map ({span_nm:.4} nm)"
            )));
        }
    }
    let m = smear_axis(&csi.intensity, jitter_sigma_samples(&csi.axis1, spec), true);
    let m = smear_axis(&m, jitter_sigma_samples(&csi.axis2, spec), false);
    Ok(CsiMap {
        intensity: m,
        clamped: 0,
        ..csi.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Out1,
    Out2,
}

impl Channel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Out1 => "out1",
            Channel::Out2 => "out2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub channel: Channel,
    /// Relative to the pump sync, ps.
    pub arrival_time_ps: f64,
}

/// One coincidence: an `Out1` event followed by an `Out2` event.
pub type EventPair = [EventRecord; 2];

/// Draws `n_pairs` coincidences from the CSI treated as a discrete
/// distribution over its cells, maps the cell wavelengths to arrival times
/// and adds independent Gaussian jitter per channel.
pub fn sample_events(
    csi: &CsiMap,
    n_pairs: usize,
    seed: u64,
    spec: &DispersionSpec,
) -> Result<Vec<EventPair>> {
    spec.validate()?;
    let weights: Vec<f64> = csi.intensity.transpose().iter().copied().collect();
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidSpec("CSI map has negative or non-finite entries".into()));
    }
    if !weights.iter().any(|w| *w > 0.0) {
        return Err(Error::InvalidSpec("CSI map has zero total intensity".into()));
    }
    if n_pairs == 0 {
        return Ok(Vec::new());
    }
    // row-major: index = a * n2 + b
    let n2 = csi.axis2.len();
    let index = WeightedIndex::new(&weights).map_err(|e| Error::Numerical(e.to_string()))?;
    let t1: Vec<f64> = axis_times(&csi.axis1, spec);
    let t2: Vec<f64> = axis_times(&csi.axis2, spec);
    let sigma_t = spec.jitter_fwhm_ps / FWHM_PER_SIGMA;
    let jitter = Normal::new(0.0, sigma_t).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let cell = index.sample(&mut rng);
        let (a, b) = (cell / n2, cell % n2);
        let (j1, j2) = if sigma_t > 0.0 {
            (jitter.sample(&mut rng), jitter.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        out.push([
            EventRecord {
                channel: Channel::Out1,
                arrival_time_ps: t1[a] + j1,
            },
            EventRecord {
                channel: Channel::Out2,
                arrival_time_ps: t2[b] + j2,
            },
        ]);
    }
    Ok(out)
}

fn axis_times(grid: &FrequencyGrid, spec: &DispersionSpec) -> Vec<f64> {
    grid.points()
        .into_iter()
        .map(|w| spec.total_dispersion_ps_per_nm() * (omega_to_wavelength_nm(w) - spec.reference_wavelength_nm))
        .collect()
}

/// `channel,arrival_time_ps`, one row per event, pairs on consecutive rows.
pub fn write_events_csv<W: Write>(events: &[EventPair], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["channel", "arrival_time_ps"])?;
    for pair in events {
        for e in pair {
            w.serialize((e.channel.as_str(), e.arrival_time_ps))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EventPair>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["channel", "arrival_time_ps"] {
        return Err(Error::InvalidSpec(format!("unexpected event header {headers:?}")));
    }
    let mut flat = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let channel = match rec.get(0) {
            Some("out1") => Channel::Out1,
            Some("out2") => Channel::Out2,
            other => {
                return Err(Error::InvalidSpec(format!(
                    "row {}: unknown channel {other:?}",
                    line + 2
                )))
            }
        };
        let t: f64 = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| Error::InvalidSpec(format!("row {}: bad arrival time", line + 2)))?;
        flat.push(EventRecord {
            channel,
            arrival_time_ps: t,
        });
    }
    if flat.len() % 2 != 0 {
        return Err(Error::InvalidSpec("odd number of events; pairs are incomplete".into()));
    }
    flat.chunks(2)
        .enumerate()
        .map(|(k, c)| {
            if c[0].channel == Channel::Out1 && c[1].channel == Channel::Out2 {
                Ok([c[0], c[1]])
            } else {
                Err(Error::InvalidSpec(format!("pair {k} is not out1 followed by out2")))
            }
        })
        .collect()
}

/// Coincidence counts binned in wavelength on both outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub edges1_nm: Vec<f64>,
    pub edges2_nm: Vec<f64>,
    pub counts: DMatrix<u64>,
}

impl Histogram2D {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `lambda1_nm,lambda2_nm,count` at bin centers, row-major over axis 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda1_nm", "lambda2_nm", "count"])?;
        for a in 0..self.counts.nrows() {
            let l1 = 0.5 * (self.edges1_nm[a] + self.edges1_nm[a + 1]);
            for b in 0..self.counts.ncols() {
                let l2 = 0.5 * (self.edges2_nm[b] + self.edges2_nm[b + 1]);
                w.serialize((l1, l2, self.counts[(a, b)]))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn locate(edges: &[f64], x: f64) -> Option<usize> {
    let last = *edges.last()?;
    if x < edges[0] || x > last {
        return None;
    }
    // right edge of the last bin is inclusive
    let i = edges.partition_point(|e| *e <= x);
    Some(i.saturating_sub(1).min(edges.len() - 2))
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) || edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidSpec("bin edges must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Histogram on explicit wavelength edges; pairs falling outside are dropped.
pub fn reconstruct_on_edges(
    events: &[EventPair],
    spec: &DispersionSpec,
    edges1_nm: Vec<f64>,
    edges2_nm: Vec<f64>,
) -> Result<Histogram2D> {
    spec.validate()?;
    if events.is_empty() {
        return Err(Error::Empty("event list"));
    }
    check_edges(&edges1_nm)?;
    check_edges(&edges2_nm)?;
    let mut counts = DMatrix::zeros(edges1_nm.len() - 1, edges2_nm.len() - 1);
    for [e1, e2] in events {
        let l1 = time_to_wavelength(e1.arrival_time_ps, spec)?;
        let l2 = time_to_wavelength(e2.arrival_time_ps, spec)?;
        if let (Some(a), Some(b)) = (locate(&edges1_nm, l1), locate(&edges2_nm, l2)) {
            counts[(a, b)] += 1;
        }
    }
    Ok(Histogram2D {
        edges1_nm,
        edges2_nm,
        counts,
    })
}

/// Histogram with bins of `bin_width_nm` starting at the smallest
/// reconstructed wavelength on each axis; every pair is counted.
pub fn reconstruct_csi(events: &[EventPair], spec: &DispersionSpec, bin_width_nm: f64) -> Result<Histogram2D> {
    spec.validate()?;
    if events.is_empty() {
        return Err(Error::Empty("event list"));
    }
    if !(bin_width_nm.is_finite() && bin_width_nm > 0.0) {
        return Err(Error::OutOfRange {
            what: "bin width",
            value: bin_width_nm,
        });
    }
    let mut edges = Vec::with_capacity(2);
    for ch in 0..2 {
        let (lo, hi) = events.iter().try_fold((f64::MAX, f64::MIN), |(lo, hi), p| {
            let l = time_to_wavelength(p[ch].arrival_time_ps, spec)?;
            Ok::<_, Error>((lo.min(l), hi.max(l)))
        })?;
        let n = (((hi - lo) / bin_width_nm).ceil() as usize).max(1);
        edges.push((0..=n).map(|k| lo + k as f64 * bin_width_nm).collect::<Vec<_>>());
    }
    let edges2 = edges.pop().unwrap_or_default();
    let edges1 = edges.pop().unwrap_or_default();
    reconstruct_on_edges(events, spec, edges1, edges2)
}

/// Sum over bins with expectation >= `min_expected` of (O - E)^2 / E,
/// divided by the number of such bins. Returns the statistic and the bin count.
pub fn reduced_chi_square(hist: &Histogram2D, expected: &DMatrix<f64>, min_expected: f64) -> Result<(f64, usize)> {
    if hist.counts.shape() != expected.shape() {
        return Err(Error::GridMismatch("histogram and expectation shapes differ".into()));
    }
    let mut stat = 0.0;
    let mut bins = 0;
    for (o, e) in hist.counts.iter().zip(expected.iter()) {
        if *e >= min_expected {
            stat += (*o as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if bins == 0 {
        return Err(Error::Empty("bins above the expectation threshold"));
    }
    Ok((stat / bins as f64, bins))
}

/// Converts a coincidence-window width in ns to a spectral width in nm.
pub fn window_ns_to_nm(window_ns: f64, ps_per_nm: f64) -> Result<f64> {
    if !(ps_per_nm.is_finite() && ps_per_nm > 0.0) {
        return Err(Error::OutOfRange {
            what: "window conversion",
            value: ps_per_nm,
        });
    }
    Ok(window_ns * 1e3 / ps_per_nm)
}

/// Default ns-to-nm conversion for coincidence windows: 2 D L.
pub fn default_window_ps_per_nm(spec: &DispersionSpec) -> f64 {
    2.0 * spec.total_dispersion_ps_per_nm().abs()
}

/// Four-fold visibility after a rectangular filter of each width (nm),
/// centered at the grid center wavelength, on the signal of both sources.
/// An infinite width means no filter.
pub fn window_filter_scan(
    jsa1: &JointSpectralAmplitude,
    jsa2: &JointSpectralAmplitude,
    windows_nm: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let grid = *jsa1.grid_signal();
    let center_nm = grid.center_wavelength_nm();
    let min_width = 2.0 * grid.spacing_nm();
    windows_nm
        .iter()
        .map(|&w| {
            if w.is_nan() || w <= 0.0 {
                return Err(Error::OutOfRange {
                    what: "window width",
                    value: w,
                });
            }
            if w.is_infinite() {
                return Ok((w, fourfold_visibility(jsa1, jsa2)?));
            }
            if w < min_width {
                return Err(Error::InvalidSpec(format!(
                    "window {w} nm is narrower than two grid bins ({min_width:.4} nm)"
                )));
            }
            let keep = |omega: f64| (omega_to_wavelength_nm(omega) - center_nm).abs() <= 0.5 * w;
            let f1 = jsa1.filter_signal(keep)?;
            let f2 = jsa2.filter_signal(keep)?;
            Ok((w, fourfold_visibility(&f1, &f2)?))
        })
        .collect()
}

/// `window_nm,visibility`.
pub fn write_scan_csv<W: Write>(scan: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_nm", "visibility"])?;
    for (width, v) in scan {
        w.serialize((width, v))?;
    }
    w.flush()?;
    Ok(())
}
