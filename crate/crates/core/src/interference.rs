//! Two-photon interference at a 50/50 beam splitter: dip curves and
//! correlated spectral intensity (CSI) maps for heralded (four-fold),
//! thermal (two-fold, unheralded) and twin-photon sources.
//!
//! The four-fold and thermal integrals over four frequencies factor through
//! the reduced signal kernels, so each delay costs O(N^2):
//!
//! ```text
//! P4(tau) = 1/4 [ 2 t1 t2 - 2 Re sum_jk rho1(j,k) rho2(k,j) e^{-i tau (w_j - w_k)} dw^2 ]
//! Pt(tau) = 1/4 [ 2A + E - E(tau) ],  A = 2 t^2,  E(tau) = 2 sum_jk |rho(j,k)|^2 cos(tau (w_j - w_k)) dw^2
//! ```
//!
//! with t the kernel traces (1 for normalized sources).

use std::f64::consts::PI;
use std::io::Write;

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::spdc_model::{
    omega_to_wavelength_nm, reduced_kernel, FrequencyGrid, JointSpectralAmplitude, Photon,
    SpectralKernel,
};

/// Relative floor below which negative CSI residue counts as a real
/// negative value rather than rounding noise.
pub const CSI_NEGATIVE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DipMode {
    Fourfold,
    Thermal,
    Twin,
}

impl DipMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DipMode::Fourfold => "fourfold",
            DipMode::Thermal => "thermal",
            DipMode::Twin => "twin",
        }
    }
}

/// Strictly increasing delays in ps.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayScan {
    delays_ps: Vec<f64>,
}

impl DelayScan {
    pub fn new(delays_ps: Vec<f64>) -> Result<Self> {
        if delays_ps.is_empty() {
            return Err(Error::Empty("delay scan"));
        }
        if delays_ps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSpec("delays must be finite".into()));
        }
        if delays_ps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec("delays must be strictly increasing".into()));
        }
        Ok(Self { delays_ps })
    }

    pub fn linspace(start_ps: f64, stop_ps: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSpec(format!("delay scan needs at least 2 points, got {n}")));
        }
        let step = (stop_ps - start_ps) / (n - 1) as f64;
        Self::new((0..n).map(|k| start_ps + k as f64 * step).collect())
    }

    pub fn delays_ps(&self) -> &[f64] {
        &self.delays_ps
    }

    pub fn len(&self) -> usize {
        self.delays_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays_ps.is_empty()
    }

    fn check(&self, grid: &FrequencyGrid) -> Result<()> {
        self.delays_ps.iter().try_for_each(|t| grid.check_delay(*t))
    }
}

/// Coincidence probability against delay.
#[derive(Debug, Clone, PartialEq)]
pub struct DipCurve {
    pub delays_ps: Vec<f64>,
    pub probability: Vec<f64>,
    pub mode: DipMode,
    /// Analytic large-delay limit, when known.
    pub asymptote: Option<f64>,
}

impl DipCurve {
    /// `tau_ps,probability`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau_ps", "probability"])?;
        for (t, p) in self.delays_ps.iter().zip(&self.probability) {
            w.serialize((t, p))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Joint spectral intensity of the two beam-splitter outputs at one delay.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMap {
    pub axis1: FrequencyGrid,
    pub axis2: FrequencyGrid,
    /// Row index on `axis1`, column index on `axis2`; density per (rad/s)^2.
    pub intensity: DMatrix<f64>,
    /// `f64::INFINITY` when the interference term was dropped.
    pub tau_ps: f64,
    /// Entries that came out negative and were set to zero.
    pub clamped: usize,
}

impl CsiMap {
    /// Sum of intensity times the cell area.
    pub fn integral(&self) -> f64 {
        self.intensity.sum() * self.axis1.spacing() * self.axis2.spacing()
    }

    /// `lambda1_nm,lambda2_nm,intensity`, row-major over axis1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda1_nm", "lambda2_nm", "intensity"])?;
        let l1 = self.axis1.wavelengths_nm();
        let l2 = self.axis2.wavelengths_nm();
        for (a, la) in l1.iter().enumerate() {
            for (b, lb) in l2.iter().enumerate() {
                w.serialize((la, lb, self.intensity[(a, b)]))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrated thermal-interference terms for one source interfering with an
/// identical copy of itself.
#[derive(Debug, Clone)]
pub struct ThermalKernels {
    /// Integral of the direct term, 2 for a normalized source.
    pub a: f64,
    /// Integral of the exchange term at zero delay, 2 x purity.
    pub e: f64,
    offsets: Vec<f64>,
    /// |rho(j,k)|^2 dw^2
    weights: DMatrix<f64>,
}

impl ThermalKernels {
    pub fn from_kernel(rho: &SpectralKernel) -> Self {
        let dw = rho.grid().spacing();
        let trace = rho.trace();
        let weights = rho.kernel().map(|z| z.norm_sqr() * dw * dw);
        let e = 2.0 * weights.sum();
        Self {
            a: 2.0 * trace * trace,
            e,
            offsets: rho.grid().offsets(),
            weights,
        }
    }

    /// Exchange term at delay `tau_ps`.
    pub fn e_tau(&self, tau_ps: f64) -> f64 {
        2.0 * phase_weighted_sum_real(&self.weights, &self.offsets, tau_ps * 1e-12)
    }

    /// Pt at infinite delay.
    pub fn asymptote(&self) -> f64 {
        0.25 * (2.0 * self.a + self.e)
    }
}

/// Re sum_jk m(j,k) u_j conj(u_k), u_j = exp(-i tau w_j). Fixed summation order.
fn phase_weighted_sum(m: &DMatrix<Complex64>, offsets: &[f64], tau_s: f64) -> Complex64 {
    let u: Vec<Complex64> = offsets.iter().map(|w| Complex64::from_polar(1.0, -tau_s * w)).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, uj) in u.iter().enumerate() {
        let mut row = Complex64::new(0.0, 0.0);
        for (k, uk) in u.iter().enumerate() {
            row += m[(j, k)] * uk.conj();
        }
        acc += uj * row;
    }
    acc
}

fn phase_weighted_sum_real(m: &DMatrix<f64>, offsets: &[f64], tau_s: f64) -> f64 {
    let n = offsets.len();
    let mut acc = 0.0;
    for j in 0..n {
        for k in 0..n {
            acc += m[(j, k)] * (tau_s * (offsets[j] - offsets[k])).cos();
        }
    }
    acc
}

fn require_same_grid(a: &FrequencyGrid, b: &FrequencyGrid, what: &str) -> Result<()> {
    if !a.approx_eq(b) {
        return Err(Error::GridMismatch(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

struct FourfoldTerms {
    grid: FrequencyGrid,
    rho1: SpectralKernel,
    rho2: SpectralKernel,
    /// rho1(j,k) rho2(k,j) dw^2
    exchange: DMatrix<Complex64>,
    background: f64,
}

impl FourfoldTerms {
    fn new(jsa1: &JointSpectralAmplitude, jsa2: &JointSpectralAmplitude) -> Result<Self> {
        require_same_grid(jsa1.grid_signal(), jsa2.grid_signal(), "signal grids")?;
        let rho1 = reduced_kernel(jsa1, Photon::Idler)?;
        let rho2 = reduced_kernel(jsa2, Photon::Idler)?;
        let grid = *rho1.grid();
        let dw = grid.spacing();
        let n = grid.len();
        let exchange = DMatrix::from_fn(n, n, |j, k| {
            rho1.get(j, k) * rho2.get(k, j) * (dw * dw)
        });
        let background = 2.0 * rho1.trace() * rho2.trace();
        Ok(Self {
            grid,
            rho1,
            rho2,
            exchange,
            background,
        })
    }

    fn probability(&self, tau_ps: f64) -> f64 {
        let s = phase_weighted_sum(&self.exchange, &self.grid.offsets(), tau_ps * 1e-12);
        0.25 * (self.background - 2.0 * s.re)
    }
}

/// Heralded four-fold coincidence probability P4(tau).
pub fn fourfold_dip(
    jsa1: &JointSpectralAmplitude,
    jsa2: &JointSpectralAmplitude,
    scan: &DelayScan,
) -> Result<DipCurve> {
    let terms = FourfoldTerms::new(jsa1, jsa2)?;
    scan.check(&terms.grid)?;
    let probability = scan
        .delays_ps()
        .par_iter()
        .map(|t| terms.probability(*t))
        .collect();
    Ok(DipCurve {
        delays_ps: scan.delays_ps().to_vec(),
        probability,
        mode: DipMode::Fourfold,
        asymptote: Some(0.25 * terms.background),
    })
}

/// Four-fold visibility from a symmetric scan of 401 delays spanning 90% of
/// the unaliased range, which always contains tau = 0.
pub fn fourfold_visibility(jsa1: &JointSpectralAmplitude, jsa2: &JointSpectralAmplitude) -> Result<f64> {
    let reach = 0.9 * jsa1.grid_signal().max_delay_ps();
    let scan = DelayScan::linspace(-reach, reach, 401)?;
    visibility(&fourfold_dip(jsa1, jsa2, &scan)?)
}

/// Four-fold CSI over the two output-port frequencies.
pub fn fourfold_csi(
    jsa1: &JointSpectralAmplitude,
    jsa2: &JointSpectralAmplitude,
    tau_ps: f64,
) -> Result<CsiMap> {
    let terms = FourfoldTerms::new(jsa1, jsa2)?;
    check_csi_delay(&terms.grid, tau_ps)?;
    let offsets = terms.grid.offsets();
    let n = offsets.len();
    let (r1, r2) = (&terms.rho1, &terms.rho2);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            (0..n)
                .map(|b| {
                    let direct = r1.get(a, a).re * r2.get(b, b).re + r1.get(b, b).re * r2.get(a, a).re;
                    let exchange = r1.get(a, b) * r2.get(b, a) * phase(tau_ps, offsets[a] - offsets[b]);
                    direct - 2.0 * exchange.re
                })
                .collect()
        })
        .collect();
    Ok(finish_map(terms.grid, rows, tau_ps))
}

/// Thermal two-fold coincidence probability Pt(tau) for two identical
/// unheralded sources, together with its integrated kernels.
pub fn thermal_dip(jsa: &JointSpectralAmplitude, scan: &DelayScan) -> Result<(DipCurve, ThermalKernels)> {
    let rho = reduced_kernel(jsa, Photon::Idler)?;
    scan.check(rho.grid())?;
    let kernels = ThermalKernels::from_kernel(&rho);
    let probability = scan
        .delays_ps()
        .par_iter()
        .map(|t| 0.25 * (2.0 * kernels.a + kernels.e - kernels.e_tau(*t)))
        .collect();
    let curve = DipCurve {
        delays_ps: scan.delays_ps().to_vec(),
        probability,
        mode: DipMode::Thermal,
        asymptote: Some(kernels.asymptote()),
    };
    Ok((curve, kernels))
}

/// Thermal CSI: 4 rho(a,a) rho(b,b) + 2|rho(a,b)|^2 - 2 Re[rho(a,b) rho(b,a) e^{-i tau (wa - wb)}].
pub fn thermal_csi(jsa: &JointSpectralAmplitude, tau_ps: f64) -> Result<CsiMap> {
    let rho = reduced_kernel(jsa, Photon::Idler)?;
    let grid = *rho.grid();
    check_csi_delay(&grid, tau_ps)?;
    let offsets = grid.offsets();
    let n = offsets.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            (0..n)
                .map(|b| {
                    let pair = rho.get(a, b) * rho.get(b, a);
                    let direct = 4.0 * rho.get(a, a).re * rho.get(b, b).re + 2.0 * pair.re;
                    direct - 2.0 * (pair * phase(tau_ps, offsets[a] - offsets[b])).re
                })
                .collect()
        })
        .collect();
    Ok(finish_map(grid, rows, tau_ps))
}

fn twin_grid(jsa: &JointSpectralAmplitude) -> Result<FrequencyGrid> {
    jsa.require_normalized()?;
    require_same_grid(jsa.grid_signal(), jsa.grid_idler(), "signal and idler axes")?;
    Ok(*jsa.grid_signal())
}

/// Single-source HOM: P2(tau) = 1/4 sum |f(s,i) - f(i,s) e^{-i(ws - wi) tau}|^2 dw^2.
pub fn twin_dip(jsa: &JointSpectralAmplitude, scan: &DelayScan) -> Result<DipCurve> {
    let grid = twin_grid(jsa)?;
    scan.check(&grid)?;
    let probability = scan
        .delays_ps()
        .par_iter()
        .map(|t| 0.25 * twin_rows(jsa, &grid, *t).iter().flatten().sum::<f64>() * grid.spacing().powi(2))
        .collect();
    Ok(DipCurve {
        delays_ps: scan.delays_ps().to_vec(),
        probability,
        mode: DipMode::Twin,
        asymptote: Some(0.5 * jsa.norm_sq()),
    })
}

pub fn twin_csi(jsa: &JointSpectralAmplitude, tau_ps: f64) -> Result<CsiMap> {
    let grid = twin_grid(jsa)?;
    check_csi_delay(&grid, tau_ps)?;
    Ok(finish_map(grid, twin_rows(jsa, &grid, tau_ps), tau_ps))
}

fn twin_rows(jsa: &JointSpectralAmplitude, grid: &FrequencyGrid, tau_ps: f64) -> Vec<Vec<f64>> {
    let f = jsa.amplitude();
    let offsets = grid.offsets();
    let n = offsets.len();
    (0..n)
        .map(|s| {
            (0..n)
                .map(|i| {
                    if tau_ps.is_infinite() {
                        f[(s, i)].norm_sqr() + f[(i, s)].norm_sqr()
                    } else {
                        (f[(s, i)] - f[(i, s)] * phase(tau_ps, offsets[s] - offsets[i])).norm_sqr()
                    }
                })
                .collect()
        })
        .collect()
}

/// exp(-i tau dw); zero for infinite delay, which drops interference terms.
fn phase(tau_ps: f64, delta_omega: f64) -> Complex64 {
    if tau_ps.is_infinite() {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar(1.0, -tau_ps * 1e-12 * delta_omega)
    }
}

fn check_csi_delay(grid: &FrequencyGrid, tau_ps: f64) -> Result<()> {
    if tau_ps.is_infinite() {
        Ok(())
    } else {
        grid.check_delay(tau_ps)
    }
}

fn finish_map(grid: FrequencyGrid, rows: Vec<Vec<f64>>, tau_ps: f64) -> CsiMap {
    let n = grid.len();
    let mut intensity = DMatrix::from_fn(n, n, |a, b| rows[a][b]);
    let scale = intensity.amax();
    let mut clamped = 0;
    let mut worst: f64 = 0.0;
    for v in intensity.iter_mut() {
        if *v < 0.0 {
            worst = worst.min(*v);
            *v = 0.0;
            clamped += 1;
        }
    }
    if worst < -CSI_NEGATIVE_FLOOR * scale {
        warn!(
            "CSI at tau = {tau_ps} ps had {clamped} negative entries, worst {:.3e} relative to peak",
            worst / scale
        );
    }
    CsiMap {
        axis1: grid,
        axis2: grid,
        intensity,
        tau_ps,
        clamped,
    }
}

fn reference_level(curve: &DipCurve) -> Result<(f64, bool)> {
    if let Some(p) = curve.asymptote {
        return Ok((p, true));
    }
    let first = curve.probability[0];
    let last = curve.probability[curve.probability.len() - 1];
    Ok((0.5 * (first + last), false))
}

fn validate_curve(curve: &DipCurve) -> Result<usize> {
    let n = curve.probability.len();
    if n < 3 || curve.delays_ps.len() != n {
        return Err(Error::InvalidSpec(format!(
            "dip analysis needs at least 3 matched points, got {n}"
        )));
    }
    if curve.probability.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical("dip curve has non-finite values".into()));
    }
    let i_min = curve
        .probability
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(i_min)
}

fn is_flat(curve: &DipCurve) -> bool {
    let max = curve.probability.iter().cloned().fold(f64::MIN, f64::max);
    let min = curve.probability.iter().cloned().fold(f64::MAX, f64::min);
    max - min <= 1e-14 * max.abs().max(min.abs()).max(f64::MIN_POSITIVE)
}

fn half_crossings(curve: &DipCurve, i_min: usize, reference: f64) -> Result<(f64, f64)> {
    let p = &curve.probability;
    let t = &curve.delays_ps;
    let half = 0.5 * (reference + p[i_min]);
    let interp = |i: usize, j: usize| t[i] + (half - p[i]) * (t[j] - t[i]) / (p[j] - p[i]);
    let left = (0..i_min)
        .rev()
        .find(|&i| p[i] >= half)
        .map(|i| interp(i, i + 1))
        .ok_or_else(|| Error::NotADip("no half-depth crossing before the minimum".into()))?;
    let right = (i_min + 1..p.len())
        .find(|&i| p[i] >= half)
        .map(|i| interp(i - 1, i))
        .ok_or_else(|| Error::NotADip("no half-depth crossing after the minimum".into()))?;
    Ok((left, right))
}

/// Checks that the dip sits inside the scan and, without an analytic
/// asymptote, that the scan reaches 5 FWHM past the minimum on both sides.
fn analyse(curve: &DipCurve) -> Result<(f64, usize, f64, f64)> {
    let i_min = validate_curve(curve)?;
    let (reference, analytic) = reference_level(curve)?;
    if i_min == 0 || i_min == curve.probability.len() - 1 {
        return Err(Error::NotADip("minimum lies on the scan boundary".into()));
    }
    let (left, right) = half_crossings(curve, i_min, reference)?;
    if !analytic {
        let width = right - left;
        let t_min = curve.delays_ps[i_min];
        let first = curve.delays_ps[0];
        let last = curve.delays_ps[curve.delays_ps.len() - 1];
        if t_min - first < 5.0 * width || last - t_min < 5.0 * width {
            return Err(Error::NoPlateau(format!(
                "scan [{first}, {last}] ps does not extend 5 x FWHM ({width:.3} ps) past the minimum \
                 and no asymptote was supplied"
            )));
        }
    }
    Ok((reference, i_min, left, right))
}

/// V = (P_ref - P_min) / P_ref, P_ref the analytic asymptote or the plateau.
pub fn visibility(curve: &DipCurve) -> Result<f64> {
    validate_curve(curve)?;
    if is_flat(curve) {
        return Ok(0.0);
    }
    let (reference, i_min, _, _) = analyse(curve)?;
    if reference <= 0.0 {
        return Err(Error::Numerical(format!("non-positive reference level {reference}")));
    }
    Ok((reference - curve.probability[i_min]) / reference)
}

/// Full width at half depth in ps, by linear interpolation of the crossings.
pub fn fwhm(curve: &DipCurve) -> Result<f64> {
    validate_curve(curve)?;
    if is_flat(curve) {
        return Err(Error::NotADip("curve is flat".into()));
    }
    let (_, _, left, right) = analyse(curve)?;
    Ok(right - left)
}

/// Profile of `map - background` along w_a - w_b: sums over each diagonal
/// offset d = a - b, returned for d = -(N-1) ..= N-1.
pub fn difference_profile(map: &CsiMap, background: Option<&CsiMap>) -> Result<Vec<f64>> {
    require_same_grid(&map.axis1, &map.axis2, "CSI axes")?;
    if let Some(bg) = background {
        require_same_grid(&map.axis1, &bg.axis1, "CSI and background")?;
        require_same_grid(&map.axis2, &bg.axis2, "CSI and background")?;
    }
    let n = map.axis1.len() as isize;
    let dw = map.axis1.spacing();
    let value = |a: usize, b: usize| {
        map.intensity[(a, b)] - background.map_or(0.0, |bg| bg.intensity[(a, b)])
    };
    Ok((-(n - 1)..n)
        .map(|d| {
            let mut acc = 0.0;
            for a in 0..n {
                let b = a - d;
                if (0..n).contains(&b) {
                    acc += value(a as usize, b as usize);
                }
            }
            acc * dw
        })
        .collect())
}

/// Dominant fringe period along the anti-diagonal direction of a CSI map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringePeak {
    /// Delay conjugate to the fringe frequency, ps.
    pub delay_ps: f64,
    /// Delay spacing of adjacent FFT bins, ps.
    pub bin_ps: f64,
    pub amplitude: f64,
}

/// FFT of [`difference_profile`]; the peak of a fringe pattern
/// cos(tau (wa - wb)) sits at delay tau.
pub fn fringe_peak(map: &CsiMap, background: Option<&CsiMap>) -> Result<FringePeak> {
    let profile = difference_profile(map, background)?;
    let m = profile.len();
    let mut buf: Vec<Complex64> = profile.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let bin_s = 2.0 * PI / (m as f64 * map.axis1.spacing());
    let (k, amp) = (1..=m / 2)
        .map(|k| (k, buf[k].norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::Empty("fringe profile"))?;
    Ok(FringePeak {
        delay_ps: k as f64 * bin_s * 1e12,
        bin_ps: bin_s * 1e12,
        amplitude: amp,
    })
}

/// |sum_d P(d) e^{-i tau w_d}|, the fringe amplitude at one delay.
pub fn fringe_amplitude(map: &CsiMap, background: Option<&CsiMap>, tau_ps: f64) -> Result<f64> {
    let profile = difference_profile(map, background)?;
    let n = map.axis1.len() as isize;
    let dw = map.axis1.spacing();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, v) in profile.iter().enumerate() {
        let d = i as isize - (n - 1);
        acc += Complex64::from_polar(*v, -tau_ps * 1e-12 * d as f64 * dw);
    }
    Ok(acc.norm())
}

/// Wavelength of each CSI axis point, nm.
pub fn axis_wavelengths_nm(grid: &FrequencyGrid) -> Vec<f64> {
    grid.points().into_iter().map(omega_to_wavelength_nm).collect()
}
