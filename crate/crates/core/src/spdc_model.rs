//! Discretized joint spectral amplitudes of a pulsed down-conversion source.
//!
//! Frequencies are angular frequencies in rad/s throughout. Public time
//! quantities carry their unit in the name (`_ps`), lengths likewise (`_mm`,
//! `_nm`). Every integral is a midpoint (Riemann) sum on a uniform grid, so
//! the same rule is shared by all downstream operations.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance used to decide whether a JSA is normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

pub fn wavelength_nm_to_omega(wavelength_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / (wavelength_nm * 1e-9)
}

pub fn omega_to_wavelength_nm(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega * 1e9
}

/// Uniform grid of angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    center: f64,
    span: f64,
    n_points: usize,
}

impl Default for FrequencyGrid {
    /// 256 points over 30 nm around 1584 nm.
    fn default() -> Self {
        Self::from_wavelength(1584.0, 30.0, 256).expect("default grid is valid")
    }
}

impl FrequencyGrid {
    pub fn new(center: f64, span: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidSpec(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        if !(span.is_finite() && span > 0.0) {
            return Err(Error::InvalidSpec(format!("grid span must be positive, got {span}")));
        }
        if !(center.is_finite() && center - span / 2.0 > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "grid must lie at positive frequencies (center {center}, span {span})"
            )));
        }
        Ok(Self { center, span, n_points })
    }

    /// Grid centered on `center_nm` whose angular-frequency span is the
    /// linearized equivalent of `span_nm` at the center wavelength.
    pub fn from_wavelength(center_nm: f64, span_nm: f64, n_points: usize) -> Result<Self> {
        if !(center_nm > 0.0 && span_nm > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "wavelength grid needs positive center and span, got {center_nm} nm / {span_nm} nm"
            )));
        }
        let center = wavelength_nm_to_omega(center_nm);
        let span = center * span_nm / center_nm;
        Self::new(center, span, n_points)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.span / (self.n_points - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        self.center - self.span / 2.0 + k as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.point(k)).collect()
    }

    /// Offsets of the grid points from the grid center, rad/s.
    pub fn offsets(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.point(k) - self.center).collect()
    }

    pub fn wavelengths_nm(&self) -> Vec<f64> {
        self.points().into_iter().map(omega_to_wavelength_nm).collect()
    }

    pub fn center_wavelength_nm(&self) -> f64 {
        omega_to_wavelength_nm(self.center)
    }

    /// Grid spacing expressed as a wavelength interval at the grid center.
    pub fn spacing_nm(&self) -> f64 {
        self.center_wavelength_nm() * self.spacing() / self.center
    }

    /// Largest delay (ps) for which `spacing * |tau| < pi` holds.
    pub fn max_delay_ps(&self) -> f64 {
        PI / self.spacing() * 1e12
    }

    pub fn check_delay(&self, tau_ps: f64) -> Result<()> {
        let limit_ps = self.max_delay_ps();
        if !tau_ps.is_finite() || tau_ps.abs() >= limit_ps {
            return Err(Error::Nyquist { tau_ps, limit_ps });
        }
        Ok(())
    }

    pub(crate) fn approx_eq(&self, other: &FrequencyGrid) -> bool {
        let tol = 1e-12 * self.center.abs().max(other.center.abs());
        self.n_points == other.n_points
            && (self.center - other.center).abs() <= tol
            && (self.span - other.span).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PumpShape {
    Gaussian,
}

/// Transform-limited pump pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpSpec {
    pub center_wavelength_nm: f64,
    /// Intensity FWHM of the pulse in time.
    pub duration_fwhm_ps: f64,
    pub shape: PumpShape,
}

impl Default for PumpSpec {
    fn default() -> Self {
        Self {
            center_wavelength_nm: 792.0,
            duration_fwhm_ps: 2.0,
            shape: PumpShape::Gaussian,
        }
    }
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_fwhm_ps.is_finite() && self.duration_fwhm_ps > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "pump duration must be positive, got {} ps",
                self.duration_fwhm_ps
            )));
        }
        if !(self.center_wavelength_nm.is_finite() && self.center_wavelength_nm > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "pump wavelength must be positive, got {} nm",
                self.center_wavelength_nm
            )));
        }
        Ok(())
    }

    pub fn center_omega(&self) -> f64 {
        wavelength_nm_to_omega(self.center_wavelength_nm)
    }

    /// Standard deviation of the spectral intensity |alpha|^2, rad/s.
    ///
    /// A field spectrum exp(-d^2 / (4 s^2)) has temporal intensity
    /// exp(-2 s^2 t^2), so an intensity FWHM of T gives s = sqrt(2 ln 2) / T.
    pub fn sigma_omega(&self) -> f64 {
        (2.0 * LN_2).sqrt() / (self.duration_fwhm_ps * 1e-12)
    }

    /// FWHM of the spectral intensity in ordinary frequency, Hz.
    pub fn bandwidth_fwhm_hz(&self) -> f64 {
        2.0 * (2.0 * LN_2).sqrt() * self.sigma_omega() / (2.0 * PI)
    }

    fn envelope_unchecked(&self, nu: f64) -> Complex64 {
        let sigma = self.sigma_omega();
        let d = nu - self.center_omega();
        Complex64::new((-d * d / (4.0 * sigma * sigma)).exp(), 0.0)
    }
}

/// Pump spectral amplitude at total frequency `nu` (rad/s), peak 1.
pub fn build_pump_envelope(pump: &PumpSpec, nu: f64) -> Result<Complex64> {
    pump.validate()?;
    Ok(pump.envelope_unchecked(nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMatching {
    Sinc,
    /// Gaussian with the same intensity FWHM as the sinc.
    GaussianApprox,
}

/// sinc^2(x) = 1/2 at x = SINC_HALF_POWER_X.
const SINC_HALF_POWER_X: f64 = 1.391_557_378_251_51;

/// Linearized crystal model: Delta k = (ws - w0)(b_s - b_p) + (wi - w0)(b_i - b_p)
/// with b the inverse group velocities and w0 the degenerate frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrystalSpec {
    pub length_mm: f64,
    pub inverse_group_velocity_pump_ps_per_mm: f64,
    pub inverse_group_velocity_signal_ps_per_mm: f64,
    pub inverse_group_velocity_idler_ps_per_mm: f64,
    pub phase_matching: PhaseMatching,
}

impl Default for CrystalSpec {
    /// 30 mm type-II crystal. The pump value is a representative KTP group
    /// index near 792 nm; the signal and idler offsets are tuned so that the
    /// default source reaches purity 0.820 and a 4.91 ps four-fold dip with
    /// the default 2 ps pump on the default 256-point grid.
    fn default() -> Self {
        Self {
            length_mm: 30.0,
            inverse_group_velocity_pump_ps_per_mm: 6.2700,
            inverse_group_velocity_signal_ps_per_mm: 6.2700 + 0.168_207_657,
            inverse_group_velocity_idler_ps_per_mm: 6.2700 - 0.088_923_149,
            phase_matching: PhaseMatching::Sinc,
        }
    }
}

impl CrystalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_mm.is_finite() && self.length_mm > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "crystal length must be positive, got {} mm",
                self.length_mm
            )));
        }
        let b = [
            self.inverse_group_velocity_pump_ps_per_mm,
            self.inverse_group_velocity_signal_ps_per_mm,
            self.inverse_group_velocity_idler_ps_per_mm,
        ];
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("inverse group velocities must be finite".into()));
        }
        if self.is_degenerate() {
            return Err(Error::InvalidSpec(
                "signal and idler inverse group velocities both equal the pump's; \
                 phase matching is degenerate"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.inverse_group_velocity_signal_ps_per_mm == self.inverse_group_velocity_pump_ps_per_mm
            && self.inverse_group_velocity_idler_ps_per_mm
                == self.inverse_group_velocity_pump_ps_per_mm
    }

    /// Phase-matching amplitude for detunings (rad/s) from the degenerate
    /// frequency. Valid for any spec, including degenerate ones.
    pub fn phase_matching_amplitude(&self, detuning_s: f64, detuning_i: f64) -> f64 {
        // ps/mm == 1e-9 s/m; length in m
        let ds = (self.inverse_group_velocity_signal_ps_per_mm
            - self.inverse_group_velocity_pump_ps_per_mm)
            * 1e-9;
        let di = (self.inverse_group_velocity_idler_ps_per_mm
            - self.inverse_group_velocity_pump_ps_per_mm)
            * 1e-9;
        let delta_k = detuning_s * ds + detuning_i * di;
        let x = delta_k * self.length_mm * 1e-3 / 2.0;
        match self.phase_matching {
            PhaseMatching::Sinc => sinc(x),
            PhaseMatching::GaussianApprox => {
                let gamma = LN_2 / (2.0 * SINC_HALF_POWER_X * SINC_HALF_POWER_X);
                (-gamma * x * x).exp()
            }
        }
    }
}

/// Unnormalized sinc, sin(x)/x, with sinc(0) = 1 exactly.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Photon {
    Signal,
    Idler,
}

/// Complex amplitude f(ws, wi) sampled on a signal x idler grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectralAmplitude {
    grid_signal: FrequencyGrid,
    grid_idler: FrequencyGrid,
    amplitude: DMatrix<Complex64>,
    normalized: bool,
}

impl JointSpectralAmplitude {
    pub fn from_matrix(
        grid_signal: FrequencyGrid,
        grid_idler: FrequencyGrid,
        amplitude: DMatrix<Complex64>,
        normalize: bool,
    ) -> Result<Self> {
        if amplitude.nrows() != grid_signal.len() || amplitude.ncols() != grid_idler.len() {
            return Err(Error::GridMismatch(format!(
                "amplitude is {}x{}, grids are {}x{}",
                amplitude.nrows(),
                amplitude.ncols(),
                grid_signal.len(),
                grid_idler.len()
            )));
        }
        if amplitude.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numerical("amplitude has non-finite entries".into()));
        }
        let mut jsa = Self {
            grid_signal,
            grid_idler,
            amplitude,
            normalized: false,
        };
        if normalize {
            jsa.normalize()?;
        }
        Ok(jsa)
    }

    pub fn from_fn<F>(
        grid_signal: FrequencyGrid,
        grid_idler: FrequencyGrid,
        normalize: bool,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> Complex64,
    {
        let ws = grid_signal.points();
        let wi = grid_idler.points();
        let m = DMatrix::from_fn(ws.len(), wi.len(), |j, k| f(ws[j], wi[k]));
        Self::from_matrix(grid_signal, grid_idler, m, normalize)
    }

    fn normalize(&mut self) -> Result<()> {
        let norm = self.norm_sq();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical(format!(
                "cannot normalize amplitude with norm {norm:e}"
            )));
        }
        let scale = 1.0 / norm.sqrt();
        self.amplitude.iter_mut().for_each(|z| *z *= scale);
        self.normalized = true;
        Ok(())
    }

    pub fn grid_signal(&self) -> &FrequencyGrid {
        &self.grid_signal
    }

    pub fn grid_idler(&self) -> &FrequencyGrid {
        &self.grid_idler
    }

    pub fn grid(&self, which: Photon) -> &FrequencyGrid {
        match which {
            Photon::Signal => &self.grid_signal,
            Photon::Idler => &self.grid_idler,
        }
    }

    pub fn amplitude(&self) -> &DMatrix<Complex64> {
        &self.amplitude
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Sum |f|^2 dws dwi.
    pub fn norm_sq(&self) -> f64 {
        let cell = self.grid_signal.spacing() * self.grid_idler.spacing();
        self.amplitude.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell
    }

    /// Errors unless the flag is set and the norm is 1 within tolerance.
    pub fn require_normalized(&self) -> Result<()> {
        let norm = self.norm_sq();
        if !self.normalized || (norm - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::NotNormalized { norm });
        }
        Ok(())
    }

    /// Same amplitude with the signal and idler axes exchanged.
    pub fn transpose(&self) -> Self {
        Self {
            grid_signal: self.grid_idler,
            grid_idler: self.grid_signal,
            amplitude: self.amplitude.transpose(),
            normalized: self.normalized,
        }
    }

    /// Zeroes signal rows where `keep` is false and renormalizes.
    pub fn filter_signal<F>(&self, keep: F) -> Result<Self>
    where
        F: Fn(f64) -> bool,
    {
        let ws = self.grid_signal.points();
        let mut amplitude = self.amplitude.clone();
        for (j, w) in ws.iter().enumerate() {
            if !keep(*w) {
                amplitude.row_mut(j).fill(Complex64::new(0.0, 0.0));
            }
        }
        Self::from_matrix(self.grid_signal, self.grid_idler, amplitude, true)
    }

    /// CSV with header `omega_s,omega_i,re,im`, signal index outermost.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["omega_s", "omega_i", "re", "im"])?;
        let ws = self.grid_signal.points();
        let wi = self.grid_idler.points();
        for (j, s) in ws.iter().enumerate() {
            for (k, i) in wi.iter().enumerate() {
                let z = self.amplitude[(j, k)];
                w.serialize((s, i, z.re, z.im))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// f(ws, wi) = alpha(ws + wi) * phi(ws, wi), normalized.
pub fn build_jsa(
    pump: &PumpSpec,
    crystal: &CrystalSpec,
    grid_signal: &FrequencyGrid,
    grid_idler: &FrequencyGrid,
) -> Result<JointSpectralAmplitude> {
    pump.validate()?;
    crystal.validate()?;
    let degenerate = pump.center_omega() / 2.0;
    JointSpectralAmplitude::from_fn(*grid_signal, *grid_idler, true, |ws, wi| {
        pump.envelope_unchecked(ws + wi)
            * crystal.phase_matching_amplitude(ws - degenerate, wi - degenerate)
    })
}

/// Reduced single-photon kernel rho(w, w') on one axis of a JSA.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKernel {
    grid: FrequencyGrid,
    kernel: DMatrix<Complex64>,
}

impl SpectralKernel {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &DMatrix<Complex64> {
        &self.kernel
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.kernel[(j, k)]
    }

    /// Sum of diagonal times dw.
    pub fn trace(&self) -> f64 {
        self.kernel.diagonal().iter().map(|z| z.re).sum::<f64>() * self.grid.spacing()
    }

    /// Tr(rho^2) = sum_jk rho_jk rho_kj dw^2.
    pub fn purity(&self) -> f64 {
        let n = self.grid.len();
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                acc += (self.kernel[(j, k)] * self.kernel[(k, j)]).re;
            }
        }
        let dw = self.grid.spacing();
        acc * dw * dw
    }

    /// Largest |rho - rho^H| entry.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.grid.len();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in 0..=j {
                worst = worst.max((self.kernel[(j, k)] - self.kernel[(k, j)].conj()).norm());
            }
        }
        worst
    }
}

/// rho(w, w') = sum_k f(w, w_k) f*(w', w_k) dw_traced.
///
/// `trace_out` names the photon that is integrated away.
pub fn reduced_kernel(jsa: &JointSpectralAmplitude, trace_out: Photon) -> Result<SpectralKernel> {
    jsa.require_normalized()?;
    let f = jsa.amplitude();
    let (grid, kernel) = match trace_out {
        Photon::Idler => {
            let dw = jsa.grid_idler().spacing();
            (*jsa.grid_signal(), (f * f.adjoint()) * Complex64::new(dw, 0.0))
        }
        Photon::Signal => {
            let dw = jsa.grid_signal().spacing();
            let ft = f.transpose();
            (*jsa.grid_idler(), (&ft * ft.adjoint()) * Complex64::new(dw, 0.0))
        }
    };
    Ok(SpectralKernel { grid, kernel })
}

/// Single-photon spectral density of `which`, integrating to 1.
pub fn marginal_spectrum(jsa: &JointSpectralAmplitude, which: Photon) -> Result<Vec<f64>> {
    jsa.require_normalized()?;
    let f = jsa.amplitude();
    Ok(match which {
        Photon::Signal => {
            let dw = jsa.grid_idler().spacing();
            f.row_iter()
                .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>() * dw)
                .collect()
        }
        Photon::Idler => {
            let dw = jsa.grid_signal().spacing();
            f.column_iter()
                .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>() * dw)
                .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::from_wavelength(1584.0, 30.0, n).unwrap()
    }

    #[test]
    fn grid_points_are_uniform() {
        let g = grid(11);
        let p = g.points();
        assert_relative_eq!(p[0], g.center() - g.span() / 2.0);
        assert_relative_eq!(p[10], g.center() + g.span() / 2.0, max_relative = 1e-15);
        assert_relative_eq!(p[5], g.center(), max_relative = 1e-15);
        assert!(FrequencyGrid::new(1e15, 1e13, 1).is_err());
        assert!(FrequencyGrid::new(1e15, 0.0, 8).is_err());
    }

    #[test]
    fn nyquist_guard() {
        let g = grid(256);
        let limit = g.max_delay_ps();
        assert!(g.check_delay(0.99 * limit).is_ok());
        assert!(matches!(g.check_delay(-limit), Err(Error::Nyquist { .. })));
    }

    #[test]
    fn pump_peak_and_half_width() {
        let pump = PumpSpec::default();
        let w0 = pump.center_omega();
        assert_eq!(build_pump_envelope(&pump, w0).unwrap(), Complex64::new(1.0, 0.0));
        let half = pump.sigma_omega() * (2.0 * LN_2).sqrt();
        for nu in [w0 - half, w0 + half] {
            let a = build_pump_envelope(&pump, nu).unwrap();
            assert_relative_eq!(a.norm_sqr(), 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn pump_rejects_bad_duration() {
        let pump = PumpSpec {
            duration_fwhm_ps: 0.0,
            ..PumpSpec::default()
        };
        assert!(matches!(build_pump_envelope(&pump, 1e15), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn pump_bandwidth_matches_numerical_fourier_transform() {
        // Temporal intensity FWHM of the inverse transform of the field spectrum.
        let pump = PumpSpec::default();
        let sigma = pump.sigma_omega();
        let n = 4001;
        let dnu = 16.0 * sigma / (n - 1) as f64;
        let nus: Vec<f64> = (0..n).map(|k| -8.0 * sigma + k as f64 * dnu).collect();
        let field_t = |t: f64| -> f64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for nu in &nus {
                let a = (-nu * nu / (4.0 * sigma * sigma)).exp();
                acc += Complex64::from_polar(a, -nu * t);
            }
            (acc * dnu).norm_sqr()
        };
        let peak = field_t(0.0);
        // bisection on the half-intensity point
        let (mut lo, mut hi) = (0.0, 5e-12);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if field_t(mid) > peak / 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(2.0 * lo * 1e12, 2.0, max_relative = 1e-6);
        assert_relative_eq!(pump.bandwidth_fwhm_hz() / 1e12, 0.220_635, max_relative = 1e-5);
    }

    #[test]
    fn degenerate_crystal_has_flat_phase_matching_but_is_rejected() {
        let c = CrystalSpec {
            inverse_group_velocity_signal_ps_per_mm: 6.27,
            inverse_group_velocity_idler_ps_per_mm: 6.27,
            ..CrystalSpec::default()
        };
        for (a, b) in [(0.0, 0.0), (1e12, -3e12), (5e12, 5e12)] {
            assert_eq!(c.phase_matching_amplitude(a, b), 1.0);
        }
        let g = grid(16);
        assert!(matches!(
            build_jsa(&PumpSpec::default(), &c, &g, &g),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn gaussian_approx_matches_sinc_half_power() {
        let c = CrystalSpec {
            phase_matching: PhaseMatching::GaussianApprox,
            ..CrystalSpec::default()
        };
        let ds = (c.inverse_group_velocity_signal_ps_per_mm
            - c.inverse_group_velocity_pump_ps_per_mm)
            * 1e-9;
        let detuning = 2.0 * SINC_HALF_POWER_X / (ds * c.length_mm * 1e-3);
        assert_relative_eq!(c.phase_matching_amplitude(detuning, 0.0).powi(2), 0.5, max_relative = 1e-12);
        assert_relative_eq!(sinc(SINC_HALF_POWER_X).powi(2), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn build_jsa_is_normalized() {
        let g = grid(64);
        let jsa = build_jsa(&PumpSpec::default(), &CrystalSpec::default(), &g, &g).unwrap();
        assert!(jsa.is_normalized());
        assert_relative_eq!(jsa.norm_sq(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn flat_phase_matching_gives_pump_ridge() {
        let g = grid(32);
        let pump = PumpSpec::default();
        let jsa = JointSpectralAmplitude::from_fn(g, g, true, |ws, wi| {
            build_pump_envelope(&pump, ws + wi).unwrap()
        })
        .unwrap();
        let p = g.points();
        // constant along anti-diagonals ws + wi = const
        let a = jsa.amplitude();
        for j in 1..32 {
            assert_relative_eq!(a[(j, 31 - j)].re, a[(0, 31)].re, max_relative = 1e-9);
        }
        assert!(p.len() == 32);
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let g = grid(8);
        let jsa = JointSpectralAmplitude::from_fn(g, g, false, |_, _| Complex64::new(1.0, 0.0))
            .unwrap();
        assert!(matches!(reduced_kernel(&jsa, Photon::Idler), Err(Error::NotNormalized { .. })));
        assert!(marginal_spectrum(&jsa, Photon::Signal).is_err());
    }

    #[test]
    fn factorable_kernel_is_rank_one() {
        let g = grid(24);
        let c = g.center();
        let s = g.span();
        let gs = |w: f64| Complex64::from_polar((-(w - c).powi(2) / (0.01 * s * s)).exp(), 3e-13 * (w - c));
        let hi = |w: f64| Complex64::new((-(w - c - 0.05 * s).powi(2) / (0.02 * s * s)).exp(), 0.0);
        let jsa = JointSpectralAmplitude::from_fn(g, g, true, |a, b| gs(a) * hi(b)).unwrap();
        let rho = reduced_kernel(&jsa, Photon::Idler).unwrap();
        assert_relative_eq!(rho.purity(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(rho.trace(), 1.0, max_relative = 1e-12);
        // rho(w, w') = g(w) g*(w') up to normalization
        let norm: f64 = g.points().iter().map(|w| gs(*w).norm_sqr()).sum::<f64>() * g.spacing();
        let p = g.points();
        for j in 0..24 {
            for k in 0..24 {
                let expect = gs(p[j]) * gs(p[k]).conj() / norm;
                assert!((rho.get(j, k) - expect).norm() < 1e-9 * expect.norm().max(1e-3));
            }
        }
        let m = marginal_spectrum(&jsa, Photon::Signal).unwrap();
        for j in 0..24 {
            assert_relative_eq!(m[j], gs(p[j]).norm_sqr() / norm, max_relative = 1e-9, epsilon = 1e-300);
        }
    }

    #[test]
    fn kernel_over_idler_axis() {
        let g = grid(20);
        let jsa = build_jsa(&PumpSpec::default(), &CrystalSpec::default(), &g, &g).unwrap();
        let rs = reduced_kernel(&jsa, Photon::Idler).unwrap();
        let ri = reduced_kernel(&jsa, Photon::Signal).unwrap();
        assert_relative_eq!(ri.trace(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(rs.purity(), ri.purity(), max_relative = 1e-10);
        assert!(rs.hermiticity_error() < 1e-12 * rs.kernel().camax());
        let mi = marginal_spectrum(&jsa, Photon::Idler).unwrap();
        for k in 0..20 {
            assert_relative_eq!(mi[k], ri.get(k, k).re, max_relative = 1e-10, epsilon = 1e-300);
        }
    }

    #[test]
    fn jsa_csv_layout() {
        let g = FrequencyGrid::new(1e15, 1e13, 2).unwrap();
        let jsa = JointSpectralAmplitude::from_fn(g, g, true, |_, _| Complex64::new(1.0, 0.0))
            .unwrap();
        let mut buf = Vec::new();
        jsa.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "omega_s,omega_i,re,im");
        assert_eq!(lines.len(), 5);
    }
}
