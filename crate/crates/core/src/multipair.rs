//! Gaussian-state model of heralded four-fold HOM interference with
//! multi-pair emission, loss and threshold detectors.
//!
//! Conventions: quadratures ordered (x1, p1, ..., xn, pn), vacuum covariance
//! equal to the identity. The no-click probability of a set of m modes is
//! 2^m / sqrt(det(gamma_S + I)).
//!
//! Each Schmidt mode l of each source is an independent two-mode squeezed
//! vacuum with squeezing r sqrt(lambda_l). Per Schmidt mode the state lives
//! on six modes:
//!
//! | index | mode |
//! |-------|------|
//! | 0 | signal 1, temporal mode A |
//! | 1 | idler 1 |
//! | 2 | signal 2, temporal mode A |
//! | 3 | idler 2 |
//! | 4 | signal 1, temporal mode B (vacuum ancilla) |
//! | 5 | signal 2, temporal mode B |
//!
//! Signal 2 is split into its component along signal 1's temporal mode
//! (amplitude sqrt(xi)) and the orthogonal one (sqrt(1 - xi)); both temporal
//! pairs are then mixed on the 50/50 beam splitter. Output detectors see both
//! temporal modes of their port.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Leading Schmidt eigenvalues of the experimental source.
pub const PAPER_SCHMIDT_EIGENVALUES: [f64; 6] = [0.9, 0.025, 0.025, 0.01, 0.009, 0.004];

/// Physicality tolerance on the smallest eigenvalue of gamma + i Omega.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-9;

/// Slack allowed on probabilities before they are clamped into [0, 1].
pub const PROBABILITY_SLACK: f64 = 1e-9;

const SOLVE_R_UPPER: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn vacuum(n_modes: usize) -> Self {
        Self {
            matrix: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || !matrix.nrows().is_multiple_of(2) || matrix.nrows() == 0 {
            return Err(Error::InvalidSpec(format!(
                "covariance matrix must be 2n x 2n, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * matrix.amax().max(1.0) {
            return Err(Error::InvalidSpec(format!("covariance matrix not symmetric ({asym:e})")));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim_modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.clone().determinant()
    }

    /// Smallest eigenvalue of gamma + i Omega, via its real symmetric embedding
    /// [[gamma, -Omega], [Omega, gamma]].
    pub fn min_symplectic_eigenvalue_gap(&self) -> f64 {
        let d = self.matrix.nrows();
        let mut omega = DMatrix::zeros(d, d);
        for m in 0..d / 2 {
            omega[(2 * m, 2 * m + 1)] = 1.0;
            omega[(2 * m + 1, 2 * m)] = -1.0;
        }
        let mut big = DMatrix::zeros(2 * d, 2 * d);
        big.view_mut((0, 0), (d, d)).copy_from(&self.matrix);
        big.view_mut((d, d), (d, d)).copy_from(&self.matrix);
        big.view_mut((0, d), (d, d)).copy_from(&(-&omega));
        big.view_mut((d, 0), (d, d)).copy_from(&omega);
        SymmetricEigen::new(big).eigenvalues.min()
    }

    pub fn is_physical(&self) -> bool {
        self.min_symplectic_eigenvalue_gap() >= -PHYSICALITY_TOLERANCE
    }

    /// Covariance of the listed modes.
    pub fn submatrix(&self, modes: &[usize]) -> DMatrix<f64> {
        let idx: Vec<usize> = modes.iter().flat_map(|m| [2 * m, 2 * m + 1]).collect();
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.matrix[(idx[a], idx[b])])
    }

    /// Probability that none of `modes` registers a photon.
    pub fn no_click_probability(&self, modes: &[usize]) -> Result<f64> {
        if modes.is_empty() {
            return Ok(1.0);
        }
        let mut sub = self.submatrix(modes);
        for k in 0..sub.nrows() {
            sub[(k, k)] += 1.0;
        }
        let det = sub.determinant();
        if !(det.is_finite() && det > 0.0) {
            return Err(Error::Numerical(format!(
                "det(gamma_S + I) = {det:e} for modes {modes:?}"
            )));
        }
        Ok(2f64.powi(modes.len() as i32) / det.sqrt())
    }

    fn check_mode(&self, m: usize) -> Result<()> {
        if m >= self.dim_modes() {
            return Err(Error::OutOfRange {
                what: "mode index",
                value: m as f64,
            });
        }
        Ok(())
    }

    /// Places `block` (2k x 2k) on the listed modes, which must be vacuum.
    fn embed(&mut self, modes: &[usize], block: &DMatrix<f64>) {
        let idx: Vec<usize> = modes.iter().flat_map(|m| [2 * m, 2 * m + 1]).collect();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                self.matrix[(ia, ib)] = block[(a, b)];
            }
        }
    }
}

/// Two-mode squeezed vacuum with squeezing `r`.
pub fn tmsv_cov(r: f64) -> Result<CovarianceMatrix> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::OutOfRange {
            what: "squeezing parameter",
            value: r,
        });
    }
    let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        c,   0.0, s,   0.0,
        0.0, c,   0.0, -s,
        s,   0.0, c,   0.0,
        0.0, -s,  0.0, c,
    ]);
    Ok(CovarianceMatrix { matrix: m })
}

/// Pure-loss channel on each mode: gamma -> eta gamma + (1 - eta) I per mode.
pub fn apply_loss(gamma: &CovarianceMatrix, eta_per_mode: &[f64]) -> Result<CovarianceMatrix> {
    if eta_per_mode.len() != gamma.dim_modes() {
        return Err(Error::InvalidSpec(format!(
            "{} efficiencies for {} modes",
            eta_per_mode.len(),
            gamma.dim_modes()
        )));
    }
    for &eta in eta_per_mode {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::OutOfRange {
                what: "efficiency",
                value: eta,
            });
        }
    }
    let d = gamma.matrix.nrows();
    let scale = |q: usize| eta_per_mode[q / 2].sqrt();
    let matrix = DMatrix::from_fn(d, d, |a, b| {
        let v = scale(a) * scale(b) * gamma.matrix[(a, b)];
        if a == b {
            v + 1.0 - eta_per_mode[a / 2]
        } else {
            v
        }
    });
    Ok(CovarianceMatrix { matrix })
}

/// Beam splitter of intensity transmittance `t` between two modes:
/// a -> sqrt(t) a + sqrt(1-t) b, b -> sqrt(t) b - sqrt(1-t) a.
pub fn apply_beamsplitter(
    gamma: &CovarianceMatrix,
    mode_a: usize,
    mode_b: usize,
    t: f64,
) -> Result<CovarianceMatrix> {
    gamma.check_mode(mode_a)?;
    gamma.check_mode(mode_b)?;
    if mode_a == mode_b {
        return Err(Error::InvalidSpec("beam splitter needs two distinct modes".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange {
            what: "transmittance",
            value: t,
        });
    }
    let d = gamma.matrix.nrows();
    let (ct, st) = (t.sqrt(), (1.0 - t).sqrt());
    let mut s = DMatrix::<f64>::identity(d, d);
    for q in 0..2 {
        let (a, b) = (2 * mode_a + q, 2 * mode_b + q);
        s[(a, a)] = ct;
        s[(a, b)] = st;
        s[(b, a)] = -st;
        s[(b, b)] = ct;
    }
    Ok(CovarianceMatrix {
        matrix: &s * &gamma.matrix * s.transpose(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipairConfig {
    pub mean_photon_number: f64,
    /// Total efficiency of each spatial mode.
    pub efficiency: f64,
    pub schmidt_eigenvalues: Vec<f64>,
    /// Temporal-mode overlap of the two signals at zero delay.
    pub mode_match: f64,
    /// Rescale the eigenvalues to sum to 1 before use.
    pub renormalize: bool,
}

impl Default for MultipairConfig {
    fn default() -> Self {
        Self {
            mean_photon_number: 0.114,
            efficiency: 0.19,
            schmidt_eigenvalues: PAPER_SCHMIDT_EIGENVALUES[..5].to_vec(),
            mode_match: 1.0,
            renormalize: true,
        }
    }
}

impl MultipairConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_photon_number.is_finite() && self.mean_photon_number >= 0.0) {
            return Err(Error::OutOfRange {
                what: "mean photon number",
                value: self.mean_photon_number,
            });
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::OutOfRange {
                what: "efficiency",
                value: self.efficiency,
            });
        }
        if !(0.0..=1.0).contains(&self.mode_match) {
            return Err(Error::OutOfRange {
                what: "mode match",
                value: self.mode_match,
            });
        }
        if self.schmidt_eigenvalues.is_empty() {
            return Err(Error::Empty("schmidt eigenvalues"));
        }
        if let Some(&l) = self.schmidt_eigenvalues.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::OutOfRange {
                what: "schmidt eigenvalue",
                value: l,
            });
        }
        if self.schmidt_eigenvalues.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidSpec("schmidt eigenvalues sum to zero".into()));
        }
        Ok(())
    }

    /// Eigenvalues as used by the model.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.renormalize {
            let s: f64 = self.schmidt_eigenvalues.iter().sum();
            self.schmidt_eigenvalues.iter().map(|l| l / s).collect()
        } else {
            self.schmidt_eigenvalues.clone()
        }
    }

    /// p = n / (n + 1).
    pub fn pair_probability(&self) -> f64 {
        self.mean_photon_number / (self.mean_photon_number + 1.0)
    }
}

/// Detector index: 0 and 1 watch the beam-splitter outputs, 2 and 3 the idlers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectorCombination {
    mask: u8,
}

impl DetectorCombination {
    pub fn new(detectors: &[usize]) -> Result<Self> {
        let mut mask = 0u8;
        for &d in detectors {
            if d >= 4 {
                return Err(Error::OutOfRange {
                    what: "detector index",
                    value: d as f64,
                });
            }
            mask |= 1 << d;
        }
        if mask == 0 {
            return Err(Error::Empty("detector combination"));
        }
        Ok(Self { mask })
    }

    /// All 15 non-empty subsets, by size then lexicographically.
    pub fn all() -> Vec<Self> {
        let mut v: Vec<Self> = (1u8..16).map(|mask| Self { mask }).collect();
        v.sort_by_key(|c| (c.size(), c.detectors()));
        v
    }

    pub fn size(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn detectors(&self) -> Vec<usize> {
        (0..4).filter(|d| self.mask & (1 << d) != 0).collect()
    }
}

/// Modes seen by each detector in the six-mode layout.
const DETECTOR_MODES: [&[usize]; 4] = [&[0, 4], &[2, 5], &[1], &[3]];

/// Six-mode state of one Schmidt mode.
#[derive(Debug, Clone)]
pub struct SchmidtModeState {
    pub squeezing: f64,
    pub covariance: CovarianceMatrix,
}

impl SchmidtModeState {
    pub fn detector_modes(combo: &DetectorCombination) -> Vec<usize> {
        combo
            .detectors()
            .into_iter()
            .flat_map(|d| DETECTOR_MODES[d].iter().copied())
            .collect()
    }
}

/// Per-Schmidt-mode covariance matrices with the given temporal overlap.
pub fn assemble_state_with_overlap(
    cfg: &MultipairConfig,
    r: f64,
    xi: f64,
) -> Result<Vec<SchmidtModeState>> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::OutOfRange {
            what: "mode match",
            value: xi,
        });
    }
    let eta = cfg.efficiency;
    cfg.eigenvalues()
        .iter()
        .map(|lambda| {
            let r_l = r * lambda.sqrt();
            let pair = tmsv_cov(r_l)?;
            let mut g = CovarianceMatrix::vacuum(6);
            g.embed(&[0, 1], pair.matrix());
            g.embed(&[2, 3], pair.matrix());
            let g = apply_loss(&g, &[eta, eta, eta, eta, 1.0, 1.0])?;
            // split signal 2 into the matched (2) and orthogonal (5) temporal modes
            let g = apply_beamsplitter(&g, 2, 5, xi)?;
            let g = apply_beamsplitter(&g, 0, 2, 0.5)?;
            let g = apply_beamsplitter(&g, 4, 5, 0.5)?;
            Ok(SchmidtModeState {
                squeezing: r_l,
                covariance: g,
            })
        })
        .collect()
}

/// Overlapped (zero delay, xi = cfg.mode_match) or fully delayed (xi = 0).
pub fn assemble_state(cfg: &MultipairConfig, overlapped: bool) -> Result<Vec<SchmidtModeState>> {
    let r = solve_r(cfg.pair_probability(), &cfg.eigenvalues())?;
    let xi = if overlapped { cfg.mode_match } else { 0.0 };
    assemble_state_with_overlap(cfg, r, xi)
}

/// p(r) = 1 - prod_l cosh(r sqrt(lambda_l))^-2.
pub fn pair_probability(r: f64, eigenvalues: &[f64]) -> f64 {
    let log_vac: f64 = eigenvalues
        .iter()
        .map(|l| -2.0 * (r * l.max(0.0).sqrt()).cosh().ln())
        .sum();
    -log_vac.exp_m1()
}

/// Inverts [`pair_probability`] by bisection.
pub fn solve_r(p: f64, eigenvalues: &[f64]) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::OutOfRange {
            what: "pair probability",
            value: p,
        });
    }
    if eigenvalues.iter().all(|l| *l <= 0.0) {
        return Err(Error::InvalidSpec("eigenvalues are all zero".into()));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let mut hi = SOLVE_R_UPPER;
    while pair_probability(hi, eigenvalues) < p {
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e6 {
            return Err(Error::Numerical(format!("cannot bracket r for p = {p}")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pair_probability(mid, eigenvalues) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    let err = (pair_probability(r, eigenvalues) - p).abs();
    if err > 1e-12 {
        return Err(Error::Numerical(format!("solve_r residual {err:e}")));
    }
    Ok(r)
}

fn clamp_probability(p: f64, what: &str) -> Result<f64> {
    if !p.is_finite() {
        return Err(Error::Numerical(format!("{what} is not finite")));
    }
    if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p) {
        warn!("{what} = {p:e} outside [0, 1] by more than {PROBABILITY_SLACK:e}; clamping");
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Probability that all four detectors click, by inclusion-exclusion over
/// the no-click probabilities of the subsets in `combos` (normally
/// [`DetectorCombination::all`]). No-click probabilities of independent
/// Schmidt modes multiply.
pub fn fourfold_click_prob(state: &[SchmidtModeState], combos: &[DetectorCombination]) -> Result<f64> {
    let mut total = 1.0;
    for combo in combos {
        let modes = SchmidtModeState::detector_modes(combo);
        let mut no_click = 1.0;
        for s in state {
            no_click *= s.covariance.no_click_probability(&modes)?;
        }
        let no_click = clamp_probability(no_click, "no-click probability")?;
        let sign = if combo.size() % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * no_click;
    }
    clamp_probability(total, "four-fold click probability")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipairReport {
    pub mean_photon_number: f64,
    pub efficiency: f64,
    pub mode_match: f64,
    pub pair_probability: f64,
    pub squeezing: f64,
    pub p_mean: f64,
    pub p_min: f64,
    pub visibility: f64,
}

impl MultipairReport {
    /// `nbar,eta,xi,p,r,P_mean,P_min,V`.
    pub fn write_csv<W: Write>(reports: &[MultipairReport], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["nbar", "eta", "xi", "p", "r", "P_mean", "P_min", "V"])?;
        for r in reports {
            w.serialize((
                r.mean_photon_number,
                r.efficiency,
                r.mode_match,
                r.pair_probability,
                r.squeezing,
                r.p_mean,
                r.p_min,
                r.visibility,
            ))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// V = (P_mean - P_min) / P_mean.
pub fn multipair_visibility(cfg: &MultipairConfig) -> Result<MultipairReport> {
    cfg.validate()?;
    let p = cfg.pair_probability();
    let r = solve_r(p, &cfg.eigenvalues())?;
    let combos = DetectorCombination::all();
    let p_mean = fourfold_click_prob(&assemble_state_with_overlap(cfg, r, 0.0)?, &combos)?;
    let p_min = fourfold_click_prob(&assemble_state_with_overlap(cfg, r, cfg.mode_match)?, &combos)?;
    if p_mean <= 0.0 {
        return Err(Error::Numerical(
            "four-fold probability without overlap vanished; visibility undefined".into(),
        ));
    }
    Ok(MultipairReport {
        mean_photon_number: cfg.mean_photon_number,
        efficiency: cfg.efficiency,
        mode_match: cfg.mode_match,
        pair_probability: p,
        squeezing: r,
        p_mean,
        p_min,
        visibility: (p_mean - p_min) / p_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vacuum_tmsv_and_purity() {
        assert_eq!(tmsv_cov(0.0).unwrap().matrix(), &DMatrix::<f64>::identity(4, 4));
        for r in [0.1, 0.7, 1.5] {
            let g = tmsv_cov(r).unwrap();
            assert_relative_eq!(g.determinant(), 1.0, max_relative = 1e-10);
            assert!(g.is_physical());
        }
        assert!(tmsv_cov(-0.1).is_err());
    }

    #[test]
    fn tmsv_vacuum_overlap_matches_fock_expansion() {
        let r: f64 = 0.3;
        let g = tmsv_cov(r).unwrap();
        // |<00|psi>|^2 = 1 / cosh^2 r from the number-state expansion
        let fock = 1.0 / r.cosh().powi(2);
        assert_relative_eq!(fock, 0.915_137, max_relative = 1e-5);
        assert_relative_eq!(g.no_click_probability(&[0, 1]).unwrap(), fock, max_relative = 1e-12);
    }

    #[test]
    fn loss_channel() {
        let g = tmsv_cov(0.3).unwrap();
        assert_eq!(apply_loss(&g, &[1.0, 1.0]).unwrap(), g);
        let tiny = apply_loss(&g, &[1e-15, 1e-15]).unwrap();
        assert!((tiny.matrix() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        let half = apply_loss(&g, &[0.5, 1.0]).unwrap();
        assert!(half.is_physical());
        let s = (0.6f64).sinh();
        assert_relative_eq!(half.matrix()[(0, 2)], s * 0.5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(half.matrix()[(1, 3)], -s * 0.5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(half.matrix()[(0, 0)], 0.5 * (0.6f64).cosh() + 0.5, max_relative = 1e-12);
        assert!(apply_loss(&g, &[0.0, 1.0]).is_err());
        assert!(apply_loss(&g, &[1.1, 1.0]).is_err());
    }

    #[test]
    fn beamsplitter_identities() {
        let g = tmsv_cov(0.4).unwrap();
        assert_eq!(apply_beamsplitter(&g, 0, 1, 1.0).unwrap(), g);
        let vac = CovarianceMatrix::vacuum(2);
        let out = apply_beamsplitter(&vac, 0, 1, 0.5).unwrap();
        assert!((out.matrix() - vac.matrix()).amax() < 1e-15);
        let mixed = apply_beamsplitter(&g, 0, 1, 0.3).unwrap();
        assert_relative_eq!(mixed.determinant(), 1.0, max_relative = 1e-10);
        assert!(apply_beamsplitter(&g, 0, 2, 0.5).is_err());
        assert!(apply_beamsplitter(&g, 1, 1, 0.5).is_err());
    }

    #[test]
    fn solve_r_inverts() {
        assert_eq!(solve_r(0.0, &[1.0]).unwrap(), 0.0);
        let p: f64 = 0.3;
        let closed = (1.0 / (1.0 - p).sqrt()).acosh();
        assert_relative_eq!(solve_r(p, &[1.0]).unwrap(), closed, max_relative = 1e-12);
        let lam: Vec<f64> = PAPER_SCHMIDT_EIGENVALUES.to_vec();
        let p = 0.114 / 1.114;
        let r = solve_r(p, &lam).unwrap();
        assert!((pair_probability(r, &lam) - p).abs() <= 1e-12);
        assert!(solve_r(1.0, &[1.0]).is_err());
    }

    #[test]
    fn combinations() {
        let all = DetectorCombination::all();
        assert_eq!(all.len(), 15);
        assert_eq!(all.iter().filter(|c| c.size() == 2).count(), 6);
        assert_eq!(all[0].detectors(), vec![0]);
        assert_eq!(all[14].size(), 4);
        assert!(DetectorCombination::new(&[]).is_err());
        assert!(DetectorCombination::new(&[4]).is_err());
    }

    #[test]
    fn vacuum_never_clicks() {
        let cfg = MultipairConfig {
            mean_photon_number: 0.0,
            ..MultipairConfig::default()
        };
        let state = assemble_state(&cfg, true).unwrap();
        for s in &state {
            for c in DetectorCombination::all() {
                let modes = SchmidtModeState::detector_modes(&c);
                assert_relative_eq!(s.covariance.no_click_probability(&modes).unwrap(), 1.0, max_relative = 1e-15);
            }
        }
        assert!(fourfold_click_prob(&state, &DetectorCombination::all()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn overlap_only_changes_signal_cross_terms() {
        let cfg = MultipairConfig::default();
        let a = assemble_state_with_overlap(&cfg, 0.3, 1.0).unwrap();
        let b = assemble_state_with_overlap(&cfg, 0.3, 0.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.covariance.is_physical() && y.covariance.is_physical());
            // idler blocks and idler-idler correlations are untouched
            let dx = x.covariance.submatrix(&[1, 3]);
            let dy = y.covariance.submatrix(&[1, 3]);
            assert!((dx - dy).amax() < 1e-14);
        }
    }

    #[test]
    fn single_mode_ideal_low_gain_is_perfect() {
        let cfg = MultipairConfig {
            mean_photon_number: 1e-4,
            efficiency: 1.0,
            schmidt_eigenvalues: vec![1.0],
            mode_match: 1.0,
            renormalize: true,
        };
        let rep = multipair_visibility(&cfg).unwrap();
        assert!(rep.visibility > 0.999);
    }

    #[test]
    fn config_validation() {
        let bad = MultipairConfig {
            mean_photon_number: -1.0,
            ..MultipairConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MultipairConfig {
            efficiency: 0.0,
            ..MultipairConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MultipairConfig {
            schmidt_eigenvalues: vec![0.5, -0.1],
            ..MultipairConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn report_csv_header() {
        let rep = MultipairReport {
            mean_photon_number: 0.1,
            efficiency: 0.2,
            mode_match: 1.0,
            pair_probability: 0.09,
            squeezing: 0.3,
            p_mean: 1e-5,
            p_min: 5e-6,
            visibility: 0.5,
        };
        let mut buf = Vec::new();
        MultipairReport::write_csv(&[rep], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("nbar,eta,xi,p,r,P_mean,P_min,V\n"));
    }
}
