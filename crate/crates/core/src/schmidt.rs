//! Schmidt decomposition of a joint spectral amplitude.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spdc_model::JointSpectralAmplitude;

/// Number of modes kept by default for the multi-pair model.
pub const DEFAULT_TRUNCATION: usize = 5;

/// f(ws, wi) = sum_l sqrt(lambda_l) g_l(ws) h_l(wi).
///
/// `eigenvalues` always holds the full (untruncated) descending spectrum;
/// only the first `truncation` mode pairs are stored.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    eigenvalues: Vec<f64>,
    signal_modes: DMatrix<Complex64>,
    idler_modes: DMatrix<Complex64>,
    truncation: usize,
    signal_spacing: f64,
    idler_spacing: f64,
}

impl SchmidtDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Columns are g_l sampled on the signal grid, orthonormal under dw.
    pub fn signal_modes(&self) -> &DMatrix<Complex64> {
        &self.signal_modes
    }

    pub fn idler_modes(&self) -> &DMatrix<Complex64> {
        &self.idler_modes
    }

    /// First `truncation` eigenvalues, optionally rescaled to sum to 1.
    pub fn retained(&self, renormalize: bool) -> Vec<f64> {
        let kept = &self.eigenvalues[..self.truncation];
        if renormalize {
            let s: f64 = kept.iter().sum();
            kept.iter().map(|l| l / s).collect()
        } else {
            kept.to_vec()
        }
    }

    /// Rebuild the amplitude from the retained modes.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let n_s = self.signal_modes.nrows();
        let n_i = self.idler_modes.nrows();
        let mut out = DMatrix::zeros(n_s, n_i);
        for l in 0..self.truncation {
            let w = Complex64::new(self.eigenvalues[l].sqrt(), 0.0);
            let g = self.signal_modes.column(l);
            let h = self.idler_modes.column(l);
            out += (g * h.transpose()) * w;
        }
        out
    }

    /// Gram matrix deviation from identity, max over both mode sets.
    pub fn orthonormality_error(&self) -> f64 {
        let check = |m: &DMatrix<Complex64>, dw: f64| {
            let gram = m.adjoint() * m * Complex64::new(dw, 0.0);
            let eye = DMatrix::<Complex64>::identity(gram.nrows(), gram.ncols());
            (gram - eye).iter().map(|z| z.norm()).fold(0.0, f64::max)
        };
        check(&self.signal_modes, self.signal_spacing).max(check(&self.idler_modes, self.idler_spacing))
    }

    /// `index,lambda` over the full spectrum, 1-based index.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "lambda"])?;
        for (l, lambda) in self.eigenvalues.iter().enumerate() {
            w.serialize((l + 1, lambda))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Singular value decomposition of f * sqrt(dws dwi); lambda_l = s_l^2.
///
/// Each g_l is rotated so that its largest-magnitude sample is real and
/// positive, h_l takes the compensating phase.
pub fn decompose(jsa: &JointSpectralAmplitude, k: usize) -> Result<SchmidtDecomposition> {
    jsa.require_normalized()?;
    let n_s = jsa.grid_signal().len();
    let n_i = jsa.grid_idler().len();
    let rank = n_s.min(n_i);
    if k == 0 || k > rank {
        return Err(Error::OutOfRange {
            what: "schmidt truncation",
            value: k as f64,
        });
    }
    let dws = jsa.grid_signal().spacing();
    let dwi = jsa.grid_idler().spacing();
    let scaled = jsa.amplitude() * Complex64::new((dws * dwi).sqrt(), 0.0);
    let svd = scaled.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return V^H".into()))?;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let eigenvalues: Vec<f64> = order.iter().map(|&l| svd.singular_values[l].powi(2)).collect();

    let mut signal_modes = DMatrix::zeros(n_s, k);
    let mut idler_modes = DMatrix::zeros(n_i, k);
    for (col, &l) in order.iter().take(k).enumerate() {
        let g = u.column(l);
        let pivot = g
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(Complex64::new(1.0, 0.0));
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for j in 0..n_s {
            signal_modes[(j, col)] = g[j] * phase / dws.sqrt();
        }
        // scaled = sum s_l u_l v_l^H, so h_l = conj(v_l) up to the phase of g_l
        for i in 0..n_i {
            idler_modes[(i, col)] = v_t[(l, i)] * phase.conj() / dwi.sqrt();
        }
    }

    Ok(SchmidtDecomposition {
        eigenvalues,
        signal_modes,
        idler_modes,
        truncation: k,
        signal_spacing: dws,
        idler_spacing: dwi,
    })
}

/// Sum of lambda_l^2 over the full spectrum.
pub fn purity(dec: &SchmidtDecomposition) -> f64 {
    dec.eigenvalues.iter().map(|l| l * l).sum()
}

/// r * sqrt(lambda_l) for the retained modes.
pub fn effective_squeezers(dec: &SchmidtDecomposition, r: f64) -> Result<Vec<f64>> {
    squeezers_for(&dec.eigenvalues[..dec.truncation], r)
}

pub fn squeezers_for(eigenvalues: &[f64], r: f64) -> Result<Vec<f64>> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::OutOfRange {
            what: "squeezing parameter",
            value: r,
        });
    }
    Ok(eigenvalues.iter().map(|l| r * l.max(0.0).sqrt()).collect())
}
