use homsim_core::interference::{fourfold_dip, thermal_dip, visibility, DelayScan};
use homsim_core::multipair::{apply_beamsplitter, apply_loss, tmsv_cov, CovarianceMatrix};
use homsim_core::schmidt::{decompose, purity};
use homsim_core::spdc_model::{
    build_jsa, omega_to_wavelength_nm, reduced_kernel, CrystalSpec, FrequencyGrid, Photon, PumpSpec,
};
use homsim_core::spectrometer::{time_to_wavelength, wavelength_to_time, DispersionSpec};
use homsim_core::JointSpectralAmplitude;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;

fn correlated_gaussian(n: usize, width_s: f64, width_i: f64, rho: f64, chirp: f64) -> JointSpectralAmplitude {
    let g = FrequencyGrid::from_wavelength(1584.0, 16.0, n).unwrap();
    let c = g.center();
    let unit = g.span() / 8.0;
    JointSpectralAmplitude::from_fn(g, g, true, |a, b| {
        let (x, y) = ((a - c) / (width_s * unit), (b - c) / (width_i * unit));
        let q = (x * x - 2.0 * rho * x * y + y * y) / (2.0 * (1.0 - rho * rho));
        Complex64::from_polar((-q).exp(), chirp * x * y)
    })
    .unwrap()
}

fn source_params() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.5f64..1.5, 0.5f64..1.5, -0.9f64..0.9, -1.0f64..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn built_sources_are_normalized_and_pure_bounded(
        duration in 0.5f64..6.0,
        length in 5.0f64..40.0,
        ds in 0.05f64..0.3,
        di in -0.3f64..-0.02,
    ) {
        let pump = PumpSpec { duration_fwhm_ps: duration, ..PumpSpec::default() };
        let base = CrystalSpec::default();
        let crystal = CrystalSpec {
            length_mm: length,
            inverse_group_velocity_signal_ps_per_mm: base.inverse_group_velocity_pump_ps_per_mm + ds,
            inverse_group_velocity_idler_ps_per_mm: base.inverse_group_velocity_pump_ps_per_mm + di,
            ..base
        };
        let g = FrequencyGrid::from_wavelength(1584.0, 30.0, 64).unwrap();
        let jsa = build_jsa(&pump, &crystal, &g, &g).unwrap();
        prop_assert!((jsa.norm_sq() - 1.0).abs() < 1e-9);
        let p = purity(&decompose(&jsa, 1).unwrap());
        prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
    }

    #[test]
    fn reduced_kernel_is_positive_semidefinite((ws, wi, rho, chirp) in source_params()) {
        let jsa = correlated_gaussian(32, ws, wi, rho, chirp);
        let k = reduced_kernel(&jsa, Photon::Idler).unwrap();
        prop_assert!(k.hermiticity_error() < 1e-12 * k.kernel().camax());
        // embed the Hermitian kernel as a real symmetric matrix of twice the size
        let n = k.kernel().nrows();
        let m = k.kernel();
        let real = DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let z = m[(r % n, c % n)];
            match (r < n, c < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        let eig = SymmetricEigen::new(real).eigenvalues;
        let scale = eig.amax();
        prop_assert!(eig.iter().all(|l| *l >= -1e-10 * scale));
    }

    #[test]
    fn identical_sources_give_symmetric_dips((ws, wi, rho, chirp) in source_params(), tau in 0.1f64..3.0) {
        let jsa = correlated_gaussian(32, ws, wi, rho, chirp);
        let scan = DelayScan::new(vec![-tau, tau]).unwrap();
        let p4 = fourfold_dip(&jsa, &jsa, &scan).unwrap().probability;
        prop_assert!((p4[0] - p4[1]).abs() <= 1e-12 * p4[0].abs().max(1e-12));
        let (pt, _) = thermal_dip(&jsa, &scan).unwrap();
        prop_assert!((pt.probability[0] - pt.probability[1]).abs() <= 1e-12);
    }

    #[test]
    fn thermal_visibility_never_exceeds_one_third((ws, wi, rho, chirp) in source_params()) {
        let jsa = correlated_gaussian(32, ws, wi, rho, chirp);
        let reach = 0.9 * jsa.grid_signal().max_delay_ps();
        let (curve, _) = thermal_dip(&jsa, &DelayScan::linspace(-reach, reach, 201).unwrap()).unwrap();
        prop_assert!(visibility(&curve).unwrap() <= 1.0 / 3.0 + 1e-9);
    }

    #[test]
    fn wavelength_time_mapping_is_affine(l1 in 1500.0f64..1650.0, l2 in 1500.0f64..1650.0, d in 10.0f64..500.0) {
        let spec = DispersionSpec { dispersion_ps_per_km_nm: d, ..DispersionSpec::default() };
        let t1 = wavelength_to_time(l1, &spec).unwrap();
        let t2 = wavelength_to_time(l2, &spec).unwrap();
        prop_assert!(((t1 - t2) - spec.total_dispersion_ps_per_nm() * (l1 - l2)).abs() < 1e-6);
        prop_assert!((time_to_wavelength(t1, &spec).unwrap() - l1).abs() < 1e-9);
    }

    #[test]
    fn gaussian_channels_preserve_physicality(
        r1 in 0.0f64..1.5,
        r2 in 0.0f64..1.5,
        eta in 0.0f64..1.0,
        t in 0.0f64..1.0,
    ) {
        let a = tmsv_cov(r1).unwrap();
        let b = tmsv_cov(r2).unwrap();
        let joined = DMatrix::from_fn(8, 8, |i, j| match (i < 4, j < 4) {
            (true, true) => a.matrix()[(i, j)],
            (false, false) => b.matrix()[(i - 4, j - 4)],
            _ => 0.0,
        });
        let state = CovarianceMatrix::from_matrix(joined).unwrap();
        prop_assert!(state.is_physical());
        let lossy = apply_loss(&state, &[eta, 1.0, eta, 1.0]).unwrap();
        prop_assert!(lossy.is_physical());
        let mixed = apply_beamsplitter(&lossy, 0, 2, t).unwrap();
        prop_assert!(mixed.is_physical());
        let p = mixed.no_click_probability(&[0, 2]).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
    }
}

/// Purity after a rectangular filter on the signal never drops as the
/// window narrows, down to two grid bins.
#[test]
fn narrower_windows_never_reduce_purity() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    for _ in 0..12 {
        let jsa = correlated_gaussian(
            64,
            rng.random_range(0.6..1.4),
            rng.random_range(0.6..1.4),
            rng.random_range(0.3..0.9) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            0.0,
        );
        let g = *jsa.grid_signal();
        let center = g.center_wavelength_nm();
        let mut widths: Vec<f64> = (0..24).map(|k| 16.0 * 0.85f64.powi(k)).collect();
        widths.retain(|w| *w >= 2.0 * g.spacing_nm());
        let mut last = purity(&decompose(&jsa, 1).unwrap());
        for w in widths {
            let f = jsa
                .filter_signal(|omega| (omega_to_wavelength_nm(omega) - center).abs() <= 0.5 * w)
                .unwrap();
            let p = purity(&decompose(&f, 1).unwrap());
            assert!(p >= last - 1e-9, "purity fell from {last} to {p} at window {w} nm");
            last = p;
        }
    }
}
