use faer::Mat;
use proptest::prelude::*;
use sphere_dm::geometry::SpherePoint;
use sphere_dm::harmonics::{eval_harmonic, laplace_eigenvalue, legendre, HarmonicBasisEnumeration};
use sphere_dm::kernels::{inverse_multiquadric, legendre_poly, surface_spline, ZonalFunction};
use sphere_dm::linalg::{general_eig, spectral_norm, sym_eig};

fn point() -> impl Strategy<Value = SpherePoint> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, lon)| {
        let r = (1.0 - z * z).sqrt();
        SpherePoint::from_cartesian(r * lon.cos(), r * lon.sin(), z).unwrap()
    })
}

proptest! {
    #[test]
    fn addition_theorem(x in point(), y in point(), l in 0usize..=6) {
        let basis = HarmonicBasisEnumeration::new(l);
        let sum: f64 = basis
            .iter()
            .filter(|i| i.degree() == l)
            .map(|&i| eval_harmonic(i, &x).unwrap() * eval_harmonic(i, &y).unwrap())
            .sum();
        let expected = (2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * legendre(l, x.dot(&y));
        prop_assert!((sum - expected).abs() <= 1e-12);
    }

    #[test]
    fn zonal_harmonics_depend_only_on_colatitude(z in -1.0f64..1.0, lon1 in 0.0f64..6.3, lon2 in 0.0f64..6.3, l in 0usize..8) {
        let r = (1.0 - z * z).sqrt();
        let a = SpherePoint::from_cartesian(r * lon1.cos(), r * lon1.sin(), z).unwrap();
        let b = SpherePoint::from_cartesian(r * lon2.cos(), r * lon2.sin(), z).unwrap();
        let idx = sphere_dm::harmonics::HarmonicIndex::new(l, 1).unwrap();
        prop_assert!((eval_harmonic(idx, &a).unwrap() - eval_harmonic(idx, &b).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn legendre_is_bounded(t in -1.0f64..=1.0, l in 0usize..60) {
        prop_assert!(legendre(l, t).abs() <= 1.0 + 1e-13);
    }

    #[test]
    fn spectral_norm_of_transpose(entries in prop::collection::vec(-10.0f64..10.0, 12)) {
        let a = Mat::from_fn(3, 4, |i, j| entries[4 * i + j]);
        let n1 = spectral_norm(a.as_ref());
        let n2 = spectral_norm(a.transpose());
        prop_assert!((n1 - n2).abs() <= 1e-10 * n1.max(1e-300));
    }

    #[test]
    fn general_eig_agrees_on_symmetric_input(entries in prop::collection::vec(-5.0f64..5.0, 25)) {
        let a = Mat::from_fn(5, 5, |i, j| entries[5 * i.min(j) + i.max(j)]);
        let s = sym_eig(a.as_ref()).unwrap();
        let mut g: Vec<f64> = general_eig(a.as_ref()).unwrap().iter().map(|z| z.re).collect();
        g.sort_by(f64::total_cmp);
        let scale = s.values.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        for (u, v) in s.values.iter().zip(&g) {
            prop_assert!((u - v).abs() <= 1e-8 * scale);
        }
    }
}

#[test]
fn laplace_eigenvalues_decrease() {
    for l in 0..50 {
        assert!(laplace_eigenvalue(l + 1, 2) < laplace_eigenvalue(l, 2));
    }
}

#[test]
fn legendre_polynomials_are_laplace_eigenfunctions() {
    for l in 0..=6 {
        let p = ZonalFunction::polynomial_t(&legendre_poly(l).0);
        let lp = p.laplacian().unwrap();
        let nu = laplace_eigenvalue(l, 2);
        for k in 0..=20 {
            let t = -1.0 + 0.1 * k as f64;
            assert!((lp.eval_t(t) - nu * p.eval_t(t)).abs() <= 1e-10 * (1.0 + nu.abs()));
        }
    }
}

#[test]
fn mercer_coefficients_are_positive() {
    let ss = surface_spline(3).unwrap();
    for l in ss.series_start()..200 {
        assert!(ss.mercer_coeff(l).unwrap() > 0.0, "ss l={l}");
    }
    let imq = inverse_multiquadric(2.0).unwrap();
    for l in 0..200 {
        assert!(imq.mercer_coeff(l).unwrap() > 0.0, "imq l={l}");
    }
}
