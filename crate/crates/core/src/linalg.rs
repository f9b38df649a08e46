//! Dense kernels used by the differentiation-matrix constructions. Matrices
//! are `faer::Mat<f64>`; factorizations come from faer, with residual and
//! rank checks layered on top.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense real matrix.
pub type DenseMatrix = Mat<f64>;

/// Rank threshold on the pivoted-QR diagonal, relative to its largest entry.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Smallest accepted eigenvalue ratio λ_min/λ_max for an SPD matrix.
pub const SPD_TOLERANCE: f64 = 1e-13;

/// Accepted asymmetry ‖S − Sᵀ‖_max relative to ‖S‖_max.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

pub fn ensure_finite(a: MatRef<'_, f64>, what: &str) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{what} has a non-finite entry at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// Largest absolute entry of `S − Sᵀ`.
pub fn asymmetry(a: MatRef<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

/// `(S + Sᵀ)/2`.
pub fn symmetrize(a: MatRef<'_, f64>) -> DenseMatrix {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

pub fn identity(n: usize) -> DenseMatrix {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

pub fn diag(values: &[f64]) -> DenseMatrix {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
}

fn require_square(a: MatRef<'_, f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// `S = Q·diag·Qᵀ` for symmetric `S`.
pub fn sym_eig(s: MatRef<'_, f64>) -> Result<SymEig> {
    require_square(s, "symmetric eigenproblem input")?;
    ensure_finite(s, "symmetric eigenproblem input")?;
    let asym = asymmetry(s);
    if asym > SYMMETRY_TOLERANCE * max_abs(s) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if s.nrows() == 0 {
        return Ok(SymEig {
            values: Vec::new(),
            vectors: Mat::zeros(0, 0),
        });
    }
    let evd = s.self_adjoint_eigen(Side::Lower).map_err(|_| Error::NoConvergence)?;
    let values = (0..s.nrows()).map(|i| evd.S()[i]).collect();
    Ok(SymEig {
        values,
        vectors: evd.U().to_owned(),
    })
}

/// Eigenvalues of a general real matrix, sorted by real then imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub eigenvalues: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(mut eigenvalues: Vec<Complex64>) -> Self {
        eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Self { eigenvalues }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.eigenvalues.iter()
    }

    /// Largest modulus.
    pub fn radius(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Diagonal similarity `D⁻¹ A D` with power-of-two scalings that roughly
/// equalises row and column norms. Returns the balanced matrix and `D`.
pub fn balance(a: MatRef<'_, f64>) -> (DenseMatrix, Vec<f64>) {
    let n = a.nrows();
    let mut b = a.to_owned();
    let mut d = vec![1.0; n];
    const RADIX: f64 = 2.0;
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let rr = r;
            while cc < rr / RADIX {
                cc *= RADIX * RADIX;
                f *= RADIX;
            }
            while cc >= rr * RADIX {
                cc /= RADIX * RADIX;
                f /= RADIX;
            }
            let cf = c * f;
            let rf = r / f;
            if (cf + rf) < 0.95 * s {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                }
                for j in 0..n {
                    b[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    (b, d)
}

/// Eigenvalues of a general square matrix: balancing, then faer's
/// Hessenberg/Schur eigenvalue solver.
pub fn general_eig(m: MatRef<'_, f64>) -> Result<ComplexSpectrum> {
    require_square(m, "eigenvalue input")?;
    ensure_finite(m, "eigenvalue input")?;
    if m.nrows() == 0 {
        return Ok(ComplexSpectrum::new(Vec::new()));
    }
    let (b, _) = balance(m);
    let ev = b.eigenvalues().map_err(|_| Error::NoConvergence)?;
    Ok(ComplexSpectrum::new(
        ev.into_iter().map(|z| Complex64::new(z.re, z.im)).collect(),
    ))
}

/// Orthonormal basis `W` (N × (N−M)) of the orthogonal complement of
/// range(P), taken from a full column-pivoted QR of `P`.
pub fn nullspace_orthobasis(p: MatRef<'_, f64>) -> Result<DenseMatrix> {
    let (n, m) = (p.nrows(), p.ncols());
    if m == 0 {
        return Ok(identity(n));
    }
    if n <= m {
        return Err(Error::Dimension(format!(
            "nullspace basis needs N > M, got N = {n}, M = {m}"
        )));
    }
    ensure_finite(p, "Vandermonde matrix")?;
    let qr = p.col_piv_qr();
    let r = qr.R();
    let rmax = (0..m).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rmin = (0..m).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(rmin > RANK_TOLERANCE * rmax) {
        return Err(Error::Unisolvent(format!(
            "smallest R diagonal {rmin:.3e} vs largest {rmax:.3e}"
        )));
    }
    let q = qr.compute_Q();
    Ok(q.subcols(m, n - m).to_owned())
}

/// Rank of `P` from the column-pivoted QR diagonal.
pub fn numerical_rank(p: MatRef<'_, f64>) -> usize {
    if p.ncols() == 0 || p.nrows() == 0 {
        return 0;
    }
    let qr = p.col_piv_qr();
    let r = qr.R();
    let k = p.nrows().min(p.ncols());
    let rmax = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    (0..k).filter(|&i| r[(i, i)].abs() > RANK_TOLERANCE * rmax).count()
}

/// Symmetric positive definite square root via the eigendecomposition.
pub fn spd_sqrt(a: MatRef<'_, f64>) -> Result<DenseMatrix> {
    let eig = sym_eig(a)?;
    spd_sqrt_from_eig(&eig)
}

pub(crate) fn spd_sqrt_from_eig(eig: &SymEig) -> Result<DenseMatrix> {
    check_spd(&eig.values)?;
    let roots: Vec<f64> = eig.values.iter().map(|v| v.sqrt()).collect();
    Ok(scaled_outer(&eig.vectors, &roots))
}

pub(crate) fn check_spd(values: &[f64]) -> Result<()> {
    let Some(&min) = values.first() else {
        return Ok(());
    };
    let max = *values.last().unwrap();
    if !(max > 0.0) || min <= SPD_TOLERANCE * max {
        return Err(Error::NotPositiveDefinite { eigenvalue: min });
    }
    Ok(())
}

/// `Q · diag(w) · Qᵀ`.
pub(crate) fn scaled_outer(q: &DenseMatrix, w: &[f64]) -> DenseMatrix {
    let n = q.nrows();
    let qw = Mat::from_fn(n, w.len(), |i, j| q[(i, j)] * w[j]);
    symmetrize((&qw * q.transpose()).as_ref())
}

/// Partial-pivoting LU solve of `A X = B`.
pub fn solve_linear(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<DenseMatrix> {
    require_square(a, "system matrix")?;
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "system has {} rows but right-hand side has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    ensure_finite(a, "system matrix")?;
    ensure_finite(b, "right-hand side")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, b.ncols()));
    }
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let pmax = (0..n).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
    let pmin = (0..n).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(pmin > f64::EPSILON * pmax) {
        return Err(Error::Singular { pivot: pmin });
    }
    let x = lu.solve(b);
    if let Err(_) = ensure_finite(x.as_ref(), "solution") {
        return Err(Error::Singular { pivot: pmin });
    }
    Ok(x)
}

/// `P† = (PᵀP)⁻¹Pᵀ` for a full-column-rank `P`.
pub fn left_pseudo_inverse(p: MatRef<'_, f64>) -> Result<DenseMatrix> {
    if p.ncols() == 0 {
        return Ok(Mat::zeros(0, p.nrows()));
    }
    let gram = p.transpose() * p;
    solve_linear(gram.as_ref(), p.transpose())
}

/// Largest singular value.
pub fn spectral_norm(a: MatRef<'_, f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    // thin SVD of the shorter side
    let sv = if a.nrows() >= a.ncols() {
        a.singular_values()
    } else {
        a.transpose().singular_values()
    };
    match sv {
        Ok(s) => s.first().copied().unwrap_or(0.0),
        Err(_) => power_spectral_norm(a, 1e-10, 10_000).0,
    }
}

/// Power iteration on `AᵀA` from a fixed start vector. Returns the estimate
/// and whether the relative tolerance was met before the iteration cap.
pub fn power_spectral_norm(a: MatRef<'_, f64>, tol: f64, max_iter: usize) -> (f64, bool) {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return (0.0, true);
    }
    // deterministic, non-degenerate start vector
    let mut v = Mat::from_fn(n, 1, |i, _| 1.0 + ((i * 7919) % 104_729) as f64 / 104_729.0);
    let nv = frobenius(v.as_ref());
    v = Mat::from_fn(n, 1, |i, _| v[(i, 0)] / nv);
    let mut est = 0.0;
    for _ in 0..max_iter {
        let av = a * &v;
        let w = a.transpose() * &av;
        let nw = frobenius(w.as_ref());
        if nw == 0.0 {
            return (0.0, true);
        }
        let new = nw.sqrt();
        v = Mat::from_fn(n, 1, |i, _| w[(i, 0)] / nw);
        if (new - est).abs() <= tol * new {
            return (new, true);
        }
        est = new;
    }
    (est, false)
}

/// `‖V‖·‖V⁻¹‖` in the spectral norm.
pub fn cond2(v: MatRef<'_, f64>) -> Result<f64> {
    require_square(v, "condition number input")?;
    let n = v.nrows();
    let inv = solve_linear(v, identity(n).as_ref())?;
    Ok(spectral_norm(v) * spectral_norm(inv.as_ref()))
}

/// `‖V‖·‖V⁻¹‖` when the inverse is already known.
pub fn cond2_with_inverse(v: MatRef<'_, f64>, v_inv: MatRef<'_, f64>) -> f64 {
    spectral_norm(v) * spectral_norm(v_inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_sym(n: usize, seed: u64) -> DenseMatrix {
        let a = random(n, n, seed);
        symmetrize(a.as_ref())
    }

    #[test]
    fn sym_eig_examples() {
        let e = sym_eig(identity(5).as_ref()).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));

        let e = sym_eig(diag(&[3.0, -1.0]).as_ref()).unwrap();
        assert_abs_diff_eq!(e.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 3.0, epsilon = 1e-14);
        for i in 0..2 {
            let nz = (0..2).filter(|&j| e.vectors[(i, j)].abs() > 1e-12).count();
            assert_eq!(nz, 1);
        }

        let s = random_sym(50, 1);
        let e = sym_eig(s.as_ref()).unwrap();
        let rec = scaled_outer(&e.vectors, &e.values);
        let res = frobenius((&rec - &s).as_ref());
        assert!(res <= 1e-10 * spectral_norm(s.as_ref()), "residual {res}");
        let qtq = e.vectors.transpose() * &e.vectors;
        assert!(frobenius((&qtq - identity(50)).as_ref()) <= 1e-10 * 50.0);

        let mut ns = random_sym(4, 2);
        ns[(0, 1)] += 1.0;
        assert!(matches!(sym_eig(ns.as_ref()), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn general_eig_examples() {
        let rot = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => 1.0,
            (1, 0) => -1.0,
            _ => 0.0,
        });
        let s = general_eig(rot.as_ref()).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0].re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues[0].im, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues[1].im, 1.0, epsilon = 1e-14);

        let mut up = random(10, 10, 3);
        for i in 0..10 {
            for j in 0..i {
                up[(i, j)] = 0.0;
            }
        }
        let s = general_eig(up.as_ref()).unwrap();
        let mut d: Vec<f64> = (0..10).map(|i| up[(i, i)]).collect();
        d.sort_by(f64::total_cmp);
        for (z, want) in s.iter().zip(&d) {
            assert_abs_diff_eq!(z.re, *want, epsilon = 1e-12);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
        }

        // companion matrix of x³ − 6x² + 11x − 6 = (x−1)(x−2)(x−3)
        let c = Mat::from_fn(3, 3, |i, j| match (i, j) {
            (0, 0) => 6.0,
            (0, 1) => -11.0,
            (0, 2) => 6.0,
            (1, 0) | (2, 1) => 1.0,
            _ => 0.0,
        });
        let s = general_eig(c.as_ref()).unwrap();
        for (z, want) in s.iter().zip([1.0, 2.0, 3.0]) {
            assert!((z.re - want).abs() <= 1e-10 && z.im.abs() <= 1e-10, "{z}");
        }
    }

    #[test]
    fn general_eig_matches_sym_eig_and_conjugate_pairs() {
        let s = random_sym(40, 4);
        let a = sym_eig(s.as_ref()).unwrap();
        let b = general_eig(s.as_ref()).unwrap();
        let scale = spectral_norm(s.as_ref());
        for (x, z) in a.values.iter().zip(b.iter()) {
            assert!((x - z.re).abs() <= 1e-8 * scale);
        }
        let g = random(30, 30, 5);
        let spec = general_eig(g.as_ref()).unwrap();
        let sum_im: f64 = spec.iter().map(|z| z.im).sum();
        assert!(sum_im.abs() <= 1e-10 * spec.len() as f64);
        for z in spec.iter().filter(|z| z.im.abs() > 1e-12) {
            assert!(spec.iter().any(|w| (w - z.conj()).norm() <= 1e-10));
        }
        // sampled eigenvalues are near-singular shifts
        let n = g.nrows();
        for z in spec.iter().step_by(7) {
            let shifted = Mat::<num_complex::Complex64>::from_fn(n, n, |i, j| {
                let v = Complex64::new(g[(i, j)], 0.0);
                if i == j { v - z } else { v }
            });
            let sv = shifted.singular_values().unwrap();
            assert!(*sv.last().unwrap() <= 1e-8 * spectral_norm(g.as_ref()));
        }
    }

    #[test]
    fn balancing_is_a_similarity() {
        let mut a = random(8, 8, 6);
        for i in 0..8 {
            a[(0, i)] *= 1e6;
            a[(i, 3)] *= 1e-5;
        }
        let (b, d) = balance(a.as_ref());
        for i in 0..8 {
            for j in 0..8 {
                let want = a[(i, j)] * d[j] / d[i];
                assert!((b[(i, j)] - want).abs() <= 1e-12 * want.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn nullspace_examples() {
        let p = Mat::from_fn(2, 1, |_, _| 1.0);
        let w = nullspace_orthobasis(p.as_ref()).unwrap();
        assert_abs_diff_eq!(w[(0, 0)].abs(), 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[(0, 0)], -w[(1, 0)], epsilon = 1e-15);

        let p = Mat::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let w = nullspace_orthobasis(p.as_ref()).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(w[(0, j)], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(w[(1, j)], 0.0, epsilon = 1e-15);
        }

        let bad = Mat::from_fn(5, 2, |i, _| i as f64);
        assert!(matches!(nullspace_orthobasis(bad.as_ref()), Err(Error::Unisolvent(_))));
    }

    #[test]
    fn spd_sqrt_examples() {
        let s = spd_sqrt(identity(4).as_ref()).unwrap();
        assert!(frobenius((&s - identity(4)).as_ref()) < 1e-14);
        let s = spd_sqrt(diag(&[4.0, 9.0]).as_ref()).unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[(1, 1)], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[(0, 1)], 0.0, epsilon = 1e-14);

        let b = random(30, 30, 7);
        let a = &(b.transpose() * &b) + identity(30);
        let s = spd_sqrt(a.as_ref()).unwrap();
        let res = frobenius((&(&s * &s) - &a).as_ref());
        assert!(res <= 1e-10 * spectral_norm(a.as_ref()));
        assert!(asymmetry(s.as_ref()) == 0.0);

        match spd_sqrt(diag(&[1.0, -2.0]).as_ref()) {
            Err(Error::NotPositiveDefinite { eigenvalue }) => assert_eq!(eigenvalue, -2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn solve_examples() {
        let b = random(3, 2, 8);
        let x = solve_linear(identity(3).as_ref(), b.as_ref()).unwrap();
        assert!(frobenius((&x - &b).as_ref()) == 0.0);

        let x = solve_linear(
            diag(&[2.0, 4.0]).as_ref(),
            Mat::from_fn(2, 1, |i, _| [2.0, 8.0][i]).as_ref(),
        )
        .unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[(1, 0)], 2.0, epsilon = 1e-15);

        let a = random(40, 40, 9);
        let x0 = random(40, 3, 10);
        let rhs = &a * &x0;
        let x = solve_linear(a.as_ref(), rhs.as_ref()).unwrap();
        assert!(frobenius((&x - &x0).as_ref()) <= 1e-8 * frobenius(x0.as_ref()));

        let sing = Mat::from_fn(3, 3, |i, _| i as f64);
        assert!(matches!(solve_linear(sing.as_ref(), b.as_ref()), Err(Error::Singular { .. })));
    }

    #[test]
    fn spectral_norm_examples() {
        assert_abs_diff_eq!(spectral_norm(diag(&[1.0, -3.0, 2.0]).as_ref()), 3.0, epsilon = 1e-14);
        assert_eq!(spectral_norm(Mat::<f64>::zeros(4, 3).as_ref()), 0.0);

        let a = random(50, 30, 11);
        let ata = a.transpose() * &a;
        let oracle = sym_eig(symmetrize(ata.as_ref()).as_ref()).unwrap();
        let want = oracle.values.last().unwrap().sqrt();
        assert!((spectral_norm(a.as_ref()) - want).abs() <= 1e-8 * want);
        let (p, ok) = power_spectral_norm(a.as_ref(), 1e-12, 10_000);
        assert!(ok);
        assert!((p - want).abs() <= 1e-8 * want);
        assert!((spectral_norm(a.transpose()) - spectral_norm(a.as_ref())).abs() <= 1e-10 * want);
    }

    #[test]
    fn cond_examples() {
        let th: f64 = 0.3;
        let q = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => th.cos(),
            (0, 1) => -th.sin(),
            _ => th.sin(),
        });
        assert_abs_diff_eq!(cond2(q.as_ref()).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cond2(diag(&[10.0, 1.0]).as_ref()).unwrap(), 10.0, epsilon = 1e-12);
        assert!(cond2(Mat::<f64>::zeros(2, 2).as_ref()).is_err());
    }

    #[test]
    fn rank_of_random_tall_matrix() {
        let a = random(20, 6, 12);
        assert_eq!(numerical_rank(a.as_ref()), 6);
    }
}
