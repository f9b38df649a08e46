//! Collocation matrices and the global differentiation matrix, in the
//! positive definite form `M = KΦ⁻¹` and the bordered (saddle point) form
//! `M = KA + PΛB`.

use faer::{Mat, MatRef};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::harmonics::{vandermonde, HarmonicBasisEnumeration};
use crate::kernels::{apply_operator, check_compatibility, SpectralOperator, ZonalKernel};
use crate::linalg::{
    frobenius, left_pseudo_inverse, nullspace_orthobasis, solve_linear, sym_eig, symmetrize,
    DenseMatrix,
};

/// Half squared chord below which two distinct nodes count as coincident
/// (equivalent to `x·y > 1 − 1e−14`).
const COINCIDENT_HALF_CHORD: f64 = 1e-14;

/// `Φ_X = (g(x_j·x_k))` and `K_X = (Ψ(x_j·x_k))`, with the sign `σ` that
/// makes `σΦ_X` positive definite on the polynomial-annihilating subspace.
#[derive(Debug, Clone)]
pub struct CollocationPair {
    pub phi: DenseMatrix,
    pub k: DenseMatrix,
    pub sign: f64,
}

impl CollocationPair {
    /// Both matrices multiplied by `c`, as produced by the kernel `c·Φ`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            phi: &self.phi * faer::Scale(c),
            k: &self.k * faer::Scale(c),
            sign: self.sign * c.signum(),
        }
    }
}

pub fn collocation_matrices(
    kernel: &ZonalKernel,
    op: &SpectralOperator,
    x: &PointSet,
) -> Result<CollocationPair> {
    let psi = apply_operator(kernel, op)?;
    let g = kernel.profile();
    let n = x.len();
    let pts = x.points();
    let rows: Vec<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (j..n)
                .map(|k| {
                    let s = pts[j].half_chord_sq(&pts[k]);
                    (g.eval_s(s), psi.eval_s(s))
                })
                .collect()
        })
        .collect();
    for j in 0..n {
        for k in j + 1..n {
            if pts[j].half_chord_sq(&pts[k]) < COINCIDENT_HALF_CHORD {
                return Err(Error::CoincidentPoints(j, k));
            }
        }
    }
    let pick = |j: usize, k: usize| if j <= k { rows[j][k - j] } else { rows[k][j - k] };
    Ok(CollocationPair {
        phi: Mat::from_fn(n, n, |j, k| pick(j, k).0),
        k: Mat::from_fn(n, n, |j, k| pick(j, k).1),
        sign: kernel.definiteness_sign(),
    })
}

/// Bordered solve output: `ΦA + PB = I`, `PᵀA = 0`.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
}

/// Relative residual allowance of the bordered solve, scaled by the
/// backward-stable size `(‖Φ‖ + ‖P‖)·(1 + ‖[A; B]‖)`.
pub const SADDLE_RESIDUAL_TOLERANCE: f64 = 1e-9;

fn bordered_matrix(phi: MatRef<'_, f64>, p: MatRef<'_, f64>) -> Result<DenseMatrix> {
    let n = phi.nrows();
    let m = p.ncols();
    if phi.ncols() != n || p.nrows() != n {
        return Err(Error::Dimension(format!(
            "saddle system with Φ {}x{} and P {}x{}",
            phi.nrows(),
            phi.ncols(),
            p.nrows(),
            p.ncols()
        )));
    }
    if m > 0 {
        // rank check on P before the bordered factorization
        nullspace_orthobasis(p)?;
    }
    Ok(Mat::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
        (true, true) => phi[(i, j)],
        (true, false) => p[(i, j - n)],
        (false, true) => p[(j, i - n)],
        (false, false) => 0.0,
    }))
}

fn solve_bordered(
    phi: MatRef<'_, f64>,
    p: MatRef<'_, f64>,
    rhs: MatRef<'_, f64>,
) -> Result<DenseMatrix> {
    let bordered = bordered_matrix(phi, p)?;
    let sol = solve_linear(bordered.as_ref(), rhs)?;
    let resid = frobenius((&bordered * &sol - rhs).as_ref());
    let scale = (frobenius(phi) + frobenius(p)) * (1.0 + frobenius(sol.as_ref()));
    if resid > SADDLE_RESIDUAL_TOLERANCE * scale {
        return Err(Error::Consistency(format!(
            "bordered solve residual {resid:.3e} exceeds {:.3e}",
            SADDLE_RESIDUAL_TOLERANCE * scale
        )));
    }
    Ok(sol)
}

/// Solves `[[Φ, P], [Pᵀ, 0]]·[A; B] = [I; 0]`.
pub fn solve_saddle(phi: MatRef<'_, f64>, p: MatRef<'_, f64>) -> Result<SaddleSolution> {
    let n = phi.nrows();
    let m = p.ncols();
    let rhs = Mat::from_fn(n + m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let sol = solve_bordered(phi, p, rhs.as_ref())?;
    let a = symmetrize(sol.subrows(0, n).as_ref());
    let b = sol.subrows(n, m).to_owned();
    Ok(SaddleSolution { a, b })
}

/// Comparison of the bordered solve against the closed forms
/// `A = W(WᵀΦW)⁻¹Wᵀ` and `B = P†(I − ΦA)`.
#[derive(Debug, Clone)]
pub struct SaddleAudit {
    /// `‖A − A_closed‖_F / ‖A_closed‖_F`.
    pub a_rel_diff: f64,
    /// `‖B − B_closed‖_F / ‖B_closed‖_F` (0 when `M = 0`).
    pub b_rel_diff: f64,
    /// `‖PᵀA‖_F / ‖A‖_F`.
    pub pt_a_rel: f64,
    /// Smallest eigenvalue of `σWᵀΦW`.
    pub phi_hat_min_eig: f64,
}

pub fn audit_saddle(
    phi: MatRef<'_, f64>,
    p: MatRef<'_, f64>,
    sign: f64,
    sol: &SaddleSolution,
) -> Result<SaddleAudit> {
    let n = phi.nrows();
    let w = nullspace_orthobasis(p)?;
    let phi_hat = symmetrize((w.transpose() * phi * &w * faer::Scale(sign)).as_ref());
    let eig = sym_eig(phi_hat.as_ref())?;
    let inv_vals: Vec<f64> = eig.values.iter().map(|v| sign / v).collect();
    let a_hat = crate::linalg::scaled_outer(&eig.vectors, &inv_vals);
    let a_closed = &w * &a_hat * w.transpose();
    let p_dag = left_pseudo_inverse(p)?;
    let i_minus = crate::linalg::identity(n) - phi * &a_closed;
    let b_closed = &p_dag * &i_minus;
    let rel = |x: MatRef<'_, f64>, y: MatRef<'_, f64>| {
        let d = frobenius((x.to_owned() - y).as_ref());
        let s = frobenius(y);
        if s == 0.0 {
            d
        } else {
            d / s
        }
    };
    Ok(SaddleAudit {
        a_rel_diff: rel(sol.a.as_ref(), a_closed.as_ref()),
        b_rel_diff: rel(sol.b.as_ref(), b_closed.as_ref()),
        pt_a_rel: frobenius((p.transpose() * &sol.a).as_ref()) / frobenius(sol.a.as_ref()),
        phi_hat_min_eig: eig.values.first().copied().unwrap_or(f64::INFINITY),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmMode {
    Pd,
    Cpd { mtilde: usize },
}

/// Polynomial ingredients of a bordered-form DM.
#[derive(Debug, Clone)]
pub struct CpdParts {
    pub basis: HarmonicBasisEnumeration,
    pub p: DenseMatrix,
    pub lambda: Vec<f64>,
    pub a: DenseMatrix,
    pub b: DenseMatrix,
}

/// Global differentiation matrix with the ingredients it was built from.
#[derive(Debug, Clone)]
pub struct GlobalDm {
    m: DenseMatrix,
    mode: DmMode,
    colloc: CollocationPair,
    cpd: Option<CpdParts>,
}

impl GlobalDm {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.m
    }

    pub fn mode(&self) -> DmMode {
        self.mode
    }

    pub fn mtilde(&self) -> usize {
        match self.mode {
            DmMode::Pd => 0,
            DmMode::Cpd { mtilde } => mtilde,
        }
    }

    pub fn phi(&self) -> &DenseMatrix {
        &self.colloc.phi
    }

    pub fn k(&self) -> &DenseMatrix {
        &self.colloc.k
    }

    /// Definiteness sign of the underlying kernel matrix.
    pub fn sign(&self) -> f64 {
        self.colloc.sign
    }

    pub fn cpd_parts(&self) -> Option<&CpdParts> {
        self.cpd.as_ref()
    }

    pub fn len(&self) -> usize {
        self.m.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.m.nrows() == 0
    }

    /// Largest relative residual `‖M p_j − λ_j p_j‖/(‖λ_j p_j‖ + 1)` over the
    /// polynomial basis; 0 in PD mode.
    pub fn exactness_residual(&self) -> f64 {
        let Some(parts) = &self.cpd else { return 0.0 };
        let mp = &self.m * &parts.p;
        (0..parts.p.ncols())
            .map(|j| {
                let mut r = 0.0;
                let mut s = 0.0;
                for i in 0..parts.p.nrows() {
                    let want = parts.lambda[j] * parts.p[(i, j)];
                    r += (mp[(i, j)] - want).powi(2);
                    s += want * want;
                }
                r.sqrt() / (s.sqrt() + 1.0)
            })
            .fold(0.0, f64::max)
    }
}

/// `M = KΦ⁻¹` for a positive definite kernel.
pub fn global_dm_pd(kernel: &ZonalKernel, op: &SpectralOperator, x: &PointSet) -> Result<GlobalDm> {
    if kernel.cpd_order() != 0 {
        return Err(Error::InvalidInput(format!(
            "kernel {kernel} is only conditionally positive definite; use the bordered form"
        )));
    }
    let colloc = collocation_matrices(kernel, op, x)?;
    pd_from_collocation(colloc)
}

pub fn pd_from_collocation(colloc: CollocationPair) -> Result<GlobalDm> {
    // Φ and K are symmetric, so Mᵀ = Φ⁻¹K
    let mt = solve_linear(colloc.phi.as_ref(), colloc.k.as_ref())?;
    Ok(GlobalDm {
        m: mt.transpose().to_owned(),
        mode: DmMode::Pd,
        colloc,
        cpd: None,
    })
}

/// Global DM reproducing harmonics of degree below `mtilde`. `mtilde = 0`
/// with a positive definite kernel yields the `KΦ⁻¹` form.
pub fn global_dm_cpd(
    kernel: &ZonalKernel,
    op: &SpectralOperator,
    x: &PointSet,
    mtilde: usize,
) -> Result<GlobalDm> {
    let compat = check_compatibility(kernel, op, mtilde)?;
    if !compat.accepted {
        return Err(Error::Incompatible(compat.diagnostic));
    }
    let colloc = collocation_matrices(kernel, op, x)?;
    cpd_from_collocation(colloc, op, x, mtilde)
}

pub fn cpd_from_collocation(
    colloc: CollocationPair,
    op: &SpectralOperator,
    x: &PointSet,
    mtilde: usize,
) -> Result<GlobalDm> {
    if mtilde == 0 {
        return pd_from_collocation(colloc);
    }
    let basis = HarmonicBasisEnumeration::below(mtilde);
    if x.len() <= basis.len() {
        return Err(Error::InvalidInput(format!(
            "N = {} must exceed the polynomial space dimension {}",
            x.len(),
            basis.len()
        )));
    }
    let p = vandermonde(x, &basis)?;
    let lambda: Vec<f64> = basis.iter().map(|idx| op.eigenvalue(idx.degree())).collect();
    let n = x.len();
    let nm = basis.len();
    // One factorization for [A; B] and for Mᵀ = AK + BᵀΛPᵀ. Solving for Mᵀ
    // directly avoids the cancellation in forming K·A when ‖A‖ is large.
    let rhs = Mat::from_fn(n + nm, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => (i == j) as u8 as f64,
        (false, true) => 0.0,
        (true, false) => colloc.k[(i, j - n)],
        (false, false) => lambda[i - n] * p[(j - n, i - n)],
    });
    let sol = solve_bordered(colloc.phi.as_ref(), p.as_ref(), rhs.as_ref())?;
    let a = symmetrize(sol.submatrix(0, 0, n, n).as_ref());
    let b = sol.submatrix(n, 0, nm, n).to_owned();
    let m = sol.submatrix(0, n, n, n).transpose().to_owned();
    Ok(GlobalDm {
        m,
        mode: DmMode::Cpd { mtilde },
        colloc,
        cpd: Some(CpdParts {
            basis,
            p,
            lambda,
            a,
            b,
        }),
    })
}
