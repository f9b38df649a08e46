//! Block triangular similarity `M = V·[[Λ, R], [0, Θ]]·V⁻¹` of a global DM,
//! the Sylvester step that diagonalizes it, the spectral separation of the
//! operator, and the eigenvalue perturbation bounds built on them.

use faer::{Mat, MatRef};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::global_dm::GlobalDm;
use crate::harmonics::laplace_eigenvalue;
use crate::kernels::{Poly, SpectralOperator};
use crate::linalg::{
    check_spd, frobenius, identity, left_pseudo_inverse, max_abs, nullspace_orthobasis,
    scaled_outer, solve_linear, spectral_norm, sym_eig, symmetrize, DenseMatrix,
};

/// Reconstruction allowance relative to `‖M‖`.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub p: DenseMatrix,
    pub p_dag: DenseMatrix,
    pub w: DenseMatrix,
    pub z: DenseMatrix,
    pub z_dag: DenseMatrix,
    pub u: DenseMatrix,
    pub lambda: Vec<f64>,
    /// Ascending.
    pub theta: Vec<f64>,
    pub r: DenseMatrix,
    pub norm_v: f64,
    pub norm_v_inv: f64,
    pub kappa: f64,
    pub norm_a: f64,
}

impl BlockDecomposition {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn m(&self) -> usize {
        self.lambda.len()
    }

    /// `V = [P Z]`.
    pub fn v(&self) -> DenseMatrix {
        let (n, m) = (self.n(), self.m());
        Mat::from_fn(n, n, |i, j| if j < m { self.p[(i, j)] } else { self.z[(i, j - m)] })
    }

    /// `V⁻¹ = [P†; Z†]`.
    pub fn v_inv(&self) -> DenseMatrix {
        let (n, m) = (self.n(), self.m());
        Mat::from_fn(n, n, |i, j| if i < m { self.p_dag[(i, j)] } else { self.z_dag[(i - m, j)] })
    }

    /// `[[Λ, R], [0, Θ]]`.
    pub fn block_matrix(&self) -> DenseMatrix {
        let (n, m) = (self.n(), self.m());
        Mat::from_fn(n, n, |i, j| match (i < m, j < m) {
            (true, true) if i == j => self.lambda[i],
            (true, false) => self.r[(i, j - m)],
            (false, false) if i == j => self.theta[i - m],
            _ => 0.0,
        })
    }

    /// `V·T·V⁻¹`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.v() * self.block_matrix() * self.v_inv()
    }

    /// `‖M − V·T·V⁻¹‖₂ / ‖M‖₂`.
    pub fn reconstruction_residual(&self, m: MatRef<'_, f64>) -> f64 {
        spectral_norm((m.to_owned() - self.reconstruct()).as_ref()) / spectral_norm(m)
    }

    pub fn norm_r(&self) -> f64 {
        spectral_norm(self.r.as_ref())
    }
}

fn max_abs_deviation(a: &DenseMatrix, want: &DenseMatrix) -> f64 {
    max_abs((a - want).as_ref())
}

/// Factorizes a global DM. Positive definite DMs (no polynomial block)
/// produce empty `Λ` and `R`.
pub fn decompose(dm: &GlobalDm) -> Result<BlockDecomposition> {
    let n = dm.len();
    let sign = dm.sign();
    let phi = dm.phi();
    let k = dm.k();
    let (p, lambda, a) = match dm.cpd_parts() {
        Some(parts) => (parts.p.clone(), parts.lambda.clone(), parts.a.clone()),
        None => (
            Mat::zeros(n, 0),
            Vec::new(),
            symmetrize(solve_linear(phi.as_ref(), identity(n).as_ref())?.as_ref()),
        ),
    };
    let m = lambda.len();
    let w = nullspace_orthobasis(p.as_ref())?;
    let p_dag = left_pseudo_inverse(p.as_ref())?;

    let phi_hat = symmetrize((w.transpose() * phi * &w * faer::Scale(sign)).as_ref());
    let eig_hat = sym_eig(phi_hat.as_ref())?;
    check_spd(&eig_hat.values).map_err(|e| match e {
        Error::NotPositiveDefinite { eigenvalue } => Error::CpdViolation(format!(
            "projected collocation matrix has eigenvalue {eigenvalue:.3e}"
        )),
        other => other,
    })?;
    // S = Â^{1/2} with Â = Φ̂⁻¹
    let s_vals: Vec<f64> = eig_hat.values.iter().map(|v| 1.0 / v.sqrt()).collect();
    let s_inv_vals: Vec<f64> = eig_hat.values.iter().map(|v| v.sqrt()).collect();
    let s = scaled_outer(&eig_hat.vectors, &s_vals);
    let s_inv = scaled_outer(&eig_hat.vectors, &s_inv_vals);

    let k_hat = w.transpose() * k * &w * faer::Scale(sign);
    let sks = symmetrize((&s * &k_hat * &s).as_ref());
    let eig = sym_eig(sks.as_ref())?;
    let u = eig.vectors;
    let theta = eig.values;

    let z = &w * &s_inv * &u;
    let z_dag = u.transpose() * &s * w.transpose();
    // equals (P†K − ΛP†Φ)AZ, without the cancellation of forming KA
    let r = &p_dag * dm.matrix() * &z;

    let nm = n - m;
    let zz = max_abs_deviation(&(&z_dag * &z), &identity(nm));
    if zz > 1e-9 {
        return Err(Error::Consistency(format!("Z†Z deviates from I by {zz:.3e}")));
    }
    let pp = max_abs_deviation(&(&p_dag * &p), &identity(m));
    if pp > 1e-10 {
        return Err(Error::Consistency(format!("P†P deviates from I by {pp:.3e}")));
    }
    let norm_p = frobenius(p.as_ref());
    let norm_z = frobenius(z.as_ref());
    let cross = max_abs((&p_dag * &z).as_ref()).max(max_abs((&z_dag * &p).as_ref()));
    if cross > 1e-9 * (1.0 + norm_p * norm_z) {
        return Err(Error::Consistency(format!("P†Z or Z†P is {cross:.3e}, not 0")));
    }

    let mut bd = BlockDecomposition {
        p,
        p_dag,
        w,
        z,
        z_dag,
        u,
        lambda,
        theta,
        r,
        norm_v: 0.0,
        norm_v_inv: 0.0,
        kappa: 0.0,
        norm_a: spectral_norm(a.as_ref()),
    };
    let mm = dm.matrix();
    let resid = frobenius((mm - bd.reconstruct()).as_ref());
    if resid > RECONSTRUCTION_TOLERANCE * frobenius(mm.as_ref()) {
        return Err(Error::Consistency(format!(
            "block reconstruction residual {resid:.3e} relative to ‖M‖ = {:.3e}",
            frobenius(mm.as_ref())
        )));
    }
    bd.norm_v = spectral_norm(bd.v().as_ref());
    bd.norm_v_inv = spectral_norm(bd.v_inv().as_ref());
    bd.kappa = bd.norm_v * bd.norm_v_inv;
    Ok(bd)
}

/// `λ_♭ = max_{ℓ<m̃} p(ν_ℓ)`, `λ^♯ = min_{ℓ≥m̃} p(ν_ℓ)`, `γ = λ^♯ − λ_♭`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    /// `−∞` when `m̃ = 0`.
    pub lambda_flat: f64,
    /// `−∞` when `p(ν_ℓ)` is unbounded below on the tail.
    pub lambda_sharp: f64,
    /// `None` when `λ^♯` or `λ_♭` is infinite.
    pub gamma: Option<f64>,
}

/// Number of degrees scanned past `m̃` before relying on the monotonicity
/// certificate.
const SEPARATION_SCAN: usize = 64;

pub fn separation_gamma(op: &SpectralOperator, mtilde: usize) -> Separation {
    let lambda_flat = (0..mtilde)
        .map(|l| op.eigenvalue(l))
        .fold(f64::NEG_INFINITY, f64::max);
    let poly = op.poly();
    let degree = op.degree();
    let lambda_sharp = if degree == 0 {
        poly.coeff(0)
    } else {
        // p′ has no roots left of −B (Cauchy bound), so p is monotone in ν there
        let dp: Poly = poly.derivative();
        let dl = degree - 1;
        let lead = dp.coeff(dl);
        let bound = 1.0 + (0..dl).map(|i| (dp.coeff(i) / lead).abs()).fold(0.0, f64::max);
        // sign of p′(ν) as ν → −∞
        let tail_slope = lead.signum() * if dl % 2 == 0 { 1.0 } else { -1.0 };
        if tail_slope > 0.0 {
            // p decreases without bound as ℓ grows
            f64::NEG_INFINITY
        } else {
            let mut l_cap = mtilde + SEPARATION_SCAN;
            while laplace_eigenvalue(l_cap, 2) >= -bound {
                l_cap += 1;
            }
            (mtilde..=l_cap)
                .map(|l| op.eigenvalue(l))
                .fold(f64::INFINITY, f64::min)
        }
    };
    let gamma = (lambda_flat.is_finite() && lambda_sharp.is_finite())
        .then(|| lambda_sharp - lambda_flat);
    Separation {
        lambda_flat,
        lambda_sharp,
        gamma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SylvesterCase {
    Disjoint,
    OverlappingConsistent,
    Defective,
}

impl SylvesterCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            SylvesterCase::Disjoint => "disjoint",
            SylvesterCase::OverlappingConsistent => "overlapping_consistent",
            SylvesterCase::Defective => "defective",
        }
    }
}

/// Solution of `Γ ⊙ X̃ = R` with `Γ_ij = Θ_j − Λ_i`.
#[derive(Debug, Clone)]
pub struct SylvesterSolution {
    pub case: SylvesterCase,
    pub x_tilde: Option<DenseMatrix>,
    /// `min |Γ_ij|` (∞ when either block is empty).
    pub min_gap: f64,
    pub tol: f64,
}

pub fn default_sylvester_tol(lambda: &[f64], theta: &[f64]) -> f64 {
    let ml = lambda.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mt = theta.iter().map(|v| v.abs()).fold(0.0, f64::max);
    1e-8 * (ml + mt)
}

pub fn sylvester_solve(
    lambda: &[f64],
    theta: &[f64],
    r: MatRef<'_, f64>,
    tol: Option<f64>,
) -> SylvesterSolution {
    let tol = tol.unwrap_or_else(|| default_sylvester_tol(lambda, theta));
    let (m, k) = (lambda.len(), theta.len());
    let norm_r = spectral_norm(r);
    let mut min_gap = f64::INFINITY;
    let mut consistent = true;
    for i in 0..m {
        for j in 0..k {
            let g = theta[j] - lambda[i];
            min_gap = min_gap.min(g.abs());
            if g.abs() <= tol && r[(i, j)].abs() > tol * norm_r {
                consistent = false;
            }
        }
    }
    if !consistent {
        return SylvesterSolution {
            case: SylvesterCase::Defective,
            x_tilde: None,
            min_gap,
            tol,
        };
    }
    let case = if min_gap > tol {
        SylvesterCase::Disjoint
    } else {
        SylvesterCase::OverlappingConsistent
    };
    let x = Mat::from_fn(m, k, |i, j| {
        let g = theta[j] - lambda[i];
        if g.abs() <= tol {
            0.0
        } else {
            r[(i, j)] / g
        }
    });
    SylvesterSolution {
        case,
        x_tilde: Some(x),
        min_gap,
        tol,
    }
}

pub fn sylvester_diagonalize(bd: &BlockDecomposition, tol: Option<f64>) -> SylvesterSolution {
    sylvester_solve(&bd.lambda, &bd.theta, bd.r.as_ref(), tol)
}

/// `cond(Φ^{1/2})·diff` for a positive definite collocation matrix.
pub fn bauer_fike_pd(phi: MatRef<'_, f64>, diff_norm: f64) -> Result<f64> {
    let eig = sym_eig(phi)?;
    check_spd(&eig.values)?;
    let (lo, hi) = (eig.values[0], *eig.values.last().unwrap());
    Ok((hi / lo).sqrt() * diff_norm)
}

/// `max(2κ·diff, √(2κ‖R‖·diff))`.
pub fn bauer_fike_cpd_raw(kappa: f64, norm_r: f64, diff_norm: f64) -> f64 {
    (2.0 * kappa * diff_norm).max((2.0 * kappa * norm_r * diff_norm).sqrt())
}

pub fn bauer_fike_cpd(bd: &BlockDecomposition, diff_norm: f64) -> f64 {
    bauer_fike_cpd_raw(bd.kappa, bd.norm_r(), diff_norm)
}

/// Bounds after diagonalizing the off-diagonal block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagBound {
    /// `(1 + ‖R‖/γ)²·κ·diff`.
    pub gamma_bound: f64,
    /// `(1 + ‖X̃‖)²·κ·diff`.
    pub sharp_bound: f64,
}

pub fn bauer_fike_diag(
    bd: &BlockDecomposition,
    sylv: &SylvesterSolution,
    gamma: Option<f64>,
    diff_norm: f64,
) -> Result<DiagBound> {
    let gamma = match gamma {
        Some(g) if g > 0.0 => g,
        other => {
            return Err(Error::InvalidInput(format!(
                "separation must be positive, got {other:?}"
            )))
        }
    };
    let x = match (&sylv.case, &sylv.x_tilde) {
        (SylvesterCase::Defective, _) | (_, None) => {
            return Err(Error::InvalidInput("Sylvester problem is defective".into()))
        }
        (_, Some(x)) => x,
    };
    let norm_r = bd.norm_r();
    let norm_x = spectral_norm(x.as_ref());
    Ok(DiagBound {
        gamma_bound: (1.0 + norm_r / gamma).powi(2) * bd.kappa * diff_norm,
        sharp_bound: (1.0 + norm_x).powi(2) * bd.kappa * diff_norm,
    })
}

/// Raw norms of the factorization, serialized with fixed key names.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DiagnosticReport {
    #[serde(rename = "norm_P")]
    pub norm_p: f64,
    #[serde(rename = "norm_Pdag")]
    pub norm_pdag: f64,
    #[serde(rename = "norm_Z")]
    pub norm_z: f64,
    #[serde(rename = "norm_Zdag")]
    pub norm_zdag: f64,
    #[serde(rename = "norm_A")]
    pub norm_a: f64,
    #[serde(rename = "norm_R")]
    pub norm_r: f64,
    pub kappa: f64,
    pub gamma: Option<f64>,
    pub theta_min: f64,
    pub theta_max: f64,
    pub case: SylvesterCase,
}

impl DiagnosticReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn diagnostic_report(
    bd: &BlockDecomposition,
    op: &SpectralOperator,
    mtilde: usize,
    tol: Option<f64>,
) -> DiagnosticReport {
    let sylv = sylvester_diagonalize(bd, tol);
    DiagnosticReport {
        norm_p: spectral_norm(bd.p.as_ref()),
        norm_pdag: spectral_norm(bd.p_dag.as_ref()),
        norm_z: spectral_norm(bd.z.as_ref()),
        norm_zdag: spectral_norm(bd.z_dag.as_ref()),
        norm_a: bd.norm_a,
        norm_r: bd.norm_r(),
        kappa: bd.kappa,
        gamma: separation_gamma(op, mtilde).gamma,
        theta_min: bd.theta.first().copied().unwrap_or(f64::NAN),
        theta_max: bd.theta.last().copied().unwrap_or(f64::NAN),
        case: sylv.case,
    }
}
