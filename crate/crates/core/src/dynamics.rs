//! Semi-discrete evolution `u′ = M u` with classical Runge-Kutta steps and
//! energy monitoring in the kernel norm or seminorm.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::global_dm::GlobalDm;
use crate::linalg::{
    identity, nullspace_orthobasis, solve_linear, spectral_norm, sym_eig, symmetrize, DenseMatrix,
};

/// Real-axis stability limit of classical RK4 (`|z| ≤ 2.785` for `z ≤ 0`).
pub const RK4_REAL_STABILITY: f64 = 2.785;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(m: MatRef<'_, f64>, u: &[f64]) -> Vec<f64> {
    let col = Mat::from_fn(u.len(), 1, |i, _| u[i]);
    let r = m * &col;
    (0..m.nrows()).map(|i| r[(i, 0)]).collect()
}

/// `uᵀΦ⁻¹u`.
pub fn energy_pd(phi: MatRef<'_, f64>, u: &[f64]) -> Result<f64> {
    let rhs = Mat::from_fn(u.len(), 1, |i, _| u[i]);
    let x = solve_linear(phi, rhs.as_ref())?;
    Ok((0..u.len()).map(|i| u[i] * x[(i, 0)]).sum())
}

/// `uᵀAu`, with roundoff-level negatives reported as 0.
pub fn energy_cpd(a: MatRef<'_, f64>, u: &[f64]) -> f64 {
    let norm_a = spectral_norm(a);
    let v = dot(u, &matvec(a, u));
    if v < 0.0 && v >= -1e-12 * norm_a * dot(u, u) {
        0.0
    } else {
        v
    }
}

/// Quadratic form used to measure the state along a trajectory.
#[derive(Debug, Clone)]
pub enum Energy {
    /// `uᵀΦ⁻¹u` with `Φ⁻¹` precomputed.
    Pd { phi_inv: DenseMatrix },
    /// `uᵀAu` for the sign-corrected saddle block `A`, evaluated as `‖Fu‖²`
    /// with `FᵀF = A`. The sum of squares keeps roundoff proportional to the
    /// seminorm itself once the state is nearly polynomial.
    Cpd { a: DenseMatrix, factor: DenseMatrix },
    /// Squared Euclidean norm.
    L2,
}

impl Energy {
    /// The norm matching the DM's construction.
    pub fn for_dm(dm: &GlobalDm) -> Result<Self> {
        match dm.cpd_parts() {
            Some(parts) => {
                let sign = dm.sign();
                let a = &parts.a * faer::Scale(sign);
                // F = (σWᵀΦW)^{-1/2}Wᵀ
                let w = nullspace_orthobasis(parts.p.as_ref())?;
                let phi_hat = symmetrize((w.transpose() * dm.phi() * &w * faer::Scale(sign)).as_ref());
                let eig = sym_eig(phi_hat.as_ref())?;
                let q = &eig.vectors;
                let scaled = Mat::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] / eig.values[j].sqrt());
                let factor = scaled * q.transpose() * w.transpose();
                Ok(Energy::Cpd { a, factor })
            }
            None => {
                let n = dm.len();
                let inv = solve_linear(dm.phi().as_ref(), identity(n).as_ref())?;
                Ok(Energy::Pd {
                    phi_inv: symmetrize(inv.as_ref()),
                })
            }
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            Energy::Pd { phi_inv } => dot(u, &matvec(phi_inv.as_ref(), u)),
            Energy::Cpd { factor, .. } => matvec(factor.as_ref(), u).iter().map(|v| v * v).sum(),
            Energy::L2 => dot(u, u),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Energy::Pd { .. } => "pd",
            Energy::Cpd { .. } => "cpd",
            Energy::L2 => "l2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionRun {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub l2_norms: Vec<f64>,
    pub dt: f64,
    pub method: &'static str,
}

impl EvolutionRun {
    /// Largest increase `energies[i+1] − energies[i]` (≤ 0 for a monotone run).
    pub fn max_energy_increase(&self) -> f64 {
        self.energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_energy_monotone(&self, slack: f64) -> bool {
        self.energies.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// `1/(2ρ)` with `ρ` the spectral radius (or 1 for the zero matrix).
pub fn default_dt(spectral_radius: f64) -> f64 {
    if spectral_radius > 0.0 {
        0.5 / spectral_radius
    } else {
        1.0
    }
}

/// Fixed-step RK4 for `u′ = M u`. When `spectral_radius` is known and the
/// spectrum is real, `dt·ρ` must lie inside the real stability interval.
pub fn evolve(
    m: MatRef<'_, f64>,
    u0: &[f64],
    dt: f64,
    steps: usize,
    energy: &Energy,
    spectral_radius: Option<f64>,
) -> Result<EvolutionRun> {
    let n = m.nrows();
    if m.ncols() != n || u0.len() != n {
        return Err(Error::Dimension(format!(
            "evolution with a {}x{} matrix and a state of length {}",
            m.nrows(),
            m.ncols(),
            u0.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    if let Some(rho) = spectral_radius {
        if dt * rho > RK4_REAL_STABILITY {
            return Err(Error::InvalidInput(format!(
                "dt·ρ = {:.4} exceeds the RK4 stability limit {RK4_REAL_STABILITY}",
                dt * rho
            )));
        }
    }
    let mut u = u0.to_vec();
    let mut run = EvolutionRun {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        energies: Vec::with_capacity(steps + 1),
        l2_norms: Vec::with_capacity(steps + 1),
        dt,
        method: "rk4",
    };
    let record = |run: &mut EvolutionRun, t: f64, u: &[f64]| {
        run.times.push(t);
        run.energies.push(energy.eval(u));
        run.l2_norms.push(dot(u, u).sqrt());
        run.states.push(u.to_vec());
    };
    record(&mut run, 0.0, &u);
    let axpy = |u: &[f64], k: &[f64], h: f64| -> Vec<f64> { u.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    for step in 1..=steps {
        let k1 = matvec(m, &u);
        let k2 = matvec(m, &axpy(&u, &k1, 0.5 * dt));
        let k3 = matvec(m, &axpy(&u, &k2, 0.5 * dt));
        let k4 = matvec(m, &axpy(&u, &k3, dt));
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step });
        }
        record(&mut run, step as f64 * dt, &u);
    }
    Ok(run)
}
