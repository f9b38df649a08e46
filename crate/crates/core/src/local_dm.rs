//! Local (RBF-FD) differentiation matrices built from nearest-neighbour
//! stencils.

use std::fmt::Write as _;

use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{nearest_neighbors, PointSet};
use crate::harmonics::{eval_basis, vandermonde_rows, HarmonicBasisEnumeration};
use crate::kernels::{apply_operator, check_compatibility, SpectralOperator, ZonalFunction, ZonalKernel};
use crate::linalg::{solve_linear, DenseMatrix};

/// `n = ⌈K²(ln N)²/7⌉`, clamped to `[m̃² + 1, N]`.
pub fn stencil_size(k: f64, n_points: usize, mtilde: usize) -> usize {
    let raw = (k * k * (n_points as f64).ln().powi(2) / 7.0).ceil() as usize;
    raw.max(mtilde * mtilde + 1).min(n_points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilSet {
    pub k: f64,
    pub n: usize,
    /// `stencils[j]` lists the `n` nearest nodes of `x_j`, nearest first, so
    /// it starts with `j`.
    pub stencils: Vec<Vec<usize>>,
}

pub fn build_stencils(x: &PointSet, k: f64, mtilde: usize) -> Result<StencilSet> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidInput(format!("stencil parameter K must be positive, got {k}")));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("stencils need at least two nodes".into()));
    }
    let n = stencil_size(k, x.len(), mtilde);
    let stencils = (0..x.len())
        .into_par_iter()
        .map(|j| nearest_neighbors(x, j, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(StencilSet { k, n, stencils })
}

/// How stencils map to matrix entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// Row `j` holds the weights that apply `𝓛` at `x_j` to the local
    /// interpolant on `Υ_j` (standard RBF-FD; exact on polynomials row by row).
    #[default]
    Row,
    /// Column `k` holds `𝓛b_k(x_j)` for the local Lagrange function `b_k` on
    /// `Υ_k`, evaluated at `x_j ∈ Υ_k`.
    Column,
}

/// Shared per-problem data for the local systems.
struct LocalProblem<'a> {
    x: &'a PointSet,
    kernel: &'a ZonalKernel,
    psi: ZonalFunction,
    basis: HarmonicBasisEnumeration,
    lambda: Vec<f64>,
}

impl LocalProblem<'_> {
    /// `[[Φ, P], [Pᵀ, 0]]` on the stencil.
    fn bordered(&self, st: &[usize]) -> DenseMatrix {
        let n = st.len();
        let m = self.basis.len();
        let p = vandermonde_rows(self.x, st, &self.basis);
        let pts = self.x.points();
        Mat::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
            (true, true) => self.kernel.eval_pair(&pts[st[i]], &pts[st[j]]),
            (true, false) => p[(i, j - n)],
            (false, true) => p[(j, i - n)],
            (false, false) => 0.0,
        })
    }

    /// `[Ψ(x·x_i)_i ; λ_l p_l(x)]` for an evaluation node `x`.
    fn applied_row(&self, st: &[usize], at: usize) -> Vec<f64> {
        let pts = self.x.points();
        let mut v: Vec<f64> = st.iter().map(|&i| self.psi.eval_pair(&pts[at], &pts[i])).collect();
        let p = eval_basis(&self.basis, &pts[at]);
        v.extend(p.iter().zip(&self.lambda).map(|(a, l)| a * l));
        v
    }

    fn row_weights(&self, st: &[usize], center: usize) -> Result<Vec<(usize, usize, f64)>> {
        let b = self.bordered(st);
        let rhs_v = self.applied_row(st, center);
        let rhs = Mat::from_fn(rhs_v.len(), 1, |i, _| rhs_v[i]);
        // the bordered matrix is symmetric, so the weights solve B w = rhs
        let w = solve_linear(b.as_ref(), rhs.as_ref())?;
        Ok(st.iter().enumerate().map(|(i, &c)| (center, c, w[(i, 0)])).collect())
    }

    fn column_entries(&self, st: &[usize], center: usize) -> Result<Vec<(usize, usize, f64)>> {
        let n = st.len();
        let m = self.basis.len();
        let b = self.bordered(st);
        let pos = st.iter().position(|&i| i == center).expect("stencil contains its centre");
        let rhs = Mat::from_fn(n + m, 1, |i, _| if i == pos { 1.0 } else { 0.0 });
        let coef = solve_linear(b.as_ref(), rhs.as_ref())?;
        Ok(st
            .iter()
            .map(|&row| {
                let ap = self.applied_row(st, row);
                let v: f64 = ap.iter().enumerate().map(|(i, a)| a * coef[(i, 0)]).sum();
                (row, center, v)
            })
            .collect())
    }
}

/// Sparse local DM in coordinate form, entries sorted by (column, row).
#[derive(Debug, Clone)]
pub struct LocalDm {
    n_points: usize,
    entries: Vec<(usize, usize, f64)>,
    stencils: StencilSet,
    orientation: Orientation,
}

impl LocalDm {
    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn stencils(&self) -> &StencilSet {
        &self.stencils
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = Mat::zeros(self.n_points, self.n_points);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn nnz_per_column(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_points];
        for &(_, c, _) in &self.entries {
            out[c] += 1;
        }
        out
    }

    pub fn nnz_per_row(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_points];
        for &(r, _, _) in &self.entries {
            out[r] += 1;
        }
        out
    }

    /// `row col value` triplets, one per line, 0-based.
    pub fn to_triplets(&self) -> String {
        let mut s = String::with_capacity(self.entries.len() * 32);
        for &(r, c, v) in &self.entries {
            let _ = writeln!(s, "{r} {c} {v:.17e}");
        }
        s
    }
}

/// Local DM from stencils of parameter `K`.
pub fn assemble_local_dm(
    kernel: &ZonalKernel,
    op: &SpectralOperator,
    x: &PointSet,
    k: f64,
    mtilde: usize,
    orientation: Orientation,
) -> Result<LocalDm> {
    let stencils = build_stencils(x, k, mtilde)?;
    assemble_with_stencils(kernel, op, x, stencils, mtilde, orientation)
}

pub fn assemble_with_stencils(
    kernel: &ZonalKernel,
    op: &SpectralOperator,
    x: &PointSet,
    stencils: StencilSet,
    mtilde: usize,
    orientation: Orientation,
) -> Result<LocalDm> {
    let compat = check_compatibility(kernel, op, mtilde)?;
    if !compat.accepted {
        return Err(Error::Incompatible(compat.diagnostic));
    }
    if stencils.stencils.len() != x.len() {
        return Err(Error::Dimension(format!(
            "{} stencils for {} nodes",
            stencils.stencils.len(),
            x.len()
        )));
    }
    let basis = HarmonicBasisEnumeration::below(mtilde);
    let problem = LocalProblem {
        x,
        kernel,
        psi: apply_operator(kernel, op)?,
        lambda: basis.iter().map(|idx| op.eigenvalue(idx.degree())).collect(),
        basis,
    };
    let parts = stencils
        .stencils
        .par_iter()
        .enumerate()
        .map(|(j, st)| {
            let r = match orientation {
                Orientation::Row => problem.row_weights(st, j),
                Orientation::Column => problem.column_entries(st, j),
            };
            r.map_err(|e| Error::Stencil {
                index: j,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut entries: Vec<(usize, usize, f64)> = parts.into_iter().flatten().collect();
    entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    Ok(LocalDm {
        n_points: x.len(),
        entries,
        stencils,
        orientation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_fibonacci;
    use crate::global_dm::global_dm_cpd;
    use crate::harmonics::vandermonde;
    use crate::kernels::{operator_from_poly, surface_spline};
    use crate::linalg::{frobenius, spectral_norm};

    fn neg_lap() -> SpectralOperator {
        operator_from_poly(&[0.0, -1.0]).unwrap()
    }

    #[test]
    fn stencil_size_examples() {
        assert_eq!(stencil_size(5.0, 4097, 3), 248);
        assert_eq!(stencil_size(0.01, 4097, 3), 10);
        assert_eq!(stencil_size(1e3, 4097, 3), 4097);
    }

    #[test]
    fn stencils_contain_their_centres_and_overlap() {
        let x = generate_fibonacci(101).unwrap();
        let s = build_stencils(&x, 3.0, 3).unwrap();
        assert!(s.n >= 7);
        for (j, st) in s.stencils.iter().enumerate() {
            assert_eq!(st[0], j);
            assert_eq!(st.len(), s.n);
            // the nearest neighbour's stencil shares points with this one
            let other = &s.stencils[st[1]];
            assert!(st.iter().any(|i| other.contains(i)));
        }
        let full = build_stencils(&x, 1e3, 3).unwrap();
        assert!(full.stencils.iter().all(|st| st.len() == 101));
    }

    #[test]
    fn full_stencil_matches_global_dm() {
        let x = generate_fibonacci(101).unwrap();
        let ss3 = surface_spline(3).unwrap();
        let global = global_dm_cpd(&ss3, &neg_lap(), &x, 3).unwrap();
        let gn = spectral_norm(global.matrix().as_ref());
        for orientation in [Orientation::Row, Orientation::Column] {
            let local = assemble_local_dm(&ss3, &neg_lap(), &x, 1e3, 3, orientation).unwrap();
            let d = spectral_norm((local.to_dense() - global.matrix()).as_ref());
            assert!(d <= 1e-7 * gn, "{orientation:?}: {d}");
        }
    }

    #[test]
    fn column_centre_entry_with_identity_operator() {
        let x = generate_fibonacci(101).unwrap();
        let ss3 = surface_spline(3).unwrap();
        let id = operator_from_poly(&[1.0]).unwrap();
        let local = assemble_local_dm(&ss3, &id, &x, 3.0, 3, Orientation::Column).unwrap();
        let d = local.to_dense();
        for j in 0..101 {
            assert!((d[(j, j)] - 1.0).abs() <= 1e-9);
        }
        assert!(local.nnz_per_column().iter().all(|&c| c <= local.stencils().n));
    }

    #[test]
    fn rows_are_exact_on_low_degree_harmonics() {
        let x = generate_fibonacci(201).unwrap();
        let ss3 = surface_spline(3).unwrap();
        let local = assemble_local_dm(&ss3, &neg_lap(), &x, 3.0, 3, Orientation::Row).unwrap();
        assert!(local.nnz_per_row().iter().all(|&c| c <= local.stencils().n));
        let basis = HarmonicBasisEnumeration::below(3);
        let p = vandermonde(&x, &basis).unwrap();
        let mp = local.to_dense() * &p;
        for (j, idx) in basis.iter().enumerate() {
            let lam = neg_lap().eigenvalue(idx.degree());
            for i in 0..201 {
                let want = lam * p[(i, j)];
                assert!((mp[(i, j)] - want).abs() <= 1e-7 * (want.abs() + 1.0));
            }
        }
    }

    #[test]
    fn error_shrinks_with_stencil_parameter() {
        let x = generate_fibonacci(401).unwrap();
        let ss3 = surface_spline(3).unwrap();
        let global = global_dm_cpd(&ss3, &neg_lap(), &x, 3).unwrap();
        let errs: Vec<f64> = [3.0, 4.0, 5.0, 6.0]
            .iter()
            .map(|&k| {
                let l = assemble_local_dm(&ss3, &neg_lap(), &x, k, 3, Orientation::Row).unwrap();
                frobenius((l.to_dense() - global.matrix()).as_ref())
            })
            .collect();
        let inversions = errs.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(inversions <= 1, "{errs:?}");
    }

    #[test]
    fn triplet_export_is_sorted_by_column() {
        let x = generate_fibonacci(51).unwrap();
        let local = assemble_local_dm(&surface_spline(3).unwrap(), &neg_lap(), &x, 2.0, 3, Orientation::Row).unwrap();
        let text = local.to_triplets();
        let keys: Vec<(usize, usize)> = text
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split(' ').collect();
                (f[1].parse().unwrap(), f[0].parse().unwrap())
            })
            .collect();
        assert_eq!(keys.len(), local.nnz());
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn unisolvency_failure_names_the_stencil() {
        let x = generate_fibonacci(51).unwrap();
        let ss3 = surface_spline(3).unwrap();
        let mut st = build_stencils(&x, 2.0, 3).unwrap();
        // collapse stencil 4 onto too few distinct nodes for degree-2 harmonics
        st.stencils[4] = vec![4, 5, 6];
        match assemble_with_stencils(&ss3, &neg_lap(), &x, st, 3, Orientation::Row) {
            Err(Error::Stencil { index, .. }) => assert_eq!(index, 4),
            other => panic!("{other:?}"),
        }
    }
}
