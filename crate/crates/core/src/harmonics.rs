//! Real orthonormal spherical harmonics on S², Legendre polynomials and the
//! harmonic Vandermonde matrix.

use std::f64::consts::PI;

use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{PointSet, SpherePoint};

/// Highest degree supported by [`eval_harmonic`].
pub const MAX_DEGREE: usize = 150;

/// Eigenvalue `ν_ℓ = −ℓ(ℓ + d − 1)` of the Laplace-Beltrami operator on S^d.
pub fn laplace_eigenvalue(degree: usize, dim: usize) -> f64 {
    let l = degree as f64;
    -l * (l + dim as f64 - 1.0)
}

/// Dimension of the degree-ℓ eigenspace on S^d,
/// `(2ℓ + d − 1) Γ(ℓ + d − 1) / (Γ(ℓ + 1) Γ(d))`.
pub fn eigenspace_dim(degree: usize, dim: usize) -> usize {
    assert!(dim >= 1, "sphere dimension must be >= 1");
    if degree == 0 {
        return 1;
    }
    // N_ℓ = (2ℓ+d−1)/(ℓ+d−1) · C(ℓ+d−1, ℓ), kept in integers
    let (l, d) = (degree as u128, dim as u128);
    let mut binom: u128 = 1;
    for i in 1..=l {
        binom = binom * (i + d - 1) / i;
    }
    ((2 * l + d - 1) * binom / (l + d - 1)) as usize
}

/// `dim Π_m` on S²: all harmonics of degree below `m`, i.e. `m²`.
pub fn polynomial_space_dim(mtilde: usize) -> usize {
    mtilde * mtilde
}

/// Legendre polynomial with `P_ℓ(1) = 1` by the three-term recurrence.
pub fn legendre(degree: usize, t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    let mut p0 = 1.0;
    if degree == 0 {
        return p0;
    }
    let mut p1 = t;
    for k in 1..degree {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// All Legendre values `P_0(t) … P_L(t)`.
pub fn legendre_all(max_degree: usize, t: f64) -> Vec<f64> {
    let t = t.clamp(-1.0, 1.0);
    let mut out = Vec::with_capacity(max_degree + 1);
    out.push(1.0);
    if max_degree >= 1 {
        out.push(t);
    }
    for k in 1..max_degree {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * t * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Angular part of a real harmonic at a given order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trig {
    Zonal,
    Cos,
    Sin,
}

/// Degree ℓ and order μ ∈ 1..=2ℓ+1 of a real spherical harmonic. Order 1 is
/// the zonal harmonic; orders 2k and 2k+1 are the cosine and sine harmonics
/// of azimuthal number k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    degree: usize,
    order: usize,
}

impl HarmonicIndex {
    pub fn new(degree: usize, order: usize) -> Result<Self> {
        if order < 1 || order > 2 * degree + 1 {
            return Err(Error::InvalidInput(format!(
                "order {order} outside 1..={} for degree {degree}",
                2 * degree + 1
            )));
        }
        Ok(Self { degree, order })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Azimuthal number and angular factor.
    pub fn azimuth(&self) -> (usize, Trig) {
        if self.order == 1 {
            (0, Trig::Zonal)
        } else if self.order % 2 == 0 {
            (self.order / 2, Trig::Cos)
        } else {
            ((self.order - 1) / 2, Trig::Sin)
        }
    }
}

/// Degree-major enumeration `j ↔ (ℓ, μ)` of every harmonic with ℓ ≤ max_degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarmonicBasisEnumeration {
    max_degree: Option<usize>,
    indices: Vec<HarmonicIndex>,
}

impl HarmonicBasisEnumeration {
    /// Harmonics of degree `≤ max_degree`.
    pub fn new(max_degree: usize) -> Self {
        Self::below(max_degree + 1)
    }

    /// Harmonics of degree `< mtilde`, spanning `Π_{m̃−1}`; empty for m̃ = 0.
    pub fn below(mtilde: usize) -> Self {
        let mut indices = Vec::with_capacity(mtilde * mtilde);
        for l in 0..mtilde {
            for mu in 1..=2 * l + 1 {
                indices.push(HarmonicIndex { degree: l, order: mu });
            }
        }
        Self {
            max_degree: mtilde.checked_sub(1),
            indices,
        }
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, j: usize) -> HarmonicIndex {
        self.indices[j]
    }

    /// Position of `(ℓ, μ)` in the enumeration.
    pub fn position(&self, idx: HarmonicIndex) -> Option<usize> {
        let j = idx.degree * idx.degree + idx.order - 1;
        (j < self.indices.len()).then_some(j)
    }

    pub fn iter(&self) -> impl Iterator<Item = &HarmonicIndex> {
        self.indices.iter()
    }

    /// Degrees of the enumerated harmonics, in order.
    pub fn degrees(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i.degree).collect()
    }
}

/// Fully normalised associated Legendre values `P̄_ℓ^k(cos θ)` for all
/// `k ≤ ℓ ≤ L`, stored row-major in `out[ℓ][k]`. The normalisation includes
/// `√((2ℓ+1)/(4π) (ℓ−k)!/(ℓ+k)!)`, so the zonal harmonic is `P̄_ℓ^0` and the
/// non-zonal real harmonics are `√2 P̄_ℓ^k cos(kφ)`, `√2 P̄_ℓ^k sin(kφ)`.
fn normalized_assoc_legendre(max_degree: usize, cos_t: f64, sin_t: f64) -> Vec<Vec<f64>> {
    let mut p: Vec<Vec<f64>> = (0..=max_degree).map(|l| vec![0.0; l + 1]).collect();
    p[0][0] = 1.0 / (4.0 * PI).sqrt();
    for k in 1..=max_degree {
        let kf = k as f64;
        p[k][k] = ((2.0 * kf + 1.0) / (2.0 * kf)).sqrt() * sin_t * p[k - 1][k - 1];
    }
    for k in 0..max_degree {
        let kf = k as f64;
        p[k + 1][k] = (2.0 * kf + 3.0).sqrt() * cos_t * p[k][k];
    }
    for k in 0..=max_degree {
        let kf = k as f64;
        for l in (k + 2)..=max_degree {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - kf * kf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - kf * kf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[l][k] = a * (cos_t * p[l - 1][k] - b * p[l - 2][k]);
        }
    }
    p
}

fn harmonic_from_table(idx: HarmonicIndex, table: &[Vec<f64>], lon: f64) -> f64 {
    let (k, trig) = idx.azimuth();
    let p = table[idx.degree][k];
    match trig {
        Trig::Zonal => p,
        Trig::Cos => std::f64::consts::SQRT_2 * p * (k as f64 * lon).cos(),
        Trig::Sin => std::f64::consts::SQRT_2 * p * (k as f64 * lon).sin(),
    }
}

/// Real spherical harmonic `Y_ℓ^μ(x)`, orthonormal in L₂(S²).
pub fn eval_harmonic(idx: HarmonicIndex, x: &SpherePoint) -> Result<f64> {
    if idx.degree > MAX_DEGREE {
        return Err(Error::InvalidInput(format!(
            "harmonic degree {} exceeds supported maximum {MAX_DEGREE}",
            idx.degree
        )));
    }
    let sin_t = (x.x * x.x + x.y * x.y).sqrt();
    let lon = x.y.atan2(x.x);
    let table = normalized_assoc_legendre(idx.degree, x.z, sin_t);
    Ok(harmonic_from_table(idx, &table, lon))
}

/// Values of every enumerated harmonic at one point.
pub fn eval_basis(basis: &HarmonicBasisEnumeration, x: &SpherePoint) -> Vec<f64> {
    let Some(max) = basis.max_degree() else {
        return Vec::new();
    };
    let sin_t = (x.x * x.x + x.y * x.y).sqrt();
    let lon = x.y.atan2(x.x);
    let table = normalized_assoc_legendre(max, x.z, sin_t);
    basis.iter().map(|&idx| harmonic_from_table(idx, &table, lon)).collect()
}

/// Vandermonde matrix `P_{k,j} = p_j(x_k)` (N × M).
pub fn vandermonde(x: &PointSet, basis: &HarmonicBasisEnumeration) -> Result<Mat<f64>> {
    if let Some(max) = basis.max_degree() {
        if max > MAX_DEGREE {
            return Err(Error::InvalidInput(format!(
                "harmonic degree {max} exceeds supported maximum {MAX_DEGREE}"
            )));
        }
    }
    let rows: Vec<Vec<f64>> = x.points().par_iter().map(|p| eval_basis(basis, p)).collect();
    Ok(Mat::from_fn(x.len(), basis.len(), |k, j| rows[k][j]))
}

/// Vandermonde matrix restricted to a subset of points (rows in `indices` order).
pub fn vandermonde_rows(
    x: &PointSet,
    indices: &[usize],
    basis: &HarmonicBasisEnumeration,
) -> Mat<f64> {
    let rows: Vec<Vec<f64>> = indices.iter().map(|&i| eval_basis(basis, x.point(i))).collect();
    Mat::from_fn(indices.len(), basis.len(), |k, j| rows[k][j])
}
