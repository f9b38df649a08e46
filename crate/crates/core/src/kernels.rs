//! Zonal kernels, polynomial operators in the Laplace-Beltrami operator, and
//! a small closed symbolic algebra for applying those operators to kernel
//! profiles.
//!
//! Profiles are stored as functions of `s = 1 − t`, so evaluating on a pair of
//! points can use `s = |x − y|²/2` directly instead of the cancellation-prone
//! `1 − x·y`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::SpherePoint;
use crate::harmonics::{laplace_eigenvalue, legendre};

/// Real polynomial, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn zero() -> Self {
        Poly(Vec::new())
    }

    pub fn monomial(k: usize, c: f64) -> Self {
        let mut v = vec![0.0; k + 1];
        v[k] = c;
        Poly(v)
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    /// Degree of the highest nonzero coefficient, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.0.iter().rposition(|&c| c != 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn scale(&self, c: f64) -> Poly {
        Poly(self.0.iter().map(|&a| a * c).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// Exact division by `s`; fails unless the constant term is zero.
    pub fn div_by_var(&self) -> Option<Poly> {
        if self.coeff(0) != 0.0 {
            return None;
        }
        Some(Poly(self.0.iter().skip(1).copied().collect()))
    }

    /// Re-expresses `q(t)` as a polynomial in `s = 1 − t`.
    pub fn t_to_s(&self) -> Poly {
        let one_minus_s = Poly(vec![1.0, -1.0]);
        let mut out = Poly::zero();
        for &c in self.0.iter().rev() {
            out = out.mul(&one_minus_s).add(&Poly(vec![c]));
        }
        out
    }

    fn trimmed(mut self) -> Poly {
        while self.0.last() == Some(&0.0) {
            self.0.pop();
        }
        self
    }
}

fn s_two_minus_s() -> Poly {
    Poly(vec![0.0, 2.0, -1.0])
}

fn two_one_minus_s() -> Poly {
    Poly(vec![2.0, -2.0])
}

/// Zonal Laplacian of a polynomial in `s`: `s(2−s)q″ + 2(1−s)q′`.
fn poly_laplacian(q: &Poly) -> Poly {
    let d1 = q.derivative();
    let d2 = d1.derivative();
    s_two_minus_s().mul(&d2).add(&two_one_minus_s().mul(&d1))
}

/// Legendre polynomial `P_ℓ` as a polynomial in `t`.
pub fn legendre_poly(degree: usize) -> Poly {
    let mut prev = Poly(vec![1.0]);
    if degree == 0 {
        return prev;
    }
    let mut cur = Poly(vec![0.0, 1.0]);
    let t = Poly(vec![0.0, 1.0]);
    for n in 1..degree {
        let nf = n as f64;
        let next = t
            .mul(&cur)
            .scale((2.0 * nf + 1.0) / (nf + 1.0))
            .add(&prev.scale(-nf / (nf + 1.0)));
        prev = cur;
        cur = next;
    }
    cur
}

/// A function of `t = x·y` of the form
/// `q₀(s) + q_log(s)·log s + Σ_k q_k(s)·(1 + ε²s)^(−1/2−k)` with `s = 1 − t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalFunction {
    poly: Poly,
    log_poly: Poly,
    imq: Vec<Poly>,
    eps: f64,
}

impl ZonalFunction {
    pub fn zero() -> Self {
        Self {
            poly: Poly::zero(),
            log_poly: Poly::zero(),
            imq: Vec::new(),
            eps: 0.0,
        }
    }

    /// Polynomial in `t`.
    pub fn polynomial_t(coeffs: &[f64]) -> Self {
        Self::polynomial_s(Poly(coeffs.to_vec()).t_to_s())
    }

    pub fn polynomial_s(q: Poly) -> Self {
        Self {
            poly: q,
            ..Self::zero()
        }
    }

    /// `q(s)·log s`, i.e. `q(1−t)·log(1−t)`.
    pub fn log_term_s(q: Poly) -> Self {
        Self {
            log_poly: q,
            ..Self::zero()
        }
    }

    /// `q(s)·(1 + ε²s)^(−1/2−k)`.
    pub fn imq_term_s(q: Poly, eps: f64, k: usize) -> Self {
        let mut imq = vec![Poly::zero(); k + 1];
        imq[k] = q;
        Self {
            imq,
            eps,
            ..Self::zero()
        }
    }

    pub fn poly_part(&self) -> &Poly {
        &self.poly
    }

    pub fn log_part(&self) -> &Poly {
        &self.log_poly
    }

    pub fn imq_parts(&self) -> &[Poly] {
        &self.imq
    }

    pub fn has_imq_terms(&self) -> bool {
        self.imq.iter().any(|q| !q.is_zero())
    }

    /// Finite at `t = 1`: the logarithmic part vanishes there.
    pub fn is_regular(&self) -> bool {
        self.log_poly.coeff(0) == 0.0
    }

    pub fn add(&self, other: &ZonalFunction) -> Result<ZonalFunction> {
        let eps = match (self.has_imq_terms(), other.has_imq_terms()) {
            (true, true) if self.eps != other.eps => {
                return Err(Error::KernelAlgebra(format!(
                    "cannot add inverse multiquadric terms with different shapes {} and {}",
                    self.eps, other.eps
                )))
            }
            (true, _) => self.eps,
            (_, true) => other.eps,
            _ => 0.0,
        };
        let n = self.imq.len().max(other.imq.len());
        let imq = (0..n)
            .map(|k| {
                let a = self.imq.get(k).cloned().unwrap_or_default();
                let b = other.imq.get(k).cloned().unwrap_or_default();
                a.add(&b)
            })
            .collect();
        Ok(ZonalFunction {
            poly: self.poly.add(&other.poly),
            log_poly: self.log_poly.add(&other.log_poly),
            imq,
            eps,
        })
    }

    pub fn scale(&self, c: f64) -> ZonalFunction {
        ZonalFunction {
            poly: self.poly.scale(c),
            log_poly: self.log_poly.scale(c),
            imq: self.imq.iter().map(|q| q.scale(c)).collect(),
            eps: self.eps,
        }
    }

    /// Value at `s = 1 − t ∈ [0, 2]`. At `s = 0` the logarithmic part uses its
    /// limit, which is 0 for regular functions and −∞ otherwise.
    pub fn eval_s(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 2.0);
        let mut v = self.poly.eval(s);
        if !self.log_poly.is_zero() {
            if s > 0.0 {
                v += self.log_poly.eval(s) * s.ln();
            } else if !self.is_regular() {
                return f64::NEG_INFINITY * self.log_poly.coeff(0).signum();
            }
        }
        if self.has_imq_terms() {
            let u = 1.0 + self.eps * self.eps * s;
            let r = 1.0 / u.sqrt();
            let inv_u = 1.0 / u;
            let mut w = r;
            for q in &self.imq {
                v += q.eval(s) * w;
                w *= inv_u;
            }
        }
        v
    }

    pub fn eval_t(&self, t: f64) -> f64 {
        self.eval_s(1.0 - t.clamp(-1.0, 1.0))
    }

    pub fn eval_pair(&self, x: &SpherePoint, y: &SpherePoint) -> f64 {
        self.eval_s(x.half_chord_sq(y))
    }

    /// Zonal Laplace-Beltrami operator on S²: `(1−t²)f″ − 2t f′`.
    pub fn laplacian(&self) -> Result<ZonalFunction> {
        if !self.is_regular() {
            return Err(Error::KernelAlgebra(format!(
                "log term with polynomial {:?} is not divisible by (1 - t)",
                self.log_poly.0
            )));
        }
        // Δ(q log s) = (Δq) log s + 2(2−s)q′ − q
        let q = &self.log_poly;
        let from_log = Poly(vec![4.0, -2.0]).mul(&q.derivative()).add(&q.scale(-1.0));
        let poly = poly_laplacian(&self.poly).add(&from_log).trimmed();
        let log_poly = poly_laplacian(q).trimmed();

        let e2 = self.eps * self.eps;
        let mut imq = vec![Poly::zero(); if self.has_imq_terms() { self.imq.len() + 2 } else { 0 }];
        if self.has_imq_terms() {
            for (k, p) in self.imq.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let a = 0.5 + k as f64;
                let d1 = p.derivative();
                imq[k] = imq[k].add(&poly_laplacian(p));
                let mid = s_two_minus_s()
                    .mul(&d1)
                    .scale(2.0)
                    .add(&two_one_minus_s().mul(p))
                    .scale(-a * e2);
                imq[k + 1] = imq[k + 1].add(&mid);
                imq[k + 2] = imq[k + 2].add(&s_two_minus_s().mul(p).scale(a * (a + 1.0) * e2 * e2));
            }
        }
        let imq = imq.into_iter().map(Poly::trimmed).collect();
        Ok(ZonalFunction {
            poly,
            log_poly,
            imq,
            eps: self.eps,
        })
    }

    /// Derivative with respect to `t`.
    pub fn derivative_t(&self) -> Result<ZonalFunction> {
        let q = &self.log_poly;
        let q_over_s = q.div_by_var().ok_or_else(|| {
            Error::KernelAlgebra(format!(
                "log term with polynomial {:?} is not divisible by (1 - t)",
                q.0
            ))
        })?;
        // d/dt = −d/ds
        let poly = self.poly.derivative().add(&q_over_s).scale(-1.0);
        let log_poly = q.derivative().scale(-1.0);
        let e2 = self.eps * self.eps;
        let mut imq = vec![Poly::zero(); if self.has_imq_terms() { self.imq.len() + 1 } else { 0 }];
        if self.has_imq_terms() {
            for (k, p) in self.imq.iter().enumerate() {
                let a = 0.5 + k as f64;
                imq[k] = imq[k].add(&p.derivative().scale(-1.0));
                imq[k + 1] = imq[k + 1].add(&p.scale(a * e2));
            }
        }
        Ok(ZonalFunction {
            poly: poly.trimmed(),
            log_poly: log_poly.trimmed(),
            imq: imq.into_iter().map(Poly::trimmed).collect(),
            eps: self.eps,
        })
    }
}

/// Kernel families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    SurfaceSpline { m: usize },
    InverseMultiquadric { eps: f64 },
}

/// Zonal kernel `Φ(x, y) = g(x·y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalKernel {
    kind: KernelKind,
    profile: ZonalFunction,
}

/// `(1−t)^(m−1)·log(1−t)`, conditionally positive definite of order `m`.
pub fn surface_spline(m: usize) -> Result<ZonalKernel> {
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "surface spline order must be at least 2, got {m}"
        )));
    }
    Ok(ZonalKernel {
        kind: KernelKind::SurfaceSpline { m },
        profile: ZonalFunction::log_term_s(Poly::monomial(m - 1, 1.0)),
    })
}

/// `(1 + ε²(1−t))^(−1/2)`, positive definite.
pub fn inverse_multiquadric(eps: f64) -> Result<ZonalKernel> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "inverse multiquadric shape must be positive, got {eps}"
        )));
    }
    Ok(ZonalKernel {
        kind: KernelKind::InverseMultiquadric { eps },
        profile: ZonalFunction::imq_term_s(Poly(vec![1.0]), eps, 0),
    })
}

impl ZonalKernel {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn profile(&self) -> &ZonalFunction {
        &self.profile
    }

    /// Minimal order of conditional positive definiteness.
    pub fn cpd_order(&self) -> usize {
        match self.kind {
            KernelKind::SurfaceSpline { m } => m,
            KernelKind::InverseMultiquadric { .. } => 0,
        }
    }

    /// `σ ∈ {±1}` such that `σ·Φ` is conditionally positive definite. The
    /// surface spline profile carries the sign `(−1)^m` in its expansion.
    pub fn definiteness_sign(&self) -> f64 {
        match self.kind {
            KernelKind::SurfaceSpline { m } if m % 2 == 1 => -1.0,
            _ => 1.0,
        }
    }

    /// The order parameter reported in outputs (`m` or 0).
    pub fn order_label(&self) -> usize {
        self.cpd_order()
    }

    pub fn eval_t(&self, t: f64) -> f64 {
        self.profile.eval_t(t)
    }

    pub fn eval_pair(&self, x: &SpherePoint, y: &SpherePoint) -> f64 {
        self.profile.eval_pair(x, y)
    }

    /// Mercer coefficient `c_ℓ`.
    pub fn mercer_coeff(&self, degree: usize) -> Result<f64> {
        match self.kind {
            KernelKind::SurfaceSpline { m } => surface_spline_coeff(m, degree),
            KernelKind::InverseMultiquadric { eps } => Ok(imq_coeff(eps, degree)),
        }
    }

    /// Lowest degree at which the Mercer series is defined.
    pub fn series_start(&self) -> usize {
        self.cpd_order()
    }
}

impl fmt::Display for ZonalKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelKind::SurfaceSpline { m } => write!(f, "ss:m={m}"),
            KernelKind::InverseMultiquadric { eps } => write!(f, "imq:eps={eps}"),
        }
    }
}

impl FromStr for ZonalKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unrecognised kernel '{s}', expected ss:m=<int> or imq:eps=<real>"));
        let (family, param) = s.trim().split_once(':').ok_or_else(bad)?;
        let (key, value) = param.split_once('=').ok_or_else(bad)?;
        match (family.trim(), key.trim()) {
            ("ss", "m") => surface_spline(value.trim().parse().map_err(|_| bad())?),
            ("imq", "eps") => inverse_multiquadric(value.trim().parse().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }
}

fn surface_spline_coeff(m: usize, degree: usize) -> Result<f64> {
    if degree < m {
        return Err(Error::InvalidInput(format!(
            "surface spline coefficient needs degree >= {m}, got {degree}"
        )));
    }
    let nu = laplace_eigenvalue(degree, 2);
    let prod: f64 = (0..m).map(|j| nu + (j * (j + 1)) as f64).product();
    Ok(1.0 / prod.abs())
}

/// Legendre generating-function parameter `h` with
/// `(1 + ε²(1−t))^(−1/2) = √(2h)/ε · Σ h^ℓ P_ℓ(t)`.
fn imq_ratio(eps: f64) -> f64 {
    let beta = (1.0 + eps * eps) / (eps * eps);
    1.0 / (beta + (beta * beta - 1.0).sqrt())
}

fn imq_coeff(eps: f64, degree: usize) -> f64 {
    let h = imq_ratio(eps);
    let a = (2.0 * h).sqrt() / eps * h.powi(degree as i32);
    4.0 * PI * a / (2 * degree + 1) as f64
}

/// `2π ∫ g(t) P_ℓ(t) dt` by Gauss-Legendre quadrature with `64 + 2ℓ` nodes.
pub fn mercer_coeff_quadrature(kernel: &ZonalKernel, degree: usize) -> f64 {
    let rule = gauss_legendre(64 + 2 * degree);
    let integral: f64 = rule
        .iter()
        .map(|&(t, w)| w * kernel.eval_t(t) * legendre(degree, t))
        .sum();
    2.0 * PI * integral
}

/// Gauss-Legendre nodes and weights on [−1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = -(PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `Σ_{start ≤ ℓ ≤ ℓ_max} c_ℓ (2ℓ+1)/(4π) P_ℓ(t)`.
pub fn truncated_series_eval(kernel: &ZonalKernel, t: f64, max_degree: usize) -> f64 {
    let start = kernel.series_start();
    if max_degree < start {
        return 0.0;
    }
    let t = t.clamp(-1.0, 1.0);
    let mut sum = 0.0;
    let (mut p0, mut p1) = (1.0, t);
    for l in 0..=max_degree {
        let p = match l {
            0 => 1.0,
            1 => t,
            _ => {
                let lf = l as f64;
                let p2 = ((2.0 * lf - 1.0) * t * p1 - (lf - 1.0) * p0) / lf;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        if l >= start {
            let c = kernel.mercer_coeff(l).expect("degree at or above series start");
            sum += c * (2 * l + 1) as f64 / (4.0 * PI) * p;
        }
    }
    sum
}

/// `∫_0^2 s^n log s ds`.
fn log_moment(n: usize) -> f64 {
    let k = (n + 1) as f64;
    2f64.powi(n as i32 + 1) * (std::f64::consts::LN_2 / k - 1.0 / (k * k))
}

/// Exact Legendre coefficient `(2ℓ+1)/2 ∫ f P_ℓ dt` for functions without
/// inverse multiquadric terms.
pub fn legendre_coefficient_exact(f: &ZonalFunction, degree: usize) -> Result<f64> {
    if f.has_imq_terms() {
        return Err(Error::KernelAlgebra(
            "exact Legendre coefficients need polynomial and log terms only".into(),
        ));
    }
    let p = legendre_poly(degree).t_to_s();
    let poly_int: f64 = f
        .poly
        .mul(&p)
        .0
        .iter()
        .enumerate()
        .map(|(n, &c)| c * 2f64.powi(n as i32 + 1) / (n + 1) as f64)
        .sum();
    let log_int: f64 = f
        .log_poly
        .mul(&p)
        .0
        .iter()
        .enumerate()
        .map(|(n, &c)| c * log_moment(n))
        .sum();
    Ok((2 * degree + 1) as f64 / 2.0 * (poly_int + log_int))
}

/// Projection of the kernel profile onto Legendre polynomials of degree below
/// the series start, evaluated at `t`. Zero for positive definite kernels.
pub fn low_degree_projection(kernel: &ZonalKernel, t: f64) -> Result<f64> {
    let start = kernel.series_start();
    let mut v = 0.0;
    for l in 0..start {
        v += legendre_coefficient_exact(kernel.profile(), l)? * legendre(l, t);
    }
    Ok(v)
}

/// `𝓛 = p(Δ)` with `p(x) = Σ a_i x^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    coeffs: Vec<f64>,
}

pub fn operator_from_poly(coeffs: &[f64]) -> Result<SpectralOperator> {
    if coeffs.is_empty() {
        return Err(Error::InvalidInput("operator polynomial has no coefficients".into()));
    }
    if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
        return Err(Error::InvalidInput(format!("operator coefficient {c} is not finite")));
    }
    Ok(SpectralOperator {
        coeffs: coeffs.to_vec(),
    })
}

impl SpectralOperator {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn poly(&self) -> Poly {
        Poly(self.coeffs.clone())
    }

    /// Degree `L` of `p`; the zero polynomial counts as degree 0.
    pub fn degree(&self) -> usize {
        self.poly().degree().unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.poly().eval(x)
    }

    /// `λ_ℓ = p(−ℓ(ℓ+1))`.
    pub fn eigenvalue(&self, degree: usize) -> f64 {
        self.eval(laplace_eigenvalue(degree, 2))
    }

    /// `Ψ = p(Δ)f`.
    pub fn apply(&self, f: &ZonalFunction) -> Result<ZonalFunction> {
        let mut out = ZonalFunction::zero();
        let mut power = f.clone();
        for (i, &a) in self.coeffs.iter().enumerate() {
            if i > 0 {
                power = power.laplacian()?;
            }
            if a != 0.0 {
                out = out.add(&power.scale(a))?;
            }
        }
        Ok(out)
    }
}

impl fmt::Display for SpectralOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        write!(f, "p={}", parts.join(","))
    }
}

impl FromStr for SpectralOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim();
        let body = body.strip_prefix("p=").unwrap_or(body);
        let coeffs = body
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad operator coefficient '{c}' in '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        operator_from_poly(&coeffs)
    }
}

/// Outcome of the kernel/operator compatibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct Compatibility {
    pub accepted: bool,
    pub diagnostic: String,
}

pub fn check_compatibility(
    kernel: &ZonalKernel,
    op: &SpectralOperator,
    mtilde: usize,
) -> Result<Compatibility> {
    if mtilde < kernel.cpd_order() {
        return Err(Error::InvalidInput(format!(
            "CPD order {mtilde} is below the kernel's minimal order {}",
            kernel.cpd_order()
        )));
    }
    let l = op.degree();
    Ok(match kernel.kind() {
        KernelKind::SurfaceSpline { m } => {
            let accepted = l + 1 < m;
            Compatibility {
                accepted,
                diagnostic: format!(
                    "operator degree L = {l} {} the bound L < m − d/2 = {}",
                    if accepted { "satisfies" } else { "violates" },
                    m - 1
                ),
            }
        }
        KernelKind::InverseMultiquadric { .. } => Compatibility {
            accepted: true,
            diagnostic: format!(
                "operator degree L = {l}; coefficients decay exponentially so any L is admissible"
            ),
        },
    })
}

/// Applied kernel `Ψ = 𝓛Φ`; fails if the pair is incompatible.
pub fn apply_operator(kernel: &ZonalKernel, op: &SpectralOperator) -> Result<ZonalFunction> {
    let c = check_compatibility(kernel, op, kernel.cpd_order())?;
    if !c.accepted {
        return Err(Error::Incompatible(c.diagnostic));
    }
    let psi = op.apply(kernel.profile())?;
    if !psi.is_regular() {
        return Err(Error::KernelAlgebra(
            "applied kernel is singular at coincident points".into(),
        ));
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fd_laplacian(f: &ZonalFunction, t: f64) -> f64 {
        let h = 1e-4;
        let fp = (f.eval_t(t + h) - f.eval_t(t - h)) / (2.0 * h);
        let fpp = (f.eval_t(t + h) - 2.0 * f.eval_t(t) + f.eval_t(t - h)) / (h * h);
        (1.0 - t * t) * fpp - 2.0 * t * fp
    }

    #[test]
    fn profile_examples() {
        let ss3 = surface_spline(3).unwrap();
        assert_abs_diff_eq!(ss3.eval_t(-1.0), 4.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(ss3.eval_t(0.0), 0.0, epsilon = 1e-15);
        assert_eq!(surface_spline(2).unwrap().eval_t(1.0), 0.0);
        assert!(surface_spline(1).is_err());

        for eps in [0.5, 1.0, 3.0] {
            assert_eq!(inverse_multiquadric(eps).unwrap().eval_t(1.0), 1.0);
        }
        assert_abs_diff_eq!(inverse_multiquadric(1.0).unwrap().eval_t(-1.0), 0.5773502691896258, epsilon = 1e-15);
        assert_abs_diff_eq!(inverse_multiquadric(2.0).unwrap().eval_t(0.0), 0.4472135954999579, epsilon = 1e-15);
        assert!(inverse_multiquadric(0.0).is_err());
        assert!(inverse_multiquadric(-1.0).is_err());
    }

    #[test]
    fn operator_examples() {
        assert_eq!(operator_from_poly(&[0.0, -1.0]).unwrap().eigenvalue(2), 6.0);
        assert_eq!(operator_from_poly(&[1.0, -1.0]).unwrap().eigenvalue(0), 1.0);
        assert_eq!(operator_from_poly(&[0.0, 0.0, 1.0]).unwrap().eigenvalue(1), 4.0);
        assert!(operator_from_poly(&[]).is_err());
        let op: SpectralOperator = "p=0,-1".parse().unwrap();
        assert_eq!(op.coeffs(), &[0.0, -1.0]);
        assert_eq!(op.to_string(), "p=0,-1");
        assert!("p=0,x".parse::<SpectralOperator>().is_err());
    }

    #[test]
    fn kernel_strings() {
        let k: ZonalKernel = "ss:m=3".parse().unwrap();
        assert_eq!(k.kind(), KernelKind::SurfaceSpline { m: 3 });
        assert_eq!(k.to_string(), "ss:m=3");
        let k: ZonalKernel = "imq:eps=2.0".parse().unwrap();
        assert_eq!(k.kind(), KernelKind::InverseMultiquadric { eps: 2.0 });
        assert_eq!(k.to_string(), "imq:eps=2");
        for bad in ["gauss:eps=1", "ss:m=1", "imq:eps=-1", "ss", "ss:q=3"] {
            assert!(bad.parse::<ZonalKernel>().is_err(), "{bad}");
        }
    }

    #[test]
    fn compatibility_examples() {
        let ss3 = surface_spline(3).unwrap();
        let neg_lap = operator_from_poly(&[0.0, -1.0]).unwrap();
        let bih = operator_from_poly(&[0.0, 0.0, 1.0]).unwrap();
        assert!(check_compatibility(&ss3, &neg_lap, 3).unwrap().accepted);
        let c = check_compatibility(&ss3, &bih, 3).unwrap();
        assert!(!c.accepted);
        assert!(c.diagnostic.contains("L = 2") && c.diagnostic.contains("L < m − d/2"));
        let imq = inverse_multiquadric(1.0).unwrap();
        let cube = operator_from_poly(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(check_compatibility(&imq, &cube, 0).unwrap().accepted);
        assert!(check_compatibility(&ss3, &neg_lap, 2).is_err());
        assert!(matches!(apply_operator(&ss3, &bih), Err(Error::Incompatible(_))));
    }

    #[test]
    fn laplacian_examples() {
        let t = ZonalFunction::polynomial_t(&[0.0, 1.0]);
        let lt = t.laplacian().unwrap();
        for x in [-0.7, 0.1, 0.9] {
            assert_abs_diff_eq!(lt.eval_t(x), -2.0 * x, epsilon = 1e-14);
        }
        let p2 = ZonalFunction::polynomial_t(&[-0.5, 0.0, 1.5]);
        let lp2 = p2.laplacian().unwrap();
        for x in [-0.7, 0.1, 0.9] {
            assert_abs_diff_eq!(lp2.eval_t(x), -6.0 * p2.eval_t(x), epsilon = 1e-13);
        }
        let g = surface_spline(3).unwrap().profile().clone();
        let lg = g.laplacian().unwrap();
        for x in [-0.9, 0.0, 0.9] {
            assert!((lg.eval_t(x) - fd_laplacian(&g, x)).abs() <= 1e-7 * (1.0 + lg.eval_t(x).abs()));
        }
    }

    #[test]
    fn eigenfunction_identity() {
        for l in 0..=6 {
            let p = ZonalFunction::polynomial_s(legendre_poly(l).t_to_s());
            let lp = p.laplacian().unwrap();
            let nu = laplace_eigenvalue(l, 2);
            for x in [-1.0, -0.4, 0.3, 1.0] {
                assert!((lp.eval_t(x) - nu * p.eval_t(x)).abs() <= 1e-11 * (1.0 + nu.abs()));
            }
            assert!(!lp.has_imq_terms() && lp.log_part().is_zero());
        }
    }

    #[test]
    fn imq_laplacian_matches_finite_differences() {
        let g = inverse_multiquadric(2.0).unwrap().profile().clone();
        let lg = g.laplacian().unwrap();
        let llg = lg.laplacian().unwrap();
        for x in [-0.9, -0.2, 0.4, 0.9] {
            assert!((lg.eval_t(x) - fd_laplacian(&g, x)).abs() <= 1e-6);
            assert!((llg.eval_t(x) - fd_laplacian(&lg, x)).abs() <= 1e-5 * (1.0 + llg.eval_t(x).abs()));
        }
    }

    #[test]
    fn applied_kernel_examples() {
        let ss3 = surface_spline(3).unwrap();
        let id = operator_from_poly(&[1.0]).unwrap();
        assert_eq!(apply_operator(&ss3, &id).unwrap().eval_t(-0.3), ss3.eval_t(-0.3));

        let neg_lap = operator_from_poly(&[0.0, -1.0]).unwrap();
        let psi = apply_operator(&ss3, &neg_lap).unwrap();
        let g = ss3.profile();
        let h = 1e-4;
        let gpp = (g.eval_t(h) - 2.0 * g.eval_t(0.0) + g.eval_t(-h)) / (h * h);
        assert!((psi.eval_t(0.0) + gpp).abs() <= 1e-7);
        let at_one = psi.eval_t(1.0);
        assert!(at_one.is_finite());
        assert!((psi.eval_t(1.0 - 1e-9) - at_one).abs() < 1e-6);
    }

    #[test]
    fn singular_log_terms_are_rejected() {
        let g = ZonalFunction::log_term_s(Poly(vec![1.0]));
        assert!(matches!(g.laplacian(), Err(Error::KernelAlgebra(_))));
        assert!(matches!(g.derivative_t(), Err(Error::KernelAlgebra(_))));
        // a second Laplacian of the m = 3 spline produces a singular result
        let two = surface_spline(3).unwrap().profile().laplacian().unwrap().laplacian().unwrap();
        assert!(!two.is_regular());
        assert!(two.laplacian().is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let fs = [
            surface_spline(4).unwrap().profile().clone(),
            inverse_multiquadric(1.5).unwrap().profile().clone(),
            ZonalFunction::polynomial_t(&[1.0, -2.0, 0.5]),
        ];
        for f in &fs {
            let d = f.derivative_t().unwrap();
            for x in [-0.8, 0.0, 0.7] {
                let h = 1e-6;
                let fd = (f.eval_t(x + h) - f.eval_t(x - h)) / (2.0 * h);
                assert!((d.eval_t(x) - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let rule = gauss_legendre(10);
        assert_abs_diff_eq!(rule.iter().map(|r| r.1).sum::<f64>(), 2.0, epsilon = 1e-14);
        let m18: f64 = rule.iter().map(|(x, w)| w * x.powi(18)).sum();
        assert_abs_diff_eq!(m18, 2.0 / 19.0, epsilon = 1e-14);
        let rule = gauss_legendre(200);
        assert_abs_diff_eq!(rule.iter().map(|r| r.1).sum::<f64>(), 2.0, epsilon = 1e-12);
        assert!(rule.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn surface_spline_coefficients() {
        let ss3 = surface_spline(3).unwrap();
        assert_abs_diff_eq!(ss3.mercer_coeff(3).unwrap(), 1.0 / 720.0, epsilon = 1e-18);
        assert!(ss3.mercer_coeff(2).is_err());
        let base = ss3.mercer_coeff(20).unwrap() * 20f64.powi(6);
        for l in 20..=200 {
            let v = ss3.mercer_coeff(l).unwrap() * (l as f64).powi(6) / base;
            assert!((0.5..=2.0).contains(&v));
        }
        for m in 2..6 {
            let k = surface_spline(m).unwrap();
            for l in m..40 {
                assert!(k.mercer_coeff(l).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn imq_coefficients() {
        let k = inverse_multiquadric(1.0).unwrap();
        for l in 5..=50 {
            let c = k.mercer_coeff(l).unwrap();
            assert!(c > 0.0);
            assert!(k.mercer_coeff(l + 1).unwrap() / c < 1.0);
        }
        for eps in [1.0, 2.0] {
            let k = inverse_multiquadric(eps).unwrap();
            for l in 0..12 {
                let q = mercer_coeff_quadrature(&k, l);
                let c = k.mercer_coeff(l).unwrap();
                assert!((q - c).abs() <= 1e-12 * (1.0 + c), "eps {eps} l {l}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn imq_series_reproduces_profile() {
        let k = inverse_multiquadric(1.0).unwrap();
        let r_series = truncated_series_eval(&k, 0.0, 60) / truncated_series_eval(&k, 1.0, 60);
        let r_closed = k.eval_t(0.0) / k.eval_t(1.0);
        assert!((r_series - r_closed).abs() <= 1e-4);
        for t in [-1.0, -0.5, 0.2, 1.0] {
            assert!((truncated_series_eval(&k, t, 60) - k.eval_t(t)).abs() <= 1e-12);
        }
        assert_eq!(truncated_series_eval(&surface_spline(3).unwrap(), 0.5, 2), 0.0);
    }

    #[test]
    fn low_degree_legendre_coefficients() {
        let g = surface_spline(3).unwrap().profile().clone();
        let want = [0.47975, -1.21958, 0.93987];
        for (l, w) in want.iter().enumerate() {
            assert!((legendre_coefficient_exact(&g, l).unwrap() - w).abs() <= 1e-4);
        }
        // higher coefficients match the Mercer series with constant −16π·4
        let k = surface_spline(3).unwrap();
        for l in 3..8 {
            let a = legendre_coefficient_exact(&g, l).unwrap();
            let c = k.mercer_coeff(l).unwrap() * (2 * l + 1) as f64 / (4.0 * PI);
            assert!((a / c + 64.0 * PI).abs() <= 1e-6 * 64.0 * PI);
        }
    }

    #[test]
    fn definiteness_sign_matches_expansion() {
        for m in 2..7 {
            let k = surface_spline(m).unwrap();
            for l in m..m + 5 {
                let a = legendre_coefficient_exact(k.profile(), l).unwrap();
                assert!(k.definiteness_sign() * a > 0.0, "m {m} l {l}: {a}");
            }
        }
        assert_eq!(inverse_multiquadric(1.0).unwrap().definiteness_sign(), 1.0);
    }

    #[test]
    fn surface_spline_series_ratio_is_constant() {
        let k = surface_spline(3).unwrap();
        let ratios: Vec<f64> = [-0.8, -0.3, 0.3]
            .iter()
            .map(|&t| {
                (k.eval_t(t) - low_degree_projection(&k, t).unwrap()) / truncated_series_eval(&k, t, 4000)
            })
            .collect();
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() <= 1e-3, "{ratios:?}");
        }
    }

    #[test]
    fn poly_helpers() {
        let p = Poly(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.eval(2.0), 17.0);
        assert_eq!(p.derivative(), Poly(vec![2.0, 6.0]));
        assert_eq!(p.degree(), Some(2));
        assert!(p.div_by_var().is_none());
        assert_eq!(Poly(vec![0.0, 4.0]).div_by_var(), Some(Poly(vec![4.0])));
        let q = p.t_to_s();
        for x in [-1.0, 0.3, 1.0] {
            assert_abs_diff_eq!(q.eval(1.0 - x), p.eval(x), epsilon = 1e-14);
        }
        for l in 0..8 {
            for x in [-0.9, 0.2, 0.75] {
                assert_abs_diff_eq!(legendre_poly(l).eval(x), legendre(l, x), epsilon = 1e-13);
            }
        }
    }

    proptest! {
        #[test]
        fn prop_positive_coefficients(m in 2usize..7, l in 0usize..120, eps in 0.1f64..5.0) {
            let k = surface_spline(m).unwrap();
            if l >= m.max(1) {
                prop_assert!(k.mercer_coeff(l).unwrap() > 0.0);
            }
            prop_assert!(inverse_multiquadric(eps).unwrap().mercer_coeff(l).unwrap() > 0.0);
        }

        #[test]
        fn prop_laplacian_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, t in -1.0f64..1.0) {
            let f = surface_spline(4).unwrap().profile().clone();
            let g = ZonalFunction::polynomial_t(&[0.3, -1.0, 2.0]);
            let lhs = f.scale(a).add(&g.scale(b)).unwrap().laplacian().unwrap().eval_t(t);
            let rhs = a * f.laplacian().unwrap().eval_t(t) + b * g.laplacian().unwrap().eval_t(t);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }
}
