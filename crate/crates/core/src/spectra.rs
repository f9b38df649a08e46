//! Spectra of differentiation matrices and the comparisons run on them:
//! the filtered max-min relative distance between local and global spectra,
//! tables of ‖R‖ against the separation radius, and rate fits.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::block_decomp::{
    bauer_fike_cpd, bauer_fike_diag, decompose, separation_gamma, sylvester_diagonalize,
};
use crate::error::{Error, Result};
use crate::geometry::{generate_family, separation_radius, Family, PointSet};
use crate::global_dm::global_dm_cpd;
use crate::kernels::{SpectralOperator, ZonalKernel};
use crate::linalg::{general_eig, spectral_norm, ComplexSpectrum};
use crate::local_dm::{assemble_local_dm, Orientation};
use faer::MatRef;

/// Denominators below this fraction of the reference spectral radius are
/// not used as match targets.
pub const NEAR_ZERO_TARGET: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub spectrum: ComplexSpectrum,
    pub spectral_radius: f64,
    pub max_abs_imag: f64,
    pub min_real: f64,
}

impl From<ComplexSpectrum> for SpectrumReport {
    fn from(spectrum: ComplexSpectrum) -> Self {
        let max_abs_imag = spectrum.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let min_real = spectrum.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        Self {
            spectral_radius: spectrum.radius(),
            max_abs_imag,
            min_real,
            spectrum,
        }
    }
}

pub fn spectrum_report(m: MatRef<'_, f64>) -> Result<SpectrumReport> {
    Ok(general_eig(m)?.into())
}

/// Copies of `λ_ℓ` removed per degree before comparing spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExclusionMultiplicity {
    /// One eigenvalue per degree.
    Single,
    /// `2ℓ + 1` eigenvalues per degree, the full eigenspace dimension.
    #[default]
    Full,
}

#[derive(Debug, Clone)]
pub struct DistanceReport {
    pub value: f64,
    pub excluded_local: Vec<Complex64>,
    pub excluded_global: Vec<Complex64>,
    /// Each retained local eigenvalue with its nearest retained target.
    pub matching: Vec<(Complex64, Complex64)>,
}

/// Removes, for each target in order, the `count` nearest remaining values.
fn exclude_nearest(values: &mut Vec<Complex64>, targets: &[(f64, usize)]) -> Vec<Complex64> {
    let mut removed = Vec::new();
    for &(t, count) in targets {
        for _ in 0..count {
            let best = values
                .iter()
                .enumerate()
                .map(|(i, z)| ((z - Complex64::new(t, 0.0)).norm(), i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            match best {
                Some((_, i)) => removed.push(values.remove(i)),
                None => break,
            }
        }
    }
    removed
}

fn exclusion_targets(op: &SpectralOperator, mtilde: usize, mult: ExclusionMultiplicity) -> Vec<(f64, usize)> {
    (0..mtilde)
        .map(|l| {
            let count = match mult {
                ExclusionMultiplicity::Single => 1,
                ExclusionMultiplicity::Full => 2 * l + 1,
            };
            (op.eigenvalue(l), count)
        })
        .collect()
}

/// `max_μ min_μ* |μ − μ*| / |μ*|` over local `μ` and global `μ*`, after
/// removing eigenvalues matched to `λ_ℓ`, `ℓ < m̃`, from both spectra.
pub fn filtered_spectra_distance(
    local: &SpectrumReport,
    global: &SpectrumReport,
    op: &SpectralOperator,
    mtilde: usize,
    mult: ExclusionMultiplicity,
) -> Result<DistanceReport> {
    let targets = exclusion_targets(op, mtilde, mult);
    let mut loc = local.spectrum.eigenvalues.clone();
    let mut glob = global.spectrum.eigenvalues.clone();
    let excluded_local = exclude_nearest(&mut loc, &targets);
    let excluded_global = exclude_nearest(&mut glob, &targets);
    let floor = NEAR_ZERO_TARGET * global.spectral_radius;
    let usable: Vec<Complex64> = glob.into_iter().filter(|z| z.norm() > floor).collect();
    if usable.is_empty() {
        return Err(Error::InvalidInput(
            "no eigenvalue of the reference spectrum is usable as a relative target".into(),
        ));
    }
    let matching: Vec<(Complex64, Complex64, f64)> = loc
        .par_iter()
        .map(|&mu| {
            usable
                .iter()
                .map(|&t| (mu, t, (mu - t).norm() / t.norm()))
                .min_by(|a, b| a.2.total_cmp(&b.2))
                .expect("nonempty targets")
        })
        .collect();
    let value = matching.iter().map(|m| m.2).fold(0.0, f64::max);
    Ok(DistanceReport {
        value,
        excluded_local,
        excluded_global,
        matching: matching.into_iter().map(|(a, b, _)| (a, b)).collect(),
    })
}

/// `max_μ min_μ* |μ − μ*|` with `μ` from `perturbed` and `μ*` from
/// `reference`, no exclusions.
pub fn max_min_distance_abs(perturbed: &ComplexSpectrum, reference: &ComplexSpectrum) -> f64 {
    perturbed
        .eigenvalues
        .par_iter()
        .map(|mu| {
            reference
                .iter()
                .map(|t| (mu - t).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RNormRow {
    pub n: usize,
    pub q: f64,
    /// `None` when the build for this `N` failed.
    pub norm_r: Option<f64>,
}

/// ‖R‖ of the global DM decomposition for each `N`.
pub fn r_norm_table(
    kernel: &ZonalKernel,
    op: &SpectralOperator,
    mtilde: usize,
    family: Family,
    n_list: &[usize],
) -> Vec<RNormRow> {
    n_list
        .par_iter()
        .map(|&n| {
            let Ok(x) = generate_family(family, n) else {
                return RNormRow { n, q: f64::NAN, norm_r: None };
            };
            r_norm_row(kernel, op, mtilde, &x)
        })
        .collect()
}

pub fn r_norm_row(kernel: &ZonalKernel, op: &SpectralOperator, mtilde: usize, x: &PointSet) -> RNormRow {
    let q = separation_radius(x);
    let norm_r = global_dm_cpd(kernel, op, x, mtilde)
        .and_then(|dm| decompose(&dm))
        .map(|bd| bd.norm_r())
        .ok();
    RNormRow { n: x.len(), q, norm_r }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// `log y = slope·log x + intercept`.
    Algebraic,
    /// `log y = slope·x + intercept`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
}

pub fn fit_rate(xs: &[f64], ys: &[f64], model: RateModel) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} abscissae and {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidInput(format!("a rate fit needs at least 3 points, got {}", xs.len())));
    }
    let log = |v: f64, what: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(v.ln())
        } else {
            Err(Error::InvalidInput(format!("{what} value {v} is not positive")))
        }
    };
    let u: Vec<f64> = match model {
        RateModel::Algebraic => xs.iter().map(|&x| log(x, "abscissa")).collect::<Result<_>>()?,
        RateModel::Exponential => xs.to_vec(),
    };
    let v: Vec<f64> = ys.iter().map(|&y| log(y, "ordinate")).collect::<Result<_>>()?;
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let suu: f64 = u.iter().map(|a| (a - mu).powi(2)).sum();
    if suu == 0.0 {
        return Err(Error::InvalidInput("rate fit abscissae are all equal".into()));
    }
    let suv: f64 = u.iter().zip(&v).map(|(a, b)| (a - mu) * (b - mv)).sum();
    let slope = suv / suu;
    let intercept = mv - slope * mu;
    let rms = (u
        .iter()
        .zip(&v)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        slope,
        intercept,
        rms_residual: rms,
    })
}

/// One row of the local-versus-global comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceRow {
    pub k: f64,
    pub n: usize,
    pub dist_rel: f64,
    pub dist_abs: f64,
    /// `‖M − M̄‖₂`.
    pub diff_norm: f64,
    pub bound_prop42: f64,
    /// Present when the operator separates the spectra and the Sylvester
    /// step is solvable.
    pub bound_thm44: Option<f64>,
}

/// Compares local DMs for each `K` against the global DM on the same nodes.
pub fn distance_study(
    kernel: &ZonalKernel,
    op: &SpectralOperator,
    x: &PointSet,
    mtilde: usize,
    ks: &[f64],
    mult: ExclusionMultiplicity,
) -> Result<Vec<DistanceRow>> {
    let dm = global_dm_cpd(kernel, op, x, mtilde)?;
    let bd = decompose(&dm)?;
    let sylv = sylvester_diagonalize(&bd, None);
    let sep = separation_gamma(op, mtilde);
    let global = spectrum_report(dm.matrix().as_ref())?;
    ks.iter()
        .map(|&k| {
            let local_dm = assemble_local_dm(kernel, op, x, k, mtilde, Orientation::Row)?;
            let dense = local_dm.to_dense();
            let local = spectrum_report(dense.as_ref())?;
            let diff_norm = spectral_norm((&dense - dm.matrix()).as_ref());
            let dist = filtered_spectra_distance(&local, &global, op, mtilde, mult)?;
            Ok(DistanceRow {
                k,
                n: local_dm.stencils().n,
                dist_rel: dist.value,
                dist_abs: max_min_distance_abs(&local.spectrum, &global.spectrum),
                diff_norm,
                bound_prop42: bauer_fike_cpd(&bd, diff_norm),
                bound_thm44: bauer_fike_diag(&bd, &sylv, sep.gamma, diff_norm)
                    .ok()
                    .map(|b| b.gamma_bound),
            })
        })
        .collect()
}
