//! One driver per experiment. Each writes its files under `cfg.out`.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sphere_dm::block_decomp::{decompose, diagnostic_report};
use sphere_dm::dynamics::{default_dt, evolve, Energy};
use sphere_dm::geometry::{format_pointset, generate_family, mesh_metrics, PointSet};
use sphere_dm::global_dm::{global_dm_cpd, global_dm_pd, GlobalDm};
use sphere_dm::linalg::ComplexSpectrum;
use sphere_dm::local_dm::{assemble_local_dm, Orientation};
use sphere_dm::spectra::{
    distance_study, filtered_spectra_distance, fit_rate, r_norm_row, r_norm_table, spectrum_report,
    ExclusionMultiplicity, RateModel,
};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, Context};
use crate::output::{num, opt_num, Csv, Written};

pub fn run(cfg: &ExperimentConfig) -> Result<Written, CliError> {
    let mut out = Written::default();
    match cfg.experiment {
        Experiment::Points => points(cfg, &mut out)?,
        Experiment::Dm => dm(cfg, &mut out)?,
        Experiment::Spectra => spectra(cfg, &mut out)?,
        Experiment::Rnorm => rnorm(cfg, &mut out)?,
        Experiment::Localdist => localdist(cfg, &mut out)?,
        Experiment::Energy => energy(cfg, &mut out)?,
        Experiment::DecompReport => report(cfg, &mut out)?,
    }
    Ok(out)
}

fn node_sets(cfg: &ExperimentConfig) -> Result<Vec<PointSet>, CliError> {
    if let Some(x) = cfg.file_points()? {
        return Ok(vec![x]);
    }
    cfg.n
        .iter()
        .map(|&n| generate_family(cfg.family, n).context(|| format!("generating {} N={n}", cfg.family.as_str())))
        .collect()
}

fn path(cfg: &ExperimentConfig, name: String) -> PathBuf {
    cfg.out.join(name)
}

fn global(cfg: &ExperimentConfig, x: &PointSet) -> Result<GlobalDm, CliError> {
    let built = if cfg.mtilde == 0 {
        global_dm_pd(&cfg.kernel, &cfg.operator, x)
    } else {
        global_dm_cpd(&cfg.kernel, &cfg.operator, x, cfg.mtilde)
    };
    built.context(|| format!("global DM for N={}", x.len()))
}

fn sorted_pairs(spectrum: &ComplexSpectrum) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = spectrum.iter().map(|z| (z.re, z.im)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    v
}

fn spectrum_csv(cfg: &ExperimentConfig, spectrum: &ComplexSpectrum) -> Csv {
    let mut csv = Csv::new(&cfg.header_line(), "re,im");
    for (re, im) in sorted_pairs(spectrum) {
        csv.row(&[num(re), num(im)]);
    }
    csv
}

fn fit_json(xs: &[f64], ys: &[f64], model: RateModel) -> Value {
    match fit_rate(xs, ys, model) {
        Ok(f) => json!({
            "slope": f.slope,
            "intercept": f.intercept,
            "rms_residual": f.rms_residual,
            "points": xs.len(),
        }),
        Err(e) => json!({ "slope": null, "reason": e.to_string(), "points": xs.len() }),
    }
}

fn points(cfg: &ExperimentConfig, out: &mut Written) -> Result<(), CliError> {
    for x in node_sets(cfg)? {
        let n = x.len();
        let stem = format!("points_{}_N{n}", cfg.family.as_str());
        let mut csv = Csv::new(&cfg.header_line(), "");
        for line in format_pointset(&x).lines() {
            csv.row(&[line]);
        }
        out.csv(path(cfg, format!("{stem}.txt")), &csv)?;
        let m = mesh_metrics(&x).context(|| format!("mesh metrics for N={n}"))?;
        out.json(
            path(cfg, format!("{stem}.json")),
            &json!({ "config": cfg.echo(), "N": n, "mesh": m }),
        )?;
    }
    Ok(())
}

fn dm(cfg: &ExperimentConfig, out: &mut Written) -> Result<(), CliError> {
    for x in node_sets(cfg)? {
        let n = x.len();
        let g = global(cfg, &x)?;
        let m = g.matrix();
        let mut csv = Csv::new(&cfg.header_line(), "");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| num(m[(i, j)])).collect();
            csv.row(&row);
        }
        out.csv(path(cfg, format!("dm_global_N{n}.csv")), &csv)?;
        for &k in &cfg.k {
            let local = assemble_local_dm(&cfg.kernel, &cfg.operator, &x, k, cfg.mtilde, Orientation::Row)
                .context(|| format!("local DM for N={n}, K={k}"))?;
            let mut csv = Csv::new(&cfg.header_line(), "row,col,value");
            for &(r, c, v) in local.entries() {
                csv.row(&[r.to_string(), c.to_string(), num(v)]);
            }
            out.csv(path(cfg, format!("dm_local_N{n}_K{k}.csv")), &csv)?;
        }
    }
    Ok(())
}

fn spectra(cfg: &ExperimentConfig, out: &mut Written) -> Result<(), CliError> {
    for x in node_sets(cfg)? {
        let n = x.len();
        let g = global(cfg, &x)?;
        let gs = spectrum_report(g.matrix().as_ref()).context(|| format!("global spectrum for N={n}"))?;
        out.csv(path(cfg, format!("spectrum_global_N{n}.csv")), &spectrum_csv(cfg, &gs.spectrum))?;
        let mut locals = Vec::new();
        for &k in &cfg.k {
            let local = assemble_local_dm(&cfg.kernel, &cfg.operator, &x, k, cfg.mtilde, Orientation::Row)
                .context(|| format!("local DM for N={n}, K={k}"))?;
            let ls = spectrum_report(local.to_dense().as_ref()).context(|| format!("local spectrum for N={n}, K={k}"))?;
            let dist = filtered_spectra_distance(&ls, &gs, &cfg.operator, cfg.mtilde, ExclusionMultiplicity::Full)
                .context(|| format!("spectra distance for N={n}, K={k}"))?;
            out.csv(path(cfg, format!("spectrum_local_N{n}_K{k}.csv")), &spectrum_csv(cfg, &ls.spectrum))?;
            locals.push(json!({
                "K": k,
                "n": local.stencils().n,
                "nnz": local.nnz(),
                "spectral_radius": ls.spectral_radius,
                "max_abs_imag": ls.max_abs_imag,
                "min_real": ls.min_real,
                "dist_rel": dist.value,
            }));
        }
        out.json(
            path(cfg, format!("spectra_summary_N{n}.json")),
            &json!({
                "config": cfg.echo(),
                "N": n,
                "global": {
                    "spectral_radius": gs.spectral_radius,
                    "max_abs_imag": gs.max_abs_imag,
                    "min_real": gs.min_real,
                },
                "local": locals,
            }),
        )?;
    }
    Ok(())
}

fn rnorm(cfg: &ExperimentConfig, out: &mut Written) -> Result<(), CliError> {
    let rows = match cfg.file_points()? {
        Some(x) => vec![r_norm_row(&cfg.kernel, &cfg.operator, cfg.mtilde, &x)],
        None => r_norm_table(&cfg.kernel, &cfg.operator, cfg.mtilde, cfg.family, &cfg.n),
    };
    let mut csv = Csv::new(&cfg.header_line(), "family,kernel,m,mtilde,N,q,normR");
    let (mut qs, mut rs) = (Vec::new(), Vec::new());
    for row in &rows {
        csv.row(&[
            cfg.family.as_str().to_string(),
            cfg.kernel.to_string(),
            cfg.kernel.order_label().to_string(),
            cfg.mtilde.to_string(),
            row.n.to_string(),
            num(row.q),
            opt_num(row.norm_r),
        ]);
        if let Some(r) = row.norm_r {
            qs.push(row.q);
            rs.push(r);
        }
    }
    out.csv(path(cfg, "rnorm.csv".into()), &csv)?;
    let failed: Vec<usize> = rows.iter().filter(|r| r.norm_r.is_none()).map(|r| r.n).collect();
    out.json(
        path(cfg, "rnorm_fit.json".into()),
        &json!({
            "config": cfg.echo(),
            "model": "algebraic",
            "fit": fit_json(&qs, &rs, RateModel::Algebraic),
            "failed_N": failed,
        }),
    )
}

fn localdist(cfg: &ExperimentConfig, out: &mut Written) -> Result<(), CliError> {
    let mut csv = Csv::new(
        &cfg.header_line(),
        "family,kernel,m,mtilde,N,K,n,dist_rel,dist_abs,bound_prop42,bound_thm44",
    );
    let mut fits = Vec::new();
    for x in node_sets(cfg)? {
        let n = x.len();
        let rows = distance_study(&cfg.kernel, &cfg.operator, &x, cfg.mtilde, &cfg.k, ExclusionMultiplicity::Full)
            .context(|| format!("local-global distance study for N={n}"))?;
        for row in &rows {
            csv.row(&[
                cfg.family.as_str().to_string(),
                cfg.kernel.to_string(),
                cfg.kernel.order_label().to_string(),
                cfg.mtilde.to_string(),
                n.to_string(),
                row.k.to_string(),
                row.n.to_string(),
                num(row.dist_rel),
                num(row.dist_abs),
                num(row.bound_prop42),
                opt_num(row.bound_thm44),
            ]);
        }
        let ks: Vec<f64> = rows.iter().map(|r| r.k).collect();
        let ds: Vec<f64> = rows.iter().map(|r| r.dist_rel).collect();
        fits.push(json!({ "N": n, "fit": fit_json(&ks, &ds, RateModel::Exponential) }));
    }
    out.csv(path(cfg, "localdist.csv".into()), &csv)?;
    out.json(
        path(cfg, "localdist_fit.json".into()),
        &json!({ "config": cfg.echo(), "model": "exponential", "fits": fits }),
    )
}

/// Smooth field plus a small seeded perturbation.
fn initial_state(x: &PointSet, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.points()
        .iter()
        .map(|p| (p.x + 0.5 * p.y).exp() + (3.0 * p.z).sin() * p.y + 0.3 + 0.1 * (rng.gen::<f64>() - 0.5))
        .collect()
}

fn energy(cfg: &ExperimentConfig, out: &mut Written) -> Result<(), CliError> {
    for x in node_sets(cfg)? {
        let n = x.len();
        let g = global(cfg, &x)?;
        let rho = spectrum_report(g.matrix().as_ref())
            .context(|| format!("spectrum for N={n}"))?
            .spectral_radius;
        let monitor = Energy::for_dm(&g).context(|| format!("energy norm for N={n}"))?;
        let auto_dt = default_dt(rho);
        let dt = cfg.dt.unwrap_or(auto_dt);
        let u0 = initial_state(&x, cfg.seed);
        let run = evolve(g.matrix().as_ref(), &u0, dt, cfg.steps, &monitor, Some(rho))
            .context(|| format!("time stepping for N={n}"))?;
        let mut csv = Csv::new(&cfg.header_line(), "step,t,energy,l2");
        for (i, ((t, e), l2)) in run.times.iter().zip(&run.energies).zip(&run.l2_norms).enumerate() {
            csv.row(&[i.to_string(), num(*t), num(*e), num(*l2)]);
        }
        out.csv(path(cfg, format!("energy_N{n}.csv")), &csv)?;
        let slack = 1e-12 * run.energies[0].max(1.0);
        out.json(
            path(cfg, format!("energy_N{n}.json")),
            &json!({
                "config": cfg.echo(),
                "N": n,
                "norm": monitor.tag(),
                "method": run.method,
                "dt": dt,
                "default_dt": auto_dt,
                "dt_exceeds_default": dt > auto_dt,
                "spectral_radius": rho,
                "steps": cfg.steps,
                "energy_initial": run.energies[0],
                "energy_final": run.energies[cfg.steps],
                "max_energy_increase": run.max_energy_increase(),
                "slack": slack,
                "monotone": run.is_energy_monotone(slack),
            }),
        )?;
    }
    Ok(())
}

fn report(cfg: &ExperimentConfig, out: &mut Written) -> Result<(), CliError> {
    for x in node_sets(cfg)? {
        let n = x.len();
        let g = global(cfg, &x)?;
        let bd = decompose(&g).context(|| format!("block decomposition for N={n}"))?;
        let diag = diagnostic_report(&bd, &cfg.operator, cfg.mtilde, None);
        out.json(
            path(cfg, format!("report_N{n}.json")),
            &json!({
                "config": cfg.echo(),
                "N": n,
                "reconstruction_residual": bd.reconstruction_residual(g.matrix().as_ref()),
                "diagnostics": diag,
            }),
        )?;
    }
    Ok(())
}
