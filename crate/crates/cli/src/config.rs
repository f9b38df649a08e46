//! Experiment configuration: `key=value` files, command-line overrides, the
//! provenance echo written into every output, and the pre-run validation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sphere_dm::geometry::{load_pointset, Family, PointSet};
use sphere_dm::kernels::{check_compatibility, SpectralOperator, ZonalKernel};
use sphere_dm::local_dm::stencil_size;

use crate::error::CliError;

/// Prefix of the provenance line; a file starting with it is a valid config.
pub const ECHO_PREFIX: &str = "# config ";

/// Dense storage above this many bytes triggers a warning.
pub const MEMORY_WARNING_BYTES: f64 = 8e9;

pub const KEYS: [&str; 12] = [
    "experiment",
    "family",
    "N",
    "kernel",
    "operator",
    "mtilde",
    "K",
    "dt",
    "steps",
    "seed",
    "points_file",
    "out",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Points,
    Dm,
    Spectra,
    Rnorm,
    Localdist,
    Energy,
    DecompReport,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Points => "points",
            Experiment::Dm => "dm",
            Experiment::Spectra => "spectra",
            Experiment::Rnorm => "rnorm",
            Experiment::Localdist => "localdist",
            Experiment::Energy => "energy",
            Experiment::DecompReport => "decomp_report",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "points" => Experiment::Points,
            "dm" => Experiment::Dm,
            "spectra" => Experiment::Spectra,
            "rnorm" => Experiment::Rnorm,
            "localdist" => Experiment::Localdist,
            "energy" => Experiment::Energy,
            "decomp_report" | "report" => Experiment::DecompReport,
            other => return Err(format!("unknown experiment '{other}'")),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub family: Family,
    pub n: Vec<usize>,
    pub kernel: ZonalKernel,
    pub operator: SpectralOperator,
    pub mtilde: usize,
    pub k: Vec<f64>,
    /// `None` selects `1/(2ρ)`.
    pub dt: Option<f64>,
    pub steps: usize,
    pub seed: u64,
    pub points_file: Option<PathBuf>,
    pub out: PathBuf,
}

/// `key=value` pairs from a config file. Blank lines and `#` comments are
/// skipped. A file carrying an echo line (any output file) is read from that
/// line alone, so the data below it is ignored.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let echo_tokens = |line: &str| {
        line.trim()
            .strip_prefix(ECHO_PREFIX.trim_end())
            .filter(|rest| rest.is_empty() || rest.starts_with(char::is_whitespace))
            .map(str::to_string)
    };
    if let Some((i, rest)) = text.lines().enumerate().find_map(|(i, l)| echo_tokens(l).map(|r| (i, r))) {
        return rest.split_whitespace().map(|t| split_pair(t, i + 1)).collect();
    }
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        pairs.push(split_pair(line, i + 1)?);
    }
    Ok(pairs)
}

fn split_pair(text: &str, line: usize) -> Result<(String, String), CliError> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| CliError::config("config", format!("line {line}: expected key=value, got '{text}'")))?;
    let key = k.trim();
    if !KEYS.contains(&key) {
        return Err(CliError::config(key, format!("line {line}: unknown key")));
    }
    Ok((key.to_string(), v.trim().to_string()))
}

fn parse_list<T: FromStr>(field: &str, value: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::config(field, "empty list"));
    }
    items
        .iter()
        .map(|s| s.parse().map_err(|_| CliError::config(field, format!("cannot parse '{s}'"))))
        .collect()
}

fn parse_one<T: FromStr>(field: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::config(field, format!("cannot parse '{value}'")))
}

fn no_whitespace(field: &str, value: &str) -> Result<PathBuf, CliError> {
    if value.is_empty() || value.contains(char::is_whitespace) {
        return Err(CliError::config(field, "paths must be non-empty and free of whitespace"));
    }
    Ok(PathBuf::from(value))
}

impl ExperimentConfig {
    /// Applies `pairs` in order over the defaults; later pairs win.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, CliError> {
        let kernel: ZonalKernel = "ss:m=3".parse().expect("default kernel");
        let mut cfg = ExperimentConfig {
            experiment: Experiment::Spectra,
            family: Family::Fibonacci,
            n: vec![401],
            mtilde: kernel.cpd_order(),
            kernel,
            operator: "p=0,-1".parse().expect("default operator"),
            k: vec![5.0],
            dt: None,
            steps: 1000,
            seed: 0,
            points_file: None,
            out: PathBuf::from("out"),
        };
        let mut mtilde_set = false;
        let mut operator_set = false;
        for (key, value) in pairs {
            let v = value.as_str();
            match key.as_str() {
                "experiment" => cfg.experiment = v.parse().map_err(|e: String| CliError::config(key, e))?,
                "family" => cfg.family = v.parse().map_err(|e: sphere_dm::Error| CliError::config(key, e.to_string()))?,
                "N" => cfg.n = parse_list(key, v)?,
                "kernel" => cfg.kernel = v.parse().map_err(|e: sphere_dm::Error| CliError::config(key, e.to_string()))?,
                "operator" => {
                    cfg.operator = v.parse().map_err(|e: sphere_dm::Error| CliError::config(key, e.to_string()))?;
                    operator_set = true;
                }
                "mtilde" => {
                    cfg.mtilde = parse_one(key, v)?;
                    mtilde_set = true;
                }
                "K" => cfg.k = parse_list(key, v)?,
                "dt" => {
                    cfg.dt = if v == "auto" { None } else { Some(parse_one(key, v)?) };
                }
                "steps" => cfg.steps = parse_one(key, v)?,
                "seed" => cfg.seed = parse_one(key, v)?,
                "points_file" => {
                    cfg.points_file = if v == "none" { None } else { Some(no_whitespace(key, v)?) };
                }
                "out" => cfg.out = no_whitespace(key, v)?,
                other => return Err(CliError::config(other, "unknown key")),
            }
        }
        if !mtilde_set {
            cfg.mtilde = cfg.kernel.cpd_order();
        }
        // u′ = Mu decays for the Laplace-Beltrami operator, not its negative
        if !operator_set && cfg.experiment == Experiment::Energy {
            cfg.operator = "p=0,1".parse().expect("default operator");
        }
        if cfg.points_file.is_some() {
            cfg.family = Family::File;
        }
        Ok(cfg)
    }

    /// The space-separated `key=value` tokens that reproduce this config.
    pub fn echo(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut parts = vec![
            format!("experiment={}", self.experiment.as_str()),
            format!("family={}", self.family.as_str()),
            format!("N={}", join(self.n.iter().map(|n| n.to_string()).collect())),
            format!("kernel={}", self.kernel),
            format!("operator={}", self.operator),
            format!("mtilde={}", self.mtilde),
            format!("K={}", join(self.k.iter().map(|k| k.to_string()).collect())),
            format!("dt={}", self.dt.map_or("auto".to_string(), |d| d.to_string())),
            format!("steps={}", self.steps),
            format!("seed={}", self.seed),
        ];
        parts.push(format!(
            "points_file={}",
            self.points_file.as_ref().map_or("none".to_string(), |p| p.display().to_string())
        ));
        parts.push(format!("out={}", self.out.display()));
        parts.join(" ")
    }

    pub fn header_line(&self) -> String {
        format!("{ECHO_PREFIX}{}", self.echo())
    }

    /// The loaded node set when the family is `file`.
    pub fn file_points(&self) -> Result<Option<PointSet>, CliError> {
        match (&self.family, &self.points_file) {
            (Family::File, Some(path)) => load_pointset(path)
                .map(Some)
                .map_err(|e| CliError::config("points_file", e.to_string())),
            (Family::File, None) => Err(CliError::config("points_file", "family=file needs a points file")),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
    Info,
}

#[derive(Debug, Clone)]
pub struct Issue {
    pub severity: Severity,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "ok",
        };
        write!(f, "{tag} [{}]: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    /// Node counts after resolving a points file.
    pub sizes: Vec<usize>,
}

impl ValidationReport {
    fn push(&mut self, severity: Severity, field: &'static str, message: String) {
        self.issues.push(Issue { severity, field, message });
    }

    pub fn is_valid(&self) -> bool {
        self.issues.iter().all(|i| i.severity != Severity::Error)
    }

    pub fn errors(&self) -> String {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Error)
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        write!(f, "{}", if self.is_valid() { "valid" } else { "invalid" })
    }
}

/// Checks everything that can be checked without building a matrix.
pub fn validate(cfg: &ExperimentConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let order = cfg.kernel.cpd_order();
    match check_compatibility(&cfg.kernel, &cfg.operator, cfg.mtilde) {
        Err(_) => report.push(
            Severity::Error,
            "mtilde",
            format!("mtilde = {} is below the minimal order {order} of {}", cfg.mtilde, cfg.kernel),
        ),
        Ok(c) if !c.accepted => report.push(Severity::Error, "operator", c.diagnostic),
        Ok(c) => report.push(Severity::Info, "operator", c.diagnostic),
    }

    let sizes = match cfg.file_points() {
        Ok(Some(x)) => vec![x.len()],
        Ok(None) => cfg.n.clone(),
        Err(e) => {
            report.push(Severity::Error, "points_file", e.to_string());
            Vec::new()
        }
    };
    let poly_dim = cfg.mtilde * cfg.mtilde;
    for &n in &sizes {
        if cfg.family == Family::Fibonacci && n % 2 == 0 {
            report.push(
                Severity::Error,
                "N",
                format!("N = {n} is even; the Fibonacci lattice is only defined for odd N"),
            );
        }
        if n <= poly_dim || n < 2 {
            report.push(
                Severity::Error,
                "N",
                format!("N = {n} must exceed the polynomial space dimension mtilde² = {poly_dim}"),
            );
        }
    }

    for &k in &cfg.k {
        if !(k > 0.0 && k.is_finite()) {
            report.push(Severity::Error, "K", format!("K = {k} must be positive"));
            continue;
        }
        for &n in &sizes {
            if n <= poly_dim {
                continue;
            }
            let raw = (k * k * (n as f64).ln().powi(2) / 7.0).ceil();
            let used = stencil_size(k, n, cfg.mtilde);
            let detail = format!("K = {k}, N = {n}: stencil size n = {used}");
            if raw < (poly_dim + 1) as f64 {
                report.push(Severity::Warning, "K", format!("{detail}, raised to the lower bound mtilde² + 1"));
            } else if raw > n as f64 {
                report.push(Severity::Warning, "K", format!("{detail}, capped at N (the local DM equals the global one)"));
            } else {
                report.push(Severity::Info, "K", detail);
            }
        }
    }

    if let Some(dt) = cfg.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            report.push(Severity::Error, "dt", format!("dt = {dt} must be positive"));
        }
    }
    if cfg.experiment == Experiment::Energy && cfg.steps == 0 {
        report.push(Severity::Error, "steps", "steps must be positive".into());
    }
    if cfg.experiment == Experiment::Energy {
        if let Some(l) = (1..=16).find(|&l| cfg.operator.eigenvalue(l) > 0.0) {
            report.push(
                Severity::Warning,
                "operator",
                format!("eigenvalue {} at degree {l} is positive, so u′ = Mu grows", cfg.operator.eigenvalue(l)),
            );
        }
    }
    if cfg.experiment == Experiment::Rnorm && sizes.len() < 3 {
        report.push(Severity::Warning, "N", "fewer than 3 sizes, the rate fit is skipped".into());
    }
    if cfg.experiment == Experiment::Rnorm && cfg.mtilde == 0 {
        report.push(Severity::Warning, "mtilde", "mtilde = 0 has no polynomial block, so R is empty".into());
    }
    if cfg.experiment == Experiment::Localdist && cfg.k.len() < 3 {
        report.push(Severity::Warning, "K", "fewer than 3 K values, the rate fit is skipped".into());
    }

    if let Some(&n_max) = sizes.iter().max() {
        let bytes = 8.0 * (n_max as f64).powi(2);
        let msg = format!("dense N×N storage for N = {n_max} needs {bytes:.3e} bytes");
        if bytes > MEMORY_WARNING_BYTES {
            report.push(Severity::Warning, "N", format!("{msg}, above {MEMORY_WARNING_BYTES:.0e}"));
        } else {
            report.push(Severity::Info, "N", msg);
        }
    }
    report.sizes = sizes;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> Vec<(String, String)> {
        parse_config_text(text).unwrap()
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::from_pairs(&pairs(
            "experiment = localdist\nN = 101,201\nkernel=imq:eps=2.5\noperator=p=1,-0.5\nK=3,4.5\ndt=0.01\n",
        ))
        .unwrap();
        let again = ExperimentConfig::from_pairs(&pairs(&cfg.header_line())).unwrap();
        assert_eq!(cfg.echo(), again.echo());
        assert_eq!(again.k, vec![3.0, 4.5]);
        assert_eq!(again.mtilde, 0);
    }

    #[test]
    fn defaults_follow_the_kernel_order() {
        let cfg = ExperimentConfig::from_pairs(&pairs("kernel=ss:m=4")).unwrap();
        assert_eq!(cfg.mtilde, 4);
        assert_eq!(cfg.operator.to_string(), "p=0,-1");
        let cfg = ExperimentConfig::from_pairs(&pairs("experiment=energy")).unwrap();
        assert_eq!(cfg.operator.to_string(), "p=0,1");
    }

    #[test]
    fn bad_values_name_their_field() {
        for (text, field) in [("N=12x", "N"), ("kernel=gauss", "kernel"), ("bogus=1", "bogus"), ("K=", "K")] {
            let err = parse_config_text(text).and_then(|p| ExperimentConfig::from_pairs(&p)).unwrap_err();
            match err {
                CliError::Config { field: f, .. } => assert_eq!(f, field, "{text}"),
                other => panic!("{other}"),
            }
        }
    }

    #[test]
    fn validation_examples() {
        let check = |text: &str| validate(&ExperimentConfig::from_pairs(&pairs(text)).unwrap());
        let r = check("operator=p=0,0,1");
        assert!(!r.is_valid());
        assert!(r.errors().contains("L < m − d/2"));
        assert!(!check("N=1024").is_valid());
        assert!(!check("mtilde=2").is_valid());
        assert!(check("N=101").is_valid());
        let big = check("N=40001");
        assert!(big.is_valid());
        assert!(big.issues.iter().any(|i| i.severity == Severity::Warning && i.message.contains("bytes")));
    }
}
