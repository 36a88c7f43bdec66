//! Command-line harness: every verification is a subcommand that writes a
//! self-describing report.
//!
//! JSON reports have the shape `{config, results, version}` with one
//! `{check, value, target, tolerance, pass}` record per contract. Series go
//! to CSV, preceded by a `# config: {...}` line. Either kind can be rerun
//! with `replay`, which must reproduce the original byte for byte.
//!
//! Exit codes: 0 all contracts met, 1 a contract failed, 2 usage or config error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::fd::{jet_deviation, FD_STEP};
use crate::fields::{
    construct_bump, random_periodic, CofactorField, DiagonalField, MatrixField, PeriodicField, PolyBump,
    Potential, RadialConvexFn, SmoothedCone, TrigTerm,
};
use crate::inequalities::{
    counterexample_verdict, diagonal_report, exponents, loomis_whitney_gap, serre_gap, Check,
};
use crate::matkit::{cofactor, det, det_lemma_residual, min_eigenvalue, minkowski_gap, GeneralMatrix, SymMatrix};
use crate::measures::{hardy_blowup_series, hardy_log_fit, ma_mass_radial, RadialProfile};
use crate::quadrature::{
    fit_threshold, integrate_domain, lp_dyadic, unit_ball_volume, BallRegion, Domain, IntegrationScheme,
};
use crate::weakcalc::{
    fd_divergence, test_bump_corpus, weak_divergence_residual, weak_hessian_residual, TestFunction,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEPTH_ENV: &str = "DETLAB_DEFAULT_DEPTH";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONTRACT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    VerifyMatkit,
    FieldsCheck,
    LpScan,
    DivergenceCheck,
    WeakHessian,
    SerreCheck,
    Counterexample,
    HardyScan,
    MaMass,
    DiagonalCheck,
    LoomisWhitney,
    Exponents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Field-description record accepted by `--field`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldDescription {
    FAlpha { n: usize, alpha: f64 },
    Bump { n: usize, p: f64, beta: f64, delta: f64, eps: f64, x0: Vec<f64> },
    SmoothedCone { n: usize, eps: f64 },
    Periodic { s_base: SymMatrix, terms: Vec<TrigTerm> },
    Diagonal { profiles: Vec<Vec<PolyBump>> },
}

impl FieldDescription {
    pub fn dim(&self) -> usize {
        match self {
            FieldDescription::FAlpha { n, .. } | FieldDescription::Bump { n, .. } | FieldDescription::SmoothedCone { n, .. } => *n,
            FieldDescription::Periodic { s_base, .. } => s_base.dim(),
            FieldDescription::Diagonal { profiles } => profiles.len(),
        }
    }
}

/// Fully resolved inputs of one run; embedded verbatim in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandName,
    pub p: f64,
    pub n: usize,
    pub eps: f64,
    pub beta: f64,
    pub delta: f64,
    pub x0: Vec<f64>,
    pub alpha: f64,
    pub eps_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldDescription>,
    pub seed: u64,
    pub scheme: IntegrationScheme,
    pub format: Format,
    /// Where the report goes; not part of the embedded config.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCheck {
    #[serde(flatten)]
    pub check: Check,
    /// Reported for context only; never affects the exit code.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub advisory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub results: Vec<ReportCheck>,
    pub version: String,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.advisory || r.check.pass)
    }
}

/// A rendered run: the report plus the exact bytes written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub rendered: String,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed() {
            EXIT_OK
        } else {
            EXIT_CONTRACT
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "detlab", version, about = "Verification harness for determinant and divergence-free field estimates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Random-instance suite for det, cofactor, the determinant lemma and Minkowski.
    VerifyMatkit(RunArgs),
    /// Closed-form derivatives of a field family against finite differences.
    FieldsCheck(RunArgs),
    /// Dyadic L^p ledger of det(Hf_α) and its fitted integrability threshold.
    LpScan(RunArgs),
    /// Weak divergence of a cofactor-of-Hessian field against seeded test bumps.
    DivergenceCheck(RunArgs),
    /// Integration-by-parts Hessian identity for f_α.
    WeakHessian(RunArgs),
    /// Serre's inequality on seeded random periodic fields.
    SerreCheck(RunArgs),
    /// All sub-checks of the localized counterexample.
    Counterexample(RunArgs),
    /// Monge–Ampère mass and Hardy norm of the smoothed cone over a list of ε.
    HardyScan(RunArgs),
    /// Radial Monge–Ampère masses: cone atom, density consistency, monotonicity.
    MaMass(RunArgs),
    /// Diagonal-field estimate: ratio, scaling invariance and grid stability.
    DiagonalCheck(RunArgs),
    /// Loomis–Whitney gap on seeded bump families.
    LoomisWhitney(RunArgs),
    /// Critical, gain and Serre exponents.
    Exponents(RunArgs),
    /// Rerun a report from its embedded config and compare the bytes.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Comma-separated coordinates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `2^-a..2^-b` or a comma-separated list.
    #[arg(long)]
    pub eps_list: Option<String>,
    /// Field-description JSON, inline or `@path`.
    #[arg(long)]
    pub field: Option<String>,
    /// Dyadic depth; defaults to $DETLAB_DEFAULT_DEPTH, then 20.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Report (JSON or CSV) whose embedded config is rerun.
    pub report: PathBuf,
    /// Also write the regenerated report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `2^-4..2^-10` (inclusive powers of two) or `a,b,c`.
pub fn parse_eps_list(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("cannot parse eps list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let exp = |t: &str| -> Result<i32> {
            t.trim().strip_prefix("2^").ok_or_else(bad)?.parse::<i32>().map_err(|_| bad())
        };
        let (lo, hi) = (exp(a)?, exp(b)?);
        let step = if hi >= lo { 1 } else { -1 };
        let mut out = Vec::new();
        let mut k = lo;
        loop {
            out.push(2f64.powi(k));
            if k == hi {
                break;
            }
            k += step;
        }
        return Ok(out);
    }
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect()
}

fn parse_field(s: &str) -> Result<FieldDescription> {
    let text = match s.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{path}: {e}")))?,
        None => s.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("field description: {e}")))
}

/// Default scheme, with the depth taken from `$DETLAB_DEFAULT_DEPTH` if set.
pub fn default_scheme() -> Result<IntegrationScheme> {
    let mut scheme = IntegrationScheme::default();
    if let Ok(v) = std::env::var(DEPTH_ENV) {
        scheme.dyadic_depth = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{DEPTH_ENV}='{v}' is not a positive integer")))?;
    }
    Ok(scheme)
}

impl RunArgs {
    pub fn resolve(&self, command: CommandName) -> Result<RunConfig> {
        let mut scheme = default_scheme()?;
        if let Some(d) = self.depth {
            scheme.dyadic_depth = d;
        }
        if let Some(g) = self.grid {
            scheme.grid_resolution = g;
        }
        scheme.validate()?;
        let field = self.field.as_deref().map(parse_field).transpose()?;
        let n = self.n.or(field.as_ref().map(FieldDescription::dim)).unwrap_or(match command {
            CommandName::LpScan
            | CommandName::SerreCheck
            | CommandName::HardyScan
            | CommandName::MaMass
            | CommandName::DiagonalCheck
            | CommandName::WeakHessian => 2,
            _ => 3,
        });
        let x0 = self.x0.clone().unwrap_or_else(|| vec![0.0; n]);
        if x0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
        }
        let eps_list = match &self.eps_list {
            Some(s) => parse_eps_list(s)?,
            None => parse_eps_list("2^-4..2^-10")?,
        };
        Ok(RunConfig {
            command,
            p: self.p.unwrap_or(2.0),
            n,
            eps: self.eps.unwrap_or(0.1),
            beta: self.beta.unwrap_or(0.5),
            delta: self.delta.unwrap_or(0.1),
            x0,
            alpha: self.alpha.unwrap_or(0.5),
            eps_list,
            field,
            seed: self.seed,
            scheme,
            format: self.format,
            out: self.out.clone(),
        })
    }
}

struct Outcome {
    checks: Vec<ReportCheck>,
    /// CSV header and rows for series-type commands.
    series: Option<(Vec<&'static str>, Vec<Vec<f64>>)>,
}

impl Outcome {
    fn checks(checks: Vec<Check>) -> Self {
        Self { checks: checks.into_iter().map(contract).collect(), series: None }
    }
}

fn contract(check: Check) -> ReportCheck {
    ReportCheck { check, advisory: false }
}

fn advisory(check: Check) -> ReportCheck {
    ReportCheck { check, advisory: true }
}

/// Runs `config` and renders its report without touching the filesystem.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    config.scheme.validate()?;
    let outcome = match config.command {
        CommandName::VerifyMatkit => verify_matkit(config)?,
        CommandName::FieldsCheck => fields_check(config)?,
        CommandName::LpScan => lp_scan(config)?,
        CommandName::DivergenceCheck => divergence_check(config)?,
        CommandName::WeakHessian => weak_hessian(config)?,
        CommandName::SerreCheck => serre_check(config)?,
        CommandName::Counterexample => counterexample(config)?,
        CommandName::HardyScan => hardy_scan(config)?,
        CommandName::MaMass => ma_mass(config)?,
        CommandName::DiagonalCheck => diagonal_check(config)?,
        CommandName::LoomisWhitney => loomis_whitney(config)?,
        CommandName::Exponents => exponents_check(config)?,
    };
    let report = Report { config: config.clone(), results: outcome.checks, version: VERSION.to_string() };
    let rendered = match (config.format, outcome.series) {
        (Format::Csv, Some((header, rows))) => render_csv(&report, &header, &rows)?,
        (Format::Csv, None) => {
            return Err(Error::InvalidInput(format!(
                "{:?} has no series output; use --format json",
                config.command
            )))
        }
        (Format::Json, _) => render_json(&report)?,
    };
    Ok(RunOutput { report, rendered })
}

fn render_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

const CSV_CONFIG_PREFIX: &str = "# config: ";

fn render_csv(report: &Report, header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
    let io = |e: csv::Error| Error::InvalidInput(e.to_string());
    let config = serde_json::to_string(&report.config).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    let body = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(format!("{CSV_CONFIG_PREFIX}{config}\n{}", String::from_utf8_lossy(&body)))
}

/// Recovers the embedded config from a JSON or CSV report.
pub fn config_from_report(text: &str) -> Result<RunConfig> {
    let bad = |e: serde_json::Error| Error::InvalidInput(format!("report config: {e}"));
    if let Some(rest) = text.strip_prefix(CSV_CONFIG_PREFIX) {
        let line = rest.lines().next().unwrap_or_default();
        return serde_json::from_str(line).map_err(bad);
    }
    #[derive(Deserialize)]
    struct Partial {
        config: RunConfig,
    }
    Ok(serde_json::from_str::<Partial>(text).map_err(bad)?.config)
}

fn random_matrix<R: Rng>(rng: &mut R, n: usize, range: f64) -> Result<GeneralMatrix> {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-range..range)).collect()).collect();
    GeneralMatrix::from_rows(&rows)
}

fn exact_det(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    if n == 1 {
        return m[0][0] as i128;
    }
    (0..n)
        .map(|j| {
            let minor: Vec<Vec<i64>> =
                m[1..].iter().map(|row| row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| *v).collect()).collect();
            let sign = if j % 2 == 0 { 1 } else { -1 };
            sign * m[0][j] as i128 * exact_det(&minor)
        })
        .sum()
}

fn verify_matkit(cfg: &RunConfig) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut int_det, mut cof_id, mut cof_t, mut lemma) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in 2..=4 {
        for _ in 0..100 {
            let ints: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-9..=9)).collect()).collect();
            let m = GeneralMatrix::from_rows(&ints.iter().map(|r| r.iter().map(|v| *v as f64).collect()).collect::<Vec<_>>())?;
            let exact = exact_det(&ints) as f64;
            int_det = int_det.max((det(&m) - exact).abs() / exact.abs().max(1.0));

            let a = random_matrix(&mut rng, n, 10.0)?;
            let resid = a.matmul(&cofactor(&a)).sub(&GeneralMatrix::identity(n)?.scale(det(&a))).max_abs();
            cof_id = cof_id.max(resid / (1.0 + a.max_abs().powi(n as i32)));
            let t = cofactor(&a.transpose()).sub(&cofactor(&a).transpose()).max_abs();
            cof_t = cof_t.max(t / (1.0 + a.max_abs().powi(n as i32 - 1)));

            let b = random_matrix(&mut rng, n, 1.0)?;
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = det_lemma_residual(&b, &u, &v)?;
            let scale = 1.0 + det(&b.add(&GeneralMatrix::outer(&u, &v)?)).abs();
            lemma = lemma.max(r / scale);
        }
    }
    let mut mink = f64::INFINITY;
    for n in 2..=3 {
        for _ in 0..200 {
            let gram = |rng: &mut ChaCha8Rng| {
                let vs: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
                SymMatrix::gram(&vs)
            };
            let (a, b) = (gram(&mut rng)?, gram(&mut rng)?);
            mink = mink.min(minkowski_gap(&a, &b)?);
        }
    }
    Ok(Outcome::checks(vec![
        Check::at_most("det_integer_exactness", int_det, 0.0, 1e-13),
        Check::at_most("cofactor_identity", cof_id, 0.0, 1e-11),
        Check::at_most("cofactor_transpose", cof_t, 0.0, 1e-12),
        Check::at_most("determinant_lemma", lemma, 0.0, 1e-12),
        Check::at_least("minkowski_gap", mink, 0.0, 1e-10),
    ]))
}

/// Samples for derivative checks: radii in (0.05, 0.95) ∪ (1.05, 2) times `scale` about `center`.
fn radial_samples<R: Rng>(rng: &mut R, center: &[f64], scale: f64, count: usize) -> Vec<Vec<f64>> {
    let n = center.len();
    (0..count)
        .map(|k| {
            let r = if k % 2 == 0 { rng.gen_range(0.05..0.95) } else { rng.gen_range(1.05..2.0) };
            loop {
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if len > 1e-2 && len <= 1.0 {
                    break center.iter().zip(&v).map(|(c, d)| c + scale * r * d / len).collect();
                }
            }
        })
        .collect()
}

/// Finite-difference, determinant, cofactor and PSD checks of a potential at `points`.
pub fn potential_checks<P: Potential + ?Sized>(pot: &P, points: &[Vec<f64>]) -> Result<Vec<Check>> {
    let n = pot.dim();
    let (mut grad, mut hess, mut det_dev, mut cof_det, mut min_eig) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for x in points {
        let dev = jet_deviation(pot, x, FD_STEP)?;
        grad = grad.max(dev.gradient);
        hess = hess.max(dev.hessian);
        let jet = pot.jet(x)?;
        let hscale = jet.hessian.max_abs().powi(n as i32);
        det_dev = det_dev.max((jet.det_hessian - jet.hessian.det()).abs() / jet.det_hessian.abs().max(hscale));
        let want = jet.det_hessian.powi(n as i32 - 1);
        cof_det = cof_det.max((jet.cof_hessian.det() - want).abs() / want.abs().max(hscale.powi(n as i32 - 1)));
        let cof_scale = jet.cof_hessian.max_abs().max(f64::MIN_POSITIVE);
        min_eig = min_eig.min(min_eigenvalue(&jet.cof_hessian) / cof_scale);
    }
    Ok(vec![
        Check::at_most("fd_gradient", grad, 0.0, 1e-6),
        Check::at_most("fd_hessian", hess, 0.0, 1e-6),
        Check::at_most("det_consistency", det_dev, 0.0, 1e-10),
        Check::at_most("cofactor_det_power", cof_det, 0.0, 1e-9),
        Check::at_least("cofactor_min_eigenvalue", min_eig, 0.0, 1e-10),
    ])
}

enum BuiltField {
    Radial(RadialConvexFn),
    Bump(Box<crate::fields::BumpField>),
    Cone(SmoothedCone),
    Periodic(Box<PeriodicField>),
    Diagonal(DiagonalField),
}

fn build_field(desc: &FieldDescription, scheme: &IntegrationScheme) -> Result<BuiltField> {
    Ok(match desc {
        FieldDescription::FAlpha { n, alpha } => BuiltField::Radial(RadialConvexFn::new(*alpha, *n)?),
        FieldDescription::Bump { n, p, beta, delta, eps, x0 } => {
            BuiltField::Bump(Box::new(construct_bump(*p, *n, *beta, *delta, *eps, x0, scheme)?))
        }
        FieldDescription::SmoothedCone { n, eps } => BuiltField::Cone(SmoothedCone::new(*eps, *n)?),
        FieldDescription::Periodic { s_base, terms } => BuiltField::Periodic(Box::new(PeriodicField::new(*s_base, terms.clone())?)),
        FieldDescription::Diagonal { profiles } => BuiltField::Diagonal(DiagonalField::new(profiles.clone())?),
    })
}

fn field_or(cfg: &RunConfig, default: FieldDescription) -> FieldDescription {
    cfg.field.clone().unwrap_or(default)
}

fn default_bump_description(cfg: &RunConfig) -> FieldDescription {
    FieldDescription::Bump { n: cfg.n, p: cfg.p, beta: cfg.beta, delta: cfg.delta, eps: cfg.eps, x0: cfg.x0.clone() }
}

fn fields_check(cfg: &RunConfig) -> Result<Outcome> {
    let desc = field_or(cfg, FieldDescription::FAlpha { n: cfg.n, alpha: cfg.alpha });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = desc.dim();
    let checks = match build_field(&desc, &cfg.scheme)? {
        BuiltField::Radial(f) => potential_checks(&f, &radial_samples(&mut rng, &vec![0.0; n], 1.0, 100))?,
        BuiltField::Bump(b) => {
            let pts = radial_samples(&mut rng, &b.x0, 0.5 * b.beta, 100);
            let mut checks = potential_checks(b.as_ref(), &pts)?;
            let outer = b.outer_hessian()?;
            let mut worst = 0.0f64;
            for x in radial_samples(&mut rng, &b.x0, 0.5 * b.beta, 40).iter().skip(1).step_by(2) {
                worst = worst.max(b.bump_eval(x)?.hessian.sub(&outer).max_abs());
            }
            checks.push(Check::at_most("outer_hessian_exact", worst, 0.0, 0.0));
            checks
        }
        BuiltField::Cone(c) => {
            let pts: Vec<Vec<f64>> = (0..100).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            potential_checks(&c, &pts)?
        }
        BuiltField::Periodic(f) => {
            let pts: Vec<Vec<f64>> = (0..100).map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
            let mut checks = potential_checks(f.as_ref(), &pts)?;
            let mut worst = 0.0f64;
            for x in &pts {
                let a = f.periodic_eval(x)?;
                for k in 0..n {
                    let mut y = x.clone();
                    y[k] += 1.0;
                    worst = worst.max(a.sub(&f.periodic_eval(&y)?).max_abs() / a.max_abs().max(1.0));
                }
            }
            checks.push(Check::at_most("lattice_periodicity", worst, 0.0, 1e-12));
            checks
        }
        BuiltField::Diagonal(d) => {
            let (lo, hi) = d.support_box();
            let mut worst = 0.0f64;
            for _ in 0..50 {
                let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
                let exact = d.divergence(&x)?;
                let fd = fd_divergence(&d, &x, FD_STEP)?;
                for (e, f) in exact.iter().zip(&fd) {
                    worst = worst.max((e - f).abs() / e.abs().max(1.0));
                }
            }
            vec![Check::at_most("fd_divergence", worst, 0.0, 1e-6)]
        }
    };
    Ok(Outcome::checks(checks))
}

fn lp_scan(cfg: &RunConfig) -> Result<Outcome> {
    let f = RadialConvexFn::new(cfg.alpha, cfg.n)?;
    let report = lp_dyadic(|x| Ok(f.radial_eval(x)?.det_hessian), 1.0, cfg.n, &cfg.scheme)?;
    let target = 1.0 / (1.0 - cfg.alpha);
    let q = fit_threshold(&report, cfg.n)?;
    let rows = report
        .shell_integrals
        .iter()
        .enumerate()
        .map(|(k, s)| vec![k as f64, 0.5f64.powi(k as i32), *s])
        .collect();
    Ok(Outcome {
        checks: vec![
            contract(Check::close("fitted_threshold", q, target, 0.02 * target)),
            contract(Check::close(
                "fitted_exponent",
                report.fitted_exponent,
                cfg.n as f64 * (cfg.alpha - 1.0),
                0.02 * cfg.n as f64 * (1.0 - cfg.alpha),
            )),
        ],
        series: Some((vec!["shell", "outer_radius", "integral"], rows)),
    })
}

/// Ball that holds the seeded test-bump corpus for a field family.
fn corpus_region(built: &BuiltField, n: usize) -> BallRegion {
    match built {
        BuiltField::Bump(b) => b.core(),
        BuiltField::Periodic(_) => BallRegion { center: vec![0.5; n], radius: 0.5 },
        BuiltField::Radial(_) => BallRegion { center: vec![0.0; n], radius: 1.5 },
        _ => BallRegion::unit(n),
    }
}

/// Max normalized weak-divergence residual of a field over a corpus.
pub fn max_divergence_residual<A: MatrixField + ?Sized>(
    field: &A,
    corpus: &[TestFunction],
    scheme: &IntegrationScheme,
) -> Result<f64> {
    use rayon::prelude::*;
    let rs = corpus
        .par_iter()
        .map(|eta| Ok(weak_divergence_residual(field, eta, scheme)?.relative()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(rs.into_iter().fold(0.0, f64::max))
}

fn divergence_check(cfg: &RunConfig) -> Result<Outcome> {
    let desc = field_or(cfg, default_bump_description(cfg));
    let n = desc.dim();
    let built = build_field(&desc, &cfg.scheme)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let corpus = test_bump_corpus(&corpus_region(&built, n), 10, &mut rng)?;
    let refined = cfg.scheme.refined();
    let (coarse, fine) = match &built {
        BuiltField::Radial(f) => {
            let a = CofactorField(f);
            (max_divergence_residual(&a, &corpus, &cfg.scheme)?, max_divergence_residual(&a, &corpus, &refined)?)
        }
        BuiltField::Bump(b) => {
            let a = b.cofactor_field();
            (max_divergence_residual(&a, &corpus, &cfg.scheme)?, max_divergence_residual(&a, &corpus, &refined)?)
        }
        BuiltField::Cone(c) => {
            let a = CofactorField(c);
            (max_divergence_residual(&a, &corpus, &cfg.scheme)?, max_divergence_residual(&a, &corpus, &refined)?)
        }
        BuiltField::Periodic(f) => {
            let a = CofactorField(f.as_ref());
            (max_divergence_residual(&a, &corpus, &cfg.scheme)?, max_divergence_residual(&a, &corpus, &refined)?)
        }
        BuiltField::Diagonal(_) => {
            return Err(Error::InvalidInput("divergence-check needs a cofactor-of-Hessian family".into()))
        }
    };
    Ok(Outcome::checks(vec![
        Check::at_most("weak_divergence", coarse, 0.0, 1e-5),
        Check::at_most("weak_divergence_refined", fine, coarse, 0.0),
    ]))
}

fn weak_hessian(cfg: &RunConfig) -> Result<Outcome> {
    let n = cfg.n;
    let f = RadialConvexFn::new(cfg.alpha, n)?;
    let eta = TestFunction::new(cfg.x0.clone(), 0.7, 3, 1.0)?;
    let tol = if cfg.alpha == 0.0 { 1e-4 } else { 1e-5 };
    let mut checks = Vec::new();
    for i in 0..n {
        for j in i..n {
            let pair = weak_hessian_residual(&f, &eta, i, j, &cfg.scheme)?;
            checks.push(Check::at_most(&format!("weak_hessian_{i}{j}"), pair.residual(), 0.0, tol));
        }
    }
    Ok(Outcome::checks(checks))
}

fn serre_check(cfg: &RunConfig) -> Result<Outcome> {
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let resolution = cfg.scheme.grid_resolution;
    let mut worst = f64::INFINITY;
    let mut rows = Vec::new();
    for k in 0..10 {
        let field = random_periodic(&mut rng, n, resolution)?;
        let g = serre_gap(&field, &cfg.scheme)?;
        worst = worst.min(g.gap);
        rows.push(vec![k as f64, g.root_det_of_mean, g.mean_of_root_det, g.gap]);
    }
    let constant = PeriodicField::with_check_resolution(SymMatrix::identity(n)?, vec![], resolution)?;
    let c = serre_gap(&constant, &cfg.scheme)?;
    Ok(Outcome {
        checks: vec![
            contract(Check::at_least("serre_gap_min", worst, 0.0, 1e-8)),
            contract(Check::close("serre_gap_constant", c.gap, 0.0, 1e-8)),
        ],
        series: Some((vec!["field", "root_det_of_mean", "mean_of_root_det", "gap"], rows)),
    })
}

fn counterexample(cfg: &RunConfig) -> Result<Outcome> {
    let v = counterexample_verdict(cfg.p, cfg.n, cfg.eps, cfg.beta, cfg.delta, &cfg.x0, cfg.seed, &cfg.scheme)?;
    let mut checks: Vec<ReportCheck> = v.checks().iter().map(|c| contract((*c).clone())).collect();
    checks.push(advisory(Check::new("alpha", v.alpha, v.alpha, 0.0, true)));
    checks.push(advisory(Check::new("scale_c", v.scale_c, v.scale_c, 0.0, true)));
    checks.push(advisory(Check::at_least("shell_ratio_at_target", v.shell_ratio_at_target, 1.0, 1e-3)));
    Ok(Outcome { checks, series: None })
}

fn hardy_scan(cfg: &RunConfig) -> Result<Outcome> {
    let n = cfg.n;
    let rows = hardy_blowup_series(&cfg.eps_list, n, &cfg.scheme)?;
    let omega = unit_ball_volume(n);
    let fit = hardy_log_fit(&rows)?;
    let increasing = rows.windows(2).all(|w| w[1].hardy > w[0].hardy);
    let worst_mass = rows.iter().map(|r| (r.mass - omega).abs() / omega).fold(0.0, f64::max);
    let predicted = n as f64 * omega;
    let checks = vec![
        contract(Check::new("hardy_strictly_increasing", increasing as u8 as f64, 1.0, 0.0, increasing)),
        contract(Check::at_most("mass_relative_error", worst_mass, 0.0, 0.05)),
        contract(Check::at_least("hardy_slope", fit.slope, 0.0, 0.0).with_strict_positive()),
        contract(Check::at_least("hardy_fit_r_squared", fit.r_squared, 0.99, 0.0)),
        advisory(Check::close("hardy_slope_vs_n_omega_n", fit.slope, predicted, 0.25 * predicted)),
    ];
    let series = rows.iter().map(|r| vec![r.eps, r.mass, r.hardy]).collect();
    Ok(Outcome { checks, series: Some((vec!["epsilon", "mass", "hardy"], series)) })
}

trait StrictPositive {
    fn with_strict_positive(self) -> Self;
}

impl StrictPositive for Check {
    fn with_strict_positive(mut self) -> Self {
        self.pass = self.value > self.target;
        self
    }
}

/// Random convex profile: non-negative initial slope and curvatures.
fn random_profile<R: Rng>(rng: &mut R) -> RadialProfile {
    let pieces = rng.gen_range(1..=4);
    let mut breakpoints: Vec<f64> = (0..pieces).map(|_| rng.gen_range(0.05..1.5)).collect();
    breakpoints.sort_by(|a, b| a.total_cmp(b));
    breakpoints.dedup();
    let curvatures = (0..=breakpoints.len()).map(|_| rng.gen_range(0.0..3.0)).collect();
    RadialProfile::PiecewiseQuadratic { initial_slope: rng.gen_range(0.0..1.0), breakpoints, curvatures }
}

fn ma_mass(cfg: &RunConfig) -> Result<Outcome> {
    let n = cfg.n;
    let omega = unit_ball_volume(n);
    let mut atom = 0.0f64;
    for r in [0.25, 0.5, 1.0] {
        atom = atom.max((ma_mass_radial(&RadialProfile::Cone, r, n)? - omega).abs());
    }
    let cone = SmoothedCone::new(cfg.eps, n)?;
    let mut density = 0.0f64;
    for r in [0.25, 0.5] {
        let ball = Domain::Ball { center: vec![0.0; n], radius: r };
        let integral = integrate_domain(&ball, None, &[], 1, &cfg.scheme, |x, out| {
            out[0] = cone.jet(x)?.det_hessian;
            Ok(())
        })?[0];
        let mass = ma_mass_radial(&RadialProfile::SmoothedCone { eps: cfg.eps }, r, n)?;
        density = density.max((integral - mass).abs() / mass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut profiles = vec![RadialProfile::Cone, RadialProfile::SmoothedCone { eps: cfg.eps }, RadialProfile::Quadratic];
    profiles.extend((0..20).map(|_| random_profile(&mut rng)));
    let mut worst_drop = 0.0f64;
    for profile in &profiles {
        let mut prev = 0.0;
        for k in 1..=200 {
            let m = ma_mass_radial(profile, 0.01 * k as f64, n)?;
            worst_drop = worst_drop.max(prev - m);
            prev = m;
        }
    }
    Ok(Outcome::checks(vec![
        Check::at_most("cone_atom", atom, 0.0, 1e-14),
        Check::at_most("mass_density_consistency", density, 0.0, 1e-6),
        Check::at_most("mass_monotone_drop", worst_drop, 0.0, 0.0),
    ]))
}

fn diagonal_check(cfg: &RunConfig) -> Result<Outcome> {
    let desc = field_or(
        cfg,
        FieldDescription::Diagonal { profiles: vec![vec![PolyBump::new(vec![0.0; cfg.n], 1.0, 3, 1.0)?]; cfg.n] },
    );
    let field = match build_field(&desc, &cfg.scheme)? {
        BuiltField::Diagonal(d) => d,
        _ => return Err(Error::InvalidInput("diagonal-check needs a diagonal field".into())),
    };
    let base = diagonal_report(&field, cfg.p, &cfg.scheme)?;
    let scaled = diagonal_report(&field.scaled(3.0), cfg.p, &cfg.scheme)?;
    let fine = diagonal_report(&field, cfg.p, &cfg.scheme.refined())?;
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / b.abs() };
    Ok(Outcome::checks(vec![
        Check::new("ratio_finite", base.ratio, base.ratio, 0.0, base.ratio.is_finite()),
        Check::new("lhs", base.lhs, base.lhs, 0.0, base.lhs.is_finite()),
        Check::new("div_norm", base.div_norm, base.div_norm, 0.0, base.div_norm.is_finite()),
        Check::at_most("ratio_scaling_invariance", rel(scaled.ratio, base.ratio), 0.0, 1e-8),
        Check::at_most("ratio_grid_stability", rel(fine.ratio, base.ratio), 0.0, 0.1),
    ]))
}

/// `g(y) = Σ_m A_m (1 - |y - c_m|²/ρ_m²)₊³` on `[-1, 1]^{d}`.
#[derive(Debug, Clone)]
struct BumpSum {
    centers: Vec<Vec<f64>>,
    radii: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl BumpSum {
    fn random<R: Rng>(rng: &mut R, d: usize) -> Self {
        let m = rng.gen_range(1..=3);
        Self {
            centers: (0..m).map(|_| (0..d).map(|_| rng.gen_range(-0.4..0.4)).collect()).collect(),
            radii: (0..m).map(|_| rng.gen_range(0.3..0.6)).collect(),
            amplitudes: (0..m).map(|_| rng.gen_range(0.2..2.0)).collect(),
        }
    }

    fn eval(&self, y: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.radii)
            .zip(&self.amplitudes)
            .map(|((c, r), a)| {
                let q: f64 = y.iter().zip(c).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / (r * r);
                a * (1.0 - q).max(0.0).powi(3)
            })
            .sum()
    }
}

fn loomis_whitney(cfg: &RunConfig) -> Result<Outcome> {
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lo = vec![-1.0; n];
    let hi = vec![1.0; n];
    let mut worst = f64::INFINITY;
    let mut planar = 0.0f64;
    for _ in 0..5 {
        let gs: Vec<BumpSum> = (0..n).map(|_| BumpSum::random(&mut rng, n - 1)).collect();
        let lw = loomis_whitney_gap(n, |i, y| Ok(gs[i].eval(y)), &lo, &hi, &cfg.scheme)?;
        worst = worst.min(lw.gap);
        if n == 2 {
            planar = planar.max(lw.gap.abs());
        }
    }
    let ones = loomis_whitney_gap(n, |_, _| Ok(1.0), &vec![0.0; n], &vec![1.0; n], &cfg.scheme)?;
    let mut checks = vec![
        Check::at_least("loomis_whitney_gap_min", worst, 0.0, 1e-8),
        Check::close("loomis_whitney_constants", ones.gap, 0.0, 1e-8),
    ];
    if n == 2 {
        checks.push(Check::at_most("loomis_whitney_planar_equality", planar, 0.0, 1e-8));
    }
    Ok(Outcome::checks(checks))
}

fn exponents_check(cfg: &RunConfig) -> Result<Outcome> {
    let e = exponents(cfg.p, cfg.n)?;
    let nf = cfg.n as f64;
    let kink = nf / (nf - 1.0);
    let k = exponents(kink, cfg.n)?;
    let expected_gain = if cfg.p >= kink { cfg.p * (nf - 1.0) / nf } else { 1.0 };
    let mut checks = vec![
        Check::close("p_star", e.p_star, ((cfg.p * (nf - 1.0) - nf) / (cfg.p * (nf - 1.0))).max(0.0), 1e-12),
        Check::close("gain_exponent", e.gain_exponent, expected_gain, 1e-12),
        Check::close("serre_exponent", e.serre_exponent, 1.0 / (nf - 1.0), 1e-15),
        Check::close("kink_p_star", k.p_star, 0.0, 1e-12),
        Check::close("kink_gain_exponent", k.gain_exponent, 1.0, 1e-12),
    ];
    if let Some(pp) = e.sobolev_conjugate {
        checks.push(Check::close("sobolev_conjugate", pp, nf * cfg.p / (nf - cfg.p), 1e-12));
    }
    Ok(Outcome::checks(checks))
}

fn write_output(path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

/// Outcome of `replay`.
#[derive(Debug, Clone)]
pub struct Replay {
    pub output: RunOutput,
    pub identical: bool,
}

pub fn replay(report_path: &Path) -> Result<Replay> {
    let original = std::fs::read_to_string(report_path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", report_path.display())))?;
    let config = config_from_report(&original)?;
    let output = execute(&config)?;
    let identical = output.rendered == original;
    Ok(Replay { output, identical })
}

/// Parses arguments, runs, writes the report and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, run_args) = match cli.command {
        CliCommand::Replay(r) => return run_replay(&r),
        CliCommand::VerifyMatkit(a) => (CommandName::VerifyMatkit, a),
        CliCommand::FieldsCheck(a) => (CommandName::FieldsCheck, a),
        CliCommand::LpScan(a) => (CommandName::LpScan, a),
        CliCommand::DivergenceCheck(a) => (CommandName::DivergenceCheck, a),
        CliCommand::WeakHessian(a) => (CommandName::WeakHessian, a),
        CliCommand::SerreCheck(a) => (CommandName::SerreCheck, a),
        CliCommand::Counterexample(a) => (CommandName::Counterexample, a),
        CliCommand::HardyScan(a) => (CommandName::HardyScan, a),
        CliCommand::MaMass(a) => (CommandName::MaMass, a),
        CliCommand::DiagonalCheck(a) => (CommandName::DiagonalCheck, a),
        CliCommand::LoomisWhitney(a) => (CommandName::LoomisWhitney, a),
        CliCommand::Exponents(a) => (CommandName::Exponents, a),
    };
    let result = run_args.resolve(name).and_then(|cfg| execute(&cfg).map(|o| (cfg, o)));
    match result {
        Ok((cfg, output)) => {
            if let Err(e) = write_output(cfg.out.as_deref(), &output.rendered) {
                eprintln!("detlab: cannot write report: {e}");
                return EXIT_USAGE;
            }
            for r in output.report.results.iter().filter(|r| !r.advisory && !r.check.pass) {
                eprintln!("detlab: contract failed: {} = {} (target {}, tolerance {})", r.check.check, r.check.value, r.check.target, r.check.tolerance);
            }
            output.exit_code()
        }
        Err(e) => {
            eprintln!("detlab: {e}");
            EXIT_USAGE
        }
    }
}

fn run_replay(args: &ReplayArgs) -> i32 {
    match replay(&args.report) {
        Ok(r) => {
            if let Err(e) = write_output(args.out.as_deref(), &r.output.rendered) {
                eprintln!("detlab: cannot write report: {e}");
                return EXIT_USAGE;
            }
            if r.identical {
                eprintln!("detlab: replay reproduced {} exactly", args.report.display());
                r.output.exit_code()
            } else {
                eprintln!("detlab: replay of {} differs from the original", args.report.display());
                EXIT_CONTRACT
            }
        }
        Err(e) => {
            eprintln!("detlab: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_list_forms() {
        let v = parse_eps_list("2^-4..2^-6").unwrap();
        assert_eq!(v, vec![0.0625, 0.03125, 0.015625]);
        assert_eq!(parse_eps_list("0.1, 0.05").unwrap(), vec![0.1, 0.05]);
        assert!(parse_eps_list("4..6").is_err());
    }

    #[test]
    fn exact_integer_determinant() {
        assert_eq!(exact_det(&[vec![2, 1], vec![1, 3]]), 5);
        assert_eq!(exact_det(&[vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 10]]), -3);
    }

    #[test]
    fn field_description_round_trip_and_rejection() {
        let desc: FieldDescription = serde_json::from_str(r#"{"family":"f_alpha","n":2,"alpha":0.5}"#).unwrap();
        assert_eq!(desc, FieldDescription::FAlpha { n: 2, alpha: 0.5 });
        assert!(serde_json::from_str::<FieldDescription>(r#"{"family":"f_alpha","n":2,"alpha":0.5,"x":1}"#).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let cfg = RunArgs::default().resolve(CommandName::Exponents).unwrap();
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }
}
