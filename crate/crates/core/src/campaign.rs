//! Randomized verification campaigns over the inequality families.
//!
//! A campaign is a grid of cells `(inequality, dimension, α)`; each cell runs
//! `trials` seeded ensembles at every exponent `r`. Cells run in parallel but
//! records are emitted in cell order, so the output is byte-identical for a
//! given configuration regardless of the thread count.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inequalities::{
    check_congruence_kantorovich, check_power_sum_kantorovich, AhVariant, CheckReport, Ensemble,
    ModifiedForm, ReverseFamily, TwoVarForm,
};
use crate::meanfns::RepFnSpec;
use crate::multimeans::{MultiMeanSpec, SolverConfig, Weights};
use crate::psd::{random_spd_with, SpdMatrix};

/// Every inequality id a campaign understands.
pub const INEQUALITY_IDS: &[&str] = &[
    "power-ah",
    "power-ah-adjoint",
    "power-ah-complementary",
    "power-ah-complementary-adjoint",
    "karcher-ah",
    "karcher-ah-complementary",
    "power-modified",
    "power-modified-complementary",
    "deformed-modified",
    "deformed-modified-complementary",
    "binary-deformed",
    "binary-deformed-complementary",
    "binary-bracket",
    "binary-bracket-complementary",
    "kantorovich-power-sum",
    "kantorovich-congruence",
    "power-reverse",
    "power-modified-reverse",
    "deformed-reverse",
    "karcher-reverse",
    "karcher-log-majorization",
];

const R_AT_LEAST_ONE: [f64; 4] = [1.0, 1.5, 2.0, 3.0];
const R_AT_MOST_ONE: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

fn is_complementary(id: &str) -> bool {
    id.ends_with("complementary")
        || id.ends_with("complementary-adjoint")
        || id == "karcher-log-majorization"
}

fn uses_alpha(id: &str) -> bool {
    id.starts_with("power-") || id.starts_with("binary-") || id.starts_with("deformed-")
}

fn uses_bounds(id: &str) -> bool {
    id.starts_with("kantorovich-") || id.ends_with("-reverse")
}

/// Exponents a family is stated for when the configuration gives none.
pub fn default_r_values(id: &str) -> Vec<f64> {
    if is_complementary(id) {
        R_AT_MOST_ONE.to_vec()
    } else {
        R_AT_LEAST_ONE.to_vec()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub inequality_ids: Vec<String>,
    pub dimensions: Vec<usize>,
    /// Exponents for every family; each family's own range when omitted.
    #[serde(default)]
    pub r_values: Option<Vec<f64>>,
    #[serde(default = "default_alphas")]
    pub alpha_values: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    /// Pass/fail threshold on margins.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_alphas() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

fn default_tol() -> f64 {
    crate::inequalities::CHECK_TOL
}

impl CampaignConfig {
    pub fn new(ids: &[&str], dimensions: Vec<usize>, trials: usize, seed: u64) -> Self {
        CampaignConfig {
            inequality_ids: ids.iter().map(|s| s.to_string()).collect(),
            dimensions,
            r_values: None,
            alpha_values: default_alphas(),
            trials,
            seed,
            output_path: None,
            solver: None,
            tol: default_tol(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.dimensions.is_empty() || self.dimensions.contains(&0) {
            return Err(Error::Config(
                "dimensions must be nonempty and at least 1".into(),
            ));
        }
        if self.inequality_ids.is_empty() {
            return Err(Error::Config("no inequality ids".into()));
        }
        for id in &self.inequality_ids {
            if !INEQUALITY_IDS.contains(&id.as_str()) {
                return Err(Error::UnknownInequality(id.clone()));
            }
        }
        if let Some(rs) = &self.r_values {
            if rs.is_empty() || rs.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(Error::Config("r values must be positive".into()));
            }
        }
        for a in &self.alpha_values {
            if !(*a > 0.0 && *a <= 1.0) {
                return Err(Error::Config(format!("alpha {a} outside (0, 1]")));
            }
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("tolerance must be nonnegative".into()));
        }
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        Ok(())
    }

    /// Solver settings for campaigns: Karcher certification is off because
    /// the inequality margins already exercise every solve.
    pub fn solver_config(&self) -> SolverConfig {
        self.solver.clone().unwrap_or_else(|| SolverConfig {
            certify_karcher: false,
            ..SolverConfig::default()
        })
    }
}

/// Everything needed to rerun one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckInstance {
    pub inequality_id: String,
    pub r: f64,
    pub matrices: Vec<SpdMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Weights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<MultiMeanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<RepFnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<RepFnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl CheckInstance {
    fn weights(&self) -> Result<&Weights> {
        self.weights
            .as_ref()
            .ok_or(Error::MissingParameter("weights"))
    }

    fn alpha(&self) -> Result<f64> {
        self.alpha.ok_or(Error::MissingParameter("alpha"))
    }

    fn bounds(&self) -> Result<(f64, f64)> {
        self.bounds.ok_or(Error::MissingParameter("bounds"))
    }

    fn sigma(&self) -> Result<&RepFnSpec> {
        self.sigma.as_ref().ok_or(Error::MissingParameter("sigma"))
    }

    fn tau(&self) -> Result<&RepFnSpec> {
        self.tau.as_ref().ok_or(Error::MissingParameter("tau"))
    }

    fn pair(&self) -> Result<()> {
        if self.matrices.len() != 2 {
            return Err(Error::ArityMismatch {
                weights: 2,
                matrices: self.matrices.len(),
            });
        }
        Ok(())
    }
}

/// Runs one instance from scratch.
pub fn run_instance(inst: &CheckInstance, cfg: &SolverConfig, tol: f64) -> Result<CheckReport> {
    let ens = Ensemble::new(&inst.matrices, cfg);
    run_on(&ens, inst, tol)
}

fn require_r(r: f64, at_least_one: bool) -> Result<()> {
    let ok = if at_least_one {
        r >= 1.0
    } else {
        r > 0.0 && r <= 1.0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::BadR {
            r,
            expected: if at_least_one { "[1, inf)" } else { "(0, 1]" },
        })
    }
}

/// Runs `inst` against an ensemble already holding its matrices.
fn run_on(ens: &Ensemble<'_>, inst: &CheckInstance, tol: f64) -> Result<CheckReport> {
    let id = inst.inequality_id.as_str();
    let r = inst.r;
    let ah = |variant| -> Result<CheckReport> {
        ens.check_ah(
            &MultiMeanSpec::power(inst.weights()?.clone(), inst.alpha()?),
            r,
            variant,
        )
    };
    let modified = |form| -> Result<CheckReport> {
        let base = inst.base.as_ref().ok_or(Error::MissingParameter("base"))?;
        ens.check_modified(base, inst.sigma()?, r, form)
    };
    let two_var = |form| -> Result<CheckReport> {
        inst.pair()?;
        ens.check_two_var(inst.tau()?, inst.sigma.as_ref(), r, form)
    };
    let mut report = match id {
        "power-ah" => ah(AhVariant::Original)?,
        "power-ah-adjoint" => ah(AhVariant::OriginalAdjoint)?,
        "power-ah-complementary" => ah(AhVariant::Complementary)?,
        "power-ah-complementary-adjoint" => ah(AhVariant::ComplementaryAdjoint)?,
        "karcher-ah" => {
            require_r(r, true)?;
            ens.check_karcher_ah(inst.weights()?, r)?
        }
        "karcher-ah-complementary" => {
            require_r(r, false)?;
            ens.check_karcher_ah(inst.weights()?, r)?
        }
        "power-modified" => {
            ens.check_power_modified(inst.weights()?, inst.alpha()?, r, ModifiedForm::Forward)?
        }
        "power-modified-complementary" => ens.check_power_modified(
            inst.weights()?,
            inst.alpha()?,
            r,
            ModifiedForm::Complementary,
        )?,
        "deformed-modified" => modified(ModifiedForm::Forward)?,
        "deformed-modified-complementary" => modified(ModifiedForm::Complementary)?,
        "binary-deformed" => two_var(TwoVarForm::Deformed)?,
        "binary-deformed-complementary" => two_var(TwoVarForm::DeformedComplementary)?,
        "binary-bracket" => two_var(TwoVarForm::Bracket)?,
        "binary-bracket-complementary" => two_var(TwoVarForm::BracketComplementary)?,
        "kantorovich-power-sum" => {
            check_power_sum_kantorovich(inst.weights()?, &inst.matrices, r, inst.bounds()?)?
        }
        "kantorovich-congruence" => {
            inst.pair()?;
            let mu = inst.mu.ok_or(Error::MissingParameter("mu"))?;
            check_congruence_kantorovich(
                &inst.matrices[0],
                &inst.matrices[1],
                r,
                inst.bounds()?,
                mu,
            )?
        }
        "power-reverse" | "power-modified-reverse" | "karcher-reverse" | "deformed-reverse" => {
            let w = || inst.weights().cloned();
            let family = match id {
                "power-reverse" => ReverseFamily::Power {
                    weights: w()?,
                    alpha: inst.alpha()?,
                },
                "power-modified-reverse" => ReverseFamily::PowerModified {
                    weights: w()?,
                    alpha: inst.alpha()?,
                },
                "karcher-reverse" => ReverseFamily::Karcher { weights: w()? },
                _ => ReverseFamily::Deformed {
                    base: inst.base.clone().ok_or(Error::MissingParameter("base"))?,
                    sigma: inst.sigma()?.clone(),
                },
            };
            ens.check_reverse(&family, r, inst.bounds()?)?
        }
        "karcher-log-majorization" => ens.check_log_majorization(inst.weights()?, r)?,
        other => return Err(Error::UnknownInequality(other.to_string())),
    };
    report.inequality_id = id.to_string();
    report.witness_seed = inst.seed;
    if !report.constants.contains_key("alpha") {
        if let Some(a) = inst.alpha {
            report.constants.insert("alpha".into(), a);
        }
    }
    report.holds = report.margin >= -tol;
    Ok(report)
}

/// One line of campaign output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CampaignRecord {
    Report {
        #[serde(flatten)]
        report: CheckReport,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instance: Option<Box<CheckInstance>>,
    },
    Error {
        inequality_id: String,
        error: String,
        kind: ErrorKind,
        witness_seed: u64,
        r: f64,
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instance: Option<Box<CheckInstance>>,
    },
    Summary {
        summary: CampaignSummary,
    },
}

/// Coarse classification used for exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Input,
    NoConvergence,
}

impl ErrorKind {
    pub fn of(e: &Error) -> Self {
        match e {
            Error::NoConvergence { .. }
            | Error::SolverInvariant { .. }
            | Error::CertificationFailure { .. }
            | Error::EigenFailure => ErrorKind::NoConvergence,
            _ => ErrorKind::Input,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdSummary {
    pub checks: usize,
    pub failures: usize,
    pub errors: usize,
    pub worst_margin: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub checks: usize,
    pub failures: usize,
    pub input_errors: usize,
    pub convergence_errors: usize,
    pub by_id: BTreeMap<String, IdSummary>,
}

impl CampaignSummary {
    /// Exit code per the CLI contract: 1 input error, 2 no convergence,
    /// 3 inequality failure, 0 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.input_errors > 0 {
            1
        } else if self.convergence_errors > 0 {
            2
        } else if self.failures > 0 {
            3
        } else {
            0
        }
    }

    fn add(&mut self, rec: &CampaignRecord) {
        match rec {
            CampaignRecord::Report { report, .. } => {
                self.checks += 1;
                let s = self.by_id.entry(report.inequality_id.clone()).or_default();
                s.checks += 1;
                s.worst_margin = Some(
                    s.worst_margin
                        .map_or(report.margin, |m| m.min(report.margin)),
                );
                if !report.holds {
                    self.failures += 1;
                    s.failures += 1;
                }
            }
            CampaignRecord::Error {
                inequality_id,
                kind,
                ..
            } => {
                match kind {
                    ErrorKind::Input => self.input_errors += 1,
                    ErrorKind::NoConvergence => self.convergence_errors += 1,
                }
                self.by_id.entry(inequality_id.clone()).or_default().errors += 1;
            }
            CampaignRecord::Summary { .. } => {}
        }
    }
}

#[derive(Clone, Debug)]
struct Cell {
    id: String,
    dim: usize,
    alpha: Option<f64>,
    r_values: Vec<f64>,
    seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn cell_seed(seed: u64, id: &str, dim: usize, alpha: Option<f64>) -> u64 {
    let mut h = splitmix(seed);
    for b in id.bytes() {
        h = splitmix(h ^ b as u64);
    }
    h = splitmix(h ^ dim as u64);
    splitmix(h ^ alpha.map_or(0, f64::to_bits))
}

fn cells(cfg: &CampaignConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for id in &cfg.inequality_ids {
        let alphas: Vec<Option<f64>> = if uses_alpha(id) {
            cfg.alpha_values.iter().map(|a| Some(*a)).collect()
        } else {
            vec![None]
        };
        let r_values = cfg.r_values.clone().unwrap_or_else(|| default_r_values(id));
        for &dim in &cfg.dimensions {
            for &alpha in &alphas {
                out.push(Cell {
                    id: id.clone(),
                    dim,
                    alpha,
                    r_values: r_values.clone(),
                    seed: cell_seed(cfg.seed, id, dim, alpha),
                });
            }
        }
    }
    out
}

fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> Result<Weights> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Weights::new(raw.iter().map(|v| v / total).collect())
}

fn sigma_catalog(alpha: f64, k: usize) -> Result<RepFnSpec> {
    Ok(match k % 3 {
        0 => RepFnSpec::harmonic(alpha)?,
        1 => RepFnSpec::geometric(alpha)?,
        _ => RepFnSpec::non_pmi_blend(),
    })
}

fn tau_catalog(alpha: f64, k: usize) -> Result<RepFnSpec> {
    Ok(match k % 4 {
        0 => RepFnSpec::arithmetic(alpha)?,
        1 => RepFnSpec::harmonic(alpha)?,
        2 => RepFnSpec::geometric(alpha)?,
        _ => RepFnSpec::non_pmi_blend(),
    })
}

/// Draws the inputs of one trial; `r` is filled in per exponent.
fn draw_instance(cell: &Cell, trial: usize) -> Result<CheckInstance> {
    let seed = cell.seed.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = cell.id.as_str();
    let (lo, hi) = if uses_bounds(id) {
        let lo = rng.random_range(0.5..2.0);
        (lo, lo * rng.random_range(1.5..6.0))
    } else {
        let lo = rng.random_range(0.1..1.0);
        (lo, lo * rng.random_range(2.0..50.0))
    };
    let binary = id.starts_with("binary-") || id == "kantorovich-congruence";
    let n = if binary { 2 } else { rng.random_range(2..=4) };
    let weights = if binary {
        None
    } else {
        Some(random_weights(n, &mut rng)?)
    };
    let mut matrices = Vec::with_capacity(n);
    let mut mu = None;
    if id == "kantorovich-congruence" {
        let m = rng.random_range(0.2..0.9);
        matrices.push(random_spd_with(cell.dim, lo, hi, &mut rng)?);
        matrices.push(random_spd_with(cell.dim, f64::sqrt(m), 1.0, &mut rng)?);
        mu = Some(m);
    } else {
        for _ in 0..n {
            matrices.push(random_spd_with(cell.dim, lo, hi, &mut rng)?);
        }
    }
    // negative exponents for the families stated on [-1, 1]
    let signed = matches!(
        id,
        "power-modified"
            | "power-modified-complementary"
            | "power-reverse"
            | "power-modified-reverse"
    );
    let alpha = cell
        .alpha
        .map(|a| if signed && trial % 2 == 1 { -a } else { a });
    let a = cell.alpha.unwrap_or(0.5);
    let (base, sigma, tau) = match id {
        "deformed-modified" | "deformed-modified-complementary" | "deformed-reverse" => {
            let w = weights.clone().ok_or(Error::MissingParameter("weights"))?;
            let base = if trial.is_multiple_of(2) {
                MultiMeanSpec::arithmetic(w)
            } else {
                MultiMeanSpec::harmonic(w)
            };
            (Some(base), Some(sigma_catalog(a, trial / 2)?), None)
        }
        "binary-deformed" | "binary-deformed-complementary" => (
            None,
            Some(sigma_catalog(0.5, trial / 4)?),
            Some(tau_catalog(a, trial)?),
        ),
        "binary-bracket" | "binary-bracket-complementary" => {
            (None, None, Some(tau_catalog(a, trial)?))
        }
        _ => (None, None, None),
    };
    Ok(CheckInstance {
        inequality_id: cell.id.clone(),
        r: 1.0,
        matrices,
        weights,
        alpha,
        base,
        sigma,
        tau,
        bounds: uses_bounds(id).then_some((lo, hi)),
        mu,
        seed,
    })
}

fn run_cell(cell: &Cell, cfg: &CampaignConfig, solver: &SolverConfig) -> Vec<CampaignRecord> {
    let mut out = Vec::with_capacity(cfg.trials * cell.r_values.len());
    for trial in 0..cfg.trials {
        let base = match draw_instance(cell, trial) {
            Ok(b) => b,
            Err(e) => {
                out.push(error_record(
                    cell,
                    &e,
                    cell.seed.wrapping_add(trial as u64),
                    f64::NAN,
                    None,
                ));
                continue;
            }
        };
        let ens = Ensemble::new(&base.matrices, solver);
        for &r in &cell.r_values {
            let inst = CheckInstance { r, ..base.clone() };
            out.push(match run_on(&ens, &inst, cfg.tol) {
                Ok(report) => {
                    let instance = (!report.holds).then(|| Box::new(inst));
                    CampaignRecord::Report { report, instance }
                }
                Err(e) => {
                    let seed = inst.seed;
                    error_record(cell, &e, seed, r, Some(Box::new(inst)))
                }
            });
        }
    }
    out
}

fn error_record(
    cell: &Cell,
    e: &Error,
    seed: u64,
    r: f64,
    instance: Option<Box<CheckInstance>>,
) -> CampaignRecord {
    CampaignRecord::Error {
        inequality_id: cell.id.clone(),
        error: e.to_string(),
        kind: ErrorKind::of(e),
        witness_seed: seed,
        r: if r.is_finite() { r } else { 0.0 },
        dim: cell.dim,
        // out-of-range exponents need no witness
        instance: instance.filter(|_| ErrorKind::of(e) == ErrorKind::NoConvergence),
    }
}

/// Runs every cell and returns the records in deterministic order, followed
/// by the summary.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<(Vec<CampaignRecord>, CampaignSummary)> {
    cfg.validate()?;
    let solver = cfg.solver_config();
    let cells = cells(cfg);
    let per_cell: Vec<Vec<CampaignRecord>> = cells
        .par_iter()
        .map(|cell| run_cell(cell, cfg, &solver))
        .collect();
    let mut summary = CampaignSummary::default();
    let records: Vec<CampaignRecord> = per_cell.into_iter().flatten().collect();
    for rec in &records {
        summary.add(rec);
    }
    Ok((records, summary))
}

/// Writes records as JSON lines followed by a summary line.
pub fn write_report<W: Write>(
    out: &mut W,
    records: &[CampaignRecord],
    summary: &CampaignSummary,
) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")?;
    }
    serde_json::to_writer(
        &mut *out,
        &CampaignRecord::Summary {
            summary: summary.clone(),
        },
    )?;
    out.write_all(b"\n")?;
    Ok(())
}
