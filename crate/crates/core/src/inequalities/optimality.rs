//! Counterexample search showing the exponent ranges of the bracket
//! inequalities are sharp.

use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{bracket, order_margin, CHECK_TOL};
use crate::error::{Error, Result};
use crate::meanfns::{two_var_mean, RepFnSpec};
use crate::psd::SpdMatrix;

const NORM_ORDER_ID: &str = "bracket-norm-order";
const UNIT_IMPLICATION_ID: &str = "bracket-unit-implication";
const NOISE_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// `‖A τ_{[r]} B‖^{r-1} (A τ_{[r]} B) ≤ A^r τ B^r` on `A = I`, `B = diag(1, x)`.
    #[serde(rename = "norm-order")]
    NormOrder,
    /// `A τ B ≤ I ⟹ A^r τ_{[1/r]} B^r ≤ I` on the diagonal/rank-one 2×2 family.
    #[serde(rename = "unit-implication")]
    UnitImplication,
}

impl FromStr for ScanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm-order" => Ok(ScanMode::NormOrder),
            "unit-implication" => Ok(ScanMode::UnitImplication),
            other => Err(Error::BadMode(other.to_string())),
        }
    }
}

/// Search grids. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Points of the diagonal family, log-spaced in `[x_min, 1]`.
    pub diag_points: usize,
    pub x_min: f64,
    /// Points per axis of the `(x, y)` grid, log-spaced in `[xy_min, xy_max]`.
    pub xy_points: usize,
    pub xy_min: f64,
    pub xy_max: f64,
    pub t_values: Vec<f64>,
    /// Shift `ε` in `B + εI` for the rank-one `B`.
    pub shift: f64,
    /// Perturbation sizes for the `(1+ε, 1-ε, (1+kε)/2)` sub-family.
    pub expansion_eps: Vec<f64>,
    pub k_min: f64,
    pub k_max: f64,
    pub k_points: usize,
    pub tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            diag_points: 400,
            x_min: 1e-4,
            xy_points: 41,
            xy_min: 1e-2,
            xy_max: 1e2,
            t_values: (1..=9).map(|i| i as f64 / 10.0).collect(),
            shift: 1e-9,
            expansion_eps: vec![0.1, 0.05, 0.02, 0.01, 0.005],
            k_min: -20.0,
            k_max: 20.0,
            k_points: 161,
            tol: CHECK_TOL,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.diag_points < 2 || self.xy_points < 2 || self.k_points < 2 {
            return bad("search grids need at least two points");
        }
        if !(self.x_min > 0.0 && self.x_min < 1.0) {
            return bad("x_min must lie in (0, 1)");
        }
        if !(self.xy_min > 0.0 && self.xy_max > self.xy_min) {
            return bad("xy range must be a positive interval");
        }
        if self.t_values.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("t values must lie in (0, 1)");
        }
        if !(self.shift > 0.0) {
            return bad("shift must be positive");
        }
        if self.expansion_eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("expansion eps must lie in (0, 1)");
        }
        if !(self.k_max > self.k_min) || !(self.tol >= 0.0) {
            return bad("k range or tolerance invalid");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub x: f64,
    pub y: f64,
    /// Direction parameter of the rank-one `B`; absent for the diagonal family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// `(ε, k)` when the point came from the perturbative sub-family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<(f64, f64)>,
}

/// A violating instance; `recheck` reproduces its margin from the stored matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub mode: ScanMode,
    pub tau: RepFnSpec,
    pub family_params: FamilyParams,
    /// `ε` added to the rank-one part of `B` (0 for the diagonal family).
    pub shift: f64,
    pub matrices: (SpdMatrix, SpdMatrix),
    pub r: f64,
    pub violated_id: String,
    pub violation_margin: f64,
    /// Disagreement between two algebraically equal evaluations of the
    /// violated side; reported violations exceed it by a wide factor.
    #[serde(default)]
    pub numerical_noise: f64,
}

/// Margin of `‖X‖^{r-1} X ≤ A^r τ B^r` with `X = A τ_{[r]} B`, any `r > 0`.
pub fn bracket_norm_margin(tau: &RepFnSpec, a: &SpdMatrix, b: &SpdMatrix, r: f64) -> Result<f64> {
    let x = two_var_mean(&bracket(tau, r)?, a, b)?;
    let c = x.norm()?.powf(r - 1.0);
    let rhs = two_var_mean(tau, &a.pow(r)?, &b.pow(r)?)?;
    order_margin(&(x.matrix() * c), rhs.matrix())
}

/// Margin of `A^r τ_{[1/r]} B^r ≤ I`, any `r > 0`.
pub fn bracket_weak_margin(tau: &RepFnSpec, a: &SpdMatrix, b: &SpdMatrix, r: f64) -> Result<f64> {
    let y = two_var_mean(&bracket(tau, 1.0 / r)?, &a.pow(r)?, &b.pow(r)?)?;
    order_margin(y.matrix(), &DMatrix::identity(a.dim(), a.dim()))
}

/// The same quantity as [`bracket_weak_margin`] evaluated as
/// `B^r τ_{[1/r]}ᵀ A^r`, i.e. whitened by `B` instead of `A`.
fn bracket_weak_margin_swapped(
    tau: &RepFnSpec,
    a: &SpdMatrix,
    b: &SpdMatrix,
    r: f64,
) -> Result<f64> {
    let t = bracket(tau, 1.0 / r)?.transpose()?;
    let y = two_var_mean(&t, &b.pow(r)?, &a.pow(r)?)?;
    order_margin(y.matrix(), &DMatrix::identity(a.dim(), a.dim()))
}

/// Recomputes the violated check on the stored matrices.
pub fn recheck(cx: &Counterexample) -> Result<f64> {
    let (a, b) = &cx.matrices;
    match cx.violated_id.as_str() {
        NORM_ORDER_ID => bracket_norm_margin(&cx.tau, a, b, cx.r),
        UNIT_IMPLICATION_ID => bracket_weak_margin(&cx.tau, a, b, cx.r),
        other => Err(Error::UnknownInequality(other.to_string())),
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Searches the two-matrix families for a violation at exponent `r`.
/// Returns the first violation found, or `None` once the grid is exhausted.
pub fn optimality_scan(
    tau: &RepFnSpec,
    r: f64,
    mode: ScanMode,
    search: &SearchConfig,
) -> Result<Option<Counterexample>> {
    search.validate()?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::BadR {
            r,
            expected: "(0, inf)",
        });
    }
    match mode {
        ScanMode::NormOrder => scan_diagonal(tau, r, search),
        ScanMode::UnitImplication => {
            if tau.is_left_trivial() || tau.is_right_trivial() {
                return Err(Error::TrivialMean);
            }
            scan_rank_one(tau, r, search)
        }
    }
}

fn scan_diagonal(tau: &RepFnSpec, r: f64, search: &SearchConfig) -> Result<Option<Counterexample>> {
    let a = SpdMatrix::identity(2);
    for x in log_grid(search.x_min, 1.0, search.diag_points) {
        let b = SpdMatrix::from_diagonal(&[1.0, x])?;
        let margin = bracket_norm_margin(tau, &a, &b, r)?;
        if margin < -search.tol {
            return Ok(Some(Counterexample {
                mode: ScanMode::NormOrder,
                tau: tau.clone(),
                family_params: FamilyParams {
                    x,
                    y: 1.0,
                    t: None,
                    expansion: None,
                },
                shift: 0.0,
                matrices: (a, b),
                r,
                violated_id: NORM_ORDER_ID.into(),
                violation_margin: margin,
                numerical_noise: 0.0,
            }));
        }
    }
    Ok(None)
}

/// `A = diag(1/x, 1/y)` and `B = v vᵀ + εI` with `v = (√t, √(1-t))`,
/// both scaled by `1/‖A τ B‖` so that `A τ B ≤ I` is tight.
fn rank_one_pair(
    tau: &RepFnSpec,
    x: f64,
    y: f64,
    t: f64,
    shift: f64,
) -> Result<(SpdMatrix, SpdMatrix)> {
    let a = SpdMatrix::from_diagonal(&[1.0 / x, 1.0 / y])?;
    let off = (t * (1.0 - t)).sqrt();
    let b = SpdMatrix::from_matrix(
        DMatrix::from_row_slice(2, 2, &[t + shift, off, off, 1.0 - t + shift]),
        0.0,
    )?;
    let beta = two_var_mean(tau, &a, &b)?.norm()?;
    Ok((a.scale(1.0 / beta)?, b.scale(1.0 / beta)?))
}

fn scan_rank_one(tau: &RepFnSpec, r: f64, search: &SearchConfig) -> Result<Option<Counterexample>> {
    let mut points = Vec::new();
    let xs = log_grid(search.xy_min, search.xy_max, search.xy_points);
    for &t in &search.t_values {
        for &x in &xs {
            for &y in &xs {
                points.push(FamilyParams {
                    x,
                    y,
                    t: Some(t),
                    expansion: None,
                });
            }
        }
    }
    for &eps in &search.expansion_eps {
        for i in 0..search.k_points {
            let k = search.k_min
                + (search.k_max - search.k_min) * i as f64 / (search.k_points - 1) as f64;
            let t = (1.0 + k * eps) / 2.0;
            if t > 0.0 && t < 1.0 {
                points.push(FamilyParams {
                    x: 1.0 + eps,
                    y: 1.0 - eps,
                    t: Some(t),
                    expansion: Some((eps, k)),
                });
            }
        }
    }
    for p in points {
        let t = p.t.unwrap_or(0.5);
        let (a, b) = rank_one_pair(tau, p.x, p.y, t, search.shift)?;
        let margin = bracket_weak_margin(tau, &a, &b, r)?;
        if margin >= -search.tol {
            continue;
        }
        // Near-singular `B^r` can push rounding past the tolerance; only
        // violations that dominate the disagreement of the two paths count.
        // A failed second evaluation means the pair is beyond resolution.
        let noise = bracket_weak_margin_swapped(tau, &a, &b, r)
            .map_or(f64::INFINITY, |m| (margin - m).abs());
        if margin < -search.tol - NOISE_FACTOR * noise {
            return Ok(Some(Counterexample {
                mode: ScanMode::UnitImplication,
                tau: tau.clone(),
                family_params: p,
                shift: search.shift,
                matrices: (a, b),
                r,
                violated_id: UNIT_IMPLICATION_ID.into(),
                violation_margin: margin,
                numerical_noise: noise,
            }));
        }
    }
    Ok(None)
}
