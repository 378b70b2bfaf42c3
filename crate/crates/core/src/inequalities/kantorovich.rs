use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_r, order_margin, scaled, CheckReport, Ensemble};
use crate::error::{Error, Result};
use crate::meanfns::RepFnSpec;
use crate::multimeans::{MultiMeanSpec, SolverConfig, Weights};
use crate::psd::{spectral_stats, SpdMatrix, Spectrum};

const BOUNDS_SLACK: f64 = 1e-10;

/// Generalized Kantorovich constant
/// `K(h,p) = (h^p - h) / ((p-1)(h-1)) · ((p-1)/p · (h^p - 1)/(h^p - h))^p`
/// for `h > 1`, with `K(h,1) = K(h,0) = 1`.
///
/// Evaluated through `φ = (h^{p-1} - 1)/(p-1)` so that the removable
/// singularity at `p = 1` costs no accuracy.
pub fn kantorovich(h: f64, p: f64) -> Result<f64> {
    if !(h > 1.0 && h.is_finite()) {
        return Err(Error::BadH(h));
    }
    if !p.is_finite() {
        return Err(Error::BadParameter(format!("Kantorovich exponent {p}")));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(1.0);
    }
    let l = h.ln();
    let d = p - 1.0;
    let phi = if (d * l).abs() < 1e-8 {
        l * (1.0 + 0.5 * d * l)
    } else {
        (d * l).exp_m1() / d
    };
    let hp_minus_one = (p * l).exp_m1();
    let first = h * phi / (h - 1.0);
    let second = hp_minus_one / (p * h * phi);
    Ok(first * second.powf(p))
}

/// `K(h,p)` extended by its limit `1` at `h = 1`, for ratios that are
/// mathematically `≥ 1` but may round to or just below it.
fn kantorovich_ext(h: f64, p: f64) -> Result<f64> {
    if h <= 1.0 && h > 1.0 - 1e-12 {
        return Ok(1.0);
    }
    kantorovich(h, p)
}

fn check_bounds(mats: &[SpdMatrix], bounds: (f64, f64)) -> Result<()> {
    let (m, big_m) = bounds;
    if !(m > 0.0 && big_m >= m && big_m.is_finite()) {
        return Err(Error::BadInterval { lo: m, hi: big_m });
    }
    for (index, a) in mats.iter().enumerate() {
        let s = a.eigen()?;
        let (lo, hi) = (s.min(), s.max());
        if lo < m * (1.0 - BOUNDS_SLACK) || hi > big_m * (1.0 + BOUNDS_SLACK) {
            return Err(Error::BoundsViolated {
                index,
                m,
                big_m,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

/// Means covered by the Kantorovich-type reverse inequalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReverseFamily {
    /// `P_α(A^r)` against `P_α(A)`; upper bound for `α > 0`, lower for `α < 0`.
    Power { weights: Weights, alpha: f64 },
    /// `P_{α/r}(A^r)` between two multiples of `P_α(A)`.
    PowerModified { weights: Weights, alpha: f64 },
    /// `M_{σ_{1/r}}(A^r)` between two multiples of `M_σ(A)`.
    Deformed {
        base: MultiMeanSpec,
        sigma: RepFnSpec,
    },
    /// `G(A^r)` between two multiples of `G(A)`.
    Karcher { weights: Weights },
}

impl ReverseFamily {
    pub fn id(&self) -> &'static str {
        match self {
            ReverseFamily::Power { .. } => "power-reverse",
            ReverseFamily::PowerModified { .. } => "power-modified-reverse",
            ReverseFamily::Deformed { .. } => "deformed-reverse",
            ReverseFamily::Karcher { .. } => "karcher-reverse",
        }
    }
}

/// Reverse power inequalities for inputs with `m I ≤ A_j ≤ M I`, `r ≥ 1`.
/// The constants use `h = (M/m)·κ(X)` where `X` is the mean at `r = 1`.
pub fn check_reverse(
    family: &ReverseFamily,
    mats: &[SpdMatrix],
    r: f64,
    bounds: (f64, f64),
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    Ensemble::new(mats, cfg).check_reverse(family, r, bounds)
}

impl Ensemble<'_> {
    pub fn check_reverse(
        &self,
        family: &ReverseFamily,
        r: f64,
        bounds: (f64, f64),
    ) -> Result<CheckReport> {
        check_r(r, true)?;
        check_bounds(self.mats(), bounds)?;
        let kappa0 = bounds.1 / bounds.0;
        let (x_spec, y_spec, y_at) = match family {
            ReverseFamily::Power { weights, alpha } => {
                let s = MultiMeanSpec::power(weights.clone(), *alpha);
                (s.clone(), s, r)
            }
            ReverseFamily::PowerModified { weights, alpha } => (
                MultiMeanSpec::power(weights.clone(), *alpha),
                MultiMeanSpec::power(weights.clone(), alpha / r),
                r,
            ),
            ReverseFamily::Deformed { base, sigma } => (
                MultiMeanSpec::deformed(base.clone(), sigma.clone()),
                MultiMeanSpec::deformed(base.clone(), super::inner_power(sigma, 1.0 / r)?),
                r,
            ),
            ReverseFamily::Karcher { weights } => {
                let s = MultiMeanSpec::karcher(weights.clone());
                (s.clone(), s, r)
            }
        };
        x_spec.validate()?;
        y_spec.validate()?;
        let x = self.mean(&x_spec, 1.0)?;
        let y = self.mean(&y_spec, y_at)?;
        let stats = spectral_stats(&x)?;
        let h = kappa0 * stats.condition_number;
        let k = kantorovich_ext(h, r)?;
        let lam = stats.lambda_min.powf(r - 1.0);
        let nrm = stats.op_norm.powf(r - 1.0);
        let mut constants = BTreeMap::from([
            ("r".to_string(), r),
            ("h".to_string(), h),
            ("kantorovich".to_string(), k),
        ]);
        let margins = match family {
            ReverseFamily::Power { alpha, .. } => {
                let a = *alpha;
                let k2 = kantorovich_ext(h.powf(a.abs()), r)?.powf(1.0 / a);
                constants.insert("kantorovich_alpha".into(), k2);
                if a > 0.0 {
                    let c = k * k2 * lam;
                    constants.insert("upper_factor".into(), c);
                    vec![("upper", order_margin(y.matrix(), &scaled(&x, c))?)]
                } else {
                    let c = k2 * nrm / k;
                    constants.insert("lower_factor".into(), c);
                    vec![("lower", order_margin(&scaled(&x, c), y.matrix())?)]
                }
            }
            _ => {
                let lo = nrm / k;
                let hi = k * lam;
                constants.insert("lower_factor".into(), lo);
                constants.insert("upper_factor".into(), hi);
                vec![
                    ("lower", order_margin(&scaled(&x, lo), y.matrix())?),
                    ("upper", order_margin(y.matrix(), &scaled(&x, hi))?),
                ]
            }
        };
        Ok(CheckReport::from_margins(family.id(), &margins, constants))
    }
}

/// At `r = 2`, compares the reverse upper bound factor `K(h,2)·λ_min(G)`
/// with the forward factor `‖G‖`, `h = (M/m)·κ(G)`. Returns
/// `(reverse, forward, predicted)` where `predicted` is the closed-form
/// criterion `(h+1)² < 4 h κ(G)` for the reverse bound being sharper.
pub fn reverse_improvement(
    w: &Weights,
    mats: &[SpdMatrix],
    bounds: (f64, f64),
    cfg: &SolverConfig,
) -> Result<(f64, f64, bool)> {
    check_bounds(mats, bounds)?;
    let g = crate::multimeans::karcher_mean(w, mats, cfg)?.value;
    let stats = spectral_stats(&g)?;
    let kappa = stats.condition_number;
    let h = bounds.1 / bounds.0 * kappa;
    let reverse = kantorovich_ext(h, 2.0)? * stats.lambda_min;
    let predicted = (h + 1.0).powi(2) < 4.0 * h * kappa;
    Ok((reverse, stats.op_norm, predicted))
}

/// `C A^r C ≤ K(M/(mμ), r) (C A C)^r` for `m I ≤ A ≤ M I`, `μ I ≤ C² ≤ I`, `r ≥ 1`.
pub fn check_congruence_kantorovich(
    a: &SpdMatrix,
    c: &SpdMatrix,
    r: f64,
    bounds: (f64, f64),
    mu: f64,
) -> Result<CheckReport> {
    check_r(r, true)?;
    a.check_same_dim(c)?;
    check_bounds(std::slice::from_ref(a), bounds)?;
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::BadParameter(format!("mu = {mu} outside (0, 1]")));
    }
    let c2 = Spectrum::of(&(c.matrix() * c.matrix()))?;
    if c2.min() < mu * (1.0 - BOUNDS_SLACK) || c2.max() > 1.0 + BOUNDS_SLACK {
        return Err(Error::BoundsViolated {
            index: 1,
            m: mu,
            big_m: 1.0,
            lo: c2.min(),
            hi: c2.max(),
        });
    }
    let h = bounds.1 / (bounds.0 * mu);
    let k = kantorovich_ext(h, r)?;
    let lhs = c.matrix() * a.pow(r)?.matrix() * c.matrix();
    let cac = SpdMatrix::from_sym_unchecked(c.matrix() * a.matrix() * c.matrix());
    let rhs = cac.pow(r)?.matrix() * k;
    let margin = order_margin(&lhs, &rhs)?;
    let constants = BTreeMap::from([
        ("r".to_string(), r),
        ("h".to_string(), h),
        ("kantorovich".to_string(), k),
    ]);
    Ok(CheckReport::from_margins(
        "kantorovich-congruence",
        &[("order", margin)],
        constants,
    ))
}

/// `Σ w_j A_j^r ≤ K(M/m, r) (Σ w_j A_j)^r` for `m I ≤ A_j ≤ M I`, `r ≥ 1`.
pub fn check_power_sum_kantorovich(
    w: &Weights,
    mats: &[SpdMatrix],
    r: f64,
    bounds: (f64, f64),
) -> Result<CheckReport> {
    check_r(r, true)?;
    if w.len() != mats.len() {
        return Err(Error::ArityMismatch {
            weights: w.len(),
            matrices: mats.len(),
        });
    }
    check_bounds(mats, bounds)?;
    let h = bounds.1 / bounds.0;
    let k = kantorovich_ext(h, r)?;
    let mut lhs = nalgebra::DMatrix::zeros(mats[0].dim(), mats[0].dim());
    for (wj, a) in w.values().iter().zip(mats) {
        lhs += a.pow(r)?.matrix() * *wj;
    }
    let mean =
        crate::multimeans::elementary_mean(crate::multimeans::Elementary::Arithmetic, w, mats)?;
    let rhs = mean.pow(r)?.matrix() * k;
    let margin = order_margin(&lhs, &rhs)?;
    let constants = BTreeMap::from([
        ("r".to_string(), r),
        ("h".to_string(), h),
        ("kantorovich".to_string(), k),
    ]);
    Ok(CheckReport::from_margins(
        "kantorovich-power-sum",
        &[("order", margin)],
        constants,
    ))
}
