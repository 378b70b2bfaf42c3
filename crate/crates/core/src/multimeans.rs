//! n-variable operator means.
//!
//! The deformed mean `M_σ(A_1, …, A_n)` is the unique `X` with
//! `X = M(X σ A_1, …, X σ A_n)`. It is computed by iterating that map from
//! `δ^{-1} I`, which produces a Loewner-decreasing sequence. Power means are
//! deformed arithmetic means by `#_α`; the Karcher mean is solved directly
//! and certified by the power-mean enclosure.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfns::RepFnSpec;
use crate::psd::{
    loewner_compare, symmetrize, thompson_distance, LoewnerVerdict, SpdMatrix, Spectrum,
    DEFAULT_LOEWNER_TOL,
};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A probability vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::BadWeights("no weights".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::BadWeights(format!(
                "weight {v} is negative or not finite"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::BadWeights(format!("weights sum to {sum}")));
        }
        Ok(Weights(values))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::BadWeights("no weights".into()));
        }
        Weights::new(vec![1.0 / n as f64; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Weights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Weights::new(v)
    }
}

impl From<Weights> for Vec<f64> {
    fn from(w: Weights) -> Self {
        w.0
    }
}

/// Description of an n-variable mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MultiMeanSpec {
    Arithmetic {
        weights: Weights,
    },
    Harmonic {
        weights: Weights,
    },
    /// `M_σ` for a base mean `M`.
    Deformed {
        base: Box<MultiMeanSpec>,
        sigma: RepFnSpec,
    },
    /// `P_{ω,α}`, `α ∈ [-1, 1] \ {0}`.
    Power {
        weights: Weights,
        alpha: f64,
    },
    Karcher {
        weights: Weights,
    },
    /// `M*(A_1, …, A_n) = M(A_1^{-1}, …, A_n^{-1})^{-1}`.
    Adjoint {
        inner: Box<MultiMeanSpec>,
    },
    /// The two-variable mean `A σ B`.
    KuboAndo {
        sigma: RepFnSpec,
    },
}

impl MultiMeanSpec {
    pub fn arithmetic(weights: Weights) -> Self {
        MultiMeanSpec::Arithmetic { weights }
    }

    pub fn harmonic(weights: Weights) -> Self {
        MultiMeanSpec::Harmonic { weights }
    }

    pub fn karcher(weights: Weights) -> Self {
        MultiMeanSpec::Karcher { weights }
    }

    pub fn power(weights: Weights, alpha: f64) -> Self {
        MultiMeanSpec::Power { weights, alpha }
    }

    pub fn deformed(base: MultiMeanSpec, sigma: RepFnSpec) -> Self {
        MultiMeanSpec::Deformed {
            base: Box::new(base),
            sigma,
        }
    }

    pub fn adjoint(self) -> Self {
        MultiMeanSpec::Adjoint {
            inner: Box::new(self),
        }
    }

    /// The weight vector, if the mean has one.
    pub fn weights(&self) -> Option<&Weights> {
        match self {
            MultiMeanSpec::Arithmetic { weights }
            | MultiMeanSpec::Harmonic { weights }
            | MultiMeanSpec::Power { weights, .. }
            | MultiMeanSpec::Karcher { weights } => Some(weights),
            MultiMeanSpec::Deformed { base, .. } => base.weights(),
            MultiMeanSpec::Adjoint { inner } => inner.weights(),
            MultiMeanSpec::KuboAndo { .. } => None,
        }
    }

    /// Number of arguments the mean takes.
    pub fn arity(&self) -> usize {
        match self {
            MultiMeanSpec::KuboAndo { .. } => 2,
            MultiMeanSpec::Deformed { base, .. } => base.arity(),
            MultiMeanSpec::Adjoint { inner } => inner.arity(),
            other => other.weights().map_or(0, Weights::len),
        }
    }

    /// Checks the structural invariants (power exponent range, deforming
    /// mean not left trivial) recursively.
    pub fn validate(&self) -> Result<()> {
        match self {
            MultiMeanSpec::Power { alpha, .. } => check_alpha(*alpha),
            MultiMeanSpec::Deformed { base, sigma } => {
                if sigma.is_left_trivial() {
                    return Err(Error::SigmaIsLeftTrivial);
                }
                base.validate()
            }
            MultiMeanSpec::Adjoint { inner } => inner.validate(),
            _ => Ok(()),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha == 0.0 {
        return Err(Error::AlphaZero);
    }
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(Error::BadAlpha(alpha));
    }
    Ok(())
}

/// Tolerances and caps for the fixed-point solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Thompson-metric stopping threshold.
    pub dt_tol: f64,
    pub max_iters: usize,
    /// Power-mean exponent of the Karcher enclosure.
    pub karcher_alpha: f64,
    /// Lower clamp for the initialization parameter `δ`.
    pub delta_floor: f64,
    /// Tolerance of the scalar deformed representing function.
    pub scalar_tol: f64,
    pub scalar_max_iters: usize,
    /// Whether Karcher results are checked against the power-mean enclosure.
    pub certify_karcher: bool,
    /// Slack of the per-step monotonicity assertion.
    pub monotone_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_tol: 1e-11,
            max_iters: 20_000,
            karcher_alpha: 1.0 / 64.0,
            delta_floor: 1e-8,
            scalar_tol: 1e-12,
            scalar_max_iters: 10_000,
            certify_karcher: true,
            monotone_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_tol > 0.0) {
            return Err(Error::Config(format!(
                "dt_tol = {} must be positive",
                self.dt_tol
            )));
        }
        if self.max_iters == 0 || self.scalar_max_iters == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !(self.karcher_alpha > 0.0 && self.karcher_alpha <= 1.0) {
            return Err(Error::Config(format!(
                "karcher_alpha = {} outside (0, 1]",
                self.karcher_alpha
            )));
        }
        if !(self.delta_floor > 0.0 && self.delta_floor <= 1.0) {
            return Err(Error::Config(format!(
                "delta_floor = {} outside (0, 1]",
                self.delta_floor
            )));
        }
        if !(self.scalar_tol > 0.0) || !(self.monotone_tol >= 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn inner(&self) -> SolverConfig {
        SolverConfig {
            certify_karcher: false,
            dt_tol: self.dt_tol * 0.1,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanResult {
    pub value: SpdMatrix,
    pub iterations: usize,
    pub residual_dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enclosure_gap: Option<f64>,
}

impl MeanResult {
    fn exact(value: SpdMatrix) -> Self {
        MeanResult {
            value,
            iterations: 0,
            residual_dt: 0.0,
            enclosure_gap: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elementary {
    Arithmetic,
    Harmonic,
}

/// Which side of the deformed mean a comparison bound claims.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Lower,
    Upper,
}

fn check_inputs(n_weights: Option<usize>, mats: &[SpdMatrix]) -> Result<usize> {
    let first = mats.first().ok_or(Error::NoInputs)?;
    for m in &mats[1..] {
        first.check_same_dim(m)?;
    }
    if let Some(k) = n_weights {
        if k != mats.len() {
            return Err(Error::ArityMismatch {
                weights: k,
                matrices: mats.len(),
            });
        }
    }
    Ok(first.dim())
}

fn weighted_sum(w: &Weights, mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats[0].nrows();
    let mut acc = DMatrix::zeros(n, n);
    for (wj, m) in w.values().iter().zip(mats) {
        acc += m * *wj;
    }
    symmetrize(&mut acc);
    acc
}

fn invert_all(mats: &[SpdMatrix]) -> Result<Vec<SpdMatrix>> {
    mats.iter().map(SpdMatrix::inverse).collect()
}

/// `Σ w_j A_j` or `(Σ w_j A_j^{-1})^{-1}`.
pub fn elementary_mean(kind: Elementary, w: &Weights, mats: &[SpdMatrix]) -> Result<SpdMatrix> {
    check_inputs(Some(w.len()), mats)?;
    match kind {
        Elementary::Arithmetic => {
            let raw: Vec<DMatrix<f64>> = mats.iter().map(|m| m.matrix().clone()).collect();
            Ok(SpdMatrix::from_sym_unchecked(weighted_sum(w, &raw)))
        }
        Elementary::Harmonic => {
            let inv = invert_all(mats)?;
            elementary_mean(Elementary::Arithmetic, w, &inv)?.inverse()
        }
    }
}

/// Evaluates any [`MultiMeanSpec`].
pub fn evaluate(
    spec: &MultiMeanSpec,
    mats: &[SpdMatrix],
    cfg: &SolverConfig,
) -> Result<MeanResult> {
    spec.validate()?;
    cfg.validate()?;
    check_inputs(Some(spec.arity()), mats)?;
    eval_unchecked(spec, mats, cfg)
}

fn eval_unchecked(
    spec: &MultiMeanSpec,
    mats: &[SpdMatrix],
    cfg: &SolverConfig,
) -> Result<MeanResult> {
    match spec {
        MultiMeanSpec::Arithmetic { weights } => Ok(MeanResult::exact(elementary_mean(
            Elementary::Arithmetic,
            weights,
            mats,
        )?)),
        MultiMeanSpec::Harmonic { weights } => Ok(MeanResult::exact(elementary_mean(
            Elementary::Harmonic,
            weights,
            mats,
        )?)),
        MultiMeanSpec::Deformed { base, sigma } => deformed_mean(base, sigma, mats, cfg),
        MultiMeanSpec::Power { weights, alpha } => power_mean(weights, *alpha, mats, cfg),
        MultiMeanSpec::Karcher { weights } => karcher_mean(weights, mats, cfg),
        MultiMeanSpec::Adjoint { inner } => adjoint_eval(inner, mats, cfg),
        MultiMeanSpec::KuboAndo { sigma } => Ok(MeanResult::exact(crate::meanfns::two_var_mean(
            sigma, &mats[0], &mats[1],
        )?)),
    }
}

/// `M(A_1^{-1}, …, A_n^{-1})^{-1}`.
pub fn adjoint_eval(
    spec: &MultiMeanSpec,
    mats: &[SpdMatrix],
    cfg: &SolverConfig,
) -> Result<MeanResult> {
    let inv = invert_all(mats)?;
    let mut res = evaluate(spec, &inv, cfg)?;
    res.value = res.value.inverse()?;
    Ok(res)
}

/// Starting scale `δ = min(1, min λ_min(A_j), 1/max ‖A_j‖)`, clamped below.
/// Returns `(δ, clamped)`.
fn initial_delta(mats: &[SpdMatrix], floor: f64) -> Result<(f64, bool)> {
    let mut delta = 1.0_f64;
    for m in mats {
        let spec = m.eigen()?;
        delta = delta.min(spec.min()).min(1.0 / spec.max());
    }
    if delta < floor {
        Ok((floor, true))
    } else {
        Ok((delta, false))
    }
}

/// Deformed mean `M_σ(A_1, …, A_n)`.
///
/// Multiple of `ε·cond` treated as the attainable residual of an iterate.
const ROUNDING_FLOOR: f64 = 32.0;

/// Iterates `X ← M(X σ A_1, …, X σ A_n)` from `δ^{-1} I`. By congruence
/// invariance of `M`, `X^{-1/2} F(X) X^{-1/2} = M(f(X^{-1/2} A_j X^{-1/2}))`,
/// so the step size in the Thompson metric and the Loewner monotonicity
/// check both read off that one matrix. Returns the first iterate whose
/// fixed-point residual is below `cfg.dt_tol`, or below the rounding
/// level `ROUNDING_FLOOR·ε·cond` for badly conditioned inputs.
pub fn deformed_mean(
    base: &MultiMeanSpec,
    sigma: &RepFnSpec,
    mats: &[SpdMatrix],
    cfg: &SolverConfig,
) -> Result<MeanResult> {
    if sigma.is_left_trivial() {
        return Err(Error::SigmaIsLeftTrivial);
    }
    base.validate()?;
    cfg.validate()?;
    let dim = check_inputs(Some(base.arity()), mats)?;
    if mats.len() == 1 {
        return Ok(MeanResult::exact(mats[0].clone()));
    }
    let inner_cfg = cfg.inner();
    if sigma.is_right_trivial() {
        return eval_unchecked(base, mats, &inner_cfg);
    }
    let (delta, clamped) = initial_delta(mats, cfg.delta_floor)?;
    let mut x = SpdMatrix::scaled_identity(dim, 1.0 / delta)?;
    let mut residual = f64::INFINITY;
    for k in 0..cfg.max_iters {
        let hp = x.half_powers()?;
        let mut mapped = Vec::with_capacity(mats.len());
        let mut widest = 0.0_f64;
        for a in mats {
            let c = Spectrum::of(&hp.whiten(a.matrix()))?;
            widest = widest.max(c.max() / c.min());
            let mut vals = Vec::with_capacity(dim);
            for &lambda in c.values.iter() {
                let v = sigma.value(lambda.max(f64::MIN_POSITIVE))?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::domain(format!(
                        "deforming mean value {v} at {lambda:e}"
                    )));
                }
                vals.push(v);
            }
            mapped.push(SpdMatrix::from_sym_unchecked(c.rebuild(&vals)));
        }
        let y = eval_unchecked(base, &mapped, &inner_cfg)?.value;
        let ey = y.eigen()?;
        residual = ey
            .values
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.ln().abs()));
        // whitening by X loses about ε·cond digits
        let floor = ROUNDING_FLOOR * f64::EPSILON * (hp.condition + widest);
        if residual < cfg.dt_tol.max(floor) {
            return Ok(MeanResult {
                value: x,
                iterations: k,
                residual_dt: residual,
                enclosure_gap: None,
            });
        }
        if !clamped && ey.max() > 1.0 + cfg.monotone_tol {
            return Err(Error::SolverInvariant {
                iteration: k,
                detail: format!(
                    "iterate increased in Loewner order (relative eigenvalue {})",
                    ey.max()
                ),
            });
        }
        x = SpdMatrix::from_sym_unchecked(hp.color(y.matrix()));
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iters,
        residual,
        last: Some(Box::new(x)),
    })
}

/// Fixed-point residual `d_T(X, M(X σ A_1, …, X σ A_n))`.
pub fn deformed_residual(
    base: &MultiMeanSpec,
    sigma: &RepFnSpec,
    mats: &[SpdMatrix],
    x: &SpdMatrix,
    cfg: &SolverConfig,
) -> Result<f64> {
    let fx = deformed_map(base, sigma, mats, x, cfg)?;
    thompson_distance(x, &fx)
}

/// `M(Y σ A_1, …, Y σ A_n)`.
pub fn deformed_map(
    base: &MultiMeanSpec,
    sigma: &RepFnSpec,
    mats: &[SpdMatrix],
    y: &SpdMatrix,
    cfg: &SolverConfig,
) -> Result<SpdMatrix> {
    let args = mats
        .iter()
        .map(|a| crate::meanfns::two_var_mean(sigma, y, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate(base, &args, &cfg.inner())?.value)
}

/// Comparison principle: if `Y ≤ M(Y σ A_j)` then `Y ≤ M_σ(A)` (and the
/// same with `≥`). Checks the hypothesis first and returns the verdict of
/// comparing `Y` with the computed deformed mean.
pub fn comparison_bound(
    base: &MultiMeanSpec,
    sigma: &RepFnSpec,
    mats: &[SpdMatrix],
    y: &SpdMatrix,
    direction: Bound,
    cfg: &SolverConfig,
) -> Result<LoewnerVerdict> {
    let fy = deformed_map(base, sigma, mats, y, cfg)?;
    let hyp = loewner_compare(y, &fy, DEFAULT_LOEWNER_TOL)?;
    let ok = match direction {
        Bound::Lower => hyp.is_le(),
        Bound::Upper => hyp.is_ge(),
    };
    if !ok {
        return Err(Error::HypothesisFails { margin: hyp.margin });
    }
    let x = deformed_mean(base, sigma, mats, cfg)?.value;
    loewner_compare(y, &x, DEFAULT_LOEWNER_TOL)
}

/// Power mean `P_{ω,α}`; negative `α` goes through inverted inputs.
pub fn power_mean(
    w: &Weights,
    alpha: f64,
    mats: &[SpdMatrix],
    cfg: &SolverConfig,
) -> Result<MeanResult> {
    check_alpha(alpha)?;
    if alpha < 0.0 {
        let inv = invert_all(mats)?;
        let mut res = power_mean(w, -alpha, &inv, cfg)?;
        res.value = res.value.inverse()?;
        return Ok(res);
    }
    deformed_mean(
        &MultiMeanSpec::arithmetic(w.clone()),
        &RepFnSpec::geometric(alpha)?,
        mats,
        cfg,
    )
}

/// Gradient `Σ w_j log(X^{-1/2} A_j X^{-1/2})` at `X` with `X^{1/2}`, the
/// cost `Σ w_j ‖log(X^{-1/2} A_j X^{-1/2})‖_F²` and the step size
/// `2 / Σ w_j (c_j+1)/(c_j-1) log c_j`, `c_j` the condition numbers of the
/// whitened inputs.
struct KarcherStep {
    grad: DMatrix<f64>,
    half: DMatrix<f64>,
    cost: f64,
    theta: f64,
    /// Residual level below which rounding in the whitening dominates.
    floor: f64,
}

fn karcher_gradient(w: &Weights, mats: &[SpdMatrix], x: &SpdMatrix) -> Result<KarcherStep> {
    let hp = x.half_powers()?;
    let mut logs = Vec::with_capacity(mats.len());
    let (mut cost, mut denom, mut widest) = (0.0, 0.0, 0.0_f64);
    for (wj, a) in w.values().iter().zip(mats) {
        let s = Spectrum::of(&hp.whiten(a.matrix()))?;
        let l = s.apply(f64::ln)?;
        let spread = (s.max() / s.min()).ln();
        // (c+1)/(c-1) log c = spread / tanh(spread/2), limit 2
        denom += wj
            * if spread < 1e-8 {
                2.0
            } else {
                spread / (0.5 * spread).tanh()
            };
        cost += wj * l.norm_squared();
        widest = widest.max(spread);
        logs.push(l);
    }
    Ok(KarcherStep {
        grad: weighted_sum(w, &logs),
        half: hp.half,
        cost,
        theta: 2.0 / denom,
        floor: ROUNDING_FLOOR * f64::EPSILON * (hp.condition + widest.exp()),
    })
}

fn sym_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(Spectrum::of(m)?.abs_max())
}

/// Karcher mean by Riemannian gradient descent from the arithmetic mean,
/// with the condition-number step size and backtracking on the cost.
pub fn karcher_mean(w: &Weights, mats: &[SpdMatrix], cfg: &SolverConfig) -> Result<MeanResult> {
    cfg.validate()?;
    check_inputs(Some(w.len()), mats)?;
    if mats.iter().all(|m| m == &mats[0]) {
        return Ok(MeanResult::exact(mats[0].clone()));
    }
    let mut x = elementary_mean(Elementary::Arithmetic, w, mats)?;
    let mut cur = karcher_gradient(w, mats, &x)?;
    let mut residual = sym_norm(&cur.grad)?;
    let mut damp = 1.0_f64;
    let mut iterations = 0;
    while residual >= cfg.dt_tol.max(cur.floor) {
        if iterations >= cfg.max_iters {
            return Err(Error::NoConvergence {
                iterations,
                residual,
                last: Some(Box::new(x)),
            });
        }
        iterations += 1;
        let step = crate::psd::sym_function(&(&cur.grad * (cur.theta * damp)), f64::exp)?;
        let mut cand = &cur.half * step * &cur.half;
        symmetrize(&mut cand);
        let cand = SpdMatrix::from_sym_unchecked(cand);
        let next = karcher_gradient(w, mats, &cand)?;
        let r2 = sym_norm(&next.grad)?;
        if next.cost <= cur.cost * (1.0 + 1e-14) || r2 < residual {
            x = cand;
            cur = next;
            residual = r2;
            damp = (damp * 2.0).min(1.0);
        } else {
            damp *= 0.5;
            if damp < 1e-6 {
                // stalled at rounding level
                if residual < 10.0 * cfg.dt_tol.max(cur.floor) {
                    break;
                }
                return Err(Error::NoConvergence {
                    iterations,
                    residual,
                    last: Some(Box::new(x)),
                });
            }
        }
    }
    let mut result = MeanResult {
        value: x,
        iterations,
        residual_dt: residual,
        enclosure_gap: None,
    };
    if cfg.certify_karcher {
        let (gap, lower, upper) = karcher_enclosure(w, mats, &result.value, cfg)?;
        if lower < 0.0 || upper < 0.0 {
            return Err(Error::CertificationFailure { lower, upper });
        }
        result.enclosure_gap = Some(gap);
    }
    Ok(result)
}

/// Power-mean enclosure `P_{ω,-α} ≤ G ≤ P_{ω,α}` at `α = cfg.karcher_alpha`.
///
/// Returns the gap `d_T(P_{ω,α}, P_{ω,-α})` and the two Loewner margins,
/// negative when the corresponding side fails at the default tolerance.
pub fn karcher_enclosure(
    w: &Weights,
    mats: &[SpdMatrix],
    g: &SpdMatrix,
    cfg: &SolverConfig,
) -> Result<(f64, f64, f64)> {
    let inner = cfg.inner();
    let hi = power_mean(w, cfg.karcher_alpha, mats, &inner)?.value;
    let lo = power_mean(w, -cfg.karcher_alpha, mats, &inner)?.value;
    let lower = loewner_compare(&lo, g, DEFAULT_LOEWNER_TOL)?;
    let upper = loewner_compare(g, &hi, DEFAULT_LOEWNER_TOL)?;
    let side = |v: LoewnerVerdict| {
        if v.is_le() {
            v.margin.max(0.0)
        } else {
            v.margin.min(-f64::MIN_POSITIVE)
        }
    };
    Ok((thompson_distance(&hi, &lo)?, side(lower), side(upper)))
}
