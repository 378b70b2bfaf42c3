//! Representing functions of two-variable operator means.
//!
//! A mean `σ` is determined by an operator monotone `f` with `f(1) = 1`
//! through `A σ B = A^{1/2} f(A^{-1/2} B A^{-1/2}) A^{1/2}`. A [`RepFnSpec`]
//! is a catalog entry plus an ordered stack of transforms on `f`.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::multimeans::SolverConfig;
use crate::psd::SpdMatrix;

const DERIVATIVE_STEP: f64 = 1e-6;
const TRIVIAL_SLOPE_TOL: f64 = 1e-8;

/// Catalog entry of a representing function.
#[derive(Clone, Debug, PartialEq)]
pub enum RepFnKind {
    /// `f = 1`, i.e. `A l B = A`.
    LeftTrivial,
    /// `f(x) = x`, i.e. `A r B = B`.
    RightTrivial,
    /// `f(x) = 1 - w + w x`.
    Arithmetic { w: f64 },
    /// `f(x) = (1 - α + α/x)^{-1}`.
    Harmonic { alpha: f64 },
    /// `f(x) = x^α`.
    Geometric { alpha: f64 },
    /// Convex combination `Σ c_i f_i`.
    ConvexCombo(Vec<(f64, RepFnSpec)>),
    /// The deformed mean `τ_σ`, evaluated pointwise by [`deformed_rep`].
    Deformed {
        tau: Box<RepFnSpec>,
        sigma: Box<RepFnSpec>,
    },
}

/// A transform applied on top of a representing function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    /// `1 / f(1/x)`.
    Adjoint,
    /// `x f(1/x)`.
    Transpose,
    /// `f(x^r)`.
    PowerInner(f64),
    /// `f(x^r)^{1/r}`.
    PowerInnerOuter(f64),
    /// `f(x)^p` for `p ∈ (0, 1]`.
    PowerOuter(f64),
}

/// Transform names without their parameter, for [`rep_transform`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformOp {
    Adjoint,
    Transpose,
    PowerInner,
    PowerInnerOuter,
    PowerOuter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepFnSpec {
    kind: RepFnKind,
    transforms: Vec<Transform>,
    derivative_at_one: f64,
}

/// Worst value of a scalar margin over an `(x, r)` grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub worst_margin: f64,
    pub worst_point: (f64, f64),
    pub grid_size: usize,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::BadParameter(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::BadParameter(format!(
            "{name} = {v} must be positive"
        )));
    }
    Ok(())
}

impl Transform {
    fn validate(&self) -> Result<()> {
        match *self {
            Transform::Adjoint | Transform::Transpose => Ok(()),
            Transform::PowerInner(r) | Transform::PowerInnerOuter(r) => check_positive("r", r),
            Transform::PowerOuter(p) => {
                check_positive("p", p)?;
                if p > 1.0 {
                    return Err(Error::BadParameter(format!("p = {p} exceeds 1")));
                }
                Ok(())
            }
        }
    }

    fn op(&self) -> TransformOp {
        match self {
            Transform::Adjoint => TransformOp::Adjoint,
            Transform::Transpose => TransformOp::Transpose,
            Transform::PowerInner(_) => TransformOp::PowerInner,
            Transform::PowerInnerOuter(_) => TransformOp::PowerInnerOuter,
            Transform::PowerOuter(_) => TransformOp::PowerOuter,
        }
    }

    fn param(&self) -> Option<f64> {
        match *self {
            Transform::Adjoint | Transform::Transpose => None,
            Transform::PowerInner(r) | Transform::PowerInnerOuter(r) | Transform::PowerOuter(r) => {
                Some(r)
            }
        }
    }
}

impl TransformOp {
    fn name(self) -> &'static str {
        match self {
            TransformOp::Adjoint => "adjoint",
            TransformOp::Transpose => "transpose",
            TransformOp::PowerInner => "power_inner",
            TransformOp::PowerInnerOuter => "power_inner_outer",
            TransformOp::PowerOuter => "power_outer",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "adjoint" => TransformOp::Adjoint,
            "transpose" => TransformOp::Transpose,
            "power_inner" => TransformOp::PowerInner,
            "power_inner_outer" => TransformOp::PowerInnerOuter,
            "power_outer" => TransformOp::PowerOuter,
            other => return Err(Error::UnknownKind(other.to_string())),
        })
    }

    fn with(self, r: Option<f64>) -> Result<Transform> {
        let need = || r.ok_or(Error::MissingParameter("r"));
        let t = match self {
            TransformOp::Adjoint => Transform::Adjoint,
            TransformOp::Transpose => Transform::Transpose,
            TransformOp::PowerInner => Transform::PowerInner(need()?),
            TransformOp::PowerInnerOuter => Transform::PowerInnerOuter(need()?),
            TransformOp::PowerOuter => Transform::PowerOuter(need()?),
        };
        t.validate()?;
        Ok(t)
    }
}

impl RepFnSpec {
    pub fn new(kind: RepFnKind) -> Result<Self> {
        Self::with_transforms(kind, Vec::new())
    }

    pub fn with_transforms(kind: RepFnKind, transforms: Vec<Transform>) -> Result<Self> {
        match &kind {
            RepFnKind::LeftTrivial | RepFnKind::RightTrivial => {}
            RepFnKind::Arithmetic { w } => check_unit("w", *w)?,
            RepFnKind::Harmonic { alpha } | RepFnKind::Geometric { alpha } => {
                check_unit("alpha", *alpha)?
            }
            RepFnKind::ConvexCombo(terms) => {
                if terms.is_empty() {
                    return Err(Error::BadWeights("empty convex combination".into()));
                }
                if let Some((c, _)) = terms.iter().find(|(c, _)| !(*c >= 0.0 && c.is_finite())) {
                    return Err(Error::BadWeights(format!("negative weight {c}")));
                }
                let sum: f64 = terms.iter().map(|(c, _)| c).sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::BadWeights(format!("weights sum to {sum}")));
                }
            }
            RepFnKind::Deformed { sigma, .. } => {
                if sigma.is_left_trivial() {
                    return Err(Error::SigmaIsLeftTrivial);
                }
            }
        }
        for t in &transforms {
            t.validate()?;
        }
        let mut spec = RepFnSpec {
            kind,
            transforms,
            derivative_at_one: 0.0,
        };
        spec.derivative_at_one = spec.numeric_derivative_at_one()?;
        Ok(spec)
    }

    pub fn left_trivial() -> Self {
        Self::new(RepFnKind::LeftTrivial).expect("valid")
    }

    pub fn right_trivial() -> Self {
        Self::new(RepFnKind::RightTrivial).expect("valid")
    }

    pub fn arithmetic(w: f64) -> Result<Self> {
        Self::new(RepFnKind::Arithmetic { w })
    }

    pub fn harmonic(alpha: f64) -> Result<Self> {
        Self::new(RepFnKind::Harmonic { alpha })
    }

    pub fn geometric(alpha: f64) -> Result<Self> {
        Self::new(RepFnKind::Geometric { alpha })
    }

    pub fn convex_combo(terms: Vec<(f64, RepFnSpec)>) -> Result<Self> {
        Self::new(RepFnKind::ConvexCombo(terms))
    }

    pub fn deformed(tau: RepFnSpec, sigma: RepFnSpec) -> Result<Self> {
        Self::new(RepFnKind::Deformed {
            tau: Box::new(tau),
            sigma: Box::new(sigma),
        })
    }

    /// `¼ (x+1)/2 + ¾ 2x/(x+1)`: operator monotone, satisfies
    /// `f(x^r) ≥ r f(x) - r + 1` but not `f(x^r) ≥ f(x)^r`.
    pub fn non_pmi_blend() -> Self {
        Self::convex_combo(vec![
            (0.25, Self::arithmetic(0.5).expect("valid")),
            (0.75, Self::harmonic(0.5).expect("valid")),
        ])
        .expect("valid")
    }

    pub fn kind(&self) -> &RepFnKind {
        &self.kind
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    /// `f'(1)` by central difference with step `1e-6`.
    pub fn derivative_at_one(&self) -> f64 {
        self.derivative_at_one
    }

    pub fn is_left_trivial(&self) -> bool {
        self.derivative_at_one.abs() < TRIVIAL_SLOPE_TOL
    }

    pub fn is_right_trivial(&self) -> bool {
        (self.derivative_at_one - 1.0).abs() < TRIVIAL_SLOPE_TOL
    }

    /// Appends a transform, revalidating and recomputing `f'(1)`.
    pub fn then(&self, t: Transform) -> Result<Self> {
        let mut transforms = self.transforms.clone();
        transforms.push(t);
        Self::with_transforms(self.kind.clone(), transforms)
    }

    pub fn adjoint(&self) -> Result<Self> {
        self.then(Transform::Adjoint)
    }

    pub fn transpose(&self) -> Result<Self> {
        self.then(Transform::Transpose)
    }

    pub fn power_inner(&self, r: f64) -> Result<Self> {
        self.then(Transform::PowerInner(r))
    }

    pub fn power_inner_outer(&self, r: f64) -> Result<Self> {
        self.then(Transform::PowerInnerOuter(r))
    }

    pub fn power_outer(&self, p: f64) -> Result<Self> {
        self.then(Transform::PowerOuter(p))
    }

    fn numeric_derivative_at_one(&self) -> Result<f64> {
        let h = DERIVATIVE_STEP;
        Ok((self.value(1.0 + h)? - self.value(1.0 - h)?) / (2.0 * h))
    }

    fn base_value(&self, t: f64) -> Result<f64> {
        Ok(match &self.kind {
            RepFnKind::LeftTrivial => 1.0,
            RepFnKind::RightTrivial => t,
            RepFnKind::Arithmetic { w } => 1.0 - w + w * t,
            RepFnKind::Harmonic { alpha } => t / ((1.0 - alpha) * t + alpha),
            RepFnKind::Geometric { alpha } => t.powf(*alpha),
            RepFnKind::ConvexCombo(terms) => {
                let mut acc = 0.0;
                for (c, f) in terms {
                    acc += c * f.value(t)?;
                }
                acc
            }
            RepFnKind::Deformed { tau, sigma } => {
                deformed_rep(tau, sigma, t, &SolverConfig::default())?
            }
        })
    }

    fn value_at_depth(&self, depth: usize, t: f64) -> Result<f64> {
        if depth == 0 {
            return self.base_value(t);
        }
        let inner = |s: f64| self.value_at_depth(depth - 1, s);
        Ok(match self.transforms[depth - 1] {
            Transform::Adjoint => 1.0 / inner(1.0 / t)?,
            Transform::Transpose => t * inner(1.0 / t)?,
            Transform::PowerInner(r) => inner(t.powf(r))?,
            Transform::PowerInnerOuter(r) => inner(t.powf(r))?.powf(1.0 / r),
            Transform::PowerOuter(p) => inner(t)?.powf(p),
        })
    }

    /// `f(t)` without the domain check of [`rep_eval`].
    pub fn value(&self, t: f64) -> Result<f64> {
        self.value_at_depth(self.transforms.len(), t)
    }

    /// Scalar mean `a σ b = a f(b/a)`.
    pub fn scalar_mean(&self, a: f64, b: f64) -> Result<f64> {
        Ok(a * self.value(b / a)?)
    }
}

/// Evaluates the representing function at `t > 0`.
pub fn rep_eval(spec: &RepFnSpec, t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("representing function at t = {t}")));
    }
    let v = spec.value(t)?;
    if !v.is_finite() {
        return Err(Error::domain(format!("non-finite value at t = {t}")));
    }
    Ok(v)
}

/// Appends `op` (with parameter `r` where it takes one).
pub fn rep_transform(spec: &RepFnSpec, op: TransformOp, r: Option<f64>) -> Result<RepFnSpec> {
    spec.then(op.with(r)?)
}

/// `A σ B = A^{1/2} f(A^{-1/2} B A^{-1/2}) A^{1/2}`.
pub fn two_var_mean(spec: &RepFnSpec, a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix> {
    a.check_same_dim(b)?;
    let hp = a.half_powers()?;
    let whitened = hp.whiten(b.matrix());
    let spec_c = crate::psd::Spectrum::of(&whitened)?;
    let mut vals = Vec::with_capacity(a.dim());
    for &lambda in spec_c.values.iter() {
        let lambda = lambda.max(f64::MIN_POSITIVE);
        let v = spec.value(lambda)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!(
                "mean function value {v} at {lambda:e}"
            )));
        }
        vals.push(v);
    }
    let f_c = spec_c.rebuild(&vals);
    Ok(SpdMatrix::from_sym_unchecked(hp.color(&f_c)))
}

/// Residual `f_σ(1/x) f_τ(f_σ(t/x)/f_σ(1/x)) - 1` of the deformed equation.
/// Decreasing in `x`, vanishing at `x = f_{τ_σ}(t)`.
pub fn deformed_residual(tau: &RepFnSpec, sigma: &RepFnSpec, t: f64, x: f64) -> Result<f64> {
    let s1 = sigma.value(1.0 / x)?;
    let st = sigma.value(t / x)?;
    Ok(s1 * tau.value(st / s1)? - 1.0)
}

/// Representing function of the deformed mean `τ_σ` at `t`.
///
/// Iterates `x ← (x σ 1) τ (x σ t)` from `x = 1`; if that does not settle
/// within `cfg.scalar_max_iters`, bisects the residual on
/// `[min(1,t), max(1,t)]`.
pub fn deformed_rep(tau: &RepFnSpec, sigma: &RepFnSpec, t: f64, cfg: &SolverConfig) -> Result<f64> {
    if sigma.is_left_trivial() {
        return Err(Error::SigmaIsLeftTrivial);
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!(
            "deformed representing function at t = {t}"
        )));
    }
    if t == 1.0 {
        return Ok(1.0);
    }
    let tol = cfg.scalar_tol;
    let mut x = 1.0_f64;
    for _ in 0..cfg.scalar_max_iters {
        let next = tau.scalar_mean(sigma.scalar_mean(x, 1.0)?, sigma.scalar_mean(x, t)?)?;
        if !(next > 0.0 && next.is_finite()) {
            break;
        }
        let step = (next - x).abs();
        x = next;
        if step <= tol * x && deformed_residual(tau, sigma, t, x)?.abs() < tol {
            return Ok(x);
        }
    }
    bisect_deformed(tau, sigma, t, tol, cfg.scalar_max_iters)
}

fn bisect_deformed(
    tau: &RepFnSpec,
    sigma: &RepFnSpec,
    t: f64,
    tol: f64,
    max_iters: usize,
) -> Result<f64> {
    let (mut lo, mut hi) = (t.min(1.0), t.max(1.0));
    let g_lo = deformed_residual(tau, sigma, t, lo)?;
    let g_hi = deformed_residual(tau, sigma, t, hi)?;
    if g_lo.abs() < tol {
        return Ok(lo);
    }
    if g_hi.abs() < tol {
        return Ok(hi);
    }
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::NoConvergence {
            iterations: max_iters,
            residual: g_lo.abs().min(g_hi.abs()),
            last: None,
        });
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * mid * 0.5 {
            return Ok(mid);
        }
        let g = deformed_residual(tau, sigma, t, mid)?;
        if g == 0.0 {
            return Ok(mid);
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// 200 log-spaced points in `[1e-3, 1e3]` with `x = 2` inserted.
pub fn default_x_grid() -> Vec<f64> {
    let n = 200;
    let mut xs: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64))
        .collect();
    xs.push(2.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// 50 equally spaced exponents in `[1, 8]` (`r = 3` is a grid point).
pub fn default_r_grid() -> Vec<f64> {
    (0..50).map(|i| 1.0 + (7 * i) as f64 / 49.0).collect()
}

fn grid_margin(
    spec: &RepFnSpec,
    x_grid: &[f64],
    r_grid: &[f64],
    margin: impl Fn(f64, f64, f64, f64) -> f64,
) -> Result<MarginReport> {
    if x_grid.is_empty() || r_grid.is_empty() {
        return Err(Error::domain("empty grid"));
    }
    if let Some(&r) = r_grid.iter().find(|r| !(**r >= 1.0)) {
        return Err(Error::BadR {
            r,
            expected: "[1, inf)",
        });
    }
    let mut worst = MarginReport {
        worst_margin: f64::INFINITY,
        worst_point: (f64::NAN, f64::NAN),
        grid_size: x_grid.len() * r_grid.len(),
    };
    for &x in x_grid {
        let fx = rep_eval(spec, x)?;
        for &r in r_grid {
            let fxr = rep_eval(spec, x.powf(r))?;
            let m = margin(x, r, fx, fxr);
            if m < worst.worst_margin {
                worst.worst_margin = m;
                worst.worst_point = (x, r);
            }
        }
    }
    Ok(worst)
}

/// Worst `f(x^r) - f(x)^r` over the grid. Negative certifies that the
/// mean is not power monotone increasing.
pub fn pmi_margin(spec: &RepFnSpec, x_grid: &[f64], r_grid: &[f64]) -> Result<MarginReport> {
    grid_margin(spec, x_grid, r_grid, |_, r, fx, fxr| fxr - fx.powf(r))
}

/// Worst `f(x^r) - r f(x) + r - 1` over the grid.
pub fn condition_vi_margin(
    spec: &RepFnSpec,
    x_grid: &[f64],
    r_grid: &[f64],
) -> Result<MarginReport> {
    grid_margin(spec, x_grid, r_grid, |_, r, fx, fxr| {
        if r == 1.0 {
            0.0
        } else {
            fxr - r * fx + r - 1.0
        }
    })
}

// JSON form: {"kind": "...", "params": {...}, "transforms": [{"op": "...", "r": ...}]}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTerm {
    weight: f64,
    spec: RepFnSpec,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    kind: String,
    #[serde(default)]
    params: Map<String, Value>,
    #[serde(default)]
    transforms: Vec<RawTransform>,
    #[serde(default, skip_deserializing, skip_serializing_if = "Option::is_none")]
    derivative_at_one: Option<f64>,
}

fn param_f64(params: &Map<String, Value>, key: &'static str) -> Result<f64> {
    params
        .get(key)
        .ok_or(Error::MissingParameter(key))?
        .as_f64()
        .ok_or_else(|| Error::BadParameter(format!("`{key}` must be a number")))
}

fn param_spec(params: &Map<String, Value>, key: &'static str) -> Result<RepFnSpec> {
    let v = params.get(key).ok_or(Error::MissingParameter(key))?;
    Ok(serde_json::from_value(v.clone())?)
}

impl TryFrom<RawSpec> for RepFnSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let p = &raw.params;
        let kind = match raw.kind.as_str() {
            "left_trivial" => RepFnKind::LeftTrivial,
            "right_trivial" => RepFnKind::RightTrivial,
            "arithmetic" => RepFnKind::Arithmetic {
                w: param_f64(p, "w")?,
            },
            "harmonic" => RepFnKind::Harmonic {
                alpha: param_f64(p, "alpha")?,
            },
            "geometric" => RepFnKind::Geometric {
                alpha: param_f64(p, "alpha")?,
            },
            "convex_combo" => {
                let terms = p.get("terms").ok_or(Error::MissingParameter("terms"))?;
                let terms: Vec<RawTerm> = serde_json::from_value(terms.clone())?;
                RepFnKind::ConvexCombo(terms.into_iter().map(|t| (t.weight, t.spec)).collect())
            }
            "non_pmi_blend" => return Ok(RepFnSpec::non_pmi_blend()),
            "deformed" => RepFnKind::Deformed {
                tau: Box::new(param_spec(p, "tau")?),
                sigma: Box::new(param_spec(p, "sigma")?),
            },
            other => return Err(Error::UnknownKind(other.to_string())),
        };
        let transforms = raw
            .transforms
            .iter()
            .map(|t| TransformOp::parse(&t.op)?.with(t.r))
            .collect::<Result<Vec<_>>>()?;
        RepFnSpec::with_transforms(kind, transforms)
    }
}

impl From<&RepFnSpec> for RawSpec {
    fn from(spec: &RepFnSpec) -> Self {
        let mut params = Map::new();
        let kind = match &spec.kind {
            RepFnKind::LeftTrivial => "left_trivial",
            RepFnKind::RightTrivial => "right_trivial",
            RepFnKind::Arithmetic { w } => {
                params.insert("w".into(), Value::from(*w));
                "arithmetic"
            }
            RepFnKind::Harmonic { alpha } => {
                params.insert("alpha".into(), Value::from(*alpha));
                "harmonic"
            }
            RepFnKind::Geometric { alpha } => {
                params.insert("alpha".into(), Value::from(*alpha));
                "geometric"
            }
            RepFnKind::ConvexCombo(terms) => {
                let raw: Vec<Value> = terms
                    .iter()
                    .map(|(c, f)| {
                        serde_json::json!({"weight": c, "spec": serde_json::to_value(f).expect("serializable")})
                    })
                    .collect();
                params.insert("terms".into(), Value::Array(raw));
                "convex_combo"
            }
            RepFnKind::Deformed { tau, sigma } => {
                params.insert(
                    "tau".into(),
                    serde_json::to_value(tau).expect("serializable"),
                );
                params.insert(
                    "sigma".into(),
                    serde_json::to_value(sigma).expect("serializable"),
                );
                "deformed"
            }
        };
        RawSpec {
            kind: kind.to_string(),
            params,
            transforms: spec
                .transforms
                .iter()
                .map(|t| RawTransform {
                    op: t.op().name().to_string(),
                    r: t.param(),
                })
                .collect(),
            derivative_at_one: Some(spec.derivative_at_one),
        }
    }
}

impl Serialize for RepFnSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RepFnSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpec::deserialize(d)?;
        RepFnSpec::try_from(raw).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for RepFnSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(s)?;
        RepFnSpec::try_from(raw)
    }
}
