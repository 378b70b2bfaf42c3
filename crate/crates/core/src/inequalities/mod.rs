//! Power inequalities for matrix means as margin-reporting predicates.
//!
//! Every check computes both sides of a Loewner inequality `L ≤ R` and
//! reports `λ_min(R - L) / (‖L‖ + ‖R‖)`. Two-sided chains report the worse
//! of the two margins. A check holds when its margin is at least
//! `-CHECK_TOL`.

mod kantorovich;
mod majorization;
mod optimality;

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfns::RepFnSpec;
use crate::multimeans::{evaluate, MultiMeanSpec, SolverConfig, Weights};
use crate::psd::{random_spd_with, spectral_stats, SpdMatrix, Spectrum};

pub use kantorovich::{
    check_congruence_kantorovich, check_power_sum_kantorovich, check_reverse, kantorovich,
    reverse_improvement, ReverseFamily,
};
pub use majorization::{check_log_majorization, lie_trotter_gap, LieTrotterReport};
pub use optimality::{
    bracket_norm_margin, bracket_weak_margin, optimality_scan, recheck, Counterexample,
    FamilyParams, ScanMode, SearchConfig,
};

/// Pass/fail threshold on normalized margins.
pub const CHECK_TOL: f64 = 1e-9;

/// Outcome of one inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub inequality_id: String,
    pub holds: bool,
    pub margin: f64,
    pub constants: BTreeMap<String, f64>,
    pub witness_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<SpdMatrix>>,
}

impl CheckReport {
    fn from_margins(
        id: &str,
        margins: &[(&str, f64)],
        mut constants: BTreeMap<String, f64>,
    ) -> Self {
        let margin = margins
            .iter()
            .map(|(_, m)| *m)
            .fold(f64::INFINITY, f64::min);
        for (name, m) in margins {
            constants.insert(format!("{name}_margin"), *m);
        }
        CheckReport {
            inequality_id: id.to_string(),
            holds: margin >= -CHECK_TOL,
            margin,
            constants,
            witness_seed: 0,
            matrices: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.witness_seed = seed;
        self
    }

    /// Attaches the input matrices (always done for failures by campaigns).
    pub fn with_matrices(mut self, mats: &[SpdMatrix]) -> Self {
        self.matrices = Some(mats.to_vec());
        self
    }
}

fn sym_abs_max(m: &DMatrix<f64>) -> Result<f64> {
    Ok(Spectrum::of(m)?.abs_max())
}

/// `λ_min(R - L) / (‖L‖ + ‖R‖)`.
pub fn order_margin(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<f64> {
    let scale = sym_abs_max(lhs)? + sym_abs_max(rhs)?;
    let diff = rhs - lhs;
    let lo = Spectrum::of(&diff)?.min();
    Ok(if scale > 0.0 { lo / scale } else { lo })
}

fn scaled(m: &SpdMatrix, c: f64) -> DMatrix<f64> {
    m.matrix() * c
}

fn check_r(r: f64, at_least_one: bool) -> Result<()> {
    let ok = if at_least_one {
        r >= 1.0
    } else {
        r > 0.0 && r <= 1.0
    };
    if !ok || !r.is_finite() {
        return Err(Error::BadR {
            r,
            expected: if at_least_one { "[1, inf)" } else { "(0, 1]" },
        });
    }
    Ok(())
}

/// `σ_r`; the identity transform at `r = 1` so that both sides of a
/// check are literally the same mean there.
pub(crate) fn inner_power(sigma: &RepFnSpec, r: f64) -> Result<RepFnSpec> {
    if r == 1.0 {
        Ok(sigma.clone())
    } else {
        sigma.power_inner(r)
    }
}

/// `τ_{[r]}`, with the same convention at `r = 1`.
pub(crate) fn bracket(tau: &RepFnSpec, r: f64) -> Result<RepFnSpec> {
    if r == 1.0 {
        Ok(tau.clone())
    } else {
        tau.power_inner_outer(r)
    }
}

/// Which of the four power inequality forms to check for a mean `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AhVariant {
    /// `M(A^r) ≥ λ_min^{r-1}(M(A)) M(A)`, `r ≥ 1`.
    Original,
    /// `M*(A^r) ≤ ‖M*(A)‖^{r-1} M*(A)`, `r ≥ 1`.
    OriginalAdjoint,
    /// `M(A^r) ≤ λ_min^{r-1}(M(A)) M(A)`, `0 < r ≤ 1`.
    Complementary,
    /// `M*(A^r) ≥ ‖M*(A)‖^{r-1} M*(A)`, `0 < r ≤ 1`.
    ComplementaryAdjoint,
}

impl AhVariant {
    pub fn id(self) -> &'static str {
        match self {
            AhVariant::Original => "ah",
            AhVariant::OriginalAdjoint => "ah-adjoint",
            AhVariant::Complementary => "ah-complementary",
            AhVariant::ComplementaryAdjoint => "ah-complementary-adjoint",
        }
    }
}

/// Modified inequalities for a deformed mean `M_σ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModifiedForm {
    /// `λ^{r-1} X ≤ M_{σ_{1/r}}(A^r) ≤ ‖X‖^{r-1} X` with `X = M_σ(A)`, `r ≥ 1`.
    Forward,
    /// `‖X‖^{r-1} X ≤ M_σ(A^r) ≤ λ^{r-1} X` with `X = M_{σ_r}(A)`, `0 < r ≤ 1`.
    Complementary,
}

/// Two-variable specializations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoVarForm {
    /// Deformed mean `τ_σ` against `τ_{σ_{1/r}}` on powers, `r ≥ 1`.
    Deformed,
    /// `τ_{σ_r}` against `τ_σ` on powers, `0 < r ≤ 1`.
    DeformedComplementary,
    /// `τ` against `τ_{[1/r]}` on powers, `r ≥ 1`.
    Bracket,
    /// `τ_{[r]}` against `τ` on powers, `0 < r ≤ 1`.
    BracketComplementary,
}

/// Inputs with memoized means of their powers, shared by every check run
/// on one ensemble so that `M(A)` is solved once across exponents.
pub struct Ensemble<'a> {
    mats: &'a [SpdMatrix],
    cfg: &'a SolverConfig,
    powers: RefCell<HashMap<u64, Vec<SpdMatrix>>>,
    means: RefCell<HashMap<(String, u64), SpdMatrix>>,
}

impl<'a> Ensemble<'a> {
    pub fn new(mats: &'a [SpdMatrix], cfg: &'a SolverConfig) -> Self {
        Ensemble {
            mats,
            cfg,
            powers: RefCell::new(HashMap::new()),
            means: RefCell::new(HashMap::new()),
        }
    }

    pub fn mats(&self) -> &[SpdMatrix] {
        self.mats
    }

    pub fn cfg(&self) -> &SolverConfig {
        self.cfg
    }

    /// `(A_1^r, …, A_n^r)`.
    pub fn powers(&self, r: f64) -> Result<Vec<SpdMatrix>> {
        if r == 1.0 {
            return Ok(self.mats.to_vec());
        }
        if let Some(p) = self.powers.borrow().get(&r.to_bits()) {
            return Ok(p.clone());
        }
        let p = self
            .mats
            .iter()
            .map(|a| a.pow(r))
            .collect::<Result<Vec<_>>>()?;
        self.powers.borrow_mut().insert(r.to_bits(), p.clone());
        Ok(p)
    }

    /// `M(A_1^r, …, A_n^r)`.
    pub fn mean(&self, spec: &MultiMeanSpec, r: f64) -> Result<SpdMatrix> {
        let key = (format!("{spec:?}"), r.to_bits());
        if let Some(m) = self.means.borrow().get(&key) {
            return Ok(m.clone());
        }
        let args = self.powers(r)?;
        let m = evaluate(spec, &args, self.cfg)?.value;
        self.means.borrow_mut().insert(key, m.clone());
        Ok(m)
    }

    pub fn check_ah(
        &self,
        spec: &MultiMeanSpec,
        r: f64,
        variant: AhVariant,
    ) -> Result<CheckReport> {
        let at_least_one = matches!(variant, AhVariant::Original | AhVariant::OriginalAdjoint);
        check_r(r, at_least_one)?;
        let adjoint = matches!(
            variant,
            AhVariant::OriginalAdjoint | AhVariant::ComplementaryAdjoint
        );
        let m = if adjoint {
            spec.clone().adjoint()
        } else {
            spec.clone()
        };
        let x = self.mean(&m, 1.0)?;
        let y = self.mean(&m, r)?;
        let stats = spectral_stats(&x)?;
        let mut constants = BTreeMap::from([("r".to_string(), r)]);
        let (lhs, rhs) = match variant {
            AhVariant::Original | AhVariant::Complementary => {
                let c = stats.lambda_min.powf(r - 1.0);
                constants.insert("lambda_min_pow".into(), c);
                if variant == AhVariant::Original {
                    (scaled(&x, c), y.matrix().clone())
                } else {
                    (y.matrix().clone(), scaled(&x, c))
                }
            }
            AhVariant::OriginalAdjoint | AhVariant::ComplementaryAdjoint => {
                let c = stats.op_norm.powf(r - 1.0);
                constants.insert("norm_pow".into(), c);
                if variant == AhVariant::OriginalAdjoint {
                    (y.matrix().clone(), scaled(&x, c))
                } else {
                    (scaled(&x, c), y.matrix().clone())
                }
            }
        };
        let margin = order_margin(&lhs, &rhs)?;
        Ok(CheckReport::from_margins(
            variant.id(),
            &[("order", margin)],
            constants,
        ))
    }

    /// Both sides of `λ^{r-1} X ≤ Y ≤ ‖X‖^{r-1} X` (or the reversed chain
    /// `‖X‖^{r-1} X ≤ Y ≤ λ^{r-1} X` when `complementary`).
    fn chain(
        &self,
        id: &str,
        x: &SpdMatrix,
        y: &SpdMatrix,
        r: f64,
        complementary: bool,
        mut constants: BTreeMap<String, f64>,
    ) -> Result<CheckReport> {
        let stats = spectral_stats(x)?;
        let lam = stats.lambda_min.powf(r - 1.0);
        let nrm = stats.op_norm.powf(r - 1.0);
        constants.insert("r".into(), r);
        constants.insert("lambda_min_pow".into(), lam);
        constants.insert("norm_pow".into(), nrm);
        let (lo_c, hi_c) = if complementary {
            (nrm, lam)
        } else {
            (lam, nrm)
        };
        let lower = order_margin(&scaled(x, lo_c), y.matrix())?;
        let upper = order_margin(y.matrix(), &scaled(x, hi_c))?;
        Ok(CheckReport::from_margins(
            id,
            &[("lower", lower), ("upper", upper)],
            constants,
        ))
    }

    pub fn check_modified(
        &self,
        base: &MultiMeanSpec,
        sigma: &RepFnSpec,
        r: f64,
        form: ModifiedForm,
    ) -> Result<CheckReport> {
        if sigma.is_left_trivial() {
            return Err(Error::SigmaIsLeftTrivial);
        }
        match form {
            ModifiedForm::Forward => {
                check_r(r, true)?;
                let x = self.mean(&MultiMeanSpec::deformed(base.clone(), sigma.clone()), 1.0)?;
                let s = inner_power(sigma, 1.0 / r)?;
                let y = self.mean(&MultiMeanSpec::deformed(base.clone(), s), r)?;
                self.chain("modified", &x, &y, r, false, BTreeMap::new())
            }
            ModifiedForm::Complementary => {
                check_r(r, false)?;
                let s = inner_power(sigma, r)?;
                let x = self.mean(&MultiMeanSpec::deformed(base.clone(), s), 1.0)?;
                let y = self.mean(&MultiMeanSpec::deformed(base.clone(), sigma.clone()), r)?;
                self.chain("modified-complementary", &x, &y, r, true, BTreeMap::new())
            }
        }
    }

    /// Power-mean form of the modified inequalities:
    /// `P_{α/r}(A^r)` against `P_α(A)` for `r ≥ 1`, and
    /// `P_α(A^r)` against `P_{αr}(A)` for `r ≤ 1`.
    pub fn check_power_modified(
        &self,
        w: &Weights,
        alpha: f64,
        r: f64,
        form: ModifiedForm,
    ) -> Result<CheckReport> {
        let w = w.clone();
        let mut constants = BTreeMap::from([("alpha".to_string(), alpha)]);
        match form {
            ModifiedForm::Forward => {
                check_r(r, true)?;
                let x = self.mean(&MultiMeanSpec::power(w.clone(), alpha), 1.0)?;
                let y = self.mean(&MultiMeanSpec::power(w, alpha / r), r)?;
                constants.insert("alpha_inner".into(), alpha / r);
                self.chain("power-modified", &x, &y, r, false, constants)
            }
            ModifiedForm::Complementary => {
                check_r(r, false)?;
                let x = self.mean(&MultiMeanSpec::power(w.clone(), alpha * r), 1.0)?;
                let y = self.mean(&MultiMeanSpec::power(w, alpha), r)?;
                constants.insert("alpha_inner".into(), alpha * r);
                self.chain("power-modified-complementary", &x, &y, r, true, constants)
            }
        }
    }
}

/// Checks one of the four power inequality forms for the mean `spec`.
pub fn check_ah_family(
    spec: &MultiMeanSpec,
    mats: &[SpdMatrix],
    r: f64,
    variant: AhVariant,
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    Ensemble::new(mats, cfg).check_ah(spec, r, variant)
}

/// Both sides of the Karcher chain: `λ^{r-1} G ≤ G(A^r) ≤ ‖G‖^{r-1} G` for
/// `r ≥ 1`, reversed for `r ≤ 1`.
pub fn check_karcher_ah(
    w: &Weights,
    mats: &[SpdMatrix],
    r: f64,
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    Ensemble::new(mats, cfg).check_karcher_ah(w, r)
}

impl Ensemble<'_> {
    pub fn check_karcher_ah(&self, w: &Weights, r: f64) -> Result<CheckReport> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::BadR {
                r,
                expected: "(0, inf)",
            });
        }
        let g = MultiMeanSpec::karcher(w.clone());
        let x = self.mean(&g, 1.0)?;
        let y = self.mean(&g, r)?;
        let complementary = r < 1.0;
        let id = if complementary {
            "karcher-ah-complementary"
        } else {
            "karcher-ah"
        };
        self.chain(id, &x, &y, r, complementary, BTreeMap::new())
    }
}

/// Modified inequalities for `M_σ` with `σ_{1/r}` (`r ≥ 1`) or `σ_r` (`r ≤ 1`).
pub fn check_modified(
    base: &MultiMeanSpec,
    sigma: &RepFnSpec,
    mats: &[SpdMatrix],
    r: f64,
    form: ModifiedForm,
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    Ensemble::new(mats, cfg).check_modified(base, sigma, r, form)
}

/// Power-mean form of the modified inequalities.
pub fn check_power_modified(
    w: &Weights,
    alpha: f64,
    mats: &[SpdMatrix],
    r: f64,
    form: ModifiedForm,
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    Ensemble::new(mats, cfg).check_power_modified(w, alpha, r, form)
}

/// Two-variable forms on `(A, B)`. `sigma` is required for the deformed forms.
pub fn check_two_var(
    tau: &RepFnSpec,
    sigma: Option<&RepFnSpec>,
    a: &SpdMatrix,
    b: &SpdMatrix,
    r: f64,
    form: TwoVarForm,
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    let mats = [a.clone(), b.clone()];
    Ensemble::new(&mats, cfg).check_two_var(tau, sigma, r, form)
}

impl Ensemble<'_> {
    pub fn check_two_var(
        &self,
        tau: &RepFnSpec,
        sigma: Option<&RepFnSpec>,
        r: f64,
        form: TwoVarForm,
    ) -> Result<CheckReport> {
        let ka = |f: RepFnSpec| MultiMeanSpec::KuboAndo { sigma: f };
        let need_sigma = || {
            let s = sigma.ok_or(Error::MissingParameter("sigma"))?;
            if s.is_left_trivial() {
                return Err(Error::SigmaIsLeftTrivial);
            }
            Ok(s)
        };
        let (id, x, y, complementary) = match form {
            TwoVarForm::Deformed => {
                check_r(r, true)?;
                let s = need_sigma()?;
                let x = self.mean(&ka(RepFnSpec::deformed(tau.clone(), s.clone())?), 1.0)?;
                let s_r = inner_power(s, 1.0 / r)?;
                let y = self.mean(&ka(RepFnSpec::deformed(tau.clone(), s_r)?), r)?;
                ("binary-deformed", x, y, false)
            }
            TwoVarForm::DeformedComplementary => {
                check_r(r, false)?;
                let s = need_sigma()?;
                let s_r = inner_power(s, r)?;
                let x = self.mean(&ka(RepFnSpec::deformed(tau.clone(), s_r)?), 1.0)?;
                let y = self.mean(&ka(RepFnSpec::deformed(tau.clone(), s.clone())?), r)?;
                ("binary-deformed-complementary", x, y, true)
            }
            TwoVarForm::Bracket => {
                check_r(r, true)?;
                let x = self.mean(&ka(tau.clone()), 1.0)?;
                let y = self.mean(&ka(bracket(tau, 1.0 / r)?), r)?;
                ("binary-bracket", x, y, false)
            }
            TwoVarForm::BracketComplementary => {
                check_r(r, false)?;
                let x = self.mean(&ka(bracket(tau, r)?), 1.0)?;
                let y = self.mean(&ka(tau.clone()), r)?;
                ("binary-bracket-complementary", x, y, true)
            }
        };
        self.chain(id, &x, &y, r, complementary, BTreeMap::new())
    }
}

/// Rescales the inputs so that `M(A) ≥ I` holds with equality at the
/// bottom of the spectrum, then returns the margin of `M(A^r) ≥ I`.
pub fn unit_implication_margin(
    spec: &MultiMeanSpec,
    mats: &[SpdMatrix],
    r: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    let x = evaluate(spec, mats, cfg)?.value;
    let s = 1.0 / x.lambda_min()?;
    let scaled_mats = mats
        .iter()
        .map(|a| a.scale(s)?.pow(r))
        .collect::<Result<Vec<_>>>()?;
    let y = evaluate(spec, &scaled_mats, cfg)?.value;
    let id = DMatrix::identity(y.dim(), y.dim());
    order_margin(&id, y.matrix())
}

/// Two-sided test of the equivalence
/// `(A τ B ≥ I ⟹ A^r σ B^r ≥ I)  ⟺  f_σ(t^r) ≥ f_τ(t)^r for all t`.
///
/// The scalar side is evaluated on `t_grid`. The matrix side is sampled on
/// `trials` random 2×2 and 3×3 pairs rescaled so that `A τ B ≥ I` is tight;
/// when the scalar side fails, its worst point is lifted to the
/// scalar-identity pair `A = I/x`, `B = (t/x) I` with `x = f_τ(t)`.
/// The report holds when both sides agree.
pub fn escalation_equivalence_test(
    sigma: &RepFnSpec,
    tau: &RepFnSpec,
    r: f64,
    t_grid: &[f64],
    trials: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    check_r(r, true)?;
    let _ = cfg;
    let mut scalar_margin = f64::INFINITY;
    let mut worst_t = 1.0;
    for &t in t_grid {
        let lhs = sigma.value(t.powf(r))?;
        let rhs = tau.value(t)?.powf(r);
        let m = (lhs - rhs) / (lhs.abs() + rhs.abs());
        if m < scalar_margin {
            scalar_margin = m;
            worst_t = t;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix_margin = f64::INFINITY;
    let mut witness: Option<Vec<SpdMatrix>> = None;
    let mut test_pair = |a: SpdMatrix, b: SpdMatrix| -> Result<()> {
        let c = crate::meanfns::two_var_mean(tau, &a, &b)?;
        let s = 1.0 / c.lambda_min()?;
        let (a, b) = (a.scale(s)?, b.scale(s)?);
        let lhs = crate::meanfns::two_var_mean(sigma, &a.pow(r)?, &b.pow(r)?)?;
        let id = DMatrix::identity(a.dim(), a.dim());
        let m = order_margin(&id, lhs.matrix())?;
        if m < matrix_margin {
            matrix_margin = m;
            witness = Some(vec![a, b]);
        }
        Ok(())
    };
    for k in 0..trials {
        let dim = 2 + k % 2;
        let a = random_spd_with(dim, 0.2, 5.0, &mut rng)?;
        let b = random_spd_with(dim, 0.2, 5.0, &mut rng)?;
        test_pair(a, b)?;
    }
    if scalar_margin < -CHECK_TOL {
        let x = tau.value(worst_t)?;
        let a = SpdMatrix::scaled_identity(2, 1.0 / x)?;
        let b = SpdMatrix::scaled_identity(2, worst_t / x)?;
        test_pair(a, b)?;
    }
    let scalar_ok = scalar_margin >= -CHECK_TOL;
    let matrix_ok = matrix_margin >= -CHECK_TOL;
    let margin = match (scalar_ok, matrix_ok) {
        (true, true) => scalar_margin.min(matrix_margin),
        (false, false) => 0.0,
        (true, false) => matrix_margin,
        (false, true) => scalar_margin,
    };
    let constants = BTreeMap::from([
        ("r".to_string(), r),
        ("scalar_margin".to_string(), scalar_margin),
        ("matrix_margin".to_string(), matrix_margin),
        ("worst_t".to_string(), worst_t),
    ]);
    let mut report = CheckReport {
        inequality_id: "power-escalation-equivalence".into(),
        holds: scalar_ok == matrix_ok,
        margin,
        constants,
        witness_seed: seed,
        matrices: None,
    };
    if !matrix_ok {
        report.matrices = witness;
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
