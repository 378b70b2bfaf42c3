use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_r, CheckReport, Ensemble, CHECK_TOL};
use crate::error::{Error, Result};
use crate::multimeans::{elementary_mean, Elementary, MultiMeanSpec, SolverConfig, Weights};
use crate::psd::{loewner_compare, thompson_distance, SpdMatrix, DEFAULT_LOEWNER_TOL};

/// Relative tolerance on the determinant identity at `k = N`.
const DET_TOL: f64 = 1e-8;

/// Weak log-majorization of `G(A^r)` by the eigenvalue profile
/// `λ_{N+1-i}^{r-1}(G) λ_i(G)` for `0 < r ≤ 1`, with equality of the full
/// products. Partial sums are compared on the log scale, so margins are
/// already scale-free.
pub fn check_log_majorization(
    w: &Weights,
    mats: &[SpdMatrix],
    r: f64,
    cfg: &SolverConfig,
) -> Result<CheckReport> {
    Ensemble::new(mats, cfg).check_log_majorization(w, r)
}

impl Ensemble<'_> {
    pub fn check_log_majorization(&self, w: &Weights, r: f64) -> Result<CheckReport> {
        check_r(r, false)?;
        let g = MultiMeanSpec::karcher(w.clone());
        let lam = self.mean(&g, 1.0)?.eigen()?.sorted_desc();
        let mu = self.mean(&g, r)?.eigen()?.sorted_desc();
        let n = lam.len();
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        let mut margin = f64::INFINITY;
        for k in 0..n {
            lhs += mu[k].ln();
            rhs += (r - 1.0) * lam[n - 1 - k].ln() + lam[k].ln();
            margin = margin.min(rhs - lhs);
        }
        let det_gap = (rhs - lhs).abs() / (1.0 + rhs.abs());
        let constants = BTreeMap::from([
            ("r".to_string(), r),
            ("det_gap".to_string(), det_gap),
            ("partial_margin".to_string(), margin),
        ]);
        let holds = margin >= -CHECK_TOL && det_gap <= DET_TOL;
        Ok(CheckReport {
            inequality_id: "karcher-log-majorization".into(),
            holds,
            margin: if holds {
                margin.max(-CHECK_TOL)
            } else {
                margin.min(-det_gap)
            },
            constants,
            witness_seed: 0,
            matrices: None,
        })
    }
}

/// Distances of `M(A^p)^{1/p}` to the log-Euclidean mean along `p_seq`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LieTrotterReport {
    pub p_values: Vec<f64>,
    /// Thompson distance to `exp(Σ w_j log A_j)`.
    pub gaps: Vec<f64>,
    /// `‖M(A^p)^{1/p}‖`.
    pub norms: Vec<f64>,
    pub target: SpdMatrix,
}

impl LieTrotterReport {
    /// Whether the gaps decrease along the sequence up to `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.gaps.windows(2).all(|g| g[1] <= g[0] + slack)
    }
}

/// Gaps `d_T(M(A^p)^{1/p}, exp(Σ w_j log A_j))` for each `p` in `p_seq`.
///
/// Requires `H ≤ M ≤ A` (weighted harmonic and arithmetic means) at the
/// inputs, which is what makes the limit the log-Euclidean mean.
pub fn lie_trotter_gap(
    spec: &MultiMeanSpec,
    mats: &[SpdMatrix],
    p_seq: &[f64],
    cfg: &SolverConfig,
) -> Result<LieTrotterReport> {
    let w = spec.weights().ok_or(Error::NoWeights)?.clone();
    let ens = Ensemble::new(mats, cfg);
    let m = ens.mean(spec, 1.0)?;
    let h = elementary_mean(Elementary::Harmonic, &w, mats)?;
    let a = elementary_mean(Elementary::Arithmetic, &w, mats)?;
    let lower = loewner_compare(&h, &m, DEFAULT_LOEWNER_TOL)?;
    let upper = loewner_compare(&m, &a, DEFAULT_LOEWNER_TOL)?;
    if !lower.is_le() || !upper.is_le() {
        return Err(Error::SandwichFails {
            margin: lower.margin.min(upper.margin),
        });
    }
    let dim = mats[0].dim();
    let mut log_sum = nalgebra::DMatrix::zeros(dim, dim);
    for (wj, a) in w.values().iter().zip(mats) {
        log_sum += a.log()? * *wj;
    }
    let target = SpdMatrix::exp_sym(&log_sum)?;
    let mut gaps = Vec::with_capacity(p_seq.len());
    let mut norms = Vec::with_capacity(p_seq.len());
    for &p in p_seq {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::BadParameter(format!("Lie-Trotter exponent {p}")));
        }
        let mp = ens.mean(spec, p)?.pow(1.0 / p)?;
        gaps.push(thompson_distance(&mp, &target)?);
        norms.push(mp.norm()?);
    }
    Ok(LieTrotterReport {
        p_values: p_seq.to_vec(),
        gaps,
        norms,
        target,
    })
}
