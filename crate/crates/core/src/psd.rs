//! Dense real symmetric positive definite matrices.
//!
//! Every matrix function in the crate goes through a symmetric
//! eigendecomposition `A = U diag(λ) Uᵀ`, and every computed result is
//! re-symmetrized before it is wrapped back into an [`SpdMatrix`].

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default relative tolerance for positive definiteness on input.
pub const DEFAULT_SPD_TOL: f64 = 1e-12;

/// Default relative tolerance of [`loewner_compare`].
pub const DEFAULT_LOEWNER_TOL: f64 = 1e-10;

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// A dense real symmetric positive definite matrix.
#[derive(Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SpdMatrix").field(&self.entries()).finish()
    }
}

/// Extreme eigenvalues of an SPD matrix and their ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralStats {
    pub lambda_min: f64,
    pub op_norm: f64,
    pub condition_number: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    LessEqual,
    GreaterEqual,
    Equal,
    Incomparable,
}

/// Result of comparing two matrices in the Loewner order.
///
/// `margin` is the smallest eigenvalue of the difference taken in the
/// direction of the reported relation (`B - A` for `LessEqual`, `A - B`
/// for `GreaterEqual`). For `Equal` it is the smaller of the two, for
/// `Incomparable` the larger (both negative).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoewnerVerdict {
    pub relation: Relation,
    pub margin: f64,
}

impl LoewnerVerdict {
    pub fn is_le(&self) -> bool {
        matches!(self.relation, Relation::LessEqual | Relation::Equal)
    }

    pub fn is_ge(&self) -> bool {
        matches!(self.relation, Relation::GreaterEqual | Relation::Equal)
    }
}

/// Eigenvalues and orthonormal eigenvectors of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn of(m: &DMatrix<f64>) -> Result<Self> {
        let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS)
            .ok_or(Error::EigenFailure)?;
        Ok(Spectrum {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    /// Largest absolute eigenvalue.
    pub fn abs_max(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// `U f(Λ) Uᵀ`, symmetrized. Fails if `f` is not finite at an eigenvalue.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let lambda = self.values[j];
            let v = f(lambda);
            if !v.is_finite() {
                return Err(Error::domain(format!(
                    "function value {v} at eigenvalue {lambda:e}"
                )));
            }
            scaled.column_mut(j).scale_mut(v);
        }
        let mut out = scaled * self.vectors.transpose();
        symmetrize(&mut out);
        Ok(out)
    }

    /// `U diag(values) Uᵀ` with caller-supplied eigenvalues, symmetrized.
    pub fn rebuild(&self, values: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*v);
        }
        let mut out = scaled * self.vectors.transpose();
        symmetrize(&mut out);
        out
    }

    /// Eigenvalues sorted in decreasing order.
    pub fn sorted_desc(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.values.iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Functional calculus on a symmetric (not necessarily definite) matrix.
pub fn sym_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    Spectrum::of(m)?.apply(f)
}

/// Validates a row-major square array as an SPD matrix.
///
/// Asymmetry up to `max(tol, 1e-12) · max|entry|` is accepted and removed
/// by symmetrization; the smallest eigenvalue must exceed `tol` times the
/// spectral scale.
pub fn validate_spd(entries: &[Vec<f64>], tol: f64) -> Result<SpdMatrix> {
    let n = entries.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    for (row, r) in entries.iter().enumerate() {
        if r.len() != n {
            return Err(Error::NotSquare {
                rows: n,
                row,
                cols: r.len(),
            });
        }
    }
    let m = DMatrix::from_fn(n, n, |i, j| entries[i][j]);
    SpdMatrix::from_matrix(m, tol)
}

impl SpdMatrix {
    /// Validates and wraps a dense matrix; see [`validate_spd`].
    pub fn from_matrix(mut m: DMatrix<f64>, tol: f64) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(Error::Empty);
        }
        if m.ncols() != n {
            return Err(Error::NotSquare {
                rows: n,
                row: 0,
                cols: m.ncols(),
            });
        }
        let mut scale = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite(i, j));
                }
                scale = scale.max(v.abs());
            }
        }
        let sym_tol = tol.max(1e-12) * scale;
        let mut asym = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > sym_tol {
            return Err(Error::NotSymmetric {
                asymmetry: asym,
                tolerance: sym_tol,
            });
        }
        symmetrize(&mut m);
        let spec = Spectrum::of(&m)?;
        let lo = spec.min();
        if lo <= tol * spec.abs_max() || lo <= 0.0 {
            return Err(Error::NotPositiveDefinite { eigenvalue: lo });
        }
        Ok(SpdMatrix(m))
    }

    /// Wraps a matrix known to be positive definite by construction.
    pub(crate) fn from_sym_unchecked(mut m: DMatrix<f64>) -> Self {
        symmetrize(&mut m);
        SpdMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix(DMatrix::identity(dim, dim))
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NotPositiveDefinite { eigenvalue: c });
        }
        Ok(SpdMatrix(DMatrix::identity(dim, dim) * c))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(&bad) = diag.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::NotPositiveDefinite { eigenvalue: bad });
        }
        Ok(SpdMatrix(DMatrix::from_diagonal(
            &DVector::from_column_slice(diag),
        )))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Row-major entries.
    pub fn entries(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn eigen(&self) -> Result<Spectrum> {
        Spectrum::of(&self.0)
    }

    /// Applies a positive scalar function and keeps the result in the cone.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<SpdMatrix> {
        let spec = self.eigen()?;
        let out = spec.apply(|x| {
            let y = f(x);
            if y > 0.0 {
                y
            } else {
                f64::NAN
            }
        })?;
        Ok(SpdMatrix(out))
    }

    pub fn pow(&self, r: f64) -> Result<SpdMatrix> {
        if r == 1.0 {
            return Ok(self.clone());
        }
        self.map(|x| x.powf(r))
    }

    pub fn sqrt(&self) -> Result<SpdMatrix> {
        self.map(f64::sqrt)
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        self.map(|x| 1.0 / x)
    }

    /// Symmetric matrix logarithm.
    pub fn log(&self) -> Result<DMatrix<f64>> {
        self.eigen()?.apply(f64::ln)
    }

    /// Matrix exponential of a symmetric matrix.
    pub fn exp_sym(m: &DMatrix<f64>) -> Result<SpdMatrix> {
        Ok(SpdMatrix(sym_function(m, f64::exp)?))
    }

    pub fn scale(&self, c: f64) -> Result<SpdMatrix> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("scaling by {c}")));
        }
        Ok(SpdMatrix(&self.0 * c))
    }

    /// `Sᵀ A S` for an invertible `S`.
    pub fn congruence(&self, s: &DMatrix<f64>) -> Result<SpdMatrix> {
        if s.nrows() != self.dim() || s.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: s.nrows(),
            });
        }
        let out = s.transpose() * &self.0 * s;
        SpdMatrix::from_matrix(out, 0.0)
    }

    pub fn lambda_min(&self) -> Result<f64> {
        Ok(self.eigen()?.min())
    }

    /// Operator norm, i.e. the largest eigenvalue.
    pub fn norm(&self) -> Result<f64> {
        Ok(self.eigen()?.max())
    }

    pub fn half_powers(&self) -> Result<HalfPowers> {
        HalfPowers::of(self)
    }

    pub fn check_same_dim(&self, other: &SpdMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

/// `X^{1/2}` and `X^{-1/2}` from one eigendecomposition, for repeated
/// congruences `X^{-1/2} B X^{-1/2}` and `X^{1/2} C X^{1/2}`.
#[derive(Clone, Debug)]
pub struct HalfPowers {
    pub half: DMatrix<f64>,
    pub inv_half: DMatrix<f64>,
    /// Condition number of `X`.
    pub condition: f64,
}

impl HalfPowers {
    pub fn of(x: &SpdMatrix) -> Result<Self> {
        let spec = x.eigen()?;
        Ok(HalfPowers {
            half: spec.apply(f64::sqrt)?,
            inv_half: spec.apply(|v| 1.0 / v.sqrt())?,
            condition: spec.max() / spec.min(),
        })
    }

    /// `X^{-1/2} B X^{-1/2}`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.inv_half * b * &self.inv_half;
        symmetrize(&mut out);
        out
    }

    /// `X^{1/2} C X^{1/2}`.
    pub fn color(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.half * c * &self.half;
        symmetrize(&mut out);
        out
    }
}

/// `U f(Λ) Uᵀ` for an SPD matrix `A = U Λ Uᵀ`.
pub fn matrix_function(a: &SpdMatrix, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    a.eigen()?.apply(f)
}

/// Eigenvalues of `A^{-1/2} B A^{-1/2}`, computed through a Cholesky factor of `A`.
pub fn relative_eigenvalues(a: &SpdMatrix, b: &SpdMatrix) -> Result<DVector<f64>> {
    a.check_same_dim(b)?;
    let chol = a.0.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        eigenvalue: f64::NAN,
    })?;
    let l = chol.l();
    let y = l.solve_lower_triangular(&b.0).ok_or(Error::EigenFailure)?;
    let mut c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::EigenFailure)?;
    symmetrize(&mut c);
    Ok(Spectrum::of(&c)?.values)
}

/// Thompson metric `‖log A^{-1/2} B A^{-1/2}‖`.
pub fn thompson_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    let ev = relative_eigenvalues(a, b)?;
    Ok(ev.iter().fold(0.0_f64, |acc, v| acc.max(v.ln().abs())))
}

/// Loewner comparison with tolerance relative to `‖A‖ + ‖B‖`.
pub fn loewner_compare(a: &SpdMatrix, b: &SpdMatrix, tol: f64) -> Result<LoewnerVerdict> {
    a.check_same_dim(b)?;
    let scale = a.norm()? + b.norm()?;
    let diff = &b.0 - &a.0;
    verdict_from_difference(&diff, tol * scale)
}

/// Loewner verdict for `A` versus `B` given `B - A` and an absolute slack.
pub(crate) fn verdict_from_difference(diff: &DMatrix<f64>, slack: f64) -> Result<LoewnerVerdict> {
    let mut d = diff.clone();
    symmetrize(&mut d);
    let spec = Spectrum::of(&d)?;
    let le_margin = spec.min();
    let ge_margin = -spec.max();
    let le = le_margin >= -slack;
    let ge = ge_margin >= -slack;
    let verdict = match (le, ge) {
        (true, true) => LoewnerVerdict {
            relation: Relation::Equal,
            margin: le_margin.min(ge_margin),
        },
        (true, false) => LoewnerVerdict {
            relation: Relation::LessEqual,
            margin: le_margin,
        },
        (false, true) => LoewnerVerdict {
            relation: Relation::GreaterEqual,
            margin: ge_margin,
        },
        (false, false) => LoewnerVerdict {
            relation: Relation::Incomparable,
            margin: le_margin.max(ge_margin),
        },
    };
    Ok(verdict)
}

pub fn spectral_stats(a: &SpdMatrix) -> Result<SpectralStats> {
    let spec = a.eigen()?;
    let lambda_min = spec.min();
    let op_norm = spec.max();
    Ok(SpectralStats {
        lambda_min,
        op_norm,
        condition_number: op_norm / lambda_min,
    })
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix, with the sign ambiguity of `R`'s diagonal removed.
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random SPD matrix `Q Λ Qᵀ` with spectrum in `[lo, hi]`, drawing from `rng`.
///
/// For `dim ≥ 2` both endpoints are eigenvalues, so `lo·I ≤ A ≤ hi·I` is tight.
pub fn random_spd_with<R: Rng + ?Sized>(
    dim: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<SpdMatrix> {
    if dim == 0 {
        return Err(Error::Empty);
    }
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::BadInterval { lo, hi });
    }
    let mut lambdas = Vec::with_capacity(dim);
    if dim == 1 {
        lambdas.push(rng.random_range(lo..=hi));
    } else {
        lambdas.push(lo);
        lambdas.push(hi);
        for _ in 2..dim {
            lambdas.push(rng.random_range(lo..=hi));
        }
    }
    let q = random_orthogonal(dim, rng);
    let mut scaled = q.clone();
    for (j, l) in lambdas.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*l);
    }
    Ok(SpdMatrix::from_sym_unchecked(scaled * q.transpose()))
}

/// Seeded random SPD matrix; deterministic in `seed`.
pub fn random_spd(dim: usize, spectrum: (f64, f64), seed: u64) -> Result<SpdMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_spd_with(dim, spectrum.0, spectrum.1, &mut rng)
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    dim: usize,
    entries: Vec<Vec<f64>>,
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            dim: self.dim(),
            entries: self.entries(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        if raw.entries.len() != raw.dim {
            return Err(serde::de::Error::custom(format!(
                "dim {} but {} rows",
                raw.dim,
                raw.entries.len()
            )));
        }
        validate_spd(&raw.entries, DEFAULT_SPD_TOL).map_err(serde::de::Error::custom)
    }
}
