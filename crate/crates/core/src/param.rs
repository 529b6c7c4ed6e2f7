//! The mixture parameter `Σ` and the quantities derived from it.
//!
//! `Σ` is the `(p+1) x (p+1)` covariance of a length-`(p+1)` window
//! difference. Its leading `p x p` block governs motif similarity, the last
//! column carries the autoregressive coefficients and the Schur complement of
//! the leading block is the component variance.

use nalgebra::{DMatrix, DVector};

use crate::error::{LmarError, Result};

/// Jitter used when a matrix has zero (or non-finite) trace.
pub const JITTER_FLOOR: f64 = 1e-8;
/// Relative jitter scale: `eps = JITTER_SCALE * trace / dim`.
pub const JITTER_SCALE: f64 = 1e-10;

/// Returns `(a + a') / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Lower Cholesky factor of `a`, retrying once with `eps * I` added.
///
/// Returns the factor together with the jitter that was added (zero when the
/// first attempt succeeded).
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(LmarError::ShapeMismatch(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LmarError::SingularMatrix("non-finite entry".into()));
    }
    if let Some(ch) = a.clone().cholesky() {
        return Ok((ch.l(), 0.0));
    }
    let eps = jitter_for(a);
    let mut b = a.clone();
    for d in 0..b.nrows() {
        b[(d, d)] += eps;
    }
    match b.cholesky() {
        Some(ch) => Ok((ch.l(), eps)),
        None => Err(LmarError::SingularMatrix(format!(
            "Cholesky failed after adding jitter {eps:e}"
        ))),
    }
}

fn jitter_for(a: &DMatrix<f64>) -> f64 {
    let eps = JITTER_SCALE * a.trace() / a.nrows() as f64;
    if eps.is_finite() && eps > 0.0 {
        eps
    } else {
        JITTER_FLOOR
    }
}

/// Symmetric positive-definite `Σ` of dimension `p + 1`, with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParam {
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
    p: usize,
    jitter: f64,
}

impl MixtureParam {
    /// Symmetrizes `sigma` and factors it, applying the jitter policy if the
    /// plain factorization fails. The stored matrix includes any jitter.
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(LmarError::ShapeMismatch(format!(
                "sigma must be square, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.nrows() < 2 {
            return Err(LmarError::InvalidParameter(
                "sigma must be at least 2x2 (p >= 1)".into(),
            ));
        }
        let mut sigma = symmetrize(&sigma);
        let (chol, jitter) = cholesky_with_jitter(&sigma)?;
        if jitter > 0.0 {
            for d in 0..sigma.nrows() {
                sigma[(d, d)] += jitter;
            }
        }
        let p = sigma.nrows() - 1;
        Ok(Self {
            sigma,
            chol,
            p,
            jitter,
        })
    }

    /// Builds `Σ` from row-major entries.
    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(LmarError::ShapeMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(p: usize) -> Result<Self> {
        Self::new(DMatrix::identity(p + 1, p + 1))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.p + 1
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Lower-triangular `L` with `L L' = Σ`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Diagonal jitter added during construction (zero if none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `log |Σ|`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Row-major copy of `Σ`.
    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                out.push(self.sigma[(r, c)]);
            }
        }
        out
    }

    /// Returns `c * Σ`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.sigma * c)
    }
}

/// Autoregressive coefficients and component variance implied by `Σ`.
///
/// `gamma` is stored in the same order as the components of `V_ij`, so the
/// component mean is `Y_{i-j} + gamma . V_ij`; `gamma[p-1]` multiplies the most
/// recent difference.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    pub gamma: Vec<f64>,
    pub sigma2: f64,
}

/// `gamma = Σ11^{-1} Σ12` and `sigma2 = Σ22 - gamma' Σ12`.
pub fn derive_params(param: &MixtureParam) -> Result<DerivedParams> {
    let p = param.p();
    let l = param.cholesky();
    let l11 = l.view((0, 0), (p, p));
    let s12 = param.sigma().view((0, p), (p, 1)).clone_owned();
    let half = l11
        .solve_lower_triangular(&s12)
        .ok_or_else(|| LmarError::SingularMatrix("leading block".into()))?;
    let gamma = l11
        .transpose()
        .solve_upper_triangular(&half)
        .ok_or_else(|| LmarError::SingularMatrix("leading block".into()))?;
    // L[p,p]^2 is the Schur complement computed without a second subtraction
    let sigma2 = l[(p, p)] * l[(p, p)];
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(LmarError::SingularMatrix(format!(
            "component variance {sigma2} is not positive"
        )));
    }
    Ok(DerivedParams {
        gamma: gamma.iter().copied().collect(),
        sigma2,
    })
}

/// Blocks of `Σ` used for the `k`-step predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct KPartition {
    pub k: usize,
    /// Upper-left `(p-k+1) x (p-k+1)` block.
    pub s11: DMatrix<f64>,
    /// First `p-k+1` entries of the last column.
    pub s12: DVector<f64>,
    /// Bottom-right element (always `Σ22`).
    pub s22: f64,
}

impl KPartition {
    pub fn s21(&self) -> nalgebra::RowDVector<f64> {
        self.s12.transpose()
    }

    pub fn block_dim(&self) -> usize {
        self.s11.nrows()
    }
}

pub fn partition_k(param: &MixtureParam, k: usize) -> Result<KPartition> {
    let p = param.p();
    if k < 1 || k > p {
        return Err(LmarError::HorizonOutOfRange { k, max: p });
    }
    let r = p - k + 1;
    let s = param.sigma();
    Ok(KPartition {
        k,
        s11: s.view((0, 0), (r, r)).clone_owned(),
        s12: s.view((0, p), (r, 1)).column(0).clone_owned(),
        s22: s[(p, p)],
    })
}
