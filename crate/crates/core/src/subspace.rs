//! Numerical-rank split of B into its column space and the complement.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::Serialize;

use crate::bmatrix::SusceptanceMatrix;
use crate::error::{invalid, Error, Result};

/// Default relative rank threshold: singular values at or below `tau * σ_1`
/// count as negligible.
pub const DEFAULT_TAU: f64 = 1e-2;
/// Default constant `c` of the sufficient recovery bound.
pub const DEFAULT_BOUND_C: f64 = 1.0;
/// Default failure probability of the sufficient recovery bound.
pub const DEFAULT_FAILURE_PROB: f64 = 0.05;

/// Orthonormal bases of col(B) and its complement from a full SVD.
///
/// Singular triplets are stored in nonincreasing order of singular value.
/// `q` holds the first `rank` left singular vectors and `q_perp` the rest.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    q: DMatrix<f64>,
    q_perp: DMatrix<f64>,
    right: DMatrix<f64>,
    singular_values: DVector<f64>,
    rank: usize,
    tau: f64,
}

struct SortedSvd {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    sigma: DVector<f64>,
}

fn sorted_svd(b: &DMatrix<f64>) -> Result<SortedSvd> {
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("susceptance matrix"));
    }
    let n = b.nrows();
    let scale = b.amax();
    let (u, v, sigma) = if (b - b.transpose()).amax() <= 1e-12 * scale {
        // Symmetric input: B = V Λ Vᵀ gives σ = |λ|, u = sign(λ) v.
        let eig = SymmetricEigen::try_new(b.clone(), f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
        let sigma = eig.eigenvalues.map(f64::abs);
        let mut u = eig.eigenvectors.clone();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < 0.0 {
                u.column_mut(k).neg_mut();
            }
        }
        (u, eig.eigenvectors, sigma)
    } else {
        let svd = SVD::try_new(b.clone(), true, true, f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            return Err(Error::SvdFailed);
        };
        let recomposed = &u * DMatrix::from_diagonal(&svd.singular_values) * &v_t;
        if (recomposed - b).amax() > 1e-10 * (1.0 + scale) * n as f64 {
            return Err(Error::SvdFailed);
        }
        (u, v_t.transpose(), svd.singular_values)
    };
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort: equal singular values keep the solver's order.
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    Ok(SortedSvd {
        u: DMatrix::from_fn(n, n, |i, k| u[(i, order[k])]),
        v: DMatrix::from_fn(n, n, |i, k| v[(i, order[k])]),
        sigma: DVector::from_fn(n, |k, _| sigma[order[k]]),
    })
}

/// Singular values of B in nonincreasing order.
pub fn spectrum(b: &SusceptanceMatrix) -> Result<Vec<f64>> {
    Ok(sorted_svd(b.entries())?.sigma.iter().copied().collect())
}

fn numerical_rank(sigma: &DVector<f64>, tau: f64) -> usize {
    let cutoff = tau * sigma.get(0).copied().unwrap_or(0.0);
    sigma.iter().filter(|&&s| s > cutoff).count()
}

/// Splits B at the relative threshold `tau` (`0 < tau < 1`).
///
/// Fails with [`Error::EmptyComplement`] when every singular value is above
/// the cutoff, since there is then nothing to detect errors against.
pub fn decompose(b: &SusceptanceMatrix, tau: f64) -> Result<SubspaceBasis> {
    check_tau(tau)?;
    let SortedSvd { u, v, sigma } = sorted_svd(b.entries())?;
    let n = sigma.len();
    let rank = numerical_rank(&sigma, tau);
    if rank == n {
        return Err(Error::EmptyComplement(rank));
    }
    Ok(SubspaceBasis {
        q: u.columns(0, rank).into_owned(),
        q_perp: u.columns(rank, n - rank).into_owned(),
        right: v,
        singular_values: sigma,
        rank,
        tau,
    })
}

pub fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("tau", format!("must lie in (0, 1), got {tau}")));
    }
    Ok(())
}

impl SubspaceBasis {
    /// Basis of the orthogonal projector `U_r U_rᵀ`, for a square orthonormal
    /// `u` whose first `rank` columns span the signal space.
    pub fn from_orthonormal(u: DMatrix<f64>, rank: usize) -> Result<Self> {
        let n = u.nrows();
        if !u.is_square() {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: u.ncols(),
            });
        }
        if rank >= n {
            return Err(Error::EmptyComplement(rank));
        }
        let singular_values = DVector::from_fn(n, |k, _| if k < rank { 1.0 } else { 0.0 });
        Ok(SubspaceBasis {
            q: u.columns(0, rank).into_owned(),
            q_perp: u.columns(rank, n - rank).into_owned(),
            right: u,
            singular_values,
            rank,
            tau: 0.5,
        })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn q_perp(&self) -> &DMatrix<f64> {
        &self.q_perp
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bus_count(&self) -> usize {
        self.q.nrows()
    }

    pub fn complement_dim(&self) -> usize {
        self.q_perp.ncols()
    }

    /// `Q Qᵀ x`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * (self.q.transpose() * x)
    }

    /// Rank-truncated pseudoinverse applied to `p`: `V_r Σ_r⁻¹ Qᵀ p`.
    pub fn pseudo_inverse_apply(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut coeffs = self.q.transpose() * p;
        for (c, s) in coeffs.iter_mut().zip(self.singular_values.iter()) {
            *c /= s;
        }
        self.right.columns(0, self.rank) * coeffs
    }

    /// `v_iᵀ B v_i` for every right singular vector, recovered from the SVD as
    /// `σ_i (u_i · v_i)`. For symmetric B these are its eigenvalues.
    pub fn eigenvalue_estimates(&self) -> Vec<f64> {
        (0..self.bus_count())
            .map(|k| {
                let u_k = if k < self.rank {
                    self.q.column(k)
                } else {
                    self.q_perp.column(k - self.rank)
                };
                self.singular_values[k] * u_k.dot(&self.right.column(k))
            })
            .collect()
    }

    /// Count of singular values at or below `tau * σ_1`.
    pub fn negligible_count(&self) -> usize {
        self.bus_count() - self.rank
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub mu_b: f64,
    pub per_row_norms: Vec<f64>,
}

/// Smallest μ with `max_i ‖Q⊥ᵀ e_i‖₂ ≤ μ (ℵ - r_B) / ℵ`.
pub fn coherence(basis: &SubspaceBasis) -> Result<CoherenceReport> {
    let m = basis.complement_dim();
    if m == 0 {
        return Err(Error::EmptyComplement(basis.rank()));
    }
    let per_row_norms: Vec<f64> = basis.q_perp().row_iter().map(|row| row.norm()).collect();
    let max = per_row_norms.iter().copied().fold(0.0, f64::max);
    Ok(CoherenceReport {
        mu_b: basis.bus_count() as f64 / m as f64 * max,
        per_row_norms,
    })
}

/// Sufficient condition `ℵ - r_B ≥ c k μ_B ln(ℵ / failure_prob)` for exact
/// recovery of a k-sparse error. Informational only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryCondition {
    pub sparsity: usize,
    pub constant_c: f64,
    pub failure_prob: f64,
    pub mu_b: f64,
    pub complement_dim: usize,
    /// Right-hand side of the inequality.
    pub required: f64,
    pub satisfied: bool,
}

impl RecoveryCondition {
    pub fn evaluate(
        bus_count: usize,
        complement_dim: usize,
        mu_b: f64,
        sparsity: usize,
        constant_c: f64,
        failure_prob: f64,
    ) -> Result<Self> {
        if constant_c.is_nan() || constant_c <= 0.0 {
            return Err(invalid("c", format!("must be positive, got {constant_c}")));
        }
        if !(failure_prob > 0.0 && failure_prob < 1.0) {
            return Err(invalid(
                "failure_prob",
                format!("must lie in (0, 1), got {failure_prob}"),
            ));
        }
        let required = constant_c * sparsity as f64 * mu_b * (bus_count as f64 / failure_prob).ln();
        Ok(RecoveryCondition {
            sparsity,
            constant_c,
            failure_prob,
            mu_b,
            complement_dim,
            required,
            satisfied: complement_dim as f64 >= required,
        })
    }
}

pub fn check_recovery_bound(
    basis: &SubspaceBasis,
    k: usize,
    c: f64,
    failure_prob: f64,
) -> Result<RecoveryCondition> {
    let mu = coherence(basis)?.mu_b;
    RecoveryCondition::evaluate(
        basis.bus_count(),
        basis.complement_dim(),
        mu,
        k,
        c,
        failure_prob,
    )
}

/// Largest sparsity for which the sufficient bound holds.
pub fn max_certified_sparsity(basis: &SubspaceBasis, c: f64, failure_prob: f64) -> Result<usize> {
    let holds = |k| check_recovery_bound(basis, k, c, failure_prob).map(|r| r.satisfied);
    let unit = check_recovery_bound(basis, 1, c, failure_prob)?;
    let mut k = (unit.complement_dim as f64 / unit.required).floor() as usize;
    while k > 0 && !holds(k)? {
        k -= 1;
    }
    while holds(k + 1)? {
        k += 1;
    }
    Ok(k)
}
