//! ℓ1 error decomposition, ℓ1 and least-squares coefficient estimates, and
//! state recovery.
//!
//! The measurement model is `p = Q a + ε` with `Q` an orthonormal basis of
//! col(B). Projecting onto the complement removes the signal, leaving
//! `Q⊥ᵀ ε = Q⊥ᵀ p`; the sparse `ε` is the minimum-ℓ1 solution of that
//! underdetermined system. It is solved as a linear program over the split
//! `ε = u - v` with `u, v ≥ 0`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bmatrix::{InjectionVector, StateVector};
use crate::case::{connected_components, BusKind, NetworkCase};
use crate::error::{invalid, Error, Result};
use crate::lp::{self, LpStatus, SimplexOptions};
use crate::subspace::SubspaceBasis;

/// Default detection threshold in per-unit.
pub const DEFAULT_THETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub epsilon_hat: DVector<f64>,
    /// `‖ε̂‖₁`.
    pub objective: f64,
    pub solver_status: SolverStatus,
    pub iterations: usize,
    /// `‖A ε̂ - y‖∞` of the decomposition constraint.
    pub constraint_residual: f64,
}

impl NoiseEstimate {
    pub fn is_optimal(&self) -> bool {
        self.solver_status == SolverStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMethod {
    Lse,
    L1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEstimate {
    pub a_hat: DVector<f64>,
    pub method: EstimateMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedSupport {
    pub indices: Vec<usize>,
    pub threshold_theta: f64,
}

/// Equality tolerance accepted for an optimal decomposition.
pub fn feasibility_tolerance(rhs: &DVector<f64>) -> f64 {
    1e-8 * (1.0 + rhs.amax())
}

/// Minimum-ℓ1 solution of `A x = y` (basis pursuit).
pub fn l1_decompose(constraint: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<NoiseEstimate> {
    let (m, n) = constraint.shape();
    if rhs.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: rhs.len(),
        });
    }
    if constraint.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("decomposition input"));
    }

    let mut split = DMatrix::zeros(m, 2 * n);
    split.view_mut((0, 0), (m, n)).copy_from(constraint);
    split.view_mut((0, n), (m, n)).copy_from(&(-constraint));
    let cost = DVector::from_element(2 * n, 1.0);
    let sol = lp::solve(&split, rhs, &cost, SimplexOptions::default());

    let epsilon_hat = match sol.status {
        LpStatus::Optimal | LpStatus::MaxIterations => sol.x.rows(0, n) - sol.x.rows(n, n),
        LpStatus::Infeasible | LpStatus::Unbounded | LpStatus::NumericalFailure => {
            DVector::zeros(n)
        }
    };
    let constraint_residual = (constraint * &epsilon_hat - rhs).amax();
    let solver_status = match sol.status {
        LpStatus::Optimal if constraint_residual <= feasibility_tolerance(rhs) => {
            SolverStatus::Optimal
        }
        // A numerical breakdown is reported as non-convergence.
        LpStatus::MaxIterations | LpStatus::NumericalFailure => SolverStatus::MaxIterations,
        _ => SolverStatus::Infeasible,
    };
    Ok(NoiseEstimate {
        objective: epsilon_hat.lp_norm(1),
        epsilon_hat,
        solver_status,
        iterations: sol.iterations,
        constraint_residual,
    })
}

fn check_measurements(basis: &SubspaceBasis, p: &InjectionVector) -> Result<()> {
    if p.0.len() != basis.bus_count() {
        return Err(Error::DimensionMismatch {
            expected: basis.bus_count(),
            actual: p.0.len(),
        });
    }
    if p.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("injection vector"));
    }
    Ok(())
}

/// Recovers the sparse error: `min ‖ε̂‖₁ s.t. Q⊥ᵀ ε̂ = Q⊥ᵀ p`.
///
/// A non-optimal solve is not an error; check `solver_status`.
pub fn l1_detect(basis: &SubspaceBasis, p: &InjectionVector) -> Result<NoiseEstimate> {
    check_measurements(basis, p)?;
    if basis.complement_dim() == 0 {
        return Err(Error::EmptyComplement(basis.rank()));
    }
    let a = basis.q_perp().transpose();
    let y = &a * &p.0;
    l1_decompose(&a, &y)
}

/// Least-squares coefficients `â = Qᵀ p`.
pub fn lse(basis: &SubspaceBasis, p: &InjectionVector) -> Result<CoefficientEstimate> {
    check_measurements(basis, p)?;
    Ok(CoefficientEstimate {
        a_hat: basis.q().transpose() * &p.0,
        method: EstimateMethod::Lse,
    })
}

/// ℓ1 regression `min ‖p - Q â‖₁`, solved through the equivalent
/// decomposition: `ε̂` from [`l1_detect`], then `â = Qᵀ (p - ε̂)`.
pub fn l1_regress(
    basis: &SubspaceBasis,
    p: &InjectionVector,
) -> Result<(CoefficientEstimate, NoiseEstimate)> {
    let noise = l1_detect(basis, p)?;
    let a_hat = basis.q().transpose() * (&p.0 - &noise.epsilon_hat);
    Ok((
        CoefficientEstimate {
            a_hat,
            method: EstimateMethod::L1,
        },
        noise,
    ))
}

/// Indices with `|ε̂_i| ≥ θ`, ascending.
pub fn flag_support(est: &NoiseEstimate, theta: f64) -> Result<FlaggedSupport> {
    if theta.is_nan() || theta < 0.0 {
        return Err(invalid(
            "theta",
            format!("must be nonnegative, got {theta}"),
        ));
    }
    let indices = est
        .epsilon_hat
        .iter()
        .enumerate()
        .filter(|(_, e)| e.abs() >= theta)
        .map(|(i, _)| i)
        .collect();
    Ok(FlaggedSupport {
        indices,
        threshold_theta: theta,
    })
}

/// Minimum-norm angles solving `B δ ≈ p_clean`, re-referenced so each
/// island's slack bus sits at angle zero. Islands without a slack keep the
/// minimum-norm angles.
pub fn recover_state(
    case: &NetworkCase,
    basis: &SubspaceBasis,
    p_clean: &InjectionVector,
) -> Result<StateVector> {
    check_measurements(basis, p_clean)?;
    let mut delta = StateVector(basis.pseudo_inverse_apply(&p_clean.0));
    reference_to_slack(case, &mut delta);
    Ok(delta)
}

/// Shifts each island's angles so its slack bus sits at zero. Islands
/// without a slack are left alone.
pub fn reference_to_slack(case: &NetworkCase, delta: &mut StateVector) {
    for component in connected_components(case) {
        let slack = component
            .iter()
            .copied()
            .find(|&i| case.buses[i].kind == BusKind::Slack);
        if let Some(s) = slack {
            let shift = delta.0[s];
            for &i in &component {
                delta.0[i] -= shift;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bmatrix::build_b;
    use crate::case::parse_case;
    use crate::subspace::decompose;

    fn two_bus_basis() -> (NetworkCase, SubspaceBasis) {
        let case = parse_case(crate::case::tests::TWO_BUS).unwrap();
        let basis = decompose(&build_b(&case), 1e-8).unwrap();
        (case, basis)
    }

    #[test]
    fn signal_only_measurement_has_zero_error() {
        let (_, basis) = two_bus_basis();
        let p = InjectionVector::from_slice(&[0.2, -0.2]);
        let est = l1_detect(&basis, &p).unwrap();
        assert!(est.is_optimal());
        assert!(est.objective <= 1e-12);
        assert!(flag_support(&est, 0.1).unwrap().indices.is_empty());
    }

    #[test]
    fn single_constraint_geometry() {
        let (_, basis) = two_bus_basis();
        let est = l1_detect(&basis, &InjectionVector::from_slice(&[3.0, 0.0])).unwrap();
        assert!(est.is_optimal());
        let e = &est.epsilon_hat;
        assert!((est.objective - 3.0).abs() < 1e-12);
        assert!(e[0] >= -1e-12 && e[1] >= -1e-12);
        assert!((e[0] + e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lse_projection() {
        let (_, basis) = two_bus_basis();
        let q = basis.q().column(0).into_owned();
        let a = lse(&basis, &InjectionVector(&q * 1.5)).unwrap();
        assert!((a.a_hat[0] - 1.5).abs() < 1e-12);
        let orth = lse(&basis, &InjectionVector::from_slice(&[1.0, 1.0])).unwrap();
        assert!(orth.a_hat[0].abs() < 1e-12);
        assert_eq!(orth.method, EstimateMethod::Lse);
    }

    #[test]
    fn flag_threshold() {
        let est = NoiseEstimate {
            epsilon_hat: DVector::from_vec(vec![0.05, -5.0, 0.0]),
            objective: 5.05,
            solver_status: SolverStatus::Optimal,
            iterations: 0,
            constraint_residual: 0.0,
        };
        assert_eq!(flag_support(&est, 0.1).unwrap().indices, vec![1]);
        assert_eq!(flag_support(&est, 0.0).unwrap().indices, vec![0, 1, 2]);
        assert!(flag_support(&est, -1.0).is_err());
        let zero = NoiseEstimate {
            epsilon_hat: DVector::zeros(3),
            ..est
        };
        assert!(flag_support(&zero, 0.1).unwrap().indices.is_empty());
    }

    #[test]
    fn recover_two_bus_state() {
        let (case, basis) = two_bus_basis();
        let delta =
            recover_state(&case, &basis, &InjectionVector::from_slice(&[0.2, -0.2])).unwrap();
        assert!(delta.0[0].abs() < 1e-15);
        assert!((delta.0[1] + 0.1).abs() < 1e-14);

        // Slack is bus 1 (dense 0); reference the other way round.
        let text = crate::case::tests::TWO_BUS
            .replace("    1   3   0", "    1   1   0")
            .replace("    2   1   0", "    2   3   0");
        let case = parse_case(&text).unwrap();
        let delta =
            recover_state(&case, &basis, &InjectionVector::from_slice(&[0.2, -0.2])).unwrap();
        assert!((delta.0[0] - 0.1).abs() < 1e-14 && delta.0[1].abs() < 1e-15);

        let zero = recover_state(&case, &basis, &InjectionVector::from_slice(&[0.0, 0.0])).unwrap();
        assert_eq!(zero.0.amax(), 0.0);
    }

    #[test]
    fn rejects_bad_measurements() {
        let (_, basis) = two_bus_basis();
        assert!(l1_detect(&basis, &InjectionVector::from_slice(&[f64::NAN, 0.0])).is_err());
        assert!(lse(&basis, &InjectionVector::from_slice(&[0.0])).is_err());
    }
}
