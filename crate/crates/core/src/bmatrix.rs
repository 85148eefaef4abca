//! Susceptance matrix assembly and the DC forward model.

use nalgebra::{DMatrix, DVector};

use crate::case::NetworkCase;
use crate::error::{Error, Result};

/// Dense bus susceptance matrix, a reactance-weighted graph Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct SusceptanceMatrix {
    entries: DMatrix<f64>,
}

impl SusceptanceMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        Ok(SusceptanceMatrix { entries })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

/// Bus voltage angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub DVector<f64>);

/// Bus active power injections in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionVector(pub DVector<f64>);

impl StateVector {
    pub fn from_slice(angles: &[f64]) -> Self {
        StateVector(DVector::from_column_slice(angles))
    }
}

impl InjectionVector {
    pub fn from_slice(injections: &[f64]) -> Self {
        InjectionVector(DVector::from_column_slice(injections))
    }
}

/// Builds B from the in-service branches: `B_ii = Σ 1/x_ik`, `B_ij = -Σ 1/x_ij`
/// over (possibly parallel) lines between i and j.
pub fn build_b(case: &NetworkCase) -> SusceptanceMatrix {
    let n = case.bus_count();
    let mut b = DMatrix::zeros(n, n);
    for br in case.in_service_branches() {
        let y = 1.0 / br.reactance_x;
        let (i, j) = (br.from_bus, br.to_bus);
        b[(i, i)] += y;
        b[(j, j)] += y;
        b[(i, j)] -= y;
        b[(j, i)] -= y;
    }
    SusceptanceMatrix { entries: b }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `p = B δ`.
pub fn injections(b: &SusceptanceMatrix, state: &StateVector) -> Result<InjectionVector> {
    check_dim(b.dim(), state.0.len())?;
    Ok(InjectionVector(&b.entries * &state.0))
}

/// DC flow `(δ_from - δ_to) / x` on each in-service branch, in branch order.
pub fn line_flows(case: &NetworkCase, state: &StateVector) -> Result<Vec<f64>> {
    check_dim(case.bus_count(), state.0.len())?;
    let delta = &state.0;
    Ok(case
        .in_service_branches()
        .map(|br| (delta[br.from_bus] - delta[br.to_bus]) / br.reactance_x)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{parse_case, NetworkCase, RawBranch, RawBus};

    fn triangle() -> NetworkCase {
        let buses: Vec<RawBus> = (1..=3)
            .map(|id| RawBus {
                id,
                kind: if id == 1 { 3 } else { 1 },
                angle_deg: 0.0,
            })
            .collect();
        let branches: Vec<RawBranch> = [(1, 2), (2, 3), (3, 1)]
            .iter()
            .map(|&(from, to)| RawBranch {
                from,
                to,
                r: 0.0,
                x: 1.0,
                status: 1.0,
            })
            .collect();
        NetworkCase::from_tables("triangle", &buses, &branches).unwrap()
    }

    #[test]
    fn two_bus_matrix() {
        let case = parse_case(crate::case::tests::TWO_BUS).unwrap();
        let b = build_b(&case);
        assert_eq!(
            b.entries(),
            &DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0])
        );
    }

    #[test]
    fn triangle_is_unit_laplacian() {
        let b = build_b(&triangle());
        let expected =
            DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
        assert_eq!(b.entries(), &expected);
    }

    #[test]
    fn parallel_lines_sum() {
        let buses = [
            RawBus {
                id: 1,
                kind: 3,
                angle_deg: 0.0,
            },
            RawBus {
                id: 2,
                kind: 1,
                angle_deg: 0.0,
            },
        ];
        let branches = [
            RawBranch {
                from: 1,
                to: 2,
                r: 0.0,
                x: 0.5,
                status: 1.0,
            },
            RawBranch {
                from: 2,
                to: 1,
                r: 0.0,
                x: 0.25,
                status: 1.0,
            },
        ];
        let case = NetworkCase::from_tables("parallel", &buses, &branches).unwrap();
        let b = build_b(&case);
        assert_eq!(b.entries()[(0, 1)], -6.0);
        assert_eq!(b.entries()[(1, 1)], 6.0);
    }

    #[test]
    fn forward_model_examples() {
        let case = parse_case(crate::case::tests::TWO_BUS).unwrap();
        let b = build_b(&case);

        let zero = injections(&b, &StateVector::from_slice(&[0.0, 0.0])).unwrap();
        assert_eq!(zero.0.amax(), 0.0);

        let flat = injections(&b, &StateVector::from_slice(&[0.7, 0.7])).unwrap();
        assert!(flat.0.amax() <= 1e-9);

        let p = injections(&b, &StateVector::from_slice(&[0.1, 0.0])).unwrap();
        assert!((p.0[0] - 0.2).abs() < 1e-15 && (p.0[1] + 0.2).abs() < 1e-15);

        let flows = line_flows(&case, &StateVector::from_slice(&[0.1, 0.0])).unwrap();
        assert!((flows[0] - 0.2).abs() < 1e-15);
        let flows = line_flows(&case, &StateVector::from_slice(&[0.3, 0.3])).unwrap();
        assert_eq!(flows, vec![0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let b = build_b(&triangle());
        let err = injections(&b, &StateVector::from_slice(&[0.0; 2])).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 3,
                actual: 2
            }
        );
        assert!(line_flows(&triangle(), &StateVector::from_slice(&[0.0; 4])).is_err());
    }
}
