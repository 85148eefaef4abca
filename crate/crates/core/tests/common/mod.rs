//! Reference computations that do not share code paths with the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Random `n x m` matrix with orthonormal columns (QR of a Gaussian matrix).
pub fn random_orthonormal<R: Rng>(n: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Calls `f` with every strictly increasing `k`-subset of `0..n`.
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact value of `min ‖x‖₁ s.t. A x = y` for full-row-rank `A`, by
/// enumerating every nonsingular square column subset. Each one is a vertex
/// of the split linear program, and the optimum is attained at one.
pub fn l1_vertex_oracle(a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let (m, n) = a.shape();
    let scale = 1.0 + y.amax();
    let mut best = f64::INFINITY;
    for_each_combination(n, m, |cols| {
        let sub = a.select_columns(cols);
        if let Some(z) = sub.clone().lu().solve(y) {
            if z.iter().all(|v| v.is_finite()) && (&sub * &z - y).amax() <= 1e-10 * scale {
                best = best.min(z.lp_norm(1));
            }
        }
    });
    best
}

/// Sparsest-first search: the minimum-ℓ1 solution among supports of size at
/// most `k` whose least-squares fit of `A x = y` is exact to `tol`.
pub fn sparse_support_oracle(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    tol: f64,
) -> Option<(Vec<usize>, DVector<f64>)> {
    let n = a.ncols();
    if y.amax() <= tol {
        return Some((Vec::new(), DVector::zeros(n)));
    }
    let mut best: Option<(f64, Vec<usize>, DVector<f64>)> = None;
    for size in 1..=k {
        for_each_combination(n, size, |cols| {
            let sub = a.select_columns(cols);
            let normal = sub.transpose() * &sub;
            let Some(z) = normal.lu().solve(&(sub.transpose() * y)) else {
                return;
            };
            if (&sub * &z - y).amax() > tol {
                return;
            }
            let cost = z.lp_norm(1);
            if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                let mut x = DVector::zeros(n);
                for (&c, &v) in cols.iter().zip(z.iter()) {
                    x[c] = v;
                }
                best = Some((cost, cols.to_vec(), x));
            }
        });
    }
    best.map(|(_, s, x)| (s, x))
}

/// Connected components of an undirected graph by union-find.
pub fn component_count(n: usize, edges: &[(usize, usize)]) -> usize {
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut count = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            count -= 1;
        }
    }
    count
}

/// `Aᵀ diag(1/x) A` with `A` the branch-bus incidence matrix.
pub fn incidence_laplacian(n: usize, branches: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut inc = DMatrix::zeros(branches.len(), n);
    let mut w = DVector::zeros(branches.len());
    for (k, &(i, j, x)) in branches.iter().enumerate() {
        inc[(k, i)] = 1.0;
        inc[(k, j)] = -1.0;
        w[k] = 1.0 / x;
    }
    inc.transpose() * DMatrix::from_diagonal(&w) * inc
}
