//! Dense two-phase primal simplex for standard-form linear programs
//!
//! ```text
//! minimize cᵀx  subject to  A x = b,  x ≥ 0
//! ```
//!
//! Pricing is Dantzig's largest-coefficient rule with lowest-index ties. After
//! a run of degenerate pivots the solver switches to Bland's rule until it makes
//! progress again, which rules out cycling. The tableau is periodically rebuilt
//! from an LU factorization of the current basis, and the final basic solution
//! is recomputed from that factorization so equality residuals sit at rounding
//! level. Everything is sequential and deterministic.

use nalgebra::{DMatrix, DVector, RowDVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    Unbounded,
    /// The final basis was primal infeasible at every pivot tolerance tried.
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Smallest admissible pivot magnitude.
    pub pivot_tol: f64,
    /// Reduced costs above `-opt_tol` count as nonnegative.
    pub opt_tol: f64,
    /// Relative tolerance on phase-one infeasibility.
    pub feas_tol: f64,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iterations: 50_000,
            pivot_tol: 1e-9,
            opt_tol: 1e-10,
            feas_tol: 1e-9,
            refactor_every: 200,
            degenerate_limit: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
}

/// Tableau over the constraint rows kept after phase one.
struct Tableau {
    /// `B⁻¹ [A | b]`; last column is the basic solution.
    t: DMatrix<f64>,
    /// Reduced costs; last entry is minus the objective.
    d: RowDVector<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn ncols(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.t[(row, col)];
        let pivot_row: RowDVector<f64> = self.t.row(row) / piv;
        let mut column = self.t.column(col).into_owned();
        column[row] = 0.0;
        self.t.ger(-1.0, &column, &pivot_row.transpose(), 1.0);
        self.t.set_row(row, &pivot_row);
        let dc = self.d[col];
        self.d -= &pivot_row * dc;
        self.basis[row] = col;
    }

    /// Entering column among the first `allowed` columns, or `None` at
    /// optimality.
    fn entering(&self, allowed: usize, opt_tol: f64, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..allowed {
            let dj = self.d[j];
            if dj < -opt_tol {
                if bland {
                    return Some(j);
                }
                if best.is_none_or(|(_, v)| dj < v) {
                    best = Some((j, dj));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Harris two-pass ratio test. The first pass finds the largest step
    /// that keeps every basic value above `-feas`; the second picks the
    /// largest pivot among rows blocking within that step. `None` means the
    /// column is unbounded.
    fn leaving(&self, col: usize, pivot_tol: f64, feas: f64, bland: bool) -> Option<(usize, f64)> {
        let rhs = self.ncols();
        let mut bound = f64::INFINITY;
        for i in 0..self.t.nrows() {
            let a = self.t[(i, col)];
            if a > pivot_tol {
                bound = bound.min((self.t[(i, rhs)].max(0.0) + feas) / a);
            }
        }
        if bound.is_infinite() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.t.nrows() {
            let a = self.t[(i, col)];
            if a <= pivot_tol {
                continue;
            }
            let ratio = self.t[(i, rhs)].max(0.0) / a;
            if ratio > bound {
                continue;
            }
            let better = match best {
                None => true,
                Some((k, _)) if bland => self.basis[i] < self.basis[k],
                Some((k, _)) => a > self.t[(k, col)],
            };
            if better {
                best = Some((i, ratio));
            }
        }
        best
    }
}

enum Outcome {
    Optimal,
    Unbounded,
    MaxIterations,
}

struct Solver {
    opts: SimplexOptions,
    /// Absolute primal feasibility tolerance.
    feas: f64,
    iterations: usize,
}

impl Solver {
    /// Runs simplex iterations on `tab` using only the first `allowed`
    /// columns as entering candidates. `rebuild` refreshes the tableau from
    /// its basis.
    fn iterate(
        &mut self,
        tab: &mut Tableau,
        allowed: usize,
        rebuild: &dyn Fn(&[usize]) -> Option<Tableau>,
    ) -> Outcome {
        let mut degenerate = 0;
        let mut since_refactor = 0;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Outcome::MaxIterations;
            }
            let bland = degenerate >= self.opts.degenerate_limit;
            let Some(col) = tab.entering(allowed, self.opts.opt_tol, bland) else {
                return Outcome::Optimal;
            };
            let Some((row, ratio)) = tab.leaving(col, self.opts.pivot_tol, self.feas, bland) else {
                return Outcome::Unbounded;
            };
            // Harris steps leave basic values up to `feas` below zero; the
            // leaving one is shifted back so the entering value stays >= 0.
            let rhs = tab.ncols();
            if tab.t[(row, rhs)] < 0.0 {
                tab.t[(row, rhs)] = 0.0;
            }
            tab.pivot(row, col);
            self.iterations += 1;
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            since_refactor += 1;
            if since_refactor >= self.opts.refactor_every {
                since_refactor = 0;
                if let Some(fresh) = rebuild(&tab.basis) {
                    *tab = fresh;
                }
            }
        }
    }
}

impl Solver {
    /// Dual simplex pivots on a refactored, dual-feasible tableau until no
    /// basic value is below `-tol`. Returns false if a negative row has no
    /// admissible pivot.
    fn dual_cleanup(&mut self, tab: &mut Tableau, allowed: usize, tol: f64) -> bool {
        let rhs = tab.ncols();
        for _ in 0..tab.t.nrows() {
            let Some((row, value)) = (0..tab.t.nrows())
                .map(|i| (i, tab.t[(i, rhs)]))
                .min_by(|x, y| x.1.total_cmp(&y.1))
            else {
                return true;
            };
            if value >= -tol {
                return true;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..allowed {
                let a = tab.t[(row, j)];
                if a < -self.opts.pivot_tol {
                    let ratio = tab.d[j].max(0.0) / -a;
                    if best.is_none_or(|(_, r)| ratio < r) {
                        best = Some((j, ratio));
                    }
                }
            }
            let Some((col, _)) = best else {
                return false;
            };
            tab.pivot(row, col);
            self.iterations += 1;
        }
        (0..tab.t.nrows()).all(|i| tab.t[(i, rhs)] >= -tol)
    }
}

/// Solves `min cᵀx s.t. A x = b, x ≥ 0`.
///
/// If the polished basic solution violates `x ≥ 0`, the solve restarts with
/// a pivot tolerance 100 times larger, at most twice.
pub fn solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    opts: SimplexOptions,
) -> LpSolution {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m, "rhs length must match constraint rows");
    assert_eq!(c.len(), n, "cost length must match columns");

    let feas = opts.feas_tol * (1.0 + b.amax());
    let mut iterations = 0;
    let mut attempt = opts;
    for _ in 0..3 {
        let mut sol = solve_once(a, b, c, attempt, feas);
        iterations += sol.iterations;
        sol.iterations = iterations;
        if sol.status != LpStatus::Optimal || sol.x.min() >= -feas {
            return sol;
        }
        attempt.pivot_tol *= 100.0;
        attempt.max_iterations = attempt.max_iterations.saturating_sub(sol.iterations);
    }
    failed(n, LpStatus::NumericalFailure, iterations)
}

fn solve_once(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    opts: SimplexOptions,
    feas: f64,
) -> LpSolution {
    let (m, n) = a.shape();

    // Flip rows so the artificial basis starts feasible.
    let mut af = a.clone();
    let mut bf = b.clone();
    for i in 0..m {
        if bf[i] < 0.0 {
            af.row_mut(i).neg_mut();
            bf[i] = -bf[i];
        }
    }

    let mut solver = Solver {
        opts,
        feas,
        iterations: 0,
    };

    // Phase one over [A | I].
    let mut t = DMatrix::zeros(m, n + m + 1);
    t.view_mut((0, 0), (m, n)).copy_from(&af);
    for i in 0..m {
        t[(i, n + i)] = 1.0;
        t[(i, n + m)] = bf[i];
    }
    let mut d = RowDVector::zeros(n + m + 1);
    for j in 0..n {
        d[j] = -af.column(j).sum();
    }
    d[n + m] = -bf.sum();
    let mut tab = Tableau {
        t,
        d,
        basis: (n..n + m).collect(),
    };

    let phase_one_rebuild = |basis: &[usize]| {
        let mut cost = DVector::zeros(n + m);
        cost.rows_mut(n, m).fill(1.0);
        let mut full = DMatrix::zeros(m, n + m);
        full.view_mut((0, 0), (m, n)).copy_from(&af);
        full.view_mut((0, n), (m, m)).fill_with_identity();
        rebuild_tableau(&full, &bf, &cost, basis, true)
    };
    match solver.iterate(&mut tab, n, &phase_one_rebuild) {
        Outcome::MaxIterations => return failed(n, LpStatus::MaxIterations, solver.iterations),
        // Phase one is bounded below by zero.
        Outcome::Unbounded | Outcome::Optimal => {}
    }
    let infeasibility = -tab.d[n + m];
    if infeasibility > feas {
        return failed(n, LpStatus::Infeasible, solver.iterations);
    }

    // Drive remaining artificials out of the basis; rows where that is
    // impossible are linearly dependent and get dropped.
    let mut keep = Vec::with_capacity(m);
    for i in 0..m {
        if tab.basis[i] >= n {
            let candidate = (0..n)
                .map(|j| (j, tab.t[(i, j)].abs()))
                .filter(|&(_, v)| v > opts.pivot_tol)
                .fold(None::<(usize, f64)>, |acc, (j, v)| match acc {
                    Some((_, best)) if best >= v => acc,
                    _ => Some((j, v)),
                });
            match candidate {
                Some((j, _)) => tab.pivot(i, j),
                None => continue,
            }
        }
        keep.push(i);
    }
    let a2 = af.select_rows(&keep);
    let b2 = bf.select_rows(&keep);
    let basis: Vec<usize> = keep.iter().map(|&i| tab.basis[i]).collect();

    let rebuild = |basis: &[usize]| rebuild_tableau(&a2, &b2, c, basis, true);
    let Some(mut tab) = rebuild(&basis) else {
        return failed(n, LpStatus::Infeasible, solver.iterations);
    };

    let mut status = LpStatus::Optimal;
    // Iterate, refactor without clamping, then repair any small primal
    // infeasibility with dual pivots. Stop once the refactored tableau is
    // both primal and dual feasible.
    for _ in 0..8 {
        match solver.iterate(&mut tab, n, &rebuild) {
            Outcome::Optimal => {}
            Outcome::Unbounded => return failed(n, LpStatus::Unbounded, solver.iterations),
            Outcome::MaxIterations => {
                status = LpStatus::MaxIterations;
                break;
            }
        }
        let Some(mut fresh) = rebuild_tableau(&a2, &b2, c, &tab.basis, false) else {
            break;
        };
        let primal = solver.dual_cleanup(&mut fresh, n, 1e-3 * feas);
        let Some(mut fresh) = rebuild_tableau(&a2, &b2, c, &fresh.basis, false) else {
            break;
        };
        let rhs = fresh.ncols();
        let primal = primal && (0..fresh.t.nrows()).all(|i| fresh.t[(i, rhs)] >= -feas);
        let dual = fresh.entering(n, opts.opt_tol, false).is_none();
        for i in 0..fresh.t.nrows() {
            if fresh.t[(i, rhs)] < 0.0 {
                fresh.t[(i, rhs)] = 0.0;
            }
        }
        tab = fresh;
        if primal && dual {
            break;
        }
    }

    let x = basic_solution(&a2, &b2, &tab.basis, n).unwrap_or_else(|| {
        let mut x = DVector::zeros(n);
        for (i, &j) in tab.basis.iter().enumerate() {
            x[j] = tab.t[(i, n)];
        }
        x
    });
    LpSolution {
        objective: c.dot(&x),
        x,
        status,
        iterations: solver.iterations,
    }
}

fn failed(n: usize, status: LpStatus, iterations: usize) -> LpSolution {
    LpSolution {
        x: DVector::zeros(n),
        objective: f64::NAN,
        status,
        iterations,
    }
}

fn basic_solution(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    basis: &[usize],
    n: usize,
) -> Option<DVector<f64>> {
    let xb = a.select_columns(basis).lu().solve(b)?;
    let mut x = DVector::zeros(n);
    for (&j, &v) in basis.iter().zip(xb.iter()) {
        x[j] = v;
    }
    Some(x)
}

fn rebuild_tableau(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    basis: &[usize],
    clamp: bool,
) -> Option<Tableau> {
    let (m, n) = a.shape();
    let lu = a.select_columns(basis).lu();
    let mut full = DMatrix::zeros(m, n + 1);
    full.view_mut((0, 0), (m, n)).copy_from(a);
    full.set_column(n, b);
    let t = lu.solve(&full)?;
    if t.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cb = DVector::from_iterator(m, basis.iter().map(|&j| c[j]));
    let mut d = RowDVector::zeros(n + 1);
    for j in 0..n {
        d[j] = c[j] - cb.dot(&t.column(j));
    }
    d[n] = -cb.dot(&t.column(n));
    let mut t = t;
    if clamp {
        for i in 0..m {
            if t[(i, n)] < 0.0 {
                t[(i, n)] = 0.0;
            }
        }
    }
    Some(Tableau {
        t,
        d,
        basis: basis.to_vec(),
    })
}
