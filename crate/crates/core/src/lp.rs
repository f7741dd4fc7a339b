//! Linear programming over free variables: `maximize c·x subject to A x <= b`.
//!
//! Every geometric predicate in the crate (emptiness, containment, support
//! values, redundancy) reduces to this one contract. Problems here have few
//! variables and many constraints, so the solver works on the dual
//! `minimize b·y subject to Aᵀy = c, y >= 0`, whose tableau has one row per
//! primal variable. A two-phase method keeps the Infeasible verdict
//! trustworthy; the primal point is read back from the simplex multipliers and
//! then polished by re-solving the active constraints.

use crate::error::{Error, Result};
use crate::linalg::{solve_square, Matrix};
use crate::scalar::{dot, norm_inf, Scalar, EPS_FEAS};

#[derive(Clone, Debug)]
pub struct LinearProgram<T> {
    /// Maximized.
    pub objective: Vec<T>,
    pub a: Matrix<T>,
    pub b: Vec<T>,
    /// Optional `(lower, upper)` bound per variable.
    pub bounds: Option<Vec<(Option<T>, Option<T>)>>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(objective: Vec<T>, a: Matrix<T>, b: Vec<T>) -> Result<Self> {
        Error::check_dim("LP rows", a.nrows(), b.len())?;
        Error::check_dim("LP objective", a.ncols(), objective.len())?;
        Ok(Self { objective, a, b, bounds: None })
    }

    pub fn with_bounds(mut self, bounds: Vec<(Option<T>, Option<T>)>) -> Result<Self> {
        Error::check_dim("LP bounds", self.a.ncols(), bounds.len())?;
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn num_vars(&self) -> usize {
        self.a.ncols()
    }

    /// Constraint system with variable bounds folded in as rows.
    fn constraint_rows(&self) -> (Matrix<T>, Vec<T>) {
        let Some(bounds) = &self.bounds else {
            return (self.a.clone(), self.b.clone());
        };
        let n = self.num_vars();
        let mut rows = self.a.to_rows();
        let mut b = self.b.clone();
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if let Some(hi) = hi {
                let mut r = vec![T::zero(); n];
                r[i] = T::one();
                rows.push(r);
                b.push(*hi);
            }
            if let Some(lo) = lo {
                let mut r = vec![T::zero(); n];
                r[i] = -T::one();
                rows.push(r);
                b.push(-*lo);
            }
        }
        (Matrix::from_rows(&rows, n).expect("rows built with uniform width"), b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpOutcome<T> {
    pub status: LpStatus,
    /// Optimal value; `-inf` when infeasible and `+inf` when unbounded.
    pub value: T,
    /// Optimal point when `Optimal`; some feasible point when `Unbounded`.
    pub witness: Option<Vec<T>>,
}

impl<T: Scalar> LpOutcome<T> {
    fn infeasible() -> Self {
        Self { status: LpStatus::Infeasible, value: T::neg_infinity(), witness: None }
    }
}

pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpOutcome<T>> {
    let (a, b) = lp.constraint_rows();
    solve_system(&a, &b, &lp.objective)
}

/// `maximize c·x s.t. a x <= b` without building a [`LinearProgram`].
pub fn maximize<T: Scalar>(a: &Matrix<T>, b: &[T], c: &[T]) -> Result<LpOutcome<T>> {
    Error::check_dim("LP rows", a.nrows(), b.len())?;
    Error::check_dim("LP objective", a.ncols(), c.len())?;
    solve_system(a, b, c)
}

/// True iff `{x | a x <= b}` is nonempty.
pub fn feasible<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<bool> {
    Ok(feasible_point(a, b)?.is_some())
}

pub fn feasible_point<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Option<Vec<T>>> {
    let c = vec![T::zero(); a.ncols()];
    let out = maximize(a, b, &c)?;
    Ok(match out.status {
        LpStatus::Infeasible => None,
        _ => out.witness,
    })
}

fn solve_system<T: Scalar>(a: &Matrix<T>, b: &[T], c: &[T]) -> Result<LpOutcome<T>> {
    let n = a.ncols();
    let feas_tol = T::lit(EPS_FEAS);

    // Rows scaled to unit max-norm; vanishing rows are checked and dropped.
    let mut rows = Vec::with_capacity(a.nrows());
    let mut rhs = Vec::with_capacity(a.nrows());
    for (row, &bi) in a.rows_iter().zip(b) {
        let s = norm_inf(row);
        if s <= T::tol(1e-14) {
            if bi < -feas_tol {
                return Ok(LpOutcome::infeasible());
            }
            continue;
        }
        rows.push(row.iter().map(|&x| x / s).collect::<Vec<_>>());
        rhs.push(bi / s);
    }
    let scaled = Matrix::from_rows(&rows, n)?;

    if n == 0 {
        return Ok(LpOutcome { status: LpStatus::Optimal, value: T::zero(), witness: Some(vec![]) });
    }

    let mut last_violation = T::zero();
    for bland in [false, true] {
        let outcome = match DualTableau::solve(&scaled, &rhs, c, bland)? {
            DualResult::Optimal(x) => {
                let value = dot(c, &x);
                LpOutcome { status: LpStatus::Optimal, value, witness: Some(x) }
            }
            DualResult::Unbounded => LpOutcome::infeasible(),
            DualResult::Infeasible => {
                // Primal is infeasible or unbounded; settle it with a zero objective.
                let zero = vec![T::zero(); n];
                match DualTableau::solve(&scaled, &rhs, &zero, bland)? {
                    DualResult::Optimal(x) => {
                        LpOutcome { status: LpStatus::Unbounded, value: T::infinity(), witness: Some(x) }
                    }
                    DualResult::Unbounded => LpOutcome::infeasible(),
                    DualResult::Infeasible => {
                        return Err(Error::Solver("zero-objective dual reported infeasible".into()))
                    }
                }
            }
        };
        match &outcome.witness {
            Some(x) => {
                last_violation = max_violation(&scaled, &rhs, x);
                if last_violation <= feas_tol {
                    return Ok(outcome);
                }
            }
            None => return Ok(outcome),
        }
    }
    Err(Error::Solver(format!("witness violates constraints by {last_violation}")))
}

fn max_violation<T: Scalar>(a: &Matrix<T>, b: &[T], x: &[T]) -> T {
    a.rows_iter().zip(b).fold(T::zero(), |acc, (r, &bi)| acc.max(dot(r, x) - bi))
}

enum DualResult<T> {
    Optimal(Vec<T>),
    /// Dual unbounded: the primal is infeasible.
    Unbounded,
    /// Dual infeasible: the primal is infeasible or unbounded.
    Infeasible,
}

enum Phase {
    Optimal,
    Unbounded,
}

/// Dense tableau for `min b·y, Aᵀy = c, y >= 0` with one artificial per row.
struct DualTableau<T> {
    /// Rows of the tableau (= primal variables).
    n: usize,
    /// Structural columns (= primal constraints).
    m: usize,
    width: usize,
    t: Vec<T>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    /// Row sign flips applied so that the initial right-hand side is nonnegative.
    signs: Vec<T>,
    bland: bool,
}

impl<T: Scalar> DualTableau<T> {
    fn solve(a: &Matrix<T>, b: &[T], c: &[T], bland: bool) -> Result<DualResult<T>> {
        let n = a.ncols();
        let m = a.nrows();
        let width = m + n;
        let mut t = vec![T::zero(); n * width];
        let mut rhs = vec![T::zero(); n];
        let mut signs = vec![T::one(); n];
        for i in 0..n {
            let s = if c[i] < T::zero() { -T::one() } else { T::one() };
            signs[i] = s;
            rhs[i] = s * c[i];
            for j in 0..m {
                t[i * width + j] = s * a[(j, i)];
            }
            t[i * width + m + i] = T::one();
        }
        let mut tab = DualTableau { n, m, width, t, rhs, basis: (m..m + n).collect(), signs, bland };

        let c_scale = norm_inf(c).max(T::one());
        let mut phase1 = vec![T::zero(); width];
        for v in &mut phase1[m..] {
            *v = T::one();
        }
        tab.run(&phase1, width)?;
        let residual: T = (0..n).filter(|&r| tab.basis[r] >= m).map(|r| tab.rhs[r]).sum();
        if residual > T::tol(1e-9) * c_scale {
            return Ok(DualResult::Infeasible);
        }
        tab.drive_out_artificials();

        let mut cost = vec![T::zero(); width];
        cost[..m].copy_from_slice(b);
        match tab.run(&cost, m)? {
            Phase::Unbounded => return Ok(DualResult::Unbounded),
            Phase::Optimal => {}
        }
        Ok(DualResult::Optimal(tab.primal_point(a, b, &cost)))
    }

    #[inline]
    fn at(&self, r: usize, j: usize) -> T {
        self.t[r * self.width + j]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.at(r, e);
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        self.rhs[r] /= p;
        let (pivot_row, rhs_r) = (self.t[r * w..(r + 1) * w].to_vec(), self.rhs[r]);
        for i in 0..self.n {
            if i == r {
                continue;
            }
            let f = self.t[i * w + e];
            if f == T::zero() {
                continue;
            }
            for (dst, &src) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                *dst -= f * src;
            }
            self.rhs[i] -= f * rhs_r;
            if self.rhs[i] < T::zero() && self.rhs[i] > -T::tol(1e-11) {
                self.rhs[i] = T::zero();
            }
        }
        self.t[r * w + e] = T::one();
        self.basis[r] = e;
    }

    /// Minimizes `cost` letting only columns `< allowed` enter.
    fn run(&mut self, cost: &[T], allowed: usize) -> Result<Phase> {
        let piv_tol = T::tol(1e-9);
        let opt_tol = T::tol(1e-10) * norm_inf(cost).max(T::one());
        let max_iter = 50 * (self.width + self.n) + 1000;
        let mut bland = self.bland;
        let mut degenerate_streak = 0usize;
        let mut is_basic = vec![false; self.width];
        for &bi in &self.basis {
            is_basic[bi] = true;
        }
        for _ in 0..max_iter {
            let duals: Vec<T> = self.basis.iter().map(|&bi| cost[bi]).collect();
            let mut entering = None;
            let mut best = -opt_tol;
            for j in 0..allowed {
                if is_basic[j] {
                    continue;
                }
                let mut rc = cost[j];
                for (r, &y) in duals.iter().enumerate() {
                    if y != T::zero() {
                        rc -= y * self.at(r, j);
                    }
                }
                if bland {
                    if rc < -opt_tol {
                        entering = Some(j);
                        break;
                    }
                } else if rc < best {
                    best = rc;
                    entering = Some(j);
                }
            }
            let Some(e) = entering else {
                return Ok(Phase::Optimal);
            };

            let mut leave: Option<(usize, T)> = None;
            for r in 0..self.n {
                let coef = self.at(r, e);
                if coef <= piv_tol {
                    continue;
                }
                let ratio = self.rhs[r].max(T::zero()) / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= T::tol(1e-12) * lratio.max(T::one());
                        let better = if tie {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                coef > self.at(lr, e)
                            }
                        } else {
                            ratio < lratio
                        };
                        if better {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return Ok(Phase::Unbounded);
            };
            if ratio <= T::tol(1e-14) {
                degenerate_streak += 1;
                if degenerate_streak > self.width + self.n {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
            }
            is_basic[self.basis[r]] = false;
            is_basic[e] = true;
            self.pivot(r, e);
        }
        Err(Error::Solver("simplex iteration limit reached".into()))
    }

    /// Replaces basic artificials (all at level zero after phase 1) by
    /// structural columns where possible. Rows where this fails are
    /// redundant and keep their artificial.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.n {
            if self.basis[r] < self.m {
                continue;
            }
            let mut best: Option<(usize, T)> = None;
            for j in 0..self.m {
                let v = self.at(r, j).abs();
                if v > T::tol(1e-9) && best.is_none_or(|(_, bv)| v > bv) && !self.basis.contains(&j) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                self.pivot(r, j);
            }
        }
    }

    /// Simplex multipliers of the final basis, mapped back to primal
    /// variables, then refined by solving the active constraints directly.
    fn primal_point(&self, a: &Matrix<T>, b: &[T], cost: &[T]) -> Vec<T> {
        let mut x = vec![T::zero(); self.n];
        for (i, xi) in x.iter_mut().enumerate() {
            let mut pi = T::zero();
            for r in 0..self.n {
                let cb = cost[self.basis[r]];
                if cb != T::zero() {
                    pi += cb * self.at(r, self.m + i);
                }
            }
            *xi = self.signs[i] * pi;
        }
        let active: Vec<usize> = self.basis.iter().copied().filter(|&j| j < self.m).collect();
        if active.len() == self.n {
            let sub = a.select_rows(active.iter().copied());
            let rhs: Vec<T> = active.iter().map(|&j| b[j]).collect();
            if let Some(refined) = solve_square(&sub, &rhs) {
                if refined.iter().all(|v| v.is_finite()) && max_violation(a, b, &refined) <= max_violation(a, b, &x) {
                    return refined;
                }
            }
        }
        x
    }
}
