//! Dense, strongly convex QP solver for
//!
//! ```text
//! minimize    |W (u_nom - u)|^2
//! subject to  A u >= b
//!             |u_k| <= u_max   for the first `boxed` variables
//! ```
//!
//! The solver is the Goldfarb-Idnani dual active-set method. It starts at the
//! unconstrained minimizer `u_nom` and adds violated constraints one at a time
//! while keeping the iterate optimal for the current active set, so the
//! returned point is exactly feasible up to rounding. Infeasibility shows up as
//! an unbounded dual step. The factorization is carried as a matrix `J` with
//! `J J^T = (W^T W)^-1`, starting from `J = W^-1`, plus an upper triangular `R`
//! with `J^T N_active = [R; 0]`.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::ensure_finite;
use crate::{Error, Result};

const CONDITION_WARN: f64 = 1e8;

/// Objective weight `W` with its cached inverse and Hessian `W^T W`.
#[derive(Debug, Clone)]
pub struct QpWeight {
    w: DMatrix<f64>,
    w_inv: DMatrix<f64>,
    hessian: DMatrix<f64>,
    condition: f64,
}

impl QpWeight {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::DimensionMismatch {
                context: "weight matrix columns",
                expected: w.nrows(),
                actual: w.ncols(),
            });
        }
        ensure_finite(w.as_slice(), "weight matrix")?;
        let sv = w.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let w_inv = match w.clone().try_inverse() {
            Some(inv) if condition.is_finite() => inv,
            _ => {
                return Err(Error::InvalidParameter {
                    name: "weight",
                    reason: "weight matrix must be invertible".into(),
                })
            }
        };
        if condition > CONDITION_WARN {
            log::warn!("QP weight is ill-conditioned (condition number {condition:e})");
        }
        let hessian = w.transpose() * &w;
        Ok(Self {
            w,
            w_inv,
            hessian,
            condition,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            w: DMatrix::identity(n, n),
            w_inv: DMatrix::identity(n, n),
            hessian: DMatrix::identity(n, n),
            condition: 1.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    weight: Arc<QpWeight>,
    u_nom: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    u_max: f64,
    boxed: usize,
}

impl QpProblem {
    /// All variables are boxed by `u_max`.
    pub fn new(
        weight: Arc<QpWeight>,
        u_nom: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        u_max: f64,
    ) -> Result<Self> {
        let n = weight.dim();
        Self::with_boxed(weight, u_nom, a, b, u_max, n)
    }

    /// Only the first `boxed` variables carry the `u_max` bound; the rest are free.
    pub fn with_boxed(
        weight: Arc<QpWeight>,
        u_nom: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        u_max: f64,
        boxed: usize,
    ) -> Result<Self> {
        let n = weight.dim();
        let mismatch = |context, expected, actual| Error::DimensionMismatch {
            context,
            expected,
            actual,
        };
        if u_nom.len() != n {
            return Err(mismatch("nominal input length", n, u_nom.len()));
        }
        if a.ncols() != n {
            return Err(mismatch("constraint matrix columns", n, a.ncols()));
        }
        if a.nrows() != b.len() {
            return Err(mismatch("constraint rhs length", a.nrows(), b.len()));
        }
        if boxed > n {
            return Err(mismatch("boxed variable count", n, boxed));
        }
        ensure_finite(u_nom.as_slice(), "nominal input")?;
        ensure_finite(a.as_slice(), "constraint matrix")?;
        ensure_finite(b.as_slice(), "constraint rhs")?;
        if !(u_max.is_finite() && u_max > 0.0) {
            return Err(Error::InvalidParameter {
                name: "u_max",
                reason: format!("must be finite and > 0, got {u_max}"),
            });
        }
        Ok(Self {
            weight,
            u_nom,
            a,
            b,
            u_max,
            boxed,
        })
    }

    pub fn dim(&self) -> usize {
        self.u_nom.len()
    }

    pub fn u_nom(&self) -> &DVector<f64> {
        &self.u_nom
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn boxed(&self) -> usize {
        self.boxed
    }

    pub fn weight(&self) -> &QpWeight {
        &self.weight
    }

    /// Linear rows plus two bound rows per boxed variable.
    pub fn constraint_count(&self) -> usize {
        self.a.nrows() + 2 * self.boxed
    }

    /// `|W (u_nom - u)|^2`.
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        (self.weight.matrix() * (&self.u_nom - u)).norm_squared()
    }

    /// Gradient of the objective, `2 W^T W (u - u_nom)`.
    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        self.weight.hessian() * (u - &self.u_nom) * 2.0
    }

    /// Writes the normal of constraint `idx` into `out`.
    fn normal_into(&self, idx: usize, out: &mut DVector<f64>) {
        let m = self.a.nrows();
        if idx < m {
            for (o, v) in out.iter_mut().zip(self.a.row(idx).iter()) {
                *o = *v;
            }
        } else {
            out.fill(0.0);
            let k = (idx - m) / 2;
            out[k] = if (idx - m).is_multiple_of(2) { 1.0 } else { -1.0 };
        }
    }

    fn rhs(&self, idx: usize) -> f64 {
        if idx < self.a.nrows() {
            self.b[idx]
        } else {
            -self.u_max
        }
    }

    /// `n_i . u - b_i` for every constraint, linear rows first, then
    /// `u_k + u_max`, `u_max - u_k` per boxed variable.
    pub fn slacks(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.a.nrows();
        let mut s = DVector::zeros(self.constraint_count());
        if m > 0 {
            let lin = &self.a * u - &self.b;
            s.rows_mut(0, m).copy_from(&lin);
        }
        for k in 0..self.boxed {
            s[m + 2 * k] = u[k] + self.u_max;
            s[m + 2 * k + 1] = self.u_max - u[k];
        }
        s
    }

    fn normal_norms(&self) -> Vec<f64> {
        let mut norms: Vec<f64> = self.a.row_iter().map(|r| r.norm()).collect();
        norms.extend(std::iter::repeat_n(1.0, 2 * self.boxed));
        norms
    }
}

/// Acceptance thresholds for a finished solve. Both are relative: a row's
/// violation is scaled by `1 + |b| + |n| |u|_inf`, and the stationarity
/// residual by `1 +` the largest gradient or multiplier term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    pub stationarity: f64,
    /// Defaults to `10 (n + constraint rows)` when `None`.
    pub max_iterations: Option<usize>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            stationarity: 1e-8,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u_star: DVector<f64>,
    pub status: QpStatus,
    /// Stationarity residual (infinity norm) with the solver's own multipliers.
    pub kkt_residual: f64,
    /// Largest constraint violation at `u_star`.
    pub violation: f64,
    /// Constraint additions plus removals.
    pub iterations: usize,
    /// Seconds spent in the solve.
    pub wall_clock: f64,
    /// Indices of the active constraints, in the order of [`QpProblem::slacks`].
    pub active_set: Vec<usize>,
    /// Multipliers of the active constraints for the objective `|W (u_nom - u)|^2`.
    pub multipliers: Vec<f64>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Reusable solver. With warm starting enabled, the previous active set is
/// tried first on the next solve; the optimum itself does not depend on it.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    warm_start: bool,
    previous_active: Vec<usize>,
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn warm() -> Self {
        Self {
            warm_start: true,
            previous_active: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        self.previous_active.clear();
    }

    pub fn solve(&mut self, problem: &QpProblem, tol: &Tolerances) -> QpSolution {
        let hint = if self.warm_start {
            std::mem::take(&mut self.previous_active)
        } else {
            Vec::new()
        };
        let sol = solve_with_hint(problem, tol, &hint);
        if self.warm_start && sol.is_optimal() {
            self.previous_active = sol.active_set.clone();
        }
        sol
    }
}

/// Cold-start solve.
pub fn solve(problem: &QpProblem, tol: &Tolerances) -> QpSolution {
    solve_with_hint(problem, tol, &[])
}

fn givens(a: f64, b: f64) -> Option<(f64, f64)> {
    if b == 0.0 {
        return None;
    }
    let h = a.hypot(b);
    Some((a / h, b / h))
}

/// Replaces columns `k0`, `k1` of `m` by `c m_k0 + s m_k1`, `-s m_k0 + c m_k1`.
fn rotate_columns(m: &mut DMatrix<f64>, k0: usize, k1: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let x = m[(i, k0)];
        let y = m[(i, k1)];
        m[(i, k0)] = c * x + s * y;
        m[(i, k1)] = -s * x + c * y;
    }
}

struct ActiveSet {
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    indices: Vec<usize>,
}

impl ActiveSet {
    fn q(&self) -> usize {
        self.indices.len()
    }

    /// Appends a constraint whose transformed normal is `d = J^T n`.
    fn push(&mut self, idx: usize, d: &mut DVector<f64>) {
        let n = d.len();
        let q = self.q();
        for k in ((q + 1)..n).rev() {
            if let Some((c, s)) = givens(d[k - 1], d[k]) {
                d[k - 1] = c * d[k - 1] + s * d[k];
                d[k] = 0.0;
                rotate_columns(&mut self.j, k - 1, k, c, s);
            }
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.indices.push(idx);
    }

    /// Removes the constraint at position `l` and restores the triangular factor.
    fn remove(&mut self, l: usize) {
        let q = self.q();
        for col in l..(q - 1) {
            for i in 0..=(col + 1) {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for k in l..(q - 1) {
            if let Some((c, s)) = givens(self.r[(k, k)], self.r[(k + 1, k)]) {
                for col in k..(q - 1) {
                    let x = self.r[(k, col)];
                    let y = self.r[(k + 1, col)];
                    self.r[(k, col)] = c * x + s * y;
                    self.r[(k + 1, col)] = -s * x + c * y;
                }
                self.r[(k + 1, k)] = 0.0;
                rotate_columns(&mut self.j, k, k + 1, c, s);
            }
        }
        self.indices.remove(l);
    }

    /// Solves `R[..q, ..q] x = d[..q]`.
    fn back_solve(&self, d: &DVector<f64>, out: &mut Vec<f64>) {
        let q = self.q();
        out.clear();
        out.resize(q, 0.0);
        for i in (0..q).rev() {
            let mut acc = d[i];
            for k in (i + 1)..q {
                acc -= self.r[(i, k)] * out[k];
            }
            out[i] = acc / self.r[(i, i)];
        }
    }
}

fn solve_with_hint(p: &QpProblem, tol: &Tolerances, hint: &[usize]) -> QpSolution {
    let start = Instant::now();
    let n = p.dim();
    let total = p.constraint_count();
    let max_iter = tol.max_iterations.unwrap_or(10 * (n + total));
    let norms = p.normal_norms();

    let mut x = p.u_nom.clone();
    let mut set = ActiveSet {
        j: p.weight.w_inv.clone(),
        r: DMatrix::zeros(n, n),
        indices: Vec::new(),
    };
    // multipliers for the objective 1/2 (u - u_nom)^T H (u - u_nom)
    let mut lam: Vec<f64> = Vec::new();
    let mut is_active = vec![false; total];
    let mut np = DVector::zeros(n);
    let mut d = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    let mut rv: Vec<f64> = Vec::new();
    let mut iterations = 0;

    let violation_tol = |idx: usize, x: &DVector<f64>| {
        1e-12 * (1.0 + p.rhs(idx).abs() + norms[idx] * x.amax())
    };

    let status = 'outer: loop {
        let s = p.slacks(&x);
        let pick = |cands: &mut dyn Iterator<Item = usize>| {
            let mut best: Option<(usize, f64)> = None;
            for idx in cands {
                if is_active[idx] || s[idx] >= -violation_tol(idx, &x) {
                    continue;
                }
                let score = s[idx] / norms[idx].max(f64::MIN_POSITIVE);
                if best.is_none_or(|(_, b)| score < b) {
                    best = Some((idx, score));
                }
            }
            best.map(|(i, _)| i)
        };
        let chosen = pick(&mut hint.iter().copied().filter(|&i| i < total))
            .or_else(|| pick(&mut (0..total)));
        let Some(pidx) = chosen else {
            break QpStatus::Optimal;
        };

        p.normal_into(pidx, &mut np);
        let b_p = p.rhs(pidx);
        let mut lam_plus = lam.clone();
        let mut u_new = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                break 'outer QpStatus::MaxIterations;
            }
            let q = set.q();
            set.j.tr_mul_to(&np, &mut d);
            z.fill(0.0);
            for k in q..n {
                z.axpy(d[k], &set.j.column(k), 1.0);
            }
            set.back_solve(&d, &mut rv);

            // largest dual step keeping the active multipliers nonnegative
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (k, &rk) in rv.iter().enumerate() {
                if rk > 0.0 {
                    let t = lam_plus[k] / rk;
                    if t < t1 {
                        t1 = t;
                        drop_at = Some(k);
                    }
                }
            }

            let tail = d.rows(q, n - q).norm_squared();
            let dependent = tail <= 1e-24 * d.norm_squared();
            let t2 = if dependent {
                f64::INFINITY
            } else {
                (-(np.dot(&x) - b_p) / tail).max(0.0)
            };

            let t = t1.min(t2);
            if t.is_infinite() {
                break 'outer QpStatus::Infeasible;
            }
            for (lp, rk) in lam_plus.iter_mut().zip(&rv) {
                *lp -= t * rk;
            }
            u_new += t;
            if !dependent {
                x.axpy(t, &z, 1.0);
            }

            if !dependent && t2 <= t1 {
                lam = lam_plus;
                lam.push(u_new);
                is_active[pidx] = true;
                set.push(pidx, &mut d);
                continue 'outer;
            }
            let l = drop_at.expect("finite partial step has a blocking constraint");
            is_active[set.indices[l]] = false;
            set.remove(l);
            lam_plus.remove(l);
        }
    };

    let multipliers: Vec<f64> = lam.iter().map(|l| 2.0 * l).collect();
    let slacks = p.slacks(&x);
    let violation = slacks.iter().fold(0.0f64, |acc, s| acc.max(-s));
    let mut residual = p.gradient(&x);
    let mut grad_scale = residual.amax();
    for (&idx, &l) in set.indices.iter().zip(&multipliers) {
        p.normal_into(idx, &mut np);
        grad_scale = grad_scale.max(l.abs() * np.amax());
        residual.axpy(-l, &np, 1.0);
    }
    let kkt_residual = residual.amax();
    let rel_violation = (0..total)
        .map(|idx| -slacks[idx] / (1.0 + p.rhs(idx).abs() + norms[idx] * x.amax()))
        .fold(0.0f64, f64::max);

    let status = match status {
        QpStatus::Optimal
            if rel_violation > tol.feasibility || kkt_residual > tol.stationarity * (1.0 + grad_scale) =>
        {
            log::debug!(
                "QP finished with violation {violation:e}, stationarity {kkt_residual:e} above tolerance"
            );
            QpStatus::MaxIterations
        }
        other => other,
    };

    QpSolution {
        u_star: x,
        status,
        kkt_residual,
        violation,
        iterations,
        wall_clock: start.elapsed().as_secs_f64(),
        active_set: set.indices,
        multipliers,
    }
}

/// Residuals of the first-order optimality system at `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

/// Optimality certificate independent of the solver: multipliers are
/// recovered by nonnegative least squares on the (nearly) active constraints.
pub fn kkt_check(p: &QpProblem, u: &DVector<f64>) -> KktResiduals {
    let slacks = p.slacks(u);
    let norms = p.normal_norms();
    let feasibility = slacks.iter().fold(0.0f64, |acc, s| acc.max(-s));

    let scale = u.amax();
    let active: Vec<usize> = (0..p.constraint_count())
        .filter(|&i| slacks[i] <= 1e-7 * (1.0 + p.rhs(i).abs() + norms[i] * scale))
        .collect();
    let grad = p.gradient(u);
    let mut normals = DMatrix::zeros(p.dim(), active.len());
    let mut buf = DVector::zeros(p.dim());
    for (c, &idx) in active.iter().enumerate() {
        p.normal_into(idx, &mut buf);
        normals.set_column(c, &buf);
    }
    let lam = nnls(&normals, &grad);
    let stationarity = (&grad - &normals * &lam).amax();
    let complementarity = active
        .iter()
        .zip(lam.iter())
        .fold(0.0f64, |acc, (&i, l)| acc.max((l * slacks[i]).abs()));

    KktResiduals {
        stationarity,
        feasibility,
        complementarity,
    }
}

/// Lawson-Hanson nonnegative least squares: `min |C x - g|` with `x >= 0`.
pub fn nnls(c: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let k = c.ncols();
    let mut x = DVector::zeros(k);
    if k == 0 {
        return x;
    }
    let mut passive = vec![false; k];
    let tol = 1e-14 * c.amax().max(1.0) * g.amax().max(1.0) * (k as f64);

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let cols: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
        let sub = c.select_columns(&cols);
        let sol = sub
            .clone()
            .svd(true, true)
            .solve(g, 1e-13)
            .unwrap_or_else(|_| DVector::zeros(cols.len()));
        let mut full = DVector::zeros(k);
        for (pos, &i) in cols.iter().enumerate() {
            full[i] = sol[pos];
        }
        full
    };

    for _ in 0..(3 * k + 10) {
        let w = c.transpose() * (g - c * &x);
        let candidate = (0..k)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(enter) = candidate else {
            break;
        };
        passive[enter] = true;
        loop {
            let y = solve_passive(&passive);
            if (0..k).filter(|&i| passive[i]).all(|i| y[i] > 0.0) {
                x = y;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in (0..k).filter(|&i| passive[i] && y[i] <= 0.0) {
                alpha = alpha.min(x[i] / (x[i] - y[i]));
            }
            x += (y - &x) * alpha;
            for i in 0..k {
                if passive[i] && x[i] <= 1e-15 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
    }
    x
}
