//! Pairwise collision-avoidance barriers and the ensemble constraint `A u >= b`.
//!
//! For robots `i < j` with look-ahead points `p_i`, `p_j` the barrier is
//! `h_ij = |p_i - p_j|^2 - delta^2`. Each pair and each hull `Psi_k` of the
//! disturbance union contributes one row
//!
//! ```text
//! [.. a_i .. a_j ..] u >= -alpha(h_ij) - m_k
//! a_i = grad_{p_i} h g_i,   a_j = grad_{p_j} h g_j
//! ```
//!
//! The margin `m_k` is `min a_i Psi_k + min a_j Psi_k` when each robot's wheel
//! offset is drawn on its own (the default), or `min (a_i + a_j) Psi_k` when
//! the pair shares one offset. See [`MarginModel`].

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2, Vector2};

use crate::disturbance::{support_min, DisturbanceHull, HullUnion};
use crate::dynamics::{output_jacobian, output_point, RobotGeometry, RobotState};
use crate::error::ensure_positive;
use crate::{Error, Result};

/// Extended class-K function `alpha(h) = sum_k c_k h^(2k+1)`.
///
/// With nonnegative coefficients (at least one positive) this is odd, strictly
/// increasing and zero at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassK {
    odd_coeffs: Vec<f64>,
}

impl ClassK {
    /// `gamma h^3`.
    pub fn cubic(gamma: f64) -> Self {
        Self {
            odd_coeffs: vec![0.0, gamma],
        }
    }

    /// `odd_coeffs[k]` multiplies `h^(2k+1)`.
    pub fn odd_polynomial(odd_coeffs: Vec<f64>) -> Result<Self> {
        let valid = !odd_coeffs.is_empty()
            && odd_coeffs.iter().all(|c| c.is_finite() && *c >= 0.0)
            && odd_coeffs.iter().any(|c| *c > 0.0);
        if !valid {
            return Err(Error::InvalidParameter {
                name: "class_k",
                reason: "coefficients must be finite, nonnegative and not all zero".into(),
            });
        }
        Ok(Self { odd_coeffs })
    }

    pub fn eval(&self, h: f64) -> f64 {
        let h2 = h * h;
        // Horner in h^2, then one factor of h
        self.odd_coeffs.iter().rev().fold(0.0, |acc, c| acc * h2 + c) * h
    }
}

/// `gamma h^3`.
pub fn class_k_cubic(h: f64, gamma: f64) -> f64 {
    gamma * h * h * h
}

/// How the disturbance of the two robots in a pair is combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginModel {
    /// Each robot's offset ranges over the hull independently; the pair's
    /// disturbance set is the product hull, whose support minimum is
    /// `min a_i Psi + min a_j Psi`.
    #[default]
    Independent,
    /// Both robots see the same offset: `min (a_i + a_j) Psi`. Less
    /// conservative, and only sound when offsets are common to the pair.
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierParams {
    /// Safety diameter (m).
    pub delta: f64,
    /// Gain of the cubic class-K term.
    pub gamma: f64,
    /// Overrides the default `gamma h^3` when set.
    pub class_k: Option<ClassK>,
    /// Drop pairs whose look-ahead points are farther apart than this. Off by default.
    pub neighbor_radius: Option<f64>,
    pub margin_model: MarginModel,
}

impl BarrierParams {
    /// GRITSbot values: `delta = 0.12 m`, `gamma = 150`.
    pub const GRITSBOT: Self = Self {
        delta: 0.12,
        gamma: 150.0,
        class_k: None,
        neighbor_radius: None,
        margin_model: MarginModel::Independent,
    };

    pub fn new(delta: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            delta,
            gamma,
            class_k: None,
            neighbor_radius: None,
            margin_model: MarginModel::Independent,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive(self.delta, "delta")?;
        ensure_positive(self.gamma, "gamma")?;
        if let Some(r) = self.neighbor_radius {
            ensure_positive(r, "neighbor_radius")?;
        }
        Ok(())
    }

    pub fn alpha(&self, h: f64) -> f64 {
        match &self.class_k {
            Some(k) => k.eval(h),
            None => class_k_cubic(h, self.gamma),
        }
    }
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self::GRITSBOT
    }
}

pub fn pairwise_h(p_i: &Vector2<f64>, p_j: &Vector2<f64>, delta: f64) -> f64 {
    (p_i - p_j).norm_squared() - delta * delta
}

/// Exact gradients `(2 (p_i - p_j)^T, -2 (p_i - p_j)^T)`.
pub fn pairwise_h_grad(p_i: &Vector2<f64>, p_j: &Vector2<f64>) -> (RowVector2<f64>, RowVector2<f64>) {
    let gi = ((p_i - p_j) * 2.0).transpose();
    (gi, -gi)
}

/// Direction `z = grad_i g_i + grad_j g_j` whose support minimum is the
/// disturbance margin of a pair.
pub fn margin_direction(
    grad_i: &RowVector2<f64>,
    grad_j: &RowVector2<f64>,
    g_i: &Matrix2<f64>,
    g_j: &Matrix2<f64>,
) -> RowVector2<f64> {
    grad_i * g_i + grad_j * g_j
}

/// `min (grad_i g_i + grad_j g_j) Psi`.
pub fn robust_margin(
    grad_i: &RowVector2<f64>,
    grad_j: &RowVector2<f64>,
    g_i: &Matrix2<f64>,
    g_j: &Matrix2<f64>,
    hull: &DisturbanceHull,
) -> f64 {
    support_min(&margin_direction(grad_i, grad_j, g_i, g_j), hull)
}

/// `min a_i Psi + min a_j Psi` for blocks `a_i = grad_i g_i`, `a_j = grad_j g_j`.
pub fn robust_margin_independent(
    grad_i: &RowVector2<f64>,
    grad_j: &RowVector2<f64>,
    g_i: &Matrix2<f64>,
    g_j: &Matrix2<f64>,
    hull: &DisturbanceHull,
) -> f64 {
    support_min(&(grad_i * g_i), hull) + support_min(&(grad_j * g_j), hull)
}

fn margin_of(model: MarginModel, a_i: &RowVector2<f64>, a_j: &RowVector2<f64>, hull: &DisturbanceHull) -> f64 {
    match model {
        MarginModel::Independent => support_min(a_i, hull) + support_min(a_j, hull),
        MarginModel::Shared => support_min(&(a_i + a_j), hull),
    }
}

/// Bookkeeping for one constraint row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowInfo {
    pub i: usize,
    pub j: usize,
    pub hull: usize,
    pub h: f64,
    /// Robot `i`'s block `a_i`.
    pub a_i: RowVector2<f64>,
    /// Robot `j`'s block `a_j`.
    pub a_j: RowVector2<f64>,
    /// Support minimum subtracted from the right-hand side.
    pub margin: f64,
}

/// Stacked ensemble constraint `A u >= b`.
///
/// Rows are ordered by `i` ascending, then `j` ascending, then hull in
/// declaration order. Columns `2k, 2k+1` hold robot `k`'s wheel commands.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rows: Vec<RowInfo>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `A u - b`.
    pub fn slack(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.a * u - &self.b
    }
}

/// Look-ahead points and output Jacobians of every robot.
pub(crate) fn outputs(states: &[RobotState], geom: &RobotGeometry) -> Vec<(Vector2<f64>, Matrix2<f64>)> {
    states
        .iter()
        .map(|s| (output_point(s, geom), output_jacobian(s, geom)))
        .collect()
}

fn check_states(states: &[RobotState]) -> Result<()> {
    if states.is_empty() {
        return Err(Error::InvalidParameter {
            name: "states",
            reason: "at least one robot is required".into(),
        });
    }
    if states.iter().all(RobotState::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite("robot state"))
    }
}

fn pair_selected(params: &BarrierParams, p_i: &Vector2<f64>, p_j: &Vector2<f64>) -> bool {
    params
        .neighbor_radius
        .is_none_or(|r| (p_i - p_j).norm() <= r)
}

/// Builds `A(x) u >= b(x)` over every pair and every hull of `disturbance`.
pub fn assemble_constraints(
    states: &[RobotState],
    geom: &RobotGeometry,
    params: &BarrierParams,
    disturbance: &HullUnion,
) -> Result<ConstraintSet> {
    check_states(states)?;
    let n = states.len();
    let out = outputs(states, geom);

    let mut rows = Vec::with_capacity(disturbance.len() * n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let (p_i, g_i) = &out[i];
            let (p_j, g_j) = &out[j];
            if !pair_selected(params, p_i, p_j) {
                continue;
            }
            let h = pairwise_h(p_i, p_j, params.delta);
            let (grad_i, grad_j) = pairwise_h_grad(p_i, p_j);
            let a_i = grad_i * g_i;
            let a_j = grad_j * g_j;
            for (k, hull) in disturbance.hulls().iter().enumerate() {
                rows.push(RowInfo {
                    i,
                    j,
                    hull: k,
                    h,
                    a_i,
                    a_j,
                    margin: margin_of(params.margin_model, &a_i, &a_j, hull),
                });
            }
        }
    }

    let mut a = DMatrix::zeros(rows.len(), 2 * n);
    let mut b = DVector::zeros(rows.len());
    for (r, info) in rows.iter().enumerate() {
        a[(r, 2 * info.i)] = info.a_i[0];
        a[(r, 2 * info.i + 1)] = info.a_i[1];
        a[(r, 2 * info.j)] = info.a_j[0];
        a[(r, 2 * info.j + 1)] = info.a_j[1];
        b[r] = -params.alpha(info.h) - info.margin;
    }
    Ok(ConstraintSet { a, b, rows })
}

/// The disturbance-margin pass alone: one margin per pair against `hull`,
/// in row order.
pub fn robust_margins(
    states: &[RobotState],
    geom: &RobotGeometry,
    model: MarginModel,
    hull: &DisturbanceHull,
) -> Result<Vec<f64>> {
    check_states(states)?;
    let out = outputs(states, geom);
    let n = out.len();
    let mut margins = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let (grad_i, grad_j) = pairwise_h_grad(&out[i].0, &out[j].0);
            margins.push(margin_of(model, &(grad_i * out[i].1), &(grad_j * out[j].1), hull));
        }
    }
    Ok(margins)
}

/// Minimum of `h_ij` over all pairs, `+inf` for a single robot.
pub fn min_pairwise_h(states: &[RobotState], geom: &RobotGeometry, delta: f64) -> f64 {
    let pts: Vec<_> = states.iter().map(|s| output_point(s, geom)).collect();
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            best = best.min(pairwise_h(&pts[i], &pts[j], delta));
        }
    }
    best
}
