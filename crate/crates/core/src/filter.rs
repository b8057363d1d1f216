//! Per-step robust safety filter.
//!
//! Each step assembles the ensemble barrier constraint for the current poses
//! and solves
//!
//! ```text
//! u* = argmin |L_c G_c (u_nom - u)|^2   s.t.  A(x) u >= b(x),  |u|_inf <= u_max
//! ```
//!
//! where `G_c = I_N (x) G` and `L_c = I_N (x) diag(1, l_p)`. The `l_p` factor
//! makes turning cheaper than changing forward speed.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::barrier::{assemble_constraints, min_pairwise_h, BarrierParams, ConstraintSet};
use crate::disturbance::HullUnion;
use crate::dynamics::{wheel_matrix, RobotGeometry, RobotState, WheelCommand};
use crate::error::ensure_positive;
use crate::qp::{QpProblem, QpSolver, QpStatus, QpWeight, Tolerances};
use crate::{Error, Result};

/// Tolerance on the certificate slack below which it counts as violated.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-9;

/// What to do when the safety QP has no solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fallback {
    /// Surface [`Error::Infeasible`].
    Error,
    /// Command every wheel to zero.
    ZeroInput,
    /// Re-solve with a penalized nonnegative slack on each barrier row; the
    /// wheel box stays hard.
    Slack { weight: f64 },
}

impl Default for Fallback {
    fn default() -> Self {
        Fallback::Slack { weight: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub geometry: RobotGeometry,
    pub barrier: BarrierParams,
    /// Disturbance model the filter guards against.
    pub disturbance: HullUnion,
    /// Wheel speed limit (rad/s).
    pub u_max: f64,
    pub fallback: Fallback,
}

impl FilterConfig {
    /// GRITSbot constants with the symmetric box of half-width `psi`.
    pub fn gritsbot(psi: f64) -> Result<Self> {
        Ok(Self {
            geometry: RobotGeometry::GRITSBOT,
            barrier: BarrierParams::GRITSBOT,
            disturbance: HullUnion::symmetric_box(psi)?,
            u_max: 25.0,
            fallback: Fallback::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.barrier.validate()?;
        ensure_positive(self.u_max, "u_max")?;
        if let Fallback::Slack { weight } = self.fallback {
            ensure_positive(weight, "slack_weight")?;
        }
        Ok(())
    }
}

/// Which fallback, if any, produced the returned command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackUsed {
    ZeroInput,
    Slack,
}

/// Solver metadata of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Seconds spent in constraint assembly and the QP solve.
    pub wall_clock: f64,
    pub fallback: Option<FallbackUsed>,
}

#[derive(Debug, Clone)]
pub struct FilterResult {
    pub u_star: Vec<WheelCommand>,
    /// Per robot, `max |u_star - u_nom|` over its two wheels.
    pub altered: Vec<f64>,
    /// Minimum pairwise barrier value at the input poses.
    pub min_h: f64,
    pub solver: SolverReport,
    pub constraints: ConstraintSet,
}

/// `L_c G_c`: block diagonal with `N` copies of `diag(1, l_p) G`.
pub fn ensemble_weight(n: usize, geom: &RobotGeometry) -> DMatrix<f64> {
    let block = geom.look_ahead_matrix() * wheel_matrix(geom);
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        w.fixed_view_mut::<2, 2>(2 * k, 2 * k).copy_from(&block);
    }
    w
}

fn stack(u: &[WheelCommand]) -> DVector<f64> {
    DVector::from_iterator(2 * u.len(), u.iter().flat_map(|c| [c.right, c.left]))
}

fn unstack(u: &DVector<f64>, n: usize) -> Vec<WheelCommand> {
    (0..n).map(|k| WheelCommand::new(u[2 * k], u[2 * k + 1])).collect()
}

/// A reusable filter that caches the objective weight and warm-starts the
/// solver from the previous active set.
#[derive(Debug, Clone)]
pub struct SafetyFilter {
    config: FilterConfig,
    tolerances: Tolerances,
    weight: Option<Arc<QpWeight>>,
    solver: QpSolver,
}

impl SafetyFilter {
    pub fn new(config: FilterConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tolerances: Tolerances::default(),
            weight: None,
            solver: QpSolver::warm(),
        })
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    fn weight_for(&mut self, n: usize) -> Result<Arc<QpWeight>> {
        match &self.weight {
            Some(w) if w.dim() == 2 * n => Ok(w.clone()),
            _ => {
                let w = Arc::new(QpWeight::new(ensemble_weight(n, &self.config.geometry))?);
                self.weight = Some(w.clone());
                self.solver.reset();
                Ok(w)
            }
        }
    }

    pub fn step(&mut self, states: &[RobotState], u_nom: &[WheelCommand]) -> Result<FilterResult> {
        let n = states.len();
        if u_nom.len() != n {
            return Err(Error::DimensionMismatch {
                context: "nominal command count",
                expected: n,
                actual: u_nom.len(),
            });
        }
        if u_nom.iter().any(|c| !(c.right.is_finite() && c.left.is_finite())) {
            return Err(Error::NonFinite("nominal command"));
        }
        let weight = self.weight_for(n)?;
        let cfg = &self.config;

        let start = Instant::now();
        let constraints = assemble_constraints(states, &cfg.geometry, &cfg.barrier, &cfg.disturbance)?;
        let nominal = stack(u_nom);
        let problem = QpProblem::new(
            weight.clone(),
            nominal.clone(),
            constraints.a.clone(),
            constraints.b.clone(),
            cfg.u_max,
        )?;
        let sol = self.solver.solve(&problem, &self.tolerances);

        let (u, fallback) = match sol.status {
            QpStatus::Optimal => (sol.u_star.clone(), None),
            status => {
                log::warn!("safety QP not solved ({status:?}); applying {:?}", cfg.fallback);
                match cfg.fallback {
                    Fallback::Error if status == QpStatus::Infeasible => return Err(Error::Infeasible),
                    Fallback::Error => return Err(Error::MaxIterations(sol.iterations)),
                    Fallback::ZeroInput => (DVector::zeros(2 * n), Some(FallbackUsed::ZeroInput)),
                    Fallback::Slack { weight: penalty } => {
                        let relaxed = solve_with_slack(&weight, &nominal, &constraints, cfg.u_max, penalty, &self.tolerances)?;
                        (relaxed, Some(FallbackUsed::Slack))
                    }
                }
            }
        };
        let wall_clock = start.elapsed().as_secs_f64();

        let u_star = unstack(&u, n);
        let altered = u_star
            .iter()
            .zip(u_nom)
            .map(|(a, b)| (a.right - b.right).abs().max((a.left - b.left).abs()))
            .collect();
        Ok(FilterResult {
            u_star,
            altered,
            min_h: min_pairwise_h(states, &cfg.geometry, cfg.barrier.delta),
            solver: SolverReport {
                status: sol.status,
                kkt_residual: sol.kkt_residual,
                iterations: sol.iterations,
                wall_clock,
                fallback,
            },
            constraints,
        })
    }
}

fn solve_with_slack(
    weight: &QpWeight,
    nominal: &DVector<f64>,
    cs: &ConstraintSet,
    u_max: f64,
    penalty: f64,
    tol: &Tolerances,
) -> Result<DVector<f64>> {
    let n = nominal.len();
    let rows = cs.len();
    let root = penalty.sqrt();
    let mut w = DMatrix::zeros(n + rows, n + rows);
    w.view_mut((0, 0), (n, n)).copy_from(weight.matrix());
    let mut a = DMatrix::zeros(rows, n + rows);
    a.view_mut((0, 0), (rows, n)).copy_from(&cs.a);
    // slack s = sigma / sqrt(penalty), so sigma enters the objective unweighted
    for r in 0..rows {
        w[(n + r, n + r)] = 1.0;
        a[(r, n + r)] = 1.0 / root;
    }
    let mut u_nom = DVector::zeros(n + rows);
    u_nom.rows_mut(0, n).copy_from(nominal);
    let problem = QpProblem::with_boxed(Arc::new(QpWeight::new(w)?), u_nom, a, cs.b.clone(), u_max, n)?;
    let sol = crate::qp::solve(&problem, tol);
    match sol.status {
        QpStatus::Optimal => Ok(sol.u_star.rows(0, n).into_owned()),
        QpStatus::Infeasible => Err(Error::Infeasible),
        QpStatus::MaxIterations => Err(Error::MaxIterations(sol.iterations)),
    }
}

/// One-shot filter step with a fresh solver.
pub fn filter_step(states: &[RobotState], u_nom: &[WheelCommand], cfg: &FilterConfig) -> Result<FilterResult> {
    SafetyFilter::new(cfg.clone())?.step(states, u_nom)
}

/// Evaluates the robust barrier certificate at `u` for every pair and hull.
/// Returns whether the smallest slack is at least `-1e-9`, and that slack
/// (`+inf` when there are no pairs).
pub fn certificate_holds(states: &[RobotState], u: &[WheelCommand], cfg: &FilterConfig) -> Result<(bool, f64)> {
    if u.len() != states.len() {
        return Err(Error::DimensionMismatch {
            context: "command count",
            expected: states.len(),
            actual: u.len(),
        });
    }
    let cs = assemble_constraints(states, &cfg.geometry, &cfg.barrier, &cfg.disturbance)?;
    let worst = cs.slack(&stack(u)).iter().copied().fold(f64::INFINITY, f64::min);
    Ok((worst >= -CERTIFICATE_TOLERANCE, worst))
}
