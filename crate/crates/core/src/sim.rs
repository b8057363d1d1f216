//! Closed-loop circle-swap simulation.
//!
//! Robots start evenly spaced on a circle, facing its center, and drive to the
//! antipodal point under a proportional controller. Every step the nominal
//! commands pass through the safety filter, a disturbance is drawn from the
//! declared hull for each robot, and the poses are integrated.

use nalgebra::{RowVector2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::barrier::{pairwise_h, pairwise_h_grad, BarrierParams, ConstraintSet};
use crate::disturbance::{sample_hull, support_min, DisturbanceHull, HullUnion, SampleMode};
use crate::dynamics::{
    output_jacobian, output_point, step_dynamics_with, Integrator, RobotGeometry, RobotState, WheelCommand,
};
use crate::error::ensure_positive;
use crate::filter::{Fallback, FallbackUsed, FilterConfig, SafetyFilter};
use crate::{Error, Result};

/// How the plant's disturbance is realized each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlantDisturbance {
    Off,
    /// Flat-Dirichlet convex combination of a uniformly chosen hull's vertices.
    UniformConvex,
    /// For each robot, the pooled vertex that most decreases the barrier of
    /// its closest pair, i.e. the minimizer of `a_i . psi` where `a_i` is the
    /// robot's own block of that pair's constraint row.
    #[default]
    WorstCase,
    /// A fixed vertex of the pooled vertex list.
    Vertex(usize),
}

/// Whether the filter guards against the declared disturbance or ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterMode {
    #[default]
    Robust,
    /// The filter's hull is the origin; the plant disturbance is unchanged.
    NonRobust,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub robot_count: usize,
    pub geometry: RobotGeometry,
    pub barrier: BarrierParams,
    /// Declared disturbance: drives the plant, and the filter in robust mode.
    pub disturbance: HullUnion,
    pub u_max: f64,
    pub fallback: Fallback,
    pub filter_mode: FilterMode,
    /// Radius (m) of the circle the look-ahead points start on.
    pub circle_radius: f64,
    /// Half-width (rad) of a uniform perturbation of each initial heading,
    /// applied about the look-ahead point so starting positions stay on the
    /// circle. Zero gives the exactly symmetric formation.
    pub heading_jitter: f64,
    /// Seconds per iteration.
    pub duration: f64,
    pub dt: f64,
    pub integrator: Integrator,
    pub plant_disturbance: PlantDisturbance,
    /// Proportional gain (1/s) of the nominal controller.
    pub k_p: f64,
    /// Distance (m) within which a robot counts as arrived.
    pub goal_tolerance: f64,
    pub seed: u64,
    pub iterations: usize,
}

impl ScenarioConfig {
    /// The 22-robot circle swap with GRITSbot constants.
    pub fn circle22() -> Self {
        Self {
            robot_count: 22,
            geometry: RobotGeometry::GRITSBOT,
            barrier: BarrierParams::GRITSBOT,
            disturbance: HullUnion::symmetric_box(5.0).expect("valid psi"),
            u_max: 25.0,
            fallback: Fallback::default(),
            filter_mode: FilterMode::Robust,
            circle_radius: 0.6,
            heading_jitter: 0.05,
            duration: 30.0,
            dt: 0.005,
            integrator: Integrator::Euler,
            plant_disturbance: PlantDisturbance::WorstCase,
            k_p: 1.0,
            goal_tolerance: 0.05,
            seed: 0,
            iterations: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.robot_count == 0 {
            return Err(Error::InvalidParameter {
                name: "count",
                reason: "at least one robot is required".into(),
            });
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "iterations",
                reason: "at least one iteration is required".into(),
            });
        }
        self.geometry.validate()?;
        self.barrier.validate()?;
        ensure_positive(self.u_max, "u_max")?;
        ensure_positive(self.duration, "duration")?;
        ensure_positive(self.dt, "dt")?;
        ensure_positive(self.k_p, "k_p")?;
        ensure_positive(self.goal_tolerance, "goal_tolerance")?;
        ensure_positive(self.circle_radius, "radius")?;
        if !(self.heading_jitter.is_finite() && (0.0..=PI).contains(&self.heading_jitter)) {
            return Err(Error::InvalidParameter {
                name: "heading_jitter",
                reason: format!("must lie in [0, pi], got {}", self.heading_jitter),
            });
        }
        let min_radius = self.robot_count as f64 * self.barrier.delta / (2.0 * PI);
        if self.circle_radius <= min_radius {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!(
                    "{} robots of diameter {} need a radius above {min_radius:.4}",
                    self.robot_count, self.barrier.delta
                ),
            });
        }
        if let PlantDisturbance::Vertex(k) = self.plant_disturbance {
            let len = self.disturbance.pooled().len();
            if k >= len {
                return Err(Error::VertexOutOfRange { index: k, len });
            }
        }
        if let Fallback::Slack { weight } = self.fallback {
            ensure_positive(weight, "slack_weight")?;
        }
        Ok(())
    }

    /// Number of recorded control steps, `floor(duration / dt)`.
    pub fn step_count(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }

    pub fn filter_config(&self) -> FilterConfig {
        let disturbance = match self.filter_mode {
            FilterMode::Robust => self.disturbance.clone(),
            FilterMode::NonRobust => HullUnion::symmetric_box(0.0).expect("zero box"),
        };
        FilterConfig {
            geometry: self.geometry,
            barrier: self.barrier.clone(),
            disturbance,
            u_max: self.u_max,
            fallback: self.fallback,
        }
    }
}

/// Per-run time series and summary values.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub dt: f64,
    pub duration: f64,
    /// `min_ij h_ij` at the start of each step.
    pub min_h: Vec<f64>,
    /// Seconds of constraint assembly plus QP solve per step.
    pub wall_clock: Vec<f64>,
    /// Largest wheel-command change made by the filter per step.
    pub max_alter: Vec<f64>,
    pub violation_time: f64,
    pub goal_completion: f64,
    /// Steps where the filter fell back instead of solving the QP.
    pub fallback_steps: usize,
    /// Constraint set of the first step, if any step ran.
    pub initial_constraints: Option<ConstraintSet>,
}

impl RunMetrics {
    pub fn steps(&self) -> usize {
        self.min_h.len()
    }

    pub fn worst_min_h(&self) -> f64 {
        self.min_h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps()).map(move |k| k as f64 * self.dt)
    }
}

/// Wall-clock and safety aggregate over one or more runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub avg_wct_ms: f64,
    /// Population variance of the per-step wall-clock in ms^2.
    pub var_wct_ms2: f64,
    pub avg_freq_hz: f64,
    pub violation_time_s: f64,
    pub goal_completion: f64,
    pub worst_min_h: f64,
}

/// Pools every step of every run; goal completion is averaged over runs.
pub fn summarize(runs: &[RunMetrics]) -> RunSummary {
    let wct_ms: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.wall_clock.iter().map(|s| s * 1e3))
        .collect();
    let count = wct_ms.len() as f64;
    let (avg, var) = if wct_ms.is_empty() {
        (0.0, 0.0)
    } else {
        let avg = wct_ms.iter().sum::<f64>() / count;
        let var = wct_ms.iter().map(|w| (w - avg).powi(2)).sum::<f64>() / count;
        (avg, var)
    };
    RunSummary {
        avg_wct_ms: avg,
        var_wct_ms2: var,
        avg_freq_hz: if avg > 0.0 { 1e3 / avg } else { 0.0 },
        violation_time_s: runs.iter().map(|r| r.violation_time).sum(),
        goal_completion: if runs.is_empty() {
            0.0
        } else {
            runs.iter().map(|r| r.goal_completion).sum::<f64>() / runs.len() as f64
        },
        worst_min_h: runs.iter().map(RunMetrics::worst_min_h).fold(f64::INFINITY, f64::min),
    }
}

/// Places the look-ahead point of robot `i` at angle `2 pi i / N` on the
/// circle, heading toward the center.
pub fn circle_init(count: usize, radius: f64, geom: &RobotGeometry) -> Result<Vec<RobotState>> {
    ensure_positive(radius, "radius")?;
    let states: Vec<RobotState> = (0..count)
        .map(|i| {
            let angle = 2.0 * PI * i as f64 / count as f64;
            let (s, c) = angle.sin_cos();
            let heading = angle + PI;
            // p = x + l_p (cos heading, sin heading) lands on the circle
            RobotState::new(
                radius * c + geom.look_ahead * c,
                radius * s + geom.look_ahead * s,
                heading,
            )
        })
        .collect::<Result<_>>()?;
    let pts: Vec<_> = states.iter().map(|s| output_point(s, geom)).collect();
    for i in 0..count {
        for j in (i + 1)..count {
            let h = pairwise_h(&pts[i], &pts[j], geom.diameter);
            if h <= 0.0 {
                return Err(Error::Overlap { i, j, h });
            }
        }
    }
    Ok(states)
}

/// Turns a robot by `angle` while keeping its look-ahead point fixed.
fn rotate_about_output(state: &RobotState, angle: f64, geom: &RobotGeometry) -> Result<RobotState> {
    let p = output_point(state, geom);
    let theta = state.theta + angle;
    let (s, c) = theta.sin_cos();
    RobotState::new(p[0] - geom.look_ahead * c, p[1] - geom.look_ahead * s, theta)
}

/// Proportional output-velocity controller mapped to wheels through `g^-1`,
/// saturated by uniform scaling so that `max |u| <= u_max`.
pub fn nominal_controller(
    state: &RobotState,
    goal: &Vector2<f64>,
    k_p: f64,
    geom: &RobotGeometry,
    u_max: f64,
) -> WheelCommand {
    let desired = (goal - output_point(state, geom)) * k_p;
    let g_inv = output_jacobian(state, geom)
        .try_inverse()
        .expect("output Jacobian is invertible for l_p > 0");
    let u = WheelCommand::from_vector(&(g_inv * desired));
    let peak = u.max_abs();
    if peak > u_max {
        let s = u_max / peak;
        WheelCommand::new(u.right * s, u.left * s)
    } else {
        u
    }
}

/// For every robot, its own block `grad_{p_i} h g_i` of the pair with the
/// smallest barrier value. The offset minimizing this drives that barrier
/// down fastest.
fn tightest_directions(states: &[RobotState], geom: &RobotGeometry, delta: f64) -> Vec<RowVector2<f64>> {
    let out: Vec<_> = states
        .iter()
        .map(|s| (output_point(s, geom), output_jacobian(s, geom)))
        .collect();
    (0..out.len())
        .map(|i| {
            let closest = (0..out.len())
                .filter(|&j| j != i)
                .map(|j| (j, pairwise_h(&out[i].0, &out[j].0, delta)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match closest {
                Some((j, _)) => {
                    let (gi, _) = pairwise_h_grad(&out[i].0, &out[j].0);
                    gi * out[i].1
                }
                None => RowVector2::zeros(),
            }
        })
        .collect()
}

fn realize_disturbances(
    cfg: &ScenarioConfig,
    pooled: &DisturbanceHull,
    states: &[RobotState],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vector2<f64>>> {
    let n = states.len();
    let draws = match cfg.plant_disturbance {
        PlantDisturbance::Off => vec![Vector2::zeros(); n],
        PlantDisturbance::UniformConvex => {
            let hulls = cfg.disturbance.hulls();
            (0..n)
                .map(|_| {
                    let k = rand::Rng::random_range(rng, 0..hulls.len());
                    sample_hull(&hulls[k], SampleMode::UniformConvex, rng)
                })
                .collect::<Result<_>>()?
        }
        PlantDisturbance::WorstCase => tightest_directions(states, &cfg.geometry, cfg.barrier.delta)
            .into_iter()
            .map(|z| sample_hull(pooled, SampleMode::WorstCase(z), rng))
            .collect::<Result<_>>()?,
        PlantDisturbance::Vertex(k) => (0..n)
            .map(|_| sample_hull(pooled, SampleMode::Vertex(k), rng))
            .collect::<Result<_>>()?,
    };
    if cfg!(debug_assertions) {
        for d in &draws {
            for z in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let z = RowVector2::new(z.0, z.1);
                debug_assert!(z.dot(&d.transpose()) >= support_min(&z, pooled) - 1e-9);
            }
        }
    }
    Ok(draws)
}

/// Runs one iteration of the circle swap.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunMetrics> {
    cfg.validate()?;
    let geom = cfg.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut states = circle_init(cfg.robot_count, cfg.circle_radius, &geom)?;
    if cfg.heading_jitter > 0.0 {
        states = states
            .iter()
            .map(|s| {
                let turn = rand::Rng::random_range(&mut rng, -cfg.heading_jitter..=cfg.heading_jitter);
                rotate_about_output(s, turn, &geom)
            })
            .collect::<Result<_>>()?;
    }
    let goals: Vec<Vector2<f64>> = states.iter().map(|s| -output_point(s, &geom)).collect();
    let pooled = cfg.disturbance.pooled();
    let mut filter = SafetyFilter::new(cfg.filter_config())?;

    let steps = cfg.step_count();
    let mut metrics = RunMetrics {
        dt: cfg.dt,
        duration: cfg.duration,
        min_h: Vec::with_capacity(steps),
        wall_clock: Vec::with_capacity(steps),
        max_alter: Vec::with_capacity(steps),
        violation_time: 0.0,
        goal_completion: 0.0,
        fallback_steps: 0,
        initial_constraints: None,
    };

    for step in 0..steps {
        let u_nom: Vec<WheelCommand> = states
            .iter()
            .zip(&goals)
            .map(|(s, g)| nominal_controller(s, g, cfg.k_p, &geom, cfg.u_max))
            .collect();
        let res = filter.step(&states, &u_nom)?;
        metrics.min_h.push(res.min_h);
        metrics.wall_clock.push(res.solver.wall_clock);
        metrics.max_alter.push(res.altered.iter().copied().fold(0.0, f64::max));
        if matches!(res.solver.fallback, Some(FallbackUsed::Slack | FallbackUsed::ZeroInput)) {
            metrics.fallback_steps += 1;
        }
        if step == 0 {
            metrics.initial_constraints = Some(res.constraints);
        }

        let disturbances = realize_disturbances(cfg, &pooled, &states, &mut rng)?;
        states = states
            .iter()
            .zip(&res.u_star)
            .zip(&disturbances)
            .map(|((s, u), d)| step_dynamics_with(cfg.integrator, s, u, d, cfg.dt, &geom))
            .collect::<Result<_>>()?;
    }

    let violations = metrics.min_h.iter().filter(|h| **h < 0.0).count();
    metrics.violation_time = violations as f64 * cfg.dt;
    let arrived = states
        .iter()
        .zip(&goals)
        .filter(|(s, g)| (output_point(s, &geom) - *g).norm() <= cfg.goal_tolerance)
        .count();
    metrics.goal_completion = arrived as f64 / cfg.robot_count as f64;
    Ok(metrics)
}

/// Seed of iteration `k`; iteration 0 uses the configured seed.
pub fn iteration_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs `cfg.iterations` independent iterations, in parallel on the current
/// rayon pool. Results are ordered by iteration index.
pub fn repeat_experiment(cfg: &ScenarioConfig) -> Result<Vec<RunMetrics>> {
    cfg.validate()?;
    (0..cfg.iterations)
        .into_par_iter()
        .map(|k| {
            let run = ScenarioConfig {
                seed: iteration_seed(cfg.seed, k),
                ..cfg.clone()
            };
            run_scenario(&run).map_err(|e| Error::Iteration {
                iteration: k,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    const G: RobotGeometry = RobotGeometry::GRITSBOT;

    #[test]
    fn two_robots_are_antipodal() {
        let s = circle_init(2, 1.0, &G).unwrap();
        assert_relative_eq!(output_point(&s[0], &G), Vector2::new(1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(output_point(&s[1], &G), Vector2::new(-1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(s[0].theta, PI, epsilon = 1e-12);
        assert_relative_eq!(s[1].theta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn circle22_chord() {
        let s = circle_init(22, 0.6, &G).unwrap();
        let expected = (2.0 * 0.6 * (PI / 22.0).sin()).powi(2) - 0.12f64.powi(2);
        let got = crate::barrier::min_pairwise_h(&s, &G, 0.12);
        assert!(expected > 0.0);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert_eq!(circle_init(1, 0.6, &G).unwrap().len(), 1);
        assert!(matches!(circle_init(22, 0.3, &G), Err(Error::Overlap { .. })));
    }

    #[test]
    fn controller_examples() {
        let s = RobotState::new(0.2, -0.1, 0.4).unwrap();
        let at = output_point(&s, &G);
        assert_eq!(nominal_controller(&s, &at, 1.0, &G, 25.0), WheelCommand::ZERO);

        let s = RobotState::new(0.0, 0.0, 0.0).unwrap();
        let u = nominal_controller(&s, &Vector2::new(0.2, 0.0), 1.0, &G, 25.0);
        assert!(u.right > 0.0);
        assert_relative_eq!(u.right, u.left, epsilon = 1e-12);
    }

    #[test]
    fn controller_preserves_direction_under_saturation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let s = RobotState::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-PI..PI)).unwrap();
            let goal = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let k_p = rng.random_range(0.1..3.0);
            let u = nominal_controller(&s, &goal, k_p, &G, 25.0);
            assert!(u.max_abs() <= 25.0 + 1e-12);
            let achieved = output_jacobian(&s, &G) * u.as_vector();
            let desired = (goal - output_point(&s, &G)) * k_p;
            // parallel and same orientation, scaled by at most 1
            let cross = achieved[0] * desired[1] - achieved[1] * desired[0];
            assert!(cross.abs() <= 1e-9 * desired.norm_squared().max(1e-12));
            assert!(achieved.dot(&desired) >= 0.0);
            assert!(achieved.norm() <= desired.norm() * (1.0 + 1e-12));
        }
    }

    fn benign() -> ScenarioConfig {
        ScenarioConfig {
            robot_count: 2,
            disturbance: HullUnion::symmetric_box(5.0).unwrap(),
            filter_mode: FilterMode::NonRobust,
            plant_disturbance: PlantDisturbance::Off,
            circle_radius: 0.5,
            heading_jitter: 0.05,
            duration: 30.0,
            dt: 0.01,
            ..ScenarioConfig::circle22()
        }
    }

    #[test]
    fn benign_run_reaches_goals() {
        let m = run_scenario(&benign()).unwrap();
        assert_eq!(m.steps(), 3000);
        assert_eq!(m.violation_time, 0.0);
        assert_eq!(m.goal_completion, 1.0);
        assert!(m.wall_clock.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn symmetric_head_on_swap_deadlocks_without_jitter() {
        let m = run_scenario(&ScenarioConfig {
            heading_jitter: 0.0,
            ..benign()
        })
        .unwrap();
        assert_eq!(m.goal_completion, 0.0);
        assert!(m.worst_min_h() > 0.0);
    }

    #[test]
    fn jitter_keeps_output_points_on_the_circle() {
        let s = RobotState::new(0.4, -0.2, 1.0).unwrap();
        let r = rotate_about_output(&s, 0.3, &G).unwrap();
        assert_relative_eq!(output_point(&s, &G), output_point(&r, &G), epsilon = 1e-15);
        assert_relative_eq!(r.theta, 1.3, epsilon = 1e-15);
    }

    #[test]
    fn single_robot_has_no_pairs() {
        let cfg = ScenarioConfig {
            robot_count: 1,
            ..benign()
        };
        let m = run_scenario(&cfg).unwrap();
        assert!(m.min_h.iter().all(|h| h.is_infinite()));
        assert_eq!(m.goal_completion, 1.0);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ScenarioConfig {
            robot_count: 6,
            plant_disturbance: PlantDisturbance::UniformConvex,
            filter_mode: FilterMode::Robust,
            duration: 2.0,
            seed: 42,
            ..benign()
        };
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.min_h, b.min_h);
        assert_eq!(a.max_alter, b.max_alter);
        let other = run_scenario(&ScenarioConfig { seed: 43, ..cfg.clone() }).unwrap();
        assert_ne!(a.min_h, other.min_h);
    }

    #[test]
    fn repeat_matches_single_runs() {
        let cfg = ScenarioConfig {
            robot_count: 4,
            plant_disturbance: PlantDisturbance::UniformConvex,
            duration: 1.0,
            seed: 7,
            iterations: 1,
            ..benign()
        };
        let one = repeat_experiment(&cfg).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].min_h, run_scenario(&cfg).unwrap().min_h);

        let three = repeat_experiment(&ScenarioConfig { iterations: 3, ..cfg.clone() }).unwrap();
        let again = repeat_experiment(&ScenarioConfig { iterations: 3, ..cfg.clone() }).unwrap();
        for (a, b) in three.iter().zip(&again) {
            assert_eq!(a.min_h, b.min_h);
        }
        let third = run_scenario(&ScenarioConfig { seed: iteration_seed(7, 2), ..cfg }).unwrap();
        assert_eq!(three[2].min_h, third.min_h);
    }

    #[test]
    fn config_validation() {
        assert!(ScenarioConfig::circle22().validate().is_ok());
        let tight = ScenarioConfig {
            circle_radius: 0.4,
            ..ScenarioConfig::circle22()
        };
        assert!(matches!(tight.validate(), Err(Error::InvalidParameter { name: "radius", .. })));
        let bad_vertex = ScenarioConfig {
            plant_disturbance: PlantDisturbance::Vertex(4),
            ..ScenarioConfig::circle22()
        };
        assert!(bad_vertex.validate().is_err());
        assert!(ScenarioConfig { dt: 0.0, ..ScenarioConfig::circle22() }.validate().is_err());
        assert!(ScenarioConfig { iterations: 0, ..ScenarioConfig::circle22() }.validate().is_err());
    }

    #[test]
    fn summary_statistics() {
        let run = RunMetrics {
            dt: 0.5,
            duration: 1.5,
            min_h: vec![0.1, -0.2, 0.3],
            wall_clock: vec![0.001, 0.003, 0.002],
            max_alter: vec![0.0; 3],
            violation_time: 0.5,
            goal_completion: 0.5,
            fallback_steps: 0,
            initial_constraints: None,
        };
        let s = summarize(&[run.clone(), run]);
        assert_relative_eq!(s.avg_wct_ms, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.var_wct_ms2, 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.avg_freq_hz, 500.0, epsilon = 1e-9);
        assert_eq!(s.violation_time_s, 1.0);
        assert_eq!(s.worst_min_h, -0.2);
    }
}
