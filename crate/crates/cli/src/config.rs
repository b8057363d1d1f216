//! Scenario files.
//!
//! A scenario is a TOML document with the sections `robots`, `barrier`,
//! `disturbance`, `sim` and `filter`. Every key is optional; missing keys take
//! the `circle22` defaults. Unknown keys are rejected.
//!
//! ```toml
//! [robots]
//! count = 22
//!
//! [disturbance]
//! psi = 5.0            # or one [[disturbance.hull]] block per hull
//!
//! [sim]
//! plant_disturbance = "worst-case"
//! ```

use std::path::Path;

use nalgebra::Vector2;
use robust_cbf::barrier::MarginModel;
use robust_cbf::disturbance::{DisturbanceHull, HullUnion};
use robust_cbf::dynamics::{Integrator, RobotGeometry};
use robust_cbf::filter::Fallback;
use robust_cbf::sim::{PlantDisturbance, ScenarioConfig};
use serde::Deserialize;

use crate::error::ConfigError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    robots: RawRobots,
    #[serde(default)]
    barrier: RawBarrier,
    #[serde(default)]
    disturbance: RawDisturbance,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    filter: RawFilter,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobots {
    count: Option<usize>,
    wheel_radius: Option<f64>,
    base_length: Option<f64>,
    look_ahead: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBarrier {
    delta: Option<f64>,
    gamma: Option<f64>,
    margin: Option<RawMargin>,
    neighbor_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawMargin {
    Independent,
    Shared,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    psi: Option<f64>,
    hull: Option<Vec<RawHull>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHull {
    vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: Option<f64>,
    duration: Option<f64>,
    radius: Option<f64>,
    seed: Option<u64>,
    iterations: Option<usize>,
    plant_disturbance: Option<RawPlant>,
    plant_vertex: Option<usize>,
    k_p: Option<f64>,
    goal_tolerance: Option<f64>,
    heading_jitter: Option<f64>,
    integrator: Option<RawIntegrator>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawPlant {
    Off,
    UniformConvex,
    WorstCase,
    Vertex,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawIntegrator {
    Euler,
    Rk4,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    u_max: Option<f64>,
    fallback: Option<RawFallback>,
    slack_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawFallback {
    Error,
    ZeroInput,
    Slack,
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_column(text, s.start))
            .unwrap_or((0, 0));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    build(raw)
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Section-qualified name for a parameter reported by the core crate.
fn qualify(name: &str) -> String {
    let section = match name {
        "count" | "wheel_radius" | "base_length" | "look_ahead" => "robots",
        "delta" | "diameter" | "gamma" | "neighbor_radius" | "class_k" => "barrier",
        "psi" | "vertices" | "hulls" => "disturbance",
        "u_max" | "slack_weight" => "filter",
        _ => "sim",
    };
    let name = if name == "diameter" { "delta" } else { name };
    format!("{section}.{name}")
}

fn from_core(e: robust_cbf::Error) -> ConfigError {
    match e {
        robust_cbf::Error::InvalidParameter { name, reason } => invalid(&qualify(name), reason),
        robust_cbf::Error::NonFinite(what) => invalid(&qualify(what), "must be finite"),
        robust_cbf::Error::VertexOutOfRange { index, len } => invalid(
            "sim.plant_vertex",
            format!("vertex {index} out of range for {len} pooled vertices"),
        ),
        other => invalid("scenario", other.to_string()),
    }
}

fn build(raw: RawScenario) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::circle22();

    let r = raw.robots;
    cfg.robot_count = r.count.unwrap_or(cfg.robot_count);
    let g = RobotGeometry::GRITSBOT;
    let b = raw.barrier;
    let delta = b.delta.unwrap_or(cfg.barrier.delta);
    cfg.geometry = RobotGeometry {
        wheel_radius: r.wheel_radius.unwrap_or(g.wheel_radius),
        base_length: r.base_length.unwrap_or(g.base_length),
        look_ahead: r.look_ahead.unwrap_or(g.look_ahead),
        diameter: delta,
    };
    cfg.barrier.delta = delta;
    cfg.barrier.gamma = b.gamma.unwrap_or(cfg.barrier.gamma);
    cfg.barrier.neighbor_radius = b.neighbor_radius;
    if let Some(m) = b.margin {
        cfg.barrier.margin_model = match m {
            RawMargin::Independent => MarginModel::Independent,
            RawMargin::Shared => MarginModel::Shared,
        };
    }

    cfg.disturbance = match (raw.disturbance.psi, raw.disturbance.hull) {
        (Some(_), Some(_)) => {
            return Err(invalid("disturbance", "give either psi or hull blocks, not both"));
        }
        (Some(psi), None) => {
            if !(psi.is_finite() && psi >= 0.0) {
                return Err(invalid("disturbance.psi", format!("must be finite and >= 0, got {psi}")));
            }
            HullUnion::symmetric_box(psi).map_err(from_core)?
        }
        (None, Some(blocks)) => {
            let hulls = blocks
                .into_iter()
                .enumerate()
                .map(|(k, h)| {
                    let verts = h.vertices.iter().map(|v| Vector2::new(v[0], v[1])).collect();
                    DisturbanceHull::new(verts)
                        .map_err(|e| invalid(&format!("disturbance.hull[{k}].vertices"), e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            HullUnion::new(hulls).map_err(|e| invalid("disturbance.hull", e.to_string()))?
        }
        (None, None) => cfg.disturbance,
    };

    let s = raw.sim;
    cfg.dt = s.dt.unwrap_or(cfg.dt);
    cfg.duration = s.duration.unwrap_or(cfg.duration);
    cfg.circle_radius = s.radius.unwrap_or(cfg.circle_radius);
    cfg.seed = s.seed.unwrap_or(cfg.seed);
    cfg.iterations = s.iterations.unwrap_or(cfg.iterations);
    cfg.k_p = s.k_p.unwrap_or(cfg.k_p);
    cfg.goal_tolerance = s.goal_tolerance.unwrap_or(cfg.goal_tolerance);
    cfg.heading_jitter = s.heading_jitter.unwrap_or(cfg.heading_jitter);
    if let Some(i) = s.integrator {
        cfg.integrator = match i {
            RawIntegrator::Euler => Integrator::Euler,
            RawIntegrator::Rk4 => Integrator::Rk4,
        };
    }
    cfg.plant_disturbance = match (s.plant_disturbance, s.plant_vertex) {
        (Some(RawPlant::Vertex), Some(k)) => PlantDisturbance::Vertex(k),
        (Some(RawPlant::Vertex), None) => {
            return Err(invalid("sim.plant_vertex", "required when plant_disturbance = \"vertex\""));
        }
        (_, Some(_)) => {
            return Err(invalid("sim.plant_vertex", "only valid with plant_disturbance = \"vertex\""));
        }
        (Some(RawPlant::Off), None) => PlantDisturbance::Off,
        (Some(RawPlant::UniformConvex), None) => PlantDisturbance::UniformConvex,
        (Some(RawPlant::WorstCase), None) => PlantDisturbance::WorstCase,
        (None, None) => cfg.plant_disturbance,
    };

    let f = raw.filter;
    cfg.u_max = f.u_max.unwrap_or(cfg.u_max);
    cfg.fallback = match (f.fallback, f.slack_weight) {
        (Some(RawFallback::Error), None) => Fallback::Error,
        (Some(RawFallback::ZeroInput), None) => Fallback::ZeroInput,
        (Some(RawFallback::Slack) | None, Some(weight)) => Fallback::Slack { weight },
        (Some(RawFallback::Slack), None) => Fallback::default(),
        (Some(_), Some(_)) => {
            return Err(invalid("filter.slack_weight", "only valid with fallback = \"slack\""));
        }
        (None, None) => cfg.fallback,
    };

    cfg.validate().map_err(from_core)?;
    Ok(cfg)
}
