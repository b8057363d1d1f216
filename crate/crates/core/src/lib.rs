//! Robust control-barrier-function safety filter for teams of differential-drive
//! robots whose wheel commands are corrupted by bounded, set-valued disturbances.
//!
//! The disturbance is modelled as the convex hull (or a union of convex hulls) of
//! finitely many wheel-velocity offsets. Because a linear functional attains its
//! minimum over a polytope at a vertex, the worst case over the whole hull is a
//! minimum over the vertex list, which costs `O(p)` per constraint row. The filter
//! then solves one dense, strongly convex QP per control step that stays as close
//! as possible to the user's nominal wheel commands.
//!
//! Module map:
//!
//! - [`dynamics`]: unicycle kinematics, wheel matrix and the look-ahead output map.
//! - [`disturbance`]: vertex hulls, support minima and samplers.
//! - [`barrier`]: pairwise collision barriers and ensemble constraint assembly.
//! - [`qp`]: dual active-set QP solver and an independent KKT certificate.
//! - [`filter`]: the per-step minimally invasive safety filter.
//! - [`sim`]: closed-loop circle-swap simulation and run metrics.

pub mod barrier;
pub mod disturbance;
pub mod dynamics;
pub mod filter;
pub mod qp;
pub mod sim;

mod error;

pub use error::{Error, Result};
