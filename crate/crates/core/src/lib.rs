//! Two-stage GUI agent engine.
//!
//! An interpreter turns a task, prior steps and a screenshot into an element
//! description, an operation and an optional value; a locator turns that
//! description into normalized screen coordinates. The crate also carries a
//! deterministic simulated GUI to run agents against and the metrics used to
//! score grounding, offline replay and interactive runs.

pub mod action;
pub mod agent;
pub mod backends;
pub mod exec;
pub mod fixtures;
pub mod font;
pub mod geometry;
pub mod metrics;
pub mod parsing;
pub mod sim;
pub mod suite;

pub use action::{
    scale_point, serialize_action, validate_triplet, ActionError, ActionTriplet, CommandString,
    NormalizedPoint, OperationKind, PixelPoint, ScreenDims,
};
pub use exec::Execution;
pub use geometry::NormRect;
pub use parsing::{extract_point, parse_structured_step, point_with_fallback, StructuredStep};
