//! Turn-taking coordination engine for conversational agents.
//!
//! Fuses a 10 Hz acoustic voice-activity projection stream with lexical
//! turn-completion estimates to decide when a robot should speak, stop, or
//! hold back; prepares responses speculatively so it can answer fast; and
//! ships a deterministic discrete-event simulator plus metrics for comparing
//! policies.

pub mod engine;
pub mod logfmt;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod predictors;
pub mod sim;
pub mod validate;

pub use engine::{Engine, Policy};
pub use model::{EngineConfig, EngineEvent, InputEvent, VapFrame};
