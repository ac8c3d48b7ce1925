//! Pluggable turn-shift predictors: scripted playback for tests, a lexical
//! heuristic used by the simulator, and a wire-protocol bridge for external
//! predictor processes.

pub mod bridge;
pub mod heuristic;
pub mod scripted;

use crate::model::{TimestampMs, TurnShiftEstimate, VapFrame};

/// Source of acoustic voice-activity projection frames.
pub trait VapSource {
    /// Returns the frame for the given timestamp, or `None` when exhausted.
    fn next_frame(&mut self, t: TimestampMs) -> Option<VapFrame>;
}

/// Source of lexical turn-shift estimates for incremental transcripts.
pub trait TurnShiftPredictor {
    fn estimate(&mut self, t: TimestampMs, transcript: &str) -> TurnShiftEstimate;
}
