//! Shared event vocabulary, configuration and dialogue records.
//!
//! Everything here is plain data: timestamped input events consumed by the
//! engine, the decision events it emits, and the line-delimited log format
//! shared by the simulator, CLI and metrics.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Milliseconds since session start.
pub type TimestampMs = u64;

/// Milliseconds.
pub type DurationMs = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Robot,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speaker::User => write!(f, "user"),
            Speaker::Robot => write!(f, "robot"),
        }
    }
}

/// One 10 Hz acoustic prediction sample.
///
/// `p_now` is the probability that the user is the dominant speaker in the
/// next 0-600 ms window, `p_future` the same for the 600-2000 ms window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VapFrame {
    pub t: TimestampMs,
    pub p_now: f64,
    pub p_future: f64,
    pub vad_user: bool,
    pub vad_robot: bool,
}

impl VapFrame {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.p_now) && (0.0..=1.0).contains(&self.p_future)
    }
}

/// Incremental transcript plus lexical turn-completion probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnShiftEstimate {
    pub t: TimestampMs,
    pub transcript: String,
    pub p_ts: f64,
}

/// One word of robot speech, reported back to the engine as it is played.
///
/// `t` equals `t_start`; it is the timestamp under which the event sorts in
/// the serialized input stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsWordEvent {
    pub t: TimestampMs,
    pub utterance_id: u32,
    pub index: u32,
    pub word: String,
    pub t_start: TimestampMs,
    pub t_end: TimestampMs,
}

/// Serialized input stream fed to the engine. Callers must order events by
/// timestamp, breaking ties by the variant order declared here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum InputEvent {
    VapFrame(VapFrame),
    AsrPartial { t: TimestampMs, transcript: String },
    AsrFinal { t: TimestampMs, transcript: String },
    TurnShiftEstimate(TurnShiftEstimate),
    TtsWord(TtsWordEvent),
    PreparedReady { t: TimestampMs, handle_id: u32, response_text: String },
    Tick { t: TimestampMs },
}

impl InputEvent {
    pub fn t(&self) -> TimestampMs {
        match self {
            InputEvent::VapFrame(f) => f.t,
            InputEvent::AsrPartial { t, .. } => *t,
            InputEvent::AsrFinal { t, .. } => *t,
            InputEvent::TurnShiftEstimate(e) => e.t,
            InputEvent::TtsWord(w) => w.t,
            InputEvent::PreparedReady { t, .. } => *t,
            InputEvent::Tick { t } => *t,
        }
    }

    /// Tie-break priority for merging into one totally ordered stream.
    pub fn priority(&self) -> u8 {
        match self {
            InputEvent::VapFrame(_) => 0,
            InputEvent::AsrPartial { .. } | InputEvent::AsrFinal { .. } => 1,
            InputEvent::TurnShiftEstimate(_) => 2,
            InputEvent::TtsWord(_) => 3,
            InputEvent::PreparedReady { .. } => 4,
            InputEvent::Tick { .. } => 5,
        }
    }
}

/// Decisions emitted by the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EngineEvent {
    /// The user is believed to have yielded; the robot may speak once a
    /// response is ready.
    TurnShiftAllowed { t: TimestampMs },
    TakeTurn { t: TimestampMs, utterance_id: u32 },
    /// The robot finishes the word in progress and stops. `last_spoken_index`
    /// is -1 when no word had started yet.
    StopAtWordBoundary { t: TimestampMs, utterance_id: u32, last_spoken_index: i64 },
    ContinueOverlap { t: TimestampMs },
    PrepareRequest { t: TimestampMs, handle_id: u32, context: String },
    PrepareCancel { t: TimestampMs, handle_id: u32 },
    BackchannelOpportunity { t: TimestampMs },
    GazeAvert { t: TimestampMs },
    GazeReturn { t: TimestampMs },
    ListeningLight { t: TimestampMs, on: bool },
}

impl EngineEvent {
    pub fn t(&self) -> TimestampMs {
        match self {
            EngineEvent::TurnShiftAllowed { t }
            | EngineEvent::TakeTurn { t, .. }
            | EngineEvent::StopAtWordBoundary { t, .. }
            | EngineEvent::ContinueOverlap { t }
            | EngineEvent::PrepareRequest { t, .. }
            | EngineEvent::PrepareCancel { t, .. }
            | EngineEvent::BackchannelOpportunity { t }
            | EngineEvent::GazeAvert { t }
            | EngineEvent::GazeReturn { t }
            | EngineEvent::ListeningLight { t, .. } => *t,
        }
    }
}

/// A realized turn, with the spoken prefix actually produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: Speaker,
    pub planned_text: String,
    pub spoken_word_count: usize,
    pub t_start: TimestampMs,
    pub t_end: TimestampMs,
}

/// Which party the dual-favor rule must favor before a shift is allowed.
///
/// `NonHolder` is the symmetric reading (shift allowed when both predictions
/// favor the party that does not hold the floor); `Holder` is the literal
/// wording alternative, kept selectable for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum YieldPolarity {
    #[default]
    NonHolder,
    Holder,
}

/// One step of the p_ts -> timeout schedule: applies to `p_ts >= min_p_ts`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeoutStep {
    pub min_p_ts: f64,
    pub timeout_ms: DurationMs,
}

/// Every hyper-parameter of the turn-taking algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub favor_threshold: f64,
    pub dual_favor_min_ms: DurationMs,
    pub max_timeout_ms: DurationMs,
    /// Sorted by `min_p_ts` descending; first matching step wins.
    pub timeout_schedule: Vec<TimeoutStep>,
    pub prep_prob_threshold: f64,
    pub prep_partial_gap_ms: DurationMs,
    pub similarity_threshold: f64,
    pub interrupt_confirm_ms: DurationMs,
    pub frame_period_ms: DurationMs,
    pub take_turn_requires_user_silence: bool,
    pub yield_polarity: YieldPolarity,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            favor_threshold: 0.5,
            dual_favor_min_ms: 500,
            max_timeout_ms: 3000,
            timeout_schedule: vec![
                TimeoutStep { min_p_ts: 0.6, timeout_ms: 1000 },
                TimeoutStep { min_p_ts: 0.3, timeout_ms: 2000 },
                TimeoutStep { min_p_ts: 0.0, timeout_ms: 3000 },
            ],
            prep_prob_threshold: 0.2,
            prep_partial_gap_ms: 200,
            similarity_threshold: 0.8,
            interrupt_confirm_ms: 200,
            frame_period_ms: 100,
            take_turn_requires_user_silence: true,
            yield_polarity: YieldPolarity::NonHolder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{field}: duration must be > 0")]
    ZeroDuration { field: &'static str },
    #[error("{field}: probability {value} outside [0,1]")]
    ProbabilityRange { field: &'static str, value: String },
    #[error("timeout_schedule: empty")]
    EmptySchedule,
    #[error("timeout_schedule: step {index} exceeds max_timeout_ms")]
    ScheduleExceedsMax { index: usize },
    #[error("timeout_schedule: steps must be sorted by min_p_ts descending with non-increasing timeouts in p_ts")]
    ScheduleNotMonotone,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn prob(field: &'static str, v: f64) -> Result<(), ConfigError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::ProbabilityRange { field, value: format!("{v}") })
            }
        }
        fn dur(field: &'static str, v: DurationMs) -> Result<(), ConfigError> {
            if v > 0 { Ok(()) } else { Err(ConfigError::ZeroDuration { field }) }
        }
        prob("favor_threshold", self.favor_threshold)?;
        prob("prep_prob_threshold", self.prep_prob_threshold)?;
        prob("similarity_threshold", self.similarity_threshold)?;
        dur("dual_favor_min_ms", self.dual_favor_min_ms)?;
        dur("max_timeout_ms", self.max_timeout_ms)?;
        dur("prep_partial_gap_ms", self.prep_partial_gap_ms)?;
        dur("interrupt_confirm_ms", self.interrupt_confirm_ms)?;
        dur("frame_period_ms", self.frame_period_ms)?;
        if self.timeout_schedule.is_empty() {
            return Err(ConfigError::EmptySchedule);
        }
        for (i, step) in self.timeout_schedule.iter().enumerate() {
            prob("timeout_schedule.min_p_ts", step.min_p_ts)?;
            dur("timeout_schedule.timeout_ms", step.timeout_ms)?;
            if step.timeout_ms > self.max_timeout_ms {
                return Err(ConfigError::ScheduleExceedsMax { index: i });
            }
        }
        for w in self.timeout_schedule.windows(2) {
            if w[1].min_p_ts >= w[0].min_p_ts || w[1].timeout_ms < w[0].timeout_ms {
                return Err(ConfigError::ScheduleNotMonotone);
            }
        }
        Ok(())
    }

    /// Timeout before the robot may speak, given the latest turn-completion
    /// probability. Monotone non-increasing in `p_ts`.
    pub fn timeout_for(&self, p_ts: f64) -> DurationMs {
        for step in &self.timeout_schedule {
            if p_ts >= step.min_p_ts {
                return step.timeout_ms;
            }
        }
        self.max_timeout_ms
    }

    pub fn favors_user(&self, p: f64) -> bool {
        p > self.favor_threshold
    }

    pub fn favors_robot(&self, p: f64) -> bool {
        p < self.favor_threshold
    }
}
