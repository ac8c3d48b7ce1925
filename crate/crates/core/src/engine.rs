//! Deterministic turn-taking state machine.
//!
//! The engine is a single-threaded reactor over one totally ordered input
//! stream. Identical input sequences yield identical decision sequences.
//!
//! Semantics, shared with the reference interpreter in `oracle`:
//!
//! * "favors user" means p > favor_threshold, "favors robot" p < threshold;
//!   equality favors neither.
//! * A turn shift away from the user is allowed when both p_now and p_future
//!   have favored the robot for at least `dual_favor_min_ms` (run length is
//!   last frame t minus run start), or when the user has been silent for the
//!   timeout selected by the latest p_ts. With
//!   `take_turn_requires_user_silence` (the default) the dual-favor clock
//!   starts no earlier than the user's voice-activity offset.
//! * TakeTurn additionally requires a prepared response for the current
//!   context and (by default) user silence.
//! * During robot speech, a user overlap is an interruption once both
//!   predictions favor the user continuously for `interrupt_confirm_ms`;
//!   an overlap that lasts that long without meeting the condition is
//!   collaborative and the robot keeps speaking.

use crate::model::{
    DialogueTurn, EngineConfig, EngineEvent, InputEvent, Speaker, TimestampMs, TtsWordEvent,
    VapFrame, YieldPolarity,
};
use crate::pipeline::should_prepare;

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Proposed,
    Baseline { silence_ms: u64 },
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Proposed => "proposed",
            Policy::Baseline { .. } => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YieldStatus {
    NotYielded,
    AllowedDualFavor,
    AllowedTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapClass {
    Pending,
    Interruption,
    Collaborative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GazeAction {
    Avert,
    Hold,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("out-of-order timestamp {t} (last seen {last})")]
    OutOfOrder { t: TimestampMs, last: TimestampMs },
    #[error("TtsWord for unknown or inactive utterance {utterance_id}")]
    UnknownUtterance { utterance_id: u32 },
    #[error("TtsWord index {index} after stop at {stopped_at} for utterance {utterance_id}")]
    WordAfterStop { utterance_id: u32, index: u32, stopped_at: i64 },
    #[error("TtsWord index {index} not contiguous (expected {expected})")]
    NonContiguousWord { index: u32, expected: u32 },
}

/// Gaze decision at the onset of a planned intra-utterance pause.
pub fn gaze_policy(policy: &Policy, cfg: &EngineConfig, frame_at_pause_onset: &VapFrame) -> GazeAction {
    match policy {
        Policy::Baseline { .. } => GazeAction::Avert,
        Policy::Proposed => {
            if cfg.favors_user(frame_at_pause_onset.p_now) {
                GazeAction::Avert
            } else {
                GazeAction::Hold
            }
        }
    }
}

/// Backchannel-opportunity condition: p_now favors the robot while p_future
/// favors the user. Only meaningful while the user holds the floor.
pub fn backchannel_opportunity(cfg: &EngineConfig, frame: &VapFrame) -> bool {
    cfg.favors_robot(frame.p_now) && cfg.favors_user(frame.p_future)
}

/// Classifies an overlap from the frames observed since its onset. The first
/// frame is the overlap onset.
pub fn classify_overlap(cfg: &EngineConfig, frames_since_onset: &[VapFrame]) -> OverlapClass {
    let Some(first) = frames_since_onset.first() else {
        return OverlapClass::Pending;
    };
    let mut run_start: Option<TimestampMs> = None;
    for f in frames_since_onset {
        if cfg.favors_user(f.p_now) && cfg.favors_user(f.p_future) {
            let start = *run_start.get_or_insert(f.t);
            if f.t - start >= cfg.interrupt_confirm_ms {
                return OverlapClass::Interruption;
            }
        } else {
            run_start = None;
        }
        if f.t - first.t >= cfg.interrupt_confirm_ms {
            return OverlapClass::Collaborative;
        }
    }
    OverlapClass::Pending
}

#[derive(Debug, Clone)]
struct RobotUtterance {
    id: u32,
    planned_text: String,
    word_count: usize,
    cur_index: Option<u32>,
    cur_word_end: TimestampMs,
    stopped_at: Option<i64>,
    speech_end: Option<TimestampMs>,
    in_gap: bool,
    gaze_averted: bool,
    started_at: TimestampMs,
}

#[derive(Debug, Clone)]
struct Overlap {
    onset: TimestampMs,
    run_since: Option<TimestampMs>,
    class: Option<OverlapClass>,
}

#[derive(Debug, Clone)]
struct Request {
    id: u32,
    ready: bool,
}

/// The deterministic turn-taking engine.
#[derive(Debug)]
pub struct Engine {
    config: EngineConfig,
    policy: Policy,
    last_t: TimestampMs,
    floor: Speaker,

    user_vad: bool,
    user_spoke_this_turn: bool,
    user_silence_since: Option<TimestampMs>,
    turn_vad_onset: Option<TimestampMs>,
    last_user_offset: Option<TimestampMs>,

    dual_favor_since: Option<TimestampMs>,
    latest_p_ts: f64,
    turn_shift_allowed: bool,
    bc_active: bool,

    committed_transcript: String,
    current_partial: Option<String>,
    last_asr_t: Option<TimestampMs>,
    asr_gap: Option<u64>,

    current_request: Option<Request>,
    last_prepared_transcript: Option<String>,
    prepared: Option<String>,

    next_handle_id: u32,
    next_utterance_id: u32,
    robot: Option<RobotUtterance>,
    overlap: Option<Overlap>,

    // baseline only
    listening: bool,

    turns: Vec<DialogueTurn>,
}

impl Engine {
    pub fn new(config: EngineConfig, policy: Policy) -> Result<Self, crate::model::ConfigError> {
        config.validate()?;
        if let Policy::Baseline { silence_ms } = &policy {
            if *silence_ms == 0 {
                return Err(crate::model::ConfigError::ZeroDuration { field: "baseline silence_ms" });
            }
        }
        Ok(Engine {
            config,
            policy,
            last_t: 0,
            floor: Speaker::User,
            user_vad: false,
            user_spoke_this_turn: false,
            user_silence_since: None,
            turn_vad_onset: None,
            last_user_offset: None,
            dual_favor_since: None,
            latest_p_ts: 0.0,
            turn_shift_allowed: false,
            bc_active: false,
            committed_transcript: String::new(),
            current_partial: None,
            last_asr_t: None,
            asr_gap: None,
            current_request: None,
            last_prepared_transcript: None,
            prepared: None,
            next_handle_id: 0,
            next_utterance_id: 0,
            robot: None,
            overlap: None,
            listening: true,
            turns: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// Completed dialogue turns, in order.
    pub fn turns(&self) -> &[DialogueTurn] {
        &self.turns
    }

    pub fn turn_shift_allowed(&self) -> bool {
        self.turn_shift_allowed
    }

    fn turn_transcript(&self) -> String {
        match (&self.committed_transcript.is_empty(), &self.current_partial) {
            (true, None) => String::new(),
            (true, Some(p)) => p.clone(),
            (false, None) => self.committed_transcript.clone(),
            (false, Some(p)) => format!("{} {}", self.committed_transcript, p),
        }
    }

    /// Current yield status for the user's floor at time `t`.
    pub fn yield_status(&self, t: TimestampMs) -> YieldStatus {
        if self.floor != Speaker::User || !self.user_spoke_this_turn {
            return YieldStatus::NotYielded;
        }
        if let Some(run_start) = self.dual_favor_since {
            let clock = if self.config.take_turn_requires_user_silence {
                self.user_silence_since.map(|s| run_start.max(s))
            } else {
                Some(run_start)
            };
            if let Some(start) = clock {
                if t.saturating_sub(start) >= self.config.dual_favor_min_ms {
                    return YieldStatus::AllowedDualFavor;
                }
            }
        }
        if let Some(silence) = self.user_silence_since {
            if t.saturating_sub(silence) >= self.config.timeout_for(self.latest_p_ts) {
                return YieldStatus::AllowedTimeout;
            }
        }
        YieldStatus::NotYielded
    }

    pub fn step(&mut self, event: &InputEvent) -> Result<Vec<EngineEvent>, EngineError> {
        let t = event.t();
        if t < self.last_t {
            return Err(EngineError::OutOfOrder { t, last: self.last_t });
        }
        // Validate word events before mutating anything.
        if let InputEvent::TtsWord(w) = event {
            self.check_word(w)?;
        }
        self.last_t = t;
        let mut out = Vec::new();
        self.finish_robot_if_done(t, &mut out);
        match event {
            InputEvent::VapFrame(f) => self.on_frame(f, &mut out),
            InputEvent::AsrPartial { t, transcript } => self.on_asr(*t, transcript, false),
            InputEvent::AsrFinal { t, transcript } => self.on_asr(*t, transcript, true),
            InputEvent::TurnShiftEstimate(e) => self.on_estimate(e.t, &e.transcript, e.p_ts, &mut out),
            InputEvent::TtsWord(w) => self.on_word(w, &mut out),
            InputEvent::PreparedReady { t, handle_id, response_text } => {
                self.on_ready(*t, *handle_id, response_text, &mut out)
            }
            InputEvent::Tick { t } => self.on_tick(*t, &mut out),
        }
        Ok(out)
    }

    fn check_word(&self, w: &TtsWordEvent) -> Result<(), EngineError> {
        let Some(robot) = &self.robot else {
            return Err(EngineError::UnknownUtterance { utterance_id: w.utterance_id });
        };
        if robot.id != w.utterance_id {
            return Err(EngineError::UnknownUtterance { utterance_id: w.utterance_id });
        }
        if let Some(stop) = robot.stopped_at {
            if w.index as i64 > stop {
                return Err(EngineError::WordAfterStop {
                    utterance_id: w.utterance_id,
                    index: w.index,
                    stopped_at: stop,
                });
            }
        }
        let expected = robot.cur_index.map(|i| i + 1).unwrap_or(0);
        if w.index != expected {
            return Err(EngineError::NonContiguousWord { index: w.index, expected });
        }
        Ok(())
    }

    fn finish_robot_if_done(&mut self, t: TimestampMs, out: &mut Vec<EngineEvent>) {
        let Some(robot) = &self.robot else { return };
        let Some(end) = robot.speech_end else { return };
        if t < end {
            return;
        }
        let robot = self.robot.take().unwrap();
        let spoken = match robot.stopped_at {
            Some(k) => (k + 1) as usize,
            None => robot.word_count,
        };
        if robot.gaze_averted {
            out.push(EngineEvent::GazeReturn { t });
        }
        if let Policy::Baseline { .. } = self.policy {
            out.push(EngineEvent::ListeningLight { t, on: false });
            self.listening = true;
        }
        self.turns.push(DialogueTurn {
            speaker: Speaker::Robot,
            planned_text: robot.planned_text,
            spoken_word_count: spoken,
            t_start: robot.started_at,
            t_end: end,
        });
        self.floor = Speaker::User;
        self.user_spoke_this_turn = self.user_vad;
        self.user_silence_since = None;
        self.turn_vad_onset = if self.user_vad { Some(end) } else { None };
        self.dual_favor_since = None;
        self.turn_shift_allowed = false;
        self.bc_active = false;
        self.overlap = None;
    }

    fn on_frame(&mut self, f: &VapFrame, out: &mut Vec<EngineEvent>) {
        // voice-activity edges
        if f.vad_user && !self.user_vad {
            self.user_vad = true;
            self.user_silence_since = None;
            if self.robot.is_some() {
                if matches!(self.policy, Policy::Proposed) {
                    self.overlap = Some(Overlap { onset: f.t, run_since: None, class: None });
                }
            } else {
                self.user_spoke_this_turn = true;
                if self.turn_vad_onset.is_none() {
                    self.turn_vad_onset = Some(f.t);
                }
            }
        } else if !f.vad_user && self.user_vad {
            self.user_vad = false;
            self.user_silence_since = Some(f.t);
            self.last_user_offset = Some(f.t);
            self.overlap = None;
        }

        if self.robot.is_some() {
            self.frame_during_robot_speech(f, out);
        } else {
            match self.policy {
                Policy::Proposed => self.frame_user_floor_proposed(f, out),
                Policy::Baseline { silence_ms } => self.frame_user_floor_baseline(f, silence_ms, out),
            }
        }
    }

    fn frame_user_floor_proposed(&mut self, f: &VapFrame, out: &mut Vec<EngineEvent>) {
        let dual_favored = match self.config.yield_polarity {
            YieldPolarity::NonHolder => {
                self.config.favors_robot(f.p_now) && self.config.favors_robot(f.p_future)
            }
            YieldPolarity::Holder => {
                self.config.favors_user(f.p_now) && self.config.favors_user(f.p_future)
            }
        };
        if dual_favored {
            self.dual_favor_since.get_or_insert(f.t);
        } else {
            self.dual_favor_since = None;
        }

        let bc = backchannel_opportunity(&self.config, f);
        if bc && !self.bc_active {
            out.push(EngineEvent::BackchannelOpportunity { t: f.t });
        }
        self.bc_active = bc;

        if self.yield_status(f.t) != YieldStatus::NotYielded && !self.turn_shift_allowed {
            self.turn_shift_allowed = true;
            out.push(EngineEvent::TurnShiftAllowed { t: f.t });
        }
        self.maybe_take_turn(f.t, out);
    }

    fn frame_user_floor_baseline(&mut self, f: &VapFrame, silence_ms: u64, out: &mut Vec<EngineEvent>) {
        if !self.listening || !self.user_spoke_this_turn {
            return;
        }
        let Some(silence) = self.user_silence_since else { return };
        if f.t.saturating_sub(silence) < silence_ms {
            return;
        }
        // Silence endpoint: stop listening and prepare exactly one response.
        self.listening = false;
        out.push(EngineEvent::ListeningLight { t: f.t, on: true });
        let context = self.turn_transcript();
        let id = self.next_handle_id;
        self.next_handle_id += 1;
        out.push(EngineEvent::PrepareRequest { t: f.t, handle_id: id, context });
        self.current_request = Some(Request { id, ready: false });
    }

    fn frame_during_robot_speech(&mut self, f: &VapFrame, out: &mut Vec<EngineEvent>) {
        // Planned pause detection: current word finished, utterance not done.
        let policy = self.policy.clone();
        let cfg_snapshot = self.config.clone();
        if let Some(robot) = &mut self.robot {
            let mid_utterance = robot.cur_index.is_some()
                && robot.speech_end.is_none()
                && robot.stopped_at.is_none()
                && f.t >= robot.cur_word_end;
            if mid_utterance && !robot.in_gap {
                robot.in_gap = true;
                if gaze_policy(&policy, &cfg_snapshot, f) == GazeAction::Avert && !robot.gaze_averted {
                    robot.gaze_averted = true;
                    out.push(EngineEvent::GazeAvert { t: f.t });
                }
            }
        }

        if matches!(self.policy, Policy::Baseline { .. }) {
            return; // baseline ignores the user while speaking
        }

        let both_user = self.config.favors_user(f.p_now) && self.config.favors_user(f.p_future);
        let confirm = self.config.interrupt_confirm_ms;
        let mut stop: Option<(u32, i64)> = None;
        if let (Some(overlap), Some(robot)) = (&mut self.overlap, &self.robot) {
            if overlap.class.is_none() {
                if both_user {
                    let start = *overlap.run_since.get_or_insert(f.t);
                    if f.t - start >= confirm {
                        overlap.class = Some(OverlapClass::Interruption);
                        let last = robot.cur_index.map(|i| i as i64).unwrap_or(-1);
                        stop = Some((robot.id, last));
                    }
                } else {
                    overlap.run_since = None;
                }
                if stop.is_none() && overlap.class.is_none() && f.t - overlap.onset >= confirm {
                    overlap.class = Some(OverlapClass::Collaborative);
                    out.push(EngineEvent::ContinueOverlap { t: f.t });
                }
            }
        }
        if let Some((utterance_id, last)) = stop {
            out.push(EngineEvent::StopAtWordBoundary { t: f.t, utterance_id, last_spoken_index: last });
            let robot = self.robot.as_mut().unwrap();
            robot.stopped_at = Some(last);
            // The word in progress finishes; if it already ended (or never
            // started) speech ends now.
            robot.speech_end = Some(if robot.cur_index.is_some() && !robot.in_gap {
                robot.cur_word_end.max(f.t)
            } else {
                f.t
            });
        }
    }

    fn on_asr(&mut self, t: TimestampMs, transcript: &str, is_final: bool) {
        if matches!(self.policy, Policy::Baseline { .. }) && !self.listening {
            return;
        }
        self.asr_gap = self.last_asr_t.map(|p| t.saturating_sub(p));
        self.last_asr_t = Some(t);
        if is_final {
            if self.committed_transcript.is_empty() {
                self.committed_transcript = transcript.to_string();
            } else {
                self.committed_transcript.push(' ');
                self.committed_transcript.push_str(transcript);
            }
            self.current_partial = None;
        } else {
            self.current_partial = Some(transcript.to_string());
        }
    }

    fn on_estimate(&mut self, t: TimestampMs, transcript: &str, p_ts: f64, out: &mut Vec<EngineEvent>) {
        if matches!(self.policy, Policy::Baseline { .. }) {
            return; // baseline does not consume lexical predictions
        }
        self.latest_p_ts = p_ts;
        if transcript.is_empty() {
            return;
        }
        let gap = self.asr_gap.unwrap_or(u64::MAX);
        if should_prepare(p_ts, gap, transcript, self.last_prepared_transcript.as_deref(), &self.config) {
            if let Some(req) = &self.current_request {
                if !req.ready {
                    out.push(EngineEvent::PrepareCancel { t, handle_id: req.id });
                }
            }
            self.prepared = None;
            let id = self.next_handle_id;
            self.next_handle_id += 1;
            out.push(EngineEvent::PrepareRequest { t, handle_id: id, context: transcript.to_string() });
            self.current_request = Some(Request { id, ready: false });
            self.last_prepared_transcript = Some(transcript.to_string());
        }
    }

    fn on_word(&mut self, w: &TtsWordEvent, out: &mut Vec<EngineEvent>) {
        let robot = self.robot.as_mut().expect("checked in check_word");
        if robot.gaze_averted && robot.in_gap {
            robot.gaze_averted = false;
            out.push(EngineEvent::GazeReturn { t: w.t });
        }
        robot.in_gap = false;
        robot.cur_index = Some(w.index);
        robot.cur_word_end = w.t_end;
        if w.index as usize + 1 == robot.word_count {
            robot.speech_end = Some(w.t_end);
        }
    }

    fn on_ready(&mut self, t: TimestampMs, handle_id: u32, response_text: &str, out: &mut Vec<EngineEvent>) {
        let Some(req) = &mut self.current_request else { return };
        if req.id != handle_id || req.ready {
            return; // stale completion of a canceled handle
        }
        req.ready = true;
        self.prepared = Some(response_text.to_string());
        match self.policy {
            Policy::Proposed => self.maybe_take_turn(t, out),
            Policy::Baseline { .. } => self.take_turn(t, out),
        }
    }

    fn on_tick(&mut self, t: TimestampMs, out: &mut Vec<EngineEvent>) {
        match self.policy {
            Policy::Proposed => {
                if self.robot.is_none() {
                    if self.yield_status(t) != YieldStatus::NotYielded && !self.turn_shift_allowed {
                        self.turn_shift_allowed = true;
                        out.push(EngineEvent::TurnShiftAllowed { t });
                    }
                    self.maybe_take_turn(t, out);
                }
            }
            Policy::Baseline { silence_ms } => {
                if self.robot.is_none() && self.listening && self.user_spoke_this_turn {
                    if let Some(silence) = self.user_silence_since {
                        if t.saturating_sub(silence) >= silence_ms {
                            self.listening = false;
                            out.push(EngineEvent::ListeningLight { t, on: true });
                            let context = self.turn_transcript();
                            let id = self.next_handle_id;
                            self.next_handle_id += 1;
                            out.push(EngineEvent::PrepareRequest { t, handle_id: id, context });
                            self.current_request = Some(Request { id, ready: false });
                        }
                    }
                }
            }
        }
    }

    fn maybe_take_turn(&mut self, t: TimestampMs, out: &mut Vec<EngineEvent>) {
        if self.robot.is_some() || !self.turn_shift_allowed || self.prepared.is_none() {
            return;
        }
        if self.config.take_turn_requires_user_silence && self.user_vad {
            return;
        }
        self.take_turn(t, out);
    }

    fn take_turn(&mut self, t: TimestampMs, out: &mut Vec<EngineEvent>) {
        let Some(text) = self.prepared.take() else { return };
        let id = self.next_utterance_id;
        self.next_utterance_id += 1;
        out.push(EngineEvent::TakeTurn { t, utterance_id: id });
        let transcript = self.turn_transcript();
        let spoken = transcript.split_whitespace().count();
        self.turns.push(DialogueTurn {
            speaker: Speaker::User,
            planned_text: transcript,
            spoken_word_count: spoken,
            t_start: self.turn_vad_onset.unwrap_or(t),
            t_end: self.last_user_offset.unwrap_or(t),
        });
        let word_count = text.split_whitespace().count();
        self.robot = Some(RobotUtterance {
            id,
            planned_text: text,
            word_count,
            cur_index: None,
            cur_word_end: t,
            stopped_at: None,
            speech_end: if word_count == 0 { Some(t) } else { None },
            in_gap: false,
            gaze_averted: false,
            started_at: t,
        });
        self.floor = Speaker::Robot;
        // Fresh context for the next user turn.
        self.user_spoke_this_turn = false;
        self.turn_vad_onset = None;
        self.user_silence_since = None;
        self.dual_favor_since = None;
        self.latest_p_ts = 0.0;
        self.turn_shift_allowed = false;
        self.bc_active = false;
        self.committed_transcript.clear();
        self.current_partial = None;
        self.last_asr_t = None;
        self.asr_gap = None;
        self.current_request = None;
        self.last_prepared_transcript = None;
        self.prepared = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InputEvent as IE;

    fn frame(t: u64, p_now: f64, p_future: f64, vad_user: bool) -> IE {
        IE::VapFrame(VapFrame { t, p_now, p_future, vad_user, vad_robot: false })
    }

    fn new_engine(policy: Policy) -> Engine {
        Engine::new(EngineConfig::default(), policy).unwrap()
    }

    #[test]
    fn create_rejects_invalid_config() {
        let cfg = EngineConfig { dual_favor_min_ms: 0, ..Default::default() };
        assert!(Engine::new(cfg, Policy::Proposed).is_err());
    }

    #[test]
    fn initial_state() {
        let engine = new_engine(Policy::Proposed);
        assert!(!engine.turn_shift_allowed());
        assert!(engine.turns().is_empty());
    }

    #[test]
    fn out_of_order_rejected_state_unchanged() {
        let mut engine = new_engine(Policy::Proposed);
        engine.step(&frame(100, 0.5, 0.5, false)).unwrap();
        let err = engine.step(&frame(90, 0.5, 0.5, false)).unwrap_err();
        assert!(matches!(err, EngineError::OutOfOrder { t: 90, last: 100 }));
        // subsequent in-order event still accepted
        engine.step(&frame(200, 0.5, 0.5, false)).unwrap();
    }

    #[test]
    fn frame_without_state_change_is_silent() {
        let mut engine = new_engine(Policy::Proposed);
        let out = engine.step(&frame(0, 0.5, 0.5, false)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn dual_favor_allows_after_min_duration() {
        let mut engine = new_engine(Policy::Proposed);
        engine.step(&frame(0, 0.8, 0.8, true)).unwrap();
        engine.step(&frame(100, 0.8, 0.8, false)).unwrap(); // offset at 100
        let mut allowed_at = None;
        for i in 2..=10 {
            let t = i * 100;
            let out = engine.step(&frame(t, 0.2, 0.1, false)).unwrap();
            if out.iter().any(|e| matches!(e, EngineEvent::TurnShiftAllowed { .. })) {
                allowed_at = Some(t);
                break;
            }
        }
        // run starts at 200 (first robot-favoring frame after silence at 100)
        assert_eq!(allowed_at, Some(700));
        assert_eq!(engine.yield_status(700), YieldStatus::AllowedDualFavor);
    }

    #[test]
    fn below_min_duration_not_yielded() {
        let mut engine = new_engine(Policy::Proposed);
        engine.step(&frame(0, 0.8, 0.8, true)).unwrap();
        engine.step(&frame(100, 0.2, 0.1, false)).unwrap();
        engine.step(&frame(200, 0.2, 0.1, false)).unwrap();
        engine.step(&frame(300, 0.2, 0.1, false)).unwrap();
        engine.step(&frame(400, 0.2, 0.1, false)).unwrap();
        assert_eq!(engine.yield_status(400), YieldStatus::NotYielded);
    }

    #[test]
    fn timeout_path_with_user_favoring_predictions() {
        let mut engine = new_engine(Policy::Proposed);
        engine.step(&frame(0, 0.8, 0.9, true)).unwrap();
        let mut allowed_at = None;
        for i in 1..=40 {
            let t = i * 100;
            let out = engine.step(&frame(t, 0.8, 0.9, false)).unwrap();
            if out.iter().any(|e| matches!(e, EngineEvent::TurnShiftAllowed { .. })) {
                allowed_at = Some(t);
                break;
            }
        }
        // silence from 100, p_ts 0 -> timeout 3000 -> allowed at 3100
        assert_eq!(allowed_at, Some(3100));
        assert_eq!(engine.yield_status(3100), YieldStatus::AllowedTimeout);
    }

    #[test]
    fn backchannel_opportunity_edges() {
        let cfg = EngineConfig::default();
        let f = |p_now: f64, p_future: f64| VapFrame { t: 0, p_now, p_future, vad_user: false, vad_robot: false };
        assert!(backchannel_opportunity(&cfg, &f(0.3, 0.8)));
        assert!(!backchannel_opportunity(&cfg, &f(0.8, 0.8)));
        assert!(!backchannel_opportunity(&cfg, &f(0.5, 0.8)));
    }

    #[test]
    fn backchannel_emitted_once_per_run() {
        let mut engine = new_engine(Policy::Proposed);
        engine.step(&frame(0, 0.8, 0.8, true)).unwrap();
        let a = engine.step(&frame(100, 0.3, 0.8, true)).unwrap();
        let b = engine.step(&frame(200, 0.3, 0.8, true)).unwrap();
        assert!(a.iter().any(|e| matches!(e, EngineEvent::BackchannelOpportunity { .. })));
        assert!(!b.iter().any(|e| matches!(e, EngineEvent::BackchannelOpportunity { .. })));
    }

    #[test]
    fn classify_overlap_examples() {
        let cfg = EngineConfig::default();
        let f = |t: u64, p_now: f64, p_future: f64| VapFrame { t, p_now, p_future, vad_user: true, vad_robot: true };
        // sustained dual-user favor for 200 ms -> interruption
        let frames = vec![f(0, 0.9, 0.85), f(100, 0.9, 0.85), f(200, 0.9, 0.85)];
        assert_eq!(classify_overlap(&cfg, &frames), OverlapClass::Interruption);
        // backchannel signature -> collaborative once the window elapses
        let frames = vec![f(0, 0.9, 0.2), f(100, 0.9, 0.2), f(200, 0.9, 0.2)];
        assert_eq!(classify_overlap(&cfg, &frames), OverlapClass::Collaborative);
        // window not elapsed -> pending
        let frames = vec![f(0, 0.9, 0.85), f(100, 0.9, 0.85)];
        assert_eq!(classify_overlap(&cfg, &frames), OverlapClass::Pending);
    }

    #[test]
    fn gaze_policy_examples() {
        let cfg = EngineConfig::default();
        let f = |p_now: f64| VapFrame { t: 0, p_now, p_future: 0.5, vad_user: false, vad_robot: false };
        assert_eq!(gaze_policy(&Policy::Proposed, &cfg, &f(0.2)), GazeAction::Hold);
        assert_eq!(gaze_policy(&Policy::Proposed, &cfg, &f(0.8)), GazeAction::Avert);
        assert_eq!(gaze_policy(&Policy::Baseline { silence_ms: 1000 }, &cfg, &f(0.2)), GazeAction::Avert);
    }

    /// User speaks, yields, an estimate triggers preparation, the prepared
    /// response arrives, and the robot takes the turn; then a sustained
    /// dual-user overlap stops it at a word boundary.
    #[test]
    fn full_take_turn_and_interruption_flow() {
        let mut engine = new_engine(Policy::Proposed);
        engine.step(&frame(0, 0.8, 0.8, true)).unwrap();
        engine.step(&IE::AsrPartial { t: 50, transcript: "what did you do".into() }).unwrap();
        let out = engine
            .step(&IE::TurnShiftEstimate(crate::model::TurnShiftEstimate {
                t: 50,
                transcript: "what did you do".into(),
                p_ts: 0.7,
            }))
            .unwrap();
        let handle = out
            .iter()
            .find_map(|e| match e {
                EngineEvent::PrepareRequest { handle_id, .. } => Some(*handle_id),
                _ => None,
            })
            .expect("preparation triggered");
        engine
            .step(&IE::PreparedReady {
                t: 80,
                handle_id: handle,
                response_text: "Skydiving was amazing it was such a rush".into(),
            })
            .unwrap();
        engine.step(&frame(100, 0.8, 0.8, false)).unwrap(); // offset -> silence at 100
        let mut take_turn_at = None;
        for i in 2..=12 {
            let t = i * 100;
            let out = engine.step(&frame(t, 0.2, 0.1, false)).unwrap();
            if out.iter().any(|e| matches!(e, EngineEvent::TakeTurn { .. })) {
                take_turn_at = Some(t);
                break;
            }
        }
        let onset = take_turn_at.expect("robot takes turn");
        assert_eq!(onset, 700);

        // words play at 300 ms each; user barges in during word 2
        let word = |i: u32, start: u64| {
            IE::TtsWord(TtsWordEvent {
                t: start,
                utterance_id: 0,
                index: i,
                word: format!("w{i}"),
                t_start: start,
                t_end: start + 300,
            })
        };
        engine.step(&word(0, 700)).unwrap();
        engine.step(&word(1, 1000)).unwrap();
        engine.step(&word(2, 1300)).unwrap();
        engine.step(&frame(1400, 0.9, 0.85, true)).unwrap(); // overlap onset
        engine.step(&frame(1500, 0.9, 0.85, true)).unwrap();
        let out = engine.step(&frame(1600, 0.9, 0.85, true)).unwrap();
        let stop = out
            .iter()
            .find_map(|e| match e {
                EngineEvent::StopAtWordBoundary { last_spoken_index, .. } => Some(*last_spoken_index),
                _ => None,
            })
            .expect("interruption stops robot");
        assert_eq!(stop, 2);
        // word 3 must now be rejected
        let err = engine.step(&word(3, 1600)).unwrap_err();
        assert!(matches!(err, EngineError::WordAfterStop { .. }));
        // robot turn finishes at the stopped word's end
        engine.step(&frame(1700, 0.9, 0.85, true)).unwrap();
        let robot_turn = engine.turns().iter().find(|t| t.speaker == Speaker::Robot).unwrap();
        assert_eq!(robot_turn.spoken_word_count, 3);
    }

    #[test]
    fn collaborative_overlap_continues() {
        let mut engine = new_engine(Policy::Proposed);
        engine.step(&frame(0, 0.8, 0.8, true)).unwrap();
        engine.step(&IE::AsrPartial { t: 50, transcript: "tell me".into() }).unwrap();
        let out = engine
            .step(&IE::TurnShiftEstimate(crate::model::TurnShiftEstimate {
                t: 50,
                transcript: "tell me".into(),
                p_ts: 0.7,
            }))
            .unwrap();
        let handle = out
            .iter()
            .find_map(|e| match e {
                EngineEvent::PrepareRequest { handle_id, .. } => Some(*handle_id),
                _ => None,
            })
            .unwrap();
        engine.step(&IE::PreparedReady { t: 80, handle_id: handle, response_text: "a b c d e f".into() }).unwrap();
        engine.step(&frame(100, 0.8, 0.8, false)).unwrap();
        for i in 2..=7 {
            engine.step(&frame(i * 100, 0.2, 0.1, false)).unwrap();
        }
        // robot speaking; user backchannels with p_future favoring robot
        let word = |i: u32, start: u64| {
            IE::TtsWord(TtsWordEvent {
                t: start,
                utterance_id: 0,
                index: i,
                word: format!("w{i}"),
                t_start: start,
                t_end: start + 300,
            })
        };
        engine.step(&word(0, 700)).unwrap();
        engine.step(&frame(800, 0.9, 0.2, true)).unwrap();
        engine.step(&frame(900, 0.9, 0.2, true)).unwrap();
        engine.step(&word(1, 1000)).unwrap();
        let out = engine.step(&frame(1000, 0.9, 0.2, true)).unwrap();
        assert!(out.iter().any(|e| matches!(e, EngineEvent::ContinueOverlap { .. })));
        assert!(!out.iter().any(|e| matches!(e, EngineEvent::StopAtWordBoundary { .. })));
    }

    #[test]
    fn baseline_endpoints_on_silence_and_lights() {
        let mut engine = new_engine(Policy::Baseline { silence_ms: 1000 });
        engine.step(&frame(0, 0.8, 0.8, true)).unwrap();
        engine.step(&IE::AsrPartial { t: 100, transcript: "hello there".into() }).unwrap();
        engine.step(&IE::AsrFinal { t: 400, transcript: "hello there".into() }).unwrap();
        let mut endpoint = None;
        for i in 4..=20 {
            let t = i * 100;
            let out = engine.step(&frame(t, 0.8, 0.8, false)).unwrap();
            if let Some(EngineEvent::ListeningLight { on: true, .. }) = out.first() {
                assert!(out.iter().any(|e| matches!(e, EngineEvent::PrepareRequest { .. })));
                endpoint = Some(t);
                break;
            }
        }
        // silence starts at 400 (first silent frame) -> endpoint at 1400
        assert_eq!(endpoint, Some(1400));
        let out = engine
            .step(&IE::PreparedReady { t: 2700, handle_id: 0, response_text: "hi".into() })
            .unwrap();
        assert!(out.iter().any(|e| matches!(e, EngineEvent::TakeTurn { .. })));
    }

    #[test]
    fn baseline_never_stops_for_overlap() {
        let mut engine = new_engine(Policy::Baseline { silence_ms: 1000 });
        engine.step(&frame(0, 0.8, 0.8, true)).unwrap();
        engine.step(&IE::AsrFinal { t: 50, transcript: "hi".into() }).unwrap();
        for i in 1..=12 {
            engine.step(&frame(i * 100, 0.8, 0.8, false)).unwrap();
        }
        engine.step(&IE::PreparedReady { t: 1300, handle_id: 0, response_text: "a b c d e".into() }).unwrap();
        let word = |i: u32, start: u64| {
            IE::TtsWord(TtsWordEvent {
                t: start,
                utterance_id: 0,
                index: i,
                word: format!("w{i}"),
                t_start: start,
                t_end: start + 300,
            })
        };
        engine.step(&word(0, 1300)).unwrap();
        // user speaks over the robot with strong user-favoring predictions
        for i in 0..5 {
            let out = engine.step(&frame(1400 + i * 100, 0.95, 0.95, true)).unwrap();
            assert!(!out.iter().any(|e| matches!(
                e,
                EngineEvent::StopAtWordBoundary { .. } | EngineEvent::ContinueOverlap { .. }
            )));
        }
    }
}
