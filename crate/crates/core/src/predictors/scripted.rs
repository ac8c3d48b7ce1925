//! Deterministic scripted predictor for replay and tests: plays back a fixed
//! timeline of frames and estimates, each delivered exactly once, in order.

use super::{TurnShiftPredictor, VapSource};
use crate::model::{TimestampMs, TurnShiftEstimate, VapFrame};
use std::collections::VecDeque;

#[derive(Debug, Clone, Default)]
pub struct PredictorScript {
    pub frames: Vec<VapFrame>,
    pub estimates: Vec<TurnShiftEstimate>,
}

#[derive(Debug)]
pub struct ScriptedPredictor {
    frames: VecDeque<VapFrame>,
    estimates: VecDeque<TurnShiftEstimate>,
}

impl ScriptedPredictor {
    /// Builds a playback source. The script must be time-ordered; out-of-order
    /// entries are rejected so a bad fixture fails loudly instead of silently
    /// reordering events.
    pub fn new(script: PredictorScript) -> Result<Self, String> {
        for w in script.frames.windows(2) {
            if w[1].t < w[0].t {
                return Err(format!("frame script out of order at t={}", w[1].t));
            }
        }
        for w in script.estimates.windows(2) {
            if w[1].t < w[0].t {
                return Err(format!("estimate script out of order at t={}", w[1].t));
            }
        }
        Ok(Self {
            frames: script.frames.into(),
            estimates: script.estimates.into(),
        })
    }

    pub fn frames_remaining(&self) -> usize {
        self.frames.len()
    }

    pub fn estimates_remaining(&self) -> usize {
        self.estimates.len()
    }

    /// Pops the next scripted estimate due at or before `t`, if any.
    pub fn poll_estimate(&mut self, t: TimestampMs) -> Option<TurnShiftEstimate> {
        if self.estimates.front().map(|e| e.t <= t).unwrap_or(false) {
            self.estimates.pop_front()
        } else {
            None
        }
    }
}

impl VapSource for ScriptedPredictor {
    fn next_frame(&mut self, t: TimestampMs) -> Option<VapFrame> {
        if self.frames.front().map(|f| f.t <= t).unwrap_or(false) {
            self.frames.pop_front()
        } else {
            None
        }
    }
}

impl TurnShiftPredictor for ScriptedPredictor {
    fn estimate(&mut self, t: TimestampMs, _transcript: &str) -> TurnShiftEstimate {
        self.poll_estimate(t).unwrap_or(TurnShiftEstimate {
            t,
            transcript: String::new(),
            p_ts: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: u64) -> VapFrame {
        VapFrame { t, p_now: 0.5, p_future: 0.5, vad_user: false, vad_robot: false }
    }

    #[test]
    fn delivers_each_frame_exactly_once_in_order() {
        let script = PredictorScript {
            frames: vec![frame(0), frame(100), frame(200)],
            estimates: vec![],
        };
        let mut p = ScriptedPredictor::new(script).unwrap();
        assert_eq!(p.next_frame(0).unwrap().t, 0);
        assert!(p.next_frame(50).is_none());
        assert_eq!(p.next_frame(150).unwrap().t, 100);
        assert_eq!(p.next_frame(300).unwrap().t, 200);
        assert!(p.next_frame(1000).is_none());
        assert_eq!(p.frames_remaining(), 0);
    }

    #[test]
    fn rejects_out_of_order_script() {
        let script = PredictorScript {
            frames: vec![frame(100), frame(0)],
            estimates: vec![],
        };
        assert!(ScriptedPredictor::new(script).is_err());
    }

    #[test]
    fn estimates_default_to_zero_when_exhausted() {
        let mut p = ScriptedPredictor::new(PredictorScript::default()).unwrap();
        let e = p.estimate(500, "hello");
        assert_eq!(e.p_ts, 0.0);
        assert_eq!(e.t, 500);
    }
}
