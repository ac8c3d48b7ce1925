//! Scenario descriptions for the discrete-event simulator: a fixed user-side
//! timeline of speech segments plus robot reply scripts and noise/latency
//! models.

use serde::{Deserialize, Serialize};

pub type Ms = u64;

/// Whether a user pause after this segment keeps the floor (a planned
/// mid-turn pause) or releases it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    Hold,
    Yield,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: Ms,
    pub t_end: Ms,
    pub transcript: String,
    pub boundary: BoundaryKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pause {
    /// Insert after this 0-based word index.
    pub after_word: usize,
    pub ms: Ms,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotScript {
    pub text: String,
    pub word_ms: Ms,
    #[serde(default)]
    pub pauses: Vec<Pause>,
}

impl RobotScript {
    pub fn new(text: &str) -> Self {
        Self { text: text.to_string(), word_ms: 300, pauses: Vec::new() }
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    /// Total audio duration including planned pauses.
    pub fn duration_ms(&self) -> Ms {
        self.word_count() as Ms * self.word_ms + self.pauses.iter().map(|p| p.ms).sum::<Ms>()
    }
}

/// Imperfections applied to the synthetic acoustic predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Probability that a yield boundary is not anticipated acoustically.
    pub yield_miss_rate: f64,
    /// Gaussian sigma added to each projection probability (clipped to 0..1).
    pub prob_sigma: f64,
    /// Uniform jitter applied to voice-activity edges.
    pub vad_jitter_ms: Ms,
    /// How early before a yield the projections start favoring the robot.
    pub anticipation_lead_ms: Ms,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { yield_miss_rate: 0.2, prob_sigma: 0.1, vad_jitter_ms: 0, anticipation_lead_ms: 200 }
    }
}

impl NoiseModel {
    /// Perfect predictors: every yield anticipated, no jitter.
    pub fn ideal() -> Self {
        Self { yield_miss_rate: 0.0, prob_sigma: 0.0, vad_jitter_ms: 0, anticipation_lead_ms: 200 }
    }
}

/// Processing latencies of the surrounding system components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyModel {
    pub asr_partial_period_ms: Ms,
    pub asr_final_lag_ms: Ms,
    pub llm_ms: Ms,
    pub tts_ms: Ms,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { asr_partial_period_ms: 300, asr_final_lag_ms: 300, llm_ms: 500, tts_ms: 1000 }
    }
}

impl LatencyModel {
    /// End-to-end response preparation latency.
    pub fn prep_ms(&self) -> Ms {
        self.llm_ms + self.tts_ms
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub segments: Vec<Segment>,
    pub robot_scripts: Vec<RobotScript>,
    pub seed: u64,
    pub noise: NoiseModel,
}

impl Scenario {
    /// Last scripted user activity.
    pub fn last_end(&self) -> Ms {
        self.segments.last().map(|s| s.t_end).unwrap_or(0)
    }

    /// True if `t` falls inside scripted user speech.
    pub fn in_user_speech(&self, t: Ms) -> bool {
        self.segments.iter().any(|s| t >= s.t_start && t < s.t_end)
    }

    /// True if `t` falls in a planned mid-turn (Hold) pause.
    pub fn in_hold_pause(&self, t: Ms) -> bool {
        for (i, s) in self.segments.iter().enumerate() {
            if s.boundary == BoundaryKind::Hold && t >= s.t_end {
                if let Some(next) = self.segments.get(i + 1) {
                    if t < next.t_start {
                        return true;
                    }
                }
            }
        }
        false
    }

    pub fn validate(&self) -> Result<(), String> {
        for w in self.segments.windows(2) {
            if w[1].t_start < w[0].t_end {
                return Err(format!("segments overlap at t={}", w[1].t_start));
            }
        }
        for s in &self.segments {
            if s.t_end <= s.t_start {
                return Err(format!("empty segment at t={}", s.t_start));
            }
        }
        if self.robot_scripts.is_empty() {
            return Err("scenario has no robot scripts".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: Ms, b: Ms, k: BoundaryKind) -> Segment {
        Segment { t_start: a, t_end: b, transcript: "hi there".into(), boundary: k }
    }

    #[test]
    fn hold_pause_detection() {
        let scn = Scenario {
            id: "x".into(),
            segments: vec![seg(0, 1000, BoundaryKind::Hold), seg(2000, 3000, BoundaryKind::Yield)],
            robot_scripts: vec![RobotScript::new("ok")],
            seed: 1,
            noise: NoiseModel::default(),
        };
        scn.validate().unwrap();
        assert!(scn.in_user_speech(500));
        assert!(!scn.in_user_speech(1500));
        assert!(scn.in_hold_pause(1500));
        assert!(!scn.in_hold_pause(2500));
        assert!(!scn.in_hold_pause(3500));
    }

    #[test]
    fn script_duration_includes_pauses() {
        let mut s = RobotScript::new("one two three");
        s.pauses.push(Pause { after_word: 1, ms: 400 });
        assert_eq!(s.duration_ms(), 1300);
    }

    #[test]
    fn rejects_overlapping_segments() {
        let scn = Scenario {
            id: "x".into(),
            segments: vec![seg(0, 1000, BoundaryKind::Hold), seg(500, 1500, BoundaryKind::Yield)],
            robot_scripts: vec![RobotScript::new("ok")],
            seed: 1,
            noise: NoiseModel::default(),
        };
        assert!(scn.validate().is_err());
    }
}
