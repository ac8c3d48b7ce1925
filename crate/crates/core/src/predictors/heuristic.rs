//! Lexical turn-completion heuristic. Looks at the trailing words of an
//! incremental transcript: trailing continuation cues (conjunctions,
//! prepositions, fillers) make a turn shift unlikely; trailing terminal cues
//! (objects, time expressions, closers) make it likely. Everything else gets
//! a neutral score. Cue lists live in data files so they can be tuned
//! without touching code.

use super::TurnShiftPredictor;
use crate::model::{TimestampMs, TurnShiftEstimate};

const CONTINUATION_CUES: &str = include_str!("../../data/continuation_cues.txt");
const TERMINAL_CUES: &str = include_str!("../../data/terminal_cues.txt");

pub const P_TS_CONTINUATION: f64 = 0.05;
pub const P_TS_TERMINAL: f64 = 0.8;
pub const P_TS_NEUTRAL: f64 = 0.4;

fn cue_list(raw: &str) -> Vec<&str> {
    raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

fn normalize_tail(transcript: &str) -> String {
    transcript
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '\'')
        .collect()
}

/// Scores an incremental transcript. Empty input returns 0.0 (no evidence of
/// a turn at all); continuation cues dominate terminal cues when both match.
pub fn heuristic_p_ts(transcript: &str) -> f64 {
    let norm = normalize_tail(transcript);
    let norm = norm.trim();
    if norm.is_empty() {
        return 0.0;
    }
    let last_word = norm.split_whitespace().last().unwrap_or("");
    let last_two = {
        let words: Vec<&str> = norm.split_whitespace().collect();
        if words.len() >= 2 {
            format!("{} {}", words[words.len() - 2], words[words.len() - 1])
        } else {
            last_word.to_string()
        }
    };
    if cue_list(CONTINUATION_CUES).iter().any(|c| *c == last_word) {
        return P_TS_CONTINUATION;
    }
    if cue_list(TERMINAL_CUES).iter().any(|c| *c == last_word || *c == last_two) {
        return P_TS_TERMINAL;
    }
    P_TS_NEUTRAL
}

/// Predictor wrapper around [`heuristic_p_ts`].
#[derive(Debug, Default, Clone)]
pub struct HeuristicPredictor;

impl TurnShiftPredictor for HeuristicPredictor {
    fn estimate(&mut self, t: TimestampMs, transcript: &str) -> TurnShiftEstimate {
        TurnShiftEstimate {
            t,
            transcript: transcript.to_string(),
            p_ts: heuristic_p_ts(transcript),
        }
    }
}
