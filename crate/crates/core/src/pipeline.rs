//! Tentative response preparation: regeneration gating, similarity scoring,
//! single-in-flight cancellation, and history truncation after interruptions.

use crate::model::{DialogueTurn, DurationMs, EngineConfig, Speaker, TimestampMs};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreparationStatus {
    InFlight,
    Ready,
    Canceled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparationHandle {
    pub id: u32,
    pub context_transcript: String,
    pub issued_at: TimestampMs,
    pub status: PreparationStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedResponse {
    pub handle_id: u32,
    pub response_text: String,
    pub ready_at: TimestampMs,
}

/// Tracks preparation handles; at most one is in flight at any time.
#[derive(Debug, Default)]
pub struct PreparationPipeline {
    handles: Vec<PreparationHandle>,
    inflight: Option<usize>,
}

impl PreparationPipeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a new preparation, canceling any in-flight one.
    pub fn begin_preparation(&mut self, context: &str, now: TimestampMs) -> u32 {
        if let Some(idx) = self.inflight.take() {
            self.handles[idx].status = PreparationStatus::Canceled;
        }
        let id = self.handles.len() as u32;
        self.handles.push(PreparationHandle {
            id,
            context_transcript: context.to_string(),
            issued_at: now,
            status: PreparationStatus::InFlight,
        });
        self.inflight = Some(self.handles.len() - 1);
        id
    }

    pub fn cancel(&mut self, id: u32) {
        if let Some(idx) = self.inflight {
            if self.handles[idx].id == id {
                self.handles[idx].status = PreparationStatus::Canceled;
                self.inflight = None;
            }
        }
    }

    /// Completes a handle. Late completions of canceled handles return None.
    pub fn complete(&mut self, id: u32, response_text: &str, now: TimestampMs) -> Option<PreparedResponse> {
        let handle = self.handles.iter_mut().find(|h| h.id == id)?;
        if handle.status != PreparationStatus::InFlight {
            return None;
        }
        handle.status = PreparationStatus::Ready;
        if self.inflight.map(|i| self.handles[i].id) == Some(id) {
            self.inflight = None;
        }
        Some(PreparedResponse { handle_id: id, response_text: response_text.to_string(), ready_at: now })
    }

    pub fn handle(&self, id: u32) -> Option<&PreparationHandle> {
        self.handles.iter().find(|h| h.id == id)
    }

    pub fn inflight_count(&self) -> usize {
        self.inflight.is_some() as usize
    }
}

/// Preparation gate: a new tentative response is generated when the
/// turn-completion probability is high enough or enough time has passed since
/// the previous incremental result, unless the transcript is too similar to
/// the one the last response was generated from.
pub fn should_prepare(
    p_ts: f64,
    gap_ms: DurationMs,
    transcript: &str,
    last_prepared_transcript: Option<&str>,
    cfg: &EngineConfig,
) -> bool {
    let triggered = p_ts >= cfg.prep_prob_threshold || gap_ms >= cfg.prep_partial_gap_ms;
    if !triggered {
        return false;
    }
    match last_prepared_transcript {
        None => true,
        Some(prev) => similarity(transcript, prev) < cfg.similarity_threshold,
    }
}

const SIM_HASH_SPACE: usize = 1 << 16;

fn trigram_counts(text: &str) -> Vec<(usize, u32)> {
    let normalized: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let tokens: Vec<&str> = normalized.split_whitespace().collect();
    let joined = tokens.join(" ");
    let chars: Vec<char> = joined.chars().collect();
    let mut counts: std::collections::HashMap<usize, u32> = std::collections::HashMap::new();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() < 3 {
        // very short texts hash the whole token
        let mut h: u64 = 0xcbf29ce484222325;
        for c in &chars {
            h ^= *c as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        counts.insert((h as usize) % SIM_HASH_SPACE, 1);
    } else {
        for w in chars.windows(3) {
            let mut h: u64 = 0xcbf29ce484222325;
            for c in w {
                h ^= *c as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            *counts.entry((h as usize) % SIM_HASH_SPACE).or_insert(0) += 1;
        }
    }
    let mut v: Vec<(usize, u32)> = counts.into_iter().collect();
    v.sort_unstable();
    v
}

/// Cosine similarity over hashed character-trigram counts of lowercased,
/// punctuation-stripped text. Symmetric, 1.0 for identical non-empty texts,
/// 0.0 when exactly one side is empty.
pub fn similarity(a: &str, b: &str) -> f64 {
    let va = trigram_counts(a);
    let vb = trigram_counts(b);
    match (va.is_empty(), vb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut dot: f64 = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < va.len() && j < vb.len() {
        match va[i].0.cmp(&vb[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += va[i].1 as f64 * vb[j].1 as f64;
                i += 1;
                j += 1;
            }
        }
    }
    let na: f64 = va.iter().map(|(_, c)| (*c as f64).powi(2)).sum();
    let nb: f64 = vb.iter().map(|(_, c)| (*c as f64).powi(2)).sum();
    // single sqrt keeps identical inputs at exactly 1.0
    (dot / (na * nb).sqrt()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TruncateError {
    #[error("last_spoken_index {index} out of range for {word_count} words")]
    IndexOutOfRange { index: i64, word_count: usize },
}

/// First `last_spoken_index + 1` whitespace-delimited words of `planned_text`,
/// preserving original spelling and internal punctuation. -1 means nothing
/// was spoken.
pub fn truncate_turn(planned_text: &str, last_spoken_index: i64) -> Result<String, TruncateError> {
    let words: Vec<&str> = planned_text.split_whitespace().collect();
    if last_spoken_index < -1 || last_spoken_index >= words.len() as i64 {
        return Err(TruncateError::IndexOutOfRange { index: last_spoken_index, word_count: words.len() });
    }
    let n = (last_spoken_index + 1) as usize;
    Ok(words[..n].join(" "))
}

/// Dialogue history for prompting: robot turns contribute only their spoken
/// prefix; user turns contribute full transcripts; empty robot prefixes are
/// omitted.
pub fn build_history(turns: &[DialogueTurn]) -> Vec<(Speaker, String)> {
    let mut out = Vec::new();
    for turn in turns {
        match turn.speaker {
            Speaker::User => out.push((Speaker::User, turn.planned_text.clone())),
            Speaker::Robot => {
                if turn.spoken_word_count == 0 {
                    continue;
                }
                let text = truncate_turn(&turn.planned_text, turn.spoken_word_count as i64 - 1)
                    .unwrap_or_else(|_| turn.planned_text.clone());
                out.push((Speaker::Robot, text));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EngineConfig;

    #[test]
    fn single_flight_cancellation() {
        let mut p = PreparationPipeline::new();
        let a = p.begin_preparation("so", 100);
        let b = p.begin_preparation("so do", 200);
        assert_eq!(p.handle(a).unwrap().status, PreparationStatus::Canceled);
        assert_eq!(p.handle(b).unwrap().status, PreparationStatus::InFlight);
        assert_eq!(p.inflight_count(), 1);
        assert!(p.complete(a, "late", 300).is_none());
        assert!(p.complete(b, "ok", 300).is_some());
        assert_eq!(p.handle(b).unwrap().status, PreparationStatus::Ready);
    }

    #[test]
    fn should_prepare_probability_trigger() {
        let cfg = EngineConfig::default();
        assert!(should_prepare(0.25, 50, "so do you have any favorite", None, &cfg));
    }

    #[test]
    fn should_prepare_gap_trigger() {
        let cfg = EngineConfig::default();
        assert!(should_prepare(0.05, 250, "anything", None, &cfg));
        assert!(!should_prepare(0.05, 50, "anything", None, &cfg));
    }

    #[test]
    fn should_prepare_similarity_suppression() {
        let cfg = EngineConfig::default();
        let prev = "so, do you have any favorite movies";
        let next = "so, do you have any favorite movies you like";
        assert!(similarity(prev, next) >= 0.8);
        assert!(!should_prepare(0.9, 0, next, Some(prev), &cfg));
    }

    #[test]
    fn similarity_identity_and_empty() {
        assert_eq!(similarity("abc def", "abc def"), 1.0);
        assert_eq!(similarity("", "abc"), 0.0);
        assert_eq!(similarity("abc", ""), 0.0);
    }

    #[test]
    fn truncate_examples() {
        let text = "Skydiving was amazing it was such a rush";
        assert_eq!(truncate_turn(text, 2).unwrap(), "Skydiving was amazing");
        assert_eq!(truncate_turn(text, -1).unwrap(), "");
        assert_eq!(truncate_turn(text, 7).unwrap(), text);
        assert!(truncate_turn(text, 8).is_err());
    }

    #[test]
    fn history_truncates_interrupted_robot_turns() {
        let turns = vec![
            DialogueTurn {
                speaker: Speaker::User,
                planned_text: "what did you do".into(),
                spoken_word_count: 4,
                t_start: 0,
                t_end: 1000,
            },
            DialogueTurn {
                speaker: Speaker::Robot,
                planned_text: "Skydiving was amazing it was such a rush".into(),
                spoken_word_count: 3,
                t_start: 2000,
                t_end: 3000,
            },
            DialogueTurn {
                speaker: Speaker::Robot,
                planned_text: "never spoken".into(),
                spoken_word_count: 0,
                t_start: 4000,
                t_end: 4000,
            },
        ];
        let history = build_history(&turns);
        assert_eq!(
            history,
            vec![
                (Speaker::User, "what did you do".to_string()),
                (Speaker::Robot, "Skydiving was amazing".to_string()),
            ]
        );
    }
}
