//! Stream-validity checks over event logs. Violations are data, not failures.

use crate::logfmt::{LogRecord, MetaRecord};
use crate::model::{DurationMs, InputEvent};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub message: String,
}

/// Returns an empty report iff timestamps are monotone, VapFrame cadence
/// holds within +/- 1 ms, probabilities are in range, and TtsWordEvent index
/// contiguity and interval ordering hold per utterance.
pub fn validate_event_stream(records: &[LogRecord], frame_period_ms: DurationMs) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut last_t: Option<u64> = None;
    let mut last_frame_t: Option<u64> = None;
    // per utterance: (next expected index, end of previous word)
    let mut tts: HashMap<u32, (u32, u64)> = HashMap::new();

    for (i, rec) in records.iter().enumerate() {
        if let Some(prev) = last_t {
            if rec.t() < prev {
                out.push(Violation {
                    index: i,
                    message: format!("non-monotone timestamp: {} after {}", rec.t(), prev),
                });
            }
        }
        last_t = Some(rec.t());

        match rec {
            LogRecord::Input(InputEvent::VapFrame(f)) => {
                if !f.is_valid() {
                    out.push(Violation {
                        index: i,
                        message: format!("probability out of range: p_now={} p_future={}", f.p_now, f.p_future),
                    });
                }
                if let Some(prev) = last_frame_t {
                    let gap = f.t.saturating_sub(prev);
                    if gap + 1 < frame_period_ms || gap > frame_period_ms + 1 {
                        out.push(Violation {
                            index: i,
                            message: format!("frame cadence {gap} ms, expected {frame_period_ms} +/- 1"),
                        });
                    }
                }
                last_frame_t = Some(f.t);
            }
            LogRecord::Input(InputEvent::TtsWord(w)) => {
                if w.t != w.t_start {
                    out.push(Violation {
                        index: i,
                        message: format!("TtsWord t {} != t_start {}", w.t, w.t_start),
                    });
                }
                if w.t_end < w.t_start {
                    out.push(Violation { index: i, message: "TtsWord interval reversed".into() });
                }
                let entry = tts.entry(w.utterance_id).or_insert((0, 0));
                if w.index != entry.0 {
                    out.push(Violation {
                        index: i,
                        message: format!(
                            "utterance {} word index {} not contiguous (expected {})",
                            w.utterance_id, w.index, entry.0
                        ),
                    });
                }
                if w.index > 0 && w.t_start < entry.1 {
                    out.push(Violation {
                        index: i,
                        message: format!("utterance {} word {} overlaps previous word", w.utterance_id, w.index),
                    });
                }
                *entry = (w.index + 1, w.t_end);
            }
            LogRecord::Input(InputEvent::TurnShiftEstimate(e)) => {
                if !(0.0..=1.0).contains(&e.p_ts) {
                    out.push(Violation { index: i, message: format!("p_ts out of range: {}", e.p_ts) });
                }
            }
            LogRecord::Meta(MetaRecord::RunMeta { .. }) if i == 0 => {}
            _ => {}
        }
    }
    out
}
