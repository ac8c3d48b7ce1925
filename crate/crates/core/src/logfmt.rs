//! Line-delimited event-log format.
//!
//! One record per line, a flat JSON object with required keys `t` and `kind`
//! plus kind-specific keys. Unknown keys are rejected.

use crate::model::{EngineEvent, InputEvent, TimestampMs};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Ground-truth label for one robot speech onset (simulator-produced).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnsetKind {
    Clean,
    Interruption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MetaRecord {
    /// First line of every simulator log.
    RunMeta { t: TimestampMs, scenario_id: String, policy: String, seed: u64 },
    OnsetLabel { t: TimestampMs, utterance_id: u32, label: OnsetKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Input(InputEvent),
    Decision(EngineEvent),
    Meta(MetaRecord),
}

impl LogRecord {
    pub fn t(&self) -> TimestampMs {
        match self {
            LogRecord::Input(e) => e.t(),
            LogRecord::Decision(e) => e.t(),
            LogRecord::Meta(MetaRecord::RunMeta { t, .. })
            | LogRecord::Meta(MetaRecord::OnsetLabel { t, .. }) => *t,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log records serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: not a JSON object: {detail}")]
    NotAnObject { line: usize, detail: String },
    #[error("line {line}: missing `kind`")]
    MissingKind { line: usize },
    #[error("line {line}: unknown kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: kind `{kind}`: unknown key `{key}`")]
    UnknownKey { line: usize, kind: String, key: String },
    #[error("line {line}: kind `{kind}`: missing key `{key}`")]
    MissingKey { line: usize, kind: String, key: String },
    #[error("line {line}: {detail}")]
    BadValue { line: usize, detail: String },
}

/// Exact key set per record kind.
fn keys_for(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "VapFrame" => &["t", "p_now", "p_future", "vad_user", "vad_robot"],
        "AsrPartial" | "AsrFinal" => &["t", "transcript"],
        "TurnShiftEstimate" => &["t", "transcript", "p_ts"],
        "TtsWord" => &["t", "utterance_id", "index", "word", "t_start", "t_end"],
        "PreparedReady" => &["t", "handle_id", "response_text"],
        "Tick" => &["t"],
        "TurnShiftAllowed" | "ContinueOverlap" | "BackchannelOpportunity" | "GazeAvert"
        | "GazeReturn" => &["t"],
        "TakeTurn" => &["t", "utterance_id"],
        "StopAtWordBoundary" => &["t", "utterance_id", "last_spoken_index"],
        "PrepareRequest" => &["t", "handle_id", "context"],
        "PrepareCancel" => &["t", "handle_id"],
        "ListeningLight" => &["t", "on"],
        "RunMeta" => &["t", "scenario_id", "policy", "seed"],
        "OnsetLabel" => &["t", "utterance_id", "label"],
        _ => return None,
    })
}

/// Parse one log line, rejecting unknown kinds and keys.
pub fn parse_log_line(line_no: usize, line: &str) -> Result<LogRecord, ParseError> {
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| ParseError::NotAnObject { line: line_no, detail: e.to_string() })?;
    let obj = value
        .as_object()
        .ok_or_else(|| ParseError::NotAnObject { line: line_no, detail: "not an object".into() })?;
    let kind = obj
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or(ParseError::MissingKind { line: line_no })?
        .to_string();
    let expected = keys_for(&kind)
        .ok_or_else(|| ParseError::UnknownKind { line: line_no, kind: kind.clone() })?;
    let expected: BTreeSet<&str> = expected.iter().copied().collect();
    for key in obj.keys() {
        if key != "kind" && !expected.contains(key.as_str()) {
            return Err(ParseError::UnknownKey { line: line_no, kind, key: key.clone() });
        }
    }
    for key in &expected {
        if !obj.contains_key(*key) {
            return Err(ParseError::MissingKey { line: line_no, kind, key: (*key).into() });
        }
    }
    serde_json::from_value(value)
        .map_err(|e| ParseError::BadValue { line: line_no, detail: e.to_string() })
}

/// Parse a whole log document (one record per line; blank lines skipped).
pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_log_line(i + 1, line)?);
    }
    Ok(out)
}

pub fn write_log(records: &[LogRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_json_line());
        s.push('\n');
    }
    s
}
