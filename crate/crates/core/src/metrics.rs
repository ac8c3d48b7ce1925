//! Response-time and interruption metrics over decision logs.
//!
//! A response-time sample is the time from the user's last voice-activity
//! offset to the next clean robot onset. Onsets labeled as interruptions are
//! excluded from the timing statistics and reported separately.

use crate::logfmt::{LogRecord, MetaRecord, OnsetKind};
use crate::model::{EngineEvent, InputEvent};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const BIN_MS: u64 = 100;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseTimeStats {
    pub n: usize,
    pub mean_ms: f64,
    pub median_ms: i64,
    /// Lower edge of the fullest 100 ms bin; ties resolve to the lower bin.
    pub mode_bin_ms: i64,
    /// Lower bin edge -> count.
    pub histogram: BTreeMap<i64, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterruptionReport {
    pub onsets: usize,
    pub interruptions: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyReport {
    pub response: ResponseTimeStats,
    pub interruptions: InterruptionReport,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("onset at t={t} (utterance {utterance_id}) has no ground-truth label")]
    UnlabeledOnset { t: u64, utterance_id: u32 },
    #[error("clean onset at t={t} with no preceding user voice activity")]
    NoPrecedingOffset { t: u64 },
    #[error("no samples")]
    Empty,
}

/// Extracts clean response-time samples and the interruption tally from one
/// log. Every robot onset must carry a ground-truth label record.
pub fn extract(log: &[LogRecord]) -> Result<(Vec<i64>, InterruptionReport), MetricsError> {
    let mut samples = Vec::new();
    let mut onsets = 0usize;
    let mut interruptions = 0usize;
    let mut vad_user = false;
    let mut last_offset: Option<u64> = None;

    for (i, rec) in log.iter().enumerate() {
        match rec {
            LogRecord::Input(InputEvent::VapFrame(f)) => {
                if vad_user && !f.vad_user {
                    last_offset = Some(f.t);
                }
                vad_user = f.vad_user;
            }
            LogRecord::Decision(EngineEvent::TakeTurn { t, utterance_id }) => {
                onsets += 1;
                // the simulator writes the label immediately after the onset
                let label = log[i + 1..]
                    .iter()
                    .find_map(|r| match r {
                        LogRecord::Meta(MetaRecord::OnsetLabel { utterance_id: u, label, .. })
                            if u == utterance_id =>
                        {
                            Some(*label)
                        }
                        _ => None,
                    })
                    .ok_or(MetricsError::UnlabeledOnset { t: *t, utterance_id: *utterance_id })?;
                match label {
                    OnsetKind::Interruption => interruptions += 1,
                    OnsetKind::Clean => {
                        let off = last_offset.ok_or(MetricsError::NoPrecedingOffset { t: *t })?;
                        samples.push(*t as i64 - off as i64);
                    }
                }
            }
            _ => {}
        }
    }
    let rate = if onsets == 0 { 0.0 } else { interruptions as f64 / onsets as f64 };
    Ok((samples, InterruptionReport { onsets, interruptions, rate }))
}

fn bin_of(sample: i64) -> i64 {
    sample.div_euclid(BIN_MS as i64) * BIN_MS as i64
}

pub fn response_stats(samples: &[i64]) -> Result<ResponseTimeStats, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mean = sorted.iter().sum::<i64>() as f64 / n as f64;
    // even n: average of the middle pair, truncated toward the lower value
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]).div_euclid(2)
    };
    let mut histogram: BTreeMap<i64, usize> = BTreeMap::new();
    for s in &sorted {
        *histogram.entry(bin_of(*s)).or_default() += 1;
    }
    let mode_bin = histogram
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) // ties -> lower bin
        .map(|(b, _)| *b)
        .unwrap();
    Ok(ResponseTimeStats { n, mean_ms: mean, median_ms: median, mode_bin_ms: mode_bin, histogram })
}

/// Pools samples across a corpus of logs into one report.
pub fn aggregate(logs: &[Vec<LogRecord>]) -> Result<PolicyReport, MetricsError> {
    let mut all = Vec::new();
    let mut onsets = 0;
    let mut interruptions = 0;
    for log in logs {
        let (s, ir) = extract(log)?;
        all.extend(s);
        onsets += ir.onsets;
        interruptions += ir.interruptions;
    }
    let rate = if onsets == 0 { 0.0 } else { interruptions as f64 / onsets as f64 };
    Ok(PolicyReport {
        response: response_stats(&all)?,
        interruptions: InterruptionReport { onsets, interruptions, rate },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub a: PolicyReport,
    pub b: PolicyReport,
    /// a.median / b.median; None when the denominator is zero.
    pub median_ratio: Option<f64>,
    /// a.rate / b.rate; None when the denominator is zero.
    pub interruption_ratio: Option<f64>,
}

pub fn compare(a: PolicyReport, b: PolicyReport) -> CompareReport {
    let median_ratio = if b.response.median_ms == 0 {
        None
    } else {
        Some(a.response.median_ms as f64 / b.response.median_ms as f64)
    };
    let interruption_ratio = if b.interruptions.rate == 0.0 {
        None
    } else {
        Some(a.interruptions.rate / b.interruptions.rate)
    };
    CompareReport { a, b, median_ratio, interruption_ratio }
}

/// Plain-text rendering with an ASCII histogram, for the CLI.
pub fn render_report(name: &str, report: &PolicyReport) -> String {
    let mut out = String::new();
    let r = &report.response;
    out.push_str(&format!("policy: {name}\n"));
    out.push_str(&format!(
        "clean onsets: {}  mean: {:.0} ms  median: {} ms  mode bin: {}-{} ms\n",
        r.n,
        r.mean_ms,
        r.median_ms,
        r.mode_bin_ms,
        r.mode_bin_ms + BIN_MS as i64
    ));
    let ir = &report.interruptions;
    out.push_str(&format!(
        "onsets: {}  interruptions: {}  rate: {:.3}\n",
        ir.onsets, ir.interruptions, ir.rate
    ));
    let max = r.histogram.values().copied().max().unwrap_or(1);
    for (bin, count) in &r.histogram {
        let bar = "#".repeat((count * 40).div_ceil(max));
        out.push_str(&format!("{bin:>6} ms | {bar} {count}\n"));
    }
    out
}

pub fn render_compare(c: &CompareReport) -> String {
    let mut out = String::new();
    out.push_str(&render_report("a", &c.a));
    out.push('\n');
    out.push_str(&render_report("b", &c.b));
    out.push('\n');
    match c.median_ratio {
        Some(r) => out.push_str(&format!("median ratio (a/b): {r:.3}\n")),
        None => out.push_str("median ratio (a/b): undefined (b median is 0)\n"),
    }
    match c.interruption_ratio {
        Some(r) => out.push_str(&format!("interruption ratio (a/b): {r:.3}\n")),
        None => out.push_str("interruption ratio (a/b): undefined (b rate is 0)\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VapFrame;

    fn frame(t: u64, vad: bool) -> LogRecord {
        LogRecord::Input(InputEvent::VapFrame(VapFrame {
            t,
            p_now: 0.5,
            p_future: 0.5,
            vad_user: vad,
            vad_robot: false,
        }))
    }

    fn onset(t: u64, id: u32, label: OnsetKind) -> [LogRecord; 2] {
        [
            LogRecord::Decision(EngineEvent::TakeTurn { t, utterance_id: id }),
            LogRecord::Meta(MetaRecord::OnsetLabel { t, utterance_id: id, label }),
        ]
    }

    #[test]
    fn extracts_samples_relative_to_vad_offset() {
        let mut log = vec![frame(0, true), frame(100, true), frame(200, false)];
        log.extend(onset(700, 0, OnsetKind::Clean));
        let (samples, ir) = extract(&log).unwrap();
        assert_eq!(samples, vec![500]);
        assert_eq!(ir.onsets, 1);
        assert_eq!(ir.interruptions, 0);
    }

    #[test]
    fn interruptions_counted_not_timed() {
        let mut log = vec![frame(0, true), frame(100, false)];
        log.extend(onset(300, 0, OnsetKind::Interruption));
        log.extend(onset(2600, 1, OnsetKind::Clean));
        let (samples, ir) = extract(&log).unwrap();
        assert_eq!(samples, vec![2500]);
        assert_eq!(ir.interruptions, 1);
        assert_eq!(ir.rate, 0.5);
    }

    #[test]
    fn unlabeled_onset_is_an_error() {
        let log = vec![
            frame(0, true),
            frame(100, false),
            LogRecord::Decision(EngineEvent::TakeTurn { t: 600, utterance_id: 0 }),
        ];
        assert_eq!(
            extract(&log),
            Err(MetricsError::UnlabeledOnset { t: 600, utterance_id: 0 })
        );
    }

    #[test]
    fn stats_mode_ties_take_lower_bin() {
        let s = response_stats(&[500, 550, 1500, 1510]).unwrap();
        assert_eq!(s.n, 4);
        assert_eq!(s.mode_bin_ms, 500);
        assert_eq!(s.median_ms, (550 + 1500) / 2);
        assert_eq!(s.histogram[&500], 2);
        assert_eq!(s.histogram[&1500], 2);
    }

    #[test]
    fn compare_flags_zero_denominators() {
        let mk = |median: i64, rate: f64| PolicyReport {
            response: ResponseTimeStats {
                n: 1,
                mean_ms: median as f64,
                median_ms: median,
                mode_bin_ms: bin_of(median),
                histogram: BTreeMap::from([(bin_of(median), 1)]),
            },
            interruptions: InterruptionReport {
                onsets: 10,
                interruptions: (rate * 10.0) as usize,
                rate,
            },
        };
        let c = compare(mk(600, 0.0), mk(2500, 0.2));
        assert!((c.median_ratio.unwrap() - 0.24).abs() < 1e-9);
        assert!((c.interruption_ratio.unwrap() - 0.0).abs() < 1e-9);
        let c = compare(mk(600, 0.1), mk(2500, 0.0));
        assert!(c.interruption_ratio.is_none());
    }
}
